//! Uncertainty placement: which perturbations are identified, and the
//! unscaled generator template `G_u`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Mlp, UncertaintyIndex};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Outputs plus a random sample of hidden biases.
    ORand,
    /// As `ORand`, with template `[I | Q]` for a Gaussian `Q`.
    ORandStar,
    /// Outputs plus hidden biases chosen by column-pivoted QR of the stacked Jacobian.
    Qr,
    /// A random sample of the whole candidate pool.
    Rand,
    /// Caller-supplied indices and template.
    Custom,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orand" => Ok(Self::ORand),
            "orand-star" | "orand_star" => Ok(Self::ORandStar),
            "qr" => Ok(Self::Qr),
            "rand" => Ok(Self::Rand),
            other => Err(Error::InvalidArgument(format!(
                "unknown placement strategy {other:?} (expected orand, orand-star, qr or rand)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub indices: Vec<UncertaintyIndex>,
    /// `n_u × ν`.
    #[serde(with = "row_major")]
    pub template: Matrix,
    pub strategy: Strategy,
    pub p_p: f64,
    pub seed: Option<u64>,
}

impl Placement {
    pub fn new(net: &Mlp, indices: Vec<UncertaintyIndex>, template: Matrix) -> Result<Self> {
        if template.nrows() != indices.len() {
            return Err(Error::DimensionMismatch {
                what: "template rows",
                expected: indices.len(),
                got: template.nrows(),
            });
        }
        for (k, i) in indices.iter().enumerate() {
            net.check_index(i)?;
            if indices[..k].contains(i) {
                return Err(Error::InvalidArgument(format!("uncertainty {i:?} listed twice")));
            }
        }
        if template.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("placement template"));
        }
        Ok(Self {
            indices,
            template,
            strategy: Strategy::Custom,
            p_p: 0.0,
            seed: None,
        })
    }

    /// One additive uncertainty per output with identity template.
    pub fn outputs_only(net: &Mlp) -> Self {
        let indices: Vec<_> = (0..net.n_y())
            .map(|neuron| UncertaintyIndex::Output { neuron })
            .collect();
        let n = indices.len();
        Self {
            indices,
            template: Matrix::identity(n, n),
            strategy: Strategy::Custom,
            p_p: 0.0,
            seed: None,
        }
    }

    pub fn n_u(&self) -> usize {
        self.indices.len()
    }

    /// Number of generators `ν`.
    pub fn num_generators(&self) -> usize {
        self.template.ncols()
    }

    pub fn has_identity_template(&self) -> bool {
        self.template.is_square() && self.template == Matrix::identity(self.n_u(), self.n_u())
    }

    /// Same indices and strategy with a different template.
    pub fn with_template(&self, template: Matrix) -> Result<Self> {
        if template.nrows() != self.n_u() {
            return Err(Error::DimensionMismatch {
                what: "template rows",
                expected: self.n_u(),
                got: template.nrows(),
            });
        }
        Ok(Self {
            template,
            ..self.clone()
        })
    }

    /// `D̄(x) G_u`.
    pub fn generator_basis(&self, net: &Mlp, x: &Vector) -> Result<Matrix> {
        Ok(net.uncertainty_jacobian(x, &self.indices)? * &self.template)
    }
}

/// `round(p_p · n_p)` with ties away from zero.
pub fn parametric_count(net: &Mlp, p_p: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_p) {
        return Err(Error::InvalidArgument(format!("p_p = {p_p} must lie in [0, 1]")));
    }
    Ok((p_p * net.n_p() as f64).round() as usize)
}

fn hidden_pool(net: &Mlp) -> Vec<UncertaintyIndex> {
    let mut pool = net.candidate_pool();
    pool.truncate(net.n_p());
    pool
}

fn outputs(net: &Mlp) -> impl Iterator<Item = UncertaintyIndex> {
    (0..net.n_y()).map(|neuron| UncertaintyIndex::Output { neuron })
}

fn orand_indices(net: &Mlp, p_p: f64, rng: &mut ChaCha8Rng) -> Result<Vec<UncertaintyIndex>> {
    let k = parametric_count(net, p_p)?;
    let pool = hidden_pool(net);
    let mut picked = sample(rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).chain(outputs(net)).collect())
}

/// Every output plus `round(p_p · n_p)` hidden biases sampled without
/// replacement; identity template.
pub fn place_orand(net: &Mlp, p_p: f64, seed: u64) -> Result<Placement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = orand_indices(net, p_p, &mut rng)?;
    let n = indices.len();
    Ok(Placement {
        indices,
        template: Matrix::identity(n, n),
        strategy: Strategy::ORand,
        p_p,
        seed: Some(seed),
    })
}

/// The `ORand` indices with template `[I | Q]`, where `Q` is standard normal
/// and drawn from the same generator after the index sample.
pub fn place_orand_star(net: &Mlp, p_p: f64, seed: u64) -> Result<Placement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = orand_indices(net, p_p, &mut rng)?;
    let n = indices.len();
    let mut template = Matrix::zeros(n, 2 * n);
    template.columns_mut(0, n).fill_with_identity();
    for j in n..2 * n {
        for i in 0..n {
            template[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(Placement {
        indices,
        template,
        strategy: Strategy::ORandStar,
        p_p,
        seed: Some(seed),
    })
}

/// Every output plus the leading hidden-bias pivots of a column-pivoted QR of
/// the Jacobians stacked over `calib_inputs`; identity template.
pub fn place_qr(net: &Mlp, calib_inputs: &[Vector], p_p: f64) -> Result<Placement> {
    if calib_inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "QR placement needs at least one calibration input".into(),
        ));
    }
    let k = parametric_count(net, p_p)?;
    let pool = net.candidate_pool();
    let n_y = net.n_y();
    let mut v = Matrix::zeros(n_y * calib_inputs.len(), pool.len());
    for (m, x) in calib_inputs.iter().enumerate() {
        let jac = net.uncertainty_jacobian(x, &pool)?;
        v.rows_mut(m * n_y, n_y).copy_from(&jac);
    }
    let mut indices: Vec<UncertaintyIndex> = qr_column_pivots(&v)
        .into_iter()
        .map(|c| pool[c])
        .filter(|i| matches!(i, UncertaintyIndex::HiddenBias { .. }))
        .take(k)
        .collect();
    indices.extend(outputs(net));
    let n = indices.len();
    Ok(Placement {
        indices,
        template: Matrix::identity(n, n),
        strategy: Strategy::Qr,
        p_p,
        seed: None,
    })
}

/// `round(p_p · n_p) + n_y` indices sampled from the whole pool; outputs are
/// not guaranteed. Identity template.
pub fn place_rand(net: &Mlp, p_p: f64, seed: u64) -> Result<Placement> {
    let k = parametric_count(net, p_p)? + net.n_y();
    let pool = net.candidate_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    Ok(Placement {
        indices: picked.into_iter().map(|i| pool[i]).collect(),
        template: Matrix::identity(k, k),
        strategy: Strategy::Rand,
        p_p,
        seed: Some(seed),
    })
}

pub fn place(strategy: Strategy, net: &Mlp, p_p: f64, seed: u64, calib_inputs: &[Vector]) -> Result<Placement> {
    match strategy {
        Strategy::ORand => place_orand(net, p_p, seed),
        Strategy::ORandStar => place_orand_star(net, p_p, seed),
        Strategy::Qr => place_qr(net, calib_inputs, p_p),
        Strategy::Rand => place_rand(net, p_p, seed),
        Strategy::Custom => Err(Error::InvalidArgument(
            "custom placements are built with Placement::new".into(),
        )),
    }
}

/// Column order of Businger–Golub Householder QR with column pivoting.
///
/// Each step moves the column with the largest remaining norm (recomputed,
/// not downdated) to the front; ties go to the lowest original index. Once
/// the rows are exhausted the remaining columns follow in index order.
pub fn qr_column_pivots(v: &Matrix) -> Vec<usize> {
    let (rows, cols) = v.shape();
    let mut a = v.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let steps = rows.min(cols);
    for k in 0..steps {
        let norm = |a: &Matrix, j: usize| a.view((k, j), (rows - k, 1)).norm_squared();
        let mut best = k;
        let mut best_norm = norm(&a, k);
        for j in k + 1..cols {
            let n = norm(&a, j);
            if n > best_norm || (n == best_norm && perm[j] < perm[best]) {
                best = j;
                best_norm = n;
            }
        }
        a.swap_columns(k, best);
        perm.swap(k, best);

        let x = a.view((k, k), (rows - k, 1)).into_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let mut h = x;
        h[0] += alpha.copysign(h[0]);
        let hn = h.norm_squared();
        let mut tail = a.view_mut((k, k), (rows - k, cols - k));
        let proj = h.transpose() * &tail;
        tail -= &h * (proj * (2.0 / hn));
    }
    if steps < cols {
        perm[steps..].sort_unstable();
    }
    perm
}

mod row_major {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        (m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let (cols, rows) = <(usize, Vec<Vec<f64>>)>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged template matrix"));
        }
        Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}
