//! Feed-forward tanh networks: evaluation, training and the uncertainty
//! Jacobian `D̄(x)`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Dataset, Task};
use crate::error::{check_dim, Error, Result};
use crate::{Matrix, Vector};

/// One affine layer, `z = W a + b`. `w` has one row per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vector,
}

/// Hidden layers apply `tanh`; the last layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// An additive (or, for `Weight`, multiplicative) perturbation of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UncertaintyIndex {
    /// Added to bias `neuron` of hidden layer `layer` (zero-based).
    HiddenBias { layer: usize, neuron: usize },
    /// Added to output `neuron`.
    Output { neuron: usize },
    /// Scales weight `(row, col)` of layer `layer` by `1 + u`.
    Weight { layer: usize, row: usize, col: usize },
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            check_dim("layer bias length", layer.w.nrows(), layer.b.len())?;
            if l > 0 {
                check_dim("layer input width", layers[l - 1].w.nrows(), layer.w.ncols())?;
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_x(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    /// Widths of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.w.nrows())
            .collect()
    }

    /// Number of hidden-layer biases, `n_p`.
    pub fn n_p(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        check_dim("network input", self.n_x(), x.len())?;
        Ok(self.activations(x).0.pop().expect("at least one layer"))
    }

    /// Returns the activation entering each layer followed by the output, and
    /// the hidden-layer derivatives `1 − tanh²(z_ℓ)`.
    fn activations(&self, x: &Vector) -> (Vec<Vector>, Vec<Vector>) {
        let last = self.layers.len() - 1;
        let mut acts = vec![x.clone()];
        let mut slopes = Vec::with_capacity(last);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.w * &acts[l] + &layer.b;
            if l == last {
                acts.push(z);
            } else {
                let a = z.map(f64::tanh);
                slopes.push(a.map(|t| 1.0 - t * t));
                acts.push(a);
            }
        }
        (acts, slopes)
    }

    /// Every hidden-bias index (layer-major) followed by every output index.
    pub fn candidate_pool(&self) -> Vec<UncertaintyIndex> {
        let mut pool = Vec::with_capacity(self.n_p() + self.n_y());
        for (layer, &width) in self.hidden_sizes().iter().enumerate() {
            pool.extend((0..width).map(|neuron| UncertaintyIndex::HiddenBias { layer, neuron }));
        }
        pool.extend((0..self.n_y()).map(|neuron| UncertaintyIndex::Output { neuron }));
        pool
    }

    pub fn check_index(&self, idx: &UncertaintyIndex) -> Result<()> {
        let hidden = self.hidden_sizes();
        let ok = match *idx {
            UncertaintyIndex::HiddenBias { layer, neuron } => {
                layer < hidden.len() && neuron < hidden[layer]
            }
            UncertaintyIndex::Output { neuron } => neuron < self.n_y(),
            UncertaintyIndex::Weight { layer, row, col } => {
                layer < self.layers.len()
                    && row < self.layers[layer].w.nrows()
                    && col < self.layers[layer].w.ncols()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "uncertainty index {idx:?} is outside the network"
            )))
        }
    }

    /// `D̄(x) = ∂f(x, u)/∂u` at `u = 0`, one column per index.
    ///
    /// Reverse mode: with `M_L = I` and `M_ℓ = M_{ℓ+1} W_{ℓ+1} diag(1 − tanh²(z_ℓ))`,
    /// column `j` of `M_ℓ` is the derivative with respect to bias `b_{ℓ,j}`.
    pub fn uncertainty_jacobian(&self, x: &Vector, idx: &[UncertaintyIndex]) -> Result<Matrix> {
        check_dim("network input", self.n_x(), x.len())?;
        for i in idx {
            self.check_index(i)?;
        }
        let (acts, slopes) = self.activations(x);
        let last = self.layers.len() - 1;
        let needs_hidden = idx
            .iter()
            .any(|i| !matches!(i, UncertaintyIndex::Output { .. }));
        // sens[ℓ] = ∂f/∂z_ℓ.
        let mut sens: Vec<Matrix> = vec![Matrix::zeros(0, 0); self.layers.len()];
        sens[last] = Matrix::identity(self.n_y(), self.n_y());
        if needs_hidden {
            for l in (0..last).rev() {
                let mut m = &sens[l + 1] * &self.layers[l + 1].w;
                for (j, mut col) in m.column_iter_mut().enumerate() {
                    col *= slopes[l][j];
                }
                sens[l] = m;
            }
        }
        let mut jac = Matrix::zeros(self.n_y(), idx.len());
        for (k, i) in idx.iter().enumerate() {
            match *i {
                UncertaintyIndex::HiddenBias { layer, neuron } => {
                    jac.set_column(k, &sens[layer].column(neuron));
                }
                UncertaintyIndex::Output { neuron } => jac[(neuron, k)] = 1.0,
                UncertaintyIndex::Weight { layer, row, col } => {
                    let scale = self.layers[layer].w[(row, col)] * acts[layer][col];
                    jac.set_column(k, &(sens[layer].column(row) * scale));
                }
            }
        }
        Ok(jac)
    }

    /// The network with perturbation `u` applied; used to check derivatives.
    pub fn perturbed(&self, idx: &[UncertaintyIndex], u: &[f64]) -> Result<Self> {
        check_dim("perturbation length", idx.len(), u.len())?;
        let mut layers = self.layers.clone();
        let last = layers.len() - 1;
        for (i, &v) in idx.iter().zip(u) {
            self.check_index(i)?;
            match *i {
                UncertaintyIndex::HiddenBias { layer, neuron } => layers[layer].b[neuron] += v,
                UncertaintyIndex::Output { neuron } => layers[last].b[neuron] += v,
                UncertaintyIndex::Weight { layer, row, col } => {
                    layers[layer].w[(row, col)] *= 1.0 + v
                }
            }
        }
        Self::new(layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Max-subtracted softmax.
pub fn softmax(v: &Vector) -> Vector {
    let max = v.max();
    let e = v.map(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layers: Vec<LayerRepr>,
    activation: String,
}

impl Serialize for Mlp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpRepr {
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    w: l.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    b: l.b.iter().copied().collect(),
                })
                .collect(),
            activation: "tanh".into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = MlpRepr::deserialize(d)?;
        if r.activation != "tanh" {
            return Err(D::Error::custom(format!(
                "unsupported activation {:?}",
                r.activation
            )));
        }
        let mut layers = Vec::with_capacity(r.layers.len());
        for l in r.layers {
            let cols = l.w.first().map_or(0, Vec::len);
            if l.w.iter().any(|row| row.len() != cols) {
                return Err(D::Error::custom("ragged weight matrix"));
            }
            layers.push(Layer {
                w: Matrix::from_fn(l.w.len(), cols, |i, j| l.w[i][j]),
                b: Vector::from_vec(l.b),
            });
        }
        Mlp::new(layers).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Per-column mean and standard deviation (1 for constant columns).
fn standardizer(m: &Matrix) -> (Vector, Vector) {
    let n = m.nrows().max(1) as f64;
    let mean = Vector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n);
    let std = Vector::from_fn(m.ncols(), |j, _| {
        let var = m.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, std)
}

/// Trains a network with the given hidden widths by full-batch gradient
/// descent with momentum: mean squared error for regression, softmax
/// cross-entropy for classification.
///
/// Inputs (and regression targets) are standardized during training and the
/// affine maps are folded back into the first and last layers, so the
/// returned network works on raw units.
pub fn train(data: &Dataset, hidden: &[usize], cfg: &TrainConfig) -> Result<Mlp> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if hidden.contains(&0) {
        return Err(Error::InvalidArgument("hidden layers need at least one neuron".into()));
    }
    let (n_x, n_y, n) = (data.n_x(), data.n_y(), data.len());
    let (x_mean, x_std) = standardizer(&data.inputs);
    let (y_mean, y_std) = match data.task {
        Task::Regression => standardizer(&data.outputs),
        Task::Classification => (Vector::zeros(n_y), Vector::from_element(n_y, 1.0)),
    };
    // Column-per-sample layout.
    let xs = Matrix::from_fn(n_x, n, |i, m| (data.inputs[(m, i)] - x_mean[i]) / x_std[i]);
    let ys = Matrix::from_fn(n_y, n, |j, m| (data.outputs[(m, j)] - y_mean[j]) / y_std[j]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let widths: Vec<usize> = std::iter::once(n_x)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(n_y))
        .collect();
    let mut layers: Vec<Layer> = widths
        .windows(2)
        .map(|w| {
            let bound = 1.0 / (w[0] as f64).sqrt();
            Layer {
                w: Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                b: Vector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)),
            }
        })
        .collect();
    let mut vel: Vec<(Matrix, Vector)> = layers
        .iter()
        .map(|l| (Matrix::zeros(l.w.nrows(), l.w.ncols()), Vector::zeros(l.b.len())))
        .collect();
    let last = layers.len() - 1;

    for epoch in 0..cfg.epochs {
        let mut acts = vec![xs.clone()];
        for (l, layer) in layers.iter().enumerate() {
            let mut z = &layer.w * &acts[l];
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        let out = &acts[last + 1];
        let (loss, mut delta) = match data.task {
            Task::Regression => {
                let diff = out - &ys;
                let scale = 1.0 / (n * n_y) as f64;
                (diff.norm_squared() * scale, diff * (2.0 * scale))
            }
            Task::Classification => {
                let mut grad = Matrix::zeros(n_y, n);
                let mut loss = 0.0;
                for m in 0..n {
                    let p = softmax(&out.column(m).into_owned());
                    for j in 0..n_y {
                        if ys[(j, m)] > 0.0 {
                            loss -= ys[(j, m)] * p[j].max(1e-300).ln();
                        }
                        grad[(j, m)] = (p[j] - ys[(j, m)]) / n as f64;
                    }
                }
                (loss / n as f64, grad)
            }
        };
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if epoch % 500 == 0 {
            log::debug!("epoch {epoch}: loss {loss:.6e}");
        }
        for l in (0..=last).rev() {
            let grad_w = &delta * acts[l].transpose();
            let grad_b = Vector::from_fn(delta.nrows(), |i, _| delta.row(i).sum());
            if l > 0 {
                let mut back = layers[l].w.transpose() * &delta;
                back.zip_apply(&acts[l], |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
            let (vw, vb) = &mut vel[l];
            *vw = &*vw * cfg.momentum - grad_w * cfg.lr;
            *vb = &*vb * cfg.momentum - grad_b * cfg.lr;
            layers[l].w += &*vw;
            layers[l].b += &*vb;
        }
    }

    // Fold the standardization back into the parameters.
    let first = &mut layers[0];
    for j in 0..n_x {
        let mut col = first.w.column_mut(j);
        col /= x_std[j];
    }
    first.b -= &first.w * &x_mean;
    let out = &mut layers[last];
    for j in 0..n_y {
        let mut row = out.w.row_mut(j);
        row *= y_std[j];
        out.b[j] = out.b[j] * y_std[j] + y_mean[j];
    }
    Mlp::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_net;
    use proptest::prelude::*;

    fn layer(w: &[&[f64]], b: &[f64]) -> Layer {
        Layer {
            w: Matrix::from_fn(w.len(), w[0].len(), |i, j| w[i][j]),
            b: Vector::from_column_slice(b),
        }
    }

    fn small_net() -> Mlp {
        // 1-2-1
        Mlp::new(vec![
            layer(&[&[0.5], &[-1.0]], &[0.1, 0.2]),
            layer(&[&[2.0, 3.0]], &[-0.5]),
        ])
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let zero = Mlp::new(vec![layer(&[&[0.0, 0.0]], &[4.0])]).unwrap();
        assert_eq!(zero.forward(&Vector::from_vec(vec![3.0, -1.0])).unwrap()[0], 4.0);

        let id = Mlp::new(vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])]).unwrap();
        let x = Vector::from_vec(vec![0.3, -7.0]);
        assert_eq!(id.forward(&x).unwrap(), x);

        let x = 0.7;
        let expected = 2.0 * (0.5 * x + 0.1f64).tanh() + 3.0 * (-x + 0.2f64).tanh() - 0.5;
        let got = small_net().forward(&Vector::from_element(1, x)).unwrap()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!(small_net().forward(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn sizes_and_pool() {
        let net = random_net(1, 3, &[64, 64], 2);
        assert_eq!((net.n_x(), net.n_y(), net.n_p()), (3, 2, 128));
        let pool = net.candidate_pool();
        assert_eq!(pool.len(), 130);
        assert_eq!(pool[64], UncertaintyIndex::HiddenBias { layer: 1, neuron: 0 });
        assert_eq!(pool[129], UncertaintyIndex::Output { neuron: 1 });
    }

    #[test]
    fn output_columns_are_unit_vectors() {
        let net = random_net(2, 2, &[5], 3);
        let idx = [UncertaintyIndex::Output { neuron: 2 }];
        let j = net.uncertainty_jacobian(&Vector::from_vec(vec![0.1, 0.4]), &idx).unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 0.0, 1.0]);

        let linear = Mlp::new(vec![layer(&[&[1.0, 2.0], &[3.0, 4.0]], &[0.0, 0.0])]).unwrap();
        let j = linear
            .uncertainty_jacobian(&Vector::zeros(2), &[UncertaintyIndex::Output { neuron: 1 }])
            .unwrap();
        assert_eq!(j.column(0).as_slice(), &[0.0, 1.0]);
        assert!(linear
            .uncertainty_jacobian(&Vector::zeros(2), &[UncertaintyIndex::HiddenBias { layer: 0, neuron: 0 }])
            .is_err());
    }

    fn finite_difference(net: &Mlp, x: &Vector, idx: &[UncertaintyIndex]) -> Matrix {
        let h = 1e-5;
        let mut out = Matrix::zeros(net.n_y(), idx.len());
        for k in 0..idx.len() {
            let mut u = vec![0.0; idx.len()];
            u[k] = h;
            let plus = net.perturbed(idx, &u).unwrap().forward(x).unwrap();
            u[k] = -h;
            let minus = net.perturbed(idx, &u).unwrap().forward(x).unwrap();
            out.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for seed in 0..10 {
            let net = random_net(seed, 3, &[6, 5], 2);
            let x = Vector::from_vec(vec![0.3, -0.8, 1.1]);
            let mut idx = net.candidate_pool();
            idx.push(UncertaintyIndex::Weight { layer: 1, row: 2, col: 4 });
            idx.push(UncertaintyIndex::Weight { layer: 2, row: 1, col: 0 });
            let exact = net.uncertainty_jacobian(&x, &idx).unwrap();
            let fd = finite_difference(&net, &x, &idx);
            let err = (&exact - &fd).amax() / fd.amax().max(1e-12);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&Vector::from_vec(vec![0.0, 0.0]));
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = softmax(&Vector::from_vec(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]));
        for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let big = softmax(&Vector::from_vec(vec![1000.0, 1001.0]));
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let net = small_net();
        let text = net.to_json().unwrap();
        assert!(text.starts_with(r#"{"layers":[{"w":[[0.5],[-1.0]],"b":[0.1,0.2]}"#), "{text}");
        assert!(text.ends_with(r#""activation":"tanh"}"#));
        assert_eq!(Mlp::from_json(&text).unwrap(), net);
        assert!(Mlp::from_json(&text.replace("tanh", "relu")).is_err());
    }

    fn line_data() -> Dataset {
        let xs = Matrix::from_fn(40, 1, |m, _| -1.0 + 2.0 * m as f64 / 39.0);
        let ys = xs.map(|x| 2.0 * x);
        Dataset::new(xs, ys, Task::Regression).unwrap()
    }

    #[test]
    fn trainer_fits_a_line() {
        let d = line_data();
        let net = train(&d, &[4], &TrainConfig::default()).unwrap();
        let mse: f64 = (0..25)
            .map(|i| {
                let x = -0.95 + 1.9 * i as f64 / 24.0;
                (net.forward(&Vector::from_element(1, x)).unwrap()[0] - 2.0 * x).powi(2)
            })
            .sum::<f64>()
            / 25.0;
        assert!(mse < 1e-2, "test mse {mse}");
    }

    #[test]
    fn trainer_is_deterministic_and_zero_epochs_is_init() {
        let d = line_data();
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        assert_eq!(train(&d, &[3], &cfg).unwrap(), train(&d, &[3], &cfg).unwrap());
        let a = train(&d, &[3], &TrainConfig { epochs: 0, ..cfg }).unwrap();
        let b = train(&d, &[3], &TrainConfig { epochs: 0, lr: 7.0, momentum: 0.0, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, train(&d, &[3], &TrainConfig { epochs: 1, ..cfg }).unwrap());
    }

    #[test]
    fn trainer_reports_divergence() {
        let d = line_data();
        let cfg = TrainConfig { epochs: 200, lr: 1e6, ..TrainConfig::default() };
        assert!(matches!(train(&d, &[3], &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn classifier_learns_separable_classes() {
        let xs = Matrix::from_fn(40, 1, |m, _| if m < 20 { -1.0 - m as f64 / 20.0 } else { 1.0 + m as f64 / 40.0 });
        let ys = Matrix::from_fn(40, 2, |m, j| if (m < 20) == (j == 0) { 1.0 } else { 0.0 });
        let d = Dataset::new(xs, ys, Task::Classification).unwrap();
        let net = train(&d, &[3], &TrainConfig { epochs: 300, ..TrainConfig::default() }).unwrap();
        for m in 0..40 {
            let p = softmax(&net.forward(&d.x(m)).unwrap());
            assert!(p[if m < 20 { 0 } else { 1 }] > 0.9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn softmax_sums_to_one_and_ignores_shifts(v in prop::collection::vec(-30.0..30.0f64, 1..8), shift in -50.0..50.0f64) {
            let v = Vector::from_vec(v);
            let p = softmax(&v);
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            let q = softmax(&v.add_scalar(shift));
            prop_assert!((p - q).amax() < 1e-12);
        }

        #[test]
        fn jacobian_agrees_with_differences_on_random_nets(seed in any::<u64>(), x in prop::collection::vec(-2.0..2.0f64, 2)) {
            let net = random_net(seed, 2, &[4, 3], 2);
            let x = Vector::from_vec(x);
            let idx = net.candidate_pool();
            let exact = net.uncertainty_jacobian(&x, &idx).unwrap();
            let fd = finite_difference(&net, &x, &idx);
            prop_assert!((&exact - &fd).amax() <= 1e-4 * fd.amax().max(1e-3));
        }
    }
}
