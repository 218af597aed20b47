//! Zonotopes `⟨c, G⟩ = { c + Gλ : λ ∈ [−1, 1]^ν }`.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::{Matrix, Vector};

/// Default containment tolerance, in output units.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Vector,
    generators: Matrix,
}

/// Budget for the exact volume formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeOptions {
    /// Maximum number of determinant terms C(ν, n).
    pub max_terms: u64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        Self {
            max_terms: 1_000_000,
        }
    }
}

impl Zonotope {
    pub fn new(center: Vector, generators: Matrix) -> Result<Self> {
        check_dim("zonotope generator rows", center.len(), generators.nrows())?;
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("zonotope"));
        }
        Ok(Self { center, generators })
    }

    pub fn from_rows(center: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        check_dim("zonotope generator rows", center.len(), rows.len())?;
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                what: "zonotope generator row length",
                expected: cols,
                got: bad.len(),
            });
        }
        let g = Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        Self::new(Vector::from_column_slice(center), g)
    }

    /// The zonotope `{c}` with no generators.
    pub fn singleton(center: Vector) -> Self {
        let n = center.len();
        Self {
            center,
            generators: Matrix::zeros(n, 0),
        }
    }

    /// The axis-aligned box `c ± r`.
    pub fn from_box(center: Vector, radii: &Vector) -> Result<Self> {
        Self::new(center, Matrix::from_diagonal(radii))
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    /// `c + Gλ`.
    pub fn point(&self, lambda: &Vector) -> Result<Vector> {
        check_dim("zonotope factors", self.num_generators(), lambda.len())?;
        Ok(&self.center + &self.generators * lambda)
    }

    /// A point with factors drawn uniformly from `[−1, 1]^ν`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let lambda = Vector::from_fn(self.num_generators(), |_, _| rng.random_range(-1.0..=1.0));
        &self.center + &self.generators * lambda
    }

    /// `1ᵀ|G|1`.
    pub fn interval_norm(&self) -> f64 {
        self.generators.iter().map(|v| v.abs()).sum()
    }

    /// Half-widths of the interval hull, `Σ_i |G_ji|` per row.
    pub fn radii(&self) -> Vector {
        Vector::from_fn(self.dim(), |j, _| {
            self.generators.row(j).iter().map(|v| v.abs()).sum()
        })
    }

    pub fn linear_map(&self, m: &Matrix) -> Result<Self> {
        check_dim("linear map columns", self.dim(), m.ncols())?;
        Ok(Self {
            center: m * &self.center,
            generators: m * &self.generators,
        })
    }

    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        check_dim("minkowski sum", self.dim(), other.dim())?;
        let (n, a, b) = (self.dim(), self.num_generators(), other.num_generators());
        let mut g = Matrix::zeros(n, a + b);
        g.columns_mut(0, a).copy_from(&self.generators);
        g.columns_mut(a, b).copy_from(&other.generators);
        Ok(Self {
            center: &self.center + &other.center,
            generators: g,
        })
    }

    /// Axis-aligned interval hull `⟨c, diag(r)⟩`.
    pub fn box_hull(&self) -> Self {
        Self {
            center: self.center.clone(),
            generators: Matrix::from_diagonal(&self.radii()),
        }
    }

    /// Whether `y = c + Gβ` for some `|β|∞ ≤ 1`, up to `tol`.
    ///
    /// Solves `min t` s.t. `|y − c − Gβ|∞ ≤ t`, `−1 ≤ β ≤ 1`; the point is
    /// contained iff `t* ≤ tol`.
    pub fn contains_point(&self, y: &Vector, tol: f64) -> Result<bool> {
        Ok(self.containment_residual(y)? <= tol)
    }

    /// The optimal `t*` of the containment program; zero for interior points.
    pub fn containment_residual(&self, y: &Vector) -> Result<f64> {
        check_dim("containment point", self.dim(), y.len())?;
        let r = y - &self.center;
        let nu = self.num_generators();
        if nu == 0 {
            return Ok(r.amax());
        }
        if r.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let mut p = LinearProgram::new();
        for _ in 0..nu {
            p.add_var(0.0, -1.0, 1.0);
        }
        let t = p.add_var(1.0, 0.0, f64::INFINITY);
        for i in 0..self.dim() {
            let mut row: Vec<(usize, f64)> = (0..nu)
                .filter(|&j| self.generators[(i, j)] != 0.0)
                .map(|j| (j, self.generators[(i, j)]))
                .collect();
            row.push((t, -1.0));
            p.add_le(row.clone(), r[i]);
            let last = row.len() - 1;
            row[last].1 = 1.0;
            p.add_ge(row, r[i]);
        }
        let sol = solve_lp(&p, &LpOptions::default())?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.x[t].max(0.0)),
            // The program is always feasible and bounded below by zero.
            other => Err(Error::InvalidArgument(format!(
                "containment program reported {other:?}"
            ))),
        }
    }

    /// `2ⁿ Σ |det G_S|` over all n-column subsets S. Zero when ν < n.
    pub fn volume(&self) -> Result<f64> {
        self.volume_with(&VolumeOptions::default())
    }

    pub fn volume_with(&self, opts: &VolumeOptions) -> Result<f64> {
        let n = self.dim();
        let nu = self.num_generators();
        if nu < n {
            return Ok(0.0);
        }
        let terms = binomial(nu as u64, n as u64);
        if terms > opts.max_terms as u128 {
            return Err(Error::VolumeBudget {
                terms,
                cap: opts.max_terms,
            });
        }
        let mut sum = 0.0;
        let mut sub = Matrix::zeros(n, n);
        for_each_combination(nu, n, |cols| {
            for (k, &c) in cols.iter().enumerate() {
                sub.set_column(k, &self.generators.column(c));
            }
            sum += sub.clone().determinant().abs();
        });
        Ok(2f64.powi(n as i32) * sum)
    }

    /// Volume of the projection onto the coordinates `dims`.
    pub fn projected_volume(&self, dims: &[usize]) -> Result<f64> {
        self.projected_volume_with(dims, &VolumeOptions::default())
    }

    pub fn projected_volume_with(&self, dims: &[usize], opts: &VolumeOptions) -> Result<f64> {
        self.project(dims)?.volume_with(opts)
    }

    /// The zonotope restricted to the coordinates `dims`, in that order.
    pub fn project(&self, dims: &[usize]) -> Result<Self> {
        for (k, &d) in dims.iter().enumerate() {
            if d >= self.dim() {
                return Err(Error::InvalidArgument(format!(
                    "projection index {d} out of range for dimension {}",
                    self.dim()
                )));
            }
            if dims[..k].contains(&d) {
                return Err(Error::InvalidArgument(format!(
                    "projection index {d} repeated"
                )));
            }
        }
        let mut m = Matrix::zeros(dims.len(), self.dim());
        for (k, &d) in dims.iter().enumerate() {
            m[(k, d)] = 1.0;
        }
        self.linear_map(&m)
    }

    /// Polygon vertices in counter-clockwise order.
    ///
    /// Zero generators are skipped and parallel generators merged, so a
    /// singleton yields one vertex and a segment two.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        check_dim("vertices_2d dimension", 2, self.dim())?;
        // Orient every generator into the upper half-plane.
        let mut gens: Vec<[f64; 2]> = self
            .generators
            .column_iter()
            .map(|g| [g[0], g[1]])
            .filter(|g| g[0] != 0.0 || g[1] != 0.0)
            .map(|g| {
                if g[1] < 0.0 || (g[1] == 0.0 && g[0] < 0.0) {
                    [-g[0], -g[1]]
                } else {
                    g
                }
            })
            .collect();
        gens.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));

        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(gens.len());
        for g in gens {
            if let Some(last) = merged.last_mut() {
                let cross = last[0] * g[1] - last[1] * g[0];
                let scale = last[0].hypot(last[1]) * g[0].hypot(g[1]);
                if cross.abs() <= 1e-12 * scale {
                    last[0] += g[0];
                    last[1] += g[1];
                    continue;
                }
            }
            merged.push(g);
        }

        let c = [self.center[0], self.center[1]];
        let mut v = [
            c[0] - merged.iter().map(|g| g[0]).sum::<f64>(),
            c[1] - merged.iter().map(|g| g[1]).sum::<f64>(),
        ];
        let mut out = Vec::with_capacity(2 * merged.len().max(1));
        out.push(v);
        if merged.is_empty() {
            return Ok(out);
        }
        for sign in [2.0, -2.0] {
            for g in &merged {
                v = [v[0] + sign * g[0], v[1] + sign * g[1]];
                out.push(v);
            }
        }
        // The walk closes on the starting vertex.
        out.pop();
        Ok(out)
    }
}

/// Shoelace area of a simple polygon; positive for counter-clockwise order.
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    twice / 2.0
}

pub(crate) fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Calls `f` with every increasing k-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Repr {
    center: Vec<f64>,
    generators: Vec<Vec<f64>>,
}

impl Serialize for Zonotope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Repr {
            center: self.center.iter().copied().collect(),
            generators: self
                .generators
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Zonotope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = Repr::deserialize(d)?;
        Zonotope::from_rows(&r.center, &r.generators).map_err(serde::de::Error::custom)
    }
}
