//! Evaluation metrics: coverage, conservatism, class extraction, normalized
//! ratios and bootstrap intervals, plus CSV/SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Predictor;
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::zonotope::{Zonotope, DEFAULT_TOL};
use crate::Vector;

/// Score tolerance used when extracting classes from a set.
pub const CLASS_TOL: f64 = 1e-9;

/// `{i : y_i = max_j y_j}`.
pub fn classes_of_vector(y: &Vector) -> Vec<usize> {
    let max = y.max();
    (0..y.len()).filter(|&i| y[i] == max).collect()
}

/// Classes `i` such that some point of `z` has `y_i ≥ y_j` for all `j`
/// (up to `tol`).
pub fn classes_of_zonotope(z: &Zonotope, tol: f64) -> Result<Vec<usize>> {
    let n = z.dim();
    let (c, g) = (z.center(), z.generators());
    let mut out = Vec::new();
    for i in 0..n {
        // Margins (c_i − c_j) + (g_i − g_j)·β for j ≠ i.
        let rows: Vec<(f64, Vec<f64>)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (c[i] - c[j], (0..g.ncols()).map(|k| g[(i, k)] - g[(j, k)]).collect()))
            .collect();
        let at_center = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        if at_center >= -tol {
            out.push(i);
            continue;
        }
        let upper = rows
            .iter()
            .map(|(m, d)| m + d.iter().map(|v| v.abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if upper < -tol {
            continue;
        }
        if rows.len() == 1 {
            // The bound is attained for a single competitor.
            out.push(i);
            continue;
        }
        // max t s.t. margin_j(β) ≥ t, |β| ≤ 1.
        let mut lp = LinearProgram::new();
        let beta: Vec<usize> = (0..g.ncols()).map(|_| lp.add_var(0.0, -1.0, 1.0)).collect();
        let t = lp.add_var(-1.0, f64::NEG_INFINITY, f64::INFINITY);
        for (m, d) in &rows {
            let mut row: Vec<(usize, f64)> = beta.iter().zip(d).filter(|(_, &a)| a != 0.0).map(|(&b, &a)| (b, a)).collect();
            row.push((t, -1.0));
            lp.add_ge(row, -m);
        }
        let sol = solve_lp(&lp, &LpOptions::default())?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Lp(crate::lp::LpError::Backend(format!(
                "class extraction LP ended {:?}",
                sol.status
            ))));
        }
        if sol.x[t] >= -tol {
            out.push(i);
        }
    }
    Ok(out)
}

/// Lebesgue volume for `n_y ≤ 5`; otherwise the sum of volumes projected
/// onto consecutive blocks of three dimensions (the last block may be
/// shorter).
pub fn set_size(z: &Zonotope) -> Result<f64> {
    let n = z.dim();
    if n <= 5 {
        return z.volume();
    }
    let mut total = 0.0;
    for start in (0..n).step_by(3) {
        let dims: Vec<usize> = (start..(start + 3).min(n)).collect();
        total += z.projected_volume(&dims)?;
    }
    Ok(total)
}

/// Per-point outcome: whether the truth is covered and the set's size
/// (volume or class count).
pub fn point_metrics(model: &Predictor, data: &Dataset) -> Result<Vec<(bool, f64)>> {
    if model.task() != data.task {
        return Err(Error::InvalidArgument(format!(
            "{} predictor evaluated on {} data",
            model.task(),
            data.task
        )));
    }
    (0..data.len())
        .into_par_iter()
        .map(|m| {
            let x = data.x(m);
            match data.task {
                Task::Regression => {
                    let z = model.prediction_set(&x)?;
                    Ok((z.contains_point(&data.y(m), DEFAULT_TOL)?, set_size(&z)?))
                }
                Task::Classification => {
                    let predicted = model.classes(&x)?;
                    let covered = data.classes(m).iter().all(|c| predicted.contains(c));
                    Ok((covered, predicted.len() as f64))
                }
            }
        })
        .collect()
}

pub fn coverage_regression(model: &Predictor, test: &Dataset) -> Result<f64> {
    expect_task(test, Task::Regression)?;
    Ok(mean_covered(&point_metrics(model, test)?))
}

pub fn coverage_classification(model: &Predictor, test: &Dataset) -> Result<f64> {
    expect_task(test, Task::Classification)?;
    Ok(mean_covered(&point_metrics(model, test)?))
}

/// Mean volume (projected for `n_y > 5`).
pub fn conservatism_regression(model: &Predictor, test: &Dataset) -> Result<f64> {
    expect_task(test, Task::Regression)?;
    Ok(mean(&point_metrics(model, test)?.iter().map(|p| p.1).collect::<Vec<_>>()))
}

/// Mean number of predicted classes.
pub fn conservatism_classification(model: &Predictor, test: &Dataset) -> Result<f64> {
    expect_task(test, Task::Classification)?;
    Ok(mean(&point_metrics(model, test)?.iter().map(|p| p.1).collect::<Vec<_>>()))
}

fn expect_task(d: &Dataset, task: Task) -> Result<()> {
    if d.task != task {
        return Err(Error::InvalidArgument(format!("expected {task} data, got {}", d.task)));
    }
    Ok(())
}

fn mean_covered(p: &[(bool, f64)]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    p.iter().filter(|x| x.0).count() as f64 / p.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean of the per-point ratios `sizes[m] / baseline[m]`.
pub fn normalized_conservatism(sizes: &[f64], baseline: &[f64]) -> Result<f64> {
    if sizes.len() != baseline.len() || sizes.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "paired sizes need equal nonzero lengths, got {} and {}",
            sizes.len(),
            baseline.len()
        )));
    }
    if let Some(m) = baseline.iter().position(|&b| b == 0.0) {
        return Err(Error::InvalidArgument(format!("baseline set {m} has zero size")));
    }
    Ok(mean(&sizes.iter().zip(baseline).map(|(s, b)| s / b).collect::<Vec<_>>()))
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(samples: &[f64], level: f64, reps: usize, seed: u64) -> Result<(f64, f64)> {
    if samples.is_empty() || reps == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument("bootstrap needs samples, reps and a level in (0,1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((q * reps as f64).floor() as usize).min(reps - 1)];
    let tail = (1.0 - level) / 2.0;
    Ok((pick(tail), pick(1.0 - tail)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    pub n_out: usize,
    pub coverage: f64,
    pub conservatism: f64,
    /// 95% bootstrap interval of the conservatism.
    pub conservatism_ci: (f64, f64),
    pub sizes: Vec<f64>,
    pub covered: Vec<bool>,
    pub runtime_s: f64,
}

/// Coverage and conservatism of `model` on `test`.
pub fn evaluate(model: &Predictor, test: &Dataset, n_out: usize, seed: u64) -> Result<EvalReport> {
    let start = Instant::now();
    let points = point_metrics(model, test)?;
    let sizes: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(EvalReport {
        predictor: model.kind().to_string(),
        n_out,
        coverage: mean_covered(&points),
        conservatism: mean(&sizes),
        conservatism_ci: bootstrap_ci(&sizes, 0.95, 1000, seed)?,
        covered: points.iter().map(|p| p.0).collect(),
        sizes,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

pub const REPORT_HEADER: &str = "predictor,n_out,coverage,conservatism,conservatism_lo,conservatism_hi,runtime_s";

pub fn report_row(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.predictor, r.n_out, r.coverage, r.conservatism, r.conservatism_ci.0, r.conservatism_ci.1, r.runtime_s
    )
}

pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&report_row(r));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// SVG with one polygon per 2-D set and one dot per point.
pub fn render_svg(sets: &[Zonotope], points: &[[f64; 2]]) -> Result<String> {
    let mut polys = Vec::with_capacity(sets.len());
    for z in sets {
        if z.dim() != 2 {
            return Err(Error::DimensionMismatch {
                what: "plotted set dimension",
                expected: 2,
                got: z.dim(),
            });
        }
        polys.push(z.vertices_2d()?);
    }
    let all = polys.iter().flatten().chain(points.iter());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let size = 600.0;
    let margin = 20.0;
    let scale = (size - 2.0 * margin) / (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let map = |p: &[f64; 2]| (margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for poly in &polys {
        let pts: Vec<String> = poly
            .iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        writeln!(
            s,
            r#"<polygon points="{}" fill="steelblue" fill-opacity="0.15" stroke="steelblue" stroke-width="1"/>"#,
            pts.join(" ")
        )
        .unwrap();
    }
    for p in points {
        let (x, y) = map(p);
        writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2" fill="black"/>"#).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::Matrix;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    /// Vertex enumeration: class i is reachable iff some vertex (or, for
    /// general position, some point) has y_i maximal. Sampled densely here.
    fn classes_by_sampling(z: &Zonotope) -> Vec<usize> {
        let nu = z.num_generators();
        let mut found = vec![false; z.dim()];
        let steps = 40;
        let total = (steps + 1usize).pow(nu as u32);
        for code in 0..total {
            let mut c = code;
            let lambda = Vector::from_fn(nu, |_, _| {
                let s = c % (steps + 1);
                c /= steps + 1;
                -1.0 + 2.0 * s as f64 / steps as f64
            });
            for i in classes_of_vector(&z.point(&lambda).unwrap()) {
                found[i] = true;
            }
        }
        (0..z.dim()).filter(|&i| found[i]).collect()
    }

    #[test]
    fn vector_classes() {
        assert_eq!(classes_of_vector(&v(&[0.2, 0.8, 0.5])), vec![1]);
        assert_eq!(classes_of_vector(&v(&[1.0, 1.0, 0.0])), vec![0, 1]);
        assert_eq!(classes_of_vector(&v(&[3.0])), vec![0]);
    }

    #[test]
    fn zonotope_classes() {
        let single = Zonotope::singleton(v(&[0.2, 0.8]));
        assert_eq!(classes_of_zonotope(&single, CLASS_TOL).unwrap(), vec![1]);

        let b = Zonotope::from_box(v(&[1.0, 0.0]), &v(&[0.4, 0.4])).unwrap();
        assert_eq!(classes_of_zonotope(&b, CLASS_TOL).unwrap(), vec![0]);

        let centered = Zonotope::from_box(v(&[0.0, 0.0, 0.0]), &v(&[0.1, 0.3, 0.2])).unwrap();
        assert_eq!(classes_of_zonotope(&centered, CLASS_TOL).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn three_class_lp_path_matches_sampling() {
        // Center favors class 0; only a tilted generator reaches class 2.
        let z = Zonotope::new(v(&[1.0, 0.0, 0.2]), Matrix::from_row_slice(3, 2, &[-0.5, 0.0, 0.0, 0.1, 0.5, 0.0])).unwrap();
        assert_eq!(classes_of_zonotope(&z, CLASS_TOL).unwrap(), classes_by_sampling(&z));
        assert_eq!(classes_of_zonotope(&z, CLASS_TOL).unwrap(), vec![0, 2]);
    }

    #[test]
    fn normalized_ratio_and_bootstrap() {
        assert_eq!(normalized_conservatism(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(normalized_conservatism(&[1.0, 1.0], &[2.0, 1.0]).unwrap(), 0.75);
        assert!(normalized_conservatism(&[1.0], &[0.0]).is_err());
        assert!(normalized_conservatism(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(bootstrap_ci(&[3.0; 20], 0.95, 200, 1).unwrap(), (3.0, 3.0));
    }

    #[test]
    fn bootstrap_covers_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 200;
        let mut hits = 0;
        for t in 0..trials {
            let s: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
            let (lo, hi) = bootstrap_ci(&s, 0.95, 500, t).unwrap();
            if lo <= 0.5 && 0.5 <= hi {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((0.88..=0.99).contains(&rate), "rate {rate}");
    }

    #[test]
    fn projected_size_blocks() {
        let z = Zonotope::from_box(Vector::zeros(7), &Vector::from_element(7, 0.5)).unwrap();
        // Blocks {0,1,2}, {3,4,5}, {6}: 1 + 1 + 1.
        assert!((set_size(&z).unwrap() - 3.0).abs() < 1e-12);
        let small = Zonotope::from_box(Vector::zeros(2), &v(&[0.5, 2.0])).unwrap();
        assert!((set_size(&small).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn svg_has_one_polygon_per_set() {
        let sets: Vec<Zonotope> = (0..4)
            .map(|k| Zonotope::from_box(v(&[k as f64, 0.0]), &v(&[0.3, 0.2])).unwrap())
            .collect();
        let svg = render_svg(&sets, &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 4);
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn singleton_classes_match_center(c in prop::collection::vec(-1.0..1.0f64, 1..5)) {
            let c = Vector::from_vec(c);
            prop_assert_eq!(classes_of_zonotope(&Zonotope::singleton(c.clone()), CLASS_TOL).unwrap(), classes_of_vector(&c));
        }

        #[test]
        fn growing_a_set_never_drops_a_class(
            entries in prop::collection::vec(-1.0..1.0f64, 12),
            center in prop::collection::vec(-1.0..1.0f64, 3),
            scale in 1.0..3.0f64,
        ) {
            let g = Matrix::from_row_slice(3, 4, &entries);
            let z = Zonotope::new(Vector::from_vec(center.clone()), g.clone() * 0.3).unwrap();
            let big = Zonotope::new(Vector::from_vec(center), g * (0.3 * scale)).unwrap();
            let small = classes_of_zonotope(&z, CLASS_TOL).unwrap();
            let large = classes_of_zonotope(&big, CLASS_TOL).unwrap();
            prop_assert!(small.iter().all(|c| large.contains(c)));
        }
    }
}
