//! Datasets: synthetic generators, CSV ingestion, normalization and splits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::zonotope::Zonotope;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

/// Per-column min/max used by [`normalize`]. Output ranges are empty for
/// classification, whose one-hot labels are never rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub output_min: Vec<f64>,
    pub output_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One row per data point.
    pub inputs: Matrix,
    /// One row per data point; one-hot (or multi-hot) rows for classification.
    pub outputs: Matrix,
    pub task: Task,
    pub columns: Vec<String>,
    pub normalization: Option<Normalization>,
    pub seed: Option<u64>,
}

/// Metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub task: Task,
    pub n_y: usize,
    pub normalization: Option<Normalization>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(inputs: Matrix, outputs: Matrix, task: Task) -> Result<Self> {
        check_dim("dataset rows", inputs.nrows(), outputs.nrows())?;
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        if task == Task::Classification {
            for (m, row) in outputs.row_iter().enumerate() {
                let binary = row.iter().all(|&v| v == 0.0 || v == 1.0);
                if !binary || row.sum() < 1.0 {
                    return Err(Error::Data(format!(
                        "row {m}: classification labels must be 0/1 with at least one positive class"
                    )));
                }
            }
        }
        let columns = (0..inputs.ncols())
            .map(|i| format!("x{}", i + 1))
            .chain((0..outputs.ncols()).map(|j| format!("y{}", j + 1)))
            .collect();
        Ok(Self {
            inputs,
            outputs,
            task,
            columns,
            normalization: None,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_x(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn x(&self, m: usize) -> Vector {
        self.inputs.row(m).transpose()
    }

    pub fn y(&self, m: usize) -> Vector {
        self.outputs.row(m).transpose()
    }

    /// Positive classes of a classification row.
    pub fn classes(&self, m: usize) -> Vec<usize> {
        (0..self.n_y())
            .filter(|&j| self.outputs[(m, j)] == 1.0)
            .collect()
    }

    /// The rows listed in `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: Matrix::from_fn(indices.len(), self.n_x(), |i, j| self.inputs[(indices[i], j)]),
            outputs: Matrix::from_fn(indices.len(), self.n_y(), |i, j| {
                self.outputs[(indices[i], j)]
            }),
            ..self.clone_meta()
        }
    }

    /// All rows except those in `removed`.
    pub fn without(&self, removed: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|m| !removed.contains(m)).collect();
        self.subset(&keep)
    }

    /// Replaces every multi-label row by one one-hot row per positive class.
    /// Returns the new dataset and, for each new row, its source row.
    pub fn expand_multilabel(&self) -> (Self, Vec<usize>) {
        let mut source = Vec::new();
        let mut labels = Vec::new();
        for m in 0..self.len() {
            for c in self.classes(m) {
                source.push(m);
                labels.push(c);
            }
        }
        let mut out = self.subset(&source);
        out.outputs = Matrix::from_fn(source.len(), self.n_y(), |i, j| {
            if labels[i] == j {
                1.0
            } else {
                0.0
            }
        });
        (out, source)
    }

    fn clone_meta(&self) -> Self {
        Self {
            inputs: Matrix::zeros(0, 0),
            outputs: Matrix::zeros(0, 0),
            task: self.task,
            columns: self.columns.clone(),
            normalization: self.normalization.clone(),
            seed: self.seed,
        }
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            task: self.task,
            n_y: self.n_y(),
            normalization: self.normalization.clone(),
            seed: self.seed,
        }
    }
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noise set of SD-R1: `⟨0, [0.2·1 | 0.02·(−0.209, 1.129)]⟩`.
pub fn sdr1_noise() -> Zonotope {
    Zonotope::from_rows(&[0.0, 0.0], &[vec![0.2, 0.02 * -0.209], vec![0.2, 0.02 * 1.129]])
        .expect("constant noise set")
}

/// Noise set of SD-R2: `⟨0.5·1, [0.5·1 | 0.05·(0.747, −0.247)]⟩`.
pub fn sdr2_noise() -> Zonotope {
    Zonotope::from_rows(&[0.5, 0.5], &[vec![0.5, 0.05 * 0.747], vec![0.5, 0.05 * -0.247]])
        .expect("constant noise set")
}

pub fn sdr1_output(x: &[f64], u: &[f64]) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    [
        5.0 * x1.sin() + x2 * x2 + x1 * u[0],
        1.0 / (x1 * x1 + 1.0) + x2.cos() + x2 * u[1],
    ]
}

pub fn sdr2_output(x: &[f64], u: &[f64]) -> [f64; 2] {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let c = |v: f64| v.cos();
    [
        3.0 * x1.powi(3)
            + (c(10.0 * x2) * c(5.0 * x1).powi(2)).exp()
            + (7.5 * x3).sin().exp()
            + u[0],
        2.0 * x1 * x1
            + (c(10.0 * x1) * c(5.0 * x2).powi(2)).exp()
            + (7.5 * x3 * x3).sin().exp()
            + 1.5 * u[1],
    ]
}

/// SD-R1: `x ∈ U[−5, 5]²`, two outputs with input-dependent noise.
pub fn gen_sdr1(n: usize, seed: u64) -> Dataset {
    gen_regression(n, seed, 2, (-5.0, 5.0), &sdr1_noise(), sdr1_output)
}

/// SD-R2: `x ∈ U[0, 1]³`, two outputs with additive noise.
pub fn gen_sdr2(n: usize, seed: u64) -> Dataset {
    gen_regression(n, seed, 3, (0.0, 1.0), &sdr2_noise(), sdr2_output)
}

/// SD-R2 inputs and response with a caller-chosen two-dimensional noise set.
pub fn gen_sdr2_with_noise(n: usize, seed: u64, noise: &Zonotope) -> Result<Dataset> {
    check_dim("noise dimension", 2, noise.dim())?;
    Ok(gen_regression(n, seed, 3, (0.0, 1.0), noise, sdr2_output))
}

fn gen_regression(
    n: usize,
    seed: u64,
    n_x: usize,
    range: (f64, f64),
    noise: &Zonotope,
    g: fn(&[f64], &[f64]) -> [f64; 2],
) -> Dataset {
    let mut rng = seeded(seed);
    let mut xs = Matrix::zeros(n, n_x);
    let mut ys = Matrix::zeros(n, 2);
    for m in 0..n {
        let x: Vec<f64> = (0..n_x).map(|_| rng.random_range(range.0..=range.1)).collect();
        let u = noise.sample(&mut rng);
        let y = g(&x, u.as_slice());
        for (j, v) in x.iter().enumerate() {
            xs[(m, j)] = *v;
        }
        ys[(m, 0)] = y[0];
        ys[(m, 1)] = y[1];
    }
    let mut d = Dataset::new(xs, ys, Task::Regression).expect("generated data is finite");
    d.seed = Some(seed);
    d
}

/// Class curves of SD-C1 (`k` is zero-based).
pub fn sdc1_feature(k: usize, x1: f64, u: f64) -> f64 {
    match k {
        0 => 3.0 * x1.sin() + u,
        1 => x1 * x1 + u,
        _ => 2.0 * x1 - 10.0 + u,
    }
}

/// Class surfaces of SD-C2 (`k` is zero-based).
pub fn sdc2_feature(k: usize, x1: f64, x2: f64, u: f64) -> f64 {
    match k {
        0 => x2 * x1.sin() + u,
        1 => x1 * x1 + x2 + 2.0 * u,
        2 => 2.0 * x1 - 10.0 + x1 * x2 + 0.5 * u * u,
        _ => 2.0 * x1 - 16.0 + x2 * u,
    }
}

/// SD-C1: three classes in the plane, `n_per_class` points each.
pub fn gen_sdc1(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    gen_classes(n_per_class, 3, 2, seed, |k| {
        let x1 = rng.random_range(-5.0..=5.0);
        let u = rng.random_range(-2.0..=2.0);
        vec![x1, sdc1_feature(k, x1, u)]
    })
}

/// SD-C2: four classes in three dimensions, `n_per_class` points each.
pub fn gen_sdc2(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    gen_classes(n_per_class, 4, 3, seed, |k| {
        let x1 = rng.random_range(-5.0..=5.0);
        let x2 = rng.random_range(-5.0..=5.0);
        let u = rng.random_range(-1.0..=1.0);
        vec![x1, x2, sdc2_feature(k, x1, x2, u)]
    })
}

fn gen_classes(
    n_per_class: usize,
    n_classes: usize,
    n_x: usize,
    seed: u64,
    mut point: impl FnMut(usize) -> Vec<f64>,
) -> Dataset {
    let n = n_per_class * n_classes;
    let mut xs = Matrix::zeros(n, n_x);
    let mut ys = Matrix::zeros(n, n_classes);
    for k in 0..n_classes {
        for i in 0..n_per_class {
            let m = k * n_per_class + i;
            for (j, v) in point(k).into_iter().enumerate() {
                xs[(m, j)] = v;
            }
            ys[(m, k)] = 1.0;
        }
    }
    let mut d = Dataset::new(xs, ys, Task::Classification).expect("generated data is finite");
    d.seed = Some(seed);
    d
}

/// Generates one of the named synthetic datasets. `n` counts points for the
/// regression sets and points per class for the classification sets.
pub fn generate(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    match name {
        "sd-r1" => Ok(gen_sdr1(n, seed)),
        "sd-r2" => Ok(gen_sdr2(n, seed)),
        "sd-c1" => Ok(gen_sdc1(n, seed)),
        "sd-c2" => Ok(gen_sdc2(n, seed)),
        other => Err(Error::InvalidArgument(format!(
            "unknown dataset {other:?} (expected sd-r1, sd-r2, sd-c1 or sd-c2)"
        ))),
    }
}

/// Reads a CSV with a header row; the last `n_y` columns are outputs.
pub fn load_csv(path: &Path, task: Task, n_y: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if n_y == 0 || columns.len() <= n_y {
        return Err(Error::Data(format!(
            "{}: {} columns cannot hold inputs and {n_y} outputs",
            path.display(),
            columns.len()
        )));
    }
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column {:?}: cannot parse {field:?} as a number",
                    path.display(),
                    line + 1,
                    columns[j]
                ))
            })?;
            values.push(v);
        }
    }
    let width = columns.len();
    let rows = values.len() / width;
    let n_x = width - n_y;
    let all = Matrix::from_row_slice(rows, width, &values);
    let mut d = Dataset::new(
        all.columns(0, n_x).into_owned(),
        all.columns(n_x, n_y).into_owned(),
        task,
    )?;
    d.columns = columns;
    Ok(d)
}

pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&d.columns)?;
    for m in 0..d.len() {
        let row: Vec<String> = d
            .inputs
            .row(m)
            .iter()
            .chain(d.outputs.row(m).iter())
            .map(|v| format!("{v:?}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the CSV and its JSON sidecar.
pub fn save(d: &Dataset, csv: &Path) -> Result<()> {
    write_csv(d, csv)?;
    fs::write(sidecar_path(csv), serde_json::to_string_pretty(&d.sidecar())?)?;
    Ok(())
}

/// Reads a CSV whose task and output count come from its sidecar.
pub fn load(csv: &Path) -> Result<Dataset> {
    let meta_path = sidecar_path(csv);
    let meta: Sidecar = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| {
        Error::Data(format!("cannot read sidecar {}: {e}", meta_path.display()))
    })?)?;
    let mut d = load_csv(csv, meta.task, meta.n_y)?;
    d.normalization = meta.normalization;
    d.seed = meta.seed;
    Ok(d)
}

fn column_range(m: &Matrix, j: usize) -> (f64, f64) {
    m.column(j)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Min-max scales every input column (and every regression output column)
/// into `[0, 1]`, recording the ranges for [`denormalize`].
pub fn normalize(d: &Dataset) -> Result<Dataset> {
    if d.is_empty() {
        return Err(Error::Data("cannot normalize an empty dataset".into()));
    }
    let mut out = d.clone();
    let mut norm = Normalization {
        input_min: Vec::new(),
        input_max: Vec::new(),
        output_min: Vec::new(),
        output_max: Vec::new(),
    };
    let scale = |m: &mut Matrix, offset: usize, lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
        for j in 0..m.ncols() {
            let (a, b) = column_range(m, j);
            if b <= a {
                return Err(Error::Data(format!(
                    "column {:?} is constant; its range cannot be normalized",
                    d.columns.get(offset + j).cloned().unwrap_or_else(|| (offset + j).to_string())
                )));
            }
            m.column_mut(j).apply(|v| *v = (*v - a) / (b - a));
            lo.push(a);
            hi.push(b);
        }
        Ok(())
    };
    scale(&mut out.inputs, 0, &mut norm.input_min, &mut norm.input_max)?;
    if d.task == Task::Regression {
        scale(&mut out.outputs, d.n_x(), &mut norm.output_min, &mut norm.output_max)?;
    }
    out.normalization = Some(norm);
    Ok(out)
}

/// Inverts [`normalize`].
pub fn denormalize(d: &Dataset) -> Result<Dataset> {
    let Some(norm) = &d.normalization else {
        return Ok(d.clone());
    };
    let mut out = d.clone();
    for j in 0..out.n_x() {
        let (a, b) = (norm.input_min[j], norm.input_max[j]);
        out.inputs.column_mut(j).apply(|v| *v = a + *v * (b - a));
    }
    for j in 0..norm.output_min.len() {
        let (a, b) = (norm.output_min[j], norm.output_max[j]);
        out.outputs.column_mut(j).apply(|v| *v = a + *v * (b - a));
    }
    out.normalization = None;
    Ok(out)
}

/// Seeded shuffle, then contiguous train/calibration/test partitions. The
/// calibration and test sizes are `⌊f·n⌋`; the remainder goes to training.
pub fn split(d: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fc, fs) = fractions;
    if [ft, fc, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fc + fs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let n = d.len();
    let n_cal = (fc * n as f64 + 1e-9).floor() as usize;
    let n_test = (fs * n as f64 + 1e-9).floor() as usize;
    split_counts(d, n_cal, n_test, seed)
}

/// As [`split`], with explicit calibration and test sizes.
pub fn split_counts(d: &Dataset, n_cal: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let n = d.len();
    if n_cal + n_test > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take {n_cal} calibration and {n_test} test rows from {n}"
        )));
    }
    let n_train = n - n_cal - n_test;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    Ok((
        d.subset(&idx[..n_train]),
        d.subset(&idx[n_train..n_train + n_cal]),
        d.subset(&idx[n_train + n_cal..]),
    ))
}
