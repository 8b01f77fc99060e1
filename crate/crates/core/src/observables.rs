//! Observables of the cell masses and their expectations under a fitted
//! density.
//!
//! An observable is a function `M(π)` pulled back to normalized wavelet
//! coordinates through the box, the inverse Haar cascade and softmax. Its
//! expectation under a density network `p` is `⟨p, M⟩ / ⟨p, 1⟩`, with `M`
//! itself interpolated into a low-degree, low-rank network.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::{clr_inverse_into, dwt_inverse, CoordinateMap};
use crate::ftn::{Ftn, FhtwTree};
use crate::sketch::{make_sketches, FitConfig, QueryPlan};
use crate::{Error, Result, SampleMatrix};

/// Degree used to interpolate observables.
pub const DEFAULT_Q_OBS: usize = 6;
/// Rank cap used to interpolate observables.
pub const DEFAULT_R_OBS: usize = 5;
/// Variances are floored here before taking square roots.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Functions of the cell masses `π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    Constant,
    /// `−Σ π_j log π_j`.
    Shannon,
    /// `−log Σ π_j²`.
    Renyi2,
    /// `π_i^power`.
    Site { i: usize, power: u32 },
    /// `π_i π_j`.
    Pair { i: usize, j: usize },
}

impl ObservableKind {
    pub fn eval_pi(&self, pi: &[f64]) -> f64 {
        match *self {
            ObservableKind::Constant => 1.0,
            ObservableKind::Shannon => -pi.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>(),
            ObservableKind::Renyi2 => -pi.iter().map(|p| p * p).sum::<f64>().ln(),
            ObservableKind::Site { i, power } => pi[i].powi(power as i32),
            ObservableKind::Pair { i, j } => pi[i] * pi[j],
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ObservableKind::Constant => "constant".into(),
            ObservableKind::Shannon => "shannon_entropy".into(),
            ObservableKind::Renyi2 => "renyi2_entropy".into(),
            ObservableKind::Site { i, power } => format!("pi_{i}^{power}"),
            ObservableKind::Pair { i, j } => format!("pi_{i}*pi_{j}"),
        }
    }
}

/// An observable bound to a coordinate map.
#[derive(Debug, Clone)]
pub struct Observable {
    pub kind: ObservableKind,
    pub map: CoordinateMap,
}

impl Observable {
    pub fn new(kind: ObservableKind, map: &CoordinateMap) -> Self {
        Self { kind, map: map.clone() }
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    /// `M(c)`.
    pub fn eval(&self, c: &[f64]) -> Result<f64> {
        let pi = self.map.inverse(c)?;
        Ok(self.kind.eval_pi(&pi))
    }
}

pub fn shannon_entropy_observable(map: &CoordinateMap) -> Observable {
    Observable::new(ObservableKind::Shannon, map)
}

pub fn renyi2_observable(map: &CoordinateMap) -> Observable {
    Observable::new(ObservableKind::Renyi2, map)
}

pub fn site_observable(map: &CoordinateMap, i: usize, power: u32) -> Observable {
    Observable::new(ObservableKind::Site { i, power }, map)
}

pub fn pair_observable(map: &CoordinateMap, i: usize, j: usize) -> Observable {
    Observable::new(ObservableKind::Pair { i, j }, map)
}

/// Interpolation settings for observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsConfig {
    #[serde(default = "default_q_obs")]
    pub q_obs: usize,
    #[serde(default = "default_r_obs")]
    pub r_obs: usize,
    #[serde(default = "default_obs_tol")]
    pub sv_rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_q_obs() -> usize {
    DEFAULT_Q_OBS
}

fn default_r_obs() -> usize {
    DEFAULT_R_OBS
}

fn default_obs_tol() -> f64 {
    1e-6
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            q_obs: DEFAULT_Q_OBS,
            r_obs: DEFAULT_R_OBS,
            sv_rel_tol: default_obs_tol(),
            seed: 0,
        }
    }
}

impl ObsConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            sv_rel_tol: self.sv_rel_tol,
            ..FitConfig::interpolation(self.r_obs, self.q_obs)
        }
    }
}

/// Expectations under one density, sharing a single set of query points
/// across observables: `π` is computed once per point.
pub struct Estimator {
    density: Ftn,
    norm: f64,
    plan: QueryPlan,
    pis: SampleMatrix,
    fit: FitConfig,
}

impl Estimator {
    pub fn new(p: &Ftn, map: &CoordinateMap, cfg: &ObsConfig) -> Result<Self> {
        let tree: &FhtwTree = p.tree();
        if map.cells() != tree.n_coords() + 1 {
            return Err(Error::Incompatible(format!(
                "coordinate map has {} cells, density has {} coordinates",
                map.cells(),
                tree.n_coords()
            )));
        }
        let fit = cfg.fit_config();
        let plan = QueryPlan::new(tree, make_sketches(tree, &fit, None)?);
        let d = map.cells();
        let mut data = vec![0.0; plan.len() * d];
        data.par_chunks_mut(d)
            .enumerate()
            .try_for_each_init(
                || (vec![0.0; d - 1], vec![0.0; d - 1], Vec::with_capacity(d)),
                |(c, y, pi), (i, out)| -> Result<()> {
                    plan.fill(i, c);
                    map.bounds.invert_into(c, y);
                    clr_inverse_into(&dwt_inverse(y, map.spatial_dim)?, pi);
                    out.copy_from_slice(pi);
                    Ok(())
                },
            )?;
        let pis = SampleMatrix::new(d, data)?;
        // ⟨p, M⟩ only sees the first q_obs + 1 coefficients of p
        let density = if fit.q <= p.basis().q {
            p.truncated(fit.q)?
        } else {
            p.padded(fit.q)?
        };
        let one = Ftn::constant(tree.clone(), density.basis(), 1.0);
        let norm = density.inner_product(&one)?;
        if !(norm > 0.0) {
            return Err(Error::InvalidDensity(norm));
        }
        Ok(Self {
            density,
            norm,
            plan,
            pis,
            fit,
        })
    }

    /// `⟨p, 1⟩` at the observable degree.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Interpolates `kind` on the shared query points.
    pub fn interpolate(&self, kind: ObservableKind) -> Result<Ftn> {
        self.interpolate_fn(|pi| kind.eval_pi(pi))
    }

    /// Interpolates an arbitrary function of `π`.
    pub fn interpolate_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<Ftn> {
        let values: Vec<f64> = self.pis.rows().map(f).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("observable is not finite at query {i}")));
        }
        Ok(self.plan.assemble(&values, &self.fit)?.0)
    }

    /// `⟨p, M⟩ / ⟨p, 1⟩`.
    pub fn expectation(&self, kind: ObservableKind) -> Result<f64> {
        let m = self.interpolate(kind)?;
        Ok(self.density.inner_product(&m)? / self.norm)
    }

    pub fn expectation_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<f64> {
        let m = self.interpolate_fn(f)?;
        Ok(self.density.inner_product(&m)? / self.norm)
    }
}

/// Self-normalized expectation of one observable under `p`.
pub fn expectation(p: &Ftn, obs: &Observable, cfg: &ObsConfig) -> Result<f64> {
    Estimator::new(p, &obs.map, cfg)?.expectation(obs.kind)
}

/// Which correlations to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationTarget {
    /// All `d × d` pairs.
    Full,
    /// `f(i, j) = Corr(Π_(i,j), Π_ref)` on the `m × m` grid, 0-based.
    Slice { row: usize, col: usize },
}

impl CorrelationTarget {
    /// Slice against the reference cell `(4, 4)` in 1-based
    /// grid labels.
    pub fn default_slice() -> Self {
        CorrelationTarget::Slice { row: 3, col: 3 }
    }

    pub fn default_for(spatial_dim: usize) -> Self {
        if spatial_dim == 2 {
            Self::default_slice()
        } else {
            CorrelationTarget::Full
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Plain CSV without a header, full round-trip precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|j| format!("{:?}", self.get(i, j))).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            match cols {
                None => cols = Some(vals.len()),
                Some(c) if c != vals.len() => {
                    return Err(Error::Format(format!(
                        "line {} has {} fields, expected {c}",
                        n + 1,
                        vals.len()
                    )))
                }
                _ => {}
            }
            data.extend(vals);
            rows += 1;
        }
        Ok(Self {
            rows,
            cols: cols.unwrap_or(0),
            data,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub max_err: f64,
    pub mean_err: f64,
    pub flagged_entries: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub predicted: Matrix,
    pub reference: Option<Matrix>,
    pub metrics: Option<Metrics>,
    /// Entries whose variance estimate was not positive.
    pub flagged: Vec<(usize, usize)>,
}

/// Moments of single sites and pairs under the density.
fn site_moments(est: &Estimator, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m: Vec<(f64, f64)> = (0..d)
        .into_par_iter()
        .map(|i| {
            let m1 = est.expectation(ObservableKind::Site { i, power: 1 })?;
            let m2 = est.expectation(ObservableKind::Site { i, power: 2 })?;
            Ok((m1, m2))
        })
        .collect::<Result<_>>()?;
    let mean = m.iter().map(|v| v.0).collect();
    let var = m.iter().map(|(a, b)| b - a * a).collect();
    Ok((mean, var))
}

fn corr_entry(cov: f64, vi: f64, vj: f64) -> f64 {
    cov / (vi.max(VARIANCE_FLOOR).sqrt() * vj.max(VARIANCE_FLOOR).sqrt())
}

/// Correlations of the cell masses under `p`, assembled from the moments
/// `E[π_i]`, `E[π_i²]` and `E[π_i π_j]`.
pub fn correlation_matrix(
    p: &Ftn,
    map: &CoordinateMap,
    cfg: &ObsConfig,
    target: CorrelationTarget,
) -> Result<CorrelationResult> {
    let est = Estimator::new(p, map, cfg)?;
    correlation_with(&est, map, target)
}

/// [`correlation_matrix`] on an existing estimator.
pub fn correlation_with(est: &Estimator, map: &CoordinateMap, target: CorrelationTarget) -> Result<CorrelationResult> {
    let d = map.cells();
    let (mean, var) = site_moments(est, d)?;
    let bad = |i: usize| !(var[i] > 0.0);
    match target {
        CorrelationTarget::Full => {
            let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
            let vals: Vec<f64> = pairs
                .par_iter()
                .map(|&(i, j)| est.expectation(ObservableKind::Pair { i, j }))
                .collect::<Result<_>>()?;
            let mut r = Matrix::zeros(d, d);
            for i in 0..d {
                r.set(i, i, 1.0);
            }
            for (&(i, j), &eij) in pairs.iter().zip(&vals) {
                let c = corr_entry(eij - mean[i] * mean[j], var[i], var[j]);
                r.set(i, j, c);
                r.set(j, i, c);
            }
            let flagged = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .filter(|&(i, j)| bad(i) || bad(j))
                .collect();
            Ok(CorrelationResult {
                predicted: r,
                reference: None,
                metrics: None,
                flagged,
            })
        }
        CorrelationTarget::Slice { row, col } => {
            let m = grid_side(d, map.spatial_dim)?;
            if row >= m || col >= m {
                return Err(Error::Config(format!("reference cell ({row}, {col}) outside the {m}x{m} grid")));
            }
            let rc = row * m + col;
            let vals: Vec<f64> = (0..d)
                .into_par_iter()
                .map(|c| {
                    if c == rc {
                        Ok(var[c] + mean[c] * mean[c])
                    } else {
                        est.expectation(ObservableKind::Pair { i: c.min(rc), j: c.max(rc) })
                    }
                })
                .collect::<Result<_>>()?;
            let mut f = Matrix::zeros(m, m);
            let mut flagged = Vec::new();
            for c in 0..d {
                let v = if c == rc {
                    1.0
                } else {
                    corr_entry(vals[c] - mean[c] * mean[rc], var[c], var[rc])
                };
                f.set(c / m, c % m, v);
                if bad(c) || bad(rc) {
                    flagged.push((c / m, c % m));
                }
            }
            Ok(CorrelationResult {
                predicted: f,
                reference: None,
                metrics: None,
                flagged,
            })
        }
    }
}

fn grid_side(d: usize, spatial_dim: usize) -> Result<usize> {
    if spatial_dim != 2 {
        return Err(Error::Config("a correlation slice needs a 2D grid".into()));
    }
    let m = (d as f64).sqrt().round() as usize;
    if m * m != d {
        return Err(Error::Shape(format!("{d} cells do not form a square grid")));
    }
    Ok(m)
}

/// Sample correlation matrix of the batch rows, with the unbiased
/// `1/(B−1)` convention.
pub fn mc_correlation(batch: &SampleMatrix) -> Result<Matrix> {
    let (b, d) = (batch.n_rows(), batch.n_cols());
    if b < 2 {
        return Err(Error::InsufficientSamples(format!("correlation needs 2 rows, got {b}")));
    }
    let mut mean = vec![0.0; d];
    for r in batch.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut cov = vec![0.0; d * d];
    let mut z = vec![0.0; d];
    for r in batch.rows() {
        for j in 0..d {
            z[j] = r[j] - mean[j];
        }
        for i in 0..d {
            let zi = z[i];
            for (c, zj) in cov[i * d..(i + 1) * d].iter_mut().zip(&z) {
                *c += zi * zj;
            }
        }
    }
    let scale = 1.0 / (b - 1) as f64;
    cov.iter_mut().for_each(|c| *c *= scale);
    let sd: Vec<f64> = (0..d).map(|i| cov[i * d + i].sqrt()).collect();
    if let Some(i) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVariance(i));
    }
    let mut r = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            r.set(i, j, if i == j { 1.0 } else { cov[i * d + j] / (sd[i] * sd[j]) });
        }
    }
    Ok(r)
}

/// Monte Carlo reference in the same layout as [`correlation_matrix`].
pub fn mc_reference(batch: &SampleMatrix, spatial_dim: usize, target: CorrelationTarget) -> Result<Matrix> {
    let full = mc_correlation(batch)?;
    match target {
        CorrelationTarget::Full => Ok(full),
        CorrelationTarget::Slice { row, col } => {
            let d = batch.n_cols();
            let m = grid_side(d, spatial_dim)?;
            if row >= m || col >= m {
                return Err(Error::Config(format!("reference cell ({row}, {col}) outside the {m}x{m} grid")));
            }
            let rc = row * m + col;
            let mut f = Matrix::zeros(m, m);
            for c in 0..d {
                f.set(c / m, c % m, full.get(c, rc));
            }
            Ok(f)
        }
    }
}

/// Batch mean of an observable of `π`.
pub fn mc_expectation(batch: &SampleMatrix, kind: ObservableKind) -> Result<f64> {
    if batch.n_rows() == 0 {
        return Err(Error::InsufficientSamples("empty batch".into()));
    }
    Ok(batch.rows().map(|r| kind.eval_pi(r)).sum::<f64>() / batch.n_rows() as f64)
}

/// Max and mean absolute entrywise errors, skipping `flagged` entries.
pub fn metrics(predicted: &Matrix, reference: &Matrix, flagged: &[(usize, usize)]) -> Result<Metrics> {
    if predicted.rows != reference.rows || predicted.cols != reference.cols {
        return Err(Error::Shape(format!(
            "predicted {}x{} vs reference {}x{}",
            predicted.rows, predicted.cols, reference.rows, reference.cols
        )));
    }
    let mut max_err: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..predicted.rows {
        for j in 0..predicted.cols {
            if flagged.contains(&(i, j)) {
                continue;
            }
            let e = (predicted.get(i, j) - reference.get(i, j)).abs();
            max_err = max_err.max(e);
            sum += e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Invariant("every entry is flagged; no metric to report".into()));
    }
    Ok(Metrics {
        max_err,
        mean_err: sum / n as f64,
        flagged_entries: flagged.to_vec(),
    })
}

/// `Σ|M̂ − M| / Σ|M|`.
pub fn mrpe(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} values",
            predicted.len(),
            truth.len()
        )));
    }
    let den: f64 = truth.iter().map(|v| v.abs()).sum();
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(predicted.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / den)
}

/// Predicted and reference value of a scalar observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub name: String,
    pub predicted: f64,
    pub mc_reference: f64,
    pub rel_error: f64,
}

impl ScalarResult {
    pub fn new(name: String, predicted: f64, mc_reference: f64) -> Self {
        Self {
            name,
            predicted,
            mc_reference,
            rel_error: (predicted - mc_reference).abs() / mc_reference.abs(),
        }
    }
}
