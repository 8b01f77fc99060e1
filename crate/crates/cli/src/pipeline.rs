//! The stages `simulate → transform → fit → observables` and the drivers
//! that chain them.
//!
//! Every stage reads its inputs from and writes its outputs to the
//! experiment's output directory, so each one can be rerun in isolation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dkfhtw_core::coords::{AffineBox, CoordinateMap};
use dkfhtw_core::ftn::{FhtwTree, Ftn};
use dkfhtw_core::fv_sim::{batch_file_name, read_batch_csv, simulate_batch, BatchManifest};
use dkfhtw_core::observables::{
    correlation_with, mc_expectation, mc_reference, metrics, CorrelationResult, Estimator, Metrics,
    ObservableKind, ScalarResult,
};
use dkfhtw_core::sketch::{estimate_density, FitConfig, FitReport};
use dkfhtw_core::SampleMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SWEEP_FIXED_RANK};
use crate::error::{HarnessError, HarnessResult};

/// File locations of one experiment.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub out: PathBuf,
    pub batch_dir: PathBuf,
    pub eval_batch: PathBuf,
}

impl Artifacts {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let hash = cfg.sim.config_hash();
        let batch_dir = cfg.cache_root().join(&hash[..16]);
        Self {
            out: cfg.output_dir.clone(),
            eval_batch: batch_dir.join(batch_file_name(cfg.eval_time)),
            batch_dir,
        }
    }

    pub fn batch_manifest(&self) -> PathBuf {
        self.batch_dir.join("batch_manifest.json")
    }

    pub fn bounds(&self) -> PathBuf {
        self.out.join("box.json")
    }

    pub fn density(&self) -> PathBuf {
        self.out.join("density.json")
    }

    pub fn fit_report(&self) -> PathBuf {
        self.out.join("fit_report.json")
    }

    pub fn predicted(&self) -> PathBuf {
        self.out.join("correlation_predicted.csv")
    }

    pub fn reference(&self) -> PathBuf {
        self.out.join("correlation_reference.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.out.join("metrics.json")
    }

    pub fn scalars(&self) -> PathBuf {
        self.out.join("scalars.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    pub fn sweep_table(&self) -> PathBuf {
        self.out.join("sweep.csv")
    }

    pub fn sweep_manifest(&self) -> PathBuf {
        self.out.join("sweep_manifest.json")
    }
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> HarnessResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(dkfhtw_core::Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> HarnessResult<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text).map_err(dkfhtw_core::Error::from)?)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> HarnessResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn require(path: PathBuf, producer: &'static str) -> HarnessResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(HarnessError::MissingArtifact { path, producer })
    }
}

/// Stable-regime diagnostics of the fitted checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_trajectories: usize,
    pub diverged: usize,
    pub clamp_rate: f64,
    pub pi_min: f64,
    pub max_mass_error: f64,
    /// The batch came from the cache rather than a fresh simulation.
    pub reused: bool,
}

fn summarize(m: &BatchManifest, t: f64, reused: bool) -> HarnessResult<SimSummary> {
    let entry = m
        .checkpoints
        .iter()
        .find(|c| (c.t - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| HarnessError::Config(format!("no checkpoint at t = {t} in the batch manifest")))?;
    Ok(SimSummary {
        n_trajectories: m.n_trajectories,
        diverged: m.diverged,
        clamp_rate: m.clamp_rate,
        pi_min: entry.pi_min,
        max_mass_error: entry.max_mass_error,
        reused,
    })
}

/// Simulates the batch, or reuses the cached one with the same config hash.
pub fn simulate_stage(cfg: &ExperimentConfig) -> HarnessResult<SimSummary> {
    let a = Artifacts::new(cfg);
    let hash = cfg.sim.config_hash();
    if a.batch_manifest().exists() && a.eval_batch.exists() {
        let m: BatchManifest = read_json(&a.batch_manifest())?;
        if m.config_hash == hash {
            log::info!("reusing cached batch {}", a.batch_dir.display());
            return summarize(&m, cfg.eval_time, true);
        }
    }
    log::info!(
        "simulating {} trajectories of {} steps",
        cfg.sim.n_trajectories,
        cfg.sim.n_steps()
    );
    let run = simulate_batch(&cfg.sim).map_err(HarnessError::stage("simulate"))?;
    std::fs::create_dir_all(&a.batch_dir)?;
    write_json(&a.batch_dir.join("sim_config.json"), &cfg.sim)?;
    let m = run.save(&a.batch_dir).map_err(HarnessError::stage("simulate"))?;
    summarize(&m, cfg.eval_time, false)
}

/// The batch at `eval_time`, as written by the simulate stage.
pub fn load_batch(cfg: &ExperimentConfig) -> HarnessResult<SampleMatrix> {
    let path = require(Artifacts::new(cfg).eval_batch, "simulate")?;
    read_batch_csv(&path).map_err(HarnessError::stage("simulate"))
}

pub struct FitOutcome {
    pub map: CoordinateMap,
    pub density: Ftn,
    pub report: FitReport,
}

/// Box fit, wavelet transform and density estimation.
pub fn fit_stage(cfg: &ExperimentConfig, batch: &SampleMatrix) -> HarnessResult<FitOutcome> {
    let a = Artifacts::new(cfg);
    std::fs::create_dir_all(&a.out)?;
    let (map, c) = CoordinateMap::fit(batch, cfg.sim.spatial_dim).map_err(HarnessError::stage("transform"))?;
    map.bounds.save(&a.bounds()).map_err(HarnessError::stage("transform"))?;
    let tree = FhtwTree::new(cfg.sim.levels()).map_err(HarnessError::stage("fit"))?;
    let (density, report) = estimate_density(&c, &tree, &cfg.fit).map_err(HarnessError::stage("fit"))?;
    density.save(&a.density()).map_err(HarnessError::stage("fit"))?;
    report.save(&a.fit_report()).map_err(HarnessError::stage("fit"))?;
    Ok(FitOutcome { map, density, report })
}

/// Reads the box and density written by [`fit_stage`].
pub fn load_fit(cfg: &ExperimentConfig) -> HarnessResult<(CoordinateMap, Ftn)> {
    let a = Artifacts::new(cfg);
    let bounds = AffineBox::load(&require(a.bounds(), "fit")?).map_err(HarnessError::stage("fit"))?;
    let density = Ftn::load(&require(a.density(), "fit")?).map_err(HarnessError::stage("fit"))?;
    let map = CoordinateMap {
        spatial_dim: cfg.sim.spatial_dim,
        bounds,
    };
    Ok((map, density))
}

pub struct ObsOutcome {
    pub metrics: Metrics,
    pub scalars: Vec<ScalarResult>,
    pub correlation: CorrelationResult,
}

fn correlation_metrics(
    cfg: &ExperimentConfig,
    est: &Estimator,
    map: &CoordinateMap,
    batch: &SampleMatrix,
) -> dkfhtw_core::Result<CorrelationResult> {
    let target = cfg.correlation_target();
    let mut r = correlation_with(est, map, target)?;
    let reference = mc_reference(batch, cfg.sim.spatial_dim, target)?;
    r.metrics = Some(metrics(&r.predicted, &reference, &r.flagged)?);
    r.reference = Some(reference);
    Ok(r)
}

/// Scalar observables and the correlation matrix against the batch.
pub fn observables_stage(
    cfg: &ExperimentConfig,
    batch: &SampleMatrix,
    map: &CoordinateMap,
    density: &Ftn,
) -> HarnessResult<ObsOutcome> {
    let a = Artifacts::new(cfg);
    let stage = HarnessError::stage;
    let est = Estimator::new(density, map, &cfg.obs.interpolation).map_err(stage("observables"))?;
    let scalars = cfg
        .obs
        .scalars
        .iter()
        .map(|&k| {
            let predicted = est.expectation(k)?;
            let reference = mc_expectation(batch, k)?;
            Ok(ScalarResult::new(k.name(), predicted, reference))
        })
        .collect::<dkfhtw_core::Result<Vec<_>>>()
        .map_err(stage("observables"))?;
    let correlation = correlation_metrics(cfg, &est, map, batch).map_err(stage("observables"))?;
    std::fs::create_dir_all(&a.out)?;
    correlation.predicted.save_csv(&a.predicted()).map_err(stage("observables"))?;
    if let Some(r) = &correlation.reference {
        r.save_csv(&a.reference()).map_err(stage("observables"))?;
    }
    let metrics = correlation.metrics.clone().expect("metrics were computed");
    write_json(&a.metrics(), &metrics)?;
    write_json(&a.scalars(), &scalars)?;
    Ok(ObsOutcome {
        metrics,
        scalars,
        correlation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    /// `ok` or `failed`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config_hash: String,
    pub sim_config_hash: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<StageTime>,
    pub metrics: Option<Metrics>,
    pub scalars: Vec<ScalarResult>,
    pub diagnostics: Option<SimSummary>,
    pub batch_sha256: Option<String>,
    /// Artifact name to path; only files that exist are listed.
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    fn start(cfg: &ExperimentConfig) -> Self {
        Self {
            name: cfg.name.clone(),
            status: "running".into(),
            failed_stage: None,
            error: None,
            config_hash: cfg.hash(),
            sim_config_hash: cfg.sim.config_hash(),
            seed: cfg.sim.seed,
            started_unix: now_unix(),
            finished_unix: 0.0,
            stages: Vec::new(),
            metrics: None,
            scalars: Vec::new(),
            diagnostics: None,
            batch_sha256: None,
            artifacts: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> HarnessResult<T>) -> HarnessResult<T> {
        let t = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        if out.is_err() {
            self.failed_stage = Some(stage.into());
        }
        out
    }

    fn artifact(&mut self, key: &str, path: PathBuf) {
        if path.exists() {
            self.artifacts.insert(key.into(), path);
        }
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        read_json(path)
    }
}

fn run_stages(cfg: &ExperimentConfig, m: &mut RunManifest) -> HarnessResult<()> {
    let a = Artifacts::new(cfg);
    m.diagnostics = Some(m.time("simulate", || simulate_stage(cfg))?);
    m.artifact("batch", a.eval_batch.clone());
    m.artifact("batch_manifest", a.batch_manifest());
    let batch = load_batch(cfg)?;
    m.batch_sha256 = Some(file_sha256(&a.eval_batch)?);
    let fit = m.time("fit", || fit_stage(cfg, &batch))?;
    m.artifact("box", a.bounds());
    m.artifact("density", a.density());
    m.artifact("fit_report", a.fit_report());
    let obs = m.time("observables", || observables_stage(cfg, &batch, &fit.map, &fit.density))?;
    m.metrics = Some(obs.metrics);
    m.scalars = obs.scalars;
    m.artifact("correlation_predicted", a.predicted());
    m.artifact("correlation_reference", a.reference());
    m.artifact("metrics", a.metrics());
    m.artifact("scalars", a.scalars());
    Ok(())
}

/// Full pipeline at `eval_time`. The manifest is written even when a stage
/// fails, with the failure recorded in it.
pub fn run(cfg: &ExperimentConfig) -> HarnessResult<RunManifest> {
    cfg.validate()?;
    let a = Artifacts::new(cfg);
    std::fs::create_dir_all(&a.out)?;
    let mut m = RunManifest::start(cfg);
    let result = run_stages(cfg, &mut m);
    m.finished_unix = now_unix();
    match &result {
        Ok(()) => m.status = "ok".into(),
        Err(e) => {
            m.status = "failed".into();
            m.error = Some(e.to_string());
        }
    }
    write_json(&a.manifest(), &m)?;
    result.map(|()| m)
}

/// One row of the sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub varied_param: String,
    pub value: usize,
    pub max_err: f64,
    pub mean_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub varied_param: String,
    pub value: usize,
    pub r: usize,
    pub q: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    pub batch_sha256: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config_hash: String,
    pub batch: PathBuf,
    pub cells: Vec<SweepCell>,
}

impl SweepManifest {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .map(|c| SweepRow {
                varied_param: c.varied_param.clone(),
                value: c.value,
                max_err: c.metrics.as_ref().map_or(f64::NAN, |m| m.max_err),
                mean_err: c.metrics.as_ref().map_or(f64::NAN, |m| m.mean_err),
            })
            .collect()
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> HarnessResult<()> {
    writeln!(w, "varied_param,value,max_err,mean_err")?;
    for r in rows {
        writeln!(w, "{},{},{:?},{:?}", r.varied_param, r.value, r.max_err, r.mean_err)?;
    }
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(r: R) -> HarnessResult<Vec<SweepRow>> {
    let bad = |n: usize, msg: &str| HarnessError::Config(format!("sweep table line {}: {msg}", n + 1));
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "varied_param,value,max_err,mean_err" {
                return Err(bad(n, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(n, "expected 4 fields"));
        }
        out.push(SweepRow {
            varied_param: f[0].to_string(),
            value: f[1].parse().map_err(|_| bad(n, "bad value"))?,
            max_err: f[2].parse().map_err(|_| bad(n, "bad max_err"))?,
            mean_err: f[3].parse().map_err(|_| bad(n, "bad mean_err"))?,
        });
    }
    Ok(out)
}

fn sweep_cell(
    cfg: &ExperimentConfig,
    batch: &SampleMatrix,
    map: &CoordinateMap,
    c: &SampleMatrix,
    fit: &FitConfig,
) -> dkfhtw_core::Result<Metrics> {
    let tree = FhtwTree::new(cfg.sim.levels())?;
    let (p, _) = estimate_density(c, &tree, fit)?;
    let est = Estimator::new(&p, map, &cfg.obs.interpolation)?;
    let r = correlation_metrics(cfg, &est, map, batch)?;
    Ok(r.metrics.expect("metrics were computed"))
}

/// Refits on one shared batch for every `r` (degree fixed) and every `q`
/// (rank fixed). Failed cells become NaN rows.
pub fn sweep(cfg: &ExperimentConfig, parallel: bool) -> HarnessResult<SweepManifest> {
    cfg.validate()?;
    let spec = cfg.sweep_spec()?;
    let a = Artifacts::new(cfg);
    std::fs::create_dir_all(&a.out)?;
    simulate_stage(cfg)?;
    let batch = load_batch(cfg)?;
    let sha = file_sha256(&a.eval_batch)?;
    let (map, c) = CoordinateMap::fit(&batch, cfg.sim.spatial_dim).map_err(HarnessError::stage("transform"))?;

    let q_fixed = spec.q_fixed.unwrap_or(cfg.fit.q);
    let r_fixed = spec.r_fixed.unwrap_or(SWEEP_FIXED_RANK);
    let plan: Vec<(&str, usize, usize, usize)> = spec
        .r
        .iter()
        .map(|&r| ("r", r, r, q_fixed))
        .chain(spec.q.iter().map(|&q| ("q", q, r_fixed, q)))
        .collect();
    let one = |&(param, value, r, q): &(&str, usize, usize, usize)| {
        let t = Instant::now();
        let fit = FitConfig {
            rmax: r,
            q,
            ..cfg.fit.clone()
        };
        let result = sweep_cell(cfg, &batch, &map, &c, &fit);
        if let Err(e) = &result {
            log::warn!("sweep cell {param} = {value} failed: {e}");
        }
        SweepCell {
            varied_param: param.into(),
            value,
            r,
            q,
            error: result.as_ref().err().map(|e| e.to_string()),
            metrics: result.ok(),
            batch_sha256: sha.clone(),
            seconds: t.elapsed().as_secs_f64(),
        }
    };
    let cells: Vec<SweepCell> = if parallel {
        plan.par_iter().map(one).collect()
    } else {
        plan.iter().map(one).collect()
    };
    let manifest = SweepManifest {
        config_hash: cfg.hash(),
        batch: a.eval_batch.clone(),
        cells,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(a.sweep_table())?);
    write_sweep_csv(&manifest.rows(), &mut f)?;
    f.flush()?;
    write_json(&a.sweep_manifest(), &manifest)?;
    Ok(manifest)
}

/// One line of the `reproduce` summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub preset: String,
    pub status: String,
    pub max_err: f64,
    pub mean_err: f64,
    pub shannon_rel_err: f64,
    pub renyi2_rel_err: f64,
    pub error: Option<String>,
}

fn scalar_error(m: &RunManifest, kind: ObservableKind) -> f64 {
    m.scalars
        .iter()
        .find(|s| s.name == kind.name())
        .map_or(f64::NAN, |s| s.rel_error)
}

/// Runs every config (and its sweep, when it has one) and writes
/// `summary.csv` and `summary.json` into `out`. Failures are recorded and
/// the remaining configs still run.
pub fn reproduce_with(configs: &[ExperimentConfig], out: &Path) -> HarnessResult<Vec<SummaryRow>> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for cfg in configs {
        log::info!("reproducing {}", cfg.name);
        let row = match run(cfg) {
            Ok(m) => SummaryRow {
                preset: cfg.name.clone(),
                status: "ok".into(),
                max_err: m.metrics.as_ref().map_or(f64::NAN, |x| x.max_err),
                mean_err: m.metrics.as_ref().map_or(f64::NAN, |x| x.mean_err),
                shannon_rel_err: scalar_error(&m, ObservableKind::Shannon),
                renyi2_rel_err: scalar_error(&m, ObservableKind::Renyi2),
                error: None,
            },
            Err(e) => {
                log::error!("{}: {e}", cfg.name);
                SummaryRow {
                    preset: cfg.name.clone(),
                    status: "failed".into(),
                    max_err: f64::NAN,
                    mean_err: f64::NAN,
                    shannon_rel_err: f64::NAN,
                    renyi2_rel_err: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
        if cfg.sweep.is_some() {
            let mut s = cfg.clone();
            s.cache_dir = Some(cfg.cache_root());
            s.output_dir = out.join(format!("{}_sweep", cfg.name));
            if let Err(e) = sweep(&s, false) {
                log::error!("{} sweep: {e}", cfg.name);
            }
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("summary.csv"))?);
    writeln!(f, "preset,status,max_err,mean_err,shannon_rel_err,renyi2_rel_err")?;
    for r in &rows {
        writeln!(
            f,
            "{},{},{:?},{:?},{:?},{:?}",
            r.preset, r.status, r.max_err, r.mean_err, r.shannon_rel_err, r.renyi2_rel_err
        )?;
    }
    f.flush()?;
    write_json(&out.join("summary.json"), &rows)?;
    Ok(rows)
}

/// The four presets under `out/<preset>`.
pub fn reproduce(out: &Path, seed: Option<u64>) -> HarnessResult<Vec<SummaryRow>> {
    let configs = crate::config::PRESETS
        .iter()
        .map(|name| {
            let mut c = ExperimentConfig::preset(name)?;
            c.output_dir = out.join(name);
            if let Some(s) = seed {
                c.set_seed(s);
            }
            Ok(c)
        })
        .collect::<HarnessResult<Vec<_>>>()?;
    reproduce_with(&configs, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_round_trip() {
        let rows = vec![
            SweepRow {
                varied_param: "r".into(),
                value: 5,
                max_err: 0.1234567890123,
                mean_err: 1e-3 / 3.0,
            },
            SweepRow {
                varied_param: "q".into(),
                value: 30,
                max_err: f64::NAN,
                mean_err: f64::NAN,
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let back = read_sweep_csv(&buf[..]).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].max_err.is_nan() && back[1].value == 30);
        assert!(read_sweep_csv(&b"a,b\n"[..]).is_err());
    }

    #[test]
    fn batch_location_follows_the_sim_hash() {
        let mut c = ExperimentConfig::preset("1d_no_potential").unwrap();
        let a = Artifacts::new(&c);
        assert!(a.eval_batch.ends_with("batch_t0.5.csv"));
        c.fit.q = 10;
        assert_eq!(Artifacts::new(&c).batch_dir, a.batch_dir);
        c.sim.seed = 2;
        assert_ne!(Artifacts::new(&c).batch_dir, a.batch_dir);
    }
}
