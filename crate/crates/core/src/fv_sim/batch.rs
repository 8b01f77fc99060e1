use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::stepper::{GridState, NoiseStats, Simulator};
use crate::{Error, Result, SampleMatrix};

/// Fraction of trajectories allowed to diverge before the whole batch fails.
pub const DIVERGENCE_BUDGET: f64 = 0.01;

/// Stable-regime diagnostics of one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    /// Clamped draws over all draws, for the whole run up to the horizon.
    pub clamp_rate: f64,
    /// Smallest cell mass over every sample of the batch.
    pub pi_min: f64,
    /// Largest `|h^n ΣΠ - 1|` seen at any step of any kept trajectory.
    pub max_mass_error: f64,
    /// Number of trajectories dropped for divergence.
    pub diverged: usize,
}

/// Cell-mass samples `π^{(b)}(t)` at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub t: f64,
    /// `B × d`, one row per surviving trajectory.
    pub samples: SampleMatrix,
    pub diagnostics: BatchDiagnostics,
}

/// Everything produced by [`simulate_batch`].
#[derive(Debug, Clone)]
pub struct BatchRun {
    /// One batch per checkpoint, in configuration order.
    pub batches: Vec<TrajectoryBatch>,
    /// Indices of trajectories excluded for divergence.
    pub diverged: Vec<usize>,
    pub noise: NoiseStats,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifestEntry {
    pub t: f64,
    pub file: String,
    pub n_samples: usize,
    pub clamp_rate: f64,
    pub pi_min: f64,
    pub max_mass_error: f64,
}

/// JSON companion of the batch CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub seed: u64,
    pub config_hash: String,
    pub n_trajectories: usize,
    pub diverged: usize,
    pub clamp_rate: f64,
    pub checkpoints: Vec<BatchManifestEntry>,
}

struct Trajectory {
    snapshots: Vec<Vec<f64>>,
    noise: NoiseStats,
    max_mass_error: f64,
}

/// Integrates one trajectory, recording cell masses at the given step
/// indices. `fill` supplies each step's clamped normals.
fn integrate<F>(sim: &Simulator, record_at: &[usize], mut fill: F) -> Result<Trajectory>
where
    F: FnMut(&mut [f64], &mut NoiseStats),
{
    let cfg = sim.config();
    let k_max = cfg.n_steps();
    let mut state: GridState = sim.initial_state();
    let mut noise = vec![0.0; sim.draws_per_step()];
    let mut stats = NoiseStats::default();
    let mut snapshots = vec![Vec::new(); record_at.len()];
    let mut max_mass_error = sim.mass_error(&state);
    for k in 0..=k_max {
        for (slot, &s) in snapshots.iter_mut().zip(record_at) {
            if s == k {
                *slot = sim.cell_masses(&state);
            }
        }
        if k == k_max {
            break;
        }
        fill(&mut noise, &mut stats);
        state = sim.step_with_noise(&state, &noise)?;
        max_mass_error = max_mass_error.max(sim.mass_error(&state));
    }
    Ok(Trajectory {
        snapshots,
        noise: stats,
        max_mass_error,
    })
}

/// RNG stream of trajectory `index`: the seed selects the key, the index the
/// stream, so streams never overlap and do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates `B` independent trajectories from the configured initial state.
///
/// Trajectories run on the current rayon pool and are merged in index order,
/// so the result is identical for any worker count.
pub fn simulate_batch(cfg: &SimConfig) -> Result<BatchRun> {
    let sim = Simulator::new(cfg)?;
    let record_at = cfg.checkpoint_steps()?;
    let outcomes: Vec<Result<Trajectory>> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|b| {
            let mut rng = trajectory_rng(cfg.seed, b);
            integrate(&sim, &record_at, |noise, stats| sim.draw_noise(&mut rng, noise, stats))
        })
        .collect();

    let mut kept = Vec::with_capacity(outcomes.len());
    let mut diverged = Vec::new();
    let mut noise = NoiseStats::default();
    for (b, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(tr) => {
                noise.merge(tr.noise);
                kept.push(tr);
            }
            Err(Error::Divergence { step, cell, reason }) => {
                log::warn!("trajectory {b} diverged at step {step}, cell {cell}: {reason}");
                diverged.push(b);
            }
            Err(e) => return Err(e),
        }
    }
    let total = cfg.n_trajectories;
    if diverged.len() as f64 > DIVERGENCE_BUDGET * total as f64 || kept.is_empty() {
        return Err(Error::BatchDivergence {
            diverged: diverged.len(),
            total,
            budget: (DIVERGENCE_BUDGET * total as f64) as usize,
        });
    }

    let max_mass_error = kept.iter().map(|t| t.max_mass_error).fold(0.0, f64::max);
    let d = cfg.d();
    let batches = cfg
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut data = Vec::with_capacity(kept.len() * d);
            for tr in &kept {
                data.extend_from_slice(&tr.snapshots[i]);
            }
            let pi_min = data.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(TrajectoryBatch {
                t,
                samples: SampleMatrix::new(d, data)?,
                diagnostics: BatchDiagnostics {
                    clamp_rate: noise.rate(),
                    pi_min,
                    max_mass_error,
                    diverged: diverged.len(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchRun {
        batches,
        diverged,
        noise,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
    })
}

/// `batch_t{t}.csv`, with `t` in shortest round-trip form.
pub fn batch_file_name(t: f64) -> String {
    format!("batch_t{t}.csv")
}

/// Column names `pi_1..pi_d`.
pub fn batch_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("pi_{j}")).collect()
}

impl TrajectoryBatch {
    pub fn save_csv(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(batch_file_name(self.t));
        self.samples.save_csv(&path, &batch_header(self.samples.n_cols()))?;
        Ok(path)
    }
}

impl BatchRun {
    /// Writes every checkpoint CSV and `batch_manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<BatchManifest> {
        std::fs::create_dir_all(dir)?;
        let mut checkpoints = Vec::new();
        for b in &self.batches {
            let path = b.save_csv(dir)?;
            checkpoints.push(BatchManifestEntry {
                t: b.t,
                file: path.file_name().unwrap().to_string_lossy().into_owned(),
                n_samples: b.samples.n_rows(),
                clamp_rate: b.diagnostics.clamp_rate,
                pi_min: b.diagnostics.pi_min,
                max_mass_error: b.diagnostics.max_mass_error,
            });
        }
        let manifest = BatchManifest {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            n_trajectories: self.batches.first().map_or(0, |b| b.samples.n_rows()),
            diverged: self.diverged.len(),
            clamp_rate: self.noise.rate(),
            checkpoints,
        };
        let f = std::fs::File::create(dir.join("batch_manifest.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &manifest)?;
        Ok(manifest)
    }
}

/// Reads a batch CSV, checking the `pi_1..pi_d` header.
pub fn read_batch_csv(path: &Path) -> Result<SampleMatrix> {
    let (m, header) = SampleMatrix::load_csv(path)?;
    if header != batch_header(m.n_cols()) {
        return Err(Error::Format(format!(
            "{}: header is not pi_1..pi_{}",
            path.display(),
            m.n_cols()
        )));
    }
    Ok(m)
}
