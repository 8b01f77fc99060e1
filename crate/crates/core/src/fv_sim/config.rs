use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_clamp() -> f64 {
    5.0
}

/// Grid, physics and time-stepping parameters of one simulation campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// 1 or 2.
    pub spatial_dim: usize,
    /// Cells per dimension, a power of two.
    pub m: usize,
    /// Inverse temperature.
    pub beta: f64,
    /// Effective particle count N, the noise strength denominator.
    pub n_particles: f64,
    pub dt: f64,
    /// Terminal time T.
    #[serde(alias = "T")]
    pub horizon: f64,
    /// Number of independent trajectories B.
    #[serde(alias = "B")]
    pub n_trajectories: usize,
    /// Normal draws are clamped to `[-clamp, clamp]`.
    #[serde(default = "default_clamp")]
    pub clamp: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub seed: u64,
    /// Times at which the batch is recorded; each must be a multiple of `dt`.
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub initial: InitialCondition,
}

/// External and pairwise potentials. In 2D both act as a sum of the same
/// one-dimensional profile along each axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub external: Option<ExternalPotential>,
    #[serde(default)]
    pub pairwise: Option<PairPotential>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExternalPotential {
    /// `V1(x) = -amplitude * cos(2π (x - 1/2))`.
    CosineWell { amplitude: f64 },
}

/// Regularized repulsion `V2(x) = strength / (x² + softening)` of the periodic
/// distance `x = min(|z - z'|, 1 - |z - z'|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPotential {
    pub strength: f64,
    pub softening: f64,
}

/// Initial density `π(x, 0)`, sampled at cell midpoints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Uniform,
    /// `1 + amplitude * cos(2π k x)` (product of cosines in 2D).
    Cosine { amplitude: f64, wavenumber: u32 },
}

impl PotentialSpec {
    pub fn is_none(&self) -> bool {
        self.external.is_none() && self.pairwise.is_none()
    }

    pub fn cosine_well(amplitude: f64) -> Self {
        Self {
            external: Some(ExternalPotential::CosineWell { amplitude }),
            pairwise: None,
        }
    }
}

impl ExternalPotential {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ExternalPotential::CosineWell { amplitude } => {
                -amplitude * (2.0 * std::f64::consts::PI * (x - 0.5)).cos()
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ExternalPotential::CosineWell { amplitude } => {
                let w = 2.0 * std::f64::consts::PI;
                amplitude * w * (w * (x - 0.5)).sin()
            }
        }
    }
}

impl PairPotential {
    pub fn value(&self, dist: f64) -> f64 {
        self.strength / (dist * dist + self.softening)
    }

    /// Derivative with respect to the signed displacement `z ∈ (-1, 1)`,
    /// through the periodic distance. Zero at the kinks `z = 0` and `|z| = 1/2`.
    pub fn displacement_derivative(&self, z: f64) -> f64 {
        let a = z.abs();
        let (dist, sign) = if a < 0.5 {
            (a, z.signum())
        } else if a > 0.5 {
            (1.0 - a, -z.signum())
        } else {
            return 0.0;
        };
        if a == 0.0 {
            return 0.0;
        }
        let denom = dist * dist + self.softening;
        -sign * 2.0 * self.strength * dist / (denom * denom)
    }
}

fn is_multiple(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    if k < 0.0 || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        None
    } else {
        Some(k as usize)
    }
}

impl SimConfig {
    /// Total number of cells `d` (`m` in 1D, `m²` in 2D).
    pub fn d(&self) -> usize {
        self.m.pow(self.spatial_dim as u32)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Wavelet level count `L` with `d = 2^L`.
    pub fn levels(&self) -> usize {
        self.d().trailing_zeros() as usize
    }

    /// Number of time steps `K = T / dt`.
    pub fn n_steps(&self) -> usize {
        is_multiple(self.horizon, self.dt).unwrap_or(0)
    }

    /// Step index of every checkpoint, in the configured order.
    pub fn checkpoint_steps(&self) -> Result<Vec<usize>> {
        self.checkpoints
            .iter()
            .map(|&t| {
                is_multiple(t, self.dt)
                    .filter(|&k| k <= self.n_steps())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "checkpoint {t} is not a multiple of dt = {} within [0, {}]",
                            self.dt, self.horizon
                        ))
                    })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.spatial_dim != 1 && self.spatial_dim != 2 {
            return bad(format!("spatial_dim must be 1 or 2, got {}", self.spatial_dim));
        }
        if !self.m.is_power_of_two() || self.m < 2 {
            return bad(format!("m must be a power of two >= 2, got {}", self.m));
        }
        if self.levels() < 2 {
            return bad(format!("need at least 4 cells in total, got {}", self.d()));
        }
        if self.spatial_dim == 1 && self.m < 4 {
            return bad("1D grids need m >= 4".into());
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.n_particles > 0.0) {
            return bad(format!("n_particles must be positive, got {}", self.n_particles));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad("dt and horizon must be positive".into());
        }
        if is_multiple(self.horizon, self.dt).map_or(true, |k| k == 0) {
            return bad(format!(
                "dt = {} does not divide horizon = {} into an integer number of steps",
                self.dt, self.horizon
            ));
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be at least 1".into());
        }
        if !(self.clamp > 0.0) {
            return bad(format!("clamp must be positive, got {}", self.clamp));
        }
        if self.checkpoints.is_empty() {
            return bad("at least one checkpoint is required".into());
        }
        if let Some(p) = &self.potential.pairwise {
            if !(p.softening > 0.0) {
                return bad(format!("softening must be positive, got {}", p.softening));
            }
        }
        self.checkpoint_steps()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
