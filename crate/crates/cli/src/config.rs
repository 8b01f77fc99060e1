//! Experiment configuration files and the named presets.

use std::path::{Path, PathBuf};

use dkfhtw_core::fv_sim::{ExternalPotential, InitialCondition, PairPotential, PotentialSpec, SimConfig};
use dkfhtw_core::observables::{CorrelationTarget, ObsConfig, ObservableKind};
use dkfhtw_core::sketch::FitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

pub const PRESETS: [&str; 4] = ["1d_no_potential", "1d_potential", "2d_no_potential", "2d_potential"];

/// Rank used for the `q` half of a sweep unless configured.
pub const SWEEP_FIXED_RANK: usize = 15;

fn default_name() -> String {
    "experiment".into()
}

fn default_eval_time() -> f64 {
    0.5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_scalars() -> Vec<ObservableKind> {
    vec![ObservableKind::Shannon, ObservableKind::Renyi2]
}

/// Which observables to report and how to interpolate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSpec {
    #[serde(default)]
    pub interpolation: ObsConfig,
    /// Scalar observables compared against their batch means.
    #[serde(default = "default_scalars")]
    pub scalars: Vec<ObservableKind>,
    /// Full matrix in 1D and the slice against cell (4, 4) in 2D when unset.
    #[serde(default)]
    pub correlation: Option<CorrelationTarget>,
}

impl Default for ObsSpec {
    fn default() -> Self {
        Self {
            interpolation: ObsConfig::default(),
            scalars: default_scalars(),
            correlation: None,
        }
    }
}

/// Rank and degree grids of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub r: Vec<usize>,
    #[serde(default)]
    pub q: Vec<usize>,
    /// Degree held fixed while `r` varies; `fit.q` when unset.
    #[serde(default)]
    pub q_fixed: Option<usize>,
    /// Rank held fixed while `q` varies; 15 when unset.
    #[serde(default)]
    pub r_fixed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub sim: SimConfig,
    pub fit: FitConfig,
    #[serde(default)]
    pub obs: ObsSpec,
    /// Checkpoint whose batch is fitted.
    #[serde(default = "default_eval_time")]
    pub eval_time: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Root of the batch cache; `<output_dir>/batches` when unset.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Reads a TOML or JSON file, chosen by extension (TOML otherwise).
    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> HarnessResult<()> {
        self.sim.validate()?;
        self.fit.validate()?;
        if self.obs.interpolation.r_obs == 0 {
            return Err(HarnessError::Config("obs.interpolation.r_obs must be at least 1".into()));
        }
        if !self
            .sim
            .checkpoints
            .iter()
            .any(|&t| (t - self.eval_time).abs() <= 1e-12 * t.abs().max(1.0))
        {
            return Err(HarnessError::Config(format!(
                "eval_time {} is not one of the checkpoints {:?}",
                self.eval_time, self.sim.checkpoints
            )));
        }
        Ok(())
    }

    /// Sweep lists, required to be present and non-empty.
    pub fn sweep_spec(&self) -> HarnessResult<&SweepSpec> {
        match &self.sweep {
            Some(s) if !(s.r.is_empty() && s.q.is_empty()) => Ok(s),
            Some(_) => Err(HarnessError::Config("sweep.r and sweep.q are both empty".into())),
            None => Err(HarnessError::Config("missing [sweep] section".into())),
        }
    }

    pub fn correlation_target(&self) -> CorrelationTarget {
        self.obs
            .correlation
            .unwrap_or_else(|| CorrelationTarget::default_for(self.sim.spatial_dim))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("batches"))
    }

    /// Overrides the simulation and sketch seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.sim.seed = seed;
        self.fit.seed = seed;
    }

    /// One of [`PRESETS`], writing into `output_dir/<name>`.
    pub fn preset(name: &str) -> HarnessResult<Self> {
        let (spatial_dim, m, b, q) = match name {
            "1d_no_potential" | "1d_potential" => (1, 64, 6000, 25),
            "2d_no_potential" | "2d_potential" => (2, 8, 12000, 15),
            _ => {
                return Err(HarnessError::Config(format!(
                    "unknown preset `{name}`; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let (dt, potential) = match name {
            "1d_no_potential" => (0.005, PotentialSpec::default()),
            "1d_potential" => (0.0002, well_and_repulsion(6.0, 0.01)),
            "2d_no_potential" => (0.001, PotentialSpec::default()),
            // 0.0003 does not divide T = 1; this is the largest step below it that does
            _ => (1.0 / 3334.0, well_and_repulsion(800.0, 0.1)),
        };
        let sim = SimConfig {
            spatial_dim,
            m,
            beta: 0.05,
            n_particles: 1000.0,
            dt,
            horizon: 1.0,
            n_trajectories: b,
            clamp: 5.0,
            potential,
            seed: 1,
            checkpoints: vec![0.5, 1.0],
            initial: InitialCondition::Uniform,
        };
        let sweep = (name == "1d_no_potential").then(|| SweepSpec {
            r: vec![5, 10, 15, 20],
            q: vec![10, 15, 20, 25, 30],
            q_fixed: Some(25),
            r_fixed: Some(SWEEP_FIXED_RANK),
        });
        Ok(Self {
            name: name.into(),
            sim,
            fit: FitConfig::density(20, q),
            obs: ObsSpec::default(),
            eval_time: 0.5,
            output_dir: default_output_dir().join(name),
            cache_dir: None,
            sweep,
        })
    }
}

fn well_and_repulsion(strength: f64, softening: f64) -> PotentialSpec {
    PotentialSpec {
        external: Some(ExternalPotential::CosineWell { amplitude: 15.0 }),
        pairwise: Some(PairPotential { strength, softening }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_follow_the_parameter_table() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.sim.d(), 64);
            assert_eq!((c.sim.beta, c.sim.n_particles, c.sim.horizon), (0.05, 1000.0, 1.0));
            assert_eq!(c.fit.rmax, 20);
            assert_eq!((c.obs.interpolation.q_obs, c.obs.interpolation.r_obs), (6, 5));
            assert_eq!(c.eval_time, 0.5);
        }
        let p = ExperimentConfig::preset("1d_potential").unwrap();
        assert_eq!((p.sim.dt, p.sim.n_trajectories, p.fit.q), (0.0002, 6000, 25));
        let p = ExperimentConfig::preset("2d_no_potential").unwrap();
        assert_eq!((p.sim.dt, p.sim.n_trajectories, p.fit.q, p.sim.m), (0.001, 12000, 15, 8));
        let p = ExperimentConfig::preset("2d_potential").unwrap();
        assert!((p.sim.dt - 0.0003).abs() < 1e-6 && p.sim.n_steps() == 3334);
        assert!(ExperimentConfig::preset("3d").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::preset("1d_no_potential").unwrap();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn eval_time_must_be_a_checkpoint() {
        let mut c = ExperimentConfig::preset("1d_no_potential").unwrap();
        c.eval_time = 0.25;
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn sweep_needs_a_list() {
        let mut c = ExperimentConfig::preset("2d_no_potential").unwrap();
        assert!(c.sweep_spec().is_err());
        c.sweep = Some(SweepSpec {
            r: vec![],
            q: vec![],
            q_fixed: None,
            r_fixed: None,
        });
        assert!(c.sweep_spec().is_err());
    }

    #[test]
    fn missing_key_is_named() {
        let mut c = ExperimentConfig::preset("1d_no_potential").unwrap().to_toml();
        c = c.lines().filter(|l| !l.starts_with("beta")).collect::<Vec<_>>().join("\n");
        let err = toml::from_str::<ExperimentConfig>(&c).unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
    }
}
