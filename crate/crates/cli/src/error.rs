use std::path::PathBuf;

use dkfhtw_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {}: run the `{producer}` stage first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> Self {
        move |source| HarnessError::Stage { stage, source }
    }

    /// 2 for bad input, 3 for everything that failed while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::MissingArtifact { .. } => EXIT_CONFIG,
            HarnessError::Stage { source, .. } | HarnessError::Core(source) => core_exit_code(source),
            HarnessError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Config(_) | CoreError::Format(_) | CoreError::Json(_) | CoreError::UnsupportedSize(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_NUMERICAL,
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
        let div = CoreError::BatchDivergence {
            diverged: 9,
            total: 10,
            budget: 0,
        };
        assert_eq!(HarnessError::stage("simulate")(div).exit_code(), 3);
        let bad = CoreError::Config("dt".into());
        assert_eq!(HarnessError::from(bad).exit_code(), 2);
        let missing = HarnessError::MissingArtifact {
            path: "out/density.json".into(),
            producer: "fit",
        };
        assert_eq!(missing.exit_code(), 2);
        assert!(missing.to_string().contains("out/density.json"));
    }
}
