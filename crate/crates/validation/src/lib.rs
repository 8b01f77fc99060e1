//! Bookkeeping for the acceptance suite: each criterion runs in isolation,
//! panics are caught, and the outcome prints as one line.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {} ({}): {} [{:.1} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

/// Runs `f`, which reports whether the criterion holds and a one-line
/// summary. Errors and panics count as failures.
pub fn check<F>(id: u32, title: &'static str, f: F) -> Outcome
where
    F: FnOnce() -> Result<(bool, String), String>,
{
    let t = Instant::now();
    let (passed, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    Outcome {
        id,
        title,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcomes_capture_errors_and_panics() {
        let ok = check(1, "ok", || Ok((true, "fine".into())));
        assert!(ok.passed);
        assert!(ok.to_string().starts_with("PASS criterion 1 (ok): fine"));
        let err = check(2, "err", || Err("boom".into()));
        assert!(!err.passed && err.detail == "error: boom");
        let hook = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let p = check(3, "panic", || panic!("bad {}", 1));
        std::panic::set_hook(hook);
        assert!(!p.passed && p.detail.contains("bad 1"));
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        assert!((fit_slope(&pts) + 0.5).abs() < 1e-14);
    }
}
