//! Result bookkeeping for the acceptance run.
//!
//! Each criterion produces one line, `PASS` or `FAIL`, followed by its name,
//! its runtime and a short detail. Details that list several offending
//! points go on indented continuation lines.

use std::io::Write;
use std::time::Duration;

#[derive(Debug, Default)]
pub struct Report {
    failed: Vec<String>,
    total: usize,
    quiet: bool,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Collects results without printing.
    pub fn quiet() -> Self {
        Report {
            quiet: true,
            ..Self::default()
        }
    }

    /// Prints the line immediately so a slow criterion shows progress.
    pub fn record(&mut self, name: &str, pass: bool, elapsed: Duration, detail: &str, extra: &[String]) {
        self.total += 1;
        if !pass {
            self.failed.push(name.to_string());
        }
        if self.quiet {
            return;
        }
        let mut out = std::io::stdout().lock();
        let status = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} {name} [{:.2}s] {detail}", elapsed.as_secs_f64());
        for line in extra {
            let _ = writeln!(out, "       {line}");
        }
        let _ = out.flush();
    }

    pub fn failed(&self) -> &[String] {
        &self.failed
    }

    pub fn summary(&self) -> String {
        format!("{} of {} criteria passed", self.total - self.failed.len(), self.total)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
