//! Bookkeeping for the acceptance run in `tests/acceptance.rs`.

use std::time::Instant;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: String,
    pub passed: bool,
    pub summary: String,
}

/// Collects verdicts and prints one line per criterion as it finishes.
#[derive(Debug, Default)]
pub struct Report {
    verdicts: Vec<Verdict>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `check`, which returns `(passed, summary)`, and prints its line.
    pub fn run(&mut self, id: &str, title: &str, check: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (passed, summary) = check();
        let tag = if passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} [{id}] {title}: {summary} ({:.1} s)",
            start.elapsed().as_secs_f64()
        );
        self.verdicts.push(Verdict {
            id: id.into(),
            passed,
            summary,
        });
    }

    /// Extra measurements that do not decide a criterion.
    pub fn info(&self, id: &str, text: &str) {
        println!("     [{id}] info: {text}");
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
