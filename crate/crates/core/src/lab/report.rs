//! Experiment reports: seeded, parameterized, and bit-reproducible. JSON
//! carries full provenance; CSV is plot-ready with one row per sweep point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One sweep point: a depth, a T, an ε, a resolution, or a C value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    /// Sweep axis name.
    pub label: String,
    /// Sweep value.
    pub x: f64,
    /// Raw event count behind the estimate; 0 when not count-based.
    pub count: u64,
    pub estimate: f64,
    /// Binomial (or propagated) standard deviation; 0 for exact values.
    pub sigma: f64,
    /// Declared bound for this row, when one applies.
    pub bound: Option<f64>,
    /// Row verdict against the bound, when one applies.
    pub within: Option<bool>,
}

/// Least-squares summary for log-log or linear fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Declared parameters, in key order.
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub samples: usize,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<FitSummary>,
    /// Logged events: discarded samples, budget exhaustions, etc.
    pub notes: Vec<String>,
    /// Human-readable statement of the pass/fail gate.
    pub gate: String,
    pub pass: bool,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, samples: usize) -> ExperimentReport {
        ExperimentReport {
            experiment: experiment.to_owned(),
            params: BTreeMap::new(),
            seed,
            samples,
            rows: Vec::new(),
            fits: Vec::new(),
            notes: Vec::new(),
            gate: String::new(),
            pass: false,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.insert(key.to_owned(), value.to_string());
    }

    pub fn note(&mut self, text: impl ToString) {
        self.notes.push(text.to_string());
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<ExperimentReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One CSV row per sweep point. Floats print in shortest round-trip
    /// form, so equal seeds give byte-identical output.
    pub fn csv(&self) -> String {
        let mut out = String::from("experiment,label,x,count,samples,estimate,sigma,bound,within\n");
        for row in &self.rows {
            let bound = row.bound.map(|b| b.to_string()).unwrap_or_default();
            let within = row
                .within
                .map(|w| w.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.experiment,
                row.label,
                row.x,
                row.count,
                self.samples,
                row.estimate,
                row.sigma,
                bound,
                within
            )
            .expect("write to string");
        }
        out
    }
}

/// Standard deviation of a binomial proportion estimate.
pub fn binomial_sigma(p_hat: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Count-based row with binomial sigma and an optional upper bound checked
/// at 3σ.
pub fn binomial_row(
    label: &str,
    x: f64,
    hits: u64,
    n: usize,
    bound: Option<f64>,
) -> ReportRow {
    let estimate = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let sigma = binomial_sigma(estimate, n);
    let within = bound.map(|b| estimate <= b + 3.0 * sigma);
    ReportRow {
        label: label.to_owned(),
        x,
        count: hits,
        estimate,
        sigma,
        bound,
        within,
    }
}

/// Ordinary least squares y = slope·x + intercept with R² and the slope's
/// standard error.
pub fn fit_linear(name: &str, xs: &[f64], ys: &[f64]) -> FitSummary {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "fit needs at least two points");
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    FitSummary {
        name: name.to_owned(),
        slope,
        intercept,
        r_squared,
        slope_stderr,
        points: n,
    }
}

/// Least squares in log-log coordinates; callers supply raw positive data.
pub fn fit_log_log(name: &str, xs: &[f64], ys: &[f64]) -> FitSummary {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_linear(name, &lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_fits_perfectly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [5.0, 7.0, 9.0, 11.0];
        let fit = fit_linear("line", &xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-10);
    }

    #[test]
    fn power_law_recovered_in_log_log() {
        let xs = [2.0f64, 4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x.powf(-1.5)).collect();
        let fit = fit_log_log("tail", &xs, &ys);
        assert!((fit.slope + 1.5).abs() < 1e-10);
        assert!((fit.intercept.exp() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn binomial_rows_carry_three_sigma_verdicts() {
        let row = binomial_row("T", 2.0, 450, 1000, Some(0.5));
        assert_eq!(row.count, 450);
        assert!((row.estimate - 0.45).abs() < 1e-12);
        assert_eq!(row.within, Some(true));
        let tight = binomial_row("T", 2.0, 700, 1000, Some(0.5));
        assert_eq!(tight.within, Some(false));
        assert_eq!(binomial_row("x", 0.0, 0, 0, None).estimate, 0.0);
    }

    #[test]
    fn csv_and_json_round_trip_deterministically() {
        let mut report = ExperimentReport::new("demo", 42, 1000);
        report.param("depth", 10);
        report.param("backend", "rational");
        report.rows.push(binomial_row("T", 2.0, 450, 1000, Some(0.5)));
        report.rows.push(binomial_row("T", 4.0, 200, 1000, None));
        report.fits.push(fit_linear("line", &[1.0, 2.0], &[1.0, 2.0]));
        report.gate = "estimate <= bound + 3 sigma".into();
        report.pass = true;
        let csv1 = report.csv();
        let csv2 = report.csv();
        assert_eq!(csv1, csv2);
        assert!(csv1.starts_with("experiment,label,x,count,samples,"));
        assert_eq!(csv1.lines().count(), 3);
        let back = ExperimentReport::from_json(&report.json()).unwrap();
        assert_eq!(back.csv(), csv1);
        assert_eq!(back.params["depth"], "10");
    }
}
