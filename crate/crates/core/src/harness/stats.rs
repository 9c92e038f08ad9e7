use super::{HarnessError, TrialRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Mean with its standard error (sample std / sqrt n); undefined for n < 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (n >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Stat { mean, se, n })
    }

    pub fn se_text(&self) -> String {
        self.se.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub name: String,
    pub metrics: BTreeMap<String, Stat>,
}

/// Metrics that are rates in [0, 1].
pub(crate) const RATE_METRICS: [&str; 5] = ["loc_success", "id_accuracy", "grasp_success", "grasp_oracle", "pipeline_success"];

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

/// Aggregates whichever stage outcomes the records carry.
pub fn summarize(name: impl Into<String>, records: &[TrialRecord]) -> SummaryTable {
    type Pick = fn(&TrialRecord) -> Option<f64>;
    let picks: [(&str, Pick); 10] = [
        ("loc_success", |r| r.loc_success.map(b)),
        ("loc_error", |r| r.loc_error),
        ("perturbation", |r| r.perturbation),
        ("id_accuracy", |r| r.id_correct.map(b)),
        ("tap_points", |r| r.tap_points.map(|v| v as f64)),
        ("taps", |r| r.taps.map(|v| v as f64)),
        ("tap_displacement", |r| r.tap_displacement),
        ("grasp_success", |r| r.grasp_success.map(b)),
        ("grasp_oracle", |r| r.grasp_oracle.map(b)),
        ("pipeline_success", |r| r.success.map(b)),
    ];
    let mut metrics = BTreeMap::new();
    for (key, pick) in picks {
        let xs: Vec<f64> = records.iter().filter_map(pick).filter(|v| v.is_finite()).collect();
        if let Some(s) = Stat::of(&xs) {
            metrics.insert(key.to_string(), s);
        }
    }
    SummaryTable { name: name.into(), metrics }
}

impl SummaryTable {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.mean)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.name);
        let w = self.metrics.keys().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "  {:<w$}  {:>10}  {:>8}  {:>5}", "metric", "mean", "se", "n");
        for (k, s) in &self.metrics {
            let _ = writeln!(out, "  {k:<w$}  {:>10.4}  {:>8}  {:>5}", s.mean, s.se_text(), s.n);
        }
        out
    }
}

/// Side-by-side tables with deltas against the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub metrics: Vec<String>,
    /// `values[m][c]` is metric `m` in table `c`.
    pub values: Vec<Vec<Stat>>,
    /// `deltas[m][c]` is `values[m][c].mean - values[m][0].mean`.
    pub deltas: Vec<Vec<f64>>,
}

/// Aligns tables that report the same metrics; column order follows the input.
pub fn compare_methods(tables: &[SummaryTable]) -> Result<Comparison, HarnessError> {
    let first = tables.first().ok_or_else(|| HarnessError::MetricMismatch("no tables".into()))?;
    for t in &tables[1..] {
        if t.metrics.keys().ne(first.metrics.keys()) {
            return Err(HarnessError::MetricMismatch(format!("{} vs {}", first.name, t.name)));
        }
    }
    let metrics: Vec<String> = first.metrics.keys().cloned().collect();
    let values: Vec<Vec<Stat>> = metrics.iter().map(|m| tables.iter().map(|t| t.metrics[m]).collect()).collect();
    let deltas = values.iter().map(|row| row.iter().map(|s| s.mean - row[0].mean).collect()).collect();
    Ok(Comparison {
        columns: tables.iter().map(|t| t.name.clone()).collect(),
        metrics,
        values,
        deltas,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let w = self.metrics.iter().map(String::len).max().unwrap_or(6).max(6);
        let cw = self.columns.iter().map(String::len).max().unwrap_or(0).max(20);
        let mut out = format!("{:<w$}", "metric");
        for c in &self.columns {
            let _ = write!(out, "  {c:>cw$}");
        }
        out.push('\n');
        for (i, m) in self.metrics.iter().enumerate() {
            let _ = write!(out, "{m:<w$}");
            for (j, s) in self.values[i].iter().enumerate() {
                let cell = if j == 0 {
                    format!("{:.4} ± {}", s.mean, s.se_text())
                } else {
                    format!("{:.4} ({:+.4})", s.mean, self.deltas[i][j])
                };
                let _ = write!(out, "  {cell:>cw$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "table", "mean", "se", "n", "delta"])?;
        for (i, m) in self.metrics.iter().enumerate() {
            for (j, c) in self.columns.iter().enumerate() {
                let s = self.values[i][j];
                w.write_record([
                    m.clone(),
                    c.clone(),
                    format!("{}", s.mean),
                    s.se.map_or_else(|| "n/a".into(), |v| format!("{v}")),
                    s.n.to_string(),
                    format!("{}", self.deltas[i][j]),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }
}
