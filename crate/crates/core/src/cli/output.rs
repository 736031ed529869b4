//! Trace CSV and manifest rendering.

use std::fmt::Write as _;

use crate::algorithms::Trace;
use crate::metrics::MetricRecord;

pub const CSV_HEADER: &str = "iter,comm_rounds,residual,consensus_error,tracking_error,xi_norm_sq,lyapunov";

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn csv_row(r: &MetricRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.iteration,
        r.comm_rounds,
        opt(r.residual),
        float(r.consensus_error),
        float(r.tracking_error),
        opt(r.xi_norm_sq),
        opt(r.lyapunov)
    )
}

/// Header plus one LF-terminated row per record.
pub fn render_trace_csv(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Flat `key = value` manifest, grouped into TOML tables.
#[derive(Debug, Default, Clone)]
pub struct Manifest {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Manifest {
    pub fn section(&mut self, name: &str) -> &mut Self {
        self.sections.push((name.to_string(), Vec::new()));
        self
    }

    fn push(&mut self, key: &str, value: String) -> &mut Self {
        if self.sections.is_empty() {
            self.section("meta");
        }
        self.sections.last_mut().unwrap().1.push((key.to_string(), value));
        self
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        let text = if v.is_finite() {
            float(v)
        } else if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
        self.push(key, text)
    }

    pub fn int(&mut self, key: &str, v: usize) -> &mut Self {
        self.push(key, v.to_string())
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.push(key, v.to_string())
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        let escaped = v.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n");
        self.push(key, format!("\"{escaped}\""))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
