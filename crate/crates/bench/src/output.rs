//! Trace CSVs and summary tables.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use mda_core::schedules::{LrShape, ScheduleSpec};
use mda_core::{RunTrace, TraceRow};

use crate::stats::MeanSe;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct TraceMeta<'a> {
    pub problem: &'a str,
    pub optimizer: &'a str,
    pub schedule: &'a str,
    pub total_steps: usize,
    pub seed: u64,
}

pub fn write_trace<W: Write>(mut w: W, meta: &TraceMeta<'_>, trace: &RunTrace) -> io::Result<()> {
    writeln!(w, "# problem: {}", meta.problem)?;
    writeln!(w, "# optimizer: {}", meta.optimizer)?;
    writeln!(w, "# schedule: {}", meta.schedule)?;
    writeln!(w, "# T: {}", meta.total_steps)?;
    writeln!(w, "# seed: {}", meta.seed)?;
    writeln!(w, "# generator: {}", mda_core::RngStream::GENERATOR)?;
    writeln!(w, "# version: {}", mda_core::VERSION)?;
    writeln!(w, "{}", TraceRow::HEADER)?;
    for row in &trace.rows {
        let mut line = row.step.to_string();
        for v in row.values() {
            line.push(',');
            line.push_str(&fmt_f64(v));
        }
        writeln!(w, "{line}")?;
    }
    if let Some(a) = &trace.abort {
        writeln!(w, "# abort: step={} reason={}", a.step, a.reason)?;
    }
    Ok(())
}

pub fn describe_schedule(s: &ScheduleSpec) -> String {
    let shape = match &s.lr_shape {
        LrShape::Flat => "flat".to_string(),
        LrShape::StagewiseLinear(stages) => {
            let parts: Vec<String> = stages
                .iter()
                .map(|st| format!("{}:{}:{}", st.at, st.multiplier, st.ramp))
                .collect();
            format!("stagewise_linear({})", parts.join(" "))
        }
        LrShape::WarmupLinearDecay {
            warmup_steps,
            total_steps,
        } => format!("warmup_linear_decay({warmup_steps},{total_steps})"),
    };
    format!(
        "base_lr={} lr_shape={} c0={} compensate_momentum={}",
        s.base_lr, shape, s.c0, s.compensate_momentum
    )
}

/// A table rendered as aligned text and as CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footnotes: Vec<String>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&self.header, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&rule, &mut out);
        for r in &self.rows {
            line(r, &mut out);
        }
        for f in &self.footnotes {
            let _ = writeln!(out, "{f}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for f in &self.footnotes {
            let _ = writeln!(out, "# {f}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }

    /// Writes `<stem>.txt` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> io::Result<()> {
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())
    }
}

/// `mean ± se` with a dagger when the standard error is degenerate.
pub fn pm(s: &MeanSe) -> String {
    let mark = if s.n == 1 { "†" } else { "" };
    format!("{:.6e} ± {:.2e}{mark}", s.mean, s.se)
}

pub const SINGLE_SEED_NOTE: &str = "† single seed: standard error reported as 0";
