//! Text rendering of sweep results.
//!
//! Every table is a comma-separated file whose leading `#` lines name what it
//! holds and the provenance hashes. Timings go to their own file so the
//! tables are byte-identical across runs of the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::sweep::{Axis, MetricsReport, RowMetrics, SweepRow};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file};

pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "report.md";
pub const PROVENANCE_FILE: &str = "provenance.txt";

const SWEEP_COLUMNS: &str = "axis_value,sampling_window,averaging_window,noise_sigma_hz,missing,masks,\
lambda,test_error,validation_error,magnitude_error,baseline_error,k,miss_rate,status";

pub fn sweep_file(axis: Axis) -> String {
    format!("sweep-{axis}.csv")
}

/// Shortest round-trip form, switching to an exponent for tiny and huge
/// magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Commas and line breaks would split a record.
fn clean(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn preamble(out: &mut String, kind: &str, title: &str, r: &MetricsReport) {
    let p = &r.provenance;
    writeln!(out, "# freqloc-{kind} v1").unwrap();
    writeln!(out, "# title {title}").unwrap();
    writeln!(out, "# config_hash {}", p.config_hash).unwrap();
    writeln!(out, "# model_hash {}", p.model_hash).unwrap();
    writeln!(out, "# train_hash {}", p.train_hash).unwrap();
    writeln!(out, "# test_hash {}", p.test_hash).unwrap();
    writeln!(out, "# validation_hash {}", p.validation_hash).unwrap();
}

fn sweep_line(row: &SweepRow) -> String {
    let p = &row.point;
    let head = format!(
        "{},{},{},{},{},{}",
        row.value,
        p.sampling_window,
        p.averaging_window,
        num(p.noise_sigma),
        row.missing,
        row.masks
    );
    match &row.outcome {
        Ok(RowMetrics {
            lambda,
            test_error,
            validation_error,
            magnitude_error,
            baseline_error,
            miss_rate,
        }) => format!(
            "{head},{},{},{},{},{},{},{},ok",
            opt(*lambda),
            num(*test_error),
            num(*validation_error),
            num(*magnitude_error),
            opt(*baseline_error),
            miss_rate.map(|m| m.0.to_string()).unwrap_or_default(),
            opt(miss_rate.map(|m| m.1)),
        ),
        Err(e) => format!("{head},,,,,,,,failed: {}", clean(e)),
    }
}

/// File name and contents of every deterministic output, in a fixed order.
pub fn render(r: &MetricsReport) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for axis in Axis::ALL {
        let rows: Vec<&SweepRow> = r.rows_for(axis).collect();
        if rows.is_empty() {
            continue;
        }
        let mut s = String::new();
        preamble(&mut s, "sweep", axis.title(), r);
        writeln!(s, "# axis {axis}").unwrap();
        writeln!(s, "{SWEEP_COLUMNS}").unwrap();
        for row in rows {
            writeln!(s, "{}", sweep_line(row)).unwrap();
        }
        files.push((sweep_file(axis), s));
    }

    let mut s = String::new();
    preamble(&mut s, "curves", "test classification error against regularization strength", r);
    writeln!(s, "point,lambda,test_error,iterations,converged,selected").unwrap();
    for (label, chosen, curve) in &r.curves {
        for c in curve {
            writeln!(
                s,
                "{label},{},{},{},{},{}",
                num(c.lambda),
                num(c.test_error),
                c.iterations,
                c.converged,
                c.lambda == *chosen
            )
            .unwrap();
        }
    }
    files.push(("lambda-curves.csv".to_string(), s));

    if !r.missing_masks.is_empty() {
        let mut s = String::new();
        preamble(&mut s, "masks", "per-mask results behind the missing-data averages", r);
        writeln!(s, "missing,mask,lambda,test_error,validation_error,magnitude_error,status").unwrap();
        for (count, m) in &r.missing_masks {
            match &m.outcome {
                Ok(p) => writeln!(
                    s,
                    "{count},{},{},{},{},{},ok",
                    m.mask,
                    num(p.lambda),
                    num(p.test_error),
                    num(p.validation_error),
                    num(p.magnitude_error)
                ),
                Err(e) => writeln!(s, "{count},{},,,,,failed: {}", m.mask, clean(e)),
            }
            .unwrap();
        }
        files.push(("missing-masks.csv".to_string(), s));
    }

    if let Some(per_bus) = &r.per_bus {
        let mut s = String::new();
        preamble(&mut s, "per-bus", "validation localization and magnitude error by disturbed bus", r);
        writeln!(s, "bus,validation_error,magnitude_error").unwrap();
        for b in per_bus {
            writeln!(s, "{},{},{}", b.bus, num(b.validation_error), num(b.magnitude_error)).unwrap();
        }
        files.push(("per-bus.csv".to_string(), s));
    }

    if let Some(t) = &r.traces {
        let mut s = String::new();
        preamble(&mut s, "traces", "frequency deviation after one disturbance, clean and noisy", r);
        writeln!(s, "# bus {}", t.bus).unwrap();
        writeln!(s, "# magnitude_mw {}", num(t.magnitude)).unwrap();
        writeln!(s, "# noise_sigma_hz {}", num(t.sigma)).unwrap();
        writeln!(s, "t_ms,generator,deviation_hz,noisy_deviation_hz").unwrap();
        for (g, clean, noisy) in &t.series {
            for (k, (c, n)) in clean.iter().zip(noisy).enumerate() {
                let ms = (k as f64 * t.sample_period * 1e6).round() / 1e3;
                writeln!(s, "{},{g},{},{}", num(ms), num(*c), num(*n)).unwrap();
            }
        }
        files.push(("traces.csv".to_string(), s));
    }

    let p = &r.provenance;
    files.push((
        PROVENANCE_FILE.to_string(),
        format!(
            "# freqloc-provenance v1\nconfig_hash {}\nmodel_hash {}\ntrain_hash {}\ntest_hash {}\nvalidation_hash {}\n",
            p.config_hash, p.model_hash, p.train_hash, p.test_hash, p.validation_hash
        ),
    ));
    files
}

pub fn render_timings(r: &MetricsReport) -> String {
    let mut s = String::from("# freqloc-timings v1\nstage,seconds\n");
    for (stage, secs) in &r.stage_seconds {
        writeln!(s, "{},{secs}", clean(stage)).unwrap();
    }
    writeln!(s, "total,{}", r.runtime_seconds).unwrap();
    s
}

/// Writes all outputs under `dir` and returns the paths written.
pub fn write_report(dir: &Path, r: &MetricsReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, contents) in render(r) {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    let path = dir.join(TIMINGS_FILE);
    write_file(&path, &render_timings(r))?;
    written.push(path);
    Ok(written)
}

/// A delimited table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(file: &str, text: &str) -> Result<Table> {
        let mut headers = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix("# ") {
                let (k, v) = h.split_once(' ').unwrap_or((h, ""));
                headers.push((k.to_string(), v.to_string()));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            match &columns {
                None => columns = Some(cells),
                Some(c) if c.len() != cells.len() => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        line: i + 1,
                        reason: format!("expected {} fields, found {}", c.len(), cells.len()),
                    })
                }
                Some(_) => rows.push(cells),
            }
        }
        let columns = columns.ok_or_else(|| Error::Parse {
            file: file.to_string(),
            line: text.lines().count(),
            reason: "no column header".into(),
        })?;
        let title = headers
            .iter()
            .find(|(k, _)| k == "title")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        Ok(Table {
            title,
            headers,
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rows whose `status` column is not `ok`.
    pub fn failures(&self) -> Vec<&Vec<String>> {
        match self.column("status") {
            Some(i) => self.rows.iter().filter(|r| r[i] != "ok").collect(),
            None => Vec::new(),
        }
    }
}

/// Summary of a sweep directory: every sweep table as markdown followed by
/// the provenance. Returns the text and the number of failed rows.
pub fn summarize(dir: &Path) -> Result<(String, usize)> {
    let mut out = String::from("# Sweep summary\n");
    let mut failed = 0;
    let mut found = 0;
    for axis in Axis::ALL {
        let path = dir.join(sweep_file(axis));
        if !path.exists() {
            continue;
        }
        found += 1;
        let table = Table::parse(&path.display().to_string(), &read_file(&path)?)?;
        failed += table.failures().len();
        writeln!(out, "\n## {}\n", table.title).unwrap();
        writeln!(out, "| {} |", table.columns.join(" | ")).unwrap();
        writeln!(out, "|{}", "---|".repeat(table.columns.len())).unwrap();
        for row in &table.rows {
            writeln!(out, "| {} |", row.join(" | ")).unwrap();
        }
    }
    if found == 0 {
        return Err(Error::Input(format!("no sweep tables in {}", dir.display())));
    }
    let prov = dir.join(PROVENANCE_FILE);
    if prov.exists() {
        writeln!(out, "\n## Provenance\n").unwrap();
        for line in read_file(&prov)?.lines().filter(|l| !l.starts_with('#')) {
            writeln!(out, "- {line}").unwrap();
        }
    }
    Ok((out, failed))
}
