//! Plain-text persistence.
//!
//! Every file starts with `# freqloc-<kind> v1`, followed by `# key value`
//! header lines. Tabular files then carry a comma-separated column header and
//! one record per line. Floats are written in Rust's shortest round-trip form,
//! so reading a file back reproduces the values bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector, LabeledSample};
use crate::grid::{hex_digest, Dataset, DisturbanceScenario, FrequencyTrace};
use crate::localizer::{ClassLabel, LogisticModel};
use crate::magnitude::LinearModelBank;
use crate::missing::{MissingMask, ScenarioBank};

const TRACE_COLUMNS: &str = "scenario_id,bus,magnitude_mw,generator_id,t_index,frequency_hz";
const FEATURE_COLUMNS: &str = "scenario_id,label,magnitude_mw,coordinate,value";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex_digest(bytes)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Line-oriented reader that tracks positions for error messages.
struct Lines<'a> {
    file: String,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(file: &str, text: &'a str) -> Self {
        Lines {
            file: file.to_string(),
            inner: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        loop {
            let (i, l) = self.inner.next()?;
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Some(l);
            }
        }
    }

    fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        self.next_line()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn magic(&mut self, kind: &str) -> Result<()> {
        let want = format!("# freqloc-{kind} v1");
        let got = self.expect_line("format marker")?;
        if got.trim() != want {
            return Err(self.err(format!("expected `{want}`, found `{}`", got.trim())));
        }
        Ok(())
    }

    /// Consumes consecutive `# key value` lines.
    fn header(&mut self) -> Result<Header> {
        let mut map = HashMap::new();
        while let Some((_, l)) = self.inner.peek() {
            let l = l.trim();
            if l.is_empty() {
                self.inner.next();
                continue;
            }
            let Some(rest) = l.strip_prefix('#') else { break };
            let (i, _) = self.inner.next().unwrap();
            self.line = i + 1;
            let rest = rest.trim();
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            map.insert(k.to_string(), (v.trim().to_string(), self.line));
        }
        Ok(Header {
            file: self.file.clone(),
            map,
            line: self.line,
        })
    }

    fn columns(&mut self, want: &str) -> Result<()> {
        let got = self.expect_line("column header")?;
        if got.trim() != want {
            return Err(self.err(format!("expected columns `{want}`, found `{}`", got.trim())));
        }
        Ok(())
    }
}

struct Header {
    file: String,
    map: HashMap<String, (String, usize)>,
    line: usize,
}

impl Header {
    fn raw(&self, key: &str) -> Result<(&str, usize)> {
        self.map
            .get(key)
            .map(|(v, l)| (v.as_str(), *l))
            .ok_or_else(|| Error::Parse {
                file: self.file.clone(),
                line: self.line,
                reason: format!("missing header `{key}`"),
            })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (v, line) = self.raw(key)?;
        v.parse().map_err(|e| Error::Parse {
            file: self.file.clone(),
            line,
            reason: format!("header `{key}`: {e}"),
        })
    }
}

fn parse_field<T: FromStr>(lines: &Lines, field: &str, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .trim()
        .parse()
        .map_err(|e| lines.err(format!("{name} `{}`: {e}", field.trim())))
}

fn split_row<'a>(lines: &Lines, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != n {
        return Err(lines.err(format!("expected {n} fields, found {}", fields.len())));
    }
    Ok(fields)
}

fn parse_values(lines: &Lines, line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split(',')
        .map(|f| parse_field::<f64>(lines, f, "value"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(lines.err(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn write_feature_config(out: &mut String, cfg: &FeatureConfig) {
    writeln!(out, "# sampling_window {}", cfg.sampling_window).unwrap();
    writeln!(out, "# averaging_window {}", cfg.averaging_window).unwrap();
    writeln!(out, "# noise_sigma {}", cfg.noise_sigma).unwrap();
    writeln!(out, "# rng_seed {}", cfg.rng_seed).unwrap();
}

fn read_feature_config(h: &Header) -> Result<FeatureConfig> {
    let cfg = FeatureConfig::new(
        h.get("sampling_window")?,
        h.get("averaging_window")?,
        h.get("noise_sigma")?,
        h.get("rng_seed")?,
    );
    cfg.validate()?;
    Ok(cfg)
}

/// Metadata carried alongside a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub model_hash: String,
    pub sample_period: f64,
    pub onset_time: f64,
    pub duration: f64,
    pub generators: usize,
    pub nominal_frequency: f64,
    pub dataset_seed: u64,
}

/// One row per (scenario, generator, sample). Bus 0 marks the
/// no-disturbance scenario.
pub fn traces_to_string(dataset: &Dataset, model_hash: &str) -> Result<String> {
    let first = dataset
        .traces
        .first()
        .ok_or_else(|| Error::Input("cannot write an empty dataset".into()))?;
    let mut out = String::new();
    writeln!(out, "# freqloc-traces v1").unwrap();
    writeln!(out, "# model_hash {model_hash}").unwrap();
    writeln!(out, "# sample_period {}", first.sample_period).unwrap();
    writeln!(out, "# onset_time {}", first.scenario.onset_time).unwrap();
    writeln!(out, "# duration {}", first.scenario.duration).unwrap();
    writeln!(out, "# generators {}", first.generator_count()).unwrap();
    let fnom = first.pre_onset_frequency.first().copied().unwrap_or(0.0);
    writeln!(out, "# nominal_frequency {fnom}").unwrap();
    writeln!(out, "# dataset_seed {}", dataset.seed).unwrap();
    writeln!(out, "# scenarios {}", dataset.len()).unwrap();
    writeln!(out, "{TRACE_COLUMNS}").unwrap();
    for t in &dataset.traces {
        if t.generator_count() != first.generator_count()
            || t.sample_period != first.sample_period
            || t.scenario.onset_time != first.scenario.onset_time
            || t.scenario.duration != first.scenario.duration
        {
            return Err(Error::Input(format!(
                "scenario {} does not share the dataset's timing or generator set",
                t.scenario_id
            )));
        }
        let bus = t.scenario.label_index();
        let mw = t.scenario.magnitude();
        for g in 0..t.generator_count() {
            for k in 0..t.sample_count() {
                writeln!(out, "{},{bus},{mw},{},{k},{}", t.scenario_id, g + 1, t.samples[(g, k)]).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn traces_from_str(file: &str, text: &str) -> Result<(Dataset, TraceHeader)> {
    let mut lines = Lines::new(file, text);
    lines.magic("traces")?;
    let h = lines.header()?;
    let header = TraceHeader {
        model_hash: h.get("model_hash")?,
        sample_period: h.get("sample_period")?,
        onset_time: h.get("onset_time")?,
        duration: h.get("duration")?,
        generators: h.get("generators")?,
        nominal_frequency: h.get("nominal_frequency")?,
        dataset_seed: h.get("dataset_seed")?,
    };
    let expected_scenarios: usize = h.get("scenarios")?;
    lines.columns(TRACE_COLUMNS)?;
    let n = header.generators;
    let count = (header.duration / header.sample_period).round() as usize + 1;

    let mut traces: Vec<FrequencyTrace> = Vec::new();
    let mut filled: Vec<usize> = Vec::new();
    while let Some(line) = lines.next_line() {
        let f = split_row(&lines, line, 6)?;
        let id: usize = parse_field(&lines, f[0], "scenario_id")?;
        let bus: usize = parse_field(&lines, f[1], "bus")?;
        let mw: f64 = parse_field(&lines, f[2], "magnitude_mw")?;
        let g: usize = parse_field(&lines, f[3], "generator_id")?;
        let k: usize = parse_field(&lines, f[4], "t_index")?;
        let v: f64 = parse_field(&lines, f[5], "frequency_hz")?;
        if traces.last().map(|t| t.scenario_id) != Some(id) {
            if traces.iter().any(|t| t.scenario_id == id) {
                return Err(lines.err(format!("rows of scenario {id} are not contiguous")));
            }
            let scenario = if bus == 0 {
                DisturbanceScenario::none(header.onset_time, header.duration)
            } else {
                DisturbanceScenario::at_bus(bus, mw, header.onset_time, header.duration)
            }
            .map_err(|e| lines.err(e.to_string()))?;
            traces.push(FrequencyTrace {
                scenario_id: id,
                scenario,
                sample_period: header.sample_period,
                samples: DMatrix::from_element(n, count, f64::NAN),
                pre_onset_frequency: vec![header.nominal_frequency; n],
            });
            filled.push(0);
        }
        let t = traces.last_mut().unwrap();
        if t.scenario.label_index() != bus || t.scenario.magnitude() != mw {
            return Err(lines.err(format!("scenario {id} changes its disturbance mid-file")));
        }
        if g == 0 || g > n || k >= count {
            return Err(lines.err(format!("generator {g} / sample {k} outside {n} × {count}")));
        }
        if !t.samples[(g - 1, k)].is_nan() {
            return Err(lines.err(format!("duplicate sample for scenario {id}, generator {g}, index {k}")));
        }
        t.samples[(g - 1, k)] = v;
        *filled.last_mut().unwrap() += 1;
    }
    for (t, &c) in traces.iter().zip(&filled) {
        if c != n * count {
            return Err(lines.err(format!(
                "scenario {} has {c} of {} samples",
                t.scenario_id,
                n * count
            )));
        }
    }
    if traces.len() != expected_scenarios {
        return Err(lines.err(format!(
            "header announces {expected_scenarios} scenarios, found {}",
            traces.len()
        )));
    }
    Ok((
        Dataset {
            traces,
            seed: header.dataset_seed,
        },
        header,
    ))
}

/// Long format: one row per (sample, coordinate).
pub fn samples_to_string(samples: &[LabeledSample]) -> Result<String> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Input("cannot write an empty feature matrix".into()))?;
    let mut out = String::new();
    writeln!(out, "# freqloc-features v1").unwrap();
    write_feature_config(&mut out, &first.features.config);
    writeln!(out, "# mask {}", first.features.mask).unwrap();
    writeln!(out, "# length {}", first.features.len()).unwrap();
    writeln!(out, "# samples {}", samples.len()).unwrap();
    writeln!(out, "{FEATURE_COLUMNS}").unwrap();
    for s in samples {
        if s.features.config != first.features.config
            || s.features.mask != first.features.mask
            || s.features.len() != first.features.len()
        {
            return Err(Error::Input(format!(
                "scenario {} was featurized differently from the first sample",
                s.scenario_id
            )));
        }
        for (c, v) in s.features.values.iter().enumerate() {
            writeln!(out, "{},{},{},{c},{v}", s.scenario_id, s.label_index, s.magnitude).unwrap();
        }
    }
    Ok(out)
}

pub fn samples_from_str(file: &str, text: &str) -> Result<Vec<LabeledSample>> {
    let mut lines = Lines::new(file, text);
    lines.magic("features")?;
    let h = lines.header()?;
    let config = read_feature_config(&h)?;
    let mask: MissingMask = h.get("mask")?;
    let len: usize = h.get("length")?;
    let expected: usize = h.get("samples")?;
    lines.columns(FEATURE_COLUMNS)?;
    let mut out: Vec<LabeledSample> = Vec::with_capacity(expected);
    while let Some(line) = lines.next_line() {
        let f = split_row(&lines, line, 5)?;
        let id: usize = parse_field(&lines, f[0], "scenario_id")?;
        let label: usize = parse_field(&lines, f[1], "label")?;
        let mw: f64 = parse_field(&lines, f[2], "magnitude_mw")?;
        let c: usize = parse_field(&lines, f[3], "coordinate")?;
        let v: f64 = parse_field(&lines, f[4], "value")?;
        let start_new = out.last().map_or(true, |s| s.features.len() == len);
        if start_new {
            if c != 0 {
                return Err(lines.err(format!("scenario {id} starts at coordinate {c}")));
            }
            out.push(LabeledSample {
                scenario_id: id,
                features: FeatureVector {
                    values: Vec::with_capacity(len),
                    config,
                    mask: mask.clone(),
                },
                label_index: label,
                magnitude: mw,
            });
        }
        let s = out.last_mut().unwrap();
        if s.scenario_id != id || s.label_index != label || s.magnitude != mw || c != s.features.len() {
            return Err(lines.err(format!(
                "expected coordinate {} of scenario {}",
                s.features.len(),
                s.scenario_id
            )));
        }
        s.features.values.push(v);
    }
    if let Some(s) = out.last() {
        if s.features.len() != len {
            return Err(lines.err(format!("scenario {} is truncated", s.scenario_id)));
        }
    }
    if out.len() != expected {
        return Err(lines.err(format!("header announces {expected} samples, found {}", out.len())));
    }
    Ok(out)
}

fn label_text(l: ClassLabel) -> String {
    match l {
        ClassLabel::NoDisturbance => "none".into(),
        ClassLabel::Bus(b) => b.to_string(),
    }
}

/// Header with feature config, mask, λ and class labels, then one line of
/// coefficients per class.
pub fn localizer_to_string(model: &LogisticModel) -> String {
    let mut out = String::new();
    writeln!(out, "# freqloc-localizer v1").unwrap();
    write_feature_config(&mut out, &model.feature_config);
    writeln!(out, "# mask {}", model.missing_mask).unwrap();
    writeln!(out, "# lambda {}", model.lambda).unwrap();
    let labels: Vec<String> = model.class_labels.iter().map(|l| label_text(*l)).collect();
    writeln!(out, "# classes {}", labels.join(",")).unwrap();
    writeln!(out, "# rows {}", model.coefficients.nrows()).unwrap();
    writeln!(out, "# cols {}", model.coefficients.ncols()).unwrap();
    for r in 0..model.coefficients.nrows() {
        let row: Vec<f64> = model.coefficients.row(r).iter().copied().collect();
        writeln!(out, "{}", join(&row)).unwrap();
    }
    out
}

pub fn localizer_from_str(file: &str, text: &str) -> Result<LogisticModel> {
    let mut lines = Lines::new(file, text);
    lines.magic("localizer")?;
    let h = lines.header()?;
    let feature_config = read_feature_config(&h)?;
    let missing_mask: MissingMask = h.get("mask")?;
    let lambda: f64 = h.get("lambda")?;
    let rows: usize = h.get("rows")?;
    let cols: usize = h.get("cols")?;
    let (labels, _) = h.raw("classes")?;
    let class_labels = labels
        .split(',')
        .map(|l| match l.trim() {
            "none" => Ok(ClassLabel::NoDisturbance),
            b => b
                .parse()
                .map(ClassLabel::Bus)
                .map_err(|e| lines.err(format!("class label `{b}`: {e}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut coefficients = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let line = lines.expect_line("coefficient row")?;
        let values = parse_values(&lines, line, cols)?;
        for (c, v) in values.into_iter().enumerate() {
            coefficients[(r, c)] = v;
        }
    }
    if lines.next_line().is_some() {
        return Err(lines.err("trailing data after coefficient rows"));
    }
    let model = LogisticModel {
        coefficients,
        class_labels,
        feature_config,
        missing_mask,
        lambda,
    };
    model.validate().map_err(|e| lines.err(e.to_string()))?;
    Ok(model)
}

/// One `bus,mask,length` record line followed by its coefficient line.
pub fn magnitude_bank_to_string(bank: &LinearModelBank) -> String {
    let mut out = String::new();
    writeln!(out, "# freqloc-magnitude v1").unwrap();
    write_feature_config(&mut out, &bank.feature_config);
    writeln!(out, "# entries {}", bank.len()).unwrap();
    for ((bus, mask), c) in &bank.models {
        writeln!(out, "{bus},{mask},{}", c.len()).unwrap();
        writeln!(out, "{}", join(c)).unwrap();
    }
    out
}

pub fn magnitude_bank_from_str(file: &str, text: &str) -> Result<LinearModelBank> {
    let mut lines = Lines::new(file, text);
    lines.magic("magnitude")?;
    let h = lines.header()?;
    let mut bank = LinearModelBank::new(read_feature_config(&h)?);
    let entries: usize = h.get("entries")?;
    for _ in 0..entries {
        let line = lines.expect_line("bank record")?;
        let f = split_row(&lines, line, 3)?;
        let bus: usize = parse_field(&lines, f[0], "bus")?;
        let mask: MissingMask = parse_field(&lines, f[1], "mask")?;
        let len: usize = parse_field(&lines, f[2], "length")?;
        let line = lines.expect_line("coefficients")?;
        let values = parse_values(&lines, line, len)?;
        if bank.get(bus, &mask).is_some() {
            return Err(lines.err(format!("duplicate entry for bus {bus} mask {mask}")));
        }
        bank.insert(bus, mask, values);
    }
    if lines.next_line().is_some() {
        return Err(lines.err("trailing data after the announced entries"));
    }
    Ok(bank)
}

/// Filename stem for a mask: `mask-none`, `mask-3`, `mask-3-7`.
pub fn mask_file_stem(mask: &MissingMask) -> String {
    format!("mask-{mask}")
}

pub const BANK_INDEX: &str = "index.txt";

/// Writes one localizer and one magnitude file per mask plus an index listing
/// every file with its SHA-256.
pub fn write_bank_dir(dir: &Path, bank: &ScenarioBank) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::new();
    writeln!(index, "# freqloc-bank v1").unwrap();
    write_feature_config(&mut index, &bank.feature_config);
    writeln!(index, "# k_max {}", bank.k_max).unwrap();
    writeln!(index, "# generators {}", bank.generator_count).unwrap();
    writeln!(index, "# entries {}", bank.localizers.len()).unwrap();
    writeln!(index, "mask,kind,file,sha256").unwrap();
    for (mask, loc) in &bank.localizers {
        let mag = bank
            .magnitude_banks
            .get(mask)
            .ok_or_else(|| Error::Lookup(format!("magnitude bank for mask {mask}")))?;
        let stem = mask_file_stem(mask);
        for (kind, ext, text) in [
            ("localizer", "loc", localizer_to_string(loc)),
            ("magnitude", "mag", magnitude_bank_to_string(mag)),
        ] {
            let name = format!("{stem}.{ext}");
            write_file(&dir.join(&name), &text)?;
            writeln!(index, "{mask},{kind},{name},{}", sha256_hex(text.as_bytes())).unwrap();
        }
    }
    write_file(&dir.join(BANK_INDEX), &index)
}

/// Reads a bank directory, verifying every checksum and the entry count.
pub fn read_bank_dir(dir: &Path) -> Result<ScenarioBank> {
    let index_path = dir.join(BANK_INDEX);
    let text = read_file(&index_path)?;
    let file = index_path.display().to_string();
    let mut lines = Lines::new(&file, &text);
    lines.magic("bank")?;
    let h = lines.header()?;
    let feature_config = read_feature_config(&h)?;
    let k_max: usize = h.get("k_max")?;
    let generator_count: usize = h.get("generators")?;
    let entries: usize = h.get("entries")?;
    lines.columns("mask,kind,file,sha256")?;
    let mut localizers = BTreeMap::new();
    let mut magnitude_banks = BTreeMap::new();
    while let Some(line) = lines.next_line() {
        let f = split_row(&lines, line, 4)?;
        let mask: MissingMask = parse_field(&lines, f[0], "mask")?;
        let name = f[2].trim();
        if name.contains('/') || name.contains('\\') || name.starts_with('.') {
            return Err(lines.err(format!("file name `{name}` escapes the bank directory")));
        }
        let path: PathBuf = dir.join(name);
        let body = read_file(&path)?;
        let digest = sha256_hex(body.as_bytes());
        if digest != f[3].trim() {
            return Err(lines.err(format!("checksum mismatch for {name}")));
        }
        let pname = path.display().to_string();
        match f[1].trim() {
            "localizer" => {
                let m = localizer_from_str(&pname, &body)?;
                if m.missing_mask != mask {
                    return Err(lines.err(format!("{name} holds mask {}, index says {mask}", m.missing_mask)));
                }
                localizers.insert(mask, m);
            }
            "magnitude" => {
                magnitude_banks.insert(mask, magnitude_bank_from_str(&pname, &body)?);
            }
            other => return Err(lines.err(format!("unknown entry kind `{other}`"))),
        }
    }
    if localizers.len() != entries || magnitude_banks.len() != entries {
        return Err(lines.err(format!(
            "index announces {entries} masks, found {} localizers and {} magnitude banks",
            localizers.len(),
            magnitude_banks.len()
        )));
    }
    let bank = ScenarioBank {
        localizers,
        magnitude_banks,
        k_max,
        generator_count,
        feature_config,
    };
    if bank.localizers.len() != bank.expected_entries() {
        return Err(Error::Input(format!(
            "bank holds {} masks, k_max {k_max} needs {}",
            bank.localizers.len(),
            bank.expected_entries()
        )));
    }
    Ok(bank)
}

#[cfg(test)]
mod tests;
