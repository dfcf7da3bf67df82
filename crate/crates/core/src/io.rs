//! CSV output of runs and batches, and CSV input for training and prediction.
//!
//! Floats use Rust's shortest round-trip formatting, so a reload is exact.
//! Flagged targets are written as `NaN`.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ml::{Dataset, TARGET_NAMES};
use crate::pipeline::{BatchResult, RunOutput, RunRecord};
use crate::presets::PARAM_NAMES;

pub const OBSERVABLES_FILE: &str = "observables.csv";
pub const BATH_POPULATIONS_FILE: &str = "bath_populations.csv";
pub const BATH_COHERENCES_FILE: &str = "bath_coherences.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CORRELATOR_FILE: &str = "correlator.csv";
pub const SPECTRAL_DENSITY_FILE: &str = "spectral_density.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PARAMS_FILE: &str = "params.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const PLOTS_DIR: &str = "plots";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

struct Table {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl Table {
    fn create(path: PathBuf, header: &[String]) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut t = Table { w: csv::Writer::from_writer(file), path };
        t.row(header.iter().map(String::as_str))?;
        Ok(t)
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| csv_err(&self.path, e))
    }

    fn floats(&mut self, lead: String, values: impl IntoIterator<Item = f64>) -> Result<()> {
        self.row(std::iter::once(lead).chain(values.into_iter().map(|v| v.to_string())))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn header(first: &str, rest: impl IntoIterator<Item = String>) -> Vec<String> {
    std::iter::once(first.to_string()).chain(rest).collect()
}

/// Writes `t` plus one column per series.
fn columns(path: PathBuf, names: &[String], times: &[f64], cols: &[&[f64]]) -> Result<PathBuf> {
    let mut t = Table::create(path, &header("t", names.iter().cloned()))?;
    for (k, &time) in times.iter().enumerate() {
        t.floats(time.to_string(), cols.iter().map(|c| c[k]))?;
    }
    t.finish()
}

fn pairs(path: PathBuf, x: &str, y: &str, xs: &[f64], ys: &[f64]) -> Result<PathBuf> {
    let mut t = Table::create(path, &[x.to_string(), y.to_string()])?;
    for (a, b) in xs.iter().zip(ys) {
        t.floats(a.to_string(), [*b])?;
    }
    t.finish()
}

fn features_header(width: usize) -> Vec<String> {
    header("run_id", (0..width).map(|k| format!("f_{k}")))
}

fn targets_header() -> Vec<String> {
    header("run_id", TARGET_NAMES.iter().map(|s| s.to_string()))
}

/// Writes one feature row per record.
pub fn write_features<'a>(path: &Path, records: impl IntoIterator<Item = &'a RunRecord>) -> Result<PathBuf> {
    let mut it = records.into_iter().peekable();
    let width = it.peek().map_or(0, |r| r.features.values.len());
    let mut t = Table::create(path.to_path_buf(), &features_header(width))?;
    for r in it {
        if r.features.values.len() != width {
            return Err(Error::domain(format!("run {} has {} features, expected {width}", r.run_id, r.features.values.len())));
        }
        t.floats(r.run_id.to_string(), r.features.values.iter().copied())?;
    }
    t.finish()
}

pub fn write_targets<'a>(path: &Path, records: impl IntoIterator<Item = &'a RunRecord>) -> Result<PathBuf> {
    let mut t = Table::create(path.to_path_buf(), &targets_header())?;
    for r in records {
        t.floats(r.run_id.to_string(), r.targets.values.iter().copied())?;
    }
    t.finish()
}

fn read_table(path: &Path, expect_header: Option<&[String]>) -> Result<(Vec<String>, Vec<usize>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let head: Vec<String> = rd.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if head.first().map(String::as_str) != Some("run_id") {
        return Err(Error::Parse(format!("{}: first column must be run_id", path.display())));
    }
    if let Some(h) = expect_header {
        if head != h {
            return Err(Error::Parse(format!("{}: header is '{}', expected '{}'", path.display(), head.join(","), h.join(","))));
        }
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        let bad = |what: &str| Error::Parse(format!("{} line {line}: bad {what}", path.display()));
        ids.push(rec[0].trim().parse::<usize>().map_err(|_| bad("run_id"))?);
        let vals = rec.iter().skip(1).map(|s| s.trim().parse::<f64>().map_err(|_| bad(&format!("value '{s}'"))));
        rows.push(vals.collect::<Result<Vec<f64>>>()?);
    }
    Ok((head, ids, rows))
}

fn to_matrix(rows: &[Vec<f64>], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c])
}

/// Run ids and the feature matrix of a features CSV.
pub fn read_features(path: &Path) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (head, ids, rows) = read_table(path, None)?;
    for (k, name) in head.iter().enumerate().skip(1) {
        if *name != format!("f_{}", k - 1) {
            return Err(Error::Parse(format!("{}: column {k} is '{name}', expected 'f_{}'", path.display(), k - 1)));
        }
    }
    Ok((ids, to_matrix(&rows, head.len() - 1)))
}

/// Run ids and the target matrix (columns in [`TARGET_NAMES`] order) of a targets CSV.
pub fn read_targets(path: &Path) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (_, ids, rows) = read_table(path, Some(&targets_header()))?;
    Ok((ids, to_matrix(&rows, TARGET_NAMES.len())))
}

/// Joins a features and a targets file on `run_id`. Rows with a non-finite value
/// are left out and reported.
pub fn read_dataset(features: &Path, targets: &Path) -> Result<(Dataset, Vec<usize>)> {
    let (fid, f) = read_features(features)?;
    let (tid, t) = read_targets(targets)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, id) in fid.iter().enumerate() {
        let j = tid
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::validation(format!("run {id} has features but no targets")))?;
        if f.row(i).iter().chain(t.row(j).iter()).all(|v| v.is_finite()) {
            rows.push((i, j));
        } else {
            skipped.push(*id);
        }
    }
    if !skipped.is_empty() {
        log::warn!("left out {} rows with non-finite values: {skipped:?}", skipped.len());
    }
    let ds = Dataset::new(
        rows.iter().map(|&(i, _)| fid[i]).collect(),
        DMatrix::from_fn(rows.len(), f.ncols(), |r, c| f[(rows[r].0, c)]),
        DMatrix::from_fn(rows.len(), t.ncols(), |r, c| t[(rows[r].1, c)]),
        TARGET_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok((ds, skipped))
}

/// Writes a prediction matrix with the targets header.
pub fn write_predictions(path: &Path, run_ids: &[usize], names: &[String], pred: &DMatrix<f64>) -> Result<PathBuf> {
    let mut t = Table::create(path.to_path_buf(), &header("run_id", names.iter().cloned()))?;
    for (r, id) in run_ids.iter().enumerate() {
        t.floats(id.to_string(), pred.row(r).iter().copied())?;
    }
    t.finish()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes every enabled output of one run into `dir` and returns the paths written.
pub fn emit_outputs(out: &RunOutput, dir: &Path, outputs: &crate::config::Outputs) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let s = &out.series;
    let r = &out.record;
    let mut files = Vec::new();
    let name = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    if outputs.observables {
        let cols: Vec<&[f64]> = s.system.iter().map(Vec::as_slice).collect();
        files.push(columns(dir.join(OBSERVABLES_FILE), &name(&["sx", "sy", "sz"]), &s.times, &cols)?);
        let pops: Vec<&[f64]> = s.bath.iter().map(|b| b[2].as_slice()).collect();
        let names: Vec<String> = s.bath_nodes.iter().map(|b| format!("sz_{b}")).collect();
        files.push(columns(dir.join(BATH_POPULATIONS_FILE), &names, &s.times, &pops)?);
        let coh: Vec<&[f64]> = s.bath.iter().flat_map(|b| [b[0].as_slice(), b[1].as_slice()]).collect();
        let names: Vec<String> = s.bath_nodes.iter().flat_map(|b| [format!("sx_{b}"), format!("sy_{b}")]).collect();
        files.push(columns(dir.join(BATH_COHERENCES_FILE), &names, &s.times, &coh)?);
    }
    if outputs.features {
        files.push(write_features(&dir.join(FEATURES_FILE), [r])?);
    }
    files.push(write_targets(&dir.join(TARGETS_FILE), [r])?);
    files.push(write_summary(&dir.join(SUMMARY_FILE), r)?);

    let plots = dir.join(PLOTS_DIR);
    if outputs.observables || outputs.diagnostics || outputs.spectra {
        ensure_dir(&plots)?;
    }
    let mut plot = |file: &str, x: &str, y: &str, xs: &[f64], ys: &[f64]| -> Result<()> {
        files.push(pairs(plots.join(file), x, y, xs, ys)?);
        Ok(())
    };
    if outputs.observables {
        plot("system_sx.csv", "t", "sx", &s.times, &s.system[0])?;
        plot("system_sz.csv", "t", "sz", &s.times, &s.system[2])?;
    }
    if outputs.diagnostics {
        plot("trace_distance.csv", "t", "trace_distance", &s.times, &s.trace_distance)?;
    }
    if let (true, Some(d)) = (outputs.diagnostics, &s.diagnostics) {
        plot("thermal_fidelity.csv", "t", "fidelity", &s.times, &d.thermal_fidelity)?;
        plot("system_entropy.csv", "t", "entropy", &s.times, &d.system_entropy)?;
        plot("system_energy.csv", "t", "energy", &s.times, &d.system_energy)?;
        plot("bath_energy.csv", "t", "energy", &s.times, &d.bath_energy)?;
        plot("interaction_energy.csv", "t", "energy", &s.times, &d.interaction_energy)?;
        if !d.bath_entropy.is_empty() {
            plot("bath_entropy.csv", "t", "entropy", &s.times, &d.bath_entropy)?;
            plot("mutual_information.csv", "t", "mutual_information", &s.times, &d.mutual_information)?;
        }
    }
    if outputs.spectra {
        if let Some(c) = &s.correlator {
            let re: Vec<f64> = c.iter().map(|z| z.re).collect();
            let abs: Vec<f64> = c.iter().map(|z| z.norm()).collect();
            plot("correlator_re.csv", "t", "re", &s.times, &re)?;
            plot("correlator_abs.csv", "t", "abs", &s.times, &abs)?;
        }
        if let Some(j) = &s.spectral_density {
            plot("spectral_density.csv", "f", "J", &j.freqs, &j.mags)?;
        }
    }

    if let (true, Some(d)) = (outputs.diagnostics, &s.diagnostics) {
        let mut names = name(&[
            "trace_distance",
            "system_entropy",
            "thermal_fidelity",
            "system_energy",
            "bath_energy",
            "interaction_energy",
        ]);
        let mut cols: Vec<&[f64]> = vec![
            &s.trace_distance,
            &d.system_entropy,
            &d.thermal_fidelity,
            &d.system_energy,
            &d.bath_energy,
            &d.interaction_energy,
        ];
        if !d.bath_entropy.is_empty() {
            names.extend(name(&["bath_entropy", "mutual_information"]));
            cols.extend([d.bath_entropy.as_slice(), d.mutual_information.as_slice()]);
        }
        files.push(columns(dir.join(DIAGNOSTICS_FILE), &names, &s.times, &cols)?);
    }
    if outputs.spectra {
        if let Some(c) = &s.correlator {
            let mut t = Table::create(dir.join(CORRELATOR_FILE), &name(&["t", "re", "im"]))?;
            for (time, z) in s.times.iter().zip(c) {
                t.floats(time.to_string(), [z.re, z.im])?;
            }
            files.push(t.finish()?);
        }
        if let Some(j) = &s.spectral_density {
            files.push(pairs(dir.join(SPECTRAL_DENSITY_FILE), "f", "J", &j.freqs, &j.mags)?);
        }
    }
    Ok(files)
}

/// `key,value` pairs describing one run.
fn write_summary(path: &Path, r: &RunRecord) -> Result<PathBuf> {
    let mut t = Table::create(path.to_path_buf(), &["key".to_string(), "value".to_string()])?;
    t.row(["label", r.label.as_str()])?;
    if let Some(p) = &r.params {
        for n in PARAM_NAMES {
            t.row([n.to_string(), p.get(n)?.to_string()])?;
        }
    }
    t.row(["backflow_total".to_string(), r.backflow.total.to_string()])?;
    t.row(["backflow_rate".to_string(), r.backflow.rate.to_string()])?;
    t.row(["deps".to_string(), r.deps.to_string()])?;
    t.row(["k_max".to_string(), r.k_max.to_string()])?;
    t.row(["petermann_flags".to_string(), r.petermann_flags.to_string()])?;
    for (target, why) in &r.targets.flags {
        t.row([format!("flag:{target}"), why.clone()])?;
    }
    t.finish()
}

/// Writes the batch tables into `dir`: features and targets of every successful
/// run, the drawn parameters of every run, and one line per excluded run.
pub fn emit_batch(batch: &BatchResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let ok: Vec<&RunRecord> = batch.runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let mut files = vec![
        write_features(&dir.join(FEATURES_FILE), ok.iter().copied())?,
        write_targets(&dir.join(TARGETS_FILE), ok.iter().copied())?,
    ];

    let mut t = Table::create(dir.join(PARAMS_FILE), &header("run_id", PARAM_NAMES.iter().map(|s| s.to_string())))?;
    for run in &batch.runs {
        if let Some(p) = run.network.params() {
            let vals = PARAM_NAMES.iter().map(|n| p.get(n)).collect::<Result<Vec<f64>>>()?;
            t.floats(run.run_id.to_string(), vals)?;
        }
    }
    files.push(t.finish()?);

    let mut t = Table::create(dir.join(FAILURES_FILE), &["run_id".to_string(), "reason".to_string()])?;
    for (id, why) in batch.excluded() {
        t.row([id.to_string(), why])?;
    }
    files.push(t.finish()?);
    Ok(files)
}
