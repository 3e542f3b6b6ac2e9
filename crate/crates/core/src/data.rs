//! Datasets, CSV persistence, measurement noise, splitting and the NRMS
//! test metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::augmented::AugmentedModel;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng as DataRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Role::Train),
            "val" => Some(Role::Val),
            "test" => Some(Role::Test),
            _ => None,
        }
    }
}

/// Sampled input/output trajectories, possibly several concatenated
/// segments. Outputs are full-state measurements `y = x + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_time: f64,
    inputs: Matrix,
    outputs: Matrix,
    states: Option<Matrix>,
    segment_starts: Vec<usize>,
    pub role: Role,
    /// SNR of the noise added to the outputs, if any.
    pub snr_db: Option<f64>,
}

impl Dataset {
    pub fn new(
        sample_time: f64,
        inputs: Matrix,
        outputs: Matrix,
        states: Option<Matrix>,
        segment_starts: Vec<usize>,
        role: Role,
    ) -> Result<Self> {
        let n = inputs.rows();
        if outputs.rows() != n || states.as_ref().is_some_and(|s| s.rows() != n) {
            return Err(Error::invalid(
                "inputs, outputs and states differ in length",
            ));
        }
        if !(sample_time > 0.0) {
            return Err(Error::invalid("sample time must be positive"));
        }
        let mut starts = segment_starts;
        if n == 0 {
            starts.clear();
        } else if starts.first() != Some(&0) {
            return Err(Error::invalid("first segment must start at 0"));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) || starts.iter().any(|&s| s >= n.max(1)) {
            return Err(Error::invalid(
                "segment boundaries must be increasing and in range",
            ));
        }
        Ok(Self {
            sample_time,
            inputs,
            outputs,
            states,
            segment_starts: starts,
            role,
            snr_db: None,
        })
    }

    pub fn empty(sample_time: f64, n_u: usize, n_y: usize, role: Role) -> Self {
        Self {
            sample_time,
            inputs: Matrix::zeros(0, n_u),
            outputs: Matrix::zeros(0, n_y),
            states: None,
            segment_starts: vec![],
            role,
            snr_db: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn n_u(&self) -> usize {
        self.inputs.cols()
    }

    pub fn n_y(&self) -> usize {
        self.outputs.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }

    /// Noise-free states, when the generator recorded them.
    pub fn states(&self) -> Option<&Matrix> {
        self.states.as_ref()
    }

    pub fn segment_starts(&self) -> &[usize] {
        &self.segment_starts
    }

    pub fn segments(&self) -> Vec<Range<usize>> {
        let n = self.len();
        self.segment_starts
            .iter()
            .enumerate()
            .map(|(i, &s)| s..self.segment_starts.get(i + 1).copied().unwrap_or(n))
            .collect()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Sub-dataset made of the given sample ranges, each one a segment.
    pub fn select(&self, ranges: &[Range<usize>]) -> Result<Dataset> {
        let n: usize = ranges.iter().map(|r| r.len()).sum();
        let mut inputs = Matrix::zeros(n, self.n_u());
        let mut outputs = Matrix::zeros(n, self.n_y());
        let mut states = self.states.as_ref().map(|s| Matrix::zeros(n, s.cols()));
        let mut starts = Vec::with_capacity(ranges.len());
        let mut row = 0;
        for r in ranges {
            if r.end > self.len() || r.is_empty() {
                return Err(Error::invalid(format!("bad sample range {r:?}")));
            }
            starts.push(row);
            for k in r.clone() {
                inputs.row_mut(row).copy_from_slice(self.inputs.row(k));
                outputs.row_mut(row).copy_from_slice(self.outputs.row(k));
                if let (Some(dst), Some(src)) = (states.as_mut(), self.states.as_ref()) {
                    dst.row_mut(row).copy_from_slice(src.row(k));
                }
                row += 1;
            }
        }
        let mut ds = Dataset::new(self.sample_time, inputs, outputs, states, starts, self.role)?;
        ds.snr_db = self.snr_db;
        Ok(ds)
    }

    /// Concatenates datasets, keeping every segment boundary.
    pub fn concat(parts: &[Dataset], role: Role) -> Result<Dataset> {
        let first = parts
            .iter()
            .find(|p| !p.is_empty())
            .ok_or_else(|| Error::InsufficientData("nothing to concatenate".into()))?;
        let (n_u, n_y) = (first.n_u(), first.n_y());
        let with_states = parts.iter().all(|p| p.states.is_some() || p.is_empty());
        let n: usize = parts.iter().map(Dataset::len).sum();
        let mut inputs = Vec::with_capacity(n * n_u);
        let mut outputs = Vec::with_capacity(n * n_y);
        let mut states = Vec::new();
        let mut starts = Vec::new();
        let mut offset = 0;
        for p in parts.iter().filter(|p| !p.is_empty()) {
            if p.n_u() != n_u || p.n_y() != n_y || p.sample_time != first.sample_time {
                return Err(Error::invalid(
                    "datasets have different shapes or sample times",
                ));
            }
            inputs.extend_from_slice(p.inputs.as_slice());
            outputs.extend_from_slice(p.outputs.as_slice());
            if with_states {
                states.extend_from_slice(p.states.as_ref().expect("checked").as_slice());
            }
            starts.extend(p.segment_starts.iter().map(|s| s + offset));
            offset += p.len();
        }
        let states = if with_states {
            Some(Matrix::from_vec(
                n,
                first.states.as_ref().map_or(n_y, Matrix::cols),
                states,
            )?)
        } else {
            None
        };
        Dataset::new(
            first.sample_time,
            Matrix::from_vec(n, n_u, inputs)?,
            Matrix::from_vec(n, n_y, outputs)?,
            states,
            starts,
            role,
        )
    }

    /// Returns a copy whose outputs carry white Gaussian noise at `snr_db`.
    pub fn with_output_noise(&self, snr_db: f64, rng: &mut DataRng) -> Result<Dataset> {
        let mut noisy = self.clone();
        noisy.outputs = add_noise_snr(&self.outputs, snr_db, rng)?;
        noisy.snr_db = Some(snr_db);
        Ok(noisy)
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `path` (CSV, columns `t, u_*, y_*, x_*`) and a `path.meta`
/// sidecar with sample time, segment boundaries, role and noise level.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let n_x = dataset.states.as_ref().map_or(0, Matrix::cols);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dataset.n_u()).map(|i| format!("u_{i}")));
    header.extend((1..=dataset.n_y()).map(|i| format!("y_{i}")));
    header.extend((1..=n_x).map(|i| format!("x_{i}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for k in 0..dataset.len() {
        record.clear();
        record.push(fmt_f64(k as f64 * dataset.sample_time));
        record.extend(dataset.inputs.row(k).iter().map(|v| fmt_f64(*v)));
        record.extend(dataset.outputs.row(k).iter().map(|v| fmt_f64(*v)));
        if let Some(x) = &dataset.states {
            record.extend(x.row(k).iter().map(|v| fmt_f64(*v)));
        }
        w.write_record(&record).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mut meta = String::new();
    writeln!(meta, "sample_time = {}", fmt_f64(dataset.sample_time)).unwrap();
    writeln!(meta, "role = {}", dataset.role.as_str()).unwrap();
    writeln!(meta, "inputs = {}", dataset.n_u()).unwrap();
    writeln!(meta, "outputs = {}", dataset.n_y()).unwrap();
    writeln!(meta, "states = {n_x}").unwrap();
    let starts: Vec<String> = dataset
        .segment_starts
        .iter()
        .map(usize::to_string)
        .collect();
    writeln!(meta, "segments = {}", starts.join(" ")).unwrap();
    match dataset.snr_db {
        Some(s) => writeln!(meta, "snr_db = {}", fmt_f64(s)).unwrap(),
        None => writeln!(meta, "snr_db = none").unwrap(),
    }
    let mp = meta_path(path);
    fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// Parses `key = value` lines, ignoring blanks and `#` comments.
pub(crate) fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mp = meta_path(path);
    let meta_text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = parse_key_values(&meta_text)?;
    let get = |k: &str| {
        meta.get(k).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("{}: missing key `{k}`", mp.display()),
        })
    };
    let bad = |k: &str| Error::Parse {
        line: 0,
        message: format!("{}: malformed value for `{k}`", mp.display()),
    };
    let sample_time: f64 = get("sample_time")?
        .parse()
        .map_err(|_| bad("sample_time"))?;
    let role = Role::parse(get("role")?).ok_or_else(|| bad("role"))?;
    let segments: Vec<usize> = get("segments")?
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("segments"))?;
    let snr_db = match get("snr_db")?.as_str() {
        "none" => None,
        s => Some(s.parse::<f64>().map_err(|_| bad("snr_db"))?),
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") {
        return Err(Error::Parse {
            line: 1,
            message: "missing column `t`".into(),
        });
    }
    let dim = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(k)) };
    let (n_u, n_y, n_x) = (dim("inputs")?, dim("outputs")?, dim("states")?);
    let mut expected = vec!["t".to_string()];
    expected.extend((1..=n_u).map(|i| format!("u_{i}")));
    expected.extend((1..=n_y).map(|i| format!("y_{i}")));
    expected.extend((1..=n_x).map(|i| format!("x_{i}")));
    let mismatch = expected
        .iter()
        .enumerate()
        .find(|(j, e)| cols.get(*j) != Some(&e.as_str()))
        .map(|(_, e)| e);
    if let Some(missing) = mismatch {
        return Err(Error::Parse {
            line: 1,
            message: format!("missing or misplaced column `{missing}`"),
        });
    }
    if n_u == 0 || n_y == 0 || cols.len() != expected.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {cols:?}"),
        });
    }

    let (mut u, mut y, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{field}`", expected[j]),
            })?;
            match j - 1 {
                i if i < n_u => u.push(v),
                i if i < n_u + n_y => y.push(v),
                _ => x.push(v),
            }
        }
        rows += 1;
    }
    let states = if n_x > 0 {
        Some(Matrix::from_vec(rows, n_x, x)?)
    } else {
        None
    };
    let mut ds = Dataset::new(
        sample_time,
        Matrix::from_vec(rows, n_u, u)?,
        Matrix::from_vec(rows, n_y, y)?,
        states,
        segments,
        role,
    )?;
    ds.snr_db = snr_db;
    Ok(ds)
}

/// Adds white Gaussian noise per column so that the sample SNR
/// `10·log10(P_s / P_n)` of every channel equals `snr_db`, with `P_s` and
/// `P_n` the sample mean powers of signal and noise.
pub fn add_noise_snr(y: &Matrix, snr_db: f64, rng: &mut DataRng) -> Result<Matrix> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let (n, m) = (y.rows(), y.cols());
    if n == 0 {
        return Err(Error::InsufficientData("no samples to corrupt".into()));
    }
    let mut out = y.clone();
    for j in 0..m {
        let col = y.column(j);
        let p_signal = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !(p_signal > 0.0) {
            return Err(Error::DegenerateChannel {
                channel: format!("y_{}", j + 1),
                reason: "zero signal power".into(),
            });
        }
        let p_noise = p_signal / 10f64.powf(snr_db / 10.0);
        let noise: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let drawn = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let scale = if drawn > 0.0 {
            (p_noise / drawn).sqrt()
        } else {
            0.0
        };
        for (k, e) in noise.iter().enumerate() {
            out[(k, j)] += scale * e;
        }
    }
    Ok(out)
}

/// Realized SNR per channel between a clean signal and its noisy copy.
pub fn realized_snr_db(clean: &Matrix, noisy: &Matrix) -> Vec<f64> {
    (0..clean.cols())
        .map(|j| {
            let (mut ps, mut pn) = (0.0, 0.0);
            for k in 0..clean.rows() {
                ps += clean[(k, j)] * clean[(k, j)];
                let e = noisy[(k, j)] - clean[(k, j)];
                pn += e * e;
            }
            10.0 * (ps / pn).log10()
        })
        .collect()
}

/// Moves a random `fraction` of every segment into validation windows.
///
/// Each segment donates one to three contiguous windows, each at least
/// `min_window` samples long; the remaining pieces stay in training and
/// are also kept at least `min_window` long.
pub fn split_train_val(
    dataset: &Dataset,
    fraction: f64,
    min_window: usize,
    rng: &mut DataRng,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid("validation fraction must be in [0, 1)"));
    }
    let min_window = min_window.max(1);
    let mut train_ranges = Vec::new();
    let mut val_ranges = Vec::new();
    for (si, seg) in dataset.segments().into_iter().enumerate() {
        let len = seg.len();
        let val_len = (fraction * len as f64).round() as usize;
        if val_len == 0 {
            train_ranges.push(seg);
            continue;
        }
        if val_len < min_window || len - val_len < min_window {
            return Err(Error::SegmentTooShort {
                segment: si,
                len,
                needed: (min_window as f64 / fraction.min(1.0 - fraction)).ceil() as usize,
            });
        }
        let n_win = (val_len / (3 * min_window)).clamp(1, 3);
        let mut windows: Vec<usize> = vec![val_len / n_win; n_win];
        windows[n_win - 1] += val_len % n_win;
        let gaps = random_gaps(len - val_len, n_win + 1, min_window, rng);
        let mut pos = seg.start;
        for (i, gap) in gaps.iter().enumerate() {
            if *gap > 0 {
                train_ranges.push(pos..pos + gap);
                pos += gap;
            }
            if let Some(w) = windows.get(i) {
                val_ranges.push(pos..pos + w);
                pos += w;
            }
        }
        debug_assert_eq!(pos, seg.end);
    }
    let train = dataset.select(&train_ranges)?.with_role(Role::Train);
    let val = if val_ranges.is_empty() {
        let mut e = Dataset::empty(dataset.sample_time, dataset.n_u(), dataset.n_y(), Role::Val);
        e.snr_db = dataset.snr_db;
        e
    } else {
        dataset.select(&val_ranges)?.with_role(Role::Val)
    };
    Ok((train, val))
}

/// Splits `total` into `parts` gaps that are each zero or >= `min_len`.
fn random_gaps(total: usize, parts: usize, min_len: usize, rng: &mut DataRng) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..parts - 1)
        .map(|_| rng.random_range(0..=total))
        .collect();
    cuts.sort_unstable();
    let mut gaps = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        gaps.push(c - prev);
        prev = c;
    }
    gaps.push(total - prev);
    // fold undersized gaps into their right (or left) neighbour
    for i in 0..parts {
        if gaps[i] > 0 && gaps[i] < min_len {
            let moved = gaps[i];
            gaps[i] = 0;
            let target = if i + 1 < parts { i + 1 } else { i - 1 };
            gaps[target] += moved;
        }
    }
    if gaps[parts - 1] > 0 && gaps[parts - 1] < min_len {
        // can only happen after folding into the last gap from the left
        let moved = gaps[parts - 1];
        gaps[parts - 1] = 0;
        if let Some(g) = gaps.iter_mut().rev().find(|g| **g > 0) {
            *g += moved;
        } else {
            gaps[0] = moved;
        }
    }
    gaps
}

/// How the test prediction was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Simulation over each whole segment from its first measured state.
    FreeRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrmsReport {
    pub channel_names: Vec<String>,
    /// Percent, one entry per output channel.
    pub per_channel: Vec<f64>,
    /// Percent, mean over channels.
    pub mean: f64,
    pub horizon: Horizon,
    pub samples: usize,
    /// First segment whose simulation diverged, if any; NRMS is then ∞.
    pub diverged_segment: Option<usize>,
}

impl NrmsReport {
    pub fn is_diverged(&self) -> bool {
        self.diverged_segment.is_some()
    }

    pub fn to_text(&self, label: &str) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "# NRMS = RMS(y - y_hat) / std(y) per channel, pooled over segments"
        )
        .unwrap();
        writeln!(s, "model = {label}").unwrap();
        writeln!(s, "horizon = free-run").unwrap();
        writeln!(s, "samples = {}", self.samples).unwrap();
        writeln!(
            s,
            "diverged = {}",
            self.diverged_segment
                .map_or("none".to_string(), |i| i.to_string())
        )
        .unwrap();
        writeln!(s, "mean_nrms_percent = {}", fmt_f64(self.mean)).unwrap();
        for (name, v) in self.channel_names.iter().zip(&self.per_channel) {
            writeln!(s, "nrms_percent.{name} = {}", fmt_f64(*v)).unwrap();
        }
        s
    }
}

/// NRMS of free-run simulations of `model` over every segment of `test`.
///
/// Per channel, the error RMS over all samples is divided by the standard
/// deviation of the measured channel over the same samples. The first
/// sample of every segment seeds the simulation.
pub fn nrms(model: &AugmentedModel, test: &Dataset) -> Result<NrmsReport> {
    let n_y = test.n_y();
    if n_y != model.n_x() {
        return Err(Error::Incompatible(format!(
            "dataset has {n_y} outputs, model has {} states",
            model.n_x()
        )));
    }
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let channel_names: Vec<String> = (1..=n_y).map(|i| format!("y_{i}")).collect();
    let mut predictions = Matrix::zeros(test.len(), n_y);
    for (si, seg) in test.segments().into_iter().enumerate() {
        let inputs = test.inputs().row_range(seg.clone());
        let x0 = test.outputs().row(seg.start).to_vec();
        match model.simulate(&x0, &inputs) {
            Ok(sim) => {
                for (i, k) in seg.enumerate() {
                    predictions.row_mut(k).copy_from_slice(sim.row(i));
                }
            }
            Err(Error::SimulationDiverged { .. }) | Err(Error::InvalidInput(_)) => {
                return Ok(NrmsReport {
                    channel_names,
                    per_channel: vec![f64::INFINITY; n_y],
                    mean: f64::INFINITY,
                    horizon: Horizon::FreeRun,
                    samples: test.len(),
                    diverged_segment: Some(si),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let per_channel = nrms_channels(test.outputs(), &predictions)?;
    let mean = per_channel.iter().sum::<f64>() / n_y as f64;
    Ok(NrmsReport {
        channel_names,
        per_channel,
        mean,
        horizon: Horizon::FreeRun,
        samples: test.len(),
        diverged_segment: None,
    })
}

/// Per-channel NRMS in percent between measured and predicted outputs.
pub fn nrms_channels(y: &Matrix, y_hat: &Matrix) -> Result<Vec<f64>> {
    if (y.rows(), y.cols()) != (y_hat.rows(), y_hat.cols()) {
        return Err(Error::invalid("prediction shape differs from data"));
    }
    let n = y.rows() as f64;
    (0..y.cols())
        .map(|j| {
            let col = y.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::DegenerateChannel {
                    channel: format!("y_{}", j + 1),
                    reason: "zero variance in test data".into(),
                });
            }
            let mse = (0..y.rows())
                .map(|k| (y[(k, j)] - y_hat[(k, j)]).powi(2))
                .sum::<f64>()
                / n;
            Ok(100.0 * (mse / var).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use rand::Rng;

    fn synthetic(n: usize, segments: Vec<usize>, seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        let u = Matrix::from_vec(
            n,
            2,
            (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y = Matrix::from_vec(
            n,
            3,
            (0..3 * n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        Dataset::new(0.025, u, y.clone(), Some(y), segments, Role::Train).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut ds = synthetic(50, vec![0, 20, 35], 1);
        ds.snr_db = Some(30.0);
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back, ds);
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.outputs()), bits(ds.outputs()));
    }

    #[test]
    fn csv_missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&synthetic(5, vec![0], 2), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let broken: String = text
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let mut kept: Vec<&str> = f[..2].to_vec();
                kept.extend(&f[3..]);
                kept.join(",") + "\n"
            })
            .collect();
        fs::write(&path, broken).unwrap();
        match load_csv(&path) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("u_2"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&synthetic(5, vec![0], 2), &path).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("1.0,2.0\n");
        fs::write(&path, text).unwrap();
        match load_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn vanishing_noise_at_high_snr() {
        let ds = synthetic(200, vec![0], 3);
        let mut rng = seeded_rng(5);
        let noisy = add_noise_snr(ds.outputs(), 200.0, &mut rng).unwrap();
        for j in 0..3 {
            let col = ds.outputs().column(j);
            let rms = (col.iter().map(|v| v * v).sum::<f64>() / 200.0).sqrt();
            for k in 0..200 {
                assert!((noisy[(k, j)] - ds.outputs()[(k, j)]).abs() < 1e-8 * rms);
            }
        }
    }

    #[test]
    fn snr_is_realized_and_reproducible() {
        let ds = synthetic(500, vec![0], 4);
        let a = add_noise_snr(ds.outputs(), 30.0, &mut seeded_rng(9)).unwrap();
        let b = add_noise_snr(ds.outputs(), 30.0, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
        for s in realized_snr_db(ds.outputs(), &a) {
            assert!((29.5..=30.5).contains(&s), "{s}");
        }
    }

    #[test]
    fn noise_leaves_inputs_and_states_alone() {
        let ds = synthetic(100, vec![0], 4);
        let noisy = ds.with_output_noise(25.0, &mut seeded_rng(1)).unwrap();
        assert_eq!(noisy.inputs(), ds.inputs());
        assert_eq!(noisy.states(), ds.states());
        assert_ne!(noisy.outputs(), ds.outputs());
    }

    #[test]
    fn zero_power_channel_is_rejected() {
        let y = Matrix::zeros(10, 2);
        assert!(matches!(
            add_noise_snr(&y, 30.0, &mut seeded_rng(0)),
            Err(Error::DegenerateChannel { .. })
        ));
    }

    #[test]
    fn split_ratio_and_disjointness() {
        let ds = synthetic(4000, vec![0, 700, 1300, 2000, 2666, 3333], 6);
        let mut rng = seeded_rng(12);
        let (train, val) = split_train_val(&ds, 0.2, 16, &mut rng).unwrap();
        let ratio = val.len() as f64 / (val.len() + train.len()) as f64;
        assert!((0.18..=0.22).contains(&ratio), "{ratio}");
        assert_eq!(train.len() + val.len(), ds.len());
        assert!(train.segments().iter().all(|s| s.len() >= 16));
        assert!(val.segments().iter().all(|s| s.len() >= 16));
        // rows are unique random values, so identity of rows identifies samples
        let key = |d: &Dataset, k: usize| d.inputs().row(k)[0].to_bits();
        let train_keys: std::collections::HashSet<u64> =
            (0..train.len()).map(|k| key(&train, k)).collect();
        assert!((0..val.len()).all(|k| !train_keys.contains(&key(&val, k))));
    }

    #[test]
    fn split_is_deterministic_and_zero_fraction_empty() {
        let ds = synthetic(600, vec![0, 300], 7);
        let a = split_train_val(&ds, 0.2, 15, &mut seeded_rng(3)).unwrap();
        let b = split_train_val(&ds, 0.2, 15, &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
        let (train, val) = split_train_val(&ds, 0.0, 15, &mut seeded_rng(3)).unwrap();
        assert!(val.is_empty());
        assert_eq!(train.len(), 600);
    }

    #[test]
    fn split_rejects_short_segment() {
        let ds = synthetic(100, vec![0, 60], 7);
        assert!(matches!(
            split_train_val(&ds, 0.2, 15, &mut seeded_rng(3)),
            Err(Error::SegmentTooShort { segment: 0, .. })
        ));
    }

    #[test]
    fn nrms_of_mean_predictor_is_100() {
        let ds = synthetic(300, vec![0], 8);
        let y = ds.outputs();
        let mut pred = Matrix::zeros(300, 3);
        for j in 0..3 {
            let m = y.column(j).iter().sum::<f64>() / 300.0;
            for k in 0..300 {
                pred[(k, j)] = m;
            }
        }
        for v in nrms_channels(y, &pred).unwrap() {
            assert!((v - 100.0).abs() < 1e-10);
        }
        assert_eq!(nrms_channels(y, y).unwrap(), vec![0.0; 3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest};

        proptest! {
            #[test]
            fn nrms_scale_invariant(seed in 0u64..500, scale in 0.01f64..100.0) {
                let ds = synthetic(64, vec![0], seed);
                let y = ds.outputs().clone();
                let mut rng = seeded_rng(seed + 1);
                let mut yh = y.clone();
                for v in yh.as_mut_slice() { *v += rng.random_range(-1.0..1.0); }
                let base = nrms_channels(&y, &yh).unwrap();
                let (mut ys, mut yhs) = (y.clone(), yh.clone());
                for k in 0..64 { ys[(k, 1)] *= scale; yhs[(k, 1)] *= scale; }
                let scaled = nrms_channels(&ys, &yhs).unwrap();
                prop_assert!((base[1] - scaled[1]).abs() <= 1e-9 * base[1].max(1.0));
            }
        }
    }
}
