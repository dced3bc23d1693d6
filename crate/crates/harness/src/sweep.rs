//! One attack per (grid point, seed), with records streamed to CSV or JSON
//! lines as they complete.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use gradinv_core::inversion::{run_attack_deep, run_attack_two_layer};
use gradinv_core::model::{gradient_query, init_deep_design, init_two_layer};
use gradinv_core::rng::RNG_VERSION;
use gradinv_core::{AttackConfig, Batch, QueryBudget, ReconstructionResult, SubspaceSource};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig, OutputFormat, Point};
use crate::data::{gen_synthetic, load_idx_pool, ImagePool, SyntheticKind};
use crate::metrics::{label_accuracy, nearest_by_cosine, recon_match};
use crate::{HarnessError, Result};

pub const CSV_HEADER: &str = "d,m,B,activation,seed,recon_error,label_acc,wall_ms,depth,variant,noise_sigma,status";

/// Per-run diagnostics copied out of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub variant: Option<String>,
    pub power_iters: usize,
    pub subspace_residual: f64,
    pub joint_diag_residual: f64,
    pub joint_diag_sweeps: usize,
    pub snapping_residuals: Vec<f64>,
    pub snapping_tolerance: f64,
    pub warnings: Vec<String>,
}

impl StageDiagnostics {
    fn from_result(r: &ReconstructionResult) -> Self {
        let d = &r.diagnostics;
        Self {
            variant: d.variant.map(|v| v.name().to_string()),
            power_iters: d.power_iters,
            subspace_residual: d.subspace_residual,
            joint_diag_residual: d.joint_diag_residual,
            joint_diag_sweeps: d.joint_diag_sweeps,
            snapping_residuals: d.snapping_residuals.clone(),
            snapping_tolerance: d.snapping_tolerance,
            warnings: d.warnings.clone(),
        }
    }
}

/// Outcome of a single attack. The first twelve fields are the CSV columns;
/// the rest only appear in JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub d: usize,
    pub m: usize,
    #[serde(rename = "B")]
    pub batch_size: usize,
    pub activation: String,
    pub seed: u64,
    /// Matched RMS error; for ambiguous runs, that of the best-effort
    /// reconstruction.
    pub recon_error: Option<f64>,
    pub label_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    pub depth: usize,
    pub variant: String,
    pub noise_sigma: f64,
    /// `ok`, `ambiguous` or `failed`.
    pub status: String,

    #[serde(default)]
    pub bias: Option<f64>,
    #[serde(default)]
    pub subspace: Option<String>,
    #[serde(default)]
    pub pi_min: Option<f64>,
    /// Pipeline stage of a failure.
    #[serde(default)]
    pub stage: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    /// Image data only: whether every reconstructed column's nearest pool
    /// image (by cosine) is the matched true image.
    #[serde(default)]
    pub pair_identified: Option<bool>,
    #[serde(default)]
    pub diagnostics: Option<StageDiagnostics>,
    /// Random-stream version the run was drawn with.
    #[serde(default)]
    pub rng: Option<String>,
}

/// The CSV projection of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    d: usize,
    m: usize,
    #[serde(rename = "B")]
    batch_size: usize,
    activation: String,
    seed: u64,
    recon_error: Option<f64>,
    label_acc: Option<f64>,
    wall_ms: Option<u64>,
    depth: usize,
    variant: String,
    noise_sigma: f64,
    status: String,
}

impl From<&ExperimentRecord> for CsvRow {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            d: r.d,
            m: r.m,
            batch_size: r.batch_size,
            activation: r.activation.clone(),
            seed: r.seed,
            recon_error: r.recon_error,
            label_acc: r.label_acc,
            wall_ms: r.wall_ms,
            depth: r.depth,
            variant: r.variant.clone(),
            noise_sigma: r.noise_sigma,
            status: r.status.clone(),
        }
    }
}

impl From<CsvRow> for ExperimentRecord {
    fn from(r: CsvRow) -> Self {
        Self {
            d: r.d,
            m: r.m,
            batch_size: r.batch_size,
            activation: r.activation,
            seed: r.seed,
            recon_error: r.recon_error,
            label_acc: r.label_acc,
            wall_ms: r.wall_ms,
            depth: r.depth,
            variant: r.variant,
            noise_sigma: r.noise_sigma,
            status: r.status,
            bias: None,
            subspace: None,
            pi_min: None,
            stage: None,
            error: None,
            pair_identified: None,
            diagnostics: None,
            rng: None,
        }
    }
}

impl ExperimentRecord {
    fn key(&self) -> String {
        run_key(
            self.d,
            self.m,
            self.batch_size,
            &self.activation,
            self.depth,
            &self.variant,
            self.noise_sigma,
            self.seed,
        )
    }

    /// Parses one CSV data line (no header).
    pub fn from_csv_line(line: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
        let headers = csv::StringRecord::from(CSV_HEADER.split(',').collect::<Vec<_>>());
        let mut rec = csv::StringRecord::new();
        if !rdr.read_record(&mut rec)? {
            return Err(HarnessError::Format("empty CSV line".into()));
        }
        let row: CsvRow = rec.deserialize(Some(&headers))?;
        Ok(row.into())
    }

    pub fn to_csv_line(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(CsvRow::from(self))?;
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Format(e.to_string()))
    }
}

#[allow(clippy::too_many_arguments)]
fn run_key(d: usize, m: usize, b: usize, act: &str, depth: usize, variant: &str, noise: f64, seed: u64) -> String {
    format!("{d}|{m}|{b}|{act}|{depth}|{variant}|{noise}|{seed}")
}

fn point_key(p: &Point, seed: u64) -> String {
    run_key(
        p.d,
        p.m,
        p.batch_size,
        &p.activation.name(),
        p.depth,
        &p.variant_name(),
        p.noise_sigma,
        seed,
    )
}

/// Where batches come from, with image files read once.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic { kind: SyntheticKind, min_sv: f64 },
    Images(ImagePool),
}

impl DataSource {
    pub fn open(cfg: &DataConfig) -> Result<Self> {
        Ok(match cfg {
            DataConfig::Synthetic { kind, min_sv } => DataSource::Synthetic {
                kind: *kind,
                min_sv: *min_sv,
            },
            DataConfig::Idx {
                images,
                labels,
                classes,
                pool,
            } => DataSource::Images(load_idx_pool(images, labels, *classes, *pool)?),
        })
    }

    /// Input dimension fixed by the data, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DataSource::Synthetic { .. } => None,
            DataSource::Images(p) => Some(p.x.nrows()),
        }
    }

    /// The batch for one seed, with pool indices for image data.
    pub fn batch(&self, d: usize, b: usize, seed: u64) -> Result<(Batch, Option<Vec<usize>>)> {
        match self {
            DataSource::Synthetic { kind, min_sv } => Ok((gen_synthetic(d, b, *kind, *min_sv, seed)?, None)),
            DataSource::Images(pool) => {
                let (batch, idx) = pool.sample(b, seed)?;
                Ok((batch, Some(idx)))
            }
        }
    }
}

/// Runs the attack with its diagnostics; the result is `Some` for complete
/// and ambiguous runs.
pub fn run_point_detailed(point: &Point, data: &DataSource, seed: u64) -> (ExperimentRecord, Option<ReconstructionResult>) {
    let start = Instant::now();
    let d = data.dim().unwrap_or(point.d);
    let mut rec = ExperimentRecord {
        d,
        m: point.m,
        batch_size: point.batch_size,
        activation: point.activation.name(),
        seed,
        recon_error: None,
        label_acc: None,
        wall_ms: None,
        depth: point.depth,
        variant: point.variant_name(),
        noise_sigma: point.noise_sigma,
        status: "failed".into(),
        bias: Some(point.bias),
        subspace: Some(
            match point.subspace {
                SubspaceSource::FirstLayerGram => "gram",
                SubspaceSource::Moment => "moment",
            }
            .into(),
        ),
        pi_min: None,
        stage: None,
        error: None,
        pair_identified: None,
        diagnostics: None,
        rng: Some(RNG_VERSION.into()),
    };
    let fail = |mut rec: ExperimentRecord, stage: &str, e: &dyn std::fmt::Display| {
        rec.stage = Some(stage.into());
        rec.error = Some(e.to_string());
        rec.wall_ms = Some(start.elapsed().as_millis() as u64);
        (rec, None)
    };

    let (batch, pool_idx) = match data.batch(d, point.batch_size, seed) {
        Ok(b) => b,
        Err(e) => return fail(rec, "data", &e),
    };
    rec.pi_min = Some(batch.pi_min());

    let params = if point.depth == 2 {
        init_two_layer(point.m, d, seed, point.activation.clone(), point.bias)
    } else {
        let mut acts = vec![point.transport.clone(); point.depth - 2];
        acts.push(point.activation.clone());
        init_deep_design(point.depth, point.m, d, seed, &acts, point.bias)
    };
    let params = match params {
        Ok(p) => p,
        Err(e) => return fail(rec, "model", &e),
    };
    let g = match gradient_query(&params, &batch, point.noise_sigma, seed, &mut QueryBudget::new()) {
        Ok(g) => g,
        Err(e) => return fail(rec, "query", &e),
    };

    let mut cfg = AttackConfig::new(point.batch_size);
    cfg.bias = point.bias;
    cfg.mode = point.mode;
    cfg.variant = point.variant;
    cfg.subspace = point.subspace;
    cfg.projections = point.projections;
    cfg.seed = seed;
    let outcome = if point.depth == 2 {
        run_attack_two_layer(&params, &g, &cfg)
    } else {
        run_attack_deep(&params, &g, &cfg)
    };
    let result = match outcome {
        Ok(r) => {
            rec.status = "ok".into();
            r
        }
        Err(e) => match e.partial_result() {
            Some(p) => {
                rec.status = "ambiguous".into();
                rec.stage = e.stage().map(str::to_string);
                rec.error = Some(e.to_string());
                p.clone()
            }
            None => return fail(rec, e.stage().unwrap_or("attack"), &e),
        },
    };

    rec.diagnostics = Some(StageDiagnostics::from_result(&result));
    match recon_match(batch.x().view(), result.x_hat.view()) {
        Ok((err, perm)) => {
            rec.recon_error = Some(err);
            rec.label_acc = Some(label_accuracy(batch.y().view(), result.y_hat.view(), &perm));
            if let (Some(idx), DataSource::Images(pool)) = (&pool_idx, data) {
                let hit = perm
                    .iter()
                    .enumerate()
                    .all(|(i, &j)| nearest_by_cosine(pool.x.view(), result.x_hat.column(j)) == idx[i]);
                rec.pair_identified = Some(hit);
            }
        }
        Err(e) => {
            rec.stage = Some("metrics".into());
            rec.error = Some(e.to_string());
        }
    }
    rec.wall_ms = Some(start.elapsed().as_millis() as u64);
    (rec, Some(result))
}

pub fn run_point(point: &Point, data: &DataSource, seed: u64) -> ExperimentRecord {
    run_point_detailed(point, data, seed).0
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Concurrent attacks; records are still written in grid order.
    pub jobs: usize,
    /// Keep the valid records already in the output file and run only the
    /// missing ones.
    pub resume: bool,
    /// `None` writes to standard output.
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl SweepOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            jobs: 1,
            resume: false,
            out: cfg.output_path.clone(),
            format: cfg.format,
        }
    }
}

/// Reads the intact prefix of an output file: complete, parseable lines
/// (after the CSV header). Returns the records and the byte length of that
/// prefix.
fn read_existing(path: &Path, format: OutputFormat) -> Result<(Vec<ExperimentRecord>, u64)> {
    let text = match fs::read(path) {
        Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    let mut kept = 0usize;
    let mut offset = 0usize;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        // a line cut short by a crash has no newline
        let Some(body) = line.strip_suffix('\n') else { break };
        let body = body.strip_suffix('\r').unwrap_or(body);
        let parsed = match format {
            OutputFormat::Csv if i == 0 => {
                if body != CSV_HEADER {
                    break;
                }
                kept = offset;
                continue;
            }
            OutputFormat::Csv => ExperimentRecord::from_csv_line(body).ok(),
            OutputFormat::Json => serde_json::from_str::<ExperimentRecord>(body).ok(),
        };
        match parsed {
            Some(r) => {
                records.push(r);
                kept = offset;
            }
            None => break,
        }
    }
    Ok((records, kept as u64))
}

enum Sink {
    Csv(Box<dyn Write + Send>),
    Json(Box<dyn Write + Send>),
}

impl Sink {
    fn emit(&mut self, rec: &ExperimentRecord) -> Result<()> {
        match self {
            Sink::Csv(w) => {
                w.write_all(rec.to_csv_line()?.as_bytes())?;
                w.flush()?;
            }
            Sink::Json(w) => {
                serde_json::to_writer(&mut *w, rec)?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Runs every (point, seed) pair, appending each record to the output as
/// soon as it and all earlier ones are done. `on_record` sees every new
/// record in order. Returns the full record set, resumed ones first.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    opts: &SweepOptions,
    mut on_record: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    let data = DataSource::open(&cfg.data)?;
    let points: Vec<Point> = cfg
        .points
        .iter()
        .map(|p| Point {
            d: data.dim().unwrap_or(p.d),
            ..p.clone()
        })
        .collect();

    let (mut records, mut sink) = match &opts.out {
        None => {
            let out: Box<dyn Write + Send> = Box::new(io::stdout());
            let mut sink = match opts.format {
                OutputFormat::Csv => Sink::Csv(out),
                OutputFormat::Json => Sink::Json(out),
            };
            if let Sink::Csv(w) = &mut sink {
                writeln!(w, "{CSV_HEADER}")?;
            }
            (Vec::new(), sink)
        }
        Some(path) => {
            let (existing, keep) = if opts.resume {
                read_existing(path, opts.format)?
            } else {
                (Vec::new(), 0)
            };
            let file = OpenOptions::new().create(true).write(true).truncate(false).open(path)?;
            file.set_len(keep)?;
            let mut file: File = file;
            use std::io::Seek;
            file.seek(io::SeekFrom::End(0))?;
            let out: Box<dyn Write + Send> = Box::new(BufWriter::new(file));
            let mut sink = match opts.format {
                OutputFormat::Csv => Sink::Csv(out),
                OutputFormat::Json => Sink::Json(out),
            };
            if keep == 0 {
                if let Sink::Csv(w) = &mut sink {
                    writeln!(w, "{CSV_HEADER}")?;
                    w.flush()?;
                }
            }
            (existing, sink)
        }
    };

    let done: HashSet<String> = records.iter().map(ExperimentRecord::key).collect();
    let work: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .filter(|&(p, s)| !done.contains(&point_key(&points[p], s)))
        .collect();

    let jobs = opts.jobs.max(1).min(work.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, ExperimentRecord)>();
    let mut write_err: Option<HarnessError> = None;
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, work, points, data) = (&next, &work, &points, &data);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(p, seed)) = work.get(k) else { break };
                if tx.send((k, run_point(&points[p], data, seed))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // serialize emission in work order
        let mut pending = BTreeMap::new();
        let mut emitted = 0;
        for (k, rec) in rx {
            pending.insert(k, rec);
            while let Some(rec) = pending.remove(&emitted) {
                if write_err.is_none() {
                    if let Err(e) = sink.emit(&rec) {
                        write_err = Some(e);
                        // stop handing out work
                        next.store(work.len(), Ordering::SeqCst);
                    }
                }
                on_record(&rec);
                records.push(rec);
                emitted += 1;
            }
        }
    });
    match write_err {
        Some(e) => Err(e),
        None => Ok(records),
    }
}
