//! TOML experiment configuration. The grammar is documented in
//! `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gradinv_core::{Activation, ActivationKind, RecoveryMode, SubspaceSource, Variant};
use serde::Deserialize;

use crate::data::SyntheticKind;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    d: Option<OneOrMany<usize>>,
    m: OneOrMany<usize>,
    batch_size: usize,
    #[serde(default = "default_depth")]
    depth: usize,
    activation: OneOrMany<String>,
    #[serde(default = "default_transport")]
    transport: String,
    #[serde(default = "default_variant")]
    variant: String,
    #[serde(default = "default_subspace")]
    subspace: String,
    #[serde(default = "default_bias")]
    bias: f64,
    #[serde(default)]
    noise_sigma: Option<OneOrMany<f64>>,
    #[serde(default = "default_projections")]
    projections: usize,
    #[serde(default = "default_mode")]
    mode: String,
    seeds: Seeds,
}

fn default_depth() -> usize {
    2
}
fn default_transport() -> String {
    "relu".into()
}
fn default_variant() -> String {
    "auto".into()
}
fn default_subspace() -> String {
    "gram".into()
}
fn default_bias() -> f64 {
    30.0
}
fn default_projections() -> usize {
    100
}
fn default_mode() -> String {
    "classification".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Basis,
    RandomUnit,
    Idx,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    kind: DataKind,
    #[serde(default = "default_min_sv")]
    min_sv: f64,
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    classes: Option<[u8; 2]>,
    pool: Option<usize>,
}

fn default_min_sv() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    /// One JSON record per line.
    Json,
}

impl FromStr for OutputFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" | "jsonl" => Ok(OutputFormat::Json),
            other => Err(HarnessError::Config(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    data: RawData,
    #[serde(default)]
    output: Option<RawOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataConfig {
    Synthetic { kind: SyntheticKind, min_sv: f64 },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: (u8, u8),
        /// Number of leading images of the two classes to sample from.
        pool: usize,
    },
}

/// One cell of the sweep grid; seeds are iterated separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    /// Input dimension; for image data this is the pixel count.
    pub d: usize,
    pub m: usize,
    pub batch_size: usize,
    pub depth: usize,
    pub activation: Activation,
    /// Hidden activation of the transport layers of a designed deep network.
    pub transport: Activation,
    pub variant: Option<Variant>,
    pub subspace: SubspaceSource,
    pub bias: f64,
    pub noise_sigma: f64,
    pub projections: usize,
    pub mode: RecoveryMode,
}

impl Point {
    /// The estimator that will run: the override or the activation's
    /// default, `"auto"` when neither applies.
    pub fn variant_name(&self) -> String {
        match self.variant.map(Ok).unwrap_or_else(|| Variant::auto(&self.activation)) {
            Ok(v) => v.name().to_string(),
            Err(_) => "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub points: Vec<Point>,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn parse_activation(name: &str) -> Result<Activation> {
    let kind = ActivationKind::from_str(name).map_err(|e| bad(e.to_string()))?;
    Activation::new(kind).map_err(|e| bad(e.to_string()))
}

impl ExperimentConfig {
    /// Reads a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let e = raw.experiment;

        let data = match raw.data.kind {
            DataKind::Basis | DataKind::RandomUnit => {
                if raw.data.images.is_some() || raw.data.labels.is_some() || raw.data.pool.is_some() {
                    return Err(bad("images/labels/pool only apply to kind = \"idx\""));
                }
                let kind = if raw.data.kind == DataKind::Basis {
                    SyntheticKind::Basis
                } else {
                    SyntheticKind::RandomUnit
                };
                if !(raw.data.min_sv > 0.0 && raw.data.min_sv <= 1.0) {
                    return Err(bad(format!("min_sv {} outside (0, 1]", raw.data.min_sv)));
                }
                DataConfig::Synthetic {
                    kind,
                    min_sv: raw.data.min_sv,
                }
            }
            DataKind::Idx => {
                let (Some(images), Some(labels)) = (raw.data.images, raw.data.labels) else {
                    return Err(bad("idx data needs both `images` and `labels`"));
                };
                let [c0, c1] = raw.data.classes.unwrap_or([0, 1]);
                if c0 == c1 {
                    return Err(bad("the two classes must differ"));
                }
                DataConfig::Idx {
                    images: resolve(images),
                    labels: resolve(labels),
                    classes: (c0, c1),
                    pool: raw.data.pool.unwrap_or(500),
                }
            }
        };

        let ds = match (&data, &e.d) {
            (DataConfig::Synthetic { .. }, None) => return Err(bad("synthetic data needs `d`")),
            (DataConfig::Synthetic { .. }, Some(d)) => d.to_vec(),
            // read from the image header at run time
            (DataConfig::Idx { .. }, None) => vec![0],
            (DataConfig::Idx { .. }, Some(_)) => {
                return Err(bad("`d` is fixed by the image size for idx data; omit it"))
            }
        };
        let ms = e.m.to_vec();
        let acts = e.activation.to_vec();
        let noises = e.noise_sigma.map(|n| n.to_vec()).unwrap_or_else(|| vec![0.0]);
        if ds.is_empty() || ms.is_empty() || acts.is_empty() || noises.is_empty() {
            return Err(bad("grid lists must be nonempty"));
        }

        let seeds: Vec<u64> = match e.seeds {
            Seeds::List(v) => v,
            Seeds::Range { start, count } => (start..start + count).collect(),
        };
        if seeds.is_empty() {
            return Err(bad("no seeds"));
        }

        if e.batch_size == 0 {
            return Err(bad("batch_size must be positive"));
        }
        if e.depth < 2 {
            return Err(bad(format!("depth {} below 2", e.depth)));
        }
        if e.projections == 0 {
            return Err(bad("projections must be positive"));
        }
        if !e.bias.is_finite() {
            return Err(bad("bias must be finite"));
        }
        let variant = match e.variant.as_str() {
            "auto" => None,
            v => Some(Variant::from_str(v).map_err(|err| bad(err.to_string()))?),
        };
        let subspace = SubspaceSource::from_str(&e.subspace).map_err(|err| bad(err.to_string()))?;
        let mode = match e.mode.as_str() {
            "classification" => RecoveryMode::Classification,
            "regression" => RecoveryMode::Regression,
            other => return Err(bad(format!("unknown mode `{other}`"))),
        };
        let transport = parse_activation(&e.transport)?;
        if transport.leak().is_none() {
            return Err(bad(format!("transport activation {} is not piecewise linear", transport.name())));
        }

        let mut points = Vec::new();
        for name in &acts {
            let activation = parse_activation(name)?;
            for &d in &ds {
                if matches!(data, DataConfig::Synthetic { .. }) && (d == 0 || e.batch_size > d) {
                    return Err(bad(format!("need 1 <= batch_size <= d, got B={} d={d}", e.batch_size)));
                }
                for &m in &ms {
                    if m == 0 {
                        return Err(bad("m must be positive"));
                    }
                    for &noise_sigma in &noises {
                        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                            return Err(bad(format!("noise_sigma {noise_sigma} must be finite and >= 0")));
                        }
                        points.push(Point {
                            d,
                            m,
                            batch_size: e.batch_size,
                            depth: e.depth,
                            activation: activation.clone(),
                            transport: transport.clone(),
                            variant,
                            subspace,
                            bias: e.bias,
                            noise_sigma,
                            projections: e.projections,
                            mode,
                        });
                    }
                }
            }
        }

        let out = raw.output.unwrap_or(RawOutput {
            path: None,
            format: None,
        });
        Ok(Self {
            points,
            seeds,
            data,
            output_path: out.path.map(resolve),
            format: out.format.unwrap_or(OutputFormat::Csv),
        })
    }
}
