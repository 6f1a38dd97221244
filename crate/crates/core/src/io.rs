//! On-disk formats: dataset directories, checkpoints and experiment reports.
//!
//! A dataset directory holds `manifest.json` and `data.bin`. The binary is
//! little-endian `f32`, row-major; complex fields are a real plane followed
//! by an imaginary plane. Each array in the manifest carries its byte offset,
//! shape and SHA-256.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Param, ParamStore};
use crate::dataset::{BuildSpec, Dataset, LabelNoise};
use crate::error::{Error, Result};
use crate::fdtd::{SourceSpec, TimeGrid, TimeWavefield};
use crate::freq::FreqWavefield;
use crate::nn::{ModelConfig, ModelHandle, NormStats};
use crate::velocity::Grid;

pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"HFNOCKPT";
pub const TRANSFORM_CONVENTION: &str = "U(f) = sum_n p[n] exp(-2 pi i f n dt) dt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub offset: u64,
    pub shape: Vec<usize>,
    pub sha256: String,
}

impl ArrayEntry {
    pub fn byte_len(&self) -> u64 {
        4 * self.shape.iter().product::<usize>() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConstants {
    pub dt: f64,
    pub nt: usize,
    pub peak_freq: f64,
    pub pad_layers: usize,
    pub transform: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub build: BuildSpec,
    pub noise: Option<LabelNoise>,
    pub model_ids: Vec<usize>,
    /// Snapped source positions `(x, z)` in meters.
    pub sources: Vec<(f64, f64)>,
    pub freqs: Vec<f64>,
    pub sample_count: usize,
    pub dtype: String,
    pub constants: PipelineConstants,
    pub arrays: Vec<ArrayEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format { path: "manifest.json".into(), msg });
        if self.format != "helmfno-dataset" {
            return bad(format!("unknown format `{}`", self.format));
        }
        if self.version != DATASET_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.dtype != "f32-le" {
            return bad(format!("unsupported dtype `{}`", self.dtype));
        }
        let mut spans: Vec<(u64, u64)> = self.arrays.iter().map(|a| (a.offset, a.offset + a.byte_len())).collect();
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return bad("overlapping arrays".into());
        }
        Ok(())
    }

    pub fn array(&self, name: &str) -> Result<&ArrayEntry> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format { path: "manifest.json".into(), msg: format!("missing array `{name}`") })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn f32_bytes(x: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * x.len());
    for v in x {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f32_from(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), msg: msg.into() }
}

pub fn manifest_for(d: &Dataset) -> Result<DatasetManifest> {
    d.check()?;
    let g = d.spec.grid;
    let sources = d.spec.sources()?.iter().map(|s| (s.x, s.z)).collect();
    let vel = f32_bytes(&d.velocity);
    let lab = f32_bytes(&d.labels);
    let n = d.count();
    Ok(DatasetManifest {
        format: "helmfno-dataset".into(),
        version: DATASET_VERSION,
        build: d.spec.clone(),
        noise: d.noise,
        model_ids: d.model_ids.clone(),
        sources,
        freqs: d.spec.freqs.clone(),
        sample_count: n * d.spec.n_sources * d.spec.freqs.len(),
        dtype: "f32-le".into(),
        constants: PipelineConstants {
            dt: d.spec.time.dt,
            nt: d.spec.time.nt,
            peak_freq: d.spec.peak_freq,
            pad_layers: d.spec.boundary.n_layers,
            transform: TRANSFORM_CONVENTION.into(),
        },
        arrays: vec![
            ArrayEntry { name: "velocity".into(), offset: 0, shape: vec![n, g.nz, g.nx], sha256: sha256_hex(&vel) },
            ArrayEntry {
                name: "labels".into(),
                offset: vel.len() as u64,
                shape: vec![n, d.spec.n_sources, d.spec.freqs.len(), 2, g.nz, g.nx],
                sha256: sha256_hex(&lab),
            },
        ],
    })
}

pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    let manifest = manifest_for(d)?;
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("data.bin"))?;
    f.write_all(&f32_bytes(&d.velocity))?;
    f.write_all(&f32_bytes(&d.labels))?;
    f.sync_all()?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    m.validate().map_err(|e| match e {
        Error::Format { msg, .. } => format_err(&path, msg),
        e => e,
    })?;
    Ok(m)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let path = dir.join("data.bin");
    let mut bytes = Vec::new();
    fs::File::open(&path)?.read_to_end(&mut bytes)?;
    let expected: u64 = m.arrays.iter().map(|a| a.byte_len()).sum();
    if bytes.len() as u64 != expected {
        return Err(format_err(&path, format!("{} bytes, manifest declares {expected}", bytes.len())));
    }
    let load = |name: &str| -> Result<Vec<f32>> {
        let a = m.array(name)?;
        let (s, e) = (a.offset as usize, (a.offset + a.byte_len()) as usize);
        if e > bytes.len() {
            return Err(format_err(&path, format!("array `{name}` runs past the end of the file")));
        }
        let chunk = &bytes[s..e];
        if sha256_hex(chunk) != a.sha256 {
            return Err(format_err(&path, format!("checksum mismatch in `{name}`")));
        }
        Ok(f32_from(chunk))
    };
    let d = Dataset { spec: m.build.clone(), velocity: load("velocity")?, labels: load("labels")?, noise: m.noise, model_ids: m.model_ids.clone() };
    d.check().map_err(|e| format_err(&path, e.to_string()))?;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    norm: NormStats,
    seed: u64,
    history_digest: String,
    params: Vec<BlobEntry>,
    buffers: Vec<BlobEntry>,
    payload_sha256: String,
}

/// Layout: magic, `u32` version, `u64` header length, JSON header, `f32` payload.
pub fn save_checkpoint(model: &ModelHandle, path: &Path) -> Result<()> {
    let mut payload = Vec::new();
    let mut entries = |store: &ParamStore<f32>| -> Vec<BlobEntry> {
        store
            .params
            .iter()
            .map(|p| {
                let e = BlobEntry { name: p.name.clone(), shape: p.shape.clone(), offset: payload.len() as u64 };
                payload.extend(f32_bytes(&p.data));
                e
            })
            .collect()
    };
    let params = entries(&model.params);
    let buffers = entries(&model.buffers);
    let header = CheckpointHeader {
        config: model.config.clone(),
        norm: model.norm.clone(),
        seed: model.seed,
        history_digest: model.history_digest.clone(),
        params,
        buffers,
        payload_sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_vec(&header)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&payload)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelHandle> {
    let bytes = fs::read(path)?;
    let err = |msg: &str| format_err(path, msg);
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(err("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(err(&format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if bytes.len() < 20 + hlen {
        return Err(err("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..20 + hlen])?;
    let payload = &bytes[20 + hlen..];
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(err("payload checksum mismatch"));
    }
    let load = |entries: &[BlobEntry]| -> Result<ParamStore<f32>> {
        let mut s = ParamStore::new();
        for e in entries {
            let n: usize = e.shape.iter().product();
            let (a, b) = (e.offset as usize, e.offset as usize + 4 * n);
            if b > payload.len() {
                return Err(err(&format!("parameter `{}` runs past the payload", e.name)));
            }
            s.params.push(Param { name: e.name.clone(), shape: e.shape.clone(), data: f32_from(&payload[a..b]) });
        }
        Ok(s)
    };
    let model = ModelHandle {
        config: header.config,
        params: load(&header.params)?,
        buffers: load(&header.buffers)?,
        norm: header.norm,
        seed: header.seed,
        history_digest: header.history_digest,
    };
    model.check_params()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimeMeta {
    format: String,
    version: u32,
    grid: Grid,
    time: TimeGrid,
    source: SourceSpec,
    dtype: String,
    shape: Vec<usize>,
    sha256: String,
}

fn f64_bytes(x: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * x.len());
    for v in x {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f64_from(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

/// `wavefield.json` + `wavefield.bin` (`f64` LE, `[nt, nz, nx]`).
pub fn write_time_wavefield(w: &TimeWavefield, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let bytes = f64_bytes(&w.p);
    let meta = TimeMeta {
        format: "helmfno-time-wavefield".into(),
        version: 1,
        grid: w.grid,
        time: w.time,
        source: w.source,
        dtype: "f64-le".into(),
        shape: vec![w.time.nt, w.grid.nz, w.grid.nx],
        sha256: sha256_hex(&bytes),
    };
    fs::write(dir.join("wavefield.bin"), &bytes)?;
    fs::write(dir.join("wavefield.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_time_wavefield(dir: &Path) -> Result<TimeWavefield> {
    let mpath = dir.join("wavefield.json");
    let meta: TimeMeta = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    if meta.format != "helmfno-time-wavefield" || meta.version != 1 || meta.dtype != "f64-le" {
        return Err(format_err(&mpath, "unrecognized wavefield header"));
    }
    let path = dir.join("wavefield.bin");
    let bytes = fs::read(&path)?;
    let n: usize = meta.shape.iter().product();
    if bytes.len() != 8 * n || n != meta.time.nt * meta.grid.len() {
        return Err(format_err(&path, format!("{} bytes, header declares {}", bytes.len(), 8 * n)));
    }
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(format_err(&path, "checksum mismatch"));
    }
    Ok(TimeWavefield { grid: meta.grid, time: meta.time, source: meta.source, p: f64_from(&bytes) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FreqMeta {
    format: String,
    version: u32,
    grid: Grid,
    time: TimeGrid,
    freqs: Vec<f64>,
    dtype: String,
    /// `[n_freqs, 2, nz, nx]`.
    shape: Vec<usize>,
    sha256: String,
}

/// `fields.json` + `fields.bin` (`f64` LE, real plane then imaginary plane per frequency).
pub fn write_freq_fields(fields: &[FreqWavefield], dir: &Path) -> Result<()> {
    let first = fields.first().ok_or_else(|| Error::InvalidArgument("no fields to write".into()))?;
    fs::create_dir_all(dir)?;
    let mut data = Vec::with_capacity(fields.len() * 2 * first.grid.len());
    for f in fields {
        data.extend(f.u.iter().map(|c| c.re));
        data.extend(f.u.iter().map(|c| c.im));
    }
    let bytes = f64_bytes(&data);
    let meta = FreqMeta {
        format: "helmfno-freq-fields".into(),
        version: 1,
        grid: first.grid,
        time: first.time,
        freqs: fields.iter().map(|f| f.freq).collect(),
        dtype: "f64-le".into(),
        shape: vec![fields.len(), 2, first.grid.nz, first.grid.nx],
        sha256: sha256_hex(&bytes),
    };
    fs::write(dir.join("fields.bin"), &bytes)?;
    fs::write(dir.join("fields.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_freq_fields(dir: &Path) -> Result<Vec<FreqWavefield>> {
    let mpath = dir.join("fields.json");
    let meta: FreqMeta = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    if meta.format != "helmfno-freq-fields" || meta.version != 1 || meta.dtype != "f64-le" {
        return Err(format_err(&mpath, "unrecognized field header"));
    }
    let path = dir.join("fields.bin");
    let bytes = fs::read(&path)?;
    let m = meta.grid.len();
    if bytes.len() != 8 * 2 * m * meta.freqs.len() {
        return Err(format_err(&path, "byte count does not match the header"));
    }
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(format_err(&path, "checksum mismatch"));
    }
    let data = f64_from(&bytes);
    Ok(meta
        .freqs
        .iter()
        .enumerate()
        .map(|(k, &freq)| {
            let block = &data[k * 2 * m..(k + 1) * 2 * m];
            let u = block[..m].iter().zip(&block[m..]).map(|(&re, &im)| Complex64::new(re, im)).collect();
            FreqWavefield { grid: meta.grid, time: meta.time, freq, source_index: 0, model_id: 0, u }
        })
        .collect())
}

/// One row of a report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub configuration: String,
    pub metric: String,
    pub value: f64,
}

/// Collected results with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub hardware: String,
    pub rows: Vec<ReportRow>,
    /// Plot-ready series, e.g. MSE against sigma.
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn hardware_note() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{} {} / {threads} threads", std::env::consts::OS, std::env::consts::ARCH)
}

impl ExperimentReport {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        Self { seed, config_hash, config, hardware: hardware_note(), rows: Vec::new(), series: Vec::new() }
    }

    pub fn push(&mut self, experiment: &str, configuration: &str, metric: &str, value: f64) {
        self.rows.push(ReportRow { experiment: experiment.into(), configuration: configuration.into(), metric: metric.into(), value });
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rows.iter().find(|r| !r.value.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in {} / {}", r.experiment, r.metric)));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("experiment,configuration,metric,value,config_hash\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{:e},{}\n", csv_field(&r.experiment), csv_field(&r.configuration), csv_field(&r.metric), r.value, self.config_hash));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        let (j, c) = (dir.join("report.json"), dir.join("report.csv"));
        fs::write(&j, serde_json::to_string_pretty(self)?)?;
        fs::write(&c, self.to_csv())?;
        Ok((j, c))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
