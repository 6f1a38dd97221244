//! Command-line front end.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::dataset::{build_dataset_with, fit_norm, BuildSpec};
use crate::error::{Error, Result};
use crate::experiments::{bench_solver, bench_surrogate, crossover, loglog_slope};
use crate::fdtd::{simulate, AbsorbingBoundary, SourceSpec, TimeGrid};
use crate::freq::{bin_frequency, nyquist, reconstruct_time, time_to_freq};
use crate::helmholtz::{assemble, ricker_amplitude, Factorization, HelmholtzBoundary, Stencil};
use crate::io::{
    load_checkpoint, read_dataset, read_time_wavefield, save_checkpoint, write_dataset, write_freq_fields, write_time_wavefield, ExperimentReport,
};
use crate::nn::{FnoConfig, ForwardNetConfig, InputLayout, ModelConfig, ModelHandle, PfnoConfig, WidthRule};
use crate::train::{evaluate_mse, train_with, LossKind, TrainConfig};
use crate::velocity::{synthesize, FamilyKind, FamilySpec, Grid, VelocityModel};

pub const WORKERS_ENV: &str = "HELMFNO_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "helmfno", version, about = "Frequency-domain seismic wavefield surrogates", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Arch {
    Fno,
    Pfno,
    Forwardnet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize velocity models of one family.
    GenVelocity {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-domain simulation of one shot.
    Simulate {
        /// JSON file written by `gen-velocity`.
        #[arg(long)]
        velocity: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        source_x: f64,
        #[arg(long, default_value_t = 10.0)]
        source_z: f64,
        /// Also write transforms at these bin frequencies.
        #[arg(long, value_delimiter = ',')]
        freqs: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Velocity synthesis, simulation and transform for a whole dataset.
    BuildDataset {
        #[arg(long)]
        family: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        sources: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        freqs: Vec<f64>,
        #[arg(long)]
        seed: u64,
        /// Frozen label noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Direct frequency-domain solve for one source.
    HelmholtzSolve {
        #[arg(long)]
        velocity: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        freq: f64,
        #[arg(long)]
        source_x: f64,
        #[arg(long, default_value_t = 10.0)]
        source_z: f64,
        #[arg(long, default_value = "9pt")]
        stencil: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a surrogate on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Models held out at the end of the dataset for testing.
        #[arg(long, default_value_t = 0)]
        test_count: usize,
        #[arg(long, value_enum, default_value = "fno")]
        arch: Arch,
        /// FNO width; PFNO widths follow the band rule scaled by `width / 32`.
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 12)]
        modes: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 0.0016)]
        lr: f64,
        #[arg(long)]
        mse_loss: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test MSE of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall-clock benchmarks of a surrogate or the direct solver.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "64,640,3000")]
        instances: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        /// Direct-solver grid sizes (square).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        freq: f64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Training wall seconds for the crossover estimate.
        #[arg(long)]
        train_seconds: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Band-limited inverse transform of a simulated shot.
    Reconstruct {
        /// Directory written by `simulate`.
        #[arg(long)]
        wavefield: PathBuf,
        /// Inclusive band `lo:hi` in Hz; all bins when omitted.
        #[arg(long)]
        band: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a run directory's report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
}

fn progress(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[helmfno] {stage}: {}", msg.as_ref());
}

/// Applies the worker-count environment variable to the global pool.
pub fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::InvalidArgument(format!("{WORKERS_ENV}={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn family(s: &str) -> Result<FamilyKind> {
    FamilyKind::from_str(s)
}

fn read_models(path: &Path) -> Result<Vec<VelocityModel>> {
    let models: Vec<VelocityModel> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for m in &models {
        m.validate()?;
    }
    Ok(models)
}

fn pick(path: &Path, index: usize) -> Result<VelocityModel> {
    let mut models = read_models(path)?;
    if index >= models.len() {
        return Err(Error::InvalidArgument(format!("model index {index} of {}", models.len())));
    }
    Ok(models.swap_remove(index))
}

fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| Error::InvalidArgument(format!("band `{s}` is not lo:hi")))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("band bound `{x}`")));
    Ok((p(a)?, p(b)?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenVelocity { family: f, count, seed, out } => {
            let spec = FamilySpec::new(family(&f)?);
            let grid = Grid::openfwi();
            let models: Vec<VelocityModel> = (0..count)
                .map(|i| synthesize(&spec, &grid, crate::rng::derive_seed(seed, crate::rng::FAMILY, i as u64)))
                .collect::<Result<_>>()?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, serde_json::to_string(&models)?)?;
            progress("gen-velocity", format!("wrote {count} {} models to {}", spec.kind.as_str(), out.display()));
        }
        Command::Simulate { velocity, index, source_x, source_z, freqs, out } => {
            let v = pick(&velocity, index)?;
            let (iz, ix) = v.grid.snap(source_x, source_z)?;
            let src = SourceSpec::ricker(v.grid.x_of(ix), v.grid.z_of(iz), 15.0);
            let tg = TimeGrid::standard();
            let t = Instant::now();
            let w = simulate(&v, &src, &tg, &AbsorbingBoundary::standard())?;
            progress("simulate", format!("{} steps in {:.2}s", tg.nt, t.elapsed().as_secs_f64()));
            write_time_wavefield(&w, &out)?;
            if !freqs.is_empty() {
                write_freq_fields(&time_to_freq(&w, &freqs)?, &out)?;
            }
        }
        Command::BuildDataset { family: f, count, sources, freqs, seed, noise, out } => {
            let spec = BuildSpec::new(family(&f)?, count, sources, freqs, seed);
            let t = Instant::now();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let mut d = build_dataset_with(&spec, |_| {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                if k.is_multiple_of(10) || k == count {
                    progress("build-dataset", format!("{k}/{count} models"));
                }
            })?;
            if let Some(sigma) = noise {
                d = d.with_label_noise(sigma, seed)?;
            }
            let m = write_dataset(&d, &out)?;
            progress("build-dataset", format!("{} samples in {:.1}s -> {}", m.sample_count, t.elapsed().as_secs_f64(), out.display()));
        }
        Command::HelmholtzSolve { velocity, index, freq, source_x, source_z, stencil, out } => {
            let v = pick(&velocity, index)?;
            let (iz, ix) = v.grid.snap(source_x, source_z)?;
            let src = SourceSpec::ricker(v.grid.x_of(ix), v.grid.z_of(iz), 15.0);
            let stencil = Stencil::from_str(&stencil)?;
            let t = Instant::now();
            let fac = Factorization::new(assemble(&v, freq, &HelmholtzBoundary::standard(), stencil)?)?;
            let (u, residual) = fac.solve_point((iz, ix), ricker_amplitude(&src, &TimeGrid::standard(), freq))?;
            progress("helmholtz-solve", format!("{freq} Hz, residual {residual:.2e}, {:.2}s", t.elapsed().as_secs_f64()));
            write_freq_fields(&[u], &out)?;
        }
        Command::Train { data, test_count, arch, width, modes, epochs, batch, lr, mse_loss, seed, out } => {
            let d = read_dataset(&data)?;
            if test_count >= d.count() {
                return Err(Error::InvalidArgument(format!("test count {test_count} leaves no training models of {}", d.count())));
            }
            let split = d.count() - test_count;
            let (tr, te) = (d.slice(0..split)?, d.slice(split..d.count())?);
            let multi = d.spec.n_sources > 1 || d.spec.freqs.len() > 1;
            let config = match arch {
                Arch::Fno => {
                    let c = if multi { 5 } else { 3 };
                    ModelConfig::Fno(FnoConfig { modes, ..FnoConfig::new(width, c) })
                }
                Arch::Pfno => {
                    let mut p = PfnoConfig::new(d.spec.freqs.clone());
                    p.rule = WidthRule::default().scaled(width as f64 / 32.0);
                    p.modes = modes;
                    ModelConfig::Pfno(p)
                }
                Arch::Forwardnet => ModelConfig::ForwardNet(ForwardNetConfig { base: width, ..Default::default() }),
            };
            let layout = config.layout()?;
            let norm = fit_norm(&tr, layout);
            let sample_layout = if matches!(arch, Arch::Pfno) { InputLayout::WithSource } else { layout };
            let s_tr = tr.samples(sample_layout, &norm, None)?;
            let s_te = if test_count > 0 { Some(te.samples(sample_layout, &norm, None)?) } else { None };
            let mut cfg = TrainConfig::desk(seed);
            cfg.epochs = epochs;
            cfg.batch_size = batch;
            cfg.lr = lr;
            if mse_loss {
                cfg.loss = LossKind::Mse;
            }
            let mut model = ModelHandle::new(config, norm, seed)?;
            let t = Instant::now();
            let hist = train_with(&mut model, &s_tr, s_te.as_ref(), &cfg, |e, l| progress("train", format!("epoch {e} loss {l:.4e}")))?;
            let secs = t.elapsed().as_secs_f64();
            std::fs::create_dir_all(&out)?;
            save_checkpoint(&model, &out.join("model.ckpt"))?;
            std::fs::write(out.join("history.json"), serde_json::to_string_pretty(&hist)?)?;
            let mut report = ExperimentReport::new(seed, json!({ "train": cfg, "model": model.config, "data": d.spec }));
            report.push("train", model.arch(), "train_seconds", secs);
            if let Some(l) = hist.train_loss.last() {
                report.push("train", model.arch(), "final_train_loss", *l);
            }
            if let Some(m) = hist.final_test_mse() {
                report.push("train", model.arch(), "test_mse", m);
            }
            report.write(&out)?;
            progress("train", format!("done in {secs:.1}s -> {}", out.display()));
        }
        Command::Eval { model, data, out } => {
            let m = load_checkpoint(&model)?;
            let d = read_dataset(&data)?;
            let s = d.samples(m.layout()?, &m.norm, None)?;
            let mse = evaluate_mse(&m, &s)?;
            println!("{}", json!({ "arch": m.arch(), "samples": s.len(), "mse": mse }));
            if let Some(out) = out {
                let mut report = ExperimentReport::new(m.seed, json!({ "model": m.config, "data": d.spec }));
                report.push("eval", m.arch(), "mse", mse);
                report.write(&out)?;
            }
        }
        Command::Bench { model, data, instances, batch, sizes, freq, reps, train_seconds, out } => {
            let mut report = ExperimentReport::new(0, json!({ "instances": instances, "batch": batch, "sizes": sizes, "freq": freq, "reps": reps }));
            let mut surrogate_time = None;
            if let (Some(mp), Some(dp)) = (&model, &data) {
                let m = load_checkpoint(mp)?;
                let d = read_dataset(dp)?;
                let s = d.samples(m.layout()?, &m.norm, None)?;
                for &n in &instances {
                    let r = bench_surrogate(&m, &s, n, batch, reps)?;
                    progress("bench", format!("{} per instance {:.3e}s", r.label, r.per_instance));
                    report.push("bench-surrogate", &format!("{}-n{n}", m.arch()), "per_instance_s", r.per_instance);
                    surrogate_time = Some(r.per_instance);
                }
            }
            let mut solver_times = Vec::new();
            for &n in &sizes {
                let g = Grid::new(n, n, 10.0, 10.0)?;
                let v = VelocityModel::constant(g, 3000.0)?;
                let src = SourceSpec::ricker(g.x_of(n / 2), 10.0, 15.0);
                let r = bench_solver(&v, freq, &src, &HelmholtzBoundary::standard(), Stencil::NinePoint, 1, reps)?;
                progress("bench", format!("{} per instance {:.3e}s", r.label, r.per_instance));
                report.push("bench-solver", &format!("n{n}"), "per_instance_s", r.per_instance);
                solver_times.push(r.per_instance);
            }
            if sizes.len() >= 2 {
                let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
                report.push("bench-solver", "all", "loglog_slope", loglog_slope(&ns, &solver_times));
            }
            if let (Some(train_s), Some(nn), Some(fd)) = (train_seconds, surrogate_time, solver_times.first()) {
                let n = crossover(train_s, nn, *fd)?;
                report.push("crossover", "first-size", "n_star", n as f64);
            }
            for r in &report.rows {
                println!("{},{},{},{:e}", r.experiment, r.configuration, r.metric, r.value);
            }
            if let Some(out) = out {
                report.write(&out)?;
            }
        }
        Command::Reconstruct { wavefield, band, out } => {
            let w = read_time_wavefield(&wavefield)?;
            let (lo, hi) = match band {
                Some(b) => parse_band(&b)?,
                None => (0.0, nyquist(&w.time)),
            };
            let freqs: Vec<f64> = (0..=w.time.nt / 2).map(|k| bin_frequency(k, &w.time)).filter(|f| *f >= lo - 1e-9 && *f <= hi + 1e-9).collect();
            let fields = time_to_freq(&w, &freqs)?;
            let r = reconstruct_time(&fields, w.grid, w.time, w.source)?;
            progress("reconstruct", format!("{} bins in [{lo}, {hi}] Hz, rms {:.4e} of {:.4e}", freqs.len(), r.rms(), w.rms()));
            write_time_wavefield(&r, &out)?;
            if !fields.is_empty() {
                write_freq_fields(&fields, &out)?;
            }
        }
        Command::Report { input, format } => {
            let r = ExperimentReport::read(&input)?;
            match format {
                ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&r)?),
                ReportFormat::Csv => print!("{}", r.to_csv()),
            }
        }
    }
    Ok(())
}
