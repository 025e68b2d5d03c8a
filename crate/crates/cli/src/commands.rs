use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use avenc_core::cost::{count_flops, FlopsReport, LatencyLut};
use avenc_core::latex::{simulate_stream, threshold_grid, ArchEncoder, RecordedEncoder, SimulationResult};
use avenc_core::objective::{Frame, Sequence, SurrogateDecoder, SyntheticWorld};
use avenc_core::search::{evaluate_arch, run_search, train_arch};
use avenc_core::supernet::{arch_layout, init_params, ArchDocument, Params, Reference, SampledArch, SupernetSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn read_input(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {what} {}: {e}", path.display())))
}

struct Data {
    frames: Vec<Frame>,
    decoder: SurrogateDecoder,
    world_seed: u64,
}

fn load_sequence(spec: &SupernetSpec, path: &Path) -> Result<Data> {
    let seq = Sequence::load(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let views: Vec<_> = spec.views.iter().map(|v| v.view).collect();
    if seq.views != views || seq.image_size != spec.dims.image_size {
        return Err(CliError::Validation(format!(
            "{} was captured for a different profile",
            path.display()
        )));
    }
    let world = SyntheticWorld::new(spec, seq.world_seed);
    Ok(Data {
        frames: seq.frames,
        decoder: world.decoder,
        world_seed: seq.world_seed,
    })
}

fn data(cfg: &RunConfig, spec: &SupernetSpec, test: bool) -> Result<Data> {
    let file = if test { &cfg.paths.test_data } else { &cfg.paths.train_data };
    if let Some(p) = file {
        return load_sequence(spec, p);
    }
    let d = &cfg.data;
    let world = SyntheticWorld::new(spec, d.world_seed);
    let frames = if test {
        world.generate_sequence(d.test_seed, &d.test)?
    } else {
        world.generate_sequence(d.train_seed, &d.train)?
    };
    Ok(Data {
        frames,
        decoder: world.decoder,
        world_seed: d.world_seed,
    })
}

fn lut(cfg: &RunConfig, spec: &SupernetSpec) -> Result<LatencyLut> {
    match &cfg.paths.lut {
        Some(p) => {
            let lut = LatencyLut::from_csv_str(&read_input(p, "latency table")?)?;
            lut.check_coverage(spec)?;
            Ok(lut)
        }
        None => Ok(LatencyLut::synthetic(spec, &cfg.device)),
    }
}

fn load_arch(path: &Path, spec: &SupernetSpec) -> Result<SampledArch> {
    let doc = ArchDocument::from_json(&read_input(path, "architecture")?)?;
    Ok(doc.to_arch(spec)?)
}

fn load_params(path: &Path) -> Result<Params> {
    serde_json::from_str(&read_input(path, "parameters")?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// A bundled encoder name or an architecture file; bundled encoders use the full-size spec.
fn resolve_arch(cfg: &RunConfig, arg: Option<&str>) -> Result<(String, SupernetSpec, SampledArch)> {
    if let Some(r) = arg.and_then(Reference::parse) {
        return Ok((r.name().to_string(), SupernetSpec::full(), r.arch()));
    }
    let path = arg.map(PathBuf::from).unwrap_or_else(|| cfg.arch_path());
    let spec = cfg.spec();
    let arch = load_arch(&path, &spec)?;
    Ok((path.display().to_string(), spec, arch))
}

pub fn search(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.spec();
    let lut = lut(cfg, &spec)?;
    let train = data(cfg, &spec, false)?;
    let dir = out_dir(cfg)?;
    let log_path = dir.join("search_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    let mut write_err = None;
    let out = run_search(
        &spec,
        &cfg.search,
        &cfg.loss,
        &cfg.reweight,
        &train.frames,
        &train.decoder,
        &lut,
        cfg.seed,
        |m| {
            if write_err.is_none() {
                let line = serde_json::to_string(m).expect("metrics serialise");
                if let Err(e) = writeln!(log, "{line}") {
                    write_err = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(io_err(&log_path, e));
    }
    log.flush().map_err(|e| io_err(&log_path, e))?;
    let doc = ArchDocument::describe(Some("searched"), &out.arch, &spec)?;
    let arch_path = dir.join("arch.json");
    write_json(&arch_path, &doc)?;
    write_json(&dir.join("arch_params.json"), &out.arch_params)?;
    let ms = lut.score_arch(&spec, &out.arch)?;
    println!(
        "searched {} steps: {:.3} MFLOPs, {ms:.6} ms, lambda_lat {} -> {}",
        cfg.search.steps,
        doc.total_mflops.unwrap_or_default(),
        out.final_lambda_latency,
        arch_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    arch: String,
    steps: usize,
    seed: u64,
    initial_test: avenc_core::search::EvalReport,
    train: avenc_core::search::EvalReport,
    test: avenc_core::search::EvalReport,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.spec();
    let arch_path = cfg.arch_path();
    let arch = load_arch(&arch_path, &spec)?;
    let train = data(cfg, &spec, false)?;
    let test = data(cfg, &spec, true)?;
    if train.world_seed != test.world_seed {
        return Err(CliError::Validation("train and test traces come from different worlds".into()));
    }
    let dir = out_dir(cfg)?;
    let initial = init_params(&arch_layout(&spec, &arch)?, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let initial_test = evaluate_arch(&spec, &arch, &initial, &test.frames, &cfg.loss, &test.decoder)?;
    let log_path = dir.join("train_log.jsonl");
    let mut lines = String::new();
    let out = train_arch(
        &spec,
        &arch,
        &cfg.train,
        &cfg.loss,
        &cfg.reweight,
        &train.frames,
        &train.decoder,
        Some(initial),
        cfg.seed,
        |m| {
            lines.push_str(&serde_json::to_string(m).expect("metrics serialise"));
            lines.push('\n');
        },
    )?;
    fs::write(&log_path, lines).map_err(|e| io_err(&log_path, e))?;
    let params_path = dir.join("params.json");
    write_json(&params_path, &out.params)?;
    let report = TrainReport {
        arch: arch_path.display().to_string(),
        steps: cfg.train.steps,
        seed: cfg.seed,
        initial_test,
        train: evaluate_arch(&spec, &arch, &out.params, &train.frames, &cfg.loss, &train.decoder)?,
        test: evaluate_arch(&spec, &arch, &out.params, &test.frames, &cfg.loss, &test.decoder)?,
    };
    write_json(&dir.join("train_metrics.json"), &report)?;
    println!(
        "trained {} steps: test latent MSE {:.6} (initial {:.6}) -> {}",
        cfg.train.steps,
        report.test.latent_mse,
        report.initial_test.latent_mse,
        params_path.display()
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.spec();
    let arch = load_arch(&cfg.arch_path(), &spec)?;
    let params = load_params(&cfg.params_path())?;
    let train = data(cfg, &spec, false)?;
    let test = data(cfg, &spec, true)?;
    #[derive(Serialize)]
    struct Report {
        train: avenc_core::search::EvalReport,
        test: avenc_core::search::EvalReport,
    }
    let r = Report {
        train: evaluate_arch(&spec, &arch, &params, &train.frames, &cfg.loss, &train.decoder)?,
        test: evaluate_arch(&spec, &arch, &params, &test.frames, &cfg.loss, &test.decoder)?,
    };
    write_json(&out_dir(cfg)?.join("eval.json"), &r)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serialises"));
    Ok(())
}

#[derive(Serialize)]
struct SimRow {
    threshold: f64,
    skip_ratio: f64,
    mean_mse: f64,
}

/// Per-threshold summary without the per-frame records.
#[derive(Serialize)]
struct SimSummary {
    threshold: String,
    skip_ratio: f64,
    steady_skip_ratio: f64,
    mean_mse: f64,
    longest_skip_run: usize,
    effective_mflops: f64,
    measured_mflops: f64,
}

impl From<&SimulationResult> for SimSummary {
    fn from(r: &SimulationResult) -> Self {
        Self {
            threshold: r.threshold.to_string(),
            skip_ratio: r.skip_ratio,
            steady_skip_ratio: r.steady_skip_ratio,
            mean_mse: r.mean_mse,
            longest_skip_run: r.longest_skip_run,
            effective_mflops: r.effective_mflops,
            measured_mflops: r.measured_mflops,
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.spec();
    let arch = load_arch(&cfg.arch_path(), &spec)?;
    let params = load_params(&cfg.params_path())?;
    let test = data(cfg, &spec, true)?;
    let mut live = ArchEncoder::new(&spec, &arch, &params)?;
    let mut enc = RecordedEncoder::record(&mut live, &test.frames)?;
    let l = &cfg.latex;
    let mut thresholds = if l.thresholds.is_empty() {
        threshold_grid(&test.frames, &mut enc, l.window, &test.decoder, l.grid_points)?
    } else {
        l.thresholds.clone()
    };
    if l.include_infinity && !thresholds.contains(&f64::INFINITY) {
        thresholds.push(f64::INFINITY);
    }
    let results = simulate_stream(&test.frames, &mut enc, &thresholds, l.window, &test.decoder)?;
    let dir = out_dir(cfg)?;
    let csv_path = dir.join("simulate.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    for r in &results {
        w.serialize(SimRow {
            threshold: r.threshold,
            skip_ratio: r.skip_ratio,
            mean_mse: r.mean_mse,
        })
        .map_err(|e| io_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| io_err(&csv_path, e))?;
    let summary: Vec<SimSummary> = results.iter().map(SimSummary::from).collect();
    write_json(&dir.join("simulate.json"), &summary)?;
    if l.trace {
        #[derive(Serialize)]
        struct Trace<'a> {
            threshold: String,
            frames: &'a [avenc_core::latex::FrameRecord],
        }
        let traces: Vec<Trace> = results
            .iter()
            .map(|r| Trace {
                threshold: r.threshold.to_string(),
                frames: &r.frames,
            })
            .collect();
        write_json(&dir.join("simulate_trace.json"), &traces)?;
    }
    let base = results.first().map(|r| r.mean_mse).unwrap_or_default();
    for r in &results {
        println!(
            "threshold {:<12} skip {:.3}  mse {:.6} ({:.3}x)",
            r.threshold,
            r.skip_ratio,
            r.mean_mse,
            if base > 0.0 { r.mean_mse / base } else { 1.0 }
        );
    }
    println!("-> {}", csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct FlopsSummary<'a> {
    arch: &'a str,
    total_mflops: f64,
    searchable_mflops: f64,
    fixed_mflops: f64,
    early_path_mflops: f64,
    early_overhead: f64,
    report: &'a FlopsReport,
}

pub fn flops(cfg: &RunConfig, arch: Option<&str>) -> Result<()> {
    let (name, spec, arch) = resolve_arch(cfg, arch)?;
    let report = count_flops(&spec, &arch)?;
    let s = FlopsSummary {
        arch: &name,
        total_mflops: report.total_mflops(),
        searchable_mflops: report.searchable_mflops(),
        fixed_mflops: report.fixed_mflops(),
        early_path_mflops: report.early_path_mflops(),
        early_overhead: report.early_path_mflops() / report.total_mflops(),
        report: &report,
    };
    write_json(&out_dir(cfg)?.join("flops.json"), &s)?;
    println!(
        "{name}: {:.2} MFLOPs total ({:.2} searchable, {:.2} fixed), early path {:.2}%",
        s.total_mflops,
        s.searchable_mflops,
        s.fixed_mflops,
        100.0 * s.early_overhead
    );
    Ok(())
}

pub fn latency(cfg: &RunConfig, arch: Option<&str>) -> Result<()> {
    let (name, spec, arch) = resolve_arch(cfg, arch)?;
    let lut = lut(cfg, &spec)?;
    let ms = lut.score_arch(&spec, &arch)?;
    let dir = out_dir(cfg)?;
    if cfg.paths.lut.is_none() {
        let p = dir.join("lut.csv");
        fs::write(&p, lut.to_csv_string()).map_err(|e| io_err(&p, e))?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        arch: &'a str,
        device: Option<&'a str>,
        latency_ms: f64,
    }
    write_json(
        &dir.join("latency.json"),
        &Report {
            arch: &name,
            device: lut.device(),
            latency_ms: ms,
        },
    )?;
    println!("{name}: {ms} ms");
    Ok(())
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.spec();
    let dir = out_dir(cfg)?;
    let world = SyntheticWorld::new(&spec, cfg.data.world_seed);
    for (name, seed, seq_cfg) in [
        ("train.avsq", cfg.data.train_seed, &cfg.data.train),
        ("test.avsq", cfg.data.test_seed, &cfg.data.test),
    ] {
        let seq = Sequence {
            world_seed: cfg.data.world_seed,
            views: world.views(),
            image_size: spec.dims.image_size,
            frames: world.generate_sequence(seed, seq_cfg)?,
        };
        let p = dir.join(name);
        seq.save(&p).map_err(|e| io_err(&p, e))?;
        println!("{} frames -> {}", seq.frames.len(), p.display());
    }
    Ok(())
}
