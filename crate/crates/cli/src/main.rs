//! `fsc` — generate, compress, analyze, benchmark, and sweep
//! floating-point scientific fields from the command line.
//!
//! Exit codes: 0 on success, 1 when a task fails (including sweeps with
//! failed jobs), 2 on usage or configuration errors. Diagnostics go to
//! standard error; data goes to files.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fsc_core::analysis::{distortion, pk_ratio, power_spectrum, PkGate, QualityReport};
use fsc_core::bench::{run_cell, BenchProtocol, RealTime};
use fsc_core::codec::{compress_field, decompress_field};
use fsc_core::datamodel::{
    read_field, write_field, write_particles, Codec, CompressedStream, CompressionConfig, Mode,
    MAGIC,
};
use fsc_core::preprocess::{merge_3d_to_1d, partition_1d_to_3d, PadSpec};
use fsc_core::synth::{gaussian_random_field, lognormal_density, sample_particles};
use fsc_core::workflow::{execute, JobStatus, RunLedger, SweepSpec};
use fsc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fsc", version, about = "Lossy compression toolkit for scientific fields")]
struct Cli {
    /// Cap the codec thread pool (default: one thread per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic field or particle set.
    Gen(GenArgs),
    /// Compress a stored field into a stream file.
    Compress(CodecArgs),
    /// Decompress a stream (or partition manifest) back into a field file.
    Decompress(DecompressArgs),
    /// Compare a reconstruction against its original.
    Analyze(AnalyzeArgs),
    /// Time one (field, configuration) cell and record the result.
    Bench(BenchArgs),
    /// Run a JSON-configured sweep: plan, execute, gate, select, report.
    Sweep(SweepArgs),
    /// Rebuild report files from an existing sweep output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// `grid` for a scalar field, `particles` for a mock catalog.
    #[arg(long, default_value = "grid")]
    kind: String,
    /// Cubic grid edge (the density grid, for particles).
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Physical box edge length.
    #[arg(long = "box", default_value_t = 256.0)]
    box_length: f64,
    /// Power-spectrum slope of the underlying Gaussian field.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    spectral_index: f64,
    /// Gaussian cutoff wavenumber; omit for none.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Map the Gaussian field through the lognormal transform.
    #[arg(long)]
    lognormal: bool,
    /// Rescale a lognormal field so its maximum hits this value.
    #[arg(long)]
    target_max: Option<f32>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Particle count (particles only).
    #[arg(long, default_value_t = 100_000)]
    particles: usize,
    /// Isotropic velocity dispersion (particles only).
    #[arg(long, default_value_t = 200.0)]
    velocity_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    particle_mass: f64,
    /// Name recorded in the output metadata.
    #[arg(long, default_value = "field")]
    name: String,
    /// Grid: field file path. Particles: output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CodecArgs {
    /// Stored field (raw f32 plus JSON sidecar).
    #[arg(long)]
    input: PathBuf,
    /// Stream file to write.
    #[arg(long)]
    output: PathBuf,
    /// `pred` or `block`.
    #[arg(long)]
    codec: String,
    /// `abs`, `pw_rel`, or `fixed_rate`.
    #[arg(long)]
    mode: String,
    /// Error bound (abs), relative bound (pw_rel), or bits per value.
    #[arg(long, allow_negative_numbers = true)]
    param: f64,
    /// Split a 1-D field into 3-D chunks first, e.g. `--partition 64,64,64`;
    /// writes one stream per chunk plus a JSON manifest at the output path.
    #[arg(long)]
    partition: Option<String>,
}

#[derive(Args)]
struct DecompressArgs {
    /// Stream file or partition manifest produced by `compress`.
    #[arg(long)]
    input: PathBuf,
    /// Field file to write (raw f32 plus JSON sidecar).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Original field file.
    #[arg(long)]
    input: PathBuf,
    /// Reconstructed field file.
    #[arg(long)]
    recon: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    output: PathBuf,
    /// Physical box edge; enables the power-spectrum gate (cubic grids).
    #[arg(long = "box")]
    box_length: Option<f64>,
    /// Measure the spectrum of the density contrast f/mean - 1.
    #[arg(long)]
    contrast: bool,
    #[arg(long, default_value_t = fsc_core::analysis::DEFAULT_PK_TOL)]
    pk_tol: f64,
    /// Drop shells carrying fewer Fourier modes than this from the gate.
    #[arg(long, default_value_t = fsc_core::analysis::DEFAULT_MIN_MODES)]
    min_modes: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Stored field to benchmark.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    codec: String,
    #[arg(long)]
    mode: String,
    #[arg(long, allow_negative_numbers = true)]
    param: f64,
    /// Untimed warm-up runs before measurement.
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Timed measurement runs.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Benchmark record (JSON) destination.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the config file wins if it sets one.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Base seed; the config file wins if it sets one.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for untimed jobs; the config file wins if set.
    #[arg(long)]
    workers: Option<usize>,
    /// Power-spectrum gate tolerance; the config file wins if set.
    #[arg(long)]
    pk_tol: Option<f64>,
    /// Halo-count gate tolerance; the config file wins if set.
    #[arg(long)]
    halo_tol: Option<f64>,
    /// Friends-of-friends linking length; the config file wins if set.
    #[arg(long)]
    linking_length: Option<f64>,
    /// Emit SVG plots; the config file wins if it sets `plots`.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep output directory holding records/ and ledger.json.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = fsc_core::analysis::DEFAULT_PK_TOL)]
    pk_tol: f64,
    #[arg(long, default_value_t = fsc_core::analysis::DEFAULT_HALO_TOL)]
    halo_tol: f64,
    /// Emit SVG plots alongside the tables.
    #[arg(long)]
    plots: bool,
}

fn parse_codec(s: &str) -> Result<Codec> {
    match s {
        "pred" => Ok(Codec::Pred),
        "block" => Ok(Codec::Block),
        _ => Err(Error::Config(format!("unknown codec {s:?} (expected pred or block)"))),
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "abs" => Ok(Mode::Abs),
        "pw_rel" => Ok(Mode::PwRel),
        "fixed_rate" => Ok(Mode::FixedRate),
        _ => Err(Error::Config(format!(
            "unknown mode {s:?} (expected abs, pw_rel, or fixed_rate)"
        ))),
    }
}

fn config_from(codec: &str, mode: &str, param: f64) -> Result<CompressionConfig> {
    CompressionConfig::new(parse_codec(codec)?, parse_mode(mode)?, param)
}

/// Manifest tying partitioned streams back together.
#[derive(Serialize, Deserialize)]
struct PartitionManifest {
    pad: PadSpec,
    config: CompressionConfig,
    parts: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_gen(a: &GenArgs) -> Result<()> {
    let g = gaussian_random_field(a.grid, a.box_length, a.spectral_index, a.cutoff, a.seed)?;
    match a.kind.as_str() {
        "grid" => {
            let mut f = if a.lognormal { lognormal_density(&g, a.target_max)? } else { g };
            f.name = a.name.clone();
            write_field(&f, &a.output)?;
            eprintln!("wrote {} ({} values)", a.output.display(), f.len());
        }
        "particles" => {
            let density = lognormal_density(&g, None)?;
            let set = sample_particles(
                &density,
                a.particles,
                a.box_length,
                a.velocity_sigma,
                a.particle_mass,
                a.seed.wrapping_add(1),
            )?;
            std::fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
            let manifest = write_particles(&set, &a.output, &a.name)?;
            eprintln!("wrote {} ({} particles)", manifest.display(), a.particles);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown kind {other:?} (expected grid or particles)"
            )))
        }
    }
    Ok(())
}

fn parse_partition(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()
        .ok_or_else(|| Error::Config(format!("bad partition spec {s:?} (expected d0,d1,d2)")))?;
    match parts[..] {
        [d0, d1, d2] => Ok([d0, d1, d2]),
        _ => Err(Error::Config(format!("partition spec {s:?} needs exactly three dims"))),
    }
}

fn run_compress(a: &CodecArgs) -> Result<()> {
    let config = config_from(&a.codec, &a.mode, a.param)?;
    let field = read_field(&a.input)?;
    match &a.partition {
        None => {
            let stream = compress_field(&field, &config)?;
            let bytes = stream.to_bytes();
            std::fs::write(&a.output, &bytes).map_err(|e| Error::io(&a.output, e))?;
            report_sizes(field.byte_len() as u64, bytes.len() as u64, &a.output);
        }
        Some(spec) => {
            let dims = parse_partition(spec)?;
            let (parts, pad) = partition_1d_to_3d(&field, dims)?;
            let stem = a.output.file_stem().and_then(|s| s.to_str()).unwrap_or("stream");
            let stem = stem.strip_suffix(".manifest").unwrap_or(stem);
            let dir = a.output.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut names = Vec::with_capacity(parts.len());
            let mut total = 0u64;
            for (p, part) in parts.iter().enumerate() {
                let bytes = compress_field(part, &config)?.to_bytes();
                total += bytes.len() as u64;
                let name = format!("{stem}.part{p:03}.fsc");
                let path = dir.join(&name);
                std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
                names.push(name);
            }
            write_json(&a.output, &PartitionManifest { pad, config, parts: names })?;
            report_sizes(field.byte_len() as u64, total, &a.output);
        }
    }
    Ok(())
}

fn report_sizes(original: u64, compressed: u64, out: &Path) {
    let ratio = original as f64 / compressed as f64;
    eprintln!("wrote {} ({original} -> {compressed} bytes, ratio {ratio:.3})", out.display());
}

fn run_decompress(a: &DecompressArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let field = if bytes.starts_with(&MAGIC) {
        decompress_field(&CompressedStream::from_bytes(&bytes)?)?
    } else {
        let manifest: PartitionManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(&a.input, e))?;
        let dir = a.input.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut parts = Vec::with_capacity(manifest.parts.len());
        for name in &manifest.parts {
            let path = dir.join(name);
            let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            parts.push(decompress_field(&CompressedStream::from_bytes(&raw)?)?);
        }
        merge_3d_to_1d(&parts, &manifest.pad)?
    };
    write_field(&field, &a.output)?;
    eprintln!("wrote {} ({} values)", a.output.display(), field.len());
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    quality: QualityReport,
    pk: Option<PkGate>,
}

fn run_analyze(a: &AnalyzeArgs) -> Result<()> {
    let orig = read_field(&a.input)?;
    let recon = read_field(&a.recon)?;
    let quality = distortion(&orig, &recon)?;
    let pk = match a.box_length {
        Some(box_length) => {
            let po = power_spectrum(&orig, box_length, a.contrast)?;
            let pr = power_spectrum(&recon, box_length, a.contrast)?;
            Some(pk_ratio(&po, &pr, a.pk_tol, a.min_modes)?)
        }
        None => None,
    };
    if let Some(gate) = &pk {
        eprintln!("spectrum gate: {}", if gate.pass { "PASS" } else { "FAIL" });
    }
    write_json(&a.output, &AnalyzeReport { quality, pk })?;
    eprintln!("wrote {}", a.output.display());
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let config = config_from(&a.codec, &a.mode, a.param)?;
    let field = read_field(&a.input)?;
    let protocol = BenchProtocol { warmups: a.warmup, runs: a.runs };
    let mut clock = RealTime::new();
    let record = run_cell(&field, &config, protocol, &mut clock)?;
    eprintln!(
        "{}: ratio {:.3}, compress {:.3} GB/s, decompress {:.3} GB/s",
        config.label(),
        record.ratio,
        record.compress.throughput_gbps,
        record.decompress.throughput_gbps,
    );
    write_json(&a.output, &record)
}

/// Apply a CLI override honoring the config-file-first rule: if the JSON
/// document already sets the key, it wins and the flag only earns a warning.
fn override_key<T: PartialEq + std::fmt::Debug>(
    raw: &serde_json::Value,
    path: &[&str],
    slot: &mut T,
    flag: Option<T>,
    name: &str,
) {
    let Some(value) = flag else { return };
    let mut node = Some(raw);
    for key in path {
        node = node.and_then(|n| n.get(key));
    }
    if node.is_some() {
        if *slot != value {
            eprintln!(
                "warning: --{name} {value:?} ignored; the config file sets {} = {slot:?}",
                path.join(".")
            );
        }
    } else {
        *slot = value;
    }
}

fn run_sweep(a: &SweepArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::io(&a.config, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::json(&a.config, e))?;
    let mut spec = SweepSpec::from_json(&text)?;
    override_key(&raw, &["output_dir"], &mut spec.output_dir, a.output.clone(), "output");
    override_key(&raw, &["seed"], &mut spec.seed, a.seed, "seed");
    override_key(&raw, &["workers"], &mut spec.workers, a.workers, "workers");
    override_key(&raw, &["gates", "pk_tol"], &mut spec.gates.pk_tol, a.pk_tol, "pk-tol");
    override_key(&raw, &["gates", "halo_tol"], &mut spec.gates.halo_tol, a.halo_tol, "halo-tol");
    override_key(
        &raw,
        &["gates", "linking_length"],
        &mut spec.gates.linking_length,
        a.linking_length.map(Some),
        "linking-length",
    );
    override_key(&raw, &["plots"], &mut spec.plots, a.plots.then_some(true), "plots");
    spec.validate()?;

    let output = execute(&spec)?;
    let mut failed = 0;
    for job in &output.ledger.jobs {
        match job.status {
            JobStatus::Failed => {
                failed += 1;
                let detail = job.error.as_deref().unwrap_or("unknown error");
                eprintln!("job {} failed: {detail}", job.id);
            }
            JobStatus::Skipped => {
                failed += 1;
                eprintln!("job {} skipped: {}", job.id, job.error.as_deref().unwrap_or(""));
            }
            _ => {}
        }
    }
    if let Some(selection) = &output.selection {
        match &selection.message {
            Some(m) => eprintln!("{m}"),
            None => {
                for (field, outcome) in &selection.per_field {
                    match outcome {
                        fsc_core::workflow::ChoiceOutcome::Chosen(c) => {
                            eprintln!("field {field}: {} (ratio {:.3})", c.label, c.ratio)
                        }
                        fsc_core::workflow::ChoiceOutcome::NoneAcceptable => {
                            eprintln!("field {field}: no acceptable configuration")
                        }
                    }
                }
            }
        }
    }
    eprintln!(
        "sweep finished: {} jobs, {failed} failed or skipped; outputs in {}",
        output.ledger.jobs.len(),
        output.output_dir.display()
    );
    Ok(output.any_failed)
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let records_dir = a.input.join("records");
    let mut records = Vec::new();
    let entries = std::fs::read_dir(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&records_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            records.push(
                serde_json::from_str::<fsc_core::bench::BenchRecord>(&text)
                    .map_err(|e| Error::json(&path, e))?,
            );
        }
    }
    records.sort_by(|x, y| (&x.field, x.config.label()).cmp(&(&y.field, y.config.label())));

    // Cells whose analysis never completed leave gaps in the tables.
    let mut gaps = Vec::new();
    let ledger_path = a.input.join("ledger.json");
    if let Ok(text) = std::fs::read_to_string(&ledger_path) {
        let ledger: RunLedger =
            serde_json::from_str(&text).map_err(|e| Error::json(&ledger_path, e))?;
        for job in &ledger.jobs {
            if let Some(cell) = job.id.strip_prefix("analysis:") {
                if matches!(job.status, JobStatus::Failed | JobStatus::Skipped) {
                    gaps.push(cell.replacen(':', "__", 1));
                }
            }
        }
        gaps.sort();
    }

    let selection = fsc_core::workflow::select_best_fit(&records)?;
    let inputs = fsc_core::report::ReportInputs {
        records: &records,
        selection: &selection,
        gaps: &gaps,
        pk_tol: a.pk_tol,
        halo_tol: a.halo_tol,
        plots: a.plots,
    };
    let outputs = fsc_core::report::write_report(&a.input, &inputs)?;
    eprintln!("wrote {} report files under {}", outputs.len(), a.input.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gen(a) => run_gen(a).map(|()| false),
        Command::Compress(a) => run_compress(a).map(|()| false),
        Command::Decompress(a) => run_decompress(a).map(|()| false),
        Command::Analyze(a) => run_analyze(a).map(|()| false),
        Command::Bench(a) => run_bench(a).map(|()| false),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => run_report(a).map(|()| false),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not cap the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
