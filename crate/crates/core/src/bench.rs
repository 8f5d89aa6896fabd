//! Benchmark harness: staged, repeated timing of one (field, config)
//! cell with a pluggable clock.
//!
//! Each timed run takes five timestamps, bracketing four stages: setup
//! (staging the input), kernel (the codec), serialize (producing the wire
//! bytes), and teardown. Warm-up runs never touch the clock, so a
//! scripted clock sees exactly `5 * runs` calls per direction.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::analysis::{distortion, HaloGate, PkGate, QualityReport};
use crate::codec::{compress_field, decompress_field};
use crate::datamodel::{
    bitrate, compression_ratio, CompressedStream, CompressionConfig, Field, ParticleSet,
};
use crate::error::{Error, Result};
use crate::preprocess::{merge_3d_to_1d, partition_1d_to_3d, PadSpec};

/// Monotone time in seconds. Implementations must not run backwards.
pub trait TimeSource {
    fn now(&mut self) -> f64;
}

/// Wall-clock time from a fixed origin.
pub struct RealTime {
    origin: Instant,
}

impl RealTime {
    pub fn new() -> Self {
        RealTime { origin: Instant::now() }
    }
}

impl Default for RealTime {
    fn default() -> Self {
        Self::new()
    }
}

impl TimeSource for RealTime {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Replays a fixed list of instants; panics when over-consumed, which
/// turns an unexpected extra clock call into a loud test failure.
pub struct ScriptedClock {
    instants: Vec<f64>,
    cursor: usize,
}

impl ScriptedClock {
    pub fn new(instants: Vec<f64>) -> Self {
        ScriptedClock { instants, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.instants.len() - self.cursor
    }
}

impl TimeSource for ScriptedClock {
    fn now(&mut self) -> f64 {
        let t = self
            .instants
            .get(self.cursor)
            .copied()
            .unwrap_or_else(|| panic!("scripted clock exhausted after {} instants", self.cursor));
        self.cursor += 1;
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Kernel,
    Serialize,
    Teardown,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Setup, Stage::Kernel, Stage::Serialize, Stage::Teardown];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Kernel => "kernel",
            Stage::Serialize => "serialize",
            Stage::Teardown => "teardown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: Stage,
    pub mean_s: f64,
    /// Population standard deviation over the measured runs (0 for one).
    pub std_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub warmup_runs: usize,
    pub measured_runs: usize,
    /// Per-stage statistics in [`Stage::ALL`] order.
    pub stage_times: Vec<StageTime>,
    pub total_mean_s: f64,
    pub total_std_s: f64,
    /// Original bytes / mean total seconds, in GB/s with GB = 1e9 bytes.
    pub throughput_gbps: f64,
}

/// Fraction of total time spent in each stage, in [`Stage::ALL`] order.
/// Fractions sum to 1; a record whose stages are all zero splits evenly.
pub fn stage_breakdown(rec: &TimingRecord) -> [f64; 4] {
    let total: f64 = rec.stage_times.iter().map(|s| s.mean_s).sum();
    if total == 0.0 {
        return [0.25; 4];
    }
    let mut out = [0.0; 4];
    for (i, s) in rec.stage_times.iter().enumerate().take(4) {
        out[i] = s.mean_s / total;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdicts {
    pub pk: Option<PkGate>,
    pub halo: Option<HaloGate>,
}

impl GateVerdicts {
    pub fn all_pass(&self) -> bool {
        self.pk.as_ref().map_or(true, |g| g.pass) && self.halo.as_ref().map_or(true, |g| g.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub field: String,
    pub config: CompressionConfig,
    pub n_values: u64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub ratio: f64,
    pub bitrate: f64,
    pub quality: QualityReport,
    pub compress: TimingRecord,
    pub decompress: TimingRecord,
    /// Worker threads available to codec-internal parallelism.
    pub threads: usize,
    /// Gate outcomes, attached by the sweep layer when gates apply.
    pub verdicts: Option<GateVerdicts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub warmups: usize,
    pub runs: usize,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol { warmups: 10, runs: 10 }
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(stamps: &[[f64; 5]], warmup_runs: usize, original_bytes: u64) -> TimingRecord {
    let totals: Vec<f64> = stamps.iter().map(|t| t[4] - t[0]).collect();
    let (total_mean_s, total_std_s) = mean_std(&totals);
    let stage_times = Stage::ALL
        .iter()
        .enumerate()
        .map(|(s, &stage)| {
            let durs: Vec<f64> = stamps.iter().map(|t| t[s + 1] - t[s]).collect();
            let (mean_s, std_s) = mean_std(&durs);
            StageTime { stage, mean_s, std_s }
        })
        .collect();
    let throughput_gbps =
        if total_mean_s > 0.0 { original_bytes as f64 / 1e9 / total_mean_s } else { f64::INFINITY };
    TimingRecord {
        warmup_runs,
        measured_runs: stamps.len(),
        stage_times,
        total_mean_s,
        total_std_s,
        throughput_gbps,
    }
}

fn raw_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Benchmark one (field, config) cell: compression then decompression,
/// each with `warmups` untimed and `runs` timed repetitions. Every timed
/// run must reproduce the reference output byte for byte.
pub fn run_cell(
    field: &Field,
    config: &CompressionConfig,
    protocol: BenchProtocol,
    clock: &mut dyn TimeSource,
) -> Result<BenchRecord> {
    if protocol.runs == 0 {
        return Err(Error::Config("benchmark needs at least one timed run".into()));
    }
    // Reference outputs, untimed.
    let ref_stream = compress_field(field, config)?;
    let ref_bytes = ref_stream.to_bytes();
    let ref_recon = decompress_field(&ref_stream)?;
    let ref_raw = raw_bytes(&ref_recon.values);

    for _ in 0..protocol.warmups {
        let stream = compress_field(field, config)?;
        std::hint::black_box(&stream);
    }
    let mut stamps = Vec::with_capacity(protocol.runs);
    let mut timed_bytes = ref_bytes.clone();
    for run in 0..protocol.runs {
        let mut t = [0.0f64; 5];
        t[0] = clock.now();
        let staged = field.clone();
        t[1] = clock.now();
        let stream = compress_field(&staged, config)?;
        t[2] = clock.now();
        let bytes = stream.to_bytes();
        t[3] = clock.now();
        drop(staged);
        t[4] = clock.now();
        if bytes != ref_bytes {
            return Err(Error::Domain(format!(
                "compression run {run} produced different bytes than the reference"
            )));
        }
        timed_bytes = bytes;
        stamps.push(t);
    }
    let compress_timing = summarize(&stamps, protocol.warmups, field.byte_len());

    for _ in 0..protocol.warmups {
        let stream = CompressedStream::from_bytes(&timed_bytes)?;
        std::hint::black_box(decompress_field(&stream)?);
    }
    let mut stamps = Vec::with_capacity(protocol.runs);
    let mut timed_recon = ref_recon.clone();
    for run in 0..protocol.runs {
        let mut t = [0.0f64; 5];
        t[0] = clock.now();
        let stream = CompressedStream::from_bytes(&timed_bytes)?;
        t[1] = clock.now();
        let recon = decompress_field(&stream)?;
        t[2] = clock.now();
        let raw = raw_bytes(&recon.values);
        t[3] = clock.now();
        drop(stream);
        t[4] = clock.now();
        if raw != ref_raw {
            return Err(Error::Domain(format!(
                "decompression run {run} produced different bytes than the reference"
            )));
        }
        timed_recon = recon;
        stamps.push(t);
    }
    let decompress_timing = summarize(&stamps, protocol.warmups, field.byte_len());

    let quality = distortion(field, &timed_recon)?;
    Ok(BenchRecord {
        field: field.name.clone(),
        config: config.clone(),
        n_values: field.len() as u64,
        original_bytes: field.byte_len(),
        compressed_bytes: ref_stream.total_bytes(),
        ratio: compression_ratio(field.byte_len(), &ref_stream)?,
        bitrate: bitrate(field.len() as u64, &ref_stream)?,
        quality,
        compress: compress_timing,
        decompress: decompress_timing,
        threads: rayon::current_num_threads(),
        verdicts: None,
    })
}

pub const PARTICLE_COMPONENTS: [&str; 6] = ["x", "y", "z", "vx", "vy", "vz"];

/// Compressed streams for one particle component: the partition layout
/// plus one container per partition.
#[derive(Debug, Clone)]
pub struct ComponentStreams {
    pub component: &'static str,
    pub pad: PadSpec,
    pub streams: Vec<Vec<u8>>,
}

fn component_fields(set: &ParticleSet) -> Vec<Field> {
    let n = set.len();
    PARTICLE_COMPONENTS
        .iter()
        .enumerate()
        .map(|(i, comp)| {
            let values = if i < 3 { set.pos[i].clone() } else { set.vel[i - 3].clone() };
            Field::new(*comp, vec![n], values, None).expect("component field")
        })
        .collect()
}

/// Cube edge for reshaping an n-element stream into near-cubic blocks.
pub fn particle_partition_edge(n: usize) -> usize {
    let mut c = (n as f64).cbrt().round() as usize;
    while c > 1 && c * c * c > n {
        c -= 1;
    }
    c.max(1)
}

fn compress_components(
    fields: &[Field],
    edge: usize,
    config: &CompressionConfig,
) -> Result<Vec<ComponentStreams>> {
    let mut out = Vec::with_capacity(fields.len());
    for (i, f) in fields.iter().enumerate() {
        let (parts, pad) = partition_1d_to_3d(f, [edge, edge, edge])?;
        let mut streams = Vec::with_capacity(parts.len());
        for part in &parts {
            streams.push(compress_field(part, config)?.to_bytes());
        }
        out.push(ComponentStreams { component: PARTICLE_COMPONENTS[i], pad, streams });
    }
    Ok(out)
}

/// Decode one component from its partition streams back to a flat field.
/// Values come back unwrapped, exactly as the codec reconstructed them.
pub fn decode_component(streams: &[Vec<u8>], pad: &PadSpec) -> Result<Field> {
    let mut parts = Vec::with_capacity(streams.len());
    for bytes in streams {
        let stream = CompressedStream::from_bytes(bytes)?;
        parts.push(decompress_field(&stream)?);
    }
    merge_3d_to_1d(&parts, pad)
}

fn concat_raw(fields: &[Field]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        out.extend_from_slice(&raw_bytes(&f.values));
    }
    out
}

/// Benchmark one (particle set, config) cell. All six components are
/// reshaped into near-cubic partitions and compressed per run; the record
/// aggregates bytes and quality over the whole set. Returns the reference
/// streams so the caller can persist them.
pub fn run_particle_cell(
    name: &str,
    set: &ParticleSet,
    config: &CompressionConfig,
    protocol: BenchProtocol,
    clock: &mut dyn TimeSource,
) -> Result<(BenchRecord, Vec<ComponentStreams>)> {
    if protocol.runs == 0 {
        return Err(Error::Config("benchmark needs at least one timed run".into()));
    }
    let fields = component_fields(set);
    let edge = particle_partition_edge(set.len());

    // Reference outputs, untimed.
    let ref_comps = compress_components(&fields, edge, config)?;
    let flat = |comps: &[ComponentStreams]| -> Vec<u8> {
        let mut all = Vec::new();
        for c in comps {
            for s in &c.streams {
                all.extend_from_slice(s);
            }
        }
        all
    };
    let ref_flat = flat(&ref_comps);
    let ref_recon: Vec<Field> = ref_comps
        .iter()
        .map(|c| decode_component(&c.streams, &c.pad))
        .collect::<Result<_>>()?;
    let ref_raw = concat_raw(&ref_recon);

    for _ in 0..protocol.warmups {
        std::hint::black_box(compress_components(&fields, edge, config)?);
    }
    let mut stamps = Vec::with_capacity(protocol.runs);
    for run in 0..protocol.runs {
        let mut t = [0.0f64; 5];
        t[0] = clock.now();
        let staged: Vec<Field> = fields.clone();
        t[1] = clock.now();
        let comps = compress_components(&staged, edge, config)?;
        t[2] = clock.now();
        let bytes = flat(&comps);
        t[3] = clock.now();
        drop(staged);
        t[4] = clock.now();
        if bytes != ref_flat {
            return Err(Error::Domain(format!(
                "compression run {run} produced different bytes than the reference"
            )));
        }
        stamps.push(t);
    }
    let original_bytes = 4 * 6 * set.len() as u64;
    let compress_timing = summarize(&stamps, protocol.warmups, original_bytes);

    for _ in 0..protocol.warmups {
        for c in &ref_comps {
            std::hint::black_box(decode_component(&c.streams, &c.pad)?);
        }
    }
    let mut stamps = Vec::with_capacity(protocol.runs);
    let mut timed_recon = ref_recon;
    for run in 0..protocol.runs {
        let mut t = [0.0f64; 5];
        t[0] = clock.now();
        let parsed: Vec<(&ComponentStreams, Vec<CompressedStream>)> = ref_comps
            .iter()
            .map(|c| {
                let streams: Result<Vec<_>> =
                    c.streams.iter().map(|b| CompressedStream::from_bytes(b)).collect();
                Ok((c, streams?))
            })
            .collect::<Result<_>>()?;
        t[1] = clock.now();
        let mut recon = Vec::with_capacity(6);
        for (c, streams) in &parsed {
            let mut parts = Vec::with_capacity(streams.len());
            for s in streams {
                parts.push(decompress_field(s)?);
            }
            recon.push(merge_3d_to_1d(&parts, &c.pad)?);
        }
        t[2] = clock.now();
        let raw = concat_raw(&recon);
        t[3] = clock.now();
        drop(parsed);
        t[4] = clock.now();
        if raw != ref_raw {
            return Err(Error::Domain(format!(
                "decompression run {run} produced different bytes than the reference"
            )));
        }
        timed_recon = recon;
        stamps.push(t);
    }
    let decompress_timing = summarize(&stamps, protocol.warmups, original_bytes);

    let n = set.len();
    let mut orig_values = Vec::with_capacity(6 * n);
    let mut recon_values = Vec::with_capacity(6 * n);
    for (f, r) in fields.iter().zip(&timed_recon) {
        orig_values.extend_from_slice(&f.values);
        recon_values.extend_from_slice(&r.values);
    }
    let orig_all = Field::new("components", vec![6 * n], orig_values, None)?;
    let recon_all = Field::new("components", vec![6 * n], recon_values, None)?;
    let quality = distortion(&orig_all, &recon_all)?;

    let compressed_bytes = ref_flat.len() as u64;
    Ok((
        BenchRecord {
            field: name.to_string(),
            config: *config,
            n_values: 6 * n as u64,
            original_bytes,
            compressed_bytes,
            ratio: original_bytes as f64 / compressed_bytes as f64,
            bitrate: compressed_bytes as f64 * 8.0 / (6 * n) as f64,
            quality,
            compress: compress_timing,
            decompress: decompress_timing,
            threads: rayon::current_num_threads(),
            verdicts: None,
        },
        ref_comps,
    ))
}
