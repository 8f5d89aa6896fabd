//! Local DAG executor: materializes datasets, runs jobs on a bounded
//! worker pool (timed cells run alone), records a resumable ledger, and
//! hands completed records to selection and reporting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use super::plan::{plan, Job, JobKind};
use super::select::{select_best_fit, Selection};
use super::{DataSource, SweepSpec};
use crate::analysis::{
    default_linking_length, fof_halos, halo_count_ratio, halo_mass_function, pk_ratio,
    power_spectrum, HaloCatalog,
};
use crate::bench::{
    decode_component, run_cell, run_particle_cell, BenchRecord, ComponentStreams, GateVerdicts,
    RealTime, PARTICLE_COMPONENTS,
};
use crate::codec::{compress_field, decompress_field};
use crate::datamodel::{
    read_field, read_particles, write_field, write_particles, CompressedStream, Field,
    ParticleSet,
};
use crate::error::{Error, Result};
use crate::preprocess::PadSpec;
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Done,
    /// Skipped because the fingerprint and outputs from a previous run
    /// still match.
    Reused,
    Failed,
    /// Not run because a dependency failed.
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobOutcome {
    pub id: String,
    pub status: JobStatus,
    pub fingerprint: String,
    /// Output paths relative to the sweep directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLedger {
    pub version: u32,
    /// Outcomes sorted by job id.
    pub jobs: Vec<JobOutcome>,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub output_dir: PathBuf,
    pub ledger: RunLedger,
    /// Gated records for every completed cell, sorted by (field, config).
    pub records: Vec<BenchRecord>,
    /// Absent only when the report job itself failed.
    pub selection: Option<Selection>,
    /// Cells missing from the report because their jobs did not finish.
    pub gaps: Vec<String>,
    pub any_failed: bool,
}

enum DataCell {
    Grid { field: Arc<Field>, box_length: f64, contrast: bool },
    Particles(Arc<ParticleSet>),
}

struct Ctx<'a> {
    spec: &'a SweepSpec,
    cells: Vec<DataCell>,
    hashes: Vec<String>,
    root: PathBuf,
    /// Original halo catalog and mass bins per particle dataset, computed
    /// once and shared by that dataset's analysis jobs.
    orig_halos: Mutex<BTreeMap<usize, Arc<(HaloCatalog, Vec<f64>, Vec<u64>)>>>,
    /// Filled by the report job.
    report_out: Mutex<Option<(Vec<BenchRecord>, Selection)>>,
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn hash_field(f: &Field) -> String {
    let mut bytes = Vec::with_capacity(f.values.len() * 4);
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let dims: Vec<u8> = f.dims.iter().flat_map(|d| (*d as u64).to_le_bytes()).collect();
    sha_hex(&[&dims, &bytes])
}

fn hash_particles(set: &ParticleSet) -> String {
    let mut bytes = Vec::with_capacity(set.len() * 24);
    for comp in set.pos.iter().chain(set.vel.iter()) {
        for v in comp {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha_hex(&[&bytes, &set.box_length.to_le_bytes(), &set.particle_mass.to_le_bytes()])
}

/// Per-dataset generator seed: decorrelated from the sweep seed by index.
fn dataset_seed(spec_seed: u64, dataset: usize) -> u64 {
    spec_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(dataset as u64 + 1))
}

fn materialize(spec: &SweepSpec) -> Result<(Vec<DataCell>, Vec<String>)> {
    let mut cells = Vec::with_capacity(spec.datasets.len());
    let mut hashes = Vec::with_capacity(spec.datasets.len());
    for (di, ds) in spec.datasets.iter().enumerate() {
        let seed = dataset_seed(spec.seed, di);
        let cell = match &ds.source {
            DataSource::GridFile { path } => {
                let mut f = read_field(path)?;
                f.name = ds.name.clone();
                DataCell::Grid {
                    field: Arc::new(f),
                    box_length: ds.box_length().expect("validated"),
                    contrast: ds.contrast,
                }
            }
            DataSource::ParticleFile { manifest } => {
                DataCell::Particles(Arc::new(read_particles(manifest)?))
            }
            DataSource::SynthGrid { grid, box_length, spectral_index, cutoff, lognormal, target_max } => {
                let mut f =
                    crate::synth::gaussian_random_field(*grid, *box_length, *spectral_index, *cutoff, seed)?;
                if *lognormal {
                    f = crate::synth::lognormal_density(&f, *target_max)?;
                }
                f.name = ds.name.clone();
                DataCell::Grid {
                    field: Arc::new(f),
                    box_length: *box_length,
                    contrast: ds.contrast,
                }
            }
            DataSource::SynthParticles {
                n_particles,
                grid,
                box_length,
                spectral_index,
                cutoff,
                velocity_sigma,
                particle_mass,
            } => {
                let g = crate::synth::gaussian_random_field(
                    *grid,
                    *box_length,
                    *spectral_index,
                    *cutoff,
                    seed,
                )?;
                let d = crate::synth::lognormal_density(&g, None)?;
                let set = crate::synth::sample_particles(
                    &d,
                    *n_particles,
                    *box_length,
                    *velocity_sigma,
                    *particle_mass,
                    seed.wrapping_add(1),
                )?;
                DataCell::Particles(Arc::new(set))
            }
        };
        hashes.push(match &cell {
            DataCell::Grid { field, .. } => hash_field(field),
            DataCell::Particles(set) => hash_particles(set),
        });
        cells.push(cell);
    }
    Ok((cells, hashes))
}

fn cell_stem(dataset: &str, config: &crate::datamodel::CompressionConfig) -> String {
    format!("{dataset}__{}", config.slug())
}

#[derive(Serialize, Deserialize)]
struct ComponentEntry {
    component: String,
    pad: PadSpec,
    files: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CellManifest {
    components: Vec<ComponentEntry>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_gen(ctx: &Ctx, di: usize) -> Result<Vec<String>> {
    let name = &ctx.spec.datasets[di].name;
    let data_dir = ctx.root.join("data");
    match &ctx.cells[di] {
        DataCell::Grid { field, .. } => {
            let rel = format!("data/{name}.f32");
            write_field(field, &ctx.root.join(&rel))?;
            Ok(vec![rel.clone(), format!("{rel}.json")])
        }
        DataCell::Particles(set) => {
            write_particles(set, &data_dir, name)?;
            let mut outs = vec![format!("data/{name}.particles.json")];
            for comp in PARTICLE_COMPONENTS {
                outs.push(format!("data/{name}.{comp}.f32"));
                outs.push(format!("data/{name}.{comp}.f32.json"));
            }
            Ok(outs)
        }
    }
}

fn run_bench(
    ctx: &Ctx,
    di: usize,
    config: &crate::datamodel::CompressionConfig,
) -> Result<Vec<String>> {
    let ds = &ctx.spec.datasets[di];
    let stem = cell_stem(&ds.name, config);
    let record_rel = format!("records/{stem}.json");
    let mut clock = RealTime::new();
    let mut outputs = vec![record_rel.clone()];
    let record = match &ctx.cells[di] {
        DataCell::Grid { field, .. } => {
            let record = run_cell(field, config, ctx.spec.protocol, &mut clock)?;
            let stream_rel = format!("streams/{stem}.fsc");
            let bytes = compress_field(field, config)?.to_bytes();
            fs::write(ctx.root.join(&stream_rel), bytes)
                .map_err(|e| Error::io(ctx.root.join(&stream_rel), e))?;
            outputs.push(stream_rel);
            record
        }
        DataCell::Particles(set) => {
            let (record, comps) =
                run_particle_cell(&ds.name, set, config, ctx.spec.protocol, &mut clock)?;
            let cell_dir_rel = format!("streams/{stem}");
            let cell_dir = ctx.root.join(&cell_dir_rel);
            fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
            let mut entries = Vec::with_capacity(comps.len());
            for ComponentStreams { component, pad, streams } in &comps {
                let mut files = Vec::with_capacity(streams.len());
                for (p, bytes) in streams.iter().enumerate() {
                    let file = format!("{component}.part{p:03}.fsc");
                    fs::write(cell_dir.join(&file), bytes)
                        .map_err(|e| Error::io(cell_dir.join(&file), e))?;
                    outputs.push(format!("{cell_dir_rel}/{file}"));
                    files.push(file);
                }
                entries.push(ComponentEntry {
                    component: component.to_string(),
                    pad: pad.clone(),
                    files,
                });
            }
            let manifest = CellManifest { components: entries };
            let manifest_rel = format!("{cell_dir_rel}/cell.json");
            write_text(
                &ctx.root.join(&manifest_rel),
                &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
            )?;
            outputs.push(manifest_rel);
            record
        }
    };
    write_text(
        &ctx.root.join(&record_rel),
        &serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;
    Ok(outputs)
}

fn read_record(root: &Path, stem: &str) -> Result<BenchRecord> {
    let path = root.join(format!("records/{stem}.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// Geometric mass bins spanning the original catalog, doubling from the
/// smallest possible halo mass.
fn derive_mass_edges(catalog: &HaloCatalog) -> Vec<f64> {
    let lo = catalog.n_min as f64 * catalog.particle_mass;
    let max_mass = catalog
        .halos
        .iter()
        .map(|h| h.count as f64 * catalog.particle_mass)
        .fold(0.0f64, f64::max);
    let mut edges = vec![lo];
    let mut e = lo;
    while e <= max_mass {
        e *= 2.0;
        edges.push(e);
    }
    if edges.len() < 2 {
        edges.push(lo * 2.0);
    }
    edges
}

fn orig_halo_bundle(ctx: &Ctx, di: usize) -> Result<Arc<(HaloCatalog, Vec<f64>, Vec<u64>)>> {
    if let Some(b) = ctx.orig_halos.lock().expect("halo cache lock").get(&di) {
        return Ok(b.clone());
    }
    let DataCell::Particles(set) = &ctx.cells[di] else {
        return Err(Error::Domain("halo gate applies to particle datasets".into()));
    };
    let gates = &ctx.spec.gates;
    let ll = gates
        .linking_length
        .unwrap_or_else(|| default_linking_length(set.box_length, set.len()));
    let catalog = fof_halos(set, ll, gates.n_min)?;
    let edges = gates.mass_bins.clone().unwrap_or_else(|| derive_mass_edges(&catalog));
    let counts = halo_mass_function(&catalog, &edges)?;
    let bundle = Arc::new((catalog, edges, counts));
    ctx.orig_halos.lock().expect("halo cache lock").insert(di, bundle.clone());
    Ok(bundle)
}

fn run_analysis(
    ctx: &Ctx,
    di: usize,
    config: &crate::datamodel::CompressionConfig,
) -> Result<Vec<String>> {
    let ds = &ctx.spec.datasets[di];
    let stem = cell_stem(&ds.name, config);
    let mut record = read_record(&ctx.root, &stem)?;
    let gates = &ctx.spec.gates;
    let verdicts = match &ctx.cells[di] {
        DataCell::Grid { field, box_length, contrast } => {
            let stream_path = ctx.root.join(format!("streams/{stem}.fsc"));
            let bytes = fs::read(&stream_path).map_err(|e| Error::io(&stream_path, e))?;
            let recon = decompress_field(&CompressedStream::from_bytes(&bytes)?)?;
            let orig_pk = power_spectrum(field, *box_length, *contrast)?;
            let recon_pk = power_spectrum(&recon, *box_length, *contrast)?;
            GateVerdicts {
                pk: Some(pk_ratio(&orig_pk, &recon_pk, gates.pk_tol, gates.min_modes)?),
                halo: None,
            }
        }
        DataCell::Particles(set) => {
            let cell_dir = ctx.root.join(format!("streams/{stem}"));
            let manifest_path = cell_dir.join("cell.json");
            let text =
                fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let manifest: CellManifest =
                serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
            let mut comps = Vec::with_capacity(6);
            for entry in &manifest.components {
                let mut streams = Vec::with_capacity(entry.files.len());
                for file in &entry.files {
                    let p = cell_dir.join(file);
                    streams.push(fs::read(&p).map_err(|e| Error::io(&p, e))?);
                }
                comps.push(decode_component(&streams, &entry.pad)?.values);
            }
            if comps.len() != 6 {
                return Err(Error::Format(format!(
                    "cell manifest lists {} components, expected 6",
                    comps.len()
                )));
            }
            let vz = comps.pop().unwrap();
            let vy = comps.pop().unwrap();
            let vx = comps.pop().unwrap();
            let z = comps.pop().unwrap();
            let y = comps.pop().unwrap();
            let x = comps.pop().unwrap();
            let recon_set =
                ParticleSet::new([x, y, z], [vx, vy, vz], set.box_length, set.particle_mass)?;
            let bundle = orig_halo_bundle(ctx, di)?;
            let (orig_catalog, edges, orig_counts) = &*bundle;
            let recon_catalog =
                fof_halos(&recon_set, orig_catalog.linking_length, orig_catalog.n_min)?;
            let recon_counts = halo_mass_function(&recon_catalog, edges)?;
            GateVerdicts {
                pk: None,
                halo: Some(halo_count_ratio(edges, orig_counts, &recon_counts, gates.halo_tol)?),
            }
        }
    };
    record.verdicts = Some(verdicts);
    let record_rel = format!("records/{stem}.json");
    write_text(
        &ctx.root.join(&record_rel),
        &serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;
    Ok(vec![record_rel])
}

fn run_report(ctx: &Ctx, completed: &[(usize, crate::datamodel::CompressionConfig)], gaps: &[String]) -> Result<Vec<String>> {
    let mut records = Vec::with_capacity(completed.len());
    for (di, config) in completed {
        records.push(read_record(&ctx.root, &cell_stem(&ctx.spec.datasets[*di].name, config))?);
    }
    records.sort_by(|a, b| (&a.field, a.config.label()).cmp(&(&b.field, b.config.label())));
    let selection = select_best_fit(&records)?;
    let inputs = report::ReportInputs {
        records: &records,
        selection: &selection,
        gaps,
        pk_tol: ctx.spec.gates.pk_tol,
        halo_tol: ctx.spec.gates.halo_tol,
        plots: ctx.spec.plots,
    };
    let outputs = report::write_report(&ctx.root, &inputs)?;
    *ctx.report_out.lock().expect("report lock") = Some((records, selection));
    Ok(outputs)
}

fn job_params_json(ctx: &Ctx, job: &Job) -> String {
    match &job.kind {
        JobKind::Gen { dataset } => {
            let ds = &ctx.spec.datasets[*dataset];
            format!(
                "{}|{}",
                serde_json::to_string(&ds.source).expect("source serializes"),
                dataset_seed(ctx.spec.seed, *dataset)
            )
        }
        JobKind::Bench { dataset, config } => format!(
            "{}|{}|{}",
            serde_json::to_string(config).expect("config serializes"),
            serde_json::to_string(&ctx.spec.protocol).expect("protocol serializes"),
            ctx.hashes[*dataset]
        ),
        JobKind::Analysis { dataset, config } => {
            let ds = &ctx.spec.datasets[*dataset];
            format!(
                "{}|{}|{}|{}|{}",
                serde_json::to_string(config).expect("config serializes"),
                serde_json::to_string(&ctx.spec.gates).expect("gates serializes"),
                ds.contrast,
                ds.box_length().unwrap_or(0.0),
                ctx.hashes[*dataset]
            )
        }
        JobKind::Report => format!("plots={}", ctx.spec.plots),
    }
}

fn fingerprint(ctx: &Ctx, job: &Job, dep_fps: &[&str]) -> String {
    let params = job_params_json(ctx, job);
    let mut parts: Vec<&[u8]> = vec![job.id.as_bytes(), params.as_bytes()];
    for fp in dep_fps {
        parts.push(fp.as_bytes());
    }
    parts.push(env!("CARGO_PKG_VERSION").as_bytes());
    sha_hex(&parts)
}

fn load_previous_ledger(root: &Path) -> BTreeMap<String, JobOutcome> {
    let path = root.join("ledger.json");
    let Ok(text) = fs::read_to_string(&path) else {
        return BTreeMap::new();
    };
    let Ok(ledger) = serde_json::from_str::<RunLedger>(&text) else {
        return BTreeMap::new();
    };
    ledger.jobs.into_iter().map(|j| (j.id.clone(), j)).collect()
}

fn outputs_exist(root: &Path, outcome: &JobOutcome) -> bool {
    outcome.outputs.iter().all(|rel| root.join(rel).exists())
}

/// Plan and run the sweep described by `spec`. Jobs that failed leave
/// their dependents skipped; the report still runs over completed cells.
/// A rerun in the same output directory reuses work whose fingerprint and
/// outputs are intact.
pub fn execute(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let jobs = plan(spec)?;
    let root = spec.output_dir.clone();
    for sub in ["", "data", "streams", "records"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let (cells, hashes) = materialize(spec)?;
    let ctx = Ctx {
        spec,
        cells,
        hashes,
        root: root.clone(),
        orig_halos: Mutex::new(BTreeMap::new()),
        report_out: Mutex::new(None),
    };
    let previous = load_previous_ledger(&root);

    let index: BTreeMap<&str, usize> =
        jobs.iter().enumerate().map(|(i, j)| (j.id.as_str(), i)).collect();
    let mut pending: Vec<usize> = jobs.iter().map(|j| j.depends_on.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); jobs.len()];
    for (i, job) in jobs.iter().enumerate() {
        for dep in &job.depends_on {
            dependents[index[dep.as_str()]].push(i);
        }
    }
    let workers = if spec.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        spec.workers
    };

    let mut fps: Vec<Option<String>> = vec![None; jobs.len()];
    let mut outcomes: Vec<Option<JobOutcome>> = vec![None; jobs.len()];
    let mut tainted: Vec<Option<String>> = vec![None; jobs.len()];
    let mut ready: BTreeSet<&str> =
        jobs.iter().filter(|j| j.depends_on.is_empty()).map(|j| j.id.as_str()).collect();

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<String>>)>();
        let mut running = 0usize;
        let mut bench_running = false;
        let mut finished = 0usize;

        // Settle a terminal job: record its outcome and release dependents.
        // Returns ids that became ready.
        fn settle<'j>(
            i: usize,
            outcome: JobOutcome,
            jobs: &'j [Job],
            dependents: &[Vec<usize>],
            pending: &mut [usize],
            tainted: &mut [Option<String>],
            outcomes: &mut [Option<JobOutcome>],
            ready: &mut BTreeSet<&'j str>,
        ) {
            let bad = matches!(outcome.status, JobStatus::Failed | JobStatus::Skipped);
            outcomes[i] = Some(outcome);
            for &d in &dependents[i] {
                if bad && tainted[d].is_none() {
                    tainted[d] = Some(jobs[i].id.clone());
                }
                pending[d] -= 1;
                if pending[d] == 0 {
                    ready.insert(jobs[d].id.as_str());
                }
            }
        }

        while finished < jobs.len() {
            // Dispatch loop: settle skips/reuses inline, spawn the rest.
            loop {
                if bench_running {
                    break;
                }
                let pick = ready.iter().copied().find(|id| {
                    let i = index[id];
                    let is_bench = matches!(jobs[i].kind, JobKind::Bench { .. });
                    // Inline settles are always allowed; spawns respect
                    // the pool limits checked again below.
                    let inline = tainted[i].is_some() && !matches!(jobs[i].kind, JobKind::Report);
                    if inline {
                        return true;
                    }
                    if is_bench {
                        running == 0
                    } else {
                        running < workers
                    }
                });
                let Some(id) = pick else { break };
                ready.remove(id);
                let i = index[id];
                let dep_fps: Vec<&str> = jobs[i]
                    .depends_on
                    .iter()
                    .map(|d| fps[index[d.as_str()]].as_deref().expect("dep settled"))
                    .collect();
                let fp = fingerprint(&ctx, &jobs[i], &dep_fps);
                fps[i] = Some(fp.clone());

                if let Some(parent) = &tainted[i] {
                    if !matches!(jobs[i].kind, JobKind::Report) {
                        finished += 1;
                        settle(
                            i,
                            JobOutcome {
                                id: jobs[i].id.clone(),
                                status: JobStatus::Skipped,
                                fingerprint: fp,
                                outputs: vec![],
                                error: Some(format!("dependency {parent} did not complete")),
                            },
                            &jobs,
                            &dependents,
                            &mut pending,
                            &mut tainted,
                            &mut outcomes,
                            &mut ready,
                        );
                        continue;
                    }
                }
                let reusable = !matches!(jobs[i].kind, JobKind::Report)
                    && previous.get(jobs[i].id.as_str()).is_some_and(|prev| {
                        matches!(prev.status, JobStatus::Done | JobStatus::Reused)
                            && prev.fingerprint == fp
                            && outputs_exist(&root, prev)
                    });
                if reusable {
                    let prev = &previous[jobs[i].id.as_str()];
                    finished += 1;
                    settle(
                        i,
                        JobOutcome {
                            id: jobs[i].id.clone(),
                            status: JobStatus::Reused,
                            fingerprint: fp,
                            outputs: prev.outputs.clone(),
                            error: None,
                        },
                        &jobs,
                        &dependents,
                        &mut pending,
                        &mut tainted,
                        &mut outcomes,
                        &mut ready,
                    );
                    continue;
                }

                // Spawn. The report job gathers its context first.
                let is_bench = matches!(jobs[i].kind, JobKind::Bench { .. });
                running += 1;
                bench_running = is_bench;
                let tx = tx.clone();
                let job = &jobs[i];
                let ctx_ref = &ctx;
                let report_args = if matches!(job.kind, JobKind::Report) {
                    let mut completed = Vec::new();
                    let mut gaps = Vec::new();
                    for (j, other) in jobs.iter().enumerate() {
                        if let JobKind::Analysis { dataset, config } = &other.kind {
                            let ok = matches!(
                                outcomes[j].as_ref().map(|o| o.status),
                                Some(JobStatus::Done) | Some(JobStatus::Reused)
                            );
                            if ok {
                                completed.push((*dataset, *config));
                            } else {
                                gaps.push(cell_stem(&spec.datasets[*dataset].name, config));
                            }
                        }
                    }
                    gaps.sort();
                    Some((completed, gaps))
                } else {
                    None
                };
                scope.spawn(move || {
                    let result = match &job.kind {
                        JobKind::Gen { dataset } => run_gen(ctx_ref, *dataset),
                        JobKind::Bench { dataset, config } => run_bench(ctx_ref, *dataset, config),
                        JobKind::Analysis { dataset, config } => {
                            run_analysis(ctx_ref, *dataset, config)
                        }
                        JobKind::Report => {
                            let (completed, gaps) = report_args.expect("report context");
                            run_report(ctx_ref, &completed, &gaps)
                        }
                    };
                    let _ = tx.send((i, result));
                });
                if is_bench {
                    break;
                }
            }

            if finished == jobs.len() {
                break;
            }
            if running == 0 {
                // Acyclic plans always leave something ready or running.
                return Err(Error::Job {
                    job: "executor".into(),
                    message: "stalled with jobs outstanding".into(),
                });
            }
            let (i, result) = rx.recv().expect("worker channel open");
            running -= 1;
            if matches!(jobs[i].kind, JobKind::Bench { .. }) {
                bench_running = false;
            }
            finished += 1;
            let outcome = match result {
                Ok(outputs) => JobOutcome {
                    id: jobs[i].id.clone(),
                    status: JobStatus::Done,
                    fingerprint: fps[i].clone().expect("fingerprinted at dispatch"),
                    outputs,
                    error: None,
                },
                Err(e) => JobOutcome {
                    id: jobs[i].id.clone(),
                    status: JobStatus::Failed,
                    fingerprint: fps[i].clone().expect("fingerprinted at dispatch"),
                    outputs: vec![],
                    error: Some(format!("{}: {e}", jobs[i].id)),
                },
            };
            settle(
                i,
                outcome,
                &jobs,
                &dependents,
                &mut pending,
                &mut tainted,
                &mut outcomes,
                &mut ready,
            );
        }
        Ok(())
    })?;

    let mut job_outcomes: Vec<JobOutcome> =
        outcomes.into_iter().map(|o| o.expect("every job settled")).collect();
    job_outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    let any_failed = job_outcomes
        .iter()
        .any(|o| matches!(o.status, JobStatus::Failed | JobStatus::Skipped));
    let ledger = RunLedger { version: 1, jobs: job_outcomes };
    let ledger_path = root.join("ledger.json");
    write_text(&ledger_path, &serde_json::to_string_pretty(&ledger).expect("ledger serializes"))?;

    let report_out = ctx.report_out.lock().expect("report lock").take();
    let gaps: Vec<String> = {
        let mut g = Vec::new();
        for o in &ledger.jobs {
            if o.id.starts_with("analysis:")
                && matches!(o.status, JobStatus::Failed | JobStatus::Skipped)
            {
                g.push(o.id.trim_start_matches("analysis:").replace(':', "__"));
            }
        }
        g.sort();
        g
    };
    let (records, selection) = match report_out {
        Some((records, selection)) => (records, Some(selection)),
        None => (Vec::new(), None),
    };
    Ok(SweepOutput { output_dir: root, ledger, records, selection, gaps, any_failed })
}

/// Convenience wrapper: run a sweep straight from its JSON text.
pub fn run_sweep_json(text: &str) -> Result<SweepOutput> {
    let spec = SweepSpec::from_json(text)?;
    execute(&spec)
}
