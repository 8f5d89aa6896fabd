//! Turn a sweep spec into a topologically sorted job list.

use std::collections::{BTreeMap, BTreeSet};

use super::SweepSpec;
use crate::datamodel::CompressionConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum JobKind {
    /// Materialize a synthetic dataset to disk. `dataset` indexes the spec.
    Gen { dataset: usize },
    /// Compress + decompress one (dataset, config) cell under the timing
    /// protocol and persist the streams and the record.
    Bench { dataset: usize, config: CompressionConfig },
    /// Gate one cell's reconstruction and attach verdicts to its record.
    Analysis { dataset: usize, config: CompressionConfig },
    /// Collect records, select the best fit, and write the report files.
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub depends_on: Vec<String>,
}

pub fn gen_id(dataset: &str) -> String {
    format!("gen:{dataset}")
}

pub fn bench_id(dataset: &str, config: &CompressionConfig) -> String {
    format!("bench:{dataset}:{}", config.slug())
}

pub fn analysis_id(dataset: &str, config: &CompressionConfig) -> String {
    format!("analysis:{dataset}:{}", config.slug())
}

pub const REPORT_ID: &str = "report";

/// Plan the DAG: a bench job per (dataset, config) cell, an analysis job
/// per cell, gen jobs for synthetic datasets, and one report job at the
/// tail. The returned list is topologically sorted with deterministic
/// order and ids.
pub fn plan(spec: &SweepSpec) -> Result<Vec<Job>> {
    spec.validate()?;
    let mut jobs: Vec<Job> = Vec::new();
    let mut analysis_ids = Vec::new();
    for (di, ds) in spec.datasets.iter().enumerate() {
        let gen = if ds.source.is_synthetic() {
            let id = gen_id(&ds.name);
            jobs.push(Job { id: id.clone(), kind: JobKind::Gen { dataset: di }, depends_on: vec![] });
            Some(id)
        } else {
            None
        };
        for cfg in &ds.configs {
            let b = bench_id(&ds.name, cfg);
            let a = analysis_id(&ds.name, cfg);
            jobs.push(Job {
                id: b.clone(),
                kind: JobKind::Bench { dataset: di, config: *cfg },
                depends_on: gen.iter().cloned().collect(),
            });
            jobs.push(Job {
                id: a.clone(),
                kind: JobKind::Analysis { dataset: di, config: *cfg },
                depends_on: vec![b],
            });
            analysis_ids.push(a);
        }
    }
    jobs.push(Job {
        id: REPORT_ID.into(),
        kind: JobKind::Report,
        depends_on: analysis_ids,
    });

    let ids: BTreeSet<&str> = jobs.iter().map(|j| j.id.as_str()).collect();
    if ids.len() != jobs.len() {
        return Err(Error::Planning("duplicate job ids in plan".into()));
    }
    for (id, deps) in &spec.extra_deps {
        if !ids.contains(id.as_str()) {
            return Err(Error::Planning(format!("extra_deps names unknown job {id:?}")));
        }
        for dep in deps {
            if !ids.contains(dep.as_str()) {
                return Err(Error::Planning(format!(
                    "extra_deps for {id:?} names unknown job {dep:?}"
                )));
            }
        }
    }
    for job in &mut jobs {
        if let Some(extra) = spec.extra_deps.get(&job.id) {
            for dep in extra {
                if dep == &job.id {
                    return Err(Error::Planning(format!("job {:?} depends on itself", job.id)));
                }
                if !job.depends_on.contains(dep) {
                    job.depends_on.push(dep.clone());
                }
            }
        }
    }
    toposort(jobs)
}

/// Kahn's algorithm with an id-ordered ready set, so equal plans sort
/// identically. A cycle is reported as an explicit id path.
fn toposort(jobs: Vec<Job>) -> Result<Vec<Job>> {
    let index: BTreeMap<&str, usize> =
        jobs.iter().enumerate().map(|(i, j)| (j.id.as_str(), i)).collect();
    let mut pending: Vec<usize> = jobs.iter().map(|j| j.depends_on.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); jobs.len()];
    for (i, job) in jobs.iter().enumerate() {
        for dep in &job.depends_on {
            dependents[index[dep.as_str()]].push(i);
        }
    }
    let mut ready: BTreeSet<&str> =
        jobs.iter().filter(|j| j.depends_on.is_empty()).map(|j| j.id.as_str()).collect();
    let mut order = Vec::with_capacity(jobs.len());
    while let Some(&id) = ready.iter().next() {
        ready.remove(id);
        let i = index[id];
        order.push(i);
        for &d in &dependents[i] {
            pending[d] -= 1;
            if pending[d] == 0 {
                ready.insert(jobs[d].id.as_str());
            }
        }
    }
    if order.len() != jobs.len() {
        let stuck: Vec<usize> =
            (0..jobs.len()).filter(|&i| pending[i] > 0).collect();
        return Err(Error::Planning(format!("dependency cycle: {}", name_cycle(&jobs, &stuck))));
    }
    let mut sorted: Vec<Option<Job>> = jobs.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| sorted[i].take().expect("each index once")).collect())
}

/// Walk the stuck subgraph until a node repeats, yielding one concrete
/// cycle like `a -> b -> a`.
fn name_cycle(jobs: &[Job], stuck: &[usize]) -> String {
    let in_stuck: BTreeSet<&str> = stuck.iter().map(|&i| jobs[i].id.as_str()).collect();
    let mut path: Vec<&str> = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cur = jobs[stuck[0]].id.as_str();
    loop {
        if let Some(&at) = seen.get(cur) {
            path.push(cur);
            return path[at..].join(" -> ");
        }
        seen.insert(cur, path.len());
        path.push(cur);
        let job = &jobs[stuck.iter().copied().find(|&i| jobs[i].id == cur).expect("stuck id")];
        cur = job
            .depends_on
            .iter()
            .map(String::as_str)
            .find(|d| in_stuck.contains(d))
            .expect("stuck job keeps a stuck dependency");
    }
}

#[cfg(test)]
mod tests {
    use super::super::{DataSource, DatasetSpec, GateSpec, SweepSpec, SWEEP_SPEC_VERSION};
    use super::*;
    use crate::bench::BenchProtocol;
    use crate::datamodel::{Codec, Mode};
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    fn file_dataset(name: &str, n_configs: usize) -> DatasetSpec {
        let params = [1e-3, 1e-2, 1e-1, 0.5];
        DatasetSpec {
            name: name.into(),
            source: DataSource::GridFile { path: PathBuf::from(format!("{name}.f32")) },
            configs: params[..n_configs]
                .iter()
                .map(|&p| CompressionConfig::new(Codec::Pred, Mode::Abs, p).unwrap())
                .collect(),
            contrast: false,
            box_length: Some(64.0),
        }
    }

    fn spec_with(datasets: Vec<DatasetSpec>) -> SweepSpec {
        SweepSpec {
            version: SWEEP_SPEC_VERSION,
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            datasets,
            gates: GateSpec::default(),
            protocol: BenchProtocol { warmups: 0, runs: 1 },
            extra_deps: BTreeMap::new(),
            plots: false,
        }
    }

    #[test]
    fn two_fields_three_configs_is_thirteen_jobs() {
        let spec = spec_with(vec![file_dataset("a", 3), file_dataset("b", 3)]);
        let jobs = plan(&spec).unwrap();
        assert_eq!(jobs.len(), 13);
        let count = |p: &str| jobs.iter().filter(|j| j.id.starts_with(p)).count();
        assert_eq!(count("bench:"), 6);
        assert_eq!(count("analysis:"), 6);
        assert_eq!(count("report"), 1);
    }

    #[test]
    fn single_cell_is_a_three_job_chain() {
        let spec = spec_with(vec![file_dataset("a", 1)]);
        let jobs = plan(&spec).unwrap();
        assert_eq!(jobs.len(), 3);
        assert!(jobs[0].id.starts_with("bench:a:"));
        assert!(jobs[1].id.starts_with("analysis:a:"));
        assert_eq!(jobs[2].id, "report");
        assert_eq!(jobs[1].depends_on, vec![jobs[0].id.clone()]);
        assert_eq!(jobs[2].depends_on, vec![jobs[1].id.clone()]);
    }

    #[test]
    fn synthetic_dataset_gains_a_gen_job() {
        let mut ds = file_dataset("s", 2);
        ds.source = DataSource::SynthGrid {
            grid: 8,
            box_length: 32.0,
            spectral_index: -1.0,
            cutoff: None,
            lognormal: false,
            target_max: None,
        };
        let jobs = plan(&spec_with(vec![ds])).unwrap();
        assert_eq!(jobs.len(), 6); // gen + 2 bench + 2 analysis + report
        assert_eq!(jobs[0].id, "gen:s");
        for j in &jobs {
            if j.id.starts_with("bench:") {
                assert_eq!(j.depends_on, vec!["gen:s".to_string()]);
            }
        }
    }

    #[test]
    fn order_respects_dependencies() {
        let spec = spec_with(vec![file_dataset("a", 3), file_dataset("b", 2)]);
        let jobs = plan(&spec).unwrap();
        let pos: BTreeMap<&str, usize> =
            jobs.iter().enumerate().map(|(i, j)| (j.id.as_str(), i)).collect();
        for j in &jobs {
            for d in &j.depends_on {
                assert!(pos[d.as_str()] < pos[j.id.as_str()], "{d} must precede {}", j.id);
            }
        }
        // Deterministic: planning twice yields the identical list.
        assert_eq!(jobs, plan(&spec).unwrap());
    }

    #[test]
    fn injected_cycle_is_named() {
        let mut spec = spec_with(vec![file_dataset("a", 1)]);
        let bench = bench_id("a", &spec.datasets[0].configs[0]);
        spec.extra_deps.insert(bench.clone(), vec!["report".into()]);
        let err = plan(&spec).unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");
        assert!(err.contains("report"), "{err}");
        assert!(err.contains(&bench), "{err}");
    }

    #[test]
    fn unknown_extra_dep_is_rejected() {
        let mut spec = spec_with(vec![file_dataset("a", 1)]);
        spec.extra_deps.insert("report".into(), vec!["bench:zzz:nope".into()]);
        assert!(plan(&spec).is_err());
        let mut spec = spec_with(vec![file_dataset("a", 1)]);
        spec.extra_deps.insert("nope".into(), vec!["report".into()]);
        assert!(plan(&spec).is_err());
    }

    #[test]
    fn self_dependency_is_rejected() {
        let mut spec = spec_with(vec![file_dataset("a", 1)]);
        spec.extra_deps.insert("report".into(), vec!["report".into()]);
        assert!(plan(&spec).is_err());
    }
}
