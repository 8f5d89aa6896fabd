//! Best-fit selection: among gated benchmark records, pick the highest
//! compression ratio whose gates all pass — never a failing one.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::bench::BenchRecord;
use crate::datamodel::CompressionConfig;
use crate::error::{Error, Result};

/// The exact no-selection wording reports rely on.
pub const NO_ACCEPTABLE: &str = "no acceptable configuration";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenConfig {
    pub config: CompressionConfig,
    pub label: String,
    pub ratio: f64,
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ChoiceOutcome {
    Chosen(ChosenConfig),
    /// No configuration passed every gate for this field.
    NoneAcceptable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub per_field: BTreeMap<String, ChoiceOutcome>,
    /// Total original bytes over total compressed bytes across the chosen
    /// cells; absent when nothing was chosen.
    pub overall_ratio: Option<f64>,
    /// Set to [`NO_ACCEPTABLE`] when no field has an acceptable config.
    pub message: Option<String>,
}

/// Tie chain: higher ratio, then higher combined throughput, then
/// lexicographically smaller label. Returns true when `b` beats `a`.
fn beats(b: &BenchRecord, a: &BenchRecord) -> bool {
    if b.ratio != a.ratio {
        return b.ratio > a.ratio;
    }
    let thr = |r: &BenchRecord| r.compress.throughput_gbps + r.decompress.throughput_gbps;
    if thr(b) != thr(a) {
        return thr(b) > thr(a);
    }
    b.config.label() < a.config.label()
}

/// Pick the best-fit configuration per field among records whose gates
/// all pass. Every record must carry verdicts. The result is invariant
/// under permutation of `records`.
pub fn select_best_fit(records: &[BenchRecord]) -> Result<Selection> {
    let mut by_field: BTreeMap<&str, Vec<&BenchRecord>> = BTreeMap::new();
    for rec in records {
        if rec.verdicts.is_none() {
            return Err(Error::Domain(format!(
                "record {} / {} has no gate verdicts; selection needs gated records",
                rec.field,
                rec.config.label()
            )));
        }
        by_field.entry(rec.field.as_str()).or_default().push(rec);
    }
    let mut per_field = BTreeMap::new();
    let mut orig_total = 0u64;
    let mut comp_total = 0u64;
    let mut chosen_any = false;
    for (field, recs) in by_field {
        let mut best: Option<&BenchRecord> = None;
        for rec in recs {
            if !rec.verdicts.as_ref().expect("checked above").all_pass() {
                continue;
            }
            if best.is_none_or(|cur| beats(rec, cur)) {
                best = Some(rec);
            }
        }
        let outcome = match best {
            Some(rec) => {
                chosen_any = true;
                orig_total += rec.original_bytes;
                comp_total += rec.compressed_bytes;
                ChoiceOutcome::Chosen(ChosenConfig {
                    config: rec.config,
                    label: rec.config.label(),
                    ratio: rec.ratio,
                    psnr_db: rec.quality.psnr_db,
                })
            }
            None => ChoiceOutcome::NoneAcceptable,
        };
        per_field.insert(field.to_string(), outcome);
    }
    Ok(Selection {
        per_field,
        overall_ratio: if chosen_any { Some(orig_total as f64 / comp_total as f64) } else { None },
        message: if chosen_any { None } else { Some(NO_ACCEPTABLE.into()) },
    })
}
