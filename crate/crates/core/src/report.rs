//! Report emission: rate-distortion tables, gate ratio curves, timing
//! breakdowns, and the best-fit summary, as CSV/JSON/text plus optional
//! SVG charts.
//!
//! Every emitted number is copied from a benchmark record — nothing is
//! recomputed here — and all files except `timing.csv` are deterministic
//! functions of the records and selection.

use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bench::{stage_breakdown, BenchRecord};
use crate::error::{Error, Result};
use crate::workflow::{ChoiceOutcome, Selection};

pub struct ReportInputs<'a> {
    pub records: &'a [BenchRecord],
    pub selection: &'a Selection,
    /// Cell stems that never produced a gated record.
    pub gaps: &'a [String],
    pub pk_tol: f64,
    pub halo_tol: f64,
    pub plots: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn gate_str(pass: Option<bool>) -> &'static str {
    match pass {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "",
    }
}

fn cell_stem(rec: &BenchRecord) -> String {
    format!("{}__{}", rec.field, rec.config.slug())
}

/// Rows sorted by field, then bitrate, then parameter.
fn sorted_for_table(records: &[BenchRecord]) -> Vec<&BenchRecord> {
    let mut rows: Vec<&BenchRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        a.field
            .cmp(&b.field)
            .then(a.bitrate.total_cmp(&b.bitrate))
            .then(a.config.param.total_cmp(&b.config.param))
            .then(a.config.label().cmp(&b.config.label()))
    });
    rows
}

fn metrics_csv(records: &[BenchRecord]) -> String {
    let mut out =
        String::from("field,codec,param,bitrate,psnr,mode,ratio,mse,max_abs_err,mre,pk_gate,halo_gate\n");
    for rec in sorted_for_table(records) {
        let (pk, halo) = match &rec.verdicts {
            Some(v) => (v.pk.as_ref().map(|g| g.pass), v.halo.as_ref().map(|g| g.pass)),
            None => (None, None),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.field,
            rec.config.codec.name(),
            rec.config.param,
            rec.bitrate,
            opt(rec.quality.psnr_db),
            rec.config.mode.name(),
            rec.ratio,
            rec.quality.mse,
            rec.quality.max_abs_err,
            rec.quality.mre,
            gate_str(pk),
            gate_str(halo),
        )
        .expect("string write");
    }
    out
}

fn timing_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(
        "field,codec,mode,param,direction,warmups,runs,total_mean_s,total_std_s,\
         throughput_gbps,setup_frac,kernel_frac,serialize_frac,teardown_frac\n",
    );
    for rec in sorted_for_table(records) {
        for (direction, t) in [("compress", &rec.compress), ("decompress", &rec.decompress)] {
            let f = stage_breakdown(t);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.field,
                rec.config.codec.name(),
                rec.config.mode.name(),
                rec.config.param,
                direction,
                t.warmup_runs,
                t.measured_runs,
                t.total_mean_s,
                t.total_std_s,
                t.throughput_gbps,
                f[0],
                f[1],
                f[2],
                f[3],
            )
            .expect("string write");
        }
    }
    out
}

fn spectrum_csv(rec: &BenchRecord, tol: f64) -> Option<String> {
    let gate = rec.verdicts.as_ref()?.pk.as_ref()?;
    let mut out = String::from("k,pk_orig,pk_recon,ratio,modes,band_lo,band_hi,within\n");
    let (lo, hi) = (1.0 - tol, 1.0 + tol);
    for bin in &gate.bins {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            bin.k,
            bin.orig,
            bin.recon,
            bin.ratio,
            bin.modes,
            lo,
            hi,
            bin.ratio >= lo && bin.ratio <= hi,
        )
        .expect("string write");
    }
    Some(out)
}

fn halo_csv(rec: &BenchRecord, tol: f64) -> Option<String> {
    let gate = rec.verdicts.as_ref()?.halo.as_ref()?;
    let mut out = String::from("mass_lo,mass_hi,count_orig,count_recon,ratio,band_lo,band_hi,within\n");
    let (lo, hi) = (1.0 - tol, 1.0 + tol);
    for bin in &gate.bins {
        let within = bin.orig == 0 || (bin.ratio >= lo && bin.ratio <= hi);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            bin.lo, bin.hi, bin.orig, bin.recon, bin.ratio, lo, hi, within,
        )
        .expect("string write");
    }
    Some(out)
}

#[derive(Serialize)]
struct CellSummary {
    field: String,
    config: String,
    codec: &'static str,
    mode: &'static str,
    param: f64,
    ratio: f64,
    bitrate: f64,
    psnr_db: Option<f64>,
    mse: f64,
    max_abs_err: f64,
    mre: f64,
    pk_pass: Option<bool>,
    halo_pass: Option<bool>,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: u32,
    selection: &'a Selection,
    cells: Vec<CellSummary>,
    gaps: &'a [String],
    pk_tol: f64,
    halo_tol: f64,
    caveats: [&'static str; 3],
}

const CAVEATS: [&'static str; 3] = [
    "timings are host-CPU measurements; the stage names (setup, kernel, serialize, teardown) mirror an accelerator pipeline's structure",
    "timing and throughput vary between runs and appear only in timing.csv; all other outputs are deterministic",
    "synthetic data at desk scale; ratios and gate outcomes depend on the data content",
];

fn summary_json(inputs: &ReportInputs) -> String {
    let cells = sorted_for_table(inputs.records)
        .into_iter()
        .map(|rec| {
            let (pk, halo) = match &rec.verdicts {
                Some(v) => (v.pk.as_ref().map(|g| g.pass), v.halo.as_ref().map(|g| g.pass)),
                None => (None, None),
            };
            CellSummary {
                field: rec.field.clone(),
                config: rec.config.label(),
                codec: rec.config.codec.name(),
                mode: rec.config.mode.name(),
                param: rec.config.param,
                ratio: rec.ratio,
                bitrate: rec.bitrate,
                psnr_db: rec.quality.psnr_db,
                mse: rec.quality.mse,
                max_abs_err: rec.quality.max_abs_err,
                mre: rec.quality.mre,
                pk_pass: pk,
                halo_pass: halo,
            }
        })
        .collect();
    let summary = Summary {
        version: 1,
        selection: inputs.selection,
        cells,
        gaps: inputs.gaps,
        pk_tol: inputs.pk_tol,
        halo_tol: inputs.halo_tol,
        caveats: CAVEATS,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

fn summary_txt(inputs: &ReportInputs) -> String {
    let mut out = String::from("sweep summary\n=============\n");
    let sel = inputs.selection;
    for (field, outcome) in &sel.per_field {
        match outcome {
            ChoiceOutcome::Chosen(c) => {
                let psnr = match c.psnr_db {
                    Some(p) => format!(", psnr {p:.2} dB"),
                    None => String::new(),
                };
                writeln!(out, "field {field}: {} (ratio {:.3}{psnr})", c.label, c.ratio)
                    .expect("string write");
            }
            ChoiceOutcome::NoneAcceptable => {
                writeln!(out, "field {field}: no acceptable configuration").expect("string write");
            }
        }
    }
    match (sel.overall_ratio, &sel.message) {
        (Some(r), _) => writeln!(out, "overall ratio: {r:.3}").expect("string write"),
        (None, Some(m)) => writeln!(out, "overall: {m}").expect("string write"),
        (None, None) => {}
    }
    if !inputs.gaps.is_empty() {
        out.push('\n');
        for gap in inputs.gaps {
            writeln!(out, "gap: cell {gap} did not complete; it is missing from this report")
                .expect("string write");
        }
    }
    out.push('\n');
    for c in CAVEATS {
        writeln!(out, "note: {c}").expect("string write");
    }
    out
}

/// Minimal line-chart SVG: PSNR (dB) against bitrate, one polyline per
/// field. Returns None when no record has a finite PSNR.
fn rate_distortion_svg(records: &[BenchRecord]) -> Option<String> {
    let mut by_field: std::collections::BTreeMap<&str, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for rec in records {
        if let Some(p) = rec.quality.psnr_db {
            by_field.entry(rec.field.as_str()).or_default().push((rec.bitrate, p));
        }
    }
    by_field.retain(|_, pts| {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        !pts.is_empty()
    });
    if by_field.is_empty() {
        return None;
    }
    let all = by_field.values().flatten().copied().collect::<Vec<_>>();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 480.0, 64.0, 16.0, 24.0, 48.0);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    // Axes and ticks.
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.2}\" stroke=\"black\"/>",
        h - mb
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{fx:.2}</text>",
            px(fx),
            h - mb + 16.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{fy:.1}</text>",
            ml - 6.0,
            py(fy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">bitrate (bits/value)</text>",
        (ml + w - mr) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.2}\" transform=\"rotate(-90 14 {:.2})\" \
         text-anchor=\"middle\">psnr (dB)</text>",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    );
    for (fi, (field, pts)) in by_field.iter().enumerate() {
        let color = palette[fi % palette.len()];
        let path: Vec<String> =
            pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        for (x, y) in pts {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(*x),
                py(*y)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{field}</text>",
            w - mr - 120.0,
            mt + 16.0 * (fi as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn put(dir: &Path, rel: &str, text: &str, outputs: &mut Vec<String>) -> Result<()> {
    let path = dir.join(rel);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    outputs.push(rel.to_string());
    Ok(())
}

/// Write every report file into `dir` and return the relative paths
/// written. `timing.csv` varies run to run; everything else is a pure
/// function of the inputs.
pub fn write_report(dir: &Path, inputs: &ReportInputs) -> Result<Vec<String>> {
    for sub in ["spectra", "halos"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut outputs = Vec::new();
    put(dir, "metrics.csv", &metrics_csv(inputs.records), &mut outputs)?;
    put(dir, "timing.csv", &timing_csv(inputs.records), &mut outputs)?;
    for rec in sorted_for_table(inputs.records) {
        if let Some(text) = spectrum_csv(rec, inputs.pk_tol) {
            put(dir, &format!("spectra/{}.csv", cell_stem(rec)), &text, &mut outputs)?;
        }
        if let Some(text) = halo_csv(rec, inputs.halo_tol) {
            put(dir, &format!("halos/{}.csv", cell_stem(rec)), &text, &mut outputs)?;
        }
    }
    put(dir, "summary.json", &summary_json(inputs), &mut outputs)?;
    put(dir, "summary.txt", &summary_txt(inputs), &mut outputs)?;
    if inputs.plots {
        if let Some(svg) = rate_distortion_svg(inputs.records) {
            let d = dir.join("plots");
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            put(dir, "plots/rate_distortion.svg", &svg, &mut outputs)?;
        }
    }
    Ok(outputs)
}
