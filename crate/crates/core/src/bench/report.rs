//! Result export: the JSON-lines results log, CSV curves, a JSON summary,
//! and an optional SVG plot. Identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::bench::{compute_asr, CurvePoint, RecordRow, RunHeader, RunOutput};
use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write the results log: one header line, then one JSON object per record.
pub fn write_results_log(path: &Path, out: &RunOutput) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    let header = serde_json::to_string(&out.header).expect("header serializes");
    writeln!(f, "{header}").map_err(io_err(path))?;
    for failure in &out.embed_failures {
        let line = serde_json::json!({ "embed_failure": failure });
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    for row in &out.records {
        let line = serde_json::to_string(row).expect("row serializes");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

/// Read a results log back.
pub fn read_results_log(path: &Path) -> Result<(RunHeader, Vec<RecordRow>, Vec<String>)> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(f).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Corpus(format!("{}: empty log", path.display())))?
        .map_err(io_err(path))?;
    let header: RunHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Corpus(format!("bad log header: {e}")))?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
            if let Some(f) = v.get("embed_failure").and_then(|f| f.as_str()) {
                failures.push(f.to_string());
                continue;
            }
        }
        let row: RecordRow = serde_json::from_str(&line)
            .map_err(|e| Error::Corpus(format!("bad log row: {e}")))?;
        records.push(row);
    }
    Ok((header, records, failures))
}

/// CSV curves: `attack,psnr_bin_lo,psnr_bin_hi,asr,n`.
pub fn write_curves_csv(path: &Path, curves: &[CurvePoint]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    writeln!(f, "attack,psnr_bin_lo,psnr_bin_hi,asr,n").map_err(io_err(path))?;
    for c in curves {
        writeln!(
            f,
            "{},{},{},{},{}",
            c.attack, c.psnr_lo, c.psnr_hi, c.asr, c.n
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// JSON summary: per-attack ASR recomputed from p-values, embed failures,
/// and the run header.
pub fn write_summary_json(path: &Path, out: &RunOutput, alpha: f64) -> Result<()> {
    let mut per_attack: BTreeMap<String, Vec<&RecordRow>> = BTreeMap::new();
    for r in &out.records {
        per_attack.entry(r.attack.clone()).or_default().push(r);
    }
    let asr: BTreeMap<String, f64> = per_attack
        .iter()
        .map(|(name, rows)| {
            let owned: Vec<RecordRow> = rows.iter().map(|r| (*r).clone()).collect();
            (name.clone(), compute_asr(&owned, alpha).unwrap_or(0.0))
        })
        .collect();
    let summary = serde_json::json!({
        "header": out.header,
        "alpha": alpha,
        "asr_per_attack": asr,
        "embed_failures": out.embed_failures,
        "n_records": out.records.len(),
    });
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(&summary).unwrap()))
        .map_err(io_err(path))
}

/// Minimal SVG line plot of ASR-versus-PSNR curves, one polyline per attack.
pub fn write_svg(path: &Path, title: &str, curves: &[CurvePoint]) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0;
    const MB: f64 = 50.0;
    const MT: f64 = 40.0;
    const MR: f64 = 20.0;
    let (x_lo, x_hi) = (20.0f64, 60.0f64);
    let x_of = |p: f64| ML + (p - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let y_of = |asr: f64| H - MB - asr * (H - MB - MT);

    let mut attacks: Vec<String> = curves.iter().map(|c| c.attack.clone()).collect();
    attacks.sort();
    attacks.dedup();
    let palette = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    ];

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
        ML
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    for tick in (20..=60).step_by(10) {
        let x = x_of(tick as f64);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{tick}</text>\n",
            H - MB + 18.0
        ));
    }
    for tick in [0.0, 0.5, 1.0] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{tick}</text>\n",
            ML - 6.0,
            y_of(tick) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">PSNR vs watermarked (dB)</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));

    for (i, attack) in attacks.iter().enumerate() {
        let color = palette[i % palette.len()];
        let mut pts: Vec<(f64, f64)> = curves
            .iter()
            .filter(|c| &c.attack == attack)
            .map(|c| ((c.psnr_lo + c.psnr_hi) / 2.0, c.asr))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.is_empty() {
            continue;
        }
        let path_pts: Vec<String> = pts
            .iter()
            .map(|&(p, a)| format!("{:.2},{:.2}", x_of(p), y_of(a)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path_pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{attack}</text>\n",
            W - MR - 150.0,
            MT + 16.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(io_err(path))
}
