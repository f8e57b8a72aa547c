//! CSV traces: one [`TraceRecord`] per processed (frame, bin).
//!
//! Optional `# ` comment lines come first, then the header line
//! [`TraceRecord::HEADER`], then one comma-separated row per record with LF
//! line endings.

use std::io::{BufRead, Write};

use crate::enhancer::TraceRecord;
use crate::error::{Error, Result};
use crate::simkit::GroundTruth;

pub fn write_trace<W: Write>(mut w: W, comments: &[String], records: &[TraceRecord]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", TraceRecord::HEADER)?;
    for r in records {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Comments (without the `# ` prefix) and records.
pub fn read_trace<R: BufRead>(r: R) -> Result<(Vec<String>, Vec<TraceRecord>)> {
    let mut comments = Vec::new();
    let mut records = Vec::new();
    let mut seen_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |message: String| Error::TraceParse { line: i + 1, message };
        if !seen_header {
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
                continue;
            }
            if line != TraceRecord::HEADER {
                return Err(bad(format!("expected header, got {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(bad(format!("{} fields, expected 15", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let v: Vec<f64> = f[2..14].iter().map(|s| real(s)).collect::<Result<_>>()?;
        records.push(TraceRecord {
            frame: int(f[0])?,
            bin: int(f[1])?,
            s_mean: v[0],
            s_var: v[1],
            r_mean: v[2],
            r_var: v[3],
            z_mean: v[4],
            z_var: v[5],
            gamma_mean: v[6],
            gamma_var: v[7],
            beta_mean: v[8],
            beta_var: v[9],
            t60_est: v[10],
            drr_est: v[11],
            fallback_flags: f[14].parse().map_err(|_| bad(format!("bad flags {:?}", f[14])))?,
        });
    }
    if !seen_header {
        return Err(Error::TraceParse { line: 0, message: "missing header".into() });
    }
    Ok((comments, records))
}

/// Ground truth in trace form: true log-magnitudes with zero variances and
/// the true room in the parameter columns.
pub fn truth_records(truth: &GroundTruth, bins: &[usize]) -> Vec<TraceRecord> {
    let gamma = 0.5 * truth.a.ln();
    let beta = 0.5 * truth.b.ln();
    let (frames, _) = truth.s_true.shape();
    let mut out = Vec::with_capacity(frames * bins.len());
    for t in 0..frames {
        for &k in bins {
            out.push(TraceRecord {
                frame: t,
                bin: k,
                s_mean: truth.s_true.get(t, k),
                s_var: 0.0,
                r_mean: truth.r_true.get(t, k),
                r_var: 0.0,
                z_mean: truth.z_true.get(t, k),
                z_var: 0.0,
                gamma_mean: gamma,
                gamma_var: 0.0,
                beta_mean: beta,
                beta_var: 0.0,
                t60_est: truth.room.t60,
                drr_est: truth.room.drr,
                fallback_flags: 0,
            });
        }
    }
    out
}

/// The comment line describing a ground-truth room.
pub fn truth_header(truth: &GroundTruth) -> String {
    format!(
        "t60={} drr={} frame_increment={} a={:.4} b={:.4}",
        truth.room.t60, truth.room.drr, truth.room.frame_increment, truth.a, truth.b
    )
}
