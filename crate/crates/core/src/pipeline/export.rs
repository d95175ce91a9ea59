//! CSV and JSON Lines writers for reports, traces and loss curves.

use std::io::Write;

use serde::Serialize;

use super::eval::{EvalReport, TraceTable};
use super::train::EpochLoss;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("csv: {other:?}")),
    }
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Input(format!("json: {e}")))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    direction: String,
    queries: usize,
    r1: f64,
    r5: f64,
    r10: f64,
    rsum: f64,
    mdr: f64,
    mnr: f64,
    fusion_weight: f64,
    sampling: String,
    eval_steps: usize,
    auroc: f64,
}

/// Summary table, one row per report.
pub fn write_report_csv<W: Write>(out: W, reports: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (label, r) in reports {
        w.serialize(SummaryRow {
            label,
            direction: r.direction.to_string(),
            queries: r.queries,
            r1: r.metrics.r1,
            r5: r.metrics.r5,
            r10: r.metrics.r10,
            rsum: r.metrics.rsum,
            mdr: r.metrics.mdr,
            mnr: r.metrics.mnr,
            fusion_weight: r.fusion_weight,
            sampling: r.sampling.to_string(),
            eval_steps: r.eval_steps,
            auroc: r.auroc,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `label,query,rank` for every query of every report.
pub fn write_ranks_csv<W: Write>(out: W, reports: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "query", "rank"]).map_err(csv_err)?;
    for (label, r) in reports {
        for (q, rank) in r.ranks.iter().enumerate() {
            w.write_record([label.to_string(), q.to_string(), rank.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `label,pairs,bin,lo,hi,count` for the positive and negative histograms.
pub fn write_histograms_csv<W: Write>(out: W, reports: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "pairs", "bin", "lo", "hi", "count"]).map_err(csv_err)?;
    for (label, r) in reports {
        for (kind, h) in [("positive", &r.positive_hist), ("negative", &r.negative_hist)] {
            for (b, c) in h.counts.iter().enumerate() {
                w.write_record([
                    label.to_string(),
                    kind.to_string(),
                    b.to_string(),
                    h.edges[b].to_string(),
                    h.edges[b + 1].to_string(),
                    c.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Long format: `step,level,candidate,prob,is_positive`.
pub fn write_trace_csv<W: Write>(out: W, trace: &TraceTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "level", "candidate", "prob", "is_positive"]).map_err(csv_err)?;
    for row in &trace.rows {
        for (j, p) in row.prob.iter().enumerate() {
            w.write_record([
                row.step.to_string(),
                row.level.to_string(),
                j.to_string(),
                p.to_string(),
                (j == trace.positive).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_losses_csv<W: Write>(out: W, losses: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in losses {
        w.serialize(l).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
