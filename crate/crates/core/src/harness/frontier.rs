//! Rate-energy points, Pareto filtering and the CSV format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: [&str; 8] =
    ["control", "type", "min_rate_bpshz", "min_energy_w", "feasible", "iters", "seconds", "layout_json"];

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    /// The swept value: `rho` for single-pair runs, the energy threshold in watts otherwise.
    pub control: f64,
    /// Pipeline label, e.g. `pass-tdma`.
    pub kind: String,
    pub min_rate_bps_hz: f64,
    pub min_energy_w: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// One decision vector, or one per slot.
    pub layouts: Vec<Vec<f64>>,
}

impl ParetoPoint {
    /// `self` is at least as good in both objectives and better in one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.min_rate_bps_hz >= other.min_rate_bps_hz
            && self.min_energy_w >= other.min_energy_w
            && (self.min_rate_bps_hz > other.min_rate_bps_hz || self.min_energy_w > other.min_energy_w)
    }
}

/// Drops feasible points dominated by another feasible point; infeasible
/// rows are kept as records. Order is preserved; of exact duplicates the first stays.
pub fn pareto_filter(points: Vec<ParetoPoint>) -> Vec<ParetoPoint> {
    let keep: Vec<bool> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            !p.feasible
                || !points.iter().enumerate().any(|(j, q)| {
                    q.feasible
                        && (q.dominates(p)
                            || (j < i && q.min_rate_bps_hz == p.min_rate_bps_hz && q.min_energy_w == p.min_energy_w))
                })
        })
        .collect();
    points.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Every feasible point of `inner` is weakly dominated by a feasible point of
/// `outer` up to a relative slack `rel_tol` on both coordinates.
pub fn region_contains(outer: &[ParetoPoint], inner: &[ParetoPoint], rel_tol: f64) -> bool {
    inner.iter().filter(|p| p.feasible).all(|p| {
        outer.iter().filter(|q| q.feasible).any(|q| {
            q.min_rate_bps_hz >= p.min_rate_bps_hz * (1.0 - rel_tol) && q.min_energy_w >= p.min_energy_w * (1.0 - rel_tol)
        })
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    control: f64,
    #[serde(rename = "type")]
    kind: String,
    min_rate_bpshz: f64,
    min_energy_w: f64,
    feasible: bool,
    iters: usize,
    seconds: f64,
    layout_json: String,
}

pub fn write_csv<W: Write>(out: W, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.serialize(CsvRow {
            control: p.control,
            kind: p.kind.clone(),
            min_rate_bpshz: p.min_rate_bps_hz,
            min_energy_w: p.min_energy_w,
            feasible: p.feasible,
            iters: p.iterations,
            seconds: p.wall_time_s,
            layout_json: serde_json::to_string(&p.layouts)?,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ParetoPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        points.push(ParetoPoint {
            control: row.control,
            kind: row.kind,
            min_rate_bps_hz: row.min_rate_bpshz,
            min_energy_w: row.min_energy_w,
            feasible: row.feasible,
            iterations: row.iters,
            wall_time_s: row.seconds,
            layouts: serde_json::from_str(&row.layout_json)?,
        });
    }
    Ok(points)
}
