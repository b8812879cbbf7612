//! Grid sweeps over the weight `rho` or the energy threshold.

use std::time::Instant;

use rayon::prelude::*;

use crate::allocation::{AllocationResult, Protocol, DEFAULT_AO_EPS};
use crate::error::{Error, Result};
use crate::fdma::fdma_solve_with;
use crate::model::Scenario;
use crate::noma::{noma_solve_with, NomaFitness};
use crate::pso::{derive_seed, PsoConfig};
use crate::single_pair::{two_stage, DEFAULT_EPS1};
use crate::system::{compute_e_max, EnergyBound, SystemModel, TransmitterKind};
use crate::tdma::tdma_solve_with;

use super::config::EpsGrid;
use super::frontier::ParetoPoint;

/// Seed tag of the energy-bound swarm; shared by every point of a sweep.
const E_MAX_TAG: u64 = 0xe0;

pub fn label(kind: TransmitterKind, protocol: Protocol) -> String {
    format!("{}-{}", kind.name(), protocol.name())
}

pub const SINGLE_PAIR_LABEL: &str = "single-pair";

fn elapsed(start: Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

pub fn single_pair_point(scenario: &Scenario, rho: f64, timing: bool) -> ParetoPoint {
    let start = Instant::now();
    match two_stage(scenario, rho, DEFAULT_EPS1) {
        Ok(t) => ParetoPoint {
            control: rho,
            kind: SINGLE_PAIR_LABEL.into(),
            min_rate_bps_hz: t.rate,
            min_energy_w: t.power_w,
            feasible: true,
            iterations: t.sca.state.iteration,
            wall_time_s: elapsed(start, timing),
            layouts: vec![t.layout.into_positions()],
        },
        Err(_) => infeasible(rho, SINGLE_PAIR_LABEL, 0.0, elapsed(start, timing)),
    }
}

fn infeasible(control: f64, kind: &str, achievable_w: f64, wall_time_s: f64) -> ParetoPoint {
    ParetoPoint {
        control,
        kind: kind.into(),
        min_rate_bps_hz: 0.0,
        min_energy_w: achievable_w,
        feasible: false,
        iterations: 0,
        wall_time_s,
        layouts: Vec::new(),
    }
}

pub fn sweep_single_pair(scenario: &Scenario, rhos: &[f64], timing: bool) -> Vec<ParetoPoint> {
    rhos.par_iter().map(|&rho| single_pair_point(scenario, rho, timing)).collect()
}

/// Protocol dispatch with explicit loop tolerance and energy bound.
pub fn solve_protocol(
    model: &SystemModel,
    protocol: Protocol,
    eps: f64,
    cfg: &PsoConfig,
    bound: Option<&EnergyBound>,
) -> Result<AllocationResult> {
    match protocol {
        Protocol::Fdma => fdma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, bound),
        Protocol::Tdma => tdma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, bound),
        Protocol::Noma => noma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, bound, NomaFitness::default()),
    }
}

/// Energy bound used to anchor a sweep, seeded independently of the points.
pub fn sweep_energy_bound(model: &SystemModel, cfg: &PsoConfig) -> Result<EnergyBound> {
    compute_e_max(model, &cfg.with_seed(derive_seed(cfg.seed, &[E_MAX_TAG])))
}

/// Evaluates one threshold; failures become infeasible rows.
pub fn multi_user_point(
    model: &SystemModel,
    protocol: Protocol,
    eps: f64,
    cfg: &PsoConfig,
    bound: Option<&EnergyBound>,
    timing: bool,
) -> ParetoPoint {
    let start = Instant::now();
    let kind = label(model.kind, protocol);
    match solve_protocol(model, protocol, eps, cfg, bound) {
        Ok(r) if r.feasible => ParetoPoint {
            control: eps,
            kind,
            min_rate_bps_hz: r.min_rate,
            min_energy_w: r.min_energy_w,
            feasible: true,
            iterations: r.iterations,
            wall_time_s: elapsed(start, timing),
            layouts: r.decisions,
        },
        Ok(r) => infeasible(eps, &kind, r.min_energy_w, elapsed(start, timing)),
        Err(Error::InfeasibleEnergy { achievable_w, .. }) => infeasible(eps, &kind, achievable_w, elapsed(start, timing)),
        Err(_) => infeasible(eps, &kind, 0.0, elapsed(start, timing)),
    }
}

/// A solution meeting a higher threshold also meets every lower one, so each
/// point takes the best result found at or above its threshold.
pub fn carry_down(points: &mut [ParetoPoint]) {
    for i in (0..points.len().saturating_sub(1)).rev() {
        let (head, tail) = points.split_at_mut(i + 1);
        let (here, above) = (&mut head[i], &tail[0]);
        if above.feasible && above.control >= here.control && (!here.feasible || above.min_rate_bps_hz > here.min_rate_bps_hz) {
            let control = here.control;
            let wall_time_s = here.wall_time_s;
            *here = ParetoPoint { control, wall_time_s, ..above.clone() };
        }
    }
}

/// Sweeps the energy threshold; the grid is anchored at the transmitter's own bound.
pub fn sweep_multi_user(
    model: &SystemModel,
    protocol: Protocol,
    grid: &EpsGrid,
    cfg: &PsoConfig,
    timing: bool,
) -> Result<Vec<ParetoPoint>> {
    let bound = sweep_energy_bound(model, cfg)?;
    let eps = grid.resolve(bound.value_w);
    let mut points: Vec<ParetoPoint> = eps
        .par_iter()
        .enumerate()
        .map(|(i, &e)| {
            let point_cfg = cfg.with_seed(derive_seed(cfg.seed, &[i as u64]));
            multi_user_point(model, protocol, e, &point_cfg, Some(&bound), timing)
        })
        .collect();
    carry_down(&mut points);
    Ok(points)
}
