//! Time-division access with the antennas redeployed in every slot.
//!
//! Slot `k` serves IU `k` alone at rate `tau_k log2(1 + (P/N) G_k / sigma_k^2)`,
//! while each EU accumulates `E_j = zeta (P/N) sum_k tau_k G_{j,k}` over the
//! frame.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{
    energy_bound_for, fractional_increment, AllocationResult, Protocol, Resources, DEFAULT_AO_EPS,
    ENERGY_REL_TOL, MAX_AO_ITERS,
};
use crate::error::{Error, Result};
use crate::model::log2_1p;
use crate::pso::{derive_seed, pso_optimize, Evaluation, PsoConfig};
use crate::system::{EnergyBound, SystemModel};

const TDMA_TAG: u64 = 2;

/// Layouts and time shares of one TDMA frame with the gains they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdmaPlan {
    pub layouts: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    /// `log2(1 + SNR_k)` of IU `k` in its own slot.
    pub slot_capacity: Vec<f64>,
    /// `harvest[j][k]`: power EU `j` harvests while slot `k` is active, in watts.
    pub harvest: Vec<Vec<f64>>,
    pub min_rate: f64,
    pub min_energy_w: f64,
}

impl TdmaPlan {
    pub fn evaluate(model: &SystemModel, layouts: Vec<Vec<f64>>, tau: Vec<f64>) -> Self {
        let slot_capacity = slot_capacities(model, &layouts);
        let harvest = harvest_matrix(model, &layouts);
        let min_rate = tau.iter().zip(&slot_capacity).map(|(t, c)| t * c).fold(f64::INFINITY, f64::min);
        let min_energy_w = harvest
            .iter()
            .map(|row| row.iter().zip(&tau).map(|(e, t)| e * t).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        Self { layouts, tau, slot_capacity, harvest, min_rate, min_energy_w }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.tau.iter().zip(&self.slot_capacity).map(|(t, c)| t * c).collect()
    }

    pub fn energies_w(&self) -> Vec<f64> {
        self.harvest.iter().map(|row| row.iter().zip(&self.tau).map(|(e, t)| e * t).sum()).collect()
    }
}

fn slot_capacities(model: &SystemModel, layouts: &[Vec<f64>]) -> Vec<f64> {
    layouts
        .iter()
        .enumerate()
        .map(|(k, x)| log2_1p(model.snr(k, model.power_gain(x, &model.scenario.ius[k]))))
        .collect()
}

fn harvest_matrix(model: &SystemModel, layouts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let per_slot: Vec<Vec<f64>> = layouts.iter().map(|x| model.eu_powers(x)).collect();
    (0..model.scenario.eus.len()).map(|j| per_slot.iter().map(|e| e[j]).collect()).collect()
}

/// Optimal time shares with the LP duality gap that certifies them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauAllocation {
    pub tau: Vec<f64>,
    pub xi: f64,
    /// `|primal - dual|` of the time-allocation LP; zero for the closed form.
    pub duality_gap: f64,
}

/// Equal-rate shares `tau_k = xi / C_k` with `xi = 1 / sum 1/C_k`.
pub fn waterline_tau(capacity: &[f64]) -> TauAllocation {
    let k = capacity.len();
    if capacity.iter().any(|&c| c <= 0.0) {
        return TauAllocation { tau: vec![1.0 / k as f64; k], xi: 0.0, duality_gap: 0.0 };
    }
    let xi = 1.0 / capacity.iter().map(|c| 1.0 / c).sum::<f64>();
    let tau = capacity.iter().map(|c| xi / c).collect();
    TauAllocation { tau, xi, duality_gap: 0.0 }
}

fn energy_ok(tau: &[f64], harvest: &[Vec<f64>], eps: f64) -> bool {
    harvest.iter().all(|row| row.iter().zip(tau).map(|(e, t)| e * t).sum::<f64>() >= eps)
}

fn lp_err(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Infeasible => Error::InfeasibleAllocation("time-allocation energy rows cannot be met".into()),
        other => Error::Domain(format!("time-allocation LP failed: {other}")),
    }
}

/// Max-min time allocation: `max xi` s.t. `tau_k C_k >= xi`, `sum tau <= 1`,
/// `sum_k tau_k harvest[j][k] >= eps` for every EU `j`.
pub fn allocate_tau(capacity: &[f64], harvest: &[Vec<f64>], eps: f64) -> Result<TauAllocation> {
    let k = capacity.len();
    if k == 0 {
        return Err(Error::Domain("no information users".into()));
    }
    if capacity.iter().chain(harvest.iter().flatten()).any(|v| !(*v >= 0.0 && v.is_finite()))
        || harvest.iter().any(|row| row.len() != k)
        || !(eps >= 0.0 && eps.is_finite())
    {
        return Err(Error::Domain("time allocation needs finite non-negative inputs".into()));
    }
    let closed = waterline_tau(capacity);
    if eps == 0.0 || harvest.is_empty() || (closed.xi > 0.0 && energy_ok(&closed.tau, harvest, eps)) {
        return Ok(closed);
    }
    let rows: Vec<Vec<f64>> = harvest.iter().map(|row| row.iter().map(|e| e / eps).collect()).collect();

    let mut primal = Problem::new(OptimizationDirection::Maximize);
    let tau: Vec<_> = (0..k).map(|_| primal.add_var(0.0, (0.0, 1.0))).collect();
    let xi = primal.add_var(1.0, (0.0, f64::INFINITY));
    for (i, &t) in tau.iter().enumerate() {
        primal.add_constraint(&[(t, capacity[i]), (xi, -1.0)], ComparisonOp::Ge, 0.0);
    }
    primal.add_constraint(tau.iter().map(|&t| (t, 1.0)), ComparisonOp::Le, 1.0);
    for row in &rows {
        primal.add_constraint(tau.iter().zip(row).map(|(&t, &a)| (t, a)), ComparisonOp::Ge, 1.0);
    }
    let sol = primal.solve().map_err(lp_err)?.into_solution().map_err(|_| {
        Error::Domain("time-allocation LP was interrupted".into())
    })?;
    let mut shares: Vec<f64> = tau.iter().map(|&t| sol.var_value(t).max(0.0)).collect();
    let total: f64 = shares.iter().sum();
    if total > 1.0 {
        shares.iter_mut().for_each(|t| *t /= total);
    }
    let xi_value = shares.iter().zip(capacity).map(|(t, c)| t * c).fold(f64::INFINITY, f64::min);

    let mut dual = Problem::new(OptimizationDirection::Minimize);
    let y: Vec<_> = (0..k).map(|_| dual.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let mu = dual.add_var(1.0, (0.0, f64::INFINITY));
    let lam: Vec<_> = rows.iter().map(|_| dual.add_var(-1.0, (0.0, f64::INFINITY))).collect();
    dual.add_constraint(y.iter().map(|&v| (v, 1.0)), ComparisonOp::Ge, 1.0);
    for i in 0..k {
        let mut terms = vec![(mu, 1.0), (y[i], -capacity[i])];
        terms.extend(lam.iter().zip(&rows).map(|(&l, row)| (l, -row[i])));
        dual.add_constraint(terms, ComparisonOp::Ge, 0.0);
    }
    let dual_value = dual.solve().map_err(lp_err)?.into_solution().map_err(|_| {
        Error::Domain("time-allocation dual LP was interrupted".into())
    })?;
    let duality_gap = (sol.objective() - dual_value.objective()).abs();
    Ok(TauAllocation { tau: shares, xi: xi_value, duality_gap })
}

/// Swarm placement for slot `k` with `tau_k` fixed; `others_w[j]` is what the
/// other slots already deliver to EU `j`.
pub fn tdma_slot_place(
    k: usize,
    model: &SystemModel,
    eps: f64,
    tau_k: f64,
    others_w: &[f64],
    cfg: &PsoConfig,
    seeds: &[Vec<f64>],
) -> Result<crate::pso::PsoOutcome> {
    let user = &model.scenario.ius[k];
    let space = model.space();
    pso_optimize(
        &space,
        eps,
        |x| Evaluation {
            objective: log2_1p(model.snr(k, model.power_gain(x, user))),
            min_energy_w: model
                .eu_powers(x)
                .iter()
                .zip(others_w)
                .map(|(e, o)| o + tau_k * e)
                .fold(f64::INFINITY, f64::min),
        },
        cfg,
        seeds,
    )
}

fn others(harvest: &[Vec<f64>], tau: &[f64], k: usize) -> Vec<f64> {
    harvest
        .iter()
        .map(|row| row.iter().zip(tau).enumerate().filter(|(i, _)| *i != k).map(|(_, (e, t))| e * t).sum())
        .collect()
}

pub fn tdma_solve(model: &SystemModel, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    tdma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, None)
}

/// One placement pass over all slots. Jacobi uses the previous pass's energies
/// for every slot; otherwise each slot sees the layouts already updated.
fn placement_pass(
    model: &SystemModel,
    eps: f64,
    cfg: &PsoConfig,
    it: usize,
    plan: &TdmaPlan,
    extra_seeds: &[Vec<f64>],
    jacobi: bool,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let k_total = plan.layouts.len();
    let place = |k: usize, layouts: &[Vec<f64>]| -> Result<(Vec<f64>, Vec<f64>)> {
        let harvest = harvest_matrix(model, layouts);
        let slot_cfg = cfg.with_seed(derive_seed(cfg.seed, &[TDMA_TAG, it as u64, k as u64, jacobi as u64]));
        let mut seeds = vec![layouts[k].clone()];
        seeds.extend(extra_seeds.iter().cloned());
        let out = tdma_slot_place(k, model, eps, plan.tau[k], &others(&harvest, &plan.tau, k), &slot_cfg, &seeds)?;
        let layout = if out.feasible { out.best_position } else { layouts[k].clone() };
        Ok((layout, out.trace))
    };
    if jacobi {
        let results: Vec<Result<(Vec<f64>, Vec<f64>)>> =
            (0..k_total).into_par_iter().map(|k| place(k, &plan.layouts)).collect();
        results.into_iter().collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
    } else {
        let mut layouts = plan.layouts.clone();
        let mut traces = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let (layout, trace) = place(k, &layouts)?;
            layouts[k] = layout;
            traces.push(trace);
        }
        Ok((layouts, traces))
    }
}

/// TDMA alternating optimisation; `bound` reuses a precomputed energy bound.
pub fn tdma_solve_with(
    model: &SystemModel,
    eps: f64,
    cfg: &PsoConfig,
    ao_eps: f64,
    bound: Option<&EnergyBound>,
) -> Result<AllocationResult> {
    let k_total = model.scenario.ius.len();
    if k_total == 0 {
        return Err(Error::Domain("no information users".into()));
    }
    let bound = energy_bound_for(model, eps, cfg, bound)?;
    let start = match &bound {
        Some(b) => b.decision.clone(),
        None => model.default_decision(),
    };
    let mut plan = TdmaPlan::evaluate(model, vec![start; k_total], vec![1.0 / k_total as f64; k_total]);
    let extra: Vec<Vec<f64>> = bound.iter().map(|b| b.decision.clone()).collect();
    let mut best: Option<TdmaPlan> = None;
    let mut trace = Vec::new();
    let mut pso_traces = Vec::new();
    let mut iterations = 0;
    for it in 0..MAX_AO_ITERS {
        iterations = it + 1;
        let mut next = None;
        for jacobi in [true, false] {
            let (layouts, traces) = placement_pass(model, eps, cfg, it, &plan, &extra, jacobi)?;
            pso_traces.extend(traces);
            let candidate = TdmaPlan::evaluate(model, layouts, plan.tau.clone());
            match allocate_tau(&candidate.slot_capacity, &candidate.harvest, eps) {
                Ok(t) => {
                    next = Some(TdmaPlan::evaluate(model, candidate.layouts, t.tau));
                    break;
                }
                Err(Error::InfeasibleAllocation(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let Some(next) = next else { break };
        if best.as_ref().is_none_or(|b| next.min_rate > b.min_rate) {
            best = Some(next);
        }
        let b = best.as_ref().expect("set above");
        trace.push(b.min_rate);
        plan = b.clone();
        if it > 0 && fractional_increment(trace[it - 1], trace[it]) < ao_eps {
            break;
        }
    }
    let plan = match best {
        Some(b) => b,
        None => {
            return Err(Error::InfeasibleEnergy { required_w: eps, achievable_w: plan.min_energy_w });
        }
    };
    Ok(result_from_plan(model, plan, eps, iterations, trace, pso_traces))
}

pub(crate) fn result_from_plan(
    model: &SystemModel,
    plan: TdmaPlan,
    eps: f64,
    iterations: usize,
    ao_trace: Vec<f64>,
    pso_traces: Vec<Vec<f64>>,
) -> AllocationResult {
    let energies = plan.energies_w();
    AllocationResult {
        protocol: Protocol::Tdma,
        transmitter: model.kind,
        rates: plan.rates(),
        min_rate: plan.min_rate,
        min_energy_w: plan.min_energy_w,
        feasible: plan.min_energy_w >= eps * (1.0 - ENERGY_REL_TOL),
        energies_w: energies,
        energy_eps_w: eps,
        decisions: plan.layouts,
        resources: Resources::Tdma { tau: plan.tau },
        iterations,
        ao_trace,
        pso_traces,
    }
}
