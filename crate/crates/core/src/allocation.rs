//! Result bundle shared by the multi-user protocols, plus the alternating
//! optimisation loop used when a single decision serves every user.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pso::{derive_seed, pso_optimize, Evaluation, PsoConfig};
use crate::system::{compute_e_max, EnergyBound, SystemModel, TransmitterKind};

/// Hard cap on outer alternating-optimisation iterations.
pub const MAX_AO_ITERS: usize = 30;

/// Default fractional min-rate increment that ends the alternating optimisation.
pub const DEFAULT_AO_EPS: f64 = 1e-3;

/// Relative slack accepted on the harvested-power constraint of reported results.
pub const ENERGY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Protocol {
    Fdma,
    Tdma,
    Noma,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Fdma, Protocol::Tdma, Protocol::Noma];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fdma => "fdma",
            Self::Tdma => "tdma",
            Self::Noma => "noma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn tag(self) -> u64 {
        match self {
            Self::Fdma => 1,
            Self::Tdma => 2,
            Self::Noma => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Resources {
    Fdma { w: Vec<f64>, p_w: Vec<f64> },
    Tdma { tau: Vec<f64> },
    /// `alpha[k]` is IU `k`'s power fraction; `order[k]` its decoding position (larger decodes later).
    Noma { alpha: Vec<f64>, order: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult {
    pub protocol: Protocol,
    pub transmitter: TransmitterKind,
    /// One decision vector, or one per time slot under TDMA.
    pub decisions: Vec<Vec<f64>>,
    pub resources: Resources,
    pub rates: Vec<f64>,
    pub energies_w: Vec<f64>,
    pub min_rate: f64,
    pub min_energy_w: f64,
    pub energy_eps_w: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Best min-rate after every outer iteration.
    pub ao_trace: Vec<f64>,
    /// Global-best fitness traces of every swarm run.
    pub pso_traces: Vec<Vec<f64>>,
}

impl AllocationResult {
    /// Independent re-check of every hard constraint the result claims to meet.
    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        for d in &self.decisions {
            model.validate_decision(d)?;
        }
        let k = model.scenario.ius.len();
        match &self.resources {
            Resources::Fdma { w, p_w } => {
                let p = model.scenario.params.total_power_w();
                if w.len() != k || p_w.len() != k {
                    return fail("fdma vectors have the wrong length".into());
                }
                if w.iter().chain(p_w).any(|v| *v < 0.0) || w.iter().any(|v| *v > 1.0) {
                    return fail("fdma shares out of range".into());
                }
                if w.iter().sum::<f64>() > 1.0 + 1e-9 || p_w.iter().sum::<f64>() > p * (1.0 + 1e-9) {
                    return fail("fdma budget exceeded".into());
                }
            }
            Resources::Tdma { tau } => {
                if tau.len() != k || self.decisions.len() != k {
                    return fail("tdma needs one slot per IU".into());
                }
                if tau.iter().any(|t| *t < 0.0) || tau.iter().sum::<f64>() > 1.0 + 1e-9 {
                    return fail("time shares out of range".into());
                }
            }
            Resources::Noma { alpha, order } => {
                if alpha.len() != k || order.len() != k {
                    return fail("noma vectors have the wrong length".into());
                }
                if alpha.iter().any(|a| *a < -1e-12) || alpha.iter().sum::<f64>() > 1.0 + 1e-9 {
                    return fail("power fractions out of range".into());
                }
                let gains = model.iu_gains(&self.decisions[0]);
                for a in 0..k {
                    for b in 0..k {
                        if order[a] > order[b] && gains[a] < gains[b] {
                            return fail(format!("IU {a} decodes after IU {b} with a weaker channel"));
                        }
                        if order[a] > order[b] && alpha[a] > alpha[b] + 1e-12 {
                            return fail(format!("IU {a} decodes later but gets more power"));
                        }
                    }
                }
            }
        }
        if self.feasible && self.min_energy_w < self.energy_eps_w * (1.0 - ENERGY_REL_TOL) {
            return fail(format!(
                "min harvested power {} below threshold {}",
                self.min_energy_w, self.energy_eps_w
            ));
        }
        Ok(())
    }
}

/// Energy bound for `eps`, computing it if not supplied; errors if `eps` is out of reach.
pub(crate) fn energy_bound_for(
    model: &SystemModel,
    eps: f64,
    cfg: &PsoConfig,
    bound: Option<&EnergyBound>,
) -> Result<Option<EnergyBound>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("energy threshold must be >= 0, got {eps}")));
    }
    if eps == 0.0 || model.scenario.eus.is_empty() {
        return Ok(bound.cloned());
    }
    let b = match bound {
        Some(b) => b.clone(),
        None => compute_e_max(model, &cfg.with_seed(derive_seed(cfg.seed, &[0xe0])))?,
    };
    if b.value_w < eps {
        return Err(Error::InfeasibleEnergy { required_w: eps, achievable_w: b.value_w });
    }
    Ok(Some(b))
}

pub(crate) fn fractional_increment(prev: f64, next: f64) -> f64 {
    if prev > 0.0 {
        (next - prev) / prev
    } else if next > prev {
        f64::INFINITY
    } else {
        0.0
    }
}

pub(crate) struct AoOutcome<A> {
    pub decision: Vec<f64>,
    pub alloc: A,
    pub trace: Vec<f64>,
    pub pso_traces: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Alternates a swarm over the shared decision (resources fixed) with an exact
/// resource allocation (decision fixed), keeping the best pair seen.
pub(crate) fn alternate_single<A, R, Al>(
    model: &SystemModel,
    protocol: Protocol,
    eps: f64,
    cfg: &PsoConfig,
    ao_eps: f64,
    bound: Option<&EnergyBound>,
    init: A,
    rate_under: R,
    allocate: Al,
) -> Result<AoOutcome<A>>
where
    A: Clone + Sync,
    R: Fn(&[f64], &A) -> f64 + Sync,
    Al: Fn(&[f64]) -> Result<(A, f64)>,
{
    let bound = energy_bound_for(model, eps, cfg, bound)?;
    let space = model.space();
    let mut alloc = init;
    let mut best: Option<(Vec<f64>, A, f64)> = None;
    let mut trace = Vec::new();
    let mut pso_traces = Vec::new();
    let mut iterations = 0;
    for it in 0..MAX_AO_ITERS {
        iterations = it + 1;
        let run_cfg = cfg.with_seed(derive_seed(cfg.seed, &[protocol.tag(), it as u64]));
        let mut seeds = Vec::new();
        if let Some((d, _, _)) = &best {
            seeds.push(d.clone());
        }
        if let Some(b) = &bound {
            seeds.push(b.decision.clone());
        }
        let current = &alloc;
        let out = pso_optimize(
            &space,
            eps,
            |x| Evaluation { objective: rate_under(x, current), min_energy_w: model.min_eu_power(x) },
            &run_cfg,
            &seeds,
        )?;
        pso_traces.push(out.trace);
        let decision = if out.feasible {
            out.best_position
        } else if let Some((d, _, _)) = &best {
            d.clone()
        } else {
            return Err(Error::InfeasibleEnergy { required_w: eps, achievable_w: out.best_report.min_energy_w });
        };
        let (next_alloc, rate) = allocate(&decision)?;
        if best.as_ref().is_none_or(|(_, _, r)| rate > *r) {
            best = Some((decision, next_alloc, rate));
        }
        let (_, best_alloc, best_rate) = best.as_ref().expect("set above");
        trace.push(*best_rate);
        alloc = best_alloc.clone();
        if it > 0 && fractional_increment(trace[it - 1], trace[it]) < ao_eps {
            break;
        }
    }
    let (decision, alloc, _) = best.expect("at least one iteration");
    Ok(AoOutcome { decision, alloc, trace, pso_traces, iterations })
}
