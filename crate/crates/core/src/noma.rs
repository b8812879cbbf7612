//! Power-domain NOMA with successive interference cancellation.
//!
//! All IUs share one layout and the full band. Users are ranked by channel
//! gain: rank 0 is the weakest and is decoded first, treating every stronger
//! user's signal as noise; the strongest removes all others before decoding.
//!
//! Power allocation works on cumulative powers `b_r = s sum_{i >= r} alpha_i`
//! (`s` the power per element, `b_K = 0`), where the rate of rank `r` is
//! `log2(b_r G_r + sigma_r^2) - log2(b_{r+1} G_r + sigma_r^2)`. Linearising the
//! second term gives a concave lower bound, and each convex step is solved by
//! bisection on the common rate with a closed-form backward propagation.

use serde::Serialize;

use crate::allocation::{alternate_single, energy_bound_for, AllocationResult, Protocol, Resources, DEFAULT_AO_EPS};
use crate::error::{Error, Result};
use crate::model::log2_1p;
use crate::pso::PsoConfig;
use crate::system::{EnergyBound, SystemModel};

/// Largest user count accepted by [`derive_order`].
pub const MAX_NOMA_USERS: usize = 8;

/// Default fractional increment that ends the SCA power allocation.
pub const DEFAULT_SCA_EPS: f64 = 1e-3;

const MAX_SCA_STEPS: usize = 200;

/// SIC decoding order; `rank[k]` is IU `k`'s position (0 decodes first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodingOrder {
    pub rank: Vec<usize>,
}

impl DecodingOrder {
    /// Users listed from first decoded (weakest) to last.
    pub fn by_rank(&self) -> Vec<usize> {
        let mut users = vec![0; self.rank.len()];
        for (k, &r) in self.rank.iter().enumerate() {
            users[r] = k;
        }
        users
    }

    /// Errors unless stronger users always decode later.
    pub fn check(&self, gains: &[f64]) -> Result<()> {
        let k = gains.len();
        let mut seen = vec![false; k];
        if self.rank.len() != k || self.rank.iter().any(|&r| r >= k || std::mem::replace(&mut seen[r], true)) {
            return Err(Error::OrderViolation(format!("{:?} is not a permutation of {k} users", self.rank)));
        }
        for a in 0..k {
            for b in 0..k {
                if self.rank[a] > self.rank[b] && gains[a] < gains[b] {
                    return Err(Error::OrderViolation(format!(
                        "IU {a} (gain {:e}) decodes after IU {b} (gain {:e})",
                        gains[a], gains[b]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rank_by_gain(gains: &[f64]) -> DecodingOrder {
    let mut users: Vec<usize> = (0..gains.len()).collect();
    users.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
    let mut rank = vec![0; gains.len()];
    for (r, &k) in users.iter().enumerate() {
        rank[k] = r;
    }
    DecodingOrder { rank }
}

/// Gain-sorted decoding order, ties broken by user index.
pub fn derive_order(gains: &[f64]) -> Result<DecodingOrder> {
    if gains.len() > MAX_NOMA_USERS {
        return Err(Error::Config(format!(
            "decoding-order search supports at most {MAX_NOMA_USERS} IUs, got {}",
            gains.len()
        )));
    }
    Ok(rank_by_gain(gains))
}

/// SINR rate of IU `k`: `alpha` is indexed by user, `power` is the per-element power.
pub fn noma_rate(k: usize, gains: &[f64], alpha: &[f64], order: &DecodingOrder, power: f64, noise: &[f64]) -> Result<f64> {
    order.check(gains)?;
    Ok(sinr_rate(k, gains, alpha, &order.rank, power, noise))
}

fn sinr_rate(k: usize, gains: &[f64], alpha: &[f64], rank: &[usize], power: f64, noise: &[f64]) -> f64 {
    let interference: f64 = (0..gains.len()).filter(|&i| rank[i] > rank[k]).map(|i| alpha[i]).sum();
    let g = power * gains[k];
    log2_1p(alpha[k] * g / (interference * g + noise[k]))
}

/// Power fractions with the cumulative powers they induce (both by rank).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NomaPowers {
    /// `alpha[r]`: fraction of the rank-`r` user.
    pub alpha: Vec<f64>,
    /// `b[r] = s sum_{i >= r} alpha[i]`, with `b[K] = 0`.
    pub b: Vec<f64>,
}

impl NomaPowers {
    pub fn from_alpha(alpha: Vec<f64>, power: f64) -> Self {
        let k = alpha.len();
        let mut b = vec![0.0; k + 1];
        for r in (0..k).rev() {
            b[r] = b[r + 1] + power * alpha[r];
        }
        Self { alpha, b }
    }

    fn from_b(b: Vec<f64>, power: f64) -> Self {
        let alpha = b.windows(2).map(|w| ((w[0] - w[1]) / power).max(0.0)).collect();
        Self { alpha, b }
    }
}

/// Rates by rank for gains and noise listed by rank.
fn ranked_rates(b: &[f64], g: &[f64], noise: &[f64]) -> Vec<f64> {
    (0..g.len())
        .map(|r| {
            let signal = (b[r] - b[r + 1]) * g[r];
            log2_1p(signal / (b[r + 1] * g[r] + noise[r]))
        })
        .collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest cumulative powers meeting the linearised rate `xi` around `local`;
/// `None` if they exceed the per-element power.
fn propagate(xi: f64, local: &[f64], g: &[f64], noise: &[f64], power: f64) -> Option<Vec<f64>> {
    let k = g.len();
    let mut b = vec![0.0; k + 1];
    let two_xi = xi.exp2();
    for r in (0..k).rev() {
        let c = local[r + 1] * g[r] + noise[r];
        let need = (two_xi * c * (g[r] * (b[r + 1] - local[r + 1]) / c).exp() - noise[r]) / g[r];
        let order_floor = if r + 2 <= k { 2.0 * b[r + 1] - b[r + 2] } else { b[r + 1] };
        b[r] = need.max(order_floor).max(b[r + 1]);
        if !(b[r] <= power) {
            return None;
        }
    }
    Some(b)
}

/// Result of the SCA power allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaAllocation {
    /// Powers by rank.
    pub powers: NomaPowers,
    pub xi: f64,
    /// True min-rate after initialisation and after every step.
    pub trace: Vec<f64>,
}

/// SCA max-min allocation for gains and noise listed by decoding rank.
pub fn allocate_alpha_ranked(g: &[f64], noise: &[f64], power: f64, eps_sca: f64) -> Result<ScaAllocation> {
    allocate_alpha_ranked_from(g, noise, power, eps_sca, None)
}

/// As [`allocate_alpha_ranked`], starting from the fractions `start` (by rank) instead of uniform ones.
pub fn allocate_alpha_ranked_from(
    g: &[f64],
    noise: &[f64],
    power: f64,
    eps_sca: f64,
    start: Option<&[f64]>,
) -> Result<ScaAllocation> {
    let k = g.len();
    if k == 0 || noise.len() != k {
        return Err(Error::Domain("gain and noise vectors must be non-empty and equal length".into()));
    }
    if !(power > 0.0) || g.iter().chain(noise).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("NOMA allocation needs finite non-negative gains and positive power".into()));
    }
    let uniform = NomaPowers::from_alpha(vec![1.0 / k as f64; k], power);
    if g.iter().any(|&v| v == 0.0) || noise.iter().any(|&v| v == 0.0) {
        let xi = min_of(&ranked_rates(&uniform.b, g, noise));
        let xi = if g.iter().any(|&v| v == 0.0) { 0.0 } else { xi };
        return Ok(ScaAllocation { powers: uniform, xi, trace: vec![xi] });
    }
    let mut local = match start {
        Some(a) if a.len() == k && a.iter().all(|v| *v >= 0.0) && a.iter().sum::<f64>() > 0.0 => {
            let total: f64 = a.iter().sum();
            NomaPowers::from_alpha(a.iter().map(|v| v / total).collect(), power).b
        }
        _ => uniform.b,
    };
    let mut current = min_of(&ranked_rates(&local, g, noise));
    let mut trace = vec![current];
    let cap = (0..k).map(|r| log2_1p(power * g[r] / noise[r])).fold(f64::INFINITY, f64::min);
    for _ in 0..MAX_SCA_STEPS {
        let (mut lo, mut hi) = (current, cap);
        let mut best = None;
        while hi - lo > 1e-9 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            match propagate(mid, &local, g, noise, power) {
                Some(b) => {
                    lo = mid;
                    best = Some(b);
                }
                None => hi = mid,
            }
        }
        let Some(mut b) = best else { break };
        // scaling every cumulative power up only raises each SINR
        let scale = power / b[0];
        b.iter_mut().for_each(|v| *v *= scale);
        let next = min_of(&ranked_rates(&b, g, noise));
        if !(next > current) {
            break;
        }
        let increment = (next - current) / current.max(f64::MIN_POSITIVE);
        local = b;
        current = next;
        trace.push(current);
        if increment < eps_sca {
            break;
        }
    }
    Ok(ScaAllocation { powers: NomaPowers::from_b(local, power), xi: current, trace })
}

/// SCA allocation at a layout; returns the order and the fractions by user.
pub fn allocate_alpha_sca(model: &SystemModel, decision: &[f64], eps_sca: f64) -> Result<(DecodingOrder, Vec<f64>, ScaAllocation)> {
    let gains = model.iu_gains(decision);
    let order = derive_order(&gains)?;
    let users = order.by_rank();
    let g: Vec<f64> = users.iter().map(|&k| gains[k]).collect();
    let noise: Vec<f64> = users.iter().map(|&k| model.scenario.ius[k].noise_power_w).collect();
    let sca = allocate_alpha_ranked(&g, &noise, model.power_per_element(), eps_sca)?;
    let alpha = order.rank.iter().map(|&r| sca.powers.alpha[r]).collect();
    Ok((order, alpha, sca))
}

fn noise_of(model: &SystemModel) -> Vec<f64> {
    model.scenario.ius.iter().map(|u| u.noise_power_w).collect()
}

/// How the placement swarm scores a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum NomaFitness {
    /// Min-rate with the current fractions assigned by rank.
    FixedAlpha,
    /// Min-rate after SCA re-allocation warm-started from the current fractions.
    #[default]
    Reallocated,
}

/// Min-rate for a layout when fractions are assigned by rank of the induced gains.
fn min_rate_by_rank(model: &SystemModel, decision: &[f64], alpha_by_rank: &[f64], noise: &[f64]) -> f64 {
    let gains = model.iu_gains(decision);
    let order = rank_by_gain(&gains);
    let alpha: Vec<f64> = order.rank.iter().map(|&r| alpha_by_rank[r]).collect();
    (0..gains.len())
        .map(|k| sinr_rate(k, &gains, &alpha, &order.rank, model.power_per_element(), noise))
        .fold(f64::INFINITY, f64::min)
}

fn reallocated_rate(model: &SystemModel, decision: &[f64], alpha_by_rank: &[f64], noise: &[f64]) -> f64 {
    let gains = model.iu_gains(decision);
    let users = rank_by_gain(&gains).by_rank();
    let g: Vec<f64> = users.iter().map(|&k| gains[k]).collect();
    let n: Vec<f64> = users.iter().map(|&k| noise[k]).collect();
    allocate_alpha_ranked_from(&g, &n, model.power_per_element(), DEFAULT_SCA_EPS, Some(alpha_by_rank))
        .map_or(0.0, |a| a.xi)
}

pub fn noma_solve(model: &SystemModel, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    noma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, None, NomaFitness::default())
}

/// NOMA alternating optimisation; `bound` reuses a precomputed energy bound.
pub fn noma_solve_with(
    model: &SystemModel,
    eps: f64,
    cfg: &PsoConfig,
    ao_eps: f64,
    bound: Option<&EnergyBound>,
    fitness: NomaFitness,
) -> Result<AllocationResult> {
    let k = model.scenario.ius.len();
    if k > MAX_NOMA_USERS {
        derive_order(&vec![0.0; k])?;
    }
    let noise = noise_of(model);
    let bound = energy_bound_for(model, eps, cfg, bound)?;
    let start = bound.as_ref().map_or_else(|| model.default_decision(), |b| b.decision.clone());
    let (_, _, init) = allocate_alpha_sca(model, &start, DEFAULT_SCA_EPS)?;
    let out = alternate_single(
        model,
        Protocol::Noma,
        eps,
        cfg,
        ao_eps,
        bound.as_ref(),
        init.powers.alpha,
        |x, alpha: &Vec<f64>| match fitness {
            NomaFitness::FixedAlpha => min_rate_by_rank(model, x, alpha, &noise),
            NomaFitness::Reallocated => reallocated_rate(model, x, alpha, &noise),
        },
        |x| {
            let (_, _, sca) = allocate_alpha_sca(model, x, DEFAULT_SCA_EPS)?;
            Ok((sca.powers.alpha, sca.xi))
        },
    )?;
    let gains = model.iu_gains(&out.decision);
    let order = rank_by_gain(&gains);
    let alpha: Vec<f64> = order.rank.iter().map(|&r| out.alloc[r]).collect();
    let rates: Vec<f64> = (0..k)
        .map(|i| sinr_rate(i, &gains, &alpha, &order.rank, model.power_per_element(), &noise))
        .collect();
    let energies = model.eu_powers(&out.decision);
    let min_energy = min_of(&energies);
    Ok(AllocationResult {
        protocol: Protocol::Noma,
        transmitter: model.kind,
        decisions: vec![out.decision],
        resources: Resources::Noma { alpha, order: order.rank },
        min_rate: min_of(&rates),
        rates,
        feasible: min_energy >= eps,
        energies_w: energies,
        min_energy_w: min_energy,
        energy_eps_w: eps,
        iterations: out.iterations,
        ao_trace: out.trace,
        pso_traces: out.pso_traces,
    })
}
