//! Frequency-division access with one shared antenna layout.
//!
//! IU `k` holds a bandwidth share `w_k` and a power `p_k`, achieving
//! `R_k = w_k log2(1 + p_k G_k / (N w_k sigma_k^2))`. Every EU harvests from
//! the full transmit power, `E_j = zeta (P/N) G_j`, so the energy constraint
//! only involves the layout.
//!
//! For a fixed layout the max-min allocation is found by bisection on the
//! common rate `xi`: at a trial `xi` each user needs at least
//! `p_k(w) = (w / g_k)(2^(xi/w) - 1)` watts, which is convex and decreasing in
//! `w`; the bandwidth split minimising total power equalises the marginals
//! `-p_k'(w_k)`, and `xi` is feasible iff that total fits in `P`.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::allocation::{alternate_single, AllocationResult, Protocol, Resources, DEFAULT_AO_EPS};
use crate::error::{Error, Result};
use crate::model::log2_1p;
use crate::pso::PsoConfig;
use crate::system::{EnergyBound, SystemModel};

/// Bracket width at which the rate bisection stops, bit/s/Hz.
pub const XI_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdmaAllocation {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub min_rate: f64,
    pub min_energy_w: f64,
}

/// `w log2(1 + p g / w)` with the `w = 0` limit 0, where `g = G / (N sigma^2)`.
pub fn share_rate(w: f64, p: f64, g: f64) -> f64 {
    if w <= 0.0 || p <= 0.0 || g <= 0.0 {
        0.0
    } else {
        w * log2_1p(p * g / w)
    }
}

/// Rate of IU `k` under FDMA at a given layout and allocation.
pub fn fdma_rate(k: usize, decision: &[f64], w_k: f64, p_k: f64, model: &SystemModel) -> f64 {
    let g = model.power_gain(decision, &model.scenario.ius[k]) / normaliser(model, k);
    share_rate(w_k, p_k, g)
}

fn normaliser(model: &SystemModel, k: usize) -> f64 {
    let n_elements = model.scenario.params.total_power_w() / model.power_per_element();
    n_elements * model.scenario.ius[k].noise_power_w
}

/// `ln` of `2^t (t ln2 - 1) + 1`, which is `-g p'(w)` at `t = xi / w`.
fn ln_marginal(t: f64) -> f64 {
    let u = t * LN_2;
    // 2^t (u - 1) + 1 = 2^t (u - 1 + 2^-t)
    let inner = if u < 1e-3 {
        u * u * (0.5 - u / 3.0 + u * u / 8.0)
    } else {
        u - 1.0 + (-u).exp()
    };
    u + inner.ln()
}

/// `t` with `ln_marginal(t) = target`.
fn invert_marginal(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while ln_marginal(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_marginal(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Power-minimal split achieving rate `xi` for every user: `(w, p, total power)`.
fn min_power_split(xi: f64, g: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let ln_g: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let shares = |s: f64| -> Vec<f64> {
        ln_g.iter().map(|lg| (xi / invert_marginal(lg + s)).min(1.0)).collect()
    };
    // total bandwidth decreases in the log-marginal `s`
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    while shares(lo).iter().sum::<f64>() < 1.0 {
        lo -= 50.0;
        if lo < -1e4 {
            break;
        }
    }
    while shares(hi).iter().sum::<f64>() > 1.0 {
        hi += 50.0;
        if hi > 1e4 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shares(mid).iter().sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    // `hi` side keeps the total share at most one
    let w = shares(hi);
    let p: Vec<f64> = w
        .iter()
        .zip(g)
        .map(|(&w, &g)| if w > 0.0 { w / g * ((xi / w) * LN_2).exp_m1() } else { f64::INFINITY })
        .collect();
    let total = p.iter().sum();
    (w, p, total)
}

/// Max-min bandwidth and power split for normalised gains `g_k = G_k / (N sigma_k^2)`.
/// Returns `(w, p, min rate)`.
pub fn allocate_w_p_gains(g: &[f64], total_power: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let k = g.len();
    if k == 0 {
        return Err(Error::Domain("no information users".into()));
    }
    if !(total_power > 0.0) || g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("gains must be finite and non-negative, power positive".into()));
    }
    if g.iter().any(|&v| v == 0.0) {
        let share = 1.0 / k as f64;
        let w = vec![share; k];
        let p = vec![total_power * share; k];
        let min_rate = min_rate(&w, &p, g);
        return Ok((w, p, min_rate));
    }
    if k == 1 {
        return Ok((vec![1.0], vec![total_power], share_rate(1.0, total_power, g[0])));
    }
    let mut lo = 0.0;
    let mut hi = g.iter().map(|&v| log2_1p(total_power * v)).fold(f64::INFINITY, f64::min);
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    while hi - lo > XI_TOL {
        let mid = 0.5 * (lo + hi);
        let (w, p, total) = min_power_split(mid, g);
        if total <= total_power {
            lo = mid;
            best = Some((w, p));
        } else {
            hi = mid;
        }
    }
    let (mut w, mut p) = best.unwrap_or_else(|| (vec![1.0 / k as f64; k], vec![total_power / k as f64; k]));
    let w_sum: f64 = w.iter().sum();
    if w_sum > 1.0 {
        w.iter_mut().for_each(|v| *v /= w_sum);
    }
    let p_sum: f64 = p.iter().sum();
    let scale = total_power / p_sum;
    p.iter_mut().for_each(|v| *v *= scale);
    let m = min_rate(&w, &p, g);
    Ok((w, p, m))
}

fn min_rate(w: &[f64], p: &[f64], g: &[f64]) -> f64 {
    w.iter().zip(p).zip(g).map(|((&w, &p), &g)| share_rate(w, p, g)).fold(f64::INFINITY, f64::min)
}

fn normalised_gains(model: &SystemModel, decision: &[f64]) -> Vec<f64> {
    model
        .iu_gains(decision)
        .iter()
        .enumerate()
        .map(|(k, g)| g / normaliser(model, k))
        .collect()
}

/// Max-min frequency and power allocation for a fixed layout.
pub fn allocate_w_p(model: &SystemModel, decision: &[f64]) -> Result<FdmaAllocation> {
    let g = normalised_gains(model, decision);
    let (w, p, min_rate) = allocate_w_p_gains(&g, model.scenario.params.total_power_w())?;
    Ok(FdmaAllocation { w, p, min_rate, min_energy_w: model.min_eu_power(decision) })
}

pub fn fdma_solve(model: &SystemModel, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    fdma_solve_with(model, eps, cfg, DEFAULT_AO_EPS, None)
}

/// FDMA alternating optimisation; `bound` reuses a precomputed energy bound.
pub fn fdma_solve_with(
    model: &SystemModel,
    eps: f64,
    cfg: &PsoConfig,
    ao_eps: f64,
    bound: Option<&EnergyBound>,
) -> Result<AllocationResult> {
    let k = model.scenario.ius.len();
    let total = model.scenario.params.total_power_w();
    let init = (vec![1.0 / k as f64; k], vec![total / k as f64; k]);
    let out = alternate_single(
        model,
        Protocol::Fdma,
        eps,
        cfg,
        ao_eps,
        bound,
        init,
        |x, (w, p): &(Vec<f64>, Vec<f64>)| min_rate(w, p, &normalised_gains(model, x)),
        |x| {
            let a = allocate_w_p(model, x)?;
            Ok(((a.w, a.p), a.min_rate))
        },
    )?;
    let (w, p) = out.alloc;
    let g = normalised_gains(model, &out.decision);
    let rates: Vec<f64> = (0..k).map(|i| share_rate(w[i], p[i], g[i])).collect();
    let energies = model.eu_powers(&out.decision);
    let min_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AllocationResult {
        protocol: Protocol::Fdma,
        transmitter: model.kind,
        decisions: vec![out.decision],
        resources: Resources::Fdma { w, p_w: p },
        min_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
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
