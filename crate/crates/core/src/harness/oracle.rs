//! Brute-force checkers for the optimisation pipelines.

use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{Protocol, Resources};
use crate::error::{Error, Result};
use crate::fdma::{allocate_w_p, share_rate};
use crate::model::{effective_gain_at, log2_1p, Scenario};
use crate::noma::{allocate_alpha_ranked, allocate_alpha_sca, DecodingOrder, DEFAULT_SCA_EPS};
use crate::pso::PsoConfig;
use crate::single_pair::{pair, two_stage, DEFAULT_EPS1};
use crate::system::SystemModel;
use crate::tdma::{allocate_tau, TdmaPlan};

use super::sweep::solve_protocol;

/// Placement grid resolution, metres.
pub const PLACEMENT_STEP_M: f64 = 1e-3;
pub const MAX_PLACEMENT_ANTENNAS: usize = 2;
pub const MAX_TAU_USERS: usize = 3;
pub const MAX_ORDER_USERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    /// Single-pair placement against a 1 mm grid (N <= 2).
    Placement,
    /// TDMA time shares against a grid (K <= 3).
    Tau,
    /// FDMA bandwidth and power split against a 2-D grid (K = 2).
    Wp,
    /// NOMA power split against a grid (K = 2).
    Alpha,
    /// NOMA decoding order against enumeration of all orders (K <= 3).
    Order,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Self::Placement => "placement",
            Self::Tau => "tau",
            Self::Wp => "wp",
            Self::Alpha => "alpha",
            Self::Order => "order",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub check: String,
    pub pipeline: f64,
    pub oracle: f64,
    /// `oracle - pipeline`; positive means the pipeline fell short.
    pub deviation: f64,
}

impl OracleReport {
    fn new(check: Check, pipeline: f64, oracle: f64) -> Self {
        Self { check: check.name().into(), pipeline, oracle, deviation: oracle - pipeline }
    }
}

fn too_large(what: &str, got: usize, max: usize) -> Error {
    Error::TooLarge(format!("{what} oracle supports at most {max}, got {got}"))
}

/// Best weighted objective over a 1 mm grid of spacing-feasible layouts.
pub fn placement_grid(scenario: &Scenario, rho: f64) -> Result<(f64, Vec<f64>)> {
    let (iu, eu) = pair(scenario)?;
    let p = &scenario.params;
    let n = p.num_antennas();
    if n > MAX_PLACEMENT_ANTENNAS {
        return Err(too_large("placement antenna count", n, MAX_PLACEMENT_ANTENNAS));
    }
    let half = p.half_length();
    let steps = (p.waveguide_length_m() / PLACEMENT_STEP_M).round() as usize;
    let at = |i: usize| (-half + i as f64 * PLACEMENT_STEP_M).min(half);
    let gap = (p.min_spacing_m() / PLACEMENT_STEP_M - 1e-9).ceil() as usize;
    let entries = |u| -> Vec<_> { (0..=steps).map(|i| effective_gain_at(&[at(i)], u, p)).collect() };
    let (hi, he) = (entries(iu), entries(eu));
    let scale = p.path_loss_coeff().sqrt();
    let value = |a: usize, b: Option<usize>| {
        let (gi, ge) = match b {
            Some(b) => (hi[a] + hi[b], he[a] + he[b]),
            None => (hi[a], he[a]),
        };
        (rho * gi.norm() + (1.0 - rho) * ge.norm()) / scale
    };
    let (best, i, j) = (0..=steps)
        .into_par_iter()
        .map(|i| {
            if n == 1 {
                return (value(i, None), i, None);
            }
            let mut best = (f64::NEG_INFINITY, i, None);
            for j in (i + gap)..=steps {
                let v = value(i, Some(j));
                if v > best.0 {
                    best = (v, i, Some(j));
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, 0, None), |a, b| if b.0 > a.0 { b } else { a });
    let layout = std::iter::once(at(i)).chain(j.map(at)).collect();
    Ok((best, layout))
}

/// Best max-min time split over a grid on the simplex.
pub fn tau_grid(capacity: &[f64], harvest: &[Vec<f64>], eps: f64, step: f64) -> Result<f64> {
    let k = capacity.len();
    if k > MAX_TAU_USERS || k == 0 {
        return Err(too_large("time-allocation user count", k, MAX_TAU_USERS));
    }
    let n = (1.0 / step).round() as usize;
    let eval = |tau: &[f64]| -> f64 {
        let ok = harvest.iter().all(|row| row.iter().zip(tau).map(|(e, t)| e * t).sum::<f64>() >= eps);
        if ok {
            tau.iter().zip(capacity).map(|(t, c)| t * c).fold(f64::INFINITY, f64::min)
        } else {
            f64::NEG_INFINITY
        }
    };
    let best = (0..=n)
        .into_par_iter()
        .map(|i| {
            let t0 = i as f64 / n as f64;
            match k {
                1 => eval(&[t0]),
                2 => eval(&[t0, 1.0 - t0]),
                _ => (0..=n - i)
                    .map(|j| {
                        let t1 = j as f64 / n as f64;
                        eval(&[t0, t1, (1.0 - t0 - t1).max(0.0)])
                    })
                    .fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best)
}

/// Best FDMA min-rate over a grid of `(w_1, p_1)` for two users with normalised gains `g`.
pub fn wp_grid(g: &[f64], total_power: f64, step: f64) -> Result<f64> {
    if g.len() != 2 {
        return Err(too_large("bandwidth-power user count", g.len(), 2));
    }
    let n = (1.0 / step).round() as usize;
    Ok((1..n)
        .into_par_iter()
        .map(|i| {
            let w = i as f64 / n as f64;
            (1..n)
                .map(|j| {
                    let p = total_power * j as f64 / n as f64;
                    share_rate(w, p, g[0]).min(share_rate(1.0 - w, total_power - p, g[1]))
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

/// Best NOMA min-rate over the weak user's fraction in `[0.5, 1]` (gains by rank).
pub fn alpha_grid(g: &[f64], noise: &[f64], power: f64, step: f64) -> Result<f64> {
    if g.len() != 2 {
        return Err(too_large("power-split user count", g.len(), 2));
    }
    let n = (0.5 / step).round() as usize;
    Ok((0..=n)
        .map(|i| {
            let weak = 0.5 + i as f64 * step;
            let strong = 1.0 - weak;
            let r0 = log2_1p(weak * power * g[0] / (strong * power * g[0] + noise[0]));
            let r1 = log2_1p(strong * power * g[1] / noise[1]);
            r0.min(r1)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Best SCA min-rate over every decoding order consistent with `gains`.
pub fn order_enumeration(gains: &[f64], noise: &[f64], power: f64) -> Result<f64> {
    let k = gains.len();
    if k > MAX_ORDER_USERS {
        return Err(too_large("decoding-order user count", k, MAX_ORDER_USERS));
    }
    let mut best = f64::NEG_INFINITY;
    for rank in permutations(k) {
        let order = DecodingOrder { rank };
        if order.check(gains).is_err() {
            continue;
        }
        let users = order.by_rank();
        let g: Vec<f64> = users.iter().map(|&i| gains[i]).collect();
        let n: Vec<f64> = users.iter().map(|&i| noise[i]).collect();
        best = best.max(allocate_alpha_ranked(&g, &n, power, DEFAULT_SCA_EPS)?.xi);
    }
    Ok(best)
}

/// Runs the pipeline behind `check` and compares it with its brute-force oracle.
pub fn run_check(check: Check, scenario: &Scenario, control: f64, cfg: &PsoConfig) -> Result<OracleReport> {
    let model = SystemModel::pass(scenario.clone());
    let k = scenario.ius.len();
    match check {
        Check::Placement => {
            let (grid, _) = placement_grid(scenario, control)?;
            let ts = two_stage(scenario, control, DEFAULT_EPS1)?;
            Ok(OracleReport::new(check, ts.objective.value, grid))
        }
        Check::Tau => {
            if k > MAX_TAU_USERS {
                return Err(too_large("time-allocation user count", k, MAX_TAU_USERS));
            }
            let r = solve_protocol(&model, Protocol::Tdma, control, cfg, None)?;
            let Resources::Tdma { tau } = r.resources else { unreachable!("tdma result") };
            let plan = TdmaPlan::evaluate(&model, r.decisions, tau);
            let lp = allocate_tau(&plan.slot_capacity, &plan.harvest, control)?;
            let step = if k <= 2 { 1e-4 } else { 1e-3 };
            Ok(OracleReport::new(check, lp.xi, tau_grid(&plan.slot_capacity, &plan.harvest, control, step)?))
        }
        Check::Wp => {
            if k != 2 {
                return Err(too_large("bandwidth-power user count", k, 2));
            }
            let r = solve_protocol(&model, Protocol::Fdma, control, cfg, None)?;
            let a = allocate_w_p(&model, &r.decisions[0])?;
            let n = scenario.params.num_antennas() as f64;
            let g: Vec<f64> = model
                .iu_gains(&r.decisions[0])
                .iter()
                .zip(&scenario.ius)
                .map(|(g, u)| g / (n * u.noise_power_w))
                .collect();
            Ok(OracleReport::new(check, a.min_rate, wp_grid(&g, scenario.params.total_power_w(), 1e-3)?))
        }
        Check::Alpha | Check::Order => {
            if check == Check::Alpha && k != 2 {
                return Err(too_large("power-split user count", k, 2));
            }
            if k > MAX_ORDER_USERS {
                return Err(too_large("decoding-order user count", k, MAX_ORDER_USERS));
            }
            let r = solve_protocol(&model, Protocol::Noma, control, cfg, None)?;
            let (order, _, sca) = allocate_alpha_sca(&model, &r.decisions[0], DEFAULT_SCA_EPS)?;
            let gains = model.iu_gains(&r.decisions[0]);
            let noise: Vec<f64> = scenario.ius.iter().map(|u| u.noise_power_w).collect();
            let oracle = if check == Check::Alpha {
                let users = order.by_rank();
                let g: Vec<f64> = users.iter().map(|&i| gains[i]).collect();
                let n: Vec<f64> = users.iter().map(|&i| noise[i]).collect();
                alpha_grid(&g, &n, model.power_per_element(), 1e-4)?
            } else {
                order_enumeration(&gains, &noise, model.power_per_element())?
            };
            Ok(OracleReport::new(check, sca.xi, oracle))
        }
    }
}
