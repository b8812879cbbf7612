//! Two-stage antenna placement for one information user and one energy user.
//!
//! Stage one maximises the weighted sum of reciprocal distances
//! `sum_n rho / r_I(x_n) + (1 - rho) / r_E(x_n)` by successive convex
//! approximation: with `Y_u^n` the squared distances, `1/sqrt(Y)` is replaced
//! by its tangent at the current point, the resulting problem is a separable
//! quadratic over the spacing chain and is solved exactly by
//! [`chain_qp::solve`](crate::chain_qp::solve).
//!
//! Stage two keeps the antenna with the largest weighted inverse distance fixed
//! and re-places its neighbours one by one so that the summed IU+EU
//! propagation phase advances by exactly `2 pi m`. The first-order step
//! `m / ((s_I + s_E) / lambda + 2 / lambda_g)` seeds a Newton solve of that
//! condition; the integer `m` is picked among spacing-feasible values.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::chain_qp::{self, ChainBounds};
use crate::error::{Error, Result};
use crate::model::{
    effective_gain_at, eu_power_single, iu_rate_single, PaLayout, LAYOUT_TOL, Scenario, SystemParams, UserPos,
};

/// Hard cap on SCA iterations; the fractional-increment test normally stops far earlier.
pub const MAX_SCA_ITERS: usize = 10_000;

/// Default fine-tuning drift bound, in free-space wavelengths.
pub const DEFAULT_DRIFT_WAVELENGTHS: f64 = 4.0;

/// Default SCA stopping threshold on the fractional objective increment.
pub const DEFAULT_EPS1: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedObjective {
    pub rho: f64,
    /// `rho |sum e^{j phi_I} / r_I| + (1 - rho) |sum e^{j phi_E} / r_E|`
    pub value: f64,
}

/// The IU and EU of a single-pair scenario.
pub fn pair(scenario: &Scenario) -> Result<(&UserPos, &UserPos)> {
    match (scenario.ius.as_slice(), scenario.eus.as_slice()) {
        ([iu], [eu]) => Ok((iu, eu)),
        _ => Err(Error::Config(format!(
            "single-pair placement needs exactly one IU and one EU, got {} and {}",
            scenario.ius.len(),
            scenario.eus.len()
        ))),
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain(format!("rho must lie in [0, 1], got {rho}")))
    }
}

/// Weighted channel-gain objective of the single-pair problem.
pub fn weighted_objective(
    xs: &[f64],
    iu: &UserPos,
    eu: &UserPos,
    params: &SystemParams,
    rho: f64,
) -> f64 {
    let scale = params.path_loss_coeff().sqrt();
    (rho * effective_gain_at(xs, iu, params).norm()
        + (1.0 - rho) * effective_gain_at(xs, eu, params).norm())
        / scale
}

/// Weighted sum of reciprocal distances (phases ignored).
pub fn path_loss_objective(
    xs: &[f64],
    iu: &UserPos,
    eu: &UserPos,
    params: &SystemParams,
    rho: f64,
) -> f64 {
    let d = params.waveguide_height_m();
    xs.iter()
        .map(|&x| rho / iu.distance_to(x, d) + (1.0 - rho) / eu.distance_to(x, d))
        .sum()
}

/// State of the path-loss SCA: auxiliary squared distances and the coarse layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaState {
    pub y_iu: Vec<f64>,
    pub y_eu: Vec<f64>,
    pub layout: PaLayout,
    pub iteration: usize,
    /// Relaxed objective `sum rho / sqrt(Y_I) + (1 - rho) / sqrt(Y_E)`.
    pub objective: f64,
}

impl ScaState {
    /// State with tight auxiliary variables at a given layout.
    pub fn at(layout: PaLayout, scenario: &Scenario, rho: f64) -> Result<Self> {
        let (iu, eu) = pair(scenario)?;
        let d = scenario.params.waveguide_height_m();
        let sq = |u: &UserPos| -> Vec<f64> {
            layout.positions().iter().map(|&x| u.distance_to(x, d).powi(2)).collect()
        };
        let y_iu = sq(iu);
        let y_eu = sq(eu);
        let objective = y_iu
            .iter()
            .zip(&y_eu)
            .map(|(yi, ye)| rho / yi.sqrt() + (1.0 - rho) / ye.sqrt())
            .sum();
        Ok(Self { y_iu, y_eu, layout, iteration: 0, objective })
    }

    /// Evenly spread antennas.
    pub fn initial(scenario: &Scenario, rho: f64) -> Result<Self> {
        Self::at(PaLayout::uniform(&scenario.params), scenario, rho)
    }
}

/// One SCA step: maximise the tangent lower bound at the current `Y`.
pub fn sca_subproblem(state: &ScaState, scenario: &Scenario, rho: f64) -> Result<ScaState> {
    check_rho(rho)?;
    let (iu, eu) = pair(scenario)?;
    let params = &scenario.params;
    // tangent of 1/sqrt(Y) at Y0 has slope -1/(2 Y0^{3/2}); with Y tight the
    // bound is a concave quadratic in x centred on the user's x-coordinate
    let mut weights = Vec::with_capacity(state.y_iu.len());
    let mut targets = Vec::with_capacity(state.y_iu.len());
    for (yi, ye) in state.y_iu.iter().zip(&state.y_eu) {
        let ai = rho / (2.0 * yi.powf(1.5));
        let ae = (1.0 - rho) / (2.0 * ye.powf(1.5));
        let q = ai + ae;
        weights.push(q);
        targets.push((ai * iu.x_m + ae * eu.x_m) / q);
    }
    let bounds = ChainBounds {
        gap: params.min_spacing_m(),
        lo: -params.half_length(),
        hi: params.half_length(),
    };
    let xs = chain_qp::solve(&weights, &targets, bounds)?;
    let mut next = ScaState::at(PaLayout::new(xs, params)?, scenario, rho)?;
    next.iteration = state.iteration + 1;
    Ok(next)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaRun {
    pub state: ScaState,
    /// Relaxed objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
}

pub fn run_sca(scenario: &Scenario, rho: f64, eps1: f64) -> Result<ScaRun> {
    run_sca_from(ScaState::initial(scenario, rho)?, scenario, rho, eps1)
}

/// SCA from an arbitrary feasible state, until the fractional increment drops below `eps1`.
pub fn run_sca_from(start: ScaState, scenario: &Scenario, rho: f64, eps1: f64) -> Result<ScaRun> {
    check_rho(rho)?;
    if !(eps1 > 0.0) {
        return Err(Error::Domain(format!("eps1 must be positive, got {eps1}")));
    }
    let mut state = start;
    let mut trace = vec![state.objective];
    for _ in 0..MAX_SCA_ITERS {
        let next = sca_subproblem(&state, scenario, rho)?;
        if next.objective < state.objective {
            // rounding at the fixed point
            state.iteration = next.iteration;
            break;
        }
        let increment = (next.objective - state.objective) / state.objective;
        state = next;
        trace.push(state.objective);
        if increment < eps1 {
            break;
        }
    }
    Ok(ScaRun { state, trace })
}

/// Signed slope `d r_u / d x` at `x`.
fn slope(x: f64, user: &UserPos, params: &SystemParams) -> f64 {
    (x - user.x_m) / user.distance_to(x, params.waveguide_height_m())
}

/// Step from `x_prev` that advances the summed IU+EU phase by `2 pi m` to first order.
pub fn step_delta_x(x_prev: f64, scenario: &Scenario, m: u32) -> Result<f64> {
    let (iu, eu) = pair(scenario)?;
    Ok(step_at(x_prev, iu, eu, &scenario.params) * m as f64)
}

/// Backward step `x_n - x_{n-1}` evaluated at the right neighbour `x_next`.
pub fn step_delta_x_prime(x_next: f64, scenario: &Scenario, m: u32) -> Result<f64> {
    step_delta_x(x_next, scenario, m)
}

fn step_at(x: f64, iu: &UserPos, eu: &UserPos, params: &SystemParams) -> f64 {
    let denom = (slope(x, iu, params) + slope(x, eu, params)) / params.wavelength_m()
        + 2.0 / params.guided_wavelength_m();
    1.0 / denom
}

/// How fine-tuning picks the integer `m` for each antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepRule {
    /// Spacing-feasible step whose position is nearest to the coarse position.
    NearestCoarse,
    /// Among spacing-feasible steps within the drift bound, the one that
    /// maximises the weighted objective of the antennas placed so far.
    BestObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FineTuneConfig {
    /// Maximum distance of a fine-tuned antenna from its coarse position;
    /// `None` means [`DEFAULT_DRIFT_WAVELENGTHS`] free-space wavelengths.
    pub drift_bound_m: Option<f64>,
    pub rule: StepRule,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self { drift_bound_m: None, rule: StepRule::BestObjective }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineTuneResult {
    pub layout: PaLayout,
    /// Index of the reference antenna kept at its coarse position.
    pub ref_index: usize,
    /// Chosen `m = k1 + k2` per antenna; zero for the reference and for clamped antennas.
    pub steps: Vec<u32>,
    /// Antennas whose aligned candidates all left the waveguide and were clamped instead.
    pub clamped: Vec<usize>,
    /// True if some antenna ended farther than the drift bound from its coarse position.
    pub drift_exceeded: bool,
}

/// Index of the coarse antenna with the largest weighted inverse distance (lowest index on ties).
pub fn reference_index(xs: &[f64], iu: &UserPos, eu: &UserPos, params: &SystemParams, rho: f64) -> usize {
    let d = params.waveguide_height_m();
    let score = |x: f64| rho / iu.distance_to(x, d) + (1.0 - rho) / eu.distance_to(x, d);
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if score(x) > score(xs[best]) {
            best = i;
        }
    }
    best
}

struct Placement<'a> {
    iu: &'a UserPos,
    eu: &'a UserPos,
    params: &'a SystemParams,
    rho: f64,
    sum_iu: Complex64,
    sum_eu: Complex64,
}

impl Placement<'_> {
    fn value_with(&self, x: f64) -> f64 {
        let gi = self.sum_iu + effective_gain_at(&[x], self.iu, self.params);
        let ge = self.sum_eu + effective_gain_at(&[x], self.eu, self.params);
        self.rho * gi.norm() + (1.0 - self.rho) * ge.norm()
    }

    fn add(&mut self, x: f64) {
        self.sum_iu += effective_gain_at(&[x], self.iu, self.params);
        self.sum_eu += effective_gain_at(&[x], self.eu, self.params);
    }
}

/// Summed IU+EU phase in cycles, `(r_I(x) + r_E(x)) / lambda + 2 x / lambda_g`,
/// up to a constant. Strictly increasing in `x`.
struct SummedPhase<'a> {
    iu: &'a UserPos,
    eu: &'a UserPos,
    params: &'a SystemParams,
}

impl SummedPhase<'_> {
    fn cycles(&self, x: f64) -> f64 {
        let d = self.params.waveguide_height_m();
        (self.iu.distance_to(x, d) + self.eu.distance_to(x, d)) / self.params.wavelength_m()
            + 2.0 * x / self.params.guided_wavelength_m()
    }

    fn slope(&self, x: f64) -> f64 {
        1.0 / step_at(x, self.iu, self.eu, self.params)
    }

    /// The unique `x` with `cycles(x) = cycles(anchor) + dir * m`, refined by
    /// safeguarded Newton iterations started at the first-order step.
    fn aligned(&self, anchor: f64, dir: f64, m: u32) -> f64 {
        let target = self.cycles(anchor) + dir * m as f64;
        let lam = self.params.wavelength_m();
        let lg = self.params.guided_wavelength_m();
        let span = m as f64;
        let (mut lo, mut hi) = {
            let near = anchor + dir * span / (2.0 / lg + 2.0 / lam);
            let far = anchor + dir * span / (2.0 / lg - 2.0 / lam);
            if dir > 0.0 { (near, far) } else { (far, near) }
        };
        let mut x = anchor + dir * span / self.slope(anchor);
        for _ in 0..100 {
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let f = self.cycles(x) - target;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let next = x - f / self.slope(x);
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return next.clamp(lo, hi);
            }
            x = next;
        }
        x
    }
}

/// Outcome of placing one antenna relative to an already-placed neighbour.
struct Step {
    x: f64,
    m: u32,
    clamped: bool,
}

struct StepLimits {
    coarse: f64,
    /// Outermost coordinate that still leaves room for the remaining antennas.
    limit: f64,
    spacing: f64,
    drift: f64,
}

/// Places the next antenna `m` summed-phase cycles from `anchor`, `dir = +1` to the right.
fn place_one(
    phase: &SummedPhase<'_>,
    anchor: f64,
    dir: f64,
    lim: &StepLimits,
    rule: StepRule,
    placed: &Placement<'_>,
) -> Step {
    let base = phase.cycles(anchor);
    // signed cycle count from the anchor to `x`, positive in the fill direction
    let count = |x: f64| dir * (phase.cycles(x) - base);
    let pos = |m: u32| phase.aligned(anchor, dir, m);
    let legal = |x: f64| dir * (x - anchor) >= lim.spacing - LAYOUT_TOL && dir * (lim.limit - x) >= 0.0;

    let mut m_min = count(anchor + dir * lim.spacing).ceil().max(1.0) as u32;
    while dir * (pos(m_min) - anchor) < lim.spacing - LAYOUT_TOL {
        m_min += 1;
    }
    let mut m_max = count(lim.limit).floor().max(0.0) as u32;
    while m_max >= m_min && !legal(pos(m_max)) {
        m_max -= 1;
    }
    if m_max < m_min || !legal(pos(m_min)) {
        let nearest_legal = anchor + dir * lim.spacing;
        let x = if dir > 0.0 {
            lim.coarse.clamp(nearest_legal, lim.limit)
        } else {
            lim.coarse.clamp(lim.limit, nearest_legal)
        };
        return Step { x, m: 0, clamped: true };
    }

    let ideal = count(lim.coarse).round().max(m_min as f64).min(m_max as f64) as u32;
    let mut nearest = ideal;
    for m in [ideal.saturating_sub(1), ideal + 1] {
        if (m_min..=m_max).contains(&m) && (pos(m) - lim.coarse).abs() < (pos(nearest) - lim.coarse).abs() {
            nearest = m;
        }
    }
    let m = match rule {
        StepRule::NearestCoarse => nearest,
        StepRule::BestObjective => {
            let ends = [count(lim.coarse - lim.drift), count(lim.coarse + lim.drift)];
            let lo = ends[0].min(ends[1]).ceil().max(m_min as f64) as u32;
            let hi = ends[0].max(ends[1]).floor().min(m_max as f64).max(0.0) as u32;
            let mut best = nearest;
            let mut best_x = pos(nearest);
            let mut best_val = placed.value_with(best_x);
            for m in lo..=hi {
                let x = pos(m);
                if (x - lim.coarse).abs() > lim.drift {
                    continue;
                }
                let v = placed.value_with(x);
                let closer = (x - lim.coarse).abs() < (best_x - lim.coarse).abs();
                if v > best_val || (v == best_val && closer) {
                    best = m;
                    best_x = x;
                    best_val = v;
                }
            }
            best
        }
    };
    Step { x: pos(m), m, clamped: false }
}

/// Phase-alignment stage applied to a coarse layout.
pub fn fine_tune(coarse: &PaLayout, scenario: &Scenario, rho: f64) -> Result<FineTuneResult> {
    fine_tune_with(coarse, scenario, rho, &FineTuneConfig::default())
}

pub fn fine_tune_with(
    coarse: &PaLayout,
    scenario: &Scenario,
    rho: f64,
    cfg: &FineTuneConfig,
) -> Result<FineTuneResult> {
    check_rho(rho)?;
    let (iu, eu) = pair(scenario)?;
    let params = &scenario.params;
    let c = coarse.positions();
    let n = c.len();
    let spacing = params.min_spacing_m();
    let half = params.half_length();
    let drift = cfg.drift_bound_m.unwrap_or(DEFAULT_DRIFT_WAVELENGTHS * params.wavelength_m());
    let phase = SummedPhase { iu, eu, params };

    let star = reference_index(c, iu, eu, params, rho);
    let mut x = c.to_vec();
    let mut steps = vec![0u32; n];
    let mut clamped = Vec::new();
    let mut placed = Placement {
        iu,
        eu,
        params,
        rho,
        sum_iu: Complex64::new(0.0, 0.0),
        sum_eu: Complex64::new(0.0, 0.0),
    };
    placed.add(x[star]);

    for i in star + 1..n {
        let lim = StepLimits { coarse: c[i], limit: half - (n - 1 - i) as f64 * spacing, spacing, drift };
        let s = place_one(&phase, x[i - 1], 1.0, &lim, cfg.rule, &placed);
        x[i] = s.x;
        steps[i] = s.m;
        if s.clamped {
            clamped.push(i);
        }
        placed.add(s.x);
    }
    for i in (0..star).rev() {
        let lim = StepLimits { coarse: c[i], limit: -half + i as f64 * spacing, spacing, drift };
        let s = place_one(&phase, x[i + 1], -1.0, &lim, cfg.rule, &placed);
        x[i] = s.x;
        steps[i] = s.m;
        if s.clamped {
            clamped.push(i);
        }
        placed.add(s.x);
    }
    clamped.sort_unstable();
    let drift_exceeded = x.iter().zip(c).any(|(a, b)| (a - b).abs() > drift + 1e-12);
    Ok(FineTuneResult {
        layout: PaLayout::new(x, params)?,
        ref_index: star,
        steps,
        clamped,
        drift_exceeded,
    })
}

/// Wrapped residuals `(phi_I^n + phi_E^n) - (phi_I^{n-1} + phi_E^{n-1})` modulo `2 pi`,
/// in `(-pi, pi]`, one per adjacent pair.
pub fn summed_phase_residuals(xs: &[f64], iu: &UserPos, eu: &UserPos, params: &SystemParams) -> Vec<f64> {
    let d = params.waveguide_height_m();
    let lam = params.wavelength_m();
    let lg = params.guided_wavelength_m();
    xs.windows(2)
        .map(|w| {
            let dr = (iu.distance_to(w[1], d) - iu.distance_to(w[0], d))
                + (eu.distance_to(w[1], d) - eu.distance_to(w[0], d));
            let cycles = dr / lam + 2.0 * (w[1] - w[0]) / lg;
            let frac = cycles - cycles.round();
            frac * TAU
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStage {
    pub layout: PaLayout,
    pub objective: WeightedObjective,
    pub rate: f64,
    pub power_w: f64,
    pub sca: ScaRun,
    pub fine: FineTuneResult,
}

pub fn two_stage(scenario: &Scenario, rho: f64, eps1: f64) -> Result<TwoStage> {
    two_stage_with(scenario, rho, eps1, &FineTuneConfig::default())
}

pub fn two_stage_with(
    scenario: &Scenario,
    rho: f64,
    eps1: f64,
    cfg: &FineTuneConfig,
) -> Result<TwoStage> {
    let (iu, eu) = pair(scenario)?;
    let params = &scenario.params;
    let sca = run_sca(scenario, rho, eps1)?;
    let fine = fine_tune_with(&sca.state.layout, scenario, rho, cfg)?;
    let layout = fine.layout.clone();
    let value = weighted_objective(layout.positions(), iu, eu, params, rho);
    Ok(TwoStage {
        objective: WeightedObjective { rho, value },
        rate: iu_rate_single(&layout, iu, params),
        power_w: eu_power_single(&layout, eu, params),
        layout,
        sca,
        fine,
    })
}
