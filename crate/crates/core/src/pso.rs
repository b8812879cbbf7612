//! Penalty-based particle swarm optimisation over antenna layouts or phase vectors.
//!
//! The fitness of a candidate `x` is
//!
//! ```text
//! F(x) = objective(x) - rho1 * P1(x) - rho2 * P2(x) - rho3 * P3(x)
//! ```
//!
//! where `P1` counts adjacent pairs closer than the minimum spacing, `P2`
//! counts coordinates outside the waveguide and `P3 = max(0, eps - min_j E_j)`
//! is the harvested-power shortfall in watts.
//!
//! Particles move synchronously: every particle of an iteration sees the same
//! global best, fitness evaluations run in parallel, and the personal/global
//! bests are reduced in particle-index order. Each particle draws from its own
//! ChaCha stream, so results do not depend on the number of worker threads.

use std::f64::consts::{PI, TAU};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SystemParams, LAYOUT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub omega_max: f64,
    pub omega_min: f64,
    pub c1: f64,
    pub c2: f64,
    pub penalty_rho1: f64,
    pub penalty_rho2: f64,
    pub penalty_rho3: f64,
    pub seed: u64,
    /// Stop restarting once a full run improves the global best by less than this fraction.
    pub convergence_eps: f64,
    /// Runs of `max_iters` iterations after the first one.
    pub max_restarts: usize,
    /// Per-coordinate velocity bound as a fraction of the search span.
    pub velocity_clamp_frac: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 300,
            max_iters: 300,
            omega_max: 0.9,
            omega_min: 0.1,
            c1: 1.5,
            c2: 1.5,
            penalty_rho1: 1e8,
            penalty_rho2: 1e8,
            penalty_rho3: 1e8,
            seed: 0,
            convergence_eps: 1e-3,
            max_restarts: 4,
            velocity_clamp_frac: 0.1,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pso: {m}")));
        if self.swarm_size == 0 || self.max_iters == 0 {
            return bad("swarm_size and max_iters must be positive");
        }
        if !(self.omega_max >= self.omega_min) {
            return bad("omega_max must be >= omega_min");
        }
        if ![self.penalty_rho1, self.penalty_rho2, self.penalty_rho3]
            .iter()
            .all(|r| *r > 0.0 && r.is_finite())
        {
            return bad("penalty factors must be positive");
        }
        if !(self.convergence_eps > 0.0) || !(self.velocity_clamp_frac > 0.0) {
            return bad("convergence_eps and velocity_clamp_frac must be positive");
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return bad("c1 and c2 must be non-negative");
        }
        Ok(())
    }

    /// The same settings with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Mixes a master seed with stream tags into an independent seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z ^= t.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Domain the swarm moves in.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchSpace {
    /// Ordered antenna positions on the waveguide.
    Positions {
        dim: usize,
        half_length: f64,
        spacing: f64,
        init_velocity: f64,
    },
    /// Phase vectors on the torus `[0, 2 pi)^dim`.
    Phases { dim: usize },
}

impl SearchSpace {
    pub fn positions(params: &SystemParams) -> Self {
        Self::Positions {
            dim: params.num_antennas(),
            half_length: params.half_length(),
            spacing: params.min_spacing_m(),
            init_velocity: params.guided_wavelength_m(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Positions { dim, .. } | Self::Phases { dim } => *dim,
        }
    }

    fn span(&self) -> f64 {
        match self {
            Self::Positions { half_length, .. } => 2.0 * half_length,
            Self::Phases { .. } => TAU,
        }
    }

    fn init_velocity(&self) -> f64 {
        match self {
            Self::Positions { init_velocity, .. } => *init_velocity,
            Self::Phases { .. } => PI / 4.0,
        }
    }

    /// `(spacing violations, range violations)` of a raw particle position.
    pub fn violations(&self, x: &[f64]) -> (usize, usize) {
        match self {
            Self::Positions { half_length, spacing, .. } => {
                let s = x.windows(2).filter(|w| w[1] - w[0] < spacing - LAYOUT_TOL).count();
                let r = x.iter().filter(|v| !(v.abs() <= half_length + LAYOUT_TOL)).count();
                (s, r)
            }
            Self::Phases { .. } => (0, 0),
        }
    }

    fn wrap(&self, x: &mut [f64]) {
        if let Self::Phases { .. } = self {
            for v in x.iter_mut() {
                *v = v.rem_euclid(TAU);
            }
        }
    }

    /// Sorted and clamped copy of `x` (phases are only wrapped).
    pub fn readout(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        match self {
            Self::Positions { half_length, .. } => {
                y.sort_by(f64::total_cmp);
                for v in &mut y {
                    *v = v.clamp(-half_length, *half_length);
                }
            }
            Self::Phases { .. } => self.wrap(&mut y),
        }
        y
    }

    /// Nearest-in-spirit feasible point: sort, then minimal right shifts followed
    /// by minimal left shifts against the upper end.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.readout(x);
        if let Self::Positions { half_length, spacing, .. } = self {
            let n = y.len();
            for i in 1..n {
                y[i] = y[i].max(y[i - 1] + spacing);
            }
            if n > 0 {
                y[n - 1] = y[n - 1].min(*half_length);
                for i in (0..n - 1).rev() {
                    y[i] = y[i].min(y[i + 1] - spacing);
                }
            }
        }
        y
    }

    /// Uniform sample repaired to feasibility.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Self::Positions { dim, half_length, .. } => {
                let x: Vec<f64> = (0..*dim).map(|_| rng.random_range(-half_length..=*half_length)).collect();
                self.project(&x)
            }
            Self::Phases { dim } => (0..*dim).map(|_| rng.random_range(0.0..TAU)).collect(),
        }
    }

    pub fn check_feasible_geometry(&self) -> Result<()> {
        if let Self::Positions { dim, half_length, spacing, .. } = self {
            if *dim > 0 && (*dim as f64 - 1.0) * spacing > 2.0 * half_length {
                return Err(Error::Config(format!(
                    "{dim} antennas at spacing {spacing} m do not fit on the waveguide"
                )));
            }
        }
        Ok(())
    }
}

/// Raw quantities returned by a fitness callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    /// Minimum harvested power over the energy users; `+inf` if there are none.
    pub min_energy_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitnessReport {
    pub objective: f64,
    pub spacing_violations: usize,
    pub range_violations: usize,
    pub energy_shortfall_w: f64,
    pub min_energy_w: f64,
    pub fitness: f64,
}

impl FitnessReport {
    pub fn is_feasible(&self) -> bool {
        self.spacing_violations == 0 && self.range_violations == 0 && self.energy_shortfall_w == 0.0
    }
}

/// Applies the three penalty terms to an evaluated candidate.
pub fn penalties(
    x: &[f64],
    space: &SearchSpace,
    energy_eps: f64,
    eval: Evaluation,
    cfg: &PsoConfig,
) -> FitnessReport {
    let (s, r) = space.violations(x);
    let shortfall = if eval.min_energy_w < energy_eps { energy_eps - eval.min_energy_w } else { 0.0 };
    let fitness = eval.objective
        - cfg.penalty_rho1 * s as f64
        - cfg.penalty_rho2 * r as f64
        - cfg.penalty_rho3 * shortfall;
    FitnessReport {
        objective: eval.objective,
        spacing_violations: s,
        range_violations: r,
        energy_shortfall_w: shortfall,
        min_energy_w: eval.min_energy_w,
        fitness: if fitness.is_nan() { f64::NEG_INFINITY } else { fitness },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub personal_best: Vec<f64>,
    pub personal_best_fitness: f64,
}

/// Initial swarm and the per-particle random streams.
pub fn init_swarm(space: &SearchSpace, cfg: &PsoConfig) -> Result<(Vec<Particle>, Vec<ChaCha8Rng>)> {
    cfg.validate()?;
    space.check_feasible_geometry()?;
    let v0 = space.init_velocity();
    let mut particles = Vec::with_capacity(cfg.swarm_size);
    let mut rngs = Vec::with_capacity(cfg.swarm_size);
    for s in 0..cfg.swarm_size {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64);
        let position = space.sample(&mut rng);
        let velocity = (0..space.dim()).map(|_| rng.random_range(-v0..=v0)).collect();
        particles.push(Particle {
            personal_best: position.clone(),
            position,
            velocity,
            personal_best_fitness: f64::NEG_INFINITY,
        });
        rngs.push(rng);
    }
    Ok((particles, rngs))
}

#[derive(Debug, Clone)]
pub struct PsoOutcome {
    /// Feasible best if one was seen, otherwise the repaired global best.
    pub best_position: Vec<f64>,
    pub best_report: FitnessReport,
    /// Global-best fitness after initialisation and after every iteration.
    pub trace: Vec<f64>,
    pub feasible: bool,
    pub rounds: usize,
    pub evaluations: usize,
}

/// Runs the swarm. `seeds` replace the first particles' initial positions.
pub fn pso_optimize<F>(
    space: &SearchSpace,
    energy_eps: f64,
    eval: F,
    cfg: &PsoConfig,
    seeds: &[Vec<f64>],
) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> Evaluation + Sync,
{
    let score = |x: &[f64]| penalties(x, space, energy_eps, eval(x), cfg);
    if space.dim() == 0 {
        let report = score(&[]);
        return Ok(PsoOutcome {
            best_position: Vec::new(),
            best_report: report,
            trace: vec![report.fitness],
            feasible: report.is_feasible(),
            rounds: 0,
            evaluations: 1,
        });
    }
    let (mut particles, mut rngs) = init_swarm(space, cfg)?;
    for (p, seed) in particles.iter_mut().zip(seeds) {
        if seed.len() == space.dim() {
            p.position = space.project(seed);
            p.personal_best = p.position.clone();
        }
    }

    let mut gbest = particles[0].position.clone();
    let mut gbest_fit = f64::NEG_INFINITY;
    let mut feasible_best: Option<(Vec<f64>, FitnessReport)> = None;
    let mut evaluations = 0usize;

    let reduce = |particles: &mut [Particle],
                  reports: &[FitnessReport],
                  gbest: &mut Vec<f64>,
                  gbest_fit: &mut f64,
                  feasible_best: &mut Option<(Vec<f64>, FitnessReport)>| {
        for (p, rep) in particles.iter_mut().zip(reports) {
            if rep.fitness > p.personal_best_fitness {
                p.personal_best.clone_from(&p.position);
                p.personal_best_fitness = rep.fitness;
            }
            if rep.fitness > *gbest_fit {
                gbest.clone_from(&p.position);
                *gbest_fit = rep.fitness;
            }
            if rep.is_feasible() && feasible_best.as_ref().is_none_or(|(_, b)| rep.objective > b.objective) {
                *feasible_best = Some((p.position.clone(), *rep));
            }
        }
    };

    let reports: Vec<FitnessReport> = particles.par_iter().map(|p| score(&p.position)).collect();
    evaluations += reports.len();
    reduce(&mut particles, &reports, &mut gbest, &mut gbest_fit, &mut feasible_best);
    let mut trace = vec![gbest_fit];

    let vmax = cfg.velocity_clamp_frac * space.span();
    let mut rounds = 0;
    let mut round_start = gbest_fit;
    for _ in 0..=cfg.max_restarts {
        rounds += 1;
        for l in 1..=cfg.max_iters {
            let omega = cfg.omega_max - (cfg.omega_max - cfg.omega_min) * l as f64 / cfg.max_iters as f64;
            let g = &gbest;
            let reports: Vec<FitnessReport> = particles
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .map(|(p, rng)| {
                    for d in 0..p.position.len() {
                        let r1: f64 = rng.random();
                        let r2: f64 = rng.random();
                        let v = omega * p.velocity[d]
                            + cfg.c1 * r1 * (p.personal_best[d] - p.position[d])
                            + cfg.c2 * r2 * (g[d] - p.position[d]);
                        p.velocity[d] = v.clamp(-vmax, vmax);
                        p.position[d] += p.velocity[d];
                    }
                    space.wrap(&mut p.position);
                    score(&p.position)
                })
                .collect();
            evaluations += reports.len();
            reduce(&mut particles, &reports, &mut gbest, &mut gbest_fit, &mut feasible_best);
            trace.push(gbest_fit);
        }
        let gain = gbest_fit - round_start;
        let relative = if round_start.abs() > 0.0 { gain / round_start.abs() } else if gain > 0.0 { f64::INFINITY } else { 0.0 };
        if !(relative >= cfg.convergence_eps) {
            break;
        }
        round_start = gbest_fit;
    }

    let (best_position, best_report, feasible) = match feasible_best {
        Some((x, rep)) => (space.readout(&x), rep, true),
        None => {
            let candidate = space.readout(&gbest);
            let rep = score(&candidate);
            if rep.is_feasible() {
                (candidate, rep, true)
            } else {
                let repaired = space.project(&gbest);
                let rep = score(&repaired);
                (repaired, rep, rep.is_feasible())
            }
        }
    };
    Ok(PsoOutcome { best_position, best_report, trace, feasible, rounds, evaluations })
}
