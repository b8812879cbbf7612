//! Reference oracles shared by the integration tests. Nothing here calls the
//! library's channel or allocation code.

#![allow(dead_code)]

use std::f64::consts::TAU;

use pass_swipt::allocation::{AllocationResult, Resources};
use pass_swipt::model::{dbm_to_watts, Scenario, SystemConfig, SystemParams, UserPos};
use pass_swipt::pso::PsoConfig;
use pass_swipt::system::{SystemModel, TransmitterKind};

/// Double-double number `hi + lo`, about 32 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.224_646_799_147_353_2e-16 };

    pub fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        let x = Dd::from(self.hi.sqrt());
        let r = self.sub(x.mul(x));
        x.add(r.div(x.mul(Dd::from(2.0))))
    }

    /// Fractional part in `[0, 1)`.
    pub fn fract(self) -> f64 {
        let r = self.sub(Dd::from(self.hi.floor()));
        let f = r.hi + r.lo;
        if f < 0.0 {
            f + 1.0
        } else if f >= 1.0 {
            f - 1.0
        } else {
            f
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

pub const C: f64 = 299_792_458.0;

/// Raw geometry taken from the configuration values, not from derived fields.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub freq_hz: f64,
    pub n_eff: f64,
    pub height: f64,
    pub length: f64,
}

impl Geometry {
    pub fn of(cfg: &SystemConfig) -> Self {
        Self {
            freq_hz: cfg.carrier_frequency_hz,
            n_eff: cfg.refractive_index,
            height: cfg.waveguide_height_m,
            length: cfg.waveguide_length_m,
        }
    }

    pub fn wavelength(&self) -> Dd {
        Dd::from(C).div(Dd::from(self.freq_hz))
    }

    pub fn distance(&self, x: f64, ux: f64, uy: f64) -> Dd {
        let dx = Dd::from(ux).sub(Dd::from(x));
        let s = dx.mul(dx).add(Dd::from(uy).mul(Dd::from(uy))).add(Dd::from(self.height).mul(Dd::from(self.height)));
        s.sqrt()
    }

    /// Phase from the feed point to `x` in radians, unreduced.
    pub fn guided_phase(&self, x: f64) -> f64 {
        let cycles = Dd::from(x).add(Dd::from(self.length / 2.0)).mul(Dd::from(self.n_eff)).div(self.wavelength());
        Dd::PI.mul(Dd::from(2.0)).mul(cycles).to_f64()
    }

    /// Radiating element at `x`, as `(amplitude, phase in [0, 2 pi))` of
    /// `sqrt(eta)/r exp(-j (2 pi r / lambda + extra_cycles))`.
    fn polar(&self, x: f64, ux: f64, uy: f64, guided: bool) -> (f64, f64) {
        let lam = self.wavelength();
        let r = self.distance(x, ux, uy);
        let mut cycles = r.div(lam);
        if guided {
            cycles = cycles.add(Dd::from(x).add(Dd::from(self.length / 2.0)).mul(Dd::from(self.n_eff)).div(lam));
        }
        let amp = lam.div(Dd::PI.mul(Dd::from(4.0)).mul(r)).to_f64();
        (amp, TAU * cycles.fract())
    }

    /// Pinching-antenna entry including the in-waveguide phase, as `(re, im)`.
    pub fn entry(&self, x: f64, ux: f64, uy: f64) -> (f64, f64) {
        let (a, ph) = self.polar(x, ux, uy, true);
        (a * ph.cos(), -a * ph.sin())
    }

    /// Free-space entry of a fixed element, as `(re, im)`.
    pub fn free_entry(&self, x: f64, ux: f64, uy: f64) -> (f64, f64) {
        let (a, ph) = self.polar(x, ux, uy, false);
        (a * ph.cos(), -a * ph.sin())
    }

    pub fn gain(&self, xs: &[f64], ux: f64, uy: f64) -> (f64, f64) {
        xs.iter().map(|&x| self.entry(x, ux, uy)).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }

    pub fn power_gain(&self, xs: &[f64], ux: f64, uy: f64) -> f64 {
        let (re, im) = self.gain(xs, ux, uy);
        re * re + im * im
    }

    pub fn sqrt_eta(&self) -> f64 {
        self.wavelength().div(Dd::PI.mul(Dd::from(4.0))).to_f64()
    }
}

pub fn norm(z: (f64, f64)) -> f64 {
    z.0.hypot(z.1)
}

/// Maximum of `sum_n score[i_n]` over index chains with `i_{n+1} - i_n >= gap`,
/// with the maximising indices.
pub fn chain_dp(score: &[f64], n: usize, gap: usize) -> (f64, Vec<usize>) {
    let m = score.len();
    let mut best = score.to_vec();
    let mut choice: Vec<Vec<usize>> = vec![(0..m).collect()];
    for _ in 1..n {
        let mut prefix = vec![(f64::NEG_INFINITY, 0usize); m];
        let mut run = (f64::NEG_INFINITY, 0usize);
        for i in 0..m {
            if best[i] > run.0 {
                run = (best[i], i);
            }
            prefix[i] = run;
        }
        let mut next = vec![f64::NEG_INFINITY; m];
        let mut from = vec![0usize; m];
        for i in gap..m {
            let (v, j) = prefix[i - gap];
            next[i] = v + score[i];
            from[i] = j;
        }
        best = next;
        choice.push(from);
    }
    let (mut i, v) = best.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let mut idx = vec![i; n];
    for level in (1..n).rev() {
        i = choice[level][i];
        idx[level - 1] = i;
    }
    (v, idx)
}

/// 1 mm grid points of a waveguide `[-L/2, L/2]`.
pub fn grid_points(length: f64, step: f64) -> Vec<f64> {
    let n = (length / step).round() as usize;
    (0..=n).map(|i| (-length / 2.0 + i as f64 * step).min(length / 2.0)).collect()
}

/// Best `rho |g_I| + (1 - rho) |g_E|` (divided by `sqrt(eta)`) over 1 mm grid
/// layouts of one or two antennas.
pub fn placement_grid(geo: &Geometry, iu: (f64, f64), eu: (f64, f64), n: usize, spacing: f64, rho: f64) -> (f64, Vec<f64>) {
    assert!(n == 1 || n == 2);
    let xs = grid_points(geo.length, 1e-3);
    let hi: Vec<(f64, f64)> = xs.iter().map(|&x| geo.entry(x, iu.0, iu.1)).collect();
    let he: Vec<(f64, f64)> = xs.iter().map(|&x| geo.entry(x, eu.0, eu.1)).collect();
    let s = geo.sqrt_eta();
    let gap = (spacing / 1e-3 - 1e-9).ceil() as usize;
    let mut best = (f64::NEG_INFINITY, vec![]);
    for i in 0..xs.len() {
        if n == 1 {
            let v = (rho * norm(hi[i]) + (1.0 - rho) * norm(he[i])) / s;
            if v > best.0 {
                best = (v, vec![xs[i]]);
            }
            continue;
        }
        for j in (i + gap)..xs.len() {
            let gi = (hi[i].0 + hi[j].0, hi[i].1 + hi[j].1);
            let ge = (he[i].0 + he[j].0, he[i].1 + he[j].1);
            let v = (rho * norm(gi) + (1.0 - rho) * norm(ge)) / s;
            if v > best.0 {
                best = (v, vec![xs[i], xs[j]]);
            }
        }
    }
    best
}

/// Max-min FDMA rate for two users: bisection on the rate, with the minimum
/// power at each rate found by ternary search over the bandwidth split.
pub fn fdma_two_user(g: [f64; 2], total_power: f64) -> f64 {
    let power = |w: f64, xi: f64, g: f64| w * ((xi / w).exp2() - 1.0) / g;
    let min_power = |xi: f64| {
        let (mut a, mut b) = (1e-12, 1.0 - 1e-12);
        for _ in 0..300 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            let f = |w: f64| power(w, xi, g[0]) + power(1.0 - w, xi, g[1]);
            if f(m1) < f(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let w = 0.5 * (a + b);
        power(w, xi, g[0]) + power(1.0 - w, xi, g[1])
    };
    let (mut lo, mut hi) = (0.0, (1.0 + total_power * g[0].max(g[1])).log2());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if min_power(mid) <= total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Best min-rate over a `(w_1, p_1)` grid for two users.
pub fn wp_grid_two_user(g: [f64; 2], power: f64, steps: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 1..steps {
        let w = i as f64 / steps as f64;
        for j in 1..steps {
            let p = power * j as f64 / steps as f64;
            let r1 = w * (1.0 + p * g[0] / w).log2();
            let r2 = (1.0 - w) * (1.0 + (power - p) * g[1] / (1.0 - w)).log2();
            best = best.max(r1.min(r2));
        }
    }
    best
}

/// Best two-user NOMA min-rate over a grid of the first user's power fraction.
pub fn alpha_grid_two_user(g: [f64; 2], noise: [f64; 2], power: f64, step: f64) -> f64 {
    let rank = if g[0] <= g[1] { [0, 1] } else { [1, 0] };
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| {
            let a = i as f64 * step;
            let r = noma_rates(&g, &[a, 1.0 - a], &rank, power, &noise);
            r[0].min(r[1])
        })
        .fold(0.0, f64::max)
}

/// Exact two-user NOMA max-min rate. `weak` decodes first and keeps at least
/// half of the power.
pub fn noma_two_user(g_weak: f64, n_weak: f64, g_strong: f64, n_strong: f64, power: f64) -> f64 {
    let r_weak = |a: f64| (1.0 + a * power * g_weak / ((1.0 - a) * power * g_weak + n_weak)).log2();
    let r_strong = |a: f64| (1.0 + (1.0 - a) * power * g_strong / n_strong).log2();
    if r_weak(0.5) >= r_strong(0.5) {
        return r_strong(0.5);
    }
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r_weak(mid) < r_strong(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    r_weak(lo).min(r_strong(lo))
}

/// NOMA rates for fractions `alpha` (by user) and decoding positions `rank`.
pub fn noma_rates(gains: &[f64], alpha: &[f64], rank: &[usize], power: f64, noise: &[f64]) -> Vec<f64> {
    (0..gains.len())
        .map(|k| {
            let later: f64 = (0..gains.len()).filter(|&i| rank[i] > rank[k]).map(|i| alpha[i]).sum();
            (1.0 + alpha[k] * power * gains[k] / (later * power * gains[k] + noise[k])).log2()
        })
        .collect()
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if m < k {
        return vec![];
    }
    let mut out = subsets(m - 1, k);
    for mut s in subsets(m - 1, k - 1) {
        s.push(m - 1);
        out.push(s);
    }
    out
}

/// Optimal value of `max xi s.t. tau_k c_k >= xi, sum tau <= 1, tau >= 0,
/// sum_k tau_k h[j][k] >= eps` by enumerating every vertex; `None` if infeasible.
pub fn tau_vertex(capacity: &[f64], harvest: &[Vec<f64>], eps: f64) -> Option<f64> {
    let k = capacity.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..k {
        let mut a = vec![0.0; k + 1];
        a[i] = -capacity[i];
        a[k] = 1.0;
        rows.push((a, 0.0));
        let mut a = vec![0.0; k + 1];
        a[i] = -1.0;
        rows.push((a, 0.0));
    }
    let mut a = vec![1.0; k + 1];
    a[k] = 0.0;
    rows.push((a, 1.0));
    let scale = if eps > 0.0 { eps } else { 1.0 };
    for h in harvest {
        let mut a: Vec<f64> = h.iter().map(|v| -v / scale).collect();
        a.push(0.0);
        rows.push((a, -eps / scale));
    }
    let feasible = |z: &[f64]| {
        rows.iter().all(|(a, b)| a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>() <= b + 1e-10 * (1.0 + b.abs()))
    };
    let mut best: Option<f64> = None;
    for s in subsets(rows.len(), k + 1) {
        let a = s.iter().map(|&i| rows[i].0.clone()).collect();
        let b = s.iter().map(|&i| rows[i].1).collect();
        if let Some(z) = solve_linear(a, b) {
            if feasible(&z) {
                best = Some(best.map_or(z[k], |v: f64| v.max(z[k])));
            }
        }
    }
    best
}

/// Grid optimum of the same LP. Two slots use a uniform grid; three slots a
/// coarse grid followed by a fine grid around its best point.
pub fn tau_grid(capacity: &[f64], harvest: &[Vec<f64>], eps: f64) -> f64 {
    let eval = |t: &[f64]| {
        let ok = harvest.iter().all(|h| h.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() >= eps);
        if ok && t.iter().all(|v| *v >= 0.0) {
            t.iter().zip(capacity).map(|(a, b)| a * b).fold(f64::INFINITY, f64::min)
        } else {
            f64::NEG_INFINITY
        }
    };
    match capacity.len() {
        1 => eval(&[1.0]),
        2 => {
            let n = 1_000_000;
            (0..=n).map(|i| i as f64 / n as f64).map(|t| eval(&[t, 1.0 - t])).fold(f64::NEG_INFINITY, f64::max)
        }
        3 => {
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            let n = 1000;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                    let v = eval(&[a, b, (1.0 - a - b).max(0.0)]);
                    if v > best.0 {
                        best = (v, a, b);
                    }
                }
            }
            let (h, w) = (1e-6, 2000i64);
            let (a0, b0) = (best.1, best.2);
            for i in -w..=w {
                for j in -w..=w {
                    let (a, b) = (a0 + i as f64 * h, b0 + j as f64 * h);
                    if a >= 0.0 && b >= 0.0 && a + b <= 1.0 {
                        best.0 = best.0.max(eval(&[a, b, 1.0 - a - b]));
                    }
                }
            }
            best.0
        }
        _ => panic!("at most three slots"),
    }
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
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

pub fn config(n: usize, p_dbm: f64) -> SystemConfig {
    SystemConfig { num_antennas: n, total_power_w: dbm_to_watts(p_dbm), ..Default::default() }
}

pub fn params(n: usize, p_dbm: f64) -> SystemParams {
    SystemParams::new(&config(n, p_dbm)).unwrap()
}

/// IU (-4, 5) and EU (5, -3).
pub fn single_pair(n: usize) -> Scenario {
    Scenario::single_pair(params(n, 40.0))
}

/// IUs (-4, 5), (4, 5) and EUs (-5, -3), (5, -3).
pub fn four_users(n: usize, p_dbm: f64) -> Scenario {
    Scenario::two_by_two(params(n, p_dbm))
}

pub fn scenario(n: usize, ius: &[(f64, f64)], eus: &[(f64, f64)]) -> Scenario {
    let p = params(n, 40.0);
    let noise = p.noise_power_w();
    let ius = ius.iter().map(|&(x, y)| UserPos::iu(x, y, noise)).collect();
    let eus = eus.iter().map(|&(x, y)| UserPos::eu(x, y)).collect();
    Scenario::new(p, ius, eus).unwrap()
}

/// A small swarm for tests that only need a reasonable layout.
pub fn quick_pso(seed: u64) -> PsoConfig {
    PsoConfig { swarm_size: 60, max_iters: 80, max_restarts: 1, seed, ..Default::default() }
}

/// Minimum harvested power recomputed from the raw geometry.
fn oracle_energies(model: &SystemModel, cfg: &SystemConfig, decisions: &[Vec<f64>], tau: Option<&[f64]>) -> Vec<f64> {
    let geo = Geometry::of(cfg);
    let n = cfg.num_antennas as f64;
    let zeta = cfg.energy_conversion_eff;
    let lam = C / cfg.carrier_frequency_hz;
    let slot_power = |d: &[f64], u: &UserPos| -> f64 {
        match model.kind {
            TransmitterKind::Pass => zeta * cfg.total_power_w / n * geo.power_gain(d, u.x_m, u.y_m),
            TransmitterKind::Con1 => {
                let h = geo.free_entry(-cfg.waveguide_length_m / 2.0, u.x_m, u.y_m);
                zeta * cfg.total_power_w * (h.0 * h.0 + h.1 * h.1)
            }
            TransmitterKind::Con2 => {
                let centre = (n - 1.0) / 2.0;
                let (mut re, mut im) = (0.0, 0.0);
                for (i, t) in d.iter().enumerate() {
                    let e = -cfg.waveguide_length_m / 2.0 + (i as f64 - centre) * lam / 2.0;
                    let h = geo.free_entry(e, u.x_m, u.y_m);
                    re += h.0 * t.cos() - h.1 * t.sin();
                    im += h.0 * t.sin() + h.1 * t.cos();
                }
                zeta * cfg.total_power_w / n * (re * re + im * im)
            }
        }
    };
    model
        .scenario
        .eus
        .iter()
        .map(|u| match tau {
            Some(tau) => decisions.iter().zip(tau).map(|(d, t)| t * slot_power(d, u)).sum(),
            None => slot_power(&decisions[0], u),
        })
        .collect()
}

/// Re-checks every hard constraint of a feasible-flagged result from scratch.
pub fn revalidate(model: &SystemModel, cfg: &SystemConfig, r: &AllocationResult) -> Result<(), String> {
    let geo = Geometry::of(cfg);
    let lam = C / cfg.carrier_frequency_hz;
    let spacing = cfg.min_spacing_m.unwrap_or(lam / 2.0);
    let half = cfg.waveguide_length_m / 2.0;
    let k = model.scenario.ius.len();
    for d in &r.decisions {
        match model.kind {
            TransmitterKind::Pass => {
                if d.len() != cfg.num_antennas {
                    return Err(format!("layout {d:?} has the wrong length"));
                }
                if d.iter().any(|x| x.abs() > half) {
                    return Err(format!("layout {d:?} leaves the waveguide"));
                }
                if d.windows(2).any(|w| w[1] - w[0] < spacing * (1.0 - 1e-12)) {
                    return Err(format!("layout {d:?} violates the spacing {spacing}"));
                }
            }
            TransmitterKind::Con1 => {
                if !d.is_empty() {
                    return Err("con1 has no decision variables".into());
                }
            }
            TransmitterKind::Con2 => {
                if d.len() != cfg.num_antennas || d.iter().any(|t| !(0.0..TAU).contains(t)) {
                    return Err(format!("phases {d:?} out of range"));
                }
            }
        }
    }
    let tau = match &r.resources {
        Resources::Fdma { w, p_w } => {
            if w.iter().chain(p_w).any(|v| *v < 0.0) {
                return Err("negative share".into());
            }
            if w.iter().sum::<f64>() > 1.0 + 1e-9 || p_w.iter().sum::<f64>() > cfg.total_power_w * (1.0 + 1e-9) {
                return Err(format!("budgets exceeded: w={w:?} p={p_w:?}"));
            }
            None
        }
        Resources::Tdma { tau } => {
            if tau.len() != k || r.decisions.len() != k || tau.iter().any(|t| *t < 0.0) || tau.iter().sum::<f64>() > 1.0 + 1e-9 {
                return Err(format!("time shares {tau:?} invalid"));
            }
            Some(tau.as_slice())
        }
        Resources::Noma { alpha, order } => {
            if alpha.iter().any(|a| *a < -1e-12) || alpha.iter().sum::<f64>() > 1.0 + 1e-9 {
                return Err(format!("power fractions {alpha:?} invalid"));
            }
            let gains: Vec<f64> = model
                .scenario
                .ius
                .iter()
                .map(|u| match model.kind {
                    TransmitterKind::Pass => geo.power_gain(&r.decisions[0], u.x_m, u.y_m),
                    _ => model.power_gain(&r.decisions[0], u),
                })
                .collect();
            for a in 0..k {
                for b in 0..k {
                    if order[a] > order[b] && gains[a] < gains[b] * (1.0 - 1e-9) {
                        return Err(format!("order {order:?} inconsistent with gains {gains:?}"));
                    }
                    if order[a] > order[b] && alpha[a] > alpha[b] + 1e-12 {
                        return Err(format!("later-decoded IU {a} gets more power: {alpha:?}"));
                    }
                }
            }
            None
        }
    };
    let energies = oracle_energies(model, cfg, &r.decisions, tau);
    let min_e = energies.iter().copied().fold(f64::INFINITY, f64::min);
    if r.energy_eps_w > 0.0 && min_e < r.energy_eps_w * (1.0 - 1e-6) {
        return Err(format!("min harvested power {min_e:e} below {:e}", r.energy_eps_w));
    }
    if (min_e - r.min_energy_w).abs() > 1e-9 * min_e.max(1e-30) && !model.scenario.eus.is_empty() {
        return Err(format!("reported min energy {:e} differs from recomputed {min_e:e}", r.min_energy_w));
    }
    Ok(())
}
