//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{alpha_grid_two_user, tau_grid, wp_grid_two_user, Geometry};
use pass_swipt::allocation::{AllocationResult, Protocol, Resources};
use pass_swipt::baselines::{con1_solve, con2_solve};
use pass_swipt::fdma::{allocate_w_p, fdma_solve};
use pass_swipt::harness::{pareto_filter, region_contains, sweep_single_pair, ParetoPoint, SweepSpec};
use pass_swipt::model::Scenario;
use pass_swipt::noma::{allocate_alpha_sca, noma_solve, DEFAULT_SCA_EPS};
use pass_swipt::pso::PsoConfig;
use pass_swipt::single_pair::{pair, two_stage, DEFAULT_EPS1};
use pass_swipt::system::SystemModel;
use pass_swipt::tdma::{allocate_tau, tdma_solve, TdmaPlan};

const EPS_W: f64 = 5e-8;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PROTOCOLS: [Protocol; 3] = [Protocol::Fdma, Protocol::Tdma, Protocol::Noma];

struct Line {
    ok: bool,
    detail: String,
}

fn line(ok: bool, detail: String) -> Line {
    Line { ok, detail }
}

fn monotone(t: &[f64]) -> bool {
    t.windows(2).all(|w| w[1] >= w[0])
}

struct Run {
    label: String,
    model: SystemModel,
    result: Option<AllocationResult>,
}

impl Run {
    fn rate(&self) -> f64 {
        match &self.result {
            Some(r) if r.feasible => r.min_rate,
            _ => 0.0,
        }
    }
}

/// The five-seed four-user set shared by several criteria.
struct Scenario6 {
    runs: Vec<Run>,
    seconds: f64,
}

fn scenario6() -> Scenario6 {
    let s = common::four_users(4, 40.0);
    let start = Instant::now();
    let mut runs = Vec::new();
    for &seed in &SEEDS {
        let cfg = PsoConfig { seed, ..Default::default() };
        for &p in &PROTOCOLS {
            let model = SystemModel::pass(s.clone());
            let r = match p {
                Protocol::Fdma => fdma_solve(&model, EPS_W, &cfg),
                Protocol::Tdma => tdma_solve(&model, EPS_W, &cfg),
                Protocol::Noma => noma_solve(&model, EPS_W, &cfg),
            };
            runs.push(Run { label: format!("pass-{p:?}-{seed}"), model, result: r.ok() });
            let r = con1_solve(&s, p, EPS_W, &cfg);
            runs.push(Run { label: format!("con1-{p:?}-{seed}"), model: SystemModel::con1(s.clone()), result: r.ok() });
            let r = con2_solve(&s, p, EPS_W, &cfg);
            runs.push(Run { label: format!("con2-{p:?}-{seed}"), model: SystemModel::con2(s.clone()), result: r.ok() });
        }
    }
    Scenario6 { runs, seconds: start.elapsed().as_secs_f64() }
}

impl Scenario6 {
    fn mean(&self, kind: &str, p: Protocol) -> f64 {
        let prefix = format!("{kind}-{p:?}-");
        let v: Vec<f64> = self.runs.iter().filter(|r| r.label.starts_with(&prefix)).map(Run::rate).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn pass_results(&self, p: Protocol) -> impl Iterator<Item = (&SystemModel, &AllocationResult)> {
        let prefix = format!("pass-{p:?}-");
        self.runs
            .iter()
            .filter(move |r| r.label.starts_with(&prefix))
            .filter_map(|r| r.result.as_ref().map(|x| (&r.model, x)))
    }
}

fn criterion1() -> Line {
    let mut worst = f64::INFINITY;
    for n in [1, 2] {
        let s = common::single_pair(n);
        let geo = Geometry::of(&common::config(n, 40.0));
        let (iu, eu) = pair(&s).unwrap();
        for rho in [0.0, 0.5, 1.0] {
            let t = two_stage(&s, rho, DEFAULT_EPS1).unwrap();
            let (grid, _) =
                common::placement_grid(&geo, (iu.x_m, iu.y_m), (eu.x_m, eu.y_m), n, s.params.min_spacing_m(), rho);
            worst = worst.min(t.objective.value / grid);
        }
    }
    line(worst >= 0.98, format!("worst objective / grid optimum {worst:.5}"))
}

/// Wrapped phase step of `h_I h_E` between adjacent antennas.
fn summed_residual(geo: &Geometry, a: f64, b: f64, iu: (f64, f64), eu: (f64, f64)) -> f64 {
    let z = |x: f64| {
        let (p, q) = (geo.entry(x, iu.0, iu.1), geo.entry(x, eu.0, eu.1));
        (p.0 * q.0 - p.1 * q.1, p.0 * q.1 + p.1 * q.0)
    };
    let (u, v) = (z(a), z(b));
    (v.1 * u.0 - v.0 * u.1).atan2(v.0 * u.0 + v.1 * u.1)
}

fn criterion2(sca_traces: &mut Vec<Vec<f64>>) -> Line {
    let s = common::single_pair(8);
    let geo = Geometry::of(&common::config(8, 40.0));
    let (iu, eu) = pair(&s).unwrap();
    let mut worst = 0.0f64;
    for rho in SweepSpec::rho_grid(0.1) {
        let t = two_stage(&s, rho, DEFAULT_EPS1).unwrap();
        for w in t.layout.positions().windows(2) {
            worst = worst.max(summed_residual(&geo, w[0], w[1], (iu.x_m, iu.y_m), (eu.x_m, eu.y_m)).abs());
        }
        sca_traces.push(t.sca.trace);
    }
    line(worst <= 0.15, format!("largest summed-phase residual {worst:.3e} rad"))
}

fn criterion3(set: &Scenario6, sca_traces: &[Vec<f64>], noma_traces: &[Vec<f64>]) -> Line {
    let mut count = 0;
    let mut bad = Vec::new();
    for run in &set.runs {
        let Some(r) = &run.result else { continue };
        for t in std::iter::once(&r.ao_trace).chain(&r.pso_traces) {
            count += 1;
            if !monotone(t) {
                bad.push(run.label.clone());
            }
        }
    }
    for t in sca_traces.iter().chain(noma_traces) {
        count += 1;
        if !monotone(t) {
            bad.push("sca".into());
        }
    }
    line(bad.is_empty(), format!("{count} traces, non-monotone: {bad:?}"))
}

fn criterion4(set: &Scenario6, noma_traces: &mut Vec<Vec<f64>>) -> Line {
    let mut tau_err = 0.0f64;
    let tau_case = |cap: &[f64], harvest: &[Vec<f64>]| {
        let t = allocate_tau(cap, harvest, EPS_W).unwrap();
        (t.xi - tau_grid(cap, harvest, EPS_W)).abs() / t.xi
    };
    for (model, r) in set.pass_results(Protocol::Tdma) {
        let Resources::Tdma { tau } = &r.resources else { unreachable!() };
        let plan = TdmaPlan::evaluate(model, r.decisions.clone(), tau.clone());
        tau_err = tau_err.max(tau_case(&plan.slot_capacity, &plan.harvest));
    }
    let three = common::scenario(4, &[(-6.0, 4.0), (0.0, 5.0), (6.0, 3.0)], &[(-5.0, -3.0), (5.0, -3.0)]);
    let model = SystemModel::pass(three);
    let r = tdma_solve(&model, EPS_W, &common::quick_pso(3)).unwrap();
    let Resources::Tdma { tau } = &r.resources else { unreachable!() };
    let plan = TdmaPlan::evaluate(&model, r.decisions.clone(), tau.clone());
    tau_err = tau_err.max(tau_case(&plan.slot_capacity, &plan.harvest));

    let c = common::config(4, 40.0);
    let geo = Geometry::of(&c);
    let mut wp_err = 0.0f64;
    for (model, r) in set.pass_results(Protocol::Fdma) {
        let x = &r.decisions[0];
        let a = allocate_w_p(model, x).unwrap();
        let g: Vec<f64> =
            model.scenario.ius.iter().map(|u| geo.power_gain(x, u.x_m, u.y_m) / (4.0 * u.noise_power_w)).collect();
        let grid = wp_grid_two_user([g[0], g[1]], c.total_power_w, 4000);
        wp_err = wp_err.max((a.min_rate - grid).abs());
    }

    let mut alpha_err = 0.0f64;
    for (model, r) in set.pass_results(Protocol::Noma) {
        let x = &r.decisions[0];
        let (_, _, sca) = allocate_alpha_sca(model, x, DEFAULT_SCA_EPS).unwrap();
        let g: Vec<f64> = model.scenario.ius.iter().map(|u| geo.power_gain(x, u.x_m, u.y_m)).collect();
        let noise: Vec<f64> = model.scenario.ius.iter().map(|u| u.noise_power_w).collect();
        let grid = alpha_grid_two_user([g[0], g[1]], [noise[0], noise[1]], c.total_power_w / 4.0, 1e-6);
        alpha_err = alpha_err.max((sca.xi - grid).abs());
        noma_traces.push(sca.trace);
    }
    line(
        tau_err <= 1e-4 && wp_err <= 2e-3 && alpha_err <= 1e-3,
        format!("tau rel {tau_err:.2e}, w-p {wp_err:.2e} bit/s/Hz, alpha {alpha_err:.2e} bit/s/Hz"),
    )
}

fn criterion5(set: &Scenario6) -> Line {
    let c = common::config(4, 40.0);
    let mut checked = 0;
    let mut bad = Vec::new();
    for run in &set.runs {
        let Some(r) = run.result.as_ref().filter(|r| r.feasible) else { continue };
        checked += 1;
        if let Err(e) = common::revalidate(&run.model, &c, r) {
            bad.push(format!("{}: {e}", run.label));
        }
    }
    line(bad.is_empty() && checked > 0, format!("{checked} feasible results re-checked, failures {bad:?}"))
}

fn criterion6(set: &Scenario6) -> Line {
    let m = |k: &str, p: Protocol| set.mean(k, p);
    let (f, t, n) = (m("pass", Protocol::Fdma), m("pass", Protocol::Tdma), m("pass", Protocol::Noma));
    let order = t >= 0.98 * n && n >= 0.98 * f;
    let beats = PROTOCOLS.iter().all(|&p| m("pass", p) > m("con1", p) && m("pass", p) > m("con2", p));
    let time = set.seconds <= 1800.0;
    let table: Vec<String> = PROTOCOLS
        .iter()
        .map(|&p| format!("{p:?} pass {:.3} con1 {:.3} con2 {:.3}", m("pass", p), m("con1", p), m("con2", p)))
        .collect();
    line(order && beats && time, format!("{}; {:.0} s", table.join(", "), set.seconds))
}

fn frontier(p_dbm: f64, n: usize) -> Vec<ParetoPoint> {
    let s = Scenario::single_pair(common::params(n, p_dbm));
    pareto_filter(sweep_single_pair(&s, &SweepSpec::rho_grid(0.05), false))
}

fn criterion7() -> Line {
    let f = |p, n| frontier(p, n);
    let (a, b, c, d) = (f(30.0, 4), f(30.0, 8), f(40.0, 4), f(40.0, 8));
    let pairs = [("40/4 > 30/4", &c, &a), ("40/8 > 30/8", &d, &b), ("30/8 > 30/4", &b, &a), ("40/8 > 40/4", &d, &c)];
    let failed: Vec<&str> = pairs.iter().filter(|(_, o, i)| !region_contains(o, i, 1e-9)).map(|p| p.0).collect();
    line(failed.is_empty(), format!("dBm/N nestings failing: {failed:?}"))
}

fn criterion8(set: &Scenario6) -> Line {
    let worst = set.runs.iter().filter_map(|r| r.result.as_ref()).map(|r| r.iterations).max().unwrap_or(0);
    line(worst <= 15, format!("most AO iterations {worst}"))
}

const NOMA_SWEEP: &str = "\
[ius]
positions = [[-4, 5], [4, 5]]

[eus]
positions = [[-5, -3], [5, -3]]

[pso]
swarm_size = 24
max_iters = 20
max_restarts = 0

[sweep]
protocol = \"noma\"
eps_points = 4
";

fn criterion9() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let noma = dir.path().join("noma.toml");
    std::fs::write(&noma, NOMA_SWEEP).unwrap();
    let single = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/single_pair.toml");
    let mut same = true;
    for (name, cfg) in [("noma", noma.as_path()), ("single", single.as_path())] {
        let run = |jobs: &str| {
            let out = dir.path().join(format!("{name}-{jobs}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_pass-swipt"))
                .args(["sweep", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()])
                .args(["--jobs", jobs])
                .output()
                .unwrap()
                .status;
            (status.code(), std::fs::read(out).unwrap_or_default())
        };
        let (a, b) = (run("1"), run("8"));
        same &= a.0 == Some(0) && a == b && !a.1.is_empty();
    }
    line(same, "sweep CSVs under --jobs 1 and --jobs 8".into())
}

fn main() -> ExitCode {
    let mut sca_traces = Vec::new();
    let mut noma_traces = Vec::new();
    let c1 = criterion1();
    let c2 = criterion2(&mut sca_traces);
    let set = scenario6();
    let c4 = criterion4(&set, &mut noma_traces);
    let c3 = criterion3(&set, &sca_traces, &noma_traces);
    let lines = [
        (1, "placement vs grid", c1),
        (2, "phase alignment", c2),
        (3, "monotone traces", c3),
        (4, "subproblem exactness", c4),
        (5, "feasibility re-check", criterion5(&set)),
        (6, "four-user ordering", criterion6(&set)),
        (7, "region nesting", criterion7()),
        (8, "AO iteration count", criterion8(&set)),
        (9, "parallel determinism", criterion9()),
    ];
    let mut all = true;
    for (id, name, l) in &lines {
        println!("criterion {id} {name}: {} ({})", if l.ok { "PASS" } else { "FAIL" }, l.detail);
        all &= l.ok;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
