//! TOML run configuration.
//!
//! ```toml
//! [system]
//! carrier_frequency_ghz = 28
//! power_dbm = 40
//! num_antennas = 4
//!
//! [ius]
//! positions = [[-4, 5], [4, 5]]
//!
//! [eus]
//! positions = [[-5, -3], [5, -3]]
//!
//! [pso]
//! swarm_size = 300
//!
//! [sweep]
//! protocol = "tdma"
//! transmitter = "pass"
//! eps_points = 12
//! ```
//!
//! Every key of `[system]`, `[pso]` and `[sweep]` is optional.

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::allocation::Protocol;
use crate::error::{Error, Result};
use crate::model::{dbm_to_watts, Scenario, SystemConfig, SystemParams, UserPos};
use crate::pso::PsoConfig;
use crate::system::TransmitterKind;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<Spanned<RawSystem>>,
    ius: Option<Spanned<RawUsers>>,
    eus: Option<Spanned<RawUsers>>,
    pso: Option<Spanned<PsoConfig>>,
    sweep: Option<Spanned<RawSweep>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSystem {
    carrier_frequency_ghz: Option<f64>,
    refractive_index: Option<f64>,
    waveguide_height_m: Option<f64>,
    waveguide_length_m: Option<f64>,
    min_spacing_m: Option<f64>,
    power_dbm: Option<f64>,
    noise_dbm: Option<f64>,
    energy_conversion_eff: Option<f64>,
    num_antennas: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUsers {
    positions: Vec<Spanned<[f64; 2]>>,
    /// Overrides the system noise power for every user of the section.
    noise_dbm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSweep {
    protocol: Option<Spanned<String>>,
    transmitter: Option<Spanned<String>>,
    rho: Option<Spanned<Vec<f64>>>,
    rho_step: Option<Spanned<f64>>,
    eps_w: Option<Spanned<Vec<f64>>>,
    eps_points: Option<Spanned<usize>>,
    eps_max_frac: Option<Spanned<f64>>,
}

/// Pipeline selected by the `[sweep]` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    SinglePair,
    MultiUser(TransmitterKind, Protocol),
}

/// Energy thresholds of a multi-user sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsGrid {
    Explicit(Vec<f64>),
    /// Zero followed by `points - 1` log-spaced values ending at `max_frac * E_max`.
    Auto { points: usize, max_frac: f64 },
}

impl EpsGrid {
    pub const DEFAULT_POINTS: usize = 12;
    pub const DEFAULT_MAX_FRAC: f64 = 0.95;
    /// Smallest positive point relative to the largest.
    pub const LOW_END: f64 = 0.01;

    pub fn resolve(&self, e_max: f64) -> Vec<f64> {
        match self {
            Self::Explicit(v) => v.clone(),
            Self::Auto { points, max_frac } => {
                let top = max_frac * e_max;
                let mut grid = vec![0.0];
                let n = points.saturating_sub(1);
                for i in 0..n {
                    let t = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
                    grid.push(top * Self::LOW_END.powf(1.0 - t));
                }
                grid
            }
        }
    }
}

impl Default for EpsGrid {
    fn default() -> Self {
        Self::Auto { points: Self::DEFAULT_POINTS, max_frac: Self::DEFAULT_MAX_FRAC }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub pipeline: Option<Pipeline>,
    pub rho: Vec<f64>,
    pub eps: EpsGrid,
}

impl SweepSpec {
    pub const DEFAULT_RHO_STEP: f64 = 0.05;

    pub fn rho_grid(step: f64) -> Vec<f64> {
        let n = (1.0 / step).round() as usize;
        (0..=n).map(|i| (i as f64 * step).min(1.0)).collect()
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { pipeline: None, rho: Self::rho_grid(Self::DEFAULT_RHO_STEP), eps: EpsGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub pso: PsoConfig,
    pub sweep: SweepSpec,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
    path: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_owned(), line: line_of(self.text, span.start), message: message.into() }
    }
}

fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn users(ctx: &Ctx, raw: &Spanned<RawUsers>, label: &str, make: impl Fn(f64, f64, Option<f64>) -> UserPos, half: f64) -> Result<Vec<UserPos>> {
    let noise = raw.get_ref().noise_dbm.map(dbm_to_watts);
    let mut out = Vec::new();
    for (i, p) in raw.get_ref().positions.iter().enumerate() {
        let [x, y] = *p.get_ref();
        if !(x.abs() <= half && y.abs() <= half) {
            return Err(ctx.err(
                p.span(),
                format!("{label} {} at ({x}, {y}) lies outside the service area [-{half}, {half}]^2", i + 1),
            ));
        }
        out.push(make(x, y, noise));
    }
    if out.is_empty() {
        return Err(ctx.err(raw.span(), format!("[{label}s] lists no positions")));
    }
    Ok(out)
}

fn system_config(raw: &RawSystem) -> SystemConfig {
    let d = SystemConfig::default();
    SystemConfig {
        carrier_frequency_hz: raw.carrier_frequency_ghz.map_or(d.carrier_frequency_hz, |g| g * 1e9),
        refractive_index: raw.refractive_index.unwrap_or(d.refractive_index),
        waveguide_height_m: raw.waveguide_height_m.unwrap_or(d.waveguide_height_m),
        waveguide_length_m: raw.waveguide_length_m.unwrap_or(d.waveguide_length_m),
        min_spacing_m: raw.min_spacing_m.or(d.min_spacing_m),
        total_power_w: raw.power_dbm.map_or(d.total_power_w, dbm_to_watts),
        noise_power_w: raw.noise_dbm.map_or(d.noise_power_w, dbm_to_watts),
        energy_conversion_eff: raw.energy_conversion_eff.unwrap_or(d.energy_conversion_eff),
        num_antennas: raw.num_antennas.unwrap_or(d.num_antennas),
    }
}

fn sweep_spec(ctx: &Ctx, raw: &RawSweep) -> Result<SweepSpec> {
    let mut spec = SweepSpec::default();
    let transmitter = match &raw.transmitter {
        None => TransmitterKind::Pass,
        Some(t) => match t.get_ref().as_str() {
            "pass" => TransmitterKind::Pass,
            "con1" => TransmitterKind::Con1,
            "con2" => TransmitterKind::Con2,
            other => return Err(ctx.err(t.span(), format!("unknown transmitter {other:?} (pass, con1, con2)"))),
        },
    };
    if let Some(p) = &raw.protocol {
        spec.pipeline = Some(match p.get_ref().as_str() {
            "single-pair" if transmitter == TransmitterKind::Pass => Pipeline::SinglePair,
            "single-pair" => return Err(ctx.err(p.span(), "single-pair runs only on the pinching-antenna system")),
            name => match Protocol::parse(name) {
                Some(proto) => Pipeline::MultiUser(transmitter, proto),
                None => {
                    return Err(ctx.err(p.span(), format!("unknown protocol {name:?} (single-pair, fdma, tdma, noma)")))
                }
            },
        });
    }
    match (&raw.rho, &raw.rho_step) {
        (Some(r), Some(_)) => return Err(ctx.err(r.span(), "give either rho or rho_step, not both")),
        (Some(r), None) => {
            let v = r.get_ref();
            if v.is_empty() || !monotone(v) || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(ctx.err(r.span(), "rho must be a non-empty increasing list in [0, 1]"));
            }
            spec.rho = v.clone();
        }
        (None, Some(s)) => {
            let step = *s.get_ref();
            if !(step > 0.0 && step <= 1.0) {
                return Err(ctx.err(s.span(), "rho_step must lie in (0, 1]"));
            }
            spec.rho = SweepSpec::rho_grid(step);
        }
        (None, None) => {}
    }
    if let Some(e) = &raw.eps_w {
        if raw.eps_points.is_some() || raw.eps_max_frac.is_some() {
            return Err(ctx.err(e.span(), "give either eps_w or eps_points/eps_max_frac"));
        }
        let v = e.get_ref();
        if v.is_empty() || !monotone(v) || v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(ctx.err(e.span(), "eps_w must be a non-empty increasing list of non-negative watts"));
        }
        spec.eps = EpsGrid::Explicit(v.clone());
    } else {
        let points = match &raw.eps_points {
            Some(p) if *p.get_ref() < 2 => return Err(ctx.err(p.span(), "eps_points must be at least 2")),
            Some(p) => *p.get_ref(),
            None => EpsGrid::DEFAULT_POINTS,
        };
        let max_frac = match &raw.eps_max_frac {
            Some(f) if !(*f.get_ref() > 0.0 && *f.get_ref() <= 1.0) => {
                return Err(ctx.err(f.span(), "eps_max_frac must lie in (0, 1]"))
            }
            Some(f) => *f.get_ref(),
            None => EpsGrid::DEFAULT_MAX_FRAC,
        };
        spec.eps = EpsGrid::Auto { points, max_frac };
    }
    Ok(spec)
}

/// Parses configuration text; `path` only labels error messages.
pub fn parse_config(text: &str, path: &str) -> Result<RunConfig> {
    let ctx = Ctx { text, path };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_owned();
        Error::Parse { path: path.to_owned(), line: e.span().map_or(1, |s| line_of(text, s.start)), message }
    })?;
    let (sys_cfg, sys_span) = match &raw.system {
        Some(s) => (system_config(s.get_ref()), s.span()),
        None => (SystemConfig::default(), 0..0),
    };
    let params = SystemParams::new(&sys_cfg).map_err(|e| ctx.err(sys_span.clone(), e.to_string()))?;
    let half = params.half_length();
    let Some(raw_ius) = &raw.ius else {
        return Err(ctx.err(text.len()..text.len(), "missing [ius] section"));
    };
    let Some(raw_eus) = &raw.eus else {
        return Err(ctx.err(text.len()..text.len(), "missing [eus] section"));
    };
    let ius = users(&ctx, raw_ius, "iu", |x, y, n| UserPos::iu(x, y, n.unwrap_or(params.noise_power_w())), half)?;
    let eus = users(&ctx, raw_eus, "eu", |x, y, _| UserPos::eu(x, y), half)?;
    let scenario = Scenario::new(params, ius, eus).map_err(|e| ctx.err(raw_ius.span(), e.to_string()))?;
    let pso = match &raw.pso {
        Some(p) => {
            p.get_ref().validate().map_err(|e| ctx.err(p.span(), e.to_string()))?;
            p.get_ref().clone()
        }
        None => PsoConfig::default(),
    };
    let sweep = match &raw.sweep {
        Some(s) => sweep_spec(&ctx, s.get_ref())?,
        None => SweepSpec::default(),
    };
    Ok(RunConfig { scenario, pso, sweep })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_config(path).map(|c| c.scenario)
}
