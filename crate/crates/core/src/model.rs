//! Physical model of a single-waveguide pinching-antenna downlink.
//!
//! Every quantity is stored in SI units (watts, metres, hertz). Decibel values
//! only appear at the configuration boundary through [`dbm_to_watts`] and
//! [`watts_to_dbm`].
//!
//! The effective channel towards a ground user `u` for antennas at positions
//! `x_n` on a waveguide of height `d` fed at `x = -L/2` is
//!
//! ```text
//! h_u(x) = sum_n sqrt(eta) / r_n * exp(-j (2 pi r_n / lambda + 2 pi (x_n + L/2) / lambda_g))
//! ```
//!
//! with `r_n = sqrt((x_u - x_n)^2 + y_u^2 + d^2)`. Rates and harvested power
//! only depend on `|h_u|^2`.

use std::f64::consts::{LN_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Slack used when checking spacing and range constraints of computed layouts.
pub const LAYOUT_TOL: f64 = 1e-12;

/// Dimensionless complex amplitude of an effective channel.
pub type ComplexGain = Complex64;

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Primary (non-derived) system quantities, as a user would write them down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub carrier_frequency_hz: f64,
    pub refractive_index: f64,
    pub waveguide_height_m: f64,
    pub waveguide_length_m: f64,
    /// Minimum antenna spacing; `None` means half a free-space wavelength.
    pub min_spacing_m: Option<f64>,
    pub total_power_w: f64,
    pub noise_power_w: f64,
    pub energy_conversion_eff: f64,
    pub num_antennas: usize,
}

impl Default for SystemConfig {
    /// 28 GHz, n_eff = 1.4, d = 3 m, L = 20 m, half-wavelength spacing,
    /// 40 dBm transmit power, -90 dBm noise, 50 % conversion efficiency, four antennas.
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 28e9,
            refractive_index: 1.4,
            waveguide_height_m: 3.0,
            waveguide_length_m: 20.0,
            min_spacing_m: None,
            total_power_w: dbm_to_watts(40.0),
            noise_power_w: dbm_to_watts(-90.0),
            energy_conversion_eff: 0.5,
            num_antennas: 4,
        }
    }
}

/// Validated system parameters together with the derived wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    carrier_frequency_hz: f64,
    wavelength_m: f64,
    guided_wavelength_m: f64,
    refractive_index: f64,
    path_loss_coeff: f64,
    waveguide_height_m: f64,
    waveguide_length_m: f64,
    min_spacing_m: f64,
    total_power_w: f64,
    noise_power_w: f64,
    energy_conversion_eff: f64,
    num_antennas: usize,
    /// `1 / lambda` and `1 / lambda_g` as double words (cycles per metre).
    #[serde(skip)]
    wavenumber: Dw,
    #[serde(skip)]
    guided_wavenumber: Dw,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be a positive finite number, got {v}")))
    }
}

impl SystemParams {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        let f = positive("carrier_frequency_hz", cfg.carrier_frequency_hz)?;
        if !(cfg.refractive_index.is_finite() && cfg.refractive_index >= 1.0) {
            return Err(Error::Config(format!(
                "refractive_index must be >= 1, got {}",
                cfg.refractive_index
            )));
        }
        let d = positive("waveguide_height_m", cfg.waveguide_height_m)?;
        let len = positive("waveguide_length_m", cfg.waveguide_length_m)?;
        let p = positive("total_power_w", cfg.total_power_w)?;
        let noise = positive("noise_power_w", cfg.noise_power_w)?;
        let zeta = cfg.energy_conversion_eff;
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(Error::Config(format!(
                "energy_conversion_eff must lie in (0, 1], got {zeta}"
            )));
        }
        if cfg.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be at least 1".into()));
        }
        let wavelength = SPEED_OF_LIGHT / f;
        let spacing = cfg.min_spacing_m.unwrap_or(wavelength / 2.0);
        if !(spacing.is_finite() && spacing >= 0.0) {
            return Err(Error::Config(format!("min_spacing_m must be >= 0, got {spacing}")));
        }
        if (cfg.num_antennas - 1) as f64 * spacing > len {
            return Err(Error::Config(format!(
                "{} antennas at spacing {spacing} m do not fit on a {len} m waveguide",
                cfg.num_antennas
            )));
        }
        let wavenumber = Dw::quotient(f, SPEED_OF_LIGHT);
        Ok(Self {
            wavenumber,
            guided_wavenumber: wavenumber.scale(cfg.refractive_index),
            carrier_frequency_hz: f,
            wavelength_m: wavelength,
            guided_wavelength_m: wavelength / cfg.refractive_index,
            refractive_index: cfg.refractive_index,
            path_loss_coeff: SPEED_OF_LIGHT * SPEED_OF_LIGHT / (16.0 * PI * PI * f * f),
            waveguide_height_m: d,
            waveguide_length_m: len,
            min_spacing_m: spacing,
            total_power_w: p,
            noise_power_w: noise,
            energy_conversion_eff: zeta,
            num_antennas: cfg.num_antennas,
        })
    }

    /// The primary quantities these parameters were built from.
    pub fn config(&self) -> SystemConfig {
        SystemConfig {
            carrier_frequency_hz: self.carrier_frequency_hz,
            refractive_index: self.refractive_index,
            waveguide_height_m: self.waveguide_height_m,
            waveguide_length_m: self.waveguide_length_m,
            min_spacing_m: Some(self.min_spacing_m),
            total_power_w: self.total_power_w,
            noise_power_w: self.noise_power_w,
            energy_conversion_eff: self.energy_conversion_eff,
            num_antennas: self.num_antennas,
        }
    }

    pub fn with_num_antennas(&self, n: usize) -> Result<Self> {
        Self::new(&SystemConfig { num_antennas: n, ..self.config() })
    }

    pub fn with_total_power_w(&self, p: f64) -> Result<Self> {
        Self::new(&SystemConfig { total_power_w: p, ..self.config() })
    }

    pub fn with_energy_conversion_eff(&self, zeta: f64) -> Result<Self> {
        Self::new(&SystemConfig { energy_conversion_eff: zeta, ..self.config() })
    }

    pub fn carrier_frequency_hz(&self) -> f64 {
        self.carrier_frequency_hz
    }
    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }
    pub fn guided_wavelength_m(&self) -> f64 {
        self.guided_wavelength_m
    }
    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }
    /// `eta = c^2 / (16 pi^2 f_c^2)`.
    pub fn path_loss_coeff(&self) -> f64 {
        self.path_loss_coeff
    }
    pub fn waveguide_height_m(&self) -> f64 {
        self.waveguide_height_m
    }
    pub fn waveguide_length_m(&self) -> f64 {
        self.waveguide_length_m
    }
    pub fn half_length(&self) -> f64 {
        self.waveguide_length_m / 2.0
    }
    pub fn min_spacing_m(&self) -> f64 {
        self.min_spacing_m
    }
    pub fn total_power_w(&self) -> f64 {
        self.total_power_w
    }
    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }
    pub fn energy_conversion_eff(&self) -> f64 {
        self.energy_conversion_eff
    }
    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }
    /// Transmit power radiated by each antenna, `P / N`.
    pub fn power_per_antenna(&self) -> f64 {
        self.total_power_w / self.num_antennas as f64
    }
}

/// `2 pi * frac(distance / wavelength)`: the propagation phase reduced to `[0, 2 pi)`.
#[inline]
pub fn reduced_phase(distance: f64, wavelength: f64) -> f64 {
    let cycles = distance / wavelength;
    (cycles - cycles.floor()) * TAU
}

/// Unevaluated sum `hi + lo` carrying about twice the precision of an `f64`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Dw {
    hi: f64,
    lo: f64,
}

impl Dw {
    fn sum(a: f64, b: f64) -> Self {
        let hi = a + b;
        let bb = hi - a;
        Self { hi, lo: (a - (hi - bb)) + (b - bb) }
    }

    fn product(a: f64, b: f64) -> Self {
        let hi = a * b;
        Self { hi, lo: a.mul_add(b, -hi) }
    }

    fn quotient(a: f64, b: f64) -> Self {
        let hi = a / b;
        Self { hi, lo: (-hi).mul_add(b, a) / b }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::sum(self.hi, o.hi);
        Self::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    fn scale(self, b: f64) -> Self {
        let p = Self::product(self.hi, b);
        Self::renorm(p.hi, p.lo + self.lo * b)
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::product(self.hi, o.hi);
        Self::renorm(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    fn square(self) -> Self {
        self.mul(self)
    }

    fn sqrt(self) -> Self {
        let r = self.hi.sqrt();
        let residual = (-r).mul_add(r, self.hi) + self.lo;
        Self::renorm(r, residual / (2.0 * r))
    }

    /// Fractional part in `[0, 1)`.
    fn fract(self) -> f64 {
        let f = (self.hi - self.hi.floor()) + self.lo;
        f - f.floor()
    }
}

/// Distance from `(x_p, 0, d)` to `user` and its reduced phase `2 pi r / lambda mod 2 pi`.
fn distance_and_phase(x_p: f64, user: &UserPos, params: &SystemParams) -> (f64, f64) {
    let d = params.waveguide_height_m;
    let lateral = Dw::product(user.y_m, user.y_m).add(Dw::product(d, d));
    let r = Dw::sum(user.x_m, -x_p).square().add(lateral).sqrt();
    (r.hi, TAU * r.mul(params.wavenumber).fract())
}

/// In-waveguide phase `2 pi (x_p + L/2) / lambda_g mod 2 pi`.
fn guided_reduced(x_p: f64, params: &SystemParams) -> f64 {
    TAU * Dw::sum(x_p, params.half_length()).mul(params.guided_wavenumber).fract()
}

/// Ordered antenna x-coordinates on the waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaLayout(Vec<f64>);

/// Constraint violations of a candidate position vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayoutViolations {
    /// Adjacent pairs with `x_n - x_{n-1} < min_spacing`.
    pub spacing: usize,
    /// Coordinates outside `[-L/2, L/2]`.
    pub range: usize,
}

impl LayoutViolations {
    pub fn of(xs: &[f64], params: &SystemParams) -> Self {
        let half = params.half_length();
        let spacing = xs
            .windows(2)
            .filter(|w| w[1] - w[0] < params.min_spacing_m() - LAYOUT_TOL)
            .count();
        let range = xs
            .iter()
            .filter(|x| !(x.abs() <= half + LAYOUT_TOL))
            .count();
        Self { spacing, range }
    }

    pub fn is_clean(&self) -> bool {
        self.spacing == 0 && self.range == 0
    }
}

impl PaLayout {
    /// Validates spacing and range constraints.
    pub fn new(xs: Vec<f64>, params: &SystemParams) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Domain("a layout needs at least one antenna".into()));
        }
        let v = LayoutViolations::of(&xs, params);
        if !v.is_clean() {
            return Err(Error::Domain(format!(
                "layout violates constraints ({} spacing, {} range): {xs:?}",
                v.spacing, v.range
            )));
        }
        Ok(Self(xs))
    }

    /// `N` antennas evenly spread over the whole waveguide (centre for `N = 1`).
    pub fn uniform(params: &SystemParams) -> Self {
        let n = params.num_antennas();
        let half = params.half_length();
        if n == 1 {
            return Self(vec![0.0]);
        }
        let step = params.waveguide_length_m() / (n - 1) as f64;
        let mut xs: Vec<f64> = (0..n).map(|i| -half + step * i as f64).collect();
        xs[n - 1] = half;
        Self(xs)
    }

    pub fn positions(&self) -> &[f64] {
        &self.0
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserKind {
    /// Information user.
    Iu,
    /// Energy user.
    Eu,
}

/// A ground user at `(x, y, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPos {
    pub x_m: f64,
    pub y_m: f64,
    pub kind: UserKind,
    /// Receiver noise power; only meaningful for information users.
    pub noise_power_w: f64,
}

impl UserPos {
    pub fn iu(x_m: f64, y_m: f64, noise_power_w: f64) -> Self {
        Self { x_m, y_m, kind: UserKind::Iu, noise_power_w }
    }

    pub fn eu(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m, kind: UserKind::Eu, noise_power_w: f64::NAN }
    }

    /// Distance from the waveguide line in the y-z plane, `sqrt(y^2 + d^2)`.
    pub fn lateral_offset(&self, height: f64) -> f64 {
        self.y_m.hypot(height)
    }

    /// Euclidean distance to an antenna at `(x_p, 0, d)`.
    #[inline]
    pub fn distance_to(&self, x_p: f64, height: f64) -> f64 {
        (self.x_m - x_p).hypot(self.lateral_offset(height))
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub params: SystemParams,
    pub ius: Vec<UserPos>,
    pub eus: Vec<UserPos>,
}

impl Scenario {
    /// Requires at least one information user. The energy-user set may be
    /// empty, in which case every energy threshold is vacuous.
    pub fn new(params: SystemParams, ius: Vec<UserPos>, eus: Vec<UserPos>) -> Result<Self> {
        if ius.is_empty() {
            return Err(Error::Config("a scenario needs at least one information user".into()));
        }
        let half = params.half_length();
        for (label, users, kind) in [("IU", &ius, UserKind::Iu), ("EU", &eus, UserKind::Eu)] {
            for (i, u) in users.iter().enumerate() {
                if u.kind != kind {
                    return Err(Error::Config(format!("{label} {} has the wrong user kind", i + 1)));
                }
                if !(u.x_m.abs() <= half && u.y_m.abs() <= half) {
                    return Err(Error::Config(format!(
                        "{label} {} at ({}, {}) lies outside the {} m service square",
                        i + 1,
                        u.x_m,
                        u.y_m,
                        params.waveguide_length_m()
                    )));
                }
                if kind == UserKind::Iu && !(u.noise_power_w > 0.0 && u.noise_power_w.is_finite()) {
                    return Err(Error::Config(format!("IU {} needs a positive noise power", i + 1)));
                }
            }
        }
        Ok(Self { params, ius, eus })
    }

    /// The same users with different system parameters.
    pub fn with_params(&self, params: SystemParams) -> Self {
        Self { params, ius: self.ius.clone(), eus: self.eus.clone() }
    }

    /// Users of the multi-user evaluation setup: IUs at (-4, 5) and (4, 5),
    /// EUs at (-5, -3) and (5, -3).
    pub fn two_by_two(params: SystemParams) -> Self {
        let noise = params.noise_power_w();
        Self {
            ius: vec![UserPos::iu(-4.0, 5.0, noise), UserPos::iu(4.0, 5.0, noise)],
            eus: vec![UserPos::eu(-5.0, -3.0), UserPos::eu(5.0, -3.0)],
            params,
        }
    }

    /// One IU at (-4, 5) and one EU at (5, -3).
    pub fn single_pair(params: SystemParams) -> Self {
        let noise = params.noise_power_w();
        Self {
            ius: vec![UserPos::iu(-4.0, 5.0, noise)],
            eus: vec![UserPos::eu(5.0, -3.0)],
            params,
        }
    }
}

/// Phase accumulated inside the waveguide from the feed point to `x_p`,
/// `(2 pi / lambda_g) (x_p + L/2)`, not reduced modulo `2 pi`.
pub fn guided_phase(x_p: f64, params: &SystemParams) -> Result<f64> {
    let half = params.half_length();
    if !(x_p.abs() <= half) {
        return Err(Error::Domain(format!("x_p = {x_p} is outside [-{half}, {half}]")));
    }
    Ok(TAU / params.guided_wavelength_m() * (x_p + half))
}

/// Free-space channel entry `sqrt(eta) / r * exp(-j 2 pi r / lambda)` from an
/// antenna at `x_p`.
pub fn free_space_entry(x_p: f64, user: &UserPos, params: &SystemParams) -> ComplexGain {
    let (r, phase) = distance_and_phase(x_p, user, params);
    Complex64::from_polar(params.path_loss_coeff().sqrt() / r, -phase)
}

/// Effective channel `h_u^H g` for arbitrary positions (no range check).
pub fn effective_gain_at(xs: &[f64], user: &UserPos, params: &SystemParams) -> ComplexGain {
    xs.iter()
        .map(|&x| {
            let (r, phase) = distance_and_phase(x, user, params);
            Complex64::from_polar(params.path_loss_coeff().sqrt() / r, -(phase + guided_reduced(x, params)))
        })
        .sum()
}

pub fn effective_gain(layout: &PaLayout, user: &UserPos, params: &SystemParams) -> ComplexGain {
    effective_gain_at(layout.positions(), user, params)
}

/// `|h_u^H g|^2` at arbitrary positions.
#[inline]
pub fn power_gain_at(xs: &[f64], user: &UserPos, params: &SystemParams) -> f64 {
    effective_gain_at(xs, user, params).norm_sqr()
}

/// `log2(1 + x)` with full precision for small `x`.
#[inline]
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Rate of a single information user served with the full transmit power.
pub fn iu_rate_single(layout: &PaLayout, iu: &UserPos, params: &SystemParams) -> f64 {
    let g = effective_gain(layout, iu, params).norm_sqr();
    log2_1p(params.power_per_antenna() * g / iu.noise_power_w)
}

/// Harvested power `zeta (P/N) |h^H g|^2` in watts.
pub fn eu_power_single(layout: &PaLayout, eu: &UserPos, params: &SystemParams) -> f64 {
    let g = effective_gain(layout, eu, params).norm_sqr();
    params.energy_conversion_eff() * params.power_per_antenna() * g
}
