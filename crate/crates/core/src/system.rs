//! Transmitter architectures and the map from a decision vector to channel gains.
//!
//! A pinching-antenna system is decided by its antenna positions. The
//! conventional baselines are a single antenna at the feed point and a fixed
//! half-wavelength array centred there, steered by unit-modulus phases.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    effective_gain_at, free_space_entry, ComplexGain, LayoutViolations, PaLayout, Scenario, UserPos,
};
use crate::pso::{pso_optimize, Evaluation, PsoConfig, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TransmitterKind {
    /// Pinching antennas on the waveguide.
    Pass,
    /// Single fixed antenna at the feed point.
    Con1,
    /// Fixed half-wavelength array with one analog beam.
    Con2,
}

impl TransmitterKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Con1 => "con1",
            Self::Con2 => "con2",
        }
    }
}

/// Element positions and unit-modulus weights of the Con2 array.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedArray {
    pub element_positions: Vec<f64>,
    pub phase_vector: Vec<Complex64>,
}

impl FixedArray {
    pub fn new(element_positions: Vec<f64>, phases: &[f64]) -> Self {
        let phase_vector = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        Self { element_positions, phase_vector }
    }
}

/// A scenario together with the transmitter serving it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemModel {
    pub scenario: Scenario,
    pub kind: TransmitterKind,
    elements: Vec<f64>,
    power_per_element: f64,
}

impl SystemModel {
    pub fn pass(scenario: Scenario) -> Self {
        let power_per_element = scenario.params.power_per_antenna();
        Self { scenario, kind: TransmitterKind::Pass, elements: Vec::new(), power_per_element }
    }

    /// Single antenna at `(-L/2, 0, d)` radiating the full power.
    pub fn con1(scenario: Scenario) -> Self {
        let x = -scenario.params.half_length();
        let power_per_element = scenario.params.total_power_w();
        Self { scenario, kind: TransmitterKind::Con1, elements: vec![x], power_per_element }
    }

    /// `N` elements at half-wavelength spacing centred on `(-L/2, 0, d)`.
    pub fn con2(scenario: Scenario) -> Self {
        let p = &scenario.params;
        let n = p.num_antennas();
        let step = p.wavelength_m() / 2.0;
        let centre = (n as f64 - 1.0) / 2.0;
        let elements = (0..n).map(|i| -p.half_length() + (i as f64 - centre) * step).collect();
        let power_per_element = p.power_per_antenna();
        Self { scenario, kind: TransmitterKind::Con2, elements, power_per_element }
    }

    pub fn of_kind(kind: TransmitterKind, scenario: Scenario) -> Self {
        match kind {
            TransmitterKind::Pass => Self::pass(scenario),
            TransmitterKind::Con1 => Self::con1(scenario),
            TransmitterKind::Con2 => Self::con2(scenario),
        }
    }

    pub fn space(&self) -> SearchSpace {
        match self.kind {
            TransmitterKind::Pass => SearchSpace::positions(&self.scenario.params),
            TransmitterKind::Con1 => SearchSpace::Phases { dim: 0 },
            TransmitterKind::Con2 => SearchSpace::Phases { dim: self.elements.len() },
        }
    }

    /// A valid decision independent of any user: an evenly spread layout or zero phases.
    pub fn default_decision(&self) -> Vec<f64> {
        match self.kind {
            TransmitterKind::Pass => PaLayout::uniform(&self.scenario.params).into_positions(),
            _ => vec![0.0; self.elements.len().min(self.space().dim())],
        }
    }

    /// Fixed element positions of the baselines; empty for PASS.
    pub fn elements(&self) -> &[f64] {
        &self.elements
    }

    /// Transmit power per radiating element, `P/N` for arrays and `P` for Con1.
    pub fn power_per_element(&self) -> f64 {
        self.power_per_element
    }

    /// Complex effective channel for a decision vector.
    pub fn gain(&self, decision: &[f64], user: &UserPos) -> ComplexGain {
        let params = &self.scenario.params;
        match self.kind {
            TransmitterKind::Pass => effective_gain_at(decision, user, params),
            TransmitterKind::Con1 => free_space_entry(self.elements[0], user, params),
            TransmitterKind::Con2 => self
                .elements
                .iter()
                .zip(decision)
                .map(|(&e, &t)| free_space_entry(e, user, params) * Complex64::from_polar(1.0, t))
                .sum(),
        }
    }

    pub fn power_gain(&self, decision: &[f64], user: &UserPos) -> f64 {
        self.gain(decision, user).norm_sqr()
    }

    /// `|h_k^H g|^2` for every IU.
    pub fn iu_gains(&self, decision: &[f64]) -> Vec<f64> {
        self.scenario.ius.iter().map(|u| self.power_gain(decision, u)).collect()
    }

    /// Harvested power of every EU with the full transmit power, in watts.
    pub fn eu_powers(&self, decision: &[f64]) -> Vec<f64> {
        let scale = self.scenario.params.energy_conversion_eff() * self.power_per_element;
        self.scenario.eus.iter().map(|u| scale * self.power_gain(decision, u)).collect()
    }

    /// Minimum harvested power, `+inf` without energy users.
    pub fn min_eu_power(&self, decision: &[f64]) -> f64 {
        self.eu_powers(decision).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Received SNR of IU `k` per unit power share, `(P/N) G_k / sigma_k^2`.
    pub fn snr(&self, k: usize, gain: f64) -> f64 {
        self.power_per_element * gain / self.scenario.ius[k].noise_power_w
    }

    /// Checks a decision against the transmitter's hard constraints.
    pub fn validate_decision(&self, decision: &[f64]) -> Result<()> {
        match self.kind {
            TransmitterKind::Pass => {
                PaLayout::new(decision.to_vec(), &self.scenario.params).map(|_| ())
            }
            TransmitterKind::Con1 if decision.is_empty() => Ok(()),
            TransmitterKind::Con2
                if decision.len() == self.elements.len()
                    && decision.iter().all(|t| (0.0..std::f64::consts::TAU).contains(t)) =>
            {
                Ok(())
            }
            _ => Err(Error::Domain(format!(
                "decision {decision:?} is not valid for {}",
                self.kind.name()
            ))),
        }
    }

    pub fn layout_violations(&self, decision: &[f64]) -> LayoutViolations {
        match self.kind {
            TransmitterKind::Pass => LayoutViolations::of(decision, &self.scenario.params),
            _ => LayoutViolations::default(),
        }
    }

    /// Conjugate-beam (maximum-ratio) gain towards one user, the Con2 optimum for a single user.
    pub fn matched_beam_gain(&self, user: &UserPos) -> f64 {
        let params = &self.scenario.params;
        let amp: f64 = match self.kind {
            TransmitterKind::Pass => return f64::NAN,
            _ => self.elements.iter().map(|&e| free_space_entry(e, user, params).norm()).sum(),
        };
        amp * amp
    }

    /// Phases that co-phase every element at `user`.
    pub fn matched_beam_phases(&self, user: &UserPos) -> Vec<f64> {
        let params = &self.scenario.params;
        self.elements
            .iter()
            .map(|&e| (-free_space_entry(e, user, params).arg()).rem_euclid(std::f64::consts::TAU))
            .collect()
    }
}

/// Largest achievable minimum harvested power and the decision attaining it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBound {
    pub value_w: f64,
    pub decision: Vec<f64>,
}

/// Maximises `min_j E_j` over the transmitter's decision space.
pub fn compute_e_max(model: &SystemModel, cfg: &PsoConfig) -> Result<EnergyBound> {
    if model.scenario.eus.is_empty() {
        return Err(Error::Config("the maximum harvested power needs at least one EU".into()));
    }
    let space = model.space();
    let mut seeds = Vec::new();
    match model.kind {
        TransmitterKind::Pass => {
            let p = &model.scenario.params;
            let n = p.num_antennas();
            let mut centres: Vec<f64> = model.scenario.eus.iter().map(|u| u.x_m).collect();
            let mean = centres.iter().sum::<f64>() / centres.len() as f64;
            centres.push(mean);
            for c in centres {
                let start = c - (n as f64 - 1.0) * p.min_spacing_m() / 2.0;
                let xs: Vec<f64> = (0..n).map(|i| start + i as f64 * p.min_spacing_m()).collect();
                seeds.push(space.project(&xs));
            }
        }
        TransmitterKind::Con2 => {
            for u in &model.scenario.eus {
                seeds.push(model.matched_beam_phases(u));
            }
        }
        TransmitterKind::Con1 => {}
    }
    let out = pso_optimize(
        &space,
        0.0,
        |x| Evaluation { objective: model.min_eu_power(x), min_energy_w: f64::INFINITY },
        cfg,
        &seeds,
    )?;
    Ok(EnergyBound { value_w: out.best_report.objective, decision: out.best_position })
}
