//! Conventional transmitters run through the same protocol pipelines.

use serde::Serialize;

use crate::allocation::{AllocationResult, Protocol};
use crate::error::{Error, Result};
use crate::fdma::fdma_solve;
use crate::model::{log2_1p, Scenario};
use crate::noma::noma_solve;
use crate::pso::PsoConfig;
use crate::system::{SystemModel, TransmitterKind};
use crate::tdma::tdma_solve;

/// Runs `protocol` on any transmitter.
pub fn solve(model: &SystemModel, protocol: Protocol, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    match protocol {
        Protocol::Fdma => fdma_solve(model, eps, cfg),
        Protocol::Tdma => tdma_solve(model, eps, cfg),
        Protocol::Noma => noma_solve(model, eps, cfg),
    }
}

/// Single antenna at the feed point: only the resource allocation is optimised.
pub fn con1_solve(scenario: &Scenario, protocol: Protocol, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    solve(&SystemModel::con1(scenario.clone()), protocol, eps, cfg)
}

/// Fixed half-wavelength array whose analog phases are searched by the swarm.
pub fn con2_solve(scenario: &Scenario, protocol: Protocol, eps: f64, cfg: &PsoConfig) -> Result<AllocationResult> {
    solve(&SystemModel::con2(scenario.clone()), protocol, eps, cfg)
}

/// Conjugate-beam rate bound of a fixed array serving one IU alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamBound {
    pub gain: f64,
    pub rate: f64,
    pub eu_power_w: Option<f64>,
}

/// Upper bound on any phase choice for a single IU; with one EU, the harvested
/// power of the beam matched to the EU.
pub fn matched_beam_bound(model: &SystemModel) -> Result<BeamBound> {
    if model.kind == TransmitterKind::Pass {
        return Err(Error::Domain("the matched-beam bound applies to fixed arrays".into()));
    }
    let [iu] = model.scenario.ius.as_slice() else {
        return Err(Error::Domain("the matched-beam bound needs exactly one IU".into()));
    };
    let gain = model.matched_beam_gain(iu);
    let eu_power_w = match model.scenario.eus.as_slice() {
        [eu] => Some(
            model.scenario.params.energy_conversion_eff() * model.power_per_element() * model.matched_beam_gain(eu),
        ),
        _ => None,
    };
    Ok(BeamBound { gain, rate: log2_1p(model.snr(0, gain)), eu_power_w })
}
