//! On-disk experiment configuration (JSON, strict fields).

use crate::error::{ModelError, Result};
use crate::params::{AliceParams, BobParams, EveParams, ParamId, PriorSpec, SessionParams};
use serde::{Deserialize, Serialize};

/// Per-parameter prior overrides; anything left out keeps its default
/// (Eve parameters) or stays a design constant (everything else).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsConfig {
    pub d_ae: Option<PriorSpec>,
    pub p_eb: Option<PriorSpec>,
    pub k: Option<PriorSpec>,
    pub delta: Option<PriorSpec>,
    pub alpha: Option<PriorSpec>,
    pub d_ab: Option<PriorSpec>,
    pub p_c0: Option<PriorSpec>,
    pub p_c1: Option<PriorSpec>,
    pub p_d0: Option<PriorSpec>,
    pub p_d1: Option<PriorSpec>,
    pub p_e: Option<PriorSpec>,
    pub p_a0: Option<PriorSpec>,
    pub p_a1: Option<PriorSpec>,
}

impl PriorsConfig {
    /// Flattens the overrides into (parameter, prior) pairs, keeping the
    /// declaration order stable for chain columns.
    pub fn overrides(&self) -> Vec<(ParamId, PriorSpec)> {
        let pairs: [(ParamId, &Option<PriorSpec>); 13] = [
            (ParamId::DAe, &self.d_ae),
            (ParamId::PEb, &self.p_eb),
            (ParamId::K, &self.k),
            (ParamId::Delta, &self.delta),
            (ParamId::Alpha, &self.alpha),
            (ParamId::DAb, &self.d_ab),
            (ParamId::Pc(0), &self.p_c0),
            (ParamId::Pc(1), &self.p_c1),
            (ParamId::Pd(0), &self.p_d0),
            (ParamId::Pd(1), &self.p_d1),
            (ParamId::Pe, &self.p_e),
            (ParamId::Pa(0), &self.p_a0),
            (ParamId::Pa(1), &self.p_a1),
        ];
        pairs
            .into_iter()
            .filter_map(|(id, spec)| spec.map(|s| (id, s)))
            .collect()
    }
}

/// Key-rate knobs; optional in the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRateSection {
    #[serde(default = "default_protocol_eff")]
    pub protocol_eff: f64,
    #[serde(default = "default_ec_efficiency")]
    pub ec_efficiency: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_nu1")]
    pub nu1: f64,
    #[serde(default = "default_nu2")]
    pub nu2: f64,
}

fn default_protocol_eff() -> f64 {
    0.5
}
fn default_ec_efficiency() -> f64 {
    1.22
}
fn default_mu() -> f64 {
    0.48
}
fn default_nu1() -> f64 {
    0.05
}
fn default_nu2() -> f64 {
    0.0
}

impl Default for KeyRateSection {
    fn default() -> Self {
        KeyRateSection {
            protocol_eff: default_protocol_eff(),
            ec_efficiency: default_ec_efficiency(),
            mu: default_mu(),
            nu1: default_nu1(),
            nu2: default_nu2(),
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub alice: AliceParams,
    pub bob: BobParams,
    pub eve: EveParams,
    pub session: SessionParams,
    #[serde(default)]
    pub priors: Option<PriorsConfig>,
    #[serde(default)]
    pub keyrate: Option<KeyRateSection>,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.alice.validate()?;
        self.bob.validate()?;
        self.eve.validate(self.alice.distance_ab)?;
        self.session.validate()?;
        if let Some(p) = &self.priors {
            for (_, spec) in p.overrides() {
                spec.validate()?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| ModelError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text)
    }

    pub fn system(&self) -> crate::params::SystemParams {
        crate::params::SystemParams {
            alice: self.alice.clone(),
            bob: self.bob.clone(),
            eve: self.eve.clone(),
        }
    }
}
