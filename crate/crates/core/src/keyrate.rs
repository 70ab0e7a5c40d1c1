//! Secure-key-rate estimates: the GLLP-style rate for the proposed protocol,
//! the weak+vacuum decoy-state rate (original and corrected gain/error
//! models), and posterior key-rate distributions per intensity.

use crate::detection::{gain_error_stats, DoubleClickMode};
use crate::error::{ModelError, Result};
use crate::hmm::hmm_gain_error;
use crate::inference::{from_unbounded, Chain, InferenceSetup};
use crate::params::{Model, SystemParams};

/// −x log₂x − (1−x) log₂(1−x) with H₂(0) = H₂(1) = 0.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -(x * x.log2() + (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy)]
pub struct KeyRateConfig {
    /// Protocol efficiency q.
    pub protocol_eff: f64,
    /// Error-correction inefficiency f.
    pub ec_efficiency: f64,
    pub double_click_mode: DoubleClickMode,
}

impl Default for KeyRateConfig {
    fn default() -> Self {
        KeyRateConfig {
            protocol_eff: 0.5,
            ec_efficiency: 1.22,
            double_click_mode: DoubleClickMode::CountAsGainAndError,
        }
    }
}

impl KeyRateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.protocol_eff && self.protocol_eff <= 1.0) {
            return Err(ModelError::InvalidParams("protocol efficiency must be in (0,1]".into()));
        }
        if self.ec_efficiency < 1.0 {
            return Err(ModelError::InvalidParams("error-correction efficiency must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weak + vacuum decoy intensities.
#[derive(Debug, Clone, Copy)]
pub struct DecoyConfig {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl DecoyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > self.nu1 && self.nu1 > self.nu2 && self.nu2 >= 0.0) {
            return Err(ModelError::InvalidParams("decoy intensities need mu > nu1 > nu2 >= 0".into()));
        }
        if self.nu1 + self.nu2 >= self.mu {
            return Err(ModelError::InvalidParams("decoy validity needs nu1 + nu2 < mu".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KeyRateResult {
    /// Secret bits per pulse, clamped at 0.
    pub rate: f64,
    pub gain: f64,
    pub error_rate: f64,
    /// Tagged fraction used in the privacy term.
    pub tagged: f64,
    /// Set when a decoy intermediate was out of range and the rate was forced to 0.
    pub degenerate: bool,
}

/// K = max(0, q·Q·[−f·H₂(δ) + (1−Δ)(1 − H₂(δ/(1−Δ)))]); an entropy argument
/// δ/(1−Δ) above 1 invalidates the privacy bound and forces K = 0.
pub fn gllp_rate(gain: f64, delta: f64, tagged: f64, cfg: &KeyRateConfig) -> Result<KeyRateResult> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&delta) || !(0.0..1.0).contains(&tagged) {
        return Err(ModelError::Domain("gllp_rate needs delta in [0,1] and tagged in [0,1)".into()));
    }
    let arg = delta / (1.0 - tagged);
    let (rate, degenerate) = if arg > 1.0 {
        (0.0, true)
    } else {
        let bracket = -cfg.ec_efficiency * binary_entropy(delta)
            + (1.0 - tagged) * (1.0 - binary_entropy(arg));
        ((cfg.protocol_eff * gain * bracket).max(0.0), false)
    };
    Ok(KeyRateResult { rate, gain, error_rate: delta, tagged, degenerate })
}

/// Observed gains and error-gains at the three decoy intensities.
#[derive(Debug, Clone, Copy)]
pub struct DecoyObservations {
    pub q_mu: f64,
    pub q_nu1: f64,
    pub q_nu2: f64,
    pub eq_mu: f64,
    pub eq_nu1: f64,
    pub eq_nu2: f64,
}

/// Weak + vacuum decoy-state rate from observed gains:
/// Y0, Y1, Q1, e1 per the standard estimates, then
/// K = max(0, q·[−Qμ f H₂(δμ) + Q1(1 − H₂(e1))]).
pub fn decoy_rate(obs: &DecoyObservations, cfg: &KeyRateConfig, dcfg: &DecoyConfig) -> Result<KeyRateResult> {
    cfg.validate()?;
    dcfg.validate()?;
    for v in [obs.q_mu, obs.q_nu1, obs.q_nu2, obs.eq_mu, obs.eq_nu1, obs.eq_nu2] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ModelError::Domain("decoy observations must lie in [0,1]".into()));
        }
    }
    let (mu, nu1, nu2) = (dcfg.mu, dcfg.nu1, dcfg.nu2);
    let delta_mu = if obs.q_mu > 0.0 { obs.eq_mu / obs.q_mu } else { 0.0 };

    let y0 = ((nu1 * obs.q_nu2 * nu2.exp() - nu2 * obs.q_nu1 * nu1.exp()) / (nu1 - nu2)).max(0.0);
    let y1 = mu / (mu * nu1 - mu * nu2 - nu1 * nu1 + nu2 * nu2)
        * (obs.q_nu1 * nu1.exp()
            - obs.q_nu2 * nu2.exp()
            - (nu1 * nu1 - nu2 * nu2) / (mu * mu) * (obs.q_mu * mu.exp() - y0));
    let q1 = y1 * mu * (-mu).exp();
    if y1 <= 0.0 {
        return Ok(KeyRateResult { rate: 0.0, gain: obs.q_mu, error_rate: delta_mu, tagged: 0.0, degenerate: true });
    }
    let e1 = (obs.eq_nu1 * nu1.exp() - obs.eq_nu2 * nu2.exp()) / (y1 * (nu1 - nu2));
    if !(0.0..=1.0).contains(&e1) {
        return Ok(KeyRateResult { rate: 0.0, gain: obs.q_mu, error_rate: delta_mu, tagged: 0.0, degenerate: true });
    }
    let bracket = -obs.q_mu * cfg.ec_efficiency * binary_entropy(delta_mu)
        + q1 * (1.0 - binary_entropy(e1));
    Ok(KeyRateResult {
        rate: (cfg.protocol_eff * bracket).max(0.0),
        gain: obs.q_mu,
        error_rate: delta_mu,
        tagged: 0.0,
        degenerate: false,
    })
}

/// Closed-form honest-channel gain and error-gain at intensity μ for the decoy
/// comparison. Corrected: Q = 1 − (1−p_d)²e^{−μ p_AB p_c},
/// EQ = 1 − (1−p_d)e^{−μ p_AB p_c p_e}. Approximate (the textbook model):
/// Q = p_d + 1 − e^{−μ p_AB p_c}, EQ = ½p_d + p_e(1 − e^{−μ p_AB p_c}).
/// Requires symmetric detectors.
pub fn decoy_gain_error(theta: &SystemParams, mu: f64, corrected: bool) -> Result<(f64, f64)> {
    if !theta.bob.symmetric() {
        return Err(ModelError::InvalidParams(
            "decoy gain/error comparison assumes symmetric detectors".into(),
        ));
    }
    if mu < 0.0 {
        return Err(ModelError::Domain("mu must be >= 0".into()));
    }
    let p_d = theta.bob.dark_count[0];
    let p_c = theta.bob.efficiency[0];
    let p_e = theta.bob.misalignment;
    let eta = theta.alice.p_ab() * p_c;
    let (q, eq) = if corrected {
        (
            1.0 - (1.0 - p_d) * (1.0 - p_d) * (-mu * eta).exp(),
            1.0 - (1.0 - p_d) * (-mu * eta * p_e).exp(),
        )
    } else {
        (
            p_d + 1.0 - (-mu * eta).exp(),
            0.5 * p_d + p_e * (1.0 - (-mu * eta).exp()),
        )
    };
    Ok((q, eq))
}

/// Model gain and error rate for the sifted (m = 1) cell at one intensity,
/// under the detection model matching the inference.
pub fn model_gain_error(
    theta: &SystemParams,
    lambda_index: usize,
    model: Model,
    mode: DoubleClickMode,
) -> Result<(f64, f64)> {
    let stats = match model {
        Model::Iid => gain_error_stats(theta, 1, lambda_index, mode)?,
        Model::Hmm => hmm_gain_error(theta, 1, lambda_index, mode)?,
    };
    Ok((stats.q, stats.delta.unwrap_or(0.0)))
}

/// Posterior key-rate samples for one intensity.
#[derive(Debug, Clone)]
pub struct KeyRateSamples {
    pub lambda_index: usize,
    pub rates: Vec<f64>,
}

/// Pushes every posterior sample through the key-rate formula, per intensity:
/// (Q, δ) from the model at the sampled θ, the tagged fraction from the
/// sampled Δ.
pub fn keyrate_posterior(
    chain: &Chain,
    setup: &InferenceSetup,
    cfg: &KeyRateConfig,
) -> Result<Vec<KeyRateSamples>> {
    cfg.validate()?;
    let free = setup.free();
    let n_l = setup.theta_fixed.n_lambda();
    let mut out: Vec<KeyRateSamples> = (0..n_l)
        .map(|l| KeyRateSamples { lambda_index: l, rates: Vec::with_capacity(chain.samples.len()) })
        .collect();
    for phi in &chain.samples {
        let values = from_unbounded(phi, &free);
        let theta = setup.theta_at(&values);
        let tagged = theta.eve.intercept_fraction.min(1.0 - 1e-12);
        for l in 0..n_l {
            let (q, delta) = model_gain_error(&theta, l, setup.model, cfg.double_click_mode)?;
            out[l].rates.push(gllp_rate(q, delta, tagged, cfg)?.rate);
        }
    }
    Ok(out)
}

/// Inclusive start:step:stop sweep in km.
pub fn distance_range(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || stop < start {
        return Err(ModelError::Config("distance sweep needs step > 0 and stop >= start".into()));
    }
    let n = ((stop - start) / step).round() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub distance_km: f64,
    pub protocol: &'static str,
    pub intensity: f64,
    pub rate: f64,
}

/// Proposed-protocol rate curve at a fixed signal intensity over a distance
/// sweep, honest channel (the tagged fraction comes from θ's Δ, normally 0).
pub fn proposed_curve(
    theta: &SystemParams,
    mu: f64,
    cfg: &KeyRateConfig,
    distances: &[f64],
    model: Model,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(distances.len());
    for &d in distances {
        let mut th = theta.clone();
        th.alice.distance_ab = d;
        th.alice.intensities = vec![mu];
        if th.eve.distance_ae > d {
            th.eve.distance_ae = d;
        }
        let (q, delta) = model_gain_error(&th, 0, model, cfg.double_click_mode)?;
        let tagged = th.eve.intercept_fraction.min(1.0 - 1e-12);
        out.push(CurvePoint {
            distance_km: d,
            protocol: "proposed",
            intensity: mu,
            rate: gllp_rate(q, delta, tagged, cfg)?.rate,
        });
    }
    Ok(out)
}

/// Decoy-state rate curve from the closed-form gain model (corrected or
/// approximate) over a distance sweep.
pub fn decoy_curve(
    theta: &SystemParams,
    dcfg: &DecoyConfig,
    cfg: &KeyRateConfig,
    corrected: bool,
    distances: &[f64],
) -> Result<Vec<CurvePoint>> {
    dcfg.validate()?;
    let mut out = Vec::with_capacity(distances.len());
    for &d in distances {
        let mut th = theta.clone();
        th.alice.distance_ab = d;
        let (q_mu, eq_mu) = decoy_gain_error(&th, dcfg.mu, corrected)?;
        let (q_nu1, eq_nu1) = decoy_gain_error(&th, dcfg.nu1, corrected)?;
        let (q_nu2, eq_nu2) = decoy_gain_error(&th, dcfg.nu2, corrected)?;
        let obs = DecoyObservations { q_mu, q_nu1, q_nu2, eq_mu, eq_nu1, eq_nu2 };
        out.push(CurvePoint {
            distance_km: d,
            protocol: if corrected { "decoy_corrected" } else { "decoy_approximate" },
            intensity: dcfg.mu,
            rate: decoy_rate(&obs, cfg, dcfg)?.rate,
        });
    }
    Ok(out)
}
