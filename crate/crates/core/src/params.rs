//! Parameter containers, prior specifications, moment matching, and the
//! multiple-intensity grid heuristics.

use crate::detection;
use crate::error::{ModelError, Result};
use serde::{Deserialize, Serialize};

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

/// Source-side parameters θ_A.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AliceParams {
    /// Mean photon numbers per pulse, strictly increasing.
    pub intensities: Vec<f64>,
    /// Fiber attenuation in dB/km.
    pub attenuation: f64,
    /// Alice–Bob distance in km.
    pub distance_ab: f64,
}

impl AliceParams {
    pub fn validate(&self) -> Result<()> {
        if self.intensities.is_empty() {
            return Err(ModelError::InvalidParams("intensities must be non-empty".into()));
        }
        for w in self.intensities.windows(2) {
            if w[1] <= w[0] {
                return Err(ModelError::InvalidParams("intensities must be strictly increasing".into()));
            }
        }
        if self.intensities[0] <= 0.0 {
            return Err(ModelError::InvalidParams("intensities must be > 0".into()));
        }
        if self.attenuation < 0.0 || self.distance_ab < 0.0 {
            return Err(ModelError::InvalidParams("attenuation and distance_ab must be >= 0".into()));
        }
        Ok(())
    }

    /// Channel efficiency p_AB = 10^(−α d_AB / 10).
    pub fn p_ab(&self) -> f64 {
        channel_eff(self.attenuation, self.distance_ab)
    }

    pub fn n_lambda(&self) -> usize {
        self.intensities.len()
    }
}

/// 10^(−α d / 10)
pub fn channel_eff(attenuation: f64, distance_km: f64) -> f64 {
    10f64.powf(-attenuation * distance_km / 10.0)
}

/// d(channel_eff)/d(distance) = −(ln10/10)·α·p and d/dα = −(ln10/10)·d·p.
pub fn channel_eff_d_distance(attenuation: f64, distance_km: f64) -> f64 {
    -LN10_OVER_10 * attenuation * channel_eff(attenuation, distance_km)
}

/// Receiver-side parameters θ_B; index 0/1 refer to detectors D0/D1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BobParams {
    pub afterpulse: [f64; 2],
    pub efficiency: [f64; 2],
    pub dark_count: [f64; 2],
    pub misalignment: f64,
}

impl BobParams {
    pub fn validate(&self) -> Result<()> {
        for j in 0..2 {
            if !(0.0..1.0).contains(&self.afterpulse[j]) {
                return Err(ModelError::InvalidParams("afterpulse must be in [0,1)".into()));
            }
            if !(self.efficiency[j] > 0.0 && self.efficiency[j] <= 1.0) {
                return Err(ModelError::InvalidParams("efficiency must be in (0,1]".into()));
            }
            if !(0.0..1.0).contains(&self.dark_count[j]) {
                return Err(ModelError::InvalidParams("dark_count must be in [0,1)".into()));
            }
        }
        if !(0.0..1.0).contains(&self.misalignment) {
            return Err(ModelError::InvalidParams("misalignment must be in [0,1)".into()));
        }
        Ok(())
    }

    pub fn symmetric(&self) -> bool {
        self.afterpulse[0] == self.afterpulse[1]
            && self.efficiency[0] == self.efficiency[1]
            && self.dark_count[0] == self.dark_count[1]
    }
}

/// Eavesdropper parameters θ_E.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EveParams {
    /// Interception distance d_AE (km), 0 ≤ d_AE ≤ d_AB.
    pub distance_ae: f64,
    /// Replacement channel efficiency p_EB.
    pub channel_eff: f64,
    /// Photons removed per intercepted pulse, continuous k ≥ 1.
    pub photons_per_pulse: f64,
    /// Fraction of pulses intercepted, Δ.
    pub intercept_fraction: f64,
}

impl EveParams {
    /// An Eve that never acts (Δ = 0).
    pub fn inactive() -> Self {
        EveParams { distance_ae: 0.0, channel_eff: 1.0, photons_per_pulse: 1.0, intercept_fraction: 0.0 }
    }

    pub fn validate(&self, distance_ab: f64) -> Result<()> {
        if !(0.0..=distance_ab).contains(&self.distance_ae) {
            return Err(ModelError::InvalidParams("distance_ae must be in [0, d_AB]".into()));
        }
        if !(0.0..=1.0).contains(&self.channel_eff) {
            return Err(ModelError::InvalidParams("channel_eff must be in [0,1]".into()));
        }
        if self.photons_per_pulse < 1.0 {
            return Err(ModelError::InvalidParams("photons_per_pulse must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.intercept_fraction) {
            return Err(ModelError::InvalidParams("intercept_fraction must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Complete system configuration θ = {θ_A, θ_B, θ_E}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemParams {
    pub alice: AliceParams,
    pub bob: BobParams,
    pub eve: EveParams,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        self.alice.validate()?;
        self.bob.validate()?;
        self.eve.validate(self.alice.distance_ab)
    }

    pub fn n_lambda(&self) -> usize {
        self.alice.n_lambda()
    }
}

/// Which detection model generated (or explains) the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Iid,
    Hmm,
}

/// Session-level knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionParams {
    pub pulses: u64,
    pub runs: u64,
    pub seed: u64,
    pub model: Model,
}

impl SessionParams {
    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 || self.runs == 0 {
            return Err(ModelError::InvalidParams("pulses and runs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Beta,
    Gamma,
    Fixed,
}

/// Per-parameter prior specification (rescaled Beta on [l,u], shifted Gamma on [l,∞), or a point mass).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub shape_a: f64,
    pub shape_b: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PriorSpec {
    pub fn beta(shape_a: f64, shape_b: f64, lower: f64, upper: f64) -> Self {
        PriorSpec { kind: PriorKind::Beta, shape_a, shape_b, lower, upper }
    }

    pub fn gamma(shape_a: f64, shape_b: f64, lower: f64) -> Self {
        PriorSpec { kind: PriorKind::Gamma, shape_a, shape_b, lower, upper: f64::INFINITY }
    }

    pub fn fixed() -> Self {
        PriorSpec { kind: PriorKind::Fixed, shape_a: 0.0, shape_b: 0.0, lower: 0.0, upper: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PriorKind::Fixed => Ok(()),
            PriorKind::Beta => {
                if self.shape_a <= 0.0 || self.shape_b <= 0.0 {
                    return Err(ModelError::InvalidParams("beta prior shapes must be > 0".into()));
                }
                if !(self.lower < self.upper) || !self.upper.is_finite() {
                    return Err(ModelError::InvalidParams("beta prior requires finite l < u".into()));
                }
                Ok(())
            }
            PriorKind::Gamma => {
                if self.shape_a <= 0.0 || self.shape_b <= 0.0 {
                    return Err(ModelError::InvalidParams("gamma prior shapes must be > 0".into()));
                }
                if !self.lower.is_finite() {
                    return Err(ModelError::InvalidParams("gamma prior lower bound must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Mean of the prior in natural space.
    pub fn mean(&self) -> f64 {
        match self.kind {
            PriorKind::Beta => self.lower + (self.upper - self.lower) * self.shape_a / (self.shape_a + self.shape_b),
            PriorKind::Gamma => self.lower + self.shape_a / self.shape_b,
            PriorKind::Fixed => f64::NAN,
        }
    }
}

/// Gamma(α, β) with requested mean and variance: α = m²/v, β = m/v.
pub fn moment_match_gamma(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if mean <= 0.0 || variance <= 0.0 {
        return Err(ModelError::Domain("moment_match_gamma requires mean > 0 and variance > 0".into()));
    }
    Ok((mean * mean / variance, mean / variance))
}

/// Beta(α, β) with requested mean and variance.
pub fn moment_match_beta(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(0.0 < mean && mean < 1.0) || variance <= 0.0 {
        return Err(ModelError::Domain("moment_match_beta requires mean in (0,1) and variance > 0".into()));
    }
    if variance >= mean * (1.0 - mean) {
        return Err(ModelError::Domain("moment_match_beta: variance exceeds the Bernoulli bound".into()));
    }
    let alpha = mean * mean * (1.0 - mean) / variance - mean;
    let beta = mean * (1.0 - mean) * (1.0 - mean) / variance + mean - 1.0;
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(ModelError::Domain("moment_match_beta: no valid Beta for these moments".into()));
    }
    Ok((alpha, beta))
}

/// The equally spaced intensity grid and the heuristic bounds that define it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntensityGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub count: usize,
    pub cap: f64,
}

impl IntensityGrid {
    pub fn intensities(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|i| self.lambda_min + (self.lambda_max - self.lambda_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// An Eve that intercepts right next to Alice, removing a single photon and
/// forwarding the rest losslessly — the break-even adversary behind λ_min.
fn probe_eve(k: f64) -> EveParams {
    EveParams { distance_ae: 0.0, channel_eff: 1.0, photons_per_pulse: k, intercept_fraction: 1.0 }
}

/// λ_min: the intensity at which a single-photon interceptor with a perfect
/// replacement channel exactly matches the honest click probability, found by
/// bisection of g(λ) = P_click(no Eve) − P_click(k=1, d_AE=0, p_EB=1).
pub fn lambda_min(alice: &AliceParams, bob: &BobParams, cap: f64) -> Result<f64> {
    let g = |lambda: f64| -> Result<f64> {
        let honest = detection::union_click_marginal(alice, bob, lambda, None)?;
        let eve = detection::union_click_marginal(alice, bob, lambda, Some(&probe_eve(1.0)))?;
        Ok(honest - eve)
    };
    let (mut lo, mut hi) = (1e-6, cap);
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(ModelError::Config(format!(
            "no sign change for lambda_min in ({lo:e}, {hi}); g({lo:e})={g_lo:e}, g({hi})={g_hi:e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)?.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the intensity grid: λ_min by bisection, λ_max by golden-section
/// maximization of the honest single-click probability (capped), then `count`
/// equally spaced points.
pub fn build_intensity_grid(
    alice: &AliceParams,
    bob: &BobParams,
    count: usize,
    cap: f64,
) -> Result<(IntensityGrid, Vec<f64>)> {
    if count < 4 {
        return Err(ModelError::Config(
            "intensity grid needs at least four points (one per unknown parameter)".into(),
        ));
    }
    bob.validate()?;
    let lo = lambda_min(alice, bob, cap)?;

    // Golden-section maximization of the single-click probability on [λ_min, cap].
    let objective = |lambda: f64| detection::single_click_marginal(alice, bob, lambda, None);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, cap);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d)?;
        }
        if (b - a).abs() < 1e-12 * cap {
            break;
        }
    }
    let hi = (0.5 * (a + b)).min(cap);

    let grid = IntensityGrid { lambda_min: lo, lambda_max: hi, count, cap };
    let intensities = grid.intensities();
    Ok((grid, intensities))
}

/// The largest interception size that still lets Eve match the honest gain at
/// the top grid intensity with a lossless replacement channel. Returns
/// (k_max, attainable); when even k = 1 cannot compensate, returns (1, false).
pub fn k_max(alice: &AliceParams, bob: &BobParams, grid: &IntensityGrid) -> Result<(f64, bool)> {
    let lambda_top = grid.lambda_max;
    let honest = detection::union_click_marginal(alice, bob, lambda_top, None)?;
    let h = |k: f64| -> Result<f64> {
        Ok(detection::union_click_marginal(alice, bob, lambda_top, Some(&probe_eve(k)))? - honest)
    };
    if h(1.0)? <= 0.0 {
        return Ok((1.0, false));
    }
    let mut hi = 2.0;
    while h(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(ModelError::Config("k_max bracket expansion failed".into()));
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), true))
}

/// β_k from the halfway rule: with α_k = 1 the shifted-Gamma prior mean
/// 1 + 1/β_k is placed halfway between 1 and k_max.
pub fn beta_k_from_k_max(k_max: f64) -> f64 {
    if k_max <= 1.0 {
        // Degenerate grid: fall back to a unit-rate prior.
        1.0
    } else {
        2.0 / (k_max - 1.0)
    }
}

/// Identifies a single scalar coordinate of `SystemParams` for gradients and
/// inference. The Eve block {DAe, PEb, K, Delta} is the default target; the
/// remaining variants support the fully Bayesian mode where source/receiver
/// parameters become random too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamId {
    DAe,
    PEb,
    K,
    Delta,
    Alpha,
    DAb,
    /// Intensity grid entry.
    Lambda(usize),
    /// Detector efficiency, detector index 0/1.
    Pc(usize),
    /// Detector dark-count, detector index 0/1.
    Pd(usize),
    Pe,
    /// Detector after-pulse probability, detector index 0/1.
    Pa(usize),
}

impl ParamId {
    pub fn get(&self, theta: &SystemParams) -> f64 {
        match *self {
            ParamId::DAe => theta.eve.distance_ae,
            ParamId::PEb => theta.eve.channel_eff,
            ParamId::K => theta.eve.photons_per_pulse,
            ParamId::Delta => theta.eve.intercept_fraction,
            ParamId::Alpha => theta.alice.attenuation,
            ParamId::DAb => theta.alice.distance_ab,
            ParamId::Lambda(i) => theta.alice.intensities[i],
            ParamId::Pc(j) => theta.bob.efficiency[j],
            ParamId::Pd(j) => theta.bob.dark_count[j],
            ParamId::Pe => theta.bob.misalignment,
            ParamId::Pa(j) => theta.bob.afterpulse[j],
        }
    }

    pub fn set(&self, theta: &mut SystemParams, value: f64) {
        match *self {
            ParamId::DAe => theta.eve.distance_ae = value,
            ParamId::PEb => theta.eve.channel_eff = value,
            ParamId::K => theta.eve.photons_per_pulse = value,
            ParamId::Delta => theta.eve.intercept_fraction = value,
            ParamId::Alpha => theta.alice.attenuation = value,
            ParamId::DAb => theta.alice.distance_ab = value,
            ParamId::Lambda(i) => theta.alice.intensities[i] = value,
            ParamId::Pc(j) => theta.bob.efficiency[j] = value,
            ParamId::Pd(j) => theta.bob.dark_count[j] = value,
            ParamId::Pe => theta.bob.misalignment = value,
            ParamId::Pa(j) => theta.bob.afterpulse[j] = value,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ParamId::DAe => "d_AE".into(),
            ParamId::PEb => "p_EB".into(),
            ParamId::K => "k".into(),
            ParamId::Delta => "Delta".into(),
            ParamId::Alpha => "alpha".into(),
            ParamId::DAb => "d_AB".into(),
            ParamId::Lambda(i) => format!("lambda_{i}"),
            ParamId::Pc(j) => format!("p_c{j}"),
            ParamId::Pd(j) => format!("p_d{j}"),
            ParamId::Pe => "p_e".into(),
            ParamId::Pa(j) => format!("p_a{j}"),
        }
    }
}

/// The standard inference target: Eve's four parameters.
pub const EVE_PARAMS: [ParamId; 4] = [ParamId::DAe, ParamId::PEb, ParamId::K, ParamId::Delta];
