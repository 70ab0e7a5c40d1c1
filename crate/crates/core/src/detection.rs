//! Per-pulse joint detection-outcome probabilities for the two-detector
//! receiver, the observable 8·N_λ i.i.d. probability vector, and gain/error
//! statistics — all with analytic parameter gradients.

use crate::error::{ModelError, Result};
use crate::params::{
    channel_eff, channel_eff_d_distance, AliceParams, BobParams, EveParams, ParamId, SystemParams,
};
use crate::photonstats::{pns_click_prob, pns_click_prob_with_grad, ClickGrad};
use crate::special::beta_quantile;
use crate::params::moment_match_beta;

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

/// Everything that varies per pulse: bases, data bit, interception flag, intensity.
#[derive(Debug, Clone, Copy)]
pub struct PulseContext {
    pub a: u8,
    pub b: u8,
    pub x: u8,
    pub e: u8,
    pub lambda_index: usize,
}

/// Index into the shared 8·N_λ cell layout: m-major, then outcome (00,01,10,11),
/// then intensity. Outcome "01" means only D0 clicked.
pub fn cell_index(m: usize, outcome: usize, lambda: usize, n_lambda: usize) -> usize {
    debug_assert!(m < 2 && outcome < 4 && lambda < n_lambda);
    (m * 4 + outcome) * n_lambda + lambda
}

/// The observable probability vector with optional per-parameter gradients,
/// each aligned with `cells`.
#[derive(Debug, Clone)]
pub struct OutcomeProbs {
    pub n_lambda: usize,
    pub cells: Vec<f64>,
    pub grads: Vec<(ParamId, Vec<f64>)>,
}

impl OutcomeProbs {
    pub fn cell(&self, m: usize, outcome: usize, lambda: usize) -> f64 {
        self.cells[cell_index(m, outcome, lambda, self.n_lambda)]
    }
}

/// Probability that a photon reaches detector `i` given the pulse settings:
/// cos²(π/2·(i+x) − π/4·(a−b) + arcsin√p_e). The two detectors sum to 1.
pub fn beamsplit_prob(i: u8, x: u8, a: u8, b: u8, p_e: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;
    let angle = FRAC_PI_2 * (i + x) as f64 - FRAC_PI_4 * (a as f64 - b as f64) + p_e.sqrt().asin();
    angle.cos().powi(2)
}

/// ∂beamsplit_prob/∂p_e (p_e strictly interior).
fn beamsplit_prob_d_pe(i: u8, x: u8, a: u8, b: u8, p_e: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;
    let angle = FRAC_PI_2 * (i + x) as f64 - FRAC_PI_4 * (a as f64 - b as f64) + p_e.sqrt().asin();
    let d_angle = 0.5 / (p_e * (1.0 - p_e)).sqrt();
    -(2.0 * angle).sin() * d_angle
}

/// Adjusted interception-law parameters for detector `i` under context `ctx`:
/// λ̂ = λ·p_AB^{1−e}·p_AE^{e}, p̂_c = p_bs·p_c·p_EB^{e}, k̂ = e·k.
pub fn adjusted_params(theta: &SystemParams, ctx: &PulseContext, i: u8) -> (f64, f64, f64) {
    let lambda = theta.alice.intensities[ctx.lambda_index];
    let (lam_hat, s) = if ctx.e == 1 {
        let p_ae = channel_eff(theta.alice.attenuation, theta.eve.distance_ae);
        (lambda * p_ae, theta.eve.channel_eff)
    } else {
        (lambda * theta.alice.p_ab(), 1.0)
    };
    let bs = beamsplit_prob(i, ctx.x, ctx.a, ctx.b, theta.bob.misalignment);
    let pc_hat = bs * theta.bob.efficiency[i as usize] * s;
    let k_hat = if ctx.e == 1 { theta.eve.photons_per_pulse } else { 0.0 };
    (lam_hat, pc_hat, k_hat)
}

/// Joint probabilities of the four detection outcomes for one pulse context.
pub fn joint_outcome_probs(theta: &SystemParams, ctx: &PulseContext) -> Result<[f64; 4]> {
    Ok(joint_outcome_core(theta, ctx, &[])?.0)
}

/// Joint probabilities plus ∂cell/∂parameter for each requested parameter.
pub fn joint_outcome_probs_with_grad(
    theta: &SystemParams,
    ctx: &PulseContext,
    ids: &[ParamId],
) -> Result<([f64; 4], Vec<[f64; 4]>)> {
    joint_outcome_core(theta, ctx, ids)
}

fn zero_grad() -> ClickGrad<f64> {
    ClickGrad::default()
}

fn joint_outcome_core(
    theta: &SystemParams,
    ctx: &PulseContext,
    ids: &[ParamId],
) -> Result<([f64; 4], Vec<[f64; 4]>)> {
    let want_grad = !ids.is_empty();
    let lambda = theta.alice.intensities[ctx.lambda_index];
    let e1 = ctx.e == 1;
    let pe = theta.bob.misalignment;
    let p_ab = theta.alice.p_ab();
    let p_ae = channel_eff(theta.alice.attenuation, theta.eve.distance_ae);
    let s = if e1 { theta.eve.channel_eff } else { 1.0 };
    let lam_hat = lambda * if e1 { p_ae } else { p_ab };
    let k_hat = if e1 { theta.eve.photons_per_pulse } else { 0.0 };
    let bs0 = beamsplit_prob(0, ctx.x, ctx.a, ctx.b, pe);
    let bs = [bs0, 1.0 - bs0];
    let pc_hat = [
        bs[0] * theta.bob.efficiency[0] * s,
        bs[1] * theta.bob.efficiency[1] * s,
    ];
    let pd = theta.bob.dark_count;
    let pdv = 1.0 - (1.0 - pd[0]) * (1.0 - pd[1]);

    let click = |pc: f64, pdd: f64| -> Result<crate::photonstats::ClickProb<f64>> {
        if want_grad {
            pns_click_prob_with_grad(lam_hat, pc, pdd, k_hat)
        } else {
            pns_click_prob(lam_hat, pc, pdd, k_hat)
        }
    };
    let m0 = click(pc_hat[0], pd[0])?; // P(D0 = 1)
    let m1 = click(pc_hat[1], pd[1])?; // P(D1 = 1)
    let un = click(pc_hat[0] + pc_hat[1], pdv)?; // P(D0 ∨ D1)

    // Inclusion–exclusion reconstruction; outcome order 00, 01 (D0 only), 10, 11.
    let raw = [
        un.complement,
        un.value - m1.value,
        un.value - m0.value,
        m0.value + m1.value - un.value,
    ];
    let mut cells = [0.0; 4];
    for (o, &v) in raw.iter().enumerate() {
        if v < -1e-12 {
            return Err(ModelError::Inconsistent(format!(
                "joint outcome cell {o} reconstructed as {v:e}"
            )));
        }
        cells[o] = v.max(0.0);
    }
    let sum: f64 = cells.iter().sum();
    for c in &mut cells {
        *c /= sum;
    }

    let mut grads = Vec::with_capacity(ids.len());
    if want_grad {
        let g0 = m0.grad.unwrap_or_else(zero_grad);
        let g1 = m1.grad.unwrap_or_else(zero_grad);
        let gu = un.grad.unwrap_or_else(zero_grad);
        for id in ids {
            // Chain-rule inputs: derivatives of (λ̂, p̂_c0, p̂_c1, p_d0, p_d1, k̂).
            let (mut dlam, mut dpc0, mut dpc1, mut dpd0, mut dpd1, mut dk) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            match *id {
                ParamId::DAe => {
                    if e1 {
                        dlam = lambda * channel_eff_d_distance(theta.alice.attenuation, theta.eve.distance_ae);
                    }
                }
                ParamId::PEb => {
                    if e1 {
                        dpc0 = bs[0] * theta.bob.efficiency[0];
                        dpc1 = bs[1] * theta.bob.efficiency[1];
                    }
                }
                ParamId::K => {
                    if e1 {
                        dk = 1.0;
                    }
                }
                ParamId::Delta | ParamId::Pa(_) => {}
                ParamId::Alpha => {
                    let d = if e1 { theta.eve.distance_ae } else { theta.alice.distance_ab };
                    dlam = -LN10_OVER_10 * d * lam_hat;
                }
                ParamId::DAb => {
                    if !e1 {
                        dlam = lambda * channel_eff_d_distance(theta.alice.attenuation, theta.alice.distance_ab);
                    }
                }
                ParamId::Lambda(i) => {
                    if i == ctx.lambda_index {
                        dlam = lam_hat / lambda;
                    }
                }
                ParamId::Pc(j) => {
                    let d = bs[j] * s;
                    if j == 0 {
                        dpc0 = d;
                    } else {
                        dpc1 = d;
                    }
                }
                ParamId::Pd(j) => {
                    if j == 0 {
                        dpd0 = 1.0;
                    } else {
                        dpd1 = 1.0;
                    }
                }
                ParamId::Pe => {
                    let dbs0 = beamsplit_prob_d_pe(0, ctx.x, ctx.a, ctx.b, pe);
                    dpc0 = dbs0 * theta.bob.efficiency[0] * s;
                    dpc1 = -dbs0 * theta.bob.efficiency[1] * s;
                }
            }
            let dpdv = dpd0 * (1.0 - pd[1]) + dpd1 * (1.0 - pd[0]);
            let dm0 = g0.d_lambda * dlam + g0.d_pc * dpc0 + g0.d_pd * dpd0 + g0.d_k * dk;
            let dm1 = g1.d_lambda * dlam + g1.d_pc * dpc1 + g1.d_pd * dpd1 + g1.d_k * dk;
            let dun = gu.d_lambda * dlam + gu.d_pc * (dpc0 + dpc1) + gu.d_pd * dpdv + gu.d_k * dk;
            let draw = [-dun, dun - dm1, dun - dm0, dm0 + dm1 - dun];
            let dsum: f64 = draw.iter().sum();
            let mut dcells = [0.0; 4];
            for o in 0..4 {
                dcells[o] = (draw[o] - cells[o] * dsum) / sum;
            }
            grads.push(dcells);
        }
    }
    Ok((cells, grads))
}

/// The observable i.i.d. probability vector P(θ): joint outcomes averaged over
/// x (½ each) and e (1−Δ, Δ), with representative basis b = 1 and m = a, then
/// weighted ½ per m and 1/N_λ per intensity.
pub fn iid_prob_vector(theta: &SystemParams) -> Result<OutcomeProbs> {
    iid_prob_vector_with_grad(theta, &[])
}

pub fn iid_prob_vector_with_grad(theta: &SystemParams, ids: &[ParamId]) -> Result<OutcomeProbs> {
    let n_l = theta.n_lambda();
    let delta = theta.eve.intercept_fraction;
    let want_grad = !ids.is_empty();
    let mut cells = vec![0.0; 8 * n_l];
    let mut grads: Vec<Vec<f64>> = ids.iter().map(|_| vec![0.0; 8 * n_l]).collect();

    for l in 0..n_l {
        for m in 0..2u8 {
            for x in 0..2u8 {
                let w_mx = 0.5 * 0.5 / n_l as f64;
                for e in 0..2u8 {
                    let w_e = if e == 1 { delta } else { 1.0 - delta };
                    if w_e == 0.0 && !want_grad {
                        continue;
                    }
                    let ctx = PulseContext { a: m, b: 1, x, e, lambda_index: l };
                    let (joint, joint_grads) = joint_outcome_core(theta, &ctx, ids)?;
                    for o in 0..4 {
                        let idx = cell_index(m as usize, o, l, n_l);
                        cells[idx] += w_mx * w_e * joint[o];
                        for (j, id) in ids.iter().enumerate() {
                            let mut d = w_mx * w_e * joint_grads[j][o];
                            if *id == ParamId::Delta {
                                // The weight itself carries the Δ dependence.
                                d += w_mx * if e == 1 { joint[o] } else { -joint[o] };
                            }
                            grads[j][idx] += d;
                        }
                    }
                }
            }
        }
    }

    Ok(OutcomeProbs {
        n_lambda: n_l,
        cells,
        grads: ids.iter().copied().zip(grads).collect(),
    })
}

/// How double clicks are accounted for in gain/error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleClickMode {
    /// Only exclusive single clicks count.
    Exclusive,
    /// Double clicks count as both a gain and an error (decoy-comparison convention).
    CountAsGainAndError,
}

#[derive(Debug, Clone, Copy)]
pub struct GainErrorStats {
    pub q: f64,
    pub eq: f64,
    /// EQ/Q; absent when Q = 0.
    pub delta: Option<f64>,
}

/// Gain Q, error-gain EQ and conditional error rate δ for one (m, λ) cell,
/// marginalized over x and e.
pub fn gain_error_stats(
    theta: &SystemParams,
    m: u8,
    lambda_index: usize,
    mode: DoubleClickMode,
) -> Result<GainErrorStats> {
    let delta_e = theta.eve.intercept_fraction;
    let mut q = 0.0;
    let mut eq = 0.0;
    for x in 0..2u8 {
        let mut joint = [0.0; 4];
        for e in 0..2u8 {
            let w_e = if e == 1 { delta_e } else { 1.0 - delta_e };
            if w_e == 0.0 {
                continue;
            }
            let ctx = PulseContext { a: m, b: 1, x, e, lambda_index };
            let j = joint_outcome_probs(theta, &ctx)?;
            for o in 0..4 {
                joint[o] += w_e * j[o];
            }
        }
        q += 0.5 * (joint[1] + joint[2]);
        // The correct detector is i = x, so an error is the opposite exclusive click.
        eq += 0.5 * if x == 0 { joint[2] } else { joint[1] };
        if mode == DoubleClickMode::CountAsGainAndError {
            q += 0.5 * joint[3];
            eq += 0.5 * joint[3];
        }
    }
    let delta = if q > 0.0 { Some(eq / q) } else { None };
    Ok(GainErrorStats { q, eq, delta })
}

/// Beta moment-match of the sifted error rate for one (m, λ) cell at N pulses.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRateApprox {
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ErrorRateApprox {
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if self.variance == 0.0 {
            return Ok(self.mean);
        }
        beta_quantile(self.alpha, self.beta, p)
    }

    /// Central interval [lo, hi] at the given coverage level (e.g. 0.99).
    pub fn central_interval(&self, level: f64) -> Result<(f64, f64)> {
        let tail = 0.5 * (1.0 - level);
        Ok((self.quantile(tail)?, self.quantile(1.0 - tail)?))
    }
}

/// δ ~ Beta with mean δ and variance δ(1−δ)/(N·Q·P(m)·P(λ)).
pub fn error_rate_interval(
    theta: &SystemParams,
    m: u8,
    lambda_index: usize,
    n: u64,
    mode: DoubleClickMode,
) -> Result<ErrorRateApprox> {
    let stats = gain_error_stats(theta, m, lambda_index, mode)?;
    let delta = stats.delta.ok_or_else(|| ModelError::Domain("error rate undefined at Q = 0".into()))?;
    if delta == 0.0 || delta == 1.0 {
        return Ok(ErrorRateApprox { alpha: f64::NAN, beta: f64::NAN, mean: delta, variance: 0.0 });
    }
    let n_eff = n as f64 * stats.q * 0.5 / theta.n_lambda() as f64;
    let variance = delta * (1.0 - delta) / n_eff;
    let (alpha, beta) = moment_match_beta(delta, variance)?;
    Ok(ErrorRateApprox { alpha, beta, mean: delta, variance })
}

fn click_marginal(
    alice: &AliceParams,
    bob: &BobParams,
    lambda: f64,
    eve: Option<&EveParams>,
    single: bool,
) -> Result<f64> {
    let theta = SystemParams {
        alice: AliceParams { intensities: vec![lambda], ..alice.clone() },
        bob: bob.clone(),
        eve: eve.cloned().unwrap_or_else(EveParams::inactive),
    };
    let e = u8::from(eve.is_some());
    let mut p = 0.0;
    for m in 0..2u8 {
        for x in 0..2u8 {
            let ctx = PulseContext { a: m, b: 1, x, e, lambda_index: 0 };
            let joint = joint_outcome_probs(&theta, &ctx)?;
            p += 0.25 * if single { joint[1] + joint[2] } else { 1.0 - joint[0] };
        }
    }
    Ok(p)
}

/// P(any click) at one intensity, marginalized over m and x. `eve = None` is the
/// honest channel; `Some` forces interception on every pulse.
pub fn union_click_marginal(
    alice: &AliceParams,
    bob: &BobParams,
    lambda: f64,
    eve: Option<&EveParams>,
) -> Result<f64> {
    click_marginal(alice, bob, lambda, eve, false)
}

/// P(exactly one detector clicks) at one intensity, marginalized over m and x.
pub fn single_click_marginal(
    alice: &AliceParams,
    bob: &BobParams,
    lambda: f64,
    eve: Option<&EveParams>,
) -> Result<f64> {
    click_marginal(alice, bob, lambda, eve, true)
}

/// Eve's "optimized" replacement-channel efficiency: the p_EB that equalizes
/// the honest and intercepted single-click gain at the top intensity, found by
/// bisection. Returns 1 when even a lossless channel cannot compensate.
pub fn optimize_p_eb(
    alice: &AliceParams,
    bob: &BobParams,
    distance_ae: f64,
    k: f64,
    lambda_top: f64,
) -> Result<f64> {
    let honest = single_click_marginal(alice, bob, lambda_top, None)?;
    let f = |p_eb: f64| -> Result<f64> {
        let eve = EveParams {
            distance_ae,
            channel_eff: p_eb,
            photons_per_pulse: k,
            intercept_fraction: 1.0,
        };
        Ok(single_click_marginal(alice, bob, lambda_top, Some(&eve))? - honest)
    };
    if f(1.0)? <= 0.0 {
        return Ok(1.0);
    }
    if f(0.0)? >= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0); // f(lo) < 0 < f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
