//! Closed-form click probabilities for the optical components (detector, fiber,
//! beam splitter, detector pair, attenuated laser) and the generalized
//! photon-number-splitting interception law, with analytic parameter gradients.

use crate::error::{ModelError, Result};
use crate::special::{d_reg_gamma_lower_ds, ln_gamma, ln_reg_gamma_lower, reg_gamma_pair};
use num_traits::Float;

pub use crate::special::{reg_gamma_lower, reg_gamma_upper};

/// A click probability with its complement kept in product form for log-stable
/// likelihoods, plus optional partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ClickProb<F> {
    /// P(click)
    pub value: F,
    /// 1 − P(click), computed directly (not as 1 − value)
    pub complement: F,
    pub grad: Option<ClickGrad<F>>,
}

/// Partials of a click probability with respect to its own arguments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClickGrad<F> {
    pub d_lambda: F,
    pub d_pc: F,
    pub d_pd: F,
    pub d_k: F,
}

impl<F: Float> ClickProb<F> {
    /// log(1 − P), stable when P ≈ 1.
    pub fn log_complement(&self) -> F {
        self.complement.ln()
    }
}

fn check_prob<F: Float>(name: &str, p: F) -> Result<()> {
    if p < F::zero() || p > F::one() || !p.is_finite() {
        return Err(ModelError::Domain(format!(
            "{name} must lie in [0,1] (got {:e})",
            p.to_f64().unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

/// Detector with n incident photons: P(click) = 1 − q_d q_c^n.
pub fn click_prob_detector<F: Float>(n: u64, p_c: F, p_d: F) -> Result<ClickProb<F>> {
    check_prob("p_c", p_c)?;
    check_prob("p_d", p_d)?;
    let q_d = F::one() - p_d;
    let q_c = F::one() - p_c;
    let complement = q_d * q_c.powi(n as i32);
    Ok(ClickProb { value: F::one() - complement, complement, grad: None })
}

/// Fiber → interior loss → detector compose into one detector with the product efficiency.
pub fn effective_efficiency<F: Float>(p_f: F, p_i: F, p_c: F) -> Result<F> {
    check_prob("p_f", p_f)?;
    check_prob("p_i", p_i)?;
    check_prob("p_c", p_c)?;
    Ok(p_f * p_i * p_c)
}

/// Poisson thinning: a fiber with efficiency p_f turns intensity λ into λ·p_f.
pub fn effective_intensity<F: Float>(lambda: F, p_f: F) -> Result<F> {
    if lambda < F::zero() {
        return Err(ModelError::Domain("lambda must be >= 0".into()));
    }
    check_prob("p_f", p_f)?;
    Ok(lambda * p_f)
}

/// Two detectors behind a splitter act as one pseudo-detector:
/// p_c∨ = p_0 p_c0 + (1−p_0) p_c1, p_d∨ = 1 − q_d0 q_d1.
pub fn pair_union_params<F: Float>(p_0: F, p_c0: F, p_c1: F, p_d0: F, p_d1: F) -> Result<(F, F)> {
    check_prob("p_0", p_0)?;
    check_prob("p_c0", p_c0)?;
    check_prob("p_c1", p_c1)?;
    check_prob("p_d0", p_d0)?;
    check_prob("p_d1", p_d1)?;
    let p_1 = F::one() - p_0;
    let p_cv = p_0 * p_c0 + p_1 * p_c1;
    let p_dv = F::one() - (F::one() - p_d0) * (F::one() - p_d1);
    Ok((p_cv, p_dv))
}

/// Poisson source into a detector: P(click) = 1 − (1−p_d) e^{−p_c λ}.
pub fn click_prob_laser_detector<F: Float>(lambda: F, p_c: F, p_d: F) -> Result<ClickProb<F>> {
    if lambda < F::zero() {
        return Err(ModelError::Domain("lambda must be >= 0".into()));
    }
    check_prob("p_c", p_c)?;
    check_prob("p_d", p_d)?;
    let q_d = F::one() - p_d;
    let e = (-p_c * lambda).exp();
    let complement = q_d * e;
    let grad = ClickGrad {
        d_lambda: q_d * p_c * e,
        d_pc: q_d * lambda * e,
        d_pd: e,
        d_k: F::zero(),
    };
    Ok(ClickProb { value: F::one() - complement, complement, grad: Some(grad) })
}

/// Click probability when an interceptor removes up to k photons (continuous k ≥ 0)
/// before a detector with efficiency p_c and dark-count p_d:
///
///   P = 1 − q_d q_c^{−k} e^{−p_c λ} γ̄(k, q_c λ) − q_d Γ̄(k, λ)
///
/// k = 0 reduces exactly to the laser–detector law via the Γ̄(0,·)=0 convention.
pub fn pns_click_prob<F: Float>(lambda: F, p_c: F, p_d: F, k: F) -> Result<ClickProb<F>> {
    pns_click(lambda, p_c, p_d, k, false)
}

/// Same as [`pns_click_prob`] but with ∂P/∂{λ, p_c, p_d, k} attached.
pub fn pns_click_prob_with_grad<F: Float>(lambda: F, p_c: F, p_d: F, k: F) -> Result<ClickProb<F>> {
    pns_click(lambda, p_c, p_d, k, true)
}

fn pns_click<F: Float>(lambda: F, p_c: F, p_d: F, k: F, want_grad: bool) -> Result<ClickProb<F>> {
    if lambda < F::zero() {
        return Err(ModelError::Domain("lambda must be >= 0".into()));
    }
    if k < F::zero() {
        return Err(ModelError::Domain("k must be >= 0".into()));
    }
    check_prob("p_c", p_c)?;
    check_prob("p_d", p_d)?;

    let zero = F::zero();
    let one = F::one();
    let q_d = one - p_d;

    if k == zero {
        // γ̄(0,·) = 1, Γ̄(0,·) = 0: plain laser–detector.
        let mut cp = click_prob_laser_detector(lambda, p_c, p_d)?;
        if !want_grad {
            cp.grad = None;
        }
        return Ok(cp);
    }

    let q_c = one - p_c;
    let u = q_c * lambda;

    // A = q_c^{−k} e^{−p_c λ} γ̄(k, u); limit for q_c → 0 is e^{−λ} λ^k / Γ(k+1) · e^{λ(1−p_c)}… = 0 photons
    // survive detection-thinning complement, i.e. only the k ≤ n mass matters:
    // lim A = e^{−p_c λ} (λ q_c … ) / q_c^k → λ^k e^{−λ} / Γ(k+1) at p_c = 1.
    let a = if q_c <= c::<F>(1e-14) {
        if lambda == zero {
            zero
        } else {
            (k * lambda.ln() - lambda - ln_gamma(k + one)).exp()
        }
    } else if u == zero {
        zero
    } else {
        ((-p_c * lambda) - k * q_c.ln() + ln_reg_gamma_lower(k, u)?).exp()
    };
    let (_, b) = reg_gamma_pair(k, lambda)?;

    let complement = q_d * (a + b);
    let value = one - complement;

    let grad = if want_grad {
        // γ̄'(k, x) = x^{k−1} e^{−x} / Γ(k)
        let lng = ln_gamma(k);
        let dens = |x: F| -> F {
            if x <= zero {
                zero // valid for k > 1; k ≤ 1 boundary gradients are not defined at λ = 0
            } else {
                ((k - one) * x.ln() - x - lng).exp()
            }
        };
        let q_c_safe = q_c.max(c::<F>(1e-14));
        let g_u = dens(u);
        let da_dlambda = -p_c * a + q_c_safe.powf(one - k) * (-p_c * lambda).exp() * g_u;
        let da_dpc = (-lambda + k / q_c_safe) * a - q_c_safe.powf(-k) * (-p_c * lambda).exp() * lambda * g_u;
        let dgbar_ds_u = d_reg_gamma_lower_ds(k, u)?;
        let da_dk = -q_c_safe.ln() * a + q_c_safe.powf(-k) * (-p_c * lambda).exp() * dgbar_ds_u;
        let db_dlambda = -dens(lambda);
        let db_dk = -d_reg_gamma_lower_ds(k, lambda)?;
        Some(ClickGrad {
            d_lambda: -q_d * (da_dlambda + db_dlambda),
            d_pc: -q_d * da_dpc,
            d_pd: a + b,
            d_k: -q_d * (da_dk + db_dk),
        })
    } else {
        None
    };

    Ok(ClickProb { value, complement, grad })
}

fn c<F: Float>(v: f64) -> F {
    F::from(v).expect("constant conversion")
}
