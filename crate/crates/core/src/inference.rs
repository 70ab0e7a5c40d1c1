//! Posterior construction (multinomial likelihood, priors, unbounding
//! transforms, Jacobian), MAP initialization, the shrinking-rank slice
//! sampler, and posterior summaries.

use crate::detection::iid_prob_vector_with_grad;
use crate::error::{ModelError, Result};
use crate::hmm::hmm_prob_vector_with_grad;
use crate::params::{Model, ParamId, PriorKind, PriorSpec, SystemParams};
use crate::simulate::OutcomeCounts;
use crate::special::{ln_beta, ln_gamma};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A log-density that is either finite or an explicit −∞ marker; raw non-finite
/// floats never enter arithmetic paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDensity {
    Finite(f64),
    NegInf,
}

impl LogDensity {
    pub fn value(self) -> Option<f64> {
        match self {
            LogDensity::Finite(v) => Some(v),
            LogDensity::NegInf => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, LogDensity::Finite(_))
    }

    fn add(self, other: LogDensity) -> LogDensity {
        match (self, other) {
            (LogDensity::Finite(a), LogDensity::Finite(b)) => LogDensity::Finite(a + b),
            _ => LogDensity::NegInf,
        }
    }
}

/// Everything the posterior needs besides the counts: the fixed system
/// parameters, one prior per inferred parameter, and the detection model.
#[derive(Debug, Clone)]
pub struct InferenceSetup {
    pub theta_fixed: SystemParams,
    pub priors: Vec<(ParamId, PriorSpec)>,
    pub model: Model,
}

impl InferenceSetup {
    pub fn new(
        theta_fixed: SystemParams,
        priors: Vec<(ParamId, PriorSpec)>,
        model: Model,
    ) -> Result<Self> {
        theta_fixed.validate()?;
        for (id, spec) in &priors {
            spec.validate()?;
            if spec.kind != PriorKind::Fixed && matches!(id, ParamId::Lambda(_)) {
                // Intensities stay design constants; the fully Bayesian mode
                // covers source/receiver rates, not the grid itself.
                return Err(ModelError::Config("intensity grid entries cannot be random".into()));
            }
        }
        Ok(InferenceSetup { theta_fixed, priors, model })
    }

    /// The non-fixed (sampled) parameters, in declaration order.
    pub fn free(&self) -> Vec<(ParamId, PriorSpec)> {
        self.priors
            .iter()
            .filter(|(_, s)| s.kind != PriorKind::Fixed)
            .copied()
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.free().len()
    }

    /// θ with the free parameters overwritten by `values` (natural space).
    pub fn theta_at(&self, values: &[f64]) -> SystemParams {
        let mut theta = self.theta_fixed.clone();
        for ((id, _), &v) in self.free().iter().zip(values) {
            id.set(&mut theta, v);
        }
        theta
    }
}

/// Default priors over θ_E: d_AE ~ Beta(1,2) on [0, d_AB] (closer to Alice is
/// likelier), p_EB ~ Beta(1,1), k − 1 ~ Gamma(1, β_k) on k ≥ 1 (mode at 1),
/// Δ ~ Beta(2,1) (interception likelier a priori).
pub fn default_eve_priors(d_ab: f64, beta_k: f64) -> Vec<(ParamId, PriorSpec)> {
    vec![
        (ParamId::DAe, PriorSpec::beta(1.0, 2.0, 0.0, d_ab)),
        (ParamId::PEb, PriorSpec::beta(1.0, 1.0, 0.0, 1.0)),
        (ParamId::K, PriorSpec::gamma(1.0, beta_k, 1.0)),
        (ParamId::Delta, PriorSpec::beta(2.0, 1.0, 0.0, 1.0)),
    ]
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Natural → unbounded: logit of the rescaled value for bounded priors,
/// log(v − l) for semi-bounded ones. Boundary values are rejected.
pub fn to_unbounded(values: &[f64], free: &[(ParamId, PriorSpec)]) -> Result<Vec<f64>> {
    if values.len() != free.len() {
        return Err(ModelError::Input("value/prior length mismatch".into()));
    }
    let mut phi = Vec::with_capacity(values.len());
    for (&v, (id, spec)) in values.iter().zip(free) {
        let p = match spec.kind {
            PriorKind::Beta => {
                let u = (v - spec.lower) / (spec.upper - spec.lower);
                if !(0.0 < u && u < 1.0) {
                    return Err(ModelError::Domain(format!(
                        "{} = {v} is not strictly inside ({}, {})",
                        id.name(),
                        spec.lower,
                        spec.upper
                    )));
                }
                (u / (1.0 - u)).ln()
            }
            PriorKind::Gamma => {
                if v <= spec.lower {
                    return Err(ModelError::Domain(format!(
                        "{} = {v} is not strictly above {}",
                        id.name(),
                        spec.lower
                    )));
                }
                (v - spec.lower).ln()
            }
            PriorKind::Fixed => {
                return Err(ModelError::Input("fixed parameter in free list".into()))
            }
        };
        phi.push(p);
    }
    Ok(phi)
}

/// Unbounded → natural; exact inverse of [`to_unbounded`] on interior points.
pub fn from_unbounded(phi: &[f64], free: &[(ParamId, PriorSpec)]) -> Vec<f64> {
    phi.iter()
        .zip(free)
        .map(|(&p, (_, spec))| match spec.kind {
            PriorKind::Beta => spec.lower + (spec.upper - spec.lower) * sigmoid(p),
            PriorKind::Gamma => spec.lower + p.exp(),
            PriorKind::Fixed => unreachable!("fixed parameter in free list"),
        })
        .collect()
}

/// Σ log|dθ/dφ|: log[σ(φ)(1−σ(φ))·(u−l)] per bounded coordinate plus φ per
/// semi-bounded coordinate.
pub fn log_jacobian(phi: &[f64], free: &[(ParamId, PriorSpec)]) -> f64 {
    phi.iter()
        .zip(free)
        .map(|(&p, (_, spec))| match spec.kind {
            PriorKind::Beta => {
                let s = sigmoid(p);
                (s * (1.0 - s) * (spec.upper - spec.lower)).ln()
            }
            PriorKind::Gamma => p,
            PriorKind::Fixed => 0.0,
        })
        .sum()
}

fn d_log_jacobian(phi: &[f64], free: &[(ParamId, PriorSpec)]) -> Vec<f64> {
    phi.iter()
        .zip(free)
        .map(|(&p, (_, spec))| match spec.kind {
            PriorKind::Beta => 1.0 - 2.0 * sigmoid(p),
            PriorKind::Gamma => 1.0,
            PriorKind::Fixed => 0.0,
        })
        .collect()
}

/// dθ/dφ per coordinate.
fn d_natural_d_phi(phi: &[f64], free: &[(ParamId, PriorSpec)]) -> Vec<f64> {
    phi.iter()
        .zip(free)
        .map(|(&p, (_, spec))| match spec.kind {
            PriorKind::Beta => {
                let s = sigmoid(p);
                (spec.upper - spec.lower) * s * (1.0 - s)
            }
            PriorKind::Gamma => p.exp(),
            PriorKind::Fixed => 0.0,
        })
        .collect()
}

/// Log prior density at natural-space values, one factor per free parameter.
pub fn log_prior(values: &[f64], free: &[(ParamId, PriorSpec)]) -> LogDensity {
    let mut total = 0.0;
    for (&v, (_, spec)) in values.iter().zip(free) {
        match spec.kind {
            PriorKind::Beta => {
                let w = spec.upper - spec.lower;
                let u = (v - spec.lower) / w;
                if !(0.0 < u && u < 1.0) {
                    return LogDensity::NegInf;
                }
                total += (spec.shape_a - 1.0) * u.ln() + (spec.shape_b - 1.0) * (1.0 - u).ln()
                    - ln_beta(spec.shape_a, spec.shape_b)
                    - w.ln();
            }
            PriorKind::Gamma => {
                let t = v - spec.lower;
                if t <= 0.0 {
                    return LogDensity::NegInf;
                }
                total += spec.shape_a * spec.shape_b.ln() + (spec.shape_a - 1.0) * t.ln()
                    - spec.shape_b * t
                    - ln_gamma(spec.shape_a);
            }
            PriorKind::Fixed => {}
        }
    }
    LogDensity::Finite(total)
}

fn d_log_prior(values: &[f64], free: &[(ParamId, PriorSpec)]) -> Vec<f64> {
    values
        .iter()
        .zip(free)
        .map(|(&v, (_, spec))| match spec.kind {
            PriorKind::Beta => {
                let w = spec.upper - spec.lower;
                let u = (v - spec.lower) / w;
                ((spec.shape_a - 1.0) / u - (spec.shape_b - 1.0) / (1.0 - u)) / w
            }
            PriorKind::Gamma => (spec.shape_a - 1.0) / (v - spec.lower) - spec.shape_b,
            PriorKind::Fixed => 0.0,
        })
        .collect()
}

/// Multinomial log-likelihood of the counts under the model's probability
/// vector, including the count-coefficient (constant in θ, kept for absolute
/// comparability across models).
pub fn log_likelihood(counts: &OutcomeCounts, theta: &SystemParams, model: Model) -> Result<LogDensity> {
    let probs = match model {
        Model::Iid => iid_prob_vector_with_grad(theta, &[])?,
        Model::Hmm => hmm_prob_vector_with_grad(theta, &[])?,
    };
    Ok(multinomial_loglik(counts, &probs.cells).0)
}

fn multinomial_loglik(counts: &OutcomeCounts, cells: &[f64]) -> (LogDensity, f64) {
    debug_assert_eq!(counts.cells.len(), cells.len());
    let mut ll = ln_gamma(counts.total as f64 + 1.0);
    for (&c, &p) in counts.cells.iter().zip(cells) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return (LogDensity::NegInf, 0.0);
        }
        ll += c as f64 * p.ln() - ln_gamma(c as f64 + 1.0);
    }
    (LogDensity::Finite(ll), ll)
}

#[derive(Debug, Clone)]
pub struct PosteriorEval {
    pub log_posterior: LogDensity,
    /// d(log posterior)/dφ; zeros when the density is −∞.
    pub gradient: Vec<f64>,
}

/// Log posterior in φ-space: log-likelihood + log-prior(Θ(φ)) + log-Jacobian,
/// with the gradient assembled by the chain rule through the transform.
pub fn log_posterior(
    phi: &[f64],
    counts: &OutcomeCounts,
    setup: &InferenceSetup,
) -> Result<PosteriorEval> {
    let free = setup.free();
    let d = free.len();
    if phi.len() != d {
        return Err(ModelError::Input(format!("expected {} coordinates, got {}", d, phi.len())));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Ok(PosteriorEval { log_posterior: LogDensity::NegInf, gradient: vec![0.0; d] });
    }
    let values = from_unbounded(phi, &free);
    let prior = log_prior(&values, &free);
    if !prior.is_finite() {
        return Ok(PosteriorEval { log_posterior: LogDensity::NegInf, gradient: vec![0.0; d] });
    }
    let theta = setup.theta_at(&values);
    if theta.validate().is_err() {
        return Ok(PosteriorEval { log_posterior: LogDensity::NegInf, gradient: vec![0.0; d] });
    }
    let ids: Vec<ParamId> = free.iter().map(|(id, _)| *id).collect();
    let probs = match setup.model {
        Model::Iid => iid_prob_vector_with_grad(&theta, &ids)?,
        Model::Hmm => hmm_prob_vector_with_grad(&theta, &ids)?,
    };
    let (ll, _) = multinomial_loglik(counts, &probs.cells);
    if !ll.is_finite() {
        return Ok(PosteriorEval { log_posterior: LogDensity::NegInf, gradient: vec![0.0; d] });
    }

    // dLL/dθ_j = Σ_i c_i · (∂p_i/∂θ_j) / p_i
    let mut d_ll = vec![0.0; d];
    for (j, (_, grad)) in probs.grads.iter().enumerate() {
        let mut acc = 0.0;
        for ((&c, &p), &dp) in counts.cells.iter().zip(&probs.cells).zip(grad) {
            if c > 0 {
                acc += c as f64 * dp / p;
            }
        }
        d_ll[j] = acc;
    }
    let d_prior = d_log_prior(&values, &free);
    let d_jac = d_log_jacobian(phi, &free);
    let dv = d_natural_d_phi(phi, &free);
    let gradient: Vec<f64> = (0..d)
        .map(|j| (d_ll[j] + d_prior[j]) * dv[j] + d_jac[j])
        .collect();

    let total = ll.add(prior).add(LogDensity::Finite(log_jacobian(phi, &free)));
    Ok(PosteriorEval { log_posterior: total, gradient })
}

fn sample_prior(spec: &PriorSpec, rng: &mut ChaCha8Rng) -> f64 {
    match spec.kind {
        PriorKind::Beta => {
            let b = rand_distr::Beta::new(spec.shape_a, spec.shape_b).expect("validated prior");
            spec.lower + (spec.upper - spec.lower) * b.sample(rng)
        }
        PriorKind::Gamma => {
            let g = rand_distr::Gamma::new(spec.shape_a, 1.0 / spec.shape_b).expect("validated prior");
            spec.lower + g.sample(rng)
        }
        PriorKind::Fixed => f64::NAN,
    }
}

pub const MAP_GRAD_TOL: f64 = 1e-6;
pub const MAP_MAX_ITER: usize = 10_000;

/// MAP estimate in φ-space by gradient ascent with backtracking line search,
/// initialized at the prior means (falling back to random prior draws when the
/// posterior is −∞ at the init).
pub fn map_estimate(counts: &OutcomeCounts, setup: &InferenceSetup) -> Result<Vec<f64>> {
    let free = setup.free();
    if free.is_empty() {
        return Err(ModelError::Config("no free parameters to infer".into()));
    }
    let means: Vec<f64> = free.iter().map(|(_, s)| s.mean()).collect();
    let mut phi = to_unbounded(&means, &free)?;
    let mut ev = log_posterior(&phi, counts, setup)?;
    if !ev.log_posterior.is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4d41505f494e4954); // fixed init stream
        let mut found = false;
        for _ in 0..100 {
            let draw: Vec<f64> = free.iter().map(|(_, s)| sample_prior(s, &mut rng)).collect();
            if let Ok(p) = to_unbounded(&draw, &free) {
                let e = log_posterior(&p, counts, setup)?;
                if e.log_posterior.is_finite() {
                    phi = p;
                    ev = e;
                    found = true;
                    break;
                }
            }
        }
        if !found {
            return Err(ModelError::Convergence(
                "no finite posterior point found in 100 prior draws".into(),
                f64::NAN,
            ));
        }
    }

    let mut step = 1.0;
    for _ in 0..MAP_MAX_ITER {
        let f0 = ev.log_posterior.value().expect("finite by construction");
        let g = ev.gradient.clone();
        let g_inf = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if g_inf < MAP_GRAD_TOL {
            return Ok(phi);
        }
        let mut t = step;
        let mut advanced = false;
        for _ in 0..60 {
            let cand: Vec<f64> = phi.iter().zip(&g).map(|(p, gi)| p + t * gi).collect();
            let ec = log_posterior(&cand, counts, setup)?;
            if let LogDensity::Finite(fc) = ec.log_posterior {
                if fc > f0 {
                    phi = cand;
                    ev = ec;
                    step = (t * 2.0).min(1.0e3);
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced {
            // No ascent direction at float resolution: accept the current point.
            return Ok(phi);
        }
    }
    Ok(phi)
}

/// A posterior sample path in φ-space.
#[derive(Debug, Clone)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub seed: u64,
    pub burn_in: u64,
}

pub const SRSS_INITIAL_SIGMA: f64 = 1.0;
pub const SRSS_SHRINK: f64 = 0.95;
const SRSS_MAX_CRUMBS: usize = 10_000;

fn project(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = v.to_vec();
    for b in basis {
        let dot: f64 = out.iter().zip(b).map(|(a, c)| a * c).sum();
        for (o, c) in out.iter_mut().zip(b) {
            *o -= dot * c;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One shrinking-rank slice-sampler transition from (x0, f0) on an arbitrary
/// log density with gradient; returns the new point with its log density.
pub fn slice_update(
    rng: &mut ChaCha8Rng,
    x0: &[f64],
    f0: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<(LogDensity, Vec<f64>)>,
) -> Result<(Vec<f64>, f64)> {
    let d = x0.len();
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let y_slice = f0 + u.ln(); // f0 − Exp(1)

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut sigma = SRSS_INITIAL_SIGMA;
    let mut lambda = 0.0; // Σ σ_k^{-2}
    let mut mu = vec![0.0; d]; // Σ σ_k^{-2} (c_k − x0), kept in the complement of the basis

    for _ in 0..SRSS_MAX_CRUMBS {
        // Crumb k: offset σ·z restricted to the complement subspace.
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let c_off = project(&z, &basis);
        let inv_var = 1.0 / (sigma * sigma);
        lambda += inv_var;
        for (m, c) in mu.iter_mut().zip(&c_off) {
            *m += inv_var * sigma * c;
        }
        // Proposal from the crumb posterior: N(μ/λ, λ^{-1} I) in the complement.
        let z2: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let noise = project(&z2, &basis);
        let x: Vec<f64> = (0..d)
            .map(|i| x0[i] + mu[i] / lambda + noise[i] / lambda.sqrt())
            .collect();
        let (density, gradient) = eval(&x)?;
        match density {
            LogDensity::Finite(fx) if fx > y_slice => return Ok((x, fx)),
            LogDensity::Finite(_) if basis.len() < d.saturating_sub(1) => {
                let g = &gradient;
                let gp = project(g, &basis);
                let (ng, ngp) = (norm(g), norm(&gp));
                let cosine = if ng > 0.0 && ngp > 0.0 {
                    gp.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (ng * ngp)
                } else {
                    0.0
                };
                if cosine > 0.5 {
                    let unit: Vec<f64> = gp.iter().map(|v| v / ngp).collect();
                    basis.push(unit);
                    mu = project(&mu, &basis);
                } else {
                    sigma *= SRSS_SHRINK;
                }
            }
            _ => sigma *= SRSS_SHRINK,
        }
    }
    Err(ModelError::Convergence(
        format!("slice sampler exhausted {SRSS_MAX_CRUMBS} crumbs (log-slice {y_slice:.3})"),
        sigma,
    ))
}

/// Draws a chain with the shrinking-rank slice sampler on an arbitrary log
/// density with gradient, starting from `x0`; the first `burn_in` transitions
/// are discarded.
pub fn slice_chain(
    eval: &mut dyn FnMut(&[f64]) -> Result<(LogDensity, Vec<f64>)>,
    x0: &[f64],
    n_samples: u64,
    burn_in: u64,
    seed: u64,
) -> Result<Chain> {
    let mut x = x0.to_vec();
    let mut f = eval(&x)?
        .0
        .value()
        .ok_or_else(|| ModelError::Convergence("chain start has a −∞ density".into(), f64::NAN))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples as usize);
    let mut lps = Vec::with_capacity(n_samples as usize);
    for i in 0..burn_in + n_samples {
        let (nx, nf) = slice_update(&mut rng, &x, f, eval)?;
        x = nx;
        f = nf;
        if i >= burn_in {
            samples.push(x.clone());
            lps.push(f);
        }
    }
    Ok(Chain { samples, log_posterior: lps, seed, burn_in })
}

/// Draws a posterior chain with the shrinking-rank slice sampler, starting
/// from the MAP estimate; the first `burn_in` transitions are discarded.
pub fn srss_sample(
    counts: &OutcomeCounts,
    setup: &InferenceSetup,
    n_samples: u64,
    burn_in: u64,
    seed: u64,
) -> Result<Chain> {
    let x0 = map_estimate(counts, setup)?;
    let mut eval = |phi: &[f64]| -> Result<(LogDensity, Vec<f64>)> {
        let ev = log_posterior(phi, counts, setup)?;
        Ok((ev.log_posterior, ev.gradient))
    };
    slice_chain(&mut eval, &x0, n_samples, burn_in, seed)
}

/// Per-parameter posterior summary in natural space.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    /// 99% central credible interval: [0.5%, 99.5%] quantiles.
    pub ci99: (f64, f64),
}

/// Linear-interpolation sample quantile of a sorted slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Maps the chain through the inverse transform and summarizes each parameter.
pub fn summarize(chain: &Chain, free: &[(ParamId, PriorSpec)]) -> Result<Vec<ParamSummary>> {
    if chain.samples.is_empty() {
        return Err(ModelError::Input("empty chain".into()));
    }
    let d = free.len();
    let n = chain.samples.len() as f64;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.samples.len()); d];
    for phi in &chain.samples {
        let v = from_unbounded(phi, free);
        for (col, val) in columns.iter_mut().zip(v) {
            col.push(val);
        }
    }
    let mut out = Vec::with_capacity(d);
    for (j, col) in columns.iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        out.push(ParamSummary {
            name: free[j].0.name(),
            mean,
            sd: var.sqrt(),
            median: sorted_quantile(col, 0.5),
            ci99: (sorted_quantile(col, 0.005), sorted_quantile(col, 0.995)),
        });
    }
    Ok(out)
}

/// Negative-binomial pmf: the Poisson–Gamma marginal, P(n) =
/// Γ(n+α)/(n! Γ(α)) · (β/(β+1))^α (1/(β+1))^n.
pub fn nb_pmf(n: u64, alpha: f64, beta: f64) -> Result<f64> {
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(ModelError::Domain("nb_pmf requires alpha, beta > 0".into()));
    }
    let nf = n as f64;
    let ln_p = ln_gamma(nf + alpha) - ln_gamma(nf + 1.0) - ln_gamma(alpha)
        + alpha * (beta / (beta + 1.0)).ln()
        - nf * (beta + 1.0).ln();
    Ok(ln_p.exp())
}

/// Beta-binomial pmf: the Binomial–Beta marginal, P(k) =
/// C(n,k)·B(k+α, n−k+β)/B(α, β).
pub fn bb_pmf(k: u64, n: u64, alpha: f64, beta: f64) -> Result<f64> {
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(ModelError::Domain("bb_pmf requires alpha, beta > 0".into()));
    }
    if k > n {
        return Err(ModelError::Domain("bb_pmf requires k <= n".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
    let ln_p = ln_choose + ln_beta(kf + alpha, nf - kf + beta) - ln_beta(alpha, beta);
    Ok(ln_p.exp())
}
