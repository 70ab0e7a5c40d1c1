//! After-pulse hidden Markov detection model: the 9-state base block, mode
//! compositions into the full/compact session chains, stationary analysis,
//! HMM-adjusted outcome probabilities and their parameter gradients.

use crate::detection::{
    cell_index, joint_outcome_probs_with_grad, DoubleClickMode, GainErrorStats, OutcomeProbs,
    PulseContext,
};
use crate::error::{ModelError, Result};
use crate::params::{ParamId, SystemParams};

pub const N_STATES: usize = 9;

/// Detector states, labelled (D1, D0) with a hat marking an after-pulse click:
/// S00, S01, S10, S11, S01̂, S1̂0, S11̂, S1̂1, S1̂1̂.
/// Outcome emitted by each state (0:00, 1:01 = D0 only, 2:10, 3:11).
pub const EMIT: [usize; N_STATES] = [0, 1, 2, 3, 1, 2, 3, 3, 3];

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

type Block = [[f64; N_STATES]; N_STATES];

/// The 9×9 after-pulse block T(p, q) for one set of per-pulse click
/// probabilities p = (p00, p01, p10, p11) and after-pulse probabilities
/// q = (q0, q1).
#[derive(Debug, Clone)]
pub struct BaseBlock {
    pub p: [f64; 4],
    pub q: [f64; 2],
    pub t: Block,
}

impl BaseBlock {
    /// Number of structurally non-zero entries (49 for interior p, q).
    pub fn nnz(&self) -> usize {
        self.t.iter().flatten().filter(|&&v| v != 0.0).count()
    }
}

fn marginals(p: [f64; 4]) -> (f64, f64, f64, f64) {
    // (p_{*0}, p_{*1}, p_{0*}, p_{1*}): D0-silent, D0-click, D1-silent, D1-click.
    (p[0] + p[2], p[1] + p[3], p[0] + p[1], p[2] + p[3])
}

fn block_matrix(p: [f64; 4], q: [f64; 2]) -> Block {
    let (q0, q1) = (q[0], q[1]);
    let (p_s0, p_s1, p_0s, p_1s) = marginals(p);
    let (q01, q10, q11) = (q0 * (1.0 - q1), q1 * (1.0 - q0), q0 * q1);
    let q00 = (1.0 - q0) * (1.0 - q1);
    let mut t: Block = [[0.0; N_STATES]; N_STATES];
    let plain = |row: &mut [f64; N_STATES], scale: f64| {
        for o in 0..4 {
            row[o] = scale * p[o];
        }
    };
    // No genuine click available to after-pulse: S00, S01̂, S1̂0, S1̂1̂.
    for r in [0usize, 4, 5, 8] {
        plain(&mut t[r], 1.0);
    }
    // Genuine D0 click: S01 and S1̂1. An after-pulse on D0 pre-empts the next
    // slot's D0 outcome; the genuine D1 marginal selects S01̂ vs S11̂.
    for r in [1usize, 7] {
        plain(&mut t[r], 1.0 - q0);
        t[r][4] = q0 * p_0s;
        t[r][6] = q0 * p_1s;
    }
    // Genuine D1 click: S10 and S11̂.
    for r in [2usize, 6] {
        plain(&mut t[r], 1.0 - q1);
        t[r][5] = q1 * p_s0;
        t[r][7] = q1 * p_s1;
    }
    // Both detectors clicked genuinely: S11.
    plain(&mut t[3], q00);
    t[3][4] = q01 * p_0s;
    t[3][5] = q10 * p_s0;
    t[3][6] = q01 * p_1s;
    t[3][7] = q10 * p_s1;
    t[3][8] = q11;
    t
}

/// ∂T/∂p in direction dp: T is affine in p with the single constant entry q0·q1
/// at (S11 → S1̂1̂).
pub fn block_p_derivative(dp: [f64; 4], q: [f64; 2]) -> Block {
    let mut t = block_matrix(dp, q);
    t[3][8] = 0.0;
    t
}

/// ∂T/∂q_j at (p, q).
pub fn block_q_derivative(p: [f64; 4], q: [f64; 2], j: usize) -> Block {
    let (q0, q1) = (q[0], q[1]);
    let (p_s0, p_s1, p_0s, p_1s) = marginals(p);
    let mut t: Block = [[0.0; N_STATES]; N_STATES];
    if j == 0 {
        for r in [1usize, 7] {
            for o in 0..4 {
                t[r][o] = -p[o];
            }
            t[r][4] = p_0s;
            t[r][6] = p_1s;
        }
        for o in 0..4 {
            t[3][o] = -(1.0 - q1) * p[o];
        }
        t[3][4] = p_0s * (1.0 - q1);
        t[3][5] = -p_s0 * q1;
        t[3][6] = p_1s * (1.0 - q1);
        t[3][7] = -p_s1 * q1;
        t[3][8] = q1;
    } else {
        for r in [2usize, 6] {
            for o in 0..4 {
                t[r][o] = -p[o];
            }
            t[r][5] = p_s0;
            t[r][7] = p_s1;
        }
        for o in 0..4 {
            t[3][o] = -(1.0 - q0) * p[o];
        }
        t[3][4] = -p_0s * q0;
        t[3][5] = p_s0 * (1.0 - q0);
        t[3][6] = -p_1s * q0;
        t[3][7] = p_s1 * (1.0 - q0);
        t[3][8] = q0;
    }
    t
}

pub fn base_block(p: [f64; 4], q: [f64; 2]) -> Result<BaseBlock> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-10 || p.iter().any(|&v| v < 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "base block p must be a probability vector (sum {sum})"
        )));
    }
    if q.iter().any(|&v| !(0.0..1.0).contains(&v)) {
        return Err(ModelError::InvalidParams("after-pulse q must lie in [0,1)".into()));
    }
    let t = block_matrix(p, q);
    for (r, row) in t.iter().enumerate() {
        let rs: f64 = row.iter().sum();
        debug_assert!((rs - 1.0).abs() < 1e-14, "row {r} sums to {rs}");
    }
    Ok(BaseBlock { p, q, t })
}

/// 9×4 map from detector states to observed outcomes: one 1 per row.
#[derive(Debug, Clone)]
pub struct EmissionMap(pub [[f64; 4]; N_STATES]);

impl EmissionMap {
    pub fn nnz(&self) -> usize {
        self.0.iter().flatten().filter(|&&v| v != 0.0).count()
    }
}

pub fn emission_map() -> EmissionMap {
    let mut m = [[0.0; 4]; N_STATES];
    for (s, &o) in EMIT.iter().enumerate() {
        m[s][o] = 1.0;
    }
    EmissionMap(m)
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum()
    }

    /// out = Mᵀ·v
    pub fn transpose_mul(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for r in 0..self.n_rows {
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k] * vr;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r][self.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

/// Block composition over modes: entry ((M,s) → (M',s')) = P(M'|M)·T_{M'}(s,s').
pub fn compose_modes(blocks: &[Block], mode_transition: &[Vec<f64>]) -> Result<Csr> {
    let n_modes = blocks.len();
    if mode_transition.len() != n_modes || mode_transition.iter().any(|r| r.len() != n_modes) {
        return Err(ModelError::Input(format!(
            "mode transition must be {n_modes}×{n_modes}"
        )));
    }
    for (m, row) in mode_transition.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
            return Err(ModelError::Input(format!(
                "mode transition row {m} is not stochastic (sum {s})"
            )));
        }
    }
    let n = n_modes * N_STATES;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for m in 0..n_modes {
        for s in 0..N_STATES {
            for (mp, &w) in mode_transition[m].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for sp in 0..N_STATES {
                    let t = blocks[mp][s][sp];
                    if t != 0.0 {
                        col_idx.push(mp * N_STATES + sp);
                        values.push(w * t);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(Csr { n_rows: n, n_cols: n, row_ptr, col_idx, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainForm {
    /// One mode per (a, b, x, e, λ): 144·N_λ states.
    Full,
    /// One mode per (m, λ) with x, e marginalized click probabilities: 18·N_λ states.
    Compact,
}

#[derive(Debug, Clone, Copy)]
pub struct ModeInfo {
    /// Basis-match bit m = [a == b].
    pub m: usize,
    pub lambda: usize,
    pub weight: f64,
}

/// The session chain: mode labeling plus the sparse row-stochastic matrix.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    pub form: ChainForm,
    pub n_lambda: usize,
    pub modes: Vec<ModeInfo>,
    pub matrix: Csr,
}

impl TransitionModel {
    pub fn n_states(&self) -> usize {
        self.modes.len() * N_STATES
    }
}

/// Per-pulse click probabilities for a (m, λ) cell with e (and optionally x)
/// marginalized out, plus ∂p/∂parameter for each requested parameter.
fn marginal_joint(
    theta: &SystemParams,
    m: u8,
    x_fixed: Option<u8>,
    lambda_index: usize,
    ids: &[ParamId],
) -> Result<([f64; 4], Vec<[f64; 4]>)> {
    let delta = theta.eve.intercept_fraction;
    let mut p = [0.0; 4];
    let mut dps = vec![[0.0; 4]; ids.len()];
    let xs: &[u8] = match x_fixed {
        Some(0) => &[0],
        Some(_) => &[1],
        None => &[0, 1],
    };
    let w_x = 1.0 / xs.len() as f64;
    for &x in xs {
        for e in 0..2u8 {
            let w_e = if e == 1 { delta } else { 1.0 - delta };
            if w_e == 0.0 && ids.is_empty() {
                continue;
            }
            let ctx = PulseContext { a: m, b: 1, x, e, lambda_index };
            let (joint, grads) = joint_outcome_probs_with_grad(theta, &ctx, ids)?;
            for o in 0..4 {
                p[o] += w_x * w_e * joint[o];
                for (j, id) in ids.iter().enumerate() {
                    let mut d = w_x * w_e * grads[j][o];
                    if *id == ParamId::Delta {
                        d += w_x * if e == 1 { joint[o] } else { -joint[o] };
                    }
                    dps[j][o] += d;
                }
            }
        }
    }
    Ok((p, dps))
}

/// Builds the session chain for θ in the requested form. Mode transitions are
/// independent of the current mode (fresh uniform/Bernoulli draws per pulse),
/// so every mode-transition row equals the mode weight vector.
pub fn full_transition(theta: &SystemParams, form: ChainForm) -> Result<TransitionModel> {
    theta.validate()?;
    let n_l = theta.n_lambda();
    let q = theta.bob.afterpulse;
    let delta = theta.eve.intercept_fraction;
    let mut modes = Vec::new();
    let mut blocks = Vec::new();
    match form {
        ChainForm::Full => {
            for a in 0..2u8 {
                for b in 0..2u8 {
                    for x in 0..2u8 {
                        for e in 0..2u8 {
                            for l in 0..n_l {
                                let w_e = if e == 1 { delta } else { 1.0 - delta };
                                let weight = 0.125 * w_e / n_l as f64;
                                let ctx = PulseContext { a, b, x, e, lambda_index: l };
                                let (p, _) = joint_outcome_probs_with_grad(theta, &ctx, &[])?;
                                modes.push(ModeInfo { m: usize::from(a == b), lambda: l, weight });
                                blocks.push(block_matrix(p, q));
                            }
                        }
                    }
                }
            }
        }
        ChainForm::Compact => {
            for m in 0..2u8 {
                for l in 0..n_l {
                    let (p, _) = marginal_joint(theta, m, None, l, &[])?;
                    modes.push(ModeInfo { m: m as usize, lambda: l, weight: 0.5 / n_l as f64 });
                    blocks.push(block_matrix(p, q));
                }
            }
        }
    }
    let weights: Vec<f64> = modes.iter().map(|m| m.weight).collect();
    let mode_transition = vec![weights; modes.len()];
    let matrix = compose_modes(&blocks, &mode_transition)?;
    Ok(TransitionModel { form, n_lambda: n_l, modes, matrix })
}

#[derive(Debug, Clone)]
pub struct StationaryDist {
    pub v: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Stationary distribution by power iteration on Tᵀ from a uniform start,
/// normalized to Σ v̄ = 1; stops when ‖Tᵀv̄ − v̄‖∞ < tol.
pub fn stationary(model: &TransitionModel, tol: f64, max_iter: usize) -> Result<StationaryDist> {
    let n = model.matrix.n_rows;
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        model.matrix.transpose_mul(&v, &mut next);
        let sum: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= sum;
        }
        residual = v
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual < tol {
            return Ok(StationaryDist { v, residual, iterations: it });
        }
    }
    Err(ModelError::Convergence(
        format!("stationary distribution did not reach {tol:e} in {max_iter} iterations"),
        residual,
    ))
}

/// Folds a stationary vector into the 8·N_λ outcome layout via the emission map
/// and the chain's mode labels.
pub fn project_outcomes(model: &TransitionModel, v: &[f64]) -> Vec<f64> {
    let n_l = model.n_lambda;
    let mut cells = vec![0.0; 8 * n_l];
    for (mi, info) in model.modes.iter().enumerate() {
        for s in 0..N_STATES {
            cells[cell_index(info.m, EMIT[s], info.lambda, n_l)] += v[mi * N_STATES + s];
        }
    }
    cells
}

/// HMM-adjusted observable probability vector P̂(θ), from the compact chain.
pub fn hmm_prob_vector(theta: &SystemParams) -> Result<OutcomeProbs> {
    let model = full_transition(theta, ChainForm::Compact)?;
    let st = stationary(&model, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(OutcomeProbs {
        n_lambda: model.n_lambda,
        cells: project_outcomes(&model, &st.v),
        grads: Vec::new(),
    })
}

/// P̂(θ) with ∂P̂/∂parameter for each requested parameter, via the adjoint
/// iteration d ← r + Tᵀd − (1ᵀd)·v̄ with r = (∂Tᵀ/∂ξ)·v̄, which solves
/// (I − Tᵀ + v̄·1ᵀ)·d = r while preserving Σd = 0.
pub fn hmm_prob_vector_with_grad(theta: &SystemParams, ids: &[ParamId]) -> Result<OutcomeProbs> {
    if ids.is_empty() {
        return hmm_prob_vector(theta);
    }
    theta.validate()?;
    let n_l = theta.n_lambda();
    let q = theta.bob.afterpulse;
    let n_modes = 2 * n_l;
    let w = 0.5 / n_l as f64;

    let mut blocks: Vec<Block> = Vec::with_capacity(n_modes);
    let mut dblocks: Vec<Vec<Block>> = vec![Vec::with_capacity(n_modes); ids.len()];
    let mut modes = Vec::with_capacity(n_modes);
    for m in 0..2u8 {
        for l in 0..n_l {
            let (p, dps) = marginal_joint(theta, m, None, l, ids)?;
            blocks.push(block_matrix(p, q));
            modes.push((m as usize, l));
            for (j, id) in ids.iter().enumerate() {
                let mut db = block_p_derivative(dps[j], q);
                if let ParamId::Pa(det) = *id {
                    let dq = block_q_derivative(p, q, det);
                    for s in 0..N_STATES {
                        for sp in 0..N_STATES {
                            db[s][sp] += dq[s][sp];
                        }
                    }
                }
                dblocks[j].push(db);
            }
        }
    }

    // Tᵀ·d exploits the rank-one mode structure: (Tᵀd)(M',s') = w·(ūᵀ T_{M'})(s')
    // with ū(s) = Σ_M d(M,s).
    let apply_t = |d: &[f64], out: &mut [f64]| {
        let mut u = [0.0; N_STATES];
        for mi in 0..n_modes {
            for s in 0..N_STATES {
                u[s] += d[mi * N_STATES + s];
            }
        }
        for mi in 0..n_modes {
            for sp in 0..N_STATES {
                let mut acc = 0.0;
                for s in 0..N_STATES {
                    acc += u[s] * blocks[mi][s][sp];
                }
                out[mi * N_STATES + sp] = w * acc;
            }
        }
    };

    let n = n_modes * N_STATES;
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..DEFAULT_MAX_ITER {
        apply_t(&v, &mut next);
        let sum: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= sum;
        }
        let res = v.iter().zip(next.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if res < DEFAULT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ModelError::Convergence("stationary distribution (compact chain)".into(), f64::NAN));
    }

    let mut u = [0.0; N_STATES];
    for mi in 0..n_modes {
        for s in 0..N_STATES {
            u[s] += v[mi * N_STATES + s];
        }
    }

    let project = |vec: &[f64]| -> Vec<f64> {
        let mut cells = vec![0.0; 8 * n_l];
        for (mi, &(m, l)) in modes.iter().enumerate() {
            for s in 0..N_STATES {
                cells[cell_index(m, EMIT[s], l, n_l)] += vec[mi * N_STATES + s];
            }
        }
        cells
    };

    let cells = project(&v);
    let mut grads = Vec::with_capacity(ids.len());
    for j in 0..ids.len() {
        // r = (∂Tᵀ/∂ξ)·v̄, again rank-one in the modes.
        let mut r = vec![0.0; n];
        for mi in 0..n_modes {
            for sp in 0..N_STATES {
                let mut acc = 0.0;
                for s in 0..N_STATES {
                    acc += u[s] * dblocks[j][mi][s][sp];
                }
                r[mi * N_STATES + sp] = w * acc;
            }
        }
        let scale = 1.0 + r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let mut d = r.clone();
        let mut td = vec![0.0; n];
        let mut ok = false;
        let mut res = f64::INFINITY;
        for _ in 0..DEFAULT_MAX_ITER {
            apply_t(&d, &mut td);
            let sd: f64 = d.iter().sum();
            res = 0.0;
            for i in 0..n {
                let nd = r[i] + td[i] - sd * v[i];
                res = res.max((nd - d[i]).abs());
                td[i] = nd;
            }
            std::mem::swap(&mut d, &mut td);
            if res < 1e-13 * scale {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(ModelError::Convergence(
                format!("stationary gradient for {}", ids[j].name()),
                res,
            ));
        }
        grads.push((ids[j], project(&d)));
    }

    Ok(OutcomeProbs { n_lambda: n_l, cells, grads })
}

/// Gradient of the HMM probability vector for each requested parameter.
pub fn stationary_grad(theta: &SystemParams, ids: &[ParamId]) -> Result<Vec<(ParamId, Vec<f64>)>> {
    Ok(hmm_prob_vector_with_grad(theta, ids)?.grads)
}

/// State-marginal stationary distribution u of the mode-averaged 9×9 block:
/// because T is affine in p and mode draws are independent, u(s) = Σ_M v̄(M,s)
/// is exactly the stationary vector of T(p̄, q) with p̄ the global average
/// click probabilities, and v̄(M,s) = w(M)·(uᵀT_M)(s).
pub fn averaged_stationary(theta: &SystemParams) -> Result<[f64; N_STATES]> {
    let n_l = theta.n_lambda();
    let q = theta.bob.afterpulse;
    let mut p_bar = [0.0; 4];
    for m in 0..2u8 {
        for l in 0..n_l {
            let (p, _) = marginal_joint(theta, m, None, l, &[])?;
            for o in 0..4 {
                p_bar[o] += 0.5 / n_l as f64 * p[o];
            }
        }
    }
    let t = block_matrix(p_bar, q);
    let mut u = [1.0 / N_STATES as f64; N_STATES];
    for _ in 0..DEFAULT_MAX_ITER {
        let mut nu = [0.0; N_STATES];
        for s in 0..N_STATES {
            for sp in 0..N_STATES {
                nu[sp] += u[s] * t[s][sp];
            }
        }
        let sum: f64 = nu.iter().sum();
        for x in nu.iter_mut() {
            *x /= sum;
        }
        let res = u.iter().zip(nu.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = nu;
        if res < DEFAULT_TOL {
            return Ok(u);
        }
    }
    Err(ModelError::Convergence("averaged-block stationary".into(), f64::NAN))
}

/// HMM-adjusted gain and error rate for one (m, λ) cell: the outcome law for a
/// pulse in context c is (uᵀ T_c) pushed through the emission map, with u from
/// [`averaged_stationary`] — exact, by the same lumping argument.
pub fn hmm_gain_error(
    theta: &SystemParams,
    m: u8,
    lambda_index: usize,
    mode: DoubleClickMode,
) -> Result<GainErrorStats> {
    let u = averaged_stationary(theta)?;
    let q = theta.bob.afterpulse;
    let mut gain = 0.0;
    let mut eq = 0.0;
    for x in 0..2u8 {
        let (p, _) = marginal_joint(theta, m, Some(x), lambda_index, &[])?;
        let t = block_matrix(p, q);
        let mut probs = [0.0; 4];
        for s in 0..N_STATES {
            for sp in 0..N_STATES {
                probs[EMIT[sp]] += u[s] * t[s][sp];
            }
        }
        gain += 0.5 * (probs[1] + probs[2]);
        eq += 0.5 * if x == 0 { probs[2] } else { probs[1] };
        if mode == DoubleClickMode::CountAsGainAndError {
            gain += 0.5 * probs[3];
            eq += 0.5 * probs[3];
        }
    }
    let delta = if gain > 0.0 { Some(eq / gain) } else { None };
    Ok(GainErrorStats { q: gain, eq, delta })
}
