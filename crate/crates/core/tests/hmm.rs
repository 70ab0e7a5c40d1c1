//! After-pulse Markov machinery: the 9-state block, its derivatives, mode
//! composition, stationary distributions (against a dense linear-algebra
//! oracle), gradients, and the iid collapse.

mod common;

use approx::assert_relative_eq;
use common::gys_theta_with_eve;
use qkd_core::detection::{cell_index, gain_error_stats, iid_prob_vector, DoubleClickMode};
use qkd_core::hmm::*;
use qkd_core::params::ParamId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_p(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut p = [0.0; 4];
    let mut s = 0.0;
    for v in &mut p {
        *v = rng.gen_range(0.01..1.0);
        s += *v;
    }
    for v in &mut p {
        *v /= s;
    }
    p
}

/// Dense Gaussian elimination with partial pivoting: solves A·x = b.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Stationary distribution of a dense row-stochastic matrix by solving
/// (Tᵀ − I)v = 0 with Σv = 1 replacing the last equation.
fn dense_stationary(t: &[Vec<f64>]) -> Vec<f64> {
    let n = t.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = t[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    dense_solve(a, b)
}

#[test]
fn base_block_without_afterpulsing_repeats_the_click_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let p = random_p(&mut rng);
        let b = base_block(p, [0.0, 0.0]).unwrap();
        for row in &b.t {
            for o in 0..4 {
                assert_relative_eq!(row[o], p[o], max_relative = 1e-15);
            }
            for s in 4..N_STATES {
                assert_eq!(row[s], 0.0);
            }
        }
    }
}

#[test]
fn base_block_structure_example() {
    let p = [0.1, 0.7, 0.1, 0.1];
    let q = [0.1, 0.1];
    let b = base_block(p, q).unwrap();
    // Every row is a probability distribution.
    for (r, row) in b.t.iter().enumerate() {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-14, "row {r} sums to {s}");
        assert!(row.iter().all(|&v| v >= 0.0));
    }
    // Structural non-zeros: 4 per hat-free row (×4), 6 per single-genuine-click
    // row (×4), 9 for the double-click row.
    assert_eq!(b.nnz(), 49);
    // Spot-check the double-click row.
    assert_relative_eq!(b.t[3][8], 0.01, max_relative = 1e-14); // q0·q1
    assert_relative_eq!(b.t[3][0], 0.81 * 0.1, max_relative = 1e-13); // (1−q0)(1−q1)·p00
    // Validation catches bad inputs.
    assert!(base_block([0.3, 0.3, 0.3, 0.3], q).is_err());
    assert!(base_block(p, [1.0, 0.0]).is_err());
}

#[test]
fn base_block_is_exactly_lumpable_per_detector() {
    // Group states by the D0 component: silent {S00,S10,S1̂0}, genuine click
    // {S01,S11,S1̂1}, after-pulse click {S01̂,S11̂,S1̂1̂}. The lumped chain must
    // be the 3-state single-detector after-pulse chain.
    let groups: [usize; N_STATES] = [0, 1, 0, 1, 2, 0, 2, 1, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let p = random_p(&mut rng);
        let q = [rng.gen_range(0.0..0.9), rng.gen_range(0.0..0.9)];
        let b = base_block(p, q).unwrap();
        let p_click = p[1] + p[3]; // P(D0 genuine click)
        let expect = [
            [1.0 - p_click, p_click, 0.0],
            [(1.0 - q[0]) * (1.0 - p_click), (1.0 - q[0]) * p_click, q[0]],
            [1.0 - p_click, p_click, 0.0],
        ];
        for s in 0..N_STATES {
            let mut lumped = [0.0; 3];
            for sp in 0..N_STATES {
                lumped[groups[sp]] += b.t[s][sp];
            }
            for g in 0..3 {
                assert!(
                    (lumped[g] - expect[groups[s]][g]).abs() < 1e-13,
                    "state {s} → group {g}: {} vs {}",
                    lumped[g],
                    expect[groups[s]][g]
                );
            }
        }
    }
}

#[test]
fn block_p_derivative_is_the_affine_difference() {
    // T is affine in p: T(p + t·(p2 − p1)) = T(p1) + t·L(p2 − p1).
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..50 {
        let p1 = random_p(&mut rng);
        let p2 = random_p(&mut rng);
        let q = [rng.gen_range(0.0..0.9), rng.gen_range(0.0..0.9)];
        let dp = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2], p2[3] - p1[3]];
        let l = block_p_derivative(dp, q);
        let t1 = base_block(p1, q).unwrap().t;
        let t2 = base_block(p2, q).unwrap().t;
        for s in 0..N_STATES {
            for sp in 0..N_STATES {
                assert!(
                    (t2[s][sp] - t1[s][sp] - l[s][sp]).abs() < 1e-13,
                    "affinity broken at ({s},{sp})"
                );
            }
        }
    }
}

#[test]
fn block_q_derivative_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..50 {
        let p = random_p(&mut rng);
        let q = [rng.gen_range(0.01..0.8), rng.gen_range(0.01..0.8)];
        for j in 0..2 {
            let d = block_q_derivative(p, q, j);
            let h = 1e-6;
            let mut qp = q;
            qp[j] += h;
            let mut qm = q;
            qm[j] -= h;
            let tp = base_block(p, qp).unwrap().t;
            let tm = base_block(p, qm).unwrap().t;
            for s in 0..N_STATES {
                for sp in 0..N_STATES {
                    let fd = (tp[s][sp] - tm[s][sp]) / (2.0 * h);
                    assert!(
                        (d[s][sp] - fd).abs() < 1e-8,
                        "∂T/∂q{j} at ({s},{sp}): {} vs {fd}",
                        d[s][sp]
                    );
                }
            }
        }
    }
}

#[test]
fn emission_map_structure() {
    let em = emission_map();
    assert_eq!(em.nnz(), N_STATES);
    for (s, &o) in EMIT.iter().enumerate() {
        assert_eq!(em.0[s][o], 1.0);
        let row_sum: f64 = em.0[s].iter().sum();
        assert_eq!(row_sum, 1.0);
    }
    // Hats emit the same outcome as genuine clicks.
    assert_eq!(EMIT, [0, 1, 2, 3, 1, 2, 3, 3, 3]);
}

#[test]
fn compose_single_mode_is_the_block_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let p = random_p(&mut rng);
    let q = [0.15, 0.25];
    let b = base_block(p, q).unwrap();
    let csr = compose_modes(&[b.t], &[vec![1.0]]).unwrap();
    assert_eq!(csr.n_rows, N_STATES);
    let dense = csr.to_dense();
    for s in 0..N_STATES {
        for sp in 0..N_STATES {
            assert_eq!(dense[s][sp], b.t[s][sp]);
        }
    }
    // Row-stochastic validation rejects a broken mode matrix.
    assert!(compose_modes(&[b.t], &[vec![0.7]]).is_err());
}

#[test]
fn compose_two_modes_weights_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let (pa, pb) = (random_p(&mut rng), random_p(&mut rng));
    let q = [0.1, 0.2];
    let ta = base_block(pa, q).unwrap().t;
    let tb = base_block(pb, q).unwrap().t;
    let w = vec![0.3, 0.7];
    let csr = compose_modes(&[ta, tb], &[w.clone(), w.clone()]).unwrap();
    assert_eq!(csr.n_rows, 2 * N_STATES);
    let dense = csr.to_dense();
    for (mi, t) in [(0, &ta), (1, &tb)] {
        for s in 0..N_STATES {
            // Row (M, s): entry into (M', s') is w(M')·T_{M'}(s, s').
            for (mj, tj) in [(0usize, &ta), (1, &tb)] {
                for sp in 0..N_STATES {
                    let got = dense[mi * N_STATES + s][mj * N_STATES + sp];
                    assert_relative_eq!(got, w[mj] * tj[s][sp], max_relative = 1e-14, epsilon = 1e-16);
                }
            }
            let _ = t;
            let rs = csr.row_sum(mi * N_STATES + s);
            assert!((rs - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn full_and_compact_chain_sizes() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    let full = full_transition(&theta, ChainForm::Full).unwrap();
    let compact = full_transition(&theta, ChainForm::Compact).unwrap();
    assert_eq!(full.n_states(), 288);
    assert_eq!(compact.n_states(), 36);
    assert_eq!(full.modes.len(), 32);
    assert_eq!(compact.modes.len(), 4);
    // Mode weights sum to one, and every row is stochastic.
    for model in [&full, &compact] {
        let wsum: f64 = model.modes.iter().map(|m| m.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        for r in 0..model.n_states() {
            assert!((model.matrix.row_sum(r) - 1.0).abs() < 1e-12, "row {r}");
        }
    }
}

#[test]
fn zero_interception_removes_intercepted_modes() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.1, 0.1];
    theta.eve.intercept_fraction = 0.0;
    let full = full_transition(&theta, ChainForm::Full).unwrap();
    // Mode order is (a, b, x, e, λ): e = 1 modes carry zero inbound weight, so
    // their columns are empty.
    let n_l = theta.n_lambda();
    let dense = full.matrix.to_dense();
    for (mi, info) in full.modes.iter().enumerate() {
        let e = (mi / n_l) % 2;
        if e == 1 {
            assert_eq!(info.weight, 0.0);
            for row in &dense {
                for sp in 0..N_STATES {
                    assert_eq!(row[mi * N_STATES + sp], 0.0);
                }
            }
        }
    }
}

#[test]
fn stationary_of_uniform_rows_is_the_row() {
    // With q = 0 every row of the block is the click law itself, so the chain
    // is i.i.d. and the stationary vector is that row.
    let p = [0.4, 0.3, 0.2, 0.1];
    let b = base_block(p, [0.0, 0.0]).unwrap();
    let csr = compose_modes(&[b.t], &[vec![1.0]]).unwrap();
    let model = TransitionModel {
        form: ChainForm::Compact,
        n_lambda: 1,
        modes: vec![ModeInfo { m: 0, lambda: 0, weight: 1.0 }],
        matrix: csr,
    };
    let st = stationary(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(st.residual < 1e-12);
    for o in 0..4 {
        assert_relative_eq!(st.v[o], p[o], max_relative = 1e-10, epsilon = 1e-12);
    }
    for s in 4..N_STATES {
        assert!(st.v[s].abs() < 1e-12);
    }
}

#[test]
fn stationary_matches_dense_linear_solver() {
    let mut theta = gys_theta_with_eve(vec![0.3]);
    theta.bob.afterpulse = [0.12, 0.08];
    let model = full_transition(&theta, ChainForm::Compact).unwrap();
    let st = stationary(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(st.residual < 1e-12);
    let dense = model.matrix.to_dense();
    let oracle = dense_stationary(&dense);
    for (i, (&a, &b)) in st.v.iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-10, "state {i}: {a} vs {b}");
    }
    let total: f64 = st.v.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn compact_chain_marginalizes_the_full_chain() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    let full = full_transition(&theta, ChainForm::Full).unwrap();
    let compact = full_transition(&theta, ChainForm::Compact).unwrap();
    let vf = stationary(&full, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let vc = stationary(&compact, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let pf = project_outcomes(&full, &vf.v);
    let pc = project_outcomes(&compact, &vc.v);
    for i in 0..pf.len() {
        assert!((pf[i] - pc[i]).abs() < 1e-12, "cell {i}: {} vs {}", pf[i], pc[i]);
    }
}

#[test]
fn hmm_without_afterpulsing_collapses_to_iid() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.0, 0.0];
    let hmm = hmm_prob_vector(&theta).unwrap();
    let iid = iid_prob_vector(&theta).unwrap();
    for i in 0..hmm.cells.len() {
        assert!(
            (hmm.cells[i] - iid.cells[i]).abs() < 1e-12,
            "cell {i}: {} vs {}",
            hmm.cells[i],
            iid.cells[i]
        );
    }
}

#[test]
fn click_mass_grows_with_afterpulse_rate() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    let click_mass = |theta: &qkd_core::params::SystemParams| -> f64 {
        let p = hmm_prob_vector(theta).unwrap();
        let n_l = p.n_lambda;
        let mut mass = 0.0;
        for m in 0..2 {
            for o in 1..4 {
                for l in 0..n_l {
                    mass += p.cells[cell_index(m, o, l, n_l)];
                }
            }
        }
        mass
    };
    let mut prev = -1.0;
    for &pa in &[0.0, 0.02, 0.05, 0.1, 0.2, 0.4] {
        theta.bob.afterpulse = [pa, pa];
        let mass = click_mass(&theta);
        assert!(mass > prev, "click mass not increasing at p_a={pa}: {mass} <= {prev}");
        prev = mass;
    }
}

#[test]
fn hmm_gradients_match_finite_differences() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    let ids = [
        ParamId::DAe,
        ParamId::PEb,
        ParamId::K,
        ParamId::Delta,
        ParamId::Alpha,
        ParamId::DAb,
        ParamId::Lambda(0),
        ParamId::Pc(0),
        ParamId::Pc(1),
        ParamId::Pd(0),
        ParamId::Pd(1),
        ParamId::Pe,
        ParamId::Pa(0),
        ParamId::Pa(1),
    ];
    let probs = hmm_prob_vector_with_grad(&theta, &ids).unwrap();
    for (id, grad) in &probs.grads {
        let v0 = id.get(&theta);
        let h = 1e-6 * (1.0 + v0.abs());
        let mut tp = theta.clone();
        id.set(&mut tp, v0 + h);
        let up = hmm_prob_vector(&tp).unwrap().cells;
        id.set(&mut tp, v0 - h);
        let dn = hmm_prob_vector(&tp).unwrap().cells;
        let mut grad_sum = 0.0;
        for i in 0..grad.len() {
            let fd = (up[i] - dn[i]) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() < 1e-5 * grad[i].abs().max(fd.abs()) + 1e-8,
                "{} cell {i}: analytic {} vs fd {fd}",
                id.name(),
                grad[i]
            );
            grad_sum += grad[i];
        }
        // Probabilities sum to one, so every gradient sums to zero.
        assert!(grad_sum.abs() < 1e-12, "{}: Σ grad = {grad_sum}", id.name());
    }
}

#[test]
fn eve_gradients_vanish_without_interception() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    theta.eve.intercept_fraction = 0.0;
    let grads = stationary_grad(&theta, &[ParamId::DAe, ParamId::PEb, ParamId::K]).unwrap();
    for (id, grad) in &grads {
        for (i, &g) in grad.iter().enumerate() {
            assert!(g.abs() < 1e-13, "{} cell {i}: {g}", id.name());
        }
    }
}

#[test]
fn averaged_stationary_is_the_state_marginal() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    let u = averaged_stationary(&theta).unwrap();
    let model = full_transition(&theta, ChainForm::Compact).unwrap();
    let st = stationary(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let mut marginal = [0.0; N_STATES];
    for mi in 0..model.modes.len() {
        for s in 0..N_STATES {
            marginal[s] += st.v[mi * N_STATES + s];
        }
    }
    for s in 0..N_STATES {
        assert!((u[s] - marginal[s]).abs() < 1e-10, "state {s}: {} vs {}", u[s], marginal[s]);
    }
}

#[test]
fn hmm_gain_error_collapses_to_iid_without_afterpulsing() {
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.0, 0.0];
    for mode in [DoubleClickMode::Exclusive, DoubleClickMode::CountAsGainAndError] {
        for m in 0..2u8 {
            for l in 0..2usize {
                let h = hmm_gain_error(&theta, m, l, mode).unwrap();
                let i = gain_error_stats(&theta, m, l, mode).unwrap();
                assert!((h.q - i.q).abs() < 1e-12);
                assert!((h.eq - i.eq).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn hmm_gain_error_consistent_with_projected_cells() {
    // The x-marginalized gain must agree with the (m, λ) click mass of the
    // projected probability vector.
    let mut theta = gys_theta_with_eve(vec![0.1, 0.48]);
    theta.bob.afterpulse = [0.09, 0.11];
    let p = hmm_prob_vector(&theta).unwrap();
    let n_l = p.n_lambda;
    for m in 0..2u8 {
        for l in 0..n_l {
            let s = hmm_gain_error(&theta, m, l, DoubleClickMode::Exclusive).unwrap();
            // cells are weighted by P(m)·P(λ) = 0.5/n_λ; gains are conditional.
            let w = 0.5 / n_l as f64;
            let cell_gain = (p.cells[cell_index(m as usize, 1, l, n_l)]
                + p.cells[cell_index(m as usize, 2, l, n_l)])
                / w;
            assert!(
                (s.q - cell_gain).abs() < 1e-10,
                "(m={m}, λ={l}): {} vs {}",
                s.q,
                cell_gain
            );
            assert!(s.eq <= s.q + 1e-15);
        }
    }
}
