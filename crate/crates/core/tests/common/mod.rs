//! Shared fixtures for the integration tests: the standard fiber/detector
//! configuration used throughout and an interceptor tuned against it.

#![allow(dead_code)]

use qkd_core::detection::optimize_p_eb;
use qkd_core::params::{AliceParams, BobParams, EveParams, SystemParams};

/// Standard fiber/detector figures: α = 0.21 dB/km, d_AB = 50 km,
/// p_a = 0.1, p_c = 0.045, p_d = 1.7e−6, p_e = 0.033.
pub fn gys_bob() -> BobParams {
    BobParams {
        afterpulse: [0.0, 0.0],
        efficiency: [0.045, 0.045],
        dark_count: [1.7e-6, 1.7e-6],
        misalignment: 0.033,
    }
}

/// The same detectors with the ±10% split: detector 0 at 0.9×, detector 1 at
/// 1.1× on after-pulse, efficiency, and dark-count rates.
pub fn gys_bob_split() -> BobParams {
    let b = gys_bob();
    BobParams {
        afterpulse: [0.9 * b.afterpulse[0], 1.1 * b.afterpulse[1]],
        efficiency: [0.9 * b.efficiency[0], 1.1 * b.efficiency[1]],
        dark_count: [0.9 * b.dark_count[0], 1.1 * b.dark_count[1]],
        misalignment: b.misalignment,
    }
}

pub fn gys_alice(intensities: Vec<f64>) -> AliceParams {
    AliceParams { intensities, attenuation: 0.21, distance_ab: 50.0 }
}

/// Honest system: no interception.
pub fn gys_theta(intensities: Vec<f64>) -> SystemParams {
    SystemParams { alice: gys_alice(intensities), bob: gys_bob(), eve: EveParams::inactive() }
}

/// System with the standard interceptor: d_AE = 10 km, k = 3, Δ = 0.2, and
/// p_EB chosen to equalize the honest and intercepted single-click gain at the
/// top of the intensity range (λ_max = 10 for this configuration); ≈ 0.2768.
pub fn gys_theta_with_eve(intensities: Vec<f64>) -> SystemParams {
    let alice = gys_alice(intensities);
    let bob = gys_bob();
    let lambda_top = 10.0;
    let p_eb = optimize_p_eb(&alice, &bob, 10.0, 3.0, lambda_top).unwrap();
    let eve = EveParams {
        distance_ae: 10.0,
        channel_eff: p_eb,
        photons_per_pulse: 3.0,
        intercept_fraction: 0.2,
    };
    SystemParams { alice, bob, eve }
}
