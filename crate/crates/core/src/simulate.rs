//! Pulse-level Monte Carlo: i.i.d. sessions, the after-pulse overlay, and
//! count aggregation into the shared outcome-cell layout.

use crate::detection::{beamsplit_prob, cell_index};
use crate::error::{ModelError, Result};
use crate::params::{channel_eff, Model, SystemParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

/// One simulated pulse: click bits plus the settings that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub t: u64,
    pub d0: u8,
    pub d1: u8,
    pub lambda_index: usize,
    pub a: u8,
    pub b: u8,
    pub x: u8,
    pub e: u8,
}

impl PulseRecord {
    /// Outcome index in the shared layout (0:00, 1:01 = D0 only, 2:10, 3:11).
    pub fn outcome(&self) -> usize {
        (2 * self.d1 + self.d0) as usize
    }

    /// Basis-match bit m = [a == b].
    pub fn m(&self) -> usize {
        usize::from(self.a == self.b)
    }
}

/// Counts per (m, outcome, λ) cell, aligned with the probability-vector layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub n_lambda: usize,
    pub cells: Vec<u64>,
    pub total: u64,
}

impl OutcomeCounts {
    pub fn new(n_lambda: usize) -> Self {
        OutcomeCounts { n_lambda, cells: vec![0; 8 * n_lambda], total: 0 }
    }

    pub fn add(&mut self, rec: &PulseRecord) {
        self.cells[cell_index(rec.m(), rec.outcome(), rec.lambda_index, self.n_lambda)] += 1;
        self.total += 1;
    }

    /// Associative merge; aggregation order never affects the result.
    pub fn merge(&mut self, other: &OutcomeCounts) {
        assert_eq!(self.n_lambda, other.n_lambda);
        for (a, b) in self.cells.iter_mut().zip(other.cells.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64 / self.total as f64).collect()
    }
}

/// Precomputed sampling constants for one θ.
struct PulseSampler {
    n_lambda: usize,
    intensities: Vec<f64>,
    p_ab: f64,
    p_ae: f64,
    p_eb: f64,
    /// Interception size, floored to an integer for the count arithmetic.
    k: u64,
    delta: f64,
    p_e: f64,
    p_c: [f64; 2],
    p_d: [f64; 2],
}

impl PulseSampler {
    fn new(theta: &SystemParams) -> Result<Self> {
        theta.validate()?;
        Ok(PulseSampler {
            n_lambda: theta.n_lambda(),
            intensities: theta.alice.intensities.clone(),
            p_ab: theta.alice.p_ab(),
            p_ae: channel_eff(theta.alice.attenuation, theta.eve.distance_ae),
            p_eb: theta.eve.channel_eff,
            k: theta.eve.photons_per_pulse.floor() as u64,
            delta: theta.eve.intercept_fraction,
            p_e: theta.bob.misalignment,
            p_c: theta.bob.efficiency,
            p_d: theta.bob.dark_count,
        })
    }

    fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
        if n == 0 || p == 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n, p).expect("validated p").sample(rng)
    }

    fn pulse(&self, t: u64, rng: &mut ChaCha8Rng) -> PulseRecord {
        let l = rng.gen_range(0..self.n_lambda);
        let x = u8::from(rng.gen_bool(0.5));
        let a = u8::from(rng.gen_bool(0.5));
        let b = u8::from(rng.gen_bool(0.5));
        let e = u8::from(self.delta > 0.0 && rng.gen_bool(self.delta));

        let n_a = Poisson::new(self.intensities[l]).expect("positive intensity").sample(rng) as u64;
        let n_b = if e == 1 {
            let n_e = Self::binomial(rng, n_a, self.p_ae);
            let kept = n_e.saturating_sub(self.k);
            Self::binomial(rng, kept, self.p_eb)
        } else {
            Self::binomial(rng, n_a, self.p_ab)
        };
        debug_assert!(n_b <= n_a, "detected photons exceed emitted photons");

        let p_0 = beamsplit_prob(0, x, a, b, self.p_e);
        let n_0 = Self::binomial(rng, n_b, p_0);
        let n_1 = n_b - n_0;

        let mut clicks = [0u8; 2];
        for (j, &n_j) in [n_0, n_1].iter().enumerate() {
            let dark = rng.gen_bool(self.p_d[j]);
            let detected = Self::binomial(rng, n_j, self.p_c[j]);
            clicks[j] = u8::from(dark || detected >= 1);
        }
        PulseRecord { t, d0: clicks[0], d1: clicks[1], lambda_index: l, a, b, x, e }
    }
}

fn substream(base: &ChaCha8Rng, t: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(t + 1);
    rng
}

/// Streams N i.i.d. pulses to `f`. Each pulse draws from its own RNG substream
/// of the seed, so chunked generation reproduces the serial stream bit-exactly.
pub fn for_each_pulse_iid(
    n: u64,
    theta: &SystemParams,
    seed: u64,
    mut f: impl FnMut(PulseRecord),
) -> Result<()> {
    let sampler = PulseSampler::new(theta)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..n {
        let mut rng = substream(&base, t);
        f(sampler.pulse(t, &mut rng));
    }
    Ok(())
}

/// Streams N after-pulsed pulses: the i.i.d. draw per pulse, then an
/// after-pulse on detector j when it clicked at t−1 and that click was not
/// itself an after-pulse. The overlay candidates are drawn from the same
/// per-pulse substream after the genuine draws.
pub fn for_each_pulse_hmm(
    n: u64,
    theta: &SystemParams,
    seed: u64,
    mut f: impl FnMut(PulseRecord),
) -> Result<()> {
    let sampler = PulseSampler::new(theta)?;
    let p_a = theta.bob.afterpulse;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut prev_click = [false; 2];
    let mut prev_ap = [false; 2];
    for t in 0..n {
        let mut rng = substream(&base, t);
        let mut rec = sampler.pulse(t, &mut rng);
        // Candidate after-pulse flips are always drawn so the substream use per
        // pulse stays fixed regardless of history.
        let cand = [
            p_a[0] > 0.0 && rng.gen_bool(p_a[0]),
            p_a[1] > 0.0 && rng.gen_bool(p_a[1]),
        ];
        let mut ap = [false; 2];
        for j in 0..2 {
            ap[j] = prev_click[j] && !prev_ap[j] && cand[j];
        }
        prev_click = [rec.d0 == 1 || ap[0], rec.d1 == 1 || ap[1]];
        prev_ap = ap;
        rec.d0 |= u8::from(ap[0]);
        rec.d1 |= u8::from(ap[1]);
        f(rec);
    }
    Ok(())
}

/// Collects a whole i.i.d. session in memory (debugging / small N).
pub fn simulate_iid(n: u64, theta: &SystemParams, seed: u64) -> Result<Vec<PulseRecord>> {
    let mut out = Vec::with_capacity(n as usize);
    for_each_pulse_iid(n, theta, seed, |r| out.push(r))?;
    Ok(out)
}

/// Collects a whole after-pulsed session in memory.
pub fn simulate_hmm(n: u64, theta: &SystemParams, seed: u64) -> Result<Vec<PulseRecord>> {
    let mut out = Vec::with_capacity(n as usize);
    for_each_pulse_hmm(n, theta, seed, |r| out.push(r))?;
    Ok(out)
}

/// Streams a session directly into outcome counts.
pub fn simulate_counts(n: u64, theta: &SystemParams, seed: u64, model: Model) -> Result<OutcomeCounts> {
    let mut counts = OutcomeCounts::new(theta.n_lambda());
    match model {
        Model::Iid => for_each_pulse_iid(n, theta, seed, |r| counts.add(&r))?,
        Model::Hmm => for_each_pulse_hmm(n, theta, seed, |r| counts.add(&r))?,
    }
    Ok(counts)
}

/// Aggregates records into per-(m, outcome, λ) counts.
pub fn aggregate_counts(
    records: impl IntoIterator<Item = PulseRecord>,
    n_lambda: usize,
) -> OutcomeCounts {
    let mut counts = OutcomeCounts::new(n_lambda);
    for rec in records {
        counts.add(&rec);
    }
    counts
}

/// Guards against a seed/params mismatch when counts come from disk.
pub fn check_counts_layout(counts: &OutcomeCounts, n_lambda: usize) -> Result<()> {
    if counts.n_lambda != n_lambda || counts.cells.len() != 8 * n_lambda {
        return Err(ModelError::Input(format!(
            "counts have {} intensities, model has {n_lambda}",
            counts.n_lambda
        )));
    }
    let sum: u64 = counts.cells.iter().sum();
    if sum != counts.total {
        return Err(ModelError::Input("count cells do not sum to the stated total".into()));
    }
    Ok(())
}
