//! `qkd`: simulate BB84 sessions under a generalized photon-number-splitting
//! interceptor, infer the interceptor parameters from counts, and turn
//! posteriors into secure-key-rate tables.

mod csvio;
mod manifest;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use manifest::RunManifest;
use qkd_core::config::Config;
use qkd_core::detection::{iid_prob_vector, DoubleClickMode};
use qkd_core::error::ModelError;
use qkd_core::hmm::hmm_prob_vector;
use qkd_core::inference::{
    default_eve_priors, srss_sample, summarize, InferenceSetup, ParamSummary,
};
use qkd_core::keyrate::{
    decoy_curve, distance_range, keyrate_posterior, proposed_curve, CurvePoint, DecoyConfig,
    KeyRateConfig,
};
use qkd_core::params::{beta_k_from_k_max, k_max, IntensityGrid, Model, ParamId, PriorSpec};
use qkd_core::simulate::{check_counts_layout, for_each_pulse_hmm, for_each_pulse_iid, OutcomeCounts};
use qkd_core::special::binom_quantile;

/// Exit codes: 0 success, 2 config error, 3 input error, 4 numerical failure.
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Config(_) | ModelError::InvalidParams(_) => 2,
            ModelError::Input(_) => 3,
            ModelError::Domain(_) | ModelError::Convergence(_, _) | ModelError::Inconsistent(_) => 4,
        };
        CliError { code, msg: e.to_string() }
    }
}

fn config_err(msg: String) -> CliError {
    CliError { code: 2, msg }
}

fn input_err(msg: String) -> CliError {
    CliError { code: 3, msg }
}

#[derive(Parser)]
#[command(
    name = "qkd",
    version,
    about = "BB84 interception modeling: simulation, Bayesian inference, key rates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn parse_model(s: &str) -> Result<Model, String> {
    match s {
        "iid" => Ok(Model::Iid),
        "hmm" => Ok(Model::Hmm),
        _ => Err(format!("unknown model '{s}' (expected 'iid' or 'hmm')")),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a session and write outcome counts (optionally per-pulse records)
    Simulate(SimulateArgs),
    /// Run MAP + slice sampling on a counts table
    Infer(InferArgs),
    /// Turn a posterior chain into per-intensity key-rate samples
    Keyrate(KeyrateArgs),
    /// Closed-form key-rate curves: proposed protocol vs decoy state
    Compare(CompareArgs),
    /// Check simulated counts against the analytic model's 99% intervals
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the session pulse count
    #[arg(long)]
    pulses: Option<u64>,
    /// Detection model: iid or hmm
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Also dump per-pulse records (large)
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    config: PathBuf,
    /// Counts CSV from `qkd simulate`
    #[arg(long)]
    counts: PathBuf,
    /// Posterior samples after burn-in
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 1_000)]
    burnin: u64,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KeyrateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Chain CSV from `qkd infer`
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sweep as start:step:stop in km
    #[arg(long, default_value = "0:5:150")]
    distances: String,
    /// Signal intensities for the proposed protocol, comma separated
    #[arg(long, default_value = "0.48,1,5,10")]
    mus: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    pulses: Option<u64>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Keyrate(a) => cmd_keyrate(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    Config::from_path(path).map_err(CliError::from)
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| input_err(format!("cannot create {}: {e}", path.display())))
}

fn config_snapshot(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Default Eve priors (with β_k tied to the attainable interception range at
/// the top intensity), overridden by the config's priors section.
fn build_priors(cfg: &Config) -> Result<Vec<(ParamId, PriorSpec)>, CliError> {
    let ints = &cfg.alice.intensities;
    let grid = IntensityGrid {
        lambda_min: ints[0],
        lambda_max: *ints.last().expect("validated non-empty"),
        count: ints.len(),
        cap: *ints.last().expect("validated non-empty"),
    };
    let (km, _) = k_max(&cfg.alice, &cfg.bob, &grid)?;
    let mut priors = default_eve_priors(cfg.alice.distance_ab, beta_k_from_k_max(km));
    if let Some(section) = &cfg.priors {
        for (id, spec) in section.overrides() {
            if let Some(slot) = priors.iter_mut().find(|(i, _)| *i == id) {
                slot.1 = spec;
            } else {
                priors.push((id, spec));
            }
        }
    }
    Ok(priors)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let theta = cfg.system();
    let pulses = args.pulses.unwrap_or(cfg.session.pulses);
    let model = args.model.unwrap_or(cfg.session.model);
    let seed = args.seed.unwrap_or(cfg.session.seed);
    ensure_out_dir(&args.out)?;

    let started = manifest::unix_now();
    let records_path = args.out.join("records.csv");
    let mut records_writer = if args.records {
        Some(csvio::RecordsWriter::create(&records_path)?)
    } else {
        None
    };
    let mut counts = OutcomeCounts::new(theta.n_lambda());
    let mut record_io: Option<csv::Error> = None;
    {
        let sink = |r: qkd_core::simulate::PulseRecord| {
            counts.add(&r);
            if let Some(w) = records_writer.as_mut() {
                if record_io.is_none() {
                    if let Err(e) = w.write(&r) {
                        record_io = Some(e);
                    }
                }
            }
        };
        match model {
            Model::Iid => for_each_pulse_iid(pulses, &theta, seed, sink)?,
            Model::Hmm => for_each_pulse_hmm(pulses, &theta, seed, sink)?,
        }
    }
    if let Some(e) = record_io {
        return Err(input_err(format!("cannot write {}: {e}", records_path.display())));
    }

    let counts_path = args.out.join("counts.csv");
    csvio::write_counts(&counts_path, &counts)?;
    let mut man = RunManifest::new(
        format!("simulate --pulses {pulses} --model {model:?} --seed {seed}"),
        seed,
        config_snapshot(&cfg),
        started,
    );
    man.record(&counts_path).map_err(|e| input_err(e.to_string()))?;
    if let Some(w) = records_writer {
        w.finish(&records_path)?;
        man.record(&records_path).map_err(|e| input_err(e.to_string()))?;
    }
    man.write(&args.out).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}

#[derive(Serialize)]
struct InferSummaryDoc {
    model: String,
    samples: u64,
    burn_in: u64,
    seed: u64,
    parameters: Vec<ParamSummary>,
}

fn cmd_infer(args: InferArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let theta = cfg.system();
    let model = args.model.unwrap_or(cfg.session.model);
    let seed = args.seed.unwrap_or(cfg.session.seed);
    let counts = csvio::read_counts(&args.counts, theta.n_lambda())?;
    check_counts_layout(&counts, theta.n_lambda())?;
    ensure_out_dir(&args.out)?;

    let started = manifest::unix_now();
    let priors = build_priors(&cfg)?;
    let setup = InferenceSetup::new(theta, priors, model)?;
    let chain = srss_sample(&counts, &setup, args.samples, args.burnin, seed)?;
    let free = setup.free();
    let summaries = summarize(&chain, &free)?;

    let chain_path = args.out.join("chain.csv");
    csvio::write_chain(&chain_path, &chain, &free)?;
    let summary_path = args.out.join("summary.json");
    let doc = InferSummaryDoc {
        model: format!("{model:?}").to_lowercase(),
        samples: args.samples,
        burn_in: args.burnin,
        seed,
        parameters: summaries,
    };
    std::fs::write(&summary_path, serde_json::to_string_pretty(&doc).expect("serializes"))
        .map_err(|e| input_err(format!("cannot write {}: {e}", summary_path.display())))?;

    let mut man = RunManifest::new(
        format!(
            "infer --counts {} --samples {} --burnin {} --model {model:?} --seed {seed}",
            args.counts.display(),
            args.samples,
            args.burnin
        ),
        seed,
        config_snapshot(&cfg),
        started,
    );
    man.record(&chain_path).map_err(|e| input_err(e.to_string()))?;
    man.record(&summary_path).map_err(|e| input_err(e.to_string()))?;
    man.write(&args.out).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}

#[derive(Serialize)]
struct KeyrateSummaryRow {
    lambda_index: usize,
    intensity: f64,
    mean: f64,
    ci99_low: f64,
    ci99_high: f64,
}

fn cmd_keyrate(args: KeyrateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let theta = cfg.system();
    let priors = build_priors(&cfg)?;
    let setup = InferenceSetup::new(theta.clone(), priors, cfg.session.model)?;
    let chain = csvio::read_chain(&args.chain, &setup.free())?;
    ensure_out_dir(&args.out)?;

    let started = manifest::unix_now();
    let kr = cfg.keyrate.clone().unwrap_or_default();
    let krcfg = KeyRateConfig {
        protocol_eff: kr.protocol_eff,
        ec_efficiency: kr.ec_efficiency,
        double_click_mode: DoubleClickMode::CountAsGainAndError,
    };
    let samples = keyrate_posterior(&chain, &setup, &krcfg)?;

    let rates_path = args.out.join("keyrate.csv");
    csvio::write_keyrate_samples(&rates_path, &samples)?;
    let summary: Vec<KeyrateSummaryRow> = samples
        .iter()
        .map(|ks| {
            let mut sorted = ks.rates.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
            let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            KeyrateSummaryRow {
                lambda_index: ks.lambda_index,
                intensity: theta.alice.intensities[ks.lambda_index],
                mean,
                ci99_low: qkd_core::inference::sorted_quantile(&sorted, 0.005),
                ci99_high: qkd_core::inference::sorted_quantile(&sorted, 0.995),
            }
        })
        .collect();
    let summary_path = args.out.join("keyrate_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("serializes"))
        .map_err(|e| input_err(format!("cannot write {}: {e}", summary_path.display())))?;

    let mut man = RunManifest::new(
        format!("keyrate --chain {}", args.chain.display()),
        cfg.session.seed,
        config_snapshot(&cfg),
        started,
    );
    man.record(&rates_path).map_err(|e| input_err(e.to_string()))?;
    man.record(&summary_path).map_err(|e| input_err(e.to_string()))?;
    man.write(&args.out).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}

fn parse_distances(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err(format!("distances must be start:step:stop, got '{spec}'")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| config_err(format!("bad distance component '{p}'"))))
        .collect::<Result<_, _>>()?;
    distance_range(nums[0], nums[1], nums[2]).map_err(CliError::from)
}

fn parse_mus(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("bad intensity '{p}'")))
        })
        .collect()
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let distances = parse_distances(&args.distances)?;
    let mus = parse_mus(&args.mus)?;
    ensure_out_dir(&args.out)?;

    let started = manifest::unix_now();
    // Honest channel: the comparison curves describe the protocols themselves.
    let mut theta = cfg.system();
    theta.eve = qkd_core::params::EveParams::inactive();
    let kr = cfg.keyrate.clone().unwrap_or_default();
    let krcfg = KeyRateConfig {
        protocol_eff: kr.protocol_eff,
        ec_efficiency: kr.ec_efficiency,
        double_click_mode: DoubleClickMode::CountAsGainAndError,
    };
    let dcfg = DecoyConfig { mu: kr.mu, nu1: kr.nu1, nu2: kr.nu2 };

    let mut points: Vec<CurvePoint> = Vec::new();
    for &mu in &mus {
        points.extend(proposed_curve(&theta, mu, &krcfg, &distances, cfg.session.model)?);
    }
    points.extend(decoy_curve(&theta, &dcfg, &krcfg, false, &distances)?);
    points.extend(decoy_curve(&theta, &dcfg, &krcfg, true, &distances)?);

    let curves_path = args.out.join("curves.csv");
    csvio::write_curves(&curves_path, &points)?;
    let mut man = RunManifest::new(
        format!("compare --distances {} --mus {}", args.distances, args.mus),
        cfg.session.seed,
        config_snapshot(&cfg),
        started,
    );
    man.record(&curves_path).map_err(|e| input_err(e.to_string()))?;
    man.write(&args.out).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let theta = cfg.system();
    let runs = args.runs.unwrap_or(cfg.session.runs);
    let pulses = args.pulses.unwrap_or(cfg.session.pulses);
    let model = args.model.unwrap_or(cfg.session.model);
    let seed = args.seed.unwrap_or(cfg.session.seed);
    ensure_out_dir(&args.out)?;

    let started = manifest::unix_now();
    let probs = match model {
        Model::Iid => iid_prob_vector(&theta)?,
        Model::Hmm => hmm_prob_vector(&theta)?,
    };
    let n_l = theta.n_lambda();
    let n_cells = 8 * n_l;
    let mut bounds = Vec::with_capacity(n_cells);
    for &p in &probs.cells {
        bounds.push((binom_quantile(0.005, pulses, p)?, binom_quantile(0.995, pulses, p)?));
    }
    let mut inside = vec![0u64; n_cells];
    for run in 0..runs {
        let counts = qkd_core::simulate::simulate_counts(pulses, &theta, seed + run, model)?;
        for (i, &c) in counts.cells.iter().enumerate() {
            if bounds[i].0 <= c && c <= bounds[i].1 {
                inside[i] += 1;
            }
        }
    }
    let mut rows = Vec::with_capacity(n_cells);
    for m in 0..2 {
        for o in 0..4 {
            for l in 0..n_l {
                let idx = qkd_core::detection::cell_index(m, o, l, n_l);
                rows.push(csvio::CoverageRow {
                    m,
                    lambda_index: l,
                    outcome: o,
                    probability: probs.cells[idx],
                    inside_runs: inside[idx],
                    total_runs: runs,
                });
            }
        }
    }
    let report_path = args.out.join("coverage.csv");
    csvio::write_coverage(&report_path, &rows)?;
    let mut man = RunManifest::new(
        format!("validate --runs {runs} --pulses {pulses} --model {model:?} --seed {seed}"),
        seed,
        config_snapshot(&cfg),
        started,
    );
    man.record(&report_path).map_err(|e| input_err(e.to_string()))?;
    man.write(&args.out).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}
