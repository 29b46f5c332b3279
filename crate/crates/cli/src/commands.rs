//! The four subcommands. Each returns its artifacts without touching the
//! filesystem.

use noon_core::analytics::{self, ExactProbability, Scheme};
use noon_core::catfactory::{self, CatSpec, HERALD_MODES};
use noon_core::optics::{self, LossyAcceptResult, MAX_PHOTONS_PER_SPLITTER};
use noon_core::protocol::{self, ProtocolConfig, RunStatistics, Summary, CORRUPT_INPUT_MODEL};
use noon_core::{CascadeModel, FockState};
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{to_canonical_json, to_csv, Sci, SCHEMA_VERSION};
use crate::{Artifact, CascadeArgs, CliError, PoolArgs, TableArgs, TnArgs};

/// Largest exponent accepted by `table`; N = 4096 renders in about a second.
pub const MAX_TABLE_EXPONENT: u32 = 12;

type Rendered = Result<(Vec<Artifact>, Vec<String>), CliError>;

fn param<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Param(e.to_string())
}

fn check_eta(eta: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(CliError::Param(format!("eta must lie in [0, 1], got {eta}")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEntry {
    pub photons: u32,
    pub probability_sim: f64,
    pub probability_exact: ExactProbability,
    pub probability_exact_float: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TnReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub n: u32,
    pub eta: f64,
    pub success_prob_exact: ExactProbability,
    pub success_prob_exact_float: f64,
    pub success_prob_sim: f64,
    pub success_prob_relative_error: f64,
    pub fidelity: f64,
    pub branch_spectrum: Vec<SpectrumEntry>,
    pub lossy: LossyAcceptResult,
    /// Share of accepted events in which photons were absorbed.
    pub false_accept_fraction: f64,
    pub output_state: Option<FockState>,
}

pub fn tn(args: &TnArgs) -> Rendered {
    let n = args.n;
    if n == 0 {
        return Err(CliError::Param("n must be at least 1".into()));
    }
    if 2 * u64::from(n) > u64::from(MAX_PHOTONS_PER_SPLITTER) {
        return Err(CliError::Param(format!(
            "n = {n} exceeds the simulator limit of {}",
            MAX_PHOTONS_PER_SPLITTER / 2
        )));
    }
    check_eta(args.eta)?;
    let mut warnings = Vec::new();
    if !n.is_power_of_two() {
        warnings.push(format!("n = {n} is not a power of two; the cascade never produces such cats"));
    }

    let cat = catfactory::make_cat(CatSpec::new(n).map_err(param)?);
    let outcome = catfactory::apply_tn(&cat, &cat, n).map_err(param)?;
    let sim = optics::total_count_distribution(&outcome.intermediate_state, &HERALD_MODES).map_err(param)?;
    let lossy = optics::lossy_no_click_accept(&outcome.intermediate_state, &HERALD_MODES, args.eta).map_err(param)?;
    let exact = analytics::leak_spectrum(u64::from(n)).map_err(param)?;

    let branch_spectrum = exact
        .iter()
        .enumerate()
        .map(|(j, p)| SpectrumEntry {
            photons: j as u32,
            probability_sim: sim.get(&(j as u32)).copied().unwrap_or(0.0),
            probability_exact: p.clone(),
            probability_exact_float: p.to_f64(),
        })
        .collect();
    let p_exact = exact[0].clone();
    let p_exact_f = p_exact.to_f64();
    let false_accept_fraction = if lossy.accept_prob > 0.0 {
        1.0 - lossy.true_weight / lossy.accept_prob
    } else {
        0.0
    };

    let report = TnReport {
        schema_version: SCHEMA_VERSION,
        command: "tn",
        n,
        eta: args.eta,
        success_prob_exact_float: p_exact_f,
        success_prob_exact: p_exact,
        success_prob_sim: outcome.success_prob,
        success_prob_relative_error: (outcome.success_prob - p_exact_f).abs() / p_exact_f,
        fidelity: outcome.fidelity_to_target,
        branch_spectrum,
        lossy,
        false_accept_fraction,
        output_state: outcome.output_state,
    };
    Ok((
        vec![Artifact {
            path: args.out.clone(),
            contents: to_canonical_json(&report)?,
        }],
        warnings,
    ))
}

/// One row of the `table` CSV. Exact values appear as "num/den" next to
/// their float rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub schema_version: u32,
    pub n: u64,
    pub exact_p_tn: ExactProbability,
    pub exact_p_tn_float: Sci,
    pub stirling_p_tn: Sci,
    pub exact_naive_p: ExactProbability,
    pub exact_naive_p_float: Sci,
    pub naive_asymptotic: Sci,
    /// Exact singles per output cat as a rational.
    pub m1_exact_rational: ExactProbability,
    pub m1_exact: Sci,
    pub m1_estimate: Sci,
    pub yield_estimate: Sci,
    pub leak_one: ExactProbability,
    pub leak_one_float: Sci,
    /// Two photons in one given heralding mode.
    pub leak_two: ExactProbability,
    pub leak_two_float: Sci,
    /// Two photons in either heralding mode.
    pub leak_two_total: ExactProbability,
    pub leak_two_total_float: Sci,
    pub baseline_kok: Option<Sci>,
    pub baseline_fiurasek: Option<Sci>,
}

pub const TABLE_HEADER: &str = "schema_version,n,exact_p_tn,exact_p_tn_float,stirling_p_tn,exact_naive_p,\
exact_naive_p_float,naive_asymptotic,m1_exact_rational,m1_exact,m1_estimate,yield_estimate,leak_one,\
leak_one_float,leak_two,leak_two_float,leak_two_total,leak_two_total_float,baseline_kok,baseline_fiurasek";

pub fn table_row(n: u64) -> Result<TableRow, CliError> {
    let exact_p_tn = analytics::exact_p_tn(n).map_err(param)?;
    let exact_naive_p = analytics::exact_naive_p(n).map_err(param)?;
    let chain = ExactProbability::from_ratio(analytics::pool_chain_factor(n).map_err(param)?);
    let leak_one = analytics::leak_prob_one(n).map_err(param)?;
    let leak_two = analytics::leak_prob_two(n).map_err(param)?;
    // (1, 1) never occurs, so both heralding modes contribute equally.
    let leak_two_total = ExactProbability::from_ratio(leak_two.as_ratio() * BigRational::from_integer(2.into()));
    let baseline = |scheme| analytics::baseline_scaling(n, scheme).ok().map(Sci);
    Ok(TableRow {
        schema_version: SCHEMA_VERSION,
        n,
        exact_p_tn_float: Sci(exact_p_tn.to_f64()),
        exact_p_tn,
        stirling_p_tn: Sci(analytics::stirling_p_tn(n)),
        exact_naive_p_float: Sci(exact_naive_p.to_f64()),
        exact_naive_p,
        naive_asymptotic: Sci(analytics::naive_asymptotic(n)),
        m1_exact: Sci(analytics::m1_exact(n, 1.0).map_err(param)?),
        m1_exact_rational: chain,
        m1_estimate: Sci(analytics::m1_estimate(n, 1.0).map_err(param)?),
        yield_estimate: Sci(analytics::yield_estimate(n).map_err(param)?),
        leak_one_float: Sci(leak_one.to_f64()),
        leak_one,
        leak_two_float: Sci(leak_two.to_f64()),
        leak_two,
        leak_two_total_float: Sci(leak_two_total.to_f64()),
        leak_two_total,
        baseline_kok: baseline(Scheme::Kok),
        baseline_fiurasek: baseline(Scheme::Fiurasek),
    })
}

pub fn table(args: &TableArgs) -> Rendered {
    let k = args.max_exponent;
    if !(1..=MAX_TABLE_EXPONENT).contains(&k) {
        return Err(CliError::Param(format!(
            "max-exponent must lie in 1..={MAX_TABLE_EXPONENT}, got {k}"
        )));
    }
    let rows = (0..=k).map(|e| table_row(1u64 << e)).collect::<Result<Vec<_>, _>>()?;
    Ok((
        vec![Artifact {
            path: args.out.clone(),
            contents: to_csv(&rows)?,
        }],
        Vec::new(),
    ))
}

/// Long-format per-run CSV: one row per (run, level).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRow {
    pub schema_version: u32,
    pub run_index: u64,
    pub level: u64,
    pub created: u64,
    pub attempts: u64,
    pub successes: u64,
    pub false_accepts: u64,
    pub residual: u64,
    pub singles_consumed: u64,
    pub final_clean: u64,
    pub final_corrupt: u64,
    pub elapsed_steps: u64,
    pub budget_exhausted: bool,
}

pub fn run_rows(runs: &[RunStatistics]) -> Vec<RunRow> {
    runs.iter()
        .flat_map(|r| {
            r.levels.iter().map(move |l| RunRow {
                schema_version: SCHEMA_VERSION,
                run_index: r.run_index,
                level: l.level,
                created: l.created,
                attempts: l.attempts,
                successes: l.successes,
                false_accepts: l.false_accepts,
                residual: l.residual,
                singles_consumed: r.singles_consumed,
                final_clean: r.final_clean,
                final_corrupt: r.final_corrupt,
                elapsed_steps: r.elapsed_steps,
                budget_exhausted: r.budget_exhausted,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PoolExpectation {
    /// Expected singles per output cat under the configured efficiency.
    pub singles_per_cat: f64,
    /// Same quantity at η = 1, as a rational.
    pub singles_per_cat_ideal: ExactProbability,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoolReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ProtocolConfig,
    pub runs: u64,
    pub corrupt_input_model: &'static str,
    pub expected: PoolExpectation,
    pub summary: Summary,
}

/// Expected singles per output cat starting from `initial_level`:
/// initial_level · Π 2/p_accept(level) over the levels that are doubled.
pub fn expected_singles_per_cat(config: &ProtocolConfig) -> Result<f64, CliError> {
    let mut cost = config.initial_level as f64;
    let mut level = config.initial_level;
    while level < config.target_n {
        cost *= 2.0 / analytics::accept_odds(level, config.eta).map_err(param)?.p_accept;
        level *= 2;
    }
    Ok(cost)
}

fn ideal_singles_per_cat(config: &ProtocolConfig) -> Result<ExactProbability, CliError> {
    let chain = analytics::pool_chain_factor(config.target_n).map_err(param)?;
    let skipped = analytics::pool_chain_factor(config.initial_level).map_err(param)?;
    let initial = BigRational::from_integer(config.initial_level.into());
    Ok(ExactProbability::from_ratio(chain / skipped * initial))
}

pub fn pool(args: &PoolArgs) -> Rendered {
    if args.target < 2 || !args.target.is_power_of_two() {
        return Err(CliError::Param(format!(
            "target must be a power of two of at least 2, got {}",
            args.target
        )));
    }
    if args.runs == 0 {
        return Err(CliError::Param("runs must be at least 1".into()));
    }
    check_eta(args.eta)?;
    let config = ProtocolConfig::new(args.target, args.count, args.eta, args.seed)
        .with_initial_level(args.initial_level)
        .with_max_singles(args.max_singles);
    config.validate().map_err(param)?;

    let runs = protocol::run_many(&config, args.runs).map_err(param)?;
    let summary = protocol::aggregate(&runs).map_err(param)?;
    let expected = expected_singles_per_cat(&config)?;
    let report = PoolReport {
        schema_version: SCHEMA_VERSION,
        command: "pool",
        runs: args.runs,
        corrupt_input_model: CORRUPT_INPUT_MODEL,
        expected: PoolExpectation {
            singles_per_cat: expected,
            singles_per_cat_ideal: ideal_singles_per_cat(&config)?,
            relative_error: (summary.mean_singles_per_cat - expected).abs() / expected,
        },
        config,
        summary,
    };

    let mut warnings = Vec::new();
    if report.summary.budget_exhausted_runs > 0 {
        warnings.push(format!(
            "{} of {} runs hit the singles budget",
            report.summary.budget_exhausted_runs, args.runs
        ));
    }
    let mut artifacts = vec![Artifact {
        path: args.out.clone(),
        contents: to_canonical_json(&report)?,
    }];
    if let Some(path) = &args.runs_csv {
        artifacts.push(Artifact {
            path: Some(path.clone()),
            contents: to_csv(&run_rows(&runs))?,
        });
    }
    Ok((artifacts, warnings))
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub target_n: u64,
    pub runs: u64,
    pub seed: u64,
    pub successes: u64,
    pub empirical_rate: f64,
    pub std_error: f64,
    /// 95% Wilson score interval.
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub exact_naive_p: ExactProbability,
    pub exact_naive_p_float: f64,
    /// (empirical − exact) / binomial standard error at the exact rate.
    pub z_score: f64,
    pub mean_tn_attempts: f64,
    pub model: CascadeModel,
}

fn wilson(successes: u64, runs: u64) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n = runs as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let centre = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn cascade(args: &CascadeArgs) -> Rendered {
    if args.target < 2 || !args.target.is_power_of_two() {
        return Err(CliError::Param(format!(
            "target must be a power of two of at least 2, got {}",
            args.target
        )));
    }
    if args.runs == 0 {
        return Err(CliError::Param("runs must be at least 1".into()));
    }
    let model = CascadeModel::new(args.target).map_err(param)?;
    let outcomes: Vec<_> = (0..args.runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(k);
            model.run(&mut rng)
        })
        .collect();
    let successes = outcomes.iter().filter(|o| o.success).count() as u64;
    let attempts: u64 = outcomes.iter().map(|o| o.tn_attempts).sum();

    let exact = analytics::exact_naive_p(args.target).map_err(param)?;
    let p = exact.to_f64();
    let n = args.runs as f64;
    let rate = successes as f64 / n;
    let (lo, hi) = wilson(successes, args.runs);
    let report = CascadeReport {
        schema_version: SCHEMA_VERSION,
        command: "cascade",
        target_n: args.target,
        runs: args.runs,
        seed: args.seed,
        successes,
        empirical_rate: rate,
        std_error: (rate * (1.0 - rate) / n).sqrt(),
        ci95_low: lo,
        ci95_high: hi,
        exact_naive_p_float: p,
        exact_naive_p: exact,
        z_score: (rate - p) / (p * (1.0 - p) / n).sqrt(),
        mean_tn_attempts: attempts as f64 / n,
        model,
    };
    Ok((
        vec![Artifact {
            path: args.out.clone(),
            contents: to_canonical_json(&report)?,
        }],
        Vec::new(),
    ))
}

/// Parses a `table` CSV back into rows.
pub fn parse_table(csv_text: &str) -> Result<Vec<TableRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}

/// Parses a per-run CSV back into rows.
pub fn parse_runs(csv_text: &str) -> Result<Vec<RunRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}
