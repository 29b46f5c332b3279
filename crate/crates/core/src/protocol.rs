//! Seeded Monte Carlo simulation of the memory-pooled recursive factory.
//!
//! Cats are produced on demand at the initial level and stored per level.
//! Whenever a level holds two cats they are doubled immediately (greedy,
//! bottom-up). An unpaired cat waits in memory for the next one. Each
//! doubling step is a Bernoulli draw with exact per-level probabilities from
//! [`analytics`](crate::analytics); with imperfect detectors an accepted step
//! may have absorbed photons, in which case its output is flagged corrupt.
//! Corruption is a flag only; corrupted wavefunctions are not evolved.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{accept_odds, AcceptOdds, AnalyticsError};

/// How accept probabilities are chosen for steps fed with corrupt inputs.
pub const CORRUPT_INPUT_MODEL: &str = "corrupt inputs use the clean-input accept probability; accepted outputs stay corrupt";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("target {0} is not a power of two")]
    NotPowerOfTwo(u64),

    #[error("target count must be at least 1")]
    ZeroTargetCount,

    #[error("detector efficiency {0} outside [0, 1]")]
    EfficiencyOutOfRange(f64),

    #[error("initial level must be 1 or 2 and at most the target, got {0}")]
    InvalidInitialLevel(u64),

    #[error("level {level} holds {available} cats, need 2")]
    InsufficientInventory { level: u64, available: u64 },

    #[error("at least one run is required")]
    NoRuns,

    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

pub type ProtocolResult<T> = Result<T, ProtocolError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub target_n: u64,
    pub target_count: u64,
    pub eta: f64,
    pub seed: u64,
    /// 1 starts from single-photon cats, 2 from Hong-Ou-Mandel |2_+⟩ pairs.
    pub initial_level: u64,
    /// Budget cap on single photons; the run stops early when reached.
    pub max_singles: Option<u64>,
}

impl ProtocolConfig {
    pub fn new(target_n: u64, target_count: u64, eta: f64, seed: u64) -> Self {
        Self {
            target_n,
            target_count,
            eta,
            seed,
            initial_level: 1,
            max_singles: None,
        }
    }

    pub fn with_initial_level(mut self, level: u64) -> Self {
        self.initial_level = level;
        self
    }

    pub fn with_max_singles(mut self, max: Option<u64>) -> Self {
        self.max_singles = max;
        self
    }

    pub fn validate(&self) -> ProtocolResult<()> {
        if !self.target_n.is_power_of_two() {
            return Err(ProtocolError::NotPowerOfTwo(self.target_n));
        }
        if self.target_count == 0 {
            return Err(ProtocolError::ZeroTargetCount);
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ProtocolError::EfficiencyOutOfRange(self.eta));
        }
        if !matches!(self.initial_level, 1 | 2) || self.initial_level > self.target_n {
            return Err(ProtocolError::InvalidInitialLevel(self.initial_level));
        }
        Ok(())
    }

    /// Single photons needed to make one cat at the initial level.
    pub fn singles_per_initial_cat(&self) -> u64 {
        self.initial_level
    }
}

/// Stored cats at one level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub clean: u64,
    pub corrupt: u64,
}

impl Inventory {
    pub fn total(&self) -> u64 {
        self.clean + self.corrupt
    }
}

/// Per-level inventories of stored cats.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPool {
    levels: BTreeMap<u64, Inventory>,
}

impl MemoryPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_levels<I: IntoIterator<Item = (u64, Inventory)>>(levels: I) -> Self {
        Self {
            levels: levels.into_iter().collect(),
        }
    }

    pub fn get(&self, level: u64) -> Inventory {
        self.levels.get(&level).copied().unwrap_or_default()
    }

    pub fn add(&mut self, level: u64, corrupt: bool) {
        let inv = self.levels.entry(level).or_default();
        if corrupt {
            inv.corrupt += 1;
        } else {
            inv.clean += 1;
        }
    }

    /// Removes two cats from `level`, corrupt ones first, and returns how
    /// many of the two were corrupt.
    pub fn take_pair(&mut self, level: u64) -> ProtocolResult<u8> {
        let inv = self.levels.entry(level).or_default();
        if inv.total() < 2 {
            return Err(ProtocolError::InsufficientInventory {
                level,
                available: inv.total(),
            });
        }
        let corrupt = inv.corrupt.min(2);
        inv.corrupt -= corrupt;
        inv.clean -= 2 - corrupt;
        Ok(corrupt as u8)
    }

    pub fn levels(&self) -> impl Iterator<Item = (u64, Inventory)> + '_ {
        self.levels.iter().map(|(&l, &i)| (l, i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttemptResult {
    Rejected,
    Accepted {
        /// Photons were absorbed but no detector clicked.
        false_accept: bool,
        output_corrupt: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AttemptRecord {
    pub level: u64,
    pub corrupt_inputs: u8,
    pub result: AttemptResult,
}

impl AttemptRecord {
    pub fn accepted(&self) -> bool {
        matches!(self.result, AttemptResult::Accepted { .. })
    }
}

/// Doubles two cats from `level` using a uniform draw in [0, 1).
///
/// draw < p_true is a true success, draw < p_accept an undetected leak,
/// anything else a heralded failure. Accepted outputs go to level 2·level.
pub fn resolve_attempt(pool: &mut MemoryPool, level: u64, odds: &AcceptOdds, draw: f64) -> ProtocolResult<AttemptRecord> {
    let corrupt_inputs = pool.take_pair(level)?;
    let result = if draw < odds.p_true {
        AttemptResult::Accepted {
            false_accept: false,
            output_corrupt: corrupt_inputs > 0,
        }
    } else if draw < odds.p_accept {
        AttemptResult::Accepted {
            false_accept: true,
            output_corrupt: true,
        }
    } else {
        AttemptResult::Rejected
    };
    if let AttemptResult::Accepted { output_corrupt, .. } = result {
        pool.add(2 * level, output_corrupt);
    }
    Ok(AttemptRecord {
        level,
        corrupt_inputs,
        result,
    })
}

pub fn pair_and_attempt<R: Rng + ?Sized>(
    pool: &mut MemoryPool,
    level: u64,
    odds: &AcceptOdds,
    rng: &mut R,
) -> ProtocolResult<AttemptRecord> {
    let draw = rng.random::<f64>();
    resolve_attempt(pool, level, odds, draw)
}

/// Counters for one level of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounters {
    pub level: u64,
    /// Cats that arrived at this level.
    pub created: u64,
    pub attempts: u64,
    pub successes: u64,
    pub false_accepts: u64,
    /// Cats still stored at this level when the run ended.
    pub residual: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub run_index: u64,
    pub singles_consumed: u64,
    /// One entry per level from the initial level up to the target.
    pub levels: Vec<LevelCounters>,
    pub final_clean: u64,
    pub final_corrupt: u64,
    /// Cat preparations plus doubling attempts.
    pub elapsed_steps: u64,
    pub budget_exhausted: bool,
}

impl RunStatistics {
    pub fn final_total(&self) -> u64 {
        self.final_clean + self.final_corrupt
    }

    pub fn level(&self, level: u64) -> Option<&LevelCounters> {
        self.levels.iter().find(|l| l.level == level)
    }
}

fn level_odds(config: &ProtocolConfig) -> ProtocolResult<Vec<(u64, AcceptOdds)>> {
    let mut out = Vec::new();
    let mut level = config.initial_level;
    while level < config.target_n {
        out.push((level, accept_odds(level, config.eta)?));
        level *= 2;
    }
    Ok(out)
}

fn level_index(initial: u64, level: u64) -> usize {
    (level / initial).trailing_zeros() as usize
}

fn run_with_odds(config: &ProtocolConfig, odds: &[(u64, AcceptOdds)], run_index: u64) -> ProtocolResult<RunStatistics> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run_index);

    let initial = config.initial_level;
    let target = config.target_n;
    let mut counters: Vec<LevelCounters> = std::iter::successors(Some(initial), |&l| (l < target).then_some(l * 2))
        .map(|level| LevelCounters {
            level,
            ..Default::default()
        })
        .collect();

    let mut pool = MemoryPool::new();
    let cost = config.singles_per_initial_cat();
    let mut singles = 0u64;
    let mut steps = 0u64;
    let mut budget_exhausted = false;

    while pool.get(target).total() < config.target_count {
        if config.max_singles.is_some_and(|max| singles + cost > max) {
            budget_exhausted = true;
            break;
        }
        singles += cost;
        steps += 1;
        pool.add(initial, false);
        counters[0].created += 1;

        let mut level = initial;
        while level < target && pool.get(level).total() >= 2 {
            let idx = level_index(initial, level);
            let record = pair_and_attempt(&mut pool, level, &odds[idx].1, &mut rng)?;
            steps += 1;
            counters[idx].attempts += 1;
            match record.result {
                AttemptResult::Rejected => break,
                AttemptResult::Accepted { false_accept, .. } => {
                    counters[idx].successes += 1;
                    counters[idx].false_accepts += u64::from(false_accept);
                    counters[idx + 1].created += 1;
                }
            }
            level *= 2;
        }
    }

    for c in &mut counters {
        c.residual = pool.get(c.level).total();
    }
    let fin = pool.get(target);
    Ok(RunStatistics {
        run_index,
        singles_consumed: singles,
        levels: counters,
        final_clean: fin.clean,
        final_corrupt: fin.corrupt,
        elapsed_steps: steps,
        budget_exhausted,
    })
}

/// One run on random stream 0 of the configured seed.
pub fn run_protocol(config: &ProtocolConfig) -> ProtocolResult<RunStatistics> {
    run_indexed(config, 0)
}

/// One run on random stream `run_index` of the configured seed.
pub fn run_indexed(config: &ProtocolConfig, run_index: u64) -> ProtocolResult<RunStatistics> {
    config.validate()?;
    run_with_odds(config, &level_odds(config)?, run_index)
}

/// `runs` independent runs in parallel, returned in run-index order.
///
/// Run k always uses stream k, so results do not depend on thread count.
pub fn run_many(config: &ProtocolConfig, runs: u64) -> ProtocolResult<Vec<RunStatistics>> {
    config.validate()?;
    let odds = level_odds(config)?;
    (0..runs)
        .into_par_iter()
        .map(|k| run_with_odds(config, &odds, k))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles.
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let at = |q: f64| {
            let rank = (q * v.len() as f64).ceil() as usize;
            v[rank.clamp(1, v.len()) - 1]
        };
        Self {
            min: v[0],
            p05: at(0.05),
            p25: at(0.25),
            median: at(0.5),
            p75: at(0.75),
            p95: at(0.95),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: u64,
    pub attempts: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub success_rate_std_error: Option<f64>,
    pub false_accepts: u64,
    /// False accepts among accepted attempts.
    pub false_accept_fraction: f64,
    pub false_accept_std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub runs: u64,
    pub mean_singles: f64,
    /// `None` for a single run.
    pub singles_std_error: Option<f64>,
    pub singles_quantiles: Quantiles,
    pub mean_singles_per_cat: f64,
    pub singles_per_cat_std_error: Option<f64>,
    pub levels: Vec<LevelSummary>,
    pub final_clean: u64,
    pub final_corrupt: u64,
    pub corruption_fraction: f64,
    pub budget_exhausted_runs: u64,
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

fn binomial_se(hits: u64, trials: u64) -> Option<f64> {
    (trials > 1).then(|| {
        let p = hits as f64 / trials as f64;
        (p * (1.0 - p) / trials as f64).sqrt()
    })
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Means, standard errors and quantiles over a batch of runs.
pub fn aggregate(runs: &[RunStatistics]) -> ProtocolResult<Summary> {
    if runs.is_empty() {
        return Err(ProtocolError::NoRuns);
    }
    let singles: Vec<f64> = runs.iter().map(|r| r.singles_consumed as f64).collect();
    let per_cat: Vec<f64> = runs
        .iter()
        .filter(|r| r.final_total() > 0)
        .map(|r| r.singles_consumed as f64 / r.final_total() as f64)
        .collect();
    let (mean_singles, singles_std_error) = mean_and_se(&singles);
    let (mean_singles_per_cat, singles_per_cat_std_error) = if per_cat.is_empty() {
        (f64::NAN, None)
    } else {
        mean_and_se(&per_cat)
    };

    let mut by_level: BTreeMap<u64, (u64, u64, u64)> = BTreeMap::new();
    for r in runs {
        for l in &r.levels {
            let e = by_level.entry(l.level).or_default();
            e.0 += l.attempts;
            e.1 += l.successes;
            e.2 += l.false_accepts;
        }
    }
    let levels = by_level
        .into_iter()
        .filter(|(_, (attempts, _, _))| *attempts > 0)
        .map(|(level, (attempts, successes, false_accepts))| LevelSummary {
            level,
            attempts,
            successes,
            success_rate: ratio(successes, attempts),
            success_rate_std_error: binomial_se(successes, attempts),
            false_accepts,
            false_accept_fraction: ratio(false_accepts, successes),
            false_accept_std_error: binomial_se(false_accepts, successes),
        })
        .collect();

    let final_clean = runs.iter().map(|r| r.final_clean).sum();
    let final_corrupt: u64 = runs.iter().map(|r| r.final_corrupt).sum();
    Ok(Summary {
        runs: runs.len() as u64,
        mean_singles,
        singles_std_error,
        singles_quantiles: Quantiles::of(&singles),
        mean_singles_per_cat,
        singles_per_cat_std_error,
        levels,
        final_clean,
        final_corrupt,
        corruption_fraction: ratio(final_corrupt, final_clean + final_corrupt),
        budget_exhausted_runs: runs.iter().filter(|r| r.budget_exhausted).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{exact_p_tn, false_accept_fraction, m1_exact};

    fn always() -> AcceptOdds {
        AcceptOdds {
            p_true: 1.0,
            p_accept: 1.0,
        }
    }

    #[test]
    fn clean_pair_accepted() {
        let mut pool = MemoryPool::from_levels([(1, Inventory { clean: 2, corrupt: 0 })]);
        let rec = resolve_attempt(&mut pool, 1, &always(), 0.0).unwrap();
        assert!(rec.accepted());
        assert_eq!(pool.get(1), Inventory::default());
        assert_eq!(pool.get(2), Inventory { clean: 1, corrupt: 0 });
    }

    #[test]
    fn corrupt_input_propagates() {
        let mut pool = MemoryPool::from_levels([(1, Inventory { clean: 1, corrupt: 1 })]);
        let rec = resolve_attempt(&mut pool, 1, &always(), 0.0).unwrap();
        assert_eq!(rec.corrupt_inputs, 1);
        assert_eq!(pool.get(2), Inventory { clean: 0, corrupt: 1 });
    }

    #[test]
    fn rejected_pair_is_discarded() {
        let mut pool = MemoryPool::from_levels([(1, Inventory { clean: 2, corrupt: 0 })]);
        let odds = AcceptOdds { p_true: 0.25, p_accept: 0.25 };
        let rec = resolve_attempt(&mut pool, 1, &odds, 0.9).unwrap();
        assert_eq!(rec.result, AttemptResult::Rejected);
        assert_eq!(pool.get(1), Inventory::default());
        assert_eq!(pool.get(2), Inventory::default());
    }

    #[test]
    fn false_accept_band() {
        let mut pool = MemoryPool::from_levels([(4, Inventory { clean: 2, corrupt: 0 })]);
        let odds = AcceptOdds { p_true: 0.2, p_accept: 0.3 };
        let rec = resolve_attempt(&mut pool, 4, &odds, 0.25).unwrap();
        assert_eq!(rec.result, AttemptResult::Accepted { false_accept: true, output_corrupt: true });
        assert_eq!(pool.get(8), Inventory { clean: 0, corrupt: 1 });
    }

    #[test]
    fn insufficient_inventory() {
        let mut pool = MemoryPool::from_levels([(1, Inventory { clean: 1, corrupt: 0 })]);
        assert_eq!(
            resolve_attempt(&mut pool, 1, &always(), 0.0).unwrap_err(),
            ProtocolError::InsufficientInventory { level: 1, available: 1 }
        );
    }

    #[test]
    fn config_validation() {
        assert_eq!(ProtocolConfig::new(3, 1, 1.0, 0).validate().unwrap_err(), ProtocolError::NotPowerOfTwo(3));
        assert_eq!(ProtocolConfig::new(4, 0, 1.0, 0).validate().unwrap_err(), ProtocolError::ZeroTargetCount);
        assert!(ProtocolConfig::new(4, 1, 1.1, 0).validate().is_err());
        assert!(ProtocolConfig::new(4, 1, 1.0, 0).with_initial_level(4).validate().is_err());
        assert!(ProtocolConfig::new(1, 1, 1.0, 0).with_initial_level(2).validate().is_err());
        assert!(ProtocolConfig::new(2, 1, 1.0, 0).with_initial_level(2).validate().is_ok());
    }

    #[test]
    fn identical_config_identical_statistics() {
        let cfg = ProtocolConfig::new(8, 5, 0.9, 42);
        assert_eq!(run_protocol(&cfg).unwrap(), run_protocol(&cfg).unwrap());
        let a = run_many(&cfg, 20).unwrap();
        let b = run_many(&cfg, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3], run_indexed(&cfg, 3).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn ledger_balances() {
        for (eta, initial) in [(1.0, 1), (0.8, 1), (0.9, 2)] {
            let cfg = ProtocolConfig::new(16, 3, eta, 9).with_initial_level(initial);
            for r in run_many(&cfg, 25).unwrap() {
                assert_eq!(r.singles_consumed, r.levels[0].created * initial);
                for w in r.levels.windows(2) {
                    assert_eq!(w[1].created, w[0].successes);
                }
                for l in &r.levels[..r.levels.len() - 1] {
                    assert!(l.successes <= l.attempts);
                    assert_eq!(l.created, 2 * l.attempts + l.residual);
                    assert!(l.residual <= 1);
                }
                let last = r.levels.last().unwrap();
                assert_eq!(last.level, 16);
                assert_eq!(last.residual, r.final_total());
                assert_eq!(r.final_total(), 3);
                if eta == 1.0 {
                    assert_eq!(r.final_corrupt, 0);
                    assert!(r.levels.iter().all(|l| l.false_accepts == 0));
                }
            }
        }
    }

    #[test]
    fn target_equal_to_initial_level() {
        let cfg = ProtocolConfig::new(2, 4, 1.0, 1).with_initial_level(2);
        let r = run_protocol(&cfg).unwrap();
        assert_eq!(r.singles_consumed, 8);
        assert_eq!(r.final_clean, 4);
        assert_eq!(r.levels.len(), 1);
    }

    #[test]
    fn budget_stops_run() {
        let cfg = ProtocolConfig::new(16, 10, 1.0, 5).with_max_singles(Some(100));
        let r = run_protocol(&cfg).unwrap();
        assert!(r.budget_exhausted);
        assert!(r.singles_consumed <= 100);
        let s = aggregate(&[r]).unwrap();
        assert_eq!(s.budget_exhausted_runs, 1);
    }

    #[test]
    fn aggregate_single_run() {
        let r = run_protocol(&ProtocolConfig::new(4, 2, 1.0, 3)).unwrap();
        let s = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.runs, 1);
        assert_eq!(s.mean_singles, r.singles_consumed as f64);
        assert_eq!(s.singles_std_error, None);
        assert_eq!(s.singles_quantiles.median, r.singles_consumed as f64);
        assert_eq!(aggregate(&[]).unwrap_err(), ProtocolError::NoRuns);
    }

    #[test]
    fn target_two_mean_singles() {
        let runs = run_many(&ProtocolConfig::new(2, 1, 1.0, 77), 10_000).unwrap();
        let s = aggregate(&runs).unwrap();
        let expected = m1_exact(2, 1.0).unwrap();
        let se = s.singles_std_error.unwrap();
        assert!((s.mean_singles - expected).abs() <= 3.0 * se, "{} vs {expected} ± {se}", s.mean_singles);
        let l1 = &s.levels[0];
        assert!((l1.success_rate - 0.25).abs() <= 3.0 * l1.success_rate_std_error.unwrap());
    }

    #[test]
    fn level_success_rates_match_closed_form() {
        for seed in [1, 2] {
            let runs = run_many(&ProtocolConfig::new(8, 4, 1.0, seed), 300).unwrap();
            let s = aggregate(&runs).unwrap();
            for l in &s.levels {
                let p = exact_p_tn(l.level).unwrap().to_f64();
                let se = (p * (1.0 - p) / l.attempts as f64).sqrt();
                assert!((l.success_rate - p).abs() <= 3.0 * se, "level {}: {} vs {p}", l.level, l.success_rate);
            }
        }
    }

    #[test]
    fn false_accepts_match_analytics() {
        let runs = run_many(&ProtocolConfig::new(8, 10, 0.9, 13), 400).unwrap();
        let s = aggregate(&runs).unwrap();
        for l in &s.levels {
            let p = false_accept_fraction(l.level, 0.9).unwrap();
            let se = (p * (1.0 - p) / l.successes as f64).sqrt();
            assert!((l.false_accept_fraction - p).abs() <= 3.0 * se, "level {}", l.level);
        }
    }

    #[test]
    fn corruption_degrades_monotonically() {
        let fractions: Vec<f64> = [0.8, 0.9, 0.95, 1.0]
            .iter()
            .map(|&eta| aggregate(&run_many(&ProtocolConfig::new(8, 10, eta, 21), 200).unwrap()).unwrap().corruption_fraction)
            .collect();
        for w in fractions.windows(2) {
            assert!(w[1] <= w[0], "{fractions:?}");
        }
        assert_eq!(fractions[3], 0.0);
    }
}
