//! Exact closed forms for the doubling protocol and their asymptotics.
//!
//! Every probability here is computed as a reduced big rational first; the
//! floating-point values are derived from the rationals, never the reverse.

use std::f64::consts::{E, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("photon number must be at least 1")]
    ZeroPhotons,

    #[error("{0} is not a power of two")]
    NotPowerOfTwo(u64),

    #[error("photon number {0} must be even")]
    OddPhotonNumber(u64),

    #[error("detector efficiency {0} outside [0, 1]")]
    EfficiencyOutOfRange(f64),

    #[error("target count must be positive and finite, got {0}")]
    InvalidTargetCount(f64),

    #[error("unknown baseline scheme {0:?} (expected \"kok\" or \"fiurasek\")")]
    UnknownScheme(String),

    #[error("malformed rational {0:?}")]
    MalformedRational(String),
}

pub type AnalyticsResult<T> = Result<T, AnalyticsError>;

/// A reduced non-negative rational number.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactProbability(BigRational);

impl ExactProbability {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> AnalyticsResult<Self> {
        let (n, d) = (numer.into(), denom.into());
        if d.is_zero() || n < BigInt::zero() || d < BigInt::zero() {
            return Err(AnalyticsError::MalformedRational(format!("{n}/{d}")));
        }
        Ok(Self(BigRational::new(n, d)))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    pub fn from_ratio(r: BigRational) -> Self {
        Self(r)
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.0)
    }

    /// Natural logarithm, valid even when the value under- or overflows f64.
    pub fn ln(&self) -> f64 {
        ln_big(self.numer()) - ln_big(self.denom())
    }
}

impl fmt::Display for ExactProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl FromStr for ExactProbability {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnalyticsError::MalformedRational(s.to_string());
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        Self::new(n, d)
    }
}

impl Serialize for ExactProbability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactProbability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| (ln_big(r.numer()) - ln_big(r.denom())).exp())
}

fn ln_big(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().map_or(f64::NAN, f64::ln);
    }
    let shift = bits - 64;
    let top: BigInt = x >> shift;
    top.to_f64().map_or(f64::NAN, f64::ln) + shift as f64 * LN_2
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn pow2(e: u64) -> BigUint {
    BigUint::one() << e
}

fn rational(numer: BigUint, denom: BigUint) -> ExactProbability {
    ExactProbability(BigRational::new(numer.into(), denom.into()))
}

fn require_positive(n: u64) -> AnalyticsResult<()> {
    if n == 0 {
        Err(AnalyticsError::ZeroPhotons)
    } else {
        Ok(())
    }
}

fn require_power_of_two(n: u64) -> AnalyticsResult<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(AnalyticsError::NotPowerOfTwo(n))
    }
}

fn require_efficiency(eta: f64) -> AnalyticsResult<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(AnalyticsError::EfficiencyOutOfRange(eta))
    }
}

/// Success probability of one doubling step on two n-photon cats:
/// (2n)! / (2^{2n+1} (n!)²).
pub fn exact_p_tn(n: u64) -> AnalyticsResult<ExactProbability> {
    require_positive(n)?;
    Ok(rational(binomial(2 * n, n), pow2(2 * n + 1)))
}

/// Leading Stirling approximation 1/√(4πn) of [`exact_p_tn`].
pub fn stirling_p_tn(n: u64) -> f64 {
    1.0 / (4.0 * PI * n as f64).sqrt()
}

/// An exact value next to its asymptotic approximation.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub n: u64,
    pub exact: ExactProbability,
    pub asymptotic: f64,
    pub relative_error: f64,
}

impl ScalingReport {
    fn new(n: u64, exact: ExactProbability, asymptotic: f64) -> Self {
        // ratio in log space so tiny exact values do not underflow
        let relative_error = ((asymptotic.ln() - exact.ln()).exp() - 1.0).abs();
        Self {
            n,
            exact,
            asymptotic,
            relative_error,
        }
    }
}

pub fn stirling_report(n: u64) -> AnalyticsResult<ScalingReport> {
    Ok(ScalingReport::new(n, exact_p_tn(n)?, stirling_p_tn(n)))
}

/// Memoryless cascade success probability 2·n!/(2n)^n (closed form).
pub fn naive_p_closed_form(n: u64) -> AnalyticsResult<ExactProbability> {
    require_positive(n)?;
    require_power_of_two(n)?;
    let denom = BigUint::from(2 * n).pow(n as u32);
    Ok(rational(factorial(n) * 2u32, denom))
}

/// Memoryless cascade success probability from p(2n) = p(n)²·p(T_n), p(1) = 1.
pub fn naive_p_recurrence(n: u64) -> AnalyticsResult<ExactProbability> {
    require_positive(n)?;
    require_power_of_two(n)?;
    let mut p = BigRational::one();
    let mut level = 1;
    while level < n {
        p = &p * &p * exact_p_tn(level)?.0;
        level *= 2;
    }
    Ok(ExactProbability(p))
}

/// Exact success probability of the memoryless cascade to an n-photon cat.
pub fn exact_naive_p(n: u64) -> AnalyticsResult<ExactProbability> {
    let closed = naive_p_closed_form(n)?;
    debug_assert_eq!(closed, naive_p_recurrence(n)?);
    Ok(closed)
}

/// √(8πn)·(2e)^{−n}.
pub fn naive_asymptotic(n: u64) -> f64 {
    let n = n as f64;
    (0.5 * (8.0 * PI * n).ln() - n * (2.0 * E).ln()).exp()
}

pub fn naive_report(n: u64) -> AnalyticsResult<ScalingReport> {
    Ok(ScalingReport::new(n, exact_naive_p(n)?, naive_asymptotic(n)))
}

/// Exact M₁ / M_target for the memory-pooled recursion:
/// the product of 2/p(T_n) over levels n = 1, 2, …, target/2.
pub fn pool_chain_factor(target_n: u64) -> AnalyticsResult<BigRational> {
    require_positive(target_n)?;
    require_power_of_two(target_n)?;
    let two = BigRational::from_integer(BigInt::from(2));
    let mut factor = BigRational::one();
    let mut level = 1;
    while level < target_n {
        factor = factor * &two / exact_p_tn(level)?.0;
        level *= 2;
    }
    Ok(factor)
}

/// Expected stock at one recursion level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoolLevel {
    pub level: u64,
    pub expected_count: f64,
}

/// Back-solves M_{2n} = (M_n/2)·p(T_n) from M_target down to M₁.
///
/// Levels are listed from the target downwards.
pub fn expected_pool_sequence(target_n: u64, m_target: f64) -> AnalyticsResult<Vec<PoolLevel>> {
    if !(m_target.is_finite() && m_target > 0.0) {
        return Err(AnalyticsError::InvalidTargetCount(m_target));
    }
    require_positive(target_n)?;
    require_power_of_two(target_n)?;
    let mut out = vec![PoolLevel {
        level: target_n,
        expected_count: m_target,
    }];
    let mut factor = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let mut level = target_n / 2;
    while level >= 1 {
        factor = factor * &two / exact_p_tn(level)?.0;
        out.push(PoolLevel {
            level,
            expected_count: ratio_to_f64(&factor) * m_target,
        });
        level /= 2;
    }
    Ok(out)
}

/// Exact expected number of single-photon cats per `m_target` outputs.
pub fn m1_exact(target_n: u64, m_target: f64) -> AnalyticsResult<f64> {
    let seq = expected_pool_sequence(target_n, m_target)?;
    Ok(seq.last().map_or(m_target, |l| l.expected_count))
}

/// Asymptotic M₁ ≈ (4√π)^{log₂ n}·n^{(log₂ n − 1)/4}·M_n.
pub fn m1_estimate(target_n: u64, m_target: f64) -> AnalyticsResult<f64> {
    if !(m_target.is_finite() && m_target > 0.0) {
        return Err(AnalyticsError::InvalidTargetCount(m_target));
    }
    require_positive(target_n)?;
    require_power_of_two(target_n)?;
    let levels = f64::from(target_n.trailing_zeros());
    let n = target_n as f64;
    Ok((4.0 * PI.sqrt()).powf(levels) * n.powf((levels - 1.0) / 4.0) * m_target)
}

/// Asymptotic yield (4√π)^{−log₂ n}·n^{(1 − log₂ n)/4}, the reciprocal of
/// [`m1_estimate`] for one output.
pub fn yield_estimate(target_n: u64) -> AnalyticsResult<f64> {
    require_positive(target_n)?;
    require_power_of_two(target_n)?;
    let levels = f64::from(target_n.trailing_zeros());
    let n = target_n as f64;
    Ok((4.0 * PI.sqrt()).powf(-levels) * n.powf((1.0 - levels) / 4.0))
}

/// Probability that exactly one photon reaches the two heralding detectors
/// during a doubling step on n-photon cats: 2n/2^{2n}.
pub fn leak_prob_one(n: u64) -> AnalyticsResult<ExactProbability> {
    require_positive(n)?;
    Ok(rational(BigUint::from(2 * n), pow2(2 * n)))
}

/// (2n−2)! / (2^{2n+1} ((n−1)!)²).
///
/// This is the probability that one given heralding mode receives two
/// photons (the two modes contribute equally and one photon in each never
/// occurs). The total two-photon leak is twice this value; see
/// [`leak_spectrum`].
pub fn leak_prob_two(n: u64) -> AnalyticsResult<ExactProbability> {
    require_positive(n)?;
    Ok(rational(binomial(2 * n - 2, n - 1), pow2(2 * n + 1)))
}

/// Full distribution of the total photon number j reaching the heralding
/// detectors during a doubling step on two exact n-photon cats, j = 0..=2n.
///
/// Even j = 2k: 2·C(2k,k)·C(2n−2k,n−k)/4^{n+1}; odd j: C(2n,j)/4^n.
/// Entry 0 is p(T_n).
pub fn leak_spectrum(n: u64) -> AnalyticsResult<Vec<ExactProbability>> {
    require_positive(n)?;
    Ok((0..=2 * n)
        .map(|j| {
            if j % 2 == 0 {
                let k = j / 2;
                rational(binomial(2 * k, k) * binomial(2 * n - 2 * k, n - k) * 2u32, pow2(2 * n + 2))
            } else {
                rational(binomial(2 * n, j), pow2(2 * n))
            }
        })
        .collect())
}

/// Σ_{j≥1}(1−η)^j p_j / (p_0 + Σ_{j≥1}(1−η)^j p_j) for a total-count
/// spectrum given as (j, p_j) pairs.
pub fn false_accept_from_spectrum<I>(spectrum: I, eta: f64) -> f64
where
    I: IntoIterator<Item = (u32, f64)>,
{
    let miss = 1.0 - eta;
    let (mut clean, mut corrupt) = (0.0, 0.0);
    for (j, p) in spectrum {
        if j == 0 {
            clean += p;
        } else {
            corrupt += p * miss.powi(j as i32);
        }
    }
    let accept = clean + corrupt;
    if accept > 0.0 {
        corrupt / accept
    } else {
        0.0
    }
}

/// Fraction of accepted doubling steps that actually absorbed photons.
pub fn false_accept_fraction(n: u64, eta: f64) -> AnalyticsResult<f64> {
    require_efficiency(eta)?;
    let spectrum = leak_spectrum(n)?;
    Ok(false_accept_from_spectrum(
        spectrum.iter().enumerate().map(|(j, p)| (j as u32, p.to_f64())),
        eta,
    ))
}

/// Per-attempt probabilities of a doubling step with detector efficiency eta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AcceptOdds {
    /// Accept and truly successful.
    pub p_true: f64,
    /// Accept at all (true success plus undetected leaks).
    pub p_accept: f64,
}

pub fn accept_odds(n: u64, eta: f64) -> AnalyticsResult<AcceptOdds> {
    require_efficiency(eta)?;
    let spectrum = leak_spectrum(n)?;
    let p_true = spectrum[0].to_f64();
    let miss = 1.0 - eta;
    let leak: f64 = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, p)| p.to_f64() * miss.powi(j as i32))
        .sum();
    Ok(AcceptOdds {
        p_true,
        p_accept: (p_true + leak).min(1.0),
    })
}

/// Earlier photon-by-photon schemes used as exponential baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// c = √2·e
    Kok,
    /// c = e
    Fiurasek,
}

impl Scheme {
    pub fn base(self) -> f64 {
        match self {
            Scheme::Kok => 2f64.sqrt() * E,
            Scheme::Fiurasek => E,
        }
    }
}

impl FromStr for Scheme {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kok" => Ok(Scheme::Kok),
            "fiurasek" => Ok(Scheme::Fiurasek),
            _ => Err(AnalyticsError::UnknownScheme(s.to_string())),
        }
    }
}

/// c^{−n} success scaling of a baseline scheme, for even n.
pub fn baseline_scaling(n: u64, scheme: Scheme) -> AnalyticsResult<f64> {
    if n % 2 == 1 {
        return Err(AnalyticsError::OddPhotonNumber(n));
    }
    Ok((-(n as f64) * scheme.base().ln()).exp())
}

/// True when numerator and denominator are coprime.
pub fn is_reduced(p: &ExactProbability) -> bool {
    p.numer().gcd(p.denom()).is_one()
}
