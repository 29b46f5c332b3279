//! Sparse exact algebra of multimode bosonic Fock states.
//!
//! A [`FockState`] is a hashed map from occupation vectors (photons per mode)
//! to complex amplitudes. Only nonzero terms are stored; amplitudes whose
//! magnitude falls below the state's prune tolerance are dropped after every
//! operation that can produce cancellations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Complex probability amplitude.
pub type Amplitude = Complex64;

/// Default magnitude below which amplitudes are treated as numerical dust.
pub const DEFAULT_PRUNE_TOLERANCE: f64 = 1e-13;

/// Maximum deviation of `norm_sq` from 1 accepted as "normalized".
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("a Fock state needs at least one mode")]
    NoModes,

    #[error("mode {mode} out of range for a {num_modes}-mode state")]
    InvalidMode { mode: usize, num_modes: usize },

    #[error("mode {0} listed more than once")]
    DuplicateMode(usize),

    #[error("mode count mismatch: {left} vs {right}")]
    ModeCountMismatch { left: usize, right: usize },

    #[error("occupation vector has {got} entries, state has {expected} modes")]
    OccupationLength { got: usize, expected: usize },

    #[error("non-finite amplitude for occupation {0:?}")]
    NonFinite(Vec<u32>),

    #[error("state is not normalized (norm_sq = {0})")]
    NotNormalized(f64),

    #[error("cannot drop mode {0}: it is occupied")]
    OccupiedMode(usize),
}

pub type FockResult<T> = Result<T, FockError>;

/// Photon counts, one entry per mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Occupation(Vec<u32>);

impl Occupation {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn zeros(num_modes: usize) -> Self {
        Self(vec![0; num_modes])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn num_modes(&self) -> usize {
        self.0.len()
    }

    /// Total photon number.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for Occupation {
    fn from(counts: Vec<u32>) -> Self {
        Self(counts)
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (k, n) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

/// A (not necessarily normalized) pure state on `num_modes` bosonic modes.
#[derive(Clone, Debug)]
pub struct FockState {
    num_modes: usize,
    terms: HashMap<Occupation, Amplitude>,
    prune_tolerance: f64,
}

impl FockState {
    /// The state with no terms at all (norm zero).
    pub fn empty(num_modes: usize) -> FockResult<Self> {
        if num_modes == 0 {
            return Err(FockError::NoModes);
        }
        Ok(Self {
            num_modes,
            terms: HashMap::new(),
            prune_tolerance: DEFAULT_PRUNE_TOLERANCE,
        })
    }

    /// |0,…,0⟩ on `num_modes` modes.
    pub fn vacuum(num_modes: usize) -> FockResult<Self> {
        let mut s = Self::empty(num_modes)?;
        s.terms
            .insert(Occupation::zeros(num_modes), Amplitude::new(1.0, 0.0));
        Ok(s)
    }

    /// A single normalized Fock basis state.
    pub fn basis(counts: impl Into<Vec<u32>>) -> FockResult<Self> {
        let counts = counts.into();
        let mut s = Self::empty(counts.len())?;
        s.terms.insert(Occupation(counts), Amplitude::new(1.0, 0.0));
        Ok(s)
    }

    /// Builds a state from explicit terms. Repeated occupations are summed.
    pub fn from_terms<I, V>(num_modes: usize, terms: I) -> FockResult<Self>
    where
        I: IntoIterator<Item = (V, Amplitude)>,
        V: Into<Vec<u32>>,
    {
        let mut s = Self::empty(num_modes)?;
        for (occ, amp) in terms {
            let occ = occ.into();
            if occ.len() != num_modes {
                return Err(FockError::OccupationLength {
                    got: occ.len(),
                    expected: num_modes,
                });
            }
            if !(amp.re.is_finite() && amp.im.is_finite()) {
                return Err(FockError::NonFinite(occ));
            }
            *s.terms.entry(Occupation(occ)).or_default() += amp;
        }
        Ok(s.prune())
    }

    pub fn with_prune_tolerance(mut self, tolerance: f64) -> Self {
        self.prune_tolerance = tolerance.max(0.0);
        self
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn prune_tolerance(&self) -> f64 {
        self.prune_tolerance
    }

    /// Number of stored terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Amplitude of a basis state (zero when absent).
    pub fn amplitude(&self, counts: &[u32]) -> Amplitude {
        self.terms
            .get(&Occupation(counts.to_vec()))
            .copied()
            .unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Amplitude)> {
        self.terms.iter()
    }

    /// Terms in lexicographic occupation order.
    pub fn sorted_terms(&self) -> Vec<(&Occupation, Amplitude)> {
        let mut v: Vec<_> = self.terms.iter().map(|(o, a)| (o, *a)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Set of total photon numbers present in the support.
    pub fn photon_numbers(&self) -> BTreeSet<u32> {
        self.terms.keys().map(Occupation::total).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Drops every amplitude with magnitude below the prune tolerance.
    pub fn prune(mut self) -> Self {
        let tol_sq = self.prune_tolerance * self.prune_tolerance;
        self.terms.retain(|_, a| a.norm_sqr() >= tol_sq && a.norm_sqr() > 0.0);
        self
    }

    pub fn scale(&self, factor: Amplitude) -> Self {
        let terms = self.terms.iter().map(|(o, a)| (o.clone(), a * factor)).collect();
        Self { terms, ..self.empty_like() }.prune()
    }

    /// The state rescaled to unit norm, or `None` when it has zero norm.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sq();
        if n > 0.0 && n.is_finite() {
            Some(self.scale(Amplitude::new(1.0 / n.sqrt(), 0.0)))
        } else {
            None
        }
    }

    pub fn ensure_normalized(&self) -> FockResult<()> {
        let n = self.norm_sq();
        if (n - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(FockError::NotNormalized(n));
        }
        Ok(())
    }

    pub fn check_mode(&self, mode: usize) -> FockResult<()> {
        if mode >= self.num_modes {
            return Err(FockError::InvalidMode {
                mode,
                num_modes: self.num_modes,
            });
        }
        Ok(())
    }

    /// Validates a list of distinct, in-range modes.
    pub fn check_modes(&self, modes: &[usize]) -> FockResult<()> {
        let mut seen = BTreeSet::new();
        for &m in modes {
            self.check_mode(m)?;
            if !seen.insert(m) {
                return Err(FockError::DuplicateMode(m));
            }
        }
        Ok(())
    }

    /// Applies `(a_mode^†)^power` with bosonic normalization
    /// a†|n⟩ = √(n+1)|n+1⟩.
    pub fn apply_creation(&self, mode: usize, power: u32) -> FockResult<Self> {
        self.check_mode(mode)?;
        let terms = self
            .terms
            .iter()
            .map(|(occ, amp)| {
                let mut counts = occ.0.clone();
                let n = counts[mode];
                let factor: f64 = (n + 1..=n + power).map(|m| f64::from(m).sqrt()).product();
                counts[mode] = n + power;
                (Occupation(counts), amp * factor)
            })
            .collect();
        Ok(Self { terms, ..self.empty_like() }.prune())
    }

    /// Splits the state by the photon counts found in `modes`.
    ///
    /// Each entry maps the detected tuple to the (unnormalized) component with
    /// those modes reset to zero.
    pub fn split_by_modes(&self, modes: &[usize]) -> FockResult<BTreeMap<Vec<u32>, FockState>> {
        self.check_modes(modes)?;
        let mut out: BTreeMap<Vec<u32>, FockState> = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let detected: Vec<u32> = modes.iter().map(|&m| occ.0[m]).collect();
            let mut residual = occ.0.clone();
            for &m in modes {
                residual[m] = 0;
            }
            out.entry(detected)
                .or_insert_with(|| self.empty_like())
                .terms
                .insert(Occupation(residual), *amp);
        }
        Ok(out)
    }

    /// Probability of each photon-count tuple on `modes`.
    ///
    /// The input must be normalized; an unnormalized state is reported as an
    /// error rather than silently rescaled.
    pub fn photon_number_distribution(&self, modes: &[usize]) -> FockResult<BTreeMap<Vec<u32>, f64>> {
        self.ensure_normalized()?;
        self.check_modes(modes)?;
        let mut dist: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let key: Vec<u32> = modes.iter().map(|&m| occ.0[m]).collect();
            *dist.entry(key).or_default() += amp.norm_sqr();
        }
        Ok(dist)
    }

    /// Removes modes that are unoccupied in every term.
    pub fn drop_modes(&self, modes: &[usize]) -> FockResult<Self> {
        self.check_modes(modes)?;
        let keep: Vec<usize> = (0..self.num_modes).filter(|m| !modes.contains(m)).collect();
        if keep.is_empty() {
            return Err(FockError::NoModes);
        }
        let mut terms = HashMap::with_capacity(self.terms.len());
        for (occ, amp) in &self.terms {
            if let Some(&m) = modes.iter().find(|&&m| occ.0[m] != 0) {
                return Err(FockError::OccupiedMode(m));
            }
            terms.insert(Occupation(keep.iter().map(|&m| occ.0[m]).collect()), *amp);
        }
        Ok(Self {
            num_modes: keep.len(),
            terms,
            prune_tolerance: self.prune_tolerance,
        })
    }

    pub(crate) fn empty_like(&self) -> Self {
        Self {
            num_modes: self.num_modes,
            terms: HashMap::new(),
            prune_tolerance: self.prune_tolerance,
        }
    }

    pub(crate) fn from_map(num_modes: usize, terms: HashMap<Occupation, Amplitude>, prune_tolerance: f64) -> Self {
        Self {
            num_modes,
            terms,
            prune_tolerance,
        }
        .prune()
    }
}

/// Termwise `c1·s1 + c2·s2`.
pub fn superpose(s1: &FockState, c1: Amplitude, s2: &FockState, c2: Amplitude) -> FockResult<FockState> {
    if s1.num_modes != s2.num_modes {
        return Err(FockError::ModeCountMismatch {
            left: s1.num_modes,
            right: s2.num_modes,
        });
    }
    let mut terms: HashMap<Occupation, Amplitude> = HashMap::with_capacity(s1.len() + s2.len());
    for (o, a) in &s1.terms {
        *terms.entry(o.clone()).or_default() += a * c1;
    }
    for (o, a) in &s2.terms {
        *terms.entry(o.clone()).or_default() += a * c2;
    }
    Ok(FockState::from_map(s1.num_modes, terms, s1.prune_tolerance))
}

/// Tensor product; modes of `s2` are appended after those of `s1`.
pub fn tensor(s1: &FockState, s2: &FockState) -> FockState {
    let mut terms = HashMap::with_capacity(s1.len() * s2.len());
    for (o1, a1) in &s1.terms {
        for (o2, a2) in &s2.terms {
            let mut counts = Vec::with_capacity(s1.num_modes + s2.num_modes);
            counts.extend_from_slice(&o1.0);
            counts.extend_from_slice(&o2.0);
            terms.insert(Occupation(counts), a1 * a2);
        }
    }
    FockState::from_map(
        s1.num_modes + s2.num_modes,
        terms,
        s1.prune_tolerance.max(s2.prune_tolerance),
    )
}

/// ⟨s1|s2⟩, conjugate-linear in the first argument.
pub fn inner_product(s1: &FockState, s2: &FockState) -> FockResult<Amplitude> {
    if s1.num_modes != s2.num_modes {
        return Err(FockError::ModeCountMismatch {
            left: s1.num_modes,
            right: s2.num_modes,
        });
    }
    let (small, large, conj_small) = if s1.len() <= s2.len() {
        (s1, s2, true)
    } else {
        (s2, s1, false)
    };
    let mut acc = Amplitude::default();
    for (o, a) in &small.terms {
        if let Some(b) = large.terms.get(o) {
            acc += if conj_small { a.conj() * b } else { b.conj() * a };
        }
    }
    Ok(acc)
}

/// Global-phase-insensitive overlap |⟨a|b⟩|² / (‖a‖²‖b‖²).
pub fn fidelity(a: &FockState, b: &FockState) -> FockResult<f64> {
    let overlap = inner_product(a, b)?.norm_sqr();
    let denom = a.norm_sq() * b.norm_sq();
    Ok(if denom > 0.0 { overlap / denom } else { 0.0 })
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    occ: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct FockStateRepr {
    num_modes: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for FockState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let terms = self
            .sorted_terms()
            .into_iter()
            .map(|(o, a)| TermRepr {
                occ: o.0.clone(),
                re: a.re,
                im: a.im,
            })
            .collect();
        FockStateRepr {
            num_modes: self.num_modes,
            terms,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FockState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FockStateRepr::deserialize(deserializer)?;
        FockState::from_terms(
            repr.num_modes,
            repr.terms
                .into_iter()
                .map(|t| (t.occ, Amplitude::new(t.re, t.im))),
        )
        .map_err(serde::de::Error::custom)
    }
}

impl PartialEq for FockState {
    /// Exact equality of mode count and stored terms.
    fn eq(&self, other: &Self) -> bool {
        self.num_modes == other.num_modes && self.terms == other.terms
    }
}
