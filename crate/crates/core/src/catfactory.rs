//! Cat-state constructors and the two-into-one doubling step.
//!
//! Mode layout for the doubling step is fixed: the two input cats live on
//! (a, b) = (0, 1) and (c, d) = (2, 3). Modes 2 and 3 are heralded and end up
//! empty on success.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{self, AnalyticsError};
use crate::fock::{fidelity, tensor, Amplitude, FockError, FockState};
use crate::optics::{
    apply_beam_splitter, apply_phase_shift, lossy_no_click_accept, total_count_distribution, vacuum_component,
    LossyAcceptResult, OpticsError,
};

pub const MODE_A: usize = 0;
pub const MODE_B: usize = 1;
pub const MODE_C: usize = 2;
pub const MODE_D: usize = 3;

/// Heralding modes measured by the doubling step.
pub const HERALD_MODES: [usize; 2] = [MODE_C, MODE_D];

/// Largest cascade target simulated with Fock-space per-step probabilities.
pub const FOCK_CASCADE_LIMIT: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatError {
    #[error("cat photon number must be at least 1")]
    ZeroPhotons,

    #[error("target {0} is not a power of two")]
    NotPowerOfTwo(u64),

    #[error("cascade target must be at least 2, got {0}")]
    TargetTooSmall(u64),

    #[error("doubling input must have 2 modes, got {0}")]
    WrongModeCount(usize),

    #[error(transparent)]
    Fock(#[from] FockError),

    #[error(transparent)]
    Optics(#[from] OpticsError),

    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

pub type CatResult<T> = Result<T, CatError>;

/// Photon number N of a two-mode cat (|N,0⟩ + |0,N⟩)/√2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CatSpec(u32);

impl CatSpec {
    pub fn new(n: u32) -> CatResult<Self> {
        if n == 0 {
            return Err(CatError::ZeroPhotons);
        }
        Ok(Self(n))
    }

    pub fn n(self) -> u32 {
        self.0
    }

    pub fn is_power_of_two(self) -> bool {
        self.0.is_power_of_two()
    }
}

/// (|N,0⟩ + |0,N⟩)/√2, built analytically.
pub fn make_cat(spec: CatSpec) -> FockState {
    let amp = Amplitude::new(FRAC_1_SQRT_2, 0.0);
    FockState::from_terms(2, [(vec![spec.0, 0], amp), (vec![0, spec.0], amp)])
        .expect("two-mode terms are well formed")
}

/// |1_+⟩ from one photon on a beam splitter, with a −π/2 phase on mode b.
pub fn make_cat1_from_photon() -> FockState {
    let photon = FockState::basis(vec![1, 0]).expect("one mode at least");
    let split = apply_beam_splitter(&photon, MODE_A, MODE_B).expect("modes 0 and 1 exist");
    apply_phase_shift(&split, MODE_B, -PI / 2.0).expect("mode 1 exists")
}

/// |2_+⟩ from two photons interfering on a beam splitter.
///
/// The splitter outputs i(|2,0⟩ + |0,2⟩)/√2; a −π/4 shift on both modes
/// removes the factor i.
pub fn make_cat2_hom() -> FockState {
    let pair = FockState::basis(vec![1, 1]).expect("two modes");
    let s = apply_beam_splitter(&pair, MODE_A, MODE_B).expect("modes 0 and 1 exist");
    let s = apply_phase_shift(&s, MODE_A, -PI / 4.0).expect("mode 0 exists");
    apply_phase_shift(&s, MODE_B, -PI / 4.0).expect("mode 1 exists")
}

/// Result of one doubling attempt.
#[derive(Clone, Debug, Serialize)]
pub struct TnOutcome {
    pub n_in: u32,
    /// Probability that neither heralding mode contains a photon.
    pub success_prob: f64,
    /// Normalized two-mode output; `None` when the herald can never fire.
    pub output_state: Option<FockState>,
    /// Phase-insensitive fidelity of the output with |2n_+⟩.
    pub fidelity_to_target: f64,
    /// Four-mode state just before the heralding measurement.
    pub intermediate_state: FockState,
    /// Unnormalized heralded component (before the final phase correction).
    pub accepted_component: FockState,
}

fn check_input(s: &FockState) -> CatResult<()> {
    if s.num_modes() != 2 {
        return Err(CatError::WrongModeCount(s.num_modes()));
    }
    s.ensure_normalized()?;
    Ok(())
}

/// Four-mode state after the phase shift on d and the (a,c), (b,d) splitters.
pub fn tn_intermediate(left: &FockState, right: &FockState, n: u32) -> CatResult<FockState> {
    if n == 0 {
        return Err(CatError::ZeroPhotons);
    }
    check_input(left)?;
    check_input(right)?;
    let s = tensor(left, right);
    let s = apply_phase_shift(&s, MODE_D, PI / f64::from(n))?;
    let s = apply_beam_splitter(&s, MODE_A, MODE_C)?;
    Ok(apply_beam_splitter(&s, MODE_B, MODE_D)?)
}

/// Runs the doubling circuit on two two-mode inputs, heralding on no photon
/// in (c, d), then shifts mode b by π/(2n).
///
/// Inputs need not be exact cats; the reported fidelity is honest either way.
pub fn apply_tn(left: &FockState, right: &FockState, n: u32) -> CatResult<TnOutcome> {
    let intermediate = tn_intermediate(left, right, n)?;
    let (success_prob, accepted) = vacuum_component(&intermediate, &HERALD_MODES)?;
    let target = make_cat(CatSpec::new(2 * n)?);
    let output_state = match accepted.normalized() {
        Some(post) => {
            let shifted = apply_phase_shift(&post, MODE_B, PI / (2.0 * f64::from(n)))?;
            Some(shifted.drop_modes(&HERALD_MODES)?)
        }
        None => None,
    };
    let fidelity_to_target = match &output_state {
        Some(out) => fidelity(&target, out)?,
        None => 0.0,
    };
    Ok(TnOutcome {
        n_in: n,
        success_prob,
        output_state,
        fidelity_to_target,
        intermediate_state: intermediate,
        accepted_component: accepted,
    })
}

/// Distribution of the total photon number reaching the heralding detectors
/// when two exact |n_+⟩ are doubled. Entry 0 is the success probability.
pub fn tn_branch_spectrum(n: u32) -> CatResult<BTreeMap<u32, f64>> {
    let cat = make_cat(CatSpec::new(n)?);
    let intermediate = tn_intermediate(&cat, &cat, n)?;
    Ok(total_count_distribution(&intermediate, &HERALD_MODES)?)
}

/// No-click acceptance of a doubling step on exact cats with imperfect detectors.
pub fn tn_lossy_accept(n: u32, eta: f64) -> CatResult<LossyAcceptResult> {
    let cat = make_cat(CatSpec::new(n)?);
    let intermediate = tn_intermediate(&cat, &cat, n)?;
    Ok(lossy_no_click_accept(&intermediate, &HERALD_MODES, eta)?)
}

/// Where a cascade model took its per-step success probabilities from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilitySource {
    FockSimulation,
    ClosedForm,
}

/// One level of the memoryless cascade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CascadeLevel {
    /// Photon number of the inputs at this level.
    pub level: u64,
    pub success_prob: f64,
    /// Doubling steps that must all succeed at this level.
    pub steps: u64,
}

/// All-or-nothing cascade from `target` single-photon cats without memory.
#[derive(Clone, Debug, Serialize)]
pub struct CascadeModel {
    pub target_n: u64,
    pub levels: Vec<CascadeLevel>,
    pub source: ProbabilitySource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CascadeOutcome {
    pub success: bool,
    pub singles_consumed: u64,
    pub tn_attempts: u64,
}

impl CascadeModel {
    /// Per-step probabilities come from the Fock simulation up to
    /// [`FOCK_CASCADE_LIMIT`] and from the closed form beyond.
    pub fn new(target_n: u64) -> CatResult<Self> {
        if target_n < 2 {
            return Err(CatError::TargetTooSmall(target_n));
        }
        if !target_n.is_power_of_two() {
            return Err(CatError::NotPowerOfTwo(target_n));
        }
        let source = if target_n <= FOCK_CASCADE_LIMIT {
            ProbabilitySource::FockSimulation
        } else {
            ProbabilitySource::ClosedForm
        };
        let mut levels = Vec::new();
        let mut level = 1u64;
        while level < target_n {
            let success_prob = match source {
                ProbabilitySource::FockSimulation => {
                    let cat = make_cat(CatSpec::new(level as u32)?);
                    apply_tn(&cat, &cat, level as u32)?.success_prob
                }
                ProbabilitySource::ClosedForm => analytics::exact_p_tn(level)?.to_f64(),
            };
            levels.push(CascadeLevel {
                level,
                success_prob,
                steps: target_n / (2 * level),
            });
            level *= 2;
        }
        Ok(Self {
            target_n,
            levels,
            source,
        })
    }

    /// Product of all per-step probabilities.
    pub fn success_probability(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.success_prob.powi(l.steps as i32))
            .product()
    }

    /// One cascade; stops at the first failed step.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> CascadeOutcome {
        let mut tn_attempts = 0;
        for level in &self.levels {
            for _ in 0..level.steps {
                tn_attempts += 1;
                if rng.random::<f64>() >= level.success_prob {
                    return CascadeOutcome {
                        success: false,
                        singles_consumed: self.target_n,
                        tn_attempts,
                    };
                }
            }
        }
        CascadeOutcome {
            success: true,
            singles_consumed: self.target_n,
            tn_attempts,
        }
    }
}

/// Convenience wrapper building a [`CascadeModel`] for a single run.
pub fn naive_cascade<R: Rng + ?Sized>(target_n: u64, rng: &mut R) -> CatResult<CascadeOutcome> {
    Ok(CascadeModel::new(target_n)?.run(rng))
}
