//! Linear-optical elements and photon-counting measurements on [`FockState`]s.
//!
//! Beam-splitter convention (creation operators, Schrödinger picture):
//! a† → (a† + i b†)/√2, b† → (i a† + b†)/√2. This is the adjoint of the
//! annihilation-operator map a → (a − i b)/√2, b → (−i a + b)/√2.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::fock::{Amplitude, FockError, FockState, Occupation};

/// Largest photon count a single beam splitter can mix (f64 factorial range).
pub const MAX_PHOTONS_PER_SPLITTER: u32 = 170;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error(transparent)]
    Fock(#[from] FockError),

    #[error("beam splitter needs two distinct modes, got {0} twice")]
    SameMode(usize),

    #[error("{photons} photons exceed the beam splitter limit of {MAX_PHOTONS_PER_SPLITTER}")]
    TooManyPhotons { photons: u32 },

    #[error("detector efficiency {0} outside [0, 1]")]
    EfficiencyOutOfRange(f64),
}

pub type OpticsResult<T> = Result<T, OpticsError>;

fn factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(MAX_PHOTONS_PER_SPLITTER as usize + 1);
        t.push(1.0);
        for k in 1..=MAX_PHOTONS_PER_SPLITTER {
            let prev = t[k as usize - 1];
            t.push(prev * f64::from(k));
        }
        t
    })
}

fn binomial(n: u32, k: u32) -> f64 {
    let f = factorials();
    (f[n as usize] / (f[k as usize] * f[(n - k) as usize])).round()
}

fn i_pow(m: u32) -> Amplitude {
    match m % 4 {
        0 => Amplitude::new(1.0, 0.0),
        1 => Amplitude::new(0.0, 1.0),
        2 => Amplitude::new(-1.0, 0.0),
        _ => Amplitude::new(0.0, -1.0),
    }
}

/// 50:50 beam splitter mixing modes `i` and `j`.
pub fn apply_beam_splitter(s: &FockState, i: usize, j: usize) -> OpticsResult<FockState> {
    s.check_mode(i)?;
    s.check_mode(j)?;
    if i == j {
        return Err(OpticsError::SameMode(i));
    }
    let f = factorials();
    let mut out: HashMap<Occupation, Amplitude> = HashMap::with_capacity(s.len() * 4);
    for (occ, amp) in s.terms() {
        let (ni, nj) = (occ.counts()[i], occ.counts()[j]);
        if ni + nj > MAX_PHOTONS_PER_SPLITTER {
            return Err(OpticsError::TooManyPhotons { photons: ni + nj });
        }
        let norm = (f[ni as usize] * f[nj as usize]).sqrt() * 2f64.powf(f64::from(ni + nj) / 2.0);
        for k in 0..=ni {
            let ck = binomial(ni, k);
            for l in 0..=nj {
                let p = k + l;
                let q = ni + nj - p;
                let weight = ck * binomial(nj, l) * (f[p as usize] * f[q as usize]).sqrt() / norm;
                let mut counts = occ.counts().to_vec();
                counts[i] = p;
                counts[j] = q;
                *out.entry(Occupation::new(counts)).or_default() += amp * i_pow(ni - k + l) * weight;
            }
        }
    }
    Ok(FockState::from_map(s.num_modes(), out, s.prune_tolerance()))
}

/// Phase shifter: each term picks up e^{i·theta·n_mode}.
pub fn apply_phase_shift(s: &FockState, mode: usize, theta: f64) -> OpticsResult<FockState> {
    s.check_mode(mode)?;
    let terms = s
        .terms()
        .map(|(occ, amp)| {
            let n = f64::from(occ.counts()[mode]);
            (occ.clone(), amp * Amplitude::from_polar(1.0, theta * n))
        })
        .collect();
    Ok(FockState::from_map(s.num_modes(), terms, s.prune_tolerance()))
}

/// One outcome of an ideal photon-number-resolving measurement.
#[derive(Clone, Debug, Serialize)]
pub struct DetectionBranch {
    /// Photon counts on the measured modes, in the order they were listed.
    pub detected: Vec<u32>,
    pub weight: f64,
    /// Conditional state, measured modes reset to zero.
    pub post_state: FockState,
}

/// Complete set of photon-counting outcomes on `modes`, ordered by outcome.
pub fn measure_branches(s: &FockState, modes: &[usize]) -> OpticsResult<Vec<DetectionBranch>> {
    s.ensure_normalized()?;
    let parts = s.split_by_modes(modes)?;
    Ok(parts
        .into_iter()
        .filter_map(|(detected, component)| {
            let weight = component.norm_sq();
            component.normalized().map(|post_state| DetectionBranch {
                detected,
                weight,
                post_state,
            })
        })
        .collect())
}

/// Post-selects on zero photons in every listed mode.
///
/// Returns the success probability and the normalized conditional state
/// (an empty state when the probability is zero).
pub fn project_vacuum(s: &FockState, modes: &[usize]) -> OpticsResult<(f64, FockState)> {
    s.ensure_normalized()?;
    let (prob, component) = vacuum_component(s, modes)?;
    let post = component.normalized().unwrap_or_else(|| s.empty_like());
    Ok((prob, post))
}

/// The unnormalized zero-count component on `modes` and its squared norm.
pub fn vacuum_component(s: &FockState, modes: &[usize]) -> OpticsResult<(f64, FockState)> {
    s.check_modes(modes)?;
    let terms: HashMap<Occupation, Amplitude> = s
        .terms()
        .filter(|(occ, _)| modes.iter().all(|&m| occ.counts()[m] == 0))
        .map(|(o, a)| (o.clone(), *a))
        .collect();
    let component = FockState::from_map(s.num_modes(), terms, s.prune_tolerance());
    Ok((component.norm_sq(), component))
}

/// Distribution of the total photon number found on `modes`.
pub fn total_count_distribution(s: &FockState, modes: &[usize]) -> OpticsResult<BTreeMap<u32, f64>> {
    let dist = s.photon_number_distribution(modes)?;
    let mut out = BTreeMap::new();
    for (tuple, p) in dist {
        *out.entry(tuple.iter().sum()).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Decomposition of the "no detector clicked" event with imperfect detectors.
#[derive(Clone, Debug, Serialize)]
pub struct LossyAcceptResult {
    pub accept_prob: f64,
    /// Probability of accepting with no photon absorbed.
    pub true_weight: f64,
    /// Probability of accepting although `key` photons were absorbed.
    pub corrupt_weights: BTreeMap<u32, f64>,
    pub eta: f64,
}

/// No-click post-selection with detectors of efficiency `eta`: a detector that
/// absorbed `j` photons stays silent with probability (1 − eta)^j.
pub fn lossy_no_click_accept(s: &FockState, modes: &[usize], eta: f64) -> OpticsResult<LossyAcceptResult> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(OpticsError::EfficiencyOutOfRange(eta));
    }
    let spectrum = total_count_distribution(s, modes)?;
    Ok(lossy_accept_from_spectrum(&spectrum, eta))
}

/// Applies the per-photon no-click model to a total-count spectrum.
pub fn lossy_accept_from_spectrum(spectrum: &BTreeMap<u32, f64>, eta: f64) -> LossyAcceptResult {
    let miss = 1.0 - eta;
    let true_weight = spectrum.get(&0).copied().unwrap_or(0.0);
    let corrupt_weights: BTreeMap<u32, f64> = spectrum
        .iter()
        .filter(|(&j, _)| j > 0)
        .map(|(&j, &p)| (j, p * miss.powi(j as i32)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let accept_prob = true_weight + corrupt_weights.values().sum::<f64>();
    LossyAcceptResult {
        accept_prob,
        true_weight,
        corrupt_weights,
        eta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{inner_product, superpose};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Amplitude {
        Amplitude::new(re, im)
    }

    fn assert_amp(s: &FockState, occ: &[u32], expected: Amplitude) {
        let got = s.amplitude(occ);
        assert!((got - expected).norm() < 1e-12, "{occ:?}: got {got}, expected {expected}");
    }

    /// Doubling-step intermediate state at N=1 built by hand:
    /// ((a+ic)+(b+id))((ia+c)−(ib+d))|0⟩/4 on modes (a,b,c,d).
    fn tn_intermediate_n1() -> FockState {
        let cat = FockState::from_terms(2, [(vec![1, 0], c(FRAC_1_SQRT_2, 0.0)), (vec![0, 1], c(FRAC_1_SQRT_2, 0.0))]).unwrap();
        let s = crate::fock::tensor(&cat, &cat);
        let s = apply_phase_shift(&s, 3, PI).unwrap();
        let s = apply_beam_splitter(&s, 0, 2).unwrap();
        apply_beam_splitter(&s, 1, 3).unwrap()
    }

    #[test]
    fn beam_splitter_single_photon() {
        let s = apply_beam_splitter(&FockState::basis(vec![1, 0]).unwrap(), 0, 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_amp(&s, &[1, 0], c(FRAC_1_SQRT_2, 0.0));
        assert_amp(&s, &[0, 1], c(0.0, FRAC_1_SQRT_2));
    }

    #[test]
    fn beam_splitter_hong_ou_mandel() {
        let s = apply_beam_splitter(&FockState::basis(vec![1, 1]).unwrap(), 0, 1).unwrap();
        assert_amp(&s, &[2, 0], c(0.0, FRAC_1_SQRT_2));
        assert_amp(&s, &[0, 2], c(0.0, FRAC_1_SQRT_2));
        assert_eq!(s.amplitude(&[1, 1]), c(0.0, 0.0));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn beam_splitter_errors() {
        let s = FockState::vacuum(2).unwrap();
        assert_eq!(apply_beam_splitter(&s, 1, 1).unwrap_err(), OpticsError::SameMode(1));
        assert!(matches!(apply_beam_splitter(&s, 0, 2), Err(OpticsError::Fock(FockError::InvalidMode { .. }))));
    }

    #[test]
    fn beam_splitter_twice_is_phase_i_per_photon() {
        for occ in [vec![1, 0], vec![0, 3], vec![2, 1], vec![4, 5]] {
            let s = FockState::basis(occ.clone()).unwrap();
            let twice = apply_beam_splitter(&apply_beam_splitter(&s, 0, 1).unwrap(), 0, 1).unwrap();
            // a†→i b†, b†→i a†: photons swap modes and gain a phase i each
            let swapped = vec![occ[1], occ[0]];
            let n: u32 = occ.iter().sum();
            assert_eq!(twice.len(), 1, "{occ:?}");
            assert_amp(&twice, &swapped, i_pow(n));
        }
    }

    #[test]
    fn phase_shift_cases() {
        let cat2 = FockState::from_terms(2, [(vec![2, 0], c(FRAC_1_SQRT_2, 0.0)), (vec![0, 2], c(FRAC_1_SQRT_2, 0.0))]).unwrap();
        assert_eq!(apply_phase_shift(&cat2, 0, 0.0).unwrap(), cat2);

        let s = apply_phase_shift(&FockState::basis(vec![0, 3]).unwrap(), 1, PI / 3.0).unwrap();
        assert_amp(&s, &[0, 3], c(-1.0, 0.0));

        let s = apply_phase_shift(&cat2, 1, PI / 4.0).unwrap();
        assert_amp(&s, &[2, 0], c(FRAC_1_SQRT_2, 0.0));
        assert_amp(&s, &[0, 2], c(0.0, FRAC_1_SQRT_2));

        assert!(apply_phase_shift(&cat2, 2, 1.0).is_err());
    }

    #[test]
    fn project_vacuum_cases() {
        let v = FockState::vacuum(4).unwrap();
        let (p, post) = project_vacuum(&v, &[2, 3]).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(post, v);

        let (p, post) = project_vacuum(&FockState::basis(vec![1, 0]).unwrap(), &[0]).unwrap();
        assert_eq!(p, 0.0);
        assert!(post.is_empty());

        let doubled = v.scale(c(2.0, 0.0));
        assert!(matches!(project_vacuum(&doubled, &[0]), Err(OpticsError::Fock(FockError::NotNormalized(_)))));
    }

    #[test]
    fn measure_branches_cases() {
        let cat1 = FockState::from_terms(2, [(vec![1, 0], c(FRAC_1_SQRT_2, 0.0)), (vec![0, 1], c(FRAC_1_SQRT_2, 0.0))]).unwrap();
        let b = measure_branches(&cat1, &[0]).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].detected, vec![0]);
        assert!((b[0].weight - 0.5).abs() < 1e-15);
        assert_eq!(b[0].post_state, FockState::basis(vec![0, 1]).unwrap());
        assert_eq!(b[1].detected, vec![1]);
        assert_eq!(b[1].post_state, FockState::basis(vec![0, 0]).unwrap());

        let v = FockState::vacuum(3).unwrap();
        let b = measure_branches(&v, &[0, 2]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].weight, 1.0);
    }

    #[test]
    fn measurement_of_n1_doubling_state() {
        // Brute-force expansion by hand of ((a+ic)+(b+id))((ia+c)−(ib+d))/4:
        // vacuum on (c,d) 1/4, one photon 1/2, two photons 1/4, (1,1) absent.
        let s = tn_intermediate_n1();
        let branches = measure_branches(&s, &[2, 3]).unwrap();
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let by_count = |k: u32| -> f64 {
            branches
                .iter()
                .filter(|b| b.detected.iter().sum::<u32>() == k)
                .map(|b| b.weight)
                .sum()
        };
        assert!((by_count(0) - 0.25).abs() < 1e-12);
        assert!((by_count(1) - 0.5).abs() < 1e-12);
        assert!((by_count(2) - 0.25).abs() < 1e-12);
        assert!(branches.iter().all(|b| b.detected != vec![1, 1]));

        let (p0, post) = project_vacuum(&s, &[2, 3]).unwrap();
        assert!((p0 - branches[0].weight).abs() < 1e-12);
        assert!((inner_product(&post, &branches[0].post_state).unwrap().norm() - 1.0).abs() < 1e-12);

        let d = s.photon_number_distribution(&[2, 3]).unwrap();
        assert!((d[&vec![0, 0]] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn lossy_accept_cases() {
        let s = tn_intermediate_n1();
        let perfect = lossy_no_click_accept(&s, &[2, 3], 1.0).unwrap();
        assert!(perfect.corrupt_weights.is_empty());
        assert!((perfect.accept_prob - project_vacuum(&s, &[2, 3]).unwrap().0).abs() < 1e-15);

        let blind = lossy_no_click_accept(&s, &[2, 3], 0.0).unwrap();
        assert!((blind.accept_prob - 1.0).abs() < 1e-12);

        let r = lossy_no_click_accept(&s, &[2, 3], 0.9).unwrap();
        let expected = 0.25 + 0.1 * 0.5 + 0.01 * 0.25;
        assert!((r.accept_prob - expected).abs() < 1e-12);
        let sum = r.true_weight + r.corrupt_weights.values().sum::<f64>();
        assert!((r.accept_prob - sum).abs() < 1e-12);

        assert_eq!(
            lossy_no_click_accept(&s, &[2, 3], 1.5).unwrap_err(),
            OpticsError::EfficiencyOutOfRange(1.5)
        );
    }

    fn arb_state(max_total: u32) -> impl Strategy<Value = FockState> {
        prop::collection::vec(((0..=max_total / 2), (0..=max_total / 2), -1.0f64..1.0, -1.0f64..1.0), 1..6)
            .prop_filter_map("nonzero", |terms| {
                let s = FockState::from_terms(2, terms.into_iter().map(|(a, b, re, im)| (vec![a, b], c(re, im)))).ok()?;
                s.normalized()
            })
    }

    proptest! {
        #[test]
        fn elements_are_unitary_and_conserve_photons(s in arb_state(16), theta in -7.0f64..7.0) {
            let bs = apply_beam_splitter(&s, 0, 1).unwrap();
            prop_assert!((bs.norm_sq() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(bs.photon_numbers(), s.photon_numbers());

            let ps = apply_phase_shift(&s, 1, theta).unwrap();
            prop_assert!((ps.norm_sq() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(ps.photon_numbers(), s.photon_numbers());
        }

        #[test]
        fn measurement_is_complete(s in arb_state(10)) {
            let b = measure_branches(&s, &[1]).unwrap();
            let total: f64 = b.iter().map(|x| x.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            let (p0, _) = project_vacuum(&s, &[1]).unwrap();
            let zero = b.iter().find(|x| x.detected == vec![0]).map_or(0.0, |x| x.weight);
            prop_assert!((p0 - zero).abs() <= 1e-12);
        }

        #[test]
        fn lossy_accept_non_increasing_in_eta(s in arb_state(10)) {
            let etas = [0.0, 0.25, 0.5, 0.75, 1.0];
            let probs: Vec<f64> = etas.iter().map(|&e| lossy_no_click_accept(&s, &[0, 1], e).unwrap().accept_prob).collect();
            for w in probs.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }

    #[test]
    fn superposed_inputs_stay_linear() {
        let a = FockState::basis(vec![2, 1]).unwrap();
        let b = FockState::basis(vec![0, 3]).unwrap();
        let mix = superpose(&a, c(0.6, 0.0), &b, c(0.0, 0.8)).unwrap();
        let lhs = apply_beam_splitter(&mix, 0, 1).unwrap();
        let rhs = superpose(
            &apply_beam_splitter(&a, 0, 1).unwrap(),
            c(0.6, 0.0),
            &apply_beam_splitter(&b, 0, 1).unwrap(),
            c(0.0, 0.8),
        )
        .unwrap();
        assert!((inner_product(&lhs, &rhs).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
    }
}
