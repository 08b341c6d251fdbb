//! Seeded sampling for the experiments. Simplex points are drawn as
//! spacings of sorted 64-bit uniforms, so every sample is an exact dyadic
//! rational with denominator 2^64: the same draw can be replayed on any
//! backend at any precision, and raw induction on the integer numerators
//! is exact. Per-sample streams are derived as hash(master seed, index),
//! which keeps parallel reductions order-independent.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::induction::{rauzy_step_raw, RauzyPath, RawStep, StepCase};
use crate::perm::SignedPermutation;
use crate::scalar::{Backend, Scalar};

/// Simplex samples live on the grid of multiples of 2^-LATTICE_BITS.
pub const LATTICE_BITS: u32 = 64;

/// Total lattice mass: gaps of one sample sum to this.
pub const LATTICE_ONE: u128 = 1 << LATTICE_BITS;

/// splitmix64-style mix of a master seed and a sample index.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The dedicated RNG stream of one sample.
pub fn sample_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(master, index))
}

/// One uniform simplex point as n positive lattice gaps summing to 2^64:
/// the spacings of n-1 sorted uniform draws. Zero gaps are redrawn.
pub fn sample_gaps<R: Rng>(n: usize, rng: &mut R) -> Vec<u128> {
    assert!(n >= 1);
    if n == 1 {
        return vec![LATTICE_ONE];
    }
    loop {
        let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.gen()).collect();
        cuts.sort_unstable();
        let mut gaps = Vec::with_capacity(n);
        let mut prev: u128 = 0;
        for &c in &cuts {
            gaps.push(c as u128 - prev);
            prev = c as u128;
        }
        gaps.push(LATTICE_ONE - prev);
        if gaps.iter().all(|&g| g > 0) {
            return gaps;
        }
    }
}

/// Lattice gaps as exact scalars summing to 1.
pub fn gaps_to_scalars(gaps: &[u128], backend: Backend) -> Vec<Scalar> {
    let denom = BigInt::from(1u8) << LATTICE_BITS;
    gaps.iter()
        .map(|&g| {
            Scalar::from_rational_value(
                BigRational::new(BigInt::from(g), denom.clone()),
                backend,
            )
        })
        .collect()
}

/// Uniform unit-sum lengths in the requested backend.
pub fn sample_lengths<R: Rng>(n: usize, backend: Backend, rng: &mut R) -> Vec<Scalar> {
    gaps_to_scalars(&sample_gaps(n, rng), backend)
}

/// Does raw induction from `perm` with these lengths follow exactly this
/// case sequence? Exact on the integer lattice; Tie or a reducible
/// successor before the end is a no.
pub fn follows_cases(perm: &SignedPermutation, lengths: &[u128], cases: &[StepCase]) -> bool {
    let mut perm = perm.clone();
    let mut lengths = lengths.to_vec();
    for (k, expected) in cases.iter().enumerate() {
        match rauzy_step_raw(&perm, &lengths).expect("u128 lane is exact") {
            RawStep::Tie => return false,
            RawStep::Advance {
                case,
                perm: next_perm,
                lengths: next_lengths,
                reducible,
                ..
            } => {
                if case != *expected {
                    return false;
                }
                if reducible && k + 1 < cases.len() {
                    return false;
                }
                perm = next_perm;
                lengths = next_lengths;
            }
        }
    }
    true
}

/// Rejection-sample `want` uniform points of the cylinder selected by the
/// loop's case sequence. Attempt indices seed the per-sample streams, so
/// the accepted set is deterministic and independent of thread count.
/// Returns the accepted (attempt index, gaps) pairs in attempt order plus
/// the number of attempts consumed; stops early at `max_attempts`.
pub fn sample_section(
    gamma: &RauzyPath,
    master: u64,
    want: usize,
    max_attempts: u64,
) -> (Vec<(u64, Vec<u128>)>, u64) {
    let n = gamma.start().n();
    let cases = gamma.cases();
    let mut accepted: Vec<(u64, Vec<u128>)> = Vec::with_capacity(want);
    let chunk = (want.max(256) * 4) as u64;
    let mut next_attempt: u64 = 0;
    while accepted.len() < want && next_attempt < max_attempts {
        let hi = (next_attempt + chunk).min(max_attempts);
        let mut batch: Vec<(u64, Vec<u128>)> = (next_attempt..hi)
            .into_par_iter()
            .filter_map(|i| {
                let mut rng = sample_rng(master, i);
                let gaps = sample_gaps(n, &mut rng);
                if follows_cases(gamma.start(), &gaps, &cases) {
                    Some((i, gaps))
                } else {
                    None
                }
            })
            .collect();
        batch.sort_by_key(|(i, _)| *i);
        for item in batch {
            if accepted.len() == want {
                break;
            }
            accepted.push(item);
        }
        next_attempt = hi;
    }
    // Attempts past the one that filled the quota don't count.
    let used = if accepted.len() == want {
        accepted.last().map(|(i, _)| i + 1).unwrap_or(0)
    } else {
        next_attempt
    };
    (accepted, used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiet::FlipIET;
    use crate::graph::reify_cases;
    use crate::induction::{rauzy_step, StepOutcome};

    #[test]
    fn gaps_are_positive_and_sum_to_one() {
        let mut rng = sample_rng(7, 0);
        for n in 1..=6 {
            let gaps = sample_gaps(n, &mut rng);
            assert_eq!(gaps.len(), n);
            assert!(gaps.iter().all(|&g| g > 0));
            assert_eq!(gaps.iter().sum::<u128>(), LATTICE_ONE);
            let scalars = gaps_to_scalars(&gaps, Backend::Rational);
            let total = Scalar::sum(&scalars, Backend::Rational).unwrap();
            assert_eq!(total, Scalar::one(Backend::Rational));
        }
    }

    #[test]
    fn streams_are_reproducible_and_index_separated() {
        let a1 = sample_gaps(4, &mut sample_rng(99, 5));
        let a2 = sample_gaps(4, &mut sample_rng(99, 5));
        let b = sample_gaps(4, &mut sample_rng(99, 6));
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(sample_seed(99, 5), sample_seed(99, 6));
        assert_ne!(sample_seed(99, 5), sample_seed(100, 5));
    }

    #[test]
    fn first_coordinate_mean_is_one_over_n() {
        let n = 3;
        let samples = 4000;
        let mut acc = 0.0f64;
        for i in 0..samples {
            let gaps = sample_gaps(n, &mut sample_rng(2024, i));
            acc += gaps[0] as f64 / LATTICE_ONE as f64;
        }
        let mean = acc / samples as f64;
        // Var of a flat Dirichlet coordinate is (n-1)/(n^2(n+1)) ~ 0.0185.
        assert!((mean - 1.0 / n as f64).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn lattice_lane_matches_exact_steps() {
        let perm: SignedPermutation = "3 2 1".parse().unwrap();
        for i in 0..40u64 {
            let gaps = sample_gaps(3, &mut sample_rng(5150, i));
            // Walk four steps on the exact scalar lane, recording cases.
            let mut f =
                FlipIET::new(perm.clone(), gaps_to_scalars(&gaps, Backend::Rational)).unwrap();
            let mut cases = Vec::new();
            for _ in 0..4 {
                match rauzy_step(&f).unwrap() {
                    StepOutcome::Step { next, arrow, .. } => {
                        cases.push(arrow.case);
                        f = next;
                    }
                    _ => break,
                }
            }
            if cases.is_empty() {
                continue;
            }
            assert!(follows_cases(&perm, &gaps, &cases));
            // Flipping the last expected case must break the match.
            let mut wrong = cases.clone();
            let last = wrong.last_mut().unwrap();
            *last = last.opposite();
            assert!(!follows_cases(&perm, &gaps, &wrong));
        }
    }

    #[test]
    fn section_sampler_returns_members_deterministically() {
        let start: SignedPermutation = "3 2 1".parse().unwrap();
        // Case A twice returns to "3 2 1": a genuine loop.
        let gamma = reify_cases(start.clone(), &[StepCase::A, StepCase::A]);
        assert_eq!(gamma.end(), &start);
        let (hits, used) = sample_section(&gamma, 31337, 25, 100_000);
        assert_eq!(hits.len(), 25);
        assert!(used >= 25);
        let cases = gamma.cases();
        for (_, gaps) in &hits {
            assert!(follows_cases(&start, gaps, &cases));
        }
        let (again, used_again) = sample_section(&gamma, 31337, 25, 100_000);
        assert_eq!(hits, again);
        assert_eq!(used, used_again);
        // Attempt indices are strictly increasing.
        for pair in hits.windows(2) {
            assert!(pair[0].0 < pair[1].0);
        }
    }
}
