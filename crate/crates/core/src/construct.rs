//! Builders: rotations as 2-IETs and the gluing that turns an unflipped
//! m-IET into an (m+1)-fIET with two flipped intervals whose first return
//! to the original domain is the source map.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fiet::{FietError, FlipIET};
use crate::perm::SignedPermutation;
use crate::scalar::{ArithError, Backend, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum ConstructError {
    /// rotation_iet needs 0 < alpha < 1.
    AlphaOutOfRange,
    /// Gluing is defined for honest IETs only (empty flip set).
    Flipped,
    /// The source domain must be [0, 1).
    NotNormalized,
    /// No symbol with bottom position 1; guards corrupt permutation data.
    MissingAlpha0,
    Arith(ArithError),
    Fiet(FietError),
}

impl fmt::Display for ConstructError {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstructError::AlphaOutOfRange => write!(out, "rotation angle must lie in (0, 1)"),
            ConstructError::Flipped => write!(out, "source map has flipped intervals"),
            ConstructError::NotNormalized => write!(out, "source domain must be [0, 1)"),
            ConstructError::MissingAlpha0 => {
                write!(out, "no symbol occupies bottom position 1")
            }
            ConstructError::Arith(e) => write!(out, "arithmetic failure: {e}"),
            ConstructError::Fiet(e) => write!(out, "invalid interval data: {e}"),
        }
    }
}

impl std::error::Error for ConstructError {}

impl From<ArithError> for ConstructError {
    fn from(e: ArithError) -> ConstructError {
        ConstructError::Arith(e)
    }
}

impl From<FietError> for ConstructError {
    fn from(e: FietError) -> ConstructError {
        ConstructError::Fiet(e)
    }
}

/// Record of one gluing: the source map plus the cut data that determined
/// the extension.  `betas[i]` is the i-th discontinuity point of the source
/// (partial sums of lengths in top order, with betas[0] = 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlueSpec {
    pub source: FlipIET,
    /// Symbol of the source with bottom position 1.
    pub alpha0: usize,
    /// Top position of `alpha0` in the source.
    pub i0: usize,
    pub betas: Vec<Scalar>,
    /// Domain length of the glued map: 1 + lambda_{alpha0}.
    pub extended_length: Scalar,
}

/// A glued map together with its construction record.
#[derive(Debug, Clone)]
pub struct Glued {
    pub fiet: FlipIET,
    pub spec: GlueSpec,
}

/// The 2-IET realizing x -> x + alpha (mod 1) away from endpoints:
/// lengths (1 - alpha, alpha) with the two intervals swapped, no flips.
pub fn rotation_iet(alpha: &Scalar) -> Result<FlipIET, ConstructError> {
    let backend = alpha.backend();
    let zero = Scalar::zero(backend);
    let one = Scalar::one(backend);
    if alpha.compare(&zero)? != Ordering::Greater || alpha.compare(&one)? != Ordering::Less {
        return Err(ConstructError::AlphaOutOfRange);
    }
    let perm = SignedPermutation::new(vec![1, 2], vec![2, 1], vec![false, false])
        .expect("fixed 2-symbol data");
    let lengths = vec![one.sub(alpha)?, alpha.clone()];
    Ok(FlipIET::new(perm, lengths)?)
}

/// Extend an unflipped IET on [0, 1) to a map on [0, 1 + lambda_{alpha0})
/// with two flipped intervals.  Writing alpha0 for the symbol sent to bottom
/// position 1 and J for the appended segment [1, 1 + lambda_{alpha0}):
/// the glued map agrees with the source off I_{alpha0} and J, maps
/// int(I_{alpha0}) onto int(J) reversing orientation, and maps int(J)
/// reversing orientation onto (0, lambda_{alpha0}), the source's image of
/// I_{alpha0}.  Its first return to [0, 1) is the source at every interior
/// point: one step off I_{alpha0}, two steps through J on it.
pub fn glue_flip(source: &FlipIET) -> Result<Glued, ConstructError> {
    let backend = source.backend();
    let m = source.n();
    if source.perm().has_flip() {
        return Err(ConstructError::Flipped);
    }
    let one = Scalar::one(backend);
    if source.total().compare(&one)? != Ordering::Equal {
        return Err(ConstructError::NotNormalized);
    }
    let alpha0 = (0..m)
        .find(|&s| source.perm().bottom_position(s) == 1)
        .ok_or(ConstructError::MissingAlpha0)?;
    let i0 = source.perm().top_position(alpha0);

    // A new symbol appended at the top-right takes bottom position 1 while
    // alpha0 moves to bottom position m+1.  Everything else is fixed.
    let mut top = Vec::with_capacity(m + 1);
    let mut bottom = Vec::with_capacity(m + 1);
    let mut flipped = vec![false; m + 1];
    for s in 0..m {
        top.push(source.perm().top_position(s));
        bottom.push(if s == alpha0 {
            m + 1
        } else {
            source.perm().bottom_position(s)
        });
    }
    top.push(m + 1);
    bottom.push(1);
    flipped[alpha0] = true;
    flipped[m] = true;
    let perm = SignedPermutation::new(top, bottom, flipped).expect("positions permuted");

    let mut lengths = source.lengths().to_vec();
    lengths.push(source.length(alpha0).clone());
    let fiet = FlipIET::new(perm, lengths)?;

    let betas = source.cell_bounds();
    let extended_length = one.add(source.length(alpha0))?;
    Ok(Glued {
        fiet,
        spec: GlueSpec {
            source: source.clone(),
            alpha0,
            i0,
            betas,
            extended_length,
        },
    })
}

/// Rotation by (sqrt(5) - 1) / 2, carried exactly in the field adjoining
/// sqrt(5).
pub fn golden_rotation() -> FlipIET {
    let alpha = Scalar::parse_with_backend("-1/2+1/2*sqrt(5)", Backend::Quadratic { d: 5 })
        .expect("literal parses");
    rotation_iet(&alpha).expect("golden ratio fraction lies in (0,1)")
}

/// The 3-interval map glued from the golden rotation.
pub fn golden_glued() -> Glued {
    glue_flip(&golden_rotation()).expect("golden rotation is a unit-domain IET")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{detect_periodic, iterate_orbit, verify_first_return, StopReason};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rat(num: i64, den: i64) -> Scalar {
        Scalar::from_ratio(num, den, Backend::Rational)
    }

    #[test]
    fn half_rotation_is_an_involution() {
        let f = rotation_iet(&rat(1, 2)).unwrap();
        for (num, den) in [(1, 4), (1, 3), (7, 8), (9, 16)] {
            let x = rat(num, den);
            let y = f.evaluate(&x).unwrap();
            assert_eq!(f.evaluate(&y).unwrap(), x);
        }
        assert_eq!(f.evaluate(&rat(1, 4)).unwrap(), rat(3, 4));
    }

    #[test]
    fn rotation_by_two_fifths_has_period_five() {
        let f = rotation_iet(&rat(2, 5)).unwrap();
        let orbit = iterate_orbit(&f, &rat(1, 10), 50);
        assert_eq!(orbit.stop, StopReason::CycleDetected { period: 5 });
        // detect_periodic covers the endpoint orbit as well: the germ on the
        // right of 0 recurs with the same period.
        let found = detect_periodic(&f, 50).unwrap().expect("rational rotation cycles");
        assert_eq!(found.period, 5);
        let witness_orbit = iterate_orbit(&f, &found.witness, 50);
        assert_eq!(witness_orbit.stop, StopReason::CycleDetected { period: 5 });
    }

    #[test]
    fn golden_rotation_has_no_short_cycle() {
        let f = golden_rotation();
        let x0 = Scalar::from_ratio(1, 3, f.backend());
        let orbit = iterate_orbit(&f, &x0, 10_000);
        assert_eq!(orbit.stop, StopReason::Budget);
        assert_eq!(orbit.steps(), 10_000);
    }

    #[test]
    fn glued_shape_two_flips_and_extended_domain() {
        let source = rotation_iet(&rat(2, 5)).unwrap();
        let glued = glue_flip(&source).unwrap();
        let t = &glued.fiet;
        assert_eq!(t.n(), 3);
        assert_eq!(t.perm().flip_set(), vec![1, 2]);
        assert_eq!(t.total(), rat(7, 5));
        assert_eq!(glued.spec.alpha0, 1);
        assert_eq!(glued.spec.i0, 2);
        assert_eq!(glued.spec.extended_length, rat(7, 5));
        assert_eq!(glued.spec.betas, vec![rat(0, 1), rat(3, 5), rat(1, 1)]);
    }

    #[test]
    fn glued_first_return_recovers_the_source() {
        let source = rotation_iet(&rat(2, 5)).unwrap();
        let glued = glue_flip(&source).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x676c7565);
        let one = Scalar::one(Backend::Rational);
        let report =
            verify_first_return(&glued.fiet, &source, &one, 100, &mut rng).unwrap();
        assert_eq!(report.disagreements, 0);
        assert_eq!(report.agreements, 100);
    }

    #[test]
    fn double_application_matches_source_on_the_cut_cell() {
        let source = rotation_iet(&rat(2, 5)).unwrap();
        let glued = glue_flip(&source).unwrap();
        let t = &glued.fiet;
        let bounds = source.cell_bounds();
        let lo = &bounds[glued.spec.i0 - 1];
        let hi = &bounds[glued.spec.i0];
        // Sample the interior of I_{alpha0} at k/17 of the way across.
        for k in 1..17i64 {
            let frac = rat(k, 17);
            let x = lo.add(&hi.sub(lo).unwrap().mul(&frac).unwrap()).unwrap();
            let once = t.evaluate(&x).unwrap();
            assert_eq!(t.evaluate(&once).unwrap(), source.evaluate(&x).unwrap());
        }
    }

    #[test]
    fn golden_glued_text_and_normalized_lengths() {
        let glued = golden_glued();
        let t = &glued.fiet;
        assert_eq!(t.perm().to_string(), "2 -3 -1");
        let q5 = Backend::Quadratic { d: 5 };
        let parse = |s: &str| Scalar::parse_with_backend(s, q5).unwrap();
        // Lengths (1-a, a, a) with a the golden fraction; total 1+a.
        assert_eq!(t.length(1), t.length(2));
        assert_eq!(t.total(), parse("1/2+1/2*sqrt(5)"));
        let normalized = t.normalize().unwrap();
        assert_eq!(normalized.length(0), &parse("-2+sqrt(5)"));
        assert_eq!(normalized.length(1), &parse("3/2-1/2*sqrt(5)"));
        assert_eq!(normalized.length(2), &parse("3/2-1/2*sqrt(5)"));
        assert_eq!(normalized.total(), Scalar::one(q5));
    }

    #[test]
    fn gluing_rejects_bad_sources() {
        let flipped = FlipIET::parse("-2 1", &["1/2", "1/2"], Backend::Rational).unwrap();
        assert_eq!(glue_flip(&flipped).unwrap_err(), ConstructError::Flipped);
        let long = FlipIET::parse("2 1", &["1", "1"], Backend::Rational).unwrap();
        assert_eq!(glue_flip(&long).unwrap_err(), ConstructError::NotNormalized);
        assert_eq!(
            rotation_iet(&rat(7, 5)).unwrap_err(),
            ConstructError::AlphaOutOfRange
        );
        assert_eq!(
            rotation_iet(&rat(-1, 5)).unwrap_err(),
            ConstructError::AlphaOutOfRange
        );
    }

    #[test]
    fn first_return_identity_across_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x726f74);
        let one = Scalar::one(Backend::Rational);
        for _ in 0..50 {
            let den = rng.gen_range(5..200u64) as i64;
            let num = rng.gen_range(1..den as u64) as i64;
            let source = rotation_iet(&rat(num, den)).unwrap();
            let glued = glue_flip(&source).unwrap();
            let report =
                verify_first_return(&glued.fiet, &source, &one, 20, &mut rng).unwrap();
            assert_eq!(report.disagreements, 0, "rotation {num}/{den}");
            assert_eq!(report.agreements, 20, "rotation {num}/{den}");
        }
    }

    #[test]
    fn first_return_identity_across_random_three_interval_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x33696574);
        let one = Scalar::one(Backend::Rational);
        let bottoms: [[usize; 3]; 5] = [
            [3, 2, 1],
            [2, 3, 1],
            [3, 1, 2],
            [1, 3, 2],
            [2, 1, 3],
        ];
        for trial in 0..10 {
            let bottom = bottoms[trial % bottoms.len()];
            let perm = SignedPermutation::new(
                vec![1, 2, 3],
                bottom.to_vec(),
                vec![false; 3],
            )
            .unwrap();
            // Random positive rational lengths, normalized to a unit domain.
            let raw: Vec<i64> = (0..3).map(|_| rng.gen_range(1..40u64) as i64).collect();
            let total: i64 = raw.iter().sum();
            let lengths: Vec<Scalar> = raw.iter().map(|&v| rat(v, total)).collect();
            let source = FlipIET::new(perm, lengths).unwrap();
            let glued = glue_flip(&source).unwrap();
            let report =
                verify_first_return(&glued.fiet, &source, &one, 20, &mut rng).unwrap();
            assert_eq!(report.disagreements, 0, "trial {trial}");
            assert_eq!(report.agreements, 20, "trial {trial}");
        }
    }

    #[test]
    fn glue_spec_serializes_with_the_map() {
        let glued = glue_flip(&rotation_iet(&rat(1, 3)).unwrap()).unwrap();
        let text = serde_json::to_string(&glued.spec).unwrap();
        let back: GlueSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.alpha0, glued.spec.alpha0);
        assert_eq!(back.betas, glued.spec.betas);
        assert_eq!(back.source.perm(), glued.spec.source.perm());
    }
}
