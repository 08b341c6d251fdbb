//! One-step and accelerated Rauzy induction with flips.
//!
//! A step inspects the top-last symbol α₀ and the bottom-last symbol α₁ and
//! induces on [0, ν) where ν = |λ| minus the shorter of the two lengths.
//! Equal lengths are a terminal Tie; a reducible successor permutation is a
//! terminal Hole. The successor fIET is exactly the first-return map of the
//! input to [0, ν) — the oracle in `dynamics::verify_first_return` checks
//! this pointwise and is the ground truth every transition branch here was
//! derived from.
//!
//! Two naming schemes coexist. The arrow stores winner/loser labels keyed to
//! the case (case A names α₀ the winner, case B names α₁), matching the
//! convention used in reports. All logic instead keys off the length
//! inequality: the *semantic* winner is the longer symbol, whose length
//! shrinks and whose row-end slot survives.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiet::{FietError, FlipIET};
use crate::matrix::IntMatrix;
use crate::perm::SignedPermutation;
use crate::scalar::{ArithError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepCase {
    /// λ_{α₀} < λ_{α₁}: the top row is edited.
    A,
    /// λ_{α₀} > λ_{α₁}: the bottom row is edited.
    B,
}

impl StepCase {
    pub fn opposite(self) -> StepCase {
        match self {
            StepCase::A => StepCase::B,
            StepCase::B => StepCase::A,
        }
    }
}

impl fmt::Display for StepCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepCase::A => write!(f, "A"),
            StepCase::B => write!(f, "B"),
        }
    }
}

/// A symbol with the flip sign it carried when the arrow was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedSymbol {
    pub symbol: usize,
    pub flipped: bool,
}

impl fmt::Display for SignedSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = (b'A' + (self.symbol % 26) as u8) as char;
        if self.flipped {
            write!(f, "-{letter}")
        } else {
            write!(f, "{letter}")
        }
    }
}

/// The data of one induction decision: the two row-end symbols, the case,
/// and the induced interval length ν.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub alpha0: usize,
    pub alpha1: usize,
    pub case: StepCase,
    pub nu: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RauzyArrow {
    pub from: SignedPermutation,
    pub to: SignedPermutation,
    pub case: StepCase,
    /// Reporting label: α₀ in case A, α₁ in case B.
    pub winner: SignedSymbol,
    /// Reporting label: the other row-end symbol.
    pub loser: SignedSymbol,
    pub alpha0: usize,
    pub alpha1: usize,
    /// `E + unit(semantic winner, semantic loser)`, so λ = matrix · λ′.
    pub matrix: IntMatrix,
}

impl RauzyArrow {
    /// The longer row-end symbol: keeps its slot, its length shrinks.
    pub fn semantic_winner(&self) -> usize {
        match self.case {
            StepCase::A => self.alpha1,
            StepCase::B => self.alpha0,
        }
    }

    /// The shorter row-end symbol: cut off; `(B_γ q)` grows at its index.
    pub fn semantic_loser(&self) -> usize {
        match self.case {
            StepCase::A => self.alpha0,
            StepCase::B => self.alpha1,
        }
    }
}

/// `E + unit(semantic winner, semantic loser)`; λ = M λ′ has λ′ > 0, which
/// fixes the index orientation.
pub fn transition_matrix(arrow: &RauzyArrow) -> IntMatrix {
    IntMatrix::elementary(
        arrow.from.n(),
        arrow.semantic_winner(),
        arrow.semantic_loser(),
    )
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Step {
        next: FlipIET,
        arrow: RauzyArrow,
        decision: StepDecision,
    },
    /// λ_{α₀} = λ_{α₁}: induction is not defined; terminal.
    Tie,
    /// The successor permutation is reducible; terminal.
    Hole {
        case: StepCase,
        successor: SignedPermutation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InductionError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("arrow does not start where the path ends")]
    ChainMismatch,
    #[error("no decision within {steps} steps")]
    BudgetExceeded { steps: usize },
    #[error("markov section mismatch: {0}")]
    SectionMismatch(String),
}

impl From<FietError> for InductionError {
    fn from(e: FietError) -> InductionError {
        match e {
            FietError::Arith(a) => InductionError::Arith(a),
            other => InductionError::SectionMismatch(other.to_string()),
        }
    }
}

/// Length arithmetic the induction loop needs; lets the exact and the
/// floating-point lanes share one copy of the transition logic.
pub trait LenArith: Clone {
    fn cmp2(&self, rhs: &Self) -> Result<Ordering, ArithError>;
    fn sub2(&self, rhs: &Self) -> Result<Self, ArithError>;
}

impl LenArith for Scalar {
    fn cmp2(&self, rhs: &Scalar) -> Result<Ordering, ArithError> {
        self.compare(rhs)
    }
    fn sub2(&self, rhs: &Scalar) -> Result<Scalar, ArithError> {
        self.sub(rhs)
    }
}

impl LenArith for f64 {
    fn cmp2(&self, rhs: &f64) -> Result<Ordering, ArithError> {
        Ok(self.partial_cmp(rhs).expect("finite lengths"))
    }
    fn sub2(&self, rhs: &f64) -> Result<f64, ArithError> {
        Ok(self - rhs)
    }
}

/// Lattice lane: lengths as integer multiples of a fixed grid unit. Raw
/// induction only subtracts and compares, so it stays on the lattice and
/// every decision is exact.
impl LenArith for u128 {
    fn cmp2(&self, rhs: &u128) -> Result<Ordering, ArithError> {
        Ok(self.cmp(rhs))
    }
    fn sub2(&self, rhs: &u128) -> Result<u128, ArithError> {
        debug_assert!(self >= rhs);
        Ok(self - rhs)
    }
}

/// Result of one raw induction step over any length type.
#[derive(Debug, Clone)]
pub enum RawStep<L> {
    Tie,
    Advance {
        case: StepCase,
        alpha0: usize,
        alpha1: usize,
        perm: SignedPermutation,
        lengths: Vec<L>,
        /// Successor permutation is reducible: the caller must stop.
        reducible: bool,
    },
}

impl<L> RawStep<L> {
    pub fn semantic_winner(&self) -> Option<usize> {
        match self {
            RawStep::Tie => None,
            RawStep::Advance {
                case,
                alpha0,
                alpha1,
                ..
            } => Some(match case {
                StepCase::A => *alpha1,
                StepCase::B => *alpha0,
            }),
        }
    }

    pub fn semantic_loser(&self) -> Option<usize> {
        match self {
            RawStep::Tie => None,
            RawStep::Advance {
                case,
                alpha0,
                alpha1,
                ..
            } => Some(match case {
                StepCase::A => *alpha0,
                StepCase::B => *alpha1,
            }),
        }
    }
}

/// Successor permutation under one case, independent of lengths. `None`
/// when the two row-end symbols coincide (n = 1, or a reducible shape),
/// where every length vector ties and no arrow exists.
pub fn successor_perm(perm: &SignedPermutation, case: StepCase) -> Option<SignedPermutation> {
    let n = perm.n();
    let a0 = perm.last_top();
    let a1 = perm.last_bottom();
    if a0 == a1 {
        return None;
    }
    let mut flips: Vec<bool> = (0..n).map(|s| perm.is_flipped(s)).collect();
    let (mut top_order, mut bottom_order): (Vec<usize>, Vec<usize>) = (
        (1..=n).map(|p| perm.symbol_at_top(p)).collect(),
        (1..=n).map(|p| perm.symbol_at_bottom(p)).collect(),
    );
    match case {
        StepCase::A => {
            // α₀ leaves the top row end and reattaches at α₁'s top slot:
            // after it when α₁ is unflipped, before it when flipped.
            top_order.pop();
            let q = top_order.iter().position(|&s| s == a1).expect("a1 in top");
            let at = if perm.is_flipped(a1) { q } else { q + 1 };
            top_order.insert(at, a0);
            flips[a0] = perm.is_flipped(a0) != perm.is_flipped(a1);
        }
        StepCase::B => {
            bottom_order.pop();
            let p = bottom_order
                .iter()
                .position(|&s| s == a0)
                .expect("a0 in bottom");
            let at = if perm.is_flipped(a0) { p } else { p + 1 };
            bottom_order.insert(at, a1);
            flips[a1] = perm.is_flipped(a0) != perm.is_flipped(a1);
        }
    }
    let mut top = vec![0usize; n];
    let mut bottom = vec![0usize; n];
    for (i, &s) in top_order.iter().enumerate() {
        top[s] = i + 1;
    }
    for (i, &s) in bottom_order.iter().enumerate() {
        bottom[s] = i + 1;
    }
    Some(SignedPermutation::new(top, bottom, flips).expect("successor is a signed permutation"))
}

/// One induction step over raw (perm, lengths) data. Reducibility of the
/// successor is reported, not resolved; `lengths` are always the stepped
/// lengths so callers can inspect the would-be state.
pub fn rauzy_step_raw<L: LenArith>(
    perm: &SignedPermutation,
    lengths: &[L],
) -> Result<RawStep<L>, ArithError> {
    let a0 = perm.last_top();
    let a1 = perm.last_bottom();
    let case = match lengths[a0].cmp2(&lengths[a1])? {
        Ordering::Equal => return Ok(RawStep::Tie),
        Ordering::Less => StepCase::A,
        Ordering::Greater => StepCase::B,
    };
    let successor = successor_perm(perm, case).expect("distinct row ends");
    let (winner, loser) = match case {
        StepCase::A => (a1, a0),
        StepCase::B => (a0, a1),
    };
    let mut new_lengths = lengths.to_vec();
    new_lengths[winner] = lengths[winner].sub2(&lengths[loser])?;
    let reducible = !successor.is_irreducible();
    Ok(RawStep::Advance {
        case,
        alpha0: a0,
        alpha1: a1,
        perm: successor,
        lengths: new_lengths,
        reducible,
    })
}

/// The arrow a permutation would take under a given case, independent of
/// lengths. `None` when the row-end symbols coincide and no arrow exists.
/// The target may be reducible; callers treating that as the hole must
/// check `to.is_irreducible()`.
pub fn arrow_for(perm: &SignedPermutation, case: StepCase) -> Option<RauzyArrow> {
    let successor = successor_perm(perm, case)?;
    let alpha0 = perm.last_top();
    let alpha1 = perm.last_bottom();
    let (paper_winner, paper_loser) = match case {
        StepCase::A => (alpha0, alpha1),
        StepCase::B => (alpha1, alpha0),
    };
    let (sem_winner, sem_loser) = match case {
        StepCase::A => (alpha1, alpha0),
        StepCase::B => (alpha0, alpha1),
    };
    Some(RauzyArrow {
        from: perm.clone(),
        to: successor,
        case,
        winner: SignedSymbol {
            symbol: paper_winner,
            flipped: perm.is_flipped(paper_winner),
        },
        loser: SignedSymbol {
            symbol: paper_loser,
            flipped: perm.is_flipped(paper_loser),
        },
        alpha0,
        alpha1,
        matrix: IntMatrix::elementary(perm.n(), sem_winner, sem_loser),
    })
}

/// One Rauzy induction step: the first-return map of `f` to [0, ν).
pub fn rauzy_step(f: &FlipIET) -> Result<StepOutcome, ArithError> {
    match rauzy_step_raw(f.perm(), f.lengths())? {
        RawStep::Tie => Ok(StepOutcome::Tie),
        RawStep::Advance {
            case,
            alpha0,
            alpha1,
            perm,
            lengths,
            reducible,
        } => {
            if reducible {
                return Ok(StepOutcome::Hole {
                    case,
                    successor: perm,
                });
            }
            let loser = match case {
                StepCase::A => alpha0,
                StepCase::B => alpha1,
            };
            let nu = f.total().sub(f.length(loser))?;
            let next = FlipIET::new(perm, lengths).expect("stepped lengths positive");
            let arrow = arrow_for(f.perm(), case).expect("advance implies distinct row ends");
            Ok(StepOutcome::Step {
                next,
                arrow,
                decision: StepDecision {
                    alpha0,
                    alpha1,
                    case,
                    nu,
                },
            })
        }
    }
}

/// A maximal block of same-case steps; the accelerated map applies them all
/// at once. The case switch that ends the run is left for the next call.
#[derive(Debug, Clone)]
pub struct ZorichRun {
    pub case: StepCase,
    pub length: usize,
    pub arrows: Vec<RauzyArrow>,
    /// Product of the constituent step matrices: λ_start = matrix · λ_end.
    pub matrix: IntMatrix,
}

#[derive(Debug, Clone)]
pub enum ZorichOutcome {
    Run { next: FlipIET, run: ZorichRun },
    Tie,
    Hole {
        case: StepCase,
        successor: SignedPermutation,
    },
}

/// Accelerated step: composes rauzy_step while the case indicator is
/// constant. Tie anywhere before the switch means the accelerated map is
/// undefined here; a same-case Hole likewise ends everything. A Hole whose
/// comparison already flipped the case completes the run and surfaces on
/// the next call.
pub fn zorich_step(f: &FlipIET) -> Result<ZorichOutcome, ArithError> {
    let mut current = f.clone();
    let mut arrows: Vec<RauzyArrow> = Vec::new();
    let mut run_case: Option<StepCase> = None;
    loop {
        match rauzy_step(&current)? {
            StepOutcome::Tie => {
                if run_case.is_none() {
                    return Ok(ZorichOutcome::Tie);
                }
                return Ok(ZorichOutcome::Tie);
            }
            StepOutcome::Hole { case, successor } => {
                match run_case {
                    Some(rc) if case != rc => {
                        // The switch exists; the hole belongs to the next run.
                        break;
                    }
                    _ => return Ok(ZorichOutcome::Hole { case, successor }),
                }
            }
            StepOutcome::Step { next, arrow, .. } => match run_case {
                None => {
                    run_case = Some(arrow.case);
                    arrows.push(arrow);
                    current = next;
                }
                Some(rc) if arrow.case == rc => {
                    arrows.push(arrow);
                    current = next;
                }
                Some(_) => break,
            },
        }
    }
    let case = run_case.expect("loop breaks only after at least one step");
    let mut matrix = IntMatrix::identity(f.n());
    for a in &arrows {
        matrix = matrix.mul(&a.matrix);
    }
    Ok(ZorichOutcome::Run {
        next: current,
        run: ZorichRun {
            case,
            length: arrows.len(),
            arrows,
            matrix,
        },
    })
}

/// An ordered chain of arrows with its cached cocycle matrix
/// B_γ = (R₁⋯R_k)ᵀ, maintained by one row addition per appended arrow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RauzyPath {
    start: SignedPermutation,
    arrows: Vec<RauzyArrow>,
    cocycle: IntMatrix,
}

impl RauzyPath {
    pub fn new(start: SignedPermutation) -> RauzyPath {
        let n = start.n();
        RauzyPath {
            start,
            arrows: Vec::new(),
            cocycle: IntMatrix::identity(n),
        }
    }

    pub fn from_arrows(
        start: SignedPermutation,
        arrows: Vec<RauzyArrow>,
    ) -> Result<RauzyPath, InductionError> {
        let mut path = RauzyPath::new(start);
        for a in arrows {
            path.push(a)?;
        }
        Ok(path)
    }

    pub fn start(&self) -> &SignedPermutation {
        &self.start
    }

    pub fn end(&self) -> &SignedPermutation {
        self.arrows.last().map(|a| &a.to).unwrap_or(&self.start)
    }

    pub fn len(&self) -> usize {
        self.arrows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrows.is_empty()
    }

    pub fn arrows(&self) -> &[RauzyArrow] {
        &self.arrows
    }

    pub fn cases(&self) -> Vec<StepCase> {
        self.arrows.iter().map(|a| a.case).collect()
    }

    pub fn push(&mut self, arrow: RauzyArrow) -> Result<(), InductionError> {
        if arrow.from != *self.end() {
            return Err(InductionError::ChainMismatch);
        }
        self.cocycle
            .add_row_into(arrow.semantic_winner(), arrow.semantic_loser());
        self.arrows.push(arrow);
        Ok(())
    }

    /// B_γ; identity for the empty path.
    pub fn cocycle(&self) -> &IntMatrix {
        &self.cocycle
    }

    /// Every symbol is a semantic winner of some arrow.
    pub fn is_complete(&self) -> bool {
        let n = self.start.n();
        let mut won = vec![false; n];
        for a in &self.arrows {
            won[a.semantic_winner()] = true;
        }
        won.iter().all(|&w| w)
    }

    pub fn is_positive(&self) -> bool {
        self.cocycle.is_positive()
    }

    /// No proper border: no path that is simultaneously a proper prefix and
    /// a proper suffix.
    pub fn is_neat(&self) -> bool {
        let m = self.arrows.len();
        for k in 1..m {
            if self.arrows[..k] == self.arrows[m - k..] {
                return false;
            }
        }
        true
    }
}

/// The ordered product of transposed step matrices (the cached cocycle).
pub fn cocycle(path: &RauzyPath) -> IntMatrix {
    path.cocycle().clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    Tie,
    Hole,
}

#[derive(Debug, Clone)]
pub enum MarkovOutcome {
    /// First return to the section selected by γ*.
    Return {
        /// Unit-norm state at the return.
        next: FlipIET,
        /// The connecting path: the arrows strictly before the γ* suffix.
        path: RauzyPath,
        /// Exact |λ| at the return (before normalization).
        norm: Scalar,
        /// −log(norm): the roof value. Transcendental, so reported in
        /// floating point; `norm` carries the exact value.
        roof: f64,
    },
    /// Tie or Hole before any return; roof of the longest achievable path.
    Terminated {
        reason: TerminalKind,
        steps: usize,
        norm: Scalar,
        roof: f64,
    },
}

/// Projectivized first return to Δ_{γ*}: iterates rauzy_step until the
/// accumulated path ends with γ* starting at γ*'s base vertex, then returns
/// the state where that suffix began. Requires |λ| = 1 and f.perm = γ*'s
/// base. γ* should be a loop; positivity of its cocycle is the caller's
/// responsibility (it makes the section a genuine Markov section but is not
/// mechanically required).
pub fn markov_map(
    f: &FlipIET,
    gamma_star: &RauzyPath,
    budget: usize,
) -> Result<MarkovOutcome, InductionError> {
    let pihat = gamma_star.start();
    if gamma_star.is_empty() {
        return Err(InductionError::SectionMismatch(
            "empty section selector".into(),
        ));
    }
    if gamma_star.end() != pihat {
        return Err(InductionError::SectionMismatch(
            "section selector is not a loop".into(),
        ));
    }
    if f.perm() != pihat {
        return Err(InductionError::SectionMismatch(
            "fIET does not start at the section's vertex".into(),
        ));
    }
    let one = Scalar::one(f.backend());
    if f.total().compare(&one)? != Ordering::Equal {
        return Err(InductionError::SectionMismatch(
            "lengths are not normalized".into(),
        ));
    }
    let want: Vec<StepCase> = gamma_star.cases();
    let l = want.len();
    let mut cases: Vec<StepCase> = Vec::new();
    let mut all_arrows: Vec<RauzyArrow> = Vec::new();
    // Last l+1 states; front is the state l steps back.
    let mut window: VecDeque<FlipIET> = VecDeque::with_capacity(l + 2);
    window.push_back(f.clone());
    let mut current = f.clone();
    for k in 1..=budget {
        match rauzy_step(&current)? {
            StepOutcome::Tie => {
                let norm = current.total();
                return Ok(MarkovOutcome::Terminated {
                    reason: TerminalKind::Tie,
                    steps: k - 1,
                    roof: -norm.to_f64().ln(),
                    norm,
                });
            }
            StepOutcome::Hole { .. } => {
                let norm = current.total();
                return Ok(MarkovOutcome::Terminated {
                    reason: TerminalKind::Hole,
                    steps: k - 1,
                    roof: -norm.to_f64().ln(),
                    norm,
                });
            }
            StepOutcome::Step { next, arrow, .. } => {
                cases.push(arrow.case);
                all_arrows.push(arrow);
                current = next;
                window.push_back(current.clone());
                if window.len() > l + 1 {
                    window.pop_front();
                }
                let m = k as i64 - l as i64;
                if m >= 1 {
                    let m = m as usize;
                    let candidate = window.front().expect("window nonempty");
                    if candidate.perm() == pihat && cases[m..k] == want[..] {
                        let norm = candidate.total();
                        let next = candidate.normalize()?;
                        let path = RauzyPath::from_arrows(
                            f.perm().clone(),
                            all_arrows[..m].to_vec(),
                        )?;
                        return Ok(MarkovOutcome::Return {
                            next,
                            path,
                            roof: -norm.to_f64().ln(),
                            norm,
                        });
                    }
                }
            }
        }
    }
    Err(InductionError::BudgetExceeded { steps: budget })
}

/// log of the ratio spread max_α(u_α/v_α) / min_α(u_α/v_α); zero iff the
/// vectors are projectively equal. Reported in floating point.
pub fn hilbert_distance(u: &[Scalar], v: &[Scalar]) -> f64 {
    let uf: Vec<f64> = u.iter().map(|x| x.to_f64()).collect();
    let vf: Vec<f64> = v.iter().map(|x| x.to_f64()).collect();
    hilbert_distance_f64(&uf, &vf)
}

pub fn hilbert_distance_f64(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len());
    assert!(!u.is_empty());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in u.iter().zip(v) {
        assert!(*a > 0.0 && *b > 0.0, "hilbert distance needs positive vectors");
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (hi / lo).ln()
}
