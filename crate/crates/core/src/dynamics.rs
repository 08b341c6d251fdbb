//! Orbits, periodic points, minimality certificates, and the first-return
//! oracle that pins down the induction transition maps.
//!
//! Cycle detection relies on injectivity: the map is injective on cell
//! interiors, so the first repeated orbit point is the starting point, and
//! one exact comparison per iterate suffices. Floating-point backends never
//! claim a cycle.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use crate::fiet::{EvalError, FlipIET, Location};
use crate::induction::{rauzy_step_raw, RawStep, StepCase};
use crate::matrix::SupportMatrix;
use crate::scalar::{ArithError, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    /// The orbit landed on a cell endpoint, where the map is undefined.
    HitEndpoint,
    /// Exact revisit of the starting point (exact backends only).
    CycleDetected { period: usize },
    /// The iterate escaped [0, |λ|); only possible through rounding.
    LeftDomain,
    /// A float comparison could not be decided.
    Undecidable,
}

#[derive(Debug, Clone)]
pub struct OrbitRecord {
    pub start: Scalar,
    /// Visited points, starting with `start`.
    pub points: Vec<Scalar>,
    /// Containing cell of each point; None exactly at a final endpoint hit.
    pub cells: Vec<Option<usize>>,
    pub stop: StopReason,
}

impl OrbitRecord {
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }
}

/// Iterate `f` from `x0` until the budget runs out, an endpoint is hit, or
/// the starting point recurs exactly.
pub fn iterate_orbit(f: &FlipIET, x0: &Scalar, budget: usize) -> OrbitRecord {
    let exact = !matches!(f.backend(), crate::scalar::Backend::Float { .. });
    let mut points = vec![x0.clone()];
    let mut cells = Vec::new();
    let mut current = x0.clone();
    for _ in 0..budget {
        let (next, cell) = match f.evaluate_with_cell(&current) {
            Ok(pair) => pair,
            Err(EvalError::AtBreakpoint) => {
                cells.push(None);
                return OrbitRecord {
                    start: x0.clone(),
                    points,
                    cells,
                    stop: StopReason::HitEndpoint,
                };
            }
            Err(EvalError::OutOfDomain) => {
                cells.push(None);
                return OrbitRecord {
                    start: x0.clone(),
                    points,
                    cells,
                    stop: StopReason::LeftDomain,
                };
            }
            Err(EvalError::Arith(_)) => {
                cells.push(None);
                return OrbitRecord {
                    start: x0.clone(),
                    points,
                    cells,
                    stop: StopReason::Undecidable,
                };
            }
        };
        cells.push(Some(cell));
        if exact && next == *x0 {
            let period = points.len();
            return OrbitRecord {
                start: x0.clone(),
                points,
                cells,
                stop: StopReason::CycleDetected { period },
            };
        }
        points.push(next.clone());
        current = next;
    }
    // Locate the final point for the dump; breakpoints stay None.
    let last_cell = match f.locate(&current) {
        Ok(Location::Interior(s)) => Some(s),
        _ => None,
    };
    cells.push(last_cell);
    OrbitRecord {
        start: x0.clone(),
        points,
        cells,
        stop: StopReason::Budget,
    }
}

/// CSV dump of an orbit: iterate index, point as decimal, cell letter.
pub fn orbit_csv(record: &OrbitRecord) -> String {
    let mut out = String::from("index,point,cell\n");
    for (i, (p, c)) in record.points.iter().zip(&record.cells).enumerate() {
        let cell = match c {
            Some(s) => ((b'A' + (*s % 26) as u8) as char).to_string(),
            None => "-".to_string(),
        };
        out.push_str(&format!("{},{:.12},{}\n", i, p.to_f64(), cell));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// One-sided evaluation: the image of the germ at (x, side). Defined for
/// every x in [0, |λ|] except (0, Left) and (|λ|, Right). Used to track
/// endpoint orbits exactly.
pub fn evaluate_one_sided(
    f: &FlipIET,
    x: &Scalar,
    side: Side,
) -> Result<(Scalar, Side), EvalError> {
    let cell = one_sided_cell(f, x, side)?;
    let y = f.apply_in_cell(x, cell)?;
    let new_side = if f.perm().is_flipped(cell) {
        side.flip()
    } else {
        side
    };
    Ok((y, new_side))
}

fn one_sided_cell(f: &FlipIET, x: &Scalar, side: Side) -> Result<usize, EvalError> {
    let total = f.total();
    if x.compare(&total)? == Ordering::Equal {
        return match side {
            Side::Left => Ok(f.perm().symbol_at_top(f.n())),
            Side::Right => Err(EvalError::OutOfDomain),
        };
    }
    match f.locate(x)? {
        Location::Interior(s) => Ok(s),
        Location::Breakpoint(pos) => match side {
            Side::Right => Ok(f.perm().symbol_at_top(pos)),
            Side::Left => {
                if pos == 1 {
                    Err(EvalError::OutOfDomain)
                } else {
                    Ok(f.perm().symbol_at_top(pos - 1))
                }
            }
        },
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicPoint {
    pub period: usize,
    pub witness: Scalar,
}

/// Search for an exact periodic point: cell midpoints first (left to
/// right), then one-sided orbits of every cell endpoint. A one-sided cycle
/// is converted to an interior witness half the safe clearance away and
/// confirmed by direct iteration. Exact backends only.
pub fn detect_periodic(f: &FlipIET, budget: usize) -> Result<Option<PeriodicPoint>, ArithError> {
    let bounds = f.cell_bounds();
    let half = Scalar::from_ratio(1, 2, f.backend());
    for i in 0..f.n() {
        let mid = bounds[i].add(&bounds[i + 1])?.mul(&half)?;
        let orbit = iterate_orbit(f, &mid, budget);
        if let StopReason::CycleDetected { period } = orbit.stop {
            return Ok(Some(PeriodicPoint {
                period,
                witness: mid,
            }));
        }
    }
    // Endpoint germs: (0, R), interior endpoints both sides, (|λ|, L).
    let mut starts: Vec<(Scalar, Side)> = Vec::new();
    starts.push((bounds[0].clone(), Side::Right));
    for b in &bounds[1..f.n()] {
        starts.push((b.clone(), Side::Left));
        starts.push((b.clone(), Side::Right));
    }
    starts.push((bounds[f.n()].clone(), Side::Left));
    'germ: for (x0, s0) in starts {
        let mut x = x0.clone();
        let mut s = s0;
        // Minimum clearance from each orbit point to the far end of its
        // cell, shrunk to place an interior witness.
        let mut clearance: Option<Scalar> = None;
        for step in 1..=budget {
            let cell = match one_sided_cell(f, &x, s) {
                Ok(c) => c,
                Err(_) => continue 'germ,
            };
            let pos = f.perm().top_position(cell);
            let room = match s {
                Side::Right => bounds[pos].sub(&x)?,
                Side::Left => x.sub(&bounds[pos - 1])?,
            };
            clearance = Some(match clearance {
                None => room,
                Some(c) => {
                    if room.compare(&c)? == Ordering::Less {
                        room
                    } else {
                        c
                    }
                }
            });
            let (y, ns) = match evaluate_one_sided(f, &x, s) {
                Ok(pair) => pair,
                Err(_) => continue 'germ,
            };
            x = y;
            s = ns;
            if x == x0 && s == s0 {
                let delta = clearance.expect("at least one step").mul(&half)?;
                let witness = match s0 {
                    Side::Right => x0.add(&delta)?,
                    Side::Left => x0.sub(&delta)?,
                };
                let confirm = iterate_orbit(f, &witness, step.max(budget));
                if let StopReason::CycleDetected { period } = confirm.stop {
                    return Ok(Some(PeriodicPoint { period, witness }));
                }
                continue 'germ;
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertTerminal {
    SurvivedBudget,
    Tie,
    Hole,
    Undecidable,
}

#[derive(Debug, Clone)]
pub struct MinimalityVerdict {
    pub depth_reached: usize,
    pub terminal: CertTerminal,
    /// Every symbol won somewhere along the accumulated path.
    pub complete: bool,
    /// The accumulated cocycle support is strictly positive.
    pub positive: bool,
}

/// Run induction to `depth`, recording how it ends. Survival to a large
/// depth with a positive accumulated cocycle is the evidence an infinite
/// path would provide; Tie/Hole is a disproof. Uses the cocycle support
/// only, so deep runs stay cheap.
pub fn minimality_certificate(f: &FlipIET, depth: usize) -> MinimalityVerdict {
    let n = f.n();
    let mut perm = f.perm().clone();
    let mut lengths = f.lengths().to_vec();
    let mut support = SupportMatrix::identity(n);
    let mut won = vec![false; n];
    for k in 0..depth {
        match rauzy_step_raw(&perm, &lengths) {
            Err(_) => {
                return verdict(k, CertTerminal::Undecidable, &won, &support);
            }
            Ok(RawStep::Tie) => {
                return verdict(k, CertTerminal::Tie, &won, &support);
            }
            Ok(RawStep::Advance {
                case,
                alpha0,
                alpha1,
                perm: next,
                lengths: next_lengths,
                reducible,
            }) => {
                if reducible {
                    return verdict(k, CertTerminal::Hole, &won, &support);
                }
                let (w, l) = match case {
                    StepCase::A => (alpha1, alpha0),
                    StepCase::B => (alpha0, alpha1),
                };
                support.or_row_into(w, l);
                won[w] = true;
                perm = next;
                lengths = next_lengths;
            }
        }
    }
    verdict(depth, CertTerminal::SurvivedBudget, &won, &support)
}

fn verdict(
    depth: usize,
    terminal: CertTerminal,
    won: &[bool],
    support: &SupportMatrix,
) -> MinimalityVerdict {
    MinimalityVerdict {
        depth_reached: depth,
        terminal,
        complete: won.iter().all(|&w| w),
        positive: support.is_full(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct FirstReturnReport {
    pub agreements: usize,
    pub disagreements: usize,
    /// Samples discarded because an orbit or the successor hit an endpoint.
    pub endpoint_hits: usize,
}

/// Compare the stepped fIET against the directly computed first-return map
/// of `f` to [0, ν) at random interior points. Exact agreement expected at
/// every sample; this is the oracle the transition maps answer to.
pub fn verify_first_return<R: Rng>(
    f: &FlipIET,
    next: &FlipIET,
    nu: &Scalar,
    samples: usize,
    rng: &mut R,
) -> Result<FirstReturnReport, ArithError> {
    let mut report = FirstReturnReport::default();
    let mut produced = 0usize;
    let mut attempts = 0usize;
    let max_attempts = samples.saturating_mul(10).max(100);
    while produced < samples && attempts < max_attempts {
        attempts += 1;
        let k: u64 = rng.gen();
        if k == 0 {
            continue;
        }
        let t = Scalar::from_rational_value(
            BigRational::new(BigInt::from(k), BigInt::from(1u128 << 64)),
            f.backend(),
        );
        let x = nu.mul(&t)?;
        // Direct first return: iterate f until the point re-enters [0, ν).
        let mut y = match f.evaluate(&x) {
            Ok(v) => v,
            Err(EvalError::Arith(e)) => return Err(e),
            Err(_) => {
                report.endpoint_hits += 1;
                continue;
            }
        };
        let mut returned = None;
        for _ in 0..16 {
            if y.compare(nu)? == Ordering::Less {
                returned = Some(y);
                break;
            }
            y = match f.evaluate(&y) {
                Ok(v) => v,
                Err(EvalError::Arith(e)) => return Err(e),
                Err(_) => break,
            };
        }
        let Some(direct) = returned else {
            report.endpoint_hits += 1;
            continue;
        };
        let stepped = match next.evaluate(&x) {
            Ok(v) => v,
            Err(EvalError::Arith(e)) => return Err(e),
            Err(_) => {
                report.endpoint_hits += 1;
                continue;
            }
        };
        produced += 1;
        if stepped == direct {
            report.agreements += 1;
        } else {
            report.disagreements += 1;
        }
    }
    Ok(report)
}

/// Star discrepancy of unit-interval points against the uniform law,
/// sampled at `bins` grid points: max_k |F̂(k/bins) − k/bins|.
pub fn bin_discrepancy(points_unit: &[f64], bins: usize) -> f64 {
    assert!(bins > 0);
    let mut counts = vec![0usize; bins];
    for &p in points_unit {
        let idx = ((p * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    let total = points_unit.len() as f64;
    let mut cum = 0usize;
    let mut worst: f64 = 0.0;
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        let expected = (k + 1) as f64 / bins as f64;
        worst = worst.max((cum as f64 / total - expected).abs());
    }
    worst
}
