//! Interval exchange transformations with flips.
//!
//! A transformation is a signed permutation together with a vector of
//! positive interval lengths in one scalar backend. The domain `[0, |λ|)`
//! splits into half-open cells in top order; the map sends the interior of
//! each cell isometrically onto its image slot in bottom order, reversing
//! orientation exactly on the flipped symbols. The map is undefined on the
//! cell endpoints (including 0).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perm::SignedPermutation;
use crate::scalar::{ArithError, Backend, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FietError {
    #[error("lengths count {0} does not match permutation size {1}")]
    LengthCount(usize, usize),
    #[error("length {index} is not positive")]
    NonPositiveLength { index: usize },
    #[error("lengths mix backends: {left} vs {right}")]
    MixedBackend { left: Backend, right: Backend },
    #[error(transparent)]
    Arith(#[from] ArithError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("point outside [0, |lambda|)")]
    OutOfDomain,
    #[error("point is a cell endpoint; the map is defined on interiors only")]
    AtBreakpoint,
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// Where a point sits relative to the cell partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    /// Strictly inside the cell of this symbol.
    Interior(usize),
    /// Equal to the left endpoint of this top position (1-based); position
    /// 1 is the origin.
    Breakpoint(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipIET {
    perm: SignedPermutation,
    lengths: Vec<Scalar>,
    widths: Vec<Scalar>,
}

impl FlipIET {
    pub fn new(perm: SignedPermutation, lengths: Vec<Scalar>) -> Result<FlipIET, FietError> {
        let n = perm.n();
        if lengths.len() != n {
            return Err(FietError::LengthCount(lengths.len(), n));
        }
        let backend = lengths[0].backend();
        for (i, l) in lengths.iter().enumerate() {
            if l.backend() != backend {
                return Err(FietError::MixedBackend {
                    left: backend,
                    right: l.backend(),
                });
            }
            if !l.is_positive() {
                return Err(FietError::NonPositiveLength { index: i });
            }
        }
        let widths = compute_widths(&perm, &lengths)?;
        Ok(FlipIET {
            perm,
            lengths,
            widths,
        })
    }

    pub fn parse(perm: &str, lengths: &[&str], backend: Backend) -> Result<FlipIET, String> {
        let perm: SignedPermutation = perm.parse().map_err(|e| format!("{e}"))?;
        let lengths = lengths
            .iter()
            .map(|s| Scalar::parse_with_backend(s, backend).map_err(|e| format!("{e}")))
            .collect::<Result<Vec<_>, _>>()?;
        FlipIET::new(perm, lengths).map_err(|e| format!("{e}"))
    }

    pub fn n(&self) -> usize {
        self.perm.n()
    }

    pub fn perm(&self) -> &SignedPermutation {
        &self.perm
    }

    pub fn lengths(&self) -> &[Scalar] {
        &self.lengths
    }

    pub fn length(&self, symbol: usize) -> &Scalar {
        &self.lengths[symbol]
    }

    pub fn backend(&self) -> Backend {
        self.lengths[0].backend()
    }

    /// Per-symbol translation data: the image of the interior of cell `α` is
    /// `x + w_α` (unflipped) or `w_α - x` (flipped).
    pub fn widths(&self) -> &[Scalar] {
        &self.widths
    }

    /// `|λ|`, the right end of the domain.
    pub fn total(&self) -> Scalar {
        Scalar::sum(&self.lengths, self.backend()).expect("homogeneous lengths")
    }

    /// Left endpoints of the cells in top order, starting with 0; the last
    /// entry is `|λ|`. Length `n + 1`.
    pub fn cell_bounds(&self) -> Vec<Scalar> {
        let mut bounds = Vec::with_capacity(self.n() + 1);
        let mut acc = Scalar::zero(self.backend());
        bounds.push(acc.clone());
        for pos in 1..=self.n() {
            let s = self.perm.symbol_at_top(pos);
            acc = acc.add(&self.lengths[s]).expect("homogeneous lengths");
            bounds.push(acc.clone());
        }
        bounds
    }

    /// The image slot of a symbol as an open interval `(left, right)`.
    pub fn image_interval(&self, symbol: usize) -> (Scalar, Scalar) {
        let bounds = self.cell_bounds();
        let pos = self.perm.top_position(symbol);
        let (a, b) = (&bounds[pos - 1], &bounds[pos]);
        let w = &self.widths[symbol];
        if self.perm.is_flipped(symbol) {
            (w.sub(b).expect("backend"), w.sub(a).expect("backend"))
        } else {
            (a.add(w).expect("backend"), b.add(w).expect("backend"))
        }
    }

    pub fn locate(&self, x: &Scalar) -> Result<Location, EvalError> {
        let zero = Scalar::zero(self.backend());
        match x.compare(&zero)? {
            Ordering::Less => return Err(EvalError::OutOfDomain),
            Ordering::Equal => return Ok(Location::Breakpoint(1)),
            Ordering::Greater => {}
        }
        let bounds = self.cell_bounds();
        for pos in 1..=self.n() {
            match x.compare(&bounds[pos])? {
                Ordering::Less => return Ok(Location::Interior(self.perm.symbol_at_top(pos))),
                Ordering::Equal => {
                    if pos == self.n() {
                        // The right end of the domain is outside it.
                        return Err(EvalError::OutOfDomain);
                    }
                    return Ok(Location::Breakpoint(pos + 1));
                }
                Ordering::Greater => {}
            }
        }
        Err(EvalError::OutOfDomain)
    }

    /// Apply the map to an interior point of the given cell without
    /// re-locating it.
    pub fn apply_in_cell(&self, x: &Scalar, symbol: usize) -> Result<Scalar, ArithError> {
        let w = &self.widths[symbol];
        if self.perm.is_flipped(symbol) {
            w.sub(x)
        } else {
            x.add(w)
        }
    }

    /// Evaluate the transformation. Defined exactly on the interiors of the
    /// cells; the `n` cell endpoints (0 included) report
    /// [`EvalError::AtBreakpoint`].
    pub fn evaluate(&self, x: &Scalar) -> Result<Scalar, EvalError> {
        match self.locate(x)? {
            Location::Interior(symbol) => Ok(self.apply_in_cell(x, symbol)?),
            Location::Breakpoint(_) => Err(EvalError::AtBreakpoint),
        }
    }

    /// Evaluate and also report which cell acted.
    pub fn evaluate_with_cell(&self, x: &Scalar) -> Result<(Scalar, usize), EvalError> {
        match self.locate(x)? {
            Location::Interior(symbol) => Ok((self.apply_in_cell(x, symbol)?, symbol)),
            Location::Breakpoint(_) => Err(EvalError::AtBreakpoint),
        }
    }

    /// Rescale the lengths to unit total.
    pub fn normalize(&self) -> Result<FlipIET, FietError> {
        let total = self.total();
        let lengths = self
            .lengths
            .iter()
            .map(|l| l.div(&total))
            .collect::<Result<Vec<_>, _>>()?;
        FlipIET::new(self.perm.clone(), lengths)
    }

    /// Replace the lengths, keeping the permutation.
    pub fn with_lengths(&self, lengths: Vec<Scalar>) -> Result<FlipIET, FietError> {
        FlipIET::new(self.perm.clone(), lengths)
    }
}

/// Translation data per symbol. For an unflipped symbol the image slot
/// offset minus the cell offset; for a flipped symbol the sum of the image
/// slot's right end and the cell's left end, so that `x ↦ w - x` folds the
/// cell onto its slot.
fn compute_widths(
    perm: &SignedPermutation,
    lengths: &[Scalar],
) -> Result<Vec<Scalar>, ArithError> {
    let n = perm.n();
    let backend = lengths[0].backend();
    let mut top_prefix = vec![Scalar::zero(backend); n + 1];
    let mut bottom_prefix = vec![Scalar::zero(backend); n + 1];
    for pos in 1..=n {
        let st = perm.symbol_at_top(pos);
        let sb = perm.symbol_at_bottom(pos);
        top_prefix[pos] = top_prefix[pos - 1].add(&lengths[st])?;
        bottom_prefix[pos] = bottom_prefix[pos - 1].add(&lengths[sb])?;
    }
    let mut widths = Vec::with_capacity(n);
    for s in 0..n {
        let tp = perm.top_position(s);
        let bp = perm.bottom_position(s);
        let w = if perm.is_flipped(s) {
            bottom_prefix[bp].add(&top_prefix[tp - 1])?
        } else {
            bottom_prefix[bp - 1].sub(&top_prefix[tp - 1])?
        };
        widths.push(w);
    }
    Ok(widths)
}

/// Wire format: permutation text, length texts, backend tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FietRecord {
    pub perm: String,
    pub lengths: Vec<String>,
    pub backend: String,
}

impl FietRecord {
    pub fn of(f: &FlipIET) -> FietRecord {
        FietRecord {
            perm: f.perm().to_string(),
            lengths: f.lengths().iter().map(|l| l.to_string()).collect(),
            backend: f.backend().to_string(),
        }
    }

    pub fn build(&self) -> Result<FlipIET, String> {
        let backend: Backend = self.backend.parse().map_err(|e| format!("{e}"))?;
        let refs: Vec<&str> = self.lengths.iter().map(|s| s.as_str()).collect();
        FlipIET::parse(&self.perm, &refs, backend)
    }
}

impl Serialize for FlipIET {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FietRecord::of(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FlipIET {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = FietRecord::deserialize(d)?;
        rec.build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rational_fiet(perm: &str, lengths: &[&str]) -> FlipIET {
        FlipIET::parse(perm, lengths, Backend::Rational).unwrap()
    }

    fn rat(s: &str) -> Scalar {
        Scalar::parse_with_backend(s, Backend::Rational).unwrap()
    }

    #[test]
    fn single_flipped_interval_reverses() {
        let f = rational_fiet("-1", &["1"]);
        assert_eq!(f.widths()[0], rat("1"));
        assert_eq!(f.evaluate(&rat("1/5")).unwrap(), rat("4/5"));
        assert_eq!(f.evaluate(&rat("1/2")).unwrap(), rat("1/2"));
    }

    #[test]
    fn worked_two_interval_example() {
        let f = rational_fiet("-2 1", &["1/2", "1/2"]);
        assert_eq!(f.widths()[0], rat("1"));
        assert_eq!(f.widths()[1], rat("-1/2"));
        assert_eq!(f.evaluate(&rat("1/4")).unwrap(), rat("3/4"));
        assert_eq!(f.evaluate(&rat("3/4")).unwrap(), rat("1/4"));
        assert_eq!(f.evaluate(&rat("1/2")), Err(EvalError::AtBreakpoint));
        assert_eq!(f.evaluate(&rat("0")), Err(EvalError::AtBreakpoint));
        assert_eq!(f.evaluate(&rat("1")), Err(EvalError::OutOfDomain));
        assert_eq!(f.evaluate(&rat("-1/10")), Err(EvalError::OutOfDomain));
    }

    #[test]
    fn flipped_cell_away_from_origin() {
        // Bottom row fixed, second interval flipped: the flip must fold
        // (1/2, 1) onto itself.
        let f = rational_fiet("1 -2", &["1/2", "1/2"]);
        assert_eq!(f.evaluate(&rat("3/4")).unwrap(), rat("3/4"));
        assert_eq!(f.evaluate(&rat("5/8")).unwrap(), rat("7/8"));
        let (lo, hi) = f.image_interval(1);
        assert_eq!(lo, rat("1/2"));
        assert_eq!(hi, rat("1"));
    }

    #[test]
    fn unflipped_identity_permutation_has_zero_widths() {
        let f = rational_fiet("1 2 3", &["1/4", "1/4", "1/2"]);
        for w in f.widths() {
            assert!(w.is_zero());
        }
    }

    #[test]
    fn rotation_shape_widths() {
        // Rotation by 2/5: lengths (3/5, 2/5), bottom swapped.
        let f = rational_fiet("2 1", &["3/5", "2/5"]);
        assert_eq!(f.evaluate(&rat("1/5")).unwrap(), rat("3/5"));
        assert_eq!(f.evaluate(&rat("7/10")).unwrap(), rat("1/10"));
    }

    #[test]
    fn image_intervals_tile_the_domain() {
        // Mixed flips; check images are disjoint and cover (0, 1) up to
        // endpoints.
        let f = rational_fiet("-3 1 -2", &["1/5", "3/10", "1/2"]);
        let mut images: Vec<(Scalar, Scalar)> =
            (0..3).map(|s| f.image_interval(s)).collect();
        images.sort_by(|a, b| a.0.compare(&b.0).unwrap());
        assert!(images[0].0.is_zero());
        assert_eq!(images[2].1, rat("1"));
        for w in images.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(FlipIET::parse("-2 1", &["1/2"], Backend::Rational).is_err());
        assert!(FlipIET::parse("-2 1", &["1/2", "0"], Backend::Rational).is_err());
        assert!(FlipIET::parse("-2 1", &["1/2", "-1/2"], Backend::Rational).is_err());
        let mixed = FlipIET::new(
            "-2 1".parse().unwrap(),
            vec![rat("1/2"), Scalar::one(Backend::Float { bits: 53 })],
        );
        assert!(matches!(mixed, Err(FietError::MixedBackend { .. })));
    }

    #[test]
    fn json_record_roundtrip() {
        let f = rational_fiet("-2 1", &["3/10", "7/10"]);
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"perm\":\"-2 1\""));
        let back: FlipIET = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }
}
