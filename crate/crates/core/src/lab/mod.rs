//! Measure computations over the length simplex: closed-form cylinder
//! volumes and path probabilities, plus seeded Monte Carlo experiments
//! against the probabilistic bounds (weight growth, cocycle distortion,
//! survival decay, roof tails, cylinder-mass decay, uniform expansion,
//! and a box-counting dimension proxy).

use std::cmp::Ordering;
use std::fmt;

use crate::induction::{RauzyArrow, RauzyPath};
use crate::scalar::{ArithError, Backend, Scalar};

pub mod experiments;
pub mod report;
pub mod sample;

pub use experiments::{
    box_dimension, distortion_experiment, expansion_check, fast_decay_check,
    kerckhoff_experiment, lambda_q_volume_mc, roof_tail, survival_fraction,
};
pub use report::{ExperimentReport, FitSummary, ReportRow};

#[derive(Debug, Clone, PartialEq)]
pub enum LabError {
    BadParameter(String),
    /// Fewer than 3 grid resolutions produced nonzero cell counts.
    GridTooCoarse { nonzero: usize },
    Arith(ArithError),
}

impl fmt::Display for LabError {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::BadParameter(what) => write!(out, "bad parameter: {what}"),
            LabError::GridTooCoarse { nonzero } => write!(
                out,
                "grid too coarse: only {nonzero} resolutions gave nonzero counts"
            ),
            LabError::Arith(e) => write!(out, "arithmetic failure: {e}"),
        }
    }
}

impl std::error::Error for LabError {}

impl From<ArithError> for LabError {
    fn from(e: ArithError) -> LabError {
        LabError::Arith(e)
    }
}

/// Strictly positive per-symbol weights q.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    q: Vec<Scalar>,
}

impl WeightVector {
    pub fn new(q: Vec<Scalar>) -> Result<WeightVector, LabError> {
        if q.is_empty() {
            return Err(LabError::BadParameter("empty weight vector".into()));
        }
        let backend = q[0].backend();
        for (i, v) in q.iter().enumerate() {
            if v.backend() != backend {
                return Err(LabError::BadParameter("mixed weight backends".into()));
            }
            if !v.is_positive() {
                return Err(LabError::BadParameter(format!(
                    "weight {i} is not positive"
                )));
            }
        }
        Ok(WeightVector { q })
    }

    pub fn uniform(n: usize, backend: Backend) -> WeightVector {
        WeightVector {
            q: vec![Scalar::one(backend); n],
        }
    }

    pub fn from_integers(vals: &[i64], backend: Backend) -> Result<WeightVector, LabError> {
        WeightVector::new(
            vals.iter()
                .map(|&v| Scalar::from_integer(v, backend))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn backend(&self) -> Backend {
        self.q[0].backend()
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.q
    }

    pub fn get(&self, symbol: usize) -> &Scalar {
        &self.q[symbol]
    }

    /// N(q) = ∏ q_α.
    pub fn product(&self) -> Result<Scalar, ArithError> {
        let mut acc = Scalar::one(self.backend());
        for v in &self.q {
            acc = acc.mul(v)?;
        }
        Ok(acc)
    }

    /// m(q), the smallest weight.
    pub fn min(&self) -> Result<Scalar, ArithError> {
        extreme(&self.q, Ordering::Less)
    }

    /// M(q), the largest weight.
    pub fn max(&self) -> Result<Scalar, ArithError> {
        extreme(&self.q, Ordering::Greater)
    }

    /// m_k(q) for k = 1..n: the best minimum over k-element symbol sets,
    /// i.e. the k-th largest weight. Entry 0 is M(q), entry n-1 is m(q).
    pub fn order_stats(&self) -> Result<Vec<Scalar>, ArithError> {
        let mut vals = self.q.clone();
        // Selection sort, descending; n is small and compare is fallible.
        for i in 0..vals.len() {
            let mut best = i;
            for j in i + 1..vals.len() {
                if vals[j].compare(&vals[best])? == Ordering::Greater {
                    best = j;
                }
            }
            vals.swap(i, best);
        }
        Ok(vals)
    }

    /// B_γ q for the path's cocycle.
    pub fn transport(&self, path: &RauzyPath) -> Result<WeightVector, LabError> {
        if path.start().n() != self.n() {
            return Err(LabError::BadParameter(format!(
                "weight arity {} does not match path arity {}",
                self.n(),
                path.start().n()
            )));
        }
        let q = path.cocycle().apply_scalar(&self.q, self.backend())?;
        Ok(WeightVector { q })
    }
}

fn extreme(vals: &[Scalar], dir: Ordering) -> Result<Scalar, ArithError> {
    let mut best = vals[0].clone();
    for v in &vals[1..] {
        if v.compare(&best)? == dir {
            best = v.clone();
        }
    }
    Ok(best)
}

/// Exact distortion summary of a transported weight vector B_γ q.
#[derive(Debug, Clone)]
pub struct DistortionStats {
    pub transported: WeightVector,
    /// m(B_γ q)
    pub min: Scalar,
    /// M(B_γ q)
    pub max: Scalar,
    /// m_k(B_γ q), descending: entry k-1 is the k-th largest coordinate.
    pub order_stats: Vec<Scalar>,
    /// M / m as a float, for reporting.
    pub spread: f64,
}

pub fn distortion_stats(
    path: &RauzyPath,
    q: &WeightVector,
) -> Result<DistortionStats, LabError> {
    let transported = q.transport(path)?;
    let min = transported.min()?;
    let max = transported.max()?;
    let order_stats = transported.order_stats()?;
    let spread = max.to_f64() / min.to_f64();
    Ok(DistortionStats {
        transported,
        min,
        max,
        order_stats,
        spread,
    })
}

/// Exact volume of Λ_q = {λ > 0 : ⟨λ, q⟩ < 1}: 1 / (n! ∏ q_α).
pub fn lambda_q_volume(q: &WeightVector) -> Result<Scalar, LabError> {
    let backend = q.backend();
    let mut denom = q.product()?;
    for k in 2..=q.n() as i64 {
        denom = denom.mul(&Scalar::from_integer(k, backend))?;
    }
    Ok(Scalar::one(backend).div(&denom)?)
}

/// Probability that induction from the path's start follows the path, under
/// the ν_q normalization: N(q) / N(B_γ q).
pub fn conditional_probability(
    path: &RauzyPath,
    q: &WeightVector,
) -> Result<Scalar, LabError> {
    let transported = q.transport(path)?;
    Ok(q.product()?.div(&transported.product()?)?)
}

/// Single-arrow probability: the loser's share q_l / (q_w + q_l), with
/// winner and loser taken in the length sense (the loser shrinks).
pub fn arrow_probability(
    arrow: &RauzyArrow,
    q: &WeightVector,
) -> Result<Scalar, LabError> {
    if q.n() != arrow.from.n() {
        return Err(LabError::BadParameter(
            "weight arity does not match arrow arity".into(),
        ));
    }
    let w = q.get(arrow.semantic_winner());
    let l = q.get(arrow.semantic_loser());
    Ok(l.div(&w.add(l)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reify_cases;
    use crate::induction::StepCase;

    fn rational() -> Backend {
        Backend::Rational
    }

    fn rat(num: i64, den: i64) -> Scalar {
        Scalar::from_ratio(num, den, rational())
    }

    #[test]
    fn weight_vector_rejects_bad_input() {
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::from_integers(&[1, 0], rational()).is_err());
        assert!(WeightVector::from_integers(&[1, -2], rational()).is_err());
        assert!(WeightVector::from_integers(&[1, 2], rational()).is_ok());
    }

    #[test]
    fn order_stats_are_descending_extremes() {
        let q = WeightVector::from_integers(&[3, 1, 4, 1], rational()).unwrap();
        let stats = q.order_stats().unwrap();
        assert_eq!(stats[0], q.max().unwrap());
        assert_eq!(stats[3], q.min().unwrap());
        assert_eq!(stats[1], Scalar::from_integer(3, rational()));
        assert_eq!(stats[2], Scalar::from_integer(1, rational()));
    }

    #[test]
    fn unit_simplex_volume() {
        let q = WeightVector::uniform(2, rational());
        assert_eq!(lambda_q_volume(&q).unwrap(), rat(1, 2));
    }

    #[test]
    fn weighted_volume_formula() {
        let q = WeightVector::from_integers(&[1, 2, 3], rational()).unwrap();
        assert_eq!(lambda_q_volume(&q).unwrap(), rat(1, 36));
    }

    #[test]
    fn single_arrow_probability_uniform_weights() {
        let start: crate::perm::SignedPermutation = "4 3 2 1".parse().unwrap();
        let path = reify_cases(start.clone(), &[StepCase::A]);
        let q = WeightVector::uniform(4, rational());
        assert_eq!(conditional_probability(&path, &q).unwrap(), rat(1, 2));
        assert_eq!(
            arrow_probability(&path.arrows()[0], &q).unwrap(),
            rat(1, 2)
        );
    }

    #[test]
    fn arrow_probability_weights_the_loser() {
        // Winner weight 1, loser weight 3: probability 3/4.
        let start: crate::perm::SignedPermutation = "2 1".parse().unwrap();
        let path = reify_cases(start.clone(), &[StepCase::A]);
        let arrow = &path.arrows()[0];
        let mut weights = vec![1i64; 2];
        weights[arrow.semantic_winner()] = 1;
        weights[arrow.semantic_loser()] = 3;
        let q = WeightVector::from_integers(&weights, rational()).unwrap();
        assert_eq!(arrow_probability(arrow, &q).unwrap(), rat(3, 4));
        assert_eq!(conditional_probability(&path, &q).unwrap(), rat(3, 4));
    }

    #[test]
    fn path_probability_telescopes_over_arrows() {
        // Along a path the arrow factors multiply to N(q)/N(B_γ q), with
        // each factor evaluated at the transported weights so far.
        let start: crate::perm::SignedPermutation = "3 2 1".parse().unwrap();
        let cases = [StepCase::B, StepCase::A, StepCase::A, StepCase::B, StepCase::A];
        let path = reify_cases(start.clone(), &cases);
        assert_eq!(path.len(), 5);
        let q = WeightVector::from_integers(&[2, 5, 3], rational()).unwrap();
        let mut product = Scalar::one(rational());
        let mut current = q.q.clone();
        for arrow in path.arrows() {
            let here = WeightVector::new(current.clone()).unwrap();
            product = product.mul(&arrow_probability(arrow, &here).unwrap()).unwrap();
            let w = arrow.semantic_winner();
            let l = arrow.semantic_loser();
            current[l] = current[l].add(&current[w]).unwrap();
        }
        assert_eq!(conditional_probability(&path, &q).unwrap(), product);
    }

    #[test]
    fn distortion_stats_bracket_all_coordinates() {
        let start: crate::perm::SignedPermutation = "3 2 1".parse().unwrap();
        let path = reify_cases(start.clone(), &[StepCase::B, StepCase::A, StepCase::B]);
        let q = WeightVector::from_integers(&[1, 1, 1], rational()).unwrap();
        let stats = distortion_stats(&path, &q).unwrap();
        for v in stats.transported.as_slice() {
            assert!(stats.min.compare(v).unwrap() != Ordering::Greater);
            assert!(stats.max.compare(v).unwrap() != Ordering::Less);
        }
        assert_eq!(stats.order_stats[0], stats.max);
        assert_eq!(stats.order_stats[2], stats.min);
        assert!(stats.spread >= 1.0);
    }
}
