//! Signed permutations: the combinatorial datum of an interval exchange
//! with flips.
//!
//! A signed permutation over `n` symbols assigns each symbol a top position
//! (the order of the domain intervals), a bottom position (the order of the
//! image intervals), and a flip flag (whether the map reverses orientation
//! on that interval).
//!
//! Text form: `n` signed nonzero integers. Token `j` (1-based) is symbol
//! `j-1`, listed in top order; its absolute value is the symbol's bottom
//! position and its sign is the flip flag. Parsing therefore always yields
//! an identity top row; interior algorithms may produce non-identity top
//! rows, which [`SignedPermutation::canonical`] relabels away.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermError {
    #[error("empty permutation text")]
    Empty,
    #[error("cannot parse token {0:?}")]
    BadToken(String),
    #[error("token {0} out of range 1..={1}")]
    OutOfRange(i64, usize),
    #[error("bottom position {0} appears twice")]
    Repeated(usize),
}

/// Symbols are indices `0..n`; positions are 1-based throughout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPermutation {
    /// symbol -> top position (1..=n)
    top: Vec<usize>,
    /// symbol -> bottom position (1..=n)
    bottom: Vec<usize>,
    /// symbol -> flip flag
    flipped: Vec<bool>,
}

impl SignedPermutation {
    pub fn new(
        top: Vec<usize>,
        bottom: Vec<usize>,
        flipped: Vec<bool>,
    ) -> Result<SignedPermutation, PermError> {
        let n = top.len();
        if n == 0 {
            return Err(PermError::Empty);
        }
        if bottom.len() != n || flipped.len() != n {
            return Err(PermError::BadToken(format!(
                "length mismatch: {} / {} / {}",
                top.len(),
                bottom.len(),
                flipped.len()
            )));
        }
        for positions in [&top, &bottom] {
            let mut seen = vec![false; n + 1];
            for &p in positions.iter() {
                if p == 0 || p > n {
                    return Err(PermError::OutOfRange(p as i64, n));
                }
                if seen[p] {
                    return Err(PermError::Repeated(p));
                }
                seen[p] = true;
            }
        }
        Ok(SignedPermutation {
            top,
            bottom,
            flipped,
        })
    }

    pub fn n(&self) -> usize {
        self.top.len()
    }

    pub fn top_position(&self, symbol: usize) -> usize {
        self.top[symbol]
    }

    pub fn bottom_position(&self, symbol: usize) -> usize {
        self.bottom[symbol]
    }

    pub fn is_flipped(&self, symbol: usize) -> bool {
        self.flipped[symbol]
    }

    /// Symbols carrying a flip.
    pub fn flip_set(&self) -> Vec<usize> {
        (0..self.n()).filter(|&s| self.flipped[s]).collect()
    }

    pub fn has_flip(&self) -> bool {
        self.flipped.iter().any(|&f| f)
    }

    /// Symbol at a given top position (1-based).
    pub fn symbol_at_top(&self, pos: usize) -> usize {
        self.top
            .iter()
            .position(|&p| p == pos)
            .expect("position within range")
    }

    /// Symbol at a given bottom position (1-based).
    pub fn symbol_at_bottom(&self, pos: usize) -> usize {
        self.bottom
            .iter()
            .position(|&p| p == pos)
            .expect("position within range")
    }

    /// Top-last symbol: the domain interval touching the right end.
    pub fn last_top(&self) -> usize {
        self.symbol_at_top(self.n())
    }

    /// Bottom-last symbol: the image interval touching the right end.
    pub fn last_bottom(&self) -> usize {
        self.symbol_at_bottom(self.n())
    }

    /// A proper prefix `{1..k}` of top positions mapping onto the prefix
    /// `{1..k}` of bottom positions splits the transformation into two
    /// independent ones. Flips are ignored by this criterion.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        // max bottom position among the first k top symbols; the prefix sets
        // coincide exactly when that max equals k.
        let mut max_bottom = 0usize;
        for k in 1..n {
            let s = self.symbol_at_top(k);
            max_bottom = max_bottom.max(self.bottom[s]);
            if max_bottom == k {
                return false;
            }
        }
        true
    }

    /// Relabel symbols so the top row is the identity. The result is the
    /// parse/write normal form; the relabeling map is `old = order[new]`.
    pub fn canonical(&self) -> SignedPermutation {
        let n = self.n();
        let mut bottom = vec![0usize; n];
        let mut flipped = vec![false; n];
        for new in 0..n {
            let old = self.symbol_at_top(new + 1);
            bottom[new] = self.bottom[old];
            flipped[new] = self.flipped[old];
        }
        SignedPermutation {
            top: (1..=n).collect(),
            bottom,
            flipped,
        }
    }

    pub fn is_canonical_form(&self) -> bool {
        self.top.iter().enumerate().all(|(s, &p)| p == s + 1)
    }
}

impl FromStr for SignedPermutation {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, PermError> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(PermError::Empty);
        }
        let n = tokens.len();
        let mut bottom = Vec::with_capacity(n);
        let mut flipped = Vec::with_capacity(n);
        for tok in tokens {
            let v: i64 = tok
                .parse()
                .map_err(|_| PermError::BadToken(tok.to_owned()))?;
            if v == 0 || v.unsigned_abs() as usize > n {
                return Err(PermError::OutOfRange(v, n));
            }
            bottom.push(v.unsigned_abs() as usize);
            flipped.push(v < 0);
        }
        SignedPermutation::new((1..=n).collect(), bottom, flipped)
    }
}

impl fmt::Display for SignedPermutation {
    /// Writes the canonical text: tokens in top order, each the signed
    /// bottom position.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for pos in 1..=self.n() {
            let s = self.symbol_at_top(pos);
            if pos > 1 {
                write!(f, " ")?;
            }
            let v = self.bottom[s] as i64;
            write!(f, "{}", if self.flipped[s] { -v } else { v })?;
        }
        Ok(())
    }
}

impl Serialize for SignedPermutation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SignedPermutation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(s: &str) -> SignedPermutation {
        s.parse().unwrap()
    }

    #[test]
    fn parse_assigns_positions_and_flags() {
        let p = perm("-2 1");
        assert_eq!(p.n(), 2);
        assert_eq!(p.bottom_position(0), 2);
        assert!(p.is_flipped(0));
        assert_eq!(p.bottom_position(1), 1);
        assert!(!p.is_flipped(1));
        assert_eq!(p.last_top(), 1);
        assert_eq!(p.last_bottom(), 0);
    }

    #[test]
    fn writes_canonical_text() {
        for s in ["-2 1", "2 1", "3 -1 2", "-4 -3 -2 -1", "1"] {
            assert_eq!(perm(s).to_string(), s);
        }
    }

    #[test]
    fn exhaustive_roundtrip_up_to_n4() {
        // All signed permutations with identity top row, n <= 4.
        for n in 1..=4usize {
            let mut bottoms = vec![];
            permutations(n, &mut (1..=n).collect::<Vec<_>>(), 0, &mut bottoms);
            for b in &bottoms {
                for mask in 0..(1u32 << n) {
                    let text: Vec<String> = (0..n)
                        .map(|i| {
                            let v = b[i] as i64;
                            if mask & (1 << i) != 0 {
                                (-v).to_string()
                            } else {
                                v.to_string()
                            }
                        })
                        .collect();
                    let text = text.join(" ");
                    let p = perm(&text);
                    assert_eq!(p.to_string(), text);
                }
            }
        }
    }

    fn permutations(n: usize, scratch: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == n {
            out.push(scratch.clone());
            return;
        }
        for i in k..n {
            scratch.swap(k, i);
            permutations(n, scratch, k + 1, out);
            scratch.swap(k, i);
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!("".parse::<SignedPermutation>().is_err());
        assert!("0 1".parse::<SignedPermutation>().is_err());
        assert!("3 1".parse::<SignedPermutation>().is_err());
        assert!("1 1".parse::<SignedPermutation>().is_err());
        assert!("x 1".parse::<SignedPermutation>().is_err());
    }

    #[test]
    fn irreducibility_ignores_signs() {
        assert!(perm("-2 1").is_irreducible());
        assert!(perm("2 1").is_irreducible());
        assert!(!perm("1 2").is_irreducible());
        assert!(!perm("-1 -2").is_irreducible());
        assert!(!perm("-1 2").is_irreducible());
        // Prefix {1,2} closed under the bottom assignment.
        assert!(!perm("2 1 3").is_irreducible());
        assert!(!perm("-2 -1 3").is_irreducible());
        assert!(perm("3 2 1").is_irreducible());
        assert!(perm("2 3 1").is_irreducible());
        assert!(perm("3 1 2").is_irreducible());
        assert!(perm("1").is_irreducible());
    }

    #[test]
    fn canonical_relabels_top_row() {
        // Build a non-identity top row by hand and canonicalize it.
        let p = SignedPermutation::new(
            vec![2, 1, 3],
            vec![1, 3, 2],
            vec![false, true, false],
        )
        .unwrap();
        assert!(!p.is_canonical_form());
        let c = p.canonical();
        assert!(c.is_canonical_form());
        // Top position 1 held symbol 1 (bottom 3, flipped).
        assert_eq!(c.to_string(), "-3 1 2");
        // Canonicalizing is idempotent and preserves the written text.
        assert_eq!(p.to_string(), c.to_string());
    }
}
