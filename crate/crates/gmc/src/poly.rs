//! Multivariate polynomials with exact rational coefficients.
//!
//! Kernel cost formulas and variant cost functions are low-degree polynomials
//! over size symbols. Coefficients are kept as exact rationals so that cost
//! comparisons and serialized plans are free of float drift.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub type Rat = Ratio<i64>;

/// Exact rational, wide enough to hold evaluated costs for sizes up to ~2^40.
pub type BigRat = Ratio<i128>;

/// Sparse polynomial over `nvars` variables, keyed by exponent vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, Rat>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// Build from (coefficient, exponent vector) pairs; zero coefficients are dropped.
    pub fn from_terms(nvars: usize, terms: &[(Rat, Vec<u8>)]) -> Self {
        let mut p = Poly::zero(nvars);
        for (c, e) in terms {
            p.add_term(*c, e.clone());
        }
        p
    }

    pub fn monomial(nvars: usize, coef: Rat, exps: Vec<u8>) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(coef, exps);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, coef: Rat, exps: Vec<u8>) {
        assert_eq!(exps.len(), self.nvars, "exponent vector arity mismatch");
        if coef.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps).or_insert_with(Rat::zero);
        *entry += coef;
        if entry.is_zero() {
            let key: Vec<u8> = self
                .terms
                .iter()
                .find(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone())
                .unwrap();
            self.terms.remove(&key);
        }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        assert_eq!(self.nvars, other.nvars);
        for (e, c) in &other.terms {
            self.add_term(*c, e.clone());
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &Rat)> {
        self.terms.iter()
    }

    /// All coefficients strictly positive (so the polynomial is monotonically
    /// increasing in each variable over positive arguments).
    pub fn all_coefficients_positive(&self) -> bool {
        self.terms.values().all(|c| c.is_positive())
    }

    /// Remap variables: term exponent `e[i]` is re-attributed to variable
    /// `map[i]` of a polynomial over `new_nvars` variables. Used to
    /// instantiate an (m, k, n) kernel formula on chain size symbols.
    pub fn substitute_vars(&self, map: &[usize], new_nvars: usize) -> Poly {
        assert_eq!(map.len(), self.nvars);
        let mut out = Poly::zero(new_nvars);
        for (e, c) in &self.terms {
            let mut ne = vec![0u8; new_nvars];
            for (i, &exp) in e.iter().enumerate() {
                ne[map[i]] += exp;
            }
            out.add_term(*c, ne);
        }
        out
    }

    pub fn eval_f64(&self, xs: &[f64]) -> f64 {
        debug_assert_eq!(xs.len(), self.nvars);
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = (*c.numer() as f64) / (*c.denom() as f64);
            for (i, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    t *= xs[i];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_exact(&self, xs: &[u64]) -> BigRat {
        debug_assert_eq!(xs.len(), self.nvars);
        let mut acc = BigRat::zero();
        for (e, c) in &self.terms {
            let mut mono: i128 = 1;
            for (i, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    mono *= xs[i] as i128;
                }
            }
            acc += BigRat::new(*c.numer() as i128 * mono, *c.denom() as i128);
        }
        acc
    }

    /// Render with caller-supplied variable names, e.g. `5/3 q0^3 + 2 q0^2 q3`.
    /// Terms appear in the canonical (exponent-lexicographic) order.
    pub fn render(&self, name: &dyn Fn(usize) -> String) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (idx, (e, c)) in self.terms.iter().enumerate() {
            if idx > 0 {
                out.push_str(" + ");
            }
            out.push_str(&format_rat(*c));
            for (i, &exp) in e.iter().enumerate() {
                match exp {
                    0 => {}
                    1 => {
                        let _ = write!(out, " {}", name(i));
                    }
                    _ => {
                        let _ = write!(out, " {}^{}", name(i), exp);
                    }
                }
            }
        }
        out
    }
}

pub fn format_rat(r: Rat) -> String {
    if *r.denom() == 1 {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rat(s: &str) -> Option<Rat> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            Some(Rat::new(n, d))
        }
        None => {
            let n: i64 = s.trim().parse().ok()?;
            Some(Rat::from_integer(n))
        }
    }
}

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_and_cancel() {
        let mut p = Poly::zero(2);
        p.add_term(rat(1, 3), vec![3, 0]);
        p.add_term(rat(2, 3), vec![3, 0]);
        p.add_term(rat(2, 1), vec![2, 1]);
        p.add_term(rat(-2, 1), vec![2, 1]);
        assert_eq!(p, Poly::monomial(2, rat(1, 1), vec![3, 0]));
    }

    #[test]
    fn eval_matches_exact() {
        let p = Poly::from_terms(2, &[(rat(5, 3), vec![3, 0]), (rat(2, 1), vec![2, 1])]);
        let exact = p.eval_exact(&[100, 40]);
        // 5/3 * 1e6 + 2 * 1e4 * 40 = 7_400_000 / 3 + ... computed directly
        assert_eq!(exact, BigRat::new(5_000_000 + 3 * 800_000, 3));
        let f = p.eval_f64(&[100.0, 40.0]);
        assert!((f - (5.0e6 / 3.0 + 8.0e5)).abs() < 1e-6);
    }

    #[test]
    fn substitution_merges_vars() {
        // m*k*n with m and k mapped to the same symbol becomes m^2 n.
        let p = Poly::monomial(3, rat(2, 1), vec![1, 1, 1]);
        let q = p.substitute_vars(&[0, 0, 3], 4);
        assert_eq!(q, Poly::monomial(4, rat(2, 1), vec![2, 0, 0, 1]));
    }

    #[test]
    fn render_canonical() {
        let p = Poly::from_terms(4, &[(rat(5, 3), vec![3, 0, 0, 0]), (rat(2, 1), vec![2, 0, 0, 1])]);
        let s = p.render(&|i| format!("q{i}"));
        assert_eq!(s, "2 q0^2 q3 + 5/3 q0^3");
    }

    #[test]
    fn rat_round_trip() {
        for s in ["5/3", "2", "-7/2", "0"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(parse_rat(&format_rat(r)).unwrap(), r);
        }
        assert!(parse_rat("1/0").is_none());
    }
}
