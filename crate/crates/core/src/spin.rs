//! Spin Hamiltonians as sums of products of single-site spin operators.
//!
//! The textual term format is a `+`-separated list of terms. Each term is an
//! optional real coefficient followed by `*`-separated factors `S<axis><site>`
//! with 1-based site indices, e.g. `2.5*Sx1*Sz2 + Sy3`. Whitespace is ignored.

use std::fmt;

use faer::{c64, Mat};

use crate::error::{Error, Result};

/// A spin quantum number stored as `2S` so half-integer spins are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinValue {
    twice_s: u32,
}

impl SpinValue {
    pub fn from_twice(twice_s: u32) -> Result<Self> {
        if twice_s == 0 {
            return Err(Error::InvalidParameter("spin must satisfy 2S >= 1".into()));
        }
        Ok(Self { twice_s })
    }

    /// Spin `S` for an integer value.
    pub fn integer(s: u32) -> Result<Self> {
        Self::from_twice(2 * s)
    }

    pub fn twice_s(self) -> u32 {
        self.twice_s
    }

    pub fn s(self) -> f64 {
        f64::from(self.twice_s) / 2.0
    }

    /// Local Hilbert space dimension `2S + 1`.
    pub fn dimension(self) -> usize {
        self.twice_s as usize + 1
    }

    /// Magnetic quantum number of basis index `k`; the basis runs from
    /// `m = +S` (index 0) down to `m = -S`.
    pub fn m(self, k: usize) -> f64 {
        self.s() - k as f64
    }

    /// Nonzero entries `(row, col, value)` of the single-site operator for
    /// `axis` in the `Sz` eigenbasis.
    pub fn operator_entries(self, axis: Axis) -> Vec<(usize, usize, c64)> {
        let dim = self.dimension();
        let s = self.s();
        match axis {
            Axis::Z => (0..dim).map(|k| (k, k, c64::new(self.m(k), 0.0))).collect(),
            Axis::X | Axis::Y => {
                let mut out = Vec::with_capacity(2 * (dim - 1));
                for k in 1..dim {
                    // <m+1| S+ |m> with m the label of index k.
                    let m = self.m(k);
                    let amp = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
                    let (upper, lower) = match axis {
                        // Sx = (S+ + S-)/2
                        Axis::X => (c64::new(amp / 2.0, 0.0), c64::new(amp / 2.0, 0.0)),
                        // Sy = (S+ - S-)/(2i)
                        _ => (c64::new(0.0, -amp / 2.0), c64::new(0.0, amp / 2.0)),
                    };
                    out.push((k - 1, k, upper));
                    out.push((k, k - 1, lower));
                }
                out
            }
        }
    }
}

impl fmt::Display for SpinValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice_s.is_multiple_of(2) {
            write!(f, "{}", self.twice_s / 2)
        } else {
            write!(f, "{}/2", self.twice_s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn from_char(c: char) -> Option<Self> {
        match c {
            'x' | 'X' => Some(Axis::X),
            'y' | 'Y' => Some(Axis::Y),
            'z' | 'Z' => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// One spin operator acting on a single site (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    pub site: usize,
    pub axis: Axis,
}

/// `coefficient * Π factors`, with all factor sites distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl HamiltonianTerm {
    pub fn new(coefficient: f64, factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("a term needs at least one factor".into()));
        }
        if !coefficient.is_finite() {
            return Err(Error::InvalidParameter("term coefficient must be finite".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.site == f.site) {
                return Err(Error::InvalidParameter(format!(
                    "site {} appears twice in one term",
                    f.site + 1
                )));
            }
        }
        Ok(Self { coefficient, factors })
    }

    /// True when every factor is along `axis`.
    pub fn is_pure(&self, axis: Axis) -> bool {
        self.factors.iter().all(|f| f.axis == axis)
    }
}

impl fmt::Display for HamiltonianTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for factor in &self.factors {
            write!(f, "*S{}{}", factor.axis, factor.site + 1)?;
        }
        Ok(())
    }
}

/// A spin Hamiltonian: per-site spins and a list of product terms.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    spins: Vec<SpinValue>,
    terms: Vec<HamiltonianTerm>,
}

impl HamiltonianSpec {
    pub fn new(spins: Vec<SpinValue>, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidParameter("at least one site is required".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidParameter("at least one term is required".into()));
        }
        for term in &terms {
            if let Some(f) = term.factors.iter().find(|f| f.site >= spins.len()) {
                return Err(Error::InvalidParameter(format!(
                    "site {} out of range for {} sites",
                    f.site + 1,
                    spins.len()
                )));
            }
        }
        Ok(Self { spins, terms })
    }

    pub fn uniform(num_sites: usize, spin: SpinValue, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        Self::new(vec![spin; num_sites], terms)
    }

    pub fn num_sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[SpinValue] {
        &self.spins
    }

    pub fn spin(&self, site: usize) -> SpinValue {
        self.spins[site]
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    /// Product of the local dimensions; `None` on overflow.
    pub fn hilbert_dimension(&self) -> Option<usize> {
        self.spins
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.dimension()))
    }

    /// Same spins, terms restricted to those satisfying `keep`.
    pub fn filter_terms(&self, keep: impl Fn(&HamiltonianTerm) -> bool) -> Vec<HamiltonianTerm> {
        self.terms.iter().filter(|t| keep(t)).cloned().collect()
    }
}

impl fmt::Display for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{term}")?;
        }
        Ok(())
    }
}

/// Parses the textual term format for `num_sites` sites of uniform spin.
pub fn parse_hamiltonian(text: &str, num_sites: usize, spin: SpinValue) -> Result<HamiltonianSpec> {
    let terms = Parser::new(text, num_sites).parse()?;
    HamiltonianSpec::uniform(num_sites, spin, terms)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    num_sites: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, num_sites: usize) -> Self {
        Self { text, pos: 0, num_sites }
    }

    fn err<T>(&self, position: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { position, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn eat(&mut self, expected: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(expected) {
            self.pos += expected.len_utf8();
            true
        } else {
            false
        }
    }

    fn parse(mut self) -> Result<Vec<HamiltonianTerm>> {
        let mut terms = Vec::new();
        loop {
            terms.push(self.term()?);
            self.skip_ws();
            match self.peek() {
                None => break,
                Some('+') => self.pos += 1,
                Some(c) => return self.err(self.pos, format!("expected '+' or end of input, found '{c}'")),
            }
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<HamiltonianTerm> {
        self.skip_ws();
        let start = self.pos;
        let coefficient = match self.peek() {
            Some('S' | 's') => 1.0,
            Some(_) => {
                let c = self.number()?;
                if !self.eat('*') {
                    return self.err(self.pos, "expected '*' after coefficient");
                }
                c
            }
            None => return self.err(self.pos, "expected a term"),
        };
        let mut factors: Vec<Factor> = Vec::new();
        loop {
            self.skip_ws();
            let at = self.pos;
            let factor = self.factor()?;
            if factors.iter().any(|f| f.site == factor.site) {
                return self.err(at, format!("site {} appears twice in one term", factor.site + 1));
            }
            factors.push(factor);
            if !self.eat('*') {
                break;
            }
        }
        HamiltonianTerm::new(coefficient, factors).or_else(|e| self.err(start, e.to_string()))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut end = start;
        if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
            end += 1;
        }
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'-' || bytes[k] == b'+') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let token = &self.text[start..end];
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = end;
                Ok(v)
            }
            _ => {
                let shown: String = self.text[start..].chars().take(12).collect();
                self.err(start, format!("malformed coefficient near '{shown}'"))
            }
        }
    }

    fn factor(&mut self) -> Result<Factor> {
        let start = self.pos;
        match self.peek() {
            Some('S' | 's') => self.pos += 1,
            _ => return self.err(start, "expected a factor of the form S<axis><site>"),
        }
        let axis = match self.peek().and_then(Axis::from_char) {
            Some(a) => a,
            None => return self.err(self.pos, "expected axis x, y or z"),
        };
        self.pos += 1;
        let digits_start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let digits = &self.text[digits_start..self.pos];
        if digits.is_empty() {
            return self.err(digits_start, "expected a 1-based site index");
        }
        let site: usize = match digits.parse() {
            Ok(s) => s,
            Err(_) => return self.err(digits_start, format!("site index '{digits}' is too large")),
        };
        if site == 0 || site > self.num_sites {
            return self.err(
                digits_start,
                format!("site index {site} out of range 1..={}", self.num_sites),
            );
        }
        Ok(Factor { site: site - 1, axis })
    }
}

/// `(Sx, Sy, Sz)` as dense complex matrices in the `Sz` eigenbasis, ordered
/// from `m = +S` down to `m = -S`.
pub fn spin_matrices(spin: SpinValue) -> (Mat<c64>, Mat<c64>, Mat<c64>) {
    let build = |axis| {
        let dim = spin.dimension();
        let mut m = Mat::<c64>::zeros(dim, dim);
        for (r, c, v) in spin.operator_entries(axis) {
            m[(r, c)] = v;
        }
        m
    };
    (build(Axis::X), build(Axis::Y), build(Axis::Z))
}
