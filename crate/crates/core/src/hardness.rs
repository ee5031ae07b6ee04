//! The SAT embedding behind the KL-hardness result.
//!
//! A boolean formula f over z₁..zₙ becomes a density on ℝⁿ⁺¹:
//!
//! ```text
//! p̃_f(x, y) = g_f(x) η₁(y) + u(x) η₀(y)
//! g_f(x)    = F_f[s(x)] · Π_i (η₀(x_i) + η₁(x_i))
//! u(x)      = Π_i η₁(x_i)
//! ```
//!
//! where η₀ is a unit-mass bump on [−¼, ¼], η₁ the same bump centred at 1,
//! F_f the polynomial extension of f and s the soft assignment
//! η₁/(η₀ + η₁). The mass of A = ℝⁿ × supp η₁ is MC(f)/(MC(f) + 1), so any
//! model with tractable box probabilities that approximates p_f in KL decides
//! satisfiability by comparing Q(A) with ¼.

use crate::error::{Error, Result};
use crate::rng::{self, Tag};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest variable count for exhaustive enumeration.
pub const MAX_ENUMERATION_VARS: usize = 20;

/// ∫_{−1}^{1} exp(−1/(1 − t²)) dt.
const SMOOTH_BUMP_MASS: f64 = 0.443_993_816_168_079_4;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// 1-based variable index.
    Var(usize),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Self {
        Expr::Or(Box::new(a), Box::new(b))
    }

    fn max_var(&self) -> usize {
        match self {
            Expr::Var(i) => *i,
            Expr::Not(a) => a.max_var(),
            Expr::And(a, b) | Expr::Or(a, b) => a.max_var().max(b.max_var()),
        }
    }

    fn mark_vars(&self, seen: &mut [bool]) {
        match self {
            Expr::Var(i) => seen[*i - 1] = true,
            Expr::Not(a) => a.mark_vars(seen),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.mark_vars(seen);
                b.mark_vars(seen);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Not(a) => write!(f, "!{a}"),
            Expr::And(a, b) => write!(f, "({a} & {b})"),
            Expr::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    pub expr: Expr,
    pub n: usize,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl Formula {
    /// Wraps an expression whose variables are exactly x1..xn.
    pub fn new(expr: Expr) -> Result<Self> {
        let n = expr.max_var();
        let mut seen = vec![false; n];
        expr.mark_vars(&mut seen);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("variables must be indexed densely from x1; x{} is missing", missing + 1)));
        }
        Ok(Self { expr, n })
    }

    pub fn eval(&self, z: &[bool]) -> bool {
        eval_bool(&self.expr, z)
    }
}

fn eval_bool(e: &Expr, z: &[bool]) -> bool {
    match e {
        Expr::Var(i) => z[*i - 1],
        Expr::Not(a) => !eval_bool(a, z),
        Expr::And(a, b) => eval_bool(a, z) && eval_bool(b, z),
        Expr::Or(a, b) => eval_bool(a, z) || eval_bool(b, z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Var(usize),
    Not,
    And,
    Or,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'!' | b'~' => {
                out.push((Token::Not, i));
                i += 1;
            }
            b'&' => {
                out.push((Token::And, i));
                i += 1;
            }
            b'|' => {
                out.push((Token::Or, i));
                i += 1;
            }
            b'(' => {
                out.push((Token::Open, i));
                i += 1;
            }
            b')' => {
                out.push((Token::Close, i));
                i += 1;
            }
            b'x' | b'X' => {
                let start = i;
                i += 1;
                let digits_start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits_start {
                    return Err(Error::Syntax {
                        pos: start,
                        msg: "expected a variable index after 'x'".into(),
                    });
                }
                let idx: usize = text[digits_start..i].parse().map_err(|_| Error::Syntax {
                    pos: start,
                    msg: "variable index out of range".into(),
                })?;
                if idx == 0 {
                    return Err(Error::Input(format!("variable index 0 at position {start}; variables start at x1")));
                }
                out.push((Token::Var(idx), start));
            }
            _ => {
                return Err(Error::Syntax {
                    pos: i,
                    msg: format!("unexpected character {:?}", c as char),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).map(|t| t.0)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while self.peek() == Some(Token::Or) {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Expr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(Token::And) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Expr::not(self.unary()?))
            }
            Some(Token::Var(i)) => {
                self.pos += 1;
                Ok(Expr::Var(i))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(Token::Close) {
                    return Err(Error::Syntax {
                        pos: self.here(),
                        msg: "expected ')'".into(),
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(t) => Err(Error::Syntax {
                pos: self.here(),
                msg: format!("expected a variable, '!' or '(' but found {t:?}"),
            }),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: "unexpected end of formula".into(),
            }),
        }
    }
}

/// Parses the infix grammar (`!`, `&`, `|`, parentheses, x1..xn) or DIMACS CNF.
pub fn parse_formula(text: &str) -> Result<Formula> {
    if text.trim().is_empty() {
        return Err(Error::Input("empty formula".into()));
    }
    if text.lines().any(|l| l.trim_start().starts_with("p ")) {
        return parse_dimacs(text);
    }
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = p.or()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Syntax {
            pos: p.here(),
            msg: "unexpected trailing input".into(),
        });
    }
    Formula::new(expr)
}

/// DIMACS CNF: `c` comment lines, a `p cnf <vars> <clauses>` header, then
/// zero-terminated clauses.
pub fn parse_dimacs(text: &str) -> Result<Formula> {
    let mut n: Option<usize> = None;
    let mut declared_clauses = 0usize;
    let mut clauses: Vec<Vec<i64>> = Vec::new();
    let mut current: Vec<i64> = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        let line_pos = offset;
        offset += line.len();
        if trimmed.is_empty() || trimmed.starts_with('c') || trimmed.starts_with('%') {
            continue;
        }
        if trimmed.starts_with('p') {
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(Error::Syntax {
                    pos: line_pos,
                    msg: "header must read 'p cnf <variables> <clauses>'".into(),
                });
            }
            let bad = |_| Error::Syntax {
                pos: line_pos,
                msg: "header counts must be non-negative integers".into(),
            };
            n = Some(parts[2].parse().map_err(bad)?);
            declared_clauses = parts[3].parse().map_err(bad)?;
            continue;
        }
        let Some(nv) = n else {
            return Err(Error::Syntax {
                pos: line_pos,
                msg: "clause before the 'p cnf' header".into(),
            });
        };
        for tok in trimmed.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| Error::Syntax {
                pos: line_pos,
                msg: format!("expected an integer literal, found {tok:?}"),
            })?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(Error::Input("empty clause".into()));
                }
                clauses.push(std::mem::take(&mut current));
            } else {
                if lit.unsigned_abs() as usize > nv {
                    return Err(Error::Input(format!("literal {lit} exceeds the declared {nv} variables")));
                }
                current.push(lit);
            }
        }
    }
    if !current.is_empty() {
        clauses.push(current);
    }
    let n = n.ok_or_else(|| Error::Syntax {
        pos: 0,
        msg: "missing 'p cnf' header".into(),
    })?;
    if clauses.is_empty() {
        return Err(Error::Input("CNF has no clauses".into()));
    }
    if declared_clauses != clauses.len() {
        return Err(Error::Input(format!("header declares {declared_clauses} clauses but {} were read", clauses.len())));
    }
    let literal = |l: i64| {
        let v = Expr::Var(l.unsigned_abs() as usize);
        if l < 0 {
            Expr::not(v)
        } else {
            v
        }
    };
    let clause_expr = |c: &[i64]| c[1..].iter().fold(literal(c[0]), |acc, &l| Expr::or(acc, literal(l)));
    let expr = clauses[1..].iter().fold(clause_expr(&clauses[0]), |acc, c| Expr::and(acc, clause_expr(c)));
    if expr.max_var() > n {
        return Err(Error::Input("literal exceeds the declared variable count".into()));
    }
    Ok(Formula { expr, n })
}

/// F_f(x) with NOT → 1 − a, AND → ab, OR → a + b − ab.
pub fn poly_extend(f: &Formula, x: &[f64]) -> f64 {
    poly(&f.expr, x)
}

fn poly(e: &Expr, x: &[f64]) -> f64 {
    match e {
        Expr::Var(i) => x[*i - 1],
        Expr::Not(a) => 1.0 - poly(a, x),
        Expr::And(a, b) => poly(a, x) * poly(b, x),
        Expr::Or(a, b) => {
            let (p, q) = (poly(a, x), poly(b, x));
            p + q - p * q
        }
    }
}

fn assignment(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| (mask >> i) & 1 == 1).collect()
}

/// Number of satisfying assignments, by enumeration.
pub fn model_count(f: &Formula) -> Result<u64> {
    if f.n > MAX_ENUMERATION_VARS {
        return Err(Error::Size {
            what: "variables for model counting",
            needed: f.n,
            limit: MAX_ENUMERATION_VARS,
        });
    }
    let total = 1u64 << f.n;
    const BLOCK: u64 = 4096;
    let blocks = total.div_ceil(BLOCK);
    Ok((0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(total);
            (lo..hi).filter(|&m| f.eval(&assignment(m, f.n))).count() as u64
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    /// 2·𝟙[|x| ≤ ¼]
    #[default]
    Box,
    /// c·exp(−1/(1 − 16x²)) on |x| < ¼
    Smooth,
}

impl BumpKind {
    /// η(x), unit mass, supported in [−¼, ¼].
    pub fn eta(self, x: f64) -> f64 {
        match self {
            BumpKind::Box => {
                if x.abs() <= 0.25 {
                    2.0
                } else {
                    0.0
                }
            }
            BumpKind::Smooth => {
                let t = 4.0 * x;
                if t.abs() < 1.0 {
                    4.0 / SMOOTH_BUMP_MASS * (-1.0 / (1.0 - t * t)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eta0(self, x: f64) -> f64 {
        self.eta(x)
    }

    /// Centred at +1, support [¾, 5/4].
    pub fn eta1(self, x: f64) -> f64 {
        self.eta(x - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct HardDensity {
    pub formula: Formula,
    pub bump: BumpKind,
}

impl HardDensity {
    pub fn new(formula: Formula, bump: BumpKind) -> Self {
        Self { formula, bump }
    }

    pub fn n(&self) -> usize {
        self.formula.n
    }

    /// s(x) = η₁/(η₀ + η₁) on the bump supports, 0 elsewhere.
    pub fn soft_assignment(&self, x: f64) -> f64 {
        let (a, b) = (self.bump.eta0(x), self.bump.eta1(x));
        if a + b > 0.0 {
            b / (a + b)
        } else {
            0.0
        }
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        let mut envelope = 1.0;
        for &xi in x {
            envelope *= self.bump.eta0(xi) + self.bump.eta1(xi);
            if envelope == 0.0 {
                return 0.0;
            }
        }
        let s: Vec<f64> = x.iter().map(|&xi| self.soft_assignment(xi)).collect();
        poly_extend(&self.formula, &s) * envelope
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| self.bump.eta1(xi)).product()
    }

    /// The unnormalized density g_f(x)η₁(y) + u(x)η₀(y).
    pub fn p_tilde(&self, x: &[f64], y: f64) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::Contract(format!("x has length {} but the formula has {} variables", x.len(), self.n())));
        }
        Ok(self.g(x) * self.bump.eta1(y) + self.u(x) * self.bump.eta0(y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub formula: String,
    pub n: usize,
    pub bump: BumpKind,
    pub model_count: u64,
    /// MC/(MC + 1).
    pub predicted: f64,
    /// Estimated P(A), A = ℝⁿ × supp η₁.
    pub estimate: f64,
    pub stderr: f64,
    /// Estimated ∫p̃, which should equal MC + 1.
    pub normalizer: f64,
    pub normalizer_stderr: f64,
    pub samples: usize,
    pub seed: u64,
    /// P(A) ≥ ¼.
    pub decided_sat: bool,
    pub satisfiable: bool,
}

impl GapReport {
    pub fn decision_correct(&self) -> bool {
        self.decided_sat == self.satisfiable
    }

    /// |estimate − predicted| within `k` standard errors, with a floor for
    /// rounding when the estimator has zero variance.
    pub fn within(&self, k: f64) -> bool {
        (self.estimate - self.predicted).abs() <= k * self.stderr + 1e-12
    }
}

/// Estimates P(A) by stratified sampling over the 2ⁿ assignment boxes
/// Π_i I_{z_i}, where all mass of p̃ lives, and compares it with MC/(MC + 1).
pub fn verify_gap(hd: &HardDensity, samples: usize, seed: u64) -> Result<GapReport> {
    let n = hd.n();
    let mc = model_count(&hd.formula)?;
    let strata = 1usize << n;
    let per = (samples / strata).max(2);
    let vol_x = 0.5f64.powi(n as i32);
    let vol_y = 0.5;
    let weight = vol_x * vol_y;

    // Per stratum: Σa, Σb, Σa², Σb², Σab, with a = g η₁(y₁), b = u η₀(y₀).
    let sums: Vec<[f64; 5]> = (0..strata)
        .into_par_iter()
        .map(|z| {
            let mut stream = rng::stream(seed, Tag::Hardness, z as u64);
            let centres: Vec<f64> = (0..n).map(|i| if (z >> i) & 1 == 1 { 1.0 } else { 0.0 }).collect();
            let mut acc = [0.0; 5];
            let mut x = vec![0.0; n];
            for _ in 0..per {
                for (xi, c) in x.iter_mut().zip(&centres) {
                    *xi = c + stream.random_range(-0.25..0.25);
                }
                let y1 = 1.0 + stream.random_range(-0.25..0.25);
                let y0 = stream.random_range(-0.25..0.25);
                let a = hd.g(&x) * hd.bump.eta1(y1);
                let b = hd.u(&x) * hd.bump.eta0(y0);
                acc[0] += a;
                acc[1] += b;
                acc[2] += a * a;
                acc[3] += b * b;
                acc[4] += a * b;
            }
            acc
        })
        .collect();

    let m = per as f64;
    let (mut za, mut zb, mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in &sums {
        let (ma, mb) = (s[0] / m, s[1] / m);
        let va = ((s[2] / m - ma * ma) * m / (m - 1.0)).max(0.0);
        let vb = ((s[3] / m - mb * mb) * m / (m - 1.0)).max(0.0);
        let cab = (s[4] / m - ma * mb) * m / (m - 1.0);
        za += weight * ma;
        zb += weight * mb;
        var_a += weight * weight * va / m;
        var_b += weight * weight * vb / m;
        cov += weight * weight * cab / m;
    }
    let z = za + zb;
    let estimate = if z > 0.0 { za / z } else { 0.0 };
    // Delta method for A/(A + B).
    let stderr = if z > 0.0 {
        let var = (zb * zb * var_a + za * za * var_b - 2.0 * za * zb * cov) / z.powi(4);
        var.max(0.0).sqrt()
    } else {
        0.0
    };
    let normalizer_stderr = (var_a + var_b + 2.0 * cov).max(0.0).sqrt();
    Ok(GapReport {
        formula: hd.formula.to_string(),
        n,
        bump: hd.bump,
        model_count: mc,
        predicted: mc as f64 / (mc as f64 + 1.0),
        estimate,
        stderr,
        normalizer: z,
        normalizer_stderr,
        samples: per * strata,
        seed,
        decided_sat: estimate >= 0.25,
        satisfiable: mc > 0,
    })
}

/// A random formula tree with `n` variables, every variable used at least once.
pub fn random_formula<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Formula {
    assert!(n >= 1, "random formulas need at least one variable");
    let mut leaves: Vec<Expr> = (1..=n).map(Expr::Var).collect();
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        leaves.push(Expr::Var(rng.random_range(1..=n)));
    }
    let mut pool: Vec<Expr> = leaves
        .into_iter()
        .map(|l| if rng.random_bool(0.3) { Expr::not(l) } else { l })
        .collect();
    while pool.len() > 1 {
        let i = rng.random_range(0..pool.len());
        let a = pool.swap_remove(i);
        let j = rng.random_range(0..pool.len());
        let b = pool.swap_remove(j);
        let mut e = if rng.random_bool(0.5) { Expr::and(a, b) } else { Expr::or(a, b) };
        if rng.random_bool(0.15) {
            e = Expr::not(e);
        }
        pool.push(e);
    }
    Formula::new(pool.pop().unwrap()).expect("every variable appears")
}

/// A random k-CNF with `clauses` clauses, as DIMACS text.
pub fn random_cnf_dimacs<R: Rng + ?Sized>(n: usize, clauses: usize, k: usize, rng: &mut R) -> String {
    let mut out = format!("p cnf {n} {clauses}\n");
    for _ in 0..clauses {
        for _ in 0..k {
            let v = rng.random_range(1..=n) as i64;
            let lit = if rng.random_bool(0.5) { -v } else { v };
            out.push_str(&format!("{lit} "));
        }
        out.push_str("0\n");
    }
    out
}

/// Random formulas with n ∈ [lo, hi], plus an unsatisfiable and a tautological one.
pub fn benchmark_formulas(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<Formula> {
    let mut stream = rng::stream(seed, Tag::Hardness, u64::MAX);
    let mut out: Vec<Formula> = (0..count)
        .map(|_| {
            let n = stream.random_range(lo..=hi);
            random_formula(n, &mut stream)
        })
        .collect();
    out.push(parse_formula("(x1 | x2) & !x1 & !x2").expect("fixed formula parses"));
    out.push(parse_formula("(x1 | !x1) & (x2 | !x2) & (x3 | !x3)").expect("fixed formula parses"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_canonically() {
        let f = parse_formula("(x1 & x2) | !x3").unwrap();
        assert_eq!(f.n, 3);
        assert_eq!(f.to_string(), "((x1 & x2) | !x3)");
        assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let f = parse_formula("x1 | x2 & x3").unwrap();
        assert_eq!(f.to_string(), "(x1 | (x2 & x3))");
    }

    #[test]
    fn dimacs_clause() {
        let f = parse_formula("p cnf 2 1\n1 -2 0\n").unwrap();
        assert_eq!(f.to_string(), "(x1 | !x2)");
        assert_eq!(f.n, 2);
    }

    #[test]
    fn doubled_operator_is_a_syntax_error() {
        match parse_formula("x1 & & x2") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected a syntax error, got {other:?}"),
        }
    }

    #[test]
    fn zero_index_and_gaps_are_input_errors() {
        assert!(matches!(parse_formula("x0 | x1"), Err(Error::Input(_))));
        assert!(matches!(parse_formula("x1 | x3"), Err(Error::Input(_))));
        assert!(matches!(parse_formula("   "), Err(Error::Input(_))));
    }

    #[test]
    fn polynomial_matches_boolean_values() {
        let f = parse_formula("x1 | x2").unwrap();
        assert_eq!(poly_extend(&f, &[1.0, 0.0]), 1.0);
        let c = parse_formula("x1 & !x1").unwrap();
        assert_eq!(poly_extend(&c, &[0.0]), 0.0);
        assert_eq!(poly_extend(&c, &[1.0]), 0.0);
    }

    #[test]
    fn counts_of_tautology_and_contradiction() {
        assert_eq!(model_count(&parse_formula("x1 | !x1").unwrap()).unwrap(), 2);
        assert_eq!(model_count(&parse_formula("x1 & !x1").unwrap()).unwrap(), 0);
    }

    #[test]
    fn enumeration_cap() {
        let text: Vec<String> = (1..=21).map(|i| format!("x{i}")).collect();
        let f = parse_formula(&text.join(" | ")).unwrap();
        assert!(matches!(model_count(&f), Err(Error::Size { .. })));
    }

    #[test]
    fn bumps_have_unit_mass_and_disjoint_supports() {
        for kind in [BumpKind::Box, BumpKind::Smooth] {
            let rule = crate::quadrature::GaussLegendre::new(200);
            let m0 = rule.integrate(-0.25, 0.25, |x| kind.eta0(x));
            let m1 = rule.integrate(0.75, 1.25, |x| kind.eta1(x));
            assert!((m0 - 1.0).abs() < 1e-6, "{kind:?} {m0}");
            assert!((m1 - 1.0).abs() < 1e-6, "{kind:?} {m1}");
            for i in 0..=4000 {
                let x = -1.0 + i as f64 * 1e-3;
                assert_eq!(kind.eta0(x) * kind.eta1(x), 0.0);
            }
        }
    }

    #[test]
    fn p_tilde_vanishes_off_the_bumps() {
        let hd = HardDensity::new(parse_formula("x1 | x2").unwrap(), BumpKind::Box);
        assert_eq!(hd.p_tilde(&[1.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(hd.p_tilde(&[1.0, 0.0], 1.0).unwrap() > 0.0);
    }

    #[test]
    fn gap_for_small_formulas() {
        let unsat = HardDensity::new(parse_formula("x1 & !x1").unwrap(), BumpKind::Box);
        let r = verify_gap(&unsat, 1000, 1).unwrap();
        assert!(r.estimate <= 0.01);
        assert!(!r.decided_sat);

        let one = HardDensity::new(parse_formula("x1").unwrap(), BumpKind::Smooth);
        let r = verify_gap(&one, 20000, 2).unwrap();
        assert!(r.within(3.0), "{r:?}");
        assert!((r.predicted - 0.5).abs() < 1e-15);
    }
}
