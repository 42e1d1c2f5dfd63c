//! Input language for connection matrices.
//!
//! Grammar (FORM entries of the connection file):
//!   FORM  := TERM (('+'|'-') TERM)* | '0'
//!   TERM  := [COEF '*']? ATOM        (the '*' may be omitted)
//!   ATOM  := 'dz' | 'dlog(' RAT ')'
//!   RAT   := rational expression in z and integer literals
//!            with + - * / ^ and parentheses
//! The variable letter is configurable ('z' by default); the identifier
//! 'p' inside RAT denotes the prime of the ambient context.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::padic::PadicContext;
use crate::ratfun::{Poly, RationalFunction};
use crate::series::{DiskFunction, LogOneForm};

#[derive(Clone, Debug, PartialEq)]
pub enum Atom {
    /// dz
    Dz,
    /// dlog(h) for a rational h
    Dlog(RationalFunction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormTerm {
    pub coef: RationalFunction,
    pub atom: Atom,
}

/// A parsed 1-form expression; `src` preserves the exact input text so
/// rendering is lossless.
#[derive(Clone, Debug)]
pub struct FormExpr {
    pub src: String,
    pub terms: Vec<FormTerm>,
}

impl PartialEq for FormExpr {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl fmt::Display for FormExpr {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "{}", self.src)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
}

impl Lexer {
    fn new(s: &str, line: usize) -> Result<Self> {
        let mut toks = Vec::new();
        let bytes: Vec<char> = s.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let col = i + 1;
            match c {
                ' ' | '\t' => {
                    i += 1;
                }
                '+' => {
                    toks.push((Tok::Plus, col));
                    i += 1;
                }
                '-' => {
                    toks.push((Tok::Minus, col));
                    i += 1;
                }
                '*' => {
                    toks.push((Tok::Star, col));
                    i += 1;
                }
                '/' => {
                    toks.push((Tok::Slash, col));
                    i += 1;
                }
                '^' => {
                    toks.push((Tok::Caret, col));
                    i += 1;
                }
                '(' => {
                    toks.push((Tok::LParen, col));
                    i += 1;
                }
                ')' => {
                    toks.push((Tok::RParen, col));
                    i += 1;
                }
                '0'..='9' => {
                    let start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    let text: String = bytes[start..i].iter().collect();
                    toks.push((Tok::Int(text.parse().unwrap()), start + 1));
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let start = i;
                    while i < bytes.len()
                        && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_')
                    {
                        i += 1;
                    }
                    let text: String = bytes[start..i].iter().collect();
                    toks.push((Tok::Ident(text), start + 1));
                }
                _ => {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            }
        }
        Ok(Lexer { toks, pos: 0, line })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or_else(|| self.toks.last().map(|(_, c)| c + 1).unwrap_or(1))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&t) {
            self.next();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }
}

struct RatParser<'a> {
    lex: &'a mut Lexer,
    var: String,
    prime: Option<u64>,
}

impl<'a> RatParser<'a> {
    fn atom_starts_here(&self) -> bool {
        match self.lex.peek() {
            Some(Tok::Ident(id)) => id == &format!("d{}", self.var) || id == "dlog",
            _ => false,
        }
    }

    fn expr(&mut self) -> Result<RationalFunction> {
        let mut acc = self.term()?;
        loop {
            match self.lex.peek() {
                Some(Tok::Plus) => {
                    self.lex.next();
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.lex.next();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<RationalFunction> {
        let mut acc = self.unary()?;
        loop {
            match self.lex.peek() {
                Some(Tok::Star) => {
                    // stop before `* dz`: that star belongs to the FORM
                    if let Some(Tok::Ident(id)) = self.lex.peek2() {
                        if id == &format!("d{}", self.var) || id == "dlog" {
                            return Ok(acc);
                        }
                    }
                    self.lex.next();
                    acc = acc.mul(&self.unary()?);
                }
                Some(Tok::Slash) => {
                    self.lex.next();
                    let d = self.unary()?;
                    acc = acc.div(&d).map_err(|_| self.lex.err("division by zero"))?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<RationalFunction> {
        match self.lex.peek() {
            Some(Tok::Minus) => {
                self.lex.next();
                Ok(self.unary()?.neg())
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<RationalFunction> {
        let base = self.primary()?;
        if self.lex.peek() == Some(&Tok::Caret) {
            self.lex.next();
            let e = match self.lex.next() {
                Some(Tok::Int(n)) => n,
                Some(Tok::Ident(id)) if id == "p" && self.prime.is_some() => {
                    BigInt::from(self.prime.unwrap())
                }
                Some(Tok::Minus) => match self.lex.next() {
                    Some(Tok::Int(n)) => -n,
                    _ => return Err(self.lex.err("expected integer exponent")),
                },
                _ => return Err(self.lex.err("expected integer exponent")),
            };
            let e: i32 = e
                .try_into()
                .map_err(|_| self.lex.err("exponent out of range"))?;
            base.pow(e).map_err(|_| self.lex.err("zero to a negative power"))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<RationalFunction> {
        match self.lex.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.lex.next();
                Ok(RationalFunction::constant(BigRational::from_integer(n)))
            }
            Some(Tok::Ident(id)) if id == self.var => {
                self.lex.next();
                Ok(RationalFunction::var())
            }
            Some(Tok::Ident(id)) if id == "p" && self.prime.is_some() => {
                self.lex.next();
                Ok(RationalFunction::constant(BigRational::from_integer(
                    BigInt::from(self.prime.unwrap()),
                )))
            }
            Some(Tok::Ident(id)) => Err(self.lex.err(format!("unknown variable `{id}`"))),
            Some(Tok::LParen) => {
                self.lex.next();
                let inner = self.expr()?;
                self.lex.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(self.lex.err("expected a rational expression")),
        }
    }
}

/// Parse a RAT expression standing alone (used for the Frobenius lift
/// and singularity lists).
pub fn parse_rat(s: &str, var: &str, prime: Option<u64>) -> Result<RationalFunction> {
    let mut lex = Lexer::new(s, 1)?;
    let mut rp = RatParser {
        lex: &mut lex,
        var: var.to_string(),
        prime,
    };
    let out = rp.expr()?;
    if lex.peek().is_some() {
        return Err(lex.err("trailing input after expression"));
    }
    Ok(out)
}

/// Parse one FORM entry.
pub fn parse_form(s: &str, var: &str, prime: Option<u64>, line: usize) -> Result<FormExpr> {
    let mut lex = Lexer::new(s, line)?;
    // bare zero
    if lex.toks.len() == 1 {
        if let Some(Tok::Int(n)) = lex.peek() {
            if n.is_zero() {
                return Ok(FormExpr {
                    src: s.trim().to_string(),
                    terms: vec![],
                });
            }
        }
    }
    let mut terms = Vec::new();
    let mut first = true;
    loop {
        let sign = if first {
            match lex.peek() {
                Some(Tok::Minus) => {
                    lex.next();
                    -1
                }
                _ => 1,
            }
        } else {
            match lex.next() {
                Some(Tok::Plus) => 1,
                Some(Tok::Minus) => -1,
                _ => return Err(lex.err("expected `+` or `-` between terms")),
            }
        };
        first = false;
        let term = parse_term(&mut lex, var, prime)?;
        let coef = if sign < 0 { term.coef.neg() } else { term.coef };
        terms.push(FormTerm {
            coef,
            atom: term.atom,
        });
        if lex.peek().is_none() {
            break;
        }
        match lex.peek() {
            Some(Tok::Plus) | Some(Tok::Minus) => continue,
            _ => return Err(lex.err("unexpected trailing input")),
        }
    }
    Ok(FormExpr {
        src: s.trim().to_string(),
        terms,
    })
}

fn parse_term(lex: &mut Lexer, var: &str, prime: Option<u64>) -> Result<FormTerm> {
    let mut rp = RatParser {
        lex,
        var: var.to_string(),
        prime,
    };
    let coef = if rp.atom_starts_here() {
        RationalFunction::one()
    } else {
        let c = rp.expr()?;
        // optional explicit star before the atom
        if rp.lex.peek() == Some(&Tok::Star) {
            rp.lex.next();
        }
        c
    };
    let atom = match rp.lex.next() {
        Some(Tok::Ident(id)) if id == format!("d{var}") => Atom::Dz,
        Some(Tok::Ident(id)) if id == "dlog" => {
            rp.lex.expect(Tok::LParen, "`(` after dlog")?;
            let h = rp.expr()?;
            rp.lex.expect(Tok::RParen, "`)` closing dlog")?;
            if h.is_zero() {
                return Err(rp.lex.err("dlog of the zero function"));
            }
            Atom::Dlog(h)
        }
        _ => return Err(rp.lex.err(format!("expected `d{var}` or `dlog(...)`"))),
    };
    Ok(FormTerm { coef, atom })
}

impl FormExpr {
    pub fn render(&self) -> &str {
        &self.src
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef.is_zero())
    }

    /// The expression as F(x) dlog x after re-centering z = c + x:
    /// dz = x dlog x and dlog(h) = (x h'/h) dlog x, everything exact
    /// over Q. F must be regular at x = 0 (log pole at worst).
    pub fn laurent_at(&self, c: &BigRational) -> Result<RationalFunction> {
        let x = RationalFunction::var();
        let mut total = RationalFunction::zero();
        for t in &self.terms {
            let coef = t.coef.shift(c);
            let weight = match &t.atom {
                Atom::Dz => x.clone(),
                Atom::Dlog(h) => {
                    let hs = h.shift(c);
                    if hs.is_zero() {
                        return Err(Error::precondition("dlog of the zero function"));
                    }
                    x.mul(&hs.log_derivative()?)
                }
            };
            total = total.add(&coef.mul(&weight));
        }
        if !total.is_zero() && total.ord_at(&BigRational::zero()) < 0 {
            return Err(Error::precondition(format!(
                "non-logarithmic pole (order > 1) at expansion point {c}"
            )));
        }
        Ok(total)
    }

    /// Expand at the point c into a logarithmic 1-form.
    pub fn to_one_form(
        &self,
        c: &BigRational,
        ctx: &Arc<PadicContext>,
        trunc: usize,
        rho: BigRational,
    ) -> Result<LogOneForm> {
        let f = self.laurent_at(c)?;
        let series = f.series_at_zero(trunc + 1)?;
        let residue = crate::padic::PadicNumber::from_rational(ctx, &series[0])?;
        let regular = DiskFunction::from_rational_coeffs(ctx, &series[1..], trunc, rho)?;
        Ok(LogOneForm { residue, regular })
    }
}

/// A parsed connection description file.
#[derive(Clone, Debug)]
pub struct ConnectionFile {
    pub prime: u64,
    pub precision: u32,
    pub rank: usize,
    pub variable: String,
    pub matrix: Vec<Vec<FormExpr>>,
    pub frobenius_lift: RationalFunction,
    pub singularities: Vec<BigRational>,
}

fn json_err(msg: impl Into<String>) -> Error {
    Error::Parse {
        line: 1,
        col: 1,
        msg: msg.into(),
    }
}

/// Parse the JSON connection document. Matrix entries use the FORM
/// grammar above; `frobenius_lift` defaults to z^p.
pub fn parse_connection(document: &str) -> Result<ConnectionFile> {
    let v: serde_json::Value = serde_json::from_str(document).map_err(|e| Error::Parse {
        line: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })?;
    let obj = v.as_object().ok_or_else(|| json_err("expected a JSON object"))?;
    let prime = obj
        .get("prime")
        .and_then(|x| x.as_u64())
        .ok_or_else(|| json_err("missing integer field `prime`"))?;
    let precision = obj
        .get("precision")
        .and_then(|x| x.as_u64())
        .ok_or_else(|| json_err("missing integer field `precision`"))?
        as u32;
    let rank = obj
        .get("rank")
        .and_then(|x| x.as_u64())
        .ok_or_else(|| json_err("missing integer field `rank`"))? as usize;
    let variable = obj
        .get("variable")
        .and_then(|x| x.as_str())
        .unwrap_or("z")
        .to_string();
    let matrix_json = obj
        .get("matrix")
        .and_then(|x| x.as_array())
        .ok_or_else(|| json_err("missing array field `matrix`"))?;
    if matrix_json.len() != rank {
        return Err(json_err(format!(
            "matrix has {} rows, rank says {}",
            matrix_json.len(),
            rank
        )));
    }
    let mut matrix = Vec::with_capacity(rank);
    for (i, row) in matrix_json.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| json_err(format!("matrix row {i} is not an array")))?;
        if row.len() != rank {
            return Err(json_err(format!(
                "matrix row {i} has {} entries, rank says {rank}",
                row.len()
            )));
        }
        let mut out_row = Vec::with_capacity(rank);
        for (j, entry) in row.iter().enumerate() {
            let s = entry
                .as_str()
                .ok_or_else(|| json_err(format!("matrix entry ({i},{j}) is not a string")))?;
            let form = parse_form(s, &variable, Some(prime), i + 1).map_err(|e| match e {
                Error::Parse { col, msg, .. } => Error::Parse {
                    line: i + 1,
                    col,
                    msg: format!("matrix entry ({i},{j}): {msg}"),
                },
                other => other,
            })?;
            out_row.push(form);
        }
        matrix.push(out_row);
    }
    let frobenius_lift = match obj.get("frobenius_lift").and_then(|x| x.as_str()) {
        Some(s) => parse_rat(s, &variable, Some(prime))?,
        None => RationalFunction::from_poly(Poly::x().pow(prime as u32)),
    };
    let mut singularities = Vec::new();
    if let Some(arr) = obj.get("singularities").and_then(|x| x.as_array()) {
        for s in arr {
            let s = s
                .as_str()
                .ok_or_else(|| json_err("singularities entries must be strings"))?;
            let r = parse_rat(s, &variable, Some(prime))?;
            if r.den != Poly::one() || r.num.degree().map(|d| d > 0).unwrap_or(false) {
                return Err(json_err(format!("singularity `{s}` is not a constant")));
            }
            singularities.push(r.num.coeff(0));
        }
    }
    Ok(ConnectionFile {
        prime,
        precision,
        rank,
        variable,
        matrix,
        frobenius_lift,
        singularities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn parse_kummer_entry() {
        let f = parse_form("dlog(z)", "z", Some(5), 1).unwrap();
        assert_eq!(f.terms.len(), 1);
        assert!(f.terms[0].coef == RationalFunction::one());
        assert!(matches!(f.terms[0].atom, Atom::Dlog(_)));
    }

    #[test]
    fn parse_zero() {
        let f = parse_form("0", "z", Some(5), 1).unwrap();
        assert!(f.is_zero());
    }

    #[test]
    fn parse_coef_dz_with_and_without_star() {
        let a = parse_form("(1/(z-1)) dz", "z", Some(5), 1).unwrap();
        let b = parse_form("(1/(z-1)) * dz", "z", Some(5), 1).unwrap();
        assert_eq!(a.terms, b.terms);
        assert!(matches!(a.terms[0].atom, Atom::Dz));
    }

    #[test]
    fn parse_sum_and_difference() {
        let f = parse_form("dlog(z) - 2*dz + (z^2/(1-z)) dz", "z", Some(5), 1).unwrap();
        assert_eq!(f.terms.len(), 3);
        assert_eq!(f.terms[1].coef, RationalFunction::constant(q(-2)));
    }

    #[test]
    fn malformed_double_atom_rejected() {
        let e = parse_form("dz dz", "z", Some(5), 1);
        assert!(matches!(e, Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_variable_rejected() {
        let e = parse_form("w * dz", "z", Some(5), 1);
        match e {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("unknown variable")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn render_roundtrip_corpus() {
        let corpus = [
            "0",
            "dlog(z)",
            "dz",
            "(1/(z-1)) dz",
            "2*dz - dlog(1-z)",
            "dlog(z^2*(1-z)) + (3/7) * dz",
        ];
        for src in corpus {
            let a = parse_form(src, "z", Some(5), 1).unwrap();
            let b = parse_form(a.render(), "z", Some(5), 1).unwrap();
            assert_eq!(a, b, "roundtrip changed meaning of {src}");
            assert_eq!(a.render(), src.trim());
        }
    }

    #[test]
    fn laurent_dz_coef_pole_becomes_dlog() {
        // (1/(z-1)) dz at c = 1 is exactly dlog x
        let f = parse_form("(1/(z-1)) dz", "z", Some(5), 1).unwrap();
        let lf = f.laurent_at(&q(1)).unwrap();
        assert_eq!(lf, RationalFunction::one());
    }

    #[test]
    fn laurent_matches_dlog_convention() {
        // (1/(z-1)) dz = dlog(z-1); expand both at 0 and compare
        let a = parse_form("(1/(z-1)) dz", "z", Some(5), 1).unwrap();
        let b = parse_form("dlog(z-1)", "z", Some(5), 1).unwrap();
        assert_eq!(a.laurent_at(&q(0)).unwrap(), b.laurent_at(&q(0)).unwrap());
    }

    #[test]
    fn non_logarithmic_pole_rejected() {
        let f = parse_form("(1/z^2) dz", "z", Some(5), 1).unwrap();
        assert!(f.laurent_at(&q(0)).is_err());
    }

    #[test]
    fn to_one_form_residue() {
        let ctx = PadicContext::new(5, 8).unwrap();
        let f = parse_form("dlog(z^2*(1-z))", "z", Some(5), 1).unwrap();
        let w = f
            .to_one_form(&q(0), &ctx, 6, BigRational::zero())
            .unwrap();
        assert!(w
            .residue
            .eq_mod(&crate::padic::PadicNumber::from_i64(&ctx, 2), 8));
    }

    #[test]
    fn parse_connection_document() {
        let doc = r#"{
            "prime": 5,
            "precision": 20,
            "rank": 2,
            "variable": "z",
            "matrix": [["0", "dlog(z)"], ["0", "0"]],
            "singularities": ["0"]
        }"#;
        let c = parse_connection(doc).unwrap();
        assert_eq!(c.prime, 5);
        assert_eq!(c.rank, 2);
        assert!(c.matrix[0][0].is_zero());
        assert!(!c.matrix[0][1].is_zero());
        // default Frobenius lift z^p
        assert_eq!(c.frobenius_lift.num, Poly::x().pow(5));
        assert_eq!(c.singularities, vec![BigRational::zero()]);
    }

    #[test]
    fn parse_connection_bad_entry_reports_position() {
        let doc = r#"{
            "prime": 5, "precision": 10, "rank": 1,
            "matrix": [["dz dz"]]
        }"#;
        match parse_connection(doc) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("(0,0)")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_connection_nonsquare_rejected() {
        let doc = r#"{
            "prime": 5, "precision": 10, "rank": 2,
            "matrix": [["0", "0"], ["0"]]
        }"#;
        assert!(parse_connection(doc).is_err());
    }

    #[test]
    fn custom_frobenius_lift() {
        let doc = r#"{
            "prime": 5, "precision": 10, "rank": 1,
            "matrix": [["0"]],
            "frobenius_lift": "z^p * (1 + p*z)"
        }"#;
        let c = parse_connection(doc).unwrap();
        let expect = parse_rat("z^5 + 5*z^6", "z", Some(5)).unwrap();
        assert_eq!(c.frobenius_lift, expect);
    }
}
