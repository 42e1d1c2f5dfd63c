//! The ring K_st = K[l_p] and the universal branch of the p-adic
//! logarithm.
//!
//! l_p is a formal symbol standing for "log p"; specializing l_p to a
//! value of K selects a classical branch. The monodromy operator N is
//! the K-linear derivation with N(l_p) = e (e = 1 over the base field,
//! kept as explicit data to cover ramified normalizations).
//!
//! Sign convention: Log z = sum_{i>=1} (1-z)^i / i on 1-units. This is
//! the NEGATIVE of the customary p-adic logarithm; every cross-check
//! against the usual Iwasawa logarithm must negate.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::padic::{PadicContext, PadicNumber};

/// A polynomial in the branch symbol l_p with coefficients in K.
#[derive(Clone, Debug)]
pub struct KstElement {
    pub ctx: Arc<PadicContext>,
    /// coefficient of l_p^i at index i; trailing zero coefficients are
    /// trimmed
    coeffs: Vec<PadicNumber>,
    /// normalization of the derivation: N(l_p) = e
    pub e: u32,
}

impl KstElement {
    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        KstElement {
            ctx: ctx.clone(),
            coeffs: vec![],
            e: 1,
        }
    }

    pub fn constant(c: PadicNumber) -> Self {
        let ctx = c.ctx.clone();
        KstElement {
            ctx,
            coeffs: vec![c],
            e: 1,
        }
        .trimmed()
    }

    /// The branch symbol l_p itself.
    pub fn lp(ctx: &Arc<PadicContext>) -> Self {
        KstElement {
            ctx: ctx.clone(),
            coeffs: vec![PadicNumber::zero(ctx), PadicNumber::one(ctx)],
            e: 1,
        }
    }

    pub fn with_e(mut self, e: u32) -> Self {
        self.e = e;
        self
    }

    pub fn from_coeffs(ctx: &Arc<PadicContext>, coeffs: Vec<PadicNumber>) -> Self {
        KstElement {
            ctx: ctx.clone(),
            coeffs,
            e: 1,
        }
        .trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            self.coeffs.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, i: usize) -> PadicNumber {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(|| PadicNumber::zero(&self.ctx))
    }

    pub fn coeffs(&self) -> &[PadicNumber] {
        &self.coeffs
    }

    fn merge_e(&self, other: &Self) -> Result<u32> {
        if self.is_zero() || self.coeffs.len() <= 1 {
            return Ok(if other.is_zero() || other.coeffs.len() <= 1 {
                self.e.max(other.e)
            } else {
                other.e
            });
        }
        if other.is_zero() || other.coeffs.len() <= 1 {
            return Ok(self.e);
        }
        if self.e != other.e {
            return Err(Error::precondition(
                "mixing K_st elements with different N-normalizations",
            ));
        }
        Ok(self.e)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let e = self.merge_e(other)?;
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            coeffs.push(self.coeff(i).add(&other.coeff(i))?);
        }
        Ok(KstElement {
            ctx: self.ctx.clone(),
            coeffs,
            e,
        }
        .trimmed())
    }

    pub fn neg(&self) -> Self {
        KstElement {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
            e: self.e,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let e = self.merge_e(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(&self.ctx));
        }
        let mut coeffs =
            vec![PadicNumber::zero(&self.ctx); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].add(&a.mul(b)?)?;
            }
        }
        Ok(KstElement {
            ctx: self.ctx.clone(),
            coeffs,
            e,
        }
        .trimmed())
    }

    pub fn scale(&self, c: &PadicNumber) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for a in &self.coeffs {
            coeffs.push(a.mul(c)?);
        }
        Ok(KstElement {
            ctx: self.ctx.clone(),
            coeffs,
            e: self.e,
        }
        .trimmed())
    }

    pub fn scale_i64(&self, n: i64) -> Self {
        let c = PadicNumber::from_i64(&self.ctx, n);
        self.scale(&c).expect("same ctx")
    }

    /// The derivation N: K-linear, N(l_p) = e.
    pub fn derivation_n(&self) -> Self {
        let mut coeffs = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate().skip(1) {
            coeffs.push(c.scale_i64(i as i64 * self.e as i64));
        }
        KstElement {
            ctx: self.ctx.clone(),
            coeffs,
            e: self.e,
        }
        .trimmed()
    }

    /// Substitute l_p := t (ring homomorphism onto K).
    pub fn specialize(&self, t: &PadicNumber) -> Result<PadicNumber> {
        let mut acc = PadicNumber::zero(&self.ctx);
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(t)?.add(c)?;
        }
        Ok(acc)
    }

    /// Coefficientwise Frobenius (fixes the symbol l_p).
    pub fn frobenius(&self) -> Self {
        KstElement {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|c| c.frobenius()).collect(),
            e: self.e,
        }
    }

    /// Coefficientwise congruence modulo p^n.
    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        let len = self.coeffs.len().max(other.coeffs.len());
        (0..len).all(|i| self.coeff(i).eq_mod(&other.coeff(i), n))
    }
}

impl fmt::Display for KstElement {
    /// `a_0 + a_1*L + a_2*L^2` with L the branch symbol.
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(fm, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("{}", c),
                1 => format!("({})*L", c),
                _ => format!("({})*L^{}", c, i),
            })
            .collect();
        write!(fm, "{}", terms.join(" + "))
    }
}

/// Number of series terms needed so that every dropped term has
/// valuation above `target`: term i of sum w^i/i has v >= i*vw - log_p i.
pub(crate) fn series_terms(p: u64, vw: i64, target: i64) -> u64 {
    let mut i: u64 = 1;
    loop {
        let mut logp = 0i64;
        let mut q = i;
        while q >= p {
            q /= p;
            logp += 1;
        }
        if (i as i64) * vw - logp > target {
            return i;
        }
        i += 1;
    }
}

/// The series sum_{i>=1} (1-z)^i / i on a 1-unit z (the branch
/// homomorphism restricted to its convergence domain; the negative of
/// the customary logarithm).
pub fn log_one_unit(z: &PadicNumber) -> Result<PadicNumber> {
    let ctx = &z.ctx;
    let one = PadicNumber::one(ctx);
    let w = one.sub(z)?;
    let vw = match w.valuation() {
        None => return Ok(PadicNumber::zero(ctx)),
        Some(v) if v >= 1 => v,
        _ => {
            return Err(Error::precondition(
                "log series requires a 1-unit argument",
            ))
        }
    };
    let terms = series_terms(ctx.p, vw, ctx.precision as i64 + 1);
    let mut acc = PadicNumber::zero(ctx);
    let mut pow = w.clone();
    for i in 1..=terms {
        let inv_i = PadicNumber::from_i64(ctx, i as i64).invert()?;
        acc = acc.add(&pow.mul(&inv_i)?)?;
        pow = pow.mul(&w)?;
    }
    Ok(acc)
}

/// The universal branch Log: K^* -> K_st with Log p = l_p.
///
/// Decomposes x = p^v * omega * u with omega the Teichmueller lift and u
/// a 1-unit, and returns v*l_p + Log u. Roots of unity map to 0.
pub fn plog(x: &PadicNumber) -> Result<KstElement> {
    if x.is_zero() {
        return Err(Error::precondition("plog of zero (to working precision)"));
    }
    let ctx = &x.ctx;
    let v = x.valuation().unwrap();
    let unit = x.shift_p(-v);
    let omega = unit.teichmuller()?;
    let u = unit.div(&omega)?;
    let series = log_one_unit(&u)?;
    let lp_part = PadicNumber::from_i64(ctx, v);
    Ok(KstElement::from_coeffs(ctx, vec![series, lp_part]))
}
