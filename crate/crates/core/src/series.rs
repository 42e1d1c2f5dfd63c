//! Truncated rigid-analytic functions on a closed disk of radius
//! p^(-rho) and logarithmic 1-forms on it.
//!
//! A DiskFunction is a power series at x = 0 known modulo x^trunc; the
//! radius exponent rho is carried as exact rational bookkeeping and all
//! convergence checks are term-valuation bounds v(a_k) + k*v(x).

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::padic::{PadicContext, PadicNumber};
use crate::ratfun::RationalFunction;

#[derive(Clone)]
pub struct DiskFunction {
    pub ctx: Arc<PadicContext>,
    /// coefficient k of x^k for k < trunc
    coeffs: Vec<PadicNumber>,
    /// the series is known modulo x^trunc
    pub trunc: usize,
    /// disk radius p^(-rho), rho >= 0; rho = 0 is the closed unit disk
    pub rho: BigRational,
}

impl DiskFunction {
    pub fn zero(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        DiskFunction {
            ctx: ctx.clone(),
            coeffs: vec![PadicNumber::zero(ctx); trunc],
            trunc,
            rho,
        }
    }

    pub fn constant(c: PadicNumber, trunc: usize, rho: BigRational) -> Self {
        let ctx = c.ctx.clone();
        let mut f = Self::zero(&ctx, trunc, rho);
        f.coeffs[0] = c;
        f
    }

    pub fn one(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        Self::constant(PadicNumber::one(ctx), trunc, rho)
    }

    pub fn x(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        let mut f = Self::zero(ctx, trunc, rho);
        if trunc > 1 {
            f.coeffs[1] = PadicNumber::one(ctx);
        }
        f
    }

    pub fn from_coeffs(
        ctx: &Arc<PadicContext>,
        mut coeffs: Vec<PadicNumber>,
        trunc: usize,
        rho: BigRational,
    ) -> Self {
        coeffs.resize(trunc, PadicNumber::zero(ctx));
        DiskFunction {
            ctx: ctx.clone(),
            coeffs,
            trunc,
            rho,
        }
    }

    pub fn from_rational_coeffs(
        ctx: &Arc<PadicContext>,
        coeffs: &[BigRational],
        trunc: usize,
        rho: BigRational,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(trunc);
        for k in 0..trunc {
            let c = coeffs.get(k).cloned().unwrap_or_else(BigRational::zero);
            out.push(PadicNumber::from_rational(ctx, &c)?);
        }
        Ok(DiskFunction {
            ctx: ctx.clone(),
            coeffs: out,
            trunc,
            rho,
        })
    }

    pub fn coeff(&self, k: usize) -> PadicNumber {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| PadicNumber::zero(&self.ctx))
    }

    pub fn coeffs(&self) -> &[PadicNumber] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Index of the first nonzero coefficient.
    pub fn ord(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    fn merged_rho(&self, other: &Self) -> BigRational {
        // the smaller disk (larger exponent) is where both converge
        if self.rho >= other.rho {
            self.rho.clone()
        } else {
            other.rho.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let trunc = self.trunc.min(other.trunc);
        let mut coeffs = Vec::with_capacity(trunc);
        for k in 0..trunc {
            coeffs.push(self.coeff(k).add(&other.coeff(k))?);
        }
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            coeffs,
            trunc,
            rho: self.merged_rho(other),
        })
    }

    pub fn neg(&self) -> Self {
        DiskFunction {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
            trunc: self.trunc,
            rho: self.rho.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let trunc = self.trunc.min(other.trunc);
        let mut coeffs = vec![PadicNumber::zero(&self.ctx); trunc];
        for i in 0..trunc.min(self.coeffs.len()) {
            if self.coeffs[i].is_zero() {
                continue;
            }
            for j in 0..(trunc - i).min(other.coeffs.len()) {
                let t = self.coeffs[i].mul(&other.coeffs[j])?;
                coeffs[i + j] = coeffs[i + j].add(&t)?;
            }
        }
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            coeffs,
            trunc,
            rho: self.merged_rho(other),
        })
    }

    pub fn scale(&self, c: &PadicNumber) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(self.trunc);
        for a in &self.coeffs {
            coeffs.push(a.mul(c)?);
        }
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            coeffs,
            trunc: self.trunc,
            rho: self.rho.clone(),
        })
    }

    /// Multiplicative inverse; requires a unit constant term.
    pub fn invert(&self) -> Result<Self> {
        let c0 = self.coeff(0);
        if c0.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let inv0 = c0.invert()?;
        let mut coeffs = vec![PadicNumber::zero(&self.ctx); self.trunc];
        coeffs[0] = inv0.clone();
        for k in 1..self.trunc {
            let mut acc = PadicNumber::zero(&self.ctx);
            for j in 0..k {
                acc = acc.add(&coeffs[j].mul(&self.coeff(k - j))?)?;
            }
            coeffs[k] = acc.neg().mul(&inv0)?;
        }
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            coeffs,
            trunc: self.trunc,
            rho: self.rho.clone(),
        })
    }

    /// d/dx.
    pub fn derivative(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.trunc.saturating_sub(1));
        for k in 1..self.trunc {
            coeffs.push(self.coeffs[k].scale_i64(k as i64));
        }
        DiskFunction {
            ctx: self.ctx.clone(),
            trunc: coeffs.len(),
            coeffs,
            rho: self.rho.clone(),
        }
    }

    /// Antiderivative vanishing at 0.
    pub fn integral(&self) -> Result<Self> {
        let mut coeffs = vec![PadicNumber::zero(&self.ctx)];
        for k in 0..self.trunc {
            let d = PadicNumber::from_i64(&self.ctx, (k + 1) as i64).invert()?;
            coeffs.push(self.coeffs[k].mul(&d)?);
        }
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            trunc: coeffs.len(),
            coeffs,
            rho: self.rho.clone(),
        })
    }

    /// Multiply by x.
    pub fn mul_x(&self) -> Self {
        let mut coeffs = vec![PadicNumber::zero(&self.ctx)];
        coeffs.extend(self.coeffs.iter().cloned());
        coeffs.truncate(self.trunc);
        DiskFunction {
            ctx: self.ctx.clone(),
            coeffs,
            trunc: self.trunc,
            rho: self.rho.clone(),
        }
    }

    /// Divide by x; requires vanishing constant term.
    pub fn div_x(&self) -> Result<Self> {
        if !self.coeff(0).is_zero() {
            return Err(Error::precondition("div_x with nonzero constant term"));
        }
        let coeffs: Vec<PadicNumber> = self.coeffs.iter().skip(1).cloned().collect();
        Ok(DiskFunction {
            ctx: self.ctx.clone(),
            trunc: coeffs.len(),
            coeffs,
            rho: self.rho.clone(),
        })
    }

    /// Substitute x := g(x) for g with g(0) = 0. The effective
    /// truncation becomes min(g.trunc, self.trunc * ord(g)).
    pub fn compose(&self, g: &Self) -> Result<Self> {
        let ord_g = match g.ord() {
            None => {
                // g = 0 to working truncation: composite is the constant term
                return Ok(Self::constant(
                    self.coeff(0),
                    g.trunc,
                    self.merged_rho(g),
                ));
            }
            Some(0) => {
                return Err(Error::precondition(
                    "series composition requires g(0) = 0",
                ))
            }
            Some(v) => v,
        };
        let trunc = g.trunc.min(self.trunc.saturating_mul(ord_g));
        let mut acc = DiskFunction::zero(&self.ctx, trunc, self.merged_rho(g));
        // Horner in g
        for k in (0..self.trunc).rev() {
            acc = acc.mul(g)?;
            acc.coeffs[0] = acc.coeffs[0].add(&self.coeff(k))?;
        }
        Ok(acc)
    }

    /// Value at a point inside the disk. Errors with OutsideRadius when
    /// |pt| exceeds the certified radius, and with PrecisionExhausted
    /// when the dropped tail cannot be certified below the context
    /// precision.
    pub fn evaluate(&self, pt: &PadicNumber) -> Result<PadicNumber> {
        if pt.is_zero() {
            return Ok(self.coeff(0));
        }
        let v = pt.valuation().unwrap();
        if BigRational::from_integer(v.into()) < self.rho {
            return Err(Error::OutsideRadius);
        }
        let mut acc = PadicNumber::zero(&self.ctx);
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(pt)?.add(c)?;
        }
        // certify the dropped tail: the last stretch of computed terms
        // must already sit above the working precision (or vanish)
        if v > 0 || self.rho.is_positive() {
            let target = self.ctx.precision as i64;
            let lookback = 3.min(self.trunc);
            let ok = (self.trunc - lookback..self.trunc).all(|k| {
                let c = self.coeff(k);
                match c.valuation() {
                    None => true,
                    Some(cv) => cv + (k as i64) * v >= target,
                }
            });
            if !ok {
                return Err(Error::PrecisionExhausted(
                    "series truncation too short for this evaluation point".into(),
                ));
            }
        } else {
            // on the boundary of the unit disk only terminating series
            // can be certified
            let tail_nonzero = self
                .coeffs
                .iter()
                .rev()
                .take(3.min(self.trunc))
                .any(|c| !c.is_zero());
            if tail_nonzero {
                return Err(Error::PrecisionExhausted(
                    "non-terminating series evaluated on the disk boundary".into(),
                ));
            }
        }
        Ok(acc)
    }

    /// Coefficientwise Frobenius sigma.
    pub fn frobenius(&self) -> Self {
        DiskFunction {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|c| c.frobenius()).collect(),
            trunc: self.trunc,
            rho: self.rho.clone(),
        }
    }

    pub fn truncate(&self, trunc: usize) -> Self {
        let trunc = trunc.min(self.trunc);
        DiskFunction {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs[..trunc].to_vec(),
            trunc,
            rho: self.rho.clone(),
        }
    }

    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        let trunc = self.trunc.min(other.trunc);
        (0..trunc).all(|k| self.coeff(k).eq_mod(&other.coeff(k), n))
    }
}

impl fmt::Debug for DiskFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .take(6)
            .map(|(k, c)| format!("({})x^{}", c, k))
            .collect();
        write!(fm, "[{} + O(x^{})]", terms.join(" + "), self.trunc)
    }
}

/// A logarithmic 1-form c * dlog x + g(x) dx, normalized so the polar
/// coefficient is the bare residue constant: any x * dlog x content is
/// folded into the regular part.
#[derive(Clone, Debug)]
pub struct LogOneForm {
    pub residue: PadicNumber,
    pub regular: DiskFunction,
}

impl LogOneForm {
    pub fn zero(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        LogOneForm {
            residue: PadicNumber::zero(ctx),
            regular: DiskFunction::zero(ctx, trunc, rho),
        }
    }

    /// Build from a full polar series g(x) * dlog x + regular, folding
    /// the non-constant part of g into the regular part.
    pub fn from_parts(polar: DiskFunction, regular: DiskFunction) -> Result<Self> {
        let residue = polar.coeff(0);
        let mut rest = polar;
        rest.coeffs[0] = PadicNumber::zero(&rest.ctx);
        let folded = rest.div_x()?;
        Ok(LogOneForm {
            residue,
            regular: regular.add(&folded)?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(LogOneForm {
            residue: self.residue.add(&other.residue)?,
            regular: self.regular.add(&other.regular)?,
        })
    }

    pub fn neg(&self) -> Self {
        LogOneForm {
            residue: self.residue.neg(),
            regular: self.regular.neg(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &PadicNumber) -> Result<Self> {
        Ok(LogOneForm {
            residue: self.residue.mul(c)?,
            regular: self.regular.scale(c)?,
        })
    }

    /// Multiply the form by a disk function (module structure).
    pub fn mul_fn(&self, f: &DiskFunction) -> Result<Self> {
        // f * (r dlog x + g dx) = (f r) dlog x + (f g) dx, then refold
        let polar = f.scale(&self.residue)?;
        let regular = f.mul(&self.regular)?;
        Self::from_parts(polar, regular)
    }

    pub fn is_zero(&self) -> bool {
        self.residue.is_zero() && self.regular.is_zero()
    }

    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        self.residue.eq_mod(&other.residue, n) && self.regular.eq_mod(&other.regular, n)
    }
}

/// df/f expanded at the point c, split into a constant residue times
/// dlog x and a regular dx part. The residue equals ord_c(f).
pub fn dlog_at(
    f: &RationalFunction,
    c: &BigRational,
    ctx: &Arc<PadicContext>,
    trunc: usize,
    rho: BigRational,
) -> Result<LogOneForm> {
    if f.is_zero() {
        return Err(Error::precondition("dlog of the zero function"));
    }
    let shifted = f.shift(c);
    let m = shifted.ord_at(&BigRational::zero());
    // strip the x^m factor so the remaining part is a unit at 0
    let num_ord = shifted.num.ord_at_zero().unwrap();
    let den_ord = shifted.den.ord_at_zero().unwrap_or(0);
    debug_assert_eq!(m, num_ord as i64 - den_ord as i64);
    let num = crate::ratfun::Poly::from_coeffs(shifted.num.0[num_ord..].to_vec());
    let den = crate::ratfun::Poly::from_coeffs(shifted.den.0[den_ord..].to_vec());
    let unit = RationalFunction::new(num, den)?;
    let series = unit.log_derivative()?.series_at_zero(trunc)?;
    let regular = DiskFunction::from_rational_coeffs(ctx, &series, trunc, rho.clone())?;
    Ok(LogOneForm {
        residue: PadicNumber::from_i64(ctx, m),
        regular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratfun::Poly;
    use num_bigint::BigInt;

    fn ctx() -> Arc<PadicContext> {
        PadicContext::new(5, 8).unwrap()
    }

    fn qz(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn rho0() -> BigRational {
        BigRational::zero()
    }

    #[test]
    fn mul_matches_convolution() {
        let c = ctx();
        let x = DiskFunction::x(&c, 6, rho0());
        let one = DiskFunction::one(&c, 6, rho0());
        let f = one.add(&x).unwrap(); // 1 + x
        let sq = f.mul(&f).unwrap(); // 1 + 2x + x^2
        assert!(sq.coeff(0).eq_mod(&PadicNumber::one(&c), 8));
        assert!(sq.coeff(1).eq_mod(&PadicNumber::from_i64(&c, 2), 8));
        assert!(sq.coeff(2).eq_mod(&PadicNumber::one(&c), 8));
    }

    #[test]
    fn invert_geometric() {
        let c = ctx();
        let one = DiskFunction::one(&c, 6, rho0());
        let f = one.sub(&DiskFunction::x(&c, 6, rho0())).unwrap(); // 1 - x
        let inv = f.invert().unwrap();
        for k in 0..6 {
            assert!(inv.coeff(k).eq_mod(&PadicNumber::one(&c), 8));
        }
    }

    #[test]
    fn derivative_integral_inverse() {
        let c = ctx();
        let f = DiskFunction::from_coeffs(
            &c,
            vec![
                PadicNumber::from_i64(&c, 3),
                PadicNumber::from_i64(&c, 1),
                PadicNumber::from_i64(&c, 4),
            ],
            6,
            rho0(),
        );
        let g = f.derivative().integral().unwrap();
        // integral . derivative kills the constant term
        assert!(g.coeff(0).is_zero());
        assert!(g.coeff(1).eq_mod(&f.coeff(1), 8));
        assert!(g.coeff(2).eq_mod(&f.coeff(2), 8));
    }

    #[test]
    fn compose_with_xp_tracks_truncation() {
        let c = ctx();
        let f = DiskFunction::from_coeffs(
            &c,
            vec![
                PadicNumber::from_i64(&c, 1),
                PadicNumber::from_i64(&c, 1),
            ],
            4,
            rho0(),
        ); // 1 + x
        let mut g = DiskFunction::zero(&c, 20, rho0());
        g = g
            .add(&{
                let mut xp = DiskFunction::zero(&c, 20, rho0());
                xp.coeffs[5] = PadicNumber::one(&c);
                xp
            })
            .unwrap();
        let comp = f.compose(&g).unwrap();
        assert_eq!(comp.trunc, 20);
        assert!(comp.coeff(0).eq_mod(&PadicNumber::one(&c), 8));
        assert!(comp.coeff(5).eq_mod(&PadicNumber::one(&c), 8));
    }

    #[test]
    fn evaluate_polynomial_on_unit_disk() {
        let c = ctx();
        let f = DiskFunction::from_coeffs(
            &c,
            vec![
                PadicNumber::from_i64(&c, 2),
                PadicNumber::from_i64(&c, 3),
            ],
            6,
            rho0(),
        );
        let v = f.evaluate(&PadicNumber::from_i64(&c, 7)).unwrap();
        assert!(v.eq_mod(&PadicNumber::from_i64(&c, 23), 8));
    }

    #[test]
    fn evaluate_outside_radius_rejected() {
        let c = ctx();
        let f = DiskFunction::one(&c, 4, BigRational::from_integer(BigInt::from(1)));
        // |1| = 1 > 5^{-1}
        assert!(matches!(
            f.evaluate(&PadicNumber::one(&c)),
            Err(Error::OutsideRadius)
        ));
    }

    #[test]
    fn evaluate_nonterminating_on_boundary_rejected() {
        let c = ctx();
        let one = DiskFunction::one(&c, 8, rho0());
        let geo = one.sub(&DiskFunction::x(&c, 8, rho0())).unwrap().invert().unwrap();
        assert!(matches!(
            geo.evaluate(&PadicNumber::from_i64(&c, 2)),
            Err(Error::PrecisionExhausted(_))
        ));
    }

    #[test]
    fn dlog_of_z_at_zero() {
        let c = ctx();
        let f = RationalFunction::var();
        let w = dlog_at(&f, &qz(0), &c, 6, rho0()).unwrap();
        assert!(w.residue.eq_mod(&PadicNumber::one(&c), 8));
        assert!(w.regular.is_zero());
    }

    #[test]
    fn dlog_of_one_minus_z_at_zero() {
        let c = ctx();
        let f = RationalFunction::from_poly(Poly::from_coeffs(vec![qz(1), qz(-1)]));
        let w = dlog_at(&f, &qz(0), &c, 6, rho0()).unwrap();
        assert!(w.residue.is_zero());
        // -1/(1-z) = -(1 + z + z^2 + ...)
        for k in 0..6 {
            assert!(
                w.regular.coeff(k).eq_mod(&PadicNumber::from_i64(&c, -1), 8),
                "coefficient {k}"
            );
        }
    }

    #[test]
    fn dlog_is_additive() {
        // dlog(z^2 (1-z)) = 2 dlog z + dlog(1-z)
        let c = ctx();
        let z2 = RationalFunction::from_poly(Poly::x().pow(2));
        let omz = RationalFunction::from_poly(Poly::from_coeffs(vec![qz(1), qz(-1)]));
        let prod = z2.mul(&omz);
        let lhs = dlog_at(&prod, &qz(0), &c, 6, rho0()).unwrap();
        let rhs = dlog_at(&z2, &qz(0), &c, 6, rho0())
            .unwrap()
            .add(&dlog_at(&omz, &qz(0), &c, 6, rho0()).unwrap())
            .unwrap();
        assert!(lhs.eq_mod(&rhs, 8));
        assert!(lhs.residue.eq_mod(&PadicNumber::from_i64(&c, 2), 8));
    }

    #[test]
    fn polar_folding() {
        let c = ctx();
        // (1 + x) dlog x = dlog x + 1 dx
        let polar = DiskFunction::from_coeffs(
            &c,
            vec![PadicNumber::one(&c), PadicNumber::one(&c)],
            6,
            rho0(),
        );
        let w = LogOneForm::from_parts(polar, DiskFunction::zero(&c, 6, rho0())).unwrap();
        assert!(w.residue.eq_mod(&PadicNumber::one(&c), 8));
        assert!(w.regular.coeff(0).eq_mod(&PadicNumber::one(&c), 8));
        assert!(w.regular.coeff(1).is_zero());
    }
}
