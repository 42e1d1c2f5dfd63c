//! The log extension A_Log = A[l(x), l_p] of the disk algebra: disk
//! functions adjoined the formal logarithm l(x) of the coordinate and
//! the branch symbol l_p, with the canonical log connection d and the
//! monodromy derivation N.
//!
//! d(l(x)) = dlog x, d(l_p) = 0; N(l(x)) = 1, N kills A[l_p].

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::logring::{plog, KstElement};
use crate::padic::{PadicContext, PadicNumber};
use crate::series::{DiskFunction, LogOneForm};

/// Finite sum of f_{a,b}(x) * l(x)^a * l_p^b.
#[derive(Clone, Debug)]
pub struct LogExtElement {
    pub ctx: Arc<PadicContext>,
    terms: BTreeMap<(u32, u32), DiskFunction>,
}

/// A 1-form with the same monomial bookkeeping; the value of d.
#[derive(Clone, Debug)]
pub struct LogExtForm {
    pub ctx: Arc<PadicContext>,
    terms: BTreeMap<(u32, u32), LogOneForm>,
}

impl LogExtElement {
    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        LogExtElement {
            ctx: ctx.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn from_disk(f: DiskFunction) -> Self {
        let ctx = f.ctx.clone();
        let mut terms = BTreeMap::new();
        if !f.is_zero() {
            terms.insert((0, 0), f);
        }
        LogExtElement { ctx, terms }
    }

    /// The symbol l(x).
    pub fn lx(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert((1, 0), DiskFunction::one(ctx, trunc, rho));
        LogExtElement {
            ctx: ctx.clone(),
            terms,
        }
    }

    /// The symbol l_p.
    pub fn lp(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert((0, 1), DiskFunction::one(ctx, trunc, rho));
        LogExtElement {
            ctx: ctx.clone(),
            terms,
        }
    }

    pub fn term(&self, a: u32, b: u32) -> Option<&DiskFunction> {
        self.terms.get(&(a, b))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &DiskFunction)> {
        self.terms.iter()
    }

    pub fn insert_term(&mut self, a: u32, b: u32, f: DiskFunction) {
        if !f.is_zero() {
            self.terms.insert((a, b), f);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|f| f.is_zero())
    }

    /// Maximal exponent of l(x).
    pub fn lx_degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, f)| !f.is_zero())
            .map(|((a, _), _)| *a)
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut terms = self.terms.clone();
        for (k, f) in &other.terms {
            match terms.get(k) {
                Some(g) => {
                    let s = g.add(f)?;
                    if s.is_zero() {
                        terms.remove(k);
                    } else {
                        terms.insert(*k, s);
                    }
                }
                None => {
                    terms.insert(*k, f.clone());
                }
            }
        }
        Ok(LogExtElement {
            ctx: self.ctx.clone(),
            terms,
        })
    }

    pub fn neg(&self) -> Self {
        LogExtElement {
            ctx: self.ctx.clone(),
            terms: self.terms.iter().map(|(k, f)| (*k, f.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zero(&self.ctx);
        for ((a1, b1), f1) in &self.terms {
            for ((a2, b2), f2) in &other.terms {
                let prod = f1.mul(f2)?;
                let key = (a1 + a2, b1 + b2);
                let cur = out.terms.remove(&key);
                let sum = match cur {
                    Some(g) => g.add(&prod)?,
                    None => prod,
                };
                if !sum.is_zero() {
                    out.terms.insert(key, sum);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &PadicNumber) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for (k, f) in &self.terms {
            terms.insert(*k, f.scale(c)?);
        }
        Ok(LogExtElement {
            ctx: self.ctx.clone(),
            terms,
        })
    }

    /// The canonical log connection d.
    pub fn d(&self) -> Result<LogExtForm> {
        let mut out = LogExtForm {
            ctx: self.ctx.clone(),
            terms: BTreeMap::new(),
        };
        for ((a, b), f) in &self.terms {
            // f' dx at (a, b)
            let df = f.derivative();
            if !df.is_zero() {
                let w = LogOneForm {
                    residue: PadicNumber::zero(&self.ctx),
                    regular: df,
                };
                out.accumulate((*a, *b), w)?;
            }
            // a * f dlog x at (a - 1, b)
            if *a > 0 {
                let af = f.scale(&PadicNumber::from_i64(&self.ctx, *a as i64))?;
                let w = LogOneForm::from_parts(
                    af,
                    DiskFunction::zero(&self.ctx, f.trunc, f.rho.clone()),
                )?;
                out.accumulate((*a - 1, *b), w)?;
            }
        }
        Ok(out)
    }

    /// The monodromy derivation N (kills disk functions and l_p).
    pub fn n_derivation(&self) -> Result<Self> {
        let mut out = Self::zero(&self.ctx);
        for ((a, b), f) in &self.terms {
            if *a == 0 {
                continue;
            }
            let af = f.scale(&PadicNumber::from_i64(&self.ctx, *a as i64))?;
            let key = (*a - 1, *b);
            let cur = out.terms.remove(&key);
            let sum = match cur {
                Some(g) => g.add(&af)?,
                None => af,
            };
            out.terms.insert(key, sum);
        }
        Ok(out)
    }

    /// Coefficientwise Frobenius sigma (fixes l(x) and l_p).
    pub fn frobenius(&self) -> Self {
        LogExtElement {
            ctx: self.ctx.clone(),
            terms: self
                .terms
                .iter()
                .map(|(k, f)| (*k, f.frobenius()))
                .collect(),
        }
    }

    /// Evaluation at a nonzero point of the punctured disk: disk parts
    /// by convergent substitution, l(x) -> Log(pt), l_p -> l_p.
    pub fn evaluate(&self, pt: &PadicNumber) -> Result<KstElement> {
        if pt.is_zero() {
            return Err(Error::precondition(
                "evaluation at the puncture x = 0",
            ));
        }
        let lpt = plog(pt)?;
        let lp = KstElement::lp(&self.ctx);
        let mut acc = KstElement::zero(&self.ctx);
        for ((a, b), f) in &self.terms {
            let v = f.evaluate(pt)?;
            let mut term = KstElement::constant(v);
            for _ in 0..*a {
                term = term.mul(&lpt)?;
            }
            for _ in 0..*b {
                term = term.mul(&lp)?;
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        let keys: std::collections::BTreeSet<(u32, u32)> = self
            .terms
            .keys()
            .chain(other.terms.keys())
            .cloned()
            .collect();
        let trunc = self
            .terms
            .values()
            .chain(other.terms.values())
            .map(|f| f.trunc)
            .min()
            .unwrap_or(0);
        keys.iter().all(|k| {
            let zero = || {
                DiskFunction::zero(&self.ctx, trunc.max(1), BigRational::from_integer(0.into()))
            };
            let a = self.terms.get(k).cloned().unwrap_or_else(zero);
            let b = other.terms.get(k).cloned().unwrap_or_else(zero);
            a.eq_mod(&b, n)
        })
    }
}

impl LogExtForm {
    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        LogExtForm {
            ctx: ctx.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn term(&self, a: u32, b: u32) -> Option<&LogOneForm> {
        self.terms.get(&(a, b))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &LogOneForm)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, a: u32, b: u32, w: LogOneForm) -> Result<()> {
        self.accumulate((a, b), w)
    }

    fn accumulate(&mut self, key: (u32, u32), w: LogOneForm) -> Result<()> {
        let cur = self.terms.remove(&key);
        let sum = match cur {
            Some(v) => v.add(&w)?,
            None => w,
        };
        if !sum.is_zero() {
            self.terms.insert(key, sum);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (k, w) in &other.terms {
            out.accumulate(*k, w.clone())?;
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|w| w.is_zero())
    }

    /// N acting on the form (same index shift as on elements; the
    /// 1-form coefficients are killed).
    pub fn n_derivation(&self) -> Result<Self> {
        let mut out = Self::zero(&self.ctx);
        for ((a, b), w) in &self.terms {
            if *a == 0 {
                continue;
            }
            let scaled = w.scale(&PadicNumber::from_i64(&self.ctx, *a as i64))?;
            out.accumulate((*a - 1, *b), scaled)?;
        }
        Ok(out)
    }

    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        let keys: std::collections::BTreeSet<(u32, u32)> = self
            .terms
            .keys()
            .chain(other.terms.keys())
            .cloned()
            .collect();
        keys.iter().all(|k| match (self.terms.get(k), other.terms.get(k)) {
            (Some(a), Some(b)) => a.eq_mod(b, n),
            (Some(a), None) | (None, Some(a)) => {
                a.residue.eq_mod(&PadicNumber::zero(&self.ctx), n)
                    && a.regular.is_zero()
            }
            (None, None) => true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::Zero as _;

    fn ctx() -> Arc<PadicContext> {
        PadicContext::new(5, 8).unwrap()
    }

    fn rho0() -> BigRational {
        BigRational::zero()
    }

    fn rho1() -> BigRational {
        BigRational::from_integer(BigInt::from(1))
    }

    #[test]
    fn d_of_lx_is_dlog_x() {
        let c = ctx();
        let lx = LogExtElement::lx(&c, 6, rho0());
        let d = lx.d().unwrap();
        let w = d.term(0, 0).unwrap();
        assert!(w.residue.eq_mod(&PadicNumber::one(&c), 8));
        assert!(w.regular.is_zero());
        assert!(d.term(1, 0).is_none());
    }

    #[test]
    fn d_of_constant_is_zero() {
        let c = ctx();
        let e = LogExtElement::from_disk(DiskFunction::constant(
            PadicNumber::from_i64(&c, 9),
            6,
            rho0(),
        ));
        assert!(e.d().unwrap().is_zero());
    }

    #[test]
    fn d_leibniz_on_x_times_lx() {
        // d(x l(x)) = l(x) dx + dx
        let c = ctx();
        let x = LogExtElement::from_disk(DiskFunction::x(&c, 6, rho0()));
        let lx = LogExtElement::lx(&c, 6, rho0());
        let d = x.mul(&lx).unwrap().d().unwrap();
        // l(x) dx part
        let w1 = d.term(1, 0).unwrap();
        assert!(w1.residue.is_zero());
        assert!(w1.regular.coeff(0).eq_mod(&PadicNumber::one(&c), 8));
        // x dlog x = dx folds into the regular part at (0,0)
        let w0 = d.term(0, 0).unwrap();
        assert!(w0.residue.is_zero());
        assert!(w0.regular.coeff(0).eq_mod(&PadicNumber::one(&c), 8));
    }

    #[test]
    fn n_of_lx_is_one() {
        let c = ctx();
        let lx = LogExtElement::lx(&c, 6, rho0());
        let n = lx.n_derivation().unwrap();
        let one = LogExtElement::from_disk(DiskFunction::one(&c, 6, rho0()));
        assert!(n.eq_mod(&one, 8));
    }

    #[test]
    fn n_of_lp_is_zero() {
        let c = ctx();
        let lp = LogExtElement::lp(&c, 6, rho0());
        assert!(lp.n_derivation().unwrap().is_zero());
    }

    #[test]
    fn n_of_lx_squared() {
        let c = ctx();
        let lx = LogExtElement::lx(&c, 6, rho0());
        let sq = lx.mul(&lx).unwrap();
        let n = sq.n_derivation().unwrap();
        let two_lx = lx.scale(&PadicNumber::from_i64(&c, 2)).unwrap();
        assert!(n.eq_mod(&two_lx, 8));
    }

    #[test]
    fn n_commutes_with_d() {
        let c = ctx();
        // v = (1 + x) l(x)^2 + x l_p
        let one_plus_x = DiskFunction::one(&c, 6, rho0())
            .add(&DiskFunction::x(&c, 6, rho0()))
            .unwrap();
        let lx = LogExtElement::lx(&c, 6, rho0());
        let mut v = lx
            .mul(&lx)
            .unwrap()
            .mul(&LogExtElement::from_disk(one_plus_x))
            .unwrap();
        v = v
            .add(
                &LogExtElement::lp(&c, 6, rho0())
                    .mul(&LogExtElement::from_disk(DiskFunction::x(&c, 6, rho0())))
                    .unwrap(),
            )
            .unwrap();
        let lhs = v.d().unwrap().n_derivation().unwrap();
        let rhs = v.n_derivation().unwrap().d().unwrap();
        assert!(lhs.eq_mod(&rhs, 8));
    }

    #[test]
    fn evaluate_lx_at_p() {
        let c = ctx();
        let lx = LogExtElement::lx(&c, 12, rho1());
        let v = lx.evaluate(&PadicNumber::from_i64(&c, 5)).unwrap();
        assert!(v.eq_mod(&KstElement::lp(&c), 8));
    }

    #[test]
    fn evaluate_x_minus_lx_at_one() {
        let c = ctx();
        let x = LogExtElement::from_disk(DiskFunction::x(&c, 6, rho0()));
        let lx = LogExtElement::lx(&c, 6, rho0());
        let v = x.sub(&lx).unwrap().evaluate(&PadicNumber::one(&c)).unwrap();
        let one = KstElement::constant(PadicNumber::one(&c));
        assert!(v.eq_mod(&one, 8));
    }

    #[test]
    fn evaluate_at_puncture_rejected() {
        let c = ctx();
        let lx = LogExtElement::lx(&c, 6, rho0());
        assert!(lx.evaluate(&PadicNumber::zero(&c)).is_err());
    }

    #[test]
    fn mul_is_commutative() {
        let c = ctx();
        let a = LogExtElement::lx(&c, 6, rho0())
            .add(&LogExtElement::from_disk(DiskFunction::x(&c, 6, rho0())))
            .unwrap();
        let b = LogExtElement::lp(&c, 6, rho0())
            .add(&LogExtElement::from_disk(DiskFunction::one(&c, 6, rho0())))
            .unwrap();
        assert!(a.mul(&b).unwrap().eq_mod(&b.mul(&a).unwrap(), 8));
    }
}
