//! Capped-precision arithmetic in Q_p and its unramified extensions
//! K_0 = W(F_{p^f})[1/p], with valuation, Teichmueller lifts and the
//! Frobenius automorphism sigma (the unique lift of x -> x^p fixing Q_p).
//!
//! Elements are stored as p^shift * u(t) where u is a coordinate vector
//! over Z/p^rel in the power basis of the defining modulus, normalized so
//! that u is a unit unless the element vanishes to working precision.
//! Relative precision is capped by the context and propagated
//! pessimistically (min of the operands).

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Ambient data for a p-adic computation: the prime, the relative
/// precision cap, and the modulus cutting out the unramified extension
/// of residue degree f.
#[derive(Debug)]
pub struct PadicContext {
    pub p: u64,
    pub precision: u32,
    pub f: u32,
    /// Monic degree-f polynomial over Z, irreducible mod p. Coefficient i
    /// is the coefficient of t^i; the leading 1 is stored explicitly.
    pub modulus: Vec<BigInt>,
    sigma_t: OnceLock<Vec<Vec<BigInt>>>,
}

impl PartialEq for PadicContext {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.precision == other.precision
            && self.f == other.f
            && self.modulus == other.modulus
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl PadicContext {
    /// Context for Q_p itself (f = 1).
    pub fn new(p: u64, precision: u32) -> Result<Arc<Self>> {
        Self::unramified(p, precision, 1)
    }

    /// Context for the unramified extension of residue degree f, with the
    /// lexicographically smallest irreducible modulus. Any irreducible
    /// lift is acceptable; no Conway normalization is enforced.
    pub fn unramified(p: u64, precision: u32, f: u32) -> Result<Arc<Self>> {
        if p < 3 || !is_prime(p) {
            return Err(Error::precondition(format!("p = {p} must be a prime >= 3")));
        }
        if precision == 0 || f == 0 {
            return Err(Error::precondition("precision and f must be positive"));
        }
        let modulus = if f == 1 {
            vec![BigInt::zero(), BigInt::one()]
        } else {
            find_irreducible(p, f)
        };
        Ok(Arc::new(PadicContext {
            p,
            precision,
            f,
            modulus,
            sigma_t: OnceLock::new(),
        }))
    }

    /// Context with a caller-supplied monic modulus (checked for
    /// irreducibility mod p).
    pub fn with_modulus(p: u64, precision: u32, modulus: Vec<BigInt>) -> Result<Arc<Self>> {
        if p < 3 || !is_prime(p) {
            return Err(Error::precondition(format!("p = {p} must be a prime >= 3")));
        }
        let f = (modulus.len() - 1) as u32;
        if modulus.last().map(|c| !c.is_one()).unwrap_or(true) {
            return Err(Error::precondition("modulus must be monic"));
        }
        if f > 1 && !poly_irreducible_mod_p(p, &modulus) {
            return Err(Error::precondition("modulus is reducible mod p"));
        }
        Ok(Arc::new(PadicContext {
            p,
            precision,
            f,
            modulus,
            sigma_t: OnceLock::new(),
        }))
    }

    /// Same prime and modulus, higher precision cap. Used internally to
    /// carry guard digits through long series computations.
    pub fn with_guard(self: &Arc<Self>, extra: u32) -> Arc<Self> {
        Arc::new(PadicContext {
            p: self.p,
            precision: self.precision + extra,
            f: self.f,
            modulus: self.modulus.clone(),
            sigma_t: OnceLock::new(),
        })
    }

    pub fn p_big(&self) -> BigInt {
        BigInt::from(self.p)
    }

    pub fn p_pow(&self, n: u32) -> BigInt {
        self.p_big().pow(n)
    }

    /// Image of the generator t under the lift of Frobenius, as powers
    /// sigma(t)^0 .. sigma(t)^{f-1} reduced mod (modulus, p^precision).
    fn sigma_powers(&self) -> &Vec<Vec<BigInt>> {
        self.sigma_t.get_or_init(|| {
            let f = self.f as usize;
            if f == 1 {
                return vec![vec![BigInt::zero()]];
            }
            let pk = self.p_pow(self.precision);
            let sigma = frobenius_generator_image(self, &pk);
            // precompute sigma(t)^i
            let mut pows = Vec::with_capacity(f);
            let mut cur = vec![BigInt::zero(); f];
            cur[0] = BigInt::one();
            pows.push(cur.clone());
            for _ in 1..f {
                cur = poly_mul_mod(self, &cur, &sigma, &pk);
                pows.push(cur.clone());
            }
            pows
        })
    }
}

fn find_irreducible(p: u64, f: u32) -> Vec<BigInt> {
    // smallest monic irreducible of degree f over F_p, by lex order of
    // the low coefficients
    let f = f as usize;
    let mut coeffs = vec![0u64; f];
    loop {
        let mut m: Vec<BigInt> = coeffs.iter().map(|&c| BigInt::from(c)).collect();
        m.push(BigInt::one());
        if poly_irreducible_mod_p(p, &m) {
            return m;
        }
        // increment base-p counter
        let mut i = 0;
        loop {
            coeffs[i] += 1;
            if coeffs[i] < p {
                break;
            }
            coeffs[i] = 0;
            i += 1;
            assert!(i < f, "no irreducible polynomial found (impossible)");
        }
    }
}

// ---- polynomial arithmetic over Z/p^k modulo the context modulus ----

fn poly_reduce_mod(ctx: &PadicContext, poly: &mut Vec<BigInt>, pk: &BigInt) {
    let f = ctx.f as usize;
    while poly.len() > f {
        let d = poly.len() - 1;
        let lead = poly.pop().unwrap();
        if lead.is_zero() {
            continue;
        }
        for i in 0..f {
            let c = &ctx.modulus[i] * &lead;
            poly[d - f + i] -= c;
        }
    }
    poly.resize(f, BigInt::zero());
    for c in poly.iter_mut() {
        *c = c.mod_floor(pk);
    }
}

fn poly_mul_mod(ctx: &PadicContext, a: &[BigInt], b: &[BigInt], pk: &BigInt) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); a.len() + b.len()];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    poly_reduce_mod(ctx, &mut out, pk);
    out
}

fn poly_pow_mod(ctx: &PadicContext, a: &[BigInt], mut e: BigInt, pk: &BigInt) -> Vec<BigInt> {
    let f = ctx.f as usize;
    let mut result = vec![BigInt::zero(); f];
    result[0] = BigInt::one();
    let mut base = a.to_vec();
    poly_reduce_mod(ctx, &mut base, pk);
    let two = BigInt::from(2);
    while e.is_positive() {
        if e.is_odd() {
            result = poly_mul_mod(ctx, &result, &base, pk);
        }
        base = poly_mul_mod(ctx, &base, &base, pk);
        e /= &two;
    }
    result
}

/// Irreducibility over F_p via the standard x^(p^d) criterion.
fn poly_irreducible_mod_p(p: u64, modulus: &[BigInt]) -> bool {
    let f = modulus.len() - 1;
    if f == 1 {
        return true;
    }
    let ctx = PadicContext {
        p,
        precision: 1,
        f: f as u32,
        modulus: modulus.to_vec(),
        sigma_t: OnceLock::new(),
    };
    let pb = BigInt::from(p);
    let mut t = vec![BigInt::zero(); f];
    if f > 1 {
        t[1] = BigInt::one();
    }
    // x^(p^f) == x, and gcd-degree checks via x^(p^(f/q)) != x
    let xpf = poly_pow_mod(&ctx, &t, pb.pow(f as u32), &pb);
    if xpf != t {
        return false;
    }
    let mut q = 2usize;
    let mut rem = f;
    let mut primes = Vec::new();
    while q * q <= rem {
        if rem % q == 0 {
            primes.push(q);
            while rem % q == 0 {
                rem /= q;
            }
        }
        q += 1;
    }
    if rem > 1 {
        primes.push(rem);
    }
    for q in primes {
        let e = pb.pow((f / q) as u32);
        let xpe = poly_pow_mod(&ctx, &t, e, &pb);
        // x^(p^(f/q)) - x must be coprime to modulus; since modulus would
        // otherwise have a factor of degree dividing f/q, equality with x
        // on the quotient ring detects reducibility only partially -- use
        // a gcd over F_p for the general check.
        let mut diff: Vec<BigInt> = xpe
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b).mod_floor(&pb))
            .collect();
        while diff.last().map(|c| c.is_zero()).unwrap_or(false) {
            diff.pop();
        }
        if diff.is_empty() {
            return false;
        }
        if poly_gcd_deg_mod_p(p, modulus, &diff) > 0 {
            return false;
        }
    }
    true
}

fn poly_gcd_deg_mod_p(p: u64, a: &[BigInt], b: &[BigInt]) -> usize {
    let pb = BigInt::from(p);
    let norm = |v: &mut Vec<BigInt>| {
        for c in v.iter_mut() {
            *c = c.mod_floor(&pb);
        }
        while v.last().map(|c| c.is_zero()).unwrap_or(false) {
            v.pop();
        }
    };
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    norm(&mut a);
    norm(&mut b);
    while !b.is_empty() {
        // a mod b
        let lead_inv = int_modinv(b.last().unwrap(), &pb).expect("field");
        while a.len() >= b.len() && !a.is_empty() {
            let shift = a.len() - b.len();
            let q = (a.last().unwrap() * &lead_inv).mod_floor(&pb);
            if q.is_zero() {
                a.pop();
                continue;
            }
            for i in 0..b.len() {
                a[shift + i] = (&a[shift + i] - &q * &b[i]).mod_floor(&pb);
            }
            while a.last().map(|c| c.is_zero()).unwrap_or(false) {
                a.pop();
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    if a.is_empty() {
        0
    } else {
        a.len() - 1
    }
}

/// Extended-Euclid inverse of a modulo m (m > 0), if gcd(a, m) = 1.
pub fn int_modinv(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let mut r0 = a.mod_floor(m);
    let mut r1 = m.clone();
    let mut s0 = BigInt::one();
    let mut s1 = BigInt::zero();
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let s2 = &s0 - &q * &s1;
        r0 = r1;
        r1 = r2;
        s0 = s1;
        s1 = s2;
    }
    if r0.is_one() {
        Some(s0.mod_floor(m))
    } else {
        None
    }
}

/// Newton-lift the root of the modulus congruent to t^p mod p.
fn frobenius_generator_image(ctx: &PadicContext, _pk: &BigInt) -> Vec<BigInt> {
    let f = ctx.f as usize;
    let pb = ctx.p_big();
    let mut t = vec![BigInt::zero(); f];
    t[1] = BigInt::one();
    let mut y = poly_pow_mod(ctx, &t, pb.clone(), &pb);
    let mut known: u32 = 1;
    while known < ctx.precision {
        known = (known * 2).min(ctx.precision);
        let pm = ctx.p_pow(known);
        // m(y)
        let mut val = vec![BigInt::zero(); f];
        let mut pow = vec![BigInt::zero(); f];
        pow[0] = BigInt::one();
        for c in ctx.modulus.iter() {
            for i in 0..f {
                val[i] += c * &pow[i];
            }
            pow = poly_mul_mod(ctx, &pow, &y, &pm);
        }
        poly_reduce_mod(ctx, &mut val, &pm);
        // m'(y)
        let mut der = vec![BigInt::zero(); f];
        let mut pow = vec![BigInt::zero(); f];
        pow[0] = BigInt::one();
        for (e, c) in ctx.modulus.iter().enumerate().skip(1) {
            for i in 0..f {
                der[i] += c * BigInt::from(e) * &pow[i];
            }
            pow = poly_mul_mod(ctx, &pow, &y, &pm);
        }
        poly_reduce_mod(ctx, &mut der, &pm);
        let der_inv = poly_unit_inverse(ctx, &der, known);
        let step = poly_mul_mod(ctx, &val, &der_inv, &pm);
        for i in 0..f {
            y[i] = (&y[i] - &step[i]).mod_floor(&pm);
        }
    }
    y
}

/// Hensel inverse of a unit in (Z/p^k)[t]/modulus.
fn poly_unit_inverse(ctx: &PadicContext, u: &[BigInt], k: u32) -> Vec<BigInt> {
    let f = ctx.f as usize;
    // invert mod p via extended Euclid in F_p[t]
    let mut inv = poly_inverse_mod_p(ctx, u);
    let mut known: u32 = 1;
    while known < k {
        known = (known * 2).min(k);
        let pm = ctx.p_pow(known);
        // inv <- inv * (2 - u*inv)
        let prod = poly_mul_mod(ctx, u, &inv, &pm);
        let mut corr = vec![BigInt::zero(); f];
        corr[0] = BigInt::from(2);
        for i in 0..f {
            corr[i] = (&corr[i] - &prod[i]).mod_floor(&pm);
        }
        inv = poly_mul_mod(ctx, &inv, &corr, &pm);
    }
    inv
}

fn poly_inverse_mod_p(ctx: &PadicContext, u: &[BigInt]) -> Vec<BigInt> {
    let f = ctx.f as usize;
    let pb = ctx.p_big();
    if f == 1 {
        let inv = int_modinv(&u[0], &pb).expect("unit");
        return vec![inv];
    }
    // extended Euclid in F_p[t] against the modulus
    let norm = |v: &mut Vec<BigInt>| {
        for c in v.iter_mut() {
            *c = c.mod_floor(&pb);
        }
        while v.last().map(|c| c.is_zero()).unwrap_or(false) {
            v.pop();
        }
    };
    let mut r0: Vec<BigInt> = ctx.modulus.clone();
    let mut r1 = u.to_vec();
    norm(&mut r0);
    norm(&mut r1);
    let mut s0: Vec<BigInt> = vec![];
    let mut s1: Vec<BigInt> = vec![BigInt::one()];
    while !r1.is_empty() && r1.len() > 1 {
        // divide r0 by r1
        let lead_inv = int_modinv(r1.last().unwrap(), &pb).expect("field");
        let mut q = vec![BigInt::zero(); r0.len().saturating_sub(r1.len()) + 1];
        let mut rem = r0.clone();
        while rem.len() >= r1.len() && !rem.is_empty() {
            let shift = rem.len() - r1.len();
            let c = (rem.last().unwrap() * &lead_inv).mod_floor(&pb);
            q[shift] = c.clone();
            for i in 0..r1.len() {
                rem[shift + i] = (&rem[shift + i] - &c * &r1[i]).mod_floor(&pb);
            }
            while rem.last().map(|x| x.is_zero()).unwrap_or(false) {
                rem.pop();
            }
        }
        // s2 = s0 - q*s1
        let mut qs1 = vec![BigInt::zero(); q.len() + s1.len()];
        for (i, qi) in q.iter().enumerate() {
            for (j, sj) in s1.iter().enumerate() {
                qs1[i + j] += qi * sj;
            }
        }
        let maxlen = s0.len().max(qs1.len());
        let mut s2 = vec![BigInt::zero(); maxlen];
        for i in 0..maxlen {
            let a = s0.get(i).cloned().unwrap_or_default();
            let b = qs1.get(i).cloned().unwrap_or_default();
            s2[i] = (a - b).mod_floor(&pb);
        }
        norm(&mut s2);
        r0 = r1;
        r1 = rem;
        s0 = s1;
        s1 = s2;
    }
    // r1 is a nonzero constant; inverse = s1 / r1
    let c_inv = int_modinv(&r1[0], &pb).expect("unit");
    let mut out = vec![BigInt::zero(); f];
    for (i, s) in s1.iter().enumerate() {
        let mut v = (s * &c_inv).mod_floor(&pb);
        // reduce degree of s1 below f (it already is, deg < f)
        out[i] = std::mem::take(&mut v);
    }
    out
}

// ---------------------------------------------------------------------

/// An element of K_0 at capped relative precision.
#[derive(Clone)]
pub struct PadicNumber {
    pub ctx: Arc<PadicContext>,
    /// p-adic valuation when the element is nonzero; for an element that
    /// vanishes to precision, `shift` is the absolute precision bound.
    shift: i64,
    /// Unit coordinates mod p^rel in the power basis; all zero iff the
    /// element vanishes to working precision.
    coeffs: Vec<BigInt>,
    rel: u32,
}

impl PadicNumber {
    pub fn zero(ctx: &Arc<PadicContext>) -> Self {
        PadicNumber {
            ctx: ctx.clone(),
            shift: EXACT_ZERO_PREC,
            coeffs: vec![BigInt::zero(); ctx.f as usize],
            rel: 0,
        }
    }

    /// A zero known only modulo p^abs_prec.
    pub fn zero_to_prec(ctx: &Arc<PadicContext>, abs_prec: i64) -> Self {
        PadicNumber {
            ctx: ctx.clone(),
            shift: abs_prec,
            coeffs: vec![BigInt::zero(); ctx.f as usize],
            rel: 0,
        }
    }

    pub fn one(ctx: &Arc<PadicContext>) -> Self {
        Self::from_i64(ctx, 1)
    }

    pub fn from_i64(ctx: &Arc<PadicContext>, n: i64) -> Self {
        Self::from_bigint(ctx, &BigInt::from(n))
    }

    pub fn from_bigint(ctx: &Arc<PadicContext>, n: &BigInt) -> Self {
        if n.is_zero() {
            return Self::zero(ctx);
        }
        // exact input: split off the valuation first so the full
        // relative precision cap applies to the unit part
        let (v, unit) = split_valuation(n, &ctx.p_big());
        let mut coeffs = vec![BigInt::zero(); ctx.f as usize];
        coeffs[0] = unit;
        Self::make(ctx.clone(), v, coeffs, ctx.precision)
    }

    pub fn from_rational(ctx: &Arc<PadicContext>, q: &BigRational) -> Result<Self> {
        if q.is_zero() {
            return Ok(Self::zero(ctx));
        }
        let p = ctx.p_big();
        let (vn, nu) = split_valuation(q.numer(), &p);
        let (vd, de) = split_valuation(q.denom(), &p);
        let shift = vn - vd;
        let pk = ctx.p_pow(ctx.precision);
        let d_inv = int_modinv(&de.mod_floor(&pk), &pk)
            .ok_or_else(|| Error::precondition("denominator not a p-adic unit after reduction"))?;
        let mut coeffs = vec![BigInt::zero(); ctx.f as usize];
        coeffs[0] = (nu * d_inv).mod_floor(&pk);
        Ok(Self::make(ctx.clone(), shift, coeffs, ctx.precision))
    }

    /// Generator t of the unramified extension (zero for f = 1).
    pub fn generator(ctx: &Arc<PadicContext>) -> Self {
        let mut coeffs = vec![BigInt::zero(); ctx.f as usize];
        if ctx.f > 1 {
            coeffs[1] = BigInt::one();
        }
        Self::make(ctx.clone(), 0, coeffs, ctx.precision)
    }

    fn make(ctx: Arc<PadicContext>, shift: i64, mut coeffs: Vec<BigInt>, rel: u32) -> Self {
        let rel = rel.min(ctx.precision);
        if rel == 0 {
            return PadicNumber {
                ctx,
                shift,
                coeffs: vec![BigInt::zero(); coeffs.len()],
                rel: 0,
            };
        }
        let pk = ctx.p_pow(rel);
        for c in coeffs.iter_mut() {
            *c = c.mod_floor(&pk);
        }
        let p = ctx.p_big();
        let v = coeffs
            .iter()
            .filter(|c| !c.is_zero())
            .map(|c| split_valuation(c, &p).0)
            .min();
        match v {
            None => PadicNumber {
                ctx,
                shift: shift + rel as i64,
                coeffs,
                rel: 0,
            },
            Some(0) => PadicNumber {
                ctx,
                shift,
                coeffs,
                rel,
            },
            Some(v) => {
                let pv = p.pow(v as u32);
                let nrel = rel - v as u32;
                let pk2 = ctx.p_pow(nrel);
                for c in coeffs.iter_mut() {
                    *c = (&*c / &pv).mod_floor(&pk2);
                }
                PadicNumber {
                    ctx,
                    shift: shift + v,
                    coeffs,
                    rel: nrel,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rel == 0
    }

    /// None when the element vanishes to working precision.
    pub fn valuation(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.shift)
        }
    }

    /// Absolute precision: the element is known modulo p^abs_prec.
    pub fn abs_prec(&self) -> i64 {
        if self.is_zero() {
            self.shift
        } else {
            self.shift + self.rel as i64
        }
    }

    pub fn rel_prec(&self) -> u32 {
        self.rel
    }

    fn check_ctx(&self, other: &Self) -> Result<()> {
        if self.ctx == other.ctx {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        if self.is_zero() && other.is_zero() {
            return Ok(Self::zero_to_prec(&self.ctx, self.shift.min(other.shift)));
        }
        if self.is_zero() {
            return Ok(other.truncate_abs(self.shift));
        }
        if other.is_zero() {
            return Ok(self.truncate_abs(other.shift));
        }
        let s = self.shift.min(other.shift);
        let abs = self.abs_prec().min(other.abs_prec());
        let rel = (abs - s).max(0) as u32;
        let p = self.ctx.p_big();
        let f = self.ctx.f as usize;
        let mut coeffs = vec![BigInt::zero(); f];
        let pa = p.pow((self.shift - s) as u32);
        let pb = p.pow((other.shift - s) as u32);
        for i in 0..f {
            coeffs[i] = &self.coeffs[i] * &pa + &other.coeffs[i] * &pb;
        }
        Ok(Self::make(self.ctx.clone(), s, coeffs, rel))
    }

    pub fn neg(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let pk = self.ctx.p_pow(self.rel);
        let coeffs = self.coeffs.iter().map(|c| (-c).mod_floor(&pk)).collect();
        PadicNumber {
            ctx: self.ctx.clone(),
            shift: self.shift,
            coeffs,
            rel: self.rel,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        if self.is_zero() || other.is_zero() {
            // O(p^a) * p^s u = O(p^(a+s)); O * O even smaller is fine too
            let a = if self.is_zero() { self.shift } else { self.shift };
            let b = if other.is_zero() { other.shift } else { other.shift };
            return Ok(Self::zero_to_prec(&self.ctx, a.saturating_add(b).min(EXACT_ZERO_PREC)));
        }
        let rel = self.rel.min(other.rel);
        let pk = self.ctx.p_pow(rel);
        let coeffs = poly_mul_mod(&self.ctx, &self.coeffs, &other.coeffs, &pk);
        Ok(Self::make(
            self.ctx.clone(),
            self.shift + other.shift,
            coeffs,
            rel,
        ))
    }

    pub fn invert(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let inv = poly_unit_inverse(&self.ctx, &self.coeffs, self.rel);
        Ok(Self::make(self.ctx.clone(), -self.shift, inv, self.rel))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.mul(&other.invert()?)
    }

    pub fn scale_i64(&self, n: i64) -> Self {
        let k = PadicNumber::from_i64(&self.ctx, n);
        self.mul(&k).expect("same ctx")
    }

    /// Multiply by p^k (exact shift).
    pub fn shift_p(&self, k: i64) -> Self {
        let mut out = self.clone();
        out.shift = out.shift.saturating_add(k).min(EXACT_ZERO_PREC);
        out
    }

    pub fn pow_u64(&self, mut e: u64) -> Result<Self> {
        let mut result = Self::one(&self.ctx);
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base)?;
            }
            base = base.mul(&base)?;
            e >>= 1;
        }
        Ok(result)
    }

    /// The Frobenius automorphism sigma (identity on Q_p-rational
    /// elements, t -> the canonical lift of t^p).
    pub fn frobenius(&self) -> Self {
        if self.ctx.f == 1 || self.is_zero() {
            return self.clone();
        }
        let pows = self.ctx.sigma_powers();
        let f = self.ctx.f as usize;
        let pk = self.ctx.p_pow(self.rel);
        let mut out = vec![BigInt::zero(); f];
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for j in 0..f {
                out[j] += c * &pows[i][j];
            }
        }
        for c in out.iter_mut() {
            *c = c.mod_floor(&pk);
        }
        Self::make(self.ctx.clone(), self.shift, out, self.rel)
    }

    pub fn frobenius_iter(&self, n: u32) -> Self {
        let mut x = self.clone();
        for _ in 0..(n % self.ctx.f.max(1)) {
            x = x.frobenius();
        }
        x
    }

    /// The Teichmueller lift: the unique (p^f - 1)-th root of unity
    /// congruent to this unit mod p. Full context precision regardless of
    /// the input's precision.
    pub fn teichmuller(&self) -> Result<Self> {
        if self.is_zero() || self.shift != 0 {
            return Err(Error::precondition("teichmuller requires a unit"));
        }
        let ctx = &self.ctx;
        let cap = ctx.precision;
        let pk = ctx.p_pow(cap);
        let mut x = self.coeffs.clone();
        let q = BigInt::from(ctx.p).pow(ctx.f);
        for _ in 0..cap + 2 {
            let next = poly_pow_mod(ctx, &x, q.clone(), &pk);
            if next == x {
                break;
            }
            x = next;
        }
        Ok(Self::make(ctx.clone(), 0, x, cap))
    }

    /// Residue coordinates mod p.
    pub fn residue(&self) -> Vec<BigInt> {
        let p = self.ctx.p_big();
        if self.is_zero() || self.shift > 0 {
            return vec![BigInt::zero(); self.ctx.f as usize];
        }
        assert!(self.shift == 0, "residue of a non-integral element");
        self.coeffs.iter().map(|c| c.mod_floor(&p)).collect()
    }

    /// v(self - other) >= n, i.e. equality modulo p^n.
    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        match self.sub(other) {
            Ok(d) => match d.valuation() {
                None => d.abs_prec() >= n,
                Some(v) => v >= n,
            },
            Err(_) => false,
        }
    }

    /// Drop information beyond absolute precision n.
    pub fn truncate_abs(&self, n: i64) -> Self {
        if self.abs_prec() <= n {
            return self.clone();
        }
        if self.is_zero() {
            return Self::zero_to_prec(&self.ctx, n);
        }
        let rel = (n - self.shift).max(0) as u32;
        Self::make(self.ctx.clone(), self.shift, self.coeffs.clone(), rel)
    }

    /// Coefficient vector of the unit part (mod p^rel), for callers that
    /// need raw coordinates (rendering, restriction of scalars).
    pub fn unit_coeffs(&self) -> (&[BigInt], i64, u32) {
        (&self.coeffs, self.shift, self.rel)
    }

    /// Reinterpret in another context with the same prime and modulus
    /// (precision is truncated to the target cap).
    pub fn to_context(&self, ctx: &Arc<PadicContext>) -> Result<Self> {
        if self.ctx.p != ctx.p || self.ctx.modulus != ctx.modulus {
            return Err(Error::ContextMismatch);
        }
        Ok(Self::make(
            ctx.clone(),
            self.shift,
            self.coeffs.clone(),
            self.rel,
        ))
    }
}

const EXACT_ZERO_PREC: i64 = i64::MAX / 4;

fn split_valuation(n: &BigInt, p: &BigInt) -> (i64, BigInt) {
    assert!(!n.is_zero());
    let mut v = 0i64;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(p);
        if r.is_zero() {
            v += 1;
            m = q;
        } else {
            break;
        }
    }
    (v, m)
}

impl fmt::Debug for PadicNumber {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "{}", self)
    }
}

impl fmt::Display for PadicNumber {
    /// `p^v * (d_0 + d_1*p + ...) + O(p^N)` with digits in [0, p) for
    /// f = 1; coordinates in t for larger f.
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.ctx.p;
        if self.is_zero() {
            if self.shift >= EXACT_ZERO_PREC {
                return write!(fm, "0");
            }
            return write!(fm, "O({}^{})", p, self.shift);
        }
        let n = self.abs_prec();
        if self.ctx.f == 1 {
            let mut digits = Vec::new();
            let mut c = self.coeffs[0].clone();
            let pb = self.ctx.p_big();
            for _ in 0..self.rel {
                let (q, r) = c.div_rem(&pb);
                digits.push(r);
                c = q;
            }
            while digits.len() > 1 && digits.last().map(|d| d.is_zero()).unwrap_or(false) {
                digits.pop();
            }
            let body: Vec<String> = digits
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    if i == 0 {
                        format!("{}", d)
                    } else if i == 1 {
                        format!("{}*{}", d, p)
                    } else {
                        format!("{}*{}^{}", d, p, i)
                    }
                })
                .collect();
            write!(
                fm,
                "{}^{} * ({}) + O({}^{})",
                p,
                self.shift,
                body.join(" + "),
                p,
                n
            )
        } else {
            let body: Vec<String> = self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{}", c)
                    } else if i == 1 {
                        format!("{}*t", c)
                    } else {
                        format!("{}*t^{}", c, i)
                    }
                })
                .collect();
            write!(
                fm,
                "{}^{} * ({}) + O({}^{})",
                p,
                self.shift,
                body.join(" + "),
                p,
                n
            )
        }
    }
}

/// Parse the rendering produced by `Display` (f = 1 digit form).
pub fn parse_padic(ctx: &Arc<PadicContext>, s: &str) -> Result<PadicNumber> {
    let s = s.trim();
    let perr = |msg: &str| Error::Parse {
        line: 1,
        col: 1,
        msg: msg.to_string(),
    };
    if s == "0" {
        return Ok(PadicNumber::zero(ctx));
    }
    // p^v * (digits) + O(p^N)
    let (head, tail) = s.split_once('*').ok_or_else(|| perr("expected `p^v * (...)`"))?;
    let head = head.trim();
    let base_exp: Vec<&str> = head.split('^').collect();
    if base_exp.len() != 2 {
        return Err(perr("expected p^v prefix"));
    }
    let v: i64 = base_exp[1].parse().map_err(|_| perr("bad valuation"))?;
    let open = tail.find('(').ok_or_else(|| perr("missing ("))?;
    let close = tail.find(')').ok_or_else(|| perr("missing )"))?;
    let body = &tail[open + 1..close];
    let mut value = BigInt::zero();
    for term in body.split('+') {
        let term = term.trim();
        let parts: Vec<&str> = term.split('*').map(|t| t.trim()).collect();
        let digit: BigInt = parts[0].parse().map_err(|_| perr("bad digit"))?;
        let weight = match parts.len() {
            1 => BigInt::one(),
            2 => {
                let pe: Vec<&str> = parts[1].split('^').collect();
                let base: u64 = pe[0].parse().map_err(|_| perr("bad power"))?;
                if base != ctx.p {
                    return Err(perr("wrong prime in digit expansion"));
                }
                let e: u32 = if pe.len() == 2 {
                    pe[1].parse().map_err(|_| perr("bad exponent"))?
                } else {
                    1
                };
                ctx.p_pow(e)
            }
            _ => return Err(perr("malformed term")),
        };
        value += digit * weight;
    }
    let mut coeffs = vec![BigInt::zero(); ctx.f as usize];
    coeffs[0] = value;
    // absolute precision from the O(p^N) suffix, when present
    let rel = if let Some(opos) = tail[close..].find("O(") {
        let rest = &tail[close + opos + 2..];
        let endp = rest.find(')').ok_or_else(|| perr("missing ) in O()"))?;
        let inner = &rest[..endp];
        let pe: Vec<&str> = inner.split('^').collect();
        let n: i64 = if pe.len() == 2 {
            pe[1].parse().map_err(|_| perr("bad O() exponent"))?
        } else {
            return Err(perr("bad O() term"));
        };
        (n - v).max(0) as u32
    } else {
        ctx.precision
    };
    Ok(PadicNumber::make(ctx.clone(), v, coeffs, rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q5() -> Arc<PadicContext> {
        PadicContext::new(5, 3).unwrap()
    }

    #[test]
    fn add_with_carry() {
        let ctx = q5();
        let a = PadicNumber::from_i64(&ctx, 2);
        let b = PadicNumber::from_i64(&ctx, 3);
        let s = a.add(&b).unwrap();
        assert_eq!(s.valuation(), Some(1));
        assert!(s.eq_mod(&PadicNumber::from_i64(&ctx, 5), 3));
    }

    #[test]
    fn add_identity() {
        let ctx = q5();
        let x = PadicNumber::from_i64(&ctx, 17);
        let z = PadicNumber::zero(&ctx);
        assert!(x.add(&z).unwrap().eq_mod(&x, 3));
    }

    #[test]
    fn invert_two_mod_25() {
        // extended Euclid oracle: 2 * 13 = 26 = 1 mod 25
        let ctx = PadicContext::new(5, 2).unwrap();
        let two = PadicNumber::from_i64(&ctx, 2);
        let inv = two.invert().unwrap();
        assert!(inv.eq_mod(&PadicNumber::from_i64(&ctx, 13), 2));
    }

    #[test]
    fn invert_three_mod_25() {
        let ctx = PadicContext::new(5, 2).unwrap();
        let three = PadicNumber::from_i64(&ctx, 3);
        let inv = three.invert().unwrap();
        assert!(inv.eq_mod(&PadicNumber::from_i64(&ctx, 17), 2));
    }

    #[test]
    fn mul_valuations_add() {
        let ctx = q5();
        let p = PadicNumber::from_i64(&ctx, 5);
        assert_eq!(p.mul(&p).unwrap().valuation(), Some(2));
    }

    #[test]
    fn invert_one() {
        let ctx = q5();
        let one = PadicNumber::one(&ctx);
        assert!(one.invert().unwrap().eq_mod(&one, 3));
    }

    #[test]
    fn teichmuller_of_two_mod_25() {
        // 2^5 = 32 = 7 mod 25, 7^5 = 7 mod 25
        let ctx = PadicContext::new(5, 2).unwrap();
        let two = PadicNumber::from_i64(&ctx, 2);
        let t = two.teichmuller().unwrap();
        assert!(t.eq_mod(&PadicNumber::from_i64(&ctx, 7), 2));
    }

    #[test]
    fn teichmuller_of_one() {
        let ctx = q5();
        let one = PadicNumber::one(&ctx);
        assert!(one.teichmuller().unwrap().eq_mod(&one, 3));
    }

    #[test]
    fn teichmuller_rejects_non_unit() {
        let ctx = q5();
        let p = PadicNumber::from_i64(&ctx, 5);
        assert!(p.teichmuller().is_err());
        assert!(PadicNumber::zero(&ctx).teichmuller().is_err());
    }

    #[test]
    fn teichmuller_root_of_unity() {
        let ctx = PadicContext::new(7, 8).unwrap();
        let t = PadicNumber::from_i64(&ctx, 3).teichmuller().unwrap();
        let pow = t.pow_u64(6).unwrap();
        assert!(pow.eq_mod(&PadicNumber::one(&ctx), 8));
    }

    #[test]
    fn frobenius_fixes_rationals() {
        let ctx = PadicContext::unramified(5, 6, 3).unwrap();
        let x = PadicNumber::from_i64(&ctx, 42);
        assert!(x.frobenius().eq_mod(&x, 6));
    }

    #[test]
    fn frobenius_order_f() {
        let ctx = PadicContext::unramified(5, 6, 3).unwrap();
        let t = PadicNumber::generator(&ctx);
        let mut x = t.clone();
        for _ in 0..3 {
            x = x.frobenius();
        }
        assert!(x.eq_mod(&t, 6));
        assert!(!t.frobenius().eq_mod(&t, 6));
    }

    #[test]
    fn frobenius_is_ring_hom() {
        let ctx = PadicContext::unramified(7, 5, 2).unwrap();
        let t = PadicNumber::generator(&ctx);
        let a = t.add(&PadicNumber::from_i64(&ctx, 3)).unwrap();
        let b = t.mul(&t).unwrap().add(&PadicNumber::from_i64(&ctx, 2)).unwrap();
        let lhs = a.mul(&b).unwrap().frobenius();
        let rhs = a.frobenius().mul(&b.frobenius()).unwrap();
        assert!(lhs.eq_mod(&rhs, 5));
        let lhs = a.add(&b).unwrap().frobenius();
        let rhs = a.frobenius().add(&b.frobenius()).unwrap();
        assert!(lhs.eq_mod(&rhs, 5));
    }

    #[test]
    fn frobenius_commutes_with_teichmuller() {
        let ctx = PadicContext::unramified(5, 6, 2).unwrap();
        let t = PadicNumber::generator(&ctx)
            .add(&PadicNumber::from_i64(&ctx, 1))
            .unwrap();
        let teich = t.teichmuller().unwrap();
        let lhs = teich.frobenius();
        let rhs = t.pow_u64(5).unwrap().teichmuller().unwrap();
        assert!(lhs.eq_mod(&rhs, 6));
    }

    #[test]
    fn rational_embedding() {
        let ctx = PadicContext::new(5, 4).unwrap();
        let q = BigRational::new(BigInt::from(7), BigInt::from(3));
        let x = PadicNumber::from_rational(&ctx, &q).unwrap();
        let three = PadicNumber::from_i64(&ctx, 3);
        assert!(x.mul(&three).unwrap().eq_mod(&PadicNumber::from_i64(&ctx, 7), 4));
    }

    #[test]
    fn render_roundtrip() {
        let ctx = PadicContext::new(5, 4).unwrap();
        for n in [1i64, 7, 50, 124, -3] {
            let x = PadicNumber::from_i64(&ctx, n);
            let s = format!("{}", x);
            let y = parse_padic(&ctx, &s).unwrap();
            assert!(x.eq_mod(&y, x.abs_prec()), "roundtrip failed for {n}: {s}");
        }
        let z = PadicNumber::zero(&ctx);
        assert!(parse_padic(&ctx, &format!("{}", z)).unwrap().is_zero());
    }

    #[test]
    fn context_mismatch_rejected() {
        let a = PadicNumber::from_i64(&PadicContext::new(5, 3).unwrap(), 1);
        let b = PadicNumber::from_i64(&PadicContext::new(7, 3).unwrap(), 1);
        assert!(matches!(a.add(&b), Err(Error::ContextMismatch)));
    }
}
