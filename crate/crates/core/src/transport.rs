//! Canonical transport on explicit good-reduction curves (G_m and
//! P^1 minus {0, 1, oo}): word connections for iterated integrals,
//! polylogarithms, pushforward functoriality, and the two-point path
//! tower whose Frobenius-fixed element reproduces transport entries.
//!
//! Transport T(x0 -> x1) is the classical propagator of horizontal
//! sections written in the branch ring: on the singular disk it is the
//! canonical-frame formula G(x1) exp(N0 (Log x0 - Log x1)) G(x0)^{-1};
//! for purely logarithmic connections (regular part zero) the same
//! formula with G = I is global, and the branch homomorphism Log
//! carries the cross-residue-disk Frobenius equivariance.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::connection::{canonical_gauge, residue, LogConnection};
use crate::error::{Error, Result};
use crate::logring::{log_one_unit, plog, KstElement};
use crate::mat::Mat;
use crate::padic::{PadicContext, PadicNumber};
use crate::phimod::{PhiNModule, TowerOfModules};
use crate::ratfun::{Poly, RationalFunction};
use crate::series::{dlog_at, LogOneForm};

/// A global connection sum_a N_a dlog(z - a) with nilpotent letter
/// matrices, poles in good position mod p.
#[derive(Clone, Debug)]
pub struct CurveSpec {
    pub ctx: Arc<PadicContext>,
    pub letters: Vec<(BigRational, Mat<PadicNumber>)>,
}

fn rat_vp(p: u64, q: &BigRational) -> i64 {
    let pb = BigInt::from(p);
    let count = |mut n: BigInt| -> i64 {
        if n.is_zero() {
            return i64::MAX / 2;
        }
        let mut v = 0;
        while (&n % &pb).is_zero() {
            n /= &pb;
            v += 1;
        }
        v
    };
    count(q.numer().clone()) - count(q.denom().clone())
}

impl CurveSpec {
    pub fn new(ctx: &Arc<PadicContext>, letters: Vec<(BigRational, Mat<PadicNumber>)>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::precondition("connection needs at least one letter"));
        }
        let rank = letters[0].1.rows;
        for (a, n) in &letters {
            if n.rows != rank || n.cols != rank {
                return Err(Error::precondition("letter matrices must be square of equal size"));
            }
            if n.nilpotency_index()?.is_none() {
                return Err(Error::precondition("letter coefficient must be nilpotent"));
            }
            if !a.is_zero() && rat_vp(ctx.p, a) != 0 {
                return Err(Error::precondition(
                    "nonzero poles must be units (distinct from 0 and oo mod p)",
                ));
            }
        }
        for i in 0..letters.len() {
            for j in i + 1..letters.len() {
                let d = &letters[i].0 - &letters[j].0;
                if d.is_zero() || rat_vp(ctx.p, &d) > 0 {
                    return Err(Error::precondition("poles must be distinct mod p"));
                }
            }
        }
        Ok(CurveSpec {
            ctx: ctx.clone(),
            letters,
        })
    }

    pub fn rank(&self) -> usize {
        self.letters[0].1.rows
    }

    /// Single-letter G_m connection N dlog z.
    pub fn gm(ctx: &Arc<PadicContext>, n: Mat<PadicNumber>) -> Result<Self> {
        Self::new(ctx, vec![(BigRational::zero(), n)])
    }

    /// The rank-2 Kummer connection on G_m.
    pub fn kummer(ctx: &Arc<PadicContext>) -> Result<Self> {
        let mut n = Mat::zero(2, 2, &PadicNumber::zero(ctx));
        n.set(0, 1, PadicNumber::one(ctx));
        Self::gm(ctx, n)
    }

    /// Realize on the disk at 0: residues from the pole at 0, regular
    /// parts from the expansions of dlog(z - a).
    pub fn to_log_connection(&self, trunc: usize, rho: BigRational) -> Result<LogConnection> {
        let rank = self.rank();
        let forms: Vec<LogOneForm> = self
            .letters
            .iter()
            .map(|(a, _)| {
                let f = RationalFunction::new(
                    Poly::from_coeffs(vec![-a.clone(), BigRational::one()]),
                    Poly::from_coeffs(vec![BigRational::one()]),
                )?;
                dlog_at(&f, &BigRational::zero(), &self.ctx, trunc, rho.clone())
            })
            .collect::<Result<_>>()?;
        let mut matrix = Vec::with_capacity(rank);
        for i in 0..rank {
            let mut row = Vec::with_capacity(rank);
            for j in 0..rank {
                let mut acc = LogOneForm::zero(&self.ctx, trunc, rho.clone());
                for ((_, n), form) in self.letters.iter().zip(forms.iter()) {
                    acc = acc.add(&form.scale(n.at(i, j))?)?;
                }
                row.push(acc);
            }
            matrix.push(row);
        }
        LogConnection::new(&self.ctx, matrix)
    }

    fn pure_log_letter(&self) -> Option<&Mat<PadicNumber>> {
        if self.letters.len() == 1 && self.letters[0].0.is_zero() {
            Some(&self.letters[0].1)
        } else {
            None
        }
    }
}

/// Letters of the iterated-integral alphabet: dlog z, dlog(1-z) (the
/// same form as dlog(z-1)), and dlog(z-a) in general.
#[derive(Clone, Debug, PartialEq)]
pub enum Letter {
    Z,
    OneMinusZ,
    Shifted(BigRational),
}

impl Letter {
    pub fn pole(&self) -> BigRational {
        match self {
            Letter::Z => BigRational::zero(),
            Letter::OneMinusZ => BigRational::one(),
            Letter::Shifted(a) => a.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parse "dlog(z),dlog(1-z),dlog(z-3)" (whitespace tolerated).
    pub fn parse(s: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for (idx, raw) in s.split(',').enumerate() {
            let t: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
            if t.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: 1,
                col: idx + 1,
                msg,
            };
            let inner = t
                .strip_prefix("dlog(")
                .and_then(|r| r.strip_suffix(')'))
                .or_else(|| t.strip_prefix("dlog"))
                .ok_or_else(|| err(format!("cannot read letter `{t}`: expected dlog(...)")))?;
            let letter = match inner {
                "z" => Letter::Z,
                "1-z" => Letter::OneMinusZ,
                _ => {
                    let a = inner
                        .strip_prefix("z-")
                        .and_then(|r| r.parse::<BigRational>().ok())
                        .ok_or_else(|| err(format!("cannot read letter `{t}`")))?;
                    if a.is_zero() {
                        Letter::Z
                    } else {
                        Letter::Shifted(a)
                    }
                }
            };
            letters.push(letter);
        }
        Ok(Word(letters))
    }
}

/// The standard nilpotent connection of a word: basis e_0..e_n with
/// nabla e_k = e_{k-1} * (k-th letter), i.e. A_{k-1,k} = omega_k.
pub fn word_curve(ctx: &Arc<PadicContext>, word: &Word) -> Result<CurveSpec> {
    let n = word.len();
    let rank = n + 1;
    let mut poles: Vec<(BigRational, Mat<PadicNumber>)> = Vec::new();
    for (k, letter) in word.0.iter().enumerate() {
        let a = letter.pole();
        let entry = poles.iter_mut().find(|(b, _)| *b == a);
        let m = match entry {
            Some((_, m)) => m,
            None => {
                poles.push((a, Mat::zero(rank, rank, &PadicNumber::zero(ctx))));
                &mut poles.last_mut().unwrap().1
            }
        };
        m.set(k, k + 1, PadicNumber::one(ctx));
    }
    CurveSpec::new(ctx, poles)
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    pub matrix: Mat<KstElement>,
    pub prime: u64,
    pub precision: u32,
    pub level: u32,
    pub route: String,
}

fn series_trunc(ctx: &Arc<PadicContext>) -> usize {
    ctx.precision as usize + 32
}

/// Canonical transport between two points. Purely logarithmic
/// connections (all regular parts zero) are transported globally:
/// exp(N0 (Log x0 - Log x1)) with the branch homomorphism doing the
/// cross-disk Frobenius work. Otherwise both points must lie in the
/// certified disk at 0 and the canonical frame is used.
pub fn canonical_transport(
    curve: &CurveSpec,
    x0: &PadicNumber,
    x1: &PadicNumber,
) -> Result<TransportResult> {
    let ctx = &curve.ctx;
    if x0.is_zero() || x1.is_zero() {
        return Err(Error::precondition("transport endpoint at a singular point"));
    }
    for (a, _) in &curve.letters {
        if a.is_zero() {
            continue;
        }
        let av = PadicNumber::from_rational(ctx, a)?;
        for x in [x0, x1] {
            if x.sub(&av)?.valuation().map_or(true, |v| v > 0) {
                return Err(Error::precondition(
                    "endpoint reduces into the singular locus",
                ));
            }
        }
    }
    let (matrix, route) = if let Some(n0) = curve.pure_log_letter() {
        let c = plog(x0)?.sub(&plog(x1)?)?;
        let m = n0.try_map(|v| c.scale(v))?;
        let cctx = ctx.clone();
        let t = m.exp_nilpotent(|n| {
            Ok(KstElement::constant(
                PadicNumber::from_i64(&cctx, n).invert()?,
            ))
        })?;
        (t, "global".to_string())
    } else {
        let conn = curve.to_log_connection(series_trunc(ctx), BigRational::one())?;
        let frame = canonical_gauge(&conn)?;
        (frame.transport(x0, x1)?, "disk".to_string())
    };
    let level = {
        let conn = curve.to_log_connection(4, BigRational::one())?;
        residue(&conn)?.nilpotency_index.unwrap_or(0)
    };
    Ok(TransportResult {
        matrix,
        prime: ctx.p,
        precision: ctx.precision,
        level,
        route,
    })
}

/// The iterated integral of a word: entry (0, n) of the level-(n+1)
/// transport. The single letter dlog z gives Log x0 - Log x1.
pub fn iterated_integral(
    ctx: &Arc<PadicContext>,
    word: &Word,
    x0: &PadicNumber,
    x1: &PadicNumber,
) -> Result<KstElement> {
    if word.is_empty() {
        return Ok(KstElement::constant(PadicNumber::one(ctx)));
    }
    let curve = word_curve(ctx, word)?;
    let t = canonical_transport(&curve, x0, x1)?;
    Ok(t.matrix.at(0, word.len()).clone())
}

/// Direct summation of Li_k(z) = sum z^n / n^k, convergent for |z| < 1.
pub fn series_polylog(k: u32, z: &PadicNumber) -> Result<PadicNumber> {
    let ctx = &z.ctx;
    match z.valuation() {
        None => return Ok(PadicNumber::zero(ctx)),
        Some(v) if v >= 1 => {}
        _ => return Err(Error::precondition("polylog series requires |z| < 1")),
    }
    let target = ctx.precision as i64 + 4;
    let mut acc = PadicNumber::zero(ctx);
    let mut pow = PadicNumber::one(ctx);
    let mut n = 0i64;
    loop {
        n += 1;
        pow = pow.mul(z)?;
        let nk = PadicNumber::from_i64(ctx, n).pow_u64(k as u64)?;
        let term = pow.mul(&nk.invert()?)?;
        if !term.is_zero() {
            acc = acc.add(&term)?;
        }
        // v(z^n / n^k) >= n - k log_p n, monotone past small n
        let log_term = k as i64 * (64 - (n as u64).leading_zeros() as i64);
        if n >= target + log_term + 4 {
            break;
        }
    }
    Ok(acc)
}

/// Li_k(z) by parallel transport of the polylog connection from a base
/// point (default p), normalized by the convergent series at the base.
/// Both points must lie in the residue disk of 0.
pub fn polylog(k: u32, z: &PadicNumber, base: Option<&PadicNumber>) -> Result<KstElement> {
    if k == 0 {
        return Err(Error::precondition("polylog level must be positive"));
    }
    let ctx = z.ctx.clone();
    let default_base = PadicNumber::from_i64(&ctx, ctx.p as i64);
    let z0 = base.unwrap_or(&default_base);
    // word omega_1..omega_k = dlog z, ..., dlog z, dlog(1-z)
    let mut letters = vec![Letter::Z; (k - 1) as usize];
    letters.push(Letter::OneMinusZ);
    let curve = word_curve(&ctx, &Word(letters))?;
    // T(z -> z0) carries the fiber at z0 to the fiber at z
    let t = canonical_transport(&curve, z, z0)?;
    // horizontal vector v with v_i = (-1)^{k-i+1} Li_{k-i}, v_k = 1
    let mut v = Vec::with_capacity(k as usize + 1);
    for i in 0..k {
        let li = series_polylog(k - i, z0)?;
        let sign = if (k - i) % 2 == 0 { -1 } else { 1 };
        v.push(KstElement::constant(li).scale_i64(sign));
    }
    v.push(KstElement::constant(PadicNumber::one(&ctx)));
    let mut out = KstElement::zero(&ctx);
    for (j, vj) in v.iter().enumerate() {
        out = out.add(&t.matrix.at(0, j).mul(vj)?)?;
    }
    let sign = if k % 2 == 0 { -1 } else { 1 };
    Ok(out.scale_i64(sign))
}

/// Taylor-ODE oracle: the fundamental solution Y centered at x0 with
/// Y(x0) = I and Y' = -A Y, evaluated at x1. Valid when |x1 - x0| is
/// strictly inside the distance from x0 to every pole.
pub fn taylor_transport(
    curve: &CurveSpec,
    x0: &PadicNumber,
    x1: &PadicNumber,
    trunc: usize,
) -> Result<Mat<PadicNumber>> {
    let ctx = &curve.ctx;
    let rank = curve.rank();
    let w = x1.sub(x0)?;
    // distance checks: v(w) > v(x0 - a) for every pole a
    for (a, _) in &curve.letters {
        let d = x0.sub(&PadicNumber::from_rational(ctx, a)?)?;
        let (vw, vd) = (w.valuation(), d.valuation());
        if let (Some(vw), Some(vd)) = (vw, vd) {
            if vw <= vd {
                return Err(Error::precondition(
                    "target outside the certified Taylor disk around the source",
                ));
            }
        } else if vd.is_none() {
            return Err(Error::precondition("Taylor center at a singular point"));
        }
    }
    // coefficient matrices A_j of A(x0 + w) = sum_j A_j w^j
    let zero = Mat::zero(rank, rank, &PadicNumber::zero(ctx));
    let mut a_coeffs = vec![zero.clone(); trunc];
    for (a, n) in &curve.letters {
        let d = x0.sub(&PadicNumber::from_rational(ctx, a)?)?;
        // 1/(z-a) = sum_j (-1)^j w^j / (x0-a)^{j+1}
        let dinv = d.invert()?;
        let mut c = dinv.clone();
        for (j, slot) in a_coeffs.iter_mut().enumerate() {
            let signed = if j % 2 == 0 { c.clone() } else { c.neg() };
            *slot = slot.add(&n.scale(&signed)?)?;
            c = c.mul(&dinv)?;
        }
    }
    // Y_{m+1} = -(1/(m+1)) sum_j A_j Y_{m-j}
    let mut ys = vec![Mat::identity(rank, &PadicNumber::zero(ctx))];
    for m in 0..trunc - 1 {
        let mut acc = zero.clone();
        for j in 0..=m {
            acc = acc.add(&a_coeffs[j].mul(&ys[m - j])?)?;
        }
        let inv = PadicNumber::from_i64(ctx, m as i64 + 1).invert()?;
        ys.push(acc.scale(&inv)?.scale(&PadicNumber::from_i64(ctx, -1))?);
    }
    let mut out = zero;
    let mut pw = PadicNumber::one(ctx);
    for y in &ys {
        out = out.add(&y.scale(&pw)?)?;
        pw = pw.mul(&w)?;
    }
    Ok(out)
}

/// Functoriality of z -> z^m on G_m: transport of the pulled-back
/// connection (m N dlog z) between x0, x1 equals transport of the
/// original between x0^m, x1^m.
pub fn pushforward_check(
    ctx: &Arc<PadicContext>,
    n: &Mat<PadicNumber>,
    m: u64,
    x0: &PadicNumber,
    x1: &PadicNumber,
) -> Result<bool> {
    let curve = CurveSpec::gm(ctx, n.clone())?;
    let scaled = CurveSpec::gm(ctx, n.scale(&PadicNumber::from_i64(ctx, m as i64))?)?;
    let direct = canonical_transport(&curve, &x0.pow_u64(m)?, &x1.pow_u64(m)?)?;
    let pulled = canonical_transport(&scaled, x0, x1)?;
    let margin = ctx.precision as i64 - 2;
    for i in 0..n.rows {
        for j in 0..n.rows {
            if !direct.matrix.at(i, j).eq_mod(pulled.matrix.at(i, j), margin) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The Frobenius step Log(x^{1-p}) of a unit: the same-disk transport
/// entry from x to its Frobenius image x^p, computed by the convergent
/// 1-unit series alone.
pub fn frobenius_step_log(x: &PadicNumber) -> Result<PadicNumber> {
    if x.valuation() != Some(0) {
        return Err(Error::precondition("Frobenius step needs a unit point"));
    }
    let u = x.pow_u64(x.ctx.p - 1)?.invert()?;
    log_one_unit(&u)
}

/// The two-point path tower on G_m between unit endpoints: level k has
/// basis dual to 1, c, c^2/2!, ..., and the Frobenius acts by
/// phi[i][j] = p^{-i} mu^{i-j}/(i-j)! where mu = Log(x1^{1-p}) -
/// Log(x0^{1-p}) is assembled from same-disk local frames. The
/// canonical element's level-2 coordinate is Log x0 - Log x1.
pub fn gm_tower(x0: &PadicNumber, x1: &PadicNumber, r: usize) -> Result<TowerOfModules> {
    build_gm_tower(x0, x1, r, false)
}

/// Same tower with the level-2 diagonal weight broken to 0: 1 - phi is
/// then singular on the lift ambiguity and extraction must fail.
pub fn gm_tower_degenerate(x0: &PadicNumber, x1: &PadicNumber, r: usize) -> Result<TowerOfModules> {
    build_gm_tower(x0, x1, r, true)
}

fn build_gm_tower(
    x0: &PadicNumber,
    x1: &PadicNumber,
    r: usize,
    degenerate: bool,
) -> Result<TowerOfModules> {
    let ctx = x0.ctx.clone();
    if r == 0 {
        return Err(Error::precondition("tower depth must be positive"));
    }
    let mu = frobenius_step_log(x1)?.sub(&frobenius_step_log(x0)?)?;
    let p_inv = PadicNumber::from_i64(&ctx, ctx.p as i64).invert()?;
    let mut levels = Vec::with_capacity(r);
    let mut projections = Vec::with_capacity(r - 1);
    for k in 1..=r {
        let mut phi = Mat::zero(k, k, &PadicNumber::zero(&ctx));
        for i in 0..k {
            let mut diag = p_inv.pow_u64(i as u64)?;
            if degenerate && i == 1 {
                diag = PadicNumber::one(&ctx);
            }
            for j in 0..=i {
                let mut fact = PadicNumber::one(&ctx);
                for t in 1..=(i - j) as i64 {
                    fact = fact.mul(&PadicNumber::from_i64(&ctx, t))?;
                }
                let mut mupow = PadicNumber::one(&ctx);
                for _ in 0..(i - j) {
                    mupow = mupow.mul(&mu)?;
                }
                let entry = diag.mul(&mupow)?.mul(&fact.invert()?)?;
                phi.set(i, j, entry);
            }
        }
        levels.push(PhiNModule::new(
            &ctx,
            phi,
            Mat::zero(k, k, &PadicNumber::zero(&ctx)),
            ctx.f.max(1),
        )?);
        if k > 1 {
            projections.push(Mat::from_fn(k - 1, k, |i, j| {
                if i == j {
                    PadicNumber::one(&ctx)
                } else {
                    PadicNumber::zero(&ctx)
                }
            }));
        }
    }
    TowerOfModules::new(levels, projections, vec![PadicNumber::one(&ctx)])
}
