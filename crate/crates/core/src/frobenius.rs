//! Frobenius structures (F-crystals) on disk connections: lifts of
//! Frobenius of the form x^p * u(x), horizontality of the crystal map
//! phi, change of lift, the induced constant action on the nearby
//! cycles, and Dwork's trick for evaluating frames beyond the disk on
//! which the gauge series is certified.

use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Signed;

use crate::connection::{canonical_gauge, residue, HorizontalFrame, LogConnection};
use crate::error::{Error, Result};
use crate::logext::LogExtElement;
use crate::logring::{series_terms, KstElement};
use crate::mat::Mat;
use crate::padic::{PadicContext, PadicNumber};
use crate::ratfun::RationalFunction;
use crate::series::{DiskFunction, LogOneForm};

/// A lift of Frobenius compatible with the log structure at 0:
/// s(x) = x^p * u(x) with u a 1-unit on the disk (u = 1 mod p
/// coefficientwise).
#[derive(Clone, Debug)]
pub struct FrobLift {
    pub series: DiskFunction,
}

impl FrobLift {
    /// The standard lift x -> x^p.
    pub fn standard(ctx: &Arc<PadicContext>, trunc: usize, rho: BigRational) -> Self {
        let p = ctx.p as usize;
        let mut coeffs = vec![PadicNumber::zero(ctx); p + 1];
        coeffs[p] = PadicNumber::one(ctx);
        FrobLift {
            series: DiskFunction::from_coeffs(ctx, coeffs, trunc + p, rho),
        }
    }

    pub fn from_series(series: DiskFunction) -> Result<Self> {
        let p = series.ctx.p as usize;
        if series.ord() != Some(p) {
            return Err(Error::precondition(
                "Frobenius lift must vanish to order exactly p at 0",
            ));
        }
        let lift = FrobLift { series };
        let u = lift.unit()?;
        let one = PadicNumber::one(&u.ctx);
        for k in 0..u.trunc {
            let c = if k == 0 { u.coeff(0).sub(&one)? } else { u.coeff(k) };
            if !c.is_zero() && c.valuation().unwrap_or(i64::MAX) < 1 {
                return Err(Error::precondition(
                    "Frobenius lift unit part must be congruent to 1 mod p",
                ));
            }
        }
        Ok(lift)
    }

    /// Expand a rational lift (the connection file's frobenius_lift
    /// field) at 0.
    pub fn from_rational(
        rf: &RationalFunction,
        ctx: &Arc<PadicContext>,
        trunc: usize,
        rho: BigRational,
    ) -> Result<Self> {
        let p = ctx.p as usize;
        let coeffs = rf.series_at_zero(trunc + p)?;
        let series = DiskFunction::from_rational_coeffs(ctx, &coeffs, trunc + p, rho)?;
        Self::from_series(series)
    }

    /// The 1-unit u with s(x) = x^p * u(x).
    pub fn unit(&self) -> Result<DiskFunction> {
        let p = self.series.ctx.p as usize;
        let trunc = self.series.trunc.saturating_sub(p).max(1);
        let coeffs: Vec<PadicNumber> = (0..trunc).map(|k| self.series.coeff(k + p)).collect();
        Ok(DiskFunction::from_coeffs(
            &self.series.ctx,
            coeffs,
            trunc,
            self.series.rho.clone(),
        ))
    }

    /// The series logarithm of u as a disk function, convergent since
    /// u = 1 mod p. This is the d-compatible branch, d(log u) = (u'/u) dx,
    /// i.e. -sum (1-u)^i / i — the negative of the sign the numeric
    /// branch Log uses on 1-units. The formal symbol l(x) satisfies
    /// d l(x) = dlog x, so the rewrite l(s(x)) = p l(x) + log u must use
    /// this branch for the crystal identities to close.
    pub fn log_unit(&self) -> Result<DiskFunction> {
        let u = self.unit()?;
        let ctx = &u.ctx;
        let w = DiskFunction::one(ctx, u.trunc, u.rho.clone()).sub(&u)?;
        if w.is_zero() {
            return Ok(DiskFunction::zero(ctx, u.trunc, u.rho.clone()));
        }
        let vw = (0..w.trunc)
            .filter_map(|k| w.coeff(k).valuation())
            .min()
            .unwrap();
        if vw < 1 {
            return Err(Error::precondition(
                "log of the lift unit requires a 1-unit series",
            ));
        }
        let terms = series_terms(ctx.p, vw, ctx.precision as i64 + 1);
        let mut acc = DiskFunction::zero(ctx, w.trunc, w.rho.clone());
        let mut pow = w.clone();
        for i in 1..=terms {
            let inv_i = PadicNumber::from_i64(ctx, i as i64).invert()?;
            acc = acc.add(&pow.scale(&inv_i)?)?;
            pow = pow.mul(&w)?;
        }
        Ok(acc.neg())
    }

    /// f(s(x)).
    pub fn pullback_fn(&self, f: &DiskFunction) -> Result<DiskFunction> {
        f.compose(&self.series)
    }

    /// Pullback of a logarithmic 1-form, with the semilinear sigma
    /// twist on coefficients:
    /// r dlog x + g dx  ->  p sigma(r) dlog x
    ///                      + (sigma(r) u'/u + sigma(g)(s) s') dx.
    pub fn pullback_form(&self, w: &LogOneForm) -> Result<LogOneForm> {
        let u = self.unit()?;
        let dlog_u = u.derivative().mul(&u.invert()?)?;
        let r = w.residue.frobenius();
        let reg = dlog_u
            .scale(&r)?
            .add(&w.regular.frobenius().compose(&self.series)?.mul(&self.series.derivative())?)?;
        Ok(LogOneForm {
            residue: r.scale_i64(self.series.ctx.p as i64),
            regular: reg,
        })
    }

    /// Numerical value s(pt), allowing points down to the given radius.
    pub fn apply_point(&self, pt: &PadicNumber, rho: &BigRational) -> Result<PadicNumber> {
        retag(&self.series, rho).evaluate(pt)
    }
}

/// Widen the certified-radius tag; used by Dwork's trick, which is what
/// justifies evaluating crystal data on the larger disk.
fn retag(f: &DiskFunction, rho: &BigRational) -> DiskFunction {
    let mut g = f.clone();
    if g.rho > *rho {
        g.rho = rho.clone();
    }
    g
}

fn disk_frob_iter(f: &DiskFunction, n: u32) -> DiskFunction {
    let coeffs: Vec<PadicNumber> = f.coeffs().iter().map(|c| c.frobenius_iter(n)).collect();
    DiskFunction::from_coeffs(&f.ctx, coeffs, f.trunc, f.rho.clone())
}

/// Inverse of a series matrix whose constant term is invertible:
/// H_0 = M_0^{-1}, H_k = -M_0^{-1} sum_{i=1..k} M_i H_{k-i}.
pub fn mat_series_inverse(m: &Mat<DiskFunction>) -> Result<Mat<DiskFunction>> {
    let proto = m.proto();
    let ctx = &proto.ctx;
    let trunc = proto.trunc;
    let r = m.rows;
    let layer = |k: usize| -> Mat<PadicNumber> { Mat::from_fn(r, r, |i, j| m.at(i, j).coeff(k)) };
    let m0_inv = layer(0).inverse()?;
    let mut layers: Vec<Mat<PadicNumber>> = vec![m0_inv.clone()];
    for k in 1..trunc {
        let mut acc = Mat::zero(r, r, &PadicNumber::zero(ctx));
        for i in 1..=k {
            let mi = layer(i);
            if mi.is_zero() {
                continue;
            }
            acc = acc.add(&mi.mul(&layers[k - i])?)?;
        }
        layers.push(m0_inv.mul(&acc)?.neg());
    }
    Ok(Mat::from_fn(r, r, |i, j| {
        let coeffs: Vec<PadicNumber> = layers.iter().map(|l| l.at(i, j).clone()).collect();
        DiskFunction::from_coeffs(ctx, coeffs, trunc, proto.rho.clone())
    }))
}

/// An F-crystal: a connection together with the matrix of
/// phi: Fr*E -> E in the working frame and the chosen lift.
#[derive(Clone, Debug)]
pub struct FCrystal {
    pub conn: LogConnection,
    pub phi: Mat<DiskFunction>,
    pub lift: FrobLift,
}

impl FCrystal {
    pub fn new(conn: LogConnection, phi: Mat<DiskFunction>, lift: FrobLift) -> Result<Self> {
        if phi.rows != conn.rank || phi.cols != conn.rank {
            return Err(Error::precondition("crystal matrix size must match the rank"));
        }
        let res = residue(&conn)?;
        if !res.nilpotent {
            return Err(Error::NonNilpotentResidue);
        }
        // invertibility over A tensor Q: the constant term must invert
        let r = conn.rank;
        let phi0 = Mat::from_fn(r, r, |i, j| phi.at(i, j).coeff(0));
        phi0.inverse().map_err(|_| {
            Error::CrystalAxiom("phi is not invertible at the center".into())
        })?;
        Ok(FCrystal { conn, phi, lift })
    }

    /// Matrix of the pulled-back connection Fr*(sigma A).
    fn pullback_matrix(&self) -> Result<Vec<Vec<LogOneForm>>> {
        self.conn
            .matrix
            .iter()
            .map(|row| row.iter().map(|w| self.lift.pullback_form(w)).collect())
            .collect()
    }
}

fn form_min_val(w: &LogOneForm) -> Option<i64> {
    let mut best: Option<i64> = w.residue.valuation();
    for k in 0..w.regular.trunc {
        if let Some(v) = w.regular.coeff(k).valuation() {
            best = Some(best.map_or(v, |b| b.min(v)));
        }
    }
    best
}

/// Residual norm of the crystal axiom d(phi) + A phi = phi Fr*(sigma A),
/// reported as the largest precision deficit (0 iff the axiom holds to
/// truncation and working precision).
pub fn check_horizontality(cr: &FCrystal) -> Result<i64> {
    let r = cr.conn.rank;
    let a = &cr.conn.matrix;
    let b = cr.pullback_matrix()?;
    let prec = cr.conn.ctx.precision as i64;
    let mut deficit = 0i64;
    for i in 0..r {
        for j in 0..r {
            let mut acc = LogOneForm {
                residue: PadicNumber::zero(&cr.conn.ctx),
                regular: cr.phi.at(i, j).derivative(),
            };
            for k in 0..r {
                acc = acc.add(&a[i][k].mul_fn(cr.phi.at(k, j))?)?;
                acc = acc.sub(&b[k][j].mul_fn(cr.phi.at(i, k))?)?;
            }
            if let Some(v) = form_min_val(&acc) {
                deficit = deficit.max(prec - v);
            }
        }
    }
    Ok(deficit.max(0))
}

/// The constant Frobenius action on the nearby-cycle frame.
#[derive(Clone, Debug)]
pub struct PhiOnPsi {
    pub matrix: Mat<PadicNumber>,
    pub n_psi: Mat<PadicNumber>,
}

fn coeff_vanishes(c: &PadicNumber, prec: i64) -> bool {
    c.is_zero() || c.valuation().map_or(true, |v| v >= prec)
}

/// phi_Psi with H(x) phi_Psi = Phi(x) (sigma H)(s(x)), where
/// l(s(x)) = p l(x) + Log u. Constant in x by the crystal axiom; any
/// nonconstant residue is a hard error, as is failure of the relation
/// N phi = p phi sigma(N).
pub fn phi_on_psi(cr: &FCrystal) -> Result<PhiOnPsi> {
    let frame = canonical_gauge(&cr.conn)?;
    phi_on_psi_with_frame(cr, &frame)
}

pub fn phi_on_psi_with_frame(cr: &FCrystal, frame: &HorizontalFrame) -> Result<PhiOnPsi> {
    let ctx = &cr.conn.ctx;
    let trunc = frame.trunc;
    let rho = frame.rho.clone();
    let lx = LogExtElement::lx(ctx, trunc, rho.clone());
    let const_elem = |c: PadicNumber| {
        LogExtElement::from_disk(DiskFunction::constant(c, trunc, rho.clone()))
    };
    let inv_elem = |n: i64| -> Result<LogExtElement> {
        Ok(const_elem(PadicNumber::from_i64(ctx, n).invert()?))
    };

    // exp(+N0 l(x))
    let exp_plus = frame
        .n0
        .try_map(|c| const_elem(c.clone()).mul(&lx))?
        .exp_nilpotent(&inv_elem)?;
    // G(x)^{-1}
    let g_inv = mat_series_inverse(&frame.gauge)?.map(|f| LogExtElement::from_disk(f.clone()));
    // Phi(x)
    let phi_ext = cr.phi.map(|f| LogExtElement::from_disk(f.clone()));
    // (sigma G)(s(x))
    let g_pull = frame
        .gauge
        .try_map(|f| Ok(LogExtElement::from_disk(cr.lift.pullback_fn(&f.frobenius())?)))?;
    // exp(-sigma(N0) (p l(x) + Log u))
    let log_pull = lx
        .scale(&PadicNumber::from_i64(ctx, ctx.p as i64))?
        .add(&LogExtElement::from_disk(cr.lift.log_unit()?))?;
    let exp_minus = frame
        .n0
        .try_map(|c| log_pull.scale(&c.frobenius().neg()))?
        .exp_nilpotent(&inv_elem)?;

    let prod = exp_plus
        .mul(&g_inv)?
        .mul(&phi_ext)?
        .mul(&g_pull)?
        .mul(&exp_minus)?;

    // constancy tolerance: everything beyond the scalar term must
    // vanish to working precision (less a small carry margin)
    let prec = ctx.precision as i64 - 4;
    let r = frame.rank;
    let mut matrix = Mat::zero(r, r, &PadicNumber::zero(ctx));
    for i in 0..r {
        for j in 0..r {
            let e = prod.at(i, j);
            for ((a, b), f) in e.terms() {
                for k in 0..f.trunc {
                    let c = f.coeff(k);
                    if (*a, *b, k) == (0, 0, 0) {
                        continue;
                    }
                    if !coeff_vanishes(&c, prec) {
                        return Err(Error::CrystalAxiom(format!(
                            "phi on the nearby cycles is not constant: \
                             entry ({i},{j}) has residual coefficient at \
                             l(x)^{a} l_p^{b} x^{k}"
                        )));
                    }
                }
            }
            if let Some(f) = e.term(0, 0) {
                *matrix.at_mut(i, j) = f.coeff(0);
            }
        }
    }

    // N phi = p phi sigma(N), exactly
    let n0 = frame.n0.clone();
    let n0_sigma = n0.map(|c| c.frobenius());
    let lhs = n0.mul(&matrix)?;
    let rhs = matrix
        .mul(&n0_sigma)?
        .scale(&PadicNumber::from_i64(ctx, ctx.p as i64))?;
    let diff = lhs.sub(&rhs)?;
    for i in 0..r {
        for j in 0..r {
            if !coeff_vanishes(diff.at(i, j), ctx.precision as i64 - 1) {
                return Err(Error::CrystalAxiom(
                    "the relation N phi = p phi sigma(N) fails".into(),
                ));
            }
        }
    }
    Ok(PhiOnPsi {
        matrix,
        n_psi: n0,
    })
}

/// Replace the lift: Phi' = Phi * sigma(T) with T the transport of the
/// connection from newlift(x) to lift(x),
/// T = G(s_old) exp(N0 (Log u_new - Log u_old)) G(s_new)^{-1}.
pub fn change_of_lift(cr: &FCrystal, newlift: &FrobLift) -> Result<FCrystal> {
    let frame = canonical_gauge(&cr.conn)?;
    let ctx = &cr.conn.ctx;
    let trunc = frame.trunc;
    let rho = frame.rho.clone();

    let g_old = frame.gauge.try_map(|f| cr.lift.pullback_fn(f))?;
    let g_new = frame.gauge.try_map(|f| newlift.pullback_fn(f))?;
    let d = newlift.log_unit()?.sub(&cr.lift.log_unit()?)?;
    let exp_mid = frame
        .n0
        .try_map(|c| d.scale(c))?
        .exp_nilpotent(|n| {
            Ok(DiskFunction::constant(
                PadicNumber::from_i64(ctx, n).invert()?,
                trunc,
                rho.clone(),
            ))
        })?;
    let t = g_old.mul(&exp_mid)?.mul(&mat_series_inverse(&g_new)?)?;
    let phi_new = cr.phi.mul(&t.map(|f| f.frobenius()))?;
    FCrystal::new(cr.conn.clone(), phi_new, newlift.clone())
}

/// A horizontal frame usable on a disk larger than the one the gauge
/// series is certified on, via Dwork's trick: iterate the lift until
/// the point lands in the certified disk, then unwind with phi.
#[derive(Clone, Debug)]
pub struct ExtendedFrame {
    pub crystal: FCrystal,
    pub frame: HorizontalFrame,
    pub phi_psi: Mat<PadicNumber>,
    pub steps: u32,
    pub rho: BigRational,
}

/// Extend a frame from the certified disk rho_small = frame.rho out to
/// rho_target, with the smallest M such that the M-th lift iterate
/// carries the target disk into the certified one.
pub fn dwork_extend(
    cr: &FCrystal,
    frame: &HorizontalFrame,
    rho_target: BigRational,
    cap: u32,
) -> Result<ExtendedFrame> {
    if rho_target > frame.rho {
        return Err(Error::precondition(
            "target disk must contain the certified disk",
        ));
    }
    if !rho_target.is_positive() {
        return Err(Error::precondition(
            "Dwork extension requires a punctured open target disk (rho > 0)",
        ));
    }
    let p = BigRational::from_integer(cr.conn.ctx.p.into());
    let mut scaled = rho_target.clone();
    let mut steps = 0u32;
    while scaled < frame.rho {
        if steps >= cap {
            return Err(Error::precondition(format!(
                "no lift iterate within the cap {cap} carries the target \
                 disk into the certified disk"
            )));
        }
        scaled *= &p;
        steps += 1;
    }
    let pp = phi_on_psi_with_frame(cr, frame)?;
    Ok(ExtendedFrame {
        crystal: cr.clone(),
        frame: frame.clone(),
        phi_psi: pp.matrix,
        steps,
        rho: rho_target,
    })
}

impl ExtendedFrame {
    /// H(x) on the target disk:
    /// H(x) = Phi(x) (sigma Phi)(s x) ... (sigma^{M-1} Phi)(s^{M-1} x)
    ///        * (sigma^M H)(s^M x)
    ///        * (sigma^{M-1} phi)^{-1} ... (sigma phi)^{-1} phi^{-1}.
    pub fn evaluate(&self, x: &PadicNumber) -> Result<Mat<KstElement>> {
        let v = match x.valuation() {
            Some(v) => v,
            None => return Err(Error::precondition("frame evaluated at zero")),
        };
        if BigRational::from_integer(v.into()) < self.rho {
            return Err(Error::OutsideRadius);
        }
        if BigRational::from_integer(v.into()) >= self.frame.rho {
            return self.frame.evaluate(x);
        }
        let ctx = &self.frame.ctx;
        let r = self.frame.rank;
        let m = self.steps;
        // the orbit x, s(x), ..., s^M(x)
        let mut pts = vec![x.clone()];
        for _ in 0..m {
            let prev = pts.last().unwrap();
            pts.push(self.crystal.lift.apply_point(prev, &self.rho)?);
        }
        // chain of twisted crystal matrices
        let mut acc = Mat::identity(r, &KstElement::zero(ctx));
        for (k, pt) in pts.iter().take(m as usize).enumerate() {
            let phik = self.crystal.phi.try_map(|f| {
                let g = retag(&disk_frob_iter(f, k as u32), &self.rho);
                Ok(KstElement::constant(g.evaluate(pt)?))
            })?;
            acc = acc.mul(&phik)?;
        }
        // the frame itself, sigma^M-twisted, at the contracted point
        let twisted = HorizontalFrame {
            ctx: ctx.clone(),
            rank: r,
            gauge: self.frame.gauge.map(|f| disk_frob_iter(f, m)),
            n0: self.frame.n0.map(|c| c.frobenius_iter(m)),
            trunc: self.frame.trunc,
            rho: self.frame.rho.clone(),
        };
        acc = acc.mul(&twisted.evaluate(&pts[m as usize])?)?;
        // unwind the constant phi-action
        for k in (0..m).rev() {
            let ck = self.phi_psi.map(|c| c.frobenius_iter(k));
            let ck_inv = ck.inverse()?.map(|c| KstElement::constant(c.clone()));
            acc = acc.mul(&ck_inv)?;
        }
        Ok(acc)
    }
}

fn solve_shifted_bimodule(
    nl: &Mat<PadicNumber>,
    nr: &Mat<PadicNumber>,
    k: i64,
    b: &Mat<PadicNumber>,
) -> Result<Mat<PadicNumber>> {
    let ctx = &b.proto().ctx;
    let inv_k = PadicNumber::from_i64(ctx, k).invert()?;
    let mut acc = Mat::zero(b.rows, b.cols, b.proto());
    let mut term = b.scale(&inv_k)?;
    let bound = 2 * (b.rows + b.cols) + 2;
    for _ in 0..=bound {
        if term.is_zero() {
            return Ok(acc);
        }
        acc = acc.add(&term)?;
        let ad = nl.mul(&term)?.sub(&term.mul(nr)?)?;
        term = ad.scale(&inv_k)?.neg();
    }
    if term.is_zero() {
        Ok(acc)
    } else {
        Err(Error::precondition(
            "shifted two-sided operator did not terminate; residue not nilpotent",
        ))
    }
}

/// Solve the crystal equation degree by degree for a given constant
/// seed Phi_0 (which must satisfy N0 Phi_0 = p Phi_0 sigma(N0)):
/// k Phi_k + N0 Phi_k - p Phi_k sigma(N0)
///   = -(sum_{i+j=k-1} R_i Phi_j - Phi_j S_i)
/// where A = N0 dlog x + R dx and Fr*(sigma A) = p sigma(N0) dlog x + S dx.
pub fn frobenius_structure(
    conn: &LogConnection,
    lift: &FrobLift,
    phi0: Mat<PadicNumber>,
) -> Result<FCrystal> {
    let res = residue(conn)?;
    if !res.nilpotent {
        return Err(Error::NonNilpotentResidue);
    }
    let ctx = &conn.ctx;
    let r = conn.rank;
    let proto = PadicNumber::zero(ctx);
    let n0 = res.n0.clone();
    let n0_sigma = n0.map(|c| c.frobenius());
    let pn0_sigma = n0_sigma.scale(&PadicNumber::from_i64(ctx, ctx.p as i64))?;

    let seed_check = n0.mul(&phi0)?.sub(&phi0.mul(&pn0_sigma)?)?;
    if !seed_check.is_zero() {
        return Err(Error::precondition(
            "seed must intertwine the residues: N0 Phi0 = p Phi0 sigma(N0)",
        ));
    }

    // dx-part of the pulled-back connection
    let u = lift.unit()?;
    let dlog_u = u.derivative().mul(&u.invert()?)?;
    let s_prime = lift.series.derivative();
    let s_mat: Vec<Vec<DiskFunction>> = conn
        .matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| {
                    let twisted = w.regular.frobenius().compose(&lift.series)?.mul(&s_prime)?;
                    dlog_u.scale(&w.residue.frobenius())?.add(&twisted)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let reg_coeff = |i: usize| -> Mat<PadicNumber> {
        Mat::from_fn(r, r, |a, b| conn.matrix[a][b].regular.coeff(i))
    };
    let s_coeff = |i: usize| -> Mat<PadicNumber> {
        Mat::from_fn(r, r, |a, b| s_mat[a][b].coeff(i))
    };

    let mut layers: Vec<Mat<PadicNumber>> = vec![phi0];
    for k in 1..conn.trunc {
        let mut b = Mat::zero(r, r, &proto);
        for i in 0..k {
            let ri = reg_coeff(i);
            if !ri.is_zero() {
                b = b.add(&ri.mul(&layers[k - 1 - i])?)?;
            }
            let si = s_coeff(i);
            if !si.is_zero() {
                b = b.sub(&layers[k - 1 - i].mul(&si)?)?;
            }
        }
        layers.push(solve_shifted_bimodule(&n0, &pn0_sigma, k as i64, &b.neg())?);
    }
    let phi = Mat::from_fn(r, r, |i, j| {
        let coeffs: Vec<PadicNumber> = layers.iter().map(|l| l.at(i, j).clone()).collect();
        DiskFunction::from_coeffs(ctx, coeffs, conn.trunc, conn.rho.clone())
    });
    FCrystal::new(conn.clone(), phi, lift.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ctx() -> Arc<PadicContext> {
        PadicContext::new(5, 12).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn kummer_conn(ctx: &Arc<PadicContext>, rho: BigRational) -> LogConnection {
        let trunc = ctx.precision as usize + 4;
        let mut matrix = vec![
            vec![LogOneForm::zero(ctx, trunc, rho.clone()); 2],
            vec![LogOneForm::zero(ctx, trunc, rho.clone()); 2],
        ];
        matrix[0][1].residue = PadicNumber::one(ctx);
        LogConnection::new(ctx, matrix).unwrap()
    }

    fn kummer_crystal(ctx: &Arc<PadicContext>, rho: BigRational) -> FCrystal {
        let conn = kummer_conn(ctx, rho.clone());
        let trunc = conn.trunc;
        let p = PadicNumber::from_i64(ctx, ctx.p as i64);
        let phi = Mat::from_rows(vec![
            vec![
                DiskFunction::one(ctx, trunc, rho.clone()),
                DiskFunction::zero(ctx, trunc, rho.clone()),
            ],
            vec![
                DiskFunction::zero(ctx, trunc, rho.clone()),
                DiskFunction::constant(p, trunc, rho.clone()),
            ],
        ]);
        let lift = FrobLift::standard(ctx, trunc, rho);
        FCrystal::new(conn, phi, lift).unwrap()
    }

    #[test]
    fn lift_rejects_wrong_order() {
        let ctx = ctx();
        let bad = DiskFunction::x(&ctx, 16, rat(1, 1));
        assert!(FrobLift::from_series(bad).is_err());
    }

    #[test]
    fn lift_rejects_unit_not_one_mod_p() {
        let ctx = ctx();
        // x^5 * (1 + x): unit congruence fails
        let mut coeffs = vec![PadicNumber::zero(&ctx); 7];
        coeffs[5] = PadicNumber::one(&ctx);
        coeffs[6] = PadicNumber::one(&ctx);
        let s = DiskFunction::from_coeffs(&ctx, coeffs, 16, rat(1, 1));
        assert!(FrobLift::from_series(s).is_err());
    }

    #[test]
    fn standard_lift_log_unit_vanishes() {
        let ctx = ctx();
        let lift = FrobLift::standard(&ctx, 16, rat(1, 1));
        assert!(lift.log_unit().unwrap().is_zero());
    }

    #[test]
    fn trivial_crystal_deficit_zero() {
        let ctx = ctx();
        let trunc = 16;
        let conn = LogConnection::trivial(&ctx, 2, trunc, rat(1, 1));
        let phi = Mat::identity(2, &DiskFunction::zero(&ctx, trunc, rat(1, 1)));
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let cr = FCrystal::new(conn, phi, lift).unwrap();
        assert_eq!(check_horizontality(&cr).unwrap(), 0);
    }

    #[test]
    fn kummer_crystal_deficit_zero() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        assert_eq!(check_horizontality(&cr).unwrap(), 0);
    }

    #[test]
    fn kummer_identity_phi_violates_scaling() {
        let ctx = ctx();
        let conn = kummer_conn(&ctx, rat(1, 1));
        let trunc = conn.trunc;
        let phi = Mat::identity(2, &DiskFunction::zero(&ctx, trunc, rat(1, 1)));
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let cr = FCrystal::new(conn, phi, lift).unwrap();
        assert!(check_horizontality(&cr).unwrap() > 0);
    }

    #[test]
    fn phi_on_psi_trivial_is_identity() {
        let ctx = ctx();
        let trunc = 16;
        let conn = LogConnection::trivial(&ctx, 3, trunc, rat(1, 1));
        let phi = Mat::identity(3, &DiskFunction::zero(&ctx, trunc, rat(1, 1)));
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let cr = FCrystal::new(conn, phi, lift).unwrap();
        let pp = phi_on_psi(&cr).unwrap();
        let id = Mat::identity(3, &PadicNumber::zero(&ctx));
        assert!(pp.matrix.sub(&id).unwrap().is_zero());
    }

    #[test]
    fn phi_on_psi_kummer_is_diag_1_p() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        let pp = phi_on_psi(&cr).unwrap();
        let p = PadicNumber::from_i64(&ctx, 5);
        assert!(pp.matrix.at(0, 0).sub(&PadicNumber::one(&ctx)).unwrap().is_zero());
        assert!(pp.matrix.at(1, 1).sub(&p).unwrap().is_zero());
        assert!(pp.matrix.at(0, 1).is_zero());
        assert!(pp.matrix.at(1, 0).is_zero());
        // N phi(e1) = p e0 = p phi N(e1)
        let n = &pp.n_psi;
        assert!(n.at(0, 1).sub(&PadicNumber::one(&ctx)).unwrap().is_zero());
        let lhs = n.mul(&pp.matrix).unwrap();
        let rhs = pp.matrix.mul(n).unwrap().scale(&p).unwrap();
        assert!(lhs.sub(&rhs).unwrap().is_zero());
    }

    #[test]
    fn phi_on_psi_twist_is_linear() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        let c = PadicNumber::from_i64(&ctx, 3);
        let trunc = cr.conn.trunc;
        let scaled = cr
            .phi
            .scale(&DiskFunction::constant(c.clone(), trunc, rat(1, 1)))
            .unwrap();
        let cr2 = FCrystal::new(cr.conn.clone(), scaled, cr.lift.clone()).unwrap();
        let pp = phi_on_psi(&cr).unwrap();
        let pp2 = phi_on_psi(&cr2).unwrap();
        let expect = pp.matrix.scale(&c).unwrap();
        assert!(pp2.matrix.sub(&expect).unwrap().is_zero());
    }

    #[test]
    fn change_of_lift_same_lift_is_identity() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        let cr2 = change_of_lift(&cr, &cr.lift.clone()).unwrap();
        let prec = ctx.precision as i64 - 2;
        for i in 0..2 {
            for j in 0..2 {
                assert!(cr.phi.at(i, j).eq_mod(cr2.phi.at(i, j), prec));
            }
        }
    }

    #[test]
    fn change_of_lift_trivial_connection_fixes_phi() {
        let ctx = ctx();
        let trunc = 16;
        let conn = LogConnection::trivial(&ctx, 2, trunc, rat(1, 1));
        let two = PadicNumber::from_i64(&ctx, 2);
        let phi = Mat::from_rows(vec![
            vec![
                DiskFunction::constant(two, trunc, rat(1, 1)),
                DiskFunction::zero(&ctx, trunc, rat(1, 1)),
            ],
            vec![
                DiskFunction::zero(&ctx, trunc, rat(1, 1)),
                DiskFunction::one(&ctx, trunc, rat(1, 1)),
            ],
        ]);
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let cr = FCrystal::new(conn, phi, lift).unwrap();
        // x^5 (1 + 5x)
        let mut coeffs = vec![PadicNumber::zero(&ctx); 7];
        coeffs[5] = PadicNumber::one(&ctx);
        coeffs[6] = PadicNumber::from_i64(&ctx, 5);
        let newlift =
            FrobLift::from_series(DiskFunction::from_coeffs(&ctx, coeffs, trunc + 5, rat(1, 1)))
                .unwrap();
        let cr2 = change_of_lift(&cr, &newlift).unwrap();
        let prec = ctx.precision as i64 - 2;
        for i in 0..2 {
            for j in 0..2 {
                assert!(cr.phi.at(i, j).eq_mod(cr2.phi.at(i, j), prec));
            }
        }
    }

    #[test]
    fn phi_on_psi_independent_of_lift() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        let trunc = cr.conn.trunc;
        let mut coeffs = vec![PadicNumber::zero(&ctx); 7];
        coeffs[5] = PadicNumber::one(&ctx);
        coeffs[6] = PadicNumber::from_i64(&ctx, 5);
        let newlift =
            FrobLift::from_series(DiskFunction::from_coeffs(&ctx, coeffs, trunc + 5, rat(1, 1)))
                .unwrap();
        let cr2 = change_of_lift(&cr, &newlift).unwrap();
        assert_eq!(check_horizontality(&cr2).unwrap(), 0);
        let pp = phi_on_psi(&cr).unwrap();
        let pp2 = phi_on_psi(&cr2).unwrap();
        let prec = ctx.precision as i64 - 4;
        for i in 0..2 {
            for j in 0..2 {
                assert!(pp.matrix.at(i, j).eq_mod(pp2.matrix.at(i, j), prec));
            }
        }
    }

    #[test]
    fn solver_reproduces_kummer_crystal() {
        let ctx = ctx();
        let conn = kummer_conn(&ctx, rat(1, 1));
        let trunc = conn.trunc;
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let mut phi0 = Mat::identity(2, &PadicNumber::zero(&ctx));
        *phi0.at_mut(1, 1) = PadicNumber::from_i64(&ctx, 5);
        let cr = frobenius_structure(&conn, &lift, phi0).unwrap();
        assert_eq!(check_horizontality(&cr).unwrap(), 0);
        let expect = kummer_crystal(&ctx, rat(1, 1));
        let prec = ctx.precision as i64 - 2;
        for i in 0..2 {
            for j in 0..2 {
                assert!(cr.phi.at(i, j).eq_mod(expect.phi.at(i, j), prec));
            }
        }
    }

    #[test]
    fn solver_rejects_bad_seed() {
        let ctx = ctx();
        let conn = kummer_conn(&ctx, rat(1, 1));
        let lift = FrobLift::standard(&ctx, conn.trunc, rat(1, 1));
        let phi0 = Mat::identity(2, &PadicNumber::zero(&ctx));
        assert!(frobenius_structure(&conn, &lift, phi0).is_err());
    }

    #[test]
    fn solver_handles_regular_part() {
        // rank-3 chain with one regular letter: nabla e1 = e0 (-dx/(1-x)),
        // nabla e2 = e1 dlog x (polylogarithm shape at the origin)
        let ctx = ctx();
        let trunc = ctx.precision as usize + 4;
        let rho = rat(1, 1);
        let mut matrix = vec![vec![LogOneForm::zero(&ctx, trunc, rho.clone()); 3]; 3];
        // d log(1-x) = -1/(1-x) dx = -(1 + x + x^2 + ...) dx
        let geom: Vec<PadicNumber> = (0..trunc)
            .map(|_| PadicNumber::from_i64(&ctx, -1))
            .collect();
        matrix[0][1].regular = DiskFunction::from_coeffs(&ctx, geom, trunc, rho.clone());
        matrix[1][2].residue = PadicNumber::one(&ctx);
        let conn = LogConnection::new(&ctx, matrix).unwrap();
        let lift = FrobLift::standard(&ctx, trunc, rho.clone());
        let mut phi0 = Mat::identity(3, &PadicNumber::zero(&ctx));
        *phi0.at_mut(1, 1) = PadicNumber::from_i64(&ctx, 5);
        *phi0.at_mut(2, 2) = PadicNumber::from_i64(&ctx, 25);
        let cr = frobenius_structure(&conn, &lift, phi0).unwrap();
        assert_eq!(check_horizontality(&cr).unwrap(), 0);
        let pp = phi_on_psi(&cr).unwrap();
        // diagonal action with the motivic weights, N-relation built in
        assert!(pp.matrix.at(1, 1).sub(&PadicNumber::from_i64(&ctx, 5)).unwrap().is_zero());
        assert!(pp
            .matrix
            .at(2, 2)
            .sub(&PadicNumber::from_i64(&ctx, 25))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn semilinear_pullback_applies_sigma() {
        let ctx = PadicContext::unramified(5, 10, 2).unwrap();
        let trunc = 16;
        let lift = FrobLift::standard(&ctx, trunc, rat(1, 1));
        let t = PadicNumber::generator(&ctx);
        let w = LogOneForm {
            residue: t.clone(),
            regular: DiskFunction::zero(&ctx, trunc, rat(1, 1)),
        };
        let pulled = lift.pullback_form(&w).unwrap();
        let expect = t.frobenius().scale_i64(5);
        assert!(pulled.residue.sub(&expect).unwrap().is_zero());
        assert!(!pulled.residue.sub(&t.scale_i64(5)).unwrap().is_zero());
    }

    #[test]
    fn dwork_same_radius_matches_frame() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(1, 1));
        let frame = canonical_gauge(&cr.conn).unwrap();
        let ext = dwork_extend(&cr, &frame, rat(1, 1), ctx.precision).unwrap();
        assert_eq!(ext.steps, 0);
        let x = PadicNumber::from_i64(&ctx, 10);
        let a = frame.evaluate(&x).unwrap();
        let b = ext.evaluate(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(a.at(i, j).eq_mod(b.at(i, j), ctx.precision as i64 - 2));
            }
        }
    }

    #[test]
    fn dwork_extends_kummer_log_to_larger_disk() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(3, 1));
        let frame = canonical_gauge(&cr.conn).unwrap();
        let x = PadicNumber::from_i64(&ctx, 10); // valuation 1 < 3
        assert!(matches!(frame.evaluate(&x), Err(Error::OutsideRadius)));
        let ext = dwork_extend(&cr, &frame, rat(1, 1), ctx.precision).unwrap();
        assert_eq!(ext.steps, 1);
        let h = ext.evaluate(&x).unwrap();
        // entry (0,1) is -Log(10); compare against the Iwasawa-reduced
        // series Log 2 = (1/4) sum (1 - 2^4)^i / i together with l_p
        let mut log2 = PadicNumber::zero(&ctx);
        let w = PadicNumber::from_i64(&ctx, -15);
        let mut pow = w.clone();
        for i in 1..=40u64 {
            let inv = PadicNumber::from_i64(&ctx, i as i64).invert().unwrap();
            log2 = log2.add(&pow.mul(&inv).unwrap()).unwrap();
            pow = pow.mul(&w).unwrap();
        }
        let quarter = PadicNumber::from_i64(&ctx, 4).invert().unwrap();
        log2 = log2.mul(&quarter).unwrap();
        let entry = h.at(0, 1);
        let prec = ctx.precision as i64 - 3;
        // constant part: -Log 2; l_p part: -1
        assert!(entry.coeff(0).eq_mod(&log2.neg(), prec));
        assert!(entry
            .coeff(1)
            .eq_mod(&PadicNumber::from_i64(&ctx, -1), prec));
        // and diagonal entries are 1
        assert!(h.at(0, 0).coeff(0).eq_mod(&PadicNumber::one(&ctx), prec));
        assert!(h.at(1, 1).coeff(0).eq_mod(&PadicNumber::one(&ctx), prec));
    }

    #[test]
    fn dwork_cap_exceeded() {
        let ctx = ctx();
        let cr = kummer_crystal(&ctx, rat(3, 1));
        let frame = canonical_gauge(&cr.conn).unwrap();
        let tiny = rat(1, 1_000_000_000_000);
        assert!(dwork_extend(&cr, &frame, tiny, ctx.precision).is_err());
    }
}
