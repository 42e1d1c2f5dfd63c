//! Unipotent logarithmic connections on the punctured disk: residues,
//! the canonical gauge normal form, unipotent nearby cycles, and local
//! parallel transport with values in K_st.
//!
//! A connection is d + A with A a matrix of logarithmic 1-forms
//! A = N0 dlog x + R(x) dx. When N0 is nilpotent there is a unique
//! gauge G with G(0) = I carrying d + A to the model d + N0 dlog x;
//! the frame Hb = G exp(N0 l(x)) is horizontal for the branch sending
//! p to -l_p, and transport between points is Hb(x0) Hb(x1)^{-1}.

use std::sync::Arc;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::formexpr::ConnectionFile;
use crate::logext::{LogExtElement, LogExtForm};
use crate::logring::{plog, KstElement};
use crate::mat::Mat;
use crate::padic::{PadicContext, PadicNumber};
use crate::series::{DiskFunction, LogOneForm};

#[derive(Clone, Debug)]
pub struct LogConnection {
    pub ctx: Arc<PadicContext>,
    pub rank: usize,
    pub matrix: Vec<Vec<LogOneForm>>,
    pub trunc: usize,
    pub rho: BigRational,
}

impl LogConnection {
    pub fn new(ctx: &Arc<PadicContext>, matrix: Vec<Vec<LogOneForm>>) -> Result<Self> {
        let rank = matrix.len();
        if rank == 0 || matrix.iter().any(|r| r.len() != rank) {
            return Err(Error::precondition("connection matrix must be square"));
        }
        let trunc = matrix
            .iter()
            .flatten()
            .map(|w| w.regular.trunc)
            .min()
            .unwrap();
        let rho = matrix
            .iter()
            .flatten()
            .map(|w| w.regular.rho.clone())
            .max()
            .unwrap();
        Ok(LogConnection {
            ctx: ctx.clone(),
            rank,
            matrix,
            trunc,
            rho,
        })
    }

    /// Expand a parsed connection file at the rational point c.
    pub fn expand_at(
        file: &ConnectionFile,
        c: &BigRational,
        ctx: &Arc<PadicContext>,
        trunc: usize,
        rho: BigRational,
    ) -> Result<Self> {
        let mut matrix = Vec::with_capacity(file.rank);
        for row in &file.matrix {
            let mut out_row = Vec::with_capacity(file.rank);
            for entry in row {
                out_row.push(entry.to_one_form(c, ctx, trunc, rho.clone())?);
            }
            matrix.push(out_row);
        }
        Self::new(ctx, matrix)
    }

    /// The zero connection of the given rank.
    pub fn trivial(ctx: &Arc<PadicContext>, rank: usize, trunc: usize, rho: BigRational) -> Self {
        let matrix = (0..rank)
            .map(|_| {
                (0..rank)
                    .map(|_| LogOneForm::zero(ctx, trunc, rho.clone()))
                    .collect()
            })
            .collect();
        LogConnection {
            ctx: ctx.clone(),
            rank,
            matrix,
            trunc,
            rho,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResidueData {
    pub n0: Mat<PadicNumber>,
    pub nilpotent: bool,
    pub nilpotency_index: Option<u32>,
}

/// Residue at the origin: the constant polar coefficients.
pub fn residue(conn: &LogConnection) -> Result<ResidueData> {
    let n0 = Mat::from_fn(conn.rank, conn.rank, |i, j| {
        conn.matrix[i][j].residue.clone()
    });
    let idx = n0.nilpotency_index()?;
    Ok(ResidueData {
        nilpotent: idx.is_some(),
        nilpotency_index: idx,
        n0,
    })
}

#[derive(Clone, Debug)]
pub struct HorizontalFrame {
    pub ctx: Arc<PadicContext>,
    pub rank: usize,
    /// G with G(0) = I conjugating the connection to d + N0 dlog x
    pub gauge: Mat<DiskFunction>,
    pub n0: Mat<PadicNumber>,
    pub trunc: usize,
    pub rho: BigRational,
}

/// The operator X -> (k + ad_{N0}) X inverted by the finite Neumann
/// series; ad_{N0} is nilpotent when N0 is.
fn solve_shifted_ad(
    n0: &Mat<PadicNumber>,
    k: i64,
    b: &Mat<PadicNumber>,
) -> Result<Mat<PadicNumber>> {
    let ctx = &b.proto().ctx;
    let inv_k = PadicNumber::from_i64(ctx, k).invert()?;
    let mut acc = Mat::zero(b.rows, b.cols, b.proto());
    let mut term = b.scale(&inv_k)?;
    let bound = 2 * b.rows + 1;
    for _ in 0..=bound {
        if term.is_zero() {
            break;
        }
        acc = acc.add(&term)?;
        // next term: -(1/k) ad(term)
        let ad = n0.mul(&term)?.sub(&term.mul(n0)?)?;
        term = ad.scale(&inv_k)?.neg();
    }
    Ok(acc)
}

/// The unique gauge of Lemma-form: G(0) = I, conjugating d + A into the
/// model d + N0 dlog x. Degree k of x G' + N0 G + x R G = G N0 gives
/// (k + ad_{N0}) G_k = -(R G)_{k-1}.
pub fn canonical_gauge(conn: &LogConnection) -> Result<HorizontalFrame> {
    let res = residue(conn)?;
    if !res.nilpotent {
        return Err(Error::NonNilpotentResidue);
    }
    if conn.trunc < conn.ctx.precision as usize {
        return Err(Error::PrecisionExhausted(format!(
            "truncation order {} is below the working precision {}",
            conn.trunc, conn.ctx.precision
        )));
    }
    let r = conn.rank;
    let ctx = &conn.ctx;
    let proto = PadicNumber::zero(ctx);
    let n0 = res.n0.clone();
    // R_i: degree-i coefficient matrices of the regular part
    let reg_coeff = |i: usize| -> Mat<PadicNumber> {
        Mat::from_fn(r, r, |a, b| conn.matrix[a][b].regular.coeff(i))
    };
    let mut layers: Vec<Mat<PadicNumber>> = Vec::with_capacity(conn.trunc);
    layers.push(Mat::identity(r, &proto));
    for k in 1..conn.trunc {
        // B = -(sum_{i+j = k-1} R_i G_j)
        let mut b = Mat::zero(r, r, &proto);
        for i in 0..k {
            let ri = reg_coeff(i);
            if ri.is_zero() {
                continue;
            }
            b = b.add(&ri.mul(&layers[k - 1 - i])?)?;
        }
        let gk = solve_shifted_ad(&n0, k as i64, &b.neg())?;
        layers.push(gk);
    }
    let gauge = Mat::from_fn(r, r, |i, j| {
        let coeffs: Vec<PadicNumber> = layers.iter().map(|g| g.at(i, j).clone()).collect();
        DiskFunction::from_coeffs(ctx, coeffs, conn.trunc, conn.rho.clone())
    });
    Ok(HorizontalFrame {
        ctx: ctx.clone(),
        rank: r,
        gauge,
        n0,
        trunc: conn.trunc,
        rho: conn.rho.clone(),
    })
}

impl HorizontalFrame {
    /// exp(-N0 l(x)) as a matrix over the log extension.
    pub fn exp_factor(&self) -> Result<Mat<LogExtElement>> {
        let lx = LogExtElement::lx(&self.ctx, self.trunc, self.rho.clone());
        let m = self.n0.try_map(|c| {
            let e = LogExtElement::from_disk(DiskFunction::constant(
                c.neg(),
                self.trunc,
                self.rho.clone(),
            ));
            e.mul(&lx)
        })?;
        let ctx = self.ctx.clone();
        m.exp_nilpotent(|n| {
            let inv = PadicNumber::from_i64(&ctx, n).invert()?;
            Ok(LogExtElement::from_disk(DiskFunction::constant(
                inv,
                self.trunc,
                self.rho.clone(),
            )))
        })
    }

    /// The full horizontal frame H = G exp(-N0 l(x)).
    pub fn h_matrix(&self) -> Result<Mat<LogExtElement>> {
        let g = self
            .gauge
            .map(|f| LogExtElement::from_disk(f.clone()));
        g.mul(&self.exp_factor()?)
    }

    /// H evaluated at a nonzero point, as a matrix over K_st:
    /// G(x) exp(-N0 Log x).
    pub fn evaluate(&self, x: &PadicNumber) -> Result<Mat<KstElement>> {
        let gx = self.gauge.try_map(|f| {
            let v = f.evaluate(x)?;
            Ok(KstElement::constant(v))
        })?;
        let e = self.exp_log_factor(x, 1)?;
        gx.mul(&e)
    }

    /// exp(sign * N0 Log x) over K_st.
    fn exp_log_factor(&self, x: &PadicNumber, sign: i64) -> Result<Mat<KstElement>> {
        let lg = plog(x)?.scale_i64(-sign);
        // entries -sign * N0 * Log x, then exp; sign folded so that
        // sign=1 gives exp(-N0 Log x)
        let m = self.n0.try_map(|c| lg.scale(c))?;
        let ctx = self.ctx.clone();
        m.exp_nilpotent(|n| {
            let inv = PadicNumber::from_i64(&ctx, n).invert()?;
            Ok(KstElement::constant(inv))
        })
    }

    /// Parallel transport T(x0 -> x1) = G(x0) exp(N0 (Log x0 - Log x1)) G(x1)^{-1}.
    ///
    /// This is Hb(x0) Hb(x1)^{-1} for the frame Hb = G exp(N0 Log x), which
    /// is horizontal for the branch of the classical logarithm sending p to
    /// -l_p.  Transport is therefore the inverse of the classical x0 -> x1
    /// propagator; the flip makes the Kummer entry come out as
    /// Log x0 - Log x1 while the groupoid law still composes covariantly.
    pub fn transport(&self, x0: &PadicNumber, x1: &PadicNumber) -> Result<Mat<KstElement>> {
        let g0 = self.gauge.try_map(|f| {
            let v = f.evaluate(x0)?;
            Ok(KstElement::constant(v))
        })?;
        let g1 = self.gauge.try_map(|f| f.evaluate(x1))?;
        let g1_inv = g1.inverse()?.map(|v| KstElement::constant(v.clone()));
        let c = plog(x0)?.sub(&plog(x1)?)?;
        let m = self.n0.try_map(|v| c.scale(v))?;
        let ctx = self.ctx.clone();
        let e = m.exp_nilpotent(|n| {
            let inv = PadicNumber::from_i64(&ctx, n).invert()?;
            Ok(KstElement::constant(inv))
        })?;
        g0.mul(&e)?.mul(&g1_inv)
    }
}

/// w * v for a 1-form coefficient and a log-extension element.
pub fn one_form_times_elem(w: &LogOneForm, v: &LogExtElement) -> Result<LogExtForm> {
    let mut out = LogExtForm::zero(&v.ctx);
    for ((a, b), f) in v.terms() {
        out.add_term(*a, *b, w.mul_fn(f)?)?;
    }
    Ok(out)
}

/// Residual of horizontality d(H) + A H, for verification. Zero (to
/// truncation and precision) iff the frame is horizontal.
pub fn horizontality_residual(
    conn: &LogConnection,
    h: &Mat<LogExtElement>,
) -> Result<Vec<LogExtForm>> {
    let r = conn.rank;
    let mut out = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            let mut acc = h.at(i, j).d()?;
            for k in 0..r {
                let t = one_form_times_elem(&conn.matrix[i][k], h.at(k, j))?;
                acc = acc.add(&t)?;
            }
            out.push(acc);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PsiModule {
    pub dim: usize,
    pub n_psi: Mat<PadicNumber>,
    pub phi: Option<Mat<PadicNumber>>,
}

/// Unipotent nearby cycles: the frame H and the induced monodromy
/// operator on its coordinates. Full dimension iff the connection is
/// unipotent.
pub fn psi_un(conn: &LogConnection) -> Result<(PsiModule, HorizontalFrame)> {
    let frame = canonical_gauge(conn)?;
    let module = PsiModule {
        dim: conn.rank,
        n_psi: frame.n0.clone(),
        phi: None,
    };
    Ok((module, frame))
}

/// Parallel transport for a local connection. Points must be nonzero
/// and inside the disk.
pub fn local_transport(
    conn: &LogConnection,
    x0: &PadicNumber,
    x1: &PadicNumber,
) -> Result<Mat<KstElement>> {
    if x0.is_zero() || x1.is_zero() {
        return Err(Error::precondition("transport endpoint at the puncture"));
    }
    let frame = canonical_gauge(conn)?;
    frame.transport(x0, x1)
}

/// Unipotence test with the minimal filtration level (the nilpotency
/// index of the residue).
pub fn is_unipotent(conn: &LogConnection) -> Result<(bool, u32)> {
    let res = residue(conn)?;
    match res.nilpotency_index {
        Some(level) => Ok((true, level)),
        None => Ok((false, 0)),
    }
}
