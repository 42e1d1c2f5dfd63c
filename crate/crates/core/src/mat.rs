//! Small dense matrix layer over the rings used in this crate.
//!
//! Element types carry their own context, so constructors take a
//! prototype element to manufacture zeros and ones of the right kind.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::logring::KstElement;
use crate::padic::PadicNumber;
use crate::series::DiskFunction;

pub trait RingElem: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add_e(&self, other: &Self) -> Result<Self>;
    fn neg_e(&self) -> Self;
    fn mul_e(&self, other: &Self) -> Result<Self>;
    fn is_zero_e(&self) -> bool;

    fn sub_e(&self, other: &Self) -> Result<Self> {
        self.add_e(&other.neg_e())
    }
}

pub trait FieldElem: RingElem {
    fn inv_e(&self) -> Result<Self>;
    /// Pivot preference: lower is better; None means unusable (zero).
    fn pivot_score(&self) -> Option<i64>;
    fn from_i64_like(&self, n: i64) -> Self;
}

impl RingElem for PadicNumber {
    fn zero_like(&self) -> Self {
        PadicNumber::zero(&self.ctx)
    }
    fn one_like(&self) -> Self {
        PadicNumber::one(&self.ctx)
    }
    fn add_e(&self, other: &Self) -> Result<Self> {
        self.add(other)
    }
    fn neg_e(&self) -> Self {
        self.neg()
    }
    fn mul_e(&self, other: &Self) -> Result<Self> {
        self.mul(other)
    }
    fn is_zero_e(&self) -> bool {
        self.is_zero()
    }
}

impl FieldElem for PadicNumber {
    fn inv_e(&self) -> Result<Self> {
        self.invert()
    }
    fn pivot_score(&self) -> Option<i64> {
        self.valuation()
    }
    fn from_i64_like(&self, n: i64) -> Self {
        PadicNumber::from_i64(&self.ctx, n)
    }
}

impl RingElem for BigRational {
    fn zero_like(&self) -> Self {
        BigRational::zero()
    }
    fn one_like(&self) -> Self {
        BigRational::one()
    }
    fn add_e(&self, other: &Self) -> Result<Self> {
        Ok(self + other)
    }
    fn neg_e(&self) -> Self {
        -self
    }
    fn mul_e(&self, other: &Self) -> Result<Self> {
        Ok(self * other)
    }
    fn is_zero_e(&self) -> bool {
        self.is_zero()
    }
}

impl FieldElem for BigRational {
    fn inv_e(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.recip())
    }
    fn pivot_score(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            // prefer small entries to keep numbers tame
            Some(self.numer().abs().bits() as i64 + self.denom().bits() as i64)
        }
    }
    fn from_i64_like(&self, n: i64) -> Self {
        BigRational::from_integer(n.into())
    }
}

impl RingElem for KstElement {
    fn zero_like(&self) -> Self {
        KstElement::zero(&self.ctx)
    }
    fn one_like(&self) -> Self {
        KstElement::constant(PadicNumber::one(&self.ctx))
    }
    fn add_e(&self, other: &Self) -> Result<Self> {
        self.add(other)
    }
    fn neg_e(&self) -> Self {
        self.neg()
    }
    fn mul_e(&self, other: &Self) -> Result<Self> {
        self.mul(other)
    }
    fn is_zero_e(&self) -> bool {
        self.is_zero()
    }
}

impl RingElem for DiskFunction {
    fn zero_like(&self) -> Self {
        DiskFunction::zero(&self.ctx, self.trunc, self.rho.clone())
    }
    fn one_like(&self) -> Self {
        DiskFunction::one(&self.ctx, self.trunc, self.rho.clone())
    }
    fn add_e(&self, other: &Self) -> Result<Self> {
        self.add(other)
    }
    fn neg_e(&self) -> Self {
        self.neg()
    }
    fn mul_e(&self, other: &Self) -> Result<Self> {
        self.mul(other)
    }
    fn is_zero_e(&self) -> bool {
        self.is_zero()
    }
}

impl RingElem for crate::logext::LogExtElement {
    fn zero_like(&self) -> Self {
        crate::logext::LogExtElement::zero(&self.ctx)
    }
    fn one_like(&self) -> Self {
        crate::logext::LogExtElement::from_disk(DiskFunction::constant(
            PadicNumber::one(&self.ctx),
            1,
            BigRational::zero(),
        ))
    }
    fn add_e(&self, other: &Self) -> Result<Self> {
        self.add(other)
    }
    fn neg_e(&self) -> Self {
        self.neg()
    }
    fn mul_e(&self, other: &Self) -> Result<Self> {
        self.mul(other)
    }
    fn is_zero_e(&self) -> bool {
        self.is_zero()
    }
}

#[derive(Clone, Debug)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: RingElem> Mat<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows_vec: Vec<Vec<T>>) -> Self {
        let rows = rows_vec.len();
        let cols = rows_vec.first().map(|r| r.len()).unwrap_or(0);
        assert!(rows_vec.iter().all(|r| r.len() == cols));
        Mat {
            rows,
            cols,
            data: rows_vec.into_iter().flatten().collect(),
        }
    }

    pub fn zero(rows: usize, cols: usize, proto: &T) -> Self {
        Self::from_fn(rows, cols, |_, _| proto.zero_like())
    }

    pub fn identity(n: usize, proto: &T) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                proto.one_like()
            } else {
                proto.zero_like()
            }
        })
    }

    pub fn at(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn proto(&self) -> &T {
        &self.data[0]
    }

    pub fn map<U: RingElem>(&self, mut f: impl FnMut(&T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(x)).collect(),
        }
    }

    pub fn try_map<U: RingElem>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<Mat<U>> {
        let mut data = Vec::with_capacity(self.data.len());
        for x in &self.data {
            data.push(f(x)?);
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut data = Vec::with_capacity(self.data.len());
        for (a, b) in self.data.iter().zip(&other.data) {
            data.push(a.add_e(b)?);
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.neg_e()).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        assert_eq!(self.cols, other.rows);
        let proto = self.proto();
        let mut out = Self::zero(self.rows, other.cols, proto);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero_e() {
                    continue;
                }
                for j in 0..other.cols {
                    let t = a.mul_e(other.at(k, j))?;
                    let cur = out.at(i, j).add_e(&t)?;
                    out.set(i, j, cur);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &T) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for x in &self.data {
            data.push(x.mul_e(c)?);
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero_e())
    }

    pub fn pow(&self, mut e: u32) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let mut result = Self::identity(self.rows, self.proto());
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

    /// Smallest k <= rows with self^k = 0, if any.
    pub fn nilpotency_index(&self) -> Result<Option<u32>> {
        assert_eq!(self.rows, self.cols);
        let mut acc = self.clone();
        for k in 1..=self.rows as u32 {
            if acc.is_zero() {
                return Ok(Some(k));
            }
            if k < self.rows as u32 {
                acc = acc.mul(self)?;
            }
        }
        Ok(if acc.is_zero() {
            Some(self.rows as u32)
        } else {
            None
        })
    }

    /// exp of a nilpotent matrix (finite sum).
    pub fn exp_nilpotent(&self, scalar_inverse: impl Fn(i64) -> Result<T>) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows as i64;
        let mut out = Self::identity(self.rows, self.proto());
        let mut term = Self::identity(self.rows, self.proto());
        let mut fact: i64 = 1;
        for k in 1..=n {
            term = term.mul(self)?;
            if term.is_zero() {
                break;
            }
            fact *= k;
            let c = scalar_inverse(fact)?;
            out = out.add(&term.scale(&c)?)?;
        }
        Ok(out)
    }

    /// Inverse of a unipotent matrix I + N via the Neumann series.
    pub fn unipotent_inverse(&self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let id = Self::identity(self.rows, self.proto());
        let n = self.sub(&id)?;
        if n.nilpotency_index()?.is_none() {
            return Err(Error::precondition("matrix is not unipotent"));
        }
        let mut out = id.clone();
        let mut pw = n.clone();
        let mut sign = -1i64;
        while !pw.is_zero() {
            let signed = if sign < 0 { pw.neg() } else { pw.clone() };
            out = out.add(&signed)?;
            pw = pw.mul(&n)?;
            sign = -sign;
        }
        Ok(out)
    }
}

impl<T: FieldElem> Mat<T> {
    /// Solve A X = B by Gaussian elimination with pivot-score pivoting.
    pub fn solve(&self, b: &Self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, b.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut rhs = b.clone();
        for col in 0..n {
            // best pivot in rows col..
            let mut best: Option<(usize, i64)> = None;
            for r in col..n {
                if let Some(s) = a.at(r, col).pivot_score() {
                    if best.map(|(_, bs)| s < bs).unwrap_or(true) {
                        best = Some((r, s));
                    }
                }
            }
            let (prow, _) = best.ok_or_else(|| {
                Error::Uniqueness("singular matrix (to working precision)".into())
            })?;
            if prow != col {
                for j in 0..n {
                    let tmp = a.at(prow, j).clone();
                    let tmp2 = a.at(col, j).clone();
                    a.set(prow, j, tmp2);
                    a.set(col, j, tmp);
                }
                for j in 0..rhs.cols {
                    let tmp = rhs.at(prow, j).clone();
                    let tmp2 = rhs.at(col, j).clone();
                    rhs.set(prow, j, tmp2);
                    rhs.set(col, j, tmp);
                }
            }
            let pinv = a.at(col, col).inv_e()?;
            for j in 0..n {
                let v = a.at(col, j).mul_e(&pinv)?;
                a.set(col, j, v);
            }
            for j in 0..rhs.cols {
                let v = rhs.at(col, j).mul_e(&pinv)?;
                rhs.set(col, j, v);
            }
            for r in 0..n {
                if r == col || a.at(r, col).is_zero_e() {
                    continue;
                }
                let factor = a.at(r, col).clone();
                for j in 0..n {
                    let v = a.at(r, j).sub_e(&factor.mul_e(a.at(col, j))?)?;
                    a.set(r, j, v);
                }
                for j in 0..rhs.cols {
                    let v = rhs.at(r, j).sub_e(&factor.mul_e(rhs.at(col, j))?)?;
                    rhs.set(r, j, v);
                }
            }
        }
        Ok(rhs)
    }

    pub fn inverse(&self) -> Result<Self> {
        let id = Self::identity(self.rows, self.proto());
        self.solve(&id)
    }

    /// Basis of the right kernel (columns), by row reduction.
    pub fn kernel_basis(&self) -> Result<Vec<Vec<T>>> {
        let (m, n) = (self.rows, self.cols);
        let mut a = self.clone();
        let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
        let mut row = 0;
        for col in 0..n {
            if row >= m {
                break;
            }
            let mut best: Option<(usize, i64)> = None;
            for r in row..m {
                if let Some(s) = a.at(r, col).pivot_score() {
                    if best.map(|(_, bs)| s < bs).unwrap_or(true) {
                        best = Some((r, s));
                    }
                }
            }
            let Some((prow, _)) = best else { continue };
            if prow != row {
                for j in 0..n {
                    let tmp = a.at(prow, j).clone();
                    let tmp2 = a.at(row, j).clone();
                    a.set(prow, j, tmp2);
                    a.set(row, j, tmp);
                }
            }
            let pinv = a.at(row, col).inv_e()?;
            for j in 0..n {
                let v = a.at(row, j).mul_e(&pinv)?;
                a.set(row, j, v);
            }
            for r in 0..m {
                if r == row || a.at(r, col).is_zero_e() {
                    continue;
                }
                let factor = a.at(r, col).clone();
                for j in 0..n {
                    let v = a.at(r, j).sub_e(&factor.mul_e(a.at(row, j))?)?;
                    a.set(r, j, v);
                }
            }
            pivot_of_col[col] = Some(row);
            row += 1;
        }
        let proto = self.proto();
        let mut basis = Vec::new();
        for free in 0..n {
            if pivot_of_col[free].is_some() {
                continue;
            }
            let mut v = vec![proto.zero_like(); n];
            v[free] = proto.one_like();
            for col in 0..n {
                if let Some(prow) = pivot_of_col[col] {
                    v[col] = a.at(prow, free).neg_e();
                }
            }
            basis.push(v);
        }
        Ok(basis)
    }

    pub fn rank(&self) -> Result<usize> {
        Ok(self.cols - self.kernel_basis()?.len())
    }

    pub fn det(&self) -> Result<T> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let proto = self.proto();
        let mut det = proto.one_like();
        for col in 0..n {
            let mut best: Option<(usize, i64)> = None;
            for r in col..n {
                if let Some(s) = a.at(r, col).pivot_score() {
                    if best.map(|(_, bs)| s < bs).unwrap_or(true) {
                        best = Some((r, s));
                    }
                }
            }
            let Some((prow, _)) = best else {
                return Ok(proto.zero_like());
            };
            if prow != col {
                det = det.neg_e();
                for j in 0..n {
                    let tmp = a.at(prow, j).clone();
                    let tmp2 = a.at(col, j).clone();
                    a.set(prow, j, tmp2);
                    a.set(col, j, tmp);
                }
            }
            let piv = a.at(col, col).clone();
            det = det.mul_e(&piv)?;
            let pinv = piv.inv_e()?;
            for r in col + 1..n {
                if a.at(r, col).is_zero_e() {
                    continue;
                }
                let factor = a.at(r, col).mul_e(&pinv)?;
                for j in col..n {
                    let v = a.at(r, j).sub_e(&factor.mul_e(a.at(col, j))?)?;
                    a.set(r, j, v);
                }
            }
        }
        Ok(det)
    }

    /// Characteristic polynomial coefficients c_0 + c_1 X + ... + X^n by
    /// the Faddeev-LeVerrier recurrence.
    pub fn char_poly(&self) -> Result<Vec<T>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let proto = self.proto();
        let mut coeffs = vec![proto.zero_like(); n + 1];
        coeffs[n] = proto.one_like();
        let mut m = Mat::zero(n, n, proto);
        for k in 1..=n {
            // M_k = A * M_{k-1} + c_{n-k+1} I
            let am = self.mul(&m)?;
            let mut mk = am;
            let c_prev = coeffs[n - k + 1].clone();
            for i in 0..n {
                let v = mk.at(i, i).add_e(&c_prev)?;
                mk.set(i, i, v);
            }
            let prod = self.mul(&mk)?;
            let mut tr = proto.zero_like();
            for i in 0..n {
                tr = tr.add_e(prod.at(i, i))?;
            }
            let inv_k = proto.from_i64_like(k as i64).inv_e()?;
            coeffs[n - k] = tr.neg_e().mul_e(&inv_k)?;
            m = mk;
        }
        Ok(coeffs)
    }
}
