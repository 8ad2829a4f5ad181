//! Approximate Hessian span by PCA over Hessians at Gaussian anchors.
//!
//! Symmetric `D × D` matrices are flattened with [`hvec`], which keeps the
//! diagonal and scales the strict upper triangle by `√2`, so Euclidean inner
//! products of half-vectors equal Frobenius inner products of the matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numdiff::{fd_hessian, hessian_query_cost, FdConfig};
use crate::scalar::Real;
use crate::seeds;
use crate::teacher::TeacherNetwork;

/// Relative tolerance on `σ_m / σ_1` below which the span is declared deficient.
pub const DEFICIENCY_TOL: f64 = 1e-10;

/// Half-vectorized symmetric matrix of length `D(D+1)/2`.
pub type HalfVec<T> = DVector<T>;

pub fn hvec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Isometric half-vectorization. Only the upper triangle of `a` is read.
pub fn hvec<T: Real>(a: &DMatrix<T>) -> HalfVec<T> {
    let d = a.nrows();
    let s2 = T::lit(std::f64::consts::SQRT_2);
    let mut out = DVector::zeros(hvec_len(d));
    let mut idx = 0;
    for i in 0..d {
        out[idx] = a[(i, i)];
        idx += 1;
        for j in (i + 1)..d {
            out[idx] = a[(i, j)] * s2;
            idx += 1;
        }
    }
    out
}

/// Inverse of [`hvec`].
pub fn unhvec<T: Real>(v: &HalfVec<T>, d: usize) -> Result<DMatrix<T>> {
    if v.len() != hvec_len(d) {
        return Err(Error::DimensionMismatch { expected: hvec_len(d), got: v.len() });
    }
    let s2 = T::lit(std::f64::consts::SQRT_2);
    let mut a = DMatrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        a[(i, i)] = v[idx];
        idx += 1;
        for j in (i + 1)..d {
            let x = v[idx] / s2;
            a[(i, j)] = x;
            a[(j, i)] = x;
            idx += 1;
        }
    }
    Ok(a)
}

/// `hvec(u uᵀ)` without forming the outer product.
pub fn hvec_outer<T: Real>(u: &[T]) -> HalfVec<T> {
    let d = u.len();
    let s2 = T::lit(std::f64::consts::SQRT_2);
    let mut out = DVector::zeros(hvec_len(d));
    let mut idx = 0;
    for i in 0..d {
        out[idx] = u[i] * u[i];
        idx += 1;
        for j in (i + 1)..d {
            out[idx] = u[i] * u[j] * s2;
            idx += 1;
        }
    }
    out
}

/// Source of the Hessians fed to the PCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode<T> {
    /// Analytic Hessians from the teacher's derivative oracle.
    Exact,
    FiniteDiff(FdConfig<T>),
}

#[derive(Debug, Clone)]
pub struct HessianSamples<T: Real> {
    /// `D(D+1)/2 × N_h`, column `i` is `hvec` of the Hessian at `anchors[i]`.
    pub columns: DMatrix<T>,
    pub anchors: Vec<Vec<T>>,
    /// Network queries issued (zero in exact mode).
    pub queries: u64,
    pub warnings: Vec<String>,
}

/// Hessians at `n_h` standard Gaussian anchors. Anchor `i` is drawn from its
/// own child seed, so the result does not depend on the thread count.
pub fn build_hessian_matrix<T: Real>(
    net: &TeacherNetwork<T>,
    n_h: usize,
    mode: DerivativeMode<T>,
    seed: u64,
) -> Result<HessianSamples<T>> {
    if n_h == 0 {
        return Err(Error::Validation("need at least one Hessian sample".into()));
    }
    let d = net.dim();
    let mut warnings = Vec::new();
    if n_h < net.neurons() {
        warnings.push(format!("N_h = {n_h} is below m = {}; the span cannot be complete", net.neurons()));
    }
    let anchors: Vec<Vec<T>> = (0..n_h)
        .map(|i| seeds::gaussian_vec(&mut seeds::child_rng(seed, "hessian-anchor", i as u64), d))
        .collect();
    let before = net.query_count();
    let cols: Vec<HalfVec<T>> = anchors
        .par_iter()
        .map(|x| {
            let h = match mode {
                DerivativeMode::Exact => net.analytic_hessian(x)?,
                DerivativeMode::FiniteDiff(cfg) => fd_hessian(net, x, &cfg)?,
            };
            Ok(hvec(&h))
        })
        .collect::<Result<_>>()?;
    let queries = net.query_count() - before;
    debug_assert!(matches!(mode, DerivativeMode::Exact) || queries == n_h as u64 * hessian_query_cost(d));
    Ok(HessianSamples { columns: DMatrix::from_columns(&cols), anchors, queries, warnings })
}

/// Orthogonal projector onto a subspace of half-vectorized symmetric matrices.
#[derive(Debug, Clone)]
pub struct SubspaceProjector<T: Real> {
    d: usize,
    basis: DMatrix<T>,
    singular_values: DVector<T>,
}

/// Singular values in decreasing order with matching left singular vectors.
fn sorted_left_svd<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let (rows, cols) = m.shape();
    // Thin QR first when the matrix is tall, so the SVD runs on a
    // `cols × cols` factor and never on the full half-vector space.
    let (q, core) = if rows > cols {
        let qr = m.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, m.clone())
    };
    let svd = core.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap_or(std::cmp::Ordering::Equal));
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let sv = DVector::from_iterator(order.len(), order.iter().map(|&j| svd.singular_values[j]));
    let u_full = match q {
        Some(q) => q * u_sorted,
        None => u_sorted,
    };
    (u_full, sv)
}

/// Top-`m` left singular subspace of `columns`.
pub fn top_m_projector<T: Real>(columns: &DMatrix<T>, m: usize) -> Result<SubspaceProjector<T>> {
    let (rows, n) = columns.shape();
    let d = dim_from_hvec_len(rows)?;
    if m == 0 || n < m {
        return Err(Error::Precondition(format!("need at least m = {m} columns, got {n}")));
    }
    if m > rows {
        return Err(Error::Precondition(format!("m = {m} exceeds the dimension {rows} of Sym(R^{d})")));
    }
    let (u, sv) = sorted_left_svd(columns);
    let s1 = sv[0];
    let sm = sv[m - 1];
    if !(s1 > T::zero()) || !(sm > T::lit(DEFICIENCY_TOL) * s1) {
        let ratio = if s1 > T::zero() { (sm / s1).as_f64() } else { 0.0 };
        return Err(Error::SubspaceDeficient { ratio });
    }
    Ok(SubspaceProjector { d, basis: u.columns(0, m).into_owned(), singular_values: sv })
}

fn dim_from_hvec_len(len: usize) -> Result<usize> {
    let d = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    for cand in d.saturating_sub(1)..=d + 1 {
        if hvec_len(cand) == len && cand > 0 {
            return Ok(cand);
        }
    }
    Err(Error::Validation(format!("{len} is not a half-vector length D(D+1)/2")))
}

impl<T: Real> SubspaceProjector<T> {
    /// Projector onto the span of `vectors` (any number, any rank).
    pub fn from_spanning(d: usize, vectors: &[HalfVec<T>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Validation("empty spanning set".into()));
        }
        for v in vectors {
            if v.len() != hvec_len(d) {
                return Err(Error::DimensionMismatch { expected: hvec_len(d), got: v.len() });
            }
        }
        let m = DMatrix::from_columns(vectors);
        let (u, sv) = sorted_left_svd(&m);
        let tol = T::tol(1e-12) * sv[0] * T::from_count(vectors.len().max(hvec_len(d)));
        let rank = sv.iter().filter(|s| **s > tol).count();
        Ok(SubspaceProjector { d, basis: u.columns(0, rank).into_owned(), singular_values: sv })
    }

    /// Exact projector onto `span{w_k w_kᵀ}` for the columns of `w`.
    pub fn exact(w: &DMatrix<T>) -> Result<Self> {
        let spans: Vec<_> = w.column_iter().map(|c| hvec_outer(c.as_slice())).collect();
        Self::from_spanning(w.nrows(), &spans)
    }

    /// Projector with the given orthonormal basis columns.
    pub fn from_basis(d: usize, basis: DMatrix<T>) -> Result<Self> {
        if basis.nrows() != hvec_len(d) {
            return Err(Error::DimensionMismatch { expected: hvec_len(d), got: basis.nrows() });
        }
        let gram = basis.tr_mul(&basis);
        let dev = (&gram - DMatrix::identity(gram.nrows(), gram.ncols())).amax();
        if dev > T::tol(1e-10) {
            return Err(Error::Validation(format!("basis is not orthonormal (deviation {dev})")));
        }
        let ones = DVector::repeat(basis.ncols(), T::one());
        Ok(SubspaceProjector { d, basis, singular_values: ones })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis, one half-vector per column.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// Singular values of the column matrix the projector was built from.
    pub fn singular_values(&self) -> &DVector<T> {
        &self.singular_values
    }

    /// `σ_m` of the source matrix.
    pub fn sigma_m(&self) -> T {
        self.singular_values[self.rank() - 1]
    }

    /// Coordinates `Uᵀ v` of a half-vector in the basis.
    pub fn coordinates(&self, v: &HalfVec<T>) -> DVector<T> {
        self.basis.tr_mul(v)
    }

    pub fn apply(&self, v: &HalfVec<T>) -> HalfVec<T> {
        &self.basis * self.coordinates(v)
    }

    /// Projection of a symmetric matrix.
    pub fn apply_matrix(&self, a: &DMatrix<T>) -> DMatrix<T> {
        unhvec(&self.apply(&hvec(a)), self.d).expect("dimension fixed by construction")
    }

    /// Dense `D(D+1)/2`-square projector matrix; intended for small `D`.
    pub fn matrix(&self) -> DMatrix<T> {
        &self.basis * self.basis.transpose()
    }

    /// Basis matrices `B_j = unhvec(U_j)`, each symmetric `D × D`.
    pub fn basis_matrices(&self) -> Vec<DMatrix<T>> {
        self.basis
            .column_iter()
            .map(|c| unhvec(&c.into_owned(), self.d).expect("dimension fixed by construction"))
            .collect()
    }
}

/// Spectral norm `‖P − Q‖₂` of the difference of two projectors of equal rank,
/// computed as `‖V − U(UᵀV)‖₂`, the sine of the largest principal angle.
pub fn projector_distance<T: Real>(p: &SubspaceProjector<T>, q: &SubspaceProjector<T>) -> Result<T> {
    if p.d != q.d {
        return Err(Error::DimensionMismatch { expected: p.d, got: q.d });
    }
    if p.rank() != q.rank() {
        return Err(Error::DimensionMismatch { expected: p.rank(), got: q.rank() });
    }
    let u = &p.basis;
    let v = &q.basis;
    let resid = v - u * u.tr_mul(v);
    let sv = resid.singular_values();
    Ok(sv.iter().fold(T::zero(), |a, s| a.max(*s)).min(T::one()))
}

/// Writes `index,singular_value` rows.
pub fn write_spectrum_csv<T: Real>(path: impl AsRef<Path>, singular_values: &DVector<T>) -> Result<()> {
    let mut out = String::from("index,singular_value\n");
    for (i, s) in singular_values.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, s).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}
