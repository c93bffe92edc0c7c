//! Rank-3 site tensors and truncated factorization helpers shared by the
//! chain-shaped tensor networks (matrix-product states and operators).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("non-finite values encountered during decomposition")]
    NonFinite,
    #[error("SVD failed to converge")]
    SvdFailure,
}

/// Bond-truncation policy: keep at most `chi_max` singular values, dropping
/// any below `cutoff` as well, then renormalize. `cutoff = 0` is a pure cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub chi_max: usize,
    pub cutoff: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { chi_max: usize::MAX, cutoff: 0.0 }
    }
}

impl TruncationPolicy {
    pub fn cap(chi_max: usize) -> Self {
        TruncationPolicy { chi_max: chi_max.max(1), cutoff: 0.0 }
    }
}

/// Site tensor with legs `(left bond, physical, right bond)`, stored
/// row-major as `data[(l * d + p) * dr + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub dl: usize,
    pub d: usize,
    pub dr: usize,
    pub data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dl: usize, d: usize, dr: usize) -> Self {
        Tensor3 { dl, d, dr, data: vec![C64::new(0.0, 0.0); dl * d * dr] }
    }

    #[inline]
    pub fn at(&self, l: usize, p: usize, r: usize) -> C64 {
        self.data[(l * self.d + p) * self.dr + r]
    }

    #[inline]
    pub fn at_mut(&mut self, l: usize, p: usize, r: usize) -> &mut C64 {
        &mut self.data[(l * self.d + p) * self.dr + r]
    }

    /// Reshape to a `(dl*d) x dr` matrix (grouping left bond with physical).
    pub fn as_matrix_left(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dl * self.d, self.dr, |row, col| self.data[row * self.dr + col])
    }

    /// Reshape to a `dl x (d*dr)` matrix (grouping physical with right bond).
    pub fn as_matrix_right(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dl, self.d * self.dr, |row, col| {
            self.data[row * self.d * self.dr + col]
        })
    }

    /// Inverse of [`as_matrix_left`]: matrix rows are `(l, p)` pairs.
    pub fn from_matrix_left(m: &DMatrix<C64>, dl: usize, d: usize) -> Self {
        let dr = m.ncols();
        debug_assert_eq!(m.nrows(), dl * d);
        let mut t = Tensor3::zeros(dl, d, dr);
        for row in 0..m.nrows() {
            for col in 0..dr {
                t.data[row * dr + col] = m[(row, col)];
            }
        }
        t
    }

    /// Inverse of [`as_matrix_right`]: matrix columns are `(p, r)` pairs.
    pub fn from_matrix_right(m: &DMatrix<C64>, d: usize, dr: usize) -> Self {
        let dl = m.nrows();
        debug_assert_eq!(m.ncols(), d * dr);
        let mut t = Tensor3::zeros(dl, d, dr);
        for row in 0..dl {
            for col in 0..d * dr {
                t.data[row * d * dr + col] = m[(row, col)];
            }
        }
        t
    }

    /// Fixed-physical-index slice as a `dl x dr` matrix.
    pub fn phys_slice(&self, p: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.dl, self.dr, |l, r| self.at(l, p, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Outcome of one truncated SVD split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    /// Left factor with orthonormal columns, `rows x kept`.
    pub u: DMatrix<C64>,
    /// Kept singular values, renormalized so the state norm is preserved.
    pub s: Vec<f64>,
    /// Right factor with orthonormal rows, `kept x cols`.
    pub vt: DMatrix<C64>,
    /// Share of squared singular weight discarded, in `[0,1]`.
    pub discarded_weight: f64,
}

/// Truncated SVD `m = u * diag(s) * vt` keeping the `chi_max` largest
/// singular values (and none below `cutoff`). Singular values arrive sorted
/// descending, so ties at the cut keep the lower index. The kept values are
/// rescaled to preserve the total squared weight.
pub fn svd_truncate(m: &DMatrix<C64>, policy: &TruncationPolicy) -> Result<SplitOutcome, TensorError> {
    if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(TensorError::NonFinite);
    }
    let (u_full, sv, vt_full) = accurate_svd(m)?;

    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut kept = sv.len().min(policy.chi_max.max(1));
    while kept > 1 && sv[kept - 1] <= policy.cutoff {
        kept -= 1;
    }
    // never keep zero directions of an all-zero matrix; guard against NaN
    let kept_weight: f64 = sv.iter().take(kept).map(|s| s * s).sum();
    let discarded_weight = if total > 0.0 { (1.0 - kept_weight / total).max(0.0) } else { 0.0 };
    let scale = if kept_weight > 0.0 { (total / kept_weight).sqrt() } else { 1.0 };

    let u = u_full.columns(0, kept).into_owned();
    let vt = vt_full.rows(0, kept).into_owned();
    let s: Vec<f64> = sv.iter().take(kept).map(|v| v * scale).collect();
    Ok(SplitOutcome { u, s, vt, discarded_weight })
}

/// Economy SVD `m = u * diag(s) * vt` with singular values sorted descending
/// and a verified residual. nalgebra's iterative SVD can silently return
/// factors that miss the input by ~1e-6 on ill-conditioned inputs — far too
/// loose for bond splits that must preserve the state — so its result is only
/// accepted when `u * diag(s) * vt` actually reproduces `m`; otherwise a
/// one-sided Jacobi SVD (slower, but accurate to machine precision) is used.
fn accurate_svd(m: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>), TensorError> {
    if let Some(svd) = m.clone().try_svd(true, true, 1e-14, 0) {
        if let (Some(u), Some(vt)) = (svd.u, svd.v_t) {
            let s: Vec<f64> = svd.singular_values.iter().copied().collect();
            if factorization_residual(m, &u, &s, &vt) <= 1e-12 {
                return Ok((u, s, vt));
            }
        }
    }
    Ok(jacobi_svd(m))
}

/// Relative Frobenius distance between `m` and `u * diag(s) * vt`.
fn factorization_residual(m: &DMatrix<C64>, u: &DMatrix<C64>, s: &[f64], vt: &DMatrix<C64>) -> f64 {
    let mut us = u.clone();
    for (k, &sk) in s.iter().enumerate() {
        for v in us.column_mut(k).iter_mut() {
            *v *= sk;
        }
    }
    let rec = us * vt;
    let denom = m.norm();
    if denom == 0.0 {
        return rec.norm();
    }
    (rec - m).norm() / denom
}

/// One-sided Jacobi SVD: unitary column rotations orthogonalize the columns
/// of a working copy `w` (so `w -> u * diag(s)`) while the same rotations
/// accumulate into `v`, preserving `w * v^H = m` exactly throughout.
fn jacobi_svd(m: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>, DMatrix<C64>) {
    if m.nrows() < m.ncols() {
        let (u, s, vt) = jacobi_svd(&m.adjoint());
        return (vt.adjoint(), s, u.adjoint());
    }
    let n = m.ncols();
    let mut w = m.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    let tol = 1e-14;
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0f64;
                let mut beta = 0.0f64;
                let mut gamma = C64::new(0.0, 0.0);
                for r in 0..w.nrows() {
                    let a = w[(r, p)];
                    let b = w[(r, q)];
                    alpha += a.norm_sqr();
                    beta += b.norm_sqr();
                    gamma += a.conj() * b;
                }
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sp = phase * (c * t);
                let spc = phase.conj() * (c * t);
                for r in 0..w.nrows() {
                    let a = w[(r, p)];
                    let b = w[(r, q)];
                    w[(r, p)] = a * c - b * spc;
                    w[(r, q)] = a * sp + b * c;
                }
                for r in 0..n {
                    let a = v[(r, p)];
                    let b = v[(r, q)];
                    v[(r, p)] = a * c - b * spc;
                    v[(r, q)] = a * sp + b * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    let mut u = DMatrix::from_element(w.nrows(), n, C64::new(0.0, 0.0));
    let mut vt = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        s.push(sj);
        if sj > 0.0 {
            for r in 0..w.nrows() {
                u[(r, k)] = w[(r, j)] / sj;
            }
        }
        for colv in 0..n {
            vt[(k, colv)] = v[(colv, j)].conj();
        }
    }
    (u, s, vt)
}

/// Thin QR: `m = q * r` with `q` having orthonormal columns.
pub fn thin_qr(m: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Thin LQ: `m = l * q` with `q` having orthonormal rows.
pub fn thin_lq(m: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let qr = m.adjoint().qr();
    (qr.r().adjoint(), qr.q().adjoint())
}

/// Dense complex tensor with an arbitrary number of legs, stored row-major
/// (the last leg varies fastest). Used by the tree tensor network, where node
/// tensors carry one physical leg plus one leg per tree edge.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NdTensor {
    pub dims: Vec<usize>,
    pub data: Vec<C64>,
}

impl NdTensor {
    pub fn from_data(dims: Vec<usize>, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), dims.iter().product::<usize>());
        NdTensor { dims, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }

    /// Reorder legs so that new leg `i` is old leg `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> NdTensor {
        assert_eq!(perm.len(), self.dims.len());
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let old_strides = self.strides();
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        let mut idx = vec![0usize; new_dims.len()];
        for slot in out.iter_mut() {
            let mut src = 0;
            for (axis, &i) in idx.iter().enumerate() {
                src += i * old_strides[perm[axis]];
            }
            *slot = self.data[src];
            // advance the new-order multi-index (last axis fastest)
            for axis in (0..idx.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < new_dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        NdTensor { dims: new_dims, data: out }
    }

    /// View as a matrix grouping the first `split` legs into rows and the
    /// rest into columns.
    pub fn as_matrix(&self, split: usize) -> DMatrix<C64> {
        let rows: usize = self.dims[..split].iter().product();
        let cols: usize = self.dims[split..].iter().product();
        DMatrix::from_row_iterator(rows, cols, self.data.iter().copied())
    }

    pub fn from_matrix(m: &DMatrix<C64>, row_dims: &[usize], col_dims: &[usize]) -> NdTensor {
        assert_eq!(m.nrows(), row_dims.iter().product::<usize>());
        assert_eq!(m.ncols(), col_dims.iter().product::<usize>());
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        let dims: Vec<usize> = row_dims.iter().chain(col_dims.iter()).copied().collect();
        NdTensor { dims, data }
    }

    /// Multiply each slice along `leg` by the matching weight.
    pub fn scale_leg(&mut self, leg: usize, weights: &[f64]) {
        assert_eq!(weights.len(), self.dims[leg]);
        let strides = self.strides();
        for (flat, v) in self.data.iter_mut().enumerate() {
            let i = (flat / strides[leg]) % self.dims[leg];
            *v *= weights[i];
        }
    }

    /// Fix the first leg to `idx`, returning the remaining tensor.
    pub fn select_first(&self, idx: usize) -> NdTensor {
        let rest: usize = self.dims[1..].iter().product();
        let data = self.data[idx * rest..(idx + 1) * rest].to_vec();
        NdTensor { dims: self.dims[1..].to_vec(), data }
    }

    /// Contract `leg` with a vector: `out[..] = sum_j t[.., j, ..] v[j]`.
    pub fn contract_leg(&self, leg: usize, v: &[C64]) -> NdTensor {
        assert_eq!(v.len(), self.dims[leg]);
        let mut perm: Vec<usize> = (0..self.dims.len()).filter(|&a| a != leg).collect();
        perm.push(leg);
        let moved = self.permute(&perm);
        let d = v.len();
        let rest = moved.len() / d;
        let mut data = vec![C64::new(0.0, 0.0); rest];
        for (r, slot) in data.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (j, &vj) in v.iter().enumerate() {
                acc += moved.data[r * d + j] * vj;
            }
            *slot = acc;
        }
        NdTensor { dims: moved.dims[..moved.dims.len() - 1].to_vec(), data }
    }

    /// Replace `leg` by its image under a matrix:
    /// `out[.., b, ..] = sum_k t[.., k, ..] m[(k, b)]`.
    pub fn contract_leg_matrix(&self, leg: usize, m: &DMatrix<C64>) -> NdTensor {
        assert_eq!(m.nrows(), self.dims[leg]);
        let mut perm: Vec<usize> = (0..self.dims.len()).filter(|&a| a != leg).collect();
        perm.push(leg);
        let moved = self.permute(&perm);
        let rest = moved.len() / m.nrows();
        let flat = DMatrix::from_row_iterator(rest, m.nrows(), moved.data.iter().copied());
        let prod = flat * m;
        let mut dims = moved.dims.clone();
        *dims.last_mut().unwrap() = m.ncols();
        let mut out = NdTensor::from_matrix(&prod, &[rest], &[m.ncols()]);
        out.dims = dims;
        out.permute(&inverse_permutation(&perm))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        for v in self.data.iter_mut() {
            *v *= f;
        }
    }
}

/// Inverse of a permutation given as `perm[new] = old`.
pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (new_pos, &old_pos) in perm.iter().enumerate() {
        inv[old_pos] = new_pos;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn reshape_round_trip() {
        let mut t = Tensor3::zeros(2, 2, 3);
        for l in 0..2 {
            for p in 0..2 {
                for r in 0..3 {
                    *t.at_mut(l, p, r) = c((l * 6 + p * 3 + r) as f64, 0.5);
                }
            }
        }
        let back_l = Tensor3::from_matrix_left(&t.as_matrix_left(), 2, 2);
        assert_eq!(back_l, t);
        let back_r = Tensor3::from_matrix_right(&t.as_matrix_right(), 2, 3);
        assert_eq!(back_r, t);
        assert_eq!(t.phys_slice(1)[(1, 2)], t.at(1, 1, 2));
    }

    #[test]
    fn untruncated_svd_reconstructs() {
        let m = random_matrix(6, 4, 9);
        let out = svd_truncate(&m, &TruncationPolicy::default()).unwrap();
        assert_eq!(out.discarded_weight, 0.0);
        let s = DMatrix::from_fn(out.s.len(), out.s.len(), |i, j| {
            if i == j { c(out.s[i], 0.0) } else { c(0.0, 0.0) }
        });
        let rec = &out.u * s * &out.vt;
        assert_relative_eq!((rec - m).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn truncation_keeps_largest_and_renormalizes() {
        // rank-2 diagonal with known singular values 2 and 1
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = c(2.0, 0.0);
        m[(1, 1)] = c(1.0, 0.0);
        let out = svd_truncate(&m, &TruncationPolicy::cap(1)).unwrap();
        assert_eq!(out.s.len(), 1);
        // discarded weight 1/(4+1); kept value rescaled to preserve norm
        assert_relative_eq!(out.discarded_weight, 0.2, epsilon = 1e-12);
        assert_relative_eq!(out.s[0], (5.0f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cutoff_drops_small_values() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 1)] = c(0.5, 0.0);
        m[(2, 2)] = c(1e-9, 0.0);
        let policy = TruncationPolicy { chi_max: usize::MAX, cutoff: 1e-6 };
        let out = svd_truncate(&m, &policy).unwrap();
        assert_eq!(out.s.len(), 2);
        assert!(out.discarded_weight < 1e-15);
    }

    #[test]
    fn qr_and_lq_orthonormality() {
        let m = random_matrix(6, 3, 11);
        let (q, r) = thin_qr(&m);
        assert_relative_eq!((&q * &r - &m).norm(), 0.0, epsilon = 1e-10);
        let qtq = q.adjoint() * &q;
        assert_relative_eq!((qtq - DMatrix::identity(3, 3)).norm(), 0.0, epsilon = 1e-10);

        let m2 = random_matrix(3, 6, 12);
        let (l, q2) = thin_lq(&m2);
        assert_relative_eq!((&l * &q2 - &m2).norm(), 0.0, epsilon = 1e-10);
        let qqt = &q2 * q2.adjoint();
        assert_relative_eq!((qqt - DMatrix::identity(3, 3)).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn jacobi_fallback_factors_accurately() {
        for (rows, cols, seed) in [(6usize, 4usize, 3u64), (4, 7, 4), (5, 5, 5)] {
            let m = random_matrix(rows, cols, seed);
            let (u, s, vt) = jacobi_svd(&m);
            assert!(factorization_residual(&m, &u, &s, &vt) < 1e-13);
            let k = rows.min(cols);
            let utu = u.adjoint() * &u;
            assert_relative_eq!((utu - DMatrix::identity(k, k)).norm(), 0.0, epsilon = 1e-12);
            let vvt = &vt * vt.adjoint();
            assert_relative_eq!((vvt - DMatrix::identity(k, k)).norm(), 0.0, epsilon = 1e-12);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }

        // badly scaled rows: condition number ~1e14
        let mut m = random_matrix(8, 8, 6);
        for r in 0..8 {
            for c in 0..8 {
                m[(r, c)] *= 10f64.powi(-2 * r as i32);
            }
        }
        let (u, s, vt) = jacobi_svd(&m);
        assert!(factorization_residual(&m, &u, &s, &vt) < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = random_matrix(2, 2, 1);
        m[(0, 0)] = c(f64::NAN, 0.0);
        assert!(matches!(
            svd_truncate(&m, &TruncationPolicy::default()),
            Err(TensorError::NonFinite)
        ));
    }

    fn sample_nd() -> NdTensor {
        let dims = vec![2usize, 3, 4];
        let data: Vec<C64> = (0..24).map(|i| c(i as f64, -(i as f64) * 0.5)).collect();
        NdTensor::from_data(dims, data)
    }

    #[test]
    fn nd_permute_round_trip_and_matrix_views() {
        let t = sample_nd();
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.dims, vec![4, 2, 3]);
        // element check: p[r, l, m] == t[l, m, r]
        assert_eq!(p.data[(3 * 2 + 1) * 3 + 2], t.data[(1 * 3 + 2) * 4 + 3]);
        let back = p.permute(&inverse_permutation(&[2, 0, 1]));
        assert_eq!(back, t);

        let m = t.as_matrix(1);
        assert_eq!((m.nrows(), m.ncols()), (2, 12));
        assert_eq!(m[(1, 11)], t.data[23]);
        let rebuilt = NdTensor::from_matrix(&m, &[2], &[3, 4]);
        assert_eq!(rebuilt, t);
    }

    #[test]
    fn nd_leg_operations() {
        let t = sample_nd();
        let mut scaled = t.clone();
        scaled.scale_leg(1, &[1.0, 2.0, 3.0]);
        assert_eq!(scaled.data[(1 * 3 + 2) * 4 + 1], t.data[(1 * 3 + 2) * 4 + 1] * 3.0);

        let sel = t.select_first(1);
        assert_eq!(sel.dims, vec![3, 4]);
        assert_eq!(sel.data[5], t.data[12 + 5]);

        // contracting with a basis vector equals selecting that slice
        let mut e1 = vec![c(0.0, 0.0); 3];
        e1[1] = c(1.0, 0.0);
        let contracted = t.contract_leg(1, &e1);
        assert_eq!(contracted.dims, vec![2, 4]);
        for l in 0..2 {
            for r in 0..4 {
                assert_eq!(contracted.data[l * 4 + r], t.data[(l * 3 + 1) * 4 + r]);
            }
        }

        // identity matrix leaves the tensor unchanged (legs restored in place)
        let id = DMatrix::identity(3, 3);
        assert_eq!(t.contract_leg_matrix(1, &id), t);
    }
}
