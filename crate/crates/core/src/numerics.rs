//! Dense linear-algebra kernels: cyclic Jacobi for symmetric eigenproblems,
//! one-sided (Hestenes) Jacobi for singular values, and Householder QR with
//! column pivoting for rank-revealing bases and null spaces.
//!
//! Everything here targets the small dense sizes of the experiments
//! (a few hundred rows at most).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank tolerance against the largest pivot / singular value.
pub const RANK_TOL: f64 = 1e-10;
/// Inputs with norm at or below this are treated as zero vectors.
pub const ZERO_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// A `d`-dimensional subspace of `R^n` stored as an `n × d` orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubspaceFile", into = "SubspaceFile")]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Checks `basisᵀ·basis = I` entrywise within `1e-10`.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let (n, d) = basis.shape();
        if d == 0 || d > n {
            return Err(Error::Precondition(format!(
                "subspace basis must be n×d with 1 <= d <= n, got {n}×{d}"
            )));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::identity(d, d)).amax();
        if err > 1e-10 {
            return Err(Error::Precondition(format!(
                "basis columns are not orthonormal (error {err:e})"
            )));
        }
        Ok(Self { basis })
    }

    pub(crate) fn from_orthonormal_unchecked(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        projector(self)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Coordinates of `x` in this basis (`basisᵀ x`).
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * x
    }
}

#[derive(Serialize, Deserialize)]
struct SubspaceFile {
    n: usize,
    d: usize,
    /// Row-major `n × d` basis.
    basis: Vec<f64>,
}

impl From<Subspace> for SubspaceFile {
    fn from(s: Subspace) -> Self {
        let (n, d) = s.basis.shape();
        Self {
            n,
            d,
            basis: row_major(&s.basis),
        }
    }
}

impl TryFrom<SubspaceFile> for Subspace {
    type Error = Error;

    fn try_from(f: SubspaceFile) -> Result<Self> {
        if f.basis.len() != f.n * f.d {
            return Err(Error::DimensionMismatch {
                expected: f.n * f.d,
                found: f.basis.len(),
            });
        }
        Subspace::from_orthonormal(DMatrix::from_row_slice(f.n, f.d, &f.basis))
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order;
/// column `i` of `vectors` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn eigh(s: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.ncols(),
        });
    }
    let scale = s.amax().max(1.0);
    let asymmetry = (s - s.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let mut a = (s + s.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total = a.norm_squared();
        if off <= f64::EPSILON * f64::EPSILON * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                if apq.abs() < 1e-300 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.select_columns(&order);
    Ok(SymmetricEigen { values, vectors })
}

/// Orthogonalizes the columns of a tall matrix in place by one-sided Jacobi.
fn hestenes(g: &mut DMatrix<f64>) {
    let k = g.ncols();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (alpha, beta, gamma) = {
                    let ci = g.column(i);
                    let cj = g.column(j);
                    (ci.norm_squared(), cj.norm_squared(), ci.dot(&cj))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..g.nrows() {
                    let gi = g[(r, i)];
                    let gj = g[(r, j)];
                    g[(r, i)] = c * gi - s * gj;
                    g[(r, j)] = s * gi + c * gj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Singular values in descending order; `min(rows, cols)` of them.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut g = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    hestenes(&mut g);
    let mut values: Vec<f64> = g.column_iter().map(|c| c.norm()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value among the `min(rows, cols)` of them.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Numerical rank at relative tolerance [`RANK_TOL`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= ZERO_TOL {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Householder QR with column pivoting, `A·P = Q·R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Full `m × m` orthogonal factor.
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

pub fn pivoted_qr(a: &DMatrix<f64>, rel_tol: f64) -> PivotedQr {
    let (m, k) = a.shape();
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut reflectors: Vec<(usize, DVector<f64>)> = Vec::new();
    let steps = m.min(k);

    for step in 0..steps {
        let mut best = step;
        let mut best_norm = -1.0;
        for j in step..k {
            let norm = r.view((step, j), (m - step, 1)).norm_squared();
            if norm > best_norm {
                best_norm = norm;
                best = j;
            }
        }
        if best != step {
            r.swap_columns(step, best);
            perm.swap(step, best);
        }
        let x = r.column(step).rows(step, m - step).clone_owned();
        let xnorm = x.norm();
        if xnorm == 0.0 {
            break;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in step..k {
            let mut col = r.column_mut(j);
            let mut col = col.rows_mut(step, m - step);
            let f = 2.0 * v.dot(&col) / vnorm2;
            col.axpy(-f, &v, 1.0);
        }
        for i in step + 1..m {
            r[(i, step)] = 0.0;
        }
        reflectors.push((step, v));
    }

    let mut q = DMatrix::<f64>::identity(m, m);
    for (step, v) in reflectors.iter().rev() {
        let vnorm2 = v.norm_squared();
        for j in 0..m {
            let mut col = q.column_mut(j);
            let mut col = col.rows_mut(*step, m - step);
            let f = 2.0 * v.dot(&col) / vnorm2;
            col.axpy(-f, v, 1.0);
        }
    }

    let top = if steps > 0 { r[(0, 0)].abs() } else { 0.0 };
    let rank = if top <= ZERO_TOL {
        0
    } else {
        (0..steps).take_while(|&i| r[(i, i)].abs() > rel_tol * top).count()
    };
    PivotedQr { q, r, perm, rank }
}

/// Orthonormal basis of the span of `vectors`; near-dependent directions are
/// dropped at relative tolerance [`RANK_TOL`].
pub fn orthonormal_basis(vectors: &[DVector<f64>]) -> Result<Subspace> {
    let n = vectors.first().map(|v| v.len()).ok_or(Error::EmptySpan)?;
    if vectors.iter().any(|v| v.len() != n) {
        return Err(Error::Precondition("vectors of unequal length".into()));
    }
    if vectors.iter().all(|v| v.norm() <= ZERO_TOL) {
        return Err(Error::EmptySpan);
    }
    let m = DMatrix::from_columns(vectors);
    let qr = pivoted_qr(&m, RANK_TOL);
    if qr.rank == 0 {
        return Err(Error::EmptySpan);
    }
    Ok(Subspace::from_orthonormal_unchecked(
        qr.q.columns(0, qr.rank).into_owned(),
    ))
}

/// Orthonormal basis of the column span of `m`.
pub fn column_space(m: &DMatrix<f64>) -> Result<Subspace> {
    let cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    orthonormal_basis(&cols)
}

pub fn projector(s: &Subspace) -> DMatrix<f64> {
    s.basis() * s.basis().transpose()
}

/// Orthonormal basis of `{v : M v = 0}` in `R^cols`.
pub fn kernel_basis(m: &DMatrix<f64>) -> Result<Subspace> {
    let cols = m.ncols();
    let qr = pivoted_qr(&m.transpose(), RANK_TOL);
    if qr.rank >= cols {
        return Err(Error::EmptyKernel);
    }
    Ok(Subspace::from_orthonormal_unchecked(
        qr.q.columns(qr.rank, cols - qr.rank).into_owned(),
    ))
}

/// Orthonormal basis of the orthogonal complement of `s` in its ambient space.
/// `None` when `s` is the whole space.
pub fn orthogonal_complement(s: &Subspace) -> Option<Subspace> {
    let (n, d) = s.basis().shape();
    if d >= n {
        return None;
    }
    let qr = pivoted_qr(s.basis(), RANK_TOL);
    Some(Subspace::from_orthonormal_unchecked(
        qr.q.columns(d, n - d).into_owned(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SplitMix64::new(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gaussian())
    }

    fn power_iteration(m: &DMatrix<f64>) -> f64 {
        let g = m.transpose() * m;
        let mut x = DVector::from_element(g.nrows(), 1.0);
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let y = &g * &x;
            let next = y.norm();
            x = y / next;
            if (next - lambda).abs() < 1e-15 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    #[test]
    fn singular_values_basic_cases() {
        let sv = singular_values(&DMatrix::identity(3, 3));
        assert_eq!(sv, vec![1.0, 1.0, 1.0]);
        let sv = singular_values(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0])));
        assert_eq!(sv, vec![4.0, 3.0]);
    }

    #[test]
    fn singular_values_match_eigen_route() {
        let m = random_matrix(5, 8, 3);
        let sv = singular_values(&m);
        assert_eq!(sv.len(), 5);
        let eig = eigh(&(&m * m.transpose())).unwrap();
        for (s, l) in sv.iter().zip(eig.values.iter()) {
            assert!((s - l.max(0.0).sqrt()).abs() < 1e-8, "{s} vs {l}");
        }
    }

    #[test]
    fn eigh_diagonal_and_rank_one() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let e = eigh(&s).unwrap();
        assert_eq!(e.values, vec![2.0, 1.0]);
        assert!((e.vectors[(0, 0)].abs() - 1.0).abs() < 1e-15);

        let y = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let e = eigh(&(&y * y.transpose())).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14 && e.values[2].abs() < 1e-14);
        let v0 = e.vectors.column(0);
        assert!((v0.dot(&y).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_reconstructs_random_symmetric() {
        let m = random_matrix(6, 6, 8);
        let s = &m + m.transpose();
        let e = eigh(&s).unwrap();
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let rec = &e.vectors * lambda * e.vectors.transpose();
        assert!((rec - &s).norm() / s.norm() < 1e-8);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigh_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eigh(&s), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn orthonormal_basis_rank_reveals() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let s = orthonormal_basis(&[e1.clone(), e1.clone() * 2.0, e2]).unwrap();
        assert_eq!(s.dim(), 2);
        let s = orthonormal_basis(&[e1.clone()]).unwrap();
        assert_eq!(s.dim(), 1);
        assert!((s.basis()[(0, 0)].abs() - 1.0).abs() < 1e-15);

        let mut rng = SplitMix64::new(4);
        let vs: Vec<_> = (0..5).map(|_| DVector::from_vec(rng.gaussian_vec(3))).collect();
        let s = orthonormal_basis(&vs).unwrap();
        assert_eq!(s.dim(), 3);
        let gram = s.basis().transpose() * s.basis();
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn orthonormal_basis_rejects_zero_input() {
        let z = DVector::zeros(3);
        assert!(matches!(orthonormal_basis(&[z]), Err(Error::EmptySpan)));
        assert!(matches!(orthonormal_basis(&[]), Err(Error::EmptySpan)));
    }

    #[test]
    fn projector_cases() {
        let s = orthonormal_basis(&[DVector::from_vec(vec![1.0, 0.0])]).unwrap();
        let p = projector(&s);
        assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);

        let full = column_space(&random_matrix(4, 4, 1)).unwrap();
        assert!((projector(&full) - DMatrix::identity(4, 4)).amax() < 1e-12);

        let s = column_space(&random_matrix(6, 2, 2)).unwrap();
        let p = projector(&s);
        assert!(spectral_norm(&(&p * &p - &p)) < 1e-9);
        assert!((p.trace() - 2.0).abs() < 1e-9);
        assert!((&p - p.transpose()).amax() < 1e-12);
    }

    #[test]
    fn kernel_basis_cases() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = kernel_basis(&m).unwrap();
        assert_eq!(k.dim(), 1);
        let v = k.basis().column(0);
        assert!((v[0] + v[1]).abs() < 1e-15);
        assert!((v[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);

        assert!(matches!(kernel_basis(&random_matrix(3, 3, 5)), Err(Error::EmptyKernel)));

        let m = random_matrix(4, 9, 6);
        let k = kernel_basis(&m).unwrap();
        assert_eq!(k.dim(), 5);
        let norm = spectral_norm(&m);
        for v in k.basis().column_iter() {
            assert!((&m * v).norm() <= 1e-9 * norm * v.norm());
        }
    }

    #[test]
    fn spectral_norm_cases() {
        assert_eq!(spectral_norm(&DMatrix::identity(3, 3)), 1.0);
        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let m = &u * v.transpose();
        assert!((spectral_norm(&m) - 15.0).abs() < 1e-12);
        let m = random_matrix(7, 4, 10);
        assert!((spectral_norm(&m) - power_iteration(&m)).abs() < 1e-7);
        assert_eq!(spectral_norm(&m), singular_values(&m)[0]);
    }

    #[test]
    fn complement_is_orthogonal() {
        let s = column_space(&random_matrix(5, 2, 12)).unwrap();
        let c = orthogonal_complement(&s).unwrap();
        assert_eq!(c.dim(), 3);
        assert!((s.basis().transpose() * c.basis()).amax() < 1e-12);
    }

    #[test]
    fn subspace_json_round_trip() {
        let s = column_space(&random_matrix(4, 2, 13)).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Subspace = serde_json::from_str(&text).unwrap();
        assert!((back.basis() - s.basis()).amax() < 1e-15);
    }
}
