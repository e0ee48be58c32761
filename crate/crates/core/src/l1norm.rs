//! The gauge of `P = conv{±X_j}` as basis pursuit:
//! `‖y‖_P = min ‖β‖₁ subject to Aβ = y`.
//!
//! Solved as the standard-form LP `min Σ(β⁺ + β⁻)` s.t. `A(β⁺ − β⁻) = y`,
//! `β± ≥ 0` by a revised primal simplex. Variable `j < N` is `β⁺_j`,
//! variable `N + j` is `β⁻_j`. Pricing and the ratio test both use Bland's
//! rule (lowest eligible variable index), so the optimal vertex returned is
//! a deterministic function of `(A, y)`.
//!
//! The starting basis needs no phase 1: a well-conditioned set of `n`
//! columns is fixed once per matrix by pivoted QR, and each basic column is
//! taken with the sign that makes `B⁻¹y` non-negative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::numerics::{pivoted_qr, rank, RANK_TOL};

/// Feasibility tolerance is `FEAS_TOL · (1 + ‖y‖₂)`.
pub const FEAS_TOL: f64 = 1e-9;
pub const MEMBERSHIP_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 50;
/// Consecutive degenerate pivots after which [`Pricing::Hybrid`] falls back to Bland.
const DEGENERATE_RUN: usize = 20;

/// Entering-variable rule of the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pricing {
    /// Lowest-index eligible variable throughout.
    Bland,
    /// Most negative reduced cost (lowest index on ties); switches to Bland
    /// for the rest of the solve once a run of degenerate pivots occurs.
    #[default]
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub beta: Vec<f64>,
    pub l1: f64,
}

impl CoefficientVector {
    pub fn new(beta: Vec<f64>) -> Self {
        let l1 = beta.iter().map(|b| b.abs()).sum();
        Self { beta, l1 }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCertificate {
    pub value: f64,
    pub beta: CoefficientVector,
    /// `‖Aβ − y‖₂`.
    pub residual: f64,
    /// Dual vector `u`; `⟨y, u⟩ / max(1, ‖Aᵀu‖∞)` is a lower bound on `value`.
    pub dual: Vec<f64>,
    pub dual_gap: f64,
    pub iterations: usize,
}

/// Reusable solver bound to one matrix.
#[derive(Debug, Clone)]
pub struct L1Solver {
    matrix: DMatrix<f64>,
    start_columns: Vec<usize>,
    max_iterations: usize,
    pricing: Pricing,
}

impl L1Solver {
    pub fn new(ensemble: &Ensemble) -> Result<Self> {
        Self::from_matrix(ensemble.matrix().clone())
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let (n, big_n) = matrix.shape();
        if n == 0 || big_n < n {
            return Err(Error::Precondition(format!(
                "need an n×N matrix with N >= n >= 1, got {n}×{big_n}"
            )));
        }
        let r = rank(&matrix);
        if r < n {
            return Err(Error::RankDeficient { rank: r, rows: n });
        }
        let qr = pivoted_qr(&matrix, RANK_TOL);
        if qr.rank < n {
            return Err(Error::RankDeficient { rank: qr.rank, rows: n });
        }
        let mut start_columns = qr.perm[..n].to_vec();
        start_columns.sort_unstable();
        let max_iterations = 200 * (n + 2 * big_n);
        Ok(Self {
            matrix,
            start_columns,
            max_iterations,
            pricing: Pricing::default(),
        })
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = cap;
        self
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn column(&self, var: usize) -> DVector<f64> {
        let big_n = self.cols();
        let c = self.matrix.column(var % big_n).into_owned();
        if var >= big_n {
            -c
        } else {
            c
        }
    }

    fn basis_inverse(&self, basis: &[usize]) -> Result<DMatrix<f64>> {
        let cols: Vec<DVector<f64>> = basis.iter().map(|&v| self.column(v)).collect();
        DMatrix::from_columns(&cols)
            .try_inverse()
            .ok_or_else(|| Error::Contract("simplex basis became singular".into()))
    }

    pub fn solve(&self, y: &DVector<f64>) -> Result<NormCertificate> {
        let (n, big_n) = self.matrix.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("target has non-finite entries".into()));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Ok(NormCertificate {
                value: 0.0,
                beta: CoefficientVector::zeros(big_n),
                residual: 0.0,
                dual: vec![0.0; n],
                dual_gap: 0.0,
                iterations: 0,
            });
        }

        let mut basis = self.start_columns.clone();
        let mut binv = self.basis_inverse(&basis)?;
        let mut x = &binv * y;
        for i in 0..n {
            if x[i] < 0.0 {
                basis[i] += big_n;
                x[i] = -x[i];
                binv.row_mut(i).neg_mut();
            }
        }

        let ones = DVector::from_element(n, 1.0);
        let mut is_basic = vec![false; 2 * big_n];
        for &v in &basis {
            is_basic[v] = true;
        }

        let mut iterations = 0;
        let mut since_refactor = 0;
        let mut polished = false;
        let mut bland = self.pricing == Pricing::Bland;
        let mut degenerate_run = 0;
        loop {
            if since_refactor >= REFACTOR_EVERY {
                binv = self.basis_inverse(&basis)?;
                x = &binv * y;
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                since_refactor = 0;
            }
            let u = binv.tr_mul(&ones);
            let g = self.matrix.tr_mul(&u);

            let reduced = |v: usize| {
                if v < big_n {
                    1.0 - g[v]
                } else {
                    1.0 + g[v - big_n]
                }
            };
            let eligible = (0..2 * big_n).filter(|&v| !is_basic[v] && reduced(v) < -OPT_TOL);
            let entering = if bland {
                eligible.take(1).next()
            } else {
                eligible.fold(None, |best: Option<usize>, v| match best {
                    Some(b) if reduced(b) <= reduced(v) => Some(b),
                    _ => Some(v),
                })
            };

            let Some(entering) = entering else {
                // Optimal. Polish once from a fresh factorization, then certify.
                if !polished {
                    polished = true;
                    binv = self.basis_inverse(&basis)?;
                    x = &binv * y;
                    x.iter_mut().for_each(|v| *v = v.max(0.0));
                    since_refactor = 0;
                    continue;
                }
                return self.certify(y, &basis, &x, &u, iterations);
            };

            if iterations >= self.max_iterations {
                return Err(Error::SolverFailure {
                    iterations,
                    best_bound: x.sum(),
                });
            }

            let w = &binv * self.column(entering);
            let scale = w.amax().max(1.0);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..n {
                if w[i] > PIVOT_TOL * scale {
                    let theta = x[i] / w[i];
                    leave = match leave {
                        None => Some((i, theta)),
                        Some((r, best)) => {
                            let tie = (theta - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if (tie && basis[i] < basis[r]) || (!tie && theta < best) {
                                Some((i, theta))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                return Err(Error::Contract("L1 program reported unbounded".into()));
            };

            x.axpy(-theta, &w, 1.0);
            x[r] = theta;
            x.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            });
            is_basic[basis[r]] = false;
            is_basic[entering] = true;
            basis[r] = entering;

            let pivot = w[r];
            for j in 0..n {
                binv[(r, j)] /= pivot;
            }
            for j in 0..n {
                let pr = binv[(r, j)];
                if pr == 0.0 {
                    continue;
                }
                for i in 0..n {
                    if i != r {
                        binv[(i, j)] -= w[i] * pr;
                    }
                }
            }

            if theta <= 0.0 {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            iterations += 1;
            since_refactor += 1;
            polished = false;
        }
    }

    fn certify(
        &self,
        y: &DVector<f64>,
        basis: &[usize],
        x: &DVector<f64>,
        u: &DVector<f64>,
        iterations: usize,
    ) -> Result<NormCertificate> {
        let big_n = self.cols();
        let mut beta = vec![0.0; big_n];
        for (i, &var) in basis.iter().enumerate() {
            if var < big_n {
                beta[var] += x[i];
            } else {
                beta[var - big_n] -= x[i];
            }
        }
        let beta = CoefficientVector::new(beta);
        let residual = (&self.matrix * beta.to_dvector() - y).norm();
        let tol = FEAS_TOL * (1.0 + y.norm());
        if residual > tol {
            return Err(Error::Contract(format!(
                "simplex solution infeasible: residual {residual:e} > {tol:e}"
            )));
        }
        let slack = self.matrix.tr_mul(u).amax().max(1.0);
        let dual_value = y.dot(u) / slack;
        Ok(NormCertificate {
            value: beta.l1,
            dual_gap: beta.l1 - dual_value,
            beta,
            residual,
            dual: u.as_slice().to_vec(),
            iterations,
        })
    }
}

pub fn minkowski_norm(ensemble: &Ensemble, y: &DVector<f64>) -> Result<NormCertificate> {
    L1Solver::new(ensemble)?.solve(y)
}

pub fn coefficient_vector(ensemble: &Ensemble, y: &DVector<f64>) -> Result<CoefficientVector> {
    Ok(minkowski_norm(ensemble, y)?.beta)
}

/// `Σ σ_i y_i`.
pub fn sign_combination(ys: &[DVector<f64>], sigma: &[f64]) -> Result<DVector<f64>> {
    let first = ys
        .first()
        .ok_or_else(|| Error::Precondition("need at least one vector".into()))?;
    if sigma.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            found: sigma.len(),
        });
    }
    let mut sum = DVector::zeros(first.len());
    for (y, &s) in ys.iter().zip(sigma) {
        if y.len() != first.len() {
            return Err(Error::Precondition("vectors of unequal length".into()));
        }
        sum.axpy(s, y, 1.0);
    }
    Ok(sum)
}

/// `β^σ = β(Σ σ_i y_i)`.
pub fn sign_combination_beta(ensemble: &Ensemble, ys: &[DVector<f64>], sigma: &[f64]) -> Result<CoefficientVector> {
    if sigma.iter().any(|s| s.abs() != 1.0) {
        return Err(Error::Precondition("signs must be ±1".into()));
    }
    coefficient_vector(ensemble, &sign_combination(ys, sigma)?)
}

pub fn membership(ensemble: &Ensemble, x: &DVector<f64>) -> Result<bool> {
    Ok(minkowski_norm(ensemble, x)?.value <= 1.0 + MEMBERSHIP_TOL)
}
