//! ε-nets on the Grassmannian `G_{n,d}` under the projector spectral metric,
//! the projection-decomposition recursion, and projection-tail counts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::numerics::{column_space, pivoted_qr, row_major, singular_values, spectral_norm, Subspace};
use crate::rng::{derive_seed, SplitMix64};

/// Absolute tolerance for the rank of `(I − P_E)F`.
pub const RESIDUAL_RANK_TOL: f64 = 1e-10;

/// `‖P_E − P_F‖₂`: the sine of the largest principal angle for equal dims,
/// 1 otherwise.
pub fn subspace_distance(e: &Subspace, f: &Subspace) -> Result<f64> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            found: f.ambient_dim(),
        });
    }
    if e.dim() != f.dim() {
        return Ok(spectral_norm(&(e.projector() - f.projector())));
    }
    let (eb, fb) = (e.basis(), f.basis());
    let off = fb - eb * eb.tr_mul(fb);
    Ok(singular_values(&off)[0].min(1.0))
}

/// Uniform random `d`-subspace of `R^n`: span of a Gaussian `n × d` matrix.
pub fn random_subspace(rng: &mut SplitMix64, n: usize, d: usize) -> Subspace {
    loop {
        let g = DMatrix::from_vec(n, d, rng.gaussian_vec(n * d));
        if let Ok(s) = column_space(&g) {
            if s.dim() == d {
                return s;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrassmannNet {
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub entries: Vec<Subspace>,
    /// Largest distance from an audit sample to its nearest entry.
    pub coverage_audit: f64,
}

fn check_params(n: usize, d: usize, epsilon: f64) -> Result<()> {
    if d == 0 || 2 * d > n {
        return Err(Error::Precondition(format!("need 1 <= d <= n/2, got n = {n}, d = {d}")));
    }
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return Err(Error::Precondition(format!(
            "epsilon must lie in (0, 1/4], got {epsilon}"
        )));
    }
    Ok(())
}

/// Greedy farthest-point net over `sample_budget` random subspaces, with
/// entries pairwise more than `ε/2` apart. Coverage is measured on a fresh
/// batch of the same size and stored, not enforced.
pub fn greedy_net(n: usize, d: usize, epsilon: f64, sample_budget: usize, seed: u64) -> Result<GrassmannNet> {
    check_params(n, d, epsilon)?;
    if sample_budget == 0 {
        return Err(Error::Precondition("sample budget must be positive".into()));
    }
    let mut rng = SplitMix64::new(derive_seed(seed, 0));
    let samples: Vec<Subspace> = (0..sample_budget).map(|_| random_subspace(&mut rng, n, d)).collect();
    let mut entries = vec![samples[0].clone()];
    let mut gap: Vec<f64> = samples
        .iter()
        .map(|s| subspace_distance(&entries[0], s))
        .collect::<Result<_>>()?;
    loop {
        let (far, &dist) = gap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        if dist <= epsilon / 2.0 {
            break;
        }
        let entry = samples[far].clone();
        for (g, s) in gap.iter_mut().zip(&samples) {
            *g = g.min(subspace_distance(&entry, s)?);
        }
        entries.push(entry);
    }
    let mut net = GrassmannNet {
        n,
        d,
        epsilon,
        entries,
        coverage_audit: 0.0,
    };
    let mut audit_rng = SplitMix64::new(derive_seed(seed, 1));
    let mut worst: f64 = 0.0;
    for _ in 0..sample_budget {
        let s = random_subspace(&mut audit_rng, n, d);
        worst = worst.max(net.nearest(&s)?.1);
    }
    net.coverage_audit = worst;
    Ok(net)
}

/// [`greedy_net`] that fails unless every audit sample is within `ε`.
pub fn build_net(n: usize, d: usize, epsilon: f64, sample_budget: usize, seed: u64) -> Result<GrassmannNet> {
    let net = greedy_net(n, d, epsilon, sample_budget, seed)?;
    if net.coverage_audit > epsilon {
        return Err(Error::CoverageFailure {
            achieved: net.coverage_audit,
            epsilon,
        });
    }
    Ok(net)
}

impl GrassmannNet {
    /// Nearest entry and its distance; ties go to the lowest index.
    pub fn nearest(&self, f: &Subspace) -> Result<(usize, f64)> {
        if f.ambient_dim() != self.n || f.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: f.dim(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let dist = subspace_distance(e, f)?;
            if dist < best.1 {
                best = (i, dist);
            }
        }
        Ok(best)
    }

    /// Smallest pairwise distance between entries (`inf` for one entry).
    pub fn packing_radius(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for i in 0..self.entries.len() {
            for j in i + 1..self.entries.len() {
                min = min.min(subspace_distance(&self.entries[i], &self.entries[j])?);
            }
        }
        Ok(min)
    }

    pub fn to_json(&self) -> String {
        let file = NetFile {
            n: self.n,
            d: self.d,
            epsilon: self.epsilon,
            coverage_audit: self.coverage_audit,
            entries: self.entries.iter().map(|e| row_major(e.basis())).collect(),
        };
        serde_json::to_string(&file).expect("net serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("net JSON: {e}")))?;
        check_params(file.n, file.d, file.epsilon)?;
        let entries = file
            .entries
            .into_iter()
            .map(|data| {
                if data.len() != file.n * file.d {
                    return Err(Error::DimensionMismatch {
                        expected: file.n * file.d,
                        found: data.len(),
                    });
                }
                Subspace::from_orthonormal(DMatrix::from_row_slice(file.n, file.d, &data))
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(Error::InvalidConfig("net has no entries".into()));
        }
        Ok(Self {
            n: file.n,
            d: file.d,
            epsilon: file.epsilon,
            entries,
            coverage_audit: file.coverage_audit,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetFile {
    n: usize,
    d: usize,
    epsilon: f64,
    #[serde(default)]
    coverage_audit: f64,
    entries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DecompositionStep {
    /// Net entry `E_{i_j}` used at this step.
    pub index: usize,
    /// `‖P_{F_{j−1}} − P_E‖`.
    pub distance: f64,
    pub d: DMatrix<f64>,
    /// `2ε^{j−1}`.
    pub norm_bound: f64,
}

/// The `d`-dimensional `F* ⊂ E^⊥` containing `E^⊥ ∩ (E + F)`, padded with
/// the first standard directions left over after Gram–Schmidt against `E + F`.
fn residual_subspace(e: &Subspace, f: &Subspace) -> (Subspace, DMatrix<f64>) {
    let (n, d) = (e.ambient_dim(), e.dim());
    let eb = e.basis();
    let g = f.basis() - eb * eb.tr_mul(f.basis());
    let qr = pivoted_qr(&g, 0.0);
    let r = (0..d.min(n))
        .take_while(|&i| qr.r[(i, i)].abs() > RESIDUAL_RANK_TOL)
        .count();
    let tilde = qr.q.columns(0, r).into_owned();
    let p_sum = eb * eb.transpose() + &tilde * tilde.transpose();

    let mut frame: Vec<DVector<f64>> = eb.column_iter().map(|c| c.into_owned()).collect();
    frame.extend(tilde.column_iter().map(|c| c.into_owned()));
    let mut out: Vec<DVector<f64>> = tilde.column_iter().map(|c| c.into_owned()).collect();
    let threshold = 0.5 / (n as f64).sqrt();
    for i in 0..n {
        if out.len() == d {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for u in &frame {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > threshold {
            v /= norm;
            frame.push(v.clone());
            out.push(v);
        }
    }
    (Subspace::from_orthonormal_unchecked(DMatrix::from_columns(&out)), p_sum)
}

fn check_subspace(net: &GrassmannNet, f: &Subspace, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Precondition("term count must be >= 1".into()));
    }
    if f.ambient_dim() != net.n || f.dim() != net.d {
        return Err(Error::DimensionMismatch {
            expected: net.d,
            found: f.dim(),
        });
    }
    Ok(())
}

/// One step of the recursion against entry `e`: returns `(Ã, B, F_j)`.
fn step(e: &Subspace, f: &Subspace) -> (DMatrix<f64>, DMatrix<f64>, Subspace) {
    let n = e.ambient_dim();
    let (next, p_sum) = residual_subspace(e, f);
    let b = (f.projector() - e.projector()) * p_sum;
    let a = DMatrix::identity(n, n) + &b;
    (a, b, next)
}

fn run(
    net: &mut GrassmannNet,
    f: &Subspace,
    m: usize,
    mut on_miss: impl FnMut(&mut GrassmannNet, &Subspace, usize, f64) -> Result<usize>,
) -> Result<Vec<DecompositionStep>> {
    check_subspace(net, f, m)?;
    let n = net.n;
    let mut current = f.clone();
    let mut prod = DMatrix::<f64>::identity(n, n);
    let mut steps = Vec::with_capacity(m);
    for j in 1..=m {
        let (mut index, mut distance) = net.nearest(&current)?;
        if distance > net.epsilon {
            index = on_miss(net, &current, j, distance)?;
            distance = subspace_distance(&net.entries[index], &current)?;
        }
        let (a, b, next) = step(&net.entries[index], &current);
        steps.push(DecompositionStep {
            index,
            distance,
            d: &prod * a,
            norm_bound: 2.0 * net.epsilon.powi(j as i32 - 1),
        });
        prod = &prod * b;
        if prod.iter().all(|&x| x == 0.0) {
            break;
        }
        current = next;
    }
    Ok(steps)
}

/// `P_F = Σ_j D_j P_{E_{i_j}} + (∏ B_j) P_{F_m}`, computed for `m` terms (fewer
/// if the product of the `B_j` vanishes exactly). Fails on the first step whose
/// subspace is farther than `ε` from every net entry.
pub fn decompose_projection(net: &GrassmannNet, f: &Subspace, m: usize) -> Result<Vec<DecompositionStep>> {
    let epsilon = net.epsilon;
    let mut net = net.clone();
    run(&mut net, f, m, |_, _, step, distance| {
        Err(Error::NetCoverageViolation {
            step,
            distance,
            epsilon,
        })
    })
}

/// Like [`decompose_projection`], but a step that misses the net inserts a new
/// entry at distance `0.45ε` from the current subspace instead of failing.
/// The inserted entry is more than `ε/2` from every old entry, so packing is
/// preserved. Returns the steps and the number of inserted entries.
pub fn decompose_projection_extending(
    net: &mut GrassmannNet,
    f: &Subspace,
    m: usize,
) -> Result<(Vec<DecompositionStep>, usize)> {
    let mut inserted = 0;
    let steps = run(net, f, m, |net, current, _, _| {
        net.entries.push(rotate_away(current, 0.45 * net.epsilon));
        inserted += 1;
        Ok(net.entries.len() - 1)
    })?;
    Ok((steps, inserted))
}

/// A subspace at distance exactly `sin θ = s` from `f`: its first basis
/// vector is tilted toward the first standard direction outside `f`.
pub fn rotate_away(f: &Subspace, s: f64) -> Subspace {
    let n = f.ambient_dim();
    let fb = f.basis();
    let mut w = DVector::zeros(n);
    let threshold = 0.5 / (n as f64).sqrt();
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            let c = fb.tr_mul(&v);
            v -= fb * c;
        }
        if v.norm() > threshold {
            w = &v / v.norm();
            break;
        }
    }
    let c = (1.0 - s * s).sqrt();
    let mut basis = fb.clone();
    let tilted = fb.column(0) * c + w * s;
    basis.set_column(0, &tilted);
    Subspace::from_orthonormal_unchecked(basis)
}

/// `‖P_F − Σ_{j<=m} D_j P_{E_{i_j}}‖₂` for `m = 1..=steps.len()`.
pub fn decomposition_residuals(net: &GrassmannNet, f: &Subspace, steps: &[DecompositionStep]) -> Vec<f64> {
    let mut acc = f.projector();
    steps
        .iter()
        .map(|s| {
            acc -= &s.d * net.entries[s.index].projector();
            spectral_norm(&acc)
        })
        .collect()
}

/// `2ε^m/(1 − ε)`.
pub fn residual_bound(epsilon: f64, m: usize) -> f64 {
    2.0 * epsilon.powi(m as i32) / (1.0 - epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCount {
    pub count: usize,
    pub bound: f64,
}

/// `#{j : ‖P_F X_j‖₂ > 8s√d}` against `2C²N log₂(s)/s²`.
pub fn projection_tail_counts(ensemble: &Ensemble, f: &Subspace, s: f64, c: f64) -> Result<TailCount> {
    if f.ambient_dim() != ensemble.n() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.n(),
            found: f.ambient_dim(),
        });
    }
    if !(s >= c) {
        return Err(Error::Precondition(format!("s = {s} is below C = {c}")));
    }
    let threshold = 8.0 * s * (f.dim() as f64).sqrt();
    let coords = f.basis().tr_mul(ensemble.matrix());
    let count = coords.column_iter().filter(|col| col.norm() > threshold).count();
    let big_n = ensemble.big_n() as f64;
    Ok(TailCount {
        count,
        bound: 2.0 * c * c * big_n * s.log2() / (s * s),
    })
}
