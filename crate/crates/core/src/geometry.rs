//! In-radius sandwiches, support functions, compressibility distances,
//! kernel incompressibility scans, the singular-value event Ω and the
//! `AᵀA ≈ n·Id` residual diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::l1norm::CoefficientVector;
use crate::numerics::{eigh, kernel_basis, orthonormal_basis, rank, singular_values};
use crate::rng::{derive_seed, SplitMix64};

const STREAM_INRADIUS: u64 = 0x1A;
const STREAM_RELATIVE: u64 = 0x1B;
const STREAM_SUBSETS: u64 = 0x1C;

/// `h_P(y) = max_j |⟨X_j, y⟩|`.
pub fn support_function(ensemble: &Ensemble, y: &DVector<f64>) -> f64 {
    support_of(ensemble.matrix(), y)
}

fn support_of(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    a.tr_mul(y).amax()
}

fn lower_of(a: &DMatrix<f64>) -> Result<f64> {
    let r = rank(a);
    if r < a.nrows() {
        return Err(Error::RankDeficient {
            rank: r,
            rows: a.nrows(),
        });
    }
    let s = singular_values(a);
    Ok(s[a.nrows() - 1] / (a.ncols() as f64).sqrt())
}

/// `s_min(Aᵀ)/√N`, a lower bound on the in-radius of `P`.
pub fn inradius_lower(ensemble: &Ensemble) -> Result<f64> {
    lower_of(ensemble.matrix())
}

/// Minimum of the support function over `budget` unit directions: half of
/// them sampled (coordinate axes first, then uniform), the rest spent on a
/// (1+1) evolution-strategy descent from the best sample.
fn upper_of(a: &DMatrix<f64>, budget: usize, seed: u64) -> f64 {
    let n = a.nrows();
    let budget = budget.max(1);
    let descent = budget / 2;
    let sampled = budget - descent;
    let mut rng = SplitMix64::new(seed);
    let mut best_u = DVector::zeros(n);
    let mut best = f64::INFINITY;
    for i in 0..sampled {
        let u = if i < n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        } else {
            DVector::from_vec(rng.unit_vector(n))
        };
        let v = support_of(a, &u);
        if v < best {
            best = v;
            best_u = u;
        }
    }
    let mut step = 0.3;
    let scale = 1.0 / (n as f64).sqrt();
    for _ in 0..descent {
        let g = DVector::from_vec(rng.gaussian_vec(n));
        let mut cand = &best_u + g * (step * scale);
        let norm = cand.norm();
        if norm == 0.0 {
            continue;
        }
        cand /= norm;
        let v = support_of(a, &cand);
        if v < best {
            best = v;
            best_u = cand;
            step = (step * 1.5).min(1.0);
        } else {
            step = (step * 0.9).max(1e-9);
        }
    }
    best
}

/// A valid upper bound on the in-radius: every unit direction `u` gives
/// `r(P) <= h_P(u)`.
pub fn inradius_upper(ensemble: &Ensemble, budget: usize) -> f64 {
    let seed = derive_seed(ensemble.config().seed, STREAM_INRADIUS);
    upper_of(ensemble.matrix(), budget, seed)
}

/// In-radius sandwich of `conv{±X_j : j ∈ I}` inside `span{X_j : j ∈ I}`.
pub fn relative_inradius_bounds(ensemble: &Ensemble, indices: &[usize], budget: usize) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::Precondition("index set must be nonempty".into()));
    }
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&j) = idx.iter().find(|&&j| j >= ensemble.big_n()) {
        return Err(Error::Precondition(format!("index {j} out of range")));
    }
    let cols: Vec<DVector<f64>> = idx.iter().map(|&j| ensemble.column(j)).collect();
    let span = orthonormal_basis(&cols)?;
    let coords = span.basis().tr_mul(&ensemble.columns(&idx));
    let lower = lower_of(&coords)?;
    let seed = derive_seed(ensemble.config().seed, STREAM_RELATIVE);
    let upper = upper_of(&coords, budget, seed);
    Ok((lower, upper))
}

/// Number of entries kept by a `δN`-sparse approximation: `⌈δN⌉`, at least 1.
pub fn sparse_count(delta: f64, len: usize) -> usize {
    let x = delta * len as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k.max(1.0) as usize).min(len)
}

fn tail_norm(v: &[f64], keep: usize) -> f64 {
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    sq[keep.min(sq.len())..].iter().sum::<f64>().sqrt()
}

/// Euclidean distance from `beta/‖beta‖₂` to the `⌈δN⌉`-sparse vectors.
pub fn compressibility_distance(beta: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1), got {delta}")));
    }
    let norm = beta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Precondition("vector must be nonzero and finite".into()));
    }
    let unit: Vec<f64> = beta.iter().map(|x| x / norm).collect();
    Ok(tail_norm(&unit, sparse_count(delta, beta.len())))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelScanParams {
    pub delta: f64,
    pub rho: f64,
    pub trials: usize,
    /// Support-targeted probes run after the random ones.
    pub adversarial: usize,
    pub seed: u64,
    /// Keep every probe vector in the report.
    pub keep_probes: bool,
}

impl KernelScanParams {
    pub fn new(delta: f64, rho: f64, trials: usize, seed: u64) -> Self {
        Self {
            delta,
            rho,
            trials,
            adversarial: 64,
            seed,
            keep_probes: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelScanReport {
    pub kernel_dim: usize,
    pub probes: usize,
    pub min_distance: f64,
    pub random_min: f64,
    pub adversarial_min: f64,
    pub violations: usize,
    #[serde(skip)]
    pub probe_vectors: Vec<Vec<f64>>,
    #[serde(skip)]
    pub distances: Vec<f64>,
}

fn top_indices(v: &DVector<f64>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Unit kernel vector maximizing the mass on `support`.
fn kernel_vector_on(k: &DMatrix<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let ks = k.select_rows(support);
    let gram = &ks * ks.transpose();
    let eig = eigh(&gram).ok()?;
    let w = ks.tr_mul(&eig.vectors.column(0));
    let wn = w.norm();
    if wn < 1e-14 {
        return None;
    }
    let v = k * (w / wn);
    let vn = v.norm();
    (vn > 0.0).then(|| v / vn)
}

/// Samples uniform unit vectors of `ker A` plus support-targeted adversarial
/// probes, and records their compressibility distances.
pub fn kernel_incompressibility_scan(ensemble: &Ensemble, params: KernelScanParams) -> Result<KernelScanReport> {
    if ensemble.big_n() <= ensemble.n() {
        return Err(Error::EmptyKernel);
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(Error::Precondition(format!(
            "delta must lie in (0, 1), got {}",
            params.delta
        )));
    }
    let kernel = kernel_basis(ensemble.matrix())?;
    let k = kernel.basis();
    let dim = kernel.dim();
    let big_n = ensemble.big_n();
    let keep = sparse_count(params.delta, big_n);

    let random: Vec<(f64, Vec<f64>)> = (0..params.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(derive_seed(params.seed, i));
            let g = DVector::from_vec(rng.gaussian_vec(dim));
            let v = k * g;
            let v = &v / v.norm();
            (tail_norm(v.as_slice(), keep), v.as_slice().to_vec())
        })
        .collect();

    let adversarial: Vec<(f64, Vec<f64>)> = (0..params.adversarial as u64)
        .into_par_iter()
        .filter_map(|a| {
            let mut rng = SplitMix64::new(derive_seed(params.seed, (1 << 40) + a));
            let mut support = if a % 2 == 0 {
                rng.subset(big_n, keep)
            } else {
                let g = DVector::from_vec(rng.gaussian_vec(dim));
                top_indices(&(k * g), keep)
            };
            let mut best: Option<(f64, DVector<f64>)> = None;
            for _ in 0..8 {
                let Some(v) = kernel_vector_on(k, &support) else { break };
                let d = tail_norm(v.as_slice(), keep);
                let next = top_indices(&v, keep);
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, v));
                }
                if next == support {
                    break;
                }
                support = next;
            }
            best.map(|(d, v)| (d, v.as_slice().to_vec()))
        })
        .collect();

    let min_of = |xs: &[(f64, Vec<f64>)]| xs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let random_min = min_of(&random);
    let adversarial_min = min_of(&adversarial);
    let all: Vec<(f64, Vec<f64>)> = random.into_iter().chain(adversarial).collect();
    let violations = all.iter().filter(|x| x.0 < params.rho).count();
    let (distances, vectors): (Vec<f64>, Vec<Vec<f64>>) = all.into_iter().unzip();
    Ok(KernelScanReport {
        kernel_dim: dim,
        probes: distances.len(),
        min_distance: random_min.min(adversarial_min),
        random_min,
        adversarial_min,
        violations,
        probe_vectors: if params.keep_probes { vectors } else { Vec::new() },
        distances: if params.keep_probes { distances } else { Vec::new() },
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EventConstants {
    pub c: f64,
    pub subset_budget: usize,
    pub norm_factor: f64,
}

impl Default for EventConstants {
    fn default() -> Self {
        Self {
            c: 0.01,
            subset_budget: 100_000,
            norm_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubCondition {
    pub holds: bool,
    pub margin: f64,
}

impl SubCondition {
    fn from_margin(margin: f64) -> Self {
        Self {
            holds: margin >= 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventReport {
    /// `‖A‖ <= 4√N`.
    pub norm_bound: SubCondition,
    /// `s_min(Aᵀ) >= (√N − √n)/2`.
    pub smin_bound: SubCondition,
    /// Two-sided band on the singular values of `A_J`, `1 <= |J| <= c·n`.
    pub sparse_band: SubCondition,
    pub all_hold: bool,
    pub subsets_checked: usize,
    pub exhaustive: bool,
    pub spectral_norm: f64,
    pub smin: f64,
    pub constants_used: EventConstants,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn event_sparse_singular(ensemble: &Ensemble, constants: EventConstants) -> Result<EventReport> {
    if !(constants.c > 0.0 && constants.c <= 0.01) {
        return Err(Error::Precondition(format!(
            "c must lie in (0, 1/100], got {}",
            constants.c
        )));
    }
    let a = ensemble.matrix();
    let (n, big_n) = (ensemble.n(), ensemble.big_n());
    let s = singular_values(a);
    let spectral = s[0];
    let smin = s[n - 1];
    let norm_bound = SubCondition::from_margin(constants.norm_factor * (big_n as f64).sqrt() - spectral);
    let smin_bound = SubCondition::from_margin(smin - ((big_n as f64).sqrt() - (n as f64).sqrt()) / 2.0);

    let max_size = ((constants.c * n as f64 + 1e-9).floor() as usize).min(big_n);
    let nf = n as f64;
    let mut band_margin = f64::INFINITY;
    let mut check = |j: &[usize]| {
        let sv = singular_values(&a.select_columns(j));
        let ratio = j.len() as f64 / nf;
        let w = ratio.sqrt() * (nf / j.len() as f64).ln();
        let lower = nf.sqrt() * (1.0 - w);
        let upper = nf.sqrt() * (1.0 + w);
        let m = (sv[sv.len() - 1] - lower).min(upper - sv[0]);
        band_margin = band_margin.min(m);
    };
    let total: f64 = (1..=max_size).map(|k| binomial(big_n, k)).sum();
    let exhaustive = total <= constants.subset_budget as f64;
    let subsets_checked;
    if exhaustive {
        for k in 1..=max_size {
            for_each_subset(big_n, k, &mut check);
        }
        subsets_checked = total as usize;
    } else {
        let mut rng = SplitMix64::new(derive_seed(ensemble.config().seed, STREAM_SUBSETS));
        for _ in 0..constants.subset_budget {
            let mut u = rng.uniform() * total;
            let mut size = max_size;
            for k in 1..=max_size {
                let w = binomial(big_n, k);
                if u < w {
                    size = k;
                    break;
                }
                u -= w;
            }
            check(&rng.subset(big_n, size));
        }
        subsets_checked = constants.subset_budget;
    }
    // No subsets to check: the condition is vacuous.
    if subsets_checked == 0 {
        band_margin = 0.0;
    }
    let sparse_band = SubCondition::from_margin(band_margin);
    Ok(EventReport {
        all_hold: norm_bound.holds && smin_bound.holds && sparse_band.holds,
        norm_bound,
        smin_bound,
        sparse_band,
        subsets_checked,
        exhaustive,
        spectral_norm: spectral,
        smin,
        constants_used: constants,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualConstants {
    /// Largest allowed `|T|/n`.
    pub c: f64,
    pub c1: f64,
}

impl Default for ResidualConstants {
    fn default() -> Self {
        Self { c: 0.01, c1: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ApproxResidual {
    pub residual: f64,
    pub bound: f64,
}

/// `‖(AᵀAβ)_T − nβ_T‖₂` against `C₁n‖β_T‖ log(n/|T|) √(|T|/n) + 16N‖β_{T^c}‖`.
pub fn approx_residual(
    ensemble: &Ensemble,
    beta: &[f64],
    t: &[usize],
    constants: ResidualConstants,
) -> Result<ApproxResidual> {
    let (n, big_n) = (ensemble.n(), ensemble.big_n());
    if beta.len() != big_n {
        return Err(Error::DimensionMismatch {
            expected: big_n,
            found: beta.len(),
        });
    }
    let mut t = t.to_vec();
    t.sort_unstable();
    t.dedup();
    if t.is_empty() {
        return Err(Error::Precondition("T must be nonempty".into()));
    }
    if t.iter().any(|&j| j >= big_n) {
        return Err(Error::Precondition("T has an index out of range".into()));
    }
    if t.len() as f64 > constants.c * n as f64 + 1e-9 {
        return Err(Error::Precondition(format!(
            "|T| = {} exceeds c·n = {}",
            t.len(),
            constants.c * n as f64
        )));
    }
    let a = ensemble.matrix();
    let z = a * DVector::from_column_slice(beta);
    let nf = n as f64;
    let mut in_t = vec![false; big_n];
    let mut res_sq = 0.0;
    let mut bt_sq = 0.0;
    for &j in &t {
        in_t[j] = true;
        res_sq += (a.column(j).dot(&z) - nf * beta[j]).powi(2);
        bt_sq += beta[j] * beta[j];
    }
    let tc_sq: f64 = (0..big_n).filter(|&j| !in_t[j]).map(|j| beta[j] * beta[j]).sum();
    let tf = t.len() as f64;
    let bound =
        constants.c1 * nf * bt_sq.sqrt() * (nf / tf).ln() * (tf / nf).sqrt() + 16.0 * big_n as f64 * tc_sq.sqrt();
    Ok(ApproxResidual {
        residual: res_sq.sqrt(),
        bound,
    })
}

/// Indices with `|β_j| >= τ`.
pub fn t_sigma_set(beta: &CoefficientVector, tau: f64) -> Result<Vec<usize>> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    Ok(beta
        .beta
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() >= tau)
        .map(|(j, _)| j)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_ensemble, EnsembleConfig};

    fn identity(n: usize, scale: f64) -> Ensemble {
        Ensemble::from_matrix(DMatrix::identity(n, n) * scale, 0).unwrap()
    }

    #[test]
    fn support_function_examples() {
        let e = identity(2, 1.0);
        let y = DVector::from_vec(vec![0.6, 0.8]);
        assert!((support_function(&e, &y) - 0.8).abs() < 1e-15);
        assert_eq!(support_function(&e, &DVector::zeros(2)), 0.0);
    }

    #[test]
    fn inradius_of_cross_polytope() {
        for n in [2, 3, 5] {
            let e = identity(n, 1.0);
            let lo = inradius_lower(&e).unwrap();
            assert!((lo - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn inradius_lower_rejects_rank_deficiency() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let e = Ensemble::from_matrix(a, 0).unwrap();
        assert!(matches!(inradius_lower(&e), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn inradius_upper_examples() {
        let e = identity(2, 1.0);
        assert_eq!(inradius_upper(&e, 1), 1.0);
        let up = inradius_upper(&e, 10_000);
        let exact = 1.0 / 2f64.sqrt();
        assert!(up >= exact - 1e-12 && up <= exact * 1.01, "{up}");
    }

    #[test]
    fn sandwich_on_random_instances() {
        for seed in 0..5 {
            let e = sample_ensemble(&EnsembleConfig::new(4, 9, seed)).unwrap();
            let lo = inradius_lower(&e).unwrap();
            let up = inradius_upper(&e, 500);
            assert!(lo <= up + 1e-9);
        }
    }

    #[test]
    fn relative_inradius_examples() {
        let e = sample_ensemble(&EnsembleConfig::new(4, 8, 3)).unwrap();
        let (lo, up) = relative_inradius_bounds(&e, &[5], 10).unwrap();
        let len = e.column(5).norm();
        assert!((lo - len).abs() < 1e-12 && (up - len).abs() < 1e-12);

        let n = 4;
        let e = identity(n, (n as f64).sqrt());
        let (lo, up) = relative_inradius_bounds(&e, &[0, 1, 2, 3], 2000).unwrap();
        assert!(lo <= 1.0 + 1e-12 && up >= 1.0 - 1e-12);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!(relative_inradius_bounds(&e, &[], 10).is_err());
    }

    #[test]
    fn compressibility_examples() {
        let d = compressibility_distance(&[0.5; 4], 0.5).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(compressibility_distance(&[1.0, 0.0, 0.0], 0.2).unwrap(), 0.0);
        // Unnormalized input is normalized first.
        assert!((compressibility_distance(&[2.0; 4], 0.5).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(compressibility_distance(&[0.0; 3], 0.5).is_err());
    }

    #[test]
    fn sparse_count_rounding() {
        assert_eq!(sparse_count(0.1, 30), 3);
        assert_eq!(sparse_count(0.02, 120), 3);
        assert_eq!(sparse_count(0.001, 10), 1);
        assert_eq!(sparse_count(0.25, 8), 2);
    }

    #[test]
    fn kernel_scan_square_is_error() {
        let e = sample_ensemble(&EnsembleConfig::new(3, 3, 1)).unwrap();
        let p = KernelScanParams::new(0.1, 0.05, 10, 0);
        assert!(matches!(kernel_incompressibility_scan(&e, p), Err(Error::EmptyKernel)));
    }

    #[test]
    fn kernel_scan_one_dimensional_kernel() {
        let e = sample_ensemble(&EnsembleConfig::new(4, 5, 1)).unwrap();
        let mut p = KernelScanParams::new(0.2, 0.05, 20, 3);
        p.adversarial = 0;
        p.keep_probes = true;
        let r = kernel_incompressibility_scan(&e, p).unwrap();
        assert_eq!(r.kernel_dim, 1);
        for d in &r.distances {
            assert!((d - r.distances[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_probes_lie_in_kernel() {
        let e = sample_ensemble(&EnsembleConfig::new(5, 9, 2)).unwrap();
        let mut p = KernelScanParams::new(0.2, 0.05, 10, 3);
        p.adversarial = 6;
        p.keep_probes = true;
        let r = kernel_incompressibility_scan(&e, p).unwrap();
        assert_eq!(r.probes, r.probe_vectors.len());
        for v in &r.probe_vectors {
            let v = DVector::from_column_slice(v);
            assert!((e.matrix() * &v).norm() < 1e-10);
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        assert!(r.adversarial_min.is_finite());
    }

    #[test]
    fn event_scaled_identity() {
        let n = 100;
        let e = identity(n, (n as f64).sqrt());
        let r = event_sparse_singular(&e, EventConstants::default()).unwrap();
        assert!(r.norm_bound.holds && r.smin_bound.holds && r.sparse_band.holds);
        assert_eq!(r.subsets_checked, n);
        assert!(r.exhaustive);
        assert!((r.sparse_band.margin - (n as f64).sqrt() * 0.1 * 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn event_vacuous_band_and_range() {
        let e = sample_ensemble(&EnsembleConfig::new(50, 100, 1)).unwrap();
        let r = event_sparse_singular(&e, EventConstants::default()).unwrap();
        assert_eq!(r.subsets_checked, 0);
        assert!(r.sparse_band.holds);
        assert!(r.all_hold);
        let bad = EventConstants {
            c: 0.5,
            ..Default::default()
        };
        assert!(event_sparse_singular(&e, bad).is_err());
    }

    #[test]
    fn event_sampled_when_over_budget() {
        let e = sample_ensemble(&EnsembleConfig::new(200, 220, 2)).unwrap();
        let k = EventConstants {
            c: 0.01,
            subset_budget: 50,
            norm_factor: 4.0,
        };
        let r = event_sparse_singular(&e, k).unwrap();
        assert!(!r.exhaustive);
        assert_eq!(r.subsets_checked, 50);
    }

    #[test]
    fn subsets_enumerated_in_order() {
        let mut all = Vec::new();
        for_each_subset(4, 2, |s| all.push(s.to_vec()));
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
    }

    #[test]
    fn residual_examples() {
        let e = identity(4, 2.0);
        let k = ResidualConstants { c: 1.0, c1: 1.0 };
        let r = approx_residual(&e, &[1.0, 0.0, 0.0, 0.0], &[0], k).unwrap();
        assert!(r.residual.abs() < 1e-12);
        let r = approx_residual(&e, &[0.0; 4], &[1, 2], k).unwrap();
        assert_eq!((r.residual, r.bound), (0.0, 0.0));
        assert!(approx_residual(&e, &[0.0; 4], &[], k).is_err());
        assert!(approx_residual(&e, &[0.0; 4], &[0], ResidualConstants::default()).is_err());
    }

    #[test]
    fn residual_matches_direct_recomputation() {
        let e = sample_ensemble(&EnsembleConfig::new(30, 60, 4)).unwrap();
        let t = [3, 17, 40];
        let mut beta = vec![0.0; 60];
        for (i, &j) in t.iter().enumerate() {
            beta[j] = 0.5 + i as f64;
        }
        let k = ResidualConstants { c: 0.1, c1: 1.0 };
        let r = approx_residual(&e, &beta, &t, k).unwrap();
        let at = e.columns(&t);
        let bt = DVector::from_vec(t.iter().map(|&j| beta[j]).collect());
        let direct = ((at.transpose() * &at - DMatrix::identity(3, 3) * 30.0) * bt).norm();
        assert!((r.residual - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn t_sigma_examples() {
        let b = CoefficientVector::new(vec![0.5, 0.1, 0.5]);
        assert_eq!(t_sigma_set(&b, 0.3).unwrap(), vec![0, 2]);
        assert!(t_sigma_set(&b, 0.6).unwrap().is_empty());
        let b = CoefficientVector::new(vec![0.0, -1e-8, 0.0, 2.0]);
        assert_eq!(t_sigma_set(&b, 1e-300).unwrap(), vec![1, 3]);
        assert!(t_sigma_set(&b, 0.0).is_err());
    }
}
