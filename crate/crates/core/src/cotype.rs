//! Rademacher averages and cotype estimates under arbitrary norm oracles,
//! plus the sign-combination statistics used to study spans of vector
//! families: dyadic covariance bands, the irregular index set `J(t)`, the
//! `m_δ` coefficient histogram, and the spans-of-comparable-norms probe.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::l1norm::{sign_combination, CoefficientVector, L1Solver};
use crate::numerics::{eigh, orthonormal_basis, Subspace};
use crate::rng::SplitMix64;

/// Largest `k` for which all `2^k` sign vectors are enumerated.
pub const MAX_EXACT_K: usize = 20;
/// Largest `k` for exact enumeration when every evaluation is an LP solve.
pub const MAX_EXACT_K_LP: usize = 16;

/// A norm on `R^dim`. Evaluations must be pure; they run concurrently.
pub trait NormOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn norm(&self, x: &DVector<f64>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct Euclidean {
    pub dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SupNorm {
    pub dim: usize,
}

fn check_len(expected: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

impl NormOracle for Euclidean {
    fn dim(&self) -> usize {
        self.dim
    }

    fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(self.dim, x)?;
        Ok(x.norm())
    }
}

impl NormOracle for SupNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(self.dim, x)?;
        Ok(x.amax())
    }
}

/// The polytope gauge `‖·‖_P`.
impl NormOracle for L1Solver {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.solve(x)?.value)
    }
}

impl<T: NormOracle + ?Sized> NormOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        (**self).norm(x)
    }
}

/// `‖(x_1, …, x_m)‖ = (Σ ‖x_i‖_i^q)^{1/q}` on consecutive coordinate blocks.
pub struct LqDirectSum {
    components: Vec<Box<dyn NormOracle>>,
    q: f64,
}

impl LqDirectSum {
    pub fn new(components: Vec<Box<dyn NormOracle>>, q: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Precondition("direct sum needs a component".into()));
        }
        if q.is_nan() || q < 1.0 {
            return Err(Error::Precondition(format!("q must be >= 1, got {q}")));
        }
        Ok(Self { components, q })
    }
}

impl NormOracle for LqDirectSum {
    fn dim(&self) -> usize {
        self.components.iter().map(|c| c.dim()).sum()
    }

    fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(self.dim(), x)?;
        let mut offset = 0;
        let mut parts = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let block = x.rows(offset, c.dim()).into_owned();
            parts.push(c.norm(&block)?);
            offset += c.dim();
        }
        lq_direct_sum_norm(&parts, self.q)
    }
}

pub fn lq_direct_sum_norm(component_norms: &[f64], q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::Precondition(format!("q must be >= 1, got {q}")));
    }
    if let Some(bad) = component_norms.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Precondition(format!(
            "component norms must be non-negative, got {bad}"
        )));
    }
    if q.is_infinite() {
        return Ok(component_norms.iter().cloned().fold(0.0, f64::max));
    }
    // Scale by the largest entry so large q cannot overflow.
    let top = component_norms.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = component_norms.iter().map(|v| (v / top).powf(q)).sum();
    Ok(top * sum.powf(1.0 / q))
}

/// Checks homogeneity and the triangle inequality on `probes` random triples.
pub fn check_norm_axioms(oracle: &dyn NormOracle, probes: usize, seed: u64) -> Result<()> {
    let mut rng = SplitMix64::new(seed);
    let dim = oracle.dim();
    for _ in 0..probes {
        let x = DVector::from_vec(rng.gaussian_vec(dim));
        let y = DVector::from_vec(rng.gaussian_vec(dim));
        let lambda = rng.gaussian() * 3.0;
        let nx = oracle.norm(&x)?;
        let ny = oracle.norm(&y)?;
        if nx < 0.0 {
            return Err(Error::Precondition("oracle returned a negative norm".into()));
        }
        let scaled = oracle.norm(&(&x * lambda))?;
        if (scaled - lambda.abs() * nx).abs() > 1e-9 * (1.0 + lambda.abs() * nx) {
            return Err(Error::Precondition(format!(
                "homogeneity fails: {scaled} vs {}",
                lambda.abs() * nx
            )));
        }
        let sum = oracle.norm(&(&x + &y))?;
        if sum > nx + ny + 1e-9 * (1.0 + nx + ny) {
            return Err(Error::Precondition(format!(
                "triangle inequality fails: {sum} > {nx} + {ny}"
            )));
        }
    }
    Ok(())
}

/// How to average over sign vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SignMode {
    /// All `2^k` sign vectors.
    Exact,
    /// `trials` independent uniform sign vectors.
    MonteCarlo { trials: usize, seed: u64 },
}

/// Sign vector number `index` among those with `σ_1 = +1`; bit `i − 1` of
/// `index` set means `σ_i = −1`.
pub fn half_cube_signs(k: usize, index: u64) -> Vec<f64> {
    let mut sigma = vec![1.0; k];
    for (i, s) in sigma.iter_mut().enumerate().skip(1) {
        if (index >> (i - 1)) & 1 == 1 {
            *s = -1.0;
        }
    }
    sigma
}

pub fn random_signs(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sign()).collect()
}

fn validate_family(ys: &[DVector<f64>], dim: usize) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::Precondition("family must contain at least one vector".into()));
    }
    for y in ys {
        check_len(dim, y)?;
    }
    Ok(())
}

/// Norms `‖Σ σ_i y_i‖` over the sign vectors selected by `mode`. In exact mode
/// only the half cube `σ_1 = +1` is evaluated; the norm is even in `σ`, so
/// every value stands for two sign vectors.
pub fn sign_norms(oracle: &dyn NormOracle, ys: &[DVector<f64>], mode: SignMode) -> Result<Vec<f64>> {
    validate_family(ys, oracle.dim())?;
    let k = ys.len();
    let sigmas: Vec<Vec<f64>> = match mode {
        SignMode::Exact => {
            if k > MAX_EXACT_K {
                return Err(Error::EnumerationTooLarge { k, max: MAX_EXACT_K });
            }
            (0..1u64 << (k - 1)).map(|s| half_cube_signs(k, s)).collect()
        }
        SignMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::Precondition("Monte Carlo needs trials >= 1".into()));
            }
            let mut rng = SplitMix64::new(seed);
            (0..trials).map(|_| random_signs(&mut rng, k)).collect()
        }
    };
    sigmas
        .par_iter()
        .map(|sigma| oracle.norm(&sign_combination(ys, sigma)?))
        .collect()
}

fn mean_and_stderr(values: &[f64], exact: bool) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if exact || values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `E_σ ‖Σ σ_i y_i‖` and its standard error (0 in exact mode).
pub fn avg_sign_norm(oracle: &dyn NormOracle, ys: &[DVector<f64>], mode: SignMode) -> Result<(f64, f64)> {
    let norms = sign_norms(oracle, ys, mode)?;
    Ok(mean_and_stderr(&norms, mode == SignMode::Exact))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    ExactEnumeration,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotypeEstimate {
    pub q: f64,
    /// `max(1, family_ratio)`: a cotype constant is never below one.
    pub constant: f64,
    /// `(Σ ‖y_i‖^q / E_σ ‖Σ σ_i y_i‖^q)^{1/q}` for this family.
    pub family_ratio: f64,
    pub stderr: f64,
    pub method: EstimateMethod,
    pub trials: usize,
    pub sum_norms_q: f64,
    pub sign_moment: f64,
}

pub fn cotype_constant(oracle: &dyn NormOracle, ys: &[DVector<f64>], q: f64, mode: SignMode) -> Result<CotypeEstimate> {
    if q.is_nan() || q < 2.0 {
        return Err(Error::Precondition(format!("cotype exponent must be >= 2, got {q}")));
    }
    validate_family(ys, oracle.dim())?;
    let individual: Vec<f64> = ys.iter().map(|y| oracle.norm(y)).collect::<Result<_>>()?;
    if individual.iter().all(|&v| v == 0.0) {
        return Err(Error::Undefined("every vector of the family is zero".into()));
    }
    let sum_norms_q: f64 = individual.iter().map(|v| v.powf(q)).sum();
    let norms = sign_norms(oracle, ys, mode)?;
    let powered: Vec<f64> = norms.iter().map(|v| v.powf(q)).collect();
    let exact = mode == SignMode::Exact;
    let (moment, moment_err) = mean_and_stderr(&powered, exact);
    let family_ratio = (sum_norms_q / moment).powf(1.0 / q);
    let stderr = if exact {
        0.0
    } else {
        family_ratio * moment_err / (q * moment)
    };
    Ok(CotypeEstimate {
        q,
        constant: family_ratio.max(1.0),
        family_ratio,
        stderr,
        method: if exact {
            EstimateMethod::ExactEnumeration
        } else {
            EstimateMethod::MonteCarlo
        },
        trials: norms.len() * if exact { 2 } else { 1 },
        sum_norms_q,
        sign_moment: moment,
    })
}

fn check_unit(ys: &[DVector<f64>]) -> Result<()> {
    for (i, y) in ys.iter().enumerate() {
        if (y.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "vector {i} has Euclidean norm {} (unit required)",
                y.norm()
            )));
        }
    }
    Ok(())
}

/// Covariance `Σ = Σ_i y_i y_iᵀ` split into eigenbands `(2^p, 2^{p+1}]`.
#[derive(Debug, Clone)]
pub struct DyadicBands {
    pub bands: BTreeMap<i32, Subspace>,
    pub covariance: DMatrix<f64>,
    /// Descending eigenvalues of the covariance.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
}

impl DyadicBands {
    pub fn band_dims(&self) -> BTreeMap<i32, usize> {
        self.bands.iter().map(|(&p, s)| (p, s.dim())).collect()
    }
}

/// Eigenvalues at or below this are treated as null.
pub const NULL_EIGENVALUE: f64 = 1e-12;

/// Band index `p` with `λ ∈ (2^p, 2^{p+1}]`. Eigenvalues within relative
/// `1e-9` of a power of two are snapped onto it first.
pub fn dyadic_band_index(lambda: f64) -> i32 {
    let log = lambda.log2();
    let nearest = log.round();
    let snapped = if (lambda - nearest.exp2()).abs() <= 1e-9 * lambda {
        nearest
    } else {
        log
    };
    snapped.ceil() as i32 - 1
}

pub fn dyadic_bands(ys: &[DVector<f64>]) -> Result<DyadicBands> {
    let n = ys
        .first()
        .map(|y| y.len())
        .ok_or_else(|| Error::Precondition("empty family".into()))?;
    check_unit(ys)?;
    let mut cov = DMatrix::zeros(n, n);
    for y in ys {
        check_len(n, y)?;
        cov.ger(1.0, y, y, 1.0);
    }
    let eig = eigh(&cov)?;
    let mut grouped: BTreeMap<i32, Vec<DVector<f64>>> = BTreeMap::new();
    let mut rank = 0;
    for (i, &lambda) in eig.values.iter().enumerate() {
        if lambda <= NULL_EIGENVALUE {
            continue;
        }
        rank += 1;
        grouped
            .entry(dyadic_band_index(lambda))
            .or_default()
            .push(eig.vectors.column(i).into_owned());
    }
    let bands = grouped
        .into_iter()
        .map(|(p, vs)| Ok((p, Subspace::from_orthonormal_unchecked(DMatrix::from_columns(&vs)))))
        .collect::<Result<_>>()?;
    Ok(DyadicBands {
        bands,
        covariance: cov,
        eigenvalues: eig.values,
        rank,
    })
}

/// Enumerates `|Σ_i σ_i a_i|` over the half cube `σ_1 = +1` in Gray-code order.
fn half_cube_abs_sums(a: &[f64], mut visit: impl FnMut(f64)) {
    let k = a.len();
    let mut signs = vec![1.0; k];
    let mut sum: f64 = a.iter().sum();
    visit(sum.abs());
    for step in 1..1u64 << (k - 1) {
        let bit = step.trailing_zeros() as usize + 1;
        signs[bit] = -signs[bit];
        sum += 2.0 * signs[bit] * a[bit];
        visit(sum.abs());
    }
}

/// `P_σ{|Σ σ_i a_i| >= threshold}` by exhaustive enumeration.
fn sign_tail_count(a: &[f64], threshold: f64) -> u64 {
    let mut count = 0;
    half_cube_abs_sums(a, |v| {
        if v >= threshold {
            count += 2;
        }
    });
    count
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandCheck {
    pub p: i32,
    pub dim: usize,
    pub projection: f64,
    pub threshold: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadVerdict {
    pub probability: f64,
    pub hypothesis_holds: bool,
    pub span_projection: f64,
    pub threshold_a: f64,
    pub margin_a: f64,
    pub alternative_a: bool,
    pub bands: Vec<BandCheck>,
    /// Band index realizing alternative (b), if any.
    pub alternative_b: Option<i32>,
    /// Best band margin; `-inf` when no band with `1 <= p <= log₂ k` is present.
    pub margin_b: f64,
}

impl DyadVerdict {
    /// The conclusion holds or the hypothesis is not met.
    pub fn consistent(&self) -> bool {
        !self.hypothesis_holds || self.alternative_a || self.alternative_b.is_some()
    }
}

pub fn dyadic_decomposition_check(ys: &[DVector<f64>], z: &DVector<f64>, t: f64, c: f64) -> Result<DyadVerdict> {
    let k = ys.len();
    let n = z.len();
    if k < 2 || k > n || k > MAX_EXACT_K {
        return Err(Error::Precondition(format!(
            "need 2 <= k <= min(n, {MAX_EXACT_K}), got k = {k}, n = {n}"
        )));
    }
    if !(t >= 1.0) {
        return Err(Error::Precondition(format!("t must be >= 1, got {t}")));
    }
    let bands = dyadic_bands(ys)?;
    let kf = k as f64;
    let a: Vec<f64> = ys.iter().map(|y| y.dot(z)).collect();
    let count = sign_tail_count(&a, t * kf.sqrt());
    let probability = count as f64 / (1u64 << k) as f64;
    let hypothesis_holds = probability >= kf.powi(-100);

    let span = orthonormal_basis(ys)?;
    let span_projection = span.project(z).norm();
    let ln_k = kf.ln();
    let threshold_a = c * t * kf.sqrt() / ln_k.sqrt();
    let margin_a = span_projection - threshold_a;

    let max_p = kf.log2().floor() as i32;
    let checks: Vec<BandCheck> = bands
        .bands
        .iter()
        .filter(|(&p, _)| (1..=max_p).contains(&p))
        .map(|(&p, sub)| {
            let projection = sub.project(z).norm();
            let threshold = c * t * (sub.dim() as f64).sqrt() / ln_k.powf(1.5);
            BandCheck {
                p,
                dim: sub.dim(),
                projection,
                threshold,
                margin: projection - threshold,
            }
        })
        .collect();
    let best = checks
        .iter()
        .max_by(|x, y| x.margin.total_cmp(&y.margin).then(y.p.cmp(&x.p)));
    let margin_b = best.map_or(f64::NEG_INFINITY, |b| b.margin);
    let alternative_b = best.filter(|b| b.margin >= 0.0).map(|b| b.p);
    Ok(DyadVerdict {
        probability,
        hypothesis_holds,
        span_projection,
        threshold_a,
        margin_a,
        alternative_a: margin_a >= 0.0,
        bands: checks,
        alternative_b,
        margin_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JSetParams {
    pub t: f64,
    /// Replaces the default fraction `k^{-100}` of sign vectors in condition (1).
    pub fraction_override: Option<f64>,
    /// `C̃` in the condition-(2) threshold `C̃·k^11`.
    pub c_tilde: f64,
}

impl JSetParams {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            fraction_override: None,
            c_tilde: 1.0,
        }
    }
}

/// Indices `j` whose generator `X_j` correlates irregularly with the family.
pub fn j_set(ensemble: &Ensemble, ys: &[DVector<f64>], params: JSetParams) -> Result<Vec<usize>> {
    let k = ys.len();
    if !(2..=MAX_EXACT_K).contains(&k) {
        return Err(Error::EnumerationTooLarge { k, max: MAX_EXACT_K });
    }
    validate_family(ys, ensemble.n())?;
    check_unit(ys)?;
    let kf = k as f64;
    let fraction = params.fraction_override.unwrap_or(kf.powi(-100));
    let required = ((fraction * (1u64 << k) as f64).ceil() as u64).max(1);
    let threshold = params.t * kf.sqrt();
    let spike = params.c_tilde * kf.powi(11);

    let a = ensemble.matrix();
    let mut out = Vec::new();
    for j in 0..ensemble.big_n() {
        let col = a.column(j);
        let dots: Vec<f64> = ys.iter().map(|y| col.dot(y)).collect();
        let max_abs: f64 = dots.iter().map(|d| d.abs()).sum();
        if max_abs >= spike || sign_tail_count(&dots, threshold) >= required {
            out.push(j);
        }
    }
    Ok(out)
}

/// Counts `m_δ(y, r)`: bucket 0 holds `|β_j| <= δ/n`, bucket `r >= 1` holds
/// `|β_j| ∈ (δ/n)(2^{r-1}, 2^r]`. The vector is as long as the top bucket + 1.
pub fn m_delta_histogram(beta: &CoefficientVector, delta: f64, n: usize) -> Result<Vec<usize>> {
    if !(delta > 0.0 && delta <= 1.0) || n == 0 {
        return Err(Error::Precondition(format!(
            "need delta in (0, 1] and n >= 1, got delta = {delta}, n = {n}"
        )));
    }
    let unit = delta / n as f64;
    let mut hist = vec![0usize];
    for &b in &beta.beta {
        let ratio = b.abs() / unit;
        let r = if ratio <= 1.0 {
            0
        } else {
            let mut r = ratio.log2().ceil().max(1.0) as usize;
            while r > 1 && ratio <= ((r - 1) as f64).exp2() {
                r -= 1;
            }
            while ratio > (r as f64).exp2() {
                r += 1;
            }
            r
        };
        if hist.len() <= r {
            hist.resize(r + 1, 0);
        }
        hist[r] += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyProbe {
    /// `‖y_i‖_P` of the accepted vectors.
    pub norms: Vec<f64>,
    pub attempts: usize,
    pub mean_sign_norm: f64,
    pub meets_threshold: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpansProbeReport {
    pub k: usize,
    pub floor: f64,
    pub threshold: f64,
    pub families: Vec<FamilyProbe>,
}

#[derive(Debug, Clone, Copy)]
pub struct SpansProbeParams {
    pub k: usize,
    /// `C` in the norm floor `C·k^{-1/9}`.
    pub c_floor: f64,
    pub families: usize,
    /// Rejection-sampling attempts allowed per vector.
    pub retry_cap: usize,
    pub seed: u64,
}

/// Samples unit families whose members all satisfy `‖y_i‖_P >= C·k^{-1/9}`
/// and measures `E_σ ‖Σ σ_i y_i‖_P` by exact enumeration.
pub fn spans_probe(solver: &L1Solver, params: SpansProbeParams) -> Result<SpansProbeReport> {
    let k = params.k;
    if k == 0 || k > MAX_EXACT_K_LP {
        return Err(Error::EnumerationTooLarge { k, max: MAX_EXACT_K_LP });
    }
    let kf = k as f64;
    let floor = params.c_floor * kf.powf(-1.0 / 9.0);
    let threshold = kf.powf(1.0 / 8.0);
    let n = solver.rows();
    let mut rng = SplitMix64::new(params.seed);
    let mut families = Vec::with_capacity(params.families);
    for _ in 0..params.families {
        let mut ys = Vec::with_capacity(k);
        let mut norms = Vec::with_capacity(k);
        let mut attempts = 0;
        for _ in 0..k {
            let mut best = 0.0f64;
            let mut accepted = None;
            for _ in 0..params.retry_cap.max(1) {
                attempts += 1;
                let y = DVector::from_vec(rng.unit_vector(n));
                let v = solver.solve(&y)?.value;
                best = best.max(v);
                if v >= floor {
                    accepted = Some((y, v));
                    break;
                }
            }
            match accepted {
                Some((y, v)) => {
                    ys.push(y);
                    norms.push(v);
                }
                None => {
                    norms.push(best);
                    return Err(Error::SamplingFailure {
                        attempts,
                        achieved: norms,
                    });
                }
            }
        }
        let (mean, _) = avg_sign_norm(solver, &ys, SignMode::Exact)?;
        families.push(FamilyProbe {
            norms,
            attempts,
            mean_sign_norm: mean,
            meets_threshold: mean >= threshold,
        });
    }
    Ok(SpansProbeReport {
        k,
        floor,
        threshold,
        families,
    })
}
