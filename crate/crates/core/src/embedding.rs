//! Constructive ℓ∞-embedding machinery: regular tuple extraction, certified
//! distortion lower bounds, the cleaning and truncation steps, the spiky
//! coefficient witness search, and the distortion growth probe.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cotype::{avg_sign_norm, half_cube_signs, m_delta_histogram, random_signs, NormOracle, SignMode};
use crate::error::{Error, Result};
use crate::l1norm::{sign_combination, L1Solver};
use crate::numerics::{orthonormal_basis, rank};
use crate::rng::{derive_seed, SplitMix64};

/// Largest `k` whose half sign cube is enumerated exactly.
pub const MAX_ENUMERATED_K: usize = 16;

/// `{Σ a_i u_i : |a_i| <= r_i}`.
#[derive(Debug, Clone)]
pub struct Parallelepiped {
    pub u: Vec<DVector<f64>>,
    pub r: Vec<f64>,
}

impl Parallelepiped {
    pub fn new(u: Vec<DVector<f64>>, r: Vec<f64>) -> Result<Self> {
        if u.len() != r.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: r.len(),
            });
        }
        let n = u.first().map(|v| v.len()).ok_or(Error::EmptySpan)?;
        if u.iter().any(|v| v.len() != n) {
            return Err(Error::Precondition("axes of unequal length".into()));
        }
        if let Some(i) = u.iter().position(|v| (v.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::Precondition(format!("axis {i} is not a unit vector")));
        }
        if let Some(i) = r.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Precondition(format!("half-width {i} must be positive")));
        }
        let m = nalgebra::DMatrix::from_columns(&u);
        let rk = rank(&m);
        if rk < u.len() {
            return Err(Error::RankDeficient {
                rank: rk,
                rows: u.len(),
            });
        }
        Ok(Self { u, r })
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularTuple {
    pub vectors: Vec<Vec<f64>>,
    pub delta: f64,
    pub j0: i32,
    /// Median half-width `r`.
    pub r: f64,
    /// `ρ/r`: `‖Σ v_i y_i‖ <= distortion_factor·‖v‖∞` for every `v`.
    pub distortion_factor: f64,
    /// Norms `‖y_i‖` of the returned vectors.
    pub norms: Vec<f64>,
}

/// Dyadic bucket `j` with `t ∈ (2^{j−1}, 2^j]`.
fn dyadic_ceil(t: f64) -> i32 {
    let mut j = t.log2().ceil() as i32;
    while (j as f64 - 1.0).exp2() >= t {
        j -= 1;
    }
    while (j as f64).exp2() < t {
        j += 1;
    }
    j
}

/// Extracts `k̃ = ⌊c·k/ln k⌋` unit vectors with norms in `[δ, 2δ]` from a
/// parallelepiped sandwiching the unit ball, `(1/ρ)P ⊂ K ⊂ P`.
pub fn extract_regular_tuple(norm: &dyn NormOracle, p: &Parallelepiped, rho: f64, c: f64) -> Result<RegularTuple> {
    let k = p.k();
    if k < 2 {
        return Err(Error::Precondition("need k >= 2".into()));
    }
    if p.u[0].len() != norm.dim() {
        return Err(Error::DimensionMismatch {
            expected: norm.dim(),
            found: p.u[0].len(),
        });
    }
    if !(rho >= 1.0) {
        return Err(Error::Precondition(format!("rho must be >= 1, got {rho}")));
    }
    let d = k / 2;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p.r[a].total_cmp(&p.r[b]));
    let order = &order[..2 * d];
    let r = 0.5 * (p.r[order[d - 1]] + p.r[order[d]]);

    let mut xs = Vec::with_capacity(d);
    for alpha in 0..d {
        let (lo_i, hi_i) = (order[alpha], order[d + alpha]);
        let (ra, rb) = (p.r[lo_i], p.r[hi_i]);
        let (ua, ub) = (&p.u[lo_i], &p.u[hi_i]);
        let point = |theta: f64| -> Result<(DVector<f64>, f64)> {
            let v = ua * (1.0 - theta) + ub * theta;
            let len = v.norm();
            if len < 1e-12 {
                return Err(Error::Degenerate(format!(
                    "path between axes {lo_i} and {hi_i} passes through 0"
                )));
            }
            let (a, b) = ((1.0 - theta) / len, theta / len);
            let g = (ra / a.abs()).min(rb / b.abs()) - r;
            Ok((v / len, g))
        };
        let (x0, g0) = point(0.0)?;
        let (x1, g1) = point(1.0)?;
        let x = if g0 >= 0.0 {
            x0
        } else if g1 <= 0.0 {
            x1
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if point(mid)?.1 < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            point(0.5 * (lo + hi))?.0
        };
        xs.push(x);
    }

    let norms: Vec<f64> = xs.iter().map(|x| norm.norm(x)).collect::<Result<_>>()?;
    let mut buckets: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &v) in norms.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::Degenerate(format!("vector {i} has zero norm")));
        }
        buckets.entry(dyadic_ceil(v * r)).or_default().push(i);
    }
    let (&j0, members) = buckets
        .iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
        .expect("at least one bucket");
    let kf = k as f64;
    let target = ((c * kf / kf.ln()).floor() as usize).clamp(1, members.len());
    let chosen = &members[..target];
    Ok(RegularTuple {
        vectors: chosen.iter().map(|&i| xs[i].as_slice().to_vec()).collect(),
        delta: (j0 as f64 - 1.0).exp2() / r,
        j0,
        r,
        distortion_factor: rho / r,
        norms: chosen.iter().map(|&i| norms[i]).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionCertificate {
    /// `max ‖Σ σ_i y_i‖` over the evaluated sign vertices.
    pub l_lower: f64,
    /// `min_i ‖y_i‖`.
    pub ell_upper: f64,
    pub bound: f64,
    pub sigma_witness: Vec<f64>,
    pub basis_witness: usize,
    pub exhaustive: bool,
    pub evaluations: usize,
}

/// Largest `‖Σ σ_i y_i‖` over sign vertices: the whole half cube when it has at
/// most `budget` points (and `k <= 16`), otherwise `budget` random vertices
/// followed by single-flip ascent using up to `budget` more evaluations.
pub fn max_sign_norm(
    norm: &dyn NormOracle,
    ys: &[DVector<f64>],
    budget: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>, bool, usize)> {
    let k = ys.len();
    let budget = budget.max(1);
    let eval = |s: &Vec<f64>| -> Result<f64> { norm.norm(&sign_combination(ys, s)?) };
    if k <= MAX_ENUMERATED_K && (1usize << (k - 1)) <= budget {
        let sigmas: Vec<Vec<f64>> = (0..1u64 << (k - 1)).map(|s| half_cube_signs(k, s)).collect();
        let values: Vec<f64> = sigmas.par_iter().map(eval).collect::<Result<_>>()?;
        let (best, _) = values.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        return Ok((values[best], sigmas[best].clone(), true, sigmas.len()));
    }
    let mut rng = SplitMix64::new(seed);
    let sigmas: Vec<Vec<f64>> = (0..budget)
        .map(|_| {
            let mut s = random_signs(&mut rng, k);
            if s[0] < 0.0 {
                s.iter_mut().for_each(|x| *x = -*x);
            }
            s
        })
        .collect();
    let values: Vec<f64> = sigmas.par_iter().map(eval).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let (mut value, mut sigma) = (values[best], sigmas[best].clone());
    let mut evaluations = budget;
    let mut spare = budget;
    'climb: loop {
        let mut improved = false;
        for i in 0..k {
            if spare == 0 {
                break 'climb;
            }
            sigma[i] = -sigma[i];
            let v = eval(&sigma)?;
            spare -= 1;
            evaluations += 1;
            if v > value {
                value = v;
                improved = true;
            } else {
                sigma[i] = -sigma[i];
            }
        }
        if !improved {
            break;
        }
    }
    Ok((value, sigma, false, evaluations))
}

/// Certified lower bound on the distortion `‖T‖·‖T⁻¹‖` of `e_i ↦ y_i` from `ℓ∞^k`.
pub fn distortion_lower_bound(
    norm: &dyn NormOracle,
    ys: &[DVector<f64>],
    sigma_budget: usize,
    seed: u64,
) -> Result<DistortionCertificate> {
    if ys.is_empty() {
        return Err(Error::Precondition("need k >= 1".into()));
    }
    let norms: Vec<f64> = ys.iter().map(|y| norm.norm(y)).collect::<Result<_>>()?;
    let (basis_witness, ell_upper) =
        norms
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if !(ell_upper > 0.0) {
        return Err(Error::Degenerate(format!("vector {basis_witness} has zero norm")));
    }
    let (l_lower, sigma_witness, exhaustive, evaluations) = max_sign_norm(norm, ys, sigma_budget, seed)?;
    Ok(DistortionCertificate {
        l_lower,
        ell_upper,
        bound: l_lower / ell_upper,
        sigma_witness,
        basis_witness,
        exhaustive,
        evaluations: evaluations + ys.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CleaningParams {
    pub alpha: f64,
    pub epsilon: f64,
    /// Ambient dimension `n` in the thresholds `|L|^α 2^{−2r} n`.
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningResult {
    pub l_tilde: Vec<usize>,
    pub r: usize,
    pub p: f64,
    /// The `r_0(i), r_1(i), …` sequence of every `i ∈ L`.
    pub sequences: BTreeMap<usize, Vec<usize>>,
}

fn m_at(h: &[usize], r: usize) -> f64 {
    h.get(r).copied().unwrap_or(0) as f64
}

/// Runs the restart algorithm on every histogram of `L`, then keeps the largest
/// class of vectors sharing the terminal `r` and the dyadic range of `m_δ`.
pub fn cleaning_preprocess(histograms: &[Vec<usize>], l: &[usize], params: CleaningParams) -> Result<CleaningResult> {
    let CleaningParams { alpha, epsilon, n } = params;
    if l.len() < 2 {
        return Err(Error::Precondition("need |L| >= 2".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(epsilon > 0.0 && epsilon <= 0.5) || n == 0 {
        return Err(Error::Precondition(format!(
            "need alpha in (0, 1], epsilon in (0, 1/2], n >= 1; got {alpha}, {epsilon}, {n}"
        )));
    }
    if let Some(&i) = l.iter().find(|&&i| i >= histograms.len()) {
        return Err(Error::Precondition(format!("index {i} has no histogram")));
    }
    let size = l.len() as f64;
    let nf = n as f64;
    let half_log = 0.5 * size.log2();
    let r_start_max = half_log.floor() as usize;
    let down = |h: &[usize], r: usize| m_at(h, r) / ((-2.0 + epsilon) * r as f64).exp2();
    let up = |h: &[usize], r: usize| m_at(h, r) / (-(r as f64) / 2.0).exp2();

    let mut sequences = BTreeMap::new();
    let mut terminal = Vec::with_capacity(l.len());
    for &i in l {
        let h = &histograms[i];
        let r0 = (0..=r_start_max)
            .find(|&r| m_at(h, r) > size.powf(alpha) * (-2.0 * r as f64).exp2() * nf)
            .ok_or(Error::HypothesisFailure {
                index: i,
                detail: "no r <= log2 sqrt|L| with m > |L|^alpha 2^(-2r) n".to_string(),
            })?;
        let cap = (h.len() + 1) * (h.len() + 1);
        let mut seq = vec![r0];
        let mut cur = r0;
        loop {
            let next =
                (0..h.len()).find(|&r| (r < cur && down(h, r) >= down(h, cur)) || (r > cur && up(h, r) >= up(h, cur)));
            match next {
                Some(r) => {
                    cur = r;
                    seq.push(r);
                    if seq.len() > cap {
                        return Err(Error::Contract(format!(
                            "restart sequence for {i} exceeded {cap} steps"
                        )));
                    }
                }
                None => break,
            }
        }
        terminal.push((i, cur, m_at(h, cur)));
        sequences.insert(i, seq);
    }

    let mut classes: BTreeMap<(usize, i64), Vec<(usize, f64)>> = BTreeMap::new();
    for &(i, r, m) in &terminal {
        classes.entry((r, m.log2().floor() as i64)).or_default().push((i, m));
    }
    let (&(r, _), members) = classes
        .iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
        .expect("nonempty L");
    let p = members.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let l_tilde: Vec<usize> = members.iter().map(|x| x.0).collect();

    let floor = size.powf(alpha - epsilon) * (-2.0 * r as f64).exp2() * (r as f64 - half_log).max(0.0).exp2() * nf;
    if p < floor {
        return Err(Error::Contract(format!("p = {p} below the guaranteed floor {floor}")));
    }
    for &i in &l_tilde {
        if let Some(v) = cleaning_violation(&histograms[i], r, p, epsilon) {
            return Err(Error::Contract(format!("vector {i}: {v}")));
        }
    }
    Ok(CleaningResult {
        l_tilde,
        r,
        p,
        sequences,
    })
}

/// Checks `m(r) ∈ [p, 2p]` and both decay inequalities; `None` when all hold.
pub fn cleaning_violation(h: &[usize], r: usize, p: f64, epsilon: f64) -> Option<String> {
    let mr = m_at(h, r);
    if !(mr >= p && mr <= 2.0 * p) {
        return Some(format!("m(r) = {mr} outside [{p}, {}]", 2.0 * p));
    }
    for hh in 0..r {
        let bound = ((-2.0 + epsilon) * (hh as f64 - r as f64)).exp2() * mr;
        if !(m_at(h, hh) < bound) {
            return Some(format!("m({hh}) = {} not below {bound}", m_at(h, hh)));
        }
    }
    for hh in r + 1..h.len().max(r + 1) {
        let bound = (-(hh as f64 - r as f64) / 2.0).exp2() * mr;
        if !(m_at(h, hh) < bound) {
            return Some(format!("m({hh}) = {} not below {bound}", m_at(h, hh)));
        }
    }
    None
}

/// `y' = Σ_{|β_j| <= threshold} β_j X_j` and the dropped mass `Σ_{|β_j| > threshold} |β_j|`.
pub fn truncate_coefficients(solver: &L1Solver, y: &DVector<f64>, threshold: f64) -> Result<(DVector<f64>, f64)> {
    if !(threshold > 0.0) {
        return Err(Error::Precondition(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let beta = solver.solve(y)?.beta;
    let a = solver.matrix();
    let mut out = DVector::zeros(a.nrows());
    let mut dropped = 0.0;
    for (j, &b) in beta.beta.iter().enumerate() {
        if b.abs() <= threshold {
            if b != 0.0 {
                out.axpy(b, &a.column(j), 1.0);
            }
        } else {
            dropped += b.abs();
        }
    }
    Ok((out, dropped))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PseudoParams {
    pub c: f64,
    pub mode: SignMode,
}

impl Default for PseudoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            mode: SignMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum PseudoIncompressibility {
    Applicable {
        count: usize,
        threshold: f64,
        meets_threshold: bool,
        mass_on_j: f64,
        sign_mean: f64,
        cutoff: f64,
    },
    NotApplicable {
        mass_on_j: f64,
        sign_mean: f64,
    },
}

/// Column aggregates `a_h = (Σ_i β_h(y_i)²)^{1/2}`.
pub fn column_aggregates(solver: &L1Solver, ys: &[DVector<f64>]) -> Result<Vec<f64>> {
    let mut sq = vec![0.0; solver.cols()];
    for y in ys {
        let beta = solver.solve(y)?.beta;
        for (s, b) in sq.iter_mut().zip(&beta.beta) {
            *s += b * b;
        }
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

pub fn pseudo_incompressibility_scan(
    solver: &L1Solver,
    ys: &[DVector<f64>],
    j: &[usize],
    params: PseudoParams,
) -> Result<PseudoIncompressibility> {
    let n = solver.rows();
    let big_n = solver.cols();
    let mut j = j.to_vec();
    j.sort_unstable();
    j.dedup();
    if j.is_empty() || j.iter().any(|&x| x >= big_n) {
        return Err(Error::Precondition("J must be a nonempty subset of [N]".into()));
    }
    if j.len() as f64 > params.c * n as f64 {
        return Err(Error::Precondition(format!(
            "|J| = {} exceeds c·n = {}",
            j.len(),
            params.c * n as f64
        )));
    }
    if ys.is_empty() {
        return Err(Error::Precondition("family must be nonempty".into()));
    }
    let mode = match params.mode {
        SignMode::Exact if ys.len() > MAX_ENUMERATED_K => SignMode::MonteCarlo { trials: 4096, seed: 0 },
        m => m,
    };
    let a = column_aggregates(solver, ys)?;
    let (sign_mean, _) = avg_sign_norm(solver, ys, mode)?;
    let mass_on_j: f64 = j.iter().map(|&h| a[h]).sum();
    if !(mass_on_j > 0.0 && params.c * mass_on_j >= sign_mean) {
        return Ok(PseudoIncompressibility::NotApplicable { mass_on_j, sign_mean });
    }
    let cutoff = params.c / ((j.len() * n) as f64).sqrt() * mass_on_j;
    let count = (0..big_n)
        .filter(|x| j.binary_search(x).is_err() && a[*x] >= cutoff)
        .count();
    let threshold = params.c * n as f64;
    Ok(PseudoIncompressibility::Applicable {
        count,
        threshold,
        meets_threshold: count as f64 >= threshold,
        mass_on_j,
        sign_mean,
        cutoff,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikyWitness {
    pub best_v: Vec<f64>,
    pub value: f64,
    pub benchmark: f64,
    pub reached: bool,
    pub hypothesis_holds: bool,
    pub evaluations: usize,
}

/// Searches `v ∈ {±1}^L` for a large `‖Σ v_i y_i‖_P` and compares it with `δ|L|^{α/5}`.
pub fn spiky_distortion_witness(
    solver: &L1Solver,
    ys: &[DVector<f64>],
    delta: f64,
    alpha: f64,
    search_budget: usize,
    seed: u64,
) -> Result<SpikyWitness> {
    if ys.is_empty() {
        return Err(Error::Precondition("family must be nonempty".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Precondition("need delta, alpha in (0, 1]".into()));
    }
    let n = solver.rows();
    let size = ys.len() as f64;
    let r_max = (0.5 * size.log2()).floor().max(0.0) as usize;
    let mut hypothesis_holds = true;
    for (i, y) in ys.iter().enumerate() {
        if (y.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("vector {i} is not a unit vector")));
        }
        let cert = solver.solve(y)?;
        if cert.value < delta - 1e-9 || cert.value > 2.0 * delta + 1e-9 {
            return Err(Error::Precondition(format!(
                "vector {i} has norm {} outside [{delta}, {}]",
                cert.value,
                2.0 * delta
            )));
        }
        let hist = m_delta_histogram(&cert.beta, delta, n)?;
        let spiky = (0..=r_max).any(|r| m_at(&hist, r) > size.powf(alpha) * (-2.0 * r as f64).exp2() * n as f64);
        hypothesis_holds &= spiky;
    }
    let (value, best_v, _, evaluations) = max_sign_norm(solver, ys, search_budget, seed)?;
    let benchmark = delta * size.powf(alpha / 5.0);
    Ok(SpikyWitness {
        best_v,
        value,
        benchmark,
        reached: value >= benchmark,
        hypothesis_holds,
        evaluations,
    })
}

/// How candidate tuples are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Independent uniform unit vectors.
    RandomDirections,
    /// Orthonormalized Gaussian frames.
    RandomFrames,
    /// Normalized generators `X_j / ‖X_j‖₂`.
    Vertices,
    /// Random directions with their large coefficients removed, renormalized.
    Truncated,
    /// Random directions refined by accepting perturbations that lower the bound.
    CoordinateDescent,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::RandomDirections,
        Strategy::RandomFrames,
        Strategy::Vertices,
        Strategy::Truncated,
        Strategy::CoordinateDescent,
    ];

    fn id(self) -> u64 {
        self as u64 + 1
    }

    fn needs_generators(self) -> bool {
        matches!(self, Strategy::Vertices | Strategy::Truncated)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeParams {
    pub k: usize,
    pub strategies: Vec<Strategy>,
    /// Candidates per strategy.
    pub candidates: usize,
    /// Sign vertices evaluated per certificate.
    pub sign_budget: usize,
    /// Perturbations tried per coordinate-descent candidate.
    pub descent_moves: usize,
    pub seed: u64,
}

impl ProbeParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            strategies: Strategy::ALL.to_vec(),
            candidates: 4,
            sign_budget: 256,
            descent_moves: 2 * k,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub strategy: Strategy,
    pub index: usize,
    pub certificate: DistortionCertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub k: usize,
    pub best_bound: f64,
    pub best_strategy: Strategy,
    pub best_index: usize,
    pub candidates: Vec<CandidateRecord>,
}

fn random_directions(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<DVector<f64>> {
    (0..k).map(|_| DVector::from_vec(rng.unit_vector(n))).collect()
}

fn candidate_tuple(
    strategy: Strategy,
    norm: &dyn NormOracle,
    generators: Option<&L1Solver>,
    params: &ProbeParams,
    rng: &mut SplitMix64,
) -> Result<Vec<DVector<f64>>> {
    let n = norm.dim();
    let k = params.k;
    match strategy {
        Strategy::RandomDirections => Ok(random_directions(rng, n, k)),
        Strategy::RandomFrames => {
            if k > n {
                return Ok(random_directions(rng, n, k));
            }
            loop {
                let gs = random_directions(rng, n, k);
                let frame = orthonormal_basis(&gs)?;
                if frame.dim() == k {
                    return Ok(frame.basis().column_iter().map(|c| c.into_owned()).collect());
                }
            }
        }
        Strategy::Vertices => {
            let solver = generators.expect("checked by caller");
            let a = solver.matrix();
            let picks = if k <= a.ncols() {
                rng.subset(a.ncols(), k)
            } else {
                (0..k).map(|_| rng.below(a.ncols())).collect()
            };
            Ok(picks
                .into_iter()
                .map(|j| {
                    let c = a.column(j).into_owned();
                    let len = c.norm();
                    c / len
                })
                .collect())
        }
        Strategy::Truncated => {
            let solver = generators.expect("checked by caller");
            random_directions(rng, n, k)
                .into_iter()
                .map(|y| {
                    let beta = solver.solve(&y)?.beta;
                    let support: Vec<f64> = beta.beta.iter().filter(|b| **b != 0.0).map(|b| b.abs()).collect();
                    let threshold = support.iter().sum::<f64>() / support.len().max(1) as f64;
                    let (t, _) = truncate_coefficients(solver, &y, threshold)?;
                    let len = t.norm();
                    Ok(if len > 1e-12 { t / len } else { y })
                })
                .collect()
        }
        Strategy::CoordinateDescent => {
            let mut ys = random_directions(rng, n, k);
            let small = params.sign_budget.min(32);
            let mut current = distortion_lower_bound(norm, &ys, small, rng.next_u64())?.bound;
            let scale = 0.5 / (n as f64).sqrt();
            for step in 0..params.descent_moves {
                let i = step % k;
                let g = DVector::from_vec(rng.gaussian_vec(n));
                let prop = &ys[i] + g * scale;
                let len = prop.norm();
                if len < 1e-12 {
                    continue;
                }
                let old = std::mem::replace(&mut ys[i], prop / len);
                let b = distortion_lower_bound(norm, &ys, small, rng.next_u64())?.bound;
                if b < current {
                    current = b;
                } else {
                    ys[i] = old;
                }
            }
            Ok(ys)
        }
    }
}

/// Smallest certified distortion bound over candidate `k`-tuples. Candidate
/// `c` of each strategy uses its own derived stream, so raising
/// `params.candidates` only adds candidates.
pub fn distortion_probe(
    norm: &dyn NormOracle,
    generators: Option<&L1Solver>,
    params: &ProbeParams,
) -> Result<ProbeReport> {
    let k = params.k;
    if k == 0 || k > MAX_ENUMERATED_K {
        return Err(Error::Precondition(format!(
            "need 1 <= k <= {MAX_ENUMERATED_K}, got {k}"
        )));
    }
    if let Some(g) = generators {
        if g.rows() != norm.dim() {
            return Err(Error::DimensionMismatch {
                expected: norm.dim(),
                found: g.rows(),
            });
        }
    }
    let jobs: Vec<(Strategy, usize)> = params
        .strategies
        .iter()
        .filter(|s| generators.is_some() || !s.needs_generators())
        .flat_map(|&s| (0..params.candidates).map(move |c| (s, c)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::Precondition("no applicable strategy".into()));
    }
    let records: Vec<CandidateRecord> = jobs
        .par_iter()
        .map(|&(strategy, index)| {
            let stream = derive_seed(derive_seed(params.seed, strategy.id()), index as u64);
            let mut rng = SplitMix64::new(stream);
            let ys = candidate_tuple(strategy, norm, generators, params, &mut rng)?;
            let certificate = distortion_lower_bound(norm, &ys, params.sign_budget, rng.next_u64())?;
            Ok(CandidateRecord {
                strategy,
                index,
                certificate,
            })
        })
        .collect::<Result<_>>()?;
    let best = records
        .iter()
        .min_by(|a, b| a.certificate.bound.total_cmp(&b.certificate.bound))
        .expect("nonempty");
    Ok(ProbeReport {
        k,
        best_bound: best.certificate.bound,
        best_strategy: best.strategy,
        best_index: best.index,
        candidates: records.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cotype::{Euclidean, SupNorm};
    use crate::ensemble::{sample_ensemble, Ensemble, EnsembleConfig};
    use nalgebra::DMatrix;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn extract_on_the_cube() {
        let p = Parallelepiped::new((0..4).map(|i| e(4, i)).collect(), vec![1.0; 4]).unwrap();
        let t = extract_regular_tuple(&SupNorm { dim: 4 }, &p, 1.0, 1.0).unwrap();
        assert_eq!(t.r, 1.0);
        assert_eq!(t.j0, 0);
        assert_eq!(t.delta, 0.5);
        assert_eq!(t.vectors[0], e(4, 0).as_slice().to_vec());
        for (v, &nv) in t.vectors.iter().zip(&t.norms) {
            assert!((DVector::from_column_slice(v).norm() - 1.0).abs() < 1e-12);
            assert!(nv >= t.delta && nv <= 2.0 * t.delta);
        }
    }

    #[test]
    fn extract_output_size() {
        for (k, c) in [(8, 1.0), (12, 1.0), (16, 0.5)] {
            let p = Parallelepiped::new((0..k).map(|i| e(k, i)).collect(), vec![2.0; k]).unwrap();
            let t = extract_regular_tuple(&SupNorm { dim: k }, &p, 1.0, c).unwrap();
            let kf = k as f64;
            assert_eq!(t.vectors.len(), (c * kf / kf.ln()).floor() as usize);
        }
    }

    #[test]
    fn extract_rejects_dependent_axes() {
        let u = vec![e(3, 0), e(3, 0), e(3, 1)];
        assert!(matches!(
            Parallelepiped::new(u, vec![1.0; 3]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn extract_bisection_hits_median() {
        // Sorted widths (1, 2, 3, 5); median 2.5 lies strictly inside both brackets.
        let mut rng = SplitMix64::new(3);
        let u: Vec<_> = (0..4).map(|_| DVector::from_vec(rng.unit_vector(6))).collect();
        let p = Parallelepiped::new(u.clone(), vec![3.0, 1.0, 5.0, 2.0]).unwrap();
        let t = extract_regular_tuple(&Euclidean { dim: 6 }, &p, 2.0, 1.0).unwrap();
        assert_eq!(t.r, 2.5);
        for (v, nv) in t.vectors.iter().zip(&t.norms) {
            let x = DVector::from_column_slice(v);
            assert!((x.norm() - 1.0).abs() < 1e-9);
            let lo = (t.j0 as f64 - 1.0).exp2() / t.r;
            assert!(*nv > lo - 1e-12 && *nv <= 2.0 * lo + 1e-12);
        }
    }

    #[test]
    fn dyadic_ceil_edges() {
        assert_eq!(dyadic_ceil(1.0), 0);
        assert_eq!(dyadic_ceil(1.5), 1);
        assert_eq!(dyadic_ceil(2.0), 1);
        assert_eq!(dyadic_ceil(0.5), -1);
        assert_eq!(dyadic_ceil(0.3), -1);
    }

    #[test]
    fn distortion_examples() {
        let y = vec![DVector::from_vec(vec![0.3, -2.0])];
        let c = distortion_lower_bound(&Euclidean { dim: 2 }, &y, 16, 0).unwrap();
        assert_eq!(c.bound, 1.0);

        let k = 5;
        let ys: Vec<_> = (0..k).map(|i| e(k, i)).collect();
        let c = distortion_lower_bound(&Euclidean { dim: k }, &ys, 1 << 10, 0).unwrap();
        assert!((c.bound - (k as f64).sqrt()).abs() < 1e-12);
        assert!(c.exhaustive);

        let ens = Ensemble::from_matrix(DMatrix::identity(2, 2), 0).unwrap();
        let solver = L1Solver::new(&ens).unwrap();
        let c = distortion_lower_bound(&solver, &[e(2, 0), e(2, 1)], 16, 0).unwrap();
        assert!((c.bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distortion_rejects_zero_vector() {
        let ys = vec![e(2, 0), DVector::zeros(2)];
        assert!(matches!(
            distortion_lower_bound(&Euclidean { dim: 2 }, &ys, 8, 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn witnesses_reproduce_values() {
        let mut rng = SplitMix64::new(4);
        let ys: Vec<_> = (0..7).map(|_| DVector::from_vec(rng.gaussian_vec(5))).collect();
        let oracle = SupNorm { dim: 5 };
        for budget in [8, 1 << 10] {
            let c = distortion_lower_bound(&oracle, &ys, budget, 1).unwrap();
            let l = oracle.norm(&sign_combination(&ys, &c.sigma_witness).unwrap()).unwrap();
            assert!((l - c.l_lower).abs() < 1e-9);
            assert!((oracle.norm(&ys[c.basis_witness]).unwrap() - c.ell_upper).abs() < 1e-9);
        }
    }

    fn spike(len: usize, at: usize, height: usize) -> Vec<usize> {
        let mut h = vec![0; len];
        h[at] = height;
        h
    }

    #[test]
    fn cleaning_single_spike() {
        let params = CleaningParams {
            alpha: 0.5,
            epsilon: 0.25,
            n: 10,
        };
        // |L| = 4 allows starting indices r <= log2 √4 = 1.
        let hs = vec![spike(6, 1, 100); 4];
        let out = cleaning_preprocess(&hs, &[0, 1, 2, 3], params).unwrap();
        assert_eq!(out.r, 1);
        assert_eq!(out.sequences[&0], vec![1]);
        assert_eq!(out.l_tilde, vec![0, 1, 2, 3]);
        assert_eq!(out.p, 100.0);
    }

    #[test]
    fn cleaning_identical_vectors_keep_all() {
        let params = CleaningParams {
            alpha: 0.5,
            epsilon: 0.25,
            n: 4,
        };
        let h = vec![30, 12, 5, 1, 0, 0];
        let hs = vec![h; 9];
        let l: Vec<usize> = (0..9).collect();
        let out = cleaning_preprocess(&hs, &l, params).unwrap();
        assert_eq!(out.l_tilde, l);
    }

    #[test]
    fn cleaning_hypothesis_failure_names_vector() {
        let params = CleaningParams {
            alpha: 0.5,
            epsilon: 0.25,
            n: 10,
        };
        let hs = vec![spike(6, 0, 100), vec![0; 6]];
        match cleaning_preprocess(&hs, &[0, 1], params) {
            Err(Error::HypothesisFailure { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cleaning_follows_restarts() {
        // Start at r = 0, jump up to r = 3 where m·2^{r/2} is larger.
        let params = CleaningParams {
            alpha: 0.5,
            epsilon: 0.25,
            n: 1,
        };
        let h = vec![5, 0, 0, 40, 1];
        let out = cleaning_preprocess(&[h.clone(), h], &[0, 1], params).unwrap();
        assert_eq!(out.sequences[&0], vec![0, 3]);
        assert_eq!(out.r, 3);
    }

    #[test]
    fn truncation_limits() {
        let ens = sample_ensemble(&EnsembleConfig::new(5, 10, 3)).unwrap();
        let solver = L1Solver::new(&ens).unwrap();
        let mut rng = SplitMix64::new(1);
        let y = DVector::from_vec(rng.gaussian_vec(5));
        let cert = solver.solve(&y).unwrap();
        let (t, d) = truncate_coefficients(&solver, &y, 1e9).unwrap();
        assert!((t - &y).norm() < 1e-9 && d == 0.0);
        let (t, d) = truncate_coefficients(&solver, &y, 1e-300).unwrap();
        assert_eq!(t.norm(), 0.0);
        assert!((d - cert.value).abs() < 1e-12);
        let thr = cert.beta.beta.iter().map(|b| b.abs()).fold(0.0, f64::max) * 0.5;
        let (t, d) = truncate_coefficients(&solver, &y, thr).unwrap();
        assert!(solver.solve(&(&y - t)).unwrap().value <= d + 1e-9);
    }

    #[test]
    fn pseudo_scan_cases() {
        let ens = sample_ensemble(&EnsembleConfig::new(10, 20, 5)).unwrap();
        let solver = L1Solver::new(&ens).unwrap();
        let zero = vec![DVector::zeros(10)];
        let r = pseudo_incompressibility_scan(&solver, &zero, &[0], PseudoParams::default()).unwrap();
        assert!(matches!(r, PseudoIncompressibility::NotApplicable { .. }));
        let all: Vec<usize> = (0..20).collect();
        assert!(pseudo_incompressibility_scan(&solver, &zero, &all, PseudoParams::default()).is_err());

        let y = DVector::from_vec(SplitMix64::new(2).unit_vector(10));
        let beta = solver.solve(&y).unwrap().beta.beta;
        let top = (0..20)
            .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
            .unwrap();
        let params = PseudoParams {
            c: 1.0,
            mode: SignMode::Exact,
        };
        let r = pseudo_incompressibility_scan(&solver, &[y.clone()], &[top], params).unwrap();
        let mass = beta[top].abs();
        let norm = beta.iter().map(|b| b.abs()).sum::<f64>();
        match r {
            PseudoIncompressibility::Applicable { count, cutoff, .. } => {
                assert!(mass >= norm);
                let expect = (0..20).filter(|&j| j != top && beta[j].abs() >= cutoff).count();
                assert_eq!(count, expect);
            }
            PseudoIncompressibility::NotApplicable { .. } => assert!(mass < norm),
        }
    }

    #[test]
    fn spiky_witness_basics() {
        let ens = sample_ensemble(&EnsembleConfig::new(6, 12, 2)).unwrap();
        let solver = L1Solver::new(&ens).unwrap();
        let y = DVector::from_vec(SplitMix64::new(8).unit_vector(6));
        let v = solver.solve(&y).unwrap().value;
        let w = spiky_distortion_witness(&solver, &[y.clone()], v, 0.5, 16, 0).unwrap();
        assert_eq!(w.best_v, vec![1.0]);
        assert!((w.value - v).abs() < 1e-12);

        let w = spiky_distortion_witness(&solver, &[y.clone(), -&y], v, 0.5, 16, 0).unwrap();
        assert_eq!(w.best_v, vec![1.0, -1.0]);
        assert!((w.value - 2.0 * v).abs() < 1e-9);

        assert!(spiky_distortion_witness(&solver, &[y], 10.0 * v, 0.5, 16, 0).is_err());
    }

    #[test]
    fn probe_k1_and_euclidean() {
        let oracle = Euclidean { dim: 32 };
        let p = distortion_probe(&oracle, None, &ProbeParams::new(1, 0)).unwrap();
        assert_eq!(p.best_bound, 1.0);
        let mut params = ProbeParams::new(4, 1);
        params.strategies = vec![Strategy::RandomFrames];
        let p = distortion_probe(&oracle, None, &params).unwrap();
        assert!((p.best_bound / 2.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn probe_minimum_is_monotone_in_budget() {
        let ens = sample_ensemble(&EnsembleConfig::new(8, 16, 1)).unwrap();
        let solver = L1Solver::new(&ens).unwrap();
        let mut prev = f64::INFINITY;
        for candidates in [1, 2, 4] {
            let mut params = ProbeParams::new(3, 5);
            params.candidates = candidates;
            let r = distortion_probe(&solver, Some(&solver), &params).unwrap();
            assert!(r.best_bound <= prev);
            prev = r.best_bound;
        }
    }
}
