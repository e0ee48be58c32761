use std::time::Instant;

use nalgebra::DVector;
use polylab_core::cotype::{cotype_constant, spans_probe, Euclidean, SpansProbeParams, SupNorm};
use polylab_core::embedding::{cleaning_preprocess, distortion_probe, CleaningParams, ProbeParams};
use polylab_core::geometry::{
    event_sparse_singular, inradius_lower, inradius_upper, kernel_incompressibility_scan, EventConstants,
    KernelScanParams,
};
use polylab_core::grassmann::{
    build_net, decompose_projection, decompose_projection_extending, decomposition_residuals, greedy_net,
    projection_tail_counts, random_subspace, residual_bound, GrassmannNet,
};
use polylab_core::numerics::spectral_norm;
use polylab_core::rng::{derive_seed, SplitMix64};
use polylab_core::{sample_ensemble, Ensemble, L1Solver, NormOracle, SignMode};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::report::{aggregate, ExperimentReport, Record};

/// Stream reserved for state shared by all trials (such as a net).
const SHARED_STREAM: u64 = u64::MAX;

struct Trial {
    index: usize,
    seed: u64,
}

impl Trial {
    fn ensemble(&self, cfg: &ExperimentConfig) -> CliResult<Ensemble> {
        let mut e = cfg.ensemble;
        e.seed = self.seed;
        Ok(sample_ensemble(&e)?)
    }

    fn rng(&self) -> SplitMix64 {
        SplitMix64::new(derive_seed(self.seed, 1))
    }

    fn record(&self, cfg: &ExperimentConfig) -> Record {
        let mut r = Record::new();
        r.insert("seed".into(), json!(cfg.ensemble.seed));
        r.insert("trial".into(), json!(self.index));
        r.insert("trial_seed".into(), json!(self.seed));
        r
    }
}

fn put(r: &mut Record, key: &str, value: serde_json::Value) {
    r.insert(key.to_string(), value);
}

pub fn run(cfg: ExperimentConfig) -> CliResult<ExperimentReport> {
    let cfg = cfg.resolve()?;
    let start = Instant::now();
    let trials: Vec<Trial> = (0..cfg.trials)
        .map(|index| Trial {
            index,
            seed: derive_seed(cfg.ensemble.seed, index as u64),
        })
        .collect();
    let records = match cfg.experiment {
        Experiment::Grassmann => grassmann(&cfg, &trials)?,
        _ => trials
            .par_iter()
            .map(|t| run_trial(&cfg, t))
            .collect::<CliResult<Vec<_>>>()?,
    };
    Ok(ExperimentReport {
        experiment: cfg.experiment,
        aggregates: aggregate(&records),
        config: cfg,
        version: env!("CARGO_PKG_VERSION").to_string(),
        records,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_trial(cfg: &ExperimentConfig, t: &Trial) -> CliResult<Record> {
    let mut r = t.record(cfg);
    match cfg.experiment {
        Experiment::Events => {
            let e = t.ensemble(cfg)?;
            let constants = EventConstants {
                c: cfg.constant("c"),
                subset_budget: cfg.count("subset_budget")?,
                norm_factor: cfg.constant("norm_factor"),
            };
            let rep = event_sparse_singular(&e, constants)?;
            put(&mut r, "norm_margin", json!(rep.norm_bound.margin));
            put(&mut r, "smin_margin", json!(rep.smin_bound.margin));
            put(&mut r, "band_margin", json!(rep.sparse_band.margin));
            put(&mut r, "norm_holds", json!(rep.norm_bound.holds));
            put(&mut r, "smin_holds", json!(rep.smin_bound.holds));
            put(&mut r, "band_holds", json!(rep.sparse_band.holds));
            put(&mut r, "subsets_checked", json!(rep.subsets_checked));
            put(&mut r, "pass", json!(rep.all_hold));
        }
        Experiment::Inradius => {
            let e = t.ensemble(cfg)?;
            let lower = inradius_lower(&e)?;
            let upper = inradius_upper(&e, cfg.count("budget")?);
            put(&mut r, "lower", json!(lower));
            put(&mut r, "upper", json!(upper));
            put(&mut r, "pass", json!(lower <= upper));
        }
        Experiment::Incompressibility => {
            let e = t.ensemble(cfg)?;
            let mut p = KernelScanParams::new(cfg.constant("delta"), cfg.constant("rho"), cfg.count("probes")?, t.seed);
            p.adversarial = cfg.count("adversarial")?;
            let rep = kernel_incompressibility_scan(&e, p)?;
            put(&mut r, "min_distance", json!(rep.min_distance));
            put(&mut r, "random_min", json!(rep.random_min));
            put(&mut r, "adversarial_min", json!(rep.adversarial_min));
            put(&mut r, "violations", json!(rep.violations));
            put(&mut r, "probes", json!(rep.probes));
            put(&mut r, "pass", json!(rep.violations == 0));
        }
        Experiment::ProjectionTails => {
            let e = t.ensemble(cfg)?;
            let d = cfg.count("d")?;
            if d == 0 || d > e.n() {
                return Err(CliError::Config(format!("d must lie in 1..={}", e.n())));
            }
            let f = random_subspace(&mut t.rng(), e.n(), d);
            let tail = projection_tail_counts(&e, &f, cfg.constant("s"), cfg.constant("C"))?;
            put(&mut r, "count", json!(tail.count));
            put(&mut r, "bound", json!(tail.bound));
            put(&mut r, "pass", json!(tail.count as f64 <= tail.bound));
        }
        Experiment::Cotype => cotype(cfg, t, &mut r)?,
        Experiment::Spans => {
            let e = t.ensemble(cfg)?;
            let solver = L1Solver::new(&e)?;
            let params = SpansProbeParams {
                k: cfg.count("k")?,
                c_floor: cfg.constant("C_floor"),
                families: 1,
                retry_cap: cfg.count("retry_cap")?,
                seed: derive_seed(t.seed, 2),
            };
            let rep = spans_probe(&solver, params)?;
            let fam = &rep.families[0];
            put(&mut r, "mean_sign_norm", json!(fam.mean_sign_norm));
            put(&mut r, "threshold", json!(rep.threshold));
            put(&mut r, "floor", json!(rep.floor));
            put(
                &mut r,
                "min_norm",
                json!(fam.norms.iter().cloned().fold(f64::INFINITY, f64::min)),
            );
            put(&mut r, "attempts", json!(fam.attempts));
            put(&mut r, "pass", json!(fam.meets_threshold));
        }
        Experiment::EmbedProbe => {
            let e = t.ensemble(cfg)?;
            let solver = L1Solver::new(&e)?;
            let mut params = ProbeParams::new(cfg.count("k")?, derive_seed(t.seed, 3));
            params.candidates = cfg.count("candidates")?;
            params.sign_budget = cfg.count("sign_budget")?;
            let rep = distortion_probe(&solver, Some(&solver), &params)?;
            put(&mut r, "k", json!(rep.k));
            put(&mut r, "best_bound", json!(rep.best_bound));
            put(
                &mut r,
                "best_strategy",
                serde_json::to_value(rep.best_strategy).expect("serializes"),
            );
            put(&mut r, "candidates", json!(rep.candidates.len()));
        }
        Experiment::Cleaning => cleaning(cfg, t, &mut r)?,
        Experiment::Grassmann => unreachable!("handled before dispatch"),
    }
    Ok(r)
}

fn cotype(cfg: &ExperimentConfig, t: &Trial, r: &mut Record) -> CliResult<()> {
    let n = cfg.ensemble.n;
    let k = cfg.count("k")?;
    let q = cfg.constant("q");
    let mut rng = t.rng();
    let needs_ensemble = cfg.option("oracle") == "polytope" || cfg.option("family") == "vertices";
    let ensemble = if needs_ensemble { Some(t.ensemble(cfg)?) } else { None };
    let ys: Vec<DVector<f64>> = match cfg.option("family") {
        "basis" => {
            if k > n {
                return Err(CliError::Config(format!("basis family needs k <= n = {n}")));
            }
            (0..k)
                .map(|i| {
                    let mut v = DVector::zeros(n);
                    v[i] = 1.0;
                    v
                })
                .collect()
        }
        "random" => (0..k).map(|_| DVector::from_vec(rng.unit_vector(n))).collect(),
        "vertices" => {
            let e = ensemble.as_ref().expect("built above");
            if k > e.big_n() {
                return Err(CliError::Config(format!("vertex family needs k <= N = {}", e.big_n())));
            }
            rng.subset(e.big_n(), k)
                .into_iter()
                .map(|j| e.column(j) * rng.sign())
                .collect()
        }
        other => return Err(CliError::Config(format!("unknown family `{other}`"))),
    };
    let mode = match cfg.option("mode") {
        "exact" => SignMode::Exact,
        "mc" | "monte-carlo" => SignMode::MonteCarlo {
            trials: cfg.count("mc_trials")?,
            seed: derive_seed(t.seed, 4),
        },
        other => return Err(CliError::Config(format!("unknown mode `{other}`"))),
    };
    let solver;
    let oracle: &dyn NormOracle = match cfg.option("oracle") {
        "euclidean" => &Euclidean { dim: n },
        "sup-norm" => &SupNorm { dim: n },
        "polytope" => {
            solver = L1Solver::new(ensemble.as_ref().expect("built above"))?;
            &solver
        }
        other => return Err(CliError::Config(format!("unknown oracle `{other}`"))),
    };
    let est = cotype_constant(oracle, &ys, q, mode)?;
    put(r, "constant", json!(est.constant));
    put(r, "family_ratio", json!(est.family_ratio));
    put(r, "stderr", json!(est.stderr));
    put(r, "sign_evaluations", json!(est.trials));
    Ok(())
}

fn cleaning(cfg: &ExperimentConfig, t: &Trial, r: &mut Record) -> CliResult<()> {
    let n = cfg.ensemble.n;
    let size = cfg.count("L")?;
    let len = cfg.count("hist_len")?.max(1);
    let alpha = cfg.constant("alpha");
    let epsilon = cfg.constant("epsilon");
    let mut rng = t.rng();
    let r_cap = (0.5 * (size.max(1) as f64).log2()).floor() as usize;
    let histograms: Vec<Vec<usize>> = (0..size)
        .map(|_| {
            let mut h: Vec<usize> = (0..len).map(|b| rng.below(1 + ((4 * n) >> (2 * b).min(40)))).collect();
            let at = rng.below(r_cap.min(len - 1) + 1);
            let need = (size as f64).powf(alpha) * (-2.0 * at as f64).exp2() * n as f64;
            h[at] = need.floor() as usize + 1 + rng.below(1 + need as usize);
            h
        })
        .collect();
    let l: Vec<usize> = (0..size).collect();
    let out = cleaning_preprocess(&histograms, &l, CleaningParams { alpha, epsilon, n })?;
    let longest = out.sequences.values().map(Vec::len).max().unwrap_or(0);
    put(r, "kept", json!(out.l_tilde.len()));
    put(r, "kept_fraction", json!(out.l_tilde.len() as f64 / size as f64));
    put(r, "r", json!(out.r));
    put(r, "p", json!(out.p));
    put(r, "longest_sequence", json!(longest));
    put(r, "pass", json!(true));
    Ok(())
}

fn grassmann(cfg: &ExperimentConfig, trials: &[Trial]) -> CliResult<Vec<Record>> {
    let n = cfg.ensemble.n;
    let d = cfg.count("d")?;
    let eps = cfg.constant("epsilon");
    let terms = cfg.count("terms")?;
    let budget = cfg.count("net_budget")?;
    let seed = derive_seed(cfg.ensemble.seed, SHARED_STREAM);
    let extending = match cfg.option("mode") {
        "strict" => false,
        "extending" => true,
        other => return Err(CliError::Config(format!("unknown mode `{other}`"))),
    };
    let mut net: GrassmannNet = if extending {
        greedy_net(n, d, eps, budget, seed)?
    } else {
        build_net(n, d, eps, budget, seed)?
    };
    let mut out = Vec::with_capacity(trials.len());
    for t in trials {
        let mut r = t.record(cfg);
        let f = random_subspace(&mut t.rng(), n, d);
        let (steps, inserted) = if extending {
            decompose_projection_extending(&mut net, &f, terms)?
        } else {
            (decompose_projection(&net, &f, terms)?, 0)
        };
        let step_excess = steps
            .iter()
            .map(|s| spectral_norm(&s.d) - s.norm_bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let residuals = decomposition_residuals(&net, &f, &steps);
        let residual_excess = (1..=terms)
            .map(|m| residuals[(m - 1).min(residuals.len() - 1)] - residual_bound(eps, m))
            .fold(f64::NEG_INFINITY, f64::max);
        put(&mut r, "steps", json!(steps.len()));
        put(&mut r, "max_step_excess", json!(step_excess));
        put(&mut r, "max_residual_excess", json!(residual_excess));
        put(&mut r, "final_residual", json!(residuals[residuals.len() - 1]));
        put(&mut r, "inserted", json!(inserted));
        put(&mut r, "net_size", json!(net.entries.len()));
        put(&mut r, "pass", json!(step_excess <= 1e-9 && residual_excess <= 1e-8));
        out.push(r);
    }
    Ok(out)
}
