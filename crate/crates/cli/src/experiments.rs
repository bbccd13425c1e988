//! The six experiments. Each seed (and each `ν`) is an independent work
//! item; results are gathered in input order so outputs do not depend on
//! scheduling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sodesync::linalg::symmetric_eigen;
use sodesync::scalar::distance;
use sodesync::{
    alpha_threshold, averaged_comparison, averaged_pullback_attractor, build_ou_paths, component_gap,
    contraction_envelope, estimate_t_omega, frame_convert, integrate_rode, integrate_sode_stratonovich, nu_sweep,
    pairwise_gap, pullback_attractor, sample_wiener, tridiag_eigenvalues, Frame, NoiseGrid, OUPathSet, OuInit,
    PullbackOptions, StateVector, SyncError, SystemSpec, TridiagSpec,
};

use crate::config::{build_system, Experiment, ExperimentConfig};
use crate::output::{num, Artifacts, Assertion, RunSummary, Status};
use crate::CliError;

/// Shift used by the attractor invariance check.
const INVARIANCE_SHIFT: f64 = 1.0;

struct Context<'a> {
    config: &'a ExperimentConfig,
    spec: SystemSpec<f64>,
}

impl Context<'_> {
    fn paths(&self, seed: u64) -> sodesync::Result<(NoiseGrid<f64>, OUPathSet<f64>)> {
        let grid = self.config.time_grid().expect("validated");
        let noise = sample_wiener(seed, grid, self.spec.m())?;
        let ou = build_ou_paths(&noise, self.spec.coeffs(), OuInit::Stationary)?;
        Ok((noise, ou))
    }

    fn initial(&self) -> StateVector<f64> {
        let (n, d) = (self.spec.n(), self.spec.d());
        let data = match &self.config.initial {
            Some(x) if x.len() == n * d => x.clone(),
            Some(x) => vec![x[0]; n * d],
            None => vec![1.0; n * d],
        };
        StateVector::new(Frame::Rode, n, d, data).expect("validated size")
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, d: usize) -> StateVector<f64> {
    let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    StateVector::new(Frame::Rode, n, d, data).expect("sizes agree")
}

/// Runs `work` for every seed in parallel. Numeric-range failures flag the
/// seed; any other error aborts the run.
fn per_seed<R: Send>(
    seeds: &[u64],
    work: impl Fn(u64) -> sodesync::Result<R> + Sync,
) -> Result<Vec<(u64, Option<R>)>, CliError> {
    seeds
        .par_iter()
        .map(|&seed| match work(seed) {
            Ok(r) => Ok((seed, Some(r))),
            Err(SyncError::NumericRange { .. }) => Ok((seed, None)),
            Err(source) => Err(CliError::Run { seed, source }),
        })
        .collect()
}

/// Gathers assertions and scalars, then settles the run status.
struct Report {
    experiment: Experiment,
    assertions: Vec<Assertion>,
    scalars: BTreeMap<String, Option<f64>>,
    flagged: Vec<u64>,
    used: Vec<u64>,
}

impl Report {
    fn new<R>(experiment: Experiment, results: &[(u64, Option<R>)]) -> Self {
        Report {
            experiment,
            assertions: Vec::new(),
            scalars: BTreeMap::new(),
            flagged: results.iter().filter(|r| r.1.is_none()).map(|r| r.0).collect(),
            used: results.iter().filter(|r| r.1.is_some()).map(|r| r.0).collect(),
        }
    }

    fn assert(&mut self, name: &str, comparison: &str, threshold: f64, observed: Option<f64>, artifact: &str) {
        let passed = observed.is_some_and(|v| match comparison {
            "<=" => v <= threshold,
            "<" => v < threshold,
            ">=" => v >= threshold,
            _ => unreachable!("known comparisons"),
        });
        self.assertions.push(Assertion {
            name: name.to_string(),
            experiment: self.experiment.name().to_string(),
            seeds: self.used.clone(),
            comparison: comparison.to_string(),
            threshold,
            observed,
            passed,
            artifact: artifact.to_string(),
        });
    }

    fn scalar(&mut self, name: &str, value: Option<f64>) {
        self.scalars.insert(name.to_string(), value);
    }

    fn finish(self, config: &ExperimentConfig, artifacts: &Artifacts) -> RunSummary {
        let total = self.flagged.len() + self.used.len();
        let flagged_share = if total == 0 { 0.0 } else { self.flagged.len() as f64 / total as f64 };
        let status = if flagged_share > config.tolerances.flagged_budget || (total > 0 && self.used.is_empty()) {
            Status::Inconclusive
        } else if self.assertions.iter().all(|a| a.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
        RunSummary {
            experiment: self.experiment.name().to_string(),
            status,
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            flagged_seeds: self.flagged,
            assertions: self.assertions,
            scalars: self.scalars,
            artifacts: artifacts.files().to_vec(),
        }
    }
}

fn share<R>(results: &[(u64, Option<R>)], pass: impl Fn(&R) -> bool) -> Option<f64> {
    let used: Vec<&R> = results.iter().filter_map(|r| r.1.as_ref()).collect();
    (!used.is_empty()).then(|| used.iter().filter(|r| pass(r)).count() as f64 / used.len() as f64)
}

fn worst<R>(results: &[(u64, Option<R>)], value: impl Fn(&R) -> f64) -> Option<f64> {
    results
        .iter()
        .filter_map(|r| r.1.as_ref().map(&value))
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Runs the configured experiment, writing artifacts and `summary.json`
/// into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let mut artifacts = Artifacts::new(out_dir, &config.hash(), config.experiment.name())?;
    let summary = if config.experiment == Experiment::SpectralCheck {
        spectral_check(config, &mut artifacts)?
    } else {
        let spec = build_system(config.system.as_ref().expect("validated")).map_err(CliError::Setup)?;
        let ctx = Context { config, spec };
        match config.experiment {
            Experiment::PairwiseSync => pairwise_sync(&ctx, &mut artifacts)?,
            Experiment::PullbackAttractor => pullback(&ctx, &mut artifacts)?,
            Experiment::NuSweep => sweep(&ctx, &mut artifacts)?,
            Experiment::AveragedConvergence => averaged(&ctx, &mut artifacts)?,
            Experiment::ConjugacyCheck => conjugacy(&ctx, &mut artifacts)?,
            Experiment::SpectralCheck => unreachable!("handled above"),
        }
    };
    artifacts.summary(&summary)?;
    Ok(summary)
}

struct PairwiseSeed {
    t_omega: f64,
    found: bool,
    rate: Option<f64>,
    worst_ratio: f64,
    holds: bool,
    anchored_ratio: f64,
    rows: Vec<Vec<String>>,
}

fn pairwise_sync(ctx: &Context, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let c = ctx.config;
    let tol = c.tolerances;
    let (n, d) = (ctx.spec.n(), ctx.spec.d());
    let deterministic = ctx.spec.coeffs().iter().flatten().all(|&v| v == 0.0);
    let t_end = c.grid.expect("validated").t_max;
    let opts = c.integrator();
    let results = per_seed(&c.seeds, |seed| {
        let (_, ou) = ctx.paths(seed)?;
        let t_omega = estimate_t_omega(&ou, ctx.spec.l())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = integrate_rode(&ctx.spec, &ou, &random_state(&mut rng, n, d), 0.0, t_end, opts)?;
        let b = integrate_rode(&ctx.spec, &ou, &random_state(&mut rng, n, d), 0.0, t_end, opts)?;
        let pair = pairwise_gap(&a, &b, t_omega.time)?;
        let env = contraction_envelope(&a, &b, t_omega, ctx.spec.l(), tol.envelope_slack)?;
        let spread = component_gap(&a, 0.0, t_end)?;
        let rows = pair
            .times
            .iter()
            .zip(&pair.gaps)
            .zip(&spread.gaps)
            .map(|((&t, &g), &s)| vec![num(t), num(g), num(s)])
            .collect();
        Ok(PairwiseSeed {
            t_omega: t_omega.time,
            found: t_omega.found,
            rate: pair.fitted_rate,
            worst_ratio: env.worst_ratio,
            holds: env.holds,
            anchored_ratio: env.anchored_ratio,
            rows,
        })
    })?;
    let mut table = Vec::new();
    for (seed, r) in &results {
        match r {
            Some(r) => {
                let name = format!("gaps_seed{seed}.csv");
                artifacts.csv(&name, &["t", "pairwise_gap", "component_gap"], &r.rows)?;
                table.push(vec![
                    seed.to_string(),
                    "false".into(),
                    num(r.t_omega),
                    r.found.to_string(),
                    num(r.rate),
                    num(r.worst_ratio),
                    r.holds.to_string(),
                    num(r.anchored_ratio),
                ]);
            }
            None => table.push(vec![
                seed.to_string(),
                "true".into(),
                "nan".into(),
                "false".into(),
                "nan".into(),
                "nan".into(),
                "false".into(),
                "nan".into(),
            ]),
        }
    }
    let file = "pairwise.csv";
    artifacts.csv(
        file,
        &["seed", "flagged", "t_omega", "t_omega_found", "fitted_rate", "envelope_ratio", "envelope_holds", "anchored_ratio"],
        &table,
    )?;
    let mut report = Report::new(Experiment::PairwiseSync, &results);
    let held = share(&results, |r| r.holds);
    report.assert("envelope_fraction", ">=", tol.envelope_fraction, held, file);
    let slowest = worst(&results, |r| r.rate.unwrap_or(f64::INFINITY));
    if deterministic {
        report.assert("fitted_rate", "<=", tol.pairwise_rate, slowest, file);
    }
    report.scalar("max_fitted_rate", slowest);
    report.scalar("envelope_fraction", held);
    report.scalar("t_omega_found_fraction", share(&results, |r| r.found));
    Ok(report.finish(c, artifacts))
}

struct PullbackItem {
    nu: f64,
    depth: f64,
    cauchy: Option<f64>,
    singleton: f64,
    invariance: Option<f64>,
    radius: f64,
    converged: bool,
    value: Vec<f64>,
}

fn pullback(ctx: &Context, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let c = ctx.config;
    let tol = c.tolerances;
    let deepest = *c.depths.last().expect("validated");
    let can_shift = c.grid.expect("validated").t_max >= INVARIANCE_SHIFT;
    let results = per_seed(&c.seeds, |seed| {
        let (_, ou) = ctx.paths(seed)?;
        let popts = PullbackOptions {
            seed,
            integrator: c.integrator(),
            ..Default::default()
        };
        let shifted = if can_shift { Some(ou.shifted(INVARIANCE_SHIFT)?) } else { None };
        c.nus
            .par_iter()
            .map(|&nu| {
                let spec = ctx.spec.with_nu(nu)?;
                let est = pullback_attractor(&spec, &ou, &c.depths, tol.attractor, &popts)?;
                let invariance = match &shifted {
                    Some(sh) => {
                        let evolved = integrate_rode(&spec, &ou, &est.value, 0.0, INVARIANCE_SHIFT, popts.integrator)?;
                        let later = pullback_attractor(&spec, sh, &[deepest], tol.attractor, &popts)?;
                        Some(distance(evolved.last_state().as_slice(), later.value.as_slice()))
                    }
                    None => None,
                };
                Ok(PullbackItem {
                    nu,
                    depth: deepest,
                    cauchy: est.cauchy_gap,
                    singleton: est.singleton_gap,
                    invariance,
                    radius: est.radius,
                    converged: est.converged,
                    value: est.value.as_slice().to_vec(),
                })
            })
            .collect::<sodesync::Result<Vec<_>>>()
    })?;
    let dim = ctx.spec.n() * ctx.spec.d();
    let mut columns = vec![
        "seed".to_string(),
        "nu".into(),
        "depth".into(),
        "cauchy_gap".into(),
        "singleton_gap".into(),
        "invariance_gap".into(),
        "radius".into(),
        "converged".into(),
    ];
    columns.extend((1..=dim).map(|i| format!("value{i}")));
    let mut table = Vec::new();
    for (seed, items) in &results {
        for item in items.iter().flatten() {
            let mut row = vec![
                seed.to_string(),
                num(item.nu),
                num(item.depth),
                num(item.cauchy),
                num(item.singleton),
                num(item.invariance),
                num(item.radius),
                item.converged.to_string(),
            ];
            row.extend(item.value.iter().map(|&v| num(v)));
            table.push(row);
        }
    }
    let file = "attractor.csv";
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    artifacts.csv(file, &cols, &table)?;
    let ok = |items: &Vec<PullbackItem>| {
        items
            .iter()
            .all(|i| i.converged && i.invariance.is_none_or(|g| g <= tol.invariance))
    };
    let mut report = Report::new(Experiment::PullbackAttractor, &results);
    report.assert("attractor_fraction", ">=", tol.attractor_fraction, share(&results, ok), file);
    report.scalar("max_singleton_gap", worst(&results, |v| v.iter().map(|i| i.singleton).fold(0.0, f64::max)));
    report.scalar(
        "max_invariance_gap",
        worst(&results, |v| v.iter().filter_map(|i| i.invariance).fold(0.0, f64::max)),
    );
    Ok(report.finish(c, artifacts))
}

fn sweep(ctx: &Context, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let c = ctx.config;
    let tol = c.tolerances;
    let x0 = ctx.initial();
    let results = per_seed(&c.seeds, |seed| {
        let (_, ou) = ctx.paths(seed)?;
        nu_sweep(&ctx.spec, &ou, &x0, c.t0, &c.nus, c.window, c.integrator())
    })?;
    let mut table = Vec::new();
    for (seed, r) in &results {
        if let Some(r) = r {
            for row in &r.rows {
                table.push(vec![
                    seed.to_string(),
                    num(row.nu),
                    num(row.sup_gap),
                    num(row.m_bound),
                    num(r.slope),
                    r.strictly_decreasing.to_string(),
                ]);
            }
        }
    }
    let file = "sweep.csv";
    artifacts.csv(file, &["seed", "nu", "sup_gap", "m_bound", "slope", "strictly_decreasing"], &table)?;
    let mut report = Report::new(Experiment::NuSweep, &results);
    report.assert("decreasing_fraction", ">=", 1.0, share(&results, |r| r.strictly_decreasing), file);
    let off = worst(&results, |r| r.slope.map_or(f64::INFINITY, |s| (s - tol.slope_target).abs()));
    report.assert("slope_deviation", "<=", tol.slope_band, off, file);
    report.scalar("max_slope_deviation", off);
    report.scalar("m_uniform_fraction", share(&results, |r| r.m_uniform));
    Ok(report.finish(c, artifacts))
}

fn averaged(ctx: &Context, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let c = ctx.config;
    let tol = c.tolerances;
    let depth = *c.depths.last().expect("validated");
    let results = per_seed(&c.seeds, |seed| {
        let (_, ou) = ctx.paths(seed)?;
        let report = averaged_comparison(&ctx.spec, &ou, &c.nus, c.window, depth, c.integrator())?;
        let popts = PullbackOptions {
            seed,
            t_eval: c.window.0,
            integrator: c.integrator(),
        };
        let zbar = averaged_pullback_attractor(&ctx.spec, &ou, &c.depths, tol.attractor, &popts)?;
        Ok((report, zbar.singleton_gap, zbar.converged))
    })?;
    let mut table = Vec::new();
    for (seed, r) in &results {
        if let Some((rep, singleton, converged)) = r {
            for row in &rep.rows {
                table.push(vec![
                    seed.to_string(),
                    num(row.nu),
                    num(row.sup_gap),
                    num(row.mean_gap),
                    rep.decreasing.to_string(),
                    num(*singleton),
                    converged.to_string(),
                ]);
            }
        }
    }
    let file = "averaged.csv";
    artifacts.csv(
        file,
        &["seed", "nu", "sup_gap", "mean_gap", "decreasing", "averaged_singleton_gap", "averaged_converged"],
        &table,
    )?;
    let mut report = Report::new(Experiment::AveragedConvergence, &results);
    let decreasing = share(&results, |r| r.0.decreasing);
    report.assert("decreasing_fraction", ">=", tol.averaged_fraction, decreasing, file);
    report.assert("averaged_singleton_fraction", ">=", tol.averaged_fraction, share(&results, |r| r.2), file);
    report.scalar("decreasing_fraction", decreasing);
    Ok(report.finish(c, artifacts))
}

fn conjugacy(ctx: &Context, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let c = ctx.config;
    let tol = c.tolerances;
    let t_end = c.grid.expect("validated").t_max;
    let x0 = ctx.initial();
    let first = c.seeds[0];
    let results = per_seed(&c.seeds, |seed| {
        let (noise, ou) = ctx.paths(seed)?;
        let rode = integrate_rode(&ctx.spec, &ou, &x0, c.t0, t_end, c.integrator())?;
        let k0 = ou.grid().index_of(c.t0)?;
        let x0s = frame_convert(&x0, &ou.at(k0), Frame::Sode)?;
        let sode = integrate_sode_stratonovich(&ctx.spec, &noise, &ou, &x0s, c.t0, t_end)?;
        let converted = rode.convert(&ou, Frame::Sode)?;
        let rel = converted.sup_distance(&sode)? / sode.sup_norm();
        let keep = (seed == first).then_some((converted, sode));
        Ok((rel, keep))
    })?;
    if let Some((_, Some((_, Some((converted, sode)))))) = results.iter().find(|r| r.0 == first) {
        let tag = artifacts.tag().to_string();
        artifacts.write_with(&format!("trajectory_rode_seed{first}.csv"), |out| converted.write_csv(out, Some(&tag)))?;
        artifacts.write_with(&format!("trajectory_sode_seed{first}.csv"), |out| sode.write_csv(out, Some(&tag)))?;
    }
    let table: Vec<Vec<String>> = results
        .iter()
        .map(|(seed, r)| match r {
            Some((rel, _)) => vec![seed.to_string(), "false".into(), num(*rel), (*rel <= tol.conjugacy_rel).to_string()],
            None => vec![seed.to_string(), "true".into(), "nan".into(), "false".into()],
        })
        .collect();
    let file = "conjugacy.csv";
    artifacts.csv(file, &["seed", "flagged", "relative_gap", "passed"], &table)?;
    let mut report = Report::new(Experiment::ConjugacyCheck, &results);
    let fraction = share(&results, |r| r.0 <= tol.conjugacy_rel);
    report.assert("conjugacy_fraction", ">=", tol.conjugacy_fraction, fraction, file);
    report.scalar("max_relative_gap", worst(&results, |r| r.0));
    Ok(report.finish(c, artifacts))
}

fn spectral_check(c: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<RunSummary, CliError> {
    let rows: Vec<(usize, f64, f64, f64)> = (1..=c.p_max)
        .into_par_iter()
        .flat_map_iter(|p| {
            [0.0, 1.0, 1.9, 3.0].into_iter().map(move |alpha| {
                let spec = TridiagSpec::<f64>::new(p, alpha).expect("p >= 1");
                let mut dense = symmetric_eigen(&spec.matrix()).values;
                dense.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                let closed = tridiag_eigenvalues(&spec);
                let err = closed.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (p, alpha, err, closed[p - 1])
            })
        })
        .collect();
    let thresholds: Vec<(usize, f64, f64)> = (2..=c.p_max)
        .into_par_iter()
        .map(|p| {
            let a0 = alpha_threshold::<f64>(p);
            let spec = TridiagSpec::new(p, a0).expect("p >= 1");
            let top = symmetric_eigen(&spec.matrix()).values.into_iter().fold(f64::MIN, f64::max);
            (p, a0, top)
        })
        .collect();
    let spectra = "spectral.csv";
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|&(p, a, e, top)| vec![p.to_string(), num(a), num(e), num(top)])
        .collect();
    artifacts.csv(spectra, &["p", "alpha", "max_abs_error", "max_eigenvalue"], &table)?;
    let definite = "alpha_threshold.csv";
    let table: Vec<Vec<String>> = thresholds
        .iter()
        .map(|&(p, a0, top)| vec![p.to_string(), num(a0), num(top), (top < 0.0).to_string()])
        .collect();
    artifacts.csv(definite, &["p", "alpha0", "max_eigenvalue", "negative_definite"], &table)?;

    let mut report = Report {
        experiment: Experiment::SpectralCheck,
        assertions: Vec::new(),
        scalars: BTreeMap::new(),
        flagged: Vec::new(),
        used: Vec::new(),
    };
    let err = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    report.assert("eigenvalue_error", "<=", c.tolerances.spectral, Some(err), spectra);
    let top = thresholds.iter().map(|r| r.2).fold(f64::MIN, f64::max);
    report.assert("alpha0_max_eigenvalue", "<", 0.0, Some(top), definite);
    report.scalar("max_eigenvalue_error", Some(err));
    report.scalar("p_max", Some(c.p_max as f64));
    Ok(report.finish(c, artifacts))
}
