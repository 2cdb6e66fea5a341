//! Command-line front end: experiment dispatch, deterministic seeding and
//! result serialization.
//!
//! Results are CSV with `#`-prefixed metadata lines (config hash and seed
//! first) or JSON for structured verifier reports. Identical
//! `(config, seed)` produce byte-identical outputs at any `--threads`
//! setting: every random stream is counter-derived and every reduction
//! runs in fixed index order.

use crate::analytic::{analyticity_report, ProbeSettings};
use crate::config::{ExperimentConfig, ProbeConfig};
use crate::error::{HmmError, Result};
use crate::filter::{FilterPass, FilterState};
use crate::kernels::{build_joint_kernel, invariant_distribution, mass_total};
use crate::measures::GridMeasure;
use crate::models::{ModelFamily, Observation};
use crate::rates::{
    estimate_entropy_horizons, estimate_loglik_horizons, extrapolate_estimates, RateEstimate,
    TrueModel,
};
use crate::rng::{stream, TAG_OBS_PATH};
use crate::scalar::Cplx;
use crate::verify::{check_all, forgetting_experiment};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "hmm-entropy",
    version,
    about = "Hidden Markov model filters, entropy-rate estimators and analyticity diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample state/observation trajectories from the configured model.
    /// CSV columns: traj, step, x…, y….
    Simulate(RunArgs),
    /// Run the filter along one simulated path.
    /// CSV columns: step, phi_re, phi_im, posterior mean per state dim.
    Filter(RunArgs),
    /// Estimate the entropy h_n per horizon with a 1/n extrapolation.
    /// CSV columns: n, value, stderr, num_traj.
    Entropy(RunArgs),
    /// Estimate the log-likelihood rate l_n of data from the true model
    /// scored under theta (optionally complex via eta_im).
    /// CSV columns: n, value_re, value_im, stderr, num_traj.
    Loglik(RunArgs),
    /// Paired-filter forgetting experiment.
    /// CSV columns: n, mean_gap; fitted rates in the metadata lines.
    Forgetting(RunArgs),
    /// Joint-kernel power iteration and geometric-rate fit.
    /// CSV columns: n, sup_tv.
    Ergodicity(RunArgs),
    /// Frozen-path analyticity verification; JSON report.
    Analyticity(RunArgs),
    /// Run all assumption checkers; JSON report.
    Check(RunArgs),
    /// Built-in example suite on the bundled fixtures.
    /// CSV columns: check, status, detail.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed (HMM_ENTROPY_SEED overrides both).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap; results are identical for any value.
    #[arg(long)]
    threads: Option<usize>,
    /// Multiplies verification tolerances.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

/// Exit code contract: 0 success, 1 validation failure, 2 failed
/// verification report.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let (threads, result) = match cli.command {
        Command::Simulate(a) => (a.threads, in_pool(a.threads, || cmd_simulate(&a))),
        Command::Filter(a) => (a.threads, in_pool(a.threads, || cmd_filter(&a))),
        Command::Entropy(a) => (a.threads, in_pool(a.threads, || cmd_entropy(&a))),
        Command::Loglik(a) => (a.threads, in_pool(a.threads, || cmd_loglik(&a))),
        Command::Forgetting(a) => (a.threads, in_pool(a.threads, || cmd_forgetting(&a))),
        Command::Ergodicity(a) => (a.threads, in_pool(a.threads, || cmd_ergodicity(&a))),
        Command::Analyticity(a) => (a.threads, in_pool(a.threads, || cmd_analyticity(&a))),
        Command::Check(a) => (a.threads, in_pool(a.threads, || cmd_check(&a))),
        Command::Selftest(a) => {
            let t = a.threads;
            (t, in_pool(t, || cmd_selftest(&a)))
        }
    };
    let _ = threads;
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs the command inside a dedicated rayon pool so `--threads` is a hard
/// cap regardless of global state.
fn in_pool<F: FnOnce() -> Result<i32> + Send>(threads: Option<usize>, f: F) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| HmmError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

struct Loaded {
    cfg: ExperimentConfig,
    model: Arc<dyn ModelFamily<f64>>,
    config_hash: String,
    seed: u64,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        HmmError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let model = cfg.model.build()?;
    let config_hash = hex_digest(text.as_bytes());
    let seed = resolve_seed(args.seed, cfg.master_seed)?;
    Ok(Loaded {
        cfg,
        model,
        config_hash,
        seed,
    })
}

fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    if let Ok(env) = std::env::var("HMM_ENTROPY_SEED") {
        return env
            .parse::<u64>()
            .map_err(|_| HmmError::Config("HMM_ENTROPY_SEED must be a u64".into()));
    }
    Ok(flag.unwrap_or(config_seed))
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn csv_header(command: &str, config_hash: &str, seed: u64) -> String {
    format!("# hmm-entropy {command}\n# config_sha256={config_hash} seed={seed}\n")
}

fn obs_to_fields(y: &Observation<f64>) -> String {
    match y {
        Observation::Symbol(s) => s.to_string(),
        Observation::Point(p) => p
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    }
}

fn cmd_simulate(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let theta = l.cfg.theta_point(l.model.as_ref())?;
    let init = l.cfg.init.build(l.model.as_ref())?;
    let data = TrueModel::new(l.model.clone(), theta, init)?;
    let dx = l.model.state_space().dim();
    let dy = match l.model.obs_space() {
        crate::models::ObsSpace::Finite { .. } => 1,
        crate::models::ObsSpace::Continuous { grid } => grid.dim(),
    };
    let mut body = csv_header("simulate", &l.config_hash, l.seed);
    let xs: Vec<String> = (0..dx).map(|k| format!("x{k}")).collect();
    let ys: Vec<String> = (0..dy).map(|k| format!("y{k}")).collect();
    let _ = writeln!(body, "traj,step,{},{}", xs.join(","), ys.join(","));
    for traj in 0..l.cfg.num_paths {
        let mut rng = stream(l.seed, TAG_OBS_PATH, traj as u64);
        let mut x = data.sample_initial_state(&mut rng);
        for step in 0..l.cfg.n_max {
            let (xn, y) = data.model.sample_step(&data.theta, &x, &mut rng)?;
            let xf = xn
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(body, "{traj},{step},{xf},{}", obs_to_fields(&y));
            x = xn;
        }
    }
    emit(&args.out, &body)?;
    Ok(0)
}

fn cmd_filter(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let theta = l.cfg.theta_point(l.model.as_ref())?;
    let eta = l.cfg.eta_point(l.model.as_ref())?;
    let init = l.cfg.init.build(l.model.as_ref())?;
    let data = TrueModel::new(l.model.clone(), theta, init.clone())?;
    let mut rng = stream(l.seed, TAG_OBS_PATH, 0);
    let ys = data.sample_observations(l.cfg.n_max, &mut rng)?;

    let pass = FilterPass::new(l.model.as_ref(), &eta)?;
    let mut state = FilterState::init(init);
    let space = l.model.state_space().clone();
    let mut body = csv_header("filter", &l.config_hash, l.seed);
    let means: Vec<String> = (0..space.dim()).map(|k| format!("mean{k}")).collect();
    let _ = writeln!(body, "step,phi_re,phi_im,{}", means.join(","));
    for (step, y) in ys.iter().enumerate() {
        let phi = pass.step(&mut state, y)?;
        let mut mean = vec![Cplx::new(0.0f64, 0.0); space.dim()];
        for g in 0..space.len() {
            let w = state.measure.density()[g] * Cplx::new(space.weight(g), 0.0);
            for k in 0..space.dim() {
                mean[k] += w * Cplx::new(space.point(g)[k], 0.0);
            }
        }
        let mf = mean
            .iter()
            .map(|m| m.re.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(body, "{step},{},{},{mf}", phi.re, phi.im);
    }
    if state.branch_warnings > 0 {
        let _ = writeln!(body, "# branch_warnings={}", state.branch_warnings);
    }
    emit(&args.out, &body)?;
    Ok(0)
}

fn rate_rows(
    command: &str,
    l: &Loaded,
    estimates: &[RateEstimate<f64>],
    complex_col: bool,
    fit: Option<(f64, f64, f64)>,
) -> String {
    let mut body = csv_header(command, &l.config_hash, l.seed);
    if let Some((limit, c, residual)) = fit {
        let _ = writeln!(body, "# extrapolated limit={limit} c={c} residual={residual}");
    }
    if complex_col {
        let _ = writeln!(body, "n,value_re,value_im,stderr,num_traj");
        for e in estimates {
            let _ = writeln!(
                body,
                "{},{},{},{},{}",
                e.horizon, e.value.re, e.value.im, e.stderr, e.num_traj
            );
        }
    } else {
        let _ = writeln!(body, "n,value,stderr,num_traj");
        for e in estimates {
            let _ = writeln!(
                body,
                "{},{},{},{}",
                e.horizon, e.value.re, e.stderr, e.num_traj
            );
        }
    }
    body
}

fn cmd_entropy(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let theta = l.cfg.theta_point(l.model.as_ref())?;
    let init = l.cfg.init.build(l.model.as_ref())?;
    let mut estimates = estimate_entropy_horizons(
        &l.model,
        &theta,
        &init,
        &l.cfg.horizons,
        l.cfg.num_traj,
        l.seed,
    )?;
    let fit = if estimates.len() >= 3 {
        Some(extrapolate_estimates(&mut estimates)?)
    } else {
        None
    };
    emit(&args.out, &rate_rows("entropy", &l, &estimates, false, fit))?;
    Ok(0)
}

fn cmd_loglik(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let eta = l.cfg.eta_point(l.model.as_ref())?;
    let init = l.cfg.init.build(l.model.as_ref())?;
    let true_theta = match &l.cfg.true_theta {
        Some(t) => crate::measures::ParameterPoint::real_point(t),
        None => l.cfg.theta_point(l.model.as_ref())?,
    };
    let true_init = match &l.cfg.true_init {
        Some(spec) => spec.build(l.model.as_ref())?,
        None => GridMeasure::uniform(l.model.state_space().clone()),
    };
    let data = TrueModel::new(l.model.clone(), true_theta, true_init)?;
    let mut estimates = estimate_loglik_horizons(
        &data,
        l.model.as_ref(),
        &eta,
        &init,
        &l.cfg.horizons,
        l.cfg.num_traj,
        l.seed,
    )?;
    let fit = if estimates.len() >= 3 && eta.is_real() {
        Some(extrapolate_estimates(&mut estimates)?)
    } else {
        None
    };
    emit(&args.out, &rate_rows("loglik", &l, &estimates, true, fit))?;
    Ok(0)
}

fn cmd_forgetting(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let eta = l.cfg.eta_point(l.model.as_ref())?;
    let init_a = l.cfg.init.build(l.model.as_ref())?;
    let init_b = match &l.cfg.init_b {
        Some(spec) => spec.build(l.model.as_ref())?,
        None => {
            let space = l.model.state_space().clone();
            let at = space.point(0).to_vec();
            GridMeasure::dirac(space, &at)?
        }
    };
    let mut pairs = vec![(init_a.clone(), init_b.clone())];
    if let Some(c) = l.cfg.complex_perturbation {
        // signed imaginary bump, zero total mass, inside V_delta(P(X))
        let space = l.model.state_space().clone();
        let n = space.len();
        let mut da = init_a.density().to_vec();
        let mut db = init_b.density().to_vec();
        for g in 0..n {
            let sign = if g < n / 2 { 1.0 } else { -1.0 };
            let bump = Cplx::new(0.0, sign * c / (space.weight(g) * n as f64));
            da[g] += bump;
            db[g] -= bump;
        }
        pairs.push((
            GridMeasure::from_density(space.clone(), da)?,
            GridMeasure::from_density(space, db)?,
        ));
    }
    let report = forgetting_experiment(
        &l.model,
        &eta,
        l.cfg.num_paths,
        l.cfg.n_max,
        &pairs,
        l.seed,
    )?;
    let mut body = csv_header("forgetting", &l.config_hash, l.seed);
    let _ = writeln!(
        body,
        "# mean_rate={:?} worst_rate={:?} benchmark={} immediate={}",
        report.mean_rate, report.worst_rate, report.benchmark, report.forgotten_immediately
    );
    let _ = writeln!(body, "n,mean_gap");
    for (i, g) in report.mean_gaps.iter().enumerate() {
        let _ = writeln!(body, "{},{}", i + 1, g);
    }
    emit(&args.out, &body)?;
    Ok(0)
}

fn cmd_ergodicity(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let eta = l.cfg.eta_point(l.model.as_ref())?;
    let kernel = build_joint_kernel(l.model.as_ref(), &eta, l.cfg.obs_bins)?;
    let report = invariant_distribution(&kernel);
    let mut body = csv_header("ergodicity", &l.config_hash, l.seed);
    let _ = writeln!(
        body,
        "# converged={} iterations={} rate={:?} invariant_total_mass_re={} invariant_total_mass_im={}",
        report.converged,
        report.iterations,
        report.rate,
        report.invariant_total_mass.re,
        report.invariant_total_mass.im
    );
    let _ = writeln!(body, "n,sup_tv");
    for (i, d) in report.sup_history.iter().enumerate() {
        let _ = writeln!(body, "{},{}", i + 1, d);
    }
    let total_ok = (report.invariant_total_mass - Cplx::new(1.0, 0.0)).norm() <= 1e-8;
    emit(&args.out, &body)?;
    Ok(if report.converged && total_ok { 0 } else { 2 })
}

#[derive(Serialize)]
struct JsonEnvelope<R: Serialize> {
    config_sha256: String,
    seed: u64,
    passed: bool,
    report: R,
}

fn emit_json<R: Serialize>(out: &Option<PathBuf>, envelope: &JsonEnvelope<R>) -> Result<()> {
    let text = serde_json::to_string_pretty(envelope)
        .map_err(|e| HmmError::Config(format!("serialize: {e}")))?;
    emit(out, &(text + "\n"))
}

fn cmd_analyticity(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let theta = l.cfg.theta_point(l.model.as_ref())?;
    let ProbeConfig {
        radius,
        order,
        direction,
    } = l.cfg.probe.clone();
    let settings = ProbeSettings::<f64> {
        radius,
        order,
        direction,
        ..ProbeSettings::default()
    }
    .scaled(args.tolerance_scale);
    let report = analyticity_report(
        &l.model,
        &theta,
        &l.cfg.horizons,
        l.cfg.num_paths.min(64),
        &settings,
        l.seed,
    )?;
    let passed = report.passed;
    emit_json(
        &args.out,
        &JsonEnvelope {
            config_sha256: l.config_hash.clone(),
            seed: l.seed,
            passed,
            report,
        },
    )?;
    Ok(if passed { 0 } else { 2 })
}

fn cmd_check(args: &RunArgs) -> Result<i32> {
    let l = load(args)?;
    let theta = l.cfg.theta_point(l.model.as_ref())?;
    let true_init = match &l.cfg.true_init {
        Some(spec) => spec.build(l.model.as_ref())?,
        None => GridMeasure::uniform(l.model.state_space().clone()),
    };
    let data = TrueModel::new(l.model.clone(), theta, true_init)?;
    let reports = check_all(&l.model, &data)?;
    let passed = reports.iter().all(|r| r.pass);
    emit_json(
        &args.out,
        &JsonEnvelope {
            config_sha256: l.config_hash.clone(),
            seed: l.seed,
            passed,
            report: reports,
        },
    )?;
    Ok(if passed { 0 } else { 2 })
}

fn cmd_selftest(args: &SelftestArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed, 0)?;
    let hash = hex_digest(b"builtin-selftest");
    let results = crate::cli::selftest::run_all(seed, args.tolerance_scale);
    let mut body = csv_header("selftest", &hash, seed);
    let mut all_ok = true;
    let _ = writeln!(body, "check,status,detail");
    for r in &results {
        all_ok &= r.passed;
        let _ = writeln!(
            body,
            "{},{},{}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    emit(&args.out, &body)?;
    for r in &results {
        println!("{}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
    }
    Ok(if all_ok { 0 } else { 2 })
}

/// Built-in example suite exercised by `hmm-entropy selftest`.
pub mod selftest {
    use super::*;
    use crate::analytic::{
        cauchy_coeffs, cauchy_riemann_residual, complex_step_grad, TaylorProbe,
    };
    use crate::filter::{compose_check, filter_path, update};
    use crate::fixtures;
    use crate::measures::ParameterPoint;
    use crate::models::{ConjugateEmission, FiniteModel};
    use crate::rates::{estimate_entropy, exact_entropy, extrapolate};

    pub struct SelftestResult {
        pub name: &'static str,
        pub passed: bool,
        pub detail: String,
    }

    fn check(
        name: &'static str,
        f: impl FnOnce() -> Result<String>,
        out: &mut Vec<SelftestResult>,
    ) {
        let (passed, detail) = match f() {
            Ok(detail) => (true, detail),
            Err(e) => (false, format!("{e}")),
        };
        out.push(SelftestResult {
            name,
            passed,
            detail,
        });
    }

    fn ensure(cond: bool, msg: &str) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(HmmError::Estimation(msg.to_string()))
        }
    }

    pub fn run_all(seed: u64, tolerance_scale: f64) -> Vec<SelftestResult> {
        let ts = tolerance_scale.max(1e-9);
        let mut out = Vec::new();

        check("dirac_normalization", || {
            let m = fixtures::finite_fixture::<f64>();
            let space = m.state_space().clone();
            for i in 0..space.len() {
                let d = GridMeasure::dirac(space.clone(), &space.point(i).to_vec())?;
                ensure((d.tv_norm() - 1.0).abs() < 1e-12, "dirac tv != 1")?;
            }
            Ok("tv_norm(dirac)=1".into())
        }, &mut out);

        check("measure_arithmetic", || {
            let m = fixtures::mixture_fixture::<f64>();
            let u = GridMeasure::uniform(m.state_space().clone());
            ensure((u.total_mass().re - 1.0).abs() < 1e-12, "uniform mass")?;
            ensure(u.sub(&u)?.tv_norm() == 0.0, "m - m != 0")?;
            let doubled = u.scale(Cplx::new(2.0, 0.0));
            ensure((doubled.total_mass().re - 2.0).abs() < 1e-12, "scale")?;
            Ok("uniform/scale/sub consistent".into())
        }, &mut out);

        check("finite_filter_matrix_maps", || {
            let m = fixtures::finite_fixture::<f64>();
            let theta = fixtures::finite_theta::<f64>();
            let p = m.transition_matrix(&theta)?;
            let q = m.emission_matrix(&theta)?;
            let mut rng = stream(seed, 90, 0);
            let mut worst = 0.0f64;
            for _ in 0..200 {
                let a: f64 = rand::Rng::random(&mut rng);
                let lambda = [a, 1.0 - a];
                let y = if rand::Rng::random::<bool>(&mut rng) { 1 } else { 0 };
                let xi = GridMeasure::from_density(
                    m.state_space().clone(),
                    lambda.iter().map(|&v| Cplx::new(v, 0.0)).collect(),
                )?;
                let st = update(m.as_ref(), &theta, &xi, &Observation::Symbol(y))?;
                // matrix map: G = R λ / eᵀRλ, h = log eᵀRλ
                let mut r = [0.0f64; 2];
                for to in 0..2 {
                    let mut acc = 0.0;
                    for from in 0..2 {
                        acc += p[from][to].re * lambda[from];
                    }
                    r[to] = q[to][y].re * acc;
                }
                let mass = r[0] + r[1];
                for g in 0..2 {
                    worst = worst.max((st.measure.density()[g].re - r[g] / mass).abs());
                }
                worst = worst.max((st.log_normalizer_sum.re - mass.ln()).abs());
            }
            ensure(worst < 1e-12, "filter vs matrix maps")?;
            Ok(format!("max deviation {worst:e}"))
        }, &mut out);

        check("composition_splits", || {
            let m = fixtures::finite_fixture::<f64>();
            let theta = fixtures::finite_theta::<f64>();
            let init = GridMeasure::uniform(m.state_space().clone());
            let data = TrueModel::new(m.clone() as Arc<dyn ModelFamily<f64>>, theta.clone(), init.clone())?;
            let mut rng = stream(seed, 91, 0);
            let ys = data.sample_observations(16, &mut rng)?;
            for k in 0..=16 {
                let (tv, phi) = compose_check(m.as_ref(), &theta, &init, &ys, k)?;
                ensure(tv <= 1e-10 && phi <= 1e-10, "composition deviation")?;
            }
            Ok("all splits within 1e-10".into())
        }, &mut out);

        check("iid_entropy_log2", || {
            let m: Arc<dyn ModelFamily<f64>> = fixtures::iid_uniform_fixture::<f64>(2);
            let theta = ParameterPoint::real_point(&[0.0]);
            let init = GridMeasure::uniform(m.state_space().clone());
            let est = estimate_entropy(&m, &theta, &init, 8, 500, seed)?;
            ensure(
                (est.value.re - 2f64.ln()).abs() <= 3.0 * est.stderr + 1e-12,
                "uniform-emission entropy != log 2",
            )?;
            Ok(format!("h_8 = {} (log 2 = {})", est.value.re, 2f64.ln()))
        }, &mut out);

        check("exact_entropy_binary", || {
            let m = FiniteModel::from_matrices(
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            )?;
            let theta = ParameterPoint::real_point(&[0.0]);
            let init = GridMeasure::from_masses(m.state_space().clone(), &[1.0, 0.0])?;
            let h = exact_entropy(&m, &theta, &init, 1)?;
            let expected = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
            ensure((h - expected).abs() < 1e-6, "binary entropy mismatch")?;
            Ok(format!("h_1 = {h}"))
        }, &mut out);

        check("extrapolation_synthetic", || {
            let pts: Vec<(usize, f64)> =
                [8, 16, 32, 64].iter().map(|&n| (n, 1.0 + 2.0 / n as f64)).collect();
            let (limit, c, res) = extrapolate(&pts)?;
            ensure((limit - 1.0).abs() < 1e-12 && (c - 2.0).abs() < 1e-12, "fit")?;
            ensure(res < 1e-12, "residual")?;
            Ok("limit 1, c 2, residual 0".into())
        }, &mut out);

        check("kernel_row_sums", || {
            let m = fixtures::finite_fixture::<f64>();
            let theta = fixtures::finite_theta::<f64>();
            let eta = ParameterPoint::complex_point(&theta.re(), &[0.02, -0.02])?;
            for p in [&theta, &eta] {
                let k = build_joint_kernel(m.as_ref(), p, None)?;
                for x in 0..k.n_x() {
                    let s = mass_total(k.row(x));
                    ensure((s - Cplx::new(1.0, 0.0)).norm() < 1e-9, "row sum")?;
                }
            }
            Ok("rows stochastic (real and complex)".into())
        }, &mut out);

        check("ergodic_rate_oracle", || {
            let m = FiniteModel::<f64>::from_matrices(
                vec![vec![0.9, 0.1], vec![0.1, 0.9]],
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            )?;
            let theta = ParameterPoint::real_point(&[0.0]);
            let k = build_joint_kernel(m.as_ref(), &theta, None)?;
            let rep = invariant_distribution(&k);
            let rate = rep.rate.ok_or_else(|| HmmError::Estimation("no rate".into()))?;
            ensure((rate - 0.8).abs() <= 0.02, "rate vs eigenvalue 0.8")?;
            Ok(format!("fitted rate {rate}"))
        }, &mut out);

        check("complex_step_square", || {
            let theta = ParameterPoint::real_point(&[3.0]);
            let g = complex_step_grad(
                |p: &ParameterPoint<f64>| Ok(p.coord(0) * p.coord(0)),
                &theta,
                None,
            )?;
            ensure(g[0] == 6.0, "d/dθ θ² at 3")?;
            Ok("gradient exact".into())
        }, &mut out);

        check("cauchy_exponential_series", || {
            let center = ParameterPoint::real_point(&[0.0]);
            let mut probe = TaylorProbe::new(center, vec![1.0], 0.5, 64)?;
            cauchy_coeffs(|p: &ParameterPoint<f64>| Ok(p.coord(0).exp()), &mut probe, 6)?;
            let mut fact = 1.0;
            for (k, c) in probe.coefficients.iter().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                }
                ensure((c - Cplx::new(1.0 / fact, 0.0)).norm() < 1e-10, "c_k != 1/k!")?;
            }
            Ok("c_k = 1/k! to 1e-10".into())
        }, &mut out);

        check("cauchy_riemann_witness", || {
            let eta = ParameterPoint::complex_point(&[0.3], &[0.2])?;
            let analytic = cauchy_riemann_residual(
                |p: &ParameterPoint<f64>| Ok(p.coord(0) * p.coord(0)),
                &eta,
                0,
                None,
            )?;
            let anti = cauchy_riemann_residual(
                |p: &ParameterPoint<f64>| Ok(p.coord(0).conj()),
                &eta,
                0,
                None,
            )?;
            ensure(analytic <= 1e-8, "analytic residual")?;
            ensure((anti - 2.0).abs() <= 1e-8, "conjugate residual")?;
            Ok(format!("residuals {analytic:e} / {anti}"))
        }, &mut out);

        check("one_step_forgetting", || {
            let m = fixtures::one_step_forgetting_fixture::<f64>();
            let theta = ParameterPoint::real_point(&[0.0]);
            let space = m.state_space().clone();
            let a = GridMeasure::from_masses(space.clone(), &[1.0, 0.0])?;
            let b = GridMeasure::uniform(space);
            let y = Observation::Symbol(0);
            let fa = update(m.as_ref(), &theta, &a, &y)?;
            let fb = update(m.as_ref(), &theta, &b, &y)?;
            ensure(
                fa.measure.tv_distance(&fb.measure)? < 1e-13,
                "one-step forgetting",
            )?;
            Ok("d_1 = 0".into())
        }, &mut out);

        check("planted_defect_detected", || {
            let base: Arc<dyn ModelFamily<f64>> = fixtures::finite_fixture::<f64>();
            let broken: Arc<dyn ModelFamily<f64>> = ConjugateEmission::new(base);
            let theta = fixtures::finite_theta::<f64>();
            let settings = ProbeSettings::<f64>::default().scaled(ts);
            let report = analyticity_report(&broken, &theta, &[8], 4, &settings, seed)?;
            ensure(!report.passed, "defect not detected")?;
            Ok("conjugated emission rejected".into())
        }, &mut out);

        check("filter_path_probability", || {
            let m = fixtures::finite_fixture::<f64>();
            let theta = fixtures::finite_theta::<f64>();
            let init = GridMeasure::uniform(m.state_space().clone());
            let data = TrueModel::new(m.clone() as Arc<dyn ModelFamily<f64>>, theta.clone(), init.clone())?;
            let mut rng = stream(seed, 92, 0);
            let ys = data.sample_observations(40, &mut rng)?;
            let st = filter_path(m.as_ref(), &theta, &init, &ys)?;
            ensure((st.measure.tv_norm() - 1.0).abs() < 1e-9, "tv after path")?;
            ensure(st.branch_warnings == 0, "branch warnings on real axis")?;
            Ok("probability preserved over 40 steps".into())
        }, &mut out);

        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_all_pass() {
        let results = selftest::run_all(7, 1.0);
        for r in &results {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert!(results.len() >= 12);
    }

    #[test]
    fn seed_resolution_precedence() {
        // flag over config default
        assert_eq!(resolve_seed(Some(5), 9).unwrap(), 5);
        assert_eq!(resolve_seed(None, 9).unwrap(), 9);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(hex_digest(b"").len(), 64);
        assert_eq!(hex_digest(b"abc"), hex_digest(b"abc"));
        assert_ne!(hex_digest(b"abc"), hex_digest(b"abd"));
    }
}
