//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `--nocapture`). Timed criteria serialize on a lock so
//! wall-clock budgets are not distorted by sibling tests.

use hmm_entropy::analytic::{analyticity_report, ProbeSettings};
use hmm_entropy::filter::{filter_path, update};
use hmm_entropy::fixtures;
use hmm_entropy::kernels::{build_joint_kernel, invariant_distribution, mass_total};
use hmm_entropy::measures::{GridMeasure, ParameterPoint};
use hmm_entropy::models::{FiniteModel, ModelFamily, Observation};
use hmm_entropy::rates::{
    estimate_entropy, estimate_entropy_horizons, exact_entropy, lambda_independence, TrueModel,
};
use hmm_entropy::rng::stream;
use hmm_entropy::verify::{check_mixing, forgetting_experiment, rate_convergence_experiment,
                          theta_grid};
use num_complex::Complex;
use rand::Rng;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

type C = Complex<f64>;

fn timed_lock() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

fn finite_dyn() -> Arc<dyn ModelFamily<f64>> {
    fixtures::finite_fixture::<f64>()
}

fn sample_symbol_path(
    model: &Arc<dyn ModelFamily<f64>>,
    theta: &ParameterPoint<f64>,
    n: usize,
    seed: u64,
) -> Vec<Observation<f64>> {
    let init = GridMeasure::uniform(model.state_space().clone());
    let data = TrueModel::new(model.clone(), theta.clone(), init).unwrap();
    let mut rng = stream(seed, 77, 0);
    data.sample_observations(n, &mut rng).unwrap()
}

#[test]
fn criterion_01_path_sum_oracle_equivalence() {
    let _guard = timed_lock();
    let start = Instant::now();
    let model = fixtures::finite_fixture::<f64>();
    let theta = fixtures::finite_theta::<f64>();
    let dynm: Arc<dyn ModelFamily<f64>> = model.clone();
    let n = 12usize;
    let p = model.transition_matrix(&theta).unwrap();
    let q = model.emission_matrix(&theta).unwrap();
    let lambda = [0.35f64, 0.65];
    let init = GridMeasure::from_density(
        model.state_space().clone(),
        lambda.iter().map(|&v| C::new(v, 0.0)).collect(),
    )
    .unwrap();
    let mut worst = 0.0f64;
    for path_idx in 0..50u64 {
        let ys = sample_symbol_path(&dynm, &theta, n, 1000 + path_idx);
        // brute-force sum over all 2^13 hidden paths
        let mut total = 0.0f64;
        for assignment in 0..(1usize << (n + 1)) {
            let state = |i: usize| assignment >> i & 1;
            let mut prob = lambda[state(0)];
            for (k, y) in ys.iter().enumerate() {
                let (from, to) = (state(k), state(k + 1));
                prob *= p[from][to].re * q[to][y.as_symbol().unwrap()].re;
            }
            total += prob;
        }
        let st = filter_path(model.as_ref(), &theta, &init, &ys).unwrap();
        let dev = (st.log_normalizer_sum.re - total.ln()).abs();
        worst = worst.max(dev);
        assert!(dev <= 1e-10, "path {path_idx}: deviation {dev}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?} ≥ 5 s");
    println!(
        "PASS criterion 01: filter log-likelihood = brute-force path sum \
         (50 paths, n=12, worst |Δ| = {worst:.2e}, {elapsed:?})"
    );
}

#[test]
fn criterion_02_matrix_map_equivalence() {
    let _guard = timed_lock();
    let start = Instant::now();
    let model = fixtures::finite_fixture::<f64>();
    let space = model.state_space().clone();
    let bx = model.param_box().clone();
    let mut rng = stream(2, 77, 1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a: f64 = rng.random();
        let lambda = [a, 1.0 - a];
        let y = usize::from(rng.random::<bool>());
        let theta = ParameterPoint::real_point(&[
            bx.lower[0] + (bx.upper[0] - bx.lower[0]) * rng.random::<f64>(),
            bx.lower[1] + (bx.upper[1] - bx.lower[1]) * rng.random::<f64>(),
        ]);
        let xi = GridMeasure::from_density(
            space.clone(),
            lambda.iter().map(|&v| C::new(v, 0.0)).collect(),
        )
        .unwrap();
        let st = update(model.as_ref(), &theta, &xi, &Observation::Symbol(y)).unwrap();

        // matrix maps: G = R(y)λ / eᵀR(y)λ and h = log eᵀR(y)λ
        let p = model.transition_matrix(&theta).unwrap();
        let q = model.emission_matrix(&theta).unwrap();
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
    assert!(worst <= 1e-12, "worst deviation {worst}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?} ≥ 1 s");
    println!(
        "PASS criterion 02: filter matches matrix maps G/h \
         (10³ random (λ,y,θ), worst |Δ| = {worst:.2e}, {elapsed:?})"
    );
}

#[test]
fn criterion_03_exact_entropy_cross_check() {
    let _guard = timed_lock();
    let start = Instant::now();
    let model = fixtures::finite_fixture::<f64>();
    let theta = fixtures::finite_theta::<f64>();
    let init = GridMeasure::uniform(model.state_space().clone());
    let exact = exact_entropy(&model, &theta, &init, 8).unwrap();
    let dynm: Arc<dyn ModelFamily<f64>> = model;
    let est = estimate_entropy(&dynm, &theta, &init, 8, 100_000, 20_260_810).unwrap();
    let dev = (est.value.re - exact).abs();
    assert!(
        dev <= 3.0 * est.stderr,
        "MC {} vs exact {exact} exceeds 3σ ({})",
        est.value.re,
        est.stderr
    );
    assert!(est.stderr < 5e-3, "stderr {}", est.stderr);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "runtime {elapsed:?} ≥ 30 s");
    println!(
        "PASS criterion 03: h_8 Monte Carlo {} vs exact {exact} \
         (|Δ| = {dev:.2e} ≤ 3σ = {:.2e}, {elapsed:?})",
        est.value.re,
        3.0 * est.stderr
    );
}

#[test]
fn criterion_04_iid_reduction() {
    let m: Arc<dyn ModelFamily<f64>> = fixtures::iid_uniform_fixture::<f64>(2);
    let theta = ParameterPoint::real_point(&[0.0]);
    let init = GridMeasure::uniform(m.state_space().clone());
    let horizons = [2usize, 4, 8, 16, 32];
    let ests = estimate_entropy_horizons(&m, &theta, &init, &horizons, 2_000, 4).unwrap();
    for e in &ests {
        let dev = (e.value.re - 2f64.ln()).abs();
        assert!(
            dev <= 3.0 * e.stderr + 1e-12,
            "n={}: h = {} vs log 2",
            e.horizon,
            e.value.re
        );
    }
    println!(
        "PASS criterion 04: uniform-emission h_n = log M at horizons {horizons:?} \
         (worst |Δ| = {:.2e})",
        ests.iter()
            .map(|e| (e.value.re - 2f64.ln()).abs())
            .fold(0.0, f64::max)
    );
}

fn forgetting_criterion(
    label: &str,
    model: Arc<dyn ModelFamily<f64>>,
    theta: ParameterPoint<f64>,
    n_max: usize,
) {
    let space = model.state_space().clone();
    let a = GridMeasure::dirac(space.clone(), &space.point(0).to_vec()).unwrap();
    let b = GridMeasure::dirac(space.clone(), &space.point(space.len() - 1).to_vec()).unwrap();
    let report = forgetting_experiment(&model, &theta, 200, n_max, &[(a, b)], 99).unwrap();
    let mean = report.mean_rate.expect("gaps must be measurable");
    assert!(
        mean <= report.benchmark + 0.05,
        "{label}: mean rate {mean} exceeds 1 − ε*² + 0.05 = {}",
        report.benchmark + 0.05
    );
    // monotone-ish: once below 0.1, no step may grow by more than 10%
    for w in report.mean_gaps.windows(2) {
        if w[0] < 0.1 && w[0] > 1e-13 {
            assert!(
                w[1] <= 1.10 * w[0],
                "{label}: gap rose {} → {}",
                w[0],
                w[1]
            );
        }
    }
    println!(
        "PASS criterion 05[{label}]: mean γ̂ = {mean:.4} ≤ {:.4}, gaps monotone-ish",
        report.benchmark + 0.05
    );
}

#[test]
fn criterion_05_filter_forgetting_finite_and_mixture() {
    let _guard = timed_lock();
    forgetting_criterion("finite", finite_dyn(), fixtures::finite_theta::<f64>(), 60);
    forgetting_criterion(
        "mixture",
        fixtures::mixture_fixture::<f64>(),
        fixtures::mixture_theta::<f64>(),
        40,
    );
}

#[test]
fn criterion_06_complex_measure_forgetting() {
    let model = finite_dyn();
    let theta = fixtures::finite_theta::<f64>();
    let delta = model.delta_model();
    let im = 0.01 * delta;
    let eta = ParameterPoint::complex_point(&theta.re(), &[im, im]).unwrap();
    let space = model.state_space().clone();
    // complex perturbations of probability vectors, inside V_δ(P(X))
    let bump = 0.4 * delta;
    let xi_a = GridMeasure::from_density(
        space.clone(),
        vec![C::new(1.0, bump), C::new(0.0, -bump)],
    )
    .unwrap();
    let xi_b = GridMeasure::from_density(
        space.clone(),
        vec![C::new(0.5, -bump), C::new(0.5, bump)],
    )
    .unwrap();
    let report = forgetting_experiment(&model, &eta, 50, 100, &[(xi_a, xi_b)], 6).unwrap();
    let last = *report.mean_gaps.last().unwrap();
    assert!(last < 1e-8, "gap after 100 steps: {last}");
    println!(
        "PASS criterion 06: complex forgetting d_100 = {last:.2e} < 1e-8 \
         (im(η) = 0.01·δ, complex ξ pairs)"
    );
}

#[test]
fn criterion_07_lambda_independence() {
    let _guard = timed_lock();
    let model = finite_dyn();
    let theta = fixtures::finite_theta::<f64>();
    let space = model.state_space().clone();
    let delta_init = GridMeasure::dirac(space.clone(), &space.point(0).to_vec()).unwrap();
    let uniform = GridMeasure::uniform(space.clone());
    let data = TrueModel::new(model.clone(), theta.clone(), uniform.clone()).unwrap();
    let report = lambda_independence(
        &model,
        &theta,
        &data,
        &delta_init,
        &uniform,
        &[8, 16, 32, 64],
        4_000,
        41,
    )
    .unwrap();
    let exponent = report.decay_exponent.expect("gaps above floor");
    assert!(
        (0.8..=1.2).contains(&exponent),
        "decay exponent {exponent} outside [0.8, 1.2]"
    );
    let combined = report.limit_a.2 + report.limit_b.2;
    assert!(
        report.limit_gap <= 2.0 * combined + 1e-12,
        "limit gap {} vs 2×residual {}",
        report.limit_gap,
        2.0 * combined
    );
    println!(
        "PASS criterion 07: λ-gap decay exponent {exponent:.3} ∈ [0.8, 1.2]; \
         limit gap {:.2e} ≤ 2×(residuals {:.2e})",
        report.limit_gap, combined
    );
}

#[test]
fn criterion_08_one_over_n_convergence() {
    let _guard = timed_lock();
    let start = Instant::now();
    let model = finite_dyn();
    let theta = fixtures::finite_theta::<f64>();
    // point-mass start maximizes the initialization transient the 1/n
    // term measures
    let init = GridMeasure::from_masses(model.state_space().clone(), &[1.0, 0.0]).unwrap();
    let report = rate_convergence_experiment(
        &model,
        &theta,
        &init,
        &[8, 16, 32, 64, 256],
        100_000,
        88,
    )
    .unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "runtime {elapsed:?} ≥ 5 min");
    if report.inconclusive {
        // acceptable outcome per the criterion, but it must be justified:
        // gaps genuinely dominated by Monte Carlo noise
        let dominated = report
            .gaps
            .iter()
            .filter(|(_, g, se)| *g <= 3.0 * *se)
            .count();
        assert!(2 * dominated >= report.gaps.len());
        println!(
            "PASS criterion 08: inconclusive — {dominated}/{} gaps within 3σ of zero \
             ({elapsed:?})",
            report.gaps.len()
        );
    } else {
        let slope = report.slope.expect("slope is fitted when conclusive");
        assert!(
            (-1.3..=-0.7).contains(&slope),
            "slope {slope} outside [−1.3, −0.7]; gaps {:?}",
            report.gaps
        );
        println!(
            "PASS criterion 08: |h_n − h_ref| log-log slope {slope:.3} ∈ [−1.3, −0.7] \
             (10⁵ trajectories, {elapsed:?})"
        );
    }
}

#[test]
fn criterion_09_analyticity_and_planted_defect() {
    let _guard = timed_lock();
    let model = finite_dyn();
    let theta = fixtures::finite_theta::<f64>();
    let report = analyticity_report(
        &model,
        &theta,
        &[8, 16, 32],
        32,
        &ProbeSettings::default(),
        1717,
    )
    .unwrap();
    assert!(report.passed, "checks: {:?}", report.checks);
    let by_name = |n: &str| {
        report
            .checks
            .iter()
            .find(|c| c.name == n)
            .unwrap_or_else(|| panic!("missing check {n}"))
    };
    assert!(by_name("gradient_agreement").tolerance <= 1e-5);
    assert!(by_name("cauchy_riemann_residual").tolerance <= 1e-6);
    assert!(by_name("taylor_reconstruction").tolerance <= 1e-8);

    // planted anti-analytic defect must be rejected with exit code 2
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("broken.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "model": {
                "family": "finite",
                "transition": [[0.9, 0.1], [0.1, 0.9]],
                "emission": [[0.9, 0.1], [0.2, 0.8]],
                "transition_coupling": [[[1,0],[-1,0]],[[-1,0],[1,0]]],
                "emission_coupling": [[[0,1],[0,-1]],[[0,-1],[0,1]]],
                "param_box": [[-0.2,0.2],[-0.2,0.2]],
                "delta_model": 0.1,
                "conjugate_emission": true
            },
            "theta": [0.0, 0.0],
            "horizons": [8],
            "num_paths": 4,
            "master_seed": 7
        }"#,
    )
    .unwrap();
    let code = hmm_entropy::cli::run([
        "hmm-entropy".to_string(),
        "analyticity".into(),
        "--config".into(),
        cfg_path.display().to_string(),
        "--out".into(),
        dir.path().join("broken_report.json").display().to_string(),
    ]);
    assert_eq!(code, 2, "planted defect must exit 2");
    println!(
        "PASS criterion 09: gradient/CR/Taylor checks within tolerance; \
         planted conjugation detected (exit 2)"
    );
}

#[test]
fn criterion_10_geometric_ergodicity() {
    let model = FiniteModel::<f64>::from_matrices(
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
    )
    .unwrap();
    let theta = ParameterPoint::real_point(&[0.0]);
    let kernel = build_joint_kernel(model.as_ref(), &theta, None).unwrap();
    let report = invariant_distribution(&kernel);
    assert!(report.converged);
    let rate = report.rate.expect("decay measurable");
    // eigenvalue oracle: second eigenvalue of a 2×2 stochastic matrix is
    // trace − 1 = 0.9 + 0.9 − 1 = 0.8
    let oracle = 0.9 + 0.9 - 1.0;
    assert!((rate - oracle).abs() <= 0.02, "rate {rate} vs {oracle}");

    // complex kernel: 50 iterates preserve total mass 1 ± 1e-8
    let fixture = fixtures::finite_fixture::<f64>();
    let eta = ParameterPoint::complex_point(&[0.0, 0.0], &[0.03, -0.02]).unwrap();
    let ck = build_joint_kernel(fixture.as_ref(), &eta, None).unwrap();
    let mut zeta = ck.uniform_mass();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        zeta = ck.iterate(&zeta, 1);
        worst = worst.max((mass_total(&zeta) - C::new(1.0, 0.0)).norm());
    }
    assert!(worst <= 1e-8, "mass drift {worst}");
    println!(
        "PASS criterion 10: joint-kernel rate {rate:.4} = 0.8 ± 0.02; \
         complex mass drift {worst:.2e} over 50 steps"
    );
}

#[test]
fn criterion_11_selftest_byte_determinism() {
    let _guard = timed_lock();
    let exe = env!("CARGO_BIN_EXE_hmm-entropy");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (tag, threads) in [("a1", "1"), ("b1", "1"), ("a8", "8"), ("b8", "8")] {
        let out = dir.path().join(format!("selftest_{tag}.csv"));
        let status = std::process::Command::new(exe)
            .args([
                "selftest",
                "--seed",
                "31415",
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .expect("selftest run");
        assert!(
            status.status.success(),
            "selftest failed: {}",
            String::from_utf8_lossy(&status.stdout)
        );
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "same-thread reruns differ");
    assert_eq!(outputs[0], outputs[2], "thread count changed the bytes");
    assert_eq!(outputs[0], outputs[3]);
    println!(
        "PASS criterion 11: selftest outputs byte-identical across reruns and \
         --threads 1/8 ({} bytes)",
        outputs[0].len()
    );
}

#[test]
fn mixing_constants_for_acceptance_fixtures() {
    // supporting evidence for criterion 5: ε* > 0 witnessed on both fixtures
    let finite = finite_dyn();
    let eps_f = check_mixing(finite.as_ref(), &theta_grid(finite.param_box(), 8))
        .unwrap()
        .constants["epsilon_star"];
    assert!(eps_f > 0.0);
    let mixture = fixtures::mixture_fixture::<f64>();
    let eps_m = check_mixing(mixture.as_ref(), &theta_grid(mixture.param_box(), 8))
        .unwrap()
        .constants["epsilon_star"];
    assert!(eps_m > 0.0);
    println!("PASS support: ε*(finite) = {eps_f:.4}, ε*(mixture) = {eps_m:.4}");
}
