//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use onn_noise::design_a::{
    common_variance_bound, deviation_check, eval_design_a, sufficient_copies, CopyBudgetRequest, DesignA,
    DesignASpec, DEFAULT_HOEFFDING_C, DEFAULT_HOEFFDING_SMALL_C,
};
use onn_noise::design_b::{eval_design_b, suggested_m, DesignB, DesignBSpec, MHeuristic};
use onn_noise::experiments::{
    insert_identity_layers, insertion_tuple, per_trial_mse, run_depth_sweep, run_mse_experiment, scan_m_grid, Design,
    DesignKind, InsertionPlan, MseRow, Setup, DepthRow,
};
use onn_noise::idx;
use onn_noise::linear::{
    design_b_output_covariance, fixed_point_residual, fixed_point_solve, fixed_point_solve_b, limit_series,
    limit_series_b, propagate, propagate_b, propagate_b_averaged, step_map, step_map_b, symmetric_closed_form,
    symmetric_closed_form_b, Contraction, FixedPointMethod,
};
use onn_noise::monte_carlo::{monte_carlo, PlainOnn};
use onn_noise::noise::noisy_forward;
use onn_noise::stats::DEFAULT_CONFIDENCE;
use onn_noise::{Activation, CovSpec, Exec, Layer, Network, NoiseProfile, RngStream};
use onn_noise_validation::*;
use rand::Rng;

const SEED: u64 = 0x0A11_CE55;
const MC_TRIALS: usize = 100_000;
const COV_REL_TOL: f64 = 0.05;
const CLOSED_FORM_ABS_TOL: f64 = 1e-10;
const LIMIT_AGREE_TOL: f64 = 1e-8;
const SLOPE_TOL: f64 = 0.15;
const GRID_MATCH_FRACTION: f64 = 0.95;
const BUDGET_CAP: u64 = 100_000;

struct LinearCase {
    net: onn_noise::linear::LinearNet,
    profile: NoiseProfile,
    x: DVector<f64>,
}

fn linear_cases() -> Vec<LinearCase> {
    (0..20u64)
        .map(|case| {
            let mut rng = RngStream::from_path(SEED, &[1, case]);
            let net = random_linear_net(&mut rng, 4, 6);
            let profile = random_profile(&mut rng, &net.dims(), 0.05);
            let x = random_vector(&mut rng, net.dims()[0], -1.0, 1.0);
            LinearCase { net, profile, x }
        })
        .collect()
}

fn criterion_1(cases: &[LinearCase]) -> Verdict {
    let mut worst: f64 = 0.0;
    for (k, c) in cases.iter().enumerate() {
        let net = c.net.to_network().unwrap();
        let truth = propagate(&c.net, &c.profile).unwrap();
        let clean = net.forward(&c.x).unwrap();
        let stats = monte_carlo(&PlainOnn { net: &net, profile: &c.profile }, &c.x, &clean, MC_TRIALS, SEED + k as u64)
            .unwrap();
        worst = worst.max(rel_frobenius(&stats.covariance, truth.output()));
    }
    Verdict::new(
        "1",
        "sample covariance of the noisy network vs propagated covariance",
        worst <= COV_REL_TOL,
        format!("20 nets, {MC_TRIALS} trials each, max relative Frobenius error {worst:.4} (tol {COV_REL_TOL})"),
    )
}

/// Returns the criterion verdict and the supplementary exact-recursion verdict.
fn criterion_2(cases: &[LinearCase]) -> (Verdict, Verdict) {
    let mut worst_theory: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    let mut failing = Vec::new();
    let mut worst_shallow: f64 = 0.0;
    for (k, c) in cases.iter().enumerate() {
        let mut rng = RngStream::from_path(SEED, &[2, k as u64]);
        let profile = c
            .profile
            .clone()
            .with_combine(CovSpec::Isotropic(uniform(&mut rng, 0.01, 0.09)))
            .unwrap()
            .with_split(CovSpec::Isotropic(uniform(&mut rng, 0.01, 0.09)))
            .unwrap();
        let net = c.net.to_network().unwrap();
        let clean = net.forward(&c.x).unwrap();
        for m in [1u64, 2, 4] {
            let spec = DesignBSpec::new(net.clone(), m).unwrap();
            let stats = monte_carlo(&DesignB { spec: &spec, profile: &profile }, &c.x, &clean, MC_TRIALS, SEED + 100 + k as u64)
                .unwrap();
            let theory = propagate_b_averaged(&c.net, &profile, m as usize).unwrap();
            let exact = design_b_output_covariance(&c.net, &profile, m as usize).unwrap();
            let e_theory = rel_frobenius(&stats.covariance, &theory);
            let e_exact = rel_frobenius(&stats.covariance, exact.output());
            worst_theory = worst_theory.max(e_theory);
            worst_exact = worst_exact.max(e_exact);
            if c.net.depth() == 1 || m == 1 {
                worst_shallow = worst_shallow.max(e_theory);
            }
            if e_theory > COV_REL_TOL {
                failing.push(format!("net {k} (L={}) m={m}: {e_theory:.3}", c.net.depth()));
            }
        }
    }
    let shown: Vec<&str> = failing.iter().take(4).map(String::as_str).collect();
    let main = Verdict::new(
        "2",
        "Design B sample covariance vs layer recursion with terminal averaging",
        failing.is_empty(),
        format!(
            "60 (net, m) pairs, max relative error {worst_theory:.4} (tol {COV_REL_TOL}); {} pairs over tolerance{}; \
             max error where L = 1 or m = 1: {worst_shallow:.4}",
            failing.len(),
            if shown.is_empty() { String::new() } else { format!(", e.g. {}", shown.join("; ")) }
        ),
    );
    let supplementary = Verdict::new(
        "2*",
        "Design B sample covariance vs exact branch-average recursion (supplementary)",
        worst_exact <= COV_REL_TOL,
        format!("same 60 pairs, max relative Frobenius error {worst_exact:.4} (tol {COV_REL_TOL})"),
    );
    (main, supplementary)
}

fn criterion_3() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..500u64 {
        let mut rng = RngStream::from_path(SEED, &[3, case]);
        let depth = rng.random_range(1..=10);
        let m = rng.random_range(1..=4);
        let cfg = random_symmetric_config(&mut rng, 5, None).with_m(m).unwrap();
        let net = cfg.net(depth).unwrap();
        let profile = cfg.profile(depth).unwrap();
        let plain = propagate(&net, &profile).unwrap();
        let averaged = propagate_b(&net, &profile, m).unwrap();
        worst = worst
            .max(max_abs_diff(&symmetric_closed_form(&cfg, depth).unwrap(), plain.output()))
            .max(max_abs_diff(&symmetric_closed_form_b(&cfg, depth).unwrap(), averaged.output()));
    }
    Verdict::new(
        "3",
        "closed forms vs layer recursions",
        worst <= CLOSED_FORM_ABS_TOL,
        format!("500 configs (d <= 5, L <= 10, m <= 4), max absolute difference {worst:.3e} (tol {CLOSED_FORM_ABS_TOL:e})"),
    )
}

fn criterion_4() -> Verdict {
    let mut worst_agree: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = RngStream::from_path(SEED, &[4, case]);
        let product = uniform(&mut rng, 0.2, 0.95);
        let m = rng.random_range(1..=4);
        let cfg = random_symmetric_config(&mut rng, 5, Some(product)).with_m(m).unwrap();
        for averaged in [false, true] {
            let (series, iterate, vectorized) = if averaged {
                (
                    limit_series_b(&cfg, 1e-13, Contraction::Frobenius).unwrap().sigma,
                    fixed_point_solve_b(&cfg, FixedPointMethod::Iterate, Contraction::Frobenius).unwrap(),
                    fixed_point_solve_b(&cfg, FixedPointMethod::Vectorized, Contraction::Frobenius).unwrap(),
                )
            } else {
                (
                    limit_series(&cfg, 1e-13, Contraction::Frobenius).unwrap().sigma,
                    fixed_point_solve(&cfg, FixedPointMethod::Iterate, Contraction::Frobenius).unwrap(),
                    fixed_point_solve(&cfg, FixedPointMethod::Vectorized, Contraction::Frobenius).unwrap(),
                )
            };
            worst_agree = worst_agree
                .max((&series - &iterate.sigma).norm())
                .max((&series - &vectorized.sigma).norm())
                .max((&iterate.sigma - &vectorized.sigma).norm());
            for x in [&series, &iterate.sigma, &vectorized.sigma] {
                worst_residual = worst_residual.max(fixed_point_residual(&cfg, x, averaged));
            }
        }
    }
    Verdict::new(
        "4",
        "limit series and both fixed-point solvers agree",
        worst_agree <= LIMIT_AGREE_TOL && worst_residual <= LIMIT_AGREE_TOL,
        format!(
            "100 contracting configs, plain and averaged maps: max pairwise distance {worst_agree:.3e}, \
             max residual {worst_residual:.3e} (tol {LIMIT_AGREE_TOL:e})"
        ),
    )
}

fn criterion_5() -> Verdict {
    let net = Network::new(
        3,
        vec![Layer::new(
            DMatrix::from_row_slice(2, 3, &[0.7, -0.4, 0.2, 0.3, 0.9, -0.5]),
            DVector::from_vec(vec![0.1, -0.1]),
            Activation::Identity,
        )],
    )
    .unwrap();
    let x = DVector::from_vec(vec![0.3, -0.6, 0.9]);
    let clean = net.forward(&x).unwrap();
    let weight_noise = CovSpec::Full(DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.03]));
    // The output node of the tree is not replicated, so its activation noise is not averaged.
    let profile_a = NoiseProfile::new(CovSpec::Isotropic(0.02), vec![weight_noise.clone()], vec![CovSpec::Zero]).unwrap();
    let profile_b = NoiseProfile::new(CovSpec::Isotropic(0.02), vec![weight_noise], vec![CovSpec::Isotropic(0.01)])
        .unwrap()
        .with_split(CovSpec::Isotropic(0.02))
        .unwrap();
    let grid = [1u64, 2, 4, 8, 16];
    let xs: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let mut traces_a = Vec::new();
    let mut traces_b = Vec::new();
    for &n in &grid {
        let spec = DesignASpec::new(net.clone(), vec![n, 1]).unwrap();
        traces_a.push(
            monte_carlo(&DesignA { spec: &spec, profile: &profile_a }, &x, &clean, MC_TRIALS, SEED + n)
                .unwrap()
                .trace(),
        );
        let spec = DesignBSpec::new(net.clone(), n).unwrap();
        traces_b.push(
            monte_carlo(&DesignB { spec: &spec, profile: &profile_b }, &x, &clean, MC_TRIALS, SEED + 50 + n)
                .unwrap()
                .trace(),
        );
    }
    let slope_a = log_log_slope(&xs, &traces_a);
    let slope_b = log_log_slope(&xs, &traces_b);
    Verdict::new(
        "5",
        "single-layer variance scales as 1/n (Design A) and 1/m (Design B)",
        (slope_a + 1.0).abs() <= SLOPE_TOL && (slope_b + 1.0).abs() <= SLOPE_TOL,
        format!("log-log slopes over {{1,2,4,8,16}}: A {slope_a:.4}, B {slope_b:.4} (target -1 +/- {SLOPE_TOL})"),
    )
}

fn criterion_6() -> Verdict {
    let title = "empirical failure probability at the sufficient copy budget";
    let net = Network::new(
        3,
        vec![
            Layer::new(
                DMatrix::from_row_slice(4, 3, &[0.5, -0.3, 0.2, 0.1, 0.4, -0.6, -0.2, 0.3, 0.5, 0.6, 0.1, -0.1]),
                DVector::from_vec(vec![0.1, -0.1, 0.0, 0.05]),
                Activation::Tanh,
            ),
            Layer::new(
                DMatrix::from_row_slice(2, 4, &[0.4, -0.5, 0.3, 0.2, -0.3, 0.2, 0.6, -0.4]),
                DVector::from_vec(vec![0.0, 0.1]),
                Activation::Tanh,
            ),
        ],
    )
    .unwrap();
    let sigma_sq = 0.01;
    let (target_deviation, target_failure) = (1.0, 0.1);
    let profile = NoiseProfile::new(
        CovSpec::Zero,
        vec![CovSpec::Isotropic(sigma_sq), CovSpec::Isotropic(sigma_sq)],
        vec![CovSpec::Zero, CovSpec::Zero],
    )
    .unwrap();
    let req = CopyBudgetRequest {
        sigma_sq: common_variance_bound(&profile).unwrap(),
        deltas: vec![0.5, 0.5],
        kappas: vec![0.05, 0.05],
        target_deviation,
        target_failure,
        hoeffding_big_c: DEFAULT_HOEFFDING_C,
        hoeffding_small_c: DEFAULT_HOEFFDING_SMALL_C,
        lipschitz: net.lipschitz_bounds().unwrap(),
    };
    let budget = sufficient_copies(&req, &net.dims()[1..]).unwrap();
    if budget.total > BUDGET_CAP.into() {
        return Verdict::skip(
            "6",
            title,
            format!("budget {:?} has {} total copies, above the cap {BUDGET_CAP}", budget.copies, budget.total),
        );
    }
    let spec = DesignASpec::new(net, budget.copies.clone()).unwrap();
    let inputs: Vec<DVector<f64>> = [[0.5, -0.5, 0.25], [-1.0, 0.3, 0.8], [0.0, 0.0, 0.0]]
        .iter()
        .map(|v| DVector::from_row_slice(v))
        .collect();
    let report = deviation_check(&spec, &profile, &inputs, target_deviation, 1000, SEED, DEFAULT_CONFIDENCE).unwrap();
    let upper = report.failure_probability.high;
    Verdict::new(
        "6",
        title,
        upper <= target_failure,
        format!(
            "copies {:?} (total {}), {} failures in {} trials, Wilson upper bound {upper:.4} (target C_L = {target_failure})",
            budget.copies, budget.total, report.failures, report.trials
        ),
    )
}

fn criterion_7() -> Verdict {
    let grid: Vec<f64> = (1..=12).map(f64::from).collect();
    let rows = scan_m_grid(4, &grid, &grid, 2000, 1e-3, Exec::Parallel).unwrap();
    let mut mismatches = Vec::new();
    for r in &rows {
        let predicted = suggested_m(r.norm_d, r.norm_w, MHeuristic::Empirical, 4).unwrap();
        if predicted != r.min_m as u64 {
            mismatches.push(format!("({}, {}): {} vs {}", r.norm_w, r.norm_d, r.min_m, predicted));
        }
    }
    let fraction = 1.0 - mismatches.len() as f64 / rows.len() as f64;
    let shown: Vec<&str> = mismatches.iter().take(6).map(String::as_str).collect();
    Verdict::new(
        "7",
        "minimal stable m matches ceil((|D|_F |W|_F / d)^2) on the d = 4 grid",
        fraction >= GRID_MATCH_FRACTION,
        format!(
            "{} of {} cells match ({:.1}%, need {:.0}%), L = 2000{}",
            rows.len() - mismatches.len(),
            rows.len(),
            100.0 * fraction,
            100.0 * GRID_MATCH_FRACTION,
            if shown.is_empty() { String::new() } else { format!("; mismatches (W, D): scan vs formula {}", shown.join(", ")) }
        ),
    )
}

fn eight_layer_net(seed: u64) -> Network {
    let mut rng = RngStream::from_path(SEED, &[8, seed]);
    let acts = [Activation::Tanh, Activation::Relu, Activation::Tanh, Activation::Identity];
    let layers = (0..8)
        .map(|l| {
            let act = if l == 7 { Activation::Softmax } else { acts[l % 4].clone() };
            Layer::new(random_weights(&mut rng, 5, 5), random_vector(&mut rng, 5, -0.3, 0.3), act)
        })
        .collect();
    Network::new(5, layers).unwrap()
}

fn fixture_net() -> Network {
    Network::load(fixtures_dir().join("mlp_8_16_16_4.json")).unwrap()
}

fn fixture_inputs(limit: usize) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut images = idx::load_images(fixtures_dir().join("synth-test-images.idx")).unwrap().images;
    let mut labels: Vec<usize> = idx::load_labels(fixtures_dir().join("synth-test-labels.idx"))
        .unwrap()
        .into_iter()
        .map(usize::from)
        .collect();
    images.truncate(limit);
    labels.truncate(limit);
    (images, labels)
}

/// Explicit slots for the three-layer fixture.
const FIXTURE_SLOTS: [usize; 4] = [1, 2, 1, 2];

fn criterion_8() -> Verdict {
    let table = [[1, 0, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1], [2, 1, 1, 1], [2, 2, 1, 1]];
    let tuples_ok = (1..=6).all(|n| insertion_tuple(n) == table[n - 1]);
    let mut bit_ok = true;
    let mut checked = 0;
    let mut rng = RngStream::from_path(SEED, &[8]);
    for s in 0..5 {
        let net = eight_layer_net(s);
        for n in 0..=12 {
            let deeper = insert_identity_layers(&net, &InsertionPlan::new(&net, n, None).unwrap()).unwrap();
            for _ in 0..4 {
                let x = random_vector(&mut rng, 5, -2.0, 2.0);
                bit_ok &= bitwise_eq(&net.forward(&x).unwrap(), &deeper.forward(&x).unwrap());
                checked += 1;
            }
        }
    }
    let fixture = fixture_net();
    let (inputs, _) = fixture_inputs(50);
    for n in 0..=8 {
        let deeper =
            insert_identity_layers(&fixture, &InsertionPlan::new(&fixture, n, Some(FIXTURE_SLOTS)).unwrap()).unwrap();
        for x in &inputs {
            bit_ok &= bitwise_eq(&fixture.forward(x).unwrap(), &deeper.forward(x).unwrap());
            checked += 1;
        }
    }
    Verdict::new(
        "8",
        "insertion tuples match the table and identity layers are exact",
        tuples_ok && bit_ok,
        format!("tuples n = 1..6 {}; {checked} forward comparisons {}", ok(tuples_ok), if bit_ok { "bit-identical" } else { "DIFFER" }),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "match"
    } else {
        "MISMATCH"
    }
}

/// No significant step up between neighbours and a significant drop from first to last.
fn decreasing(rows: &[(f64, f64)]) -> bool {
    rows.windows(2).all(|w| w[1].0 <= w[0].1) && rows.last().unwrap().1 < rows[0].0
}

fn criterion_9() -> Verdict {
    let (inputs, labels) = fixture_inputs(200);
    let net = fixture_net();
    let setup = Setup {
        profile: NoiseProfile::isotropic(net.depth(), 0.01, 0.01, 0.01).unwrap(),
        net,
        inputs,
        labels: Some(labels),
        design: Design::None,
        trials: 300,
        seed: SEED,
        confidence: DEFAULT_CONFIDENCE,
        warnings: Vec::new(),
    };
    let grid = [1u64, 2, 4, 8];
    let ci = |rows: &[MseRow]| rows.iter().map(|r| (r.ci_low, r.ci_high)).collect::<Vec<_>>();
    let fmt_rows = |rows: &[MseRow]| rows.iter().map(|r| format!("{:.5}", r.mse)).collect::<Vec<_>>().join(" ");
    let rows_a = run_mse_experiment(&setup, DesignKind::A, &grid, Exec::Parallel).unwrap();
    let rows_b = run_mse_experiment(&setup, DesignKind::B, &grid, Exec::Parallel).unwrap();
    let a_ok = decreasing(&ci(&rows_a));
    let b_ok = decreasing(&ci(&rows_b));
    let depth: Vec<DepthRow> =
        run_depth_sweep(&setup, &[0, 2, 4, 6, 8], &[0.01], Some(FIXTURE_SLOTS), DesignKind::None, 1, Exec::Parallel)
            .unwrap();
    // Increasing in depth: mirror the intervals.
    let mirrored: Vec<(f64, f64)> = depth.iter().map(|r| (-r.ci_high, -r.ci_low)).collect();
    let depth_ok = decreasing(&mirrored);
    Verdict::new(
        "9",
        "MSE falls with copies and rises with inserted noisy layers (fixture MLP)",
        a_ok && b_ok && depth_ok,
        format!(
            "200 inputs x 300 trials at 95%: A copies 1,2,4,8 -> {} ({}); B m 1,2,4,8 -> {} ({}); \
             inserted 0,2,4,6,8 -> {} ({})",
            fmt_rows(&rows_a),
            ok(a_ok),
            fmt_rows(&rows_b),
            ok(b_ok),
            depth.iter().map(|r| format!("{:.5}", r.mse)).collect::<Vec<_>>().join(" "),
            ok(depth_ok)
        ),
    )
}

fn criterion_10() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |what: &str, pass: bool| {
        if !pass {
            failures.push(what.to_string());
        }
    };
    let mut nets = vec![fixture_net()];
    nets.extend((0..3).map(eight_layer_net));
    let mut rng = RngStream::from_path(SEED, &[10]);
    for (k, net) in nets.iter().enumerate() {
        let depth = net.depth();
        let zero = NoiseProfile::zero(depth);
        let noisy = NoiseProfile::isotropic(depth, 0.01, 0.02, 0.03).unwrap();
        let ones = DesignASpec::uniform(net.clone(), 1).unwrap();
        let single = DesignBSpec::new(net.clone(), 1).unwrap();
        for t in 0..10u64 {
            let x = random_vector(&mut rng, net.input_dim(), 0.0, 1.0);
            let stream = RngStream::from_path(SEED, &[10, k as u64, t]);
            let clean = net.forward(&x).unwrap();
            let plain = noisy_forward(net, &noisy, &x, &stream).unwrap();
            check("zero-noise forward", bitwise_eq(&noisy_forward(net, &zero, &x, &stream).unwrap(), &clean));
            check("all-ones tree, zero noise", bitwise_eq(&eval_design_a(&ones, &x, &zero, &stream).unwrap(), &clean));
            check("all-ones tree, noisy", bitwise_eq(&eval_design_a(&ones, &x, &noisy, &stream).unwrap(), &plain));
            check("m = 1, zero noise", bitwise_eq(&eval_design_b(&single, &x, &zero, &stream).unwrap(), &clean));
            check("m = 1, noisy", bitwise_eq(&eval_design_b(&single, &x, &noisy, &stream).unwrap(), &plain));
        }
    }
    for case in 0..50u64 {
        let mut rng = RngStream::from_path(SEED, &[10, 1, case]);
        let cfg = random_symmetric_config(&mut rng, 5, None);
        let sigma = random_psd(&mut rng, cfg.dim(), 1.0);
        let a = step_map(cfg.d(), cfg.w(), &sigma, cfg.sigma_w(), cfg.sigma_a()).unwrap();
        let b = step_map_b(cfg.d(), cfg.w(), &sigma, cfg.sigma_w(), cfg.sigma_a(), None, 1).unwrap();
        check("step map with m = 1", a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let net = fixture_net();
    let (inputs, _) = fixture_inputs(20);
    let profile = NoiseProfile::isotropic(net.depth(), 0.01, 0.01, 0.01).unwrap();
    let base = per_trial_mse(&Design::None, &net, &profile, &inputs, 20, SEED, Exec::Parallel).unwrap();
    for kind in [DesignKind::A, DesignKind::B] {
        let design = Design::with_copies(kind, &net, 1).unwrap();
        let values = per_trial_mse(&design, &net, &profile, &inputs, 20, SEED, Exec::Parallel).unwrap();
        check("single-copy MSE trials", values.iter().zip(&base).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    failures.dedup();
    Verdict::new(
        "10",
        "zero-noise and single-copy degeneracies are bit-exact",
        failures.is_empty(),
        if failures.is_empty() {
            "forward, tree, combine/split, step map and single-copy experiments all bit-identical".into()
        } else {
            format!("differences in: {}", failures.join(", "))
        },
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    // libtest-style flags such as --nocapture are accepted and ignored.
    let cases = linear_cases();
    let mut verdicts: Vec<(Verdict, f64)> = Vec::new();
    verdicts.push(timed(|| criterion_1(&cases)));
    let ((c2, c2_exact), secs) = timed(|| criterion_2(&cases));
    verdicts.push((c2, secs));
    verdicts.push((c2_exact, 0.0));
    verdicts.push(timed(criterion_3));
    verdicts.push(timed(criterion_4));
    verdicts.push(timed(criterion_5));
    verdicts.push(timed(criterion_6));
    verdicts.push(timed(criterion_7));
    verdicts.push(timed(criterion_8));
    verdicts.push(timed(criterion_9));
    verdicts.push(timed(criterion_10));
    println!();
    for (v, secs) in &verdicts {
        println!("{v} | {secs:.1}s");
    }
    // Supplementary lines are informational.
    let failed: Vec<&str> = verdicts
        .iter()
        .filter(|(v, _)| v.outcome == Outcome::Fail && !v.id.ends_with('*'))
        .map(|(v, _)| v.id.as_str())
        .collect();
    println!();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: criteria failing: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
