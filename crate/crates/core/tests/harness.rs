use eigenmatrix::eigenmatrix::BuildConfig;
use eigenmatrix::harness::*;
use eigenmatrix::kernel::{forward_map, Cube, Field, Kernel, Observations, SpikeSignal};
use eigenmatrix::points::distance;
use eigenmatrix::recovery::RecoveryConfig;
use eigenmatrix::{Execution, Points, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cube(lo: f64, hi: f64) -> Cube {
    Cube::new(lo, hi).unwrap()
}

fn fourier_exact_spec(seed: u64) -> ProblemSpec {
    ProblemSpec {
        kernel: Kernel::Fourier,
        dim: 2,
        sample_region: cube(-2.0, 2.0),
        exclusion: None,
        n_samples: 256,
        layout: Layout::Easy,
        n_x: 4,
        sigma: 0.0,
        seed,
    }
}

fn power_law_spec(seed: u64, sigma: f64) -> ProblemSpec {
    ProblemSpec {
        kernel: Kernel::PowerLaw { exponent: 1.0 },
        dim: 2,
        sample_region: cube(-2.0, 2.0),
        exclusion: Some(Cube::UNIT),
        n_samples: 1024,
        layout: Layout::Easy,
        n_x: 4,
        sigma,
        seed,
    }
}

#[test]
fn samples_fill_region_without_exclusion() {
    let s = gen_samples(cube(-8.0, 8.0), 2, 500, None, 3).unwrap();
    assert_eq!(s.len(), 500);
    assert!(s.points.iter().all(|p| p.iter().all(|c| (-8.0..=8.0).contains(c))));
}

#[test]
fn samples_avoid_exclusion() {
    let s = gen_samples(cube(-2.0, 2.0), 2, 2000, Some(Cube::UNIT), 3).unwrap();
    assert!(s.points.iter().all(|p| !Cube::UNIT.contains(p)));
    assert!(s.points.iter().all(|p| p.iter().all(|c| (-2.0..=2.0).contains(c))));
}

#[test]
fn samples_are_deterministic() {
    let a = gen_samples(cube(-2.0, 2.0), 3, 100, Some(Cube::UNIT), 11).unwrap();
    let b = gen_samples(cube(-2.0, 2.0), 3, 100, Some(Cube::UNIT), 11).unwrap();
    let c = gen_samples(cube(-2.0, 2.0), 3, 100, Some(Cube::UNIT), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn low_acceptance_rate_fails() {
    // complement is 0.2% of the square; 1000 points need ~5e5 draws
    let r = gen_samples(cube(-1.0, 1.0), 2, 1000, Some(cube(-0.999, 0.999)), 0);
    assert!(r.is_err());
    assert!(gen_samples(cube(-1.0, 1.0), 2, 10, Some(cube(-2.0, 2.0)), 0).is_err());
}

#[test]
fn easy_spikes_are_separated() {
    for seed in 0..20 {
        let s = gen_spikes(&Layout::Easy, 4, 2, seed).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.weights.iter().all(|w| *w == C64::new(1.0, 0.0)));
        for i in 0..4 {
            assert!(s.spikes.get(i).iter().all(|c| c.abs() <= 0.9));
            for j in 0..i {
                assert!(distance(s.spikes.get(i), s.spikes.get(j)) >= 0.5);
            }
        }
    }
    assert!(gen_spikes(&Layout::Easy, 9, 2, 0).is_err());
}

#[test]
fn hard_spikes_form_two_close_pairs() {
    for (seed, dim) in (0..10).zip([2, 3].into_iter().cycle()) {
        let s = gen_spikes(&Layout::Hard, 4, dim, seed).unwrap();
        let mut d: Vec<f64> = (0..4)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| distance(s.spikes.get(i), s.spikes.get(j)))
            .collect();
        d.sort_by(f64::total_cmp);
        assert!((d[0] - 0.1).abs() < 1e-12 && (d[1] - 0.1).abs() < 1e-12, "{d:?}");
        assert!(d[2] > 0.5);
        assert!(s.spikes.iter().all(|p| Cube::UNIT.contains(p)));
    }
    assert!(gen_spikes(&Layout::Hard, 3, 2, 0).is_err());
}

#[test]
fn explicit_spikes_pass_through() {
    let sig = SpikeSignal::with_unit_weights(Points::from_rows(2, &[[0.0, 0.0]]).unwrap()).unwrap();
    let out = gen_spikes(&Layout::Explicit(sig.clone()), 1, 2, 5).unwrap();
    assert_eq!(out, sig);
    assert!(gen_spikes(&Layout::Explicit(sig), 2, 2, 5).is_err());
}

fn obs(values: Vec<C64>, field: Field) -> Observations {
    Observations {
        values,
        sigma: 0.0,
        field,
    }
}

#[test]
fn zero_sigma_and_zero_values_are_untouched() {
    let u = obs(
        vec![C64::new(1.5, -2.0), C64::new(0.0, 0.0), C64::new(-3.0, 0.25)],
        Field::Complex,
    );
    assert_eq!(add_noise(&u, 0.0, 9).unwrap().values, u.values);
    let noisy = add_noise(&u, 0.5, 9).unwrap();
    assert_eq!(noisy.values[1], C64::new(0.0, 0.0));
    assert_ne!(noisy.values[0], u.values[0]);
    assert!(add_noise(&u, -1.0, 9).is_err());
}

#[test]
fn real_noise_statistics() {
    let n = 100_000;
    let sigma = 0.1;
    let u = obs(vec![C64::new(2.0, 0.0); n], Field::Real);
    let z: Vec<f64> = add_noise(&u, sigma, 1)
        .unwrap()
        .values
        .iter()
        .map(|v| {
            assert_eq!(v.im, 0.0);
            v.re / 2.0 - 1.0
        })
        .collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 3e-2 * sigma, "mean {mean}");
    assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05, "var {var}");
}

#[test]
fn complex_noise_statistics() {
    let n = 100_000;
    let sigma = 0.1;
    let w = C64::new(0.6, -0.8);
    let u = obs(vec![w; n], Field::Complex);
    let z: Vec<C64> = add_noise(&u, sigma, 2)
        .unwrap()
        .values
        .iter()
        .map(|v| v / w - 1.0)
        .collect();
    let mean = z.iter().sum::<C64>() / n as f64;
    let var = z.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
    let var_re = z.iter().map(|x| (x.re - mean.re).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.norm() <= 3e-2 * sigma, "mean {mean}");
    assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05, "var {var}");
    assert!((var_re / (0.5 * sigma * sigma) - 1.0).abs() <= 0.05, "var_re {var_re}");
}

fn line(xs: &[f64]) -> SpikeSignal {
    let pts = Points::new(1, xs.to_vec()).unwrap();
    SpikeSignal::with_unit_weights(pts).unwrap()
}

#[test]
fn identical_sets_match_with_zero_error() {
    let t = line(&[-0.5, 0.1, 0.7]);
    let m = match_spikes(&t, &t);
    assert_eq!(m.assignment, vec![Some(0), Some(1), Some(2)]);
    assert!(m.position_errors.iter().all(|e| *e == 0.0));
    assert!(m.weight_errors.iter().all(|e| *e == 0.0));
}

#[test]
fn matching_crosses_when_cheaper() {
    let m = match_spikes(&line(&[0.0, 1.0]), &line(&[1.0, 0.0]));
    assert_eq!(m.assignment, vec![Some(1), Some(0)]);
    assert_eq!(m.position_errors.iter().sum::<f64>(), 0.0);
}

#[test]
fn perturbed_estimates_stay_within_box_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for dim in 1..=3 {
        let truth: Vec<f64> = (0..4 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let est: Vec<f64> = truth.iter().map(|c| c + rng.random_range(-1e-3..1e-3)).collect();
        let t = SpikeSignal::with_unit_weights(Points::new(dim, truth).unwrap()).unwrap();
        let mut e = t.clone();
        e.spikes = Points::new(dim, est).unwrap();
        let m = match_spikes(&t, &e);
        assert!(m.max_error() <= (dim as f64).sqrt() * 1e-3);
    }
}

#[test]
fn short_estimates_get_infinite_errors() {
    let m = match_spikes(&line(&[0.0, 0.5, -0.5]), &line(&[0.45]));
    assert_eq!(m.position_errors.len(), 3);
    assert_eq!(m.assignment.iter().filter(|a| a.is_some()).count(), 1);
    assert_eq!(m.assignment[1], Some(0));
    assert!((m.position_errors[1] - 0.05).abs() < 1e-15);
    assert!(m.max_error().is_infinite());
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn hungarian_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=6 {
        for _ in 0..20 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let a = hungarian(&cost);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((total - best).abs() < 1e-12, "n={n}: {total} vs {best}");
        }
    }
}

fn exact_build() -> BuildConfig {
    BuildConfig::for_dim(2, 16)
}

#[test]
fn exact_fourier_trial_is_accurate() {
    for seed in 0..3 {
        let t = run_trial(&fourier_exact_spec(seed), &exact_build(), &RecoveryConfig::new(4));
        assert!(t.succeeded(), "{:?}", t.failure);
        assert_eq!(t.matching.as_ref().unwrap().position_errors.len(), 4);
        assert!(t.max_error <= 1e-6, "seed {seed}: {}", t.max_error);
        let w = t
            .matching
            .as_ref()
            .unwrap()
            .weight_errors
            .iter()
            .copied()
            .fold(0.0, f64::max);
        assert!(w <= 1e-6, "seed {seed}: weight error {w}");
    }
}

#[test]
fn trial_serialization_is_byte_identical() {
    let spec = ProblemSpec {
        sigma: 1e-3,
        ..fourier_exact_spec(5)
    };
    let a = serde_json::to_string(&run_trial(&spec, &exact_build(), &RecoveryConfig::new(4))).unwrap();
    let b = serde_json::to_string(&run_trial(&spec, &exact_build(), &RecoveryConfig::new(4))).unwrap();
    assert_eq!(a, b);
}

#[test]
fn log_potential_trial_fails_with_build_warning() {
    let spec = ProblemSpec {
        kernel: Kernel::LogPotential,
        ..power_law_spec(0, 0.0)
    };
    let t = run_trial(&spec, &BuildConfig::for_dim(2, 16), &RecoveryConfig::new(4));
    assert!(!t.succeeded());
    assert!(t.max_error.is_infinite());
    assert!(!t.build_warnings.is_empty());
    let f = t.failure.unwrap();
    assert_eq!(f.stage.as_deref(), Some("validate"));
    assert!(f.message.contains("log_potential"), "{}", f.message);
}

#[test]
fn invalid_spec_becomes_failed_record() {
    let spec = ProblemSpec {
        exclusion: None,
        ..power_law_spec(0, 0.0)
    };
    let t = run_trial(&spec, &BuildConfig::for_dim(2, 16), &RecoveryConfig::new(4));
    assert_eq!(t.failure.unwrap().stage.as_deref(), Some("generate"));
}

#[test]
fn single_cell_sweep_equals_trial() {
    let spec = ProblemSpec {
        sigma: 1e-4,
        ..fourier_exact_spec(2)
    };
    let rc = RecoveryConfig::new(4);
    let report = run_sweep(&spec, &[1e-4], &[2], &exact_build(), &rc, Execution::Parallel).unwrap();
    assert_eq!(report.cells.len(), 1);
    let trial = run_trial(&spec, &exact_build(), &rc);
    assert_eq!(
        serde_json::to_string(&report.cells[0].trial).unwrap(),
        serde_json::to_string(&trial).unwrap()
    );
    assert_eq!(report.cell(0, 0).seed, 2);
}

#[test]
fn sweep_report_ignores_execution_order() {
    let spec = fourier_exact_spec(0);
    let sigmas = [1e-3, 1e-5];
    let seeds = [4, 9, 1];
    let b = exact_build();
    let rc = RecoveryConfig::new(4);
    let base = run_sweep(&spec, &sigmas, &seeds, &b, &rc, Execution::Sequential).unwrap();
    let shuffled = run_sweep_in_order(&spec, &sigmas, &seeds, &b, &rc, Execution::Parallel, &[2, 0, 1]).unwrap();
    let a = serde_json::to_string(&base).unwrap();
    assert_eq!(a, serde_json::to_string(&shuffled).unwrap());
    // σ-major, seed-minor, each cell naming its seed
    let order: Vec<(f64, u64)> = base.cells.iter().map(|c| (c.sigma, c.seed)).collect();
    assert_eq!(
        order,
        vec![(1e-3, 4), (1e-3, 9), (1e-3, 1), (1e-5, 4), (1e-5, 9), (1e-5, 1)]
    );
    assert!(base
        .cells
        .iter()
        .all(|c| c.trial.spec.seed == c.seed && c.trial.spec.sigma == c.sigma));
}

#[test]
fn sweep_rejects_empty_lists() {
    let spec = fourier_exact_spec(0);
    let b = exact_build();
    let rc = RecoveryConfig::new(4);
    assert!(run_sweep(&spec, &[], &[1], &b, &rc, Execution::Sequential).is_err());
    assert!(run_sweep(&spec, &[0.0], &[], &b, &rc, Execution::Sequential).is_err());
}

#[test]
fn sweep_error_decreases_with_noise() {
    let report = run_sweep(
        &power_law_spec(0, 0.0),
        &[1e-2, 1e-3],
        &[0, 1, 2, 3, 4],
        &BuildConfig::for_dim(2, 32),
        &RecoveryConfig::new(4),
        Execution::Parallel,
    )
    .unwrap();
    let (hi, lo) = (report.summary[0].median_max_error, report.summary[1].median_max_error);
    assert!(lo <= hi, "median at 1e-3 ({lo}) above median at 1e-2 ({hi})");
}

#[test]
fn noise_is_shared_across_sigma() {
    // spikes, samples and the Gaussian draws depend on the seed only
    let spec = fourier_exact_spec(6);
    let truth = gen_spikes(&spec.layout, 4, 2, spec.seed).unwrap();
    let s = gen_samples(spec.sample_region, 2, 64, None, spec.seed).unwrap();
    let u = forward_map(&spec.kernel, &s, &truth).unwrap();
    let a = add_noise(&u, 1e-2, spec.seed).unwrap();
    let b = add_noise(&u, 1e-4, spec.seed).unwrap();
    for ((x, y), v) in a.values.iter().zip(&b.values).zip(&u.values) {
        let za = (x / v - 1.0) / 1e-2;
        let zb = (y / v - 1.0) / 1e-4;
        assert!((za - zb).norm() < 1e-6);
    }
}

#[test]
fn median_handles_failures() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    assert_eq!(median(&[1.0, f64::INFINITY]), f64::INFINITY);
    assert!(median(&[]).is_nan());
}
