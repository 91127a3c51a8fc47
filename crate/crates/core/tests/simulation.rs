mod common;

use common::*;
use nrdf_core::bsms::bsms_kernel;
use nrdf_core::probability::*;
use nrdf_core::simulation::*;
use nrdf_core::solver::pair_distortion;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

fn bsms_config(n: usize, trials: u64, seed: u64, d: f64) -> SimulationConfig {
    SimulationConfig::new(
        MarkovSource::bsms(0.25).unwrap(),
        bsms_kernel(0.25, 0.1).unwrap().into_kernel(),
        DistortionSpec::hamming(2),
        n,
        trials,
        seed,
        d,
    )
    .unwrap()
}

#[test]
fn two_step_histogram_matches_the_exact_joint() {
    let cfg = bsms_config(1, 1_000_000, 11, 0.1);
    let sys = CascadeSystem::memory_one(cfg.source.clone(), &cfg.channel, 1, Prehistory::Hidden).unwrap();
    let j = build_joint(&sys).unwrap();
    let keep = j.axes_named(&["X0", "X1", "Y0", "Y1"]).unwrap();
    let exact = j.marginalize(&keep).unwrap();

    let mut counts = [0u64; 16];
    for t in 0..cfg.trials {
        let tr = run_trial(&cfg, t).unwrap();
        counts[tr.xs[0] * 8 + tr.xs[1] * 4 + tr.ys[0] * 2 + tr.ys[1]] += 1;
    }
    let total = cfg.trials as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(exact.table()) {
        if p > 0.0 {
            let e = p * total;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(c, 0);
        }
    }
    let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn coin_flip_reproduction_has_mean_one_half() {
    let half = Distribution::uniform(2).unwrap();
    let cfg = SimulationConfig::new(
        MarkovSource::iid(half.clone()).unwrap(),
        StochasticKernel::constant(vec![Alphabet::new(2).unwrap(), Alphabet::new(2).unwrap()], &half).unwrap(),
        DistortionSpec::hamming(2),
        0,
        10_000,
        3,
        0.5,
    )
    .unwrap();
    let mean = simulate(&cfg, &[]).unwrap().mean_distortion();
    assert!((mean - 0.5).abs() < 3.0 * 0.5 / 100.0, "{mean}");
}

#[test]
fn single_long_trial_settles_at_target() {
    let tr = run_trial(&bsms_config(100_000, 1, 7, 0.1), 0).unwrap();
    assert_eq!(tr.running_distortion.len(), 100_001);
    assert!((tr.final_distortion - 0.1).abs() < 0.01, "{}", tr.final_distortion);
    assert_eq!(*tr.running_distortion.last().unwrap(), tr.final_distortion);
    assert!(tr.running_distortion.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn averaged_trajectory_ends_at_target_without_trend() {
    let mut cfg = bsms_config(10_000, 100, 2024, 0.1);
    cfg.record_trajectory = true;
    let avg = mean_distortion_curve(&cfg).unwrap();
    assert!((avg.last().unwrap() - 0.1).abs() < 0.005);

    // per-step means from the running averages, in 20 blocks after burn-in
    let step: Vec<f64> =
        (0..avg.len()).map(|i| if i == 0 { avg[0] } else { (i + 1) as f64 * avg[i] - i as f64 * avg[i - 1] }).collect();
    let tail = &step[100..];
    let blocks: Vec<f64> =
        tail.chunks(tail.len() / 20).take(20).map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
    let k = blocks.len() as f64;
    let tbar = (k - 1.0) / 2.0;
    let ybar = blocks.iter().sum::<f64>() / k;
    let sxx: f64 = (0..blocks.len()).map(|i| (i as f64 - tbar).powi(2)).sum();
    let slope = blocks.iter().enumerate().map(|(i, y)| (i as f64 - tbar) * (y - ybar)).sum::<f64>() / sxx;
    let sse: f64 = blocks.iter().enumerate().map(|(i, y)| (y - ybar - slope * (i as f64 - tbar)).powi(2)).sum();
    let se = (sse / (k - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, k - 2.0).unwrap().inverse_cdf(0.975);
    assert!((slope / se).abs() < t, "slope {slope} se {se}");
}

#[test]
fn single_trial_curve_is_that_trajectory() {
    let mut cfg = bsms_config(500, 1, 9, 0.1);
    cfg.record_trajectory = true;
    let curve = mean_distortion_curve(&cfg).unwrap();
    assert_eq!(curve, run_trial(&cfg, 0).unwrap().running_distortion);
    cfg.record_trajectory = false;
    assert!(mean_distortion_curve(&cfg).is_err());
}

#[test]
fn long_run_matches_stationary_distortion() {
    let mut r = rng(99);
    let src = random_source(&mut r, 3);
    let channel = random_kernel(&mut r, &[3, 3], 3);
    let rho = DistortionSpec::hamming(3);
    let pi = stationary_distribution(&pair_chain(&src, &channel).unwrap()).unwrap();
    let exact = pair_distortion(&pi, &rho);
    let cfg = SimulationConfig::new(src, channel, rho, 999, 400, 5, 0.5).unwrap();
    let s = simulate(&cfg, &[]).unwrap();
    let n = s.trials as f64;
    let mean = s.mean_distortion();
    let var = (s.distortion_sq_sum / n - mean * mean) * n / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn lossless_channel_never_errs() {
    let k = bsms_kernel(0.25, 0.0).unwrap();
    assert!(k.is_lossless());
    for seed in 0..5 {
        let cfg = SimulationConfig::new(
            MarkovSource::bsms(0.25).unwrap(),
            k.kernel().clone(),
            DistortionSpec::hamming(2),
            1000,
            20,
            seed,
            0.0,
        )
        .unwrap();
        let s = simulate(&cfg, &[0.0]).unwrap();
        assert_eq!(s.distortion_sum, 0.0);
        assert_eq!(s.excess_counts, vec![0]);
    }
}

#[test]
fn threshold_extremes() {
    let cfg = bsms_config(1000, 500, 1, 0.0);
    let est = excess_curve(&cfg, &[0.0, 1.0]).unwrap();
    assert_eq!(est[0].empirical_prob, 1.0);
    assert_eq!(est[1].empirical_prob, 0.0);
    for e in &est {
        assert!(e.wilson_interval.0 <= e.empirical_prob && e.empirical_prob <= e.wilson_interval.1);
    }
}

#[test]
fn excess_probability_is_a_survival_function() {
    let cfg = bsms_config(200, 2000, 4, 0.1);
    let grid: Vec<f64> = (0..=30).map(|k| 0.05 + k as f64 * 0.003).collect();
    let est = excess_curve(&cfg, &grid).unwrap();
    assert!(est.windows(2).all(|w| w[1].empirical_prob <= w[0].empirical_prob));
    assert!(est.iter().all(|e| e.trials == 2000));
    let single = estimate_excess(&bsms_config(200, 2000, 4, grid[10])).unwrap();
    assert_eq!(single, est[10]);
}

#[test]
fn runs_are_reproducible_and_chunking_is_invisible() {
    let mut cfg = bsms_config(300, 3000, 77, 0.12);
    cfg.record_trajectory = true;
    assert_eq!(run_trial(&cfg, 17).unwrap(), run_trial(&cfg, 17).unwrap());
    assert_ne!(run_trial(&cfg, 17).unwrap().xs, run_trial(&cfg, 18).unwrap().xs);

    let whole = simulate(&cfg, &[0.1, 0.12]).unwrap();
    let ranges = chunks(cfg.trials);
    assert_eq!(ranges.len(), 3);
    let handles: Vec<_> = ranges
        .iter()
        .cloned()
        .map(|r| {
            let c = cfg.clone();
            std::thread::spawn(move || run_chunk(&c, &[0.1, 0.12], r).unwrap())
        })
        .collect();
    let parts: Vec<TrialSummary> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let merged = parts.iter().fold(TrialSummary::empty(2, cfg.n + 1), |a, p| a.merge(p));
    assert_eq!(merged, whole);
}

#[test]
fn fixed_initial_state() {
    let mut cfg = bsms_config(10, 50, 1, 0.1);
    cfg.initial = InitialCondition::Fixed(1);
    assert!(simulate(&cfg, &[]).is_ok());
    cfg.initial = InitialCondition::Fixed(2);
    assert!(cfg.validate().is_err());
}

#[test]
fn configuration_errors() {
    let src = MarkovSource::bsms(0.25).unwrap();
    let k = bsms_kernel(0.25, 0.1).unwrap().into_kernel();
    let rho = DistortionSpec::hamming(2);
    assert!(matches!(
        SimulationConfig::new(src.clone(), k.clone(), rho.clone(), 10, 0, 1, 0.1),
        Err(nrdf_core::Error::Argument(_))
    ));
    assert!(SimulationConfig::new(src.clone(), k.clone(), rho.clone(), 10, 1, 1, -0.1).is_err());
    let wrong = StochasticKernel::identity(2).unwrap();
    assert!(matches!(SimulationConfig::new(src, wrong, rho, 10, 1, 1, 0.1), Err(nrdf_core::Error::Composition(_))));
}

#[test]
fn wilson_interval_properties() {
    let (lo, hi) = wilson_interval(0, 100).unwrap();
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0 && hi < 0.05);
    let (lo, hi) = wilson_interval(50, 100).unwrap();
    assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    assert!(wilson_interval(1, 0).is_err());
    assert!(wilson_interval(5, 4).is_err());
}
