use wlexit::exitlab::{run_grid, ExperimentConfig, ModelSpec};
use wlexit::landscape::{theta_star_quadrature, Landscape, QuadratureOptions, Walker2d, START};
use wlexit::rng::replica_rng;
use wlexit::scalefit::ols;
use wlexit::stats::{mean, sample_sd};
use wlexit::{LogWeightVector, StepSchedule, UpdateRule};

/// Stratum occupancy fractions of a frozen-weight run, in `batches` batches.
fn occupancy_batches(walker: &mut Walker2d, steps: u64, batches: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = walker.log_weights().len();
    let mut rng = replica_rng(seed, 0, 0);
    let per = steps / batches as u64;
    for _ in 0..per {
        walker.step(&mut rng).unwrap();
    }
    (0..batches)
        .map(|_| {
            let mut counts = vec![0u64; d];
            for _ in 0..per {
                walker.step(&mut rng).unwrap();
                counts[walker.stratum()] += 1;
            }
            counts.iter().map(|&c| c as f64 / per as f64).collect()
        })
        .collect()
}

/// Largest batch-means z-score of the occupancy against `expected`.
fn worst_z(batches: &[Vec<f64>], expected: &[f64]) -> f64 {
    let n = batches.len() as f64;
    (0..expected.len())
        .map(|l| {
            let x: Vec<f64> = batches.iter().map(|b| b[l]).collect();
            (mean(&x) - expected[l]).abs() / (sample_sd(&x) / n.sqrt())
        })
        .fold(0.0, f64::max)
}

#[test]
fn reference_dynamics_samples_the_stratum_masses() {
    let land = Landscape::with_defaults(1.0).unwrap();
    let theta = theta_star_quadrature(&land, &QuadratureOptions::default()).unwrap();
    let mut w = Walker2d::new(land, StepSchedule::frozen(), UpdateRule::Nonlinear, START).unwrap();
    let b = occupancy_batches(&mut w, 20_000_000, 50, 1);
    let z = worst_z(&b, theta.weights.as_slice());
    // 22 strata: the largest of 22 |z| stays under 3.5 with high probability.
    assert!(z <= 3.5, "max z = {z}");
}

#[test]
fn reference_weights_flatten_occupancy() {
    let land = Landscape::with_defaults(10.0).unwrap();
    let theta = theta_star_quadrature(&land, &QuadratureOptions::default()).unwrap();
    let mut w = Walker2d::new(land, StepSchedule::frozen(), UpdateRule::Nonlinear, START).unwrap();
    w.set_log_weights(LogWeightVector::new(theta.log_weights.clone()).unwrap())
        .unwrap();
    let b = occupancy_batches(&mut w, 20_000_000, 50, 2);
    let flat = vec![1.0 / land.strata as f64; land.strata];
    let z = worst_z(&b, &flat);
    assert!(z <= 3.5, "max z = {z}");
    for l in 0..land.strata {
        let x: Vec<f64> = b.iter().map(|r| r[l]).collect();
        assert!((mean(&x) * land.strata as f64 - 1.0).abs() < 0.05);
    }
}

#[test]
fn barrier_ratio_decays_exponentially_in_beta() {
    let betas = [5.0, 10.0, 15.0, 20.0];
    let logs: Vec<f64> = betas
        .iter()
        .map(|&b| {
            let land = Landscape::with_defaults(b).unwrap();
            let t = theta_star_quadrature(&land, &QuadratureOptions::default()).unwrap();
            let centre = t.log_weights[land.strata / 2];
            let well = t.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            centre - well
        })
        .collect();
    let fit = ols(&betas, &logs).unwrap();
    assert!(fit.slope < 0.0);
    assert!(fit.r_squared > 0.99, "{fit:?}");
}

fn exit_config(betas: Vec<f64>, s: StepSchedule, m: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(ModelSpec::landscape_defaults(), betas, s, m, seed)
}

#[test]
fn colder_is_slower_for_the_reference_dynamics() {
    let run = run_grid(&exit_config(vec![4.0, 7.0], StepSchedule::frozen(), 10, 3)).unwrap();
    let s = run.series[0].summaries();
    assert_eq!(s[0].capped_count + s[1].capped_count, 0);
    assert!(s[1].mean > s[0].mean, "{} vs {}", s[1].mean, s[0].mean);
}

#[test]
fn adaptation_escapes_much_faster_at_beta_ten() {
    let adaptive = run_grid(&exit_config(vec![10.0], StepSchedule::new(1.0, 0.5).unwrap(), 200, 4)).unwrap();
    let a = adaptive.series[0].summaries()[0];
    assert_eq!(a.capped_count, 0);
    // The reference mean is far out of reach, so bound it from below with a cap:
    // if every replica is still inside after `cap` steps, its mean exceeds `cap`.
    let cap = (25.0 * a.mean) as u64;
    let mut cfg = exit_config(vec![10.0], StepSchedule::frozen(), 20, 5);
    cfg.step_cap = cap;
    let plain = run_grid(&cfg).unwrap();
    let p = plain.series[0].summaries()[0];
    assert_eq!(p.capped_count, 20, "reference exits observed below {cap} steps");
    assert!(a.mean < cap as f64 / 5.0);
}

#[test]
fn frozen_successive_durations_share_the_mean() {
    let mut cfg = exit_config(vec![5.0], StepSchedule::frozen(), 100, 6);
    cfg.exits = 3;
    let run = run_grid(&cfg).unwrap();
    let s: Vec<_> = run.series.iter().map(|x| x.summaries()[0]).collect();
    assert!(s.iter().all(|x| x.capped_count == 0));
    for i in 0..3 {
        for j in i + 1..3 {
            let z = (s[i].mean - s[j].mean) / s[i].stderr.hypot(s[j].stderr);
            assert!(z.abs() <= 3.0, "durations {} and {}: z = {z}", i + 1, j + 1);
        }
    }
}

#[test]
fn later_exits_are_faster_than_the_first_at_beta_twelve() {
    let mut cfg = exit_config(vec![12.0], StepSchedule::new(1.0, 0.6).unwrap(), 200, 7);
    cfg.exits = 6;
    let run = run_grid(&cfg).unwrap();
    let med: Vec<f64> = run.series.iter().map(|x| x.summaries()[0].median).collect();
    for k in 3..6 {
        assert!(med[k] < med[0], "exit {}: {} vs {}", k + 1, med[k], med[0]);
    }
}
