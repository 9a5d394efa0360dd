use uwbloc_core::log::{sim_records, write_records};
use uwbloc_core::sim::{
    sample_imu, sample_ranges, simulate, NoiseSpec, Shape, Trajectory, TrajectorySpec,
};
use uwbloc_core::{predict_range, AnchorMap, Preset};

fn hover(duration: f64) -> TrajectorySpec {
    TrajectorySpec {
        shape: Shape::Hover {
            position: [7.3, 12.75, 1.5],
        },
        duration,
        v_max: 1.2,
        a_max: 2.0,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn record_counts_follow_rates() {
    let cfg = Preset::Lissajous.config();
    let mut spec = cfg.trajectory.clone();
    spec.duration = 90.0;
    let run = simulate(&spec, &cfg.anchors, &cfg.noise).unwrap();
    assert_eq!(run.ranges.len(), 90 * 80);
    assert_eq!(run.imu.len(), 90 * 50);
    assert_eq!(run.truth.len(), 90 * 100);
    for (k, r) in run.ranges.iter().enumerate() {
        assert_eq!(r.anchor_id as usize, k % 6);
    }
}

#[test]
fn range_noise_statistics() {
    // 1e5 samples: 1250 s at 80 Hz.
    let spec = hover(1250.0);
    let traj = Trajectory::new(&spec).unwrap();
    let anchors = AnchorMap::default();
    let noise = NoiseSpec {
        range_sigma: 0.1,
        seed: 17,
        ..NoiseSpec::default()
    };
    let ranges = sample_ranges(&traj, &anchors, &noise);
    assert_eq!(ranges.len(), 100_000);
    let residuals: Vec<f64> = ranges
        .iter()
        .map(|r| r.range - predict_range(&traj.at(r.t).position, anchors.get(r.anchor_id).unwrap()))
        .collect();
    let (mean, std) = mean_std(&residuals);
    assert!((std / 0.1 - 1.0).abs() < 0.03, "std {std}");
    assert!(mean.abs() < 1.5e-3, "mean {mean}");
}

#[test]
fn outlier_rate_and_magnitude() {
    let spec = hover(1250.0);
    let traj = Trajectory::new(&spec).unwrap();
    let anchors = AnchorMap::default();
    let noise = NoiseSpec {
        range_sigma: 0.0,
        outlier_rate: 0.05,
        outlier_magnitude: [3.0, 6.0],
        seed: 4,
        ..NoiseSpec::default()
    };
    let ranges = sample_ranges(&traj, &anchors, &noise);
    let outliers: Vec<_> = ranges.iter().filter(|r| r.truth_outlier).collect();
    let rate = outliers.len() as f64 / ranges.len() as f64;
    // Binomial std at n = 1e5, p = 0.05 is about 7e-4.
    assert!((rate - 0.05).abs() < 0.003, "rate {rate}");
    let mut positive = 0;
    for r in &outliers {
        let d = r.range - predict_range(&traj.at(r.t).position, anchors.get(r.anchor_id).unwrap());
        assert!((3.0 - 1e-9..=6.0 + 1e-9).contains(&d.abs()), "offset {d}");
        positive += usize::from(d > 0.0);
    }
    let share = positive as f64 / outliers.len() as f64;
    assert!((share - 0.5).abs() < 0.05, "positive share {share}");
}

#[test]
fn imu_noise_and_bias_mean() {
    // 1e5 samples: 2000 s at 50 Hz.
    let spec = hover(2000.0);
    let traj = Trajectory::new(&spec).unwrap();
    let noise = NoiseSpec {
        imu_sigma: 0.1,
        bias_initial: [0.2, -0.1, 0.05],
        seed: 23,
        ..NoiseSpec::default()
    };
    let (imu, bias) = sample_imu(&traj, &noise);
    assert_eq!(imu.len(), 100_000);
    for axis in 0..3 {
        let values: Vec<f64> = imu.iter().map(|s| s.accel[axis]).collect();
        let (mean, std) = mean_std(&values);
        assert!((std / 0.1 - 1.0).abs() < 0.03, "axis {axis} std {std}");
        assert!(
            (mean - noise.bias_initial[axis]).abs() < 1.5e-3,
            "axis {axis} mean {mean}"
        );
        assert_eq!(bias.at(1000.0)[axis], noise.bias_initial[axis]);
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = Preset::Table1Proxy.config().with_seed(99);
    let render = |seed: u64| {
        let mut noise = cfg.noise.clone();
        noise.seed = seed;
        let run = simulate(&cfg.trajectory, &cfg.anchors, &noise).unwrap();
        let mut bytes = Vec::new();
        write_records(&mut bytes, &sim_records(&run)).unwrap();
        bytes
    };
    let a = render(99);
    assert_eq!(a, render(99));
    assert_ne!(a, render(100));
}

#[test]
fn noiseless_ranges_are_exact() {
    let cfg = Preset::Circle.config();
    let run = simulate(&cfg.trajectory, &cfg.anchors, &NoiseSpec::noiseless()).unwrap();
    let traj = Trajectory::new(&cfg.trajectory).unwrap();
    for r in &run.ranges {
        let truth = predict_range(
            &traj.at(r.t).position,
            cfg.anchors.get(r.anchor_id).unwrap(),
        );
        assert_eq!(r.range, truth);
    }
}
