use nalgebra::{Matrix3, Vector3};
use uwbloc_core::sim::MIN_REPORTED_SIGMA;
use uwbloc_core::{
    predict_range, AnchorMap, FusionConfig, FusionEkf, ImuSample, Position3, RangeSample,
    VanillaConfig, VanillaEkf,
};

/// Plain Gauss-Newton on `sum (|p - a_i| - r_i)^2`.
fn gauss_newton(anchors: &AnchorMap, ranges: &[f64; 6], mut p: Position3) -> Position3 {
    for _ in 0..50 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (a, r) in anchors.iter().zip(ranges) {
            let d = p - a.position;
            let u = d / d.norm();
            jtj += u * u.transpose();
            jtr += u * (d.norm() - r);
        }
        let step = jtj.lu().solve(&jtr).unwrap();
        p -= step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    p
}

fn exact_ranges(anchors: &AnchorMap, truth: &Position3) -> [f64; 6] {
    std::array::from_fn(|i| predict_range(truth, anchors.get(i as u8).unwrap()))
}

fn start_point(truth: &Position3) -> Position3 {
    truth + Vector3::new(1.0, -1.0, 1.0).normalize()
}

/// Updates needed until the estimate is and stays within 1 cm of `target`.
fn updates_to_converge(mut step: impl FnMut(usize) -> Position3, target: &Position3) -> usize {
    let mut entered = None;
    for k in 1..=1000 {
        let err = (step(k) - target).norm();
        match (err < 0.01, entered) {
            (true, None) => entered = Some(k),
            (false, Some(_)) => entered = None,
            _ => {}
        }
    }
    entered.expect("never converged")
}

fn sample(anchors: &AnchorMap, truth: &Position3, k: usize) -> RangeSample {
    let anchor_id = (k % 6) as u8;
    RangeSample {
        t: k as f64 / 80.0,
        anchor_id,
        range: predict_range(truth, anchors.get(anchor_id).unwrap()),
        sigma_r: MIN_REPORTED_SIGMA,
        truth_outlier: false,
    }
}

const STATIC_POINTS: [[f64; 3]; 4] = [
    [7.3, 12.75, 1.5],
    [3.0, 4.0, 1.0],
    [12.0, 22.0, 2.5],
    [9.0, 8.0, 0.5],
];

#[test]
fn oracle_recovers_truth() {
    let anchors = AnchorMap::default();
    for xyz in STATIC_POINTS {
        let truth = Position3::from(xyz);
        let fix = gauss_newton(
            &anchors,
            &exact_ranges(&anchors, &truth),
            anchors.centroid(),
        );
        assert!((fix - truth).norm() < 1e-9);
    }
}

#[test]
fn vanilla_converges_within_200_updates() {
    let anchors = AnchorMap::default();
    for xyz in STATIC_POINTS {
        let truth = Position3::from(xyz);
        let oracle = gauss_newton(
            &anchors,
            &exact_ranges(&anchors, &truth),
            anchors.centroid(),
        );
        let mut ekf = VanillaEkf::new(start_point(&truth), 0.0, VanillaConfig::default()).unwrap();
        let n = updates_to_converge(
            |k| {
                ekf.process_range(&sample(&anchors, &truth, k), &anchors)
                    .unwrap();
                ekf.state().position()
            },
            &oracle,
        );
        assert!(n <= 200, "{xyz:?}: {n} updates");
    }
}

#[test]
fn fusion_converges_within_200_updates() {
    let anchors = AnchorMap::default();
    for xyz in STATIC_POINTS {
        let truth = Position3::from(xyz);
        let oracle = gauss_newton(
            &anchors,
            &exact_ranges(&anchors, &truth),
            anchors.centroid(),
        );
        let mut ekf = FusionEkf::new(start_point(&truth), 0.0, FusionConfig::default()).unwrap();
        let mut imu_k = 1;
        let n = updates_to_converge(
            |k| {
                let s = sample(&anchors, &truth, k);
                while (imu_k as f64) / 50.0 <= s.t {
                    let imu = ImuSample {
                        t: imu_k as f64 / 50.0,
                        accel: Vector3::zeros(),
                    };
                    ekf.process_imu(&imu).unwrap();
                    imu_k += 1;
                }
                ekf.process_range(&s, &anchors).unwrap();
                ekf.state().position()
            },
            &oracle,
        );
        assert!(n <= 200, "{xyz:?}: {n} updates");
    }
}
