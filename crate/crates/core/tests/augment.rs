use bevlift::augment::{
    apply_to_cloud, replay_on_pseudo_points, sample_params, AugmentationParams, AugmentationRanges,
};
use bevlift::bev::FeaturePseudoPoint;
use bevlift::geometry::{LidarPoint, PointCloud};
use nalgebra::{Matrix4, Point3, Vector4};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Composite homogeneous matrix T · R · S · Fy · Fx built from scratch.
fn matrix_oracle(p: &AugmentationParams) -> Matrix4<f64> {
    let fx = Matrix4::from_diagonal(&Vector4::new(1.0, if p.flip_x { -1.0 } else { 1.0 }, 1.0, 1.0));
    let fy = Matrix4::from_diagonal(&Vector4::new(if p.flip_y { -1.0 } else { 1.0 }, 1.0, 1.0, 1.0));
    let s = Matrix4::from_diagonal(&Vector4::new(p.scale, p.scale, p.scale, 1.0));
    let (sn, cs) = p.rotation_z.sin_cos();
    #[rustfmt::skip]
    let r = Matrix4::new(
        cs, -sn, 0.0, 0.0,
        sn, cs, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let mut t = Matrix4::identity();
    t[(0, 3)] = p.translation[0];
    t[(1, 3)] = p.translation[1];
    t[(2, 3)] = p.translation[2];
    t * r * s * fy * fx
}

fn random_params(rng: &mut StdRng) -> AugmentationParams {
    AugmentationParams {
        flip_x: rng.gen_bool(0.5),
        flip_y: rng.gen_bool(0.5),
        scale: rng.gen_range(0.5..2.0),
        rotation_z: rng.gen_range(-3.2..3.2),
        translation: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0)],
    }
}

#[test]
fn apply_matches_composite_matrix() {
    let mut rng = StdRng::seed_from_u64(40);
    for _ in 0..500 {
        let params = random_params(&mut rng);
        let m = matrix_oracle(&params);
        for _ in 0..20 {
            let p = Point3::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0), rng.gen_range(-5.0..5.0));
            let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
            let q = params.apply(&p);
            assert!((q - Point3::new(h.x, h.y, h.z)).norm() <= 1e-9, "{params:?}");
            // inverse params reproduce the inverse matrix
            let back = params.inverse().apply(&q);
            assert!((back - p).norm() <= 1e-9);
            assert!((params.apply_inverse(&q) - p).norm() <= 1e-9);
            let mi = m.try_inverse().unwrap() * h;
            assert!((Point3::new(mi.x, mi.y, mi.z) - p).norm() <= 1e-9);
        }
    }
}

#[test]
fn identity_is_bit_exact() {
    let mut rng = StdRng::seed_from_u64(41);
    let cloud = PointCloud::new(
        (0..1000)
            .map(|_| LidarPoint::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-3.0..3.0), 0.4))
            .collect(),
    );
    let out = apply_to_cloud(&cloud, &AugmentationParams::identity());
    for (a, b) in cloud.points.iter().zip(&out.points) {
        for k in 0..3 {
            assert_eq!(a.position[k].to_bits(), b.position[k].to_bits());
        }
    }
    for seed in 0..50 {
        assert!(sample_params(seed, &AugmentationRanges::degenerate()).unwrap().is_identity());
    }
}

/// Reference SplitMix64 written out from its published constants.
struct SplitMixOracle(u64);

impl SplitMixOracle {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / 9007199254740992.0
    }
}

#[test]
fn sampler_follows_the_documented_draw_order() {
    let r = AugmentationRanges::default();
    for seed in [0u64, 1, 7, 12345, u64::MAX] {
        let mut o = SplitMixOracle(seed);
        let flip_x = o.unit() < 0.5;
        let flip_y = o.unit() < 0.5;
        let scale = 0.95 + 0.1 * o.unit();
        let rot = std::f64::consts::FRAC_PI_4 * (2.0 * o.unit() - 1.0);
        let mut t = [0.0; 3];
        for ti in &mut t {
            let u1 = 1.0 - o.unit();
            let u2 = o.unit();
            *ti = 0.5 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
        let p = sample_params(seed, &r).unwrap();
        assert_eq!((p.flip_x, p.flip_y), (flip_x, flip_y));
        assert!((p.scale - scale).abs() < 1e-15 && (p.rotation_z - rot).abs() < 1e-15);
        for k in 0..3 {
            assert!((p.translation[k] - t[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn sampled_distributions() {
    let r = AugmentationRanges::default();
    let n = 20_000;
    let (mut scale_sum, mut flips, mut tx_sq) = (0.0, 0usize, 0.0);
    for seed in 0..n {
        let p = sample_params(seed, &r).unwrap();
        assert!((0.95..1.05).contains(&p.scale));
        assert!(p.rotation_z.abs() <= std::f64::consts::FRAC_PI_4);
        scale_sum += p.scale;
        flips += usize::from(p.flip_x);
        tx_sq += p.translation[0].powi(2);
    }
    let mean = scale_sum / n as f64;
    assert!((0.995..=1.005).contains(&mean), "scale mean {mean}");
    let flip_rate = flips as f64 / n as f64;
    assert!((flip_rate - 0.5).abs() < 0.02, "flip rate {flip_rate}");
    let std = (tx_sq / n as f64).sqrt();
    assert!((std - 0.5).abs() < 0.02, "translation std {std}");
}

#[test]
fn replay_keeps_attributes_and_matches_cloud() {
    let params = sample_params(3, &AugmentationRanges::default()).unwrap();
    let pts: Vec<FeaturePseudoPoint> = (0..10)
        .map(|i| FeaturePseudoPoint {
            position: Point3::new(i as f64, -2.0 * i as f64, 0.5),
            feature: vec![i as f32, 1.0],
            class_id: i % 3,
            score: 0.3,
        })
        .collect();
    let cloud = PointCloud::new(pts.iter().map(|p| LidarPoint::new(p.position.x, p.position.y, p.position.z, 0.1)).collect());
    let out = replay_on_pseudo_points(pts.clone(), &params);
    let aug = apply_to_cloud(&cloud, &params);
    for ((a, b), c) in pts.iter().zip(&out).zip(&aug.points) {
        assert_eq!((&a.feature, a.class_id, a.score), (&b.feature, b.class_id, b.score));
        assert_eq!(b.position, c.position);
    }
}

proptest! {
    #[test]
    fn record_round_trips_exactly(
        fx in any::<bool>(), fy in any::<bool>(), scale in 0.01..100.0f64, rot in -10.0..10.0f64,
        tx in -1e3..1e3f64, ty in -1e3..1e3f64, tz in -1e3..1e3f64,
    ) {
        let p = AugmentationParams { flip_x: fx, flip_y: fy, scale, rotation_z: rot, translation: [tx, ty, tz] };
        let parsed: AugmentationParams = p.to_string().parse().unwrap();
        prop_assert_eq!(parsed, p);
    }

    #[test]
    fn inverse_of_inverse_is_the_original(seed in 0u64..100_000) {
        let p = sample_params(seed, &AugmentationRanges::default()).unwrap();
        let q = Point3::new(12.5, -40.0, 1.25);
        prop_assert!((p.inverse().inverse().apply(&q) - p.apply(&q)).norm() <= 1e-9);
    }
}
