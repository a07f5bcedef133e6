use std::f64::consts::{PI, TAU};

use bevlift::depthfill::SENTINEL_DEPTH;
use bevlift::geometry::{world_to_camera, CameraCalibration};
use bevlift::heatmap::extract_peaks;
use bevlift::simscene::{
    camera_looking_along, dominant_splat, random_scene, raycast_lidar, render_depth, render_features,
    render_heatmap, visible_splats, LidarConfig, RigConfig, SceneBox, SceneGenConfig, SceneSpec, BOX_INTENSITY,
    GROUND_INTENSITY,
};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Box axes and half extents recovered from its corners.
fn frame_from_corners(b: &SceneBox) -> (Point3<f64>, [Vector3<f64>; 3], [f64; 3]) {
    let c = b.corners();
    let center = Point3::from(c.iter().map(|p| p.coords).sum::<Vector3<f64>>() / 8.0);
    let edges = [c[1] - c[0], c[2] - c[0], c[4] - c[0]];
    let axes = edges.map(|e| e.normalize());
    let half = edges.map(|e| e.norm() / 2.0);
    (center, axes, half)
}

/// Ray against each of the six face rectangles separately.
fn face_oracle(b: &SceneBox, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let (center, axes, half) = frame_from_corners(b);
    let mut best: Option<f64> = None;
    for k in 0..3 {
        for sign in [-1.0, 1.0] {
            let n = axes[k] * sign;
            let plane_point = center + n * half[k];
            let denom = n.dot(d);
            if denom.abs() < 1e-15 {
                continue;
            }
            let t = n.dot(&(plane_point - o)) / denom;
            if t <= 1e-9 {
                continue;
            }
            let hit = o + d * t;
            let rel = hit - center;
            let inside = (0..3)
                .filter(|&j| j != k)
                .all(|j| rel.dot(&axes[j]).abs() <= half[j] + 1e-9);
            if inside && best.is_none_or(|bt| t < bt) {
                best = Some(t);
            }
        }
    }
    best
}

fn scene_oracle(scene: &SceneSpec, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let mut best = scene
        .boxes
        .iter()
        .filter_map(|b| face_oracle(b, o, d))
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
    if let Some(gz) = scene.ground_z {
        if d.z < 0.0 {
            let t = (gz - o.z) / d.z;
            let hit = o + d * t;
            let e = scene.extent.unwrap_or(f64::INFINITY);
            if t > 0.0 && hit.x.abs() <= e && hit.y.abs() <= e && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

fn random_box(rng: &mut StdRng) -> SceneBox {
    SceneBox {
        center: Point3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-2.0..2.0)),
        size: [rng.gen_range(0.3..8.0), rng.gen_range(0.3..4.0), rng.gen_range(0.3..4.0)],
        yaw: rng.gen_range(-PI..PI),
        class_id: 0,
    }
}

#[test]
fn slab_intersection_matches_face_planes() {
    let mut rng = StdRng::seed_from_u64(50);
    let mut hits = 0;
    for _ in 0..20_000 {
        let b = random_box(&mut rng);
        let o = Point3::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), rng.gen_range(-5.0..5.0));
        if b.surface_distance(&o) < 1e-3 || face_oracle(&b, &o, &(b.center - o)).is_none() {
            // skip origins on or inside the box
            continue;
        }
        // aim roughly at the box so a good share of rays hit
        let aim = b.center + Vector3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-2.0..2.0));
        let d = (aim - o).normalize();
        match (b.intersect(&o, &d), face_oracle(&b, &o, &d)) {
            (Some(a), Some(e)) => {
                assert!((a - e).abs() <= 1e-9 * (1.0 + e), "{a} vs {e}");
                hits += 1;
            }
            (None, None) => {}
            (a, e) => panic!("slab {a:?} vs faces {e:?} for {b:?} from {o} along {d}"),
        }
    }
    assert!(hits > 3000);
}

#[test]
fn single_beam_hits_near_face_at_four_and_a_half() {
    let scene = SceneSpec {
        boxes: vec![SceneBox {
            center: Point3::new(5.0, 0.0, 0.0),
            size: [1.0; 3],
            yaw: 0.0,
            class_id: 0,
        }],
        ..Default::default()
    };
    assert_eq!(scene_oracle(&scene, &Point3::origin(), &Vector3::x()), Some(4.5));
    let lc = LidarConfig {
        beam_elevations: vec![0.0],
        azimuth_resolution: TAU / 360.0,
        max_range: 100.0,
        origin: Point3::origin(),
        range_noise_std: 0.0,
    };
    let cloud = raycast_lidar(&scene, &lc, 0).unwrap();
    assert!(cloud.points.iter().any(|p| p.position == Point3::new(4.5, 0.0, 0.0)));
}

/// Every noise-free return lies on a surface: boxes by a corner-derived
/// distance, ground by height. The point count equals the number of rays
/// the oracle says hit within range.
#[test]
fn lidar_returns_lie_on_surfaces() {
    for seed in 0..3 {
        let scene = random_scene(seed, &SceneGenConfig::default());
        let lc = LidarConfig::uniform_beams(16, -25.0, 5.0, 1.0, 80.0);
        let cloud = raycast_lidar(&scene, &lc, seed).unwrap();
        let mut expected = 0;
        for beam in 0..lc.beam_elevations.len() {
            for step in 0..lc.azimuth_steps() {
                let el = lc.beam_elevations[beam];
                let az = step as f64 * lc.azimuth_resolution;
                let d = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                if scene_oracle(&scene, &lc.origin, &d).is_some_and(|t| t <= lc.max_range) {
                    expected += 1;
                }
            }
        }
        assert_eq!(cloud.len(), expected);
        let gz = scene.ground_z.unwrap();
        for p in &cloud.points {
            let on_box = scene.boxes.iter().any(|b| {
                let (c, axes, half) = frame_from_corners(b);
                let rel = p.position - c;
                let excess: Vec<f64> = (0..3).map(|k| rel.dot(&axes[k]).abs() - half[k]).collect();
                excess.iter().all(|e| *e <= 1e-9) && excess.iter().any(|e| e.abs() <= 1e-9)
            });
            let on_ground = (p.position.z - gz).abs() <= 1e-9;
            assert!(on_box || on_ground, "{:?}", p.position);
            let intensity = if on_box { BOX_INTENSITY } else { GROUND_INTENSITY };
            if on_box != on_ground {
                assert_eq!(p.intensity, intensity);
            }
        }
    }
}

#[test]
fn rendered_depth_matches_per_ray_oracle() {
    let mut rng = StdRng::seed_from_u64(51);
    let cams = RigConfig::default().cameras();
    let scene = random_scene(51, &SceneGenConfig::default());
    for calib in &cams {
        let dd = render_depth(&scene, calib, 4, SENTINEL_DEPTH);
        for _ in 0..100 {
            let (u, v) = (rng.gen_range(0..dd.width), rng.gen_range(0..dd.height));
            let (px, py) = ((u as f64 + 0.5) * 4.0, (v as f64 + 0.5) * 4.0);
            // ray through the pixel center from K⁻¹ and the transposed rotation
            let cam_dir = Vector3::new((px - calib.cx) / calib.fx, (py - calib.cy) / calib.fy, 1.0);
            let dir = calib.rotation().transpose() * cam_dir;
            match scene_oracle(&scene, &calib.center(), &dir) {
                Some(t) => {
                    let hit = calib.center() + dir * t;
                    let z = world_to_camera(&hit, calib).z;
                    assert!(dd.is_in_range(u, v));
                    assert!((dd.get(u, v) - z).abs() <= 1e-9 * (1.0 + z));
                }
                None => {
                    assert!(!dd.is_in_range(u, v));
                    assert_eq!(dd.get(u, v), SENTINEL_DEPTH);
                }
            }
        }
    }
}

fn front_camera() -> CameraCalibration {
    camera_looking_along(0.0, Point3::origin(), 400.0, 800, 448)
}

fn small_box(x: f64, y: f64, class_id: usize) -> SceneBox {
    SceneBox {
        center: Point3::new(x, y, 0.0),
        size: [1.0, 1.0, 1.0],
        yaw: 0.3,
        class_id,
    }
}

#[test]
fn overlapping_splats_take_the_elementwise_max() {
    let scene = SceneSpec {
        boxes: vec![small_box(10.0, 0.5, 2), small_box(12.0, -0.5, 2)],
        ..Default::default()
    };
    let calib = front_camera();
    let hm = render_heatmap(&scene, &calib, 4, 4).unwrap();
    let splats = visible_splats(&scene, &calib, 4);
    assert_eq!(splats.len(), 2);
    for sp in &splats {
        // independent projection of the center onto the grid
        let pc = world_to_camera(&scene.boxes[sp.box_index].center, &calib);
        let (u, v) = (calib.fx * pc.x / pc.z + calib.cx, calib.fy * pc.y / pc.z + calib.cy);
        assert_eq!((sp.grid_u, sp.grid_v), ((u / 4.0) as usize, (v / 4.0) as usize));
    }
    for v in 0..hm.height {
        for u in 0..hm.width {
            let g = |sp: &bevlift::simscene::Splat| {
                let r2 = (u as f64 - sp.grid_u as f64).powi(2) + (v as f64 - sp.grid_v as f64).powi(2);
                (-r2 / (2.0 * sp.sigma * sp.sigma)).exp()
            };
            let expected = g(&splats[0]).max(g(&splats[1])) as f32;
            assert_eq!(hm.get(2, u, v), expected);
            for k in [0, 1, 3] {
                assert_eq!(hm.get(k, u, v), 0.0);
            }
        }
    }
}

#[test]
fn features_follow_the_dominant_splat() {
    let scene = random_scene(52, &SceneGenConfig::default());
    let cams = RigConfig::default().cameras();
    for calib in &cams {
        let fm = render_features(&scene, calib, 4, 10).unwrap();
        let splats = visible_splats(&scene, calib, 4);
        for v in 0..fm.height {
            for u in 0..fm.width {
                let mut best: Option<(f64, f64, usize)> = None;
                for sp in &splats {
                    let g = sp.value_at(u, v);
                    if best.is_none_or(|(bg, bd, _)| g > bg || (g == bg && sp.depth < bd)) {
                        best = Some((g, sp.depth, sp.class_id));
                    }
                }
                let class = best.filter(|b| b.0 >= 0.01).map(|b| b.2);
                for k in 0..10 {
                    assert_eq!(fm.get(k, u, v), if class == Some(k) { 1.0 } else { 0.0 });
                }
                assert_eq!(class, dominant_splat(&splats, u, v).map(|s| s.class_id));
                assert_eq!(fm.get(10, u, v), ((u as f64 + 0.5) * 4.0 / 800.0) as f32);
                assert_eq!(fm.get(11, u, v), ((v as f64 + 0.5) * 4.0 / 448.0) as f32);
            }
        }
    }
}

#[test]
fn separated_objects_give_one_peak_each() {
    // a fan of boxes at equal range, far enough apart in azimuth that each
    // splat is the only local maximum near its center
    let boxes: Vec<SceneBox> = (0..5)
        .map(|i| {
            let az = (i as f64 - 2.0) * 0.18;
            SceneBox {
                center: Point3::new(20.0 * az.cos(), 20.0 * az.sin(), 0.0),
                size: [1.0; 3],
                yaw: 0.0,
                class_id: i % 3,
            }
        })
        .collect();
    let scene = SceneSpec {
        boxes,
        ..Default::default()
    };
    let calib = front_camera();
    let hm = render_heatmap(&scene, &calib, 4, 3).unwrap();
    let splats = visible_splats(&scene, &calib, 4);
    assert_eq!(splats.len(), 5);
    let mut peaks: Vec<_> = extract_peaks(&hm).into_iter().map(|p| (p.u, p.v, p.class_id, p.score)).collect();
    let mut expected: Vec<_> = splats.iter().map(|s| (s.grid_u, s.grid_v, s.class_id, 1.0f32)).collect();
    peaks.sort_by_key(|p| (p.0, p.1));
    expected.sort_by_key(|p| (p.0, p.1));
    assert_eq!(peaks, expected);
}

#[test]
fn empty_scene_renders_nothing() {
    let calib = front_camera();
    let scene = SceneSpec::default();
    let hm = render_heatmap(&scene, &calib, 4, 10).unwrap();
    assert_eq!(hm.max_score(), 0.0);
    let cloud = raycast_lidar(&scene, &LidarConfig::default(), 0).unwrap();
    assert!(cloud.is_empty());
    assert!(render_depth(&scene, &calib, 4, SENTINEL_DEPTH).in_range.iter().all(|r| !r));
}

#[test]
fn generated_scenes_are_valid_and_reproducible() {
    let cfg = SceneGenConfig::default();
    for seed in 0..20 {
        let scene = random_scene(seed, &cfg);
        assert_eq!(scene, random_scene(seed, &cfg));
        scene.validate(10).unwrap();
        for (i, a) in scene.boxes.iter().enumerate() {
            let d = a.center.xy().coords.norm();
            assert!(d >= cfg.distance.0 && d < cfg.distance.1);
            assert!((a.center.z - a.size[2] / 2.0 - cfg.ground_z).abs() < 1e-12);
            for b in &scene.boxes[i + 1..] {
                let ra = 0.5 * a.size[0].hypot(a.size[1]);
                let rb = 0.5 * b.size[0].hypot(b.size[1]);
                assert!((a.center.xy() - b.center.xy()).norm() > ra + rb);
            }
        }
        let reparsed = SceneSpec::parse(&scene.to_text()).unwrap();
        assert_eq!(reparsed, scene);
    }
}

proptest! {
    #[test]
    fn axis_rays_hit_faces_at_half_extent(l in 0.2..10.0f64, w in 0.2..10.0f64, h in 0.2..10.0f64, dist in 6.0..50.0f64) {
        let b = SceneBox { center: Point3::new(dist, 0.0, 0.0), size: [l, w, h], yaw: 0.0, class_id: 0 };
        let t = b.intersect(&Point3::origin(), &Vector3::x()).unwrap();
        prop_assert!((t - (dist - l / 2.0)).abs() <= 1e-12 * dist);
    }
}
