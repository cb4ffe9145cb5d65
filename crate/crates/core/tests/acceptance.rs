//! End-to-end acceptance checks. Each test prints one `criterion N: PASS`
//! line; criterion 9 needs an external dataset and is skipped when absent.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix6, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lidar_slam::classify::{classify, PointLabel};
use lidar_slam::config::PipelineConfig;
use lidar_slam::dataset_io::{read_groundtruth, GroundTruthFormat, Trajectory};
use lidar_slam::degeneracy::compute_point_weights;
use lidar_slam::evaluation::{ape, ape_series, rpe_series, ErrorStats};
use lidar_slam::geometry::{se3_exp, Point3, Pose, Twist};
use lidar_slam::normals::compute_normals;
use lidar_slam::pipeline::{run_odometry, run_slam};
use lidar_slam::pose_graph::{odometry_information, PoseGraph};
use lidar_slam::range_image::{project, ProjectionConfig};
use lidar_slam::registration::register;
use lidar_slam::scan_context::{descriptor_distance, make_descriptor, DescriptorDatabase};
use lidar_slam::synth::{SceneKind, SyntheticWorld};
use lidar_slam::voxel_map::{downsample, VoxelMap};

/// Projection used for the heavier pipeline runs; coarser than the default to
/// keep run times reasonable while exercising the full stack.
fn pipeline_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.proj = ProjectionConfig {
        width: 256,
        height: 32,
        theta_min: -std::f64::consts::PI,
        theta_max: std::f64::consts::PI,
        phi_min: -0.6,
        phi_max: 0.4,
        r_min: 0.3,
        r_max: 80.0,
    };
    c.map.voxel_size = 0.3;
    // Synthetic scans are noise-free, so wide discontinuity gates keep the
    // glancing-incidence floor pixels usable.
    c.normals.discontinuity_abs = 1.5;
    c.normals.discontinuity_rel = 0.2;
    c
}

fn high_res_config() -> PipelineConfig {
    let mut c = pipeline_config();
    c.proj.width = 512;
    c.proj.height = 64;
    c
}

#[test]
fn criterion_1_degeneracy_weight_oracle() {
    let mut normals = vec![Vector3::x(); 50];
    normals.extend(vec![Vector3::y(); 2]);
    let start = Instant::now();
    let report = compute_point_weights(&normals).unwrap();
    let elapsed = start.elapsed();
    for w in &report.weights[..50] {
        assert!((w - 1.0).abs() < 1e-9, "x weight {w}");
    }
    for w in &report.weights[50..] {
        assert!((w - 0.04).abs() < 1e-9, "y weight {w}");
    }
    assert!(elapsed.as_micros() < 1000, "took {elapsed:?}");
    println!("criterion 1: PASS — corridor weights {{1.0, 0.04}} within 1e-9 in {elapsed:?}");
}

/// Surface normal of the box-room wall/floor/ceiling containing `p` (world
/// frame), or None off-surface.
fn box_room_surface_normal(world: &SyntheticWorld, p: &Point3) -> Option<Vector3<f64>> {
    for rect in &world.surfaces {
        let n = rect.normal();
        if n.dot(&(p - rect.origin)).abs() < 1e-6 {
            return Some(n);
        }
    }
    None
}

#[test]
fn criterion_2_normal_accuracy() {
    let config = PipelineConfig::default(); // default projection config
    let world = SyntheticWorld::new(SceneKind::BoxRoom, 4);
    let pose = world.trajectory[1];
    let raw = world.render_scan(&pose, &config.proj);
    let image = project(&raw, &config.proj).unwrap();
    let start = Instant::now();
    let normals = compute_normals(&image, &config.normals);
    let elapsed = start.elapsed();
    let mut total = 0usize;
    let mut within = 0usize;
    for v in 0..normals.height() {
        for u in 0..normals.width() {
            let Some(n) = normals.get(u, v) else { continue };
            let i = image.point_index(u, v).unwrap();
            let p = raw[i];
            assert!(n.dot(&p) <= 0.0, "normal does not face the sensor");
            assert!((n.norm() - 1.0).abs() < 1e-6);
            let world_p = pose.apply(&p);
            let Some(mut truth) = box_room_surface_normal(&world, &world_p) else {
                continue;
            };
            // The analytic plane normal is only defined where the estimator's
            // support lies on a single plane; pixels straddling two surfaces
            // are boundary pixels (classified Edge downstream).
            let plane = world
                .surfaces
                .iter()
                .find(|r| r.normal().dot(&(world_p - r.origin)).abs() < 1e-6)
                .unwrap();
            let same_surface = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
                .iter()
                .all(|&(du, dv)| {
                    let nu = match image.neighbor_u(u, du) {
                        Some(nu) => nu,
                        None => return false,
                    };
                    let nv = (v as isize + dv) as usize;
                    match image.point_index(nu, nv) {
                        Some(j) => {
                            let q = pose.apply(&raw[j]);
                            plane.normal().dot(&(q - plane.origin)).abs() < 1e-6
                        }
                        None => false,
                    }
                });
            if !same_surface {
                continue;
            }
            // Orient the analytic normal toward the sensor as well.
            if pose.rotate(&truth).dot(&p) > 0.0 {
                truth = -truth;
            }
            let angle = n.dot(&pose.inverse().rotate(&truth)).clamp(-1.0, 1.0).acos();
            total += 1;
            if angle <= 1.0_f64.to_radians() {
                within += 1;
            }
        }
    }
    assert!(total > 5000, "too few valid normals: {total}");
    let frac = within as f64 / total as f64;
    assert!(frac >= 0.99, "only {within}/{total} within 1 degree");
    assert!(elapsed.as_millis() < 100, "normal pass took {elapsed:?}");
    println!(
        "criterion 2: PASS — {:.2}% of {} normals within 1°, all sensor-facing, {elapsed:?}/scan",
        100.0 * frac,
        total
    );
}

#[test]
fn criterion_3_classification_accuracy() {
    let config = PipelineConfig::default();
    let world = SyntheticWorld::new(SceneKind::BoxRoom, 4);
    let pose = world.trajectory[1];
    let raw = world.render_scan(&pose, &config.proj);
    let image = project(&raw, &config.proj).unwrap();
    let normals = compute_normals(&image, &config.normals);
    let cloud = classify(&raw, &image, &normals, &config.classify).unwrap();
    // Default thresholds: two-thirds majority, 0.26 rad.
    assert!((config.classify.edge_angle_rad - 0.26).abs() < 1e-12);
    assert!((config.classify.majority_fraction - 2.0 / 3.0).abs() < 1e-12);

    let mut correct = 0usize;
    let mut labeled = 0usize;
    for (p, label) in cloud.points.iter().zip(cloud.labels.iter()) {
        let w = pose.apply(p);
        let expected = if w.z.abs() < 1e-6 {
            PointLabel::Ground
        } else if (w.z - 3.0).abs() < 1e-6 {
            PointLabel::Roof
        } else {
            PointLabel::Wall
        };
        match label {
            PointLabel::Ground | PointLabel::Roof | PointLabel::Wall => {
                labeled += 1;
                if *label == expected {
                    correct += 1;
                }
            }
            _ => {}
        }
    }
    assert!(labeled > 5000, "too few labeled points: {labeled}");
    let frac = correct as f64 / labeled as f64;
    assert!(frac >= 0.95, "accuracy {frac:.3} on {labeled} labeled points");

    // Wall junctions: the four vertical corner lines of the room.
    let corners = [(-6.0, -5.0), (6.0, -5.0), (6.0, 5.0), (-6.0, 5.0)];
    let mut edge = 0usize;
    let mut near = 0usize;
    for (p, label) in cloud.points.iter().zip(cloud.labels.iter()) {
        let w = pose.apply(p);
        let close = corners
            .iter()
            .any(|&(cx, cy)| ((w.x - cx).powi(2) + (w.y - cy).powi(2)).sqrt() < 0.15);
        if close && *label != PointLabel::Unknown {
            near += 1;
            if *label == PointLabel::Edge {
                edge += 1;
            }
        }
    }
    assert!(near > 10, "too few junction points: {near}");
    assert!(edge * 2 > near, "only {edge}/{near} junction points labeled Edge");
    println!(
        "criterion 3: PASS — {:.2}% label accuracy ({labeled} pts), junction Edge {edge}/{near}",
        100.0 * frac
    );
}

#[test]
fn criterion_4_icp_recovery() {
    let config = pipeline_config();
    let world = SyntheticWorld::new(SceneKind::BoxRoom, 4);
    let raw = world.render_scan(&world.trajectory[0], &config.proj);
    let image = project(&raw, &config.proj).unwrap();
    let normals = compute_normals(&image, &config.normals);
    let cloud = downsample(
        &classify(&raw, &image, &normals, &config.classify).unwrap(),
        config.map.voxel_size,
    );
    let mut map = VoxelMap::new(
        config.map.voxel_size,
        config.map.max_points_per_voxel,
        config.map.max_map_range,
    );
    map.insert(&cloud, &Pose::identity());

    let mut rng = StdRng::seed_from_u64(42);
    let mut recovered = 0usize;
    for _ in 0..100 {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.gen_range(0.0..10.0_f64.to_radians());
        let t = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize()
            * rng.gen_range(0.0..0.5);
        let mut xi = Twist::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&(axis * angle));
        xi.fixed_rows_mut::<3>(3).copy_from(&t);
        let guess = se3_exp(&xi);
        match register(&cloud, &map, &guess, &config.icp) {
            Ok((pose, report)) => {
                assert!(report.iterations <= 50);
                if pose.translation.norm() <= 1e-3
                    && pose.rotation_angle() <= 0.1_f64.to_radians()
                {
                    recovered += 1;
                }
            }
            Err(_) => {}
        }
    }
    assert!(recovered >= 95, "only {recovered}/100 recovered");
    println!("criterion 4: PASS — {recovered}/100 perturbations recovered within 1e-3 m / 0.1°");
}

#[test]
fn criterion_5_degeneracy_ab() {
    let dir = tempfile::tempdir().unwrap();
    let full_cfg = pipeline_config();
    let layout = SyntheticWorld::new(SceneKind::ZigzagCorridor, 200)
        .generate(&full_cfg.proj, dir.path())
        .unwrap();
    let gt = read_groundtruth(&dir.path().join("groundtruth.txt"), GroundTruthFormat::Tum).unwrap();

    let mut baseline_cfg = full_cfg.clone();
    baseline_cfg.icp.degeneracy_weights = false;
    baseline_cfg.icp.fixed_alpha = Some(0.5);

    let full = run_odometry(&layout, &full_cfg).unwrap();
    let baseline = run_odometry(&layout, &baseline_cfg).unwrap();
    let full_ape = ape(&full.trajectory, &gt, full_cfg.eval.max_dt, true).unwrap();
    let base_ape = ape(&baseline.trajectory, &gt, full_cfg.eval.max_dt, true).unwrap();
    assert!(
        full_ape.rmse <= base_ape.rmse + 0.01,
        "full {:.4} vs baseline {:.4}",
        full_ape.rmse,
        base_ape.rmse
    );
    println!(
        "criterion 5: PASS — zigzag 200 scans: full APE rmse {:.4} m ≤ baseline {:.4} m + 0.01",
        full_ape.rmse, base_ape.rmse
    );
}

/// Deterministic pillar scene: scattered vertical features with seed-dependent
/// layout, distinct enough for place recognition.
fn pillar_scene(seed: u64) -> Vec<Point3> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut pts = Vec::new();
    for _ in 0..60 {
        let r = 3.0 + 70.0 * next();
        let a = 2.0 * std::f64::consts::PI * next();
        let h = 0.5 + 4.0 * next();
        let (x, y) = (r * a.cos(), r * a.sin());
        let mut z = -1.5;
        while z < h {
            pts.push(Point3::new(x, y, z));
            z += 0.25;
        }
    }
    pts
}

fn rotate_cloud(cloud: &[Point3], yaw: f64) -> Vec<Point3> {
    let rot = Pose::from_yaw(yaw);
    cloud.iter().map(|p| rot.apply(p)).collect()
}

#[test]
fn criterion_6_scan_context() {
    let c = PipelineConfig::default().sc;
    let scenes: Vec<Vec<Point3>> = (0..50).map(|s| pillar_scene(s as u64 + 1)).collect();
    let mut db = DescriptorDatabase::new(0);
    for (i, scene) in scenes.iter().enumerate() {
        db.insert(make_descriptor(scene, c.n_ring, c.n_sector, c.max_radius), i).unwrap();
    }
    // Revisit of scene 17 with a 90° heading change.
    let revisit = make_descriptor(
        &rotate_cloud(&scenes[17], 90.0_f64.to_radians()),
        c.n_ring,
        c.n_sector,
        c.max_radius,
    );
    let hit = db.query(&revisit, c.num_candidates, c.accept_threshold).unwrap();
    assert_eq!(hit.id, 17, "retrieved wrong scene");
    assert!(hit.distance < 0.2, "revisit distance {}", hit.distance);
    // Zero false positives: every distinct scene pair stays above threshold.
    let descs: Vec<_> = scenes
        .iter()
        .map(|s| make_descriptor(s, c.n_ring, c.n_sector, c.max_radius))
        .collect();
    let mut min_cross = f64::INFINITY;
    for i in 0..descs.len() {
        for j in i + 1..descs.len() {
            let (d, _) = descriptor_distance(&descs[i], &descs[j]).unwrap();
            min_cross = min_cross.min(d);
            assert!(d >= 0.2, "scenes {i} and {j} collide at distance {d}");
        }
    }
    // 30° rotated copy: min-shift distance below 0.05.
    let rotated = make_descriptor(
        &rotate_cloud(&scenes[3], 30.0_f64.to_radians()),
        c.n_ring,
        c.n_sector,
        c.max_radius,
    );
    let (d30, _) = descriptor_distance(&descs[3], &rotated).unwrap();
    assert!(d30 < 0.05, "30° rotation distance {d30}");
    println!(
        "criterion 6: PASS — revisit d={:.3}, min cross-scene d={:.3}, 30° rotation d={:.4}",
        hit.distance, min_cross, d30
    );
}

#[test]
fn criterion_7_pose_graph() {
    // Square loop: 8 odometry steps of 2.5 m with 90° turns every other step,
    // drifted by a small per-step yaw bias; one loop edge closes start to end.
    let steps = 8usize;
    let side = 2.5;
    let drift = 5.0_f64.to_radians() / steps as f64;
    let mut truth = vec![Pose::identity()];
    let mut graph = PoseGraph::new(Pose::identity());
    for k in 0..steps {
        let turn = if k % 2 == 1 { std::f64::consts::FRAC_PI_2 } else { 0.0 };
        let mut true_step = Pose::from_yaw(turn);
        true_step.translation = Vector3::new(side, 0.0, 0.0);
        truth.push(truth[k].compose(&true_step));
        let mut noisy = Pose::from_yaw(turn + drift);
        noisy.translation = Vector3::new(side, 0.0, 0.0);
        graph
            .add_odometry_edge(k, k + 1, noisy, odometry_information(side))
            .unwrap();
    }
    let loop_meas = truth[0].inverse().compose(&truth[steps]);
    graph
        .add_loop_edge(0, steps, loop_meas, Matrix6::identity() * 1e4)
        .unwrap();

    let before = (graph.node(steps).unwrap().translation - truth[steps].translation).norm();
    // One accepted iteration at a time so the error trace is observable.
    let mut errors = vec![graph.total_error()];
    for _ in 0..30 {
        let accepted = graph.optimize(1, 1e-12).unwrap();
        errors.push(graph.total_error());
        if accepted == 0 {
            break;
        }
    }
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "error increased: {} -> {}", w[0], w[1]);
    }
    let after = (graph.node(steps).unwrap().translation - truth[steps].translation).norm();
    assert!(
        after <= 0.2 * before,
        "endpoint error {after:.4} not reduced 80% from {before:.4}"
    );
    println!(
        "criterion 7: PASS — endpoint error {before:.3} m -> {after:.4} m, error trace non-increasing"
    );
}

#[test]
fn criterion_8_evaluation_identities() {
    let mut rng = StdRng::seed_from_u64(123);
    for trial in 0..100 {
        // Random smooth trajectory.
        let mut est = Trajectory::default();
        let mut pose = Pose::identity();
        let n = rng.gen_range(10..40);
        for k in 0..n {
            pose = pose.compose(&se3_exp(&Twist::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(0.2..1.0),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.1..0.1),
            )));
            est.push(k as f64 * 0.1, pose).unwrap();
        }
        // Reference: perturbed copy.
        let mut reference = Trajectory::default();
        for (t, p) in &est.entries {
            let mut q = *p;
            q.translation += Vector3::new(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
            reference.push(*t, q).unwrap();
        }
        // Gauge transform applied to the estimate.
        let gauge = se3_exp(&Twist::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ));
        let mut shifted = Trajectory::default();
        for (t, p) in &est.entries {
            shifted.push(*t, gauge.compose(p)).unwrap();
        }

        // Aligned APE is invariant to a rigid gauge on the estimate.
        let a = ape_series(&est, &reference, 0.02, true).unwrap();
        let b = ape_series(&shifted, &reference, 0.02, true).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9, "trial {trial}: APE gauge violation");
        }
        // RPE is invariant to rigid gauges on either trajectory.
        let ra = rpe_series(&est, &reference, 0.02, 1).unwrap();
        let rb = rpe_series(&shifted, &reference, 0.02, 1).unwrap();
        for (x, y) in ra.iter().zip(rb.iter()) {
            assert!((x - y).abs() < 1e-9, "trial {trial}: RPE gauge violation");
        }
        // rmse^2 = mean^2 + stdev^2 on the raw series.
        let s = ErrorStats::from_series(&a).unwrap();
        assert!(
            (s.rmse * s.rmse - (s.mean * s.mean + s.stdev * s.stdev)).abs() < 1e-9,
            "trial {trial}: rmse identity violation"
        );
    }
    println!("criterion 8: PASS — APE/RPE gauge invariance and rmse identity on 100 random pairs");
}

#[test]
fn criterion_9_corridor1_dataset_gated() {
    let candidates = [
        std::env::var("GROUND_CHALLENGE_CORRIDOR1").ok().map(PathBuf::from),
        Some(Path::new("datasets/corridor1").to_path_buf()),
    ];
    let Some(dir) = candidates.into_iter().flatten().find(|p| p.is_dir()) else {
        println!(
            "criterion 9: SKIPPED — Corridor1 sequence not found (set GROUND_CHALLENGE_CORRIDOR1 or place it under datasets/corridor1); criteria 1-8 constitute full acceptance"
        );
        return;
    };
    let layout = lidar_slam::dataset_io::DatasetLayout::discover(&dir).unwrap();
    let config = PipelineConfig::default();
    let out = run_slam(&layout, &config).unwrap();
    let (gt_path, gt_format) = layout.groundtruth.clone().expect("groundtruth required");
    let gt = read_groundtruth(&gt_path, gt_format).unwrap();
    let stats = ape(&out.trajectory, &gt, config.eval.max_dt, true).unwrap();
    assert!(stats.rmse <= 0.12, "Corridor1 APE rmse {:.3}", stats.rmse);
    println!("criterion 9: PASS — Corridor1 SLAM APE rmse {:.3} m ≤ 0.12 m", stats.rmse);
}

#[test]
fn box_room_circle_odometry_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let config = high_res_config();
    let layout = SyntheticWorld::new(SceneKind::BoxRoom, 100)
        .generate(&config.proj, dir.path())
        .unwrap();
    let out = run_odometry(&layout, &config).unwrap();
    assert_eq!(out.skipped, 0);
    let gt = read_groundtruth(&dir.path().join("groundtruth.txt"), GroundTruthFormat::Tum).unwrap();
    let stats = ape(&out.trajectory, &gt, config.eval.max_dt, true).unwrap();
    assert!(stats.rmse <= 0.02, "box room APE rmse {:.4}", stats.rmse);
    println!("box room circle: APE rmse {:.4} m over 100 scans", stats.rmse);
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_config();
    let data = dir.path().join("data");
    SyntheticWorld::new(SceneKind::BoxRoom, 10)
        .generate(&config.proj, &data)
        .unwrap();
    let exe = env!("CARGO_BIN_EXE_lidar-slam");
    let run = |out: &Path| {
        let status = std::process::Command::new(exe)
            .arg("odometry")
            .arg(&data)
            .arg("--out")
            .arg(out)
            .args([
                "--set", "proj.width=256",
                "--set", "proj.height=32",
                "--set", "proj.fov_up_deg=22.9",
                "--set", "proj.fov_down_deg=-34.4",
                "--set", "map.voxel_size=0.3",
                "--set", "normals.discontinuity_abs=1.5",
                "--set", "normals.discontinuity_rel=0.2",
            ])
            .status()
            .unwrap();
        assert!(status.success(), "odometry run failed");
    };
    let out_a = dir.path().join("a.txt");
    let out_b = dir.path().join("b.txt");
    run(&out_a);
    run(&out_b);
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty() && a == b, "trajectory files differ between runs");
    println!("criterion 10: PASS — repeated odometry runs are byte-identical ({} bytes)", a.len());
}
