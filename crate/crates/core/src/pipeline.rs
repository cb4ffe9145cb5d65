//! Per-scan odometry loop, loop-closure SLAM wrapper, and evaluation entry
//! points used by the command-line tool.

use std::fmt::Write as _;
use std::path::Path;

use crate::classify::classify;
use crate::config::{EvalConfig, PipelineConfig};
use crate::dataset_io::{read_groundtruth, read_scan, DatasetLayout, Trajectory};
use crate::error::{Error, Result};
use crate::evaluation::{ape, rpe, ErrorStats};
use crate::geometry::{Point3, Pose};
use crate::normals::compute_normals;
use crate::pose_graph::{odometry_information, PoseGraph};
use crate::range_image::project;
use crate::registration::{predict_initial_guess, register, RegistrationReport};
use crate::scan_context::{make_descriptor, DescriptorDatabase};
use crate::voxel_map::{downsample, VoxelMap};

/// Planar-residual RMS ceiling for accepting a loop closure. A genuine revisit
/// registers well inside this; descriptor aliases between distinct places
/// leave a large residual and are dropped.
const LOOP_FIT_RMS: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ScanDiagnostics {
    pub scan: usize,
    pub timestamp: f64,
    /// Descending eigenvalues of the translational Hessian block (zeros when
    /// unavailable, e.g. a skipped scan or weighting disabled).
    pub lambda: [f64; 3],
    pub alpha: f64,
    pub n_planar: usize,
    pub n_point: usize,
    pub iterations: usize,
    pub min_weight: f64,
    pub mean_weight: f64,
    pub skipped: bool,
}

impl ScanDiagnostics {
    fn skipped(scan: usize, timestamp: f64) -> Self {
        ScanDiagnostics {
            scan,
            timestamp,
            lambda: [0.0; 3],
            alpha: 0.0,
            n_planar: 0,
            n_point: 0,
            iterations: 0,
            min_weight: 0.0,
            mean_weight: 0.0,
            skipped: true,
        }
    }

    fn from_report(scan: usize, timestamp: f64, report: &RegistrationReport) -> Self {
        let (lambda, min_w, mean_w) = match &report.degeneracy {
            Some(d) => (
                [d.eigenvalues[0], d.eigenvalues[1], d.eigenvalues[2]],
                d.min_weight(),
                d.mean_weight(),
            ),
            None => ([0.0; 3], 1.0, 1.0),
        };
        ScanDiagnostics {
            scan,
            timestamp,
            lambda,
            alpha: report.alpha,
            n_planar: report.n_planar,
            n_point: report.n_point,
            iterations: report.iterations,
            min_weight: min_w,
            mean_weight: mean_w,
            skipped: false,
        }
    }
}

pub fn diagnostics_csv(rows: &[ScanDiagnostics]) -> String {
    let mut out = String::from(
        "scan,timestamp,lambda1,lambda2,lambda3,alpha,n_planar,n_point,iterations,min_weight,mean_weight,skipped\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{},{},{},{},{},{},{},{},{}",
            r.scan,
            r.timestamp,
            r.lambda[0],
            r.lambda[1],
            r.lambda[2],
            r.alpha,
            r.n_planar,
            r.n_point,
            r.iterations,
            r.min_weight,
            r.mean_weight,
            r.skipped as u8
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct LoopEvent {
    pub query_keyframe: usize,
    pub match_keyframe: usize,
    pub distance: f64,
    pub shift: usize,
}

pub fn loops_csv(events: &[LoopEvent]) -> String {
    let mut out = String::from("query,match,distance,shift\n");
    for e in events {
        writeln!(
            out,
            "{},{},{},{}",
            e.query_keyframe, e.match_keyframe, e.distance, e.shift
        )
        .unwrap();
    }
    out
}

pub struct OdometryOutput {
    pub trajectory: Trajectory,
    pub map: VoxelMap,
    pub diagnostics: Vec<ScanDiagnostics>,
    pub skipped: usize,
}

pub struct SlamOutput {
    pub trajectory: Trajectory,
    pub odometry: Trajectory,
    pub graph: PoseGraph,
    pub loops: Vec<LoopEvent>,
    pub map: VoxelMap,
    pub diagnostics: Vec<ScanDiagnostics>,
}

struct ScanState {
    poses: Vec<Pose>,
    map: VoxelMap,
    diagnostics: Vec<ScanDiagnostics>,
    skipped: usize,
}

/// Processes one raw scan: project, estimate normals, classify, downsample,
/// register against the map (scan 0 seeds the map at the guess pose), insert.
/// Registration failure skips the scan at the constant-velocity guess without
/// inserting.
fn step(
    state: &mut ScanState,
    raw: &[Point3],
    scan: usize,
    timestamp: f64,
    config: &PipelineConfig,
) -> Result<Option<crate::classify::LabeledCloud>> {
    let guess = predict_initial_guess(&state.poses);
    let labeled = (|| -> Result<crate::classify::LabeledCloud> {
        let image = project(raw, &config.proj)?;
        let normals = compute_normals(&image, &config.normals);
        let cloud = classify(raw, &image, &normals, &config.classify)?;
        Ok(downsample(&cloud, config.map.voxel_size))
    })();
    let labeled = match labeled {
        Ok(c) if !c.is_empty() => c,
        _ => {
            state.skipped += 1;
            state.poses.push(guess);
            state.diagnostics.push(ScanDiagnostics::skipped(scan, timestamp));
            return Ok(None);
        }
    };
    if state.map.is_empty() {
        state.map.insert(&labeled, &guess);
        state.poses.push(guess);
        state.diagnostics.push(ScanDiagnostics {
            skipped: false,
            ..ScanDiagnostics::skipped(scan, timestamp)
        });
        return Ok(Some(labeled));
    }
    match register(&labeled, &state.map, &guess, &config.icp) {
        Ok((pose, report)) => {
            state.map.insert(&labeled, &pose);
            state.poses.push(pose);
            state
                .diagnostics
                .push(ScanDiagnostics::from_report(scan, timestamp, &report));
            Ok(Some(labeled))
        }
        Err(Error::RegistrationFailure { .. }) | Err(Error::EmptyInput(_)) => {
            state.skipped += 1;
            state.poses.push(guess);
            state.diagnostics.push(ScanDiagnostics::skipped(scan, timestamp));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn finish(state: ScanState, layout: &DatasetLayout) -> Result<OdometryOutput> {
    let n = layout.scan_paths.len();
    if state.skipped * 10 > n {
        return Err(Error::RunFailed(format!(
            "{} of {} scans skipped (over 10%)",
            state.skipped, n
        )));
    }
    let mut trajectory = Trajectory::default();
    for (k, pose) in state.poses.iter().enumerate() {
        trajectory.push(layout.timestamp(k), *pose)?;
    }
    Ok(OdometryOutput {
        trajectory,
        map: state.map,
        diagnostics: state.diagnostics,
        skipped: state.skipped,
    })
}

pub fn run_odometry(layout: &DatasetLayout, config: &PipelineConfig) -> Result<OdometryOutput> {
    config.validate()?;
    if layout.scan_paths.is_empty() {
        return Err(Error::EmptyInput("dataset has no scans"));
    }
    let mut state = ScanState {
        poses: Vec::new(),
        map: VoxelMap::new(
            config.map.voxel_size,
            config.map.max_points_per_voxel,
            config.map.max_map_range,
        ),
        diagnostics: Vec::new(),
        skipped: 0,
    };
    for (k, path) in layout.scan_paths.iter().enumerate() {
        let raw = read_scan(path, layout.format)?;
        step(&mut state, &raw, k, layout.timestamp(k), config)?;
    }
    finish(state, layout)
}

pub fn run_slam(layout: &DatasetLayout, config: &PipelineConfig) -> Result<SlamOutput> {
    config.validate()?;
    if !config.loop_closure_enabled {
        return Err(Error::Config("slam requires loop_closure.enabled".into()));
    }
    if layout.scan_paths.is_empty() {
        return Err(Error::EmptyInput("dataset has no scans"));
    }
    let mut state = ScanState {
        poses: Vec::new(),
        map: VoxelMap::new(
            config.map.voxel_size,
            config.map.max_points_per_voxel,
            config.map.max_map_range,
        ),
        diagnostics: Vec::new(),
        skipped: 0,
    };
    let mut db = DescriptorDatabase::new(config.sc.exclusion_window);
    let mut graph: Option<PoseGraph> = None;
    // Per keyframe: scan index, odometry pose, downsampled labeled cloud.
    let mut keyframes: Vec<(usize, Pose, crate::classify::LabeledCloud)> = Vec::new();
    let mut loops = Vec::new();
    let sector_angle = 2.0 * std::f64::consts::PI / config.sc.n_sector as f64;

    for (k, path) in layout.scan_paths.iter().enumerate() {
        let raw = read_scan(path, layout.format)?;
        let labeled = step(&mut state, &raw, k, layout.timestamp(k), config)?;
        let pose = *state.poses.last().unwrap();

        let labeled = match labeled {
            Some(c) => c,
            None => continue, // skipped scans never become keyframes
        };
        let is_keyframe = match keyframes.last() {
            None => true,
            Some((last_k, last_pose, _)) => {
                k - last_k >= config.sc.keyframe_every
                    || (pose.translation - last_pose.translation).norm() >= config.sc.keyframe_dist
            }
        };
        if !is_keyframe {
            continue;
        }
        let kf_id = keyframes.len();
        match &mut graph {
            None => graph = Some(PoseGraph::new(pose)),
            Some(g) => {
                let (_, prev_pose, _) = keyframes.last().unwrap();
                let meas = prev_pose.inverse().compose(&pose);
                g.add_odometry_edge(
                    kf_id - 1,
                    kf_id,
                    meas,
                    odometry_information(meas.translation.norm()),
                )?;
            }
        }
        // Descriptor from the full raw cloud for place-recognition fidelity.
        let descriptor =
            make_descriptor(&raw, config.sc.n_ring, config.sc.n_sector, config.sc.max_radius);
        if let Some(cand) =
            db.query(&descriptor, config.sc.num_candidates, config.sc.accept_threshold)
        {
            let (_, _, match_cloud) = &keyframes[cand.id];
            // Yaw difference implied by the best cyclic sector shift, wrapped
            // to (-pi, pi].
            let mut s = cand.shift as isize;
            if s > config.sc.n_sector as isize / 2 {
                s -= config.sc.n_sector as isize;
            }
            let yaw_guess = Pose::from_yaw(s as f64 * sector_angle);
            let mut match_map = VoxelMap::new(
                config.map.voxel_size,
                config.map.max_points_per_voxel,
                config.map.max_map_range,
            );
            match_map.insert(match_cloud, &Pose::identity());
            if let Ok((rel, report)) = register(&labeled, &match_map, &yaw_guess, &config.icp) {
                // Geometric verification: a real revisit registers tightly;
                // descriptor aliases (distinct places that look alike) do not.
                let fit_ok = report.converged
                    && report.n_planar + report.n_point >= 100
                    && report.rms_planar <= LOOP_FIT_RMS
                    && (report.n_point == 0 || report.rms_point <= config.map.voxel_size);
                if !fit_ok {
                    db.insert(descriptor, kf_id)?;
                    keyframes.push((k, pose, labeled));
                    continue;
                }
                // rel maps query sensor frame into the match keyframe frame,
                // i.e. rel = X_match^-1 X_query, which is exactly the edge
                // measurement for from = match, to = query.
                let g = graph.as_mut().unwrap();
                g.add_loop_edge(cand.id, kf_id, rel, report.hessian)?;
                loops.push(LoopEvent {
                    query_keyframe: kf_id,
                    match_keyframe: cand.id,
                    distance: cand.distance,
                    shift: cand.shift,
                });
            }
        }
        db.insert(descriptor, kf_id)?;
        keyframes.push((k, pose, labeled));
    }

    let poses = state.poses.clone();
    let odometry = finish(state, layout)?;
    let mut graph = graph.ok_or(Error::RunFailed("no keyframes produced".into()))?;
    if !loops.is_empty() {
        graph.optimize(config.graph.max_iterations, config.graph.convergence_eps)?;
    }

    // Propagate keyframe corrections to every scan: each scan inherits the
    // correction of the most recent keyframe at or before it.
    let mut trajectory = Trajectory::default();
    let mut kf_cursor = 0usize;
    let mut correction = Pose::identity();
    for (k, pose) in poses.iter().enumerate() {
        while kf_cursor < keyframes.len() && keyframes[kf_cursor].0 <= k {
            let opt = *graph.node(kf_cursor).unwrap();
            correction = opt.compose(&keyframes[kf_cursor].1.inverse());
            kf_cursor += 1;
        }
        trajectory.push(layout.timestamp(k), correction.compose(pose))?;
    }

    Ok(SlamOutput {
        trajectory,
        odometry: odometry.trajectory,
        graph,
        loops,
        map: odometry.map,
        diagnostics: odometry.diagnostics,
    })
}

/// APE and RPE between two TUM trajectory files.
pub fn evaluate(est_path: &Path, ref_path: &Path, eval: &EvalConfig) -> Result<(ErrorStats, ErrorStats)> {
    let est = read_groundtruth(est_path, crate::dataset_io::GroundTruthFormat::Tum)?;
    let reference = read_groundtruth(ref_path, crate::dataset_io::GroundTruthFormat::Tum)?;
    let a = ape(&est, &reference, eval.max_dt, eval.align)?;
    let r = rpe(&est, &reference, eval.max_dt, eval.rpe_delta)?;
    Ok((a, r))
}

/// Writes the map as a labeled binary PLY.
pub fn export_map_ply(map: &VoxelMap, path: &Path) -> Result<()> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for p in map.points() {
        points.push(p.position);
        labels.push(p.label.as_u8());
    }
    // Deterministic file content regardless of hash-map iteration order.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.x.partial_cmp(&pb.x)
            .unwrap()
            .then(pa.y.partial_cmp(&pb.y).unwrap())
            .then(pa.z.partial_cmp(&pb.z).unwrap())
            .then(labels[a].cmp(&labels[b]))
    });
    let points: Vec<_> = order.iter().map(|&i| points[i]).collect();
    let labels: Vec<_> = order.iter().map(|&i| labels[i]).collect();
    crate::dataset_io::write_ply(path, &points, Some(&labels))
}
