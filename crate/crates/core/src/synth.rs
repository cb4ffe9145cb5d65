//! Synthetic test worlds: planar-rectangle scenes with ground-truth
//! trajectories and an exact ray-cast scan renderer.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;

use crate::dataset_io::{write_ply, write_trajectory_tum, DatasetLayout, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};
use crate::range_image::ProjectionConfig;

/// Finite rectangle: `origin + s·edge_u + t·edge_v`, `s, t ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct Rect {
    pub origin: Point3,
    pub edge_u: Vector3<f64>,
    pub edge_v: Vector3<f64>,
}

impl Rect {
    pub fn new(origin: Point3, edge_u: Vector3<f64>, edge_v: Vector3<f64>) -> Self {
        Rect {
            origin,
            edge_u,
            edge_v,
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.edge_u.cross(&self.edge_v).normalize()
    }

    /// Ray-rectangle intersection distance, if the hit is in front of the ray
    /// origin and inside the rectangle bounds.
    pub fn raycast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.edge_u.cross(&self.edge_v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.origin - origin)) / denom;
        if t <= 1e-9 {
            return None;
        }
        let hit = origin + dir * t - self.origin;
        // Project onto the (possibly non-orthogonal) edge basis.
        let uu = self.edge_u.dot(&self.edge_u);
        let vv = self.edge_v.dot(&self.edge_v);
        let uv = self.edge_u.dot(&self.edge_v);
        let hu = hit.dot(&self.edge_u);
        let hv = hit.dot(&self.edge_v);
        let det = uu * vv - uv * uv;
        let s = (hu * vv - hv * uv) / det;
        let r = (hv * uu - hu * uv) / det;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&r) {
            Some(t)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    StraightCorridor,
    ZigzagCorridor,
    BoxRoom,
    OutdoorBlocks,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight_corridor" => Ok(SceneKind::StraightCorridor),
            "zigzag_corridor" => Ok(SceneKind::ZigzagCorridor),
            "box_room" => Ok(SceneKind::BoxRoom),
            "outdoor_blocks" => Ok(SceneKind::OutdoorBlocks),
            other => Err(Error::Config(format!("unknown scene {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub kind: SceneKind,
    pub surfaces: Vec<Rect>,
    /// Ground-truth sensor poses, one per scan.
    pub trajectory: Vec<Pose>,
}

/// Axis-aligned box as six rectangles with outward edge orientation.
fn push_box(surfaces: &mut Vec<Rect>, min: Point3, max: Point3) {
    let d = max - min;
    let (dx, dy, dz) = (
        Vector3::new(d.x, 0.0, 0.0),
        Vector3::new(0.0, d.y, 0.0),
        Vector3::new(0.0, 0.0, d.z),
    );
    surfaces.push(Rect::new(min, dy, dz)); // x = min.x
    surfaces.push(Rect::new(min + dx, dy, dz)); // x = max.x
    surfaces.push(Rect::new(min, dx, dz)); // y = min.y
    surfaces.push(Rect::new(min + dy, dx, dz)); // y = max.y
    surfaces.push(Rect::new(min, dx, dy)); // z = min.z
    surfaces.push(Rect::new(min + dz, dx, dy)); // z = max.z
}

/// Vertical wall from (x0,y0) to (x1,y1) over z in [z0, z1].
fn wall(x0: f64, y0: f64, x1: f64, y1: f64, z0: f64, z1: f64) -> Rect {
    Rect::new(
        Point3::new(x0, y0, z0),
        Vector3::new(x1 - x0, y1 - y0, 0.0),
        Vector3::new(0.0, 0.0, z1 - z0),
    )
}

fn floor_rect(x0: f64, y0: f64, x1: f64, y1: f64, z: f64) -> Rect {
    Rect::new(
        Point3::new(x0, y0, z),
        Vector3::new(x1 - x0, 0.0, 0.0),
        Vector3::new(0.0, y1 - y0, 0.0),
    )
}

/// Piecewise-linear path through `waypoints` at constant step length, with
/// yaw following the segment direction.
fn path_trajectory(waypoints: &[(f64, f64)], height: f64, n_scans: usize) -> Vec<Pose> {
    assert!(waypoints.len() >= 2 && n_scans >= 1);
    let mut cum = vec![0.0];
    for w in waypoints.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        cum.push(cum.last().unwrap() + (dx * dx + dy * dy).sqrt());
    }
    let total = *cum.last().unwrap();
    let mut poses = Vec::with_capacity(n_scans);
    for k in 0..n_scans {
        let s = if n_scans == 1 {
            0.0
        } else {
            total * k as f64 / (n_scans - 1) as f64
        };
        let mut seg = cum.len() - 2;
        for i in 0..cum.len() - 1 {
            if s <= cum[i + 1] || i == cum.len() - 2 {
                seg = i;
                break;
            }
        }
        let seg_len = (cum[seg + 1] - cum[seg]).max(1e-12);
        let f = ((s - cum[seg]) / seg_len).clamp(0.0, 1.0);
        let (x0, y0) = waypoints[seg];
        let (x1, y1) = waypoints[seg + 1];
        let pos = Vector3::new(x0 + f * (x1 - x0), y0 + f * (y1 - y0), height);
        let yaw = (y1 - y0).atan2(x1 - x0);
        let mut pose = Pose::from_yaw(yaw);
        pose.translation = pos;
        poses.push(pose);
    }
    poses
}

impl SyntheticWorld {
    pub fn new(kind: SceneKind, n_scans: usize) -> Self {
        let mut surfaces = Vec::new();
        let trajectory = match kind {
            SceneKind::BoxRoom => {
                // 12 x 10 x 3 room, sensor circling the centre at 1.2 m.
                surfaces.push(floor_rect(-6.0, -5.0, 6.0, 5.0, 0.0));
                surfaces.push(floor_rect(-6.0, -5.0, 6.0, 5.0, 3.0));
                surfaces.push(wall(-6.0, -5.0, 6.0, -5.0, 0.0, 3.0));
                surfaces.push(wall(6.0, -5.0, 6.0, 5.0, 0.0, 3.0));
                surfaces.push(wall(6.0, 5.0, -6.0, 5.0, 0.0, 3.0));
                surfaces.push(wall(-6.0, 5.0, -6.0, -5.0, 0.0, 3.0));
                (0..n_scans)
                    .map(|k| {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / n_scans.max(1) as f64;
                        let mut pose = Pose::from_yaw(a + std::f64::consts::FRAC_PI_2);
                        pose.translation = Vector3::new(2.5 * a.cos(), 2.5 * a.sin(), 1.2);
                        pose
                    })
                    .collect()
            }
            SceneKind::StraightCorridor => {
                surfaces.push(floor_rect(-2.0, -1.5, 32.0, 1.5, 0.0));
                surfaces.push(floor_rect(-2.0, -1.5, 32.0, 1.5, 2.5));
                surfaces.push(wall(-2.0, -1.5, 32.0, -1.5, 0.0, 2.5));
                surfaces.push(wall(-2.0, 1.5, 32.0, 1.5, 0.0, 2.5));
                surfaces.push(wall(-2.0, -1.5, -2.0, 1.5, 0.0, 2.5));
                surfaces.push(wall(32.0, -1.5, 32.0, 1.5, 0.0, 2.5));
                path_trajectory(&[(0.0, 0.0), (30.0, 0.0)], 1.2, n_scans)
            }
            SceneKind::ZigzagCorridor => {
                // Closed Z-shaped corridor, 3 m wide, extruded to 2.5 m.
                let outline = [
                    (-1.5, -1.5),
                    (16.5, -1.5),
                    (16.5, 10.5),
                    (31.5, 10.5),
                    (31.5, 13.5),
                    (13.5, 13.5),
                    (13.5, 1.5),
                    (-1.5, 1.5),
                ];
                for i in 0..outline.len() {
                    let (x0, y0) = outline[i];
                    let (x1, y1) = outline[(i + 1) % outline.len()];
                    surfaces.push(wall(x0, y0, x1, y1, 0.0, 2.5));
                }
                surfaces.push(floor_rect(-1.5, -1.5, 31.5, 13.5, 0.0));
                surfaces.push(floor_rect(-1.5, -1.5, 31.5, 13.5, 2.5));
                path_trajectory(&[(0.0, 0.0), (15.0, 0.0), (15.0, 12.0), (30.0, 12.0)], 1.2, n_scans)
            }
            SceneKind::OutdoorBlocks => {
                surfaces.push(floor_rect(-30.0, -30.0, 60.0, 30.0, 0.0));
                push_box(&mut surfaces, Point3::new(6.0, 4.0, 0.0), Point3::new(10.0, 8.0, 4.0));
                push_box(&mut surfaces, Point3::new(14.0, -9.0, 0.0), Point3::new(19.0, -4.0, 6.0));
                push_box(&mut surfaces, Point3::new(26.0, 3.0, 0.0), Point3::new(30.0, 9.0, 3.0));
                push_box(&mut surfaces, Point3::new(34.0, -7.0, 0.0), Point3::new(40.0, -2.0, 5.0));
                path_trajectory(&[(0.0, 0.0), (45.0, 0.0)], 1.5, n_scans)
            }
        };
        SyntheticWorld {
            kind,
            surfaces,
            trajectory,
        }
    }

    /// Exact ray-cast from `pose` through every pixel of `proj`; returned
    /// points are in the sensor frame. Rays sample at a 0.3-bin offset so the
    /// projected pixel is unambiguous under round-to-nearest binning.
    pub fn render_scan(&self, pose: &Pose, proj: &ProjectionConfig) -> Vec<Point3> {
        let mut points = Vec::new();
        let dt = proj.delta_theta();
        let dp = proj.delta_phi();
        for v in 0..proj.height {
            let phi = proj.phi_min + (v as f64 + 0.3) * dp;
            for u in 0..proj.width {
                let theta = proj.theta_min + (u as f64 + 0.3) * dt;
                let dir_sensor =
                    Vector3::new(phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin());
                let dir_world = pose.rotate(&dir_sensor);
                let mut best = f64::INFINITY;
                for rect in &self.surfaces {
                    if let Some(t) = rect.raycast(&pose.translation, &dir_world) {
                        if t < best {
                            best = t;
                        }
                    }
                }
                if best >= proj.r_min && best <= proj.r_max {
                    points.push(dir_sensor * best);
                }
            }
        }
        points
    }

    /// Writes one PLY per scan plus a ground-truth trajectory, returning the
    /// resulting dataset layout. Scan timestamps are index × 0.1 s and are
    /// encoded in the file names.
    pub fn generate(&self, proj: &ProjectionConfig, out_dir: &Path) -> Result<DatasetLayout> {
        std::fs::create_dir_all(out_dir)?;
        let mut gt = Trajectory::default();
        let mut paths: Vec<PathBuf> = Vec::new();
        for (k, pose) in self.trajectory.iter().enumerate() {
            let t = k as f64 * 0.1;
            let points = self.render_scan(pose, proj);
            // Zero-padded seconds so lexicographic order equals time order.
            let path = out_dir.join(format!("{t:014.6}.ply"));
            write_ply(&path, &points, None)?;
            paths.push(path);
            gt.push(t, *pose)?;
        }
        write_trajectory_tum(&gt, &out_dir.join("groundtruth.txt"))?;
        DatasetLayout::discover(out_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_proj() -> ProjectionConfig {
        ProjectionConfig {
            width: 256,
            height: 32,
            theta_min: -std::f64::consts::PI,
            theta_max: std::f64::consts::PI,
            phi_min: -0.6,
            phi_max: 0.4,
            r_min: 0.3,
            r_max: 80.0,
        }
    }

    #[test]
    fn raycast_hits_facing_plane() {
        let rect = wall(2.0, -5.0, 2.0, 5.0, -5.0, 5.0);
        let t = rect
            .raycast(&Point3::zeros(), &Vector3::x())
            .expect("hit expected");
        assert!((t - 2.0).abs() < 1e-12);
        assert!(rect.raycast(&Point3::zeros(), &-Vector3::x()).is_none());
        // Miss beyond the rectangle extent.
        assert!(rect
            .raycast(&Point3::new(0.0, 7.0, 0.0), &Vector3::x())
            .is_none());
    }

    #[test]
    fn points_lie_on_a_surface() {
        let world = SyntheticWorld::new(SceneKind::BoxRoom, 4);
        let proj = small_proj();
        let pose = world.trajectory[1];
        let scan = world.render_scan(&pose, &proj);
        assert!(scan.len() > 1000, "got {} points", scan.len());
        for p in &scan {
            let w = pose.apply(p);
            let dist = world
                .surfaces
                .iter()
                .map(|rect| rect.normal().dot(&(w - rect.origin)).abs())
                .fold(f64::INFINITY, f64::min)
                .abs();
            assert!(dist < 1e-9, "off-surface by {dist}");
        }
    }

    #[test]
    fn raycast_equivariance_under_sensor_pose() {
        // Scan from pose P equals scan taken at identity in a world moved by
        // P^-1 (same sensor-frame geometry).
        let world = SyntheticWorld::new(SceneKind::BoxRoom, 8);
        let proj = small_proj();
        let pose = world.trajectory[3];
        let inv = pose.inverse();
        let moved = SyntheticWorld {
            kind: world.kind,
            surfaces: world
                .surfaces
                .iter()
                .map(|r| Rect::new(inv.apply(&r.origin), inv.rotate(&r.edge_u), inv.rotate(&r.edge_v)))
                .collect(),
            trajectory: vec![Pose::identity()],
        };
        let a = world.render_scan(&pose, &proj);
        let b = moved.render_scan(&Pose::identity(), &proj);
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert!((pa - pb).norm() < 1e-9);
        }
    }

    #[test]
    fn generate_counts_and_groundtruth() {
        let dir = tempfile::tempdir().unwrap();
        let world = SyntheticWorld::new(SceneKind::BoxRoom, 10);
        let proj = small_proj();
        let layout = world.generate(&proj, dir.path()).unwrap();
        assert_eq!(layout.scan_paths.len(), 10);
        let gt = crate::dataset_io::read_groundtruth(
            &dir.path().join("groundtruth.txt"),
            crate::dataset_io::GroundTruthFormat::Tum,
        )
        .unwrap();
        assert_eq!(gt.len(), 10);
        assert!((layout.timestamp(3) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn scene_names_parse() {
        for (name, kind) in [
            ("box_room", SceneKind::BoxRoom),
            ("straight_corridor", SceneKind::StraightCorridor),
            ("zigzag_corridor", SceneKind::ZigzagCorridor),
            ("outdoor_blocks", SceneKind::OutdoorBlocks),
        ] {
            assert_eq!(name.parse::<SceneKind>().unwrap(), kind);
        }
        assert!("garage".parse::<SceneKind>().is_err());
    }
}
