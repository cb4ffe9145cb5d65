//! World-frame voxel hash map with per-point labels, plus adaptive
//! downsampling and class-wise nearest-neighbor correspondence search.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::classify::{LabeledCloud, PointLabel};
use crate::geometry::{Point3, Pose};

#[derive(Clone, Copy, Debug)]
pub struct MapPoint {
    pub position: Point3,
    pub label: PointLabel,
    pub normal: Option<Vector3<f64>>,
}

/// Planar correspondence: matched pair plus the target's surface normal.
#[derive(Clone, Copy, Debug)]
pub struct PlanarPair {
    pub source: Point3,
    pub target: Point3,
    pub normal: Vector3<f64>,
    pub weight: f64,
}

/// Point-to-point correspondence for edge and unknown points.
#[derive(Clone, Copy, Debug)]
pub struct PointPair {
    pub source: Point3,
    pub target: Point3,
    pub weight: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CorrespondenceSet {
    pub planar: Vec<PlanarPair>,
    pub nonplanar: Vec<PointPair>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.planar.len() + self.nonplanar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planar.is_empty() && self.nonplanar.is_empty()
    }
}

pub type VoxelKey = (i32, i32, i32);

fn voxel_of(p: &Point3, size: f64) -> VoxelKey {
    (
        (p.x / size).floor() as i32,
        (p.y / size).floor() as i32,
        (p.z / size).floor() as i32,
    )
}

#[derive(Clone, Debug)]
pub struct VoxelMap {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub max_map_range: f64,
    storage: HashMap<VoxelKey, Vec<MapPoint>>,
}

impl VoxelMap {
    pub fn new(voxel_size: f64, max_points_per_voxel: usize, max_map_range: f64) -> Self {
        VoxelMap {
            voxel_size,
            max_points_per_voxel,
            max_map_range,
            storage: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.storage.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn contains_voxel(&self, key: &VoxelKey) -> bool {
        self.storage.contains_key(key)
    }

    pub fn points(&self) -> impl Iterator<Item = &MapPoint> {
        self.storage.values().flatten()
    }

    /// Transforms the cloud to world frame, appends up to the per-voxel cap,
    /// then evicts voxels beyond `max_map_range` of the current position.
    pub fn insert(&mut self, cloud: &LabeledCloud, pose: &Pose) {
        for i in 0..cloud.len() {
            let world = pose.apply(&cloud.points[i]);
            let key = voxel_of(&world, self.voxel_size);
            let bucket = self.storage.entry(key).or_default();
            if bucket.len() < self.max_points_per_voxel {
                bucket.push(MapPoint {
                    position: world,
                    label: cloud.labels[i],
                    normal: cloud.normals[i].map(|n| pose.rotate(&n)),
                });
            }
        }
        let center = pose.translation;
        let size = self.voxel_size;
        let max_range = self.max_map_range;
        self.storage.retain(|key, _| {
            let c = Vector3::new(
                (key.0 as f64 + 0.5) * size,
                (key.1 as f64 + 0.5) * size,
                (key.2 as f64 + 0.5) * size,
            );
            (c - center).norm() <= max_range
        });
    }

    /// Nearest stored neighbor of `query` restricted to `pred`, searched over
    /// enough voxel shells to cover `max_dist`. Ties break toward the
    /// lexicographically smallest target coordinates so the result is
    /// independent of hash iteration order.
    fn nearest(
        &self,
        query: &Point3,
        max_dist: f64,
        pred: impl Fn(&MapPoint) -> bool,
    ) -> Option<&MapPoint> {
        let key = voxel_of(query, self.voxel_size);
        let radius = ((max_dist / self.voxel_size).ceil() as i32).max(1);
        let mut best: Option<(&MapPoint, f64)> = None;
        for dx in -radius..=radius {
            for dy in -radius..=radius {
                for dz in -radius..=radius {
                    let k = (key.0 + dx, key.1 + dy, key.2 + dz);
                    let Some(bucket) = self.storage.get(&k) else { continue };
                    for mp in bucket {
                        if !pred(mp) {
                            continue;
                        }
                        let d = (mp.position - query).norm();
                        if d > max_dist {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((b, bd)) => {
                                d < bd
                                    || (d == bd
                                        && lex_less(&mp.position, &b.position))
                            }
                        };
                        if better {
                            best = Some((mp, d));
                        }
                    }
                }
            }
        }
        best.map(|(mp, _)| mp)
    }

    /// Class-wise correspondence search. Planar-labeled source points match
    /// same-label targets first and fall back to any label; edge and unknown
    /// points match any label. Sources are stored untransformed so the solver
    /// can re-apply its current pose estimate.
    pub fn find_correspondences(
        &self,
        cloud: &LabeledCloud,
        guess: &Pose,
        max_dist: f64,
    ) -> CorrespondenceSet {
        let mut set = CorrespondenceSet::default();
        for i in 0..cloud.len() {
            let source = cloud.points[i];
            let query = guess.apply(&source);
            let label = cloud.labels[i];
            if label.is_planar() {
                let same = self.nearest(&query, max_dist, |mp| mp.label == label);
                match same.or_else(|| self.nearest(&query, max_dist, |_| true)) {
                    Some(mp) => match mp.normal {
                        Some(n) => set.planar.push(PlanarPair {
                            source,
                            target: mp.position,
                            normal: n,
                            weight: 1.0,
                        }),
                        // Fallback target without a stored normal cannot
                        // carry a plane constraint.
                        None => set.nonplanar.push(PointPair {
                            source,
                            target: mp.position,
                            weight: 1.0,
                        }),
                    },
                    None => {}
                }
            } else if let Some(mp) = self.nearest(&query, max_dist, |_| true) {
                set.nonplanar.push(PointPair {
                    source,
                    target: mp.position,
                    weight: 1.0,
                });
            }
        }
        set
    }
}

fn lex_less(a: &Point3, b: &Point3) -> bool {
    (a.x, a.y, a.z) < (b.x, b.y, b.z)
}

/// Adaptive voxel downsampling: planar labels thin at `voxel_size`, edge and
/// unknown points at half that, keeping the point nearest each voxel center.
pub fn downsample(cloud: &LabeledCloud, voxel_size: f64) -> LabeledCloud {
    assert!(voxel_size > 0.0);
    // Two independent grids keyed by (is_planar, voxel coordinate).
    let mut winners: HashMap<(bool, VoxelKey), usize> = HashMap::new();
    for i in 0..cloud.len() {
        let planar = cloud.labels[i].is_planar();
        let size = if planar { voxel_size } else { voxel_size / 2.0 };
        let key = voxel_of(&cloud.points[i], size);
        let center = Vector3::new(
            (key.0 as f64 + 0.5) * size,
            (key.1 as f64 + 0.5) * size,
            (key.2 as f64 + 0.5) * size,
        );
        let dist = (cloud.points[i] - center).norm();
        winners
            .entry((planar, key))
            .and_modify(|w| {
                let size_w = size;
                let wc = &cloud.points[*w];
                let wd = (wc
                    - Vector3::new(
                        (key.0 as f64 + 0.5) * size_w,
                        (key.1 as f64 + 0.5) * size_w,
                        (key.2 as f64 + 0.5) * size_w,
                    ))
                .norm();
                if dist < wd {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = winners.into_values().collect();
    keep.sort_unstable();
    LabeledCloud {
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
        labels: keep.iter().map(|&i| cloud.labels[i]).collect(),
        normals: keep.iter().map(|&i| cloud.normals[i]).collect(),
    }
}
