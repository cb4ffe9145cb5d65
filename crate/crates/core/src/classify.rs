//! Rule-based point classification from the 3x3 normal neighborhood.
//!
//! Precedence is Edge > Ground > Roof > Wall > Unknown: high angular variance
//! in the window overrides any plane majority.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::normals::NormalMap;
use crate::range_image::RangeImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointLabel {
    Ground,
    Roof,
    Wall,
    Edge,
    Unknown,
}

impl PointLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            PointLabel::Ground => 0,
            PointLabel::Roof => 1,
            PointLabel::Wall => 2,
            PointLabel::Edge => 3,
            PointLabel::Unknown => 4,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PointLabel::Ground),
            1 => Some(PointLabel::Roof),
            2 => Some(PointLabel::Wall),
            3 => Some(PointLabel::Edge),
            4 => Some(PointLabel::Unknown),
            _ => None,
        }
    }

    /// Ground, roof and wall points carry a plane constraint.
    pub fn is_planar(self) -> bool {
        matches!(self, PointLabel::Ground | PointLabel::Roof | PointLabel::Wall)
    }
}

/// A cloud with parallel per-point labels and optional normals.
#[derive(Clone, Debug, Default)]
pub struct LabeledCloud {
    pub points: Vec<Point3>,
    pub labels: Vec<PointLabel>,
    pub normals: Vec<Option<Vector3<f64>>>,
}

impl LabeledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifyConfig {
    /// Mean pairwise normal angle above which a neighborhood is an edge.
    pub edge_angle_rad: f64,
    /// Fraction of window normals that must agree for a plane label.
    pub majority_fraction: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            edge_angle_rad: 0.26,
            majority_fraction: 2.0 / 3.0,
        }
    }
}

/// Which component of a normal dominates, if any. Ties count toward nothing.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Dominant {
    X,
    Y,
    ZUp,
    ZDown,
    None,
}

fn dominant(n: &Vector3<f64>) -> Dominant {
    let (ax, ay, az) = (n.x.abs(), n.y.abs(), n.z.abs());
    if az > ax && az > ay {
        if n.z > 0.0 {
            Dominant::ZUp
        } else {
            Dominant::ZDown
        }
    } else if ax > ay && ax > az {
        Dominant::X
    } else if ay > ax && ay > az {
        Dominant::Y
    } else {
        Dominant::None
    }
}

/// Classifies a neighborhood of valid normals.
pub(crate) fn classify_window(normals: &[Vector3<f64>], config: &ClassifyConfig) -> PointLabel {
    let k = normals.len();
    if k < 3 {
        return PointLabel::Unknown;
    }
    let mut angle_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            angle_sum += normals[i].dot(&normals[j]).clamp(-1.0, 1.0).acos();
            pairs += 1;
        }
    }
    if angle_sum / pairs as f64 > config.edge_angle_rad {
        return PointLabel::Edge;
    }
    let needed = (config.majority_fraction * k as f64).ceil() as usize;
    let mut up = 0usize;
    let mut down = 0usize;
    let mut lateral = 0usize;
    for n in normals {
        match dominant(n) {
            Dominant::ZUp => up += 1,
            Dominant::ZDown => down += 1,
            Dominant::X | Dominant::Y => lateral += 1,
            Dominant::None => {}
        }
    }
    if up >= needed {
        PointLabel::Ground
    } else if down >= needed {
        PointLabel::Roof
    } else if lateral >= needed {
        PointLabel::Wall
    } else {
        PointLabel::Unknown
    }
}

/// Labels every point of the source cloud. Points without a pixel, or whose
/// pixel has no valid normal, stay Unknown.
pub fn classify(
    cloud: &[Point3],
    image: &RangeImage,
    normals: &NormalMap,
    config: &ClassifyConfig,
) -> Result<LabeledCloud> {
    if image.width() != normals.width() || image.height() != normals.height() {
        return Err(Error::Contract(format!(
            "image {}x{} does not match normal map {}x{}",
            image.width(),
            image.height(),
            normals.width(),
            normals.height()
        )));
    }
    let mut out = LabeledCloud {
        points: cloud.to_vec(),
        labels: vec![PointLabel::Unknown; cloud.len()],
        normals: vec![None; cloud.len()],
    };
    let mut window = Vec::with_capacity(9);
    for v in 0..image.height() {
        for u in 0..image.width() {
            let Some(point_idx) = image.point_index(u, v) else { continue };
            let Some(center_n) = normals.get(u, v) else { continue };
            window.clear();
            for dv in -1i32..=1 {
                let nv = v as i32 + dv;
                if nv < 0 || nv as usize >= image.height() {
                    continue;
                }
                for du in -1isize..=1 {
                    let Some(nu) = image.neighbor_u(u, du) else { continue };
                    if let Some(n) = normals.get(nu, nv as usize) {
                        window.push(n);
                    }
                }
            }
            let label = classify_window(&window, config);
            out.labels[point_idx] = label;
            if label != PointLabel::Unknown {
                out.normals[point_idx] = Some(center_n);
            }
        }
    }
    Ok(out)
}

/// Exact per-label counts, indexed by `PointLabel::as_u8`.
pub fn label_stats(cloud: &LabeledCloud) -> [usize; 5] {
    let mut hist = [0usize; 5];
    for l in &cloud.labels {
        hist[l.as_u8() as usize] += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_up_is_ground() {
        let normals = vec![Vector3::new(0.0, 0.0, 1.0); 9];
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Ground);
    }

    #[test]
    fn uniform_down_is_roof() {
        let normals = vec![Vector3::new(0.0, 0.0, -1.0); 9];
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Roof);
    }

    #[test]
    fn uniform_lateral_is_wall() {
        let normals = vec![Vector3::new(-1.0, 0.0, 0.0); 9];
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Wall);
    }

    #[test]
    fn mixed_orthogonal_is_edge() {
        // 5 x-normals and 4 y-normals: 20 of the 36 pairs are at 90 degrees,
        // mean pairwise angle = 20 * 90 / 36 = 50 degrees > 15.
        let mut normals = vec![Vector3::new(1.0, 0.0, 0.0); 5];
        normals.extend(vec![Vector3::new(0.0, 1.0, 0.0); 4]);
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Edge);
    }

    #[test]
    fn small_support_is_unknown() {
        let normals = vec![Vector3::new(0.0, 0.0, 1.0); 2];
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Unknown);
    }

    #[test]
    fn component_tie_counts_toward_nothing() {
        // |n_x| == |n_z| exactly: no dominant component, no majority.
        let n = Vector3::new(1.0, 0.0, 1.0).normalize();
        let normals = vec![n; 9];
        assert_eq!(classify_window(&normals, &ClassifyConfig::default()), PointLabel::Unknown);
    }

    #[test]
    fn rotation_about_z_preserves_labels() {
        let rot = crate::geometry::Pose::from_yaw(std::f64::consts::FRAC_PI_2);
        let cases: Vec<Vec<Vector3<f64>>> = vec![
            vec![Vector3::new(0.0, 0.0, 1.0); 9],
            vec![Vector3::new(0.0, 0.0, -1.0); 9],
            vec![Vector3::new(1.0, 0.0, 0.0); 9],
            {
                let mut v = vec![Vector3::new(1.0, 0.0, 0.0); 5];
                v.extend(vec![Vector3::new(0.0, 1.0, 0.0); 4]);
                v
            },
        ];
        let cfg = ClassifyConfig::default();
        for normals in cases {
            let rotated: Vec<_> = normals.iter().map(|n| rot.rotate(n)).collect();
            assert_eq!(classify_window(&normals, &cfg), classify_window(&rotated, &cfg));
        }
    }

    #[test]
    fn stats_count_labels() {
        let empty = LabeledCloud::default();
        assert_eq!(label_stats(&empty), [0; 5]);

        let cloud = LabeledCloud {
            points: vec![Point3::zeros(); 5],
            labels: vec![
                PointLabel::Ground,
                PointLabel::Ground,
                PointLabel::Ground,
                PointLabel::Wall,
                PointLabel::Wall,
            ],
            normals: vec![None; 5],
        };
        assert_eq!(label_stats(&cloud), [3, 0, 2, 0, 0]);
    }

    #[test]
    fn stats_total_matches_cloud_size() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(0..200);
            let cloud = LabeledCloud {
                points: vec![Point3::zeros(); n],
                labels: (0..n)
                    .map(|_| PointLabel::from_u8(rng.gen_range(0..5)).unwrap())
                    .collect(),
                normals: vec![None; n],
            };
            assert_eq!(label_stats(&cloud).iter().sum::<usize>(), n);
        }
    }
}
