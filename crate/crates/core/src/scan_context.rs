//! Polar max-height descriptors for place recognition.
//!
//! Each scan becomes an `n_ring x n_sector` matrix of maximum point heights.
//! A per-ring occupancy vector (the ring key) is shift-invariant and drives
//! coarse candidate retrieval; the full match minimizes column-wise cosine
//! distance over all cyclic sector shifts, which also recovers the relative
//! yaw between the two scans.

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Stored heights are offset so below-sensor returns stay positive; cosine
/// distance needs non-negative magnitudes.
pub const HEIGHT_OFFSET: f64 = 2.0;

#[derive(Clone, Copy, Debug)]
pub struct ScanContextConfig {
    pub n_ring: usize,
    pub n_sector: usize,
    pub max_radius: f64,
    pub num_candidates: usize,
    pub accept_threshold: f64,
    /// Number of most recent keyframes excluded from queries.
    pub exclusion_window: usize,
    /// Keyframe cadence: every K-th scan...
    pub keyframe_every: usize,
    /// ...or after this much translation, whichever comes first.
    pub keyframe_dist: f64,
}

impl Default for ScanContextConfig {
    fn default() -> Self {
        ScanContextConfig {
            n_ring: 20,
            n_sector: 60,
            max_radius: 80.0,
            num_candidates: 10,
            accept_threshold: 0.2,
            exclusion_window: 50,
            keyframe_every: 10,
            keyframe_dist: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScanContextDescriptor {
    pub n_ring: usize,
    pub n_sector: usize,
    /// Ring-major max-height matrix; empty bins are 0.
    matrix: Vec<f64>,
    /// Per-ring occupied-cell fraction, in [0, 1].
    pub ring_key: Vec<f64>,
}

impl ScanContextDescriptor {
    pub fn cell(&self, ring: usize, sector: usize) -> f64 {
        self.matrix[ring * self.n_sector + sector]
    }
}

pub fn make_descriptor(
    cloud: &[Point3],
    n_ring: usize,
    n_sector: usize,
    max_radius: f64,
) -> ScanContextDescriptor {
    assert!(n_ring >= 1 && n_sector >= 1 && max_radius > 0.0);
    let mut matrix = vec![0.0; n_ring * n_sector];
    for p in cloud {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        if rho >= max_radius {
            continue;
        }
        let ring = ((rho / max_radius) * n_ring as f64) as usize;
        let azimuth = p.y.atan2(p.x);
        let sector =
            ((((azimuth + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)) * n_sector as f64)
                as usize)
                .min(n_sector - 1);
        let height = (p.z + HEIGHT_OFFSET).max(0.0);
        let cell = &mut matrix[ring * n_sector + sector];
        if height > *cell {
            *cell = height;
        }
    }
    let ring_key = (0..n_ring)
        .map(|r| {
            let occupied = (0..n_sector)
                .filter(|&s| matrix[r * n_sector + s] > 0.0)
                .count();
            occupied as f64 / n_sector as f64
        })
        .collect();
    ScanContextDescriptor {
        n_ring,
        n_sector,
        matrix,
        ring_key,
    }
}

/// Minimum mean column-wise cosine distance over cyclic sector shifts and the
/// shift achieving it (smallest shift on ties). Columns that are all-zero in
/// either descriptor are skipped; if every column is skipped the distance is 1.
pub fn descriptor_distance(
    a: &ScanContextDescriptor,
    b: &ScanContextDescriptor,
) -> Result<(f64, usize)> {
    if a.n_ring != b.n_ring || a.n_sector != b.n_sector {
        return Err(Error::Contract("descriptor dimensions do not match".into()));
    }
    let ns = a.n_sector;
    let nr = a.n_ring;
    let mut best = (f64::INFINITY, 0usize);
    for shift in 0..ns {
        let mut sum = 0.0;
        let mut cols = 0usize;
        for c in 0..ns {
            let bc = (c + shift) % ns;
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for r in 0..nr {
                let av = a.cell(r, c);
                let bv = b.cell(r, bc);
                dot += av * bv;
                na += av * av;
                nb += bv * bv;
            }
            if na <= 0.0 || nb <= 0.0 {
                continue;
            }
            sum += 1.0 - dot / (na.sqrt() * nb.sqrt());
            cols += 1;
        }
        let d = if cols == 0 { 1.0 } else { sum / cols as f64 };
        if d < best.0 {
            best = (d, shift);
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug)]
pub struct LoopCandidate {
    pub id: usize,
    pub distance: f64,
    pub shift: usize,
}

/// Append-only descriptor store with ring-key pre-filtering.
#[derive(Clone, Debug, Default)]
pub struct DescriptorDatabase {
    entries: Vec<(usize, ScanContextDescriptor)>,
    pub exclusion_window: usize,
}

impl DescriptorDatabase {
    pub fn new(exclusion_window: usize) -> Self {
        DescriptorDatabase {
            entries: Vec::new(),
            exclusion_window,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries currently visible to queries.
    pub fn indexed_len(&self) -> usize {
        self.entries.len().saturating_sub(self.exclusion_window)
    }

    pub fn insert(&mut self, descriptor: ScanContextDescriptor, id: usize) -> Result<()> {
        if let Some((last_id, _)) = self.entries.last() {
            if id <= *last_id {
                return Err(Error::Contract(format!(
                    "keyframe ids must be strictly increasing (got {id} after {last_id})"
                )));
            }
        }
        self.entries.push((id, descriptor));
        Ok(())
    }

    /// Two-phase retrieval: ring-key nearest neighbors, then full descriptor
    /// distance, accepting only below the threshold.
    pub fn query(
        &self,
        descriptor: &ScanContextDescriptor,
        num_candidates: usize,
        accept_threshold: f64,
    ) -> Option<LoopCandidate> {
        let visible = self.indexed_len();
        if visible == 0 {
            return None;
        }
        let mut scored: Vec<(f64, usize)> = self.entries[..visible]
            .iter()
            .enumerate()
            .map(|(idx, (_, d))| {
                let dist: f64 = d
                    .ring_key
                    .iter()
                    .zip(descriptor.ring_key.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (dist, idx)
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best: Option<LoopCandidate> = None;
        for &(_, idx) in scored.iter().take(num_candidates) {
            let (id, stored) = &self.entries[idx];
            let (dist, shift) = descriptor_distance(descriptor, stored).ok()?;
            if dist < accept_threshold && best.map_or(true, |b| dist < b.distance) {
                best = Some(LoopCandidate {
                    id: *id,
                    distance: dist,
                    shift,
                });
            }
        }
        best
    }
}
