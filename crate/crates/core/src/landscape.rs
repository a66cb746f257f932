//! Energy-surface samples of a Hopfield net for external plotting.
//!
//! The surface over `{−1, +1}^N` is sliced along two axes: `u` walks from one
//! anchor state to another by flipping their differing bits in a seeded order,
//! and `v` adds a growing number of extra random flips to each `u`-state.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hopfield::HopfieldNet;
use crate::patterns::{flip_bits, BipolarPattern, PatternSet};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Fraction of the anchor-to-anchor path walked.
    pub u: f64,
    /// Number of extra random flips.
    pub v: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub parametrization: String,
    pub net_id: String,
    pub anchor_ids: [String; 2],
    pub dim: usize,
    pub anchor_distance: usize,
    pub resolution_u: usize,
    pub resolution_v: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub metadata: GridMetadata,
    /// Row-major: all `v` for the first `u`, then the next `u`, and so on.
    pub points: Vec<GridPoint>,
}

impl SurfaceGrid {
    pub fn with_anchor_ids(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.metadata.anchor_ids = [a.into(), b.into()];
        self
    }

    pub fn point(&self, u_idx: usize, v_idx: usize) -> &GridPoint {
        &self.points[u_idx * self.metadata.resolution_v + v_idx]
    }

    pub fn min_energy(&self) -> f64 {
        self.points.iter().map(|p| p.energy).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,energy\n");
        for p in &self.points {
            let _ = writeln!(s, "{:?},{:?},{:?}", p.u, p.v, p.energy);
        }
        s
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }
}

/// Stable identifier of a net's weights.
pub fn net_id(net: &HopfieldNet) -> String {
    format!("{:016x}", seed::fnv1a64(net.to_text().as_bytes()))
}

/// Samples `resolution × resolution` states between `anchor_a` (`u = 0`) and
/// `anchor_b` (`u = 1`).
///
/// Row `u_idx` flips the first `round(u_idx · d / (resolution − 1))` of the `d`
/// differing positions, taken in a seeded order; column `v_idx` additionally
/// flips the first `v_idx` positions of a seeded permutation of `0..N`.
pub fn geodesic_grid(
    net: &HopfieldNet,
    anchor_a: &BipolarPattern,
    anchor_b: &BipolarPattern,
    resolution: usize,
    seed: u64,
) -> Result<SurfaceGrid> {
    let n = net.dim();
    check_dim(n, anchor_a.len())?;
    check_dim(n, anchor_b.len())?;
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    if resolution - 1 > n {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} needs {} extra flips but the dimension is {n}",
            resolution - 1
        )));
    }

    let mut rng = seed::rng(seed);
    let mut differing: Vec<usize> = (0..n).filter(|&i| anchor_a.get(i) != anchor_b.get(i)).collect();
    differing.shuffle(&mut rng);
    let mut noise: Vec<usize> = (0..n).collect();
    noise.shuffle(&mut rng);
    let d = differing.len();
    let steps = resolution - 1;

    let points = (0..resolution * resolution)
        .into_par_iter()
        .map(|cell| {
            let (u_idx, v_idx) = (cell / resolution, cell % resolution);
            let walked = (u_idx * d + steps / 2) / steps;
            let mut state = flip_bits(anchor_a, &differing[..walked].iter().copied().collect())?;
            let extra: BTreeSet<usize> = noise[..v_idx].iter().copied().collect();
            state = flip_bits(&state, &extra)?;
            Ok(GridPoint {
                u: u_idx as f64 / steps as f64,
                v: v_idx as f64,
                energy: net.energy(&state)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SurfaceGrid {
        metadata: GridMetadata {
            parametrization: "geodesic-plus-noise: u = fraction of anchor-differing bits flipped (seeded order), v = extra random flips (seeded order)".into(),
            net_id: net_id(net),
            anchor_ids: ["a".into(), "b".into()],
            dim: n,
            anchor_distance: d,
            resolution_u: resolution,
            resolution_v: resolution,
            seed,
        },
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinDepth {
    pub pattern: usize,
    pub energy: f64,
    pub mean_neighbor_energy: f64,
    /// `mean_neighbor_energy − energy`.
    pub gap: f64,
}

/// Patterns up to this dimension use all `N` single-flip neighbors.
pub const EXHAUSTIVE_NEIGHBOR_DIM: usize = 64;

/// Energy gap between each stored pattern and its single-flip neighborhood.
///
/// All `N` neighbors are evaluated when `N ≤ 64`; otherwise
/// `samples_per_pattern` neighbors are drawn with replacement from a stream
/// seeded by `derive_indexed(seed, μ)`.
pub fn basin_depth_report(
    net: &HopfieldNet,
    ps: &PatternSet,
    samples_per_pattern: usize,
    seed: u64,
) -> Result<Vec<BasinDepth>> {
    let n = net.dim();
    check_dim(n, ps.dim())?;
    if n > EXHAUSTIVE_NEIGHBOR_DIM && samples_per_pattern == 0 {
        return Err(Error::InvalidArgument("samples_per_pattern must be positive".into()));
    }
    ps.patterns()
        .par_iter()
        .enumerate()
        .map(|(mu, xi)| {
            let indices: Vec<usize> = if n <= EXHAUSTIVE_NEIGHBOR_DIM {
                (0..n).collect()
            } else {
                let mut rng = seed::rng(seed::derive_indexed(seed, mu as u64));
                (0..samples_per_pattern).map(|_| rng.gen_range(0..n)).collect()
            };
            let energy = net.energy(xi)?;
            let mut total = 0.0;
            for &i in &indices {
                total += net.energy(&flip_bits(xi, &BTreeSet::from([i]))?)?;
            }
            let mean_neighbor_energy = total / indices.len() as f64;
            Ok(BasinDepth {
                pattern: mu,
                energy,
                mean_neighbor_energy,
                gap: mean_neighbor_energy - energy,
            })
        })
        .collect()
}

pub fn mean_gap(report: &[BasinDepth]) -> f64 {
    if report.is_empty() {
        return 0.0;
    }
    report.iter().map(|b| b.gap).sum::<f64>() / report.len() as f64
}

pub fn basin_depth_csv(report: &[BasinDepth]) -> String {
    let mut s = String::from("pattern,energy,mean_neighbor_energy,gap\n");
    for b in report {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", b.pattern, b.energy, b.mean_neighbor_energy, b.gap);
    }
    s
}
