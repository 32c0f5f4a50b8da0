//! Synthetic query/reference corpora with known ground truth.
//!
//! Frames are i.i.d. standard normal vectors; a "planted" occurrence is an
//! exact copy of the query frames at a chosen reference offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::features::FeatureMatrix;
use crate::{Error, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
        .collect()
}

pub fn random_features(rng: &mut impl Rng, n: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::from_rows(&random_rows(rng, n, dim)).expect("non-empty shape")
}

/// Copies every query frame into `reference` starting at each offset.
pub fn plant(query: &FeatureMatrix, reference: &FeatureMatrix, offsets: &[usize]) -> Result<FeatureMatrix> {
    if query.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            query: query.dim(),
            reference: reference.dim(),
        });
    }
    let mut rows: Vec<Vec<f32>> = reference.frames().map(<[f32]>::to_vec).collect();
    for &off in offsets {
        if off + query.n_frames() > rows.len() {
            return Err(Error::InvalidParams(format!(
                "copy at {off} overruns a {}-frame reference",
                rows.len()
            )));
        }
        for (i, frame) in query.frames().enumerate() {
            rows[off + i] = frame.to_vec();
        }
    }
    let mut out = FeatureMatrix::from_rows(&rows)?;
    out.frame_hop_s = reference.frame_hop_s;
    out.frame_offset_s = reference.frame_offset_s;
    Ok(out)
}

/// `k` sorted, pairwise non-overlapping copy offsets at least `min_gap`
/// frames apart, each leaving room for a full `n`-frame copy in `m`.
pub fn spread_offsets(rng: &mut impl Rng, k: usize, n: usize, m: usize, min_gap: usize) -> Result<Vec<usize>> {
    let needed = k * n + k.saturating_sub(1) * min_gap;
    if needed > m {
        return Err(Error::InvalidParams(format!(
            "{k} copies of {n} frames with gap {min_gap} do not fit in {m}"
        )));
    }
    // Distribute the free frames into k+1 slots, then lay copies out.
    let slack = m - needed;
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    Ok(cuts
        .iter()
        .enumerate()
        .map(|(i, &c)| c + i * (n + min_gap))
        .collect())
}

/// A generated trial with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedTrial {
    pub query: FeatureMatrix,
    pub reference: FeatureMatrix,
    pub offsets: Vec<usize>,
}

/// Query of `n` random frames and an `m`-frame random reference holding `k`
/// exact copies (none when `k == 0`).
pub fn planted_trial(seed: u64, n: usize, m: usize, dim: usize, k: usize) -> Result<PlantedTrial> {
    let mut rng = rng(seed);
    let query = random_features(&mut rng, n, dim);
    let background = random_features(&mut rng, m, dim);
    let offsets = spread_offsets(&mut rng, k, n, m, 20)?;
    let reference = plant(&query, &background, &offsets)?;
    Ok(PlantedTrial {
        query,
        reference,
        offsets,
    })
}
