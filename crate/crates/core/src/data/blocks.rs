use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// One resampled block of a larger cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// `(floor(x / size), floor(y / size))` of the source cell.
    pub cell: (i64, i64),
    pub cloud: PointCloud,
    /// Source point index of every output point.
    pub source: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSample {
    pub blocks: Vec<Block>,
    /// Cells dropped for holding fewer than a quarter of `points_per_block`.
    pub dropped: usize,
}

/// Splits a cloud into `block_size × block_size` columns in x–y.
///
/// Blocks with at least `points_per_block / 4` points are resampled to
/// exactly `points_per_block` (with replacement only when short) and
/// shifted so their x–y centroid sits at the origin; z is kept. Blocks come
/// out in ascending cell order.
pub fn block_sample(cloud: &PointCloud, block_size: f64, points_per_block: usize, seed: u64) -> Result<BlockSample> {
    if !(block_size > 0.0) {
        return Err(Error::invalid(format!("block size must be positive, got {block_size}")));
    }
    if points_per_block == 0 {
        return Err(Error::invalid("points_per_block must be positive"));
    }
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        let key = ((p[0] / block_size).floor() as i64, (p[1] / block_size).floor() as i64);
        cells.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut dropped = 0;
    for (cell, members) in cells {
        if members.len() * 4 < points_per_block {
            dropped += 1;
            continue;
        }
        let source: Vec<usize> = if members.len() >= points_per_block {
            let mut pick = sample(&mut rng, members.len(), points_per_block).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|j| members[j]).collect()
        } else {
            let mut s = members.clone();
            s.extend((members.len()..points_per_block).map(|_| members[rng.gen_range(0..members.len())]));
            s
        };
        let n = members.len() as f64;
        let cx = members.iter().map(|&i| cloud.positions()[i][0]).sum::<f64>() / n;
        let cy = members.iter().map(|&i| cloud.positions()[i][1]).sum::<f64>() / n;
        let mut out = cloud.select(&source)?;
        out = out.translated([-cx, -cy, 0.0])?;
        blocks.push(Block {
            cell,
            cloud: out,
            source,
        });
    }
    Ok(BlockSample { blocks, dropped })
}
