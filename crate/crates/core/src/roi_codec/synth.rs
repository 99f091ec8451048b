use super::grid::{ch, BevGrid, GridSpec};
use crate::scene_sim::Observation;
use crate::seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random unit vector identifying object `index` of an observation.
fn signature(rng_seed: u64, index: usize, dims: usize) -> Vec<f32> {
    if dims == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(rng_seed, &[index as u64]));
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// Rasterizes an observation into a dense BEV feature grid.
///
/// Every cell whose center falls inside a box footprint receives that box's
/// full channel tuple. Where footprints overlap the higher-confidence box
/// owns the whole cell vector.
pub fn synthesize_grid(obs: &Observation, spec: &GridSpec, rng_seed: u64) -> BevGrid {
    let mut grid = BevGrid::zeros(*spec);
    let sig_dims = spec.d - ch::SIGNATURE;
    for (i, b) in obs.objects.iter().enumerate() {
        if !(b.confidence > 0.0) {
            continue;
        }
        let sig = signature(rng_seed, i, sig_dims);
        let (s, c) = b.heading.sin_cos();
        let conf = b.confidence as f32;
        for (h, w) in spec.footprint(b) {
            if grid.confidence(h, w) >= conf {
                continue;
            }
            let (cx, cy) = spec.cell_center(h, w);
            let cell = grid.cell_mut(h, w);
            cell[ch::CONFIDENCE] = conf;
            cell[ch::OFFSET_X] = ((b.x - cx) / spec.cell) as f32;
            cell[ch::OFFSET_Y] = ((b.y - cy) / spec.cell) as f32;
            cell[ch::LENGTH] = b.length as f32;
            cell[ch::WIDTH] = b.width as f32;
            cell[ch::COS] = c as f32;
            cell[ch::SIN] = s as f32;
            cell[ch::SIGNATURE..].copy_from_slice(&sig);
        }
    }
    grid
}
