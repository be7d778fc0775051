//! Monte Carlo validation of the density estimator.
//!
//! * [`turbid`]: 1D turbid-medium interception with constant voxel depth,
//!   bias curves of the ML and debiased estimators.
//! * [`scene`] and [`rays`]: finite triangular leaves in a single cubic voxel
//!   and the ray distributions used to probe them.
//! * [`experiments`]: the triangle-leaf bias, debiased error surface and
//!   trawling-versus-spinning experiments.
//!
//! Every random stream is keyed by `(seed, cell, trial)`, so results do not
//! depend on scheduling and reruns are bit-identical.

pub mod experiments;
pub mod rays;
pub mod scene;
pub mod turbid;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use experiments::{
    debiased_error_surface, trawl_vs_spin, triangle_bias_experiment, ErrorSurface, SurfaceConfig, TrawlSpinConfig,
    TrawlSpinTable, TriangleBiasConfig, TriangleBiasTable,
};
pub use rays::{cast_rays, RayDistribution};
pub use scene::{gen_leaf_scene, LeafScene, NormalDistributionSpec};
pub use turbid::{bias_curves, sample_turbid, BiasCurves, TurbidConfig, TurbidEstimator};

/// Trials per work unit in parallel loops. Fixed so that the reduction order
/// does not depend on the thread count.
pub(crate) const CHUNK: usize = 256;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one trial of one experiment cell.
pub fn trial_rng(seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(cell.wrapping_add(1))));
    rng.set_stream(trial);
    rng
}

/// Runs `f` for every trial in fixed-size chunks and reduces the `width`
/// returned values per trial into moments, in chunk order.
pub(crate) fn par_moments<F>(trials: usize, width: usize, f: F) -> Vec<Moments>
where
    F: Fn(u64, &mut [Moments]) + Sync,
{
    use rayon::prelude::*;
    let chunks: Vec<Vec<Moments>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                f(t as u64, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.add(c);
        }
    }
    total
}

/// Mean and standard error of a sample accumulated as sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.count += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn add(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return f64::NAN;
        }
        let mean = self.mean();
        let var = ((self.sum_sq - self.count * mean * mean) / (self.count - 1.0)).max(0.0);
        (var / self.count).sqrt()
    }
}
