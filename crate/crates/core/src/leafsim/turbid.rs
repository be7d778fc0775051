//! Turbid medium in one dimension: exponential interception distances
//! censored at a constant voxel depth.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::{par_moments, trial_rng};
use crate::density::debias_factor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbidConfig {
    /// True interception rate, 1/m.
    pub lambda: f64,
    /// Rays per trial.
    pub n: usize,
    /// Voxel depth, m. `f64::INFINITY` gives uncensored samples.
    pub y: f64,
    pub trials: usize,
    pub seed: u64,
}

impl TurbidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.n >= 1 && self.y > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid turbid config {self:?}")));
        }
        Ok(())
    }
}

/// One trial: `m` interceptions and the penetration depths of all rays.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbidTrial {
    pub m: usize,
    pub depths: Vec<f64>,
}

impl TurbidTrial {
    pub fn sum_x(&self) -> f64 {
        self.depths.iter().sum()
    }
}

pub(crate) fn draw_trial<R: Rng + ?Sized>(lambda: f64, n: usize, y: f64, rng: &mut R) -> TurbidTrial {
    let exp = Exp::new(lambda).expect("positive rate");
    let mut m = 0;
    let depths = (0..n)
        .map(|_| {
            let x: f64 = exp.sample(rng);
            if x <= y {
                m += 1;
                x
            } else {
                y
            }
        })
        .collect();
    TurbidTrial { m, depths }
}

/// Draws `config.trials` independent trials.
pub fn sample_turbid(config: &TurbidConfig) -> Result<Vec<TurbidTrial>> {
    config.validate()?;
    Ok((0..config.trials)
        .into_par_iter()
        .map(|t| {
            draw_trial(
                config.lambda,
                config.n,
                config.y,
                &mut trial_rng(config.seed, 0, t as u64),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurbidEstimator {
    /// Posterior mode `max((m − 1)/Σx, 0)`.
    MlMode,
    /// `d(n) m / Σx`.
    Debiased,
    /// `(n − 1)/Σx`, valid for uncensored samples.
    Uncensored,
}

impl TurbidEstimator {
    pub fn name(self) -> &'static str {
        match self {
            TurbidEstimator::MlMode => "ml-mode",
            TurbidEstimator::Debiased => "debiased",
            TurbidEstimator::Uncensored => "uncensored",
        }
    }

    pub fn estimate(self, trial: &TurbidTrial) -> f64 {
        let n = trial.depths.len();
        let sum = trial.sum_x();
        if sum <= 0.0 {
            return 0.0;
        }
        match self {
            TurbidEstimator::MlMode => ((trial.m as f64 - 1.0) / sum).max(0.0),
            TurbidEstimator::Debiased => debias_factor(n as u32) * trial.m as f64 / sum,
            TurbidEstimator::Uncensored => (n as f64 - 1.0) / sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasCell {
    pub lambda: f64,
    pub n: usize,
    pub estimator: TurbidEstimator,
    /// Mean of `(λ̂ − λ)/λ`.
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasCurves {
    pub cells: Vec<BiasCell>,
}

impl BiasCurves {
    pub fn get(&self, lambda: f64, n: usize, estimator: TurbidEstimator) -> Option<&BiasCell> {
        self.cells
            .iter()
            .find(|c| c.lambda == lambda && c.n == n && c.estimator == estimator)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,n,estimator,mean_normalised_error,std_error\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                c.lambda,
                c.n,
                c.estimator.name(),
                c.mean_error,
                c.std_error
            ));
        }
        s
    }
}

/// Mean normalised error of each estimator over a `(λ, n)` grid with voxel
/// depth `y`. All estimators in a cell share the same trials.
pub fn bias_curves(
    lambdas: &[f64],
    ns: &[usize],
    y: f64,
    trials: usize,
    estimators: &[TurbidEstimator],
    seed: u64,
) -> Result<BiasCurves> {
    let mut cells = Vec::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (ni, &n) in ns.iter().enumerate() {
            TurbidConfig {
                lambda,
                n,
                y,
                trials,
                seed,
            }
            .validate()?;
            let cell_id = (li * ns.len() + ni) as u64;
            let total = par_moments(trials, estimators.len(), |t, acc| {
                let trial = draw_trial(lambda, n, y, &mut trial_rng(seed, cell_id, t));
                for (e, m) in estimators.iter().zip(acc.iter_mut()) {
                    m.push((e.estimate(&trial) - lambda) / lambda);
                }
            });
            for (e, m) in estimators.iter().zip(&total) {
                cells.push(BiasCell {
                    lambda,
                    n,
                    estimator: *e,
                    mean_error: m.mean(),
                    std_error: m.std_error(),
                });
            }
        }
    }
    Ok(BiasCurves { cells })
}

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.1, 0.2, 0.5, 1.0, 2.0, 3.0];
pub const DEFAULT_NS: [usize; 5] = [2, 4, 8, 16, 32];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_medium_intercepts_everything() {
        let trials = sample_turbid(&TurbidConfig {
            lambda: 1e6,
            n: 20,
            y: 1.0,
            trials: 10,
            seed: 1,
        })
        .unwrap();
        for t in trials {
            assert_eq!(t.m, 20);
            assert!(t.depths.iter().all(|&x| x < 1e-3));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let c = TurbidConfig {
            lambda: 0.0,
            n: 2,
            y: 1.0,
            trials: 1,
            seed: 0,
        };
        assert!(sample_turbid(&c).is_err());
    }

    #[test]
    fn estimators_on_fixed_trial() {
        let t = TurbidTrial {
            m: 2,
            depths: vec![0.5, 0.5, 1.0, 1.0],
        };
        assert!((TurbidEstimator::MlMode.estimate(&t) - 1.0 / 3.0).abs() < 1e-12);
        assert!((TurbidEstimator::Debiased.estimate(&t) - 0.75 * 2.0 / 3.0).abs() < 1e-12);
        assert!((TurbidEstimator::Uncensored.estimate(&t) - 1.0).abs() < 1e-12);
    }
}
