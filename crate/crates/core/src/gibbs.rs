//! Systematic-scan Gibbs sampling over the full joint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, GraphicalModel};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Sweeps discarded before the first retained sample.
    pub burn_in: usize,
    /// Sweeps between retained samples.
    pub thin: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            burn_in: 100,
            thin: 10,
            seed: 0,
        }
    }
}

/// Draws `n` samples. The chain starts from a uniform random assignment and each sweep
/// resamples variables in index order from their full conditionals.
pub fn gibbs_sample(model: &GraphicalModel, cfg: &GibbsConfig, n: usize) -> Result<Vec<Assignment>> {
    if cfg.thin == 0 {
        return Err(Error::config("gibbs thin must be at least 1"));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut x = Assignment::new(model.cardinalities().iter().map(|&c| rng.random_range(0..c)).collect());
    let mut weights = Vec::new();
    let mut out = Vec::with_capacity(n);
    let mut sweep = 0usize;
    let mut run = |x: &mut Assignment, sweep: usize, rng: &mut _| -> Result<()> {
        for var in 0..model.num_vars() {
            resample(model, x, var, sweep, &mut weights, rng)?;
        }
        Ok(())
    };
    for _ in 0..cfg.burn_in {
        run(&mut x, sweep, &mut rng)?;
        sweep += 1;
    }
    while out.len() < n {
        for _ in 0..cfg.thin {
            run(&mut x, sweep, &mut rng)?;
            sweep += 1;
        }
        out.push(x.clone());
    }
    Ok(out)
}

fn resample<R: Rng>(
    model: &GraphicalModel,
    x: &mut Assignment,
    var: usize,
    sweep: usize,
    weights: &mut Vec<f64>,
    rng: &mut R,
) -> Result<()> {
    let card = model.cardinality(var);
    weights.clear();
    weights.extend((0..card).map(|v| model.local_sum(x.values(), var, v)));
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Sampling { var, sweep });
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut u = rng.random::<f64>() * total;
    let mut pick = card - 1;
    for (v, &w) in weights.iter().enumerate() {
        if u < w {
            pick = v;
            break;
        }
        u -= w;
    }
    // never pick a zero-weight tail value through rounding
    while weights[pick] == 0.0 {
        pick -= 1;
    }
    x.set(var, pick);
    Ok(())
}
