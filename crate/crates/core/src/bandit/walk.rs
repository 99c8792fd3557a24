use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SimError, ARMS};

/// Drift parameters of a reflected Gaussian probability walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub step_std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            step_std: 0.03,
            lo: 0.1,
            hi: 0.9,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(SimError::Config(format!(
                "walk bounds must satisfy 0 ≤ lo < hi ≤ 1, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.step_std >= 0.0 && self.step_std.is_finite()) {
            return Err(SimError::Config(format!("step_std must be ≥ 0, got {}", self.step_std)));
        }
        Ok(())
    }

    /// Folds `x` back into `[lo, hi]` by mirroring at the bounds.
    pub fn reflect(&self, mut x: f64) -> f64 {
        let width = self.hi - self.lo;
        // one fold per bound crossing; large steps are folded modulo 2·width
        let period = 2.0 * width;
        let mut off = (x - self.lo).rem_euclid(period);
        if off > width {
            off = period - off;
        }
        x = self.lo + off;
        x.clamp(self.lo, self.hi)
    }
}

/// Hidden per-arm reward probabilities for one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityWalk {
    pub probs: Vec<[f64; ARMS]>,
    pub seed: u64,
    pub params: WalkParams,
}

impl ProbabilityWalk {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Independent reflected random walk per arm, started uniformly in
/// `[lo, hi]`.
pub fn generate_walk(seed: u64, steps: usize, params: WalkParams) -> Result<ProbabilityWalk, SimError> {
    params.validate()?;
    if steps == 0 {
        return Err(SimError::Config("walk needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.step_std).map_err(|e| SimError::Config(e.to_string()))?;
    let mut current = [0.0; ARMS];
    for p in current.iter_mut() {
        *p = rng.random_range(params.lo..=params.hi);
    }
    let mut probs = Vec::with_capacity(steps);
    probs.push(current);
    for _ in 1..steps {
        for p in current.iter_mut() {
            *p = params.reflect(*p + noise.sample(&mut rng));
        }
        probs.push(current);
    }
    Ok(ProbabilityWalk { probs, seed, params })
}

/// Bernoulli reward for pulling `choice` at step `t`.
pub fn draw_reward<R: Rng + ?Sized>(walk: &ProbabilityWalk, t: usize, choice: usize, rng: &mut R) -> Result<u8, SimError> {
    let row = walk
        .probs
        .get(t)
        .ok_or_else(|| SimError::Usage(format!("step {t} outside walk of length {}", walk.len())))?;
    let p = *row
        .get(choice)
        .ok_or_else(|| SimError::Usage(format!("arm {choice} out of range")))?;
    Ok(u8::from(rng.random::<f64>() < p))
}
