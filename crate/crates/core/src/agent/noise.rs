use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Rejection attempts before a truncated-normal draw falls back to clamping.
pub const TRUNCATION_ATTEMPTS: usize = 100;

/// Constant exploration noise for a warmup phase, then exponential decay
/// that reaches `final_sigma` on the last episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub warmup_episodes: usize,
    pub warmup_sigma: f64,
    pub decay_episodes: usize,
    pub final_sigma: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            warmup_episodes: 100,
            warmup_sigma: 0.5,
            decay_episodes: 300,
            final_sigma: 0.01,
        }
    }
}

impl NoiseSchedule {
    pub fn total_episodes(&self) -> usize {
        self.warmup_episodes + self.decay_episodes
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_sigma >= 0.0 && self.warmup_sigma.is_finite()) {
            return Err(Error::domain("warmup_sigma", self.warmup_sigma, "[0, inf)"));
        }
        if !(self.final_sigma > 0.0 && self.final_sigma <= self.warmup_sigma) {
            return Err(Error::domain("final_sigma", self.final_sigma, "(0, warmup_sigma]"));
        }
        Ok(())
    }

    /// `sigma_0 * (sigma_f / sigma_0)^((e - E_w) / (E_d - 1))` after warmup, so
    /// the final episode `E_w + E_d - 1` gets exactly `sigma_f`.
    pub fn sigma_for_episode(&self, e: usize) -> Result<f64> {
        let total = self.total_episodes();
        if e >= total {
            return Err(Error::Index {
                what: "episode",
                index: e,
                valid: format!("0..{total}"),
            });
        }
        if e < self.warmup_episodes {
            return Ok(self.warmup_sigma);
        }
        if self.decay_episodes == 1 {
            return Ok(self.final_sigma);
        }
        let progress = (e - self.warmup_episodes) as f64 / (self.decay_episodes - 1) as f64;
        Ok(self.warmup_sigma * (self.final_sigma / self.warmup_sigma).powf(progress))
    }
}

/// One draw from `N(mu, sigma^2)` restricted to `[0, 1]`, by rejection from
/// the parent normal. After [`TRUNCATION_ATTEMPTS`] misses the last draw is
/// clamped.
pub fn truncated_normal(mu: f64, sigma: f64, rng: &mut Rng) -> f64 {
    if sigma <= 0.0 || !sigma.is_finite() {
        return mu.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mu, sigma).expect("finite positive sigma");
    let mut x = mu;
    for _ in 0..TRUNCATION_ATTEMPTS {
        x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
    x.clamp(0.0, 1.0)
}
