use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

pub(crate) const SLOPE_RANGE: (f64, f64) = (2.0, 10.0);
pub(crate) const CENTER_RANGE: (f64, f64) = (0.2, 0.8);

/// Slice of a logistic curve over `[0, 1]`, shifted and scaled so that it
/// rises from exactly 0 at `ν = 0` to exactly 1 at `ν = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSlice {
    pub slope: f64,
    pub center: f64,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl SigmoidSlice {
    pub(crate) fn draw(rng: &mut SimRng) -> Self {
        let slope = rng.random_range(SLOPE_RANGE.0..=SLOPE_RANGE.1);
        let center = rng.random_range(CENTER_RANGE.0..=CENTER_RANGE.1);
        Self { slope, center }
    }

    /// Normalized slice value; clamps `ν` into `[0, 1]`.
    pub fn eval(&self, nu: f64) -> f64 {
        let nu = nu.clamp(0.0, 1.0);
        let lo = logistic(self.slope * (0.0 - self.center));
        let hi = logistic(self.slope * (1.0 - self.center));
        (logistic(self.slope * (nu - self.center)) - lo) / (hi - lo)
    }
}
