//! ABC indicator kernels.
//!
//! A simulated pseudo-observation `u` gets weight one when it falls inside
//! the ball around the actual observation `y`, and zero otherwise.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary acceptance of a simulated observation against the actual one.
pub trait Acceptance<O> {
    fn accepts(&self, simulated: &O, observed: &O) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BallMode {
    /// `|u - y| / max(|y|, floor) <= epsilon`
    #[default]
    Relative,
    /// `|u - y| <= epsilon`
    Absolute,
}

pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcKernel {
    epsilon: f64,
    mode: BallMode,
    relative_floor: f64,
}

impl AbcKernel {
    pub fn new(epsilon: f64, mode: BallMode, relative_floor: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(relative_floor >= 0.0) || !relative_floor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "relative_floor must be a finite nonnegative value, got {relative_floor}"
            )));
        }
        Ok(Self {
            epsilon,
            mode,
            relative_floor,
        })
    }

    pub fn relative(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, BallMode::Relative, DEFAULT_RELATIVE_FLOOR)
    }

    pub fn absolute(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, BallMode::Absolute, DEFAULT_RELATIVE_FLOOR)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> BallMode {
        self.mode
    }

    pub fn relative_floor(&self) -> f64 {
        self.relative_floor
    }

    pub fn distance(&self, u: f64, y: f64) -> f64 {
        let d = (u - y).abs();
        match self.mode {
            BallMode::Absolute => d,
            BallMode::Relative if d == 0.0 => 0.0,
            BallMode::Relative => d / y.abs().max(self.relative_floor),
        }
    }

    pub fn weight(&self, u: f64, y: f64) -> u8 {
        u8::from(self.accepts(&u, &y))
    }
}

impl Acceptance<f64> for AbcKernel {
    fn accepts(&self, simulated: &f64, observed: &f64) -> bool {
        self.distance(*simulated, *observed) <= self.epsilon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_distance_accepts() {
        for eps in [1e-9, 0.15, 1.5, 3.5] {
            let k = AbcKernel::relative(eps).unwrap();
            assert_eq!(k.weight(0.7, 0.7), 1);
            assert_eq!(k.weight(0.0, 0.0), 1);
            let k = AbcKernel::absolute(eps).unwrap();
            assert_eq!(k.weight(-2.0, -2.0), 1);
        }
    }

    #[test]
    fn relative_ball_arithmetic() {
        assert_eq!(AbcKernel::relative(0.15).unwrap().weight(1.2, 1.0), 0);
        assert_eq!(AbcKernel::relative(1.5).unwrap().weight(1.1, 1.0), 1);
    }

    #[test]
    fn zero_observation_uses_floor() {
        let k = AbcKernel::relative(1.5).unwrap();
        assert_eq!(k.weight(1e-9, 0.0), 1);
        assert_eq!(k.weight(1e-7, 0.0), 0);
        let k = AbcKernel::new(1.5, BallMode::Relative, 0.0).unwrap();
        // floor zero: only an exact hit is inside
        assert_eq!(k.weight(0.0, 0.0), 1);
        assert_eq!(k.weight(1e-300, 0.0), 0);
    }

    #[test]
    fn infinite_radius_accepts_everything() {
        let k = AbcKernel::relative(f64::INFINITY).unwrap();
        assert_eq!(k.weight(1e300, -3.0), 1);
        assert_eq!(k.weight(5.0, 0.0), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AbcKernel::relative(0.0).is_err());
        assert!(AbcKernel::relative(-1.0).is_err());
        assert!(AbcKernel::relative(f64::NAN).is_err());
        assert!(AbcKernel::new(1.0, BallMode::Relative, -1e-3).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_radius(u in -50.0..50.0f64, y in -50.0..50.0f64,
                              eps in 1e-3..10.0f64, extra in 0.0..10.0f64,
                              relative in any::<bool>()) {
            let mode = if relative { BallMode::Relative } else { BallMode::Absolute };
            let small = AbcKernel::new(eps, mode, 1e-8).unwrap();
            let large = AbcKernel::new(eps + extra, mode, 1e-8).unwrap();
            if small.accepts(&u, &y) {
                prop_assert!(large.accepts(&u, &y));
            }
        }

        #[test]
        fn absolute_is_symmetric(u in -50.0..50.0f64, y in -50.0..50.0f64, eps in 1e-3..10.0f64) {
            let k = AbcKernel::absolute(eps).unwrap();
            prop_assert_eq!(k.weight(u, y), k.weight(y, u));
        }
    }
}
