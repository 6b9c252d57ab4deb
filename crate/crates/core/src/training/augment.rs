//! Paired geometric augmentation and low-light illumination variation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Result};
use crate::numerics::tensor::{Shape, Tensor};

/// Ranges the per-sample draws come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub enabled: bool,
    pub gamma: (f64, f64),
    pub gain: (f64, f64),
    pub noise_max: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            gamma: (0.6, 1.4),
            gain: (0.7, 1.3),
            noise_max: 0.02,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a > 0.0 && a <= b;
        if !ok(self.gamma) || !ok(self.gain) || !(self.noise_max >= 0.0 && self.noise_max.is_finite()) {
            bail!(Parameter, "augmentation ranges must be positive and ordered: {self:?}");
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> AugmentDraw {
        if !self.enabled {
            return AugmentDraw::identity();
        }
        let range = |rng: &mut dyn rand::RngCore, (a, b): (f64, f64)| if a == b { a } else { rng.random_range(a..b) };
        AugmentDraw {
            hflip: rng.random(),
            vflip: rng.random(),
            rot90: rng.random_range(0..4),
            gamma: range(rng, self.gamma),
            gain: range(rng, self.gain),
            noise_sigma: if self.noise_max > 0.0 {
                rng.random_range(0.0..self.noise_max)
            } else {
                0.0
            },
            noise_seed: rng.random(),
        }
    }
}

/// One concrete augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise quarter turns.
    pub rot90: u8,
    pub gamma: f64,
    pub gain: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            hflip: false,
            vflip: false,
            rot90: 0,
            gamma: 1.0,
            gain: 1.0,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    /// Flips and rotations on both images; gamma, gain and noise on `low` only.
    pub fn apply(&self, low: &Tensor, high: &Tensor) -> (Tensor, Tensor) {
        let mut low = self.geometric(low);
        let high = self.geometric(high).clamp01();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.noise_seed);
        let normal = Normal::new(0.0, self.noise_sigma.max(0.0)).ok();
        for v in low.data_mut() {
            let mut x = (*v as f64).max(0.0).powf(self.gamma) * self.gain;
            if let (Some(n), true) = (&normal, self.noise_sigma > 0.0) {
                x += n.sample(&mut rng);
            }
            *v = x.clamp(0.0, 1.0) as f32;
        }
        (low, high)
    }

    fn geometric(&self, t: &Tensor) -> Tensor {
        let mut out = t.clone();
        if self.hflip {
            out = flip(&out, false);
        }
        if self.vflip {
            out = flip(&out, true);
        }
        for _ in 0..self.rot90 % 4 {
            out = rot90(&out);
        }
        out
    }
}

pub fn flip(t: &Tensor, vertical: bool) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        if vertical {
            t.at(n, c, s.h - 1 - y, x)
        } else {
            t.at(n, c, y, s.w - 1 - x)
        }
    })
}

/// Quarter turn counter-clockwise.
pub fn rot90(t: &Tensor) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.w, s.h), |n, c, y, x| t.at(n, c, x, s.w - 1 - y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        Tensor::from_fn(Shape::new(1, 2, 3, 4), |_, c, y, x| (c * 12 + y * 4 + x) as f32 / 24.0)
    }

    #[test]
    fn identity_draw_is_noop() {
        let (a, b) = AugmentDraw::identity().apply(&ramp(), &ramp());
        assert_eq!(a, ramp());
        assert_eq!(b, ramp());
    }

    #[test]
    fn flips_are_involutions() {
        assert_eq!(flip(&flip(&ramp(), false), false), ramp());
        assert_eq!(flip(&flip(&ramp(), true), true), ramp());
        let mut r = ramp();
        for _ in 0..4 {
            r = rot90(&r);
        }
        assert_eq!(r, ramp());
    }

    #[test]
    fn gamma_on_constant() {
        let d = AugmentDraw {
            gamma: 0.5,
            ..AugmentDraw::identity()
        };
        let c = Tensor::full(Shape::new(1, 1, 2, 2), 0.25f32);
        let (low, high) = d.apply(&c, &c);
        assert!(low.data().iter().all(|&v| v == 0.5));
        assert_eq!(high, c);
    }
}
