//! Floating-point abstraction the numeric core is generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

/// Scalar type for model state, likelihoods, and summaries.
///
/// Implemented for `f32` and `f64`. Random draws are routed through the
/// trait so generic code needs no per-distribution bounds of its own; every
/// implementation must produce the same value stream for the same RNG state.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + Debug
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`, keeping whatever precision `Self` has.
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 conversion")
    }

    /// Widens to `f64`.
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("f64 conversion")
    }

    /// Parses a decimal or scientific literal.
    fn parse_str(s: &str) -> Option<Self>;

    /// One standard normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from `Uniform(0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from `Gamma(shape, rate)`.
    ///
    /// pre: `shape > 0`, `rate > 0`, both finite.
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self;

    /// One Poisson draw with the given mean; a zero mean yields zero.
    ///
    /// pre: `mean >= 0` and finite.
    fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: Self) -> u64;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn parse_str(s: &str) -> Option<Self> {
                s.trim().parse::<$t>().ok()
            }

            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rand_distr::StandardNormal.sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rand_distr::StandardUniform.sample(rng)
            }

            fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, rate: Self) -> Self {
                // rand_distr parameterizes by scale = 1 / rate.
                let dist = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
                dist.sample(rng)
            }

            fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: Self) -> u64 {
                if mean == 0.0 {
                    return 0;
                }
                let dist = Poisson::new(mean).expect("valid poisson mean");
                dist.sample(rng) as u64
            }
        }

        // Ensure the distributions used above exist for this scalar.
        const _: fn() = || {
            fn assert_dist<D: Distribution<$t>>() {}
            assert_dist::<Normal<$t>>();
        };
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn casts_round_trip() {
        assert_eq!(f64::cast(1.5).as_f64(), 1.5);
        assert_eq!(f32::cast(1.5).as_f64(), 1.5);
        assert_eq!(f64::parse_str(" 2.5e-3 "), Some(0.0025));
        assert_eq!(f64::parse_str("nope"), None);
    }

    #[test]
    fn gamma_uses_rate_parameterization() {
        // Gamma(shape, rate) has mean shape / rate.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| f64::sample_gamma(&mut rng, 4.0, 8.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn poisson_zero_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(f64::sample_poisson(&mut rng, 0.0), 0);
    }

    #[test]
    fn f32_and_f64_agree_on_seeded_normals() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = f32::std_normal(&mut a);
            let y = f64::std_normal(&mut b);
            // Not bit-identical (different samplers), but both finite.
            assert!(x.is_finite() && y.is_finite());
        }
    }
}
