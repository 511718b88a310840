//! Element-wise activations and their derivatives.
//!
//! Every activation here acts independently per element, so its Jacobian is
//! diagonal and is applied as a Hadamard product with `derivative`.

use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{config_err, Error};

const GELU_C: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    /// Gaussian error linear unit. The tanh approximation is the default;
    /// `exact` switches to x·Φ(x).
    Gelu { exact: bool },
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub const GELU: Activation = Activation::Gelu { exact: false };
    pub const LEAKY: Activation = Activation::LeakyRelu { slope: 0.01 };

    pub fn value<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Gelu { exact: false } => {
                let half = T::of(0.5);
                let inner = T::of(sqrt_2_over_pi()) * (x + T::of(GELU_C) * x * x * x);
                half * x * (T::one() + inner.tanh())
            }
            Activation::Gelu { exact: true } => {
                let v = x.f64();
                T::of(v * std_normal_cdf(v))
            }
            Activation::LeakyRelu { slope } => {
                if x > T::zero() {
                    x
                } else {
                    x * T::of(slope)
                }
            }
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Gelu { exact: false } => {
                let c = T::of(sqrt_2_over_pi());
                let half = T::of(0.5);
                let t = (c * (x + T::of(GELU_C) * x * x * x)).tanh();
                let d_inner = c * (T::one() + T::of(3.0 * GELU_C) * x * x);
                half * (T::one() + t) + half * x * (T::one() - t * t) * d_inner
            }
            Activation::Gelu { exact: true } => {
                let v = x.f64();
                T::of(std_normal_cdf(v) + v * std_normal_pdf(v))
            }
            Activation::LeakyRelu { slope } => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of(slope)
                }
            }
        }
    }

    /// Points where the derivative is not defined (kinks).
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Activation::LeakyRelu { .. } => &[0.0],
            _ => &[],
        }
    }

    pub fn apply<T: Scalar>(self, z: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Identity => z.clone(),
            _ => z.map(|v| self.value(v)),
        }
    }

    pub fn apply_deriv<T: Scalar>(self, z: &Tensor<T>) -> Tensor<T> {
        z.map(|v| self.derivative(v))
    }

    pub fn is_identity(self) -> bool {
        self == Activation::Identity
    }
}

fn sqrt_2_over_pi() -> f64 {
    // √(2/π) = (2/√π)/√2
    FRAC_2_SQRT_PI / SQRT_2
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * FRAC_2_SQRT_PI / (2.0 * SQRT_2)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => f.write_str("identity"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Gelu { exact: false } => f.write_str("gelu"),
            Activation::Gelu { exact: true } => f.write_str("gelu-erf"),
            Activation::LeakyRelu { slope } => write!(f, "leaky:{slope}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `identity`, `tanh`, `gelu`, `gelu-erf`, `leaky` and `leaky:<slope>`.
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "gelu" => Ok(Activation::GELU),
            "gelu-erf" => Ok(Activation::Gelu { exact: true }),
            "leaky" => Ok(Activation::LEAKY),
            other => match other.strip_prefix("leaky:") {
                Some(slope) => slope
                    .parse::<f64>()
                    .map(|slope| Activation::LeakyRelu { slope })
                    .map_err(|_| config_err!("bad leaky slope in {other:?}")),
                None => Err(config_err!("unknown activation {other:?}")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [Activation; 5] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Gelu { exact: false },
        Activation::Gelu { exact: true },
        Activation::LeakyRelu { slope: 0.01 },
    ];

    #[test]
    fn trivial_values() {
        assert_eq!(Activation::Tanh.value(0.0f64), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0f64), 1.0);
        assert!((Activation::LEAKY.value(-1.0f64) + 0.01).abs() < 1e-15);
        assert_eq!(Activation::GELU.value(0.0f64), 0.0);
        assert!((Activation::GELU.derivative(0.0f64) - 0.5).abs() < 1e-15);
    }

    // Central differences on a 1001-point grid over [-5, 5]; grid points that
    // sit on a kink are skipped since the derivative is undefined there.
    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for kind in KINDS {
            let mut worst = 0.0f64;
            for i in 0..=1000 {
                let x = -5.0 + 10.0 * i as f64 / 1000.0;
                if kind.kinks().iter().any(|k| (x - k).abs() <= h) {
                    continue;
                }
                let fd = (kind.value(x + h) - kind.value(x - h)) / (2.0 * h);
                let d = kind.derivative(x);
                let rel = (d - fd).abs() / d.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-4, "{kind}: worst relative error {worst:e}");
        }
    }

    #[test]
    fn tanh_approx_tracks_exact_gelu() {
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let a = Activation::GELU.value(x);
            let e = Activation::Gelu { exact: true }.value(x);
            assert!((a - e).abs() < 1e-3);
        }
    }

    #[test]
    fn parse_round_trip() {
        for kind in KINDS {
            assert_eq!(kind.to_string().parse::<Activation>().unwrap(), kind);
        }
        assert!("relu6".parse::<Activation>().is_err());
    }

    #[test]
    fn f32_matches_f64() {
        let x32 = 1.3f32;
        let x64 = 1.3f64;
        assert!((Activation::GELU.value(x32) as f64 - Activation::GELU.value(x64)).abs() < 1e-6);
    }
}
