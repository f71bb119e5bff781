//! Admissible reaction terms `f` with `f(0) = 0` and a known Lipschitz constant.

use serde::{Deserialize, Serialize};

use crate::error::NonlinearityError;

/// Reaction term of `u_t = u_xx + v u + f(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NonlinearitySpec", into = "NonlinearitySpec")]
pub enum Nonlinearity {
    Zero,
    /// `f(u) = a u`
    Linear(f64),
    /// `f(u) = u / (1 + u²)`
    Saturating,
    /// `f(u) = a sin(u)`
    Sinusoidal(f64),
}

/// Config-file form: a kind string and an optional parameter `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl TryFrom<NonlinearitySpec> for Nonlinearity {
    type Error = NonlinearityError;

    fn try_from(spec: NonlinearitySpec) -> Result<Self, Self::Error> {
        let param = |name: &str| -> Result<f64, NonlinearityError> {
            let a = spec
                .a
                .ok_or_else(|| NonlinearityError::MissingParameter(name.to_owned()))?;
            if a.is_finite() {
                Ok(a)
            } else {
                Err(NonlinearityError::BadParameter(a))
            }
        };
        match spec.kind.as_str() {
            "zero" => Ok(Nonlinearity::Zero),
            "linear" => Ok(Nonlinearity::Linear(param("linear")?)),
            "saturating" => Ok(Nonlinearity::Saturating),
            "sinusoidal" => Ok(Nonlinearity::Sinusoidal(param("sinusoidal")?)),
            other => Err(NonlinearityError::UnknownKind(other.to_owned())),
        }
    }
}

impl From<Nonlinearity> for NonlinearitySpec {
    fn from(nl: Nonlinearity) -> Self {
        let (kind, a) = match nl {
            Nonlinearity::Zero => ("zero", None),
            Nonlinearity::Linear(a) => ("linear", Some(a)),
            Nonlinearity::Saturating => ("saturating", None),
            Nonlinearity::Sinusoidal(a) => ("sinusoidal", Some(a)),
        };
        NonlinearitySpec {
            kind: kind.to_owned(),
            a,
        }
    }
}

impl Nonlinearity {
    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(a) => a * u,
            Nonlinearity::Saturating => u / (1.0 + u * u),
            Nonlinearity::Sinusoidal(a) => a * u.sin(),
        }
    }

    /// The constant `L` with `|f(x) - f(y)| <= L |x - y|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(a) | Nonlinearity::Sinusoidal(a) => a.abs(),
            Nonlinearity::Saturating => 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
            || matches!(self, Nonlinearity::Linear(a) | Nonlinearity::Sinusoidal(a) if *a == 0.0)
    }

    /// Largest difference quotient over all pairs of `samples` equispaced points in
    /// `[lo, hi]`. Fails with the witnessing pair if it exceeds `L (1 + 1e-12)`.
    pub fn verify_lipschitz(
        &self,
        samples: usize,
        lo: f64,
        hi: f64,
    ) -> Result<f64, NonlinearityError> {
        if samples < 2 {
            return Err(NonlinearityError::TooFewSamples(samples));
        }
        let step = (hi - lo) / (samples - 1) as f64;
        let xs: Vec<f64> = (0..samples).map(|i| lo + step * i as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| self.evaluate(x)).collect();
        let bound = self.lipschitz();
        let mut worst = (0.0, xs[0], xs[1]);
        for i in 0..samples {
            for j in i + 1..samples {
                let ratio = (fs[j] - fs[i]).abs() / (xs[j] - xs[i]);
                if ratio > worst.0 {
                    worst = (ratio, xs[i], xs[j]);
                }
            }
        }
        let (ratio, x, y) = worst;
        if ratio > bound * (1.0 + 1e-12) {
            return Err(NonlinearityError::LipschitzViolation { x, y, ratio, bound });
        }
        Ok(ratio)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    const ALL: [Nonlinearity; 6] = [
        Nonlinearity::Zero,
        Nonlinearity::Linear(0.5),
        Nonlinearity::Linear(-2.0),
        Nonlinearity::Saturating,
        Nonlinearity::Sinusoidal(1.0),
        Nonlinearity::Sinusoidal(0.3),
    ];

    #[test]
    fn evaluate_examples() {
        assert_eq!(Nonlinearity::Zero.evaluate(3.7), 0.0);
        assert_eq!(Nonlinearity::Linear(0.5).evaluate(2.0), 1.0);
        assert!((Nonlinearity::Sinusoidal(1.0).evaluate(FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert_eq!(Nonlinearity::Saturating.evaluate(1.0), 0.5);
    }

    #[test]
    fn vanishes_at_zero() {
        for nl in ALL {
            assert_eq!(nl.evaluate(0.0), 0.0, "{nl:?}");
        }
    }

    #[test]
    fn lipschitz_examples() {
        let r = Nonlinearity::Linear(0.5)
            .verify_lipschitz(200, -10.0, 10.0)
            .unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(
            Nonlinearity::Zero
                .verify_lipschitz(50, -10.0, 10.0)
                .unwrap(),
            0.0
        );
        let r = Nonlinearity::Sinusoidal(1.0)
            .verify_lipschitz(10_000, -10.0, 10.0)
            .unwrap();
        assert!(r <= 1.0 && r > 0.999);
    }

    #[test]
    fn registered_kinds_respect_their_constant() {
        for nl in ALL {
            nl.verify_lipschitz(400, -6.0, 6.0).unwrap();
        }
        let r = Nonlinearity::Saturating
            .verify_lipschitz(2001, -3.0, 3.0)
            .unwrap();
        assert!(r > 0.99);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            Nonlinearity::Zero.verify_lipschitz(1, 0.0, 1.0),
            Err(NonlinearityError::TooFewSamples(1))
        );
    }

    #[test]
    fn config_names() {
        let nl: Nonlinearity = toml::from_str("kind = \"sinusoidal\"\na = 1.0").unwrap();
        assert_eq!(nl, Nonlinearity::Sinusoidal(1.0));
        let nl: Nonlinearity = toml::from_str("kind = \"saturating\"").unwrap();
        assert_eq!(nl, Nonlinearity::Saturating);
        assert!(toml::from_str::<Nonlinearity>("kind = \"linear\"").is_err());
        assert!(toml::from_str::<Nonlinearity>("kind = \"cubic\"").is_err());
        let back = toml::to_string(&Nonlinearity::Linear(0.5)).unwrap();
        assert_eq!(
            toml::from_str::<Nonlinearity>(&back).unwrap(),
            Nonlinearity::Linear(0.5)
        );
    }
}
