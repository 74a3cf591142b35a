use serde::{Deserialize, Serialize};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Pointwise nonlinearity with closed-form derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    /// Exact GELU, `z * Phi(z)` with the standard normal CDF.
    Gelu,
    Tanh,
}

impl Activation {
    /// `[g(z), g'(z), g''(z), g'''(z)]`.
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Identity => [z, 1.0, 0.0, 0.0],
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = FRAC_1_SQRT_2PI * (-0.5 * z * z).exp();
                [
                    z * cdf,
                    cdf + z * pdf,
                    pdf * (2.0 - z * z),
                    pdf * (z * z * z - 4.0 * z),
                ]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
        }
    }

    pub fn eval(self, z: f64) -> f64 {
        self.derivatives(z)[0]
    }
}
