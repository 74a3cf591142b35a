use serde::{Deserialize, Serialize};

use super::{Activation, Recorder};
use crate::error::{contract, Result};

/// Value of a scalar field together with its first and second partial
/// derivatives in the two spatial inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2<S> {
    pub v: S,
    pub dx: S,
    pub dy: S,
    pub dxx: S,
    pub dxy: S,
    pub dyy: S,
}

impl<S: Copy> Jet2<S> {
    pub fn components(&self) -> [S; 6] {
        [self.v, self.dx, self.dy, self.dxx, self.dxy, self.dyy]
    }

    pub fn from_components(c: [S; 6]) -> Self {
        Self {
            v: c[0],
            dx: c[1],
            dy: c[2],
            dxx: c[3],
            dxy: c[4],
            dyy: c[5],
        }
    }

    pub fn map<T>(&self, mut f: impl FnMut(S) -> T) -> Jet2<T> {
        Jet2 {
            v: f(self.v),
            dx: f(self.dx),
            dy: f(self.dy),
            dxx: f(self.dxx),
            dxy: f(self.dxy),
            dyy: f(self.dyy),
        }
    }
}

impl Jet2<f64> {
    pub fn constant(c: f64) -> Self {
        Self::from_components([c, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// The coordinate function `x` evaluated at `x`.
    pub fn seed_x(x: f64) -> Self {
        Self::from_components([x, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn seed_y(y: f64) -> Self {
        Self::from_components([y, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }

    /// Lift into a recorder; every component becomes a constant.
    pub fn lift<R: Recorder>(&self, rec: &mut R) -> Jet2<R::Scalar> {
        self.map(|c| rec.constant(c))
    }
}

/// Affine layer rule: `sum_k w_k * J_k + bias`, componentwise.
///
/// The bias only enters the value; derivatives see the linear part alone.
pub fn jet_linear<R: Recorder>(
    rec: &mut R,
    inputs: &[Jet2<R::Scalar>],
    weights: &[R::Scalar],
    bias: R::Scalar,
) -> Result<Jet2<R::Scalar>> {
    if inputs.len() != weights.len() {
        return Err(contract(format!(
            "jet_linear: {} inputs but {} weights",
            inputs.len(),
            weights.len()
        )));
    }
    let mut out = [bias; 6];
    let mut column = Vec::with_capacity(inputs.len());
    for (c, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(inputs.iter().map(|j| j.components()[c]));
        *slot = rec.affine(weights, &column, (c == 0).then_some(bias));
    }
    Ok(Jet2::from_components(out))
}

/// Dense layer over component-major jets: `inputs[c][k]` is component `c`
/// of input `k`. `weights` is `(fan_out x fan_in)` row-major.
pub(crate) fn jet_dense<R: Recorder>(
    rec: &mut R,
    inputs: &[Vec<R::Scalar>; 6],
    weights: &[R::Scalar],
    biases: &[R::Scalar],
) -> Vec<Jet2<R::Scalar>> {
    let fan_in = inputs[0].len();
    biases
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut out = [b; 6];
            for (c, slot) in out.iter_mut().enumerate() {
                *slot = rec.affine(row, &inputs[c], (c == 0).then_some(b));
            }
            Jet2::from_components(out)
        })
        .collect()
}

/// Pushes a jet through a scalar nonlinearity `g` (chain rule to second order).
pub fn jet_activation<R: Recorder>(
    rec: &mut R,
    input: Jet2<R::Scalar>,
    act: Activation,
) -> Jet2<R::Scalar> {
    if act == Activation::Identity {
        return input;
    }
    let j = input.map(|s| rec.value(s));
    let [g0, g1, g2, g3] = act.derivatives(j.v);
    let v = rec.node(g0, [(input.v, g1)]);
    let dx = rec.node(g1 * j.dx, [(input.v, g2 * j.dx), (input.dx, g1)]);
    let dy = rec.node(g1 * j.dy, [(input.v, g2 * j.dy), (input.dy, g1)]);
    let dxx = rec.node(
        g2 * j.dx * j.dx + g1 * j.dxx,
        [
            (input.v, g3 * j.dx * j.dx + g2 * j.dxx),
            (input.dx, 2.0 * g2 * j.dx),
            (input.dxx, g1),
        ],
    );
    let dxy = rec.node(
        g2 * j.dx * j.dy + g1 * j.dxy,
        [
            (input.v, g3 * j.dx * j.dy + g2 * j.dxy),
            (input.dx, g2 * j.dy),
            (input.dy, g2 * j.dx),
            (input.dxy, g1),
        ],
    );
    let dyy = rec.node(
        g2 * j.dy * j.dy + g1 * j.dyy,
        [
            (input.v, g3 * j.dy * j.dy + g2 * j.dyy),
            (input.dy, 2.0 * g2 * j.dy),
            (input.dyy, g1),
        ],
    );
    Jet2 {
        v,
        dx,
        dy,
        dxx,
        dxy,
        dyy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Plain, Tape};

    #[test]
    fn seeds() {
        assert_eq!(Jet2::seed_x(1.5).components(), [1.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(Jet2::seed_y(-2.0).components(), [-2.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_scales_and_shifts() {
        let out = jet_linear(&mut Plain, &[Jet2::seed_x(1.0)], &[2.0], 3.0).unwrap();
        assert_eq!(out.components(), [5.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_sum_of_seeds_has_no_curvature() {
        let (a, b) = (0.3, -1.7);
        let out = jet_linear(
            &mut Plain,
            &[Jet2::seed_x(a), Jet2::seed_y(b)],
            &[1.0, 1.0],
            0.0,
        )
        .unwrap();
        assert_eq!(out.components(), [a + b, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_weight_annihilates() {
        let j = Jet2::from_components([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let out = jet_linear(&mut Plain, &[j], &[0.0], 0.25).unwrap();
        assert_eq!(out, Jet2::constant(0.25));
    }

    #[test]
    fn length_mismatch_is_a_contract_error() {
        let r = jet_linear(&mut Plain, &[Jet2::seed_x(1.0)], &[1.0, 2.0], 0.0);
        assert!(matches!(r, Err(crate::Error::Contract(_))));
    }

    #[test]
    fn identity_activation_is_exact() {
        let j = Jet2::from_components([0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        assert_eq!(jet_activation(&mut Plain, j, Activation::Identity), j);
    }

    #[test]
    fn gelu_at_zero_halves_slope() {
        let out = jet_activation(&mut Plain, Jet2::seed_x(0.0), Activation::Gelu);
        assert_eq!(out.v, 0.0);
        assert_eq!(out.dx, 0.5);
    }

    #[test]
    fn gelu_jet_matches_finite_differences_of_z_phi() {
        // input jet: v = 0.7 + x, so the output is GELU(0.7 + x) in x.
        let gelu = |z: f64| z * 0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2));
        let z = 0.7;
        let h = 1e-4;
        let d1 = (gelu(z + h) - gelu(z - h)) / (2.0 * h);
        let d2 = (gelu(z + h) - 2.0 * gelu(z) + gelu(z - h)) / (h * h);
        let out = jet_activation(&mut Plain, Jet2::seed_x(z), Activation::Gelu);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(out.v, gelu(z)) < 1e-12);
        assert!(rel(out.dx, d1) < 1e-6, "{} vs {d1}", out.dx);
        assert!(rel(out.dxx, d2) < 1e-6, "{} vs {d2}", out.dxx);
        assert_eq!(out.dy, 0.0);
        assert_eq!(out.dxy, 0.0);
        assert_eq!(out.dyy, 0.0);
    }

    #[test]
    fn taped_jet_matches_plain_jet() {
        let j = Jet2::from_components([0.4, 0.9, -0.3, 0.2, 0.1, -0.7]);
        let plain = jet_activation(&mut Plain, j, Activation::Gelu);
        let mut tape = Tape::new();
        let lifted = j.lift(&mut tape);
        let taped = jet_activation(&mut tape, lifted, Activation::Gelu);
        assert_eq!(taped.map(|s| tape_value(&tape, s)), plain);
    }

    fn tape_value(t: &Tape, v: crate::autodiff::Var) -> f64 {
        t.value(v)
    }
}
