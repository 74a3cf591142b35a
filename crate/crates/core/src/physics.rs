//! Steady incompressible Navier-Stokes residuals and boundary conditions.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, Recorder};
use crate::error::{contract, Error, Result};
use crate::geometry::{BoundarySegment, DomainSpec, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidParams {
    /// Density.
    pub rho: f64,
    /// Kinematic viscosity.
    pub nu: f64,
    /// Peak parameter of the parabolic inflow.
    pub u_max: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            nu: 0.001,
            u_max: 0.3,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::InvalidConfig {
                field: format!("fluid.{field}"),
                reason: reason.into(),
            })
        };
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho", "must be positive");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu", "must be positive");
        }
        if !(self.u_max >= 0.0 && self.u_max.is_finite()) {
            return bad("u_max", "must be non-negative");
        }
        Ok(())
    }
}

/// Which momentum equations the network is trained on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeVariant {
    #[default]
    Full,
    /// Drops the `u1 * du1/dx` term from the x-momentum equation.
    Broken,
}

/// Network outputs at a point: velocity components and pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet<S> {
    pub u1: Jet2<S>,
    pub u2: Jet2<S>,
    pub p: Jet2<S>,
}

impl FieldJet<f64> {
    pub fn lift<R: Recorder>(&self, rec: &mut R) -> FieldJet<R::Scalar> {
        FieldJet {
            u1: self.u1.lift(rec),
            u2: self.u2.lift(rec),
            p: self.p.lift(rec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualVector<S> {
    pub mom_x: S,
    pub mom_y: S,
    pub cont: S,
}

impl<S: Copy> ResidualVector<S> {
    pub fn components(&self) -> [S; 3] {
        [self.mom_x, self.mom_y, self.cont]
    }
}

/// Interior residuals of the momentum and continuity equations.
pub fn ns_residual<R: Recorder>(
    rec: &mut R,
    f: &FieldJet<R::Scalar>,
    fluid: &FluidParams,
    variant: PdeVariant,
) -> ResidualVector<R::Scalar> {
    let (u1, u2, p) = (f.u1, f.u2, f.p);
    let inv_rho = 1.0 / fluid.rho;
    let nu = fluid.nu;
    let val = |rec: &R, s| rec.value(s);

    // x-momentum
    let (a, b) = (val(rec, u1.v), val(rec, u1.dx));
    let (c, d) = (val(rec, u2.v), val(rec, u1.dy));
    let (px, lx) = (val(rec, p.dx), val(rec, u1.dxx) + val(rec, u1.dyy));
    let mom_x = match variant {
        PdeVariant::Full => rec.node(
            a * b + c * d + inv_rho * px - nu * lx,
            [
                (u1.v, b),
                (u1.dx, a),
                (u2.v, d),
                (u1.dy, c),
                (p.dx, inv_rho),
                (u1.dxx, -nu),
                (u1.dyy, -nu),
            ],
        ),
        PdeVariant::Broken => rec.node(
            c * d + inv_rho * px - nu * lx,
            [
                (u2.v, d),
                (u1.dy, c),
                (p.dx, inv_rho),
                (u1.dxx, -nu),
                (u1.dyy, -nu),
            ],
        ),
    };

    // y-momentum
    let (e, g) = (val(rec, u2.dx), val(rec, u2.dy));
    let (py, ly) = (val(rec, p.dy), val(rec, u2.dxx) + val(rec, u2.dyy));
    let mom_y = rec.node(
        a * e + c * g + inv_rho * py - nu * ly,
        [
            (u1.v, e),
            (u2.dx, a),
            (u2.v, g),
            (u2.dy, c),
            (p.dy, inv_rho),
            (u2.dxx, -nu),
            (u2.dyy, -nu),
        ],
    );

    let cont = rec.add(u1.dx, u2.dy);
    ResidualVector { mom_x, mom_y, cont }
}

/// Parabolic inflow `U_max * eta * (H - eta) / H^2` with `eta = y - y_min`.
pub fn inflow_profile(y: f64, fluid: &FluidParams, spec: &DomainSpec) -> Result<f64> {
    let slack = crate::geometry::BOUNDARY_TOL;
    if !(y >= spec.y_min - slack && y <= spec.y_max + slack) {
        return Err(contract(format!(
            "inflow profile evaluated at y = {y} outside [{}, {}]",
            spec.y_min, spec.y_max
        )));
    }
    let h = spec.height();
    let eta = y - spec.y_min;
    Ok(fluid.u_max * eta * (h - eta) / (h * h))
}

/// Boundary residual pair for a point on `seg`.
///
/// Walls and cylinder impose no-slip, the inlet imposes the parabolic
/// profile, and the outlet imposes `nu * grad(u1) - (p / rho, 0) = 0`.
pub fn bc_residual<R: Recorder>(
    rec: &mut R,
    point: Point2,
    seg: BoundarySegment,
    f: &FieldJet<R::Scalar>,
    fluid: &FluidParams,
    spec: &DomainSpec,
) -> Result<[R::Scalar; 2]> {
    Ok(match seg {
        BoundarySegment::Bottom | BoundarySegment::Top | BoundarySegment::Cylinder => [f.u1.v, f.u2.v],
        BoundarySegment::Inlet => {
            let target = inflow_profile(point.y, fluid, spec)?;
            [rec.offset(f.u1.v, -target), f.u2.v]
        }
        BoundarySegment::Outlet => {
            let (du, pv) = (rec.value(f.u1.dx), rec.value(f.p.v));
            let r0 = rec.node(
                fluid.nu * du - pv / fluid.rho,
                [(f.u1.dx, fluid.nu), (f.p.v, -1.0 / fluid.rho)],
            );
            let r1 = rec.scale(f.u1.dy, fluid.nu);
            [r0, r1]
        }
    })
}

/// Analytic plane Poiseuille flow matching the inflow profile, with the
/// linear pressure drop that balances viscous stress.
pub fn poiseuille_field(at: Point2, fluid: &FluidParams, spec: &DomainSpec, p0: f64) -> FieldJet<f64> {
    let h = spec.height();
    let eta = at.y - spec.y_min;
    let k = fluid.u_max / (h * h);
    let dpdx = -2.0 * fluid.rho * fluid.nu * fluid.u_max / (h * h);
    FieldJet {
        u1: Jet2::from_components([fluid.u_max * eta * (h - eta) / (h * h), 0.0, k * (h - 2.0 * eta), 0.0, 0.0, -2.0 * k]),
        u2: Jet2::constant(0.0),
        p: Jet2::from_components([p0 + dpdx * (at.x - spec.x_min), dpdx, 0.0, 0.0, 0.0, 0.0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Plain;

    fn residual(f: &FieldJet<f64>, variant: PdeVariant) -> [f64; 3] {
        ns_residual(&mut Plain, f, &FluidParams::default(), variant).components()
    }

    #[test]
    fn constant_flow_has_zero_residual() {
        let f = FieldJet {
            u1: Jet2::constant(0.4),
            u2: Jet2::constant(0.0),
            p: Jet2::constant(2.0),
        };
        for v in [PdeVariant::Full, PdeVariant::Broken] {
            assert_eq!(residual(&f, v), [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn poiseuille_annihilates_residuals() {
        let spec = DomainSpec::default();
        let fluid = FluidParams::default();
        let dpdx = -2.0 * 1.0 * 0.001 * 0.3 / (0.41f64 * 0.41);
        assert!((dpdx - -3.5693e-3).abs() < 1e-7);
        for (x, y) in [(0.5, 0.1), (1.3, 0.33), (2.0, 0.205)] {
            let f = poiseuille_field(Point2::new(x, y), &fluid, &spec, 0.7);
            assert_eq!(f.p.dx, dpdx);
            for v in [PdeVariant::Full, PdeVariant::Broken] {
                for r in residual(&f, v) {
                    assert!(r.abs() < 1e-12, "{r}");
                }
            }
        }
    }

    #[test]
    fn shear_flow_variants_agree() {
        let f = FieldJet {
            u1: Jet2::seed_y(0.3),
            u2: Jet2::constant(0.0),
            p: Jet2::constant(0.0),
        };
        assert_eq!(residual(&f, PdeVariant::Full)[0], 0.0);
        assert_eq!(residual(&f, PdeVariant::Full), residual(&f, PdeVariant::Broken));
    }

    #[test]
    fn broken_drops_only_streamwise_convection() {
        let f = FieldJet {
            u1: Jet2::from_components([0.5, 0.2, 0.1, 0.0, 0.0, 0.0]),
            u2: Jet2::from_components([0.3, 0.0, 0.0, 0.0, 0.0, 0.0]),
            p: Jet2::constant(0.0),
        };
        let full = residual(&f, PdeVariant::Full);
        let broken = residual(&f, PdeVariant::Broken);
        assert!((full[0] - broken[0] - 0.5 * 0.2).abs() < 1e-15);
        assert_eq!(full[1], broken[1]);
        assert_eq!(full[2], broken[2]);
    }

    #[test]
    fn inflow_values() {
        let spec = DomainSpec::default();
        let fluid = FluidParams::default();
        assert_eq!(inflow_profile(0.0, &fluid, &spec).unwrap(), 0.0);
        assert!(inflow_profile(0.41, &fluid, &spec).unwrap().abs() < 1e-16);
        assert!((inflow_profile(0.205, &fluid, &spec).unwrap() - 0.075).abs() < 1e-15);
        assert!((inflow_profile(0.1, &fluid, &spec).unwrap() - 0.3 * 0.1 * 0.31 / 0.1681).abs() < 1e-15);
        assert!((inflow_profile(0.1, &fluid, &spec).unwrap() - 0.055324).abs() < 1e-6);
        assert!(inflow_profile(0.5, &fluid, &spec).is_err());
        assert!(inflow_profile(-0.01, &fluid, &spec).is_err());
    }

    #[test]
    fn boundary_residuals() {
        let spec = DomainSpec::default();
        let fluid = FluidParams::default();
        let zero = FieldJet {
            u1: Jet2::constant(0.0),
            u2: Jet2::constant(0.0),
            p: Jet2::constant(0.0),
        };
        let on_cyl = Point2::new(0.25, 0.2);
        let r = bc_residual(&mut Plain, on_cyl, BoundarySegment::Cylinder, &zero, &fluid, &spec).unwrap();
        assert_eq!(r, [0.0, 0.0]);

        let r = bc_residual(&mut Plain, Point2::new(0.0, 0.205), BoundarySegment::Inlet, &zero, &fluid, &spec)
            .unwrap();
        assert!((r[0] + 0.075).abs() < 1e-15);
        assert_eq!(r[1], 0.0);

        let outlet = FieldJet {
            u1: Jet2::from_components([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            u2: Jet2::constant(0.0),
            p: Jet2::constant(0.001),
        };
        let r = bc_residual(&mut Plain, Point2::new(2.2, 0.1), BoundarySegment::Outlet, &outlet, &fluid, &spec)
            .unwrap();
        assert_eq!(r, [0.0, 0.0]);
    }

    #[test]
    fn momentum_ignores_pressure_level() {
        let mut f = FieldJet {
            u1: Jet2::from_components([0.2, 0.1, -0.3, 0.5, 0.0, 0.4]),
            u2: Jet2::from_components([0.1, 0.2, 0.1, -0.2, 0.3, 0.1]),
            p: Jet2::from_components([1.0, 0.05, -0.02, 0.0, 0.0, 0.0]),
        };
        let before = residual(&f, PdeVariant::Full);
        f.p.v = -17.0;
        assert_eq!(before, residual(&f, PdeVariant::Full));
    }
}
