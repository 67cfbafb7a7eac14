//! Double-well potential, chemical potential and the energy functional.
//!
//! The built-in potential is the quartic `F(r) = (r^2 - 1)^2` with
//! `f = F'`. The shifted variant moves the linear part of `f` into the
//! positive operator: `f_shift(r) = f(r) - (delta/xi) r`, so that
//! `mu = A phi + f_shift(phi)` recombines to `-Lap phi + f(phi)` exactly
//! when the operator shift equals `delta/xi`.

use crate::domain::ChannelGeometry;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::spaces::{a_theta_apply, grid_inner, y_norm_sq};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Parameters of the phase-field free energy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Growth constant: `|f^(i)(r)| <= c_f (1 + |r|^(4-i))`.
    pub c_f: f64,
    /// Shift of the positive operator; defaults to `delta / xi`.
    pub theta: f64,
    /// Interface width parameter.
    pub delta: f64,
    /// Potential strength parameter.
    pub xi: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            c_f: 24.0,
            theta: 1.0,
            delta: 1.0,
            xi: 1.0,
        }
    }
}

impl PotentialSpec {
    pub fn new(c_f: f64, theta: f64, delta: f64, xi: f64) -> Result<Self> {
        let s = Self {
            c_f,
            theta,
            delta,
            xi,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::Config(format!("potential shift must be positive, got {}", self.theta)));
        }
        if !(self.delta > 0.0 && self.xi > 0.0) {
            return Err(Error::Config("interface parameters must be positive".into()));
        }
        if self.delta > self.xi {
            return Err(Error::Config(format!(
                "delta = {} must not exceed xi = {}",
                self.delta, self.xi
            )));
        }
        if !self.growth_bound_holds() {
            return Err(Error::Config(format!("growth constant c_f = {} too small for the quartic", self.c_f)));
        }
        Ok(())
    }

    /// Linear shift moved from `f` into the operator, `delta / xi`.
    pub fn linear_shift(&self) -> f64 {
        self.delta / self.xi
    }

    /// Check `|f^(i)(r)| <= c_f (1 + |r|^(4-i))` for i = 0..4 on [-10, 10].
    pub fn growth_bound_holds(&self) -> bool {
        let derivs = |r: f64| {
            [
                (r * r - 1.0).powi(2),
                4.0 * r * (r * r - 1.0),
                12.0 * r * r - 4.0,
                24.0 * r,
                24.0,
            ]
        };
        for k in 0..=400 {
            let r = -10.0 + 0.05 * k as f64;
            for (i, d) in derivs(r).iter().enumerate() {
                if d.abs() > self.c_f * (1.0 + r.abs().powi(4 - i as i32)) {
                    return false;
                }
            }
        }
        true
    }
}

/// Pointwise values of the potential and its shifted variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValues {
    pub big_f: f64,
    pub little_f: f64,
    pub big_f_shifted: f64,
    pub little_f_shifted: f64,
}

pub fn potential_eval(spec: &PotentialSpec, r: f64) -> PotentialValues {
    let s = spec.linear_shift();
    let big_f = (r * r - 1.0).powi(2);
    let little_f = 4.0 * r * (r * r - 1.0);
    PotentialValues {
        big_f,
        little_f,
        // F_shift(r) = int_0^r f_shift = F(r) - F(0) - s r^2 / 2.
        big_f_shifted: big_f - 1.0 - 0.5 * s * r * r,
        little_f_shifted: little_f - s * r,
    }
}

/// Nodal values of `f_shift(phi)`.
pub fn little_f_shifted_grid(spec: &PotentialSpec, phi: &ScalarField) -> DMatrix<f64> {
    let s = spec.linear_shift();
    phi.values.map(|r| 4.0 * r * (r * r - 1.0) - s * r)
}

/// Chemical potential `mu = A phi + f_shift(phi)`.
pub fn chemical_potential(
    geom: &ChannelGeometry,
    phi: &ScalarField,
    spec: &PotentialSpec,
) -> Result<ScalarField> {
    let a = a_theta_apply(geom, phi, spec.theta)?;
    Ok(ScalarField {
        values: a.values + little_f_shifted_grid(spec, phi),
        neumann: true,
    })
}

/// `int_D F(phi)` by quadrature.
pub fn potential_integral(geom: &ChannelGeometry, phi: &ScalarField) -> f64 {
    let fgrid = phi.values.map(|r| (r * r - 1.0).powi(2));
    let ones = DMatrix::from_element(geom.ny, geom.nx, 1.0);
    grid_inner(geom, &fgrid, &ones)
}

/// Total energy `E(u, phi) = |u|^2 + |grad phi|^2 + int_D F(phi)`.
pub fn energy_e(
    geom: &ChannelGeometry,
    u: &VectorField,
    phi: &ScalarField,
    _spec: &PotentialSpec,
) -> Result<f64> {
    if !u.matches(geom) || !phi.matches(geom) {
        return Err(Error::Dimension("energy_e: field/geometry mismatch".into()));
    }
    Ok(y_norm_sq(geom, u, phi) + potential_integral(geom, phi))
}

/// Dissipation-monitor energy `|u|^2 + |grad phi|^2 + 2 int_D F(phi)`;
/// this is the quantity whose discrete balance closes exactly in space.
pub fn energy_tilde(geom: &ChannelGeometry, u: &VectorField, phi: &ScalarField) -> f64 {
    y_norm_sq(geom, u, phi) + 2.0 * potential_integral(geom, phi)
}
