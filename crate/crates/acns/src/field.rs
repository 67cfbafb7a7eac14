//! Nodal scalar and vector fields on the channel grid.
//!
//! Fields store values as `ny x nx` matrices (row = wall-normal node,
//! column = periodic node). Tangential boundary quantities are reported
//! along `+x` on both walls, so scalar boundary data such as the slip
//! stress is continuous across the two walls; normal traces use the
//! outward normal of each wall.

use nalgebra::{DMatrix, DVector};

use crate::domain::{ChannelGeometry, Wall};
use crate::error::{Error, Result};

/// `d/dx` of a nodal matrix (Fourier differentiation along rows).
pub fn ddx(geom: &ChannelGeometry, f: &DMatrix<f64>) -> DMatrix<f64> {
    f * geom.dx.transpose()
}

/// `d/dy` of a nodal matrix (GLL differentiation along columns).
pub fn ddy(geom: &ChannelGeometry, f: &DMatrix<f64>) -> DMatrix<f64> {
    &geom.dy * f
}

/// Scalar field on the interior grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub values: DMatrix<f64>,
    /// Marks fields constructed to satisfy the homogeneous Neumann
    /// condition `d phi / dn = 0` on both walls.
    pub neumann: bool,
}

impl ScalarField {
    pub fn new(geom: &ChannelGeometry, values: DMatrix<f64>, neumann: bool) -> Result<Self> {
        if values.nrows() != geom.ny || values.ncols() != geom.nx {
            return Err(Error::Dimension(format!(
                "scalar field {}x{} on {}x{} grid",
                values.nrows(),
                values.ncols(),
                geom.ny,
                geom.nx
            )));
        }
        Ok(Self { values, neumann })
    }

    pub fn zeros(geom: &ChannelGeometry) -> Self {
        Self {
            values: DMatrix::zeros(geom.ny, geom.nx),
            neumann: true,
        }
    }

    pub fn from_fn(geom: &ChannelGeometry, neumann: bool, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DMatrix::from_fn(geom.ny, geom.nx, |i, j| f(geom.x[j], geom.y[i]));
        Self { values, neumann }
    }

    pub fn matches(&self, geom: &ChannelGeometry) -> bool {
        self.values.nrows() == geom.ny && self.values.ncols() == geom.nx
    }

    /// Wall samples of the field.
    pub fn wall_values(&self, geom: &ChannelGeometry, wall: Wall) -> DVector<f64> {
        self.values.row(geom.wall_row(wall)).transpose()
    }

    /// Max wall-normal derivative on the walls relative to the field scale.
    pub fn neumann_residual(&self, geom: &ChannelGeometry) -> f64 {
        let dn = ddy(geom, &self.values);
        let scale = self.values.amax().max(1e-300);
        let b = dn.row(geom.wall_row(Wall::Bottom)).amax();
        let t = dn.row(geom.wall_row(Wall::Top)).amax();
        b.max(t) / scale
    }
}

/// Two-component velocity-like field.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub ux: DMatrix<f64>,
    pub uy: DMatrix<f64>,
    /// Marks fields built from the discrete divergence-free space.
    pub div_free: bool,
}

impl VectorField {
    pub fn new(
        geom: &ChannelGeometry,
        ux: DMatrix<f64>,
        uy: DMatrix<f64>,
        div_free: bool,
    ) -> Result<Self> {
        for m in [&ux, &uy] {
            if m.nrows() != geom.ny || m.ncols() != geom.nx {
                return Err(Error::Dimension(format!(
                    "vector field {}x{} on {}x{} grid",
                    m.nrows(),
                    m.ncols(),
                    geom.ny,
                    geom.nx
                )));
            }
        }
        Ok(Self { ux, uy, div_free })
    }

    pub fn zeros(geom: &ChannelGeometry) -> Self {
        Self {
            ux: DMatrix::zeros(geom.ny, geom.nx),
            uy: DMatrix::zeros(geom.ny, geom.nx),
            div_free: true,
        }
    }

    pub fn from_fn(
        geom: &ChannelGeometry,
        div_free: bool,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Self {
        let ux = DMatrix::from_fn(geom.ny, geom.nx, |i, j| f(geom.x[j], geom.y[i])[0]);
        let uy = DMatrix::from_fn(geom.ny, geom.nx, |i, j| f(geom.x[j], geom.y[i])[1]);
        Self { ux, uy, div_free }
    }

    pub fn matches(&self, geom: &ChannelGeometry) -> bool {
        self.ux.nrows() == geom.ny && self.ux.ncols() == geom.nx
    }

    pub fn divergence(&self, geom: &ChannelGeometry) -> DMatrix<f64> {
        ddx(geom, &self.ux) + ddy(geom, &self.uy)
    }

    /// `v . n` on a wall (outward normal).
    pub fn normal_trace(&self, geom: &ChannelGeometry, wall: Wall) -> DVector<f64> {
        let row = self.uy.row(geom.wall_row(wall)).transpose();
        match wall {
            Wall::Bottom => -row,
            Wall::Top => row,
        }
    }

    /// Tangential wall samples, reported along `+x` on both walls.
    pub fn tangential_trace(&self, geom: &ChannelGeometry, wall: Wall) -> DVector<f64> {
        self.ux.row(geom.wall_row(wall)).transpose()
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        self.ux += alpha * &other.ux;
        self.uy += alpha * &other.uy;
        self.div_free = self.div_free && other.div_free;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_geometry;
    use approx::assert_relative_eq;

    #[test]
    fn streamfunction_fields_are_divergence_free() {
        let g = build_geometry(12, 10).unwrap();
        // u = (psi_y, -psi_x) for psi = sin(2x) y^3.
        let psi = DMatrix::from_fn(g.ny, g.nx, |i, j| (2.0 * g.x[j]).sin() * g.y[i].powi(3));
        let u = VectorField {
            ux: ddy(&g, &psi),
            uy: -ddx(&g, &psi),
            div_free: true,
        };
        assert!(u.divergence(&g).amax() < 1e-9);
    }

    #[test]
    fn traces_follow_wall_orientation() {
        let g = build_geometry(8, 6).unwrap();
        let v = VectorField::from_fn(&g, false, |_, y| [1.0 + y, 2.0 - y]);
        let nb = v.normal_trace(&g, Wall::Bottom);
        let nt = v.normal_trace(&g, Wall::Top);
        assert_relative_eq!(nb[0], -2.0);
        assert_relative_eq!(nt[0], 1.0);
        // Tangential values are along +x on both walls.
        assert_relative_eq!(v.tangential_trace(&g, Wall::Bottom)[0], 1.0);
        assert_relative_eq!(v.tangential_trace(&g, Wall::Top)[0], 2.0);
    }

    #[test]
    fn neumann_residual_small_for_cosine_profiles() {
        let g = build_geometry(8, 24).unwrap();
        let f = ScalarField::from_fn(&g, true, |x, y| {
            x.cos() * (2.0 * std::f64::consts::PI * y).cos()
        });
        assert!(f.neumann_residual(&g) < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = build_geometry(8, 6).unwrap();
        let bad = DMatrix::zeros(4, 8);
        assert!(ScalarField::new(&g, bad.clone(), true).is_err());
        assert!(VectorField::new(&g, bad.clone(), bad, false).is_err());
    }
}
