//! Geometry of the periodic channel `[0, 2pi) x [0, 1]`.
//!
//! The periodic direction is discretized with `nx` equispaced Fourier
//! collocation points, the wall-normal direction with `ny`
//! Legendre-Gauss-Lobatto (GLL) points mapped to `[0, 1]`. GLL quadrature
//! with `ny` nodes is exact for polynomials up to degree `2*ny - 3`, so
//! products of two nodal interpolants in which at least one factor is a
//! wall-normal derivative are integrated exactly. The boundary consists of
//! the two walls `y = 0` and `y = 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const LX: f64 = 2.0 * std::f64::consts::PI;
pub const HEIGHT: f64 = 1.0;

/// One of the two channel walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Bottom,
    Top,
}

impl Wall {
    pub const BOTH: [Wall; 2] = [Wall::Bottom, Wall::Top];
}

/// Outward unit normal and the tangent obtained by rotating it +90 degrees,
/// so that `det [n tau] = +1`.
pub fn normal_tangent(wall: Wall) -> ([f64; 2], [f64; 2]) {
    match wall {
        Wall::Bottom => ([0.0, -1.0], [1.0, 0.0]),
        Wall::Top => ([0.0, 1.0], [-1.0, 0.0]),
    }
}

/// Collocation grid, quadrature and differentiation matrices for the channel.
///
/// Immutable after construction; shared read-only across ensemble workers.
#[derive(Debug, Clone)]
pub struct ChannelGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Fourier nodes `x_j = 2 pi j / nx`.
    pub x: DVector<f64>,
    /// GLL nodes on `[0, 1]`, ascending; `y[0] = 0`, `y[ny-1] = 1`.
    pub y: DVector<f64>,
    /// Quadrature weight per x node (uniform).
    pub wx: f64,
    /// GLL quadrature weights on `[0, 1]`.
    pub wy: DVector<f64>,
    /// Fourier differentiation matrix, `(d/dx f)(x_i) = sum_j dx[(i,j)] f(x_j)`.
    pub dx: DMatrix<f64>,
    /// GLL differentiation matrix on `[0, 1]`.
    pub dy: DMatrix<f64>,
    /// Degree up to which the wall-normal quadrature rule is exact.
    pub y_exactness_degree: usize,
}

impl ChannelGeometry {
    /// Row index of a wall in field matrices (rows = y, cols = x).
    pub fn wall_row(&self, wall: Wall) -> usize {
        match wall {
            Wall::Bottom => 0,
            Wall::Top => self.ny - 1,
        }
    }

    /// Area of the channel, `|D| = 2 pi`.
    pub fn area(&self) -> f64 {
        LX * HEIGHT
    }

    /// Quadrature weight of one boundary node (same on both walls).
    pub fn wall_weight(&self) -> f64 {
        self.wx
    }

    pub fn same_grid(&self, nx: usize, ny: usize) -> bool {
        self.nx == nx && self.ny == ny
    }

    /// `int_Gamma g dgamma` over both walls from per-wall samples.
    pub fn boundary_integral(&self, bottom: &DVector<f64>, top: &DVector<f64>) -> Result<f64> {
        if bottom.len() != self.nx || top.len() != self.nx {
            return Err(Error::Dimension(format!(
                "boundary samples ({}, {}) do not match nx = {}",
                bottom.len(),
                top.len(),
                self.nx
            )));
        }
        Ok(self.wx * (bottom.sum() + top.sum()))
    }
}

/// Build the channel geometry. `nx` must be even and both counts at least 4.
pub fn build_geometry(nx: usize, ny: usize) -> Result<ChannelGeometry> {
    if nx < 4 || nx % 2 != 0 {
        return Err(Error::Geometry(format!("nx = {nx} must be even and >= 4")));
    }
    if ny < 4 {
        return Err(Error::Geometry(format!("ny = {ny} must be >= 4")));
    }
    let x = DVector::from_fn(nx, |j, _| LX * j as f64 / nx as f64);
    let (y_ref, wy_ref) = gll_nodes_weights(ny);
    // Map [-1, 1] -> [0, 1].
    let y = y_ref.map(|t| 0.5 * (t + 1.0));
    let wy = wy_ref.map(|w| 0.5 * w);
    let dx = fourier_diff_matrix(nx);
    let dy = barycentric_diff_matrix(&y);
    Ok(ChannelGeometry {
        nx,
        ny,
        x,
        y,
        wx: LX / nx as f64,
        wy,
        dx,
        dy,
        y_exactness_degree: 2 * ny - 3,
    })
}

/// Legendre-Gauss-Lobatto nodes and weights on `[-1, 1]`.
///
/// Interior nodes are the roots of `P'_{n-1}`, found by Newton iteration
/// from Chebyshev-Gauss-Lobatto initial guesses; weights are
/// `2 / (n (n-1) P_{n-1}(x)^2)`.
pub fn gll_nodes_weights(n: usize) -> (DVector<f64>, DVector<f64>) {
    assert!(n >= 2);
    let m = n - 1;
    let mut x = DVector::from_fn(n, |i, _| -(std::f64::consts::PI * i as f64 / m as f64).cos());
    for i in 1..m {
        let mut xi = x[i];
        for _ in 0..100 {
            let (p, dp, d2p) = legendre_with_derivatives(m, xi);
            let _ = p;
            // Newton step for the root of P'_m.
            let step = dp / d2p;
            xi -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        x[i] = xi;
    }
    x[0] = -1.0;
    x[m] = 1.0;
    let nn = n as f64;
    let w = DVector::from_fn(n, |i, _| {
        let (p, _, _) = legendre_with_derivatives(m, x[i]);
        2.0 / (nn * (nn - 1.0) * p * p)
    });
    (x, w)
}

/// `(P_m(x), P'_m(x), P''_m(x))` by the three-term recurrence.
fn legendre_with_derivatives(m: usize, x: f64) -> (f64, f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let mf = m as f64;
    // Derivatives from the standard identities on (-1, 1).
    let dp = mf * (x * p1 - p0) / (x * x - 1.0);
    let d2p = (2.0 * x * dp - mf * (mf + 1.0) * p1) / (1.0 - x * x);
    (p1, dp, d2p)
}

/// Differentiation matrix for an arbitrary node set via barycentric weights.
pub fn barycentric_diff_matrix(nodes: &DVector<f64>) -> DMatrix<f64> {
    let n = nodes.len();
    let mut lambda = DVector::from_element(n, 1.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lambda[i] /= nodes[i] - nodes[j];
            }
        }
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (lambda[j] / lambda[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                row_sum += v;
            }
        }
        d[(i, i)] = -row_sum;
    }
    d
}

/// Spectral differentiation matrix for `n` (even) equispaced points on `[0, 2pi)`.
pub fn fourier_diff_matrix(n: usize) -> DMatrix<f64> {
    assert!(n % 2 == 0);
    let h = LX / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let k = i as isize - j as isize;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * h * k as f64).tan()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn geometry_area_and_wall_weights() {
        let g = build_geometry(8, 8).unwrap();
        let interior: f64 = g.wx * g.wy.sum() * g.nx as f64;
        assert_relative_eq!(interior, 2.0 * std::f64::consts::PI, max_relative = 1e-12);
        let per_wall = g.wall_weight() * g.nx as f64;
        assert_relative_eq!(per_wall, 2.0 * std::f64::consts::PI, max_relative = 1e-12);
    }

    #[test]
    fn minimal_geometry_is_accepted() {
        assert!(build_geometry(4, 4).is_ok());
    }

    #[test]
    fn bad_sizes_are_rejected() {
        assert!(build_geometry(7, 8).is_err());
        assert!(build_geometry(2, 8).is_err());
        assert!(build_geometry(8, 3).is_err());
    }

    #[test]
    fn boundary_integral_of_one_is_4pi() {
        let g = build_geometry(8, 8).unwrap();
        let ones = DVector::from_element(8, 1.0);
        let v = g.boundary_integral(&ones, &ones).unwrap();
        assert_relative_eq!(v, 4.0 * std::f64::consts::PI, max_relative = 1e-12);
    }

    #[test]
    fn boundary_integral_of_fourier_modes_vanishes() {
        let g = build_geometry(16, 8).unwrap();
        let s = g.x.map(|x| x.sin());
        let c = g.x.map(|x| (2.0 * x).cos());
        assert!(g.boundary_integral(&s, &s).unwrap().abs() < 1e-12);
        assert!(g.boundary_integral(&c, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn boundary_integral_rejects_wrong_length() {
        let g = build_geometry(8, 8).unwrap();
        let short = DVector::from_element(4, 1.0);
        let ok = DVector::from_element(8, 1.0);
        assert!(g.boundary_integral(&short, &ok).is_err());
    }

    #[test]
    fn normals_and_tangents() {
        let (n, t) = normal_tangent(Wall::Bottom);
        assert_eq!(n, [0.0, -1.0]);
        assert_eq!(t, [1.0, 0.0]);
        let (n, t) = normal_tangent(Wall::Top);
        assert_eq!(n, [0.0, 1.0]);
        assert_eq!(t, [-1.0, 0.0]);
        for wall in Wall::BOTH {
            let (n, t) = normal_tangent(wall);
            let det = n[0] * t[1] - n[1] * t[0];
            assert_relative_eq!(det, 1.0);
            assert_relative_eq!(n[0] * t[0] + n[1] * t[1], 0.0);
            assert_relative_eq!(n[0] * n[0] + n[1] * n[1], 1.0);
            assert_relative_eq!(t[0] * t[0] + t[1] * t[1], 1.0);
        }
    }

    #[test]
    fn gll_quadrature_is_exact_to_stated_degree() {
        // int_0^1 y^k dy = 1/(k+1) for k <= 2 ny - 3.
        let g = build_geometry(4, 6).unwrap();
        for k in 0..=g.y_exactness_degree {
            let num: f64 = (0..g.ny).map(|i| g.wy[i] * g.y[i].powi(k as i32)).sum();
            assert_relative_eq!(num, 1.0 / (k as f64 + 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn trig_quadrature_exact_for_resolved_polynomials() {
        // x-rule integrates cos(kx), sin(kx) exactly (to zero) for 0 < k < nx.
        let g = build_geometry(8, 4).unwrap();
        for k in 1..g.nx {
            let c: f64 = g.x.iter().map(|&x| (k as f64 * x).cos()).sum::<f64>() * g.wx;
            let s: f64 = g.x.iter().map(|&x| (k as f64 * x).sin()).sum::<f64>() * g.wx;
            assert!(c.abs() < 1e-12 && s.abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn diff_matrices_are_spectrally_exact() {
        let g = build_geometry(16, 10).unwrap();
        // Fourier: d/dx sin(3x) = 3 cos(3x).
        let f = g.x.map(|x| (3.0 * x).sin());
        let df = &g.dx * &f;
        for j in 0..g.nx {
            assert_relative_eq!(df[j], 3.0 * (3.0 * g.x[j]).cos(), epsilon = 1e-10);
        }
        // GLL: d/dy y^4 = 4 y^3.
        let p = g.y.map(|y| y.powi(4));
        let dp = &g.dy * &p;
        for i in 0..g.ny {
            assert_relative_eq!(dp[i], 4.0 * g.y[i].powi(3), epsilon = 1e-10);
        }
    }
}
