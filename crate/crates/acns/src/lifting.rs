//! Stationary Stokes lifting of non-homogeneous boundary data.
//!
//! Given wall data `a = v.n` and slip stress `b` (reported along `+x` on
//! both walls), the lifting field solves `-Lap v + grad p = 0`,
//! `div v = 0`, `v.n = a`, `[2 D(v) n + alpha v].tau = b`. The solve is
//! per Fourier mode: the streamfunction of each mode satisfies a
//! fourth-order two-point boundary value problem across the channel,
//! collocated on the interior GLL nodes with the four boundary rows
//! expressed through the same nodal differentiation matrices. The
//! resulting nodal field is exactly divergence free and satisfies the
//! nodal trace conditions to solver precision. The `k = 0` mode has the
//! closed form `u = c1 + c2 y` plus a constant vertical throughflow fixed
//! by the mean normal data.
//!
//! The Nyquist coefficient of the wall data is ignored; boundary data is
//! interpreted through the modes `|k| < nx/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::domain::{ChannelGeometry, Wall};
use crate::error::{Error, Result};
use crate::field::{ddx, ddy, ScalarField, VectorField};
use crate::spaces::{hp_gamma_norm, vector_norms, wall_fourier, WallPair};

/// Boundary data and its time derivative at one time sample.
#[derive(Debug, Clone)]
pub struct BoundarySample {
    pub t: f64,
    pub a: WallPair,
    pub b: WallPair,
    pub da_dt: WallPair,
    pub db_dt: WallPair,
}

/// Lifting field, pressure and lifted time derivative at one sample.
#[derive(Debug, Clone)]
pub struct LiftSample {
    pub t: f64,
    pub field: VectorField,
    pub pressure: ScalarField,
    pub dt_field: VectorField,
}

/// Time series of lifting solves for one control.
#[derive(Debug, Clone)]
pub struct LiftingField {
    pub alpha: f64,
    pub samples: Vec<LiftSample>,
}

/// Max relative residuals of a lifting solve.
#[derive(Debug, Clone, Copy)]
pub struct LiftResiduals {
    /// Interior momentum residual `-Lap v + grad p` (collocation rows).
    pub momentum: f64,
    /// `div v` over the grid.
    pub divergence: f64,
    /// `v.n - a` on the walls.
    pub normal: f64,
    /// `[2 D(v) n + alpha v].tau - b` on the walls (along `+x`).
    pub slip: f64,
}

fn check_wall_pair(geom: &ChannelGeometry, w: &WallPair, what: &str) -> Result<()> {
    if w.bottom.len() != geom.nx || w.top.len() != geom.nx {
        return Err(Error::Dimension(format!(
            "{what}: wall samples ({}, {}) do not match nx = {}",
            w.bottom.len(),
            w.top.len(),
            geom.nx
        )));
    }
    Ok(())
}

/// Solve the lifting problem for one set of wall data.
pub fn solve_stokes_lift(
    geom: &ChannelGeometry,
    a: &WallPair,
    b: &WallPair,
    alpha: f64,
) -> Result<(VectorField, ScalarField)> {
    check_wall_pair(geom, a, "solve_stokes_lift a")?;
    check_wall_pair(geom, b, "solve_stokes_lift b")?;
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("friction alpha must be positive, got {alpha}")));
    }
    let scale_a = a.bottom.amax().max(a.top.amax());
    let flux = geom.boundary_integral(&a.bottom, &a.top)?;
    if flux.abs() > 1e-8 * (1.0 + scale_a) {
        return Err(Error::Precondition(format!(
            "incompatible normal data: net flux {flux:.3e}"
        )));
    }
    let (ny, nx) = (geom.ny, geom.nx);
    let ab = wall_fourier(&a.bottom);
    let at = wall_fourier(&a.top);
    let bb = wall_fourier(&b.bottom);
    let bt = wall_fourier(&b.top);

    let mut psi = DMatrix::<f64>::zeros(ny, nx);
    let mut pressure = DMatrix::<f64>::zeros(ny, nx);
    let d2 = &geom.dy * &geom.dy;
    let d4 = &d2 * &d2;
    let d3 = &geom.dy * &d2;

    for k in 1..nx / 2 {
        let kf = k as f64;
        let k2 = kf * kf;
        // System rows: wall values, wall slip conditions, interior
        // collocation of psi'''' - 2 k^2 psi'' + k^4 psi = 0.
        let mut m = DMatrix::<f64>::zeros(ny, ny);
        m[(0, 0)] = 1.0;
        m[(1, ny - 1)] = 1.0;
        for c in 0..ny {
            // Bottom: -(psi'' + k^2 psi) + alpha psi'.
            m[(2, c)] = -d2[(0, c)] + alpha * geom.dy[(0, c)];
            // Top: (psi'' + k^2 psi) + alpha psi'.
            m[(3, c)] = d2[(ny - 1, c)] + alpha * geom.dy[(ny - 1, c)];
        }
        m[(2, 0)] -= k2;
        m[(3, ny - 1)] += k2;
        for (row, node) in (2..ny - 2).enumerate() {
            let r = row + 4;
            for c in 0..ny {
                m[(r, c)] = d4[(node, c)] - 2.0 * k2 * d2[(node, c)];
            }
            m[(r, node)] += k2 * k2;
        }
        let ik_inv = Complex64::new(0.0, -1.0 / kf);
        let rhs = [
            ab[k] * ik_inv,
            -(at[k] * ik_inv),
            bb[k],
            bt[k],
        ];
        let mut rhs_re = DVector::<f64>::zeros(ny);
        let mut rhs_im = DVector::<f64>::zeros(ny);
        for (i, v) in rhs.iter().enumerate() {
            rhs_re[i] = v.re;
            rhs_im[i] = v.im;
        }
        let lu = m.lu();
        let sol_re = lu
            .solve(&rhs_re)
            .ok_or_else(|| Error::Solver(format!("singular lifting system at mode {k}")))?;
        let sol_im = lu
            .solve(&rhs_im)
            .ok_or_else(|| Error::Solver(format!("singular lifting system at mode {k}")))?;

        // Pressure of the mode: (psi''' - k^2 psi') / (i k).
        let w_re = &d3 * &sol_re - k2 * (&geom.dy * &sol_re);
        let w_im = &d3 * &sol_im - k2 * (&geom.dy * &sol_im);
        for j in 0..nx {
            let (s, c) = (kf * geom.x[j]).sin_cos();
            for i in 0..ny {
                psi[(i, j)] += 2.0 * (sol_re[i] * c - sol_im[i] * s);
                pressure[(i, j)] += 2.0 * (w_im[i] * c + w_re[i] * s) / kf;
            }
        }
    }

    let mut ux = ddy(geom, &psi);
    let uy = -ddx(geom, &psi);
    let mut field = VectorField {
        ux: DMatrix::zeros(ny, nx),
        uy,
        div_free: true,
    };

    // k = 0: u0 = c1 + c2 y from the slip rows, constant throughflow v0.
    let (b_b0, b_t0) = (bb[0].re, bt[0].re);
    // -c2 + alpha c1 = b_b0; alpha c1 + (1 + alpha) c2 = b_t0.
    let c2 = (b_t0 - b_b0) / (2.0 + alpha);
    let c1 = (b_b0 + c2) / alpha;
    let v0 = 0.5 * (at[0].re - ab[0].re);
    for i in 0..ny {
        for j in 0..nx {
            ux[(i, j)] += c1 + c2 * geom.y[i];
            field.uy[(i, j)] += v0;
        }
    }
    field.ux = ux;

    Ok((
        field,
        ScalarField {
            values: pressure,
            neumann: false,
        },
    ))
}

/// Channel-frame slip trace `[2 D(v) n + alpha v] . (+x)` on a wall.
pub fn slip_trace(
    geom: &ChannelGeometry,
    alpha: f64,
    v: &VectorField,
    wall: Wall,
) -> DVector<f64> {
    let shear = ddy(geom, &v.ux) + ddx(geom, &v.uy);
    let r = geom.wall_row(wall);
    let sign = match wall {
        Wall::Bottom => -1.0,
        Wall::Top => 1.0,
    };
    DVector::from_fn(geom.nx, |j, _| sign * shear[(r, j)] + alpha * v.ux[(r, j)])
}

/// Residuals of a lifting solve against its data, relative to the larger
/// of the data scale and 1.
pub fn lift_residuals(
    geom: &ChannelGeometry,
    alpha: f64,
    a: &WallPair,
    b: &WallPair,
    field: &VectorField,
    pressure: &ScalarField,
) -> LiftResiduals {
    let scale = field
        .ux
        .amax()
        .max(field.uy.amax())
        .max(a.bottom.amax())
        .max(a.top.amax())
        .max(b.bottom.amax())
        .max(b.top.amax())
        .max(1.0);
    let div = field.divergence(geom).amax() / scale;
    let mut normal = 0.0f64;
    let mut slip = 0.0f64;
    for wall in Wall::BOTH {
        let n_res = field.normal_trace(geom, wall) - a.get(wall);
        normal = normal.max(n_res.amax());
        let s_res = slip_trace(geom, alpha, field, wall) - b.get(wall);
        slip = slip.max(s_res.amax());
    }
    // Momentum residual on the interior collocation rows.
    let lap = |m: &DMatrix<f64>| ddx(geom, &ddx(geom, m)) + ddy(geom, &ddy(geom, m));
    let rx = -lap(&field.ux) + ddx(geom, &pressure.values);
    let ry = -lap(&field.uy) + ddy(geom, &pressure.values);
    let mut momentum = 0.0f64;
    for i in 2..geom.ny.saturating_sub(2) {
        for j in 0..geom.nx {
            momentum = momentum.max(rx[(i, j)].abs().max(ry[(i, j)].abs()));
        }
    }
    LiftResiduals {
        momentum: momentum / scale,
        divergence: div,
        normal: normal / scale,
        slip: slip / scale,
    }
}

/// Lift a time series of boundary data; `dt_field` lifts the derivative
/// data directly through the same linear solve.
pub fn lift_time_series(
    geom: &ChannelGeometry,
    alpha: f64,
    data: &[BoundarySample],
) -> Result<LiftingField> {
    let mut samples = Vec::with_capacity(data.len());
    for s in data {
        let (field, pressure) = solve_stokes_lift(geom, &s.a, &s.b, alpha)?;
        let (dt_field, _) = solve_stokes_lift(geom, &s.da_dt, &s.db_dt, alpha)?;
        samples.push(LiftSample {
            t: s.t,
            field,
            pressure,
            dt_field,
        });
    }
    Ok(LiftingField { alpha, samples })
}

impl LiftingField {
    /// Worst residuals over all samples against the generating data.
    pub fn max_residuals(&self, geom: &ChannelGeometry, data: &[BoundarySample]) -> Result<LiftResiduals> {
        if data.len() != self.samples.len() {
            return Err(Error::Dimension("max_residuals: sample count mismatch".into()));
        }
        let mut worst = LiftResiduals {
            momentum: 0.0,
            divergence: 0.0,
            normal: 0.0,
            slip: 0.0,
        };
        for (ls, bs) in self.samples.iter().zip(data) {
            let r = lift_residuals(geom, self.alpha, &bs.a, &bs.b, &ls.field, &ls.pressure);
            worst.momentum = worst.momentum.max(r.momentum);
            worst.divergence = worst.divergence.max(r.divergence);
            worst.normal = worst.normal.max(r.normal);
            worst.slip = worst.slip.max(r.slip);
        }
        Ok(worst)
    }
}

/// Per-sample and supremum of
/// `(||v||_{H1} + ||dv/dt||_{L2}) / ||(a, b)||` with the graded boundary
/// norm in the denominator.
pub fn lift_estimate_ratio(
    geom: &ChannelGeometry,
    lift: &LiftingField,
    data: &[BoundarySample],
    p: f64,
) -> Result<(Vec<f64>, f64)> {
    if data.len() != lift.samples.len() {
        return Err(Error::Dimension("lift_estimate_ratio: sample count mismatch".into()));
    }
    let mut ratios = Vec::with_capacity(data.len());
    let mut sup = 0.0f64;
    for (ls, bs) in lift.samples.iter().zip(data) {
        let denom = hp_gamma_norm(&bs.a, &bs.b, &bs.da_dt, &bs.db_dt, p)?;
        if denom < 1e-12 {
            return Err(Error::Precondition(
                "lift_estimate_ratio: control vanishes at a sample".into(),
            ));
        }
        let fnorm = vector_norms(geom, &ls.field);
        let dnorm = vector_norms(geom, &ls.dt_field);
        let r = (fnorm.h1 + dnorm.l2) / denom;
        sup = sup.max(r);
        ratios.push(r);
    }
    Ok((ratios, sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_geometry;
    use approx::assert_relative_eq;

    fn sine_pair(geom: &ChannelGeometry, amp_bottom: f64, amp_top: f64, k: f64) -> WallPair {
        WallPair {
            bottom: DVector::from_fn(geom.nx, |j, _| amp_bottom * (k * geom.x[j]).sin()),
            top: DVector::from_fn(geom.nx, |j, _| amp_top * (k * geom.x[j]).sin()),
        }
    }

    #[test]
    fn zero_data_lifts_to_zero() {
        let g = build_geometry(8, 8).unwrap();
        let z = WallPair::zeros(g.nx);
        let (v, p) = solve_stokes_lift(&g, &z, &z, 1.0).unwrap();
        assert!(v.ux.amax() < 1e-13 && v.uy.amax() < 1e-13);
        assert!(p.values.amax() < 1e-13);
    }

    #[test]
    fn constant_slip_gives_plug_flow() {
        let g = build_geometry(8, 8).unwrap();
        let c = 0.8;
        let a = WallPair::zeros(g.nx);
        let b = WallPair {
            bottom: DVector::from_element(g.nx, c),
            top: DVector::from_element(g.nx, c),
        };
        let (v, p) = solve_stokes_lift(&g, &a, &b, 1.0).unwrap();
        for val in v.ux.iter() {
            assert_relative_eq!(*val, c, epsilon = 1e-10);
        }
        assert!(v.uy.amax() < 1e-10);
        assert!(p.values.amax() < 1e-10);
        let r = lift_residuals(&g, 1.0, &a, &b, &v, &p);
        assert!(r.divergence < 1e-10);
        assert!(r.normal < 1e-10);
        assert!(r.slip < 1e-10);
        assert!(r.momentum < 1e-10);
    }

    #[test]
    fn sine_normal_data_has_small_residuals_and_scales_linearly() {
        let g = build_geometry(12, 14).unwrap();
        let eps = 0.01;
        let a = sine_pair(&g, -eps, eps, 1.0);
        let b = WallPair::zeros(g.nx);
        let (v, p) = solve_stokes_lift(&g, &a, &b, 1.0).unwrap();
        let r = lift_residuals(&g, 1.0, &a, &b, &v, &p);
        assert!(r.divergence < 1e-9, "div {:.3e}", r.divergence);
        assert!(r.normal < 1e-8, "normal {:.3e}", r.normal);
        assert!(r.slip < 1e-7, "slip {:.3e}", r.slip);

        let a2 = sine_pair(&g, -2.0 * eps, 2.0 * eps, 1.0);
        let (v2, _) = solve_stokes_lift(&g, &a2, &b, 1.0).unwrap();
        let n1 = vector_norms(&g, &v);
        let n2 = vector_norms(&g, &v2);
        assert_relative_eq!(n2.l2, 2.0 * n1.l2, max_relative = 1e-9);
    }

    #[test]
    fn lift_is_linear_in_the_data() {
        let g = build_geometry(12, 12).unwrap();
        let a1 = sine_pair(&g, 0.3, -0.3, 1.0);
        let b1 = sine_pair(&g, 0.1, 0.2, 2.0);
        let a2 = sine_pair(&g, -0.2, 0.2, 2.0);
        let b2 = WallPair {
            bottom: DVector::from_element(g.nx, 0.5),
            top: DVector::from_element(g.nx, -0.1),
        };
        let (va, _) = solve_stokes_lift(&g, &a1, &b1, 1.0).unwrap();
        let (vb, _) = solve_stokes_lift(&g, &a2, &b2, 1.0).unwrap();
        let sum_a = WallPair {
            bottom: &a1.bottom + &a2.bottom,
            top: &a1.top + &a2.top,
        };
        let sum_b = WallPair {
            bottom: &b1.bottom + &b2.bottom,
            top: &b1.top + &b2.top,
        };
        let (vs, _) = solve_stokes_lift(&g, &sum_a, &sum_b, 1.0).unwrap();
        let scale = vs.ux.amax().max(1.0);
        let dx = (&vs.ux - &va.ux - &vb.ux).amax();
        let dy = (&vs.uy - &va.uy - &vb.uy).amax();
        assert!(dx / scale < 1e-9 && dy / scale < 1e-9);
    }

    #[test]
    fn incompatible_normal_data_is_rejected() {
        let g = build_geometry(8, 8).unwrap();
        let a = WallPair {
            bottom: DVector::from_element(g.nx, 1.0),
            top: DVector::from_element(g.nx, 0.5),
        };
        let b = WallPair::zeros(g.nx);
        assert!(solve_stokes_lift(&g, &a, &b, 1.0).is_err());
    }

    #[test]
    fn pressure_has_zero_mean() {
        let g = build_geometry(12, 12).unwrap();
        let a = sine_pair(&g, -0.4, 0.4, 1.0);
        let b = sine_pair(&g, 0.2, -0.3, 2.0);
        let (_, p) = solve_stokes_lift(&g, &a, &b, 1.0).unwrap();
        let ones = DMatrix::from_element(g.ny, g.nx, 1.0);
        let mean = crate::spaces::grid_inner(&g, &p.values, &ones) / g.area();
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn estimate_ratio_is_scale_invariant_and_guards_zero() {
        let g = build_geometry(12, 12).unwrap();
        let mk = |s: f64| BoundarySample {
            t: 0.0,
            a: sine_pair(&g, -0.3 * s, 0.3 * s, 1.0),
            b: sine_pair(&g, 0.2 * s, 0.1 * s, 1.0),
            da_dt: sine_pair(&g, 0.1 * s, -0.1 * s, 1.0),
            db_dt: WallPair::zeros(g.nx),
        };
        let data1 = vec![mk(1.0)];
        let data5 = vec![mk(5.0)];
        let l1 = lift_time_series(&g, 1.0, &data1).unwrap();
        let l5 = lift_time_series(&g, 1.0, &data5).unwrap();
        let (_, s1) = lift_estimate_ratio(&g, &l1, &data1, 4.0).unwrap();
        let (_, s5) = lift_estimate_ratio(&g, &l5, &data5, 4.0).unwrap();
        assert_relative_eq!(s1, s5, max_relative = 1e-8);

        let zero = vec![BoundarySample {
            t: 0.0,
            a: WallPair::zeros(g.nx),
            b: WallPair::zeros(g.nx),
            da_dt: WallPair::zeros(g.nx),
            db_dt: WallPair::zeros(g.nx),
        }];
        let lz = lift_time_series(&g, 1.0, &zero).unwrap();
        assert!(lift_estimate_ratio(&g, &lz, &zero, 4.0).is_err());
    }

    #[test]
    fn time_series_residuals_stay_small() {
        let g = build_geometry(12, 12).unwrap();
        let data: Vec<BoundarySample> = (0..4)
            .map(|i| {
                let t = i as f64 * 0.1;
                BoundarySample {
                    t,
                    a: sine_pair(&g, -0.2 * (1.0 + t), 0.2 * (1.0 + t), 1.0),
                    b: sine_pair(&g, 0.1, 0.3 * t, 2.0),
                    da_dt: sine_pair(&g, -0.2, 0.2, 1.0),
                    db_dt: sine_pair(&g, 0.0, 0.3, 2.0),
                }
            })
            .collect();
        let lift = lift_time_series(&g, 1.0, &data).unwrap();
        let r = lift.max_residuals(&g, &data).unwrap();
        assert!(r.divergence < 1e-9);
        assert!(r.normal < 1e-8);
        assert!(r.slip < 1e-7);
    }
}
