//! Galerkin dynamics of the coupled velocity/phase system with boundary
//! forcing and multiplicative noise.
//!
//! The state is the coefficient vector of `(u, phi)` in the merged
//! eigenbasis; the full velocity is `v = u + a` with `a` the Stokes
//! lifting of the boundary data. One step is semi-implicit
//! Euler-Maruyama: the slip form and the shifted Neumann operator are
//! implicit, the convection (in skew form), capillary coupling, potential
//! derivative, lifting terms and Ito noise increment are explicit.
//!
//! The capillary force uses the `L^2` projection of the chemical
//! potential onto the span of the phase modes. With diagonal quadrature
//! the capillary and transport pairings then cancel pointwise against
//! each other and the skew convection reduces to a pure wall flux, so the
//! spatial part of the energy balance closes exactly and the recorded
//! balance residual is a pure time-discretization error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::{GalerkinBasis, ModeKind};
use crate::domain::{ChannelGeometry, Wall};
use crate::error::{Error, Result};
use crate::field::{ddx, ddy, ScalarField, VectorField};
use crate::lifting::{solve_stokes_lift, BoundarySample};
use crate::noise::{sample_wiener, NoiseModel, WienerIncrement};
use crate::potential::{
    chemical_potential, energy_e, energy_tilde, little_f_shifted_grid, PotentialSpec,
};
use crate::spaces::{
    boundary_vector_inner, grid_inner, hp_gamma_norm, scalar_inner, slip_norm_sq,
    strain, v_norm_sq, vector_inner, vector_l2, y_norm_sq, WallPair,
};

/// Time-dependent boundary data source.
pub trait BoundaryData {
    fn sample(&self, geom: &ChannelGeometry, t: f64) -> Result<BoundarySample>;
    /// True when the data vanishes identically (enables homogeneous
    /// fast paths and division guards downstream).
    fn is_zero(&self) -> bool {
        false
    }
}

/// The homogeneous boundary condition.
pub struct ZeroControl;

impl BoundaryData for ZeroControl {
    fn sample(&self, geom: &ChannelGeometry, t: f64) -> Result<BoundarySample> {
        Ok(BoundarySample {
            t,
            a: WallPair::zeros(geom.nx),
            b: WallPair::zeros(geom.nx),
            da_dt: WallPair::zeros(geom.nx),
            db_dt: WallPair::zeros(geom.nx),
        })
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// Source of Wiener increments per step; abstracted so refinement studies
/// can share one fine Brownian path across step sizes.
pub trait IncrementProvider {
    fn increments(&mut self, step: usize, dt: f64, m: usize) -> Result<WienerIncrement>;
}

/// Fresh independent increments from an owned generator.
pub struct RngIncrements<R: rand::Rng> {
    pub rng: R,
}

impl<R: rand::Rng> IncrementProvider for RngIncrements<R> {
    fn increments(&mut self, _step: usize, dt: f64, m: usize) -> Result<WienerIncrement> {
        sample_wiener(dt, m, &mut self.rng)
    }
}

/// One Brownian path tabulated at a fine resolution; coarse steps receive
/// the sum of `ratio` consecutive fine increments.
pub struct SharedIncrements {
    fine: Vec<Vec<f64>>,
    fine_dt: f64,
    ratio: usize,
}

impl SharedIncrements {
    /// Tabulate `n_fine` increments of size `fine_dt` for `m` channels.
    pub fn generate(
        fine_dt: f64,
        n_fine: usize,
        m: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let mut fine = Vec::with_capacity(n_fine);
        for _ in 0..n_fine {
            fine.push(sample_wiener(fine_dt, m, rng)?.dw);
        }
        Ok(Self {
            fine,
            fine_dt,
            ratio: 1,
        })
    }

    /// View of the same path at step size `ratio * fine_dt`.
    pub fn at_ratio(&self, ratio: usize) -> Result<SharedIncrements> {
        if ratio == 0 || self.fine.len() % ratio != 0 {
            return Err(Error::Precondition(format!(
                "coarsening ratio {ratio} does not divide {} fine steps",
                self.fine.len()
            )));
        }
        Ok(SharedIncrements {
            fine: self.fine.clone(),
            fine_dt: self.fine_dt,
            ratio,
        })
    }
}

impl IncrementProvider for SharedIncrements {
    fn increments(&mut self, step: usize, dt: f64, m: usize) -> Result<WienerIncrement> {
        let expect = self.fine_dt * self.ratio as f64;
        if (dt - expect).abs() > 1e-12 * expect.max(1e-300) {
            return Err(Error::Precondition(format!(
                "shared increments tabulated for dt = {expect}, requested {dt}"
            )));
        }
        let lo = step * self.ratio;
        let hi = lo + self.ratio;
        if hi > self.fine.len() {
            return Err(Error::Precondition("shared increment table exhausted".into()));
        }
        let mut dw = vec![0.0; m];
        for row in &self.fine[lo..hi] {
            if row.len() != m {
                return Err(Error::Dimension("shared increment channel count mismatch".into()));
            }
            for (d, r) in dw.iter_mut().zip(row) {
                *d += r;
            }
        }
        Ok(WienerIncrement { dw })
    }
}

/// Trilinear convection form `int (v . grad w) . z`.
pub fn convect(
    geom: &ChannelGeometry,
    v: &VectorField,
    w: &VectorField,
    z: &VectorField,
) -> f64 {
    let wx_x = ddx(geom, &w.ux);
    let wx_y = ddy(geom, &w.ux);
    let wy_x = ddx(geom, &w.uy);
    let wy_y = ddy(geom, &w.uy);
    let cx = v.ux.zip_map(&wx_x, |a, b| a * b) + v.uy.zip_map(&wx_y, |a, b| a * b);
    let cy = v.ux.zip_map(&wy_x, |a, b| a * b) + v.uy.zip_map(&wy_y, |a, b| a * b);
    grid_inner(geom, &cx, &z.ux) + grid_inner(geom, &cy, &z.uy)
}

/// Boundary flux `(1/2) int_Gamma (v.n) (w . z)`.
fn half_wall_flux(
    geom: &ChannelGeometry,
    v: &VectorField,
    w: &VectorField,
    z: &VectorField,
) -> f64 {
    let mut acc = 0.0;
    for wall in Wall::BOTH {
        let r = geom.wall_row(wall);
        let vn = v.normal_trace(geom, wall);
        for j in 0..geom.nx {
            acc += vn[j] * (w.ux[(r, j)] * z.ux[(r, j)] + w.uy[(r, j)] * z.uy[(r, j)]);
        }
    }
    0.5 * geom.wall_weight() * acc
}

/// Skew-symmetrized convection
/// `(1/2)[(v.grad w, z) - (v.grad z, w)] + (1/2) int_Gamma (v.n)(w.z)`;
/// equals `convect` for exactly solenoidal `v` and satisfies the wall-flux
/// identity `b(v, u, u) = (1/2) int_Gamma (v.n) |u|^2` identically.
pub fn convect_skew(
    geom: &ChannelGeometry,
    v: &VectorField,
    w: &VectorField,
    z: &VectorField,
) -> f64 {
    0.5 * (convect(geom, v, w, z) - convect(geom, v, z, w)) + half_wall_flux(geom, v, w, z)
}

/// Capillary pairing `(mu grad phi, w)`.
pub fn capillary(
    geom: &ChannelGeometry,
    mu: &ScalarField,
    phi: &ScalarField,
    w: &VectorField,
) -> f64 {
    let px = ddx(geom, &phi.values);
    let py = ddy(geom, &phi.values);
    let fx = mu.values.zip_map(&px, |m, g| m * g);
    let fy = mu.values.zip_map(&py, |m, g| m * g);
    grid_inner(geom, &fx, &w.ux) + grid_inner(geom, &fy, &w.uy)
}

/// Tangential boundary forcing `int_Gamma b (w_i . tau)` per velocity
/// mode, with `b` and the tangential trace both along `+x`.
pub fn boundary_forcing(
    geom: &ChannelGeometry,
    b: &WallPair,
    basis: &GalerkinBasis,
) -> Result<DVector<f64>> {
    if b.bottom.len() != geom.nx || b.top.len() != geom.nx {
        return Err(Error::Dimension("boundary_forcing: sample length mismatch".into()));
    }
    let idx = basis.velocity_indices();
    let mut out = DVector::zeros(idx.len());
    for (slot, &i) in idx.iter().enumerate() {
        let w = basis.modes[i].velocity.as_ref().unwrap();
        let mut acc = 0.0;
        for wall in Wall::BOTH {
            let tr = w.tangential_trace(geom, wall);
            acc += tr.dot(b.get(wall));
        }
        out[slot] = geom.wall_weight() * acc;
    }
    Ok(out)
}

struct VelModeOps {
    field: VectorField,
    lambda: f64,
    strain: (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>),
    grad_ux: (DMatrix<f64>, DMatrix<f64>),
    grad_uy: (DMatrix<f64>, DMatrix<f64>),
}

struct PhaseModeOps {
    field: ScalarField,
}

/// Precomputed per-mode operator tables for the integrator.
pub struct ModalOperators {
    vel: Vec<VelModeOps>,
    phase: Vec<PhaseModeOps>,
    vel_slots: Vec<usize>,
    phase_slots: Vec<usize>,
    phase_mass: DMatrix<f64>,
    phase_mass_chol: Cholesky<f64, Dyn>,
}

impl ModalOperators {
    pub fn build(geom: &ChannelGeometry, basis: &GalerkinBasis) -> Result<Self> {
        let mut vel = Vec::new();
        let mut phase = Vec::new();
        let mut vel_slots = Vec::new();
        let mut phase_slots = Vec::new();
        for (i, m) in basis.modes.iter().enumerate() {
            match m.kind {
                ModeKind::Velocity => {
                    let f = m.velocity.clone().unwrap();
                    vel.push(VelModeOps {
                        strain: strain(geom, &f),
                        grad_ux: (ddx(geom, &f.ux), ddy(geom, &f.ux)),
                        grad_uy: (ddx(geom, &f.uy), ddy(geom, &f.uy)),
                        lambda: m.lambda,
                        field: f,
                    });
                    vel_slots.push(i);
                }
                ModeKind::Phase => {
                    phase.push(PhaseModeOps {
                        field: m.phase.clone().unwrap(),
                    });
                    phase_slots.push(i);
                }
            }
        }
        let phase_mass = basis.phase_mass_matrix(geom);
        let phase_mass_chol = phase_mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Solver("phase mass matrix not SPD".into()))?;
        Ok(Self {
            vel,
            phase,
            vel_slots,
            phase_slots,
            phase_mass,
            phase_mass_chol,
        })
    }

    pub fn n_vel(&self) -> usize {
        self.vel.len()
    }

    pub fn n_phase(&self) -> usize {
        self.phase.len()
    }

    fn velocity_grid(&self, geom: &ChannelGeometry, beta: &DVector<f64>) -> VectorField {
        let mut u = VectorField::zeros(geom);
        for (c, m) in beta.iter().zip(&self.vel) {
            u.axpy(*c, &m.field);
        }
        u
    }

    fn phase_grid(&self, geom: &ChannelGeometry, chi: &DVector<f64>) -> ScalarField {
        let mut p = ScalarField::zeros(geom);
        for (c, m) in chi.iter().zip(&self.phase) {
            p.values += *c * &m.field.values;
        }
        p
    }
}

/// Simulation parameters shared by a run.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub alpha: f64,
    /// Weight constant of the exponential damping in the monitor columns.
    pub c0: f64,
    /// Integrability index of the boundary norm (> 2).
    pub p: f64,
    /// Drop convection, capillary and potential terms (linear test mode).
    pub linear_only: bool,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.t_end < 0.0 {
            return Err(Error::Precondition(format!(
                "bad time grid: t_end = {}, dt = {}",
                self.t_end, self.dt
            )));
        }
        let n = self.steps();
        if self.t_end > 0.0 && ((n as f64) * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Precondition(format!(
                "dt = {} does not divide t_end = {}",
                self.dt, self.t_end
            )));
        }
        if !(self.p > 2.0) {
            return Err(Error::Precondition(format!("boundary index p must exceed 2, got {}", self.p)));
        }
        Ok(())
    }
}

/// Energy and monitor columns at one time sample.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub e: f64,
    pub e_tilde: f64,
    pub y_sq: f64,
    pub v_sq: f64,
    pub mu_sq: f64,
    /// `||(a,b)||^2 + 1` of the boundary data.
    pub lambda_ctrl: f64,
    /// `||(a,b)||^4 + 1`.
    pub b_ctrl: f64,
    /// `|a|^2 ||a||^2 + lambda_ctrl` of the lifting field.
    pub f_tilde: f64,
    /// `exp(-c0 t - c0 int f_tilde)`.
    pub g_weight: f64,
    /// Running defect of the discrete energy balance.
    pub ito_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

/// One sample path of the Galerkin system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Merged-basis coefficients per sample.
    pub states: Vec<DVector<f64>>,
    pub trace: EnergyTrace,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }
}

/// Modal coefficients of initial data `(u0, phi0)`.
pub fn initial_coeffs(
    geom: &ChannelGeometry,
    basis: &GalerkinBasis,
    u0: &VectorField,
    phi0: &ScalarField,
) -> Result<DVector<f64>> {
    if !u0.matches(geom) || !phi0.matches(geom) {
        return Err(Error::Dimension("initial_coeffs: field/geometry mismatch".into()));
    }
    let mut c = DVector::zeros(basis.n);
    let gx = ddx(geom, &phi0.values);
    let gy = ddy(geom, &phi0.values);
    for (i, m) in basis.modes.iter().enumerate() {
        c[i] = match m.kind {
            ModeKind::Velocity => vector_inner(geom, u0, m.velocity.as_ref().unwrap()),
            ModeKind::Phase => {
                let p = m.phase.as_ref().unwrap();
                let px = ddx(geom, &p.values);
                let py = ddy(geom, &p.values);
                grid_inner(geom, &gx, &px)
                    + grid_inner(geom, &gy, &py)
                    + basis.theta * scalar_inner(geom, phi0, p)
            }
        };
    }
    Ok(c)
}

/// Default initial phase profile: a smooth stripe between the two wells.
pub fn stripe_phase(geom: &ChannelGeometry) -> ScalarField {
    ScalarField::from_fn(geom, true, |x, _| (2.0 * x.sin()).tanh())
}

struct StepEval {
    u: VectorField,
    drift_vel: DVector<f64>,
    noise_gain: DMatrix<f64>,
    rhs_phase: DVector<f64>,
    slip_u_sq: f64,
    mu_sq: f64,
    ito_drift_rate: f64,
}

struct LiftData {
    sample: BoundarySample,
    field: VectorField,
    dt_field: VectorField,
    hp_norm: f64,
}

fn lift_at(
    geom: &ChannelGeometry,
    ctrl: &dyn BoundaryData,
    cfg: &SimConfig,
    t: f64,
) -> Result<LiftData> {
    let sample = ctrl.sample(geom, t)?;
    let (field, dt_field, hp_norm) = if ctrl.is_zero() {
        (VectorField::zeros(geom), VectorField::zeros(geom), 0.0)
    } else {
        let (f, _) = solve_stokes_lift(geom, &sample.a, &sample.b, cfg.alpha)?;
        let (df, _) = solve_stokes_lift(geom, &sample.da_dt, &sample.db_dt, cfg.alpha)?;
        let hp = hp_gamma_norm(&sample.a, &sample.b, &sample.da_dt, &sample.db_dt, cfg.p)?;
        (f, df, hp)
    };
    Ok(LiftData {
        sample,
        field,
        dt_field,
        hp_norm,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_step(
    geom: &ChannelGeometry,
    basis: &GalerkinBasis,
    ops: &ModalOperators,
    pot: &PotentialSpec,
    noise: &NoiseModel,
    cfg: &SimConfig,
    lift: &LiftData,
    coeffs: &DVector<f64>,
) -> Result<StepEval> {
    let nv = ops.n_vel();
    let np = ops.n_phase();
    let beta = DVector::from_fn(nv, |s, _| coeffs[ops.vel_slots[s]]);
    let chi = DVector::from_fn(np, |s, _| coeffs[ops.phase_slots[s]]);
    let u = ops.velocity_grid(geom, &beta);
    let phi = ops.phase_grid(geom, &chi);
    let mut v = u.clone();
    v.axpy(1.0, &lift.field);

    // Chemical potential projected onto the phase-mode span.
    let (mu_d, mu_sq, mu_coefs) = if cfg.linear_only {
        (ScalarField::zeros(geom), 0.0, DVector::zeros(np))
    } else {
        let mu_grid = chemical_potential(geom, &phi, pot)?;
        let r = DVector::from_fn(np, |s, _| scalar_inner(geom, &mu_grid, &ops.phase[s].field));
        let c = ops.phase_mass_chol.solve(&r);
        (ops.phase_grid(geom, &c), c.dot(&r), c)
    };
    let _ = mu_coefs;

    let phi_x = ddx(geom, &phi.values);
    let phi_y = ddy(geom, &phi.values);

    // Velocity drift.
    let (sa11, sa22, sa12) = strain(geom, &lift.field);
    let conv_x;
    let conv_y;
    if cfg.linear_only {
        conv_x = DMatrix::zeros(geom.ny, geom.nx);
        conv_y = DMatrix::zeros(geom.ny, geom.nx);
    } else {
        let vx_x = ddx(geom, &v.ux);
        let vx_y = ddy(geom, &v.ux);
        let vy_x = ddx(geom, &v.uy);
        let vy_y = ddy(geom, &v.uy);
        conv_x = v.ux.zip_map(&vx_x, |a, b| a * b) + v.uy.zip_map(&vx_y, |a, b| a * b);
        conv_y = v.ux.zip_map(&vy_x, |a, b| a * b) + v.uy.zip_map(&vy_y, |a, b| a * b);
    }
    let bforce = boundary_forcing(geom, &lift.sample.b, basis)?;
    let mut drift = DVector::zeros(nv);
    for s in 0..nv {
        let m = &ops.vel[s];
        // Slip pairing with the lifting field.
        let slip_a = 2.0
            * (grid_inner(geom, &sa11, &m.strain.0)
                + grid_inner(geom, &sa22, &m.strain.1)
                + 2.0 * grid_inner(geom, &sa12, &m.strain.2))
            + cfg.alpha * boundary_vector_inner(geom, &lift.field, &m.field);
        let mut n_i = -slip_a + bforce[s] - vector_inner(geom, &lift.dt_field, &m.field);
        if !cfg.linear_only {
            // Skew convection b(v, v, w_i).
            let term1 = grid_inner(geom, &conv_x, &m.field.ux) + grid_inner(geom, &conv_y, &m.field.uy);
            let cwx = v.ux.zip_map(&m.grad_ux.0, |a, b| a * b)
                + v.uy.zip_map(&m.grad_ux.1, |a, b| a * b);
            let cwy = v.ux.zip_map(&m.grad_uy.0, |a, b| a * b)
                + v.uy.zip_map(&m.grad_uy.1, |a, b| a * b);
            let term2 = grid_inner(geom, &cwx, &v.ux) + grid_inner(geom, &cwy, &v.uy);
            let flux = half_wall_flux(geom, &v, &v, &m.field);
            n_i -= 0.5 * (term1 - term2) + flux;
            // Capillary forcing.
            let fx = mu_d.values.zip_map(&phi_x, |a, b| a * b);
            let fy = mu_d.values.zip_map(&phi_y, |a, b| a * b);
            n_i += grid_inner(geom, &fx, &m.field.ux) + grid_inner(geom, &fy, &m.field.uy);
        }
        drift[s] = n_i;
    }

    // Modal noise gains.
    let mch = noise.m();
    let mut gains = DMatrix::zeros(nv, mch);
    for (k, ch) in noise.channels.iter().enumerate() {
        for s in 0..nv {
            let mut g = vector_inner(geom, &ch.h, &ops.vel[s].field);
            if ch.sigma != 0.0 && s < ch.cutoff {
                g += ch.sigma * (beta[s] + vector_inner(geom, &lift.field, &ops.vel[s].field));
            }
            gains[(s, k)] = g;
        }
    }

    // Phase right-hand side (explicit part).
    let mut rhs_phase = DVector::zeros(np);
    if !cfg.linear_only {
        let f_grid = little_f_shifted_grid(pot, &phi);
        let trans = v.ux.zip_map(&phi_x, |a, b| a * b) + v.uy.zip_map(&phi_y, |a, b| a * b);
        for s in 0..np {
            rhs_phase[s] = grid_inner(geom, &f_grid, &ops.phase[s].field.values)
                + grid_inner(geom, &trans, &ops.phase[s].field.values);
        }
    }

    // Energy-ledger drift rate (Ito balance bookkeeping).
    let slip_u_sq = slip_norm_sq(geom, cfg.alpha, &u);
    let mut ito = -2.0 * slip_u_sq - 2.0 * mu_sq;
    if !ctrl_is_zero_lift(lift) {
        // I1: slip pairing with a, wall fluxes of the convection, slip forcing.
        let slip_au = 2.0
            * (grid_inner(geom, &sa11, &strain(geom, &u).0)
                + grid_inner(geom, &sa22, &strain(geom, &u).1)
                + 2.0 * grid_inner(geom, &sa12, &strain(geom, &u).2))
            + cfg.alpha * boundary_vector_inner(geom, &lift.field, &u);
        let mut wall_terms = 0.0;
        for wall in Wall::BOTH {
            let a_tr = lift.sample.a.get(wall);
            let b_tr = lift.sample.b.get(wall);
            let u_t = u.tangential_trace(geom, wall);
            for j in 0..geom.nx {
                wall_terms += geom.wall_weight()
                    * (-a_tr[j] * u_t[j] * u_t[j] + 2.0 * b_tr[j] * u_t[j]);
            }
        }
        ito += -2.0 * slip_au + wall_terms;
        // I2: lifted time derivative and cross convection.
        ito += -2.0 * vector_inner(geom, &lift.dt_field, &u)
            - 2.0 * convect_skew(geom, &v, &lift.field, &u);
        // I3: phase transport by the lifting field.
        if !cfg.linear_only {
            let ta = lift.field.ux.zip_map(&phi_x, |a, b| a * b)
                + lift.field.uy.zip_map(&phi_y, |a, b| a * b);
            ito += -2.0 * grid_inner(geom, &ta, &mu_d.values);
        }
    }
    // I4: Ito correction of the projected noise.
    let i4: f64 = gains.iter().map(|g| g * g).sum();
    ito += i4;

    Ok(StepEval {
        u,
        drift_vel: drift,
        noise_gain: gains,
        rhs_phase,
        slip_u_sq,
        mu_sq,
        ito_drift_rate: ito,
    })
}

fn ctrl_is_zero_lift(lift: &LiftData) -> bool {
    lift.field.ux.amax() == 0.0
        && lift.field.uy.amax() == 0.0
        && lift.dt_field.ux.amax() == 0.0
        && lift.dt_field.uy.amax() == 0.0
}

fn trace_row(
    geom: &ChannelGeometry,
    ops: &ModalOperators,
    pot: &PotentialSpec,
    cfg: &SimConfig,
    lift: &LiftData,
    coeffs: &DVector<f64>,
    t: f64,
    ftilde_integral: f64,
    ito_residual: f64,
) -> Result<(TraceRow, f64)> {
    let beta = DVector::from_fn(ops.n_vel(), |s, _| coeffs[ops.vel_slots[s]]);
    let chi = DVector::from_fn(ops.n_phase(), |s, _| coeffs[ops.phase_slots[s]]);
    let u = ops.velocity_grid(geom, &beta);
    let phi = ops.phase_grid(geom, &chi);
    let e = energy_e(geom, &u, &phi, pot)?;
    let e_tilde = energy_tilde(geom, &u, &phi);
    let y_sq = y_norm_sq(geom, &u, &phi);
    let v_sq = v_norm_sq(geom, cfg.alpha, pot.theta, &u, &phi);
    let mu_grid = chemical_potential(geom, &phi, pot)?;
    let r = DVector::from_fn(ops.n_phase(), |s, _| {
        scalar_inner(geom, &mu_grid, &ops.phase[s].field)
    });
    let mu_sq = ops.phase_mass_chol.solve(&r).dot(&r);
    let hp2 = lift.hp_norm * lift.hp_norm;
    let lambda_ctrl = hp2 + 1.0;
    let b_ctrl = hp2 * hp2 + 1.0;
    let a_l2 = vector_l2(geom, &lift.field);
    let f_tilde = a_l2 * a_l2 * slip_norm_sq(geom, cfg.alpha, &lift.field) + lambda_ctrl;
    let g_weight = (-cfg.c0 * t - cfg.c0 * ftilde_integral).exp();
    Ok((
        TraceRow {
            t,
            e,
            e_tilde,
            y_sq,
            v_sq,
            mu_sq,
            lambda_ctrl,
            b_ctrl,
            f_tilde,
            g_weight,
            ito_residual,
        },
        f_tilde,
    ))
}

/// Integrate one sample path.
pub fn simulate_path(
    geom: &ChannelGeometry,
    basis: &GalerkinBasis,
    ops: &ModalOperators,
    pot: &PotentialSpec,
    noise: &NoiseModel,
    ctrl: &dyn BoundaryData,
    cfg: &SimConfig,
    initial: &DVector<f64>,
    inc: &mut dyn IncrementProvider,
) -> Result<Trajectory> {
    cfg.validate()?;
    if (pot.theta - basis.theta).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "potential shift {} does not match basis shift {}",
            pot.theta, basis.theta
        )));
    }
    if initial.len() != basis.n {
        return Err(Error::Dimension(format!(
            "initial coefficients {} != basis size {}",
            initial.len(),
            basis.n
        )));
    }
    let nsteps = cfg.steps();
    let np = ops.n_phase();
    let nv = ops.n_vel();
    // Implicit phase matrix (M + dt I), factored once.
    let step_mat = &ops.phase_mass + cfg.dt * DMatrix::<f64>::identity(np, np);
    let step_chol = step_mat
        .cholesky()
        .ok_or_else(|| Error::Solver("implicit phase matrix not SPD".into()))?;

    let mut coeffs = initial.clone();
    let mut times = Vec::with_capacity(nsteps + 1);
    let mut states = Vec::with_capacity(nsteps + 1);
    let mut rows = Vec::with_capacity(nsteps + 1);

    let mut lift_cur = lift_at(geom, ctrl, cfg, 0.0)?;
    let mut ftilde_integral = 0.0;
    let (row0, mut ftilde_prev) = trace_row(
        geom, ops, pot, cfg, &lift_cur, &coeffs, 0.0, 0.0, 0.0,
    )?;
    let e_tilde_0 = row0.e_tilde;
    times.push(0.0);
    states.push(coeffs.clone());
    rows.push(row0);

    let mut balance_accum = 0.0;
    for step in 0..nsteps {
        let t = step as f64 * cfg.dt;
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::BlowUp {
                t,
                detail: "non-finite coefficients".into(),
            });
        }
        let eval = evaluate_step(geom, basis, ops, pot, noise, cfg, &lift_cur, &coeffs)?;
        let dw = inc.increments(step, cfg.dt, noise.m())?;
        // Velocity block: implicit slip form.
        for s in 0..nv {
            let i = ops.vel_slots[s];
            let mut num = coeffs[i] + cfg.dt * eval.drift_vel[s];
            for k in 0..noise.m() {
                num += eval.noise_gain[(s, k)] * dw.dw[k];
            }
            coeffs[i] = num / (1.0 + cfg.dt * ops.vel[s].lambda);
        }
        // Phase block: implicit shifted Neumann operator.
        let chi = DVector::from_fn(np, |s, _| states.last().unwrap()[ops.phase_slots[s]]);
        let rhs = &ops.phase_mass * &chi - cfg.dt * &eval.rhs_phase;
        let chi_new = step_chol.solve(&rhs);
        for s in 0..np {
            coeffs[ops.phase_slots[s]] = chi_new[s];
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::BlowUp {
                t: t + cfg.dt,
                detail: "non-finite coefficients after step".into(),
            });
        }

        // Ledger: drift plus martingale part of the balance.
        let mut noise_work = 0.0;
        for k in 0..noise.m() {
            let mut gu = 0.0;
            for s in 0..nv {
                gu += eval.noise_gain[(s, k)]
                    * vector_inner(geom, &eval.u, &ops.vel[s].field);
            }
            noise_work += 2.0 * gu * dw.dw[k];
        }
        let _ = (eval.slip_u_sq, eval.mu_sq);
        balance_accum += cfg.dt * eval.ito_drift_rate + noise_work;

        let t1 = (step + 1) as f64 * cfg.dt;
        let lift_next = lift_at(geom, ctrl, cfg, t1)?;
        // Trapezoid update of int f_tilde for the damping weight.
        let (row_tmp, ftilde_now) = trace_row(
            geom,
            ops,
            pot,
            cfg,
            &lift_next,
            &coeffs,
            t1,
            ftilde_integral,
            0.0,
        )?;
        ftilde_integral += 0.5 * cfg.dt * (ftilde_prev + ftilde_now);
        ftilde_prev = ftilde_now;
        let (mut row, _) = trace_row(
            geom,
            ops,
            pot,
            cfg,
            &lift_next,
            &coeffs,
            t1,
            ftilde_integral,
            0.0,
        )?;
        row.ito_residual = row_tmp.e_tilde - e_tilde_0 - balance_accum;
        times.push(t1);
        states.push(coeffs.clone());
        rows.push(row);
        lift_cur = lift_next;
    }

    Ok(Trajectory {
        times,
        states,
        trace: EnergyTrace { rows },
    })
}
