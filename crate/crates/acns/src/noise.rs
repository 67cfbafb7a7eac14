//! Multi-channel Wiener increments and the multiplicative noise operator.
//!
//! The reference noise model is affine per channel:
//! `g_k(t, v) = sigma_k P_k(v) + h_k`, where `P_k` projects onto the
//! first `cutoff_k` divergence-free basis modes and `h_k` is a fixed
//! solenoidal, wall-impermeable field. The channel family norm is the sum
//! of per-channel `L^2` norms, under which the declared constant
//! `K = 2 max((sum sigma_k)^2, (sum |h_k|)^2)` makes both the Lipschitz
//! and linear-growth bounds hold by construction.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::basis::GalerkinBasis;
use crate::domain::{ChannelGeometry, Wall};
use crate::error::{Error, Result};
use crate::field::{ddx, ddy, VectorField};
use crate::spaces::{vector_inner, vector_l2};

/// One noise channel: gain, projection cutoff and additive field.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub sigma: f64,
    /// Number of leading velocity modes kept by the channel projection.
    pub cutoff: usize,
    pub h: VectorField,
}

/// The full m-channel noise operator with its declared growth constant.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub channels: Vec<NoiseChannel>,
    /// Declared constant for both Lipschitz and growth bounds.
    pub k_const: f64,
}

/// Divergence-free field from a nodal streamfunction sample.
pub fn solenoidal_from_stream(
    geom: &ChannelGeometry,
    psi_fn: impl Fn(f64, f64) -> f64,
) -> VectorField {
    let psi = DMatrix::from_fn(geom.ny, geom.nx, |i, j| psi_fn(geom.x[j], geom.y[i]));
    VectorField {
        ux: ddy(geom, &psi),
        uy: -ddx(geom, &psi),
        div_free: true,
    }
}

impl NoiseModel {
    pub fn new(geom: &ChannelGeometry, channels: Vec<NoiseChannel>) -> Result<Self> {
        let mut sigma_sum = 0.0;
        let mut h_sum = 0.0;
        for (k, ch) in channels.iter().enumerate() {
            if !ch.h.matches(geom) {
                return Err(Error::Dimension(format!("noise channel {k}: field/geometry mismatch")));
            }
            let scale = ch.h.ux.amax().max(ch.h.uy.amax()).max(1.0);
            if ch.h.divergence(geom).amax() > 1e-8 * scale {
                return Err(Error::Precondition(format!(
                    "noise channel {k}: additive field is not divergence free"
                )));
            }
            for wall in Wall::BOTH {
                if ch.h.normal_trace(geom, wall).amax() > 1e-9 * scale {
                    return Err(Error::Precondition(format!(
                        "noise channel {k}: additive field leaks through a wall"
                    )));
                }
            }
            sigma_sum += ch.sigma.abs();
            h_sum += vector_l2(geom, &ch.h);
        }
        let k_const = 2.0 * (sigma_sum * sigma_sum).max(h_sum * h_sum);
        Ok(Self { channels, k_const })
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }
}

/// Apply the noise operator: one output field per channel.
pub fn noise_apply(
    geom: &ChannelGeometry,
    basis: &GalerkinBasis,
    model: &NoiseModel,
    _t: f64,
    v: &VectorField,
) -> Result<Vec<VectorField>> {
    if !v.matches(geom) {
        return Err(Error::Dimension("noise_apply: field/geometry mismatch".into()));
    }
    if !v.div_free {
        return Err(Error::Precondition("noise_apply requires a divergence-free field".into()));
    }
    let vel_idx = basis.velocity_indices();
    let mut out = Vec::with_capacity(model.m());
    for ch in &model.channels {
        let mut g = ch.h.clone();
        if ch.sigma != 0.0 {
            let keep = ch.cutoff.min(vel_idx.len());
            for &i in vel_idx.iter().take(keep) {
                let w = basis.modes[i].velocity.as_ref().unwrap();
                let c = ch.sigma * vector_inner(geom, v, w);
                g.axpy(c, w);
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Family norm of a channel list: sum of `L^2` norms.
pub fn channel_family_norm(geom: &ChannelGeometry, fields: &[VectorField]) -> f64 {
    fields.iter().map(|f| vector_l2(geom, f)).sum()
}

/// m independent Gaussian increments of variance `dt`.
#[derive(Debug, Clone)]
pub struct WienerIncrement {
    pub dw: Vec<f64>,
}

pub fn sample_wiener(dt: f64, m: usize, rng: &mut impl Rng) -> Result<WienerIncrement> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("Wiener increment needs dt > 0, got {dt}")));
    }
    let normal = Normal::new(0.0, dt.sqrt())
        .map_err(|e| Error::Precondition(format!("bad Gaussian parameters: {e}")))?;
    Ok(WienerIncrement {
        dw: (0..m).map(|_| normal.sample(rng)).collect(),
    })
}

/// Per-path generator: same master seed, one independent stream per path.
pub fn path_rng(master_seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(path);
    rng
}

/// Outcome of a brute-force check of the Lipschitz and growth bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct H1Audit {
    pub pairs: usize,
    pub violations: usize,
    pub max_lipschitz_ratio: f64,
    pub max_growth_ratio: f64,
}

/// Draw random resolved fields and check
/// `|g(v) - g(w)|^2 <= K |v - w|^2` and `|g(v)|^2 <= K (1 + |v|^2)`
/// against the declared constant.
pub fn h1_audit(
    geom: &ChannelGeometry,
    basis: &GalerkinBasis,
    model: &NoiseModel,
    pairs: usize,
    rng: &mut impl Rng,
) -> Result<H1Audit> {
    let vel_idx = basis.velocity_indices();
    if vel_idx.is_empty() {
        return Err(Error::Precondition("h1_audit needs velocity modes".into()));
    }
    let random_field = |rng: &mut dyn rand::RngCore| -> VectorField {
        let mut v = VectorField::zeros(geom);
        for (rank, &i) in vel_idx.iter().enumerate() {
            // Decaying random spectrum keeps draws at O(1) norm.
            let amp = rng.gen_range(-1.0..1.0) / (1.0 + rank as f64);
            v.axpy(amp, basis.modes[i].velocity.as_ref().unwrap());
        }
        v
    };
    let mut audit = H1Audit {
        pairs,
        violations: 0,
        max_lipschitz_ratio: 0.0,
        max_growth_ratio: 0.0,
    };
    let k = model.k_const;
    for _ in 0..pairs {
        let v = random_field(rng);
        let w = random_field(rng);
        let gv = noise_apply(geom, basis, model, 0.0, &v)?;
        let gw = noise_apply(geom, basis, model, 0.0, &w)?;
        let mut diff_fields = Vec::with_capacity(gv.len());
        for (a, b) in gv.iter().zip(&gw) {
            let mut d = a.clone();
            d.axpy(-1.0, b);
            diff_fields.push(d);
        }
        let lip_num = channel_family_norm(geom, &diff_fields).powi(2);
        let mut vw = v.clone();
        vw.axpy(-1.0, &w);
        let lip_den = vector_inner(geom, &vw, &vw);
        let growth_num = channel_family_norm(geom, &gv).powi(2);
        let growth_den = 1.0 + vector_inner(geom, &v, &v);
        let slack = 1.0 + 1e-9;
        if lip_den > 1e-14 {
            let r = lip_num / lip_den;
            audit.max_lipschitz_ratio = audit.max_lipschitz_ratio.max(r);
            if r > k * slack {
                audit.violations += 1;
            }
        }
        let rg = growth_num / growth_den;
        audit.max_growth_ratio = audit.max_growth_ratio.max(rg);
        if rg > k * slack {
            audit.violations += 1;
        }
    }
    Ok(audit)
}
