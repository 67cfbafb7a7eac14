//! Run configuration: one TOML file describing geometry, discretization,
//! potential, noise, control family, and run outputs. Round-trips exactly
//! through serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::GalerkinBasis;
use crate::control::AdmissibleFamily;
use crate::domain::{build_geometry, ChannelGeometry};
use crate::dynamics::{initial_coeffs, SimConfig};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::noise::{solenoidal_from_stream, NoiseChannel, NoiseModel};
use crate::potential::PotentialSpec;
use crate::spaces::vector_l2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub nx: usize,
    pub ny: usize,
}

/// One noise channel described by closed-form data: the additive part is
/// the solenoidal field of the pinched streamfunction
/// `h_amp cos(h_kx x) (y(1-y))^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannelConfig {
    pub sigma: f64,
    pub cutoff: usize,
    pub h_amp: f64,
    pub h_kx: usize,
}

/// Initial data: optional solenoidal velocity from a pinched
/// streamfunction and either the default phase stripe or rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub u_amp: f64,
    pub u_kx: usize,
    pub phi_stripe: bool,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            u_amp: 0.0,
            u_kx: 1,
            phi_stripe: true,
        }
    }
}

/// Coefficient box of the control family plus an optional fixed control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub knots: usize,
    pub kmax: usize,
    pub bound: f64,
    /// Fixed control coefficients for `simulate`/`verify`; empty = zero
    /// control.
    #[serde(default)]
    pub params: Vec<f64>,
    /// Reference coefficients generating the tracking targets for
    /// `optimize`; empty = zero targets.
    #[serde(default)]
    pub target_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub budget: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub galerkin_n: usize,
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub c0: f64,
    /// Admissibility budget of the control family.
    pub delta: f64,
    /// Integrability index of the boundary norm.
    pub p: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub noise: Vec<NoiseChannelConfig>,
    pub control: ControlConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub optimizer: OptimizerConfig,
    pub out_dir: String,
}

impl PartialEq for PotentialSpec {
    fn eq(&self, other: &Self) -> bool {
        self.c_f == other.c_f
            && self.theta == other.theta
            && self.delta == other.delta
            && self.xi == other.xi
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig { nx: 16, ny: 12 },
            galerkin_n: 16,
            t_end: 0.1,
            dt: 0.005,
            paths: 2,
            master_seed: 0,
            alpha: 1.0,
            c0: 1.0,
            delta: 1.0e6,
            p: 4.0,
            lambda1: 0.0,
            lambda2: 1.0,
            potential: PotentialSpec::default(),
            noise: vec![],
            control: ControlConfig {
                knots: 1,
                kmax: 0,
                bound: 1.0,
                params: vec![],
                target_params: vec![],
            },
            initial: InitialConfig::default(),
            optimizer: OptimizerConfig {
                budget: 50,
                restarts: 1,
            },
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        if self.geometry.nx < 4 || self.geometry.nx % 2 != 0 {
            return fail("geometry.nx", format!("must be even and >= 4, got {}", self.geometry.nx));
        }
        if self.geometry.ny < 4 {
            return fail("geometry.ny", format!("must be >= 4, got {}", self.geometry.ny));
        }
        if self.galerkin_n == 0 {
            return fail("galerkin_n", "must be >= 1".into());
        }
        if !(self.dt > 0.0) || self.t_end < 0.0 {
            return fail("t_end/dt", format!("need dt > 0 and t_end >= 0, got {} / {}", self.t_end, self.dt));
        }
        if self.paths == 0 {
            return fail("paths", "must be >= 1".into());
        }
        if !(self.alpha > 0.0) {
            return fail("alpha", format!("friction must be positive, got {}", self.alpha));
        }
        if !(self.c0 > 0.0) {
            return fail("c0", format!("must be positive, got {}", self.c0));
        }
        if !(self.p > 2.0) {
            return fail("p", format!("must exceed 2, got {}", self.p));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return fail("lambda1/lambda2", "penalty weights must be nonnegative".into());
        }
        self.potential.validate()?;
        for (i, ch) in self.noise.iter().enumerate() {
            if ch.sigma < 0.0 {
                return fail(&format!("noise[{i}].sigma"), "must be nonnegative".into());
            }
        }
        let fam = self.family();
        fam.validate()?;
        if !self.control.params.is_empty() && self.control.params.len() != fam.dim() {
            return fail(
                "control.params",
                format!("expected {} coefficients, got {}", fam.dim(), self.control.params.len()),
            );
        }
        if !self.control.target_params.is_empty()
            && self.control.target_params.len() != fam.dim()
        {
            return fail(
                "control.target_params",
                format!("expected {} coefficients, got {}", fam.dim(), self.control.target_params.len()),
            );
        }
        if self.optimizer.budget == 0 {
            return fail("optimizer.budget", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn family(&self) -> AdmissibleFamily {
        AdmissibleFamily {
            t_end: self.t_end,
            knots: self.control.knots,
            kmax: self.control.kmax,
            bound: self.control.bound,
            c0: self.c0,
            delta: self.delta,
            p: self.p,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            t_end: self.t_end,
            dt: self.dt,
            alpha: self.alpha,
            c0: self.c0,
            p: self.p,
            linear_only: false,
        }
    }

    pub fn geometry(&self) -> Result<ChannelGeometry> {
        build_geometry(self.geometry.nx, self.geometry.ny)
    }

    pub fn basis(&self, geom: &ChannelGeometry) -> Result<GalerkinBasis> {
        GalerkinBasis::build(geom, self.galerkin_n, self.alpha, self.potential.theta)
    }

    pub fn noise_model(&self, geom: &ChannelGeometry) -> Result<NoiseModel> {
        let channels = self
            .noise
            .iter()
            .map(|c| {
                let amp = c.h_amp;
                let kx = c.h_kx as f64;
                let h = solenoidal_from_stream(geom, move |x, y| {
                    amp * (kx * x).cos() * (y * (1.0 - y)).powi(2)
                });
                NoiseChannel {
                    sigma: c.sigma,
                    cutoff: c.cutoff,
                    h,
                }
            })
            .collect();
        NoiseModel::new(geom, channels)
    }

    /// Initial modal coefficients from the configured fields.
    pub fn initial_state(
        &self,
        geom: &ChannelGeometry,
        basis: &GalerkinBasis,
    ) -> Result<nalgebra::DVector<f64>> {
        let u0 = if self.initial.u_amp == 0.0 {
            VectorField::zeros(geom)
        } else {
            let amp = self.initial.u_amp;
            let kx = self.initial.u_kx as f64;
            let u = solenoidal_from_stream(geom, move |x, y| {
                amp * (kx * x).cos() * (y * (1.0 - y)).powi(2)
            });
            debug_assert!(vector_l2(geom, &u).is_finite());
            u
        };
        let phi0 = if self.initial.phi_stripe {
            crate::dynamics::stripe_phase(geom)
        } else {
            ScalarField::zeros(geom)
        };
        initial_coeffs(geom, basis, &u0, &phi0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        let mut cfg = RunConfig::default();
        cfg.noise.push(NoiseChannelConfig {
            sigma: 0.25,
            cutoff: 4,
            h_amp: 0.1,
            h_kx: 2,
        });
        cfg.control.params = vec![0.5, -0.5];
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let again = back.to_toml().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn default_config_is_valid_and_buildable() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let geom = cfg.geometry().unwrap();
        let basis = cfg.basis(&geom).unwrap();
        assert_eq!(basis.n, cfg.galerkin_n);
        let noise = cfg.noise_model(&geom).unwrap();
        assert_eq!(noise.m(), 0);
        let init = cfg.initial_state(&geom, &basis).unwrap();
        assert_eq!(init.len(), basis.n);
    }

    #[test]
    fn field_diagnostics_name_the_offender() {
        let mut cfg = RunConfig::default();
        cfg.geometry.nx = 7;
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("geometry.nx"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut cfg = RunConfig::default();
        cfg.control.params = vec![1.0];
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("control.params"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut cfg = RunConfig::default();
        cfg.p = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_reports_parse_errors_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "not = valid = toml").unwrap();
        match RunConfig::load(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("run.toml"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let cfg = RunConfig::default();
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
    }
}
