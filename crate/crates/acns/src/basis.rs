//! Discrete divergence-free velocity space and the coupled Galerkin
//! eigenbasis.
//!
//! Velocities are generated by a nodal streamfunction `psi` through
//! `u = (psi_y, -psi_x)`, which makes the discrete divergence vanish
//! identically and pins `u . n = 0` on both walls. The streamfunction is
//! gauged to zero on the bottom wall; the top wall carries one shared
//! constant degree of freedom (the net flux through the channel), interior
//! nodes are free. The eigenbasis diagonalizes two generalized symmetric
//! problems: the slip form against the velocity mass matrix, and the
//! squared shifted Neumann operator against the graded product
//! `(grad ., grad .) + theta (., .)`. Spectra are merged in ascending
//! order with velocity modes first on ties.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::domain::{ChannelGeometry, Wall};
use crate::error::{Error, Result};
use crate::field::{ddx, ddy, ScalarField, VectorField};
use crate::spaces::{neg_laplacian, scalar_inner};

/// Column-major flattening of a `ny x nx` grid, matching `DMatrix` storage.
fn flat(_geom: &ChannelGeometry, m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unflat(geom: &ChannelGeometry, v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(geom.ny, geom.nx, v.as_slice())
}

/// Quadrature weight of each flattened grid entry.
fn weight_vector(geom: &ChannelGeometry) -> DVector<f64> {
    DVector::from_fn(geom.ny * geom.nx, |idx, _| {
        let i = idx % geom.ny;
        geom.wx * geom.wy[i]
    })
}

/// Exactly divergence-free velocity space with wall-impermeable members.
#[derive(Debug, Clone)]
pub struct DivFreeSpace {
    pub nv: usize,
    /// `ux` grids of the basis velocities, one flattened column per DOF.
    bx: DMatrix<f64>,
    /// `uy` grids of the basis velocities.
    by: DMatrix<f64>,
    /// Weighted mass matrix `B^T W B`.
    gram_l2: DMatrix<f64>,
    gram_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    wvec: DVector<f64>,
    ny: usize,
    nx: usize,
}

impl DivFreeSpace {
    pub fn new(geom: &ChannelGeometry) -> Result<Self> {
        let (ny, nx) = (geom.ny, geom.nx);
        let nv = 1 + (ny - 2) * nx;
        let ng = ny * nx;
        let mut bx = DMatrix::zeros(ng, nv);
        let mut by = DMatrix::zeros(ng, nv);
        let mut psi = DMatrix::zeros(ny, nx);
        for k in 0..nv {
            psi.fill(0.0);
            if k == 0 {
                // Shared constant on the top wall: the net-flux mode.
                for j in 0..nx {
                    psi[(ny - 1, j)] = 1.0;
                }
            } else {
                let i = 1 + (k - 1) / nx;
                let j = (k - 1) % nx;
                psi[(i, j)] = 1.0;
            }
            bx.set_column(k, &flat(geom, &ddy(geom, &psi)));
            by.set_column(k, &flat(geom, &(-ddx(geom, &psi))));
        }
        let wvec = weight_vector(geom);
        let mut wbx = bx.clone();
        let mut wby = by.clone();
        for r in 0..ng {
            for c in 0..nv {
                wbx[(r, c)] *= wvec[r];
                wby[(r, c)] *= wvec[r];
            }
        }
        let gram_l2 = bx.transpose() * &wbx + by.transpose() * &wby;
        let sym = 0.5 * (&gram_l2 + gram_l2.transpose());
        let gram_chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Solver("divergence-free mass matrix not SPD".into()))?;
        Ok(Self {
            nv,
            bx,
            by,
            gram_l2: sym,
            gram_chol,
            wvec,
            ny,
            nx,
        })
    }

    pub fn mass_matrix(&self) -> &DMatrix<f64> {
        &self.gram_l2
    }

    /// Velocity field generated by a DOF vector.
    pub fn velocity(&self, geom: &ChannelGeometry, dofs: &DVector<f64>) -> Result<VectorField> {
        if dofs.len() != self.nv || !geom.same_grid(self.nx, self.ny) {
            return Err(Error::Dimension("velocity: DOF/space mismatch".into()));
        }
        let ux = unflat(geom, &(&self.bx * dofs));
        let uy = unflat(geom, &(&self.by * dofs));
        Ok(VectorField {
            ux,
            uy,
            div_free: true,
        })
    }

    /// Dual pairing `k -> <w, u_k>` with every basis velocity.
    pub fn moments(&self, geom: &ChannelGeometry, w: &VectorField) -> Result<DVector<f64>> {
        if !w.matches(geom) || !geom.same_grid(self.nx, self.ny) {
            return Err(Error::Dimension("moments: field/space mismatch".into()));
        }
        let mut fx = flat(geom, &w.ux);
        let mut fy = flat(geom, &w.uy);
        for r in 0..fx.len() {
            fx[r] *= self.wvec[r];
            fy[r] *= self.wvec[r];
        }
        Ok(self.bx.transpose() * fx + self.by.transpose() * fy)
    }

    /// Slip bilinear form matrix `2 (D u_k, D u_l) + alpha int_Gamma u_k . u_l`.
    pub fn slip_matrix(&self, geom: &ChannelGeometry, alpha: f64) -> DMatrix<f64> {
        let ng = self.ny * self.nx;
        let mut e11 = DMatrix::zeros(ng, self.nv);
        let mut e22 = DMatrix::zeros(ng, self.nv);
        let mut e12 = DMatrix::zeros(ng, self.nv);
        // Wall samples of ux (uy vanishes on the walls for this space).
        let mut tr = DMatrix::zeros(2 * self.nx, self.nv);
        for k in 0..self.nv {
            let ux = unflat(geom, &self.bx.column(k).clone_owned());
            let uy = unflat(geom, &self.by.column(k).clone_owned());
            e11.set_column(k, &flat(geom, &ddx(geom, &ux)));
            e22.set_column(k, &flat(geom, &ddy(geom, &uy)));
            e12.set_column(
                k,
                &flat(geom, &(0.5 * (ddy(geom, &ux) + ddx(geom, &uy)))),
            );
            for j in 0..self.nx {
                tr[(j, k)] = ux[(geom.wall_row(Wall::Bottom), j)];
                tr[(self.nx + j, k)] = ux[(geom.wall_row(Wall::Top), j)];
            }
        }
        let weigh = |m: &DMatrix<f64>, s: f64| {
            let mut w = m.clone();
            for r in 0..ng {
                for c in 0..self.nv {
                    w[(r, c)] *= s * self.wvec[r];
                }
            }
            w
        };
        let k = e11.transpose() * weigh(&e11, 2.0)
            + e22.transpose() * weigh(&e22, 2.0)
            + e12.transpose() * weigh(&e12, 4.0)
            + (alpha * geom.wall_weight()) * tr.transpose() * &tr;
        0.5 * (&k + k.transpose())
    }

    /// `L^2`-orthogonal projection onto the space; returns the projected
    /// field and its DOF vector.
    pub fn project(
        &self,
        geom: &ChannelGeometry,
        w: &VectorField,
    ) -> Result<(VectorField, DVector<f64>)> {
        let rhs = self.moments(geom, w)?;
        let dofs = self.gram_chol.solve(&rhs);
        Ok((self.velocity(geom, &dofs)?, dofs))
    }
}

/// `L^2`-orthogonal projection of a vector field onto the divergence-free
/// space.
pub fn project_div_free(
    geom: &ChannelGeometry,
    space: &DivFreeSpace,
    w: &VectorField,
) -> Result<VectorField> {
    Ok(space.project(geom, w)?.0)
}

/// Solve `K x = lambda B x` with symmetric `K` and SPD `B` through the
/// Cholesky transform. Returns eigenvalues ascending with `B`-orthonormal
/// columns; each column is sign-fixed so its largest entry is positive.
pub fn sym_generalized_eig(
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    if k.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Dimension("generalized eigenproblem needs square matrices".into()));
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("right-hand matrix not SPD".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let lt = l.transpose();
    let vecs = lt
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &bb| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[bb]).unwrap());
    let mut lambdas = Vec::with_capacity(n);
    let mut sorted = DMatrix::zeros(n, n);
    for (pos, &idx) in order.iter().enumerate() {
        lambdas.push(eig.eigenvalues[idx]);
        let mut col = vecs.column(idx).clone_owned();
        let mut imax = 0;
        for r in 1..n {
            if col[r].abs() > col[imax].abs() {
                imax = r;
            }
        }
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        sorted.set_column(pos, &col);
    }
    Ok((lambdas, sorted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Velocity,
    Phase,
}

/// One eigenmode of the coupled basis. Exactly one of the two fields is
/// nonzero depending on `kind`.
#[derive(Debug, Clone)]
pub struct Mode {
    pub lambda: f64,
    pub kind: ModeKind,
    pub velocity: Option<VectorField>,
    pub phase: Option<ScalarField>,
}

/// First `n` modes of the merged velocity/phase spectrum.
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    pub n: usize,
    pub alpha: f64,
    pub theta: f64,
    pub modes: Vec<Mode>,
}

impl GalerkinBasis {
    pub fn build(geom: &ChannelGeometry, n: usize, alpha: f64, theta: f64) -> Result<Self> {
        if theta <= 0.0 {
            return Err(Error::Precondition(format!("theta must be positive, got {theta}")));
        }
        let space = DivFreeSpace::new(geom)?;
        let np = geom.ny * geom.nx;
        if n == 0 || n > space.nv + np {
            return Err(Error::Precondition(format!(
                "basis size {n} outside 1..={}",
                space.nv + np
            )));
        }
        // Velocity block: slip form vs L2 mass.
        let kv = space.slip_matrix(geom, alpha);
        let (lam_v, vec_v) = sym_generalized_eig(&kv, space.mass_matrix())?;

        // Phase block: the shifted Neumann operator as a nodal matrix.
        let mut a_mat = DMatrix::zeros(np, np);
        let mut unit = DMatrix::zeros(geom.ny, geom.nx);
        for c in 0..np {
            let i = c % geom.ny;
            let j = c / geom.ny;
            unit[(i, j)] = 1.0;
            let img = neg_laplacian(geom, &unit) + theta * &unit;
            a_mat.set_column(c, &flat(geom, &img));
            unit[(i, j)] = 0.0;
        }
        let wvec = weight_vector(geom);
        let mut wa = a_mat.clone();
        for r in 0..np {
            for c in 0..np {
                wa[(r, c)] *= wvec[r];
            }
        }
        // Graded Gram equals W A by the variational construction.
        let bp = 0.5 * (&wa + wa.transpose());
        let kp = {
            let m = a_mat.transpose() * &wa;
            0.5 * (&m + m.transpose())
        };
        let (lam_p, vec_p) = sym_generalized_eig(&kp, &bp)?;

        // Merge spectra, velocity first on ties.
        let mut tagged: Vec<(f64, ModeKind, usize)> = Vec::with_capacity(space.nv + np);
        for (i, &l) in lam_v.iter().enumerate() {
            tagged.push((l, ModeKind::Velocity, i));
        }
        for (i, &l) in lam_p.iter().enumerate() {
            tagged.push((l, ModeKind::Phase, i));
        }
        tagged.sort_by(|a, b| {
            a.0.partial_cmp(&b.0).unwrap().then_with(|| {
                let rank = |k: ModeKind| if k == ModeKind::Velocity { 0 } else { 1 };
                rank(a.1).cmp(&rank(b.1))
            })
        });
        let mut modes = Vec::with_capacity(n);
        for &(lambda, kind, idx) in tagged.iter().take(n) {
            match kind {
                ModeKind::Velocity => {
                    let dofs = vec_v.column(idx).clone_owned();
                    modes.push(Mode {
                        lambda,
                        kind,
                        velocity: Some(space.velocity(geom, &dofs)?),
                        phase: None,
                    });
                }
                ModeKind::Phase => {
                    let grid = unflat(geom, &vec_p.column(idx).clone_owned());
                    modes.push(Mode {
                        lambda,
                        kind,
                        velocity: None,
                        phase: Some(ScalarField {
                            values: grid,
                            neumann: true,
                        }),
                    });
                }
            }
        }
        Ok(Self {
            n,
            alpha,
            theta,
            modes,
        })
    }

    pub fn velocity_indices(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == ModeKind::Velocity)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn phase_indices(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == ModeKind::Phase)
            .map(|(i, _)| i)
            .collect()
    }

    /// `L^2` Gram matrix of the phase modes (they are graded-orthonormal,
    /// not `L^2`-orthonormal).
    pub fn phase_mass_matrix(&self, geom: &ChannelGeometry) -> DMatrix<f64> {
        let idx = self.phase_indices();
        let m = idx.len();
        let mut g = DMatrix::zeros(m, m);
        for a in 0..m {
            let fa = self.modes[idx[a]].phase.as_ref().unwrap();
            for b in a..m {
                let fb = self.modes[idx[b]].phase.as_ref().unwrap();
                let v = scalar_inner(geom, fa, fb);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Reconstruct `(u, phi)` grids from modal coefficients ordered as the
    /// merged spectrum.
    pub fn synthesize(
        &self,
        geom: &ChannelGeometry,
        coeffs: &DVector<f64>,
    ) -> Result<(VectorField, ScalarField)> {
        if coeffs.len() != self.n {
            return Err(Error::Dimension(format!(
                "coefficient vector length {} != basis size {}",
                coeffs.len(),
                self.n
            )));
        }
        let mut u = VectorField::zeros(geom);
        let mut phi = ScalarField::zeros(geom);
        for (i, mode) in self.modes.iter().enumerate() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            match mode.kind {
                ModeKind::Velocity => u.axpy(c, mode.velocity.as_ref().unwrap()),
                ModeKind::Phase => {
                    phi.values += c * &mode.phase.as_ref().unwrap().values;
                }
            }
        }
        Ok((u, phi))
    }
}
