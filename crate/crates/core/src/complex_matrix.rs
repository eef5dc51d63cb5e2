//! Complex symmetric matrices with positive definite real part, their unique
//! square roots inside that cone, and branch-continuous square roots of
//! time-varying complex scalars.
//!
//! The cone square root is computed with a determinant-scaled Denman-Beavers
//! iteration. Since the spectrum of a cone matrix lies in the open right
//! half-plane, the iteration converges to the principal square root, which is
//! the unique root inside the cone.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{HkError, Result};
use crate::C64;

/// Entrywise symmetry tolerance for cone membership.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative residual tolerance for `cone_sqrt`: `‖R² - M‖_F / ‖M‖_F`.
pub const SQRT_RESIDUAL_TOL: f64 = 1e-10;
/// Below this magnitude a branch-tracked argument counts as a zero crossing.
pub const ZERO_CROSSING_TOL: f64 = 1e-14;

const MAX_SQRT_ITERS: usize = 80;

/// A validated complex symmetric matrix with positive definite real part.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeMatrix {
    entries: DMatrix<C64>,
}

impl ConeMatrix {
    /// Identity matrix of dimension `d`.
    pub fn identity(d: usize) -> Self {
        ConeMatrix {
            entries: DMatrix::identity(d, d),
        }
    }

    /// `z · id` for a scalar `z` with positive real part.
    pub fn scaled_identity(d: usize, z: C64) -> Result<Self> {
        cone_check(DMatrix::from_diagonal_element(d, d, z))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn determinant(&self) -> C64 {
        self.entries.determinant()
    }

    /// Inverse. Cone matrices are always invertible (spectrum in `Re z > 0`).
    pub fn inverse(&self) -> DMatrix<C64> {
        self.entries
            .clone()
            .try_inverse()
            .expect("cone matrix must be invertible")
    }

    /// Real part as a real matrix.
    pub fn real_part(&self) -> DMatrix<f64> {
        self.entries.map(|z| z.re)
    }
}

/// Validates cone membership: symmetry to [`SYMMETRY_TOL`] and positive
/// definite real part (checked via Cholesky).
pub fn cone_check(m: DMatrix<C64>) -> Result<ConeMatrix> {
    cone_check_with_tol(m, SYMMETRY_TOL)
}

/// [`cone_check`] with a caller-supplied symmetry tolerance.
pub fn cone_check_with_tol(m: DMatrix<C64>, sym_tol: f64) -> Result<ConeMatrix> {
    if m.nrows() != m.ncols() {
        return Err(HkError::BadShape(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = (&m - m.transpose()).map(|z| z.norm()).max();
    if defect > sym_tol {
        return Err(HkError::NotSymmetric {
            defect,
            tol: sym_tol,
        });
    }
    let re = m.map(|z| z.re);
    if re.cholesky().is_none() {
        return Err(HkError::RealPartNotPD);
    }
    Ok(ConeMatrix { entries: m })
}

/// The unique square root of `m` inside the cone, via determinant-scaled
/// Denman-Beavers iteration.
pub fn cone_sqrt(m: &ConeMatrix) -> Result<ConeMatrix> {
    let d = m.dim();
    let a = &m.entries;
    let mut y = a.clone();
    let mut z: DMatrix<C64> = DMatrix::identity(d, d);
    let norm_a = a.norm();

    let mut converged = false;
    for _ in 0..MAX_SQRT_ITERS {
        // Determinant scaling accelerates convergence for spread spectra.
        let scale = (y.determinant() * z.determinant()).norm();
        let mu = if scale.is_finite() && scale > 0.0 {
            scale.powf(-1.0 / (2.0 * d as f64))
        } else {
            1.0
        };
        let ys = &y * C64::from(mu);
        let zs = &z * C64::from(mu);
        let zs_inv = zs
            .clone()
            .try_inverse()
            .ok_or(HkError::ConvergenceFailure { residual: f64::NAN })?;
        let ys_inv = ys
            .clone()
            .try_inverse()
            .ok_or(HkError::ConvergenceFailure { residual: f64::NAN })?;
        let y_next = (&ys + &zs_inv) * C64::from(0.5);
        let z_next = (&zs + &ys_inv) * C64::from(0.5);
        let step = (&y_next - &ys).norm();
        y = y_next;
        z = z_next;
        if step <= 1e-14 * y.norm() {
            converged = true;
            break;
        }
    }

    let residual = (&y * &y - a).norm() / norm_a;
    if !converged || !residual.is_finite() || residual > SQRT_RESIDUAL_TOL {
        return Err(HkError::ConvergenceFailure { residual });
    }
    // The principal root of a cone matrix lies in the cone; re-validate with a
    // tolerance that admits iteration roundoff on the symmetry defect.
    cone_check_with_tol(y, 1e-10 * (1.0 + norm_a))
}

/// Branch state for a continuity-tracked square root of a complex path.
///
/// The caller must sample the path finely enough that the argument never
/// advances by more than `π` between consecutive samples; nearest-root
/// selection then reproduces the continuous branch.
#[derive(Debug, Clone, Copy)]
pub struct BranchState {
    current_value: C64,
    previous_argument: C64,
}

impl BranchState {
    /// Seeds the branch at `root0` with `root0² = w0` (relative `1e-10`).
    pub fn new(w0: C64, root0: C64) -> Result<Self> {
        let defect = (root0 * root0 - w0).norm() / w0.norm().max(f64::MIN_POSITIVE);
        if !defect.is_finite() || defect > 1e-10 {
            return Err(HkError::InconsistentSeed { defect });
        }
        Ok(BranchState {
            current_value: root0,
            previous_argument: w0,
        })
    }

    /// The square root most recently selected.
    pub fn current_value(&self) -> C64 {
        self.current_value
    }

    /// The last tracked argument.
    pub fn previous_argument(&self) -> C64 {
        self.previous_argument
    }

    /// Advances to `w_new`, selecting the root nearest the previous one.
    pub fn step(&mut self, w_new: C64) -> Result<C64> {
        if w_new.norm() < ZERO_CROSSING_TOL {
            return Err(HkError::ZeroCrossing {
                magnitude: w_new.norm(),
            });
        }
        let r = w_new.sqrt();
        let root = if (r - self.current_value).norm() <= (r + self.current_value).norm() {
            r
        } else {
            -r
        };
        self.current_value = root;
        self.previous_argument = w_new;
        Ok(root)
    }
}

/// Seeds branch tracking; see [`BranchState::new`].
pub fn branch_sqrt_init(w0: C64, root0: C64) -> Result<BranchState> {
    BranchState::new(w0, root0)
}

/// One branch-tracking step; see [`BranchState::step`].
pub fn branch_sqrt_step(state: &mut BranchState, w_new: C64) -> Result<C64> {
    state.step(w_new)
}

/// Random cone matrix `S + iK` with `S = R Rᵀ + ¼·id` and symmetric `K`.
pub fn random_cone_matrix<R: Rng>(d: usize, rng: &mut R) -> ConeMatrix {
    let r = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let s = &r * r.transpose() + DMatrix::<f64>::identity(d, d) * 0.25;
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.5..1.5));
    let k = (&g + g.transpose()) * 0.5;
    let m = DMatrix::from_fn(d, d, |i, j| C64::new(s[(i, j)], k[(i, j)]));
    cone_check(m).expect("construction yields a cone matrix")
}
