//! The `𝒵` matrix, the Herman-Kluk prefactor `u₀` (closed form and ODE
//! form), the frozen-Gaussian constant symbol and the thawed-Gaussian width
//! matrix, all evaluated along trajectory records.
//!
//! With Jacobian blocks `F = [[A, B], [C, D]]` (`A = ∂X/∂q` and so on) and a
//! width pair `(Θˣ, Θʸ)`,
//!
//! ```text
//! 𝒵(F) = (Θʸ)⁻¹AᵀΘˣ - iBᵀΘˣ + i(Θʸ)⁻¹Cᵀ + Dᵀ,
//! ```
//!
//! which reduces to `Aᵀ - iBᵀ + iCᵀ + Dᵀ` for identity widths. The prefactor
//! is the branch-continuous square root `u₀(t) = det(Θʸ𝒵(t))^{1/2}·e^{-i∫h₁}`
//! seeded at `det(Θˣ+Θʸ)^{1/2}`, where the seed root is fixed through the
//! cone square root of `Θˣ+Θʸ`.

use nalgebra::DMatrix;

use crate::complex_matrix::{cone_check, cone_check_with_tol, cone_sqrt, BranchState, ConeMatrix};
use crate::error::{HkError, Result};
use crate::flow::TrajectoryRecord;
use crate::C64;

/// The constant width pair `(Θˣ, Θʸ)` of an FIO, with cached derived data.
#[derive(Debug, Clone)]
pub struct WidthPair {
    theta_x: ConeMatrix,
    theta_y: ConeMatrix,
    theta_y_inv: DMatrix<C64>,
    det_theta_y: C64,
    seed_root: C64,
    det_z_floor: f64,
}

impl WidthPair {
    pub fn new(theta_x: ConeMatrix, theta_y: ConeMatrix) -> Result<Self> {
        if theta_x.dim() != theta_y.dim() {
            return Err(HkError::BadShape(format!(
                "width dimensions differ: {} vs {}",
                theta_x.dim(),
                theta_y.dim()
            )));
        }
        let d = theta_x.dim();
        let sum = cone_check(theta_x.entries() + theta_y.entries())?;
        let seed_root = cone_sqrt(&sum)?.determinant();
        let theta_y_inv = theta_y.inverse();
        let det_theta_y = theta_y.determinant();
        // |det 𝒵|² ≥ 2^d · det(Re Θˣ) · det(Re (Θʸ)⁻¹), from the positive
        // semidefinite splitting of 𝒵(ReΘˣ)⁻¹𝒵* and determinant
        // superadditivity. For real widths this is 2^d·det(Θˣ)/det(Θʸ).
        let det_re_x = theta_x.real_part().determinant();
        let det_re_y_inv = theta_y_inv.map(|z| z.re).determinant();
        let det_z_floor = 2f64.powi(d as i32) * det_re_x * det_re_y_inv;
        Ok(WidthPair {
            theta_x,
            theta_y,
            theta_y_inv,
            det_theta_y,
            seed_root,
            det_z_floor,
        })
    }

    /// Identity widths `Θˣ = Θʸ = id`.
    pub fn identity(d: usize) -> Self {
        Self::new(ConeMatrix::identity(d), ConeMatrix::identity(d))
            .expect("identity widths are valid")
    }

    pub fn dim(&self) -> usize {
        self.theta_x.dim()
    }

    pub fn theta_x(&self) -> &ConeMatrix {
        &self.theta_x
    }

    pub fn theta_y(&self) -> &ConeMatrix {
        &self.theta_y
    }

    /// `det(Θˣ+Θʸ)^{1/2}` computed as the determinant of the cone square
    /// root; this fixes the branch of the prefactor seed.
    pub fn seed_root(&self) -> C64 {
        self.seed_root
    }

    /// Proven lower bound for `|det 𝒵|²` along any symplectic path.
    pub fn det_z_floor(&self) -> f64 {
        self.det_z_floor
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(C64::from)
}

fn check_even_square(f: &DMatrix<f64>, d: usize) -> Result<()> {
    if f.nrows() != 2 * d || f.ncols() != 2 * d {
        return Err(HkError::BadShape(format!(
            "expected {}x{} Jacobian, got {}x{}",
            2 * d,
            2 * d,
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(())
}

/// Applies the width sandwich to any `2d×2d` real matrix.
fn sandwich(f: &DMatrix<f64>, widths: &WidthPair) -> DMatrix<C64> {
    let d = widths.dim();
    let i = C64::i();
    let a_t = complexify(&f.view((0, 0), (d, d)).transpose());
    let b_t = complexify(&f.view((0, d), (d, d)).transpose());
    let c_t = complexify(&f.view((d, 0), (d, d)).transpose());
    let d_t = complexify(&f.view((d, d), (d, d)).transpose());
    let tx = widths.theta_x.entries();
    let ty_inv = &widths.theta_y_inv;
    ty_inv * &a_t * tx - (&b_t * tx) * i + (ty_inv * &c_t) * i + d_t
}

/// `𝒵(F)` for a flow Jacobian `F`.
pub fn zmatrix(f: &DMatrix<f64>, widths: &WidthPair) -> Result<DMatrix<C64>> {
    check_even_square(f, widths.dim())?;
    Ok(sandwich(f, widths))
}

/// `d𝒵/dt` from `Ḟ`; the sandwich is linear, so this is `𝒵(Ḟ)`.
pub fn zmatrix_dot(
    f: &DMatrix<f64>,
    f_dot: &DMatrix<f64>,
    widths: &WidthPair,
) -> Result<DMatrix<C64>> {
    check_even_square(f, widths.dim())?;
    check_even_square(f_dot, widths.dim())?;
    Ok(sandwich(f_dot, widths))
}

/// How a [`PrefactorPath`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorMethod {
    ClosedForm,
    Ode,
}

/// `u₀(t)` sampled on a record's time grid.
#[derive(Debug, Clone)]
pub struct PrefactorPath {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub method: PrefactorMethod,
}

impl PrefactorPath {
    pub fn final_value(&self) -> C64 {
        *self.values.last().expect("nonempty path")
    }
}

/// Closed-form prefactor: branch-continuous `det(Θʸ𝒵(t))^{1/2}·e^{-i∫h₁}`.
///
/// The record's sample grid must resolve the winding of `det 𝒵` (no more
/// than a half turn between samples); trajectory sampling at `Δt ≲ 0.01`
/// satisfies this for all built-in models.
pub fn hk_prefactor_closed(record: &TrajectoryRecord, widths: &WidthPair) -> Result<PrefactorPath> {
    let d = record.dim();
    if widths.dim() != d {
        return Err(HkError::BadShape(format!(
            "width dimension {} does not match record dimension {d}",
            widths.dim()
        )));
    }
    let floor = widths.det_z_floor * (1.0 - 1e-9);
    let det_w = |f: &DMatrix<f64>| -> Result<(C64, C64)> {
        let z = zmatrix(f, widths)?;
        let det_z = z.determinant();
        assert!(
            det_z.norm_sqr() >= floor,
            "det 𝒵 fell below its invertibility floor: |det|² = {} < {}",
            det_z.norm_sqr(),
            widths.det_z_floor
        );
        Ok((widths.det_theta_y * det_z, det_z))
    };

    let (w0, _) = det_w(&record.jacobians[0])?;
    let seed_sq = widths.seed_root * widths.seed_root;
    if (w0 - seed_sq).norm() > 1e-10 * seed_sq.norm() {
        return Err(HkError::InconsistentSeed {
            defect: (w0 - seed_sq).norm() / seed_sq.norm(),
        });
    }
    let mut state = BranchState::new(w0, widths.seed_root)?;

    let mut values = Vec::with_capacity(record.len());
    values.push(widths.seed_root * phase_factor(record.h1_phases[0]));
    for k in 1..record.len() {
        let (w, _) = det_w(&record.jacobians[k])?;
        let root = state.step(w)?;
        values.push(root * phase_factor(record.h1_phases[k]));
    }
    Ok(PrefactorPath {
        times: record.times.clone(),
        values,
        method: PrefactorMethod::ClosedForm,
    })
}

fn phase_factor(h1_phase: f64) -> C64 {
    C64::from_polar(1.0, -h1_phase)
}

/// `J·Hess h·F` evaluated from the potential Hessian at `x`.
fn jacobian_rhs(record: &TrajectoryRecord, x: &[f64], f: &DMatrix<f64>) -> DMatrix<f64> {
    let d = record.dim();
    let hess = record.model.hess_potential(x);
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for c in 0..2 * d {
            out[(i, c)] = f[(d + i, c)];
            let mut acc = 0.0;
            for j in 0..d {
                acc += hess[(i, j)] * f[(j, c)];
            }
            out[(d + i, c)] = -acc;
        }
    }
    out
}

/// Logarithmic derivative `g(t) = ½·tr(𝒵⁻¹𝒵̇) - i·h₁(t,X,Ξ)`.
fn log_deriv(
    record: &TrajectoryRecord,
    widths: &WidthPair,
    t: f64,
    x: &[f64],
    xi: &[f64],
    f: &DMatrix<f64>,
) -> Result<C64> {
    let f_dot = jacobian_rhs(record, x, f);
    let z = sandwich(f, widths);
    let z_dot = sandwich(&f_dot, widths);
    let z_inv = z
        .clone()
        .try_inverse()
        .ok_or_else(|| HkError::SingularFrame("𝒵 not invertible in prefactor ODE".into()))?;
    let tr = (z_inv * z_dot).trace();
    Ok(C64::from(0.5) * tr - C64::i() * record.model.h1(t, x, xi))
}

/// Cubic Hermite midpoint from endpoint values and derivatives.
fn hermite_mid(y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> f64 {
    0.5 * (y0 + y1) + h / 8.0 * (d0 - d1)
}

/// ODE-form prefactor: RK4 on `du/dt = u·[½tr(𝒵⁻¹𝒵̇) - i·h₁]` from the seed
/// `det(Θˣ+Θʸ)^{1/2}`, using the record's samples. Midpoint stage data is
/// reconstructed by cubic Hermite interpolation of `(X, Ξ, F)`, whose time
/// derivatives are known exactly at the samples.
pub fn hk_prefactor_ode(record: &TrajectoryRecord, widths: &WidthPair) -> Result<PrefactorPath> {
    let d = record.dim();
    if widths.dim() != d {
        return Err(HkError::BadShape(format!(
            "width dimension {} does not match record dimension {d}",
            widths.dim()
        )));
    }
    let mut u = widths.seed_root;
    let mut values = Vec::with_capacity(record.len());
    values.push(u);

    for k in 0..record.len() - 1 {
        let (t0, t1) = (record.times[k], record.times[k + 1]);
        let h = t1 - t0;
        let x0 = record.positions[k].as_slice();
        let x1 = record.positions[k + 1].as_slice();
        let xi0 = record.momenta[k].as_slice();
        let xi1 = record.momenta[k + 1].as_slice();
        let f0 = &record.jacobians[k];
        let f1 = &record.jacobians[k + 1];

        let g0 = log_deriv(record, widths, t0, x0, xi0, f0)?;
        let g1 = log_deriv(record, widths, t1, x1, xi1, f1)?;

        // Midpoint reconstruction: Ẋ = Ξ, Ξ̇ = -∇V, Ḟ = J·Hess h·F.
        let grad0 = record.model.grad_potential(x0);
        let grad1 = record.model.grad_potential(x1);
        let x_mid: Vec<f64> = (0..d)
            .map(|i| hermite_mid(x0[i], x1[i], xi0[i], xi1[i], h))
            .collect();
        let xi_mid: Vec<f64> = (0..d)
            .map(|i| hermite_mid(xi0[i], xi1[i], -grad0[i], -grad1[i], h))
            .collect();
        let f0_dot = jacobian_rhs(record, x0, f0);
        let f1_dot = jacobian_rhs(record, x1, f1);
        let f_mid = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
            hermite_mid(f0[(i, j)], f1[(i, j)], f0_dot[(i, j)], f1_dot[(i, j)], h)
        });
        let g_mid = log_deriv(record, widths, 0.5 * (t0 + t1), &x_mid, &xi_mid, &f_mid)?;

        let k1 = g0 * u;
        let k2 = g_mid * (u + C64::from(0.5 * h) * k1);
        let k3 = g_mid * (u + C64::from(0.5 * h) * k2);
        let k4 = g1 * (u + C64::from(h) * k3);
        u += C64::from(h / 6.0) * (k1 + (k2 + k3) * C64::from(2.0) + k4);
        if !u.re.is_finite() || !u.im.is_finite() {
            return Err(HkError::NonFiniteState(format!(
                "prefactor ODE at t = {t1}"
            )));
        }
        values.push(u);
    }
    Ok(PrefactorPath {
        times: record.times.clone(),
        values,
        method: PrefactorMethod::Ode,
    })
}

/// The frozen-Gaussian constant symbol `det(Θˣ+Θʸ)^{1/2}`; equals `2^{d/2}`
/// for identity widths.
pub fn fga_symbol(widths: &WidthPair) -> C64 {
    widths.seed_root
}

/// Thawed-Gaussian width matrix `-i(Ξ_q + iΞ_p)(X_q + iX_p)⁻¹` from a flow
/// Jacobian, validated to be complex symmetric with positive definite real
/// part.
pub fn tga_width(f: &DMatrix<f64>) -> Result<DMatrix<C64>> {
    let n = f.nrows();
    if f.ncols() != n || !n.is_multiple_of(2) || n == 0 {
        return Err(HkError::BadShape(format!(
            "expected square even-dimensional Jacobian, got {}x{}",
            n,
            f.ncols()
        )));
    }
    let d = n / 2;
    let i = C64::i();
    let a_t = complexify(&f.view((0, 0), (d, d)).transpose());
    let b_t = complexify(&f.view((0, d), (d, d)).transpose());
    let c_t = complexify(&f.view((d, 0), (d, d)).transpose());
    let d_t = complexify(&f.view((d, d), (d, d)).transpose());
    let frame = &a_t + &b_t * i;
    let frame_inv = frame
        .try_inverse()
        .ok_or_else(|| HkError::SingularFrame("X_q + iX_p is not invertible".into()))?;
    let theta = (c_t + d_t * i) * frame_inv * (-i);
    // Integrator roundoff perturbs exact symmetry; validate with slack.
    let theta = cone_check_with_tol(theta, 1e-9)?;
    Ok(theta.entries().clone())
}

/// Smallest `|det 𝒵|²` over all samples of all records, for floor checks.
pub fn min_abs_det_z_sq(records: &[TrajectoryRecord], widths: &WidthPair) -> Result<f64> {
    let mut min = f64::INFINITY;
    for r in records {
        for f in &r.jacobians {
            let z = zmatrix(f, widths)?;
            min = min.min(z.determinant().norm_sqr());
        }
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve_bundle, integrate_trajectory, BundleGrid};
    use crate::hamiltonian::HamiltonianModel;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn rotation(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }

    fn scalar_widths(x: f64, y: f64) -> WidthPair {
        WidthPair::new(
            ConeMatrix::scaled_identity(1, C64::from(x)).unwrap(),
            ConeMatrix::scaled_identity(1, C64::from(y)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zmatrix_identity_flow() {
        for d in [1usize, 2] {
            let w = WidthPair::identity(d);
            let f = DMatrix::<f64>::identity(2 * d, 2 * d);
            let z = zmatrix(&f, &w).unwrap();
            assert!((z - DMatrix::<C64>::identity(d, d) * C64::from(2.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn zmatrix_harmonic_and_free_closed_forms() {
        let w = WidthPair::identity(1);
        for &t in &[0.0, 0.3, 1.2, 2.5] {
            let z = zmatrix(&rotation(t), &w).unwrap();
            let expected = C64::from(2.0) * C64::from_polar(1.0, -t);
            assert!((z[(0, 0)] - expected).norm() < 1e-14);

            let shear = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
            let z = zmatrix(&shear, &w).unwrap();
            assert!((z[(0, 0)] - C64::new(2.0, -t)).norm() < 1e-14);
        }
    }

    #[test]
    fn zmatrix_dot_closed_forms() {
        let w = WidthPair::identity(1);
        let f = rotation(0.7);
        let zero = DMatrix::<f64>::zeros(2, 2);
        assert!(zmatrix_dot(&f, &zero, &w).unwrap().norm() < 1e-15);

        // Harmonic: Ḟ = J·Hess·F with Hess = id.
        let t = 0.7f64;
        let f_dot = DMatrix::from_row_slice(2, 2, &[-t.sin(), t.cos(), -t.cos(), -t.sin()]);
        let zd = zmatrix_dot(&f, &f_dot, &w).unwrap();
        let expected = C64::new(0.0, -2.0) * C64::from_polar(1.0, -t);
        assert!((zd[(0, 0)] - expected).norm() < 1e-14);

        // Free: Ḟ = [[0,1],[0,0]] gives 𝒵̇ = -i.
        let f_dot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let zd = zmatrix_dot(&f, &f_dot, &w).unwrap();
        assert!((zd[(0, 0)] - C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn zmatrix_at_identity_reduces_to_width_sum() {
        // 𝒵(id) = (Θʸ)⁻¹(Θˣ+Θʸ), so det(Θʸ𝒵(0)) = det(Θˣ+Θʸ).
        let w = scalar_widths(2.0, 0.5);
        let z = zmatrix(&DMatrix::identity(2, 2), &w).unwrap();
        assert!((z[(0, 0)] - C64::from(5.0)).norm() < 1e-14);
    }

    #[test]
    fn prefactor_seed_is_sqrt_two_for_identity_widths() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let r = integrate_trajectory(&m, &v1(0.2), &v1(0.1), 0.0, 1e-3).unwrap();
        let path = hk_prefactor_closed(&r, &WidthPair::identity(1)).unwrap();
        assert!((path.final_value() - C64::from(2f64.sqrt())).norm() < 1e-14);
    }

    #[test]
    fn prefactor_harmonic_branch_winding() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let w = WidthPair::identity(1);
        let sqrt2 = 2f64.sqrt();
        for (t_final, expected) in [
            (PI, C64::new(0.0, -sqrt2)),
            (2.0 * PI, C64::from(-sqrt2)),
            (4.0 * PI, C64::from(sqrt2)),
        ] {
            let r = integrate_trajectory(&m, &v1(1.0), &v1(0.0), t_final, 1e-3).unwrap();
            let path = hk_prefactor_closed(&r, &w).unwrap();
            assert!(
                (path.final_value() - expected).norm() < 1e-6,
                "t = {t_final}: {} vs {expected}",
                path.final_value()
            );
            // Pointwise along the whole path: u₀(t) = √2·e^{-it/2}.
            for (t, u) in path.times.iter().zip(&path.values) {
                let reference = C64::from(sqrt2) * C64::from_polar(1.0, -t / 2.0);
                assert!((u - reference).norm() < 1e-6, "t = {t}");
            }
        }
    }

    #[test]
    fn prefactor_free_flow_continuous_root() {
        let m = HamiltonianModel::free(1);
        let r = integrate_trajectory(&m, &v1(0.0), &v1(1.0), 3.0, 1e-3).unwrap();
        let path = hk_prefactor_closed(&r, &WidthPair::identity(1)).unwrap();
        for (t, u) in path.times.iter().zip(&path.values) {
            let w = C64::new(2.0, -t);
            let mut root = w.sqrt();
            if root.re < 0.0 {
                root = -root;
            }
            // The principal root stays in the right half plane along this
            // path, so continuity agrees with it.
            assert!((u - root).norm() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn prefactor_ode_matches_closed_form() {
        let w = WidthPair::identity(1);
        for (model, q0, p0) in [
            (HamiltonianModel::harmonic(1.0, 1), 1.0, 0.0),
            (HamiltonianModel::free(1), 0.0, 1.0),
            (HamiltonianModel::torsional(1.0, 1), 1.0, 0.3),
        ] {
            let r = integrate_trajectory(&model, &v1(q0), &v1(p0), 2.0, 1e-3).unwrap();
            let closed = hk_prefactor_closed(&r, &w).unwrap();
            let ode = hk_prefactor_ode(&r, &w).unwrap();
            for (a, b) in closed.values.iter().zip(&ode.values) {
                assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn prefactor_constant_h1_factors_out_as_phase() {
        let m = HamiltonianModel::free(1).with_h1_const(0.4);
        let r = integrate_trajectory(&m, &v1(0.0), &v1(0.5), 2.0, 1e-3).unwrap();
        let w = WidthPair::identity(1);
        for path in [
            hk_prefactor_closed(&r, &w).unwrap(),
            hk_prefactor_ode(&r, &w).unwrap(),
        ] {
            for (t, u) in path.times.iter().zip(&path.values) {
                let base = C64::new(2.0, -t).sqrt();
                let base = if base.re < 0.0 { -base } else { base };
                let expected = base * C64::from_polar(1.0, -0.4 * t);
                assert!((u - expected).norm() < 1e-7, "t = {t}");
            }
        }
    }

    #[test]
    fn fga_symbol_values() {
        assert!((fga_symbol(&WidthPair::identity(1)) - C64::from(2f64.sqrt())).norm() < 1e-12);
        assert!((fga_symbol(&WidthPair::identity(2)) - C64::from(2.0)).norm() < 1e-12);
        let w = scalar_widths(3.0, 1.0);
        assert!((fga_symbol(&w) - C64::from(2.0)).norm() < 1e-12);
    }

    #[test]
    fn tga_width_closed_forms() {
        let id = DMatrix::<f64>::identity(2, 2);
        let theta = tga_width(&id).unwrap();
        assert!((theta[(0, 0)] - C64::from(1.0)).norm() < 1e-14);

        for &t in &[0.5, 1.5, 3.0] {
            let shear = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
            let theta = tga_width(&shear).unwrap();
            let expected = C64::from(1.0) / C64::new(1.0, t);
            assert!((theta[(0, 0)] - expected).norm() < 1e-14, "free t = {t}");

            let theta = tga_width(&rotation(t)).unwrap();
            assert!(
                (theta[(0, 0)] - C64::from(1.0)).norm() < 1e-14,
                "harmonic t = {t}"
            );
        }
    }

    #[test]
    fn det_z_floor_holds_along_flows() {
        let grid = BundleGrid::new_1d(0.5, 1.5, 3, -0.5, 0.5, 3).unwrap();
        for model in [
            HamiltonianModel::free(1),
            HamiltonianModel::harmonic(1.0, 1),
            HamiltonianModel::torsional(1.0, 1),
        ] {
            let records = evolve_bundle(&model, &grid, 3.0, 1e-2).unwrap();
            for widths in [WidthPair::identity(1), scalar_widths(2.0, 0.5)] {
                let min = min_abs_det_z_sq(&records, &widths).unwrap();
                assert!(
                    min >= widths.det_z_floor() * (1.0 - 1e-9),
                    "min |det 𝒵|² = {min} < floor {}",
                    widths.det_z_floor()
                );
            }
        }
    }

    #[test]
    fn zmatrix_constant_across_bundle_for_linear_flows() {
        let grid = BundleGrid::new_1d(-1.0, 1.0, 3, -1.0, 1.0, 3).unwrap();
        let w = WidthPair::identity(1);
        for model in [
            HamiltonianModel::free(1),
            HamiltonianModel::harmonic(1.0, 1),
        ] {
            let records = evolve_bundle(&model, &grid, 1.0, 1e-2).unwrap();
            let z_ref = zmatrix(records[0].final_jacobian(), &w).unwrap();
            for r in &records[1..] {
                let z = zmatrix(r.final_jacobian(), &w).unwrap();
                assert!((&z - &z_ref).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn prefactor_two_dimensional_harmonic_winding() {
        // det 𝒵 = 4e^{-2it} winds twice as fast as in d = 1, so the branch
        // root u₀(t) = 2e^{-it} returns to +2 already at t = 2π.
        let m = HamiltonianModel::harmonic(1.0, 2);
        let q0 = DVector::from_vec(vec![1.0, -0.3]);
        let p0 = DVector::from_vec(vec![0.0, 0.4]);
        let r = integrate_trajectory(&m, &q0, &p0, 2.0 * PI, 1e-3).unwrap();
        let w = WidthPair::identity(2);
        let closed = hk_prefactor_closed(&r, &w).unwrap();
        for (t, u) in closed.times.iter().zip(&closed.values) {
            let expected = C64::from(2.0) * C64::from_polar(1.0, -t);
            assert!((u - expected).norm() < 1e-6, "t = {t}: {u} vs {expected}");
        }
        assert!((closed.final_value() - C64::from(2.0)).norm() < 1e-6);
        let ode = hk_prefactor_ode(&r, &w).unwrap();
        for (a, b) in closed.values.iter().zip(&ode.values) {
            assert!((a - b).norm() <= 1e-7 * b.norm().max(1.0));
        }
    }

    #[test]
    fn prefactor_magnitude_matches_det() {
        let m = HamiltonianModel::torsional(1.0, 1);
        let r = integrate_trajectory(&m, &v1(1.0), &v1(0.2), 2.0, 1e-3).unwrap();
        let w = scalar_widths(2.0, 0.5);
        let path = hk_prefactor_closed(&r, &w).unwrap();
        for (f, u) in r.jacobians.iter().zip(&path.values) {
            let z = zmatrix(f, &w).unwrap();
            let expected = (C64::from(0.5) * z.determinant()).norm().sqrt();
            assert_relative_eq!(u.norm(), expected, max_relative = 1e-10);
            assert!(u.norm() > 0.0);
        }
    }
}
