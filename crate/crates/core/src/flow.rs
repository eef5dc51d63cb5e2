//! Classical Hamiltonian flow: RK4 co-integration of position, momentum, the
//! variational (Jacobian) equation, the classical action and the accumulated
//! subprincipal phase, for single phase-space points and for bundles on a
//! rectangular `(q,p)` grid.
//!
//! The Jacobian `F(t) = ∂(X,Ξ)/∂(q,p)` is integrated from `Ḟ = J·Hess h·F`,
//! never finite-differenced across bundle nodes. Symplecticity `FᵀJF = J` is
//! monitored, not enforced.

use nalgebra::{DMatrix, DVector};

use crate::error::{HkError, Result};
use crate::hamiltonian::HamiltonianModel;

/// One uniformly spaced coordinate axis of a phase-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(HkError::BadShape("axis needs at least one node".into()));
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(HkError::BadShape(format!(
                "axis range [{min}, {max}] must be finite"
            )));
        }
        if n > 1 && max <= min {
            return Err(HkError::BadShape(format!(
                "axis range [{min}, {max}] must be increasing"
            )));
        }
        Ok(Axis { min, max, n })
    }

    /// Node spacing; a single-node axis carries unit quadrature weight.
    pub fn spacing(&self) -> f64 {
        if self.n == 1 {
            1.0
        } else {
            (self.max - self.min) / (self.n - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        if self.n == 1 {
            self.min
        } else {
            self.min + i as f64 * self.spacing()
        }
    }
}

/// Rectangular quadrature grid over phase space, one axis per `q` and `p`
/// coordinate. Every node carries the same weight, the product of spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleGrid {
    q_axes: Vec<Axis>,
    p_axes: Vec<Axis>,
}

impl BundleGrid {
    pub fn new(q_axes: Vec<Axis>, p_axes: Vec<Axis>) -> Result<Self> {
        if q_axes.is_empty() || q_axes.len() != p_axes.len() {
            return Err(HkError::BadShape(
                "need one q axis and one p axis per dimension".into(),
            ));
        }
        Ok(BundleGrid { q_axes, p_axes })
    }

    /// Convenience constructor for `d = 1`.
    pub fn new_1d(
        q_min: f64,
        q_max: f64,
        n_q: usize,
        p_min: f64,
        p_max: f64,
        n_p: usize,
    ) -> Result<Self> {
        Self::new(
            vec![Axis::new(q_min, q_max, n_q)?],
            vec![Axis::new(p_min, p_max, n_p)?],
        )
    }

    pub fn dim(&self) -> usize {
        self.q_axes.len()
    }

    pub fn q_axes(&self) -> &[Axis] {
        &self.q_axes
    }

    pub fn p_axes(&self) -> &[Axis] {
        &self.p_axes
    }

    pub fn node_count(&self) -> usize {
        self.q_axes
            .iter()
            .chain(&self.p_axes)
            .map(|a| a.n)
            .product()
    }

    /// Quadrature weight per node: the product of all axis spacings.
    pub fn weight(&self) -> f64 {
        self.q_axes
            .iter()
            .chain(&self.p_axes)
            .map(|a| a.spacing())
            .product()
    }

    /// Phase-space point of the flattened node index. Index order is
    /// row-major over `(q₁.., p₁..)` with the last axis fastest.
    pub fn node(&self, idx: usize) -> (DVector<f64>, DVector<f64>) {
        let d = self.dim();
        let mut rem = idx;
        let mut coords = vec![0usize; 2 * d];
        for k in (0..2 * d).rev() {
            let n = self.axis(k).n;
            coords[k] = rem % n;
            rem /= n;
        }
        debug_assert_eq!(rem, 0);
        let q = DVector::from_iterator(d, (0..d).map(|k| self.axis(k).node(coords[k])));
        let p = DVector::from_iterator(d, (d..2 * d).map(|k| self.axis(k).node(coords[k])));
        (q, p)
    }

    /// True if the node touches the outermost layer of any axis with `n > 1`.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let d = self.dim();
        let mut rem = idx;
        for k in (0..2 * d).rev() {
            let n = self.axis(k).n;
            let c = rem % n;
            rem /= n;
            if n > 1 && (c == 0 || c == n - 1) {
                return true;
            }
        }
        false
    }

    fn axis(&self, k: usize) -> &Axis {
        let d = self.dim();
        if k < d {
            &self.q_axes[k]
        } else {
            &self.p_axes[k - d]
        }
    }
}

/// One trajectory's evolved state, sampled on a time grid.
///
/// Sample `k` holds `X(t_k)`, `Ξ(t_k)`, the action `S(t_k)`, the Jacobian
/// `F(t_k)` with block layout `[[∂X/∂q, ∂X/∂p], [∂Ξ/∂q, ∂Ξ/∂p]]`, and the
/// accumulated phase `∫₀^{t_k} h₁`. The record keeps its model so downstream
/// consumers can evaluate Hessians along the path.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub q0: DVector<f64>,
    pub p0: DVector<f64>,
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub momenta: Vec<DVector<f64>>,
    pub actions: Vec<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub h1_phases: Vec<f64>,
    pub model: HamiltonianModel,
}

impl TrajectoryRecord {
    pub fn dim(&self) -> usize {
        self.q0.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("record has at least one sample")
    }

    pub fn final_position(&self) -> &DVector<f64> {
        self.positions.last().expect("nonempty")
    }

    pub fn final_momentum(&self) -> &DVector<f64> {
        self.momenta.last().expect("nonempty")
    }

    pub fn final_action(&self) -> f64 {
        *self.actions.last().expect("nonempty")
    }

    pub fn final_jacobian(&self) -> &DMatrix<f64> {
        self.jacobians.last().expect("nonempty")
    }

    pub fn final_h1_phase(&self) -> f64 {
        *self.h1_phases.last().expect("nonempty")
    }

    /// Max energy deviation `|h₀(X(t),Ξ(t)) - h₀(q0,p0)|` over the samples.
    pub fn energy_drift(&self) -> f64 {
        let h0 = |x: &DVector<f64>, xi: &DVector<f64>| {
            0.5 * xi.norm_squared() + self.model.potential(x.as_slice())
        };
        let e0 = h0(&self.q0, &self.p0);
        self.positions
            .iter()
            .zip(&self.momenta)
            .map(|(x, xi)| (h0(x, xi) - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Scratch buffers for the flattened integration state
/// `[x(d), ξ(d), F(4d² row-major), S, φ₁]`.
struct Workspace {
    grad: Vec<f64>,
    hess: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let n = state_len(d);
        Workspace {
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn state_len(d: usize) -> usize {
    2 * d + 4 * d * d + 2
}

/// Right-hand side of the coupled system:
/// `Ẋ = Ξ`, `Ξ̇ = -∇V`, `Ḟ = J·Hess h·F`, `Ṡ = |Ξ|²/2 - V`, `φ̇₁ = h₁`.
fn deriv(
    model: &HamiltonianModel,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
    grad: &mut [f64],
    hess: &mut [f64],
) {
    let d = grad.len();
    let (x, rest) = y.split_at(d);
    let (xi, _) = rest.split_at(d);
    model.grad_potential_into(x, grad);
    model.hess_potential_into(x, hess);

    dy[..d].copy_from_slice(xi);
    for i in 0..d {
        dy[d + i] = -grad[i];
    }

    // F rows 0..d are the X block, rows d..2d the Ξ block. J·Hess h shuffles
    // blocks: Ḟ_X = F_Ξ, Ḟ_Ξ = -Hess V · F_X.
    let f = &y[2 * d..2 * d + 4 * d * d];
    let df = &mut dy[2 * d..2 * d + 4 * d * d];
    let w = 2 * d;
    for i in 0..d {
        for c in 0..w {
            df[i * w + c] = f[(d + i) * w + c];
        }
    }
    for i in 0..d {
        for c in 0..w {
            let mut acc = 0.0;
            for j in 0..d {
                acc += hess[i * d + j] * f[j * w + c];
            }
            df[(d + i) * w + c] = -acc;
        }
    }

    let v = model.potential(x);
    let kinetic: f64 = xi.iter().map(|p| p * p).sum::<f64>() * 0.5;
    let n = y.len();
    dy[n - 2] = kinetic - v;
    dy[n - 1] = model.h1(t, x, xi);
}

fn rk4_step(model: &HamiltonianModel, t: f64, h: f64, y: &mut [f64], ws: &mut Workspace) {
    fn stage(tmp: &mut [f64], y: &[f64], k: &[f64], c: f64) {
        for ((t, &yv), &kv) in tmp.iter_mut().zip(y).zip(k) {
            *t = yv + c * kv;
        }
    }
    deriv(model, t, y, &mut ws.k1, &mut ws.grad, &mut ws.hess);
    stage(&mut ws.tmp, y, &ws.k1, 0.5 * h);
    deriv(
        model,
        t + 0.5 * h,
        &ws.tmp,
        &mut ws.k2,
        &mut ws.grad,
        &mut ws.hess,
    );
    stage(&mut ws.tmp, y, &ws.k2, 0.5 * h);
    deriv(
        model,
        t + 0.5 * h,
        &ws.tmp,
        &mut ws.k3,
        &mut ws.grad,
        &mut ws.hess,
    );
    stage(&mut ws.tmp, y, &ws.k3, h);
    deriv(
        model,
        t + h,
        &ws.tmp,
        &mut ws.k4,
        &mut ws.grad,
        &mut ws.hess,
    );
    for (i, v) in y.iter_mut().enumerate() {
        *v += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

/// Integrates one trajectory, recording every step. See
/// [`integrate_trajectory_sampled`] for coarser in-memory sampling.
pub fn integrate_trajectory(
    model: &HamiltonianModel,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    t_final: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    integrate_trajectory_sampled(model, q0, p0, t_final, dt, 1)
}

/// Integrates with step `dt` but keeps only every `sample_stride`-th step in
/// the record (the final state is always kept). Negative `t_final` integrates
/// backward. If `t_final` is not a multiple of `dt` the last step is
/// shortened.
pub fn integrate_trajectory_sampled(
    model: &HamiltonianModel,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    t_final: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<TrajectoryRecord> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(HkError::ConfigError(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let stride = sample_stride.max(1);
    let d = model.dim();
    if q0.len() != d || p0.len() != d {
        return Err(HkError::BadShape(format!(
            "phase point dimension {} does not match model dimension {d}",
            q0.len()
        )));
    }

    let n = state_len(d);
    let mut y = vec![0.0; n];
    y[..d].copy_from_slice(q0.as_slice());
    y[d..2 * d].copy_from_slice(p0.as_slice());
    let w = 2 * d;
    for i in 0..w {
        y[2 * d + i * w + i] = 1.0;
    }

    let mut record = TrajectoryRecord {
        q0: q0.clone(),
        p0: p0.clone(),
        times: Vec::new(),
        positions: Vec::new(),
        momenta: Vec::new(),
        actions: Vec::new(),
        jacobians: Vec::new(),
        h1_phases: Vec::new(),
        model: model.clone(),
    };
    push_sample(&mut record, 0.0, &y, d);

    let span = t_final.abs();
    if span == 0.0 {
        return Ok(record);
    }
    let sign = t_final.signum();
    let n_full = (span / dt + 1e-12).floor() as usize;
    let remainder = span - n_full as f64 * dt;
    let take_remainder = remainder > 1e-12 * span.max(1.0);
    let mut ws = Workspace::new(d);

    let mut t = 0.0;
    for k in 0..n_full {
        rk4_step(model, t, sign * dt, &mut y, &mut ws);
        t = (k + 1) as f64 * dt * sign;
        let last = k + 1 == n_full && !take_remainder;
        if (k + 1) % stride == 0 || last {
            check_finite(&y, t)?;
            if record.times.last() != Some(&t) {
                push_sample(&mut record, t, &y, d);
            }
        }
    }
    if take_remainder {
        rk4_step(model, t, sign * remainder, &mut y, &mut ws);
        check_finite(&y, t_final)?;
        push_sample(&mut record, t_final, &y, d);
    }
    Ok(record)
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(HkError::NonFiniteState(format!("at t = {t}")))
    }
}

fn push_sample(record: &mut TrajectoryRecord, t: f64, y: &[f64], d: usize) {
    let w = 2 * d;
    record.times.push(t);
    record.positions.push(DVector::from_column_slice(&y[..d]));
    record
        .momenta
        .push(DVector::from_column_slice(&y[d..2 * d]));
    record
        .jacobians
        .push(DMatrix::from_row_slice(w, w, &y[2 * d..2 * d + w * w]));
    let n = y.len();
    record.actions.push(y[n - 2]);
    record.h1_phases.push(y[n - 1]);
}

/// `‖FᵀJF - J‖_F`, zero exactly when `F` is symplectic.
pub fn symplectic_defect(f: &DMatrix<f64>) -> Result<f64> {
    let n = f.nrows();
    if f.ncols() != n || !n.is_multiple_of(2) || n == 0 {
        return Err(HkError::BadShape(format!(
            "expected square even-dimensional matrix, got {}x{}",
            n,
            f.ncols()
        )));
    }
    let d = n / 2;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..d {
        j[(i, d + i)] = 1.0;
        j[(d + i, i)] = -1.0;
    }
    Ok((f.transpose() * &j * f - j).norm())
}

/// Maps [`integrate_trajectory_sampled`] over every grid node, preserving
/// node order. Runs in parallel when the `parallel` feature is enabled.
pub fn evolve_bundle_sampled(
    model: &HamiltonianModel,
    grid: &BundleGrid,
    t_final: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<Vec<TrajectoryRecord>> {
    if grid.dim() != model.dim() {
        return Err(HkError::BadShape(format!(
            "grid dimension {} does not match model dimension {}",
            grid.dim(),
            model.dim()
        )));
    }
    let run_node = |idx: usize| {
        let (q, p) = grid.node(idx);
        integrate_trajectory_sampled(model, &q, &p, t_final, dt, sample_stride).map_err(|e| match e
        {
            HkError::NonFiniteState(msg) => HkError::NonFiniteState(format!("node {idx}: {msg}")),
            other => other,
        })
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..grid.node_count())
            .into_par_iter()
            .map(run_node)
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..grid.node_count()).map(run_node).collect()
    }
}

/// [`evolve_bundle_sampled`] with every integration step recorded.
pub fn evolve_bundle(
    model: &HamiltonianModel,
    grid: &BundleGrid,
    t_final: f64,
    dt: f64,
) -> Result<Vec<TrajectoryRecord>> {
    evolve_bundle_sampled(model, grid, t_final, dt, 1)
}

/// Dumps `d = 1` records as CSV rows `q0,p0,t,X,Xi,S,F11,F12,F21,F22`.
pub fn dump_records_csv<W: std::io::Write>(
    records: &[TrajectoryRecord],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "q0,p0,t,X,Xi,S,F11,F12,F21,F22")?;
    for r in records {
        if r.dim() != 1 {
            return Err(HkError::BadShape(
                "trajectory CSV dump is defined for d = 1".into(),
            ));
        }
        for k in 0..r.len() {
            let f = &r.jacobians[k];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.q0[0],
                r.p0[0],
                r.times[k],
                r.positions[k][0],
                r.momenta[k][0],
                r.actions[k],
                f[(0, 0)],
                f[(0, 1)],
                f[(1, 0)],
                f[(1, 1)]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn free_flow_matches_closed_form() {
        let m = HamiltonianModel::free(1);
        let r = integrate_trajectory(&m, &v1(0.0), &v1(1.0), 2.0, 1e-3).unwrap();
        assert_relative_eq!(r.final_position()[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(r.final_momentum()[0], 1.0, max_relative = 1e-12);
        // S = ∫ (p² - p²/2) = p²t/2 = 1.
        assert_relative_eq!(r.final_action(), 1.0, max_relative = 1e-12);
        let f = r.final_jacobian();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!((f - expected).norm() < 1e-12);
    }

    #[test]
    fn harmonic_half_period_rotation() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let r = integrate_trajectory(&m, &v1(1.0), &v1(0.0), PI, 1e-3).unwrap();
        assert_relative_eq!(r.final_position()[0], -1.0, epsilon = 1e-9);
        assert!(r.final_momentum()[0].abs() < 1e-9);
        assert!(r.final_action().abs() < 1e-9);
        let f = r.final_jacobian();
        assert!((f + DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn zero_time_yields_identity_record() {
        let m = HamiltonianModel::torsional(1.0, 1);
        let r = integrate_trajectory(&m, &v1(0.7), &v1(-0.2), 0.0, 1e-3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.final_time(), 0.0);
        assert_eq!(r.final_position()[0], 0.7);
        assert_eq!(r.final_momentum()[0], -0.2);
        assert_eq!(r.final_action(), 0.0);
        assert!((r.final_jacobian() - DMatrix::<f64>::identity(2, 2)).norm() == 0.0);
    }

    #[test]
    fn negative_time_runs_backward() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let fwd = integrate_trajectory(&m, &v1(1.0), &v1(0.0), 1.0, 1e-3).unwrap();
        let back = integrate_trajectory(&m, fwd.final_position(), fwd.final_momentum(), -1.0, 1e-3)
            .unwrap();
        assert_relative_eq!(back.final_position()[0], 1.0, epsilon = 1e-9);
        assert!(back.final_momentum()[0].abs() < 1e-9);
    }

    #[test]
    fn symplectic_defect_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(symplectic_defect(&id).unwrap(), 0.0);
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(symplectic_defect(&shear).unwrap() < 1e-15);
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(
            symplectic_defect(&scale).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-14
        );
        assert!(symplectic_defect(&DMatrix::<f64>::zeros(3, 3)).is_err());
    }

    #[test]
    fn shortened_final_step_lands_exactly() {
        let m = HamiltonianModel::free(1);
        let r = integrate_trajectory(&m, &v1(0.0), &v1(1.0), 0.0105, 1e-3).unwrap();
        assert_eq!(r.final_time(), 0.0105);
        assert_relative_eq!(r.final_position()[0], 0.0105, max_relative = 1e-12);
    }

    #[test]
    fn bundle_singleton_matches_single_trajectory() {
        let m = HamiltonianModel::torsional(1.0, 1);
        let grid = BundleGrid::new_1d(0.3, 0.3, 1, -0.1, -0.1, 1).unwrap();
        let bundle = evolve_bundle(&m, &grid, 1.0, 1e-3).unwrap();
        assert_eq!(bundle.len(), 1);
        let single = integrate_trajectory(&m, &v1(0.3), &v1(-0.1), 1.0, 1e-3).unwrap();
        assert_eq!(bundle[0].final_position()[0], single.final_position()[0]);
        assert_eq!(bundle[0].final_action(), single.final_action());
    }

    #[test]
    fn free_bundle_moves_pointwise() {
        let m = HamiltonianModel::free(1);
        let grid = BundleGrid::new_1d(-1.0, 1.0, 3, -1.0, 1.0, 3).unwrap();
        let bundle = evolve_bundle(&m, &grid, 1.0, 1e-2).unwrap();
        for (idx, rec) in bundle.iter().enumerate() {
            let (q, p) = grid.node(idx);
            assert_relative_eq!(
                rec.final_position()[0],
                q[0] + p[0],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn harmonic_bundle_returns_after_full_period() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let grid = BundleGrid::new_1d(-0.5, 1.0, 3, -0.4, 0.6, 3).unwrap();
        let bundle = evolve_bundle(&m, &grid, 2.0 * PI, 1e-3).unwrap();
        for (idx, rec) in bundle.iter().enumerate() {
            let (q, p) = grid.node(idx);
            assert_relative_eq!(rec.final_position()[0], q[0], epsilon = 1e-8);
            assert_relative_eq!(rec.final_momentum()[0], p[0], epsilon = 1e-8);
        }
    }

    #[test]
    fn rk4_fourth_order_on_harmonic() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let exact = 1f64.cos();
        let err = |dt: f64| {
            let r = integrate_trajectory(&m, &v1(1.0), &v1(0.0), 1.0, dt).unwrap();
            (r.final_position()[0] - exact).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(
            (ratio - 16.0).abs() <= 4.0,
            "expected ~16x error reduction, got {ratio}"
        );
    }

    #[test]
    fn energy_conserved_along_flows() {
        for m in [
            HamiltonianModel::harmonic(1.0, 1),
            HamiltonianModel::torsional(1.0, 1),
            HamiltonianModel::gaussian_well(1.0, 1.0, 1),
        ] {
            let r = integrate_trajectory(&m, &v1(1.0), &v1(0.4), 10.0, 1e-3).unwrap();
            assert!(r.energy_drift() <= 1e-10, "drift {:e}", r.energy_drift());
        }
    }

    #[test]
    fn symplecticity_monitored_along_flow() {
        let m = HamiltonianModel::torsional(1.0, 1);
        let r = integrate_trajectory_sampled(&m, &v1(1.0), &v1(0.0), 10.0, 1e-3, 100).unwrap();
        let max_defect = r
            .jacobians
            .iter()
            .map(|f| symplectic_defect(f).unwrap())
            .fold(0.0, f64::max);
        assert!(max_defect <= 1e-10, "defect {max_defect:e}");
    }

    #[test]
    fn action_gradient_identities() {
        // S_q = -p + X_q·Ξ and S_p = X_p·Ξ, with X_q, X_p read from F.
        let m = HamiltonianModel::torsional(1.0, 1);
        let (q0, p0, t) = (1.0, 0.3, 1.0);
        let h = 1e-4;
        let run = |q: f64, p: f64| integrate_trajectory(&m, &v1(q), &v1(p), t, 1e-3).unwrap();
        let base = run(q0, p0);
        let f = base.final_jacobian();
        let xi = base.final_momentum()[0];
        let s_q_fd = (run(q0 + h, p0).final_action() - run(q0 - h, p0).final_action()) / (2.0 * h);
        let s_p_fd = (run(q0, p0 + h).final_action() - run(q0, p0 - h).final_action()) / (2.0 * h);
        assert_relative_eq!(s_q_fd, -p0 + f[(0, 0)] * xi, max_relative = 1e-4);
        assert_relative_eq!(s_p_fd, f[(0, 1)] * xi, max_relative = 1e-4);
    }

    #[test]
    fn harmonic_flow_in_two_dimensions() {
        // Each coordinate rotates independently; at a quarter period the
        // phase point maps (q, p) to (p, -q).
        let m = HamiltonianModel::harmonic(1.0, 2);
        let q0 = DVector::from_vec(vec![1.0, -0.5]);
        let p0 = DVector::from_vec(vec![0.2, 0.7]);
        let r = integrate_trajectory(&m, &q0, &p0, PI / 2.0, 1e-3).unwrap();
        for i in 0..2 {
            assert_relative_eq!(r.final_position()[i], p0[i], epsilon = 1e-9);
            assert_relative_eq!(r.final_momentum()[i], -q0[i], epsilon = 1e-9);
        }
        assert!(symplectic_defect(r.final_jacobian()).unwrap() <= 1e-10);
        assert!(r.energy_drift() <= 1e-10);
    }

    #[test]
    fn grid_nodes_weights_boundary() {
        let g = BundleGrid::new_1d(0.0, 1.0, 3, -1.0, 1.0, 5).unwrap();
        assert_eq!(g.node_count(), 15);
        assert_relative_eq!(g.weight(), 0.5 * 0.5);
        let (q, p) = g.node(0);
        assert_eq!((q[0], p[0]), (0.0, -1.0));
        let (q, p) = g.node(14);
        assert_eq!((q[0], p[0]), (1.0, 1.0));
        let (q, p) = g.node(7);
        assert_eq!((q[0], p[0]), (0.5, 0.0));
        assert!(g.is_boundary(0));
        assert!(g.is_boundary(14));
        assert!(!g.is_boundary(7));
        // Single-node axes carry unit weight and never count as boundary.
        let g1 = BundleGrid::new_1d(0.3, 0.3, 1, 0.1, 0.1, 1).unwrap();
        assert_eq!(g1.weight(), 1.0);
        assert!(!g1.is_boundary(0));
    }

    #[test]
    fn records_dump_as_csv() {
        let m = HamiltonianModel::free(1);
        let r = integrate_trajectory_sampled(&m, &v1(0.0), &v1(1.0), 0.002, 1e-3, 1).unwrap();
        let mut buf = Vec::new();
        dump_records_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "q0,p0,t,X,Xi,S,F11,F12,F21,F22");
        assert_eq!(lines.count(), 3);
    }
}
