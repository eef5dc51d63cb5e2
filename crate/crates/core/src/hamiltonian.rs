//! Hamiltonian models `h(x,ξ) = |ξ|²/2 + V(x) + ε·h₁` with analytic value,
//! gradient and Hessian evaluators for a set of built-in potentials, plus a
//! sampling diagnostic for the subquadraticity hypothesis.
//!
//! The subprincipal symbol `h₁` is restricted to a real constant; it only
//! enters the propagators as an accumulated phase.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HkError, Result};

/// Built-in potential family. All members are subquadratic: derivatives of
/// order ≥ 2 are uniformly bounded.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `V = 0`
    Free,
    /// `V = ω²|x|²/2`
    Harmonic { omega: f64 },
    /// `V = a·Σⱼ (1 - cos xⱼ)`
    Torsional { a: f64 },
    /// `V = -A·exp(-|x|²/2σ²)`
    GaussianWell { depth: f64, sigma: f64 },
}

/// Immutable evaluator bundle for one Hamiltonian. Cheap to clone and safe to
/// share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianModel {
    kind: PotentialKind,
    dim: usize,
    h1_const: f64,
}

/// Sampled bounds on `‖Hess V‖` and the third derivatives over a box.
///
/// Diagnostic only: sampling cannot prove the global supremum hypothesis, and
/// nothing in the pipeline gates on this report.
#[derive(Debug, Clone)]
pub struct SubquadraticReport {
    pub max_hessian_norm: f64,
    pub max_third_deriv_norm: f64,
    pub sample_box: Vec<(f64, f64)>,
}

impl HamiltonianModel {
    pub fn free(dim: usize) -> Self {
        Self::with_kind(PotentialKind::Free, dim)
    }

    pub fn harmonic(omega: f64, dim: usize) -> Self {
        Self::with_kind(PotentialKind::Harmonic { omega }, dim)
    }

    pub fn torsional(a: f64, dim: usize) -> Self {
        Self::with_kind(PotentialKind::Torsional { a }, dim)
    }

    pub fn gaussian_well(depth: f64, sigma: f64, dim: usize) -> Self {
        Self::with_kind(PotentialKind::GaussianWell { depth, sigma }, dim)
    }

    fn with_kind(kind: PotentialKind, dim: usize) -> Self {
        HamiltonianModel {
            kind,
            dim,
            h1_const: 0.0,
        }
    }

    /// Attaches a constant subprincipal symbol `h₁ ≡ c`.
    pub fn with_h1_const(mut self, c: f64) -> Self {
        self.h1_const = c;
        self
    }

    /// String-keyed constructor used by the config layer.
    pub fn builtin(name: &str, params: &PotentialParams, dim: usize) -> Result<Self> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(HkError::ConfigError(format!(
                    "{what} must be positive, got {v}"
                )))
            }
        };
        let kind = match name {
            "free" => PotentialKind::Free,
            "harmonic" => PotentialKind::Harmonic {
                omega: positive(params.omega, "omega")?,
            },
            "torsional" => PotentialKind::Torsional {
                a: positive(params.a, "a")?,
            },
            "gaussian_well" => PotentialKind::GaussianWell {
                depth: positive(params.depth, "A")?,
                sigma: positive(params.sigma, "sigma")?,
            },
            other => return Err(HkError::UnknownModel(other.to_string())),
        };
        Ok(Self::with_kind(kind, dim).with_h1_const(params.h1_const))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn h1_const(&self) -> f64 {
        self.h1_const
    }

    /// Subprincipal symbol `h₁(t, x, ξ)`.
    pub fn h1(&self, _t: f64, _x: &[f64], _xi: &[f64]) -> f64 {
        self.h1_const
    }

    /// Potential value at `x`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } => {
                0.5 * omega * omega * x.iter().map(|v| v * v).sum::<f64>()
            }
            PotentialKind::Torsional { a } => a * x.iter().map(|v| 1.0 - v.cos()).sum::<f64>(),
            PotentialKind::GaussianWell { depth, sigma } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                -depth * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Writes `∇V(x)` into `out`.
    pub fn grad_potential_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            PotentialKind::Free => out.fill(0.0),
            PotentialKind::Harmonic { omega } => {
                let w2 = omega * omega;
                for (o, v) in out.iter_mut().zip(x) {
                    *o = w2 * v;
                }
            }
            PotentialKind::Torsional { a } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = a * v.sin();
                }
            }
            PotentialKind::GaussianWell { depth, sigma } => {
                let s2 = sigma * sigma;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let f = depth / s2 * (-r2 / (2.0 * s2)).exp();
                for (o, v) in out.iter_mut().zip(x) {
                    *o = f * v;
                }
            }
        }
    }

    /// Writes `Hess V(x)` into `out` (row-major `d×d`).
    pub fn hess_potential_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(out.len(), d * d);
        out.fill(0.0);
        match &self.kind {
            PotentialKind::Free => {}
            PotentialKind::Harmonic { omega } => {
                let w2 = omega * omega;
                for i in 0..d {
                    out[i * d + i] = w2;
                }
            }
            PotentialKind::Torsional { a } => {
                for i in 0..d {
                    out[i * d + i] = a * x[i].cos();
                }
            }
            PotentialKind::GaussianWell { depth, sigma } => {
                let s2 = sigma * sigma;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let f = depth / s2 * (-r2 / (2.0 * s2)).exp();
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        out[i * d + j] = f * (delta - x[i] * x[j] / s2);
                    }
                }
            }
        }
    }

    /// `∇V` as an owned vector.
    pub fn grad_potential(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.grad_potential_into(x, out.as_mut_slice());
        out
    }

    /// `Hess V` as an owned matrix.
    pub fn hess_potential(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut buf = vec![0.0; d * d];
        self.hess_potential_into(x, &mut buf);
        DMatrix::from_row_slice(d, d, &buf)
    }

    /// Principal symbol `h₀ = |ξ|²/2 + V(x)` with its phase-space gradient
    /// `(∇V, ξ)` and Hessian `blockdiag(Hess V, id)`.
    pub fn eval_h0(
        &self,
        x: &DVector<f64>,
        xi: &DVector<f64>,
    ) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        assert_eq!(x.len(), d);
        assert_eq!(xi.len(), d);
        let value = 0.5 * xi.norm_squared() + self.potential(x.as_slice());
        let mut grad = DVector::zeros(2 * d);
        self.grad_potential_into(x.as_slice(), &mut grad.as_mut_slice()[..d]);
        for i in 0..d {
            grad[d + i] = xi[i];
        }
        let mut hess = DMatrix::zeros(2 * d, 2 * d);
        let hv = self.hess_potential(x.as_slice());
        for i in 0..d {
            for j in 0..d {
                hess[(i, j)] = hv[(i, j)];
            }
            hess[(d + i, d + i)] = 1.0;
        }
        (value, grad, hess)
    }

    /// Samples `‖Hess V‖` (spectral norm) and the largest third-derivative
    /// entry (central differences of the analytic Hessian) over `sample_box`.
    pub fn subquadratic_probe(
        &self,
        sample_box: &[(f64, f64)],
        n_samples: usize,
    ) -> SubquadraticReport {
        assert_eq!(sample_box.len(), self.dim);
        assert!(n_samples > 0);
        let d = self.dim;
        let fd_step = 1e-4;
        let mut max_hess: f64 = 0.0;
        let mut max_third: f64 = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut hp = vec![0.0; d * d];
        let mut hm = vec![0.0; d * d];
        for k in 0..n_samples {
            let x: Vec<f64> = if d == 1 {
                // Uniform 1-d grid, endpoints included.
                let (lo, hi) = sample_box[0];
                let t = if n_samples == 1 {
                    0.5
                } else {
                    k as f64 / (n_samples - 1) as f64
                };
                vec![lo + t * (hi - lo)]
            } else {
                sample_box
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..hi))
                    .collect()
            };
            let h = self.hess_potential(&x);
            let spectral = h
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, &e| m.max(e.abs()));
            max_hess = max_hess.max(spectral);
            let mut xp = x.clone();
            for l in 0..d {
                xp[l] = x[l] + fd_step;
                self.hess_potential_into(&xp, &mut hp);
                xp[l] = x[l] - fd_step;
                self.hess_potential_into(&xp, &mut hm);
                xp[l] = x[l];
                for (a, b) in hp.iter().zip(&hm) {
                    max_third = max_third.max(((a - b) / (2.0 * fd_step)).abs());
                }
            }
        }
        SubquadraticReport {
            max_hessian_norm: max_hess,
            max_third_deriv_norm: max_third,
            sample_box: sample_box.to_vec(),
        }
    }
}

/// Numeric potential parameters as they appear in run configs.
#[derive(Debug, Clone)]
pub struct PotentialParams {
    pub omega: f64,
    pub a: f64,
    pub depth: f64,
    pub sigma: f64,
    pub h1_const: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        PotentialParams {
            omega: 1.0,
            a: 1.0,
            depth: 1.0,
            sigma: 1.0,
            h1_const: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn models() -> Vec<HamiltonianModel> {
        vec![
            HamiltonianModel::free(1),
            HamiltonianModel::harmonic(1.0, 1),
            HamiltonianModel::torsional(1.0, 1),
            HamiltonianModel::gaussian_well(1.0, 1.0, 1),
            HamiltonianModel::harmonic(0.7, 2),
            HamiltonianModel::torsional(0.5, 2),
            HamiltonianModel::gaussian_well(2.0, 1.5, 2),
        ]
    }

    #[test]
    fn eval_h0_free_particle() {
        let m = HamiltonianModel::free(1);
        let (v, g, h) = m.eval_h0(&DVector::from_vec(vec![3.0]), &DVector::from_vec(vec![2.0]));
        assert_relative_eq!(v, 2.0);
        assert_eq!(g.as_slice(), &[0.0, 2.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn eval_h0_harmonic() {
        let m = HamiltonianModel::harmonic(1.0, 1);
        let (v, g, h) = m.eval_h0(&DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![1.0]));
        assert_relative_eq!(v, 1.0);
        assert_eq!(g.as_slice(), &[1.0, 1.0]);
        assert_eq!(h, DMatrix::identity(2, 2));
    }

    #[test]
    fn eval_h0_torsional_at_quarter_turn() {
        // V = 1 - cos x: V(π/2) = 1, V'(π/2) = 1, V''(π/2) = 0.
        let m = HamiltonianModel::torsional(1.0, 1);
        let (v, g, h) = m.eval_h0(
            &DVector::from_vec(vec![PI / 2.0]),
            &DVector::from_vec(vec![0.0]),
        );
        assert_relative_eq!(v, 1.0, max_relative = 1e-14);
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(g[1], 0.0);
        assert!(h[(0, 0)].abs() < 1e-15);
        assert_relative_eq!(h[(1, 1)], 1.0);
    }

    #[test]
    fn builtin_values() {
        let p = PotentialParams::default();
        let harm = HamiltonianModel::builtin("harmonic", &p, 1).unwrap();
        assert_relative_eq!(harm.potential(&[2.0]), 2.0);
        let tors = HamiltonianModel::builtin("torsional", &p, 1).unwrap();
        assert_relative_eq!(tors.potential(&[0.0]), 0.0);
        assert_relative_eq!(tors.potential(&[PI]), 2.0);
        let well = HamiltonianModel::builtin("gaussian_well", &p, 1).unwrap();
        assert_relative_eq!(well.potential(&[0.0]), -1.0);
        assert_relative_eq!(well.grad_potential(&[0.0])[0], 0.0);
    }

    #[test]
    fn builtin_rejects_unknown_and_nonpositive() {
        let p = PotentialParams::default();
        assert!(matches!(
            HamiltonianModel::builtin("morse", &p, 1),
            Err(HkError::UnknownModel(_))
        ));
        let bad = PotentialParams {
            omega: -1.0,
            ..PotentialParams::default()
        };
        assert!(matches!(
            HamiltonianModel::builtin("harmonic", &bad, 1),
            Err(HkError::ConfigError(_))
        ));
    }

    #[test]
    fn subquadratic_probe_free_and_harmonic() {
        let free = HamiltonianModel::free(1);
        let r = free.subquadratic_probe(&[(-10.0, 10.0)], 100);
        assert_eq!(r.max_hessian_norm, 0.0);
        assert_eq!(r.max_third_deriv_norm, 0.0);

        let harm = HamiltonianModel::harmonic(1.0, 1);
        let r = harm.subquadratic_probe(&[(-10.0, 10.0)], 100);
        assert_relative_eq!(r.max_hessian_norm, 1.0, max_relative = 1e-12);
        assert!(r.max_third_deriv_norm < 1e-10);
    }

    #[test]
    fn subquadratic_probe_torsional_bounds() {
        let m = HamiltonianModel::torsional(1.0, 1);
        let r = m.subquadratic_probe(&[(-10.0, 10.0)], 10_000);
        assert_relative_eq!(r.max_hessian_norm, 1.0, max_relative = 1e-3);
        assert_relative_eq!(r.max_third_deriv_norm, 1.0, max_relative = 1e-3);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let h = 1e-4;
        for m in models() {
            let d = m.dim();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let grad = m.grad_potential(&x);
                let hess = m.hess_potential(&x);
                assert!((hess.clone() - hess.transpose()).norm() < 1e-14);
                let mut xp = x.clone();
                for j in 0..d {
                    xp[j] = x[j] + h;
                    let vp = m.potential(&xp);
                    let gp = m.grad_potential(&xp);
                    xp[j] = x[j] - h;
                    let vm = m.potential(&xp);
                    let gm = m.grad_potential(&xp);
                    xp[j] = x[j];
                    let fd_g = (vp - vm) / (2.0 * h);
                    assert_relative_eq!(fd_g, grad[j], max_relative = 1e-5, epsilon = 1e-9);
                    for i in 0..d {
                        let fd_h = (gp[i] - gm[i]) / (2.0 * h);
                        assert_relative_eq!(
                            fd_h,
                            hess[(i, j)],
                            max_relative = 1e-5,
                            epsilon = 1e-8
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn h1_constant_enters_as_scalar() {
        let m = HamiltonianModel::free(1).with_h1_const(0.3);
        assert_eq!(m.h1(1.0, &[0.0], &[0.0]), 0.3);
        assert_eq!(HamiltonianModel::free(1).h1(0.0, &[1.0], &[1.0]), 0.0);
    }
}
