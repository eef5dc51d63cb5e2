//! Coherent-state analysis and Gaussian synthesis on discretized
//! wavefunctions: the phase-space integral operator behind the Herman-Kluk
//! and frozen-Gaussian propagators, the identity special case, and the
//! single-trajectory thawed-Gaussian propagator. All wave-level operations
//! are one-dimensional.
//!
//! The triple phase-space integral is factorized into an analysis stage over
//! `y` (coherent-state coefficients on a `(q,p)` grid) and a synthesis stage
//! over the bundle,
//!
//! ```text
//! ψ_out(x) = (2πε)^{-3/2} (πε)^{1/4} det(ReΘʸ)^{-1/4} Σ_{q,p} w·c(q,p)·u·
//!            e^{iS/ε} · e^{-Θˣ(x-X)²/2ε} · e^{iΞ(x-X)/ε}.
//! ```
//!
//! The constant in front is pinned by the identity fixpoint: with the flow
//! replaced by the identity and `u = det(Θˣ+Θʸ)^{1/2}` the pipeline must
//! reproduce its input, which the test suite checks to 1e-6.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::complex_matrix::ConeMatrix;
use crate::error::{HkError, Result};
use crate::flow::{
    evolve_bundle_sampled, integrate_trajectory_sampled, BundleGrid, TrajectoryRecord,
};
use crate::hamiltonian::HamiltonianModel;
use crate::hk_symbol::{fga_symbol, hk_prefactor_closed, tga_width, WidthPair};
use crate::C64;

/// Coherent states must sit this many `√ε` away from the box edge.
pub const COHERENT_MARGIN_SQRT_EPS: f64 = 6.0;
/// Gaussian factors are truncated beyond this many widths from their center.
const GAUSS_WINDOW_RADII: f64 = 14.0;
/// FBI boundary-mass fraction above which a leak warning is emitted.
pub const BOUNDARY_MASS_WARN: f64 = 1e-6;
/// Default in-memory sampling interval for trajectory records; fine enough
/// to resolve the prefactor branch winding of every built-in model.
pub const SAMPLE_DT_TARGET: f64 = 0.01;

/// Uniform spatial grid on `[x_min, x_max)` with `n_x` nodes. The right
/// endpoint is excluded so the same grid serves the periodic spectral solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
}

impl XGrid {
    pub fn new(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        if n_x < 2 {
            return Err(HkError::BadShape(format!(
                "spatial grid needs at least 2 nodes, got {n_x}"
            )));
        }
        if !x_max.is_finite() || !x_min.is_finite() || x_max <= x_min {
            return Err(HkError::BadShape(format!(
                "box [{x_min}, {x_max}) must be increasing"
            )));
        }
        Ok(XGrid { x_min, x_max, n_x })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    /// Trapezoid quadrature weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        let dx = self.dx();
        if j == 0 || j == self.n_x - 1 {
            0.5 * dx
        } else {
            dx
        }
    }

    fn window(&self, center: f64, radius: f64) -> (usize, usize) {
        let lo = ((center - radius - self.x_min) / self.dx())
            .floor()
            .max(0.0) as usize;
        let hi = (((center + radius - self.x_min) / self.dx()).ceil() as usize).min(self.n_x);
        (lo.min(self.n_x), hi)
    }
}

/// Complex samples of `ψ` on a uniform grid with its semiclassical `ε`.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub grid: XGrid,
    pub eps: f64,
    pub values: Vec<C64>,
}

impl WaveFunction {
    pub fn zeros(grid: XGrid, eps: f64) -> Self {
        WaveFunction {
            grid,
            eps,
            values: vec![C64::from(0.0); grid.n_x],
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| self.grid.weight(j) * v.norm_sqr())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `⟨self, other⟩` with the first argument conjugated.
    pub fn inner(&self, other: &WaveFunction) -> Result<C64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(j, (a, b))| a.conj() * b * self.grid.weight(j))
            .sum())
    }

    pub fn check_same_grid(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid || self.eps != other.eps {
            return Err(HkError::GridMismatch(format!(
                "{:?} eps={} vs {:?} eps={}",
                self.grid, self.eps, other.grid, other.eps
            )));
        }
        Ok(())
    }

    /// Writes `x,re,im` rows plus a JSON sidecar with the grid metadata.
    pub fn save_csv(&self, csv_path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        writeln!(f, "x,re,im")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(f, "{},{},{}", self.grid.node(j), v.re, v.im)?;
        }
        drop(f);
        let sidecar = Sidecar {
            x_min: self.grid.x_min,
            x_max: self.grid.x_max,
            n_x: self.grid.n_x,
            eps: self.eps,
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| HkError::ConfigError(e.to_string()))?;
        std::fs::write(csv_path.with_extension("json"), json)?;
        Ok(())
    }

    /// Loads a wavefunction written by [`WaveFunction::save_csv`].
    pub fn load_csv(csv_path: &std::path::Path) -> Result<Self> {
        let sidecar_text = std::fs::read_to_string(csv_path.with_extension("json"))?;
        let sidecar: Sidecar = serde_json::from_str(&sidecar_text)
            .map_err(|e| HkError::ConfigError(format!("bad sidecar: {e}")))?;
        let grid = XGrid::new(sidecar.x_min, sidecar.x_max, sidecar.n_x)?;
        let text = std::fs::read_to_string(csv_path)?;
        let mut values = Vec::with_capacity(grid.n_x);
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "x,re,im" {
                    return Err(HkError::GridMismatch(format!(
                        "unexpected CSV header `{line}`"
                    )));
                }
                continue;
            }
            let mut parts = line.split(',');
            let x: f64 = parse_field(parts.next(), i)?;
            let re: f64 = parse_field(parts.next(), i)?;
            let im: f64 = parse_field(parts.next(), i)?;
            let j = values.len();
            if (x - grid.node(j)).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(HkError::GridMismatch(format!(
                    "row {i}: x = {x} does not match grid node {}",
                    grid.node(j)
                )));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(HkError::GridMismatch(format!(
                    "row {i}: non-finite sample ({re}, {im})"
                )));
            }
            values.push(C64::new(re, im));
        }
        if values.len() != grid.n_x {
            return Err(HkError::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.n_x,
                values.len()
            )));
        }
        Ok(WaveFunction {
            grid,
            eps: sidecar.eps,
            values,
        })
    }
}

fn parse_field(field: Option<&str>, line: usize) -> Result<f64> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| HkError::GridMismatch(format!("malformed CSV at line {line}")))
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    x_min: f64,
    x_max: f64,
    n_x: usize,
    eps: f64,
}

/// Coherent-state coefficients `⟨g^{ε,Θʸ}_{(q,p)}, ψ⟩` on a `(q,p)` grid.
#[derive(Debug, Clone)]
pub struct FbiField {
    pub grid: BundleGrid,
    pub eps: f64,
    pub theta_y: ConeMatrix,
    pub coeffs: Vec<C64>,
}

impl FbiField {
    /// Fraction of `Σ|c|²` sitting on the outermost grid layer. Values near
    /// zero certify that the grid captures the state's phase-space support.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_boundary(*i))
            .map(|(_, c)| c.norm_sqr())
            .sum();
        edge / total
    }

    /// Writes `q,p,re,im` rows.
    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "q,p,re,im")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            let (q, p) = self.grid.node(i);
            writeln!(f, "{},{},{},{}", q[0], p[0], c.re, c.im)?;
        }
        Ok(())
    }
}

/// Normalized coherent state `g^{ε,Θ}_{(q,p)}` sampled on `grid`:
/// `det(ReΘ)^{1/4}(πε)^{-1/4}·e^{-Θ(x-q)²/2ε}·e^{ip(x-q)/ε}`.
pub fn coherent_state(
    center: (f64, f64),
    eps: f64,
    theta: &ConeMatrix,
    grid: &XGrid,
) -> Result<WaveFunction> {
    if theta.dim() != 1 {
        return Err(HkError::BadShape(
            "wave-level operations are one-dimensional".into(),
        ));
    }
    let (q, p) = center;
    let margin = COHERENT_MARGIN_SQRT_EPS * eps.sqrt();
    if q - margin < grid.x_min || q + margin > grid.x_max {
        return Err(HkError::BoxTooSmall(format!(
            "center q = {q} needs ±{margin} inside [{}, {})",
            grid.x_min, grid.x_max
        )));
    }
    let th = theta.entries()[(0, 0)];
    let amp = theta.real_part()[(0, 0)].powf(0.25) / (std::f64::consts::PI * eps).powf(0.25);
    let mut psi = WaveFunction::zeros(*grid, eps);
    for j in 0..grid.n_x {
        let u = grid.node(j) - q;
        let exponent = -th * (u * u / (2.0 * eps)) + C64::i() * (p * u / eps);
        psi.values[j] = amp * exponent.exp();
    }
    Ok(psi)
}

/// Coherent-state analysis: trapezoid quadrature of `conj(g^{ε,Θʸ})·ψ` at
/// every grid node.
pub fn fbi_analyze(
    psi: &WaveFunction,
    grid: &BundleGrid,
    theta_y: &ConeMatrix,
) -> Result<FbiField> {
    if grid.dim() != 1 || theta_y.dim() != 1 {
        return Err(HkError::BadShape(
            "wave-level operations are one-dimensional".into(),
        ));
    }
    let eps = psi.eps;
    let margin = COHERENT_MARGIN_SQRT_EPS * eps.sqrt();
    let qa = &grid.q_axes()[0];
    if qa.min - margin < psi.grid.x_min || qa.max + margin > psi.grid.x_max {
        return Err(HkError::GridMismatch(format!(
            "wavefunction box [{}, {}) does not cover q range [{}, {}] with margin {margin}",
            psi.grid.x_min, psi.grid.x_max, qa.min, qa.max
        )));
    }
    let th = theta_y.entries()[(0, 0)];
    let re_th = theta_y.real_part()[(0, 0)];
    let amp = re_th.powf(0.25) / (std::f64::consts::PI * eps).powf(0.25);
    let radius = GAUSS_WINDOW_RADII * (eps / re_th).sqrt();

    let node_coeff = |idx: usize| -> C64 {
        let (qv, pv) = grid.node(idx);
        let (q, p) = (qv[0], pv[0]);
        let (lo, hi) = psi.grid.window(q, radius);
        let mut acc = C64::from(0.0);
        for j in lo..hi {
            let u = psi.grid.node(j) - q;
            let exponent = -th.conj() * (u * u / (2.0 * eps)) - C64::i() * (p * u / eps);
            acc += amp * exponent.exp() * psi.values[j] * psi.grid.weight(j);
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let coeffs: Vec<C64> = {
        use rayon::prelude::*;
        (0..grid.node_count())
            .into_par_iter()
            .map(node_coeff)
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let coeffs: Vec<C64> = (0..grid.node_count()).map(node_coeff).collect();

    Ok(FbiField {
        grid: grid.clone(),
        eps,
        theta_y: theta_y.clone(),
        coeffs,
    })
}

/// Evolved data of one bundle node as consumed by the synthesis stage.
#[derive(Debug, Clone, Copy)]
pub struct SynthPoint {
    pub x: f64,
    pub xi: f64,
    pub action: f64,
    pub u: C64,
}

/// Synthesis stage: accumulates the weighted Gaussian sum onto `out_grid`.
/// The summation order over nodes is fixed, so results do not depend on the
/// number of threads.
pub fn synthesize_points(
    field: &FbiField,
    points: &[SynthPoint],
    theta_x: &ConeMatrix,
    out_grid: &XGrid,
) -> Result<WaveFunction> {
    if theta_x.dim() != 1 {
        return Err(HkError::BadShape(
            "wave-level operations are one-dimensional".into(),
        ));
    }
    if points.len() != field.coeffs.len() {
        return Err(HkError::GridMismatch(format!(
            "{} synthesis points vs {} coefficients",
            points.len(),
            field.coeffs.len()
        )));
    }
    let eps = field.eps;
    let pi_eps = std::f64::consts::PI * eps;
    let det_re_y = field.theta_y.real_part()[(0, 0)];
    let scale =
        (2.0 * pi_eps).powf(-1.5) * pi_eps.powf(0.25) * det_re_y.powf(-0.25) * field.grid.weight();
    let th = theta_x.entries()[(0, 0)];

    let terms: Vec<(f64, f64, C64)> = points
        .iter()
        .zip(&field.coeffs)
        .map(|(pt, c)| {
            let phase = C64::from_polar(1.0, pt.action / eps);
            (pt.x, pt.xi, c * pt.u * phase * scale)
        })
        .collect();

    let eval = |j: usize| -> C64 {
        let x = out_grid.node(j);
        let mut acc = C64::from(0.0);
        for &(xc, xic, amp) in &terms {
            let u = x - xc;
            let exponent = -th * (u * u / (2.0 * eps)) + C64::i() * (xic * u / eps);
            acc += amp * exponent.exp();
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let values: Vec<C64> = {
        use rayon::prelude::*;
        (0..out_grid.n_x).into_par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<C64> = (0..out_grid.n_x).map(eval).collect();

    Ok(WaveFunction {
        grid: *out_grid,
        eps,
        values,
    })
}

/// Applies the synthesis stage with evolved trajectory data and per-record
/// symbol values `u` at the records' final time `t`.
pub fn fio_synthesize(
    field: &FbiField,
    records: &[TrajectoryRecord],
    u_at_t: &[C64],
    theta_x: &ConeMatrix,
    t: f64,
    out_grid: &XGrid,
) -> Result<WaveFunction> {
    if records.len() != field.coeffs.len() || u_at_t.len() != records.len() {
        return Err(HkError::GridMismatch(format!(
            "{} records, {} symbols, {} coefficients",
            records.len(),
            u_at_t.len(),
            field.coeffs.len()
        )));
    }
    let points: Vec<SynthPoint> = records
        .iter()
        .zip(u_at_t)
        .map(|(r, &u)| {
            if (r.final_time() - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(HkError::GridMismatch(format!(
                    "record ends at t = {} but synthesis requested t = {t}",
                    r.final_time()
                )));
            }
            Ok(SynthPoint {
                x: r.final_position()[0],
                xi: r.final_momentum()[0],
                action: r.final_action(),
                u,
            })
        })
        .collect::<Result<_>>()?;
    synthesize_points(field, &points, theta_x, out_grid)
}

/// The identity fixpoint: analysis followed by synthesis with the identity
/// flow and the constant symbol `det(Θˣ+Θʸ)^{1/2}` reproduces `ψ` up to
/// quadrature error on an adequate grid.
pub fn identity_apply(
    psi: &WaveFunction,
    widths: &WidthPair,
    grid: &BundleGrid,
) -> Result<WaveFunction> {
    let field = fbi_analyze(psi, grid, widths.theta_y())?;
    let u = widths.seed_root();
    let points: Vec<SynthPoint> = (0..grid.node_count())
        .map(|i| {
            let (q, p) = grid.node(i);
            SynthPoint {
                x: q[0],
                xi: p[0],
                action: 0.0,
                u,
            }
        })
        .collect();
    synthesize_points(&field, &points, widths.theta_x(), &psi.grid)
}

/// Symbol choice for the phase-space propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    /// Branch-continuous Herman-Kluk prefactor.
    HermanKluk,
    /// Constant frozen-Gaussian symbol `det(Θˣ+Θʸ)^{1/2}`.
    Frozen,
}

/// Full propagation pipeline: analysis, bundle evolution, prefactor,
/// synthesis back onto `psi0`'s grid at `t_final`.
pub fn propagate_hk(
    model: &HamiltonianModel,
    psi0: &WaveFunction,
    t_final: f64,
    widths: &WidthPair,
    symbol: SymbolKind,
    qp_grid: &BundleGrid,
    dt: f64,
) -> Result<WaveFunction> {
    if model.dim() != 1 {
        return Err(HkError::BadShape(
            "wave-level operations are one-dimensional".into(),
        ));
    }
    let field = fbi_analyze(psi0, qp_grid, widths.theta_y())?;
    let leak = field.boundary_mass_fraction();
    if leak > BOUNDARY_MASS_WARN {
        log::warn!(
            "FBI mass leak: boundary fraction {leak:e} exceeds {BOUNDARY_MASS_WARN:e}; \
             the (q,p) grid is too small for this state"
        );
    }
    let stride = ((SAMPLE_DT_TARGET / dt).round() as usize).max(1);
    let records = evolve_bundle_sampled(model, qp_grid, t_final, dt, stride)?;
    let u_final: Vec<C64> = match symbol {
        SymbolKind::HermanKluk => records
            .iter()
            .map(|r| hk_prefactor_closed(r, widths).map(|p| p.final_value()))
            .collect::<Result<_>>()?,
        SymbolKind::Frozen => vec![fga_symbol(widths); records.len()],
    };
    fio_synthesize(
        &field,
        &records,
        &u_final,
        widths.theta_x(),
        t_final,
        &psi0.grid,
    )
}

/// Thawed-Gaussian propagation of the coherent state at `center`: a single
/// trajectory carrying a time-dependent width, with
/// `[det(X_q + iX_p)]^{-1/2}` branch-tracked by continuity from 1.
pub fn propagate_tga(
    model: &HamiltonianModel,
    center: (f64, f64),
    eps: f64,
    t_final: f64,
    dt: f64,
    grid: &XGrid,
) -> Result<WaveFunction> {
    if model.dim() != 1 {
        return Err(HkError::BadShape(
            "wave-level operations are one-dimensional".into(),
        ));
    }
    let stride = ((SAMPLE_DT_TARGET / dt).round() as usize).max(1);
    let q0 = DVector::from_vec(vec![center.0]);
    let p0 = DVector::from_vec(vec![center.1]);
    let record = integrate_trajectory_sampled(model, &q0, &p0, t_final, dt, stride)?;

    // Track det(X_q + iX_p) along the path, seeded at det(id) = 1.
    let frame_det = |f: &nalgebra::DMatrix<f64>| C64::new(f[(0, 0)], f[(0, 1)]);
    let mut state =
        crate::complex_matrix::BranchState::new(frame_det(&record.jacobians[0]), C64::from(1.0))?;
    let mut root = C64::from(1.0);
    for f in &record.jacobians[1..] {
        root = state.step(frame_det(f)).map_err(|e| match e {
            HkError::ZeroCrossing { magnitude } => {
                HkError::SingularFrame(format!("det(X_q + iX_p) vanished (|det| = {magnitude:e})"))
            }
            other => other,
        })?;
    }

    let theta = tga_width(record.final_jacobian())?[(0, 0)];
    let x_c = record.final_position()[0];
    let xi_c = record.final_momentum()[0];
    let action = record.final_action();
    let amp = (std::f64::consts::PI * eps).powf(-0.25) / root;
    let phase = C64::from_polar(1.0, action / eps);

    let mut psi = WaveFunction::zeros(*grid, eps);
    for j in 0..grid.n_x {
        let u = grid.node(j) - x_c;
        let exponent = -theta * (u * u / (2.0 * eps)) + C64::i() * (xi_c * u / eps);
        psi.values[j] = amp * phase * exponent.exp();
    }
    Ok(psi)
}
