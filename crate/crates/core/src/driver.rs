//! Experiment driver: flat-JSON run configs, automatic grid sizing, the
//! five pipeline runs behind the CLI subcommands, and CSV error tables.
//!
//! Determinism: identical configs produce identical tables except for the
//! `wall_time_s` column. Reduction orders are fixed and nothing is seeded
//! from the clock.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex_matrix::{cone_check, ConeMatrix};
use crate::error::{HkError, Result};
use crate::fio_apply::{
    coherent_state, fbi_analyze, identity_apply, propagate_hk, propagate_tga, SymbolKind,
    WaveFunction, XGrid,
};
use crate::flow::{dump_records_csv, evolve_bundle_sampled, BundleGrid};
use crate::hamiltonian::{HamiltonianModel, PotentialParams};
use crate::hk_symbol::WidthPair;
use crate::reference_solver::{l2_error, split_step_propagate, SpectralDomain};
use crate::C64;

/// Phase-space grid extent around the initial state, in units of `√ε`.
pub const QP_EXTENT_SQRT_EPS: f64 = 8.0;
/// Phase-space grid spacing, in units of `√ε`.
pub const QP_SPACING_SQRT_EPS: f64 = 0.5;
/// Spatial box margin beyond the classical envelope, in units of `√ε`.
pub const X_MARGIN_SQRT_EPS: f64 = 12.0;
/// Spatial points per `ε`-wavelength at the largest momentum in play.
pub const POINTS_PER_WAVELENGTH: f64 = 16.0;

/// One or several semiclassical parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    One(f64),
    Many(Vec<f64>),
}

impl EpsSpec {
    pub fn list(&self) -> Vec<f64> {
        match self {
            EpsSpec::One(e) => vec![*e],
            EpsSpec::Many(v) => v.clone(),
        }
    }
}

/// Width matrix entry: a scalar multiple of the identity or explicit real
/// matrix rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl ThetaSpec {
    fn to_cone(&self, d: usize) -> Result<ConeMatrix> {
        match self {
            ThetaSpec::Scalar(s) => ConeMatrix::scaled_identity(d, C64::from(*s)),
            ThetaSpec::Matrix(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(HkError::ConfigError(format!(
                        "width matrix must be {d}x{d}"
                    )));
                }
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| C64::from(rows[i][j]));
                cone_check(m)
            }
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_t_final() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_symbol() -> String {
    "hk".into()
}

/// Flat-JSON run configuration. Unknown keys are hard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: String,
    pub eps: EpsSpec,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(rename = "A", default = "one")]
    pub depth: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub h1_const: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub dt_ref: Option<f64>,
    /// Initial coherent-state center.
    #[serde(default)]
    pub q0: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default)]
    pub n_x: Option<usize>,
    #[serde(default)]
    pub q_min: Option<f64>,
    #[serde(default)]
    pub q_max: Option<f64>,
    #[serde(default)]
    pub n_q: Option<usize>,
    #[serde(default)]
    pub p_min: Option<f64>,
    #[serde(default)]
    pub p_max: Option<f64>,
    #[serde(default)]
    pub n_p: Option<usize>,
    #[serde(default)]
    pub theta_x: Option<ThetaSpec>,
    #[serde(default)]
    pub theta_y: Option<ThetaSpec>,
    /// Symbol used by `method = "hk"`: `"hk"` or `"fga"`.
    #[serde(default = "default_symbol")]
    pub symbol: String,
    pub method: Option<String>,
    #[serde(default)]
    pub out: Option<String>,
    /// When set, `converge` uses `t(ε) = c·log(1/ε)` instead of `t_final`.
    #[serde(default)]
    pub ehrenfest_c: Option<f64>,
    #[serde(default)]
    pub dump_trajectories: Option<String>,
    #[serde(default)]
    pub dump_fbi: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HkError::ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps.list();
        if eps.is_empty() {
            return Err(HkError::ConfigError("eps list is empty".into()));
        }
        for &e in &eps {
            if !e.is_finite() || e <= 0.0 || e > 1.0 {
                return Err(HkError::ConfigError(format!(
                    "eps must lie in (0, 1], got {e}"
                )));
            }
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(HkError::ConfigError(format!(
                "dt must be positive: {}",
                self.dt
            )));
        }
        if let Some(dt_ref) = self.dt_ref {
            if !dt_ref.is_finite() || dt_ref <= 0.0 {
                return Err(HkError::ConfigError(format!(
                    "dt_ref must be positive: {dt_ref}"
                )));
            }
        }
        if !self.t_final.is_finite() {
            return Err(HkError::ConfigError("t_final must be finite".into()));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<HamiltonianModel> {
        let params = PotentialParams {
            omega: self.omega,
            a: self.a,
            depth: self.depth,
            sigma: self.sigma,
            h1_const: self.h1_const,
        };
        HamiltonianModel::builtin(&self.potential, &params, 1)
    }

    pub fn build_widths(&self) -> Result<WidthPair> {
        let tx = match &self.theta_x {
            Some(spec) => spec.to_cone(1)?,
            None => ConeMatrix::identity(1),
        };
        let ty = match &self.theta_y {
            Some(spec) => spec.to_cone(1)?,
            None => ConeMatrix::identity(1),
        };
        WidthPair::new(tx, ty)
    }

    /// SHA-256 of the canonical JSON serialization, truncated to 16 hex
    /// characters; attached to every table row for provenance.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Propagation method of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hk,
    Fga,
    Tga,
    Reference,
    Identity,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "hk" => Ok(Method::Hk),
            "fga" => Ok(Method::Fga),
            "tga" => Ok(Method::Tga),
            "reference" => Ok(Method::Reference),
            "identity" => Ok(Method::Identity),
            other => Err(HkError::ConfigError(format!("unknown method `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Hk => "hk",
            Method::Fga => "fga",
            Method::Tga => "tga",
            Method::Reference => "reference",
            Method::Identity => "identity",
        }
    }
}

/// One measured table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub eps: f64,
    pub t: f64,
    pub method: String,
    pub l2_error: f64,
    pub norm_defect: f64,
    pub wall_time_s: f64,
    pub config_hash: String,
}

/// Rows of `(eps, t, method, error, …)`, sorted by `(method, eps, t)` with
/// any fitted-slope summary rows appended at the end.
#[derive(Debug, Clone, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const CSV_HEADER: &'static str =
        "eps,t,method,l2_error,norm_defect,wall_time_s,config_hash";

    fn sort_data_rows(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.method.as_str(), a.eps, a.t)
                .partial_cmp(&(b.method.as_str(), b.eps, b.t))
                .expect("no NaN in table keys")
        });
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.eps, r.t, r.method, r.l2_error, r.norm_defect, r.wall_time_s, r.config_hash
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Row with the given method name, if present.
    pub fn row(&self, method: &str, eps: f64) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.eps - eps).abs() < 1e-15)
    }
}

/// Grids and solver settings derived from a config for one `(ε, t)` pair.
pub struct RunSetup {
    pub model: HamiltonianModel,
    pub widths: WidthPair,
    pub qp_grid: BundleGrid,
    pub x_grid: XGrid,
    pub eps: f64,
    pub dt_ref: f64,
}

impl RunSetup {
    pub fn domain(&self) -> Result<SpectralDomain> {
        SpectralDomain::new(self.x_grid, self.eps, self.dt_ref)
    }
}

/// Builds grids for one run. Explicit grid keys win; everything else is
/// derived from `ε`, the initial center and a coarse probe of the classical
/// envelope:
///
/// * `(q,p)` grid: `(q0,p0) ± 8√ε` at spacing `0.5√ε`;
/// * spatial box: classical `X` envelope plus `12√ε·max(1, ‖F‖)`;
/// * spatial step: at least 16 points per `ε`-wavelength at the largest
///   momentum seen, and at least 8 points per `√ε`, rounded to a power of
///   two for the spectral solver.
pub fn derive_setup(cfg: &RunConfig, eps: f64, t_final: f64) -> Result<RunSetup> {
    let model = cfg.build_model()?;
    let widths = cfg.build_widths()?;
    let se = eps.sqrt();

    let qp_grid = match (cfg.q_min, cfg.q_max, cfg.n_q, cfg.p_min, cfg.p_max, cfg.n_p) {
        (Some(qmin), Some(qmax), Some(nq), Some(pmin), Some(pmax), Some(np)) => {
            BundleGrid::new_1d(qmin, qmax, nq, pmin, pmax, np)?
        }
        (None, None, None, None, None, None) => {
            let spacing = QP_SPACING_SQRT_EPS * se;
            let half = (QP_EXTENT_SQRT_EPS / QP_SPACING_SQRT_EPS).round() as usize;
            let ext = half as f64 * spacing;
            BundleGrid::new_1d(
                cfg.q0 - ext,
                cfg.q0 + ext,
                2 * half + 1,
                cfg.p0 - ext,
                cfg.p0 + ext,
                2 * half + 1,
            )?
        }
        _ => {
            return Err(HkError::ConfigError(
                "specify either all of q_min/q_max/n_q/p_min/p_max/n_p or none".into(),
            ))
        }
    };

    let x_grid = match (cfg.x_min, cfg.x_max, cfg.n_x) {
        (Some(lo), Some(hi), Some(n)) => XGrid::new(lo, hi, n)?,
        (None, None, None) => {
            // Coarse probe of the classical envelope over the whole path.
            let probe = evolve_bundle_sampled(&model, &qp_grid, t_final, cfg.dt.max(1e-3), 5)?;
            let mut x_lo = f64::INFINITY;
            let mut x_hi = f64::NEG_INFINITY;
            let mut p_max: f64 = 0.0;
            let mut f_max: f64 = 1.0;
            for rec in &probe {
                for x in &rec.positions {
                    x_lo = x_lo.min(x[0]);
                    x_hi = x_hi.max(x[0]);
                }
                for xi in &rec.momenta {
                    p_max = p_max.max(xi[0].abs());
                }
                for f in &rec.jacobians {
                    f_max = f_max.max(f.norm());
                }
            }
            let qa = &qp_grid.q_axes()[0];
            let pa = &qp_grid.p_axes()[0];
            x_lo = x_lo.min(qa.min);
            x_hi = x_hi.max(qa.max);
            p_max = p_max.max(pa.min.abs()).max(pa.max.abs());

            let width_scale = [widths.theta_x(), widths.theta_y()]
                .iter()
                .map(|t| t.real_part()[(0, 0)])
                .fold(1.0f64, f64::min);
            let margin = X_MARGIN_SQRT_EPS * se * f_max.max(1.0) / width_scale.sqrt();
            let lo = x_lo - margin;
            let hi = x_hi + margin;
            let dx_wave =
                2.0 * std::f64::consts::PI * eps / (POINTS_PER_WAVELENGTH * p_max.max(1e-6));
            let dx = dx_wave.min(se / 8.0);
            let n_raw = ((hi - lo) / dx).ceil() as usize;
            let n = n_raw.next_power_of_two().max(64);
            if n > (1 << 21) {
                return Err(HkError::ConfigError(format!(
                    "derived spatial grid of {n} points is unreasonably large"
                )));
            }
            XGrid::new(lo, hi, n)?
        }
        _ => {
            return Err(HkError::ConfigError(
                "specify either all of x_min/x_max/n_x or none".into(),
            ))
        }
    };

    let dt_ref = cfg.dt_ref.unwrap_or_else(|| cfg.dt.min(2e-4));
    Ok(RunSetup {
        model,
        widths,
        qp_grid,
        x_grid,
        eps,
        dt_ref,
    })
}

struct SingleRun {
    row: ErrorRow,
    psi_out: WaveFunction,
}

/// Runs one `(ε, t, method)` pipeline and measures it against the spectral
/// reference (or against the input state, for the identity map).
fn run_single(cfg: &RunConfig, eps: f64, t_final: f64, method: Method) -> Result<SingleRun> {
    let t_eff = if method == Method::Identity {
        0.0
    } else {
        t_final
    };
    let setup = derive_setup(cfg, eps, t_eff)?;
    let psi0 = coherent_state(
        (cfg.q0, cfg.p0),
        eps,
        &ConeMatrix::identity(1),
        &setup.x_grid,
    )?;

    let started = Instant::now();
    let psi_out = match method {
        Method::Identity => identity_apply(&psi0, &setup.widths, &setup.qp_grid)?,
        Method::Reference => split_step_propagate(&setup.model, &psi0, t_final, &setup.domain()?)?,
        Method::Tga => propagate_tga(
            &setup.model,
            (cfg.q0, cfg.p0),
            eps,
            t_final,
            cfg.dt,
            &setup.x_grid,
        )?,
        Method::Hk | Method::Fga => {
            let symbol = match method {
                Method::Fga => SymbolKind::Frozen,
                _ => match cfg.symbol.as_str() {
                    "hk" => SymbolKind::HermanKluk,
                    "fga" => SymbolKind::Frozen,
                    other => return Err(HkError::ConfigError(format!("unknown symbol `{other}`"))),
                },
            };
            propagate_hk(
                &setup.model,
                &psi0,
                t_final,
                &setup.widths,
                symbol,
                &setup.qp_grid,
                cfg.dt,
            )?
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    maybe_dump(cfg, &setup, &psi0)?;

    let l2 = match method {
        Method::Identity => l2_error(&psi_out, &psi0)?,
        Method::Reference => 0.0,
        _ => {
            let reference = split_step_propagate(&setup.model, &psi0, t_final, &setup.domain()?)?;
            l2_error(&psi_out, &reference)?
        }
    };
    let norm_defect = (psi_out.norm() - psi0.norm()).abs();

    Ok(SingleRun {
        row: ErrorRow {
            eps,
            t: t_eff,
            method: method.name().to_string(),
            l2_error: l2,
            norm_defect,
            wall_time_s,
            config_hash: cfg.hash(),
        },
        psi_out,
    })
}

fn maybe_dump(cfg: &RunConfig, setup: &RunSetup, psi0: &WaveFunction) -> Result<()> {
    if let Some(path) = &cfg.dump_trajectories {
        let records = evolve_bundle_sampled(&setup.model, &setup.qp_grid, cfg.t_final, cfg.dt, 10)?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        dump_records_csv(&records, &mut out)?;
    }
    if let Some(path) = &cfg.dump_fbi {
        let field = fbi_analyze(psi0, &setup.qp_grid, setup.widths.theta_y())?;
        field.save_csv(Path::new(path))?;
    }
    Ok(())
}

/// Identity-map check: one row per `ε`, comparing analysis+synthesis against
/// the input state.
pub fn run_identity(cfg: &RunConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let mut table = ErrorTable::default();
    for eps in cfg.eps.list() {
        table
            .rows
            .push(run_single(cfg, eps, 0.0, Method::Identity)?.row);
    }
    table.sort_data_rows();
    Ok(table)
}

/// Propagates with the configured method at every `ε`; returns the labeled
/// output wavefunctions alongside the table.
pub fn run_propagate(cfg: &RunConfig) -> Result<(ErrorTable, Vec<(String, WaveFunction)>)> {
    let method = Method::parse(cfg.method.as_deref().unwrap_or("hk"))?;
    run_propagate_with(cfg, method)
}

/// Reference-solver run; rows carry zero error by construction.
pub fn run_reference(cfg: &RunConfig) -> Result<(ErrorTable, Vec<(String, WaveFunction)>)> {
    run_propagate_with(cfg, Method::Reference)
}

fn run_propagate_with(
    cfg: &RunConfig,
    method: Method,
) -> Result<(ErrorTable, Vec<(String, WaveFunction)>)> {
    cfg.validate()?;
    let mut table = ErrorTable::default();
    let mut waves = Vec::new();
    for eps in cfg.eps.list() {
        let run = run_single(cfg, eps, cfg.t_final, method)?;
        waves.push((format!("psi_{}_eps{}", method.name(), eps), run.psi_out));
        table.rows.push(run.row);
    }
    table.sort_data_rows();
    Ok((table, waves))
}

/// `ε`-sweep of the configured method against the reference, with a fitted
/// log-log slope row appended. Requires at least three `ε` values, each
/// halving the previous. With `ehrenfest_c = c` set, each `ε` runs to
/// `t(ε) = c·log(1/ε)`.
pub fn run_converge(cfg: &RunConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let eps_list = cfg.eps.list();
    if eps_list.len() < 3 {
        return Err(HkError::ConfigError(format!(
            "convergence sweep needs at least 3 eps values, got {}",
            eps_list.len()
        )));
    }
    for pair in eps_list.windows(2) {
        let ratio = pair[1] / pair[0];
        if !(0.45..=0.55).contains(&ratio) {
            return Err(HkError::ConfigError(format!(
                "eps values must halve: {} -> {} (ratio {ratio})",
                pair[0], pair[1]
            )));
        }
    }
    let method = Method::parse(cfg.method.as_deref().unwrap_or("hk"))?;
    if matches!(method, Method::Reference | Method::Identity) {
        return Err(HkError::ConfigError(
            "convergence sweeps need a propagation method (hk, fga or tga)".into(),
        ));
    }

    let mut table = ErrorTable::default();
    let mut errs = Vec::new();
    let mut t_used = cfg.t_final;
    for &eps in &eps_list {
        let t = match cfg.ehrenfest_c {
            Some(c) => c * (1.0 / eps).ln(),
            None => cfg.t_final,
        };
        t_used = t;
        let run = run_single(cfg, eps, t, method)?;
        errs.push((eps, run.row.l2_error));
        table.rows.push(run.row);
    }
    table.sort_data_rows();

    let slope = fit_log_slope(&errs);
    let exact_regime = errs.iter().all(|&(_, e)| e <= 1e-4);
    let (e_prev, e_last) = (errs[errs.len() - 2].1, errs[errs.len() - 1].1);
    let stalled = e_prev / e_last.max(1e-300) <= 1.3;
    let label = if exact_regime {
        "slope[exact_regime]"
    } else if stalled {
        "slope[non_convergent]"
    } else {
        "slope"
    };
    table.rows.push(ErrorRow {
        eps: 0.0,
        t: t_used,
        method: label.to_string(),
        l2_error: slope,
        norm_defect: 0.0,
        wall_time_s: 0.0,
        config_hash: cfg.hash(),
    });
    Ok(table)
}

/// Side-by-side rows for `hk`, `fga` and `tga` at shared `(ε, t)`.
pub fn run_compare(cfg: &RunConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let mut table = ErrorTable::default();
    for eps in cfg.eps.list() {
        for method in [Method::Hk, Method::Fga, Method::Tga] {
            table
                .rows
                .push(run_single(cfg, eps, cfg.t_final, method)?.row);
        }
    }
    table.sort_data_rows();
    Ok(table)
}

/// Least-squares slope of `log err` against `log ε`.
pub fn fit_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(e, r)| (e.ln(), r.max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json(extra: &str) -> String {
        format!(r#"{{"potential": "free"{extra}}}"#)
    }

    fn with_eps(extra: &str) -> String {
        base_json(&format!(r#", "eps": 0.05{extra}"#))
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg = RunConfig::from_json(&with_eps("")).unwrap();
        assert_eq!(cfg.t_final, 1.0);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.eps.list(), vec![0.05]);
        assert!(cfg.theta_x.is_none());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = RunConfig::from_json(&with_eps(r#", "dq": 0.1"#)).unwrap_err();
        assert!(matches!(err, HkError::ConfigError(_)), "{err}");
    }

    #[test]
    fn config_rejects_bad_eps() {
        assert!(RunConfig::from_json(r#"{"potential": "free", "eps": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"potential": "free", "eps": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"potential": "free", "eps": 0.0}"#).is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::from_json(&with_eps("")).unwrap();
        let b = RunConfig::from_json(&with_eps("")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_json(&with_eps(r#", "t_final": 2.0"#)).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn identity_run_produces_small_error() {
        let cfg = RunConfig::from_json(&with_eps("")).unwrap();
        let table = run_identity(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.method, "identity");
        assert!(row.l2_error <= 1e-6, "identity error {:e}", row.l2_error);
        assert_eq!(row.t, 0.0);
    }

    #[test]
    fn identity_rejects_empty_eps() {
        let cfg = RunConfig {
            eps: EpsSpec::Many(vec![]),
            ..RunConfig::from_json(&with_eps("")).unwrap()
        };
        assert!(matches!(run_identity(&cfg), Err(HkError::ConfigError(_))));
    }

    #[test]
    fn converge_validates_eps_ladder() {
        let cfg = RunConfig::from_json(&base_json(r#", "eps": [0.2, 0.1]"#)).unwrap();
        assert!(matches!(run_converge(&cfg), Err(HkError::ConfigError(_))));
        let cfg = RunConfig::from_json(&base_json(r#", "eps": [0.2, 0.15, 0.1]"#)).unwrap();
        assert!(matches!(run_converge(&cfg), Err(HkError::ConfigError(_))));
    }

    #[test]
    fn converge_free_model_is_exact_regime() {
        let cfg = RunConfig::from_json(&base_json(
            r#", "eps": [0.2, 0.1, 0.05], "t_final": 0.5, "p0": 0.4"#,
        ))
        .unwrap();
        let table = run_converge(&cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        let slope_row = table.rows.last().unwrap();
        assert_eq!(slope_row.method, "slope[exact_regime]");
        for row in &table.rows[..3] {
            assert!(row.l2_error <= 1e-5, "free HK error {:e}", row.l2_error);
        }
    }

    #[test]
    fn csv_has_exact_header_and_sorted_rows() {
        let cfg = RunConfig::from_json(&base_json(r#", "eps": [0.1, 0.05]"#)).unwrap();
        let table = run_identity(&cfg).unwrap();
        let csv = table.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "eps,t,method,l2_error,norm_defect,wall_time_s,config_hash"
        );
        let eps_col: Vec<f64> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(eps_col, vec![0.05, 0.1]);
    }

    #[test]
    fn converge_fga_flags_non_convergent() {
        let cfg = RunConfig::from_json(
            r#"{"potential": "torsional", "a": 1.0, "eps": [0.2, 0.1, 0.05],
                "t_final": 1.0, "q0": 1.0, "method": "fga"}"#,
        )
        .unwrap();
        let table = run_converge(&cfg).unwrap();
        let slope_row = table.rows.last().unwrap();
        assert_eq!(slope_row.method, "slope[non_convergent]", "rows: {table:?}");
    }

    #[test]
    fn compare_orders_methods_on_torsional() {
        let cfg = RunConfig::from_json(
            r#"{"potential": "torsional", "a": 1.0, "eps": 0.05,
                "t_final": 1.0, "q0": 1.0}"#,
        )
        .unwrap();
        let table = run_compare(&cfg).unwrap();
        let hk = table.row("hk", 0.05).unwrap().l2_error;
        let fga = table.row("fga", 0.05).unwrap().l2_error;
        assert!(table.row("tga", 0.05).is_some());
        assert!(hk < fga, "hk {hk:e} not below fga {fga:e}");
    }

    #[test]
    fn compare_at_zero_time_reduces_to_identity() {
        let cfg = RunConfig::from_json(
            r#"{"potential": "harmonic", "eps": 0.05, "t_final": 0.0, "q0": 1.0}"#,
        )
        .unwrap();
        let table = run_compare(&cfg).unwrap();
        for method in ["hk", "fga", "tga"] {
            let err = table.row(method, 0.05).unwrap().l2_error;
            assert!(err <= 1e-6, "{method} error at t = 0 is {err:e}");
        }
    }

    #[test]
    fn compare_harmonic_hk_and_tga_hit_discretization_floor() {
        let cfg = RunConfig::from_json(
            r#"{"potential": "harmonic", "eps": 0.05, "t_final": 1.0, "q0": 1.0}"#,
        )
        .unwrap();
        let table = run_compare(&cfg).unwrap();
        for method in ["hk", "tga"] {
            let err = table.row(method, 0.05).unwrap().l2_error;
            assert!(err <= 1e-4, "{method} error {err:e} not at floor");
        }
    }

    #[test]
    fn fit_log_slope_recovers_exponent() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e: &f64| (e, 0.3 * e.powf(1.1)))
            .collect();
        let slope = fit_log_slope(&pairs);
        assert!((slope - 1.1).abs() < 1e-12);
    }
}
