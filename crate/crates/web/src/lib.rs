//! Browser bindings for the propagator library: three interactive
//! operations behind `wasm-bindgen`, with all rendering done by the page's
//! JavaScript. The compute paths are plain Rust and unit-tested on the host;
//! build the wasm package with `wasm-pack build --target web`.

use wasm_bindgen::prelude::*;

use hk_core::complex_matrix::ConeMatrix;
use hk_core::driver::{derive_setup, RunConfig};
use hk_core::fio_apply::{coherent_state, fbi_analyze, propagate_hk, propagate_tga, SymbolKind};
use hk_core::flow::integrate_trajectory_sampled;
use hk_core::hk_symbol::{hk_prefactor_closed, WidthPair};
use hk_core::reference_solver::split_step_propagate;
use hk_core::{HkError, Result};

/// Densities of a propagated state and the spectral reference on a shared
/// spatial grid, plus their distance.
#[wasm_bindgen]
pub struct PropagationResult {
    x: Vec<f64>,
    density: Vec<f64>,
    density_ref: Vec<f64>,
    l2_error: f64,
    norm_defect: f64,
}

#[wasm_bindgen]
impl PropagationResult {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density_ref(&self) -> Vec<f64> {
        self.density_ref.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn l2_error(&self) -> f64 {
        self.l2_error
    }

    #[wasm_bindgen(getter)]
    pub fn norm_defect(&self) -> f64 {
        self.norm_defect
    }
}

/// Coherent-state coefficient magnitudes on the `(q,p)` grid, row-major over
/// `q` (outer) and `p` (inner).
#[wasm_bindgen]
pub struct PhaseSpacePortrait {
    n_q: usize,
    n_p: usize,
    q_min: f64,
    q_max: f64,
    p_min: f64,
    p_max: f64,
    magnitudes: Vec<f64>,
}

#[wasm_bindgen]
impl PhaseSpacePortrait {
    #[wasm_bindgen(getter)]
    pub fn n_q(&self) -> usize {
        self.n_q
    }

    #[wasm_bindgen(getter)]
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    #[wasm_bindgen(getter)]
    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    #[wasm_bindgen(getter)]
    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    #[wasm_bindgen(getter)]
    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    #[wasm_bindgen(getter)]
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    #[wasm_bindgen(getter)]
    pub fn magnitudes(&self) -> Vec<f64> {
        self.magnitudes.clone()
    }
}

fn demo_config(potential: &str, eps: f64, t_final: f64) -> Result<RunConfig> {
    RunConfig::from_json(&format!(
        r#"{{"potential": "{potential}", "eps": {eps}, "t_final": {t_final},
             "dt": 0.002, "dt_ref": 0.0005, "q0": 1.0, "p0": 0.0}}"#
    ))
}

fn compute_propagation(
    potential: &str,
    eps: f64,
    t_final: f64,
    method: &str,
) -> Result<PropagationResult> {
    let cfg = demo_config(potential, eps, t_final)?;
    let setup = derive_setup(&cfg, eps, t_final)?;
    let psi0 = coherent_state(
        (cfg.q0, cfg.p0),
        eps,
        &ConeMatrix::identity(1),
        &setup.x_grid,
    )?;
    let widths = WidthPair::identity(1);
    let psi = match method {
        "hk" => propagate_hk(
            &setup.model,
            &psi0,
            t_final,
            &widths,
            SymbolKind::HermanKluk,
            &setup.qp_grid,
            cfg.dt,
        )?,
        "fga" => propagate_hk(
            &setup.model,
            &psi0,
            t_final,
            &widths,
            SymbolKind::Frozen,
            &setup.qp_grid,
            cfg.dt,
        )?,
        "tga" => propagate_tga(
            &setup.model,
            (cfg.q0, cfg.p0),
            eps,
            t_final,
            cfg.dt,
            &setup.x_grid,
        )?,
        other => return Err(HkError::ConfigError(format!("unknown method `{other}`"))),
    };
    let reference = split_step_propagate(&setup.model, &psi0, t_final, &setup.domain()?)?;
    let l2 = hk_core::reference_solver::l2_error(&psi, &reference)?;
    let grid = setup.x_grid;
    Ok(PropagationResult {
        x: (0..grid.n_x).map(|j| grid.node(j)).collect(),
        density: psi.values.iter().map(|v| v.norm_sqr()).collect(),
        density_ref: reference.values.iter().map(|v| v.norm_sqr()).collect(),
        l2_error: l2,
        norm_defect: (psi.norm() - psi0.norm()).abs(),
    })
}

fn compute_portrait(potential: &str, eps: f64, t_final: f64) -> Result<PhaseSpacePortrait> {
    let cfg = demo_config(potential, eps, t_final)?;
    let setup = derive_setup(&cfg, eps, t_final)?;
    let psi0 = coherent_state(
        (cfg.q0, cfg.p0),
        eps,
        &ConeMatrix::identity(1),
        &setup.x_grid,
    )?;
    let psi_t = split_step_propagate(&setup.model, &psi0, t_final, &setup.domain()?)?;

    // Portrait grid: the propagation grid widened to catch the evolved state.
    let qa = &setup.qp_grid.q_axes()[0];
    let pa = &setup.qp_grid.p_axes()[0];
    let se = eps.sqrt();
    let (q_min, q_max) = (qa.min - 4.0 * se, qa.max + 4.0 * se);
    let (p_min, p_max) = (pa.min - 4.0 * se, pa.max + 4.0 * se);
    let n = 48;
    let grid = hk_core::flow::BundleGrid::new_1d(q_min, q_max, n, p_min, p_max, n)?;
    let field = fbi_analyze(&psi_t, &grid, &ConeMatrix::identity(1))?;
    Ok(PhaseSpacePortrait {
        n_q: n,
        n_p: n,
        q_min,
        q_max,
        p_min,
        p_max,
        magnitudes: field.coeffs.iter().map(|c| c.norm()).collect(),
    })
}

/// `u₀(t)` along one trajectory from `(1, 0)`, flattened as
/// `[t₀, Re u₀, Im u₀, t₁, …]`; the spiral shows the branch winding.
fn compute_prefactor_trace(potential: &str, t_final: f64) -> Result<Vec<f64>> {
    let cfg = demo_config(potential, 0.05, t_final)?;
    let model = cfg.build_model()?;
    let q0 = nalgebra_v1(1.0);
    let p0 = nalgebra_v1(0.0);
    let record = integrate_trajectory_sampled(&model, &q0, &p0, t_final, 0.002, 5)?;
    let path = hk_prefactor_closed(&record, &WidthPair::identity(1))?;
    let mut out = Vec::with_capacity(3 * path.values.len());
    for (t, u) in path.times.iter().zip(&path.values) {
        out.push(*t);
        out.push(u.re);
        out.push(u.im);
    }
    Ok(out)
}

fn nalgebra_v1(x: f64) -> hk_core::nalgebra::DVector<f64> {
    hk_core::nalgebra::DVector::from_vec(vec![x])
}

fn to_js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Propagate the coherent state at `(1, 0)` with `method` ("hk", "fga" or
/// "tga") and compare against the spectral reference.
#[wasm_bindgen]
pub fn propagate_demo(
    potential: &str,
    eps: f64,
    t_final: f64,
    method: &str,
) -> std::result::Result<PropagationResult, JsError> {
    to_js(compute_propagation(potential, eps, t_final, method))
}

/// Phase-space portrait `|⟨g_{(q,p)}, ψ(t)⟩|` of the evolved state.
#[wasm_bindgen]
pub fn phase_space_portrait(
    potential: &str,
    eps: f64,
    t_final: f64,
) -> std::result::Result<PhaseSpacePortrait, JsError> {
    to_js(compute_portrait(potential, eps, t_final))
}

/// Herman-Kluk prefactor trace for the spiral plot.
#[wasm_bindgen]
pub fn prefactor_trace(potential: &str, t_final: f64) -> std::result::Result<Vec<f64>, JsError> {
    to_js(compute_prefactor_trace(potential, t_final))
}
