//! WebAssembly bindings for the demo page in `www/`.
//!
//! The computations live in [`demo`] so they can be tested natively; the
//! exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js_err(e: robin_bayes::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `count` prior draws of θ on `grid` points of [0, 1], row-major.
#[wasm_bindgen(js_name = priorSamples)]
pub fn prior_samples(
    family: &str,
    parameter: f64,
    truncation: usize,
    count: usize,
    grid: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    demo::prior_samples(family, parameter, truncation, count, grid, seed).map_err(js_err)
}

/// Trace of the Laplace solution on the top edge for β = exp(θ), with θ
/// given by its coefficients `k = −K..=K`.
#[wasm_bindgen(js_name = laplaceTrace)]
pub fn laplace_trace(coeffs: Vec<f64>, nx: usize, ny: usize, grid: usize) -> Result<Vec<f64>, JsError> {
    demo::laplace_trace(coeffs, nx, ny, grid).map_err(js_err)
}

#[wasm_bindgen]
pub struct PosteriorRun(demo::Posterior);

#[wasm_bindgen]
impl PosteriorRun {
    #[wasm_bindgen(getter)]
    pub fn grid(&self) -> Vec<f64> {
        self.0.grid.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> Vec<f64> {
        self.0.mean.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lower(&self) -> Vec<f64> {
        self.0.lower.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn upper(&self) -> Vec<f64> {
        self.0.upper.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.0.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn acceptance(&self) -> f64 {
        self.0.acceptance
    }

    #[wasm_bindgen(getter, js_name = thetaL2Error)]
    pub fn theta_l2_error(&self) -> f64 {
        self.0.theta_l2_error
    }
}

/// Synthetic Laplace data from `truth` on a 40×8 mesh and a pCN run on it.
#[wasm_bindgen(js_name = posteriorRun)]
pub fn posterior_run(
    family: &str,
    truth: Vec<f64>,
    observations: usize,
    sigma: f64,
    iterations: usize,
    seed: u64,
) -> Result<PosteriorRun, JsError> {
    demo::posterior_run(family, truth, observations, sigma, iterations, seed)
        .map(PosteriorRun)
        .map_err(js_err)
}
