use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robin_bayes::analysis::{summarize, AnalysisSettings};
use robin_bayes::mcmc::{run_chain, ChainConfig};
use robin_bayes::mesh::build_rect_mesh;
use robin_bayes::observation::{forward, generate_data, HProfile, ModelKind};
use robin_bayes::prior::{CoeffVector, PriorSpec};
use robin_bayes::{Error, Result};

pub const LY: f64 = 0.2;

pub fn h_profile() -> HProfile {
    HProfile::Sinusoid {
        amplitude: 10.0,
        frequency: 12.0,
        offset: 1.0,
    }
}

pub fn prior(family: &str, parameter: f64, truncation: usize) -> Result<PriorSpec> {
    match family {
        "matern" => PriorSpec::matern(parameter, truncation),
        "squared_exp" => PriorSpec::squared_exp(parameter, truncation),
        other => Err(Error::InvalidArgument(format!("unknown prior family {other:?}"))),
    }
}

fn grid_points(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
}

pub fn prior_samples(
    family: &str,
    parameter: f64,
    truncation: usize,
    count: usize,
    grid: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let spec = prior(family, parameter, truncation)?;
    let xs = grid_points(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * grid);
    for _ in 0..count {
        let c = spec.sample(&mut rng);
        for &x in &xs {
            out.push(c.eval(x)?);
        }
    }
    Ok(out)
}

/// Trace at `grid` interior points of the top edge.
pub fn laplace_trace(coeffs: Vec<f64>, nx: usize, ny: usize, grid: usize) -> Result<Vec<f64>> {
    let mesh = build_rect_mesh(nx, ny, 1.0, LY)?;
    let coeffs = CoeffVector::new(coeffs)?;
    let xs: Vec<f64> = (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect();
    let obs = forward(&ModelKind::laplace(h_profile()), &mesh, &coeffs, &xs)?;
    Ok(obs.as_flat().to_vec())
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
    pub acceptance: f64,
    pub theta_l2_error: f64,
}

pub fn posterior_run(
    family: &str,
    truth: Vec<f64>,
    observations: usize,
    sigma: f64,
    iterations: usize,
    seed: u64,
) -> Result<Posterior> {
    let truth = CoeffVector::new(truth)?;
    let parameter = 1.0;
    let spec = prior(family, parameter, truth.truncation())?;
    let mesh = build_rect_mesh(40, 8, 1.0, LY)?;
    let model = ModelKind::laplace(h_profile());
    let data = generate_data(&model, &mesh, &truth, observations, sigma, seed)?;
    let burn_in = iterations / 5;
    let mut cfg = ChainConfig::new(iterations, burn_in, 1e-3, seed.wrapping_add(1));
    cfg.adapt_interval = (burn_in / 10).max(50);
    cfg.thinning = (iterations / 2000).max(1);
    let record = run_chain(&cfg, &spec, &data, &mesh, CoeffVector::zeros(truth.truncation()))?;
    let settings = AnalysisSettings {
        grid_size: 101,
        ..AnalysisSettings::default()
    };
    let s = summarize(&record, Some(&truth), 0.0, &settings)?;
    Ok(Posterior {
        grid: s.grid,
        mean: s.beta_mean_curve,
        lower: s.band_lower,
        upper: s.band_upper,
        truth: s.truth_curve.unwrap_or_default(),
        acceptance: record.stats.post_burn_in_acceptance,
        theta_l2_error: s.errors["theta_l2"],
    })
}
