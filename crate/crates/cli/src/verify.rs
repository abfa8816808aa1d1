//! Built-in verification suites.

use std::f64::consts::PI;
use std::fmt;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robin_bayes::analysis::effective_sample_size;
use robin_bayes::fem_laplace::LaplaceProblem;
use robin_bayes::fem_stokes::StokesProblem;
use robin_bayes::mcmc::{pcn_step, run_chain_with, ChainConfig, ChainState, Target};
use robin_bayes::mesh::{build_rect_mesh, BoundaryTag};
use robin_bayes::prior::{CoeffVector, PriorSpec};

/// Refinement ladder on `(0, 1) × (0, 0.2)`.
pub const LADDER: [(usize, usize); 3] = [(20, 4), (40, 8), (80, 16)];
const LY: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

// Laplace: u = sin(πx) exp(y (1 + x)), homogeneous Robin with β = 1 + x.
fn lap_u(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (y * (1.0 + x)).exp()
}

fn lap_grad(x: f64, y: f64) -> [f64; 2] {
    let e = (y * (1.0 + x)).exp();
    let (s, c) = (PI * x).sin_cos();
    [PI * c * e + s * y * e, (1.0 + x) * s * e]
}

fn lap_source(x: f64, y: f64) -> f64 {
    let e = (y * (1.0 + x)).exp();
    let (s, c) = (PI * x).sin_cos();
    -e * (s * (y * y + (1.0 + x).powi(2) - PI * PI) + 2.0 * PI * y * c)
}

#[derive(Debug, Clone)]
pub struct LaplaceMms {
    pub l2: Vec<f64>,
    pub h1: Vec<f64>,
}

/// Manufactured-solution errors over `ladder`. `fault` perturbs the element
/// stiffness matrices and must be zero for a correct run.
pub fn laplace_mms(ladder: &[(usize, usize)], fault: f64) -> Result<LaplaceMms> {
    let beta = |x: f64| 1.0 + x;
    let flux = |x: f64| lap_grad(x, LY)[1];
    let problem = LaplaceProblem::new(&beta, &flux)
        .with_source(&lap_source)
        .with_stiffness_fault(fault);
    let mut out = LaplaceMms {
        l2: Vec::new(),
        h1: Vec::new(),
    };
    for &(nx, ny) in ladder {
        let mesh = build_rect_mesh(nx, ny, 1.0, LY)?;
        let u = problem.solve(&mesh)?;
        out.l2.push(u.l2_error(&lap_u));
        out.h1.push(u.h1_seminorm_error(&lap_grad));
    }
    Ok(out)
}

// Stokes: u = (sin 2x e^y, −2 cos 2x e^y), p = cos 3x (1 + y), β = 1 + x.
fn st_u(x: f64, y: f64) -> [f64; 2] {
    let e = y.exp();
    [(2.0 * x).sin() * e, -2.0 * (2.0 * x).cos() * e]
}

fn st_p(x: f64, y: f64) -> f64 {
    (3.0 * x).cos() * (1.0 + y)
}

fn st_force(x: f64, y: f64) -> [f64; 2] {
    let e = y.exp();
    let (s, c) = (2.0 * x).sin_cos();
    [
        3.0 * s * e - 3.0 * (3.0 * x).sin() * (1.0 + y),
        -6.0 * c * e + (3.0 * x).cos(),
    ]
}

fn st_traction(x: f64, y: f64, n: [f64; 2]) -> [f64; 2] {
    let e = y.exp();
    let (s, c) = (2.0 * x).sin_cos();
    let g = [[2.0 * c * e, s * e], [4.0 * s * e, -2.0 * c * e]];
    let p = st_p(x, y);
    [
        g[0][0] * n[0] + g[0][1] * n[1] - p * n[0],
        g[1][0] * n[0] + g[1][1] * n[1] - p * n[1],
    ]
}

#[derive(Debug, Clone)]
pub struct StokesMms {
    pub velocity_l2: Vec<f64>,
    pub pressure_l2: Vec<f64>,
    pub max_divergence: f64,
}

pub fn stokes_mms(ladder: &[(usize, usize)]) -> Result<StokesMms> {
    let beta = |x: f64| 1.0 + x;
    let top = |x: f64| st_traction(x, LY, BoundaryTag::GammaTop.normal());
    let sides = |tag: BoundaryTag, x: f64, y: f64| st_traction(x, y, tag.normal());
    let robin = |x: f64| {
        let t = st_traction(x, 0.0, BoundaryTag::GammaBottom.normal());
        let u = st_u(x, 0.0);
        [t[0] + beta(x) * u[0], t[1] + beta(x) * u[1]]
    };
    let problem = StokesProblem::new(&beta, &top, &st_force)
        .with_side_stress(&sides)
        .with_robin_rhs(&robin);
    let mut out = StokesMms {
        velocity_l2: Vec::new(),
        pressure_l2: Vec::new(),
        max_divergence: 0.0,
    };
    for &(nx, ny) in ladder {
        let mesh = build_rect_mesh(nx, ny, 1.0, LY)?;
        let sys = problem.assemble(&mesh)?;
        let (u, p) = sys.solve()?;
        out.max_divergence = out.max_divergence.max(sys.divergence_residual(&u));
        out.velocity_l2.push(u.l2_error(&st_u));
        out.pressure_l2.push(p.l2_error(&st_p));
    }
    Ok(out)
}

pub fn fem_suite(fault: f64) -> Result<Vec<Check>> {
    let lap = laplace_mms(&LADDER, fault)?;
    let lo = orders(&lap.l2);
    let ho = orders(&lap.h1);
    let st = stokes_mms(&LADDER)?;
    let vo = orders(&st.velocity_l2);
    let po = orders(&st.pressure_l2);
    Ok(vec![
        Check::new(
            "laplace L2 order",
            min_of(&lo) >= 1.8,
            format!("orders {lo:.3?} (need >= 1.8)"),
        ),
        Check::new(
            "laplace H1 order",
            min_of(&ho) >= 0.9,
            format!("orders {ho:.3?} (need >= 0.9)"),
        ),
        Check::new(
            "stokes velocity L2 order",
            min_of(&vo) >= 2.5,
            format!("orders {vo:.3?} (need >= 2.5)"),
        ),
        Check::new(
            "stokes pressure L2 order",
            min_of(&po) >= 1.5,
            format!("orders {po:.3?} (need >= 1.5)"),
        ),
        Check::new(
            "stokes divergence residual",
            st.max_divergence <= 1e-8,
            format!("max {:.2e} (need <= 1e-8)", st.max_divergence),
        ),
    ])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean of a correlated series.
fn mc_se(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let ess = effective_sample_size(v).unwrap_or(v.len() as f64);
    (var / ess).sqrt()
}

#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub label: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
}

impl MomentCheck {
    pub fn z(&self) -> f64 {
        (self.estimate - self.target).abs() / self.se
    }
}

/// Coefficient variances from `draws` independent prior samples.
pub fn prior_variances(spec: &PriorSpec, draws: usize, seed: u64) -> Vec<MomentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<CoeffVector> = (0..draws).map(|_| spec.sample(&mut rng)).collect();
    let sd = spec.std_devs();
    spec.frequencies()
        .enumerate()
        .map(|(i, k)| {
            let sq: Vec<f64> = samples.iter().map(|s| s.as_slice()[i].powi(2)).collect();
            let m = mean(&sq);
            let var = sq.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
            MomentCheck {
                label: format!("theta_{k}"),
                estimate: m,
                target: sd[i] * sd[i],
                se: (var / draws as f64).sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CovarianceCheck {
    pub x: f64,
    pub y: f64,
    /// `covariance(x, y)` from the library.
    pub computed: f64,
    /// `κ² (w_0² + Σ_{k>=1} w_k² cos 2πk(x − y))`.
    pub closed_form: f64,
    pub monte_carlo: MomentCheck,
}

/// Library covariance against the stationary closed form and a Monte Carlo
/// estimate at `pairs` random points.
pub fn covariance_oracle(spec: &PriorSpec, pairs: usize, draws: usize, seed: u64) -> Vec<CovarianceCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..pairs).map(|_| (rng.random(), rng.random())).collect();
    let samples: Vec<CoeffVector> = (0..draws).map(|_| spec.sample(&mut rng)).collect();
    let kappa2 = spec.kappa().powi(2);
    pts.into_iter()
        .map(|(x, y)| {
            let closed = kappa2
                * (0..=spec.truncation() as i64)
                    .map(|k| spec.weight(k).unwrap().powi(2) * (2.0 * PI * k as f64 * (x - y)).cos())
                    .sum::<f64>();
            let prods: Vec<f64> = samples
                .iter()
                .map(|s| s.eval(x).unwrap() * s.eval(y).unwrap())
                .collect();
            let m = mean(&prods);
            let var = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
            CovarianceCheck {
                x,
                y,
                computed: spec.covariance(x, y),
                closed_form: closed,
                monte_carlo: MomentCheck {
                    label: format!("C({x:.3}, {y:.3})"),
                    estimate: m,
                    target: closed,
                    se: (var / draws as f64).sqrt(),
                },
            }
        })
        .collect()
}

pub fn prior_suite() -> Vec<Check> {
    let mut out = Vec::new();
    for (name, spec) in [
        ("matern", PriorSpec::matern(1.0, 2).expect("valid")),
        ("squared_exp", PriorSpec::squared_exp(1.0, 2).expect("valid")),
    ] {
        let v = prior_variances(&spec, 100_000, 1);
        let worst = v.iter().map(MomentCheck::z).fold(0.0, f64::max);
        out.push(Check::new(
            format!("{name} prior variances"),
            worst < 3.0,
            format!("largest deviation {worst:.2} standard errors over {} coefficients", v.len()),
        ));
        let c = covariance_oracle(&spec, 5, 20_000, 2);
        let exact = c.iter().map(|c| (c.computed - c.closed_form).abs()).fold(0.0, f64::max);
        let mc = c.iter().map(|c| c.monte_carlo.z()).fold(0.0, f64::max);
        out.push(Check::new(
            format!("{name} covariance oracle"),
            exact < 1e-12 && mc < 3.0,
            format!("closed-form gap {exact:.1e}, Monte Carlo {mc:.2} standard errors"),
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct InvarianceResult {
    pub variances: Vec<MomentCheck>,
    pub lag1: Vec<f64>,
    pub expected_lag1: f64,
}

/// Flat-likelihood pCN chain with fixed step `s`, started from a prior draw.
pub fn pcn_prior_invariance(spec: &PriorSpec, s: f64, steps: usize, seed: u64) -> InvarianceResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = |_: &CoeffVector| Ok(0.0);
    let mut state = ChainState::new(spec.sample(&mut rng), flat, s).expect("flat likelihood");
    let d = spec.dim();
    let mut series: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(steps)).collect();
    for _ in 0..steps {
        pcn_step(&mut state, spec, flat, &mut rng);
        for (k, v) in state.theta.as_slice().iter().enumerate() {
            series[k].push(*v);
        }
    }
    let sd = spec.std_devs();
    let mut variances = Vec::new();
    let mut lag1 = Vec::new();
    for (i, k) in spec.frequencies().enumerate() {
        let x = &series[i];
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        variances.push(MomentCheck {
            label: format!("theta_{k}"),
            estimate: mean(&sq),
            target: sd[i] * sd[i],
            se: mc_se(&sq),
        });
        let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = sq.iter().sum();
        lag1.push(num / den);
    }
    InvarianceResult {
        variances,
        lag1,
        expected_lag1: (1.0 - s * s).sqrt(),
    }
}

#[derive(Debug, Clone)]
pub struct ConjugateResult {
    pub means: Vec<MomentCheck>,
    pub variances: Vec<MomentCheck>,
    pub acceptance: f64,
}

/// pCN on a linear-Gaussian problem `y = Aθ + σε` with a random `rows × d`
/// matrix, compared with the closed-form posterior.
pub fn conjugate_oracle(spec: &PriorSpec, rows: usize, steps: usize, seed: u64) -> Result<ConjugateResult> {
    let d = spec.dim();
    let sigma = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    let a = DMatrix::from_fn(rows, d, |_, _| normal(&mut rng));
    let truth = DVector::from_column_slice(spec.sample(&mut rng).as_slice());
    let y = &a * &truth + DVector::from_fn(rows, |_, _| sigma * normal(&mut rng));

    let prior_prec = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        spec.std_devs().iter().map(|s| 1.0 / (s * s)),
    ));
    let cov = (a.transpose() * &a / (sigma * sigma) + prior_prec)
        .try_inverse()
        .expect("posterior precision is positive definite");
    let post_mean = &cov * a.transpose() * &y / (sigma * sigma);

    let ll = |c: &CoeffVector| {
        let r = &y - &a * DVector::from_column_slice(c.as_slice());
        Ok(-r.norm_squared() / (2.0 * sigma * sigma))
    };
    let burn_in = steps / 10;
    let mut cfg = ChainConfig::new(steps + burn_in, burn_in, 0.01, seed.wrapping_add(1));
    cfg.adapt_interval = 1000;
    let rec = run_chain_with(&cfg, spec, &Target::Single(&ll), CoeffVector::zeros(spec.truncation()))?;

    let mut means = Vec::new();
    let mut variances = Vec::new();
    for (i, k) in spec.frequencies().enumerate() {
        let x: Vec<f64> = rec.samples.iter().map(|s| s.as_slice()[i]).collect();
        let m = mean(&x);
        means.push(MomentCheck {
            label: format!("theta_{k}"),
            estimate: m,
            target: post_mean[i],
            se: mc_se(&x),
        });
        let sq: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
        variances.push(MomentCheck {
            label: format!("theta_{k}"),
            estimate: mean(&sq),
            target: cov[(i, i)],
            se: mc_se(&sq),
        });
    }
    Ok(ConjugateResult {
        means,
        variances,
        acceptance: rec.stats.post_burn_in_acceptance,
    })
}

pub fn mcmc_suite() -> Result<Vec<Check>> {
    let spec = PriorSpec::matern(1.0, 2)?;
    let inv = pcn_prior_invariance(&spec, 0.5, 100_000, 3);
    let worst = inv.variances.iter().map(MomentCheck::z).fold(0.0, f64::max);
    let lag = inv
        .lag1
        .iter()
        .map(|l| (l - inv.expected_lag1).abs())
        .fold(0.0, f64::max);
    let conj = conjugate_oracle(&spec, 10, 200_000, 4)?;
    let zm = conj.means.iter().map(MomentCheck::z).fold(0.0, f64::max);
    let zv = conj.variances.iter().map(MomentCheck::z).fold(0.0, f64::max);
    Ok(vec![
        Check::new(
            "pCN prior invariance (variance)",
            worst < 3.0,
            format!("largest deviation {worst:.2} standard errors"),
        ),
        Check::new(
            "pCN prior invariance (lag-1 autocorrelation)",
            lag <= 0.02,
            format!("largest gap to {:.4} is {lag:.4}", inv.expected_lag1),
        ),
        Check::new(
            "conjugate oracle (means)",
            zm < 3.0,
            format!("largest deviation {zm:.2} standard errors"),
        ),
        Check::new(
            "conjugate oracle (variances)",
            zv < 3.0,
            format!("largest deviation {zv:.2} standard errors"),
        ),
    ])
}
