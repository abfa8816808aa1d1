//! Preconditioned Crank–Nicolson sampling with step-size adaptation, and a
//! two-level delayed-acceptance variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::observation::{Dataset, ForwardOperator, Likelihood};
use crate::prior::{CoeffVector, PriorSpec};

/// Proposals counted before the failure-rate abort can trigger.
pub const MIN_PROPOSALS_BEFORE_ABORT: usize = 100;

const MIN_STEP: f64 = 1e-12;

fn default_target() -> f64 {
    0.33
}

fn default_interval() -> usize {
    1000
}

fn default_gain() -> f64 {
    2.0
}

fn default_thinning() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Initial step is `sqrt(2 γ₀)`.
    pub gamma0: f64,
    #[serde(default = "default_target")]
    pub target_accept: f64,
    #[serde(default = "default_interval")]
    pub adapt_interval: usize,
    #[serde(default = "default_gain")]
    pub adapt_gain: f64,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, gamma0: f64, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            gamma0,
            target_accept: default_target(),
            adapt_interval: default_interval(),
            adapt_gain: default_gain(),
            thinning: default_thinning(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidChainConfig(m));
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            ));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return bad(format!("gamma0 must be positive, got {}", self.gamma0));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target acceptance {} outside (0, 1)", self.target_accept));
        }
        if self.adapt_interval == 0 || self.thinning == 0 {
            return bad("adapt_interval and thinning must be positive".into());
        }
        if !(self.adapt_gain > 0.0 && self.adapt_gain.is_finite()) {
            return bad(format!("adapt_gain must be positive, got {}", self.adapt_gain));
        }
        Ok(())
    }

    pub fn initial_step(&self) -> f64 {
        (2.0 * self.gamma0).sqrt().clamp(MIN_STEP, 1.0)
    }
}

/// Current point of a chain with its cached log-likelihood values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: CoeffVector,
    pub loglik: f64,
    /// Coarse-level log-likelihood, kept by two-level chains.
    pub coarse_loglik: Option<f64>,
    pub step: f64,
    pub accept_count_window: usize,
}

impl ChainState {
    pub fn new<F>(theta: CoeffVector, loglik_fn: F, step: f64) -> Result<Self>
    where
        F: Fn(&CoeffVector) -> Result<f64>,
    {
        let loglik = finite(loglik_fn(&theta)?)?;
        Ok(Self {
            theta,
            loglik,
            coarse_loglik: None,
            step,
            accept_count_window: 0,
        })
    }

    pub fn new_two_level<C, F>(theta: CoeffVector, coarse: C, fine: F, step: f64) -> Result<Self>
    where
        C: Fn(&CoeffVector) -> Result<f64>,
        F: Fn(&CoeffVector) -> Result<f64>,
    {
        let mut s = Self::new(theta, fine, step)?;
        s.coarse_loglik = Some(finite(coarse(&s.theta)?)?);
        Ok(s)
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite)
    }
}

/// What happened in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    pub accepted: bool,
    /// A likelihood evaluation failed; the proposal was rejected.
    pub failed: bool,
    pub coarse_evaluated: bool,
    pub fine_evaluated: bool,
}

/// `sqrt(1 − s²) θ + s ξ` with `ξ` drawn from the prior.
pub fn pcn_proposal<R: Rng + ?Sized>(
    theta: &CoeffVector,
    step: f64,
    spec: &PriorSpec,
    rng: &mut R,
) -> CoeffVector {
    let xi = spec.sample(rng);
    let a = (1.0 - step * step).max(0.0).sqrt();
    let mut out = xi;
    for (o, t) in out.as_mut_slice().iter_mut().zip(theta.as_slice()) {
        *o = a * t + step * *o;
    }
    out
}

/// Metropolis test on a log ratio. The uniform is only drawn when the ratio
/// is negative.
fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// One pCN step. A failing likelihood evaluation counts as a rejection.
pub fn pcn_step<F, R>(state: &mut ChainState, spec: &PriorSpec, loglik_fn: F, rng: &mut R) -> StepInfo
where
    F: Fn(&CoeffVector) -> Result<f64>,
    R: Rng + ?Sized,
{
    let proposal = pcn_proposal(&state.theta, state.step, spec, rng);
    let mut info = StepInfo {
        fine_evaluated: true,
        ..StepInfo::default()
    };
    match loglik_fn(&proposal).and_then(finite) {
        Ok(ll) => {
            if metropolis(ll - state.loglik, rng) {
                state.theta = proposal;
                state.loglik = ll;
                state.accept_count_window += 1;
                info.accepted = true;
            }
        }
        Err(_) => info.failed = true,
    }
    info
}

/// Second-stage acceptance rule of the two-level sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// Delayed acceptance: the fine ratio divided by the coarse ratio, which
    /// leaves the fine posterior invariant.
    #[default]
    Exact,
    /// Plain fine-level Metropolis test after the coarse screen. Biased.
    Literal,
}

/// Coarse screen followed by a fine-level decision on the same proposal.
pub fn two_level_step<C, F, R>(
    state: &mut ChainState,
    spec: &PriorSpec,
    coarse_loglik: C,
    fine_loglik: F,
    correction: Correction,
    rng: &mut R,
) -> StepInfo
where
    C: Fn(&CoeffVector) -> Result<f64>,
    F: Fn(&CoeffVector) -> Result<f64>,
    R: Rng + ?Sized,
{
    let current_coarse = state
        .coarse_loglik
        .expect("two-level state carries a coarse log-likelihood");
    let proposal = pcn_proposal(&state.theta, state.step, spec, rng);
    let mut info = StepInfo {
        coarse_evaluated: true,
        ..StepInfo::default()
    };
    let lc = match coarse_loglik(&proposal).and_then(finite) {
        Ok(v) => v,
        Err(_) => {
            info.failed = true;
            return info;
        }
    };
    let coarse_ratio = lc - current_coarse;
    if !metropolis(coarse_ratio, rng) {
        return info;
    }
    info.fine_evaluated = true;
    let lf = match fine_loglik(&proposal).and_then(finite) {
        Ok(v) => v,
        Err(_) => {
            info.failed = true;
            return info;
        }
    };
    let fine_ratio = lf - state.loglik;
    let ratio = match correction {
        Correction::Exact => fine_ratio - coarse_ratio,
        Correction::Literal => fine_ratio,
    };
    if metropolis(ratio, rng) {
        state.theta = proposal;
        state.loglik = lf;
        state.coarse_loglik = Some(lc);
        state.accept_count_window += 1;
        info.accepted = true;
    }
    info
}

/// `step · exp(gain · (observed − target))`, clamped to `(1e-12, 1]`.
pub fn adapt_step(step: f64, observed_accept: f64, target: f64, gain: f64) -> f64 {
    (step * (gain * (observed_accept - target)).exp()).clamp(MIN_STEP, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposals: usize,
    pub accepted: usize,
    pub failed: usize,
    pub coarse_evaluations: usize,
    pub fine_evaluations: usize,
    /// Accepted fraction of the iterations after burn-in.
    pub post_burn_in_acceptance: f64,
    pub final_step: f64,
}

/// Thinned post-burn-in output of a chain. All sequences have one entry
/// per recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub iterations: Vec<usize>,
    pub samples: Vec<CoeffVector>,
    pub logliks: Vec<f64>,
    pub accept_flags: Vec<bool>,
    pub step_trace: Vec<f64>,
    pub stats: ChainStats,
}

impl ChainRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Builds a record from samples alone, as when reading a chain file.
    pub fn from_samples(samples: Vec<CoeffVector>) -> Self {
        let n = samples.len();
        Self {
            iterations: (0..n).collect(),
            samples,
            logliks: vec![0.0; n],
            accept_flags: vec![false; n],
            step_trace: vec![0.0; n],
            stats: ChainStats::default(),
        }
    }

    /// Values of coefficient `k` across the record.
    pub fn coefficient_series(&self, k: i64) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(k)).collect()
    }
}

/// Log-likelihood target of a chain.
pub enum Target<'a> {
    Single(&'a (dyn Fn(&CoeffVector) -> Result<f64> + Sync)),
    TwoLevel {
        coarse: &'a (dyn Fn(&CoeffVector) -> Result<f64> + Sync),
        fine: &'a (dyn Fn(&CoeffVector) -> Result<f64> + Sync),
        correction: Correction,
    },
}

/// Runs a chain from `init`. Adaptation happens every `adapt_interval`
/// iterations during burn-in only; afterwards the step is frozen.
pub fn run_chain_with(
    config: &ChainConfig,
    spec: &PriorSpec,
    target: &Target<'_>,
    init: CoeffVector,
) -> Result<ChainRecord> {
    config.validate()?;
    if init.len() != spec.dim() {
        return Err(Error::LengthMismatch {
            expected: spec.dim(),
            got: init.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = match target {
        Target::Single(f) => ChainState::new(init, f, config.initial_step())?,
        Target::TwoLevel { coarse, fine, .. } => {
            ChainState::new_two_level(init, coarse, fine, config.initial_step())?
        }
    };

    let capacity = (config.iterations - config.burn_in).div_ceil(config.thinning);
    let mut record = ChainRecord {
        iterations: Vec::with_capacity(capacity),
        samples: Vec::with_capacity(capacity),
        logliks: Vec::with_capacity(capacity),
        accept_flags: Vec::with_capacity(capacity),
        step_trace: Vec::with_capacity(capacity),
        stats: ChainStats::default(),
    };
    let mut post_accepted = 0usize;

    for it in 0..config.iterations {
        let info = match target {
            Target::Single(f) => pcn_step(&mut state, spec, f, &mut rng),
            Target::TwoLevel {
                coarse,
                fine,
                correction,
            } => two_level_step(&mut state, spec, coarse, fine, *correction, &mut rng),
        };
        let stats = &mut record.stats;
        stats.proposals += 1;
        stats.accepted += info.accepted as usize;
        stats.failed += info.failed as usize;
        stats.coarse_evaluations += info.coarse_evaluated as usize;
        stats.fine_evaluations += info.fine_evaluated as usize;
        if stats.proposals >= MIN_PROPOSALS_BEFORE_ABORT && 2 * stats.failed > stats.proposals {
            return Err(Error::TooManyFailures {
                failed: stats.failed,
                proposals: stats.proposals,
            });
        }

        if it >= config.burn_in {
            post_accepted += info.accepted as usize;
            if (it - config.burn_in).is_multiple_of(config.thinning) {
                record.iterations.push(it);
                record.samples.push(state.theta.clone());
                record.logliks.push(state.loglik);
                record.accept_flags.push(info.accepted);
                record.step_trace.push(state.step);
            }
        } else if (it + 1) % config.adapt_interval == 0 {
            let rate = state.accept_count_window as f64 / config.adapt_interval as f64;
            state.step = adapt_step(state.step, rate, config.target_accept, config.adapt_gain);
            state.accept_count_window = 0;
        }
    }
    record.stats.post_burn_in_acceptance =
        post_accepted as f64 / (config.iterations - config.burn_in) as f64;
    record.stats.final_step = state.step;
    Ok(record)
}

/// Single-level chain on `dataset` with the forward model solved on `mesh`.
pub fn run_chain(
    config: &ChainConfig,
    spec: &PriorSpec,
    dataset: &Dataset,
    mesh: &Mesh,
    init: CoeffVector,
) -> Result<ChainRecord> {
    let op = ForwardOperator::new(&dataset.model_kind(), mesh)?;
    let lik = Likelihood::new(&op, dataset)?;
    let f = |c: &CoeffVector| lik.eval(c);
    run_chain_with(config, spec, &Target::Single(&f), init)
}

/// Two-level chain screening proposals on `coarse_mesh`.
pub fn run_two_level_chain(
    config: &ChainConfig,
    spec: &PriorSpec,
    dataset: &Dataset,
    coarse_mesh: &Mesh,
    fine_mesh: &Mesh,
    correction: Correction,
    init: CoeffVector,
) -> Result<ChainRecord> {
    let model = dataset.model_kind();
    let coarse_op = ForwardOperator::new(&model, coarse_mesh)?;
    let fine_op = ForwardOperator::new(&model, fine_mesh)?;
    let coarse_lik = Likelihood::new(&coarse_op, dataset)?;
    let fine_lik = Likelihood::new(&fine_op, dataset)?;
    let c = |t: &CoeffVector| coarse_lik.eval(t);
    let f = |t: &CoeffVector| fine_lik.eval(t);
    run_chain_with(
        config,
        spec,
        &Target::TwoLevel {
            coarse: &c,
            fine: &f,
            correction,
        },
        init,
    )
}

/// Starting point `θ₀ + N(0, shift²)` per coefficient.
pub fn shifted_start<R: Rng + ?Sized>(theta0: &CoeffVector, shift: f64, rng: &mut R) -> CoeffVector {
    let mut out = theta0.clone();
    for v in out.as_mut_slice() {
        *v += shift * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    out
}
