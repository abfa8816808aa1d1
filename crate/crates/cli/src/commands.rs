//! The `simulate`, `sample` and `analyze` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robin_bayes::analysis::{summarize, PosteriorSummary};
use robin_bayes::mcmc::{run_chain, run_two_level_chain, shifted_start, ChainRecord, ChainStats};
use robin_bayes::observation::{generate_data, Dataset};
use robin_bayes::prior::CoeffVector;
use serde::{Deserialize, Serialize};

use crate::config::{FamilyName, Init, Mode, RunConfig};
use crate::io;

pub const DATASET_FILE: &str = "dataset.json";
pub const CHAIN_FILE: &str = "chain.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BAND_FILE: &str = "band.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const COMPARISON_MEDIAN_FILE: &str = "comparison_median.csv";
const HISTOGRAM_BINS: usize = 40;

/// Hash of the parts of a dataset that must agree with the config.
pub fn model_hash(dataset: &Dataset) -> String {
    #[derive(Serialize)]
    struct Descriptor<'a> {
        model: &'a robin_bayes::observation::Pde,
        mesh: &'a robin_bayes::mesh::MeshSpec,
        m_beta: f64,
        h_descriptor: &'a robin_bayes::observation::HProfile,
    }
    let d = Descriptor {
        model: &dataset.model,
        mesh: &dataset.mesh,
        m_beta: dataset.m_beta,
        h_descriptor: &dataset.h_descriptor,
    };
    io::sha256_hex(&serde_json::to_vec(&d).expect("serializable"))
}

fn config_model_hash(config: &RunConfig) -> Result<String> {
    let model = config.model.model_kind()?;
    let probe = Dataset {
        model: model.pde,
        mesh: config.model.mesh,
        m_beta: model.m_beta,
        h_descriptor: model.h,
        sigma_noise: 1.0,
        seed: 0,
        points: Vec::new(),
        values: robin_bayes::observation::Observations::scalars(Vec::new()),
    };
    Ok(model_hash(&probe))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<Dataset> {
    ensure_dir(out)?;
    let model = config.model.model_kind()?;
    let mesh = config.model.mesh.build()?;
    let start = Instant::now();
    let data = generate_data(
        &model,
        &mesh,
        &config.data.theta0,
        config.data.n,
        config.data.sigma_noise,
        config.data.seed,
    )?;
    let elapsed = start.elapsed();
    io::write_json(&out.join(DATASET_FILE), &data)?;
    println!(
        "simulate: N = {}, sigma = {}, forward solve {:.3} s -> {}",
        data.n(),
        data.sigma_noise,
        elapsed.as_secs_f64(),
        out.join(DATASET_FILE).display()
    );
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub dataset_file: String,
    pub dataset_sha256: String,
    pub model_sha256: String,
    /// Hash of the serialized config followed by the dataset bytes.
    pub inputs_sha256: String,
    pub mode: Mode,
    pub chain_seed: u64,
    pub init: Init,
    pub initial_theta: CoeffVector,
    pub recorded_samples: usize,
    pub stats: ChainStats,
    pub chain_file: String,
    pub chain_sha256: String,
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read dataset {}", path.display()))?;
    let data: Dataset =
        serde_json::from_slice(&bytes).with_context(|| format!("cannot parse {}", path.display()))?;
    data.validate()?;
    Ok((data, bytes))
}

fn check_dataset(config: &RunConfig, data: &Dataset) -> Result<()> {
    let expected = config_model_hash(config)?;
    let got = model_hash(data);
    if expected != got {
        bail!(
            "dataset model descriptor {got} does not match the config ({expected}); \
             regenerate it with `simulate`"
        );
    }
    Ok(())
}

pub fn initial_theta(config: &RunConfig) -> Result<CoeffVector> {
    let spec = config.prior_spec()?;
    Ok(match config.mcmc.init {
        Init::Shifted { scale, seed } => {
            shifted_start(&config.data.theta0, scale, &mut ChaCha8Rng::seed_from_u64(seed))
        }
        Init::PriorDraw { seed } => spec.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
    })
}

pub fn sample(config: &RunConfig, out: &Path, dataset_path: Option<&Path>) -> Result<ChainRecord> {
    ensure_dir(out)?;
    let dpath = dataset_path.map_or_else(|| out.join(DATASET_FILE), Path::to_path_buf);
    let (data, bytes) = load_dataset(&dpath)?;
    check_dataset(config, &data)?;

    let spec = config.prior_spec()?;
    let chain = config.chain_config();
    let init = initial_theta(config)?;
    let fine = config.model.mesh.build()?;
    let start = Instant::now();
    let record = match config.mcmc.mode.correction() {
        None => run_chain(&chain, &spec, &data, &fine, init.clone())?,
        Some(correction) => {
            let coarse = config
                .model
                .coarse_mesh
                .context("two-level sampling needs model.coarse_mesh")?
                .build()?;
            run_two_level_chain(&chain, &spec, &data, &coarse, &fine, correction, init.clone())?
        }
    };
    let elapsed = start.elapsed();

    let chain_path = out.join(CHAIN_FILE);
    io::write_chain_csv(&chain_path, &record)?;
    let chain_bytes = fs::read(&chain_path)?;
    let config_bytes = serde_json::to_vec(config)?;
    let mut inputs = config_bytes.clone();
    inputs.extend_from_slice(&bytes);
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        config_sha256: io::sha256_hex(&config_bytes),
        dataset_file: dpath
            .file_name()
            .map_or_else(|| DATASET_FILE.into(), |f| f.to_string_lossy().into_owned()),
        dataset_sha256: io::sha256_hex(&bytes),
        model_sha256: model_hash(&data),
        inputs_sha256: io::sha256_hex(&inputs),
        mode: config.mcmc.mode,
        chain_seed: chain.seed,
        init: config.mcmc.init,
        initial_theta: init,
        recorded_samples: record.len(),
        stats: record.stats,
        chain_file: CHAIN_FILE.into(),
        chain_sha256: io::sha256_hex(&chain_bytes),
    };
    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "sample: {} iterations, {} recorded, acceptance after burn-in {:.3}, {} failed solves, {:.1} s -> {}",
        chain.iterations,
        record.len(),
        record.stats.post_burn_in_acceptance,
        record.stats.failed,
        elapsed.as_secs_f64(),
        chain_path.display()
    );
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_observations: usize,
    pub sigma_noise: f64,
    pub data_seed: u64,
    pub prior_family: FamilyName,
    pub chain_seed: u64,
    pub post_burn_in_acceptance: f64,
    pub prior_mean_errors: BTreeMap<String, f64>,
    pub summary: PosteriorSummary,
}

fn histogram(values: &[f64], bins: usize) -> Vec<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let a = lo + b as f64 * width;
            vec![a, a + width, c as f64, c as f64 / (n * width)]
        })
        .collect()
}

pub fn analyze(config: &RunConfig, out: &Path, chain_dir: Option<&Path>) -> Result<AnalysisReport> {
    ensure_dir(out)?;
    let src = chain_dir.unwrap_or(out);
    let manifest: Manifest = io::read_json(&src.join(MANIFEST_FILE))?;
    let chain_path = src.join(&manifest.chain_file);
    let chain_bytes = fs::read(&chain_path).with_context(|| format!("cannot read {}", chain_path.display()))?;
    if io::sha256_hex(&chain_bytes) != manifest.chain_sha256 {
        bail!("{} does not match the hash recorded in the manifest", chain_path.display());
    }
    let (data, bytes) = load_dataset(&src.join(&manifest.dataset_file))?;
    if io::sha256_hex(&bytes) != manifest.dataset_sha256 {
        bail!("dataset does not match the hash recorded in the manifest");
    }
    check_dataset(config, &data)?;
    let record = io::read_chain_csv(&chain_path)?;
    if record.is_empty() {
        bail!("chain file has no samples");
    }

    let truth = &config.data.theta0;
    let mut summary = summarize(&record, Some(truth), data.m_beta, &config.analysis)?;
    summary.diagnostics.acceptance_rate = manifest.stats.post_burn_in_acceptance;
    let prior_mean = CoeffVector::zeros(truth.truncation());
    let prior_only = ChainRecord::from_samples(vec![prior_mean]);
    let prior_mean_errors = summarize(&prior_only, Some(truth), data.m_beta, &config.analysis)?.errors;

    let report = AnalysisReport {
        n_observations: data.n(),
        sigma_noise: data.sigma_noise,
        data_seed: data.seed,
        prior_family: config.prior.family,
        chain_seed: manifest.chain_seed,
        post_burn_in_acceptance: manifest.stats.post_burn_in_acceptance,
        prior_mean_errors,
        summary,
    };
    io::write_json(&out.join(SUMMARY_FILE), &report)?;

    let s = &report.summary;
    let truth_curve = s.truth_curve.clone().unwrap_or_default();
    io::write_table(
        &out.join(BAND_FILE),
        &["x", "lower", "mean", "upper", "truth"],
        (0..s.grid.len()).map(|i| {
            vec![
                s.grid[i],
                s.band_lower[i],
                s.beta_mean_curve[i],
                s.band_upper[i],
                truth_curve[i],
            ]
        }),
    )?;

    let labels = io::coefficient_labels(truth.truncation());
    let mut header = vec!["iteration", "loglik", "step"];
    header.extend(labels.iter().map(String::as_str));
    io::write_table(
        &out.join(TRACE_FILE),
        &header,
        (0..record.len()).map(|i| {
            let mut row = vec![record.iterations[i] as f64, record.logliks[i], record.step_trace[i]];
            row.extend_from_slice(record.samples[i].as_slice());
            row
        }),
    )?;
    for (label, k) in labels.iter().zip(truth.frequencies()) {
        let values = record.coefficient_series(k);
        io::write_table(
            &out.join(format!("histogram_{label}.csv")),
            &["bin_lower", "bin_upper", "count", "density"],
            histogram(&values, HISTOGRAM_BINS),
        )?;
    }
    println!(
        "analyze: {} samples, theta L2 error {:.4} (prior mean {:.4}) -> {}",
        s.diagnostics.samples,
        s.errors["theta_l2"],
        report.prior_mean_errors["theta_l2"],
        out.join(SUMMARY_FILE).display()
    );
    Ok(report)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Collects `summary.json` from each run directory into a table and its
/// medians grouped by prior family and observation count.
pub fn compare(runs: &[PathBuf], out: &Path) -> Result<Vec<(FamilyName, usize, f64, f64)>> {
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for dir in runs {
        let r: AnalysisReport = io::read_json(&dir.join(SUMMARY_FILE))?;
        rows.push(r);
    }
    io::write_records(
        &out.join(COMPARISON_FILE),
        &["prior_family", "n", "data_seed", "chain_seed", "theta_l2", "theta_linf"],
        rows.iter().map(|r| {
            vec![
                r.prior_family.as_str().to_string(),
                r.n_observations.to_string(),
                r.data_seed.to_string(),
                r.chain_seed.to_string(),
                r.summary.errors["theta_l2"].to_string(),
                r.summary.errors["theta_linf"].to_string(),
            ]
        }),
    )?;
    let mut groups: BTreeMap<(FamilyName, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        let e = groups.entry((r.prior_family, r.n_observations)).or_default();
        e.0.push(r.summary.errors["theta_l2"]);
        e.1.push(r.summary.errors["theta_linf"]);
    }
    let mut medians = Vec::new();
    for ((f, n), (mut l2, mut linf)) in groups {
        medians.push((f, n, median(&mut l2), median(&mut linf)));
    }
    io::write_records(
        &out.join(COMPARISON_MEDIAN_FILE),
        &["prior_family", "n", "median_theta_l2", "median_theta_linf"],
        medians
            .iter()
            .map(|(f, n, a, b)| vec![f.as_str().to_string(), n.to_string(), a.to_string(), b.to_string()]),
    )?;
    Ok(medians)
}
