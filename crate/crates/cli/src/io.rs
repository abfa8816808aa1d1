//! File formats: chain CSV, JSON documents, content hashes.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use robin_bayes::mcmc::ChainRecord;
use robin_bayes::prior::CoeffVector;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_bytes(value)).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn coefficient_labels(truncation: usize) -> Vec<String> {
    let k = truncation as i64;
    (-k..=k).map(|k| format!("theta_{k}")).collect()
}

/// One row per recorded sample: iteration, coefficients `k = −K..=K`,
/// log-likelihood, step.
pub fn write_chain_csv(path: &Path, record: &ChainRecord) -> Result<()> {
    let truncation = record.samples.first().map_or(0, |s| s.truncation());
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["iteration".to_string()];
    header.extend(coefficient_labels(truncation));
    header.push("loglik".into());
    header.push("step".into());
    w.write_record(&header)?;
    for i in 0..record.len() {
        let mut row = vec![record.iterations[i].to_string()];
        row.extend(record.samples[i].as_slice().iter().map(|v| v.to_string()));
        row.push(record.logliks[i].to_string());
        row.push(record.step_trace[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chain_csv(path: &Path) -> Result<ChainRecord> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = r.headers()?.clone();
    let ncols = header.len();
    if ncols < 4 || ncols % 2 != 0 || &header[0] != "iteration" {
        bail!("{} is not a chain file", path.display());
    }
    let dim = ncols - 3;
    let mut samples = Vec::new();
    let mut iterations = Vec::new();
    let mut logliks = Vec::new();
    let mut steps = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number {:?}", line + 2, &row[i]))
        };
        iterations.push(row[0].parse::<usize>().with_context(|| format!("row {}", line + 2))?);
        samples.push(CoeffVector::new((1..=dim).map(num).collect::<Result<_>>()?)?);
        logliks.push(num(dim + 1)?);
        steps.push(num(dim + 2)?);
    }
    let mut record = ChainRecord::from_samples(samples);
    record.iterations = iterations;
    record.logliks = logliks;
    record.step_trace = steps;
    Ok(record)
}

/// Writes rows of numbers under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_records(path, header, rows.into_iter().map(|r| r.iter().map(f64::to_string).collect()))
}

pub fn write_records(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        let mut rec = ChainRecord::from_samples(vec![
            CoeffVector::new(vec![0.1, -1.0 / 3.0, 2.5]).unwrap(),
            CoeffVector::new(vec![1e-300, 7.0, -0.0]).unwrap(),
        ]);
        rec.iterations = vec![100, 110];
        rec.logliks = vec![-12.25, -3.0e5];
        rec.step_trace = vec![0.05, 0.05];
        write_chain_csv(&path, &rec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,theta_-1,theta_0,theta_1,loglik,step\n"));
        let back = read_chain_csv(&path).unwrap();
        assert_eq!(back.samples, rec.samples);
        assert_eq!(back.iterations, rec.iterations);
        assert_eq!(back.logliks, rec.logliks);
    }

    #[test]
    fn hashes_are_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
