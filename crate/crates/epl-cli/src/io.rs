//! Dataset and chain file I/O. All writes are atomic (temp file in the
//! target directory, then rename) so a failed command never leaves a
//! partial output behind.

use std::path::Path;

use epl_core::mcmc::ChainOutput;
use epl_core::model::RankingDataset;
use epl_core::perm::{Permutation, ReferenceOrder};
use serde::Serialize;

use crate::config::DataFormat;
use crate::CliError;

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| {
        CliError::Runtime(format!("cannot create temp file in {}: {e}", dir.display()))
    })?;
    std::fs::write(tmp.path(), contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Runtime(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, &text)
}

pub fn read_dataset(path: &Path, format: DataFormat) -> Result<RankingDataset, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("cannot read dataset {}: {e}", path.display()))
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty file", path.display())))?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let k = labels.len();
    if k < 2 {
        return Err(CliError::Validation(format!(
            "{}: header needs at least 2 item labels, got {k}",
            path.display()
        )));
    }

    let mut orderings = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entries: Vec<usize> = line
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    CliError::Validation(format!(
                        "{} line {lineno}: `{}` is not an integer",
                        path.display(),
                        s.trim()
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if entries.len() != k {
            return Err(CliError::Validation(format!(
                "{} line {lineno}: expected {k} entries, got {}",
                path.display(),
                entries.len()
            )));
        }
        let perm = Permutation::new(entries)
            .map_err(|e| CliError::Validation(format!("{} line {lineno}: {e}", path.display())))?;
        orderings.push(match format {
            DataFormat::Ordering => perm,
            DataFormat::Ranking => perm.invert(),
        });
    }
    if orderings.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    RankingDataset::new(orderings, labels)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes the dataset in ordering format with the labels as header.
pub fn write_dataset(path: &Path, data: &RankingDataset) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&data.item_labels().join(","));
    out.push('\n');
    for row in data.orderings() {
        let fields: Vec<String> = row.entries().iter().map(|e| e.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn write_chain(path: &Path, chain: &ChainOutput) -> Result<(), CliError> {
    let k = chain
        .rho_draws
        .first()
        .map(|r| r.k())
        .ok_or_else(|| CliError::Runtime("empty chain".into()))?;
    let mut header = vec!["iter".to_string()];
    header.extend((1..=k).map(|i| format!("rho_{i}")));
    header.extend((1..=k).map(|i| format!("p_{i}")));
    header.extend(["acc_joint".into(), "acc_swap".into(), "log_post".into()]);

    let mut out = header.join(",");
    out.push('\n');
    for i in 0..chain.len() {
        let mut fields = vec![chain.iteration_index[i].to_string()];
        fields.extend(
            chain.rho_draws[i]
                .rho()
                .entries()
                .iter()
                .map(|e| e.to_string()),
        );
        fields.extend(chain.p_draws[i].iter().map(|p| format!("{p:?}")));
        fields.push((chain.accept_joint[i] as u8).to_string());
        fields.push((chain.accept_swap[i] as u8).to_string());
        fields.push(format!("{:?}", chain.log_posterior_trace[i]));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read_chain(path: &Path) -> Result<ChainOutput, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read chain {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let k = cols.iter().filter(|c| c.starts_with("rho_")).count();
    if k < 2 || cols.len() != 2 * k + 4 {
        return Err(CliError::Validation(format!(
            "{}: unexpected chain header `{header}`",
            path.display()
        )));
    }

    let mut chain = ChainOutput {
        iteration_index: Vec::new(),
        rho_draws: Vec::new(),
        p_draws: Vec::new(),
        accept_joint: Vec::new(),
        accept_swap: Vec::new(),
        log_posterior_trace: Vec::new(),
    };
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Validation(format!(
                "{} line {lineno}: expected {} fields, got {}",
                path.display(),
                cols.len(),
                fields.len()
            )));
        }
        let bad = |what: &str| {
            CliError::Validation(format!("{} line {lineno}: bad {what}", path.display()))
        };
        chain
            .iteration_index
            .push(fields[0].parse().map_err(|_| bad("iteration index"))?);
        let rho_entries: Vec<usize> = fields[1..=k]
            .iter()
            .map(|f| f.parse().map_err(|_| bad("rho entry")))
            .collect::<Result<_, _>>()?;
        let rho = Permutation::new(rho_entries)
            .and_then(ReferenceOrder::encode)
            .map_err(|e| CliError::Validation(format!("{} line {lineno}: {e}", path.display())))?;
        chain.rho_draws.push(rho);
        let p: Vec<f64> = fields[k + 1..=2 * k]
            .iter()
            .map(|f| f.parse().map_err(|_| bad("support value")))
            .collect::<Result<_, _>>()?;
        chain.p_draws.push(p);
        chain.accept_joint.push(
            fields[2 * k + 1]
                .parse::<u8>()
                .map_err(|_| bad("acc_joint"))?
                != 0,
        );
        chain.accept_swap.push(
            fields[2 * k + 2]
                .parse::<u8>()
                .map_err(|_| bad("acc_swap"))?
                != 0,
        );
        chain
            .log_posterior_trace
            .push(fields[2 * k + 3].parse().map_err(|_| bad("log_post"))?);
    }
    if chain.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no chain draws",
            path.display()
        )));
    }
    Ok(chain)
}
