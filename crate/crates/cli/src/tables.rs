//! CSV artifacts owned by the pipeline: evaluations, manifests and grids.
//!
//! Every file starts with `# key=value` comment lines; the config digest is
//! stored as `# config_digest=<hex>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gpc_sense::adapter::{EvalMode, EvalRecord};

use crate::error::{CliError, CliResult};

pub const DIGEST_KEY: &str = "config_digest";

pub fn digest_comment(digest: &str) -> String {
    format!("{DIGEST_KEY}={digest}")
}

/// Digest recorded in the leading comment lines of a CSV artifact.
pub fn read_digest(text: &str) -> Option<String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().strip_prefix(DIGEST_KEY)?.strip_prefix('='))
        .map(str::to_string)
        .next()
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

/// Refuses an input artifact produced under a different configuration.
pub fn check_digest(path: &Path, text: &str, expected: &str) -> CliResult<()> {
    match read_digest(text) {
        Some(d) if d == expected => Ok(()),
        Some(d) => Err(CliError::Validation(format!(
            "{} was produced by a different configuration (digest {d}, expected {expected})",
            path.display()
        ))),
        None => Err(CliError::Validation(format!("{} carries no config digest", path.display()))),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

/// Header and raw rows of a comment-prefixed CSV.
fn read_table(path: &Path, text: &str) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = reader(text);
    let err = |e: csv::Error| CliError::Validation(format!("{}: {e}", path.display()));
    let header: Vec<String> = rdr.headers().map_err(err)?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(err)?;
    Ok((header, rows))
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, col: &str, cell: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    cell.trim().parse().map_err(|e| {
        CliError::Validation(format!("{} row {row} column {col}: bad value `{cell}`: {e}", path.display()))
    })
}

fn expect_header(path: &Path, got: &[String], expected: &[String]) -> CliResult<()> {
    if got != expected {
        return Err(CliError::Validation(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            got,
            expected
        )));
    }
    Ok(())
}

fn eval_header(names: &[String], mode: EvalMode, n_classes: usize) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend(names.iter().cloned());
    match mode {
        EvalMode::Numeric => h.push("y".into()),
        EvalMode::Image => {
            h.extend((0..n_classes).map(|k| format!("prob_{k}")));
            h.push("logit_value".into());
        }
    }
    h
}

/// `index`, parameter columns, then `y` (numeric) or `prob_k...`, `logit_value` (image).
pub fn evaluations_csv(names: &[String], mode: EvalMode, records: &[EvalRecord], comments: &[String]) -> String {
    let n_classes = records.first().and_then(|r| r.probs.as_ref()).map_or(0, Vec::len);
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(&eval_header(names, mode, n_classes).join(","));
    out.push('\n');
    for r in records {
        let mut cells = vec![r.index.to_string()];
        cells.extend(r.xi_phys.iter().map(|v| v.to_string()));
        match mode {
            EvalMode::Numeric => cells.push(r.y.map_or_else(String::new, |v| v.to_string())),
            EvalMode::Image => {
                cells.extend(r.probs.iter().flatten().map(|p| p.to_string()));
                cells.push(r.logit_value.map_or_else(String::new, |v| v.to_string()));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn read_evaluations(path: &Path, text: &str, names: &[String], mode: EvalMode) -> CliResult<Vec<EvalRecord>> {
    let (header, rows) = read_table(path, text)?;
    let d = names.len();
    let n_classes = match mode {
        EvalMode::Numeric => 0,
        EvalMode::Image => header.len().saturating_sub(d + 2),
    };
    expect_header(path, &header, &eval_header(names, mode, n_classes))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let num = |c: usize| parse_cell::<f64>(path, i, &header[c], &row[c]);
            let xi_phys = (1..=d).map(num).collect::<CliResult<Vec<_>>>()?;
            let mut rec = EvalRecord {
                index: parse_cell(path, i, "index", &row[0])?,
                xi_phys,
                probs: None,
                y: None,
                target_class: None,
                logit_value: None,
            };
            match mode {
                EvalMode::Numeric => rec.y = Some(num(d + 1)?),
                EvalMode::Image => {
                    rec.probs = Some((d + 1..d + 1 + n_classes).map(num).collect::<CliResult<_>>()?);
                    rec.logit_value = Some(num(d + 1 + n_classes)?);
                }
            }
            Ok(rec)
        })
        .collect()
}

/// Row of `manifest.csv`: sample index, parameter values and image file.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub index: usize,
    pub xi: Vec<f64>,
    pub file: PathBuf,
}

pub fn read_manifest(path: &Path, text: &str, names: &[String]) -> CliResult<Vec<ManifestRow>> {
    let (header, rows) = read_table(path, text)?;
    let mut expected = vec!["index".to_string()];
    expected.extend(names.iter().cloned());
    expected.push("file".into());
    expect_header(path, &header, &expected)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(ManifestRow {
                index: parse_cell(path, i, "index", &row[0])?,
                xi: (1..=names.len())
                    .map(|c| parse_cell::<f64>(path, i, &header[c], &row[c]))
                    .collect::<CliResult<_>>()?,
                file: dir.join(&row[names.len() + 1]),
            })
        })
        .collect()
}
