//! File output, config merging and flag parsers shared by the commands.

use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dsk::{AdjustmentMode, CriterionId, LabeledDataset, MetricId};

const COMMANDS: [&str; 9] = [
    "synth", "extract", "train", "eval", "compare", "bench", "gradcheck", "wishart", "bias",
];

/// Inserts `--key value` pairs from a TOML config after the subcommand,
/// skipping keys already given on the command line. Keys may use `_` or `-`.
pub fn merge_config(args: &[String], text: &str) -> Result<Vec<OsString>> {
    let table: toml::Table = text.parse().context("invalid TOML")?;
    let Some(at) = args.iter().skip(1).position(|a| COMMANDS.contains(&a.as_str())).map(|p| p + 1) else {
        return Ok(args.iter().map(OsString::from).collect());
    };
    let command = args[at].as_str();
    let mut entries: Vec<(&String, &toml::Value)> = table.iter().filter(|(_, v)| !v.is_table()).collect();
    if let Some(toml::Value::Table(section)) = table.get(command) {
        entries.retain(|(k, _)| !section.contains_key(k.as_str()));
        entries.extend(section.iter());
    }
    let mut injected = Vec::new();
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        let given = args[at + 1..]
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given || key == "config" {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => injected.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    injected.push(flag.clone());
                    injected.push(scalar(key, item)?);
                }
            }
            other => {
                injected.push(flag);
                injected.push(scalar(key, other)?);
            }
        }
    }
    let mut out: Vec<String> = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out.into_iter().map(OsString::from).collect())
}

fn scalar(key: &str, value: &toml::Value) -> Result<String> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => bail!("unsupported value for '{key}'"),
    })
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut out = BufWriter::new(tmp.as_file_mut());
        write(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

#[derive(Serialize)]
struct Resolved<'a, T> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

pub fn config_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.toml");
    PathBuf::from(name)
}

/// Records the fully resolved flags beside `output`.
pub fn write_config<T: Serialize>(output: &Path, command: &str, args: &T) -> Result<()> {
    let resolved = Resolved {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let text = toml::to_string(&resolved).context("serializing the resolved config")?;
    write_text(&config_path(output), &text)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    dsk::data::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

/// Opens `path` for a single-writer report, or standard output.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn parse_mode(s: &str) -> Result<AdjustmentMode, String> {
    s.parse().map_err(|e: dsk::Error| e.to_string())
}

pub fn parse_criterion(s: &str) -> Result<CriterionId, String> {
    s.parse().map_err(|e: dsk::Error| e.to_string())
}

pub fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.parse().map_err(|e: dsk::Error| e.to_string())
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
