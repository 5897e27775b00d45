use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{CliError, Context};
use crate::run::Run;

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn table(text: &str) -> Value {
    let mut lines = text.lines();
    let columns: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    json!({ "columns": columns, "rows": rows })
}

/// Collects the manifests, CSV tables and JSON summaries under `dir` into `report.json`.
pub fn report(run: &Run, dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::invalid(format!(
            "{} is not a run directory",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let (mut manifests, mut tables, mut summaries) = (Map::new(), Map::new(), Map::new());
    for p in &files {
        let rel = p.strip_prefix(dir).unwrap_or(p);
        let key = rel.display().to_string();
        let top = rel
            .components()
            .next()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .unwrap_or_default();
        if matches!(top.as_str(), "dataset" | "checkpoints")
            || key == "report.json"
            || key.starts_with("stitch/relative")
        {
            continue;
        }
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
        let read = || fs::read_to_string(p).context(|| format!("reading {}", p.display()));
        match ext {
            "csv" => {
                tables.insert(key, table(&read()?));
            }
            "json" => {
                let v: Value = serde_json::from_str(&read()?)
                    .map_err(|e| CliError::invalid(format!("{}: {e}", p.display())))?;
                if top == "manifests" {
                    let name = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    if name != "report" {
                        manifests.insert(name, v);
                    }
                } else {
                    summaries.insert(key, v);
                }
            }
            _ => {}
        }
    }
    if manifests.is_empty() {
        return Err(CliError::invalid(format!(
            "{} holds no manifests",
            dir.display()
        )));
    }
    run.write_json(
        "report.json",
        json!({ "directory": dir.display().to_string(), "manifests": manifests, "tables": tables, "summaries": summaries }),
    )?;
    eprintln!(
        "report covers {} commands and {} tables",
        manifests.len(),
        tables.len()
    );
    Ok(())
}
