//! Experiment runner behind the `efree` command.

pub mod checks;
pub mod error;
pub mod experiments;
pub mod params;
pub mod table;

use checks::{Check, Tables};
pub use error::{CliError, CliResult};
pub use experiments::Experiment;
use params::Params;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use table::Table;
use toml::Value;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub version: String,
}

impl Manifest {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format { path: path.display().to_string(), reason: e.to_string() })
    }

    fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn report(&self) -> String {
        self.checks.iter().map(|c| c.line() + "\n").collect()
    }
}

/// Options of one `run` invocation.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Defaults, then the config file, then `key=value` overrides.
pub fn resolve_params(exp: Experiment, opts: &RunOptions) -> CliResult<(Params, u64)> {
    let mut p = exp.defaults();
    let mut seed = None;
    if let Some(path) = &opts.config {
        p.apply(&params::read_config(path)?)?;
        if path.extension().is_some_and(|e| e == "json") {
            seed = Some(Manifest::read(path)?.seed);
        }
    }
    let sets = opts.sets.iter().map(|s| params::parse_assignment(s)).collect::<CliResult<BTreeMap<_, _>>>()?;
    p.apply(&sets)?;
    Ok((p, opts.seed.or(seed).unwrap_or(0)))
}

fn read_tables(dir: &Path, names: &[String]) -> CliResult<Tables> {
    names.iter().map(|n| Ok((n.clone(), Table::read(&dir.join(n))?))).collect()
}

/// Run an experiment, write its tables and manifest, and return the manifest.
///
/// Parameter errors are returned before anything is written. Model errors are
/// recorded in the manifest as a failed `run` check.
pub fn run(exp: Experiment, opts: &RunOptions) -> CliResult<Manifest> {
    let (p, seed) = resolve_params(exp, opts)?;
    let mut manifest = Manifest {
        experiment: exp.name().into(),
        params: p.values().clone(),
        seed,
        outputs: Vec::new(),
        checks: Vec::new(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let computed = exp.run(&p, seed);
    if let Err(e @ (CliError::Param { .. } | CliError::Usage(_))) = computed {
        return Err(e);
    }
    std::fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    match computed {
        Ok(tables) => {
            for t in &tables {
                t.write(&opts.out)?;
                manifest.outputs.push(t.name.clone());
            }
            let read = read_tables(&opts.out, &manifest.outputs)?;
            manifest.checks = checks::evaluate(exp, &p, &read)?;
        }
        Err(e) => manifest.checks.push(Check::new("run", false, e.to_string())),
    }
    manifest.write(&opts.out)?;
    Ok(manifest)
}

/// Re-evaluate the checks of a manifest against the files next to it.
pub fn validate(path: &Path) -> CliResult<Manifest> {
    let recorded = Manifest::read(path)?;
    let exp = Experiment::from_name(&recorded.experiment)
        .ok_or_else(|| CliError::Usage(format!("unknown experiment `{}`", recorded.experiment)))?;
    let mut p = exp.defaults();
    p.apply(&recorded.params)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let checks = if recorded.outputs.is_empty() {
        recorded.checks.clone()
    } else {
        checks::evaluate(exp, &p, &read_tables(dir, &recorded.outputs)?)?
    };
    Ok(Manifest { checks, ..recorded })
}
