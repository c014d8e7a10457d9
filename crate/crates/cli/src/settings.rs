//! Config layering: defaults, file, environment, then flags.

use anyhow::{bail, Context, Result};
use idlink::corpus::CorpusPaths;
use idlink::{ExperimentConfig, Variant};

use crate::args::Cli;

/// `IDLINK__RCCA__K_PROJ=25` sets `rcca.k_proj`.
pub const ENV_PREFIX: &str = "IDLINK__";

/// Maps prefixed environment variables to config keys.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(name, value)| {
            let rest = name.strip_prefix(ENV_PREFIX)?;
            let (section, key) = rest.split_once("__")?;
            Some((format!("{}.{}", section.to_lowercase(), key.to_lowercase()), value))
        })
        .collect();
    out.sort();
    out
}

pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in env_overrides(std::env::vars()) {
        cfg.set(&key, &value)
            .with_context(|| format!("environment override for {key}"))?;
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data = CorpusPaths::in_dir(dir);
    }
    for item in &cli.overrides {
        let Some((key, value)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got '{item}'");
        };
        cfg.set(key.trim(), value)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &cli.variant {
        cfg.variant = v.parse::<Variant>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_names_map_to_dotted_keys() {
        let vars = vec![
            ("IDLINK__RCCA__K_PROJ".to_string(), "25".to_string()),
            ("IDLINK__EVAL__POOL".to_string(), "test".to_string()),
            ("IDLINK_OTHER".to_string(), "x".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        assert_eq!(
            env_overrides(vars),
            vec![
                ("eval.pool".to_string(), "test".to_string()),
                ("rcca.k_proj".to_string(), "25".to_string())
            ]
        );
    }
}
