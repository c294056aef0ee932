use super::config::ExperimentConfig;
use super::ledger::MetricsLedger;
use super::train::run_experiment;
use crate::{Error, Result};

/// Config key a sweep parameter maps to.
pub fn sweep_key(parameter: &str) -> &str {
    match parameter {
        "coding_level" => "k",
        "degree" => "r",
        "learning_rate" => "lr",
        other => other,
    }
}

/// One config per value. `expansion_ratio` sets `kc = round(v · pn)`; any
/// other parameter names a config key (or an alias such as `coding_level`).
pub fn sweep_configs(cfg: &ExperimentConfig, parameter: &str, values: &[String]) -> Result<Vec<(String, ExperimentConfig)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|v| {
            let c = if parameter == "expansion_ratio" {
                let ratio: f64 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad expansion ratio {v:?}")))?;
                if !(ratio > 0.0) {
                    return Err(Error::Config(format!("bad expansion ratio {v:?}")));
                }
                let kc = (ratio * cfg.feature_dim() as f64).round() as usize;
                cfg.with("kc", &kc.to_string())?
            } else {
                let key = sweep_key(parameter);
                if key == "seeds" {
                    return Err(Error::Config("sweep over seeds with `seeds` instead".into()));
                }
                cfg.with(key, v)?
            };
            Ok((v.clone(), c))
        })
        .collect()
}

/// A swept value and the ledgers of every seed run at it.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: String,
    pub config: ExperimentConfig,
    pub ledgers: Vec<MetricsLedger>,
}

/// Runs every (value, seed) pair sequentially.
pub fn sweep(cfg: &ExperimentConfig, parameter: &str, values: &[String]) -> Result<Vec<SweepPoint>> {
    sweep_configs(cfg, parameter, values)?
        .into_iter()
        .map(|(value, config)| {
            let ledgers = config
                .seeds
                .iter()
                .map(|&s| run_experiment(&config, s))
                .collect::<Result<_>>()?;
            Ok(SweepPoint {
                parameter: parameter.to_string(),
                value,
                config,
                ledgers,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_ratio_sets_kc() {
        let cfg = ExperimentConfig::parse("pn = 50").unwrap();
        let v: Vec<String> = ["5", "40"].iter().map(|s| s.to_string()).collect();
        let out = sweep_configs(&cfg, "expansion_ratio", &v).unwrap();
        assert_eq!(out[0].1.kc, 250);
        assert_eq!(out[1].1.kc, 2000);
        assert_eq!(out[1].1.lr, cfg.lr);
    }

    #[test]
    fn aliases_and_unknown() {
        let cfg = ExperimentConfig::parse("").unwrap();
        let v: Vec<String> = ["0.001", "0.01", "0.1", "0.5"].iter().map(|s| s.to_string()).collect();
        assert_eq!(sweep_configs(&cfg, "coding_level", &v).unwrap().len(), 4);
        assert!(sweep_configs(&cfg, "bogus", &v).is_err());
    }
}
