//! Flat `key = value` experiment configs.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! skipped. Unknown keys are errors. Overrides replace single keys after the
//! file is read, and the merged key/value map is echoed into every summary.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::fly::{Activation, ModelSpec, PreLayerSpec};
use crate::learners::{CbpConfig, ClipConfig, SgdConfig, StrategySpec};
use crate::tasks::{ImbalanceOrder, ImbalanceSpec, PermutationMode};
use crate::{Error, Result};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "dataset",
    "protocol",
    "pn",
    "kc",
    "r",
    "k",
    "hidden",
    "ablate",
    "head_bias",
    "strategy",
    "lr",
    "lambda",
    "c",
    "xi",
    "alpha",
    "shrink",
    "perturb",
    "cbp_rate",
    "cbp_decay",
    "cbp_maturity",
    "epochs",
    "bs",
    "clip",
    "seeds",
    "tasks",
    "classes_per_task",
    "class_order",
    "gamma",
    "imbalance_order",
    "n_max",
    "n_classes",
    "noise",
    "train_per_class",
    "test_per_class",
    "samples_per_task",
    "permute",
    "base_samples",
    "fisher_samples",
    "probe_samples",
    "scratch",
    "images",
    "labels",
    "train_file",
    "test_file",
    "out_dir",
];

/// Raw key/value pairs in key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            raw.set(k.trim(), v.trim())?;
        }
        Ok(raw)
    }

    /// Sets one key, rejecting names outside [`KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value for `{key}`: {v:?}"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("1" | "true" | "yes" | "on") => Ok(true),
            Some("0" | "false" | "no" | "off") => Ok(false),
            Some(v) => Err(Error::Config(format!("bad flag for `{key}`: {v:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        if v.is_empty() || v == "none" {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad list entry for `{key}`: {s:?}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Synthetic odor prototypes with Gaussian noise.
    Odor,
    /// Synthetic 28×28 digits.
    Digits,
    /// MNIST-style IDX files (`images`, `labels`).
    Idx,
    /// FLYF feature files (`train_file`, `test_file`).
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Cil,
    Stream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub protocol: ProtocolKind,
    pub pn: usize,
    pub kc: usize,
    pub degree: usize,
    pub coding_level: f64,
    pub hidden: Vec<usize>,
    pub ablate: bool,
    pub head_bias: bool,
    pub strategy: StrategySpec,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: Option<f64>,
    pub seeds: Vec<u64>,
    pub tasks: usize,
    pub classes_per_task: usize,
    pub shuffle_classes: bool,
    pub imbalance: Option<(f64, ImbalanceOrder)>,
    pub n_max: Option<usize>,
    pub n_classes: usize,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub samples_per_task: usize,
    pub permute: PermutationMode,
    pub base_samples: usize,
    pub fisher_samples: Option<usize>,
    pub probe_samples: usize,
    pub scratch: bool,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    raw: RawConfig,
}

impl ExperimentConfig {
    /// Defaults follow the odor class-incremental setup.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let dataset = match raw.get("dataset").unwrap_or("odor") {
            "odor" => DatasetKind::Odor,
            "digits" => DatasetKind::Digits,
            "idx" | "mnist" => DatasetKind::Idx,
            "features" | "flyf" => DatasetKind::Features,
            other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
        };
        let protocol = match raw.get("protocol").unwrap_or("cil") {
            "cil" | "class-incremental" => ProtocolKind::Cil,
            "stream" | "streaming" => ProtocolKind::Stream,
            other => return Err(Error::Config(format!("unknown protocol {other:?}"))),
        };
        let name = raw.get("strategy").unwrap_or("sgd");
        let strategy = match name {
            "sgd" => StrategySpec::Sgd,
            "ewc" => StrategySpec::Ewc {
                lambda: raw.parsed("lambda", 0.0)?,
            },
            "si" => StrategySpec::Si {
                c: raw.parsed("c", 0.0)?,
                xi: raw.parsed("xi", 1e-3)?,
            },
            "l2init" | "l2_init" => StrategySpec::L2Init {
                alpha: raw.parsed("alpha", 0.0)?,
            },
            "sp" | "shrink_perturb" => StrategySpec::ShrinkPerturb {
                shrink: raw.parsed("shrink", 0.0)?,
                perturb: raw.parsed("perturb", 0.0)?,
            },
            "cbp" => {
                let d = CbpConfig::default();
                StrategySpec::Cbp {
                    decay: raw.parsed("cbp_decay", d.decay)?,
                    replacement_rate: raw.parsed("cbp_rate", d.replacement_rate)?,
                    maturity_threshold: raw.parsed("cbp_maturity", d.maturity_threshold)?,
                }
            }
            other => return Err(Error::Config(format!("unknown strategy {other:?}"))),
        };
        let clip = match raw.get("clip") {
            None | Some("none" | "off" | "0") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value for `clip`: {v:?}")))?,
            ),
        };
        let imbalance = match raw.get("gamma") {
            None | Some("none") => None,
            Some(_) => {
                let gamma: f64 = raw.parsed("gamma", 1.0)?;
                let order = ImbalanceOrder::from_str(raw.get("imbalance_order").unwrap_or("normal"))?;
                Some((gamma, order))
            }
        };
        let shuffle_classes = match raw.get("class_order") {
            None => dataset != DatasetKind::Odor,
            Some("natural") => false,
            Some("shuffled" | "random") => true,
            Some(v) => return Err(Error::Config(format!("bad class_order {v:?}"))),
        };
        let path = |k: &str| raw.get(k).map(PathBuf::from);
        let cfg = Self {
            dataset,
            protocol,
            pn: raw.parsed("pn", 50)?,
            kc: raw.parsed("kc", 2000)?,
            degree: raw.parsed("r", 6)?,
            coding_level: raw.parsed("k", 0.01)?,
            hidden: raw.list("hidden")?.unwrap_or_default(),
            ablate: raw.flag("ablate", false)?,
            head_bias: raw.flag("head_bias", false)?,
            strategy,
            lr: raw.parsed("lr", 0.005)?,
            epochs: raw.parsed("epochs", 1)?,
            batch_size: raw.parsed("bs", 64)?,
            clip,
            seeds: raw.list("seeds")?.unwrap_or_else(|| vec![0]),
            tasks: raw.parsed("tasks", 5)?,
            classes_per_task: raw.parsed("classes_per_task", 2)?,
            shuffle_classes,
            imbalance,
            n_max: match raw.get("n_max") {
                None => None,
                Some(_) => Some(raw.parsed("n_max", 0)?),
            },
            n_classes: raw.parsed("n_classes", 10)?,
            noise: raw.parsed("noise", 0.5)?,
            train_per_class: raw.parsed("train_per_class", 5000)?,
            test_per_class: raw.parsed("test_per_class", 1000)?,
            samples_per_task: raw.parsed("samples_per_task", 2000)?,
            permute: PermutationMode::from_str(raw.get("permute").unwrap_or("input"))?,
            base_samples: raw.parsed("base_samples", 1000)?,
            fisher_samples: match raw.get("fisher_samples") {
                None | Some("all") => None,
                Some(_) => Some(raw.parsed("fisher_samples", 0)?),
            },
            probe_samples: raw.parsed("probe_samples", 1000)?,
            scratch: raw.flag("scratch", true)?,
            images: path("images"),
            labels: path("labels"),
            train_file: path("train_file"),
            test_file: path("test_file"),
            out_dir: path("out_dir"),
            raw: raw.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("pn", self.pn),
            ("kc", self.kc),
            ("r", self.degree),
            ("epochs", self.epochs),
            ("bs", self.batch_size),
            ("tasks", self.tasks),
            ("classes_per_task", self.classes_per_task),
            ("n_classes", self.n_classes),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{k}` must be positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must list at least one seed".into()));
        }
        if !self.ablate && self.degree > self.feature_dim() {
            return Err(Error::Config(format!(
                "degree r = {} exceeds the {} inputs of the expansion layer",
                self.degree,
                self.feature_dim()
            )));
        }
        SgdConfig::new(self.lr)?;
        self.clip_config()?;
        crate::fly::CodingConfig::new(self.coding_level, self.kc)?;
        Ok(())
    }

    /// Width entering the expansion stage.
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.pn)
    }

    /// The config with one key replaced.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.set(key, value)?;
        Self::from_raw(&raw)
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn clip_config(&self) -> Result<ClipConfig> {
        match self.clip {
            None => Ok(ClipConfig::disabled()),
            Some(c) => ClipConfig::new(c),
        }
    }

    pub fn sgd_config(&self) -> Result<SgdConfig> {
        SgdConfig::new(self.lr)
    }

    pub fn model_spec(&self, n_classes: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            n_in: self.pn,
            pre_layers: self
                .hidden
                .iter()
                .map(|&width| PreLayerSpec {
                    width,
                    activation: Activation::Relu,
                })
                .collect(),
            n_kc: self.kc,
            degree: self.degree,
            coding_level: self.coding_level,
            n_classes,
            ablate_kc: self.ablate,
            head_bias: self.head_bias,
            seed,
        }
    }

    pub fn imbalance_spec(&self, n_max: usize, seed: u64) -> Option<ImbalanceSpec> {
        self.imbalance.map(|(gamma, order)| ImbalanceSpec {
            gamma,
            order,
            n_max: self.n_max.unwrap_or(n_max),
            seed,
        })
    }

    /// Short label such as `si-fly` or `sgd-ablated`.
    pub fn variant_name(&self) -> String {
        format!(
            "{}-{}",
            self.strategy.name(),
            if self.ablate { "ablated" } else { "fly" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut raw = RawConfig::parse("# odor\nlr = 0.01\nstrategy = si\nc = 5\n\nseeds = 1,2,3\n").unwrap();
        raw.apply_override("k=0.05").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.coding_level, 0.05);
        assert_eq!(cfg.strategy, StrategySpec::Si { c: 5.0, xi: 1e-3 });
        assert_eq!(cfg.with("strategy", "ewc").unwrap().strategy.name(), "ewc");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RawConfig::parse("learningrate = 0.1").unwrap_err();
        assert!(err.to_string().contains("learningrate"));
        assert!(ExperimentConfig::parse("r = 60").is_err());
        assert!(ExperimentConfig::parse("lr = -1").is_err());
    }
}
