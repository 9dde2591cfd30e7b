//! Run configuration: a flat, commented `key = value` file (TOML syntax).
//! Command-line `--set key=value` pairs override file keys.

use std::path::{Path, PathBuf};

use deepbool_core::network::{build_architecture, build_layered, parse_block_count, ArchitectureOptions, SamplingMode};
use deepbool_core::training::{Optimizer, TrainConfig};
use deepbool_core::{make_parity_dataset, AugmentConfig, BinarizationConfig, LabeledDataset, NetworkModel, SkipConnective};
use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar_dir, load_mnist_dir, CifarKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `parity`, `mnist`, `cifar10` or `cifar100`.
    pub dataset: String,
    /// Directory with the standard dataset files; unused for `parity`.
    pub data_dir: String,
    pub parity_bits: usize,
    /// Keep only the first N training (test) examples; 0 keeps all.
    pub train_limit: usize,
    pub test_limit: usize,
    pub coarse_labels: bool,
    pub augment_flip: bool,
    pub augment_crop_pad: usize,
    pub thresholds: u32,
    pub intensity_low: u8,
    pub intensity_high: u8,

    /// `DBN`, `DBN-<k>`, or `layered` (plain layers of `widths`).
    pub architecture: String,
    pub widths: Vec<usize>,
    pub sampling: String,
    pub hidden_pairing: String,
    pub voting_pairing: String,
    /// Skip connective name, or `none` for plain blocks.
    pub skip: String,
    pub bottleneck: bool,
    /// Nodes per class in the last layer; 0 derives it from the sampling width.
    pub voting_per_class: usize,
    pub temperature: f64,

    /// `adam` or `sgd`.
    pub optimizer: String,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub eval_every: usize,

    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "parity".into(),
            data_dir: String::new(),
            parity_bits: 8,
            train_limit: 0,
            test_limit: 0,
            coarse_labels: false,
            augment_flip: false,
            augment_crop_pad: 0,
            thresholds: 31,
            intensity_low: 0,
            intensity_high: 255,
            architecture: "DBN".into(),
            widths: Vec::new(),
            sampling: "row_col".into(),
            hidden_pairing: "random".into(),
            voting_pairing: "random".into(),
            skip: "implication".into(),
            bottleneck: true,
            voting_per_class: 0,
            temperature: 100.0,
            optimizer: "adam".into(),
            lr: 0.01,
            weight_decay: 0.0,
            batch_size: 100,
            epochs: 1,
            seed: 0,
            eval_every: 1,
            out_dir: "run".into(),
        }
    }
}

/// Bundled configurations addressable as `builtin:<name>`.
pub const BUILTIN: [(&str, &str); 2] = [
    ("parity8", include_str!("../configs/parity8.toml")),
    ("mnist-small", include_str!("../configs/mnist-small.toml")),
];

fn parse_override(kv: &str) -> Result<(String, toml::Value)> {
    let (k, v) = kv.split_once('=').ok_or_else(|| Error::config(kv, "override must be key=value"))?;
    let (k, v) = (k.trim(), v.trim());
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

fn field_of(err: &toml::de::Error) -> String {
    let msg = err.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

impl RunConfig {
    /// Parses config text with overrides applied. `origin` names the source in
    /// diagnostics.
    pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::config(field_of(&e), format!("{origin}: {}", e.to_string().trim()))
        })?;
        for kv in overrides {
            let (k, v) = parse_override(kv)?;
            table.insert(k, v);
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            Error::config(field_of(&e), format!("{origin}: {}", e.message()))
        })
    }

    /// Reads a config file, or a bundled one given as `builtin:<name>`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let shown = path.display().to_string();
        let text = match shown.strip_prefix("builtin:") {
            Some(name) => BUILTIN
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| Error::config("config", format!("no bundled config `{name}`")))?,
            None => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        };
        Self::parse(&text, &shown, overrides)
    }

    /// The effective configuration as config text.
    pub fn to_text(&self) -> String {
        format!(
            "# Effective configuration (defaults filled in). Re-running with this\n# file reproduces the run.\n{}",
            toml::to_string(self).expect("config serializes")
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.as_str() {
            "parity" => {
                if !(1..=16).contains(&self.parity_bits) {
                    return Err(Error::config("parity_bits", "must be in 1..=16"));
                }
            }
            "mnist" | "cifar10" | "cifar100" => {
                if self.data_dir.is_empty() {
                    return Err(Error::config("data_dir", format!("required for dataset `{}`", self.dataset)));
                }
                if !Path::new(&self.data_dir).is_dir() {
                    return Err(Error::config("data_dir", format!("`{}` is not a directory", self.data_dir)));
                }
            }
            other => return Err(Error::config("dataset", format!("unknown dataset `{other}`"))),
        }
        self.binarization().map_err(|e| Error::config("thresholds", e.to_string()))?;
        if self.architecture != "layered" {
            parse_block_count(&self.architecture).map_err(|e| Error::config("architecture", e.to_string()))?;
        } else if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("widths", "layered architecture needs positive widths"));
        }
        for (field, v) in [
            ("sampling", &self.sampling),
            ("hidden_pairing", &self.hidden_pairing),
            ("voting_pairing", &self.voting_pairing),
        ] {
            v.parse::<SamplingMode>().map_err(|e| Error::config(field, e.to_string()))?;
        }
        self.skip_connective()?;
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::config("temperature", "must be positive"));
        }
        self.train_config()?.validate().map_err(|e| Error::config("lr", e.to_string()))?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.out_dir.is_empty() {
            return Err(Error::config("out_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn binarization(&self) -> Result<BinarizationConfig> {
        let b = BinarizationConfig {
            threshold_count: self.thresholds,
            intensity_low: self.intensity_low,
            intensity_high: self.intensity_high,
        };
        b.validate()?;
        Ok(b)
    }

    fn skip_connective(&self) -> Result<Option<SkipConnective>> {
        match self.skip.as_str() {
            "none" => Ok(None),
            s => s.parse().map(Some).map_err(|e: deepbool_core::Error| Error::config("skip", e.to_string())),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::adam(self.lr),
            "sgd" => Optimizer::sgd(self.lr, self.weight_decay),
            o => return Err(Error::config("optimizer", format!("unknown optimizer `{o}`"))),
        };
        Ok(TrainConfig {
            optimizer,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            augmentation: AugmentConfig { horizontal_flip: self.augment_flip, crop_pad: self.augment_crop_pad },
            eval_every: self.eval_every,
        })
    }

    fn cifar_kind(&self) -> CifarKind {
        match self.dataset.as_str() {
            "cifar100" => CifarKind::Cifar100 { coarse: self.coarse_labels },
            _ => CifarKind::Cifar10,
        }
    }

    /// Image shape `(channels, height, width)` and class count of the dataset.
    pub fn dataset_geometry(&self) -> ([usize; 3], usize) {
        match self.dataset.as_str() {
            "parity" => ([1, 1, self.parity_bits], 2),
            "mnist" => ([1, 28, 28], 10),
            _ => ([3, 32, 32], self.cifar_kind().class_count() as usize),
        }
    }

    /// Network input layout `(channels, thresholds, height, width)`.
    pub fn input_shape(&self) -> [usize; 4] {
        let ([c, h, w], _) = self.dataset_geometry();
        match self.dataset.as_str() {
            "parity" => [1, 1, 1, self.parity_bits],
            _ => [c, self.thresholds as usize, h, w],
        }
    }

    /// Training split and, when the dataset has one, the test split.
    pub fn load_data(&self) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
        let limit = |d: LabeledDataset, n: usize| if n == 0 { d } else { d.take(n) };
        let dir = PathBuf::from(&self.data_dir);
        match self.dataset.as_str() {
            "parity" => Ok((make_parity_dataset(self.parity_bits)?, None)),
            "mnist" => Ok((
                limit(load_mnist_dir(&dir, true)?, self.train_limit),
                Some(limit(load_mnist_dir(&dir, false)?, self.test_limit)),
            )),
            _ => Ok((
                limit(load_cifar_dir(&dir, self.cifar_kind(), true)?, self.train_limit),
                Some(limit(load_cifar_dir(&dir, self.cifar_kind(), false)?, self.test_limit)),
            )),
        }
    }

    /// One split: `train`, or `test` (falling back to train when the dataset
    /// has no test split).
    pub fn load_split(&self, split: &str) -> Result<LabeledDataset> {
        let (train, test) = self.load_data()?;
        match split {
            "train" => Ok(train),
            "test" => Ok(test.unwrap_or(train)),
            s => Err(Error::config("split", format!("unknown split `{s}`"))),
        }
    }

    pub fn build_model(&self) -> Result<NetworkModel> {
        let (_, classes) = self.dataset_geometry();
        let binarization = self.binarization()?;
        let pairing = |s: &str| s.parse::<SamplingMode>().map_err(Error::from);
        if self.architecture == "layered" {
            return Ok(build_layered(
                "layered",
                self.input_shape(),
                &self.widths,
                pairing(&self.sampling)?,
                pairing(&self.hidden_pairing)?,
                classes,
                self.temperature,
                binarization,
                self.seed,
            )?);
        }
        let opts = ArchitectureOptions {
            binarization,
            sampling: pairing(&self.sampling)?,
            hidden_pairing: pairing(&self.hidden_pairing)?,
            voting_pairing: pairing(&self.voting_pairing)?,
            skip: self.skip_connective()?,
            bottleneck: self.bottleneck,
            voting_per_class: (self.voting_per_class > 0).then_some(self.voting_per_class),
            temperature: self.temperature,
            seed: self.seed,
        };
        Ok(build_architecture(&self.architecture, self.input_shape(), classes, &opts)?)
    }
}
