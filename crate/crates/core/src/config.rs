//! Declarative run configuration with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{generate_toy, Dataset, DatasetSpec, Layout, SampleSource, Split, ToyWorldConfig};
use crate::error::{Error, Result};
use crate::losses::GanLoss;
use crate::trainer::{ArchConfig, InputLevel, OutputLevel, TrainConfig, Variant};
use crate::types::{ClassSet, DepthNormalizer, Domain, LossWeights, Sample};

/// Offset between a toy world's seed and its held-out evaluation world.
pub const EVAL_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub input: InputLevel,
    pub output: OutputLevel,
}

impl From<VariantConfig> for Variant {
    fn from(v: VariantConfig) -> Self {
        Variant {
            input: v.input,
            output: v.output,
        }
    }
}

impl From<Variant> for VariantConfig {
    fn from(v: Variant) -> Self {
        VariantConfig {
            input: v.input,
            output: v.output,
        }
    }
}

/// A built-in class set by name, or an explicit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassesConfig {
    Preset(String),
    Custom(ClassSet),
}

impl ClassesConfig {
    pub const PRESETS: [&'static str; 3] = ["toy", "vkitti10", "synthia16"];

    pub fn resolve(&self) -> Result<ClassSet> {
        match self {
            ClassesConfig::Preset(name) => match name.as_str() {
                "toy" => Ok(ClassSet::toy()),
                "vkitti10" => Ok(ClassSet::vkitti10()),
                "synthia16" => Ok(ClassSet::synthia16()),
                other => Err(Error::Config(format!(
                    "unknown class set `{other}` (built-in: {})",
                    Self::PRESETS.join(", ")
                ))),
            },
            ClassesConfig::Custom(cs) => {
                cs.validate()?;
                Ok(cs.clone())
            }
        }
    }
}

/// Optimization settings (everything of [`TrainConfig`] except the loss
/// weights, seed and architecture, which live at the top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub checkpoint_every: u64,
    pub gan_loss: GanLoss,
    pub augment: bool,
    pub mask_zero_depth: bool,
    pub hygiene_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            checkpoint_every: t.checkpoint_every,
            gan_loss: t.gan_loss,
            augment: t.augment,
            mask_zero_depth: t.mask_zero_depth,
            hygiene_every: t.hygiene_every,
        }
    }
}

/// Where a dataset comes from: a directory in one of the supported layouts,
/// or (TOY only, without `root`) scenes generated in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub layout: Layout,
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub resize: Option<(usize, usize)>,
    #[serde(default)]
    pub allow_aspect_change: bool,
    #[serde(default)]
    pub remap: Option<PathBuf>,
    #[serde(default)]
    pub toy: Option<ToyWorldConfig>,
}

fn default_split() -> Split {
    Split::Train
}

impl DataConfig {
    pub fn generated(toy: ToyWorldConfig) -> Self {
        DataConfig {
            layout: Layout::Toy,
            root: None,
            split: Split::Train,
            resize: None,
            allow_aspect_change: false,
            remap: None,
            toy: Some(toy),
        }
    }

    pub fn on_disk(layout: Layout, root: impl Into<PathBuf>, split: Split) -> Self {
        DataConfig {
            layout,
            root: Some(root.into()),
            split,
            resize: None,
            allow_aspect_change: false,
            remap: None,
            toy: None,
        }
    }

    /// Opens the dataset in the given role.
    pub fn open(&self, domain: Domain, classes: &ClassSet) -> Result<Box<dyn SampleSource>> {
        match (&self.root, &self.toy) {
            (Some(root), None) => {
                let spec = DatasetSpec {
                    root: root.clone(),
                    layout: self.layout,
                    split: self.split,
                    class_set: classes.clone(),
                    resize: self.resize,
                    allow_aspect_change: self.allow_aspect_change,
                    domain: Some(domain),
                    remap: self.remap.clone(),
                };
                Ok(Box::new(Dataset::open(&spec)?))
            }
            (None, Some(toy)) if self.layout == Layout::Toy => {
                if classes.names != ClassSet::toy().names {
                    return Err(Error::Config("generated toy data needs `classes: \"toy\"`".into()));
                }
                let samples: Vec<Sample> = generate_toy(toy, domain)?;
                Ok(Box::new(samples))
            }
            (None, Some(_)) => Err(Error::Config(format!(
                "`toy` generation is only available for the TOY layout, not {:?}",
                self.layout
            ))),
            (Some(_), Some(_)) => Err(Error::Config("dataset sets both `root` and `toy`; choose one".into())),
            (None, None) => Err(Error::Config(format!("{:?} dataset needs a `root` directory", self.layout))),
        }
    }

    /// Stable description of the data, for run manifests.
    pub fn fingerprint(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        if let Some(root) = &self.root {
            // directory listing with sizes: cheap and catches edits
            let mut entries = Vec::new();
            walk(root, &mut entries)?;
            entries.sort();
            for e in entries {
                h.update(e.as_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn walk(dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for e in rd {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let p = e.path();
        let md = e.metadata().map_err(|err| Error::io(&p, err))?;
        if md.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(format!("{}:{}", p.display(), md.len()));
        }
    }
    Ok(())
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: VariantConfig,
    pub seed: u64,
    pub classes: ClassesConfig,
    pub depth_norm: DepthNormalizer,
    pub weights: LossWeights,
    pub train: TrainSection,
    pub arch: ArchConfig,
    pub source: DataConfig,
    pub target: DataConfig,
    /// Labelled target-domain data scored after training.
    pub eval: Option<DataConfig>,
}

impl Default for RunConfig {
    /// The procedural toy benchmark: 100 source and 100 target scenes,
    /// 100 held-out target scenes for scoring, 20 epochs (2000 steps).
    fn default() -> Self {
        let toy = ToyWorldConfig::default();
        RunConfig {
            variant: Variant::FULL.into(),
            seed: 0,
            classes: ClassesConfig::Preset("toy".into()),
            depth_norm: DepthNormalizer::TOY,
            weights: LossWeights::default(),
            train: TrainSection {
                epochs: 20,
                ..Default::default()
            },
            arch: ArchConfig::toy(),
            source: DataConfig::generated(toy),
            target: DataConfig::generated(toy),
            eval: Some(DataConfig::generated(ToyWorldConfig {
                seed: toy.seed + EVAL_SEED_OFFSET,
                ..toy
            })),
        }
    }
}

impl RunConfig {
    /// The toy benchmark with world, initialization and schedule all drawn
    /// from `seed`; evaluation uses held-out target scenes.
    pub fn toy_benchmark(seed: u64) -> Self {
        let toy = ToyWorldConfig {
            seed,
            ..Default::default()
        };
        RunConfig {
            seed,
            source: DataConfig::generated(toy),
            target: DataConfig::generated(toy),
            eval: Some(DataConfig::generated(ToyWorldConfig {
                seed: seed + EVAL_SEED_OFFSET,
                ..toy
            })),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.classes.resolve()?;
        self.depth_norm.validate()?;
        self.train_config().validate()
    }

    pub fn variant(&self) -> Variant {
        self.variant.into()
    }

    pub fn class_set(&self) -> Result<ClassSet> {
        self.classes.resolve()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            weights: self.weights,
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
            gan_loss: t.gan_loss,
            augment: t.augment,
            mask_zero_depth: t.mask_zero_depth,
            hygiene_every: t.hygiene_every,
            arch: self.arch.clone(),
        }
    }

    /// Every settable dotted key.
    pub fn valid_keys(&self) -> Result<Vec<String>> {
        let mut keys = Vec::new();
        leaf_keys(&serde_json::to_value(self)?, "", &mut keys);
        keys.sort();
        Ok(keys)
    }

    /// Applies `key=value` style overrides; values are parsed as JSON when
    /// possible and taken as strings otherwise.
    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(&self, overrides: &[(K, V)]) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for (k, v) in overrides {
            let key = k.as_ref();
            let raw = v.as_ref();
            let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let slot = lookup_mut(&mut root, key).ok_or_else(|| Error::UnknownKey {
                key: key.to_string(),
                valid: self.valid_keys().unwrap_or_default(),
            })?;
            *slot = parsed;
        }
        Self::from_value(root).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("after overrides: {m}")),
            other => other,
        })
    }
}

fn leaf_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) if !map.is_empty() => {
            for (k, child) in map {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                leaf_keys(child, &p, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn lookup_mut<'a>(v: &'a mut Value, dotted: &str) -> Option<&'a mut Value> {
    if dotted.is_empty() {
        return None;
    }
    dotted.split('.').try_fold(v, |cur, part| match cur {
        Value::Object(map) => map.get_mut(part),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(cfg.variant(), Variant::FULL);
        assert_eq!(cfg.train_config().epochs, 20);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"variant": {"input": "off", "output": "off"}, "seed": 3}"#).unwrap();
        assert_eq!(cfg.variant(), Variant::BASELINE);
        assert_eq!(cfg.train_config().seed, 3);
        assert_eq!(cfg.weights, LossWeights::default());
    }

    #[test]
    fn dotted_overrides() {
        let cfg = RunConfig::default()
            .with_overrides(&[
                ("variant.output", "sep"),
                ("variant.input", "gd-plus-d"),
                ("train.lr", "0.001"),
                ("train.epochs", "3"),
                ("weights.lambda_image", "0.5"),
                ("seed", "7"),
                ("classes", "toy"),
            ])
            .unwrap();
        assert_eq!(cfg.variant().to_string(), "gd_plus_d:sep");
        let t = cfg.train_config();
        assert_eq!((t.lr, t.epochs, t.seed, t.weights.lambda_image), (0.001, 3, 7, 0.5));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::default().with_overrides(&[("train.learning_rate", "1")]).unwrap_err();
        match &err {
            Error::UnknownKey { key, valid } => {
                assert_eq!(key, "train.learning_rate");
                for k in ["variant.input", "variant.output", "train.lr", "train.epochs", "weights.lambda_depth", "seed"] {
                    assert!(valid.iter().any(|v| v == k), "missing {k}");
                }
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_usage());
        assert!(err.to_string().contains("train.lr"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (k, v) in [("train.lr", "-1"), ("train.epochs", "0"), ("variant.output", "diagonal"), ("classes", "coco")] {
            let err = RunConfig::default().with_overrides(&[(k, v)]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{k}={v}: {err:?}");
        }
        assert!(matches!(RunConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
    }

    #[test]
    fn missing_dataset_root_names_the_path() {
        let source = DataConfig::on_disk(Layout::Vkitti, "/nonexistent/vkitti", Split::Train);
        let err = match source.open(Domain::Source, &ClassSet::vkitti10()) {
            Err(e) => e,
            Ok(_) => panic!("opened a missing root"),
        };
        assert!(err.to_string().contains("/nonexistent/vkitti"), "{err}");
    }
}
