use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::NliAggregation;
use crate::context::HypothesisMode;
use crate::model::{EncoderConfig, ModelConfig, TrainConfig};
use crate::segmentation::VocabBuilder;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train_corpus: PathBuf,
    /// Needed only for grid search.
    pub dev_corpus: Option<PathBuf>,
    /// Built from the training corpus by `train` when missing.
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train_corpus: "data/train.json".into(),
            dev_corpus: None,
            vocab: "out/vocab.txt".into(),
            checkpoint: "out/model.json".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSettings {
    /// Total encoder sequence length, specials and markers included.
    pub max_sequence_length: usize,
    pub min_surrounding_tokens: usize,
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        SegmentationSettings {
            max_sequence_length: 512,
            min_surrounding_tokens: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let desk = EncoderConfig::desk(1);
        ModelSettings {
            hidden_dim: desk.hidden_dim,
            num_layers: desk.num_layers,
            num_heads: desk.num_heads,
            ffn_dim: desk.ffn_dim,
            dropout: desk.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSettings {
    pub target_size: usize,
    pub min_pair_frequency: u64,
}

impl Default for VocabSettings {
    fn default() -> Self {
        let b = VocabBuilder::default();
        VocabSettings {
            target_size: b.target_size,
            min_pair_frequency: b.min_pair_frequency,
        }
    }
}

impl VocabSettings {
    pub fn builder(&self) -> VocabBuilder {
        VocabBuilder {
            target_size: self.target_size,
            min_pair_frequency: self.min_pair_frequency,
        }
    }
}

/// Everything a run depends on. `train.seed` seeds initialization,
/// shuffling and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub segmentation: SegmentationSettings,
    pub model: ModelSettings,
    pub vocab: VocabSettings,
    pub train: TrainConfig,
    pub hypothesis_mode: HypothesisMode,
    /// Train and predict NLI from gold evidence only (2-way E/C head).
    pub oracle_nli: bool,
}

impl ExperimentConfig {
    /// Settings sized for the bundled synthetic corpus.
    pub fn synthetic() -> Self {
        ExperimentConfig {
            paths: Paths {
                train_corpus: "data/synthetic.json".into(),
                ..Paths::default()
            },
            segmentation: SegmentationSettings {
                max_sequence_length: 128,
                min_surrounding_tokens: 32,
            },
            vocab: VocabSettings {
                target_size: 1000,
                min_pair_frequency: 2,
            },
            train: TrainConfig {
                learning_rate: 2e-3,
                batch_size: 8,
                epochs: 60,
                warmup_steps: 20,
                lambda: 0.4,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out
    }

    /// Value checks; path existence is checked by each command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::input(e.to_string()))?;
        self.encoder(1).validate().map_err(|e| CliError::input(e.to_string()))?;
        if self.segmentation.max_sequence_length < 8 {
            return Err(CliError::input("segmentation.max_sequence_length must be at least 8"));
        }
        Ok(())
    }

    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden_dim: self.model.hidden_dim,
            num_layers: self.model.num_layers,
            num_heads: self.model.num_heads,
            ffn_dim: self.model.ffn_dim,
            max_positions: self.segmentation.max_sequence_length,
            dropout: self.model.dropout,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder(vocab_size),
            nli_classes: if self.oracle_nli { 2 } else { 3 },
        }
    }

    pub fn aggregation(&self) -> NliAggregation {
        if self.train.use_weighted_nli {
            NliAggregation::Weighted
        } else {
            NliAggregation::Unweighted
        }
    }

    /// Relative paths in the config resolve against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.train_corpus);
        if let Some(dev) = self.paths.dev_corpus.as_mut() {
            fix(dev);
        }
        fix(&mut self.paths.vocab);
        fix(&mut self.paths.checkpoint);
        fix(&mut self.paths.output_dir);
    }
}

/// Value lists to sweep; empty or missing fields keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub warmup_steps: Vec<usize>,
    pub epochs: Vec<usize>,
    pub min_surrounding_tokens: Vec<usize>,
    pub lambda: Vec<f64>,
    pub use_weighted_nli: Vec<bool>,
    pub seed: Vec<u64>,
}

impl GridSpec {
    /// The base-size search space.
    pub fn base_search_space() -> Self {
        GridSpec {
            learning_rate: vec![1e-5, 2e-5, 3e-5, 5e-5],
            weight_decay: vec![0.0, 0.1],
            warmup_steps: vec![0, 1000],
            epochs: vec![3, 4, 5],
            min_surrounding_tokens: vec![64, 128],
            lambda: vec![0.05, 0.1, 0.2, 0.4],
            use_weighted_nli: vec![true, false],
            seed: Vec::new(),
        }
    }

    /// Cartesian product over the non-empty lists, last field varying fastest.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        fn sweep<T: Clone>(
            configs: Vec<ExperimentConfig>,
            values: &[T],
            set: impl Fn(&mut ExperimentConfig, T),
        ) -> Vec<ExperimentConfig> {
            if values.is_empty() {
                return configs;
            }
            configs
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(|v| {
                        let mut c = c.clone();
                        set(&mut c, v.clone());
                        c
                    }).collect::<Vec<_>>()
                })
                .collect()
        }
        let mut runs = vec![base.clone()];
        runs = sweep(runs, &self.learning_rate, |c, v| c.train.learning_rate = v);
        runs = sweep(runs, &self.weight_decay, |c, v| c.train.weight_decay = v);
        runs = sweep(runs, &self.warmup_steps, |c, v| c.train.warmup_steps = v);
        runs = sweep(runs, &self.epochs, |c, v| c.train.epochs = v);
        runs = sweep(runs, &self.min_surrounding_tokens, |c, v| c.segmentation.min_surrounding_tokens = v);
        runs = sweep(runs, &self.lambda, |c, v| c.train.lambda = v);
        runs = sweep(runs, &self.use_weighted_nli, |c, v| c.train.use_weighted_nli = v);
        sweep(runs, &self.seed, |c, v| c.train.seed = v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        for config in [ExperimentConfig::default(), ExperimentConfig::synthetic()] {
            config.validate().unwrap();
            let back: ExperimentConfig = serde_json::from_str(&config.to_json()).unwrap();
            assert_eq!(back, config);
        }
        let defaults = ExperimentConfig::default();
        assert_eq!(defaults.train.lambda, 0.2);
        assert_eq!(defaults.segmentation.min_surrounding_tokens, 64);
        assert_eq!(defaults.model.hidden_dim, 64);
    }

    #[test]
    fn partial_config_fills_defaults_and_rejects_unknown_keys() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"train":{"lambda":0.4}}"#).unwrap();
        assert_eq!(c.train.lambda, 0.4);
        assert_eq!(c.train.batch_size, 32);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"trian":{}}"#).is_err());
    }

    #[test]
    fn nonpositive_lambda_is_rejected() {
        let mut c = ExperimentConfig::default();
        for lambda in [0.05, 0.1, 0.2, 0.4] {
            c.train.lambda = lambda;
            c.validate().unwrap();
        }
        c.train.lambda = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_expansion() {
        let base = ExperimentConfig::default();
        assert_eq!(GridSpec::default().expand(&base), vec![base.clone()]);
        assert_eq!(GridSpec::base_search_space().expand(&base).len(), 4 * 2 * 2 * 3 * 2 * 4 * 2);
        let grid = GridSpec {
            lambda: vec![0.1, 0.4],
            seed: vec![1, 2],
            ..GridSpec::default()
        };
        let runs = grid.expand(&base);
        let pairs: Vec<_> = runs.iter().map(|c| (c.train.lambda, c.train.seed)).collect();
        assert_eq!(pairs, vec![(0.1, 1), (0.1, 2), (0.4, 1), (0.4, 2)]);
    }
}
