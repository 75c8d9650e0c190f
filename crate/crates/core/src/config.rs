//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys cover both the data
//! generator and the trainer; `seed` sets the seed of both.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synthzsl::SynthConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

fn value<T: FromStr>(key: &str, line: usize, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::config(key, line, format!("invalid value `{raw}`: {e}")))
}

fn assign(cfg: &mut Config, key: &str, raw: &str, line: usize) -> Result<()> {
    let (s, t) = (&mut cfg.synth, &mut cfg.train);
    macro_rules! set {
        ($($field:expr),+) => {{ $( $field = value(key, line, raw)?; )+ }};
    }
    match key {
        "class_count" => set!(s.class_count),
        "seen_count" => set!(s.seen_count),
        "attribute_count" => set!(s.attribute_count),
        "regions_per_instance" => set!(s.regions_per_instance),
        "feature_width" => set!(s.feature_width),
        "instances_per_class" => set!(s.instances_per_class),
        "imbalance_exponent" => set!(s.imbalance_exponent),
        "cooccurrence_strength" => set!(s.cooccurrence_strength),
        "variability_noise" => set!(s.variability_noise),
        "conflict_rate" => set!(s.conflict_rate),
        "seen_test_fraction" => set!(s.seen_test_fraction),
        "binary_attributes" => set!(s.binary_attributes),
        "normalize_attributes" => set!(s.normalize_attributes),
        "feature_scale" => set!(s.feature_scale),
        "seed" => set!(s.seed, t.seed),
        "epochs" => set!(t.epochs),
        "batch_size" => set!(t.batch_size),
        "learning_rate" => set!(t.learning_rate),
        "weight_decay" => set!(t.weight_decay),
        "mu" => set!(t.mu),
        "lambda_cal" => set!(t.lambda_cal),
        "lambda_edl" => set!(t.lambda_edl),
        "beta" => set!(t.beta),
        "gamma" => set!(t.gamma),
        "tau" => set!(t.tau),
        "delta" => set!(t.delta),
        "margin" => set!(t.margin),
        "similarity_threshold" => set!(t.similarity_threshold),
        "annealing_epochs" => set!(t.annealing_epochs),
        "vicl_weight" => set!(t.vicl_weight),
        "digs_weight" => set!(t.digs_weight),
        "layers" => set!(t.layers),
        "key_width" => set!(t.key_width),
        "ffn_hidden" => set!(t.ffn_hidden),
        "bank_size" => set!(t.bank_size),
        "pattern_width" => set!(t.pattern_width),
        "fusion_mode" => set!(t.fusion_mode),
        "evidence_activation" => set!(t.evidence_activation),
        "pooling" => set!(t.pooling),
        "drop_modality" => set!(t.drop_modality),
        _ => return Err(Error::config(key, line, "unknown key")),
    }
    Ok(())
}

/// Parses config text, applying each assignment over the defaults and
/// validating the result. Validation errors point at the line that set the
/// offending key.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, raw)) = content.split_once('=') else {
            return Err(Error::config(content, line, "expected `key = value`"));
        };
        let (key, raw) = (key.trim(), raw.trim());
        if key.is_empty() {
            return Err(Error::config("", line, "missing key"));
        }
        if let Some(first) = lines_of.get(key) {
            return Err(Error::config(key, line, format!("duplicate key (first set at line {first})")));
        }
        assign(&mut cfg, key, raw, line)?;
        lines_of.insert(key.to_string(), line);
    }
    let located = |e: Error| match e {
        Error::Config { key, line: 0, message } => {
            let line = lines_of.get(&key).copied().unwrap_or(0);
            Error::Config { key, line, message }
        }
        other => other,
    };
    cfg.synth.validate().map_err(located)?;
    cfg.train.validate().map_err(located)?;
    Ok(cfg)
}

/// Trainer settings from config text (generator keys are accepted and ignored).
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    parse_config(text).map(|c| c.train)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edl::FusionMode;
    use crate::grounding::Pooling;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), Config::default());
        assert_eq!(parse_config("# nothing\n\n   \n").unwrap(), Config::default());
    }

    #[test]
    fn assignments_and_comments() {
        let c = parse_config("epochs = 3 # short\nseed=9\nfusion_mode = average\npooling = max\nbinary_attributes = true\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!((c.train.seed, c.synth.seed), (9, 9));
        assert_eq!(c.train.fusion_mode, FusionMode::Average);
        assert_eq!(c.train.pooling, Pooling::Max);
        assert!(c.synth.binary_attributes);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = parse_config("epochs = 2\n\nlearning_rte = 0.1\n").unwrap_err();
        match err {
            Error::Config { key, line, .. } => assert_eq!((key.as_str(), line), ("learning_rte", 3)),
            other => panic!("{other:?}"),
        }
        assert!(err_line("epochs = many") == 1);
        assert!(err_line("epochs 3") == 1);
        assert!(err_line("mu = 1\nmu = 0.5") == 2);
    }

    fn err_line(text: &str) -> usize {
        match parse_config(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors_point_at_the_assignment() {
        assert_eq!(err_line("epochs = 1\nmu = 3.0\n"), 2);
        assert_eq!(err_line("\n\nseen_count = 40\n"), 3);
    }

    #[test]
    fn train_config_string_round_trips() {
        let cfg = TrainConfig {
            learning_rate: 3.7e-4,
            mu: 0.25,
            fusion_mode: FusionMode::Average,
            ..TrainConfig::default()
        };
        assert_eq!(parse_train_config(&cfg.to_config_string()).unwrap(), cfg);
    }
}
