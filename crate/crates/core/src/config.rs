//! Hyperparameter config files.
//!
//! The format is plain `key = value` lines (a TOML subset); every field of
//! [`HyperParams`] may appear, missing keys take their defaults and unknown
//! keys are rejected:
//!
//! ```text
//! learning_rate_initial = 5e-6
//! weight_decay = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! batch_size = 16
//! epochs = 1
//! lr_min = 0.0
//! confidence_threshold = 0.8
//! logit_scale = 100.0
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::HyperParams;

pub fn parse_hyperparams(text: &str) -> Result<HyperParams> {
    let hp: HyperParams =
        toml::from_str(text).map_err(|e| Error::invalid("config", e.message().to_string()))?;
    hp.validate()?;
    Ok(hp)
}

pub fn render_hyperparams(hp: &HyperParams) -> String {
    // Plain structs of scalars always serialize.
    toml::to_string(hp).expect("hyperparameters serialize to TOML")
}

pub fn load_hyperparams(path: &Path) -> Result<HyperParams> {
    let text = fs::read_to_string(path)?;
    parse_hyperparams(&text).map_err(|e| match e {
        Error::Invalid { reason, .. } => Error::format("config", path, reason),
        other => other,
    })
}

pub fn save_hyperparams(hp: &HyperParams, path: &Path) -> Result<()> {
    fs::write(path, render_hyperparams(hp))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let hp = HyperParams::default();
        let text = render_hyperparams(&hp);
        assert_eq!(parse_hyperparams(&text).unwrap(), hp);
        assert_eq!(parse_hyperparams("").unwrap(), hp);
    }

    #[test]
    fn partial_file_overrides_only_named_keys() {
        let hp = parse_hyperparams("epochs = 3\nlearning_rate_initial = 1e-4\n").unwrap();
        assert_eq!(hp.epochs, 3);
        assert_eq!(hp.learning_rate_initial, 1e-4);
        assert_eq!(hp.batch_size, 16);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(parse_hyperparams("momentum = 0.5").is_err());
        assert!(parse_hyperparams("beta1 = 1.5").is_err());
        assert!(parse_hyperparams("batch_size = 0").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hp.toml");
        let hp = HyperParams {
            epochs: 4,
            ..HyperParams::default()
        };
        save_hyperparams(&hp, &path).unwrap();
        assert_eq!(load_hyperparams(&path).unwrap(), hp);
    }
}
