//! TOML configuration files layered over per-command defaults.

use std::fs;
use std::path::Path;

use ewa_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Overlay `top` onto `base`. Tables merge key by key, except tagged enums
/// (tables with a `kind` key), which `top` replaces whole.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) if !t.contains_key("kind") => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parse `text` (TOML) on top of `defaults`. Unknown keys are rejected by the
/// target type.
pub fn from_toml_str<T: Serialize + DeserializeOwned>(text: &str, defaults: &T) -> Result<T> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let top = serde_json::to_value(table).map_err(|e| Error::Config(e.to_string()))?;
    let mut base = serde_json::to_value(defaults).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut base, top);
    serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
}

/// `defaults`, overridden by the file at `path` when given.
pub fn load<T: Serialize + DeserializeOwned + Clone>(path: Option<&Path>, defaults: &T) -> Result<T> {
    let Some(path) = path else {
        return Ok(defaults.clone());
    };
    let text = fs::read_to_string(path)?;
    from_toml_str(&text, defaults).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ewa_core::sweep::SweepConfig;

    #[test]
    fn partial_file_keeps_defaults() {
        let base = SweepConfig { n_games: 7, ..SweepConfig::default() };
        let c = from_toml_str("players = 3\n[alpha]\ncount = 2\n", &base).unwrap();
        assert_eq!(c.players, 3);
        assert_eq!(c.n_games, 7);
        assert_eq!(c.alpha.count, 2);
        assert_eq!(c.alpha.max, base.alpha.max);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let base = SweepConfig::default();
        assert!(matches!(from_toml_str("player = 3\n", &base), Err(Error::Config(_))));
        assert!(from_toml_str("[classifier]\nmax_step = 10\n", &base).is_err());
    }

    #[test]
    fn tagged_enum_is_replaced() {
        let base = SweepConfig::default();
        let c = from_toml_str("[classifier.engine]\nkind = \"flow\"\nstep = 0.05\n", &base).unwrap();
        assert_eq!(c.classifier.engine, ewa_core::classifier::Engine::Flow { step: Some(0.05) });
    }

    #[test]
    fn readme_sweep_example_parses() {
        let text = "players = 2\nactions = 50\nbeta = 0.05\nseed = 3\nn_games = 1\n\n[alpha]\nmin = 0.005\nmax = 0.2\ncount = 12\nspacing = \"log\"\n\n[gamma]\nmin = -1.0\nmax = 0.0\ncount = 11\n\n[classifier]\nn_initial_conditions = 50\nmax_steps = 100000\n";
        let c = from_toml_str(text, &SweepConfig::default()).unwrap();
        assert_eq!(c.alpha.spacing, ewa_core::sweep::Spacing::Log);
        assert_eq!(c.gamma.count, 11);
        c.validate().unwrap();
    }
}
