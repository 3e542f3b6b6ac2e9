//! Flat TOML run configuration.

use std::path::Path;

use orthaug::augmented::NormalizationSource;
use orthaug::dynamics::vehicle::SingleTrackParams;
use orthaug::experiment::ExperimentConfig;
use orthaug::projection::BasisMode;
use orthaug::training::{PenaltyScope, TrainConfig};
use orthaug::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every key is optional; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub total_samples: usize,
    pub speeds: Vec<f64>,
    pub theta_nominal: Vec<f64>,
    pub hidden: Vec<usize>,
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub beta: f64,
    pub betas: Vec<f64>,
    pub basis_mode: String,
    pub penalty_scope: String,
    pub normalization: String,
    pub validation_fraction: f64,
    pub snr_db: Vec<f64>,
}

impl Default for FileConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        let t = TrainConfig::default();
        Self {
            seed: e.seed,
            total_samples: e.protocol.total_samples,
            speeds: e.protocol.speeds,
            theta_nominal: e.theta_nominal.to_array().to_vec(),
            hidden: e.hidden,
            horizon: t.horizon,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            patience: t.patience,
            beta: 1e-4,
            betas: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
            basis_mode: t.basis_mode.as_str().into(),
            penalty_scope: t.penalty_scope.as_str().into(),
            normalization: t.normalization.as_str().into(),
            validation_fraction: e.validation_fraction,
            snr_db: e.snr_db,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
            message: format!("{}: {}", path.display(), e.message()),
        })
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let invalid = |m: String| Error::InvalidInput(m);
        if self.theta_nominal.len() != 9 {
            return Err(invalid(format!(
                "theta_nominal needs 9 values, got {}",
                self.theta_nominal.len()
            )));
        }
        let mut e = ExperimentConfig::default();
        e.seed = self.seed;
        e.protocol.seed = self.seed;
        e.protocol.total_samples = self.total_samples;
        e.protocol.speeds = self.speeds.clone();
        e.theta_nominal = SingleTrackParams::from_slice(&self.theta_nominal);
        e.hidden = self.hidden.clone();
        e.validation_fraction = self.validation_fraction;
        e.snr_db = self.snr_db.clone();
        e.train = TrainConfig {
            horizon: self.horizon,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta: self.beta,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            basis_mode: BasisMode::parse(&self.basis_mode)
                .ok_or_else(|| invalid(format!("unknown basis_mode `{}`", self.basis_mode)))?,
            penalty_scope: PenaltyScope::parse(&self.penalty_scope).ok_or_else(|| {
                invalid(format!("unknown penalty_scope `{}`", self.penalty_scope))
            })?,
            normalization: NormalizationSource::parse(&self.normalization).ok_or_else(|| {
                invalid(format!("unknown normalization `{}`", self.normalization))
            })?,
            co_estimate_theta: true,
        };
        e.train.validate()?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = FileConfig::default();
        let back: FileConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.experiment().unwrap().protocol.total_samples, 15985);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: FileConfig = toml::from_str("epochs = 3\nhidden = [8]\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.horizon, 15);
        assert_eq!(c.experiment().unwrap().architecture().hidden, vec![8]);
    }

    #[test]
    fn rejects_unknown_keys_and_modes() {
        assert!(toml::from_str::<FileConfig>("epoch = 3\n").is_err());
        let c: FileConfig = toml::from_str("basis_mode = \"sometimes\"\n").unwrap();
        assert!(matches!(c.experiment(), Err(Error::InvalidInput(_))));
    }
}
