//! End-to-end vehicle experiment: data generation, the three training
//! modes, evaluation of the augmented and standalone baseline models, and
//! β sweeps.

use std::sync::Arc;

use crate::ann::MlpArchitecture;
use crate::augmented::AugmentedModel;
use crate::data::{nrms, split_train_val, Dataset, NrmsReport, Role};
use crate::dynamics::truth::{simulate_protocol, PathKind, Protocol, TruthConfig};
use crate::dynamics::vehicle::{SingleTrack, SingleTrackParams, VELOCITY_STATES};
use crate::dynamics::FirstPrinciplesModel;
use crate::error::{Error, Result};
use crate::linalg::seeded_rng;
use crate::training::{train, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    /// Network only, baseline parameters frozen at their nominal values.
    FixedTheta0,
    /// Baseline parameters and network together, `β = 0`.
    CoEstimate,
    /// Baseline parameters and network together with the orthogonality
    /// penalty.
    CoEstimateOrth,
}

impl TrainingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingMode::FixedTheta0 => "fixed-theta0",
            TrainingMode::CoEstimate => "co-estimate",
            TrainingMode::CoEstimateOrth => "co-estimate-orth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TrainingMode::FixedTheta0,
            TrainingMode::CoEstimate,
            TrainingMode::CoEstimateOrth,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }

    /// Training configuration for this mode; `beta` is used only by the
    /// orthogonal mode.
    pub fn configure(&self, base: &TrainConfig, beta: f64) -> TrainConfig {
        let mut c = base.clone();
        match self {
            TrainingMode::FixedTheta0 => {
                c.co_estimate_theta = false;
                c.beta = 0.0;
            }
            TrainingMode::CoEstimate => {
                c.co_estimate_theta = true;
                c.beta = 0.0;
            }
            TrainingMode::CoEstimateOrth => {
                c.co_estimate_theta = true;
                c.beta = beta;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub truth: TruthConfig,
    pub protocol: Protocol,
    pub theta_nominal: SingleTrackParams,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub validation_fraction: f64,
    pub snr_db: Vec<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truth: TruthConfig::default(),
            protocol: Protocol::default(),
            theta_nominal: SingleTrackParams::NOMINAL,
            hidden: vec![64, 64],
            train: TrainConfig::default(),
            validation_fraction: 0.2,
            snr_db: vec![30.0, 25.0],
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn baseline(&self) -> Result<FirstPrinciplesModel> {
        FirstPrinciplesModel::new(
            Arc::new(SingleTrack {
                sample_time: self.truth.sample_time,
            }),
            self.theta_nominal.to_array().to_vec(),
        )
    }

    pub fn architecture(&self) -> MlpArchitecture {
        MlpArchitecture {
            input: 8,
            hidden: self.hidden.clone(),
            output: VELOCITY_STATES.len(),
            activation: crate::ann::Activation::Tanh,
        }
    }
}

const NOISE_STREAM: u64 = 0x006e_6f69_7365;

/// Training, validation and test sets of one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Simulates the protocol, alternates trajectories between training and
/// test (each speed goes to training on one path and to test on the
/// other), carves validation windows out of every training trajectory
/// and optionally corrupts training and validation outputs.
pub fn generate(config: &ExperimentConfig, snr_db: Option<f64>) -> Result<SplitData> {
    let runs = simulate_protocol(&config.truth, &config.protocol)?;
    let mut train_parts = Vec::new();
    let mut test_parts = Vec::new();
    for (i, (spec, data)) in runs.into_iter().enumerate() {
        let level = i % config.protocol.speeds.len();
        let to_train = level.is_multiple_of(2) == (spec.path == PathKind::Lemniscate);
        if to_train {
            train_parts.push(data);
        } else {
            test_parts.push(data);
        }
    }
    let pool = Dataset::concat(&train_parts, Role::Train)?;
    // Separate streams, so every noise level gets the same validation
    // windows.
    let pool = match snr_db {
        Some(snr) => pool.with_output_noise(snr, &mut seeded_rng(config.seed ^ NOISE_STREAM))?,
        None => pool,
    };
    let (train, val) = split_train_val(
        &pool,
        config.validation_fraction,
        config.train.horizon + 1,
        &mut seeded_rng(config.seed),
    )?;
    Ok(SplitData {
        train,
        val,
        test: Dataset::concat(&test_parts, Role::Test)?,
    })
}

/// Trains the vehicle model in the given mode.
pub fn run_training(
    config: &ExperimentConfig,
    data: &SplitData,
    mode: TrainingMode,
    beta: f64,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut tc = mode.configure(&config.train, beta);
    tc.seed = seed;
    train(
        &tc,
        &data.train,
        &data.val,
        &config.baseline()?,
        &config.architecture(),
        &VELOCITY_STATES,
    )
}

/// Test NRMS of the augmented model and of its baseline alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub augmented: NrmsReport,
    pub baseline: NrmsReport,
}

pub fn evaluate(model: &AugmentedModel, test: &Dataset) -> Result<Evaluation> {
    Ok(Evaluation {
        augmented: nrms(model, test)?,
        baseline: nrms(&model.baseline_only(), test)?,
    })
}

/// NRMS of the nominal baseline model on `test`.
pub fn nominal_nrms(config: &ExperimentConfig, data: &SplitData) -> Result<NrmsReport> {
    let fp = config.baseline()?;
    let model = AugmentedModel::new(
        fp,
        crate::ann::MlpParams::zeros(&config.architecture())?,
        crate::augmented::NormalizationMaps::identity(6, 2),
        VELOCITY_STATES.to_vec(),
    )?;
    nrms(&model, test_or_err(data)?)
}

fn test_or_err(data: &SplitData) -> Result<&Dataset> {
    if data.test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    Ok(&data.test)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub beta: f64,
    /// Best validation loss of the run.
    pub val_loss: f64,
    pub evaluation: Option<Evaluation>,
    pub theta: Vec<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn csv_header() -> &'static str {
        "beta,val_loss,nrms_augmented,nrms_baseline,error"
    }

    pub fn to_csv(&self) -> String {
        let (a, b) = self.evaluation.as_ref().map_or((f64::NAN, f64::NAN), |e| {
            (e.augmented.mean, e.baseline.mean)
        });
        format!(
            "{:e},{:e},{a},{b},{}",
            self.beta,
            self.val_loss,
            self.error.as_deref().unwrap_or("").replace(',', ";")
        )
    }
}

/// Trains the orthogonal mode for every `β`; failures are recorded and the
/// sweep continues.
pub fn sweep_beta(
    config: &ExperimentConfig,
    data: &SplitData,
    betas: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::invalid("sweep needs at least one beta"));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let row = match run_training(config, data, TrainingMode::CoEstimateOrth, beta, seed)
            .and_then(|out| evaluate(&out.model, &data.test).map(|e| (out, e)))
        {
            Ok((out, e)) => SweepRow {
                beta,
                val_loss: out.history.best().val_loss,
                evaluation: Some(e),
                theta: out.model.fp.theta.clone(),
                error: None,
            },
            Err(e) => SweepRow {
                beta,
                val_loss: f64::NAN,
                evaluation: None,
                theta: vec![],
                error: Some(e.to_string()),
            },
        };
        log::info!("beta {beta:e}: val {:.4e}", row.val_loss);
        rows.push(row);
    }
    Ok(rows)
}

/// Row with the lowest finite validation loss.
pub fn select_by_validation(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter()
        .filter(|r| r.val_loss.is_finite())
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
}

/// Scalar system `x⁺ = θ x + u` where the baseline has the true
/// structure, so any network term proportional to `x` trades off against
/// `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarStudy {
    pub theta_true: f64,
    pub theta_nominal: f64,
    pub samples: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub validation_fraction: f64,
}

impl Default for ScalarStudy {
    fn default() -> Self {
        Self {
            theta_true: 0.8,
            theta_nominal: 0.6,
            samples: 2000,
            hidden: vec![16, 16],
            train: TrainConfig {
                horizon: 5,
                batch_size: 256,
                learning_rate: 1e-2,
                epochs: 150,
                patience: 50,
                ..TrainConfig::default()
            },
            validation_fraction: 0.2,
        }
    }
}

impl ScalarStudy {
    /// White Gaussian input, noise-free response from rest.
    pub fn data(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        use rand::Rng as _;
        let mut rng = seeded_rng(seed);
        let n = self.samples;
        let u: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut x = vec![0.0; n];
        for k in 1..n {
            x[k] = self.theta_true * x[k - 1] + u[k - 1];
        }
        let all = Dataset::new(
            1.0,
            crate::linalg::Matrix::from_vec(n, 1, u)?,
            crate::linalg::Matrix::from_vec(n, 1, x)?,
            None,
            vec![0],
            Role::Train,
        )?;
        split_train_val(
            &all,
            self.validation_fraction,
            self.train.horizon + 1,
            &mut rng,
        )
    }

    /// Co-estimates `θ` and the network; returns the trained model.
    pub fn run(&self, seed: u64, beta: f64) -> Result<TrainOutcome> {
        let (tr, va) = self.data(seed)?;
        let fp = FirstPrinciplesModel::new(
            Arc::new(crate::dynamics::toy::ScalarLinear { input_gain: true }),
            vec![self.theta_nominal],
        )?;
        let arch = MlpArchitecture {
            input: 2,
            hidden: self.hidden.clone(),
            output: 1,
            activation: crate::ann::Activation::Tanh,
        };
        let mut tc = TrainingMode::CoEstimateOrth.configure(&self.train, beta);
        tc.seed = seed;
        train(&tc, &tr, &va, &fp, &arch, &[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            protocol: Protocol {
                speeds: vec![1.0, 1.6, 2.2, 2.8],
                total_samples: 8 * 160,
                seed: 3,
            },
            hidden: vec![8],
            train: TrainConfig {
                horizon: 5,
                epochs: 2,
                batch_size: 64,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn generation_alternates_speeds_between_train_and_test() {
        let cfg = tiny();
        let d = generate(&cfg, None).unwrap();
        assert_eq!(d.test.segment_starts().len(), 4);
        assert_eq!(d.train.len() + d.val.len() + d.test.len(), 8 * 160);
        let frac = d.val.len() as f64 / (d.train.len() + d.val.len()) as f64;
        assert!((0.18..=0.22).contains(&frac), "{frac}");
        assert_eq!(d.test.states(), Some(d.test.outputs()));
        assert_eq!(generate(&cfg, None).unwrap(), d);
    }

    #[test]
    fn noise_only_touches_training_and_validation() {
        let cfg = tiny();
        let clean = generate(&cfg, None).unwrap();
        let noisy = generate(&cfg, Some(30.0)).unwrap();
        assert_eq!(clean.test, noisy.test);
        assert_eq!(noisy.train.snr_db, Some(30.0));
        assert_ne!(clean.train.outputs(), noisy.train.outputs());
        assert_eq!(clean.train.inputs(), noisy.train.inputs());
    }

    #[test]
    fn modes_and_evaluation() {
        let cfg = tiny();
        let d = generate(&cfg, None).unwrap();
        let nominal = nominal_nrms(&cfg, &d).unwrap();
        assert!(nominal.mean.is_finite() && nominal.mean > 0.0);

        let fixed = run_training(&cfg, &d, TrainingMode::FixedTheta0, 1.0, 1).unwrap();
        assert_eq!(fixed.model.fp.theta, cfg.theta_nominal.to_array().to_vec());
        let e = evaluate(&fixed.model, &d.test).unwrap();
        assert_eq!(e.baseline, nominal);

        let zero = TrainConfig {
            epochs: 0,
            ..cfg.train.clone()
        };
        let init = run_training(
            &ExperimentConfig {
                train: zero,
                ..cfg.clone()
            },
            &d,
            TrainingMode::CoEstimate,
            0.0,
            1,
        )
        .unwrap();
        let e = evaluate(&init.model, &d.test).unwrap();
        assert_eq!(e.augmented, e.baseline);

        let rows = sweep_beta(&cfg, &d, &[0.0, 1e-3], 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(select_by_validation(&rows).is_some());
        assert!(rows[0].to_csv().starts_with("0e0,"));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            TrainingMode::FixedTheta0,
            TrainingMode::CoEstimate,
            TrainingMode::CoEstimateOrth,
        ] {
            assert_eq!(TrainingMode::parse(m.as_str()), Some(m));
        }
        let base = TrainConfig::default();
        assert_eq!(TrainingMode::CoEstimate.configure(&base, 5.0).beta, 0.0);
        assert!(
            !TrainingMode::FixedTheta0
                .configure(&base, 5.0)
                .co_estimate_theta
        );
        assert_eq!(TrainingMode::CoEstimateOrth.configure(&base, 5.0).beta, 5.0);
    }
}
