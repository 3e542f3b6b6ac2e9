//! Additive augmentation of a baseline model with a normalized network:
//!
//! `x⁺ = f_θ(x, u) + T_x⁻¹ · f_ANN(T_x x, T_u u)`
//!
//! where the network output is injected only at the augmented state rows
//! and de-normalized with the matching entries of `T_x⁻¹`.

use crate::ann::{ForwardCache, MlpParams};
use crate::data::Dataset;
use crate::dynamics::{check_finite, diverged, FirstPrinciplesModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Diagonal scalings `T_x = diag(1/σ_x)`, `T_u = diag(1/σ_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationMaps {
    pub state_scale: Vec<f64>,
    pub input_scale: Vec<f64>,
}

impl NormalizationMaps {
    pub fn identity(n_x: usize, n_u: usize) -> Self {
        Self {
            state_scale: vec![1.0; n_x],
            input_scale: vec![1.0; n_u],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .state_scale
            .iter()
            .chain(&self.input_scale)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::invalid(
                "normalization scales must be positive and finite",
            ));
        }
        Ok(())
    }
}

/// Where the state standard deviations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationSource {
    #[default]
    MeasuredStates,
    /// Free-run simulation of the baseline model on the training inputs.
    SimulatedStates,
}

impl NormalizationSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizationSource::MeasuredStates => "measured",
            NormalizationSource::SimulatedStates => "simulated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            NormalizationSource::MeasuredStates,
            NormalizationSource::SimulatedStates,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }
}

/// Population standard deviation of every column.
fn column_std(m: &Matrix) -> Vec<f64> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|k| m[(k, j)]).sum::<f64>() / n;
            ((0..m.rows())
                .map(|k| (m[(k, j)] - mean).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        })
        .collect()
}

fn inverse_std(m: &Matrix, prefix: &str) -> Result<Vec<f64>> {
    column_std(m)
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            if s > 0.0 && s.is_finite() {
                Ok(1.0 / s)
            } else {
                Err(Error::DegenerateChannel {
                    channel: format!("{prefix}_{}", j + 1),
                    reason: "zero variance in training data".into(),
                })
            }
        })
        .collect()
}

/// `T_x`, `T_u` from the measured states (outputs) and inputs of `train`.
pub fn compute_normalization(train: &Dataset) -> Result<NormalizationMaps> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(
            "normalization needs at least 2 samples".into(),
        ));
    }
    Ok(NormalizationMaps {
        state_scale: inverse_std(train.outputs(), "x")?,
        input_scale: inverse_std(train.inputs(), "u")?,
    })
}

/// As [`compute_normalization`], with states taken from a chosen source.
pub fn compute_normalization_from(
    train: &Dataset,
    fp: &FirstPrinciplesModel,
    source: NormalizationSource,
) -> Result<NormalizationMaps> {
    match source {
        NormalizationSource::MeasuredStates => compute_normalization(train),
        NormalizationSource::SimulatedStates => {
            let sim = simulate_fp(fp, train)?;
            let simulated = Dataset::new(
                train.sample_time(),
                train.inputs().clone(),
                sim,
                None,
                train.segment_starts().to_vec(),
                train.role,
            )?;
            compute_normalization(&simulated)
        }
    }
}

/// Free-run baseline simulation of every segment of `data`.
pub fn simulate_fp(fp: &FirstPrinciplesModel, data: &Dataset) -> Result<Matrix> {
    let mut out = Matrix::zeros(data.len(), fp.n_x());
    let mut next = vec![0.0; fp.n_x()];
    for seg in data.segments() {
        out.row_mut(seg.start)
            .copy_from_slice(data.outputs().row(seg.start));
        for k in seg.start..seg.end - 1 {
            let x = out.row(k).to_vec();
            fp.dynamics()
                .step_unchecked(&x, data.inputs().row(k), &fp.theta, &mut next);
            if diverged(&next) {
                return Err(Error::SimulationDiverged { step: k + 1 });
            }
            out.row_mut(k + 1).copy_from_slice(&next);
        }
    }
    Ok(out)
}

/// Baseline model plus additive network.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub fp: FirstPrinciplesModel,
    pub ann: MlpParams,
    pub norm: NormalizationMaps,
    augmented_states: Vec<usize>,
}

/// States and outputs of a `T`-step rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// `x_1 … x_T`
    pub states: Matrix,
    /// `y_0 … y_{T-1}`
    pub outputs: Matrix,
}

impl AugmentedModel {
    pub fn new(
        fp: FirstPrinciplesModel,
        ann: MlpParams,
        norm: NormalizationMaps,
        augmented_states: Vec<usize>,
    ) -> Result<Self> {
        let (n_x, n_u) = (fp.n_x(), fp.n_u());
        if ann.input_dim() != n_x + n_u {
            return Err(Error::invalid(format!(
                "network input must be n_x + n_u = {}, got {}",
                n_x + n_u,
                ann.input_dim()
            )));
        }
        if ann.output_dim() != augmented_states.len() {
            return Err(Error::invalid(format!(
                "network output must match {} augmented states, got {}",
                augmented_states.len(),
                ann.output_dim()
            )));
        }
        if augmented_states.windows(2).any(|w| w[0] >= w[1])
            || augmented_states.iter().any(|&i| i >= n_x)
        {
            return Err(Error::invalid(
                "augmented state indices must be increasing and < n_x",
            ));
        }
        if norm.state_scale.len() != n_x || norm.input_scale.len() != n_u {
            return Err(Error::invalid(
                "normalization dimensions do not match the model",
            ));
        }
        norm.validate()?;
        Ok(Self {
            fp,
            ann,
            norm,
            augmented_states,
        })
    }

    pub fn n_x(&self) -> usize {
        self.fp.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.fp.n_u()
    }

    pub fn augmented_states(&self) -> &[usize] {
        &self.augmented_states
    }

    /// The same model with the network output layer zeroed (baseline only).
    pub fn baseline_only(&self) -> AugmentedModel {
        let mut m = self.clone();
        let last = m.ann.layers.last_mut().expect("non-empty");
        last.weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        last.bias.iter_mut().for_each(|v| *v = 0.0);
        m
    }

    /// Normalized network input `[T_x x; T_u u]`.
    pub fn ann_input(&self, x: &[f64], u: &[f64], z: &mut [f64]) {
        let n_x = x.len();
        for (i, (xi, s)) in x.iter().zip(&self.norm.state_scale).enumerate() {
            z[i] = xi * s;
        }
        for (j, (uj, s)) in u.iter().zip(&self.norm.input_scale).enumerate() {
            z[n_x + j] = uj * s;
        }
    }

    /// De-normalized network contribution in state space (zero outside
    /// the augmented rows).
    pub fn ann_contribution(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.fp.validate(x, u, &self.fp.theta)?;
        let mut z = vec![0.0; self.n_x() + self.n_u()];
        self.ann_input(x, u, &mut z);
        let raw = self.ann.forward(&z)?;
        let mut out = vec![0.0; self.n_x()];
        for (r, &i) in raw.iter().zip(&self.augmented_states) {
            out[i] = r / self.norm.state_scale[i];
        }
        Ok(out)
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut stepper = Stepper::new(self);
        let mut out = vec![0.0; self.n_x()];
        self.fp.validate(x, u, &self.fp.theta)?;
        stepper.step(self, x, u, &mut out);
        Ok(out)
    }

    /// `T = inputs.rows()` steps from the measured initial state `x0`.
    pub fn rollout(&self, x0: &[f64], inputs: &Matrix) -> Result<Rollout> {
        let t = inputs.rows();
        if t == 0 {
            return Err(Error::invalid("rollout needs at least one input"));
        }
        let sim = self.simulate_steps(x0, inputs, t)?;
        Ok(Rollout {
            states: sim.row_range(1..t + 1),
            outputs: sim.row_range(0..t),
        })
    }

    /// Free-run simulation aligned with `inputs`: row `k` is `x_k`, with
    /// `x_0 = x0`; the last input row is not used.
    pub fn simulate(&self, x0: &[f64], inputs: &Matrix) -> Result<Matrix> {
        let n = inputs.rows();
        if n == 0 {
            return Err(Error::invalid("simulation needs at least one sample"));
        }
        let sim = self.simulate_steps(x0, inputs, n - 1)?;
        Ok(sim)
    }

    fn simulate_steps(&self, x0: &[f64], inputs: &Matrix, steps: usize) -> Result<Matrix> {
        if inputs.cols() != self.n_u() {
            return Err(Error::invalid("input width does not match the model"));
        }
        self.fp
            .validate(x0, &vec![0.0; self.n_u()], &self.fp.theta)?;
        check_finite("inputs", inputs.as_slice())?;
        let mut out = Matrix::zeros(steps + 1, self.n_x());
        out.row_mut(0).copy_from_slice(x0);
        let mut stepper = Stepper::new(self);
        let mut next = vec![0.0; self.n_x()];
        for k in 0..steps {
            let x = out.row(k).to_vec();
            stepper.step(self, &x, inputs.row(k), &mut next);
            if diverged(&next) {
                return Err(Error::SimulationDiverged { step: k + 1 });
            }
            out.row_mut(k + 1).copy_from_slice(&next);
        }
        Ok(out)
    }
}

/// Buffers for repeated forward steps.
struct Stepper {
    z: Vec<f64>,
    raw: Vec<f64>,
    cache: ForwardCache,
}

impl Stepper {
    fn new(model: &AugmentedModel) -> Self {
        Self {
            z: vec![0.0; model.n_x() + model.n_u()],
            raw: vec![0.0; model.ann.output_dim()],
            cache: ForwardCache::new(&model.ann),
        }
    }

    fn step(&mut self, model: &AugmentedModel, x: &[f64], u: &[f64], out: &mut [f64]) {
        model
            .fp
            .dynamics()
            .step_unchecked(x, u, &model.fp.theta, out);
        model.ann_input(x, u, &mut self.z);
        model
            .ann
            .forward_cached(&self.z, &mut self.cache, &mut self.raw);
        for (r, &i) in self.raw.iter().zip(&model.augmented_states) {
            out[i] += r / model.norm.state_scale[i];
        }
    }
}
