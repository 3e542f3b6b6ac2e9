//! Truncated-horizon prediction cost, orthogonality penalty, adjoint
//! gradients and the Adam training loop.
//!
//! A section starting at sample `s` seeds the model with the measured
//! state `y_s` and compares the predictions of steps `1..=T` with
//! `y_{s+1} … y_{s+T}`, so it spans `T + 1` samples of one segment.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::ann::{init_xavier_zero_last, BackwardScratch, ForwardCache, MlpArchitecture};
use crate::augmented::{compute_normalization_from, AugmentedModel, NormalizationSource};
use crate::data::Dataset;
use crate::dynamics::{diverged, FirstPrinciplesModel};
use crate::error::{Error, Result};
use crate::linalg::{seeded_rng, Matrix, Rng};
use crate::projection::{BasisCache, BasisMode, ProjectionBasis};

/// Which samples enter the orthogonality penalty of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyScope {
    /// All evaluation points of the basis.
    #[default]
    WholeSet,
    /// Only the samples covered by the batch's sections.
    BatchSlice,
}

impl PenaltyScope {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyScope::WholeSet => "whole-set",
            PenaltyScope::BatchSlice => "batch-slice",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [PenaltyScope::WholeSet, PenaltyScope::BatchSlice]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub basis_mode: BasisMode,
    pub penalty_scope: PenaltyScope,
    pub co_estimate_theta: bool,
    pub normalization: NormalizationSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            batch_size: 256,
            learning_rate: 1e-3,
            beta: 0.0,
            epochs: 2000,
            patience: 50,
            seed: 0,
            basis_mode: BasisMode::PrecomputedTheta0,
            penalty_scope: PenaltyScope::WholeSet,
            co_estimate_theta: true,
            normalization: NormalizationSource::MeasuredStates,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.batch_size == 0 {
            return Err(Error::invalid("horizon and batch size must be at least 1"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta must be finite and >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Start indices of length-`window` sections of a single sequence of
/// length `n`. Draws without replacement when enough starts exist.
pub fn sample_subsections(
    n: usize,
    window: usize,
    n_sec: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if window == 0 || n_sec == 0 {
        return Err(Error::invalid(
            "window and section count must be at least 1",
        ));
    }
    if n < window {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot hold a window of {window}"
        )));
    }
    let count = n - window + 1;
    if n_sec <= count {
        Ok(index::sample(rng, count, n_sec).into_vec())
    } else {
        Ok((0..n_sec).map(|_| rng.random_range(0..count)).collect())
    }
}

/// Every start whose `window` stays inside one segment.
pub fn admissible_starts(data: &Dataset, window: usize) -> Vec<usize> {
    data.segments()
        .into_iter()
        .filter(|s| s.len() >= window)
        .flat_map(|s| s.start..s.end + 1 - window)
        .collect()
}

/// Mean over `sections` of the horizon-averaged squared prediction error.
pub fn v_sec(
    model: &AugmentedModel,
    data: &Dataset,
    sections: &[usize],
    horizon: usize,
) -> Result<f64> {
    check_sections(data, sections, horizon)?;
    let mut ws = Workspace::new(model, horizon);
    let mut total = 0.0;
    for (id, &s) in sections.iter().enumerate() {
        total += section_forward(model, data, s, horizon, &mut ws, false)
            .map_err(|e| in_section(e, id, s))?;
    }
    Ok(total / sections.len() as f64)
}

/// `v_sec + β ‖Qᵀ a‖²`, with `a` the stacked network contribution at the
/// basis evaluation points. `β = 0` returns `v_sec` unchanged.
pub fn v_orth(
    model: &AugmentedModel,
    data: &Dataset,
    sections: &[usize],
    horizon: usize,
    basis: &ProjectionBasis,
    beta: f64,
) -> Result<f64> {
    let sec = v_sec(model, data, sections, horizon)?;
    if beta == 0.0 {
        return Ok(sec);
    }
    Ok(sec + beta * penalty_value(model, basis, None)?)
}

/// Penalty `‖Qᵀ a‖²` at the basis evaluation points, optionally restricted
/// to a sample mask.
pub fn penalty_value(
    model: &AugmentedModel,
    basis: &ProjectionBasis,
    mask: Option<&[bool]>,
) -> Result<f64> {
    let mut pw = PenaltyWorkspace::new(model, basis)?;
    let c = pw.coordinates(model, basis, mask)?;
    Ok(c.iter().map(|v| v * v).sum())
}

fn check_sections(data: &Dataset, sections: &[usize], horizon: usize) -> Result<()> {
    if sections.is_empty() {
        return Err(Error::invalid("no sections given"));
    }
    let segs = data.segments();
    for &s in sections {
        let ok = segs.iter().any(|r| r.contains(&s) && s + horizon < r.end);
        if !ok {
            return Err(Error::invalid(format!(
                "section at {s} does not fit a horizon of {horizon} inside one segment"
            )));
        }
    }
    Ok(())
}

fn in_section(e: Error, id: usize, start: usize) -> Error {
    match e {
        Error::SimulationDiverged { step } => Error::Numerical {
            context: format!("section {id} (start {start})"),
            detail: format!("rollout diverged at step {step}"),
        },
        other => other,
    }
}

/// Per-step buffers of one section rollout.
struct Workspace {
    states: Vec<Vec<f64>>,
    jac_x: Vec<Matrix>,
    jac_theta: Vec<Matrix>,
    caches: Vec<ForwardCache>,
    z: Vec<f64>,
    raw: Vec<f64>,
    lambda: Vec<f64>,
    tmp: Vec<f64>,
    grad_out: Vec<f64>,
    grad_z: Vec<f64>,
    scratch: BackwardScratch,
}

impl Workspace {
    fn new(model: &AugmentedModel, horizon: usize) -> Self {
        let (n_x, n_u, n_t) = (model.n_x(), model.n_u(), model.fp.n_theta());
        Self {
            states: vec![vec![0.0; n_x]; horizon + 1],
            jac_x: vec![Matrix::zeros(n_x, n_x); horizon],
            jac_theta: vec![Matrix::zeros(n_x, n_t); horizon],
            caches: (0..horizon)
                .map(|_| ForwardCache::new(&model.ann))
                .collect(),
            z: vec![0.0; n_x + n_u],
            raw: vec![0.0; model.ann.output_dim()],
            lambda: vec![0.0; n_x],
            tmp: vec![0.0; n_x],
            grad_out: vec![0.0; model.ann.output_dim()],
            grad_z: vec![0.0; n_x + n_u],
            scratch: BackwardScratch::new(&model.ann),
        }
    }
}

/// Rolls one section forward, returning its horizon-averaged squared
/// error. With `jacobians`, records what the adjoint pass needs.
fn section_forward(
    model: &AugmentedModel,
    data: &Dataset,
    start: usize,
    horizon: usize,
    ws: &mut Workspace,
    jacobians: bool,
) -> Result<f64> {
    let (u, y) = (data.inputs(), data.outputs());
    let dyn_ = model.fp.dynamics();
    let theta = &model.fp.theta;
    ws.states[0].copy_from_slice(y.row(start));
    let mut loss = 0.0;
    for j in 0..horizon {
        let k = start + j;
        let (done, rest) = ws.states.split_at_mut(j + 1);
        let (x, next) = (&done[j], &mut rest[0]);
        if jacobians {
            dyn_.step_jacobians_unchecked(
                x,
                u.row(k),
                theta,
                next,
                &mut ws.jac_x[j],
                &mut ws.jac_theta[j],
            );
        } else {
            dyn_.step_unchecked(x, u.row(k), theta, next);
        }
        model.ann_input(x, u.row(k), &mut ws.z);
        model
            .ann
            .forward_cached(&ws.z, &mut ws.caches[j], &mut ws.raw);
        for (r, &i) in ws.raw.iter().zip(model.augmented_states()) {
            next[i] += r / model.norm.state_scale[i];
        }
        if diverged(next) {
            return Err(Error::SimulationDiverged { step: j + 1 });
        }
        loss += next
            .iter()
            .zip(y.row(k + 1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(loss / horizon as f64)
}

/// Adjoint pass for the section last rolled forward by `section_forward`
/// with `jacobians = true`; `weight` scales its loss.
fn section_backward(
    model: &AugmentedModel,
    data: &Dataset,
    start: usize,
    horizon: usize,
    weight: f64,
    ws: &mut Workspace,
    grad_theta: &mut [f64],
    grad_eta: &mut [f64],
) {
    let y = data.outputs();
    let n_x = model.n_x();
    let c = 2.0 * weight / horizon as f64;
    ws.lambda.iter_mut().for_each(|v| *v = 0.0);
    for j in (0..horizon).rev() {
        // λ = ∂L/∂x̂_{j+1}
        for ((l, xh), yv) in ws
            .lambda
            .iter_mut()
            .zip(&ws.states[j + 1])
            .zip(y.row(start + j + 1))
        {
            *l += c * (xh - yv);
        }
        let jt = &ws.jac_theta[j];
        for (r, &l) in ws.lambda.iter().enumerate() {
            if l != 0.0 {
                for (g, v) in grad_theta.iter_mut().zip(jt.row(r)) {
                    *g += v * l;
                }
            }
        }
        for (g, &i) in ws.grad_out.iter_mut().zip(model.augmented_states()) {
            *g = ws.lambda[i] / model.norm.state_scale[i];
        }
        model.ann.backward(
            &ws.caches[j],
            &ws.grad_out,
            grad_eta,
            &mut ws.grad_z,
            &mut ws.scratch,
        );
        if j == 0 {
            break;
        }
        let jx = &ws.jac_x[j];
        ws.tmp.iter_mut().for_each(|v| *v = 0.0);
        for (r, &l) in ws.lambda.iter().enumerate() {
            if l != 0.0 {
                for (t, v) in ws.tmp.iter_mut().zip(jx.row(r)) {
                    *t += v * l;
                }
            }
        }
        for i in 0..n_x {
            ws.lambda[i] = ws.tmp[i] + model.norm.state_scale[i] * ws.grad_z[i];
        }
    }
}

/// Buffers for the penalty over all basis evaluation points.
struct PenaltyWorkspace {
    caches: Vec<ForwardCache>,
    raw: Vec<f64>,
    z: Vec<f64>,
    grad_out: Vec<f64>,
    grad_z: Vec<f64>,
    scratch: BackwardScratch,
}

impl PenaltyWorkspace {
    fn new(model: &AugmentedModel, basis: &ProjectionBasis) -> Result<Self> {
        let points = basis
            .points()
            .ok_or_else(|| Error::invalid("basis has no evaluation points"))?;
        if basis.stacked_len() != points.len() * model.n_x() {
            return Err(Error::Incompatible(
                "basis does not match the model dimension".into(),
            ));
        }
        let n_o = model.ann.output_dim();
        Ok(Self {
            caches: (0..points.len())
                .map(|_| ForwardCache::new(&model.ann))
                .collect(),
            raw: vec![0.0; points.len() * n_o],
            z: vec![0.0; model.n_x() + model.n_u()],
            grad_out: vec![0.0; n_o],
            grad_z: vec![0.0; model.n_x() + model.n_u()],
            scratch: BackwardScratch::new(&model.ann),
        })
    }

    /// Forward pass at every (masked) point; returns `Qᵀ a`.
    fn coordinates(
        &mut self,
        model: &AugmentedModel,
        basis: &ProjectionBasis,
        mask: Option<&[bool]>,
    ) -> Result<Vec<f64>> {
        let points = basis.points().expect("checked in new");
        let (n_x, n_o, r) = (model.n_x(), model.ann.output_dim(), basis.rank());
        let q = basis.q().as_slice();
        let mut c = vec![0.0; r];
        for k in 0..points.len() {
            if mask.is_some_and(|m| !m[k]) {
                continue;
            }
            model.ann_input(points.states.row(k), points.inputs.row(k), &mut self.z);
            let raw = &mut self.raw[k * n_o..(k + 1) * n_o];
            model.ann.forward_cached(&self.z, &mut self.caches[k], raw);
            for (m, &i) in model.augmented_states().iter().enumerate() {
                let a = raw[m] / model.norm.state_scale[i];
                let row = &q[(k * n_x + i) * r..(k * n_x + i + 1) * r];
                for (cj, qj) in c.iter_mut().zip(row) {
                    *cj += qj * a;
                }
            }
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: "orthogonality penalty".into(),
                detail: "non-finite network output".into(),
            });
        }
        Ok(c)
    }

    /// Adds `weight · ∂‖Qᵀa‖²/∂η` given `c = Qᵀ a` from `coordinates`.
    fn backward(
        &mut self,
        model: &AugmentedModel,
        basis: &ProjectionBasis,
        mask: Option<&[bool]>,
        c: &[f64],
        weight: f64,
        grad_eta: &mut [f64],
    ) {
        let points = basis.points().expect("checked in new");
        let (n_x, r) = (model.n_x(), basis.rank());
        let q = basis.q().as_slice();
        for k in 0..points.len() {
            if mask.is_some_and(|m| !m[k]) {
                continue;
            }
            for (m, &i) in model.augmented_states().iter().enumerate() {
                let row = &q[(k * n_x + i) * r..(k * n_x + i + 1) * r];
                let qc: f64 = row.iter().zip(c).map(|(a, b)| a * b).sum();
                self.grad_out[m] = 2.0 * weight * qc / model.norm.state_scale[i];
            }
            model.ann.backward(
                &self.caches[k],
                &self.grad_out,
                grad_eta,
                &mut self.grad_z,
                &mut self.scratch,
            );
        }
    }
}

/// Value and gradient of `v_sec + β‖Qᵀa‖²` with respect to `θ` and `η`.
#[derive(Debug, Clone)]
pub struct CostGradient {
    pub value: f64,
    pub v_sec: f64,
    pub penalty: f64,
    pub grad_theta: Vec<f64>,
    pub grad_eta: Vec<f64>,
}

/// Exact gradient of the batch cost. The basis is held fixed, so the
/// penalty contributes to the network gradient only.
pub fn cost_gradient(
    model: &AugmentedModel,
    data: &Dataset,
    sections: &[usize],
    horizon: usize,
    penalty: Option<(&ProjectionBasis, f64)>,
    scope: PenaltyScope,
) -> Result<CostGradient> {
    check_sections(data, sections, horizon)?;
    let mut ws = Workspace::new(model, horizon);
    let mut grad_theta = vec![0.0; model.fp.n_theta()];
    let mut grad_eta = vec![0.0; model.ann.n_params()];
    let weight = 1.0 / sections.len() as f64;
    let mut sec = 0.0;
    for (id, &s) in sections.iter().enumerate() {
        sec += section_forward(model, data, s, horizon, &mut ws, true)
            .map_err(|e| in_section(e, id, s))?;
        section_backward(
            model,
            data,
            s,
            horizon,
            weight,
            &mut ws,
            &mut grad_theta,
            &mut grad_eta,
        );
    }
    let v_sec = sec * weight;
    let mut pen = 0.0;
    let mut value = v_sec;
    if let Some((basis, beta)) = penalty.filter(|(_, b)| *b != 0.0) {
        let mask = match scope {
            PenaltyScope::WholeSet => None,
            PenaltyScope::BatchSlice => Some(section_mask(basis, sections, horizon)?),
        };
        let mut pw = PenaltyWorkspace::new(model, basis)?;
        let c = pw.coordinates(model, basis, mask.as_deref())?;
        pen = c.iter().map(|v| v * v).sum();
        pw.backward(model, basis, mask.as_deref(), &c, beta, &mut grad_eta);
        value += beta * pen;
    }
    if grad_theta.iter().chain(&grad_eta).any(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            context: "cost gradient".into(),
            detail: "non-finite gradient entry".into(),
        });
    }
    Ok(CostGradient {
        value,
        v_sec,
        penalty: pen,
        grad_theta,
        grad_eta,
    })
}

fn section_mask(basis: &ProjectionBasis, sections: &[usize], horizon: usize) -> Result<Vec<bool>> {
    let n = basis.points().map_or(0, |p| p.len());
    let mut mask = vec![false; n];
    for &s in sections {
        if s + horizon > n {
            return Err(Error::Incompatible(
                "sections exceed the basis evaluation points".into(),
            ));
        }
        mask[s..s + horizon].iter_mut().for_each(|m| *m = true);
    }
    Ok(mask)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(
                "parameter and gradient lengths must match the optimizer",
            ));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch `v_sec` over the epoch (full-set `v_sec` for epoch 0).
    pub train_loss: f64,
    pub val_loss: f64,
    /// `‖Qᵀa‖²` at the end of the epoch, without `β`.
    pub penalty: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    EpochLimit,
    EarlyStop,
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub parameter_names: Vec<String>,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,penalty");
        for n in &self.parameter_names {
            write!(s, ",theta_{n}").unwrap();
        }
        s.push('\n');
        for r in &self.records {
            write!(
                s,
                "{},{:e},{:e},{:e}",
                r.epoch, r.train_loss, r.val_loss, r.penalty
            )
            .unwrap();
            for t in &r.theta {
                write!(s, ",{t:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot.
    pub model: AugmentedModel,
    pub history: TrainHistory,
}

/// Builds the initial augmented model and trains it.
pub fn train(
    config: &TrainConfig,
    train_data: &Dataset,
    val_data: &Dataset,
    fp: &FirstPrinciplesModel,
    arch: &MlpArchitecture,
    augmented_states: &[usize],
) -> Result<TrainOutcome> {
    config.validate()?;
    arch.validate()?;
    let norm = compute_normalization_from(train_data, fp, config.normalization)?;
    let ann = init_xavier_zero_last(arch, config.seed)?;
    let model = AugmentedModel::new(fp.clone(), ann, norm, augmented_states.to_vec())?;
    train_model(config, model, train_data, val_data)
}

fn full_v_sec(
    model: &AugmentedModel,
    data: &Dataset,
    starts: &[usize],
    horizon: usize,
) -> Result<f64> {
    if starts.is_empty() {
        return Ok(f64::NAN);
    }
    v_sec(model, data, starts, horizon)
}

/// Trains `model` from its current parameters.
pub fn train_model(
    config: &TrainConfig,
    mut model: AugmentedModel,
    train_data: &Dataset,
    val_data: &Dataset,
) -> Result<TrainOutcome> {
    config.validate()?;
    let horizon = config.horizon;
    let mut starts = admissible_starts(train_data, horizon + 1);
    if starts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training segment holds {} samples",
            horizon + 1
        )));
    }
    let val_starts = admissible_starts(val_data, horizon + 1);
    let n_theta = model.fp.n_theta();
    let mut cache = BasisCache::new(config.basis_mode);
    let mut basis = cache.refresh(&model.fp, train_data)?;
    let mut rng = seeded_rng(config.seed ^ 0x005e_ed0f_5ec7);
    let n_opt = model.ann.n_params() + if config.co_estimate_theta { n_theta } else { 0 };
    let mut adam = Adam::new(n_opt, config.learning_rate);
    let mut params = vec![0.0; n_opt];
    let mut grads = vec![0.0; n_opt];

    let val_or_train = |m: &AugmentedModel| -> Result<f64> {
        if val_starts.is_empty() {
            full_v_sec(m, train_data, &starts_sorted(train_data, horizon), horizon)
        } else {
            full_v_sec(m, val_data, &val_starts, horizon)
        }
    };
    let initial_val = val_or_train(&model)?;
    let mut history = TrainHistory {
        parameter_names: model
            .fp
            .dynamics()
            .parameter_names()
            .into_iter()
            .map(String::from)
            .collect(),
        records: vec![EpochRecord {
            epoch: 0,
            train_loss: full_v_sec(
                &model,
                train_data,
                &starts_sorted(train_data, horizon),
                horizon,
            )?,
            val_loss: initial_val,
            penalty: penalty_value(&model, &basis, None)?,
            theta: model.fp.theta.clone(),
        }],
        best_epoch: 0,
        stop_reason: StopReason::EpochLimit,
    };
    let mut best = (initial_val, model.clone());
    let mut since_best = 0;

    'epochs: for epoch in 1..=config.epochs {
        starts.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in starts.chunks(config.batch_size) {
            let penalty = (config.beta != 0.0).then_some((basis.as_ref(), config.beta));
            let cg = match cost_gradient(
                &model,
                train_data,
                batch,
                horizon,
                penalty,
                config.penalty_scope,
            ) {
                Ok(cg) => cg,
                Err(e @ Error::Numerical { .. }) => {
                    history.stop_reason = StopReason::Diverged(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            loss_sum += cg.v_sec;
            batches += 1;
            pack(&model, config.co_estimate_theta, &mut params);
            let off = if config.co_estimate_theta {
                grads[..n_theta].copy_from_slice(&cg.grad_theta);
                n_theta
            } else {
                0
            };
            grads[off..].copy_from_slice(&cg.grad_eta);
            adam.step(&mut params, &grads)?;
            unpack(&mut model, config.co_estimate_theta, &params)?;
        }
        basis = match cache.refresh(&model.fp, train_data) {
            Ok(b) => b,
            Err(e) => {
                history.stop_reason = StopReason::Diverged(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        let val = match val_or_train(&model) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::Numerical { .. }) => {
                history.stop_reason =
                    StopReason::Diverged(format!("epoch {epoch}: validation loss not finite"));
                break;
            }
            Err(e) => return Err(e),
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: val,
            penalty: penalty_value(&model, &basis, None)?,
            theta: model.fp.theta.clone(),
        });
        log::debug!(
            "epoch {epoch}: train {:.4e} val {val:.4e}",
            loss_sum / batches as f64
        );
        if val < best.0 {
            best = (val, model.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        history,
    })
}

fn starts_sorted(data: &Dataset, horizon: usize) -> Vec<usize> {
    admissible_starts(data, horizon + 1)
}

fn pack(model: &AugmentedModel, with_theta: bool, out: &mut [f64]) {
    let off = if with_theta {
        out[..model.fp.n_theta()].copy_from_slice(&model.fp.theta);
        model.fp.n_theta()
    } else {
        0
    };
    out[off..].copy_from_slice(&model.ann.flatten());
}

fn unpack(model: &mut AugmentedModel, with_theta: bool, params: &[f64]) -> Result<()> {
    let off = if with_theta {
        let n = model.fp.n_theta();
        model.fp.theta.copy_from_slice(&params[..n]);
        n
    } else {
        0
    };
    model.ann.assign(&params[off..])
}

/// Contiguous sample ranges touched by `sections`.
pub fn covered_ranges(sections: &[usize], horizon: usize) -> Vec<Range<usize>> {
    let mut s: Vec<usize> = sections.to_vec();
    s.sort_unstable();
    let mut out: Vec<Range<usize>> = Vec::new();
    for start in s {
        let r = start..start + horizon + 1;
        match out.last_mut() {
            Some(last) if last.end >= r.start => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}
