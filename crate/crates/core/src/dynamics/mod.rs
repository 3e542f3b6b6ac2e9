//! First-principles baseline models.
//!
//! A model family implements [`StateTransition`]: a discrete-time update
//! `x⁺ = f_θ(x, u)` together with its Jacobians in `x` and `θ`. The output
//! map is the identity (all states are measured). [`FirstPrinciplesModel`]
//! binds a family to a current and a nominal parameter vector.

mod dual;
pub mod toy;
pub mod truth;
pub mod vehicle;

use std::fmt;
use std::sync::Arc;

pub use dual::{Dual, Scalar};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A discrete-time, parameterized state transition.
pub trait StateTransition: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_theta(&self) -> usize;
    fn sample_time(&self) -> f64;
    fn parameter_names(&self) -> Vec<&'static str>;

    /// Writes `f_θ(x, u)` into `out`. Inputs are assumed validated.
    fn step_unchecked(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]);

    /// Writes `f_θ(x, u)` into `out`, `∂f/∂x` into `jac_x` (n_x × n_x) and
    /// `∂f/∂θ` into `jac_theta` (n_x × n_θ).
    fn step_jacobians_unchecked(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &[f64],
        out: &mut [f64],
        jac_x: &mut Matrix,
        jac_theta: &mut Matrix,
    );
}

/// Looks up a baseline family by its [`StateTransition::name`].
pub fn family(name: &str, sample_time: f64) -> Result<Arc<dyn StateTransition>> {
    let dynamics: Arc<dyn StateTransition> = match name {
        "single-track" => Arc::new(vehicle::SingleTrack { sample_time }),
        "scalar-linear" => Arc::new(toy::ScalarLinear { input_gain: false }),
        "scalar-linear-input" => Arc::new(toy::ScalarLinear { input_gain: true }),
        _ => {
            return Err(Error::Incompatible(format!(
                "unknown model family `{name}`"
            )))
        }
    };
    if dynamics.sample_time() != sample_time {
        return Err(Error::Incompatible(format!(
            "family `{name}` has sample time {}, artifact says {sample_time}",
            dynamics.sample_time()
        )));
    }
    Ok(dynamics)
}

/// Baseline model: a [`StateTransition`] family plus its parameters.
#[derive(Debug, Clone)]
pub struct FirstPrinciplesModel {
    dynamics: Arc<dyn StateTransition>,
    pub theta: Vec<f64>,
    pub theta_nominal: Vec<f64>,
}

impl PartialEq for FirstPrinciplesModel {
    fn eq(&self, other: &Self) -> bool {
        self.dynamics.name() == other.dynamics.name()
            && self.sample_time() == other.sample_time()
            && self.theta == other.theta
            && self.theta_nominal == other.theta_nominal
    }
}

impl FirstPrinciplesModel {
    /// Creates a model with `theta = theta_nominal`.
    pub fn new(dynamics: Arc<dyn StateTransition>, theta_nominal: Vec<f64>) -> Result<Self> {
        if dynamics.n_theta() == 0 {
            return Err(Error::invalid("model needs at least one parameter"));
        }
        if !(dynamics.sample_time() > 0.0) {
            return Err(Error::invalid("sample time must be positive"));
        }
        check_len("theta_nominal", &theta_nominal, dynamics.n_theta())?;
        check_finite("theta_nominal", &theta_nominal)?;
        Ok(Self {
            dynamics,
            theta: theta_nominal.clone(),
            theta_nominal,
        })
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        check_len("theta", &theta, self.n_theta())?;
        check_finite("theta", &theta)?;
        self.theta = theta;
        Ok(self)
    }

    pub fn dynamics(&self) -> &Arc<dyn StateTransition> {
        &self.dynamics
    }

    pub fn n_x(&self) -> usize {
        self.dynamics.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.dynamics.n_u()
    }

    pub fn n_theta(&self) -> usize {
        self.dynamics.n_theta()
    }

    pub fn sample_time(&self) -> f64 {
        self.dynamics.sample_time()
    }

    /// One step with the model's current parameters.
    pub fn dt_step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.dt_step_with(x, u, &self.theta)
    }

    pub fn dt_step_with(&self, x: &[f64], u: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.validate(x, u, theta)?;
        let mut out = vec![0.0; self.n_x()];
        self.dynamics.step_unchecked(x, u, theta, &mut out);
        Ok(out)
    }

    /// `∂f_θ(x, u)/∂θ` evaluated at `theta_bar`.
    pub fn jacobian_theta(&self, x: &[f64], u: &[f64], theta_bar: &[f64]) -> Result<Matrix> {
        self.validate(x, u, theta_bar)?;
        let (nx, nt) = (self.n_x(), self.n_theta());
        let mut out = vec![0.0; nx];
        let mut jx = Matrix::zeros(nx, nx);
        let mut jt = Matrix::zeros(nx, nt);
        self.dynamics
            .step_jacobians_unchecked(x, u, theta_bar, &mut out, &mut jx, &mut jt);
        Ok(jt)
    }

    /// `∂f_θ(x, u)/∂x` at the model's current parameters.
    pub fn jacobian_state(&self, x: &[f64], u: &[f64]) -> Result<Matrix> {
        self.validate(x, u, &self.theta)?;
        let (nx, nt) = (self.n_x(), self.n_theta());
        let mut out = vec![0.0; nx];
        let mut jx = Matrix::zeros(nx, nx);
        let mut jt = Matrix::zeros(nx, nt);
        self.dynamics
            .step_jacobians_unchecked(x, u, &self.theta, &mut out, &mut jx, &mut jt);
        Ok(jx)
    }

    pub(crate) fn validate(&self, x: &[f64], u: &[f64], theta: &[f64]) -> Result<()> {
        check_len("state", x, self.n_x())?;
        check_len("input", u, self.n_u())?;
        check_len("theta", theta, self.n_theta())?;
        check_finite("state", x)?;
        check_finite("input", u)?;
        check_finite("theta", theta)
    }
}

pub(crate) fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::invalid(format!(
            "{what}: expected length {expected}, got {}",
            v.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what}[{i}] is not finite")));
    }
    Ok(())
}

/// Magnitude beyond which a simulated state counts as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e6;

pub(crate) fn diverged(x: &[f64]) -> bool {
    x.iter()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD)
}
