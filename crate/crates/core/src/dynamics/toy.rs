//! Scalar linear-in-parameter model `x⁺ = θ·x (+ u)`.

use super::StateTransition;
use crate::linalg::Matrix;

/// `x⁺ = θ·x`, or `x⁺ = θ·x + u` when `input_gain` is set.
#[derive(Debug, Clone, Copy)]
pub struct ScalarLinear {
    pub input_gain: bool,
}

impl ScalarLinear {
    /// Regressor row `φ(x, u)` such that `f_θ = φ·θ + offset`.
    pub fn regressor(x: f64) -> f64 {
        x
    }
}

impl StateTransition for ScalarLinear {
    fn name(&self) -> &'static str {
        if self.input_gain {
            "scalar-linear-input"
        } else {
            "scalar-linear"
        }
    }
    fn n_x(&self) -> usize {
        1
    }
    fn n_u(&self) -> usize {
        1
    }
    fn n_theta(&self) -> usize {
        1
    }
    fn sample_time(&self) -> f64 {
        1.0
    }
    fn parameter_names(&self) -> Vec<&'static str> {
        vec!["theta"]
    }

    fn step_unchecked(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = theta[0] * x[0];
        if self.input_gain {
            out[0] += u[0];
        }
    }

    fn step_jacobians_unchecked(
        &self,
        x: &[f64],
        u: &[f64],
        theta: &[f64],
        out: &mut [f64],
        jac_x: &mut Matrix,
        jac_theta: &mut Matrix,
    ) {
        self.step_unchecked(x, u, theta, out);
        jac_x[(0, 0)] = theta[0];
        jac_theta[(0, 0)] = x[0];
    }
}
