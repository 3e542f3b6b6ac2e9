//! Single-track (bicycle) vehicle model with a linear tire model and an
//! empirical drivetrain, discretized by forward Euler.
//!
//! State `x = [p_x, p_y, φ, v_ξ, v_η, ω]`, input `u = [δ, d]` (steering
//! angle in rad, motor PWM fraction), parameters
//! `θ = [m, J_z, l_r, l_f, C_m1, C_m2, C_m3, C_r, C_f]`.

use super::{check_finite, Dual, Scalar, StateTransition};
use crate::error::Result;
use crate::linalg::Matrix;

pub const N_X: usize = 6;
pub const N_U: usize = 2;
pub const N_THETA: usize = 9;

/// Indices of the velocity states (v_ξ, v_η, ω).
pub const VELOCITY_STATES: [usize; 3] = [3, 4, 5];

/// Slip-angle denominators use `max(v_ξ, V_MIN)`.
pub const V_MIN: f64 = 0.3;

/// Width of the `tanh` used for the tangent of `sign(v_ξ)`.
pub const SIGN_WIDTH: f64 = 0.05;

/// 40 Hz sampling.
pub const SAMPLE_TIME: f64 = 0.025;

pub const PARAMETER_NAMES: [&str; N_THETA] = [
    "m", "J_z", "l_r", "l_f", "C_m1", "C_m2", "C_m3", "C_r", "C_f",
];

pub const STATE_NAMES: [&str; N_X] = ["p_x", "p_y", "phi", "v_xi", "v_eta", "omega"];
pub const INPUT_NAMES: [&str; N_U] = ["delta", "d"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTrackParams {
    pub m: f64,
    pub j_z: f64,
    pub l_r: f64,
    pub l_f: f64,
    pub c_m1: f64,
    pub c_m2: f64,
    pub c_m3: f64,
    pub c_r: f64,
    pub c_f: f64,
}

impl SingleTrackParams {
    /// Nominal values for a 1:10 scale car.
    pub const NOMINAL: SingleTrackParams = SingleTrackParams {
        m: 2.9,
        j_z: 0.08,
        l_r: 0.17,
        l_f: 0.16,
        c_m1: 45.0,
        c_m2: 4.0,
        c_m3: 0.6,
        c_r: 30.0,
        c_f: 40.0,
    };

    pub fn to_array(&self) -> [f64; N_THETA] {
        [
            self.m, self.j_z, self.l_r, self.l_f, self.c_m1, self.c_m2, self.c_m3, self.c_r,
            self.c_f,
        ]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        Self {
            m: p[0],
            j_z: p[1],
            l_r: p[2],
            l_f: p[3],
            c_m1: p[4],
            c_m2: p[5],
            c_m3: p[6],
            c_r: p[7],
            c_f: p[8],
        }
    }
}

impl Default for SingleTrackParams {
    fn default() -> Self {
        Self::NOMINAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub p_x: f64,
    pub p_y: f64,
    pub phi: f64,
    pub v_xi: f64,
    pub v_eta: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn to_array(&self) -> [f64; N_X] {
        [
            self.p_x, self.p_y, self.phi, self.v_xi, self.v_eta, self.omega,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            p_x: x[0],
            p_y: x[1],
            phi: x[2],
            v_xi: x[3],
            v_eta: x[4],
            omega: x[5],
        }
    }
}

/// Tire and drivetrain forces acting on the chassis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Forces<S> {
    /// Longitudinal drive force, applied at both axles.
    pub drive: S,
    pub rear_lateral: S,
    pub front_lateral: S,
}

/// Planar rigid-body equations of the single-track model.
#[allow(clippy::too_many_arguments)]
pub(crate) fn chassis_derivative<S: Scalar>(
    x: &[S; N_X],
    delta: S,
    forces: Forces<S>,
    m: S,
    j_z: S,
    l_r: S,
    l_f: S,
) -> [S; N_X] {
    let [_, _, phi, v_xi, v_eta, omega] = *x;
    let (s_phi, c_phi) = (phi.sin(), phi.cos());
    let (s_d, c_d) = (delta.sin(), delta.cos());
    let Forces {
        drive,
        rear_lateral,
        front_lateral,
    } = forces;
    [
        v_xi * c_phi - v_eta * s_phi,
        v_xi * s_phi + v_eta * c_phi,
        omega,
        (drive + drive * c_d - front_lateral * s_d + m * v_eta * omega) / m,
        (rear_lateral + drive * s_d + front_lateral * c_d - m * v_xi * omega) / m,
        (front_lateral * l_f * c_d + drive * l_f * s_d - rear_lateral * l_r) / j_z,
    ]
}

/// Linear-tire, empirical-drivetrain forces of the baseline model.
pub(crate) fn baseline_forces<S: Scalar>(
    x: &[S; N_X],
    u: &[S; N_U],
    p: &[S; N_THETA],
) -> Forces<S> {
    let [_, _, _, v_xi, v_eta, omega] = *x;
    let [delta, d] = *u;
    let [_, _, l_r, l_f, c_m1, c_m2, c_m3, c_r, c_f] = *p;
    let v_slip = v_xi.clamp_min(V_MIN);
    Forces {
        drive: c_m1 * d - c_m2 * v_xi - v_xi.smooth_sign(SIGN_WIDTH) * c_m3,
        rear_lateral: c_r * (-v_eta + l_r * omega) / v_slip,
        front_lateral: c_f * (delta - (v_eta + l_f * omega) / v_slip),
    }
}

fn baseline_derivative<S: Scalar>(x: &[S; N_X], u: &[S; N_U], p: &[S; N_THETA]) -> [S; N_X] {
    let forces = baseline_forces(x, u, p);
    chassis_derivative(x, u[0], forces, p[0], p[1], p[2], p[3])
}

/// Continuous-time derivative `ẋ` of the baseline single-track model.
pub fn ct_derivative(
    x: &VehicleState,
    delta: f64,
    d: f64,
    theta: &SingleTrackParams,
) -> Result<[f64; N_X]> {
    let xa = x.to_array();
    let pa = theta.to_array();
    check_finite("state", &xa)?;
    check_finite("input", &[delta, d])?;
    check_finite("theta", &pa)?;
    Ok(baseline_derivative(&xa, &[delta, d], &pa))
}

/// Forward-Euler discretized single-track model.
#[derive(Debug, Clone, Copy)]
pub struct SingleTrack {
    pub sample_time: f64,
}

impl Default for SingleTrack {
    fn default() -> Self {
        Self {
            sample_time: SAMPLE_TIME,
        }
    }
}

const N_DIR: usize = N_X + N_THETA;

impl StateTransition for SingleTrack {
    fn name(&self) -> &'static str {
        "single-track"
    }
    fn n_x(&self) -> usize {
        N_X
    }
    fn n_u(&self) -> usize {
        N_U
    }
    fn n_theta(&self) -> usize {
        N_THETA
    }
    fn sample_time(&self) -> f64 {
        self.sample_time
    }
    fn parameter_names(&self) -> Vec<&'static str> {
        PARAMETER_NAMES.to_vec()
    }

    fn step_unchecked(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]) {
        let xa: [f64; N_X] = x.try_into().expect("state length");
        let ua: [f64; N_U] = u.try_into().expect("input length");
        let pa: [f64; N_THETA] = theta.try_into().expect("theta length");
        let dx = baseline_derivative(&xa, &ua, &pa);
        for i in 0..N_X {
            out[i] = xa[i] + self.sample_time * dx[i];
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
        let xd: [Dual<N_DIR>; N_X] = std::array::from_fn(|i| Dual::variable(x[i], i));
        let pd: [Dual<N_DIR>; N_THETA] = std::array::from_fn(|j| Dual::variable(theta[j], N_X + j));
        let ud = [Dual::constant(u[0]), Dual::constant(u[1])];
        let dx = baseline_derivative(&xd, &ud, &pd);
        let h = self.sample_time;
        for i in 0..N_X {
            out[i] = x[i] + h * dx[i].v;
            for k in 0..N_X {
                jac_x[(i, k)] = h * dx[i].d[k] + if i == k { 1.0 } else { 0.0 };
            }
            for j in 0..N_THETA {
                jac_theta[(i, j)] = h * dx[i].d[N_X + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FirstPrinciplesModel;
    use crate::linalg::{finite_diff_jacobian, seeded_rng};
    use rand::Rng;
    use std::sync::Arc;

    fn model() -> FirstPrinciplesModel {
        FirstPrinciplesModel::new(
            Arc::new(SingleTrack::default()),
            SingleTrackParams::NOMINAL.to_array().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn straight_line_symmetry() {
        let p = SingleTrackParams::NOMINAL;
        let x = VehicleState {
            v_xi: 1.0,
            ..Default::default()
        };
        let dx = ct_derivative(&x, 0.0, 0.0, &p).unwrap();
        assert_eq!(dx[4], 0.0);
        assert_eq!(dx[5], 0.0);
        // drive force counts at both axles: (1 + cos 0)
        let expected = 2.0 * (-p.c_m2 * 1.0 - p.c_m3) / p.m;
        assert!((dx[3] - expected).abs() < 1e-14);
        assert_eq!((dx[0], dx[1], dx[2]), (1.0, 0.0, 0.0));
    }

    /// Hand evaluation of the equations at a generic point, written
    /// independently of the generic implementation.
    fn hand_derivative(x: [f64; 6], delta: f64, d: f64, p: &SingleTrackParams) -> [f64; 6] {
        let (phi, vx, vy, w) = (x[2], x[3], x[4], x[5]);
        let f_xi = p.c_m1 * d - p.c_m2 * vx - p.c_m3;
        let f_r = p.c_r * (-vy + p.l_r * w) / vx;
        let f_f = p.c_f * (delta - (vy + p.l_f * w) / vx);
        [
            vx * phi.cos() - vy * phi.sin(),
            vx * phi.sin() + vy * phi.cos(),
            w,
            (f_xi + f_xi * delta.cos() - f_f * delta.sin()) / p.m + vy * w,
            (f_r + f_xi * delta.sin() + f_f * delta.cos()) / p.m - vx * w,
            (f_f * p.l_f * delta.cos() + f_xi * p.l_f * delta.sin() - f_r * p.l_r) / p.j_z,
        ]
    }

    #[test]
    fn nominal_point_matches_hand_evaluation() {
        let p = SingleTrackParams::NOMINAL;
        let xa = [0.0, 0.0, 0.0, 1.5, 0.1, 0.2];
        let dx = ct_derivative(&VehicleState::from_slice(&xa), 0.05, 0.3, &p).unwrap();
        let expected = hand_derivative(xa, 0.05, 0.3, &p);
        for i in 0..6 {
            assert!(
                (dx[i] - expected[i]).abs() <= 1e-12 * expected[i].abs().max(1.0),
                "row {i}: {} vs {}",
                dx[i],
                expected[i]
            );
        }
        // Frozen values for this point (nominal parameters above).
        let frozen = [
            1.5,
            0.1,
            0.2,
            4.801843149660931,
            -1.1597393544250583,
            0.45851174433466296,
        ];
        for i in 0..6 {
            assert!((dx[i] - frozen[i]).abs() < 1e-12, "row {i}: {}", dx[i]);
        }
    }

    #[test]
    fn euler_step_arithmetic() {
        let m = model();
        let xa = [0.0, 0.0, 0.0, 1.5, 0.1, 0.2];
        let dx = hand_derivative(xa, 0.05, 0.3, &SingleTrackParams::NOMINAL);
        let next = m.dt_step(&xa, &[0.05, 0.3]).unwrap();
        for i in 0..6 {
            assert!((next[i] - (xa[i] + 0.025 * dx[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_sample_time_doubles_increment() {
        let xa = [0.3, -0.2, 0.4, 1.2, -0.05, 0.3];
        let u = [0.1, 0.2];
        let th = SingleTrackParams::NOMINAL.to_array();
        let mut a = [0.0; 6];
        let mut b = [0.0; 6];
        SingleTrack { sample_time: 0.025 }.step_unchecked(&xa, &u, &th, &mut a);
        SingleTrack { sample_time: 0.05 }.step_unchecked(&xa, &u, &th, &mut b);
        for i in 0..6 {
            assert!(((b[i] - xa[i]) - 2.0 * (a[i] - xa[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_point_is_preserved() {
        // v_xi = 0 sits on the clamp with zero drive, so every derivative vanishes.
        let m = model();
        let x = [1.0, 2.0, 0.5, 0.0, 0.0, 0.0];
        assert_eq!(m.dt_step(&x, &[0.0, 0.0]).unwrap(), x.to_vec());
    }

    #[test]
    fn c_m1_column_closed_form() {
        let m = model();
        let (delta, d) = (0.12, 0.25);
        let x = [0.5, 0.3, 0.2, 1.4, 0.05, 0.1];
        let j = m.jacobian_theta(&x, &[delta, d], &m.theta_nominal).unwrap();
        let p = SingleTrackParams::NOMINAL;
        let h = SAMPLE_TIME;
        assert!((j[(3, 4)] - h * d * (1.0 + delta.cos()) / p.m).abs() < 1e-14);
        assert!((j[(4, 4)] - h * d * delta.sin() / p.m).abs() < 1e-14);
        assert!((j[(5, 4)] - h * d * p.l_f * delta.sin() / p.j_z).abs() < 1e-14);
        let j0 = m.jacobian_theta(&x, &[0.0, d], &m.theta_nominal).unwrap();
        assert_eq!((j0[(4, 4)], j0[(5, 4)]), (0.0, 0.0));
        for row in 0..3 {
            assert!(j.row(row).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let m = model();
        let mut rng = seeded_rng(7);
        for _ in 0..10 {
            let x: Vec<f64> = vec![
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.8..3.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-2.0..2.0),
            ];
            let u = vec![rng.random_range(-0.4..0.4), rng.random_range(0.0..0.4)];
            let th: Vec<f64> = m
                .theta_nominal
                .iter()
                .map(|t| t * rng.random_range(0.8..1.2))
                .collect();
            let jt = m.jacobian_theta(&x, &u, &th).unwrap();
            let fd = finite_diff_jacobian(|p| m.dt_step_with(&x, &u, p), &th, 1e-6).unwrap();
            assert_rel_close(&jt, &fd, 1e-6);

            let mj = m.clone().with_theta(th.clone()).unwrap();
            let jx = mj.jacobian_state(&x, &u).unwrap();
            let fdx = finite_diff_jacobian(|s| mj.dt_step(s, &u), &x, 1e-6).unwrap();
            assert_rel_close(&jx, &fdx, 1e-6);
        }
    }

    fn assert_rel_close(a: &Matrix, b: &Matrix, tol: f64) {
        for j in 0..a.cols() {
            let ca = a.column(j);
            let cb = b.column(j);
            let scale = cb.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
            for (x, y) in ca.iter().zip(&cb) {
                assert!((x - y).abs() <= tol * scale, "column {j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        let x = VehicleState {
            v_xi: f64::NAN,
            ..Default::default()
        };
        assert!(ct_derivative(&x, 0.0, 0.0, &SingleTrackParams::NOMINAL).is_err());
        assert!(model().dt_step(&[0.0; 6], &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn deterministic_steps() {
        let m = model();
        let x = [0.1, 0.2, 0.3, 1.7, 0.02, -0.4];
        let a = m.dt_step(&x, &[0.2, 0.3]).unwrap();
        let b = m.dt_step(&x, &[0.2, 0.3]).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
