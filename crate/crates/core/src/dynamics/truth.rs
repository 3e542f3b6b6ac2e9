//! Higher-fidelity "true system" used to generate identification data.
//!
//! Differs from the baseline in the ways a real car does: Magic Formula
//! tire saturation, a drivetrain with PWM nonlinearity and aerodynamic
//! drag, physical constants that differ from the nominal ones, and
//! accurate RK4 integration instead of a single Euler step.

use std::f64::consts::PI;

use rand::Rng;

use super::vehicle::{chassis_derivative, Forces, SingleTrackParams, N_U, N_X, SAMPLE_TIME, V_MIN};
use super::{check_finite, diverged};
use crate::data::{Dataset, Role};
use crate::error::{Error, Result};
use crate::linalg::{seeded_rng, Matrix, Rng as SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TireModel {
    MagicFormula,
    /// `F = B·C·D·α`, the small-slip tangent of the Magic Formula.
    Linear,
}

/// Magic Formula coefficients `F = D·sin(C·atan(B·α))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pacejka {
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Pacejka {
    pub fn cornering_stiffness(&self) -> f64 {
        self.b * self.c * self.d
    }

    fn force(&self, alpha: f64, model: TireModel) -> f64 {
        match model {
            TireModel::MagicFormula => self.d * (self.c * (self.b * alpha).atan()).sin(),
            TireModel::Linear => self.cornering_stiffness() * alpha,
        }
    }
}

/// Drivetrain of the true system:
/// `F = C_m1·d·(1 − k·d) − C_m2·v − C_m3·sign(v) − c_drag·v·|v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drivetrain {
    pub c_m1: f64,
    pub c_m2: f64,
    pub c_m3: f64,
    pub pwm_saturation: f64,
    pub drag: f64,
}

impl Drivetrain {
    fn force(&self, d: f64, v: f64) -> f64 {
        self.c_m1 * d * (1.0 - self.pwm_saturation * d)
            - self.c_m2 * v
            - v.signum() * if v == 0.0 { 0.0 } else { self.c_m3 }
            - self.drag * v * v.abs()
    }

    /// PWM that balances the drive force at forward speed `v`.
    pub fn steady_pwm(&self, v: f64) -> f64 {
        let load = self.c_m2 * v + self.c_m3 + self.drag * v * v;
        let (a, b) = (self.c_m1 * self.pwm_saturation, self.c_m1);
        if a.abs() < 1e-12 {
            return load / b;
        }
        // a·d² − b·d + load = 0, smaller root
        let disc = (b * b - 4.0 * a * load).max(0.0);
        (b - disc.sqrt()) / (2.0 * a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthConfig {
    pub tire: TireModel,
    pub front: Pacejka,
    pub rear: Pacejka,
    pub drivetrain: Drivetrain,
    pub mass: f64,
    pub j_z: f64,
    pub l_r: f64,
    pub l_f: f64,
    pub substeps: usize,
    pub sample_time: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            tire: TireModel::MagicFormula,
            front: Pacejka {
                b: 3.5,
                c: 1.4,
                d: 9.0,
            },
            rear: Pacejka {
                b: 2.4,
                c: 1.4,
                d: 10.5,
            },
            drivetrain: Drivetrain {
                c_m1: 47.0,
                c_m2: 3.6,
                c_m3: 0.7,
                pwm_saturation: 0.2,
                drag: 0.35,
            },
            mass: 3.1,
            j_z: 0.09,
            l_r: 0.165,
            l_f: 0.165,
            substeps: 10,
            sample_time: SAMPLE_TIME,
        }
    }
}

impl TruthConfig {
    /// Baseline-structured parameters closest to this system
    /// (Magic Formula slopes as cornering stiffness).
    pub fn equivalent_params(&self) -> SingleTrackParams {
        SingleTrackParams {
            m: self.mass,
            j_z: self.j_z,
            l_r: self.l_r,
            l_f: self.l_f,
            c_m1: self.drivetrain.c_m1,
            c_m2: self.drivetrain.c_m2,
            c_m3: self.drivetrain.c_m3,
            c_r: self.rear.cornering_stiffness(),
            c_f: self.front.cornering_stiffness(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::invalid("truth substeps must be >= 1"));
        }
        if !(self.front.d > 0.0 && self.rear.d > 0.0) {
            return Err(Error::invalid("Magic Formula peak D must be positive"));
        }
        if !(self.sample_time > 0.0 && self.mass > 0.0 && self.j_z > 0.0) {
            return Err(Error::invalid(
                "sample time, mass and inertia must be positive",
            ));
        }
        Ok(())
    }

    fn derivative(&self, x: &[f64; N_X], u: &[f64; N_U]) -> [f64; N_X] {
        let [_, _, _, v_xi, v_eta, omega] = *x;
        let [delta, d] = *u;
        let v_slip = v_xi.max(V_MIN);
        let alpha_r = (-v_eta + self.l_r * omega) / v_slip;
        let alpha_f = delta - (v_eta + self.l_f * omega) / v_slip;
        let forces = Forces {
            drive: self.drivetrain.force(d, v_xi),
            rear_lateral: self.rear.force(alpha_r, self.tire),
            front_lateral: self.front.force(alpha_f, self.tire),
        };
        chassis_derivative(x, delta, forces, self.mass, self.j_z, self.l_r, self.l_f)
    }

    fn rk4(&self, x: &[f64; N_X], u: &[f64; N_U], h: f64) -> [f64; N_X] {
        let add = |a: &[f64; N_X], k: &[f64; N_X], s: f64| -> [f64; N_X] {
            std::array::from_fn(|i| a[i] + s * k[i])
        };
        let k1 = self.derivative(x, u);
        let k2 = self.derivative(&add(x, &k1, h / 2.0), u);
        let k3 = self.derivative(&add(x, &k2, h / 2.0), u);
        let k4 = self.derivative(&add(x, &k3, h), u);
        std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }
}

/// Simulates the true system under zero-order-hold inputs.
///
/// `inputs` is `N × 2`; the returned dataset holds `N` samples with
/// `x_0 = x0` and outputs equal to the noise-free states.
pub fn simulate_truth(config: &TruthConfig, inputs: &Matrix, x0: &[f64]) -> Result<Dataset> {
    config.validate()?;
    if inputs.cols() != N_U {
        return Err(Error::invalid(format!("excitation needs {N_U} columns")));
    }
    if inputs.rows() < 2 {
        return Err(Error::InsufficientData(
            "excitation must have at least 2 samples".into(),
        ));
    }
    if x0.len() != N_X {
        return Err(Error::invalid("initial state must have 6 entries"));
    }
    check_finite("excitation", inputs.as_slice())?;
    check_finite("initial state", x0)?;

    let n = inputs.rows();
    let h = config.sample_time / config.substeps as f64;
    let mut states = Matrix::zeros(n, N_X);
    let mut x: [f64; N_X] = x0.try_into().expect("length checked");
    for k in 0..n {
        states.row_mut(k).copy_from_slice(&x);
        if k + 1 == n {
            break;
        }
        let u: [f64; N_U] = inputs.row(k).try_into().expect("two inputs");
        for _ in 0..config.substeps {
            x = config.rk4(&x, &u, h);
        }
        if diverged(&x) {
            return Err(Error::SimulationDiverged { step: k + 1 });
        }
    }
    Dataset::new(
        config.sample_time,
        inputs.clone(),
        states.clone(),
        Some(states),
        vec![0],
        Role::Train,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Zero-mean oscillating steering (figure-eight like paths).
    Lemniscate,
    /// Steering offset plus small perturbations (circling paths).
    Circle,
}

/// Open-loop excitation for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    pub path: PathKind,
    pub speed: f64,
    pub len: usize,
    pub seed: u64,
}

/// Multisine steering plus PWM steps around the steady-state PWM of
/// `spec.speed` on the given drivetrain.
pub fn excitation(spec: &ExcitationSpec, drivetrain: &Drivetrain, sample_time: f64) -> Matrix {
    let mut rng: SimRng = seeded_rng(spec.seed);
    let amp = (1.8 / (spec.speed * spec.speed)).min(0.3);
    let (base_freq, offset) = match spec.path {
        PathKind::Lemniscate => (rng.random_range(0.15..0.25), 0.0),
        PathKind::Circle => (
            0.0,
            0.7 * amp * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        ),
    };
    let harmonics: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.3..1.5),
                rng.random_range(0.0..2.0 * PI),
                0.15 * amp,
            )
        })
        .collect();
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let d_ss = drivetrain.steady_pwm(spec.speed);
    let hold = (2.0 / sample_time).round() as usize;
    let pwm_phase = rng.random_range(0.0..2.0 * PI);

    let mut u = Matrix::zeros(spec.len, N_U);
    let mut level = 0.0;
    for k in 0..spec.len {
        let t = k as f64 * sample_time;
        let mut delta = offset;
        if base_freq > 0.0 {
            delta += amp * (2.0 * PI * base_freq * t + phase0).sin();
        }
        for (f, ph, a) in &harmonics {
            delta += a * (2.0 * PI * f * t + ph).sin();
        }
        if k % hold == 0 {
            level = rng.random_range(-1.0..1.0);
        }
        let d = d_ss * (1.0 + 0.15 * level) + 0.01 * (2.0 * PI * 0.7 * t + pwm_phase).sin();
        u[(k, 0)] = delta.clamp(-0.4, 0.4);
        u[(k, 1)] = d.clamp(0.0, 1.0);
    }
    u
}

/// Data-collection protocol: two path types at several speed levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub speeds: Vec<f64>,
    pub total_samples: usize,
    pub seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            speeds: (0..12).map(|i| 1.0 + 0.2 * i as f64).collect(),
            total_samples: 15985,
            seed: 42,
        }
    }
}

impl Protocol {
    /// One excitation per (path, speed), lengths summing to `total_samples`.
    pub fn excitations(&self) -> Vec<ExcitationSpec> {
        let count = 2 * self.speeds.len();
        let base = self.total_samples / count;
        let extra = self.total_samples % count;
        let mut specs = Vec::with_capacity(count);
        for (path_idx, path) in [PathKind::Lemniscate, PathKind::Circle]
            .into_iter()
            .enumerate()
        {
            for (i, &speed) in self.speeds.iter().enumerate() {
                let idx = path_idx * self.speeds.len() + i;
                specs.push(ExcitationSpec {
                    path,
                    speed,
                    len: base + usize::from(idx >= count - extra),
                    seed: self.seed.wrapping_mul(1000).wrapping_add(idx as u64),
                });
            }
        }
        specs
    }
}

/// Simulates every trajectory of the protocol. Each trajectory starts
/// at the origin moving at its reference speed.
pub fn simulate_protocol(
    config: &TruthConfig,
    protocol: &Protocol,
) -> Result<Vec<(ExcitationSpec, Dataset)>> {
    protocol
        .excitations()
        .into_iter()
        .map(|spec| {
            let u = excitation(&spec, &config.drivetrain, config.sample_time);
            let x0 = [0.0, 0.0, 0.0, spec.speed, 0.0, 0.0];
            simulate_truth(config, &u, &x0).map(|d| (spec, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(a: &[f64]) -> f64 {
        (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn coasting_from_rest_stays_on_axis() {
        let cfg = TruthConfig::default();
        let u = Matrix::zeros(200, 2);
        let ds = simulate_truth(&cfg, &u, &[0.0, 0.0, 0.0, 1.5, 0.0, 0.0]).unwrap();
        let x = ds.states().unwrap();
        for k in 1..200 {
            assert_eq!(x[(k, 1)], 0.0);
            assert!(x[(k, 3)] <= x[(k - 1, 3)]);
        }
        assert!(x[(199, 3)] < 0.5);
        let rest = simulate_truth(&cfg, &Matrix::zeros(20, 2), &[0.0; 6]).unwrap();
        assert!(rest.outputs().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn small_slip_matches_linear_tires() {
        let mf = TruthConfig::default();
        let lin = TruthConfig {
            tire: TireModel::Linear,
            ..mf.clone()
        };
        let mut u = Matrix::zeros(400, 2);
        let d_ss = mf.drivetrain.steady_pwm(1.5);
        for k in 0..400 {
            let t = k as f64 * SAMPLE_TIME;
            u[(k, 0)] = 0.02 * (2.0 * PI * 0.4 * t).sin();
            u[(k, 1)] = d_ss;
        }
        let x0 = [0.0, 0.0, 0.0, 1.5, 0.0, 0.0];
        let a = simulate_truth(&mf, &u, &x0).unwrap();
        let b = simulate_truth(&lin, &u, &x0).unwrap();
        for ch in 0..N_X {
            let ya = a.outputs().column(ch);
            let yb = b.outputs().column(ch);
            let diff: Vec<f64> = ya.iter().zip(&yb).map(|(p, q)| p - q).collect();
            let scale = rms(&yb);
            if scale > 1e-9 {
                assert!(
                    rms(&diff) <= 0.02 * scale,
                    "channel {ch}: {} vs {}",
                    rms(&diff),
                    scale
                );
            }
        }
    }

    #[test]
    fn protocol_sample_count() {
        let p = Protocol::default();
        let specs = p.excitations();
        assert_eq!(specs.len(), 24);
        assert_eq!(specs.iter().map(|s| s.len).sum::<usize>(), 15985);
    }

    #[test]
    fn steady_pwm_balances_drive() {
        let dt = TruthConfig::default().drivetrain;
        for v in [1.0, 2.0, 3.2] {
            let d = dt.steady_pwm(v);
            assert!(dt.force(d, v).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TruthConfig {
            j_z: 1e-9,
            substeps: 1,
            ..TruthConfig::default()
        };
        let mut u = Matrix::zeros(50, 2);
        for k in 0..50 {
            u[(k, 0)] = 0.3;
            u[(k, 1)] = 0.3;
        }
        let err = simulate_truth(&cfg, &u, &[0.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TruthConfig {
            substeps: 0,
            ..TruthConfig::default()
        };
        assert!(simulate_truth(&cfg, &Matrix::zeros(5, 2), &[0.0; 6]).is_err());
        assert!(simulate_truth(&TruthConfig::default(), &Matrix::zeros(1, 2), &[0.0; 6]).is_err());
    }
}
