//! Baseline response subspace and the orthogonality penalty.
//!
//! The regressor stacks, sample-major, how the baseline one-step map
//! responds to its parameters: row `k·n_x + i` belongs to state `i` at
//! sample `k`. For nonlinear parametrizations it is the first-order Taylor
//! expansion around `θ̄` with the offset `f_θ̄ − J_θ θ̄` as an extra column.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::augmented::{simulate_fp, AugmentedModel};
use crate::data::Dataset;
use crate::dynamics::FirstPrinciplesModel;
use crate::error::{Error, Result};
use crate::linalg::{dot, reduced_svd, Matrix, DEFAULT_RANK_TOL};

/// Relative tolerance for accepting a model as linear in its parameters.
const LINEARITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisSource {
    Linear,
    Taylor {
        theta_bar: Vec<f64>,
    },
    /// Built directly from a caller-supplied regressor.
    Regressor,
}

/// States and inputs at which the regressor was evaluated; the network
/// contribution is evaluated at the same points for the penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPoints {
    pub states: Matrix,
    pub inputs: Matrix,
}

impl EvaluationPoints {
    pub fn new(states: Matrix, inputs: Matrix) -> Result<Self> {
        if states.rows() != inputs.rows() {
            return Err(Error::invalid("states and inputs differ in length"));
        }
        Ok(Self { states, inputs })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Self::new(data.outputs().clone(), data.inputs().clone())
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fingerprint(&self, state: &mut DefaultHasher) {
        for v in self.states.as_slice().iter().chain(self.inputs.as_slice()) {
            v.to_bits().hash(state);
        }
    }
}

/// Orthonormal basis `Q` of the regressor's column space.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    q: Matrix,
    sigma: Vec<f64>,
    pub source: BasisSource,
    points: Option<EvaluationPoints>,
    fingerprint: u64,
}

impl ProjectionBasis {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.q.cols()
    }

    /// Length of the stacked vectors the basis acts on.
    pub fn stacked_len(&self) -> usize {
        self.q.rows()
    }

    pub fn points(&self) -> Option<&EvaluationPoints> {
        self.points.as_ref()
    }

    /// Hash of the evaluation points and source.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `Qᵀ a`
    pub fn coordinates(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.q.rows() {
            return Err(Error::invalid(format!(
                "stacked vector has length {}, basis expects {}",
                a.len(),
                self.q.rows()
            )));
        }
        let r = self.rank();
        let mut c = vec![0.0; r];
        for (row, &ai) in self.q.as_slice().chunks_exact(r.max(1)).zip(a) {
            if ai != 0.0 {
                for (cj, qj) in c.iter_mut().zip(row) {
                    *cj += qj * ai;
                }
            }
        }
        Ok(c)
    }

    /// `Q c`
    pub fn expand(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.q.matvec(c)
    }

    /// `Π a = Q Qᵀ a`
    pub fn project(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.expand(&self.coordinates(a)?)
    }
}

fn check_points(
    fp: &FirstPrinciplesModel,
    states: &Matrix,
    inputs: &Matrix,
    cols: usize,
) -> Result<()> {
    if states.cols() != fp.n_x() || inputs.cols() != fp.n_u() || states.rows() != inputs.rows() {
        return Err(Error::invalid(
            "state/input matrices do not match the model",
        ));
    }
    if !states.is_finite() || !inputs.is_finite() {
        return Err(Error::invalid("state/input matrices must be finite"));
    }
    if states.rows() * fp.n_x() <= cols {
        return Err(Error::InsufficientData(format!(
            "regressor needs more than {cols} stacked rows, got {}",
            states.rows() * fp.n_x()
        )));
    }
    Ok(())
}

/// Writes the stacked parameter Jacobians into the first `n_theta`
/// columns and, if `offset`, the Taylor offset into the last one.
fn stacked_jacobians(
    fp: &FirstPrinciplesModel,
    states: &Matrix,
    inputs: &Matrix,
    theta: &[f64],
    offset: bool,
) -> Result<(Matrix, Vec<f64>)> {
    let (n_x, n_t) = (fp.n_x(), fp.n_theta());
    let cols = n_t + usize::from(offset);
    let mut reg = Matrix::zeros(states.rows() * n_x, cols);
    let mut residual = vec![0.0; states.rows() * n_x];
    let mut next = vec![0.0; n_x];
    let mut jx = Matrix::zeros(n_x, n_x);
    let mut jt = Matrix::zeros(n_x, n_t);
    for k in 0..states.rows() {
        fp.dynamics().step_jacobians_unchecked(
            states.row(k),
            inputs.row(k),
            theta,
            &mut next,
            &mut jx,
            &mut jt,
        );
        for i in 0..n_x {
            let row = reg.row_mut(k * n_x + i);
            row[..n_t].copy_from_slice(jt.row(i));
            let gamma = next[i] - dot(jt.row(i), theta);
            if offset {
                row[n_t] = gamma;
            }
            residual[k * n_x + i] = gamma;
        }
    }
    if !reg.is_finite() {
        return Err(Error::Numerical {
            context: "regressor".into(),
            detail: "non-finite Jacobian entry".into(),
        });
    }
    Ok((reg, residual))
}

/// Regressor of a model that is linear in its parameters,
/// `f_θ(x, u) = φ(x, u) θ`.
pub fn build_regressor_linear(
    fp: &FirstPrinciplesModel,
    states: &Matrix,
    inputs: &Matrix,
) -> Result<Matrix> {
    check_points(fp, states, inputs, fp.n_theta())?;
    let (reg, residual) = stacked_jacobians(fp, states, inputs, &fp.theta, false)?;
    let scale = reg.frobenius_norm() * fp.theta.iter().map(|t| t.abs()).fold(1.0, f64::max);
    let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > LINEARITY_TOL * scale.max(1.0) {
        return Err(Error::Incompatible(format!(
            "{} is not linear in its parameters (offset {worst:.3e})",
            fp.dynamics().name()
        )));
    }
    Ok(reg)
}

/// `[J_θ̄ | f_θ̄ − J_θ̄ θ̄]`, stacked over the samples.
pub fn build_regressor_taylor(
    fp: &FirstPrinciplesModel,
    states: &Matrix,
    inputs: &Matrix,
    theta_bar: &[f64],
) -> Result<Matrix> {
    if theta_bar.len() != fp.n_theta() || theta_bar.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid(
            "theta_bar must be finite with n_theta entries",
        ));
    }
    check_points(fp, states, inputs, fp.n_theta() + 1)?;
    Ok(stacked_jacobians(fp, states, inputs, theta_bar, true)?.0)
}

/// Orthonormal basis of the column space of `regressor`.
pub fn basis(regressor: &Matrix, rank_tol: f64) -> Result<ProjectionBasis> {
    let svd = reduced_svd(regressor, rank_tol)?;
    let mut h = DefaultHasher::new();
    for v in regressor.as_slice() {
        v.to_bits().hash(&mut h);
    }
    Ok(ProjectionBasis {
        q: svd.q,
        sigma: svd.sigma,
        source: BasisSource::Regressor,
        points: None,
        fingerprint: h.finish(),
    })
}

fn with_points(
    mut b: ProjectionBasis,
    source: BasisSource,
    points: EvaluationPoints,
) -> ProjectionBasis {
    let mut h = DefaultHasher::new();
    points.fingerprint(&mut h);
    if let BasisSource::Taylor { theta_bar } = &source {
        theta_bar.iter().for_each(|t| t.to_bits().hash(&mut h));
    }
    b.fingerprint = h.finish();
    b.source = source;
    b.points = Some(points);
    b
}

pub fn linear_basis(
    fp: &FirstPrinciplesModel,
    points: EvaluationPoints,
    rank_tol: f64,
) -> Result<ProjectionBasis> {
    let reg = build_regressor_linear(fp, &points.states, &points.inputs)?;
    Ok(with_points(
        basis(&reg, rank_tol)?,
        BasisSource::Linear,
        points,
    ))
}

pub fn taylor_basis(
    fp: &FirstPrinciplesModel,
    points: EvaluationPoints,
    theta_bar: &[f64],
    rank_tol: f64,
) -> Result<ProjectionBasis> {
    let reg = build_regressor_taylor(fp, &points.states, &points.inputs, theta_bar)?;
    let source = BasisSource::Taylor {
        theta_bar: theta_bar.to_vec(),
    };
    Ok(with_points(basis(&reg, rank_tol)?, source, points))
}

/// `‖Qᵀ a‖²`
pub fn orth_penalty(basis: &ProjectionBasis, ann_out: &[f64]) -> Result<f64> {
    let c = basis.coordinates(ann_out)?;
    Ok(dot(&c, &c))
}

/// De-normalized network contributions at every evaluation point,
/// stacked sample-major (length `N·n_x`).
pub fn stacked_ann_output(model: &AugmentedModel, points: &EvaluationPoints) -> Result<Vec<f64>> {
    let n_x = model.n_x();
    let mut out = Vec::with_capacity(points.len() * n_x);
    for k in 0..points.len() {
        out.extend(model.ann_contribution(points.states.row(k), points.inputs.row(k))?);
    }
    Ok(out)
}

/// When and where the basis is (re)built during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisMode {
    /// Once, at the nominal parameters and measured states.
    #[default]
    PrecomputedTheta0,
    /// Every epoch at the current parameter estimate, measured states.
    PerEpochThetaHat,
    /// Every epoch at the current estimate, with states from a free-run
    /// baseline simulation of the training data.
    PerEpochSimulatedStates,
}

impl BasisMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BasisMode::PrecomputedTheta0 => "precomputed-theta0",
            BasisMode::PerEpochThetaHat => "per-epoch-theta-hat",
            BasisMode::PerEpochSimulatedStates => "per-epoch-simulated-states",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            BasisMode::PrecomputedTheta0,
            BasisMode::PerEpochThetaHat,
            BasisMode::PerEpochSimulatedStates,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }
}

/// Holds the current basis and rebuilds it according to a [`BasisMode`].
#[derive(Debug, Clone)]
pub struct BasisCache {
    mode: BasisMode,
    rank_tol: f64,
    current: Option<Arc<ProjectionBasis>>,
}

impl BasisCache {
    pub fn new(mode: BasisMode) -> Self {
        Self {
            mode,
            rank_tol: DEFAULT_RANK_TOL,
            current: None,
        }
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn current(&self) -> Option<&Arc<ProjectionBasis>> {
        self.current.as_ref()
    }

    /// Basis for the baseline `fp` (at its current `theta`) on `data`.
    pub fn refresh(
        &mut self,
        fp: &FirstPrinciplesModel,
        data: &Dataset,
    ) -> Result<Arc<ProjectionBasis>> {
        let (theta_bar, points) = match self.mode {
            BasisMode::PrecomputedTheta0 => {
                if let Some(b) = &self.current {
                    return Ok(b.clone());
                }
                (
                    fp.theta_nominal.clone(),
                    EvaluationPoints::from_dataset(data)?,
                )
            }
            BasisMode::PerEpochThetaHat => {
                if let Some(b) = &self.current {
                    if matches!(&b.source, BasisSource::Taylor { theta_bar } if *theta_bar == fp.theta)
                    {
                        return Ok(b.clone());
                    }
                }
                (fp.theta.clone(), EvaluationPoints::from_dataset(data)?)
            }
            BasisMode::PerEpochSimulatedStates => {
                let states = simulate_fp(fp, data)?;
                (
                    fp.theta.clone(),
                    EvaluationPoints::new(states, data.inputs().clone())?,
                )
            }
        };
        let b = Arc::new(taylor_basis(fp, points, &theta_bar, self.rank_tol)?);
        self.current = Some(b.clone());
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::toy::ScalarLinear;
    use crate::dynamics::vehicle::{SingleTrack, SingleTrackParams};
    use crate::linalg::{finite_diff_jacobian, seeded_rng};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn toy(theta: f64, input_gain: bool) -> FirstPrinciplesModel {
        FirstPrinciplesModel::new(Arc::new(ScalarLinear { input_gain }), vec![theta]).unwrap()
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn vehicle_points(n: usize, seed: u64) -> EvaluationPoints {
        let mut rng = seeded_rng(seed);
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for _ in 0..n {
            xs.extend([
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.8..3.5),
                rng.random_range(-0.4..0.4),
                rng.random_range(-2.0..2.0),
            ]);
            us.extend([rng.random_range(-0.35..0.35), rng.random_range(0.05..0.5)]);
        }
        EvaluationPoints::new(
            Matrix::from_vec(n, 6, xs).unwrap(),
            Matrix::from_vec(n, 2, us).unwrap(),
        )
        .unwrap()
    }

    fn vehicle() -> FirstPrinciplesModel {
        FirstPrinciplesModel::new(
            Arc::new(SingleTrack::default()),
            SingleTrackParams::NOMINAL.to_array().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_linear_regressor_is_the_state_sequence() {
        let x = [0.5, -1.0, 2.0];
        let reg =
            build_regressor_linear(&toy(0.7, false), &column(&x), &column(&[0.0; 3])).unwrap();
        assert_eq!(reg.as_slice(), &x);
    }

    #[test]
    fn linear_builder_rejects_affine_offset() {
        // θx + u has a parameter-free offset
        let r = build_regressor_linear(&toy(0.7, true), &column(&[1.0, 2.0]), &column(&[1.0, 1.0]));
        assert!(matches!(r, Err(Error::Incompatible(_))));
    }

    #[test]
    fn too_few_rows_is_insufficient_data() {
        let r = build_regressor_taylor(
            &toy(0.7, false),
            &column(&[1.0, 2.0]),
            &column(&[0.0, 0.0]),
            &[0.7],
        );
        assert!(matches!(r, Err(Error::InsufficientData(_))));
        let r = build_regressor_linear(&toy(0.7, false), &column(&[1.0]), &column(&[0.0]));
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn taylor_of_linear_model_has_zero_offset_column() {
        let x = random_vec(20, 1);
        let u = random_vec(20, 2);
        let fp = toy(0.7, false);
        let lin = build_regressor_linear(&fp, &column(&x), &column(&u)).unwrap();
        let tay = build_regressor_taylor(&fp, &column(&x), &column(&u), &[0.3]).unwrap();
        assert_eq!(tay.column(0), lin.column(0));
        assert!(tay.column(1).iter().all(|v| *v == 0.0));
        let b = basis(&tay, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank(), 1);
    }

    #[test]
    fn taylor_offset_of_affine_toy_is_the_input() {
        let x = random_vec(10, 3);
        let u = random_vec(10, 4);
        let tay =
            build_regressor_taylor(&toy(0.6, true), &column(&x), &column(&u), &[0.6]).unwrap();
        assert_eq!(tay.column(0), x);
        for (g, ui) in tay.column(1).iter().zip(&u) {
            assert!((g - ui).abs() < 1e-15);
        }
    }

    #[test]
    fn vehicle_taylor_columns_match_finite_differences() {
        let fp = vehicle();
        let pts = vehicle_points(50, 11);
        let theta = fp.theta_nominal.clone();
        let reg = build_regressor_taylor(&fp, &pts.states, &pts.inputs, &theta).unwrap();
        let stacked = |th: &[f64]| -> Result<Vec<f64>> {
            let mut out = Vec::new();
            for k in 0..pts.len() {
                out.extend(fp.dt_step_with(pts.states.row(k), pts.inputs.row(k), th)?);
            }
            Ok(out)
        };
        let fd = finite_diff_jacobian(stacked, &theta, 1e-6).unwrap();
        let f0 = stacked(&theta).unwrap();
        for r in 0..reg.rows() {
            for j in 0..9 {
                let (a, b) = (reg[(r, j)], fd[(r, j)]);
                assert!(
                    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-3),
                    "({r},{j}) {a} vs {b}"
                );
            }
            let offset = f0[r] - dot(reg.row(r).split_at(9).0, &theta);
            assert!((reg[(r, 9)] - offset).abs() < 1e-10 * f0[r].abs().max(1.0));
        }
    }

    #[test]
    fn orthonormal_columns_are_recovered() {
        let s = 0.5f64.sqrt();
        let reg = Matrix::from_columns(&[vec![s, s, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        let b = basis(&reg, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank(), 2);
        let proj = b.q().transpose().matmul(&reg).unwrap();
        // each original column is ± one basis vector
        for j in 0..2 {
            let c = proj.column(j);
            let big = c.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count();
            let small = c.iter().filter(|v| v.abs() < 1e-12).count();
            assert_eq!((big, small), (1, 1));
        }
    }

    #[test]
    fn penalty_in_and_out_of_subspace() {
        let fp = vehicle();
        let b = taylor_basis(
            &fp,
            vehicle_points(20, 5),
            &fp.theta_nominal,
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let v = random_vec(b.rank(), 9);
        let a = b.expand(&v).unwrap();
        let p = orth_penalty(&b, &a).unwrap();
        assert!((p - dot(&v, &v)).abs() < 1e-10 * dot(&v, &v));
        let g = random_vec(b.stacked_len(), 10);
        let pg = b.project(&g).unwrap();
        let perp: Vec<f64> = g.iter().zip(&pg).map(|(x, y)| x - y).collect();
        assert!(orth_penalty(&b, &perp).unwrap() < 1e-20 * dot(&g, &g));
        assert!(orth_penalty(&b, &[1.0]).is_err());
    }

    #[test]
    fn projector_is_idempotent_and_symmetric() {
        for seed in 0..5 {
            let reg = Matrix::from_vec(15, 4, random_vec(60, 100 + seed)).unwrap();
            let b = basis(&reg, DEFAULT_RANK_TOL).unwrap();
            let pi = b.q().matmul(&b.q().transpose()).unwrap();
            assert!(pi.matmul(&pi).unwrap().max_abs_diff(&pi) < 1e-10);
            assert!(pi.transpose().max_abs_diff(&pi) < 1e-10);
            let qtq = b.q().transpose().matmul(b.q()).unwrap();
            assert!(qtq.max_abs_diff(&Matrix::identity(4)) < 1e-10);
        }
    }

    #[test]
    fn explicit_projector_and_coordinate_forms_agree() {
        let fp = vehicle();
        let b = taylor_basis(
            &fp,
            vehicle_points(30, 6),
            &fp.theta_nominal,
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let pi = b.q().matmul(&b.q().transpose()).unwrap();
        for seed in 0..100 {
            let f = random_vec(b.stacked_len(), 1000 + seed);
            let pf = pi.matvec(&f).unwrap();
            let explicit = dot(&pf, &pf);
            let fast = orth_penalty(&b, &f).unwrap();
            assert!((explicit - fast).abs() <= 1e-10 * explicit.max(1.0));
        }
    }

    #[test]
    fn parameter_perturbation_response_lies_in_span() {
        let fp = vehicle();
        let pts = vehicle_points(40, 8);
        let theta = fp.theta_nominal.clone();
        let reg = build_regressor_taylor(&fp, &pts.states, &pts.inputs, &theta).unwrap();
        let b = basis(&reg, DEFAULT_RANK_TOL).unwrap();
        for seed in 0..10 {
            let mut d = random_vec(10, 50 + seed);
            d[9] = 1.0;
            let resp = reg.matvec(&d).unwrap();
            let full = dot(&resp, &resp);
            assert!((orth_penalty(&b, &resp).unwrap() - full).abs() <= 1e-8 * full);
        }
    }

    #[test]
    fn linear_and_taylor_penalties_agree() {
        let fp = toy(0.8, false);
        let x = random_vec(200, 21);
        let u = random_vec(200, 22);
        let pts = EvaluationPoints::new(column(&x), column(&u)).unwrap();
        let lin = linear_basis(&fp, pts.clone(), DEFAULT_RANK_TOL).unwrap();
        let tay = taylor_basis(&fp, pts, &[0.6], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(tay.rank(), 1);
        for seed in 0..20 {
            let a = random_vec(200, 300 + seed);
            let (p, q) = (
                orth_penalty(&lin, &a).unwrap(),
                orth_penalty(&tay, &a).unwrap(),
            );
            assert!((p - q).abs() <= 1e-10 * p.max(1.0));
        }
    }

    #[test]
    fn cache_modes() {
        let fp = toy(0.6, true);
        let x = random_vec(50, 1);
        let u = random_vec(50, 2);
        let data = Dataset::new(
            1.0,
            column(&u),
            column(&x),
            None,
            vec![0],
            crate::data::Role::Train,
        )
        .unwrap();

        let mut pre = BasisCache::new(BasisMode::PrecomputedTheta0);
        let a = pre.refresh(&fp, &data).unwrap();
        let moved = fp.clone().with_theta(vec![0.75]).unwrap();
        let b = pre.refresh(&moved, &data).unwrap();
        assert!(Arc::ptr_eq(&a, &b));

        let mut per = BasisCache::new(BasisMode::PerEpochThetaHat);
        let c = per.refresh(&fp, &data).unwrap();
        assert_eq!(c.q(), a.q());
        assert_eq!(c.fingerprint(), a.fingerprint());
        let d = per.refresh(&moved, &data).unwrap();
        assert_eq!(
            d.source,
            BasisSource::Taylor {
                theta_bar: vec![0.75]
            }
        );
        // the offset column u is fixed, the Jacobian column x is fixed too:
        // for this model the span only depends on the data
        let probe = random_vec(50, 3);
        let (p, q) = (
            orth_penalty(&c, &probe).unwrap(),
            orth_penalty(&d, &probe).unwrap(),
        );
        assert!((p - q).abs() < 1e-10 * p);

        let mut sim = BasisCache::new(BasisMode::PerEpochSimulatedStates);
        let e = sim.refresh(&fp, &data).unwrap();
        let f = sim.refresh(&moved, &data).unwrap();
        assert_ne!(e.points().unwrap().states, f.points().unwrap().states);
        assert_ne!(e.fingerprint(), f.fingerprint());
    }

    #[test]
    fn basis_mode_names_round_trip() {
        for m in [
            BasisMode::PrecomputedTheta0,
            BasisMode::PerEpochThetaHat,
            BasisMode::PerEpochSimulatedStates,
        ] {
            assert_eq!(BasisMode::parse(m.as_str()), Some(m));
        }
        assert_eq!(BasisMode::parse("sometimes"), None);
    }
}
