//! Point-wise constitutive algebra.
//!
//! Convention: `(grad u)_{ij} = d_i u_j` and `(grad d)_{ij} = d_i d_j`, so that
//! `c(xi) = xi . grad d` and `(u . grad) d = (grad d)^T u`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::material::{Coefficients, ParameterSet, ThermoState};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance on `| |d| - 1 |` accepted by every operation that forms `P_d`.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StressError {
    #[error("director is not a unit vector: | |d| - 1 | = {0:e}")]
    NotUnit(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
}

fn check_unit(d: &Vector) -> Result<(), StressError> {
    let drift = (d.norm() - 1.0).abs();
    if drift <= UNIT_TOL {
        Ok(())
    } else {
        Err(StressError::NotUnit(drift))
    }
}

fn check_square(m: &Mat, n: usize, what: &str) -> Result<(), StressError> {
    if m.nrows() == n && m.ncols() == n {
        Ok(())
    } else {
        Err(StressError::Dimension(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn check_len(v: &Vector, n: usize, what: &str) -> Result<(), StressError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(StressError::Dimension(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )))
    }
}

/// `P_d = I - d d^T`.
pub fn projector(d: &Vector) -> Mat {
    Mat::identity(d.len(), d.len()) - d * d.transpose()
}

fn coeffs(p: &ParameterSet, s: &ThermoState) -> Coefficients {
    p.at(s.theta, s.tau)
}

/// Kinematic data at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicPoint {
    pub grad_u: Mat,
    pub d: Vector,
    pub grad_d: Mat,
    pub dt_d: Vector,
    pub theta: f64,
    pub grad_theta: Vector,
    pub tau: f64,
}

impl KinematicPoint {
    /// Validates dimensions and the unit-director constraint; `tau` is
    /// computed as half the squared Frobenius norm of `grad_d`.
    pub fn new(
        grad_u: Mat,
        d: Vector,
        grad_d: Mat,
        dt_d: Vector,
        theta: f64,
        grad_theta: Vector,
    ) -> Result<Self, StressError> {
        let n = d.len();
        check_square(&grad_u, n, "grad_u")?;
        check_square(&grad_d, n, "grad_d")?;
        check_len(&dt_d, n, "Dt_d")?;
        check_len(&grad_theta, n, "grad_theta")?;
        check_unit(&d)?;
        if !(theta > 0.0) {
            return Err(StressError::NonPositiveTemperature(theta));
        }
        let tau = 0.5 * grad_d.norm_squared();
        Ok(Self {
            grad_u,
            d,
            grad_d,
            dt_d,
            theta,
            grad_theta,
            tau,
        })
    }

    pub fn thermo(&self, rho: f64) -> ThermoState {
        ThermoState {
            theta: self.theta,
            tau: self.tau,
            rho,
        }
    }
}

/// Every constitutive quantity at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct StressBundle {
    pub d_sym: Mat,
    pub v_anti: Mat,
    pub s_newton: Mat,
    pub s_ericksen: Mat,
    pub s_stretch: Mat,
    pub s_diss: Mat,
    pub n_vec: Vector,
    pub a_vec: Vector,
    pub q: Vector,
    pub r: f64,
    pub r_a: f64,
}

impl StressBundle {
    pub fn total(&self) -> Mat {
        &self.s_newton + &self.s_ericksen + &self.s_stretch + &self.s_diss
    }
}

/// `D = (G + G^T)/2`, `V = (G - G^T)/2`.
pub fn decompose_gradient(grad_u: &Mat) -> (Mat, Mat) {
    let gt = grad_u.transpose();
    ((grad_u + &gt) * 0.5, (grad_u - &gt) * 0.5)
}

/// `S_N = 2 mu_s D + mu_b (div u) I`.
pub fn newton_stress(p: &ParameterSet, s: &ThermoState, d_sym: &Mat, div_u: f64) -> Mat {
    let c = coeffs(p, s);
    let n = d_sym.nrows();
    d_sym * (2.0 * c.mu_s) + Mat::identity(n, n) * (c.mu_b * div_u)
}

/// `S_E = -theta lambda grad_d grad_d^T`.
pub fn ericksen_stress(lambda: f64, theta: f64, grad_d: &Mat) -> Result<Mat, StressError> {
    if !(lambda > 0.0) {
        return Err(StressError::NonPositiveLambda(lambda));
    }
    Ok(grad_d * grad_d.transpose() * (-theta * lambda))
}

/// `a = div(lambda grad) d + lambda |grad d|^2 d`, which equals
/// `P_d div(lambda grad) d` on solutions of the constraint.
pub fn a_vector(
    lambda: f64,
    grad_d: &Mat,
    lap_weighted_d: &Vector,
    d: &Vector,
) -> Result<Vector, StressError> {
    check_unit(d)?;
    Ok(lap_weighted_d + d * (lambda * grad_d.norm_squared()))
}

/// `n = mu_V V d + mu_D P_d D d - gamma Dt_d`.
pub fn n_vector(
    p: &ParameterSet,
    s: &ThermoState,
    v_anti: &Mat,
    d_sym: &Mat,
    d: &Vector,
    dt_d: &Vector,
) -> Result<Vector, StressError> {
    check_unit(d)?;
    let c = coeffs(p, s);
    Ok(v_anti * d * c.mu_v + projector(d) * (d_sym * d) * c.mu_d - dt_d * c.gamma)
}

/// Stretch stress `(mu_D+mu_V)/(2 gamma) n (x) d + (mu_D-mu_V)/(2 gamma) d (x) n`.
pub fn stretch_stress(
    p: &ParameterSet,
    s: &ThermoState,
    n_vec: &Vector,
    d: &Vector,
) -> Result<Mat, StressError> {
    check_unit(d)?;
    let c = coeffs(p, s);
    let g2 = 2.0 * c.gamma;
    Ok(n_vec * d.transpose() * ((c.mu_d + c.mu_v) / g2) + d * n_vec.transpose() * ((c.mu_d - c.mu_v) / g2))
}

/// Symmetric Leslie dissipation stress.
pub fn dissipative_stress(
    p: &ParameterSet,
    s: &ThermoState,
    n_vec: &Vector,
    d: &Vector,
    d_sym: &Mat,
) -> Result<Mat, StressError> {
    check_unit(d)?;
    let c = coeffs(p, s);
    let dd = d_sym * d;
    let pdd = projector(d) * &dd;
    let ddd = dd.dot(d);
    let sym = |a: &Vector, b: &Vector| a * b.transpose() + b * a.transpose();
    Ok(sym(n_vec, d) * (c.mu_p / c.gamma)
        + sym(&pdd, d) * ((c.gamma * c.mu_l + c.mu_p * c.mu_p) / (2.0 * c.gamma))
        + d * d.transpose() * (c.mu_0 * ddd))
}

/// Both sides of `S_diss : grad u = 2 mu_P/gamma (n|P_d D d) + (mu_L + mu_P^2/gamma)|P_d D d|^2 + mu_0 (Dd|d)^2`.
pub fn diss_entropy_identity(
    p: &ParameterSet,
    s: &ThermoState,
    n_vec: &Vector,
    d: &Vector,
    d_sym: &Mat,
    grad_u: &Mat,
) -> Result<(f64, f64), StressError> {
    let sd = dissipative_stress(p, s, n_vec, d, d_sym)?;
    let lhs = sd.dot(grad_u);
    let c = coeffs(p, s);
    let dd = d_sym * d;
    let pdd = projector(d) * &dd;
    let ddd = dd.dot(d);
    let rhs = 2.0 * c.mu_p / c.gamma * n_vec.dot(&pdd)
        + (c.mu_l + c.mu_p * c.mu_p / c.gamma) * pdd.norm_squared()
        + c.mu_0 * ddd * ddd;
    Ok((lhs, rhs))
}

/// `q = -alpha_0 grad theta - alpha_1 (d . grad theta) d`.
pub fn heat_flux(
    p: &ParameterSet,
    s: &ThermoState,
    grad_theta: &Vector,
    d: &Vector,
) -> Result<Vector, StressError> {
    check_unit(d)?;
    let c = coeffs(p, s);
    Ok(-grad_theta * c.alpha_0 - d * (c.alpha_1 * d.dot(grad_theta)))
}

/// Inputs of the two dissipation scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionInputs {
    pub grad_u: Mat,
    pub d: Vector,
    pub grad_theta: Vector,
    /// `div(lambda grad) d`, supplied by the caller.
    pub lap_weighted_d: Vector,
}

struct Mechanical {
    thermal: f64,
    mech: f64,
}

fn production_terms(
    c: &Coefficients,
    inp: &ProductionInputs,
) -> Result<Mechanical, StressError> {
    let d = &inp.d;
    check_unit(d)?;
    let n = d.len();
    check_square(&inp.grad_u, n, "grad_u")?;
    check_len(&inp.grad_theta, n, "grad_theta")?;
    check_len(&inp.lap_weighted_d, n, "lap_weighted_d")?;
    let (d_sym, _) = decompose_gradient(&inp.grad_u);
    let div_u = inp.grad_u.trace();
    let pd = projector(d);
    let dd = &d_sym * d;
    let pdd = &pd * &dd;
    let ddd = dd.dot(d);
    let dg = d.dot(&inp.grad_theta);
    let thermal = c.alpha_0 * inp.grad_theta.norm_squared() + c.alpha_1 * dg * dg;
    let director = &pd * &inp.lap_weighted_d - &pdd * c.mu_p;
    let mech = 2.0 * c.mu_s * d_sym.norm_squared()
        + c.mu_b * div_u * div_u
        + director.norm_squared() / c.gamma
        + c.mu_l * pdd.norm_squared()
        + c.mu_0 * ddd * ddd;
    Ok(Mechanical { thermal, mech })
}

/// Entropy production `r`:
/// `theta r = [alpha_0|grad theta|^2 + alpha_1 (d.grad theta)^2]/theta + 2 mu_s|D|^2
/// + mu_b (div u)^2 + |P_d div(lambda grad)d - mu_P P_d D d|^2/gamma + mu_L|P_d D d|^2 + mu_0 (Dd|d)^2`.
pub fn entropy_production(
    p: &ParameterSet,
    s: &ThermoState,
    inp: &ProductionInputs,
) -> Result<f64, StressError> {
    if !(s.theta > 0.0) {
        return Err(StressError::NonPositiveTemperature(s.theta));
    }
    let t = production_terms(&coeffs(p, s), inp)?;
    Ok((t.thermal / s.theta + t.mech) / s.theta)
}

/// Available-energy dissipation `r_a` (the mechanical part of `theta r`).
pub fn available_dissipation(
    p: &ParameterSet,
    s: &ThermoState,
    inp: &ProductionInputs,
) -> Result<f64, StressError> {
    Ok(production_terms(&coeffs(p, s), inp)?.mech)
}

/// Assembles every quantity at a kinematic point. `lambda` is the value of
/// the free-energy coefficient at the point, `lap_weighted_d` the supplied
/// `div(lambda grad) d`.
pub fn assemble(
    p: &ParameterSet,
    kp: &KinematicPoint,
    lambda: f64,
    lap_weighted_d: &Vector,
) -> Result<StressBundle, StressError> {
    let s = kp.thermo(p.rho);
    let (d_sym, v_anti) = decompose_gradient(&kp.grad_u);
    let div_u = kp.grad_u.trace();
    let n_vec = n_vector(p, &s, &v_anti, &d_sym, &kp.d, &kp.dt_d)?;
    let inputs = ProductionInputs {
        grad_u: kp.grad_u.clone(),
        d: kp.d.clone(),
        grad_theta: kp.grad_theta.clone(),
        lap_weighted_d: lap_weighted_d.clone(),
    };
    Ok(StressBundle {
        s_newton: newton_stress(p, &s, &d_sym, div_u),
        s_ericksen: ericksen_stress(lambda, kp.theta, &kp.grad_d)?,
        s_stretch: stretch_stress(p, &s, &n_vec, &kp.d)?,
        s_diss: dissipative_stress(p, &s, &n_vec, &kp.d, &d_sym)?,
        a_vec: a_vector(lambda, &kp.grad_d, lap_weighted_d, &kp.d)?,
        q: heat_flux(p, &s, &kp.grad_theta, &kp.d)?,
        r: entropy_production(p, &s, &inputs)?,
        r_a: available_dissipation(p, &s, &inputs)?,
        n_vec,
        d_sym,
        v_anti,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::ParameterRule;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ParameterSet {
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.mu_b = ParameterRule::Const(0.3);
        p.mu_v = ParameterRule::Const(0.7);
        p.mu_d = ParameterRule::Const(-0.4);
        p.mu_p = ParameterRule::Const(0.6);
        p.mu_l = ParameterRule::Const(0.2);
        p.mu_0 = ParameterRule::Const(0.9);
        p.alpha_1 = ParameterRule::Const(-0.5);
        p
    }

    fn state() -> ThermoState {
        ThermoState::new(1.3, 0.2, 1.0).unwrap()
    }

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        loop {
            let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn decompose_examples() {
        let g = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let (d, v) = decompose_gradient(&g);
        assert_eq!(d, Mat::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        assert_eq!(v, Mat::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]));
        let sym = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(decompose_gradient(&sym).1, Mat::zeros(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = rand_mat(&mut rng, 3);
        let (d, v) = decompose_gradient(&g);
        assert!((&d + &v - &g).abs().max() <= 1e-15);
        assert_eq!(&d - d.transpose(), Mat::zeros(3, 3));
    }

    #[test]
    fn newton_examples() {
        let p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        let s = state();
        assert_eq!(newton_stress(&p, &s, &Mat::zeros(2, 2), 0.0), Mat::zeros(2, 2));
        let d = Mat::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(
            newton_stress(&p, &s, &d, 0.0),
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let g = rand_mat(&mut rng, 3);
            let (d, _) = decompose_gradient(&g);
            let div = g.trace();
            let sn = newton_stress(&p, &s, &d, div);
            let expected = 2.0 * d.norm_squared() + 0.3 * div * div;
            assert_relative_eq!(sn.dot(&g), expected, max_relative = 1e-13);
            assert!(expected >= 0.0);
        }
    }

    #[test]
    fn ericksen_examples() {
        assert_eq!(ericksen_stress(1.0, 1.0, &Mat::zeros(3, 3)).unwrap(), Mat::zeros(3, 3));
        let mut e11 = Mat::zeros(2, 2);
        e11[(0, 0)] = 1.0;
        assert_eq!(ericksen_stress(2.0, 1.0, &e11).unwrap(), &e11 * -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ericksen_stress(0.7, 1.4, &rand_mat(&mut rng, 3)).unwrap();
        assert_eq!(&s - s.transpose(), Mat::zeros(3, 3));
        let eig = s.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&l| l <= 1e-14));
        assert!(ericksen_stress(0.0, 1.0, &e11).is_err());
    }

    #[test]
    fn a_vector_of_circle_solution_vanishes() {
        let lambda = 0.8;
        for &x in &[0.0, 0.4, 2.0] {
            let d = Vector::from_vec(vec![f64::cos(x), f64::sin(x)]);
            // grad_d[0][j] = d_x d_j
            let grad_d = Mat::from_row_slice(2, 2, &[-f64::sin(x), f64::cos(x), 0.0, 0.0]);
            let lap = -&d * lambda;
            let a = a_vector(lambda, &grad_d, &lap, &d).unwrap();
            assert!(a.norm() < 1e-15);
        }
        let d = Vector::from_vec(vec![0.0, 1.0]);
        let a = a_vector(1.0, &Mat::zeros(2, 2), &Vector::zeros(2), &d).unwrap();
        assert_eq!(a, Vector::zeros(2));
    }

    #[test]
    fn a_vector_orthogonality_under_grid_refinement() {
        // d = (cos phi, sin phi), phi = sin(2 pi x); discrete second difference.
        let phi = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut worst: f64 = 0.0;
            for i in 1..n {
                let x = i as f64 * h;
                let dv = |x: f64| Vector::from_vec(vec![phi(x).cos(), phi(x).sin()]);
                let (dm, d0, dp) = (dv(x - h), dv(x), dv(x + h));
                let lap = (&dp - &d0 * 2.0 + &dm) / (h * h);
                let g = (&dp - &dm) / (2.0 * h);
                let grad = Mat::from_row_slice(2, 2, &[g[0], g[1], 0.0, 0.0]);
                let a = a_vector(1.0, &grad, &lap, &d0).unwrap();
                worst = worst.max(a.dot(&d0).abs());
            }
            worst
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn n_vector_examples() {
        let p = params();
        let s = state();
        let c = p.at(s.theta, s.tau);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 3] {
            for _ in 0..200 {
                let g = rand_mat(&mut rng, n);
                let (dsym, v) = decompose_gradient(&g);
                let d = rand_unit(&mut rng, n);
                let balanced =
                    (&v * &d * c.mu_v + projector(&d) * (&dsym * &d) * c.mu_d) / c.gamma;
                let zero = n_vector(&p, &s, &v, &dsym, &d, &balanced).unwrap();
                assert!(zero.norm() < 1e-14);
                let dt = projector(&d) * Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let nv = n_vector(&p, &s, &v, &dsym, &d, &dt).unwrap();
                assert!(nv.dot(&d).abs() <= 1e-12 * nv.norm().max(1.0));
            }
        }
    }

    #[test]
    fn stretch_examples() {
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.mu_d = ParameterRule::Const(1.0);
        p.mu_v = ParameterRule::Const(1.0);
        let s = state();
        let nv = Vector::from_vec(vec![0.0, 2.0, 1.0]);
        let d = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(stretch_stress(&p, &s, &nv, &d).unwrap(), &nv * d.transpose());
        p.mu_d = ParameterRule::Const(0.0);
        p.gamma = ParameterRule::Const(1.0);
        let st = stretch_stress(&p, &s, &nv, &d).unwrap();
        let anti = (&st - st.transpose()) * 0.5;
        let expected = (&nv * d.transpose() - &d * nv.transpose()) * 0.5;
        assert!((anti - expected).abs().max() < 1e-15);
        assert_eq!(
            stretch_stress(&p, &s, &Vector::zeros(3), &d).unwrap(),
            Mat::zeros(3, 3)
        );
    }

    #[test]
    fn dissipative_examples() {
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.mu_0 = ParameterRule::Const(1.0);
        let s = state();
        let mut e11 = Mat::zeros(2, 2);
        e11[(0, 0)] = 1.0;
        let d = Vector::from_vec(vec![1.0, 0.0]);
        let sd = dissipative_stress(&p, &s, &Vector::zeros(2), &d, &e11).unwrap();
        assert_eq!(sd, e11);
        let sd0 = dissipative_stress(&params(), &s, &Vector::zeros(2), &d, &Mat::zeros(2, 2)).unwrap();
        assert_eq!(sd0, Mat::zeros(2, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params();
        for n in [2, 3] {
            let g = rand_mat(&mut rng, n);
            let (dsym, _) = decompose_gradient(&g);
            let d = rand_unit(&mut rng, n);
            let nv = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let sd = dissipative_stress(&p, &s, &nv, &d, &dsym).unwrap();
            assert_eq!(&sd - sd.transpose(), Mat::zeros(n, n));
        }
    }

    #[test]
    fn dissipation_identity() {
        let s = state();
        let p = params();
        let d = Vector::from_vec(vec![0.0, 1.0]);
        let (l, r) =
            diss_entropy_identity(&p, &s, &Vector::zeros(2), &d, &Mat::zeros(2, 2), &Mat::zeros(2, 2))
                .unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2, 3] {
            for _ in 0..500 {
                let g = rand_mat(&mut rng, n);
                let (dsym, v) = decompose_gradient(&g);
                let d = rand_unit(&mut rng, n);
                let dt = projector(&d) * Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let nv = n_vector(&p, &s, &v, &dsym, &d, &dt).unwrap();
                let (lhs, rhs) = diss_entropy_identity(&p, &s, &nv, &d, &dsym, &g).unwrap();
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }
        // mu_P = 0 collapse
        let mut p0 = params();
        p0.mu_p = ParameterRule::Const(0.0);
        let g = rand_mat(&mut rng, 3);
        let (dsym, _) = decompose_gradient(&g);
        let d = rand_unit(&mut rng, 3);
        let nv = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let (_, rhs) = diss_entropy_identity(&p0, &s, &nv, &d, &dsym, &g).unwrap();
        let pdd = projector(&d) * (&dsym * &d);
        let ddd = (&dsym * &d).dot(&d);
        assert_relative_eq!(rhs, 0.2 * pdd.norm_squared() + 0.9 * ddd * ddd, max_relative = 1e-14);
    }

    #[test]
    fn heat_flux_examples() {
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.alpha_1 = ParameterRule::Const(1.0);
        let s = state();
        let d = Vector::from_vec(vec![1.0, 0.0]);
        let q = heat_flux(&p, &s, &Vector::from_vec(vec![1.0, 0.0]), &d).unwrap();
        assert_eq!(q, Vector::from_vec(vec![-2.0, 0.0]));
        let gt = Vector::from_vec(vec![0.0, 3.0]);
        assert_eq!(heat_flux(&p, &s, &gt, &d).unwrap(), -&gt);
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let d = rand_unit(&mut rng, 3);
            let gt = Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let q = heat_flux(&p, &s, &gt, &d).unwrap();
            let form = gt.norm_squared() - 0.5 * d.dot(&gt).powi(2);
            assert_relative_eq!(-q.dot(&gt), form, max_relative = 1e-13);
            assert!(q.dot(&gt) <= 0.0);
        }
    }

    #[test]
    fn production_examples() {
        let p = params();
        let s = state();
        let d = Vector::from_vec(vec![1.0, 0.0]);
        let zero = ProductionInputs {
            grad_u: Mat::zeros(2, 2),
            d: d.clone(),
            grad_theta: Vector::zeros(2),
            lap_weighted_d: Vector::zeros(2),
        };
        assert_eq!(entropy_production(&p, &s, &zero).unwrap(), 0.0);
        assert_eq!(available_dissipation(&p, &s, &zero).unwrap(), 0.0);

        let thermal = ProductionInputs {
            grad_theta: Vector::from_vec(vec![0.6, 0.8]),
            ..zero.clone()
        };
        let expected = (1.0 - 0.5 * 0.36) / (s.theta * s.theta);
        assert_relative_eq!(entropy_production(&p, &s, &thermal).unwrap(), expected, max_relative = 1e-14);

        // completion of the square against the pre-completion form with n = -a
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = p.at(s.theta, s.tau);
        for n in [2, 3] {
            for _ in 0..200 {
                let g = rand_mat(&mut rng, n);
                let d = rand_unit(&mut rng, n);
                let inp = ProductionInputs {
                    grad_u: g.clone(),
                    d: d.clone(),
                    grad_theta: Vector::zeros(n),
                    lap_weighted_d: Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
                };
                let r = entropy_production(&p, &s, &inp).unwrap();
                let (dsym, _) = decompose_gradient(&g);
                let a = projector(&d) * &inp.lap_weighted_d;
                let nv = -&a;
                let pdd = projector(&d) * (&dsym * &d);
                let ddd = (&dsym * &d).dot(&d);
                let div = g.trace();
                let pre = (a.norm_squared() + 2.0 * c.mu_p * nv.dot(&pdd) + c.mu_p * c.mu_p * pdd.norm_squared())
                    / c.gamma;
                let other = 2.0 * c.mu_s * dsym.norm_squared()
                    + c.mu_b * div * div
                    + c.mu_l * pdd.norm_squared()
                    + c.mu_0 * ddd * ddd;
                let oracle = (pre + other) / s.theta;
                assert!((r - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
                let ra = available_dissipation(&p, &s, &inp).unwrap();
                assert_relative_eq!(ra, s.theta * r, max_relative = 1e-14);
                assert!(r >= 0.0 && ra >= 0.0);
            }
        }
        let bad = ThermoState {
            theta: 0.0,
            tau: 0.0,
            rho: 1.0,
        };
        assert!(entropy_production(&p, &bad, &zero).is_err());
    }

    #[test]
    fn simplified_collapse() {
        let p = ParameterSet::simplified(0.5, 1.0, 0.25, 1.0);
        let _ = state();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = rand_unit(&mut rng, 2);
        let dt_d = projector(&d) * Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let kp = KinematicPoint::new(
            rand_mat(&mut rng, 2),
            d.clone(),
            rand_mat(&mut rng, 2),
            dt_d,
            1.3,
            Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        let lap = Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let b = assemble(&p, &kp, 0.5, &lap).unwrap();
        assert_eq!(b.s_stretch, Mat::zeros(2, 2));
        assert_eq!(b.s_diss, Mat::zeros(2, 2));
        let ks = kp.thermo(1.0);
        let c = p.at(ks.theta, ks.tau);
        let a = projector(&d) * &lap;
        let theta_r = -b.q.dot(&kp.grad_theta) / kp.theta
            + 2.0 * c.mu_s * b.d_sym.norm_squared()
            + a.norm_squared() / c.gamma;
        assert_relative_eq!(b.r * kp.theta, theta_r, max_relative = 1e-13);
        assert_eq!(b.total(), &b.s_newton + &b.s_ericksen);
    }

    #[test]
    fn rejects_non_unit_director() {
        let p = params();
        let s = state();
        let d = Vector::from_vec(vec![1.0, 1e-4]);
        assert!(matches!(
            heat_flux(&p, &s, &Vector::zeros(2), &d),
            Err(StressError::NotUnit(_))
        ));
        assert!(KinematicPoint::new(
            Mat::zeros(2, 2),
            d,
            Mat::zeros(2, 2),
            Vector::zeros(2),
            1.0,
            Vector::zeros(2)
        )
        .is_err());
    }
}
