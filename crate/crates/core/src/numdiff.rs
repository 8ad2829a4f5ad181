//! Central finite differences of scalar fields on `R^D`.
//!
//! All stencils are second-order accurate and evaluated in a fixed order, so
//! a given `(f, x, cfg)` always produces the same floating-point result.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::teacher::TeacherNetwork;

/// Something that can be queried pointwise.
pub trait ScalarField<T: Real> {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
}

impl<T: Real> ScalarField<T> for TeacherNetwork<T> {
    fn dim(&self) -> usize {
        TeacherNetwork::dim(self)
    }

    fn value(&self, x: &[T]) -> T {
        self.query(x)
    }
}

/// Adapts a closure into a [`ScalarField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<T: Real, F: Fn(&[T]) -> T> ScalarField<T> for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig<T> {
    step: T,
}

impl<T: Real> FdConfig<T> {
    pub const MAX_ORDER: u32 = 3;

    pub fn new(step: T) -> Result<Self> {
        if !(step >= T::lit(1e-8) && step <= T::one()) {
            return Err(Error::Validation(format!("finite-difference step {step} outside [1e-8, 1]")));
        }
        Ok(FdConfig { step })
    }

    pub fn step(&self) -> T {
        self.step
    }
}

impl<T: Real> Default for FdConfig<T> {
    fn default() -> Self {
        FdConfig { step: T::lit(0.01) }
    }
}

fn eval_checked<T: Real, F: ScalarField<T> + ?Sized>(f: &F, x: &[T]) -> Result<T> {
    let v = f.value(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation { point: x.iter().map(|t| t.as_f64()).collect() })
    }
}

fn check_point<T: Real, F: ScalarField<T> + ?Sized>(f: &F, x: &[T]) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    if x.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("non-finite evaluation point".into()));
    }
    Ok(())
}

/// `(f(x+h eᵢ) − f(x−h eᵢ)) / 2h`, using `2D` queries.
pub fn fd_gradient<T: Real, F: ScalarField<T> + ?Sized>(f: &F, x: &[T], cfg: &FdConfig<T>) -> Result<DVector<T>> {
    check_point(f, x)?;
    let h = cfg.step;
    let two = T::lit(2.0);
    let mut p = x.to_vec();
    let mut grad = DVector::zeros(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = eval_checked(f, &p)?;
        p[i] = x[i] - h;
        let fm = eval_checked(f, &p)?;
        p[i] = x[i];
        grad[i] = (fp - fm) / (two * h);
    }
    Ok(grad)
}

/// Symmetric Hessian stencil using `2D(D−1) + 2D + 1` queries.
pub fn fd_hessian<T: Real, F: ScalarField<T> + ?Sized>(f: &F, x: &[T], cfg: &FdConfig<T>) -> Result<DMatrix<T>> {
    check_point(f, x)?;
    let d = x.len();
    let h = cfg.step;
    let h2 = h * h;
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    let mut p = x.to_vec();
    let f0 = eval_checked(f, &p)?;
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        p[i] = x[i] + h;
        let fp = eval_checked(f, &p)?;
        p[i] = x[i] - h;
        let fm = eval_checked(f, &p)?;
        p[i] = x[i];
        hess[(i, i)] = (fp - two * f0 + fm) / h2;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut corner = |si: T, sj: T| -> Result<T> {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = eval_checked(f, &p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let one = T::one();
            let fpp = corner(one, one)?;
            let fpm = corner(one, -one)?;
            let fmp = corner(-one, one)?;
            let fmm = corner(-one, -one)?;
            let v = (fpp - fpm - fmp + fmm) / (four * h2);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Number of queries issued by [`fd_hessian`] in dimension `d`.
pub fn hessian_query_cost(d: usize) -> u64 {
    let d = d as u64;
    2 * d * d.saturating_sub(1) + 2 * d + 1
}

/// `n`-th derivative of `t ↦ f(x + t u)` at `t = 0` for `n ∈ {1, 2, 3}`,
/// using 2, 3 and 4 queries respectively.
pub fn fd_directional<T: Real, F: ScalarField<T> + ?Sized>(
    f: &F,
    x: &[T],
    u: &[T],
    n: u32,
    cfg: &FdConfig<T>,
) -> Result<T> {
    check_point(f, x)?;
    if u.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: u.len() });
    }
    let norm = u.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt();
    if !((norm - T::one()).abs() <= T::tol(1e-8)) {
        return Err(Error::Precondition(format!("direction must be a unit vector, has norm {norm}")));
    }
    let h = cfg.step;
    let two = T::lit(2.0);
    let mut p = x.to_vec();
    let mut phi = |t: T| -> Result<T> {
        for ((pi, xi), ui) in p.iter_mut().zip(x).zip(u) {
            *pi = *xi + t * *ui;
        }
        eval_checked(f, &p)
    };
    match n {
        1 => {
            let fp = phi(h)?;
            let fm = phi(-h)?;
            Ok((fp - fm) / (two * h))
        }
        2 => {
            let fp = phi(h)?;
            let f0 = phi(T::zero())?;
            let fm = phi(-h)?;
            Ok((fp - two * f0 + fm) / (h * h))
        }
        3 => {
            let f2 = phi(two * h)?;
            let f1 = phi(h)?;
            let fm1 = phi(-h)?;
            let fm2 = phi(-two * h)?;
            Ok((f2 - two * f1 + two * fm1 - fm2) / (two * h * h * h))
        }
        _ => Err(Error::Precondition(format!("directional order must be 1, 2 or 3, got {n}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::seeds;
    use crate::teacher::{sample_teacher, ShiftLaw};

    fn teacher(d: usize, m: usize, seed: u64) -> TeacherNetwork<f64> {
        sample_teacher(d, m, &ShiftLaw::Uniform(-0.5, 0.5), Activation::tanh(), seed).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn step_bounds() {
        assert!(FdConfig::new(1e-9).is_err());
        assert!(FdConfig::new(2.0).is_err());
        assert!(FdConfig::new(f64::NAN).is_err());
        assert_eq!(FdConfig::new(0.01).unwrap().step(), 0.01);
        assert_eq!(FdConfig::<f64>::default().step(), 0.01);
    }

    #[test]
    fn linear_functions_are_exact() {
        let a = [0.5, -2.0, 3.25];
        let f = FnField::new(3, |x: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum());
        let g = fd_gradient(&f, &[0.1, 0.2, -0.3], &FdConfig::new(0.125).unwrap()).unwrap();
        for i in 0..3 {
            assert!((g[i] - a[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratics_are_exact() {
        let mut rng = seeds::rng(11);
        let d = 5;
        let a = DMatrix::from_vec(d, d, seeds::gaussian_vec::<f64>(&mut rng, d * d));
        let sym = &a + a.transpose();
        let a2 = a.clone();
        let f = FnField::new(d, move |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            v.dot(&(&a2 * &v))
        });
        let x: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
        let cfg = FdConfig::new(0.01).unwrap();
        let g = fd_gradient(&f, &x, &cfg).unwrap();
        let expected = &sym * DVector::from_column_slice(&x);
        assert!((&g - &expected).norm() <= 1e-10 * expected.norm());
        let h = fd_hessian(&f, &x, &cfg).unwrap();
        assert!(max_abs(&(&h - &sym)) <= 1e-8);
    }

    #[test]
    fn teacher_gradient_and_hessian_match_analytic() {
        let (d, m) = (6, 5);
        let net = teacher(d, m, 2);
        let h = 1e-3;
        let cfg = FdConfig::new(h).unwrap();
        let tol = net.activation().kappa() * m as f64 * h * h * 10.0;
        let mut rng = seeds::rng(5);
        for _ in 0..20 {
            let x: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
            let g = fd_gradient(&net, &x, &cfg).unwrap();
            let ga = net.analytic_gradient(&x).unwrap();
            assert!((&g - &ga).amax() <= tol);
            let hs = fd_hessian(&net, &x, &cfg).unwrap();
            let ha = net.analytic_hessian(&x).unwrap();
            assert!(max_abs(&(&hs - &ha)) <= tol, "{}", max_abs(&(&hs - &ha)));
        }
    }

    #[test]
    fn single_centered_neuron_has_zero_hessian_at_origin() {
        let w = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
        let net = TeacherNetwork::new(w, DVector::from_vec(vec![0.0]), Activation::tanh()).unwrap();
        let hs = fd_hessian(&net, &[0.0; 4], &FdConfig::new(0.01).unwrap()).unwrap();
        assert!(max_abs(&hs) <= 1e-6);
    }

    #[test]
    fn hessian_error_is_second_order() {
        let d = 5;
        let net = teacher(d, 4, 3);
        let mut rng = seeds::rng(8);
        let mut ratios = Vec::new();
        for _ in 0..20 {
            let x: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
            let exact = net.analytic_hessian(&x).unwrap();
            let err = |h: f64| max_abs(&(fd_hessian(&net, &x, &FdConfig::new(h).unwrap()).unwrap() - &exact));
            ratios.push(err(0.02) / err(0.01));
        }
        for r in ratios {
            assert!((3.0..=5.0).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn gradient_and_directional_errors_are_second_order() {
        let d = 4;
        let net = teacher(d, 3, 4);
        let mut rng = seeds::rng(9);
        for _ in 0..20 {
            let x: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
            let u: Vec<f64> = seeds::sphere_vec(&mut rng, d);
            let ga = net.analytic_gradient(&x).unwrap();
            let gerr = |h: f64| (fd_gradient(&net, &x, &FdConfig::new(h).unwrap()).unwrap() - &ga).amax();
            let r = gerr(0.02) / gerr(0.01);
            assert!((3.0..=5.0).contains(&r), "gradient ratio {r}");
            for n in 1..=3 {
                let exact = net.analytic_directional(&x, &u, n).unwrap();
                let err = |h: f64| (fd_directional(&net, &x, &u, n, &FdConfig::new(h).unwrap()).unwrap() - exact).abs();
                let r = err(0.02) / err(0.01);
                assert!((3.0..=5.0).contains(&r), "order {n} ratio {r}");
            }
        }
    }

    #[test]
    fn cubic_along_direction_is_exact() {
        let u = [0.6, 0.8];
        let f = FnField::new(2, move |x: &[f64]| (u[0] * x[0] + u[1] * x[1]).powi(3));
        let v = fd_directional(&f, &[0.0, 0.0], &u, 3, &FdConfig::new(0.1).unwrap()).unwrap();
        assert!((v - 6.0).abs() < 1e-10);
    }

    #[test]
    fn single_neuron_directional_second_derivative() {
        let u = [0.0, 0.0, 1.0];
        let w = DMatrix::from_column_slice(3, 1, &u);
        let act = Activation::<f64>::tanh();
        let net = TeacherNetwork::new(w, DVector::from_vec(vec![0.2]), act.clone()).unwrap();
        let h = 0.01;
        let v = fd_directional(&net, &[0.0; 3], &u, 2, &FdConfig::new(h).unwrap()).unwrap();
        assert!((v - act.d2(0.2)).abs() <= act.kappa() * h * h);
    }

    #[test]
    fn operators_are_linear() {
        let (d, a) = (4, -1.7);
        let f = teacher(d, 3, 20);
        let g = teacher(d, 5, 21);
        let combo = FnField::new(d, |x: &[f64]| a * f.eval_uncounted(x).unwrap() + g.eval_uncounted(x).unwrap());
        let cfg = FdConfig::new(0.01).unwrap();
        let mut rng = seeds::rng(1);
        for _ in 0..10 {
            let x: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
            let u: Vec<f64> = seeds::sphere_vec(&mut rng, d);
            let lhs = fd_gradient(&combo, &x, &cfg).unwrap();
            let rhs = fd_gradient(&f, &x, &cfg).unwrap() * a + fd_gradient(&g, &x, &cfg).unwrap();
            assert!((lhs - rhs).amax() <= 1e-10);
            let lhs = fd_hessian(&combo, &x, &cfg).unwrap();
            let rhs = fd_hessian(&f, &x, &cfg).unwrap() * a + fd_hessian(&g, &x, &cfg).unwrap();
            // the Hessian stencil divides round-off by h² = 1e-4
            assert!(max_abs(&(lhs - rhs)) <= 1e-10);
            for n in 1..=3 {
                let lhs = fd_directional(&combo, &x, &u, n, &cfg).unwrap();
                let rhs = a * fd_directional(&f, &x, &u, n, &cfg).unwrap() + fd_directional(&g, &x, &u, n, &cfg).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 / cfg.step().powi(n as i32) * 10.0);
            }
        }
    }

    #[test]
    fn query_counts_match_formulas() {
        for d in [1, 2, 7] {
            let net = teacher(d, 2, 0);
            let cfg = FdConfig::new(0.01).unwrap();
            let x = vec![0.1; d];
            let mut u = vec![0.0; d];
            u[0] = 1.0;
            fd_gradient(&net, &x, &cfg).unwrap();
            assert_eq!(net.query_count(), 2 * d as u64);
            net.reset_counters();
            fd_hessian(&net, &x, &cfg).unwrap();
            assert_eq!(net.query_count(), hessian_query_cost(d));
            assert_eq!(hessian_query_cost(d), (2 * d * (d - 1) + 2 * d + 1) as u64);
            for (n, cost) in [(1, 2), (2, 3), (3, 4)] {
                net.reset_counters();
                fd_directional(&net, &x, &u, n, &cfg).unwrap();
                assert_eq!(net.query_count(), cost);
            }
        }
    }

    #[test]
    fn non_finite_values_report_the_stencil_point() {
        let f = FnField::new(2, |x: &[f64]| if x[1] > 0.5 { f64::NAN } else { x[0] });
        let err = fd_gradient(&f, &[0.0, 0.495], &FdConfig::new(0.01).unwrap()).unwrap_err();
        match err {
            Error::NonFiniteEvaluation { point } => assert!((point[1] - 0.505).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        let f = FnField::new(2, |x: &[f64]| x[0]);
        let r = fd_directional(&f, &[0.0, 0.0], &[1.0, 1.0], 2, &FdConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
        assert!(fd_directional(&f, &[0.0, 0.0], &[1.0, 0.0], 4, &FdConfig::default()).is_err());
    }

    /// Fitted exponent of the stencil error in the scale `b` of `t ↦ g(b t + τ)`.
    fn fitted_scale_exponent(n: u32) -> f64 {
        let act = Activation::<f64>::tanh();
        let tau = 0.2;
        let h = 0.05;
        let (mut sx, mut sy, mut sxx, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..12 {
            let b = 0.1 * (20.0f64).powf(i as f64 / 11.0);
            let a2 = act.clone();
            let f = FnField::new(1, move |x: &[f64]| a2.g(b * x[0] + tau));
            let approx = fd_directional(&f, &[0.0], &[1.0], n, &FdConfig::new(h).unwrap()).unwrap();
            let exact = act.derivative(n, tau) * b.powi(n as i32);
            let (lx, ly) = (b.ln(), (approx - exact).abs().ln());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            k += 1.0;
        }
        (k * sxy - sx * sy) / (k * sxx - sx * sx)
    }

    #[test]
    fn directional_error_scales_like_b_to_the_n_plus_2() {
        for n in 1..=3 {
            let e = fitted_scale_exponent(n);
            assert!((e - (n as f64 + 2.0)).abs() < 0.5, "order {n}: exponent {e}");
        }
    }
}
