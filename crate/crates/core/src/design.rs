//! LQ / LQI gain design on the lifted linear model.
//!
//! The integrator states accumulate `rho_tilde_a - rho_tilde_b` per section.
//! With `S = 0` (p1 = -inf) the integrator block decouples and the design
//! reduces to a plain LQ regulator.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linearize::{design_model_for, LinearModel};
use crate::scenario::Scenario;

/// Exponents of the diagonal weights `S = 10^p1 I` and `R = 10^p2 I`.
/// `p1 = -inf` selects `S = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConfig {
    pub p1: f64,
    pub p2: f64,
}

impl WeightConfig {
    pub fn lqi(p1: f64, p2: f64) -> Self {
        Self { p1, p2 }
    }

    pub fn lq(p2: f64) -> Self {
        Self {
            p1: f64::NEG_INFINITY,
            p2,
        }
    }

    pub fn is_lq(&self) -> bool {
        self.p1 == f64::NEG_INFINITY
    }

    fn integrator_weight(&self) -> f64 {
        if self.is_lq() {
            0.0
        } else {
            10f64.powf(self.p1)
        }
    }
}

/// Augmented problem matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `[I, -I, 0]`, the balance output integrated by the LQI states.
    pub h: DMatrix<f64>,
}

/// `[I_n, -I_n, 0_n]`.
pub fn balance_output(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, 3 * n);
    for i in 0..n {
        h[(i, i)] = 1.0;
        h[(i, n + i)] = -1.0;
    }
    h
}

pub fn augment(model: &LinearModel, weights: WeightConfig) -> Result<AugmentedSystem> {
    let nx = model.a_lifted.nrows();
    if !nx.is_multiple_of(3) || model.a_lifted.ncols() != nx || model.b_lifted.nrows() != nx {
        return Err(Error::Design(format!(
            "lifted model has inconsistent shape: A {}x{}, B {}x{}",
            nx,
            model.a_lifted.ncols(),
            model.b_lifted.nrows(),
            model.b_lifted.ncols()
        )));
    }
    let n = nx / 3;
    if model.b_lifted.ncols() != n {
        return Err(Error::Design(format!(
            "expected {n} inputs, got {}",
            model.b_lifted.ncols()
        )));
    }
    if !weights.p2.is_finite() {
        return Err(Error::Design(
            "p2 must be finite so that R is positive definite".into(),
        ));
    }
    if weights.p1.is_nan() || weights.p1 == f64::INFINITY {
        return Err(Error::Design(format!("invalid p1 {}", weights.p1)));
    }
    let h = balance_output(n);
    let na = nx + n;
    let mut a = DMatrix::zeros(na, na);
    a.view_mut((0, 0), (nx, nx)).copy_from(&model.a_lifted);
    a.view_mut((nx, 0), (n, nx)).copy_from(&h);
    a.view_mut((nx, nx), (n, n)).fill_with_identity();
    let mut b = DMatrix::zeros(na, n);
    b.view_mut((0, 0), (nx, n)).copy_from(&model.b_lifted);
    let mut q = DMatrix::zeros(na, na);
    for i in 0..2 * n {
        q[(i, i)] = 1.0;
    }
    let s = weights.integrator_weight();
    for i in 0..n {
        q[(nx + i, nx + i)] = s;
    }
    let r = DMatrix::identity(n, n) * 10f64.powf(weights.p2);
    Ok(AugmentedSystem { a, b, q, r, h })
}

/// Which quantity is watched for stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    /// Successive Riccati iterates.
    Cost,
    /// Successive gains; for stabilisable-only models where `P` may drift.
    Gain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    /// Max-abs change between successive `P` iterates.
    pub tol: f64,
    /// Max-abs change between successive gains, for [`Monitor::Gain`].
    pub gain_tol: f64,
    pub max_iter: usize,
    pub monitor: Monitor,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            gain_tol: 1e-10,
            max_iter: 100_000,
            monitor: Monitor::Cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// `max |P - RHS(P)|` at the returned iterate.
    pub residual: f64,
}

fn gain_from(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pb = p * b;
    let lhs = r + b.transpose() * &pb;
    let rhs = pb.transpose() * a;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Design("R + B'PB is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// One backward step `Q + A'(P - PB (R + B'PB)^{-1} B'P) A`, symmetrised.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pb = p * b;
    let lhs = r + b.transpose() * &pb;
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Design("R + B'PB is not positive definite".into()))?;
    let x = chol.solve(&pb.transpose());
    let inner = p - &pb * x;
    let mut next = q + a.transpose() * inner * a;
    symmetrize(&mut next);
    Ok(next)
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Iterates the Riccati recursion backwards from `P = 0` until it is
/// stationary.
pub fn solve_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: RiccatiOptions,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.ncols() != n
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::Design(
            "Riccati matrices have inconsistent shapes".into(),
        ));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::Design("R must be positive definite".into()));
    }
    let mut p = DMatrix::zeros(n, n);
    let mut gain = DMatrix::zeros(b.ncols(), n);
    for it in 1..=opts.max_iter {
        let next = riccati_step(a, b, q, r, &p)?;
        let converged = match opts.monitor {
            Monitor::Cost => (&next - &p).amax() < opts.tol,
            Monitor::Gain => {
                let k = gain_from(&next, a, b, r)?;
                let done = (&k - &gain).amax() < opts.gain_tol;
                gain = k;
                done
            }
        };
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Design(format!(
                "Riccati iterate diverged after {it} steps"
            )));
        }
        if converged {
            let residual = (&riccati_step(a, b, q, r, &p)? - &p).amax();
            return Ok(RiccatiSolution {
                p,
                iterations: it,
                residual,
            });
        }
    }
    let cl = a - b * gain_from(&p, a, b, r)?;
    Err(Error::Design(format!(
        "Riccati recursion did not converge in {} iterations (closed-loop spectral radius {:.6})",
        opts.max_iter,
        spectral_radius(&cl)
    )))
}

/// Design metadata kept alongside the gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMeta {
    pub sigma: f64,
    pub p1: f64,
    pub p2: f64,
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Regulator gains: `K = [K1, K2]`, `Kp = K1 - K2 H`, `KI = K2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub kp: DMatrix<f64>,
    pub ki: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub meta: GainMeta,
}

impl GainSet {
    /// Rebuilds the partitions from a full `n x 4n` gain.
    pub fn from_full(k: DMatrix<f64>, meta: GainMeta) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != 4 * n {
            return Err(Error::Design(format!(
                "gain must be n x 4n, got {}x{}",
                n,
                k.ncols()
            )));
        }
        let h = balance_output(n);
        let k1 = k.columns(0, 3 * n).clone_owned();
        let k2 = k.columns(3 * n, n).clone_owned();
        let kp = &k1 - &k2 * &h;
        let ki = k2.clone();
        Ok(Self {
            k,
            k1,
            k2,
            kp,
            ki,
            h,
            meta,
        })
    }

    pub fn n_sections(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_lq(&self) -> bool {
        self.k2.iter().all(|v| *v == 0.0)
    }
}

pub fn extract_gains(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    meta: GainMeta,
) -> Result<GainSet> {
    GainSet::from_full(gain_from(p, a, b, r)?, meta)
}

/// Full design pipeline: nominal point, analytic Jacobians, lifting,
/// augmentation, Riccati solve and gain extraction.
pub fn design_gains(scenario: &Scenario, sigma: f64, weights: WeightConfig) -> Result<GainSet> {
    let lin = design_model_for(scenario, sigma)?;
    let aug = augment(&lin, weights)?;
    let opts = RiccatiOptions {
        monitor: if sigma >= 1.0 {
            Monitor::Gain
        } else {
            Monitor::Cost
        },
        ..RiccatiOptions::default()
    };
    let sol = solve_riccati(&aug.a, &aug.b, &aug.q, &aug.r, opts)?;
    let meta = GainMeta {
        sigma,
        p1: weights.p1,
        p2: weights.p2,
        n: scenario.n_sections(),
        m: lin.steps_per_control,
        iterations: sol.iterations,
        residual: sol.residual,
    };
    extract_gains(&sol.p, &aug.a, &aug.b, &aug.r, meta)
}

/// Largest eigenvalue modulus. Falls back to Gelfand's formula on
/// `M^(2^40)` when the Schur iteration stalls (it can on exact repeated
/// unit eigenvalues).
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    }
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut pow = 1.0;
    for _ in 0..40 {
        let s = p.amax();
        if s == 0.0 {
            return 0.0;
        }
        p /= s;
        log_scale += s.ln() / pow;
        p = &p * &p;
        pow *= 2.0;
    }
    (log_scale + p.norm().ln() / pow).exp()
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Spectral radius of `A~ - B~ K`.
pub fn closed_loop_radius(aug: &AugmentedSystem, gains: &GainSet) -> f64 {
    spectral_radius(&(&aug.a - &aug.b * &gains.k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_dare_golden_ratio() {
        let one = scalar(1.0);
        let sol = solve_riccati(&one, &one, &one, &one, RiccatiOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - phi).abs() < 1e-9);
        let k = gain_from(&sol.p, &one, &one, &one).unwrap();
        assert!((k[(0, 0)] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn zero_cost_gives_zero_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let sol = solve_riccati(
            &a,
            &b,
            &DMatrix::zeros(2, 2),
            &scalar(1.0),
            RiccatiOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.p, DMatrix::zeros(2, 2));
        assert_eq!(
            gain_from(&sol.p, &a, &b, &scalar(1.0)).unwrap(),
            DMatrix::zeros(1, 2)
        );
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let one = scalar(1.0);
        assert!(solve_riccati(&one, &one, &one, &scalar(-1.0), RiccatiOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let one = scalar(1.0);
        let opts = RiccatiOptions {
            max_iter: 3,
            ..RiccatiOptions::default()
        };
        let err = solve_riccati(&scalar(1.2), &one, &one, &one, opts).unwrap_err();
        assert!(err.to_string().contains("did not converge"), "{err}");
    }

    #[test]
    fn gain_monitor_handles_uncontrollable_drift() {
        // second state is an uncontrollable, weighted integrator: P grows
        // without bound, K still settles
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let q = DMatrix::identity(2, 2);
        let opts = RiccatiOptions {
            monitor: Monitor::Gain,
            ..RiccatiOptions::default()
        };
        let sol = solve_riccati(&a, &b, &q, &scalar(1.0), opts).unwrap();
        assert!(sol.iterations < 1000);
    }

    #[test]
    fn balance_output_difference() {
        let h = balance_output(3);
        let x = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 0.5, 0.5, 4.0, 9.0, 9.0, 9.0]);
        assert_eq!((h * x).as_slice(), &[0.5, 1.5, -1.0]);
    }

    #[test]
    fn augment_block_layout() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 / 10.0);
        let b = DMatrix::from_fn(3, 1, |i, _| i as f64 + 1.0);
        let mut lin = LinearModel::new(a.clone(), b.clone());
        lin.a_lifted = a.clone();
        let aug = augment(&lin, WeightConfig::lq(-3.0)).unwrap();
        assert_eq!(aug.a.shape(), (4, 4));
        assert_eq!(aug.q[(3, 3)], 0.0);
        assert_eq!(aug.a[(3, 3)], 1.0);
        assert_eq!(aug.a[(3, 0)], 1.0);
        assert_eq!(aug.a[(3, 1)], -1.0);
        assert_eq!(aug.b[(3, 0)], 0.0);
        assert!((aug.r[(0, 0)] - 1e-3).abs() < 1e-18);
        let aug = augment(&lin, WeightConfig::lqi(-2.5, 0.0)).unwrap();
        assert!((aug.q[(3, 3)] - 10f64.powf(-2.5)).abs() < 1e-18);
        assert!(augment(&lin, WeightConfig::lqi(0.0, f64::INFINITY)).is_err());
        let bad = LinearModel::new(DMatrix::zeros(4, 4), DMatrix::zeros(4, 1));
        assert!(augment(&bad, WeightConfig::lq(0.0)).is_err());
    }

    fn reference_scenario() -> Scenario {
        Scenario::from_toml_str(include_str!("../scenarios/uncongested.toml")).unwrap()
    }

    #[test]
    fn spectral_radius_of_identity_block() {
        let mut m = DMatrix::identity(4, 4);
        m[(2, 0)] = 1.0;
        m[(0, 0)] = 0.5;
        assert!((spectral_radius(&m) - 1.0).abs() < 1e-6);
        assert!(
            (spectral_radius(&DMatrix::from_diagonal_element(3, 3, 0.25)) - 0.25).abs() < 1e-12
        );
    }

    #[test]
    fn reference_configuration_is_stable() {
        let scn = reference_scenario();
        let lin = design_model_for(&scn, 0.95).unwrap();
        let w = WeightConfig::lqi(-2.5, -3.0);
        let aug = augment(&lin, w).unwrap();
        assert_eq!(aug.a.shape(), (24, 24));
        let sol = solve_riccati(&aug.a, &aug.b, &aug.q, &aug.r, RiccatiOptions::default()).unwrap();
        assert!(sol.residual < 1e-9, "residual {}", sol.residual);
        assert!((&sol.p - sol.p.transpose()).amax() < 1e-12);
        assert!(min_symmetric_eigenvalue(&sol.p) >= -1e-9 * sol.p.amax());
        let g = design_gains(&scn, 0.95, w).unwrap();
        assert!(closed_loop_radius(&aug, &g) < 1.0);
        assert_eq!(g.ki.clone().rank(1e-12), 6);
        assert_eq!(g.k.shape(), (6, 24));
        assert_eq!(g.kp.shape(), (6, 18));
    }

    #[test]
    fn lq_has_zero_integral_gain() {
        let g = design_gains(&reference_scenario(), 0.95, WeightConfig::lq(-3.0)).unwrap();
        assert!(g.is_lq());
        assert_eq!(g.kp, g.k1);
    }

    #[test]
    fn tiny_integrator_weight_approaches_lq() {
        let scn = reference_scenario();
        let lq = design_gains(&scn, 0.95, WeightConfig::lq(-3.0)).unwrap();
        let lqi = design_gains(&scn, 0.95, WeightConfig::lqi(-5.0, -3.0)).unwrap();
        let rel = (&lq.kp - &lqi.kp).amax() / lq.kp.amax();
        assert!(rel < 0.05, "relative gap {rel}");
    }

    #[test]
    fn recursion_is_monotone_from_zero() {
        let scn = reference_scenario();
        let lin = design_model_for(&scn, 0.95).unwrap();
        let aug = augment(&lin, WeightConfig::lqi(-2.5, -3.0)).unwrap();
        let mut p = DMatrix::zeros(24, 24);
        for _ in 0..60 {
            let next = riccati_step(&aug.a, &aug.b, &aug.q, &aug.r, &p).unwrap();
            assert!(min_symmetric_eigenvalue(&(&next - &p)) >= -1e-9);
            p = next;
        }
    }

    #[test]
    fn sigma_one_uses_gain_monitor() {
        let g = design_gains(&reference_scenario(), 1.0, WeightConfig::lqi(-2.5, -3.0)).unwrap();
        assert!(g.meta.iterations > 0);
        assert!(g.k.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn partition_identity() {
        let g = design_gains(&reference_scenario(), 0.95, WeightConfig::lqi(-2.5, -3.0)).unwrap();
        let dx = nalgebra::DVector::from_fn(18, |i, _| (i as f64 * 0.37).sin());
        let y = nalgebra::DVector::from_fn(6, |i, _| (i as f64 * 1.3).cos());
        let mut z = nalgebra::DVector::zeros(24);
        z.rows_mut(0, 18).copy_from(&dx);
        z.rows_mut(18, 6).copy_from(&y);
        let lhs = &g.k * z;
        let rhs = &g.k1 * &dx + &g.k2 * &y;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn random_stable_systems_give_psd_stabilising_solutions(
                a in proptest::collection::vec(-0.6f64..0.6, 9),
                b in proptest::collection::vec(-1.0f64..1.0, 3),
                p2 in -2.0f64..2.0,
            ) {
                let a = DMatrix::from_row_slice(3, 3, &a);
                let b = DMatrix::from_row_slice(3, 1, &b);
                let q = DMatrix::identity(3, 3);
                let r = DMatrix::from_element(1, 1, 10f64.powf(p2));
                let sol = solve_riccati(&a, &b, &q, &r, RiccatiOptions::default()).unwrap();
                prop_assert!(sol.residual < 1e-9);
                prop_assert!((&sol.p - sol.p.transpose()).amax() < 1e-12);
                prop_assert!(min_symmetric_eigenvalue(&sol.p) >= -1e-9 * sol.p.amax().max(1.0));
                let k = gain_from(&sol.p, &a, &b, &r).unwrap();
                prop_assert!(spectral_radius(&(&a - &b * k)) < 1.0);
            }
        }
    }
}
