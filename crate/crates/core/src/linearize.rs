//! Relative-density design model and its linearisation.
//!
//! State ordering is `[rho_tilde_a; rho_tilde_b; gamma]` (length `3n`),
//! the input is the sharing-factor vector (length `n`). `gamma` is the
//! sharing factor of the previous model step, so its rows of `A` are zero
//! and the unit coupling `gamma(k+1) = eps(k)` lives in `B`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Direction, SharingFactor};
use crate::scenario::Scenario;

/// Relative density: density over the critical density of the width the
/// direction held during the previous step.
pub fn relative_density(
    rho: f64,
    eps_prev: SharingFactor,
    rho_cr: f64,
    dir: Direction,
) -> Result<f64> {
    let e = eps_prev.value();
    if e <= 0.0 || e >= 1.0 {
        return Err(Error::Domain(format!(
            "relative density undefined for sharing factor {e}"
        )));
    }
    Ok(rho / (eps_prev.share(dir) * rho_cr))
}

/// Constants of the design model taken from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignModel {
    pub t_model: f64,
    pub lengths: Vec<f64>,
    pub exit_rates_a: Vec<f64>,
    pub exit_rates_b: Vec<f64>,
    pub q_cap: f64,
    pub v_f: f64,
    pub rho_cr: f64,
    /// Weight of the capacity term in the linearised flow; `1 - sigma` goes
    /// to the free-flow branch.
    pub sigma: f64,
}

impl DesignModel {
    pub fn from_scenario(scenario: &Scenario, sigma: f64) -> Self {
        let p = &scenario.params;
        Self {
            t_model: p.t_model,
            lengths: scenario.lengths.clone(),
            exit_rates_a: scenario.exit_rates_a.clone(),
            exit_rates_b: scenario.exit_rates_b.clone(),
            q_cap: p.q_cap,
            v_f: p.v_f,
            rho_cr: p.rho_cr,
            sigma,
        }
    }

    pub fn n_sections(&self) -> usize {
        self.lengths.len()
    }

    fn coef(&self, i: usize) -> f64 {
        self.t_model / (self.lengths[i] * self.rho_cr)
    }

    fn flow_a(&self, rt: f64, eps: f64, gamma: f64) -> f64 {
        self.sigma * eps * self.q_cap + (1.0 - self.sigma) * self.v_f * rt * gamma * self.rho_cr
    }

    fn flow_b(&self, rt: f64, eps: f64, gamma: f64) -> f64 {
        self.sigma * (1.0 - eps) * self.q_cap
            + (1.0 - self.sigma) * self.v_f * rt * (1.0 - gamma) * self.rho_cr
    }
}

/// Linearisation point.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPoint {
    pub rho_tilde_a: Vec<f64>,
    pub rho_tilde_b: Vec<f64>,
    pub eps: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `[q_0^a, r_2^a, ..., r_n^a]`, veh/h.
    pub demand_a: Vec<f64>,
    /// `[r_1^b, ..., r_{n-1}^b, q_{n+1}^b]`, veh/h.
    pub demand_b: Vec<f64>,
    pub sigma: f64,
}

impl NominalPoint {
    /// Nominal point from the scenario's `[design]` block: uniform relative
    /// density and sharing factor, nominal mainstream inflow at both
    /// entrances and the nominal ramp flow wherever an on-ramp exists.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let n = scenario.n_sections();
        let d = &scenario.design;
        let mut demand_a = vec![0.0; n];
        let mut demand_b = vec![0.0; n];
        for i in 0..n {
            if scenario.has_onramp(Direction::A, i) {
                demand_a[i] = d.nominal_onramp;
            }
            if scenario.has_onramp(Direction::B, i) {
                demand_b[i] = d.nominal_onramp;
            }
        }
        demand_a[0] = d.nominal_mainstream;
        demand_b[n - 1] = d.nominal_mainstream;
        Self {
            rho_tilde_a: vec![d.nominal_relative_density; n],
            rho_tilde_b: vec![d.nominal_relative_density; n],
            eps: vec![d.nominal_eps; n],
            gamma: vec![d.nominal_eps; n],
            demand_a,
            demand_b,
            sigma: d.sigma,
        }
    }

    pub fn state(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.eps.len(),
            self.rho_tilde_a
                .iter()
                .chain(&self.rho_tilde_b)
                .chain(&self.gamma)
                .copied(),
        )
    }

    pub fn input(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.eps)
    }
}

/// One step of the nonlinear relative-density model.
///
/// Uses `eps(k) / eps(k-1) ~ 1`, so the previous-step share `gamma` alone
/// scales the conservation terms.
pub fn nonlinear_f(
    model: &DesignModel,
    x: &DVector<f64>,
    eps: &DVector<f64>,
    demand_a: &[f64],
    demand_b: &[f64],
) -> Result<DVector<f64>> {
    let n = model.n_sections();
    if x.len() != 3 * n || eps.len() != n || demand_a.len() != n || demand_b.len() != n {
        return Err(Error::Domain(format!(
            "dimension mismatch for {n} sections"
        )));
    }
    let (ra, rb, g) = (x.rows(0, n), x.rows(n, n), x.rows(2 * n, n));
    if g.iter().any(|v| *v <= 0.0 || *v >= 1.0) {
        return Err(Error::Domain(
            "gamma must lie strictly inside (0, 1)".into(),
        ));
    }
    let mut next = DVector::zeros(3 * n);
    for i in 0..n {
        let c = model.coef(i);
        let inflow = if i == 0 {
            demand_a[0]
        } else {
            (1.0 - model.exit_rates_a[i]) * model.flow_a(ra[i - 1], eps[i - 1], g[i - 1])
                + demand_a[i]
        };
        next[i] = ra[i] + c * (inflow - model.flow_a(ra[i], eps[i], g[i])) / g[i];

        let inflow = if i + 1 == n {
            demand_b[n - 1]
        } else {
            (1.0 - model.exit_rates_b[i]) * model.flow_b(rb[i + 1], eps[i + 1], g[i + 1])
                + demand_b[i]
        };
        next[n + i] = rb[i] + c * (inflow - model.flow_b(rb[i], eps[i], g[i])) / (1.0 - g[i]);

        next[2 * n + i] = eps[i];
    }
    Ok(next)
}

/// Linear model in deviation variables, at model-step and control-step
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub a_lifted: DMatrix<f64>,
    pub b_lifted: DMatrix<f64>,
    pub steps_per_control: usize,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Self {
            a_lifted: a.clone(),
            b_lifted: b.clone(),
            a,
            b,
            steps_per_control: 1,
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
}

/// Closed-form partial derivatives of [`nonlinear_f`] at `nominal`.
pub fn analytic_jacobians(nominal: &NominalPoint, model: &DesignModel) -> LinearModel {
    let n = model.n_sections();
    let s = model.sigma;
    let (qc, vf, rc) = (model.q_cap, model.v_f, model.rho_cr);
    let (ra, rb, g, e) = (
        &nominal.rho_tilde_a,
        &nominal.rho_tilde_b,
        &nominal.gamma,
        &nominal.eps,
    );
    let (da, db) = (&nominal.demand_a, &nominal.demand_b);
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    let mut b = DMatrix::zeros(3 * n, n);
    let gi = 2 * n;
    for i in 0..n {
        let c = model.coef(i);
        let diag = 1.0 - c * (1.0 - s) * vf * rc;

        // direction a, row i
        a[(i, i)] = diag;
        b[(i, i)] = -c * s * qc / g[i];
        let inflow = if i == 0 {
            da[0]
        } else {
            let beta = model.exit_rates_a[i];
            a[(i, i - 1)] = c * (1.0 - beta) * (1.0 - s) * vf * g[i - 1] * rc / g[i];
            b[(i, i - 1)] = c * (1.0 - beta) * s * qc / g[i];
            a[(i, gi + i - 1)] = c * (1.0 - beta) * (1.0 - s) * vf * ra[i - 1] * rc / g[i];
            (1.0 - beta) * model.flow_a(ra[i - 1], e[i - 1], g[i - 1]) + da[i]
        };
        a[(i, gi + i)] = c * (s * e[i] * qc - inflow) / (g[i] * g[i]);

        // direction b, row n + i
        let row = n + i;
        let h = 1.0 - g[i];
        a[(row, row)] = diag;
        b[(row, i)] = c * s * qc / h;
        let inflow = if i + 1 == n {
            db[n - 1]
        } else {
            let beta = model.exit_rates_b[i];
            a[(row, row + 1)] = c * (1.0 - beta) * (1.0 - s) * vf * (1.0 - g[i + 1]) * rc / h;
            b[(row, i + 1)] = -c * (1.0 - beta) * s * qc / h;
            a[(row, gi + i + 1)] = -c * (1.0 - beta) * (1.0 - s) * vf * rb[i + 1] * rc / h;
            (1.0 - beta) * model.flow_b(rb[i + 1], e[i + 1], g[i + 1]) + db[i]
        };
        a[(row, gi + i)] = c * (inflow - s * (1.0 - e[i]) * qc) / (h * h);

        // gamma(k+1) = eps(k)
        b[(gi + i, i)] = 1.0;
    }
    LinearModel::new(a, b)
}

/// Central-difference Jacobians of [`nonlinear_f`]; a verification oracle.
pub fn fd_jacobians(
    nominal: &NominalPoint,
    model: &DesignModel,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x0 = nominal.state();
    let u0 = nominal.input();
    let f = |x: &DVector<f64>, u: &DVector<f64>| {
        nonlinear_f(model, x, u, &nominal.demand_a, &nominal.demand_b)
    };
    let nx = x0.len();
    let nu = u0.len();
    let mut a = DMatrix::zeros(nx, nx);
    for j in 0..nx {
        let (mut xp, mut xm) = (x0.clone(), x0.clone());
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp, &u0)? - f(&xm, &u0)?) / (2.0 * h);
        a.set_column(j, &col);
    }
    let mut b = DMatrix::zeros(nx, nu);
    for j in 0..nu {
        let (mut up, mut um) = (u0.clone(), u0.clone());
        up[j] += h;
        um[j] -= h;
        let col = (f(&x0, &up)? - f(&x0, &um)?) / (2.0 * h);
        b.set_column(j, &col);
    }
    Ok((a, b))
}

/// Holds the input for `m` model steps: `A^m` and `(A^{m-1} + ... + I) B`.
pub fn lift_to_control_step(model: &LinearModel, m: usize) -> Result<LinearModel> {
    if m == 0 {
        return Err(Error::Domain(
            "steps per control interval must be >= 1".into(),
        ));
    }
    let nx = model.a.nrows();
    let mut power = DMatrix::identity(nx, nx);
    let mut sum = DMatrix::zeros(nx, nx);
    for _ in 0..m {
        sum += &power;
        power = &model.a * &power;
    }
    Ok(LinearModel {
        a: model.a.clone(),
        b: model.b.clone(),
        a_lifted: power,
        b_lifted: sum * &model.b,
        steps_per_control: m,
    })
}

/// Builds the lifted design model for a scenario at its configured nominal
/// point (or a caller-supplied sigma).
pub fn design_model_for(scenario: &Scenario, sigma: f64) -> Result<LinearModel> {
    let mut nominal = NominalPoint::from_scenario(scenario);
    nominal.sigma = sigma;
    let model = DesignModel::from_scenario(scenario, sigma);
    lift_to_control_step(
        &analytic_jacobians(&nominal, &model),
        scenario.steps_per_control(),
    )
}

/// Numerical rank of `[B, AB, ..., A^{N-1} B]`, singular values below
/// `rel_tol * max` counted as zero.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> usize {
    let nx = a.nrows();
    let nu = b.ncols();
    let mut ctrb = DMatrix::zeros(nx, nx * nu);
    let mut block = b.clone();
    for j in 0..nx {
        ctrb.view_mut((0, j * nu), (nx, nu)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_like() -> Scenario {
        let mut s = Scenario::empty(6, 360);
        s.exit_rates_a[1] = 0.1;
        s.exit_rates_b[3] = 0.1;
        s.onramp_a[4] = crate::profile::Profile::constant(1000.0);
        s.onramp_b[2] = crate::profile::Profile::constant(1000.0);
        s
    }

    #[test]
    fn relative_density_examples() {
        let e = |v| SharingFactor::new(v).unwrap();
        assert_eq!(
            relative_density(60.0, e(0.5), 120.0, Direction::A).unwrap(),
            1.0
        );
        assert!(
            (relative_density(90.0, e(0.6), 120.0, Direction::A).unwrap() - 1.25).abs() < 1e-12
        );
        assert_eq!(
            relative_density(0.0, e(0.3), 120.0, Direction::B).unwrap(),
            0.0
        );
        assert!(relative_density(10.0, e(1.0), 120.0, Direction::A).is_err());
        assert!(relative_density(10.0, e(0.0), 120.0, Direction::B).is_err());
    }

    #[test]
    fn nominal_point_layout() {
        let nom = NominalPoint::from_scenario(&reference_like());
        assert_eq!(nom.demand_a, vec![5000.0, 0.0, 0.0, 0.0, 1000.0, 0.0]);
        assert_eq!(nom.demand_b, vec![0.0, 0.0, 1000.0, 0.0, 0.0, 5000.0]);
        assert_eq!(nom.gamma, nom.eps);
    }

    #[test]
    fn gamma_update_copies_input() {
        let s = reference_like();
        let nom = NominalPoint::from_scenario(&s);
        let model = DesignModel::from_scenario(&s, 0.95);
        let eps = DVector::from_vec(vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let next = nonlinear_f(&model, &nom.state(), &eps, &nom.demand_a, &nom.demand_b).unwrap();
        assert_eq!(
            next.rows(12, 6).iter().copied().collect::<Vec<_>>(),
            eps.iter().copied().collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_network_stays_empty() {
        let s = reference_like();
        let model = DesignModel::from_scenario(&s, 0.0);
        let mut x = DVector::zeros(18);
        x.rows_mut(12, 6).fill(0.5);
        let eps = DVector::from_element(6, 0.5);
        let next = nonlinear_f(&model, &x, &eps, &[0.0; 6], &[0.0; 6]).unwrap();
        assert!(next.rows(0, 12).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn near_fixed_point_at_nominal() {
        let s = reference_like();
        let nom = NominalPoint::from_scenario(&s);
        let model = DesignModel::from_scenario(&s, 0.95);
        let next = nonlinear_f(
            &model,
            &nom.state(),
            &nom.input(),
            &nom.demand_a,
            &nom.demand_b,
        )
        .unwrap();
        let residual = (&next - nom.state()).amax();
        // Not an exact equilibrium: linearised flow 6000 veh/h against a
        // 5000 veh/h inflow at section 1 gives (T / (L rho_cr)) * 1000 / 0.5 = 5/54.
        assert!((residual - 5.0 / 54.0).abs() < 1e-12, "{residual}");
        assert!(residual < 0.1);
    }

    #[test]
    fn density_diagonal_value() {
        let s = reference_like();
        let nom = NominalPoint::from_scenario(&s);
        let lin = analytic_jacobians(&nom, &DesignModel::from_scenario(&s, 0.95));
        // 1 - (T / L) (1 - sigma) v_f with T/L = 1/180
        let expected = 1.0 - (1.0 / 180.0) * 0.05 * 100.0;
        assert!((lin.a[(0, 0)] - expected).abs() < 1e-12);
        assert!((lin.a[(0, 0)] - 0.972_222_222_222).abs() < 1e-9);
    }

    #[test]
    fn input_coupling_of_gamma_rows() {
        let s = reference_like();
        let nom = NominalPoint::from_scenario(&s);
        let lin = analytic_jacobians(&nom, &DesignModel::from_scenario(&s, 0.95));
        assert_eq!(
            lin.b.view((12, 0), (6, 6)).clone_owned(),
            DMatrix::<f64>::identity(6, 6)
        );
        assert!(lin.a.rows(12, 6).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sparsity_pattern() {
        let s = reference_like();
        let nom = NominalPoint::from_scenario(&s);
        let lin = analytic_jacobians(&nom, &DesignModel::from_scenario(&s, 0.5));
        let n = 6;
        for r in 0..n {
            for c in 0..n {
                // a block lower bidiagonal, b block upper bidiagonal
                if !(c == r || c + 1 == r) {
                    assert_eq!(lin.a[(r, c)], 0.0);
                }
                if !(c == r || c == r + 1) {
                    assert_eq!(lin.a[(n + r, n + c)], 0.0);
                }
                assert_eq!(lin.a[(r, n + c)], 0.0);
                assert_eq!(lin.a[(n + r, c)], 0.0);
            }
        }
    }

    #[test]
    fn lift_closed_forms() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let base = LinearModel::new(a.clone(), b.clone());
        let one = lift_to_control_step(&base, 1).unwrap();
        assert_eq!(one.a_lifted, a);
        assert_eq!(one.b_lifted, b);
        let two = lift_to_control_step(&base, 2).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((&two.a_lifted - &a * &a).amax() < 1e-15);
        assert!((&two.b_lifted - (&a + id) * &b).amax() < 1e-15);
        assert!(lift_to_control_step(&base, 0).is_err());
    }

    #[test]
    fn lifted_model_is_controllable_below_sigma_one() {
        let s = reference_like();
        for sigma in [0.0, 0.5, 0.95] {
            let lin = design_model_for(&s, sigma).unwrap();
            assert_eq!(lin.steps_per_control, 6);
            assert_eq!(
                controllability_rank(&lin.a_lifted, &lin.b_lifted, 1e-8),
                18,
                "sigma {sigma}"
            );
        }
    }
}
