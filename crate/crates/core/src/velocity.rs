//! Elliptic velocity solve `-eps phi'' + phi = d/dx E(u)`, `phi(±1) = 0`.
//!
//! The operator is discretized with the standard three-point stencil. The
//! Dirichlet trace is imposed through antisymmetric ghosts
//! `phi_{-1} = -phi_0`, `phi_n = -phi_{n-1}`, so the wall value
//! `(phi_ghost + phi_adjacent) / 2` vanishes and the matrix stays symmetric
//! and strictly diagonally dominant for every `eps > 0`.

use crate::error::{Error, Result};
use crate::grid::{self, gradient_with_ghosts, sup, Field, GradientBc, Grid, TridiagonalSystem};
use crate::model::{Params, ReproductionLaw};

/// How the right-hand side `d/dx E(u)` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhsForm {
    /// Centered differences of `E(u)`, reflected at the walls.
    #[default]
    Divergence,
    /// `E'(u_i)` times the centered gradient of `u`.
    ChainRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    /// Cell-center values.
    pub values: Field,
    /// Face values; the two wall faces are exactly zero.
    pub faces: Vec<f64>,
}

impl Velocity {
    pub fn from_centers(values: Field) -> Self {
        let n = values.len();
        let mut faces = vec![0.0; n + 1];
        for i in 1..n {
            faces[i] = 0.5 * (values[i - 1] + values[i]);
        }
        Velocity { values, faces }
    }

    pub fn zero(g: &Grid) -> Self {
        Velocity::from_centers(Field::constant(g, 0.0))
    }

    pub fn sup(&self) -> f64 {
        sup(&self.values)
    }

    /// Largest face speed, the quantity entering the advective CFL limit.
    pub fn max_face_speed(&self) -> f64 {
        sup(&self.faces)
    }
}

/// The assembled matrix `-eps D^2 + I` for a fixed grid; reusable across solves.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl HelmholtzOperator {
    pub fn new(epsilon: f64, g: &Grid) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(
                "params.epsilon",
                format!("epsilon must be > 0, got {epsilon}"),
            ));
        }
        let n = g.n();
        let k = epsilon / (g.h() * g.h());
        let mut diag = vec![1.0 + 2.0 * k; n];
        diag[0] = 1.0 + 3.0 * k;
        diag[n - 1] = 1.0 + 3.0 * k;
        Ok(HelmholtzOperator {
            sub: vec![-k; n - 1],
            diag,
            sup: vec![-k; n - 1],
        })
    }

    pub fn system(&self, rhs: Vec<f64>) -> Result<TridiagonalSystem> {
        TridiagonalSystem::new(self.sub.clone(), self.diag.clone(), self.sup.clone(), rhs)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Field> {
        let sys = self.system(rhs.to_vec())?;
        grid::thomas_solve(&sys)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        TridiagonalSystem {
            sub: self.sub.clone(),
            diag: self.diag.clone(),
            sup: self.sup.clone(),
            rhs: Vec::new(),
        }
        .apply(x)
    }
}

/// Solves `-eps phi'' + phi = rhs` with `phi(±1) = 0`.
pub fn solve_helmholtz(rhs: &[f64], epsilon: f64, g: &Grid) -> Result<Field> {
    g.check(rhs)?;
    HelmholtzOperator::new(epsilon, g)?.solve(rhs)
}

/// Discrete `d/dx E(u)` at cell centers.
pub fn velocity_rhs(u: &[f64], law: ReproductionLaw, g: &Grid, form: RhsForm) -> Result<Field> {
    g.check(u)?;
    Ok(Field::new(rhs_unchecked(u, law, g.h(), form)))
}

fn rhs_unchecked(u: &[f64], law: ReproductionLaw, h: f64, form: RhsForm) -> Vec<f64> {
    match form {
        RhsForm::Divergence => {
            let e: Vec<f64> = u.iter().map(|&v| law.eval(v)).collect();
            gradient_with_ghosts(&e, h, GradientBc::NeumannZero)
        }
        RhsForm::ChainRule => {
            let du = gradient_with_ghosts(u, h, GradientBc::NeumannZero);
            u.iter()
                .zip(du)
                .map(|(&v, d)| law.derivative(v) * d)
                .collect()
        }
    }
}

/// Velocity for density `u`, divergence-form right-hand side.
pub fn solve_velocity(u: &[f64], p: &Params, g: &Grid) -> Result<Velocity> {
    VelocitySolver::new(p, g, RhsForm::Divergence)?.solve(u, None)
}

/// Velocity solver with the operator assembled once for a fixed `(eps, grid)`.
#[derive(Debug, Clone)]
pub struct VelocitySolver {
    op: HelmholtzOperator,
    law: ReproductionLaw,
    h: f64,
    n: usize,
    form: RhsForm,
}

impl VelocitySolver {
    pub fn new(p: &Params, g: &Grid, form: RhsForm) -> Result<Self> {
        Ok(VelocitySolver {
            op: HelmholtzOperator::new(p.epsilon, g)?,
            law: p.law,
            h: g.h(),
            n: g.n(),
            form,
        })
    }

    /// Solves for `u`, adding `source` to the right-hand side when given.
    pub fn solve(&self, u: &[f64], source: Option<&[f64]>) -> Result<Velocity> {
        if u.len() != self.n {
            return Err(Error::Structural {
                expected: self.n,
                got: u.len(),
            });
        }
        let mut rhs = rhs_unchecked(u, self.law, self.h, self.form);
        if let Some(s) = source {
            rhs.iter_mut().zip(s).for_each(|(r, s)| *r += s);
        }
        let phi = self.op.solve(&rhs)?;
        Ok(Velocity::from_centers(phi))
    }
}

/// Centered `d phi / dx` at cell centers using the antisymmetric ghosts.
pub fn phi_gradient(phi: &[f64], h: f64) -> Vec<f64> {
    let n = phi.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let left = if i == 0 { -phi[0] } else { phi[i - 1] };
        let right = if i + 1 == n { -phi[n - 1] } else { phi[i + 1] };
        out[i] = (right - left) / (2.0 * h);
    }
    out
}

/// `||phi'||_2^2` from face differences. The two wall faces carry half
/// weight, which makes `eps ||phi'||^2 + ||phi||^2 = <rhs, phi>` an exact
/// discrete identity for the assembled operator.
pub fn phi_gradient_l2_squared(phi: &[f64], h: f64) -> f64 {
    let n = phi.len();
    let interior: f64 = phi.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let walls = 0.5 * ((2.0 * phi[0]).powi(2) + (2.0 * phi[n - 1]).powi(2));
    (interior + walls) / h
}

/// `int_{-1}^{1} int_y^x phi(z) dz dy` at each center, by midpoint quadrature.
pub fn double_integral(phi: &[f64], h: f64) -> Vec<f64> {
    // With P(x) = int_{-1}^x phi, the double integral is 2 P(x) - int P.
    let mut cumulative = Vec::with_capacity(phi.len());
    let mut acc = 0.0;
    for &v in phi {
        cumulative.push(acc + 0.5 * h * v);
        acc += h * v;
    }
    let total: f64 = h * cumulative.iter().sum::<f64>();
    cumulative.iter().map(|p| 2.0 * p - total).collect()
}

/// Pointwise defect of the exact representation of `d phi / dx`:
///
/// ```text
/// bistable:   phi'(x) = (1/2e) DI(x) + u^2/e - (a+1) u/e - |u|_2^2/(2e) + (a+1) int u/(2e)
/// monostable: phi'(x) = (1/2e) DI(x) + u/e - int u/(2e)
/// ```
///
/// where `DI` is [`double_integral`]. Returns `phi'_h - rhs_h` per cell.
pub fn gradient_phi_identity(u: &[f64], phi: &Velocity, p: &Params, g: &Grid) -> Result<Field> {
    g.check(u)?;
    g.check(&phi.values)?;
    let h = g.h();
    let eps = p.epsilon;
    let dphi = phi_gradient(&phi.values, h);
    let di = double_integral(&phi.values, h);
    let mass = grid::integral(h, u);
    let defect = match p.law {
        ReproductionLaw::Bistable { a } => {
            let l2sq = grid::l2_squared(h, u);
            (0..g.n())
                .map(|i| {
                    let rhs = di[i] / (2.0 * eps) + u[i] * u[i] / eps
                        - (a + 1.0) * u[i] / eps
                        - l2sq / (2.0 * eps)
                        + (a + 1.0) * mass / (2.0 * eps);
                    dphi[i] - rhs
                })
                .collect()
        }
        ReproductionLaw::Monostable => (0..g.n())
            .map(|i| dphi[i] - (di[i] / (2.0 * eps) + u[i] / eps - mass / (2.0 * eps)))
            .collect(),
    };
    Ok(Field::new(defect))
}

/// Margins of the pointwise lower bound on `d phi / dx`.
///
/// `proof` uses the constant `2/eps` in front of `|phi|_inf`; `statement`
/// uses `4`. The remaining constant is instantiated as `|u|_2^2 / (2 eps)`
/// (bistable, plus `(a+1)^2 / (4 eps)`) or `|u|_1 / (2 eps)` (monostable).
/// Nonnegative margins mean the bound holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientMargins {
    pub proof: f64,
    pub statement: f64,
    pub min_gradient: f64,
}

pub fn grad_lower_bound_margin(
    phi: &Velocity,
    u: &[f64],
    p: &Params,
    g: &Grid,
) -> Result<GradientMargins> {
    g.check(u)?;
    g.check(&phi.values)?;
    let h = g.h();
    let eps = p.epsilon;
    let min_gradient = phi_gradient(&phi.values, h)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let phi_sup = phi.sup();
    let constant = match p.law {
        ReproductionLaw::Bistable { a } => {
            (a + 1.0).powi(2) / (4.0 * eps) + grid::l2_squared(h, u) / (2.0 * eps)
        }
        ReproductionLaw::Monostable => grid::l1(h, u) / (2.0 * eps),
    };
    Ok(GradientMargins {
        proof: min_gradient + 2.0 / eps * phi_sup + constant,
        statement: min_gradient + 4.0 * phi_sup + constant,
        min_gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_initial, InitialCondition};

    fn params(law: ReproductionLaw, eps: f64) -> Params {
        Params::new(0.01, eps, 1.0, law).unwrap()
    }

    fn helmholtz_error(n: usize) -> f64 {
        let g = Grid::new(n).unwrap();
        let phi = solve_helmholtz(&vec![1.0; n], 1.0, &g).unwrap();
        g.centers()
            .iter()
            .zip(phi.iter())
            .map(|(&x, &v)| (v - (1.0 - x.cosh() / 1f64.cosh())).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_density_gives_zero_velocity() {
        let g = Grid::new(32).unwrap();
        let p = params(ReproductionLaw::Bistable { a: 0.25 }, 0.5);
        let v = solve_velocity(&Field::constant(&g, 0.7), &p, &g).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(v.faces[0], 0.0);
        assert_eq!(v.faces[32], 0.0);
    }

    #[test]
    fn helmholtz_closed_form() {
        let e200 = helmholtz_error(200);
        let h = 0.01;
        assert!(e200 <= 5.0 * h * h, "{e200}");
        let ratio = e200 / helmholtz_error(400);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
        // phi(0) = 1 - 1/cosh(1) = 0.351945...; the two middle cells straddle 0.
        let g = Grid::new(200).unwrap();
        let phi = solve_helmholtz(&vec![1.0; 200], 1.0, &g).unwrap();
        assert!((0.5 * (phi[99] + phi[100]) - 0.351_945_726).abs() < 1e-4);
    }

    #[test]
    fn monostable_linear_density_flips_sign() {
        let g = Grid::new(400).unwrap();
        let u = g.sample(|x| x + 2.0);
        let p = params(ReproductionLaw::Monostable, 1.0);
        let v = solve_velocity(&u, &p, &g).unwrap();
        let err = g
            .centers()
            .iter()
            .zip(v.values.iter())
            .map(|(&x, &phi)| (phi + (1.0 - x.cosh() / 1f64.cosh())).abs())
            .fold(0.0, f64::max);
        // Wall cells see the reflected ghost of E(u), an O(h) local defect.
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn weak_identity_and_residual() {
        let g = Grid::new(300).unwrap();
        let u = build_initial(
            &InitialCondition::RandomFourier {
                seed: 11,
                modes: 8,
                baseline: 0.3,
            },
            &g,
        )
        .unwrap();
        let p = params(ReproductionLaw::Bistable { a: 0.25 }, 0.3);
        let rhs = velocity_rhs(&u, p.law, &g, RhsForm::Divergence).unwrap();
        let op = HelmholtzOperator::new(p.epsilon, &g).unwrap();
        let phi = op.solve(&rhs).unwrap();
        let residual = op
            .apply(&phi)
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(residual <= 1e-10 * (1.0 + sup(&rhs)));

        let h = g.h();
        let lhs = p.epsilon * phi_gradient_l2_squared(&phi, h) + grid::l2_squared(h, &phi);
        let pairing = grid::inner(h, &rhs, &phi);
        assert!((lhs - pairing).abs() < 1e-8, "{lhs} vs {pairing}");
    }

    #[test]
    fn nonnegative_rhs_gives_nonnegative_velocity() {
        let g = Grid::new(64).unwrap();
        let rhs = g.sample(|x| (3.0 * x).sin().max(0.0));
        let phi = solve_helmholtz(&rhs, 0.2, &g).unwrap();
        assert!(phi.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let g = Grid::new(16).unwrap();
        assert!(solve_helmholtz(&[0.0; 16], 0.0, &g).is_err());
    }

    #[test]
    fn chain_rule_agrees_with_divergence_form() {
        let g = Grid::new(800).unwrap();
        let u = g.sample(|x| 0.5 + 0.3 * (std::f64::consts::PI * x).cos());
        let law = ReproductionLaw::Bistable { a: 0.25 };
        let d = velocity_rhs(&u, law, &g, RhsForm::Divergence).unwrap();
        let c = velocity_rhs(&u, law, &g, RhsForm::ChainRule).unwrap();
        let diff = d
            .iter()
            .zip(c.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-3, "{diff}");
    }

    #[test]
    fn identity_holds_for_constant_density() {
        let g = Grid::new(50).unwrap();
        for law in [
            ReproductionLaw::Monostable,
            ReproductionLaw::Bistable { a: 0.4 },
        ] {
            let p = params(law, 0.7);
            let u = Field::constant(&g, 0.8);
            let phi = solve_velocity(&u, &p, &g).unwrap();
            let d = gradient_phi_identity(&u, &phi, &p, &g).unwrap();
            assert!(sup(&d) < 1e-12, "{law:?}: {}", sup(&d));
            let m = grad_lower_bound_margin(&phi, &u, &p, &g).unwrap();
            assert_eq!(m.min_gradient, 0.0);
            assert!(m.proof >= 0.0 && m.statement >= 0.0);
        }
    }

    #[test]
    fn double_integral_of_constant() {
        // int_{-1}^{1} (x - y) dy = 2x for phi = 1.
        let g = Grid::new(40).unwrap();
        let di = double_integral(&[1.0; 40], g.h());
        for (&x, &v) in g.centers().iter().zip(&di) {
            assert!((v - 2.0 * x).abs() < 1e-13);
        }
    }
}
