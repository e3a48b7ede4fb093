//! Checks of the a priori bounds on a finished trajectory.
//!
//! Bounds with an explicit envelope (mass, L2 energy, entropy) are
//! evaluated literally. Bounds whose constants are only known to exist
//! (derivative norms) are checked as uniformity across a diffusivity sweep.
//! Every check reports a margin; a margin `>= -tolerance` passes.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{Params, ReproductionLaw};
use crate::stepper::Trajectory;
use crate::velocity::{grad_lower_bound_margin, Velocity};

/// Absolute slack of the mass bound: roundoff plus an `O(dt)` allowance.
pub fn mass_tolerance(tr: &Trajectory) -> f64 {
    1e-8 + 1e-3 * tr.dt_max
}

/// Slack of the time-integrated energy and entropy inequalities, `O(dt + h)`.
pub fn integrated_tolerance(tr: &Trajectory) -> f64 {
    let scale = tr.final_time().max(1.0) * (1.0 + tr.diagnostics[0].l2.powi(2));
    1e-8 + INTEGRATED_TOL_FACTOR * (tr.max_dt() + tr.grid.h()) * scale
}

const INTEGRATED_TOL_FACTOR: f64 = 1.0;

/// Slack for the pointwise lower bound on `d phi / dx`.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Default allowed ratio between the largest and smallest max-in-time norm
/// across a diffusivity sweep.
pub const DEFAULT_KAPPA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub law: String,
    pub passed: bool,
    /// `>= 0` means the bound holds without slack.
    pub worst_margin: f64,
    pub time_of_worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn from_series(
        name: &str,
        law: ReproductionLaw,
        series: impl IntoIterator<Item = (f64, f64)>,
        tolerance: f64,
    ) -> Self {
        let (time_of_worst, worst_margin) =
            series
                .into_iter()
                .fold((0.0, f64::INFINITY), |acc, (t, m)| {
                    if m < acc.1 || m.is_nan() {
                        (t, m)
                    } else {
                        acc
                    }
                });
        CheckResult {
            name: name.to_string(),
            law: law.name().to_string(),
            passed: worst_margin >= -tolerance,
            worst_margin,
            time_of_worst,
            tolerance,
        }
    }

    /// Re-evaluates `passed` under a different tolerance.
    pub fn with_tolerance(&self, tolerance: f64) -> Self {
        CheckResult {
            passed: self.worst_margin >= -tolerance,
            tolerance,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub checks: Vec<CheckResult>,
}

impl EstimateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Left-endpoint running integral of `f` over the recorded steps.
fn running_integral(tr: &Trajectory, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(tr.times.len());
    out.push(0.0);
    for k in 1..tr.times.len() {
        acc += (tr.times[k] - tr.times[k - 1]) * f(k - 1);
        out.push(acc);
    }
    out
}

/// `||u(t)||_1 <= ||u0||_1 + 2 r (1-a) t` (bistable), `||u0||_1 + 2 r t` (monostable).
pub fn check_mass_bound(tr: &Trajectory, p: &Params) -> CheckResult {
    let rate = match p.law {
        ReproductionLaw::Bistable { a } => 2.0 * p.r * (1.0 - a),
        ReproductionLaw::Monostable => 2.0 * p.r,
    };
    let l1_0 = tr.diagnostics[0].l1;
    CheckResult::from_series(
        "mass_bound",
        p.law,
        tr.times
            .iter()
            .zip(&tr.diagnostics)
            .map(|(&t, d)| (t, l1_0 + rate * t - d.l1)),
        mass_tolerance(tr),
    )
}

fn bistable_threshold(p: &Params) -> f64 {
    p.law.threshold().expect("bistable law")
}

/// Margins of the L2 energy bounds for the bistable law, per recorded time:
/// the Gronwall envelope
/// `||u(t)||^2 <= (||u0||^2 + 4 r (1-a) t) exp((a+1)^2 t / (2 eps))`
/// and the dissipation budget
/// `||u(t)||^2 + int [eps/2 |phi_x|^2 + |phi|^2 + 2 delta |u_x|^2]
///     <= ||u0||^2 + int [(a+1)^2/(2 eps) |u|^2 + 4 r (1-a)]`.
pub fn energy_margins(tr: &Trajectory, p: &Params) -> (Vec<f64>, Vec<f64>) {
    let a = bistable_threshold(p);
    let eps = p.epsilon;
    let growth = (a + 1.0).powi(2) / (2.0 * eps);
    let d = &tr.diagnostics;
    let e0 = d[0].l2.powi(2);
    let envelope = tr
        .times
        .iter()
        .zip(d)
        .map(|(&t, dk)| (e0 + 4.0 * p.r * (1.0 - a) * t) * (growth * t).exp() - dk.l2.powi(2))
        .collect();
    let dissipation = running_integral(tr, |k| {
        0.5 * eps * d[k].dphi_l2.powi(2) + d[k].phi_l2.powi(2) + 2.0 * p.delta * d[k].du_l2.powi(2)
    });
    let budget = running_integral(tr, |k| growth * d[k].l2.powi(2) + 4.0 * p.r * (1.0 - a));
    let inequality = (0..d.len())
        .map(|k| e0 + budget[k] - d[k].l2.powi(2) - dissipation[k])
        .collect();
    (envelope, inequality)
}

/// Residual of the exact L2 balance behind the bistable energy bound:
/// `||u(t)||^2 - ||u0||^2 + int [eps |phi_x|^2 + |phi|^2 + 2 delta |u_x|^2
///   - 2 r int u^2 E(u) - (a+1) int u_x phi]`. Returns `max_t |residual|`.
pub fn energy_balance_defect(tr: &Trajectory, p: &Params) -> f64 {
    let a = bistable_threshold(p);
    let d = &tr.diagnostics;
    let flux = running_integral(tr, |k| {
        p.epsilon * d[k].dphi_l2.powi(2) + d[k].phi_l2.powi(2) + 2.0 * p.delta * d[k].du_l2.powi(2)
            - 2.0 * p.r * d[k].u2_e
            - (a + 1.0) * d[k].du_phi
    });
    let e0 = d[0].l2.powi(2);
    (0..d.len())
        .map(|k| (d[k].l2.powi(2) - e0 + flux[k]).abs())
        .fold(0.0, f64::max)
}

pub fn check_energy_bistable(tr: &Trajectory, p: &Params) -> CheckResult {
    let (envelope, inequality) = energy_margins(tr, p);
    CheckResult::from_series(
        "energy",
        p.law,
        tr.times
            .iter()
            .zip(envelope.iter().zip(&inequality))
            .map(|(&t, (e, i))| (t, e.min(*i))),
        integrated_tolerance(tr),
    )
}

/// Margins of the monostable entropy budget per recorded time:
/// `int u log u (t) + int [eps |phi_x|^2 + |phi|^2 + 4 delta |(sqrt u)_x|^2]
///     <= int u0 log u0 + 2 r t`.
pub fn entropy_margins(tr: &Trajectory, p: &Params) -> Vec<f64> {
    let d = &tr.diagnostics;
    let dissipation = running_integral(tr, |k| {
        p.epsilon * d[k].dphi_l2.powi(2)
            + d[k].phi_l2.powi(2)
            + 4.0 * p.delta * d[k].dsqrt_l2.powi(2)
    });
    (0..d.len())
        .map(|k| d[0].entropy + 2.0 * p.r * tr.times[k] - d[k].entropy - dissipation[k])
        .collect()
}

/// Residual of the exact entropy balance
/// `d/dt int u log u + eps |phi_x|^2 + |phi|^2 + 4 delta |(sqrt u)_x|^2
///   = r int u E(u) (log u + 1)`, time-integrated. Returns `max_t |residual|`.
pub fn entropy_balance_defect(tr: &Trajectory, p: &Params) -> f64 {
    let d = &tr.diagnostics;
    let flux = running_integral(tr, |k| {
        p.epsilon * d[k].dphi_l2.powi(2)
            + d[k].phi_l2.powi(2)
            + 4.0 * p.delta * d[k].dsqrt_l2.powi(2)
            - p.r * d[k].ue_log
    });
    (0..d.len())
        .map(|k| (d[k].entropy - d[0].entropy + flux[k]).abs())
        .fold(0.0, f64::max)
}

pub fn check_entropy_monostable(tr: &Trajectory, p: &Params) -> CheckResult {
    let margins = entropy_margins(tr, p);
    CheckResult::from_series(
        "entropy",
        p.law,
        tr.times.iter().copied().zip(margins),
        integrated_tolerance(tr),
    )
}

/// Summary of the `d phi / dx` monitors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMonitor {
    /// Worst proof-form margin and its time.
    pub proof: (f64, f64),
    /// Worst statement-form margin and its time.
    pub statement: (f64, f64),
    pub sup_dphi: f64,
    /// Least-squares growth rate of `log ||phi_x||_inf`.
    pub growth_rate: f64,
    /// Largest excess of `log ||phi_x||_inf` over the fitted line.
    pub excess: f64,
}

impl GradientMonitor {
    /// More than a factor 10 above the fitted exponential is treated as blow-up.
    pub const BLOWUP_EXCESS: f64 = std::f64::consts::LN_10;

    pub fn blowup(&self) -> bool {
        self.excess > Self::BLOWUP_EXCESS
    }
}

pub fn gradient_monitor(tr: &Trajectory, p: &Params) -> Result<GradientMonitor> {
    let g = &tr.grid;
    let mut proof = (f64::INFINITY, 0.0);
    let mut statement = (f64::INFINITY, 0.0);
    for s in &tr.snapshots {
        let phi = Velocity::from_centers(s.phi.clone());
        let m = grad_lower_bound_margin(&phi, &s.u, p, g)?;
        if m.proof < proof.0 {
            proof = (m.proof, s.time);
        }
        if m.statement < statement.0 {
            statement = (m.statement, s.time);
        }
    }

    // Gradients below this are roundoff.
    let floor = 1e-12;
    let pts: Vec<(f64, f64)> = tr
        .times
        .iter()
        .zip(&tr.diagnostics)
        .map(|(&t, d)| (t, d.dphi_sup.max(floor).ln()))
        .collect();
    let (slope, intercept) = linear_fit(&pts);
    let excess = pts
        .iter()
        .map(|&(t, y)| y - (intercept + slope * t))
        .fold(0.0, f64::max);
    Ok(GradientMonitor {
        proof,
        statement,
        sup_dphi: tr
            .diagnostics
            .iter()
            .map(|d| d.dphi_sup)
            .fold(0.0, f64::max),
        growth_rate: slope,
        excess,
    })
}

/// Lower bound on `d phi / dx` at every snapshot, plus the no-blow-up monitor.
/// The reported margin is the proof-form margin; a detected blow-up fails
/// the check regardless of margin.
pub fn check_gradient_bounds(tr: &Trajectory, p: &Params) -> Result<CheckResult> {
    let mon = gradient_monitor(tr, p)?;
    let mut res = CheckResult::from_series(
        "gradient_lower_bound",
        p.law,
        [(mon.proof.1, mon.proof.0)],
        GRADIENT_TOLERANCE,
    );
    res.passed &= !mon.blowup();
    Ok(res)
}

/// Slope and intercept of the least-squares line through `pts`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, pts.first().map_or(0.0, |p| p.1));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Which max-in-time norm a uniformity check looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepNorm {
    GradientL1,
    Sup,
    GradientL2,
}

impl SweepNorm {
    pub const ALL: [SweepNorm; 3] = [SweepNorm::GradientL1, SweepNorm::Sup, SweepNorm::GradientL2];

    pub fn check_name(&self) -> &'static str {
        match self {
            SweepNorm::GradientL1 => "uniform_du_l1",
            SweepNorm::Sup => "uniform_sup",
            SweepNorm::GradientL2 => "uniform_du_l2",
        }
    }

    fn pick(&self, d: &crate::stepper::Diagnostics) -> f64 {
        match self {
            SweepNorm::GradientL1 => d.du_l1,
            SweepNorm::Sup => d.sup,
            SweepNorm::GradientL2 => d.du_l2,
        }
    }
}

/// Ratio of the largest to smallest `max_t` norm across the runs, with the
/// time at which the overall maximum was attained.
pub fn sweep_norm_ratio(runs: &[&Trajectory], norm: SweepNorm) -> (f64, f64) {
    let maxima: Vec<(f64, f64)> = runs
        .iter()
        .map(|tr| {
            tr.times
                .iter()
                .zip(&tr.diagnostics)
                .map(|(&t, d)| (t, norm.pick(d)))
                .fold(
                    (0.0, f64::NEG_INFINITY),
                    |a, b| if b.1 > a.1 { b } else { a },
                )
        })
        .collect();
    let hi = maxima.iter().copied().fold(
        (0.0, f64::NEG_INFINITY),
        |a, b| if b.1 > a.1 { b } else { a },
    );
    let lo = maxima.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let ratio = if hi.1 <= 1e-12 { 1.0 } else { hi.1 / lo };
    (ratio, hi.0)
}

/// Uniformity in `delta` of `||u_x||_1`, `||u||_inf` and `||u_x||_2`: the
/// ratio of the largest to smallest `max_t` norm over the sweep must not
/// exceed `kappa`. One result per norm.
pub fn check_derivative_norms(runs: &[&Trajectory], p: &Params, kappa: f64) -> Vec<CheckResult> {
    SweepNorm::ALL
        .iter()
        .map(|norm| {
            let (ratio, t) = sweep_norm_ratio(runs, *norm);
            CheckResult::from_series(norm.check_name(), p.law, [(t, kappa - ratio)], 0.0)
        })
        .collect()
}

/// Every single-trajectory check that applies to the law.
pub fn check_trajectory(tr: &Trajectory, p: &Params) -> Result<EstimateReport> {
    let jobs: Vec<Box<dyn Fn() -> Result<CheckResult> + Sync>> = vec![
        Box::new(|| Ok(check_mass_bound(tr, p))),
        Box::new(|| {
            Ok(match p.law {
                ReproductionLaw::Bistable { .. } => check_energy_bistable(tr, p),
                ReproductionLaw::Monostable => check_entropy_monostable(tr, p),
            })
        }),
        Box::new(|| check_gradient_bounds(tr, p)),
    ];
    let checks = jobs
        .par_iter()
        .map(|job| job())
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::InitialCondition;
    use crate::stepper::{run, StepControl};

    fn uniform_run(law: ReproductionLaw, c: f64, r: f64) -> (Trajectory, Params) {
        let g = Grid::new(32).unwrap();
        let p = Params::new(0.1, 0.5, r, law).unwrap();
        let sc = StepControl::new(0.9, 1e-2, 1.0).unwrap();
        (
            run(&InitialCondition::Constant(c), &p, &sc, &g, 10).unwrap(),
            p,
        )
    }

    #[test]
    fn steady_state_margins_match_closed_forms() {
        let a = 0.25;
        let (tr, p) = uniform_run(ReproductionLaw::Bistable { a }, 1.0, 1.5);
        let (env, ineq) = energy_margins(&tr, &p);
        let growth = (a + 1.0f64).powi(2) / (2.0 * p.epsilon);
        for (k, &t) in tr.times.iter().enumerate() {
            // ||u||^2 = 2 throughout.
            let expected_env = (2.0 + 4.0 * p.r * (1.0 - a) * t) * (growth * t).exp() - 2.0;
            assert!((env[k] - expected_env).abs() < 1e-10);
            let expected_ineq = (2.0 * growth + 4.0 * p.r * (1.0 - a)) * t;
            assert!((ineq[k] - expected_ineq).abs() < 1e-10);
        }
        assert!(energy_balance_defect(&tr, &p) < 1e-12);

        let (tr, p) = uniform_run(ReproductionLaw::Monostable, 1.0, 2.0);
        let m = entropy_margins(&tr, &p);
        for (k, &t) in tr.times.iter().enumerate() {
            assert!((m[k] - 2.0 * p.r * t).abs() < 1e-10);
        }
        assert!(entropy_balance_defect(&tr, &p) < 1e-12);
        let mass = check_mass_bound(&tr, &p);
        assert!(mass.passed);
        assert!(mass.worst_margin.abs() < 1e-12);
    }

    #[test]
    fn logistic_mass_bound_is_strict() {
        let (tr, p) = uniform_run(ReproductionLaw::Monostable, 0.5, 1.0);
        for (&t, d) in tr.times.iter().zip(&tr.diagnostics).skip(1) {
            assert!(d.l1 < 1.0 + 2.0 * t);
        }
        let res = check_mass_bound(&tr, &p);
        assert!(res.passed);
        assert_eq!(res.time_of_worst, 0.0);
    }

    #[test]
    fn constant_density_gradient_check() {
        let (tr, p) = uniform_run(ReproductionLaw::Bistable { a: 0.3 }, 0.6, 1.0);
        let res = check_gradient_bounds(&tr, &p).unwrap();
        assert!(res.passed && res.worst_margin >= 0.0, "{res:?}");
        let (ratio, _) = sweep_norm_ratio(&[&tr, &tr], SweepNorm::GradientL2);
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn tolerance_is_monotone() {
        let g = Grid::new(64).unwrap();
        let p = Params::new(0.05, 0.5, 1.0, ReproductionLaw::Bistable { a: 0.25 }).unwrap();
        let sc = StepControl::new(0.9, 1e-2, 0.5).unwrap();
        let ic = InitialCondition::Bump {
            center: 0.0,
            width: 0.4,
            amplitude: 1.0,
            baseline: 0.1,
        };
        let tr = run(&ic, &p, &sc, &g, 5).unwrap();
        let report = check_trajectory(&tr, &p).unwrap();
        assert_eq!(report.checks.len(), 3);
        for c in &report.checks {
            for tol in [0.0, 1e-9, 1e-3, 1.0, 1e3] {
                let tight = c.with_tolerance(tol);
                let loose = c.with_tolerance(tol * 10.0 + 1e-12);
                assert!(!tight.passed || loose.passed);
            }
        }
        assert_eq!(report, check_trajectory(&tr, &p).unwrap());
    }

    #[test]
    fn fit_recovers_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (s, b) = linear_fit(&pts);
        assert!((s + 0.5).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}
