//! The three studies built on the solver: the vanishing-diffusion sweep,
//! a manufactured-solution order study, and the L1 stability experiment for
//! the transport system.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimates::linear_fit;
use crate::grid::{self, Field, Grid};
use crate::model::{build_initial, InitialCondition, Params};
use crate::stepper::{
    advance, run_from, stable_dt, FluxScheme, Forcing, RunError, RunOptions, SchemeOptions,
    StepControl, Trajectory,
};
use crate::velocity::{RhsForm, VelocitySolver};

/// Least-squares slope of `log y` against `log x` and the fit's `R^2`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept) = linear_fit(&pts);
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, r2)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Averages pairs of fine cells onto the coarse grid.
fn restrict(fine: &[f64]) -> Vec<f64> {
    fine.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepReference {
    /// The `delta = 0` transport solution on the same grid.
    #[default]
    Transport,
    /// The run with the smallest `delta`.
    SmallestDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub reference: SweepReference,
    /// Also run the transport system on the refined grid `2n` and report
    /// `|u_n - R u_2n|_sup` as an estimate of the spatial error.
    pub richardson: bool,
    pub snapshot_stride: usize,
    pub scheme: SchemeOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            reference: SweepReference::Transport,
            richardson: false,
            snapshot_stride: usize::MAX,
            scheme: SchemeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub law: String,
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    pub times: Vec<f64>,
    /// `errors[k][j] = |u_{delta_k}(t_j) - u_ref(t_j)|_sup`; NaN for diverged
    /// runs, zero for the reference itself under self-reference.
    pub errors: Vec<Vec<f64>>,
    /// Numerical diffusion of the upwind scheme, `h max|phi| / 2`.
    pub floor: f64,
    /// Fitted `p` in `error ~ delta^p`, per comparison time, over the
    /// deltas above the floor.
    pub rates: Vec<f64>,
    /// Errors strictly decrease with delta above the floor, per time.
    pub monotone: Vec<bool>,
    /// Deltas whose runs diverged.
    pub diverged: Vec<f64>,
    /// Spatial error estimate of the reference per time (Richardson option).
    pub richardson: Option<Vec<f64>>,
}

impl SweepReport {
    pub fn above_floor(&self) -> Vec<usize> {
        (0..self.deltas.len())
            .filter(|&k| self.deltas[k] > self.floor)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.diverged.is_empty()
            && self.monotone.iter().all(|&m| m)
            && self.rates.iter().all(|&p| p > 0.0)
    }
}

/// Every run of a sweep, for checks that need the trajectories.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub reference: Option<Trajectory>,
    /// One per delta, in the order of `report.deltas`; `None` if diverged.
    pub runs: Vec<Option<Trajectory>>,
}

impl SweepOutcome {
    pub fn completed_runs(&self) -> Vec<&Trajectory> {
        self.runs.iter().flatten().collect()
    }
}

fn validate_sweep(deltas: &[f64], times: &[f64], sc: &StepControl) -> Result<()> {
    let mut errs = Vec::new();
    if deltas.is_empty() {
        errs.push("sweep.deltas: at least one delta is required".to_string());
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        errs.push("sweep.deltas: every delta must lie in (0,1)".to_string());
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        errs.push("sweep.deltas: deltas must be strictly decreasing".to_string());
    }
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= sc.t_end)) {
        errs.push(format!(
            "sweep.times: comparison times must lie in (0, t_end = {}]",
            sc.t_end
        ));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Runs the transport reference and one IMEX run per delta (in parallel)
/// from the same initial state and compares them in the sup norm at `times`.
pub fn delta_sweep(
    ic: &InitialCondition,
    base: &Params,
    deltas: &[f64],
    times: &[f64],
    sc: &StepControl,
    g: &Grid,
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    validate_sweep(deltas, times, sc)?;
    let u0 = build_initial(ic, g)?;
    let run_opts = RunOptions {
        snapshot_stride: opts.snapshot_stride,
        stop_times: times.to_vec(),
        scheme: opts.scheme,
    };

    let with_ref = opts.reference == SweepReference::Transport;
    let mut jobs: Vec<f64> = deltas.to_vec();
    if with_ref {
        jobs.push(0.0);
    }
    let mut results: Vec<std::result::Result<Trajectory, RunError>> = jobs
        .par_iter()
        .map(|&d| run_from(u0.clone(), &base.with_delta(d), sc, g, &run_opts, None))
        .collect();

    let reference_result = if with_ref { results.pop() } else { None };
    let mut runs = Vec::with_capacity(deltas.len());
    let mut diverged = Vec::new();
    for (res, &d) in results.into_iter().zip(deltas) {
        match res {
            Ok(tr) => runs.push(Some(tr)),
            Err(RunError {
                error: Error::Divergence { .. },
                ..
            }) => {
                diverged.push(d);
                runs.push(None);
            }
            Err(e) => return Err(e.error),
        }
    }
    let reference = match reference_result {
        Some(Ok(tr)) => Some(tr),
        Some(Err(e)) => return Err(e.error),
        None => None,
    };

    let (ref_tr, ref_index) = match &reference {
        Some(tr) => (Some(tr), None),
        None => {
            let last = deltas.len() - 1;
            (runs[last].as_ref(), Some(last))
        }
    };

    let mut errors = vec![vec![f64::NAN; times.len()]; deltas.len()];
    if let Some(rt) = ref_tr {
        for (k, run) in runs.iter().enumerate() {
            if Some(k) == ref_index {
                errors[k].iter_mut().for_each(|e| *e = 0.0);
                continue;
            }
            if let Some(tr) = run {
                for (j, &t) in times.iter().enumerate() {
                    if let (Some(a), Some(b)) = (tr.snapshot_at(t), rt.snapshot_at(t)) {
                        errors[k][j] = sup_diff(&a.u, &b.u);
                    }
                }
            }
        }
    }

    let phi_max = ref_tr
        .map(|tr| tr.diagnostics.iter().map(|d| d.phi_sup).fold(0.0, f64::max))
        .unwrap_or(f64::NAN);
    let floor = 0.5 * g.h() * phi_max;

    let compared: Vec<usize> = (0..deltas.len())
        .filter(|&k| deltas[k] > floor && Some(k) != ref_index)
        .collect();
    let mut rates = Vec::with_capacity(times.len());
    let mut monotone = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let errs: Vec<f64> = compared.iter().map(|&k| errors[k][j]).collect();
        monotone.push(errs.windows(2).all(|w| w[1] < w[0]) && errs.iter().all(|e| e.is_finite()));
        let ds: Vec<f64> = compared.iter().map(|&k| deltas[k]).collect();
        let usable: Vec<(f64, f64)> = ds
            .iter()
            .zip(&errs)
            .filter(|(_, e)| **e > 0.0 && e.is_finite())
            .map(|(d, e)| (*d, *e))
            .collect();
        rates.push(if usable.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
            loglog_fit(&x, &y).0
        } else {
            f64::NAN
        });
    }

    let richardson = if opts.richardson {
        let fine_grid = Grid::new(2 * g.n())?;
        let fine_u0 = build_initial(ic, &fine_grid)?;
        let fine = run_from(
            fine_u0,
            &base.with_delta(0.0),
            sc,
            &fine_grid,
            &run_opts,
            None,
        )?;
        let coarse = match &reference {
            Some(tr) => tr.clone(),
            None => run_from(u0.clone(), &base.with_delta(0.0), sc, g, &run_opts, None)?,
        };
        Some(
            times
                .iter()
                .map(|&t| match (coarse.snapshot_at(t), fine.snapshot_at(t)) {
                    (Some(c), Some(f)) => sup_diff(&c.u, &restrict(&f.u)),
                    _ => f64::NAN,
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(SweepOutcome {
        report: SweepReport {
            law: base.law.name().to_string(),
            deltas: deltas.to_vec(),
            times: times.to_vec(),
            errors,
            floor,
            rates,
            monotone,
            diverged,
            richardson,
        },
        reference,
        runs,
    })
}

/// Manufactured pair `u* = c + A e^{-t} cos(pi x)`, `phi* = A e^{-t} sin(pi x)`.
/// `u*` has zero slope and `phi*` vanishes at `x = ±1`. The sources are
/// obtained by substituting the pair into both equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub params: Params,
    pub base: f64,
    pub amplitude: f64,
}

impl Manufactured {
    pub fn new(params: Params) -> Self {
        Manufactured {
            params,
            base: 2.0,
            amplitude: 1.0,
        }
    }

    pub fn u(&self, t: f64, x: f64) -> f64 {
        self.base + self.amplitude * (-t).exp() * (PI * x).cos()
    }

    pub fn phi(&self, t: f64, x: f64) -> f64 {
        self.amplitude * (-t).exp() * (PI * x).sin()
    }
}

impl Forcing for Manufactured {
    fn density_source(&self, t: f64, x: f64) -> f64 {
        let p = &self.params;
        let e = self.amplitude * (-t).exp();
        let (s, c) = (PI * x).sin_cos();
        let u = self.base + e * c;
        let u_t = -e * c;
        let u_x = -PI * e * s;
        let u_xx = -PI * PI * e * c;
        let phi = e * s;
        let phi_x = PI * e * c;
        u_t - p.delta * u_xx + (u_x * phi + u * phi_x) - p.r * u * p.law.eval(u)
    }

    fn velocity_source(&self, t: f64, x: f64) -> f64 {
        let p = &self.params;
        let e = self.amplitude * (-t).exp();
        let (s, c) = (PI * x).sin_cos();
        let u = self.base + e * c;
        let u_x = -PI * e * s;
        let phi = e * s;
        let phi_xx = -PI * PI * e * s;
        -p.epsilon * phi_xx + phi - p.law.derivative(u) * u_x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub law: String,
    pub resolutions: Vec<usize>,
    pub t_end: f64,
    /// Step used at each resolution.
    pub dts: Vec<f64>,
    /// Discrete L2 error of `u` at `t_end`, coupled run.
    pub coupled_errors: Vec<f64>,
    pub coupled_order: f64,
    pub coupled_r2: f64,
    /// Discrete L2 error of `phi` with `u*` frozen at `t_end`.
    pub elliptic_errors: Vec<f64>,
    pub elliptic_order: f64,
    pub elliptic_r2: f64,
    /// Both error sequences decrease under refinement.
    pub monotone: bool,
}

impl OrderReport {
    pub const MIN_COUPLED_ORDER: f64 = 1.0;
    pub const MIN_R2: f64 = 0.98;
    pub const ELLIPTIC_ORDER_RANGE: (f64, f64) = (1.8, 2.2);

    pub fn passed(&self) -> bool {
        let (lo, hi) = Self::ELLIPTIC_ORDER_RANGE;
        self.monotone
            && self.coupled_order >= Self::MIN_COUPLED_ORDER
            && self.coupled_r2 >= Self::MIN_R2
            && (lo..=hi).contains(&self.elliptic_order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsOptions {
    pub t_end: f64,
    /// Time step as a multiple of `h`.
    pub dt_per_h: f64,
    pub scheme: SchemeOptions,
}

impl Default for MmsOptions {
    fn default() -> Self {
        MmsOptions {
            t_end: 0.5,
            dt_per_h: 0.2,
            scheme: SchemeOptions::default(),
        }
    }
}

/// Simultaneous `(h, dt)` refinement against the manufactured pair, plus an
/// elliptic-only study with the density frozen at `u*`.
pub fn mms_order_study(
    p: &Params,
    resolutions: &[usize],
    opts: &MmsOptions,
) -> Result<OrderReport> {
    if resolutions.len() < 3 {
        return Err(Error::invalid(
            "mms.resolutions",
            "at least 3 resolutions are required",
        ));
    }
    if !(p.delta > 0.0) {
        return Err(Error::invalid(
            "params.delta",
            "the manufactured study exercises the IMEX scheme and needs delta > 0",
        ));
    }
    let mut sorted = resolutions.to_vec();
    sorted.sort_unstable();
    let mms = Manufactured::new(*p);

    let results: Vec<Result<(f64, f64, f64)>> = sorted
        .par_iter()
        .map(|&n| {
            let g = Grid::new(n)?;
            let h = g.h();
            let dt = opts.dt_per_h * h;
            let sc = StepControl::new(1.0, dt, opts.t_end)?;
            let u0 = g.sample(|x| mms.u(0.0, x));
            let run_opts = RunOptions {
                snapshot_stride: usize::MAX,
                scheme: opts.scheme,
                ..RunOptions::default()
            };
            let tr = run_from(u0, p, &sc, &g, &run_opts, Some(&mms))?;
            let exact = g.sample(|x| mms.u(opts.t_end, x));
            let diff: Vec<f64> = tr
                .last_snapshot()
                .u
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| a - b)
                .collect();
            let coupled = grid::l2_squared(h, &diff).sqrt();

            let solver = VelocitySolver::new(p, &g, opts.scheme.rhs_form)?;
            let source: Vec<f64> = g
                .centers()
                .iter()
                .map(|&x| mms.velocity_source(opts.t_end, x))
                .collect();
            let phi = solver.solve(&exact, Some(&source))?;
            let phi_exact = g.sample(|x| mms.phi(opts.t_end, x));
            let diff: Vec<f64> = phi
                .values
                .iter()
                .zip(phi_exact.iter())
                .map(|(a, b)| a - b)
                .collect();
            let elliptic = grid::l2_squared(h, &diff).sqrt();
            Ok((dt, coupled, elliptic))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let hs: Vec<f64> = sorted.iter().map(|&n| 2.0 / n as f64).collect();
    let dts: Vec<f64> = results.iter().map(|r| r.0).collect();
    let coupled: Vec<f64> = results.iter().map(|r| r.1).collect();
    let elliptic: Vec<f64> = results.iter().map(|r| r.2).collect();
    let (coupled_order, coupled_r2) = loglog_fit(&hs, &coupled);
    let (elliptic_order, elliptic_r2) = loglog_fit(&hs, &elliptic);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Ok(OrderReport {
        law: p.law.name().to_string(),
        resolutions: sorted,
        t_end: opts.t_end,
        dts,
        monotone: decreasing(&coupled) && decreasing(&elliptic),
        coupled_errors: coupled,
        coupled_order,
        coupled_r2,
        elliptic_errors: elliptic,
        elliptic_order,
        elliptic_r2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub law: String,
    pub etas: Vec<f64>,
    pub times: Vec<f64>,
    /// `separations[k][j] = |u_1(t_j) - u_2(t_j)|_1` for `etas[k]`.
    pub separations: Vec<Vec<f64>>,
    /// Smallest `C` with `s(t) <= s(0) e^{C t}` on the smallest positive eta.
    pub rate: f64,
    /// `max_t s(t) / (s(0) e^{C t}) - 1` per eta with the shared `rate`.
    pub envelope_excess: Vec<f64>,
    /// `s_eta(T) / eta` per eta.
    pub linear_response: Vec<f64>,
    /// `|q_k / q_{k+1} - 1|` between successive etas.
    pub linearity_deviation: Vec<f64>,
    /// Rate refitted on the grid `2n`, when requested.
    pub refined_rate: Option<f64>,
}

impl StabilityReport {
    pub const LINEARITY_TOLERANCE: f64 = 0.2;
    pub const REFINEMENT_TOLERANCE: f64 = 0.3;

    pub fn envelope_holds(&self, rel_tol: f64) -> bool {
        self.envelope_excess.iter().all(|&e| e <= rel_tol)
    }

    pub fn linear(&self) -> bool {
        self.linearity_deviation
            .iter()
            .all(|&d| d <= Self::LINEARITY_TOLERANCE)
    }

    pub fn passed(&self, envelope_tolerance: f64) -> bool {
        self.rate.is_finite()
            && self.envelope_holds(envelope_tolerance)
            && self.linear()
            && self
                .refinement_change()
                .map_or(true, |c| c <= Self::REFINEMENT_TOLERANCE)
    }

    /// Relative change of the fitted rate under refinement.
    pub fn refinement_change(&self) -> Option<f64> {
        self.refined_rate
            .map(|r| (r - self.rate).abs() / self.rate.abs().max(1e-12))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    /// Shape added to `u0`, scaled by each eta.
    pub perturbation: InitialCondition,
    pub refine: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            perturbation: InitialCondition::Bump {
                center: -0.3,
                width: 0.4,
                amplitude: 1.0,
                baseline: 0.0,
            },
            refine: false,
        }
    }
}

/// Steps `u0` and `u0 + eta b` side by side with a shared step size and
/// records `|u_1 - u_2|_1` at every step.
fn paired_separation(
    u0: &Field,
    bump: &Field,
    eta: f64,
    p: &Params,
    sc: &StepControl,
    g: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = VelocitySolver::new(p, g, RhsForm::Divergence)?;
    let mut a = u0.clone();
    let mut b: Field = u0
        .iter()
        .zip(bump.iter())
        .map(|(u, v)| u + eta * v)
        .collect::<Vec<_>>()
        .into();
    let sep = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        grid::l1(g.h(), &d)
    };
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut seps = vec![sep(&a, &b)];
    while sc.t_end - t > 1e-12 * sc.t_end.max(1.0) {
        let phi_a = solver.solve(&a, None)?;
        let phi_b = solver.solve(&b, None)?;
        let limit = stable_dt(&a, &phi_a, p, g).min(stable_dt(&b, &phi_b, p, g));
        let mut dt = sc.dt_max.min(sc.cfl_safety * limit);
        let landing = sc.t_end - t <= dt * (1.0 + 1e-9);
        if landing {
            dt = sc.t_end - t;
        }
        a = advance(&a, &phi_a, p, dt, g, None, FluxScheme::Upwind)
            .map_err(|_| Error::Divergence { last_valid_time: t })?;
        b = advance(&b, &phi_b, p, dt, g, None, FluxScheme::Upwind)
            .map_err(|_| Error::Divergence { last_valid_time: t })?;
        t = if landing { sc.t_end } else { t + dt };
        times.push(t);
        seps.push(sep(&a, &b));
    }
    Ok((times, seps))
}

fn growth_rate(times: &[f64], seps: &[f64]) -> f64 {
    let s0 = seps[0];
    times
        .iter()
        .zip(seps)
        .skip(1)
        .map(|(&t, &s)| (s / s0).ln() / t)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// L1 separation of transport solutions started from `u0` and
/// `u0 + eta * perturbation` for each eta.
pub fn gronwall_stability(
    ic: &InitialCondition,
    p: &Params,
    etas: &[f64],
    sc: &StepControl,
    g: &Grid,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if p.delta != 0.0 {
        return Err(Error::invalid(
            "params.delta",
            "the stability experiment concerns the transport system (delta = 0)",
        ));
    }
    if etas.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::invalid(
            "stability.etas",
            "perturbation sizes must be >= 0",
        ));
    }
    if !(sc.t_end > 0.0) {
        return Err(Error::invalid("step.t_end", "t_end must be > 0"));
    }
    let u0 = build_initial(ic, g)?;
    let bump = build_initial(&opts.perturbation, g)?;
    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = etas
        .par_iter()
        .map(|&eta| paired_separation(&u0, &bump, eta, p, sc, g))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let times = runs.first().map(|r| r.0.clone()).unwrap_or_default();

    let positive: Vec<usize> = (0..etas.len()).filter(|&k| etas[k] > 0.0).collect();
    let smallest = positive
        .iter()
        .copied()
        .min_by(|&i, &j| etas[i].total_cmp(&etas[j]));
    let rate = smallest.map_or(0.0, |k| growth_rate(&runs[k].0, &runs[k].1));

    let envelope_excess = runs
        .iter()
        .map(|(ts, ss)| {
            if ss[0] == 0.0 {
                return if ss.iter().all(|&s| s == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                };
            }
            ts.iter()
                .zip(ss)
                .map(|(&t, &s)| s / (ss[0] * (rate * t).exp()) - 1.0)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let linear_response: Vec<f64> = runs
        .iter()
        .zip(etas)
        .map(|((_, ss), &eta)| {
            if eta > 0.0 {
                ss[ss.len() - 1] / eta
            } else {
                0.0
            }
        })
        .collect();
    let mut order = positive.clone();
    order.sort_by(|&i, &j| etas[j].total_cmp(&etas[i]));
    let linearity_deviation = order
        .windows(2)
        .map(|w| (linear_response[w[0]] / linear_response[w[1]] - 1.0).abs())
        .collect();

    let refined_rate = match (opts.refine, smallest) {
        (true, Some(k)) => {
            let fine = Grid::new(2 * g.n())?;
            let u0f = build_initial(ic, &fine)?;
            let bf = build_initial(&opts.perturbation, &fine)?;
            let (ts, ss) = paired_separation(&u0f, &bf, etas[k], p, sc, &fine)?;
            Some(growth_rate(&ts, &ss))
        }
        _ => None,
    };

    Ok(StabilityReport {
        law: p.law.name().to_string(),
        etas: etas.to_vec(),
        times,
        separations: runs.into_iter().map(|r| r.1).collect(),
        rate,
        envelope_excess,
        linear_response,
        linearity_deviation,
        refined_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReproductionLaw;

    const BI: ReproductionLaw = ReproductionLaw::Bistable { a: 0.25 };

    #[test]
    fn loglog_fit_of_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        let (p, r2) = loglog_fit(&xs, &ys);
        assert!((p - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_initial_state_sweep_is_exact() {
        let g = Grid::new(32).unwrap();
        let p = Params::new(0.0, 0.5, 1.0, BI).unwrap();
        let sc = StepControl::new(0.9, 1e-2, 0.5).unwrap();
        let out = delta_sweep(
            &InitialCondition::Constant(0.6),
            &p,
            &[0.1, 0.01],
            &[0.25, 0.5],
            &sc,
            &g,
            &SweepOptions::default(),
        )
        .unwrap();
        for row in &out.report.errors {
            assert!(row.iter().all(|&e| e <= 1e-10));
        }
        assert_eq!(out.report.floor, 0.0);
    }

    #[test]
    fn sweep_input_validation() {
        let g = Grid::new(16).unwrap();
        let p = Params::new(0.0, 0.5, 1.0, BI).unwrap();
        let sc = StepControl::new(0.9, 1e-2, 0.5).unwrap();
        let ic = InitialCondition::Constant(0.5);
        let opts = SweepOptions::default();
        assert!(delta_sweep(&ic, &p, &[0.01, 0.1], &[0.5], &sc, &g, &opts).is_err());
        assert!(delta_sweep(&ic, &p, &[0.1], &[0.7], &sc, &g, &opts).is_err());
        assert!(delta_sweep(&ic, &p, &[1.5], &[0.5], &sc, &g, &opts).is_err());
    }

    #[test]
    fn flat_manufactured_state_is_preserved() {
        let p = Params::new(0.1, 0.5, 1.0, BI).unwrap();
        let mms = Manufactured {
            params: p,
            base: 2.0,
            amplitude: 0.0,
        };
        let p0 = Params { r: 0.0, ..p };
        let zero = Manufactured { params: p0, ..mms };
        for x in [-1.0, -0.3, 0.0, 0.7] {
            assert_eq!(zero.density_source(0.2, x), 0.0);
            assert_eq!(zero.velocity_source(0.2, x), 0.0);
        }
        let g = Grid::new(32).unwrap();
        let sc = StepControl::new(1.0, 1e-2, 0.3).unwrap();
        let tr = run_from(
            Field::constant(&g, 2.0),
            &p,
            &sc,
            &g,
            &RunOptions::default(),
            Some(&mms),
        )
        .unwrap();
        assert!(tr
            .last_snapshot()
            .u
            .iter()
            .all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn manufactured_sources_satisfy_the_equations() {
        // Finite-difference check of the closed-form sources.
        let p = Params::new(0.07, 0.4, 1.3, BI).unwrap();
        let m = Manufactured::new(p);
        let (t, x, k) = (0.3, 0.37, 1e-4);
        let u = |t, x| m.u(t, x);
        let phi = |t, x| m.phi(t, x);
        let u_t = (u(t + k, x) - u(t - k, x)) / (2.0 * k);
        let u_xx = (u(t, x + k) - 2.0 * u(t, x) + u(t, x - k)) / (k * k);
        let flux_x = (u(t, x + k) * phi(t, x + k) - u(t, x - k) * phi(t, x - k)) / (2.0 * k);
        let s_u = u_t - p.delta * u_xx + flux_x - p.r * u(t, x) * p.law.eval(u(t, x));
        assert!((s_u - m.density_source(t, x)).abs() < 1e-5);
        let phi_xx = (phi(t, x + k) - 2.0 * phi(t, x) + phi(t, x - k)) / (k * k);
        let e_x = (p.law.eval(u(t, x + k)) - p.law.eval(u(t, x - k))) / (2.0 * k);
        let s_phi = -p.epsilon * phi_xx + phi(t, x) - e_x;
        assert!((s_phi - m.velocity_source(t, x)).abs() < 1e-5);
    }

    #[test]
    fn zero_perturbation_has_zero_separation() {
        let g = Grid::new(64).unwrap();
        let p = Params::new(0.0, 0.5, 1.0, BI).unwrap();
        let sc = StepControl::new(0.9, 5e-3, 0.5).unwrap();
        let ic = InitialCondition::Bump {
            center: 0.1,
            width: 0.5,
            amplitude: 1.0,
            baseline: 0.2,
        };
        let rep = gronwall_stability(&ic, &p, &[0.0, 1e-3], &sc, &g, &StabilityOptions::default())
            .unwrap();
        assert!(rep.separations[0].iter().all(|&s| s == 0.0));
        assert_eq!(rep.envelope_excess[0], 0.0);
        assert!(rep.rate.is_finite());
        assert!(rep.envelope_holds(1e-12));
    }
}
