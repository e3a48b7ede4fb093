//! Time integration.
//!
//! Each step freezes the velocity computed from the current density, then
//! applies an explicit upwind advection + reaction update followed, when
//! `delta > 0`, by an implicit Neumann diffusion solve
//! `(I - delta dt D^2) u_new = u*`. With `delta = 0` the implicit stage is
//! skipped and the update is the explicit upwind transport scheme. Because
//! the wall face velocities vanish, the transport update consumes no
//! boundary data.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{self, thomas_solve, Field, GradientBc, Grid, TridiagonalSystem};
use crate::model::{build_initial, InitialCondition, Params};
use crate::velocity::{phi_gradient, phi_gradient_l2_squared, RhsForm, Velocity, VelocitySolver};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Fraction of the positivity-preserving step actually taken.
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub t_end: f64,
}

impl StepControl {
    pub const DEFAULT_CFL_SAFETY: f64 = 0.9;

    pub fn new(cfl_safety: f64, dt_max: f64, t_end: f64) -> Result<Self> {
        let sc = StepControl {
            cfl_safety,
            dt_max,
            t_end,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            out.push(format!(
                "step.cfl_safety: cfl_safety must lie in (0,1], got {}",
                self.cfl_safety
            ));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            out.push(format!(
                "step.dt_max: dt_max must be > 0, got {}",
                self.dt_max
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            out.push(format!(
                "step.t_end: t_end must be >= 0, got {}",
                self.t_end
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(msg) => {
                let (key, message) = msg.split_once(": ").unwrap_or(("step", &msg));
                Err(Error::invalid(key, message))
            }
        }
    }
}

/// Face reconstruction of the density for the advective flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    /// First-order upwind.
    #[default]
    Upwind,
    /// Second-order upwind with minmod-limited slopes. Positivity needs
    /// half the advective step of [`FluxScheme::Upwind`].
    Minmod,
}

impl FluxScheme {
    /// Factor on the outflow term of the step limit.
    fn cfl_factor(self) -> f64 {
        match self {
            FluxScheme::Upwind => 1.0,
            FluxScheme::Minmod => 2.0,
        }
    }
}

/// Scheme switches; the defaults are the production configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchemeOptions {
    pub rhs_form: RhsForm,
    pub flux: FluxScheme,
    /// Re-solve the velocity at the predicted density and redo the step
    /// with the averaged velocity.
    pub fixed_point_resolve: bool,
}

/// Manufactured forcing added to both equations.
pub trait Forcing: Sync {
    fn density_source(&self, t: f64, x: f64) -> f64;
    fn velocity_source(&self, t: f64, x: f64) -> f64;
}

/// Upwind face fluxes `F_{i+1/2}`; both wall fluxes are exactly zero.
pub fn advective_flux(u: &[f64], phi: &Velocity, g: &Grid) -> Result<Vec<f64>> {
    g.check(u)?;
    g.check(&phi.values)?;
    Ok(upwind_fluxes(u, &phi.faces))
}

fn upwind_fluxes(u: &[f64], faces: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut flux = vec![0.0; n + 1];
    for i in 1..n {
        let v = faces[i];
        flux[i] = if v >= 0.0 { v * u[i - 1] } else { v * u[i] };
    }
    flux
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn limited_fluxes(u: &[f64], faces: &[f64]) -> Vec<f64> {
    let n = u.len();
    // Reflected ghosts give zero slope in the wall cells.
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                minmod(u[i] - u[i - 1], u[i + 1] - u[i])
            }
        })
        .collect();
    let mut flux = vec![0.0; n + 1];
    for i in 1..n {
        let v = faces[i];
        flux[i] = if v >= 0.0 {
            v * (u[i - 1] + 0.5 * slope[i - 1])
        } else {
            v * (u[i] - 0.5 * slope[i])
        };
    }
    flux
}

fn fluxes(u: &[f64], faces: &[f64], scheme: FluxScheme) -> Vec<f64> {
    match scheme {
        FluxScheme::Upwind => upwind_fluxes(u, faces),
        FluxScheme::Minmod => limited_fluxes(u, faces),
    }
}

/// Largest step for which the explicit stage keeps every cell nonnegative:
/// `dt * (outflow_i / h + r L_E) <= 1`, where `outflow_i` is the sum of the
/// outgoing face speeds of cell `i` and `L_E` bounds `|d(uE)/du|` on the
/// current range of `u`.
pub fn stable_dt(u: &[f64], phi: &Velocity, p: &Params, g: &Grid) -> f64 {
    stable_dt_with(u, phi, p, g, FluxScheme::Upwind)
}

/// [`stable_dt`] for a given flux reconstruction.
pub fn stable_dt_with(u: &[f64], phi: &Velocity, p: &Params, g: &Grid, flux: FluxScheme) -> f64 {
    let faces = &phi.faces;
    let outflow = (0..g.n())
        .map(|i| faces[i + 1].max(0.0) + (-faces[i]).max(0.0))
        .fold(0.0, f64::max);
    let umax = u.iter().copied().fold(0.0, f64::max);
    let rate = flux.cfl_factor() * outflow / g.h() + p.r * p.law.reaction_lipschitz(0.0, umax);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

fn explicit_stage(
    u: &[f64],
    faces: &[f64],
    p: &Params,
    dt: f64,
    h: f64,
    source: Option<&[f64]>,
    scheme: FluxScheme,
) -> Vec<f64> {
    let flux = fluxes(u, faces, scheme);
    let mut out: Vec<f64> = (0..u.len())
        .map(|i| u[i] - dt / h * (flux[i + 1] - flux[i]) + dt * p.r * u[i] * p.law.eval(u[i]))
        .collect();
    if let Some(s) = source {
        out.iter_mut().zip(s).for_each(|(v, s)| *v += dt * s);
    }
    out
}

/// Solves `(I - delta dt D^2) x = rhs` with reflected (zero-flux) walls.
fn implicit_diffusion(rhs: Vec<f64>, delta: f64, dt: f64, h: f64) -> Result<Vec<f64>> {
    let n = rhs.len();
    let k = delta * dt / (h * h);
    let mut diag = vec![1.0 + 2.0 * k; n];
    diag[0] = 1.0 + k;
    diag[n - 1] = 1.0 + k;
    let sys = TridiagonalSystem::new(vec![-k; n - 1], diag, vec![-k; n - 1], rhs)?;
    Ok(thomas_solve(&sys)?.into_vec())
}

/// One step with a given velocity. Rejects steps beyond [`stable_dt`].
pub(crate) fn advance(
    u: &[f64],
    phi: &Velocity,
    p: &Params,
    dt: f64,
    g: &Grid,
    source: Option<&[f64]>,
    flux: FluxScheme,
) -> Result<Field> {
    let limit = stable_dt_with(u, phi, p, g, flux);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let h = g.h();
    let star = explicit_stage(u, &phi.faces, p, dt, h, source, flux);
    let next = if p.delta > 0.0 {
        implicit_diffusion(star, p.delta, dt, h)?
    } else {
        star
    };
    let next = Field::new(next);
    if !next.is_finite() {
        return Err(Error::Divergence {
            last_valid_time: f64::NAN,
        });
    }
    Ok(next)
}

/// IMEX step for `delta > 0`.
pub fn step_imex(u: &[f64], p: &Params, dt: f64, g: &Grid) -> Result<Field> {
    if !(p.delta > 0.0) {
        return Err(Error::invalid(
            "params.delta",
            "IMEX step requires delta > 0",
        ));
    }
    g.check(u)?;
    let phi = VelocitySolver::new(p, g, RhsForm::Divergence)?.solve(u, None)?;
    advance(u, &phi, p, dt, g, None, FluxScheme::Upwind)
}

/// Explicit upwind step of the transport system (`delta = 0`).
pub fn step_transport(u: &[f64], p: &Params, dt: f64, g: &Grid) -> Result<Field> {
    if p.delta != 0.0 {
        return Err(Error::invalid(
            "params.delta",
            "transport step requires delta = 0",
        ));
    }
    g.check(u)?;
    let phi = VelocitySolver::new(p, g, RhsForm::Divergence)?.solve(u, None)?;
    advance(u, &phi, p, dt, g, None, FluxScheme::Upwind)
}

/// Per-time-level scalar diagnostics. Integrals use the cell measure `h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
    /// `||u_x||_1` from face differences (total variation).
    pub du_l1: f64,
    /// `||u_x||_2` from face differences.
    pub du_l2: f64,
    pub phi_l2: f64,
    pub phi_sup: f64,
    pub dphi_l2: f64,
    pub dphi_sup: f64,
    pub min: f64,
    /// `int u log u`, with `0 log 0 = 0`.
    pub entropy: f64,
    /// `||(sqrt u)_x||_2` from centered differences of `sqrt(max(u, 0))`.
    pub dsqrt_l2: f64,
    /// `int u^2 E(u)`.
    pub u2_e: f64,
    /// `int u E(u) (log u + 1)`.
    pub ue_log: f64,
    /// `int u_x phi`, summed over interior faces.
    pub du_phi: f64,
}

impl Diagnostics {
    pub const COLUMNS: [&'static str; 16] = [
        "mass", "l1", "l2", "sup", "du_l1", "du_l2", "phi_l2", "phi_sup", "dphi_l2", "dphi_sup",
        "min", "entropy", "dsqrt_l2", "u2_e", "ue_log", "du_phi",
    ];

    pub fn compute(u: &[f64], phi: &Velocity, p: &Params, h: f64) -> Self {
        let law = p.law;
        let (mut du_l1, mut du_l2sq, mut du_phi) = (0.0, 0.0, 0.0);
        for i in 1..u.len() {
            let d = u[i] - u[i - 1];
            du_l1 += d.abs();
            du_l2sq += d * d;
            du_phi += d * phi.faces[i];
        }
        let sqrt_u: Vec<f64> = u.iter().map(|&v| v.max(0.0).sqrt()).collect();
        let dsqrt = grid::gradient_with_ghosts(&sqrt_u, h, GradientBc::NeumannZero);
        let dphi = phi_gradient(&phi.values, h);
        let xlogx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
        Diagnostics {
            mass: grid::integral(h, u),
            l1: grid::l1(h, u),
            l2: grid::l2_squared(h, u).sqrt(),
            sup: grid::sup(u),
            du_l1,
            du_l2: (du_l2sq / h).sqrt(),
            phi_l2: grid::l2_squared(h, &phi.values).sqrt(),
            phi_sup: phi.sup(),
            dphi_l2: phi_gradient_l2_squared(&phi.values, h).sqrt(),
            dphi_sup: grid::sup(&dphi),
            min: u.iter().copied().fold(f64::INFINITY, f64::min),
            entropy: h * u.iter().map(|&v| xlogx(v)).sum::<f64>(),
            dsqrt_l2: grid::l2_squared(h, &dsqrt).sqrt(),
            u2_e: h * u.iter().map(|&v| v * v * law.eval(v)).sum::<f64>(),
            ue_log: h * u.iter().map(|&v| law.eval(v) * (xlogx(v) + v)).sum::<f64>(),
            du_phi,
        }
    }

    pub fn values(&self) -> [f64; 16] {
        [
            self.mass,
            self.l1,
            self.l2,
            self.sup,
            self.du_l1,
            self.du_l2,
            self.phi_l2,
            self.phi_sup,
            self.dphi_l2,
            self.dphi_sup,
            self.min,
            self.entropy,
            self.dsqrt_l2,
            self.u2_e,
            self.ue_log,
            self.du_phi,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: Field,
    pub phi: Field,
}

/// Time series of one run. `times[k]` and `diagnostics[k]` describe the
/// state after `k` steps; `times[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: Params,
    pub dt_max: f64,
    pub times: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last_snapshot(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory has an initial snapshot")
    }

    /// The snapshot recorded exactly at `t`, if any.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// Largest step actually taken.
    pub fn max_dt(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: Option<Box<Trajectory>>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        RunError {
            error,
            partial: None,
        }
    }
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        e.error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub snapshot_stride: usize,
    /// Times the integrator must land on exactly; a snapshot is taken at each.
    pub stop_times: Vec<f64>,
    pub scheme: SchemeOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            snapshot_stride: 10,
            stop_times: Vec::new(),
            scheme: SchemeOptions::default(),
        }
    }
}

/// Builds the initial field and runs to `sc.t_end`.
pub fn run(
    ic: &InitialCondition,
    p: &Params,
    sc: &StepControl,
    g: &Grid,
    snapshot_stride: usize,
) -> Result<Trajectory, RunError> {
    let u0 = build_initial(ic, g)?;
    let opts = RunOptions {
        snapshot_stride,
        ..RunOptions::default()
    };
    run_from(u0, p, sc, g, &opts, None)
}

/// Runs from an explicit initial field. Uses the IMEX scheme when
/// `delta > 0` and the transport scheme when `delta = 0`.
pub fn run_from(
    u0: Field,
    p: &Params,
    sc: &StepControl,
    g: &Grid,
    opts: &RunOptions,
    forcing: Option<&dyn Forcing>,
) -> Result<Trajectory, RunError> {
    p.validate()?;
    sc.validate()?;
    g.check(&u0)?;
    if !u0.is_finite() {
        return Err(Error::invalid("ic", "initial field must be finite").into());
    }
    let solver = VelocitySolver::new(p, g, opts.scheme.rhs_form)?;
    let stride = opts.snapshot_stride.max(1);
    let h = g.h();

    let mut stops: Vec<f64> = opts
        .stop_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < sc.t_end)
        .collect();
    stops.push(sc.t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut next_stop = 0;

    let sources = |t: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        forcing.map(|f| {
            let su = g
                .centers()
                .iter()
                .map(|&x| f.density_source(t, x))
                .collect();
            let sp = g
                .centers()
                .iter()
                .map(|&x| f.velocity_source(t, x))
                .collect();
            (su, sp)
        })
    };

    let mut tr = Trajectory {
        grid: g.clone(),
        params: *p,
        dt_max: sc.dt_max,
        times: Vec::new(),
        diagnostics: Vec::new(),
        snapshots: Vec::new(),
    };

    let mut u = u0;
    let mut t = 0.0;
    let mut step = 0usize;
    let fail = |error: Error, tr: Trajectory| RunError {
        error,
        partial: Some(Box::new(tr)),
    };

    loop {
        let src = sources(t);
        let phi = match solver.solve(&u, src.as_ref().map(|s| s.1.as_slice())) {
            Ok(phi) if phi.values.is_finite() => phi,
            Ok(_) => return Err(fail(Error::Divergence { last_valid_time: t }, tr)),
            Err(e) => return Err(fail(e, tr)),
        };
        tr.times.push(t);
        tr.diagnostics.push(Diagnostics::compute(&u, &phi, p, h));

        let at_stop = step == 0 || (next_stop > 0 && t == stops[next_stop - 1]);
        let done = next_stop == stops.len();
        if at_stop || done || step % stride == 0 {
            tr.snapshots.push(Snapshot {
                step,
                time: t,
                u: u.clone(),
                phi: phi.values.clone(),
            });
        }
        if done || sc.t_end == 0.0 {
            break;
        }

        let target = stops[next_stop];
        let limit = sc.cfl_safety * stable_dt_with(&u, &phi, p, g, opts.scheme.flux);
        let mut dt = sc.dt_max.min(limit);
        let landing = target - t <= dt * (1.0 + 1e-9);
        if landing {
            dt = target - t;
        }

        let density_src = src.as_ref().map(|s| s.0.as_slice());
        let mut next = match advance(&u, &phi, p, dt, g, density_src, opts.scheme.flux) {
            Ok(next) => next,
            Err(Error::Divergence { .. }) => {
                return Err(fail(Error::Divergence { last_valid_time: t }, tr))
            }
            Err(e) => return Err(fail(e, tr)),
        };
        if opts.scheme.fixed_point_resolve {
            let src_next = sources(t + dt);
            let corrected = solver
                .solve(&next, src_next.as_ref().map(|s| s.1.as_slice()))
                .and_then(|phi_next| {
                    let avg: Vec<f64> = phi
                        .values
                        .iter()
                        .zip(phi_next.values.iter())
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    advance(
                        &u,
                        &Velocity::from_centers(avg.into()),
                        p,
                        dt,
                        g,
                        density_src,
                        opts.scheme.flux,
                    )
                });
            next = match corrected {
                Ok(v) => v,
                Err(Error::Divergence { .. }) => {
                    return Err(fail(Error::Divergence { last_valid_time: t }, tr))
                }
                Err(e) => return Err(fail(e, tr)),
            };
        }

        u = next;
        step += 1;
        if landing {
            t = target;
            next_stop += 1;
        } else {
            t += dt;
        }
    }
    Ok(tr)
}
