//! TOML run configuration. Parsing collects every validation error rather
//! than stopping at the first.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimates::DEFAULT_KAPPA;
use crate::grid::MIN_CELLS;
use crate::model::{InitialCondition, Params, ReproductionLaw};
use crate::stepper::{FluxScheme, SchemeOptions, StepControl};
use crate::velocity::RhsForm;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CLUSTERLIMIT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_SNAPSHOT_STRIDE: usize = 10;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    params: Option<RawParams>,
    ic: Option<RawIc>,
    step: Option<RawStep>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    mms: RawMms,
    #[serde(default)]
    stability: RawStability,
    #[serde(default)]
    estimates: RawEstimates,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<i64>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum LawName {
    Monostable,
    Bistable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    delta: Option<f64>,
    epsilon: Option<f64>,
    r: Option<f64>,
    law: Option<LawName>,
    a: Option<f64>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Preset {
    Constant,
    Bump,
    SmoothedStep,
    RandomFourier,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIc {
    preset: Option<Preset>,
    value: Option<f64>,
    center: Option<f64>,
    width: Option<f64>,
    amplitude: Option<f64>,
    baseline: Option<f64>,
    position: Option<f64>,
    low: Option<f64>,
    high: Option<f64>,
    seed: Option<u64>,
    modes: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    cfl_safety: Option<f64>,
    dt_max: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    snapshot_stride: Option<i64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    rhs_form: Option<RhsFormName>,
    flux: Option<FluxName>,
    fixed_point_resolve: Option<bool>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RhsFormName {
    Divergence,
    ChainRule,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum FluxName {
    Upwind,
    Minmod,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    deltas: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
    richardson: Option<bool>,
    self_reference: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMms {
    resolutions: Option<Vec<i64>>,
    dt_per_h: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStability {
    etas: Option<Vec<f64>>,
    refine: Option<bool>,
    envelope_tolerance: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEstimates {
    kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    pub times: Vec<f64>,
    pub richardson: bool,
    pub self_reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsConfig {
    pub resolutions: Vec<usize>,
    pub dt_per_h: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub etas: Vec<f64>,
    pub refine: bool,
    /// Allowed relative excess of `s(t)` over the fitted envelope.
    pub envelope_tolerance: f64,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub params: Params,
    pub ic: InitialCondition,
    pub step: StepControl,
    pub output: OutputConfig,
    pub scheme: SchemeOptions,
    pub sweep: SweepConfig,
    pub mms: MmsConfig,
    pub stability: StabilityConfig,
    pub kappa: f64,
}

impl RunConfig {
    /// Replaces the seed of a `random_fourier` initial condition. Other
    /// presets have no seed and are left unchanged.
    pub fn set_seed(&mut self, new_seed: u64) {
        if let InitialCondition::RandomFourier { seed, .. } = &mut self.ic {
            *seed = new_seed;
        }
    }
}

pub const DEFAULT_DELTAS: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
pub const DEFAULT_TIME_FRACTIONS: [f64; 3] = [0.25, 0.5, 1.0];
pub const DEFAULT_ETAS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const DEFAULT_ENVELOPE_TOLERANCE: f64 = 0.01;

/// Records missing and out-of-range values under their dotted key.
struct Collector(Vec<String>);

impl Collector {
    fn push(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{key}: {msg}"));
    }

    fn require<T>(&mut self, value: Option<T>, key: &str, range: &str) -> Option<T> {
        if value.is_none() {
            self.push(key, format!("missing; {range}"));
        }
        value
    }

    fn count(&mut self, value: i64, key: &str, min: i64) -> Option<usize> {
        if value < min {
            self.push(key, format!("{} must be >= {min}, got {value}", short(key)));
            None
        } else {
            Some(value as usize)
        }
    }
}

fn short(key: &str) -> &str {
    key.rsplit('.').next().unwrap_or(key)
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let mut c = Collector(Vec::new());

    let n = c
        .require(
            raw.grid.and_then(|g| g.n),
            "grid.n",
            &format!("n must be >= {MIN_CELLS}"),
        )
        .and_then(|n| c.count(n, "grid.n", MIN_CELLS as i64));

    let params = parse_params(raw.params, &mut c);
    let ic = parse_ic(raw.ic, &mut c);
    let step = parse_step(raw.step, &mut c);

    let stride = match raw.output.snapshot_stride {
        Some(s) => c.count(s, "output.snapshot_stride", 1),
        None => Some(DEFAULT_SNAPSHOT_STRIDE),
    };
    let dir = raw
        .output
        .dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let scheme = SchemeOptions {
        rhs_form: match raw.scheme.rhs_form {
            Some(RhsFormName::ChainRule) => RhsForm::ChainRule,
            _ => RhsForm::Divergence,
        },
        flux: match raw.scheme.flux {
            Some(FluxName::Minmod) => FluxScheme::Minmod,
            _ => FluxScheme::Upwind,
        },
        fixed_point_resolve: raw.scheme.fixed_point_resolve.unwrap_or(false),
    };

    let t_end = step.map_or(1.0, |s| s.t_end);
    let sweep = parse_sweep(raw.sweep, t_end, &mut c);
    let mms = parse_mms(raw.mms, &mut c);
    let stability = parse_stability(raw.stability, &mut c);
    let kappa = raw.estimates.kappa.unwrap_or(DEFAULT_KAPPA);
    if !(kappa > 0.0 && kappa.is_finite()) {
        c.push("estimates.kappa", format!("kappa must be > 0, got {kappa}"));
    }

    match (n, params, ic, step, stride) {
        (Some(n), Some(params), Some(ic), Some(step), Some(snapshot_stride)) if c.0.is_empty() => {
            Ok(RunConfig {
                n,
                params,
                ic,
                step,
                output: OutputConfig {
                    dir,
                    snapshot_stride,
                },
                scheme,
                sweep,
                mms,
                stability,
                kappa,
            })
        }
        _ => Err(Error::Config(c.0)),
    }
}

fn parse_params(raw: Option<RawParams>, c: &mut Collector) -> Option<Params> {
    let Some(raw) = raw else {
        c.push(
            "params",
            "missing section; delta, epsilon, r and law are required",
        );
        return None;
    };
    let delta = c.require(raw.delta, "params.delta", "delta must lie in [0,1)");
    let epsilon = c.require(raw.epsilon, "params.epsilon", "epsilon must be > 0");
    let r = c.require(raw.r, "params.r", "r must be >= 0");
    let law = match c.require(
        raw.law,
        "params.law",
        "law must be \"monostable\" or \"bistable\"",
    )? {
        LawName::Monostable => {
            if raw.a.is_some() {
                c.push("params.a", "a is only used by the bistable law");
            }
            ReproductionLaw::Monostable
        }
        LawName::Bistable => {
            let a = c.require(raw.a, "params.a", "the bistable law needs a in (0,1)")?;
            ReproductionLaw::Bistable { a }
        }
    };
    let p = Params {
        delta: delta?,
        epsilon: epsilon?,
        r: r?,
        law,
    };
    let violations = p.violations();
    if violations.is_empty() {
        Some(p)
    } else {
        c.0.extend(violations);
        None
    }
}

fn parse_ic(raw: Option<RawIc>, c: &mut Collector) -> Option<InitialCondition> {
    let Some(raw) = raw else {
        c.push("ic", "missing section; ic.preset is required");
        return None;
    };
    let preset = c.require(
        raw.preset,
        "ic.preset",
        "preset must be one of constant, bump, smoothed_step, random_fourier",
    )?;
    let allowed: &[&str] = match preset {
        Preset::Constant => &["value"],
        Preset::Bump => &["center", "width", "amplitude", "baseline"],
        Preset::SmoothedStep => &["position", "width", "low", "high"],
        Preset::RandomFourier => &["seed", "modes", "baseline"],
    };
    let present = [
        ("value", raw.value.is_some()),
        ("center", raw.center.is_some()),
        ("width", raw.width.is_some()),
        ("amplitude", raw.amplitude.is_some()),
        ("baseline", raw.baseline.is_some()),
        ("position", raw.position.is_some()),
        ("low", raw.low.is_some()),
        ("high", raw.high.is_some()),
        ("seed", raw.seed.is_some()),
        ("modes", raw.modes.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            c.push(
                &format!("ic.{key}"),
                format!("not used by preset {preset:?}"),
            );
        }
    }
    let ic = match preset {
        Preset::Constant => {
            InitialCondition::Constant(c.require(raw.value, "ic.value", "value must be >= 0")?)
        }
        Preset::Bump => {
            let center = c.require(raw.center, "ic.center", "center must lie in (-1,1)");
            let width = c.require(raw.width, "ic.width", "width must be > 0");
            let amplitude = c.require(raw.amplitude, "ic.amplitude", "amplitude is required");
            InitialCondition::Bump {
                center: center?,
                width: width?,
                amplitude: amplitude?,
                baseline: raw.baseline.unwrap_or(0.0),
            }
        }
        Preset::SmoothedStep => {
            let position = c.require(raw.position, "ic.position", "position must lie in (-1,1)");
            let width = c.require(raw.width, "ic.width", "width must be > 0");
            let low = c.require(raw.low, "ic.low", "low must be >= 0");
            let high = c.require(raw.high, "ic.high", "high must be >= 0");
            InitialCondition::SmoothedStep {
                position: position?,
                width: width?,
                low: low?,
                high: high?,
            }
        }
        Preset::RandomFourier => InitialCondition::RandomFourier {
            seed: raw.seed.unwrap_or(0),
            modes: c.count(raw.modes.unwrap_or(8), "ic.modes", 1)?,
            baseline: raw.baseline.unwrap_or(1.0),
        },
    };
    match ic.validate() {
        Ok(()) => Some(ic),
        Err(e) => {
            c.0.push(match e {
                Error::Invalid { key, message } => format!("{key}: {message}"),
                other => other.to_string(),
            });
            None
        }
    }
}

fn parse_step(raw: Option<RawStep>, c: &mut Collector) -> Option<StepControl> {
    let Some(raw) = raw else {
        c.push("step", "missing section; dt_max and t_end are required");
        return None;
    };
    let dt_max = c.require(raw.dt_max, "step.dt_max", "dt_max must be > 0");
    let t_end = c.require(raw.t_end, "step.t_end", "t_end must be >= 0");
    let sc = StepControl {
        cfl_safety: raw.cfl_safety.unwrap_or(StepControl::DEFAULT_CFL_SAFETY),
        dt_max: dt_max?,
        t_end: t_end?,
    };
    let violations = sc.violations();
    if violations.is_empty() {
        Some(sc)
    } else {
        c.0.extend(violations);
        None
    }
}

fn parse_sweep(raw: RawSweep, t_end: f64, c: &mut Collector) -> SweepConfig {
    let deltas = raw.deltas.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    if deltas.is_empty() {
        c.push("sweep.deltas", "at least one delta is required");
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        c.push("sweep.deltas", "every delta must lie in (0,1)");
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        c.push("sweep.deltas", "deltas must be strictly decreasing");
    }
    let times = raw
        .times
        .unwrap_or_else(|| DEFAULT_TIME_FRACTIONS.iter().map(|f| f * t_end).collect());
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= t_end)) {
        c.push(
            "sweep.times",
            format!("comparison times must lie in (0, t_end] = (0, {t_end}]"),
        );
    }
    SweepConfig {
        deltas,
        times,
        richardson: raw.richardson.unwrap_or(false),
        self_reference: raw.self_reference.unwrap_or(false),
    }
}

fn parse_mms(raw: RawMms, c: &mut Collector) -> MmsConfig {
    let resolutions: Vec<usize> = raw
        .resolutions
        .unwrap_or_else(|| vec![100, 200, 400])
        .into_iter()
        .filter_map(|n| c.count(n, "mms.resolutions", MIN_CELLS as i64))
        .collect();
    if resolutions.len() < 3 {
        c.push("mms.resolutions", "at least 3 resolutions are required");
    }
    let dt_per_h = raw.dt_per_h.unwrap_or(0.2);
    if !(dt_per_h > 0.0 && dt_per_h.is_finite()) {
        c.push(
            "mms.dt_per_h",
            format!("dt_per_h must be > 0, got {dt_per_h}"),
        );
    }
    let t_end = raw.t_end.unwrap_or(0.5);
    if !(t_end > 0.0 && t_end.is_finite()) {
        c.push("mms.t_end", format!("t_end must be > 0, got {t_end}"));
    }
    MmsConfig {
        resolutions,
        dt_per_h,
        t_end,
    }
}

fn parse_stability(raw: RawStability, c: &mut Collector) -> StabilityConfig {
    let etas = raw.etas.unwrap_or_else(|| DEFAULT_ETAS.to_vec());
    if etas.is_empty() || etas.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
        c.push(
            "stability.etas",
            "perturbation sizes must be >= 0 (at least one)",
        );
    }
    let envelope_tolerance = raw.envelope_tolerance.unwrap_or(DEFAULT_ENVELOPE_TOLERANCE);
    if !(envelope_tolerance >= 0.0) {
        c.push(
            "stability.envelope_tolerance",
            format!("envelope_tolerance must be >= 0, got {envelope_tolerance}"),
        );
    }
    StabilityConfig {
        etas,
        refine: raw.refine.unwrap_or(false),
        envelope_tolerance,
    }
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 64
[params]
delta = 0.01
epsilon = 0.5
r = 1.0
law = "bistable"
a = 0.25
[ic]
preset = "bump"
center = 0.1
width = 0.5
amplitude = 1.0
[step]
dt_max = 1e-3
t_end = 1.0
"#;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.step.cfl_safety, 0.9);
        assert_eq!(cfg.output.snapshot_stride, 10);
        assert_eq!(cfg.sweep.times, vec![0.25, 0.5, 1.0]);
        assert_eq!(cfg.sweep.deltas, DEFAULT_DELTAS.to_vec());
        assert_eq!(cfg.kappa, 3.0);
        assert_eq!(cfg.params.law, ReproductionLaw::Bistable { a: 0.25 });
        assert_eq!(cfg.scheme, SchemeOptions::default());
    }

    #[test]
    fn delta_out_of_range_names_key_and_range() {
        let text = MINIMAL.replace("delta = 0.01", "delta = 1.5");
        let errs = errors(&text);
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("params.delta") && errs[0].contains("delta must lie in [0,1)"));
    }

    #[test]
    fn bistable_without_threshold_is_rejected() {
        let errs = errors(&MINIMAL.replace("a = 0.25\n", ""));
        assert!(errs.iter().any(|e| e.starts_with("params.a")), "{errs:?}");
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL
            .replace("delta = 0.01", "delta = -1.0")
            .replace("epsilon = 0.5", "epsilon = 0.0")
            .replace("n = 64", "n = 2")
            .replace("dt_max = 1e-3", "dt_max = -1.0");
        let errs = errors(&text);
        for key in ["grid.n", "params.delta", "params.epsilon", "step.dt_max"] {
            assert!(
                errs.iter().any(|e| e.starts_with(key)),
                "{key} missing from {errs:?}"
            );
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let errs = errors(&format!("{MINIMAL}\n[output]\nfolder = \"x\"\n"));
        assert!(errs[0].contains("folder"), "{errs:?}");
        let errs = errors(&MINIMAL.replace("[grid]", "[grids]"));
        assert!(errs[0].contains("grids"), "{errs:?}");
    }

    #[test]
    fn preset_fields_are_checked() {
        let errs = errors(&MINIMAL.replace("center = 0.1", "center = 0.1\nlow = 0.0"));
        assert!(errs.iter().any(|e| e.starts_with("ic.low")));
        let errs = errors(&MINIMAL.replace("width = 0.5", "width = 1.5"));
        assert!(errs.iter().any(|e| e.starts_with("ic.center")), "{errs:?}");
    }

    #[test]
    fn random_preset_and_seed_override() {
        let text = MINIMAL.replace(
            "preset = \"bump\"\ncenter = 0.1\nwidth = 0.5\namplitude = 1.0",
            "preset = \"random_fourier\"\nseed = 3",
        );
        let mut cfg = parse_config(&text).unwrap();
        cfg.set_seed(11);
        assert_eq!(
            cfg.ic,
            InitialCondition::RandomFourier {
                seed: 11,
                modes: 8,
                baseline: 1.0
            }
        );
    }

    #[test]
    fn sweep_block_is_validated() {
        let text = format!("{MINIMAL}\n[sweep]\ndeltas = [0.01, 0.1]\ntimes = [2.0]\n");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("strictly decreasing")));
        assert!(errs.iter().any(|e| e.starts_with("sweep.times")));
    }
}
