//! Reproduction laws, model parameters and initial-condition presets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Net per-capita reproduction rate `E(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReproductionLaw {
    /// `E(u) = 1 - u`.
    Monostable,
    /// `E(u) = (1 - u)(u - a)` with `0 < a < 1`.
    Bistable { a: f64 },
}

impl ReproductionLaw {
    pub fn bistable(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(
                "params.a",
                format!("a must lie in (0,1), got {a}"),
            ));
        }
        Ok(ReproductionLaw::Bistable { a })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReproductionLaw::Monostable => "monostable",
            ReproductionLaw::Bistable { .. } => "bistable",
        }
    }

    /// The unstable zero `a` for the bistable law, `None` otherwise.
    pub fn threshold(&self) -> Option<f64> {
        match *self {
            ReproductionLaw::Monostable => None,
            ReproductionLaw::Bistable { a } => Some(a),
        }
    }

    /// `E(u)`.
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            ReproductionLaw::Monostable => 1.0 - u,
            ReproductionLaw::Bistable { a } => (1.0 - u) * (u - a),
        }
    }

    /// `E'(u)`.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            ReproductionLaw::Monostable => -1.0,
            ReproductionLaw::Bistable { a } => -2.0 * u + a + 1.0,
        }
    }

    /// `E''(u)`.
    pub fn second_derivative(&self) -> f64 {
        match self {
            ReproductionLaw::Monostable => 0.0,
            ReproductionLaw::Bistable { .. } => -2.0,
        }
    }

    /// `sup |d(u E(u))/du|` over `[lo, hi]`.
    pub fn reaction_lipschitz(&self, lo: f64, hi: f64) -> f64 {
        // d(uE)/du is 1 - 2u (monostable) or -3u^2 + 2(a+1)u - a (bistable);
        // the sup of a polynomial of degree <= 2 sits at an endpoint or the vertex.
        let slope = |u: f64| match *self {
            ReproductionLaw::Monostable => 1.0 - 2.0 * u,
            ReproductionLaw::Bistable { a } => -3.0 * u * u + 2.0 * (a + 1.0) * u - a,
        };
        let mut m = slope(lo).abs().max(slope(hi).abs());
        if let ReproductionLaw::Bistable { a } = *self {
            let v = (a + 1.0) / 3.0;
            if v > lo && v < hi {
                m = m.max(slope(v).abs());
            }
        }
        m
    }
}

/// `E(u)` for the given law.
pub fn eval_e(law: ReproductionLaw, u: f64) -> f64 {
    law.eval(u)
}

/// `E'(u)` for the given law.
pub fn eval_e_prime(law: ReproductionLaw, u: f64) -> f64 {
    law.derivative(u)
}

/// Logistic-type source `r u E(u)`.
pub fn reaction(law: ReproductionLaw, r: f64, u: f64) -> f64 {
    r * u * law.eval(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Diffusivity; `0` selects the transport system.
    pub delta: f64,
    /// Smoothing length of the velocity equation.
    pub epsilon: f64,
    /// Reproduction rate.
    pub r: f64,
    pub law: ReproductionLaw,
}

impl Params {
    pub fn new(delta: f64, epsilon: f64, r: f64, law: ReproductionLaw) -> Result<Self> {
        let p = Params {
            delta,
            epsilon,
            r,
            law,
        };
        p.validate()?;
        Ok(p)
    }

    /// Every violated constraint, one message per key.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            out.push(format!(
                "params.delta: delta must lie in [0,1), got {}",
                self.delta
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(format!(
                "params.epsilon: epsilon must be > 0, got {}",
                self.epsilon
            ));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            out.push(format!("params.r: r must be >= 0, got {}", self.r));
        }
        if let ReproductionLaw::Bistable { a } = self.law {
            if !(a > 0.0 && a < 1.0) {
                out.push(format!("params.a: a must lie in (0,1), got {a}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(msg) => {
                let (key, message) = msg.split_once(": ").unwrap_or(("params", &msg));
                Err(Error::invalid(key, message))
            }
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn is_transport(&self) -> bool {
        self.delta == 0.0
    }
}

/// Initial density presets. All have zero slope at `x = ±1`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    /// `baseline + amplitude * (1 + cos(pi (x - center) / width)) / 2` on
    /// `|x - center| < width`, `baseline` elsewhere.
    Bump {
        center: f64,
        width: f64,
        amplitude: f64,
        baseline: f64,
    },
    /// Raised-cosine ramp from `low` to `high` over `[position - width, position + width]`.
    SmoothedStep {
        position: f64,
        width: f64,
        low: f64,
        high: f64,
    },
    /// `baseline + sum_k c_k cos(k pi x)` with `c_k ~ U(-1, 1) / k`, shifted up
    /// if needed so that the minimum is nonnegative.
    RandomFourier {
        seed: u64,
        modes: usize,
        baseline: f64,
    },
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::invalid(format!("ic.{key}"), msg));
        match *self {
            InitialCondition::Constant(c) => {
                if !(c >= 0.0 && c.is_finite()) {
                    return bad("value", format!("constant must be >= 0, got {c}"));
                }
            }
            InitialCondition::Bump {
                center,
                width,
                amplitude,
                baseline,
            } => {
                if !(width > 0.0) {
                    return bad("width", format!("width must be > 0, got {width}"));
                }
                if center - width < -1.0 || center + width > 1.0 {
                    return bad(
                        "center",
                        format!(
                            "bump support [{}, {}] must lie in [-1,1]",
                            center - width,
                            center + width
                        ),
                    );
                }
                if !(baseline >= 0.0) || !(baseline + amplitude >= 0.0) {
                    return bad(
                        "amplitude",
                        format!(
                            "baseline ({baseline}) and baseline + amplitude ({}) must be >= 0",
                            baseline + amplitude
                        ),
                    );
                }
            }
            InitialCondition::SmoothedStep {
                position,
                width,
                low,
                high,
            } => {
                if !(width > 0.0) {
                    return bad("width", format!("width must be > 0, got {width}"));
                }
                if position - width < -1.0 || position + width > 1.0 {
                    return bad("position", "ramp must lie inside [-1,1]".to_string());
                }
                if !(low >= 0.0 && high >= 0.0) {
                    return bad("low", format!("low ({low}) and high ({high}) must be >= 0"));
                }
            }
            InitialCondition::RandomFourier {
                modes, baseline, ..
            } => {
                if modes == 0 {
                    return bad("modes", "modes must be >= 1".to_string());
                }
                if !(baseline >= 0.0) {
                    return bad("baseline", format!("baseline must be >= 0, got {baseline}"));
                }
            }
        }
        Ok(())
    }

    // The random preset draws its coefficients in `build_initial`.
    fn profile(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Constant(c) => c,
            InitialCondition::Bump {
                center,
                width,
                amplitude,
                baseline,
            } => {
                let s = (x - center) / width;
                if s.abs() < 1.0 {
                    baseline + amplitude * 0.5 * (1.0 + (PI * s).cos())
                } else {
                    baseline
                }
            }
            InitialCondition::SmoothedStep {
                position,
                width,
                low,
                high,
            } => {
                let s = ((x - position + width) / (2.0 * width)).clamp(0.0, 1.0);
                low + (high - low) * 0.5 * (1.0 - (PI * s).cos())
            }
            InitialCondition::RandomFourier { .. } => unreachable!(),
        }
    }
}

/// Samples the preset at the cell centers of `g`.
pub fn build_initial(ic: &InitialCondition, g: &Grid) -> Result<Field> {
    ic.validate()?;
    if let InitialCondition::RandomFourier {
        seed,
        modes,
        baseline,
    } = *ic
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (1..=modes)
            .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
            .collect();
        let mut f = g.sample(|x| {
            baseline
                + coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * PI * x).cos())
                    .sum::<f64>()
        });
        let lo = f.min();
        if lo < 0.0 {
            f.iter_mut().for_each(|v| *v -= lo);
        }
        return Ok(f);
    }
    Ok(g.sample(|x| ic.profile(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BI: ReproductionLaw = ReproductionLaw::Bistable { a: 0.25 };

    #[test]
    fn laws_at_known_points() {
        let m = ReproductionLaw::Monostable;
        assert_eq!(eval_e(m, 0.0), 1.0);
        assert_eq!(eval_e(m, 1.0), 0.0);
        assert_eq!(eval_e(BI, 0.5), 0.125);
        assert_eq!(eval_e(BI, 0.25), 0.0);
        assert_eq!(eval_e(BI, 1.0), 0.0);

        assert_eq!(eval_e_prime(m, 7.3), -1.0);
        assert_eq!(eval_e_prime(BI, 0.0), 1.25);
        assert_eq!(eval_e_prime(BI, 0.625), 0.0);

        assert_eq!(reaction(m, 1.0, 0.0), 0.0);
        assert_eq!(reaction(BI, 1.0, 1.0), 0.0);
        assert_eq!(reaction(m, 1.0, 0.5), 0.25);
        assert_eq!(reaction(BI, 2.0, 0.5), 0.125);
    }

    #[test]
    fn bistable_requires_threshold_in_unit_interval() {
        assert!(ReproductionLaw::bistable(0.0).is_err());
        assert!(ReproductionLaw::bistable(1.0).is_err());
        assert!(ReproductionLaw::bistable(0.3).is_ok());
    }

    #[test]
    fn params_ranges() {
        assert!(Params::new(0.0, 1.0, 0.0, BI).is_ok());
        let p = Params {
            delta: 1.5,
            epsilon: 0.0,
            r: -1.0,
            law: ReproductionLaw::Bistable { a: 2.0 },
        };
        let v = p.violations();
        assert_eq!(v.len(), 4);
        assert!(v[0].contains("delta must lie in [0,1)"));
        assert!(v[3].contains("a must lie in (0,1)"));
        assert!(matches!(p.validate(), Err(Error::Invalid { key, .. }) if key == "params.delta"));
    }

    #[test]
    fn lipschitz_bound_dominates_sampled_slopes() {
        for law in [ReproductionLaw::Monostable, BI] {
            for &(lo, hi) in &[(0.0, 1.0), (0.0, 3.0), (0.2, 0.4)] {
                let l = law.reaction_lipschitz(lo, hi);
                for k in 0..=1000 {
                    let u = lo + (hi - lo) * k as f64 / 1000.0;
                    let d = (reaction(law, 1.0, u + 1e-6) - reaction(law, 1.0, u - 1e-6)) / 2e-6;
                    assert!(d.abs() <= l + 1e-6);
                    if lo == 0.0 {
                        // E(u) is the mean slope of uE over [0, u].
                        assert!(law.eval(u).abs() <= l + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn presets() {
        let g = Grid::new(64).unwrap();
        let c = build_initial(&InitialCondition::Constant(0.5), &g).unwrap();
        assert!(c.iter().all(|&v| v == 0.5));

        let flat = InitialCondition::Bump {
            center: 0.0,
            width: 0.5,
            amplitude: 0.0,
            baseline: 0.3,
        };
        assert!(build_initial(&flat, &g).unwrap().iter().all(|&v| v == 0.3));

        let rf = InitialCondition::RandomFourier {
            seed: 7,
            modes: 6,
            baseline: 0.0,
        };
        let a = build_initial(&rf, &g).unwrap();
        let b = build_initial(&rf, &g).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.0);
        let other = build_initial(
            &InitialCondition::RandomFourier {
                seed: 8,
                modes: 6,
                baseline: 0.0,
            },
            &g,
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn presets_are_flat_at_the_walls() {
        let g = Grid::new(400).unwrap();
        let h = g.h();
        let presets = [
            InitialCondition::Bump {
                center: 0.2,
                width: 0.5,
                amplitude: 1.0,
                baseline: 0.1,
            },
            InitialCondition::SmoothedStep {
                position: 0.0,
                width: 0.1,
                low: 0.1,
                high: 0.9,
            },
            InitialCondition::RandomFourier {
                seed: 3,
                modes: 5,
                baseline: 1.0,
            },
        ];
        for ic in &presets {
            let u = build_initial(ic, &g).unwrap();
            // Zero slope at +-1 leaves a one-sided difference of size |u''| h.
            let left = (u[1] - u[0]) / h;
            let right = (u[399] - u[398]) / h;
            assert!(left.abs() < 400.0 * h && right.abs() < 400.0 * h, "{ic:?}");
        }
    }

    #[test]
    fn preset_validation() {
        let neg = InitialCondition::Bump {
            center: 0.0,
            width: 0.5,
            amplitude: -1.0,
            baseline: 0.5,
        };
        assert!(neg.validate().is_err());
        assert!(InitialCondition::Constant(-0.1).validate().is_err());
        assert!(InitialCondition::RandomFourier {
            seed: 0,
            modes: 3,
            baseline: -1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        use proptest::prelude::*;
        proptest!(|(u in -2.0f64..3.0, a in 0.01f64..0.99)| {
            for law in [ReproductionLaw::Monostable, ReproductionLaw::Bistable { a }] {
                let step = 1e-5;
                let fd = (law.eval(u + step) - law.eval(u - step)) / (2.0 * step);
                prop_assert!((fd - law.derivative(u)).abs() < 1e-8);
            }
        });
    }

    #[test]
    fn bistable_weighted_reaction_bound() {
        for &a in &[0.05, 0.25, 0.5, 0.9] {
            let law = ReproductionLaw::Bistable { a };
            let worst = (0..=100_000)
                .map(|k| {
                    let u = 10.0 * k as f64 / 100_000.0;
                    u * u * law.eval(u)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1.0 - a + 1e-12, "a={a}: {worst}");
        }
    }
}
