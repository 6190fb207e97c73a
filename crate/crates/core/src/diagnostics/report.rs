use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::entropy::{build_entropy_pair, entropy_residuals, EntropyKind, TestFunction, TestFunctionFamily};
use super::{oleinik_check, tv_series, tv_step_series, Field, OleinikResult, Orientation, TvSeries};
use crate::error::Result;
use crate::grid::total_variation;
use crate::solver::Trajectory;

/// Which checks to run and their tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    pub max_principle: bool,
    pub max_principle_tol: f64,
    pub conservation: bool,
    pub conservation_tol: f64,
    /// Per-step non-increase of TV(w) and the initial bound.
    pub tv_decay: bool,
    pub tv_step_tol: f64,
    pub entropy: bool,
    /// `C` in the residual budget `C (dx + dt) ‖φ‖_C¹ L |q₀|_TV 2r`.
    pub entropy_budget_constant: f64,
    pub oleinik: Option<Orientation>,
    pub oleinik_max_constant: Option<f64>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            max_principle: true,
            max_principle_tol: 1e-10,
            conservation: true,
            conservation_tol: 1e-10,
            tv_decay: false,
            tv_step_tol: 1e-8,
            entropy: false,
            entropy_budget_constant: 1.0,
            oleinik: None,
            oleinik_max_constant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleCheck {
    pub observed_min: f64,
    pub observed_max: f64,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationCheck {
    /// Largest `|mass(t) + outflow(t) - mass(0)|`.
    pub drift: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvDecayCheck {
    pub max_step_increase: f64,
    pub initial: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCheck {
    pub kind: String,
    pub q_lo: f64,
    pub q_hi: f64,
    pub test_functions: usize,
    pub worst_value: f64,
    pub worst_id: usize,
    pub budget_constant: f64,
    /// Budget of the test function attaining the worst value.
    pub worst_budget: f64,
    /// `min (residual + budget)` over the family; negative means failure.
    pub min_margin: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub max_principle: Option<MaxPrincipleCheck>,
    pub conservation: Option<ConservationCheck>,
    pub tv_q_series: TvSeries,
    pub tv_w_series: TvSeries,
    pub tv_decay: Option<TvDecayCheck>,
    pub entropy_residual: Option<EntropyCheck>,
    pub oleinik: Option<OleinikResult>,
    pub l1_errors: BTreeMap<String, f64>,
}

/// Error budget for one test function.
pub fn residual_budget(constant: f64, dx: f64, dt: f64, phi: &TestFunction, lipschitz: f64, tv0: f64) -> f64 {
    constant * (dx + dt) * phi.c1_norm() * lipschitz * tv0 * 2.0 * phi.radius
}

fn check_entropy(traj: &Trajectory, constant: f64) -> Result<EntropyCheck> {
    let q0 = &traj.initial().q;
    let (mut lo, mut hi) = q0.range();
    if hi - lo < 1e-9 {
        let pad = 1e-3 * hi.abs().max(1.0);
        lo = (lo - pad).max(0.0);
        hi += pad;
    }
    let pair = build_entropy_pair(&traj.config.velocity, lo, hi, EntropyKind::Tailored)?;
    let family = TestFunctionFamily::standard(traj.last().time, traj.grid());
    let residuals = entropy_residuals(traj, &pair, &family)?;
    let (la, lb) = pair.max_abs_derivatives();
    let tv0 = total_variation(q0);
    let dx = traj.grid().dx();
    let dt_step = traj.steps.iter().map(|s| s.dt).fold(0.0, f64::max);
    let dt_snap = traj
        .snapshots
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .fold(0.0, f64::max);
    let dt = dt_step.max(dt_snap);
    let mut worst = (f64::INFINITY, 0usize, 0.0);
    let mut min_margin = f64::INFINITY;
    for (r, phi) in residuals.iter().zip(&family.functions) {
        let b = residual_budget(constant, dx, dt, phi, la + lb, tv0);
        min_margin = min_margin.min(r + b);
        if *r < worst.0 {
            worst = (*r, phi.id, b);
        }
    }
    Ok(EntropyCheck {
        kind: pair.kind().name().into(),
        q_lo: lo,
        q_hi: hi,
        test_functions: family.functions.len(),
        worst_value: worst.0,
        worst_id: worst.1,
        budget_constant: constant,
        worst_budget: worst.2,
        min_margin,
        verdict: min_margin >= 0.0,
    })
}

impl DiagnosticsReport {
    pub fn evaluate(traj: &Trajectory, opts: &DiagnosticsOptions) -> Result<Self> {
        let (bound_lo, bound_hi) = traj.initial().q.range();
        let (observed_min, observed_max) = if traj.steps.is_empty() {
            traj.snapshots
                .iter()
                .flat_map(|s| s.q.values().iter().copied())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(v), b.max(v))
                })
        } else {
            traj.steps
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
                    (a.min(s.min), b.max(s.max))
                })
        };
        let max_principle = opts.max_principle.then_some(MaxPrincipleCheck {
            observed_min,
            observed_max,
            bound_lo,
            bound_hi,
            tolerance: opts.max_principle_tol,
            verdict: observed_min >= bound_lo - opts.max_principle_tol
                && observed_max <= bound_hi + opts.max_principle_tol,
        });
        let conservation = opts.conservation.then(|| {
            let drift = traj.conservation_error();
            ConservationCheck {
                drift,
                tolerance: opts.conservation_tol,
                verdict: drift <= opts.conservation_tol,
            }
        });
        let tv_w_series = tv_series(traj, Field::W);
        let tv_decay = opts.tv_decay.then(|| {
            let steps = if traj.steps.is_empty() {
                tv_w_series.clone()
            } else {
                tv_step_series(traj, Field::W)
            };
            let max_step_increase = steps.max_increase();
            let initial = steps.values.first().copied().unwrap_or(0.0);
            let bound = tv_w_series.bound.unwrap_or(f64::INFINITY);
            TvDecayCheck {
                max_step_increase,
                initial,
                bound,
                tolerance: opts.tv_step_tol,
                verdict: max_step_increase <= opts.tv_step_tol && initial <= bound + opts.tv_step_tol,
            }
        });
        let entropy_residual = if opts.entropy {
            Some(check_entropy(traj, opts.entropy_budget_constant)?)
        } else {
            None
        };
        let oleinik = opts
            .oleinik
            .map(|o| oleinik_check(traj, o, None, opts.oleinik_max_constant));
        Ok(Self {
            max_principle,
            conservation,
            tv_q_series: tv_series(traj, Field::Q),
            tv_w_series,
            tv_decay,
            entropy_residual,
            oleinik,
            l1_errors: BTreeMap::new(),
        })
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        let mut out = vec![];
        let mut push = |check: &str, value: f64, threshold: f64, pass: bool| {
            out.push(Verdict {
                check: check.into(),
                value,
                threshold,
                pass,
            })
        };
        if let Some(m) = &self.max_principle {
            push(
                "max_principle_lower",
                m.observed_min,
                m.bound_lo - m.tolerance,
                m.verdict,
            );
            push(
                "max_principle_upper",
                m.observed_max,
                m.bound_hi + m.tolerance,
                m.verdict,
            );
        }
        if let Some(c) = &self.conservation {
            push("conservation", c.drift, c.tolerance, c.verdict);
        }
        if let Some(t) = &self.tv_decay {
            push(
                "tv_w_step_increase",
                t.max_step_increase,
                t.tolerance,
                t.max_step_increase <= t.tolerance,
            );
            push(
                "tv_w_initial_bound",
                t.initial,
                t.bound,
                t.initial <= t.bound + t.tolerance,
            );
        }
        if let Some(e) = &self.entropy_residual {
            push("entropy_residual", e.worst_value, -e.worst_budget, e.verdict);
        }
        if let Some(o) = &self.oleinik {
            push(
                "oleinik_constant",
                o.constant,
                o.max_constant.unwrap_or(f64::INFINITY),
                o.verdict,
            );
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.verdicts().iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat table `check,value,threshold,pass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "check,value,threshold,pass")?;
        for v in self.verdicts() {
            writeln!(out, "{},{},{},{}", v.check, v.value, v.threshold, v.pass)?;
        }
        Ok(())
    }
}
