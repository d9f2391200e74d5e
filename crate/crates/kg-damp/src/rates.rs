//! Predicted decay rates and measured ones.
//!
//! The prediction pipeline turns the structural constants of a run (damper
//! bounds M, a0, active radius R, the nonlinearity constant C0, and the
//! regime-specific extras) into an observation window T, an energy-drop
//! fraction delta per window, and the exponential rate gamma implied by
//! iterating E -> E / (1 + delta). The measured side fits log E(t) over a
//! window of a recorded history by least squares.

use crate::diagnostics::{decrement, RunHistory};
use crate::error::{KgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Defocusing with a uniform nonlinearity constant.
    ConditionF,
    /// Defocusing with an energy-growth correction of exponent q.
    ConditionF2,
    /// Focusing below the ground-state threshold.
    Focusing,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RateInputs {
    pub regime: Regime,
    /// Damping upper bound M.
    #[serde(rename = "m")]
    pub m_bound: f64,
    /// Radius outside which the damping is at least a0.
    #[serde(rename = "r")]
    pub r_active: f64,
    pub a0: f64,
    /// Nonlinearity constant C0 with f <= C0 (u^2 + g).
    pub c0: f64,
    /// Structural constant of the observation-window estimate.
    pub c_star: f64,
    #[serde(default)]
    pub q_growth: Option<f64>,
    #[serde(default)]
    pub e0: Option<f64>,
    /// Distance of the energy to the threshold, as a fraction: E0 <= (1 - nu) m.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Constant of the focusing variational lower bound.
    #[serde(default, rename = "c_script_n")]
    pub c_script: Option<f64>,
    /// Margin epsilon of the focusing trapping argument.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RateOutput {
    pub t_window: f64,
    pub delta: f64,
    pub gamma: f64,
}

fn require_positive(name: &str, value: f64) -> Result<f64> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(KgError::Invalid(format!("{name} must be positive, got {value}")));
    }
    Ok(value)
}

fn require_nonnegative(name: &str, value: f64) -> Result<f64> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(KgError::Invalid(format!(
            "{name} must be nonnegative, got {value}"
        )));
    }
    Ok(value)
}

fn missing(name: &str) -> KgError {
    KgError::Invalid(format!("regime requires {name}"))
}

/// Observation window, per-window drop fraction, and exponential rate.
pub fn theoretical_rate(inp: &RateInputs) -> Result<RateOutput> {
    let m = require_positive("M", inp.m_bound)?;
    let r = require_positive("R", inp.r_active)?;
    let a0 = require_positive("a0", inp.a0)?;
    let c0 = require_nonnegative("C0", inp.c0)?;
    let c_star = require_positive("C*", inp.c_star)?;

    let log_t = match inp.regime {
        Regime::ConditionF => c_star * (1.0 + c0 + r * r),
        Regime::ConditionF2 => {
            let q = inp.q_growth.ok_or_else(|| missing("q_growth"))?;
            let e0 = require_positive("E0", inp.e0.ok_or_else(|| missing("e0"))?)?;
            if !(q >= 2.0) {
                return Err(KgError::Invalid(format!("q_growth must be >= 2, got {q}")));
            }
            c_star * (1.0 + c0 + r * r + c0 * e0.powf(q / 2.0 - 1.0))
        }
        Regime::Focusing => {
            let nu = require_positive("nu", inp.nu.ok_or_else(|| missing("nu"))?)?;
            let cn = require_nonnegative("c_script_n", inp.c_script.ok_or_else(|| missing("c_script_n"))?)?;
            c_star / nu * (1.0 + cn) * (1.0 + c0 + r * r)
        }
    };
    let t_window = log_t.exp();
    if !t_window.is_finite() {
        return Err(KgError::Invalid(format!(
            "observation window overflowed (log T = {log_t})"
        )));
    }

    let mut delta = 0.5 / (1.0 + m * t_window + 1.0 / (a0 * r));
    if inp.regime == Regime::Focusing {
        let eps = require_positive("epsilon", inp.epsilon.ok_or_else(|| missing("epsilon"))?)?;
        let e0 = require_positive("E0", inp.e0.ok_or_else(|| missing("e0"))?)?;
        delta = delta.min(eps / (m * t_window * e0));
    }
    let gamma = (1.0 + delta).ln() / t_window;
    Ok(RateOutput {
        t_window,
        delta,
        gamma,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub gamma_fit: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
}

/// Least-squares fit of log E(t) over samples with t in [t1, t2]. Requires at
/// least 10 samples, all with positive energy.
pub fn fit_decay_rate(history: &RunHistory, t1: f64, t2: f64) -> Result<RateFit> {
    if !(t1 < t2) {
        return Err(KgError::Invalid(format!(
            "fit window needs t1 < t2, got [{t1}, {t2}]"
        )));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for r in &history.records {
        if r.t >= t1 - 1e-12 && r.t <= t2 + 1e-12 {
            if !(r.e > 0.0) {
                return Err(KgError::Invalid(format!(
                    "nonpositive energy {} at t = {} inside the fit window",
                    r.e, r.t
                )));
            }
            ts.push(r.t);
            ys.push(r.e.ln());
        }
    }
    let n = ts.len();
    if n < 10 {
        return Err(KgError::Invalid(format!(
            "fit window [{t1}, {t2}] holds {n} samples, need at least 10"
        )));
    }
    let nf = n as f64;
    let t_mean = ts.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dt = ts[i] - t_mean;
        let dy = ys[i] - y_mean;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt <= 0.0 {
        return Err(KgError::Invalid("degenerate fit window".into()));
    }
    let slope = sty / stt;
    let ss_res = (syy - slope * sty).max(0.0);
    let r_squared = if syy <= 1e-30 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        gamma_fit: -slope,
        intercept: y_mean - slope * t_mean,
        r_squared,
        window: (t1, t2),
        n_samples: n,
    })
}

/// Whether the measured decrement over [0, T] clears the per-window gate
/// A >= delta * E(T) that drives the iteration E -> E / (1 + delta).
pub fn decrement_gate(history: &RunHistory, t_window: f64, delta: f64) -> Result<bool> {
    let a_dec = decrement(history, t_window)?;
    let e_t = history.energy_at(t_window)?;
    Ok(a_dec >= delta * e_t - 1e-12 * (1.0 + e_t.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagnosticsRecord;

    fn history_from(ts: &[f64], es: &[f64], acums: &[f64]) -> RunHistory {
        let records = ts
            .iter()
            .zip(es)
            .zip(acums)
            .map(|((&t, &e), &a)| DiagnosticsRecord {
                t,
                e,
                a_cum: a,
                ..Default::default()
            })
            .collect();
        RunHistory {
            records,
            blowup: None,
            warnings: vec![],
            snapshots: vec![],
            dt: 0.1,
            sample_stride: 1,
            t_final: *ts.last().unwrap(),
            s_cone: 1.0,
            p_sobolev: 6.0,
            chi_r: 5.0,
            cone_margin: 0.05,
        }
    }

    fn base_inputs() -> RateInputs {
        RateInputs {
            regime: Regime::ConditionF,
            m_bound: 1.0,
            r_active: 1.0,
            a0: 1.0,
            c0: 1.0,
            c_star: 1.0,
            q_growth: None,
            e0: None,
            nu: None,
            c_script: None,
            epsilon: None,
        }
    }

    #[test]
    fn unit_constants_give_the_reference_triple() {
        let out = theoretical_rate(&base_inputs()).unwrap();
        let t = 3.0f64.exp();
        let delta = 0.5 / (2.0 + t);
        let gamma = (1.0 + delta).ln() / t;
        assert!((out.t_window - t).abs() <= 1e-12 * t);
        assert!((out.delta - delta).abs() <= 1e-12);
        assert!((out.gamma - gamma).abs() <= 1e-12 * gamma);
        // Order-of-magnitude anchors for the same triple.
        assert!((out.t_window - 20.0855369231877).abs() <= 1e-10);
        assert!((out.delta - 0.022639259).abs() <= 1e-8);
        assert!((out.gamma - 0.001114565).abs() <= 1e-8);
    }

    #[test]
    fn growth_correction_extends_the_window() {
        let mut inp = base_inputs();
        inp.regime = Regime::ConditionF2;
        inp.q_growth = Some(2.0);
        inp.e0 = Some(1.0);
        let out = theoretical_rate(&inp).unwrap();
        // q = 2, E0 = 1 adds exactly one more unit of C0 to log T.
        assert!((out.t_window - 4.0f64.exp()).abs() <= 1e-10);
        let plain = theoretical_rate(&base_inputs()).unwrap();
        assert!(out.t_window > plain.t_window);
        assert!(out.gamma < plain.gamma);
    }

    #[test]
    fn focusing_margin_can_bind_the_drop_fraction() {
        let mut inp = base_inputs();
        inp.regime = Regime::Focusing;
        inp.nu = Some(1.0);
        inp.c_script = Some(0.0);
        inp.e0 = Some(1.0);
        inp.epsilon = Some(1e-6);
        let out = theoretical_rate(&inp).unwrap();
        let t = 3.0f64.exp();
        assert!((out.t_window - t).abs() <= 1e-10);
        assert!((out.delta - 1e-6 / t).abs() <= 1e-18);
        inp.epsilon = Some(100.0);
        let loose = theoretical_rate(&inp).unwrap();
        assert!((loose.delta - 0.5 / (2.0 + t)).abs() <= 1e-15);
    }

    #[test]
    fn missing_or_bad_inputs_are_rejected() {
        let mut inp = base_inputs();
        inp.m_bound = 0.0;
        assert!(theoretical_rate(&inp).is_err());
        let mut inp = base_inputs();
        inp.regime = Regime::ConditionF2;
        assert!(theoretical_rate(&inp).is_err());
        inp.q_growth = Some(1.5);
        inp.e0 = Some(1.0);
        assert!(theoretical_rate(&inp).is_err());
        let mut inp = base_inputs();
        inp.regime = Regime::Focusing;
        inp.nu = Some(1.0);
        assert!(theoretical_rate(&inp).is_err());
    }

    #[test]
    fn rate_is_monotone_on_the_constant_lattice() {
        let vals = [1.0, 2.0, 4.0];
        let gamma = |m: f64, r: f64, c0: f64| {
            let mut inp = base_inputs();
            inp.m_bound = m;
            inp.r_active = r;
            inp.c0 = c0;
            theoretical_rate(&inp).unwrap().gamma
        };
        for &m in &vals {
            for &r in &vals {
                for &c0 in &vals {
                    let g = gamma(m, r, c0);
                    assert!(g > 0.0);
                    for (gm, gr, gc) in [
                        (gamma(2.0 * m, r, c0), gamma(m, 2.0 * r, c0), gamma(m, r, 2.0 * c0)),
                    ] {
                        assert!(gm < g, "gamma not decreasing in M at ({m},{r},{c0})");
                        assert!(gr < g, "gamma not decreasing in R at ({m},{r},{c0})");
                        assert!(gc < g, "gamma not decreasing in C0 at ({m},{r},{c0})");
                    }
                }
            }
        }
    }

    #[test]
    fn exact_exponential_series_is_recovered() {
        let ts: Vec<f64> = (0..101).map(|i| i as f64 * 0.5).collect();
        let es: Vec<f64> = ts.iter().map(|&t| 2.7 * (-0.3 * t).exp()).collect();
        let zeros = vec![0.0; ts.len()];
        let h = history_from(&ts, &es, &zeros);
        let fit = fit_decay_rate(&h, 0.0, 50.0).unwrap();
        assert!((fit.gamma_fit - 0.3).abs() <= 1e-12);
        assert!((fit.intercept - 2.7f64.ln()).abs() <= 1e-12);
        assert!(fit.r_squared >= 1.0 - 1e-12);
        assert_eq!(fit.n_samples, 101);

        // Scaling the energies shifts only the intercept.
        let es7: Vec<f64> = es.iter().map(|e| 7.0 * e).collect();
        let h7 = history_from(&ts, &es7, &zeros);
        let fit7 = fit_decay_rate(&h7, 0.0, 50.0).unwrap();
        assert!((fit7.gamma_fit - fit.gamma_fit).abs() <= 1e-13);
        assert!((fit7.intercept - (fit.intercept + 7.0f64.ln())).abs() <= 1e-12);
    }

    #[test]
    fn constant_series_fits_to_zero_rate() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let es = vec![0.75; ts.len()];
        let zeros = vec![0.0; ts.len()];
        let fit = fit_decay_rate(&history_from(&ts, &es, &zeros), 0.0, 19.0).unwrap();
        assert_eq!(fit.gamma_fit, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let es: Vec<f64> = ts.iter().map(|&t| (-0.1 * t).exp()).collect();
        let zeros = vec![0.0; ts.len()];
        let h = history_from(&ts, &es, &zeros);
        assert!(fit_decay_rate(&h, 5.0, 5.0).is_err());
        assert!(fit_decay_rate(&h, 0.0, 5.0).is_err()); // only 6 samples
        let mut es_bad = es.clone();
        es_bad[10] = 0.0;
        let hb = history_from(&ts, &es_bad, &zeros);
        assert!(fit_decay_rate(&hb, 0.0, 29.0).is_err());
    }

    #[test]
    fn vacuous_gate_holds_and_iterates() {
        let ts: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let h = history_from(&ts, &[0.0; 5], &[0.0; 5]);
        assert!(decrement_gate(&h, 3.0, 0.5).unwrap());

        // A geometric cascade that meets the gate with equality each window
        // satisfies E(nT) = (1+delta)^{-n} E(0).
        let delta = 0.25;
        let n = 12usize;
        let ts: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let es: Vec<f64> = (0..=n).map(|i| (1.0f64 + delta).powi(-(i as i32))).collect();
        let mut acum = vec![0.0];
        for i in 1..=n {
            acum.push(acum[i - 1] + delta * es[i]);
        }
        let h = history_from(&ts, &es, &acum);
        for k in 1..=n {
            let windowed = decrement(&h, k as f64).unwrap() - decrement(&h, k as f64 - 1.0).unwrap();
            assert!(windowed >= delta * h.energy_at(k as f64).unwrap() - 1e-12);
            assert!(
                (h.energy_at(k as f64).unwrap() - (1.0 + delta).powi(-(k as i32))).abs() <= 1e-12
            );
        }
        assert!(decrement_gate(&h, 1.0, delta).unwrap());
    }
}
