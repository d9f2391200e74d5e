//! Ground states of -Lap Q + c Q = f'(Q) and the potential-well
//! classification of focusing initial data.
//!
//! The radial profile is found by bisection shooting on Q(0). The turning
//! amplitude z* solving c z^2 = 2 f(z) brackets the root from below (it is
//! exactly the root in one dimension, where the ODE has a first integral).
//! The integrator is classic fourth-order Runge-Kutta at step dr/4; once the
//! profile has fallen to a small multiple of Q(0) it is spliced to the exact
//! exponential tail, which keeps the deep-tail error from the e^{+r}
//! amplification of shooting noise. The threshold mass m and the virial
//! check are quadratures on the fine shooting grid, not the coarser PDE
//! grid, so they inherit the integrator's accuracy.

use crate::diagnostics::{total_energy, virial_k};
use crate::error::{KgError, Result};
use crate::grid::{sphere_surface, DamperProfile, Field, Grid, GridKind};
use crate::nonlinearity::{Nonlinearity, Sign};
use crate::rates::fit_decay_rate;
use crate::stepper::{simulate, SchemeConfig, SimulateOptions};

#[derive(Debug, Clone)]
pub struct GroundState {
    /// Profile resampled onto the PDE grid nodes (even in x on a line grid).
    pub profile: Vec<f64>,
    pub c: f64,
    /// Threshold mass m = J_c(Q), integrated on the fine shooting grid.
    pub m: f64,
    /// Central amplitude Q(0).
    pub q0: f64,
    /// Max-norm residual of -Lap Q + c Q - f'(Q) on the PDE grid (pointwise
    /// stencil), an O(dr^2) sanity figure.
    pub residual: f64,
    /// Virial functional of the profile on the fine grid; vanishes for the
    /// exact ground state.
    pub k_check: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    Crossed,
    Escaped,
    Decayed,
}

struct ShotOutcome {
    shot: Shot,
    q_end: f64,
    r_end: f64,
}

struct Shooter<'a> {
    model: &'a dyn Nonlinearity,
    c: f64,
    n_dim: f64,
    h: f64,
    r_max: f64,
}

impl Shooter<'_> {
    fn rhs(&self, r: f64, q: f64, p: f64) -> (f64, f64) {
        let force = self.c * q - self.model.fprime(q);
        if r <= 1e-12 {
            (p, force / self.n_dim)
        } else {
            (p, force - (self.n_dim - 1.0) / r * p)
        }
    }

    fn rk4(&self, r: f64, q: f64, p: f64) -> (f64, f64) {
        let h = self.h;
        let (k1q, k1p) = self.rhs(r, q, p);
        let (k2q, k2p) = self.rhs(r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p);
        let (k3q, k3p) = self.rhs(r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p);
        let (k4q, k4p) = self.rhs(r + h, q + h * k3q, p + h * k3p);
        (
            q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// Integrate outward from Q(0) = s, classifying the trajectory. With a
    /// collector, store Q and P per step and stop once |Q| <= stop_eps.
    fn shoot(&self, s: f64, stop_eps: f64, mut collect: Option<&mut Vec<(f64, f64)>>) -> ShotOutcome {
        let mut q = s;
        let mut p = 0.0;
        let mut r = 0.0;
        if let Some(buf) = collect.as_deref_mut() {
            buf.push((q, p));
        }
        let steps = (self.r_max / self.h).ceil() as usize;
        for _ in 0..steps {
            let (qn, pn) = self.rk4(r, q, p);
            q = qn;
            p = pn;
            r += self.h;
            if !q.is_finite() || !p.is_finite() {
                return ShotOutcome {
                    shot: Shot::Escaped,
                    q_end: q,
                    r_end: r,
                };
            }
            if q < 0.0 {
                return ShotOutcome {
                    shot: Shot::Crossed,
                    q_end: q,
                    r_end: r,
                };
            }
            if let Some(buf) = collect.as_deref_mut() {
                buf.push((q, p));
            }
            if p > 0.0 || q > 10.0 * s {
                return ShotOutcome {
                    shot: Shot::Escaped,
                    q_end: q,
                    r_end: r,
                };
            }
            if q <= stop_eps {
                return ShotOutcome {
                    shot: Shot::Decayed,
                    q_end: q,
                    r_end: r,
                };
            }
        }
        // Ran out of domain while still positive and falling: only shots at
        // the bisection resolution do this. Small leftover counts as decayed.
        ShotOutcome {
            shot: if q <= 1e-3 * s {
                Shot::Decayed
            } else {
                Shot::Escaped
            },
            q_end: q,
            r_end: r,
        }
    }
}

/// Smallest positive solution of c z^2 = 2 f(z), by geometric scan and
/// bisection. For superquadratic focusing f this is where the shooting
/// bracket starts.
fn turning_amplitude(model: &dyn Nonlinearity, c: f64) -> Result<f64> {
    let scale = c.sqrt();
    let h = |z: f64| c * z * z - 2.0 * model.f(z);
    let mut z = 1e-3 * scale.max(1e-3);
    if h(z) <= 0.0 {
        return Err(KgError::NoBracket(format!(
            "c z^2 - 2 f(z) is already nonpositive at z = {z}"
        )));
    }
    let cap = 1e6 * scale.max(1.0);
    while h(z * 1.05) > 0.0 {
        z *= 1.05;
        if z > cap {
            return Err(KgError::NoBracket(format!(
                "no turning amplitude below z = {cap}; the nonlinearity may be too weak"
            )));
        }
    }
    let (mut lo, mut hi) = (z, z * 1.05);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shoot the radial ground state of -Lap Q + c Q = f'(Q) on the given grid's
/// geometry and resample it onto the grid nodes.
pub fn shoot_ground_state(model: &dyn Nonlinearity, c: f64, grid: &Grid) -> Result<GroundState> {
    if model.sign() != Sign::Focusing {
        return Err(KgError::Invalid(
            "ground states exist only in focusing mode".into(),
        ));
    }
    if !(c > 0.0) {
        return Err(KgError::Invalid(format!("need c > 0, got c = {c}")));
    }
    if let GridKind::Radial { r_inner, .. } = grid.kind() {
        if r_inner > 0.0 {
            return Err(KgError::Invalid(
                "ground state shooting needs a symmetric origin, not an obstacle".into(),
            ));
        }
    }
    let h = grid.dr() / 4.0;
    let shooter = Shooter {
        model,
        c,
        n_dim: grid.n_dim() as f64,
        h,
        r_max: grid.outer_radius().max(30.0 / c.sqrt()),
    };

    let z_star = turning_amplitude(model, c)?;
    let mut lo = 0.999 * z_star;
    let mut tries = 0;
    while shooter.shoot(lo, 1e-12 * lo, None).shot == Shot::Crossed {
        lo *= 0.6;
        tries += 1;
        if tries > 100 {
            return Err(KgError::NoBracket(
                "could not find an undershooting amplitude".into(),
            ));
        }
    }
    let mut hi = z_star.max(lo) * 1.3;
    tries = 0;
    while shooter.shoot(hi, 1e-12 * hi, None).shot != Shot::Crossed {
        hi *= 1.3;
        tries += 1;
        if tries > 200 {
            return Err(KgError::NoBracket(
                "could not find an overshooting amplitude".into(),
            ));
        }
    }

    let mut root = 0.5 * (lo + hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match shooter.shoot(mid, 1e-12 * mid, None).shot {
            Shot::Crossed => hi = mid,
            Shot::Escaped => lo = mid,
            Shot::Decayed => {
                root = mid;
                break;
            }
        }
        root = 0.5 * (lo + hi);
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }

    // Final pass: keep the profile down to the splice amplitude, then switch
    // to the exponential tail. Splicing at 1e-6 of the peak keeps well above
    // the e^{+sqrt(c) r}-amplified bisection noise while the nonlinear tail
    // correction is already O(q_s^2).
    let splice_eps = 1e-6 * root;
    let mut path: Vec<(f64, f64)> = Vec::new();
    let end = shooter.shoot(root, splice_eps, Some(&mut path));
    if end.shot != Shot::Decayed || path.len() < 8 {
        return Err(KgError::NoDecay {
            q_end: end.q_end,
            r_end: end.r_end,
        });
    }
    // The collector stores levels up to the stop; the stop level itself was
    // pushed only if it stayed positive. Append it if missing.
    let r_s = (path.len() - 1) as f64 * h;
    let (q_s, _) = *path.last().unwrap();
    let sqrt_c = c.sqrt();
    let tail = |r: f64| q_s * (-sqrt_c * (r - r_s)).exp();

    // Threshold mass and virial check on the fine grid (trapezoid; the even
    // profile kills the h^2 boundary term at the origin, the tail mass below
    // the splice amplitude is negligible).
    let omega = sphere_surface(grid.n_dim());
    let nm1 = grid.n_dim() as i32 - 1;
    let mut m_acc = 0.0;
    let mut k_acc = 0.0;
    for (i, &(q, p)) in path.iter().enumerate() {
        let r = i as f64 * h;
        let wgt = if i == 0 || i + 1 == path.len() { 0.5 } else { 1.0 } * h * omega * r.powi(nm1);
        let quad = p * p + c * q * q;
        m_acc += wgt * (quad - 2.0 * model.f(q));
        k_acc += wgt * (quad - q * model.fprime(q));
    }

    let mut profile = vec![0.0; grid.n_nodes()];
    for j in 0..grid.n_nodes() {
        let rho = grid.radius(j);
        let k = (rho / h).round() as usize;
        if (rho - k as f64 * h).abs() > 1e-9 * (1.0 + rho) {
            return Err(KgError::Invalid(format!(
                "grid node radius {rho} is not aligned with the shooting step {h}"
            )));
        }
        profile[j] = if k < path.len() { path[k].0 } else { tail(rho) };
    }
    grid.pin_dirichlet(&mut profile);

    let lap = grid.laplacian(&profile)?;
    let mut residual = 0.0f64;
    for j in 0..grid.n_nodes() {
        if grid.is_dirichlet(j) {
            continue;
        }
        residual = residual.max((-lap[j] + c * profile[j] - model.fprime(profile[j])).abs());
    }

    Ok(GroundState {
        profile,
        c,
        m: m_acc,
        q0: root,
        residual,
        k_check: k_acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "Kplus")]
    KPlus,
    #[serde(rename = "Kminus")]
    KMinus,
    #[serde(rename = "above_threshold")]
    AboveThreshold,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Classification {
    pub label: ClassLabel,
    #[serde(rename = "E_value")]
    pub e_value: f64,
    #[serde(rename = "K_value")]
    pub k_value: f64,
    pub m_used: f64,
}

/// Potential-well classification of focusing data against the threshold m:
/// below-threshold data splits by the sign of K into the globally trapped
/// set (K >= 0) and the blowup set (K < 0).
pub fn classify(
    u0: &[f64],
    v0: &[f64],
    grid: &Grid,
    model: &dyn Nonlinearity,
    m_threshold: f64,
) -> Result<Classification> {
    if model.sign() != Sign::Focusing {
        return Err(KgError::Invalid(
            "classification applies to focusing mode only".into(),
        ));
    }
    if !(m_threshold > 0.0) {
        return Err(KgError::Invalid(format!(
            "threshold mass must be positive, got {m_threshold}"
        )));
    }
    let field = Field::new(grid, u0.to_vec(), v0.to_vec(), 0.0)?;
    let e_value = total_energy(&field, grid, model)?;
    let k_value = virial_k(u0, grid, model)?;
    let label = if e_value < m_threshold {
        if k_value >= 0.0 {
            ClassLabel::KPlus
        } else {
            ClassLabel::KMinus
        }
    } else {
        ClassLabel::AboveThreshold
    };
    Ok(Classification {
        label,
        e_value,
        k_value,
        m_used: m_threshold,
    })
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub kappa: f64,
    pub label: ClassLabel,
    pub e0: f64,
    pub blowup: Option<f64>,
    pub gamma_fit: Option<f64>,
}

/// Evolve scaled copies (kappa Q, 0) of the ground state and report, per
/// kappa, the classification and what actually happened: blowup time, or the
/// fitted decay rate over the second half of the run when there was one.
pub fn dichotomy_probe(
    grid: &Grid,
    damper: &DamperProfile,
    model: &dyn Nonlinearity,
    scheme: &SchemeConfig,
    gs: &GroundState,
    kappas: &[f64],
    t_final: f64,
) -> Result<Vec<ProbeOutcome>> {
    let mut out = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let u0: Vec<f64> = gs.profile.iter().map(|&q| kappa * q).collect();
        let v0 = vec![0.0; grid.n_nodes()];
        let cls = classify(&u0, &v0, grid, model, gs.m)?;
        let opts = SimulateOptions::new(t_final, 2);
        let history = simulate(grid, damper, model, scheme, &u0, &v0, &opts)?;
        let gamma_fit = if history.blowup.is_none() {
            fit_decay_rate(&history, 0.3 * t_final, t_final)
                .ok()
                .map(|f| f.gamma_fit)
        } else {
            None
        };
        out.push(ProbeOutcome {
            kappa,
            label: cls.label,
            e0: history.e0(),
            blowup: history.blowup,
            gamma_fit,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearityModel;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn half_quartic() -> NonlinearityModel {
        NonlinearityModel::power_sum(&[(0.5, 4.0)], Sign::Focusing).unwrap()
    }

    #[test]
    fn line_ground_state_is_the_known_soliton() {
        let g = Grid::line(30.0, 0.05).unwrap();
        let gs = shoot_ground_state(&half_quartic(), 1.0, &g).unwrap();
        assert!((gs.q0 - 1.0).abs() <= 1e-6, "q0 = {}", gs.q0);
        let mut worst = 0.0f64;
        for (j, &x) in g.coords().iter().enumerate() {
            worst = worst.max((gs.profile[j] - sech(x)).abs());
        }
        assert!(worst <= 1e-6, "profile error {worst}");
        assert!((gs.m - 4.0 / 3.0).abs() <= 1e-4, "m = {}", gs.m);
        assert!(gs.k_check.abs() <= 1e-6, "K = {}", gs.k_check);
        assert!(gs.residual <= 0.01, "residual = {}", gs.residual);
    }

    #[test]
    fn rescaled_mass_follows_the_scaling_law() {
        let g = Grid::line(25.0, 0.05).unwrap();
        let gs = shoot_ground_state(&half_quartic(), 2.0, &g).unwrap();
        let sqrt2 = 2.0f64.sqrt();
        assert!((gs.q0 - sqrt2).abs() <= 1e-6, "q0 = {}", gs.q0);
        let expect_m = 2.0f64.powf(1.5) * 4.0 / 3.0;
        assert!((gs.m - expect_m).abs() <= 1e-3, "m = {}", gs.m);
        assert!(gs.k_check.abs() <= 1e-5);
    }

    #[test]
    fn threshold_mass_decreases_with_stronger_coupling() {
        let g = Grid::line(25.0, 0.05).unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [0.5f64, 1.0, 2.0] {
            let model = NonlinearityModel::power_sum(&[(0.5 * lambda, 4.0)], Sign::Focusing).unwrap();
            let gs = shoot_ground_state(&model, 1.0, &g).unwrap();
            let expect = 4.0 / 3.0 / lambda;
            assert!(
                (gs.m - expect).abs() <= 1e-3,
                "lambda = {lambda}: m = {} vs {expect}",
                gs.m
            );
            assert!(gs.m < prev);
            prev = gs.m;
        }
    }

    #[test]
    fn the_ray_through_the_ground_state_peaks_at_the_threshold() {
        let g = Grid::line(30.0, 0.05).unwrap();
        let m = half_quartic();
        let gs = shoot_ground_state(&m, 1.0, &g).unwrap();
        for kappa in [0.9f64, 1.1] {
            let scaled: Vec<f64> = gs.profile.iter().map(|&q| kappa * q).collect();
            let j = crate::diagnostics::static_j(&scaled, &g, &m).unwrap();
            assert!(j < gs.m, "J({kappa} Q) = {j} should sit below m = {}", gs.m);
        }
    }

    #[test]
    fn shooting_rejects_bad_setups() {
        let g = Grid::line(20.0, 0.1).unwrap();
        let defoc = NonlinearityModel::power_sum(&[(1.0, 4.0)], Sign::Defocusing).unwrap();
        assert!(shoot_ground_state(&defoc, 1.0, &g).is_err());
        assert!(shoot_ground_state(&half_quartic(), 0.0, &g).is_err());
        let ann = Grid::radial(2, 0.5, 10.0, 0.1).unwrap();
        assert!(shoot_ground_state(&half_quartic(), 1.0, &ann).is_err());
        // A vanishingly weak nonlinearity has its turning point out of range.
        let weak = NonlinearityModel::power_sum(&[(1e-30, 4.0)], Sign::Focusing).unwrap();
        assert!(matches!(
            shoot_ground_state(&weak, 1.0, &g),
            Err(KgError::NoBracket(_))
        ));
    }

    #[test]
    fn classification_of_the_scaled_family() {
        let g = Grid::line(30.0, 0.05).unwrap();
        let m = half_quartic();
        let gs = shoot_ground_state(&m, 1.0, &g).unwrap();
        let v0 = vec![0.0; g.n_nodes()];
        let below: Vec<f64> = gs.profile.iter().map(|&q| 0.95 * q).collect();
        let above: Vec<f64> = gs.profile.iter().map(|&q| 1.05 * q).collect();

        let c1 = classify(&below, &v0, &g, &m, gs.m).unwrap();
        assert_eq!(c1.label, ClassLabel::KPlus);
        assert!((c1.e_value - 1.32066).abs() <= 1e-3);
        let c2 = classify(&above, &v0, &g, &m, gs.m).unwrap();
        assert_eq!(c2.label, ClassLabel::KMinus);
        assert!((c2.k_value + 0.30135).abs() <= 1e-3);
        assert!((c2.e_value - 1.319325).abs() <= 1e-3);
        // Amplitude scaling alone never exceeds the threshold: J(kappa Q)
        // peaks at exactly m when kappa = 1. Kinetic energy does.
        let fast: Vec<f64> = gs.profile.iter().map(|&q| 0.3 * q).collect();
        let c3 = classify(&gs.profile, &fast, &g, &m, gs.m).unwrap();
        assert_eq!(c3.label, ClassLabel::AboveThreshold);
        assert!((c3.e_value - (4.0 / 3.0 + 0.09 * 2.0)).abs() <= 1e-3);

        let defoc = NonlinearityModel::power_sum(&[(1.0, 4.0)], Sign::Defocusing).unwrap();
        assert!(classify(&below, &v0, &g, &defoc, gs.m).is_err());
    }

    #[test]
    fn classification_is_stable_under_refinement() {
        let m = half_quartic();
        let mut labels = Vec::new();
        for dr in [0.1f64, 0.05] {
            let g = Grid::line(25.0, dr).unwrap();
            let gs = shoot_ground_state(&m, 1.0, &g).unwrap();
            let v0 = vec![0.0; g.n_nodes()];
            for kappa in [0.95f64, 1.05] {
                let data: Vec<f64> = gs.profile.iter().map(|&q| kappa * q).collect();
                labels.push(classify(&data, &v0, &g, &m, gs.m).unwrap().label);
            }
        }
        assert_eq!(labels[0], labels[2]);
        assert_eq!(labels[1], labels[3]);
        assert_eq!(labels[0], ClassLabel::KPlus);
        assert_eq!(labels[1], ClassLabel::KMinus);
    }
}
