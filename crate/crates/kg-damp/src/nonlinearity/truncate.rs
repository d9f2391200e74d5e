//! Two-stage superlinear truncation of a defocusing nonlinearity.
//!
//! Stage one caps the potential derivative: V_k'(z) = min(V'(z),
//! V'(k)(z/k)^{theta-1}) for z > k, leaving f untouched on |z| <= k, which
//! bounds the growth of f_k by |z|^{2+theta} while keeping f_k <= f and
//! preserving the coercivity structure. Stage two replaces V' beyond a second
//! radius l by the pure power V_k'(l)(z/l)^{theta-1}, making f_kl' globally
//! Hoelder-Lipschitz. V_k itself needs the integral of the capped derivative;
//! it is tabulated once on a log grid and interpolated monotonically, so PDE
//! stepping never pays for quadrature.

use super::{Nonlinearity, NonlinearityModel, Sign};
use crate::error::{KgError, Result};

const POINTS_PER_DECADE: usize = 2048;

#[derive(Debug, Clone)]
pub struct TruncatedModel {
    base: NonlinearityModel,
    theta: f64,
    k: f64,
    l: Option<f64>,
    /// V'(k) of the base model, the cap coefficient.
    vp_k: f64,
    /// True when the cap never binds on the sampled range (subcritical base);
    /// then the truncation is the identity.
    identity: bool,
    z_grid: Vec<f64>,
    vk: Vec<f64>,
    /// Monotonicity-limited slopes dV_k/dz at the grid points.
    slopes: Vec<f64>,
    inv_log_step: f64,
    /// Stage-two anchor values V_k(l), V_k'(l); 0 until staged.
    vk_l: f64,
    vkp_l: f64,
}

/// First-stage truncation at radius k with growth exponent theta.
pub fn truncate_first(
    model: &NonlinearityModel,
    theta: f64,
    k: f64,
) -> Result<TruncatedModel> {
    if model.sign() != Sign::Defocusing {
        return Err(KgError::Invalid(
            "truncation applies to defocusing models".into(),
        ));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(KgError::Invalid(format!(
            "theta must lie in (0,1), got {theta}"
        )));
    }
    if !(k > 0.0) {
        return Err(KgError::Invalid(format!("k must be positive, got {k}")));
    }
    let vp_k = model.vprime(k);
    let z_max = (10.0 * k).max(1e7);
    let decades = (z_max / k).log10();
    let n_cells = (decades * POINTS_PER_DECADE as f64).ceil() as usize;
    let log_step = (z_max / k).ln() / n_cells as f64;

    let capped = |z: f64| -> f64 {
        let cap = vp_k * (z / k).powf(theta - 1.0);
        model.vprime(z).min(cap)
    };

    let mut z_grid = Vec::with_capacity(n_cells + 1);
    let mut vk = Vec::with_capacity(n_cells + 1);
    let mut raw_slopes = Vec::with_capacity(n_cells + 1);
    let mut identity = true;
    let mut acc = model.v(k);
    z_grid.push(k);
    vk.push(acc);
    raw_slopes.push(capped(k));
    for i in 1..=n_cells {
        let z0 = z_grid[i - 1];
        let z1 = k * ((i as f64) * log_step).exp();
        let tol = 1e-13 * acc.abs().max(1.0);
        acc += adaptive_simpson(&capped, z0, z1, tol, 40)?;
        z_grid.push(z1);
        vk.push(acc);
        let d = capped(z1);
        raw_slopes.push(d);
        if identity && model.vprime(z1) > vp_k * (z1 / k).powf(theta - 1.0) * (1.0 + 1e-12) {
            identity = false;
        }
    }

    let slopes = limit_slopes(&z_grid, &vk, &raw_slopes);
    Ok(TruncatedModel {
        base: model.clone(),
        theta,
        k,
        l: None,
        vp_k,
        identity,
        z_grid,
        vk,
        slopes,
        inv_log_step: 1.0 / log_step,
        vk_l: 0.0,
        vkp_l: 0.0,
    })
}

/// Second-stage truncation at radius l > k.
pub fn truncate_second(tr: &TruncatedModel, l: f64) -> Result<TruncatedModel> {
    if tr.l.is_some() {
        return Err(KgError::Invalid("second stage already applied".into()));
    }
    if !(l > tr.k) {
        return Err(KgError::Invalid(format!(
            "second radius must exceed the first: l = {l}, k = {}",
            tr.k
        )));
    }
    let mut out = tr.clone();
    out.l = Some(l);
    out.vk_l = tr.vk_at(l)?;
    out.vkp_l = tr.vkp_at(l);
    Ok(out)
}

impl TruncatedModel {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn l(&self) -> Option<f64> {
        self.l
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Stage-one potential V_k at z >= 0.
    fn vk_at(&self, z: f64) -> Result<f64> {
        if self.identity || z <= self.k {
            return Ok(self.base.v(z));
        }
        let z_end = *self.z_grid.last().unwrap();
        if z <= z_end {
            return Ok(self.interpolate(z));
        }
        // Rare off-table query; integrate the capped derivative on demand.
        let capped = |y: f64| -> f64 {
            let cap = self.vp_k * (y / self.k).powf(self.theta - 1.0);
            self.base.vprime(y).min(cap)
        };
        let tail = adaptive_simpson(
            &capped,
            z_end,
            z,
            1e-12 * self.vk.last().unwrap().abs().max(1.0),
            48,
        )?;
        Ok(self.vk.last().unwrap() + tail)
    }

    /// Stage-one derivative V_k' at z >= 0 (closed form, no table).
    fn vkp_at(&self, z: f64) -> f64 {
        if self.identity || z <= self.k {
            return self.base.vprime(z);
        }
        let cap = self.vp_k * (z / self.k).powf(self.theta - 1.0);
        self.base.vprime(z).min(cap)
    }

    /// Potential of the full (possibly two-stage) model at z >= 0.
    fn v_at(&self, z: f64) -> Result<f64> {
        match self.l {
            Some(l) if z > l => {
                // V_kl(z) = V_k(l) + V_k'(l) l [(z/l)^theta - 1]/theta.
                Ok(self.vk_l + self.vkp_l * l * ((z / l).powf(self.theta) - 1.0) / self.theta)
            }
            _ => self.vk_at(z),
        }
    }

    fn vp_at(&self, z: f64) -> f64 {
        match self.l {
            Some(l) if z > l => self.vkp_l * (z / l).powf(self.theta - 1.0),
            _ => self.vkp_at(z),
        }
    }

    fn interpolate(&self, z: f64) -> f64 {
        let pos = (z / self.k).ln() * self.inv_log_step;
        let i = (pos.floor() as usize).min(self.z_grid.len() - 2);
        let (z0, z1) = (self.z_grid[i], self.z_grid[i + 1]);
        let h = z1 - z0;
        let t = ((z - z0) / h).clamp(0.0, 1.0);
        let (v0, v1) = (self.vk[i], self.vk[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * h * m1
    }

    fn in_identity_region(&self, z: f64) -> bool {
        self.identity || z <= self.k
    }
}

impl Nonlinearity for TruncatedModel {
    fn sign(&self) -> Sign {
        Sign::Defocusing
    }

    fn f(&self, u: f64) -> f64 {
        let z = u.abs();
        if self.in_identity_region(z) {
            return self.base.f(u);
        }
        match self.v_at(z) {
            Ok(v) => v * z * z,
            Err(_) => f64::NAN,
        }
    }

    fn fprime(&self, u: f64) -> f64 {
        let z = u.abs();
        if self.in_identity_region(z) {
            return self.base.fprime(u);
        }
        let s = if u > 0.0 { 1.0 } else { -1.0 };
        match self.v_at(z) {
            Ok(v) => s * (self.vp_at(z) * z * z + 2.0 * z * v),
            Err(_) => f64::NAN,
        }
    }
}

/// Sup over sampled pairs of |f'(z1) - f'(z2)| / ((|z1|+|z2|)^theta |z1-z2|),
/// the Hoelder-Lipschitz modulus the second stage is designed to make finite.
pub fn lipschitz_ratio_sup(
    model: &TruncatedModel,
    z_lo: f64,
    z_hi: f64,
    n_samples: usize,
) -> f64 {
    let mut pts = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        pts.push(z_lo + (z_hi - z_lo) * i as f64 / (n_samples - 1).max(1) as f64);
    }
    let fp: Vec<f64> = pts.iter().map(|&z| model.fprime(z)).collect();
    let mut sup: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dz = (pts[i] - pts[j]).abs();
            let scale = (pts[i].abs() + pts[j].abs()).powf(model.theta);
            if dz > 0.0 && scale > 0.0 {
                sup = sup.max((fp[i] - fp[j]).abs() / (scale * dz));
            }
        }
    }
    sup
}

/// Clamp exact derivative values into the monotone-cubic admissible region so
/// the interpolant cannot overshoot between nodes of a nondecreasing table.
fn limit_slopes(z: &[f64], v: &[f64], raw: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut out = raw.to_vec();
    if n < 2 {
        return out;
    }
    let secant = |i: usize| (v[i + 1] - v[i]) / (z[i + 1] - z[i]);
    for i in 0..n {
        let bound = if i == 0 {
            secant(0)
        } else if i == n - 1 {
            secant(n - 2)
        } else {
            secant(i - 1).min(secant(i))
        };
        out[i] = out[i].max(0.0).min(3.0 * bound.max(0.0));
    }
    out
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(KgError::Quadrature { a, b });
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}
