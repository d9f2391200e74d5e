//! Scalar diagnostics of a run: energies, damping decrement, virial and
//! static functionals, light-cone (Morawetz) integrals, the weighted-Sobolev
//! ratio, and equipartition residuals.
//!
//! A run records one `DiagnosticsRecord` per sample time. Space integrals are
//! evaluated on the live fields while the run is in flight; the offline
//! operations here only combine the stored scalar series (time-trapezoid,
//! centered time differences), so they never need field snapshots.

use crate::error::{KgError, Result};
use crate::grid::{smoothstep, DamperProfile, Field, Grid};
use crate::nonlinearity::{Nonlinearity, Sign};

/// One sample row. The `mor_*` and `ws_lhs` fields are running space-time
/// integrals accumulated from the cone start time; the `cone_*` fields keep
/// the instantaneous space integrals so any [S, T] window can be rebuilt.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Staggered discrete energy (the exactly-dissipated quantity).
    pub e: f64,
    pub e_free: f64,
    /// Cumulative damping decrement matching `e` exactly: e(t) - e(0) = -2 a_cum.
    pub a_cum: f64,
    pub k_virial: f64,
    pub j_static: f64,
    pub pair_vu: f64,
    pub max_u: f64,
    pub l2_u: f64,
    pub mor_grad: f64,
    pub mor_g: f64,
    pub mor_damp: f64,
    pub ws_lhs: f64,
    pub cone_grad: f64,
    pub cone_g: f64,
    pub cone_damp: f64,
    pub cone_ws: f64,
    /// <v | chi u> for the cutoff equipartition identity.
    pub chi_pair: f64,
    /// Right side of that identity at this sample.
    pub chi_rhs: f64,
    /// <a u | u>.
    pub pair_auu: f64,
    /// ||v||^2.
    pub kinetic: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub records: Vec<DiagnosticsRecord>,
    /// Blowup time when the run terminated early.
    pub blowup: Option<f64>,
    pub warnings: Vec<String>,
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub sample_stride: usize,
    pub t_final: f64,
    /// Diagnostic parameters the series were recorded with.
    pub s_cone: f64,
    pub p_sobolev: f64,
    pub chi_r: f64,
    pub cone_margin: f64,
}

impl RunHistory {
    pub fn e0(&self) -> f64 {
        self.records.first().map(|r| r.e).unwrap_or(0.0)
    }

    pub fn t_last(&self) -> f64 {
        self.records.last().map(|r| r.t).unwrap_or(0.0)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if self.records.is_empty() || t < -1e-12 || t > self.t_last() + 1e-12 {
            return Err(KgError::Invalid(format!(
                "time {t} outside recorded range [0, {}]",
                self.t_last()
            )));
        }
        Ok(())
    }

    /// Linear interpolation of a stored column at time t.
    fn interp(&self, t: f64, col: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
        let recs = &self.records;
        if t <= recs[0].t {
            return col(&recs[0]);
        }
        let i = match recs.binary_search_by(|r| r.t.partial_cmp(&t).unwrap()) {
            Ok(i) => return col(&recs[i]),
            Err(i) => i,
        };
        if i >= recs.len() {
            return col(recs.last().unwrap());
        }
        let (a, b) = (&recs[i - 1], &recs[i]);
        let w = (t - a.t) / (b.t - a.t);
        col(a) * (1.0 - w) + col(b) * w
    }

    pub fn energy_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.interp(t, |r| r.e))
    }
}

/// Total energy of a nodal field: kinetic + gradient + mass + nonlinear
/// potential, the nonlinear part signed by the model's mode.
pub fn total_energy(field: &Field, grid: &Grid, model: &dyn Nonlinearity) -> Result<f64> {
    let sgn = match model.sign() {
        Sign::Defocusing => 1.0,
        Sign::Focusing => -1.0,
    };
    let quad = free_energy(field, grid)?;
    let fvals: Vec<f64> = field.u.iter().map(|&u| model.f(u)).collect();
    Ok(quad + sgn * 2.0 * grid.integrate(&fvals)?)
}

/// Free energy: kinetic + gradient + mass terms, always nonnegative.
pub fn free_energy(field: &Field, grid: &Grid) -> Result<f64> {
    let vv: Vec<f64> = field.v.iter().map(|&v| v * v).collect();
    let uu: Vec<f64> = field.u.iter().map(|&u| u * u).collect();
    Ok(grid.integrate(&vv)? + grid.dirichlet_form(&field.u, &field.u)? + grid.integrate(&uu)?)
}

/// Virial functional K(u) = integral of |grad u|^2 + u^2 +- u f'(u)
/// (+ defocusing, - focusing; no factor 2).
pub fn virial_k(u: &[f64], grid: &Grid, model: &dyn Nonlinearity) -> Result<f64> {
    let sgn = match model.sign() {
        Sign::Defocusing => 1.0,
        Sign::Focusing => -1.0,
    };
    let uu: Vec<f64> = u.iter().map(|&x| x * x).collect();
    let ufp: Vec<f64> = u.iter().map(|&x| x * model.fprime(x)).collect();
    Ok(grid.dirichlet_form(u, u)? + grid.integrate(&uu)? + sgn * grid.integrate(&ufp)?)
}

/// Static action J(u) = integral of |grad u|^2 + u^2 - 2 f(u) (the focusing
/// well functional; its minimum over the K = 0 constraint is the threshold).
pub fn static_j(u: &[f64], grid: &Grid, model: &dyn Nonlinearity) -> Result<f64> {
    let uu: Vec<f64> = u.iter().map(|&x| x * x).collect();
    let fv: Vec<f64> = u.iter().map(|&x| model.f(x)).collect();
    Ok(grid.dirichlet_form(u, u)? + grid.integrate(&uu)? - 2.0 * grid.integrate(&fv)?)
}

pub fn pairing(u: &[f64], v: &[f64], grid: &Grid) -> Result<f64> {
    let prod: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    grid.integrate(&prod)
}

/// Damping decrement A(T): read off the exact accumulated column (linear
/// interpolation between samples), so it matches the energy drop to solver
/// precision at sample times.
pub fn decrement(history: &RunHistory, t: f64) -> Result<f64> {
    history.check_time(t)?;
    Ok(history.interp(t, |r| r.a_cum))
}

/// The smallness scalar mu(u;T) = [MT + (a0 R)^{-1}] A(u;T) / E(u;0).
pub fn mu_ratio(a_dec: f64, e0: f64, m_bound: f64, t: f64, a0: f64, r: f64) -> Result<f64> {
    if e0 <= 0.0 {
        return Err(KgError::Invalid("mu ratio needs E(0) > 0".into()));
    }
    if a0 * r <= 0.0 {
        return Err(KgError::Invalid("mu ratio needs a0 R > 0".into()));
    }
    Ok((m_bound * t + 1.0 / (a0 * r)) * a_dec / e0)
}

/// Light-cone weight q(t, rho).
fn cone_q(n_dim: u32, t: f64, rho: f64, lambda: f64) -> f64 {
    (n_dim as f64 - 1.0) / (2.0 * lambda) + (t * t - rho * rho) / (lambda * lambda * lambda)
}

/// Instantaneous space integrals over the truncated light cone at time t:
/// the multiplier's gradient square, g(u) q, the damping cross term
/// a v m(u), and |u|^p / t. Nodes enter when their radius is below
/// t - margin. Empty cone gives zeros.
pub struct ConeSample {
    pub grad: f64,
    pub g: f64,
    pub damp: f64,
    pub ws: f64,
}

pub fn cone_integrals(
    grid: &Grid,
    damper: &DamperProfile,
    model: &dyn Nonlinearity,
    u: &[f64],
    v: &[f64],
    t: f64,
    margin: f64,
    p: f64,
) -> Result<ConeSample> {
    if u.len() != grid.n_nodes() || v.len() != grid.n_nodes() {
        return Err(KgError::SizeMismatch {
            expected: grid.n_nodes(),
            got: u.len(),
        });
    }
    let mut out = ConeSample {
        grad: 0.0,
        g: 0.0,
        damp: 0.0,
        ws: 0.0,
    };
    if t <= margin {
        return Ok(out);
    }
    let du = grid.gradient(u)?;
    let n_dim = grid.n_dim();
    let a = damper.values();
    let w = grid.weights();
    for j in 0..u.len() {
        let rho = grid.radius(j);
        if rho >= t - margin {
            continue;
        }
        // Signed coordinate: x on the line, r on radial grids.
        let x = grid.coords()[j];
        let lambda = (t * t + rho * rho).sqrt();
        let q = cone_q(n_dim, t, rho, lambda);
        let radial = x * v[j] + t * du[j];
        let mult = (-t * v[j] + x * du[j]) / lambda + u[j] * q;
        out.grad += w[j] * radial * radial / (lambda * lambda * lambda);
        out.g += w[j] * model.g(u[j]) * q;
        out.damp += w[j] * a[j] * v[j] * mult;
        out.ws += w[j] * u[j].abs().powf(p) / t;
    }
    Ok(out)
}

/// Indices of samples falling in [s, t], requiring a nonempty window.
fn window_indices(history: &RunHistory, s: f64, t: f64) -> Result<Vec<usize>> {
    if !(s < t) {
        return Err(KgError::Invalid(format!(
            "need S < T, got S = {s}, T = {t}"
        )));
    }
    history.check_time(t)?;
    let idx: Vec<usize> = history
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t >= s - 1e-12 && r.t <= t + 1e-12)
        .map(|(i, _)| i)
        .collect();
    if idx.len() < 2 {
        return Err(KgError::Invalid(format!(
            "window [{s}, {t}] holds fewer than two samples"
        )));
    }
    Ok(idx)
}

/// Space-time cone integrals over [S, T]: time-trapezoid of the stored
/// instantaneous cone integrals at the sampling stride. Returns
/// (gradient term, g-term, damping term).
pub fn morawetz_accumulate(history: &RunHistory, s: f64, t: f64) -> Result<(f64, f64, f64)> {
    let idx = window_indices(history, s, t)?;
    let mut acc = (0.0, 0.0, 0.0);
    for pair in idx.windows(2) {
        let (a, b) = (&history.records[pair[0]], &history.records[pair[1]]);
        let h = 0.5 * (b.t - a.t);
        acc.0 += h * (a.cone_grad + b.cone_grad);
        acc.1 += h * (a.cone_g + b.cone_g);
        acc.2 += h * (a.cone_damp + b.cone_damp);
    }
    Ok(acc)
}

/// Measured constant of the weighted Sobolev claim: the cone integral of
/// |u|^p / t over [S, T] divided by E0^{p/2-1} (E0 + gradient term). The
/// exponent must match the one the run recorded.
pub fn weighted_sobolev_ratio(
    history: &RunHistory,
    s: f64,
    t: f64,
    p: f64,
    e0: f64,
) -> Result<f64> {
    if (p - history.p_sobolev).abs() > 1e-12 {
        return Err(KgError::Invalid(format!(
            "exponent {p} does not match the recorded series (p = {})",
            history.p_sobolev
        )));
    }
    if e0 <= 0.0 {
        return Err(KgError::Invalid("sobolev ratio needs E0 > 0".into()));
    }
    let idx = window_indices(history, s, t)?;
    let mut lhs = 0.0;
    for pair in idx.windows(2) {
        let (a, b) = (&history.records[pair[0]], &history.records[pair[1]]);
        lhs += 0.5 * (b.t - a.t) * (a.cone_ws + b.cone_ws);
    }
    let (term_grad, _, _) = morawetz_accumulate(history, s, t)?;
    Ok(lhs / (e0.powf(p / 2.0 - 1.0) * (e0 + term_grad)))
}

#[derive(Debug, Clone, Copy)]
pub struct EquipartitionSample {
    pub t: f64,
    /// Residual of d/dt <v|chi u> = int chi (v^2 - |grad u|^2 - u^2 -+ u f')
    /// - int (a v chi u + u u' chi').
    pub chi_residual: f64,
    /// Residual of d/dt [<v|u> + <a u|u>/2] = ||v||^2 - K(u).
    pub idk_residual: f64,
}

/// Equipartition residuals at interior sample times, by centered differences
/// of the stored pairings against the stored right sides. The cutoff radius
/// must match the one the run recorded.
pub fn equipartition_residual(
    history: &RunHistory,
    chi_r: f64,
) -> Result<Vec<EquipartitionSample>> {
    if (chi_r - history.chi_r).abs() > 1e-12 {
        return Err(KgError::Invalid(format!(
            "cutoff radius {chi_r} does not match the recorded series (chi_r = {})",
            history.chi_r
        )));
    }
    let recs = &history.records;
    let mut out = Vec::new();
    for i in 1..recs.len().saturating_sub(1) {
        let span = recs[i + 1].t - recs[i - 1].t;
        if span <= 0.0 {
            continue;
        }
        let d_chi = (recs[i + 1].chi_pair - recs[i - 1].chi_pair) / span;
        let idk_lhs = |r: &DiagnosticsRecord| r.pair_vu + 0.5 * r.pair_auu;
        let d_idk = (idk_lhs(&recs[i + 1]) - idk_lhs(&recs[i - 1])) / span;
        out.push(EquipartitionSample {
            t: recs[i].t,
            chi_residual: d_chi - recs[i].chi_rhs,
            idk_residual: d_idk - (recs[i].kinetic - recs[i].k_virial),
        });
    }
    Ok(out)
}

/// Cutoff profile: 1 inside chi_r, 0 outside 2 chi_r, quintic smoothstep
/// between.
#[derive(Debug, Clone)]
pub struct ChiCutoff {
    pub values: Vec<f64>,
    pub r: f64,
}

impl ChiCutoff {
    pub fn new(grid: &Grid, chi_r: f64) -> ChiCutoff {
        let values = (0..grid.n_nodes())
            .map(|j| 1.0 - smoothstep((grid.radius(j) - chi_r) / chi_r))
            .collect();
        ChiCutoff { values, r: chi_r }
    }
}

/// The scalars feeding one record's equipartition fields. The gradient and
/// cutoff-slope terms of the identity's right side are realized together as
/// the Dirichlet form B(u, chi u), the exact adjoint of the scheme's
/// Laplacian, so the residual carries no spatial discretization error.
pub fn equipartition_instant(
    grid: &Grid,
    damper: &DamperProfile,
    model: &dyn Nonlinearity,
    chi: &ChiCutoff,
    u: &[f64],
    v: &[f64],
) -> Result<(f64, f64)> {
    let sgn = match model.sign() {
        Sign::Defocusing => 1.0,
        Sign::Focusing => -1.0,
    };
    let chiu: Vec<f64> = chi.values.iter().zip(u).map(|(c, x)| c * x).collect();
    let b = grid.dirichlet_form(u, &chiu)?;
    let w = grid.weights();
    let a = damper.values();
    let mut chi_pair = 0.0;
    let mut rhs = -b;
    for j in 0..u.len() {
        let c = chi.values[j];
        chi_pair += w[j] * v[j] * c * u[j];
        rhs += w[j]
            * c
            * (v[j] * v[j]
                - u[j] * u[j]
                - sgn * u[j] * model.fprime(u[j])
                - a[j] * v[j] * u[j]);
    }
    Ok((chi_pair, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearityModel;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn line_grid() -> Grid {
        Grid::line(40.0, 0.01).unwrap()
    }

    fn sech_field(grid: &Grid) -> Field {
        let u: Vec<f64> = grid.coords().iter().map(|&x| sech(x)).collect();
        let v = vec![0.0; grid.n_nodes()];
        Field::new(grid, u, v, 0.0).unwrap()
    }

    fn half_quartic_focusing() -> NonlinearityModel {
        NonlinearityModel::power_sum(&[(0.5, 4.0)], Sign::Focusing).unwrap()
    }

    #[test]
    fn energies_of_reference_fields() {
        let g = line_grid();
        let f = sech_field(&g);
        let none = NonlinearityModel::none();
        // E(sech, 0) = int sech'^2 + sech^2 = 2/3 + 2.
        let e = total_energy(&f, &g, &none).unwrap();
        assert!((e - 8.0 / 3.0).abs() <= 1e-3, "{e}");
        assert!((free_energy(&f, &g).unwrap() - 8.0 / 3.0).abs() <= 1e-3);
        let kin = Field::new(
            &g,
            vec![0.0; g.n_nodes()],
            g.coords().iter().map(|&x| sech(x)).collect(),
            0.0,
        )
        .unwrap();
        assert!((free_energy(&kin, &g).unwrap() - 2.0).abs() <= 1e-6);
        let zero = Field::new(&g, vec![0.0; g.n_nodes()], vec![0.0; g.n_nodes()], 0.0).unwrap();
        assert_eq!(total_energy(&zero, &g, &none).unwrap(), 0.0);
    }

    #[test]
    fn focusing_energy_and_virial_of_the_soliton_family() {
        let g = line_grid();
        let m = half_quartic_focusing();
        let f = sech_field(&g);
        // E = 8/3 - 2 (1/2) int sech^4 = 8/3 - 4/3.
        let e = total_energy(&f, &g, &m).unwrap();
        assert!((e - 4.0 / 3.0).abs() <= 1e-3, "{e}");
        let k0 = virial_k(&f.u, &g, &m).unwrap();
        assert!(k0.abs() <= 1e-3, "{k0}");
        for kappa in [0.95f64, 1.05] {
            let u: Vec<f64> = f.u.iter().map(|&x| kappa * x).collect();
            let k = virial_k(&u, &g, &m).unwrap();
            let expect = 8.0 / 3.0 * kappa * kappa * (1.0 - kappa * kappa);
            assert!((k - expect).abs() <= 1e-3, "kappa {kappa}: {k} vs {expect}");
            let j = static_j(&u, &g, &m).unwrap();
            let expect_j = 8.0 / 3.0 * kappa * kappa - 4.0 / 3.0 * kappa.powi(4);
            assert!((j - expect_j).abs() <= 1e-3);
        }
        let j95 = static_j(
            &f.u.iter().map(|&x| 0.95 * x).collect::<Vec<_>>(),
            &g,
            &m,
        )
        .unwrap();
        assert!((j95 - 1.32066).abs() <= 1e-3);
    }

    #[test]
    fn virial_k_of_zero_field_is_zero() {
        let g = line_grid();
        let z = vec![0.0; g.n_nodes()];
        assert_eq!(virial_k(&z, &g, &half_quartic_focusing()).unwrap(), 0.0);
        assert_eq!(static_j(&z, &g, &half_quartic_focusing()).unwrap(), 0.0);
    }

    #[test]
    fn mu_ratio_examples() {
        assert_eq!(mu_ratio(0.0, 1.0, 1.0, 10.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((mu_ratio(0.1, 1.0, 1.0, 10.0, 1.0, 1.0).unwrap() - 1.1).abs() <= 1e-14);
        assert!((mu_ratio(0.5, 1.0, 1.0, 2.0, 1.0, 2.0).unwrap() - 1.25).abs() <= 1e-14);
        assert!(mu_ratio(0.1, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cone_weight_identity_on_the_boundary() {
        // At rho = t the q formula reduces to (N-1)/(2 lambda) exactly.
        for n in [1u32, 2, 3, 5] {
            let t = 7.5;
            let lambda = (2.0f64 * t * t).sqrt();
            let q = cone_q(n, t, t, lambda);
            assert_eq!(q, (n as f64 - 1.0) / (2.0 * lambda));
        }
    }

    #[test]
    fn cone_is_empty_before_it_opens() {
        let g = line_grid();
        let d = DamperProfile::zero(&g);
        let m = NonlinearityModel::none();
        let u = vec![1.0; g.n_nodes()];
        let v = vec![0.5; g.n_nodes()];
        let c = cone_integrals(&g, &d, &m, &u, &v, 0.0, 0.005, 6.0).unwrap();
        assert_eq!((c.grad, c.g, c.damp, c.ws), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn cone_positivity_for_defocusing_fields() {
        let g = line_grid();
        let d = DamperProfile::zero(&g);
        let m = NonlinearityModel::power_sum(&[(1.0, 4.0)], Sign::Defocusing).unwrap();
        let u: Vec<f64> = g.coords().iter().map(|&x| sech(x) * 0.7).collect();
        let v: Vec<f64> = g.coords().iter().map(|&x| 0.2 * sech(x) * x).collect();
        let c = cone_integrals(&g, &d, &m, &u, &v, 12.0, 0.005, 6.0).unwrap();
        assert!(c.grad >= 0.0);
        assert!(c.g >= 0.0);
        assert!(c.ws >= 0.0);
        assert_eq!(c.damp, 0.0);
    }

    #[test]
    fn focusing_free_energy_bound_in_the_supercritical_family() {
        // (N+2) E >= N K + 2 E_F + N ||v||^2 needs u f' >= (2 + 4/N) f, which
        // the octic family satisfies in one dimension.
        let g = line_grid();
        let m = NonlinearityModel::power_sum(&[(1.0, 8.0)], Sign::Focusing).unwrap();
        for amp in [0.2f64, 0.6, 0.9, 1.1] {
            let u: Vec<f64> = g.coords().iter().map(|&x| amp * sech(x)).collect();
            let v: Vec<f64> = g.coords().iter().map(|&x| 0.3 * amp * sech(x) * x).collect();
            let f = Field::new(&g, u, v, 0.0).unwrap();
            let e = total_energy(&f, &g, &m).unwrap();
            let ef = free_energy(&f, &g).unwrap();
            let k = virial_k(&f.u, &g, &m).unwrap();
            assert!(ef >= 0.0);
            if k >= 0.0 {
                assert!(
                    2.0 * ef <= 3.0 * e + 1e-8,
                    "amp {amp}: 2E_F = {} > (N+2)E = {}",
                    2.0 * ef,
                    3.0 * e
                );
            }
        }
    }

    fn synthetic_history(ts: &[f64], es: &[f64], acums: &[f64]) -> RunHistory {
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

    #[test]
    fn decrement_reads_the_exact_column() {
        let h = synthetic_history(
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 0.8, 0.7, 0.65],
            &[0.0, 0.1, 0.15, 0.175],
        );
        assert_eq!(decrement(&h, 0.0).unwrap(), 0.0);
        assert_eq!(decrement(&h, 2.0).unwrap(), 0.15);
        assert!((decrement(&h, 1.5).unwrap() - 0.125).abs() <= 1e-14);
        assert!(decrement(&h, 5.0).is_err());
    }

    #[test]
    fn window_ops_reject_bad_ranges() {
        let h = synthetic_history(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]);
        assert!(morawetz_accumulate(&h, 2.0, 1.0).is_err());
        assert!(morawetz_accumulate(&h, 1.0, 9.0).is_err());
        assert!(weighted_sobolev_ratio(&h, 0.0, 2.0, 4.0, 1.0).is_err());
    }

    #[test]
    fn equipartition_of_a_zero_history_vanishes() {
        let h = synthetic_history(
            &[0.0, 1.0, 2.0, 3.0],
            &[0.0; 4],
            &[0.0; 4],
        );
        let res = equipartition_residual(&h, 5.0).unwrap();
        assert_eq!(res.len(), 2);
        for r in res {
            assert_eq!(r.chi_residual, 0.0);
            assert_eq!(r.idk_residual, 0.0);
        }
    }

    #[test]
    fn chi_cutoff_shape() {
        let g = Grid::line(20.0, 0.1).unwrap();
        let chi = ChiCutoff::new(&g, 5.0);
        let mut prev = f64::NAN;
        for j in 0..g.n_nodes() {
            let rho = g.radius(j);
            let c = chi.values[j];
            assert!((0.0..=1.0).contains(&c));
            if rho <= 5.0 {
                assert_eq!(c, 1.0);
            }
            if rho >= 10.0 {
                assert_eq!(c, 0.0);
            }
            // Nonincreasing in distance from the center.
            if j > 0 && g.coords()[j] > 0.0 && g.coords()[j - 1] >= 0.0 {
                assert!(c <= prev + 1e-15);
            }
            prev = c;
        }
    }

    #[test]
    fn equipartition_instant_reduces_to_the_virial_identity_under_a_wide_cutoff() {
        // With chi = 1 on the support, rhs + <a v|u> must equal ||v||^2 - K.
        let g = Grid::line(30.0, 0.05).unwrap();
        let d = DamperProfile::zero(&g);
        let m = half_quartic_focusing();
        let chi = ChiCutoff::new(&g, 40.0);
        let mut u: Vec<f64> = g.coords().iter().map(|&x| sech(x)).collect();
        let v: Vec<f64> = g.coords().iter().map(|&x| 0.3 * sech(2.0 * x)).collect();
        g.pin_dirichlet(&mut u);
        let (pair, rhs) = equipartition_instant(&g, &d, &m, &chi, &u, &v).unwrap();
        let expect_pair = pairing(&u, &v, &g).unwrap();
        let vv: Vec<f64> = v.iter().map(|&x| x * x).collect();
        let expect_rhs = g.integrate(&vv).unwrap() - virial_k(&u, &g, &m).unwrap();
        assert!((pair - expect_pair).abs() <= 1e-12);
        assert!((rhs - expect_rhs).abs() <= 1e-12, "{rhs} vs {expect_rhs}");
    }
}
