//! Spatial discretization: a 1D interval grid and radially symmetric grids in
//! dimension N >= 1, with quadrature, difference operators, and damping
//! profiles.
//!
//! Two Laplacian realizations coexist on purpose. `Grid::laplacian` is the
//! pointwise second-order stencil u'' + (N-1)/r u' (regular limit N u''(0) at
//! a symmetric origin); it is the accurate one for residual checks. The
//! evolution uses `Grid::flux_laplacian`, the conservative flux form whose
//! weighted inner product against any vector equals minus `dirichlet_form`
//! exactly, which is what makes the discrete energy identity exact.

use crate::error::{KgError, Result};

/// Surface measure of the unit sphere S^{n-1} inside R^n (2, 2*pi, 4*pi, ...).
pub fn sphere_surface(n_dim: u32) -> f64 {
    let half = n_dim as f64 / 2.0;
    // Gamma(n/2) built up from Gamma(1) = 1 or Gamma(1/2) = sqrt(pi).
    let mut gamma = if n_dim % 2 == 0 {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut x = if n_dim % 2 == 0 { 1.0 } else { 0.5 };
    while x < half - 0.25 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(half) / gamma
}

/// Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, C^2 transition between.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        x * x * (30.0 + x * (-60.0 + 30.0 * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    /// Interval [-L, L] in one dimension, Dirichlet at both ends.
    Line { l: f64 },
    /// Radial coordinate on [r_inner, L]; r_inner = 0 means whole space with a
    /// symmetric origin, r_inner > 0 means a ball obstacle with Dirichlet wall.
    Radial { r_inner: f64, l: f64 },
}

#[derive(Debug, Clone)]
pub struct Grid {
    n_dim: u32,
    kind: GridKind,
    dr: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    /// Face conductances c_{j+1/2} between consecutive nodes; length n-1.
    faces: Vec<f64>,
}

impl Grid {
    /// Whole-line grid on [-L, L] (dimension 1).
    pub fn line(l: f64, dr: f64) -> Result<Grid> {
        check_spacing(2.0 * l, dr)?;
        let n = (2.0 * l / dr).round() as usize;
        let coords: Vec<f64> = (0..=n).map(|j| -l + j as f64 * dr).collect();
        let mut weights = vec![dr; n + 1];
        weights[0] = 0.5 * dr;
        weights[n] = 0.5 * dr;
        let faces = vec![1.0 / dr; n];
        Ok(Grid {
            n_dim: 1,
            kind: GridKind::Line { l },
            dr,
            coords,
            weights,
            faces,
        })
    }

    /// Radial grid on [r_inner, L] in dimension `n_dim`.
    pub fn radial(n_dim: u32, r_inner: f64, l: f64, dr: f64) -> Result<Grid> {
        if n_dim < 1 {
            return Err(KgError::Invalid("dimension must be >= 1".into()));
        }
        if r_inner < 0.0 || r_inner >= l {
            return Err(KgError::Invalid(format!(
                "need 0 <= r_inner < L, got r_inner = {r_inner}, L = {l}"
            )));
        }
        check_spacing(l - r_inner, dr)?;
        let n = ((l - r_inner) / dr).round() as usize;
        let omega = sphere_surface(n_dim);
        let coords: Vec<f64> = (0..=n).map(|j| r_inner + j as f64 * dr).collect();
        let mut weights: Vec<f64> = coords
            .iter()
            .map(|&r| omega * r.powi(n_dim as i32 - 1) * dr)
            .collect();
        weights[0] *= 0.5;
        weights[n] *= 0.5;
        if r_inner == 0.0 {
            // The trapezoid weight at a symmetric origin vanishes for N >= 2;
            // use the exact half-cell volume instead so the origin row of the
            // flux Laplacian reduces to the regular limit 2N(u1-u0)/dr^2 and
            // the summation-by-parts identity stays exact.
            weights[0] = omega * (0.5 * dr).powi(n_dim as i32) / n_dim as f64;
        }
        let faces: Vec<f64> = (0..n)
            .map(|j| {
                let rm = 0.5 * (coords[j] + coords[j + 1]);
                omega * rm.powi(n_dim as i32 - 1) / dr
            })
            .collect();
        Ok(Grid {
            n_dim,
            kind: GridKind::Radial { r_inner, l },
            dr,
            coords,
            weights,
            faces,
        })
    }

    /// Dispatching constructor: dimension 1 without an obstacle gets the
    /// whole-line grid, everything else is radial.
    pub fn new(n_dim: u32, r_inner: f64, l: f64, dr: f64) -> Result<Grid> {
        if n_dim == 1 && r_inner == 0.0 {
            Grid::line(l, dr)
        } else {
            Grid::radial(n_dim, r_inner, l, dr)
        }
    }

    pub fn n_dim(&self) -> u32 {
        self.n_dim
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Node coordinates (x on the line grid, r on radial grids).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Quadrature weights; `integrate` is their dot product with the values.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Face conductances of the flux Laplacian (length n_nodes - 1).
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Outer radius L.
    pub fn outer_radius(&self) -> f64 {
        match self.kind {
            GridKind::Line { l } => l,
            GridKind::Radial { l, .. } => l,
        }
    }

    /// Distance from the symmetry center (|x| on the line, r on radial grids).
    pub fn radius(&self, j: usize) -> f64 {
        match self.kind {
            GridKind::Line { .. } => self.coords[j].abs(),
            GridKind::Radial { .. } => self.coords[j],
        }
    }

    pub fn is_dirichlet(&self, j: usize) -> bool {
        let last = self.coords.len() - 1;
        match self.kind {
            GridKind::Line { .. } => j == 0 || j == last,
            GridKind::Radial { r_inner, .. } => (j == 0 && r_inner > 0.0) || j == last,
        }
    }

    /// Zero out the Dirichlet nodes of a nodal vector.
    pub fn pin_dirichlet(&self, values: &mut [f64]) {
        let last = values.len() - 1;
        values[last] = 0.0;
        if self.is_dirichlet(0) {
            values[0] = 0.0;
        }
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.coords.len() {
            return Err(KgError::SizeMismatch {
                expected: self.coords.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Quadrature of nodal values over the domain (the radial measure
    /// includes the surface factor of the unit sphere).
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values)?;
        let mut acc = 0.0;
        for (w, v) in self.weights.iter().zip(values) {
            acc += w * v;
        }
        Ok(acc)
    }

    /// Pointwise second-order Laplacian u'' + (N-1)/r u'. A symmetric origin
    /// uses the regular limit N u''(0) with an even ghost; Dirichlet walls use
    /// a zero ghost (those rows are not used by the evolution).
    pub fn laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let n = u.len();
        let dr2 = self.dr * self.dr;
        let mut out = vec![0.0; n];
        for j in 0..n {
            let um = if j > 0 { u[j - 1] } else { 0.0 };
            let up = if j + 1 < n { u[j + 1] } else { 0.0 };
            out[j] = match self.kind {
                GridKind::Line { .. } => (up - 2.0 * u[j] + um) / dr2,
                GridKind::Radial { r_inner, .. } => {
                    if j == 0 && r_inner == 0.0 {
                        2.0 * self.n_dim as f64 * (u[1] - u[0]) / dr2
                    } else {
                        let r = self.coords[j];
                        (up - 2.0 * u[j] + um) / dr2
                            + (self.n_dim as f64 - 1.0) / r * (up - um) / (2.0 * self.dr)
                    }
                }
            };
        }
        Ok(out)
    }

    /// Conservative flux Laplacian: row j is sum of c_f (u_nb - u_j) over the
    /// adjacent faces, divided by the node weight. Satisfies
    /// integrate(v * flux_laplacian(u)) == -dirichlet_form(u, v) exactly.
    pub fn flux_laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = vec![0.0; u.len()];
        self.flux_laplacian_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn flux_laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for j in 0..n {
            let mut acc = 0.0;
            if j > 0 {
                acc += self.faces[j - 1] * (u[j - 1] - u[j]);
            }
            if j + 1 < n {
                acc += self.faces[j] * (u[j + 1] - u[j]);
            }
            out[j] = acc / self.weights[j];
        }
    }

    /// Radial derivative: centered interior, second-order one-sided at the
    /// ends, zero at a symmetric origin.
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let n = u.len();
        if n < 3 {
            return Err(KgError::Invalid("gradient needs at least 3 nodes".into()));
        }
        let mut out = vec![0.0; n];
        let h = self.dr;
        for j in 1..n - 1 {
            out[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
        }
        out[0] = match self.kind {
            GridKind::Radial { r_inner, .. } if r_inner == 0.0 => 0.0,
            _ => (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h),
        };
        out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        Ok(out)
    }

    /// Discrete Dirichlet form B(u, v) = sum over faces of
    /// c_f (u_+ - u_-)(v_+ - v_-); B(u, u) approximates the squared gradient
    /// integral and is the exact negative adjoint of `flux_laplacian`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(v)?;
        let mut acc = 0.0;
        for (j, c) in self.faces.iter().enumerate() {
            acc += c * (u[j + 1] - u[j]) * (v[j + 1] - v[j]);
        }
        Ok(acc)
    }
}

fn check_spacing(span: f64, dr: f64) -> Result<()> {
    if !(dr > 0.0) || !span.is_finite() || span <= 0.0 {
        return Err(KgError::Invalid(format!(
            "bad grid extents: span = {span}, dr = {dr}"
        )));
    }
    let cells = span / dr;
    if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
        return Err(KgError::Invalid(format!(
            "spacing {dr} does not divide the domain extent {span}"
        )));
    }
    if cells.round() < 2.0 {
        return Err(KgError::Invalid("grid needs at least 2 cells".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamperShape {
    Sharp,
    Smoothstep,
}

/// Nodal damping coefficient a(x): zero inside radius R, rising to at least
/// a0 outside R + width, capped by M.
#[derive(Debug, Clone)]
pub struct DamperProfile {
    values: Vec<f64>,
    pub m_bound: f64,
    pub r_active: f64,
    pub a0: f64,
    pub shape: DamperShape,
    pub width: f64,
}

impl DamperProfile {
    pub fn new(
        grid: &Grid,
        shape: DamperShape,
        m_bound: f64,
        r_active: f64,
        a0: f64,
        width: f64,
    ) -> Result<DamperProfile> {
        if a0 < 0.0 || m_bound < 0.0 || a0 > m_bound {
            return Err(KgError::Invalid(format!(
                "damper needs 0 <= a0 <= M, got a0 = {a0}, M = {m_bound}"
            )));
        }
        if r_active < 0.0 || width < 0.0 {
            return Err(KgError::Invalid(
                "damper radius and width must be nonnegative".into(),
            ));
        }
        let values = (0..grid.n_nodes())
            .map(|j| {
                let rho = grid.radius(j);
                match shape {
                    DamperShape::Sharp => {
                        if rho > r_active {
                            a0
                        } else {
                            0.0
                        }
                    }
                    DamperShape::Smoothstep => {
                        if width == 0.0 {
                            if rho > r_active {
                                a0
                            } else {
                                0.0
                            }
                        } else {
                            a0 * smoothstep((rho - r_active) / width)
                        }
                    }
                }
            })
            .collect();
        Ok(DamperProfile {
            values,
            m_bound,
            r_active,
            a0,
            shape,
            width,
        })
    }

    /// Identically zero damping (undamped runs and reversibility checks).
    pub fn zero(grid: &Grid) -> DamperProfile {
        DamperProfile {
            values: vec![0.0; grid.n_nodes()],
            m_bound: 0.0,
            r_active: 0.0,
            a0: 0.0,
            shape: DamperShape::Sharp,
            width: 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A state snapshot: displacement, velocity, and the time they belong to.
#[derive(Debug, Clone)]
pub struct Field {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl Field {
    pub fn new(grid: &Grid, u: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Field> {
        if u.len() != grid.n_nodes() {
            return Err(KgError::SizeMismatch {
                expected: grid.n_nodes(),
                got: u.len(),
            });
        }
        if v.len() != grid.n_nodes() {
            return Err(KgError::SizeMismatch {
                expected: grid.n_nodes(),
                got: v.len(),
            });
        }
        Ok(Field { u, v, t })
    }
}
