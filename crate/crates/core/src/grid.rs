//! Uniform space-time discretization of `[0, L]^d x (0, T)`.
//!
//! Scalars live at cell centres, vector fields live on faces (MAC layout):
//! the component along axis `a` is stored at the faces orthogonal to `a`.
//!
//! Along any axis `a` the cells factor as `[outer][i_a][inner]` with
//! `outer = n^a` and `inner = n^(d-1-a)`; faces of axis `a` factor the same
//! way with `n + 1` positions along `a`. Face `i_a` separates cells
//! `i_a - 1` and `i_a`; faces `0` and `n` sit on the boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sum::CompensatedSum;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("spatial dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("need at least 4 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("box side length must be positive and finite, got {0}")]
    Length(f64),
    #[error("final time must be positive and finite, got {0}")]
    FinalTime(f64),
    #[error("slice has {got} values, domain has {expected} cells")]
    SliceLength { expected: usize, got: usize },
    #[error("field value at cell {cell} of slice {slice} is not finite")]
    NonFinite { slice: usize, cell: usize },
    #[error("density field is negative at cell {cell} of slice {slice}")]
    Negative { slice: usize, cell: usize },
    #[error("time samples must be strictly increasing and inside [0, T]")]
    Times,
    #[error("face component for axis {axis} has {got} values, expected {expected}")]
    FaceLength { axis: usize, expected: usize, got: usize },
}

/// Lateral boundary condition shared by every operator.
///
/// Ghost values: zero for `DirichletZero`, mirror of the interior cell for
/// `NoFlux`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[serde(alias = "dirichlet")]
    DirichletZero,
    #[serde(alias = "noflux", alias = "neumann")]
    NoFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeDomain {
    dim: usize,
    length: f64,
    final_time: f64,
    cells: usize,
    boundary: Boundary,
}

impl SpaceTimeDomain {
    pub fn new(dim: usize, length: f64, final_time: f64, cells: usize, boundary: Boundary) -> Result<Self, GridError> {
        if !(2..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if cells < 4 {
            return Err(GridError::TooFewCells(cells));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::Length(length));
        }
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(GridError::FinalTime(final_time));
        }
        Ok(Self { dim, length, final_time, cells, boundary })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Cells per axis.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_cells(mut self, cells: usize) -> Result<Self, GridError> {
        if cells < 4 {
            return Err(GridError::TooFewCells(cells));
        }
        self.cells = cells;
        Ok(self)
    }

    pub fn with_final_time(mut self, final_time: f64) -> Result<Self, GridError> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(GridError::FinalTime(final_time));
        }
        self.final_time = final_time;
        Ok(self)
    }

    /// Cell width `L / N`.
    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn face_area(&self) -> f64 {
        self.h().powi(self.dim as i32 - 1)
    }

    /// `|Omega| = L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// `|Omega_T| = L^d T`.
    pub fn space_time_volume(&self) -> f64 {
        self.volume() * self.final_time
    }

    pub fn cell_count(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn face_count(&self, _axis: usize) -> usize {
        (self.cells + 1) * self.cells.pow(self.dim as u32 - 1)
    }

    /// `(outer, inner)` factorisation of the cell array along `axis`.
    pub fn axis_layout(&self, axis: usize) -> (usize, usize) {
        debug_assert!(axis < self.dim);
        let n = self.cells;
        (n.pow(axis as u32), n.pow((self.dim - 1 - axis) as u32))
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        multi.iter().take(self.dim).fold(0, |acc, &i| acc * self.cells + i)
    }

    pub fn cell_multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.cells;
            idx /= self.cells;
        }
        out
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let h = self.h();
        let multi = self.cell_multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (multi[a] as f64 + 0.5) * h;
        }
        x
    }

    /// Centre of face `fidx` among the faces orthogonal to `axis`.
    pub fn face_center(&self, axis: usize, fidx: usize) -> [f64; 3] {
        let h = self.h();
        let n = self.cells;
        let mut rem = fidx;
        let mut x = [0.0; 3];
        for a in (0..self.dim).rev() {
            let extent = if a == axis { n + 1 } else { n };
            let i = rem % extent;
            rem /= extent;
            x[a] = if a == axis { i as f64 * h } else { (i as f64 + 0.5) * h };
        }
        x
    }

    /// Sample `f` at every cell centre.
    pub fn sample_cells<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.cell_count()).map(|c| f(&self.cell_center(c)[..self.dim])).collect()
    }

    /// Sample the normal component of a vector function at every face.
    pub fn sample_faces<F: Fn(&[f64], &mut [f64])>(&self, f: F) -> FaceField {
        let mut field = FaceField::zeros(*self);
        let mut v = [0.0; 3];
        for axis in 0..self.dim {
            for (fidx, out) in field.comps[axis].iter_mut().enumerate() {
                let x = self.face_center(axis, fidx);
                f(&x[..self.dim], &mut v[..self.dim]);
                *out = v[axis];
            }
        }
        field
    }

    fn check_slice(&self, slice: &[f64]) -> Result<(), GridError> {
        if slice.len() != self.cell_count() {
            return Err(GridError::SliceLength { expected: self.cell_count(), got: slice.len() });
        }
        Ok(())
    }

    fn ghost(&self, interior: f64) -> f64 {
        match self.boundary {
            Boundary::DirichletZero => 0.0,
            Boundary::NoFlux => interior,
        }
    }

    /// Central face differences `(f_R - f_L) / h`, with ghost values at the
    /// boundary faces.
    pub fn gradient_faces(&self, f: &[f64]) -> FaceField {
        assert_eq!(f.len(), self.cell_count(), "slice length mismatch");
        let n = self.cells;
        let inv_h = 1.0 / self.h();
        let mut out = FaceField::zeros(*self);
        for axis in 0..self.dim {
            let (outer, inner) = self.axis_layout(axis);
            let comp = &mut out.comps[axis];
            for o in 0..outer {
                let cell_base = o * n * inner;
                let face_base = o * (n + 1) * inner;
                for i in 0..=n {
                    for k in 0..inner {
                        let left =
                            if i > 0 { f[cell_base + (i - 1) * inner + k] } else { self.ghost(f[cell_base + k]) };
                        let right = if i < n {
                            f[cell_base + i * inner + k]
                        } else {
                            self.ghost(f[cell_base + (n - 1) * inner + k])
                        };
                        comp[face_base + i * inner + k] = (right - left) * inv_h;
                    }
                }
            }
        }
        out
    }

    /// Sum of outward face fluxes divided by `h`, per cell.
    pub fn divergence_cells(&self, field: &FaceField) -> Vec<f64> {
        let n = self.cells;
        let inv_h = 1.0 / self.h();
        let mut div = vec![0.0; self.cell_count()];
        for axis in 0..self.dim {
            let (outer, inner) = self.axis_layout(axis);
            let comp = &field.comps[axis];
            for o in 0..outer {
                let cell_base = o * n * inner;
                let face_base = o * (n + 1) * inner;
                for i in 0..n {
                    for k in 0..inner {
                        let l = comp[face_base + i * inner + k];
                        let r = comp[face_base + (i + 1) * inner + k];
                        div[cell_base + i * inner + k] += (r - l) * inv_h;
                    }
                }
            }
        }
        div
    }

    /// Discrete integral `h^d * sum(f)`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for &v in f {
            acc.add(v);
        }
        acc.value() * self.cell_volume()
    }

    /// Net outward flux through the lateral boundary, `h^(d-1) * sum F.n`.
    pub fn boundary_flux(&self, field: &FaceField) -> f64 {
        let n = self.cells;
        let mut acc = CompensatedSum::default();
        for axis in 0..self.dim {
            let (outer, inner) = self.axis_layout(axis);
            let comp = &field.comps[axis];
            for o in 0..outer {
                let face_base = o * (n + 1) * inner;
                for k in 0..inner {
                    acc.add(comp[face_base + n * inner + k]);
                    acc.add(-comp[face_base + k]);
                }
            }
        }
        acc.value() * self.face_area()
    }

    /// `true` when `idx` is a face on the lateral boundary of `axis`.
    pub fn is_boundary_face(&self, axis: usize, fidx: usize) -> bool {
        let (_, inner) = self.axis_layout(axis);
        let i = (fidx / inner) % (self.cells + 1);
        i == 0 || i == self.cells
    }
}

/// Face-normal vector components for one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    domain: SpaceTimeDomain,
    pub comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(domain: SpaceTimeDomain) -> Self {
        let comps = (0..domain.dim()).map(|a| vec![0.0; domain.face_count(a)]).collect();
        Self { domain, comps }
    }

    pub fn from_components(domain: SpaceTimeDomain, comps: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if comps.len() != domain.dim() {
            return Err(GridError::Dimension(comps.len()));
        }
        for (axis, c) in comps.iter().enumerate() {
            if c.len() != domain.face_count(axis) {
                return Err(GridError::FaceLength { axis, expected: domain.face_count(axis), got: c.len() });
            }
            if let Some(cell) = c.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFinite { slice: axis, cell });
            }
        }
        Ok(Self { domain, comps })
    }

    pub fn domain(&self) -> &SpaceTimeDomain {
        &self.domain
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    /// Face-weighted inner product `h^d * sum_faces F G`.
    pub fn dot(&self, other: &FaceField) -> f64 {
        let mut acc = CompensatedSum::default();
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for (x, y) in a.iter().zip(b) {
                acc.add(x * y);
            }
        }
        acc.value() * self.domain.cell_volume()
    }

    /// Largest `|div F|` over all cells.
    pub fn max_divergence(&self) -> f64 {
        self.domain.divergence_cells(self).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Divergence-free up to `tol * max|F|` in every cell.
    pub fn is_divergence_free(&self, tol: f64) -> bool {
        self.max_divergence() <= tol * self.max_abs()
    }

    /// Squared magnitude per cell, each axis contributing the average of its
    /// two opposing face components.
    pub fn cell_magnitude_sq(&self) -> Vec<f64> {
        let d = &self.domain;
        let n = d.cells();
        let mut out = vec![0.0; d.cell_count()];
        for axis in 0..d.dim() {
            let (outer, inner) = d.axis_layout(axis);
            let comp = &self.comps[axis];
            for o in 0..outer {
                let cell_base = o * n * inner;
                let face_base = o * (n + 1) * inner;
                for i in 0..n {
                    for k in 0..inner {
                        let avg = 0.5 * (comp[face_base + i * inner + k] + comp[face_base + (i + 1) * inner + k]);
                        out[cell_base + i * inner + k] += avg * avg;
                    }
                }
            }
        }
        out
    }
}

/// Cell-centred samples over a sequence of time slices.
///
/// Each slice carries a quadrature weight (the length of the time interval it
/// represents); space-time integrals are `sum_k w_k * h^d * sum_x f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: SpaceTimeDomain,
    times: Vec<f64>,
    weights: Vec<f64>,
    slices: Vec<Vec<f64>>,
    density: bool,
}

impl ScalarField {
    /// Slices at strictly increasing `times` in `[0, T]`; weights are the
    /// gaps to the next sample (the last one extends to `T`).
    pub fn new(domain: SpaceTimeDomain, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self, GridError> {
        let weights = left_endpoint_weights(&times, domain.final_time())?;
        Self::with_weights(domain, times, weights, slices)
    }

    pub fn with_weights(
        domain: SpaceTimeDomain,
        times: Vec<f64>,
        weights: Vec<f64>,
        slices: Vec<Vec<f64>>,
    ) -> Result<Self, GridError> {
        if times.len() != slices.len() || weights.len() != slices.len() {
            return Err(GridError::Times);
        }
        if times.windows(2).any(|w| w[1] <= w[0])
            || times.iter().any(|t| !(0.0..=domain.final_time()).contains(t))
            || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(GridError::Times);
        }
        for (k, s) in slices.iter().enumerate() {
            domain.check_slice(s)?;
            if let Some(cell) = s.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFinite { slice: k, cell });
            }
        }
        Ok(Self { domain, times, weights, slices, density: false })
    }

    /// A single slice at `t = 0` standing for the whole interval `(0, T)`.
    pub fn stationary(domain: SpaceTimeDomain, values: Vec<f64>) -> Result<Self, GridError> {
        Self::new(domain, vec![0.0], vec![values])
    }

    pub fn from_fn<F: Fn(&[f64], f64) -> f64>(
        domain: SpaceTimeDomain,
        times: Vec<f64>,
        f: F,
    ) -> Result<Self, GridError> {
        let slices = times.iter().map(|&t| domain.sample_cells(|x| f(x, t))).collect();
        Self::new(domain, times, slices)
    }

    /// Mark as a density and enforce nonnegativity.
    pub fn into_density(mut self) -> Result<Self, GridError> {
        for (k, s) in self.slices.iter().enumerate() {
            if let Some(cell) = s.iter().position(|&v| v < 0.0) {
                return Err(GridError::Negative { slice: k, cell });
            }
        }
        self.density = true;
        Ok(self)
    }

    pub fn is_density(&self) -> bool {
        self.density
    }

    pub fn domain(&self) -> &SpaceTimeDomain {
        &self.domain
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn gradient_faces(&self, k: usize) -> FaceField {
        self.domain.gradient_faces(&self.slices[k])
    }

    pub fn integrate(&self, k: usize) -> f64 {
        self.domain.integrate(&self.slices[k])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.slices {
            for v in s.iter_mut() {
                *v = f(*v);
            }
        }
        out.density = false;
        out
    }
}

pub(crate) fn left_endpoint_weights(times: &[f64], t_end: f64) -> Result<Vec<f64>, GridError> {
    if times.windows(2).any(|w| w[1] <= w[0]) || times.last().is_some_and(|&t| t > t_end) {
        return Err(GridError::Times);
    }
    Ok(times.iter().enumerate().map(|(k, &t)| times.get(k + 1).copied().unwrap_or(t_end) - t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize, boundary: Boundary) -> SpaceTimeDomain {
        SpaceTimeDomain::new(2, 1.0, 1.0, n, boundary).unwrap()
    }

    #[test]
    fn rejects_bad_domains() {
        assert_eq!(SpaceTimeDomain::new(1, 1.0, 1.0, 8, Boundary::NoFlux), Err(GridError::Dimension(1)));
        assert_eq!(SpaceTimeDomain::new(2, 1.0, 1.0, 3, Boundary::NoFlux), Err(GridError::TooFewCells(3)));
        assert!(SpaceTimeDomain::new(2, 0.0, 1.0, 8, Boundary::NoFlux).is_err());
        assert!(SpaceTimeDomain::new(2, 1.0, -1.0, 8, Boundary::NoFlux).is_err());
    }

    #[test]
    fn gradient_of_linear_field_is_one_on_interior_faces() {
        for boundary in [Boundary::DirichletZero, Boundary::NoFlux] {
            let d = unit(8, boundary);
            let f = d.sample_cells(|x| x[0]);
            let g = d.gradient_faces(&f);
            for (fidx, &v) in g.comps[0].iter().enumerate() {
                if !d.is_boundary_face(0, fidx) {
                    assert_relative_eq!(v, 1.0, epsilon = 1e-12);
                }
            }
            assert!(g.comps[1]
                .iter()
                .enumerate()
                .filter(|(f, _)| !d.is_boundary_face(1, *f))
                .all(|(_, v)| v.abs() < 1e-12));
        }
    }

    #[test]
    fn gradient_of_square_at_midplane() {
        let d = unit(8, Boundary::DirichletZero);
        let f = d.sample_cells(|x| x[0] * x[0]);
        let g = d.gradient_faces(&f);
        // face x1 = 0.5 is i = 4; cell centres 0.4375 and 0.5625
        let (_, inner) = d.axis_layout(0);
        for k in 0..inner {
            assert_relative_eq!(g.comps[0][4 * inner + k], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_field_has_zero_gradient() {
        let d = unit(6, Boundary::DirichletZero);
        assert!(d.gradient_faces(&vec![0.0; 36]).is_zero());
    }

    #[test]
    fn ghost_conventions_at_boundary() {
        let d = unit(4, Boundary::DirichletZero);
        let f = vec![2.0; 16];
        let g = d.gradient_faces(&f);
        let h = d.h();
        assert_relative_eq!(g.comps[0][0], 2.0 / h);
        assert_relative_eq!(g.comps[0][4 * 4], -2.0 / h);
        let g = d.with_boundary(Boundary::NoFlux).gradient_faces(&f);
        assert!(g.is_zero());
    }

    #[test]
    fn divergence_of_constant_vanishes_inside() {
        let d = unit(8, Boundary::NoFlux);
        let field = d.sample_faces(|_, v| {
            v[0] = 1.5;
            v[1] = -0.3;
        });
        let div = d.divergence_cells(&field);
        assert!(div.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_of_affine_gradient_vanishes_inside() {
        let d = unit(8, Boundary::DirichletZero);
        let f = d.sample_cells(|x| 2.0 * x[0] - x[1] + 0.5);
        let div = d.divergence_cells(&d.gradient_faces(&f));
        for (c, v) in div.iter().enumerate() {
            let m = d.cell_multi_index(c);
            if (1..7).contains(&m[0]) && (1..7).contains(&m[1]) {
                assert!(v.abs() < 1e-9, "cell {c}: {v}");
            }
        }
    }

    #[test]
    fn integrate_indicator_and_constants() {
        let d = SpaceTimeDomain::new(2, 1.0, 1.0, 10, Boundary::NoFlux).unwrap();
        assert_relative_eq!(d.integrate(&vec![1.0; 100]), 1.0, epsilon = 1e-14);
        assert_eq!(d.integrate(&vec![0.0; 100]), 0.0);
        let mut ind = vec![0.0; 100];
        ind[37] = 1.0;
        assert_relative_eq!(d.integrate(&ind), 0.01, epsilon = 1e-16);
    }

    #[test]
    fn face_centres_match_layout() {
        let d = SpaceTimeDomain::new(3, 2.0, 1.0, 4, Boundary::NoFlux).unwrap();
        let (_, inner) = d.axis_layout(1);
        // axis 1, outer index o = 2 (i0 = 2), position 3, inner k = 1
        let fidx = (2 * 5 + 3) * inner + 1;
        let x = d.face_center(1, fidx);
        assert_relative_eq!(x[0], 2.5 * 0.5);
        assert_relative_eq!(x[1], 3.0 * 0.5);
        assert_relative_eq!(x[2], 1.5 * 0.5);
    }

    #[test]
    fn scalar_field_weights_default_to_gaps() {
        let d = unit(4, Boundary::NoFlux);
        let f = ScalarField::new(d, vec![0.0, 0.25, 0.5], vec![vec![0.0; 16]; 3]).unwrap();
        assert_eq!(f.weights(), &[0.25, 0.25, 0.5]);
        assert!(ScalarField::new(d, vec![0.5, 0.25], vec![vec![0.0; 16]; 2]).is_err());
        assert!(ScalarField::new(d, vec![0.0], vec![vec![0.0; 15]]).is_err());
    }

    #[test]
    fn density_flag_rejects_negative_values() {
        let d = unit(4, Boundary::NoFlux);
        let mut s = vec![1.0; 16];
        s[3] = -1e-3;
        let f = ScalarField::stationary(d, s).unwrap();
        assert_eq!(f.into_density(), Err(GridError::Negative { slice: 0, cell: 3 }));
    }
}
