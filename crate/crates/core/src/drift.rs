//! Drift fields `V`, sampled on the faces of a domain.
//!
//! Divergence-free presets are built from a stream function evaluated at
//! grid nodes, which makes them divergence-free on the grid to rounding,
//! not just in the continuum.

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{left_endpoint_weights, FaceField, GridError, SpaceTimeDomain};
use crate::io::read_f64_le;
use crate::norms::{combine_in_time, slice_drift_lebesgue, Exponent, ExponentPair};

/// Relative divergence tolerance for fields flagged divergence-free.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("drift flagged divergence-free has max |div V| = {max_div:e} (max |V| = {max_abs:e})")]
    NotDivergenceFree { max_div: f64, max_abs: f64 },
    #[error("drift preset: {0}")]
    Preset(String),
    #[error("reading sampled drift {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum DriftPreset {
    Zero,
    /// Spatially constant vector.
    Constant {
        value: Vec<f64>,
    },
    /// `V = (rate * (x2 - L/2), 0, ...)`.
    Shear {
        rate: f64,
    },
    /// Cellular vortex with stream function
    /// `strength * (L/pi) * sin^2(pi x1/L) sin^2(pi x2/L)`; no normal flow
    /// through the boundary.
    Vortex {
        strength: f64,
    },
    /// `V = strength * (x - c)`, `c` defaults to the box centre.
    Radial {
        strength: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `V = strength * |x - c|^(-gamma) (x - c)/|x - c|`.
    ScaledSingular {
        strength: f64,
        gamma: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Face components from a file: little-endian `f64`, axis 0 faces first,
    /// each axis in the face layout of the grid.
    Sampled {
        path: PathBuf,
    },
}

impl DriftPreset {
    pub fn name(&self) -> &'static str {
        match self {
            DriftPreset::Zero => "zero",
            DriftPreset::Constant { .. } => "constant",
            DriftPreset::Shear { .. } => "shear",
            DriftPreset::Vortex { .. } => "vortex",
            DriftPreset::Radial { .. } => "radial",
            DriftPreset::ScaledSingular { .. } => "scaled-singular",
            DriftPreset::Sampled { .. } => "sampled",
        }
    }

    /// Whether the continuum field is divergence-free.
    pub fn is_divergence_free(&self) -> bool {
        matches!(
            self,
            DriftPreset::Zero | DriftPreset::Constant { .. } | DriftPreset::Shear { .. } | DriftPreset::Vortex { .. }
        )
    }

    /// Exponents for which the preset is bounded, `(inf, inf)` for the
    /// smooth ones.
    pub fn natural_exponents(&self) -> Option<ExponentPair> {
        match self {
            DriftPreset::ScaledSingular { .. } | DriftPreset::Sampled { .. } => None,
            _ => Some(ExponentPair { q1: Exponent::Infinite, q2: Exponent::Infinite }),
        }
    }
}

type AnalyticFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Source {
    Preset(DriftPreset),
    Analytic(Arc<AnalyticFn>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Preset(p) => p.fmt(f),
            Source::Analytic(_) => f.write_str("Analytic(..)"),
        }
    }
}

/// A drift field with its divergence-free flag and the exponent pair used
/// to classify it.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    source: Source,
    divergence_free: bool,
    exponents: Option<ExponentPair>,
}

impl DriftSpec {
    pub fn zero() -> Self {
        Self::preset(DriftPreset::Zero)
    }

    /// Preset with its natural divergence flag and exponents.
    pub fn preset(p: DriftPreset) -> Self {
        Self { divergence_free: p.is_divergence_free(), exponents: p.natural_exponents(), source: Source::Preset(p) }
    }

    /// A time-dependent field given pointwise; sampled at face centres.
    pub fn analytic<F>(f: F, divergence_free: bool) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self { source: Source::Analytic(Arc::new(f)), divergence_free, exponents: None }
    }

    pub fn with_divergence_free(mut self, flag: bool) -> Self {
        self.divergence_free = flag;
        self
    }

    pub fn with_exponents(mut self, e: Option<ExponentPair>) -> Self {
        if e.is_some() {
            self.exponents = e;
        }
        self
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn exponents(&self) -> Option<ExponentPair> {
        self.exponents
    }

    pub fn name(&self) -> &'static str {
        match &self.source {
            Source::Preset(p) => p.name(),
            Source::Analytic(_) => "analytic",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, Source::Preset(DriftPreset::Zero))
    }

    /// Samples static fields once and checks the divergence-free flag.
    pub fn prepare(&self, domain: &SpaceTimeDomain) -> Result<PreparedDrift, DriftError> {
        let prepared = match &self.source {
            Source::Preset(p) => PreparedDrift {
                field: Some(sample_preset(p, domain)?),
                analytic: None,
                domain: *domain,
                divergence_free: self.divergence_free,
            },
            Source::Analytic(f) => PreparedDrift {
                field: None,
                analytic: Some(f.clone()),
                domain: *domain,
                divergence_free: self.divergence_free,
            },
        };
        if let Some(f) = &prepared.field {
            prepared.check(f)?;
        }
        Ok(prepared)
    }
}

/// A drift bound to a grid.
#[derive(Clone)]
pub struct PreparedDrift {
    field: Option<FaceField>,
    analytic: Option<Arc<AnalyticFn>>,
    domain: SpaceTimeDomain,
    divergence_free: bool,
}

impl fmt::Debug for PreparedDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreparedDrift")
            .field("static", &self.field.is_some())
            .field("divergence_free", &self.divergence_free)
            .finish()
    }
}

impl PreparedDrift {
    pub fn from_faces(field: FaceField, divergence_free: bool) -> Result<Self, DriftError> {
        let p = Self { domain: *field.domain(), field: Some(field), analytic: None, divergence_free };
        p.check(p.field.as_ref().expect("static"))?;
        Ok(p)
    }

    fn check(&self, f: &FaceField) -> Result<(), DriftError> {
        if self.divergence_free && !f.is_divergence_free(DIVERGENCE_TOL) {
            return Err(DriftError::NotDivergenceFree { max_div: f.max_divergence(), max_abs: f.max_abs() });
        }
        Ok(())
    }

    pub fn is_time_dependent(&self) -> bool {
        self.field.is_none()
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn is_zero(&self) -> bool {
        self.field.as_ref().is_some_and(|f| f.is_zero())
    }

    /// Faces at time `t`; time-dependent fields are sampled and checked.
    pub fn at(&self, t: f64) -> Result<Cow<'_, FaceField>, DriftError> {
        if let Some(f) = &self.field {
            return Ok(Cow::Borrowed(f));
        }
        let g = self.analytic.as_ref().expect("analytic drift");
        let f = self.domain.sample_faces(|x, v| g(x, t, v));
        if f.comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DriftError::Preset(format!("non-finite drift sample at t = {t}")));
        }
        self.check(&f)?;
        Ok(Cow::Owned(f))
    }

    /// `||V||_{L^{q1,q2}}` from samples at `times` (left-endpoint weights).
    pub fn mixed_norm(&self, e: ExponentPair, times: &[f64]) -> Result<f64, DriftError> {
        let weights = left_endpoint_weights(times, self.domain.final_time())?;
        let mut inner = Vec::with_capacity(times.len());
        for &t in times {
            inner.push(slice_drift_lebesgue(&self.domain, self.at(t)?.as_ref(), e.q1));
        }
        Ok(combine_in_time(&inner, &weights, e.q2))
    }
}

/// Face field of `(d psi/dx2, -d psi/dx1, 0)` with `psi` evaluated at grid
/// nodes of the `(x1, x2)` plane; exactly divergence-free on the grid.
pub fn from_stream_function<F: Fn(f64, f64) -> f64>(domain: &SpaceTimeDomain, psi: F) -> FaceField {
    let n = domain.cells();
    let h = domain.h();
    let nodes: Vec<f64> =
        (0..=n).flat_map(|i| (0..=n).map(move |j| (i, j))).map(|(i, j)| psi(i as f64 * h, j as f64 * h)).collect();
    let node = |i: usize, j: usize| nodes[i * (n + 1) + j];
    let mut out = FaceField::zeros(*domain);
    let rest = n.pow(domain.dim() as u32 - 2);
    // axis 0 faces: (i in 0..=n, j in 0..n, rest)
    for i in 0..=n {
        for j in 0..n {
            let u = (node(i, j + 1) - node(i, j)) / h;
            for k in 0..rest {
                out.comps[0][(i * n + j) * rest + k] = u;
            }
        }
    }
    // axis 1 faces: (i in 0..n, j in 0..=n, rest)
    for i in 0..n {
        for j in 0..=n {
            let v = -(node(i + 1, j) - node(i, j)) / h;
            for k in 0..rest {
                out.comps[1][(i * (n + 1) + j) * rest + k] = v;
            }
        }
    }
    out
}

/// Cellular vortex stream function on `[0, L]^2`.
pub fn vortex_stream(strength: f64, l: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| {
        let (sx, sy) = ((std::f64::consts::PI * x / l).sin(), (std::f64::consts::PI * y / l).sin());
        strength * l / std::f64::consts::PI * sx * sx * sy * sy
    }
}

fn center_or_mid(center: &Option<Vec<f64>>, domain: &SpaceTimeDomain) -> Result<Vec<f64>, DriftError> {
    match center {
        Some(c) if c.len() == domain.dim() => Ok(c.clone()),
        Some(_) => Err(DriftError::Preset("center needs one entry per dimension".into())),
        None => Ok(vec![0.5 * domain.length(); domain.dim()]),
    }
}

fn sample_preset(p: &DriftPreset, domain: &SpaceTimeDomain) -> Result<FaceField, DriftError> {
    let d = domain.dim();
    let finite = |v: f64, what: &str| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(DriftError::Preset(format!("{what} must be finite")))
        }
    };
    let field = match p {
        DriftPreset::Zero => FaceField::zeros(*domain),
        DriftPreset::Constant { value } => {
            if value.len() != d {
                return Err(DriftError::Preset("constant drift needs one entry per dimension".into()));
            }
            for &v in value {
                finite(v, "constant drift")?;
            }
            domain.sample_faces(|_, out| out.copy_from_slice(value))
        }
        DriftPreset::Shear { rate } => {
            finite(*rate, "shear rate")?;
            let mid = 0.5 * domain.length();
            domain.sample_faces(|x, out| {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[0] = rate * (x[1] - mid);
            })
        }
        DriftPreset::Vortex { strength } => {
            finite(*strength, "vortex strength")?;
            from_stream_function(domain, vortex_stream(*strength, domain.length()))
        }
        DriftPreset::Radial { strength, center } => {
            finite(*strength, "radial strength")?;
            let c = center_or_mid(center, domain)?;
            domain.sample_faces(|x, out| {
                for a in 0..x.len() {
                    out[a] = strength * (x[a] - c[a]);
                }
            })
        }
        DriftPreset::ScaledSingular { strength, gamma, center } => {
            finite(*strength, "strength")?;
            if !(*gamma >= 0.0 && gamma.is_finite()) {
                return Err(DriftError::Preset("gamma must be >= 0".into()));
            }
            let c = center_or_mid(center, domain)?;
            let f = domain.sample_faces(|x, out| {
                let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                let r = r2.sqrt();
                let amp = strength * r.powf(-gamma - 1.0);
                for a in 0..x.len() {
                    out[a] = amp * (x[a] - c[a]);
                }
            });
            if f.comps.iter().flatten().any(|v| !v.is_finite()) {
                return Err(DriftError::Preset("singular drift centre sits on a face centre".into()));
            }
            f
        }
        DriftPreset::Sampled { path } => {
            let file = File::open(path).map_err(|source| DriftError::Io { path: path.clone(), source })?;
            let mut r = BufReader::new(file);
            let mut comps = Vec::with_capacity(d);
            for a in 0..d {
                comps.push(
                    read_f64_le(domain.face_count(a), &mut r)
                        .map_err(|source| DriftError::Io { path: path.clone(), source })?,
                );
            }
            FaceField::from_components(*domain, comps)?
        }
    };
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::io::write_f64_le;

    fn dom(d: usize, n: usize) -> SpaceTimeDomain {
        SpaceTimeDomain::new(d, 1.0, 1.0, n, Boundary::DirichletZero).unwrap()
    }

    #[test]
    fn divergence_free_presets_pass_the_check() {
        for d in [2, 3] {
            let domain = dom(d, 12);
            for p in [
                DriftPreset::Zero,
                DriftPreset::Constant { value: vec![0.3; d] },
                DriftPreset::Shear { rate: 2.0 },
                DriftPreset::Vortex { strength: 5.0 },
            ] {
                let spec = DriftSpec::preset(p.clone());
                assert!(spec.divergence_free(), "{p:?}");
                let prepared = spec.prepare(&domain).unwrap();
                let f = prepared.at(0.0).unwrap();
                assert!(f.max_divergence() <= DIVERGENCE_TOL * f.max_abs().max(1.0), "{p:?}");
            }
        }
    }

    #[test]
    fn vortex_has_no_boundary_flux() {
        let domain = dom(2, 16);
        let f = from_stream_function(&domain, vortex_stream(3.0, 1.0));
        assert!(domain.boundary_flux(&f).abs() < 1e-14);
        assert!(f.max_abs() > 0.5);
    }

    #[test]
    fn radial_flagged_divergence_free_is_rejected() {
        let domain = dom(2, 8);
        let spec = DriftSpec::preset(DriftPreset::Radial { strength: 1.0, center: None }).with_divergence_free(true);
        assert!(matches!(spec.prepare(&domain), Err(DriftError::NotDivergenceFree { .. })));
        assert!(!DriftSpec::preset(DriftPreset::Radial { strength: 1.0, center: None }).divergence_free());
    }

    #[test]
    fn singular_profile_magnitude() {
        let domain = dom(2, 8);
        let spec = DriftSpec::preset(DriftPreset::ScaledSingular { strength: 2.0, gamma: 0.5, center: None });
        let f = spec.prepare(&domain).unwrap().at(0.0).unwrap().into_owned();
        let fidx = 3 * 8 + 3; // axis 0 face at (0.375, 0.4375)
        let x = domain.face_center(0, fidx);
        let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
        let r = (dx * dx + dy * dy).sqrt();
        assert!((f.comps[0][fidx] - 2.0 * r.powf(-1.5) * dx).abs() < 1e-12);
    }

    #[test]
    fn sampled_roundtrip() {
        let domain = dom(2, 6);
        let src = DriftSpec::preset(DriftPreset::Vortex { strength: 1.0 })
            .prepare(&domain)
            .unwrap()
            .at(0.0)
            .unwrap()
            .into_owned();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let mut buf = Vec::new();
        for c in &src.comps {
            write_f64_le(c, &mut buf).unwrap();
        }
        std::fs::write(&path, buf).unwrap();
        let spec = DriftSpec::preset(DriftPreset::Sampled { path }).with_divergence_free(true);
        let f = spec.prepare(&domain).unwrap();
        assert_eq!(*f.at(0.0).unwrap(), src);
    }

    #[test]
    fn constant_drift_norms() {
        let domain = dom(2, 8);
        let p = DriftSpec::preset(DriftPreset::Constant { value: vec![3.0, 4.0] }).prepare(&domain).unwrap();
        let e = ExponentPair::finite(2.0, 3.0).unwrap();
        assert!((p.mixed_norm(e, &[0.0]).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_drift_is_sampled_per_time() {
        let domain = dom(2, 8);
        let spec = DriftSpec::analytic(
            |_, t, out| {
                out[0] = t;
                out[1] = 0.0;
            },
            true,
        );
        let p = spec.prepare(&domain).unwrap();
        assert!(p.is_time_dependent());
        assert_eq!(p.at(0.5).unwrap().max_abs(), 0.5);
    }
}
