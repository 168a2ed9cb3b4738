//! Forcing measures and their bounded approximations.
//!
//! A measure is a finite sum of space-time atoms, an optional absolutely
//! continuous part given by a preset, and optional atoms at `t = 0` that form
//! the initial datum. `mollify` turns it into a bounded forcing whose
//! discrete mass equals the measure's mass exactly: every piece is stored as
//! `mass * (spatial weights) * (temporal profile)` with the spatial weights
//! normalized on the grid and the temporal profile normalized on `[0, T]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, ScalarField, SpaceTimeDomain};
use crate::sum::CompensatedSum;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("atom {index}: {reason}")]
    Atom { index: usize, reason: String },
    #[error("density preset: {0}")]
    Density(String),
    #[error("mollification level must be >= 1")]
    Level,
    #[error(
        "atom {index} keeps only {fraction:.3} of its mollified mass inside the domain; move it inward or raise n"
    )]
    Clipped { index: usize, fraction: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub t: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialAtom {
    pub x: Vec<f64>,
    pub mass: f64,
}

/// Absolutely continuous forcing, constant in time on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum DensityPreset {
    /// `value` on all of the domain.
    Uniform { value: f64, t0: f64, t1: f64 },
    /// `value` on the box `[lo, hi]` (clipped to the domain).
    Box { lo: Vec<f64>, hi: Vec<f64>, value: f64, t0: f64, t1: f64 },
}

impl DensityPreset {
    fn window(&self) -> (f64, f64) {
        match self {
            DensityPreset::Uniform { t0, t1, .. } | DensityPreset::Box { t0, t1, .. } => (*t0, *t1),
        }
    }

    fn value(&self) -> f64 {
        match self {
            DensityPreset::Uniform { value, .. } | DensityPreset::Box { value, .. } => *value,
        }
    }

    /// Spatial box `[lo, hi]` intersected with the domain.
    fn spatial_box(&self, domain: &SpaceTimeDomain) -> (Vec<f64>, Vec<f64>) {
        let l = domain.length();
        match self {
            DensityPreset::Uniform { .. } => (vec![0.0; domain.dim()], vec![l; domain.dim()]),
            DensityPreset::Box { lo, hi, .. } => {
                (lo.iter().map(|v| v.clamp(0.0, l)).collect(), hi.iter().map(|v| v.clamp(0.0, l)).collect())
            }
        }
    }

    fn spatial_volume(&self, domain: &SpaceTimeDomain) -> f64 {
        let (lo, hi) = self.spatial_box(domain);
        lo.iter().zip(&hi).map(|(a, b)| (b - a).max(0.0)).product()
    }

    /// Exact `∫∫` of the density over the domain cylinder.
    pub fn mass(&self, domain: &SpaceTimeDomain) -> f64 {
        let (t0, t1) = self.window();
        let (t0, t1) = (t0.max(0.0), t1.min(domain.final_time()));
        self.value() * self.spatial_volume(domain) * (t1 - t0).max(0.0)
    }

    /// Pointwise value.
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let (t0, t1) = self.window();
        if t < t0 || t > t1 {
            return 0.0;
        }
        match self {
            DensityPreset::Uniform { value, .. } => *value,
            DensityPreset::Box { lo, hi, value, .. } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b);
                if inside {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, domain: &SpaceTimeDomain) -> Result<(), MeasureError> {
        let (t0, t1) = self.window();
        let bad = |s: &str| Err(MeasureError::Density(s.to_string()));
        if !(self.value().is_finite() && self.value() >= 0.0) {
            return bad("value must be finite and >= 0");
        }
        if !(t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 < t1 && t1 <= domain.final_time()) {
            return bad("time window must satisfy 0 <= t0 < t1 <= T");
        }
        if let DensityPreset::Box { lo, hi, .. } = self {
            if lo.len() != domain.dim() || hi.len() != domain.dim() {
                return bad("box corners must have one entry per dimension");
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return bad("box needs lo < hi on every axis");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub density: Option<DensityPreset>,
    #[serde(default)]
    pub initial_atoms: Vec<InitialAtom>,
}

impl MeasureSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self, domain: &SpaceTimeDomain) -> Result<(), MeasureError> {
        let inside = |x: &[f64]| x.len() == domain.dim() && x.iter().all(|&v| 0.0 < v && v < domain.length());
        for (index, a) in self.atoms.iter().enumerate() {
            let err = |reason: &str| MeasureError::Atom { index, reason: reason.into() };
            if !inside(&a.x) {
                return Err(err("location must be strictly inside the box"));
            }
            if !(0.0 < a.t && a.t < domain.final_time()) {
                return Err(err("time must lie in (0, T)"));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(err("mass must be positive"));
            }
        }
        for (i, a) in self.initial_atoms.iter().enumerate() {
            let index = self.atoms.len() + i;
            let err = |reason: &str| MeasureError::Atom { index, reason: reason.into() };
            if !inside(&a.x) {
                return Err(err("location must be strictly inside the box"));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(err("mass must be positive"));
            }
        }
        if let Some(dp) = &self.density {
            dp.validate(domain)?;
        }
        Ok(())
    }

    /// `μ(Ω_T)`, plus `μ0(Ω)` when `include_initial` is set.
    pub fn total_mass(&self, domain: &SpaceTimeDomain, include_initial: bool) -> f64 {
        let mut acc = CompensatedSum::default();
        for a in &self.atoms {
            acc.add(a.mass);
        }
        if let Some(dp) = &self.density {
            acc.add(dp.mass(domain));
        }
        if include_initial {
            for a in &self.initial_atoms {
                acc.add(a.mass);
            }
        }
        acc.value()
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial_atoms.iter().map(|a| a.mass).sum()
    }

    /// `μ(Q)` for the closed cylinder `Q = [lo, hi] x [t0, t1]`.
    pub fn closed_cylinder_mass(&self, domain: &SpaceTimeDomain, q: &Cylinder) -> f64 {
        let mut acc = CompensatedSum::default();
        for a in &self.atoms {
            if q.contains(&a.x, a.t) {
                acc.add(a.mass);
            }
        }
        if let Some(dp) = &self.density {
            let (blo, bhi) = dp.spatial_box(domain);
            let vol: f64 = (0..domain.dim()).map(|k| (bhi[k].min(q.hi[k]) - blo[k].max(q.lo[k])).max(0.0)).product();
            let (w0, w1) = dp.window();
            let dt = (w1.min(q.t1).min(domain.final_time()) - w0.max(q.t0).max(0.0)).max(0.0);
            acc.add(dp.value() * vol * dt);
        }
        acc.value()
    }
}

/// Space-time box `[lo, hi] x [t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
}

impl Cylinder {
    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        self.t0 <= t
            && t <= self.t1
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Fraction of cell `c` covered by the spatial box.
    fn cell_overlap(&self, domain: &SpaceTimeDomain, c: usize) -> f64 {
        let h = domain.h();
        let multi = domain.cell_multi_index(c);
        (0..domain.dim())
            .map(|a| {
                let c0 = multi[a] as f64 * h;
                ((c0 + h).min(self.hi[a]) - c0.max(self.lo[a])).max(0.0) / h
            })
            .product()
    }
}

/// `(1 - s^2)^2` on `|s| < 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        w * w
    }
}

/// `∫_{-1}^{s} (1 - u^2)^2 du`, total `16/15`.
fn bump_cdf(s: f64) -> f64 {
    let s = s.clamp(-1.0, 1.0);
    s - 2.0 * s.powi(3) / 3.0 + s.powi(5) / 5.0 + 8.0 / 15.0
}

/// Time profile of one forcing piece, a probability density on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    /// Uniform on `[t0, t1]`.
    Window { t0: f64, t1: f64 },
    /// Bump of radius `radius` around `center`, renormalized on `[0, t_end]`.
    Bump { center: f64, radius: f64, t_end: f64, norm: f64 },
}

impl TimeProfile {
    fn bump(center: f64, radius: f64, t_end: f64) -> (Self, f64) {
        let lo = bump_cdf(-center / radius);
        let hi = bump_cdf((t_end - center) / radius);
        let norm = radius * (hi - lo);
        let retained = (hi - lo) / (16.0 / 15.0);
        (TimeProfile::Bump { center, radius, t_end, norm }, retained)
    }

    /// Cumulative distribution on `[0, T]`.
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Window { t0, t1 } => ((t - t0) / (t1 - t0)).clamp(0.0, 1.0),
            TimeProfile::Bump { center, radius, t_end, norm } => {
                let t = t.clamp(0.0, t_end);
                radius * (bump_cdf((t - center) / radius) - bump_cdf(-center / radius)) / norm
            }
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Window { t0, t1 } => {
                if (t0..=t1).contains(&t) {
                    1.0 / (t1 - t0)
                } else {
                    0.0
                }
            }
            TimeProfile::Bump { center, radius, t_end, norm } => {
                if (0.0..=t_end).contains(&t) {
                    bump((t - center) / radius) / norm
                } else {
                    0.0
                }
            }
        }
    }

    /// Interval outside of which the density vanishes.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            TimeProfile::Window { t0, t1 } => (t0, t1),
            TimeProfile::Bump { center, radius, t_end, .. } => {
                ((center - radius).max(0.0), (center + radius).min(t_end))
            }
        }
    }
}

/// One separable piece `mass * w(x) * g(t)` with `h^d * sum w = 1` and
/// `∫ g = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub mass: f64,
    pub cells: Vec<(usize, f64)>,
    pub time: TimeProfile,
}

/// Bounded approximation `μ_n` of a measure at level `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedForcing {
    domain: SpaceTimeDomain,
    level: usize,
    delta_x: f64,
    delta_t: f64,
    sources: Vec<Source>,
    initial: Vec<f64>,
    total_mass: f64,
}

/// Spatial weights of a bump of radius `delta` centred at `x0`, normalized to
/// unit discrete mass, plus the fraction that fell inside the domain.
fn spatial_bump(domain: &SpaceTimeDomain, x0: &[f64], delta: f64) -> (Vec<(usize, f64)>, f64) {
    let d = domain.dim();
    let h = domain.h();
    let n = domain.cells() as i64;
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for a in 0..d {
        lo[a] = ((x0[a] - delta) / h).floor() as i64 - 1;
        hi[a] = ((x0[a] + delta) / h).ceil() as i64 + 1;
    }
    let mut cells = Vec::new();
    let mut inside = CompensatedSum::default();
    let mut all = CompensatedSum::default();
    let mut idx = lo;
    loop {
        let mut r2 = 0.0;
        for a in 0..d {
            let c = (idx[a] as f64 + 0.5) * h - x0[a];
            r2 += c * c;
        }
        let w = bump(r2.sqrt() / delta);
        if w > 0.0 {
            all.add(w);
            if (0..d).all(|a| (0..n).contains(&idx[a])) {
                inside.add(w);
                let multi: Vec<usize> = idx[..d].iter().map(|&i| i as usize).collect();
                cells.push((domain.cell_index(&multi), w));
            }
        }
        // odometer over the index box, last axis fastest
        let mut a = d;
        loop {
            if a == 0 {
                let fraction = if all.value() > 0.0 { inside.value() / all.value() } else { 0.0 };
                let total = inside.value();
                let scale = if total > 0.0 { 1.0 / (total * domain.cell_volume()) } else { 0.0 };
                for c in &mut cells {
                    c.1 *= scale;
                }
                cells.sort_by_key(|c| c.0);
                return (cells, fraction);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] <= hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}

/// Cell weights of a box density, unit discrete mass.
fn box_weights(domain: &SpaceTimeDomain, lo: &[f64], hi: &[f64]) -> Vec<(usize, f64)> {
    let q = Cylinder { lo: lo.to_vec(), hi: hi.to_vec(), t0: 0.0, t1: 0.0 };
    let mut cells: Vec<(usize, f64)> =
        (0..domain.cell_count()).map(|c| (c, q.cell_overlap(domain, c))).filter(|c| c.1 > 0.0).collect();
    let total: CompensatedSum = cells.iter().map(|c| c.1).collect();
    let scale = 1.0 / (total.value() * domain.cell_volume());
    for c in &mut cells {
        c.1 *= scale;
    }
    cells
}

/// Mollification radius `max(2h, D/n)` with `D` the box side (space) or the
/// final time.
pub fn mollifier_radius(domain: &SpaceTimeDomain, n: usize) -> (f64, f64) {
    let dx = (2.0 * domain.h()).max(domain.length() / n as f64);
    let dt = domain.final_time() / n as f64;
    (dx, dt)
}

pub fn mollify(spec: &MeasureSpec, n: usize, domain: &SpaceTimeDomain) -> Result<MollifiedForcing, MeasureError> {
    if n == 0 {
        return Err(MeasureError::Level);
    }
    spec.validate(domain)?;
    let (delta_x, delta_t) = mollifier_radius(domain, n);
    let mut sources = Vec::new();
    for (index, a) in spec.atoms.iter().enumerate() {
        let (cells, fx) = spatial_bump(domain, &a.x, delta_x);
        let (time, ft) = TimeProfile::bump(a.t, delta_t, domain.final_time());
        for fraction in [fx, ft] {
            if fraction < 0.5 {
                return Err(MeasureError::Clipped { index, fraction });
            }
        }
        sources.push(Source { mass: a.mass, cells, time });
    }
    if let Some(dp) = &spec.density {
        let mass = dp.mass(domain);
        if mass > 0.0 {
            let (lo, hi) = dp.spatial_box(domain);
            let (t0, t1) = dp.window();
            sources.push(Source { mass, cells: box_weights(domain, &lo, &hi), time: TimeProfile::Window { t0, t1 } });
        }
    }
    let mut initial = vec![0.0; domain.cell_count()];
    for (i, a) in spec.initial_atoms.iter().enumerate() {
        let (cells, fx) = spatial_bump(domain, &a.x, delta_x);
        if fx < 0.5 {
            return Err(MeasureError::Clipped { index: spec.atoms.len() + i, fraction: fx });
        }
        for (c, w) in cells {
            initial[c] += a.mass * w;
        }
    }
    Ok(MollifiedForcing {
        domain: *domain,
        level: n,
        delta_x,
        delta_t,
        sources,
        initial,
        total_mass: spec.total_mass(domain, false),
    })
}

impl MollifiedForcing {
    /// No forcing and zero initial data.
    pub fn zero(domain: &SpaceTimeDomain) -> Self {
        Self {
            domain: *domain,
            level: 1,
            delta_x: 0.0,
            delta_t: 0.0,
            sources: Vec::new(),
            initial: vec![0.0; domain.cell_count()],
            total_mass: 0.0,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn width(&self) -> (f64, f64) {
        (self.delta_x, self.delta_t)
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn domain(&self) -> &SpaceTimeDomain {
        &self.domain
    }

    /// Initial state obtained from the initial atoms, mollified in space.
    pub fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_zero(&self) -> bool {
        self.sources.is_empty()
    }

    /// `μ(Ω_T)` of the measure that was mollified.
    pub fn exact_mass(&self) -> f64 {
        self.total_mass
    }

    /// Mass delivered during `[t0, t1]`.
    pub fn mass_between(&self, t0: f64, t1: f64) -> f64 {
        let acc: CompensatedSum = self.sources.iter().map(|s| s.mass * (s.time.cdf(t1) - s.time.cdf(t0))).collect();
        acc.value()
    }

    /// Time average of `μ_n` over `[t0, t1]`, written into `out`. Returns
    /// `false` when nothing is active in the window.
    pub fn average_into(&self, t0: f64, t1: f64, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        let dt = t1 - t0;
        let mut any = false;
        for s in &self.sources {
            let frac = s.time.cdf(t1) - s.time.cdf(t0);
            if frac <= 0.0 {
                continue;
            }
            any = true;
            let amp = s.mass * frac / dt;
            for &(c, w) in &s.cells {
                out[c] += amp * w;
            }
        }
        any
    }

    /// Pointwise density at time `t`.
    pub fn slice_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.cell_count()];
        for s in &self.sources {
            let g = s.time.density(t);
            if g > 0.0 {
                for &(c, w) in &s.cells {
                    out[c] += s.mass * g * w;
                }
            }
        }
        out
    }

    /// Samples at the given times as a density field.
    pub fn field(&self, times: Vec<f64>) -> Result<ScalarField, GridError> {
        let slices = times.iter().map(|&t| self.slice_at(t)).collect();
        ScalarField::new(self.domain, times, slices)?.into_density()
    }

    /// `∫∫ μ_n` over the domain cylinder.
    pub fn total(&self) -> f64 {
        self.mass_between(0.0, self.domain.final_time())
    }

    pub fn max_density(&self) -> f64 {
        let mut best = 0.0_f64;
        for s in &self.sources {
            let gmax = match s.time {
                TimeProfile::Window { t0, t1 } => 1.0 / (t1 - t0),
                TimeProfile::Bump { norm, .. } => 1.0 / norm,
            };
            let wmax = s.cells.iter().fold(0.0_f64, |m, c| m.max(c.1));
            best += s.mass * gmax * wmax;
        }
        best
    }

    /// `μ_n(Q ∩ Ω_T)`.
    pub fn cylinder_mass(&self, q: &Cylinder) -> f64 {
        let mut acc = CompensatedSum::default();
        for s in &self.sources {
            let ft = s.time.cdf(q.t1) - s.time.cdf(q.t0);
            if ft <= 0.0 {
                continue;
            }
            let fx: CompensatedSum = s.cells.iter().map(|&(c, w)| w * q.cell_overlap(&self.domain, c)).collect();
            acc.add(s.mass * ft * fx.value() * self.domain.cell_volume());
        }
        acc.value()
    }

    /// `∫∫ μ_n φ` with cell-centre quadrature in space and Gauss-Legendre in
    /// time over each piece's support.
    pub fn pair_with<F: Fn(&[f64], f64) -> f64>(&self, phi: F) -> f64 {
        let d = self.domain.dim();
        let mut acc = CompensatedSum::default();
        for s in &self.sources {
            let (a, b) = s.time.support();
            if b <= a {
                continue;
            }
            let panels = 8;
            let width = (b - a) / panels as f64;
            for (c, w) in &s.cells {
                let x = self.domain.cell_center(*c);
                let mut inner = CompensatedSum::default();
                for p in 0..panels {
                    let lo = a + p as f64 * width;
                    for (node, weight) in GAUSS_8 {
                        let t = lo + 0.5 * width * (node + 1.0);
                        inner.add(0.5 * width * weight * s.time.density(t) * phi(&x[..d], t));
                    }
                }
                acc.add(s.mass * w * inner.value());
            }
        }
        acc.value() * self.domain.cell_volume()
    }
}

const GAUSS_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887),
    (-0.183_434_642_495_65, 0.362_683_783_378_362),
    (0.183_434_642_495_65, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> SpaceTimeDomain {
        SpaceTimeDomain::new(2, 1.0, 1.0, n, Boundary::DirichletZero).unwrap()
    }

    fn atom(x: f64, y: f64, t: f64, mass: f64) -> Atom {
        Atom { x: vec![x, y], t, mass }
    }

    #[test]
    fn total_mass_examples() {
        let d = unit(16);
        let one = MeasureSpec { atoms: vec![atom(0.5, 0.5, 0.5, 1.0)], ..Default::default() };
        assert_eq!(one.total_mass(&d, false), 1.0);
        assert_eq!(MeasureSpec::empty().total_mass(&d, true), 0.0);
        let mixed = MeasureSpec {
            atoms: vec![atom(0.5, 0.5, 0.5, 0.5)],
            density: Some(DensityPreset::Uniform { value: 2.0, t0: 0.0, t1: 1.0 }),
            ..Default::default()
        };
        assert_relative_eq!(mixed.total_mass(&d, false), 2.5, max_relative = 1e-15);
        let with_init =
            MeasureSpec { initial_atoms: vec![InitialAtom { x: vec![0.5, 0.5], mass: 0.5 }], ..mixed.clone() };
        assert_relative_eq!(with_init.total_mass(&d, true), 3.0);
        assert_relative_eq!(with_init.total_mass(&d, false), 2.5);
    }

    #[test]
    fn validation() {
        let d = unit(16);
        let bad = MeasureSpec { atoms: vec![atom(0.0, 0.5, 0.5, 1.0)], ..Default::default() };
        assert!(bad.validate(&d).is_err());
        let bad = MeasureSpec { atoms: vec![atom(0.5, 0.5, 1.0, 1.0)], ..Default::default() };
        assert!(bad.validate(&d).is_err());
        let bad = MeasureSpec { atoms: vec![atom(0.5, 0.5, 0.5, -1.0)], ..Default::default() };
        assert!(bad.validate(&d).is_err());
        assert_eq!(mollify(&MeasureSpec::empty(), 0, &d), Err(MeasureError::Level));
    }

    #[test]
    fn density_only_is_sampled_density() {
        let d = unit(16);
        let spec = MeasureSpec {
            density: Some(DensityPreset::Uniform { value: 2.0, t0: 0.0, t1: 1.0 }),
            ..Default::default()
        };
        let f = mollify(&spec, 3, &d).unwrap();
        assert!(f.slice_at(0.4).iter().all(|&v| (v - 2.0).abs() < 1e-12));
        assert_relative_eq!(f.total(), 2.0, max_relative = 1e-13);
    }

    #[test]
    fn box_density_mass_is_exact_for_unaligned_boxes() {
        let d = unit(10);
        let spec = MeasureSpec {
            density: Some(DensityPreset::Box {
                lo: vec![0.23, 0.41],
                hi: vec![0.67, 0.9],
                value: 3.0,
                t0: 0.1,
                t1: 0.6,
            }),
            ..Default::default()
        };
        let exact = 3.0 * 0.44 * 0.49 * 0.5;
        assert_relative_eq!(spec.total_mass(&d, false), exact, max_relative = 1e-13);
        let f = mollify(&spec, 1, &d).unwrap();
        assert_relative_eq!(f.total(), exact, max_relative = 1e-12);
        let mut buf = vec![0.0; 100];
        f.average_into(0.0, 1.0, &mut buf);
        assert_relative_eq!(d.integrate(&buf), exact, max_relative = 1e-12);
    }

    #[test]
    fn clipped_atoms_are_rejected() {
        let d = unit(64);
        let spec = MeasureSpec { atoms: vec![atom(0.01, 0.01, 0.5, 1.0)], ..Default::default() };
        assert!(matches!(mollify(&spec, 8, &d), Err(MeasureError::Clipped { .. })));
        let spec = MeasureSpec { atoms: vec![atom(0.5, 0.5, 0.5, 1.0)], ..Default::default() };
        assert!(mollify(&spec, 8, &d).is_ok());
    }

    #[test]
    fn atom_support_inside_cylinder() {
        let d = unit(64);
        let spec = MeasureSpec { atoms: vec![atom(0.5, 0.5, 0.5, 0.7)], ..Default::default() };
        let q = Cylinder { lo: vec![0.3, 0.3], hi: vec![0.7, 0.7], t0: 0.3, t1: 0.7 };
        for n in [8, 16, 32] {
            let f = mollify(&spec, n, &d).unwrap();
            assert_relative_eq!(f.cylinder_mass(&q), 0.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn disjoint_and_covering_cylinders() {
        let d = unit(32);
        let spec = MeasureSpec { atoms: vec![atom(0.3, 0.6, 0.4, 1.3)], ..Default::default() };
        let f = mollify(&spec, 4, &d).unwrap();
        let far = Cylinder { lo: vec![0.9, 0.0], hi: vec![1.0, 0.1], t0: 0.0, t1: 1.0 };
        assert_eq!(f.cylinder_mass(&far), 0.0);
        let all = Cylinder { lo: vec![-1.0, -1.0], hi: vec![2.0, 2.0], t0: -1.0, t1: 2.0 };
        assert_relative_eq!(f.cylinder_mass(&all), 1.3, max_relative = 1e-12);
    }

    #[test]
    fn initial_atoms_become_initial_state() {
        let d = unit(32);
        let spec =
            MeasureSpec { initial_atoms: vec![InitialAtom { x: vec![0.5, 0.5], mass: 0.5 }], ..Default::default() };
        let f = mollify(&spec, 8, &d).unwrap();
        assert_relative_eq!(d.integrate(f.initial_state()), 0.5, max_relative = 1e-13);
        assert_eq!(f.total(), 0.0);
    }

    #[test]
    fn time_profile_cdf_is_normalized() {
        let (p, frac) = TimeProfile::bump(0.05, 0.3, 1.0);
        assert!(frac > 0.5 && frac < 1.0);
        assert_eq!(p.cdf(0.0), 0.0);
        assert_relative_eq!(p.cdf(1.0), 1.0, max_relative = 1e-14);
        // density integrates to one
        let n = 20000;
        let s: f64 = (0..n).map(|k| p.density((k as f64 + 0.5) / n as f64) / n as f64).sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn mollified_mass_is_exact(
            x in 0.3..0.7f64, y in 0.3..0.7f64, t in 0.2..0.8f64,
            mass in 0.01..10.0f64, n in 1usize..40, cells in 8usize..48,
        ) {
            let d = unit(cells);
            let spec = MeasureSpec {
                atoms: vec![atom(x, y, t, mass)],
                density: Some(DensityPreset::Uniform { value: 0.5, t0: 0.1, t1: 0.9 }),
                ..Default::default()
            };
            let f = mollify(&spec, n, &d).unwrap();
            let exact = spec.total_mass(&d, false);
            prop_assert!((f.total() - exact).abs() <= 1e-12 * exact);
            let q = Cylinder { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0], t0: 0.0, t1: 1.0 };
            prop_assert!((f.cylinder_mass(&q) - exact).abs() <= 1e-12 * exact);
        }
    }
}
