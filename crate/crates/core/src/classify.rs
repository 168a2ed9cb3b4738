//! Scaling classes of drift exponents and the admissibility regions of the
//! existence results.
//!
//! A pair `(q1, q2)` is placed against two levels of the scaling sum
//! `d/q1 + (2 + d(m-1))/q2`: the plain level `1 + d(m-1)` and, for
//! divergence-free drifts, the sigma level `2 + d(m-1)`. All comparisons are
//! done on reciprocals so `q = inf` is just `1/q = 0`.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::norms::{Exponent, ExponentPair};

/// Relative tolerance for "on the line" and for the special exponent pairs.
pub const LINE_TOL: f64 = 1e-12;
/// Relative distance to a region edge below which a point is flagged.
pub const NEAR_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("m = {m} is outside every class for d = {d} (need 2 + d(m-1) > 0)")]
    OutOfRange { m: f64, d: usize },
    #[error("reciprocal exponents must be finite and >= 0, got ({0}, {1})")]
    Reciprocal(f64, f64),
    #[error("rescaling factor must be positive, got {0}")]
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub m: f64,
    pub d: usize,
}

impl DiffusionParams {
    pub fn new(m: f64, d: usize) -> Result<Self, ClassifyError> {
        if d < 2 {
            return Err(ClassifyError::Dimension(d));
        }
        let p = Self { m, d };
        if !(m > 0.0 && p.sigma_level() > 0.0) {
            return Err(ClassifyError::OutOfRange { m, d });
        }
        Ok(p)
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    /// `1 + d(m-1)`.
    pub fn plain_level(&self) -> f64 {
        1.0 + self.df() * (self.m - 1.0)
    }

    /// `2 + d(m-1)`.
    pub fn sigma_level(&self) -> f64 {
        2.0 + self.df() * (self.m - 1.0)
    }

    /// `m > 1 - 1/d`.
    pub fn plain_valid(&self) -> bool {
        self.plain_level() > 0.0
    }
}

/// `(1/q1, 1/q2)`, the coordinates used by the region pictures. Values above
/// 1 are allowed here so sweeps can cover `[0, 1.5]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reciprocals {
    pub inv_q1: f64,
    pub inv_q2: f64,
}

impl Reciprocals {
    pub fn new(inv_q1: f64, inv_q2: f64) -> Result<Self, ClassifyError> {
        if !(inv_q1.is_finite() && inv_q2.is_finite() && inv_q1 >= 0.0 && inv_q2 >= 0.0) {
            return Err(ClassifyError::Reciprocal(inv_q1, inv_q2));
        }
        Ok(Self { inv_q1, inv_q2 })
    }
}

impl From<ExponentPair> for Reciprocals {
    fn from(e: ExponentPair) -> Self {
        Self { inv_q1: e.q1.reciprocal(), inv_q2: e.q2.reciprocal() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    OnLine,
    Subclass,
    Supercritical,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Admissibility {
    #[serde(rename = "PME_admissible")]
    Pme,
    #[serde(rename = "FDE_admissible")]
    Fde,
    #[serde(rename = "DivFree_PME_admissible")]
    DivFreePme,
    #[serde(rename = "DivFree_FDE_admissible")]
    DivFreeFde,
    #[serde(rename = "Compactness_admissible")]
    Compactness,
}

impl Admissibility {
    pub fn label(self) -> &'static str {
        match self {
            Admissibility::Pme => "PME_admissible",
            Admissibility::Fde => "FDE_admissible",
            Admissibility::DivFreePme => "DivFree_PME_admissible",
            Admissibility::DivFreeFde => "DivFree_FDE_admissible",
            Admissibility::Compactness => "Compactness_admissible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub m: f64,
    pub d: usize,
    pub inv_q1: f64,
    pub inv_q2: f64,
    pub divergence_free: bool,
    pub scaling_sum: f64,
    pub plain: Level,
    pub sigma: Level,
    /// Empty means none of the regions applies.
    pub theorems: BTreeSet<Admissibility>,
    pub within_tolerance_of_boundary: bool,
}

impl ClassVerdict {
    pub fn admits(&self, a: Admissibility) -> bool {
        self.theorems.contains(&a)
    }

    pub fn theorem_labels(&self) -> Vec<&'static str> {
        if self.theorems.is_empty() {
            vec!["None"]
        } else {
            self.theorems.iter().map(|a| a.label()).collect()
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// `d/q1 + (2 + d(m-1))/q2`.
pub fn scaling_sum(p: &DiffusionParams, r: Reciprocals) -> f64 {
    p.df() * r.inv_q1 + p.sigma_level() * r.inv_q2
}

fn level_of(sum: f64, level: f64) -> Level {
    if (sum - level).abs() <= LINE_TOL * (1.0 + sum.abs()) {
        Level::OnLine
    } else if sum < level {
        Level::Subclass
    } else {
        Level::Supercritical
    }
}

/// Tracks whether any edge comparison was within the near-boundary tolerance.
#[derive(Default)]
struct Edges {
    near: bool,
}

impl Edges {
    fn lt(&mut self, a: f64, b: f64) -> bool {
        self.near |= close(a, b, NEAR_BOUNDARY_TOL);
        a < b
    }

    fn le(&mut self, a: f64, b: f64) -> bool {
        self.near |= close(a, b, NEAR_BOUNDARY_TOL);
        a <= b
    }
}

pub fn classify(p: &DiffusionParams, r: Reciprocals, divergence_free: bool) -> ClassVerdict {
    let sum = scaling_sum(p, r);
    let plain = if p.plain_valid() { level_of(sum, p.plain_level()) } else { Level::NotApplicable };
    let sigma = if divergence_free { level_of(sum, p.sigma_level()) } else { Level::NotApplicable };
    let mut edges = Edges::default();
    let mut theorems = BTreeSet::new();
    let (m, d) = (p.m, p.df());
    let (x, y) = (r.inv_q1, r.inv_q2);
    edges.lt(sum, p.plain_level());
    edges.lt(sum, p.sigma_level());

    if (1.0..=2.0).contains(&m) {
        let general =
            (plain == Level::Subclass) & edges.lt(x, ((2.0 - m) + d * (m - 1.0)) / (m * d)) & edges.le(y, 0.5);
        let on_line = plain == Level::OnLine && close(x, 0.5 * (m - 1.0), LINE_TOL) && close(y, 0.5, LINE_TOL);
        if general || on_line {
            theorems.insert(Admissibility::Pme);
        }
    }
    if p.plain_valid() && m < 1.0 {
        let a = p.plain_level();
        let ok = (plain == Level::Subclass) & edges.lt(x, a / d) & edges.lt(y, a / p.sigma_level());
        if ok {
            theorems.insert(Admissibility::Fde);
        }
    }
    if divergence_free {
        let b = p.sigma_level();
        let endpoint = sigma == Level::OnLine && x == 0.0 && close(y, 1.0, LINE_TOL);
        if m >= 1.0 {
            let ok = (sigma == Level::Subclass) & edges.lt(x, b / (m * d)) & edges.lt(y, 1.0);
            if ok || endpoint {
                theorems.insert(Admissibility::DivFreePme);
            }
        } else {
            let ok = (sigma == Level::Subclass) & edges.lt(x, b / d) & edges.lt(y, 1.0);
            if ok || endpoint {
                theorems.insert(Admissibility::DivFreeFde);
            }
        }
    }
    if compactness_with(p, r, &mut edges) {
        theorems.insert(Admissibility::Compactness);
    }

    ClassVerdict {
        m,
        d: p.d,
        inv_q1: x,
        inv_q2: y,
        divergence_free,
        scaling_sum: sum,
        plain,
        sigma,
        theorems,
        within_tolerance_of_boundary: edges.near,
    }
}

/// The admissibility labels alone.
pub fn theorem_admissible(p: &DiffusionParams, r: Reciprocals, divergence_free: bool) -> BTreeSet<Admissibility> {
    classify(p, r, divergence_free).theorems
}

fn compactness_with(p: &DiffusionParams, r: Reciprocals, edges: &mut Edges) -> bool {
    let (m, d) = (p.m, p.df());
    let (x, y) = (r.inv_q1, r.inv_q2);
    let b = p.sigma_level();
    if m >= 1.0 && x == 0.0 && y == 1.0 {
        return true;
    }
    let below = edges.lt(scaling_sum(p, r), b);
    if m >= 1.0 {
        below & edges.lt(x, b / (m * d)) & edges.lt((m - 1.0) / m, y) & edges.le(y, 1.0)
    } else {
        below & edges.le(x, b / d) & edges.le(y, 1.0)
    }
}

/// Exponent conditions under which the time derivative is controlled in
/// `L^1(W^{-1,1})`.
pub fn compactness_admissible(p: &DiffusionParams, r: Reciprocals) -> bool {
    compactness_with(p, r, &mut Edges::default())
}

/// Power of `r` picked up by `||V_r||_{L^{q1,q2}}` under the `L^1` scaling on
/// the whole space: `1 + d(m-1) - d/q1 - (2 + d(m-1))/q2`. Zero on the plain
/// line.
pub fn rescale_norm_exponent(p: &DiffusionParams, r: Reciprocals) -> f64 {
    p.plain_level() - scaling_sum(p, r)
}

/// `u_r(x, t) = r^d u(r x, r^{2+d(m-1)} t)`.
pub fn rescale_density<F>(u: F, r: f64, p: &DiffusionParams) -> Result<impl Fn(&[f64], f64) -> f64, ClassifyError>
where
    F: Fn(&[f64], f64) -> f64,
{
    if !(r > 0.0 && r.is_finite()) {
        return Err(ClassifyError::Scale(r));
    }
    let amp = r.powi(p.d as i32);
    let tscale = r.powf(p.sigma_level());
    Ok(move |x: &[f64], t: f64| {
        let mut y = [0.0; 3];
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = r * xi;
        }
        amp * u(&y[..x.len()], tscale * t)
    })
}

/// `V_r(x, t) = r^{1+d(m-1)} V(r x, r^{2+d(m-1)} t)`.
pub fn rescale_drift<F>(v: F, r: f64, p: &DiffusionParams) -> Result<impl Fn(&[f64], f64, &mut [f64]), ClassifyError>
where
    F: Fn(&[f64], f64, &mut [f64]),
{
    if !(r > 0.0 && r.is_finite()) {
        return Err(ClassifyError::Scale(r));
    }
    let amp = r.powf(p.plain_level());
    let tscale = r.powf(p.sigma_level());
    Ok(move |x: &[f64], t: f64, out: &mut [f64]| {
        let mut y = [0.0; 3];
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = r * xi;
        }
        v(&y[..x.len()], tscale * t, out);
        for o in out.iter_mut() {
            *o *= amp;
        }
    })
}

/// Factor `|Omega|^{1/q1 - 1/p1} T^{1/q2 - 1/p2}` bounding the `(q1, q2)`
/// norm by the `(p1, p2)` norm on a bounded cylinder, for `q <= p`
/// componentwise.
pub fn embedding_factor(lower: ExponentPair, higher: ExponentPair, omega_volume: f64, t_end: f64) -> Option<f64> {
    let (a1, a2) = (lower.q1.reciprocal(), lower.q2.reciprocal());
    let (b1, b2) = (higher.q1.reciprocal(), higher.q2.reciprocal());
    if a1 < b1 || a2 < b2 {
        return None;
    }
    Some(omega_volume.powf(a1 - b1) * t_end.powf(a2 - b2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub inv_q1: f64,
    pub inv_q2: f64,
    pub verdict: ClassVerdict,
}

/// Verdicts on the lattice `{0, 1.5/steps, ..., 1.5}^2` of reciprocals.
pub fn region_sweep(p: &DiffusionParams, steps: usize, divergence_free: bool) -> Vec<SweepRow> {
    let steps = steps.max(1);
    let mut rows = Vec::with_capacity((steps + 1) * (steps + 1));
    for i in 0..=steps {
        for j in 0..=steps {
            let x = 1.5 * i as f64 / steps as f64;
            let y = 1.5 * j as f64 / steps as f64;
            let r = Reciprocals { inv_q1: x, inv_q2: y };
            rows.push(SweepRow { inv_q1: x, inv_q2: y, verdict: classify(p, r, divergence_free) });
        }
    }
    rows
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "inv_q1,inv_q2,scaling_sum,plain,sigma,theorems,compactness,near_boundary")?;
    for r in rows {
        let v = &r.verdict;
        let thm: Vec<&str> =
            v.theorems.iter().filter(|a| **a != Admissibility::Compactness).map(|a| a.label()).collect();
        writeln!(
            out,
            "{},{},{},{:?},{:?},{},{},{}",
            r.inv_q1,
            r.inv_q2,
            v.scaling_sum,
            v.plain,
            v.sigma,
            if thm.is_empty() { "None".to_string() } else { thm.join(";") },
            v.admits(Admissibility::Compactness),
            v.within_tolerance_of_boundary
        )?;
    }
    Ok(())
}

/// Convenience for building reciprocals from an [`ExponentPair`]-like input
/// that may contain exponents below 1.
pub fn reciprocals_of(q1: Exponent, q2: Exponent) -> Reciprocals {
    Reciprocals { inv_q1: q1.reciprocal(), inv_q2: q2.reciprocal() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rc(x: f64, y: f64) -> Reciprocals {
        Reciprocals::new(x, y).unwrap()
    }

    fn dp(m: f64, d: usize) -> DiffusionParams {
        DiffusionParams::new(m, d).unwrap()
    }

    #[test]
    fn invalid_params() {
        assert!(DiffusionParams::new(0.0, 3).is_err());
        // d = 3, (1 - 2/d) = 1/3
        assert!(DiffusionParams::new(0.3, 3).is_err());
        assert!(DiffusionParams::new(0.4, 3).is_ok());
        assert!(DiffusionParams::new(1.0, 1).is_err());
        assert!(Reciprocals::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn plain_not_applicable_below_threshold() {
        // d = 3, m = 0.6 < 1 - 1/3 but > 1/3.
        let v = classify(&dp(0.6, 3), rc(0.1, 0.1), true);
        assert_eq!(v.plain, Level::NotApplicable);
        assert_ne!(v.sigma, Level::NotApplicable);
    }

    #[test]
    fn sigma_requires_flag() {
        let v = classify(&dp(1.5, 2), rc(0.0, 1.0), false);
        assert_eq!(v.sigma, Level::NotApplicable);
        assert!(!v.admits(Admissibility::DivFreePme));
    }

    #[test]
    fn near_boundary_flag() {
        // q1 threshold for d = 3, m = 1.5: 1/q1 < 2.25^-1
        let p = dp(1.5, 3);
        let v = classify(&p, rc(1.0 / 2.25 - 1e-13, 0.25), false);
        assert!(v.within_tolerance_of_boundary);
        let v = classify(&p, rc(0.1, 0.25), false);
        assert!(!v.within_tolerance_of_boundary);
    }

    #[test]
    fn rescale_identity_and_mass() {
        let p = dp(2.0, 2);
        let u = |x: &[f64], t: f64| (-(x[0] * x[0] + x[1] * x[1]) / (1.0 + t)).exp();
        let u1 = rescale_density(u, 1.0, &p).unwrap();
        assert_eq!(u1(&[0.3, -0.2], 0.5), u(&[0.3, -0.2], 0.5));
        assert!(rescale_density(u, 0.0, &p).is_err());
        // mass of u_r on a wide box equals the mass of u
        let ur = rescale_density(u, 2.0, &p).unwrap();
        let n = 400;
        let l = 8.0;
        let h = 2.0 * l / n as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = [-l + (i as f64 + 0.5) * h, -l + (j as f64 + 0.5) * h];
                m0 += u(&x, 0.25) * h * h;
                m1 += ur(&x, 0.25 / 2.0f64.powf(p.sigma_level())) * h * h;
            }
        }
        assert!((m0 - m1).abs() < 1e-6 * m0, "{m0} {m1}");
    }

    #[test]
    fn rescale_drift_amplitude() {
        let p = dp(1.5, 2);
        let v = |_: &[f64], _: f64, out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = -2.0;
        };
        let vr = rescale_drift(v, 2.0, &p).unwrap();
        let mut out = [0.0; 2];
        vr(&[0.1, 0.1], 0.0, &mut out);
        assert!((out[0] - 4.0).abs() < 1e-14 && (out[1] + 8.0).abs() < 1e-14);
    }

    #[test]
    fn embedding_factor_cases() {
        let lo = ExponentPair::finite(2.0, 2.0).unwrap();
        let hi = ExponentPair::new(Exponent::Infinite, Exponent::Finite(4.0)).unwrap();
        let f = embedding_factor(lo, hi, 4.0, 16.0).unwrap();
        assert!((f - 4.0f64.powf(0.5) * 16.0f64.powf(0.25)).abs() < 1e-14);
        assert!(embedding_factor(hi, lo, 1.0, 1.0).is_none());
    }

    #[test]
    fn sweep_has_full_lattice_and_csv_header() {
        let rows = region_sweep(&dp(1.5, 2), 6, true);
        assert_eq!(rows.len(), 49);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("inv_q1,inv_q2,scaling_sum,plain,sigma,theorems,compactness,near_boundary\n"));
        assert_eq!(text.lines().count(), 50);
    }

    fn plain_params() -> impl Strategy<Value = DiffusionParams> {
        (2usize..=3, 0.0..1.0f64).prop_map(|(d, s)| {
            let lo = 1.0 - 1.0 / d as f64;
            dp(lo + 1e-6 + s * (3.0 - lo), d)
        })
    }

    proptest! {
        #[test]
        fn points_on_the_plain_line_are_online(p in plain_params(), y in 0.0..=1.0f64) {
            // solve d x + b y = a for x, keeping x >= 0
            let (a, b) = (p.plain_level(), p.sigma_level());
            let x = (a - b * y) / p.d as f64;
            prop_assume!(x >= 0.0);
            let v = classify(&p, rc(x, y), false);
            prop_assert_eq!(v.plain, Level::OnLine);
        }

        #[test]
        fn plain_line_is_sigma_subclass(p in plain_params(), y in 0.0..=1.0f64) {
            let (a, b) = (p.plain_level(), p.sigma_level());
            let x = (a - b * y) / p.d as f64;
            prop_assume!(x >= 0.0);
            let v = classify(&p, rc(x, y), true);
            prop_assert_eq!(v.sigma, Level::Subclass);
        }

        #[test]
        fn admissible_means_subclass_or_designated_pair(p in plain_params(), x in 0.0..1.5f64, y in 0.0..1.5f64) {
            let v = classify(&p, rc(x, y), false);
            if v.admits(Admissibility::Pme) || v.admits(Admissibility::Fde) {
                let designated = (x - 0.5 * (p.m - 1.0)).abs() < 1e-9 && (y - 0.5).abs() < 1e-9;
                prop_assert!(v.plain == Level::Subclass || designated);
            }
        }

        #[test]
        fn reciprocal_and_exponent_inputs_agree(p in plain_params(), q1 in 1.0..50.0f64, q2 in 1.0..50.0f64, df in any::<bool>()) {
            let e = ExponentPair::finite(q1, q2).unwrap();
            let a = classify(&p, Reciprocals::from(e), df);
            let b = classify(&p, rc(1.0 / q1, 1.0 / q2), df);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rescaling_preserves_online_norm_exponent(p in plain_params(), y in 0.0..=1.0f64) {
            let (a, b) = (p.plain_level(), p.sigma_level());
            let x = (a - b * y) / p.d as f64;
            prop_assume!(x >= 0.0);
            prop_assert!(rescale_norm_exponent(&p, rc(x, y)).abs() < 1e-12);
        }
    }
}
