//! Both sides of the a priori bounds, evaluated on computed runs.
//!
//! Bounds with fully explicit constants are checked literally (with a 5%
//! quadrature slack). Bounds with an unspecified constant are reported as
//! `lhs / rhs_without_constant` and judged by how that ratio behaves as the
//! grid is refined.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify, reciprocals_of, Admissibility, DiffusionParams};
use crate::drift::{DriftError, PreparedDrift};
use crate::grid::{GridError, ScalarField, SpaceTimeDomain};
use crate::norms::{
    self, mixed_norm, pow_nonneg, slice_drift_energy, slice_grad_power, slice_power_integral, Exponent, ExponentPair,
    GradientFunctionalParams,
};
use crate::solver::StepObserver;
use crate::sum::CompensatedSum;
use crate::FaceField;

/// Slack on literal checks.
pub const LITERAL_SLACK: f64 = 0.05;
/// Slack on the mass bound.
pub const MASS_SLACK: f64 = 1e-10;
/// A ratio series is "bounded" when `max <= TREND_FACTOR * min`.
pub const TREND_FACTOR: f64 = 2.0;
/// Tolerance for a pair to sit on the interpolation relation.
pub const RELATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("{id}: {reason}")]
    Params { id: &'static str, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Drift(#[from] DriftError),
}

fn bad(id: &'static str, reason: impl Into<String>) -> EstimateError {
    EstimateError::Params { id, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Literal,
    RatioTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

/// A parameter value; infinite exponents serialize as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Param(pub f64);

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub id: String,
    pub scenario: String,
    pub params: BTreeMap<String, Param>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub mode: Mode,
    pub status: Status,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_series: Option<Vec<(usize, f64)>>,
}

/// `lhs / rhs` with `0/0 = 0`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

impl EstimateReport {
    fn new(id: &str, scenario: &str, mode: Mode, lhs: f64, rhs: f64) -> Self {
        let r = ratio(lhs, rhs);
        let pass = match mode {
            Mode::Literal => r <= 1.0 + LITERAL_SLACK,
            Mode::RatioTrend => r.is_finite(),
        };
        Self {
            id: id.to_string(),
            scenario: scenario.to_string(),
            params: BTreeMap::new(),
            lhs,
            rhs,
            ratio: r,
            mode,
            status: if pass { Status::Pass } else { Status::Fail },
            pass,
            note: None,
            refinement_series: None,
        }
    }

    fn not_applicable(id: &str, scenario: &str, mode: Mode, note: String) -> Self {
        Self {
            id: id.to_string(),
            scenario: scenario.to_string(),
            params: BTreeMap::new(),
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            mode,
            status: Status::NotApplicable,
            pass: true,
            note: Some(note),
            refinement_series: None,
        }
    }

    fn param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), Param(v));
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn set_pass(&mut self, pass: bool) {
        self.pass = pass;
        if self.status != Status::NotApplicable {
            self.status = if pass { Status::Pass } else { Status::Fail };
        }
    }

    /// True for a literal check that failed.
    pub fn literal_failure(&self) -> bool {
        self.mode == Mode::Literal && self.status == Status::Fail
    }
}

/// What a refinement series has to show on top of the per-grid verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendGate {
    None,
    NonIncreasing,
    Bounded,
}

pub fn is_bounded(series: &[(usize, f64)]) -> bool {
    let (lo, hi) = series.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &(_, r)| (lo.min(r), hi.max(r)));
    if series.is_empty() || hi == 0.0 {
        return true;
    }
    hi.is_finite() && hi <= TREND_FACTOR * lo
}

pub fn is_non_increasing(series: &[(usize, f64)]) -> bool {
    series.windows(2).all(|w| w[1].1 <= w[0].1)
}

/// Folds per-grid reports of one estimate into the finest one, carrying the
/// ratio series. Input must be ordered by increasing `N`.
pub fn merge_refinement(reports: Vec<(usize, EstimateReport)>, gate: TrendGate) -> Option<EstimateReport> {
    let series: Vec<(usize, f64)> = reports.iter().map(|(n, r)| (*n, r.ratio)).collect();
    let any_na = reports.iter().any(|(_, r)| r.status == Status::NotApplicable);
    let all_pass = reports.iter().all(|(_, r)| r.pass);
    let (_, mut last) = reports.into_iter().last()?;
    if any_na {
        last.status = Status::NotApplicable;
        last.refinement_series = Some(series);
        return Some(last);
    }
    let trend = match gate {
        TrendGate::None => true,
        TrendGate::NonIncreasing => is_non_increasing(&series),
        TrendGate::Bounded => is_bounded(&series),
    };
    let pass = match last.mode {
        Mode::Literal => last.pass && trend,
        Mode::RatioTrend => all_pass && trend,
    };
    last.set_pass(pass);
    last.refinement_series = Some(series);
    Some(last)
}

/// Stores the state at the midpoints of `count` equal time intervals.
#[derive(Debug, Clone)]
pub struct Sampler {
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
    t_end: f64,
}

impl Sampler {
    pub fn midpoints(t_end: f64, count: usize) -> Self {
        let dt = t_end / count as f64;
        Self { times: (0..count).map(|k| (k as f64 + 0.5) * dt).collect(), slices: Vec::with_capacity(count), t_end }
    }

    pub fn into_field(self, domain: &SpaceTimeDomain) -> Result<ScalarField, GridError> {
        let n = self.slices.len();
        let w = self.t_end / self.times.len().max(1) as f64;
        let mut times = self.times;
        times.truncate(n);
        ScalarField::with_weights(*domain, times, vec![w; n], self.slices)?.into_density()
    }
}

impl StepObserver for Sampler {
    fn next_time(&self) -> Option<f64> {
        self.times.get(self.slices.len()).copied()
    }

    fn observe(&mut self, _t: f64, u: &[f64], _drift: &FaceField) {
        self.slices.push(u.to_vec());
    }
}

/// Everything the evaluators need from one run.
pub struct RunData<'a> {
    pub scenario: &'a str,
    pub samples: &'a ScalarField,
    pub drift: &'a PreparedDrift,
    /// Declared `(q1, q2)` of the drift, if any.
    pub drift_exponents: Option<ExponentPair>,
    pub m: f64,
    /// Forcing mass plus initial mass.
    pub data_mass: f64,
    /// Largest mass over every step of the run.
    pub sup_mass: f64,
}

impl RunData<'_> {
    fn domain(&self) -> &SpaceTimeDomain {
        self.samples.domain()
    }

    fn cylinder(&self) -> f64 {
        self.domain().space_time_volume()
    }

    fn dim(&self) -> f64 {
        self.domain().dim() as f64
    }

    fn time_integral(&self, f: impl Fn(&[f64], f64) -> Result<f64, EstimateError>) -> Result<f64, EstimateError> {
        let mut acc = CompensatedSum::default();
        for ((s, &t), &w) in self.samples.slices().iter().zip(self.samples.times()).zip(self.samples.weights()) {
            acc.add(w * f(s, t)?);
        }
        Ok(acc.value())
    }

    /// `∫∫ u^{2-m} |V|^2`.
    pub fn drift_energy(&self) -> Result<f64, EstimateError> {
        if self.drift.is_zero() {
            return Ok(0.0);
        }
        let d = *self.domain();
        self.time_integral(|s, t| Ok(slice_drift_energy(&d, s, self.drift.at(t)?.as_ref(), self.m)))
    }

    /// `(mean |grad u^{(m+q-1)/2}|^alpha)^{1/alpha}`.
    fn mean_grad(&self, q: f64, alpha: f64) -> f64 {
        (norms::grad_power_alpha(self.samples, self.m, q, alpha) / self.cylinder()).powf(1.0 / alpha)
    }
}

/// `sup_t ∫u <= ν(Ω_T)`.
pub fn mass_bound(run: &RunData) -> EstimateReport {
    let lhs = run.sup_mass;
    let rhs = run.data_mass;
    let mut r = EstimateReport::new("mass_bound", run.scenario, Mode::Literal, lhs, rhs);
    r.set_pass(lhs <= rhs * (1.0 + MASS_SLACK));
    r
}

/// Right-hand side of the weighted gradient bound. `drift_energy = None`
/// selects the divergence-free form.
pub fn weighted_gradient_rhs(p: &GradientFunctionalParams, mass: f64, drift_energy: Option<f64>) -> f64 {
    let (m, q, xi, a) = (p.m, p.q, p.xi, p.a);
    let pre = (m + q - 1.0).powi(2) * a.powf((q - 1.0) * (1.0 - xi)) / (m * (q - 1.0) * (xi - 1.0));
    match drift_energy {
        None => 2.0 * pre * mass,
        Some(e) => pre * (2.0 * mass + (q - 1.0) * (xi - 1.0) / m * e),
    }
}

pub fn weighted_gradient(run: &RunData, q: f64, xi: f64, a: f64) -> Result<EstimateReport, EstimateError> {
    if !(q > 1.0) {
        return Err(bad("weighted_gradient", format!("q must exceed 1, got {q}")));
    }
    // alpha plays no part in this functional
    let p = GradientFunctionalParams::new(run.m, q, 1.0, xi, a).map_err(|e| bad("weighted_gradient", e.to_string()))?;
    let divfree = run.drift.divergence_free();
    if !divfree && run.m > 2.0 {
        return Err(bad("weighted_gradient", format!("needs m <= 2 for a general drift, got {}", run.m)));
    }
    let lhs = norms::weighted_gradient(run.samples, &p);
    let (id, rhs) = if divfree {
        ("weighted_gradient_divfree", weighted_gradient_rhs(&p, run.data_mass, None))
    } else {
        ("weighted_gradient", weighted_gradient_rhs(&p, run.data_mass, Some(run.drift_energy()?)))
    };
    Ok(EstimateReport::new(id, run.scenario, Mode::Literal, lhs, rhs)
        .param("m", run.m)
        .param("d", run.dim())
        .param("q", q)
        .param("xi", xi)
        .param("A", a))
}

/// Largest admissible `alpha` (exclusive) for the `q > 1` gradient bound.
pub fn alpha_limit(m: f64, d: f64, q: f64) -> f64 {
    2.0 * (2.0 + m * d) / (2.0 + d * (m + q - 1.0))
}

/// Exponent `(2 + d(m+q-1)) / (2(2+md))` of the data terms.
pub fn data_exponent(m: f64, d: f64, q: f64) -> f64 {
    (2.0 + d * (m + q - 1.0)) / (2.0 * (2.0 + m * d))
}

/// Constant-free right-hand side of the `q > 1` gradient bound.
pub fn alpha_gradient_rhs(m: f64, d: f64, q: f64, alpha: f64, mass: f64, cylinder: f64, mean_drift_energy: f64) -> f64 {
    let e = data_exponent(m, d, q);
    let k = 2.0 * d * (m + q - 1.0).powi(2) / (m * (2.0 * (2.0 + m * d) - alpha * (2.0 + d * (m + q - 1.0))));
    let mq = pow_nonneg(mass, (q - 1.0) / (2.0 + m * d));
    k.powf(e) * mq * pow_nonneg(mass / cylinder, e)
        + mq * pow_nonneg((m + q - 1.0).powi(2) / (m * m) * mean_drift_energy, e)
}

/// Constant-free right-hand side of the `q -> 1` gradient bound.
pub fn alpha_gradient_q1_rhs(mass: f64, cylinder: f64, mean_drift_energy: f64) -> f64 {
    (mass / cylinder).max(0.0).sqrt() + mean_drift_energy.max(0.0).sqrt()
}

/// `q = 1` gives the limiting form.
pub fn alpha_gradient(run: &RunData, q: f64, alpha: f64) -> Result<EstimateReport, EstimateError> {
    let (m, d) = (run.m, run.dim());
    let energy = run.drift_energy()? / run.cylinder();
    let (id, rhs) = if q == 1.0 {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(bad("alpha_gradient", format!("alpha must lie in (0, 2), got {alpha}")));
        }
        ("alpha_gradient_q1", alpha_gradient_q1_rhs(run.data_mass, run.cylinder(), energy))
    } else {
        if !(q > 1.0) {
            return Err(bad("alpha_gradient", format!("q must be >= 1, got {q}")));
        }
        let lim = alpha_limit(m, d, q);
        if !(alpha > 0.0 && alpha < lim) {
            return Err(bad("alpha_gradient", format!("alpha must lie in (0, {lim}), got {alpha}")));
        }
        ("alpha_gradient", alpha_gradient_rhs(m, d, q, alpha, run.data_mass, run.cylinder(), energy))
    };
    let lhs = run.mean_grad(q, alpha);
    Ok(EstimateReport::new(id, run.scenario, Mode::RatioTrend, lhs, rhs)
        .param("m", m)
        .param("d", d)
        .param("q", q)
        .param("alpha", alpha))
}

/// `(sigma1, sigma2)` of the drift term in the final gradient bound.
pub fn sigma_exponents(m: f64, alpha: f64, q2: Exponent) -> (f64, f64) {
    match q2 {
        Exponent::Infinite => (2.0 / (2.0 - alpha), (4.0 - (2.0 + alpha) * m) / (2.0 * (2.0 - alpha))),
        Exponent::Finite(q2) => {
            let den = (2.0 - alpha) * q2 + 2.0 * alpha;
            (2.0 * q2 / den, ((4.0 - (2.0 + alpha) * m) * q2 + 2.0 * alpha * m) / (2.0 * den))
        }
    }
}

/// The gradient bound under an admissible drift. Inadmissible drifts give a
/// `NotApplicable` report.
pub fn energy_bound(run: &RunData, alpha: f64) -> Result<EstimateReport, EstimateError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(bad("energy_bound", format!("alpha must lie in (1, 2), got {alpha}")));
    }
    let (m, d) = (run.m, run.dim());
    let divfree = run.drift.divergence_free();
    let id = if divfree { "energy_bound_divfree" } else { "energy_bound" };
    let na =
        |why: String| Ok(EstimateReport::not_applicable(id, run.scenario, Mode::RatioTrend, why).param("alpha", alpha));
    let mean = (run.data_mass / run.cylinder()).max(0.0).sqrt();
    let lhs = run.mean_grad(1.0, alpha);

    if divfree {
        if m <= (1.0 - 2.0 / d).max(0.0) {
            return na(format!("m = {m} below the divergence-free range"));
        }
        if !run.drift.is_zero() {
            if let Some(e) = run.drift_exponents {
                let p = DiffusionParams::new(m, run.domain().dim()).map_err(|e| bad("energy_bound", e.to_string()))?;
                let v = classify(&p, reciprocals_of(e.q1, e.q2), true);
                if !(v.admits(Admissibility::DivFreePme) || v.admits(Admissibility::DivFreeFde)) {
                    return na("drift exponents outside the divergence-free region".into());
                }
            }
        }
        return Ok(EstimateReport::new(id, run.scenario, Mode::RatioTrend, lhs, mean)
            .param("m", m)
            .param("d", d)
            .param("alpha", alpha));
    }

    let Some(e) = run.drift_exponents else {
        return na("drift has no declared exponents".into());
    };
    let p = DiffusionParams::new(m, run.domain().dim()).map_err(|e| bad("energy_bound", e.to_string()))?;
    let verdict = classify(&p, reciprocals_of(e.q1, e.q2), false);
    let in_range = ((1.0..=2.0).contains(&m) && verdict.admits(Admissibility::Pme))
        || (m > 1.0 - 1.0 / d && m < 1.0 && verdict.admits(Admissibility::Fde));
    if !in_range {
        return na(format!("(q1, q2) = ({}, {}) not admissible for m = {m}", e.q1, e.q2));
    }
    let (s1, s2) = sigma_exponents(m, alpha, e.q2);
    let times: Vec<f64> = run.samples.times().to_vec();
    let vnorm = mixed_drift_norm(run, e, &times)?;
    let rhs = mean + pow_nonneg(vnorm, s1) * pow_nonneg(run.data_mass, s2);
    Ok(EstimateReport::new(id, run.scenario, Mode::RatioTrend, lhs, rhs)
        .param("m", m)
        .param("d", d)
        .param("alpha", alpha)
        .param("q1", e.q1.value())
        .param("q2", e.q2.value())
        .param("sigma1", s1)
        .param("sigma2", s2))
}

fn mixed_drift_norm(run: &RunData, e: ExponentPair, times: &[f64]) -> Result<f64, EstimateError> {
    let d = run.domain();
    let inner: Vec<f64> = times
        .iter()
        .map(|&t| Ok(norms::slice_drift_lebesgue(d, run.drift.at(t)?.as_ref(), e.q1)))
        .collect::<Result<_, EstimateError>>()?;
    Ok(norms::combine_in_time(&inner, run.samples.weights(), e.q2))
}

/// `r1` on the interpolation relation for given `r2`.
pub fn interpolation_r1(m: f64, d: f64, alpha: f64, r2: Exponent) -> f64 {
    let s = (alpha * (2.0 + m * d) - 2.0 * d) / 2.0 * r2.reciprocal();
    d / (d - s)
}

/// Checks `alpha` and `(r1, r2)` against the relation and ranges.
pub fn check_interpolation(m: f64, d: f64, alpha: f64, r1: f64, r2: Exponent) -> Result<(), String> {
    if !(alpha >= 2.0 * d / (2.0 + m * d) && alpha < 2.0) {
        return Err(format!("alpha = {alpha} outside [2d/(2+md), 2)"));
    }
    let r1_max = if alpha >= d { f64::INFINITY } else { alpha * m * d / (2.0 * (d - alpha)) };
    if !(r1 >= 1.0 && r1 <= r1_max * (1.0 + RELATION_TOL)) {
        return Err(format!("r1 = {r1} outside [1, {r1_max}]"));
    }
    if r2.reciprocal() > 2.0 / (alpha * m) * (1.0 + RELATION_TOL) {
        return Err(format!("r2 = {r2} below alpha m / 2"));
    }
    let lhs = d / r1 + (alpha * (2.0 + m * d) - 2.0 * d) / 2.0 * r2.reciprocal();
    if (lhs - d).abs() > RELATION_TOL * d {
        return Err(format!("(r1, r2) = ({r1}, {r2}) off the relation: {lhs} != {d}"));
    }
    Ok(())
}

/// Constant-free interpolation bound
/// `||u||_{r1,r2} <= (sup ∫u)^{1 - alpha m/(2 r2)} (∫∫|grad u^{m/2}|^alpha)^{1/r2}`.
pub fn interpolation(run: &RunData, alpha: f64, r1: f64, r2: Exponent) -> Result<EstimateReport, EstimateError> {
    let (m, d) = (run.m, run.dim());
    check_interpolation(m, d, alpha, r1, r2).map_err(|e| bad("interpolation", e))?;
    let e = ExponentPair::new(Exponent::Finite(r1), r2).map_err(|e| bad("interpolation", e.to_string()))?;
    let lhs = mixed_norm(run.samples, e);
    let inv = r2.reciprocal();
    let rhs = if inv == 0.0 {
        run.sup_mass
    } else {
        let grad = norms::grad_power_alpha(run.samples, m, 1.0, alpha);
        pow_nonneg(run.sup_mass, 1.0 - alpha * m / 2.0 * inv) * pow_nonneg(grad, inv)
    };
    Ok(EstimateReport::new("interpolation", run.scenario, Mode::Literal, lhs, rhs)
        .param("m", m)
        .param("d", d)
        .param("alpha", alpha)
        .param("r1", r1)
        .param("r2", r2.value()))
}

/// Parabolic embedding on the field `v` (the density itself by default):
/// `∫∫|v|^{p(d+q)/d}` against
/// `(sup ∫|v|^q)^{p/d} ∫∫|grad v|^p + |Ω|^{1-p(d+q)/d} ∫ ||v||_1^{p(d+q)/d}`.
pub fn parabolic_embedding(scenario: &str, v: &ScalarField, p: f64, q: f64) -> Result<EstimateReport, EstimateError> {
    let dom = v.domain();
    let d = dom.dim() as f64;
    if !(p >= 1.0 && p < d) {
        return Err(bad("parabolic_embedding", format!("p must lie in [1, d), got {p}")));
    }
    if !(q > 0.0 && q < d * p / (d - p)) {
        return Err(bad("parabolic_embedding", format!("q must lie in (0, dp/(d-p)), got {q}")));
    }
    let s = p * (d + q) / d;
    let mut lhs = CompensatedSum::default();
    let mut grad = CompensatedSum::default();
    let mut tail = CompensatedSum::default();
    let mut sup_q = 0.0_f64;
    for (slice, &w) in v.slices().iter().zip(v.weights()) {
        lhs.add(w * slice_power_integral(dom, slice, s));
        grad.add(w * slice_grad_power(dom, slice, 1.0, p));
        tail.add(w * slice_power_integral(dom, slice, 1.0).powf(s));
        sup_q = sup_q.max(slice_power_integral(dom, slice, q));
    }
    let rhs = sup_q.powf(p / d) * grad.value() + dom.volume().powf(1.0 - s) * tail.value();
    Ok(EstimateReport::new("parabolic_embedding", scenario, Mode::RatioTrend, lhs.value(), rhs)
        .param("d", d)
        .param("p", p)
        .param("q", q))
}

/// One requested estimate, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimateRequest {
    MassBound,
    WeightedGradient {
        q: f64,
        xi: f64,
        #[serde(rename = "A")]
        a: f64,
    },
    AlphaGradient {
        q: f64,
        alpha: f64,
    },
    EnergyBound {
        alpha: f64,
    },
    Interpolation {
        alpha: f64,
        r2: Exponent,
    },
    ParabolicEmbedding {
        p: f64,
        q: f64,
    },
}

impl EstimateRequest {
    pub fn gate(&self) -> TrendGate {
        match self {
            EstimateRequest::MassBound | EstimateRequest::Interpolation { .. } => TrendGate::None,
            EstimateRequest::WeightedGradient { .. } => TrendGate::NonIncreasing,
            _ => TrendGate::Bounded,
        }
    }

    /// Stable key used to group the same request across grids.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }

    /// The standard set run on every scenario.
    pub fn standard(m: f64, d: usize) -> Vec<Self> {
        let d = d as f64;
        let mut out = vec![
            Self::MassBound,
            Self::AlphaGradient { q: 1.0, alpha: 1.5 },
            Self::EnergyBound { alpha: 1.5 },
            Self::ParabolicEmbedding { p: 1.5, q: 1.0 },
        ];
        if m <= 2.0 {
            out.push(Self::WeightedGradient { q: 2.0, xi: 2.0, a: 1.0 });
        }
        let q = 1.5;
        let alpha = (0.5 * alpha_limit(m, d, q)).min(1.5);
        out.push(Self::AlphaGradient { q, alpha });
        out
    }

    /// Default request(s) for a report id, as used on the command line.
    pub fn by_id(id: &str, m: f64, d: usize) -> Option<Vec<Self>> {
        let standard = Self::standard(m, d);
        let alpha_q = standard.iter().find_map(|r| match r {
            Self::AlphaGradient { q, alpha } if *q > 1.0 => Some((*q, *alpha)),
            _ => None,
        });
        Some(match id {
            "all" => standard,
            "mass_bound" => vec![Self::MassBound],
            "weighted_gradient" | "weighted_gradient_divfree" => {
                vec![Self::WeightedGradient { q: 2.0, xi: 2.0, a: 1.0 }]
            }
            "alpha_gradient" => alpha_q.map(|(q, alpha)| vec![Self::AlphaGradient { q, alpha }])?,
            "alpha_gradient_q1" => vec![Self::AlphaGradient { q: 1.0, alpha: 1.5 }],
            "energy_bound" | "energy_bound_divfree" => vec![Self::EnergyBound { alpha: 1.5 }],
            "interpolation" => vec![
                Self::Interpolation { alpha: 1.5, r2: Exponent::Infinite },
                Self::Interpolation { alpha: 1.5, r2: Exponent::Finite((0.75 * m).max(1.0) * 2.0) },
            ],
            "parabolic_embedding" => vec![Self::ParabolicEmbedding { p: 1.5, q: 1.0 }],
            _ => return None,
        })
    }

    pub fn evaluate(&self, run: &RunData) -> Result<EstimateReport, EstimateError> {
        match *self {
            EstimateRequest::MassBound => Ok(mass_bound(run)),
            EstimateRequest::WeightedGradient { q, xi, a } => weighted_gradient(run, q, xi, a),
            EstimateRequest::AlphaGradient { q, alpha } => alpha_gradient(run, q, alpha),
            EstimateRequest::EnergyBound { alpha } => energy_bound(run, alpha),
            EstimateRequest::Interpolation { alpha, r2 } => {
                let r1 = interpolation_r1(run.m, run.dim(), alpha, r2);
                interpolation(run, alpha, r1, r2)
            }
            EstimateRequest::ParabolicEmbedding { p, q } => parabolic_embedding(run.scenario, run.samples, p, q),
        }
    }
}
