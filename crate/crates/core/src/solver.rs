//! Explicit finite-volume solver for `u_t - Δφ_ε(u) + div(uV) = μ_n`.
//!
//! Face fluxes are `F = -(φ_ε(u_R) - φ_ε(u_L))/h + V * u_upwind` with
//! `φ_ε(s) = (s + ε)^m - ε^m`, and `u' = u - dt * div F + dt * s` where `s` is
//! the time average of the forcing over the step. Under the step bound of
//! [`stable_dt`] the update is a convex combination of neighbouring values,
//! so it keeps `u >= 0`, and the flux form makes the discrete mass budget
//! telescope to the boundary flux.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drift::{DriftError, PreparedDrift};
use crate::grid::{Boundary, FaceField, GridError, ScalarField, SpaceTimeDomain};
use crate::measure::MollifiedForcing;
use crate::sum::CompensatedSum;

/// Relative tolerance of the per-step mass budget.
pub const BUDGET_TOL: f64 = 1e-12;
/// Values below `-NEGATIVITY_TOL * max u` abort the run.
pub const NEGATIVITY_TOL: f64 = 1e-14;

const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("negative density {value:e} at cell {cell}, t = {t}")]
    Negative { t: f64, cell: usize, value: f64 },
    #[error("mass budget off by {residual:e} (relative) at step {step}")]
    Budget { step: usize, residual: f64 },
    #[error("step limit {0} reached before t_end")]
    MaxSteps(usize),
    #[error("non-finite value in the solution at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn default_safety() -> f64 {
    0.9
}

fn default_max_steps() -> usize {
    5_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub m: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    /// Defaults to the domain's final time.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Upper cap on a single step (defaults to `t_end / 100`).
    #[serde(default)]
    pub max_dt: Option<f64>,
    /// Times at which slices are stored, besides `0` and `t_end`.
    #[serde(default)]
    pub output_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(m: f64, epsilon: f64) -> Self {
        Self {
            m,
            epsilon,
            cfl_safety: default_safety(),
            t_end: None,
            max_steps: default_max_steps(),
            max_dt: None,
            output_times: Vec::new(),
        }
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    pub fn validate(&self, domain: &SpaceTimeDomain) -> Result<(), SolverError> {
        let bad = |s: String| Err(SolverError::Config(s));
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad(format!("m must be positive, got {}", self.m));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.m < 1.0 && self.epsilon == 0.0 {
            return bad("m < 1 needs epsilon > 0".into());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        let t_end = self.t_end(domain);
        if !(t_end > 0.0 && t_end <= domain.final_time()) {
            return bad(format!("t_end must lie in (0, T], got {t_end}"));
        }
        if let Some(cap) = self.max_dt {
            if !(cap > 0.0) {
                return bad("max_dt must be positive".into());
            }
        }
        if self.output_times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
            return bad("output times must lie in [0, t_end]".into());
        }
        Ok(())
    }

    pub fn t_end(&self, domain: &SpaceTimeDomain) -> f64 {
        self.t_end.unwrap_or(domain.final_time())
    }

    /// `φ_ε(s) = (s + ε)^m - ε^m`, with `s` clamped at 0.
    #[inline]
    pub fn phi(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        if self.m == 1.0 {
            return s;
        }
        if self.epsilon == 0.0 {
            return if self.m == 2.0 { s * s } else { s.powf(self.m) };
        }
        (s + self.epsilon).powf(self.m) - self.epsilon.powf(self.m)
    }

    /// Largest slope of `φ_ε` on `[0, u_max]`.
    pub fn max_slope(&self, u_max: f64) -> f64 {
        let m = self.m;
        if m >= 1.0 {
            m * (u_max.max(0.0) + self.epsilon).powf(m - 1.0)
        } else {
            m * self.epsilon.powf(m - 1.0)
        }
    }
}

/// Step bound `safety / (2d Λ/h^2 + 2d max|V|/h)`, `Λ` the largest slope of
/// `φ_ε` over the current range of `u`.
pub fn stable_dt(config: &SolverConfig, domain: &SpaceTimeDomain, u: &[f64], v_max: f64) -> f64 {
    let u_max = u.iter().fold(0.0_f64, |m, &v| m.max(v));
    let h = domain.h();
    let d2 = 2.0 * domain.dim() as f64;
    let rate = d2 * config.max_slope(u_max) / (h * h) + d2 * v_max / h;
    if rate > 0.0 {
        config.cfl_safety / rate
    } else {
        f64::INFINITY
    }
}

/// Mass bookkeeping of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    /// `∫∫ μ_n` over the step.
    pub gain: f64,
    /// Net outward boundary flux integrated over the step.
    pub outflux: f64,
}

impl StepRecord {
    pub fn residual(&self) -> f64 {
        let lhs = self.mass_after - self.mass_before;
        let rhs = self.gain - self.outflux;
        let scale = self.mass_before.abs().max(self.mass_after.abs()).max(self.gain.abs()).max(self.outflux.abs());
        if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        }
    }
}

#[inline]
fn face_flux(h_inv: f64, ul: f64, ur: f64, pl: f64, pr: f64, v: f64) -> f64 {
    let adv = if v > 0.0 { v * ul } else { v * ur };
    -(pr - pl) * h_inv + adv
}

/// Workspace for repeated steps on one grid.
pub struct Stepper {
    domain: SpaceTimeDomain,
    config: SolverConfig,
    phi: Vec<f64>,
    next: Vec<f64>,
}

impl Stepper {
    pub fn new(config: SolverConfig, domain: SpaceTimeDomain) -> Result<Self, SolverError> {
        config.validate(&domain)?;
        Ok(Self { phi: vec![0.0; domain.cell_count()], next: vec![0.0; domain.cell_count()], domain, config })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn domain(&self) -> &SpaceTimeDomain {
        &self.domain
    }

    pub fn stable_dt(&self, u: &[f64], drift: &FaceField) -> f64 {
        stable_dt(&self.config, &self.domain, u, drift.max_abs())
    }

    /// One explicit step in place. `source` is the forcing averaged over the
    /// step (or `None`). Checks the step bound, nonnegativity and the mass
    /// budget.
    pub fn step(
        &mut self,
        t: f64,
        u: &mut [f64],
        drift: &FaceField,
        source: Option<&[f64]>,
        dt: f64,
    ) -> Result<StepRecord, SolverError> {
        let limit = self.stable_dt(u, drift);
        if dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::Cfl { dt, limit });
        }
        let domain = self.domain;
        let n = domain.cells();
        let dim = domain.dim();
        let h_inv = 1.0 / domain.h();
        let boundary = domain.boundary();
        let cfg = &self.config;

        let phi = &mut self.phi;
        if phi.len() >= PAR_THRESHOLD {
            phi.par_iter_mut().zip(u.par_iter()).for_each(|(p, &v)| *p = cfg.phi(v));
        } else {
            phi.iter_mut().zip(u.iter()).for_each(|(p, &v)| *p = cfg.phi(v));
        }
        let phi = &*phi;
        let uu = &*u;

        let mut inners = [1usize; 3];
        for (a, inner) in inners.iter_mut().enumerate().take(dim) {
            *inner = domain.axis_layout(a).1;
        }

        let row = |r: usize, out: &mut [f64]| {
            for (j, o) in out.iter_mut().enumerate() {
                let c = r * n + j;
                let mut net = 0.0;
                for (a, &inner) in inners.iter().enumerate().take(dim) {
                    let i = (c / inner) % n;
                    let outer = c / (n * inner);
                    let f_lo = c + outer * inner;
                    let f_hi = f_lo + inner;
                    let comp = &drift.comps[a];
                    let lo = if i > 0 {
                        face_flux(h_inv, uu[c - inner], uu[c], phi[c - inner], phi[c], comp[f_lo])
                    } else {
                        match boundary {
                            Boundary::DirichletZero => face_flux(h_inv, 0.0, uu[c], 0.0, phi[c], comp[f_lo]),
                            Boundary::NoFlux => 0.0,
                        }
                    };
                    let hi = if i + 1 < n {
                        face_flux(h_inv, uu[c], uu[c + inner], phi[c], phi[c + inner], comp[f_hi])
                    } else {
                        match boundary {
                            Boundary::DirichletZero => face_flux(h_inv, uu[c], 0.0, phi[c], 0.0, comp[f_hi]),
                            Boundary::NoFlux => 0.0,
                        }
                    };
                    net += hi - lo;
                }
                let s = source.map_or(0.0, |s| s[c]);
                *o = uu[c] - dt * h_inv * net + dt * s;
            }
        };
        if self.next.len() >= PAR_THRESHOLD {
            self.next.par_chunks_mut(n).enumerate().for_each(|(r, out)| row(r, out));
        } else {
            self.next.chunks_mut(n).enumerate().for_each(|(r, out)| row(r, out));
        }

        let outflux = match boundary {
            Boundary::NoFlux => 0.0,
            Boundary::DirichletZero => dt * self.dirichlet_outflux(u, drift),
        };
        let gain = source.map_or(0.0, |s| dt * domain.integrate(s));
        let mass_before = domain.integrate(u);
        let mass_after = domain.integrate(&self.next);

        let u_max = u.iter().fold(0.0_f64, |m, &v| m.max(v));
        let floor = -NEGATIVITY_TOL * u_max.max(f64::MIN_POSITIVE);
        for (cell, &v) in self.next.iter().enumerate() {
            if !v.is_finite() {
                return Err(SolverError::NonFinite(t + dt));
            }
            if v < floor {
                return Err(SolverError::Negative { t: t + dt, cell, value: v });
            }
        }
        u.copy_from_slice(&self.next);
        Ok(StepRecord { t, dt, mass_before, mass_after, gain, outflux })
    }

    /// `h^{d-1} * sum` of outward fluxes over the boundary faces.
    fn dirichlet_outflux(&self, u: &[f64], drift: &FaceField) -> f64 {
        let domain = &self.domain;
        let n = domain.cells();
        let h_inv = 1.0 / domain.h();
        let mut acc = CompensatedSum::default();
        for a in 0..domain.dim() {
            let (outer, inner) = domain.axis_layout(a);
            let comp = &drift.comps[a];
            for o in 0..outer {
                let cb = o * n * inner;
                let fb = o * (n + 1) * inner;
                for k in 0..inner {
                    let c0 = cb + k;
                    let c1 = cb + (n - 1) * inner + k;
                    let lo = face_flux(h_inv, 0.0, u[c0], 0.0, self.phi[c0], comp[fb + k]);
                    let hi = face_flux(h_inv, u[c1], 0.0, self.phi[c1], 0.0, comp[fb + n * inner + k]);
                    acc.add(hi);
                    acc.add(-lo);
                }
            }
        }
        acc.value() * domain.face_area()
    }
}

/// Called by [`solve`] at times of its choosing; the solver lands a step on
/// each requested time.
pub trait StepObserver {
    /// Next time at which the observer wants to see the state.
    fn next_time(&self) -> Option<f64>;
    fn observe(&mut self, t: f64, u: &[f64], drift: &FaceField);
}

/// Stored slices and the per-step mass budget of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub domain: SpaceTimeDomain,
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    pub initial_mass: f64,
}

impl Trajectory {
    /// Stored slices as a density field with left-endpoint weights.
    pub fn field(&self) -> Result<ScalarField, GridError> {
        ScalarField::new(self.domain, self.times.clone(), self.slices.clone())?.into_density()
    }

    pub fn final_slice(&self) -> &[f64] {
        self.slices.last().expect("at least one slice")
    }

    /// Slice stored at (or closest to) `t`.
    pub fn slice_at(&self, t: f64) -> &[f64] {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .expect("at least one slice");
        &self.slices[k]
    }

    /// Largest mass over every step of the run.
    pub fn sup_mass(&self) -> f64 {
        self.steps.iter().map(|s| s.mass_after).fold(self.initial_mass, f64::max)
    }

    pub fn cumulative_gain(&self) -> f64 {
        self.steps.iter().map(|s| s.gain).collect::<CompensatedSum>().value()
    }

    pub fn cumulative_outflux(&self) -> f64 {
        self.steps.iter().map(|s| s.outflux).collect::<CompensatedSum>().value()
    }

    /// Largest relative budget residual over all steps.
    pub fn max_budget_residual(&self) -> f64 {
        self.steps.iter().map(StepRecord::residual).fold(0.0, f64::max)
    }

    /// Rows `(t, mass, forcing_cum, outflux_cum)` after every step.
    pub fn budget_rows(&self) -> Vec<[f64; 4]> {
        let mut gain = CompensatedSum::default();
        let mut out = CompensatedSum::default();
        let mut rows = vec![[0.0, self.initial_mass, 0.0, 0.0]];
        for s in &self.steps {
            gain.add(s.gain);
            out.add(s.outflux);
            rows.push([s.t + s.dt, s.mass_after, gain.value(), out.value()]);
        }
        rows
    }
}

/// Runs `config` on `domain` from `initial` (defaults to the forcing's
/// initial state) until `t_end`.
pub fn solve(
    config: &SolverConfig,
    domain: &SpaceTimeDomain,
    forcing: &MollifiedForcing,
    drift: &PreparedDrift,
    initial: Option<Vec<f64>>,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<Trajectory, SolverError> {
    let mut stepper = Stepper::new(config.clone(), *domain)?;
    let t_end = config.t_end(domain);
    let cap = config.max_dt.unwrap_or(t_end / 100.0);
    let mut u = match initial {
        Some(u) => {
            if u.len() != domain.cell_count() {
                return Err(GridError::SliceLength { expected: domain.cell_count(), got: u.len() }.into());
            }
            if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(SolverError::Config("initial state must be finite and >= 0".into()));
            }
            u
        }
        None => forcing.initial_state().to_vec(),
    };
    let mut outputs: Vec<f64> = config.output_times.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    outputs.push(t_end);

    let mut times = vec![0.0];
    let mut slices = vec![u.clone()];
    let initial_mass = domain.integrate(&u);
    let mut steps = Vec::new();
    let mut source = vec![0.0; domain.cell_count()];
    let mut t = 0.0;
    let mut next_out = 0;
    // tolerance for landing on target times
    let snap = 1e-12 * t_end;

    while t < t_end - snap {
        if steps.len() >= config.max_steps {
            return Err(SolverError::MaxSteps(config.max_steps));
        }
        let v = drift.at(t)?;
        if let Some(obs) = observer.as_deref_mut() {
            while obs.next_time().is_some_and(|nt| nt <= t + snap) {
                obs.observe(t, &u, &v);
            }
        }
        let mut dt = stepper.stable_dt(&u, &v).min(cap);
        let mut target = outputs[next_out];
        if let Some(nt) = observer.as_deref().and_then(|o| o.next_time()) {
            if nt > t + snap {
                target = target.min(nt);
            }
        }
        if t + dt >= target - snap {
            dt = dt.min(target - t);
        }
        let active = forcing.average_into(t, t + dt, &mut source);
        let rec = stepper.step(t, &mut u, &v, active.then_some(source.as_slice()), dt)?;
        let residual = rec.residual();
        if residual > BUDGET_TOL {
            return Err(SolverError::Budget { step: steps.len(), residual });
        }
        steps.push(rec);
        t = if (t + dt - target).abs() <= snap { target } else { t + dt };
        if t >= outputs[next_out] - snap {
            t = outputs[next_out];
            times.push(t);
            slices.push(u.clone());
            next_out += 1;
            if next_out == outputs.len() {
                break;
            }
        }
    }
    if let Some(obs) = observer {
        let v = drift.at(t)?;
        while obs.next_time().is_some_and(|nt| nt <= t + snap) {
            obs.observe(t, &u, &v);
        }
    }
    Ok(Trajectory { domain: *domain, config: config.clone(), times, slices, steps, initial_mass })
}

/// Forward running mean `[f]_h(t) = (1/h) ∫_t^{t+h} f` of the piecewise
/// linear interpolant of `(times, values)`, zero for `t > T - h`.
pub fn steklov(times: &[f64], values: &[f64], h: f64) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    let t_last = *times.last().expect("non-empty series");
    let primitive = |t: f64| -> f64 {
        // ∫_{t0}^{t} of the interpolant
        let mut acc = 0.0;
        for k in 0..times.len() - 1 {
            let (a, b) = (times[k], times[k + 1]);
            if t <= a {
                break;
            }
            let e = t.min(b);
            let slope = (values[k + 1] - values[k]) / (b - a);
            let fe = values[k] + slope * (e - a);
            acc += 0.5 * (values[k] + fe) * (e - a);
        }
        acc
    };
    times
        .iter()
        .map(|&t| if t + h > t_last * (1.0 + 1e-14) { 0.0 } else { (primitive(t + h) - primitive(t)) / h })
        .collect()
}

/// Cellwise Steklov average of a stored field at its own sample times.
pub fn steklov_field(f: &ScalarField, h: f64) -> Result<ScalarField, GridError> {
    let cells = f.domain().cell_count();
    let mut slices = vec![vec![0.0; cells]; f.len()];
    let mut series = vec![0.0; f.len()];
    for c in 0..cells {
        for (k, s) in f.slices().iter().enumerate() {
            series[k] = s[c];
        }
        for (k, v) in steklov(f.times(), &series, h).into_iter().enumerate() {
            slices[k][c] = v;
        }
    }
    ScalarField::with_weights(*f.domain(), f.times().to_vec(), f.weights().to_vec(), slices)
}
