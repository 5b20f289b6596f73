//! Finite-difference integrator for the viscous system
//! `r_t − p_x = δ r_xx`, `p_t − τ(r)_x = δ p_xx` with
//! `p(t,0) = 0`, `r(t,1) = τ⁻¹(τ̄(t))`, `p_x(t,1) = 0`, `r_x(t,0) = 0`.
//!
//! Fluxes use second-order central differences on the co-located grid. The
//! default IMEX scheme treats diffusion with the trapezoidal rule and the
//! flux with Heun's predictor–corrector, so the step size is limited by the
//! hyperbolic CFL condition only. Boundary nodes are slaved to the interior:
//! Dirichlet values are imposed directly and the Neumann nodes follow from the
//! second-order one-sided stencil, which also closes the tridiagonal systems.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    left_derivative, right_derivative, total_extension, BoundaryTensionProfile, Grid,
    InitialData, StateField, TensionModel,
};

/// Courant number used by [`cfl_dt`].
pub const CFL: f64 = 0.4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Imex,
    Explicit,
}

/// Stable step size for the given scheme.
pub fn cfl_dt(grid: Grid, model: &TensionModel, delta: f64, scheme: Scheme) -> f64 {
    let dx = grid.dx();
    let hyperbolic = CFL * dx / model.c2().sqrt();
    match scheme {
        Scheme::Imex => hyperbolic,
        Scheme::Explicit => hyperbolic.min(CFL * dx * dx / (2.0 * delta)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscousConfig {
    pub delta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub scheme: Scheme,
}

impl ViscousConfig {
    /// Uses the largest stable step that divides `t_final` evenly; snapshot
    /// times are rounded to the nearest step.
    pub fn new(
        grid: Grid,
        model: &TensionModel,
        delta: f64,
        t_final: f64,
        snapshot_times: Vec<f64>,
        scheme: Scheme,
    ) -> Result<Self> {
        validate_delta(delta)?;
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::invalid("t_final", format!("must be non-negative, got {t_final}")));
        }
        let dt_max = cfl_dt(grid, model, delta, scheme);
        let steps = (t_final / dt_max).ceil().max(1.0);
        let config = Self {
            delta,
            dt: if t_final > 0.0 { t_final / steps } else { dt_max },
            t_final,
            snapshot_times,
            scheme,
        };
        config.validate(grid, model)?;
        Ok(config)
    }

    /// `intervals + 1` equally spaced snapshots; the step count is a multiple
    /// of `intervals` so every snapshot lands exactly on a step.
    pub fn uniform(
        grid: Grid,
        model: &TensionModel,
        delta: f64,
        t_final: f64,
        intervals: usize,
        scheme: Scheme,
    ) -> Result<Self> {
        validate_delta(delta)?;
        if intervals == 0 {
            return Err(Error::invalid("snapshots", "need at least one interval"));
        }
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::invalid("t_final", format!("must be non-negative, got {t_final}")));
        }
        let dt_max = cfl_dt(grid, model, delta, scheme);
        let per_interval = (t_final / (intervals as f64 * dt_max)).ceil().max(1.0);
        let steps = per_interval * intervals as f64;
        let times = (0..=intervals)
            .map(|k| t_final * k as f64 / intervals as f64)
            .collect();
        let config = Self {
            delta,
            dt: if t_final > 0.0 { t_final / steps } else { dt_max },
            t_final,
            snapshot_times: times,
            scheme,
        };
        config.validate(grid, model)?;
        Ok(config)
    }

    pub fn steps(&self) -> usize {
        if self.t_final <= 0.0 {
            0
        } else {
            (self.t_final / self.dt).round() as usize
        }
    }

    pub fn validate(&self, grid: Grid, model: &TensionModel) -> Result<()> {
        validate_delta(self.delta)?;
        let limit = cfl_dt(grid, model, self.delta, self.scheme);
        if !(self.dt > 0.0 && self.dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "dt",
                format!("{} violates the stability limit {}", self.dt, limit),
            ));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| !(0.0..=self.t_final * (1.0 + 1e-12)).contains(&t))
        {
            return Err(Error::invalid("snapshot_times", format!("{t} outside [0, T]")));
        }
        Ok(())
    }
}

fn validate_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", format!("viscosity must be positive, got {delta}")));
    }
    Ok(())
}

/// Per-step diagnostics, index 0 being the initial state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: Vec<f64>,
    /// `L(t) = ∫ r dx`.
    pub extension: Vec<f64>,
    /// Running `δ ∫∫ (r_x² + p_x²)`.
    pub gradient_integral: Vec<f64>,
    /// Running `δ ∫∫ (τ'(r) r_x² + p_x²)`, the free energy actually dissipated.
    pub dissipation: Vec<f64>,
    pub r_left: Vec<f64>,
    pub p_right: Vec<f64>,
    // Rates at the most recent entry.
    #[serde(skip)]
    last_rates: (f64, f64),
}

impl StepLog {
    fn push(&mut self, state: &StateField, delta: f64, dt: f64, model: &TensionModel) {
        let g = state.gradient_norm_sq();
        let w = weighted_gradient_sq(state, model);
        let (gi, di) = match (self.t.len(), self.last_rates) {
            (0, _) => (0.0, 0.0),
            (_, (g0, w0)) => (
                self.gradient_integral.last().unwrap() + 0.5 * delta * dt * (g0 + g),
                self.dissipation.last().unwrap() + 0.5 * delta * dt * (w0 + w),
            ),
        };
        self.last_rates = (g, w);
        self.t.push(state.t);
        self.extension.push(total_extension(state));
        self.gradient_integral.push(gi);
        self.dissipation.push(di);
        self.r_left.push(state.r[0]);
        self.p_right.push(*state.p.last().unwrap());
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Builds a log from snapshots alone (trapezoid in time between them).
    pub fn from_snapshots(snapshots: &[StateField], delta: f64, model: &TensionModel) -> Self {
        let mut log = StepLog::default();
        let mut prev_t = 0.0;
        for s in snapshots {
            let dt = s.t - prev_t;
            log.push(s, delta, dt, model);
            prev_t = s.t;
        }
        log
    }
}

/// `∫ (τ'(r) r_x² + p_x²)` with `τ' r_x²` approximated by `Δτ·Δr/Δx²` per cell.
pub fn weighted_gradient_sq(state: &StateField, model: &TensionModel) -> f64 {
    let dx = state.grid.dx();
    let mut tau_prev = model.tau(state.r[0]);
    let mut sum = 0.0;
    for j in 0..state.grid.cells() {
        let tau_next = model.tau(state.r[j + 1]);
        let dr = state.r[j + 1] - state.r[j];
        let dp = state.p[j + 1] - state.p[j];
        sum += (tau_next - tau_prev) * dr + dp * dp;
        tau_prev = tau_next;
    }
    sum / dx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub delta: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub snapshots: Vec<StateField>,
    /// Step index of each snapshot within `log`.
    pub snapshot_steps: Vec<usize>,
    pub log: StepLog,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.snapshots[0].grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &StateField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &StateField {
        self.snapshots.last().unwrap()
    }

    /// `δ ∫_0^t ∫ (r_x² + p_x²)` at snapshot `k`.
    pub fn gradient_integral_at(&self, k: usize) -> f64 {
        self.log.gradient_integral[self.snapshot_steps[k]]
    }

    /// `δ ∫_0^t ∫ (τ' r_x² + p_x²)` at snapshot `k`.
    pub fn dissipation_at(&self, k: usize) -> f64 {
        self.log.dissipation[self.snapshot_steps[k]]
    }

    /// Wraps externally produced snapshots (e.g. a spectral solution).
    pub fn from_snapshots(delta: f64, snapshots: Vec<StateField>, model: &TensionModel) -> Self {
        let log = StepLog::from_snapshots(&snapshots, delta, model);
        let dt = if snapshots.len() > 1 {
            snapshots[1].t - snapshots[0].t
        } else {
            0.0
        };
        Self {
            delta,
            dt,
            scheme: Scheme::Imex,
            snapshot_steps: (0..snapshots.len()).collect(),
            snapshots,
            log,
        }
    }

    /// Snapshot records as CSV with columns `t,x,r,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x,r,p")?;
        for s in &self.snapshots {
            for j in 0..s.grid.nodes() {
                writeln!(out, "{},{},{},{}", s.t, s.grid.x(j), s.r[j], s.p[j])?;
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> TrajectoryMetadata {
        let last = self.snapshot_steps.len() - 1;
        TrajectoryMetadata {
            delta: self.delta,
            cells: self.grid().cells(),
            dt: self.dt,
            scheme: self.scheme,
            snapshots: self.snapshots.len(),
            t_final: self.last().t,
            gradient_integral: self.gradient_integral_at(last),
            dissipation: self.dissipation_at(last),
        }
    }
}

/// JSON sidecar for a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub delta: f64,
    pub cells: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub snapshots: usize,
    pub t_final: f64,
    pub gradient_integral: f64,
    pub dissipation: f64,
}

/// Imposes `p(0) = 0`, `r(1) = τ⁻¹(τ̄(t))` and the one-sided Neumann closures
/// `∂x r(0) = 0`, `∂x p(1) = 0`.
pub fn apply_boundary(
    state: &mut StateField,
    t: f64,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Result<()> {
    let m = state.grid.cells();
    state.r[m] = model.inverse(boundary.value(t))?;
    state.p[0] = 0.0;
    state.r[0] = (4.0 * state.r[1] - state.r[2]) / 3.0;
    state.p[m] = (4.0 * state.p[m - 1] - state.p[m - 2]) / 3.0;
    Ok(())
}

/// Boundary-condition defects `(p(0), r(1) − a(t), ∂x r(0), ∂x p(1))`.
pub fn boundary_defects(
    state: &StateField,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Result<[f64; 4]> {
    let m = state.grid.cells();
    let dx = state.grid.dx();
    Ok([
        state.p[0].abs(),
        (state.r[m] - model.inverse(boundary.value(state.t))?).abs(),
        left_derivative(&state.r, dx).abs(),
        right_derivative(&state.p, dx).abs(),
    ])
}

/// Tridiagonal matrix `I − θA` over the interior nodes, pre-factored.
#[derive(Clone, Debug)]
struct Factored {
    sub: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl Factored {
    fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Self {
        let n = diag.len();
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let denom = diag[i] - if i > 0 { sub[i] * prev_c } else { 0.0 };
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = if i + 1 < n { sup[i] * inv_denom[i] } else { 0.0 };
            prev_c = c_prime[i];
        }
        Self {
            sub,
            c_prime,
            inv_denom,
        }
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

/// Which closure a field uses at each end.
#[derive(Clone, Copy, Debug)]
enum Closure {
    Dirichlet,
    Neumann,
}

/// Interior diffusion stencil `A` (without the factor `δ/Δx²`) for a closure pair.
/// Returns `(sub, diag, sup)` for interior rows `1..M`.
fn diffusion_stencil(m: usize, left: Closure, right: Closure) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = m - 1;
    let mut sub = vec![1.0; n];
    let mut diag = vec![-2.0; n];
    let mut sup = vec![1.0; n];
    sub[0] = 0.0;
    sup[n - 1] = 0.0;
    // Neumann node u0 = (4u1 − u2)/3 folded into the first row.
    if let Closure::Neumann = left {
        diag[0] = -2.0 / 3.0;
        sup[0] = 2.0 / 3.0;
    }
    if let Closure::Neumann = right {
        diag[n - 1] = -2.0 / 3.0;
        sub[n - 1] = 2.0 / 3.0;
    }
    (sub, diag, sup)
}

/// Integrator bound to one grid, law, forcing and configuration.
#[derive(Clone, Debug)]
pub struct ViscousSolver {
    grid: Grid,
    model: TensionModel,
    boundary: BoundaryTensionProfile,
    config: ViscousConfig,
    stencil_r: (Vec<f64>, Vec<f64>, Vec<f64>),
    stencil_p: (Vec<f64>, Vec<f64>, Vec<f64>),
    implicit_r: Option<Factored>,
    implicit_p: Option<Factored>,
}

impl ViscousSolver {
    pub fn new(
        grid: Grid,
        model: TensionModel,
        boundary: BoundaryTensionProfile,
        config: ViscousConfig,
    ) -> Result<Self> {
        config.validate(grid, &model)?;
        let m = grid.cells();
        let stencil_r = diffusion_stencil(m, Closure::Neumann, Closure::Dirichlet);
        let stencil_p = diffusion_stencil(m, Closure::Dirichlet, Closure::Neumann);
        let factor = |st: &(Vec<f64>, Vec<f64>, Vec<f64>)| {
            let theta = 0.5 * config.dt * config.delta / (grid.dx() * grid.dx());
            Factored::new(
                st.0.iter().map(|v| -theta * v).collect(),
                st.1.iter().map(|v| 1.0 - theta * v).collect(),
                st.2.iter().map(|v| -theta * v).collect(),
            )
        };
        let (implicit_r, implicit_p) = match config.scheme {
            Scheme::Imex => (Some(factor(&stencil_r)), Some(factor(&stencil_p))),
            Scheme::Explicit => (None, None),
        };
        Ok(Self {
            grid,
            model,
            boundary,
            config,
            stencil_r,
            stencil_p,
            implicit_r,
            implicit_p,
        })
    }

    pub fn config(&self) -> &ViscousConfig {
        &self.config
    }

    fn dirichlet_r(&self, t: f64) -> Result<f64> {
        self.model.inverse(self.boundary.value(t))
    }

    /// Central flux `(p_x, τ(r)_x)` at interior nodes.
    fn flux(&self, s: &StateField, fr: &mut [f64], fp: &mut [f64]) {
        let inv = 0.5 / self.grid.dx();
        let tau: Vec<f64> = s.r.iter().map(|&r| self.model.tau(r)).collect();
        for j in 1..self.grid.cells() {
            fr[j - 1] = (s.p[j + 1] - s.p[j - 1]) * inv;
            fp[j - 1] = (tau[j + 1] - tau[j - 1]) * inv;
        }
    }

    /// `δ u_xx` at interior nodes with the boundary closures; `r_right` is the Dirichlet value.
    fn diffusion(&self, s: &StateField, r_right: f64, dr: &mut [f64], dp: &mut [f64]) {
        let k = self.config.delta / (self.grid.dx() * self.grid.dx());
        apply_stencil(&self.stencil_r, &s.r[1..self.grid.cells()], dr, k);
        apply_stencil(&self.stencil_p, &s.p[1..self.grid.cells()], dp, k);
        let n = dr.len();
        dr[n - 1] += k * r_right;
    }

    fn finish(&self, r: Vec<f64>, p: Vec<f64>, t: f64) -> Result<StateField> {
        let mut s = StateField {
            grid: self.grid,
            r,
            p,
            t,
        };
        apply_boundary(&mut s, t, &self.model, &self.boundary)?;
        if !s.is_finite() {
            return Err(Error::Unstable {
                time: t,
                detail: format!(
                    "non-finite values after step (δ = {}, dt = {}, M = {})",
                    self.config.delta,
                    self.config.dt,
                    self.grid.cells()
                ),
            });
        }
        Ok(s)
    }

    /// One time step from `state` (at time `state.t`).
    pub fn step(&self, state: &StateField) -> Result<StateField> {
        let m = self.grid.cells();
        let n = m - 1;
        let dt = self.config.dt;
        let t0 = state.t;
        let t1 = t0 + dt;
        let a0 = self.dirichlet_r(t0)?;
        let a1 = self.dirichlet_r(t1)?;

        let mut fr0 = vec![0.0; n];
        let mut fp0 = vec![0.0; n];
        let mut dr0 = vec![0.0; n];
        let mut dp0 = vec![0.0; n];
        self.flux(state, &mut fr0, &mut fp0);
        self.diffusion(state, a0, &mut dr0, &mut dp0);

        let mut fr1 = vec![0.0; n];
        let mut fp1 = vec![0.0; n];
        match (&self.implicit_r, &self.implicit_p) {
            (Some(ir), Some(ip)) => {
                let k = self.config.delta / (self.grid.dx() * self.grid.dx());
                let boundary_half = 0.5 * dt * k * a1;
                // Predictor: explicit Euler flux, trapezoidal diffusion.
                let mut rs: Vec<f64> = (0..n)
                    .map(|i| state.r[i + 1] + dt * fr0[i] + 0.5 * dt * dr0[i])
                    .collect();
                let mut ps: Vec<f64> = (0..n)
                    .map(|i| state.p[i + 1] + dt * fp0[i] + 0.5 * dt * dp0[i])
                    .collect();
                rs[n - 1] += boundary_half;
                ir.solve_in_place(&mut rs);
                ip.solve_in_place(&mut ps);
                let star = self.finish(pad(&rs, state.r[0], a1), pad(&ps, 0.0, 0.0), t1)?;
                self.flux(&star, &mut fr1, &mut fp1);
                // Corrector: Heun average of the flux.
                let mut rn: Vec<f64> = (0..n)
                    .map(|i| state.r[i + 1] + 0.5 * dt * (fr0[i] + fr1[i]) + 0.5 * dt * dr0[i])
                    .collect();
                let mut pn: Vec<f64> = (0..n)
                    .map(|i| state.p[i + 1] + 0.5 * dt * (fp0[i] + fp1[i]) + 0.5 * dt * dp0[i])
                    .collect();
                rn[n - 1] += boundary_half;
                ir.solve_in_place(&mut rn);
                ip.solve_in_place(&mut pn);
                self.finish(pad(&rn, 0.0, a1), pad(&pn, 0.0, 0.0), t1)
            }
            _ => {
                let rs: Vec<f64> = (0..n)
                    .map(|i| state.r[i + 1] + dt * (fr0[i] + dr0[i]))
                    .collect();
                let ps: Vec<f64> = (0..n)
                    .map(|i| state.p[i + 1] + dt * (fp0[i] + dp0[i]))
                    .collect();
                let star = self.finish(pad(&rs, 0.0, a1), pad(&ps, 0.0, 0.0), t1)?;
                let mut dr1 = vec![0.0; n];
                let mut dp1 = vec![0.0; n];
                self.flux(&star, &mut fr1, &mut fp1);
                self.diffusion(&star, a1, &mut dr1, &mut dp1);
                let rn: Vec<f64> = (0..n)
                    .map(|i| state.r[i + 1] + 0.5 * dt * (fr0[i] + dr0[i] + fr1[i] + dr1[i]))
                    .collect();
                let pn: Vec<f64> = (0..n)
                    .map(|i| state.p[i + 1] + 0.5 * dt * (fp0[i] + dp0[i] + fp1[i] + dp1[i]))
                    .collect();
                self.finish(pad(&rn, 0.0, a1), pad(&pn, 0.0, 0.0), t1)
            }
        }
    }

    /// Integrates to `t_final`, recording snapshots and the step log.
    pub fn solve(&self, init: &StateField) -> Result<Trajectory> {
        let steps = self.config.steps();
        let dt = self.config.dt;
        let mut wanted: Vec<usize> = self
            .config
            .snapshot_times
            .iter()
            .map(|t| ((t / dt).round() as usize).min(steps))
            .collect();
        wanted.push(0);
        wanted.sort_unstable();
        wanted.dedup();

        let mut state = init.clone();
        state.t = 0.0;
        let mut log = StepLog::default();
        log.push(&state, self.config.delta, dt, &self.model);
        let mut snapshots = vec![state.clone()];
        let mut snapshot_steps = vec![0];
        let mut next = 1;
        for n in 1..=steps {
            let mut advanced = self.step(&state)?;
            // Keep the clock on the exact step grid.
            advanced.t = n as f64 * dt;
            state = advanced;
            log.push(&state, self.config.delta, dt, &self.model);
            if next < wanted.len() && wanted[next] == n {
                snapshots.push(state.clone());
                snapshot_steps.push(n);
                next += 1;
            }
        }
        Ok(Trajectory {
            delta: self.config.delta,
            dt,
            scheme: self.config.scheme,
            snapshots,
            snapshot_steps,
            log,
        })
    }
}

fn apply_stencil(st: &(Vec<f64>, Vec<f64>, Vec<f64>), u: &[f64], out: &mut [f64], k: f64) {
    let n = u.len();
    for i in 0..n {
        let mut v = st.1[i] * u[i];
        if i > 0 {
            v += st.0[i] * u[i - 1];
        }
        if i + 1 < n {
            v += st.2[i] * u[i + 1];
        }
        out[i] = k * v;
    }
}

/// Interior values with placeholder boundary nodes (overwritten by [`apply_boundary`]).
fn pad(interior: &[f64], left: f64, right: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(left);
    v.extend_from_slice(interior);
    v.push(right);
    v
}

/// Single step without keeping a solver around.
pub fn step(
    state: &StateField,
    config: &ViscousConfig,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Result<StateField> {
    ViscousSolver::new(state.grid, *model, *boundary, config.clone())?.step(state)
}

/// Integrates the viscous system from prepared initial data.
pub fn solve(
    init: &InitialData,
    config: &ViscousConfig,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Result<Trajectory> {
    ViscousSolver::new(init.state.grid, *model, *boundary, config.clone())?.solve(&init.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_linear_tension, make_softplus_tension, mollify_initial_data};
    use std::f64::consts::PI;

    fn softplus() -> TensionModel {
        make_softplus_tension(1.0, 2.0).unwrap()
    }

    #[test]
    fn cfl_examples() {
        let g = Grid::new(100).unwrap();
        let m = softplus();
        let imex = cfl_dt(g, &m, 0.1, Scheme::Imex);
        assert!((imex - 0.4 * 0.01 / 2f64.sqrt()).abs() < 1e-15);
        let explicit = cfl_dt(g, &m, 0.1, Scheme::Explicit);
        assert!((explicit - 0.4 * 1e-4 / 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let g = Grid::new(50).unwrap();
        let m = softplus();
        assert!(ViscousConfig::new(g, &m, 0.0, 1.0, vec![], Scheme::Imex).is_err());
        assert!(ViscousConfig::new(g, &m, 0.1, -1.0, vec![], Scheme::Imex).is_err());
        assert!(ViscousConfig::new(g, &m, 0.1, 1.0, vec![2.0], Scheme::Imex).is_err());
        let mut c = ViscousConfig::new(g, &m, 0.1, 1.0, vec![], Scheme::Explicit).unwrap();
        c.dt *= 2.0;
        assert!(c.validate(g, &m).is_err());
    }

    #[test]
    fn equilibrium_is_stationary() {
        let g = Grid::new(40).unwrap();
        let m = softplus();
        let tension = 0.7;
        let r_star = m.inverse(tension).unwrap();
        let b = BoundaryTensionProfile::constant(tension);
        for scheme in [Scheme::Imex, Scheme::Explicit] {
            let cfg = ViscousConfig::uniform(g, &m, 0.05, 0.5, 5, scheme).unwrap();
            let init = StateField::constant(g, r_star, 0.0);
            let traj = ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap();
            for s in &traj.snapshots {
                for j in 0..g.nodes() {
                    assert!((s.r[j] - r_star).abs() < 1e-13);
                    assert!(s.p[j].abs() < 1e-13);
                }
            }
            assert!(traj.log.dissipation.last().unwrap().abs() < 1e-20);
        }
    }

    #[test]
    fn snapshots_land_on_uniform_times() {
        let g = Grid::new(32).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let cfg = ViscousConfig::uniform(g, &m, 0.1, 1.0, 4, Scheme::Imex).unwrap();
        let init = StateField::zeros(g);
        let traj = ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap();
        let times = traj.times();
        assert_eq!(times.len(), 5);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.25 * k as f64).abs() < 1e-12);
        }
        assert_eq!(*traj.snapshot_steps.last().unwrap(), traj.log.len() - 1);
    }

    #[test]
    fn boundary_conditions_hold_after_each_step() {
        let g = Grid::new(64).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 1.2, 0.3).unwrap();
        let raw_r = g.sample(|x| 0.2 * (PI * x).sin());
        let raw_p = g.sample(|x| 0.1 * x);
        let init = mollify_initial_data(g, &raw_r, &raw_p, &m, &b, 1.0 / 16.0).unwrap();
        let cfg = ViscousConfig::uniform(g, &m, 0.05, 0.6, 6, Scheme::Imex).unwrap();
        let traj = solve(&init, &cfg, &m, &b).unwrap();
        for s in &traj.snapshots[1..] {
            let d = boundary_defects(s, &m, &b).unwrap();
            assert!(d[0] == 0.0 && d[1] < 1e-12, "{d:?}");
            assert!(d[2] < 1e-9 && d[3] < 1e-9, "{d:?}");
        }
    }

    // Linear law with zero forcing: every Fourier mode of the Neumann/Dirichlet
    // basis decays at its own rate, so the L² energy is non-increasing.
    #[test]
    fn linear_energy_decays() {
        let g = Grid::new(64).unwrap();
        let m = make_linear_tension(1.5).unwrap();
        let b = BoundaryTensionProfile::constant(0.0);
        let r = g.sample(|x| (PI * x / 2.0).cos());
        let p = g.sample(|x| 0.5 * (PI * x / 2.0).sin());
        let init = StateField::new(g, r, p, 0.0).unwrap();
        let cfg = ViscousConfig::uniform(g, &m, 0.02, 1.0, 10, Scheme::Imex).unwrap();
        let traj = ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap();
        let energy: Vec<f64> = traj
            .snapshots
            .iter()
            .map(|s| {
                let w: Vec<f64> = (0..g.nodes()).map(|j| 1.5 * s.r[j] * s.r[j] + s.p[j] * s.p[j]).collect();
                g.integrate(&w)
            })
            .collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6), "{energy:?}");
        }
    }

    #[test]
    fn schemes_agree() {
        let g = Grid::new(50).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let init = StateField::zeros(g);
        let run = |scheme| {
            let cfg = ViscousConfig::uniform(g, &m, 0.05, 0.5, 1, scheme).unwrap();
            ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap()
        };
        let a = run(Scheme::Imex);
        let e = run(Scheme::Explicit);
        let diff = a
            .last()
            .r
            .iter()
            .zip(&e.last().r)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-3, "{diff}");
    }

    #[test]
    fn time_refinement_is_second_order() {
        let g = Grid::new(40).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let init = StateField::zeros(g);
        let run = |dt: f64| {
            let mut cfg = ViscousConfig::uniform(g, &m, 0.05, 0.4, 1, Scheme::Imex).unwrap();
            cfg.dt = dt;
            ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap().last().clone()
        };
        let dist = |a: &StateField, b: &StateField| {
            a.r.iter().zip(&b.r).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let base = 0.4 / 80.0;
        let u1 = run(base);
        let u2 = run(base / 2.0);
        let u4 = run(base / 4.0);
        let ratio = dist(&u1, &u2) / dist(&u2, &u4);
        assert!(ratio > 3.0, "{ratio}");
    }

    #[test]
    fn detects_blow_up() {
        let g = Grid::new(20).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::constant(0.0);
        let mut cfg = ViscousConfig::uniform(g, &m, 0.1, 1.0, 1, Scheme::Explicit).unwrap();
        cfg.dt *= 50.0;
        cfg.t_final = 5000.0 * cfg.dt;
        let s = ViscousSolver {
            grid: g,
            model: m,
            boundary: b,
            stencil_r: diffusion_stencil(20, Closure::Neumann, Closure::Dirichlet),
            stencil_p: diffusion_stencil(20, Closure::Dirichlet, Closure::Neumann),
            implicit_r: None,
            implicit_p: None,
            config: cfg,
        };
        let r = g.sample(|x| if x < 0.5 { 1.0 } else { -1.0 });
        let init = StateField::new(g, r, vec![0.0; 21], 0.0).unwrap();
        let out = s.solve(&init);
        assert!(matches!(out, Err(Error::Unstable { .. })), "{:?}", out.map(|t| t.last().r.clone()));
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(8).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::constant(0.0);
        let cfg = ViscousConfig::uniform(g, &m, 0.1, 0.1, 2, Scheme::Imex).unwrap();
        let traj = ViscousSolver::new(g, m, b, cfg)
            .unwrap()
            .solve(&StateField::zeros(g))
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,x,r,p"));
        assert_eq!(text.lines().count(), 1 + 3 * 9);
    }
}
