//! Constitutive law, boundary forcing, grids and state fields.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{trapezoid, GaussLegendre};

const PI2_OVER_12: f64 = PI * PI / 12.0;

/// Constitutive tension law `τ(r)`.
///
/// `Softplus` is the nonlinear family used for experiments; it satisfies
/// `c1 ≤ τ' ≤ c2`, `τ'' > 0` and square-integrable `τ''`, `τ'''`.
/// `Linear` has `τ'' ≡ 0` and only serves as an oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum TensionModel {
    Linear { stiffness: f64 },
    Softplus { c1: f64, c2: f64 },
}

/// `τ(r) = c1·r + (c2 − c1)·(softplus(r) − softplus(0))`.
pub fn make_softplus_tension(c1: f64, c2: f64) -> Result<TensionModel> {
    if !(c1.is_finite() && c1 > 0.0) {
        return Err(Error::invalid("c1", format!("must be positive, got {c1}")));
    }
    if !(c2.is_finite() && c2 > c1) {
        return Err(Error::invalid("c2", format!("must exceed c1 = {c1}, got {c2}")));
    }
    Ok(TensionModel::Softplus { c1, c2 })
}

/// `τ(r) = c·r`.
pub fn make_linear_tension(stiffness: f64) -> Result<TensionModel> {
    if !(stiffness.is_finite() && stiffness > 0.0) {
        return Err(Error::invalid("stiffness", format!("must be positive, got {stiffness}")));
    }
    Ok(TensionModel::Linear { stiffness })
}

fn softplus(r: f64) -> f64 {
    r.max(0.0) + (-r.abs()).exp().ln_1p()
}

fn sigmoid(r: f64) -> f64 {
    if r >= 0.0 {
        1.0 / (1.0 + (-r).exp())
    } else {
        let e = r.exp();
        e / (1.0 + e)
    }
}

/// `∫_{-∞}^{-a} softplus(u) du` for `a ≥ 0`.
fn softplus_tail(a: f64) -> f64 {
    debug_assert!(a >= 0.0);
    if a < 1.0 {
        let gl = GaussLegendre::new(16);
        PI2_OVER_12 - gl.integrate(-a, 0.0, softplus)
    } else {
        // Alternating dilogarithm series, terms bounded by e^{-k}.
        let x = (-a).exp();
        let mut xk = x;
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..200 {
            let term = xk / (k * k) as f64;
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
            xk *= x;
        }
        sum
    }
}

/// `∫_0^r (softplus(s) − ln 2) ds`, non-negative for every `r`.
fn softplus_excess_integral(r: f64) -> f64 {
    let s = if r >= 0.0 {
        0.5 * r * r + PI2_OVER_12 - softplus_tail(r)
    } else {
        softplus_tail(-r) - PI2_OVER_12
    };
    s - r * LN_2
}

impl TensionModel {
    /// Lower stiffness bound.
    pub fn c1(&self) -> f64 {
        match *self {
            TensionModel::Linear { stiffness } => stiffness,
            TensionModel::Softplus { c1, .. } => c1,
        }
    }

    /// Upper stiffness bound.
    pub fn c2(&self) -> f64 {
        match *self {
            TensionModel::Linear { stiffness } => stiffness,
            TensionModel::Softplus { c2, .. } => c2,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, TensionModel::Linear { .. })
    }

    pub fn tau(&self, r: f64) -> f64 {
        match *self {
            TensionModel::Linear { stiffness } => stiffness * r,
            TensionModel::Softplus { c1, c2 } => c1 * r + (c2 - c1) * (softplus(r) - LN_2),
        }
    }

    pub fn dtau(&self, r: f64) -> f64 {
        match *self {
            TensionModel::Linear { stiffness } => stiffness,
            TensionModel::Softplus { c1, c2 } => c1 + (c2 - c1) * sigmoid(r),
        }
    }

    pub fn d2tau(&self, r: f64) -> f64 {
        match *self {
            TensionModel::Linear { .. } => 0.0,
            TensionModel::Softplus { c1, c2 } => {
                let s = sigmoid(r);
                (c2 - c1) * s * (1.0 - s)
            }
        }
    }

    pub fn d3tau(&self, r: f64) -> f64 {
        match *self {
            TensionModel::Linear { .. } => 0.0,
            TensionModel::Softplus { c1, c2 } => {
                let s = sigmoid(r);
                (c2 - c1) * s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }

    /// Free-energy primitive `F` with `F' = τ` and `F(0) = 0`.
    pub fn free_energy(&self, r: f64) -> f64 {
        match *self {
            TensionModel::Linear { stiffness } => 0.5 * stiffness * r * r,
            TensionModel::Softplus { c1, c2 } => {
                0.5 * c1 * r * r + (c2 - c1) * softplus_excess_integral(r)
            }
        }
    }

    /// `sup |τ''|` (attained at the sigmoid midpoint for the softplus law).
    pub fn sup_d2tau(&self) -> f64 {
        match *self {
            TensionModel::Linear { .. } => 0.0,
            TensionModel::Softplus { c1, c2 } => 0.25 * (c2 - c1),
        }
    }

    /// Solves `τ(r) = s`.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        inverse_tension(self, s)
    }
}

/// Root of `τ(r) = s`, unique because `τ' ≥ c1 > 0`.
///
/// Newton iteration safeguarded by the bracket `[s/c2, s/c1]` (or its mirror).
pub fn inverse_tension(model: &TensionModel, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::InverseNotConverged(s));
    }
    if let TensionModel::Linear { stiffness } = *model {
        return Ok(s / stiffness);
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let (a, b) = (s / model.c1(), s / model.c2());
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    // Widen slightly so rounding in τ cannot exclude the root.
    let pad = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
    lo -= pad;
    hi += pad;
    let tol = 1e-14 * s.abs().max(1.0);
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = model.tau(r) - s;
        if f.abs() <= tol {
            return Ok(r);
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let newton = r - f / model.dtau(r);
        r = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + r.abs()) {
            return Ok(r);
        }
    }
    Err(Error::InverseNotConverged(s))
}

/// Applied boundary tension `τ̄(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum BoundaryTensionProfile {
    Constant {
        tension: f64,
    },
    /// `τ̄(t) = τ0 + (τ1 − τ0)·s(t/T⋆)` with the C² smoothstep `s`, frozen after `T⋆`.
    Ramp {
        tau_start: f64,
        tau_end: f64,
        t_star: f64,
    },
}

fn smoothstep(xi: f64) -> f64 {
    let x = xi.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

fn smoothstep_derivative(xi: f64) -> f64 {
    if !(0.0..=1.0).contains(&xi) {
        return 0.0;
    }
    30.0 * xi * xi * (1.0 - xi) * (1.0 - xi)
}

impl BoundaryTensionProfile {
    pub fn constant(tension: f64) -> Self {
        BoundaryTensionProfile::Constant { tension }
    }

    pub fn ramp(tau_start: f64, tau_end: f64, t_star: f64) -> Result<Self> {
        if !(t_star.is_finite() && t_star > 0.0) {
            return Err(Error::invalid("t_star", format!("must be positive, got {t_star}")));
        }
        if !(tau_start.is_finite() && tau_end.is_finite()) {
            return Err(Error::invalid("tau_start/tau_end", "must be finite"));
        }
        Ok(BoundaryTensionProfile::Ramp {
            tau_start,
            tau_end,
            t_star,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            BoundaryTensionProfile::Constant { tension } => tension,
            BoundaryTensionProfile::Ramp {
                tau_start,
                tau_end,
                t_star,
            } => tau_start + (tau_end - tau_start) * smoothstep(t / t_star),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            BoundaryTensionProfile::Constant { .. } => 0.0,
            BoundaryTensionProfile::Ramp {
                tau_start,
                tau_end,
                t_star,
            } => (tau_end - tau_start) * smoothstep_derivative(t / t_star) / t_star,
        }
    }

    /// Freeze time `T⋆`; zero for a constant protocol.
    pub fn t_star(&self) -> f64 {
        match *self {
            BoundaryTensionProfile::Constant { .. } => 0.0,
            BoundaryTensionProfile::Ramp { t_star, .. } => t_star,
        }
    }

    /// `C_τ̄ = sup_t (|τ̄(t)| + |τ̄'(t)|)`, evaluated on a dense sample of `[0, T⋆]`.
    pub fn c_bar(&self) -> f64 {
        match *self {
            BoundaryTensionProfile::Constant { tension } => tension.abs(),
            BoundaryTensionProfile::Ramp { t_star, .. } => {
                let n = 20_000;
                (0..=n)
                    .map(|k| {
                        let t = t_star * k as f64 / n as f64;
                        self.value(t).abs() + self.derivative(t).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Uniform grid of `[0, 1]` with `cells + 1` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    cells: usize,
}

impl Grid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::invalid("cells", format!("need at least 4 cells, got {cells}")));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.cells as f64
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..=self.cells).map(|j| self.x(j)).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..=self.cells).map(|j| f(self.x(j))).collect()
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes());
        trapezoid(values, self.dx())
    }
}

/// Strain `r` and momentum `p` sampled on a grid at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateField {
    pub grid: Grid,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl StateField {
    pub fn new(grid: Grid, r: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if r.len() != grid.nodes() || p.len() != grid.nodes() {
            return Err(Error::invalid(
                "state",
                format!(
                    "expected {} nodes, got r: {}, p: {}",
                    grid.nodes(),
                    r.len(),
                    p.len()
                ),
            ));
        }
        let state = Self { grid, r, p, t };
        if !state.is_finite() {
            return Err(Error::invalid("state", "non-finite entries"));
        }
        Ok(state)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            r: vec![0.0; grid.nodes()],
            p: vec![0.0; grid.nodes()],
            t: 0.0,
        }
    }

    pub fn constant(grid: Grid, r: f64, p: f64) -> Self {
        Self {
            grid,
            r: vec![r; grid.nodes()],
            p: vec![p; grid.nodes()],
            t: 0.0,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// `‖r‖² + ‖p‖²` in `L²(0, 1)`.
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.grid.nodes();
        crate::quadrature::trapezoid_with(n, self.grid.dx(), |j| {
            self.r[j] * self.r[j] + self.p[j] * self.p[j]
        })
    }

    /// `‖r_x‖² + ‖p_x‖²` from cell differences.
    pub fn gradient_norm_sq(&self) -> f64 {
        let dx = self.grid.dx();
        let sum: f64 = self
            .r
            .windows(2)
            .zip(self.p.windows(2))
            .map(|(r, p)| {
                let (dr, dp) = (r[1] - r[0], p[1] - p[0]);
                dr * dr + dp * dp
            })
            .sum();
        sum / dx
    }
}

/// Eulerian position `q(x_j) = ∫_0^{x_j} r`, by the cumulative trapezoid rule.
pub fn eulerian_position(state: &StateField, node: usize) -> f64 {
    let dx = state.grid.dx();
    let node = node.min(state.grid.cells());
    (0..node)
        .map(|j| 0.5 * dx * (state.r[j] + state.r[j + 1]))
        .sum()
}

/// Total extension `L(t) = q(t, 1)`.
pub fn total_extension(state: &StateField) -> f64 {
    state.grid.integrate(&state.r)
}

/// Second-order one-sided derivative at the left node.
pub fn left_derivative(u: &[f64], dx: f64) -> f64 {
    (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
}

/// Second-order one-sided derivative at the right node.
pub fn right_derivative(u: &[f64], dx: f64) -> f64 {
    let m = u.len() - 1;
    (3.0 * u[m] - 4.0 * u[m - 1] + u[m - 2]) / (2.0 * dx)
}

/// Mollified initial data compatible with the viscous boundary conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub state: StateField,
    pub raw_r: Vec<f64>,
    pub raw_p: Vec<f64>,
    /// Mollifier support radius.
    pub width: f64,
}

impl InitialData {
    /// Residuals of the four compatibility conditions:
    /// `p(0)`, `r(1) − τ⁻¹(τ̄(0))`, `∂x p(1)`, `∂x r(0)`.
    pub fn compatibility_defects(
        &self,
        model: &TensionModel,
        boundary: &BoundaryTensionProfile,
    ) -> Result<[f64; 4]> {
        let s = &self.state;
        let m = s.grid.cells();
        let dx = s.grid.dx();
        let a0 = model.inverse(boundary.value(0.0))?;
        Ok([
            s.p[0].abs(),
            (s.r[m] - a0).abs(),
            right_derivative(&s.p, dx).abs(),
            left_derivative(&s.r, dx).abs(),
        ])
    }

    /// `‖r0‖ + ‖p0‖ + √δ‖∂x r0‖ + √δ‖∂x p0‖`, the quantity that must stay bounded over a sweep.
    pub fn regularity_norm(&self, delta: f64) -> f64 {
        let s = &self.state;
        let dx = s.grid.dx();
        let l2 = |u: &[f64]| s.grid.integrate(&u.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        let grad = |u: &[f64]| {
            (u.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / dx).sqrt()
        };
        let sd = delta.sqrt();
        l2(&s.r) + l2(&s.p) + sd * grad(&s.r) + sd * grad(&s.p)
    }

    /// `L²` distance between mollified and raw data, `(‖Δr‖² + ‖Δp‖²)^{1/2}`.
    pub fn distance_to_raw(&self) -> f64 {
        let s = &self.state;
        let d: Vec<f64> = (0..s.grid.nodes())
            .map(|j| {
                let (a, b) = (s.r[j] - self.raw_r[j], s.p[j] - self.raw_p[j]);
                a * a + b * b
            })
            .collect();
        s.grid.integrate(&d).sqrt()
    }
}

/// Reflection rule used to extend a profile past the two walls.
#[derive(Clone, Copy)]
enum Reflection {
    /// `u(-x) = u(x)` (Neumann wall).
    Even,
    /// `u(-x) = 2c - u(x)` (Dirichlet wall with value `c`).
    Odd(f64),
}

impl Reflection {
    fn apply(self, v: f64) -> f64 {
        match self {
            Reflection::Even => v,
            Reflection::Odd(c) => 2.0 * c - v,
        }
    }
}

fn extended_value(u: &[f64], j: i64, left: Reflection, right: Reflection) -> f64 {
    let m = (u.len() - 1) as i64;
    if j < 0 {
        left.apply(extended_value(u, -j, left, right))
    } else if j > m {
        right.apply(extended_value(u, 2 * m - j, left, right))
    } else {
        u[j as usize]
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn mollify(u: &[f64], dx: f64, width: f64, left: Reflection, right: Reflection) -> Vec<f64> {
    let reach = (width / dx).ceil() as i64;
    let weights: Vec<f64> = (-reach..=reach).map(|k| bump(k as f64 * dx / width)).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || reach == 0 {
        return u.to_vec();
    }
    (0..u.len() as i64)
        .map(|j| {
            (-reach..=reach)
                .zip(&weights)
                .map(|(k, w)| w * extended_value(u, j + k, left, right))
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Smooths raw profiles with a compact bump of radius `width` and corrects the
/// boundary nodes so that `p(0) = 0`, `r(1) = τ⁻¹(τ̄(0))`, and the one-sided
/// derivatives `∂x p(1)`, `∂x r(0)` vanish exactly.
///
/// Outside `[0, 1]` the raw data are continued by the reflections the boundary
/// conditions suggest (even/odd for `r` at 0/1, odd/even for `p`), so already
/// compatible data are left essentially untouched.
pub fn mollify_initial_data(
    grid: Grid,
    raw_r: &[f64],
    raw_p: &[f64],
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
    width: f64,
) -> Result<InitialData> {
    if raw_r.len() != grid.nodes() || raw_p.len() != grid.nodes() {
        return Err(Error::invalid("initial profile", "length must equal grid nodes"));
    }
    if !(width.is_finite() && (0.0..=1.0).contains(&width)) {
        return Err(Error::invalid("mollifier_width", format!("must lie in [0, 1], got {width}")));
    }
    let a0 = model.inverse(boundary.value(0.0))?;
    let dx = grid.dx();
    let mut r = mollify(raw_r, dx, width, Reflection::Even, Reflection::Odd(a0));
    let mut p = mollify(raw_p, dx, width, Reflection::Odd(0.0), Reflection::Even);
    let m = grid.cells();
    p[0] = 0.0;
    r[m] = a0;
    r[0] = (4.0 * r[1] - r[2]) / 3.0;
    p[m] = (4.0 * p[m - 1] - p[m - 2]) / 3.0;
    let state = StateField::new(grid, r, p, 0.0)?;
    Ok(InitialData {
        state,
        raw_r: raw_r.to_vec(),
        raw_p: raw_p.to_vec(),
        width,
    })
}
