//! Lax entropy–entropy-flux pairs `η_r + q_p = 0`, `τ'(r) η_p + q_r = 0`.
//!
//! Bounded pairs are built in Riemann coordinates `w₁ = p + z(r)`,
//! `w₂ = p − z(r)` with `z' = λ = √τ'`. Writing
//! `η = ½λ^{−1/2}(H + Q)` and `q = ½λ^{1/2}(H − Q)` turns the Lax system into
//! `H_{w₁} = a Q`, `Q_{w₂} = −a H` with `a = τ''/(8τ'^{3/2})` evaluated at
//! `r = z⁻¹((w₁ − w₂)/2)`. With Goursat data `H(w̄₁, ·) = g`, `Q(·, w̄₂) = 0`
//! the solution is the Neumann series `H = Σ 𝒜ⁿ g` of the Volterra operator
//! `(𝒜f)(w₁, w₂) = −∫_{w̄₁}^{w₁} ∫_{w̄₂}^{w₂} a(v − w₂) a(v − u) f(v, u) du dv`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{left_derivative, right_derivative, TensionModel};
use crate::quadrature::GaussLegendre;
use crate::viscous_solver::Trajectory;

/// Default relative truncation of the Neumann series.
pub const TOL_SERIES: f64 = 1e-10;
/// Maximum number of series terms.
pub const MAX_DEPTH: usize = 64;
/// Relative margin added around visited states.
pub const MARGIN: f64 = 0.2;

/// `z(r) = ∫₀^r √τ'`, tabulated and extended by quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannCoords {
    pub model: TensionModel,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    /// `λ = √τ'` at the table nodes.
    pub slope: Vec<f64>,
}

fn speed(model: &TensionModel, r: f64) -> f64 {
    model.dtau(r).sqrt()
}

/// Tabulates `z` on `resolution + 1` points of `r_range` (widened to contain 0).
pub fn riemann_z(model: &TensionModel, r_range: (f64, f64), resolution: usize) -> Result<RiemannCoords> {
    let (lo, hi) = (r_range.0.min(0.0), r_range.1.max(0.0));
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || resolution < 2 {
        return Err(Error::invalid("r_range", format!("bad range {r_range:?} / {resolution}")));
    }
    let gl = GaussLegendre::new(8);
    let h = (hi - lo) / resolution as f64;
    let r: Vec<f64> = (0..=resolution).map(|k| lo + k as f64 * h).collect();
    // Integrate outward from the node nearest to 0, then shift so z(0) = 0.
    let mut z = vec![0.0; r.len()];
    for k in 1..r.len() {
        z[k] = z[k - 1] + gl.integrate(r[k - 1], r[k], |s| speed(model, s));
    }
    let k0 = r.partition_point(|&v| v < 0.0).min(resolution);
    let k0 = if k0 > 0 && r[k0] > 0.0 { k0 - 1 } else { k0 };
    let z0 = z[k0] + gl.integrate(r[k0], 0.0, |s| speed(model, s));
    for v in &mut z {
        *v -= z0;
    }
    let slope = r.iter().map(|&s| speed(model, s)).collect();
    Ok(RiemannCoords {
        model: *model,
        r,
        z,
        slope,
    })
}

impl RiemannCoords {
    fn gl() -> GaussLegendre {
        GaussLegendre::new(8)
    }

    /// `z(r)`: Hermite interpolation inside the table, quadrature outside.
    pub fn z(&self, r: f64) -> f64 {
        let n = self.r.len() - 1;
        if r < self.r[0] {
            return self.z[0] - integrate_speed(&self.model, r, self.r[0]);
        }
        if r > self.r[n] {
            return self.z[n] + integrate_speed(&self.model, self.r[n], r);
        }
        let h = self.r[1] - self.r[0];
        let k = (((r - self.r[0]) / h) as usize).min(n - 1);
        let s = (r - self.r[k]) / h;
        let (h00, h10, h01, h11) = hermite(s);
        h00 * self.z[k] + h10 * h * self.slope[k] + h01 * self.z[k + 1] + h11 * h * self.slope[k + 1]
    }

    pub fn speed(&self, r: f64) -> f64 {
        speed(&self.model, r)
    }

    /// `r(z)` by safeguarded Newton on the bracket implied by `√c1 ≤ z' ≤ √c2`.
    pub fn r_of_z(&self, z: f64) -> f64 {
        let (s1, s2) = (self.model.c1().sqrt(), self.model.c2().sqrt());
        let (mut lo, mut hi) = if z >= 0.0 { (z / s2, z / s1) } else { (z / s1, z / s2) };
        if lo == hi {
            return lo;
        }
        let mut r = 0.5 * (lo + hi);
        for _ in 0..100 {
            let f = self.z(r) - z;
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let mut next = r - f / self.speed(r);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 1e-15 * (1.0 + r.abs()) {
                return next;
            }
            r = next;
        }
        r
    }
}

fn integrate_speed(model: &TensionModel, a: f64, b: f64) -> f64 {
    let gl = RiemannCoords::gl();
    let panels = ((b - a).abs().ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| gl.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, |s| speed(model, s)))
        .sum()
}

fn hermite(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// `a(w₁ − w₂) = τ''(r)/(8 τ'(r)^{3/2})` with `r = z⁻¹((w₁ − w₂)/2)`.
pub fn coeff_a(model: &TensionModel, coords: &RiemannCoords, diff: f64) -> f64 {
    if model.is_linear() {
        return 0.0;
    }
    let r = coords.r_of_z(0.5 * diff);
    model.d2tau(r) / (8.0 * model.dtau(r).powf(1.5))
}

/// Goursat datum `g(w₂)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum GoursatDatum {
    /// `height·(1 − s²)³` with `s = (w − center)/half_width`; twice differentiable.
    Bump { center: f64, half_width: f64, height: f64 },
    /// `height·(1 − |s|)₊`; only continuous.
    Hat { center: f64, half_width: f64, height: f64 },
}

impl GoursatDatum {
    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            GoursatDatum::Bump {
                center,
                half_width,
                height,
            } => {
                let s = (w - center) / half_width;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let u = 1.0 - s * s;
                    height * u * u * u
                }
            }
            GoursatDatum::Hat {
                center,
                half_width,
                height,
            } => height * (1.0 - ((w - center) / half_width).abs()).max(0.0),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            GoursatDatum::Bump {
                center, half_width, ..
            }
            | GoursatDatum::Hat {
                center, half_width, ..
            } => (center - half_width, center + half_width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoursatProblem {
    /// Lower-left corner `(w̄₁, w̄₂)`.
    pub corner: (f64, f64),
    /// Side lengths in `w₁` and `w₂`.
    pub extent: (f64, f64),
    /// Grid intervals along the longer side; spacing is equal in both directions.
    pub resolution: usize,
    pub datum: GoursatDatum,
}

impl GoursatProblem {
    /// Rectangle covering `states` (pairs `(r, p)`) with [`MARGIN`] on each side and
    /// a smooth bump datum centred in the `w₂` range.
    pub fn covering(coords: &RiemannCoords, states: &[(f64, f64)], resolution: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("states", "need at least one state"));
        }
        let (mut lo1, mut hi1, mut lo2, mut hi2) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(r, p) in states {
            let z = coords.z(r);
            lo1 = lo1.min(p + z);
            hi1 = hi1.max(p + z);
            lo2 = lo2.min(p - z);
            hi2 = hi2.max(p - z);
        }
        let w1 = (hi1 - lo1).max(0.5);
        let w2 = (hi2 - lo2).max(0.5);
        let corner = (lo1 - MARGIN * w1, lo2 - MARGIN * w2);
        let extent = ((1.0 + 2.0 * MARGIN) * w1, (1.0 + 2.0 * MARGIN) * w2);
        let datum = GoursatDatum::Bump {
            center: corner.1 + 0.5 * extent.1,
            half_width: 0.3 * extent.1,
            height: 1.0,
        };
        Self::new(corner, extent, resolution, datum)
    }

    pub fn new(corner: (f64, f64), extent: (f64, f64), resolution: usize, datum: GoursatDatum) -> Result<Self> {
        if !(extent.0 > 0.0 && extent.1 > 0.0) {
            return Err(Error::invalid("extent", "rectangle sides must be positive"));
        }
        if resolution < 8 {
            return Err(Error::invalid("resolution", "need at least 8 intervals"));
        }
        let (a, b) = datum.support();
        if a <= corner.1 || b >= corner.1 + extent.1 {
            return Err(Error::invalid("datum", "support must lie inside the rectangle"));
        }
        Ok(Self {
            corner,
            extent,
            resolution,
            datum,
        })
    }

    pub fn with_datum(mut self, datum: GoursatDatum) -> Result<Self> {
        self = Self::new(self.corner, self.extent, self.resolution, datum)?;
        Ok(self)
    }

    pub fn with_resolution(self, resolution: usize) -> Result<Self> {
        Self::new(self.corner, self.extent, resolution, self.datum)
    }

    pub fn spacing(&self) -> f64 {
        self.extent.0.max(self.extent.1) / self.resolution as f64
    }

    /// Node counts `(n₁, n₂)`.
    pub fn shape(&self) -> (usize, usize) {
        let h = self.spacing();
        (
            (self.extent.0 / h).round() as usize + 1,
            (self.extent.1 / h).round() as usize + 1,
        )
    }

    /// Hat datum with the same support, used for less regular pairs.
    pub fn hat_datum(&self, height: f64) -> GoursatDatum {
        let (a, b) = self.datum.support();
        GoursatDatum::Hat {
            center: 0.5 * (a + b),
            half_width: 0.5 * (b - a),
            height,
        }
    }
}

/// Values and `(r, p)` derivatives of an entropy pair at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyJet {
    pub eta: f64,
    pub q: f64,
    pub eta_r: f64,
    pub eta_p: f64,
    pub eta_rr: f64,
    pub eta_rp: f64,
    pub eta_pp: f64,
    pub q_r: f64,
    pub q_p: f64,
}

pub trait EntropyFlux: Sync {
    fn jet(&self, r: f64, p: f64) -> Result<EntropyJet>;
    /// Whether `η` is convex in `(r, p)`.
    fn is_convex(&self) -> bool {
        false
    }
}

/// `η = p`, `q = −τ(r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumPair {
    pub model: TensionModel,
}

impl EntropyFlux for MomentumPair {
    fn jet(&self, r: f64, p: f64) -> Result<EntropyJet> {
        Ok(EntropyJet {
            eta: p,
            q: -self.model.tau(r),
            eta_p: 1.0,
            q_r: -self.model.dtau(r),
            ..Default::default()
        })
    }
}

/// `η = p²/2 + F(r)`, `q = −p τ(r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergyPair {
    pub model: TensionModel,
}

impl EntropyFlux for FreeEnergyPair {
    fn jet(&self, r: f64, p: f64) -> Result<EntropyJet> {
        let tau = self.model.tau(r);
        Ok(EntropyJet {
            eta: 0.5 * p * p + self.model.free_energy(r),
            q: -p * tau,
            eta_r: tau,
            eta_p: p,
            eta_rr: self.model.dtau(r),
            eta_rp: 0.0,
            eta_pp: 1.0,
            q_r: -p * self.model.dtau(r),
            q_p: -tau,
        })
    }

    fn is_convex(&self) -> bool {
        true
    }
}

/// Tabulated pair on a uniform `(w₁, w₂)` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyPair {
    pub problem: GoursatProblem,
    pub coords: RiemannCoords,
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub big_h: Vec<f64>,
    pub big_q: Vec<f64>,
    pub eta: Vec<f64>,
    pub q: Vec<f64>,
    pub eta_r: Vec<f64>,
    pub eta_p: Vec<f64>,
    pub eta_rr: Vec<f64>,
    pub eta_rp: Vec<f64>,
    pub eta_pp: Vec<f64>,
    pub q_r: Vec<f64>,
    pub q_p: Vec<f64>,
    /// Number of series terms beyond `g`.
    pub depth: usize,
    /// `‖𝒜ⁿ g‖_∞` for `n = 0, 1, …`.
    pub increments: Vec<f64>,
}

struct Table {
    n1: usize,
    n2: usize,
}

impl Table {
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }
}

/// Solves the Goursat problem by the Neumann series and tabulates `(η, q)`.
pub fn goursat_solve(
    problem: &GoursatProblem,
    model: &TensionModel,
    coords: &RiemannCoords,
    tol_series: f64,
) -> Result<EntropyPair> {
    let (n1, n2) = problem.shape();
    let h = problem.spacing();
    let t = Table { n1, n2 };
    let (c1, c2) = problem.corner;
    let w2 = |j: usize| c2 + j as f64 * h;
    // a(w₁ᵢ − w₂ⱼ) depends on i − j only.
    let offset = n2 - 1;
    let a_lattice: Vec<f64> = (0..n1 + n2 - 1)
        .map(|k| coeff_a(model, coords, (c1 - c2) + (k as f64 - offset as f64) * h))
        .collect();
    let a = |i: usize, j: usize| a_lattice[i + offset - j];

    let g: Vec<f64> = (0..n1 * n2).map(|k| problem.datum.eval(w2(k % n2))).collect();
    let g_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut big_h = g.clone();
    let mut term = g;
    let mut increments = vec![g_norm];
    let mut depth = 0;
    let mut inner = vec![0.0; n1 * n2];
    while increments.last().copied().unwrap_or(0.0) > tol_series * g_norm {
        if depth == MAX_DEPTH {
            return Err(Error::SeriesNotConverged {
                depth,
                last_increment: *increments.last().unwrap(),
            });
        }
        // I(v, w₂) = ∫_{w̄₂}^{w₂} a(v − u) f(v, u) du, cumulative in j.
        for i in 0..n1 {
            inner[t.at(i, 0)] = 0.0;
            let mut prev = a(i, 0) * term[t.at(i, 0)];
            for j in 1..n2 {
                let cur = a(i, j) * term[t.at(i, j)];
                inner[t.at(i, j)] = inner[t.at(i, j - 1)] + 0.5 * h * (prev + cur);
                prev = cur;
            }
        }
        // (𝒜f)(w₁, w₂) = −∫_{w̄₁}^{w₁} a(v − w₂) I(v, w₂) dv, cumulative in i.
        let mut next = vec![0.0; n1 * n2];
        for j in 0..n2 {
            let mut prev = a(0, j) * inner[t.at(0, j)];
            for i in 1..n1 {
                let cur = a(i, j) * inner[t.at(i, j)];
                next[t.at(i, j)] = next[t.at(i - 1, j)] - 0.5 * h * (prev + cur);
                prev = cur;
            }
        }
        let norm = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (hv, nv) in big_h.iter_mut().zip(&next) {
            *hv += nv;
        }
        term = next;
        increments.push(norm);
        depth += 1;
        if norm == 0.0 {
            break;
        }
    }

    // Q(w₁, w₂) = −∫_{w̄₂}^{w₂} a(w₁ − v) H(w₁, v) dv.
    let mut big_q = vec![0.0; n1 * n2];
    for i in 0..n1 {
        let mut prev = a(i, 0) * big_h[t.at(i, 0)];
        for j in 1..n2 {
            let cur = a(i, j) * big_h[t.at(i, j)];
            big_q[t.at(i, j)] = big_q[t.at(i, j - 1)] - 0.5 * h * (prev + cur);
            prev = cur;
        }
    }

    // λ(r) on the lattice of w₁ − w₂.
    let lam_lattice: Vec<f64> = (0..n1 + n2 - 1)
        .map(|k| {
            coords.speed(coords.r_of_z(0.5 * ((c1 - c2) + (k as f64 - offset as f64) * h)))
        })
        .collect();
    let dlam_lattice: Vec<f64> = (0..n1 + n2 - 1)
        .map(|k| {
            let r = coords.r_of_z(0.5 * ((c1 - c2) + (k as f64 - offset as f64) * h));
            model.d2tau(r) / (2.0 * coords.speed(r))
        })
        .collect();
    let lam = |i: usize, j: usize| lam_lattice[i + offset - j];

    let mut eta = vec![0.0; n1 * n2];
    let mut q = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            let k = t.at(i, j);
            let s = lam(i, j).sqrt();
            eta[k] = 0.5 / s * (big_h[k] + big_q[k]);
            q[k] = 0.5 * s * (big_h[k] - big_q[k]);
        }
    }

    let d = Derivatives::new(&t, h);
    let (e1, e2) = (d.d1(&eta), d.d2(&eta));
    let (e11, e12, e22) = (d.d11(&eta), d.d12(&eta), d.d22(&eta));
    let (q1, q2) = (d.d1(&q), d.d2(&q));
    let mut out = EntropyPair {
        problem: *problem,
        coords: coords.clone(),
        n1,
        n2,
        h,
        eta_r: vec![0.0; n1 * n2],
        eta_p: vec![0.0; n1 * n2],
        eta_rr: vec![0.0; n1 * n2],
        eta_rp: vec![0.0; n1 * n2],
        eta_pp: vec![0.0; n1 * n2],
        q_r: vec![0.0; n1 * n2],
        q_p: vec![0.0; n1 * n2],
        big_h,
        big_q,
        eta,
        q,
        depth,
        increments,
    };
    for i in 0..n1 {
        for j in 0..n2 {
            let k = t.at(i, j);
            let l = lam(i, j);
            let dl = dlam_lattice[i + offset - j];
            out.eta_r[k] = l * (e1[k] - e2[k]);
            out.eta_p[k] = e1[k] + e2[k];
            out.eta_pp[k] = e11[k] + 2.0 * e12[k] + e22[k];
            out.eta_rp[k] = l * (e11[k] - e22[k]);
            out.eta_rr[k] = dl * (e1[k] - e2[k]) + l * l * (e11[k] - 2.0 * e12[k] + e22[k]);
            out.q_r[k] = l * (q1[k] - q2[k]);
            out.q_p[k] = q1[k] + q2[k];
        }
    }
    Ok(out)
}

/// Second-order differences on the table; one-sided at the edges.
struct Derivatives<'a> {
    t: &'a Table,
    h: f64,
}

impl<'a> Derivatives<'a> {
    fn new(t: &'a Table, h: f64) -> Self {
        Self { t, h }
    }

    fn line_d(&self, f: &[f64], n: usize, idx: impl Fn(usize) -> usize) -> Vec<f64> {
        let h = self.h;
        (0..n)
            .map(|m| {
                if m == 0 {
                    (-3.0 * f[idx(0)] + 4.0 * f[idx(1)] - f[idx(2)]) / (2.0 * h)
                } else if m == n - 1 {
                    (3.0 * f[idx(m)] - 4.0 * f[idx(m - 1)] + f[idx(m - 2)]) / (2.0 * h)
                } else {
                    (f[idx(m + 1)] - f[idx(m - 1)]) / (2.0 * h)
                }
            })
            .collect()
    }

    fn line_dd(&self, f: &[f64], n: usize, idx: impl Fn(usize) -> usize) -> Vec<f64> {
        let h2 = self.h * self.h;
        (0..n)
            .map(|m| {
                let c = m.clamp(1, n - 2);
                (f[idx(c + 1)] - 2.0 * f[idx(c)] + f[idx(c - 1)]) / h2
            })
            .collect()
    }

    fn d1(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for j in 0..self.t.n2 {
            let col = self.line_d(f, self.t.n1, |i| self.t.at(i, j));
            for i in 0..self.t.n1 {
                out[self.t.at(i, j)] = col[i];
            }
        }
        out
    }

    fn d2(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for i in 0..self.t.n1 {
            let row = self.line_d(f, self.t.n2, |j| self.t.at(i, j));
            out[self.t.at(i, 0)..self.t.at(i, 0) + self.t.n2].copy_from_slice(&row);
        }
        out
    }

    fn d11(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for j in 0..self.t.n2 {
            let col = self.line_dd(f, self.t.n1, |i| self.t.at(i, j));
            for i in 0..self.t.n1 {
                out[self.t.at(i, j)] = col[i];
            }
        }
        out
    }

    fn d22(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for i in 0..self.t.n1 {
            let row = self.line_dd(f, self.t.n2, |j| self.t.at(i, j));
            out[self.t.at(i, 0)..self.t.at(i, 0) + self.t.n2].copy_from_slice(&row);
        }
        out
    }

    fn d12(&self, f: &[f64]) -> Vec<f64> {
        self.d2(&self.d1(f))
    }
}

/// Sup-norm Lax residuals `(η_r + q_p, τ' η_p + q_r)` over interior nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LaxResiduals {
    pub first: f64,
    pub second: f64,
}

impl LaxResiduals {
    pub fn max(&self) -> f64 {
        self.first.max(self.second)
    }
}

/// Bounds on the tabulated pair and its derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    pub eta: f64,
    pub q: f64,
    pub first_derivatives: f64,
    pub second_derivatives: f64,
}

impl EntropyPair {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn w1(&self, i: usize) -> f64 {
        self.problem.corner.0 + i as f64 * self.h
    }

    pub fn w2(&self, j: usize) -> f64 {
        self.problem.corner.1 + j as f64 * self.h
    }

    pub fn lax_residual(&self, model: &TensionModel) -> LaxResiduals {
        let mut res = LaxResiduals::default();
        for i in 1..self.n1 - 1 {
            for j in 1..self.n2 - 1 {
                let k = self.idx(i, j);
                let r = self.coords.r_of_z(0.5 * (self.w1(i) - self.w2(j)));
                res.first = res.first.max((self.eta_r[k] + self.q_p[k]).abs());
                res.second = res
                    .second
                    .max((model.dtau(r) * self.eta_p[k] + self.q_r[k]).abs());
            }
        }
        res
    }

    /// Ratio of consecutive series increments, maximised over the computed terms.
    pub fn increment_ratio(&self) -> f64 {
        self.increments
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }

    pub fn boundedness(&self) -> Boundedness {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Boundedness {
            eta: sup(&self.eta),
            q: sup(&self.q),
            first_derivatives: [&self.eta_r, &self.eta_p, &self.q_r, &self.q_p]
                .iter()
                .map(|v| sup(v))
                .fold(0.0, f64::max),
            second_derivatives: [&self.eta_rr, &self.eta_rp, &self.eta_pp]
                .iter()
                .map(|v| sup(v))
                .fold(0.0, f64::max),
        }
    }

    /// `max |H(w̄₁, ·) − g|` and `max |Q(·, w̄₂)|`.
    pub fn goursat_defects(&self) -> (f64, f64) {
        let mut dh = 0.0f64;
        for j in 0..self.n2 {
            dh = dh.max((self.big_h[self.idx(0, j)] - self.problem.datum.eval(self.w2(j))).abs());
        }
        let mut dq = 0.0f64;
        for i in 0..self.n1 {
            dq = dq.max(self.big_q[self.idx(i, 0)].abs());
        }
        (dh, dq)
    }

    fn bilinear(&self, field: &[f64], i: usize, j: usize, s: f64, u: f64) -> f64 {
        let f00 = field[self.idx(i, j)];
        let f10 = field[self.idx(i + 1, j)];
        let f01 = field[self.idx(i, j + 1)];
        let f11 = field[self.idx(i + 1, j + 1)];
        (1.0 - s) * ((1.0 - u) * f00 + u * f01) + s * ((1.0 - u) * f10 + u * f11)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "w1,w2,H,Q,eta,q")?;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let k = self.idx(i, j);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.w1(i),
                    self.w2(j),
                    self.big_h[k],
                    self.big_q[k],
                    self.eta[k],
                    self.q[k]
                )?;
            }
        }
        Ok(())
    }

    pub fn metadata(&self, model: &TensionModel) -> serde_json::Value {
        let res = self.lax_residual(model);
        let (dh, dq) = self.goursat_defects();
        serde_json::json!({
            "corner": [self.problem.corner.0, self.problem.corner.1],
            "extent": [self.problem.extent.0, self.problem.extent.1],
            "shape": [self.n1, self.n2],
            "spacing": self.h,
            "datum": self.problem.datum,
            "depth": self.depth,
            "increments": self.increments,
            "increment_ratio": self.increment_ratio(),
            "lax_residual": res,
            "goursat_defects": [dh, dq],
            "bounds": self.boundedness(),
        })
    }
}

impl EntropyFlux for EntropyPair {
    fn jet(&self, r: f64, p: f64) -> Result<EntropyJet> {
        let z = self.coords.z(r);
        let s = (p + z - self.problem.corner.0) / self.h;
        let u = (p - z - self.problem.corner.1) / self.h;
        if !(s >= 0.0 && u >= 0.0 && s <= (self.n1 - 1) as f64 && u <= (self.n2 - 1) as f64) {
            return Err(Error::invalid(
                "state",
                format!("({r}, {p}) lies outside the entropy rectangle"),
            ));
        }
        let i = (s as usize).min(self.n1 - 2);
        let j = (u as usize).min(self.n2 - 2);
        let (fs, fu) = (s - i as f64, u - j as f64);
        let b = |v: &[f64]| self.bilinear(v, i, j, fs, fu);
        Ok(EntropyJet {
            eta: b(&self.eta),
            q: b(&self.q),
            eta_r: b(&self.eta_r),
            eta_p: b(&self.eta_p),
            eta_rr: b(&self.eta_rr),
            eta_rp: b(&self.eta_rp),
            eta_pp: b(&self.eta_pp),
            q_r: b(&self.q_r),
            q_p: b(&self.q_p),
        })
    }
}

/// Cell-integrated entropy budget on `[x_j, x_{j+1}] × [t_n, t_{n+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductionField {
    pub times: Vec<f64>,
    pub cells: usize,
    /// `∫∫ δ(η_r r_x + η_p p_x)_x − (η_t + q_x)` per cell, row-major in time.
    pub production: Vec<f64>,
    /// `∫∫ (η_t + q_x) − δ(η_r r_x + η_p p_x)_x + δ(η_rr r_x² + 2η_rp r_x p_x + η_pp p_x²)`.
    pub identity_residual: Vec<f64>,
    /// `∫∫ δ(η_rr r_x² + 2η_rp r_x p_x + η_pp p_x²)`.
    pub dissipation: Vec<f64>,
}

impl ProductionField {
    pub fn min_production(&self) -> f64 {
        self.production.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residual.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Fraction of cells with production `≥ −tol`.
    pub fn fraction_above(&self, tol: f64) -> f64 {
        if self.production.is_empty() {
            return 1.0;
        }
        self.production.iter().filter(|&&v| v >= -tol).count() as f64 / self.production.len() as f64
    }

    pub fn total_production(&self) -> f64 {
        self.production.iter().sum()
    }
}

struct NodalBudget {
    eta: Vec<f64>,
    q: Vec<f64>,
    flux: Vec<f64>,
    dissipation: Vec<f64>,
}

fn nodal_gradient(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|j| {
            if j == 0 {
                left_derivative(u, dx)
            } else if j == n - 1 {
                right_derivative(u, dx)
            } else {
                (u[j + 1] - u[j - 1]) / (2.0 * dx)
            }
        })
        .collect()
}

fn nodal_budget(pair: &dyn EntropyFlux, r: &[f64], p: &[f64], dx: f64, delta: f64) -> Result<NodalBudget> {
    let rx = nodal_gradient(r, dx);
    let px = nodal_gradient(p, dx);
    let mut b = NodalBudget {
        eta: Vec::with_capacity(r.len()),
        q: Vec::with_capacity(r.len()),
        flux: Vec::with_capacity(r.len()),
        dissipation: Vec::with_capacity(r.len()),
    };
    for j in 0..r.len() {
        let e = pair.jet(r[j], p[j])?;
        b.eta.push(e.eta);
        b.q.push(e.q);
        b.flux.push(delta * (e.eta_r * rx[j] + e.eta_p * px[j]));
        b.dissipation.push(
            delta
                * (e.eta_rr * rx[j] * rx[j] + 2.0 * e.eta_rp * rx[j] * px[j] + e.eta_pp * px[j] * px[j]),
        );
    }
    Ok(b)
}

/// Entropy production of `pair` along `trajectory`, cell by cell.
pub fn entropy_production(pair: &dyn EntropyFlux, trajectory: &Trajectory) -> Result<ProductionField> {
    let grid = trajectory.grid();
    let dx = grid.dx();
    let m = grid.cells();
    let budgets = trajectory
        .snapshots
        .iter()
        .map(|s| nodal_budget(pair, &s.r, &s.p, dx, trajectory.delta))
        .collect::<Result<Vec<_>>>()?;
    let times = trajectory.times();
    let intervals = times.len().saturating_sub(1);
    let mut production = Vec::with_capacity(intervals * m);
    let mut identity_residual = Vec::with_capacity(intervals * m);
    let mut dissipation = Vec::with_capacity(intervals * m);
    for n in 0..intervals {
        let dt = times[n + 1] - times[n];
        let (a, b) = (&budgets[n], &budgets[n + 1]);
        for j in 0..m {
            let storage = 0.5 * dx * ((b.eta[j] + b.eta[j + 1]) - (a.eta[j] + a.eta[j + 1]));
            let transport = 0.5 * dt * ((a.q[j + 1] - a.q[j]) + (b.q[j + 1] - b.q[j]));
            let flux = 0.5 * dt * ((a.flux[j + 1] - a.flux[j]) + (b.flux[j + 1] - b.flux[j]));
            let diss = 0.25
                * dx
                * dt
                * (a.dissipation[j] + a.dissipation[j + 1] + b.dissipation[j] + b.dissipation[j + 1]);
            production.push(flux - storage - transport);
            identity_residual.push(storage + transport - flux + diss);
            dissipation.push(diss);
        }
    }
    Ok(ProductionField {
        times,
        cells: m,
        production,
        identity_residual,
        dissipation,
    })
}

/// Riemann coordinates and the default bump problem covering every state of `trajectories`.
pub fn problem_for_trajectories(
    model: &TensionModel,
    trajectories: &[&Trajectory],
    resolution: usize,
) -> Result<(RiemannCoords, GoursatProblem)> {
    let states: Vec<(f64, f64)> = trajectories
        .iter()
        .flat_map(|t| t.snapshots.iter())
        .flat_map(|s| s.r.iter().copied().zip(s.p.iter().copied()))
        .collect();
    let (lo, hi) = states
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &(r, _)| (lo.min(r), hi.max(r)));
    let span = (hi - lo).max(1.0);
    let coords = riemann_z(model, (lo - span, hi + span), 2048)?;
    let problem = GoursatProblem::covering(&coords, &states, resolution)?;
    Ok((coords, problem))
}

/// Builds the default bump pair covering every state of `trajectories`.
pub fn pair_for_trajectories(
    model: &TensionModel,
    trajectories: &[&Trajectory],
    resolution: usize,
) -> Result<EntropyPair> {
    let (coords, problem) = problem_for_trajectories(model, trajectories, resolution)?;
    goursat_solve(&problem, model, &coords, TOL_SERIES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_linear_tension, make_softplus_tension, mollify_initial_data, BoundaryTensionProfile,
        Grid, StateField,
    };
    use crate::thermo::ThermoReport;
    use crate::viscous_solver::{Scheme, ViscousConfig, ViscousSolver};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn softplus() -> TensionModel {
        make_softplus_tension(1.0, 2.0).unwrap()
    }

    fn coords(m: &TensionModel) -> RiemannCoords {
        riemann_z(m, (-4.0, 4.0), 1024).unwrap()
    }

    fn problem(resolution: usize) -> GoursatProblem {
        GoursatProblem::new(
            (-1.5, -1.5),
            (3.0, 3.0),
            resolution,
            GoursatDatum::Bump {
                center: 0.0,
                half_width: 0.9,
                height: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn riemann_examples() {
        let lin = make_linear_tension(2.25).unwrap();
        let c = riemann_z(&lin, (-2.0, 2.0), 64).unwrap();
        for r in [-3.0, -1.0, 0.0, 0.7, 2.5] {
            assert!((c.z(r) - 1.5 * r).abs() < 1e-12);
        }
        let m = softplus();
        let c = coords(&m);
        assert!(c.z(0.0).abs() < 1e-15);
        let z1 = c.z(1.0);
        assert!((1.0..=2f64.sqrt()).contains(&z1));
        // Oracle: direct fine quadrature of √τ'.
        let n = 20000;
        let direct: f64 = (0..n)
            .map(|k| speed(&m, (k as f64 + 0.5) / n as f64) / n as f64)
            .sum();
        assert!((z1 - direct).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn riemann_inverse_round_trip(r in -8.0..8.0f64) {
            let m = softplus();
            let c = riemann_z(&m, (-4.0, 4.0), 512).unwrap();
            prop_assert!((c.r_of_z(c.z(r)) - r).abs() < 1e-10);
        }

        #[test]
        fn riemann_slope_bounds(a in -6.0..6.0f64, d in 1e-3..1.0f64) {
            let m = softplus();
            let c = riemann_z(&m, (-4.0, 4.0), 512).unwrap();
            let slope = (c.z(a + d) - c.z(a)) / d;
            prop_assert!(slope >= 1.0 - 1e-9 && slope <= 2f64.sqrt() + 1e-9);
        }

        #[test]
        fn coefficient_is_bounded(diff in -10.0..10.0f64) {
            let m = softplus();
            let c = riemann_z(&m, (-4.0, 4.0), 256).unwrap();
            let bound = m.sup_d2tau() / 8.0;
            prop_assert!(coeff_a(&m, &c, diff).abs() <= bound + 1e-15);
        }
    }

    #[test]
    fn coefficient_at_origin() {
        let m = softplus();
        let c = coords(&m);
        let expect = 0.25 / (8.0 * 1.5f64.powf(1.5));
        assert!((coeff_a(&m, &c, 0.0) - expect).abs() < 1e-14);
        let lin = make_linear_tension(1.0).unwrap();
        assert_eq!(coeff_a(&lin, &riemann_z(&lin, (-1.0, 1.0), 8).unwrap(), 0.3), 0.0);
    }

    #[test]
    fn linear_law_pair_is_the_datum() {
        let lin = make_linear_tension(1.5).unwrap();
        let c = riemann_z(&lin, (-3.0, 3.0), 256).unwrap();
        let pr = problem(64);
        let pair = goursat_solve(&pr, &lin, &c, TOL_SERIES).unwrap();
        assert_eq!(pair.depth, 1);
        for j in 0..pair.n2 {
            for i in 0..pair.n1 {
                let k = pair.idx(i, j);
                assert_eq!(pair.big_h[k], pr.datum.eval(pair.w2(j)));
                assert_eq!(pair.big_q[k], 0.0);
            }
        }
        // With a hat datum the linear pair stays exact up to rounding.
        let hat = pr.with_datum(pr.hat_datum(1.0)).unwrap();
        let pair = goursat_solve(&hat, &lin, &c, TOL_SERIES).unwrap();
        assert!(pair.lax_residual(&lin).max() < 1e-12);
    }

    #[test]
    fn goursat_data_are_exact() {
        let m = softplus();
        let pair = goursat_solve(&problem(96), &m, &coords(&m), TOL_SERIES).unwrap();
        let (dh, dq) = pair.goursat_defects();
        assert_eq!(dh, 0.0);
        assert_eq!(dq, 0.0);
        assert!(pair.depth >= 2);
        let b = pair.boundedness();
        assert!(b.eta.is_finite() && b.second_derivatives.is_finite());
    }

    #[test]
    fn series_increments_decay_geometrically() {
        let m = softplus();
        let c = coords(&m);
        let pr = problem(96);
        let pair = goursat_solve(&pr, &m, &c, TOL_SERIES).unwrap();
        let a_sup = m.sup_d2tau() / 8.0;
        let diam = pr.extent.0.hypot(pr.extent.1);
        let bound = (a_sup * diam).powi(2) / 2.0;
        assert!(pair.increment_ratio() <= bound, "{} > {bound}", pair.increment_ratio());
        assert!(pair.increment_ratio() < 0.5);
    }

    #[test]
    fn lax_residuals_are_second_order() {
        let m = softplus();
        let c = coords(&m);
        let coarse = goursat_solve(&problem(64), &m, &c, TOL_SERIES).unwrap().lax_residual(&m);
        let fine = goursat_solve(&problem(128), &m, &c, TOL_SERIES).unwrap().lax_residual(&m);
        assert!(coarse.first / fine.first >= 3.5, "{coarse:?} {fine:?}");
        assert!(coarse.second / fine.second >= 3.5, "{coarse:?} {fine:?}");
    }

    #[test]
    fn closed_form_pairs_satisfy_the_lax_system() {
        let m = softplus();
        for (r, p) in [(0.0, 0.0), (1.3, -0.4), (-2.0, 0.7)] {
            for pair in [
                &MomentumPair { model: m } as &dyn EntropyFlux,
                &FreeEnergyPair { model: m },
            ] {
                let e = pair.jet(r, p).unwrap();
                assert!((e.eta_r + e.q_p).abs() < 1e-14);
                assert!((m.dtau(r) * e.eta_p + e.q_r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tabulated_jet_matches_table_and_rejects_outside() {
        let m = softplus();
        let pair = goursat_solve(&problem(64), &m, &coords(&m), TOL_SERIES).unwrap();
        let (i, j) = (20, 30);
        let w1 = pair.w1(i);
        let w2 = pair.w2(j);
        let r = pair.coords.r_of_z(0.5 * (w1 - w2));
        let p = 0.5 * (w1 + w2);
        let e = pair.jet(r, p).unwrap();
        assert!((e.eta - pair.eta[pair.idx(i, j)]).abs() < 1e-9);
        assert!(pair.jet(10.0, 10.0).is_err());
    }

    fn run(model: TensionModel, cells: usize, delta: f64) -> Trajectory {
        let g = Grid::new(cells).unwrap();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let raw_r = g.sample(|x| 0.3 * (PI * x / 2.0).cos());
        let raw_p = g.sample(|x| 0.2 * (PI * x / 2.0).sin());
        let init = mollify_initial_data(g, &raw_r, &raw_p, &model, &b, 1.0 / 16.0).unwrap();
        let cfg = ViscousConfig::uniform(g, &model, delta, 1.0, 100, Scheme::Imex).unwrap();
        ViscousSolver::new(g, model, b, cfg).unwrap().solve(&init.state).unwrap()
    }

    #[test]
    fn equilibrium_produces_nothing() {
        let m = softplus();
        let g = Grid::new(32).unwrap();
        let b = BoundaryTensionProfile::constant(m.tau(0.4));
        let cfg = ViscousConfig::uniform(g, &m, 0.1, 0.5, 5, Scheme::Imex).unwrap();
        let traj = ViscousSolver::new(g, m, b, cfg)
            .unwrap()
            .solve(&StateField::constant(g, 0.4, 0.0))
            .unwrap();
        let field = entropy_production(&FreeEnergyPair { model: m }, &traj).unwrap();
        assert!(field.production.iter().all(|v| v.abs() < 1e-14));
        assert!(field.max_identity_residual() < 1e-14);
    }

    // Summed over the domain, the free-energy budget is the thermodynamic balance:
    // the interior fluxes telescope, leaving boundary work minus dissipation.
    #[test]
    fn free_energy_production_matches_thermo_dissipation() {
        let m = softplus();
        let traj = run(m, 100, 0.05);
        let field = entropy_production(&FreeEnergyPair { model: m }, &traj).unwrap();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let rep = ThermoReport::new(&traj, &m, &b, 0.0).unwrap();
        let total: f64 = field.dissipation.iter().sum();
        let thermo = *rep.dissipation.last().unwrap();
        assert!((total - thermo).abs() < 0.05 * thermo, "{total} vs {thermo}");
    }

    #[test]
    fn identity_residual_refines() {
        let m = make_linear_tension(1.5).unwrap();
        let pair = FreeEnergyPair { model: m };
        let coarse = entropy_production(&pair, &run(m, 50, 0.05)).unwrap();
        let fine = entropy_production(&pair, &run(m, 100, 0.05)).unwrap();
        let (c, f) = (coarse.max_identity_residual(), fine.max_identity_residual());
        assert!(c / f > 3.0, "{c} {f}");
    }

    #[test]
    fn tabulated_pair_along_a_run() {
        let m = softplus();
        let traj = run(m, 50, 0.1);
        let pair = pair_for_trajectories(&m, &[&traj], 128).unwrap();
        let field = entropy_production(&pair, &traj).unwrap();
        assert!(field.production.iter().all(|v| v.is_finite()));
        let mut buf = Vec::new();
        pair.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("w1,w2,H,Q,eta,q\n"));
        assert!(pair.metadata(&m)["depth"].as_u64().unwrap() >= 1);
    }
}
