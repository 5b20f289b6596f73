//! Eigen-expansions of the heat operator `∂t − δ∂xx` on `[0, 1]` with mixed
//! boundary conditions, and the exact modal solution of the linear system.
//!
//! Both kernels share the wavenumbers `k_n = nπ/2` (`n` odd), so
//! `λ_n = k_n²`. The p-type kernel (Dirichlet at 0, Neumann at 1) uses
//! `sin(k_n x)`; the r-type kernel (Neumann at 0, Dirichlet at 1) uses
//! `cos(k_n x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundaryTensionProfile, Grid, StateField, TensionModel};
use crate::quadrature::GaussLegendre;
use crate::viscous_solver::Trajectory;

/// Kernel prefactor. Each eigenfunction has squared norm ½ on `[0, 1]`, so the
/// expansion of the identity carries a factor 2; [`calibrate_kappa`] recovers it.
pub const KAPPA: f64 = 2.0;
/// Largest odd mode index ever used.
pub const MODE_CAP: usize = 4097;
/// Truncation threshold for `e^{−tδλ_N}`.
pub const TAIL_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Dirichlet at 0, Neumann at 1.
    P,
    /// Neumann at 0, Dirichlet at 1.
    R,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralKernel {
    pub kind: KernelKind,
    pub delta: f64,
    /// Largest odd mode index allowed.
    pub max_mode: usize,
    pub kappa: f64,
}

pub fn wavenumber(n: usize) -> f64 {
    0.5 * PI * n as f64
}

pub fn eigenvalue(n: usize) -> f64 {
    let k = wavenumber(n);
    k * k
}

impl SpectralKernel {
    pub fn new(kind: KernelKind, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::invalid("delta", format!("must be non-negative, got {delta}")));
        }
        Ok(Self {
            kind,
            delta,
            max_mode: MODE_CAP,
            kappa: KAPPA,
        })
    }

    pub fn with_max_mode(mut self, n: usize) -> Self {
        self.max_mode = if n % 2 == 0 { n.saturating_sub(1).max(1) } else { n };
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Largest odd `N` with `e^{−tδλ_N} < TAIL_TOL`, clipped to `max_mode`.
    pub fn mode_count(&self, t: f64) -> usize {
        let rate = t * self.delta;
        if rate <= 0.0 {
            return self.max_mode;
        }
        let k = (-TAIL_TOL.ln() / rate).sqrt();
        let n = (2.0 * k / PI).ceil() as usize;
        let n = if n % 2 == 0 { n + 1 } else { n };
        n.min(self.max_mode)
    }

    /// Odd mode indices used at time `t`.
    pub fn modes(&self, t: f64) -> impl Iterator<Item = usize> {
        (1..=self.mode_count(t)).step_by(2)
    }

    pub fn eigenfunction(&self, n: usize, x: f64) -> f64 {
        let k = wavenumber(n);
        match self.kind {
            KernelKind::P => (k * x).sin(),
            KernelKind::R => (k * x).cos(),
        }
    }

    pub fn eigenfunction_dx(&self, n: usize, x: f64) -> f64 {
        let k = wavenumber(n);
        match self.kind {
            KernelKind::P => k * (k * x).cos(),
            KernelKind::R => -k * (k * x).sin(),
        }
    }

    fn damping(&self, n: usize, t: f64) -> f64 {
        (-t * self.delta * eigenvalue(n)).exp()
    }

    /// `G(x, x', t)`.
    pub fn evaluate(&self, x: f64, xp: f64, t: f64) -> f64 {
        self.kappa
            * self
                .modes(t)
                .map(|n| self.damping(n, t) * (self.eigenfunction(n, x) * self.eigenfunction(n, xp)))
                .sum::<f64>()
    }

    /// `∂x G(x, x', t)`.
    pub fn dx(&self, x: f64, xp: f64, t: f64) -> f64 {
        self.kappa
            * self
                .modes(t)
                .map(|n| self.damping(n, t) * self.eigenfunction_dx(n, x) * self.eigenfunction(n, xp))
                .sum::<f64>()
    }

    /// `∂x' G(x, x', t)`.
    pub fn dxp(&self, x: f64, xp: f64, t: f64) -> f64 {
        self.kappa
            * self
                .modes(t)
                .map(|n| self.damping(n, t) * self.eigenfunction(n, x) * self.eigenfunction_dx(n, xp))
                .sum::<f64>()
    }

    /// Modes resolvable on `grid`: `n < 2M`.
    pub fn grid_mode_limit(grid: Grid) -> usize {
        2 * grid.cells() - 1
    }
}

pub fn green_p(kernel: &SpectralKernel, x: f64, xp: f64, t: f64) -> f64 {
    debug_assert_eq!(kernel.kind, KernelKind::P);
    kernel.evaluate(x, xp, t)
}

pub fn green_r(kernel: &SpectralKernel, x: f64, xp: f64, t: f64) -> f64 {
    debug_assert_eq!(kernel.kind, KernelKind::R);
    kernel.evaluate(x, xp, t)
}

/// Trapezoid projections `∫ f φ_n` for the odd modes up to `last`.
fn project(kernel: &SpectralKernel, grid: Grid, f: &[f64], last: usize) -> Vec<(usize, f64)> {
    let xs = grid.coordinates();
    (1..=last)
        .step_by(2)
        .map(|n| {
            let w: Vec<f64> = xs
                .iter()
                .zip(f)
                .map(|(&x, &v)| v * kernel.eigenfunction(n, x))
                .collect();
            (n, grid.integrate(&w))
        })
        .collect()
}

/// `∫ G(·, x', t) f(x') dx'` on the grid: project, damp, resynthesize.
pub fn semigroup_apply(kernel: &SpectralKernel, grid: Grid, f: &[f64], t: f64) -> Vec<f64> {
    let last = kernel
        .mode_count(t)
        .min(SpectralKernel::grid_mode_limit(grid));
    let coeffs = project(kernel, grid, f, last);
    grid.coordinates()
        .iter()
        .map(|&x| {
            kernel.kappa
                * coeffs
                    .iter()
                    .map(|&(n, c)| kernel.damping(n, t) * c * kernel.eigenfunction(n, x))
                    .sum::<f64>()
        })
        .collect()
}

/// Recovers the kernel prefactor as `⟨f, f⟩ / ⟨f, S₁ f⟩`, where `S₁` is the
/// unnormalized semigroup at `t = 0` and `f` is a smooth profile satisfying the
/// kernel's homogeneous boundary conditions.
pub fn calibrate_kappa(kind: KernelKind, grid: Grid) -> f64 {
    let kernel = SpectralKernel {
        kind,
        delta: 0.0,
        max_mode: SpectralKernel::grid_mode_limit(grid),
        kappa: 1.0,
    };
    let f = match kind {
        KernelKind::P => grid.sample(|x| x * x * (1.0 - 2.0 * x / 3.0) + (PI * x).sin()),
        KernelKind::R => grid.sample(|x| (1.0 - x) * (1.0 - x) * (1.0 + 2.0 * x) * (1.0 + x * x)),
    };
    let s = semigroup_apply(&kernel, grid, &f, 0.0);
    let ff: Vec<f64> = f.iter().map(|v| v * v).collect();
    let fs: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a * b).collect();
    grid.integrate(&ff) / grid.integrate(&fs)
}

/// L² truncation tail `(κ/2 · Σ_{n > N} c_n²)^{1/2}` for known coefficients `c_n = ∫ f φ_n`.
pub fn spectral_tail<F: Fn(usize) -> f64>(kernel: &SpectralKernel, t: f64, last: usize, coeff: F) -> f64 {
    let mut sum = 0.0;
    let mut n = last + 2;
    while n <= 200_001 {
        let c = kernel.kappa * kernel.damping(n, t) * coeff(n);
        sum += 0.5 * c * c;
        n += 2;
    }
    sum.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySample {
    pub x: f64,
    pub xp: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefects {
    /// `max |G(x, x') − G(x', x)|` over both kernels.
    pub symmetry: f64,
    /// `max |∂x G_p + ∂x' G_r|`.
    pub first: f64,
    /// `max |∂x G_r + ∂x' G_p|`.
    pub second: f64,
}

impl IdentityDefects {
    pub fn max(&self) -> f64 {
        self.symmetry.max(self.first).max(self.second)
    }
}

/// Checks `∂x G_p = −∂x' G_r`, `∂x G_r = −∂x' G_p` and kernel symmetry.
///
/// Relative to the magnitude of the terms summed, so the result is
/// independent of how large the truncated series happens to be.
pub fn mixed_identity_check(
    kernel_p: &SpectralKernel,
    kernel_r: &SpectralKernel,
    samples: &[IdentitySample],
) -> Result<IdentityDefects> {
    if kernel_p.kind != KernelKind::P || kernel_r.kind != KernelKind::R {
        return Err(Error::invalid("kernel", "expected a p-type and an r-type kernel"));
    }
    if kernel_p.delta != kernel_r.delta || kernel_p.max_mode != kernel_r.max_mode {
        return Err(Error::invalid("kernel", "kernels must share δ and the mode cutoff"));
    }
    let mut d = IdentityDefects::default();
    for s in samples {
        let scale = kernel_p
            .modes(s.t)
            .map(|n| kernel_p.kappa * kernel_p.damping(n, s.t) * wavenumber(n))
            .sum::<f64>()
            .max(1.0);
        let sym = (kernel_p.evaluate(s.x, s.xp, s.t) - kernel_p.evaluate(s.xp, s.x, s.t))
            .abs()
            .max((kernel_r.evaluate(s.x, s.xp, s.t) - kernel_r.evaluate(s.xp, s.x, s.t)).abs());
        let first = (kernel_p.dx(s.x, s.xp, s.t) + kernel_r.dxp(s.x, s.xp, s.t)).abs() / scale;
        let second = (kernel_r.dx(s.x, s.xp, s.t) + kernel_p.dxp(s.x, s.xp, s.t)).abs() / scale;
        d.symmetry = d.symmetry.max(sym / scale);
        d.first = d.first.max(first);
        d.second = d.second.max(second);
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub times: Vec<f64>,
    /// `(∫ φ r, ∫ φ p)` at each snapshot.
    pub moments: Vec<[f64; 2]>,
    /// Euclidean difference quotients between consecutive snapshots.
    pub quotients: Vec<f64>,
    pub max_quotient: f64,
    /// `‖φ'‖ + ‖φ‖` in L².
    pub phi_norm: f64,
}

impl LipschitzReport {
    /// Max quotient divided by `‖φ'‖ + ‖φ‖`.
    pub fn ratio(&self) -> f64 {
        if self.phi_norm > 0.0 {
            self.max_quotient / self.phi_norm
        } else {
            0.0
        }
    }
}

/// Difference quotients of `t ↦ ∫ φ(x) u(t, x) dx` along a trajectory.
pub fn lipschitz_test<F: Fn(f64) -> f64>(trajectory: &Trajectory, phi: F) -> LipschitzReport {
    let grid = trajectory.grid();
    let phi_v = grid.sample(&phi);
    let dx = grid.dx();
    let d_phi: Vec<f64> = (0..grid.cells())
        .map(|j| {
            let v = (phi_v[j + 1] - phi_v[j]) / dx;
            v * v
        })
        .collect();
    let phi_sq: Vec<f64> = phi_v.iter().map(|v| v * v).collect();
    let phi_norm = (d_phi.iter().sum::<f64>() * dx).sqrt() + grid.integrate(&phi_sq).sqrt();

    let moments: Vec<[f64; 2]> = trajectory
        .snapshots
        .iter()
        .map(|s| {
            let wr: Vec<f64> = phi_v.iter().zip(&s.r).map(|(a, b)| a * b).collect();
            let wp: Vec<f64> = phi_v.iter().zip(&s.p).map(|(a, b)| a * b).collect();
            [grid.integrate(&wr), grid.integrate(&wp)]
        })
        .collect();
    let times = trajectory.times();
    let quotients: Vec<f64> = (1..times.len())
        .map(|k| {
            let a = moments[k][0] - moments[k - 1][0];
            let b = moments[k][1] - moments[k - 1][1];
            a.hypot(b) / (times[k] - times[k - 1])
        })
        .collect();
    LipschitzReport {
        max_quotient: quotients.iter().copied().fold(0.0, f64::max),
        times,
        moments,
        quotients,
        phi_norm,
    }
}

/// Exact modal solution of the linear viscous system `τ(r) = c·r`.
///
/// With `a(t) = τ̄(t)/c` and `ρ = r − a`, the expansion
/// `ρ = Σ A_n cos(k_n x)`, `p = Σ B_n sin(k_n x)` decouples into
/// `A' = k B − δk² A − a'·α_n`, `B' = −c k A − δk² B`, `α_n = 2 sin(k_n)/k_n`,
/// which is propagated exactly with Gauss–Legendre quadrature of the forcing.
#[derive(Clone, Debug)]
pub struct LinearSpectralSolution {
    stiffness: f64,
    delta: f64,
    boundary: BoundaryTensionProfile,
    /// `(n, A_n(0), B_n(0))`.
    initial: Vec<(usize, f64, f64)>,
    gl: GaussLegendre,
}

impl LinearSpectralSolution {
    /// Projects `init` on the first `2M − 1` odd modes of its grid.
    pub fn new(
        model: &TensionModel,
        boundary: BoundaryTensionProfile,
        delta: f64,
        init: &StateField,
    ) -> Result<Self> {
        Self::with_modes(model, boundary, delta, init, SpectralKernel::grid_mode_limit(init.grid))
    }

    pub fn with_modes(
        model: &TensionModel,
        boundary: BoundaryTensionProfile,
        delta: f64,
        init: &StateField,
        last_mode: usize,
    ) -> Result<Self> {
        let TensionModel::Linear { stiffness } = *model else {
            return Err(Error::invalid("model", "spectral solution needs a linear law"));
        };
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::invalid("delta", format!("must be non-negative, got {delta}")));
        }
        let grid = init.grid;
        let a0 = boundary.value(0.0) / stiffness;
        let rho: Vec<f64> = init.r.iter().map(|r| r - a0).collect();
        let kr = SpectralKernel::new(KernelKind::R, delta)?.with_max_mode(last_mode);
        let kp = SpectralKernel::new(KernelKind::P, delta)?.with_max_mode(last_mode);
        let last = kr.max_mode;
        let a = project(&kr, grid, &rho, last);
        let b = project(&kp, grid, &init.p, last);
        let initial = a
            .iter()
            .zip(&b)
            .map(|(&(n, ca), &(_, cb))| (n, KAPPA * ca, KAPPA * cb))
            .collect();
        Ok(Self {
            stiffness,
            delta,
            boundary,
            initial,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Homogeneous propagator of mode `n` over a lag `s`.
    fn propagator(&self, n: usize, s: f64) -> [[f64; 2]; 2] {
        let k = wavenumber(n);
        let root = self.stiffness.sqrt();
        let w = root * k;
        let e = (-self.delta * k * k * s).exp();
        let (sn, cs) = (w * s).sin_cos();
        [[e * cs, e * sn / root], [-e * root * sn, e * cs]]
    }

    fn forcing(&self, n: usize, t0: f64, t1: f64) -> (f64, f64) {
        if t1 <= t0 {
            return (0.0, 0.0);
        }
        let k = wavenumber(n);
        let alpha = 2.0 * k.sin() / k;
        let rate = self.stiffness.sqrt() * k + self.delta * k * k;
        let panels = ((rate * (t1 - t0) / 2.0).ceil() as usize).clamp(1, 20_000);
        let h = (t1 - t0) / panels as f64;
        let (mut fa, mut fb) = (0.0, 0.0);
        for i in 0..panels {
            let a = t0 + i as f64 * h;
            fa += self.gl.integrate(a, a + h, |s| {
                let g = -self.boundary.derivative(s) / self.stiffness * alpha;
                self.propagator(n, t1 - s)[0][0] * g
            });
            fb += self.gl.integrate(a, a + h, |s| {
                let g = -self.boundary.derivative(s) / self.stiffness * alpha;
                self.propagator(n, t1 - s)[1][0] * g
            });
        }
        (fa, fb)
    }

    fn advance(&self, coeffs: &mut [(usize, f64, f64)], t0: f64, t1: f64) {
        let forced = !matches!(self.boundary, BoundaryTensionProfile::Constant { .. });
        let t_star = self.boundary.t_star();
        for c in coeffs.iter_mut() {
            let (n, a, b) = *c;
            let m = self.propagator(n, t1 - t0);
            let mut na = m[0][0] * a + m[0][1] * b;
            let mut nb = m[1][0] * a + m[1][1] * b;
            if forced && t0 < t_star {
                let end = t1.min(t_star);
                let (fa, fb) = self.forcing(n, t0, end);
                // Forcing accumulated up to `end`, then carried freely to `t1`.
                let tail = self.propagator(n, t1 - end);
                na += tail[0][0] * fa + tail[0][1] * fb;
                nb += tail[1][0] * fa + tail[1][1] * fb;
            }
            *c = (n, na, nb);
        }
    }

    /// Fields on `grid` at the given non-decreasing times.
    pub fn states_on(&self, grid: Grid, times: &[f64]) -> Result<Vec<StateField>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::invalid("times", "must be non-negative and non-decreasing"));
        }
        let xs = grid.coordinates();
        let basis: Vec<(Vec<f64>, Vec<f64>)> = self
            .initial
            .iter()
            .map(|&(n, _, _)| {
                let k = wavenumber(n);
                (
                    xs.iter().map(|x| (k * x).cos()).collect(),
                    xs.iter().map(|x| (k * x).sin()).collect(),
                )
            })
            .collect();
        let mut coeffs = self.initial.clone();
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance(&mut coeffs, now, t);
            now = t;
            let a = self.boundary.value(t) / self.stiffness;
            let mut r = vec![a; grid.nodes()];
            let mut p = vec![0.0; grid.nodes()];
            for (&(_, ca, cb), (cosv, sinv)) in coeffs.iter().zip(&basis) {
                for j in 0..grid.nodes() {
                    r[j] += ca * cosv[j];
                    p[j] += cb * sinv[j];
                }
            }
            out.push(StateField::new(grid, r, p, t)?);
        }
        Ok(out)
    }

    pub fn trajectory(&self, grid: Grid, times: &[f64]) -> Result<Trajectory> {
        let model = TensionModel::Linear {
            stiffness: self.stiffness,
        };
        Ok(Trajectory::from_snapshots(
            self.delta,
            self.states_on(grid, times)?,
            &model,
        ))
    }
}
