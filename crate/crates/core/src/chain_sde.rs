//! Anharmonic chain in a heat bath, driven by a boundary tension.
//!
//! Sites `i = 1..N` carry strains `r_i` and momenta `p_i`; particle 0 is
//! pinned (`p_0 = 0`). The bath acts on both fields as a discrete Laplacian
//! with matching gradient noise, so the Gibbs measure at the bath temperature
//! is invariant when the tension is frozen. Noise on `r` lives on the bonds
//! `(r_i, r_{i+1})` for `i = 1..N`, the last one coupling `r_N` to the tension
//! reservoir; noise on `p` lives on the bonds `(p_j, p_{j+1})` for `j = 0..N−1`,
//! the first one coupling `p_1` to the pinned particle.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundaryTensionProfile, TensionModel};
use crate::par::{self, Execution};
use crate::viscous_solver::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    /// Bath temperature `β⁻¹`.
    pub temperature: f64,
    /// `δ_mic = delta0·√N`.
    pub delta0: f64,
    /// Interaction force `V' = τ`.
    pub potential: TensionModel,
    /// Tension protocol in macroscopic time `t/N`.
    pub boundary: BoundaryTensionProfile,
    /// Fixed micro step; `None` uses [`ChainConfig::stable_dt`].
    pub dt: Option<f64>,
    pub ensemble: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn delta_mic(&self) -> f64 {
        self.delta0 * (self.n as f64).sqrt()
    }

    /// Viscosity seen on the macroscopic scale, `δ_mic / N`.
    pub fn delta_eff(&self) -> f64 {
        self.delta_mic() / self.n as f64
    }

    /// `min(0.1/√sup V'', 0.1/(4 δ_mic sup V''))`. The second term bounds the
    /// Euler–Maruyama bias of the stationary variance by 5% on the stiffest mode.
    pub fn stable_dt(&self) -> f64 {
        let stiff = self.potential.c2();
        let wave = 0.1 / stiff.sqrt();
        if self.delta_mic() > 0.0 {
            wave.min(0.1 / (4.0 * self.delta_mic() * stiff))
        } else {
            wave
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.stable_dt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least 2 sites"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid("temperature", "must be non-negative"));
        }
        if !(self.delta0.is_finite() && self.delta0 >= 0.0) {
            return Err(Error::invalid("delta0", "must be non-negative"));
        }
        if self.ensemble == 0 {
            return Err(Error::invalid("ensemble", "need at least one member"));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt <= 0.1 / self.potential.c2().sqrt() * (1.0 + 1e-12)) {
            return Err(Error::invalid("dt", format!("{dt} exceeds 0.1/sqrt(sup V'')")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// `r_1..r_N`.
    pub r: Vec<f64>,
    /// `p_1..p_N`.
    pub p: Vec<f64>,
    /// Microscopic time.
    pub t: f64,
}

impl ChainState {
    pub fn new(r: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if r.len() != p.len() || r.len() < 2 {
            return Err(Error::invalid("state", "r and p need equal length ≥ 2"));
        }
        if r.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::invalid("state", "non-finite entry"));
        }
        Ok(Self { r, p, t })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Private stream for ensemble member `member`.
pub fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

/// Local Gibbs state around the macroscopic profiles, sampled at `x = i/N`:
/// `r_i ~ r₀ + N(0, β⁻¹/V''(r₀))`, `p_i ~ p₀ + N(0, β⁻¹)`.
pub fn local_equilibrium<R: Rng, F: Fn(f64) -> f64, G: Fn(f64) -> f64>(
    config: &ChainConfig,
    r0: F,
    p0: G,
    rng: &mut R,
) -> ChainState {
    let n = config.n;
    let mut r = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 1..=n {
        let x = i as f64 / n as f64;
        let mean = r0(x);
        let zr: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        r.push(mean + (config.temperature / config.potential.dtau(mean)).sqrt() * zr);
        p.push(p0(x) + config.temperature.sqrt() * zp);
    }
    ChainState { r, p, t: 0.0 }
}

/// One Euler–Maruyama step of length `dt`.
pub fn sde_step<R: Rng>(state: &mut ChainState, config: &ChainConfig, dt: f64, rng: &mut R) -> Result<()> {
    let n = state.r.len();
    let delta = config.delta_mic();
    let tension = config.boundary.value(state.t / config.n as f64);
    let sigma = (2.0 * config.temperature * delta * dt).sqrt();
    let force: Vec<f64> = state.r.iter().map(|&r| config.potential.tau(r)).collect();
    // bond_r[k] = w̃_{k+1}, bond_p[k] = w_k.
    let (bond_r, bond_p): (Vec<f64>, Vec<f64>) = if sigma > 0.0 {
        (0..n)
            .map(|_| (rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
            .unzip()
    } else {
        (vec![0.0; n], vec![0.0; n])
    };
    let p = &state.p;
    let mut r_new = vec![0.0; n];
    let mut p_new = vec![0.0; n];
    for k in 0..n {
        let p_left = if k == 0 { 0.0 } else { p[k - 1] };
        let lap_r = if k == 0 {
            force[1] - force[0]
        } else if k == n - 1 {
            tension + force[n - 2] - 2.0 * force[n - 1]
        } else {
            force[k + 1] + force[k - 1] - 2.0 * force[k]
        };
        let noise_r = bond_r[k] - if k == 0 { 0.0 } else { bond_r[k - 1] };
        r_new[k] = state.r[k] + (p[k] - p_left + delta * lap_r) * dt - sigma * noise_r;

        let grad_f = if k == n - 1 { tension - force[k] } else { force[k + 1] - force[k] };
        let lap_p = if k == n - 1 {
            p[k - 1] - p[k]
        } else {
            p[k + 1] + p_left - 2.0 * p[k]
        };
        let noise_p = if k == n - 1 { 0.0 } else { bond_p[k + 1] } - bond_p[k];
        p_new[k] = p[k] + (grad_f + delta * lap_p) * dt - sigma * noise_p;
    }
    if r_new.iter().chain(&p_new).any(|v| !v.is_finite()) {
        return Err(Error::Unstable {
            time: state.t,
            detail: format!("chain state non-finite (N = {n}, dt = {dt})"),
        });
    }
    state.r = r_new;
    state.p = p_new;
    state.t += dt;
    Ok(())
}

/// Continuous test profile `G` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestProfile {
    One,
    X,
    SinPi,
}

impl TestProfile {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestProfile::One => 1.0,
            TestProfile::X => x,
            TestProfile::SinPi => (std::f64::consts::PI * x).sin(),
        }
    }
}

/// `(1/N) Σ G(i/N) (r_i, p_i)`.
pub fn empirical_profile<G: Fn(f64) -> f64>(state: &ChainState, g: G) -> (f64, f64) {
    let n = state.r.len();
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..n {
        let w = g((i + 1) as f64 / n as f64);
        a += w * state.r[i];
        b += w * state.p[i];
    }
    (a / n as f64, b / n as f64)
}

/// Runs one member to each macroscopic time in `times` (non-decreasing) and
/// records `empirical_profile` for every `G`; result indexed `[time][profile]`.
pub fn run_member<F: Fn(f64) -> f64, H: Fn(f64) -> f64>(
    config: &ChainConfig,
    r0: F,
    p0: H,
    times: &[f64],
    profiles: &[TestProfile],
    member: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut rng = member_rng(config.seed, member);
    let mut state = local_equilibrium(config, r0, p0, &mut rng);
    let dt = config.dt();
    let n = config.n as f64;
    let mut steps_done = 0u64;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let target = (t * n / dt).round() as u64;
        while steps_done < target {
            sde_step(&mut state, config, dt, &mut rng)?;
            steps_done += 1;
            // Avoid drift of the accumulated clock.
            state.t = steps_done as f64 * dt;
        }
        out.push(profiles.iter().map(|g| empirical_profile(&state, |x| g.eval(x))).collect());
    }
    Ok(out)
}

/// Ensemble observations `[member][time][profile]`.
pub fn ensemble<F, H>(
    config: &ChainConfig,
    r0: F,
    p0: H,
    times: &[f64],
    profiles: &[TestProfile],
    exec: Execution,
) -> Result<Vec<Vec<Vec<(f64, f64)>>>>
where
    F: Fn(f64) -> f64 + Sync,
    H: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    par::map_range(exec, config.ensemble, |m| {
        run_member(config, &r0, &p0, times, profiles, m)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroEntry {
    pub t: f64,
    pub profile: TestProfile,
    /// 0 for `r`, 1 for `p`.
    pub component: usize,
    pub chain_mean: f64,
    pub standard_error: f64,
    pub pde: f64,
    /// Noise-free lattice minus PDE: the error of replacing the continuum by
    /// `N` sites and Euler–Maruyama steps. For harmonic `V` the noise-free
    /// lattice is the exact ensemble mean.
    pub discretization: f64,
}

impl HydroEntry {
    pub fn deviation(&self) -> f64 {
        (self.chain_mean - self.pde).abs()
    }

    pub fn combined_error(&self) -> f64 {
        self.standard_error.hypot(self.discretization)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroReport {
    pub n: usize,
    pub ensemble: usize,
    pub delta_eff: f64,
    pub entries: Vec<HydroEntry>,
}

impl HydroReport {
    pub fn rms_deviation(&self) -> f64 {
        let s: f64 = self.entries.iter().map(|e| e.deviation().powi(2)).sum();
        (s / self.entries.len().max(1) as f64).sqrt()
    }

    /// Largest deviation in units of the combined error.
    pub fn max_score(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let c = e.combined_error();
                if c > 0.0 {
                    e.deviation() / c
                } else if e.deviation() == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,t,profile,component,chain_mean,standard_error,pde,discretization,deviation")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:?},{},{},{},{},{},{}",
                self.n,
                e.t,
                e.profile,
                if e.component == 0 { "r" } else { "p" },
                e.chain_mean,
                e.standard_error,
                e.pde,
                e.discretization,
                e.deviation()
            )?;
        }
        Ok(())
    }
}

/// Compares ensemble means of the empirical profiles with `pde`, a trajectory on
/// a grid of `N` cells whose snapshots (after the initial one) are at `times`.
/// The PDE side uses the same lattice sum `(1/N) Σ G(i/N) u(t, i/N)`.
/// The discretization term comes from one noise-free chain run from the
/// mean initial profile with the same step.
pub fn hydro_compare<F, H>(
    config: &ChainConfig,
    r0: F,
    p0: H,
    pde: &Trajectory,
    profiles: &[TestProfile],
    times: &[f64],
    exec: Execution,
) -> Result<HydroReport>
where
    F: Fn(f64) -> f64 + Sync,
    H: Fn(f64) -> f64 + Sync,
{
    if pde.grid().cells() != config.n {
        return Err(Error::invalid("pde", "trajectory grid must have N cells"));
    }
    let snaps: Vec<_> = times
        .iter()
        .map(|&t| {
            pde.snapshots
                .iter()
                .find(|s| (s.t - t).abs() < 1e-9)
                .ok_or_else(|| Error::invalid("times", format!("no PDE snapshot at t = {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cold = ChainConfig {
        temperature: 0.0,
        ..*config
    };
    let lattice = run_member(&cold, &r0, &p0, times, profiles, 0)?;
    let obs = ensemble(config, r0, p0, times, profiles, exec)?;
    let m = obs.len() as f64;
    let n = config.n;
    let mut entries = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let s = snaps[ti];
        for (gi, &g) in profiles.iter().enumerate() {
            for component in 0..2 {
                let values: Vec<f64> = obs
                    .iter()
                    .map(|o| if component == 0 { o[ti][gi].0 } else { o[ti][gi].1 })
                    .collect();
                let mean = values.iter().sum::<f64>() / m;
                let var = if values.len() > 1 {
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                let field = if component == 0 { &s.r } else { &s.p };
                let pde_value = (1..=n)
                    .map(|i| g.eval(i as f64 / n as f64) * field[i])
                    .sum::<f64>()
                    / n as f64;
                let cold_value = if component == 0 { lattice[ti][gi].0 } else { lattice[ti][gi].1 };
                entries.push(HydroEntry {
                    t,
                    profile: g,
                    component,
                    chain_mean: mean,
                    standard_error: (var / m).sqrt(),
                    pde: pde_value,
                    discretization: (cold_value - pde_value).abs(),
                });
            }
        }
    }
    Ok(HydroReport {
        n,
        ensemble: config.ensemble,
        delta_eff: config.delta_eff(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::LinearSpectralSolution;
    use crate::model::{make_linear_tension, make_softplus_tension, Grid, StateField};
    use std::f64::consts::PI;

    fn harmonic(n: usize, temperature: f64, delta0: f64, boundary: BoundaryTensionProfile) -> ChainConfig {
        ChainConfig {
            n,
            temperature,
            delta0,
            potential: make_linear_tension(1.0).unwrap(),
            boundary,
            dt: None,
            ensemble: 8,
            seed: 42,
        }
    }

    #[test]
    fn validation() {
        let mut c = harmonic(2, 0.1, 0.5, BoundaryTensionProfile::constant(0.0));
        assert!(c.validate().is_ok());
        c.n = 1;
        assert!(c.validate().is_err());
        c.n = 4;
        c.dt = Some(1.0);
        assert!(c.validate().is_err());
    }

    // δ = 0, τ̄ = 0, harmonic, N = 2: EM against an RK4 reference of the
    // Hamiltonian ODE; the error must be first order in dt.
    #[test]
    fn deterministic_two_site_chain_matches_ode() {
        let rhs = |u: [f64; 4]| [u[2], u[3] - u[2], u[1] - u[0], -u[1]];
        let reference = |t_end: f64| {
            let steps = 20000;
            let h = t_end / steps as f64;
            let mut u = [0.3, -0.2, 0.1, 0.05];
            for _ in 0..steps {
                let add = |a: [f64; 4], b: [f64; 4], s: f64| {
                    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
                };
                let k1 = rhs(u);
                let k2 = rhs(add(u, k1, h / 2.0));
                let k3 = rhs(add(u, k2, h / 2.0));
                let k4 = rhs(add(u, k3, h));
                for i in 0..4 {
                    u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            u
        };
        let t_end = 2.0;
        let exact = reference(t_end);
        let err = |dt: f64| {
            let cfg = ChainConfig {
                dt: Some(dt),
                ..harmonic(2, 0.0, 0.0, BoundaryTensionProfile::constant(0.0))
            };
            let mut s = ChainState::new(vec![0.3, -0.2], vec![0.1, 0.05], 0.0).unwrap();
            let mut rng = member_rng(1, 0);
            for _ in 0..(t_end / dt).round() as usize {
                sde_step(&mut s, &cfg, dt, &mut rng).unwrap();
            }
            let v = [s.r[0], s.r[1], s.p[0], s.p[1]];
            v.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e1 < 0.05);
        assert!((e1 / e2 - 2.0).abs() < 0.3, "{e1} {e2}");
    }

    #[test]
    fn drift_fixed_point_is_exact() {
        let m = make_softplus_tension(1.0, 2.0).unwrap();
        let r_star = 0.8;
        let cfg = ChainConfig {
            potential: m,
            ..harmonic(16, 0.0, 1.0, BoundaryTensionProfile::constant(m.tau(r_star)))
        };
        let mut s = ChainState::new(vec![r_star; 16], vec![0.0; 16], 0.0).unwrap();
        let mut rng = member_rng(3, 0);
        for _ in 0..100 {
            sde_step(&mut s, &cfg, cfg.dt(), &mut rng).unwrap();
        }
        assert!(s.r.iter().all(|&r| r == r_star));
        assert!(s.p.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn equal_seeds_give_identical_runs() {
        let cfg = harmonic(8, 0.2, 0.5, BoundaryTensionProfile::ramp(0.0, 0.5, 0.5).unwrap());
        let run = || run_member(&cfg, |_| 0.0, |_| 0.0, &[0.5, 1.0], &[TestProfile::X], 3).unwrap();
        assert_eq!(run(), run());
        let other = run_member(&cfg, |_| 0.0, |_| 0.0, &[0.5, 1.0], &[TestProfile::X], 4).unwrap();
        assert_ne!(run(), other);
    }

    #[test]
    fn empirical_profile_examples() {
        let s = ChainState::new(vec![2.0; 4], vec![0.1, 0.2, 0.3, 0.4], 0.0).unwrap();
        let (a, b) = empirical_profile(&s, |_| 1.0);
        assert!((a - 2.0).abs() < 1e-15 && (b - 0.25).abs() < 1e-15);
        assert_eq!(empirical_profile(&s, |_| 0.0), (0.0, 0.0));
    }

    #[test]
    fn thermal_chain_has_zero_mean_momentum_and_bath_temperature() {
        let temperature = 0.3;
        let cfg = ChainConfig {
            ensemble: 32,
            ..harmonic(32, temperature, 1.0, BoundaryTensionProfile::constant(0.0))
        };
        let obs = ensemble(&cfg, |_| 0.0, |_| 0.0, &[2.0], &[TestProfile::One], Execution::Parallel).unwrap();
        let vals: Vec<f64> = obs.iter().map(|o| o[0][0].1).collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!(mean.abs() <= 3.0 * sd / m.sqrt(), "{mean} {sd}");

        // Long run at frozen tension: per-site momentum variance → β⁻¹.
        let mut rng = member_rng(9, 0);
        let mut s = local_equilibrium(&cfg, |_| 0.0, |_| 0.0, &mut rng);
        let dt = cfg.dt();
        let (mut acc, mut count) = (0.0, 0.0);
        for step in 0..60_000 {
            sde_step(&mut s, &cfg, dt, &mut rng).unwrap();
            if step > 5000 && step % 50 == 0 {
                acc += s.p.iter().map(|p| p * p).sum::<f64>();
                count += s.p.len() as f64;
            }
        }
        let var = acc / count;
        assert!((var - temperature).abs() < 0.1 * temperature, "{var}");
    }

    #[test]
    fn harmonic_ensemble_mean_is_the_noise_free_lattice() {
        let cfg = ChainConfig {
            ensemble: 256,
            ..harmonic(16, 0.05, 0.5, BoundaryTensionProfile::ramp(0.0, 0.3, 0.5).unwrap())
        };
        let r0 = |x: f64| 0.2 * (0.5 * PI * x).cos();
        let p0 = |x: f64| 0.1 * (0.5 * PI * x).sin();
        let times = [0.5, 1.0];
        let prof = [TestProfile::One, TestProfile::SinPi];
        let cold = ChainConfig {
            temperature: 0.0,
            ..cfg
        };
        let lattice = run_member(&cold, r0, p0, &times, &prof, 0).unwrap();
        let obs = ensemble(&cfg, r0, p0, &times, &prof, Execution::Parallel).unwrap();
        let m = obs.len() as f64;
        for ti in 0..times.len() {
            for gi in 0..prof.len() {
                for c in 0..2 {
                    let pick = |v: (f64, f64)| if c == 0 { v.0 } else { v.1 };
                    let vals: Vec<f64> = obs.iter().map(|o| pick(o[ti][gi])).collect();
                    let mean = vals.iter().sum::<f64>() / m;
                    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
                    let z = (mean - pick(lattice[ti][gi])) / (sd / m.sqrt());
                    assert!(z.abs() < 4.0, "t = {} profile {gi} component {c}: z = {z}", times[ti]);
                }
            }
        }
    }

    fn spectral_reference(cfg: &ChainConfig, times: &[f64]) -> Trajectory {
        let g = Grid::new(cfg.n).unwrap();
        let a0 = cfg.boundary.value(0.0);
        let r = g.sample(|x| a0 + 0.2 * (0.5 * PI * x).cos());
        let p = g.sample(|x| 0.1 * (0.5 * PI * x).sin());
        let init = StateField::new(g, r, p, 0.0).unwrap();
        let mut all = vec![0.0];
        all.extend_from_slice(times);
        LinearSpectralSolution::new(&cfg.potential, cfg.boundary, cfg.delta_eff(), &init)
            .unwrap()
            .trajectory(g, &all)
            .unwrap()
    }

    #[test]
    fn equilibrium_protocol_stays_within_noise() {
        let cfg = ChainConfig {
            ensemble: 16,
            ..harmonic(32, 0.1, 0.5, BoundaryTensionProfile::constant(0.4))
        };
        let g = Grid::new(32).unwrap();
        let states = vec![
            StateField::constant(g, 0.4, 0.0),
            StateField::constant(g, 0.4, 0.0).with_time(0.5),
        ];
        let pde = Trajectory::from_snapshots(cfg.delta_eff(), states, &cfg.potential);
        let rep = hydro_compare(
            &cfg,
            |_| 0.4,
            |_| 0.0,
            &pde,
            &[TestProfile::One, TestProfile::SinPi],
            &[0.5],
            Execution::Sequential,
        )
        .unwrap();
        assert!(rep.max_score() <= 3.0, "{}", rep.max_score());
    }

    #[test]
    fn harmonic_chain_tracks_linear_pde() {
        let cfg = ChainConfig {
            ensemble: 16,
            ..harmonic(32, 0.05, 0.5, BoundaryTensionProfile::ramp(0.0, 0.4, 0.5).unwrap())
        };
        let times = [0.25, 0.5];
        let pde = spectral_reference(&cfg, &times);
        let rep = hydro_compare(
            &cfg,
            |x| 0.2 * (0.5 * PI * x).cos(),
            |x| 0.1 * (0.5 * PI * x).sin(),
            &pde,
            &[TestProfile::One, TestProfile::X],
            &times,
            Execution::Sequential,
        )
        .unwrap();
        assert!(rep.max_score() <= 3.0, "{:?}", rep.entries);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 2 * 2);
    }
}
