//! The acceptance suite: ten pass/fail criteria over the default experiment.
//!
//! Discretization tolerances are never hard-coded. They are `disc_factor`
//! times the error the same discretization makes on two oracles with known
//! answers: the equilibrium run and the linear-law run at the same `δ`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain_sde::{hydro_compare, HydroReport};
use crate::config::ExperimentConfig;
use crate::convergence_lab::{
    delta_sweep, max_abs, shipped_test_functions, sweep_report, weak_residual, Experiment, InitialProfile,
    Sweep, SweepReport,
};
use crate::entropy_pairs::{
    entropy_production, goursat_solve, problem_for_trajectories, FreeEnergyPair, TOL_SERIES,
};
use crate::error::Result;
use crate::greens::{
    lipschitz_test, mixed_identity_check, semigroup_apply, spectral_tail, wavenumber, IdentitySample,
    KernelKind, LinearSpectralSolution, SpectralKernel,
};
use crate::model::{BoundaryTensionProfile, Grid, StateField};
use crate::par::{self, Execution};
use crate::thermo::ThermoReport;
use crate::viscous_solver::{Trajectory, ViscousConfig, ViscousSolver};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: Value,
}

impl CriterionOutcome {
    fn new(id: u8, name: &str, passed: bool, summary: String, metrics: Value) -> Self {
        Self {
            id,
            name: name.into(),
            passed,
            summary,
            metrics,
        }
    }

    /// `[PASS] 3 strong convergence: ...`
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub criteria: Vec<CriterionOutcome>,
    /// Wall time per criterion; excluded from the serialized report.
    #[serde(skip)]
    pub timings: Vec<(u8, Duration)>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CriterionOutcome> {
        self.criteria.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn get(&self, id: u8) -> Option<&CriterionOutcome> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::MIN, f64::max);
    let lo = v.iter().copied().fold(f64::MAX, f64::min);
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Profiles `φ` used for the Lipschitz diagnostic.
pub fn lipschitz_profiles() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("sin(pi x/2)", |x| (0.5 * PI * x).sin()),
        ("cos(pi x/2)", |x| (0.5 * PI * x).cos()),
        ("x(1-x)", |x| x * (1.0 - x)),
        ("1", |_| 1.0),
    ]
}

/// Per-`δ` discretization errors on the two oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleErrors {
    pub delta: f64,
    /// `max_t |gap + dissipation|`.
    pub balance: f64,
    /// `max |cell identity residual|` of the free-energy budget.
    pub production: f64,
}

fn oracle_errors_for(exp: &Experiment, delta: f64) -> Result<OracleErrors> {
    let init = exp.prepare()?;
    let traj = exp.run(&init, delta)?;
    let thermo = ThermoReport::from_initial(&traj, &init, &exp.model, &exp.boundary)?;
    let prod = entropy_production(&FreeEnergyPair { model: exp.model }, &traj)?;
    Ok(OracleErrors {
        delta,
        balance: thermo.max_balance_residual(),
        production: prod.max_identity_residual(),
    })
}

/// Equilibrium and linear-law oracles at every `δ`, combined by max.
pub fn oracle_errors(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<OracleErrors>> {
    let base = cfg.experiment();
    let equilibrium = Experiment {
        boundary: BoundaryTensionProfile::constant(base.boundary.value(0.0)),
        initial: InitialProfile::Equilibrium,
        ..base
    };
    let linear = base.with_model(cfg.oracle_model()?);
    par::map(exec, &cfg.sweep.deltas, |&d| -> Result<OracleErrors> {
        let a = oracle_errors_for(&equilibrium, d)?;
        let b = oracle_errors_for(&linear, d)?;
        Ok(OracleErrors {
            delta: d,
            balance: a.balance.max(b.balance),
            production: a.production.max(b.production),
        })
    })
    .into_iter()
    .collect()
}

/// Shared state of one suite run.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub exec: Execution,
    pub sweep: Sweep,
    pub report: SweepReport,
    pub oracles: Vec<OracleErrors>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let sweep = delta_sweep(&cfg.experiment(), &cfg.sweep.deltas, exec)?;
        let report = sweep_report(&sweep, cfg.entropy.resolution, exec)?;
        let oracles = oracle_errors(cfg, exec)?;
        Ok(Self {
            cfg,
            exec,
            sweep,
            report,
            oracles,
        })
    }

    fn runs(&self) -> Vec<(f64, &Trajectory)> {
        self.sweep.successful()
    }

    fn oracle(&self, delta: f64) -> OracleErrors {
        *self.oracles.iter().find(|o| o.delta == delta).expect("oracle per delta")
    }

    fn sweep_complete(&self) -> bool {
        self.sweep.failures().is_empty()
    }
}

fn failed_runs(ctx: &Context) -> Value {
    json!(ctx
        .sweep
        .failures()
        .iter()
        .map(|(d, e)| json!({"delta": d, "error": e}))
        .collect::<Vec<_>>())
}

pub fn energy_bound(ctx: &Context) -> CriterionOutcome {
    let bound = ctx.report.gronwall_bound;
    let max_j: Vec<f64> = ctx.report.runs.iter().map(|r| r.max_j).collect();
    let worst = max_j.iter().copied().fold(f64::MIN, f64::max);
    let passed = ctx.sweep_complete() && max_j.iter().all(|&j| j <= bound);
    CriterionOutcome::new(
        1,
        "energy bound",
        passed,
        format!("max J = {worst:.4} vs common bound {bound:.4} over {} runs", max_j.len()),
        json!({"bound": bound, "deltas": ctx.report.deltas, "max_j": max_j, "failed_runs": failed_runs(ctx)}),
    )
}

/// Balance residual of the softplus run at `solve_delta` on `cells` and `2·cells`.
pub fn balance_refinement(cfg: &ExperimentConfig, exec: Execution) -> Result<(f64, f64)> {
    let exp = cfg.experiment();
    let delta = cfg.sweep.solve_delta;
    let res = par::map(exec, &[exp.cells, 2 * exp.cells], |&m| -> Result<f64> {
        let e = exp.with_cells(m);
        let init = e.prepare()?;
        let t = e.run(&init, delta)?;
        Ok(ThermoReport::from_initial(&t, &init, &e.model, &e.boundary)?.max_balance_residual())
    });
    let mut it = res.into_iter();
    Ok((it.next().unwrap()?, it.next().unwrap()?))
}

pub fn viscous_clausius(ctx: &Context) -> Result<CriterionOutcome> {
    let f = ctx.cfg.tolerances.disc_factor;
    let mut rows = Vec::new();
    let mut ok = ctx.sweep_complete();
    for r in &ctx.report.runs {
        let tol = f * ctx.oracle(r.delta).balance;
        ok &= r.max_clausius_gap <= tol;
        rows.push(json!({"delta": r.delta, "max_gap": r.max_clausius_gap, "tol_disc": tol}));
    }
    let (coarse, fine) = balance_refinement(ctx.cfg, ctx.exec)?;
    let ratio = coarse / fine;
    ok &= ratio >= ctx.cfg.tolerances.balance_refinement;
    let worst = ctx.report.runs.iter().map(|r| r.max_clausius_gap).fold(f64::MIN, f64::max);
    Ok(CriterionOutcome::new(
        2,
        "viscous Clausius",
        ok,
        format!("max gap {worst:.3e} within tol_disc; balance residual shrinks {ratio:.2}x under refinement"),
        json!({"runs": rows, "balance_coarse": coarse, "balance_fine": fine, "balance_ratio": ratio}),
    ))
}

pub fn strong_convergence(ctx: &Context) -> CriterionOutcome {
    let l1 = &ctx.report.l1_distances;
    let decreasing = !l1.is_empty() && l1.windows(2).all(|w| w[1] < w[0]);
    let s = ctx.report.l2_spread();
    let l2: Vec<f64> = ctx.report.runs.iter().map(|r| r.l2_norm).collect();
    let passed = ctx.sweep_complete() && decreasing && s < ctx.cfg.tolerances.l2_spread;
    CriterionOutcome::new(
        3,
        "strong convergence",
        passed,
        format!(
            "L1 Cauchy differences {} decreasing; L2 norm spread {:.2}% (limit {:.0}%)",
            if decreasing { "strictly" } else { "NOT" },
            100.0 * s,
            100.0 * ctx.cfg.tolerances.l2_spread
        ),
        json!({"l1_distances": l1, "l3_2_distances": ctx.report.l3_2_distances, "l2_norms": l2, "l2_spread": s}),
    )
}

/// Max weak residual over the shipped test functions on the linear-law
/// spectral solution at `delta`, sampled like the viscous runs.
pub fn weak_reference(cfg: &ExperimentConfig, delta: f64) -> Result<f64> {
    let exp = cfg.experiment().with_model(cfg.oracle_model()?);
    let init = exp.prepare()?;
    let times = exp.config(delta)?.snapshot_times;
    let traj = LinearSpectralSolution::new(&exp.model, exp.boundary, delta, &init.state)?
        .trajectory(exp.grid()?, &times)?;
    Ok(shipped_test_functions(exp.t_final)
        .iter()
        .map(|f| max_abs(&weak_residual(&traj, f, &exp.model, &exp.boundary)))
        .fold(0.0, f64::max))
}

pub fn weak_solution(ctx: &Context) -> Result<CriterionOutcome> {
    let runs = &ctx.report.runs;
    let per_delta: Vec<f64> = runs
        .iter()
        .map(|r| r.weak_residuals.iter().copied().fold(0.0, f64::max))
        .collect();
    let deltas: Vec<f64> = runs.iter().map(|r| r.delta).collect();
    let finest = runs.last().expect("at least one run");
    let reference = weak_reference(ctx.cfg, finest.delta)?;
    let t = &ctx.cfg.tolerances;
    let all_within = finest.weak_residuals.iter().all(|&w| w <= t.weak_ratio * reference);
    let slope = if deltas.len() >= 2 { log_log_slope(&deltas, &per_delta) } else { f64::NAN };
    let passed = ctx.sweep_complete() && all_within && slope >= t.weak_slope;
    Ok(CriterionOutcome::new(
        4,
        "weak solution",
        passed,
        format!(
            "finest max residual {:.3e} vs {}x oracle {:.3e}; log-log slope {:.3}",
            per_delta.last().unwrap(),
            t.weak_ratio,
            reference,
            slope
        ),
        json!({
            "test_functions": ctx.report.test_functions,
            "finest_residuals": finest.weak_residuals,
            "oracle_reference": reference,
            "max_residual_per_delta": per_delta,
            "slope": slope,
        }),
    ))
}

pub fn lax_pairs(ctx: &Context) -> Result<CriterionOutcome> {
    let cfg = ctx.cfg;
    let runs = ctx.runs();
    let trajs: Vec<&Trajectory> = runs.iter().map(|(_, t)| *t).collect();
    let (coords, fine_problem) = problem_for_trajectories(&cfg.model, &trajs, cfg.entropy.resolution)?;
    let coarse_problem = fine_problem.clone().with_resolution(cfg.entropy.resolution / 2)?;
    let problems = [coarse_problem, fine_problem];
    let pairs = par::map(ctx.exec, &problems, |p| goursat_solve(p, &cfg.model, &coords, TOL_SERIES));
    let mut it = pairs.into_iter();
    let (coarse, fine) = (it.next().unwrap()?, it.next().unwrap()?);
    let (rc, rf) = (coarse.lax_residual(&cfg.model), fine.lax_residual(&cfg.model));
    let (dh, dq) = fine.goursat_defects();
    let ratios = (rc.first / rf.first, rc.second / rf.second);
    let inc = fine.increment_ratio();
    let t = &cfg.tolerances;
    let passed = dh == 0.0
        && dq == 0.0
        && ratios.0 >= t.lax_refinement
        && ratios.1 >= t.lax_refinement
        && inc < t.series_ratio;
    Ok(CriterionOutcome::new(
        5,
        "Lax entropy pairs",
        passed,
        format!(
            "Goursat defects ({dh:e}, {dq:e}); residual refinement ratios ({:.2}, {:.2}); series ratio {inc:.2e}",
            ratios.0, ratios.1
        ),
        json!({
            "goursat_defects": [dh, dq],
            "residual_coarse": [rc.first, rc.second],
            "residual_fine": [rf.first, rf.second],
            "refinement_ratios": [ratios.0, ratios.1],
            "increments": fine.increments,
            "increment_ratio": inc,
            "depth": fine.depth,
        }),
    ))
}

pub fn local_lax(ctx: &Context) -> Result<CriterionOutcome> {
    let pair = FreeEnergyPair { model: ctx.cfg.model };
    let runs = ctx.runs();
    let rows = par::map(ctx.exec, &runs, |&(d, t)| -> Result<(f64, f64, f64, f64)> {
        let prod = entropy_production(&pair, t)?;
        let tol = ctx.cfg.tolerances.disc_factor * ctx.oracle(d).production;
        Ok((d, prod.min_production(), tol, prod.fraction_above(tol)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let passed = ctx.sweep_complete() && rows.iter().all(|r| r.3 == 1.0);
    let worst = rows.iter().map(|r| r.3).fold(1.0, f64::min);
    Ok(CriterionOutcome::new(
        6,
        "local Lax condition",
        passed,
        format!("{:.4}% of cells above -tol_disc in the worst run", 100.0 * worst),
        json!(rows
            .iter()
            .map(|r| json!({"delta": r.0, "min_production": r.1, "tol_disc": r.2, "fraction_ok": r.3}))
            .collect::<Vec<_>>()),
    ))
}

/// Identity defects over random samples, for every sweep `δ`.
pub fn identity_defects(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<IdentitySample> = (0..cfg.greens.identity_samples)
        .map(|_| IdentitySample {
            x: rng.random(),
            xp: rng.random(),
            t: rng.random_range(0.05..2.0),
        })
        .collect();
    cfg.sweep
        .deltas
        .iter()
        .map(|&d| {
            let p = SpectralKernel::new(KernelKind::P, d)?;
            let r = SpectralKernel::new(KernelKind::R, d)?;
            Ok((d, mixed_identity_check(&p, &r, &samples)?.max()))
        })
        .collect()
}

/// `(defect, bound)` of `S_t S_s f` against `S_{s+t} f` for both kernels,
/// with profiles whose coefficients have modulus `k⁻³`. The bound is the
/// L² spectral tail beyond the one-shot cutoff plus a rounding allowance of
/// `ε · modes · ‖f‖∞` for the projection and resynthesis sums.
pub fn composition_defects(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    let grid = Grid::new(cfg.grid.cells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut out = Vec::new();
    for kind in [KernelKind::P, KernelKind::R] {
        let k = SpectralKernel::new(kind, cfg.sweep.solve_delta)?;
        let f = match kind {
            KernelKind::P => grid.sample(|x| x - 0.5 * x * x),
            KernelKind::R => grid.sample(|x| 0.5 * (1.0 - x * x)),
        };
        let s = rng.random_range(0.01..0.5);
        let t = rng.random_range(0.01..0.5);
        let two = semigroup_apply(&k, grid, &semigroup_apply(&k, grid, &f, s), t);
        let one = semigroup_apply(&k, grid, &f, s + t);
        let diff: Vec<f64> = two.iter().zip(&one).map(|(a, b)| (a - b) * (a - b)).collect();
        let last = k.mode_count(s + t).min(SpectralKernel::grid_mode_limit(grid));
        let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rounding = f64::EPSILON * last as f64 * sup;
        let bound = spectral_tail(&k, s + t, last, |n| wavenumber(n).powi(-3)) + rounding;
        out.push((grid.integrate(&diff).sqrt(), bound));
    }
    Ok(out)
}

/// Linear-law finite differences against the spectral solution on `cells`,
/// `2·cells` and `4·cells`: returns `(error, Richardson prediction)` for the
/// two coarser grids, both as maxima over snapshots and nodes.
pub fn richardson_check(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<(usize, f64, f64)>> {
    let model = cfg.oracle_model()?;
    let boundary = cfg.boundary;
    let delta = cfg.sweep.solve_delta;
    let base = cfg.grid.cells / 2;
    let sizes = [base, 2 * base, 4 * base];
    let (ra, pa) = match cfg.initial {
        InitialProfile::Wave {
            r_amplitude,
            p_amplitude,
        } => (r_amplitude, p_amplitude),
        InitialProfile::Equilibrium => (0.0, 0.0),
    };
    let a0 = model.inverse(boundary.value(0.0))?;
    let runs = par::map(exec, &sizes, |&m| -> Result<(Trajectory, Vec<StateField>)> {
        let g = Grid::new(m)?;
        let init = StateField::new(
            g,
            g.sample(|x| a0 + ra * (0.5 * PI * x).cos()),
            g.sample(|x| pa * (0.5 * PI * x).sin()),
            0.0,
        )?;
        let vc = ViscousConfig::uniform(g, &model, delta, cfg.grid.t_final.max(1e-9), 8, cfg.grid.scheme)?;
        let fd = ViscousSolver::new(g, model, boundary, vc)?.solve(&init)?;
        let sp = LinearSpectralSolution::new(&model, boundary, delta, &init)?.states_on(g, &fd.times())?;
        Ok((fd, sp))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let sup = |a: &[StateField], b: &[StateField], stride: usize| {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| {
                (0..x.r.len()).map(move |j| {
                    (x.r[j] - y.r[stride * j])
                        .abs()
                        .max((x.p[j] - y.p[stride * j]).abs())
                })
            })
            .fold(0.0, f64::max)
    };
    Ok((0..2)
        .map(|i| {
            let error = sup(&runs[i].0.snapshots, &runs[i].1, 1);
            let predicted = 4.0 / 3.0 * sup(&runs[i].0.snapshots, &runs[i + 1].0.snapshots, 2);
            (sizes[i], error, predicted)
        })
        .collect())
}

pub fn green_identities(ctx: &Context) -> Result<CriterionOutcome> {
    let cfg = ctx.cfg;
    let ids = identity_defects(cfg)?;
    let comp = composition_defects(cfg)?;
    let rich = richardson_check(cfg, ctx.exec)?;
    let f = cfg.tolerances.richardson_factor;
    let id_max = ids.iter().map(|v| v.1).fold(0.0, f64::max);
    let passed = id_max <= cfg.tolerances.identity
        && comp.iter().all(|&(d, b)| d <= b)
        && rich.iter().all(|&(_, e, p)| e <= f * p && p <= f * e);
    let rich_ratio: Vec<f64> = rich.iter().map(|r| r.1 / r.2).collect();
    Ok(CriterionOutcome::new(
        7,
        "Green identities",
        passed,
        format!(
            "identity defect {id_max:.2e}; composition {:.2e} / {:.2e} vs tails {:.2e} / {:.2e}; FD error / Richardson {:.3} / {:.3}",
            comp[0].0, comp[1].0, comp[0].1, comp[1].1, rich_ratio[0], rich_ratio[1]
        ),
        json!({
            "identity_defects": ids.iter().map(|v| json!({"delta": v.0, "max": v.1})).collect::<Vec<_>>(),
            "composition": comp.iter().map(|v| json!({"defect": v.0, "tail_bound": v.1})).collect::<Vec<_>>(),
            "richardson": rich.iter().map(|v| json!({"cells": v.0, "error": v.1, "predicted": v.2})).collect::<Vec<_>>(),
        }),
    ))
}

pub fn lipschitz(ctx: &Context) -> CriterionOutcome {
    let profiles = lipschitz_profiles();
    let mut per_delta = Vec::new();
    let mut rows = Vec::new();
    for (d, t) in ctx.runs() {
        let ratios: Vec<f64> = profiles.iter().map(|(_, phi)| lipschitz_test(t, phi).ratio()).collect();
        per_delta.push(ratios.iter().copied().fold(0.0, f64::max));
        rows.push(json!({"delta": d, "ratios": ratios}));
    }
    let s = spread(&per_delta);
    let passed = ctx.sweep_complete() && s < ctx.cfg.tolerances.lipschitz_spread;
    CriterionOutcome::new(
        8,
        "Lipschitz continuity",
        passed,
        format!(
            "constant estimates {:.3}..{:.3}, spread {:.1}% (limit {:.0}%)",
            per_delta.iter().copied().fold(f64::MAX, f64::min),
            per_delta.iter().copied().fold(f64::MIN, f64::max),
            100.0 * s,
            100.0 * ctx.cfg.tolerances.lipschitz_spread
        ),
        json!({
            "profiles": profiles.iter().map(|p| p.0).collect::<Vec<_>>(),
            "runs": rows,
            "max_per_delta": per_delta,
            "spread": s,
        }),
    )
}

/// Chain ensemble against the linear viscous system at `δ_mic / N`.
pub fn chain_report(cfg: &ExperimentConfig, n: usize, exec: Execution) -> Result<HydroReport> {
    let chain = cfg.chain_config(n)?;
    let c = &cfg.chain;
    let a0 = chain.potential.inverse(c.boundary.value(0.0))?;
    let (ra, pa) = (c.r_amplitude, c.p_amplitude);
    let r0 = move |x: f64| a0 + ra * (0.5 * PI * x).cos();
    let p0 = move |x: f64| pa * (0.5 * PI * x).sin();
    let g = Grid::new(n)?;
    let init = StateField::new(g, g.sample(r0), g.sample(p0), 0.0)?;
    let mut times = vec![0.0];
    times.extend_from_slice(&c.times);
    let pde = LinearSpectralSolution::new(&chain.potential, c.boundary, chain.delta_eff(), &init)?
        .trajectory(g, &times)?;
    hydro_compare(&chain, r0, p0, &pde, &c.profiles, &c.times, exec)
}

pub fn hydrodynamics(cfg: &ExperimentConfig, exec: Execution) -> Result<(CriterionOutcome, Vec<HydroReport>)> {
    let reports = cfg
        .chain
        .sizes
        .iter()
        .map(|&n| chain_report(cfg, n, exec))
        .collect::<Result<Vec<_>>>()?;
    let rms: Vec<f64> = reports.iter().map(|r| r.rms_deviation()).collect();
    let last = reports.last().expect("sizes non-empty");
    let score = last.max_score();
    let monotone = rms.windows(2).all(|w| w[1] <= w[0]);
    let passed = score <= cfg.tolerances.chain_sigmas && monotone;
    let outcome = CriterionOutcome::new(
        9,
        "hydrodynamic consistency",
        passed,
        format!(
            "N = {}: max deviation {:.2} combined SE (limit {}); RMS deviation {} over N = {:?}",
            last.n,
            score,
            cfg.tolerances.chain_sigmas,
            if monotone { "nonincreasing" } else { "NOT nonincreasing" },
            cfg.chain.sizes
        ),
        json!({
            "sizes": cfg.chain.sizes,
            "rms_deviation": rms,
            "max_score": reports.iter().map(|r| r.max_score()).collect::<Vec<_>>(),
            "delta_eff": reports.iter().map(|r| r.delta_eff).collect::<Vec<_>>(),
            "max_standard_error": reports
                .iter()
                .map(|r| r.entries.iter().map(|e| e.standard_error).fold(0.0, f64::max))
                .collect::<Vec<_>>(),
            "max_discretization": reports
                .iter()
                .map(|r| r.entries.iter().map(|e| e.discretization).fold(0.0, f64::max))
                .collect::<Vec<_>>(),
        }),
    );
    Ok((outcome, reports))
}

fn timed<T>(timings: &mut Vec<(u8, Duration)>, id: u8, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((id, start.elapsed()));
    out
}

/// Criteria 1–9.
pub fn run_suite(cfg: &ExperimentConfig, exec: Execution) -> Result<AcceptanceReport> {
    let mut timings = Vec::new();
    let ctx = timed(&mut timings, 0, || Context::new(cfg, exec))?;
    let criteria = vec![
        timed(&mut timings, 1, || energy_bound(&ctx)),
        timed(&mut timings, 2, || viscous_clausius(&ctx))?,
        timed(&mut timings, 3, || strong_convergence(&ctx)),
        timed(&mut timings, 4, || weak_solution(&ctx))?,
        timed(&mut timings, 5, || lax_pairs(&ctx))?,
        timed(&mut timings, 6, || local_lax(&ctx))?,
        timed(&mut timings, 7, || green_identities(&ctx))?,
        timed(&mut timings, 8, || lipschitz(&ctx)),
        timed(&mut timings, 9, || hydrodynamics(cfg, exec))?.0,
    ];
    Ok(AcceptanceReport {
        seed: cfg.seed,
        criteria,
        timings,
    })
}

/// Runs the suite twice and appends the determinism criterion, which passes
/// when both serialized reports are byte-identical.
pub fn verify(cfg: &ExperimentConfig, exec: Execution) -> Result<AcceptanceReport> {
    let mut first = run_suite(cfg, exec)?;
    let start = Instant::now();
    let second = run_suite(cfg, exec)?;
    let (a, b) = (first.to_json(), second.to_json());
    let same = a == b;
    first.timings.push((10, start.elapsed()));
    first.criteria.push(CriterionOutcome::new(
        10,
        "determinism",
        same,
        format!(
            "repeat run with seed {} {}",
            cfg.seed,
            if same { "byte-identical" } else { "DIFFERS" }
        ),
        json!({"bytes": a.len(), "identical": same}),
    ));
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TensionModel;

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn spread_examples() {
        assert_eq!(spread(&[1.0, 1.0]), 0.0);
        assert!((spread(&[0.8, 1.0, 0.9]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn profiles_are_distinct() {
        let p = lipschitz_profiles();
        assert_eq!(p.len(), 4);
        assert!((p[0].1(1.0) - 1.0).abs() < 1e-15 && p[2].1(1.0) == 0.0);
    }

    #[test]
    fn composition_within_tail() {
        let cfg = ExperimentConfig::default();
        for (d, b) in composition_defects(&cfg).unwrap() {
            assert!(d <= b, "{d} {b}");
        }
    }

    #[test]
    fn oracle_model_is_linear() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.oracle_model().unwrap(), TensionModel::Linear { .. }));
    }
}
