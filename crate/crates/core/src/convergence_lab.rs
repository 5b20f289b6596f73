//! The vanishing-viscosity sweep: strong convergence in `L^p(Q_T)`, weak
//! residuals of the inviscid equations, and Young-measure diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::entropy_pairs::{
    goursat_solve, riemann_z, EntropyFlux, EntropyPair, GoursatProblem, TOL_SERIES,
};
use crate::error::{Error, Result};
use crate::model::{mollify_initial_data, BoundaryTensionProfile, Grid, InitialData, TensionModel};
use crate::par::{self, Execution};
use crate::quadrature::trapezoid_nonuniform;
use crate::thermo::ThermoReport;
use crate::viscous_solver::{Scheme, Trajectory, ViscousConfig, ViscousSolver};

/// Raw (unmollified) initial profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialProfile {
    /// `r₀ = a₀ + A cos(πx/2)`, `p₀ = B sin(πx/2)` with `a₀ = τ⁻¹(τ̄(0))`.
    Wave { r_amplitude: f64, p_amplitude: f64 },
    /// `r₀ ≡ a₀`, `p₀ ≡ 0`.
    Equilibrium,
}

/// One viscous experiment, parameterized by `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: TensionModel,
    pub boundary: BoundaryTensionProfile,
    pub cells: usize,
    pub t_final: f64,
    /// Number of snapshot intervals.
    pub snapshots: usize,
    pub scheme: Scheme,
    pub mollifier_width: f64,
    pub initial: InitialProfile,
}

impl Experiment {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.cells)
    }

    pub fn raw_data(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.grid()?;
        let a0 = self.model.inverse(self.boundary.value(0.0))?;
        Ok(match self.initial {
            InitialProfile::Wave {
                r_amplitude,
                p_amplitude,
            } => (
                g.sample(|x| a0 + r_amplitude * (0.5 * PI * x).cos()),
                g.sample(|x| p_amplitude * (0.5 * PI * x).sin()),
            ),
            InitialProfile::Equilibrium => (vec![a0; g.nodes()], vec![0.0; g.nodes()]),
        })
    }

    pub fn prepare(&self) -> Result<InitialData> {
        let (r, p) = self.raw_data()?;
        mollify_initial_data(
            self.grid()?,
            &r,
            &p,
            &self.model,
            &self.boundary,
            self.mollifier_width,
        )
    }

    pub fn config(&self, delta: f64) -> Result<ViscousConfig> {
        ViscousConfig::uniform(
            self.grid()?,
            &self.model,
            delta,
            self.t_final,
            self.snapshots,
            self.scheme,
        )
    }

    pub fn run(&self, init: &InitialData, delta: f64) -> Result<Trajectory> {
        ViscousSolver::new(self.grid()?, self.model, self.boundary, self.config(delta)?)?
            .solve(&init.state)
    }

    pub fn with_model(mut self, model: TensionModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.cells = cells;
        self
    }
}

/// Normalized `(T⁻¹ ∫∫ |u|^p)^{1/p}` over `Q_T`, `|·|` Euclidean in `(r, p)`.
pub fn lp_norm(trajectory: &Trajectory, exponent: f64) -> f64 {
    lp_distance_with(trajectory, None, exponent)
}

/// `‖u − v‖_{L^p(Q_T)}` for trajectories on the same grid and snapshot times.
pub fn lp_distance(a: &Trajectory, b: &Trajectory, exponent: f64) -> Result<f64> {
    if a.grid() != b.grid() || a.snapshots.len() != b.snapshots.len() {
        return Err(Error::invalid("trajectory", "runs must share grid and snapshots"));
    }
    Ok(lp_distance_with(a, Some(b), exponent))
}

fn lp_distance_with(a: &Trajectory, b: Option<&Trajectory>, exponent: f64) -> f64 {
    let g = a.grid();
    let times = a.times();
    let slices: Vec<f64> = a
        .snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let w: Vec<f64> = (0..g.nodes())
                .map(|j| {
                    let (dr, dp) = match b {
                        Some(o) => (s.r[j] - o.snapshots[k].r[j], s.p[j] - o.snapshots[k].p[j]),
                        None => (s.r[j], s.p[j]),
                    };
                    dr.hypot(dp).powf(exponent)
                })
                .collect();
            g.integrate(&w)
        })
        .collect();
    let horizon = times.last().copied().unwrap_or(0.0);
    let mean = if horizon > 0.0 {
        trapezoid_nonuniform(&times, &slices) / horizon
    } else {
        slices[0]
    };
    mean.powf(1.0 / exponent)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    R,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    OneMinusX,
    CosHalfPi,
    X,
    SinHalfPi,
}

impl Shape {
    fn value(self, x: f64) -> f64 {
        match self {
            Shape::OneMinusX => 1.0 - x,
            Shape::CosHalfPi => (0.5 * PI * x).cos(),
            Shape::X => x,
            Shape::SinHalfPi => (0.5 * PI * x).sin(),
        }
    }

    fn dx(self, x: f64) -> f64 {
        match self {
            Shape::OneMinusX => -1.0,
            Shape::CosHalfPi => -0.5 * PI * (0.5 * PI * x).sin(),
            Shape::X => 1.0,
            Shape::SinHalfPi => 0.5 * PI * (0.5 * PI * x).cos(),
        }
    }
}

/// `φ(t, x) = (t/T)^k · X(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub equation: Equation,
    pub degree: i32,
    pub shape: Shape,
    pub horizon: f64,
}

impl TestFunction {
    /// Rejects shapes that violate `φ(t, 1) = 0` (r-tests) or `ψ(t, 0) = 0` (p-tests).
    pub fn new(equation: Equation, degree: i32, shape: Shape, horizon: f64) -> Result<Self> {
        let edge = match equation {
            Equation::R => shape.value(1.0),
            Equation::P => shape.value(0.0),
        };
        if edge.abs() > 1e-12 {
            return Err(Error::InadmissibleTestFunction(format!(
                "{shape:?} does not vanish on the {equation:?} boundary"
            )));
        }
        if !(horizon > 0.0) || degree < 0 {
            return Err(Error::invalid("test_function", "need horizon > 0 and degree ≥ 0"));
        }
        Ok(Self {
            equation,
            degree,
            shape,
            horizon,
        })
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        (t / self.horizon).powi(self.degree) * self.shape.value(x)
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        if self.degree == 0 {
            0.0
        } else {
            self.degree as f64 / self.horizon * (t / self.horizon).powi(self.degree - 1) * self.shape.value(x)
        }
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        (t / self.horizon).powi(self.degree) * self.shape.dx(x)
    }

    pub fn label(&self) -> String {
        format!("{:?}-{:?}-t{}", self.equation, self.shape, self.degree).to_lowercase()
    }
}

/// The 16 shipped test functions: degrees 0..=3 times two shapes per equation.
pub fn shipped_test_functions(horizon: f64) -> Vec<TestFunction> {
    let mut out = Vec::with_capacity(16);
    for (eq, shapes) in [
        (Equation::R, [Shape::OneMinusX, Shape::CosHalfPi]),
        (Equation::P, [Shape::X, Shape::SinHalfPi]),
    ] {
        for shape in shapes {
            for degree in 0..4 {
                out.push(TestFunction::new(eq, degree, shape, horizon).expect("admissible"));
            }
        }
    }
    out
}

/// LHS − RHS of the weak form of the inviscid equation at each snapshot.
pub fn weak_residual(
    trajectory: &Trajectory,
    phi: &TestFunction,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Vec<f64> {
    let g = trajectory.grid();
    let xs = g.coordinates();
    let moment = |k: usize| {
        let s = &trajectory.snapshots[k];
        let u = match phi.equation {
            Equation::R => &s.r,
            Equation::P => &s.p,
        };
        let w: Vec<f64> = xs.iter().zip(u).map(|(&x, &v)| phi.value(s.t, x) * v).collect();
        g.integrate(&w)
    };
    // `∫ φ_x v` as Σ (φ_{j+1} − φ_j)(v_j + v_{j+1})/2, exact for constant v.
    let integrand: Vec<f64> = trajectory
        .snapshots
        .iter()
        .map(|s| {
            let (u, flux): (&[f64], Vec<f64>) = match phi.equation {
                Equation::R => (&s.r, s.p.clone()),
                Equation::P => (&s.p, s.r.iter().map(|&r| model.tau(r)).collect()),
            };
            let w: Vec<f64> = (0..g.nodes()).map(|j| phi.dt(s.t, xs[j]) * u[j]).collect();
            let transport: f64 = (0..g.cells())
                .map(|j| {
                    (phi.value(s.t, xs[j + 1]) - phi.value(s.t, xs[j])) * 0.5 * (flux[j] + flux[j + 1])
                })
                .sum();
            let boundary_term = match phi.equation {
                Equation::R => 0.0,
                Equation::P => phi.value(s.t, 1.0) * boundary.value(s.t),
            };
            g.integrate(&w) - transport + boundary_term
        })
        .collect();
    let times = trajectory.times();
    let rhs = cumulative_end_corrected(&times, &integrand);
    let m0 = moment(0);
    (0..times.len()).map(|k| moment(k) - m0 - rhs[k]).collect()
}

/// Cumulative trapezoid with the Euler–Maclaurin end correction
/// `−h²/12 (f'(t_k) − f'(t_0))`, derivatives by second-order differences.
/// Fourth order on uniform samples; plain trapezoid otherwise.
pub fn cumulative_end_corrected(t: &[f64], f: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        out[k] = out[k - 1] + 0.5 * (t[k] - t[k - 1]) * (f[k - 1] + f[k]);
    }
    if n < 3 {
        return out;
    }
    let h = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300)) {
        return out;
    }
    let d = |k: usize| {
        if k == 0 {
            (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * f[k] - 4.0 * f[k - 1] + f[k - 2]) / (2.0 * h)
        } else {
            (f[k + 1] - f[k - 1]) / (2.0 * h)
        }
    };
    let d0 = d(0);
    for (k, v) in out.iter_mut().enumerate().skip(1) {
        *v -= h * h / 12.0 * (d(k) - d0);
    }
    out
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Space–time box partition of the snapshot grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub time_boxes: usize,
    pub space_boxes: usize,
}

impl Default for BoxPartition {
    fn default() -> Self {
        Self {
            time_boxes: 8,
            space_boxes: 8,
        }
    }
}

impl BoxPartition {
    /// Index ranges `(snapshots, nodes)` of each box, row-major in time.
    fn ranges(&self, snapshots: usize, nodes: usize) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let split = |n: usize, parts: usize| -> Vec<std::ops::Range<usize>> {
            (0..parts).map(|k| (k * n / parts)..((k + 1) * n / parts)).collect()
        };
        let ts = split(snapshots, self.time_boxes);
        let xs = split(nodes, self.space_boxes);
        ts.iter()
            .flat_map(|t| xs.iter().map(move |x| (t.clone(), x.clone())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungDiagnostic {
    pub partition: BoxPartition,
    pub counts: Vec<usize>,
    pub means: Vec<[f64; 2]>,
    /// Trace of the sample covariance of `(r, p)` in each box.
    pub variances: Vec<f64>,
}

impl YoungDiagnostic {
    pub fn max_variance(&self) -> f64 {
        self.variances.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_count(&self) -> usize {
        self.counts.iter().copied().min().unwrap_or(0)
    }
}

pub fn young_concentration(trajectory: &Trajectory, partition: BoxPartition) -> YoungDiagnostic {
    let boxes = partition.ranges(trajectory.snapshots.len(), trajectory.grid().nodes());
    let mut out = YoungDiagnostic {
        partition,
        counts: Vec::with_capacity(boxes.len()),
        means: Vec::with_capacity(boxes.len()),
        variances: Vec::with_capacity(boxes.len()),
    };
    for (tr, xr) in boxes {
        let mut n = 0usize;
        let (mut sr, mut sp) = (0.0, 0.0);
        for k in tr.clone() {
            let s = &trajectory.snapshots[k];
            for j in xr.clone() {
                sr += s.r[j];
                sp += s.p[j];
                n += 1;
            }
        }
        let (mr, mp) = (sr / n as f64, sp / n as f64);
        let mut var = 0.0;
        for k in tr {
            let s = &trajectory.snapshots[k];
            for j in xr.clone() {
                var += (s.r[j] - mr).powi(2) + (s.p[j] - mp).powi(2);
            }
        }
        out.counts.push(n);
        out.means.push([mr, mp]);
        out.variances.push(var / n as f64);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TartarDefect {
    /// `|⟨ηq′ − η′q⟩ − (⟨η⟩⟨q′⟩ − ⟨η′⟩⟨q⟩)|` per box; `None` if a state left a rectangle.
    pub per_box: Vec<Option<f64>>,
}

impl TartarDefect {
    pub fn max(&self) -> f64 {
        self.per_box.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        let v: Vec<f64> = self.per_box.iter().flatten().copied().collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn flagged(&self) -> usize {
        self.per_box.iter().filter(|b| b.is_none()).count()
    }
}

pub fn tartar_defect(
    trajectory: &Trajectory,
    pair1: &dyn EntropyFlux,
    pair2: &dyn EntropyFlux,
    partition: BoxPartition,
) -> TartarDefect {
    let boxes = partition.ranges(trajectory.snapshots.len(), trajectory.grid().nodes());
    let per_box = boxes
        .into_iter()
        .map(|(tr, xr)| {
            let mut n = 0.0;
            let (mut cross, mut e1, mut e2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in tr {
                let s = &trajectory.snapshots[k];
                for j in xr.clone() {
                    let a = pair1.jet(s.r[j], s.p[j]).ok()?;
                    let b = pair2.jet(s.r[j], s.p[j]).ok()?;
                    cross += a.eta * b.q - b.eta * a.q;
                    e1 += a.eta;
                    e2 += b.eta;
                    q1 += a.q;
                    q2 += b.q;
                    n += 1.0;
                }
            }
            Some((cross / n - (e1 / n * q2 / n - e2 / n * q1 / n)).abs())
        })
        .collect();
    TartarDefect { per_box }
}

/// Two hat-datum pairs with different supports on a rectangle covering `trajectories`.
pub fn tartar_pairs(
    model: &TensionModel,
    trajectories: &[&Trajectory],
    resolution: usize,
) -> Result<(EntropyPair, EntropyPair)> {
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
    let base = GoursatProblem::covering(&coords, &states, resolution)?;
    let (c, e) = (base.corner.1, base.extent.1);
    let first = base.with_datum(crate::entropy_pairs::GoursatDatum::Hat {
        center: c + 0.4 * e,
        half_width: 0.25 * e,
        height: 1.0,
    })?;
    let second = base.with_datum(crate::entropy_pairs::GoursatDatum::Hat {
        center: c + 0.6 * e,
        half_width: 0.2 * e,
        height: 1.0,
    })?;
    Ok((
        goursat_solve(&first, model, &coords, TOL_SERIES)?,
        goursat_solve(&second, model, &coords, TOL_SERIES)?,
    ))
}

/// Trajectories of one experiment across a list of viscosities.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub experiment: Experiment,
    pub init: InitialData,
    pub deltas: Vec<f64>,
    pub runs: Vec<std::result::Result<Trajectory, String>>,
}

impl Sweep {
    pub fn successful(&self) -> Vec<(f64, &Trajectory)> {
        self.deltas
            .iter()
            .zip(&self.runs)
            .filter_map(|(&d, r)| r.as_ref().ok().map(|t| (d, t)))
            .collect()
    }

    pub fn failures(&self) -> Vec<(f64, String)> {
        self.deltas
            .iter()
            .zip(&self.runs)
            .filter_map(|(&d, r)| r.as_ref().err().map(|e| (d, e.clone())))
            .collect()
    }
}

/// Runs the experiment for every `δ` (strictly decreasing). Failed runs are kept as errors.
pub fn delta_sweep(experiment: &Experiment, deltas: &[f64], exec: Execution) -> Result<Sweep> {
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("deltas", "must be non-empty and strictly decreasing"));
    }
    let init = experiment.prepare()?;
    let runs = par::map(exec, deltas, |&d| {
        experiment.run(&init, d).map_err(|e| e.to_string())
    });
    Ok(Sweep {
        experiment: *experiment,
        init,
        deltas: deltas.to_vec(),
        runs,
    })
}

/// Per-run summary inside a [`SweepReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub delta: f64,
    pub l2_norm: f64,
    pub max_j: f64,
    pub max_clausius_gap: f64,
    pub max_balance_residual: f64,
    /// Max over time of the weak residual, per shipped test function.
    pub weak_residuals: Vec<f64>,
    pub young_max_variance: f64,
    pub tartar_max: f64,
    pub tartar_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub deltas: Vec<f64>,
    pub failures: Vec<(f64, String)>,
    pub test_functions: Vec<String>,
    /// `‖u^{δ_k} − u^{δ_{k+1}}‖` for consecutive successful runs.
    pub l1_distances: Vec<f64>,
    pub l3_2_distances: Vec<f64>,
    pub gronwall_bound: f64,
    pub runs: Vec<RunSummary>,
}

impl SweepReport {
    pub fn l2_spread(&self) -> f64 {
        let v: Vec<f64> = self.runs.iter().map(|r| r.l2_norm).collect();
        let hi = v.iter().copied().fold(f64::MIN, f64::max);
        let lo = v.iter().copied().fold(f64::MAX, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }
}

/// Assembles the sweep report; Tartar pairs use `pair_resolution` intervals.
pub fn sweep_report(sweep: &Sweep, pair_resolution: usize, exec: Execution) -> Result<SweepReport> {
    let exp = &sweep.experiment;
    let ok = sweep.successful();
    let trajs: Vec<&Trajectory> = ok.iter().map(|(_, t)| *t).collect();
    let functions = shipped_test_functions(exp.t_final);
    let pairs = if trajs.is_empty() {
        None
    } else {
        Some(tartar_pairs(&exp.model, &trajs, pair_resolution)?)
    };
    let summaries = par::map(exec, &ok, |&(delta, t)| -> Result<RunSummary> {
        let thermo = ThermoReport::from_initial(t, &sweep.init, &exp.model, &exp.boundary)?;
        let (tmax, tmean) = match &pairs {
            Some((a, b)) => {
                let d = tartar_defect(t, a, b, BoxPartition::default());
                (d.max(), d.mean())
            }
            None => (0.0, 0.0),
        };
        Ok(RunSummary {
            delta,
            l2_norm: lp_norm(t, 2.0),
            max_j: thermo.max_j(),
            max_clausius_gap: thermo.max_gap(),
            max_balance_residual: thermo.max_balance_residual(),
            weak_residuals: functions
                .iter()
                .map(|f| max_abs(&weak_residual(t, f, &exp.model, &exp.boundary)))
                .collect(),
            young_max_variance: young_concentration(t, BoxPartition::default()).max_variance(),
            tartar_max: tmax,
            tartar_mean: tmean,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut l1 = Vec::new();
    let mut l32 = Vec::new();
    for w in trajs.windows(2) {
        l1.push(lp_distance(w[0], w[1], 1.0)?);
        l32.push(lp_distance(w[0], w[1], 1.5)?);
    }
    let c0 = crate::thermo::initial_constant(&sweep.init.state, &exp.model, &exp.boundary);
    Ok(SweepReport {
        deltas: sweep.deltas.clone(),
        failures: sweep.failures(),
        test_functions: functions.iter().map(|f| f.label()).collect(),
        l1_distances: l1,
        l3_2_distances: l32,
        gronwall_bound: crate::thermo::gronwall_bound(&exp.model, &exp.boundary, c0)?.value(),
        runs: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::LinearSpectralSolution;
    use crate::model::{make_linear_tension, make_softplus_tension, StateField};
    use proptest::prelude::*;

    fn experiment() -> Experiment {
        Experiment {
            model: make_softplus_tension(1.0, 2.0).unwrap(),
            boundary: BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap(),
            cells: 50,
            t_final: 1.0,
            snapshots: 40,
            scheme: Scheme::Imex,
            mollifier_width: 1.0 / 16.0,
            initial: InitialProfile::Wave {
                r_amplitude: 0.3,
                p_amplitude: 0.2,
            },
        }
    }

    fn equilibrium() -> Experiment {
        let m = make_softplus_tension(1.0, 2.0).unwrap();
        Experiment {
            boundary: BoundaryTensionProfile::constant(0.6),
            initial: InitialProfile::Equilibrium,
            ..experiment().with_model(m)
        }
    }

    #[test]
    fn equilibrium_sweep_has_zero_distances() {
        let s = delta_sweep(&equilibrium(), &[0.2, 0.1, 0.05], Execution::Sequential).unwrap();
        let rep = sweep_report(&s, 32, Execution::Sequential).unwrap();
        assert!(rep.l1_distances.iter().all(|&d| d < 1e-13));
        for r in &rep.runs {
            assert!(r.young_max_variance < 1e-24);
            assert!(r.tartar_max < 1e-12);
            assert!(r.weak_residuals.iter().all(|&w| w < 1e-7), "{:?}", r.weak_residuals);
        }
    }

    #[test]
    fn end_corrected_quadrature_is_fourth_order() {
        let err = |n: usize| {
            let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let f: Vec<f64> = t.iter().map(|s| (3.0 * s).exp()).collect();
            let c = cumulative_end_corrected(&t, &f);
            (c[n] - ((3f64).exp() - 1.0) / 3.0).abs()
        };
        let (a, b) = (err(20), err(40));
        assert!(a / b > 12.0, "{a} {b}");
    }

    #[test]
    fn single_delta_has_no_distances() {
        let s = delta_sweep(&experiment(), &[0.1], Execution::Sequential).unwrap();
        let rep = sweep_report(&s, 32, Execution::Sequential).unwrap();
        assert!(rep.l1_distances.is_empty());
        assert_eq!(rep.runs.len(), 1);
        assert!(delta_sweep(&experiment(), &[0.1, 0.2], Execution::Sequential).is_err());
    }

    #[test]
    fn norms_are_monotone_in_exponent() {
        let s = delta_sweep(&experiment(), &[0.1], Execution::Sequential).unwrap();
        let t = s.runs[0].as_ref().unwrap();
        let (a, b, c) = (lp_norm(t, 1.0), lp_norm(t, 1.5), lp_norm(t, 2.0));
        assert!(a <= b + 1e-12 && b <= c + 1e-12, "{a} {b} {c}");
    }

    #[test]
    fn admissibility_is_enforced() {
        assert!(matches!(
            TestFunction::new(Equation::R, 0, Shape::X, 1.0),
            Err(Error::InadmissibleTestFunction(_))
        ));
        assert!(TestFunction::new(Equation::P, 0, Shape::CosHalfPi, 1.0).is_err());
        let f = shipped_test_functions(2.0);
        assert_eq!(f.len(), 16);
        for tf in &f {
            match tf.equation {
                Equation::R => assert_eq!(tf.value(0.7, 1.0).abs() < 1e-15, true),
                Equation::P => assert_eq!(tf.value(0.7, 0.0), 0.0),
            }
        }
    }

    proptest! {
        #[test]
        fn test_function_derivatives(t in 0.05..1.9f64, x in 0.01..0.99f64, k in 0usize..16) {
            let f = shipped_test_functions(2.0)[k];
            let h = 1e-6;
            let dt = (f.value(t + h, x) - f.value(t - h, x)) / (2.0 * h);
            let dx = (f.value(t, x + h) - f.value(t, x - h)) / (2.0 * h);
            prop_assert!((dt - f.dt(t, x)).abs() < 1e-7);
            prop_assert!((dx - f.dx(t, x)).abs() < 1e-7);
        }
    }

    // The exact linear solution satisfies the weak form up to the viscous term
    // −δ∫∫φ_x u_x, which is computed independently here.
    #[test]
    fn weak_residual_matches_viscous_term_on_exact_solution() {
        let g = Grid::new(200).unwrap();
        let m = make_linear_tension(1.5).unwrap();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let delta = 0.05;
        let init = StateField::zeros(g);
        let times: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
        let traj = LinearSpectralSolution::new(&m, b, delta, &init)
            .unwrap()
            .trajectory(g, &times)
            .unwrap();
        for f in shipped_test_functions(1.0) {
            let res = weak_residual(&traj, &f, &m, &b);
            let viscous: Vec<f64> = traj
                .snapshots
                .iter()
                .map(|s| {
                    let u = match f.equation {
                        Equation::R => &s.r,
                        Equation::P => &s.p,
                    };
                    let w: Vec<f64> = (0..g.cells())
                        .map(|j| {
                            let xm = (g.x(j) + g.x(j + 1)) / 2.0;
                            f.dx(s.t, xm) * (u[j + 1] - u[j])
                        })
                        .collect();
                    -delta * w.iter().sum::<f64>()
                })
                .collect();
            let mut acc = 0.0;
            let mut worst = 0.0f64;
            for k in 1..times.len() {
                acc += 0.5 * (times[k] - times[k - 1]) * (viscous[k - 1] + viscous[k]);
                worst = worst.max((res[k] - acc).abs());
            }
            assert!(worst < 1e-4 + 0.02 * max_abs(&res), "{}: {worst}", f.label());
        }
    }

    #[test]
    fn weak_residuals_shrink_with_delta() {
        let s = delta_sweep(&experiment(), &[0.1, 0.05, 0.025], Execution::Sequential).unwrap();
        let rep = sweep_report(&s, 32, Execution::Sequential).unwrap();
        for k in 0..16 {
            let a = rep.runs[0].weak_residuals[k];
            let c = rep.runs[2].weak_residuals[k];
            assert!(c < a, "{k}: {a} {c}");
        }
        assert!(rep.l1_distances[1] < rep.l1_distances[0]);
    }

    #[test]
    fn young_single_box_constant_in_space() {
        let g = Grid::new(16).unwrap();
        let snaps: Vec<StateField> = (0..5)
            .map(|k| StateField::constant(g, k as f64, 0.0).with_time(k as f64))
            .collect();
        let m = make_linear_tension(1.0).unwrap();
        let t = Trajectory::from_snapshots(0.1, snaps, &m);
        let d = young_concentration(
            &t,
            BoxPartition {
                time_boxes: 1,
                space_boxes: 1,
            },
        );
        // Variance of {0, 1, 2, 3, 4}.
        assert!((d.variances[0] - 2.0).abs() < 1e-12);
        assert_eq!(d.min_count(), 5 * 17);
    }

    #[test]
    fn tartar_same_pair_vanishes() {
        let s = delta_sweep(&experiment(), &[0.1], Execution::Sequential).unwrap();
        let t = s.runs[0].as_ref().unwrap();
        let (a, b) = tartar_pairs(&s.experiment.model, &[t], 48).unwrap();
        let d = tartar_defect(t, &a, &a, BoxPartition::default());
        assert!(d.max() < 1e-12);
        assert_eq!(d.flagged(), 0);
        let d = tartar_defect(t, &a, &b, BoxPartition::default());
        assert!(d.max().is_finite());
    }
}
