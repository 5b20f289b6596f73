//! Free energy, work of the boundary tension, the energy functional `J` and
//! the Clausius gap along a viscous trajectory.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{total_extension, BoundaryTensionProfile, InitialData, StateField, TensionModel};
use crate::viscous_solver::Trajectory;

/// `∫ (p²/2 + F(r)) dx`.
pub fn free_energy(state: &StateField, model: &TensionModel) -> f64 {
    let density: Vec<f64> = state
        .r
        .iter()
        .zip(&state.p)
        .map(|(&r, &p)| 0.5 * p * p + model.free_energy(r))
        .collect();
    state.grid.integrate(&density)
}

/// Work of the boundary tension on the step grid,
/// `W(t) = τ̄(t)L(t) − τ̄(0)L(0) − ∫₀ᵗ τ̄'(s)L(s) ds`.
pub fn work_on_steps(t: &[f64], extension: &[f64], boundary: &BoundaryTensionProfile) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut integral = 0.0;
    for n in 0..t.len() {
        if n > 0 {
            integral += 0.5
                * (t[n] - t[n - 1])
                * (boundary.derivative(t[n - 1]) * extension[n - 1]
                    + boundary.derivative(t[n]) * extension[n]);
        }
        out.push(
            boundary.value(t[n]) * extension[n] - boundary.value(t[0]) * extension[0] - integral,
        );
    }
    out
}

/// The mechanical form `∫₀ᵗ τ̄(s) dL(s)` on the step grid.
pub fn work_by_parts(t: &[f64], extension: &[f64], boundary: &BoundaryTensionProfile) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut w = 0.0;
    for n in 1..t.len() {
        w += 0.5
            * (boundary.value(t[n - 1]) + boundary.value(t[n]))
            * (extension[n] - extension[n - 1]);
        out.push(w);
    }
    out
}

/// `W` at each snapshot of `trajectory`.
pub fn work(trajectory: &Trajectory, boundary: &BoundaryTensionProfile) -> Vec<f64> {
    let w = work_on_steps(&trajectory.log.t, &trajectory.log.extension, boundary);
    trajectory.snapshot_steps.iter().map(|&k| w[k]).collect()
}

/// `J(t) = ‖u(t)‖² + δ ∫₀ᵗ ‖u_x‖²` at each snapshot.
pub fn energy_j(trajectory: &Trajectory) -> Vec<f64> {
    trajectory
        .snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| s.l2_norm_sq() + trajectory.gradient_integral_at(k))
        .collect()
}

/// Initial-data constant `C₀ = F(u₀) + C_τ̄·|∫ r₀|`.
pub fn initial_constant(
    state: &StateField,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> f64 {
    free_energy(state, model) + boundary.c_bar() * total_extension(state).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallBound {
    /// Bound on `[0, T⋆)`.
    pub ramp: f64,
    /// Bound for `t ≥ T⋆`.
    pub frozen: f64,
}

impl GronwallBound {
    pub fn value(&self) -> f64 {
        self.ramp.max(self.frozen)
    }
}

/// Explicit Gronwall constant for `J`.
///
/// While the tension moves, `(4c C₀ + 2C²(2 + c T⋆))/c² · e^{2T⋆/c}`; after it
/// freezes, `(4/c)(C₀ + C²/c + C T⋆ √ramp)`. Here `C = C_τ̄` and
/// `c = min(c1, 2)`, since the estimate controls `∫ p²/2` by `(c1/4) ∫ p²`.
pub fn gronwall_bound(
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
    c0: f64,
) -> Result<GronwallBound> {
    if !(c0.is_finite() && c0 >= 0.0) {
        return Err(Error::invalid("c0", format!("must be non-negative, got {c0}")));
    }
    let c = model.c1().min(2.0);
    let cb = boundary.c_bar();
    let ts = boundary.t_star();
    let ramp = (4.0 * c * c0 + 2.0 * cb * cb * (2.0 + c * ts)) / (c * c) * (2.0 * ts / c).exp();
    let frozen = 4.0 / c * (c0 + cb * cb / c + cb * ts * ramp.sqrt());
    Ok(GronwallBound { ramp, frozen })
}

/// `F(u(t)) − F(u₀) − W(t)` at each snapshot.
pub fn clausius_gap(
    trajectory: &Trajectory,
    model: &TensionModel,
    boundary: &BoundaryTensionProfile,
) -> Vec<f64> {
    let f0 = free_energy(trajectory.initial(), model);
    trajectory
        .snapshots
        .iter()
        .zip(work(trajectory, boundary))
        .map(|(s, w)| free_energy(s, model) - f0 - w)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub delta: f64,
    pub times: Vec<f64>,
    pub free_energy: Vec<f64>,
    pub work: Vec<f64>,
    pub energy_j: Vec<f64>,
    pub clausius_gap: Vec<f64>,
    /// Running `δ ∫∫ (τ' r_x² + p_x²)`.
    pub dissipation: Vec<f64>,
    /// Initial-data constant `C₀`.
    pub c0: f64,
    pub gronwall: GronwallBound,
}

impl ThermoReport {
    pub fn new(
        trajectory: &Trajectory,
        model: &TensionModel,
        boundary: &BoundaryTensionProfile,
        c0: f64,
    ) -> Result<Self> {
        let f: Vec<f64> = trajectory
            .snapshots
            .iter()
            .map(|s| free_energy(s, model))
            .collect();
        let w = work(trajectory, boundary);
        let gap = f.iter().zip(&w).map(|(fi, wi)| fi - f[0] - wi).collect();
        Ok(Self {
            delta: trajectory.delta,
            times: trajectory.times(),
            free_energy: f,
            work: w,
            energy_j: energy_j(trajectory),
            clausius_gap: gap,
            dissipation: (0..trajectory.snapshots.len())
                .map(|k| trajectory.dissipation_at(k))
                .collect(),
            c0,
            gronwall: gronwall_bound(model, boundary, c0)?,
        })
    }

    /// Uses `C₀` of the prepared initial data.
    pub fn from_initial(
        trajectory: &Trajectory,
        init: &InitialData,
        model: &TensionModel,
        boundary: &BoundaryTensionProfile,
    ) -> Result<Self> {
        Self::new(
            trajectory,
            model,
            boundary,
            initial_constant(&init.state, model, boundary),
        )
    }

    pub fn max_j(&self) -> f64 {
        self.energy_j.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_gap(&self) -> f64 {
        self.clausius_gap.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `|gap + dissipation|` at each snapshot; zero in the continuum.
    pub fn balance_residuals(&self) -> Vec<f64> {
        self.clausius_gap
            .iter()
            .zip(&self.dissipation)
            .map(|(g, d)| (g + d).abs())
            .collect()
    }

    pub fn max_balance_residual(&self) -> f64 {
        self.balance_residuals().into_iter().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,F,W,J,gap")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[k],
                self.free_energy[k],
                self.work[k],
                self.energy_j[k],
                self.clausius_gap[k]
            )?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "delta": self.delta,
            "c0": self.c0,
            "gronwall_bound": self.gronwall.value(),
            "gronwall_ramp": self.gronwall.ramp,
            "gronwall_frozen": self.gronwall.frozen,
            "max_j": self.max_j(),
            "max_gap": self.max_gap(),
            "max_balance_residual": self.max_balance_residual(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_linear_tension, make_softplus_tension, mollify_initial_data, Grid};
    use crate::viscous_solver::{Scheme, ViscousConfig, ViscousSolver};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn softplus() -> TensionModel {
        make_softplus_tension(1.0, 2.0).unwrap()
    }

    fn ramp_run(cells: usize, delta: f64) -> (Trajectory, InitialData, BoundaryTensionProfile) {
        let g = Grid::new(cells).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let raw_r = g.sample(|x| 0.3 * (PI * x / 2.0).cos());
        let raw_p = g.sample(|x| 0.2 * (PI * x / 2.0).sin());
        let init = mollify_initial_data(g, &raw_r, &raw_p, &m, &b, 1.0 / 16.0).unwrap();
        let cfg = ViscousConfig::uniform(g, &m, delta, 1.0, 10, Scheme::Imex).unwrap();
        let traj = ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init.state).unwrap();
        (traj, init, b)
    }

    #[test]
    fn free_energy_examples() {
        let g = Grid::new(50).unwrap();
        let m = softplus();
        assert_eq!(free_energy(&StateField::zeros(g), &m), 0.0);
        assert!((free_energy(&StateField::constant(g, 0.0, 2.0), &m) - 2.0).abs() < 1e-14);
        let f = free_energy(&StateField::constant(g, 1.0, 0.0), &m);
        assert!((0.5..=1.0).contains(&f));
    }

    #[test]
    fn work_examples() {
        let t: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        let ext: Vec<f64> = t.iter().map(|s| s * s).collect();
        let b = BoundaryTensionProfile::constant(0.7);
        let w = work_on_steps(&t, &ext, &b);
        for (wi, e) in w.iter().zip(&ext) {
            assert!((wi - 0.7 * e).abs() < 1e-15);
        }
        let zero = work_on_steps(&t, &ext, &BoundaryTensionProfile::constant(0.0));
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    // ∫τ̄' L + ∫τ̄ dL = [τ̄ L] for smooth data; both quadratures are second order.
    #[test]
    fn work_agrees_with_mechanical_form() {
        let b = BoundaryTensionProfile::ramp(0.2, 1.4, 0.8).unwrap();
        let ext = |s: f64| (3.0 * s).sin() + s;
        let mut prev = f64::INFINITY;
        for n in [100usize, 200, 400] {
            let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let l: Vec<f64> = t.iter().map(|&s| ext(s)).collect();
            let a = work_on_steps(&t, &l, &b);
            let c = work_by_parts(&t, &l, &b);
            let d = (a[n] - c[n]).abs();
            assert!(d < 1e-3);
            assert!(d < prev / 3.5 || prev == f64::INFINITY, "{d} {prev}");
            prev = d;
        }
    }

    #[test]
    fn energy_j_examples() {
        let g = Grid::new(20).unwrap();
        let m = softplus();
        let b = BoundaryTensionProfile::constant(m.tau(1.0));
        let cfg = ViscousConfig::uniform(g, &m, 0.1, 0.5, 5, Scheme::Imex).unwrap();
        let solver = ViscousSolver::new(g, m, b, cfg.clone()).unwrap();
        let eq = solver.solve(&StateField::constant(g, 1.0, 0.0)).unwrap();
        for j in energy_j(&eq) {
            assert!((j - 1.0).abs() < 1e-12);
        }
        let zb = BoundaryTensionProfile::constant(0.0);
        let zero = ViscousSolver::new(g, m, zb, cfg).unwrap().solve(&StateField::zeros(g)).unwrap();
        assert!(energy_j(&zero).iter().all(|&j| j == 0.0));
        assert!(clausius_gap(&zero, &m, &zb).iter().all(|&v| v == 0.0));
        let gap = clausius_gap(&eq, &m, &b);
        assert!(gap.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gronwall_reference_value() {
        let m = softplus();
        let b = BoundaryTensionProfile::ramp(0.0, 0.0, 1.0).unwrap();
        let g = gronwall_bound(&m, &b, 1.0).unwrap();
        assert!((g.value() - 4.0 * 1f64.exp().powi(2)).abs() < 1e-12);
        assert!(gronwall_bound(&m, &b, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn gronwall_is_affine_in_c0(c0 in 0.0..10.0f64, tau in 0.1..2.0f64) {
            let m = softplus();
            let b = BoundaryTensionProfile::ramp(0.0, tau, 1.0).unwrap();
            let g0 = gronwall_bound(&m, &b, 0.0).unwrap().ramp;
            let g1 = gronwall_bound(&m, &b, c0).unwrap().ramp;
            let g2 = gronwall_bound(&m, &b, 2.0 * c0).unwrap().ramp;
            prop_assert!(((g2 - g1) - (g1 - g0)).abs() < 1e-9 * g2.max(1.0));
            prop_assert!(g2 >= g1);
        }
    }

    #[test]
    fn ramp_run_satisfies_clausius_and_energy_bound() {
        let (traj, init, b) = ramp_run(100, 0.05);
        let m = softplus();
        let rep = ThermoReport::from_initial(&traj, &init, &m, &b).unwrap();
        assert!(rep.max_j() <= rep.gronwall.value());
        let residual = rep.max_balance_residual();
        let dissipated = *rep.dissipation.last().unwrap();
        assert!(dissipated > 0.0);
        assert!(residual < 0.05 * dissipated, "{residual} vs {dissipated}");
        assert!(rep.max_gap() <= residual);
        // |gap| grows with the dissipation integral.
        for k in 1..rep.times.len() {
            assert!(rep.clausius_gap[k] <= rep.clausius_gap[k - 1] + residual);
        }
    }

    #[test]
    fn balance_residual_shrinks_under_refinement() {
        let m = softplus();
        let residual = |cells| {
            let (traj, init, b) = ramp_run(cells, 0.05);
            ThermoReport::from_initial(&traj, &init, &m, &b)
                .unwrap()
                .max_balance_residual()
        };
        let coarse = residual(50);
        let fine = residual(100);
        assert!(coarse / fine >= 3.0, "{coarse} {fine}");
    }

    #[test]
    fn linear_law_balance() {
        let g = Grid::new(80).unwrap();
        let m = make_linear_tension(1.5).unwrap();
        let b = BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap();
        let init = StateField::zeros(g);
        let cfg = ViscousConfig::uniform(g, &m, 0.05, 1.0, 10, Scheme::Imex).unwrap();
        let traj = ViscousSolver::new(g, m, b, cfg).unwrap().solve(&init).unwrap();
        let rep = ThermoReport::new(&traj, &m, &b, 0.0).unwrap();
        assert!(rep.max_balance_residual() < 1e-3);
    }

    #[test]
    fn csv_columns() {
        let (traj, init, b) = ramp_run(20, 0.1);
        let rep = ThermoReport::from_initial(&traj, &init, &softplus(), &b).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,F,W,J,gap\n"));
        assert_eq!(text.lines().count(), 12);
        assert!(rep.metadata()["gronwall_bound"].as_f64().unwrap() > 0.0);
    }
}
