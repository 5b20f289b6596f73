//! Experiment configuration, read from TOML.
//!
//! Every key is required unless it has a default below; unknown keys are
//! rejected so typos surface before anything runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain_sde::{ChainConfig, TestProfile};
use crate::convergence_lab::{Experiment, InitialProfile};
use crate::error::{Error, Result};
use crate::model::{make_linear_tension, BoundaryTensionProfile, TensionModel};
use crate::viscous_solver::Scheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Parent of the timestamped run directories.
    pub output_dir: String,
    pub model: TensionModel,
    pub boundary: BoundaryTensionProfile,
    pub grid: GridSettings,
    pub initial: InitialProfile,
    pub sweep: SweepSettings,
    pub entropy: EntropySettings,
    pub greens: GreensSettings,
    pub tolerances: ToleranceSettings,
    pub chain: ChainSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub cells: usize,
    pub t_final: f64,
    /// Snapshot intervals over `[0, t_final]`.
    pub snapshots: usize,
    #[serde(default)]
    pub scheme: Scheme,
    pub mollifier_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    /// Viscosity of the single `solve` run.
    pub solve_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySettings {
    /// Grid intervals per side of the Goursat rectangle.
    pub resolution: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreensSettings {
    pub identity_samples: usize,
    /// Stiffness of the linear-law oracle.
    pub oracle_stiffness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSettings {
    /// `tol_disc = factor × (oracle discretization error)`.
    pub disc_factor: f64,
    pub weak_ratio: f64,
    pub weak_slope: f64,
    pub lax_refinement: f64,
    pub series_ratio: f64,
    pub l2_spread: f64,
    pub lipschitz_spread: f64,
    pub balance_refinement: f64,
    pub identity: f64,
    pub richardson_factor: f64,
    pub chain_sigmas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    /// Chain lengths, increasing; the last one is held to the error budget.
    pub sizes: Vec<usize>,
    pub ensemble: usize,
    pub temperature: f64,
    pub delta0: f64,
    /// Harmonic stiffness `V''`.
    pub stiffness: f64,
    pub boundary: BoundaryTensionProfile,
    /// Macroscopic comparison times.
    pub times: Vec<f64>,
    pub profiles: Vec<TestProfile>,
    pub r_amplitude: f64,
    pub p_amplitude: f64,
}

/// `τ(1)` for the softplus law with `c1 = 1`, `c2 = 2`.
fn tau_one() -> f64 {
    1.0 + (1.0f64.exp().ln_1p() - std::f64::consts::LN_2)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            output_dir: "runs".into(),
            model: TensionModel::Softplus { c1: 1.0, c2: 2.0 },
            boundary: BoundaryTensionProfile::Ramp {
                tau_start: 0.0,
                tau_end: tau_one(),
                t_star: 1.0,
            },
            grid: GridSettings {
                cells: 200,
                t_final: 2.0,
                snapshots: 200,
                scheme: Scheme::Imex,
                mollifier_width: 0.0625,
            },
            initial: InitialProfile::Wave {
                r_amplitude: 0.3,
                p_amplitude: 0.2,
            },
            sweep: SweepSettings {
                deltas: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
                solve_delta: 0.05,
            },
            entropy: EntropySettings { resolution: 128 },
            greens: GreensSettings {
                identity_samples: 1000,
                oracle_stiffness: 1.5,
            },
            tolerances: ToleranceSettings {
                disc_factor: 5.0,
                weak_ratio: 3.0,
                weak_slope: 0.8,
                lax_refinement: 3.5,
                series_ratio: 0.5,
                l2_spread: 0.05,
                lipschitz_spread: 0.25,
                balance_refinement: 3.0,
                identity: 1e-12,
                richardson_factor: 2.0,
                chain_sigmas: 3.0,
            },
            chain: ChainSettings {
                sizes: vec![64, 128, 256],
                ensemble: 64,
                temperature: 0.001,
                delta0: 0.5,
                stiffness: 1.0,
                boundary: BoundaryTensionProfile::Ramp {
                    tau_start: 0.0,
                    tau_end: 0.5,
                    t_star: 0.5,
                },
                times: vec![0.25, 0.5, 0.75, 1.0],
                profiles: vec![TestProfile::One, TestProfile::X, TestProfile::SinPi],
                r_amplitude: 0.2,
                p_amplitude: 0.1,
            },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

fn check_boundary(prefix: &str, b: &BoundaryTensionProfile) -> Result<()> {
    match *b {
        BoundaryTensionProfile::Constant { tension } if !tension.is_finite() => {
            Err(Error::invalid(format!("{prefix}.tension"), "must be finite"))
        }
        BoundaryTensionProfile::Ramp {
            tau_start,
            tau_end,
            t_star,
        } => {
            positive(&format!("{prefix}.t_star"), t_star)?;
            if !(tau_start.is_finite() && tau_end.is_finite()) {
                return Err(Error::invalid(format!("{prefix}.tau_end"), "must be finite"));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every value against the preconditions of the module that uses it.
    pub fn validate(&self) -> Result<()> {
        match self.model {
            TensionModel::Softplus { c1, c2 } => {
                positive("model.c1", c1)?;
                if !(c2.is_finite() && c2 > c1) {
                    return Err(Error::invalid("model.c2", format!("must exceed c1, got {c2}")));
                }
            }
            TensionModel::Linear { stiffness } => positive("model.stiffness", stiffness)?,
        }
        check_boundary("boundary", &self.boundary)?;
        self.model
            .inverse(self.boundary.value(0.0))
            .map_err(|e| Error::invalid("boundary.tau_start", e.to_string()))?;
        let g = &self.grid;
        if g.cells < 8 {
            return Err(Error::invalid("grid.cells", "need at least 8 cells"));
        }
        if !(g.t_final.is_finite() && g.t_final >= 0.0) {
            return Err(Error::invalid("grid.t_final", "must be non-negative"));
        }
        if g.snapshots == 0 {
            return Err(Error::invalid("grid.snapshots", "need at least one interval"));
        }
        positive("grid.mollifier_width", g.mollifier_width)?;
        if let InitialProfile::Wave {
            r_amplitude,
            p_amplitude,
        } = self.initial
        {
            if !(r_amplitude.is_finite() && p_amplitude.is_finite()) {
                return Err(Error::invalid("initial.r_amplitude", "must be finite"));
            }
        }
        let d = &self.sweep.deltas;
        if d.is_empty() {
            return Err(Error::invalid("sweep.deltas", "must not be empty"));
        }
        for &v in d {
            positive("sweep.deltas", v)?;
        }
        if d.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("sweep.deltas", "must be strictly decreasing"));
        }
        positive("sweep.solve_delta", self.sweep.solve_delta)?;
        if self.entropy.resolution < 16 || self.entropy.resolution % 2 != 0 {
            return Err(Error::invalid("entropy.resolution", "must be even and at least 16"));
        }
        if self.greens.identity_samples == 0 {
            return Err(Error::invalid("greens.identity_samples", "must be positive"));
        }
        positive("greens.oracle_stiffness", self.greens.oracle_stiffness)?;
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.disc_factor", t.disc_factor),
            ("tolerances.weak_ratio", t.weak_ratio),
            ("tolerances.weak_slope", t.weak_slope),
            ("tolerances.lax_refinement", t.lax_refinement),
            ("tolerances.series_ratio", t.series_ratio),
            ("tolerances.l2_spread", t.l2_spread),
            ("tolerances.lipschitz_spread", t.lipschitz_spread),
            ("tolerances.balance_refinement", t.balance_refinement),
            ("tolerances.identity", t.identity),
            ("tolerances.richardson_factor", t.richardson_factor),
            ("tolerances.chain_sigmas", t.chain_sigmas),
        ] {
            positive(name, v)?;
        }
        let c = &self.chain;
        if c.sizes.is_empty() || c.sizes.iter().any(|&n| n < 2) {
            return Err(Error::invalid("chain.sizes", "need sizes of at least 2"));
        }
        if c.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("chain.sizes", "must be strictly increasing"));
        }
        if c.ensemble < 2 {
            return Err(Error::invalid("chain.ensemble", "need at least 2 members"));
        }
        positive("chain.temperature", c.temperature)?;
        positive("chain.delta0", c.delta0)?;
        positive("chain.stiffness", c.stiffness)?;
        check_boundary("chain.boundary", &c.boundary)?;
        if c.times.is_empty() || c.times.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::invalid("chain.times", "need positive times"));
        }
        if c.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("chain.times", "must be strictly increasing"));
        }
        if c.profiles.is_empty() {
            return Err(Error::invalid("chain.profiles", "must not be empty"));
        }
        if !(c.r_amplitude.is_finite() && c.p_amplitude.is_finite()) {
            return Err(Error::invalid("chain.r_amplitude", "must be finite"));
        }
        Ok(())
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            model: self.model,
            boundary: self.boundary,
            cells: self.grid.cells,
            t_final: self.grid.t_final,
            snapshots: self.grid.snapshots,
            scheme: self.grid.scheme,
            mollifier_width: self.grid.mollifier_width,
            initial: self.initial,
        }
    }

    pub fn oracle_model(&self) -> Result<TensionModel> {
        make_linear_tension(self.greens.oracle_stiffness)
    }

    /// Chain of length `n` with the harmonic potential of the chain settings.
    pub fn chain_config(&self, n: usize) -> Result<ChainConfig> {
        let c = &self.chain;
        let cfg = ChainConfig {
            n,
            temperature: c.temperature,
            delta0: c.delta0,
            potential: make_linear_tension(c.stiffness)?,
            boundary: c.boundary,
            dt: None,
            ensemble: c.ensemble,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_default_matches() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
        let cfg = ExperimentConfig::load(Path::new(path)).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn tau_one_matches_model() {
        assert!((ExperimentConfig::default().model.tau(1.0) - tau_one()).abs() < 1e-15);
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::InvalidParameter { name, reason } => format!("{name}: {reason}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.deltas.clear();
        assert!(key_of(cfg.validate().unwrap_err()).starts_with("sweep.deltas"));

        let mut cfg = ExperimentConfig::default();
        cfg.chain.sizes = vec![128, 64];
        assert!(key_of(cfg.validate().unwrap_err()).starts_with("chain.sizes"));

        let text = ExperimentConfig::default()
            .to_toml_string()
            .replace("cells = 200", "cels = 200");
        let msg = key_of(ExperimentConfig::from_toml_str(&text).unwrap_err());
        assert!(msg.contains("cels"), "{msg}");
    }
}
