//! Flat `key = value` configuration with `#` comments and dotted section
//! prefixes. Unknown keys are rejected; every invariant violation names the
//! offending field.

use crate::error::ConfigError;
use crate::flow::{FlowParams, ViscositySplit};
use crate::linsolve::{Preconditioner, SolverConfig};
use crate::transport::{ChParams, NutrientParams};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Simulate,
    Scaling,
    SerialCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcVariant {
    UniformPerturbed,
    BaseLayer,
    MushroomPair,
}

/// Initial-condition description: a biofilm base layer with two
/// mushroom-shaped protrusions (caps joined to the base by lower-fraction
/// necks), or simpler layouts for testing.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub variant: IcVariant,
    pub base_height: f64,
    pub phi_bulk: f64,
    pub phi_neck: f64,
    pub caps: [(f64, f64); 2],
    pub cap_radius: f64,
    pub neck_width: f64,
    pub smoothing: f64,
    pub amplitude: f64,
    pub phi_mean: f64,
    pub c_init: f64,
    pub seed: u64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            variant: IcVariant::MushroomPair,
            base_height: 0.15,
            phi_bulk: 0.4,
            phi_neck: 0.2,
            caps: [(0.3, 0.45), (0.7, 0.45)],
            cap_radius: 0.12,
            neck_width: 0.08,
            smoothing: 0.01,
            amplitude: 0.01,
            phi_mean: 0.5,
            c_init: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Snapshot every N steps; 0 disables snapshots.
    pub interval: usize,
    pub vtk: bool,
    pub network_velocity: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            interval: 0,
            vtk: true,
            network_velocity: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub rank_counts: Vec<usize>,
    pub steps: usize,
    pub warmup: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            rank_counts: vec![1, 2, 4],
            steps: 10,
            warmup: 2,
        }
    }
}

/// Per-system time-integration weights: 1 is backward Euler, 1/2 is
/// Crank-Nicolson.
#[derive(Debug, Clone, Copy)]
pub struct ThetaConfig {
    pub ch: f64,
    pub nutrient: f64,
    pub momentum: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig {
            ch: 0.5,
            nutrient: 1.0,
            momentum: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub steps: usize,
    pub mode: RunMode,
    pub ranks: usize,
    pub ch: ChParams,
    pub nutrient: NutrientParams,
    pub flow: FlowParams,
    pub theta: ThetaConfig,
    pub solver_ch: SolverConfig,
    pub solver_nutrient: SolverConfig,
    pub solver_momentum: SolverConfig,
    pub solver_pressure: SolverConfig,
    pub ic: InitialCondition,
    pub output: OutputConfig,
    pub scaling: ScalingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nx: 257,
            ny: 257,
            dt: 1.0,
            steps: 20,
            mode: RunMode::Simulate,
            ranks: 1,
            ch: ChParams {
                gamma1: 33.467,
                gamma2: 1.25e6,
                lambda: 1e-10,
                mu: 0.14,
                kc: 0.15,
                epsilon: 1.0,
            },
            nutrient: NutrientParams { ds: 2.3, a: 100.0 },
            flow: FlowParams {
                re_s: 9.98e-4,
                re_n: 2.33e-9,
                gamma1: 33.467,
                rho_n_ratio: 1.0,
                rho_s_ratio: 1.0,
                lid: (0.1, 0.0),
                base: (0.0, 0.0),
                include_forcing: true,
                viscosity: ViscositySplit::LocalImplicit,
                nu_max: 1e7,
                transpose_stress: false,
            },
            theta: ThetaConfig::default(),
            // The network equation is solved tighter than the generic
            // default so the conservative-flux mass identity survives the
            // linear-solve residual over long runs.
            solver_ch: SolverConfig {
                rtol: 1e-12,
                atol: 1e-14,
                ..SolverConfig::default()
            },
            solver_nutrient: SolverConfig {
                rtol: 1e-6,
                max_iters: 20000,
                restart: 150,
                ..SolverConfig::default()
            },
            solver_momentum: SolverConfig {
                rtol: 1e-5,
                max_iters: 40000,
                restart: 200,
                ..SolverConfig::default()
            },
            solver_pressure: SolverConfig {
                max_iters: 40000,
                restart: 150,
                ..SolverConfig::default()
            },
            ic: InitialCondition::default(),
            output: OutputConfig::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<crate::mesh::GridSpec, ConfigError> {
        crate::mesh::GridSpec::new(self.nx, self.ny).map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.steps < 1 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.ranks < 1 {
            return Err(invalid("ranks", "must be at least 1"));
        }
        self.ch.validate().map_err(|e| invalid("ch", e))?;
        self.nutrient.validate().map_err(|e| invalid("nutrient", e))?;
        self.flow.validate().map_err(|e| invalid("flow", e))?;
        if !(self.flow.nu_max > 0.0) {
            return Err(invalid("nu_max", "must be positive"));
        }
        for (name, s) in [
            ("solver.ch", &self.solver_ch),
            ("solver.nutrient", &self.solver_nutrient),
            ("solver.momentum", &self.solver_momentum),
            ("solver.pressure", &self.solver_pressure),
        ] {
            s.validate().map_err(|e| invalid(name, e))?;
        }
        for (name, th) in [
            ("time.theta_ch", self.theta.ch),
            ("time.theta_nutrient", self.theta.nutrient),
            ("time.theta_momentum", self.theta.momentum),
        ] {
            if !(0.0..=1.0).contains(&th) {
                return Err(invalid(name, "must lie in [0, 1]"));
            }
        }
        let ic = &self.ic;
        if !(ic.phi_neck > 0.0 && ic.phi_neck <= ic.phi_bulk && ic.phi_bulk < 1.0) {
            return Err(invalid(
                "ic.phi_neck/ic.phi_bulk",
                "need 0 < phi_neck <= phi_bulk < 1",
            ));
        }
        if !(ic.base_height > 0.0 && ic.base_height < 1.0) {
            return Err(invalid("ic.base_height", "must lie inside the unit square"));
        }
        if !(ic.smoothing > 0.0) {
            return Err(invalid("ic.smoothing", "must be positive"));
        }
        if ic.variant == IcVariant::MushroomPair {
            for (k, (x, y)) in ic.caps.iter().enumerate() {
                let r = ic.cap_radius;
                if !(x - r >= 0.0 && x + r <= 1.0 && y - r >= 0.0 && y + r <= 1.0) {
                    return Err(invalid(
                        &format!("ic.cap{}", k + 1),
                        "cap disk leaves the unit square",
                    ));
                }
            }
            if !(ic.neck_width > 0.0 && ic.neck_width < 1.0) {
                return Err(invalid("ic.neck_width", "must lie in (0, 1)"));
            }
        }
        if ic.c_init < 0.0 {
            return Err(invalid("ic.c_init", "must be nonnegative"));
        }
        if self.scaling.rank_counts.is_empty() || self.scaling.rank_counts.iter().any(|&r| r < 1) {
            return Err(invalid("scaling.ranks", "need a nonempty list of counts >= 1"));
        }
        if self.scaling.steps < 1 {
            return Err(invalid("scaling.steps", "must be at least 1"));
        }
        Ok(())
    }

    /// Apply one `key = value` assignment (used by the parser and by CLI
    /// overrides). `line` only flavors error messages.
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let parse_f64 = |v: &str| -> Result<f64, ConfigError> {
            v.parse().map_err(|_| ConfigError::Parse {
                line,
                text: format!("{key} = {value}"),
                reason: "expected a number".into(),
            })
        };
        let parse_usize = |v: &str| -> Result<usize, ConfigError> {
            v.parse().map_err(|_| ConfigError::Parse {
                line,
                text: format!("{key} = {value}"),
                reason: "expected a nonnegative integer".into(),
            })
        };
        let parse_u64 = |v: &str| -> Result<u64, ConfigError> {
            v.parse().map_err(|_| ConfigError::Parse {
                line,
                text: format!("{key} = {value}"),
                reason: "expected a nonnegative integer".into(),
            })
        };
        let parse_bool = |v: &str| -> Result<bool, ConfigError> {
            match v {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(ConfigError::Parse {
                    line,
                    text: format!("{key} = {value}"),
                    reason: "expected a boolean".into(),
                }),
            }
        };

        match key {
            "grid.n" => {
                let n = parse_usize(value)?;
                self.nx = n + 1;
                self.ny = n + 1;
            }
            "grid.nx" => self.nx = parse_usize(value)?,
            "grid.ny" => self.ny = parse_usize(value)?,
            "dt" => self.dt = parse_f64(value)?,
            "steps" => self.steps = parse_usize(value)?,
            "ranks" => self.ranks = parse_usize(value)?,
            "seed" => self.ic.seed = parse_u64(value)?,
            "mode" => {
                self.mode = match value {
                    "simulate" => RunMode::Simulate,
                    "scaling" => RunMode::Scaling,
                    "serialcheck" => RunMode::SerialCheck,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            text: format!("{key} = {value}"),
                            reason: "expected simulate | scaling | serialcheck".into(),
                        })
                    }
                }
            }
            "re_s" => {
                self.flow.re_s = parse_f64(value)?;
            }
            "re_n" => {
                self.flow.re_n = parse_f64(value)?;
            }
            "lambda" => self.ch.lambda = parse_f64(value)?,
            "gamma1" => {
                let g = parse_f64(value)?;
                self.ch.gamma1 = g;
                self.flow.gamma1 = g;
            }
            "gamma2" => self.ch.gamma2 = parse_f64(value)?,
            "d_s" => self.nutrient.ds = parse_f64(value)?,
            "mu" => self.ch.mu = parse_f64(value)?,
            "k_c" => self.ch.kc = parse_f64(value)?,
            "a" => self.nutrient.a = parse_f64(value)?,
            "epsilon" => self.ch.epsilon = parse_f64(value)?,
            "rho_n" => self.flow.rho_n_ratio = parse_f64(value)?,
            "rho_s" => self.flow.rho_s_ratio = parse_f64(value)?,
            "lid.u" => self.flow.lid.0 = parse_f64(value)?,
            "lid.v" => self.flow.lid.1 = parse_f64(value)?,
            "include_r" => self.flow.include_forcing = parse_bool(value)?,
            "transpose_stress" => self.flow.transpose_stress = parse_bool(value)?,
            "nu_max" => {
                self.flow.nu_max = if value == "inf" {
                    f64::INFINITY
                } else {
                    parse_f64(value)?
                }
            }
            "viscosity_split" => {
                self.flow.viscosity = match value {
                    "local" => ViscositySplit::LocalImplicit,
                    "reference" => ViscositySplit::ReferenceExplicit,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            text: format!("{key} = {value}"),
                            reason: "expected local | reference".into(),
                        })
                    }
                }
            }
            "time.theta_ch" => self.theta.ch = parse_f64(value)?,
            "time.theta_nutrient" => self.theta.nutrient = parse_f64(value)?,
            "time.theta_momentum" => self.theta.momentum = parse_f64(value)?,
            _ if key.starts_with("solver.") => {
                let rest = &key["solver.".len()..];
                let (system, field) = rest.split_once('.').ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
                let cfg = match system {
                    "ch" => &mut self.solver_ch,
                    "nutrient" => &mut self.solver_nutrient,
                    "momentum" => &mut self.solver_momentum,
                    "pressure" => &mut self.solver_pressure,
                    _ => {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                };
                match field {
                    "rtol" => cfg.rtol = parse_f64(value)?,
                    "atol" => cfg.atol = parse_f64(value)?,
                    "max_iters" => cfg.max_iters = parse_usize(value)?,
                    "restart" => cfg.restart = parse_usize(value)?,
                    "precond" => {
                        cfg.preconditioner = match value {
                            "jacobi" => Preconditioner::Jacobi,
                            "none" => Preconditioner::None,
                            _ => {
                                return Err(ConfigError::Parse {
                                    line,
                                    text: format!("{key} = {value}"),
                                    reason: "expected jacobi | none".into(),
                                })
                            }
                        }
                    }
                    _ => {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                }
            }
            "ic.variant" => {
                self.ic.variant = match value {
                    "mushroom_pair" => IcVariant::MushroomPair,
                    "base_layer" => IcVariant::BaseLayer,
                    "uniform_perturbed" => IcVariant::UniformPerturbed,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            text: format!("{key} = {value}"),
                            reason: "expected mushroom_pair | base_layer | uniform_perturbed".into(),
                        })
                    }
                }
            }
            "ic.base_height" => self.ic.base_height = parse_f64(value)?,
            "ic.phi_bulk" => self.ic.phi_bulk = parse_f64(value)?,
            "ic.phi_neck" => self.ic.phi_neck = parse_f64(value)?,
            "ic.cap1_x" => self.ic.caps[0].0 = parse_f64(value)?,
            "ic.cap1_y" => self.ic.caps[0].1 = parse_f64(value)?,
            "ic.cap2_x" => self.ic.caps[1].0 = parse_f64(value)?,
            "ic.cap2_y" => self.ic.caps[1].1 = parse_f64(value)?,
            "ic.cap_radius" => self.ic.cap_radius = parse_f64(value)?,
            "ic.neck_width" => self.ic.neck_width = parse_f64(value)?,
            "ic.smoothing" => self.ic.smoothing = parse_f64(value)?,
            "ic.amplitude" => self.ic.amplitude = parse_f64(value)?,
            "ic.phi_mean" => self.ic.phi_mean = parse_f64(value)?,
            "ic.c_init" => self.ic.c_init = parse_f64(value)?,
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.interval" => self.output.interval = parse_usize(value)?,
            "output.vtk" => self.output.vtk = parse_bool(value)?,
            "output.network_velocity" => self.output.network_velocity = parse_bool(value)?,
            "scaling.ranks" => {
                let mut counts = Vec::new();
                for part in value.split(',') {
                    counts.push(parse_usize(part.trim())?);
                }
                self.scaling.rank_counts = counts;
            }
            "scaling.steps" => self.scaling.steps = parse_usize(value)?,
            "scaling.warmup" => self.scaling.warmup = parse_usize(value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

/// Parse configuration text over the defaults. Validation runs at the end so
/// related keys can arrive in any order.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            text: stripped.to_string(),
            reason: "expected `key = value`".into(),
        })?;
        cfg.apply(key.trim(), value.trim(), line)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load and validate a configuration file.
pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
