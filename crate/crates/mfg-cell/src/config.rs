//! Run configuration: flat dotted-key configuration documents plus defaults.
//!
//! Format: UTF-8 text, one `key = value` per line, `#` starts a comment.
//! Values are numbers, bare words, or bracketed lists `[a, b, c]`.
//! Ranges are `[min, max, count]` triples.

use std::path::PathBuf;

use crate::error::ConfigError;
use crate::newton::SolverOptions;
use crate::potential::PotentialSpec;
use crate::sweep::{RefineQuantity, SweepOrdering, SweepSpec};

/// CLI command mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Sweep,
    Refine,
    Slice,
    Audit,
}

/// Potential kind as configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Power,
    Log,
}

/// Full run configuration: sweep spec fields plus output path, command mode,
/// finite-difference step, and the refinement grid list.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub kind: PotentialKind,
    pub q: f64,
    pub amplitude: f64,
    pub grid_n: usize,
    pub p_range: (f64, f64, usize),
    pub alpha_range: (f64, f64, usize),
    pub ordering: SweepOrdering,
    pub options: SolverOptions,
    pub delta: f64,
    pub n_list: Vec<usize>,
    pub refine_quantity: Option<RefineQuantity>,
    pub point_p: f64,
    pub point_alpha: f64,
    pub slice_alpha: f64,
    pub slice_p_list: Vec<f64>,
    pub out_path: Option<PathBuf>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sweep,
            kind: PotentialKind::Power,
            q: 1.0,
            amplitude: 100.0,
            grid_n: 400,
            p_range: (-10.0, 10.0, 51),
            alpha_range: (0.0, 20.0, 51),
            ordering: SweepOrdering::RowMajorWarm,
            options: SolverOptions::default(),
            delta: 1e-3,
            n_list: vec![50, 100, 200, 400],
            refine_quantity: None,
            point_p: 0.0,
            point_alpha: 1.0,
            slice_alpha: 10.0,
            slice_p_list: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            out_path: None,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn potential(&self) -> PotentialSpec {
        match self.kind {
            PotentialKind::Power => PotentialSpec::power(self.q, self.amplitude),
            PotentialKind::Log => PotentialSpec::log(self.amplitude),
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            p_range: self.p_range,
            alpha_range: self.alpha_range,
            grid_n: self.grid_n,
            potential: self.potential(),
            options: self.options.clone(),
            ordering: self.ordering,
        }
    }

    /// Quantity for refinement studies; defaults to E for the log coupling
    /// and relation_error for the power coupling.
    pub fn refine_quantity(&self) -> RefineQuantity {
        self.refine_quantity.unwrap_or(match self.kind {
            PotentialKind::Log => RefineQuantity::E,
            PotentialKind::Power => RefineQuantity::RelationError,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kind == PotentialKind::Power && !(self.q > 0.0) {
            return Err(ConfigError::Constraint(format!(
                "power coupling requires q > 0, got {}",
                self.q
            )));
        }
        if self.amplitude < 0.0 {
            return Err(ConfigError::Constraint(format!(
                "potential amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if self.grid_n < crate::grid::MIN_NODES {
            return Err(ConfigError::Constraint(format!(
                "grid needs at least 8 nodes, got {}",
                self.grid_n
            )));
        }
        let log = self.kind == PotentialKind::Log;
        match self.mode {
            Mode::Sweep => {
                if self.p_range.2 < 2 || self.alpha_range.2 < 2 {
                    return Err(ConfigError::Constraint(
                        "sweep ranges need at least 2 points".into(),
                    ));
                }
                if log && self.alpha_range.0 <= 0.0 {
                    return Err(ConfigError::Constraint(
                        "log potential requires alpha_min > 0".into(),
                    ));
                }
                if !log && self.alpha_range.0 < 0.0 {
                    return Err(ConfigError::Constraint(
                        "power coupling requires alpha >= 0".into(),
                    ));
                }
            }
            Mode::Solve | Mode::Refine => {
                if log && self.point_alpha <= 0.0 {
                    return Err(ConfigError::Constraint(
                        "log potential requires alpha > 0".into(),
                    ));
                }
                if !log && self.point_alpha < 0.0 {
                    return Err(ConfigError::Constraint(
                        "power coupling requires alpha >= 0".into(),
                    ));
                }
            }
            Mode::Slice => {
                if log && self.slice_alpha <= 0.0 {
                    return Err(ConfigError::Constraint(
                        "log potential requires alpha > 0".into(),
                    ));
                }
            }
            Mode::Audit => {}
        }
        if !(self.delta > 0.0) {
            return Err(ConfigError::Constraint(format!(
                "fd step delta must be positive, got {}",
                self.delta
            )));
        }
        self.options
            .validate()
            .map_err(ConfigError::Constraint)?;
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        message: format!("`{value}` is not a number"),
    })
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        message: format!("`{value}` is not a nonnegative integer"),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<String>, ConfigError> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| ConfigError::BadValue {
            key: key.into(),
            message: "expected a bracketed list [a, b, c]".into(),
        })?;
    Ok(inner
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64, usize), ConfigError> {
    let items = parse_list(key, value)?;
    if items.len() != 3 {
        return Err(ConfigError::BadValue {
            key: key.into(),
            message: format!("range needs [min, max, count], got {} items", items.len()),
        });
    }
    Ok((
        parse_f64(key, &items[0])?,
        parse_f64(key, &items[1])?,
        parse_usize(key, &items[2])?,
    ))
}

fn apply_key(config: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "mode" => {
            config.mode = match value {
                "solve" => Mode::Solve,
                "sweep" => Mode::Sweep,
                "refine" => Mode::Refine,
                "slice" => Mode::Slice,
                "audit" => Mode::Audit,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        message: format!("`{value}` is not one of solve|sweep|refine|slice|audit"),
                    })
                }
            }
        }
        "potential.kind" => {
            config.kind = match value {
                "power" => PotentialKind::Power,
                "log" => PotentialKind::Log,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        message: format!("`{value}` is not one of power|log"),
                    })
                }
            }
        }
        "potential.q" => config.q = parse_f64(key, value)?,
        "potential.A" => config.amplitude = parse_f64(key, value)?,
        "grid.N" => config.grid_n = parse_usize(key, value)?,
        "sweep.P" => config.p_range = parse_range(key, value)?,
        "sweep.alpha" => config.alpha_range = parse_range(key, value)?,
        "sweep.ordering" => {
            config.ordering = match value {
                "warm" => SweepOrdering::RowMajorWarm,
                "cold" => SweepOrdering::IndependentCold,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        message: format!("`{value}` is not one of warm|cold"),
                    })
                }
            }
        }
        "solver.tol_residual" => config.options.tol_residual = parse_f64(key, value)?,
        "solver.tol_step" => config.options.tol_step = parse_f64(key, value)?,
        "solver.max_iterations" => config.options.max_iterations = parse_usize(key, value)?,
        "solver.armijo_c" => config.options.armijo_c = parse_f64(key, value)?,
        "solver.backtrack_factor" => config.options.backtrack_factor = parse_f64(key, value)?,
        "solver.min_density" => config.options.min_density = parse_f64(key, value)?,
        "fd.delta" => config.delta = parse_f64(key, value)?,
        "refine.N_list" => {
            config.n_list = parse_list(key, value)?
                .iter()
                .map(|s| parse_usize(key, s))
                .collect::<Result<_, _>>()?
        }
        "refine.quantity" => {
            config.refine_quantity = Some(match value {
                "E" => RefineQuantity::E,
                "relation_error" => RefineQuantity::RelationError,
                "R" => RefineQuantity::R,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        message: format!("`{value}` is not one of E|relation_error|R"),
                    })
                }
            })
        }
        "point.P" => config.point_p = parse_f64(key, value)?,
        "point.alpha" => config.point_alpha = parse_f64(key, value)?,
        "slice.alpha" => config.slice_alpha = parse_f64(key, value)?,
        "slice.P_list" => {
            config.slice_p_list = parse_list(key, value)?
                .iter()
                .map(|s| parse_f64(key, s))
                .collect::<Result<_, _>>()?
        }
        "output.path" => config.out_path = Some(PathBuf::from(value)),
        "threads" => config.threads = parse_usize(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.into())),
    }
    Ok(())
}

/// Parse a configuration document without the final validation pass. The CLI
/// uses this so that the subcommand can set the mode before constraints are
/// checked.
pub fn parse_config_document(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: lineno + 1 });
        };
        apply_key(&mut config, key.trim(), value.trim())?;
    }
    Ok(config)
}

/// Parse a configuration document, applying defaults for omitted keys and
/// validating the result under the mode the document selects.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config = parse_config_document(text)?;
    config.validate()?;
    Ok(config)
}
