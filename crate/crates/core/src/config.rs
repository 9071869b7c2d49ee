//! JSON configuration: the single source of model truth for the
//! command-line tool. Flags select behavior; everything that defines the
//! problem instance lives here so runs can be reproduced from the config
//! digest alone.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AgeXSlice, Field, Grid};
use crate::model::{ControlBounds, Fertility, Mortality, ProblemData, VitalRates};

/// Top-level configuration. See `config_schema` for the key reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub a_max: f64,
    pub t_max: f64,
    pub n_a: usize,
    pub n_x: usize,
    /// Diffusion coefficient in biting time (hours^2 per time unit).
    pub delta: f64,
    /// Kernel window half-width in hours, (0, 24].
    pub eta: f64,
    pub mu: MortalityConfig,
    pub beta: FertilityConfig,
    pub p0: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<SourceConfig>,
    pub bounds: BoundsConfig,
    /// Let the birth window continue periodically past midnight instead of
    /// being truncated by the kernel's zero branch.
    #[serde(default)]
    pub birth_wrap: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MortalityConfig {
    Constant { m0: f64 },
    /// m0 + c / (a_max - a), truncated at N.
    Blowup {
        m0: f64,
        c: f64,
        #[serde(rename = "N")]
        cap: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FertilityConfig {
    Constant { b0: f64 },
    /// Smooth bump of height b0 supported on [a_lo, a_hi].
    Bump { b0: f64, a_lo: f64, a_hi: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
    /// offset + amplitude * cos(2 pi mode x / 24), independent of age.
    CosineX { offset: f64, amplitude: f64, mode: usize },
    /// CSV with header `a,x,value`, row-major in (a, x).
    Csv { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Constant { value: f64 },
    /// Full field CSV with header `a,t,x,value`.
    Csv { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub sigma1: BoundSpec,
    pub sigma2: BoundSpec,
}

/// A control bound: either a constant level or a field CSV path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Constant(f64),
    Csv { csv: String },
}

impl Config {
    /// Parses a config file; errors name the JSON path of the offending key.
    pub fn load(path: &Path) -> Result<Config> {
        let file = File::open(path).map_err(|e| {
            Error::Invalid(format!("cannot open config {}: {e}", path.display()))
        })?;
        let de = &mut serde_json::Deserializer::from_reader(BufReader::new(file));
        serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Invalid(format!("config {}: at {}: {}", path.display(), e.path(), e.inner()))
        })
    }

    pub fn build_grid(&self) -> Result<Grid<f64>> {
        Grid::new(self.a_max, self.t_max, self.n_a, self.n_x)
    }

    /// Realizes the problem instance. `base_dir` resolves relative CSV
    /// paths (usually the config file's directory).
    pub fn build_problem(&self, base_dir: &Path) -> Result<ProblemData<f64>> {
        let grid = self.build_grid()?;
        let mortality = match &self.mu {
            MortalityConfig::Constant { m0 } => Mortality::Constant(*m0),
            MortalityConfig::Blowup { m0, c, cap } => Mortality::Blowup {
                base: *m0,
                strength: *c,
                cap: *cap,
            },
        };
        let fertility = match &self.beta {
            FertilityConfig::Constant { b0 } => Fertility::Constant(*b0),
            FertilityConfig::Bump { b0, a_lo, a_hi } => Fertility::Bump {
                peak: *b0,
                a_lo: *a_lo,
                a_hi: *a_hi,
            },
        };
        let initial = match &self.p0 {
            InitialConfig::Constant { value } => AgeXSlice::constant(&grid, *value),
            InitialConfig::CosineX { offset, amplitude, mode } => AgeXSlice::from_fn(&grid, |_, k| {
                offset
                    + amplitude
                        * (2.0 * std::f64::consts::PI * *mode as f64 * grid.x_center(k) / 24.0).cos()
            }),
            InitialConfig::Csv { path } => read_age_x_csv(&grid, &resolve(base_dir, path))?,
        };
        let source = match &self.f {
            None => None,
            Some(SourceConfig::Constant { value }) if *value == 0.0 => None,
            Some(SourceConfig::Constant { value }) => Some(Field::constant(&grid, *value)),
            Some(SourceConfig::Csv { path }) => {
                Some(read_field_csv(&grid, &resolve(base_dir, path))?)
            }
        };
        let bound_field = |spec: &BoundSpec| -> Result<Field<f64>> {
            match spec {
                BoundSpec::Constant(v) => Ok(Field::constant(&grid, *v)),
                BoundSpec::Csv { csv } => read_field_csv(&grid, &resolve(base_dir, csv)),
            }
        };
        Ok(ProblemData {
            grid,
            rates: VitalRates {
                mortality,
                fertility,
                diffusivity: self.delta,
                kernel_halfwidth: self.eta,
            },
            initial,
            source,
            bounds: ControlBounds {
                lower: bound_field(&self.bounds.sigma1)?,
                upper: bound_field(&self.bounds.sigma2)?,
            },
            birth_wrap: self.birth_wrap,
        })
    }
}

fn resolve(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Reads a full field CSV (`a,t,x,value`) from disk onto `grid`.
pub fn read_field_csv(grid: &Grid<f64>, path: &Path) -> Result<Field<f64>> {
    let file = File::open(path)
        .map_err(|e| Error::Csv(format!("cannot open {}: {e}", path.display())))?;
    Field::read_csv(grid, BufReader::new(file))
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))
}

/// Reads an initial distribution CSV with header `a,x,value`, rows in
/// (age node, x cell) order.
pub fn read_age_x_csv(grid: &Grid<f64>, path: &Path) -> Result<AgeXSlice<f64>> {
    use std::io::BufRead;
    let file = File::open(path)
        .map_err(|e| Error::Csv(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "a,x,value" => {}
        Some(Ok(h)) => {
            return Err(Error::Csv(format!(
                "{}: expected header a,x,value, got {h:?}",
                path.display()
            )))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Csv(format!("{}: empty file", path.display()))),
    }
    let expected = (grid.n_a() + 1) * grid.n_x();
    let mut values = Vec::with_capacity(expected);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Csv(format!(
                "{}: row {row}: expected 3 columns, got {}",
                path.display(),
                cols.len()
            )));
        }
        let v: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|e| Error::Csv(format!("{}: row {row}: bad value: {e}", path.display())))?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::Csv(format!(
            "{}: got {} rows, grid expects {expected}",
            path.display(),
            values.len()
        )));
    }
    let mut out = AgeXSlice::zeros(grid.n_a(), grid.n_x());
    for i in 0..=grid.n_a() {
        for k in 0..grid.n_x() {
            *out.at_mut(i, k) = values[i * grid.n_x() + k];
        }
    }
    Ok(out)
}

/// Machine-readable description of the configuration keys (emitted by
/// `--print-config-schema`).
pub fn config_schema() -> serde_json::Value {
    serde_json::json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "bitectl configuration",
        "type": "object",
        "required": ["a_max", "t_max", "n_a", "n_x", "delta", "eta", "mu", "beta", "p0", "bounds"],
        "additionalProperties": false,
        "properties": {
            "a_max": { "type": "number", "exclusiveMinimum": 0, "description": "age horizon" },
            "t_max": { "type": "number", "exclusiveMinimum": 0,
                       "description": "time horizon; must be an integer multiple of a_max/n_a" },
            "n_a": { "type": "integer", "minimum": 2, "description": "age cells; da = a_max/n_a = dt" },
            "n_x": { "type": "integer", "minimum": 4, "description": "periodic biting-time cells over [0,24)" },
            "delta": { "type": "number", "minimum": 0, "description": "biting-time diffusivity" },
            "eta": { "type": "number", "exclusiveMinimum": 0, "maximum": 24,
                     "description": "birth-kernel window half-width (hours)" },
            "mu": { "oneOf": [
                { "type": "object", "required": ["type", "m0"], "additionalProperties": false,
                  "properties": { "type": { "const": "constant" }, "m0": { "type": "number", "minimum": 0 } } },
                { "type": "object", "required": ["type", "m0", "c", "N"], "additionalProperties": false,
                  "properties": { "type": { "const": "blowup" }, "m0": { "type": "number", "minimum": 0 },
                                   "c": { "type": "number", "minimum": 0 },
                                   "N": { "type": "number", "exclusiveMinimum": 0,
                                          "description": "mandatory truncation level min(mu, N)" } } }
            ]},
            "beta": { "oneOf": [
                { "type": "object", "required": ["type", "b0"], "additionalProperties": false,
                  "properties": { "type": { "const": "constant" }, "b0": { "type": "number", "minimum": 0 } } },
                { "type": "object", "required": ["type", "b0", "a_lo", "a_hi"], "additionalProperties": false,
                  "properties": { "type": { "const": "bump" }, "b0": { "type": "number", "minimum": 0 },
                                   "a_lo": { "type": "number" }, "a_hi": { "type": "number" } } }
            ]},
            "p0": { "oneOf": [
                { "type": "object", "required": ["type", "value"], "additionalProperties": false,
                  "properties": { "type": { "const": "constant" }, "value": { "type": "number", "minimum": 0 } } },
                { "type": "object", "required": ["type", "offset", "amplitude", "mode"], "additionalProperties": false,
                  "properties": { "type": { "const": "cosine_x" }, "offset": { "type": "number" },
                                   "amplitude": { "type": "number" }, "mode": { "type": "integer", "minimum": 0 } } },
                { "type": "object", "required": ["type", "path"], "additionalProperties": false,
                  "properties": { "type": { "const": "csv" },
                                   "path": { "type": "string", "description": "CSV with header a,x,value" } } }
            ]},
            "f": { "description": "optional nonnegative source, default zero", "oneOf": [
                { "type": "object", "required": ["type", "value"], "additionalProperties": false,
                  "properties": { "type": { "const": "constant" }, "value": { "type": "number", "minimum": 0 } } },
                { "type": "object", "required": ["type", "path"], "additionalProperties": false,
                  "properties": { "type": { "const": "csv" },
                                   "path": { "type": "string", "description": "CSV with header a,t,x,value" } } }
            ]},
            "bounds": { "type": "object", "required": ["sigma1", "sigma2"], "additionalProperties": false,
                "description": "admissible control box, sigma1 <= sigma2 <= 0",
                "properties": {
                    "sigma1": { "oneOf": [ { "type": "number" },
                        { "type": "object", "required": ["csv"], "additionalProperties": false,
                          "properties": { "csv": { "type": "string" } } } ] },
                    "sigma2": { "oneOf": [ { "type": "number" },
                        { "type": "object", "required": ["csv"], "additionalProperties": false,
                          "properties": { "csv": { "type": "string" } } } ] }
                } },
            "birth_wrap": { "type": "boolean", "default": false,
                "description": "wrap the birth window periodically past midnight" }
        },
        "sweep_flags": {
            "description": "optimizer settings are flags, not config keys",
            "omega": { "type": "number", "default": 0.5, "description": "control update damping in (0,1]" },
            "tol": { "type": "number", "default": 1e-9, "description": "L2 control-update tolerance" },
            "max_iter": { "type": "integer", "default": 200 }
        }
    })
}
