//! Flat `key = value` run configuration with dotted section keys.
//!
//! ```text
//! scenario = solve
//! wavespeed.model = trig
//! wavespeed.alpha = 4
//! grid.dX = 0.01
//! diagnostics.slice_times = 0.25, 0.5, 1.0
//! ```
//!
//! `#` starts a comment. Lists are comma separated, intervals are `a:b`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use charwave_core::initdata::DataFamily;
use charwave_core::WaveSpeed;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("{}: unknown key `{key}`", at(*line))]
    UnknownKey { line: usize, key: String },
    #[error("{}: key `{key}`: {msg}", at(*line))]
    BadValue { line: usize, key: String, msg: String },
    #[error("missing key `{0}`")]
    Missing(String),
}

fn at(line: usize) -> String {
    if line == 0 {
        "override".into()
    } else {
        format!("line {line}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Solve,
    Crosscheck,
    BlowupDemo,
    PicardStudy,
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solve" => Ok(Self::Solve),
            "crosscheck" => Ok(Self::Crosscheck),
            "blowup_demo" => Ok(Self::BlowupDemo),
            "picard_study" => Ok(Self::PicardStudy),
            _ => Err(format!("unknown scenario `{s}` (solve, crosscheck, blowup_demo, picard_study)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Family(DataFamily),
    /// Two-column `x, value` tables for `v0` and `v1`.
    Csv { v0: PathBuf, v1: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    March,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub mode: SolverMode,
    pub d_xi: f64,
    pub d_eta: f64,
    /// `(X_extent, Y_extent)`: solve on `[-X, X] × [-Y, Y]` instead of the
    /// rectangle covering the data window.
    pub extent: Option<(f64, f64)>,
    pub cell_iters: usize,
    /// Number of additional runs, each with halved steps.
    pub refinements: usize,
    pub k_weight: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagSection {
    pub slice_times: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub seed: u64,
    pub holder_pairs: usize,
    pub lipschitz_slack: f64,
    pub energy_tol: f64,
    pub energy_bound_slack: f64,
    pub measure_tol: f64,
    pub weak_residual: bool,
    /// Grid dump keeps every n-th node in each direction.
    pub grid_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdSection {
    pub dx: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub record_step: f64,
    /// Cross-check tolerance as a multiple of the data amplitude.
    pub tol_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub wave_speed: WaveSpeed,
    pub data: DataSource,
    /// Window holding the support of the data.
    pub window: (f64, f64),
    /// Sampling step of the data, default `dX/4`.
    pub sample_dx: Option<f64>,
    pub solver: SolverSection,
    pub diag: DiagSection,
    pub fd: FdSection,
}

impl RunConfig {
    /// Amplitude of the built-in data family, 0 for tabulated data.
    pub fn amplitude(&self) -> f64 {
        match &self.data {
            DataSource::Family(f) => match *f {
                DataFamily::Zero => 0.0,
                DataFamily::GaussianBump { amplitude, .. }
                | DataFamily::SinePacket { amplitude, .. }
                | DataFamily::GhzBlowup { amplitude, .. } => amplitude,
            },
            DataSource::Csv { .. } => 0.0,
        }
    }

    pub fn t_last(&self) -> f64 {
        self.diag.slice_times.iter().copied().fold(0.0, f64::max)
    }
}

/// Parsed but untyped entries, with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: body.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: body.to_string(),
                });
            }
            if let Some((_, first)) = raw.entries.get(k) {
                return Err(ConfigError::Duplicate {
                    line: line_no,
                    key: k.to_string(),
                    first: *first,
                });
            }
            raw.entries.insert(k.to_string(), (v.to_string(), line_no));
        }
        Ok(raw)
    }

    /// Applies a `key=value` override, replacing any existing entry.
    pub fn set_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: 0,
                text: kv.to_string(),
            });
        };
        self.entries.insert(k.trim().to_string(), (v.trim().to_string(), 0));
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn parse_with<T>(&mut self, key: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => f(&v).map(Some).map_err(|msg| ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg,
            }),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_with(key, |s| s.parse::<T>().map_err(|e| format!("cannot parse `{s}`: {e}")))
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let line = self.entries.get(key).map_or(0, |e| e.1);
        let v = match default {
            Some(d) => self.or(key, d)?,
            None => self.req(key)?,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(ConfigError::BadValue {
                line,
                key: key.to_string(),
                msg: format!("must be positive, got {v}"),
            });
        }
        Ok(v)
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parse_with(key, |s| {
            s.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("cannot parse `{}`: {e}", t.trim())))
                .collect()
        })
    }

    fn pair(&mut self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        let line = self.entries.get(key).map_or(0, |e| e.1);
        match self.intervals(key)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(_) => Err(bad(line, key, "expected a single interval `a:b`")),
        }
    }

    fn intervals(&mut self, key: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        self.parse_with(key, |s| {
            s.split(',')
                .map(|t| {
                    let (a, b) = t.trim().split_once(':').ok_or(format!("expected `a:b`, got `{}`", t.trim()))?;
                    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
                    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
                    if a < b {
                        Ok((a, b))
                    } else {
                        Err(format!("empty interval `{}`", t.trim()))
                    }
                })
                .collect()
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(ConfigError::UnknownKey { line, key }),
        }
    }
}

fn bad(line: usize, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(mut raw: RawConfig) -> Result<Self, ConfigError> {
        let scenario: Scenario = raw
            .parse_with("scenario", |s| s.parse())?
            .ok_or_else(|| ConfigError::Missing("scenario".into()))?;
        let out_dir = PathBuf::from(raw.or("out", "out".to_string())?);

        let model_line = raw.entries.get("wavespeed.model").map_or(0, |e| e.1);
        let model: String = raw.or("wavespeed.model", "constant".to_string())?;
        let wave_speed = match model.as_str() {
            "constant" => WaveSpeed::constant(raw.or("wavespeed.c0", 1.0)?),
            "trig" => WaveSpeed::trigonometric(raw.req("wavespeed.alpha")?, raw.req("wavespeed.gamma")?),
            m => return Err(bad(model_line, "wavespeed.model", format!("unknown model `{m}` (constant, trig)"))),
        }
        .map_err(|e| bad(model_line, "wavespeed", e.to_string()))?;

        let fam_line = raw.entries.get("data.family").map_or(0, |e| e.1);
        let family: String = raw.req("data.family")?;
        let data = match family.as_str() {
            "zero" => DataSource::Family(DataFamily::Zero),
            "gaussian_bump" => {
                let width = raw.positive("data.width", None)?;
                DataSource::Family(DataFamily::GaussianBump {
                    amplitude: raw.req("data.amplitude")?,
                    center: raw.or("data.center", 0.0)?,
                    width,
                    cutoff: raw.positive("data.cutoff", Some(4.0 * width))?,
                })
            }
            "sine_packet" => DataSource::Family(DataFamily::SinePacket {
                amplitude: raw.req("data.amplitude")?,
                wavenumber: raw.req("data.wavenumber")?,
                width: raw.positive("data.width", None)?,
                center: raw.or("data.center", 0.0)?,
            }),
            "ghz_blowup" => DataSource::Family(DataFamily::GhzBlowup {
                amplitude: raw.req("data.amplitude")?,
                center: raw.or("data.center", 0.0)?,
                width: raw.positive("data.width", None)?,
            }),
            "csv" => DataSource::Csv {
                v0: PathBuf::from(raw.req::<String>("data.v0_csv")?),
                v1: PathBuf::from(raw.req::<String>("data.v1_csv")?),
            },
            f => {
                return Err(bad(
                    fam_line,
                    "data.family",
                    format!("unknown family `{f}` (zero, gaussian_bump, sine_packet, ghz_blowup, csv)"),
                ))
            }
        };
        let support = match &data {
            DataSource::Family(f) => f.support(),
            DataSource::Csv { .. } => None,
        };
        let window = match raw.pair("data.window")? {
            Some(w) => w,
            None => {
                let (a, b) = support.unwrap_or((-1.0, 1.0));
                (a - 0.25, b + 0.25)
            }
        };
        let sample_dx = raw.opt::<f64>("data.dx")?;

        let d_xi = raw.positive("grid.dX", Some(0.01))?;
        let mode_line = raw.entries.get("solver.mode").map_or(0, |e| e.1);
        let mode = match raw.or("solver.mode", "march".to_string())?.as_str() {
            "march" => SolverMode::March,
            "picard" => SolverMode::Picard,
            m => return Err(bad(mode_line, "solver.mode", format!("unknown mode `{m}` (march, picard)"))),
        };
        let ext_line = ["grid.X_extent", "grid.Y_extent"]
            .iter()
            .find_map(|k| raw.entries.get(*k).map(|e| e.1))
            .unwrap_or(0);
        let xe = raw.opt::<f64>("grid.X_extent")?;
        let ye = raw.opt::<f64>("grid.Y_extent")?;
        let extent = match (xe, ye) {
            (None, None) => None,
            (Some(x), Some(y)) if x > 0.0 && y > 0.0 => Some((x, y)),
            _ => return Err(bad(ext_line, "grid.X_extent", "grid.X_extent and grid.Y_extent must both be set and positive")),
        };
        let solver = SolverSection {
            mode,
            d_xi,
            d_eta: raw.positive("grid.dY", Some(d_xi))?,
            extent,
            cell_iters: raw.or("solver.cell_iters", 3)?,
            refinements: raw.or("solver.refinements", 0)?,
            k_weight: raw.opt("solver.K_weight")?,
            max_iters: raw.or("solver.max_iters", 200)?,
            tol: raw.positive("solver.tol", Some(1e-12))?,
        };

        let times_line = raw.entries.get("diagnostics.slice_times").map_or(0, |e| e.1);
        let slice_times = raw
            .list("diagnostics.slice_times")?
            .unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
        if slice_times.is_empty() || slice_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(bad(times_line, "diagnostics.slice_times", "times must be non-negative"));
        }
        let diag = DiagSection {
            slice_times,
            intervals: raw
                .intervals("diagnostics.intervals")?
                .unwrap_or_else(|| vec![(-1e3, 0.0), (0.0, 1e3)]),
            seed: raw.or("diagnostics.seed", 42)?,
            holder_pairs: raw.or("diagnostics.holder_pairs", 4000)?,
            lipschitz_slack: raw.or("diagnostics.lipschitz_slack", 0.05)?,
            energy_tol: raw.or("diagnostics.energy_tol", 0.01)?,
            energy_bound_slack: raw.or("diagnostics.energy_bound_slack", 0.02)?,
            measure_tol: raw.or("diagnostics.measure_tol", 0.02)?,
            weak_residual: raw.or("diagnostics.weak_residual", true)?,
            grid_stride: raw.or("diagnostics.grid_stride", 0)?,
        };

        let fd = FdSection {
            dx: raw.positive("fd.dx", Some(1e-3))?,
            cfl: raw.or("fd.cfl", 0.8)?,
            t_final: raw.positive("fd.t_final", Some(diag.slice_times.iter().copied().fold(0.0, f64::max).max(0.1)))?,
            record_step: raw.positive("fd.record_step", Some(0.05))?,
            tol_factor: raw.positive("crosscheck.tol_factor", Some(5e-3))?,
        };
        raw.finish()?;
        Ok(Self {
            scenario,
            out_dir,
            wave_speed,
            data,
            window,
            sample_dx,
            solver,
            diag,
            fd,
        })
    }
}
