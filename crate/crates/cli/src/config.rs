//! Run configuration: TOML with one table per subcommand plus shared trap and
//! pair-potential declarations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gpbm_core::potentials::{PairShape, RadialPairPotential, TrapPotential};
use gpbm_core::ExtReal;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub trap: Option<TrapDecl>,
    #[serde(default)]
    pub pair: BTreeMap<String, PairDecl>,
    pub scatter: Option<ScatterSection>,
    pub gp: Option<GpSection>,
    pub hartree: Option<HartreeSection>,
    pub simulate: Option<SimulateSection>,
    pub ldp: Option<LdpSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrapDecl {
    Free,
    Harmonic {
        #[serde(default = "one")]
        stiffness: f64,
    },
    HardWall {
        radius: f64,
    },
    Tabulated {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairDecl {
    Zero,
    HardCore { radius: f64 },
    SquareWell { height: f64, radius: f64 },
    Shoulder { core: f64, height: f64, radius: f64 },
    InversePower { coefficient: f64, exponent: f64, cutoff: f64 },
    Gaussian { height: f64, width: f64 },
    Tabulated { file: PathBuf },
}

fn one() -> f64 {
    1.0
}

/// A scalar or a sweep list.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterSection {
    /// Pair ids; all declared pairs when absent.
    pub potentials: Option<Vec<String>>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
}

fn default_dims() -> Vec<usize> {
    vec![3]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    pub dim: usize,
    #[serde(default)]
    pub alpha: f64,
    pub nodes: Option<usize>,
    pub extent: Option<f64>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub dump: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HartreeSection {
    pub dim: usize,
    pub n: OneOrMany<usize>,
    pub pair: String,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default = "yes")]
    pub symmetric: bool,
    pub nodes: Option<usize>,
    pub extent: Option<f64>,
    pub tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    #[serde(default)]
    pub dump: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Use the pair potential as declared.
    #[default]
    None,
    /// `v_N = N^{d-1} v(N ·)`.
    Hartree,
}

impl Scaling {
    pub fn label(self) -> &'static str {
        match self {
            Scaling::None => "none",
            Scaling::Hartree => "hartree",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Canonical,
    Hartree,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub model: ModelName,
    #[serde(default = "one_usize")]
    pub dim: usize,
    pub n: OneOrMany<usize>,
    pub beta: OneOrMany<f64>,
    pub steps: usize,
    pub replicas: usize,
    pub seed: Option<u64>,
    pub pair: Option<String>,
    #[serde(default = "one_usize")]
    pub stride: usize,
    pub histogram: Option<HistogramSection>,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub cells: usize,
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum RateName {
    DonskerVaradhan,
    JBeta,
    Meanfield,
    Canonical,
    Hartree,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSection {
    pub rate: RateName,
    pub density: OneOrMany<PathBuf>,
    pub beta: Option<f64>,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub chi: f64,
    pub particles: Option<usize>,
    pub pair: Option<String>,
    pub bound: Option<f64>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
}

/// Parsed config plus the raw bytes (for hashing) and the directory used to
/// resolve relative file references.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw).map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, raw, base })
}

pub fn field_error(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {message}"))
}

pub fn require<T>(value: Option<T>, field: &str) -> Result<T, CliError> {
    value.ok_or_else(|| field_error(field, "missing"))
}

pub fn positive(x: f64, field: &str) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(field_error(field, format!("must be positive and finite, got {x}")))
    }
}

pub fn dimension(d: usize, field: &str) -> Result<usize, CliError> {
    if (1..=3).contains(&d) {
        Ok(d)
    } else {
        Err(field_error(field, format!("dimension must be 1, 2 or 3, got {d}")))
    }
}

/// Sweep values; an empty list is an error.
pub fn sweep<T: Clone>(values: &OneOrMany<T>, field: &str) -> Result<Vec<T>, CliError> {
    let v = values.values();
    if v.is_empty() {
        return Err(field_error(field, "sweep list is empty"));
    }
    Ok(v)
}

/// Parse a token that may be `inf`.
fn ext_token(token: &str) -> Option<ExtReal> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") || t.eq_ignore_ascii_case("infinity") {
        return Some(ExtReal::Infinite);
    }
    t.parse::<f64>().ok().filter(|x| x.is_finite()).map(ExtReal::Finite)
}

/// Two-column `(radius, value)` table; a header row is skipped when its
/// first field is not numeric.
pub fn read_table(path: &Path, field: &str) -> Result<(Vec<f64>, Vec<ExtReal>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| field_error(field, format!("{}: {e}", path.display())))?;
    let (mut radii, mut values) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| field_error(field, format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(field_error(field, format!("{} line {}: expected 2 columns", path.display(), line + 1)));
        }
        let r = record[0].parse::<f64>();
        if r.is_err() && line == 0 {
            continue;
        }
        let bad = || field_error(field, format!("{} line {}: cannot parse {:?}", path.display(), line + 1, record.as_slice()));
        radii.push(r.map_err(|_| bad())?);
        values.push(ext_token(&record[1]).ok_or_else(bad)?);
    }
    Ok((radii, values))
}

impl TrapDecl {
    pub fn build(&self, base: &Path) -> Result<TrapPotential, CliError> {
        let built = match self {
            TrapDecl::Free => Ok(TrapPotential::Free),
            TrapDecl::Harmonic { stiffness } => TrapPotential::harmonic(*stiffness),
            TrapDecl::HardWall { radius } => TrapPotential::hard_wall(*radius),
            TrapDecl::Tabulated { file } => {
                let (r, v) = read_table(&base.join(file), "trap.file")?;
                TrapPotential::tabulated(r, v)
            }
        };
        built.map_err(|e| field_error("trap", e))
    }
}

impl PairDecl {
    pub fn build(&self, id: &str, base: &Path) -> Result<RadialPairPotential, CliError> {
        let field = format!("pair.{id}");
        let shape = match self.clone() {
            PairDecl::Zero => PairShape::Zero,
            PairDecl::HardCore { radius } => PairShape::HardCore { radius },
            PairDecl::SquareWell { height, radius } => PairShape::SquareWell { height, radius },
            PairDecl::Shoulder { core, height, radius } => PairShape::HardCoreShoulder { core, height, radius },
            PairDecl::InversePower { coefficient, exponent, cutoff } => PairShape::InversePower { coefficient, exponent, cutoff },
            PairDecl::Gaussian { height, width } => PairShape::Gaussian { height, width },
            PairDecl::Tabulated { file } => {
                let (radii, values) = read_table(&base.join(file), &format!("{field}.file"))?;
                PairShape::Tabulated { radii, values }
            }
        };
        RadialPairPotential::new(shape).map_err(|e| field_error(&field, e))
    }
}

impl LoadedConfig {
    pub fn trap(&self) -> Result<TrapPotential, CliError> {
        self.config.trap.as_ref().map_or(Ok(TrapPotential::Free), |t| t.build(&self.base))
    }

    pub fn pair(&self, id: &str, field: &str) -> Result<RadialPairPotential, CliError> {
        let decl = self
            .config
            .pair
            .get(id)
            .ok_or_else(|| field_error(field, format!("unknown pair potential id {id:?}")))?;
        decl.build(id, &self.base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base.join(path)
    }
}
