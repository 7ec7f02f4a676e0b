//! Experiment configuration.
//!
//! A config is a flat list of `namespace.key = value` lines (a subset of
//! TOML, so `[namespace]` tables also work):
//!
//! ```text
//! oracle.kind = "ce3"
//! oracle.eps = 0.5
//! optimizer.rule = "ec_sgd"
//! optimizer.compressor = "top_k:1"
//! optimizer.gamma = 0.01
//! run.T = 1000
//! run.seeds = [1, 2, 3]
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ef_lab_core::compressors::{CompressorSpec, SignZero};
use ef_lab_core::optimizers::{OptimizerSpec, Projection, RecordingOptions, Rule};
use ef_lab_core::{Error as CoreError, Oracle, OracleKind, Vector};
use toml::{Table, Value};

pub const SEED_ENV: &str = "EF_LAB_SEED";

/// A configuration problem, always tied to the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = Result<T, ConfigError>;

/// Log-spaced learning-rate grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for LrGrid {
    fn default() -> Self {
        Self {
            lo: 1e-5,
            hi: 1e1,
            points: 9,
        }
    }
}

impl LrGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.log10(), self.hi.log10());
        let step = (b - a) / (self.points - 1) as f64;
        (0..self.points).map(|j| 10f64.powf(a + step * j as f64)).collect()
    }

    fn validate(&self) -> CfgResult<()> {
        if !(self.lo > 0.0 && self.lo.is_finite()) {
            return Err(ConfigError::new("sweep.lo", "must be finite and > 0"));
        }
        if !(self.hi >= self.lo && self.hi.is_finite()) {
            return Err(ConfigError::new("sweep.hi", "must be finite and >= sweep.lo"));
        }
        if self.points == 0 {
            return Err(ConfigError::new("sweep.points", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartPoint {
    /// The oracle's own default start.
    Default,
    Zeros,
    Ones,
    /// `N(0, I)`, drawn per run seed.
    Random,
    Explicit(Vec<f64>),
}

impl StartPoint {
    pub fn resolve(&self, oracle: &Oracle, seed: u64) -> Vector {
        let d = oracle.dim();
        match self {
            Self::Default => oracle.default_x0().clone(),
            Self::Zeros => Vector::zeros(d),
            Self::Ones => Vector::filled(d, 1.0),
            Self::Random => {
                let mut rng = ef_lab_core::stream(seed, ef_lab_core::Stream::Init);
                Vector::new(ef_lab_core::rng::standard_normal(d, &mut rng)).expect("normal samples are finite")
            }
            Self::Explicit(v) => Vector::new(v.clone()).expect("validated at load"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: LrGrid,
    /// Rule names; empty means just `optimizer.rule`.
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub oracle: OracleKind,
    /// Seed of the random problem instance (data, splits).
    pub instance_seed: u64,
    pub optimizer: OptimizerSpec,
    /// Compressor used when a sweep switches to `ec_sgd`.
    pub compressor: CompressorSpec,
    pub beta: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub x0: StartPoint,
    pub full_batch: bool,
    pub record: RecordingOptions,
    pub output_dir: PathBuf,
    pub sweep: SweepConfig,
    table: Table,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("oracle", &["kind", "eps", "d", "n", "noise_std", "seed"]),
    ("optimizer", &["rule", "compressor", "gamma", "beta", "projection", "sign_zero"]),
    ("run", &["T", "seeds", "x0", "full_batch"]),
    ("record", &["span", "phi", "test_loss", "every", "average_iterate"]),
    ("output", &["dir"]),
    ("sweep", &["lo", "hi", "points", "rules"]),
];

struct Fields<'a> {
    table: &'a Table,
}

impl<'a> Fields<'a> {
    fn get(&self, field: &str) -> Option<&'a Value> {
        let (ns, key) = field.split_once('.').expect("namespaced field");
        self.table.get(ns)?.as_table()?.get(key)
    }

    fn str(&self, field: &str) -> CfgResult<Option<&'a str>> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ConfigError::new(field, "expected a string")),
        }
    }

    fn req_str(&self, field: &str) -> CfgResult<&'a str> {
        self.str(field)?.ok_or_else(|| ConfigError::new(field, "missing required key"))
    }

    fn f64(&self, field: &str) -> CfgResult<Option<f64>> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(ConfigError::new(field, "expected a number")),
        }
    }

    fn count(&self, field: &str) -> CfgResult<Option<usize>> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(ConfigError::new(field, "expected a non-negative integer")),
        }
    }

    fn bool(&self, field: &str) -> CfgResult<Option<bool>> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(ConfigError::new(field, "expected true or false")),
        }
    }
}

pub fn parse_config(text: &str) -> CfgResult<ExperimentConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new("config", format!("parse error: {e}")))?;
    check_keys(&table)?;
    let f = Fields { table: &table };

    let oracle = parse_oracle(&f)?;
    let instance_seed = f.count("oracle.seed")?.unwrap_or(0) as u64;

    let sign_zero = match f.str("optimizer.sign_zero")? {
        Some(s) => s.parse().map_err(|e: String| ConfigError::new("optimizer.sign_zero", e))?,
        None => SignZero::PlusOne,
    };
    let compressor: CompressorSpec = match f.str("optimizer.compressor")? {
        Some(s) => s.parse().map_err(|e: String| ConfigError::new("optimizer.compressor", e))?,
        None => CompressorSpec::sign_scaled(),
    };
    let compressor = compressor.with_sign_zero(sign_zero);
    let beta = f.f64("optimizer.beta")?.unwrap_or(0.9);
    let rule_name = f.req_str("optimizer.rule")?;
    let rule = rule_from_name(rule_name, compressor, beta).map_err(|m| ConfigError::new("optimizer.rule", m))?;
    let gamma = f
        .f64("optimizer.gamma")?
        .ok_or_else(|| ConfigError::new("optimizer.gamma", "missing required key"))?;
    let projection: Projection = match f.str("optimizer.projection")? {
        Some(s) => s.parse().map_err(|e: String| ConfigError::new("optimizer.projection", e))?,
        None => Projection::None,
    };
    let optimizer = OptimizerSpec::new(rule, gamma)
        .with_projection(projection)
        .with_sign_zero(sign_zero);

    let steps = f
        .count("run.T")?
        .ok_or_else(|| ConfigError::new("run.T", "missing required key"))?;
    let seeds = match f.get("run.seeds") {
        None => vec![0],
        Some(Value::Integer(i)) if *i >= 0 => vec![*i as u64],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                _ => Err(ConfigError::new("run.seeds", "seeds must be non-negative integers")),
            })
            .collect::<CfgResult<_>>()?,
        Some(_) => return Err(ConfigError::new("run.seeds", "expected an integer or a list of integers")),
    };
    let x0 = match f.get("run.x0") {
        None => StartPoint::Default,
        Some(Value::String(s)) => match s.as_str() {
            "default" => StartPoint::Default,
            "zeros" => StartPoint::Zeros,
            "ones" => StartPoint::Ones,
            "random" => StartPoint::Random,
            other => {
                return Err(ConfigError::new(
                    "run.x0",
                    format!("expected default, zeros, ones, random or a list of numbers, got `{other}`"),
                ))
            }
        },
        Some(Value::Array(items)) => StartPoint::Explicit(
            items
                .iter()
                .map(|v| match v {
                    Value::Float(x) if x.is_finite() => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(ConfigError::new("run.x0", "entries must be finite numbers")),
                })
                .collect::<CfgResult<_>>()?,
        ),
        Some(_) => return Err(ConfigError::new("run.x0", "expected a string or a list of numbers")),
    };
    let full_batch = f.bool("run.full_batch")?.unwrap_or(false);

    let record = RecordingOptions {
        span: f.bool("record.span")?.unwrap_or(false),
        phi: f.bool("record.phi")?.unwrap_or(false),
        test_loss: f.bool("record.test_loss")?.unwrap_or(false),
        every: f.count("record.every")?.unwrap_or(1),
        average_iterate: f.bool("record.average_iterate")?.unwrap_or(false),
    };
    let output_dir = PathBuf::from(f.str("output.dir")?.unwrap_or("ef-lab-out"));

    let defaults = LrGrid::default();
    let grid = LrGrid {
        lo: f.f64("sweep.lo")?.unwrap_or(defaults.lo),
        hi: f.f64("sweep.hi")?.unwrap_or(defaults.hi),
        points: f.count("sweep.points")?.unwrap_or(defaults.points),
    };
    let rules = match f.get("sweep.rules") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => rule_from_name(s, compressor, beta)
                    .map(|_| s.clone())
                    .map_err(|m| ConfigError::new("sweep.rules", m)),
                _ => Err(ConfigError::new("sweep.rules", "expected a list of rule names")),
            })
            .collect::<CfgResult<_>>()?,
        Some(_) => return Err(ConfigError::new("sweep.rules", "expected a list of rule names")),
    };

    let cfg = ExperimentConfig {
        oracle,
        instance_seed,
        optimizer,
        compressor,
        beta,
        steps,
        seeds,
        x0,
        full_batch,
        record,
        output_dir,
        sweep: SweepConfig { grid, rules },
        table,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn check_keys(table: &Table) -> CfgResult<()> {
    for (ns, value) in table {
        let Some((_, keys)) = KNOWN.iter().find(|(n, _)| n == ns) else {
            return Err(ConfigError::new(ns.clone(), "unknown namespace"));
        };
        let Value::Table(inner) = value else {
            return Err(ConfigError::new(ns.clone(), "expected `namespace.key = value` entries"));
        };
        for (key, v) in inner {
            let field = format!("{ns}.{key}");
            if !keys.contains(&key.as_str()) {
                return Err(ConfigError::new(field, "unknown key"));
            }
            if matches!(v, Value::Table(_)) {
                return Err(ConfigError::new(field, "only one level of nesting is allowed"));
            }
        }
    }
    Ok(())
}

fn parse_oracle(f: &Fields<'_>) -> CfgResult<OracleKind> {
    let need = |field: &str| -> CfgResult<usize> {
        f.count(field)?
            .ok_or_else(|| ConfigError::new(field, "missing required key for this oracle"))
    };
    let eps = || -> CfgResult<f64> { Ok(f.f64("oracle.eps")?.unwrap_or(0.5)) };
    Ok(match f.req_str("oracle.kind")? {
        "ce1" => OracleKind::Ce1,
        "ce2" => OracleKind::Ce2 { eps: eps()? },
        "ce3" => OracleKind::Ce3 { eps: eps()? },
        "theorem1" => {
            let d = need("oracle.d")?;
            let n = f.count("oracle.n")?.unwrap_or(2 * d);
            OracleKind::Theorem1 { d, n }
        }
        "sparse_noise" => OracleKind::SparseNoise {
            d: f.count("oracle.d")?.unwrap_or(100),
            noise_std: f.f64("oracle.noise_std")?.unwrap_or(0.0),
        },
        "wilson" => OracleKind::Wilson {
            n: f.count("oracle.n")?.unwrap_or(200),
        },
        "least_squares" => OracleKind::LeastSquares {
            n: need("oracle.n")?,
            d: need("oracle.d")?,
        },
        other => {
            return Err(ConfigError::new(
                "oracle.kind",
                format!("unknown oracle `{other}` (ce1, ce2, ce3, theorem1, sparse_noise, wilson, least_squares)"),
            ))
        }
    })
}

pub fn rule_from_name(name: &str, compressor: CompressorSpec, beta: f64) -> Result<Rule, String> {
    Ok(match name {
        "ec_sgd" => Rule::EcSgd(compressor),
        "sgd" => Rule::Sgd,
        "sgd_momentum" => Rule::SgdMomentum { beta },
        "sign_sgd" => Rule::SignSgd,
        "sign_sgd_scaled" => Rule::SignSgdScaled,
        "signum" => Rule::Signum { beta },
        other => {
            return Err(format!(
                "unknown rule `{other}` (ec_sgd, sgd, sgd_momentum, sign_sgd, sign_sgd_scaled, signum)"
            ))
        }
    })
}

/// Maps a core validation error onto the config field it came from.
pub fn field_error(err: CoreError) -> ConfigError {
    match err {
        CoreError::InvalidParameter { name, reason } => {
            let field = match name {
                "gamma" | "beta" | "schedule" => format!("optimizer.{name}"),
                "k" => "optimizer.compressor".to_string(),
                "eps" | "d" | "n" | "noise_std" => format!("oracle.{name}"),
                "every" => "record.every".to_string(),
                "span" => "record.span".to_string(),
                "steps" => "run.T".to_string(),
                other => other.to_string(),
            };
            ConfigError::new(field, reason)
        }
        CoreError::DimensionMismatch { expected, got } => {
            ConfigError::new("run.x0", format!("expected {expected} entries, got {got}"))
        }
        other => ConfigError::new("config", other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> CfgResult<()> {
        if self.steps == 0 {
            return Err(ConfigError::new("run.T", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("run.seeds", "must not be empty"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(ConfigError::new("run.seeds", "seeds must be distinct"));
        }
        if self.record.every == 0 {
            return Err(ConfigError::new("record.every", "must be at least 1"));
        }
        self.sweep.grid.validate()?;
        // Cheap structural checks first; building the oracle validates the
        // problem parameters.
        let oracle = self.build_oracle()?;
        self.optimizer.validate(oracle.dim()).map_err(field_error)?;
        if let StartPoint::Explicit(v) = &self.x0 {
            if v.len() != oracle.dim() {
                return Err(ConfigError::new(
                    "run.x0",
                    format!("expected {} entries, got {}", oracle.dim(), v.len()),
                ));
            }
        }
        if self.record.span {
            if self.steps > ef_lab_core::optimizers::MAX_SPAN_STEPS {
                return Err(ConfigError::new(
                    "record.span",
                    format!("span recording is limited to run.T <= {}", ef_lab_core::optimizers::MAX_SPAN_STEPS),
                ));
            }
            let zero_start = match &self.x0 {
                StartPoint::Zeros => true,
                StartPoint::Default => oracle.default_x0().iter().all(|v| *v == 0.0),
                StartPoint::Explicit(v) => v.iter().all(|x| *x == 0.0),
                _ => false,
            };
            if !zero_start {
                return Err(ConfigError::new("record.span", "span recording requires run.x0 = \"zeros\""));
            }
        }
        Ok(())
    }

    pub fn build_oracle(&self) -> CfgResult<Oracle> {
        Oracle::build(&self.oracle, self.instance_seed).map_err(field_error)
    }

    /// Replaces the seeds with the comma-separated list in `value`.
    pub fn override_seeds(&mut self, value: &str) -> CfgResult<()> {
        let seeds = value
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ConfigError::new(SEED_ENV, format!("expected comma-separated seeds, got `{value}`")))?;
        self.seeds = seeds;
        self.validate()
    }

    /// Applies `EF_LAB_SEED` when it is set.
    pub fn apply_env(&mut self) -> CfgResult<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) if !v.trim().is_empty() => self.override_seeds(&v),
            _ => Ok(()),
        }
    }

    /// Canonical dump of the configuration, with the effective seeds.
    pub fn canonical(&self) -> String {
        let mut table = self.table.clone();
        let run = table
            .entry("run")
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("checked at load");
        run.insert(
            "seeds".into(),
            Value::Array(self.seeds.iter().map(|s| Value::Integer(*s as i64)).collect()),
        );
        let mut out = String::new();
        for (ns, v) in &table {
            if let Value::Table(inner) = v {
                for (key, value) in inner {
                    out.push_str(&format!("{ns}.{key} = {value}\n"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
oracle.kind = "ce3"
optimizer.rule = "sgd"
optimizer.gamma = 0.01
run.T = 10
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.oracle, OracleKind::Ce3 { eps: 0.5 });
        assert_eq!(cfg.optimizer.rule, Rule::Sgd);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.record.every, 1);
        assert_eq!(cfg.x0, StartPoint::Default);
    }

    #[test]
    fn table_syntax_is_accepted() {
        let cfg = parse_config("[oracle]\nkind = \"ce1\"\n[optimizer]\nrule = \"sign_sgd\"\ngamma = 0.01\nprojection = \"box:-1:1\"\n[run]\nT = 5\nseeds = [1, 2, 3]\n").unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.optimizer.projection, Projection::Box { lo: -1.0, hi: 1.0 });
    }

    #[test]
    fn negative_gamma_names_field() {
        let err = parse_config(&MINIMAL.replace("0.01", "-1")).unwrap_err();
        assert_eq!(err.field, "optimizer.gamma");
    }

    #[test]
    fn errors_name_fields() {
        let cases = [
            (MINIMAL.replace("run.T = 10", "run.T = 0"), "run.T"),
            (MINIMAL.replace("\"ce3\"", "\"ce9\""), "oracle.kind"),
            (format!("{MINIMAL}oracle.eps = 1.5\n"), "oracle.eps"),
            (format!("{MINIMAL}run.seeds = [1, 1]\n"), "run.seeds"),
            (format!("{MINIMAL}optimizer.colour = 1\n"), "optimizer.colour"),
            (MINIMAL.replace("\"sgd\"", "\"ec_sgd\"\noptimizer.compressor = \"top_k:5\""), "optimizer.compressor"),
            (format!("{MINIMAL}record.span = true\n"), "record.span"),
            (format!("{MINIMAL}run.x0 = [1.0]\n"), "run.x0"),
            (MINIMAL.replace("optimizer.gamma = 0.01\n", ""), "optimizer.gamma"),
        ];
        for (text, field) in cases {
            assert_eq!(parse_config(&text).unwrap_err().field, field, "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_config("oracle.kind = \"ce3\"\noptimizer.gamma = = 1\n").unwrap_err();
        assert!(err.message.contains("line 2"), "{}", err.message);
    }

    #[test]
    fn grid_matches_quoted_values() {
        let v = LrGrid::default().values();
        assert_eq!(v.len(), 9);
        let expected = [1.0e-5, 5.6e-5, 3.2e-4, 1.8e-3, 1.0e-2, 5.6e-2, 3.2e-1, 1.8, 1.0e1];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
        }
        assert!((v[1] - 5.62e-5).abs() < 1e-7 && (v[2] - 3.16e-4).abs() < 1e-6);
        assert_eq!(LrGrid { lo: 0.3, hi: 0.3, points: 1 }.values(), vec![0.3]);
    }

    #[test]
    fn seed_override() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.override_seeds("4, 5").unwrap();
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.override_seeds("x").unwrap_err().field, SEED_ENV);
        assert!(cfg.canonical().contains("run.seeds = [4, 5]"));
    }
}
