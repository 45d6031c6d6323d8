//! Flat `key = value` scenario files.
//!
//! One entry per line with dotted section keys (`field.kind`,
//! `propagator.dt`). `#` starts a comment. Lists are comma separated.
//! Reals may also be written as `pi`, `k*pi`, `pi/k` or `k*pi/m`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use kvn_core::diagnostics::DEFAULT_PROBE_SEED;
use kvn_core::{Complex64, Domain, FieldKind, Point, Polynomial, PropagatorConfig, Scheme, VectorField};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: invalid key `{key}`")]
    BadKey { line: usize, key: String },
    #[error("line {line}: key `{key}` already set on line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: unknown key `{key}`")]
    Unknown { line: usize, key: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("line {line}: `{key}`: {message}")]
    Invalid { line: usize, key: String, message: String },
}

impl ConfigError {
    /// The key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Syntax { .. } => None,
            ConfigError::BadKey { key, .. }
            | ConfigError::Duplicate { key, .. }
            | ConfigError::Unknown { key, .. }
            | ConfigError::Missing { key }
            | ConfigError::Invalid { key, .. } => Some(key),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Missing { .. } => None,
            ConfigError::Syntax { line, .. }
            | ConfigError::BadKey { line, .. }
            | ConfigError::Duplicate { line, .. }
            | ConfigError::Unknown { line, .. }
            | ConfigError::Invalid { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Interval { lower: f64, upper: f64 },
    Rectangle { lower: Vec<f64>, upper: Vec<f64> },
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { lower, .. } => lower.len(),
            DomainSpec::Disk { .. } => 2,
        }
    }

    pub fn build(&self) -> Result<Domain, kvn_core::geometry::GeometryError> {
        match self {
            DomainSpec::Interval { lower, upper } => Domain::interval(*lower, *upper),
            DomainSpec::Rectangle { lower, upper } => Domain::rectangle(lower, upper),
            DomainSpec::Disk { center, radius } => Domain::disk(*center, *radius),
        }
    }
}

/// Initial wavefunction before normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// exp(−|x − c|²/(2σ²)) · exp(i k·x)
    Gaussian { center: Vec<f64>, sigma: f64, k: Vec<f64> },
    /// Product of tanh steps: ½(tanh((x−lo)/ε) − tanh((x−hi)/ε)) per axis.
    Indicator { lower: Vec<f64>, upper: Vec<f64>, width: f64 },
    Constant,
}

impl InitialSpec {
    pub fn evaluate(&self, x: &Point) -> Complex64 {
        match self {
            InitialSpec::Gaussian { center, sigma, k } => {
                let mut r2 = 0.0;
                let mut phase = 0.0;
                for (a, (c, kk)) in center.iter().zip(k).enumerate() {
                    r2 += (x[a] - c).powi(2);
                    phase += kk * x[a];
                }
                Complex64::from_polar((-r2 / (2.0 * sigma * sigma)).exp(), phase)
            }
            InitialSpec::Indicator { lower, upper, width } => {
                let v: f64 = lower
                    .iter()
                    .zip(upper)
                    .enumerate()
                    .map(|(a, (lo, hi))| 0.5 * (((x[a] - lo) / width).tanh() - ((x[a] - hi) / width).tanh()))
                    .product();
                Complex64::new(v, 0.0)
            }
            InitialSpec::Constant => Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub enabled: bool,
    /// Defaults to min(1e-3, dt/10).
    pub dt_ode: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergeSpec {
    /// dt = dt_factor · h; defaults to 0.5/‖F‖_∞.
    pub dt_factor: Option<f64>,
    pub ladder: Vec<usize>,
    pub order_min: Option<f64>,
    pub order_max: Option<f64>,
    pub born_order_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub resolution: Vec<usize>,
    pub field: FieldKind,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub propagator: PropagatorConfig,
    pub oracle: OracleSpec,
    pub semigroup_check: bool,
    pub output: PathBuf,
    pub seed: u64,
    pub classify_tol: f64,
    pub converge: ConvergeSpec,
}

struct Entry {
    line: usize,
    value: String,
}

/// Splits text into entries; rejects malformed lines and repeated keys.
fn entries(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        };
        let key = key.trim();
        let valid = !key.is_empty()
            && key.split('.').all(|part| {
                !part.is_empty() && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            });
        if !valid {
            return Err(ConfigError::BadKey {
                line,
                key: key.to_string(),
            });
        }
        if let Some(first) = out.get(key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first: first.line,
            });
        }
        out.insert(
            key.to_string(),
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Ok(out)
}

/// Parses a real, accepting multiples and fractions of `pi`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let bad = || format!("expected a real number, found `{s}`");
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim().parse::<f64>().map_err(|_| bad())?)),
        None => (s, None),
    };
    let value = if let Some(k) = num.strip_suffix("pi") {
        let k = k.trim().trim_end_matches('*').trim();
        let k = match k {
            "" => 1.0,
            "-" => -1.0,
            k => k.parse::<f64>().map_err(|_| bad())?,
        };
        k * std::f64::consts::PI
    } else if den.is_some() {
        return Err(bad());
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    let value = den.map_or(value, |d| value / d);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

struct Reader {
    map: BTreeMap<String, Entry>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key).map(|e| (e.line, e.value))
    }

    fn required(&mut self, key: &str) -> Result<(usize, String), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing { key: key.to_string() })
    }

    fn typed<T>(
        &mut self,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<(usize, T)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse(&v).map(|t| Some((line, t))).map_err(|message| ConfigError::Invalid {
                line,
                key: key.to_string(),
                message,
            }),
        }
    }

    fn real(&mut self, key: &str) -> Result<Option<(usize, f64)>, ConfigError> {
        self.typed(key, parse_real)
    }

    fn reals(&mut self, key: &str) -> Result<Option<(usize, Vec<f64>)>, ConfigError> {
        self.typed(key, |s| s.split(',').map(parse_real).collect())
    }

    fn unsigned(&mut self, key: &str) -> Result<Option<(usize, usize)>, ConfigError> {
        self.typed(key, |s| s.parse::<usize>().map_err(|_| format!("expected a non-negative integer, found `{s}`")))
    }

    fn unsigned_list(&mut self, key: &str) -> Result<Option<(usize, Vec<usize>)>, ConfigError> {
        self.typed(key, |s| {
            s.split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| format!("expected integers, found `{}`", p.trim())))
                .collect()
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(ConfigError::Unknown { line: e.line, key }),
            None => Ok(()),
        }
    }
}

fn invalid(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn require<T>(r: Result<Option<(usize, T)>, ConfigError>, key: &str) -> Result<(usize, T), ConfigError> {
    r?.ok_or_else(|| ConfigError::Missing { key: key.to_string() })
}

fn positive(v: Option<(usize, f64)>, key: &str) -> Result<Option<f64>, ConfigError> {
    match v {
        Some((line, x)) if x.is_nan() || x <= 0.0 => Err(invalid(line, key, format!("must be positive (got {x})"))),
        other => Ok(other.map(|(_, x)| x)),
    }
}

fn with_len(v: (usize, Vec<f64>), n: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
    if v.1.len() == n {
        Ok(v.1)
    } else {
        Err(invalid(v.0, key, format!("expected {n} values, found {}", v.1.len())))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut r = Reader { map: entries(text)? };

        let (name_line, name) = r.required("name")?;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(invalid(name_line, "name", "use letters, digits, `_` or `-`"));
        }

        let (kind_line, kind) = r.required("domain.kind")?;
        let domain = match kind.as_str() {
            "interval" => {
                let lower = require(r.real("domain.lower"), "domain.lower")?.1;
                let upper = require(r.real("domain.upper"), "domain.upper")?.1;
                DomainSpec::Interval { lower, upper }
            }
            "rectangle" => {
                let lower = require(r.reals("domain.lower"), "domain.lower")?;
                let n = lower.1.len();
                let upper = with_len(require(r.reals("domain.upper"), "domain.upper")?, n, "domain.upper")?;
                DomainSpec::Rectangle { lower: lower.1, upper }
            }
            "disk" => {
                let center = match r.reals("domain.center")? {
                    Some(c) => with_len(c, 2, "domain.center")?,
                    None => vec![0.0, 0.0],
                };
                let radius = r.real("domain.radius")?.map_or(1.0, |v| v.1);
                DomainSpec::Disk {
                    center: [center[0], center[1]],
                    radius,
                }
            }
            other => {
                return Err(invalid(
                    kind_line,
                    "domain.kind",
                    format!("unknown domain `{other}` (expected interval, rectangle or disk)"),
                ))
            }
        };
        domain.build().map_err(|e| invalid(kind_line, "domain.kind", e.to_string()))?;
        let dim = domain.dim();

        let (res_line, resolution) = require(r.unsigned_list("resolution"), "resolution")?;
        if resolution.len() != dim {
            return Err(invalid(
                res_line,
                "resolution",
                format!("expected {dim} entries for a {dim}-dimensional domain, found {}", resolution.len()),
            ));
        }
        if resolution.contains(&0) {
            return Err(invalid(res_line, "resolution", "entries must be positive"));
        }

        let field = parse_field(&mut r, dim)?;

        let (ik_line, ikind) = r.take("initial.kind").unwrap_or((0, "gaussian".to_string()));
        let initial = match ikind.as_str() {
            "gaussian" => {
                let center = with_len(require(r.reals("initial.center"), "initial.center")?, dim, "initial.center")?;
                let sigma = positive(Some(require(r.real("initial.sigma"), "initial.sigma")?), "initial.sigma")?
                    .expect("present");
                let k = match r.reals("initial.k")? {
                    Some(k) => with_len(k, dim, "initial.k")?,
                    None => vec![0.0; dim],
                };
                InitialSpec::Gaussian { center, sigma, k }
            }
            "indicator" => {
                let lower = with_len(require(r.reals("initial.lower"), "initial.lower")?, dim, "initial.lower")?;
                let upper = with_len(require(r.reals("initial.upper"), "initial.upper")?, dim, "initial.upper")?;
                let width = positive(Some(require(r.real("initial.width"), "initial.width")?), "initial.width")?
                    .expect("present");
                InitialSpec::Indicator { lower, upper, width }
            }
            "constant" => InitialSpec::Constant,
            other => {
                return Err(invalid(
                    ik_line,
                    "initial.kind",
                    format!("unknown initial condition `{other}` (expected gaussian, indicator or constant)"),
                ))
            }
        };

        let (t_line, t_end) = require(r.real("t_end"), "t_end")?;
        if t_end < 0.0 {
            return Err(invalid(t_line, "t_end", format!("must be non-negative (got {t_end})")));
        }
        let snapshots = match r.reals("snapshots")? {
            Some((line, s)) => {
                if let Some(t) = s.iter().find(|t| !(0.0..=t_end).contains(*t)) {
                    return Err(invalid(line, "snapshots", format!("time {t} lies outside [0, t_end]")));
                }
                s
            }
            None => vec![0.0, t_end],
        };

        let mut propagator = PropagatorConfig::default();
        if let Some((line, s)) = r.take("propagator.scheme") {
            propagator.scheme = s.parse::<Scheme>().map_err(|m| invalid(line, "propagator.scheme", m))?;
        }
        if let Some(dt) = positive(r.real("propagator.dt")?, "propagator.dt")? {
            propagator.dt = dt;
        }
        if let Some((line, tol)) = r.real("propagator.solver_tol")? {
            if !(tol > 0.0 && tol <= 1e-6) {
                return Err(invalid(line, "propagator.solver_tol", format!("must lie in (0, 1e-6] (got {tol})")));
            }
            propagator.linear_solver_tol = tol;
        }
        if let Some((_, n)) = r.unsigned("propagator.max_dense_dim")? {
            propagator.max_dense_dim = n;
        }
        if let Some((line, n)) = r.unsigned("propagator.max_iterations")? {
            if n == 0 {
                return Err(invalid(line, "propagator.max_iterations", "must be positive"));
            }
            propagator.max_iterations = n;
        }

        let enabled = match r.take("oracle.enabled") {
            None => true,
            Some((line, v)) => parse_bool(&v).map_err(|m| invalid(line, "oracle.enabled", m))?,
        };
        let oracle = OracleSpec {
            enabled,
            dt_ode: positive(r.real("oracle.dt_ode")?, "oracle.dt_ode")?,
        };
        let semigroup_check = match r.take("verify.semigroup") {
            None => true,
            Some((line, v)) => parse_bool(&v).map_err(|m| invalid(line, "verify.semigroup", m))?,
        };

        let output = r
            .take("output")
            .map_or_else(|| PathBuf::from("out").join(&name), |(_, v)| PathBuf::from(v));
        let seed = match r.take("seed") {
            None => DEFAULT_PROBE_SEED,
            Some((line, v)) => v
                .parse::<u64>()
                .map_err(|_| invalid(line, "seed", format!("expected an unsigned integer, found `{v}`")))?,
        };
        let classify_tol = match r.real("classify.tol")? {
            None => 1e-10,
            Some((line, t)) if t < 0.0 => return Err(invalid(line, "classify.tol", "must be non-negative")),
            Some((_, t)) => t,
        };

        let mut converge = ConvergeSpec {
            dt_factor: positive(r.real("converge.dt_factor")?, "converge.dt_factor")?,
            ..Default::default()
        };
        if let Some((line, ladder)) = r.unsigned_list("converge.ladder")? {
            validate_ladder(&ladder).map_err(|m| invalid(line, "converge.ladder", m))?;
            converge.ladder = ladder;
        }
        converge.order_min = r.real("converge.order_min")?.map(|v| v.1);
        converge.order_max = r.real("converge.order_max")?.map(|v| v.1);
        converge.born_order_min = r.real("converge.born_order_min")?.map(|v| v.1);

        r.finish()?;
        Ok(ScenarioConfig {
            name,
            domain,
            resolution,
            field,
            initial,
            t_end,
            snapshots,
            propagator,
            oracle,
            semigroup_check,
            output,
            seed,
            classify_tol,
            converge,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn build_domain(&self) -> Domain {
        self.domain.build().expect("validated on parse")
    }

    pub fn build_field(&self) -> VectorField {
        VectorField::new(self.field.clone(), self.dim()).expect("validated on parse")
    }

    /// Canonical text form; every key is written, defaults included.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let ints = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "name = {}", self.name);
        match &self.domain {
            DomainSpec::Interval { lower, upper } => {
                let _ = writeln!(s, "domain.kind = interval\ndomain.lower = {lower:?}\ndomain.upper = {upper:?}");
            }
            DomainSpec::Rectangle { lower, upper } => {
                let _ = writeln!(
                    s,
                    "domain.kind = rectangle\ndomain.lower = {}\ndomain.upper = {}",
                    list(lower),
                    list(upper)
                );
            }
            DomainSpec::Disk { center, radius } => {
                let _ = writeln!(s, "domain.kind = disk\ndomain.center = {}\ndomain.radius = {radius:?}", list(center));
            }
        }
        let _ = writeln!(s, "resolution = {}", ints(&self.resolution));
        write_field(&mut s, &self.field);
        match &self.initial {
            InitialSpec::Gaussian { center, sigma, k } => {
                let _ = writeln!(
                    s,
                    "initial.kind = gaussian\ninitial.center = {}\ninitial.sigma = {sigma:?}\ninitial.k = {}",
                    list(center),
                    list(k)
                );
            }
            InitialSpec::Indicator { lower, upper, width } => {
                let _ = writeln!(
                    s,
                    "initial.kind = indicator\ninitial.lower = {}\ninitial.upper = {}\ninitial.width = {width:?}",
                    list(lower),
                    list(upper)
                );
            }
            InitialSpec::Constant => {
                let _ = writeln!(s, "initial.kind = constant");
            }
        }
        let _ = writeln!(s, "t_end = {:?}", self.t_end);
        let _ = writeln!(s, "snapshots = {}", list(&self.snapshots));
        let p = &self.propagator;
        let _ = writeln!(s, "propagator.scheme = {}", p.scheme.as_str());
        let _ = writeln!(s, "propagator.dt = {:?}", p.dt);
        let _ = writeln!(s, "propagator.solver_tol = {:?}", p.linear_solver_tol);
        let _ = writeln!(s, "propagator.max_dense_dim = {}", p.max_dense_dim);
        let _ = writeln!(s, "propagator.max_iterations = {}", p.max_iterations);
        let _ = writeln!(s, "oracle.enabled = {}", self.oracle.enabled);
        if let Some(dt) = self.oracle.dt_ode {
            let _ = writeln!(s, "oracle.dt_ode = {dt:?}");
        }
        let _ = writeln!(s, "verify.semigroup = {}", self.semigroup_check);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "classify.tol = {:?}", self.classify_tol);
        let c = &self.converge;
        if let Some(f) = c.dt_factor {
            let _ = writeln!(s, "converge.dt_factor = {f:?}");
        }
        if !c.ladder.is_empty() {
            let _ = writeln!(s, "converge.ladder = {}", ints(&c.ladder));
        }
        for (key, v) in [
            ("converge.order_min", c.order_min),
            ("converge.order_max", c.order_max),
            ("converge.born_order_min", c.born_order_min),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{key} = {v:?}");
            }
        }
        s
    }
}

/// A convergence ladder needs at least two strictly increasing rungs.
pub fn validate_ladder(ladder: &[usize]) -> Result<(), String> {
    if ladder.len() < 2 {
        return Err(format!("a ladder needs at least two rungs (got {})", ladder.len()));
    }
    if ladder[0] == 0 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err("rungs must be positive and strictly increasing".to_string());
    }
    Ok(())
}

pub fn parse_ladder(s: &str) -> Result<Vec<usize>, String> {
    let ladder = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("invalid rung `{}`", p.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    validate_ladder(&ladder)?;
    Ok(ladder)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, found `{other}`")),
    }
}

fn parse_field(r: &mut Reader, dim: usize) -> Result<FieldKind, ConfigError> {
    let (line, kind) = r.required("field.kind")?;
    let omega = |r: &mut Reader| Ok::<_, ConfigError>(r.real("field.omega")?.map_or(1.0, |v| v.1));
    let kind = match kind.as_str() {
        "zero" => FieldKind::Zero,
        "constant" => FieldKind::Constant(with_len(require(r.reals("field.vector"), "field.vector")?, dim, "field.vector")?),
        "linear" => FieldKind::Linear(with_len(
            require(r.reals("field.matrix"), "field.matrix")?,
            dim * dim,
            "field.matrix",
        )?),
        "rotation" => FieldKind::Rotation { omega: omega(r)? },
        "logistic1d" => FieldKind::Logistic1d {
            rate: r.real("field.rate")?.map_or(1.0, |v| v.1),
        },
        "double_well" => FieldKind::DoubleWellGradient,
        "harmonic" => FieldKind::HarmonicHamiltonian { omega: omega(r)? },
        "custom_polynomial" => {
            let mut components = Vec::with_capacity(dim);
            for k in 0..dim {
                let key = format!("field.f{k}");
                components.push(require(r.typed(&key, |s| s.parse::<Polynomial>().map_err(|e| e.to_string())), &key)?.1);
            }
            let divergence =
                require(r.typed("field.div", |s| s.parse::<Polynomial>().map_err(|e| e.to_string())), "field.div")?.1;
            FieldKind::CustomPolynomial { components, divergence }
        }
        other => {
            return Err(invalid(
                line,
                "field.kind",
                format!(
                    "unknown field `{other}` (expected zero, constant, linear, rotation, logistic1d, double_well, \
                     harmonic or custom_polynomial)"
                ),
            ))
        }
    };
    VectorField::new(kind.clone(), dim).map_err(|e| invalid(line, "field.kind", e.to_string()))?;
    Ok(kind)
}

fn write_field(s: &mut String, field: &FieldKind) {
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let _ = match field {
        FieldKind::Zero => writeln!(s, "field.kind = zero"),
        FieldKind::Constant(c) => writeln!(s, "field.kind = constant\nfield.vector = {}", list(c)),
        FieldKind::Linear(a) => writeln!(s, "field.kind = linear\nfield.matrix = {}", list(a)),
        FieldKind::Rotation { omega } => writeln!(s, "field.kind = rotation\nfield.omega = {omega:?}"),
        FieldKind::Logistic1d { rate } => writeln!(s, "field.kind = logistic1d\nfield.rate = {rate:?}"),
        FieldKind::DoubleWellGradient => writeln!(s, "field.kind = double_well"),
        FieldKind::HarmonicHamiltonian { omega } => writeln!(s, "field.kind = harmonic\nfield.omega = {omega:?}"),
        FieldKind::CustomPolynomial { components, divergence } => {
            let _ = writeln!(s, "field.kind = custom_polynomial");
            for (k, c) in components.iter().enumerate() {
                let _ = writeln!(s, "field.f{k} = {c}");
            }
            writeln!(s, "field.div = {divergence}")
        }
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
name = t
domain.kind = interval
domain.lower = 0
domain.upper = 1
resolution = 16
field.kind = logistic1d
initial.center = 0.5
initial.sigma = 0.1
t_end = 0.5
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.snapshots, vec![0.0, 0.5]);
        assert_eq!(c.propagator, PropagatorConfig::default());
        assert_eq!(c.output, PathBuf::from("out/t"));
        assert_eq!(c.field, FieldKind::Logistic1d { rate: 1.0 });
        assert!(c.oracle.enabled);
        assert_eq!(ScenarioConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_whitespace() {
        let text = format!("# header\n\n{}  # trailing\nseed = 7 # probe seed\n", MINIMAL.replace("t_end = 0.5", "t_end = pi/4"));
        let c = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.t_end, std::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn pi_forms() {
        use std::f64::consts::PI;
        assert_eq!(parse_real("pi").unwrap(), PI);
        assert_eq!(parse_real("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_real("-pi").unwrap(), -PI);
        assert_eq!(parse_real("3pi/2").unwrap(), 1.5 * PI);
        assert_eq!(parse_real("1e-3").unwrap(), 1e-3);
        assert!(parse_real("1/2").is_err());
        assert!(parse_real("inf").is_err());
        assert!(parse_real("x").is_err());
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = ScenarioConfig::parse(&MINIMAL.replace("t_end = 0.5", "t_end = -1")).unwrap_err();
        assert_eq!((e.key(), e.line()), (Some("t_end"), Some(9)));
        let e = ScenarioConfig::parse(&format!("{MINIMAL}propagator.dt = fast\n")).unwrap_err();
        assert_eq!((e.key(), e.line()), (Some("propagator.dt"), Some(10)));
        assert!(e.to_string().contains("line 10") && e.to_string().contains("propagator.dt"));
        let e = ScenarioConfig::parse(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Unknown { line: 10, .. }));
        let e = ScenarioConfig::parse(&format!("{MINIMAL}t_end = 2\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Duplicate { line: 10, first: 9, .. }));
        let e = ScenarioConfig::parse(&MINIMAL.replace("t_end = 0.5\n", "")).unwrap_err();
        assert_eq!(e, ConfigError::Missing { key: "t_end".into() });
        let e = ScenarioConfig::parse("name = a\njunk\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }));
        let e = ScenarioConfig::parse("Name = a\n").unwrap_err();
        assert!(matches!(e, ConfigError::BadKey { line: 1, .. }));
    }

    #[test]
    fn validation() {
        let cases = [
            ("resolution = 16", "resolution = 16, 16", "resolution"),
            ("domain.upper = 1", "domain.upper = -1", "domain.kind"),
            ("t_end = 0.5", "t_end = 0.5\nsnapshots = 0, 0.7", "snapshots"),
            ("t_end = 0.5", "t_end = 0.5\npropagator.solver_tol = 1e-3", "propagator.solver_tol"),
            ("t_end = 0.5", "t_end = 0.5\npropagator.scheme = euler", "propagator.scheme"),
            ("t_end = 0.5", "t_end = 0.5\nconverge.ladder = 64", "converge.ladder"),
            ("initial.sigma = 0.1", "initial.sigma = 0", "initial.sigma"),
        ];
        for (from, to, key) in cases {
            let e = ScenarioConfig::parse(&MINIMAL.replace(from, to)).unwrap_err();
            assert_eq!(e.key(), Some(key), "{e}");
        }
    }

    #[test]
    fn every_field_kind_round_trips() {
        let fields = [
            ("field.kind = zero", 1),
            ("field.kind = constant\nfield.vector = 0.5", 1),
            ("field.kind = linear\nfield.matrix = -1", 1),
            ("field.kind = double_well", 1),
            ("field.kind = custom_polynomial\nfield.f0 = 1:1; -1:2\nfield.div = 1:0; -2:1", 1),
        ];
        for (f, _) in fields {
            let text = MINIMAL.replace("field.kind = logistic1d", f);
            let c = ScenarioConfig::parse(&text).unwrap_or_else(|e| panic!("{f}: {e}"));
            assert_eq!(ScenarioConfig::parse(&c.to_text()).unwrap(), c, "{f}");
        }
        let disk = "name = d\ndomain.kind = disk\nresolution = 8, 8\nfield.kind = harmonic\nfield.omega = 2\n\
                    initial.kind = indicator\ninitial.lower = -0.2, -0.2\ninitial.upper = 0.2, 0.2\n\
                    initial.width = 0.05\nt_end = 2pi\noracle.enabled = false\n";
        let c = ScenarioConfig::parse(disk).unwrap();
        assert_eq!(ScenarioConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn initial_conditions() {
        let g = InitialSpec::Gaussian {
            center: vec![0.0, 0.0],
            sigma: 1.0,
            k: vec![1.0, 0.0],
        };
        let z = g.evaluate(&Point::xy(1.0, 0.0));
        assert!((z.norm() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((z.arg() - 1.0).abs() < 1e-15);
        let ind = InitialSpec::Indicator {
            lower: vec![-1.0],
            upper: vec![1.0],
            width: 1e-3,
        };
        assert!((ind.evaluate(&Point::x(0.0)).re - 1.0).abs() < 1e-12);
        assert!(ind.evaluate(&Point::x(2.0)).re.abs() < 1e-12);
    }
}
