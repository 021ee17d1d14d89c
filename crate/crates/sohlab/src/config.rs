//! Key-value run configuration: `key = value` lines grouped by
//! `[section]` headers, parsed against a per-command schema. Parsing
//! collects every error (with line numbers) instead of stopping at the
//! first, and rejects unknown or duplicate keys. A parsed configuration
//! serializes back to text that parses to an equal configuration.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Coeffs,
    Particles,
    Soh,
    RiemannCompare,
    MillCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Particles => "particles",
            Command::Soh => "soh",
            Command::RiemannCompare => "riemann-compare",
            Command::MillCheck => "mill-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "coeffs" => Some(Command::Coeffs),
            "particles" => Some(Command::Particles),
            "soh" => Some(Command::Soh),
            "riemann-compare" => Some(Command::RiemannCompare),
            "mill-check" => Some(Command::MillCheck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Text(String),
    RealList(Vec<f64>),
}

impl Value {
    pub fn as_real(&self) -> f64 {
        match self {
            Value::Real(v) => *v,
            Value::Int(v) => *v as f64,
            _ => panic!("schema guarantees a real value"),
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            Value::Int(v) => *v,
            _ => panic!("schema guarantees an integer value"),
        }
    }

    pub fn as_text(&self) -> &str {
        match self {
            Value::Text(s) => s,
            _ => panic!("schema guarantees a text value"),
        }
    }

    pub fn as_real_list(&self) -> &[f64] {
        match self {
            Value::RealList(v) => v,
            _ => panic!("schema guarantees a list value"),
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Real(v) => format!("{v:?}"),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
            Value::RealList(v) => {
                v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
            }
        }
    }
}

/// One configuration problem, tagged with the source line when known.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Real { min: Option<f64>, max: Option<f64> },
    Int { min: Option<i64>, max: Option<i64> },
    Choice(&'static [&'static str]),
    /// Comma-separated reals, each bounded below.
    RealList { min: Option<f64> },
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    /// `None` marks a required key.
    default: Option<&'static str>,
}

const fn req(name: &'static str, kind: Kind) -> KeySpec {
    KeySpec { name, kind, default: None }
}

const fn opt(name: &'static str, kind: Kind, default: &'static str) -> KeySpec {
    KeySpec { name, kind, default: Some(default) }
}

const POSITIVE: Kind = Kind::Real { min: Some(f64::MIN_POSITIVE), max: None };
const NONNEG: Kind = Kind::Real { min: Some(0.0), max: None };
const ANY_REAL: Kind = Kind::Real { min: None, max: None };

fn schema(command: Command) -> Vec<KeySpec> {
    let kernel_keys = [
        opt("eta0", NONNEG, "0.0"),
        opt("kernel", Kind::Choice(&["indicator", "gaussian"]), "indicator"),
        opt("kernel_radius", POSITIVE, "1.0"),
    ];
    let riemann_keys = [
        opt("riemann.rho_left", POSITIVE, "1.0"),
        opt("riemann.u_left_angle", ANY_REAL, "0.0"),
        opt("riemann.rho_right", POSITIVE, "1.0"),
        opt("riemann.u_right_angle", ANY_REAL, "0.0"),
        opt("riemann.interface", Kind::Real { min: Some(0.0), max: Some(1.0) }, "0.5"),
    ];
    match command {
        Command::Coeffs => vec![
            req("d", Kind::RealList { min: Some(f64::MIN_POSITIVE) }),
            opt("m", Kind::Int { min: Some(2), max: Some(3) }, "2"),
            opt("n_theta", Kind::Int { min: Some(64), max: None }, "2048"),
            kernel_keys[0].clone_spec(),
            kernel_keys[1].clone_spec(),
            kernel_keys[2].clone_spec(),
        ],
        Command::Particles => vec![
            opt("model", Kind::Choice(&["discrete", "continuous"]), "continuous"),
            req("n", Kind::Int { min: Some(1), max: None }),
            opt("m", Kind::Int { min: Some(2), max: Some(3) }, "2"),
            opt("c", POSITIVE, "1.0"),
            opt("nu", POSITIVE, "1.0"),
            opt("noise_d", NONNEG, "0.5"),
            opt("d_angle", Kind::Real { min: Some(0.0), max: Some(std::f64::consts::PI) }, "1.0"),
            req("r", POSITIVE),
            req("dt", POSITIVE),
            req("t_end", NONNEG),
            req("box_x", POSITIVE),
            opt("box_y", POSITIVE, "1.0"),
            opt("box_z", POSITIVE, "1.0"),
            opt("snapshot_every", NONNEG, "0.0"),
            opt("init_angle", ANY_REAL, "0.0"),
        ],
        Command::Soh => {
            let mut v = vec![
                req("d", POSITIVE),
                opt("n_theta", Kind::Int { min: Some(64), max: None }, "2048"),
                opt("cfl", Kind::Real { min: Some(1e-6), max: Some(1.0) }, "0.5"),
                req("cells_x", Kind::Int { min: Some(4), max: None }),
                opt("cells_y", Kind::Int { min: Some(0), max: None }, "0"),
                req("box_x", POSITIVE),
                opt("box_y", POSITIVE, "1.0"),
                req("t_end", NONNEG),
                opt("snapshot_every", NONNEG, "0.0"),
                opt("init", Kind::Choice(&["uniform", "riemann", "mill"]), "uniform"),
                opt("rho0", POSITIVE, "1.0"),
                opt("init_angle", ANY_REAL, "0.0"),
                opt("mill.r0", POSITIVE, "1.0"),
            ];
            v.extend(kernel_keys.iter().map(KeySpec::clone_spec));
            v.extend(riemann_keys.iter().map(KeySpec::clone_spec));
            v
        }
        Command::RiemannCompare => {
            let mut v = vec![
                req("d", POSITIVE),
                opt("nu", POSITIVE, "5.0"),
                opt("c", POSITIVE, "1.0"),
                req("n", Kind::Int { min: Some(1), max: None }),
                req("r", POSITIVE),
                req("dt", POSITIVE),
                opt("cells", Kind::Int { min: Some(4), max: None }, "200"),
                req("box_x", POSITIVE),
                opt("box_y", POSITIVE, "1.0"),
                req("t_end", NONNEG),
                opt("n_theta", Kind::Int { min: Some(64), max: None }, "2048"),
                opt("min_count", Kind::Int { min: Some(0), max: None }, "20"),
                opt("compare_every", NONNEG, "0.0"),
                opt("cfl", Kind::Real { min: Some(1e-6), max: Some(1.0) }, "0.5"),
            ];
            v.extend(kernel_keys.iter().map(KeySpec::clone_spec));
            v.extend(riemann_keys.iter().map(KeySpec::clone_spec));
            v
        }
        Command::MillCheck => vec![
            req("d", POSITIVE),
            opt("n_theta", Kind::Int { min: Some(64), max: None }, "2048"),
            opt("rho0", POSITIVE, "1.0"),
            opt("r0", POSITIVE, "1.0"),
            opt("r_inner", POSITIVE, "0.5"),
            opt("r_outer", POSITIVE, "2.0"),
            opt("h", POSITIVE, "0.02"),
            opt("refinements", Kind::Int { min: Some(1), max: Some(8) }, "3"),
            opt("n_samples", Kind::Int { min: Some(4), max: None }, "32"),
        ],
    }
}

impl KeySpec {
    const fn clone_spec(&self) -> KeySpec {
        KeySpec { name: self.name, kind: self.kind, default: self.default }
    }
}

/// A fully validated run: command, typed parameters, output directory,
/// seed, and determinism flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Value>,
    pub output_dir: String,
    pub seed: u64,
    pub deterministic: bool,
}

impl RunConfig {
    pub fn real(&self, key: &str) -> f64 {
        self.params[key].as_real()
    }

    pub fn int(&self, key: &str) -> i64 {
        self.params[key].as_int()
    }

    pub fn text(&self, key: &str) -> &str {
        self.params[key].as_text()
    }

    pub fn real_list(&self, key: &str) -> &[f64] {
        self.params[key].as_real_list()
    }

    /// Renders the configuration as a document that `parse_config`
    /// accepts and maps back to an equal configuration.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command = {}\n", self.command.name()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("output_dir = {}\n", self.output_dir));
        out.push_str(&format!("deterministic = {}\n", self.deterministic));
        // Plain keys first, then grouped by section.
        let mut sections: BTreeMap<&str, Vec<(&str, &Value)>> = BTreeMap::new();
        for (k, v) in &self.params {
            match k.split_once('.') {
                None => out.push_str(&format!("{k} = {}\n", v.render())),
                Some((sec, rest)) => sections.entry(sec).or_default().push((rest, v)),
            }
        }
        for (sec, entries) in sections {
            out.push_str(&format!("\n[{sec}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {}\n", v.render()));
            }
        }
        out
    }
}

struct RawEntry {
    value: String,
    line: usize,
}

/// Parses the raw `section.key -> value` map, collecting syntax and
/// duplicate-key errors.
fn parse_raw(text: &str) -> (BTreeMap<String, RawEntry>, Vec<ConfigError>) {
    let mut entries: BTreeMap<String, RawEntry> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut section = String::new();
    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw_line.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw_line.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            match inner.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                _ => errors.push(err(Some(lineno), format!("malformed section header `{line}`"))),
            }
            continue;
        }
        match line.split_once('=') {
            None => {
                errors.push(err(Some(lineno), format!("expected `key = value`, got `{line}`")))
            }
            Some((k, v)) => {
                let key = k.trim();
                if key.is_empty() {
                    errors.push(err(Some(lineno), "empty key".to_string()));
                    continue;
                }
                let full = if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                };
                if let Some(prev) = entries.get(&full) {
                    errors.push(err(
                        Some(lineno),
                        format!("duplicate key `{full}` (first set on line {})", prev.line),
                    ));
                } else {
                    entries.insert(full, RawEntry { value: v.trim().to_string(), line: lineno });
                }
            }
        }
    }
    (entries, errors)
}

fn parse_value(
    spec: &KeySpec,
    raw: &str,
    line: Option<usize>,
    errors: &mut Vec<ConfigError>,
) -> Option<Value> {
    let name = spec.name;
    match spec.kind {
        Kind::Real { min, max } => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                if min.map_or(false, |lo| v < lo) {
                    let what = if min == Some(f64::MIN_POSITIVE) {
                        "must be positive".to_string()
                    } else {
                        format!("must be >= {}", min.unwrap())
                    };
                    errors.push(err(line, format!("key `{name}`: value {raw} {what}")));
                    None
                } else if max.map_or(false, |hi| v > hi) {
                    errors.push(err(
                        line,
                        format!("key `{name}`: value {raw} must be <= {}", max.unwrap()),
                    ));
                    None
                } else {
                    Some(Value::Real(v))
                }
            }
            _ => {
                errors.push(err(line, format!("key `{name}`: `{raw}` is not a real number")));
                None
            }
        },
        Kind::Int { min, max } => match raw.parse::<i64>() {
            Ok(v) => {
                if min.map_or(false, |lo| v < lo) || max.map_or(false, |hi| v > hi) {
                    errors.push(err(
                        line,
                        format!(
                            "key `{name}`: value {v} outside [{}, {}]",
                            min.map_or("-inf".into(), |x| x.to_string()),
                            max.map_or("inf".into(), |x: i64| x.to_string())
                        ),
                    ));
                    None
                } else {
                    Some(Value::Int(v))
                }
            }
            Err(_) => {
                errors.push(err(line, format!("key `{name}`: `{raw}` is not an integer")));
                None
            }
        },
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Some(Value::Text(raw.to_string()))
            } else {
                errors.push(err(
                    line,
                    format!("key `{name}`: `{raw}` is not one of {}", options.join("|")),
                ));
                None
            }
        }
        Kind::RealList { min } => {
            let mut vals = Vec::new();
            let mut ok = true;
            for part in raw.split(',') {
                match part.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() && min.map_or(true, |lo| v >= lo) => vals.push(v),
                    _ => {
                        errors.push(err(
                            line,
                            format!(
                                "key `{name}`: entry `{}` is not a valid positive real",
                                part.trim()
                            ),
                        ));
                        ok = false;
                    }
                }
            }
            if ok && vals.is_empty() {
                errors.push(err(line, format!("key `{name}`: empty list")));
                ok = false;
            }
            if ok {
                Some(Value::RealList(vals))
            } else {
                None
            }
        }
    }
}

/// Parses a configuration document plus `--set`-style overrides into a
/// typed [`RunConfig`]. All problems are reported together.
pub fn parse_config(
    text: &str,
    overrides: &[(String, String)],
) -> Result<RunConfig, Vec<ConfigError>> {
    let (mut entries, mut errors) = parse_raw(text);
    for (k, v) in overrides {
        entries.insert(k.clone(), RawEntry { value: v.clone(), line: 0 });
    }
    let line_of = |e: &RawEntry| if e.line == 0 { None } else { Some(e.line) };

    // Reserved top-level keys.
    let command = match entries.remove("command") {
        Some(e) => match Command::from_name(&e.value) {
            Some(c) => Some(c),
            None => {
                errors.push(err(
                    line_of(&e),
                    format!(
                        "key `command`: `{}` is not one of coeffs|particles|soh|riemann-compare|mill-check",
                        e.value
                    ),
                ));
                None
            }
        },
        None => {
            errors.push(err(None, "missing required key `command`".to_string()));
            None
        }
    };
    let seed = match entries.remove("seed") {
        Some(e) => match e.value.parse::<u64>() {
            Ok(s) => s,
            Err(_) => {
                errors.push(err(
                    line_of(&e),
                    format!("key `seed`: `{}` is not an unsigned integer", e.value),
                ));
                0
            }
        },
        None => 0,
    };
    let output_dir = entries.remove("output_dir").map(|e| e.value).unwrap_or_else(|| ".".into());
    let deterministic = match entries.remove("deterministic") {
        Some(e) => match e.value.parse::<bool>() {
            Ok(b) => b,
            Err(_) => {
                errors.push(err(
                    line_of(&e),
                    format!("key `deterministic`: `{}` is not true/false", e.value),
                ));
                false
            }
        },
        None => false,
    };

    let mut params = BTreeMap::new();
    if let Some(cmd) = command {
        for spec in schema(cmd) {
            match entries.remove(spec.name) {
                Some(e) => {
                    if let Some(v) = parse_value(&spec, &e.value, line_of(&e), &mut errors) {
                        params.insert(spec.name.to_string(), v);
                    }
                }
                None => match spec.default {
                    Some(d) => {
                        let v = parse_value(&spec, d, None, &mut errors)
                            .expect("schema defaults are valid");
                        params.insert(spec.name.to_string(), v);
                    }
                    None => errors.push(err(
                        None,
                        format!("missing required key `{}` for command {}", spec.name, cmd.name()),
                    )),
                },
            }
        }
        for (k, e) in &entries {
            errors.push(err(
                line_of(e),
                format!("unknown key `{k}` for command {}", cmd.name()),
            ));
        }
    }

    match command {
        Some(command) if errors.is_empty() => {
            Ok(RunConfig { command, params, output_dir, seed, deterministic })
        }
        _ => Err(errors),
    }
}
