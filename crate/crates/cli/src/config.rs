//! Line-oriented configuration documents.
//!
//! ```text
//! # comment
//! seed = 7
//! output = runs/pl21
//!
//! [kernel]
//! name = power_law
//! a = 2
//! b = 1
//! ```
//!
//! Top-level keys precede the first `[section]` header. A key may appear
//! once per section. Values are numbers, booleans, bare words, paths or
//! comma-separated lists; `#` starts a comment anywhere on a line.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use meanfield::Exponent;

/// One problem found in a configuration document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    pub fn at(line: usize, msg: impl Into<String>) -> Self {
        ConfigError { line: Some(line), msg: msg.into() }
    }

    pub fn general(msg: impl Into<String>) -> Self {
        ConfigError { line: None, msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.msg),
            None => write!(f, "{}", self.msg),
        }
    }
}

/// Every problem found, in document order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn single(e: ConfigError) -> Self {
        ConfigErrors(vec![e])
    }
}

/// A raw entry before typing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// `section.key → entry`; top-level keys have an empty section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub entries: BTreeMap<(String, String), Entry>,
    /// First header line of each section.
    pub sections: BTreeMap<String, usize>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let mut doc = Document::default();
        let mut errors = Vec::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if is_ident(name) => {
                        section = name.to_string();
                        doc.sections.entry(section.clone()).or_insert(line);
                    }
                    _ => errors.push(ConfigError::at(line, format!("malformed section header '{body}'"))),
                }
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                errors.push(ConfigError::at(line, format!("expected 'key = value', found '{body}'")));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !is_ident(key) {
                errors.push(ConfigError::at(line, format!("malformed key '{key}'")));
                continue;
            }
            if value.is_empty() {
                errors.push(ConfigError::at(line, format!("key '{}' has no value", qualified(&section, key))));
                continue;
            }
            let slot = (section.clone(), key.to_string());
            if let Some(first) = doc.entries.get(&slot) {
                errors.push(ConfigError::at(
                    line,
                    format!("duplicate key '{}' (first set on line {}, again on line {line})", qualified(&section, key), first.line),
                ));
                continue;
            }
            doc.entries.insert(slot, Entry { value: value.to_string(), line });
        }
        if errors.is_empty() {
            Ok(doc)
        } else {
            Err(ConfigErrors(errors))
        }
    }
}

pub fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Value types a key can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Word,
    Floats,
    Ints,
    Exponent,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Float => "a number",
            Kind::Int => "a nonnegative integer",
            Kind::Bool => "true or false",
            Kind::Word => "a word or path",
            Kind::Floats => "a comma-separated list of numbers",
            Kind::Ints => "a comma-separated list of nonnegative integers",
            Kind::Exponent => "an exponent in (1, inf]",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Bool(bool),
    Word(String),
    Floats(Vec<f64>),
    Ints(Vec<u64>),
    Exponent(Exponent),
}

fn list<T: FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

impl Value {
    pub fn parse(kind: Kind, s: &str) -> Option<Value> {
        Some(match kind {
            Kind::Float => Value::Float(s.parse().ok().filter(|x: &f64| x.is_finite())?),
            Kind::Int => Value::Int(s.parse().ok()?),
            Kind::Bool => Value::Bool(s.parse().ok()?),
            Kind::Word => {
                if s.contains(char::is_whitespace) {
                    return None;
                }
                Value::Word(s.to_string())
            }
            Kind::Floats => Value::Floats(list::<f64>(s).filter(|v| v.iter().all(|x| x.is_finite()))?),
            Kind::Ints => Value::Ints(list(s)?),
            Kind::Exponent => Value::Exponent(s.parse().ok()?),
        })
    }
}

/// A key accepted by a subcommand.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    pub kind: Kind,
    pub required: bool,
}

const fn req(section: &'static str, key: &'static str, kind: Kind) -> KeySpec {
    KeySpec { section, key, kind, required: true }
}

const fn opt(section: &'static str, key: &'static str, kind: Kind) -> KeySpec {
    KeySpec { section, key, kind, required: false }
}

/// The eight subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Simulate,
    Distance,
    CheckKernel,
    Converge,
    Chaos,
    Mindist,
    Blobnorm,
    Cauchy,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Distance,
        Command::CheckKernel,
        Command::Converge,
        Command::Chaos,
        Command::Mindist,
        Command::Blobnorm,
        Command::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Distance => "distance",
            Command::CheckKernel => "check-kernel",
            Command::Converge => "converge",
            Command::Chaos => "chaos",
            Command::Mindist => "mindist",
            Command::Blobnorm => "blobnorm",
            Command::Cauchy => "cauchy",
        }
    }

    /// Section holding the subcommand's own keys.
    pub fn section(self) -> &'static str {
        match self {
            Command::CheckKernel => "check",
            other => other.name(),
        }
    }

    pub fn schema(self) -> Vec<KeySpec> {
        let mut v = TOP.to_vec();
        let s = self.section();
        let own: Vec<KeySpec> = match self {
            Command::Simulate => {
                v.extend(KERNEL.iter().map(|k| KeySpec { required: false, ..*k }));
                v.extend(DENSITY.iter().map(|k| KeySpec { required: false, ..*k }));
                v.extend(INTEGRATOR);
                vec![
                    opt(s, "model", Kind::Word),
                    opt(s, "n", Kind::Int),
                    opt(s, "init", Kind::Word),
                    opt(s, "input", Kind::Word),
                    opt(s, "epsilon", Kind::Float),
                    opt(s, "alpha_sp", Kind::Float),
                    opt(s, "beta_fr", Kind::Float),
                    opt(s, "gamma_cs", Kind::Float),
                    opt(s, "velocity_spread", Kind::Float),
                    opt(s, "sample_every", Kind::Int),
                ]
            }
            Command::Distance => vec![req(s, "mu", Kind::Word), req(s, "nu", Kind::Word), opt(s, "max_pairs", Kind::Int)],
            Command::CheckKernel => {
                v.extend(KERNEL);
                vec![
                    req(s, "d", Kind::Int),
                    req(s, "p", Kind::Exponent),
                    opt(s, "regime", Kind::Word),
                    opt(s, "radii", Kind::Floats),
                ]
            }
            Command::Converge => {
                v.extend(KERNEL);
                v.extend(DENSITY);
                v.extend(INTEGRATOR);
                vec![
                    req(s, "n", Kind::Ints),
                    opt(s, "p", Kind::Exponent),
                    opt(s, "sample_every", Kind::Int),
                    opt(s, "reference", Kind::Word),
                    opt(s, "reference_n", Kind::Int),
                    opt(s, "epsilon_reg", Kind::Float),
                    opt(s, "norm_resolution", Kind::Int),
                    opt(s, "max_pairs", Kind::Int),
                ]
            }
            Command::Chaos => {
                v.extend(KERNEL);
                v.extend(DENSITY);
                v.extend(INTEGRATOR.iter().map(|k| KeySpec { required: false, ..*k }));
                vec![
                    req(s, "n", Kind::Ints),
                    req(s, "trials", Kind::Int),
                    req(s, "gamma", Kind::Float),
                    opt(s, "p", Kind::Exponent),
                    opt(s, "r", Kind::Float),
                    opt(s, "c1", Kind::Float),
                    opt(s, "reference_n", Kind::Int),
                    opt(s, "quantile", Kind::Float),
                    opt(s, "blob_trials", Kind::Int),
                    opt(s, "norm_resolution", Kind::Int),
                    opt(s, "sample_every", Kind::Int),
                    opt(s, "max_pairs", Kind::Int),
                    opt(s, "max_c2_spread", Kind::Float),
                ]
            }
            Command::Mindist => {
                v.extend(DENSITY);
                vec![req(s, "n", Kind::Int), req(s, "l", Kind::Float), req(s, "trials", Kind::Int), opt(s, "p", Kind::Exponent)]
            }
            Command::Blobnorm => {
                v.extend(DENSITY);
                vec![
                    req(s, "n", Kind::Ints),
                    req(s, "gamma", Kind::Float),
                    req(s, "trials", Kind::Int),
                    opt(s, "p", Kind::Exponent),
                    opt(s, "resolution", Kind::Int),
                ]
            }
            Command::Cauchy => {
                v.extend(KERNEL);
                v.extend(DENSITY);
                v.extend(INTEGRATOR);
                vec![
                    req(s, "n", Kind::Int),
                    req(s, "eps", Kind::Float),
                    req(s, "eps_prime", Kind::Float),
                    opt(s, "sample_every", Kind::Int),
                    opt(s, "max_pairs", Kind::Int),
                    opt(s, "max_ratio", Kind::Float),
                ]
            }
        };
        v.extend(own);
        v
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown subcommand '{s}'"))
    }
}

const TOP: [KeySpec; 3] = [opt("", "subcommand", Kind::Word), opt("", "seed", Kind::Int), opt("", "output", Kind::Word)];

const KERNEL: [KeySpec; 9] = [
    req("kernel", "name", Kind::Word),
    opt("kernel", "a", Kind::Float),
    opt("kernel", "b", Kind::Float),
    opt("kernel", "k", Kind::Float),
    opt("kernel", "c_a", Kind::Float),
    opt("kernel", "l_a", Kind::Float),
    opt("kernel", "c_r", Kind::Float),
    opt("kernel", "l_r", Kind::Float),
    opt("kernel", "r_cut", Kind::Float),
];

const DENSITY: [KeySpec; 8] = [
    req("density", "name", Kind::Word),
    opt("density", "lo", Kind::Floats),
    opt("density", "hi", Kind::Floats),
    opt("density", "center", Kind::Floats),
    opt("density", "radius", Kind::Float),
    opt("density", "exponent", Kind::Float),
    opt("density", "sigma", Kind::Float),
    opt("density", "support", Kind::Float),
];

const INTEGRATOR: [KeySpec; 5] = [
    opt("integrator", "scheme", Kind::Word),
    req("integrator", "dt", Kind::Float),
    req("integrator", "t_final", Kind::Float),
    opt("integrator", "collision_stop_threshold", Kind::Float),
    opt("integrator", "continue_after_collision", Kind::Bool),
];

/// Typed parameters of a document checked against one subcommand's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: BTreeMap<(String, String), (Value, usize)>,
    sections: BTreeMap<String, usize>,
    /// Keys present in the document whose value failed to type.
    rejected: Vec<(String, String)>,
}

impl Params {
    /// Type every entry, rejecting unknown keys and reporting missing
    /// required ones.
    pub fn check(doc: &Document, cmd: Command) -> Result<Params, ConfigErrors> {
        let (params, errors) = Params::check_all(doc, cmd);
        if errors.is_empty() {
            Ok(params)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Like [`Params::check`] but keeps the usable keys alongside the errors,
    /// so later validation can still report its own problems.
    pub fn check_all(doc: &Document, cmd: Command) -> (Params, Vec<ConfigError>) {
        let schema = cmd.schema();
        let mut rejected = Vec::new();
        let mut errors = Vec::new();
        let mut values = BTreeMap::new();
        for ((section, key), e) in &doc.entries {
            let Some(spec) = schema.iter().find(|s| s.section == section && s.key == key) else {
                errors.push(ConfigError::at(e.line, format!("unknown key '{}' for {cmd}", qualified(section, key))));
                continue;
            };
            match Value::parse(spec.kind, &e.value) {
                Some(v) => {
                    values.insert((section.clone(), key.clone()), (v, e.line));
                }
                None => {
                    rejected.push((section.clone(), key.clone()));
                    errors.push(ConfigError::at(
                        e.line,
                        format!("key '{}' expects {}, got '{}'", qualified(section, key), spec.kind.name(), e.value),
                    ))
                }
            }
        }
        for spec in schema.iter().filter(|s| s.required) {
            if !doc.entries.contains_key(&(spec.section.to_string(), spec.key.to_string())) {
                errors.push(ConfigError::general(format!("missing required key '{}' for {cmd}", qualified(spec.section, spec.key))));
            }
        }
        for (name, line) in &doc.sections {
            if !schema.iter().any(|s| s.section == name) {
                errors.push(ConfigError::at(*line, format!("unknown section [{name}] for {cmd}")));
            }
        }
        errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        (Params { values, sections: doc.sections.clone(), rejected }, errors)
    }

    /// The key was given but its value did not type; its error is already
    /// reported.
    pub fn rejected(&self, section: &str, key: &str) -> bool {
        self.rejected.iter().any(|(s, k)| s == section && k == key)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Value> {
        self.values.get(&(section.to_string(), key.to_string())).map(|(v, _)| v)
    }

    pub fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.values.get(&(section.to_string(), key.to_string())).map(|(_, l)| *l)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section) || self.values.keys().any(|(s, _)| s == section)
    }

    /// Line of a section header, or of its first key.
    pub fn section_line(&self, section: &str) -> Option<usize> {
        self.sections.get(section).copied()
    }

    pub fn float(&self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key)? {
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn int(&self, section: &str, key: &str) -> Option<u64> {
        match self.get(section, key)? {
            Value::Int(x) => Some(*x),
            _ => None,
        }
    }

    pub fn bool(&self, section: &str, key: &str) -> Option<bool> {
        match self.get(section, key)? {
            Value::Bool(x) => Some(*x),
            _ => None,
        }
    }

    pub fn word(&self, section: &str, key: &str) -> Option<&str> {
        match self.get(section, key)? {
            Value::Word(x) => Some(x),
            _ => None,
        }
    }

    pub fn floats(&self, section: &str, key: &str) -> Option<&[f64]> {
        match self.get(section, key)? {
            Value::Floats(x) => Some(x),
            _ => None,
        }
    }

    pub fn ints(&self, section: &str, key: &str) -> Option<&[u64]> {
        match self.get(section, key)? {
            Value::Ints(x) => Some(x),
            _ => None,
        }
    }

    pub fn exponent(&self, section: &str, key: &str) -> Option<Exponent> {
        match self.get(section, key)? {
            Value::Exponent(x) => Some(*x),
            _ => None,
        }
    }

    /// Numeric keys of a section other than `name`, for the kernel and
    /// density builders.
    pub fn numeric_keys(&self, section: &str) -> Vec<(&str, f64)> {
        self.values
            .iter()
            .filter(|((s, k), _)| s == section && k != "name")
            .filter_map(|((_, k), (v, _))| match v {
                Value::Float(x) => Some((k.as_str(), *x)),
                _ => None,
            })
            .collect()
    }
}
