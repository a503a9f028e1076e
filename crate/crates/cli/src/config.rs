//! Resolved run configurations. A value comes from the command line if
//! given, else from the subcommand's section of the `--config` file, else
//! from the default below. The resolved form is embedded in every output and
//! can be fed back as a config file.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::{DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tiltsens::simulation::{AlphaPolicy, ErrorFamily, GenerativeSpec};
use tiltsens::{Method, ScoreSpec, WeightFamily};

use crate::error::{CliError, Result};

pub const SECTIONS: [&str; 5] = ["analyze", "senval", "design-sens", "power", "validate"];

/// Γ values: one number, a comma list, or an inclusive range
/// `start:stop:step`. Serializes as the expanded list.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GammaList(pub Vec<f64>);

impl FromStr for GammaList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad gamma value `{t}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [single] => single.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?,
            [start, stop, step] => {
                let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
                if !(h > 0.0) || !(b >= a) {
                    return Err(format!("bad gamma range `{s}`"));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                // Round away the drift of repeated float steps.
                (0..=n).map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12).collect()
            }
            _ => return Err(format!("bad gamma specification `{s}`")),
        };
        if values.is_empty() {
            return Err("empty gamma list".into());
        }
        Ok(GammaList(values))
    }
}

impl<'de> Deserialize<'de> for GammaList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            One(f64),
            Many(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::One(x) => Ok(GammaList(vec![x])),
            Raw::Many(v) if !v.is_empty() => Ok(GammaList(v)),
            Raw::Many(_) => Err(serde::de::Error::custom("empty gamma list")),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Text(String),
    Int(u64),
    Float(f64),
}

impl Scalar {
    fn text(self) -> String {
        match self {
            Scalar::Text(s) => s,
            Scalar::Int(x) => x.to_string(),
            Scalar::Float(x) => x.to_string(),
        }
    }
}

/// Parses one value through `FromStr`, so config files accept the same
/// spellings as the command line.
fn parse_one<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s = Scalar::deserialize(d)?.text();
    s.parse().map_err(serde::de::Error::custom)
}

/// A single value, a comma-separated string, or an array.
fn parse_list<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(Scalar),
        Many(Vec<Scalar>),
    }
    let items = match Raw::deserialize(d)? {
        Raw::One(s) => vec![s],
        Raw::Many(v) => v,
    };
    let mut out = Vec::new();
    for item in items {
        for part in item.text().split(',') {
            out.push(part.trim().parse().map_err(serde::de::Error::custom)?);
        }
    }
    if out.is_empty() {
        return Err(serde::de::Error::custom("empty list"));
    }
    Ok(out)
}

fn parse_opt<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    match Option::<Scalar>::deserialize(d)? {
        None => Ok(None),
        Some(s) => s.text().parse().map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: Option<PathBuf>,
    #[serde(deserialize_with = "parse_one")]
    pub stat: ScoreSpec,
    #[serde(deserialize_with = "parse_list")]
    pub methods: Vec<Method>,
    pub gamma: GammaList,
    pub alpha: f64,
    #[serde(deserialize_with = "parse_opt")]
    pub weights: Option<WeightFamily>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            input: None,
            stat: ScoreSpec::DiffMeans,
            methods: vec![Method::Conventional, Method::Tilted(WeightFamily::Unit)],
            gamma: GammaList(vec![1.0]),
            alpha: 0.05,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenvalConfig {
    pub input: Option<PathBuf>,
    #[serde(deserialize_with = "parse_one")]
    pub stat: ScoreSpec,
    #[serde(deserialize_with = "parse_one")]
    pub method: Method,
    pub alpha: f64,
    pub gamma_max: f64,
    pub tol: f64,
    #[serde(deserialize_with = "parse_opt")]
    pub weights: Option<WeightFamily>,
}

impl Default for SenvalConfig {
    fn default() -> Self {
        SenvalConfig {
            input: None,
            stat: ScoreSpec::DiffMeans,
            method: Method::Conventional,
            alpha: 0.05,
            gamma_max: tiltsens::senval::DEFAULT_GAMMA_MAX,
            tol: tiltsens::senval::DEFAULT_TOL,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSensConfig {
    #[serde(deserialize_with = "parse_list")]
    pub family: Vec<ErrorFamily>,
    #[serde(deserialize_with = "parse_list")]
    pub controls: Vec<usize>,
    #[serde(deserialize_with = "parse_list")]
    pub stat: Vec<ScoreSpec>,
    pub ratio: f64,
    pub sets: usize,
    pub seed: u64,
    pub fixed_effect_sd: f64,
}

impl Default for DesignSensConfig {
    fn default() -> Self {
        DesignSensConfig {
            family: vec![ErrorFamily::Normal],
            controls: vec![2],
            stat: vec![ScoreSpec::DiffMeans],
            ratio: 0.5,
            sets: 100_000,
            seed: 7,
            fixed_effect_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    #[serde(deserialize_with = "parse_one")]
    pub family: ErrorFamily,
    pub controls: usize,
    #[serde(deserialize_with = "parse_one")]
    pub stat: ScoreSpec,
    pub ratio: f64,
    pub sets: usize,
    pub reps: usize,
    pub gamma: GammaList,
    #[serde(deserialize_with = "parse_list")]
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub seed: u64,
    #[serde(deserialize_with = "parse_opt")]
    pub weights: Option<WeightFamily>,
    pub fixed_effect_sd: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            family: ErrorFamily::Normal,
            controls: 3,
            stat: ScoreSpec::DiffMeans,
            ratio: 0.5,
            sets: 200,
            reps: 10_000,
            gamma: "1:6:0.1".parse().expect("default grid parses"),
            methods: vec![
                Method::Conventional,
                Method::Tilted(WeightFamily::Unit),
                Method::Adaptive(WeightFamily::Unit),
            ],
            alpha: 0.05,
            seed: 2024,
            weights: None,
            fixed_effect_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { seed: 1 }
    }
}

pub fn alpha_policy(sd: f64) -> AlphaPolicy {
    if sd == 0.0 {
        AlphaPolicy::Zero
    } else {
        AlphaPolicy::IidNormal { sd }
    }
}

impl PowerConfig {
    pub fn spec(&self) -> GenerativeSpec {
        GenerativeSpec {
            alpha_policy: alpha_policy(self.fixed_effect_sd),
            ..GenerativeSpec::new(self.family, self.ratio, self.controls, self.sets, self.seed)
        }
    }
}

/// Parsed `--config` file: a table of subcommand sections.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    sections: Map<String, Value>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let Value::Object(sections) = value else {
            return Err(CliError::Config("expected a table of sections".into()));
        };
        for (name, body) in &sections {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown section `[{name}]`; expected one of {}",
                    SECTIONS.join(", ")
                )));
            }
            if !body.is_object() {
                return Err(CliError::Config(format!("`{name}` must be a section")));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn section(&self, name: &str) -> Map<String, Value> {
        match self.sections.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }
}

/// Appends `:family` to bare `tilted`/`adaptive` method names.
fn apply_weights(fields: &mut Map<String, Value>) {
    let Some(Value::String(w)) = fields.get("weights").cloned() else {
        return;
    };
    let fix = |v: &mut Value| {
        if let Value::String(s) = v {
            let parts: Vec<String> = s
                .split(',')
                .map(|m| {
                    let m = m.trim();
                    if matches!(m, "tilted" | "tilt" | "adaptive") {
                        format!("{m}:{w}")
                    } else {
                        m.to_owned()
                    }
                })
                .collect();
            *s = parts.join(",");
        }
    };
    for key in ["method", "methods"] {
        match fields.get_mut(key) {
            Some(Value::Array(items)) => items.iter_mut().for_each(fix),
            Some(v) => fix(v),
            None => {}
        }
    }
}

/// Overlays command-line values on the file section and fills defaults.
pub fn resolve<T: DeserializeOwned, A: Serialize>(file: &ConfigFile, section: &str, args: &A) -> Result<T> {
    let mut fields = file.section(section);
    // The short simulation names `J` and `I` are accepted in files.
    for (short, long) in [("J", "controls"), ("I", "sets")] {
        if let Some(v) = fields.remove(short) {
            fields.entry(long).or_insert(v);
        }
    }
    if let Value::Object(cli) = serde_json::to_value(args)? {
        fields.extend(cli);
    }
    apply_weights(&mut fields);
    serde_json::from_value(Value::Object(fields)).map_err(|e| CliError::Config(format!("[{section}] {e}")))
}
