//! Building-system models: the HVAC loop and the brickwork solar collector,
//! user-supplied matrices from config, and the binding of model inputs to
//! climate columns or constants.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::climate::{ClimateSeries, VarCode};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::perf::{PerformanceIndicator, Statistic};
use crate::statespace::{steady_state, InputSource, Labels, StateSpaceModel};

/// Constants of the five-state HVAC model. Field names in config follow the
/// symbols of the model equations (`c`, `rho`, `V1`..`V5`, `mdot`, `k`, `f`,
/// `K`, `Q1`..`Q3`, `Ti`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvacConstants {
    /// Specific heat capacity of air [J/(kg K)].
    pub c: f64,
    /// Air density [kg/m³].
    pub rho: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    #[serde(rename = "V2")]
    pub v2: f64,
    #[serde(rename = "V3")]
    pub v3: f64,
    #[serde(rename = "V4")]
    pub v4: f64,
    #[serde(rename = "V5")]
    pub v5: f64,
    /// Mass flow [kg/s].
    pub mdot: f64,
    /// Valve 1 position, 0..=1.
    #[serde(rename = "k")]
    pub valve1: f64,
    /// Valve 2 position. Kept for completeness; no equation uses it.
    #[serde(rename = "f")]
    pub valve2: f64,
    /// Heat exchanger conductance [W/K].
    #[serde(rename = "K")]
    pub exchanger: f64,
    #[serde(rename = "Q1")]
    pub q1: f64,
    #[serde(rename = "Q2")]
    pub q2: f64,
    #[serde(rename = "Q3")]
    pub q3: f64,
    /// Indoor temperature [°C].
    #[serde(rename = "Ti")]
    pub t_indoor: f64,
}

impl Default for HvacConstants {
    fn default() -> Self {
        HvacConstants {
            c: 1005.0,
            rho: 1.2,
            v1: 5.0,
            v2: 5.0,
            v3: 5.0,
            v4: 5.0,
            v5: 5.0,
            mdot: 0.2,
            valve1: 1.0,
            valve2: 1.0,
            exchanger: 200.0,
            q1: 500.0,
            q2: 2000.0,
            q3: 500.0,
            t_indoor: 22.0,
        }
    }
}

impl HvacConstants {
    /// Heat capacities `c·rho·V` of the five air volumes [J/K].
    pub fn capacities(&self) -> [f64; 5] {
        [self.v1, self.v2, self.v3, self.v4, self.v5].map(|v| self.c * self.rho * v)
    }

    /// Capacity flow `mdot·c` [W/K].
    pub fn flow_capacity(&self) -> f64 {
        self.mdot * self.c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("rho", self.rho),
            ("V1", self.v1),
            ("V2", self.v2),
            ("V3", self.v3),
            ("V4", self.v4),
            ("V5", self.v5),
            ("mdot", self.mdot),
            ("K", self.exchanger),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("constants.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        for (name, v) in [("Q1", self.q1), ("Q2", self.q2), ("Q3", self.q3), ("f", self.valve2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("constants.{name}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.valve1) {
            return Err(Error::config(
                "constants.k",
                format!("must lie in [0, 1], got {}", self.valve1),
            ));
        }
        if !self.t_indoor.is_finite() {
            return Err(Error::config("constants.Ti", "must be finite"));
        }
        Ok(())
    }
}

/// Constants of the three-state brickwork solar collector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScConstants {
    /// Collector surface [m²].
    #[serde(rename = "S")]
    pub surface: f64,
    /// Specific heat capacity of the medium [J/(kg K)].
    pub c: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    /// Surface heat transfer coefficient [W/(m² K)].
    pub h: f64,
    pub mdot: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub alpha: f64,
    /// Supply water temperature [°C].
    #[serde(rename = "Tsup")]
    pub t_supply: f64,
}

impl Default for ScConstants {
    fn default() -> Self {
        ScConstants {
            surface: 2.0,
            c: 4200.0,
            c1: 100_000.0,
            c2: 15_000.0,
            c3: 300_000.0,
            h: 25.0,
            mdot: 0.016,
            r1: 0.1,
            r2: 3.0,
            alpha: 0.9,
            t_supply: 10.0,
        }
    }
}

impl ScConstants {
    pub fn flow_capacity(&self) -> f64 {
        self.mdot * self.c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("S", self.surface),
            ("c", self.c),
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("h", self.h),
            ("mdot", self.mdot),
            ("R1", self.r1),
            ("R2", self.r2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("constants.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "constants.alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if !self.t_supply.is_finite() {
            return Err(Error::config("constants.Tsup", "must be finite"));
        }
        Ok(())
    }
}

/// Source of one model input channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    Climate(VarCode),
    Constant(f64),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Climate(code) => write!(f, "climate:{code}"),
            Binding::Constant(v) => write!(f, "const:{v}"),
        }
    }
}

impl FromStr for Binding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(code) = s.strip_prefix("climate:") {
            code.parse::<VarCode>().map(Binding::Climate).map_err(|e| e.to_string())
        } else if let Some(v) = s.strip_prefix("const:") {
            match v.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Binding::Constant(v)),
                _ => Err(format!("bad constant `{v}`")),
            }
        } else {
            Err(format!("`{s}` is neither `climate:CODE` nor `const:VALUE`"))
        }
    }
}

impl Serialize for Binding {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Binding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Initial state policy.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum X0Policy {
    Explicit(Vec<f64>),
    /// Equilibrium for the first hour's input; zeros when `A` is singular.
    #[default]
    SteadyStateOfFirstSample,
}

impl Serialize for X0Policy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            X0Policy::Explicit(v) => v.serialize(s),
            X0Policy::SteadyStateOfFirstSample => s.serialize_str("steady"),
        }
    }
}

impl<'de> Deserialize<'de> for X0Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Values(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Values(v) => Ok(X0Policy::Explicit(v)),
            Raw::Name(s) if s == "steady" => Ok(X0Policy::SteadyStateOfFirstSample),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "x0 must be \"steady\" or a list of numbers, got \"{s}\""
            ))),
        }
    }
}

/// A fully specified system: model, input bindings, start values and the
/// indicator that reduces its outputs to one number.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub model: StateSpaceModel,
    pub bindings: Vec<Binding>,
    pub x0: X0Policy,
    pub indicator: PerformanceIndicator,
}

impl SystemSpec {
    /// Checks every cross-field dimension. Config paths in errors are
    /// relative to the model config document.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
            || self.name.starts_with('.')
        {
            return Err(Error::config(
                "name",
                format!("`{}` is not a file-name-safe identifier", self.name),
            ));
        }
        let n = self.model.n_states();
        let m = self.model.n_inputs();
        let p = self.model.n_outputs();
        if self.bindings.len() != m {
            return Err(Error::config(
                "bindings",
                format!("{} bindings for {m} inputs", self.bindings.len()),
            ));
        }
        if let X0Policy::Explicit(x0) = &self.x0 {
            if x0.len() != n {
                return Err(Error::config("x0", format!("{} values for {n} states", x0.len())));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("x0", "values must be finite"));
            }
        }
        self.indicator.validate(p)
    }

    /// Start state for a run whose first input vector is `u0`.
    pub fn initial_state(&self, u0: &[f64]) -> Result<Vec<f64>> {
        match &self.x0 {
            X0Policy::Explicit(x) => Ok(x.clone()),
            X0Policy::SteadyStateOfFirstSample => match steady_state(&self.model, u0) {
                Ok((x, _)) => Ok(x),
                Err(Error::Singular(_)) => Ok(vec![0.0; self.model.n_states()]),
                Err(e) => Err(e),
            },
        }
    }

    /// Index of the input channel called `name`, if the model names its inputs.
    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.model.labels.inputs.iter().position(|s| s == name)
    }
}

fn labels(states: &[&str], inputs: &[&str], outputs: &[&str]) -> Labels {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    Labels {
        states: own(states),
        inputs: own(inputs),
        outputs: own(outputs),
    }
}

/// Five-state HVAC loop. States are the air temperatures `T1..T5`, inputs are
/// `[Te, Ti, Q1, Q2, Q3]`, outputs are the states. The indicator is the mean
/// of `mdot·c·(T5 - Ti)`.
pub fn build_hvac(k: &HvacConstants) -> Result<SystemSpec> {
    k.validate()?;
    let [c1, c2, c3, c4, c5] = k.capacities();
    let mc = k.flow_capacity();
    let kmc = k.valve1 * mc;
    let hx = k.exchanger / 2.0;

    let a = Mat::from_rows(&[
        [-kmc / c1, 0.0, 0.0, 0.0, 0.0],
        [(kmc - hx) / c2, (-kmc - hx) / c2, hx / c2, 0.0, 0.0],
        [hx / c3, hx / c3, (-kmc - hx) / c3, 0.0, 0.0],
        [0.0, kmc / c4, 0.0, -mc / c4, 0.0],
        [0.0, 0.0, 0.0, mc / c5, -mc / c5],
    ])?;
    let b = Mat::from_rows(&[
        [kmc / c1, 0.0, 1.0 / c1, 0.0, 0.0],
        [0.0, hx / c2, 0.0, 0.0, 0.0],
        [0.0, (kmc - hx) / c3, 0.0, 0.0, 0.0],
        [0.0, (1.0 - k.valve1) * mc / c4, 0.0, 1.0 / c4, 0.0],
        [0.0, 0.0, 0.0, 0.0, -1.0 / c5],
    ])?;
    let model = StateSpaceModel::new(a, b, Mat::identity(5), Mat::zeros(5, 5))?.with_labels(labels(
        &["T1", "T2", "T3", "T4", "T5"],
        &["Te", "Ti", "Q1", "Q2", "Q3"],
        &["T1", "T2", "T3", "T4", "T5"],
    ))?;
    let spec = SystemSpec {
        name: "hvac".into(),
        model,
        bindings: vec![
            Binding::Climate(VarCode::TA),
            Binding::Constant(k.t_indoor),
            Binding::Constant(k.q1),
            Binding::Constant(k.q2),
            Binding::Constant(k.q3),
        ],
        x0: X0Policy::SteadyStateOfFirstSample,
        indicator: PerformanceIndicator {
            weights: vec![0.0, 0.0, 0.0, 0.0, mc],
            offset: -mc * k.t_indoor,
            statistic: Statistic::Mean,
            skip_hours: 0,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Three-state brickwork solar collector driven by `[Te, Tsup, Irrad]`.
/// Output 2 is the heat added to the medium, `mdot·c·(T2 - Tsup)`; the other
/// outputs are zero.
pub fn build_solar_collector(k: &ScConstants) -> Result<SystemSpec> {
    k.validate()?;
    let mc = k.flow_capacity();
    let hs = k.h * k.surface;
    let g1 = 1.0 / k.r1;
    let g2 = 1.0 / k.r2;

    let a = Mat::from_rows(&[
        [(-hs - g1) / k.c1, g1 / k.c1, 0.0],
        [g1 / k.c2, (-mc - g1 - g2) / k.c2, g2 / k.c2],
        [0.0, g2 / k.c3, -g2 / k.c3],
    ])?;
    let b = Mat::from_rows(&[
        [hs / k.c1, 0.0, k.alpha * k.surface / k.c1],
        [0.0, mc / k.c2, 0.0],
        [0.0, 0.0, 0.0],
    ])?;
    let mut c = Mat::zeros(3, 3);
    c[(1, 1)] = mc;
    let mut d = Mat::zeros(3, 3);
    d[(1, 1)] = -mc;
    let model = StateSpaceModel::new(a, b, c, d)?.with_labels(labels(
        &["T1", "T2", "T3"],
        &["Te", "Tsup", "Irrad"],
        &["y1", "heat_gain", "y3"],
    ))?;
    let spec = SystemSpec {
        name: "sc".into(),
        model,
        bindings: vec![
            Binding::Climate(VarCode::TA),
            Binding::Constant(k.t_supply),
            Binding::Climate(VarCode::ISGH),
        ],
        x0: X0Policy::SteadyStateOfFirstSample,
        indicator: PerformanceIndicator {
            weights: vec![0.0, 1.0, 0.0],
            offset: 0.0,
            statistic: Statistic::Mean,
            skip_hours: 0,
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Which input a binding entry in config refers to: a position or an input name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Channel {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingConfig {
    pub channel: Channel,
    pub source: Binding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

/// The `system` section of a pipeline config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<MatricesConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<BindingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<X0Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<PerformanceIndicator>,
}

fn constants_from<T: serde::de::DeserializeOwned>(map: &Option<BTreeMap<String, f64>>) -> Result<T> {
    let value =
        serde_json::to_value(map.clone().unwrap_or_default()).map_err(|e| Error::config("constants", e.to_string()))?;
    serde_json::from_value(value).map_err(|e| Error::config("constants", e.to_string()))
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<Mat> {
    Mat::from_rows(rows).map_err(|e| Error::config(format!("matrices.{field}"), e.to_string()))
}

/// Builds and validates a [`SystemSpec`] from its config section. Every
/// dimension is checked here, before any simulation.
pub fn build_from_config(cfg: &ModelConfig) -> Result<SystemSpec> {
    let mut spec = match (&cfg.builtin, &cfg.matrices) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "builtin",
                "give either `builtin` or `matrices`, not both",
            ))
        }
        (None, None) => return Err(Error::config("builtin", "one of `builtin` or `matrices` is required")),
        (Some(name), None) => match name.as_str() {
            "hvac" => build_hvac(&constants_from(&cfg.constants)?)?,
            "sc" | "solar_collector" => build_solar_collector(&constants_from(&cfg.constants)?)?,
            other => {
                return Err(Error::config(
                    "builtin",
                    format!("unknown builtin `{other}` (expected hvac or sc)"),
                ))
            }
        },
        (None, Some(mats)) => {
            if cfg.constants.is_some() {
                return Err(Error::config("constants", "constants only apply to builtin models"));
            }
            from_matrices(mats, cfg)?
        }
    };

    if let Some(name) = &cfg.name {
        spec.name = name.clone();
    }
    for (i, bc) in cfg.bindings.iter().enumerate() {
        let idx = match &bc.channel {
            Channel::Index(j) if *j < spec.bindings.len() => *j,
            Channel::Index(j) => {
                return Err(Error::config(
                    format!("bindings[{i}].channel"),
                    format!("channel {j} out of range for {} inputs", spec.bindings.len()),
                ))
            }
            Channel::Name(s) => spec
                .input_index(s)
                .ok_or_else(|| Error::config(format!("bindings[{i}].channel"), format!("no input named `{s}`")))?,
        };
        spec.bindings[idx] = bc.source;
    }
    if let Some(x0) = &cfg.x0 {
        spec.x0 = x0.clone();
    }
    if let Some(ind) = &cfg.indicator {
        spec.indicator = ind.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn from_matrices(mats: &MatricesConfig, cfg: &ModelConfig) -> Result<SystemSpec> {
    let a = matrix(&mats.a, "A")?;
    let n = a.rows();
    if n == 0 || !a.is_square() {
        return Err(Error::config(
            "matrices.A",
            format!("A must be square and non-empty, got {}x{}", a.rows(), a.cols()),
        ));
    }
    let b = matrix(&mats.b, "B")?;
    if b.rows() != n {
        return Err(Error::config(
            "matrices.B",
            format!("B rows ≠ n ({} rows, n = {n})", b.rows()),
        ));
    }
    if b.cols() == 0 {
        return Err(Error::config("matrices.B", "B needs at least one column"));
    }
    let m = b.cols();
    let c = matrix(&mats.c, "C")?;
    if c.cols() != n || c.rows() == 0 {
        return Err(Error::config(
            "matrices.C",
            format!("C is {}x{}, needs {n} columns", c.rows(), c.cols()),
        ));
    }
    let p = c.rows();
    let d = matrix(&mats.d, "D")?;
    if d.rows() != p || d.cols() != m {
        return Err(Error::config(
            "matrices.D",
            format!("D is {}x{}, expected {p}x{m}", d.rows(), d.cols()),
        ));
    }
    let model = StateSpaceModel::new(a, b, c, d)?
        .with_labels(Labels {
            states: mats.states.clone(),
            inputs: mats.inputs.clone(),
            outputs: mats.outputs.clone(),
        })
        .map_err(|e| Error::config("matrices", e.to_string()))?;

    // Explicit models must bind every channel.
    let mut seen = vec![false; m];
    for (i, bc) in cfg.bindings.iter().enumerate() {
        let idx = match &bc.channel {
            Channel::Index(j) => *j,
            Channel::Name(s) => model
                .labels
                .inputs
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::config(format!("bindings[{i}].channel"), format!("no input named `{s}`")))?,
        };
        if idx >= m {
            return Err(Error::config(
                format!("bindings[{i}].channel"),
                format!("channel {idx} out of range for {m} inputs"),
            ));
        }
        if seen[idx] {
            return Err(Error::config(
                format!("bindings[{i}].channel"),
                format!("channel {idx} bound twice"),
            ));
        }
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::config(
            "bindings",
            format!("input channel {missing} is not bound"),
        ));
    }
    let indicator = cfg
        .indicator
        .clone()
        .ok_or_else(|| Error::config("indicator", "models given as matrices need an indicator"))?;
    Ok(SystemSpec {
        name: "model".into(),
        model,
        bindings: vec![Binding::Constant(0.0); m],
        x0: X0Policy::default(),
        indicator,
    })
}

/// Serializes a spec as an explicit-matrices config that
/// [`build_from_config`] turns back into the same spec.
pub fn to_config(spec: &SystemSpec) -> ModelConfig {
    ModelConfig {
        name: Some(spec.name.clone()),
        builtin: None,
        constants: None,
        matrices: Some(MatricesConfig {
            a: spec.model.a.to_rows(),
            b: spec.model.b.to_rows(),
            c: spec.model.c.to_rows(),
            d: spec.model.d.to_rows(),
            states: spec.model.labels.states.clone(),
            inputs: spec.model.labels.inputs.clone(),
            outputs: spec.model.labels.outputs.clone(),
        }),
        bindings: spec
            .bindings
            .iter()
            .enumerate()
            .map(|(i, b)| BindingConfig {
                channel: Channel::Index(i),
                source: *b,
            })
            .collect(),
        x0: Some(spec.x0.clone()),
        indicator: Some(spec.indicator.clone()),
    }
}

enum Resolved<'a> {
    Column(&'a [f64]),
    Constant(f64),
}

/// Per-hour model inputs read straight from a climate series.
pub struct AssembledInputs<'a> {
    channels: Vec<Resolved<'a>>,
    len: usize,
}

impl InputSource for AssembledInputs<'_> {
    fn len(&self) -> usize {
        self.len
    }

    fn width(&self) -> usize {
        self.channels.len()
    }

    #[inline]
    fn fill(&self, k: usize, u: &mut [f64]) {
        for (slot, ch) in u.iter_mut().zip(&self.channels) {
            *slot = match ch {
                Resolved::Column(col) => col[k],
                Resolved::Constant(v) => *v,
            };
        }
    }
}

pub fn assemble_inputs<'a>(bindings: &[Binding], series: &'a ClimateSeries) -> Result<AssembledInputs<'a>> {
    if bindings.is_empty() {
        return Err(Error::config("bindings", "no input channels"));
    }
    let channels = bindings
        .iter()
        .map(|b| match b {
            Binding::Climate(code) => {
                let col = series.column(*code);
                if col.len() != series.n_hours() {
                    Err(Error::config("bindings", format!("column {code} missing from series")))
                } else {
                    Ok(Resolved::Column(col))
                }
            }
            Binding::Constant(v) => Ok(Resolved::Constant(*v)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AssembledInputs {
        channels,
        len: series.n_hours(),
    })
}
