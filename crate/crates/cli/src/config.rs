//! Experiment configuration. Physical quantities are strings carrying their
//! unit (`"30 dBm"`, `"3.5 GHz"`, `"0.5 lambda"`); bare numbers are only
//! accepted for counts and dimensionless settings.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use star_sim_core::channel::{wavelength, BsArray, FadingParams, FieldModel};
use star_sim_core::element::{OperatingProtocol, PhaseShiftModel, Side, TsFractions};
use star_sim_core::optim::{ElementWiseConfig, PenaltyConfig};
use star_sim_core::scenarios::{NetworkScenario, Solver, SurfaceLayout, SweepAxis, UserSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Power,
    Frequency,
    Length,
    Ratio,
    Angle,
}

impl Dimension {
    fn units(self) -> &'static [&'static str] {
        match self {
            Dimension::Power => &["dBm", "W", "mW"],
            Dimension::Frequency => &["Hz", "kHz", "MHz", "GHz"],
            Dimension::Length => &["m", "cm", "mm", "lambda"],
            Dimension::Ratio => &["dB", "lin"],
            Dimension::Angle => &["rad", "deg"],
        }
    }
}

/// A number with a unit, kept verbatim so that serialising returns the
/// exact text that was parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity<const D: u8> {
    text: String,
    value: f64,
    unit: String,
}

pub type Power = Quantity<0>;
pub type Frequency = Quantity<1>;
pub type Length = Quantity<2>;
pub type Ratio = Quantity<3>;
pub type Angle = Quantity<4>;

const fn dimension(d: u8) -> Dimension {
    match d {
        0 => Dimension::Power,
        1 => Dimension::Frequency,
        2 => Dimension::Length,
        3 => Dimension::Ratio,
        _ => Dimension::Angle,
    }
}

impl<const D: u8> Quantity<D> {
    pub fn parse(text: &str) -> Result<Self, String> {
        let dim = dimension(D);
        let mut parts = text.split_whitespace();
        let (Some(num), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!(
                "`{text}` must be a number and a unit, one of {:?}",
                dim.units()
            ));
        };
        let value: f64 = match num {
            "inf" => f64::INFINITY,
            _ => num.parse().map_err(|_| format!("`{num}` is not a number"))?,
        };
        if value.is_nan() || (value.is_infinite() && !(D == 3 && unit == "lin")) {
            return Err(format!("`{text}` is not a finite value"));
        }
        if !dim.units().contains(&unit) {
            return Err(format!("unit `{unit}` is not one of {:?}", dim.units()));
        }
        Ok(Self {
            text: text.to_string(),
            value,
            unit: unit.to_string(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl Power {
    pub fn watts(&self) -> f64 {
        match self.unit.as_str() {
            "dBm" => 10f64.powf((self.value - 30.0) / 10.0),
            "mW" => self.value * 1e-3,
            _ => self.value,
        }
    }
}

impl Frequency {
    pub fn hertz(&self) -> f64 {
        self.value
            * match self.unit.as_str() {
                "kHz" => 1e3,
                "MHz" => 1e6,
                "GHz" => 1e9,
                _ => 1.0,
            }
    }
}

impl Length {
    pub fn meters(&self, lambda: f64) -> f64 {
        self.value
            * match self.unit.as_str() {
                "cm" => 1e-2,
                "mm" => 1e-3,
                "lambda" => lambda,
                _ => 1.0,
            }
    }
}

impl Ratio {
    pub fn linear(&self) -> f64 {
        match self.unit.as_str() {
            "dB" => 10f64.powf(self.value / 10.0),
            _ => self.value,
        }
    }
}

impl Angle {
    pub fn radians(&self) -> f64 {
        match self.unit.as_str() {
            "deg" => self.value.to_radians(),
            _ => self.value,
        }
    }
}

fn q<const D: u8>(text: &str) -> Quantity<D> {
    Quantity::parse(text).expect("built-in default is well-formed")
}

impl<const D: u8> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

struct QuantityVisitor<const D: u8>;

impl<const D: u8> Visitor<'_> for QuantityVisitor<D> {
    type Value = Quantity<D>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a string with a unit, one of {:?}", dimension(D).units())
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        Quantity::parse(v).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
        Err(E::custom(format!(
            "`{v}` has no unit; write it as a string such as \"{v} {}\"",
            dimension(D).units()[0]
        )))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        self.visit_f64(v as f64)
    }
}

impl<'de, const D: u8> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        d.deserialize_any(QuantityVisitor::<D>)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Penalty,
    Alternating,
    ElementWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    SumSe,
    MinPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Coupled,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    EnergySplitting,
    ModeSwitching,
    TimeSwitching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    FarField,
    NearField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub rows: usize,
    pub cols: usize,
    pub spacing: Length,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            spacing: q("0.5 lambda"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsSection {
    pub position: [Length; 3],
    pub antennas: usize,
    pub spacing: Length,
}

impl Default for BsSection {
    fn default() -> Self {
        Self {
            position: [q("-21.2132 m"), q("-21.2132 m"), q("0 m")],
            antennas: 4,
            spacing: q("0.5 lambda"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    pub position: [Length; 3],
    pub side: Side,
    #[serde(default = "default_target")]
    pub sinr_target: Ratio,
}

fn default_target() -> Ratio {
    q("0 dB")
}

fn default_users() -> Vec<UserSection> {
    vec![
        UserSection {
            position: [q("-21.2132 m"), q("21.2132 m"), q("0 m")],
            side: Side::Reflection,
            sinr_target: default_target(),
        },
        UserSection {
            position: [q("21.2132 m"), q("21.2132 m"), q("0 m")],
            side: Side::Transmission,
            sinr_target: default_target(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingSection {
    pub rician_k: Ratio,
    pub pathloss_exponent_bs: f64,
    pub pathloss_exponent_user: f64,
    pub pathloss_exponent_direct: f64,
    /// Power gain at 1 m.
    pub reference_gain: Ratio,
    pub field_model: FieldKind,
    pub direct_link: bool,
}

impl Default for FadingSection {
    fn default() -> Self {
        Self {
            rician_k: q("3 lin"),
            pathloss_exponent_bs: 2.0,
            pathloss_exponent_user: 2.0,
            pathloss_exponent_direct: 3.5,
            reference_gain: q("-30 dB"),
            field_model: FieldKind::FarField,
            direct_link: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    pub rho0: f64,
    pub growth: f64,
    pub violation_tol: Angle,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for PenaltySection {
    fn default() -> Self {
        let d = PenaltyConfig::default();
        Self {
            rho0: d.rho0,
            growth: d.growth,
            violation_tol: q("1e-4 rad"),
            max_outer: d.max_outer,
            inner_tol: d.inner_tol,
            max_inner: d.max_inner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElementWiseSection {
    pub grid_points: usize,
    pub amplitude_points: usize,
    pub refine_rounds: usize,
    pub inner_tol: f64,
    pub max_sweeps: usize,
}

impl Default for ElementWiseSection {
    fn default() -> Self {
        let d = ElementWiseConfig::default();
        Self {
            grid_points: d.grid_points,
            amplitude_points: d.amplitude_points,
            refine_rounds: d.refine_rounds,
            inner_tol: d.inner_tol,
            max_sweeps: d.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Elements,
    Budget,
    Distance,
    RicianK,
}

/// Sweep point: a bare count for `elements`, otherwise a quantity whose
/// unit matches the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Count(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisKind,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub solver: SolverKind,
    pub objective: ObjectiveKind,
    pub model: ModelKind,
    pub protocol: ProtocolKind,
    /// `[transmission, reflection]` time fractions; optimised when absent.
    pub time_fractions: Option<[f64; 2]>,
    pub frequency: Frequency,
    pub surface: SurfaceSection,
    pub bs: BsSection,
    #[serde(default = "default_users")]
    pub users: Vec<UserSection>,
    pub noise_power: Power,
    pub power_budget: Power,
    pub fading: FadingSection,
    pub penalty: PenaltySection,
    pub element_wise: ElementWiseSection,
    pub sweep: Option<SweepSection>,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 20,
            solver: SolverKind::Penalty,
            objective: ObjectiveKind::SumSe,
            model: ModelKind::Coupled,
            protocol: ProtocolKind::EnergySplitting,
            time_fractions: None,
            frequency: q("3.5 GHz"),
            surface: SurfaceSection::default(),
            bs: BsSection::default(),
            users: default_users(),
            noise_power: q("-80 dBm"),
            power_budget: q("30 dBm"),
            fading: FadingSection::default(),
            penalty: PenaltySection::default(),
            element_wise: ElementWiseSection::default(),
            sweep: None,
            out_dir: "results".into(),
        }
    }
}

/// Everything a run needs, in solver units.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: NetworkScenario,
    pub solver: Solver,
    pub model: PhaseShiftModel,
    pub objective: ObjectiveKind,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_json(&text, path)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn lambda(&self) -> f64 {
        wavelength(self.frequency.hertz())
    }

    /// Validates the configuration and converts it to solver inputs.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let f = self.frequency.hertz();
        if !(f > 0.0) {
            return Err(invalid("frequency", "must be positive"));
        }
        let lambda = self.lambda();
        let pos = |p: &[Length; 3]| [p[0].meters(lambda), p[1].meters(lambda), p[2].meters(lambda)];

        let noise = self.noise_power.watts();
        if !(noise > 0.0) {
            return Err(invalid("noise_power", format!("must be positive, got {noise} W")));
        }
        let budget = self.power_budget.watts();
        if !(budget >= 0.0) {
            return Err(invalid("power_budget", format!("must be non-negative, got {budget} W")));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        if self.surface.rows == 0 || self.surface.cols == 0 {
            return Err(invalid("surface", "rows and cols must be positive"));
        }
        let spacing = self.surface.spacing.meters(lambda);
        if !(spacing > 0.0) {
            return Err(invalid("surface.spacing", "must be positive"));
        }
        if self.bs.antennas == 0 {
            return Err(invalid("bs.antennas", "need at least one antenna"));
        }
        if self.users.is_empty() {
            return Err(invalid("users", "need at least one user"));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !(u.sinr_target.linear() > 0.0) {
                return Err(invalid(&format!("users[{i}].sinr_target"), "must be positive"));
            }
        }
        let k = self.fading.rician_k.linear();
        if !(k >= 0.0) {
            return Err(invalid("fading.rician_k", "must be non-negative"));
        }
        let gain = self.fading.reference_gain.linear();
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(invalid("fading.reference_gain", "must be positive and finite"));
        }
        for (name, e) in [
            ("fading.pathloss_exponent_bs", self.fading.pathloss_exponent_bs),
            ("fading.pathloss_exponent_user", self.fading.pathloss_exponent_user),
            ("fading.pathloss_exponent_direct", self.fading.pathloss_exponent_direct),
        ] {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }

        let protocol = match (self.protocol, self.time_fractions) {
            (ProtocolKind::EnergySplitting, None) => OperatingProtocol::EnergySplitting,
            (ProtocolKind::ModeSwitching, None) => OperatingProtocol::ModeSwitching,
            (ProtocolKind::TimeSwitching, fr) => OperatingProtocol::TimeSwitching {
                fractions: fr
                    .map(|[t, r]| TsFractions::new(t, r))
                    .transpose()
                    .map_err(|e| invalid("time_fractions", e.to_string()))?,
            },
            (_, Some(_)) => {
                return Err(invalid("time_fractions", "only meaningful with time_switching"));
            }
        };
        let model = match self.model {
            ModelKind::Coupled => PhaseShiftModel::Coupled,
            ModelKind::Independent => PhaseShiftModel::Independent,
        };

        let p = &self.penalty;
        let penalty = PenaltyConfig {
            rho0: p.rho0,
            growth: p.growth,
            violation_tol: p.violation_tol.radians(),
            max_outer: p.max_outer,
            inner_tol: p.inner_tol,
            max_inner: p.max_inner,
        };
        penalty.validate().map_err(|e| invalid("penalty", e.to_string()))?;
        let e = &self.element_wise;
        let element_wise = ElementWiseConfig {
            grid_points: e.grid_points,
            amplitude_points: e.amplitude_points,
            refine_rounds: e.refine_rounds,
            inner_tol: e.inner_tol,
            max_sweeps: e.max_sweeps,
        };
        if e.grid_points < 2 || e.amplitude_points < 2 || e.max_sweeps == 0 || !(e.inner_tol >= 0.0) {
            return Err(invalid(
                "element_wise",
                "grids need at least two points, max_sweeps at least one, inner_tol non-negative",
            ));
        }
        let solver = match (self.solver, self.objective) {
            (SolverKind::Penalty, _) => Solver::Penalty(penalty),
            (SolverKind::Alternating, _) => Solver::Alternating(penalty),
            (SolverKind::ElementWise, ObjectiveKind::MinPower) => Solver::ElementWise(element_wise),
            (SolverKind::ElementWise, ObjectiveKind::SumSe) => {
                return Err(invalid("solver", "element_wise only minimises power"));
            }
        };
        if self.objective == ObjectiveKind::MinPower {
            let sides: Vec<Side> = self.users.iter().map(|u| u.side).collect();
            if sides.len() != 2 || sides[0] == sides[1] {
                return Err(invalid("users", "min_power needs two users on opposite sides"));
            }
            if matches!(protocol, OperatingProtocol::TimeSwitching { .. }) {
                return Err(invalid("protocol", "min_power does not support time_switching"));
            }
        }
        if self.solver == SolverKind::Alternating && protocol != OperatingProtocol::EnergySplitting {
            return Err(invalid(
                "protocol",
                "the alternating solver supports energy_splitting only",
            ));
        }
        if self.solver == SolverKind::ElementWise {
            if self.bs.antennas != 1 {
                return Err(invalid("bs.antennas", "element_wise needs a single antenna"));
            }
            if model != PhaseShiftModel::Coupled || protocol != OperatingProtocol::EnergySplitting {
                return Err(invalid(
                    "model",
                    "element_wise needs the coupled model with energy_splitting",
                ));
            }
        }

        let scenario = NetworkScenario {
            layout: SurfaceLayout {
                rows: self.surface.rows,
                cols: self.surface.cols,
                spacing,
            },
            protocol,
            bs: BsArray {
                position: pos(&self.bs.position),
                antennas: self.bs.antennas,
                spacing: self.bs.spacing.meters(lambda),
            },
            users: self
                .users
                .iter()
                .map(|u| UserSpec {
                    position: pos(&u.position),
                    side: u.side,
                    sinr_target: u.sinr_target.linear(),
                })
                .collect(),
            fading: FadingParams {
                rician_k: k,
                pathloss_exponent_bs: self.fading.pathloss_exponent_bs,
                pathloss_exponent_user: self.fading.pathloss_exponent_user,
                pathloss_exponent_direct: self.fading.pathloss_exponent_direct,
                reference_gain: gain,
                wavelength: lambda,
            },
            field: match self.fading.field_model {
                FieldKind::FarField => FieldModel::FarField,
                FieldKind::NearField => FieldModel::NearField,
            },
            direct_link: self.fading.direct_link,
            noise_power: noise,
            power_budget: budget,
            trials: self.trials,
            seed: self.seed,
        };
        scenario.validate().map_err(|e| match e {
            star_sim_core::Error::InvalidParameter { name, reason } => invalid(name, reason),
            other => invalid("scenario", other.to_string()),
        })?;

        let sweep = self.sweep.as_ref().map(|s| self.resolve_sweep(s)).transpose()?;
        Ok(Resolved {
            scenario,
            solver,
            model,
            objective: self.objective,
            sweep,
        })
    }

    fn resolve_sweep(&self, s: &SweepSection) -> Result<(SweepAxis, Vec<f64>), ConfigError> {
        let lambda = self.lambda();
        let axis = match s.axis {
            AxisKind::Elements => SweepAxis::Elements,
            AxisKind::Budget => SweepAxis::Budget,
            AxisKind::Distance => SweepAxis::Distance,
            AxisKind::RicianK => SweepAxis::RicianK,
        };
        if s.values.is_empty() {
            return Err(invalid("sweep.values", "sweep has no values"));
        }
        let values = s
            .values
            .iter()
            .map(|v| match (s.axis, v) {
                (AxisKind::Elements, SweepValue::Count(n)) if *n > 0 => Ok(*n as f64),
                (AxisKind::Elements, _) => Err("elements are positive integers".to_string()),
                (_, SweepValue::Count(n)) => Err(format!("`{n}` has no unit")),
                (AxisKind::Budget, SweepValue::Text(t)) => Power::parse(t).map(|p| p.watts()),
                (AxisKind::Distance, SweepValue::Text(t)) => Length::parse(t).map(|l| l.meters(lambda)),
                (AxisKind::RicianK, SweepValue::Text(t)) => Ratio::parse(t).map(|r| r.linear()),
            })
            .collect::<Result<Vec<f64>, String>>()
            .map_err(|e| invalid("sweep.values", e))?;
        let up = values.windows(2).all(|w| w[0] < w[1]);
        let down = values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(invalid("sweep.values", "values must be strictly monotone"));
        }
        Ok((axis, values))
    }
}
