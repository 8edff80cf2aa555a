//! The ten-hyperparameter configuration space, sampling, and the numeric
//! encoding used by the surrogate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEARNING_RATE_MIN: f64 = 1e-4;
pub const LEARNING_RATE_MAX: f64 = 0.5;
pub const DEPTH_MIN: usize = 1;
pub const DEPTH_MAX: usize = 10;
pub const BATCH_SIZES: [usize; 3] = [16, 32, 64];
pub const NUM_HYPERPARAMETERS: usize = 10;

/// Number of evenly spaced values used when fixing a continuous hyperparameter.
pub const NUMERIC_GRID_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    Cz,
    Sqiswap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapType {
    Ring,
    Full,
    Pairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputCircuit {
    #[serde(rename = "2Z")]
    TwoZ,
    #[serde(rename = "mZ")]
    MZ,
}

/// One point of the configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub learning_rate: f64,
    pub batchsize: usize,
    pub depth: usize,
    pub is_data_encoding_hardware_efficient: bool,
    pub use_reuploading: bool,
    pub have_less_rotations: bool,
    pub entangler_operation: Entangler,
    pub map_type: MapType,
    pub input_activation_function: Activation,
    pub output_circuit: OutputCircuit,
}

impl Default for Configuration {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batchsize: 32,
            depth: 1,
            is_data_encoding_hardware_efficient: true,
            use_reuploading: false,
            have_less_rotations: true,
            entangler_operation: Entangler::Cz,
            map_type: MapType::Ring,
            input_activation_function: Activation::Linear,
            output_circuit: OutputCircuit::TwoZ,
        }
    }
}

impl Configuration {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite()
            && (LEARNING_RATE_MIN..=LEARNING_RATE_MAX).contains(&self.learning_rate))
        {
            return Err(Error::Config(format!(
                "learning_rate {} outside [{LEARNING_RATE_MIN}, {LEARNING_RATE_MAX}]",
                self.learning_rate
            )));
        }
        if !BATCH_SIZES.contains(&self.batchsize) {
            return Err(Error::Config(format!(
                "batchsize {} not in {BATCH_SIZES:?}",
                self.batchsize
            )));
        }
        if !(DEPTH_MIN..=DEPTH_MAX).contains(&self.depth) {
            return Err(Error::Config(format!(
                "depth {} outside {DEPTH_MIN}..={DEPTH_MAX}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Value of hyperparameter `hp` in its display form (`cz`, `True`, `0.01`, ...).
    pub fn value_label(&self, hp: Hyperparameter) -> String {
        self.value_of(hp).to_string()
    }

    pub fn value_of(&self, hp: Hyperparameter) -> HpValue {
        use Hyperparameter as H;
        match hp {
            H::LearningRate => HpValue::Real(self.learning_rate),
            H::Batchsize => HpValue::Int(self.batchsize),
            H::Depth => HpValue::Int(self.depth),
            H::IsDataEncodingHardwareEfficient => {
                HpValue::Bool(self.is_data_encoding_hardware_efficient)
            }
            H::UseReuploading => HpValue::Bool(self.use_reuploading),
            H::HaveLessRotations => HpValue::Bool(self.have_less_rotations),
            H::EntanglerOperation => HpValue::Entangler(self.entangler_operation),
            H::MapType => HpValue::Map(self.map_type),
            H::InputActivationFunction => HpValue::Activation(self.input_activation_function),
            H::OutputCircuit => HpValue::Output(self.output_circuit),
        }
    }

    /// Overwrites one hyperparameter. The value must have the matching type.
    pub fn set(&mut self, hp: Hyperparameter, value: HpValue) -> Result<()> {
        use Hyperparameter as H;
        match (hp, value) {
            (H::LearningRate, HpValue::Real(v)) => self.learning_rate = v,
            (H::Batchsize, HpValue::Int(v)) => self.batchsize = v,
            (H::Depth, HpValue::Int(v)) => self.depth = v,
            (H::IsDataEncodingHardwareEfficient, HpValue::Bool(v)) => {
                self.is_data_encoding_hardware_efficient = v
            }
            (H::UseReuploading, HpValue::Bool(v)) => self.use_reuploading = v,
            (H::HaveLessRotations, HpValue::Bool(v)) => self.have_less_rotations = v,
            (H::EntanglerOperation, HpValue::Entangler(v)) => self.entangler_operation = v,
            (H::MapType, HpValue::Map(v)) => self.map_type = v,
            (H::InputActivationFunction, HpValue::Activation(v)) => {
                self.input_activation_function = v
            }
            (H::OutputCircuit, HpValue::Output(v)) => self.output_circuit = v,
            (hp, v) => {
                return Err(Error::Config(format!("value {v} has wrong type for {hp}")));
            }
        }
        self.validate()
    }

    /// Parses the display form of `hp`'s value and sets it.
    pub fn set_from_str(&mut self, hp: Hyperparameter, raw: &str) -> Result<()> {
        let value = hp.parse_value(raw)?;
        self.set(hp, value)
    }
}

/// A single hyperparameter value, used when fixing or round-tripping dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum HpValue {
    Real(f64),
    Int(usize),
    Bool(bool),
    Entangler(Entangler),
    Map(MapType),
    Activation(Activation),
    Output(OutputCircuit),
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Real(v) => write!(f, "{v:.16e}"),
            HpValue::Int(v) => write!(f, "{v}"),
            HpValue::Bool(true) => write!(f, "True"),
            HpValue::Bool(false) => write!(f, "False"),
            HpValue::Entangler(Entangler::Cz) => write!(f, "cz"),
            HpValue::Entangler(Entangler::Sqiswap) => write!(f, "sqiswap"),
            HpValue::Map(MapType::Ring) => write!(f, "ring"),
            HpValue::Map(MapType::Full) => write!(f, "full"),
            HpValue::Map(MapType::Pairs) => write!(f, "pairs"),
            HpValue::Activation(Activation::Linear) => write!(f, "linear"),
            HpValue::Activation(Activation::Tanh) => write!(f, "tanh"),
            HpValue::Output(OutputCircuit::TwoZ) => write!(f, "2Z"),
            HpValue::Output(OutputCircuit::MZ) => write!(f, "mZ"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyperparameter {
    LearningRate,
    Batchsize,
    Depth,
    IsDataEncodingHardwareEfficient,
    UseReuploading,
    HaveLessRotations,
    EntanglerOperation,
    MapType,
    InputActivationFunction,
    OutputCircuit,
}

impl Hyperparameter {
    pub const ALL: [Hyperparameter; NUM_HYPERPARAMETERS] = [
        Hyperparameter::LearningRate,
        Hyperparameter::Batchsize,
        Hyperparameter::Depth,
        Hyperparameter::IsDataEncodingHardwareEfficient,
        Hyperparameter::UseReuploading,
        Hyperparameter::HaveLessRotations,
        Hyperparameter::EntanglerOperation,
        Hyperparameter::MapType,
        Hyperparameter::InputActivationFunction,
        Hyperparameter::OutputCircuit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Hyperparameter::LearningRate => "learning_rate",
            Hyperparameter::Batchsize => "batchsize",
            Hyperparameter::Depth => "depth",
            Hyperparameter::IsDataEncodingHardwareEfficient => {
                "is_data_encoding_hardware_efficient"
            }
            Hyperparameter::UseReuploading => "use_reuploading",
            Hyperparameter::HaveLessRotations => "have_less_rotations",
            Hyperparameter::EntanglerOperation => "entangler_operation",
            Hyperparameter::MapType => "map_type",
            Hyperparameter::InputActivationFunction => "input_activation_function",
            Hyperparameter::OutputCircuit => "output_circuit",
        }
    }

    pub fn def(self) -> HyperparameterDef {
        let kind = match self {
            Hyperparameter::LearningRate => HpKind::ContinuousLog {
                low: LEARNING_RATE_MIN,
                high: LEARNING_RATE_MAX,
            },
            Hyperparameter::Depth => HpKind::IntegerRange {
                low: DEPTH_MIN as i64,
                high: DEPTH_MAX as i64,
            },
            _ => HpKind::Categorical {
                categories: self.categories().iter().map(|v| v.to_string()).collect(),
            },
        };
        HyperparameterDef {
            name: self.name().to_string(),
            kind,
        }
    }

    /// Ordered category list for categorical hyperparameters (empty otherwise).
    pub fn categories(self) -> Vec<HpValue> {
        use HpValue as V;
        match self {
            Hyperparameter::LearningRate | Hyperparameter::Depth => Vec::new(),
            Hyperparameter::Batchsize => BATCH_SIZES.iter().map(|&b| V::Int(b)).collect(),
            Hyperparameter::IsDataEncodingHardwareEfficient
            | Hyperparameter::UseReuploading
            | Hyperparameter::HaveLessRotations => vec![V::Bool(true), V::Bool(false)],
            Hyperparameter::EntanglerOperation => {
                vec![V::Entangler(Entangler::Cz), V::Entangler(Entangler::Sqiswap)]
            }
            Hyperparameter::MapType => vec![
                V::Map(MapType::Ring),
                V::Map(MapType::Full),
                V::Map(MapType::Pairs),
            ],
            Hyperparameter::InputActivationFunction => vec![
                V::Activation(Activation::Linear),
                V::Activation(Activation::Tanh),
            ],
            Hyperparameter::OutputCircuit => {
                vec![V::Output(OutputCircuit::TwoZ), V::Output(OutputCircuit::MZ)]
            }
        }
    }

    pub fn is_categorical(self) -> bool {
        !matches!(self, Hyperparameter::LearningRate | Hyperparameter::Depth)
    }

    pub fn parse_value(self, raw: &str) -> Result<HpValue> {
        let raw = raw.trim();
        let bad = || Error::Config(format!("unknown value {raw:?} for {}", self.name()));
        match self {
            Hyperparameter::LearningRate => {
                raw.parse::<f64>().map(HpValue::Real).map_err(|_| bad())
            }
            Hyperparameter::Depth => raw.parse::<usize>().map(HpValue::Int).map_err(|_| bad()),
            _ => self
                .categories()
                .into_iter()
                .find(|c| c.to_string().eq_ignore_ascii_case(raw))
                .ok_or_else(bad),
        }
    }

    /// Values used when this hyperparameter is held fixed during a search:
    /// every category, every depth, or ten log-uniform learning rates
    /// including both endpoints.
    pub fn fixing_grid(self) -> Vec<HpValue> {
        match self {
            Hyperparameter::LearningRate => {
                let (lo, hi) = (LEARNING_RATE_MIN.log10(), LEARNING_RATE_MAX.log10());
                let steps = (NUMERIC_GRID_POINTS - 1) as f64;
                (0..NUMERIC_GRID_POINTS)
                    .map(|i| match i {
                        0 => LEARNING_RATE_MIN,
                        i if i == NUMERIC_GRID_POINTS - 1 => LEARNING_RATE_MAX,
                        i => 10f64.powf(lo + (hi - lo) * i as f64 / steps),
                    })
                    .map(HpValue::Real)
                    .collect()
            }
            Hyperparameter::Depth => (DEPTH_MIN..=DEPTH_MAX).map(HpValue::Int).collect(),
            _ => self.categories(),
        }
    }
}

impl fmt::Display for Hyperparameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Hyperparameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown hyperparameter {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HpKind {
    ContinuousLog { low: f64, high: f64 },
    IntegerRange { low: i64, high: i64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: HpKind,
}

impl HyperparameterDef {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            HpKind::ContinuousLog { low, high } if !(*low > 0.0 && low < high) => Err(
                Error::Config(format!("{}: log range needs 0 < low < high", self.name)),
            ),
            HpKind::IntegerRange { low, high } if low > high => {
                Err(Error::Config(format!("{}: empty integer range", self.name)))
            }
            HpKind::Categorical { categories } => {
                let mut sorted = categories.clone();
                sorted.sort();
                sorted.dedup();
                if categories.is_empty() || sorted.len() != categories.len() {
                    Err(Error::Config(format!(
                        "{}: categories must be non-empty and unique",
                        self.name
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// How one encoded dimension is measured and split by the surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimKind {
    /// Continuous on `[low, high]` under the uniform measure.
    Continuous { low: f64, high: f64 },
    /// Integers `low..=high`, each with equal mass.
    Integer { low: i64, high: i64 },
    /// Unordered categories `0..size`.
    Categorical { size: usize },
}

impl DimKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, DimKind::Categorical { .. })
    }
}

/// The configuration space with its surrogate encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub dims: Vec<DimKind>,
}

impl Default for ConfigSpace {
    fn default() -> Self {
        Self::qnn()
    }
}

impl ConfigSpace {
    /// The ten hyperparameters in their canonical order.
    pub fn qnn() -> Self {
        let dims = Hyperparameter::ALL
            .iter()
            .map(|hp| match hp {
                Hyperparameter::LearningRate => DimKind::Continuous {
                    low: LEARNING_RATE_MIN.log10(),
                    high: LEARNING_RATE_MAX.log10(),
                },
                Hyperparameter::Depth => DimKind::Integer {
                    low: DEPTH_MIN as i64,
                    high: DEPTH_MAX as i64,
                },
                hp => DimKind::Categorical {
                    size: hp.categories().len(),
                },
            })
            .collect();
        Self { dims }
    }

    pub fn definitions(&self) -> Vec<HyperparameterDef> {
        Hyperparameter::ALL.iter().map(|h| h.def()).collect()
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    /// Whether an encoded point lies inside the space.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(d, &v)| match *d {
                DimKind::Continuous { low, high } => v >= low && v <= high,
                DimKind::Integer { low, high } => {
                    v.fract() == 0.0 && v >= low as f64 && v <= high as f64
                }
                DimKind::Categorical { size } => v.fract() == 0.0 && v >= 0.0 && v < size as f64,
            })
    }
}

/// Draws a configuration: log-uniform learning rate, uniform depth and
/// categoricals. All ten fields are drawn in a fixed order so that callers
/// overriding one field afterwards see the same stream for the rest.
pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Configuration {
    let (lo, hi) = (LEARNING_RATE_MIN.log10(), LEARNING_RATE_MAX.log10());
    let u: f64 = rng.random_range(lo..hi);
    let learning_rate = 10f64.powf(u).clamp(LEARNING_RATE_MIN, LEARNING_RATE_MAX);
    let batchsize = BATCH_SIZES[rng.random_range(0..BATCH_SIZES.len())];
    let depth = rng.random_range(DEPTH_MIN..=DEPTH_MAX);
    let is_data_encoding_hardware_efficient = rng.random_bool(0.5);
    let use_reuploading = rng.random_bool(0.5);
    let have_less_rotations = rng.random_bool(0.5);
    let entangler_operation = if rng.random_bool(0.5) {
        Entangler::Cz
    } else {
        Entangler::Sqiswap
    };
    let map_type = [MapType::Ring, MapType::Full, MapType::Pairs][rng.random_range(0..3)];
    let input_activation_function = if rng.random_bool(0.5) {
        Activation::Linear
    } else {
        Activation::Tanh
    };
    let output_circuit = if rng.random_bool(0.5) {
        OutputCircuit::TwoZ
    } else {
        OutputCircuit::MZ
    };
    Configuration {
        learning_rate,
        batchsize,
        depth,
        is_data_encoding_hardware_efficient,
        use_reuploading,
        have_less_rotations,
        entangler_operation,
        map_type,
        input_activation_function,
        output_circuit,
    }
}

fn category_index(hp: Hyperparameter, v: HpValue) -> usize {
    hp.categories()
        .iter()
        .position(|c| *c == v)
        .expect("configuration value outside its category list")
}

/// Encodes a configuration for the surrogate: `log10(lr)`, depth as an
/// integer, and every categorical as its category index.
pub fn to_feature_vector(config: &Configuration) -> [f64; NUM_HYPERPARAMETERS] {
    let mut out = [0.0; NUM_HYPERPARAMETERS];
    for hp in Hyperparameter::ALL {
        out[hp.index()] = match hp {
            Hyperparameter::LearningRate => config.learning_rate.log10(),
            Hyperparameter::Depth => config.depth as f64,
            hp => category_index(hp, config.value_of(hp)) as f64,
        };
    }
    out
}

pub fn from_feature_vector(x: &[f64]) -> Result<Configuration> {
    if x.len() != NUM_HYPERPARAMETERS {
        return Err(Error::validation(format!(
            "feature vector has {} entries, expected {NUM_HYPERPARAMETERS}",
            x.len()
        )));
    }
    let mut config = Configuration::default();
    for hp in Hyperparameter::ALL {
        let v = x[hp.index()];
        let value = match hp {
            Hyperparameter::LearningRate => HpValue::Real(10f64.powf(v)),
            Hyperparameter::Depth => HpValue::Int(v.round() as usize),
            hp => {
                let cats = hp.categories();
                let idx = v.round();
                if idx < 0.0 || idx as usize >= cats.len() {
                    return Err(Error::Config(format!("category index {v} invalid for {hp}")));
                }
                cats[idx as usize]
            }
        };
        config.set(hp, value)?;
    }
    Ok(config)
}

/// Numeric encoding of a single hyperparameter value (same scale as [`to_feature_vector`]).
pub fn encode_value(hp: Hyperparameter, v: HpValue) -> f64 {
    match (hp, v) {
        (Hyperparameter::LearningRate, HpValue::Real(lr)) => lr.log10(),
        (Hyperparameter::Depth, HpValue::Int(d)) => d as f64,
        (hp, v) => category_index(hp, v) as f64,
    }
}
