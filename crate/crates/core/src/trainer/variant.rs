//! Ablation switchboard: which networks, losses and channel counts are live.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InputLevel {
    /// Task network consumes raw source images.
    Off,
    /// Transform network + image discriminator without task gradient
    /// (stand-in for an unpaired-translation baseline).
    AdvOnly,
    /// Image-only transform input, guided by the task losses.
    Gd,
    GdPlusD,
    GdPlusS,
    GdPlusSd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OutputLevel {
    Off,
    /// Align segmentation softmax maps only.
    Ss,
    /// Align depth maps only.
    Depth,
    /// Separate discriminators for segmentation and depth.
    Sep,
    /// One discriminator on the concatenated (C+1)-channel map.
    Joint,
}

impl InputLevel {
    pub const ALL: [InputLevel; 6] = [
        InputLevel::Off,
        InputLevel::AdvOnly,
        InputLevel::Gd,
        InputLevel::GdPlusD,
        InputLevel::GdPlusS,
        InputLevel::GdPlusSd,
    ];

    /// Column label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            InputLevel::Off => "na",
            InputLevel::AdvOnly => "cg-proxy",
            InputLevel::Gd => "gd",
            InputLevel::GdPlusD => "+d",
            InputLevel::GdPlusS => "+s",
            InputLevel::GdPlusSd => "+sd",
        }
    }

    fn key(self) -> &'static str {
        match self {
            InputLevel::Off => "off",
            InputLevel::AdvOnly => "adv_only",
            InputLevel::Gd => "gd",
            InputLevel::GdPlusD => "gd_plus_d",
            InputLevel::GdPlusS => "gd_plus_s",
            InputLevel::GdPlusSd => "gd_plus_sd",
        }
    }
}

impl OutputLevel {
    pub const ALL: [OutputLevel; 5] = [
        OutputLevel::Off,
        OutputLevel::Ss,
        OutputLevel::Depth,
        OutputLevel::Sep,
        OutputLevel::Joint,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OutputLevel::Off => "na",
            OutputLevel::Ss => "ss",
            OutputLevel::Depth => "depth",
            OutputLevel::Sep => "sep",
            OutputLevel::Joint => "joint",
        }
    }

    fn key(self) -> &'static str {
        match self {
            OutputLevel::Off => "off",
            other => other.label(),
        }
    }
}

fn parse_key<T: Copy>(s: &str, all: &[T], key: fn(T) -> &'static str, what: &str) -> Result<T> {
    let norm = s.trim().to_ascii_lowercase().replace('-', "_");
    all.iter().copied().find(|&v| key(v) == norm).ok_or_else(|| {
        Error::Config(format!(
            "unknown {what} `{s}`; expected one of {}",
            all.iter().map(|&v| key(v)).collect::<Vec<_>>().join(", ")
        ))
    })
}

impl FromStr for InputLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_key(s, &InputLevel::ALL, InputLevel::key, "input level")
    }
}

impl FromStr for OutputLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_key(s, &OutputLevel::ALL, OutputLevel::key, "output level")
    }
}

impl TryFrom<String> for InputLevel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InputLevel> for String {
    fn from(v: InputLevel) -> String {
        v.key().to_string()
    }
}

impl fmt::Display for InputLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl TryFrom<String> for OutputLevel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OutputLevel> for String {
    fn from(v: OutputLevel) -> String {
        v.key().to_string()
    }
}

impl fmt::Display for OutputLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub input: InputLevel,
    pub output: OutputLevel,
}

impl Variant {
    pub const BASELINE: Variant = Variant {
        input: InputLevel::Off,
        output: OutputLevel::Off,
    };
    pub const FULL: Variant = Variant {
        input: InputLevel::GdPlusSd,
        output: OutputLevel::Joint,
    };

    pub fn new(input: InputLevel, output: OutputLevel) -> Self {
        Variant { input, output }
    }

    /// Short name, e.g. `+sd/joint`; the baseline is `na`.
    pub fn label(&self) -> String {
        match (self.input, self.output) {
            (InputLevel::Off, OutputLevel::Off) => "na".into(),
            (i, OutputLevel::Off) => i.label().into(),
            (InputLevel::Off, o) => o.label().into(),
            (i, o) => format!("{}/{}", i.label(), o.label()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.input, self.output)
    }
}

/// Parses `input:output` (e.g. `gd_plus_sd:joint`) or a table label
/// (`na`, `+sd`, `joint`, `+sd/joint`).
impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some((i, o)) = s.split_once(':') {
            return Ok(Variant::new(i.parse()?, o.parse()?));
        }
        let t = s.trim();
        let by_label = |i: &str, o: &str| {
            let input = InputLevel::ALL.iter().copied().find(|v| v.label() == i)?;
            let output = OutputLevel::ALL.iter().copied().find(|v| v.label() == o)?;
            Some(Variant::new(input, output))
        };
        let found = match t.split_once('/') {
            Some((i, o)) => by_label(i, o),
            None => by_label(t, "na").or_else(|| by_label("na", t)),
        };
        found.ok_or_else(|| {
            Error::Config(format!(
                "variant `{s}` is neither <input>:<output> nor a label such as na, +sd, joint or +sd/joint"
            ))
        })
    }
}

/// Channels of the task output a discriminator looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    /// C-channel softmax.
    Segmentation,
    /// 1-channel normalized depth.
    Depth,
    /// C+1 channels: softmax then depth.
    Joint,
}

impl OutputMap {
    pub fn channels(self, num_classes: usize) -> usize {
        match self {
            OutputMap::Segmentation => num_classes,
            OutputMap::Depth => 1,
            OutputMap::Joint => num_classes + 1,
        }
    }
}

/// Active-component manifest for one variant and class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    pub num_classes: usize,
    /// Transform network input channels, `None` when there is no transform.
    pub transform_in_channels: Option<usize>,
    pub transform_uses_semantics: bool,
    pub transform_uses_depth: bool,
    /// Segmentation/depth gradients reach the transform network.
    pub task_gradient_to_transform: bool,
    /// Image discriminator input channels.
    pub d_image_channels: Option<usize>,
    /// One entry per output-space discriminator.
    pub d_output: Vec<(OutputMap, usize)>,
}

impl Wiring {
    pub fn has_transform(&self) -> bool {
        self.transform_in_channels.is_some()
    }
}

pub fn variant_wiring(variant: Variant, num_classes: usize) -> Wiring {
    let c = num_classes;
    let (sem, depth) = match variant.input {
        InputLevel::GdPlusD => (false, true),
        InputLevel::GdPlusS => (true, false),
        InputLevel::GdPlusSd => (true, true),
        _ => (false, false),
    };
    let transform_in_channels = match variant.input {
        InputLevel::Off => None,
        _ => Some(3 + if sem { c } else { 0 } + if depth { 1 } else { 0 }),
    };
    let maps: &[OutputMap] = match variant.output {
        OutputLevel::Off => &[],
        OutputLevel::Ss => &[OutputMap::Segmentation],
        OutputLevel::Depth => &[OutputMap::Depth],
        OutputLevel::Sep => &[OutputMap::Segmentation, OutputMap::Depth],
        OutputLevel::Joint => &[OutputMap::Joint],
    };
    Wiring {
        num_classes: c,
        transform_in_channels,
        transform_uses_semantics: sem,
        transform_uses_depth: depth,
        task_gradient_to_transform: !matches!(variant.input, InputLevel::Off | InputLevel::AdvOnly),
        d_image_channels: transform_in_channels.map(|_| 3),
        d_output: maps.iter().map(|&m| (m, m.channels(c))).collect(),
    }
}
