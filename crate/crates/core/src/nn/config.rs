//! Network descriptions and their line-oriented text form.
//!
//! One layer per line, `kind key=value ...`, preceded by `input` and
//! `classes` header lines. `#` starts a comment. Example:
//!
//! ```text
//! input 3x32x32
//! classes 10
//! conv depth=192 kernel=5 stride=1 padding=2 weight=32 act=32
//! batchnorm eps=0.0001 momentum=0.1
//! relu
//! fc width=10 weight=32 act=32
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Bit width of a layer's weights or input activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    /// Sign binarization.
    Binary,
    /// Uniform `k`-bit quantization, `2 <= k <= 8`.
    Quant(u8),
    /// 32-bit float.
    Full,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Binary => f.write_str("1"),
            Precision::Quant(k) => write!(f, "q{k}"),
            Precision::Full => f.write_str("32"),
        }
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "1" => Ok(Precision::Binary),
            "32" => Ok(Precision::Full),
            q if q.starts_with('q') => match q[1..].parse::<u8>() {
                Ok(k) if (2..=8).contains(&k) => Ok(Precision::Quant(k)),
                _ => Err(format!("bad quantized precision `{s}` (expected q2..q8)")),
            },
            _ => Err(format!("bad precision `{s}` (expected 1, q<k> or 32)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv {
        depth: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        weight: Precision,
        act: Precision,
    },
    Fc {
        width: usize,
        weight: Precision,
        act: Precision,
    },
    BatchNorm {
        eps: f32,
        momentum: f32,
    },
    Relu,
    HardTanh,
    BinAct,
    /// `kernel == 0` means global pooling.
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dropout {
        p: f32,
    },
}

impl LayerSpec {
    pub fn is_weighted(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    pub fn precisions_mut(&mut self) -> Option<(&mut Precision, &mut Precision)> {
        match self {
            LayerSpec::Conv { weight, act, .. } | LayerSpec::Fc { weight, act, .. } => Some((weight, act)),
            _ => None,
        }
    }

    fn to_line(self) -> String {
        match self {
            LayerSpec::Conv { depth, kernel, stride, padding, weight, act } => format!(
                "conv depth={depth} kernel={kernel} stride={stride} padding={padding} weight={weight} act={act}"
            ),
            LayerSpec::Fc { width, weight, act } => format!("fc width={width} weight={weight} act={act}"),
            LayerSpec::BatchNorm { eps, momentum } => format!("batchnorm eps={eps} momentum={momentum}"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::HardTanh => "hardtanh".into(),
            LayerSpec::BinAct => "binact".into(),
            LayerSpec::MaxPool { kernel: 0, .. } => "maxpool global".into(),
            LayerSpec::AvgPool { kernel: 0, .. } => "avgpool global".into(),
            LayerSpec::MaxPool { kernel, stride, padding } => {
                format!("maxpool kernel={kernel} stride={stride} padding={padding}")
            }
            LayerSpec::AvgPool { kernel, stride, padding } => {
                format!("avgpool kernel={kernel} stride={stride} padding={padding}")
            }
            LayerSpec::Dropout { p } => format!("dropout p={p}"),
        }
    }
}

/// Weak-BNN precision layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// First and last weighted layers full precision, the rest binary.
    SemiBinary,
    /// Every weighted layer binary in weights and input activations.
    AllBinary,
    /// Q-bit weights, binary activations.
    WeightQuantized(u8),
    /// Binary weights, Q-bit activations.
    ActivationQuantized(u8),
    /// All binary except the first layer's input activations.
    ExceptInput,
    /// Everything full precision.
    Real,
}

impl FromStr for Profile {
    type Err = Error;

    /// `sb`, `ab`, `wq<k>`, `aq<k>`, `ei` or `real`.
    fn from_str(s: &str) -> Result<Self> {
        let bits = |rest: &str| -> Result<u8> {
            let k: u8 = rest.parse().map_err(|_| Error::InvalidArgument(format!("bad profile `{s}`")))?;
            super::ops::check_bits(k)?;
            Ok(k)
        };
        match s {
            "sb" => Ok(Profile::SemiBinary),
            "ab" => Ok(Profile::AllBinary),
            "ei" => Ok(Profile::ExceptInput),
            "real" => Ok(Profile::Real),
            _ if s.starts_with("wq") => Ok(Profile::WeightQuantized(bits(&s[2..])?)),
            _ if s.starts_with("aq") => Ok(Profile::ActivationQuantized(bits(&s[2..])?)),
            _ => Err(Error::InvalidArgument(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Per-sample input shape, `[C, H, W]` or `[D]`.
    pub input: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

fn parse_kv<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        line,
        message: format!("bad value `{raw}` for `{key}`"),
    })
}

fn take<T: FromStr>(line: usize, kv: &mut Vec<(String, String)>, key: &str, default: Option<T>) -> Result<T> {
    match kv.iter().position(|(k, _)| k == key) {
        Some(i) => {
            let (_, v) = kv.remove(i);
            parse_kv(line, key, &v)
        }
        None => default.ok_or_else(|| Error::Config {
            line,
            message: format!("missing `{key}`"),
        }),
    }
}

fn take_precision(line: usize, kv: &mut Vec<(String, String)>, key: &str) -> Result<Precision> {
    match kv.iter().position(|(k, _)| k == key) {
        Some(i) => {
            let (_, v) = kv.remove(i);
            v.parse().map_err(|message| Error::Config { line, message })
        }
        None => Ok(Precision::Full),
    }
}

fn parse_pool(line: usize, words: &[&str], kv: &mut Vec<(String, String)>) -> Result<(usize, usize, usize)> {
    if words.get(1) == Some(&"global") {
        return Ok((0, 1, 0));
    }
    let kernel = take(line, kv, "kernel", None)?;
    let stride = take(line, kv, "stride", Some(kernel))?;
    let padding = take(line, kv, "padding", Some(0))?;
    Ok((kernel, stride, padding))
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut input = None;
        let mut classes = None;
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let mut kv: Vec<(String, String)> = Vec::new();
            for w in &words[1..] {
                if let Some((k, v)) = w.split_once('=') {
                    kv.push((k.to_string(), v.to_string()));
                } else if *w != "global" && words[0] != "input" && words[0] != "classes" {
                    return Err(Error::Config {
                        line,
                        message: format!("expected key=value, got `{w}`"),
                    });
                }
            }
            let spec = match words[0] {
                "input" => {
                    let dims = words.get(1).ok_or_else(|| Error::Config {
                        line,
                        message: "missing input shape".into(),
                    })?;
                    let dims = dims
                        .split('x')
                        .map(|d| parse_kv::<usize>(line, "input", d))
                        .collect::<Result<Vec<_>>>()?;
                    if dims.is_empty() || dims.contains(&0) {
                        return Err(Error::Config { line, message: "input dims must be positive".into() });
                    }
                    input = Some(dims);
                    continue;
                }
                "classes" => {
                    let c = words.get(1).map(|c| parse_kv::<usize>(line, "classes", c)).transpose()?;
                    classes = c;
                    continue;
                }
                "conv" => LayerSpec::Conv {
                    depth: take(line, &mut kv, "depth", None)?,
                    kernel: take(line, &mut kv, "kernel", None)?,
                    stride: take(line, &mut kv, "stride", Some(1))?,
                    padding: take(line, &mut kv, "padding", Some(0))?,
                    weight: take_precision(line, &mut kv, "weight")?,
                    act: take_precision(line, &mut kv, "act")?,
                },
                "fc" => LayerSpec::Fc {
                    width: take(line, &mut kv, "width", None)?,
                    weight: take_precision(line, &mut kv, "weight")?,
                    act: take_precision(line, &mut kv, "act")?,
                },
                "batchnorm" => LayerSpec::BatchNorm {
                    eps: take(line, &mut kv, "eps", Some(1e-4))?,
                    momentum: take(line, &mut kv, "momentum", Some(0.1))?,
                },
                "relu" => LayerSpec::Relu,
                "hardtanh" => LayerSpec::HardTanh,
                "binact" => LayerSpec::BinAct,
                "maxpool" => {
                    let (kernel, stride, padding) = parse_pool(line, &words, &mut kv)?;
                    LayerSpec::MaxPool { kernel, stride, padding }
                }
                "avgpool" => {
                    let (kernel, stride, padding) = parse_pool(line, &words, &mut kv)?;
                    LayerSpec::AvgPool { kernel, stride, padding }
                }
                "dropout" => {
                    let p: f32 = take(line, &mut kv, "p", Some(0.5))?;
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::Config { line, message: format!("dropout p={p} outside [0, 1)") });
                    }
                    LayerSpec::Dropout { p }
                }
                other => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown layer kind `{other}`"),
                    })
                }
            };
            if let Some((k, _)) = kv.first() {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{k}`"),
                });
            }
            layers.push(spec);
        }
        let input = input.ok_or_else(|| Error::Config { line: 0, message: "missing `input` line".into() })?;
        let classes = classes.ok_or_else(|| Error::Config { line: 0, message: "missing `classes` line".into() })?;
        if classes < 2 {
            return Err(Error::Config { line: 0, message: "need at least two classes".into() });
        }
        Ok(NetworkConfig { input, classes, layers })
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.input.iter().map(|d| d.to_string()).collect();
        let mut out = format!("input {}\nclasses {}\n", dims.join("x"), self.classes);
        for l in &self.layers {
            out.push_str(&l.to_line());
            out.push('\n');
        }
        out
    }

    /// Rewrites the precision flags of every weighted layer.
    pub fn with_profile(mut self, profile: Profile) -> Self {
        let weighted: Vec<usize> = (0..self.layers.len()).filter(|&i| self.layers[i].is_weighted()).collect();
        let first = weighted.first().copied();
        let last = weighted.last().copied();
        for &i in &weighted {
            let (w, a) = self.layers[i].precisions_mut().unwrap();
            let (nw, na) = match profile {
                Profile::Real => (Precision::Full, Precision::Full),
                Profile::AllBinary => (Precision::Binary, Precision::Binary),
                Profile::SemiBinary if Some(i) == first || Some(i) == last => (Precision::Full, Precision::Full),
                Profile::SemiBinary => (Precision::Binary, Precision::Binary),
                Profile::WeightQuantized(k) => (Precision::Quant(k), Precision::Binary),
                Profile::ActivationQuantized(k) => (Precision::Binary, Precision::Quant(k)),
                Profile::ExceptInput if Some(i) == first => (Precision::Binary, Precision::Full),
                Profile::ExceptInput => (Precision::Binary, Precision::Binary),
            };
            *w = nw;
            *a = na;
        }
        self
    }

    /// Scales the width of every weighted layer but the last by `factor`
    /// (0.5 for the Tiny variants, 0.1 for Nano), keeping at least one unit.
    pub fn scaled_width(mut self, factor: f64) -> Self {
        let last = self.layers.iter().rposition(|l| l.is_weighted());
        for (i, l) in self.layers.iter_mut().enumerate() {
            if Some(i) == last {
                continue;
            }
            match l {
                LayerSpec::Conv { depth: n, .. } | LayerSpec::Fc { width: n, .. } => {
                    *n = (libm::round(*n as f64 * factor) as usize).max(1);
                }
                _ => {}
            }
        }
        self
    }
}

/// Compact network-in-network transcription used for CIFAR-10.
pub const NIN_CIFAR: &str = "\
# Self-designed network-in-network, one line per table row
input 3x32x32
classes 1000
conv depth=192 kernel=5 stride=1 padding=2
batchnorm eps=0.0001 momentum=0.1
relu
batchnorm eps=0.0001 momentum=0.1
dropout p=0.5
conv depth=96 kernel=1 stride=1 padding=0
relu
maxpool kernel=3 stride=2 padding=1
batchnorm eps=0.0001 momentum=0.1
dropout p=0.5
conv depth=192 kernel=5 stride=1 padding=2
relu
batchnorm eps=0.0001 momentum=0.1
dropout p=0.5
conv depth=192 kernel=1 stride=1 padding=0
relu
avgpool kernel=3 stride=2 padding=1
batchnorm eps=0.0001 momentum=0.1
dropout p=0.5
conv depth=192 kernel=3 stride=1 padding=1
relu
batchnorm eps=0.0001 momentum=0.1
conv depth=192 kernel=1 stride=1 padding=0
relu
batchnorm eps=0.0001 momentum=0.1
conv depth=192 kernel=1 stride=1 padding=0
relu
avgpool kernel=8 stride=1 padding=0
fc width=1000
";

pub const ALEXNET: &str = "\
input 3x227x227
classes 1000
conv depth=96 kernel=11 stride=4 padding=0
relu
maxpool kernel=3 stride=2
batchnorm
conv depth=256 kernel=5 stride=1 padding=2
relu
maxpool kernel=3 stride=2
batchnorm
conv depth=384 kernel=3 stride=1 padding=1
relu
conv depth=384 kernel=3 stride=1 padding=1
relu
conv depth=256 kernel=3 stride=1 padding=1
relu
maxpool kernel=3 stride=2
dropout p=0.5
fc width=4096
relu
dropout p=0.5
fc width=4096
relu
fc width=1000
";

/// ResNet-18 table rows in order. Shortcut connections are not expressible
/// in a sequential config, so the 1x1 projection convolutions appear inline
/// exactly as listed.
pub const RESNET18: &str = "\
input 3x224x224
classes 1000
conv depth=64 kernel=7 stride=2 padding=3
batchnorm eps=0.00001 momentum=0.1
relu
maxpool kernel=3 stride=2
conv depth=64 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=64 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=64 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=64 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=128 kernel=3 stride=2 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=128 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=128 kernel=1 stride=2
batchnorm eps=0.00001 momentum=0.1
conv depth=128 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=128 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=256 kernel=3 stride=2 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=256 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=256 kernel=1 stride=2
batchnorm eps=0.00001 momentum=0.1
conv depth=256 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=256 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=512 kernel=3 stride=2 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=512 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
conv depth=512 kernel=1 stride=2
batchnorm eps=0.00001 momentum=0.1
conv depth=512 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
relu
conv depth=512 kernel=3 stride=1 padding=1
batchnorm eps=0.00001 momentum=0.1
avgpool global
fc width=1000
";
