//! Trained-model files.
//!
//! A flat `key = value` text format with one field per line and every float
//! written as `{:.16e}`, so save → load → save reproduces the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::ann::{Activation, MlpArchitecture, MlpParams};
use crate::augmented::{AugmentedModel, NormalizationMaps};
use crate::data::Dataset;
use crate::dynamics::{family, FirstPrinciplesModel};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: AugmentedModel,
    /// Fingerprint of the configuration that produced the model.
    pub config_fingerprint: String,
    /// Path of the training history, relative to the artifact.
    pub history: Option<String>,
}

/// 64-bit FNV-1a of `text`, as 16 hex digits. Stable across platforms and
/// toolchains, unlike the std hasher.
pub fn fingerprint(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ints(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl ModelArtifact {
    pub fn new(model: AugmentedModel, config_fingerprint: impl Into<String>) -> Self {
        Self {
            model,
            config_fingerprint: config_fingerprint.into(),
            history: None,
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let arch = m.ann.architecture();
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("format", FORMAT_VERSION.to_string());
        line("family", m.fp.dynamics().name().to_string());
        line("sample_time", format!("{:.16e}", m.fp.sample_time()));
        line("config_fingerprint", self.config_fingerprint.clone());
        line("history", self.history.clone().unwrap_or_default());
        line(
            "parameter_names",
            m.fp.dynamics().parameter_names().join(" "),
        );
        line("theta", floats(&m.fp.theta));
        line("theta_nominal", floats(&m.fp.theta_nominal));
        line("state_scale", floats(&m.norm.state_scale));
        line("input_scale", floats(&m.norm.input_scale));
        line("augmented_states", ints(m.augmented_states()));
        line("ann_input", arch.input.to_string());
        line("ann_hidden", ints(&arch.hidden));
        line("ann_output", arch.output.to_string());
        line("ann_activation", "tanh".to_string());
        line("eta", floats(&m.ann.flatten()));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{l}`"),
            })?;
            let k = k.trim().to_string();
            if fields
                .insert(k.clone(), (line_no, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        let mut f = Fields(fields);

        let version: u32 = f.scalar("format")?;
        if version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "artifact format {version}, expected {FORMAT_VERSION}"
            )));
        }
        let dynamics = family(&f.string("family")?, f.scalar("sample_time")?)?;
        let names = f.string("parameter_names")?;
        let expected = dynamics.parameter_names().join(" ");
        if names != expected {
            return Err(Error::Incompatible(format!(
                "parameter names `{names}` do not match family (`{expected}`)"
            )));
        }
        let fp = FirstPrinciplesModel::new(dynamics, f.floats("theta_nominal")?)
            .and_then(|fp| fp.with_theta(f.floats("theta")?))
            .map_err(incompatible)?;
        let norm = NormalizationMaps {
            state_scale: f.floats("state_scale")?,
            input_scale: f.floats("input_scale")?,
        };
        let augmented = f.ints("augmented_states")?;
        let activation = match f.string("ann_activation")?.as_str() {
            "tanh" => Activation::Tanh,
            other => return Err(Error::Incompatible(format!("unknown activation `{other}`"))),
        };
        let arch = MlpArchitecture {
            input: f.scalar("ann_input")?,
            hidden: f.ints("ann_hidden")?,
            output: f.scalar("ann_output")?,
            activation,
        };
        let ann = MlpParams::unflatten(&arch, &f.floats("eta")?).map_err(incompatible)?;
        let config_fingerprint = f.string("config_fingerprint")?;
        let history = Some(f.string("history")?).filter(|h| !h.is_empty());
        if let Some((k, (line, _))) = f.0.into_iter().next() {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{k}`"),
            });
        }
        let model = AugmentedModel::new(fp, ann, norm, augmented).map_err(incompatible)?;
        Ok(Self {
            model,
            config_fingerprint,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Checks that `data` has the model's input and state dimensions.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        let (nu, nx) = (self.model.n_u(), self.model.n_x());
        if data.n_u() != nu || data.n_y() != nx {
            return Err(Error::Incompatible(format!(
                "model expects {nu} inputs and {nx} outputs, data has {} and {}",
                data.n_u(),
                data.n_y()
            )));
        }
        Ok(())
    }
}

fn incompatible(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Incompatible(m),
        other => other,
    }
}

struct Fields(BTreeMap<String, (u64, String)>);

impl Fields {
    fn string(&mut self, key: &str) -> Result<String> {
        self.0
            .remove(key)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Incompatible(format!("missing field `{key}`")))
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let (line, v) = self
            .0
            .remove(key)
            .ok_or_else(|| Error::Incompatible(format!("missing field `{key}`")))?;
        v.split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad value `{t}` for `{key}`"),
                })
            })
            .collect()
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let mut v = self.parse_list(key)?;
        if v.len() != 1 {
            return Err(Error::Incompatible(format!("`{key}` must hold one value")));
        }
        Ok(v.remove(0))
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        self.parse_list(key)
    }

    fn ints(&mut self, key: &str) -> Result<Vec<usize>> {
        self.parse_list(key)
    }
}
