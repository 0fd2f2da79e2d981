use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use glyphforge_core::eval::{ClassifierConfig, DistanceParams};
use glyphforge_core::train::TrainConfig;

use crate::CliError;

/// Settings for `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub num_styles: usize,
    pub radius: usize,
    pub threshold: f32,
    pub bin_width: f64,
    pub below_threshold: f64,
    pub seed: u64,
    /// Saved classifier to reuse; one is trained from the dataset when absent.
    pub classifier: Option<PathBuf>,
    pub classifier_training: ClassifierConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let d = DistanceParams::default();
        EvalSettings {
            num_styles: 100,
            radius: d.radius,
            threshold: d.threshold,
            bin_width: 5.0,
            below_threshold: 50.0,
            seed: 0,
            classifier: None,
            classifier_training: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSettings {
    pub bind: String,
    pub port: u16,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

/// Top-level config file. Every field is optional; command-line flags
/// override whatever the file sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub serve: ServeSettings,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            dataset: None,
            output_dir: PathBuf::from("glyphforge-out"),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            serve: ServeSettings::default(),
        }
    }
}

/// Removes `//` line comments and `/* */` block comments outside string
/// literals, keeping line structure so parse errors point at the right line.
pub fn strip_json_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_string = false;
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            match c {
                '\\' => {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                }
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match (c, chars.peek()) {
            ('"', _) => {
                in_string = true;
                out.push(c);
            }
            ('/', Some('/')) => {
                for n in chars.by_ref() {
                    if n == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            ('/', Some('*')) => {
                chars.next();
                let mut prev = ' ';
                for n in chars.by_ref() {
                    if n == '\n' {
                        out.push('\n');
                    }
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(&strip_json_comments(text)).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// Reads `path` if given, otherwise returns the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(CliConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn distance(&self) -> DistanceParams {
        DistanceParams {
            radius: self.eval.radius,
            threshold: self.eval.threshold,
        }
    }
}
