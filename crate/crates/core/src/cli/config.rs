//! Run configuration: one JSON document naming the method, the target and
//! every setting needed to reproduce the run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{SgldConfig, SiviConfig, UiviConfig};
use crate::family::FamilySpec;
use crate::targets::{
    banana_target, gaussian_target, logistic_target, multimodal_target, multinomial_target, synthetic_logistic,
    synthetic_multinomial, xshaped_target, GlmDataset, TargetPosterior,
};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Environment variable naming the root for relative dataset paths.
pub const DATA_DIR_ENV: &str = "SIVISM_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SiviSm,
    Sivi,
    Uivi,
    Sgld,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SiviSm => "sivi_sm",
            Method::Sivi => "sivi",
            Method::Uivi => "uivi",
            Method::Sgld => "sgld",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Comma-separated file, label in the last column. Relative paths are
    /// resolved against `SIVISM_DATA_DIR` when it is set.
    Csv {
        path: PathBuf,
        /// Keep only the first `limit` rows.
        #[serde(default)]
        limit: Option<usize>,
        /// For logistic targets: the label mapped to 1; others become 0.
        #[serde(default)]
        positive_label: Option<u32>,
    },
    Synthetic {
        n: usize,
        covariate_dim: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Multimodal,
    Xshaped,
    Banana,
    Gaussian {
        mean: Vec<f64>,
        /// Row-major covariance.
        cov: Vec<f64>,
    },
    Logistic {
        data: DataSource,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Multinomial {
        data: DataSource,
        classes: usize,
    },
}

fn default_alpha() -> f64 {
    0.01
}

fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            return Path::new(&root).join(path);
        }
    }
    path.to_path_buf()
}

impl DataSource {
    pub fn load(&self, classes: Option<usize>) -> Result<GlmDataset> {
        match self {
            DataSource::Csv {
                path,
                limit,
                positive_label,
            } => {
                let mut d = GlmDataset::from_csv(resolve(path))?;
                if let Some(n) = limit {
                    d = d.split_at(*n).0;
                }
                if let Some(p) = positive_label {
                    d = d.binarize(*p);
                }
                Ok(d)
            }
            DataSource::Synthetic { n, covariate_dim, seed } => Ok(match classes {
                None => synthetic_logistic(*n, *covariate_dim, *seed).0,
                Some(r) => synthetic_multinomial(*n, *covariate_dim, r, *seed),
            }),
        }
    }
}

impl TargetSpec {
    pub fn build(&self) -> Result<Box<dyn TargetPosterior>> {
        Ok(match self {
            TargetSpec::Multimodal => Box::new(multimodal_target()),
            TargetSpec::Xshaped => Box::new(xshaped_target()),
            TargetSpec::Banana => Box::new(banana_target()),
            TargetSpec::Gaussian { mean, cov } => {
                let d = mean.len();
                if d == 0 || cov.len() != d * d {
                    return Err(Error::config("target.cov", format!("expected {} entries", d * d)));
                }
                let m = nalgebra::DMatrix::from_row_slice(d, d, cov);
                if m.clone().cholesky().is_none() {
                    return Err(Error::config("target.cov", "must be symmetric positive definite"));
                }
                Box::new(gaussian_target(mean.clone(), cov.clone()))
            }
            TargetSpec::Logistic { data, alpha } => Box::new(logistic_target(Arc::new(data.load(None)?), *alpha)?),
            TargetSpec::Multinomial { data, classes } => {
                Box::new(multinomial_target(Arc::new(data.load(Some(*classes))?), *classes)?)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetSpec::Multimodal => "multimodal",
            TargetSpec::Xshaped => "xshaped",
            TargetSpec::Banana => "banana",
            TargetSpec::Gaussian { .. } => "gaussian",
            TargetSpec::Logistic { .. } => "logistic",
            TargetSpec::Multinomial { .. } => "multinomial",
        }
    }

    /// The 2-D synthetic targets.
    pub fn is_toy(&self) -> bool {
        matches!(self, TargetSpec::Multimodal | TargetSpec::Xshaped | TargetSpec::Banana)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Exact target draws used for a k-NN KL summary when the target admits
    /// exact sampling; 0 disables it.
    pub kl_reference_samples: usize,
    pub kl_neighbours: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            kl_reference_samples: 10_000,
            kl_neighbours: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    pub target: TargetSpec,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sivi: Option<SiviConfig>,
    #[serde(default)]
    pub uivi: Option<UiviConfig>,
    #[serde(default)]
    pub sgld: Option<SgldConfig>,
    /// Draws written to `samples.csv` (variational methods only).
    #[serde(default = "default_output_samples")]
    pub output_samples: usize,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn default_output_samples() -> usize {
    10_000
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Fills every optional section for the chosen method, propagates the
    /// run seed and validates, so the echo reproduces the run on its own.
    pub fn resolve(mut self, x_dim: usize) -> Result<Self> {
        let seed = self.seed;
        let toy = self.target.is_toy();
        let anneal_default = match self.target {
            TargetSpec::Multimodal | TargetSpec::Xshaped => {
                Some(crate::targets::AnnealSchedule::new(0.01, 10_000).expect("valid"))
            }
            _ => None,
        };
        match self.method {
            Method::SiviSm => {
                let mut t = self.train.take().unwrap_or_else(|| {
                    let mut t = TrainConfig {
                        anneal: anneal_default,
                        ..Default::default()
                    };
                    if toy {
                        // settles the alternating updates once the shape is found
                        t.lr_decay = Some(crate::diffcore::StepDecay { every: 10_000, gamma: 0.5 });
                    } else {
                        t.iterations = 20_000;
                    }
                    t
                });
                t.seed = seed;
                t.validate()?;
                t.f_spec(x_dim)?;
                self.train = Some(t);
            }
            Method::Sivi => {
                let mut s = self.sivi.take().unwrap_or_else(|| SiviConfig {
                    anneal: anneal_default,
                    aux_samples: if toy { 50 } else { 100 },
                    iterations: if toy { 50_000 } else { 20_000 },
                    ..Default::default()
                });
                s.seed = seed;
                s.validate()?;
                self.sivi = Some(s);
            }
            Method::Uivi => {
                let mut u = self.uivi.take().unwrap_or_else(|| UiviConfig {
                    anneal: anneal_default,
                    iterations: if toy { 50_000 } else { 20_000 },
                    ..Default::default()
                });
                u.seed = seed;
                u.validate()?;
                self.uivi = Some(u);
            }
            Method::Sgld => {
                let mut s = self.sgld.take().unwrap_or_default();
                s.seed = seed;
                s.validate()?;
                self.sgld = Some(s);
            }
        }
        if self.method != Method::Sgld {
            let fam = self.family.take().unwrap_or_else(|| {
                if toy {
                    FamilySpec::toy(x_dim)
                } else {
                    FamilySpec::regression(x_dim)
                }
            });
            if fam.mu_widths.last() != Some(&x_dim) {
                return Err(Error::config(
                    "family.mu_widths",
                    format!("last width must equal the target dimension {x_dim}"),
                ));
            }
            self.family = Some(fam);
        }
        Ok(self)
    }

    pub fn data_batch(&self) -> Option<usize> {
        match self.method {
            Method::SiviSm => self.train.as_ref().and_then(|t| t.data_batch),
            Method::Sivi => self.sivi.as_ref().and_then(|t| t.data_batch),
            Method::Uivi => self.uivi.as_ref().and_then(|t| t.data_batch),
            Method::Sgld => self.sgld.as_ref().and_then(|t| t.data_batch),
        }
    }
}

/// Best-effort field name from a serde error message.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    format!("line {} column {}", e.line(), e.column())
}
