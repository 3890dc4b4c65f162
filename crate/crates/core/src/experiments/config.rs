use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LayoutSpec;
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::losses::LossWeights;
use crate::metrics::GammaForm;

/// Every knob of a training/evaluation run, read from a TOML file.
///
/// Missing keys take the defaults of [`ExperimentConfig::default`]; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `"reference"` or `"large"`; ignored when `layout` is given.
    pub scenario: String,
    /// Inline floor plan and walk.
    pub layout: Option<LayoutSpec>,
    #[serde(with = "feature_name")]
    pub feature: FeatureKind,
    /// Defaults to the per-feature value when absent.
    pub learning_rate: Option<f64>,
    /// Defaults to the per-feature value when absent.
    pub lambda_cc: Option<f64>,
    pub lambda_dt: f64,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// Seed for noise injection and the train/test split.
    pub data_seed: u64,
    pub split: f64,
    pub grid_spacing: f64,
    pub ue_height: f64,
    pub dt_height: f64,
    /// UE height used to synthesize the test split; the training height when absent.
    pub inference_height: Option<f64>,
    /// Displacement of every AP in the digital twin, meters.
    pub ap_shift: [f64; 3],
    pub snr_db: f64,
    pub taps: usize,
    pub t_close: f64,
    pub t_far: f64,
    pub margin: f64,
    pub triplet_batch: usize,
    pub dt_batch: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub bbb_lambda_cc: f64,
    pub lambda_bi: f64,
    pub lambda_box: f64,
    /// Percentile of all per-AP powers used as line-of-sight threshold.
    pub bbb_percentile: f64,
    pub bbb_power_margin_db: f64,
    pub bbb_distance_margin: f64,
    #[serde(with = "gamma_name")]
    pub gamma: GammaForm,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "reference".into(),
            layout: None,
            feature: FeatureKind::Power,
            learning_rate: None,
            lambda_cc: None,
            lambda_dt: 1.0,
            iterations: 5000,
            seeds: (0..10).collect(),
            data_seed: 2024,
            split: 0.8,
            grid_spacing: 0.5,
            ue_height: 1.5,
            dt_height: 1.5,
            inference_height: None,
            ap_shift: [0.0; 3],
            snr_db: 25.0,
            taps: 13,
            t_close: 2.0,
            t_far: 2.0,
            margin: 0.9,
            triplet_batch: 256,
            dt_batch: 256,
            hidden: vec![256; 4],
            dropout: 0.15,
            bbb_lambda_cc: 1.0,
            lambda_bi: 1.0,
            lambda_box: 1.0,
            bbb_percentile: 50.0,
            bbb_power_margin_db: 3.0,
            bbb_distance_margin: 1.0,
            gamma: GammaForm::Standard,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Config {
                line,
                msg: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} must lie in (0, 1)", self.split));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.grid_spacing > 0.0) {
            return bad("grid spacing must be positive".into());
        }
        if self.taps == 0 {
            return bad("taps must be at least 1".into());
        }
        if !(self.t_close >= 0.0 && self.t_close <= self.t_far) {
            return bad("need 0 <= t_close <= t_far".into());
        }
        if self.triplet_batch == 0 || self.dt_batch == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        if !(0.0..=100.0).contains(&self.bbb_percentile) {
            return bad("bbb_percentile must lie in [0, 100]".into());
        }
        self.weights()?;
        LossWeights::new(self.bbb_lambda_cc, 0.0, self.lambda_bi, self.lambda_box)?;
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0) {
                return bad("learning rate must be positive".into());
            }
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(self.feature.default_learning_rate())
    }

    /// Weights of the proposed objective.
    pub fn weights(&self) -> Result<LossWeights> {
        LossWeights::new(
            self.lambda_cc.unwrap_or(self.feature.default_lambda_cc()),
            self.lambda_dt,
            0.0,
            0.0,
        )
    }

    pub fn test_height(&self) -> f64 {
        self.inference_height.unwrap_or(self.ue_height)
    }
}

mod feature_name {
    use super::FeatureKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &FeatureKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FeatureKind, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(|e: crate::error::Error| serde::de::Error::custom(e.to_string()))
    }
}

mod gamma_name {
    use super::GammaForm;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &GammaForm, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match g {
            GammaForm::Standard => "standard",
            GammaForm::Literal => "literal",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GammaForm, D::Error> {
        match String::deserialize(d)?.as_str() {
            "standard" => Ok(GammaForm::Standard),
            "literal" => Ok(GammaForm::Literal),
            other => Err(serde::de::Error::custom(format!(
                "unknown gamma form {other:?} (expected \"standard\" or \"literal\")"
            ))),
        }
    }
}
