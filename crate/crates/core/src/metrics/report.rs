//! JSON metric report with fixed field names.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{boundary, flow, paired, temporal};
use crate::error::Result;
use crate::video::{MaskVideo, VideoTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Seed of the frame-embedding projection.
    #[serde(default = "default_embed_seed")]
    pub embed_seed: u64,
    #[serde(default = "default_band")]
    pub band_inner: usize,
    #[serde(default = "default_band")]
    pub band_outer: usize,
}

fn default_embed_seed() -> u64 {
    temporal::DEFAULT_EMBED_SEED
}

fn default_band() -> usize {
    2
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            embed_seed: default_embed_seed(),
            band_inner: default_band(),
            band_outer: default_band(),
        }
    }
}

/// A summary value and the per-frame (or per-frame-pair) population it was
/// averaged from. Infinite values serialize as the strings `"inf"`/`"-inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricValue {
    #[serde(serialize_with = "ser_float", deserialize_with = "de_float")]
    pub value: f64,
    #[serde(serialize_with = "ser_floats", deserialize_with = "de_floats")]
    pub per_frame: Vec<f64>,
}

impl MetricValue {
    pub fn from_population(per_frame: Vec<f64>) -> Self {
        Self {
            value: paired::mean(&per_frame),
            per_frame,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonFloat {
    Number(f64),
    Text(String),
}

fn to_json(v: f64) -> JsonFloat {
    if v.is_finite() {
        JsonFloat::Number(v)
    } else if v.is_nan() {
        JsonFloat::Text("nan".into())
    } else if v > 0.0 {
        JsonFloat::Text("inf".into())
    } else {
        JsonFloat::Text("-inf".into())
    }
}

fn from_json<E: serde::de::Error>(v: JsonFloat) -> std::result::Result<f64, E> {
    match v {
        JsonFloat::Number(x) => Ok(x),
        JsonFloat::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("invalid number {other:?}"))),
        },
    }
}

fn ser_float<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    to_json(*v).serialize(s)
}

fn de_float<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    from_json(JsonFloat::deserialize(d)?)
}

fn ser_floats<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| to_json(*x)))
}

fn de_floats<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<JsonFloat>::deserialize(d)?.into_iter().map(from_json).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_sim: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_pres: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplacian_var: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenengrad: Option<MetricValue>,
}

impl MetricReport {
    /// Every applicable metric of `pred`: paired ones when a reference is
    /// given (motion preservation restricted to `region`), boundary ones when
    /// a mask is given.
    pub fn evaluate(
        pred: &VideoTensor,
        reference: Option<&VideoTensor>,
        mask: Option<&MaskVideo>,
        region: Option<&MaskVideo>,
        cfg: &MetricConfig,
    ) -> Result<Self> {
        let mut report = MetricReport::default();
        if let Some(r) = reference {
            report.psnr = Some(MetricValue::from_population(paired::psnr_per_frame(pred, r)?));
            report.ssim = Some(MetricValue::from_population(paired::ssim_per_frame(pred, r)?));
            report.perceptual = Some(MetricValue::from_population(paired::perceptual_per_frame(pred, r)?));
            report.rmse = Some(MetricValue::from_population(paired::rmse_per_frame(pred, r)?));
            if pred.frames() >= 2 {
                report.motion_pres = Some(MetricValue::from_population(flow::motion_preservation_per_pair(
                    pred, r, region,
                )?));
            }
        }
        if pred.frames() >= 2 {
            report.frame_sim = Some(MetricValue::from_population(temporal::frame_similarity_per_pair(
                pred,
                cfg.embed_seed,
            )?));
        }
        if let Some(m) = mask {
            let b = boundary::boundary_quality(pred, m, cfg.band_inner, cfg.band_outer)?;
            let valid: Vec<(f64, f64)> = b.per_frame.iter().flatten().copied().collect();
            report.laplacian_var = Some(MetricValue {
                value: b.laplacian_var,
                per_frame: valid.iter().map(|v| v.0).collect(),
            });
            report.tenengrad = Some(MetricValue {
                value: b.tenengrad,
                per_frame: valid.iter().map(|v| v.1).collect(),
            });
        }
        Ok(report)
    }
}
