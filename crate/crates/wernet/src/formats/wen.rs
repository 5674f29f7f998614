//! `WEN1` encoder checkpoints. The header names the variant, channel sizes,
//! activation and batch-norm settings, free-form training provenance and the
//! array table; the payload is every array as `f32` in table order.
//!
//! Parameters are trained in `f64` and rounded once on save, so a checkpoint
//! that is loaded and saved again is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wernet_core::encoder::{BatchNorm1d, Conv1d, EncoderParams, EncoderVariant, KERNEL};
use wernet_core::features::FEATURES;

use super::{begin, open, put_f32s, read_bytes, write_bytes};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"WEN1";
const FORMAT: &str = "WEN1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArraySpec {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    variant: EncoderVariant,
    in_channels: usize,
    hidden_channels: usize,
    out_channels: usize,
    kernel: usize,
    leaky_slope: f64,
    bn_momentum: Option<f64>,
    bn_eps: Option<f64>,
    #[serde(default)]
    provenance: serde_json::Value,
    arrays: Vec<ArraySpec>,
}

/// Arrays in storage order: conv1 weight and bias, BN scale, shift, running
/// mean and variance, conv2 weight and bias. Absent ones are skipped.
fn arrays(p: &EncoderParams) -> Vec<(&'static str, &[f64])> {
    let mut v: Vec<(&'static str, &[f64])> = vec![("conv1.weight", &p.conv1.weight)];
    if let Some(b) = &p.conv1.bias {
        v.push(("conv1.bias", b));
    }
    if let Some(bn) = &p.bn {
        v.push(("bn.gamma", &bn.gamma));
        v.push(("bn.beta", &bn.beta));
        v.push(("bn.running_mean", &bn.running_mean));
        v.push(("bn.running_var", &bn.running_var));
    }
    v.push(("conv2.weight", &p.conv2.weight));
    if let Some(b) = &p.conv2.bias {
        v.push(("conv2.bias", b));
    }
    v
}

fn table(p: &EncoderParams) -> Vec<ArraySpec> {
    arrays(p)
        .into_iter()
        .map(|(name, a)| ArraySpec {
            name: name.to_owned(),
            len: a.len(),
        })
        .collect()
}

pub fn encode(params: &EncoderParams, provenance: &serde_json::Value) -> Vec<u8> {
    let header = Header {
        variant: params.variant,
        in_channels: FEATURES,
        hidden_channels: params.hidden_channels(),
        out_channels: 1,
        kernel: KERNEL,
        leaky_slope: params.leaky_slope,
        bn_momentum: params.bn.as_ref().map(|b| b.momentum),
        bn_eps: params.bn.as_ref().map(|b| b.eps),
        provenance: provenance.clone(),
        arrays: table(params),
    };
    let parts = arrays(params);
    let total: usize = parts.iter().map(|(_, a)| a.len()).sum();
    let mut out = begin(MAGIC, &header, 4 * total);
    for (_, a) in parts {
        put_f32s(&mut out, a.iter().map(|&x| x as f32));
    }
    out
}

/// Parameters and provenance of a checkpoint.
pub fn decode(bytes: &[u8]) -> Result<(EncoderParams, serde_json::Value)> {
    let (h, mut r): (Header, _) = open(FORMAT, MAGIC, bytes)?;
    if h.in_channels != FEATURES || h.out_channels != 1 || h.kernel != KERNEL || h.hidden_channels == 0 {
        return Err(r.error_at(8, "unsupported encoder shape"));
    }
    let bias = h.variant.has_bias();
    let hc = h.hidden_channels;
    let bn = match (h.variant.has_bn(), h.bn_momentum, h.bn_eps) {
        (true, Some(m), Some(e)) => Some(BatchNorm1d::new(hc, m, e)),
        (false, None, None) => None,
        _ => return Err(r.error_at(8, "batch-norm settings do not match the variant")),
    };
    let mut params = EncoderParams {
        variant: h.variant,
        leaky_slope: h.leaky_slope,
        conv1: Conv1d::zeros(FEATURES, hc, bias),
        bn,
        conv2: Conv1d::zeros(hc, 1, bias),
    };
    if table(&params) != h.arrays {
        return Err(r.error_at(8, "array table does not match the declared encoder"));
    }
    let mut slots: Vec<&mut Vec<f64>> = vec![&mut params.conv1.weight];
    slots.extend(params.conv1.bias.as_mut());
    if let Some(bn) = params.bn.as_mut() {
        slots.extend([&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var]);
    }
    slots.push(&mut params.conv2.weight);
    slots.extend(params.conv2.bias.as_mut());
    for slot in slots {
        let start = r.pos();
        let values = r.f32s(slot.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at(start + 4 * i, "non-finite parameter"));
        }
        *slot = values.into_iter().map(f64::from).collect();
    }
    let end = r.pos();
    r.finish()?;
    params.validate().map_err(|e| crate::error::Error::Format {
        format: FORMAT,
        offset: end,
        message: e.to_string(),
    })?;
    Ok((params, h.provenance))
}

pub fn write(path: &Path, params: &EncoderParams, provenance: &serde_json::Value) -> Result<()> {
    write_bytes(path, &encode(params, provenance))
}

pub fn read(path: &Path) -> Result<(EncoderParams, serde_json::Value)> {
    decode(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use wernet_core::encoder::EncoderConfig;

    fn params(variant: EncoderVariant) -> EncoderParams {
        let config = EncoderConfig {
            variant,
            hidden_channels: 5,
            ..EncoderConfig::default()
        };
        let mut p = EncoderParams::init(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        if let Some(bn) = p.bn.as_mut() {
            bn.running_mean = vec![0.1, 0.2, 0.3, 0.4, 0.5];
            bn.running_var = vec![1.5; 5];
        }
        p
    }

    #[test]
    fn round_trip_every_variant() {
        let prov = serde_json::json!({"phantom": "jet", "epochs": 3});
        for variant in [EncoderVariant::NoBias, EncoderVariant::BiasMask, EncoderVariant::NoBiasBn] {
            let p = params(variant);
            let bytes = encode(&p, &prov);
            let (back, back_prov) = decode(&bytes).unwrap();
            assert_eq!(back_prov, prov);
            assert_eq!(back.variant, variant);
            assert_eq!(encode(&back, &prov), bytes, "{variant:?}");
            let a: Vec<f64> = arrays(&p).iter().flat_map(|(_, a)| a.iter().map(|&x| x as f32 as f64)).collect();
            let b: Vec<f64> = arrays(&back).iter().flat_map(|(_, a)| a.to_vec()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn declared_order() {
        let names: Vec<&str> = arrays(&params(EncoderVariant::NoBiasBn)).iter().map(|(n, _)| *n).collect();
        assert_eq!(
            names,
            ["conv1.weight", "bn.gamma", "bn.beta", "bn.running_mean", "bn.running_var", "conv2.weight"]
        );
        let names: Vec<&str> = arrays(&params(EncoderVariant::BiasMask)).iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"]);
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let bytes = encode(&params(EncoderVariant::NoBias), &serde_json::Value::Null);
        let mut header: serde_json::Value = {
            let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
            serde_json::from_slice(&bytes[8..8 + len]).unwrap()
        };
        header["variant"] = "no_bias_bn".into();
        let text = serde_json::to_vec(&header).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend_from_slice(&(text.len() as u32).to_le_bytes());
        forged.extend_from_slice(&text);
        assert!(matches!(decode(&forged), Err(Error::Format { offset: 8, .. })));
    }
}
