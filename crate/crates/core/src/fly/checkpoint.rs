//! FLYM model checkpoints.
//!
//! Layout (little-endian): magic `FLYM`, version `u16`, a config block with
//! every dimension, seed, the coding level and flags, then the parameter
//! count as `u64` followed by that many `f64`s in layout order (pre-layers
//! first, then the head). The projection is not stored; it is rebuilt from
//! the seed.

use std::path::Path;

use super::model::{Activation, FlyModel, ModelSpec, PreLayerSpec};
use crate::codec::{put_f64s, write_atomic, ByteReader};
use crate::Result;

pub const MODEL_MAGIC: &[u8; 4] = b"FLYM";
const VERSION: u16 = 1;

pub(crate) fn write_model(out: &mut Vec<u8>, model: &FlyModel) {
    let spec = model.spec();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n_in as u32).to_le_bytes());
    out.extend_from_slice(&(spec.pre_layers.len() as u32).to_le_bytes());
    for layer in &spec.pre_layers {
        out.extend_from_slice(&(layer.width as u32).to_le_bytes());
        out.push(match layer.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
    }
    out.extend_from_slice(&(spec.n_kc as u32).to_le_bytes());
    out.extend_from_slice(&(spec.degree as u32).to_le_bytes());
    out.extend_from_slice(&spec.coding_level.to_le_bytes());
    out.extend_from_slice(&(spec.n_classes as u32).to_le_bytes());
    out.push(spec.ablate_kc as u8);
    out.push(spec.head_bias as u8);
    out.extend_from_slice(&spec.seed.to_le_bytes());
    out.extend_from_slice(&spec.projection_seed().to_le_bytes());
    out.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    put_f64s(out, model.params());
}

pub(crate) fn read_model(r: &mut ByteReader<'_>) -> Result<FlyModel> {
    r.expect_tag(MODEL_MAGIC)?;
    let version = r.u16_le("version")?;
    if version != VERSION {
        return r.fail(format!("unsupported FLYM version {version}"));
    }
    let n_in = r.u32_le("n_in")? as usize;
    let n_pre = r.u32_le("pre-layer count")? as usize;
    let mut pre_layers = Vec::with_capacity(n_pre.min(1024));
    for _ in 0..n_pre {
        let width = r.u32_le("pre-layer width")? as usize;
        let activation = match r.u8("activation")? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return r.fail(format!("unknown activation code {other}")),
        };
        pre_layers.push(PreLayerSpec { width, activation });
    }
    let n_kc = r.u32_le("n_kc")? as usize;
    let degree = r.u32_le("degree")? as usize;
    let coding_level = r.f64_le("coding level")?;
    let n_classes = r.u32_le("n_classes")? as usize;
    let flag = |r: &mut ByteReader<'_>, what: &str| -> Result<bool> {
        match r.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            other => r.fail(format!("invalid {what} flag {other}")),
        }
    };
    let ablate_kc = flag(r, "ablate")?;
    let head_bias = flag(r, "head bias")?;
    let seed = r.u64_le("seed")?;
    let spec = ModelSpec {
        n_in,
        pre_layers,
        n_kc,
        degree,
        coding_level,
        n_classes,
        ablate_kc,
        head_bias,
        seed,
    };
    let projection_seed = r.u64_le("projection seed")?;
    if projection_seed != spec.projection_seed() {
        return r.fail("projection seed does not match the model seed");
    }
    let at = r.offset();
    let mut model = FlyModel::uninitialized(spec).map_err(|e| crate::Error::Format {
        offset: at,
        msg: format!("invalid model config: {e}"),
    })?;
    let n = r.u64_le("parameter count")? as usize;
    if n != model.num_params() {
        return r.fail(format!(
            "parameter count {n} does not match the config ({})",
            model.num_params()
        ));
    }
    let params = r.f64_vec(n, "parameters")?;
    model.params_mut().copy_from_slice(&params);
    Ok(model)
}

pub fn encode_model(model: &FlyModel) -> Vec<u8> {
    let mut out = Vec::new();
    write_model(&mut out, model);
    out
}

/// Decodes a complete FLYM buffer; trailing bytes are an error.
pub fn decode_model(bytes: &[u8]) -> Result<FlyModel> {
    let mut r = ByteReader::new(bytes);
    let model = read_model(&mut r)?;
    if r.remaining() != 0 {
        return r.fail("trailing bytes after model");
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &FlyModel) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<FlyModel> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn model() -> FlyModel {
        FlyModel::new(ModelSpec {
            n_in: 5,
            pre_layers: vec![
                PreLayerSpec {
                    width: 4,
                    activation: Activation::Relu,
                },
                PreLayerSpec {
                    width: 3,
                    activation: Activation::Identity,
                },
            ],
            n_kc: 30,
            degree: 2,
            coding_level: 0.1,
            n_classes: 4,
            ablate_kc: false,
            head_bias: true,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode_model(&m);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_model(&model());
        for cut in [0, 3, 10, bytes.len() - 1] {
            match decode_model(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_model(&model());
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::Format { offset: 0, .. })));
    }
}
