//! `PNNW` checkpoints: magic, version, network spec, then raw f32 tensors in layer order.

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::nn::{Activation, BatchNormParams, InputLayout, LayerSpec, NetworkParams, NetworkSpec, Tensor4};

const MAGIC: &[u8; 4] = b"PNNW";
const VERSION: u16 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::InvalidImage("tensor too large".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn checkpoint_bytes(params: &NetworkParams, spec: &NetworkSpec) -> Result<Vec<u8>> {
    params.check(spec)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(spec.residual as u8);
    put_u32(&mut out, spec.layout.ms_bands);
    put_u32(&mut out, spec.layout.index_channels);
    out.extend_from_slice(&spec.value_scale.to_le_bytes());
    put_u32(&mut out, spec.layers.len());
    for l in &spec.layers {
        put_u32(&mut out, l.in_channels);
        put_u32(&mut out, l.out_channels);
        put_u32(&mut out, l.kernel);
        out.push(match l.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        out.push(l.batch_norm as u8);
    }
    for p in &params.layers {
        put_f32s(&mut out, &p.weight.data);
        put_f32s(&mut out, &p.bias);
        if let Some(bn) = &p.bn {
            put_f32s(&mut out, &bn.scale);
            put_f32s(&mut out, &bn.shift);
            put_f32s(&mut out, &bn.running_mean);
            put_f32s(&mut out, &bn.running_var);
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(NetworkParams, NetworkSpec)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            expected: *MAGIC,
            found: magic,
        });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let residual = r.u8()? != 0;
    let layout = InputLayout {
        ms_bands: r.u32()?,
        index_channels: r.u32()?,
    };
    let value_scale = r.f32()?;
    let count = r.u32()?;
    ensure!(count <= 1024, InvalidImage, "implausible layer count {}", count);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (in_channels, out_channels, kernel) = (r.u32()?, r.u32()?, r.u32()?);
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(Error::InvalidImage(format!("unknown activation code {}", other))),
        };
        let batch_norm = r.u8()? != 0;
        layers.push(LayerSpec {
            in_channels,
            out_channels,
            kernel,
            activation,
            batch_norm,
        });
    }
    let spec = NetworkSpec {
        layers,
        residual,
        layout,
        value_scale,
    };
    spec.validate()?;
    let mut params = NetworkParams::zeros(&spec);
    for (l, p) in spec.layers.iter().zip(params.layers.iter_mut()) {
        p.weight = Tensor4::from_vec(
            l.out_channels,
            l.in_channels,
            l.kernel,
            l.kernel,
            r.f32s(l.out_channels * l.in_channels * l.kernel * l.kernel)?,
        )?;
        p.bias = r.f32s(l.out_channels)?;
        if l.batch_norm {
            p.bn = Some(BatchNormParams {
                scale: r.f32s(l.out_channels)?,
                shift: r.f32s(l.out_channels)?,
                running_mean: r.f32s(l.out_channels)?,
                running_var: r.f32s(l.out_channels)?,
            });
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::TrailingData {
            expected: r.pos,
            found: bytes.len(),
        });
    }
    params.check(&spec)?;
    Ok((params, spec))
}

pub fn save_checkpoint(params: &NetworkParams, spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(params, spec)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkParams, NetworkSpec)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

/// Loads a checkpoint and checks it fits `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &NetworkSpec) -> Result<NetworkParams> {
    let (params, spec) = load_checkpoint(path)?;
    ensure!(
        spec.layers == expected.layers && spec.layout == expected.layout,
        ShapeMismatch,
        "checkpoint network ({} -> {} channels) does not fit the requested one ({} -> {} channels)",
        spec.input_channels(),
        spec.output_channels(),
        expected.input_channels(),
        expected.output_channels()
    );
    params.check(expected)?;
    Ok(params)
}
