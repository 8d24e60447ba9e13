//! Binary checkpoint: magic, version, architecture, normalization, then
//! every layer's weights (row-major) and bias. All integers are u64 and all
//! reals f64, little-endian.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::mlp::{Activation, Layer, MlpArchitecture, MlpParameters};
use super::normalize::Normalization;
use super::MlpEstimator;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BATHYMLP";
const VERSION: u64 = 1;
// Guards against allocating absurd sizes from a corrupt header.
const MAX_DIM: u64 = 1 << 24;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, vs: impl IntoIterator<Item = &'a f64>) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(est: &MlpEstimator) -> Vec<u8> {
    let arch = est.params.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, VERSION);
    put_u64(
        &mut out,
        match arch.activation {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        },
    );
    let dims = arch.dims();
    put_u64(&mut out, dims.len() as u64);
    for d in &dims {
        put_u64(&mut out, *d as u64);
    }
    let n = &est.norm;
    put_f64s(&mut out, n.input_mean.iter());
    put_f64s(&mut out, n.input_scale.iter());
    put_f64s(&mut out, n.output_shift.iter());
    put_f64s(&mut out, [n.output_scale].iter());
    for layer in est.params.layers() {
        let w = &layer.weights;
        for r in 0..w.nrows() {
            put_f64s(&mut out, w.row(r).iter());
        }
        put_f64s(&mut out, layer.bias.iter());
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| Error::validation("checkpoint", "truncated file"))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length 8"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }

    fn vector(&mut self, len: usize) -> Result<DVector<f64>> {
        let v = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }
}

pub fn decode_checkpoint(data: &[u8]) -> Result<MlpEstimator> {
    if data.len() < 8 || &data[..8] != MAGIC {
        return Err(Error::validation("checkpoint", "bad magic"));
    }
    let mut c = Cursor { data, pos: 8 };
    let version = c.u64()?;
    if version != VERSION {
        return Err(Error::validation(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let activation = match c.u64()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        k => return Err(Error::validation("checkpoint", format!("unknown activation code {k}"))),
    };
    let depth = c.u64()?;
    if !(2..=64).contains(&depth) {
        return Err(Error::validation("checkpoint", format!("bad layer count {depth}")));
    }
    let dims = (0..depth)
        .map(|_| {
            let d = c.u64()?;
            if d == 0 || d > MAX_DIM {
                return Err(Error::validation("checkpoint", format!("bad width {d}")));
            }
            Ok(d as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = dims[0];
    let n = *dims.last().expect("depth >= 2");
    let arch = MlpArchitecture::new(m, dims[1..dims.len() - 1].to_vec(), n, activation)?;
    let norm = Normalization {
        input_mean: c.vector(m)?,
        input_scale: c.vector(m)?,
        output_shift: c.vector(n)?,
        output_scale: c.f64()?,
    };
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (inp, out) = (w[0], w[1]);
        let weights = DMatrix::from_row_slice(out, inp, c.vector(out * inp)?.as_slice());
        let bias = c.vector(out)?;
        layers.push(Layer { weights, bias });
    }
    if c.pos != data.len() {
        return Err(Error::validation("checkpoint", "trailing bytes"));
    }
    let params = MlpParameters::from_layers(&arch, layers)?;
    Ok(MlpEstimator { params, norm })
}

pub fn write_checkpoint(est: &MlpEstimator, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_checkpoint(est))?;
    f.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<MlpEstimator> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    decode_checkpoint(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn roundtrip_is_exact() {
        let arch = MlpArchitecture::new(3, vec![5, 4], 2, Activation::Tanh).unwrap();
        let params = MlpParameters::init_uniform(&arch, &mut substream(3, "t", 0));
        let mut norm = Normalization::identity(3, 2);
        norm.input_mean[1] = 0.25;
        norm.output_scale = 3.5;
        let est = MlpEstimator { params, norm };
        let back = decode_checkpoint(&encode_checkpoint(&est)).unwrap();
        assert_eq!(back, est);
    }

    #[test]
    fn rejects_corruption() {
        let arch = MlpArchitecture::new(2, vec![], 1, Activation::Relu).unwrap();
        let est = MlpEstimator {
            params: MlpParameters::zeros(&arch),
            norm: Normalization::identity(2, 1),
        };
        let bytes = encode_checkpoint(&est);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
