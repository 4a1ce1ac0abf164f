use std::path::Path;

use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::nn::Activation;

pub const MODEL_MAGIC: &[u8; 6] = b"AAAMD\0";
pub const MODEL_VERSION: u16 = 1;

pub(crate) const KIND_AUTOENCODER: u8 = 1;
pub(crate) const KIND_CLASSIFIER: u8 = 2;

pub(crate) fn put_header(out: &mut Vec<u8>, kind: u8) {
    out.extend_from_slice(MODEL_MAGIC);
    codec::put_u16(out, MODEL_VERSION);
    codec::put_u8(out, kind);
}

pub(crate) fn read_header(r: &mut ByteReader<'_>, kind: u8) -> Result<()> {
    r.expect_magic(MODEL_MAGIC)?;
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(r.error(format!("unsupported model version {version}")));
    }
    let found = r.u8()?;
    if found != kind {
        return Err(r.error(format!("expected model kind {kind}, found {found}")));
    }
    Ok(())
}

pub(crate) fn put_activation(out: &mut Vec<u8>, act: Activation) {
    match act {
        Activation::LeakyRelu { slope } => {
            codec::put_u8(out, 0);
            codec::put_f64(out, slope);
        }
        Activation::Relu => codec::put_u8(out, 1),
        Activation::Tanh => codec::put_u8(out, 2),
    }
}

pub(crate) fn read_activation(r: &mut ByteReader<'_>) -> Result<Activation> {
    match r.u8()? {
        0 => Ok(Activation::LeakyRelu { slope: r.f64()? }),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Tanh),
        t => Err(r.error(format!("unknown activation tag {t}"))),
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
