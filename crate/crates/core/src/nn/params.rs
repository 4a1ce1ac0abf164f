use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered snapshot of a model's parameter tensors, as exchanged between
/// clients and the server.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.tensors.iter().map(Tensor::encoded_len).sum::<usize>()
    }

    pub fn encode(&self, out: &mut Vec<u8>) -> Result<()> {
        codec::put_len(out, self.tensors.len())?;
        for t in &self.tensors {
            t.encode(out);
        }
        Ok(())
    }

    pub(crate) fn decode(reader: &mut ByteReader<'_>) -> Result<Self> {
        let count = reader.u32()? as usize;
        let tensors = (0..count)
            .map(|_| Tensor::decode(reader))
            .collect::<Result<_>>()?;
        Ok(Self { tensors })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new("parameter set", bytes);
        let p = Self::decode(&mut reader)?;
        reader.expect_end()?;
        Ok(p)
    }

    pub(crate) fn require_structure(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::Homogeneity(format!(
                "{what}: parameter shapes {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )))
        }
    }
}
