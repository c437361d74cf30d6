//! Named-tensor container files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"NTCF"
//! version u32 (= 1)
//! meta    u64 length + UTF-8 bytes (free-form, usually JSON)
//! count   u32
//! tensor* u32 name length, name bytes,
//!         u32 rank, u64 dims[rank],
//!         f64 data[product(dims)]
//! ```

use std::io::{Read, Write};

use crate::error::TensorError;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NTCF";
pub const VERSION: u32 = 1;

/// Decoded container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn from_params(metadata: impl Into<String>, params: &ParamStore) -> Self {
        Container {
            metadata: metadata.into(),
            tensors: params.iter().map(|(n, t)| (n.to_owned(), t.clone())).collect(),
        }
    }

    /// Copy tensors into `params` by name; every parameter must be present
    /// with a matching shape.
    pub fn load_into(&self, params: &mut ParamStore) -> Result<(), TensorError> {
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_owned();
            let found = self
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| TensorError::Format(format!("missing tensor {name}")))?;
            if found.1.shape() != params.get(id).shape() {
                return Err(TensorError::Format(format!(
                    "tensor {name}: stored shape {:?}, expected {:?}",
                    found.1.shape(),
                    params.get(id).shape()
                )));
            }
            *params.get_mut(id) = found.1.clone();
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), TensorError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, TensorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported version {version}")));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let metadata = String::from_utf8(read_bytes(&mut r, meta_len)?)
            .map_err(|_| TensorError::Format("metadata is not UTF-8".into()))?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(read_bytes(&mut r, name_len)?)
                .map_err(|_| TensorError::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        Ok(Container { metadata, tensors })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, TensorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>, TensorError> {
    let mut v = Vec::new();
    r.take(n as u64).read_to_end(&mut v)?;
    if v.len() != n {
        return Err(TensorError::Format("truncated container".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut ps = ParamStore::new();
        ps.add(
            "a",
            Tensor::new(&[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
        );
        ps.add("b", Tensor::scalar(std::f64::consts::PI));
        let c = Container::from_params("{\"k\":1}", &ps);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        let back = Container::read(&bytes[..]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensors[0].1.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Container::read(&b"XXXX\x01\0\0\0"[..]).is_err());
        let c = Container::from_params("", &ParamStore::new());
        let mut bytes = c.to_bytes();
        bytes[4] = 9;
        assert!(Container::read(&bytes[..]).is_err());
    }

    #[test]
    fn load_into_checks_shapes() {
        let mut ps = ParamStore::new();
        ps.add("a", Tensor::zeros(&[2]));
        let mut other = ParamStore::new();
        other.add("a", Tensor::zeros(&[3]));
        let c = Container::from_params("", &other);
        assert!(c.load_into(&mut ps).is_err());
    }
}
