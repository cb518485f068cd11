//! Binary checkpoint of named tensors.
//!
//! Records are written back to back until end of file:
//!
//! ```text
//! u32 name_len | name (UTF-8) | u32 rank | rank × u32 dim | numel × f32
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Data("truncated checkpoint".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32> {
    let b = take(buf, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_tensors(mut buf: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        let name_len = take_u32(&mut buf)? as usize;
        let name = std::str::from_utf8(take(&mut buf, name_len)?)
            .map_err(|_| Error::Data("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = take_u32(&mut buf)? as usize;
        let shape = (0..rank)
            .map(|_| take_u32(&mut buf).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let bytes = take(&mut buf, numel * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

/// Writes `params` to `path` and the hyperparameter manifest next to it.
pub fn save_checkpoint(path: &Path, params: &ParamStore<f32>, manifest: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_tensors(params.named()))
        .map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_tensors(&buf)
}

/// `model.bin` → `model.manifest.toml`
pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("manifest.toml")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_records() {
        let t = Tensor::new(vec![2], vec![1.0f32, -2.0]).unwrap();
        let bytes = encode_tensors([("ab", &t)]);
        let mut expect = vec![2, 0, 0, 0, b'a', b'b', 1, 0, 0, 0, 2, 0, 0, 0];
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back, vec![("ab".to_string(), t)]);
    }

    #[test]
    fn truncated_input_is_an_error() {
        let t = Tensor::new(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let bytes = encode_tensors([("x", &t)]);
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn scalar_tensor_has_rank_zero() {
        let t = Tensor::scalar(4.5f32);
        let back = decode_tensors(&encode_tensors([("s", &t)])).unwrap();
        assert_eq!(back[0].1.shape(), &[] as &[usize]);
        assert_eq!(back[0].1.item(), 4.5);
    }
}
