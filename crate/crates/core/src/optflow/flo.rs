//! `FLO1` container: magic, `u32` height, `u32` width, then `H·W` `f32` u
//! values and `H·W` `f32` v values, all little-endian and row-major.

use std::fs;
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";

pub fn write_flow<T: Scalar>(f: &FlowField<T>, path: &Path) -> Result<()> {
    let n = f.height * f.width;
    let mut buf = Vec::with_capacity(12 + 8 * n);
    buf.extend_from_slice(FLOW_MAGIC);
    buf.extend_from_slice(&(f.height as u32).to_le_bytes());
    buf.extend_from_slice(&(f.width as u32).to_le_bytes());
    for x in f.u.iter().chain(&f.v) {
        buf.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_flow<T: Scalar>(bytes: &[u8]) -> Result<FlowField<T>> {
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::Format("missing FLO1 header".into()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Error::Format("flow dimensions overflow".into()))?;
    let expected = 12 + 8 * n;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "flow payload is {} bytes, header {h}x{w} requires {expected}",
            bytes.len()
        )));
    }
    let vals: Vec<T> = bytes[12..]
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let (u, v) = vals.split_at(n);
    FlowField::new(h, w, u.to_vec(), v.to_vec())
}

pub fn load_precomputed_flow<T: Scalar>(path: &Path) -> Result<FlowField<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_flow(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("a.flo");
        let f = FlowField::<f32>::new(2, 3, vec![0.1, -2.5, 3.25, 1e-7, 0.0, -0.0], vec![9.0; 6]).unwrap();
        write_flow(&f, &p).unwrap();
        let g: FlowField<f32> = load_precomputed_flow(&p).unwrap();
        assert_eq!(
            f.u.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            g.u.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(f, g);
    }

    #[test]
    fn truncated_and_mismatched_files_fail() {
        let f = FlowField::<f32>::zeros(4, 4);
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("a.flo");
        write_flow(&f, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(matches!(
            read_flow::<f32>(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        assert!(matches!(read_flow::<f32>(&bytes[..7]), Err(Error::Format(_))));
        let mut wrong = bytes.clone();
        wrong[4..8].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(read_flow::<f32>(&wrong), Err(Error::Format(_))));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(matches!(read_flow::<f32>(&bad_magic), Err(Error::Format(_))));
    }
}
