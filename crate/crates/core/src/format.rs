//! Binary matrix file format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SGMM"
//! 4       1     scalar code (1=i8 2=i16 3=i32 4=i64 5=i128)
//! 5       3     reserved, zero
//! 8       4     rows, u32 little-endian
//! 12      4     cols, u32 little-endian
//! 16      ...   rows*cols elements, row-major, little-endian
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{code_name, Scalar};

pub const MAGIC: &[u8; 4] = b"SGMM";
pub const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub code: u8,
    pub rows: u32,
    pub cols: u32,
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} byte header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let code = bytes[4];
        if code_name(code).is_none() {
            return Err(Error::Format(format!("unknown scalar code {code}")));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        Ok(Header { code, rows, cols })
    }
}

pub fn encode<T: Scalar>(m: &Matrix<T>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Format(format!("{} rows", m.rows())))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Format(format!("{} cols", m.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[T::CODE, 0, 0, 0]);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.as_slice() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Matrix<T>> {
    let h = Header::parse(bytes)?;
    if h.code != T::CODE {
        return Err(Error::Format(format!(
            "file holds {}, expected {}",
            code_name(h.code).unwrap_or("?"),
            code_name(T::CODE).unwrap_or("?")
        )));
    }
    let (rows, cols) = (h.rows as usize, h.cols as usize);
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(T::BYTES))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != want {
        return Err(Error::Format(format!(
            "{} payload bytes for a {rows}x{cols} matrix (expected {want})",
            body.len()
        )));
    }
    let data = body.chunks_exact(T::BYTES).map(T::read_le).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn write_matrix<T: Scalar>(w: &mut impl Write, m: &Matrix<T>) -> Result<()> {
    w.write_all(&encode(m)?)?;
    Ok(())
}

pub fn read_matrix<T: Scalar>(r: &mut impl Read) -> Result<Matrix<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    fs::write(path, encode(m)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    decode(&fs::read(path)?)
}

/// Reads only the header of a matrix file.
pub fn peek_header(path: impl AsRef<Path>) -> Result<Header> {
    let mut f = fs::File::open(path)?;
    let mut buf = [0u8; HEADER_LEN];
    f.read_exact(&mut buf)?;
    Header::parse(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let m = Matrix::<i16>::from_vec(2, 3, vec![1, -1, 2, -2, 3, -3]).unwrap();
        let bytes = encode(&m).unwrap();
        assert_eq!(&bytes[..16], b"SGMM\x02\0\0\0\x02\0\0\0\x03\0\0\0");
        assert_eq!(&bytes[16..20], &[1, 0, 0xff, 0xff]);
        assert_eq!(bytes.len(), 16 + 6 * 2);
    }

    #[test]
    fn rejects_malformed_input() {
        let m = Matrix::<i32>::from_vec(1, 2, vec![5, 6]).unwrap();
        let mut bytes = encode(&m).unwrap();
        assert!(matches!(decode::<i16>(&bytes), Err(Error::Format(_))));
        bytes.pop();
        assert!(matches!(decode::<i32>(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode::<i32>(&bytes), Err(Error::Format(_))));
        assert!(decode::<i8>(b"SGMM").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_i128(rows in 1usize..6, cols in 1usize..6, seed in any::<i128>()) {
            let m = Matrix::<i128>::from_fn(rows, cols, |i, j| seed.wrapping_mul((i * 7 + j) as i128 + 1)).unwrap();
            prop_assert_eq!(decode::<i128>(&encode(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn round_trip_i8(data in prop::collection::vec(any::<i8>(), 1..64)) {
            let m = Matrix::<i8>::from_vec(1, data.len(), data).unwrap();
            prop_assert_eq!(decode::<i8>(&encode(&m).unwrap()).unwrap(), m);
        }
    }
}
