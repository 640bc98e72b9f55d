//! On-disk formats.
//!
//! Dense binary: `"DTNS"`, `u32` version (1), `u32` order, `order × u32`
//! dims, then `Π dims × f64` values in row-major order, all little-endian.
//!
//! Sparse text (UTF-8, LF): a header line `d dim_1 … dim_d nnz`, followed by
//! one `i_1 … i_d value` line per entry, 0-based indices, sorted
//! lexicographically, values in shortest round-trip decimal form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{FormatError, Result};
use crate::tensor::{DenseTensor, SparseTensor};

pub const DENSE_MAGIC: &[u8; 4] = b"DTNS";
pub const DENSE_VERSION: u32 = 1;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn encode_dense(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.order() + 8 * t.len());
    out.extend_from_slice(DENSE_MAGIC);
    out.extend_from_slice(&DENSE_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> std::result::Result<u32, FormatError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(FormatError::Truncated {
            needed: at + 4,
            found: bytes.len(),
        })
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            needed: 4,
            found: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != DENSE_MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    let version = read_u32(bytes, 4)?;
    if version != DENSE_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let order = read_u32(bytes, 8)? as usize;
    if order == 0 {
        return Err(FormatError::Header("order must be at least 1".into()).into());
    }
    let mut dims = Vec::with_capacity(order.min(64));
    for k in 0..order {
        dims.push(read_u32(bytes, 12 + 4 * k)? as usize);
    }
    if dims.contains(&0) {
        return Err(FormatError::Header(format!("zero-length mode in {dims:?}")).into());
    }
    let start = 12 + 4 * order;
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| FormatError::Header(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[start..];
    if payload.len() != count {
        return Err(FormatError::PayloadMismatch {
            dims,
            expected: count,
            found: payload.len(),
        }
        .into());
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(dims, values)
}

pub fn store_dense(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dense(t))?;
    Ok(())
}

pub fn load_dense(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode_dense(&fs::read(path)?)
}

pub fn encode_sparse(s: &SparseTensor) -> String {
    let mut out = String::new();
    out.push_str(&s.order().to_string());
    for d in s.dims() {
        write!(out, " {d}").unwrap();
    }
    writeln!(out, " {}", s.nnz()).unwrap();
    for (idx, v) in s.iter() {
        for i in idx {
            write!(out, "{i} ").unwrap();
        }
        out.push_str(&fmt_f64(v));
        out.push('\n');
    }
    out
}

fn parse_usize(field: &str, line: usize) -> std::result::Result<usize, FormatError> {
    field.parse().map_err(|_| FormatError::NonNumeric {
        line,
        field: field.to_string(),
    })
}

pub fn decode_sparse(text: &str) -> Result<SparseTensor> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::Header("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let order = fields
        .first()
        .ok_or_else(|| FormatError::Header("empty header".into()))
        .and_then(|f| parse_usize(f, 1))?;
    if order == 0 || fields.len() != order + 2 {
        return Err(FormatError::Header(format!(
            "expected `d dim_1 .. dim_d nnz`, got `{header}`"
        ))
        .into());
    }
    let dims = fields[1..=order]
        .iter()
        .map(|f| parse_usize(f, 1))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if dims.contains(&0) {
        return Err(FormatError::Header(format!("zero-length mode in {dims:?}")).into());
    }
    let nnz = parse_usize(fields[order + 1], 1)?;

    let mut sparse = SparseTensor::empty(dims.clone())?;
    let mut prev: Option<Vec<usize>> = None;
    let mut count = 0;
    for (k, raw) in lines.enumerate() {
        let line = k + 2;
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split_whitespace().collect();
        if parts.len() != order + 1 {
            return Err(FormatError::FieldCount {
                line,
                expected: order + 1,
                found: parts.len(),
            }
            .into());
        }
        let mut idx = Vec::with_capacity(order);
        for (j, f) in parts[..order].iter().enumerate() {
            let i = parse_usize(f, line)?;
            if i >= dims[j] {
                return Err(FormatError::IndexOutOfRange {
                    line,
                    index: i,
                    dim: dims[j],
                }
                .into());
            }
            idx.push(i);
        }
        let v: f64 = parts[order].parse().map_err(|_| FormatError::NonNumeric {
            line,
            field: parts[order].to_string(),
        })?;
        if v == 0.0 || !v.is_finite() {
            return Err(FormatError::BadValue { line }.into());
        }
        if let Some(p) = &prev {
            match p.cmp(&idx) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => return Err(FormatError::Duplicate { line }.into()),
                std::cmp::Ordering::Greater => return Err(FormatError::Unsorted { line }.into()),
            }
        }
        sparse.push_unchecked(&idx, v);
        prev = Some(idx);
        count += 1;
    }
    if count != nnz {
        return Err(FormatError::EntryCount {
            declared: nnz,
            found: count,
        }
        .into());
    }
    Ok(sparse)
}

pub fn store_sparse(s: &SparseTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_sparse(s))?;
    Ok(())
}

pub fn load_sparse(path: impl AsRef<Path>) -> Result<SparseTensor> {
    decode_sparse(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn format_err(r: Result<impl std::fmt::Debug>) -> FormatError {
        match r {
            Err(Error::Format(f)) => f,
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn one_by_one_file_is_28_bytes() {
        let t = DenseTensor::new(vec![1, 1], vec![2.5]).unwrap();
        let bytes = encode_dense(&t);
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"DTNS");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[20..], &2.5f64.to_le_bytes());
        assert_eq!(decode_dense(&bytes).unwrap(), t);
    }

    #[test]
    fn dense_parse_errors_are_distinct() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let good = encode_dense(&t);

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert_eq!(format_err(decode_dense(&bad)), FormatError::BadMagic(*b"XXXX"));

        assert!(matches!(
            format_err(decode_dense(&good[..10])),
            FormatError::Truncated { .. }
        ));
        assert!(matches!(
            format_err(decode_dense(&good[..good.len() - 3])),
            FormatError::PayloadMismatch { .. }
        ));
        let mut longer = good.clone();
        longer.extend_from_slice(&[0; 8]);
        assert!(matches!(
            format_err(decode_dense(&longer)),
            FormatError::PayloadMismatch { .. }
        ));
        let mut v2 = good;
        v2[4] = 2;
        assert_eq!(format_err(decode_dense(&v2)), FormatError::UnsupportedVersion(2));
    }

    #[test]
    fn dense_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dtns");
        let mut g = SplitMix64::new(3);
        let t = DenseTensor::from_fn(vec![3, 4, 2], |_| g.next_normal()).unwrap();
        store_dense(&t, &path).unwrap();
        let back = load_dense(&path).unwrap();
        let same = t.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same && t.dims() == back.dims());
    }

    #[test]
    fn empty_sparse_is_header_only() {
        let s = SparseTensor::empty(vec![3, 3]).unwrap();
        assert_eq!(encode_sparse(&s), "2 3 3 0\n");
        assert_eq!(decode_sparse("2 3 3 0\n").unwrap(), s);
    }

    #[test]
    fn sparse_text_layout() {
        let s = SparseTensor::from_entries(
            vec![2, 3],
            vec![(vec![1, 2], 0.1), (vec![0, 0], -2.0), (vec![0, 2], 1e-300)],
        )
        .unwrap();
        assert_eq!(encode_sparse(&s), "2 2 3 3\n0 0 -2.0\n0 2 1e-300\n1 2 0.1\n");
    }

    #[test]
    fn five_entry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let s = SparseTensor::from_entries(
            vec![4, 4, 4],
            vec![
                (vec![0, 1, 2], 1.0 / 3.0),
                (vec![3, 3, 3], -7.25),
                (vec![1, 0, 0], 6.02e23),
                (vec![2, 2, 1], f64::MIN_POSITIVE),
                (vec![0, 0, 3], -0.1),
            ],
        )
        .unwrap();
        store_sparse(&s, &path).unwrap();
        assert_eq!(load_sparse(&path).unwrap(), s);
    }

    #[test]
    fn sparse_parse_errors_are_distinct() {
        assert!(matches!(
            format_err(decode_sparse("2 4 4 1\n7 0 1.0\n")),
            FormatError::IndexOutOfRange { line: 2, index: 7, dim: 4 }
        ));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 2\n1 0 1.0\n0 3 1.0\n")),
            FormatError::Unsorted { line: 3 }
        ));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 2\n1 0 1.0\n1 0 2.0\n")),
            FormatError::Duplicate { line: 3 }
        ));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 1\n1 0 abc\n")),
            FormatError::NonNumeric { line: 2, .. }
        ));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 1\n1 0\n")),
            FormatError::FieldCount { line: 2, .. }
        ));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 2\n1 0 1.0\n")),
            FormatError::EntryCount { declared: 2, found: 1 }
        ));
        assert!(matches!(format_err(decode_sparse("2 4\n")), FormatError::Header(_)));
        assert!(matches!(
            format_err(decode_sparse("2 4 4 1\n1 0 0.0\n")),
            FormatError::BadValue { line: 2 }
        ));
    }

    proptest! {
        #[test]
        fn dense_round_trip_is_bit_identical(dims in prop::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
            let mut g = SplitMix64::new(seed);
            let t = DenseTensor::from_fn(dims, |_| f64::from_bits(g.next_u64() & !(0x7ffu64 << 52) | (0x3ffu64 << 52))).unwrap();
            let back = decode_dense(&encode_dense(&t)).unwrap();
            prop_assert!(t.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn sparse_round_trip_is_exact(seed in any::<u64>(), density in 0.0f64..1.0) {
            let mut g = SplitMix64::new(seed);
            let t = DenseTensor::from_fn(vec![3, 4, 3], |_| {
                if g.next_f64() < density { f64::from_bits(g.next_u64() >> 2) } else { 0.0 }
            }).unwrap();
            let s = t.to_sparse();
            let back = decode_sparse(&encode_sparse(&s)).unwrap();
            prop_assert!(s.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, s);
        }
    }
}
