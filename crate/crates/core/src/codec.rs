//! File encodings for element arrays.
//!
//! Binary: per element a little-endian `u64` key followed by a `u64` value.
//! Text: one decimal key per line, value set to the key.

use crate::element::Element;
use crate::error::{Error, Result};

const RECORD: usize = 16;

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<Element>> {
    if !bytes.len().is_multiple_of(RECORD) {
        return Err(Error::InvalidInput(format!(
            "binary input length {} is not a multiple of {RECORD}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(RECORD)
        .enumerate()
        .map(|(i, r)| {
            let key = u64::from_le_bytes(r[..8].try_into().unwrap());
            let value = u64::from_le_bytes(r[8..].try_into().unwrap());
            Element::real(key, value, i as u64)
        })
        .collect())
}

pub fn encode_binary(elems: &[Element]) -> Vec<u8> {
    let mut out = Vec::with_capacity(elems.len() * RECORD);
    for e in elems {
        out.extend_from_slice(&e.key.to_le_bytes());
        out.extend_from_slice(&e.value.to_le_bytes());
    }
    out
}

/// Blank lines are skipped.
pub fn decode_text(text: &str) -> Result<Vec<Element>> {
    let mut keys = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let k: u64 = t
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: {t:?} is not an unsigned integer", line_no + 1)))?;
        keys.push(k);
    }
    Ok(crate::element::elements_from_keys(&keys))
}

pub fn encode_text(elems: &[Element]) -> String {
    let mut s = String::with_capacity(elems.len() * 12);
    for e in elems {
        s.push_str(&e.key.to_string());
        s.push('\n');
    }
    s
}

/// Undirected edge list, `u v` per line.
pub fn decode_edges(text: &str) -> Result<Vec<(u64, u64)>> {
    let mut edges = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::InvalidInput(format!("line {}: expected `u v`", line_no + 1)));
        };
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad vertex {s:?}", line_no + 1)))
        };
        edges.push((parse(a)?, parse(b)?));
    }
    Ok(edges)
}
