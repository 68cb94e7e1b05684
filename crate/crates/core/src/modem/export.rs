//! Raw binary dumps for offline inspection.
//!
//! Symbols are stored as interleaved little-endian `f64` pairs (re, im); bits
//! as one byte (0 or 1) each. There is no header.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn symbols_to_bytes(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| s.re.to_le_bytes().into_iter().chain(s.im.to_le_bytes()))
        .collect()
}

pub fn symbols_from_bytes(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(invalid(format!(
            "{} bytes is not a whole number of symbols",
            bytes.len()
        )));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
    Ok(bytes
        .chunks_exact(16)
        .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
        .collect())
}

pub fn write_symbols(path: &Path, symbols: &[Complex64]) -> Result<()> {
    fs::write(path, symbols_to_bytes(symbols)).map_err(|e| io(path, e))
}

pub fn read_symbols(path: &Path) -> Result<Vec<Complex64>> {
    symbols_from_bytes(&fs::read(path).map_err(|e| io(path, e))?)
}

pub fn write_bits(path: &Path, bits: &[u8]) -> Result<()> {
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(invalid(format!("bit value {b} is not 0 or 1")));
    }
    fs::write(path, bits).map_err(|e| io(path, e))
}

pub fn read_bits(path: &Path) -> Result<Vec<u8>> {
    let bits = fs::read(path).map_err(|e| io(path, e))?;
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(invalid(format!("bit file holds byte {b}")));
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let b = symbols_to_bytes(&[Complex64::new(1.0, -2.0)]);
        assert_eq!(&b[..8], &1.0f64.to_le_bytes());
        assert_eq!(&b[8..], &(-2.0f64).to_le_bytes());
        assert_eq!(symbols_from_bytes(&b).unwrap(), vec![Complex64::new(1.0, -2.0)]);
        assert!(symbols_from_bytes(&b[..15]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("essfm-export-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let s: Vec<Complex64> = (0..10)
            .map(|k| Complex64::new(k as f64 / 3.0, -(k as f64)))
            .collect();
        write_symbols(&dir.join("s.bin"), &s).unwrap();
        assert_eq!(read_symbols(&dir.join("s.bin")).unwrap(), s);
        let bits = vec![0, 1, 1, 0, 1];
        write_bits(&dir.join("b.bin"), &bits).unwrap();
        assert_eq!(read_bits(&dir.join("b.bin")).unwrap(), bits);
        assert!(write_bits(&dir.join("b.bin"), &[2]).is_err());
        assert!(matches!(
            read_symbols(&dir.join("missing.bin")),
            Err(Error::Io(_))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
