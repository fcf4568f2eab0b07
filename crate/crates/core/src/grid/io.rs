//! Field files: one JSON header line terminated by `\n`, followed by the
//! samples as little-endian `f64` in x4-fastest order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RealField, TorusGrid};
use crate::error::{Error, Result};

pub const FORMAT: &str = "pluriflow-field";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub dims: [usize; 4],
    pub periods: [f64; 4],
    pub dtype: String,
    pub byte_order: String,
    pub order: String,
    pub count: usize,
}

impl FieldHeader {
    fn for_grid(grid: &TorusGrid) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dims: grid.dims(),
            periods: grid.periods(),
            dtype: "f64".into(),
            byte_order: "little".into(),
            order: "x4-fastest".into(),
            count: grid.len(),
        }
    }

    fn validate(&self) -> Result<TorusGrid> {
        let expect = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Header(what.to_string()))
            }
        };
        expect(self.format == FORMAT, "unknown format")?;
        expect(self.version == VERSION, "unsupported version")?;
        expect(self.dtype == "f64", "dtype must be f64")?;
        expect(self.byte_order == "little", "byte_order must be little")?;
        expect(self.order == "x4-fastest", "order must be x4-fastest")?;
        let grid = TorusGrid::new(self.dims, self.periods)
            .map_err(|e| Error::Header(e.to_string()))?;
        if grid.len() != self.count {
            return Err(Error::Header(format!(
                "dims {:?} give {} points but count is {}",
                self.dims,
                grid.len(),
                self.count
            )));
        }
        Ok(grid)
    }
}

pub fn write_field(mut out: impl Write, field: &RealField) -> Result<()> {
    let header = serde_json::to_string(&FieldHeader::for_grid(field.grid()))
        .map_err(|e| Error::Header(e.to_string()))?;
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(8 * field.len());
    for v in field.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(input: impl Read) -> Result<RealField> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Header("missing header line".into()));
    }
    let header: FieldHeader =
        serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| Error::Header(e.to_string()))?;
    let grid = header.validate()?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = 8 * grid.len();
    if payload.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    RealField::new(grid, data)
}

pub fn save(path: &Path, field: &RealField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<RealField> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RealField {
        let g = TorusGrid::new([8, 8, 16, 8], [1.0, 1.5, 1.0, 2.0]).unwrap();
        RealField::from_fn(g, |x| x[0] - 2.0 * x[1] + x[2] * x[3])
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_payload_is_length_mismatch() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_field(buf.as_slice()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn inconsistent_header_is_rejected() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample()).unwrap();
        let text = String::from_utf8_lossy(&buf[..buf.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        let bad = text.replace("\"count\":8192", "\"count\":4096");
        assert_ne!(bad, text);
        let mut tampered = bad.into_bytes();
        tampered.extend_from_slice(&buf[text.len()..]);
        assert!(matches!(read_field(tampered.as_slice()), Err(Error::Header(_))));
    }
}
