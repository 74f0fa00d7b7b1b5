//! Binary field container.
//!
//! Layout: the 8-byte magic `CFLOWFLD`, a little-endian `u32` byte length,
//! that many bytes of UTF-8 JSON header, then every value as a
//! little-endian `f64`, row-major over nodes then components.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid4, Rank};

pub const MAGIC: &[u8; 8] = b"CFLOWFLD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub dims: [usize; 4],
    pub lengths: [f64; 4],
    pub rank: Rank,
    pub components: usize,
}

pub fn write_field<W: Write>(mut writer: W, field: &Field) -> Result<()> {
    let grid = field.grid();
    let header = Header {
        dims: grid.dims(),
        lengths: grid.lengths(),
        rank: field.rank().clone(),
        components: field.components(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    writer.write_all(MAGIC)?;
    writer.write_all(&len.to_le_bytes())?;
    writer.write_all(&json)?;
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(mut reader: R) -> Result<Field> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    reader.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.components != header.rank.components() {
        return Err(Error::Format(format!(
            "component count {} disagrees with rank {}",
            header.components, header.rank
        )));
    }
    let grid = Grid4::new(header.dims, header.lengths)?;
    let count = grid.node_count() * header.components;
    let mut raw = vec![0u8; count * 8];
    reader.read_exact(&mut raw)?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Field::new(grid, header.rank, values)
}

pub fn save_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    read_field(BufReader::new(File::open(path)?))
}
