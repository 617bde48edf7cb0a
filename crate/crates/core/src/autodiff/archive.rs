//! Parameter checkpoint archive: a flat binary file mapping names to shapes
//! and row-major f64 values, with a JSON header. Round-trips bit-exactly.
//!
//! Layout (all integers little-endian):
//! `magic "NRHC" | version u32 | header_len u64 | header (UTF-8 JSON) |
//! count u64 | { name_len u64 | name | ndim u64 | dims u64... | f64 data }*`

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::IxDyn;

use super::tape::Arr;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NRHC";
const VERSION: u32 = 1;

/// A named collection of arrays plus a free-form JSON header.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    pub header_json: String,
    pub entries: Vec<(String, Arr)>,
}

impl Archive {
    pub fn get(&self, name: &str) -> Option<&Arr> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

pub fn write_archive(path: impl AsRef<Path>, archive: &Archive) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = archive.header_json.as_bytes();
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(header)?;
    w.write_all(&(archive.entries.len() as u64).to_le_bytes())?;
    for (name, arr) in &archive.entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u64).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(arr.ndim() as u64).to_le_bytes())?;
        for &d in arr.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let std_arr = arr.as_standard_layout();
        for &v in std_arr.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Archive> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic",
            path.as_ref().display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let header_len = read_u64(&mut r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header_json = String::from_utf8(header)
        .map_err(|e| Error::Checkpoint(format!("header not UTF-8: {e}")))?;
    let count = read_u64(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u64(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::Checkpoint(format!("entry name not UTF-8: {e}")))?;
        let ndim = read_u64(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let arr = Arr::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::Checkpoint(format!("bad shape for {name}: {e}")))?;
        entries.push((name, arr));
    }
    Ok(Archive {
        header_json,
        entries,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
