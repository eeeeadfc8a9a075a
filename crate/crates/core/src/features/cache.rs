//! Binary feature cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "MGFC"
//! u32     version (1)
//! u32     layer count L
//! L ×     u16 name length, UTF-8 name, u32 dim
//! u64     row count n
//! n ×     u16 id length, UTF-8 image id, Σdim × f32 values in layer order
//! ```
//!
//! Values are written at 32-bit precision; loading widens them back to f64.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::descriptor::{layout_dim, layout_from_dims, FeatureVector, Segment};
use super::table::FeatureTable;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MGFC";
pub const VERSION: u32 = 1;

const MAX_LAYER_DIM: usize = 1 << 24;

/// Exact size in bytes of a cache holding `ids` under `layout`.
pub fn cache_file_size<'a>(layout: &[Segment], ids: impl IntoIterator<Item = &'a str>) -> u64 {
    let header: u64 = 4 + 4 + 4 + layout.iter().map(|s| 2 + s.layer_name.len() as u64 + 4).sum::<u64>() + 8;
    let row_values = layout_dim(layout) as u64 * 4;
    header + ids.into_iter().map(|id| 2 + id.len() as u64 + row_values).sum::<u64>()
}

fn write_str16<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidInput(format!("name too long for the cache: `{s}`")))?;
    w.write_all(&len.to_le_bytes()).map_err(io_err)?;
    w.write_all(s.as_bytes()).map_err(io_err)
}

fn io_err(e: io::Error) -> Error {
    Error::io("<feature cache>", e)
}

pub fn write_cache<W: Write>(table: &FeatureTable, w: &mut W) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(table.layout().len() as u32).to_le_bytes()).map_err(io_err)?;
    for seg in table.layout() {
        write_str16(w, &seg.layer_name)?;
        w.write_all(&(seg.length as u32).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(table.len() as u64).to_le_bytes()).map_err(io_err)?;
    for row in table.rows() {
        write_str16(w, &row.image_id)?;
        for &v in &row.values {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_cache(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("mgfc.partial");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        write_cache(table, &mut w)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn str16(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        String::from_utf8(buf).map_err(|_| Error::InvalidInput(format!("{what} is not UTF-8")))
    }
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::CacheTruncated(format!("file ends inside {what}"))
    } else {
        io_err(e)
    }
}

pub fn read_cache<R: Read>(r: R) -> Result<FeatureTable> {
    let mut r = Reader { inner: r };
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.inner.read(&mut magic[got..]).map_err(io_err)? {
            0 => return Err(Error::NotACache),
            n => got += n,
        }
    }
    if &magic != MAGIC {
        return Err(Error::NotACache);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::CacheVersion(version));
    }
    let layers = r.u32("layer count")? as usize;
    let mut dims = Vec::with_capacity(layers.min(1024));
    for _ in 0..layers {
        let name = r.str16("layer name")?;
        let dim = r.u32("layer dim")? as usize;
        if dim > MAX_LAYER_DIM {
            return Err(Error::InvalidInput(format!("layer `{name}` claims {dim} dims")));
        }
        dims.push((name, dim));
    }
    let layout = layout_from_dims(dims.iter().map(|(n, d)| (n.as_str(), *d)));
    let mut table = FeatureTable::new(None, layout.clone())?;
    let dim = table.dim();
    let rows = r.u64("row count")?;
    let mut raw = vec![0u8; dim * 4];
    for _ in 0..rows {
        let id = r.str16("image id")?;
        r.inner
            .read_exact(&mut raw)
            .map_err(|e| truncated(e, "row values"))?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        table.push(FeatureVector::new(id, layout.clone(), values)?)?;
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(io_err)? != 0 {
        return Err(Error::InvalidInput("trailing bytes after the last cache row".into()));
    }
    Ok(table)
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cache(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        let layout = layout_from_dims([("a", 2), ("b", 1)]);
        let mut t = FeatureTable::new(None, layout.clone()).unwrap();
        for (i, id) in ["x", "y", "zé"].iter().enumerate() {
            let v = vec![i as f64 + 0.5, -(i as f64), 1e-3 * i as f64];
            t.push(FeatureVector::new(*id, layout.clone(), v).unwrap()).unwrap();
        }
        t
    }

    fn round_f32(t: &FeatureTable) -> FeatureTable {
        let mut out = FeatureTable::new(t.model_name.clone(), t.layout().to_vec()).unwrap();
        for r in t.rows() {
            let v = r.values.iter().map(|&x| x as f32 as f64).collect();
            out.push(FeatureVector::new(r.image_id.clone(), r.segments.clone(), v).unwrap()).unwrap();
        }
        out
    }

    #[test]
    fn round_trip_in_memory() {
        let t = table();
        let mut buf = Vec::new();
        write_cache(&t, &mut buf).unwrap();
        assert_eq!(buf.len() as u64, cache_file_size(t.layout(), t.rows().iter().map(|r| r.image_id.as_str())));
        let back = read_cache(&buf[..]).unwrap();
        assert_eq!(back, round_f32(&t));
    }

    #[test]
    fn wrong_magic() {
        let mut buf = Vec::new();
        write_cache(&table(), &mut buf).unwrap();
        buf[0] = b'X';
        let err = read_cache(&buf[..]).unwrap_err();
        assert!(matches!(err, Error::NotACache));
        assert_eq!(err.to_string(), "not a feature cache");
        assert!(matches!(read_cache(&b"MG"[..]), Err(Error::NotACache)));
    }

    #[test]
    fn version_mismatch() {
        let mut buf = Vec::new();
        write_cache(&table(), &mut buf).unwrap();
        buf[4] = 2;
        assert!(matches!(read_cache(&buf[..]), Err(Error::CacheVersion(2))));
    }

    #[test]
    fn every_truncation_rejected() {
        let mut buf = Vec::new();
        write_cache(&table(), &mut buf).unwrap();
        for cut in 4..buf.len() {
            match read_cache(&buf[..cut]) {
                Err(Error::CacheTruncated(_)) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut buf = Vec::new();
        write_cache(&table(), &mut buf).unwrap();
        // rename the second row's id "y" to "x"
        let t = table();
        let header = cache_file_size(t.layout(), std::iter::empty()) as usize;
        let first_row = 2 + 1 + 3 * 4;
        let pos = header + first_row + 2;
        assert_eq!(buf[pos], b'y');
        buf[pos] = b'x';
        assert!(matches!(read_cache(&buf[..]), Err(Error::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = Vec::new();
        write_cache(&table(), &mut buf).unwrap();
        buf.push(0);
        assert!(read_cache(&buf[..]).is_err());
    }

    #[test]
    fn full_database_size() {
        let layout = crate::features::layout_from_dims(
            crate::graph_runtime::INCEPTION_V3_TAPS.iter().copied(),
        );
        let ids: Vec<String> = (0..10_073).map(|i| format!("{i:010}.jpg")).collect();
        let size = cache_file_size(&layout, ids.iter().map(|s| s.as_str()));
        let header = 4 + 4 + 4 + layout.iter().map(|s| 6 + s.layer_name.len() as u64).sum::<u64>() + 8;
        let ids_bytes = 10_073 * (2 + 14);
        assert_eq!(size, header + ids_bytes + 10_073 * 10_048 * 4);
    }
}
