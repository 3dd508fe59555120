//! Property maps and channel data on disk: the `NWIMAP01` binary format,
//! CSV, and 16-bit PGM previews.

use std::fs;
use std::path::{Path, PathBuf};

use nwi_core::{ChannelData, Map2, Property, PropertySet};

use crate::error::{NwiError, Result};

pub const MAGIC: &[u8; 8] = b"NWIMAP01";
pub const HEADER_LEN: usize = 32;

/// On-disk encoding of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Nwimap,
    Csv,
    Pgm,
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MapFormat::Nwimap => "nwimap",
            MapFormat::Csv => "csv",
            MapFormat::Pgm => "pgm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "nwimap" => Some(MapFormat::Nwimap),
            "csv" => Some(MapFormat::Csv),
            "pgm" => Some(MapFormat::Pgm),
            _ => None,
        }
    }
}

/// Header tag identifying which property a map holds.
pub fn kind_tag(p: Property) -> u32 {
    p.index() as u32 + 1
}

fn tag_kind(tag: u32) -> Option<Property> {
    Property::ALL.into_iter().find(|&p| kind_tag(p) == tag)
}

/// Header, then `nx·nz` little-endian `f64` in row-major order.
pub fn encode_nwimap(map: &Map2, kind: Property) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * map.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(map.nz() as u32).to_le_bytes());
    out.extend_from_slice(&kind_tag(kind).to_le_bytes());
    out.extend_from_slice(&[0u8; 12]);
    for v in map.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_nwimap(bytes: &[u8], path: &Path) -> Result<(Property, Map2)> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(NwiError::format(path, "not an NWIMAP01 file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
    let (nx, nz, tag) = (word(8) as usize, word(12) as usize, word(16));
    let kind = tag_kind(tag).ok_or_else(|| NwiError::format(path, format!("unknown map kind tag {tag}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * nx * nz {
        return Err(NwiError::format(
            path,
            format!("expected {} data bytes for {nx}x{nz}, found {}", 8 * nx * nz, body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((kind, Map2::from_vec(nx, nz, data)?))
}

pub fn write_nwimap(path: &Path, map: &Map2, kind: Property) -> Result<()> {
    fs::write(path, encode_nwimap(map, kind)).map_err(|e| NwiError::io(path, e))
}

pub fn read_nwimap(path: &Path) -> Result<(Property, Map2)> {
    let bytes = fs::read(path).map_err(|e| NwiError::io(path, e))?;
    decode_nwimap(&bytes, path)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> NwiError + '_ {
    move |source| NwiError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| NwiError::format(path, format!("line {}: `{f}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        // `{:?}` keeps every bit of the value
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| NwiError::io(path, e))
}

/// One grid row per line.
pub fn write_map_csv(path: &Path, map: &Map2) -> Result<()> {
    write_rows(path, map.as_slice().chunks(map.nz()))
}

pub fn read_map_csv(path: &Path) -> Result<Map2> {
    let rows = read_rows(path)?;
    let nz = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || nz == 0 || rows.iter().any(|r| r.len() != nz) {
        return Err(NwiError::format(path, "map CSV must be a non-empty rectangle"));
    }
    let nx = rows.len();
    Ok(Map2::from_vec(nx, nz, rows.into_iter().flatten().collect())?)
}

/// 16-bit binary graymap, values mapped linearly from `bounds` onto
/// `0..=65535` and clipped.
pub fn encode_pgm(map: &Map2, bounds: (f64, f64)) -> Vec<u8> {
    let (lo, hi) = bounds;
    let mut out = format!("P5\n{} {}\n65535\n", map.nz(), map.nx()).into_bytes();
    for &v in map.as_slice() {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let level = (t * 65535.0).round() as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, map: &Map2, bounds: (f64, f64)) -> Result<()> {
    if !(bounds.1 > bounds.0) {
        return Err(nwi_core::Error::DegenerateBounds {
            min: bounds.0,
            max: bounds.1,
        }
        .into());
    }
    fs::write(path, encode_pgm(map, bounds)).map_err(|e| NwiError::io(path, e))
}

/// Write a map in `format`; `bounds` is only used for PGM.
pub fn export_map(path: &Path, map: &Map2, kind: Property, bounds: (f64, f64), format: MapFormat) -> Result<()> {
    match format {
        MapFormat::Nwimap => write_nwimap(path, map, kind),
        MapFormat::Csv => write_map_csv(path, map),
        MapFormat::Pgm => write_pgm(path, map, bounds),
    }
}

/// `dir/<property>.nwimap`
pub fn map_path(dir: &Path, p: Property) -> PathBuf {
    dir.join(format!("{}.{}", p.name(), MapFormat::Nwimap.extension()))
}

pub fn write_property_set(dir: &Path, props: &PropertySet) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| NwiError::io(dir, e))?;
    Property::ALL
        .iter()
        .map(|&p| {
            let path = map_path(dir, p);
            write_nwimap(&path, props.get(p), p)?;
            Ok(path)
        })
        .collect()
}

pub fn read_property_set(dir: &Path) -> Result<PropertySet> {
    let mut maps = Vec::with_capacity(4);
    for p in Property::ALL {
        let path = map_path(dir, p);
        if !path.exists() {
            return Err(NwiError::MissingMap { property: p, path });
        }
        let (kind, map) = read_nwimap(&path)?;
        if kind != p {
            return Err(NwiError::format(&path, format!("holds a {kind} map, expected {p}")));
        }
        maps.push(map);
    }
    let mut it = maps.into_iter();
    let mut next = || it.next().expect("four maps");
    Ok(PropertySet::new(next(), next(), next(), next())?)
}

/// One channel per line, one sample per column.
pub fn write_channels_csv(path: &Path, ch: &ChannelData) -> Result<()> {
    write_rows(path, (0..ch.channels()).map(|c| ch.channel(c)))
}

pub fn read_channels_csv(path: &Path, dt: f64) -> Result<ChannelData> {
    let rows = read_rows(path)?;
    let nt = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || nt == 0 || rows.iter().any(|r| r.len() != nt) {
        return Err(NwiError::format(path, "channel CSV must be a non-empty rectangle"));
    }
    let nc = rows.len();
    Ok(ChannelData::from_vec(nc, nt, dt, rows.into_iter().flatten().collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = Map2::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let b = encode_nwimap(&m, Property::Attenuation);
        assert_eq!(&b[..8], b"NWIMAP01");
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(&b[16..20], &3u32.to_le_bytes());
        assert!(b[20..32].iter().all(|&x| x == 0));
        assert_eq!(b.len(), 32 + 6 * 8);
        assert_eq!(&b[32 + 8..32 + 16], &1.0f64.to_le_bytes());
    }

    #[test]
    fn decode_rejects_bad_input() {
        let p = Path::new("x");
        assert!(decode_nwimap(b"short", p).is_err());
        let mut b = encode_nwimap(&Map2::zeros(3, 3), Property::Sos);
        b.pop();
        assert!(decode_nwimap(&b, p).is_err());
        let mut b = encode_nwimap(&Map2::zeros(3, 3), Property::Sos);
        b[16] = 9;
        assert!(decode_nwimap(&b, p).is_err());
    }

    #[test]
    fn pgm_constant_map_at_min_is_black() {
        let b = encode_pgm(&Map2::filled(3, 4, 1400.0), (1400.0, 1650.0));
        let header = b"P5\n4 3\n65535\n";
        assert_eq!(&b[..header.len()], header);
        assert!(b[header.len()..].iter().all(|&x| x == 0));
        assert_eq!(b.len(), header.len() + 24);
    }

    #[test]
    fn pgm_scales_and_clips() {
        let m = Map2::from_vec(1, 4, vec![0.0, 5.0, 10.0, 20.0]).unwrap();
        let b = encode_pgm(&m, (0.0, 10.0));
        let px: Vec<u16> = b[b.len() - 8..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(px, [0, 32768, 65535, 65535]);
    }

    #[test]
    fn format_names() {
        for f in [MapFormat::Nwimap, MapFormat::Csv, MapFormat::Pgm] {
            assert_eq!(MapFormat::from_name(f.extension()), Some(f));
        }
        assert_eq!(MapFormat::from_name("png"), None);
    }
}
