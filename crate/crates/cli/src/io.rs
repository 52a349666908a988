//! File formats: binary plane data, legacy VTK volumes, CSV, JSON and OBJ.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use hcip_core::preprocess::MultiFrequencyData;
use hcip_core::{ghz_to_k, Grid2D, Grid3D, PlaneData, C64};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const PLANE_MAGIC: [u8; 8] = *b"HCIPPLN\0";
pub const PLANE_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(CliError::io(path))?))
}

/// Writes a multi-frequency dataset.
///
/// Layout (little endian): magic, `u32` version, origin `2 x f64`, spacing
/// `2 x f64`, counts `2 x u64`, z-level `f64`, `u64` frequency count, the
/// frequencies in GHz, then for each frequency the plane values as
/// interleaved `(re, im)` pairs with `x` running fastest.
pub fn write_planes(path: &Path, data: &MultiFrequencyData) -> Result<()> {
    let mut w = create(path)?;
    let g = data.grid();
    let mut body = || -> std::io::Result<()> {
        w.write_all(&PLANE_MAGIC)?;
        w.write_u32::<LittleEndian>(PLANE_VERSION)?;
        for v in g.origin().into_iter().chain(g.spacing()) {
            w.write_f64::<LittleEndian>(v)?;
        }
        for n in g.counts() {
            w.write_u64::<LittleEndian>(n as u64)?;
        }
        w.write_f64::<LittleEndian>(g.z_level())?;
        w.write_u64::<LittleEndian>(data.len() as u64)?;
        for &f in data.frequencies_ghz() {
            w.write_f64::<LittleEndian>(f)?;
        }
        for p in data.planes() {
            for v in p.values() {
                w.write_f64::<LittleEndian>(v.re)?;
                w.write_f64::<LittleEndian>(v.im)?;
            }
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

pub fn read_planes(path: &Path) -> Result<MultiFrequencyData> {
    let mut r = open(path)?;
    let bad = |msg: &str| CliError::format(path, msg);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if magic != PLANE_MAGIC {
        return Err(bad("not a plane-data file"));
    }
    let io = |e: std::io::Error| CliError::format(path, format!("truncated file: {e}"));
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != PLANE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut h = [0.0; 4];
    for v in &mut h {
        *v = r.read_f64::<LittleEndian>().map_err(io)?;
    }
    let nx = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let ny = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let z = r.read_f64::<LittleEndian>().map_err(io)?;
    let nf = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    if nf == 0 || nf > 1 << 20 || nx.saturating_mul(ny) > 1 << 28 {
        return Err(bad("implausible header counts"));
    }
    let grid = Grid2D::new([h[0], h[1]], [h[2], h[3]], [nx, ny], z).map_err(|e| bad(&e.to_string()))?;
    let mut freqs = Vec::with_capacity(nf);
    for _ in 0..nf {
        freqs.push(r.read_f64::<LittleEndian>().map_err(io)?);
    }
    let mut planes = Vec::with_capacity(nf);
    for &f in &freqs {
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = r.read_f64::<LittleEndian>().map_err(io)?;
            let im = r.read_f64::<LittleEndian>().map_err(io)?;
            values.push(C64::new(re, im));
        }
        let k = ghz_to_k(f).map_err(|e| bad(&e.to_string()))?;
        planes.push(PlaneData::new(grid, k, values).map_err(|e| bad(&e.to_string()))?);
    }
    if r.read(&mut [0u8; 1]).map_err(io)? != 0 {
        return Err(bad("trailing bytes after the last plane"));
    }
    MultiFrequencyData::new(freqs, planes).map_err(|e| bad(&e.to_string()))
}

/// One row per node and frequency: `freq_ghz,x,y,re,im`.
pub fn write_planes_csv(path: &Path, data: &MultiFrequencyData) -> Result<()> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "freq_ghz,x,y,re,im")?;
        for (f, p) in data.frequencies_ghz().iter().zip(data.planes()) {
            for (q, v) in p.values().iter().enumerate() {
                let [x, y] = p.grid().node_at(q);
                writeln!(w, "{f},{x},{y},{},{}", v.re, v.im)?;
            }
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

/// Writes rows of numbers under a header.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    let body = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

/// Reads a numeric CSV with one header line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = open(path)?.lines();
    let header = match lines.next() {
        Some(h) => h.map_err(CliError::io(path))?.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>(),
        None => return Err(CliError::format(path, "empty CSV")),
    };
    let mut rows = vec![];
    for (n, line) in lines.enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::format(path, format!("line {}: {e}", n + 2)))?;
        if row.len() != header.len() {
            return Err(CliError::format(path, format!("line {}: {} cells, expected {}", n + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Real scalar field on a [`Grid3D`], as stored in a VTK file.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid3D,
    pub name: String,
    pub values: Vec<f64>,
}

/// Legacy ASCII VTK `STRUCTURED_POINTS` with one scalar array, `x` fastest.
/// Values are printed in shortest round-trip form, so reading back is exact.
pub fn write_vtk(path: &Path, v: &Volume) -> Result<()> {
    let mut w = create(path)?;
    let g = v.grid;
    let [nx, ny, nz] = g.counts();
    let [ox, oy, oz] = g.origin();
    let [sx, sy, sz] = g.spacing();
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", v.name)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
        writeln!(w, "ORIGIN {ox} {oy} {oz}")?;
        writeln!(w, "SPACING {sx} {sy} {sz}")?;
        writeln!(w, "POINT_DATA {}", g.len())?;
        writeln!(w, "SCALARS {} double 1", v.name)?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for row in v.values.chunks(nx) {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

pub fn read_vtk(path: &Path) -> Result<Volume> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(CliError::io(path))?;
    let bad = |msg: String| CliError::format(path, msg);
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
    if !next("version line")?.starts_with("# vtk DataFile") {
        return Err(bad("not a legacy VTK file".into()));
    }
    next("title")?;
    if next("format")?.trim() != "ASCII" {
        return Err(bad("only ASCII VTK is supported".into()));
    }
    if next("dataset")?.trim() != "DATASET STRUCTURED_POINTS" {
        return Err(bad("only STRUCTURED_POINTS is supported".into()));
    }
    fn fields<'a>(line: &'a str, key: &str, n: usize) -> Option<Vec<&'a str>> {
        let mut it = line.split_whitespace();
        (it.next()? == key).then_some(())?;
        let v: Vec<&str> = it.collect();
        (v.len() == n).then_some(v)
    }
    let parse3 = |line: &str, key: &str| -> Result<[f64; 3]> {
        let v = fields(line, key, 3).ok_or_else(|| bad(format!("expected {key}")))?;
        let mut out = [0.0; 3];
        for (o, s) in out.iter_mut().zip(v) {
            *o = s.parse().map_err(|_| bad(format!("bad number {s:?} in {key}")))?;
        }
        Ok(out)
    };
    let dims = parse3(next("DIMENSIONS")?, "DIMENSIONS")?;
    let origin = parse3(next("ORIGIN")?, "ORIGIN")?;
    let spacing = parse3(next("SPACING")?, "SPACING")?;
    let counts = dims.map(|d| d as usize);
    let grid = Grid3D::new(origin, spacing, counts).map_err(|e| bad(e.to_string()))?;
    let n: usize = fields(next("POINT_DATA")?, "POINT_DATA", 1)
        .and_then(|v| v[0].parse().ok())
        .ok_or_else(|| bad("bad POINT_DATA".into()))?;
    if n != grid.len() {
        return Err(bad(format!("POINT_DATA {n} for a grid of {} nodes", grid.len())));
    }
    let scalars = fields(next("SCALARS")?, "SCALARS", 3).ok_or_else(|| bad("bad SCALARS".into()))?;
    let name = scalars[0].to_string();
    next("LOOKUP_TABLE")?;
    let values = lines
        .flat_map(|l| l.split_whitespace())
        .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad value {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(bad(format!("{} values for {n} points", values.len())));
    }
    Ok(Volume { grid, name, values })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

/// One compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CliError::format(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::format(path, e.to_string())))
        .collect()
}

/// Triangle mesh in Wavefront OBJ (1-based faces).
pub fn write_obj(path: &Path, vertices: &[[f64; 3]], triangles: &[[usize; 3]]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        for v in vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        w.flush()
    };
    body().map_err(CliError::io(path))
}

pub fn read_obj(path: &Path) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let bad = |l: &str| CliError::format(path, format!("bad OBJ line {l:?}"));
    let (mut vs, mut ts) = (vec![], vec![]);
    for l in text.lines() {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let v: Vec<f64> = it.map(|s| s.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
                vs.push(<[f64; 3]>::try_from(v).map_err(|_| bad(l))?);
            }
            Some("f") => {
                let t: Vec<usize> =
                    it.map(|s| s.parse::<usize>().ok().filter(|&i| i > 0).map(|i| i - 1).ok_or_else(|| bad(l))).collect::<Result<_>>()?;
                ts.push(<[usize; 3]>::try_from(t).map_err(|_| bad(l))?);
            }
            _ => {}
        }
    }
    Ok((vs, ts))
}

/// 8-bit grayscale PNG, row 0 at the top.
pub fn write_png(path: &Path, width: usize, height: usize, pixels: Vec<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| CliError::format(path, "pixel count does not match the image size"))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::format(path, e.to_string()))
}
