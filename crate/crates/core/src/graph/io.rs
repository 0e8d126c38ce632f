//! Edge lists, label files, PGM images and signal CSV files.

use super::{generate, Graph, GraphKind};
use crate::error::{Error, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(display(path), e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let t = line.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| (k + 1, t.split_whitespace().collect()))
    })
}

/// Reads whitespace-separated `u v w` lines (0-indexed; `w` defaults to 1).
/// The node count is one more than the largest index seen.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let name = display(path);
    let text = read(path)?;
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (line, fields) in data_lines(&text) {
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(&name, line, "expected `u v w`"));
        }
        let idx = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(&name, line, format!("bad node index '{t}'")))
        };
        let (u, v) = (idx(fields[0])?, idx(fields[1])?);
        let w = match fields.get(2) {
            Some(t) => t
                .parse::<f64>()
                .map_err(|_| Error::parse(&name, line, format!("bad weight '{t}'")))?,
            None => 1.0,
        };
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::parse(&name, line, format!("non-positive weight {w}")));
        }
        if u == v {
            return Err(Error::parse(&name, line, format!("self-loop at node {u}")));
        }
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Graph::from_edges(n, edges)
}

/// Writes one `u v w` line per undirected edge.
pub fn save_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (i, j, w) in g.edges() {
        writeln!(out, "{i} {j} {w}").map_err(|e| Error::io(display(path), e))?;
    }
    out.flush().map_err(|e| Error::io(display(path), e))
}

/// Reads `u c` lines into a node → class map.
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<usize, usize>> {
    let path = path.as_ref();
    let name = display(path);
    let text = read(path)?;
    let mut labels = BTreeMap::new();
    for (line, fields) in data_lines(&text) {
        if fields.len() != 2 {
            return Err(Error::parse(&name, line, "expected `u c`"));
        }
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(&name, line, format!("bad integer '{t}'")))
        };
        let (u, c) = (num(fields[0])?, num(fields[1])?);
        if labels.insert(u, c).is_some() {
            return Err(Error::parse(&name, line, format!("node {u} labelled twice")));
        }
    }
    Ok(labels)
}

/// Reads an 8-bit binary PGM as a row-major 4-neighbor grid and its
/// intensities scaled to `[0,1]`. Returns `(graph, signal, rows, cols)`.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<(Graph, Vec<f64>, usize, usize)> {
    let path = path.as_ref();
    let name = display(path);
    let bytes = fs::read(path).map_err(|e| Error::io(&name, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::parse(&name, 1, "not a binary (P5) PGM"));
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::parse(&name, 1, e.to_string()))?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::parse(&name, 1, "only 8-bit grayscale PGM is supported"));
    }
    let luma = img.to_luma8();
    let (cols, rows) = (luma.width() as usize, luma.height() as usize);
    let signal = luma.as_raw().iter().map(|&p| p as f64 / 255.0).collect();
    let (g, _) = generate(
        &GraphKind::Grid2d {
            rows,
            cols,
            periodic: false,
        },
        0,
    )?;
    Ok((g, signal, rows, cols))
}

/// Writes values clamped to `[0,1]` as an 8-bit binary PGM.
pub fn save_pgm(path: impl AsRef<Path>, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    let path = path.as_ref();
    crate::error::check_len(rows * cols, values.len())?;
    let raw: Vec<u8> = values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(cols as u32, rows as u32, raw)
        .ok_or_else(|| Error::Parameter("image buffer size mismatch".into()))?;
    let mut out = create(path)?;
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)
        .map_err(|e| Error::io(display(path), std::io::Error::other(e)))?;
    out.flush().map_err(|e| Error::io(display(path), e))
}

/// Writes a `node,value` CSV.
pub fn save_signal_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::io(display(path), std::io::Error::other(e));
    w.write_record(["node", "value"]).map_err(err)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(display(path), e))
}

/// Reads a `node,value` CSV into `(node, value)` pairs in file order.
pub fn load_signal_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    let name = display(path);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(&name, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(&name, line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::parse(&name, line, "expected `node,value`"));
        }
        let node = rec[0]
            .parse::<usize>()
            .map_err(|_| Error::parse(&name, line, format!("bad node '{}'", &rec[0])))?;
        let value = rec[1]
            .parse::<f64>()
            .map_err(|_| Error::parse(&name, line, format!("bad value '{}'", &rec[1])))?;
        out.push((node, value));
    }
    Ok(out)
}

/// Writes the `new,original` node map produced by component extraction.
pub fn save_index_map(path: impl AsRef<Path>, map: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::io(display(path), std::io::Error::other(e));
    w.write_record(["new", "original"]).map_err(err)?;
    for (k, &o) in map.iter().enumerate() {
        w.write_record([k.to_string(), o.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(display(path), e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(display(path), e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(display(path), std::io::Error::other(e)))
}
