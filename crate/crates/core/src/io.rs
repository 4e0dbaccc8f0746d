//! File formats: PFM depth, PNG masks and label images, JSON / JSON lines,
//! and Wavefront OBJ meshes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{GrayImage, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_string(path, &text)
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut text = String::new();
    for v in values {
        text.push_str(&serde_json::to_string(v)?);
        text.push('\n');
    }
    write_string(path, &text)
}

/// Single-channel PFM; rows are stored bottom to top as the format requires.
pub fn write_pfm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut w = create(path)?;
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", grid.width(), grid.height()).into_bytes();
    for y in (0..grid.height()).rev() {
        for v in grid.row(y) {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Grid<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes).map_err(|m| Error::format(path, m))
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<Grid<f64>, String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("unknown PFM magic {other:?}")),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PFM dimension {s:?}"));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let scale: f64 = fields[3].parse().map_err(|_| format!("bad PFM scale {:?}", fields[3]))?;
    let need = w * h * channels * 4;
    let data = bytes.get(pos..pos + need).ok_or("truncated PFM data")?;
    let value = |i: usize| {
        let b = [data[4 * i], data[4 * i + 1], data[4 * i + 2], data[4 * i + 3]];
        (if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
    };
    // Color files are reduced to their first channel.
    Ok(Grid::from_fn(w, h, |x, y| value(((h - 1 - y) * w + x) * channels)))
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgb8())
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    create(path)?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// 8-bit label image (class maps, anchor maps) read verbatim.
pub fn read_labels(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    Grid::from_vec(img.width() as usize, img.height() as usize, img.into_raw())
}

pub fn write_labels(path: &Path, labels: &Grid<u8>) -> Result<()> {
    create(path)?;
    let img = GrayImage::from_raw(labels.width() as u32, labels.height() as u32, labels.as_slice().to_vec())
        .expect("grid dimensions match buffer");
    img.save(path).map_err(|e| image_err(path, e))
}

/// Grayscale PNG scaled to `[0, 1]`.
pub fn read_gray(path: &Path) -> Result<Grid<f64>> {
    Ok(read_labels(path)?.map(|&v| v as f64 / 255.0))
}

pub fn write_gray(path: &Path, grid: &Grid<f64>) -> Result<()> {
    write_labels(path, &grid.map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

/// Mask PNG: values above 127 are set.
pub fn read_mask(path: &Path) -> Result<Mask> {
    Ok(read_labels(path)?.map(|&v| v > 127))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_labels(path, &mask.map(|&v| if v { 255 } else { 0 }))
}

pub fn rgb_to_grid(img: &RgbImage) -> Grid<[f64; 3]> {
    Grid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0.map(|c| c as f64 / 255.0)
    })
}

/// Mean channel intensity in `[0, 1]`.
pub fn rgb_to_gray(img: &RgbImage) -> Grid<f64> {
    Grid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        p.iter().map(|&c| c as f64).sum::<f64>() / (3.0 * 255.0)
    })
}

pub fn gray_image(grid: &Grid<f64>) -> GrayImage {
    GrayImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        Luma([(grid.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

/// One named group of an OBJ file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjObject {
    pub name: String,
    pub material: Option<String>,
    pub vertices: Vec<[f64; 3]>,
    pub uvs: Vec<[f64; 2]>,
    /// Zero-based indices into this object's own vertices.
    pub faces: Vec<[usize; 3]>,
}

/// Writes objects with `v`/`vt`/`f` records; faces reference `v/vt` pairs
/// when the object has texture coordinates.
pub fn write_obj(path: &Path, objects: &[ObjObject], mtllib: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(lib) = mtllib {
        out.push_str(&format!("mtllib {lib}\n"));
    }
    let (mut v_base, mut vt_base) = (1, 1);
    for o in objects {
        out.push_str(&format!("o {}\n", o.name));
        if let Some(m) = &o.material {
            out.push_str(&format!("usemtl {m}\n"));
        }
        for v in &o.vertices {
            out.push_str(&format!("v {} {} {}\n", v[0] as f32, v[1] as f32, v[2] as f32));
        }
        for t in &o.uvs {
            out.push_str(&format!("vt {} {}\n", t[0] as f32, t[1] as f32));
        }
        let textured = o.uvs.len() == o.vertices.len() && !o.uvs.is_empty();
        for f in &o.faces {
            let idx = |i: usize| {
                if textured {
                    format!("{}/{}", v_base + i, vt_base + i)
                } else {
                    format!("{}", v_base + i)
                }
            };
            out.push_str(&format!("f {} {} {}\n", idx(f[0]), idx(f[1]), idx(f[2])));
        }
        v_base += o.vertices.len();
        vt_base += o.uvs.len();
    }
    write_string(path, &out)
}

/// Reads the subset of OBJ produced by [`write_obj`]: triangles, `v`, `vt`, `o`, `usemtl`.
pub fn parse_obj(text: &str) -> std::result::Result<Vec<ObjObject>, String> {
    let mut objects: Vec<ObjObject> = Vec::new();
    let mut v_base = 0usize;
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        let err = |m: &str| format!("line {}: {m}", n + 1);
        let floats = |k: usize| -> std::result::Result<Vec<f64>, String> {
            if rest.len() < k {
                return Err(err("too few values"));
            }
            rest[..k].iter().map(|s| s.parse::<f64>().map_err(|_| err("bad number"))).collect()
        };
        if tag != "o" && tag != "mtllib" && !tag.starts_with('#') && objects.is_empty() {
            objects.push(ObjObject::default());
        }
        match tag {
            "o" => {
                if let Some(o) = objects.last() {
                    v_base += o.vertices.len();
                }
                objects.push(ObjObject {
                    name: rest.join(" "),
                    ..ObjObject::default()
                });
            }
            "usemtl" => objects.last_mut().unwrap().material = rest.first().map(|s| s.to_string()),
            "v" => {
                let v = floats(3)?;
                objects.last_mut().unwrap().vertices.push([v[0], v[1], v[2]]);
            }
            "vt" => {
                let t = floats(2)?;
                objects.last_mut().unwrap().uvs.push([t[0], t[1]]);
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(err("only triangles are supported"));
                }
                let o = objects.last_mut().unwrap();
                let mut face = [0; 3];
                for (k, s) in rest.iter().enumerate() {
                    let first = s.split('/').next().unwrap_or("");
                    let i: usize = first.parse().map_err(|_| err("bad face index"))?;
                    if i <= v_base || i > v_base + o.vertices.len() {
                        return Err(err("face index out of range"));
                    }
                    face[k] = i - 1 - v_base;
                }
                o.faces.push(face);
            }
            _ => {}
        }
    }
    Ok(objects)
}

pub fn read_obj(path: &Path) -> Result<Vec<ObjObject>> {
    parse_obj(&read_to_string(path)?).map_err(|m| Error::format(path, m))
}
