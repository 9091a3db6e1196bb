//! PNG encodings for plate images.
//!
//! | file   | format            | meaning                                 |
//! |--------|-------------------|-----------------------------------------|
//! | color  | 8-bit RGB         | as captured                             |
//! | depth  | 16-bit grayscale  | distance in units of 0.01 cm            |
//! | mask   | 8-bit grayscale   | 0 background, 255 food                  |
//! | labels | 8-bit grayscale   | 0 background, `k ≥ 1` is class `k − 1`  |

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{DatasetError, Rgb};
use crate::grid::{Grid, LabelGrid, Mask};


fn image_err(path: &Path, message: impl ToString) -> DatasetError {
    DatasetError::Image { file: path.to_path_buf(), message: message.to_string() }
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io { path: path.to_path_buf(), source: e }
        }
    })
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded, DatasetError> {
    let mut decoder = png::Decoder::new(open(path)?);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let mut bytes = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut bytes).map_err(|e| image_err(path, e))?;
    bytes.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes,
    })
}

fn expect_format(
    path: &Path,
    d: &Decoded,
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<(), DatasetError> {
    if d.color != color || d.depth != depth {
        return Err(image_err(
            path,
            format!("expected {color:?} {depth:?}, found {:?} {:?}", d.color, d.depth),
        ));
    }
    Ok(())
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<(), DatasetError> {
    let file = File::create(path)
        .map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(bytes).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<Grid<Rgb>, DatasetError> {
    let d = decode(path)?;
    expect_format(path, &d, png::ColorType::Rgb, png::BitDepth::Eight)?;
    let px = d.bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Grid::from_vec(d.height, d.width, px).expect("decoder buffer matches dimensions"))
}

pub fn write_rgb_png(path: &Path, image: &Grid<Rgb>) -> Result<(), DatasetError> {
    let bytes: Vec<u8> = image.iter().flatten().copied().collect();
    encode(path, image.width(), image.height(), png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

pub fn read_depth_png(path: &Path) -> Result<Grid<f64>, DatasetError> {
    let d = decode(path)?;
    expect_format(path, &d, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let values = d
        .bytes
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 100.0)
        .collect();
    Ok(Grid::from_vec(d.height, d.width, values).expect("decoder buffer matches dimensions"))
}

/// Depth is stored rounded to 0.01 cm; values must fit in 16 bits.
pub fn write_depth_png(path: &Path, depth: &Grid<f64>) -> Result<(), DatasetError> {
    let mut bytes = Vec::with_capacity(depth.len() * 2);
    for (r, c, &v) in depth.indexed() {
        let q = (v * 100.0).round();
        if !(0.0..=u16::MAX as f64).contains(&q) {
            return Err(image_err(path, format!("depth {v} at ({r}, {c}) does not fit 16 bits")));
        }
        bytes.extend_from_slice(&(q as u16).to_be_bytes());
    }
    encode(path, depth.width(), depth.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

fn read_gray8(path: &Path) -> Result<(usize, usize, Vec<u8>), DatasetError> {
    let d = decode(path)?;
    expect_format(path, &d, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    Ok((d.height, d.width, d.bytes))
}

pub fn read_mask_png(path: &Path) -> Result<Mask, DatasetError> {
    let (h, w, bytes) = read_gray8(path)?;
    if let Some(v) = bytes.iter().find(|v| **v != 0 && **v != 255) {
        return Err(image_err(path, format!("mask value {v} is neither 0 nor 255")));
    }
    Ok(Grid::from_vec(h, w, bytes.into_iter().map(|v| v == 255).collect()).unwrap())
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<(), DatasetError> {
    let bytes: Vec<u8> = mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
    encode(path, mask.width(), mask.height(), png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
}

pub fn read_labels_png(path: &Path) -> Result<LabelGrid, DatasetError> {
    let (h, w, bytes) = read_gray8(path)?;
    let labels = bytes.into_iter().map(|v| v.checked_sub(1)).collect();
    Ok(Grid::from_vec(h, w, labels).unwrap())
}

pub fn write_labels_png(path: &Path, labels: &LabelGrid) -> Result<(), DatasetError> {
    let mut bytes = Vec::with_capacity(labels.len());
    for l in labels.iter() {
        bytes.push(match l {
            None => 0,
            Some(k) if *k < u8::MAX => k + 1,
            Some(k) => return Err(image_err(path, format!("class {k} does not fit the label format"))),
        });
    }
    encode(path, labels.width(), labels.height(), png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
}
