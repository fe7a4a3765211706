//! Frame-directory IO: 8-bit PNGs named `%05d.png`, sRGB on disk and linear
//! in memory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{bail, ensure, Context, Result};
use harmovid_core::video::{AlphaVideo, Dims, MaskVideo, VideoTensor};

pub fn linear_to_srgb(v: f32) -> f64 {
    let v = (v as f64).clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(s: f64) -> f64 {
    if s <= 0.040_45 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

/// Rounds half up onto `0..=255`.
fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_srgb(v: f32) -> u8 {
    quantize(linear_to_srgb(v))
}

pub fn decode_srgb(byte: u8) -> f32 {
    static TABLE: OnceLock<[f32; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|b| srgb_to_linear(b as f64 / 255.0) as f32))[byte as usize]
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("{t:05}.png"))
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

fn read_png(path: &Path) -> Result<Frame> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let mut data = vec![0; reader.output_buffer_size().context("frame too large")?];
    let info = reader.next_frame(&mut data)?;
    data.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => bail!("{}: unexpanded palette image", path.display()),
    };
    Ok(Frame {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        data,
    })
}

/// Frame files of `dir` in order, rejecting gaps in the numbering.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut indices = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading frame directory {}", dir.display()))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            let index: usize = stem.parse().with_context(|| format!("{}: bad frame name {name}", dir.display()))?;
            indices.push(index);
        }
    }
    indices.sort_unstable();
    ensure!(!indices.is_empty(), "{}: no frames", dir.display());
    for (expected, &index) in indices.iter().enumerate() {
        if index != expected {
            bail!("{}: missing frame {expected:05}", dir.display());
        }
    }
    Ok(indices.into_iter().map(|t| frame_path(dir, t)).collect())
}

/// Reads every frame as `(width, height, gray-or-rgb bytes)`.
fn read_frames(dir: &Path, want_rgb: bool) -> Result<(Dims, Vec<u8>)> {
    let paths = list_frames(dir)?;
    let mut data = Vec::new();
    let mut size = None;
    for path in &paths {
        let f = read_png(path)?;
        match size {
            None => size = Some((f.width, f.height)),
            Some(s) if s != (f.width, f.height) => bail!(
                "{}: frame is {}x{}, earlier frames are {}x{}",
                path.display(),
                f.width,
                f.height,
                s.0,
                s.1
            ),
            Some(_) => {}
        }
        for px in f.data.chunks_exact(f.channels) {
            match (want_rgb, f.channels) {
                (true, 1 | 2) => data.extend([px[0]; 3]),
                (true, _) => data.extend(&px[..3]),
                (false, 1 | 2) => data.push(px[0]),
                (false, _) => {
                    let luma = 0.2126 * px[0] as f64 + 0.7152 * px[1] as f64 + 0.0722 * px[2] as f64;
                    data.push(luma.round() as u8);
                }
            }
        }
    }
    let (w, h) = size.expect("at least one frame");
    Ok((Dims::new(paths.len(), h, w), data))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "png") {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub fn write_video(dir: &Path, video: &VideoTensor) -> Result<()> {
    prepare(dir)?;
    for t in 0..video.frames() {
        let bytes: Vec<u8> = video.frame(t).iter().map(|&v| encode_srgb(v)).collect();
        write_png(&frame_path(dir, t), video.width(), video.height(), png::ColorType::Rgb, &bytes)?;
    }
    Ok(())
}

pub fn read_video(dir: &Path) -> Result<VideoTensor> {
    let (dims, bytes) = read_frames(dir, true)?;
    Ok(VideoTensor::from_vec(dims, bytes.iter().map(|&b| decode_srgb(b)).collect())?)
}

pub fn write_mask(dir: &Path, mask: &MaskVideo) -> Result<()> {
    prepare(dir)?;
    let d = mask.dims();
    for t in 0..d.frames {
        let bytes: Vec<u8> = mask.frame(t).iter().map(|&m| m * 255).collect();
        write_png(&frame_path(dir, t), d.width, d.height, png::ColorType::Grayscale, &bytes)?;
    }
    Ok(())
}

/// Pixels at or above 128 are foreground.
pub fn read_mask(dir: &Path) -> Result<MaskVideo> {
    let (dims, bytes) = read_frames(dir, false)?;
    Ok(MaskVideo::from_fn(dims, |t, y, x| {
        bytes[(t * dims.height + y) * dims.width + x] >= 128
    })?)
}

pub fn write_alpha(dir: &Path, alpha: &AlphaVideo) -> Result<()> {
    prepare(dir)?;
    let d = alpha.dims();
    for t in 0..d.frames {
        let bytes: Vec<u8> = alpha.frame(t).iter().map(|&a| quantize(a as f64)).collect();
        write_png(&frame_path(dir, t), d.width, d.height, png::ColorType::Grayscale, &bytes)?;
    }
    Ok(())
}

pub fn read_alpha(dir: &Path) -> Result<AlphaVideo> {
    let (dims, bytes) = read_frames(dir, false)?;
    Ok(AlphaVideo::from_vec(dims, bytes.iter().map(|&b| b as f32 / 255.0).collect())?)
}
