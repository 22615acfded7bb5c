//! Image frames and file formats: PNG/PGM/PPM images, Middlebury `.flo`
//! flow files and binary PNG masks. All writes go through a temporary file
//! in the destination directory followed by a rename.

use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::fields::{FlowField, ScalarField};

/// Sentinel stored in the first four bytes of a `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Row-major, channel-interleaved image with samples in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("channels", format!("{channels} is not 1 or 3")));
        }
        if data.len() != width * height * channels {
            return Err(Error::SizeMismatch(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::invalid("data", format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Interleaves planes into a frame, clamping to [0, 1].
    ///
    /// Panics if `planes` is not 1 or 3 fields of equal size.
    pub fn from_planes(planes: &[ScalarField]) -> Self {
        assert!(planes.len() == 1 || planes.len() == 3);
        let (w, h) = (planes[0].width(), planes[0].height());
        assert!(planes.iter().all(|p| p.width() == w && p.height() == h));
        let ch = planes.len();
        let mut data = vec![0.0f32; w * h * ch];
        for (i, px) in data.chunks_mut(ch).enumerate() {
            for (c, v) in px.iter_mut().enumerate() {
                *v = planes[c].data()[i].clamp(0.0, 1.0) as f32;
            }
        }
        Self {
            width: w,
            height: h,
            channels: ch,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copy of one channel as a real-valued field.
    pub fn channel(&self, c: usize) -> ScalarField {
        let ch = self.channels;
        let data = self.data.iter().skip(c).step_by(ch).map(|&v| v as f64).collect();
        ScalarField::from_vec(self.width, self.height, data).expect("consistent frame")
    }

    /// Rounds every sample to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantize_u8(&self) -> ImageFrame {
        ImageFrame {
            data: self
                .data
                .iter()
                .map(|&v| to_u8(v) as f32 / 255.0)
                .collect(),
            ..self.clone()
        }
    }
}

#[inline]
fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::IoFailure {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

/// Writes `bytes` to `path` via a sibling temporary file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Reads a PNG, PGM or PPM file. 8-bit samples are divided by 255 and 16-bit
/// samples by 65535; alpha channels are dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageFrame> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let format = image::guess_format(&bytes)
        .ok()
        .filter(|f| matches!(f, ImageFormat::Png | ImageFormat::Pnm))
        .ok_or_else(|| Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PNG, PGM or PPM stream".into(),
        })?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    frame_from_dynamic(img).map_err(|reason| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason,
    })
}

fn frame_from_dynamic(img: DynamicImage) -> std::result::Result<ImageFrame, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => {
            (1, b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA8(b) => (
            1,
            b.into_raw().chunks(2).map(|p| p[0] as f32 / 255.0).collect(),
        ),
        DynamicImage::ImageLumaA16(b) => (
            1,
            b.into_raw().chunks(2).map(|p| p[0] as f32 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgb16(b) => {
            (3, b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect())
        }
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw()
                .chunks(4)
                .flat_map(|p| p[..3].iter().map(|&v| v as f32 / 255.0).collect::<Vec<_>>())
                .collect(),
        ),
        DynamicImage::ImageRgba16(b) => (
            3,
            b.into_raw()
                .chunks(4)
                .flat_map(|p| p[..3].iter().map(|&v| v as f32 / 65535.0).collect::<Vec<_>>())
                .collect(),
        ),
        other => return Err(format!("unsupported pixel layout {:?}", other.color())),
    };
    ImageFrame::new(w, h, channels, data).map_err(|e| e.to_string())
}

/// Encodes a frame as 8-bit PNG bytes.
pub fn encode_png(frame: &ImageFrame) -> Vec<u8> {
    let raw: Vec<u8> = frame.data.iter().map(|&v| to_u8(v)).collect();
    let (w, h) = (frame.width as u32, frame.height as u32);
    let img = match frame.channels {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("sized")),
        _ => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("sized")),
    };
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

fn encode_pnm(frame: &ImageFrame) -> Vec<u8> {
    let magic = if frame.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.data.iter().map(|&v| to_u8(v)));
    out
}

/// Writes 8-bit samples; `.pgm`/`.ppm`/`.pnm` extensions select binary PNM,
/// anything else PNG.
pub fn write_image(frame: &ImageFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = match ext.as_deref() {
        Some("pgm") | Some("ppm") | Some("pnm") => encode_pnm(frame),
        _ => encode_png(frame),
    };
    atomic_write(path, &bytes)
}

/// Serialises a flow in Middlebury `.flo` layout.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = (flow.width(), flow.height());
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in flow.u.data().iter().zip(flow.v.data()) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().expect("4 bytes") };
    if bytes.len() < 12 {
        return Err(Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: format!("{} bytes is shorter than the 12-byte header", bytes.len()),
        });
    }
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::SizeMismatch(format!(
            "{}: declared size {w}x{h}",
            path.display()
        )));
    }
    let (w, h) = (w as usize, h as usize);
    let expect = 12 + 8 * w * h;
    if bytes.len() != expect {
        return Err(Error::SizeMismatch(format!(
            "{}: {w}x{h} needs {expect} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for p in 0..w * h {
        let off = 12 + 8 * p;
        u.push(f32::from_le_bytes(word(off)) as f64);
        v.push(f32::from_le_bytes(word(off + 4)) as f64);
    }
    FlowField::new(ScalarField::from_vec(w, h, u)?, ScalarField::from_vec(w, h, v)?)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    decode_flo(&bytes, path)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &encode_flo(flow))
}
