//! Image and tensor ingestion: NetPBM (PGM/PPM) readers and writers plus a
//! raw little-endian float container for lossless intermediates.
//!
//! Pixel values are normalized to [-1, 1] on load. Only square images are
//! accepted so the Nyquist frequency `side / 2` is unambiguous.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Magic tag of the raw tensor container.
pub const TENSOR_MAGIC: &[u8; 8] = b"SPECTNSR";

/// A square H x W x C real-valued field, row-major, channel-interleaved,
/// canonically in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        if height != width {
            return Err(Error::NonSquare { height, width });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pixel value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Zero-filled tensor.
    pub fn zeros(side: usize, channels: usize) -> Self {
        Self::new(side, side, channels, vec![0.0; side * side * channels]).expect("valid shape")
    }

    pub fn side(&self) -> usize {
        self.height
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Extract one channel as a contiguous side*side plane.
    pub fn channel_plane(&self, channel: usize) -> Vec<f64> {
        assert!(channel < self.channels, "channel out of range");
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Build a tensor from per-channel planes.
    pub fn from_planes(side: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; side * side * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != side * side {
                return Err(Error::ShapeMismatch("plane size".into()));
            }
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self::new(side, side, channels, data)
    }
}

/// Map a pixel in [0, maxval] to [-1, 1].
pub fn normalize(pixel: u32, maxval: u32) -> f64 {
    2.0 * pixel as f64 / maxval as f64 - 1.0
}

/// Inverse of [`normalize`]; rounds to the nearest level and clamps.
pub fn denormalize(value: f64, maxval: u32) -> u32 {
    let p = (value + 1.0) * maxval as f64 / 2.0;
    p.round().clamp(0.0, maxval as f64) as u32
}

struct PnmHeader {
    format: u8, // 2, 3, 5, 6
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

/// Pull ASCII tokens from a PNM header, skipping whitespace and `#` comments.
fn parse_header(bytes: &[u8], path: &Path) -> Result<PnmHeader> {
    let err = |msg: &str| Error::parse(path.display().to_string(), msg.to_string());
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(err("missing PNM magic"));
    }
    let format = match bytes[1] {
        b'2' => 2,
        b'3' => 3,
        b'5' => 5,
        b'6' => 6,
        other => {
            return Err(Error::parse(
                path.display().to_string(),
                format!("unsupported PNM type P{}", other as char),
            ))
        }
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text
            .parse()
            .map_err(|_| err("numeric field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err("zero dimension"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::parse(
            path.display().to_string(),
            format!("unsupported maxval {maxval} (expected 255 or 65535)"),
        ));
    }
    // exactly one whitespace byte separates header from binary payload
    if (format == 5 || format == 6) && pos < bytes.len() {
        pos += 1;
    }
    Ok(PnmHeader {
        format,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos,
    })
}

/// Load a NetPBM image (P2/P3/P5/P6, maxval 255 or 65535, square) and
/// normalize its pixels to [-1, 1].
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, path)?;
    if header.height != header.width {
        return Err(Error::NonSquare {
            height: header.height,
            width: header.width,
        });
    }
    let channels = if header.format == 3 || header.format == 6 {
        3
    } else {
        1
    };
    let count = header.width * header.height * channels;
    let mut pixels = Vec::with_capacity(count);
    match header.format {
        2 | 3 => {
            let text = std::str::from_utf8(&bytes[header.data_offset..])
                .map_err(|_| Error::parse(path.display().to_string(), "non-ASCII pixel data"))?;
            for token in text.split_ascii_whitespace().take(count) {
                let v: u32 = token.parse().map_err(|_| {
                    Error::parse(path.display().to_string(), format!("bad pixel '{token}'"))
                })?;
                if v > header.maxval {
                    return Err(Error::parse(
                        path.display().to_string(),
                        format!("pixel {v} exceeds maxval {}", header.maxval),
                    ));
                }
                pixels.push(v);
            }
        }
        5 | 6 => {
            let payload = &bytes[header.data_offset.min(bytes.len())..];
            if header.maxval == 255 {
                if payload.len() < count {
                    return Err(Error::parse(path.display().to_string(), "truncated pixel data"));
                }
                pixels.extend(payload[..count].iter().map(|&b| b as u32));
            } else {
                if payload.len() < 2 * count {
                    return Err(Error::parse(path.display().to_string(), "truncated pixel data"));
                }
                for pair in payload[..2 * count].chunks_exact(2) {
                    pixels.push(u16::from_be_bytes([pair[0], pair[1]]) as u32);
                }
            }
        }
        _ => unreachable!(),
    }
    if pixels.len() != count {
        return Err(Error::parse(path.display().to_string(), "truncated pixel data"));
    }
    let data = pixels
        .iter()
        .map(|&p| normalize(p, header.maxval))
        .collect();
    ImageTensor::new(header.height, header.width, channels, data)
}

/// Write a tensor as binary NetPBM (P5 for one channel, P6 for three),
/// maxval 255.
pub fn save_image(t: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let magic = if t.channels() == 1 { "P5" } else { "P6" };
    let mut out = Vec::with_capacity(t.data().len() + 32);
    write!(out, "{magic}\n{} {}\n255\n", t.width(), t.height()).unwrap();
    out.extend(t.data().iter().map(|&v| denormalize(v, 255) as u8));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Persist a tensor in the raw container: `SPECTNSR`, u32 rank, u32 dims,
/// little-endian f32 payload.
pub fn save_tensor(t: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = [t.height() as u32, t.width() as u32, t.channels() as u32];
    let mut out = Vec::with_capacity(16 + 4 * t.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let err = |msg: &str| Error::parse(path.display().to_string(), msg.to_string());
    if bytes.len() < 12 || &bytes[..8] != TENSOR_MAGIC {
        return Err(err("magic mismatch"));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rank != 3 {
        return Err(err("expected rank 3"));
    }
    if bytes.len() < 12 + 4 * rank {
        return Err(err("truncated shape"));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 12 + 4 * i;
        *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let count: usize = dims.iter().product();
    let payload = &bytes[12 + 4 * rank..];
    if payload.len() != 4 * count {
        return Err(err(&format!(
            "payload length {} does not match shape ({} values)",
            payload.len(),
            count
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ImageTensor::new(dims[0], dims[1], dims[2], data)
}

/// Mean-pool by an integer factor (the only downsampling the pipeline uses).
pub fn mean_pool(t: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    if factor == 0 || t.side() % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "pooling factor {factor} does not divide side {}",
            t.side()
        )));
    }
    let side = t.side() / factor;
    let channels = t.channels();
    let mut data = vec![0.0; side * side * channels];
    let norm = 1.0 / (factor * factor) as f64;
    for r in 0..side {
        for col in 0..side {
            for c in 0..channels {
                let mut acc = 0.0;
                for dr in 0..factor {
                    for dc in 0..factor {
                        acc += t.get(r * factor + dr, col * factor + dc, c);
                    }
                }
                data[(r * side + col) * channels + c] = acc * norm;
            }
        }
    }
    ImageTensor::new(side, side, channels, data)
}
