//! Image and volume I/O plus voxel-level preprocessing.
//!
//! Supported on-disk formats:
//!
//! * binary PGM (`P5`), 8-bit or 16-bit big-endian samples;
//! * raw slice-major volumes described by a small `key=value` manifest:
//!
//! ```text
//! dims=D,H,W
//! spacing_mm=Z,Y,X
//! elem=u8|u16|i16
//! data=volume.raw
//! byte_order=le
//! levels=N        (optional)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::otsu::Histogram;

/// Sample width of a PGM file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Pgm8,
    Pgm16,
}

impl PgmFormat {
    pub fn levels(self) -> u32 {
        match self {
            PgmFormat::Pgm8 => 256,
            PgmFormat::Pgm16 => 65536,
        }
    }
}

/// A 2D gray image with `levels` gray values; pixels are row-major from the top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    levels: u32,
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, levels: u32, pixels: Vec<u16>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dim(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        check_levels(levels)?;
        check_range(&pixels, levels)?;
        Ok(GrayImage {
            width,
            height,
            levels,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn histogram(&self) -> Histogram {
        Histogram::from_values(&self.pixels, self.levels as usize)
    }
}

/// A slice-major gray volume with physical spacing `(z, y, x)` in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    depth: usize,
    height: usize,
    width: usize,
    levels: u32,
    voxels: Vec<u16>,
    spacing_mm: [f64; 3],
}

impl Volume {
    pub fn new(
        dims: [usize; 3],
        levels: u32,
        voxels: Vec<u16>,
        spacing_mm: [f64; 3],
    ) -> Result<Self> {
        let [depth, height, width] = dims;
        if voxels.len() != depth * height * width {
            return Err(Error::Dim(format!(
                "{} voxels for dims {depth}x{height}x{width}",
                voxels.len()
            )));
        }
        if spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Manifest(format!(
                "spacing must be strictly positive, got {spacing_mm:?}"
            )));
        }
        check_levels(levels)?;
        check_range(&voxels, levels)?;
        Ok(Volume {
            depth,
            height,
            width,
            levels,
            voxels,
            spacing_mm,
        })
    }

    /// Wraps a single image as a one-slice volume with unit spacing.
    pub fn from_image(img: &GrayImage) -> Self {
        Volume {
            depth: 1,
            height: img.height,
            width: img.width,
            levels: img.levels,
            voxels: img.pixels.clone(),
            spacing_mm: [1.0; 3],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn voxels(&self) -> &[u16] {
        &self.voxels
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> u16 {
        self.voxels[(z * self.height + y) * self.width + x]
    }

    pub fn slice(&self, z: usize) -> GrayImage {
        let n = self.height * self.width;
        GrayImage {
            width: self.width,
            height: self.height,
            levels: self.levels,
            pixels: self.voxels[z * n..(z + 1) * n].to_vec(),
        }
    }

    pub fn histogram(&self) -> Histogram {
        Histogram::from_values(&self.voxels, self.levels as usize)
    }
}

fn check_levels(levels: u32) -> Result<()> {
    if !(2..=65536).contains(&levels) {
        return Err(Error::Config(format!(
            "gray level count {levels} not in [2, 65536]"
        )));
    }
    Ok(())
}

fn check_range(values: &[u16], levels: u32) -> Result<()> {
    match values.iter().find(|&&v| u32::from(v) >= levels) {
        Some(&v) => Err(Error::Range {
            value: v.into(),
            levels,
        }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// PGM

/// Reads a binary `P5` PGM file.
pub fn load_image(path: impl AsRef<Path>, format: PgmFormat) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, format)
}

/// Reads a PGM, picking 8 or 16 bit samples from the header's maxval.
///
/// Unlike [`load_image`], the image gets `maxval + 1` levels, so images
/// written by [`save_image`] with fewer levels come back unchanged.
pub fn load_image_auto(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_pgm_header(&bytes)?;
    let format = if header.maxval > 255 {
        PgmFormat::Pgm16
    } else {
        PgmFormat::Pgm8
    };
    let img = decode_pgm(&bytes, format)?;
    GrayImage::new(img.width, img.height, header.maxval + 1, img.pixels)
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("expected binary PGM magic \"P5\"".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated or non-numeric PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PGM header value overflows".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing separator after PGM maxval".into()));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    Ok(PgmHeader {
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos + 1,
    })
}

fn decode_pgm(bytes: &[u8], format: PgmFormat) -> Result<GrayImage> {
    let header = parse_pgm_header(bytes)?;
    let wide = header.maxval > 255;
    if wide != (format == PgmFormat::Pgm16) {
        return Err(Error::Format(format!(
            "maxval {} does not match requested {format:?}",
            header.maxval
        )));
    }
    let n = header.width * header.height;
    let sample_bytes = if wide { 2 } else { 1 };
    let payload = &bytes[header.data_offset..];
    if payload.len() < n * sample_bytes {
        return Err(Error::Format(format!(
            "truncated raster: {} of {} bytes",
            payload.len(),
            n * sample_bytes
        )));
    }
    let pixels: Vec<u16> = if wide {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload[..n].iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(&v) = pixels.iter().find(|&&v| u32::from(v) > header.maxval) {
        return Err(Error::Format(format!(
            "sample {v} exceeds maxval {}",
            header.maxval
        )));
    }
    GrayImage::new(header.width, header.height, format.levels(), pixels)
}

/// Writes a binary PGM; 8-bit when the image has at most 256 levels.
pub fn save_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let maxval = img.levels - 1;
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    if maxval > 255 {
        for &p in &img.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        out.extend(img.pixels.iter().map(|&p| p as u8));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Raw volumes

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemType {
    U8,
    U16,
    I16,
}

impl ElemType {
    fn bytes(self) -> usize {
        match self {
            ElemType::U8 => 1,
            ElemType::U16 | ElemType::I16 => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ElemType::U8 => "u8",
            ElemType::U16 => "u16",
            ElemType::I16 => "i16",
        }
    }
}

/// Volume samples as stored on disk, before windowing or quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub elem: ElemType,
    /// Gray-level count declared by the manifest, if any.
    pub levels: Option<u32>,
    pub samples: Vec<i32>,
}

impl RawVolume {
    /// Converts unsigned samples directly; signed data must go through [`window_rescale`].
    pub fn into_volume(self) -> Result<Volume> {
        let capacity = match self.elem {
            ElemType::U8 => 256,
            ElemType::U16 => 65536,
            ElemType::I16 => {
                return Err(Error::Manifest(
                    "signed samples need an intensity window before use".into(),
                ))
            }
        };
        let levels = match self.levels {
            Some(l) if l < 2 || l > capacity => {
                return Err(Error::Manifest(format!(
                    "levels={l} does not fit elem {}",
                    self.elem.name()
                )))
            }
            Some(l) => l,
            None => capacity,
        };
        let voxels = self.samples.iter().map(|&s| s as u16).collect();
        Volume::new(self.dims, levels, voxels, self.spacing_mm)
    }
}

struct Manifest {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    elem: ElemType,
    data: PathBuf,
    big_endian: bool,
    levels: Option<u32>,
}

fn parse_triple<T: std::str::FromStr>(key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = value
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Manifest(format!("{key}: cannot parse {value:?}")))?;
    <[T; 3]>::try_from(parts).map_err(|_| Error::Manifest(format!("{key}: expected 3 values")))
}

fn parse_manifest(text: &str, base: &Path) -> Result<Manifest> {
    let mut dims = None;
    let mut spacing = None;
    let mut elem = None;
    let mut data = None;
    let mut big_endian = false;
    let mut levels = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Manifest(format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "dims" => dims = Some(parse_triple::<usize>(key, value)?),
            "spacing_mm" => spacing = Some(parse_triple::<f64>(key, value)?),
            "elem" => {
                elem = Some(match value {
                    "u8" => ElemType::U8,
                    "u16" => ElemType::U16,
                    "i16" => ElemType::I16,
                    other => return Err(Error::Manifest(format!("unknown elem {other:?}"))),
                })
            }
            "data" => data = Some(base.join(value)),
            "byte_order" => {
                big_endian = match value {
                    "le" => false,
                    "be" => true,
                    other => return Err(Error::Manifest(format!("unknown byte_order {other:?}"))),
                }
            }
            "levels" => {
                levels = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| Error::Manifest(format!("levels: cannot parse {value:?}")))?,
                )
            }
            other => return Err(Error::Manifest(format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::Manifest(format!("missing required key {k:?}"));
    let spacing_mm = spacing.ok_or_else(|| missing("spacing_mm"))?;
    if spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Manifest(format!(
            "spacing must be strictly positive, got {spacing_mm:?}"
        )));
    }
    Ok(Manifest {
        dims: dims.ok_or_else(|| missing("dims"))?,
        spacing_mm,
        elem: elem.ok_or_else(|| missing("elem"))?,
        data: data.ok_or_else(|| missing("data"))?,
        big_endian,
        levels,
    })
}

/// Reads a manifest and its raw payload without interpreting the samples.
pub fn load_raw_volume(manifest_path: impl AsRef<Path>) -> Result<RawVolume> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let m = parse_manifest(&text, base)?;
    let payload = fs::read(&m.data).map_err(|e| Error::io(&m.data, e))?;
    let n: usize = m.dims.iter().product();
    let expected = n * m.elem.bytes();
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let samples = match m.elem {
        ElemType::U8 => payload.iter().map(|&b| i32::from(b)).collect(),
        ElemType::U16 | ElemType::I16 => payload
            .chunks_exact(2)
            .map(|c| {
                let pair = [c[0], c[1]];
                match (m.elem, m.big_endian) {
                    (ElemType::U16, false) => i32::from(u16::from_le_bytes(pair)),
                    (ElemType::U16, true) => i32::from(u16::from_be_bytes(pair)),
                    (_, false) => i32::from(i16::from_le_bytes(pair)),
                    (_, true) => i32::from(i16::from_be_bytes(pair)),
                }
            })
            .collect(),
    };
    Ok(RawVolume {
        dims: m.dims,
        spacing_mm: m.spacing_mm,
        elem: m.elem,
        levels: m.levels,
        samples,
    })
}

/// Loads an unsigned volume (`u8` gives 256 levels, `u16` gives 65536).
pub fn load_volume(manifest_path: impl AsRef<Path>) -> Result<Volume> {
    load_raw_volume(manifest_path)?.into_volume()
}

/// Writes `vol` as a manifest plus a little-endian raw file next to it.
///
/// The raw file takes the manifest's stem with a `.raw` extension. Volumes
/// with at most 256 levels are stored as `u8`, others as `u16`; the level
/// count is recorded so it survives a round trip.
pub fn save_volume(manifest_path: impl AsRef<Path>, vol: &Volume) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let raw_name = format!(
        "{}.raw",
        manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("volume")
    );
    let elem = if vol.levels <= 256 {
        ElemType::U8
    } else {
        ElemType::U16
    };
    let payload: Vec<u8> = match elem {
        ElemType::U8 => vol.voxels.iter().map(|&v| v as u8).collect(),
        _ => vol.voxels.iter().flat_map(|v| v.to_le_bytes()).collect(),
    };
    let raw_path = manifest_path.with_file_name(&raw_name);
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;

    let [d, h, w] = vol.dims();
    let [sz, sy, sx] = vol.spacing_mm;
    let mut text = String::new();
    let _ = writeln!(text, "dims={d},{h},{w}");
    let _ = writeln!(text, "spacing_mm={sz},{sy},{sx}");
    let _ = writeln!(text, "elem={}", elem.name());
    let _ = writeln!(text, "data={raw_name}");
    let _ = writeln!(text, "byte_order=le");
    let _ = writeln!(text, "levels={}", vol.levels);
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Default lung window in Hounsfield units.
pub const DEFAULT_WINDOW: (i32, i32) = (-1000, 400);

/// Maps `v` to `round(255 * clamp((v - low) / (high - low), 0, 1))`.
pub fn window_value(v: i32, low: i32, high: i32) -> u16 {
    let t = (f64::from(v) - f64::from(low)) / (f64::from(high) - f64::from(low));
    (255.0 * t.clamp(0.0, 1.0)).round() as u16
}

/// Linearly windows raw samples into 256 gray levels.
pub fn window_rescale(raw: &RawVolume, low: i32, high: i32) -> Result<Volume> {
    if low >= high {
        return Err(Error::Window { low, high });
    }
    let voxels = raw
        .samples
        .iter()
        .map(|&v| window_value(v, low, high))
        .collect();
    Volume::new(raw.dims, 256, voxels, raw.spacing_mm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MedianFilterSpec {
    pub window_radius: usize,
}

impl MedianFilterSpec {
    pub fn side(&self) -> usize {
        2 * self.window_radius + 1
    }

    /// Pixel count K of the window.
    pub fn window_len(&self) -> usize {
        self.side() * self.side()
    }
}

/// Lower-middle element of `values`, which is reordered in place.
fn lower_median(values: &mut [u16]) -> u16 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Median filter with edge replication at the borders.
pub fn median_filter(img: &GrayImage, spec: MedianFilterSpec) -> Result<GrayImage> {
    let side = spec.side();
    if side > img.width.min(img.height) {
        return Err(Error::Spec(format!(
            "window side {side} exceeds image {}x{}",
            img.width, img.height
        )));
    }
    let r = spec.window_radius as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut window = Vec::with_capacity(spec.window_len());
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            window.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    window.push(img.pixels[yy * img.width + xx]);
                }
            }
            out.push(lower_median(&mut window));
        }
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        levels: img.levels,
        pixels: out,
    })
}

/// Applies [`median_filter`] to every slice independently.
pub fn median_filter_volume(vol: &Volume, spec: MedianFilterSpec) -> Result<Volume> {
    let mut voxels = Vec::with_capacity(vol.voxels.len());
    for z in 0..vol.depth {
        voxels.extend_from_slice(&median_filter(&vol.slice(z), spec)?.pixels);
    }
    Ok(Volume {
        voxels,
        ..vol.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationSpec {
    pub input_levels: u32,
    pub output_levels: u32,
}

impl QuantizationSpec {
    pub fn new(input_levels: u32, output_levels: u32) -> Result<Self> {
        if output_levels < 2 || output_levels > input_levels {
            return Err(Error::Config(format!(
                "need 2 <= G <= L, got G={output_levels}, L={input_levels}"
            )));
        }
        Ok(QuantizationSpec {
            input_levels,
            output_levels,
        })
    }

    pub fn map(&self, v: u16) -> u16 {
        (u64::from(v) * u64::from(self.output_levels) / u64::from(self.input_levels)) as u16
    }
}

fn quantize_values(values: &[u16], spec: QuantizationSpec) -> Result<Vec<u16>> {
    values
        .iter()
        .map(|&v| {
            if u32::from(v) >= spec.input_levels {
                Err(Error::Range {
                    value: v.into(),
                    levels: spec.input_levels,
                })
            } else {
                Ok(spec.map(v))
            }
        })
        .collect()
}

/// Uniform floor binning `v -> floor(v * G / L)`.
pub fn quantize(vol: &Volume, spec: QuantizationSpec) -> Result<Volume> {
    Ok(Volume {
        voxels: quantize_values(&vol.voxels, spec)?,
        levels: spec.output_levels,
        ..vol.clone()
    })
}

pub fn quantize_image(img: &GrayImage, spec: QuantizationSpec) -> Result<GrayImage> {
    Ok(GrayImage {
        pixels: quantize_values(&img.pixels, spec)?,
        levels: spec.output_levels,
        ..img.clone()
    })
}
