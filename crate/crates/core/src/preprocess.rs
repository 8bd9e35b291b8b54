//! Grayscale signature image preprocessing: canvas centering, Otsu background
//! removal, inversion, bilinear resize and center crop. Binary PGM (P5) I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 255;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("image must be non-empty, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Data(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }
}

/// `a * b` as a 256-bit value `(hi, lo)`.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const M: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & M);
    let (b1, b0) = (b >> 64, b & M);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & M) + (p10 & M);
    let lo = (p00 & M) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// Between-class variance of a split, up to a positive constant, as the
/// fraction `num / den`.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn greater(self, other: Score) -> bool {
        mul_wide(self.num, other.den) > mul_wide(other.num, self.den)
    }
}

const EXACT_LIMIT: u64 = 1 << 26;

/// Otsu threshold: the `t` maximizing the between-class variance of
/// `{<= t}` and `{> t}`, smallest `t` on ties. Candidates run from the
/// lowest occupied intensity up, so a single-intensity histogram yields that
/// intensity.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Result<u8> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::Data("Otsu threshold of an empty histogram".into()));
    }
    let first = histogram.iter().position(|&c| c > 0).expect("non-empty");
    let sum: u128 = histogram
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    if total > EXACT_LIMIT {
        return Ok(otsu_f64(histogram, first));
    }
    let (n, s) = (total as i128, sum as i128);
    let mut best_t = first;
    let mut best: Option<Score> = None;
    let (mut n0, mut s0) = (0i128, 0i128);
    for t in 0..256 {
        n0 += histogram[t] as i128;
        s0 += t as i128 * histogram[t] as i128;
        if t < first {
            continue;
        }
        let n1 = n - n0;
        let score = if n1 == 0 {
            Score { num: 0, den: 1 }
        } else {
            let diff = (s * n0 - n * s0).unsigned_abs();
            Score {
                num: diff * diff,
                den: (n0 * n1) as u128,
            }
        };
        if best.is_none_or(|b| score.greater(b)) {
            best = Some(score);
            best_t = t;
        }
    }
    Ok(best_t as u8)
}

fn otsu_f64(histogram: &[u64; 256], first: usize) -> u8 {
    let n: f64 = histogram.iter().map(|&c| c as f64).sum();
    let s: f64 = histogram.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut n0, mut s0) = (0.0, 0.0);
    let mut best = (-1.0, first);
    for (t, &c) in histogram.iter().enumerate() {
        n0 += c as f64;
        s0 += t as f64 * c as f64;
        if t < first {
            continue;
        }
        let n1 = n - n0;
        let v = if n1 == 0.0 {
            0.0
        } else {
            (s * n0 - n * s0).powi(2) / (n0 * n1)
        };
        if v > best.0 {
            best = (v, t);
        }
    }
    best.1 as u8
}

/// Place `img` on a white canvas with equal margins; the odd pixel of margin
/// goes right and bottom.
pub fn center_on_canvas(img: &GrayImage, canvas_w: usize, canvas_h: usize) -> Result<GrayImage> {
    if canvas_w < img.width || canvas_h < img.height {
        return Err(Error::Data(format!(
            "{}x{} image does not fit a {canvas_w}x{canvas_h} canvas",
            img.width, img.height
        )));
    }
    let (ox, oy) = ((canvas_w - img.width) / 2, (canvas_h - img.height) / 2);
    let mut out = vec![BACKGROUND; canvas_w * canvas_h];
    for y in 0..img.height {
        let dst = (oy + y) * canvas_w + ox;
        out[dst..dst + img.width].copy_from_slice(&img.pixels[y * img.width..(y + 1) * img.width]);
    }
    GrayImage::new(canvas_w, canvas_h, out)
}

/// Set pixels above the Otsu threshold to white, then invert so the
/// background becomes 0. Returns the threshold used.
pub fn remove_background_and_invert(img: &GrayImage) -> (GrayImage, u8) {
    let t = otsu_threshold(&img.histogram()).expect("image is non-empty");
    let pixels = img
        .pixels
        .iter()
        .map(|&p| if p > t { 0 } else { 255 - p })
        .collect();
    (
        GrayImage {
            pixels,
            ..img.clone()
        },
        t,
    )
}

/// Corner-aligned source positions for `out` samples over `len` pixels, as
/// `(index, fraction numerator)` with denominator `den`.
fn sample_grid(len: usize, out: usize) -> (Vec<(usize, u64)>, u64) {
    if out == 1 || len == 1 {
        return (vec![(0, 0); out], 1);
    }
    let den = (out - 1) as u64;
    let grid = (0..out)
        .map(|i| {
            let num = (i * (len - 1)) as u64;
            ((num / den) as usize, num % den)
        })
        .collect();
    (grid, den)
}

/// Bilinear resize with corner-aligned sampling: output pixel `(x, y)` reads
/// source position `(x (w - 1) / (out_w - 1), y (h - 1) / (out_h - 1))`.
/// Values are rounded half up, computed in exact integer arithmetic.
pub fn resize_bilinear(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config(format!("resize target must be positive, got {out_h}x{out_w}")));
    }
    let (xs, dx) = sample_grid(img.width, out_w);
    let (ys, dy) = sample_grid(img.height, out_h);
    let d = dx * dy;
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, fy) in &ys {
        let y1 = (y0 + 1).min(img.height - 1);
        for &(x0, fx) in &xs {
            let x1 = (x0 + 1).min(img.width - 1);
            let p = |x, y| img.get(x, y) as u64;
            let v = (dx - fx) * (dy - fy) * p(x0, y0)
                + fx * (dy - fy) * p(x1, y0)
                + (dx - fx) * fy * p(x0, y1)
                + fx * fy * p(x1, y1);
            out.push(((2 * v + d) / (2 * d)) as u8);
        }
    }
    GrayImage::new(out_w, out_h, out)
}

/// Centered `crop_h x crop_w` window; the odd pixel of margin goes right and
/// bottom.
pub fn center_crop(img: &GrayImage, crop_h: usize, crop_w: usize) -> Result<GrayImage> {
    if crop_h == 0 || crop_w == 0 || crop_h > img.height || crop_w > img.width {
        return Err(Error::Data(format!(
            "cannot crop {crop_h}x{crop_w} from a {}x{} image",
            img.height, img.width
        )));
    }
    let (ox, oy) = ((img.width - crop_w) / 2, (img.height - crop_h) / 2);
    let mut out = Vec::with_capacity(crop_w * crop_h);
    for y in oy..oy + crop_h {
        out.extend_from_slice(&img.pixels[y * img.width + ox..y * img.width + ox + crop_w]);
    }
    GrayImage::new(crop_w, crop_h, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub resize_h: usize,
    pub resize_w: usize,
    pub crop_h: usize,
    pub crop_w: usize,
}

impl PipelineConfig {
    /// Default resize (170x242) and crop (150x220) on the given canvas.
    pub fn with_canvas(canvas_w: usize, canvas_h: usize) -> Self {
        Self {
            canvas_w,
            canvas_h,
            resize_h: 170,
            resize_w: 242,
            crop_h: 150,
            crop_w: 220,
        }
    }
}

/// Canvas, background removal and inversion, resize, crop. Returns the
/// processed image and the Otsu threshold.
pub fn preprocess(img: &GrayImage, cfg: &PipelineConfig) -> Result<(GrayImage, u8)> {
    let canvas = center_on_canvas(img, cfg.canvas_w, cfg.canvas_h)?;
    let (clean, t) = remove_background_and_invert(&canvas);
    let resized = resize_bilinear(&clean, cfg.resize_h, cfg.resize_w)?;
    Ok((center_crop(&resized, cfg.crop_h, cfg.crop_w)?, t))
}

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated {
            offset: *pos,
            what: "PGM header".into(),
        });
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("PGM {what} is not a number")))
}

/// Parse a binary PGM (P5) with maxval up to 255. Pixels are rescaled to
/// 0..255 when maxval is smaller.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let width = pgm_number(bytes, &mut pos, "width")?;
    let height = pgm_number(bytes, &mut pos, "height")?;
    let maxval = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} unsupported, need 1..=255")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("PGM header must end with one whitespace byte".into()));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    if bytes.len() < pos + n {
        return Err(Error::Truncated {
            offset: bytes.len(),
            what: format!("PGM raster of {n} bytes"),
        });
    }
    let raster = &bytes[pos..pos + n];
    let pixels = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&p| ((p.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    GrayImage::new(width, height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    decode_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
