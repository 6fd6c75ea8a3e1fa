//! Image loading, Canny edge detection and background removal.
//!
//! Every image holds exactly one produce item on a background. The item is
//! recovered by flood-filling the background inward from the image border,
//! stopping at edge pixels, and keeping the largest region the fill never
//! reached.

use std::collections::VecDeque;
use std::path::Path;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Rec.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Gradient magnitudes at or below this are treated as flat.
const FLAT_GRADIENT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(Error::mismatch(width * height, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixels.
    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Writes a PNG, or a binary PPM when the extension is `.ppm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_ppm = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        let bytes = if is_ppm {
            self.encode_ppm()
        } else {
            self.encode_png(path)?
        };
        write_atomic(path, &bytes)
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    fn encode_png(&self, path: &Path) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buffer = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("pixel buffer matches dimensions");
        let mut bytes = Vec::new();
        buffer
            .write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)
            .map_err(|e| Error::Encode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(bytes)
    }
}

/// Single-channel image with intensities in `[0, 255]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(Error::mismatch(width * height, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
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
}

/// Canny parameters.
///
/// With `relative` set (the default) the thresholds are fractions of the
/// largest gradient magnitude found in the image; otherwise they are
/// absolute Sobel magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    pub blur_sigma: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub relative: bool,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            blur_sigma: 1.4,
            low_threshold: 0.1,
            high_threshold: 0.3,
            relative: true,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if !(self.low_threshold > 0.0 && self.low_threshold <= self.high_threshold) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < low_threshold <= high_threshold, got {} and {}",
                self.low_threshold, self.high_threshold
            )));
        }
        Ok(())
    }

    /// Side length of the Gaussian kernel, `2 * ceil(3 sigma) + 1`.
    pub fn kernel_size(&self) -> usize {
        2 * kernel_radius(self.blur_sigma) + 1
    }
}

/// Boolean per-pixel edge map produced by [`detect_edges`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let edges = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            edges,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn iter_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| (i % self.width, i / self.width))
    }
}

/// Per-pixel produce membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundMask {
    width: usize,
    height: usize,
    member: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: usize, height: usize, member: Vec<bool>) -> Result<Self> {
        if member.len() != width * height {
            return Err(Error::mismatch(width * height, member.len()));
        }
        Ok(Self {
            width,
            height,
            member,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.member[y * self.width + x]
    }

    pub fn area(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Debug dump as a binary PGM (P5); produce pixels are white.
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.member.iter().map(|&m| if m { 255u8 } else { 0 }));
        write_atomic(path, &out)
    }
}

/// Decodes a PNG, binary PPM, or JPEG file. The format is sniffed from the
/// file contents.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(decode_err("unsupported or unrecognized format".into()));
    }
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let pixels = rgb.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, pixels)
}

/// Rec.601 luma, rounded to the nearest integer.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let y = LUMA[0] * r as f64 + LUMA[1] * g as f64 + LUMA[2] * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Canny edge detection: Gaussian blur, Sobel gradients, non-maximum
/// suppression along the quantized gradient direction, and hysteresis.
/// Convolutions clamp coordinates at the image border.
pub fn detect_edges(img: &GrayImage, params: &EdgeParams) -> Result<EdgeMap> {
    params.validate()?;
    let kernel = params.kernel_size();
    if img.width < kernel || img.height < kernel {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            kernel,
        });
    }
    let (w, h) = (img.width, img.height);
    let plane: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    let blurred = gaussian_blur(&plane, w, h, params.blur_sigma);
    let (magnitude, direction) = sobel(&blurred, w, h);
    let thinned = non_maximum_suppression(&magnitude, &direction, w, h);

    let (low, high) = if params.relative {
        let max = magnitude.iter().copied().fold(0.0, f64::max);
        (params.low_threshold * max, params.high_threshold * max)
    } else {
        (params.low_threshold, params.high_threshold)
    };
    let edges = hysteresis(&thinned, w, h, low, high);
    Ok(EdgeMap {
        width: w,
        height: h,
        edges,
    })
}

/// Separates the produce from the background.
///
/// The background is every pixel reachable from a non-edge border pixel by
/// 4-connected steps over non-edge pixels. Everything else is a foreground
/// candidate, and the largest 8-connected candidate region becomes the mask.
pub fn extract_foreground(img: &RgbImage, edges: &EdgeMap) -> Result<ForegroundMask> {
    let (w, h) = (img.width, img.height);
    if edges.width != w || edges.height != h {
        return Err(Error::mismatch(
            format!("{w}x{h} edge map"),
            format!("{}x{}", edges.width, edges.height),
        ));
    }

    let mut background = vec![false; w * h];
    let mut queue = VecDeque::new();
    let border = (0..w)
        .flat_map(|x| [(x, 0), (x, h - 1)])
        .chain((0..h).flat_map(|y| [(0, y), (w - 1, y)]));
    for (x, y) in border {
        let i = y * w + x;
        if !edges.edges[i] && !background[i] {
            background[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for (nx, ny) in neighbors4(x, y, w, h) {
            let j = ny * w + nx;
            if !edges.edges[j] && !background[j] {
                background[j] = true;
                queue.push_back(j);
            }
        }
    }

    let candidates: Vec<bool> = background.iter().map(|&b| !b).collect();
    let member = largest_component(&candidates, w, h);
    if !member.iter().any(|&m| m) {
        return Err(Error::ExtractionFailed(format!("{w}x{h} image")));
    }
    Ok(ForegroundMask {
        width: w,
        height: h,
        member,
    })
}

/// Grayscale conversion, edge detection, and foreground extraction in one
/// call. `name` identifies the image in extraction errors.
pub fn segment(img: &RgbImage, params: &EdgeParams, name: &str) -> Result<ForegroundMask> {
    let edges = detect_edges(&to_grayscale(img), params)?;
    extract_foreground(img, &edges).map_err(|e| match e {
        Error::ExtractionFailed(_) => Error::ExtractionFailed(name.to_string()),
        other => other,
    })
}

fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

fn gaussian_blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            horizontal[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * row[clamp_index(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * horizontal[clamp_index(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gradient direction quantized to four bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Horizontal,
    Diagonal,
    Vertical,
    AntiDiagonal,
}

fn sobel(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<Direction>) {
    let at = |x: isize, y: isize| plane[clamp_index(y, h) * w + clamp_index(x, w)];
    let mut magnitude = vec![0.0; w * h];
    let mut direction = vec![Direction::Horizontal; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            magnitude[i] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            direction[i] = if !(22.5..157.5).contains(&angle) {
                Direction::Horizontal
            } else if angle < 67.5 {
                Direction::Diagonal
            } else if angle < 112.5 {
                Direction::Vertical
            } else {
                Direction::AntiDiagonal
            };
        }
    }
    (magnitude, direction)
}

/// Keeps a pixel when it is a local maximum across the edge. Ties resolve
/// toward the pixel on the positive side, so a symmetric ridge yields a
/// one-pixel-wide line.
fn non_maximum_suppression(magnitude: &[f64], direction: &[Direction], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| magnitude[clamp_index(y, h) * w + clamp_index(x, w)];
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = magnitude[i];
            if m <= FLAT_GRADIENT {
                continue;
            }
            let (before, after) = match direction[i] {
                Direction::Horizontal => (at(x - 1, y), at(x + 1, y)),
                Direction::Diagonal => (at(x - 1, y - 1), at(x + 1, y + 1)),
                Direction::Vertical => (at(x, y - 1), at(x, y + 1)),
                Direction::AntiDiagonal => (at(x + 1, y - 1), at(x - 1, y + 1)),
            };
            if m >= before && m > after {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thinned: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edges = vec![false; w * h];
    let mut stack = Vec::new();
    for (i, &m) in thinned.iter().enumerate() {
        if m > FLAT_GRADIENT && m >= high {
            edges[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        for (nx, ny) in neighbors8(x, y, w, h) {
            let j = ny * w + nx;
            if !edges[j] && thinned[j] > FLAT_GRADIENT && thinned[j] >= low {
                edges[j] = true;
                stack.push(j);
            }
        }
    }
    edges
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
        .into_iter()
        .filter_map(move |(dx, dy)| offset(x, y, dx, dy, w, h))
}

fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .filter_map(move |(dx, dy)| offset(x, y, dx, dy, w, h))
}

#[inline]
fn offset(x: usize, y: usize, dx: isize, dy: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x.checked_add_signed(dx)?;
    let ny = y.checked_add_signed(dy)?;
    (nx < w && ny < h).then_some((nx, ny))
}

/// Largest 8-connected region of `set`; the first region in raster order
/// wins ties.
fn largest_component(set: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut label = vec![0usize; w * h];
    let mut best = (0usize, 0usize); // (label, size)
    let mut next = 1;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !set[start] || label[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for (nx, ny) in neighbors8(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if set[j] && label[j] == 0 {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        if size > best.1 {
            best = (id, size);
        }
    }
    label.iter().map(|&l| best.1 > 0 && l == best.0).collect()
}
