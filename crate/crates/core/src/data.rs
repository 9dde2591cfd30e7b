//! Images, thermometer binarization, augmentation and synthetic corpora.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// 8-bit image stored channel-major: `pixels[(c * height + r) * width + col]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} pixels for a {channels}x{height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self { channels, height, width, pixels })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, pixels: vec![0; channels * height * width] }
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> u8 {
        self.pixels[(c * self.height + r) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: u8) {
        self.pixels[(c * self.height + r) * self.width + col] = v;
    }
}

/// Thermometer code parameters. Thresholds are spread evenly strictly inside
/// `[intensity_low, intensity_high]`; intensities are clamped to that range
/// first, which is how cut-out ranges such as `[20, 255]` are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinarizationConfig {
    pub threshold_count: u32,
    pub intensity_low: u8,
    pub intensity_high: u8,
}

impl Default for BinarizationConfig {
    fn default() -> Self {
        Self { threshold_count: 31, intensity_low: 0, intensity_high: 255 }
    }
}

impl BinarizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_count == 0 {
            return Err(Error::Config("threshold_count must be at least 1".into()));
        }
        if self.intensity_low >= self.intensity_high {
            return Err(Error::Config(format!(
                "intensity_low ({}) must be below intensity_high ({})",
                self.intensity_low, self.intensity_high
            )));
        }
        Ok(())
    }

    /// `t_k = low + k * (high - low) / (count + 1)` for `k = 1..=count`.
    pub fn thresholds(&self) -> Vec<f64> {
        let low = self.intensity_low as f64;
        let span = self.intensity_high as f64 - low;
        let step = span / (self.threshold_count as f64 + 1.0);
        (1..=self.threshold_count).map(|k| low + k as f64 * step).collect()
    }

    /// Number of set bits for an intensity; the code is `1^n 0^(count-n)`.
    pub fn level(&self, pixel: u8) -> u32 {
        let p = pixel.clamp(self.intensity_low, self.intensity_high) as f64;
        self.thresholds().iter().take_while(|&&t| p >= t).count() as u32
    }

    /// Per-intensity levels for all 256 values.
    pub fn level_table(&self) -> [u8; 256] {
        let thresholds = self.thresholds();
        let mut table = [0u8; 256];
        for (v, slot) in table.iter_mut().enumerate() {
            let p = (v as u8).clamp(self.intensity_low, self.intensity_high) as f64;
            *slot = thresholds.iter().take_while(|&&t| p >= t).count().min(255) as u8;
        }
        table
    }
}

/// Bit planes laid out as `(channel, threshold, row, col)`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinarizedImage {
    pub channels: usize,
    pub thresholds: usize,
    pub height: usize,
    pub width: usize,
    pub bits: Vec<u8>,
}

impl BinarizedImage {
    pub fn from_bits(shape: [usize; 4], bits: Vec<u8>) -> Result<Self> {
        let [channels, thresholds, height, width] = shape;
        if bits.len() != channels * thresholds * height * width {
            return Err(Error::Shape(format!("{} bits for shape {shape:?}", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Shape("bit values must be 0 or 1".into()));
        }
        Ok(Self { channels, thresholds, height, width, bits })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.thresholds, self.height, self.width]
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bit(&self, c: usize, k: usize, r: usize, col: usize) -> u8 {
        self.bits[((c * self.thresholds + k) * self.height + r) * self.width + col]
    }
}

pub fn binarize(img: &RawImage, cfg: &BinarizationConfig) -> BinarizedImage {
    let t = cfg.threshold_count as usize;
    let plane = img.height * img.width;
    let mut bits = vec![0u8; img.channels * t * plane];
    let table = cfg.level_table();
    for c in 0..img.channels {
        for (pos, &p) in img.pixels[c * plane..(c + 1) * plane].iter().enumerate() {
            let level = table[p as usize] as usize;
            for k in 0..level {
                bits[(c * t + k) * plane + pos] = 1;
            }
        }
    }
    BinarizedImage {
        channels: img.channels,
        thresholds: t,
        height: img.height,
        width: img.width,
        bits,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AugmentConfig {
    /// Mirror columns with probability 1/2.
    pub horizontal_flip: bool,
    /// Zero-pad by this many pixels, then crop back to the original size at a
    /// random offset. Zero disables cropping.
    pub crop_pad: usize,
}

impl AugmentConfig {
    pub fn is_identity(&self) -> bool {
        !self.horizontal_flip && self.crop_pad == 0
    }
}

pub fn flip_horizontal(img: &RawImage) -> RawImage {
    let mut out = img.clone();
    for c in 0..img.channels {
        for r in 0..img.height {
            for col in 0..img.width {
                out.set(c, r, col, img.get(c, r, img.width - 1 - col));
            }
        }
    }
    out
}

/// Window at `(dy, dx)` of the image zero-padded by `pad` on every side.
/// `(pad, pad)` returns the original image.
pub fn pad_crop(img: &RawImage, pad: usize, dy: usize, dx: usize) -> RawImage {
    let mut out = RawImage::zeros(img.channels, img.height, img.width);
    for c in 0..img.channels {
        for r in 0..img.height {
            let src_r = (r + dy).wrapping_sub(pad);
            if src_r >= img.height {
                continue;
            }
            for col in 0..img.width {
                let src_c = (col + dx).wrapping_sub(pad);
                if src_c < img.width {
                    out.set(c, r, col, img.get(c, src_r, src_c));
                }
            }
        }
    }
    out
}

pub fn augment<R: Rng + ?Sized>(img: &RawImage, rng: &mut R, cfg: &AugmentConfig) -> RawImage {
    let mut out = img.clone();
    if cfg.horizontal_flip && rng.random_bool(0.5) {
        out = flip_horizontal(&out);
    }
    if cfg.crop_pad > 0 {
        let dy = rng.random_range(0..=2 * cfg.crop_pad);
        let dx = rng.random_range(0..=2 * cfg.crop_pad);
        out = pad_crop(&out, cfg.crop_pad, dy, dx);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Example {
    Raw(RawImage),
    Bits(BinarizedImage),
}

impl Example {
    /// The network input for this example, binarizing raw images with `cfg`.
    pub fn to_bits(&self, cfg: &BinarizationConfig) -> BinarizedImage {
        match self {
            Example::Raw(img) => binarize(img, cfg),
            Example::Bits(b) => b.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDataset {
    pub examples: Vec<(Example, u32)>,
    pub class_count: u32,
}

impl LabeledDataset {
    pub fn new(examples: Vec<(Example, u32)>, class_count: u32) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty);
        }
        if let Some((_, l)) = examples.iter().find(|(_, l)| *l >= class_count) {
            return Err(Error::Config(format!("label {l} outside {class_count} classes")));
        }
        Ok(Self { examples, class_count })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.examples.iter().map(|(_, l)| *l)
    }

    /// The first `n` examples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        Self {
            examples: self.examples.iter().take(n).cloned().collect(),
            class_count: self.class_count,
        }
    }
}

/// Every `bits`-bit string labelled with its parity. Bit `i` of the example is
/// bit `bits - 1 - i` of the enumeration index, so the string reads MSB first.
pub fn make_parity_dataset(bits: usize) -> Result<LabeledDataset> {
    if bits > 16 {
        return Err(Error::Size(format!("parity over {bits} bits (max 16)")));
    }
    if bits == 0 {
        return Err(Error::Size("parity over 0 bits".into()));
    }
    let examples = (0..1u32 << bits)
        .map(|v| {
            let b: Vec<u8> = (0..bits).map(|i| ((v >> (bits - 1 - i)) & 1) as u8).collect();
            let img = BinarizedImage { channels: 1, thresholds: 1, height: 1, width: bits, bits: b };
            (Example::Bits(img), v.count_ones() & 1)
        })
        .collect();
    LabeledDataset::new(examples, 2)
}
