//! Raster primitives shared by the image-processing stages: 8-bit RGB and
//! grayscale images, channel extraction, binary masks, and integral images.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected {expected}-channel image, got {got}")]
    InvalidChannelCount { expected: u8, got: u8 },
    #[error("invalid image dimensions {width}x{height}x{channels}")]
    InvalidDimensions { width: u32, height: u32, channels: u8 },
    #[error("data length {got} does not match {width}x{height}x{channels}")]
    DataLengthMismatch { width: u32, height: u32, channels: u8, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit raster with 1 (grayscale) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImageError::InvalidDimensions { width, height, channels });
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::DataLengthMismatch { width, height, channels, got: data.len() });
        }
        Ok(Self { width, height, channels, data })
    }

    /// Solid-color image; `fill.len()` must equal the channel count.
    pub fn filled(width: u32, height: u32, fill: &[u8]) -> Result<Self, ImageError> {
        let channels = fill.len() as u8;
        let mut data = Vec::with_capacity(width as usize * height as usize * fill.len());
        for _ in 0..(width as usize * height as usize) {
            data.extend_from_slice(fill);
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Pixel slice of length `channels`.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        self.data[o..o + self.channels as usize].copy_from_slice(value);
    }

    /// Single-channel accessor; panics if the image is not grayscale.
    #[inline]
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        debug_assert_eq!(self.channels, 1);
        self.data[y as usize * self.width as usize + x as usize]
    }

    fn expect_channels(&self, expected: u8) -> Result<(), ImageError> {
        if self.channels != expected {
            return Err(ImageError::InvalidChannelCount { expected, got: self.channels });
        }
        Ok(())
    }

    /// Loads a PNG, PGM, or PPM file. 8-bit samples only; RGBA input is
    /// flattened to RGB, 16-bit grayscale is rescaled to 8-bit.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let dynimg = image::open(path.as_ref())?;
        let (w, h) = (dynimg.width(), dynimg.height());
        match dynimg {
            image::DynamicImage::ImageLuma8(buf) => Self::new(w, h, 1, buf.into_raw()),
            image::DynamicImage::ImageRgb8(buf) => Self::new(w, h, 3, buf.into_raw()),
            other if other.color().channel_count() == 1 => {
                Self::new(w, h, 1, other.into_luma8().into_raw())
            }
            other => Self::new(w, h, 3, other.into_rgb8().into_raw()),
        }
    }

    /// Writes the image as PNG (lossless; round-trips bit-exactly).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        match self.channels {
            1 => {
                let buf = image::GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("dims validated at construction");
                buf.save_with_format(path, image::ImageFormat::Png)?;
            }
            _ => {
                let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("dims validated at construction");
                buf.save_with_format(path, image::ImageFormat::Png)?;
            }
        }
        Ok(())
    }
}

/// One foreground bit per pixel; dimensions always match the source raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self { width, height, bits: vec![value; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Renders foreground as 255 on black, e.g. for PNG export.
    pub fn to_raster(&self) -> RasterImage {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        RasterImage::new(self.width, self.height, 1, data).expect("mask dims are valid")
    }

    /// Parses a grayscale raster as a mask: nonzero means foreground.
    pub fn from_raster(img: &RasterImage) -> Result<Self, ImageError> {
        img.expect_channels(1)?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            bits: img.data().iter().map(|&v| v != 0).collect(),
        })
    }
}

/// Cumulative sum and squared-sum tables over a grayscale image.
///
/// Entries are `u64`, exact for any 8-bit image up to 2^24 pixels per
/// window, so rectangle queries reproduce naive summation bit for bit.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl IntegralImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * (self.width as usize + 1) + x as usize
    }

    /// Sum of pixel values over `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> u64 {
        debug_assert!(x0 <= x1 && y0 <= y1 && x1 <= self.width && y1 <= self.height);
        self.sum[self.idx(x1, y1)] + self.sum[self.idx(x0, y0)]
            - self.sum[self.idx(x1, y0)]
            - self.sum[self.idx(x0, y1)]
    }

    /// Sum of squared pixel values over `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum_sq(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> u64 {
        debug_assert!(x0 <= x1 && y0 <= y1 && x1 <= self.width && y1 <= self.height);
        self.sum_sq[self.idx(x1, y1)] + self.sum_sq[self.idx(x0, y0)]
            - self.sum_sq[self.idx(x1, y0)]
            - self.sum_sq[self.idx(x0, y1)]
    }
}

/// Converts RGB to grayscale with the standard video-luma weights
/// (0.299, 0.587, 0.114), rounding to the nearest integer.
pub fn to_gray(img: &RasterImage) -> Result<RasterImage, ImageError> {
    img.expect_channels(3)?;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let v = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RasterImage::new(img.width(), img.height(), 1, data)
}

/// Extracts the red channel of an RGB image unchanged.
pub fn red_channel(img: &RasterImage) -> Result<RasterImage, ImageError> {
    img.expect_channels(3)?;
    let data = img.data().chunks_exact(3).map(|px| px[0]).collect();
    RasterImage::new(img.width(), img.height(), 1, data)
}

/// Builds cumulative sum / squared-sum tables for a grayscale image.
pub fn build_integral(img: &RasterImage) -> Result<IntegralImage, ImageError> {
    img.expect_channels(1)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sum_sq = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        let mut row_sq = 0u64;
        for x in 0..w {
            let v = img.data()[y * w + x] as u64;
            row += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
            sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
        }
    }
    Ok(IntegralImage { width: img.width(), height: img.height(), sum, sum_sq })
}
