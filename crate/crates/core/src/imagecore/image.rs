use crate::error::{Error, Result};

/// Dense row-major image with interleaved channels and a top-left origin.
///
/// Used for radiance, accumulated energy, analog digital values and
/// cotangents alike; the layer functions decide what the numbers mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{height}x{width}x{channels} = {} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(row, col, channel)` for every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Image {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape_str(), other.shape_str()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Inner product over all samples, summed in storage order.
    pub fn dot(&self, other: &Image) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn channel_sum(&self, channel: usize) -> f64 {
        self.data.iter().skip(channel).step_by(self.channels).sum()
    }

    /// Rounds every sample through `f32`, emulating 32-bit storage.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// Physical image-plane offset of pixel `(row, col)` from the optical center,
/// in the same length unit as `pixel_size`. Returns `(a, b)` with `a` along
/// the columns and `b` along the rows.
#[inline]
pub fn plane_coords(row: usize, col: usize, height: usize, width: usize, pixel_size: f64) -> (f64, f64) {
    let a = (col as f64 - (width as f64 - 1.0) / 2.0) * pixel_size;
    let b = (row as f64 - (height as f64 - 1.0) / 2.0) * pixel_size;
    (a, b)
}

/// Three-channel scene irradiance, validated to be finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage(Image);

impl RadianceImage {
    pub fn new(image: Image) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::shape("3 channels", format!("{} channels", image.channels())));
        }
        for &v in image.data() {
            if !v.is_finite() {
                return Err(Error::Precondition("non-finite radiance".into()));
            }
            if v < 0.0 {
                return Err(Error::Precondition("negative radiance".into()));
            }
        }
        Ok(RadianceImage(image))
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }
}

impl std::ops::Deref for RadianceImage {
    type Target = Image;

    fn deref(&self) -> &Image {
        &self.0
    }
}

/// Per-pixel scene depth in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{height}x{width} depth samples"),
                format!("{} samples", data.len()),
            ));
        }
        if data.iter().any(|d| !d.is_finite()) {
            return Err(Error::Precondition("non-finite depth".into()));
        }
        Ok(DepthMap {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Self {
        DepthMap {
            height,
            width,
            data: vec![depth; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Effective-pixel mask; `true` marks a pixel that belongs to the region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl RoiMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{height}x{width} mask samples"),
                format!("{} samples", data.len()),
            ));
        }
        Ok(RoiMask {
            height,
            width,
            data,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        RoiMask {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        RoiMask {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub(crate) fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height == height && self.width == width {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{height}x{width} mask"),
                format!("{}x{} mask", self.height, self.width),
            ))
        }
    }
}

/// Final three-channel 16-bit digital values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage16 {
    height: usize,
    width: usize,
    data: Vec<u16>,
}

impl RawImage16 {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::shape(
                format!("{height}x{width}x3 samples"),
                format!("{} samples", data.len()),
            ));
        }
        Ok(RawImage16 {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u16 {
        self.data[(row * self.width + col) * Self::CHANNELS + channel]
    }

    /// Digital values as floats, unscaled.
    pub fn to_image(&self) -> Image {
        Image::from_vec(
            self.height,
            self.width,
            Self::CHANNELS,
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("shape checked at construction")
    }
}
