//! Image buffers, the fixed tonemap, sensor noise and PNG I/O.
//!
//! Tonemap: exposure 1, clamp to [0, 1], sRGB opto-electronic transfer,
//! round to 8 bits. Sensor noise is added after the transfer curve and
//! before quantization.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb32FImage, RgbImage};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

/// Linear-light RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub width: u32,
    pub height: u32,
    pub texels: Vec<[f32; 3]>,
}

impl LinearImage {
    pub fn constant(width: u32, height: u32, rgb: [f32; 3]) -> Self {
        LinearImage {
            width,
            height,
            texels: vec![rgb; (width * height) as usize],
        }
    }

    /// Loads an 8-bit image (PNG or JPEG) and decodes its sRGB encoding.
    pub fn load_srgb(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::image(format!("reading {}", path.display()), e))?
            .to_rgb8();
        Ok(Self::from_srgb8(&img))
    }

    pub fn from_srgb8(img: &RgbImage) -> Self {
        let lut: Vec<f32> = (0..=255u8).map(|v| srgb_to_linear(f64::from(v) / 255.0) as f32).collect();
        LinearImage {
            width: img.width(),
            height: img.height(),
            texels: img
                .pixels()
                .map(|p| [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]])
                .collect(),
        }
    }

    /// Bilinear lookup with `(u, v)` in `[0, 1]^2`, `v = 0` at the top row.
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let x = (u.clamp(0.0, 1.0) * f64::from(self.width) - 0.5).max(0.0);
        let y = (v.clamp(0.0, 1.0) * f64::from(self.height) - 0.5).max(0.0);
        let x0 = (x.floor() as u32).min(self.width - 1);
        let y0 = (y.floor() as u32).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - f64::from(x0), y - f64::from(y0));
        let at = |x: u32, y: u32| self.texels[(y * self.width + x) as usize];
        let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
        std::array::from_fn(|i| {
            let top = f64::from(a[i]) * (1.0 - fx) + f64::from(b[i]) * fx;
            let bottom = f64::from(c[i]) * (1.0 - fx) + f64::from(d[i]) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

pub fn linear_to_srgb(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(x: f64) -> f64 {
    if x <= 0.040_45 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}

/// Linear radiance to display-space values in [0, 1].
pub fn tonemap(width: u32, height: u32, radiance: &[[f32; 3]]) -> Rgb32FImage {
    let data: Vec<f32> = radiance
        .iter()
        .flat_map(|p| p.map(|c| linear_to_srgb(f64::from(c)) as f32))
        .collect();
    ImageBuffer::from_raw(width, height, data).expect("buffer size matches")
}

pub fn quantize(display: &Rgb32FImage) -> RgbImage {
    let data: Vec<u8> = display
        .as_raw()
        .iter()
        .map(|&c| (f64::from(c).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    ImageBuffer::from_raw(display.width(), display.height(), data).expect("buffer size matches")
}

/// Adds i.i.d. `N(0, sigma)` to every channel of a display-space image and
/// clamps to [0, 1]. `sigma = 0` returns the input unchanged.
pub fn add_sensor_noise(image: &Rgb32FImage, sigma: f64, seed: u64) -> Result<Rgb32FImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::field("sigma", "noise standard deviation must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = seed::stream(seed);
    let mut out = image.clone();
    for c in out.iter_mut() {
        let noisy = f64::from(*c) + normal.sample(&mut rng);
        *c = noisy.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

pub fn write_png_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(format!("writing {}", path.display()), e))
}

pub fn write_png_ids(path: &Path, width: u32, height: u32, ids: &[u32]) -> Result<()> {
    let data: Vec<u16> = ids
        .iter()
        .map(|&id| u16::try_from(id).expect("instance ids are validated to fit 16 bits"))
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, data).expect("buffer size matches");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(format!("writing {}", path.display()), e))
}

/// Reads a 16-bit single-channel instance-ID map.
pub fn read_png_ids(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let img = image::open(path)
        .map_err(|e| Error::image(format!("reading {}", path.display()), e))?;
    let luma = match img {
        image::DynamicImage::ImageLuma16(l) => l,
        other => {
            return Err(Error::Structure(format!(
                "{} is {:?}, expected 16-bit grayscale",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = luma.dimensions();
    Ok((w, h, luma.into_raw().into_iter().map(u32::from).collect()))
}

#[cfg(test)]
mod tests {
    use image::Rgb;

    use super::*;

    fn constant(v: f32, w: u32, h: u32) -> Rgb32FImage {
        ImageBuffer::from_pixel(w, h, Rgb([v; 3]))
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImageBuffer::from_fn(17, 9, |x, y| Rgb([x as f32 / 17.0, y as f32 / 9.0, 0.3]));
        let out = add_sensor_noise(&img, 0.0, 5).unwrap();
        assert_eq!(out.as_raw(), img.as_raw());
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(add_sensor_noise(&constant(0.5, 16, 16), -0.1, 1).is_err());
    }

    #[test]
    fn noise_never_exceeds_one() {
        let out = add_sensor_noise(&constant(1.0, 64, 64), 0.2, 3).unwrap();
        assert!(out.as_raw().iter().all(|&c| c <= 1.0));
    }

    #[test]
    fn noise_std_matches_sigma() {
        // 1000 x 1000 pixels, one channel inspected: 10^6 samples
        let img = constant(0.5, 1000, 1000);
        let out = add_sensor_noise(&img, 0.04, 77).unwrap();
        let diffs: Vec<f64> = out.pixels().map(|p| f64::from(p[0]) - 0.5).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.0395..=0.0405).contains(&sd), "sd {sd}");
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = constant(0.5, 32, 32);
        let a = add_sensor_noise(&img, 0.05, 9).unwrap();
        let b = add_sensor_noise(&img, 0.05, 9).unwrap();
        let c = add_sensor_noise(&img, 0.05, 10).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
        assert_ne!(a.as_raw(), c.as_raw());
    }

    #[test]
    fn srgb_transfer_round_trips() {
        for i in 0..=100 {
            let x = f64::from(i) / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn id_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.png");
        let ids: Vec<u32> = (0..16 * 16).map(|i| (i * 257) % 65536).collect();
        write_png_ids(&path, 16, 16, &ids).unwrap();
        let (w, h, back) = read_png_ids(&path).unwrap();
        assert_eq!((w, h), (16, 16));
        assert_eq!(back, ids);
    }
}
