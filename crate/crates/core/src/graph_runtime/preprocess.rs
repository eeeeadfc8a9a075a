use image::imageops::{self, FilterType};
use image::{DynamicImage, Rgb32FImage};

use super::spec::{ChannelOrder, ModelSpec, SizePolicy};
use crate::error::{Error, Result};

/// A single image laid out as a `1 × 3 × height × width` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl InputTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != 3 * height * width {
            return Err(Error::Shape(format!(
                "input tensor {}x{} cannot hold {} values",
                height,
                width,
                data.len()
            )));
        }
        Ok(InputTensor {
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [1, 3, self.height, self.width]
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| Error::Image(format!("cannot decode image: {e}")))
}

pub fn open_image(path: &std::path::Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Turns a decoded image into the network input described by `spec`.
///
/// Under the native policy the resolution is kept. Images below
/// `spec.input.min_size` are upscaled with aspect ratio preserved until one
/// side reaches the minimum, then mirror-padded (edge pixel repeated)
/// symmetrically on the short side.
pub fn preprocess(image: &DynamicImage, spec: &ModelSpec) -> Result<InputTensor> {
    if !image.color().has_color() {
        return Err(Error::Image(format!(
            "expected an RGB image, got {:?}",
            image.color()
        )));
    }
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Image("image has no pixels".into()));
    }
    let rgb = image.to_rgb32f();
    let rgb = match spec.input.policy {
        SizePolicy::Fixed => {
            let [h, w] = spec
                .input
                .fixed_size
                .ok_or_else(|| Error::InvalidSpec("fixed policy needs fixed_size".into()))?;
            if (rgb.height(), rgb.width()) == (h, w) {
                rgb
            } else {
                imageops::resize(&rgb, w, h, FilterType::Triangle)
            }
        }
        SizePolicy::Native => match spec.input.min_size {
            Some(min) => fit_minimum(rgb, min),
            None => rgb,
        },
    };
    Ok(normalize(&rgb, spec))
}

/// Target `(height, width)` after upscaling an image of `(h, w)` towards `min`.
pub(crate) fn upscaled_dims(h: u32, w: u32, min: [u32; 2]) -> (u32, u32) {
    if h >= min[0] && w >= min[1] {
        return (h, w);
    }
    let factor = (min[0] as f64 / h as f64)
        .min(min[1] as f64 / w as f64)
        .max(1.0);
    if factor == 1.0 {
        return (h, w);
    }
    let scale = |v: u32| ((v as f64 * factor).round() as u32).max(1);
    (scale(h), scale(w))
}

fn fit_minimum(rgb: Rgb32FImage, min: [u32; 2]) -> Rgb32FImage {
    let (h, w) = upscaled_dims(rgb.height(), rgb.width(), min);
    let rgb = if (h, w) != (rgb.height(), rgb.width()) {
        imageops::resize(&rgb, w, h, FilterType::Triangle)
    } else {
        rgb
    };
    symmetric_pad(&rgb, min[0].max(h), min[1].max(w))
}

/// Mirror index with the edge sample repeated (`... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...`).
fn mirror(i: i64, n: i64) -> u32 {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as u32
}

fn symmetric_pad(rgb: &Rgb32FImage, height: u32, width: u32) -> Rgb32FImage {
    if rgb.height() == height && rgb.width() == width {
        return rgb.clone();
    }
    let (h, w) = (rgb.height() as i64, rgb.width() as i64);
    let top = (height as i64 - h) / 2;
    let left = (width as i64 - w) / 2;
    Rgb32FImage::from_fn(width, height, |x, y| {
        *rgb.get_pixel(mirror(x as i64 - left, w), mirror(y as i64 - top, h))
    })
}

fn normalize(rgb: &Rgb32FImage, spec: &ModelSpec) -> InputTensor {
    let (h, w) = (rgb.height() as usize, rgb.width() as usize);
    let plane = h * w;
    let p = &spec.preprocessing;
    let [lo, hi] = p.pixel_range;
    let mut data = vec![0f32; 3 * plane];
    for (x, y, px) in rgb.enumerate_pixels() {
        let offset = y as usize * w + x as usize;
        for c in 0..3 {
            let src = match spec.input.channel_order {
                ChannelOrder::Rgb => c,
                ChannelOrder::Bgr => 2 - c,
            };
            let v = lo + (hi - lo) * px.0[src];
            data[c * plane + offset] = (v - p.mean[c]) / p.scale[c];
        }
    }
    InputTensor {
        height: h,
        width: w,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_runtime::spec::Tap;
    use image::{GrayImage, Rgb, RgbImage};

    fn identity_spec() -> ModelSpec {
        ModelSpec {
            model_name: "t".into(),
            graph_path: "t.onnx".into(),
            concat_dim: None,
            input: Default::default(),
            preprocessing: Default::default(),
            taps: vec![Tap::new("a", 1)],
        }
    }

    #[test]
    fn mid_gray_identity_is_constant() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(5, 4, Rgb([128, 128, 128])));
        let t = preprocess(&img, &identity_spec()).unwrap();
        assert_eq!(t.shape(), [1, 3, 4, 5]);
        let expected = 128.0 / 255.0;
        assert!(t.data.iter().all(|&v| (v - expected).abs() < 1e-7));
    }

    #[test]
    fn native_policy_keeps_resolution() {
        let img = DynamicImage::ImageRgb8(RgbImage::new(1024, 768));
        let t = preprocess(&img, &identity_spec()).unwrap();
        assert_eq!((t.height, t.width), (768, 1024));
    }

    #[test]
    fn small_image_brought_to_minimum() {
        let mut spec = identity_spec();
        spec.input.min_size = Some([75, 75]);
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(8, 8, Rgb([10, 20, 30])));
        let t = preprocess(&img, &spec).unwrap();
        assert_eq!((t.height, t.width), (75, 75));
        // a constant image stays constant through resize and padding
        assert!((t.data[0] - 10.0 / 255.0).abs() < 1e-6);
        assert!((t.data[75 * 75 + 100] - 20.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn upscale_preserves_aspect_then_pads() {
        assert_eq!(upscaled_dims(8, 8, [75, 75]), (75, 75));
        assert_eq!(upscaled_dims(10, 20, [75, 75]), (38, 75));
        assert_eq!(upscaled_dims(40, 300, [75, 75]), (40, 300));
        assert_eq!(upscaled_dims(100, 100, [75, 75]), (100, 100));

        let mut spec = identity_spec();
        spec.input.min_size = Some([75, 75]);
        let img = DynamicImage::ImageRgb8(RgbImage::new(20, 10));
        let t = preprocess(&img, &spec).unwrap();
        assert_eq!((t.height, t.width), (75, 75));
    }

    #[test]
    fn mirror_indexing() {
        let got: Vec<u32> = (-3..6).map(|i| mirror(i, 3)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 2, 1, 0]);
        // padding wider than the image wraps around
        assert_eq!(mirror(-7, 3), 0);
    }

    #[test]
    fn fixed_policy_resizes() {
        let mut spec = identity_spec();
        spec.input.policy = SizePolicy::Fixed;
        spec.input.fixed_size = Some([299, 299]);
        let img = DynamicImage::ImageRgb8(RgbImage::new(640, 480));
        let t = preprocess(&img, &spec).unwrap();
        assert_eq!((t.height, t.width), (299, 299));
    }

    #[test]
    fn mean_scale_and_bgr() {
        let mut spec = identity_spec();
        spec.input.channel_order = ChannelOrder::Bgr;
        spec.preprocessing.pixel_range = [0.0, 255.0];
        spec.preprocessing.mean = [1.0, 2.0, 3.0];
        spec.preprocessing.scale = [2.0, 2.0, 2.0];
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(1, 1, Rgb([11, 22, 33])));
        let t = preprocess(&img, &spec).unwrap();
        assert_eq!(t.data, vec![(33.0 - 1.0) / 2.0, (22.0 - 2.0) / 2.0, (11.0 - 3.0) / 2.0]);
    }

    #[test]
    fn grayscale_rejected() {
        let img = DynamicImage::ImageLuma8(GrayImage::new(4, 4));
        assert!(matches!(preprocess(&img, &identity_spec()), Err(Error::Image(_))));
    }

    #[test]
    fn garbage_bytes_rejected() {
        assert!(matches!(decode_image(b"not an image"), Err(Error::Image(_))));
    }
}
