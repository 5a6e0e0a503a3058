//! Training-time photometric and geometric augmentation.

use rand::Rng;

use super::image_io::Image;

/// Side length the translation bound refers to; it is rescaled for other
/// image sizes.
pub const REFERENCE_SIZE: f32 = 256.0;
pub const MAX_ROTATION_DEG: f32 = 15.0;
pub const MAX_TRANSLATION_PX: f32 = 20.0;
pub const GAIN_RANGE: (f32, f32) = (0.8, 1.2);
pub const OFFSET_RANGE: (f32, f32) = (-0.1, 0.1);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f32,
    pub dx: f32,
    pub dy: f32,
    /// Contrast gain around mid-gray.
    pub gain: f32,
    /// Brightness offset.
    pub offset: f32,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        angle_deg: 0.0,
        dx: 0.0,
        dy: 0.0,
        gain: 1.0,
        offset: 0.0,
    };

    pub fn sample<R: Rng>(rng: &mut R, height: usize, width: usize) -> Self {
        let t = MAX_TRANSLATION_PX * height.max(width) as f32 / REFERENCE_SIZE;
        Self {
            angle_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            dx: rng.random_range(-t..=t),
            dy: rng.random_range(-t..=t),
            gain: rng.random_range(GAIN_RANGE.0..=GAIN_RANGE.1),
            offset: rng.random_range(OFFSET_RANGE.0..=OFFSET_RANGE.1),
        }
    }
}

/// Rotation about the centre plus translation, with bilinear sampling and
/// edge replication, followed by `gain · (x − ½) + ½ + offset`, clamped to
/// `[0, 1]`.
pub fn apply(img: &Image, p: &AugmentParams) -> Image {
    if *p == AugmentParams::IDENTITY {
        return img.clone();
    }
    let (h, w) = (img.height, img.width);
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let (s, c) = p.angle_deg.to_radians().sin_cos();
    let mut data = Vec::with_capacity(img.data.len());
    for ch in 0..img.channels {
        let plane = img.plane(ch);
        let at = |y: isize, x: isize| {
            let yy = y.clamp(0, h as isize - 1) as usize;
            let xx = x.clamp(0, w as isize - 1) as usize;
            plane[yy * w + xx]
        };
        for y in 0..h {
            for x in 0..w {
                // Inverse map: output pixel -> source location.
                let (ox, oy) = (x as f32 - cx - p.dx, y as f32 - cy - p.dy);
                let sx = c * ox + s * oy + cx;
                let sy = -s * ox + c * oy + cy;
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
                data.push((p.gain * (v - 0.5) + 0.5 + p.offset).clamp(0.0, 1.0));
            }
        }
    }
    Image {
        height: h,
        width: w,
        channels: img.channels,
        data,
    }
}

/// With probability `p`, applies rotation, translation, brightness and
/// contrast jointly; otherwise returns the image unchanged.
pub fn augment<R: Rng>(img: &Image, rng: &mut R, p: f64) -> Image {
    if p <= 0.0 || !rng.random_bool(p.min(1.0)) {
        return img.clone();
    }
    let params = AugmentParams::sample(rng, img.height, img.width);
    apply(img, &params)
}
