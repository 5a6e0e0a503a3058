//! Heatmap, overlay and score files written by `infer`.

use std::fmt::Write as _;
use std::path::Path;

use image::imageops::{resize as resize_plane, FilterType};
use image::{ImageBuffer, Luma};
use multitype_fcdd::data::{save_gray, save_rgb, to_u8, Image};
use multitype_fcdd::evaluate::Prediction;
use multitype_fcdd::{Error, Result};

/// Bilinear resize of every channel.
pub fn resize(img: &Image, height: usize, width: usize) -> Image {
    let mut data = Vec::with_capacity(height * width * img.channels);
    for c in 0..img.channels {
        let plane: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_raw(img.width as u32, img.height as u32, img.plane(c).to_vec())
                .expect("plane matches image size");
        let out = resize_plane(&plane, width as u32, height as u32, FilterType::Triangle);
        data.extend(out.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Image {
        height,
        width,
        channels: img.channels,
        data,
    }
}

/// Min-max normalisation to `[0, 1]`; a constant map becomes all zeros.
fn normalise(map: &[f64]) -> (Vec<f32>, f64, f64) {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let out = map
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span) as f32 } else { 0.0 })
        .collect();
    (out, lo, hi)
}

/// Writes `heatmaps/<stem>_<TYPE>.png`, `overlays/<stem>_<TYPE>.png` and
/// `<stem>_scores.txt`. Returns the score summary printed to stdout.
pub fn write_outputs(out: &Path, stem: &str, img: &Image, pred: &Prediction, names: &[String]) -> Result<String> {
    let (h, w) = (img.height, img.width);
    // Grayscale view of the input for overlays.
    let gray: Vec<f32> = (0..h * w)
        .map(|p| (0..img.channels).map(|c| img.data[c * h * w + p]).sum::<f32>() / img.channels as f32)
        .collect();
    let mut sidecar = String::from("# type z raw_min raw_max (heatmap PNGs are min-max scaled to these raw values)\n");
    let mut summary = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let (norm, lo, hi) = normalise(&pred.maps[k]);
        save_gray(&out.join("heatmaps").join(format!("{stem}_{name}.png")), h, w, &norm)?;
        let mut rgb = Vec::with_capacity(h * w * 3);
        for (g, a) in gray.iter().zip(&norm) {
            let alpha = 0.6 * a;
            let base = g * (1.0 - alpha);
            rgb.extend([to_u8(base + alpha), to_u8(base), to_u8(base)]);
        }
        save_rgb(&out.join("overlays").join(format!("{stem}_{name}.png")), h, w, rgb)?;
        let z = pred.scores[k];
        writeln!(sidecar, "{name} {z:.9e} {lo:.9e} {hi:.9e}").expect("write to string");
        summary.push(format!("{name}={z:.6}"));
    }
    let path = out.join(format!("{stem}_scores.txt"));
    std::fs::write(&path, sidecar).map_err(|e| Error::io(&path, e))?;
    Ok(summary.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalise_spans_unit_interval() {
        let (n, lo, hi) = normalise(&[2.0, 4.0, 3.0]);
        assert_eq!(n, vec![0.0, 1.0, 0.5]);
        assert_eq!((lo, hi), (2.0, 4.0));
        assert_eq!(normalise(&[1.0, 1.0]).0, vec![0.0, 0.0]);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(10, 6, 1, 0.25);
        let r = resize(&img, 4, 4);
        assert_eq!((r.height, r.width), (4, 4));
        assert!(r.data.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }
}
