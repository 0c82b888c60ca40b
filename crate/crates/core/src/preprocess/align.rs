use image::imageops::FilterType;
use image::RgbImage;

use super::transform::{estimate_similarity_transform, Landmarks5, SimilarityTransform};
use super::{FaceImage, ALIGNED_SIZE};
use crate::error::{Error, Result};

/// Warps `image` so that `landmarks` land on `template`, producing a 224x224
/// RGB crop. Sampling is bilinear; pixels that map outside the source are
/// black. Returns the crop together with the fitted transform.
pub fn align_face(
    image: &FaceImage,
    landmarks: &Landmarks5,
    template: &Landmarks5,
) -> Result<(FaceImage, SimilarityTransform)> {
    if image.channels != 3 {
        return Err(Error::Shape {
            width: image.width,
            height: image.height,
            channels: image.channels,
        });
    }
    if !landmarks.within(image.width, image.height) {
        return Err(Error::invalid(
            "landmarks",
            "coordinates must be finite and inside the image",
        ));
    }
    let forward = estimate_similarity_transform(landmarks, template)?;
    let back = forward.inverse();

    let size = ALIGNED_SIZE as usize;
    let mut pixels = vec![0u8; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let [sx, sy] = back.apply([x as f64, y as f64]);
            let rgb = sample_bilinear(image, sx, sy);
            let o = (y * size + x) * 3;
            pixels[o..o + 3].copy_from_slice(&rgb);
        }
    }
    let aligned = FaceImage {
        pixels,
        width: ALIGNED_SIZE,
        height: ALIGNED_SIZE,
        channels: 3,
        source: image.source.clone(),
        subject: image.subject.clone(),
    };
    Ok((aligned, forward))
}

fn sample_bilinear(image: &FaceImage, x: f64, y: f64) -> [u8; 3] {
    let (w, h) = (image.width as i64, image.height as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = [0.0f64; 3];
    for (dx, dy, weight) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (px, py) = (x0 + dx, y0 + dy);
        if weight == 0.0 || px < 0 || py < 0 || px >= w || py >= h {
            continue;
        }
        let o = ((py * w + px) * 3) as usize;
        for c in 0..3 {
            acc[c] += weight * image.pixels[o + c] as f64;
        }
    }
    acc.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Fallback for images without landmarks: largest centered square, resized
/// to 224x224. Images that already have that size are returned unchanged.
pub fn center_crop_resize(image: &FaceImage) -> Result<FaceImage> {
    if image.channels != 3 {
        return Err(Error::Shape {
            width: image.width,
            height: image.height,
            channels: image.channels,
        });
    }
    if image.width == ALIGNED_SIZE && image.height == ALIGNED_SIZE {
        return Ok(image.clone());
    }
    let rgb = RgbImage::from_raw(image.width, image.height, image.pixels.clone())
        .ok_or_else(|| Error::invalid("image", "pixel buffer does not match its shape"))?;
    let side = image.width.min(image.height);
    let x = (image.width - side) / 2;
    let y = (image.height - side) / 2;
    let square = image::imageops::crop_imm(&rgb, x, y, side, side).to_image();
    let resized = image::imageops::resize(&square, ALIGNED_SIZE, ALIGNED_SIZE, FilterType::Triangle);
    Ok(FaceImage {
        pixels: resized.into_raw(),
        width: ALIGNED_SIZE,
        height: ALIGNED_SIZE,
        channels: 3,
        source: image.source.clone(),
        subject: image.subject.clone(),
    })
}
