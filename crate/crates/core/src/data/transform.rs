//! Spatial preprocessing: shorter-side resize and square crops.

use ndarray::{s, Array4, Axis};
use rand::Rng;

use super::clip::Frames;

/// Bilinear resize with half-pixel centres.
pub fn resize(frames: &Frames, out_h: usize, out_w: usize) -> Frames {
    let (f, h, w, c) = frames.dim();
    if (h, w) == (out_h, out_w) {
        return frames.clone();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let mut out = Array4::<f32>::zeros((f, out_h, out_w, c));
    for t in 0..f {
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                for ch in 0..c {
                    let top = frames[[t, y0, x0, ch]] * (1.0 - wx) + frames[[t, y0, x1, ch]] * wx;
                    let bottom = frames[[t, y1, x0, ch]] * (1.0 - wx) + frames[[t, y1, x1, ch]] * wx;
                    out[[t, oy, ox, ch]] = (top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

/// Resizes so the shorter side equals `target`, keeping the aspect ratio.
pub fn resize_shorter(frames: &Frames, target: usize) -> Frames {
    let (_, h, w, _) = frames.dim();
    let (out_h, out_w) = if h <= w {
        (target, ((w as f64 * target as f64 / h as f64).round() as usize).max(target))
    } else {
        (((h as f64 * target as f64 / w as f64).round() as usize).max(target), target)
    };
    resize(frames, out_h, out_w)
}

pub fn crop(frames: &Frames, top: usize, left: usize, size: usize) -> Frames {
    frames
        .slice(s![.., top..top + size, left..left + size, ..])
        .to_owned()
}

pub fn center_offset(h: usize, w: usize, size: usize) -> (usize, usize) {
    ((h - size) / 2, (w - size) / 2)
}

pub fn random_offset(h: usize, w: usize, size: usize, rng: &mut impl Rng) -> (usize, usize) {
    (rng.random_range(0..=h - size), rng.random_range(0..=w - size))
}

/// `count` crop positions spread along the longer side (left/center/right
/// for landscape frames, top/center/bottom for portrait); the shorter side
/// is centred. A single crop is the centre crop.
pub fn view_offsets(h: usize, w: usize, size: usize, count: usize) -> Vec<(usize, usize)> {
    if count == 1 {
        return vec![center_offset(h, w, size)];
    }
    let spread = |slack: usize| -> Vec<usize> {
        (0..count).map(|j| j * slack / (count - 1)).collect()
    };
    if w >= h {
        let top = (h - size) / 2;
        spread(w - size).into_iter().map(|left| (top, left)).collect()
    } else {
        let left = (w - size) / 2;
        spread(h - size).into_iter().map(|top| (top, left)).collect()
    }
}

/// Picks frames by index along the time axis.
pub fn select_frames(frames: &Frames, indices: &[usize]) -> Frames {
    frames.select(Axis(0), indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize) -> Frames {
        Array4::from_shape_fn((1, h, w, 3), |(_, y, x, _)| ((y * w + x) as f32) / (h * w) as f32)
    }

    #[test]
    fn identity_resize() {
        let g = grid(4, 6);
        assert_eq!(resize(&g, 4, 6), g);
    }

    #[test]
    fn halving_averages_pairs() {
        let g = grid(2, 4);
        let r = resize(&g, 1, 2);
        let expect = (g[[0, 0, 0, 0]] + g[[0, 0, 1, 0]] + g[[0, 1, 0, 0]] + g[[0, 1, 1, 0]]) / 4.0;
        assert!((r[[0, 0, 0, 0]] - expect).abs() < 1e-6);
    }

    #[test]
    fn shorter_side_resize_keeps_aspect() {
        assert_eq!(resize_shorter(&grid(40, 80), 20).dim(), (1, 20, 40, 3));
        assert_eq!(resize_shorter(&grid(80, 40), 20).dim(), (1, 40, 20, 3));
    }

    #[test]
    fn three_crop_orientation() {
        assert_eq!(view_offsets(32, 48, 32, 3), vec![(0, 0), (0, 8), (0, 16)]);
        assert_eq!(view_offsets(48, 32, 32, 3), vec![(0, 0), (8, 0), (16, 0)]);
        assert_eq!(view_offsets(36, 36, 32, 1), vec![(2, 2)]);
        assert_eq!(view_offsets(32, 32, 32, 3), vec![(0, 0); 3]);
    }
}
