//! Procedural clean images: piecewise-smooth outdoor-like scenes and a calibration chart.
//!
//! Scenes are built from shaded, mostly saturated regions plus dark shadow shapes, so
//! every neighbourhood has at least one low color channel the way natural outdoor
//! photographs do.

use crate::error::Result;
use crate::imgcore::rng::stage;
use crate::imgcore::{Image, Rng};

fn saturated_color(rng: &mut Rng) -> [f64; 3] {
    let low = rng.range(0.0, 0.12);
    let mut c = [rng.range(0.25, 0.95), rng.range(0.25, 0.95), rng.range(0.25, 0.95)];
    let idx = rng.range_inclusive(0, 2) as usize;
    c[idx] = low;
    c
}

enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Disc { cy: f64, cx: f64, r: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
        }
    }
}

struct Region {
    shape: Shape,
    base: [f64; 3],
    // linear shading per unit of normalized coordinate
    gy: f64,
    gx: f64,
}

/// A clean scene in `[0, 1]`, deterministic in the rng.
pub fn synth_scene(rng: &mut Rng, height: usize, width: usize) -> Result<Image> {
    let ground = saturated_color(rng);
    let ground_shade = rng.range(-0.15, 0.15);
    let count = rng.range_inclusive(6, 12) as usize;
    let mut regions = Vec::with_capacity(count);
    for i in 0..count {
        let base = if i % 4 == 3 {
            let d = rng.range(0.0, 0.1);
            [d, d * 1.1, d * 1.2]
        } else {
            saturated_color(rng)
        };
        let shape = if rng.bernoulli(0.5) {
            let (y0, x0) = (rng.range(-0.1, 0.9), rng.range(-0.1, 0.9));
            Shape::Rect {
                y0,
                x0,
                y1: y0 + rng.range(0.1, 0.5),
                x1: x0 + rng.range(0.1, 0.5),
            }
        } else {
            Shape::Disc {
                cy: rng.range(0.0, 1.0),
                cx: rng.range(0.0, 1.0),
                r: rng.range(0.06, 0.25),
            }
        };
        regions.push(Region {
            shape,
            base,
            gy: rng.range(-0.2, 0.2),
            gx: rng.range(-0.2, 0.2),
        });
    }

    Image::from_fn(height, width, |y, x| {
        let (ny, nx) = (y as f64 / height as f64, x as f64 / width as f64);
        let mut c = ground.map(|v| v + ground_shade * (ny - 0.5));
        for r in &regions {
            if r.shape.contains(ny, nx) {
                let s = r.gy * (ny - 0.5) + r.gx * (nx - 0.5);
                c = r.base.map(|v| v + s);
            }
        }
        c.map(|v| v.clamp(0.0, 1.0))
    })
}

/// The scene for `(master seed, index)`, on its own stream.
pub fn indexed_scene(master_seed: u64, index: u64, height: usize, width: usize) -> Result<Image> {
    synth_scene(&mut Rng::for_image(master_seed, index, stage::SCENE), height, width)
}

/// High-contrast checkerboard of near-black and colored squares.
pub fn test_chart(height: usize, width: usize) -> Result<Image> {
    const SQUARE: usize = 16;
    const PALETTE: [[f64; 3]; 6] = [
        [0.85, 0.25, 0.10],
        [0.15, 0.70, 0.30],
        [0.20, 0.35, 0.85],
        [0.90, 0.80, 0.10],
        [0.70, 0.20, 0.75],
        [0.10, 0.75, 0.80],
    ];
    Image::from_fn(height, width, |y, x| {
        let (by, bx) = (y / SQUARE, x / SQUARE);
        if (by + bx) % 2 == 0 {
            [0.03, 0.03, 0.03]
        } else {
            PALETTE[(by * 7 + bx * 3) % PALETTE.len()]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_in_range_and_deterministic() {
        let a = synth_scene(&mut Rng::new(1, 0), 40, 50).unwrap();
        let b = synth_scene(&mut Rng::new(1, 0), 40, 50).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = synth_scene(&mut Rng::new(2, 0), 40, 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chart_has_dark_squares() {
        let c = test_chart(32, 32).unwrap();
        assert_eq!(c.pixel(0, 0), [0.03; 3]);
        assert_ne!(c.pixel(0, 16), [0.03; 3]);
    }
}
