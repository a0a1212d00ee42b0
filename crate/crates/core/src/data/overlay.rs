//! Grayscale overlay of a mask boundary on its image.

use super::Plane;
use crate::error::{Error, Result};

/// Mask pixels with a 4-neighbour outside the mask (or on the image edge).
pub fn boundary(mask: &Plane) -> Plane {
    let (h, w) = (mask.height, mask.width);
    let mut out = Plane::zeros(h, w);
    let inside = |y: isize, x: isize| {
        y >= 0
            && x >= 0
            && (y as usize) < h
            && (x as usize) < w
            && mask.at(y as usize, x as usize) > 0.5
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            if inside(y, x)
                && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dy, dx)| !inside(y + dy, x + dx))
            {
                out.set(y as usize, x as usize, 1.0);
            }
        }
    }
    out
}

/// `image` with the 1-pixel boundary of `mask` set to maximum intensity.
pub fn render_overlay(image: &Plane, mask: &Plane) -> Result<Plane> {
    if (image.height, image.width) != (mask.height, mask.width) {
        return Err(Error::Data("overlay: image and mask sizes differ".into()));
    }
    let edge = boundary(mask);
    let data = image
        .data
        .iter()
        .zip(&edge.data)
        .map(|(&v, &e)| if e > 0.5 { 1.0 } else { v })
        .collect();
    Plane::new(image.height, image.width, data)
}
