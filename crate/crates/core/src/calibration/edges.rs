//! Gradient-magnitude edge extraction, used when no external edge map is supplied.

use crate::grid::{Grid, Mask};

use super::distance::EdgeSet;

/// Sobel gradient magnitude of a grayscale image.
pub fn sobel_magnitude(gray: &Grid<f64>) -> Grid<f64> {
    let (w, h) = gray.dims();
    let at = |x: isize, y: isize| {
        *gray.get(
            x.clamp(0, w as isize - 1) as usize,
            y.clamp(0, h as isize - 1) as usize,
        )
    };
    Grid::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Pixels whose Sobel magnitude exceeds `threshold`, skipping pixels set in `exclude`.
pub fn extract_edges(gray: &Grid<f64>, threshold: f64, exclude: Option<&Mask>) -> EdgeSet {
    let mag = sobel_magnitude(gray);
    let mask = Grid::from_fn(gray.width(), gray.height(), |x, y| {
        *mag.get(x, y) > threshold && !exclude.is_some_and(|m| *m.get(x, y))
    });
    EdgeSet::from_mask(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar_image() -> Grid<f64> {
        Grid::from_fn(20, 10, |x, _| if (9..11).contains(&x) { 1.0 } else { 0.0 })
    }

    #[test]
    fn flat_image_has_no_edges() {
        let g = Grid::new(8, 8, 0.3);
        assert!(extract_edges(&g, 0.1, None).is_empty());
    }

    #[test]
    fn vertical_bar_edges() {
        let e = extract_edges(&bar_image(), 0.5, None);
        assert!(!e.is_empty());
        assert!(e.points().iter().all(|p| (7.0..13.0).contains(&p.x)));
    }

    #[test]
    fn exclusion_mask_removes_edges() {
        let all = Grid::new(20, 10, true);
        assert!(extract_edges(&bar_image(), 0.5, Some(&all)).is_empty());
    }
}
