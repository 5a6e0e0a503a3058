use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Row-major binary image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Contract(format!(
                "mask of {height}x{width} needs {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.contains(&true)
    }
}

/// One 8-connected ground-truth region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub image_id: usize,
    pub class_id: usize,
    /// Flat row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Mean (row, col) of the region.
    pub fn centroid(&self, width: usize) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (r, c) = self.pixels.iter().fold((0.0, 0.0), |(r, c), &p| {
            (r + (p / width) as f64, c + (p % width) as f64)
        });
        (r / n, c / n)
    }
}

/// 8-connectivity labelling. Components are ordered by their first pixel in
/// raster order (top-left first).
pub fn connected_components(mask: &BinaryMask, image_id: usize, class_id: usize) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if mask.data[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component {
            image_id,
            class_id,
            pixels,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let data = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::new(rows.len(), rows[0].len(), data).unwrap()
    }

    #[test]
    fn filled_rectangle_is_one_component() {
        let m = mask(&["....", ".##.", ".##.", "...."]);
        let cc = connected_components(&m, 0, 0);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].pixels, vec![5, 6, 9, 10]);
    }

    #[test]
    fn diagonal_neighbours_connect() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(connected_components(&m, 0, 0).len(), 1);
    }

    #[test]
    fn ordering_is_top_left_first() {
        let m = mask(&["...#", "#...", "...."]);
        let cc = connected_components(&m, 3, 1);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].pixels, vec![3]);
        assert_eq!(cc[1].pixels, vec![4]);
        assert_eq!((cc[0].image_id, cc[0].class_id), (3, 1));
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::empty(4, 5), 0, 0).is_empty());
    }
}
