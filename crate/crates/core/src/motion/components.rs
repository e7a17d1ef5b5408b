use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Splits a mask into its maximal connected components, dropping those with
/// fewer than `min_area` pixels. Components are ordered by their first pixel
/// in raster order.
pub fn split_connected_components(mask: &Mask, connectivity: Connectivity, min_area: usize) -> Vec<Mask> {
    let (w, h) = mask.size();
    let mut seen: Grid<bool> = Grid::filled(w, h, false);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if !*mask.get(sx, sy) || *seen.get(sx, sy) {
                continue;
            }
            let mut pixels = Vec::new();
            seen.set(sx, sy, true);
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x, y));
                for &(dx, dy) in connectivity.offsets() {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if *mask.get(nx, ny) && !*seen.get(nx, ny) {
                        seen.set(nx, ny, true);
                        queue.push_back((nx, ny));
                    }
                }
            }
            if pixels.len() >= min_area {
                let mut comp = Grid::filled(w, h, false);
                for (x, y) in pixels {
                    comp.set(x, y, true);
                }
                out.push(comp);
            }
        }
    }
    out
}
