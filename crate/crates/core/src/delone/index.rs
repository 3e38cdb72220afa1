//! Uniform grid bucketing of planar points.

use crate::geometry::Vec2;

#[derive(Debug, Clone)]
pub struct GridIndex {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl GridIndex {
    pub fn new(points: &[Vec2], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut counts = vec![0u32; nx * ny + 1];
        let cell_of = |p: &Vec2| {
            let ix = (((p.x - lo.x) / cell) as usize).min(nx - 1);
            let iy = (((p.y - lo.y) / cell) as usize).min(ny - 1);
            iy * nx + ix
        };
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (k, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        GridIndex { origin: lo, cell, nx, ny, start: counts, items }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn cell_range(&self, lo: f64, hi: f64, o: f64, n: usize) -> Option<(usize, usize)> {
        let a = ((lo - o) / self.cell).floor();
        let b = ((hi - o) / self.cell).floor();
        if b < 0.0 || a > (n - 1) as f64 {
            return None;
        }
        Some((a.max(0.0) as usize, (b as usize).min(n - 1)))
    }

    /// Calls `f(index, squared distance)` for every point within `r` of `c`.
    pub fn for_each_within(&self, points: &[Vec2], c: Vec2, r: f64, mut f: impl FnMut(usize, f64)) {
        let Some((x0, x1)) = self.cell_range(c.x - r, c.x + r, self.origin.x, self.nx) else {
            return;
        };
        let Some((y0, y1)) = self.cell_range(c.y - r, c.y + r, self.origin.y, self.ny) else {
            return;
        };
        let r2 = r * r;
        for iy in y0..=y1 {
            let row = iy * self.nx;
            for ix in x0..=x1 {
                let cidx = row + ix;
                for &k in &self.items[self.start[cidx] as usize..self.start[cidx + 1] as usize] {
                    let d2 = (points[k as usize] - c).norm2();
                    if d2 <= r2 {
                        f(k as usize, d2);
                    }
                }
            }
        }
    }

    pub fn within(&self, points: &[Vec2], c: Vec2, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(points, c, r, |k, _| out.push(k));
        out.sort_unstable();
        out
    }

    /// Nearest point to `c`, optionally excluding one index.
    pub fn nearest(&self, points: &[Vec2], c: Vec2, skip: Option<usize>) -> Option<(usize, f64)> {
        if points.len() <= usize::from(skip.is_some()) {
            return None;
        }
        let mut r = self.cell;
        loop {
            let mut best: Option<(usize, f64)> = None;
            self.for_each_within(points, c, r, |k, d2| {
                if Some(k) != skip && best.is_none_or(|(bk, bd)| d2 < bd || (d2 == bd && k < bk)) {
                    best = Some((k, d2));
                }
            });
            if let Some((k, d2)) = best {
                return Some((k, d2.sqrt()));
            }
            r *= 2.0;
            if r > 4.0 * self.cell * (self.nx + self.ny) as f64 {
                return None;
            }
        }
    }
}
