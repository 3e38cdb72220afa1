//! Cell lists of disks and ray traversal in the style of Amanatides and Woo.

use crate::geometry::Vec2;

#[derive(Debug, Clone)]
pub struct DiskGrid {
    lo: Vec2,
    h: f64,
    nx: i64,
    ny: i64,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl DiskGrid {
    /// Each disk is listed in every cell its bounding box meets.
    pub fn new(centers: &[Vec2], radii: &[f64], h: f64) -> Self {
        let rmax = radii.iter().copied().fold(0.0, f64::max);
        let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for c in centers {
            lo = Vec2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Vec2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        if centers.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        lo = lo - Vec2::new(rmax, rmax);
        hi = hi + Vec2::new(rmax, rmax);
        let nx = ((hi.x - lo.x) / h).floor() as i64 + 1;
        let ny = ((hi.y - lo.y) / h).floor() as i64 + 1;
        let mut g = DiskGrid { lo, h, nx, ny, start: vec![0; (nx * ny + 1) as usize], items: Vec::new() };
        let span = |k: usize| {
            let (c, r) = (centers[k], radii[k]);
            let (x0, y0) = g.cell_of(c - Vec2::new(r, r));
            let (x1, y1) = g.cell_of(c + Vec2::new(r, r));
            (x0, y0, x1, y1)
        };
        let mut counts = vec![0u32; (nx * ny + 1) as usize];
        for k in 0..centers.len() {
            let (x0, y0, x1, y1) = span(k);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    counts[(iy * nx + ix) as usize + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; *counts.last().unwrap() as usize];
        for k in 0..centers.len() {
            let (x0, y0, x1, y1) = span(k);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    let c = (iy * nx + ix) as usize;
                    items[fill[c] as usize] = k as u32;
                    fill[c] += 1;
                }
            }
        }
        g.start = counts;
        g.items = items;
        g
    }

    fn cell_of(&self, p: Vec2) -> (i64, i64) {
        let ix = (((p.x - self.lo.x) / self.h).floor() as i64).clamp(0, self.nx - 1);
        let iy = (((p.y - self.lo.y) / self.h).floor() as i64).clamp(0, self.ny - 1);
        (ix, iy)
    }

    pub fn cell_items(&self, ix: i64, iy: i64) -> &[u32] {
        if ix < 0 || iy < 0 || ix >= self.nx || iy >= self.ny {
            return &[];
        }
        let c = (iy * self.nx + ix) as usize;
        &self.items[self.start[c] as usize..self.start[c + 1] as usize]
    }

    /// Disks listed in cells meeting the disk of radius `r` about `p`.
    pub fn for_each_near(&self, p: Vec2, r: f64, mut f: impl FnMut(usize)) {
        let (x0, y0) = self.cell_of(p - Vec2::new(r, r));
        let (x1, y1) = self.cell_of(p + Vec2::new(r, r));
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                for &k in self.cell_items(ix, iy) {
                    f(k as usize);
                }
            }
        }
    }

    /// Visits cells along `x + t v` for `t ∈ [0, t_max]`; `visit(items, t_exit)`
    /// returns `true` to stop.
    pub fn walk(&self, x: Vec2, v: Vec2, t_max: f64, mut visit: impl FnMut(&[u32], f64) -> bool) {
        let (mut ix, mut iy) = self.cell_of(x);
        let step_x = if v.x > 0.0 { 1 } else { -1 };
        let step_y = if v.y > 0.0 { 1 } else { -1 };
        let boundary = |i: i64, s: i64, lo: f64| lo + (i + i64::from(s > 0)) as f64 * self.h;
        let mut t_x = if v.x != 0.0 { (boundary(ix, step_x, self.lo.x) - x.x) / v.x } else { f64::INFINITY };
        let mut t_y = if v.y != 0.0 { (boundary(iy, step_y, self.lo.y) - x.y) / v.y } else { f64::INFINITY };
        let dt_x = if v.x != 0.0 { self.h / v.x.abs() } else { f64::INFINITY };
        let dt_y = if v.y != 0.0 { self.h / v.y.abs() } else { f64::INFINITY };
        loop {
            let t_exit = t_x.min(t_y);
            if visit(self.cell_items(ix, iy), t_exit) || t_exit > t_max {
                return;
            }
            if t_x < t_y {
                ix += step_x;
                t_x += dt_x;
            } else {
                iy += step_y;
                t_y += dt_y;
            }
            if ix < 0 || iy < 0 || ix >= self.nx || iy >= self.ny {
                return;
            }
        }
    }
}
