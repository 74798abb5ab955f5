//! Uniform bucket grid for radius and nearest-neighbour queries.

use crate::geometry::{Metric, Point2};

/// Points bucketed into a regular grid of cells (counting-sort layout).
///
/// Queries return candidate indices; callers apply the exact distance test.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    origin: Point2,
    cell_w: f64,
    cell_h: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
    metric: Metric,
}

impl SpatialGrid {
    /// Buckets `points` using cells of roughly `target_cell` side.
    ///
    /// Under a torus metric the grid spans the periodic domain exactly;
    /// otherwise it spans the bounding box of the points.
    pub fn new(points: &[Point2], metric: Metric, target_cell: f64) -> Self {
        let (origin, span_x, span_y) = match metric {
            Metric::Torus { width, height } => (Point2::new(0.0, 0.0), width, height),
            Metric::Euclidean => {
                let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in points {
                    lo.x = lo.x.min(p.x);
                    lo.y = lo.y.min(p.y);
                    hi.x = hi.x.max(p.x);
                    hi.y = hi.y.max(p.y);
                }
                if points.is_empty() {
                    (Point2::new(0.0, 0.0), 1.0, 1.0)
                } else {
                    (lo, (hi.x - lo.x).max(f64::MIN_POSITIVE), (hi.y - lo.y).max(f64::MIN_POSITIVE))
                }
            }
        };
        let target = if target_cell.is_finite() && target_cell > 0.0 {
            target_cell
        } else {
            span_x.max(span_y)
        };
        // Cap the cell count so degenerate inputs cannot allocate unboundedly.
        let cap = (4 * points.len()).max(16) as f64;
        let mut nx = ((span_x / target).floor() as usize).max(1);
        let mut ny = ((span_y / target).floor() as usize).max(1);
        while (nx as f64) * (ny as f64) > cap {
            nx = (nx / 2).max(1);
            ny = (ny / 2).max(1);
        }
        let cell_w = span_x / nx as f64;
        let cell_h = span_y / ny as f64;

        let mut grid = Self {
            origin,
            cell_w,
            cell_h,
            nx,
            ny,
            starts: vec![0; nx * ny + 1],
            items: vec![0; points.len()],
            metric,
        };
        let cells: Vec<usize> = points.iter().map(|p| grid.cell_index(*p)).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn cell_coords(&self, p: Point2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell_w).floor();
        let fy = ((p.y - self.origin.y) / self.cell_h).floor();
        let cx = if fx.is_nan() { 0 } else { (fx.max(0.0) as usize).min(self.nx - 1) };
        let cy = if fy.is_nan() { 0 } else { (fy.max(0.0) as usize).min(self.ny - 1) };
        (cx, cy)
    }

    fn cell_index(&self, p: Point2) -> usize {
        let (cx, cy) = self.cell_coords(p);
        cy * self.nx + cx
    }

    fn cell(&self, cx: usize, cy: usize) -> &[u32] {
        let c = cy * self.nx + cx;
        &self.items[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    /// Column (or row) indices touched by the interval `[lo, hi]` along one axis.
    fn axis_range(&self, lo: f64, hi: f64, origin: f64, size: f64, n: usize, wraps: bool) -> AxisRange {
        let a = ((lo - origin) / size).floor();
        let b = ((hi - origin) / size).floor();
        if wraps {
            if !(b - a + 1.0 < n as f64) {
                return AxisRange::Wrapped { start: 0, len: n, n };
            }
            let start = (a as i64).rem_euclid(n as i64) as usize;
            AxisRange::Wrapped {
                start,
                len: (b - a) as usize + 1,
                n,
            }
        } else {
            // Points on the far edge are clamped into the last cell, so clamp here too.
            let top = (n - 1) as f64;
            let a = a.clamp(0.0, top);
            let b = b.clamp(0.0, top);
            if a > b || a.is_nan() || b.is_nan() {
                AxisRange::Empty
            } else {
                AxisRange::Wrapped {
                    start: a as usize,
                    len: (b - a) as usize + 1,
                    n: usize::MAX,
                }
            }
        }
    }

    /// Calls `visit` for every point that may lie within `radius` of `center`.
    pub fn for_each_candidate(&self, center: Point2, radius: f64, mut visit: impl FnMut(usize)) {
        let wraps = matches!(self.metric, Metric::Torus { .. });
        if !radius.is_finite() {
            for &i in &self.items {
                visit(i as usize);
            }
            return;
        }
        let xr = self.axis_range(center.x - radius, center.x + radius, self.origin.x, self.cell_w, self.nx, wraps);
        let yr = self.axis_range(center.y - radius, center.y + radius, self.origin.y, self.cell_h, self.ny, wraps);
        for cy in yr.iter() {
            for cx in xr.iter() {
                for &i in self.cell(cx, cy) {
                    visit(i as usize);
                }
            }
        }
    }

    /// Index and distance of the nearest point to `points[query]` other than itself.
    pub fn nearest_other(&self, points: &[Point2], query: usize) -> Option<(usize, f64)> {
        if points.len() < 2 {
            return None;
        }
        let p = points[query];
        let (cx, cy) = self.cell_coords(p);
        let cmin = self.cell_w.min(self.cell_h);
        let mut best: Option<(usize, f64)> = None;
        let torus = matches!(self.metric, Metric::Torus { .. });
        let max_ring = self.nx.max(self.ny);
        for k in 0..=max_ring {
            if torus && 2 * k + 1 >= self.nx.min(self.ny) {
                // The ring would wrap onto itself; finish by brute force.
                for (j, q) in points.iter().enumerate() {
                    if j != query {
                        let d = self.metric.distance(p, *q);
                        if best.is_none_or(|(bj, bd)| d < bd || (d == bd && j < bj)) {
                            best = Some((j, d));
                        }
                    }
                }
                return best;
            }
            self.for_each_ring_cell(cx, cy, k, |ix, iy| {
                for &j in self.cell(ix, iy) {
                    let j = j as usize;
                    if j == query {
                        continue;
                    }
                    let d = self.metric.distance(p, points[j]);
                    if best.is_none_or(|(bj, bd)| d < bd || (d == bd && j < bj)) {
                        best = Some((j, d));
                    }
                }
            });
            if let Some((_, d)) = best {
                if d <= k as f64 * cmin {
                    break;
                }
            }
        }
        best
    }

    fn for_each_ring_cell(&self, cx: usize, cy: usize, k: usize, mut f: impl FnMut(usize, usize)) {
        let torus = matches!(self.metric, Metric::Torus { .. });
        let k = k as i64;
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let mut emit = |x: i64, y: i64| {
            let (x, y) = if torus {
                (x.rem_euclid(nx), y.rem_euclid(ny))
            } else if x < 0 || y < 0 || x >= nx || y >= ny {
                return;
            } else {
                (x, y)
            };
            f(x as usize, y as usize);
        };
        let (cx, cy) = (cx as i64, cy as i64);
        if k == 0 {
            emit(cx, cy);
            return;
        }
        for x in cx - k..=cx + k {
            emit(x, cy - k);
            emit(x, cy + k);
        }
        for y in cy - k + 1..cy + k {
            emit(cx - k, y);
            emit(cx + k, y);
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum AxisRange {
    Empty,
    Wrapped { start: usize, len: usize, n: usize },
}

impl AxisRange {
    fn iter(self) -> impl Iterator<Item = usize> {
        let (start, len, n) = match self {
            AxisRange::Empty => (0, 0, 1),
            AxisRange::Wrapped { start, len, n } => (start, len, n),
        };
        (0..len).map(move |k| {
            let v = start + k;
            if v >= n {
                v - n
            } else {
                v
            }
        })
    }
}

/// Nearest other point for every point, `None` for a lone point.
pub fn all_nearest_neighbors(points: &[Point2], metric: Metric) -> Vec<Option<(usize, f64)>> {
    if points.is_empty() {
        return Vec::new();
    }
    let spacing = mean_spacing(points, metric);
    let grid = SpatialGrid::new(points, metric, spacing);
    (0..points.len()).map(|i| grid.nearest_other(points, i)).collect()
}

/// Typical inter-point spacing, used to size grid cells.
pub(crate) fn mean_spacing(points: &[Point2], metric: Metric) -> f64 {
    let area = match metric {
        Metric::Torus { width, height } => width * height,
        Metric::Euclidean => {
            let (mut lx, mut ly, mut hx, mut hy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in points {
                lx = lx.min(p.x);
                ly = ly.min(p.y);
                hx = hx.max(p.x);
                hy = hy.max(p.y);
            }
            ((hx - lx) * (hy - ly)).max(f64::MIN_POSITIVE)
        }
    };
    (area / points.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample, Boundary, PointProcessConfig, Window};

    fn brute_nn(points: &[Point2], metric: Metric, i: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, q) in points.iter().enumerate() {
            if j != i {
                let d = metric.distance(points[i], *q);
                if d < best.1 || (d == best.1 && j < best.0) {
                    best = (j, d);
                }
            }
        }
        best
    }

    #[test]
    fn radius_query_is_superset() {
        for boundary in [Boundary::Plain, Boundary::Torus] {
            let w = Window::new(3.0, 2.0, boundary).unwrap();
            let pts = sample(&PointProcessConfig::uniform(400, 8), &w).unwrap();
            let grid = SpatialGrid::new(&pts, w.metric(), 0.2);
            for (i, p) in pts.iter().enumerate().step_by(7) {
                for r in [0.05, 0.3, 0.9, 5.0] {
                    let mut got = vec![false; pts.len()];
                    grid.for_each_candidate(*p, r, |j| got[j] = true);
                    for (j, q) in pts.iter().enumerate() {
                        if w.distance(*p, *q) <= r {
                            assert!(got[j], "{boundary:?} i={i} j={j} r={r}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_neighbour_matches_brute_force() {
        for boundary in [Boundary::Plain, Boundary::Torus] {
            let w = Window::new(2.0, 2.0, boundary).unwrap();
            let pts = sample(&PointProcessConfig::uniform(300, 12), &w).unwrap();
            let nn = all_nearest_neighbors(&pts, w.metric());
            for i in 0..pts.len() {
                let (j, d) = nn[i].unwrap();
                let (bj, bd) = brute_nn(&pts, w.metric(), i);
                assert_eq!(d, bd);
                assert_eq!(j, bj);
            }
        }
    }

    #[test]
    fn clustered_points() {
        let mut pts: Vec<Point2> = (0..50).map(|k| Point2::new(0.001 * k as f64, 0.0)).collect();
        pts.push(Point2::new(100.0, 100.0));
        let nn = all_nearest_neighbors(&pts, Metric::Euclidean);
        let (j, _) = nn[50].unwrap();
        assert_eq!(j, 49);
        assert_eq!(nn[0].unwrap().0, 1);
    }
}
