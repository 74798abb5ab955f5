//! Certified bounds on total received power for large point sets.
//!
//! Points are binned into a pyramid of square blocks. Far blocks are replaced
//! by their point mass at the centroid; since the first-order Taylor term
//! vanishes about the centroid, the remainder is at most
//! `0.5 * sup|Hess g| * sum |x - c|^2`. Near blocks are summed exactly. The
//! result is an interval that provably contains `sum_{k != j} g(d_kj)`.

use crate::attenuation::AttenuationModel;
use crate::geometry::{Metric, Point2};

#[derive(Debug, Clone, Copy)]
struct Block {
    count: u32,
    cx: f64,
    cy: f64,
    /// Sum of squared distances to the centroid.
    spread: f64,
    lo: Point2,
    hi: Point2,
}

impl Block {
    const EMPTY: Block = Block {
        count: 0,
        cx: 0.0,
        cy: 0.0,
        spread: 0.0,
        lo: Point2::new(f64::INFINITY, f64::INFINITY),
        hi: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    fn merge(parts: &[Block]) -> Block {
        let m: u32 = parts.iter().map(|b| b.count).sum();
        if m == 0 {
            return Block::EMPTY;
        }
        let mf = m as f64;
        let cx = parts.iter().map(|b| b.count as f64 * b.cx).sum::<f64>() / mf;
        let cy = parts.iter().map(|b| b.count as f64 * b.cy).sum::<f64>() / mf;
        let mut out = Block {
            count: m,
            cx,
            cy,
            spread: 0.0,
            ..Block::EMPTY
        };
        for b in parts.iter().filter(|b| b.count > 0) {
            let (dx, dy) = (b.cx - cx, b.cy - cy);
            out.spread += b.spread + b.count as f64 * (dx * dx + dy * dy);
            out.lo.x = out.lo.x.min(b.lo.x);
            out.lo.y = out.lo.y.min(b.lo.y);
            out.hi.x = out.hi.x.max(b.hi.x);
            out.hi.y = out.hi.y.max(b.hi.y);
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Level {
    nx: usize,
    ny: usize,
    blocks: Vec<Block>,
}

/// Interval bounds on total received power at every node.
#[derive(Debug, Clone)]
pub struct InterferenceField {
    points: Vec<Point2>,
    model: AttenuationModel,
    metric: Metric,
    /// Leaf membership in counting-sort layout.
    starts: Vec<u32>,
    items: Vec<u32>,
    levels: Vec<Level>,
}

impl InterferenceField {
    pub fn new(points: &[Point2], model: AttenuationModel, metric: Metric) -> Self {
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
                    (lo, (hi.x - lo.x).max(1e-300), (hi.y - lo.y).max(1e-300))
                }
            }
        };
        // About four points per leaf.
        let target = (4.0 * span_x * span_y / points.len().max(1) as f64).sqrt();
        let nx = ((span_x / target).ceil() as usize).clamp(1, 1 << 12);
        let ny = ((span_y / target).ceil() as usize).clamp(1, 1 << 12);
        let (cw, ch) = (span_x / nx as f64, span_y / ny as f64);
        let leaf_of = |p: &Point2| {
            let ix = (((p.x - origin.x) / cw).floor().max(0.0) as usize).min(nx - 1);
            let iy = (((p.y - origin.y) / ch).floor().max(0.0) as usize).min(ny - 1);
            iy * nx + ix
        };
        let cells: Vec<usize> = points.iter().map(leaf_of).collect();
        let mut starts = vec![0u32; nx * ny + 1];
        for &c in &cells {
            starts[c + 1] += 1;
        }
        for c in 0..nx * ny {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }

        let mut leaves = vec![Block::EMPTY; nx * ny];
        for (c, leaf) in leaves.iter_mut().enumerate() {
            let members = &items[starts[c] as usize..starts[c + 1] as usize];
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let cx = members.iter().map(|&i| points[i as usize].x).sum::<f64>() / m;
            let cy = members.iter().map(|&i| points[i as usize].y).sum::<f64>() / m;
            let mut b = Block {
                count: members.len() as u32,
                cx,
                cy,
                ..Block::EMPTY
            };
            for &i in members {
                let p = points[i as usize];
                b.spread += (p.x - cx).powi(2) + (p.y - cy).powi(2);
                b.lo.x = b.lo.x.min(p.x);
                b.lo.y = b.lo.y.min(p.y);
                b.hi.x = b.hi.x.max(p.x);
                b.hi.y = b.hi.y.max(p.y);
            }
            *leaf = b;
        }
        let mut levels = vec![Level { nx, ny, blocks: leaves }];
        while {
            let top = levels.last().unwrap();
            top.nx > 2 || top.ny > 2
        } {
            let below = levels.last().unwrap();
            let (px, py) = (below.nx.div_ceil(2), below.ny.div_ceil(2));
            let mut blocks = Vec::with_capacity(px * py);
            for by in 0..py {
                for bx in 0..px {
                    let mut parts = [Block::EMPTY; 4];
                    for (k, (dx, dy)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                        let (x, y) = (2 * bx + dx, 2 * by + dy);
                        if x < below.nx && y < below.ny {
                            parts[k] = below.blocks[y * below.nx + x];
                        }
                    }
                    blocks.push(Block::merge(&parts));
                }
            }
            levels.push(Level { nx: px, ny: py, blocks });
        }
        Self {
            points: points.to_vec(),
            model,
            metric,
            starts,
            items,
            levels,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Displacement range of `b`'s bounding box as seen from `p`, or `None`
    /// if on a torus the box cannot be placed in a single periodic image.
    fn relative_box(&self, p: Point2, b: &Block) -> Option<(f64, f64, f64, f64, f64, f64)> {
        let (mut x0, mut x1) = (b.lo.x - p.x, b.hi.x - p.x);
        let (mut y0, mut y1) = (b.lo.y - p.y, b.hi.y - p.y);
        let (mut cx, mut cy) = (b.cx - p.x, b.cy - p.y);
        if let Metric::Torus { width, height } = self.metric {
            let sx = width * (0.5 * (x0 + x1) / width).round();
            let sy = height * (0.5 * (y0 + y1) / height).round();
            x0 -= sx;
            x1 -= sx;
            cx -= sx;
            y0 -= sy;
            y1 -= sy;
            cy -= sy;
            // Strictly inside the half-period box: every member's minimum
            // image then coincides with this shifted copy.
            let (hw, hh) = (0.5 * width, 0.5 * height);
            if !(x0 > -hw && x1 < hw && y0 > -hh && y1 < hh) {
                return None;
            }
        }
        Some((x0, x1, y0, y1, cx, cy))
    }

    /// Interval containing `sum_{k != j} g(d_kj)`.
    ///
    /// `theta` is the opening criterion: a block is summarized when its
    /// bounding-box diagonal is below `theta` times its distance to node `j`.
    pub fn bounds(&self, j: usize, theta: f64) -> (f64, f64) {
        let p = self.points[j];
        let mut value = 0.0;
        let mut err = 0.0;
        let mut magnitude = 0.0;
        let top = self.levels.len() - 1;
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for by in 0..self.levels[top].ny {
            for bx in 0..self.levels[top].nx {
                stack.push((top, bx, by));
            }
        }
        while let Some((lvl, bx, by)) = stack.pop() {
            let level = &self.levels[lvl];
            let b = &level.blocks[by * level.nx + bx];
            if b.count == 0 {
                continue;
            }
            if let Some((x0, x1, y0, y1, cx, cy)) = self.relative_box(p, b) {
                let gx = if x0 > 0.0 { x0 } else if x1 < 0.0 { -x1 } else { 0.0 };
                let gy = if y0 > 0.0 { y0 } else if y1 < 0.0 { -y1 } else { 0.0 };
                let r_min = gx.hypot(gy);
                let diag = (x1 - x0).hypot(y1 - y0);
                if r_min > 0.0 && diag < theta * r_min {
                    let term = b.count as f64 * self.model.gain(cx.hypot(cy));
                    value += term;
                    magnitude += term;
                    err += 0.5 * self.model.curvature_bound(r_min) * b.spread;
                    continue;
                }
            }
            if lvl == 0 {
                let c = by * level.nx + bx;
                for &k in &self.items[self.starts[c] as usize..self.starts[c + 1] as usize] {
                    let k = k as usize;
                    if k != j {
                        let term = self.model.gain(self.metric.distance(self.points[k], p));
                        value += term;
                        magnitude += term;
                    }
                }
                continue;
            }
            let below = &self.levels[lvl - 1];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (x, y) = (2 * bx + dx, 2 * by + dy);
                if x < below.nx && y < below.ny {
                    stack.push((lvl - 1, x, y));
                }
            }
        }
        // Rounding in the summation and in the remainder terms themselves.
        let slack = err * 1e-6 + magnitude * 1e-12 * (self.points.len() as f64).max(1.0).log2().max(1.0);
        ((value - err - slack).max(0.0), value + err + slack)
    }
}
