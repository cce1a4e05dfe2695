//! Planar helpers shared by the tasks.

use alloc::vec::Vec;

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return distance(p, a);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + t * dx, a[1] + t * dy])
}

pub fn polyline_distance(p: Point, line: &[Point]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [q] => distance(p, *q),
        _ => line.windows(2).map(|s| segment_distance(p, s[0], s[1])).fold(f64::INFINITY, f64::min),
    }
}

pub fn arc_length(line: &[Point]) -> f64 {
    line.windows(2).map(|s| distance(s[0], s[1])).sum()
}

/// The point at arc-length fraction `s ∈ [0, 1]`.
pub fn point_at(line: &[Point], s: f64) -> Point {
    let total = arc_length(line);
    if total == 0.0 || line.len() < 2 {
        return line[0];
    }
    let mut remaining = s.clamp(0.0, 1.0) * total;
    for seg in line.windows(2) {
        let len = distance(seg[0], seg[1]);
        if remaining <= len && len > 0.0 {
            let t = remaining / len;
            return [seg[0][0] + t * (seg[1][0] - seg[0][0]), seg[0][1] + t * (seg[1][1] - seg[0][1])];
        }
        remaining -= len;
    }
    line[line.len() - 1]
}

/// `n` points equally spaced in arc length.
pub fn resample(line: &[Point], n: usize) -> Vec<Point> {
    (0..n).map(|i| point_at(line, i as f64 / (n.max(2) - 1) as f64)).collect()
}

/// Symmetric Chamfer distance: mean point-to-polyline distance in both
/// directions (each side resampled evenly), averaged.
pub fn chamfer(a: &[Point], b: &[Point]) -> f64 {
    const SAMPLES: usize = 100;
    let one_way = |from: &[Point], to: &[Point]| {
        resample(from, SAMPLES).iter().map(|p| polyline_distance(*p, to)).sum::<f64>() / SAMPLES as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// Corner cutting; keeps both endpoints.
pub fn chaikin(line: &[Point], rounds: usize) -> Vec<Point> {
    let mut cur = line.to_vec();
    for _ in 0..rounds {
        if cur.len() < 3 {
            break;
        }
        let mut next = Vec::with_capacity(2 * cur.len());
        next.push(cur[0]);
        for s in cur.windows(2) {
            next.push([0.75 * s[0][0] + 0.25 * s[1][0], 0.75 * s[0][1] + 0.25 * s[1][1]]);
            next.push([0.25 * s[0][0] + 0.75 * s[1][0], 0.25 * s[0][1] + 0.75 * s[1][1]]);
        }
        next.push(cur[cur.len() - 1]);
        cur = next;
    }
    cur
}

/// Minimum-jerk time scaling on `[0, 1]`.
pub fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Splits a flat `len × 2` buffer into points.
pub fn points(flat: &[f64]) -> Vec<Point> {
    flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| *p).collect()
}
