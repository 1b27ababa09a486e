//! Small numeric utilities shared across the crate: root bracketing,
//! golden-section and Nelder-Mead minimization, Karp's mean-cycle
//! algorithm, planar hulls, and a streaming log-sum accumulator.

use crate::error::{Error, Result};

pub const PHI: f64 = 1.618_033_988_749_895;
pub const RESP: f64 = 2.0 - PHI;

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must not have
/// the same strict sign; ties on either end return that end directly.
pub fn bisect_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NonConvergence {
            what: "root bracket",
            iterations: 0,
        });
    }
    let sign_lo = flo.signum();
    for _ in 0..max_iter {
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: "bisection",
        iterations: max_iter,
    })
}

/// Golden-section minimum of a unimodal function on [a, b].
pub fn golden_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Directed graph in compressed rows for cycle-mean questions.
pub struct MeanCycleGraph {
    pub nv: usize,
    pub row_ptr: Vec<u32>,
    pub tgt: Vec<u32>,
}

/// Karp's maximum cycle mean over one weighting of the edges, with an
/// optimal cycle recovered from the parent chain. Costs O(V * E) time and
/// O(V^2) memory, so callers should gate on graph size.
pub fn max_cycle_mean(g: &MeanCycleGraph, w: &[f64]) -> (f64, Vec<u32>) {
    let nv = g.nv;
    let ne = g.tgt.len();
    assert_eq!(w.len(), ne);
    // d[k][v]: best weight of a k-edge walk ending at v, any start
    let mut d = vec![f64::NEG_INFINITY; (nv + 1) * nv];
    let mut parent = vec![u32::MAX; (nv + 1) * nv];
    for v in 0..nv {
        d[v] = 0.0;
    }
    for k in 0..nv {
        let (prev, next) = d.split_at_mut((k + 1) * nv);
        let prev = &prev[k * nv..];
        let next = &mut next[..nv];
        let par = &mut parent[(k + 1) * nv..(k + 2) * nv];
        for src in 0..nv {
            if prev[src] == f64::NEG_INFINITY {
                continue;
            }
            for e in g.row_ptr[src] as usize..g.row_ptr[src + 1] as usize {
                let t = g.tgt[e] as usize;
                let cand = prev[src] + w[e];
                if cand > next[t] {
                    next[t] = cand;
                    par[t] = e as u32;
                }
            }
        }
    }
    let mut best_mean = f64::NEG_INFINITY;
    let mut best_v = 0usize;
    for v in 0..nv {
        if d[nv * nv + v] == f64::NEG_INFINITY {
            continue;
        }
        let mut worst = f64::INFINITY;
        for k in 0..nv {
            if d[k * nv + v] == f64::NEG_INFINITY {
                continue;
            }
            let mean = (d[nv * nv + v] - d[k * nv + v]) / (nv - k) as f64;
            if mean < worst {
                worst = mean;
            }
        }
        if worst > best_mean {
            best_mean = worst;
            best_v = v;
        }
    }
    // walk the parent chain nv steps back; some state repeats, and the
    // repeat segment is a maximum-mean cycle
    let mut states = vec![0usize; nv + 1];
    let mut edges_back = vec![u32::MAX; nv];
    let mut v = best_v;
    states[nv] = v;
    for k in (0..nv).rev() {
        let e = parent[(k + 1) * nv + v];
        edges_back[k] = e;
        v = edge_source(g, e);
        states[k] = v;
    }
    let mut seen = vec![usize::MAX; nv];
    let mut cycle = Vec::new();
    'outer: for (k, &s) in states.iter().enumerate() {
        if seen[s] != usize::MAX {
            for kk in seen[s]..k {
                cycle.push(edges_back[kk]);
            }
            break 'outer;
        }
        seen[s] = k;
    }
    (best_mean, cycle)
}

fn edge_source(g: &MeanCycleGraph, e: u32) -> usize {
    // row_ptr is sorted, so the owning row is found by binary search
    let mut lo = 0usize;
    let mut hi = g.nv;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if g.row_ptr[mid] as usize <= e as usize {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn min_cycle_mean(g: &MeanCycleGraph, w: &[f64]) -> (f64, Vec<u32>) {
    let neg: Vec<f64> = w.iter().map(|x| -x).collect();
    let (m, c) = max_cycle_mean(g, &neg);
    (-m, c)
}

/// Andrew's monotone chain; returns hull vertices counterclockwise.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance of `p` to the hull: negative strictly inside, positive
/// outside. The hull must be counterclockwise; degenerate hulls fall back
/// to point or segment distance.
pub fn hull_signed_distance(hull: &[(f64, f64)], p: (f64, f64)) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => ((p.0 - hull[0].0).powi(2) + (p.1 - hull[0].1).powi(2)).sqrt(),
        2 => segment_distance(hull[0], hull[1], p),
        _ => {
            let mut worst = f64::NEG_INFINITY;
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                if len < 1e-300 {
                    continue;
                }
                // positive on the outward side of a counterclockwise edge
                let sd = ((p.0 - a.0) * (b.1 - a.1) - (p.1 - a.1) * (b.0 - a.0)) / len;
                worst = worst.max(sd);
            }
            worst
        }
    }
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0)
    };
    let qx = a.0 + t * dx;
    let qy = a.1 + t * dy;
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Streaming log of a sum of exponentials; mergeable for tree reductions.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    shift: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            shift: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSum {
    pub fn push(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.shift {
            self.sum = self.sum * (self.shift - log_term).exp() + 1.0;
            self.shift = log_term;
        } else {
            self.sum += (log_term - self.shift).exp();
        }
    }

    pub fn merge(self, other: LogSum) -> LogSum {
        if other.shift == f64::NEG_INFINITY {
            return self;
        }
        if self.shift == f64::NEG_INFINITY {
            return other;
        }
        if self.shift >= other.shift {
            LogSum {
                shift: self.shift,
                sum: self.sum + other.sum * (other.shift - self.shift).exp(),
            }
        } else {
            LogSum {
                shift: other.shift,
                sum: other.sum + self.sum * (self.shift - other.shift).exp(),
            }
        }
    }

    pub fn value(&self) -> f64 {
        if self.shift == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.shift + self.sum.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect_root(|x| x * x - 2.0, 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_rejects_unbracketed() {
        assert!(bisect_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn golden_finds_parabola_min() {
        // comparison search localizes a quadratic to about sqrt(eps)
        let (x, fx) = golden_min(|x| (x - 0.3) * (x - 0.3) + 1.0, -4.0, 5.0, 1e-10, 400);
        assert!((x - 0.3).abs() < 5e-8);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    fn graph(nv: usize, edges: &[(u32, u32)]) -> MeanCycleGraph {
        let mut row_ptr = vec![0u32; nv + 1];
        for &(s, _) in edges {
            row_ptr[s as usize + 1] += 1;
        }
        for i in 0..nv {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut tgt = vec![0u32; edges.len()];
        let mut fill = row_ptr.clone();
        for &(s, t) in edges {
            tgt[fill[s as usize] as usize] = t;
            fill[s as usize] += 1;
        }
        MeanCycleGraph { nv, row_ptr, tgt }
    }

    #[test]
    fn karp_two_loops() {
        // self loop at 0 with weight 1, two-cycle 1<->2 with mean 2.5
        let g = graph(3, &[(0, 0), (1, 2), (2, 1)]);
        let w = vec![1.0, 2.0, 3.0];
        let (mx, cyc) = max_cycle_mean(&g, &w);
        assert!((mx - 2.5).abs() < 1e-12);
        let total: f64 = cyc.iter().map(|&e| w[e as usize]).sum();
        assert!((total / cyc.len() as f64 - 2.5).abs() < 1e-12);
        let (mn, cyc) = min_cycle_mean(&g, &w);
        assert!((mn - 1.0).abs() < 1e-12);
        assert_eq!(cyc.len(), 1);
    }

    #[test]
    fn karp_golden_mean_digit_weights() {
        // golden-mean graph, weight = digit of the target symbol; cycle
        // means range over [0, 1/2]
        let g = graph(2, &[(0, 0), (0, 1), (1, 0)]);
        let w = vec![0.0, 1.0, 0.0];
        let (mx, _) = max_cycle_mean(&g, &w);
        let (mn, _) = min_cycle_mean(&g, &w);
        assert!((mx - 0.5).abs() < 1e-12);
        assert!(mn.abs() < 1e-12);
    }

    #[test]
    fn hull_of_square_plus_interior() {
        let pts = [
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.5, 0.5),
            (0.2, 0.8),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(hull_signed_distance(&h, (0.5, 0.5)) < 0.0);
        assert!(hull_signed_distance(&h, (1.5, 0.5)) > 0.4);
        assert!(hull_signed_distance(&h, (1.0, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_sum_matches_direct() {
        let terms = [-3.0, -1.0, 0.5, -700.0, 2.0];
        let mut acc = LogSum::default();
        for t in terms {
            acc.push(t);
        }
        let direct: f64 = terms.iter().map(|t| t.exp()).sum::<f64>().ln();
        assert!((acc.value() - direct).abs() < 1e-12);
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        for t in &terms[..2] {
            a.push(*t);
        }
        for t in &terms[2..] {
            b.push(*t);
        }
        assert!((a.merge(b).value() - direct).abs() < 1e-12);
    }
}
