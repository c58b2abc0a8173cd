//! Street graph of a windowed street system, shortest-path distances from the
//! origin, and level-set counting of the shortest-path length inside a cell.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cell::ConvexCell;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::streets::{Orientation, Segment, StreetSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct StreetGraph {
    pub nodes: Vec<Point>,
    /// `u` is the endpoint with the smaller running coordinate.
    pub edges: Vec<Edge>,
    pub origin_node: usize,
    adj_offsets: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl StreetGraph {
    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn neighbours(&self, node: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_offsets[node]..self.adj_offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbours(node).len()
    }

    /// Nodes CSV `id,x,y,dist`.
    pub fn write_nodes_csv<W: Write>(&self, out: &mut W, distances: &[f64]) -> std::io::Result<()> {
        writeln!(out, "id,x,y,dist")?;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = distances.get(i).copied().unwrap_or(f64::INFINITY);
            let d = if d.is_finite() { format!("{d:.16e}") } else { "inf".to_string() };
            writeln!(out, "{i},{:.16e},{:.16e},{d}", p.x, p.y)?;
        }
        Ok(())
    }

    /// Edges CSV `u,v,length`.
    pub fn write_edges_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "u,v,length")?;
        for e in &self.edges {
            writeln!(out, "{},{},{:.16e}", e.u, e.v, e.length)?;
        }
        Ok(())
    }
}

fn key(p: Point) -> (u64, u64) {
    // +0.0 and -0.0 must share a node.
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

/// Graph of a street system whose origin lies on a street.
pub fn build_graph(streets: &StreetSystem) -> Result<StreetGraph> {
    if !streets.contains_point(Point::ORIGIN) {
        return Err(Error::OriginOffStreet);
    }
    build_graph_from_segments(&streets.segments(&streets.window()), Point::ORIGIN)
}

/// Nodes at every crossing and T-junction, at segment endpoints and at
/// `origin`; edges between consecutive nodes along each segment.
pub fn build_graph_from_segments(segments: &[Segment], origin: Point) -> Result<StreetGraph> {
    let mut stops: Vec<Vec<f64>> = segments
        .iter()
        .map(|s| {
            let (lo, hi) = s.span();
            vec![lo, hi]
        })
        .collect();

    let mut verticals: Vec<usize> = (0..segments.len())
        .filter(|&i| segments[i].orientation == Orientation::Vertical)
        .collect();
    verticals.sort_by(|&a, &b| segments[a].level().total_cmp(&segments[b].level()));
    let vx: Vec<f64> = verticals.iter().map(|&i| segments[i].level()).collect();

    for (hi, h) in segments.iter().enumerate() {
        if h.orientation != Orientation::Horizontal {
            continue;
        }
        let y = h.level();
        let (a, b) = h.span();
        let first = vx.partition_point(|&x| x < a);
        for k in first..vx.len() {
            if vx[k] > b {
                break;
            }
            let vi = verticals[k];
            let (c, d) = segments[vi].span();
            if y >= c && y <= d {
                stops[hi].push(vx[k]);
                stops[vi].push(y);
            }
        }
    }

    let mut on_street = false;
    for (i, s) in segments.iter().enumerate() {
        if s.contains(origin) {
            on_street = true;
            stops[i].push(match s.orientation {
                Orientation::Horizontal => origin.x,
                Orientation::Vertical => origin.y,
            });
        }
    }
    if !on_street {
        return Err(Error::OriginOffStreet);
    }

    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut node_id = |p: Point, nodes: &mut Vec<Point>| {
        *index.entry(key(p)).or_insert_with(|| {
            nodes.push(p);
            nodes.len() - 1
        })
    };
    let mut edges = Vec::new();
    for (s, list) in segments.iter().zip(stops.iter_mut()) {
        list.sort_by(f64::total_cmp);
        list.dedup();
        let at = |c: f64| match s.orientation {
            Orientation::Horizontal => Point::new(c, s.level()),
            Orientation::Vertical => Point::new(s.level(), c),
        };
        let mut prev = node_id(at(list[0]), &mut nodes);
        for pair in list.windows(2) {
            let next = node_id(at(pair[1]), &mut nodes);
            edges.push(Edge {
                u: prev,
                v: next,
                length: pair[1] - pair[0],
            });
            prev = next;
        }
    }
    let origin_node = index[&key(origin)];

    let mut degree = vec![0usize; nodes.len() + 1];
    for e in &edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    let mut adj_offsets = Vec::with_capacity(nodes.len() + 1);
    let mut acc = 0;
    for d in &degree[..nodes.len()] {
        adj_offsets.push(acc);
        acc += d;
    }
    adj_offsets.push(acc);
    let mut fill = adj_offsets.clone();
    let mut adj = vec![(0usize, 0.0f64); acc];
    for e in &edges {
        adj[fill[e.u]] = (e.v, e.length);
        fill[e.u] += 1;
        adj[fill[e.v]] = (e.u, e.length);
        fill[e.v] += 1;
    }

    Ok(StreetGraph {
        nodes,
        edges,
        origin_node,
        adj_offsets,
        adj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Dijkstra from the origin node; unreachable nodes get `+inf`.
pub fn node_distances(graph: &StreetGraph) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.nodes.len()];
    let mut heap = BinaryHeap::new();
    dist[graph.origin_node] = 0.0;
    heap.push(Reverse((Dist(0.0), graph.origin_node)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in graph.neighbours(u) {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((Dist(nd), v)));
            }
        }
    }
    dist
}

/// Shortest-path length along one edge, restricted to the part inside a cell.
///
/// With `t` the arc length from `u`, the path length is
/// `min(d_u + t, d_v + length - t)` on `t in [t_lo, t_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistanceProfile {
    pub edge: usize,
    pub d_u: f64,
    pub d_v: f64,
    pub length: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl EdgeDistanceProfile {
    /// Whole edge, no clipping.
    pub fn whole(edge: usize, d_u: f64, d_v: f64, length: f64) -> Self {
        EdgeDistanceProfile {
            edge,
            d_u,
            d_v,
            length,
            t_lo: 0.0,
            t_hi: length,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        (self.d_u + t).min(self.d_v + self.length - t)
    }

    /// Arc length of the maximum, or `None` if both ends are unreachable.
    pub fn apex(&self) -> Option<f64> {
        match (self.d_u.is_finite(), self.d_v.is_finite()) {
            (false, false) => None,
            (true, false) => Some(self.length),
            (false, true) => Some(0.0),
            (true, true) => Some((0.5 * (self.d_v + self.length - self.d_u)).clamp(0.0, self.length)),
        }
    }

    /// Increasing and decreasing pieces as half-open `[lo, hi)` parameter intervals.
    fn pieces(&self) -> Option<((f64, f64), (f64, f64))> {
        let apex = self.apex()?;
        let inc = (self.t_lo, self.t_hi.min(apex));
        let dec = (self.t_lo.max(apex), self.t_hi);
        Some((inc, dec))
    }

    /// Number of `t` in the clipped interval with path length exactly `r`.
    pub fn count_at(&self, r: f64) -> usize {
        let Some(((a, b), (c, d))) = self.pieces() else {
            return 0;
        };
        let mut n = 0;
        let t = r - self.d_u;
        if a < b && t >= a && t < b {
            n += 1;
        }
        let t = self.d_v + self.length - r;
        if c < d && t >= c && t < d {
            n += 1;
        }
        n
    }

    /// Measure of the clipped points with path length `<= a`.
    pub fn length_within(&self, level: f64) -> f64 {
        let Some(((a, b), (c, d))) = self.pieces() else {
            return 0.0;
        };
        let mut total = 0.0;
        if b > a {
            total += (level - self.d_u - a).clamp(0.0, b - a);
        }
        if d > c {
            let from = c.max(self.d_v + self.length - level);
            total += (d - from).clamp(0.0, d - c);
        }
        total
    }

    pub fn clipped_length(&self) -> f64 {
        (self.t_hi - self.t_lo).max(0.0)
    }

    /// Values of `r` where the solution count can change.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![self.value_at(self.t_lo), self.value_at(self.t_hi)];
        if let Some(apex) = self.apex() {
            if apex > self.t_lo && apex < self.t_hi {
                b.push(self.value_at(apex));
            }
        }
        b
    }
}

/// Profiles of every edge piece lying inside `cell`.
pub fn cell_profiles(graph: &StreetGraph, distances: &[f64], cell: &ConvexCell) -> Vec<EdgeDistanceProfile> {
    let bbox = cell.bounding_box();
    let mut out = Vec::new();
    for (k, e) in graph.edges.iter().enumerate() {
        let a = graph.nodes[e.u];
        let b = graph.nodes[e.v];
        if a.x.max(b.x) < bbox.x0 || a.x.min(b.x) > bbox.x1 || a.y.max(b.y) < bbox.y0 || a.y.min(b.y) > bbox.y1 {
            continue;
        }
        if let Some((s0, s1)) = cell.clip_segment(a, b) {
            if s1 > s0 {
                out.push(EdgeDistanceProfile {
                    edge: k,
                    d_u: distances[e.u],
                    d_v: distances[e.v],
                    length: e.length,
                    t_lo: s0 * e.length,
                    t_hi: s1 * e.length,
                });
            }
        }
    }
    out
}

/// `#{y in cell ∩ S : l(y) = r}`.
pub fn count_level_points(graph: &StreetGraph, distances: &[f64], cell: &ConvexCell, r: f64) -> usize {
    cell_profiles(graph, distances, cell).iter().map(|p| p.count_at(r)).sum()
}

/// Level counts for every `r` of a grid.
pub fn level_counts(profiles: &[EdgeDistanceProfile], r_grid: &[f64]) -> Vec<u32> {
    let mut counts = vec![0u32; r_grid.len()];
    for p in profiles {
        let Some((lo, hi)) = profile_range(p) else {
            continue;
        };
        let first = r_grid.partition_point(|&r| r < lo);
        for (k, &r) in r_grid.iter().enumerate().skip(first) {
            if r > hi {
                break;
            }
            counts[k] += p.count_at(r) as u32;
        }
    }
    counts
}

fn profile_range(p: &EdgeDistanceProfile) -> Option<(f64, f64)> {
    p.apex()?;
    let b = p.breakpoints();
    let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::voronoi_cell_at_origin;
    use crate::streets::Provenance;

    fn lattice(xs: &[f64], ys: &[f64], w: f64) -> Vec<Segment> {
        let mut s = Vec::new();
        for &x in xs {
            s.push(Segment::vertical(x, -w, w, Provenance::Main));
        }
        for &y in ys {
            s.push(Segment::horizontal(y, -w, w, Provenance::Main));
        }
        s
    }

    fn big_cell(w: f64) -> ConvexCell {
        voronoi_cell_at_origin(&[], w).unwrap()
    }

    #[test]
    fn two_by_two_lines() {
        let g = build_graph_from_segments(&lattice(&[0.0, 1.0], &[0.0, 1.0], 10.0), Point::ORIGIN).unwrap();
        // 4 crossings + 8 boundary nodes.
        assert_eq!(g.nodes.len(), 12);
        let unit = g.edges.iter().filter(|e| (e.length - 1.0).abs() < 1e-15).count();
        assert_eq!(unit, 4);
        assert!((g.total_length() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn origin_splits_its_edge() {
        let u = 0.3;
        let xs: Vec<f64> = (-5..=5).map(|k| k as f64 + u).collect();
        let ys: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let g = build_graph_from_segments(&lattice(&xs, &ys, 6.0), Point::ORIGIN).unwrap();
        let mut lens: Vec<f64> = g.neighbours(g.origin_node).iter().map(|&(_, l)| l).collect();
        lens.sort_by(f64::total_cmp);
        assert_eq!(lens.len(), 2);
        assert!((lens[0] - u).abs() < 1e-12 && (lens[1] - (1.0 - u)).abs() < 1e-12);
    }

    #[test]
    fn grid_geodesics() {
        let xs: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let g = build_graph_from_segments(&lattice(&xs, &xs, 6.0), Point::ORIGIN).unwrap();
        let d = node_distances(&g);
        let target = g.nodes.iter().position(|p| *p == Point::new(2.0, 1.0)).unwrap();
        assert!((d[target] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn point_off_node_uses_nearest_vertical() {
        let xs: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let origin = Point::new(0.3, 0.0);
        let g = build_graph_from_segments(&lattice(&xs, &xs, 6.0), origin).unwrap();
        let d = node_distances(&g);
        let left = g.nodes.iter().position(|p| *p == Point::new(0.0, 1.0)).unwrap();
        let right = g.nodes.iter().position(|p| *p == Point::new(1.0, 1.0)).unwrap();
        let k = g.edges.iter().position(|e| e.u == left && e.v == right).unwrap();
        let e = g.edges[k];
        let p = EdgeDistanceProfile::whole(k, d[e.u], d[e.v], e.length);
        // (0.3, 1): 0.3 + 1 + 0.3.
        assert!((p.value_at(0.3) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn star_graph_counts_one_point_per_arm() {
        let segs = vec![
            Segment::horizontal(0.0, -1.0, 1.0, Provenance::Main),
            Segment::vertical(0.0, -1.0, 1.0, Provenance::Main),
        ];
        let g = build_graph_from_segments(&segs, Point::ORIGIN).unwrap();
        let d = node_distances(&g);
        assert_eq!(count_level_points(&g, &d, &big_cell(5.0), 0.5), 4);
    }

    #[test]
    fn origin_off_street() {
        let segs = vec![Segment::horizontal(1.0, -1.0, 1.0, Provenance::Main)];
        assert!(matches!(
            build_graph_from_segments(&segs, Point::ORIGIN),
            Err(Error::OriginOffStreet)
        ));
    }

    #[test]
    fn profile_counts_and_lengths() {
        // d_u = 1, d_v = 2, length 3: apex at t = 2 with value 3.
        let p = EdgeDistanceProfile::whole(0, 1.0, 2.0, 3.0);
        assert_eq!(p.apex(), Some(2.0));
        assert_eq!(p.count_at(0.5), 0);
        assert_eq!(p.count_at(1.5), 1);
        assert_eq!(p.count_at(2.5), 2);
        assert_eq!(p.count_at(3.0), 1);
        assert_eq!(p.count_at(3.5), 0);
        assert!((p.length_within(f64::INFINITY) - 3.0).abs() < 1e-15);
        assert!((p.length_within(2.5) - 2.0).abs() < 1e-15);
        let unreachable = EdgeDistanceProfile::whole(0, f64::INFINITY, f64::INFINITY, 1.0);
        assert_eq!(unreachable.count_at(1.0), 0);
        assert_eq!(unreachable.length_within(10.0), 0.0);
        let one_sided = EdgeDistanceProfile::whole(0, 1.0, f64::INFINITY, 1.0);
        assert_eq!(one_sided.count_at(1.5), 1);
        assert!((one_sided.length_within(1.25) - 0.25).abs() < 1e-15);
    }
}
