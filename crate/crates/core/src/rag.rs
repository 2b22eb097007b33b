//! Region adjacency graph over superpixels, greedy mean-color merging, and
//! the bisection search for the merge threshold that leaves two regions.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use crate::error::{check_dims, Error, Result};
use crate::imagecore::{BinaryMask, ImageRgb, LabelMap};

/// Largest possible distance between two mean RGB colors, `sqrt(3) * 255`.
pub const MAX_COLOR_DISTANCE: f64 = 441.672_955_930_063_7;

/// Color statistics of one region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionNode {
    pub id: u32,
    pub pixel_count: u64,
    /// Per-channel sum of RGB values over the region's pixels.
    pub total_color: [u64; 3],
}

impl RegionNode {
    pub fn mean_color(&self) -> [f64; 3] {
        let n = self.pixel_count as f64;
        self.total_color.map(|t| t as f64 / n)
    }
}

/// Euclidean distance between the mean colors of two regions.
pub fn color_distance(a: &RegionNode, b: &RegionNode) -> f64 {
    let (ma, mb) = (a.mean_color(), b.mean_color());
    ma.iter()
        .zip(&mb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Region adjacency graph.
///
/// Node ids are the superpixel labels they started from; a merge keeps the
/// smaller id. `parent` records merges so the current pixel assignment can
/// be materialized from the original label map.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionGraph {
    nodes: Vec<Option<RegionNode>>,
    adjacency: Vec<BTreeSet<u32>>,
    parent: Vec<u32>,
    base: Arc<LabelMap>,
    live: usize,
}

impl RegionGraph {
    pub fn node_count(&self) -> usize {
        self.live
    }

    pub fn node(&self, id: u32) -> Option<&RegionNode> {
        self.nodes.get(id as usize).and_then(Option::as_ref)
    }

    /// Live nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &RegionNode> {
        self.nodes.iter().flatten()
    }

    /// Neighbors of a live node, in id order.
    pub fn neighbors(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency[id as usize].iter().copied()
    }

    /// Undirected edges as `(smaller, larger)` pairs, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for node in self.nodes() {
            for &n in &self.adjacency[node.id as usize] {
                if node.id < n {
                    out.push((node.id, n));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adjacency
            .get(a as usize)
            .is_some_and(|s| s.contains(&b))
    }

    pub fn total_pixels(&self) -> u64 {
        self.nodes().map(|n| n.pixel_count).sum()
    }

    pub fn total_color(&self) -> [u64; 3] {
        self.nodes().fold([0; 3], |acc, n| {
            [
                acc[0] + n.total_color[0],
                acc[1] + n.total_color[1],
                acc[2] + n.total_color[2],
            ]
        })
    }

    /// True when the live nodes form one connected component.
    pub fn is_connected(&self) -> bool {
        let Some(first) = self.nodes().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([first.id]);
        let mut stack = vec![first.id];
        while let Some(id) = stack.pop() {
            for n in self.neighbors(id) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == self.live
    }

    fn root(&self, mut id: u32) -> u32 {
        while self.parent[id as usize] != id {
            id = self.parent[id as usize];
        }
        id
    }

    /// Current node id of every pixel; pixels outside the region of
    /// interest are [`LabelMap::VOID`]. Ids are not compacted.
    pub fn pixel_assignment(&self) -> LabelMap {
        let mut roots: Vec<u32> = (0..self.parent.len() as u32).collect();
        for (id, r) in roots.iter_mut().enumerate() {
            *r = self.root(id as u32);
        }
        let labels = self
            .base
            .as_slice()
            .iter()
            .map(|&l| if l == LabelMap::VOID { l } else { roots[l as usize] })
            .collect();
        LabelMap::new(self.base.width(), self.base.height(), labels).expect("same dimensions")
    }

    /// Merges node `b` into node `a` (or vice versa); the survivor keeps
    /// the smaller id, summed statistics and the union of neighbors.
    /// Returns the surviving id.
    ///
    /// # Panics
    /// If either node is not live or `a == b`.
    pub fn merge_pair(&mut self, a: u32, b: u32) -> u32 {
        assert_ne!(a, b, "cannot merge a node with itself");
        let (keep, gone) = (a.min(b), a.max(b));
        let removed = self.nodes[gone as usize].take().expect("merged node must be live");
        let survivor = self.nodes[keep as usize].as_mut().expect("merged node must be live");
        survivor.pixel_count += removed.pixel_count;
        for c in 0..3 {
            survivor.total_color[c] += removed.total_color[c];
        }
        let moved = std::mem::take(&mut self.adjacency[gone as usize]);
        for n in moved {
            self.adjacency[n as usize].remove(&gone);
            if n != keep {
                self.adjacency[n as usize].insert(keep);
                self.adjacency[keep as usize].insert(n);
            }
        }
        self.parent[gone as usize] = keep;
        self.live -= 1;
        keep
    }

    /// Greedily merges the closest adjacent pair while its mean-color
    /// distance is strictly below `t`. Ties go to the smallest
    /// `(min id, max id)` pair.
    pub fn merge_at_threshold(&self, t: f64) -> RegionGraph {
        let mut g = self.clone();
        let mut version = vec![0u32; g.nodes.len()];
        let mut heap = BinaryHeap::new();
        for (a, b) in g.edges() {
            let d = color_distance(g.node(a).unwrap(), g.node(b).unwrap());
            if d < t {
                heap.push(Reverse(Candidate { dist: d, a, b, va: 0, vb: 0 }));
            }
        }
        while let Some(Reverse(c)) = heap.pop() {
            let fresh = g.nodes[c.a as usize].is_some()
                && g.nodes[c.b as usize].is_some()
                && version[c.a as usize] == c.va
                && version[c.b as usize] == c.vb;
            if !fresh {
                continue;
            }
            let keep = g.merge_pair(c.a, c.b);
            version[keep as usize] += 1;
            let kv = version[keep as usize];
            let node = g.node(keep).unwrap().clone();
            for n in g.neighbors(keep).collect::<Vec<_>>() {
                let d = color_distance(&node, g.node(n).unwrap());
                if d < t {
                    let (a, b) = (keep.min(n), keep.max(n));
                    let (va, vb) = if a == keep {
                        (kv, version[n as usize])
                    } else {
                        (version[n as usize], kv)
                    };
                    heap.push(Reverse(Candidate { dist: d, a, b, va, vb }));
                }
            }
        }
        g
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist: f64,
    a: u32,
    b: u32,
    va: u32,
    vb: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
            .then(self.va.cmp(&other.va))
            .then(self.vb.cmp(&other.vb))
    }
}

/// Builds the adjacency graph of `labels` restricted to `roi`.
///
/// Pixels outside `roi` contribute to no node; labels with no pixel inside
/// `roi` produce no node. Two nodes are adjacent when some in-roi pixel of
/// one 4-neighbors an in-roi pixel of the other.
pub fn build_rag(img: &ImageRgb, labels: &LabelMap, roi: &BinaryMask) -> Result<RegionGraph> {
    check_dims(img.dims(), labels.dims())?;
    check_dims(img.dims(), roi.dims())?;
    if roi.count() == 0 {
        return Err(Error::EmptyRoi);
    }
    let base = labels.restrict_to(roi)?;
    let (width, height) = base.dims();
    let bound = base.label_bound();
    let mut nodes: Vec<Option<RegionNode>> = vec![None; bound];
    let mut adjacency = vec![BTreeSet::new(); bound];
    let lab = base.as_slice();

    for (i, &l) in lab.iter().enumerate() {
        if l == LabelMap::VOID {
            continue;
        }
        let p = img.pixel_at(i);
        let node = nodes[l as usize].get_or_insert(RegionNode {
            id: l,
            pixel_count: 0,
            total_color: [0; 3],
        });
        node.pixel_count += 1;
        for (total, &v) in node.total_color.iter_mut().zip(&p) {
            *total += v as u64;
        }
        let x = i % width;
        let mut link = |q: usize| {
            let lq = lab[q];
            if lq != LabelMap::VOID && lq != l {
                adjacency[l as usize].insert(lq);
                adjacency[lq as usize].insert(l);
            }
        };
        if x + 1 < width {
            link(i + 1);
        }
        if i / width + 1 < height {
            link(i + width);
        }
    }
    if nodes.iter().all(Option::is_none) {
        return Err(Error::EmptyRoi);
    }
    let live = nodes.iter().flatten().count();
    Ok(RegionGraph {
        nodes,
        adjacency,
        parent: (0..bound as u32).collect(),
        base: Arc::new(base),
        live,
    })
}

/// Bounds and stopping rules of the threshold search.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeConfig {
    pub t_lo: f64,
    pub t_hi: f64,
    /// The search stops once the bracketing interval is narrower than this.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            t_lo: 0.0,
            t_hi: 500.0,
            epsilon: 0.1,
            max_iterations: 32,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_lo >= 0.0 && self.t_lo < self.t_hi && self.t_hi.is_finite()) {
            return Err(Error::Config(format!(
                "merge bounds must satisfy 0 <= t_lo < t_hi, got [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("merge epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("merge max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// One evaluated threshold and the number of regions it left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub threshold: f64,
    pub regions: usize,
}

#[derive(Clone, Debug)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub merged: RegionGraph,
    /// Bisection probes in evaluation order.
    pub probes: Vec<Probe>,
    /// True when no probe left two or more regions and the result is the
    /// graph merged at `t_lo`.
    pub fell_back: bool,
}

/// Bisects the merge threshold until exactly two regions remain.
///
/// The region count is not monotone in the threshold, so the search keeps
/// the best probe seen: one with exactly two regions, otherwise the one
/// with the fewest regions above one. If every probe collapsed the graph to
/// a single region, the graph merged at `t_lo` is returned instead.
pub fn find_threshold(graph: &RegionGraph, cfg: &MergeConfig) -> Result<ThresholdSearch> {
    cfg.validate()?;
    if graph.node_count() < 2 {
        return Err(Error::Degenerate(format!(
            "threshold search needs at least 2 regions, graph has {}",
            graph.node_count()
        )));
    }
    let (mut lo, mut hi) = (cfg.t_lo, cfg.t_hi);
    let mut probes = Vec::new();
    let mut best: Option<(f64, RegionGraph)> = None;

    while probes.len() < cfg.max_iterations && hi - lo >= cfg.epsilon {
        let t = 0.5 * (lo + hi);
        let merged = graph.merge_at_threshold(t);
        let n = merged.node_count();
        probes.push(Probe { threshold: t, regions: n });
        log::trace!("merge probe t={t:.4} regions={n}");

        if n >= 2 && best.as_ref().is_none_or(|(_, b)| n < b.node_count()) {
            best = Some((t, merged));
        }
        match n.cmp(&2) {
            Ordering::Equal => break,
            Ordering::Greater => lo = t,
            Ordering::Less => hi = t,
        }
    }

    Ok(match best {
        Some((threshold, merged)) => ThresholdSearch {
            threshold,
            merged,
            probes,
            fell_back: false,
        },
        None => ThresholdSearch {
            threshold: cfg.t_lo,
            merged: graph.merge_at_threshold(cfg.t_lo),
            probes,
            fell_back: true,
        },
    })
}
