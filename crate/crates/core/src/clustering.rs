//! Minimax-linkage hierarchical clustering and prototype extraction.
//!
//! The linkage between two clusters is the radius of the smallest ball,
//! centered at one of their points, that covers their union. The center that
//! achieves it becomes the prototype of the merged cluster, so every cluster
//! is represented by an actual company.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::format;
use crate::projection::{pairwise_distances, Metric};

pub const DEFAULT_CUT_HEIGHT: f64 = 0.25;

/// One agglomeration step. Node ids follow the usual convention: leaves are
/// `0..n`, the cluster created by merge `i` is `n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Point index of the merged cluster's prototype.
    pub prototype: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn root_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// Leaves below a node, ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                let m = &self.merges[v - n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn prototype_of(&self, node: usize) -> usize {
        let n = self.n_leaves();
        if node < n {
            node
        } else {
            self.merges[node - n].prototype
        }
    }

    fn height_of(&self, node: usize) -> f64 {
        let n = self.n_leaves();
        if node < n {
            0.0
        } else {
            self.merges[node - n].height
        }
    }
}

/// Minimax linkage over the rows of `points`.
///
/// Runs in O(n^3) time with an n x n table holding, for every point, its
/// largest distance to each live cluster. Equal linkages merge the pair with
/// the smallest (lowest member, lowest member) indices; equal radii pick the
/// lowest-index prototype.
pub fn minimax_linkage_cluster(points: &DMatrix<f64>, labels: &[String], metric: Metric) -> Result<Dendrogram> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::Data(format!("{} labels for {n} points", labels.len())));
    }
    let dist = pairwise_distances(points, metric)?;
    minimax_linkage_from_distances(&dist, labels)
}

/// Same as [`minimax_linkage_cluster`] on a precomputed symmetric distance
/// matrix.
pub fn minimax_linkage_from_distances(dist: &[Vec<f64>], labels: &[String]) -> Result<Dendrogram> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::Data("clustering needs at least two points".into()));
    }
    if labels.len() != n || dist.iter().any(|r| r.len() != n) {
        return Err(Error::Data("distance matrix and labels disagree in size".into()));
    }
    if dist.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::Data("pairwise distances must be finite".into()));
    }

    // Live clusters are addressed by slot; slot s starts as point s.
    // far[c][s]: max distance from point c to the members of slot s.
    let mut far: Vec<Vec<f64>> = dist.to_vec();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut alive: Vec<bool> = vec![true; n];
    // Linkage and prototype for every live slot pair (upper triangle).
    let mut link = vec![vec![(f64::INFINITY, usize::MAX); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            link[i][j] = pair_linkage(&far, &members[i], &members[j], i, j);
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // Slots are ordered by their lowest member because a merged cluster
        // keeps the lower slot, so scanning slots in order gives the
        // documented tie-break.
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in (0..n).filter(|&i| alive[i]) {
            for j in (i + 1..n).filter(|&j| alive[j]) {
                if link[i][j].0 < best.0 {
                    best = (link[i][j].0, i, j);
                }
            }
        }
        let (height, g, h) = best;
        let prototype = link[g][h].1;

        let moved = std::mem::take(&mut members[h]);
        members[g].extend(moved);
        members[g].sort_unstable();
        alive[h] = false;
        for row in far.iter_mut() {
            row[g] = row[g].max(row[h]);
        }
        let (left, right) = (node_of[g].min(node_of[h]), node_of[g].max(node_of[h]));
        merges.push(Merge {
            left,
            right,
            height,
            prototype,
            size: members[g].len(),
        });
        node_of[g] = n + step;

        for k in (0..n).filter(|&k| alive[k] && k != g) {
            let (a, b) = (g.min(k), g.max(k));
            link[a][b] = pair_linkage(&far, &members[a], &members[b], a, b);
        }
    }

    Ok(Dendrogram {
        labels: labels.to_vec(),
        merges,
    })
}

/// Minimax radius and center of the union of two live slots.
fn pair_linkage(far: &[Vec<f64>], ga: &[usize], gb: &[usize], a: usize, b: usize) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for &c in ga.iter().chain(gb) {
        let r = far[c][a].max(far[c][b]);
        if r < best.0 || (r == best.0 && c < best.1) {
            best = (r, c);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub labels: Vec<String>,
    /// Cluster id per point, aligned with `labels`.
    pub assignment: Vec<usize>,
    /// Prototype point index per cluster id.
    pub prototypes: Vec<usize>,
    pub cut_height: f64,
}

impl BasisSet {
    pub fn n_clusters(&self) -> usize {
        self.prototypes.len()
    }

    pub fn prototype_tickers(&self) -> Vec<String> {
        self.prototypes.iter().map(|&p| self.labels[p].clone()).collect()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// `# cut_height=<h>` then `ticker,cluster_id,is_prototype`, one row per
    /// point in input order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let protos: BTreeSet<usize> = self.prototypes.iter().copied().collect();
        let mut out = format!("# cut_height={}\nticker,cluster_id,is_prototype\n", format::sig(self.cut_height, 9));
        for (i, (t, c)) in self.labels.iter().zip(&self.assignment).enumerate() {
            out.push_str(&format!("{t},{c},{}\n", protos.contains(&i)));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<BasisSet> {
        let ctx = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let cut_height = lines
            .next()
            .and_then(|l| l.strip_prefix("# cut_height="))
            .ok_or_else(|| Error::parse(&ctx, "missing cut_height comment"))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::parse(&ctx, e))?;
        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut labels = Vec::new();
        let mut assignment = Vec::new();
        let mut proto_flags = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
            if rec.len() != 3 {
                return Err(Error::parse(&ctx, "expected ticker,cluster_id,is_prototype"));
            }
            labels.push(rec[0].to_string());
            assignment.push(rec[1].parse::<usize>().map_err(|e| Error::parse(&ctx, e))?);
            proto_flags.push(rec[2].parse::<bool>().map_err(|e| Error::parse(&ctx, e))?);
        }
        let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
        let mut prototypes = vec![usize::MAX; n_clusters];
        for (i, &is_proto) in proto_flags.iter().enumerate() {
            if is_proto {
                let slot = &mut prototypes[assignment[i]];
                if *slot != usize::MAX {
                    return Err(Error::parse(&ctx, format!("cluster {} has two prototypes", assignment[i])));
                }
                *slot = i;
            }
        }
        if prototypes.contains(&usize::MAX) {
            return Err(Error::parse(&ctx, "a cluster has no prototype"));
        }
        Ok(BasisSet {
            labels,
            assignment,
            prototypes,
            cut_height,
        })
    }
}

/// Clusters are the maximal subtrees whose merge height is at most `height`.
/// Cluster ids are ordered by each cluster's lowest point index.
pub fn cut_dendrogram(d: &Dendrogram, height: f64) -> Result<BasisSet> {
    if !(height >= 0.0) {
        return Err(Error::Config(format!("cut height must be non-negative, got {height}")));
    }
    let n = d.n_leaves();
    let root = if n == 1 { 0 } else { 2 * n - 2 };
    let mut roots = Vec::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if d.height_of(v) <= height {
            roots.push(v);
        } else {
            let m = &d.merges[v - n];
            stack.push(m.left);
            stack.push(m.right);
        }
    }
    let mut clusters: Vec<(Vec<usize>, usize)> = roots.iter().map(|&v| (d.members(v), d.prototype_of(v))).collect();
    clusters.sort_by_key(|c| c.0[0]);
    let mut assignment = vec![0; n];
    let mut prototypes = Vec::with_capacity(clusters.len());
    for (id, (mem, proto)) in clusters.into_iter().enumerate() {
        for i in mem {
            assignment[i] = id;
        }
        prototypes.push(proto);
    }
    Ok(BasisSet {
        labels: d.labels.clone(),
        assignment,
        prototypes,
        cut_height: height,
    })
}
