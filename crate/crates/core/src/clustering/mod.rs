//! Photon clustering: groups pixel hits that touch in space and time, then
//! reduces each group to a [`PhotonEvent`].
//!
//! Two hits are linked when they are spatially adjacent (4- or 8-connected,
//! same pixel included) and their ToA differs by at most `window_ticks`.
//! A cluster is a connected component of that relation.

mod timewalk;
mod union_find;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_io::{HitChunk, PixelHit, TICK_NS};
use crate::exec::Exec;

pub use timewalk::TimeWalkTable;
pub use union_find::UnionFind;

/// 192 ticks = 300 ns.
pub const DEFAULT_WINDOW_TICKS: u64 = 192;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjacency {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Adjacency {
    #[inline]
    pub fn touches(self, a: &PixelHit, b: &PixelHit) -> bool {
        let dx = a.x.abs_diff(b.x);
        let dy = a.y.abs_diff(b.y);
        match self {
            Adjacency::Four => dx + dy <= 1,
            Adjacency::Eight => dx <= 1 && dy <= 1,
        }
    }
}

impl FromStr for Adjacency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" | "4-connected" => Ok(Adjacency::Four),
            "8" | "8-connected" => Ok(Adjacency::Eight),
            other => Err(Error::Config(format!(
                "adjacency must be 4 or 8, got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adjacency::Four => f.write_str("4"),
            Adjacency::Eight => f.write_str("8"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub window_ticks: u64,
    pub adjacency: Adjacency,
    pub walk: TimeWalkTable,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            window_ticks: DEFAULT_WINDOW_TICKS,
            adjacency: Adjacency::Eight,
            walk: TimeWalkTable::identity(),
        }
    }
}

/// A connected group of hits, members in stream order.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub hits: Vec<PixelHit>,
    /// Stream position of each member.
    pub seqs: Vec<u64>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Index of the member with the largest ToT; ties go to the smallest
    /// `(y, x)`, then to the earliest member.
    pub fn anchor_index(&self) -> usize {
        let mut best = 0;
        for (i, h) in self.hits.iter().enumerate().skip(1) {
            let b = &self.hits[best];
            let better = match h.tot.cmp(&b.tot) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => (h.y, h.x) < (b.y, b.x),
            };
            if better {
                best = i;
            }
        }
        best
    }

    pub fn anchor(&self) -> &PixelHit {
        &self.hits[self.anchor_index()]
    }

    pub fn to_photon(&self, walk: &TimeWalkTable) -> PhotonEvent {
        let (cx, cy) = centroid(self);
        let anchor = self.anchor_index();
        PhotonEvent {
            cx,
            cy,
            t_ns: cluster_time(self, walk),
            tot_sum: self.hits.iter().map(|h| h.tot as u64).sum(),
            n_pixels: self.hits.len() as u32,
            anchor_seq: self.seqs[anchor],
        }
    }
}

/// A clustered single-photon detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub cx: f64,
    pub cy: f64,
    pub t_ns: f64,
    pub tot_sum: u64,
    pub n_pixels: u32,
    /// Stream position of the anchor hit; identifies the photon across stages.
    pub anchor_seq: u64,
}

impl PhotonEvent {
    /// Total order used for output: time, then anchor position.
    pub fn cmp_time(&self, other: &Self) -> Ordering {
        self.t_ns
            .total_cmp(&other.t_ns)
            .then(self.anchor_seq.cmp(&other.anchor_seq))
    }

    pub fn csv_header() -> &'static str {
        "cx,cy,t_ns,tot_sum,n_pixels"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{},{}",
            self.cx, self.cy, self.t_ns, self.tot_sum, self.n_pixels
        )
    }
}

/// ToT-weighted centroid; falls back to the plain mean when all ToT are zero.
pub fn centroid(cluster: &Cluster) -> (f64, f64) {
    assert!(!cluster.is_empty(), "centroid of an empty cluster");
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for h in &cluster.hits {
        let w = h.tot as f64;
        sx += h.x as f64 * w;
        sy += h.y as f64 * w;
        sw += w;
    }
    if sw > 0.0 {
        return (sx / sw, sy / sw);
    }
    let n = cluster.len() as f64;
    let mx = cluster.hits.iter().map(|h| h.x as f64).sum::<f64>() / n;
    let my = cluster.hits.iter().map(|h| h.y as f64).sum::<f64>() / n;
    (mx, my)
}

/// Anchor ToA in ns minus the time-walk correction for the anchor ToT.
pub fn cluster_time(cluster: &Cluster, walk: &TimeWalkTable) -> f64 {
    let anchor = cluster.anchor();
    anchor.toa_ticks as f64 * TICK_NS - walk.correction_ns(anchor.tot)
}

/// Connected components of a time-sorted hit slice, as index lists.
pub fn label_clusters(
    hits: &[PixelHit],
    window_ticks: u64,
    adjacency: Adjacency,
) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(hits.len());
    for i in 1..hits.len() {
        let hi = &hits[i];
        for j in (0..i).rev() {
            let hj = &hits[j];
            debug_assert!(hj.toa_ticks <= hi.toa_ticks, "hits must be time-sorted");
            if hi.toa_ticks - hj.toa_ticks > window_ticks {
                break;
            }
            if adjacency.touches(hi, hj) {
                uf.union(i, j);
            }
        }
    }
    uf.groups()
}

/// Clusters one chunk. Members keep their chunk order; clusters are ordered
/// by their first member.
pub fn cluster_hits(chunk: &HitChunk, window_ticks: u64, adjacency: Adjacency) -> Vec<Cluster> {
    label_clusters(&chunk.hits, window_ticks, adjacency)
        .into_iter()
        .map(|members| Cluster {
            hits: members.iter().map(|&i| chunk.hits[i]).collect(),
            seqs: members
                .iter()
                .map(|&i| chunk.first_seq + i as u64)
                .collect(),
        })
        .collect()
}

/// Joins per-chunk clusters into global clusters.
///
/// Clusters that reach into the overlap with the next chunk stay open until
/// that chunk has been seen; clusters sharing a hit are merged. Every link
/// between two hits is visible inside at least one chunk when
/// `window ≤ overlap ≤ span/2`, so the result equals clustering the whole
/// stream at once.
#[derive(Default)]
struct Stitcher {
    open: Vec<Cluster>,
    open_by_seq: HashMap<u64, usize>,
}

impl Stitcher {
    fn push_chunk(
        &mut self,
        owned_end_ticks: u64,
        clusters: Vec<Cluster>,
        done: &mut Vec<Cluster>,
    ) {
        let carried = std::mem::take(&mut self.open);
        let carried_index = std::mem::take(&mut self.open_by_seq);
        let n_carried = carried.len();
        let mut uf = UnionFind::new(n_carried + clusters.len());
        for (j, cluster) in clusters.iter().enumerate() {
            for seq in &cluster.seqs {
                if let Some(&c) = carried_index.get(seq) {
                    uf.union(c, n_carried + j);
                }
            }
        }
        let mut items: Vec<Option<Cluster>> =
            carried.into_iter().chain(clusters).map(Some).collect();
        for group in uf.groups() {
            let merged = if group.len() == 1 {
                items[group[0]].take().expect("cluster consumed twice")
            } else {
                let mut members: Vec<(u64, PixelHit)> = Vec::new();
                for &g in &group {
                    let c = items[g].take().expect("cluster consumed twice");
                    members.extend(c.seqs.into_iter().zip(c.hits));
                }
                members.sort_unstable_by_key(|&(s, _)| s);
                members.dedup_by_key(|&mut (s, _)| s);
                Cluster {
                    seqs: members.iter().map(|&(s, _)| s).collect(),
                    hits: members.into_iter().map(|(_, h)| h).collect(),
                }
            };
            if merged.hits.iter().any(|h| h.toa_ticks >= owned_end_ticks) {
                let id = self.open.len();
                for (seq, h) in merged.seqs.iter().zip(&merged.hits) {
                    if h.toa_ticks >= owned_end_ticks {
                        self.open_by_seq.insert(*seq, id);
                    }
                }
                self.open.push(merged);
            } else {
                done.push(merged);
            }
        }
    }

    fn finish(&mut self, done: &mut Vec<Cluster>) {
        done.append(&mut self.open);
        self.open_by_seq.clear();
    }
}

/// Number of chunks clustered concurrently before stitching.
const CHUNK_BATCH: usize = 64;

/// Clusters a chunk stream and returns global clusters in stream order of
/// their first member.
pub fn extract_clusters<I>(chunks: I, config: &ClusterConfig, exec: Exec) -> Result<Vec<Cluster>>
where
    I: IntoIterator<Item = Result<HitChunk>>,
{
    if config.window_ticks == 0 {
        return Err(Error::Config("cluster window must be positive".into()));
    }
    let mut stitcher = Stitcher::default();
    let mut done = Vec::new();
    let mut batch: Vec<HitChunk> = Vec::with_capacity(CHUNK_BATCH);
    let flush = |batch: &mut Vec<HitChunk>, stitcher: &mut Stitcher, done: &mut Vec<Cluster>| {
        let work = std::mem::take(batch);
        let clustered = exec.map_owned(work, |chunk| {
            let clusters = cluster_hits(&chunk, config.window_ticks, config.adjacency);
            (chunk.owned_end_ticks, clusters)
        });
        for (owned_end, clusters) in clustered {
            stitcher.push_chunk(owned_end, clusters, done);
        }
    };
    for chunk in chunks {
        let chunk = chunk?;
        if chunk.overlap_ticks < config.window_ticks {
            return Err(Error::Config(format!(
                "chunk overlap {} ticks is smaller than the cluster window {} ticks",
                chunk.overlap_ticks, config.window_ticks
            )));
        }
        batch.push(chunk);
        if batch.len() == CHUNK_BATCH {
            flush(&mut batch, &mut stitcher, &mut done);
        }
    }
    flush(&mut batch, &mut stitcher, &mut done);
    stitcher.finish(&mut done);
    done.sort_unstable_by_key(|c| c.seqs[0]);
    Ok(done)
}

/// Full clustering stage: chunks in, time-sorted photons out.
pub fn extract_photons<I>(chunks: I, config: &ClusterConfig, exec: Exec) -> Result<Vec<PhotonEvent>>
where
    I: IntoIterator<Item = Result<HitChunk>>,
{
    let clusters = extract_clusters(chunks, config, exec)?;
    let mut photons = exec.map(&clusters, |c| c.to_photon(&config.walk));
    exec.sort_by(&mut photons, PhotonEvent::cmp_time);
    Ok(photons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::chunk_by_time;

    fn cluster_of(hits: &[PixelHit]) -> Cluster {
        Cluster {
            hits: hits.to_vec(),
            seqs: (0..hits.len() as u64).collect(),
        }
    }

    #[test]
    fn single_hit_single_cluster() {
        let chunk = HitChunk::whole(vec![PixelHit::new(3, 4, 10, 5)]);
        let clusters = cluster_hits(&chunk, 192, Adjacency::Eight);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 1);
    }

    #[test]
    fn adjacent_in_window_hits_merge() {
        let chunk = HitChunk::whole(vec![
            PixelHit::new(10, 10, 0, 5),
            PixelHit::new(11, 10, 2, 5),
        ]);
        let clusters = cluster_hits(&chunk, 192, Adjacency::Eight);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 2);
    }

    #[test]
    fn diagonal_depends_on_adjacency() {
        let chunk = HitChunk::whole(vec![
            PixelHit::new(10, 10, 0, 5),
            PixelHit::new(11, 11, 1, 5),
        ]);
        assert_eq!(cluster_hits(&chunk, 192, Adjacency::Eight).len(), 1);
        assert_eq!(cluster_hits(&chunk, 192, Adjacency::Four).len(), 2);
    }

    #[test]
    fn time_window_splits_clusters() {
        let chunk = HitChunk::whole(vec![
            PixelHit::new(10, 10, 0, 5),
            PixelHit::new(11, 10, 193, 5),
        ]);
        assert_eq!(cluster_hits(&chunk, 192, Adjacency::Eight).len(), 2);
        let chunk = HitChunk::whole(vec![
            PixelHit::new(10, 10, 0, 5),
            PixelHit::new(11, 10, 192, 5),
        ]);
        assert_eq!(cluster_hits(&chunk, 192, Adjacency::Eight).len(), 1);
    }

    #[test]
    fn empty_chunk_gives_nothing() {
        assert!(cluster_hits(&HitChunk::whole(Vec::new()), 192, Adjacency::Eight).is_empty());
        let photons = extract_photons(
            Vec::<Result<HitChunk>>::new(),
            &ClusterConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert!(photons.is_empty());
    }

    #[test]
    fn centroid_cases() {
        assert_eq!(
            centroid(&cluster_of(&[PixelHit::new(10, 10, 0, 4)])),
            (10.0, 10.0)
        );
        assert_eq!(
            centroid(&cluster_of(&[
                PixelHit::new(10, 10, 0, 3),
                PixelHit::new(11, 10, 0, 1)
            ])),
            (10.25, 10.0)
        );
        assert_eq!(
            centroid(&cluster_of(&[
                PixelHit::new(10, 10, 0, 2),
                PixelHit::new(11, 10, 0, 2)
            ])),
            (10.5, 10.0)
        );
        assert_eq!(
            centroid(&cluster_of(&[
                PixelHit::new(10, 10, 0, 0),
                PixelHit::new(12, 11, 0, 0)
            ])),
            (11.0, 10.5)
        );
    }

    #[test]
    fn cluster_time_cases() {
        let c = cluster_of(&[PixelHit::new(1, 1, 640, 5)]);
        assert_eq!(cluster_time(&c, &TimeWalkTable::identity()), 1000.0);
        let flat = TimeWalkTable::new(vec![(0, 10.0)]).unwrap();
        assert_eq!(cluster_time(&c, &flat), 990.0);
        let stepped = TimeWalkTable::new(vec![(0, 15.0), (20, 5.0), (50, 0.0)]).unwrap();
        let c30 = cluster_of(&[PixelHit::new(1, 1, 640, 30), PixelHit::new(2, 1, 600, 10)]);
        assert_eq!(cluster_time(&c30, &stepped), 995.0);
    }

    #[test]
    fn anchor_tie_breaks_on_row_then_column() {
        let c = cluster_of(&[
            PixelHit::new(5, 6, 0, 9),
            PixelHit::new(4, 6, 1, 9),
            PixelHit::new(9, 5, 2, 9),
            PixelHit::new(1, 1, 3, 3),
        ]);
        assert_eq!(c.anchor(), &PixelHit::new(9, 5, 2, 9));
    }

    #[test]
    fn window_larger_than_overlap_is_rejected() {
        let hits = vec![Ok(PixelHit::new(0, 0, 0, 1))];
        let chunks = chunk_by_time(hits, 200, 50).unwrap();
        let err = extract_photons(chunks, &ClusterConfig::default(), Exec::Sequential);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn straddling_cluster_reported_once() {
        // Span 1000, overlap 200: chunk 1 starts at 800. The cluster sits on
        // both sides of that boundary.
        let hits = vec![
            PixelHit::new(50, 50, 790, 10),
            PixelHit::new(51, 50, 805, 30),
            PixelHit::new(52, 50, 950, 12),
            PixelHit::new(100, 100, 1500, 7),
        ];
        let cfg = ClusterConfig::default();
        let whole = extract_photons(
            vec![Ok(HitChunk::whole(hits.clone()))],
            &cfg,
            Exec::Sequential,
        )
        .unwrap();
        let chunks = chunk_by_time(hits.into_iter().map(Ok), 1000, 200).unwrap();
        let chunked = extract_photons(chunks, &cfg, Exec::Sequential).unwrap();
        assert_eq!(whole.len(), 2);
        assert_eq!(chunked, whole);
        assert_eq!(chunked[0].n_pixels, 3);
    }

    #[test]
    fn cluster_inside_overlap_attributed_once() {
        let hits = vec![
            PixelHit::new(50, 50, 850, 10),
            PixelHit::new(51, 50, 860, 30),
        ];
        let chunks = chunk_by_time(hits.into_iter().map(Ok), 1000, 200).unwrap();
        let photons = extract_photons(chunks, &ClusterConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(photons.len(), 1);
        assert_eq!(photons[0].n_pixels, 2);
    }

    #[test]
    fn photon_csv_row_has_six_decimals() {
        let p = PhotonEvent {
            cx: 1.0,
            cy: 2.5,
            t_ns: 1000.0,
            tot_sum: 7,
            n_pixels: 2,
            anchor_seq: 0,
        };
        assert_eq!(p.csv_row(), "1.000000,2.500000,1000.000000,7,2");
    }
}
