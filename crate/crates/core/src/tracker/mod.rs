//! ROI association across consecutive messages of one sender and the
//! per-ROI irregular tracklets built from it.

mod matching;

pub use matching::{build_cost_matrix, greedy_match, hungarian_match, CostMatrix, MatchResult};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::roi_codec::RoiSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Greedy,
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Half-width of the front/rear feasible bearing cone, radians.
    pub half_angle: f64,
    pub matcher: Matcher,
    /// Speed cap used to bound plausible displacement, m/s.
    pub speed_cap: f64,
    /// Slack added to `speed_cap × Δt`, meters.
    pub cost_margin: f64,
    /// Consecutive unmatched frames after which a tracklet is dropped.
    pub staleness: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            half_angle: 45f64.to_radians(),
            matcher: Matcher::Greedy,
            speed_cap: 105.0 / 3.6,
            cost_margin: 3.0,
            staleness: 2,
        }
    }
}

impl TrackerConfig {
    pub fn max_cost(&self, dt: f64) -> f64 {
        self.speed_cap * dt.max(0.0) + self.cost_margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Irregularly sampled history of one ROI, oldest state first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u64,
    pub states: Vec<TrackState>,
    pub last_size: (f64, f64),
    /// The ROI box at the newest state.
    pub last_box: OrientedBox,
    misses: u32,
}

impl Tracklet {
    pub fn new(id: u64, timestamp: f64, b: OrientedBox) -> Self {
        Self {
            id,
            states: vec![TrackState { timestamp, x: b.x, y: b.y, heading: b.heading }],
            last_size: (b.length, b.width),
            last_box: b,
            misses: 0,
        }
    }

    /// Builds a tracklet directly from states, oldest first.
    pub fn from_states(id: u64, states: Vec<TrackState>, size: (f64, f64)) -> Result<Self> {
        let last = *states.last().ok_or_else(|| Error::invalid("tracklet needs at least one state"))?;
        if states.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::invalid("tracklet timestamps must be strictly increasing"));
        }
        Ok(Self {
            id,
            states,
            last_size: size,
            last_box: OrientedBox::new(1.0, last.x, last.y, size.0, size.1, last.heading),
            misses: 0,
        })
    }

    pub fn last(&self) -> &TrackState {
        self.states.last().expect("tracklets are never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn push(&mut self, timestamp: f64, b: OrientedBox, k: usize) {
        self.states.push(TrackState { timestamp, x: b.x, y: b.y, heading: b.heading });
        if self.states.len() > k {
            let extra = self.states.len() - k;
            self.states.drain(..extra);
        }
        self.last_size = (b.length, b.width);
        self.last_box = b;
        self.misses = 0;
    }
}

/// Tracklets of one sender, keyed by a stable track id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStore {
    pub sender_id: u32,
    pub k: usize,
    pub tracklets: BTreeMap<u64, Tracklet>,
    next_id: u64,
    latest: Option<RoiSet>,
    /// Track id of every ROI in the latest frame, by ROI position.
    latest_tracks: Vec<u64>,
}

impl TrackStore {
    pub fn new(sender_id: u32, k: usize) -> Self {
        assert!(k >= 1, "history depth must be at least 1");
        Self { sender_id, k, tracklets: BTreeMap::new(), next_id: 0, latest: None, latest_tracks: Vec::new() }
    }

    pub fn latest_frame(&self) -> Option<&RoiSet> {
        self.latest.as_ref()
    }

    /// Tracklet holding ROI `index` of the latest frame.
    pub fn tracklet_for_latest(&self, index: usize) -> Option<&Tracklet> {
        self.latest_tracks.get(index).and_then(|id| self.tracklets.get(id))
    }

    /// Matches `next` against the latest frame and extends the tracklets.
    pub fn ingest(&mut self, next: &RoiSet, cfg: &TrackerConfig) -> Result<MatchResult> {
        let m = match &self.latest {
            None => {
                MatchResult { pairs: vec![], unmatched_rows: vec![], unmatched_cols: (0..next.rois.len()).collect() }
            }
            Some(prev) => {
                let cost = build_cost_matrix(prev, next, cfg.half_angle)?;
                let max_cost = cfg.max_cost(next.timestamp - prev.timestamp);
                match cfg.matcher {
                    Matcher::Greedy => greedy_match(&cost, max_cost),
                    Matcher::Hungarian => hungarian_match(&cost, max_cost),
                }
            }
        };
        update_tracklets(self, &m, next, cfg.staleness)?;
        Ok(m)
    }
}

/// Appends matched ROIs to their tracklets, opens tracklets for unmatched
/// ROIs of `next` and drops tracklets unmatched for `staleness` frames.
pub fn update_tracklets(store: &mut TrackStore, m: &MatchResult, next: &RoiSet, staleness: u32) -> Result<()> {
    if let Some(prev) = &store.latest {
        if next.timestamp <= prev.timestamp {
            return Err(Error::invalid(format!(
                "frame at {} does not follow the latest frame at {} for sender {}",
                next.timestamp, prev.timestamp, store.sender_id
            )));
        }
    }
    let prev_len = store.latest.as_ref().map_or(0, |p| p.rois.len());
    let mut assigned: Vec<Option<u64>> = vec![None; next.rois.len()];
    for &(r, c, _) in &m.pairs {
        if r >= prev_len || c >= next.rois.len() {
            return Err(Error::invalid(format!("match pair ({r}, {c}) out of range")));
        }
        if assigned[c].is_some() {
            return Err(Error::invalid(format!("column {c} matched twice")));
        }
        assigned[c] = Some(store.latest_tracks[r]);
    }
    for t in store.tracklets.values_mut() {
        t.misses += 1;
    }
    let k = store.k;
    for (c, roi) in next.rois.iter().enumerate() {
        let id = match assigned[c] {
            Some(id) => {
                store.tracklets.get_mut(&id).expect("matched tracklet exists").push(next.timestamp, roi.bbox, k);
                id
            }
            None => {
                let id = store.next_id;
                store.next_id += 1;
                store.tracklets.insert(id, Tracklet::new(id, next.timestamp, roi.bbox));
                id
            }
        };
        assigned[c] = Some(id);
    }
    store.tracklets.retain(|_, t| t.misses < staleness.max(1));
    store.latest_tracks = assigned.into_iter().map(|a| a.expect("all assigned")).collect();
    store.latest = Some(next.clone());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi_codec::Roi;

    fn frame(t: f64, pts: &[(f64, f64)]) -> RoiSet {
        RoiSet {
            timestamp: t,
            rois: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Roi { id: i as u32, bbox: OrientedBox::new(0.9, x, y, 4.0, 2.0, 0.0) })
                .collect(),
        }
    }

    #[test]
    fn initialization_opens_tracklets() {
        let mut s = TrackStore::new(1, 4);
        s.ingest(&frame(0.0, &[(0.0, 0.0), (10.0, 0.0), (20.0, 5.0)]), &TrackerConfig::default()).unwrap();
        assert_eq!(s.tracklets.len(), 3);
        assert!(s.tracklets.values().all(|t| t.len() == 1));
    }

    #[test]
    fn append_on_match() {
        let mut s = TrackStore::new(1, 4);
        let cfg = TrackerConfig::default();
        s.ingest(&frame(0.0, &[(0.0, 0.0)]), &cfg).unwrap();
        s.ingest(&frame(0.2, &[(1.5, 0.0)]), &cfg).unwrap();
        let t = s.tracklet_for_latest(0).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.states[1].timestamp > t.states[0].timestamp);
        assert_eq!(t.last().x, 1.5);
    }

    #[test]
    fn sliding_window_keeps_last_k() {
        let mut s = TrackStore::new(1, 3);
        let cfg = TrackerConfig::default();
        for i in 0..4 {
            s.ingest(&frame(i as f64 * 0.1, &[(i as f64, 0.0)]), &cfg).unwrap();
        }
        let t = s.tracklet_for_latest(0).unwrap();
        assert_eq!(t.len(), 3);
        let xs: Vec<f64> = t.states.iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_non_increasing_frames() {
        let mut s = TrackStore::new(1, 3);
        let cfg = TrackerConfig::default();
        s.ingest(&frame(0.5, &[(0.0, 0.0)]), &cfg).unwrap();
        assert!(s.ingest(&frame(0.5, &[(0.0, 0.0)]), &cfg).is_err());
    }

    #[test]
    fn stale_tracklets_are_dropped() {
        let mut s = TrackStore::new(1, 3);
        let cfg = TrackerConfig::default();
        s.ingest(&frame(0.0, &[(0.0, 0.0)]), &cfg).unwrap();
        s.ingest(&frame(0.1, &[(0.0, 30.0)]), &cfg).unwrap();
        assert_eq!(s.tracklets.len(), 2);
        s.ingest(&frame(0.2, &[(0.0, 60.0)]), &cfg).unwrap();
        assert!(s.tracklets.values().all(|t| t.last().x == 0.0 && t.last().y >= 30.0));
    }
}
