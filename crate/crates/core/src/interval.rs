//! Half-open frame ranges on the evaluation grid.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

#[derive(Deserialize)]
struct RawInterval {
    start: usize,
    end: usize,
}

impl TryFrom<RawInterval> for Interval {
    type Error = String;

    fn try_from(r: RawInterval) -> Result<Self, String> {
        Interval::new(r.start, r.end).ok_or_else(|| format!("empty interval [{}, {})", r.start, r.end))
    }
}

impl Interval {
    /// `None` unless `start < end`.
    pub fn new(start: usize, end: usize) -> Option<Self> {
        (start < end).then_some(Interval { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Number of shared frames, |a ∩ b|.
    pub fn overlap(&self, other: &Interval) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.overlap(other) > 0
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("intervals {0} and {1} overlap")]
pub struct InconsistentSet(pub Interval, pub Interval);

/// Pairwise non-overlapping intervals, sorted by start.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self, InconsistentSet> {
        intervals.sort();
        for w in intervals.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(InconsistentSet(w[0], w[1]));
            }
        }
        Ok(IntervalSet { intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.intervals.iter()
    }

    /// Per-frame membership over `0..len`; frames past `len` are ignored.
    pub fn to_frames(&self, len: usize) -> Vec<bool> {
        let mut out = vec![false; len];
        for iv in &self.intervals {
            out[iv.start.min(len)..iv.end.min(len)].fill(true);
        }
        out
    }

    pub fn starts(&self) -> Vec<usize> {
        self.intervals.iter().map(|iv| iv.start).collect()
    }

    pub fn covered_frames(&self) -> usize {
        self.intervals.iter().map(Interval::len).sum()
    }
}

impl TryFrom<Vec<Interval>> for IntervalSet {
    type Error = InconsistentSet;

    fn try_from(v: Vec<Interval>) -> Result<Self, Self::Error> {
        IntervalSet::new(v)
    }
}

impl From<IntervalSet> for Vec<Interval> {
    fn from(s: IntervalSet) -> Self {
        s.intervals
    }
}

impl<'a> IntoIterator for &'a IntervalSet {
    type Item = &'a Interval;
    type IntoIter = std::slice::Iter<'a, Interval>;

    fn into_iter(self) -> Self::IntoIter {
        self.intervals.iter()
    }
}

/// Maximal runs of `true` frames, dropping runs shorter than `min_len`.
pub fn runs(mask: impl IntoIterator<Item = bool>, min_len: usize) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut n = 0;
    for (i, on) in mask.into_iter().enumerate() {
        n = i + 1;
        match (on, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push(Interval { start: s, end: i });
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        if n - s >= min_len {
            out.push(Interval { start: s, end: n });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn overlap_counts_shared_frames() {
        assert_eq!(iv(0, 10).overlap(&iv(4, 12)), 6);
        assert_eq!(iv(0, 10).overlap(&iv(10, 12)), 0);
        assert_eq!(iv(3, 5).overlap(&iv(0, 10)), 2);
        assert!(Interval::new(4, 4).is_none());
    }

    #[test]
    fn set_rejects_overlap_and_sorts() {
        assert!(IntervalSet::new(vec![iv(0, 5), iv(4, 6)]).is_err());
        let s = IntervalSet::new(vec![iv(7, 9), iv(0, 5), iv(5, 7)]).unwrap();
        assert_eq!(s.intervals(), &[iv(0, 5), iv(5, 7), iv(7, 9)]);
    }

    #[test]
    fn serde_validates() {
        let s: IntervalSet = serde_json::from_str(r#"[{"start":1,"end":3}]"#).unwrap();
        assert_eq!(s.intervals(), &[iv(1, 3)]);
        assert!(serde_json::from_str::<Interval>(r#"{"start":3,"end":3}"#).is_err());
        assert!(serde_json::from_str::<IntervalSet>(r#"[{"start":1,"end":3},{"start":2,"end":4}]"#).is_err());
    }

    #[test]
    fn runs_scan() {
        assert_eq!(runs([true, true, false, true], 1), vec![iv(0, 2), iv(3, 4)]);
        assert_eq!(runs([true, true, false, true], 2), vec![iv(0, 2)]);
        assert!(runs([false; 4], 1).is_empty());
        assert_eq!(runs([true; 5], 1), vec![iv(0, 5)]);
    }
}
