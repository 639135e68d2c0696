//! Frame motion descriptors and temporal-pyramid interval descriptors.
//!
//! A frame descriptor is the smoothed per-cell flow `(dx, dy)` in row-major
//! cell order followed by `mean(dx), mean(dy), std(dx), std(dy)` over cells.
//! An interval descriptor concatenates three context blocks
//! `[before | center | after]`; each block holds the dimension-wise mean and
//! population variance of the frame descriptors over 7 pyramid sub-intervals
//! (whole, two halves, four quarters).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowgrid::{eval_to_native, FlowSequence};
use crate::interval::Interval;
use crate::stats::{mean_var, ExactSum};

pub const PYRAMID_SUBINTERVALS: usize = 7;
pub const CONTEXT_BLOCKS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("evaluation index {index} maps to native frame {native}, sequence has {len}")]
    IndexOutOfRange { index: usize, native: usize, len: usize },
    #[error("interval is empty")]
    EmptyInterval,
    #[error("interval {interval} is outside 0..{len}")]
    OutOfRange { interval: Interval, len: usize },
    #[error("frame descriptors have inconsistent dimensions")]
    DimensionMismatch,
}

/// Frame descriptor length for a grid with `cells` cells.
pub const fn frame_dim(cells: usize) -> usize {
    cells * 2 + 4
}

/// Interval descriptor length for frame descriptors of length `frame_dim`.
pub const fn pyramid_dim(frame_dim: usize) -> usize {
    CONTEXT_BLOCKS * PYRAMID_SUBINTERVALS * 2 * frame_dim
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub eval_index: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PyramidDescriptor {
    pub interval: Interval,
    pub values: Vec<f64>,
}

/// Descriptor values for one smoothed flow field.
pub fn describe_field(vectors: &[[f64; 2]]) -> Vec<f64> {
    let mut values = Vec::with_capacity(frame_dim(vectors.len()));
    for v in vectors {
        values.extend_from_slice(v);
    }
    let mut acc = ExactSum::new();
    let dx: Vec<f64> = vectors.iter().map(|v| v[0]).collect();
    let dy: Vec<f64> = vectors.iter().map(|v| v[1]).collect();
    let (mx, vx) = mean_var(&dx, &mut acc);
    let (my, vy) = mean_var(&dy, &mut acc);
    values.extend_from_slice(&[mx, my, vx.sqrt(), vy.sqrt()]);
    values
}

pub fn frame_descriptor(
    smoothed: &FlowSequence,
    eval_index: usize,
    eval_hz: f64,
) -> Result<FrameDescriptor, DescriptorError> {
    let native = eval_to_native(eval_index, smoothed.fps(), eval_hz);
    let field = smoothed.fields().get(native).ok_or(DescriptorError::IndexOutOfRange {
        index: eval_index,
        native,
        len: smoothed.len(),
    })?;
    Ok(FrameDescriptor {
        eval_index,
        values: describe_field(&field.vectors),
    })
}

/// Equal-length neighbors on either side, clipped to `0..video_len`. A
/// neighbor that clips to nothing is replaced by the interval itself.
pub fn neighbor_context(interval: Interval, video_len: usize) -> (Interval, Interval) {
    let len = interval.len();
    let before = Interval::new(interval.start.saturating_sub(len), interval.start).unwrap_or(interval);
    let after = Interval::new(interval.end, (interval.end + len).min(video_len)).unwrap_or(interval);
    (before, after)
}

/// The 7 pyramid sub-intervals in level order. Split points are
/// `start + floor(len * k / 4)`; an empty piece inherits its parent's range.
pub fn pyramid_ranges(interval: Interval) -> [Interval; PYRAMID_SUBINTERVALS] {
    let s = interval.start;
    let n = interval.len();
    let at = |k: usize| s + n * k / 4;
    let piece = |a: usize, b: usize, parent: Interval| Interval::new(a, b).unwrap_or(parent);
    let h0 = piece(at(0), at(2), interval);
    let h1 = piece(at(2), at(4), interval);
    [
        interval,
        h0,
        h1,
        piece(at(0), at(1), h0),
        piece(at(1), at(2), h0),
        piece(at(2), at(3), h1),
        piece(at(3), at(4), h1),
    ]
}

/// Frame descriptors of one video stored column-wise for fast aggregation.
#[derive(Clone, Debug)]
pub struct DescriptorTrack {
    dim: usize,
    len: usize,
    columns: Vec<Vec<f64>>,
}

impl DescriptorTrack {
    pub fn new(frames: &[FrameDescriptor]) -> Result<Self, DescriptorError> {
        let dim = frames.first().map_or(0, |f| f.values.len());
        if frames.iter().any(|f| f.values.len() != dim) {
            return Err(DescriptorError::DimensionMismatch);
        }
        let columns = (0..dim).map(|d| frames.iter().map(|f| f.values[d]).collect()).collect();
        Ok(DescriptorTrack {
            dim,
            len: frames.len(),
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frame_dim(&self) -> usize {
        self.dim
    }

    fn block(&self, interval: Interval, out: &mut Vec<f64>, acc: &mut ExactSum) {
        for r in pyramid_ranges(interval) {
            let stats: Vec<(f64, f64)> = self
                .columns
                .iter()
                .map(|col| mean_var(&col[r.start..r.end], acc))
                .collect();
            out.extend(stats.iter().map(|s| s.0));
            out.extend(stats.iter().map(|s| s.1));
        }
    }

    pub fn pyramid(&self, interval: Interval) -> Result<PyramidDescriptor, DescriptorError> {
        if interval.is_empty() {
            return Err(DescriptorError::EmptyInterval);
        }
        if interval.end > self.len {
            return Err(DescriptorError::OutOfRange {
                interval,
                len: self.len,
            });
        }
        let (before, after) = neighbor_context(interval, self.len);
        let mut values = Vec::with_capacity(pyramid_dim(self.dim));
        let mut acc = ExactSum::new();
        for part in [before, interval, after] {
            self.block(part, &mut values, &mut acc);
        }
        Ok(PyramidDescriptor { interval, values })
    }
}

/// Interval descriptor over `frames`, which are indexed by evaluation frame.
pub fn pyramid_descriptor(
    frames: &[FrameDescriptor],
    interval: Interval,
) -> Result<PyramidDescriptor, DescriptorError> {
    DescriptorTrack::new(frames)?.pyramid(interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn constant_flow_descriptor() {
        let seq = FlowSequence::from_vectors("c", 15.0, 16, 12, vec![vec![[1.0, 0.0]; 192]; 30]).unwrap();
        let d = frame_descriptor(&seq, 1, 1.0).unwrap();
        assert_eq!(d.values.len(), 388);
        let mut want: Vec<f64> = std::iter::repeat_n([1.0, 0.0], 192).flatten().collect();
        want.extend([1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.values, want);
    }

    #[test]
    fn half_moving_grid_stats() {
        let mut v = vec![[0.0, 0.0]; 192];
        for c in v.iter_mut().take(96) {
            *c = [2.0, 0.0];
        }
        let d = describe_field(&v);
        assert_eq!(&d[384..], &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dimensions() {
        assert_eq!(frame_dim(16 * 12), 388);
        assert_eq!(pyramid_dim(388), 3 * 7 * 2 * 388);
    }

    #[test]
    fn index_out_of_range() {
        let seq = FlowSequence::from_vectors("c", 15.0, 1, 1, vec![vec![[0.0, 0.0]]; 20]).unwrap();
        assert!(frame_descriptor(&seq, 1, 1.0).is_ok());
        assert_eq!(
            frame_descriptor(&seq, 2, 1.0),
            Err(DescriptorError::IndexOutOfRange {
                index: 2,
                native: 30,
                len: 20
            })
        );
    }

    #[test]
    fn neighbor_cases() {
        assert_eq!(neighbor_context(iv(10, 20), 100), (iv(0, 10), iv(20, 30)));
        assert_eq!(neighbor_context(iv(0, 10), 100), (iv(0, 10), iv(10, 20)));
        assert_eq!(neighbor_context(iv(90, 100), 100), (iv(80, 90), iv(90, 100)));
        assert_eq!(neighbor_context(iv(5, 15), 18), (iv(0, 5), iv(15, 18)));
    }

    #[test]
    fn pyramid_ranges_split_and_fallback() {
        let r = pyramid_ranges(iv(0, 8));
        assert_eq!(
            r,
            [iv(0, 8), iv(0, 4), iv(4, 8), iv(0, 2), iv(2, 4), iv(4, 6), iv(6, 8)]
        );
        let r = pyramid_ranges(iv(3, 4));
        assert!(r.iter().all(|x| *x == iv(3, 4)));
        let r = pyramid_ranges(iv(0, 5));
        assert_eq!(
            r,
            [iv(0, 5), iv(0, 2), iv(2, 5), iv(0, 1), iv(1, 2), iv(2, 3), iv(3, 5)]
        );
        let r = pyramid_ranges(iv(0, 3));
        assert_eq!(
            r,
            [iv(0, 3), iv(0, 1), iv(1, 3), iv(0, 1), iv(0, 1), iv(1, 2), iv(2, 3)]
        );
    }

    fn frames(values: &[Vec<f64>]) -> Vec<FrameDescriptor> {
        values
            .iter()
            .enumerate()
            .map(|(eval_index, v)| FrameDescriptor {
                eval_index,
                values: v.clone(),
            })
            .collect()
    }

    #[test]
    fn constant_descriptor_pyramid() {
        let v = vec![0.3, -1.7, 2.5];
        let fr = frames(&vec![v.clone(); 40]);
        let p = pyramid_descriptor(&fr, iv(10, 22)).unwrap();
        assert_eq!(p.values.len(), pyramid_dim(3));
        for chunk in p.values.chunks(6) {
            assert_eq!(&chunk[..3], &v[..]);
            assert_eq!(&chunk[3..], &[0.0; 3]);
        }
    }

    #[test]
    fn single_frame_interval() {
        let fr = frames(&(0..10).map(|i| vec![i as f64, (i * i) as f64]).collect::<Vec<_>>());
        let p = pyramid_descriptor(&fr, iv(4, 5)).unwrap();
        // center block is the 2nd of three, each 7 * 2 * 2 long
        let center = &p.values[28..56];
        for chunk in center.chunks(4) {
            assert_eq!(chunk, &[4.0, 16.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn pyramid_errors() {
        let fr = frames(&vec![vec![0.0]; 5]);
        assert_eq!(
            pyramid_descriptor(&fr, Interval { start: 2, end: 2 }).unwrap_err(),
            DescriptorError::EmptyInterval
        );
        assert!(matches!(
            pyramid_descriptor(&fr, iv(3, 6)),
            Err(DescriptorError::OutOfRange { .. })
        ));
        let mut bad = frames(&vec![vec![0.0]; 3]);
        bad[1].values.push(1.0);
        assert_eq!(
            pyramid_descriptor(&bad, iv(0, 1)).unwrap_err(),
            DescriptorError::DimensionMismatch
        );
    }

    proptest! {
        #[test]
        fn variance_nonnegative_and_zero_iff_constant(
            vals in prop::collection::vec(-5i32..5, 8..40),
            a in 0usize..8, w in 1usize..8,
        ) {
            let fr = frames(&vals.iter().map(|&v| vec![v as f64 / 4.0]).collect::<Vec<_>>());
            let n = fr.len();
            let start = a.min(n - 1);
            let end = (start + w).min(n);
            let interval = iv(start, end);
            let p = pyramid_descriptor(&fr, interval).unwrap();
            let (before, after) = neighbor_context(interval, n);
            for (b, part) in [before, interval, after].into_iter().enumerate() {
                for (k, r) in pyramid_ranges(part).into_iter().enumerate() {
                    let var = p.values[b * 14 + k * 2 + 1];
                    let slice = &vals[r.start..r.end];
                    let constant = slice.iter().all(|&v| v == slice[0]);
                    prop_assert!(var >= 0.0);
                    prop_assert_eq!(var == 0.0, constant);
                }
            }
        }

        #[test]
        fn deterministic(vals in prop::collection::vec(-10f64..10.0, 12..30)) {
            let fr = frames(&vals.iter().map(|&v| vec![v, v * 0.5]).collect::<Vec<_>>());
            let a = pyramid_descriptor(&fr, iv(3, 9)).unwrap();
            let b = pyramid_descriptor(&fr, iv(3, 9)).unwrap();
            prop_assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn duplication_invariance(
            vals in prop::collection::vec(prop::collection::vec(-3f64..3.0, 2), 40..60),
            quarter in 1usize..4, offset in 0usize..4,
        ) {
            // interval and both neighbors lie fully inside the video
            let len = 4 * quarter;
            let start = len + offset;
            prop_assume!(start + 2 * len <= vals.len());
            let fr = frames(&vals);
            let doubled: Vec<Vec<f64>> = vals.iter().flat_map(|v| [v.clone(), v.clone()]).collect();
            let fr2 = frames(&doubled);
            let p1 = pyramid_descriptor(&fr, iv(start, start + len)).unwrap();
            let p2 = pyramid_descriptor(&fr2, iv(2 * start, 2 * (start + len))).unwrap();
            prop_assert_eq!(p1.values, p2.values);
        }
    }
}
