//! Grid-quantized optical flow: storage, the EEFL binary format, a coarse
//! block-matching estimator and Gaussian temporal smoothing.

use std::io::{Read, Write};

use thiserror::Error;

use crate::exec::Execution;

pub const DEFAULT_GRID_W: usize = 16;
pub const DEFAULT_GRID_H: usize = 12;
pub const DEFAULT_FPS: f64 = 15.0;
/// Standard deviation of the smoothing kernel, in seconds.
pub const DEFAULT_SIGMA_SECONDS: f64 = 2.0;

const MAGIC: &[u8; 4] = b"EEFL";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 18;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("bad magic {0:?}, expected \"EEFL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported flow file version {0}")]
    VersionUnsupported(u16),
    #[error("flow payload is {actual} bytes but the header implies {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("non-finite flow value in frame {frame}")]
    NonFiniteValue { frame: usize },
    #[error("image {index} is {got:?}, expected {expected:?}")]
    MismatchedDimensions {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("flow estimation needs at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid flow sequence: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-cell displacement for one native frame, row-major over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub frame_index: usize,
    pub vectors: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSequence {
    video_id: String,
    fps: f64,
    grid_w: usize,
    grid_h: usize,
    fields: Vec<FlowField>,
}

impl FlowSequence {
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        grid_w: usize,
        grid_h: usize,
        fields: Vec<FlowField>,
    ) -> Result<Self, FlowError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(FlowError::Invalid(format!("fps must be positive, got {fps}")));
        }
        if grid_w == 0 || grid_h == 0 {
            return Err(FlowError::Invalid("grid dimensions must be nonzero".into()));
        }
        if fields.is_empty() {
            return Err(FlowError::Invalid("sequence has no frames".into()));
        }
        let cells = grid_w * grid_h;
        let first = fields[0].frame_index;
        for (i, f) in fields.iter().enumerate() {
            if f.frame_index != first + i {
                return Err(FlowError::Invalid(format!(
                    "frame_index {} at position {i} is not consecutive",
                    f.frame_index
                )));
            }
            if f.vectors.len() != cells {
                return Err(FlowError::Invalid(format!(
                    "frame {} has {} cells, expected {cells}",
                    f.frame_index,
                    f.vectors.len()
                )));
            }
            if f.vectors.iter().flatten().any(|v| !v.is_finite()) {
                return Err(FlowError::NonFiniteValue { frame: f.frame_index });
            }
        }
        Ok(FlowSequence {
            video_id: video_id.into(),
            fps,
            grid_w,
            grid_h,
            fields,
        })
    }

    /// Builds a sequence whose frames are numbered from zero.
    pub fn from_vectors(
        video_id: impl Into<String>,
        fps: f64,
        grid_w: usize,
        grid_h: usize,
        frames: Vec<Vec<[f64; 2]>>,
    ) -> Result<Self, FlowError> {
        let fields = frames
            .into_iter()
            .enumerate()
            .map(|(frame_index, vectors)| FlowField { frame_index, vectors })
            .collect();
        Self::new(video_id, fps, grid_w, grid_h, fields)
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn cells(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn fields(&self) -> &[FlowField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn with_video_id(mut self, video_id: impl Into<String>) -> Self {
        self.video_id = video_id.into();
        self
    }

    /// Number of evaluation-grid samples that fall inside this sequence.
    pub fn eval_len(&self, eval_hz: f64) -> usize {
        eval_len(self.len(), self.fps, eval_hz)
    }
}

/// Native frame sampled for evaluation-grid index `eval_index`.
pub fn eval_to_native(eval_index: usize, fps: f64, eval_hz: f64) -> usize {
    (eval_index as f64 * fps / eval_hz).round() as usize
}

/// Count of evaluation indices whose native frame lies in `0..n_frames`.
pub fn eval_len(n_frames: usize, fps: f64, eval_hz: f64) -> usize {
    if n_frames == 0 {
        return 0;
    }
    let mut n = ((n_frames as f64) * eval_hz / fps).floor() as usize + 1;
    while n > 0 && eval_to_native(n - 1, fps, eval_hz) >= n_frames {
        n -= 1;
    }
    while eval_to_native(n, fps, eval_hz) < n_frames {
        n += 1;
    }
    n
}

/// Reads an EEFL stream. Frames are numbered from zero.
pub fn ingest_flow<R: Read>(mut reader: R, video_id: &str) -> Result<FlowSequence, FlowError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    parse_flow(&buf, video_id)
}

pub fn parse_flow(buf: &[u8], video_id: &str) -> Result<FlowSequence, FlowError> {
    if buf.len() >= 4 && &buf[..4] != MAGIC {
        return Err(FlowError::BadMagic(buf[..4].try_into().unwrap()));
    }
    if buf.len() < HEADER_LEN {
        return Err(FlowError::TruncatedPayload {
            expected: HEADER_LEN,
            actual: buf.len(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([buf[o], buf[o + 1]]);
    let version = u16_at(4);
    if version != VERSION {
        return Err(FlowError::VersionUnsupported(version));
    }
    let grid_w = u16_at(6) as usize;
    let grid_h = u16_at(8) as usize;
    let fps = f32::from_le_bytes(buf[10..14].try_into().unwrap());
    let frame_count = u32::from_le_bytes(buf[14..18].try_into().unwrap()) as usize;

    let cells = grid_w * grid_h;
    let expected = HEADER_LEN + frame_count * cells * 2 * 4;
    if buf.len() != expected {
        return Err(FlowError::TruncatedPayload {
            expected,
            actual: buf.len(),
        });
    }
    let mut values = buf[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut frames = Vec::with_capacity(frame_count);
    for frame in 0..frame_count {
        let mut vectors = Vec::with_capacity(cells);
        for _ in 0..cells {
            let dx = values.next().unwrap();
            let dy = values.next().unwrap();
            if !(dx.is_finite() && dy.is_finite()) {
                return Err(FlowError::NonFiniteValue { frame });
            }
            vectors.push([dx as f64, dy as f64]);
        }
        frames.push(vectors);
    }
    FlowSequence::from_vectors(video_id, fps as f64, grid_w, grid_h, frames)
}

/// Writes an EEFL stream. Values are stored as little-endian f32, so a
/// sequence read back from disk is reproduced bit for bit.
pub fn write_flow<W: Write>(seq: &FlowSequence, mut writer: W) -> Result<(), FlowError> {
    let too_big = |what: &str| FlowError::Invalid(format!("{what} does not fit the EEFL header"));
    let grid_w = u16::try_from(seq.grid_w).map_err(|_| too_big("grid_w"))?;
    let grid_h = u16::try_from(seq.grid_h).map_err(|_| too_big("grid_h"))?;
    let frames = u32::try_from(seq.len()).map_err(|_| too_big("frame count"))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + seq.len() * seq.cells() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&grid_w.to_le_bytes());
    buf.extend_from_slice(&grid_h.to_le_bytes());
    buf.extend_from_slice(&(seq.fps as f32).to_le_bytes());
    buf.extend_from_slice(&frames.to_le_bytes());
    for field in &seq.fields {
        for v in &field.vectors {
            buf.extend_from_slice(&(v[0] as f32).to_le_bytes());
            buf.extend_from_slice(&(v[1] as f32).to_le_bytes());
        }
    }
    writer.write_all(&buf)?;
    Ok(())
}

/// 8-bit luminance image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LumaImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LumaImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FlowError> {
        if data.len() != width * height {
            return Err(FlowError::Invalid(format!(
                "image buffer has {} bytes, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(LumaImage { width, height, data })
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockMatchParams {
    pub grid_w: usize,
    pub grid_h: usize,
    pub search_radius: usize,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        BlockMatchParams {
            grid_w: DEFAULT_GRID_W,
            grid_h: DEFAULT_GRID_H,
            search_radius: 4,
        }
    }
}

/// Coarse per-cell flow by exhaustive block matching.
///
/// For each cell, picks the integer displacement within the search window that
/// minimizes the mean absolute luminance difference between the cell in image
/// `i` and the displaced cell in image `i + 1` (pixels displaced outside the
/// image are skipped). Ties go to the smaller displacement. The last image has
/// no successor and repeats the previous field.
pub fn estimate_flow(
    video_id: &str,
    fps: f64,
    frames: &[LumaImage],
    params: BlockMatchParams,
    exec: Execution,
) -> Result<FlowSequence, FlowError> {
    if frames.len() < 2 {
        return Err(FlowError::TooFewFrames(frames.len()));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    for (index, f) in frames.iter().enumerate() {
        if (f.width, f.height) != (w, h) {
            return Err(FlowError::MismatchedDimensions {
                index,
                expected: (w, h),
                got: (f.width, f.height),
            });
        }
    }
    if params.grid_w == 0 || params.grid_h == 0 || w % params.grid_w != 0 || h % params.grid_h != 0 {
        return Err(FlowError::Invalid(format!(
            "image {w}x{h} is not divisible by the {}x{} grid",
            params.grid_w, params.grid_h
        )));
    }

    let mut out = exec.map_range(frames.len() - 1, |i| match_cells(&frames[i], &frames[i + 1], params));
    let last = out.last().cloned().unwrap();
    out.push(last);
    FlowSequence::from_vectors(video_id, fps, params.grid_w, params.grid_h, out)
}

fn match_cells(a: &LumaImage, b: &LumaImage, p: BlockMatchParams) -> Vec<[f64; 2]> {
    let cw = a.width / p.grid_w;
    let ch = a.height / p.grid_h;
    let r = p.search_radius as i64;
    let mut out = Vec::with_capacity(p.grid_w * p.grid_h);
    for gy in 0..p.grid_h {
        for gx in 0..p.grid_w {
            let (x0, y0) = (gx * cw, gy * ch);
            // (sad, count, dx, dy); costs compared as exact rationals
            let mut best: Option<(u64, u64, i64, i64)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    let mut sad = 0u64;
                    let mut count = 0u64;
                    for y in y0..y0 + ch {
                        let ty = y as i64 + dy;
                        if ty < 0 || ty >= a.height as i64 {
                            continue;
                        }
                        for x in x0..x0 + cw {
                            let tx = x as i64 + dx;
                            if tx < 0 || tx >= a.width as i64 {
                                continue;
                            }
                            let d = a.at(x, y) as i64 - b.at(tx as usize, ty as usize) as i64;
                            sad += d.unsigned_abs();
                            count += 1;
                        }
                    }
                    if count == 0 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bs, bc, bdx, bdy)) => {
                            let lhs = sad as u128 * bc as u128;
                            let rhs = bs as u128 * count as u128;
                            lhs < rhs || (lhs == rhs && dx * dx + dy * dy < bdx * bdx + bdy * bdy)
                        }
                    };
                    if better {
                        best = Some((sad, count, dx, dy));
                    }
                }
            }
            let (_, _, dx, dy) = best.expect("search window always contains zero displacement");
            out.push([dx as f64, dy as f64]);
        }
    }
    out
}

/// Gaussian weights over frame offsets `0..=radius`, radius = ceil(3 sigma).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma_frames: f64) -> Self {
        assert!(sigma_frames.is_finite() && sigma_frames > 0.0, "sigma must be positive");
        let radius = (3.0 * sigma_frames).ceil() as usize;
        let weights = (0..=radius)
            .map(|k| {
                let k = k as f64;
                (-(k * k) / (2.0 * sigma_frames * sigma_frames)).exp()
            })
            .collect();
        GaussianKernel { weights }
    }

    pub fn for_sequence(seq: &FlowSequence, sigma_seconds: f64) -> Self {
        Self::new(sigma_seconds * seq.fps())
    }

    pub fn radius(&self) -> usize {
        self.weights.len() - 1
    }

    /// Unnormalized weight at signed offset `k`; zero outside the support.
    pub fn weight(&self, k: i64) -> f64 {
        self.weights.get(k.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    /// Smoothed field at position `t`, renormalized over the frames that exist.
    /// A causal kernel uses only offsets `-radius..=0`.
    pub fn apply_at(&self, fields: &[FlowField], t: usize, causal: bool) -> Vec<[f64; 2]> {
        let r = self.radius() as i64;
        let n = fields.len() as i64;
        let hi = if causal { 0 } else { r };
        let cells = fields[t].vectors.len();
        let mut acc = vec![[0.0f64; 2]; cells];
        let mut total = 0.0;
        for k in -r..=hi {
            let s = t as i64 + k;
            if s < 0 || s >= n {
                continue;
            }
            let w = self.weight(k);
            total += w;
            for (a, v) in acc.iter_mut().zip(&fields[s as usize].vectors) {
                a[0] += w * v[0];
                a[1] += w * v[1];
            }
        }
        for a in &mut acc {
            a[0] /= total;
            a[1] /= total;
        }
        acc
    }
}

/// Convolves every cell component with a normalized Gaussian along time.
pub fn smooth_temporal(seq: &FlowSequence, sigma_seconds: f64) -> FlowSequence {
    smooth_temporal_with(seq, sigma_seconds, Execution::default())
}

pub fn smooth_temporal_with(seq: &FlowSequence, sigma_seconds: f64, exec: Execution) -> FlowSequence {
    let kernel = GaussianKernel::for_sequence(seq, sigma_seconds);
    let fields = exec.map_range(seq.len(), |t| FlowField {
        frame_index: seq.fields[t].frame_index,
        vectors: kernel.apply_at(&seq.fields, t, false),
    });
    FlowSequence {
        fields,
        ..seq.clone_header()
    }
}

/// Smoothed fields at the given positions only.
pub fn smooth_positions(
    seq: &FlowSequence,
    sigma_seconds: f64,
    positions: &[usize],
    exec: Execution,
) -> Vec<FlowField> {
    let kernel = GaussianKernel::for_sequence(seq, sigma_seconds);
    exec.map_slice(positions, |&t| FlowField {
        frame_index: seq.fields[t].frame_index,
        vectors: kernel.apply_at(&seq.fields, t, false),
    })
}

impl FlowSequence {
    fn clone_header(&self) -> FlowSequence {
        FlowSequence {
            video_id: self.video_id.clone(),
            fps: self.fps,
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            fields: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, v: [f64; 2]) -> FlowSequence {
        FlowSequence::from_vectors("c", 15.0, 16, 12, vec![vec![v; 192]; n]).unwrap()
    }

    #[test]
    fn zero_payload_ingests_as_one_zero_field() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"EEFL");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(&12u16.to_le_bytes());
        bytes.extend_from_slice(&15f32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend(std::iter::repeat_n(0u8, 384 * 4));
        let seq = ingest_flow(&bytes[..], "z").unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.fps(), 15.0);
        assert!(seq.fields()[0].vectors.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn header_errors() {
        let seq = constant(2, [1.0, -1.0]);
        let mut bytes = Vec::new();
        write_flow(&seq, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(parse_flow(&bad, "x"), Err(FlowError::BadMagic(m)) if &m == b"XXXX"));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(parse_flow(&bad, "x"), Err(FlowError::VersionUnsupported(2))));

        let short = &bytes[..bytes.len() - 4];
        assert!(matches!(
            parse_flow(short, "x"),
            Err(FlowError::TruncatedPayload { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            parse_flow(&long, "x"),
            Err(FlowError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            parse_flow(&bytes[..10], "x"),
            Err(FlowError::TruncatedPayload { .. })
        ));

        let mut nan = bytes.clone();
        nan[HEADER_LEN + 8..HEADER_LEN + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            parse_flow(&nan, "x"),
            Err(FlowError::NonFiniteValue { frame: 0 })
        ));
    }

    #[test]
    fn sequence_rejects_gaps_and_bad_shapes() {
        let fields = vec![
            FlowField {
                frame_index: 0,
                vectors: vec![[0.0; 2]; 4],
            },
            FlowField {
                frame_index: 2,
                vectors: vec![[0.0; 2]; 4],
            },
        ];
        assert!(FlowSequence::new("g", 15.0, 2, 2, fields).is_err());
        assert!(FlowSequence::from_vectors("s", 15.0, 2, 2, vec![vec![[0.0; 2]; 3]]).is_err());
        assert!(FlowSequence::from_vectors("e", 15.0, 2, 2, vec![]).is_err());
        assert!(FlowSequence::from_vectors("f", 0.0, 2, 2, vec![vec![[0.0; 2]; 4]]).is_err());
    }

    fn noise_image(w: usize, h: usize, seed: u64) -> LumaImage {
        let mut s = seed;
        let data = (0..w * h)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            })
            .collect();
        LumaImage::new(w, h, data).unwrap()
    }

    fn translate(img: &LumaImage, dx: i64, dy: i64) -> LumaImage {
        let mut data = vec![0u8; img.data.len()];
        for y in 0..img.height {
            for x in 0..img.width {
                let sx = (x as i64 - dx).rem_euclid(img.width as i64) as usize;
                let sy = (y as i64 - dy).rem_euclid(img.height as i64) as usize;
                data[y * img.width + x] = img.at(sx, sy);
            }
        }
        LumaImage::new(img.width, img.height, data).unwrap()
    }

    #[test]
    fn identical_images_have_zero_flow() {
        let a = noise_image(64, 48, 7);
        let p = BlockMatchParams {
            grid_w: 8,
            grid_h: 6,
            search_radius: 3,
        };
        let seq = estimate_flow("id", 15.0, &[a.clone(), a], p, Execution::Serial).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq.fields().iter().all(|f| f.vectors.iter().all(|v| *v == [0.0, 0.0])));
    }

    #[test]
    fn translated_image_recovers_shift() {
        let a = noise_image(96, 72, 11);
        let b = translate(&a, 3, 0);
        let p = BlockMatchParams {
            grid_w: 8,
            grid_h: 6,
            search_radius: 4,
        };
        let seq = estimate_flow("t", 15.0, &[a, b], p, Execution::Serial).unwrap();
        // interior cells only; edge cells see the wrapped border
        for gy in 1..5 {
            for gx in 1..7 {
                assert_eq!(seq.fields()[0].vectors[gy * 8 + gx], [3.0, 0.0]);
            }
        }
        assert_eq!(
            seq.fields()[1],
            FlowField {
                frame_index: 1,
                ..seq.fields()[0].clone()
            }
        );
    }

    #[test]
    fn estimator_errors() {
        let a = noise_image(32, 24, 1);
        let p = BlockMatchParams {
            grid_w: 4,
            grid_h: 3,
            search_radius: 1,
        };
        assert!(matches!(
            estimate_flow("x", 15.0, std::slice::from_ref(&a), p, Execution::Serial),
            Err(FlowError::TooFewFrames(1))
        ));
        let b = noise_image(16, 24, 2);
        assert!(matches!(
            estimate_flow("x", 15.0, &[a, b], p, Execution::Serial),
            Err(FlowError::MismatchedDimensions { index: 1, .. })
        ));
    }

    #[test]
    fn constant_flow_is_unchanged_by_smoothing() {
        let seq = constant(100, [1.0, 0.0]);
        let s = smooth_temporal(&seq, 2.0);
        for f in s.fields() {
            for v in &f.vectors {
                assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_response_is_normalized_gaussian() {
        let n = 501;
        let t = 250;
        let mut frames = vec![vec![[0.0, 0.0]; 1]; n];
        frames[t][0] = [1.0, 0.0];
        let seq = FlowSequence::from_vectors("i", 15.0, 1, 1, frames).unwrap();
        let s = smooth_temporal(&seq, 2.0);
        // sigma = 30 frames, radius 90; full support available around t
        let sigma = 30.0f64;
        let g = |k: f64| (-(k * k) / (2.0 * sigma * sigma)).exp();
        let total: f64 = (-90..=90).map(|k| g(k as f64)).sum();
        for k in -95i64..=95 {
            let got = s.fields()[(t as i64 + k) as usize].vectors[0][0];
            let want = if k.abs() <= 90 { g(k as f64) / total } else { 0.0 };
            assert!((got - want).abs() < 1e-15, "k={k}: {got} vs {want}");
            let mirror = s.fields()[(t as i64 - k) as usize].vectors[0][0];
            assert!((got - mirror).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_weights_are_renormalized() {
        let n = 200;
        let frames: Vec<Vec<[f64; 2]>> = (0..n).map(|i| vec![[i as f64, 0.0]]).collect();
        let seq = FlowSequence::from_vectors("b", 15.0, 1, 1, frames).unwrap();
        let s = smooth_temporal(&seq, 2.0);
        let sigma = 30.0f64;
        let g = |k: f64| (-(k * k) / (2.0 * sigma * sigma)).exp();
        let num: f64 = (0..=90).map(|j| g(j as f64) * j as f64).sum();
        let den: f64 = (0..=90).map(|j| g(j as f64)).sum();
        assert!((s.fields()[0].vectors[0][0] - num / den).abs() < 1e-9);
    }

    #[test]
    fn causal_kernel_ignores_future() {
        let n = 80;
        let frames: Vec<Vec<[f64; 2]>> = (0..n).map(|i| vec![[(i % 7) as f64, 1.0]]).collect();
        let seq = FlowSequence::from_vectors("c", 15.0, 1, 1, frames).unwrap();
        let k = GaussianKernel::for_sequence(&seq, 1.0);
        let full = k.apply_at(seq.fields(), 40, true);
        let prefix = k.apply_at(&seq.fields()[..41], 40, true);
        assert_eq!(full, prefix);
    }

    #[test]
    fn eval_grid_lengths() {
        assert_eq!(eval_len(9000, 15.0, 1.0), 600);
        assert_eq!(eval_len(9001, 15.0, 1.0), 601);
        assert_eq!(eval_len(1, 15.0, 1.0), 1);
        assert_eq!(eval_len(8, 15.0, 1.0), 1);
        assert_eq!(eval_len(15, 15.0, 1.0), 1);
        assert_eq!(eval_len(16, 15.0, 1.0), 2);
        assert_eq!(eval_len(16, 15.0, 2.0), 3); // round(7.5) = 8
        assert_eq!(eval_to_native(3, 15.0, 1.0), 45);
    }
}
