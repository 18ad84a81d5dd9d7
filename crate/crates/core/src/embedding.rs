//! Complex to real embedding and the sparse stacked precoder layout.
//!
//! A complex vector `u` embeds as `[Re u; Im u]` and a channel vector `h` as
//! the `2 M_t x 2` block
//!
//! ```text
//!     | Re h  -Im h |
//! H = |             |
//!     | Im h   Re h |
//! ```
//!
//! so that `H^T p` is the real pair `[Re(h^H p), Im(h^H p)]`.
//!
//! Precoders are only stored for active (BS, UT) pairs. Blocks are laid out
//! by ascending BS index and then ascending UT index, which makes every BS
//! own one contiguous slice of the stacked vector.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::Arc;

use crate::channel::{read_f64, read_u64, ClusterMap};
use crate::{Error, Result, C64};

/// Real embedding of one channel vector, stored as its two columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannel {
    /// Column-major `(2 M_t) x 2`: `[Re h; Im h]` then `[-Im h; Re h]`.
    cols: Vec<f64>,
    raw: Vec<C64>,
}

impl RealChannel {
    pub fn antennas(&self) -> usize {
        self.raw.len()
    }

    /// Entry `(row, col)` of the `(2 M_t) x 2` matrix.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cols[col * 2 * self.antennas() + row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        let n = 2 * self.antennas();
        &self.cols[col * n..(col + 1) * n]
    }

    /// The complex vector this block was built from.
    pub fn raw(&self) -> &[C64] {
        &self.raw
    }

    /// `H^T p` for a real-embedded precoder block of length `2 M_t`.
    #[inline]
    pub fn apply_t(&self, p: &[f64]) -> [f64; 2] {
        let n = p.len();
        debug_assert_eq!(n, 2 * self.antennas());
        let (c0, c1) = self.cols.split_at(n);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for i in 0..n {
            s0 += c0[i] * p[i];
            s1 += c1[i] * p[i];
        }
        [s0, s1]
    }

    /// `out += scale * H s`.
    #[inline]
    pub fn apply_add(&self, s: [f64; 2], scale: f64, out: &mut [f64]) {
        let n = out.len();
        debug_assert_eq!(n, 2 * self.antennas());
        let (c0, c1) = self.cols.split_at(n);
        let (a, b) = (scale * s[0], scale * s[1]);
        for i in 0..n {
            out[i] += a * c0[i] + b * c1[i];
        }
    }
}

pub fn embed_channel(h: &[C64]) -> RealChannel {
    let m = h.len();
    let mut cols = vec![0.0; 4 * m];
    for (i, z) in h.iter().enumerate() {
        cols[i] = z.re;
        cols[m + i] = z.im;
        cols[2 * m + i] = -z.im;
        cols[3 * m + i] = z.re;
    }
    RealChannel {
        cols,
        raw: h.to_vec(),
    }
}

/// `[Re p; Im p]`.
pub fn embed_precoder(p: &[C64]) -> Vec<f64> {
    p.iter()
        .map(|z| z.re)
        .chain(p.iter().map(|z| z.im))
        .collect()
}

pub fn extract_precoder(v: &[f64]) -> Result<Vec<C64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "real precoder length {} is odd",
            v.len()
        )));
    }
    let (re, im) = v.split_at(v.len() / 2);
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

/// Canonical ordering of active (BS, UT) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairLayout {
    num_bs: usize,
    num_ut: usize,
    antennas: usize,
    pairs: Vec<(usize, usize)>,
    /// Pair-index range owned by each BS.
    bs_ranges: Vec<Range<usize>>,
    /// Dense `B x K` map to pair index, `usize::MAX` when inactive.
    index: Vec<usize>,
}

impl PairLayout {
    pub fn new(clusters: &ClusterMap, antennas: usize) -> Self {
        let (nb, nu) = (clusters.num_bs(), clusters.num_ut());
        let mut pairs = Vec::with_capacity(clusters.active_pairs());
        let mut bs_ranges = Vec::with_capacity(nb);
        let mut index = vec![usize::MAX; nb * nu];
        for l in 0..nb {
            let start = pairs.len();
            for &k in clusters.served_ut(l) {
                index[l * nu + k] = pairs.len();
                pairs.push((l, k));
            }
            bs_ranges.push(start..pairs.len());
        }
        Self {
            num_bs: nb,
            num_ut: nu,
            antennas,
            pairs,
            bs_ranges,
            index,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_ut(&self) -> usize {
        self.num_ut
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Real length of one block, `2 M_t`.
    pub fn block_len(&self) -> usize {
        2 * self.antennas
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Length of the stacked real vector.
    pub fn stacked_len(&self) -> usize {
        self.pairs.len() * self.block_len()
    }

    pub fn pair_index(&self, l: usize, k: usize) -> Option<usize> {
        match self.index[l * self.num_ut + k] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// Range of the stacked vector holding all blocks of BS `l`.
    pub fn bs_span(&self, l: usize) -> Range<usize> {
        let r = &self.bs_ranges[l];
        r.start * self.block_len()..r.end * self.block_len()
    }

    pub fn block_span(&self, pair: usize) -> Range<usize> {
        pair * self.block_len()..(pair + 1) * self.block_len()
    }
}

/// A real vector over the active pairs of a [`PairLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: Arc<PairLayout>,
    data: Vec<f64>,
}

/// Stacked real precoder `p`.
pub type PrecoderState = BlockVector;
/// Conjugate momentum `q`, same layout as the precoder.
pub type MomentumState = BlockVector;

impl BlockVector {
    pub fn zeros(layout: Arc<PairLayout>) -> Self {
        let n = layout.stacked_len();
        Self {
            layout,
            data: vec![0.0; n],
        }
    }

    /// Inverse of [`BlockVector::stack`].
    pub fn unstack(layout: Arc<PairLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.stacked_len() {
            return Err(Error::Dimension {
                expected: layout.stacked_len(),
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite precoder entry".into()));
        }
        Ok(Self { layout, data })
    }

    /// Builds a state from complex blocks given per active pair in canonical order.
    pub fn from_complex(layout: Arc<PairLayout>, blocks: &[Vec<C64>]) -> Result<Self> {
        if blocks.len() != layout.num_pairs() {
            return Err(Error::Dimension {
                expected: layout.num_pairs(),
                actual: blocks.len(),
            });
        }
        let mut data = Vec::with_capacity(layout.stacked_len());
        for b in blocks {
            if b.len() != layout.antennas() {
                return Err(Error::Dimension {
                    expected: layout.antennas(),
                    actual: b.len(),
                });
            }
            data.extend(embed_precoder(b));
        }
        Self::unstack(layout, data)
    }

    pub fn layout(&self) -> &Arc<PairLayout> {
        &self.layout
    }

    pub fn stack(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, pair: usize) -> &[f64] {
        &self.data[self.layout.block_span(pair)]
    }

    pub fn block_mut(&mut self, pair: usize) -> &mut [f64] {
        let span = self.layout.block_span(pair);
        &mut self.data[span]
    }

    pub fn block_of(&self, l: usize, k: usize) -> Option<&[f64]> {
        self.layout.pair_index(l, k).map(|i| self.block(i))
    }

    /// All blocks of BS `l`, contiguous.
    pub fn bs_slice(&self, l: usize) -> &[f64] {
        &self.data[self.layout.bs_span(l)]
    }

    pub fn bs_slice_mut(&mut self, l: usize) -> &mut [f64] {
        let span = self.layout.bs_span(l);
        &mut self.data[span]
    }

    /// Complex precoder of one pair.
    pub fn complex_block(&self, pair: usize) -> Vec<C64> {
        extract_precoder(self.block(pair)).expect("blocks have even length")
    }

    pub fn same_support(&self, other: &BlockVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub(crate) fn check_support(&self, other: &BlockVector) -> Result<()> {
        if self.same_support(other) {
            Ok(())
        } else {
            Err(Error::SupportMismatch)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &BlockVector) {
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Binary dump: little-endian `B, K, M_t, pairs` (u64), then per block
    /// `l, k` (u64) and `2 M_t` f64 values.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let lay = &self.layout;
        for n in [lay.num_bs(), lay.num_ut(), lay.antennas(), lay.num_pairs()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for (i, &(l, k)) in lay.pairs().iter().enumerate() {
            w.write_all(&(l as u64).to_le_bytes())?;
            w.write_all(&(k as u64).to_le_bytes())?;
            for x in self.block(i) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`BlockVector::write_to`], rebuilding the
    /// cluster support from the stored pairs.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let nb = read_u64(&mut r)? as usize;
        let nu = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut serving = vec![Vec::new(); nu];
        let mut pairs = Vec::with_capacity(count.min(1 << 20));
        let mut values = Vec::new();
        for _ in 0..count {
            let l = read_u64(&mut r)? as usize;
            let k = read_u64(&mut r)? as usize;
            if l >= nb || k >= nu {
                return Err(Error::Format(format!(
                    "pair ({l}, {k}) outside {nb} x {nu}"
                )));
            }
            serving[k].push(l);
            pairs.push((l, k));
            for _ in 0..2 * m {
                values.push(read_f64(&mut r)?);
            }
        }
        let clusters = ClusterMap::from_serving(nb, serving)?;
        let layout = Arc::new(PairLayout::new(&clusters, m));
        if layout.pairs() != pairs.as_slice() {
            return Err(Error::Format("blocks are not in canonical order".into()));
        }
        Self::unstack(layout, values)
    }
}

/// Per-BS transmit power `p_l^T p_l`.
pub fn bs_block_norms(state: &BlockVector) -> Vec<f64> {
    (0..state.layout().num_bs())
        .map(|l| state.bs_slice(l).iter().map(|x| x * x).sum())
        .collect()
}

/// Per-BS power budget `rho_l` in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBudget {
    rho: Vec<f64>,
}

impl PowerBudget {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::InvalidArgument("empty power budget".into()));
        }
        if let Some(bad) = rho.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power budget entries must be positive, got {bad}"
            )));
        }
        Ok(Self { rho })
    }

    pub fn uniform(num_bs: usize, rho: f64) -> Result<Self> {
        Self::new(vec![rho; num_bs])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn get(&self, l: usize) -> f64 {
        self.rho[l]
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Rescales every BS slice with nonzero power onto `||p_l||^2 = rho_l`.
pub fn normalize_to_budget(state: &mut BlockVector, rho: &PowerBudget) {
    for l in 0..state.layout().num_bs() {
        let slice = state.bs_slice_mut(l);
        let power: f64 = slice.iter().map(|x| x * x).sum();
        if power > 0.0 {
            let s = (rho.get(l) / power).sqrt();
            slice.iter_mut().for_each(|x| *x *= s);
        }
    }
}
