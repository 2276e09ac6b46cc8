//! Desk-scale Monte Carlo of the superposition/binning scheme: codebooks,
//! binning encoders, the memoryless channel and joint-typicality decoders.

use std::borrow::Cow;

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::{compose, AuxCards, AuxFactorization, ChannelSpec, CondTable, JointPmf, PmfError, Var};
use crate::region::RateVector;

/// Default cap, in bits, on each decoder's nominal search space.
pub const DEFAULT_SEARCH_BUDGET_BITS: f64 = 24.0;
/// Cap on `n·R'2c` for encoder-only binning sweeps.
pub const SWEEP_BUDGET_BITS: f64 = 32.0;
/// Tables up to this many symbols are generated eagerly; larger ones row by row.
const MATERIALIZE_LIMIT: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(
        "receiver {receiver} search space is 2^{bits:.3} codeword tuples, over the 2^{budget} budget"
    )]
    Guard { receiver: u8, bits: f64, budget: f64 },
    #[error("sequence {index} has length {found}, expected {expected}")]
    Length {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("sequence {index} has symbol {symbol} outside alphabet of size {card}")]
    Symbol {
        index: usize,
        symbol: usize,
        card: usize,
    },
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

fn default_budget() -> f64 {
    DEFAULT_SEARCH_BUDGET_BITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub rates: RateVector,
    pub eps_typ: f64,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub search_budget_bits: f64,
}

impl SimConfig {
    pub fn new(n: usize, rates: RateVector, eps_typ: f64, trials: usize, master_seed: u64) -> Self {
        Self {
            n,
            rates,
            eps_typ,
            trials,
            master_seed,
            search_budget_bits: DEFAULT_SEARCH_BUDGET_BITS,
        }
    }

    /// Nominal `log2` search-space sizes of the two decoders.
    pub fn search_bits(&self) -> (f64, f64) {
        let r = &self.rates;
        let n = self.n as f64;
        (
            n * (r.r1p + r.r1c + r.r2c + r.rp2c),
            n * (r.r2p + r.rp2p + r.r2c + r.rp2c + r.r1c),
        )
    }

    fn validate_basic(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::Config("blocklength n must be at least 1".into()));
        }
        if !(self.eps_typ > 0.0 && self.eps_typ < 1.0) {
            return Err(SimError::Config(format!(
                "eps_typ must lie in (0, 1), got {}",
                self.eps_typ
            )));
        }
        if self.trials == 0 {
            return Err(SimError::Config("trials must be at least 1".into()));
        }
        if !self.rates.is_valid() {
            return Err(SimError::Config(
                "rates must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.validate_basic()?;
        let (b1, b2) = self.search_bits();
        for (receiver, bits) in [(1, b1), (2, b2)] {
            if bits > self.search_budget_bits + 1e-9 {
                return Err(SimError::Guard {
                    receiver,
                    bits,
                    budget: self.search_budget_bits,
                });
            }
        }
        Ok(())
    }
}

/// `⌈2^{nR}⌉`, at least 1.
pub fn codebook_size(n: usize, rate: f64) -> usize {
    let x = (n as f64 * rate).exp2();
    ((x - 1e-9).ceil() as usize).max(1)
}

/// Derives an independent 64-bit seed from `seed` and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut s = SplitMix64::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    s.next_u64();
    s.next_u64()
}

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF sampler over the rows of a conditional table, with the CDF
/// held as 64-bit integer thresholds so a draw is one word and a few compares.
#[derive(Debug, Clone)]
struct Sampler {
    k: usize,
    thresholds: Vec<u64>,
    last: Vec<usize>,
}

impl Sampler {
    fn from_rows(rows: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut k = 0;
        let mut thresholds = Vec::new();
        let mut last = Vec::new();
        for r in rows {
            k = r.len();
            last.push(r.iter().rposition(|&p| p > 0.0).unwrap_or(0));
            let mut acc = 0.0;
            // the float-to-int cast saturates, so a total above 1 is harmless
            thresholds.extend(r.iter().map(|p| {
                acc += p;
                (acc * 18_446_744_073_709_551_616.0) as u64
            }));
        }
        Self { k, thresholds, last }
    }

    fn from_table(t: &CondTable) -> Self {
        Self::from_rows((0..t.rows()).map(|r| t.row(r).to_vec()))
    }

    #[inline(always)]
    fn sample(&self, parent: usize, rng: &mut impl RngCore) -> u8 {
        let x = rng.next_u64();
        // the last positive symbol absorbs a row total rounded below 1
        let last = self.last[parent];
        let at = parent * self.k;
        // thresholds ascend, so counting the ones below x finds the symbol
        self.thresholds[at..at + last]
            .iter()
            .map(|&t| (x >= t) as u8)
            .sum()
    }
}

/// Robust typicality with a one-count rounding allowance.
///
/// A cell `a` with `p(a) > 0` passes when `|N(a) - n p(a)| ≤ eps·n·p(a) + 1`;
/// a cell with `p(a) = 0` must be empty. Prefix levels sum the integer count
/// ranges of the cells they cover, which is exactly the condition for some
/// continuation of the prefix to pass.
#[derive(Debug, Clone)]
pub struct TypicalityTest {
    cards: Vec<usize>,
    n: usize,
    levels: Vec<LevelBounds>,
}

#[derive(Debug, Clone)]
struct LevelBounds {
    lo: Vec<u32>,
    hi: Vec<u32>,
}

impl TypicalityTest {
    /// Typicality against the marginal of `joint` on `order`, with sequences
    /// supplied in that order.
    pub fn new(joint: &JointPmf, order: &[Var], n: usize, eps: f64) -> Result<Self, PmfError> {
        let target = joint.project(order)?;
        let cards: Vec<usize> = order
            .iter()
            .map(|&v| target.roster().card(v).expect("projected"))
            .collect();
        let nf = n as f64;
        let (mut lo, mut hi): (Vec<u32>, Vec<u32>) = target
            .mass()
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    let lo = ((1.0 - eps) * nf * p - 1.0).ceil().max(0.0);
                    let hi = ((1.0 + eps) * nf * p + 1.0).floor().min(nf);
                    (lo as u32, hi as u32)
                } else {
                    (0, 0)
                }
            })
            .unzip();
        let mut levels = vec![LevelBounds { lo: lo.clone(), hi: hi.clone() }];
        for &card in cards[1..].iter().rev() {
            lo = lo.chunks(card).map(|c| c.iter().sum()).collect();
            hi = hi.chunks(card).map(|c| c.iter().sum()).collect();
            levels.push(LevelBounds { lo: lo.clone(), hi: hi.clone() });
        }
        levels.reverse();
        Ok(Self { cards, n, levels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Number of cells over the first `k` variables.
    pub fn cells(&self, k: usize) -> usize {
        self.cards[..k].iter().product()
    }

    /// Checks the joint type of the first `k` variables.
    pub fn check_level(&self, k: usize, counts: &[u32]) -> bool {
        let l = &self.levels[k - 1];
        counts
            .iter()
            .zip(l.lo.iter().zip(&l.hi))
            .all(|(c, (lo, hi))| c >= lo && c <= hi)
    }

    /// Extends per-symbol cell indices by the `k`-th variable and tests level
    /// `k`, abandoning the sequence as soon as a cell overflows. `next` is only
    /// meaningful when the result is true.
    fn extend(
        &self,
        k: usize,
        base: &[u32],
        seq: impl IntoIterator<Item = u8>,
        next: &mut [u32],
        counts: &mut Vec<u32>,
    ) -> bool {
        self.extend_within(k, &self.levels[k - 1], base, seq, next, counts)
    }

    #[inline(always)]
    fn extend_within(
        &self,
        k: usize,
        bounds: &LevelBounds,
        base: &[u32],
        seq: impl IntoIterator<Item = u8>,
        next: &mut [u32],
        counts: &mut Vec<u32>,
    ) -> bool {
        let card = self.cards[k - 1] as u32;
        let hi = &bounds.hi;
        counts.clear();
        counts.resize(hi.len(), 0);
        for ((nx, &b), s) in next.iter_mut().zip(base).zip(seq) {
            let i = (b * card + s as u32) as usize;
            *nx = i as u32;
            counts[i] += 1;
            if counts[i] > hi[i] {
                return false;
            }
        }
        bounds.lo.iter().zip(counts.iter()).all(|(lo, c)| c >= lo)
    }

    /// Level-`k` bounds given the level `k-1` counts of a fixed prefix. The
    /// children of each prefix cell must add up to its count, which moves some
    /// lower-bound failures forward into upper-bound ones; the accepted set is
    /// unchanged.
    fn given_prefix(&self, k: usize, parent: &[u32]) -> LevelBounds {
        let card = self.cards[k - 1];
        let level = &self.levels[k - 1];
        let mut out = level.clone();
        for (j, &p) in parent.iter().enumerate() {
            let cells = j * card..(j + 1) * card;
            let lo_sum: u32 = level.lo[cells.clone()].iter().sum();
            let hi_sum: u32 = level.hi[cells.clone()].iter().sum();
            for i in cells {
                let (lo, hi) = (level.lo[i], level.hi[i]);
                out.hi[i] = hi.min(p.saturating_sub(lo_sum - lo));
                out.lo[i] = lo.max(p.saturating_sub(hi_sum - hi));
            }
        }
        out
    }

    fn first_level(&self, seq: &[u8], idx: &mut [u32], counts: &mut Vec<u32>) -> bool {
        let zeros = vec![0u32; self.n];
        self.extend(1, &zeros, seq.iter().copied(), idx, counts)
    }

    /// Full test on sequences in the constructor's variable order.
    pub fn test(&self, seqs: &[&[u8]]) -> bool {
        assert_eq!(seqs.len(), self.cards.len(), "one sequence per variable");
        let mut idx = vec![0u32; self.n];
        let mut next = vec![0u32; self.n];
        let mut counts = Vec::new();
        // every level is a necessary condition of the full one
        if !self.first_level(seqs[0], &mut idx, &mut counts) {
            return false;
        }
        for (k, s) in seqs.iter().enumerate().skip(1) {
            if !self.extend(k + 1, &idx, s.iter().copied(), &mut next, &mut counts) {
                return false;
            }
            std::mem::swap(&mut idx, &mut next);
        }
        true
    }
}

/// Robust typicality of `seqs` (one per roster variable of `joint`, in roster order).
pub fn is_typical(seqs: &[&[usize]], joint: &JointPmf, eps_typ: f64) -> Result<bool, SimError> {
    let roster = joint.roster();
    if seqs.len() != roster.len() {
        return Err(SimError::Config(format!(
            "{} sequences for a joint over {} variables",
            seqs.len(),
            roster.len()
        )));
    }
    let n = seqs.first().map_or(0, |s| s.len());
    let mut bytes = Vec::with_capacity(seqs.len());
    for (i, (s, &(_, card))) in seqs.iter().zip(roster.entries()).enumerate() {
        if s.len() != n {
            return Err(SimError::Length {
                index: i,
                expected: n,
                found: s.len(),
            });
        }
        if let Some(&bad) = s.iter().find(|&&x| x >= card) {
            return Err(SimError::Symbol {
                index: i,
                symbol: bad,
                card,
            });
        }
        bytes.push(s.iter().map(|&x| x as u8).collect::<Vec<u8>>());
    }
    if n == 0 {
        return Ok(true);
    }
    let order: Vec<Var> = roster.vars().collect();
    let test = TypicalityTest::new(joint, &order, n, eps_typ)?;
    let refs: Vec<&[u8]> = bytes.iter().map(|b| b.as_slice()).collect();
    Ok(test.test(&refs))
}

/// A codeword table whose rows are drawn i.i.d. given the time-sharing sequence.
/// Row `(m, l)` has its own seed, so smaller bins are prefixes of larger ones.
#[derive(Debug, Clone)]
struct Table {
    seed: u64,
    bins: usize,
    per_bin: usize,
    sampler: Sampler,
    data: Option<Vec<u8>>,
}

impl Table {
    fn new(seed: u64, bins: usize, per_bin: usize, sampler: Sampler, q: &[u8]) -> Self {
        let mut t = Self {
            seed,
            bins,
            per_bin,
            sampler,
            data: None,
        };
        let n = q.len();
        if bins.saturating_mul(per_bin).saturating_mul(n) <= MATERIALIZE_LIMIT {
            let mut data = vec![0u8; bins * per_bin * n];
            for m in 0..bins {
                for l in 0..per_bin {
                    let at = (m * per_bin + l) * n;
                    t.fill(m, l, q, &mut data[at..at + n]);
                }
            }
            t.data = Some(data);
        }
        t
    }

    // rows are short and scanned by the hundred million, so each gets a cheap
    // SplitMix64 stream keyed by (seed, m, l)
    fn row_rng(&self, m: usize, l: usize) -> SplitMix64 {
        SplitMix64::seed_from_u64(derive_seed(self.seed ^ (m as u64).rotate_left(32), l as u64))
    }

    fn fill(&self, m: usize, l: usize, q: &[u8], out: &mut [u8]) {
        let mut rng = self.row_rng(m, l);
        for (o, &qt) in out.iter_mut().zip(q) {
            *o = self.sampler.sample(qt as usize, &mut rng);
        }
    }

    /// Symbols of row `(m, l)`, drawn on demand when the table is not stored,
    /// so a caller that stops early skips the rest of the draws.
    fn symbols<'a>(&'a self, m: usize, l: usize, q: &'a [u8]) -> Symbols<'a> {
        let n = q.len();
        match &self.data {
            Some(d) if l < self.per_bin => {
                let at = (m * self.per_bin + l) * n;
                Symbols::Stored(d[at..at + n].iter())
            }
            _ => Symbols::Lazy {
                rng: self.row_rng(m, l),
                sampler: &self.sampler,
                q: q.iter(),
            },
        }
    }

    fn row<'a>(&'a self, m: usize, l: usize, q: &[u8]) -> Cow<'a, [u8]> {
        let n = q.len();
        match &self.data {
            Some(d) if l < self.per_bin => {
                let at = (m * self.per_bin + l) * n;
                Cow::Borrowed(&d[at..at + n])
            }
            _ => {
                let mut v = vec![0u8; n];
                self.fill(m, l, q, &mut v);
                Cow::Owned(v)
            }
        }
    }
}

enum Symbols<'a> {
    Stored(std::slice::Iter<'a, u8>),
    Lazy {
        rng: SplitMix64,
        sampler: &'a Sampler,
        q: std::slice::Iter<'a, u8>,
    },
}

impl Iterator for Symbols<'_> {
    type Item = u8;

    #[inline(always)]
    fn next(&mut self) -> Option<u8> {
        match self {
            Symbols::Stored(it) => it.next().copied(),
            Symbols::Lazy { rng, sampler, q } => {
                let qt = *q.next()?;
                Some(sampler.sample(qt as usize, rng))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookSizes {
    pub m1c: usize,
    pub m1p: usize,
    pub m2c: usize,
    pub l2c: usize,
    pub m2p: usize,
    pub l2p: usize,
}

impl CodebookSizes {
    pub fn new(n: usize, r: &RateVector) -> Self {
        Self {
            m1c: codebook_size(n, r.r1c),
            m1p: codebook_size(n, r.r1p),
            m2c: codebook_size(n, r.r2c),
            l2c: codebook_size(n, r.rp2c),
            m2p: codebook_size(n, r.r2p),
            l2p: codebook_size(n, r.rp2p),
        }
    }
}

/// The four codeword tables and the time-sharing sequence.
#[derive(Debug, Clone)]
pub struct Codebook {
    q: Vec<u8>,
    sizes: CodebookSizes,
    u1c: Table,
    u1p: Table,
    u2c: Table,
    u2p: Table,
}

const TAG_Q: u64 = 1;
const TAG_U1C: u64 = 2;
const TAG_U1P: u64 = 3;
const TAG_U2C: u64 = 4;
const TAG_U2P: u64 = 5;

impl Codebook {
    /// Draws `q` from `p(q)`, U1 rows from `p(u1·|q_t)` and U2 rows from the
    /// U1-averaged marginals `p(u2·|q_t)`.
    pub fn generate(aux: &AuxFactorization, n: usize, rates: &RateVector, seed: u64) -> Self {
        let sizes = CodebookSizes::new(n, rates);
        let pq = Sampler::from_table(&aux.p_q);
        let mut qrng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, TAG_Q));
        let q: Vec<u8> = (0..n).map(|_| pq.sample(0, &mut qrng)).collect();
        let s = |tag| derive_seed(seed, tag);
        Self {
            u1c: Table::new(s(TAG_U1C), sizes.m1c, 1, Sampler::from_table(&aux.p_u1c), &q),
            u1p: Table::new(s(TAG_U1P), sizes.m1p, 1, Sampler::from_table(&aux.p_u1p), &q),
            u2c: Table::new(
                s(TAG_U2C),
                sizes.m2c,
                sizes.l2c,
                Sampler::from_rows(aux.u2c_given_q()),
                &q,
            ),
            u2p: Table::new(
                s(TAG_U2P),
                sizes.m2p,
                sizes.l2p,
                Sampler::from_rows(aux.u2p_given_q()),
                &q,
            ),
            q,
            sizes,
        }
    }

    /// A codebook with every row given explicitly (`u2c[m][l]`, `u2p[m][l]`).
    pub fn explicit(
        q: Vec<u8>,
        u1c: Vec<Vec<u8>>,
        u1p: Vec<Vec<u8>>,
        u2c: Vec<Vec<Vec<u8>>>,
        u2p: Vec<Vec<Vec<u8>>>,
    ) -> Self {
        let table = |bins: Vec<Vec<Vec<u8>>>| {
            let per_bin = bins.first().map_or(1, Vec::len);
            assert!(bins.iter().all(|b| b.len() == per_bin), "ragged bins");
            Table {
                seed: 0,
                bins: bins.len(),
                per_bin,
                sampler: Sampler::from_rows(Vec::new()),
                data: Some(bins.into_iter().flatten().flatten().collect()),
            }
        };
        let wrap = |rows: Vec<Vec<u8>>| rows.into_iter().map(|r| vec![r]).collect::<Vec<_>>();
        let (u1c, u1p, u2c, u2p) = (table(wrap(u1c)), table(wrap(u1p)), table(u2c), table(u2p));
        let sizes = CodebookSizes {
            m1c: u1c.bins,
            m1p: u1p.bins,
            m2c: u2c.bins,
            l2c: u2c.per_bin,
            m2p: u2p.bins,
            l2p: u2p.per_bin,
        };
        Self {
            q,
            sizes,
            u1c,
            u1p,
            u2c,
            u2p,
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn sizes(&self) -> CodebookSizes {
        self.sizes
    }

    pub fn q(&self) -> &[u8] {
        &self.q
    }

    pub fn u1c(&self, m: usize) -> Cow<'_, [u8]> {
        self.u1c.row(m, 0, &self.q)
    }

    pub fn u1p(&self, m: usize) -> Cow<'_, [u8]> {
        self.u1p.row(m, 0, &self.q)
    }

    pub fn u2c(&self, m: usize, l: usize) -> Cow<'_, [u8]> {
        self.u2c.row(m, l, &self.q)
    }

    pub fn u2p(&self, m: usize, l: usize) -> Cow<'_, [u8]> {
        self.u2p.row(m, l, &self.q)
    }

    fn u2c_symbols(&self, m: usize, l: usize) -> Symbols<'_> {
        self.u2c.symbols(m, l, &self.q)
    }

    fn u2p_symbols(&self, m: usize, l: usize) -> Symbols<'_> {
        self.u2p.symbols(m, l, &self.q)
    }
}

/// Codebooks for `cfg` seeded by its master seed.
pub fn generate_codebooks(aux: &AuxFactorization, cfg: &SimConfig) -> Result<Codebook, SimError> {
    cfg.validate()?;
    Ok(Codebook::generate(aux, cfg.n, &cfg.rates, cfg.master_seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Messages {
    pub m1p: usize,
    pub m1c: usize,
    pub m2p: usize,
    pub m2c: usize,
}

impl Messages {
    pub fn draw(sizes: &CodebookSizes, rng: &mut impl Rng) -> Self {
        Self {
            m1p: rng.gen_range(0..sizes.m1p),
            m1c: rng.gen_range(0..sizes.m1c),
            m2p: rng.gen_range(0..sizes.m2p),
            m2c: rng.gen_range(0..sizes.m2c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodeOutcome {
    pub x1: Vec<u8>,
    pub x2: Vec<u8>,
    pub chosen_l2c: usize,
    pub chosen_l2p: usize,
    pub binning_failed_c: bool,
    pub binning_failed_p: bool,
}

/// Typicality tests and samplers shared by every trial of one instance.
#[derive(Debug, Clone)]
pub struct Machinery {
    n: usize,
    enc_c: TypicalityTest,
    enc_p: TypicalityTest,
    dec1: TypicalityTest,
    dec2: TypicalityTest,
    x1: Sampler,
    x2: Sampler,
    cards: AuxCards,
}

impl Machinery {
    pub fn new(
        channel: &ChannelSpec,
        aux: &AuxFactorization,
        n: usize,
        eps: f64,
    ) -> Result<Self, SimError> {
        let joint = compose(channel, aux)?;
        Self::from_joint(&joint, aux, n, eps)
    }

    pub fn from_joint(
        joint: &JointPmf,
        aux: &AuxFactorization,
        n: usize,
        eps: f64,
    ) -> Result<Self, SimError> {
        use Var::*;
        if joint
            .roster()
            .entries()
            .iter()
            .any(|&(_, c)| c > u8::MAX as usize)
        {
            return Err(SimError::Config("alphabets above 255 symbols".into()));
        }
        Ok(Self {
            n,
            enc_c: TypicalityTest::new(joint, &[Q, U1p, U1c, U2c], n, eps)?,
            enc_p: TypicalityTest::new(joint, &[Q, U1p, U1c, U2p], n, eps)?,
            dec1: TypicalityTest::new(joint, &[Q, Y1, U1c, U1p, U2c], n, eps)?,
            dec2: TypicalityTest::new(joint, &[Q, Y2, U1c, U2c, U2p], n, eps)?,
            x1: Sampler::from_table(&aux.p_x1),
            x2: Sampler::from_table(&aux.p_x2),
            cards: aux.cards(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Index of the first row of bin `m` within `limit` that is typical with the
/// prefix, or `None`. A prefix that fails its own necessary conditions ends
/// the scan at once, since no row could complete it.
fn bin_scan<'a>(
    test: &TypicalityTest,
    prefix: [&[u8]; 3],
    limit: usize,
    row: impl Fn(usize) -> Symbols<'a>,
) -> Option<usize> {
    let n = test.n();
    let mut idx = vec![0u32; n];
    let mut tmp = vec![0u32; n];
    let mut counts = Vec::new();
    if !test.first_level(prefix[0], &mut idx, &mut counts) {
        return None;
    }
    for (k, s) in prefix.iter().enumerate().skip(1) {
        if !test.extend(k + 1, &idx, s.iter().copied(), &mut tmp, &mut counts) {
            return None;
        }
        std::mem::swap(&mut idx, &mut tmp);
    }
    let bounds = test.given_prefix(4, &counts);
    (0..limit).find(|&l| test.extend_within(4, &bounds, &idx, row(l), &mut tmp, &mut counts))
}

/// TX1 sends `x1 ~ p(x1|q,u1c,u1p)`; TX2 bins against `(u1p, u1c)` for both of
/// its layers, falling back to the first row of a bin when no row is typical.
pub fn encode(
    msg: &Messages,
    cb: &Codebook,
    mach: &Machinery,
    rng: &mut impl RngCore,
) -> EncodeOutcome {
    let q = cb.q();
    let u1p = cb.u1p(msg.m1p);
    let u1c = cb.u1c(msg.m1c);
    let s = cb.sizes();
    let found_c = bin_scan(&mach.enc_c, [q, &u1p, &u1c], s.l2c, |l| cb.u2c_symbols(msg.m2c, l));
    let found_p = bin_scan(&mach.enc_p, [q, &u1p, &u1c], s.l2p, |l| cb.u2p_symbols(msg.m2p, l));
    let (l2c, l2p) = (found_c.unwrap_or(0), found_p.unwrap_or(0));
    let u2c = cb.u2c(msg.m2c, l2c);
    let u2p = cb.u2p(msg.m2p, l2p);
    let c = mach.cards;
    let mut x1 = Vec::with_capacity(q.len());
    let mut x2 = Vec::with_capacity(q.len());
    for t in 0..q.len() {
        let qt = q[t] as usize;
        x1.push(mach.x1.sample((qt * c.u1c + u1c[t] as usize) * c.u1p + u1p[t] as usize, rng));
        x2.push(mach.x2.sample((qt * c.u2c + u2c[t] as usize) * c.u2p + u2p[t] as usize, rng));
    }
    EncodeOutcome {
        x1,
        x2,
        chosen_l2c: l2c,
        chosen_l2p: l2p,
        binning_failed_c: found_c.is_none(),
        binning_failed_p: found_p.is_none(),
    }
}

/// Per-symbol draw from `p(y1,y2|x1_t,x2_t)`.
pub fn transmit(
    x1: &[u8],
    x2: &[u8],
    channel: &ChannelSpec,
    rng: &mut impl RngCore,
) -> (Vec<u8>, Vec<u8>) {
    let k2 = channel.y2_card();
    x1.iter()
        .zip(x2)
        .map(|(&a, &b)| {
            let row = channel.row(a as usize, b as usize);
            let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            let u = unit(rng);
            let mut acc = 0.0;
            let y = row[..last]
                .iter()
                .position(|&p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(last);
            ((y / k2) as u8, (y % k2) as u8)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decoded<T> {
    Unique(T),
    NoneTypical,
    Ambiguous,
}

impl<T: PartialEq> Decoded<T> {
    pub fn is(&self, truth: &T) -> bool {
        matches!(self, Decoded::Unique(t) if t == truth)
    }
}

/// Passing triplets, stopping at the second distinct one.
struct Found<T> {
    items: Vec<T>,
}

impl<T: PartialEq + Copy> Found<T> {
    fn new() -> Self {
        Self { items: Vec::new() }
    }

    fn add(&mut self, t: T) {
        if !self.items.contains(&t) {
            self.items.push(t);
        }
    }

    fn has(&self, t: &T) -> bool {
        self.items.contains(t)
    }

    fn ambiguous(&self) -> bool {
        self.items.len() >= 2
    }

    fn finish(self) -> Decoded<T> {
        match self.items.as_slice() {
            [] => Decoded::NoneTypical,
            [t] => Decoded::Unique(*t),
            _ => Decoded::Ambiguous,
        }
    }
}

/// Receiver 1 looks for the unique `(m1p, m1c, m2c)` such that some `l2c`
/// makes `(q, y1, u1c, u1p, u2c)` jointly typical. The search walks U1c, then
/// U1p, then U2c, discarding prefixes that no completion could rescue.
pub fn decode_rx1(y1: &[u8], cb: &Codebook, mach: &Machinery) -> Decoded<(usize, usize, usize)> {
    let t = &mach.dec1;
    let n = cb.n();
    let s = cb.sizes();
    let mut counts = Vec::new();
    let mut i0 = vec![0u32; n];
    let (mut i1, mut i2, mut i3, mut i4) = (vec![0; n], vec![0; n], vec![0; n], vec![0; n]);
    let mut found = Found::new();
    if !t.first_level(cb.q(), &mut i0, &mut counts)
        || !t.extend(2, &i0, y1.iter().copied(), &mut i1, &mut counts)
    {
        return Decoded::NoneTypical;
    }
    for m1c in 0..s.m1c {
        if !t.extend(3, &i1, cb.u1c(m1c).iter().copied(), &mut i2, &mut counts) {
            continue;
        }
        for m1p in 0..s.m1p {
            if !t.extend(4, &i2, cb.u1p(m1p).iter().copied(), &mut i3, &mut counts) {
                continue;
            }
            let last = t.given_prefix(5, &counts);
            for m2c in 0..s.m2c {
                for l in 0..s.l2c {
                    if t.extend_within(5, &last, &i3, cb.u2c_symbols(m2c, l), &mut i4, &mut counts) {
                        found.add((m1p, m1c, m2c));
                        if found.ambiguous() {
                            return Decoded::Ambiguous;
                        }
                        break;
                    }
                }
            }
        }
    }
    found.finish()
}

/// Receiver 2 looks for the unique `(m2p, m2c, m1c)` such that some
/// `(l2p, l2c)` makes `(q, y2, u1c, u2c, u2p)` jointly typical.
pub fn decode_rx2(y2: &[u8], cb: &Codebook, mach: &Machinery) -> Decoded<(usize, usize, usize)> {
    let t = &mach.dec2;
    let n = cb.n();
    let s = cb.sizes();
    let mut counts = Vec::new();
    let mut i0 = vec![0u32; n];
    let (mut i1, mut i2, mut i3, mut i4) = (vec![0; n], vec![0; n], vec![0; n], vec![0; n]);
    let mut found = Found::new();
    if !t.first_level(cb.q(), &mut i0, &mut counts)
        || !t.extend(2, &i0, y2.iter().copied(), &mut i1, &mut counts)
    {
        return Decoded::NoneTypical;
    }
    for m1c in 0..s.m1c {
        if !t.extend(3, &i1, cb.u1c(m1c).iter().copied(), &mut i2, &mut counts) {
            continue;
        }
        for m2c in 0..s.m2c {
            for l2c in 0..s.l2c {
                if !t.extend(4, &i2, cb.u2c_symbols(m2c, l2c), &mut i3, &mut counts) {
                    continue;
                }
                let last = t.given_prefix(5, &counts);
                for m2p in 0..s.m2p {
                    if found.has(&(m2p, m2c, m1c)) {
                        continue;
                    }
                    for l2p in 0..s.l2p {
                        if t.extend_within(5, &last, &i3, cb.u2p_symbols(m2p, l2p), &mut i4, &mut counts) {
                            found.add((m2p, m2c, m1c));
                            if found.ambiguous() {
                                return Decoded::Ambiguous;
                            }
                            break;
                        }
                    }
                }
            }
        }
    }
    found.finish()
}

/// Outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub enc_fail_c: bool,
    pub enc_fail_p: bool,
    pub dec1_err: bool,
    pub dec2_err: bool,
}

impl TrialOutcome {
    pub fn any(&self) -> bool {
        self.enc_fail_c || self.enc_fail_p || self.dec1_err || self.dec2_err
    }
}

const TAG_CODEBOOK: u64 = 11;
const TAG_MESSAGES: u64 = 12;
const TAG_ENCODER: u64 = 13;
const TAG_CHANNEL: u64 = 14;

pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    derive_seed(master_seed, 0x5EED_0000 + trial as u64)
}

/// One full trial: fresh codebooks, uniform messages, encoding, channel, both decoders.
pub fn run_trial(
    channel: &ChannelSpec,
    aux: &AuxFactorization,
    mach: &Machinery,
    cfg: &SimConfig,
    trial: usize,
) -> TrialOutcome {
    let seed = trial_seed(cfg.master_seed, trial);
    let cb = Codebook::generate(aux, cfg.n, &cfg.rates, derive_seed(seed, TAG_CODEBOOK));
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, TAG_MESSAGES));
    let msg = Messages::draw(&cb.sizes(), &mut rng);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, TAG_ENCODER));
    let enc = encode(&msg, &cb, mach, &mut rng);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, TAG_CHANNEL));
    let (y1, y2) = transmit(&enc.x1, &enc.x2, channel, &mut rng);
    let d1 = decode_rx1(&y1, &cb, mach);
    let d2 = decode_rx2(&y2, &cb, mach);
    TrialOutcome {
        enc_fail_c: enc.binning_failed_c,
        enc_fail_p: enc.binning_failed_p,
        dec1_err: !d1.is(&(msg.m1p, msg.m1c, msg.m2c)),
        dec2_err: !d2.is(&(msg.m2p, msg.m2c, msg.m1c)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub eps_typ: f64,
    pub rates: RateVector,
    pub enc_fail_c: usize,
    pub enc_fail_p: usize,
    pub dec1_err: usize,
    pub dec2_err: usize,
    pub overall_err: usize,
    pub enc_fail_rate_c: f64,
    pub enc_fail_rate_p: f64,
    pub dec1_err_rate: f64,
    pub dec2_err_rate: f64,
    pub overall_err_rate: f64,
}

impl SimReport {
    pub fn from_outcomes(cfg: &SimConfig, outcomes: &[TrialOutcome]) -> Self {
        let count = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
        let trials = outcomes.len();
        let rate = |k: usize| k as f64 / trials as f64;
        let (c, p, d1, d2, all) = (
            count(|o| o.enc_fail_c),
            count(|o| o.enc_fail_p),
            count(|o| o.dec1_err),
            count(|o| o.dec2_err),
            count(TrialOutcome::any),
        );
        Self {
            n: cfg.n,
            trials,
            seed: cfg.master_seed,
            eps_typ: cfg.eps_typ,
            rates: cfg.rates,
            enc_fail_c: c,
            enc_fail_p: p,
            dec1_err: d1,
            dec2_err: d2,
            overall_err: all,
            enc_fail_rate_c: rate(c),
            enc_fail_rate_p: rate(p),
            dec1_err_rate: rate(d1),
            dec2_err_rate: rate(d2),
            overall_err_rate: rate(all),
        }
    }
}

/// Monte Carlo over `cfg.trials` independent trials. Each trial's randomness
/// depends only on `(master_seed, trial)`, so the report does not depend on
/// how trials are scheduled across threads.
pub fn run_trials(
    channel: &ChannelSpec,
    aux: &AuxFactorization,
    cfg: &SimConfig,
) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let mach = Machinery::new(channel, aux, cfg.n, cfg.eps_typ)?;
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(channel, aux, &mach, cfg, t))
        .collect();
    Ok(SimReport::from_outcomes(cfg, &outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rp2c: f64,
    pub success_frequency: f64,
    pub n: usize,
}

/// Encoder-side binning experiment: for each `R'2c` in `values`, the fraction
/// of trials in which the common-layer encoder finds a typical row. Every
/// value shares the same per-trial codebooks, and bins for smaller `R'2c` are
/// prefixes of larger ones, so each trial is scanned once up to the largest bin.
pub fn binning_sweep(
    channel: &ChannelSpec,
    aux: &AuxFactorization,
    cfg: &SimConfig,
    values: &[f64],
) -> Result<Vec<SweepRow>, SimError> {
    cfg.validate_basic()?;
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SimError::Config("sweep values must be non-negative".into()));
    }
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let bits = cfg.n as f64 * max;
    if bits > SWEEP_BUDGET_BITS + 1e-9 {
        return Err(SimError::Guard {
            receiver: 2,
            bits,
            budget: SWEEP_BUDGET_BITS,
        });
    }
    let mach = Machinery::new(channel, aux, cfg.n, cfg.eps_typ)?;
    let mut rates = cfg.rates;
    rates.rp2c = max;
    let limit = codebook_size(cfg.n, max);
    let hits: Vec<Option<usize>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.master_seed, trial);
            let cb = Codebook::generate(aux, cfg.n, &rates, derive_seed(seed, TAG_CODEBOOK));
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, TAG_MESSAGES));
            let msg = Messages::draw(&cb.sizes(), &mut rng);
            let (u1p, u1c) = (cb.u1p(msg.m1p), cb.u1c(msg.m1c));
            bin_scan(&mach.enc_c, [cb.q(), &u1p, &u1c], limit, |l| cb.u2c_symbols(msg.m2c, l))
        })
        .collect();
    Ok(values
        .iter()
        .map(|&v| {
            let size = codebook_size(cfg.n, v);
            let ok = hits.iter().filter(|h| matches!(h, Some(l) if *l < size)).count();
            SweepRow {
                rp2c: v,
                success_frequency: ok as f64 / cfg.trials as f64,
                n: cfg.n,
            }
        })
        .collect())
}

/// `lo, lo+step, …` up to `hi` inclusive (within rounding).
pub fn sweep_values(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, SimError> {
    if !(step > 0.0 && hi >= lo && lo >= 0.0) {
        return Err(SimError::Config(format!(
            "bad sweep range {lo}:{hi}:{step}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    // Rounded so that 0.05 steps print as 0.15 rather than 0.15000000000000002.
    Ok((0..count)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Sweep rows as CSV with header `rp2c,success_frequency,n`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("rp2c,success_frequency,n\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.rp2c, r.success_frequency, r.n));
    }
    s
}
