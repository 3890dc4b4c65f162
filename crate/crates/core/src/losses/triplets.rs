use rand::Rng;

use crate::error::{Error, Result};

/// `(anchor, close, far)` indices into a timestamp series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub close: usize,
    pub far: usize,
}

impl Triplet {
    pub fn new(anchor: usize, close: usize, far: usize) -> Self {
        Self { anchor, close, far }
    }

    /// `0 < |t(n) - t(c)| <= T_c` and `T_f < |t(n) - t(f)|`.
    pub fn is_valid(&self, timestamps: &[f64], t_c: f64, t_f: f64) -> bool {
        let n = timestamps[self.anchor];
        let dc = (n - timestamps[self.close]).abs();
        let df = (n - timestamps[self.far]).abs();
        dc > 0.0 && dc <= t_c && df > t_f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    pub triples: Vec<Triplet>,
    pub t_c: f64,
    pub t_f: f64,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Samples valid triplets uniformly from the full set without enumerating it.
///
/// For a sorted series every anchor's close and far sets are unions of at
/// most two index ranges, so an anchor drawn with weight `|close| * |far|`
/// followed by uniform close and far picks is uniform over all triplets.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    t_c: f64,
    t_f: f64,
    anchors: Vec<AnchorRanges>,
    /// Running sum of `|close| * |far|` over `anchors`.
    cumulative: Vec<u128>,
}

#[derive(Debug, Clone)]
struct AnchorRanges {
    index: usize,
    close: [(usize, usize); 2],
    far: [(usize, usize); 2],
}

fn range_len(r: &[(usize, usize); 2]) -> usize {
    (r[0].1 - r[0].0) + (r[1].1 - r[1].0)
}

fn pick<R: Rng + ?Sized>(r: &[(usize, usize); 2], rng: &mut R) -> usize {
    let k = rng.gen_range(0..range_len(r));
    let first = r[0].1 - r[0].0;
    if k < first {
        r[0].0 + k
    } else {
        r[1].0 + (k - first)
    }
}

impl TripletSampler {
    /// `timestamps` must be non-decreasing.
    pub fn new(timestamps: &[f64], t_c: f64, t_f: f64) -> Result<Self> {
        if !(t_c >= 0.0) || !(t_c <= t_f) {
            return Err(Error::InvalidArgument(format!("need 0 <= T_c <= T_f, got {t_c} and {t_f}")));
        }
        if timestamps.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidArgument("timestamps must be sorted".into()));
        }
        let n_total = timestamps.len();
        let mut anchors = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc: u128 = 0;
        for (n, &tn) in timestamps.iter().enumerate() {
            // the differences are evaluated exactly as in `Triplet::is_valid`
            let close_lo = timestamps.partition_point(|&t| (tn - t).abs() > t_c && t < tn);
            let close_hi = timestamps.partition_point(|&t| t <= tn || (tn - t).abs() <= t_c);
            let same_lo = timestamps.partition_point(|&t| t < tn);
            let same_hi = timestamps.partition_point(|&t| t <= tn);
            let far_lo = timestamps.partition_point(|&t| t < tn && (tn - t).abs() > t_f);
            let far_hi = timestamps.partition_point(|&t| t <= tn || (tn - t).abs() <= t_f);
            let ranges = AnchorRanges {
                index: n,
                close: [(close_lo, same_lo), (same_hi, close_hi)],
                far: [(0, far_lo), (far_hi, n_total)],
            };
            let weight = range_len(&ranges.close) as u128 * range_len(&ranges.far) as u128;
            if weight > 0 {
                acc += weight;
                anchors.push(ranges);
                cumulative.push(acc);
            }
        }
        if anchors.is_empty() {
            return Err(Error::NoTriplets { t_c, t_f });
        }
        Ok(Self {
            t_c,
            t_f,
            anchors,
            cumulative,
        })
    }

    /// Size of the full triplet set.
    pub fn total(&self) -> u128 {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Triplet {
        let u = rng.gen_range(0..self.total());
        let i = self.cumulative.partition_point(|&c| c <= u);
        let a = &self.anchors[i];
        Triplet::new(a.index, pick(&a.close, rng), pick(&a.far, rng))
    }

    /// `budget` independent uniform draws, or the whole set when it is
    /// no larger than the budget.
    pub fn sample_set<R: Rng + ?Sized>(&self, budget: usize, rng: &mut R) -> TripletSet {
        let triples = if self.total() <= budget as u128 {
            self.enumerate()
        } else {
            (0..budget).map(|_| self.sample(rng)).collect()
        };
        TripletSet {
            triples,
            t_c: self.t_c,
            t_f: self.t_f,
        }
    }

    /// Every valid triplet, anchor-major.
    pub fn enumerate(&self) -> Vec<Triplet> {
        let mut out = Vec::new();
        for a in &self.anchors {
            for &(cl, ch) in &a.close {
                for c in cl..ch {
                    for &(fl, fh) in &a.far {
                        out.extend((fl..fh).map(|f| Triplet::new(a.index, c, f)));
                    }
                }
            }
        }
        out
    }
}

pub fn build_triplets<R: Rng + ?Sized>(timestamps: &[f64], t_c: f64, t_f: f64, budget: usize, rng: &mut R) -> Result<TripletSet> {
    if budget == 0 {
        return Err(Error::InvalidArgument("triplet budget must be at least 1".into()));
    }
    Ok(TripletSampler::new(timestamps, t_c, t_f)?.sample_set(budget, rng))
}
