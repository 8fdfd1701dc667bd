//! Observation (control-opportunity) flags and nested observation ladders.
//!
//! A flag at step `n ≥ 1` means a Poisson arrival fell in `((n-1)Δt, nΔt]`;
//! it is drawn as `1{e < Δt}` with `e ~ Exp(rate)`. Step 0 is never flagged.
//!
//! A ladder for rates `η_1 < … < η_K` superposes independent layers with rates
//! `λ_j = η_j − η_{j−1}`; level `k` is the union of layers `1..=k`, so flags
//! only get added as the rate increases.

use std::sync::Arc;

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_model::SimulationPlan;
use crate::rng::{substream, Stream};

/// Read access to one path's observation flags.
pub trait ObservationFlags {
    fn len(&self) -> usize;
    fn is_set(&self, n: usize) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ObservationFlags for [bool] {
    fn len(&self) -> usize {
        <[bool]>::len(self)
    }
    fn is_set(&self, n: usize) -> bool {
        self[n]
    }
}

impl ObservationFlags for Vec<bool> {
    fn len(&self) -> usize {
        Vec::len(self)
    }
    fn is_set(&self, n: usize) -> bool {
        self[n]
    }
}

/// Bit-packed `paths × width` boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsMask {
    paths: usize,
    width: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl ObsMask {
    pub fn empty(paths: usize, width: usize) -> Self {
        let words_per_row = width.div_ceil(64);
        ObsMask {
            paths,
            width,
            words_per_row,
            words: vec![0; paths * words_per_row],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut mask = ObsMask::empty(rows.len(), width);
        for (m, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::LengthMismatch {
                    what: "mask row",
                    got: row.len(),
                    expected: width,
                });
            }
            for (n, &flag) in row.iter().enumerate() {
                if flag {
                    mask.set(m, n);
                }
            }
        }
        Ok(mask)
    }

    /// Samples flags for every path of `plan` at `rate` from stream level `level`.
    pub fn sample(plan: &SimulationPlan, rate: f64, level: u16) -> Self {
        let mut mask = ObsMask::empty(plan.paths, plan.width());
        let dt = plan.dt();
        let exp = Exp::new(rate).expect("positive observation rate");
        let wpr = mask.words_per_row;
        let width = mask.width;
        mask.words.par_chunks_mut(wpr).enumerate().for_each(|(m, row)| {
            let mut rng = substream(plan.seed, m, Stream::Observation(level));
            for n in 1..width {
                let e: f64 = exp.sample(&mut rng);
                if e < dt {
                    row[n / 64] |= 1 << (n % 64);
                }
            }
        });
        mask
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, m: usize, n: usize) -> bool {
        debug_assert!(n < self.width);
        self.words[m * self.words_per_row + n / 64] >> (n % 64) & 1 == 1
    }

    pub fn set(&mut self, m: usize, n: usize) {
        assert!(m < self.paths && n < self.width);
        self.words[m * self.words_per_row + n / 64] |= 1 << (n % 64);
    }

    pub fn row(&self, m: usize) -> MaskRow<'_> {
        let start = m * self.words_per_row;
        MaskRow {
            words: &self.words[start..start + self.words_per_row],
            width: self.width,
        }
    }

    pub fn union(&self, other: &ObsMask) -> Result<ObsMask> {
        self.check_same_shape(other)?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        Ok(ObsMask { words, ..*self })
    }

    pub fn is_subset_of(&self, other: &ObsMask) -> bool {
        self.paths == other.paths
            && self.width == other.width
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    fn check_same_shape(&self, other: &ObsMask) -> Result<()> {
        if self.paths != other.paths || self.width != other.width {
            return Err(Error::LengthMismatch {
                what: "obs_mask",
                got: other.paths * other.width,
                expected: self.paths * self.width,
            });
        }
        Ok(())
    }
}

/// One path's flags, borrowed from an [`ObsMask`].
#[derive(Debug, Clone, Copy)]
pub struct MaskRow<'a> {
    words: &'a [u64],
    width: usize,
}

impl MaskRow<'_> {
    pub fn get(&self, n: usize) -> bool {
        debug_assert!(n < self.width);
        self.words[n / 64] >> (n % 64) & 1 == 1
    }

    pub fn to_vec(&self) -> Vec<bool> {
        (0..self.width).map(|n| self.get(n)).collect()
    }
}

impl ObservationFlags for MaskRow<'_> {
    fn len(&self) -> usize {
        self.width
    }
    fn is_set(&self, n: usize) -> bool {
        self.get(n)
    }
}

/// Nested masks for an increasing list of observation rates.
#[derive(Debug, Clone)]
pub struct ObservationLadder {
    rates: Vec<f64>,
    masks: Vec<Arc<ObsMask>>,
}

impl ObservationLadder {
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn mask(&self, level: usize) -> &Arc<ObsMask> {
        &self.masks[level]
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

pub fn build_ladder(rates: &[f64], plan: &SimulationPlan) -> Result<ObservationLadder> {
    plan.validate()?;
    if rates.is_empty() {
        return Err(Error::InvalidArgument("observation ladder needs at least one rate".into()));
    }
    if rates.len() > usize::from(u16::MAX) {
        return Err(Error::InvalidArgument("too many ladder levels".into()));
    }
    let mut previous = 0.0;
    for &rate in rates {
        if !(rate.is_finite() && rate > previous) {
            return Err(Error::InvalidArgument(format!(
                "ladder rates must be positive and strictly increasing, got {rates:?}"
            )));
        }
        previous = rate;
    }

    let mut masks = Vec::with_capacity(rates.len());
    let mut cumulative: Option<ObsMask> = None;
    let mut previous = 0.0;
    for (level, &rate) in rates.iter().enumerate() {
        let layer = ObsMask::sample(plan, rate - previous, level as u16);
        let next = match &cumulative {
            None => layer,
            Some(acc) => acc.union(&layer)?,
        };
        masks.push(Arc::new(next.clone()));
        cumulative = Some(next);
        previous = rate;
    }
    Ok(ObservationLadder {
        rates: rates.to_vec(),
        masks,
    })
}
