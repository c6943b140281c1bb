//! Truncated bosonic Fock space in the occupation-number basis.
//!
//! States are enumerated by total boson number and then lexicographically
//! on the sorted list of occupied mode indices (equivalently, occupation
//! vectors in descending lexicographic order). Positions are computed by
//! combinatorial ranking, so no hash map is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION_CAP: usize = 2_000_000;

/// Occupation numbers `n_i`, one per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OccupationState {
    pub occupations: Vec<u32>,
}

impl OccupationState {
    pub fn vacuum(modes: usize) -> Self {
        OccupationState {
            occupations: vec![0; modes],
        }
    }

    pub fn total(&self) -> u32 {
        self.occupations.iter().sum()
    }

    /// Sorted list of occupied modes, each repeated `n_i` times.
    pub fn to_multiset(&self) -> Vec<u16> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (i, &n) in self.occupations.iter().enumerate() {
            out.extend(std::iter::repeat_n(i as u16, n as usize));
        }
        out
    }

    pub fn from_multiset(modes: usize, ms: &[u16]) -> Self {
        let mut occupations = vec![0u32; modes];
        for &i in ms {
            occupations[i as usize] += 1;
        }
        OccupationState { occupations }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Created {
    State(OccupationState, f64),
    /// The state already holds `n_max` bosons.
    Overflow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Annihilated {
    State(OccupationState, f64),
    /// `n_i = 0`.
    Kills,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of states with at most `n_max` bosons in `modes` modes.
pub fn basis_dimension(modes: usize, n_max: usize) -> u128 {
    (0..=n_max as u128)
        .map(|n| if modes == 0 { u128::from(n == 0) } else { binomial(modes as u128 + n - 1, n) })
        .fold(0u128, |a, b| a.saturating_add(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    modes: usize,
    n_max: usize,
    /// Sorted mode lists, `n_max` slots per state, padded with `u16::MAX`.
    slots: Vec<u16>,
    sector_start: Vec<usize>,
    /// `cum[r][v]` = number of non-decreasing length-`r` sequences whose
    /// first element is below `v`.
    cum: Vec<Vec<u64>>,
}

const EMPTY: u16 = u16::MAX;

impl FockBasis {
    pub fn enumerate(modes: usize, n_max: usize) -> Result<Self> {
        Self::enumerate_capped(modes, n_max, DEFAULT_DIMENSION_CAP)
    }

    pub fn enumerate_capped(modes: usize, n_max: usize, cap: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("mode count must be positive".into()));
        }
        if modes >= EMPTY as usize {
            return Err(Error::InvalidArgument(format!("{modes} modes exceed the u16 index range")));
        }
        let dim = basis_dimension(modes, n_max);
        if dim > cap as u128 {
            return Err(Error::DimensionCap { dim, cap });
        }
        let dim = dim as usize;

        // count(r, v) = C(M - v + r - 1, r): sequences of length r over {v..M-1}.
        let cum: Vec<Vec<u64>> = (0..=n_max)
            .map(|r| {
                let mut c = vec![0u64; modes + 1];
                for v in 0..modes {
                    let cnt = binomial((modes - v + r) as u128 - 1, r as u128) as u64;
                    c[v + 1] = c[v] + cnt;
                }
                c
            })
            .collect();

        let mut sector_start = Vec::with_capacity(n_max + 2);
        let mut slots = Vec::with_capacity(dim * n_max);
        let mut count = 0usize;
        for n in 0..=n_max {
            sector_start.push(count);
            let mut seq = vec![0u16; n];
            loop {
                slots.extend_from_slice(&seq);
                slots.extend(std::iter::repeat_n(EMPTY, n_max - n));
                count += 1;
                // Next non-decreasing sequence in lexicographic order.
                match (0..n).rev().find(|&p| (seq[p] as usize) < modes - 1) {
                    None => break,
                    Some(p) => {
                        let v = seq[p] + 1;
                        seq[p..].fill(v);
                    }
                }
            }
        }
        sector_start.push(count);
        debug_assert_eq!(*sector_start.last().unwrap(), dim);
        Ok(FockBasis {
            modes,
            n_max,
            slots,
            sector_start,
            cum,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        *self.sector_start.last().unwrap()
    }

    /// First position of the `n`-boson sector.
    pub fn sector_start(&self, n: usize) -> usize {
        self.sector_start[n]
    }

    pub fn id(&self) -> String {
        format!("basis(modes={},n_max={},dim={})", self.modes, self.n_max, self.dim())
    }

    /// Sorted occupied-mode list of state `p`.
    pub fn multiset(&self, p: usize) -> &[u16] {
        if self.n_max == 0 {
            return &[];
        }
        let s = &self.slots[p * self.n_max..(p + 1) * self.n_max];
        let len = s.iter().position(|&x| x == EMPTY).unwrap_or(self.n_max);
        &s[..len]
    }

    pub fn state(&self, p: usize) -> OccupationState {
        OccupationState::from_multiset(self.modes, self.multiset(p))
    }

    pub fn states(&self) -> impl Iterator<Item = OccupationState> + '_ {
        (0..self.dim()).map(|p| self.state(p))
    }

    /// Position of a sorted mode list, if it lies in the basis.
    pub fn rank_multiset(&self, ms: &[u16]) -> Option<usize> {
        let n = ms.len();
        if n > self.n_max {
            return None;
        }
        let mut pos = self.sector_start[n] as u64;
        let mut prev = 0usize;
        for (p, &m) in ms.iter().enumerate() {
            let m = m as usize;
            if m >= self.modes || m < prev {
                return None;
            }
            let rest = n - p - 1;
            pos += self.cum[rest][m] - self.cum[rest][prev];
            prev = m;
        }
        Some(pos as usize)
    }

    pub fn index(&self, s: &OccupationState) -> Option<usize> {
        if s.occupations.len() != self.modes {
            return None;
        }
        self.rank_multiset(&s.to_multiset())
    }

    fn check_mode(&self, i: usize, s: &OccupationState) -> Result<()> {
        if i >= self.modes {
            return Err(Error::ModeOutOfRange {
                index: i,
                modes: self.modes,
            });
        }
        if s.occupations.len() != self.modes {
            return Err(Error::DimensionMismatch(s.occupations.len(), self.modes));
        }
        Ok(())
    }

    /// `a_i† |s⟩ = √(n_i + 1) |s + e_i⟩`, or overflow at the truncation.
    pub fn apply_create(&self, i: usize, s: &OccupationState) -> Result<Created> {
        self.check_mode(i, s)?;
        if s.total() as usize >= self.n_max {
            return Ok(Created::Overflow);
        }
        let mut t = s.clone();
        let n = t.occupations[i];
        t.occupations[i] += 1;
        Ok(Created::State(t, f64::from(n + 1).sqrt()))
    }

    /// `a_i |s⟩ = √n_i |s - e_i⟩`.
    pub fn apply_annihilate(&self, i: usize, s: &OccupationState) -> Result<Annihilated> {
        self.check_mode(i, s)?;
        let n = s.occupations[i];
        if n == 0 {
            return Ok(Annihilated::Kills);
        }
        let mut t = s.clone();
        t.occupations[i] -= 1;
        Ok(Annihilated::State(t, f64::from(n).sqrt()))
    }

    /// Diagonal of `Γ(m)` for a diagonal contraction `m`: `Π_i m_i^{n_i}`.
    pub fn gamma_diagonal(&self, m: &[f64]) -> Result<Vec<f64>> {
        if m.len() != self.modes {
            return Err(Error::DimensionMismatch(m.len(), self.modes));
        }
        if let Some(bad) = m.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidArgument(format!("multiplier {bad} outside [0, 1]")));
        }
        Ok((0..self.dim())
            .map(|p| self.multiset(p).iter().map(|&i| m[i as usize]).product())
            .collect())
    }

    /// Diagonal of `dΓ(a)` for a diagonal one-body operator: `Σ_i a_i n_i`.
    pub fn dgamma_diagonal(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.modes {
            return Err(Error::DimensionMismatch(a.len(), self.modes));
        }
        if let Some(bad) = a.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("one-body entry {bad} is negative")));
        }
        Ok((0..self.dim())
            .map(|p| self.multiset(p).iter().map(|&i| a[i as usize]).sum())
            .collect())
    }

    /// Neighbours reached by removing one boson from state `p`:
    /// `(q, mode, √n_mode)` with `q < p`, sorted by `q`.
    pub fn annihilation_neighbors(&self, p: usize) -> Vec<(usize, usize, f64)> {
        let ms = self.multiset(p);
        let mut out = Vec::with_capacity(ms.len());
        let mut buf: Vec<u16> = Vec::with_capacity(ms.len());
        let mut start = 0;
        while start < ms.len() {
            let mode = ms[start];
            let mut end = start;
            while end < ms.len() && ms[end] == mode {
                end += 1;
            }
            let count = (end - start) as u32;
            buf.clear();
            buf.extend_from_slice(&ms[..start]);
            buf.extend_from_slice(&ms[start + 1..]);
            let q = self.rank_multiset(&buf).expect("removal stays in basis");
            out.push((q, mode as usize, f64::from(count).sqrt()));
            start = end;
        }
        out.sort_by_key(|e| e.0);
        out
    }
}
