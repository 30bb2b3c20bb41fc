//! Truncated number-state basis of system ⊗ environment chain ⊗ local oscillator.
//!
//! Indices are laid out with the system occupancy varying slowest, the local
//! oscillator fastest, and the environment chain in between. Environment
//! configurations are qubit chains of length `N` holding at most `K` excitations;
//! they are ordered by total weight and, within a weight class, by the
//! combinatorial number system (colexicographic order of the occupied sites,
//! i.e. lexicographic order of the ket `|k_{N-1} … k_0⟩`).

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::{Cx, Real};
use crate::sparse::SparseOperator;

/// Default ceiling on the number of amplitudes in a basis.
pub const DEFAULT_CAPACITY: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeLayout {
    pub system_dim: usize,
    /// Number of environment sites `N`.
    pub env_count: usize,
    /// Cap `K` on the total environment excitation number.
    pub env_cap: usize,
    /// Local oscillator dimension; `0` means no local oscillator.
    #[serde(default)]
    pub lo_dim: usize,
}

impl ModeLayout {
    pub fn new(system_dim: usize, env_count: usize, env_cap: usize, lo_dim: usize) -> Result<Self> {
        let layout = Self {
            system_dim,
            env_count,
            env_cap,
            lo_dim,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_dim == 0 {
            return Err(Error::InvalidLayout("system_dim must be at least 1".into()));
        }
        if self.env_count == 0 {
            return Err(Error::InvalidLayout("env_count must be at least 1".into()));
        }
        if self.env_cap > self.env_count {
            return Err(Error::InvalidLayout(format!(
                "env_cap {} exceeds env_count {}",
                self.env_cap, self.env_count
            )));
        }
        Ok(())
    }

    /// Size of the local-oscillator factor (1 when absent).
    pub fn lo_block(&self) -> usize {
        self.lo_dim.max(1)
    }

    pub fn has_lo(&self) -> bool {
        self.lo_dim > 0
    }

    pub fn without_lo(&self) -> Self {
        Self { lo_dim: 0, ..*self }
    }

    /// Closed-form basis size, or `None` on overflow.
    pub fn dimension(&self) -> Option<usize> {
        let env = env_block_size(self.env_count, self.env_cap)?;
        self.system_dim.checked_mul(env)?.checked_mul(self.lo_block())
    }
}

/// `Σ_{j ≤ cap} C(n, j)`, or `None` on overflow.
pub fn env_block_size(n: usize, cap: usize) -> Option<usize> {
    let mut total = 0usize;
    let mut c = 1usize; // C(n, 0)
    for j in 0..=cap.min(n) {
        total = total.checked_add(c)?;
        // C(n, j+1) = C(n, j) (n - j) / (j + 1), exact in u128
        c = usize::try_from((c as u128) * ((n - j) as u128) / ((j + 1) as u128)).ok()?;
    }
    Some(total)
}

/// A single basis ket written out as occupation numbers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupationState {
    pub system_n: usize,
    /// `env_bits[n]` is the occupation of site `n`.
    pub env_bits: Vec<bool>,
    pub lo_n: usize,
}

impl OccupationState {
    pub fn vacuum(layout: &ModeLayout) -> Self {
        Self {
            system_n: 0,
            env_bits: vec![false; layout.env_count],
            lo_n: 0,
        }
    }
}

/// A single bosonic or qubit mode of the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    System,
    Env(usize),
    LocalOscillator,
}

#[derive(Debug, Clone)]
pub struct BasisEnumeration {
    layout: ModeLayout,
    env_block: usize,
    lo_block: usize,
    /// `binom[n][k] = C(n, k)` for `n ≤ N`, `k ≤ K` (saturating).
    binom: Vec<Vec<usize>>,
    weight_offsets: Vec<usize>,
    env_states: Vec<Vec<u32>>,
    shift_target: Vec<usize>,
    site0_partner: Vec<Option<usize>>,
    site0_cleared: Vec<Option<usize>>,
}

const NONE: usize = usize::MAX;

impl BasisEnumeration {
    pub fn new(layout: ModeLayout) -> Result<Self> {
        Self::with_capacity_limit(layout, DEFAULT_CAPACITY)
    }

    pub fn with_capacity_limit(layout: ModeLayout, limit: usize) -> Result<Self> {
        layout.validate()?;
        let dim = layout.dimension().ok_or(Error::Capacity {
            dim: usize::MAX,
            limit,
        })?;
        if dim > limit {
            return Err(Error::Capacity { dim, limit });
        }
        let (n, cap) = (layout.env_count, layout.env_cap);

        let mut binom = vec![vec![0usize; cap + 1]; n + 1];
        for i in 0..=n {
            binom[i][0] = 1;
            for k in 1..=cap.min(i) {
                binom[i][k] = binom[i - 1][k - 1].saturating_add(if k <= i - 1 { binom[i - 1][k] } else { 0 });
            }
        }
        let mut weight_offsets = vec![0usize; cap + 2];
        for w in 0..=cap {
            weight_offsets[w + 1] = weight_offsets[w] + binom[n][w];
        }
        let env_block = weight_offsets[cap + 1];

        let mut env_states = Vec::with_capacity(env_block);
        for w in 0..=cap {
            push_colex_combinations(n as u32, w, &mut env_states);
        }
        debug_assert_eq!(env_states.len(), env_block);

        let mut enumeration = Self {
            layout,
            env_block,
            lo_block: layout.lo_block(),
            binom,
            weight_offsets,
            env_states,
            shift_target: Vec::new(),
            site0_partner: Vec::new(),
            site0_cleared: Vec::new(),
        };
        enumeration.build_site_tables();
        Ok(enumeration)
    }

    fn build_site_tables(&mut self) {
        let cap = self.layout.env_cap;
        let mut shift_target = vec![NONE; self.env_block];
        let mut partner = vec![None; self.env_block];
        let mut cleared = vec![None; self.env_block];
        let mut scratch: Vec<u32> = Vec::with_capacity(cap + 1);
        for (e, sites) in self.env_states.iter().enumerate() {
            if sites.first() == Some(&0) {
                cleared[e] = Some(self.rank_unchecked(&sites[1..]));
            } else {
                scratch.clear();
                scratch.extend(sites.iter().map(|&p| p - 1));
                shift_target[e] = self.rank_unchecked(&scratch);
                if sites.len() < cap {
                    scratch.clear();
                    scratch.push(0);
                    scratch.extend_from_slice(sites);
                    partner[e] = Some(self.rank_unchecked(&scratch));
                }
            }
        }
        self.shift_target = shift_target;
        self.site0_partner = partner;
        self.site0_cleared = cleared;
    }

    /// Rank of a sorted list of occupied sites within the environment block.
    fn rank_unchecked(&self, sites: &[u32]) -> usize {
        let mut r = self.weight_offsets[sites.len()];
        for (i, &p) in sites.iter().enumerate() {
            r += self.binom[p as usize][i + 1];
        }
        r
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.system_dim * self.env_block * self.lo_block
    }

    pub fn env_block(&self) -> usize {
        self.env_block
    }

    pub fn lo_block(&self) -> usize {
        self.lo_block
    }

    /// Stride between consecutive system occupancies.
    pub fn system_stride(&self) -> usize {
        self.env_block * self.lo_block
    }

    #[inline]
    pub fn index(&self, system_n: usize, env: usize, lo_n: usize) -> usize {
        (system_n * self.env_block + env) * self.lo_block + lo_n
    }

    /// Occupied sites (ascending) of environment configuration `env`.
    pub fn env_sites(&self, env: usize) -> &[u32] {
        &self.env_states[env]
    }

    /// Environment rank of a sorted site list, if it lies in the truncated block.
    pub fn env_rank(&self, sites: &[u32]) -> Option<usize> {
        if sites.len() > self.layout.env_cap {
            return None;
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        if sites.iter().any(|&p| p as usize >= self.layout.env_count) {
            return None;
        }
        Some(self.rank_unchecked(sites))
    }

    /// Target of the chain shift for configurations with site 0 empty.
    #[inline]
    pub(crate) fn shift_target(&self, env: usize) -> Option<usize> {
        match self.shift_target[env] {
            NONE => None,
            t => Some(t),
        }
    }

    /// For `env` with site 0 empty: the configuration with site 0 additionally occupied.
    #[inline]
    pub(crate) fn site0_partner(&self, env: usize) -> Option<usize> {
        self.site0_partner[env]
    }

    /// For `env` with site 0 occupied: the configuration with site 0 emptied.
    #[inline]
    pub(crate) fn site0_cleared(&self, env: usize) -> Option<usize> {
        self.site0_cleared[env]
    }

    pub fn index_of(&self, occ: &OccupationState) -> Result<usize> {
        let l = &self.layout;
        if occ.system_n >= l.system_dim {
            return Err(Error::OutOfRange(format!(
                "system occupancy {} >= {}",
                occ.system_n, l.system_dim
            )));
        }
        if occ.env_bits.len() != l.env_count {
            return Err(Error::DimensionMismatch {
                expected: l.env_count,
                found: occ.env_bits.len(),
            });
        }
        if occ.lo_n >= self.lo_block {
            return Err(Error::OutOfRange(format!(
                "local oscillator occupancy {} >= {}",
                occ.lo_n, self.lo_block
            )));
        }
        let sites: Vec<u32> = occ
            .env_bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(n, _)| n as u32)
            .collect();
        let env = self.env_rank(&sites).ok_or_else(|| {
            Error::OutOfRange(format!(
                "{} environment excitations exceed cap {}",
                sites.len(),
                l.env_cap
            ))
        })?;
        Ok(self.index(occ.system_n, env, occ.lo_n))
    }

    pub fn occupation_of(&self, index: usize) -> Result<OccupationState> {
        if index >= self.dim() {
            return Err(Error::OutOfRange(format!("index {index} >= dimension {}", self.dim())));
        }
        let lo_n = index % self.lo_block;
        let rest = index / self.lo_block;
        let env = rest % self.env_block;
        let system_n = rest / self.env_block;
        let mut env_bits = vec![false; self.layout.env_count];
        for &p in &self.env_states[env] {
            env_bits[p as usize] = true;
        }
        Ok(OccupationState {
            system_n,
            env_bits,
            lo_n,
        })
    }

    /// Matrix of the lowering operator of one mode in the truncated basis.
    pub fn mode_lowering<T: Real>(&self, mode: Mode) -> Result<SparseOperator<T>> {
        let one = Complex::new(T::one(), T::zero());
        let mut entries = Vec::new();
        let (ds, le) = (self.layout.system_dim, self.lo_block);
        match mode {
            Mode::System => {
                for s in 1..ds {
                    let amp = Complex::new(T::of(s as f64).sqrt(), T::zero());
                    for e in 0..self.env_block {
                        for l in 0..le {
                            entries.push((self.index(s - 1, e, l), self.index(s, e, l), amp));
                        }
                    }
                }
            }
            Mode::Env(site) => {
                if site >= self.layout.env_count {
                    return Err(Error::UnknownMode(format!(
                        "environment site {site} (chain has {} sites)",
                        self.layout.env_count
                    )));
                }
                let site = site as u32;
                let mut reduced = Vec::new();
                for (e, sites) in self.env_states.iter().enumerate() {
                    if !sites.contains(&site) {
                        continue;
                    }
                    reduced.clear();
                    reduced.extend(sites.iter().copied().filter(|&p| p != site));
                    let target = self.rank_unchecked(&reduced);
                    for s in 0..ds {
                        for l in 0..le {
                            entries.push((self.index(s, target, l), self.index(s, e, l), one));
                        }
                    }
                }
            }
            Mode::LocalOscillator => {
                if !self.layout.has_lo() {
                    return Err(Error::UnknownMode("layout has no local oscillator".into()));
                }
                for l in 1..le {
                    let amp = Complex::new(T::of(l as f64).sqrt(), T::zero());
                    for s in 0..ds {
                        for e in 0..self.env_block {
                            entries.push((self.index(s, e, l - 1), self.index(s, e, l), amp));
                        }
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.dim(), entries)
    }

    pub fn mode_raising<T: Real>(&self, mode: Mode) -> Result<SparseOperator<T>> {
        Ok(self.mode_lowering::<T>(mode)?.adjoint())
    }

    /// Embeds a `d_S × d_S` operator as `op ⊗ I` on the full space.
    pub fn embed_system<T: Real>(&self, op: &DenseMatrix<T>) -> Result<SparseOperator<T>> {
        let ds = self.layout.system_dim;
        if op.rows() != ds || op.cols() != ds {
            return Err(Error::DimensionMismatch {
                expected: ds,
                found: op.rows(),
            });
        }
        let stride = self.system_stride();
        let mut entries = Vec::new();
        for i in 0..ds {
            for j in 0..ds {
                let v: Cx<T> = op[(i, j)];
                if v.re == T::zero() && v.im == T::zero() {
                    continue;
                }
                for r in 0..stride {
                    entries.push((i * stride + r, j * stride + r, v));
                }
            }
        }
        SparseOperator::from_triplets(self.dim(), entries)
    }
}

/// Appends every `w`-subset of `{0, …, n-1}` in colexicographic order.
fn push_colex_combinations(n: u32, w: usize, out: &mut Vec<Vec<u32>>) {
    if w as u32 > n {
        return;
    }
    let mut c: Vec<u32> = (0..w as u32).collect();
    loop {
        out.push(c.clone());
        let mut i = 0;
        while i < w {
            let limit = if i + 1 < w { c[i + 1] } else { n };
            if c[i] + 1 < limit {
                break;
            }
            i += 1;
        }
        if i == w {
            return;
        }
        c[i] += 1;
        for (j, slot) in c.iter_mut().enumerate().take(i) {
            *slot = j as u32;
        }
    }
}

/// Convenience wrapper mirroring [`BasisEnumeration::new`].
pub fn enumerate_basis(layout: ModeLayout) -> Result<BasisEnumeration> {
    BasisEnumeration::new(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        // written as |k_{N-1} … k_0⟩
        s.chars().rev().map(|c| c == '1').collect()
    }

    #[test]
    fn three_site_single_excitation_block() {
        let b = enumerate_basis(ModeLayout::new(1, 3, 1, 0).unwrap()).unwrap();
        assert_eq!(b.dim(), 4);
        let order: Vec<usize> = ["000", "001", "010", "100"]
            .iter()
            .map(|s| {
                b.index_of(&OccupationState {
                    system_n: 0,
                    env_bits: bits(s),
                    lo_n: 0,
                })
                .unwrap()
            })
            .collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn block_sizes_match_closed_form() {
        let b = enumerate_basis(ModeLayout::new(2, 51, 2, 0).unwrap()).unwrap();
        assert_eq!(b.env_block(), 1327);
        assert_eq!(b.dim(), 2654);
        let lo = ModeLayout::new(2, 1, 1, 250).unwrap();
        assert_eq!(enumerate_basis(lo).unwrap().dim(), 1000);
    }

    #[test]
    fn capacity_limit_is_enforced() {
        let layout = ModeLayout::new(2, 51, 2, 250).unwrap();
        let err = BasisEnumeration::with_capacity_limit(layout, 10_000).unwrap_err();
        assert_eq!(
            err,
            Error::Capacity {
                dim: 663_500,
                limit: 10_000
            }
        );
    }

    #[test]
    fn index_zero_is_global_vacuum() {
        let layout = ModeLayout::new(3, 5, 2, 4).unwrap();
        let b = enumerate_basis(layout).unwrap();
        assert_eq!(b.occupation_of(0).unwrap(), OccupationState::vacuum(&layout));
    }

    #[test]
    fn invalid_layouts_and_occupations() {
        assert!(ModeLayout::new(2, 2, 3, 0).is_err());
        assert!(ModeLayout::new(2, 0, 0, 0).is_err());
        let b = enumerate_basis(ModeLayout::new(2, 4, 1, 0).unwrap()).unwrap();
        let too_many = OccupationState {
            system_n: 0,
            env_bits: bits("0011"),
            lo_n: 0,
        };
        assert!(matches!(b.index_of(&too_many), Err(Error::OutOfRange(_))));
        assert!(b.occupation_of(b.dim()).is_err());
        assert!(matches!(b.mode_lowering::<f64>(Mode::Env(4)), Err(Error::UnknownMode(_))));
        assert!(matches!(b.mode_lowering::<f64>(Mode::LocalOscillator), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn qubit_and_oscillator_ladders() {
        let b = enumerate_basis(ModeLayout::new(2, 2, 2, 3).unwrap()).unwrap();
        let b1 = b.mode_lowering::<f64>(Mode::Env(1)).unwrap();
        let one = b
            .index_of(&OccupationState {
                system_n: 1,
                env_bits: vec![false, true],
                lo_n: 2,
            })
            .unwrap();
        let zero = b
            .index_of(&OccupationState {
                system_n: 1,
                env_bits: vec![false, false],
                lo_n: 2,
            })
            .unwrap();
        assert_eq!(b1.get(zero, one).re, 1.0);
        // B|0⟩ = 0: no column for the empty site
        assert!((0..b.dim()).all(|r| b1.get(r, zero).norm() == 0.0));

        let c = b.mode_lowering::<f64>(Mode::LocalOscillator).unwrap();
        let lo2 = b.index(0, 0, 2);
        let lo1 = b.index(0, 0, 1);
        assert!((c.get(lo1, lo2).re - 2f64.sqrt()).abs() < 1e-15);

        let raise = b.mode_raising::<f64>(Mode::System).unwrap();
        let lower = b.mode_lowering::<f64>(Mode::System).unwrap();
        for (r, col, v) in lower.triplets() {
            assert_eq!(raise.get(col, r), v.conj());
        }
    }

    #[test]
    fn shift_table_moves_sites_down() {
        let b = enumerate_basis(ModeLayout::new(1, 4, 2, 0).unwrap()).unwrap();
        let from = b.env_rank(&[1, 3]).unwrap();
        assert_eq!(b.shift_target(from), b.env_rank(&[0, 2]));
        let occupied = b.env_rank(&[0, 2]).unwrap();
        assert_eq!(b.shift_target(occupied), None);
        assert_eq!(b.site0_cleared(occupied), b.env_rank(&[2]));
        assert_eq!(b.site0_partner(b.env_rank(&[2]).unwrap()), Some(occupied));
        assert_eq!(b.site0_partner(from), None);
    }
}
