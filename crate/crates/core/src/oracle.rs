//! Exact state-vector implementation for micro configurations.
//!
//! The Hilbert space is the orbital factor times, per record, an
//! `N`-level age register and a two-level read-out factor. Basis vectors
//! are addressed by a mixed-radix index and states are stored sparsely.
//! All three step factors are applied as sparse maps, never as matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngExt};
use serde::Serialize;
use thiserror::Error;

use crate::evolution::{self, EvolutionError, Superposition};
use crate::topology::{OrbitTopology, Orbit, RecordId};

/// Default dimension cap for [`compare_to_symbolic`].
pub const DEFAULT_DIM_CAP: u64 = 100_000;

/// Default read-out rotation angle.
pub const DEFAULT_ANGLE: f64 = 2.0 * PI / 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("basis dimension overflows u64")]
    DimensionOverflow,
    #[error("required dimension {required} exceeds cap {cap}")]
    DimensionCap { required: u64, cap: u64 },
    #[error("basis vector {index} (k = {k}) outside constructed domain of the orbital step{}", .record.map(|r| format!(": record {r} not blank")).unwrap_or_default())]
    OutsideDomain {
        index: u64,
        k: Orbit,
        record: Option<RecordId>,
    },
    #[error("basis index {0} out of range")]
    IndexRange(u64),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

/// Decoded basis vector: orbital index, per-record age and read-out bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex {
    pub k: Orbit,
    pub ages: Vec<u8>,
    pub spins: Vec<u8>,
}

/// Mixed-radix layout: `(k-1) + K * sum_i (2*age_i + spin_i) * (2N)^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpace {
    pub orbit_len: u32,
    pub records: usize,
    pub age_levels: usize,
    pub dim: u64,
}

impl BasisSpace {
    pub fn new(orbit_len: u32, records: usize, age_levels: usize) -> Result<Self, OracleError> {
        let radix = 2 * age_levels as u64;
        let mut dim = orbit_len as u64;
        for _ in 0..records {
            dim = dim.checked_mul(radix).ok_or(OracleError::DimensionOverflow)?;
        }
        Ok(BasisSpace {
            orbit_len,
            records,
            age_levels,
            dim,
        })
    }

    pub fn for_topology(topo: &OrbitTopology) -> Result<Self, OracleError> {
        Self::new(topo.k(), topo.n_records(), topo.params().age_levels)
    }

    pub fn encode(&self, b: &BasisIndex) -> u64 {
        let radix = 2 * self.age_levels as u64;
        let mut acc = 0u64;
        for i in (0..self.records).rev() {
            acc = acc * radix + 2 * b.ages[i] as u64 + b.spins[i] as u64;
        }
        acc * self.orbit_len as u64 + (b.k - 1) as u64
    }

    pub fn decode(&self, index: u64) -> Result<BasisIndex, OracleError> {
        if index >= self.dim {
            return Err(OracleError::IndexRange(index));
        }
        let radix = 2 * self.age_levels as u64;
        let k = (index % self.orbit_len as u64) as Orbit + 1;
        let mut rest = index / self.orbit_len as u64;
        let mut ages = Vec::with_capacity(self.records);
        let mut spins = Vec::with_capacity(self.records);
        for _ in 0..self.records {
            let digit = rest % radix;
            rest /= radix;
            ages.push((digit / 2) as u8);
            spins.push((digit % 2) as u8);
        }
        Ok(BasisIndex { k, ages, spins })
    }
}

/// Sparse state, amplitudes keyed by basis index in ascending order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateVector {
    pub amps: BTreeMap<u64, Complex64>,
}

impl StateVector {
    pub fn basis(index: u64) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(index, Complex64::new(1.0, 0.0));
        StateVector { amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        let (small, large, conj_small) = if self.amps.len() <= other.amps.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, a) in &small.amps {
            if let Some(b) = large.amps.get(i) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        acc
    }

    fn add(&mut self, index: u64, amp: Complex64) {
        *self.amps.entry(index).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    /// Largest absolute amplitude difference over the union of supports.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        let keys: BTreeSet<u64> = self.amps.keys().chain(other.amps.keys()).copied().collect();
        let zero = Complex64::new(0.0, 0.0);
        keys.into_iter()
            .map(|i| {
                let a = self.amps.get(&i).copied().unwrap_or(zero);
                let b = other.amps.get(&i).copied().unwrap_or(zero);
                (a - b).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Exact operators for one topology.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    topo: &'a OrbitTopology,
    space: BasisSpace,
    angle: f64,
}

impl<'a> Oracle<'a> {
    pub fn new(topo: &'a OrbitTopology) -> Result<Self, OracleError> {
        Self::with_angle(topo, DEFAULT_ANGLE)
    }

    pub fn with_angle(topo: &'a OrbitTopology, angle: f64) -> Result<Self, OracleError> {
        Ok(Oracle {
            topo,
            space: BasisSpace::for_topology(topo)?,
            angle,
        })
    }

    pub fn space(&self) -> &BasisSpace {
        &self.space
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// The initial state: `k_in`, every record blank, read-out bits 0.
    pub fn initial(&self) -> StateVector {
        let n = self.space.records;
        StateVector::basis(self.space.encode(&BasisIndex {
            k: self.topo.k_in(),
            ages: vec![0; n],
            spins: vec![0; n],
        }))
    }

    /// Ageing on every record factor (a permutation of basis vectors).
    pub fn apply_ua(&self, state: &StateVector) -> Result<StateVector, OracleError> {
        let top = (self.space.age_levels - 1) as u8;
        let mut out = StateVector::default();
        for (&i, &amp) in &state.amps {
            let mut b = self.space.decode(i)?;
            for a in b.ages.iter_mut() {
                *a = match *a {
                    0 => 0,
                    x if x == top => 1,
                    x => x + 1,
                };
            }
            out.add(self.space.encode(&b), amp);
        }
        Ok(out)
    }

    /// Checks the orbital step's domain for one basis vector: the index
    /// must carry records, and its required-blank set must be blank.
    pub fn domain_violation(&self, index: u64, b: &BasisIndex) -> Option<OracleError> {
        let k = b.k;
        if self.topo.writes_of(k).is_empty() {
            return Some(OracleError::OutsideDomain {
                index,
                k,
                record: None,
            });
        }
        let required = if self.topo.is_branch_point(k) {
            self.topo.blank_requirement(k)
        } else {
            self.topo.writes_of(k)
        };
        required
            .iter()
            .find(|&&r| b.ages[r as usize] != 0)
            .map(|&r| OracleError::OutsideDomain {
                index,
                k,
                record: Some(r),
            })
    }

    /// Orbital step on its constructed domain; refuses anything else.
    pub fn apply_uo(&self, state: &StateVector) -> Result<StateVector, OracleError> {
        let levels = self.space.age_levels as u8;
        let mut out = StateVector::default();
        for (&i, &amp) in &state.amps {
            let mut b = self.space.decode(i)?;
            if let Some(err) = self.domain_violation(i, &b) {
                return Err(err);
            }
            let k = b.k;
            for &r in self.topo.writes_of(k) {
                let a = &mut b.ages[r as usize];
                *a = (*a + 1) % levels;
            }
            if self.topo.is_branch_point(k) {
                let targets = self.topo.targets(k);
                let scale = 1.0 / (targets.len() as f64).sqrt();
                for &target in targets {
                    b.k = target;
                    out.add(self.space.encode(&b), amp * scale);
                }
            } else {
                b.k = k + 1;
                out.add(self.space.encode(&b), amp);
            }
        }
        Ok(out)
    }

    /// Recall factor: for every written trigger, rotate the read-out bit
    /// of each written record of its recall set by the fixed angle.
    pub fn apply_uc(&self, state: &StateVector) -> Result<StateVector, OracleError> {
        let mut out = StateVector::default();
        for (&i, &amp) in &state.amps {
            let b = self.space.decode(i)?;
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for &m in self.topo.triggers() {
                if b.ages[m as usize] == 0 {
                    continue;
                }
                for &l in self.topo.recall_set(m) {
                    if b.ages[l as usize] != 0 {
                        *counts.entry(l as usize).or_insert(0) += 1;
                    }
                }
            }
            // expand the product of single-factor rotations
            let mut terms: Vec<(BasisIndex, Complex64)> = vec![(b, amp)];
            for (&l, &c) in &counts {
                let theta = self.angle * c as f64;
                let (s, co) = theta.sin_cos();
                let mut next = Vec::with_capacity(terms.len() * 2);
                for (bi, a) in terms {
                    // rotation [[cos, -sin], [sin, cos]] on the read-out bit
                    let (to0, to1) = if bi.spins[l] == 0 { (co, s) } else { (-s, co) };
                    let mut b0 = bi.clone();
                    b0.spins[l] = 0;
                    let mut b1 = bi;
                    b1.spins[l] = 1;
                    next.push((b0, a * to0));
                    next.push((b1, a * to1));
                }
                terms = next;
            }
            for (bi, a) in terms {
                out.add(self.space.encode(&bi), a);
            }
        }
        out.amps.retain(|_, a| a.norm_sqr() > 0.0);
        Ok(out)
    }

    /// One full step: ageing, orbital, recall.
    pub fn step(&self, state: &StateVector) -> Result<StateVector, OracleError> {
        let s = self.apply_ua(state)?;
        let s = self.apply_uo(&s)?;
        self.apply_uc(&s)
    }

    /// Draws a random basis vector inside the orbital step's domain.
    pub fn random_domain_basis<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let candidates: Vec<Orbit> = (1..=self.topo.k())
            .filter(|&k| !self.topo.writes_of(k).is_empty())
            .collect();
        let k = candidates[rng.random_range(0..candidates.len())];
        let n = self.space.records;
        let mut b = BasisIndex {
            k,
            ages: (0..n)
                .map(|_| rng.random_range(0..self.space.age_levels) as u8)
                .collect(),
            spins: (0..n).map(|_| rng.random_range(0..2u8)).collect(),
        };
        let required = if self.topo.is_branch_point(k) {
            self.topo.blank_requirement(k)
        } else {
            self.topo.writes_of(k)
        };
        for &r in required {
            b.ages[r as usize] = 0;
        }
        self.space.encode(&b)
    }

    /// Random normalized superposition of `terms` domain basis vectors.
    pub fn random_domain_state<R: Rng + ?Sized>(&self, terms: usize, rng: &mut R) -> StateVector {
        let mut s = StateVector::default();
        for _ in 0..terms {
            let i = self.random_domain_basis(rng);
            s.add(i, random_amp(rng));
        }
        normalize(s)
    }

    /// Random normalized superposition of arbitrary basis vectors.
    pub fn random_state<R: Rng + ?Sized>(&self, terms: usize, rng: &mut R) -> StateVector {
        let mut s = StateVector::default();
        for _ in 0..terms {
            let i = rng.random_range(0..self.space.dim);
            s.add(i, random_amp(rng));
        }
        normalize(s)
    }

    /// Max |<U x_i, U x_j> - delta_ij| over images of distinct domain
    /// basis vectors.
    pub fn gram_error(&self, basis: &[u64]) -> Result<f64, OracleError> {
        let images: Vec<StateVector> = basis
            .iter()
            .map(|&i| self.apply_uo(&StateVector::basis(i)))
            .collect::<Result<_, _>>()?;
        let mut worst: f64 = 0.0;
        for (a, ia) in images.iter().enumerate() {
            for (b, ib) in images.iter().enumerate().skip(a) {
                let expected = if a == b { 1.0 } else { 0.0 };
                let g = ia.inner(ib);
                worst = worst.max((g - Complex64::new(expected, 0.0)).norm());
            }
        }
        Ok(worst)
    }

    /// Sample of `count` distinct domain basis vectors.
    pub fn sample_domain_basis<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<u64> {
        let mut set = BTreeSet::new();
        let mut attempts = 0;
        while set.len() < count && attempts < count * 100 {
            set.insert(self.random_domain_basis(rng));
            attempts += 1;
        }
        set.into_iter().collect()
    }

    /// State predicted by a symbolic superposition with recall rotations.
    pub fn from_symbolic(&self, sym: &Superposition) -> StateVector {
        let mut out = StateVector::default();
        for br in &sym.branches {
            let amp = Complex64::new(br.amplitude(sym.n_split), 0.0);
            let ages: Vec<u8> = br.ages.iter().map(|&a| a as u8).collect();
            let mut terms: Vec<(Vec<u8>, Complex64)> = vec![(vec![0; ages.len()], amp)];
            for (l, &c) in br.rotated.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let (s, co) = (self.angle * c as f64).sin_cos();
                let mut next = Vec::with_capacity(terms.len() * 2);
                for (spins, a) in terms {
                    let mut s1 = spins.clone();
                    s1[l] = 1;
                    next.push((spins, a * co));
                    next.push((s1, a * s));
                }
                terms = next;
            }
            for (spins, a) in terms {
                let idx = self.space.encode(&BasisIndex {
                    k: br.k,
                    ages: ages.clone(),
                    spins,
                });
                out.add(idx, a);
            }
        }
        out
    }
}

fn random_amp<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

fn normalize(mut s: StateVector) -> StateVector {
    let n = s.norm();
    if n > 0.0 {
        for a in s.amps.values_mut() {
            *a /= n;
        }
    }
    s
}

/// Result of running the exact and symbolic evolutions side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub dim: u64,
    pub steps: usize,
    pub max_amp_err: f64,
    pub gram_err: f64,
    pub structure_match: bool,
    pub oracle_branches: usize,
    pub symbolic_branches: usize,
    pub norm_err: f64,
    pub angle: f64,
}

/// Orbital-and-age pattern of every basis vector carrying weight.
fn patterns(space: &BasisSpace, s: &StateVector) -> Result<BTreeSet<(Orbit, Vec<u8>)>, OracleError> {
    let mut out = BTreeSet::new();
    for (&i, a) in &s.amps {
        if a.norm() > 1e-12 {
            let b = space.decode(i)?;
            out.insert((b.k, b.ages));
        }
    }
    Ok(out)
}

/// Evolves `|in>` for `steps` full steps with explicit operators and with
/// the symbolic branch list, and compares the two.
pub fn compare_to_symbolic(
    topo: &OrbitTopology,
    steps: usize,
    dim_cap: u64,
    gram_samples: usize,
    rng: &mut impl Rng,
) -> Result<OracleReport, OracleError> {
    let oracle = Oracle::new(topo)?;
    let dim = oracle.space().dim;
    if dim > dim_cap {
        return Err(OracleError::DimensionCap {
            required: dim,
            cap: dim_cap,
        });
    }
    let sym = evolution::evolve(topo, steps)?;
    let mut state = oracle.initial();
    for _ in 0..steps {
        state = oracle.step(&state)?;
    }
    let predicted = oracle.from_symbolic(&sym);
    let max_amp_err = state.max_abs_diff(&predicted);

    let got = patterns(oracle.space(), &state)?;
    let expected: BTreeSet<(Orbit, Vec<u8>)> = sym
        .branches
        .iter()
        .map(|b| (b.k, b.ages.iter().map(|&a| a as u8).collect()))
        .collect();
    let structure_match = got == expected && expected.len() == sym.len();

    let sample = oracle.sample_domain_basis(gram_samples, rng);
    let gram_err = oracle.gram_error(&sample)?;

    Ok(OracleReport {
        dim,
        steps,
        max_amp_err,
        gram_err,
        structure_match,
        oracle_branches: got.len(),
        symbolic_branches: sym.len(),
        norm_err: (state.norm() - 1.0).abs(),
        angle: oracle.angle(),
    })
}
