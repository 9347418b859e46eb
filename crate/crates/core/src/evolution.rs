//! Symbolic evolution of the initial state as a list of product branches.
//!
//! Each step applies ageing, then the orbital factor, then conscious
//! recall. [`closed_form`] rebuilds the same superposition directly from
//! the branching-address recursion, without stepping, and serves as the
//! second route for cross-checking [`evolve`].

use std::collections::HashSet;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::topology::{OrbitTopology, Orbit, RecordId};

pub const DEFAULT_BRANCH_LIMIT: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("model consistency: record {record} must be blank before the orbital step at k = {k}")]
    BlankRequirement { k: Orbit, record: RecordId },
    #[error("branch limit {limit} exceeded ({count} branches)")]
    BranchLimit { limit: usize, count: f64 },
    #[error("lifetime {steps} must be < N = {age_levels}")]
    LifetimeTooLong { steps: usize, age_levels: usize },
}

/// One product-state branch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BranchState {
    pub k: Orbit,
    /// Age per record, 0 = blank.
    pub ages: Vec<u16>,
    /// Number of recall rotations each record's read-out factor received.
    pub rotated: Vec<u32>,
    /// Branch labels chosen at each branching point passed.
    pub path: Vec<u8>,
}

impl BranchState {
    /// Branching points passed, p(b, t).
    pub fn p(&self) -> usize {
        self.path.len()
    }

    /// |amplitude|^2 = n_split^(-p).
    pub fn weight(&self, n_split: usize) -> f64 {
        (n_split as f64).powi(-(self.p() as i32))
    }

    pub fn amplitude(&self, n_split: usize) -> f64 {
        self.weight(n_split).sqrt()
    }

    pub fn is_written(&self, r: RecordId) -> bool {
        self.ages[r as usize] > 0
    }

    pub fn n_written(&self) -> usize {
        self.ages.iter().filter(|&&a| a > 0).count()
    }

    /// Path label rendered as `0.1.0`, `-` for the root.
    pub fn path_label(&self) -> String {
        if self.path.is_empty() {
            "-".to_string()
        } else {
            self.path
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(".")
        }
    }
}

/// Superposition at time `t`, branches in canonical (lexicographic path) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    pub t: usize,
    pub n_split: usize,
    pub branches: Vec<BranchState>,
    /// Age wraps observed (model-domain violations; zero for valid runs).
    pub wraps: u64,
    /// Trigger records written across the whole tree so far.
    pub trigger_writes: u64,
    /// Branch count after each step, index 0 = initial.
    pub history: Vec<usize>,
}

impl Superposition {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Sum of squared amplitudes in floating point.
    pub fn norm(&self) -> f64 {
        self.branches.iter().map(|b| b.weight(self.n_split)).sum()
    }

    /// Exact check of sum_b n^(-p_b) = 1 in integer arithmetic.
    pub fn norm_is_exact(&self) -> bool {
        let n = self.n_split as u128;
        let pmax = self.branches.iter().map(|b| b.p()).max().unwrap_or(0) as u32;
        let Some(total) = n.checked_pow(pmax) else {
            return (self.norm() - 1.0).abs() < 1e-12;
        };
        let mut acc: u128 = 0;
        for b in &self.branches {
            acc += n.pow(pmax - b.p() as u32);
        }
        acc == total
    }

    /// Whether every pair of branches differs in at least one record's
    /// blank/written status, counting the records the current orbital
    /// index writes on the next step.
    pub fn pairwise_distinguishable(&self, topo: &OrbitTopology) -> bool {
        let mut seen = HashSet::with_capacity(self.branches.len());
        self.branches
            .iter()
            .all(|b| seen.insert(record_signature(b, topo)))
    }
}

/// Written records plus those pending at the current orbital index.
pub fn record_signature(b: &BranchState, topo: &OrbitTopology) -> Vec<RecordId> {
    let mut sig: Vec<RecordId> = b
        .ages
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0)
        .map(|(i, _)| i as RecordId)
        .collect();
    sig.extend_from_slice(topo.writes_of(b.k));
    sig.sort_unstable();
    sig.dedup();
    sig
}

pub fn initial_state(topo: &OrbitTopology) -> Superposition {
    let n = topo.n_records();
    Superposition {
        t: 0,
        n_split: topo.n_split(),
        branches: vec![BranchState {
            k: topo.k_in(),
            ages: vec![0; n],
            rotated: vec![0; n],
            path: Vec::new(),
        }],
        wraps: 0,
        trigger_writes: 0,
        history: vec![1],
    }
}

/// Ageing: blank stays blank, `a -> a+1` below `N-1`, `N-1 -> 1`.
/// Returns the number of wraps.
pub fn step_age(branch: &mut BranchState, age_levels: usize) -> u64 {
    let top = (age_levels - 1) as u16;
    let mut wraps = 0;
    for a in branch.ages.iter_mut() {
        if *a == 0 {
            continue;
        }
        if *a == top {
            *a = 1;
            wraps += 1;
        } else {
            *a += 1;
        }
    }
    wraps
}

/// Applies the writing operator `age -> age+1 mod N` to every record in
/// `records`; returns the number of wraps.
fn write_records(branch: &mut BranchState, records: &[RecordId], age_levels: usize) -> u64 {
    let mut wraps = 0;
    for &r in records {
        let a = &mut branch.ages[r as usize];
        if *a as usize == age_levels - 1 {
            *a = 0;
            wraps += 1;
        } else {
            *a += 1;
        }
    }
    wraps
}

/// Orbital factor. Quasiclassical move or equal-amplitude split, both
/// writing the current index's records.
pub fn step_orbital(
    mut branch: BranchState,
    topo: &OrbitTopology,
) -> Result<(Vec<BranchState>, u64), EvolutionError> {
    let k = branch.k;
    let n = topo.params().age_levels;
    let required = if topo.is_branch_point(k) {
        topo.blank_requirement(k)
    } else {
        topo.writes_of(k)
    };
    if let Some(&record) = required.iter().find(|&&r| branch.is_written(r)) {
        return Err(EvolutionError::BlankRequirement { k, record });
    }
    let wraps = write_records(&mut branch, topo.writes_of(k), n);
    if !topo.is_branch_point(k) {
        branch.k = k + 1;
        return Ok((vec![branch], wraps));
    }
    let targets = topo.targets(k);
    let mut out = Vec::with_capacity(targets.len());
    for (label, &target) in targets.iter().enumerate() {
        let mut child = if label + 1 == targets.len() {
            std::mem::take(&mut branch)
        } else {
            branch.clone()
        };
        child.k = target;
        child.path.push(label as u8);
        out.push(child);
    }
    Ok((out, wraps))
}

/// Conscious recall: every written trigger rotates the written members of
/// its recall set.
pub fn step_conscious(branch: &mut BranchState, topo: &OrbitTopology) {
    for &m in topo.triggers() {
        if !branch.is_written(m) {
            continue;
        }
        for &l in topo.recall_set(m) {
            if branch.ages[l as usize] > 0 {
                branch.rotated[l as usize] += 1;
            }
        }
    }
}

/// Options for [`evolve_with`].
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub branch_limit: usize,
    /// Apply the recall factor each step.
    pub conscious: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            branch_limit: DEFAULT_BRANCH_LIMIT,
            conscious: true,
        }
    }
}

fn check_lifetime(topo: &OrbitTopology, steps: usize) -> Result<(), EvolutionError> {
    let n = topo.params().age_levels;
    if steps >= n {
        return Err(EvolutionError::LifetimeTooLong {
            steps,
            age_levels: n,
        });
    }
    Ok(())
}

fn check_expected_leaves(
    topo: &OrbitTopology,
    steps: usize,
    limit: usize,
) -> Result<(), EvolutionError> {
    let p = topo.params();
    let mean = 1.0 + (p.n_split as f64 - 1.0) * p.sigma();
    let expected = mean.powi(steps as i32);
    if expected > limit as f64 {
        return Err(EvolutionError::BranchLimit {
            limit,
            count: expected,
        });
    }
    Ok(())
}

pub fn evolve(topo: &OrbitTopology, steps: usize) -> Result<Superposition, EvolutionError> {
    evolve_with(topo, steps, EvolveOptions::default())
}

/// Applies `steps` full time steps to the initial state.
pub fn evolve_with(
    topo: &OrbitTopology,
    steps: usize,
    opts: EvolveOptions,
) -> Result<Superposition, EvolutionError> {
    check_lifetime(topo, steps)?;
    check_expected_leaves(topo, steps, opts.branch_limit)?;
    let mut state = initial_state(topo);
    let n = topo.params().age_levels;
    for _ in 0..steps {
        let trigger_writes: u64 = state
            .branches
            .iter()
            .filter(|b| topo.writes_of(b.k).iter().any(|&r| topo.is_trigger(r)))
            .count() as u64;
        let stepped: Vec<(Vec<BranchState>, u64)> = std::mem::take(&mut state.branches)
            .into_par_iter()
            .map(|mut b| {
                let aged = step_age(&mut b, n);
                let (mut children, written) = step_orbital(b, topo)?;
                if opts.conscious {
                    for c in children.iter_mut() {
                        step_conscious(c, topo);
                    }
                }
                Ok((children, aged + written))
            })
            .collect::<Result<_, EvolutionError>>()?;
        let count: usize = stepped.iter().map(|(c, _)| c.len()).sum();
        if count > opts.branch_limit {
            return Err(EvolutionError::BranchLimit {
                limit: opts.branch_limit,
                count: count as f64,
            });
        }
        let mut branches = Vec::with_capacity(count);
        for (children, wraps) in stepped {
            state.wraps += wraps;
            branches.extend(children);
        }
        state.branches = branches;
        state.trigger_writes += trigger_writes;
        state.t += 1;
        state.history.push(state.branches.len());
    }
    Ok(state)
}

/// Rebuilds the time-`steps` superposition of the objective factors
/// directly from the recursion `b_0 = k_in`, `q_n = min{q in Q : q >= b_n}`,
/// `b_{n+1} in jump(q_n)`, `d_n = q_n - b_n + 1`, with record ages given
/// by the exponent `[t - t_n - l]`. Read-out rotations are not modelled
/// here; all `rotated` counters are zero.
pub fn closed_form(topo: &OrbitTopology, steps: usize) -> Result<Superposition, EvolutionError> {
    check_lifetime(topo, steps)?;
    check_expected_leaves(topo, steps, DEFAULT_BRANCH_LIMIT)?;
    let mut leaves = Vec::new();
    let mut addresses = vec![topo.k_in()];
    let mut times = vec![0usize];
    let mut path = Vec::new();
    recurse(topo, steps, &mut addresses, &mut times, &mut path, &mut leaves);
    let n_split = topo.n_split();
    let history = (0..=steps).map(|t| count_leaves_at(topo, t)).collect();
    Ok(Superposition {
        t: steps,
        n_split,
        branches: leaves,
        wraps: 0,
        trigger_writes: 0,
        history,
    })
}

/// Whether `state` has the objective factors (position, ages, path) and
/// branch-count history that [`closed_form`] gives for the same time.
pub fn agrees_with_closed_form(
    state: &Superposition,
    topo: &OrbitTopology,
) -> Result<bool, EvolutionError> {
    let cf = closed_form(topo, state.t)?;
    let objective = |b: &BranchState| (b.k, b.ages.clone(), b.path.clone());
    Ok(state.history == cf.history
        && state.branches.len() == cf.branches.len()
        && state
            .branches
            .iter()
            .zip(&cf.branches)
            .all(|(a, b)| objective(a) == objective(b)))
}

fn recurse(
    topo: &OrbitTopology,
    t: usize,
    b: &mut Vec<Orbit>,
    tn: &mut Vec<usize>,
    path: &mut Vec<u8>,
    out: &mut Vec<BranchState>,
) {
    let bn = *b.last().unwrap();
    let t_n = *tn.last().unwrap();
    let q_n = topo
        .branch_points()
        .iter()
        .copied()
        .find(|&q| q >= bn)
        .expect("K is a branching index");
    let d_n = (q_n - bn + 1) as usize;
    if t_n + d_n > t {
        out.push(assemble(topo, t, b, tn, path));
        return;
    }
    for (label, &next) in topo.targets(q_n).iter().enumerate() {
        b.push(next);
        tn.push(t_n + d_n);
        path.push(label as u8);
        recurse(topo, t, b, tn, path, out);
        b.pop();
        tn.pop();
        path.pop();
    }
}

fn assemble(
    topo: &OrbitTopology,
    t: usize,
    b: &[Orbit],
    tn: &[usize],
    path: &[u8],
) -> BranchState {
    let n = topo.n_records();
    let levels = topo.params().age_levels;
    let mut ages = vec![0u16; n];
    for (idx, (&bn, &t_n)) in b.iter().zip(tn).enumerate() {
        let end = if idx + 1 < b.len() {
            tn[idx + 1] - t_n
        } else {
            t.saturating_sub(t_n)
        };
        for l in 0..end {
            let exponent = (t as i64 - t_n as i64 - l as i64).max(0) as usize;
            for &r in topo.writes_of(bn + l as Orbit) {
                ages[r as usize] = (exponent % levels) as u16;
            }
        }
    }
    let p = path.len();
    BranchState {
        k: b[p] + (t - tn[p]) as Orbit,
        ages,
        rotated: vec![0; n],
        path: path.to_vec(),
    }
}

fn count_leaves_at(topo: &OrbitTopology, t: usize) -> usize {
    fn go(topo: &OrbitTopology, bn: Orbit, t_n: usize, t: usize) -> usize {
        let q = topo.next_branch_point(bn);
        let d = (q - bn + 1) as usize;
        if t_n + d > t {
            1
        } else {
            topo.targets(q).iter().map(|&x| go(topo, x, t_n + d, t)).sum()
        }
    }
    go(topo, topo.k_in(), 0, t)
}

/// Recall count of one written trigger in a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerRecall {
    pub m: RecordId,
    /// Written members of A_R(m).
    pub recalled: usize,
    /// Step at which `m` was written.
    pub written_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub per_trigger: Vec<TriggerRecall>,
    pub r_max: usize,
    /// log2 of the conscious dimension, taken as `r_max`.
    pub log2_dc: f64,
}

/// R(m) for every written trigger of a branch observed at time `t`.
pub fn branch_recall_count(branch: &BranchState, topo: &OrbitTopology, t: usize) -> RecallReport {
    let per_trigger: Vec<TriggerRecall> = topo
        .triggers()
        .iter()
        .filter(|&&m| branch.is_written(m))
        .map(|&m| TriggerRecall {
            m,
            recalled: topo
                .recall_set(m)
                .iter()
                .filter(|&&l| branch.is_written(l))
                .count(),
            written_at: t + 1 - branch.ages[m as usize] as usize,
        })
        .collect();
    let r_max = per_trigger.iter().map(|r| r.recalled).max().unwrap_or(0);
    RecallReport {
        per_trigger,
        r_max,
        log2_dc: r_max as f64,
    }
}

pub const CSV_HEADER: &str = "path,p,k,t,n_written,R_max,log2_dC";

/// Writes the branch dump. With `verbose`, appends per-record `ages` and
/// `rotated` columns as JSON arrays.
pub fn write_csv<W: Write>(
    out: &mut W,
    state: &Superposition,
    topo: &OrbitTopology,
    verbose: bool,
) -> io::Result<()> {
    if verbose {
        writeln!(out, "{CSV_HEADER},ages,rotated")?;
    } else {
        writeln!(out, "{CSV_HEADER}")?;
    }
    for b in &state.branches {
        let rec = branch_recall_count(b, topo, state.t);
        write!(
            out,
            "{},{},{},{},{},{},{}",
            b.path_label(),
            b.p(),
            b.k,
            state.t,
            b.n_written(),
            rec.r_max,
            rec.log2_dc
        )?;
        if verbose {
            let ages = serde_json::to_string(&b.ages).expect("ages serialize");
            let rot = serde_json::to_string(&b.rotated).expect("rotations serialize");
            write!(out, ",\"{ages}\",\"{rot}\"")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{fixtures::micro, ModelParams, RecordScope};
    use crate::topology::build_topology_seeded;

    fn branching_params(seed: u64) -> ModelParams {
        ModelParams {
            orbit_len: 1200,
            branch_points: 120,
            age_levels: 48,
            records: 4000,
            lifetime: 40,
            alpha: 1.5,
            l0: 2.0,
            d_min: 3,
            n_reg: 2,
            n_split: 2,
            seed,
            w_red: 3,
            record_scope: RecordScope::All,
        }
    }

    #[test]
    fn initial_state_single_unit_branch() {
        let topo = build_topology_seeded(&micro(0)).unwrap();
        let s = initial_state(&topo);
        assert_eq!(s.len(), 1);
        assert_eq!(s.norm(), 1.0);
        assert!(s.branches[0].ages.iter().all(|&a| a == 0));
        assert_eq!(s.branches[0].p(), 0);
        assert_eq!(s.branches[0].amplitude(2), 1.0);
    }

    #[test]
    fn ageing_rule() {
        let mut b = BranchState {
            k: 1,
            ages: vec![0, 9, 3],
            rotated: vec![0; 3],
            path: vec![],
        };
        let wraps = step_age(&mut b, 10);
        assert_eq!(b.ages, vec![0, 1, 4]);
        assert_eq!(wraps, 1);
    }

    #[test]
    fn orbital_move_writes_current_records() {
        let topo = build_topology_seeded(&micro(0)).unwrap();
        let mut s = initial_state(&topo);
        let b = s.branches.remove(0);
        let (out, wraps) = step_orbital(b, &topo).unwrap();
        assert_eq!(wraps, 0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].k, 2);
        for &r in topo.writes_of(1) {
            assert_eq!(out[0].ages[r as usize], 1);
        }
        assert_eq!(out[0].n_written(), topo.writes_of(1).len());
    }

    #[test]
    fn split_gives_one_child_per_target() {
        let topo = build_topology_seeded(&micro(0)).unwrap();
        let b = BranchState {
            k: 6,
            ages: vec![0; topo.n_records()],
            rotated: vec![0; topo.n_records()],
            path: vec![],
        };
        let (out, _) = step_orbital(b, &topo).unwrap();
        let ks: Vec<Orbit> = out.iter().map(|c| c.k).collect();
        assert_eq!(ks, topo.targets(6));
        assert!(out.iter().all(|c| c.p() == 1));
        let norm: f64 = out.iter().map(|c| c.weight(2)).sum();
        assert_eq!(norm, 1.0);
    }

    #[test]
    fn blank_requirement_violation_is_reported() {
        let topo = build_topology_seeded(&micro(0)).unwrap();
        let mut ages = vec![0; topo.n_records()];
        let r = topo.blank_requirement(6)[0];
        ages[r as usize] = 2;
        let b = BranchState {
            k: 6,
            ages,
            rotated: vec![0; topo.n_records()],
            path: vec![],
        };
        assert_eq!(
            step_orbital(b, &topo).unwrap_err(),
            EvolutionError::BlankRequirement { k: 6, record: r }
        );
    }

    #[test]
    fn conscious_step_two_case_rule() {
        let topo = build_topology_seeded(&branching_params(4)).unwrap();
        let m = *topo
            .triggers()
            .iter()
            .find(|&&m| topo.recall_set(m).len() >= 5)
            .expect("a trigger with a big recall set");
        let ar = topo.recall_set(m).to_vec();
        let mut b = BranchState {
            k: 1,
            ages: vec![0; topo.n_records()],
            rotated: vec![0; topo.n_records()],
            path: vec![],
        };
        let before = b.clone();
        step_conscious(&mut b, &topo);
        assert_eq!(b, before, "blank triggers leave the branch unchanged");
        b.ages[m as usize] = 1;
        for &l in &ar[..3] {
            b.ages[l as usize] = 1;
        }
        step_conscious(&mut b, &topo);
        let bumped = b.rotated.iter().filter(|&&c| c > 0).count();
        assert_eq!(bumped, 3);
        for &l in &ar[3..] {
            assert_eq!(b.rotated[l as usize], 0);
        }
    }

    #[test]
    fn zero_steps_is_initial_state() {
        let topo = build_topology_seeded(&micro(2)).unwrap();
        assert_eq!(evolve(&topo, 0).unwrap(), initial_state(&topo));
    }

    #[test]
    fn two_branchings_give_four_branches() {
        // K=16 with eight sections of length 2: the walk branches at
        // step 2 and again at step 4
        let p = ModelParams {
            orbit_len: 16,
            branch_points: 8,
            age_levels: 6,
            records: 64,
            lifetime: 4,
            alpha: 1.5,
            l0: 1.0,
            d_min: 2,
            n_reg: 1,
            n_split: 2,
            seed: 3,
            w_red: 1,
            record_scope: RecordScope::All,
        };
        let topo = match build_topology_seeded(&p) {
            Ok(t) => t,
            Err(e) => panic!("{e}"),
        };
        let s = evolve(&topo, 4).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.branches.iter().all(|b| b.p() == 2));
        assert!(s.norm_is_exact());
    }

    #[test]
    fn ages_follow_write_times() {
        // replay oracle: log the first write step of every record, then
        // check age = t - tau + 1
        let topo = build_topology_seeded(&branching_params(7)).unwrap();
        let t_final = 40;
        let mut state = initial_state(&topo);
        let mut first_write: Vec<Vec<Option<usize>>> = vec![vec![None; topo.n_records()]];
        for step in 1..=t_final {
            let mut next = Vec::new();
            let mut logs = Vec::new();
            for (b, log) in state.branches.drain(..).zip(first_write.drain(..)) {
                let mut b = b;
                step_age(&mut b, topo.params().age_levels);
                let mut log = log;
                for &r in topo.writes_of(b.k) {
                    log[r as usize].get_or_insert(step);
                }
                let (children, _) = step_orbital(b, &topo).unwrap();
                for c in children {
                    next.push(c);
                    logs.push(log.clone());
                }
            }
            state.branches = next;
            first_write = logs;
        }
        for (b, log) in state.branches.iter().zip(&first_write) {
            for (r, tau) in log.iter().enumerate() {
                let expected = tau.map_or(0, |tau| t_final - tau + 1);
                assert_eq!(b.ages[r] as usize, expected);
            }
        }
    }

    #[test]
    fn closed_form_matches_evolve() {
        let mut matched = 0;
        for seed in 0..25 {
            let topo = build_topology_seeded(&branching_params(seed)).unwrap();
            let opts = EvolveOptions {
                conscious: false,
                ..Default::default()
            };
            let a = evolve_with(&topo, 40, opts).unwrap();
            let b = closed_form(&topo, 40).unwrap();
            assert_eq!(a.branches, b.branches, "seed {seed}");
            assert_eq!(a.history, b.history);
            let full = evolve(&topo, 40).unwrap();
            assert!(agrees_with_closed_form(&full, &topo).unwrap());
            matched += 1;
        }
        assert_eq!(matched, 25);
    }

    #[test]
    fn no_branch_config_moves_linearly() {
        let topo = build_topology_seeded(&micro(0)).unwrap();
        let s = closed_form(&topo, 4).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.branches[0].k, topo.k_in() + 4);
    }

    #[test]
    fn recall_counts_zero_at_start_and_bounded() {
        let topo = build_topology_seeded(&branching_params(1)).unwrap();
        let s0 = initial_state(&topo);
        assert_eq!(branch_recall_count(&s0.branches[0], &topo, 0).r_max, 0);
        let s = evolve(&topo, 40).unwrap();
        for b in &s.branches {
            for r in branch_recall_count(b, &topo, 40).per_trigger {
                assert!(r.recalled <= topo.recall_set(r.m).len());
                assert!(r.written_at >= 1 && r.written_at <= 40);
            }
        }
    }

    #[test]
    fn branch_limit_enforced() {
        let topo = build_topology_seeded(&branching_params(1)).unwrap();
        let opts = EvolveOptions {
            branch_limit: 2,
            conscious: true,
        };
        assert!(matches!(
            evolve_with(&topo, 40, opts),
            Err(EvolutionError::BranchLimit { .. })
        ));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let topo = build_topology_seeded(&branching_params(2)).unwrap();
        let s = evolve(&topo, 10).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &s, &topo, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), s.len());
    }
}
