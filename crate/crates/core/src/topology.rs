//! Random construction of the constant time-step operator.
//!
//! Every random draw that defines the evolution operator happens here:
//! section layout, register partition of the branching indices, jump
//! addresses, record addresses, trigger records and recall sets. The
//! result is frozen into an [`OrbitTopology`] which serializes to a single
//! JSON document.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::{self, ParetoError};
use crate::params::{ModelParams, ParamError, RecordScope};

/// Orbital index, `1..=K`.
pub type Orbit = u32;
/// Record index, `0..n_records`.
pub type RecordId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error("loop freedom within T = {lifetime} not achieved after {redraws} redraws; violating walk over section starts {cycle:?}")]
    LoopFreedom {
        lifetime: usize,
        redraws: usize,
        cycle: Vec<Orbit>,
    },
    #[error("record demand {needed} exceeds I = {capacity}")]
    RecordCapacity { needed: usize, capacity: usize },
    #[error("record {0} is not a trigger record")]
    NotATrigger(RecordId),
    #[error("malformed topology document: {0}")]
    Malformed(String),
}

/// A quasiclassical section `start..=end`; `end` is a branching index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Section {
    pub start: Orbit,
    pub end: Orbit,
}

impl Section {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn contains(&self, k: Orbit) -> bool {
        self.start <= k && k <= self.end
    }
}

/// One node of the backward-branching search from a trigger record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackwardNode {
    /// Position of the section in [`OrbitTopology::sections`].
    pub section: usize,
    pub depth: usize,
}

/// On-disk form. Keys match the interchange document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDoc {
    params: ModelParams,
    k_in: Orbit,
    n_records: usize,
    #[serde(rename = "Q")]
    q: Vec<Orbit>,
    sections: Vec<Section>,
    #[serde(rename = "J")]
    register: Vec<Vec<Orbit>>,
    #[serde(rename = "A_W")]
    writes: BTreeMap<Orbit, Vec<RecordId>>,
    #[serde(rename = "M")]
    triggers: Vec<RecordId>,
    jump: BTreeMap<Orbit, Vec<Orbit>>,
    #[serde(rename = "B")]
    blank_req: BTreeMap<Orbit, Vec<RecordId>>,
    #[serde(rename = "A_R")]
    recall: BTreeMap<RecordId, Vec<RecordId>>,
    #[serde(rename = "L")]
    recall_len: BTreeMap<RecordId, f64>,
    recall_clamps: usize,
}

/// The frozen random construction. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct OrbitTopology {
    params: ModelParams,
    k_in: Orbit,
    n_records: usize,
    q: Vec<Orbit>,
    register: Vec<Vec<Orbit>>,
    writes: Vec<Vec<RecordId>>,
    triggers: Vec<RecordId>,
    jump: Vec<Vec<Orbit>>,
    blank_req: Vec<Vec<RecordId>>,
    recall: BTreeMap<RecordId, Vec<RecordId>>,
    recall_len: BTreeMap<RecordId, f64>,
    recall_clamps: usize,
    // derived lookups
    writer: Vec<Orbit>,
    predecessors: BTreeMap<Orbit, Vec<Orbit>>,
}

impl From<OrbitTopology> for TopologyDoc {
    fn from(t: OrbitTopology) -> Self {
        let sections = t.sections();
        let writes = (1..=t.k())
            .filter(|&k| !t.writes_of(k).is_empty())
            .map(|k| (k, t.writes_of(k).to_vec()))
            .collect();
        let jump = t.q.iter().map(|&q| (q, t.targets(q).to_vec())).collect();
        let blank_req = t
            .q
            .iter()
            .map(|&q| (q, t.blank_requirement(q).to_vec()))
            .collect();
        TopologyDoc {
            k_in: t.k_in,
            n_records: t.n_records,
            q: t.q,
            sections,
            register: t.register,
            writes,
            triggers: t.triggers,
            jump,
            blank_req,
            recall: t.recall,
            recall_len: t.recall_len,
            recall_clamps: t.recall_clamps,
            params: t.params,
        }
    }
}

impl TryFrom<TopologyDoc> for OrbitTopology {
    type Error = TopologyError;

    fn try_from(doc: TopologyDoc) -> Result<Self, Self::Error> {
        let bad = |m: String| TopologyError::Malformed(m);
        doc.params.validate()?;
        let k = doc.params.orbit_len;
        if doc.q.windows(2).any(|w| w[0] >= w[1]) || doc.q.last() != Some(&(k as Orbit)) {
            return Err(bad("Q must be strictly ascending and end at K".into()));
        }
        let mut writes = vec![Vec::new(); k + 1];
        for (idx, recs) in doc.writes {
            let slot = writes
                .get_mut(idx as usize)
                .filter(|_| idx >= 1)
                .ok_or_else(|| bad(format!("A_W key {idx} outside 1..=K")))?;
            *slot = recs;
        }
        let mut jump = vec![Vec::new(); k + 1];
        let mut blank_req = vec![Vec::new(); k + 1];
        for &q in &doc.q {
            jump[q as usize] = doc
                .jump
                .get(&q)
                .cloned()
                .ok_or_else(|| bad(format!("jump missing for {q}")))?;
            blank_req[q as usize] = doc.blank_req.get(&q).cloned().unwrap_or_default();
        }
        let mut topo = OrbitTopology {
            params: doc.params,
            k_in: doc.k_in,
            n_records: doc.n_records,
            q: doc.q,
            register: doc.register,
            writes,
            triggers: doc.triggers,
            jump,
            blank_req,
            recall: doc.recall,
            recall_len: doc.recall_len,
            recall_clamps: doc.recall_clamps,
            writer: Vec::new(),
            predecessors: BTreeMap::new(),
        };
        topo.rebuild_lookups()?;
        if topo.sections() != doc.sections {
            return Err(bad("sections inconsistent with Q".into()));
        }
        Ok(topo)
    }
}

impl OrbitTopology {
    fn rebuild_lookups(&mut self) -> Result<(), TopologyError> {
        let mut writer = vec![0; self.n_records];
        for k in 1..=self.k() {
            for &r in &self.writes[k as usize] {
                let slot = writer.get_mut(r as usize).ok_or_else(|| {
                    TopologyError::Malformed(format!("record {r} >= n_records"))
                })?;
                if *slot != 0 {
                    return Err(TopologyError::Malformed(format!(
                        "record {r} written by both {} and {k}",
                        *slot
                    )));
                }
                *slot = k;
            }
        }
        let mut predecessors: BTreeMap<Orbit, Vec<Orbit>> = BTreeMap::new();
        for &q in &self.q {
            for &t in &self.jump[q as usize] {
                predecessors.entry(t).or_default().push(q);
            }
        }
        for v in predecessors.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        self.writer = writer;
        self.predecessors = predecessors;
        Ok(())
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Orbit length K.
    pub fn k(&self) -> Orbit {
        self.params.orbit_len as Orbit
    }

    /// Initial orbital index (start of the first section).
    pub fn k_in(&self) -> Orbit {
        self.k_in
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn n_split(&self) -> usize {
        self.params.n_split
    }

    pub fn branch_points(&self) -> &[Orbit] {
        &self.q
    }

    pub fn is_branch_point(&self, k: Orbit) -> bool {
        self.q.binary_search(&k).is_ok()
    }

    /// Register subsets `J[s]`, indexed by the base-`n_split` label `s`.
    pub fn register(&self) -> &[Vec<Orbit>] {
        &self.register
    }

    pub fn sections(&self) -> Vec<Section> {
        (0..self.q.len()).map(|i| self.section(i)).collect()
    }

    pub fn section(&self, i: usize) -> Section {
        let start = if i == 0 { 1 } else { self.q[i - 1] + 1 };
        Section {
            start,
            end: self.q[i],
        }
    }

    /// Position of the section containing `k`.
    pub fn section_of(&self, k: Orbit) -> usize {
        match self.q.binary_search(&k) {
            Ok(i) | Err(i) => i,
        }
    }

    /// First branching index at or after `k`.
    pub fn next_branch_point(&self, k: Orbit) -> Orbit {
        self.q[self.section_of(k)]
    }

    /// Records written when the system sits at `k` (A_W).
    pub fn writes_of(&self, k: Orbit) -> &[RecordId] {
        self.writes.get(k as usize).map_or(&[], |v| v.as_slice())
    }

    /// Orbital index whose write set contains `r`.
    pub fn writer_of(&self, r: RecordId) -> Option<Orbit> {
        self.writer.get(r as usize).copied().filter(|&k| k != 0)
    }

    /// Jump addresses of a branching index, ordered by branch label.
    pub fn targets(&self, q: Orbit) -> &[Orbit] {
        self.jump.get(q as usize).map_or(&[], |v| v.as_slice())
    }

    /// Records that must be blank before branching at `q` (B).
    pub fn blank_requirement(&self, q: Orbit) -> &[RecordId] {
        self.blank_req.get(q as usize).map_or(&[], |v| v.as_slice())
    }

    /// Trigger records M, ascending.
    pub fn triggers(&self) -> &[RecordId] {
        &self.triggers
    }

    pub fn is_trigger(&self, r: RecordId) -> bool {
        self.triggers.binary_search(&r).is_ok()
    }

    /// Recall set A_R(m).
    pub fn recall_set(&self, m: RecordId) -> &[RecordId] {
        self.recall.get(&m).map_or(&[], |v| v.as_slice())
    }

    /// Drawn recall length L(m).
    pub fn recall_len(&self, m: RecordId) -> Option<f64> {
        self.recall_len.get(&m).copied()
    }

    /// How many per-section recall draws were clamped to the section size.
    pub fn recall_clamps(&self) -> usize {
        self.recall_clamps
    }

    /// Branching indices jumping to `start`.
    pub fn predecessors(&self, start: Orbit) -> &[Orbit] {
        self.predecessors.get(&start).map_or(&[], |v| v.as_slice())
    }

    /// Depth limit of the backward search, `ceil(T * Q_size / K)`.
    pub fn backward_depth_limit(&self) -> usize {
        let p = &self.params;
        (p.lifetime * p.branch_points).div_ceil(p.orbit_len)
    }

    /// Records per backward section for a drawn length, `ceil(K L / (T Q_size))`.
    pub fn recalls_per_section(&self, len: f64) -> usize {
        let p = &self.params;
        let denom = (p.lifetime * p.branch_points) as f64;
        if denom == 0.0 {
            return usize::MAX;
        }
        let l = (p.orbit_len as f64 * len / denom).ceil();
        if l >= usize::MAX as f64 {
            usize::MAX
        } else {
            l as usize
        }
    }

    /// All sections that may have led to the writing of trigger `m`,
    /// paired with their backward depth (0 for the section of the writer).
    pub fn backward_tree(&self, m: RecordId) -> Result<Vec<BackwardNode>, TopologyError> {
        if !self.is_trigger(m) {
            return Err(TopologyError::NotATrigger(m));
        }
        let writer = self.writer_of(m).ok_or(TopologyError::NotATrigger(m))?;
        let limit = self.backward_depth_limit();
        let mut out = BTreeSet::new();
        let mut frontier = BTreeSet::from([self.section_of(writer)]);
        for depth in 0..=limit {
            for &s in &frontier {
                out.insert(BackwardNode { section: s, depth });
            }
            if depth == limit {
                break;
            }
            frontier = frontier
                .iter()
                .flat_map(|&s| self.predecessors(self.section(s).start))
                .map(|&q| self.section_of(q))
                .collect();
            if frontier.is_empty() {
                break;
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Records a backward node can contribute to A_R(m): the section's
    /// write sets up to the writer of `m` at depth 0, the whole section
    /// otherwise, never `m` itself.
    fn recall_pool(&self, m: RecordId, writer: Orbit, node: BackwardNode) -> Vec<RecordId> {
        let sec = self.section(node.section);
        let last = if node.depth == 0 { writer } else { sec.end };
        (sec.start..=last)
            .flat_map(|k| self.writes_of(k).iter().copied())
            .filter(|&r| r != m)
            .collect()
    }

    /// Serializes to the interchange JSON document.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("topology serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        serde_json::from_str(text).map_err(|e| TopologyError::Malformed(e.to_string()))
    }
}

/// Result of one pass of the forward-walk verifier.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum WalkViolation {
    /// Jump at `q` (branch label `label`) re-enters a visited section.
    Loop {
        q: Orbit,
        label: usize,
        walk: Vec<Orbit>,
    },
    /// Branching at `q` while `earlier`, sharing a jump target, was visited.
    BlankRequirement {
        q: Orbit,
        earlier: Orbit,
        walk: Vec<Orbit>,
    },
}

struct Draft {
    q: Vec<Orbit>,
    label_of: BTreeMap<Orbit, usize>,
    register: Vec<Vec<Orbit>>,
    jump: BTreeMap<Orbit, Vec<Orbit>>,
}

impl Draft {
    fn section_index(&self, k: Orbit) -> usize {
        match self.q.binary_search(&k) {
            Ok(i) | Err(i) => i,
        }
    }

    fn section_start(&self, i: usize) -> Orbit {
        if i == 0 {
            1
        } else {
            self.q[i - 1] + 1
        }
    }

    fn shares_target(&self, a: Orbit, b: Orbit) -> bool {
        let ta = &self.jump[&a];
        self.jump[&b].iter().any(|t| ta.contains(t))
    }

    fn pool(&self, q: Orbit, label: usize, n_split: usize, subsets: usize) -> &[Orbit] {
        let s = self.label_of[&q];
        let shifted = (s % (subsets / n_split)) * n_split + label;
        &self.register[shifted]
    }

    /// Depth-first over all forward walks of `lifetime` steps from every
    /// section start; collects every violation, not descending past one.
    fn verify(&self, lifetime: usize) -> Vec<WalkViolation> {
        let mut found = Vec::new();
        for i in 0..self.q.len() {
            let mut path = vec![i];
            self.walk(i, 0, lifetime, &mut path, &mut found);
        }
        found
    }

    fn walk(
        &self,
        sec: usize,
        entry: usize,
        lifetime: usize,
        path: &mut Vec<usize>,
        found: &mut Vec<WalkViolation>,
    ) {
        let start = self.section_start(sec);
        let q = self.q[sec];
        let at_q = entry + (q - start) as usize;
        if at_q >= lifetime {
            return;
        }
        let starts = |path: &[usize]| path.iter().map(|&s| self.section_start(s)).collect();
        // branching at q happens at step at_q + 1 <= lifetime
        for &earlier in &path[..path.len() - 1] {
            let l = self.q[earlier];
            if self.shares_target(l, q) {
                found.push(WalkViolation::BlankRequirement {
                    q,
                    earlier: l,
                    walk: starts(path),
                });
                return;
            }
        }
        for (label, &target) in self.jump[&q].iter().enumerate() {
            let next = self.section_index(target);
            if path.contains(&next) {
                let mut walk: Vec<Orbit> = starts(path);
                walk.push(target);
                found.push(WalkViolation::Loop { q, label, walk });
                continue;
            }
            path.push(next);
            self.walk(next, at_q + 1, lifetime, path, found);
            path.pop();
        }
    }
}

/// Section lengths in `[d_min, 2K/Q - d_min]` adjusted to sum to K.
fn draw_layout<R: Rng + ?Sized>(p: &ModelParams, rng: &mut R) -> Vec<Orbit> {
    let n = p.branch_points;
    let k = p.orbit_len;
    let lo = p.d_min;
    let hi = (2 * k / n).saturating_sub(p.d_min).max(lo);
    let mut lens: Vec<usize> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let mut total: usize = lens.iter().sum();
    while total != k {
        let i = rng.random_range(0..n);
        if total < k && (lens[i] < hi || lens.iter().all(|&l| l >= hi)) {
            lens[i] += 1;
            total += 1;
        } else if total > k && lens[i] > lo {
            lens[i] -= 1;
            total -= 1;
        }
    }
    let mut q = Vec::with_capacity(n);
    let mut acc = 0;
    for l in lens {
        acc += l;
        q.push(acc as Orbit);
    }
    q
}

/// Forward reach from `k_in`: indices occupied at times `0..=lifetime`.
/// The last layer holds the writes pending at the end of the lifetime.
fn lifetime_reach(draft: &Draft, k_in: Orbit, lifetime: usize) -> BTreeSet<Orbit> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![(k_in, 0usize)];
    while let Some((k, t)) = stack.pop() {
        seen.insert(k);
        if t == lifetime {
            continue;
        }
        if draft.q.binary_search(&k).is_ok() {
            for &target in &draft.jump[&k] {
                stack.push((target, t + 1));
            }
        } else {
            stack.push((k + 1, t + 1));
        }
    }
    seen
}

/// Builds the full topology, including recall sets, from a fresh stream
/// seeded with `params.seed`.
pub fn build_topology_seeded(params: &ModelParams) -> Result<OrbitTopology, TopologyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let topo = build_topology(params, &mut rng)?;
    build_recall_sets(topo, &mut rng)
}

/// Draws layout, register, jumps and records. Recall sets are filled by
/// [`build_recall_sets`].
pub fn build_topology<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
) -> Result<OrbitTopology, TopologyError> {
    params.validate()?;
    let n_split = params.n_split;
    let subsets = params.register_subsets() as usize;

    let q = draw_layout(params, rng);

    let mut shuffled = q.clone();
    shuffled.shuffle(rng);
    let mut register = vec![Vec::new(); subsets];
    let mut label_of = BTreeMap::new();
    for (i, &k) in shuffled.iter().enumerate() {
        register[i % subsets].push(k);
        label_of.insert(k, i % subsets);
    }
    for subset in &mut register {
        subset.sort_unstable();
    }

    let mut draft = Draft {
        q,
        label_of,
        register,
        jump: BTreeMap::new(),
    };
    for &k in &draft.q.clone() {
        let targets = (0..n_split)
            .map(|b| {
                let kp = *draft.pool(k, b, n_split, subsets).choose(rng).expect("J[s] nonempty");
                draft.section_start(draft.section_index(kp))
            })
            .collect();
        draft.jump.insert(k, targets);
    }

    // local repair: redraw every offending jump, then re-verify
    let budget = 64 * draft.q.len() * n_split + 1000;
    let mut redraws = 0;
    loop {
        let violations = draft.verify(params.lifetime);
        if violations.is_empty() {
            break;
        }
        if redraws >= budget {
            let cycle = match violations.into_iter().next().expect("nonempty") {
                WalkViolation::Loop { walk, .. } | WalkViolation::BlankRequirement { walk, .. } => {
                    walk
                }
            };
            return Err(TopologyError::LoopFreedom {
                lifetime: params.lifetime,
                redraws,
                cycle,
            });
        }
        let mut fixes = BTreeSet::new();
        for violation in violations {
            let fix = match violation {
                WalkViolation::Loop { q, label, .. } => (q, label),
                WalkViolation::BlankRequirement { q, earlier, .. } => {
                    // move whichever of the two jumps hits the shared target
                    let pick = if rng.random_bool(0.5) { q } else { earlier };
                    let other = if pick == q { earlier } else { q };
                    let label = draft.jump[&pick]
                        .iter()
                        .position(|t| draft.jump[&other].contains(t))
                        .expect("shared target");
                    (pick, label)
                }
            };
            fixes.insert(fix);
        }
        for (q, label) in fixes {
            let kp = *draft
                .pool(q, label, n_split, subsets)
                .choose(rng)
                .expect("J[s] nonempty");
            draft.jump.get_mut(&q).expect("q in Q")[label] = draft.section_start(draft.section_index(kp));
            redraws += 1;
        }
    }

    let k_in: Orbit = 1;
    let k_max = params.orbit_len as Orbit;
    let writing: BTreeSet<Orbit> = match params.record_scope {
        RecordScope::All => (1..=k_max).collect(),
        RecordScope::Lifetime => lifetime_reach(&draft, k_in, params.lifetime),
    };
    let needed = writing.len() * params.w_red;
    if needed > params.records {
        return Err(TopologyError::RecordCapacity {
            needed,
            capacity: params.records,
        });
    }
    let mut writes = vec![Vec::new(); params.orbit_len + 1];
    let mut next: RecordId = 0;
    for &k in &writing {
        writes[k as usize] = (next..next + params.w_red as RecordId).collect();
        next += params.w_red as RecordId;
    }

    let mut triggers = Vec::new();
    for &k in &writing {
        if draft.q.binary_search(&k).is_err() {
            triggers.push(*writes[k as usize].choose(rng).expect("w_red >= 1"));
        }
    }
    triggers.sort_unstable();

    let mut jump = vec![Vec::new(); params.orbit_len + 1];
    let mut blank_req = vec![Vec::new(); params.orbit_len + 1];
    for &k in &draft.q {
        let set: BTreeSet<RecordId> = draft
            .q
            .iter()
            .filter(|&&l| draft.shares_target(l, k))
            .flat_map(|&l| writes[l as usize].iter().copied())
            .collect();
        blank_req[k as usize] = set.into_iter().collect();
        jump[k as usize] = draft.jump[&k].clone();
    }

    let mut topo = OrbitTopology {
        params: params.clone(),
        k_in,
        n_records: needed,
        q: draft.q,
        register: draft.register,
        writes,
        triggers,
        jump,
        blank_req,
        recall: BTreeMap::new(),
        recall_len: BTreeMap::new(),
        recall_clamps: 0,
        writer: Vec::new(),
        predecessors: BTreeMap::new(),
    };
    topo.rebuild_lookups()?;
    Ok(topo)
}

/// Draws L(m) for every trigger and fills A_R(m) by backward search.
pub fn build_recall_sets<R: Rng + ?Sized>(
    mut topo: OrbitTopology,
    rng: &mut R,
) -> Result<OrbitTopology, TopologyError> {
    let p = topo.params.clone();
    let cap = p.records as f64;
    let mut recall = BTreeMap::new();
    let mut lens = BTreeMap::new();
    let mut clamps = 0;
    for &m in &topo.triggers.clone() {
        let len = pareto::sample_pareto(p.alpha, p.l0, cap, rng)?;
        let per_section = topo.recalls_per_section(len);
        let writer = topo.writer_of(m).ok_or(TopologyError::NotATrigger(m))?;
        let mut set = BTreeSet::new();
        for node in topo.backward_tree(m)? {
            let pool = topo.recall_pool(m, writer, node);
            let take = if per_section > pool.len() {
                if !pool.is_empty() {
                    clamps += 1;
                }
                pool.len()
            } else {
                per_section
            };
            for i in rand::seq::index::sample(rng, pool.len(), take) {
                set.insert(pool[i]);
            }
        }
        recall.insert(m, set.into_iter().collect());
        lens.insert(m, len);
    }
    topo.recall = recall;
    topo.recall_len = lens;
    topo.recall_clamps = clamps;
    Ok(topo)
}
