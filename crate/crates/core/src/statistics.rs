//! Galton-Watson branching, recall-count laws and extreme-order spacing.
//!
//! Every Monte Carlo trial draws from its own ChaCha8 stream selected by
//! `(seed, trial)`, so results do not depend on the rayon pool size.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::evolution::{branch_recall_count, evolve, BranchState, EvolutionError};
use crate::ks::ks_two_sample;
use crate::pareto;
use crate::topology::OrbitTopology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("spacing needs at least 2 recall counts, got {0}")]
    TooFewCounts(usize),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> StatsError {
    StatsError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GwParams {
    /// Probability that a member splits in one generation.
    pub sigma: f64,
    #[serde(rename = "T")]
    pub lifetime: usize,
    pub trials: usize,
    pub seed: u64,
    /// Offspring of a splitting member.
    pub n_split: usize,
}

impl GwParams {
    pub fn new(sigma: f64, lifetime: usize, trials: usize, seed: u64) -> Self {
        GwParams {
            sigma,
            lifetime,
            trials,
            seed,
            n_split: 2,
        }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(invalid("sigma", format!("{} outside [0, 1)", self.sigma)));
        }
        if self.lifetime == 0 {
            return Err(invalid("T", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be >= 1"));
        }
        if self.n_split < 2 {
            return Err(invalid("n_split", "must be >= 2"));
        }
        Ok(())
    }

    /// Mean offspring per member, `1 + (n - 1) sigma`.
    pub fn mu(&self) -> f64 {
        1.0 + (self.n_split as f64 - 1.0) * self.sigma
    }

    /// Normalization `C_T = mu^T`.
    pub fn c_t(&self) -> f64 {
        self.mu().powi(self.lifetime as i32)
    }
}

/// Stream for one Monte Carlo trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwRun {
    /// `Z_0..=Z_T`.
    #[serde(rename = "Z")]
    pub z: Vec<u64>,
    /// Total progeny `Z_1 + .. + Z_T`.
    #[serde(rename = "Y")]
    pub y: u64,
    #[serde(rename = "W_hat")]
    pub w_hat: f64,
}

impl GwRun {
    pub fn z_t(&self) -> u64 {
        *self.z.last().unwrap()
    }
}

/// One realization of the branching process.
pub fn simulate_gw<R: Rng + ?Sized>(params: &GwParams, rng: &mut R) -> GwRun {
    let extra = params.n_split as u64 - 1;
    let mut z = Vec::with_capacity(params.lifetime + 1);
    let mut cur = 1u64;
    let mut y = 0u64;
    z.push(cur);
    for _ in 0..params.lifetime {
        let splits = if params.sigma > 0.0 {
            Binomial::new(cur, params.sigma)
                .expect("sigma validated")
                .sample(rng)
        } else {
            0
        };
        cur += extra * splits;
        y += cur;
        z.push(cur);
    }
    GwRun {
        z,
        y,
        w_hat: cur as f64 / params.c_t(),
    }
}

/// `params.trials` independent realizations.
pub fn simulate_gw_trials(params: &GwParams) -> Result<Vec<GwRun>, StatsError> {
    params.validate()?;
    Ok((0..params.trials as u64)
        .into_par_iter()
        .map(|i| simulate_gw(params, &mut trial_rng(params.seed, i)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCheck {
    pub mean: f64,
    pub std_err: f64,
    pub expected: f64,
    /// `(mean - expected) / std_err`.
    pub z_score: f64,
}

/// Empirical `E[Z_T]` against `mu^T`.
pub fn gw_mean_check(params: &GwParams) -> Result<MeanCheck, StatsError> {
    let runs = simulate_gw_trials(params)?;
    let vals: Vec<f64> = runs.iter().map(|r| r.z_t() as f64).collect();
    let (mean, std_err) = mean_and_se(&vals);
    let expected = params.c_t();
    let z_score = if std_err > 0.0 {
        (mean - expected) / std_err
    } else if mean == expected {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MeanCheck {
        mean,
        std_err,
        expected,
        z_score,
    })
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Distance `j = T - t` of a trigger from the newest generation:
/// geometric `P_j ∝ mu^-j`, truncated to `0..=T`.
#[derive(Debug, Clone, Copy)]
pub struct TriggerLaw {
    lifetime: usize,
    /// `1/mu`.
    q: f64,
    /// `1 - q^(T+1)`.
    mass: f64,
}

impl TriggerLaw {
    pub fn new(mu: f64, lifetime: usize) -> Self {
        let q = 1.0 / mu;
        TriggerLaw {
            lifetime,
            q,
            mass: 1.0 - q.powi(lifetime as i32 + 1),
        }
    }

    pub fn from_params(params: &GwParams) -> Self {
        Self::new(params.mu(), params.lifetime)
    }

    pub fn lifetime(&self) -> usize {
        self.lifetime
    }

    /// Renormalized `P_j`.
    pub fn pmf(&self, j: usize) -> f64 {
        if j > self.lifetime {
            return 0.0;
        }
        if self.q >= 1.0 {
            return 1.0 / (self.lifetime as f64 + 1.0);
        }
        (1.0 - self.q) * self.q.powi(j as i32) / self.mass
    }

    pub fn sample_j<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if self.q >= 1.0 {
            return ((u * (self.lifetime as f64 + 1.0)) as usize).min(self.lifetime);
        }
        if self.q == 0.0 {
            return 0;
        }
        let j = ((1.0 - u * self.mass).ln() / self.q.ln()).floor();
        (j.max(0.0) as usize).min(self.lifetime)
    }

    /// Generation `t = T - j` in which the trigger sits.
    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.lifetime - self.sample_j(rng)
    }
}

pub fn generation_of_trigger<R: Rng + ?Sized>(params: &GwParams, rng: &mut R) -> usize {
    TriggerLaw::from_params(params).sample_t(rng)
}

/// Scale of the recall-count Pareto tail:
/// `R0^alpha = L0^alpha * sum_t P_{T-t} (t/T)^alpha`.
pub fn compute_r0(alpha: f64, l0: f64, params: &GwParams) -> f64 {
    let law = TriggerLaw::from_params(params);
    let t_max = params.lifetime as f64;
    let sum: f64 = (0..=params.lifetime)
        .map(|t| law.pmf(params.lifetime - t) * (t as f64 / t_max).powf(alpha))
        .sum();
    l0 * sum.powf(1.0 / alpha)
}

/// Recall-count tail `(R0/R)^alpha`, valid for `R >= L0`.
pub fn r_ccdf(alpha: f64, r0: f64, r: f64) -> f64 {
    if r <= r0 {
        1.0
    } else {
        (r0 / r).powf(alpha)
    }
}

#[derive(Debug, Clone, Copy)]
struct RecallLaw {
    trigger: TriggerLaw,
    alpha: f64,
    l0: f64,
}

impl RecallLaw {
    fn new(alpha: f64, l0: f64, params: &GwParams) -> Result<Self, StatsError> {
        pareto::sample_pareto(alpha, l0, f64::INFINITY, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| invalid("alpha/L0", e.to_string()))?;
        Ok(RecallLaw {
            trigger: TriggerLaw::from_params(params),
            alpha,
            l0,
        })
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = self.trigger.sample_t(rng) as f64;
        let l = pareto::draw(self.alpha, self.l0, f64::INFINITY, rng);
        t / self.trigger.lifetime() as f64 * l
    }
}

/// `y` independent recall counts `R = (t/T) L`.
pub fn sample_r<R: Rng + ?Sized>(
    y: usize,
    alpha: f64,
    l0: f64,
    params: &GwParams,
    rng: &mut R,
) -> Result<Vec<f64>, StatsError> {
    if y == 0 {
        return Err(invalid("Y", "must be >= 1"));
    }
    params.validate()?;
    let law = RecallLaw::new(alpha, l0, params)?;
    Ok((0..y).map(|_| law.draw(rng)).collect())
}

/// Running largest and second-largest.
#[derive(Debug, Clone, Copy)]
pub struct Top2 {
    pub first: f64,
    pub second: f64,
    pub count: usize,
}

impl Default for Top2 {
    fn default() -> Self {
        Top2 {
            first: f64::NEG_INFINITY,
            second: f64::NEG_INFINITY,
            count: 0,
        }
    }
}

impl Top2 {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if x > self.first {
            self.second = self.first;
            self.first = x;
        } else if x > self.second {
            self.second = x;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremeReport {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// `D - log2(count)`.
    #[serde(rename = "log2E")]
    pub log2e: f64,
    pub count: usize,
}

fn extreme_from_top2(top: Top2) -> Result<ExtremeReport, StatsError> {
    if top.count < 2 {
        return Err(StatsError::TooFewCounts(top.count));
    }
    let d = top.first - top.second;
    Ok(ExtremeReport {
        r1: top.first,
        r2: top.second,
        d,
        log2e: d - (top.count as f64).log2(),
        count: top.count,
    })
}

pub fn spacing_report(r_list: &[f64]) -> Result<ExtremeReport, StatsError> {
    let mut top = Top2::default();
    for &r in r_list {
        top.push(r);
    }
    extreme_from_top2(top)
}

#[derive(Debug, Clone, Copy)]
pub struct ExcessParams {
    pub gw: GwParams,
    pub alpha: f64,
    pub l0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessTrial {
    #[serde(rename = "Y")]
    pub y: u64,
    #[serde(rename = "Z_T")]
    pub z_t: u64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// `D - log2 Y`.
    #[serde(rename = "log2E")]
    pub log2e: f64,
    /// `D - log2 Z_T`.
    #[serde(rename = "log2E_Z")]
    pub log2e_z: f64,
    /// `(sigma/C_T)^(1/alpha) log2E / R0`.
    pub rescaled: f64,
    /// `D / (R0 Y^(1/alpha))`.
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Quantiles {
            p05: q(0.05),
            p25: q(0.25),
            median: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessSummary {
    pub sigma: f64,
    #[serde(rename = "T")]
    pub lifetime: usize,
    pub alpha: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    pub mean_z_t: f64,
    pub mean_y: f64,
    #[serde(rename = "log2E")]
    pub log2e: Quantiles,
    #[serde(rename = "log2E_Z")]
    pub log2e_z: Quantiles,
    pub rescaled: Quantiles,
    pub fraction_log2e_positive: f64,
    /// KS distance of `x` between lowest and highest `Y` quartiles.
    pub strata_ks: f64,
    #[serde(skip)]
    pub per_trial: Vec<ExcessTrial>,
}

pub const TRIALS_CSV_HEADER: &str = "Y,R1,R2,D,log2E";

impl ExcessSummary {
    pub fn log2e_values(&self) -> Vec<f64> {
        self.per_trial.iter().map(|t| t.log2e).collect()
    }

    pub fn rescaled_values(&self) -> Vec<f64> {
        self.per_trial.iter().map(|t| t.rescaled).collect()
    }

    pub fn write_trials_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TRIALS_CSV_HEADER}")?;
        for t in &self.per_trial {
            writeln!(out, "{},{},{},{},{}", t.y, t.r1, t.r2, t.d, t.log2e)?;
        }
        Ok(())
    }
}

/// KS distance of the normalized spacing between the lowest and highest
/// quartiles of `Y`.
pub fn strata_ks(trials: &[ExcessTrial]) -> f64 {
    let mut by_y: Vec<&ExcessTrial> = trials.iter().collect();
    by_y.sort_by_key(|t| t.y);
    let q = by_y.len() / 4;
    if q == 0 {
        return f64::NAN;
    }
    let low: Vec<f64> = by_y[..q].iter().map(|t| t.x).collect();
    let high: Vec<f64> = by_y[by_y.len() - q..].iter().map(|t| t.x).collect();
    ks_two_sample(&low, &high)
}

fn excess_trial(p: &ExcessParams, law: &RecallLaw, r0: f64, trial: u64) -> ExcessTrial {
    let mut rng = trial_rng(p.gw.seed, trial);
    let run = simulate_gw(&p.gw, &mut rng);
    let mut top = Top2::default();
    for _ in 0..run.y {
        top.push(law.draw(&mut rng));
    }
    let rep = extreme_from_top2(top).expect("Y >= T >= 2");
    let scale = (p.gw.sigma / p.gw.c_t()).powf(1.0 / p.alpha) / r0;
    ExcessTrial {
        y: run.y,
        z_t: run.z_t(),
        r1: rep.r1,
        r2: rep.r2,
        d: rep.d,
        log2e: rep.log2e,
        log2e_z: rep.d - (run.z_t() as f64).log2(),
        rescaled: scale * rep.log2e,
        x: rep.d / (r0 * (run.y as f64).powf(1.0 / p.alpha)),
    }
}

/// Per trial: branching process, `Y` recall counts, spacing of the top two.
pub fn excess_distribution(p: &ExcessParams) -> Result<ExcessSummary, StatsError> {
    p.gw.validate()?;
    if p.gw.lifetime < 2 {
        return Err(invalid("T", "must be >= 2 so that Y >= 2"));
    }
    let law = RecallLaw::new(p.alpha, p.l0, &p.gw)?;
    let r0 = compute_r0(p.alpha, p.l0, &p.gw);
    let per_trial: Vec<ExcessTrial> = (0..p.gw.trials as u64)
        .into_par_iter()
        .map(|i| excess_trial(p, &law, r0, i))
        .collect();
    let col = |f: fn(&ExcessTrial) -> f64| per_trial.iter().map(f).collect::<Vec<f64>>();
    let n = per_trial.len() as f64;
    Ok(ExcessSummary {
        sigma: p.gw.sigma,
        lifetime: p.gw.lifetime,
        alpha: p.alpha,
        l0: p.l0,
        trials: p.gw.trials,
        seed: p.gw.seed,
        r0,
        c_t: p.gw.c_t(),
        mean_z_t: per_trial.iter().map(|t| t.z_t as f64).sum::<f64>() / n,
        mean_y: per_trial.iter().map(|t| t.y as f64).sum::<f64>() / n,
        log2e: Quantiles::of(&col(|t| t.log2e)),
        log2e_z: Quantiles::of(&col(|t| t.log2e_z)),
        rescaled: Quantiles::of(&col(|t| t.rescaled)),
        fraction_log2e_positive: per_trial.iter().filter(|t| t.log2e > 0.0).count() as f64 / n,
        strata_ks: strata_ks(&per_trial),
        per_trial,
    })
}

/// Hill estimate of the tail exponent from the `k` largest values.
pub fn hill_estimator(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(v.len() - 1);
    let base = v[k];
    k as f64 / v[..k].iter().map(|x| (x / base).ln()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeReport {
    #[serde(rename = "T")]
    pub steps: usize,
    pub sigma: f64,
    /// Branch counts `Z_0..=Z_T` of the evolved tree.
    #[serde(rename = "Z")]
    pub z: Vec<usize>,
    /// `mu^T` at matched sigma.
    pub expected_z_t: f64,
    /// Trigger writes counted during evolution.
    pub trigger_writes: u64,
    /// `1 + Y_{T-1} - (Z_T - 1)/(n - 1)`.
    pub progeny_bookkeeping: f64,
    /// Written triggers across final branches.
    pub observed_triggers: usize,
    pub mean_r: f64,
    /// Mean of `(t_m/T) L(m)` over the same triggers.
    pub predicted_mean_r: f64,
    /// Mean of `l(m)` times the sections the branch entered up to `t_m`.
    pub sectioned_mean_r: f64,
    pub sum_r: f64,
    pub sum_predicted_r: f64,
    pub sum_sectioned_r: f64,
}

impl TreeReport {
    pub fn r_discrepancy(&self) -> f64 {
        self.mean_r / self.predicted_mean_r - 1.0
    }

    pub fn sectioned_discrepancy(&self) -> f64 {
        self.mean_r / self.sectioned_mean_r - 1.0
    }
}

/// Sections a branch has entered during its first `steps` steps.
fn sections_entered(branch: &BranchState, topo: &OrbitTopology, steps: usize) -> usize {
    let mut k = topo.k_in();
    let mut labels = branch.path.iter();
    let mut sections = 1;
    for _ in 0..steps {
        if topo.is_branch_point(k) {
            let label = *labels.next().expect("path covers all splits") as usize;
            k = topo.targets(k)[label];
            sections += 1;
        } else {
            k += 1;
        }
    }
    sections
}

/// Evolves `topo` for `steps` and compares the tree with the branching
/// process and recall laws it embeds.
pub fn tree_vs_theory(topo: &OrbitTopology, steps: usize) -> Result<TreeReport, StatsError> {
    let state = evolve(topo, steps)?;
    let n = topo.n_split() as f64;
    let sigma = topo.params().sigma();
    let z = state.history.clone();
    let y_prev: usize = z[1..z.len() - 1].iter().sum();
    let z_t = *z.last().unwrap() as f64;
    let (mut sum_r, mut sum_pred, mut sum_sect, mut count) = (0.0, 0.0, 0.0, 0usize);
    for b in &state.branches {
        for tr in branch_recall_count(b, topo, state.t).per_trigger {
            let l = topo.recall_len(tr.m).unwrap_or(0.0);
            sum_r += tr.recalled as f64;
            sum_pred += tr.written_at as f64 / steps as f64 * l;
            // the writing step is the `written_at`-th
            let entered = sections_entered(b, topo, tr.written_at - 1);
            sum_sect += (entered * topo.recalls_per_section(l)) as f64;
            count += 1;
        }
    }
    let denom = count.max(1) as f64;
    Ok(TreeReport {
        steps,
        sigma,
        expected_z_t: (1.0 + (n - 1.0) * sigma).powi(steps as i32),
        trigger_writes: state.trigger_writes,
        progeny_bookkeeping: 1.0 + y_prev as f64 - (z_t - 1.0) / (n - 1.0),
        observed_triggers: count,
        mean_r: sum_r / denom,
        predicted_mean_r: sum_pred / denom,
        sectioned_mean_r: sum_sect / denom,
        sum_r,
        sum_predicted_r: sum_pred,
        sum_sectioned_r: sum_sect,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ks::ks_ccdf_tail;

    #[test]
    fn zero_sigma_is_deterministic_line() {
        let p = GwParams::new(0.0, 50, 1, 1);
        let run = simulate_gw(&p, &mut trial_rng(1, 0));
        assert!(run.z.iter().all(|&z| z == 1));
        assert_eq!(run.y, 50);
    }

    #[test]
    fn paths_nondecreasing_and_progeny_sums() {
        let p = GwParams::new(0.05, 100, 200, 9);
        for run in simulate_gw_trials(&p).unwrap() {
            assert_eq!(run.z[0], 1);
            assert!(run.z.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(run.y, run.z[1..].iter().sum::<u64>());
        }
    }

    #[test]
    fn gw_mean_sigma_002() {
        let c = gw_mean_check(&GwParams::new(0.02, 100, 10_000, 77)).unwrap();
        assert!((c.expected - 7.244_646_118).abs() < 1e-6);
        assert!(c.z_score.abs() < 3.0, "{c:?}");
    }

    #[test]
    fn three_way_gw_mean() {
        let mut p = GwParams::new(0.01, 60, 10_000, 5);
        p.n_split = 3;
        let c = gw_mean_check(&p).unwrap();
        assert!((c.expected - 1.02f64.powi(60)).abs() < 1e-9);
        assert!(c.z_score.abs() < 3.0, "{c:?}");
    }

    #[test]
    fn trials_validated() {
        assert!(simulate_gw_trials(&GwParams::new(0.02, 10, 0, 1)).is_err());
        assert!(simulate_gw_trials(&GwParams::new(1.5, 10, 1, 1)).is_err());
    }

    #[test]
    fn truncated_pmf_normalized() {
        for &(mu, t) in &[(1.02, 100), (1.5, 10), (1.0, 7), (50.0, 3)] {
            let law = TriggerLaw::new(mu, t);
            let s: f64 = (0..=t).map(|j| law.pmf(j)).sum();
            assert!((s - 1.0).abs() < 1e-12, "mu {mu}");
        }
    }

    #[test]
    fn large_mu_concentrates_at_newest_generation() {
        let p = GwParams {
            sigma: 0.999_999,
            lifetime: 20,
            trials: 1,
            seed: 0,
            n_split: 1_000_000,
        };
        let mut rng = trial_rng(3, 0);
        assert!((0..1000).all(|_| generation_of_trigger(&p, &mut rng) == 20));
        assert!((compute_r0(1.5, 10.0, &p) - 10.0).abs() < 1e-4);
    }

    #[test]
    fn generation_pmf_chi_square() {
        let p = GwParams::new(0.02, 100, 1, 4);
        let law = TriggerLaw::from_params(&p);
        let n = 100_000;
        let mut counts = vec![0usize; p.lifetime + 1];
        let mut rng = trial_rng(11, 0);
        for _ in 0..n {
            let t = generation_of_trigger(&p, &mut rng);
            assert!(t <= p.lifetime);
            counts[p.lifetime - t] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let e = law.pmf(j) * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // df = 100; Wilson-Hilferty 0.999 quantile is about 149.4
        let df = p.lifetime as f64;
        let crit = df * (1.0 - 2.0 / (9.0 * df) + 3.09 * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} crit {crit}");
    }

    #[test]
    fn r0_forward_equals_reverse_sum() {
        let p = GwParams::new(0.02, 100, 1, 0);
        let (alpha, l0) = (1.5, 10.0);
        let mu: f64 = 1.02;
        let q = 1.0 / mu;
        let norm: f64 = (0..=100).rev().map(|j| q.powi(j)).sum();
        let rev: f64 = (0..=100)
            .rev()
            .map(|t: i32| q.powi(100 - t) / norm * (t as f64 / 100.0).powf(alpha))
            .sum();
        let r0 = compute_r0(alpha, l0, &p);
        assert!((r0 - l0 * rev.powf(1.0 / alpha)).abs() < 1e-12);
        assert!(r0 <= l0);
    }

    #[test]
    fn recall_counts_bounded_and_heavy_tailed() {
        let p = GwParams::new(0.02, 100, 1, 0);
        let (alpha, l0) = (1.5, 10.0);
        assert_eq!(sample_r(1, alpha, l0, &p, &mut trial_rng(0, 0)).unwrap().len(), 1);
        let mut r = sample_r(100_000, alpha, l0, &p, &mut trial_rng(21, 0)).unwrap();
        let h = hill_estimator(&r, 2000);
        assert!((h - alpha).abs() < 0.1, "hill {h}");
        let r0 = compute_r0(alpha, l0, &p);
        let d = ks_ccdf_tail(&mut r, l0, |x| r_ccdf(alpha, r0, x));
        assert!(d < 0.02, "ks {d}");
    }

    #[test]
    fn spacing_examples() {
        let rep = spacing_report(&[5.0, 3.0, 3.0]).unwrap();
        assert_eq!(rep.d, 2.0);
        assert!((rep.log2e - (2.0 - 3f64.log2())).abs() < 1e-15);
        assert_eq!(spacing_report(&[1.0]), Err(StatsError::TooFewCounts(1)));
    }

    #[test]
    fn top2_agrees_with_sort() {
        let mut rng = trial_rng(8, 0);
        for _ in 0..1000 {
            let n = rng.random_range(2..50);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64).collect();
            let rep = spacing_report(&v).unwrap();
            let mut s = v.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            assert_eq!((rep.r1, rep.r2), (s[0], s[1]));
            assert!(rep.d >= 0.0);
        }
    }

    #[test]
    fn excess_summary_is_consistent() {
        let p = ExcessParams {
            gw: GwParams::new(0.02, 60, 500, 3),
            alpha: 1.5,
            l0: 10.0,
        };
        let s = excess_distribution(&p).unwrap();
        assert_eq!(s.per_trial.len(), 500);
        for t in &s.per_trial {
            assert!(t.r1 >= t.r2 && t.d >= 0.0);
            assert!((t.log2e - (t.d - (t.y as f64).log2())).abs() < 1e-12);
        }
        let again = excess_distribution(&p).unwrap();
        assert_eq!(s, again);
    }
}
