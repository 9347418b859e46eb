//! Equal-modulus branch counting for unequal amplitudes.
//!
//! A state `a|A> + b|B>` spread over `n` slots has moduli `|c_k|` with
//! `sum_{k<=m} |c_k|^2 = |a|^2` and `sum_{k>m} |c_k|^2 = |b|^2`. The phase
//! volume is proportional to `prod |c_k|`, maximized at `m = |a|^2 n` with
//! every modulus `1/sqrt(n)`.

use serde::Serialize;
use thiserror::Error;

use crate::params::{ModelParams, ParamError};

const INTEGRAL_TOL: f64 = 1e-9;
pub const DEFAULT_GRID: usize = 240;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BornError {
    #[error("|a|^2 = {0} outside (0, 1)")]
    Weight(f64),
    #[error("n = {0} must be >= 2")]
    Slots(usize),
    #[error("brute force supports n <= 6, got {0}")]
    BruteForceSize(usize),
    #[error("grid {0} must be >= 200")]
    Grid(usize),
    #[error(
        "|a|^2 n = {product} is not an integer; nearest m and objective: {}",
        candidates.iter().map(|(m, f)| format!("m = {m}: {f:e}")).collect::<Vec<_>>().join(", ")
    )]
    NonIntegral {
        a_sq: f64,
        n: usize,
        product: f64,
        /// `(m, prod |c_k|)` at floor and ceil of `|a|^2 n`, best first.
        candidates: Vec<(usize, f64)>,
    },
    #[error("no n <= {limit} makes every |a|^2 n integral")]
    NoCommonSlots { limit: usize },
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSpec {
    pub a_sq: f64,
    pub n: usize,
    pub m: usize,
    pub moduli: Vec<f64>,
    /// `prod |c_k|`.
    pub objective: f64,
}

fn check(a_sq: f64, n: usize) -> Result<(), BornError> {
    if !(a_sq > 0.0 && a_sq < 1.0) {
        return Err(BornError::Weight(a_sq));
    }
    if n < 2 {
        return Err(BornError::Slots(n));
    }
    Ok(())
}

/// Best objective for a fixed `m`: equal moduli within each group.
pub fn objective_at(a_sq: f64, n: usize, m: usize) -> f64 {
    if m == 0 || m >= n {
        return 0.0;
    }
    let (mf, rest) = (m as f64, (n - m) as f64);
    ((a_sq / mf).ln() * mf / 2.0 + ((1.0 - a_sq) / rest).ln() * rest / 2.0).exp()
}

pub fn optimal_split(a_sq: f64, n: usize) -> Result<SplitSpec, BornError> {
    check(a_sq, n)?;
    let product = a_sq * n as f64;
    let rounded = product.round();
    if (product - rounded).abs() > INTEGRAL_TOL {
        let lo = (product.floor() as usize).max(1);
        let hi = (product.ceil() as usize).min(n - 1);
        let mut candidates: Vec<(usize, f64)> = [lo, hi]
            .into_iter()
            .map(|m| (m, objective_at(a_sq, n, m)))
            .collect();
        candidates.dedup_by_key(|c| c.0);
        candidates.sort_by(|x, y| y.1.total_cmp(&x.1));
        return Err(BornError::NonIntegral {
            a_sq,
            n,
            product,
            candidates,
        });
    }
    let m = rounded as usize;
    Ok(SplitSpec {
        a_sq,
        n,
        m,
        moduli: vec![1.0 / (n as f64).sqrt(); n],
        objective: (n as f64).powf(-(n as f64) / 2.0),
    })
}

/// Maximizes `sum ln sqrt(x_i)` over `count` positive grid shares of
/// `total`, each share a multiple of `total / grid`. Returns the log
/// objective and the squared moduli.
fn best_group(total: f64, count: usize, grid: usize) -> (f64, Vec<f64>) {
    let unit = total / grid as f64;
    let gain = |x: usize| 0.5 * (x as f64 * unit).ln();
    // best[j][s]: j moduli using s grid units
    let mut best = vec![vec![f64::NEG_INFINITY; grid + 1]; count + 1];
    let mut choice = vec![vec![0usize; grid + 1]; count + 1];
    best[0][0] = 0.0;
    for j in 1..=count {
        for s in j..=grid {
            for x in 1..=s - (j - 1) {
                let v = best[j - 1][s - x] + gain(x);
                if v > best[j][s] {
                    best[j][s] = v;
                    choice[j][s] = x;
                }
            }
        }
    }
    let mut shares = Vec::with_capacity(count);
    let mut s = grid;
    for j in (1..=count).rev() {
        let x = choice[j][s];
        shares.push(x as f64 * unit);
        s -= x;
    }
    (best[count][grid], shares)
}

/// Grid search over the moduli of both groups for every `m`.
pub fn brute_force_split(a_sq: f64, n: usize, grid: usize) -> Result<SplitSpec, BornError> {
    check(a_sq, n)?;
    if n > 6 {
        return Err(BornError::BruteForceSize(n));
    }
    if grid < 200 {
        return Err(BornError::Grid(grid));
    }
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for m in 1..n {
        let (la, sa) = best_group(a_sq, m, grid);
        let (lb, sb) = best_group(1.0 - a_sq, n - m, grid);
        let v = la + lb;
        if best.as_ref().is_none_or(|b| v > b.0) {
            let moduli = sa.into_iter().chain(sb).map(f64::sqrt).collect();
            best = Some((v, m, moduli));
        }
    }
    let (v, m, moduli) = best.expect("n >= 2");
    Ok(SplitSpec {
        a_sq,
        n,
        m,
        moduli,
        objective: v.exp(),
    })
}

/// Smallest `n >= 2` making every `|a|^2 n` an integer.
pub fn common_slots(a_sq_list: &[f64], limit: usize) -> Result<usize, BornError> {
    for &a in a_sq_list {
        check(a, 2)?;
    }
    (2..=limit)
        .find(|&n| {
            a_sq_list.iter().all(|&a| {
                let p = a * n as f64;
                (p - p.round()).abs() <= INTEGRAL_TOL
            })
        })
        .ok_or(BornError::NoCommonSlots { limit })
}

/// Parameters for `n`-way equal-amplitude splitting that resolves every
/// weight in `a_sq_list` by branch counting.
pub fn nway_config(params: &ModelParams, a_sq_list: &[f64]) -> Result<ModelParams, BornError> {
    let n = common_slots(a_sq_list, 1 << 16)?;
    let mut out = params.clone();
    out.n_split = n;
    out.validate()?;
    Ok(out)
}

/// Mean branch count after `steps` generations of `n`-way splitting.
pub fn nway_mean_branches(sigma: f64, n: usize, steps: usize) -> f64 {
    (1.0 + (n as f64 - 1.0) * sigma).powi(steps as i32)
}
