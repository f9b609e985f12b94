//! Supercritical hardness experiment: z-exceptional vertices at depth
//! ⌊N/2⌋, Monte Carlo tail estimates for the maximum, the rescaled-path
//! excursion statistic, and naive search whose probe count the exceptional
//! probability controls.
//!
//! A depth-⌊N/2⌋ vertex w is z-exceptional when some depth-N descendant u
//! satisfies X_u − X_w − m·N/2 > z√N, with m the speed of the maximum.
//! Finding such a vertex is the bottleneck for any sampler that must land
//! in the region where the low-temperature Gibbs measure concentrates, and
//! the number of probes a naive search needs is geometric with success
//! probability P(E_w).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::increments::{IncrementFamily, IncrementModel};
use crate::prf::{derive_seed, UniformStream};
use crate::tree::{BrwInstance, QueryLedger, VertexPath};

/// Result of one naive search over depth-⌊N/2⌋ roots.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    pub z: f64,
    pub found: bool,
    /// Number of depth-⌊N/2⌋ roots examined.
    pub probes: u64,
    /// Total ledger count across all probed subtrees.
    pub tau: u64,
    /// On success, the exceptional root w and its witness leaf u.
    pub witness: Option<(VertexPath, VertexPath)>,
}

/// Monte Carlo estimate of P(E_w) with binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceptionalEstimate {
    #[serde(rename = "N")]
    pub n: u32,
    pub z: f64,
    pub trials: u64,
    pub successes: u64,
    pub phat: f64,
    pub stderr: f64,
}

/// One row of a maximum-tail table: empirical P(max ≥ mN + x).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub x: f64,
    pub trials: u64,
    pub successes: u64,
    pub phat: f64,
}

/// Probe order for naive_search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOrder {
    /// A fresh uniform order derived deterministically from the instance seed.
    Random,
    /// Roots in index order 0, 1, 2, ….
    Lexicographic,
}

impl std::str::FromStr for ProbeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ProbeOrder::Random),
            "lex" | "lexicographic" => Ok(ProbeOrder::Lexicographic),
            other => Err(Error::Parse(format!(
                "unknown probe order {other:?} (expected random|lexicographic)"
            ))),
        }
    }
}

/// The linear speed m = lim max_{|u|=n} X_u / n of the maximum.
///
/// Equals φ′(β_c) when β_c is finite; for bounded laws with d·p_max ≥ 1 the
/// critical point is infinite and the speed degenerates to the largest
/// support point (attained by a positive density of paths).
pub fn typical_speed(model: &IncrementModel) -> Result<f64> {
    let beta_c = model.critical_beta()?;
    if beta_c.is_finite() {
        return Ok(model.log_mgf_derivative(beta_c));
    }
    let top = match model.family() {
        IncrementFamily::StandardGaussian => {
            unreachable!("Gaussian critical beta is finite")
        }
        IncrementFamily::FiniteSupport { support } => support
            .iter()
            .map(|&(y, _)| y)
            .fold(f64::NEG_INFINITY, f64::max),
        IncrementFamily::Bernoulli { p } => {
            if *p > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    };
    Ok(top)
}

/// The exceptionality threshold on subtree-relative values:
/// X_u − X_w > m·N/2 + z√N.
fn threshold(instance: &BrwInstance, z: f64) -> Result<f64> {
    let n = instance.depth() as f64;
    Ok(typical_speed(instance.model())? * n / 2.0 + z * n.sqrt())
}

fn check_subtree_cap(instance: &BrwInstance, levels: u32) -> Result<()> {
    let mut size: u128 = 1;
    for _ in 0..levels {
        size = size.saturating_mul(instance.d() as u128);
        if size > instance.cap() as u128 {
            return Err(Error::CapExceeded { requested: size, cap: instance.cap() });
        }
    }
    Ok(())
}

/// Depth-first witness search below w, charging every visited vertex.
fn find_witness(
    instance: &BrwInstance,
    path: &VertexPath,
    value_rel: f64,
    threshold: f64,
    ledger: &mut QueryLedger,
) -> Result<Option<VertexPath>> {
    let incs = instance.child_increments(path, Some(ledger))?;
    for (c, &inc) in incs.iter().enumerate() {
        let v = value_rel + inc;
        let child = path.child(c as u8);
        if child.len() == instance.depth() {
            if v > threshold {
                return Ok(Some(child));
            }
        } else if let Some(u) = find_witness(instance, &child, v, threshold, ledger)? {
            return Ok(Some(u));
        }
    }
    Ok(None)
}

/// Whether w (at depth ⌊N/2⌋) has a depth-N descendant u with
/// X_u − X_w − m·N/2 > z√N. Exhaustive with early exit; every examined
/// vertex is charged to the ledger.
pub fn is_exceptional(
    instance: &BrwInstance,
    w: &VertexPath,
    z: f64,
    ledger: &mut QueryLedger,
) -> Result<bool> {
    let n = instance.depth();
    if w.len() != n / 2 {
        return Err(Error::Domain(format!(
            "exceptionality is defined for depth-⌊N/2⌋ vertices; got |w|={} with N={n}",
            w.len()
        )));
    }
    check_subtree_cap(instance, n - w.len())?;
    let t = threshold(instance, z)?;
    Ok(find_witness(instance, w, 0.0, t, ledger)?.is_some())
}

/// Monte Carlo P(E_w) over independent environments: one fresh instance per
/// trial (seed derived from `base_seed` and the trial index), each probing
/// the leftmost depth-⌊N/2⌋ root.
pub fn exceptional_probability(
    model: &IncrementModel,
    n: u32,
    z: f64,
    trials: u64,
    base_seed: u64,
) -> Result<ExceptionalEstimate> {
    if trials == 0 {
        return Err(Error::Domain("exceptional_probability needs trials ≥ 1".into()));
    }
    let w = VertexPath::from_index(model.d(), n / 2, 0);
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let inst = BrwInstance::new(model.clone(), n, derive_seed(base_seed, &[t]));
            let mut ledger = QueryLedger::new();
            Ok(is_exceptional(&inst, &w, z, &mut ledger)? as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let phat = successes as f64 / trials as f64;
    let stderr = (phat * (1.0 - phat) / trials as f64).sqrt();
    Ok(ExceptionalEstimate { n, z, trials, successes, phat, stderr })
}

/// Probes depth-⌊N/2⌋ roots in the given order until a z-exceptional one is
/// found or `budget` probes are spent. Random order is a uniform partial
/// permutation derived from the instance seed (sparse Fisher–Yates), so a
/// search on a given instance is reproducible.
pub fn naive_search(
    instance: &BrwInstance,
    z: f64,
    probe_order: ProbeOrder,
    budget: u64,
) -> Result<SearchRecord> {
    let n = instance.depth();
    let h = n / 2;
    check_subtree_cap(instance, h)?; // the probe index space itself
    check_subtree_cap(instance, n - h)?;
    let num_roots = (instance.d() as u64).pow(h);
    let t = threshold(instance, z)?;
    let mut ledger = QueryLedger::new();
    let mut stream = UniformStream::new(derive_seed(instance.seed(), &[0x5ea2c4]));
    let mut swaps: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
    let mut probes = 0u64;
    let mut found = None;
    for i in 0..budget.min(num_roots) {
        let idx = match probe_order {
            ProbeOrder::Lexicographic => i,
            ProbeOrder::Random => {
                // Sparse Fisher–Yates: the i-th entry of a uniform permutation.
                let j = i + stream.next_index(num_roots - i);
                let vj = swaps.get(&j).copied().unwrap_or(j);
                let vi = swaps.get(&i).copied().unwrap_or(i);
                swaps.insert(j, vi);
                vj
            }
        };
        let w = VertexPath::from_index(instance.d(), h, idx);
        probes += 1;
        if let Some(u) = find_witness(instance, &w, 0.0, t, &mut ledger)? {
            found = Some((w, u));
            break;
        }
    }
    Ok(SearchRecord {
        z,
        found: found.is_some(),
        probes,
        tau: ledger.count(),
        witness: found,
    })
}

/// The rescaled ancestor-line statistic Z^N_{k/N} = (m·k − X_{u_k})/√N for
/// k = 0..N, where u_k is the depth-k ancestor of `leaf`.
pub fn rescaled_path(instance: &BrwInstance, leaf: &VertexPath) -> Result<Vec<f64>> {
    let n = instance.depth();
    if leaf.len() != n {
        return Err(Error::Domain(format!(
            "rescaled_path needs a depth-{n} leaf, got depth {}",
            leaf.len()
        )));
    }
    let m = typical_speed(instance.model())?;
    let sqrt_n = (n as f64).sqrt();
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(0.0);
    for k in 1..=n {
        let x = instance.vertex_value(&leaf.prefix(k), None)?;
        out.push((m * k as f64 - x) / sqrt_n);
    }
    Ok(out)
}

/// Monte Carlo tail table: empirical P(max_{|u|=N} X_u ≥ mN + x) for each
/// x, sharing one batch of simulated maxima across all thresholds (so the
/// table is monotone by construction).
pub fn max_tail_probe(
    model: &IncrementModel,
    n: u32,
    xs: &[f64],
    trials: u64,
    base_seed: u64,
) -> Result<Vec<TailPoint>> {
    if trials == 0 {
        return Err(Error::Domain("max_tail_probe needs trials ≥ 1".into()));
    }
    let maxima: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = BrwInstance::new(model.clone(), n, derive_seed(base_seed, &[0x3a11, t]));
            inst.max_value(n, None)
        })
        .collect::<Result<_>>()?;
    let m = typical_speed(model)?;
    Ok(xs
        .iter()
        .map(|&x| {
            let level = m * n as f64 + x;
            let successes = maxima.iter().filter(|&&mx| mx >= level).count() as u64;
            TailPoint { x, trials, successes, phat: successes as f64 / trials as f64 }
        })
        .collect())
}

/// Calibrates the exceptionality level z so that P(E_w) ≈ `target` at depth
/// `n`: over `trials` independent environments the best margin of the probed
/// subtree, (max_u (X_u − X_w) − m·n/2)/√n, is recorded, and the returned z
/// is its empirical (1 − target)-quantile. A vertex is z-exceptional exactly
/// when its margin strictly exceeds z, so by construction the exceedance
/// fraction at the returned level is the largest one ≤ `target`.
pub fn calibrate_z(
    model: &IncrementModel,
    n: u32,
    target: f64,
    trials: u64,
    base_seed: u64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("calibration target must lie in (0, 1), got {target}")));
    }
    if trials == 0 {
        return Err(Error::Domain("calibrate_z needs trials ≥ 1".into()));
    }
    let m = typical_speed(model)?;
    let h = n / 2;
    let mut margins: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let inst = BrwInstance::new(model.clone(), n, derive_seed(base_seed, &[0xca11b, t]));
            check_subtree_cap(&inst, n - h)?;
            let w = VertexPath::from_index(inst.d(), h, 0);
            let vals = inst.enumerate_leaf_values(&w, n - h, None)?;
            let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((best - m * n as f64 / 2.0) / (n as f64).sqrt())
        })
        .collect::<Result<_>>()?;
    margins.sort_by(f64::total_cmp);
    // Smallest recorded margin with at most target·trials strictly above it.
    let rank = ((1.0 - target) * trials as f64).ceil() as usize;
    Ok(margins[rank.clamp(1, margins.len()) - 1])
}
