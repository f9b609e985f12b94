//! Increment laws and their β-analytic quantities.
//!
//! A branching random walk is driven by a vector Y = (Y_0, …, Y_{d−1}) of
//! child increments; here the components are i.i.d. copies of a single
//! component law. Everything downstream is controlled by the
//! log-moment-generating function of the total child weight,
//!
//! ```text
//!   φ(β) = log E[Σ_{i<d} e^{βY_i}] = log d + log E[e^{βY}],
//! ```
//!
//! its derivative φ′, and the critical inverse temperature
//! β_c = sup{β > 0 : βφ′(β) < φ(β)}. All φ evaluations use closed forms
//! (never Monte Carlo) in overflow-stable arrangements, since β_c feeds the
//! hardness experiments and must be exact to float precision.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, normal_quantile};

/// Component law of the child-increment vector (components i.i.d.).
#[derive(Debug, Clone, PartialEq)]
pub enum IncrementFamily {
    /// Standard normal N(0, 1).
    StandardGaussian,
    /// Finitely many atoms `(value, probability)`.
    FiniteSupport { support: Vec<(f64, f64)> },
    /// Value 1 with probability p, value 0 otherwise.
    Bernoulli { p: f64 },
}

/// An increment law together with the branching factor d.
///
/// Immutable after construction; all methods are pure and safe to call
/// concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementModel {
    family: IncrementFamily,
    d: u32,
    /// Cumulative probabilities for FiniteSupport quantiles (empty otherwise).
    cumulative: Vec<f64>,
}

/// Probability mass below which a FiniteSupport atom is rejected.
const PROB_SUM_TOL: f64 = 1e-12;

/// Geometric scan limit for the β_c bracket: β up to 2^20.
const BETA_SCAN_MAX_EXP: u32 = 20;

impl IncrementModel {
    /// Standard Gaussian increments with branching factor `d`.
    pub fn gaussian(d: u32) -> Result<Self> {
        Self::new(IncrementFamily::StandardGaussian, d)
    }

    /// Bernoulli(p) increments (p ∈ [0, 1]) with branching factor `d`.
    pub fn bernoulli(d: u32, p: f64) -> Result<Self> {
        Self::new(IncrementFamily::Bernoulli { p }, d)
    }

    /// Finite-support increments from `(value, probability)` atoms.
    pub fn finite_support(d: u32, support: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(IncrementFamily::FiniteSupport { support }, d)
    }

    pub fn new(family: IncrementFamily, d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!("branching factor d must be ≥ 2, got {d}")));
        }
        if d > 256 {
            return Err(Error::Domain(format!(
                "branching factor d must be ≤ 256 (paths store one byte per digit), got {d}"
            )));
        }
        let mut model = Self { family, d, cumulative: Vec::new() };
        match &mut model.family {
            IncrementFamily::StandardGaussian => {}
            IncrementFamily::Bernoulli { p } => {
                if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                    return Err(Error::Domain(format!("Bernoulli p must lie in [0, 1], got {p}")));
                }
            }
            IncrementFamily::FiniteSupport { support } => {
                if support.is_empty() {
                    return Err(Error::Domain("finite support must be nonempty".into()));
                }
                let mut total = 0.0;
                for &(v, p) in support.iter() {
                    if !v.is_finite() {
                        return Err(Error::Domain(format!("support value {v} is not finite")));
                    }
                    if !p.is_finite() || p <= 0.0 {
                        return Err(Error::Domain(format!(
                            "support probability {p} must be strictly positive"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::Domain(format!(
                        "support probabilities sum to {total}, expected 1 within {PROB_SUM_TOL}"
                    )));
                }
                // Renormalize exactly and precompute the CDF for quantiles.
                for pair in support.iter_mut() {
                    pair.1 /= total;
                }
                let mut cum = 0.0;
                model.cumulative = support
                    .iter()
                    .map(|&(_, p)| {
                        cum += p;
                        cum
                    })
                    .collect();
                if let Some(last) = model.cumulative.last_mut() {
                    *last = 1.0;
                }
            }
        }
        // Assumption check: φ finite on an open interval around 0 — automatic
        // for these families, asserted defensively at construction.
        for beta in [-1.0, 1.0] {
            let phi = model.log_mgf(beta);
            if !phi.is_finite() {
                return Err(Error::Numerical(format!("φ({beta}) is not finite at construction")));
            }
        }
        Ok(model)
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn family(&self) -> &IncrementFamily {
        &self.family
    }

    /// φ(β) = log d + log E[e^(βY)], in overflow-stable closed form.
    pub fn log_mgf(&self, beta: f64) -> f64 {
        let logd = (self.d as f64).ln();
        match &self.family {
            IncrementFamily::StandardGaussian => logd + 0.5 * beta * beta,
            IncrementFamily::Bernoulli { p } => {
                // log(1−p+pe^β), rearranged for large positive β.
                if beta > 0.0 {
                    logd + beta + (p + (1.0 - p) * (-beta).exp()).ln()
                } else {
                    logd + (1.0 - p + p * beta.exp()).ln()
                }
            }
            IncrementFamily::FiniteSupport { support } => {
                let terms: Vec<f64> =
                    support.iter().map(|&(v, p)| p.ln() + beta * v).collect();
                logd + log_sum_exp(&terms)
            }
        }
    }

    /// φ′(β), in matching closed form.
    pub fn log_mgf_derivative(&self, beta: f64) -> f64 {
        match &self.family {
            IncrementFamily::StandardGaussian => beta,
            IncrementFamily::Bernoulli { p } => {
                // pe^β / (1−p+pe^β), rearranged for large positive β.
                if beta > 0.0 {
                    p / (p + (1.0 - p) * (-beta).exp())
                } else {
                    let e = beta.exp();
                    p * e / (1.0 - p + p * e)
                }
            }
            IncrementFamily::FiniteSupport { support } => {
                // Softmax-weighted mean of the atom values.
                let terms: Vec<f64> =
                    support.iter().map(|&(v, p)| p.ln() + beta * v).collect();
                let lse = log_sum_exp(&terms);
                terms
                    .iter()
                    .zip(support)
                    .map(|(&t, &(v, _))| (t - lse).exp() * v)
                    .sum()
            }
        }
    }

    /// β_c = sup{β > 0 : βφ′(β) < φ(β)}, or +∞ when no finite β crosses.
    ///
    /// g(β) = βφ′(β) − φ(β) starts at −log d and is nondecreasing; the root
    /// is bracketed by a geometric scan β ∈ {1, 2, 4, …, 2^20} and then
    /// refined by 200 bisection steps.
    pub fn critical_beta(&self) -> Result<f64> {
        let g = |beta: f64| beta * self.log_mgf_derivative(beta) - self.log_mgf(beta);
        let mut lo = 0.0;
        let mut hi = None;
        for k in 0..=BETA_SCAN_MAX_EXP {
            let beta = (1u64 << k) as f64;
            let v = g(beta);
            if v.is_nan() {
                return Err(Error::Numerical(format!("g({beta}) evaluated to NaN")));
            }
            // Strict: boundary-lattice laws (d·P(Y = y_max) = 1) have g → 0
            // from below, and g evaluates to exactly 0.0 once the slack
            // underflows — that is not a crossing.
            if v > 0.0 {
                hi = Some(beta);
                break;
            }
            lo = beta;
        }
        let Some(mut hi) = hi else {
            return Ok(f64::INFINITY);
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Free energy lim (1/βN) log Σ e^(βX_v): φ(β)/β below β_c, frozen at
    /// φ(β_c)/β_c above.
    pub fn free_energy(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::Domain(format!("free energy requires β > 0, got {beta}")));
        }
        let beta_c = self.critical_beta()?;
        if beta < beta_c {
            Ok(self.log_mgf(beta) / beta)
        } else {
            Ok(self.log_mgf(beta_c) / beta_c)
        }
    }

    /// Quantile of the component law, mapping u ∈ (0, 1) to an increment.
    pub fn component_quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        match &self.family {
            IncrementFamily::StandardGaussian => normal_quantile(u),
            IncrementFamily::Bernoulli { p } => {
                if u < 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
            IncrementFamily::FiniteSupport { support } => {
                for (k, &c) in self.cumulative.iter().enumerate() {
                    if u < c {
                        return support[k].0;
                    }
                }
                support.last().expect("nonempty support").0
            }
        }
    }
}

impl fmt::Display for IncrementModel {
    /// Canonical spec-string form, re-parseable by `FromStr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            IncrementFamily::StandardGaussian => write!(f, "gaussian:d={}", self.d),
            IncrementFamily::Bernoulli { p } => write!(f, "bernoulli:d={},p={}", self.d, p),
            IncrementFamily::FiniteSupport { support } => {
                write!(f, "finite:d={},support=[", self.d)?;
                for (i, (v, p)) in support.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({v},{p})")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl FromStr for IncrementModel {
    type Err = Error;

    /// Parses model spec strings:
    /// `gaussian:d=2`, `bernoulli:d=2,p=0.3`,
    /// `finite:d=3,support=[(-1,0.5),(1,0.5)]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("model spec `{s}` is missing `family:...`")))?;
        let mut params = split_params(rest)?;
        let d = take_param(&mut params, "d")?
            .parse::<u32>()
            .map_err(|e| Error::Parse(format!("invalid d: {e}")))?;
        let model = match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" => IncrementModel::gaussian(d)?,
            "bernoulli" => {
                let p = take_param(&mut params, "p")?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("invalid p: {e}")))?;
                IncrementModel::bernoulli(d, p)?
            }
            "finite" => {
                let sup = take_param(&mut params, "support")?;
                IncrementModel::finite_support(d, parse_support(&sup)?)?
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown family `{other}` (expected gaussian, bernoulli, or finite)"
                )))
            }
        };
        if let Some((k, _)) = params.into_iter().next() {
            return Err(Error::Parse(format!("unexpected parameter `{k}`")));
        }
        Ok(model)
    }
}

/// Splits `k=v,k=v,...` while keeping bracketed lists intact.
fn split_params(s: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '[' | '(' => {
                depth += 1;
                cur.push(ch);
            }
            ']' | ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Parse(format!("unbalanced brackets in `{s}`")))?;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced brackets in `{s}`")));
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.into_iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn take_param(params: &mut Vec<(String, String)>, key: &str) -> Result<String> {
    let pos = params
        .iter()
        .position(|(k, _)| k == key)
        .ok_or_else(|| Error::Parse(format!("missing parameter `{key}`")))?;
    Ok(params.remove(pos).1)
}

/// Parses `[(v,p),(v,p),...]` into atom pairs.
fn parse_support(s: &str) -> Result<Vec<(f64, f64)>> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Parse(format!("support must be bracketed, got `{s}`")))?;
    let inner = inner.trim();
    if inner.is_empty() {
        return Err(Error::Parse("support list is empty".into()));
    }
    let mut atoms = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    let mut items = Vec::new();
    for ch in inner.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Parse(format!("unbalanced parens in `{s}`")))?;
                cur.push(ch);
            }
            ',' if depth == 0 => items.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced parens in `{s}`")));
    }
    if !cur.is_empty() {
        items.push(cur);
    }
    for item in items {
        let item = item.trim();
        let body = item
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("expected (value,prob), got `{item}`")))?;
        let (v, p) = body
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected (value,prob), got `{item}`")))?;
        let v = v
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("invalid support value `{v}`: {e}")))?;
        let p = p
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("invalid support probability `{p}`: {e}")))?;
        atoms.push((v, p));
    }
    Ok(atoms)
}
