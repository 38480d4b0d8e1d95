//! Weight machinery and the centralized randomized schedule update: the
//! reference semantics the distributed protocol must reproduce.

use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::schedule::Schedule;
use serde::{Deserialize, Serialize};

/// How the global maximum queue size enters the weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QmaxMode {
    /// True global maximum, recomputed every slot.
    Exact,
    /// Round-robin broadcast estimate: one linecard reports per slot.
    BroadcastEstimate,
    /// Skip the floor term entirely: W = f(Q) on the local queue alone.
    Conjecture,
}

/// Identifier for the damping function g. Only the logarithmic choice is
/// implemented; the enum exists because it is a config-file key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GChoice {
    #[default]
    LogELog,
}

/// Parameters of the weight function W = f(Q~).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightConfig {
    /// Admissibility margin; enters the lower-bound floor on effective queues.
    pub epsilon: f64,
    pub qmax_mode: QmaxMode,
    #[serde(default)]
    pub g_choice: GChoice,
}

impl WeightConfig {
    pub fn conjecture() -> Self {
        Self {
            epsilon: 0.1,
            qmax_mode: QmaxMode::Conjecture,
            g_choice: GChoice::LogELog,
        }
    }

    pub fn exact(epsilon: f64) -> Self {
        Self {
            epsilon,
            qmax_mode: QmaxMode::Exact,
            g_choice: GChoice::LogELog,
        }
    }
}

/// g(x) = log(e + log(1+x)). Satisfies g >= 1 and g' >= 0 on x >= 0.
pub fn weight_g(x: f64) -> f64 {
    (std::f64::consts::E + (1.0 + x).ln()).ln()
}

fn weight_g_prime(x: f64) -> f64 {
    1.0 / ((1.0 + x) * (std::f64::consts::E + (1.0 + x).ln()))
}

/// f(x) = log(1+x) / g(x): increasing, concave, with f' <= 1/(1+x).
pub fn weight_f(x: f64) -> f64 {
    (1.0 + x).ln() / weight_g(x)
}

/// Closed-form derivative of f.
pub fn weight_f_prime(x: f64) -> f64 {
    let g = weight_g(x);
    1.0 / ((1.0 + x) * g) - (1.0 + x).ln() * weight_g_prime(x) / (g * g)
}

/// Evaluates (f, g, f') at one point, rejecting negative arguments.
pub fn weight_functions(x: f64) -> Result<(f64, f64, f64)> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight functions need x >= 0, got {x}"
        )));
    }
    Ok((weight_f(x), weight_g(x), weight_f_prime(x)))
}

/// Monotone inverse of f by bisection with a doubling bracket, to relative
/// tolerance 1e-10.
pub fn inverse_f(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0f64;
    while weight_f(hi) < y {
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    let mut lo = 0.0f64;
    loop {
        let mid = 0.5 * (lo + hi);
        if weight_f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            return 0.5 * (lo + hi);
        }
    }
}

/// Effective queue length: the raw length floored at
/// f^-1( (epsilon / 2N^2) * f(q_max) ).
pub fn effective_queue(q: u64, q_max: u64, epsilon: f64, n: usize) -> f64 {
    let floor_arg = epsilon / (2.0 * (n * n) as f64) * weight_f(q_max as f64);
    inverse_f(floor_arg).max(q as f64)
}

/// Logistic activation probability p = e^W / (1 + e^W), computed without
/// overflow for large W. Lies in [0.5, 1) for W >= 0.
pub fn activation_probability(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// Per-crosspoint weight under `cfg`, given the queue length and the global
/// maximum (ignored in conjecture mode).
pub fn crosspoint_weight(cfg: &WeightConfig, q: u64, q_max: u64, n: usize) -> f64 {
    match cfg.qmax_mode {
        QmaxMode::Conjecture => weight_f(q as f64),
        QmaxMode::Exact | QmaxMode::BroadcastEstimate => {
            weight_f(effective_queue(q, q_max, cfg.epsilon, n))
        }
    }
}

/// Round-robin broadcast estimator of the global maximum queue size. Exactly
/// one linecard reports per slot, index = slot mod N; the estimate is the max
/// over last-reported values.
#[derive(Debug, Clone)]
pub struct QmaxEstimator {
    last_reported: Vec<Option<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QmaxEstimate {
    pub value: u64,
    /// False until every linecard has reported at least once.
    pub warmed_up: bool,
}

impl QmaxEstimator {
    pub fn new(n: usize) -> Self {
        Self {
            last_reported: vec![None; n],
        }
    }

    /// Records the slot's single report: linecard `slot mod N` broadcasts its
    /// local maximum. Returns the resulting estimate.
    pub fn record(&mut self, slot: u64, local_max: u64) -> QmaxEstimate {
        let n = self.last_reported.len();
        self.last_reported[(slot % n as u64) as usize] = Some(local_max);
        self.estimate()
    }

    pub fn estimate(&self) -> QmaxEstimate {
        let warmed_up = self.last_reported.iter().all(|r| r.is_some());
        let value = self
            .last_reported
            .iter()
            .filter_map(|r| *r)
            .max()
            .unwrap_or(0);
        QmaxEstimate { value, warmed_up }
    }
}

/// Convenience wrapper matching the operation shape: feed the slot's report
/// and read back the estimate.
pub fn qmax_estimate(est: &mut QmaxEstimator, slot: u64, local_maxima: &[u64]) -> QmaxEstimate {
    let n = est.last_reported.len();
    let who = (slot % n as u64) as usize;
    est.record(slot, local_maxima[who])
}

/// One step of the randomized schedule update.
///
/// Every crosspoint outside `h` keeps its previous state. A crosspoint
/// selected by `h` re-draws its activation when it was active, activates with
/// probability p when all its neighbors were inactive, and is forced off
/// otherwise. Coins are consumed in ascending input order, one uniform draw
/// per updatable crosspoint, so that distributed runs can share the stream.
///
/// `designee_weights[i]` is W for the crosspoint `(i, h(i))`.
pub fn basic_update(
    x_prev: &Schedule,
    h: &Permutation,
    designee_weights: &[f64],
    coins: &mut dyn FnMut() -> f64,
) -> Schedule {
    let n = x_prev.n();
    assert_eq!(h.n(), n, "permutation size mismatch");
    assert_eq!(designee_weights.len(), n, "one weight per selected pair");
    let mut next = x_prev.clone();
    for i in 0..n {
        let j = h.output_of(i);
        let p = activation_probability(designee_weights[i]);
        if x_prev.is_active(i, j) {
            if coins() < p {
                // stays active
            } else {
                next.deactivate(i, j);
            }
        } else if !x_prev.has_active_neighbor(i, j) {
            if coins() < p {
                next.activate(i, j)
                    .expect("activation cannot conflict: h is a permutation");
            }
        }
        // Neighbor active in the previous slot: forced off, no coin.
    }
    next
}
