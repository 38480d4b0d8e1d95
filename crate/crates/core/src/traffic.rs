//! Traffic patterns, admissibility, and per-slot arrival generation for
//! Bernoulli i.i.d. and truncated-Pareto bursty processes.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Arrival-rate patterns. Every pattern loads each input with `sigma`
/// cells/slot in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficPattern {
    /// Every destination equally likely: rate sigma/n everywhere.
    Uniform,
    /// Rates at one input fall off linearly over destinations (i + j) mod n,
    /// with common difference 2*sigma / (n*(n+1)).
    LinDiagonal,
    /// A fraction omega of each input's load goes to its diagonal output,
    /// the rest spread evenly over the other n-1 outputs.
    HotSpot,
}

impl std::fmt::Display for TrafficPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TrafficPattern::Uniform => "uniform",
            TrafficPattern::LinDiagonal => "lin-diagonal",
            TrafficPattern::HotSpot => "hot-spot",
        };
        f.write_str(s)
    }
}

/// `n x n` matrix of arrival rates in cells/slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    lambda: Vec<f64>,
}

impl RateMatrix {
    pub fn new(n: usize, lambda: Vec<f64>) -> Result<Self> {
        if n == 0 || lambda.len() != n * n {
            return Err(Error::InvalidDimension(format!(
                "rate matrix needs {} entries, got {}",
                n * n,
                lambda.len()
            )));
        }
        if lambda.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
            return Err(Error::InvalidParameter(
                "arrival rates must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { n, lambda })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate(&self, input: usize, output: usize) -> f64 {
        self.lambda[input * self.n + output]
    }

    pub fn row_sum(&self, input: usize) -> f64 {
        self.lambda[input * self.n..(input + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, output: usize) -> f64 {
        (0..self.n).map(|i| self.rate(i, output)).sum()
    }
}

/// Admissibility verdict per the strict row/column-sum criterion, together
/// with the margin `1 - max(row sums, col sums)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    pub epsilon: f64,
}

pub fn admissibility(rates: &RateMatrix) -> Admissibility {
    let mut max_load = 0.0f64;
    for k in 0..rates.n() {
        max_load = max_load.max(rates.row_sum(k)).max(rates.col_sum(k));
    }
    Admissibility {
        admissible: max_load < 1.0,
        epsilon: 1.0 - max_load,
    }
}

/// Builds the rate matrix for `pattern` at per-input load `sigma`.
///
/// `omega` is the hot-spot factor and is required (in [0, 1]) exactly for the
/// hot-spot pattern. Loads `sigma >= 1` are allowed; they simply produce an
/// inadmissible matrix.
pub fn make_rates(
    pattern: TrafficPattern,
    n: usize,
    sigma: f64,
    omega: Option<f64>,
) -> Result<RateMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let mut lambda = vec![0.0; n * n];
    match pattern {
        TrafficPattern::Uniform => {
            let r = sigma / n as f64;
            lambda.fill(r);
        }
        TrafficPattern::LinDiagonal => {
            // Arithmetic progression over destinations (i + j) mod n: first
            // term 2*sigma/(n+1), common difference 2*sigma/(n*(n+1)); the row
            // telescopes to exactly sigma.
            let nf = n as f64;
            let first = 2.0 * sigma / (nf + 1.0);
            let diff = 2.0 * sigma / (nf * (nf + 1.0));
            for i in 0..n {
                for j in 0..n {
                    lambda[i * n + (i + j) % n] = first - diff * j as f64;
                }
            }
        }
        TrafficPattern::HotSpot => {
            let w = omega.ok_or_else(|| {
                Error::InvalidParameter("hot-spot pattern requires omega".into())
            })?;
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!(
                    "omega must lie in [0, 1], got {w}"
                )));
            }
            if n < 2 {
                return Err(Error::InvalidDimension(
                    "hot-spot pattern needs at least 2 ports".into(),
                ));
            }
            let off = (1.0 - w) * sigma / (n as f64 - 1.0);
            for i in 0..n {
                for j in 0..n {
                    lambda[i * n + j] = if i == j { w * sigma } else { off };
                }
            }
        }
    }
    RateMatrix::new(n, lambda.into_iter().map(|l| l.min(1.0)).collect())
}

/// One slot of independent Bernoulli draws; returns the 0/1 indicator in
/// row-major order.
pub fn bernoulli_arrivals<R: Rng>(rates: &RateMatrix, rng: &mut R) -> Vec<bool> {
    let n = rates.n();
    let mut out = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let l = rates.rate(i, j);
            if l > 0.0 && rng.random::<f64>() < l {
                out[i * n + j] = true;
            }
        }
    }
    out
}

/// Truncated Pareto burst-length law `P(l) = c / l^alpha` on `{1..l_max}`,
/// sampled by inverse CDF over the precomputed table.
#[derive(Debug, Clone)]
pub struct ParetoBurst {
    alpha: f64,
    l_max: u64,
    cdf: Vec<f64>,
}

impl ParetoBurst {
    pub fn new(alpha: f64, l_max: u64) -> Result<Self> {
        if alpha <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "pareto exponent must exceed 1, got {alpha}"
            )));
        }
        if l_max < 1 {
            return Err(Error::InvalidParameter("l_max must be at least 1".into()));
        }
        let mut cdf = Vec::with_capacity(l_max as usize);
        let mut acc = 0.0;
        for l in 1..=l_max {
            acc += (l as f64).powf(-alpha);
            cdf.push(acc);
        }
        let norm = acc;
        for c in &mut cdf {
            *c /= norm;
        }
        Ok(Self { alpha, l_max, cdf })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>();
        let idx = self.cdf.partition_point(|&c| c < u);
        (idx as u64 + 1).min(self.l_max)
    }

    /// Mean burst length by direct summation of `l * P(l)`.
    pub fn mean(&self) -> f64 {
        exact_burst_mean(self.alpha, self.l_max)
    }
}

/// Draws one burst length from the truncated Pareto law.
pub fn pareto_burst<R: Rng>(alpha: f64, l_max: u64, rng: &mut R) -> Result<u64> {
    Ok(ParetoBurst::new(alpha, l_max)?.sample(rng))
}

/// Closed-summation mean of the truncated Pareto law.
pub fn exact_burst_mean(alpha: f64, l_max: u64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for l in 1..=l_max {
        let lf = l as f64;
        num += lf.powf(1.0 - alpha);
        den += lf.powf(-alpha);
    }
    num / den
}

#[derive(Debug, Clone)]
enum BurstPhase {
    On { remaining: u64, dest: usize },
    Off { remaining: u64 },
}

/// Stateful per-slot arrival generator.
#[derive(Debug, Clone)]
pub enum TrafficModel {
    Bernoulli {
        rates: RateMatrix,
    },
    Bursty {
        rates: RateMatrix,
        pareto: ParetoBurst,
        /// Geometric parameter of the OFF law on {0, 1, ...}, per input.
        off_q: Vec<f64>,
        /// Cumulative destination distribution per input row.
        dest_cdf: Vec<Vec<f64>>,
        phase: Vec<BurstPhase>,
    },
}

impl TrafficModel {
    pub fn bernoulli(rates: RateMatrix) -> Self {
        TrafficModel::Bernoulli { rates }
    }

    /// Per-input on/off source: ON delivers one cell/slot to a single
    /// destination for a Pareto-drawn length; OFF is geometric on {0,1,...}
    /// with mean `burst_mean * (1 - sigma) / sigma`, so the long-run load per
    /// input is the row sum of `rates`.
    pub fn bursty(rates: RateMatrix, alpha: f64, l_max: u64) -> Result<Self> {
        let pareto = ParetoBurst::new(alpha, l_max)?;
        let mean_on = pareto.mean();
        let n = rates.n();
        let mut off_q = Vec::with_capacity(n);
        let mut dest_cdf = Vec::with_capacity(n);
        for i in 0..n {
            let sigma = rates.row_sum(i);
            if !(0.0..1.0).contains(&sigma) || sigma == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "bursty mode needs per-input load in (0, 1), input {i} has {sigma}"
                )));
            }
            let mean_off = mean_on * (1.0 - sigma) / sigma;
            off_q.push(1.0 / (1.0 + mean_off));
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for j in 0..n {
                acc += rates.rate(i, j) / sigma;
                cdf.push(acc);
            }
            dest_cdf.push(cdf);
        }
        let phase = vec![BurstPhase::Off { remaining: 0 }; n];
        Ok(TrafficModel::Bursty {
            rates,
            pareto,
            off_q,
            dest_cdf,
            phase,
        })
    }

    pub fn n(&self) -> usize {
        match self {
            TrafficModel::Bernoulli { rates } => rates.n(),
            TrafficModel::Bursty { rates, .. } => rates.n(),
        }
    }

    pub fn rates(&self) -> &RateMatrix {
        match self {
            TrafficModel::Bernoulli { rates } => rates,
            TrafficModel::Bursty { rates, .. } => rates,
        }
    }

    /// Appends this slot's arrivals as `(input, output)` pairs.
    pub fn arrivals_into<R: Rng>(&mut self, rng: &mut R, out: &mut Vec<(usize, usize)>) {
        match self {
            TrafficModel::Bernoulli { rates } => {
                let n = rates.n();
                for i in 0..n {
                    for j in 0..n {
                        let l = rates.rate(i, j);
                        if l > 0.0 && rng.random::<f64>() < l {
                            out.push((i, j));
                        }
                    }
                }
            }
            TrafficModel::Bursty {
                pareto,
                off_q,
                dest_cdf,
                phase,
                ..
            } => {
                for (i, ph) in phase.iter_mut().enumerate() {
                    loop {
                        match ph {
                            BurstPhase::On { remaining, dest } => {
                                out.push((i, *dest));
                                *remaining -= 1;
                                if *remaining == 0 {
                                    let off = sample_geometric(off_q[i], rng);
                                    *ph = BurstPhase::Off { remaining: off };
                                }
                                break;
                            }
                            BurstPhase::Off { remaining } => {
                                if *remaining == 0 {
                                    let len = pareto.sample(rng);
                                    let u = rng.random::<f64>();
                                    let dest = dest_cdf[i].partition_point(|&c| c < u);
                                    *ph = BurstPhase::On {
                                        remaining: len,
                                        dest: dest.min(dest_cdf[i].len() - 1),
                                    };
                                } else {
                                    *remaining -= 1;
                                    break;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Geometric on {0, 1, 2, ...} with success probability `q` (mean (1-q)/q).
fn sample_geometric<R: Rng>(q: f64, rng: &mut R) -> u64 {
    if q >= 1.0 {
        return 0;
    }
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    (u.ln() / (1.0 - q).ln()).floor() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_rates() {
        let r = make_rates(TrafficPattern::Uniform, 32, 0.9, None).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert_abs_diff_eq!(r.rate(i, j), 0.9 / 32.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn lin_diagonal_two_ports() {
        // Two-term progression: rates (0.6, 0.3), difference 2*0.9/6 = 0.3.
        let r = make_rates(TrafficPattern::LinDiagonal, 2, 0.9, None).unwrap();
        assert_abs_diff_eq!(r.rate(0, 0), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rate(0, 1), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rate(1, 1), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rate(1, 0), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn hot_spot_rates_and_margin() {
        let r = make_rates(TrafficPattern::HotSpot, 32, 0.9, Some(0.5)).unwrap();
        assert_abs_diff_eq!(r.rate(3, 3), 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rate(3, 4), 0.45 / 31.0, epsilon = 1e-12);
        for k in 0..32 {
            assert_abs_diff_eq!(r.row_sum(k), 0.9, epsilon = 1e-12);
            assert_abs_diff_eq!(r.col_sum(k), 0.9, epsilon = 1e-12);
        }
        let a = admissibility(&r);
        assert!(a.admissible);
        assert_abs_diff_eq!(a.epsilon, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn row_sums_equal_sigma_for_all_patterns() {
        for (pattern, omega) in [
            (TrafficPattern::Uniform, None),
            (TrafficPattern::LinDiagonal, None),
            (TrafficPattern::HotSpot, Some(0.3)),
        ] {
            for n in [2, 5, 16] {
                let r = make_rates(pattern, n, 0.77, omega).unwrap();
                for i in 0..n {
                    assert_abs_diff_eq!(r.row_sum(i), 0.77, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn admissibility_edges() {
        let r = make_rates(TrafficPattern::Uniform, 4, 0.95, None).unwrap();
        let a = admissibility(&r);
        assert!(a.admissible);
        assert_abs_diff_eq!(a.epsilon, 0.05, epsilon = 1e-12);

        // A row summing to exactly 1.0 sits on the boundary: inadmissible.
        let m = RateMatrix::new(2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(!admissibility(&m).admissible);

        // sigma >= 1 is flagged, not rejected.
        let r = make_rates(TrafficPattern::Uniform, 4, 1.05, None).unwrap();
        assert!(!admissibility(&r).admissible);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_rates(TrafficPattern::Uniform, 4, 0.0, None).is_err());
        assert!(make_rates(TrafficPattern::HotSpot, 4, 0.9, Some(1.2)).is_err());
        assert!(make_rates(TrafficPattern::HotSpot, 4, 0.9, None).is_err());
    }

    #[test]
    fn bernoulli_degenerate_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zero = RateMatrix::new(2, vec![0.0; 4]).unwrap();
        assert!(bernoulli_arrivals(&zero, &mut rng).iter().all(|&b| !b));
        let one = RateMatrix::new(2, vec![1.0; 4]).unwrap();
        assert!(bernoulli_arrivals(&one, &mut rng).iter().all(|&b| b));
    }

    #[test]
    fn bernoulli_empirical_rate() {
        // 2x2 at rate 0.25; each entry sees 10^6 draws. 3-sigma binomial CI.
        let rates = RateMatrix::new(2, vec![0.25; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let slots = 1_000_000u64;
        let mut counts = [0u64; 4];
        for _ in 0..slots {
            for (k, hit) in bernoulli_arrivals(&rates, &mut rng).iter().enumerate() {
                if *hit {
                    counts[k] += 1;
                }
            }
        }
        let sd = (0.25 * 0.75 / slots as f64).sqrt();
        for c in counts {
            let emp = c as f64 / slots as f64;
            assert!((emp - 0.25).abs() < 3.0 * sd, "empirical rate {emp}");
        }
    }

    #[test]
    fn burst_mean_matches_quoted_value() {
        let m = exact_burst_mean(1.7, 1000);
        assert!((m - 11.6).abs() <= 0.1, "mean {m}");
        // High-precision reference value, independently summed.
        assert_abs_diff_eq!(m, 11.602460396484884, epsilon = 1e-9);
    }

    #[test]
    fn burst_degenerate_support() {
        let p = ParetoBurst::new(1.7, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.mean(), 1.0);
        for _ in 0..100 {
            assert_eq!(p.sample(&mut rng), 1);
        }
    }

    #[test]
    fn burst_empirical_mean_within_one_percent() {
        let p = ParetoBurst::new(1.7, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 1_000_000u64;
        let total: u64 = (0..draws).map(|_| p.sample(&mut rng)).sum();
        let emp = total as f64 / draws as f64;
        let exact = p.mean();
        assert!(
            (emp - exact).abs() / exact < 0.01,
            "empirical {emp} vs exact {exact}"
        );
    }

    #[test]
    fn bursty_long_run_load() {
        // Offered load per input within 2% of sigma over 10^6 slots.
        let sigma = 0.6;
        let rates = make_rates(TrafficPattern::Uniform, 4, sigma, None).unwrap();
        let mut tm = TrafficModel::bursty(rates, 1.7, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut per_input = [0u64; 4];
        let mut buf = Vec::new();
        let slots = 1_000_000u64;
        for _ in 0..slots {
            buf.clear();
            tm.arrivals_into(&mut rng, &mut buf);
            for &(i, _) in &buf {
                per_input[i] += 1;
            }
        }
        for c in per_input {
            let load = c as f64 / slots as f64;
            assert!(
                (load - sigma).abs() / sigma < 0.02,
                "per-input load {load} vs {sigma}"
            );
        }
    }

    #[test]
    fn burst_destination_constant_within_burst() {
        let rates = make_rates(TrafficPattern::Uniform, 4, 0.5, None).unwrap();
        let mut tm = TrafficModel::bursty(rates, 1.7, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = Vec::new();
        for _ in 0..20_000u64 {
            // Inputs mid-burst before the slot must emit to the burst's
            // destination during the slot.
            let expected: Vec<Option<usize>> = match &tm {
                TrafficModel::Bursty { phase, .. } => phase
                    .iter()
                    .map(|p| match p {
                        BurstPhase::On { dest, .. } => Some(*dest),
                        BurstPhase::Off { .. } => None,
                    })
                    .collect(),
                _ => unreachable!(),
            };
            buf.clear();
            tm.arrivals_into(&mut rng, &mut buf);
            for &(i, j) in &buf {
                if let Some(d) = expected[i] {
                    assert_eq!(d, j, "destination changed mid-burst");
                }
            }
        }
    }
}
