//! Exact finite-state Markov chain engine for small switches: enumerates the
//! schedule space, builds the one-slot transition matrix, and certifies the
//! stationary-distribution, detailed-balance, concentration and mixing-time
//! properties numerically.

use crate::error::{Error, Result};
use crate::perm::{all_permutations, Permutation};
use crate::sched::baselines::mwm;
use crate::sched::disquo::{
    activation_probability, crosspoint_weight, weight_f_prime, QmaxMode, WeightConfig,
};
use crate::sched::distributed::HamiltonianWalk;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{HashMap, VecDeque};

use crate::schedule::Schedule;

/// Largest port count for exact full-matrix work (209 states, 24
/// permutations summed per entry).
pub const MAX_EXACT_PORTS: usize = 4;

/// All valid schedules for an `n x n` switch in canonical order: by size,
/// then lexicographically by the sorted pair list.
pub fn enumerate_schedules(n: usize) -> Result<Vec<Schedule>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if n > MAX_EXACT_PORTS {
        return Err(Error::ExactModeTooLarge {
            n,
            max: MAX_EXACT_PORTS,
        });
    }
    let mut states = Vec::new();
    // Row-by-row recursion over "idle or some unused column".
    fn rec(n: usize, row: usize, current: &mut Schedule, out: &mut Vec<Schedule>) {
        if row == n {
            out.push(current.clone());
            return;
        }
        rec(n, row + 1, current, out);
        for j in 0..n {
            if current.partner_of_output(j).is_none() {
                current.activate(row, j).unwrap();
                rec(n, row + 1, current, out);
                current.deactivate(row, j);
            }
        }
    }
    let mut cur = Schedule::empty(n);
    rec(n, 0, &mut cur, &mut states);
    states.sort_by_key(|s| s.canonical_key());
    Ok(states)
}

/// How the permutation selection probability a(H) is realized when building
/// the exact matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HAveraging {
    /// Uniform over all N! permutations.
    UniformRandom,
    /// Arithmetic average of the per-permutation kernels along one full
    /// period of the deterministic walk (which visits each permutation
    /// exactly once, so the result coincides with the uniform average).
    HamiltonianCycleAveraged,
}

/// Exact chain: enumerated states, one-slot transition matrix, frozen
/// weights, and the product-form stationary vector.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub n: usize,
    pub states: Vec<Schedule>,
    pub index: HashMap<Schedule, usize>,
    /// Frozen weight matrix, row-major n x n.
    pub weights: Vec<f64>,
    pub p: DMatrix<f64>,
    pub pi: DVector<f64>,
}

impl ChainModel {
    pub fn build(weights: &[f64], n: usize, h_mode: HAveraging) -> Result<Self> {
        let (states, p) = transition_matrix(weights, n, h_mode)?;
        let pi = stationary_over_states(&states, weights, n);
        let index = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(k, s)| (s, k))
            .collect();
        Ok(Self {
            n,
            states,
            index,
            weights: weights.to_vec(),
            p,
            pi,
        })
    }

    pub fn weight_of(&self, state: &Schedule) -> f64 {
        state
            .pairs()
            .map(|(i, j)| self.weights[i * self.n + j])
            .sum()
    }
}

/// Probability of one transition for a single fixed permutation: the product
/// of p/p-bar factors over the four index sets (leavers, joiners, selected
/// stayers, eligible decliners). Zero when the symmetric difference is not
/// contained in the permutation.
fn transition_prob_given_h(
    from: &Schedule,
    to: &Schedule,
    h: &Permutation,
    p_of: &dyn Fn(usize, usize) -> f64,
    row_used: &[bool],
    col_used: &[bool],
) -> f64 {
    let n = from.n();
    let mut factor = 1.0;
    // Leavers and joiners must all be selected by H.
    for (i, j) in from.pairs() {
        if !to.is_active(i, j) {
            if h.output_of(i) != j {
                return 0.0;
            }
            factor *= 1.0 - p_of(i, j);
        }
    }
    for (i, j) in to.pairs() {
        if !from.is_active(i, j) {
            if h.output_of(i) != j {
                return 0.0;
            }
            factor *= p_of(i, j);
        }
    }
    for i in 0..n {
        let j = h.output_of(i);
        let in_from = from.is_active(i, j);
        let in_to = to.is_active(i, j);
        if in_from && in_to {
            // Selected and keeping its active state.
            factor *= p_of(i, j);
        } else if !in_from && !in_to && !row_used[i] && !col_used[j] {
            // Selected, eligible (no neighbor in the union), and declining.
            factor *= 1.0 - p_of(i, j);
        }
        // Anything else selected by H is a forced decision: factor 1.
    }
    factor
}

/// The exact one-slot transition matrix over the enumerated schedule space.
pub fn transition_matrix(
    weights: &[f64],
    n: usize,
    h_mode: HAveraging,
) -> Result<(Vec<Schedule>, DMatrix<f64>)> {
    if weights.len() != n * n {
        return Err(Error::InvalidDimension(format!(
            "weights must be {n}x{n} row-major"
        )));
    }
    let states = enumerate_schedules(n)?;
    let perms: Vec<Permutation> = match h_mode {
        HAveraging::UniformRandom => all_permutations(n),
        HAveraging::HamiltonianCycleAveraged => {
            let mut walk = HamiltonianWalk::new(n);
            let period = (1..=n).product::<usize>();
            (0..period).map(|_| walk.next()).collect()
        }
    };
    let p_of = |i: usize, j: usize| activation_probability(weights[i * n + j]);
    let m = states.len();
    let mut p = DMatrix::<f64>::zeros(m, m);
    for (a, from) in states.iter().enumerate() {
        for (b, to) in states.iter().enumerate() {
            let mut row_used = vec![false; n];
            let mut col_used = vec![false; n];
            for (i, j) in from.pairs().chain(to.pairs()) {
                row_used[i] = true;
                col_used[j] = true;
            }
            let total: f64 = perms
                .iter()
                .map(|h| transition_prob_given_h(from, to, h, &p_of, &row_used, &col_used))
                .sum();
            p[(a, b)] = total / perms.len() as f64;
        }
    }
    Ok((states, p))
}

fn stationary_over_states(states: &[Schedule], weights: &[f64], n: usize) -> DVector<f64> {
    let raw: Vec<f64> = states
        .iter()
        .map(|s| {
            s.pairs()
                .map(|(i, j)| weights[i * n + j])
                .sum::<f64>()
                .exp()
        })
        .collect();
    let z: f64 = raw.iter().sum();
    DVector::from_vec(raw.into_iter().map(|r| r / z).collect())
}

/// Product-form stationary distribution over the canonical state order.
pub fn stationary_product_form(weights: &[f64], n: usize) -> Result<(Vec<Schedule>, DVector<f64>)> {
    if weights.len() != n * n {
        return Err(Error::InvalidDimension(format!(
            "weights must be {n}x{n} row-major"
        )));
    }
    let states = enumerate_schedules(n)?;
    let pi = stationary_over_states(&states, weights, n);
    Ok((states, pi))
}

/// Reversibility and irreducibility audit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReversibilityReport {
    /// max over state pairs of |pi(a) P(a,b) - pi(b) P(b,a)|.
    pub max_residual: f64,
    /// Every state reachable from the empty schedule over positive entries.
    pub irreducible: bool,
    /// Reachability depth never exceeds the state's size (hence <= N).
    pub within_size_steps: bool,
}

pub fn verify_reversibility(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    states: &[Schedule],
) -> ReversibilityReport {
    let m = p.nrows();
    let mut max_residual = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let res = (pi[a] * p[(a, b)] - pi[b] * p[(b, a)]).abs();
            max_residual = max_residual.max(res);
        }
    }
    // BFS from the empty schedule (index 0 in canonical order).
    let mut dist = vec![usize::MAX; m];
    dist[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(a) = queue.pop_front() {
        for b in 0..m {
            if p[(a, b)] > 0.0 && dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    let irreducible = dist.iter().all(|&d| d != usize::MAX);
    let within_size_steps = irreducible
        && states
            .iter()
            .enumerate()
            .all(|(k, s)| dist[k] <= s.len().max(0));
    ReversibilityReport {
        max_residual,
        irreducible,
        within_size_steps,
    }
}

/// Total-variation and chi-square distances between two distributions, plus
/// the slack in the chi >= 2 TV inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceReport {
    pub tv: f64,
    pub chi: f64,
    /// chi - 2*tv, non-negative.
    pub slack: f64,
}

/// TV and chi-square distance of `nu` from the base distribution `mu`.
pub fn distances(mu: &[f64], nu: &[f64]) -> DistanceReport {
    assert_eq!(mu.len(), nu.len());
    let tv = 0.5 * mu.iter().zip(nu).map(|(m, v)| (m - v).abs()).sum::<f64>();
    let chi_sq: f64 = mu
        .iter()
        .zip(nu)
        .map(|(&m, &v)| {
            if m > 0.0 {
                let r = v / m - 1.0;
                m * r * r
            } else if v == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum();
    let chi = chi_sq.sqrt();
    DistanceReport {
        tv,
        chi,
        slack: chi - 2.0 * tv,
    }
}

/// Spectral gap summary of a reversible chain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralReport {
    /// Largest eigenvalue magnitude below the unit eigenvalue.
    pub e_max: f64,
    /// 1 / (1 - e_max).
    pub t_mix: f64,
}

/// Eigenvalue analysis on the pi-symmetrized form D^{1/2} P D^{-1/2}.
/// Rejects chains whose detailed-balance residual exceeds 1e-10.
pub fn spectral_mixing(p: &DMatrix<f64>, pi: &DVector<f64>) -> Result<SpectralReport> {
    let m = p.nrows();
    let mut max_residual = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            max_residual = max_residual.max((pi[a] * p[(a, b)] - pi[b] * p[(b, a)]).abs());
        }
    }
    if max_residual > 1e-10 {
        return Err(Error::NotReversible {
            residual: max_residual,
        });
    }
    let sym = DMatrix::from_fn(m, m, |a, b| (pi[a] / pi[b]).sqrt() * p[(a, b)]);
    // Average with the transpose to scrub round-off asymmetry.
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut mags: Vec<f64> = eig.eigenvalues.iter().map(|e| e.abs()).collect();
    mags.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let top = mags[0];
    debug_assert!((top - 1.0).abs() < 1e-8, "leading eigenvalue should be 1");
    let e_max = if mags.len() > 1 { mags[1].min(top) } else { 0.0 };
    let t_mix = if e_max < 1.0 {
        1.0 / (1.0 - e_max)
    } else {
        f64::INFINITY
    };
    Ok(SpectralReport { e_max, t_mix })
}

/// Upper bound 2^{6V} * exp(4 V w_max) on the mixing time of the
/// multiple-update dynamics over a conflict graph with `n_vertices` vertices.
/// For the switch the vertex count is N^2. May overflow to infinity; use
/// [`mixing_upper_bound_log`] for comparisons at large sizes.
pub fn mixing_upper_bound(n_vertices: usize, w_max: f64) -> f64 {
    mixing_upper_bound_log(n_vertices, w_max).exp()
}

/// Natural log of the same bound, always finite.
pub fn mixing_upper_bound_log(n_vertices: usize, w_max: f64) -> f64 {
    let v = n_vertices as f64;
    6.0 * v * std::f64::consts::LN_2 + 4.0 * v * w_max
}

/// Exact conductance, available when the state space has at most 20 states
/// (the subset enumeration is 2^|states|).
pub fn conductance(p: &DMatrix<f64>, pi: &DVector<f64>) -> Option<f64> {
    let m = p.nrows();
    if m > 20 {
        return None;
    }
    let mut phi = f64::INFINITY;
    for mask in 1u32..(1u32 << m) - 1 {
        let pi_a: f64 = (0..m).filter(|&k| mask >> k & 1 == 1).map(|k| pi[k]).sum();
        if pi_a > 0.5 || pi_a == 0.0 {
            continue;
        }
        let mut flow = 0.0;
        for a in 0..m {
            if mask >> a & 1 == 1 {
                for b in 0..m {
                    if mask >> b & 1 == 0 {
                        flow += pi[a] * p[(a, b)];
                    }
                }
            }
        }
        phi = phi.min(flow / pi_a);
    }
    Some(phi)
}

/// Entropy -sum mu log mu.
pub fn entropy(mu: &[f64]) -> f64 {
    -mu.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Free energy F(mu) = E_mu[W] + H(mu) over the model's states.
pub fn free_energy(model: &ChainModel, mu: &[f64]) -> f64 {
    let ew: f64 = model
        .states
        .iter()
        .zip(mu)
        .map(|(s, &m)| m * model.weight_of(s))
        .sum();
    ew + entropy(mu)
}

/// log of the partition function.
pub fn log_z(model: &ChainModel) -> f64 {
    model
        .states
        .iter()
        .map(|s| model.weight_of(s).exp())
        .sum::<f64>()
        .ln()
}

/// Concentration audit for one epsilon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConcentrationReport {
    pub epsilon: f64,
    pub w_star: f64,
    /// Stationary mass of the low-weight set {X : W(X) <= (1-eps) W*}.
    pub pi_low: f64,
    /// log|X| / (eps * W*).
    pub bound: f64,
    pub bound_holds: bool,
    /// Max over sampled distributions of F(mu) - log Z (must be <= 0).
    pub free_energy_max_excess: f64,
    /// |F(pi) - log Z|, the equality case.
    pub free_energy_gap_at_pi: f64,
}

/// Checks the stationary concentration bound and the free-energy variational
/// identity. Returns None when the maximum weight is zero (nothing to
/// concentrate on).
pub fn concentration_check(model: &ChainModel, epsilon: f64) -> Result<Option<ConcentrationReport>> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParameter(
            "epsilon must lie in (0, 1)".into(),
        ));
    }
    let n = model.n;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| model.weights[i * n + j]).collect())
        .collect();
    let w_star = mwm(&rows)?.weight;
    if w_star <= 0.0 {
        return Ok(None);
    }
    let threshold = (1.0 - epsilon) * w_star;
    let pi_low: f64 = model
        .states
        .iter()
        .zip(model.pi.iter())
        .filter(|(s, _)| model.weight_of(s) <= threshold + 1e-12)
        .map(|(_, &p)| p)
        .sum();
    let bound = (model.states.len() as f64).ln() / (epsilon * w_star);
    let lz = log_z(model);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11_5eed);
    let m = model.states.len();
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        // Uniform Dirichlet sample via normalized exponentials.
        let mut mu: Vec<f64> = (0..m)
            .map(|_| -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln())
            .collect();
        let s: f64 = mu.iter().sum();
        for x in &mut mu {
            *x /= s;
        }
        max_excess = max_excess.max(free_energy(model, &mu) - lz);
    }
    let pi_vec: Vec<f64> = model.pi.iter().copied().collect();
    let gap_at_pi = (free_energy(model, &pi_vec) - lz).abs();
    Ok(Some(ConcentrationReport {
        epsilon,
        w_star,
        pi_low,
        bound,
        bound_holds: pi_low <= bound + 1e-12,
        free_energy_max_excess: max_excess,
        free_energy_gap_at_pi: gap_at_pi,
    }))
}

/// Weight-drift diagnostics between consecutive queue snapshots.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceReport {
    /// alpha_n = sum of f'(Q~(n)) + f'(Q~(n+1)) over all crosspoints.
    pub alpha: f64,
    /// Largest weight at the later snapshot.
    pub w_max_next: f64,
    /// alpha times the mixing upper bound with V = N^2 vertices (may be
    /// infinite; see the log field).
    pub alpha_times_bound: f64,
    /// log(alpha) + log(bound), finite for finite alpha > 0.
    pub log_alpha_times_bound: f64,
}

/// Computes alpha between two queue snapshots that differ by at most one
/// cell per entry.
pub fn convergence_diagnostics(
    q_now: &[u64],
    q_next: &[u64],
    cfg: &WeightConfig,
    n: usize,
) -> Result<ConvergenceReport> {
    if q_now.len() != n * n || q_next.len() != n * n {
        return Err(Error::InvalidDimension(format!(
            "queue snapshots must be {n}x{n} row-major"
        )));
    }
    for (a, b) in q_now.iter().zip(q_next) {
        if a.abs_diff(*b) > 1 {
            return Err(Error::InvalidParameter(
                "snapshots must differ by at most one cell per entry".into(),
            ));
        }
    }
    let qmax_now = q_now.iter().copied().max().unwrap_or(0);
    let qmax_next = q_next.iter().copied().max().unwrap_or(0);
    let eff = |q: u64, qmax: u64| match cfg.qmax_mode {
        QmaxMode::Conjecture => q as f64,
        _ => crate::sched::disquo::effective_queue(q, qmax, cfg.epsilon, n),
    };
    let alpha: f64 = (0..n * n)
        .map(|k| weight_f_prime(eff(q_now[k], qmax_now)) + weight_f_prime(eff(q_next[k], qmax_next)))
        .sum();
    let w_max_next = q_next
        .iter()
        .map(|&q| crosspoint_weight(cfg, q, qmax_next, n))
        .fold(0.0f64, f64::max);
    let log_bound = mixing_upper_bound_log(n * n, w_max_next);
    Ok(ConvergenceReport {
        alpha,
        w_max_next,
        alpha_times_bound: alpha * log_bound.exp(),
        log_alpha_times_bound: alpha.ln() + log_bound,
    })
}

/// Full analysis report for one weight matrix, as emitted by the `analyze`
/// command.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub states: usize,
    pub h_mode: HAveraging,
    pub row_stochastic_residual: f64,
    pub detailed_balance_residual: f64,
    pub stationarity_residual: f64,
    pub irreducible: bool,
    pub reachable_within_size_steps: bool,
    pub e_max: f64,
    pub t_mix: f64,
    pub mixing_bound_vertices: usize,
    pub mixing_bound_w_max: f64,
    pub mixing_bound_log: f64,
    pub t_mix_within_bound: bool,
    pub conductance: Option<f64>,
    pub conductance_gap_ok: Option<bool>,
    pub concentration: Vec<ConcentrationReport>,
    pub chi_ge_2tv_slack_min: f64,
}

/// Builds the chain for `weights` and runs every residual and bound check.
pub fn analyze(
    weights: &[f64],
    n: usize,
    h_mode: HAveraging,
    epsilons: &[f64],
) -> Result<AnalysisReport> {
    let model = ChainModel::build(weights, n, h_mode)?;
    let m = model.states.len();
    let row_residual = (0..m)
        .map(|a| ((0..m).map(|b| model.p[(a, b)]).sum::<f64>() - 1.0).abs())
        .fold(0.0f64, f64::max);
    let rev = verify_reversibility(&model.p, &model.pi, &model.states);
    let stat_residual = {
        let pi_p = model.p.transpose() * &model.pi;
        (&pi_p - &model.pi).abs().max()
    };
    let spectral = spectral_mixing(&model.p, &model.pi)?;
    let w_max = model.weights.iter().copied().fold(0.0f64, f64::max);
    let bound_log = mixing_upper_bound_log(n * n, w_max);
    let t_mix_within = spectral.t_mix.ln() <= bound_log;
    let phi = conductance(&model.p, &model.pi);
    let phi_ok = phi.map(|f| spectral.e_max <= 1.0 - f * f / 2.0 + 1e-12);
    let mut concentration = Vec::new();
    for &eps in epsilons {
        if let Some(c) = concentration_check(&model, eps)? {
            concentration.push(c);
        }
    }
    // Distance inequality spot check on random distribution pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(0xd157);
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..m)
                .map(|_| -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln())
                .collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        let mu = draw(&mut rng);
        let nu = draw(&mut rng);
        min_slack = min_slack.min(distances(&mu, &nu).slack);
    }
    Ok(AnalysisReport {
        n,
        states: m,
        h_mode,
        row_stochastic_residual: row_residual,
        detailed_balance_residual: rev.max_residual,
        stationarity_residual: stat_residual,
        irreducible: rev.irreducible,
        reachable_within_size_steps: rev.within_size_steps,
        e_max: spectral.e_max,
        t_mix: spectral.t_mix,
        mixing_bound_vertices: n * n,
        mixing_bound_w_max: w_max,
        mixing_bound_log: bound_log,
        t_mix_within_bound: t_mix_within,
        conductance: phi,
        conductance_gap_ok: phi_ok,
        concentration,
        chi_ge_2tv_slack_min: min_slack,
    })
}
