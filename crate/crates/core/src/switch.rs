//! Physical switch state and the slot engine: virtual output queues,
//! crosspoint buffers, port schedules, and the three-phase slot update with
//! all feasibility constraints enforced.

use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::schedule::Schedule;
use crate::stats::splitmix64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::VecDeque;

/// The two independent randomness streams a simulation consumes: scheduler
/// coins and traffic draws. Splitting them keeps coin consumption identical
/// across scheduler variants regardless of the traffic process.
#[derive(Debug, Clone)]
pub struct SimRng {
    pub coins: ChaCha8Rng,
    pub traffic: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            coins: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15)),
            traffic: ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(1))),
        }
    }
}

/// Full switch state: N x N VOQs and N x N crosspoint buffers, each cell
/// stored as its arrival slot so departures can report exact delays.
#[derive(Debug, Clone)]
pub struct SwitchState {
    n: usize,
    k: usize,
    queues: Vec<VecDeque<u64>>,
    xbuf: Vec<VecDeque<u64>>,
    clock: u64,
}

impl SwitchState {
    pub fn new(n_ports: usize, buffer_cap: usize) -> Result<Self> {
        if n_ports == 0 {
            return Err(Error::InvalidDimension("n_ports must be positive".into()));
        }
        if buffer_cap == 0 {
            return Err(Error::InvalidDimension("buffer_cap must be positive".into()));
        }
        Ok(Self {
            n: n_ports,
            k: buffer_cap,
            queues: vec![VecDeque::new(); n_ports * n_ports],
            xbuf: vec![VecDeque::new(); n_ports * n_ports],
            clock: 0,
        })
    }

    pub fn n_ports(&self) -> usize {
        self.n
    }

    pub fn buffer_cap(&self) -> usize {
        self.k
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn queue_len(&self, input: usize, output: usize) -> u64 {
        self.queues[input * self.n + output].len() as u64
    }

    pub fn buf_len(&self, input: usize, output: usize) -> u64 {
        self.xbuf[input * self.n + output].len() as u64
    }

    pub fn total_queued(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn total_buffered(&self) -> u64 {
        self.xbuf.iter().map(|b| b.len() as u64).sum()
    }

    /// Largest VOQ length at one input.
    pub fn input_max_queue(&self, input: usize) -> u64 {
        (0..self.n).map(|j| self.queue_len(input, j)).max().unwrap_or(0)
    }

    /// Largest VOQ length in the whole switch.
    pub fn global_max_queue(&self) -> u64 {
        (0..self.n).map(|i| self.input_max_queue(i)).max().unwrap_or(0)
    }

    /// Queue lengths of one input row.
    pub fn queue_row(&self, input: usize) -> Vec<u64> {
        (0..self.n).map(|j| self.queue_len(input, j)).collect()
    }

    /// Buffer occupancies of one input row (fits in u8 since K is small).
    pub fn buf_row(&self, input: usize) -> Vec<u8> {
        (0..self.n).map(|j| self.buf_len(input, j) as u8).collect()
    }

    /// Buffer occupancies of one output column.
    pub fn buf_col(&self, output: usize) -> Vec<u8> {
        (0..self.n).map(|i| self.buf_len(i, output) as u8).collect()
    }

    /// Pre-loads a VOQ with `count` cells stamped with the current clock.
    /// Used to set up saturated scenarios and worked examples.
    pub fn seed_backlog(&mut self, input: usize, output: usize, count: u64) {
        let q = &mut self.queues[input * self.n + output];
        for _ in 0..count {
            q.push_back(self.clock);
        }
    }

    /// Places a cell directly into a crosspoint buffer (test scaffolding for
    /// mid-protocol configurations).
    pub fn seed_crosspoint(&mut self, input: usize, output: usize, count: u64) -> Result<()> {
        let b = &mut self.xbuf[input * self.n + output];
        if b.len() as u64 + count > self.k as u64 {
            return Err(Error::InvalidParameter(format!(
                "crosspoint ({input},{output}) cannot hold {count} more cells"
            )));
        }
        for _ in 0..count {
            b.push_back(self.clock);
        }
        Ok(())
    }

    fn admit(&mut self, input: usize, output: usize) {
        let stamp = self.clock;
        self.queues[input * self.n + output].push_back(stamp);
    }

    fn transfer(&mut self, input: usize, output: usize) -> Result<()> {
        let idx = input * self.n + output;
        if self.xbuf[idx].len() >= self.k {
            return Err(Error::InfeasibleTransfer {
                input,
                output,
                reason: "crosspoint buffer full".into(),
            });
        }
        let stamp = self.queues[idx].pop_front().ok_or(Error::InfeasibleTransfer {
            input,
            output,
            reason: "empty VOQ".into(),
        })?;
        self.xbuf[idx].push_back(stamp);
        Ok(())
    }

    fn depart(&mut self, input: usize, output: usize) -> Result<u64> {
        let idx = input * self.n + output;
        let stamp = self.xbuf[idx].pop_front().ok_or(Error::InfeasibleTransfer {
            input,
            output,
            reason: "empty crosspoint buffer".into(),
        })?;
        Ok(self.clock - stamp)
    }
}

/// Input and output port schedules for one slot, encoded as partner maps so
/// the per-port "at most one cell" constraints hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PortSchedules {
    /// `input_sched[i] = Some(j)` means input i sends its head-of-line cell
    /// of VOQ_ij into the crosspoint buffer.
    pub input_sched: Vec<Option<usize>>,
    /// `output_sched[j] = Some(i)` means output j transmits one cell from the
    /// crosspoint buffer at (i, j).
    pub output_sched: Vec<Option<usize>>,
}

/// Policy resolving "any eligible crosspoint" for free ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreePortPolicy {
    /// Per-port round-robin pointer over eligible crosspoints.
    RoundRobin,
    /// Always the lowest eligible index.
    LowestIndex,
}

/// Per-port round-robin pointers, advanced only when a round-robin pick is
/// actually served.
#[derive(Debug, Clone)]
pub struct PortPointers {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl PortPointers {
    pub fn new(n: usize) -> Self {
        Self {
            inputs: vec![0; n],
            outputs: vec![0; n],
        }
    }
}

fn pick_free(
    n: usize,
    policy: FreePortPolicy,
    ptr: &mut usize,
    preferred: Option<usize>,
    eligible: impl Fn(usize) -> bool,
) -> Option<usize> {
    if let Some(p) = preferred {
        if eligible(p) {
            return Some(p);
        }
    }
    match policy {
        FreePortPolicy::LowestIndex => (0..n).find(|&k| eligible(k)),
        FreePortPolicy::RoundRobin => {
            for step in 0..n {
                let k = (*ptr + step) % n;
                if eligible(k) {
                    *ptr = (k + 1) % n;
                    return Some(k);
                }
            }
            None
        }
    }
}

/// Input half of the port schedules: active crosspoints send when they have a
/// cell and buffer room; free inputs pick the next permutation's designee
/// first, then fall back to the free-port policy.
pub(crate) fn input_schedule_half(
    x: &Schedule,
    state: &SwitchState,
    policy: FreePortPolicy,
    ptrs: &mut [usize],
    h_next: Option<&Permutation>,
) -> Vec<Option<usize>> {
    let n = state.n_ports();
    let k = state.buffer_cap() as u64;
    let mut sched = vec![None; n];
    for i in 0..n {
        let eligible = |j: usize| state.queue_len(i, j) > 0 && state.buf_len(i, j) < k;
        sched[i] = match x.partner_of_input(i) {
            Some(j) => eligible(j).then_some(j),
            None => pick_free(
                n,
                policy,
                &mut ptrs[i],
                h_next.map(|h| h.output_of(i)),
                eligible,
            ),
        };
    }
    sched
}

/// Output half, evaluated against buffer occupancies after the slot's input
/// transfers (`buf` gives the post-transfer occupancy).
pub(crate) fn output_schedule_half(
    x: &Schedule,
    n: usize,
    buf: impl Fn(usize, usize) -> u64,
    policy: FreePortPolicy,
    ptrs: &mut [usize],
    h_next: Option<&Permutation>,
) -> Vec<Option<usize>> {
    let mut sched = vec![None; n];
    for j in 0..n {
        let eligible = |i: usize| buf(i, j) > 0;
        sched[j] = match x.partner_of_output(j) {
            Some(i) => eligible(i).then_some(i),
            None => pick_free(
                n,
                policy,
                &mut ptrs[j],
                h_next.map(|h| h.input_of(j)),
                eligible,
            ),
        };
    }
    sched
}

/// Derives both port schedules from a schedule X. The output half sees buffer
/// occupancies as they will stand after the input half's transfers, matching
/// the in-slot phase ordering.
pub fn derive_port_schedules(
    x: &Schedule,
    state: &SwitchState,
    policy: FreePortPolicy,
    ptrs: &mut PortPointers,
    h_next: Option<&Permutation>,
) -> Result<PortSchedules> {
    let n = state.n_ports();
    if x.n() != n {
        return Err(Error::InvalidDimension(format!(
            "schedule is {}x{0} but switch has {n} ports",
            x.n()
        )));
    }
    let input_sched = input_schedule_half(x, state, policy, &mut ptrs.inputs, h_next);
    let output_sched = output_schedule_half(
        x,
        n,
        |i, j| {
            let transferred = (input_sched[i] == Some(j)) as u64;
            state.buf_len(i, j) + transferred
        },
        policy,
        &mut ptrs.outputs,
        h_next,
    );
    Ok(PortSchedules {
        input_sched,
        output_sched,
    })
}

/// One departed cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Departure {
    pub input: usize,
    pub output: usize,
    /// Departure slot minus arrival slot.
    pub delay: u64,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotReport {
    pub slot: u64,
    /// The schedule X(n) driving the slot (empty for baselines without one).
    pub schedule: Vec<(usize, usize)>,
    pub ports: PortSchedules,
    /// Cells moved from VOQs into crosspoint buffers (phase II).
    pub input_transfers: Vec<(usize, usize)>,
    /// Cells transmitted out of the switch (phase III).
    pub output_departures: Vec<Departure>,
    /// New cells appended to the VOQs after phase III.
    pub arrivals: Vec<(usize, usize)>,
}

/// Input-phase plan produced by a scheduler: the per-input transfer
/// decisions.
#[derive(Debug, Clone)]
pub struct InputPlan {
    pub sends: Vec<Option<usize>>,
}

/// Output-phase plan: per-output serve decisions, plus the schedule the slot
/// settled on (empty for baselines that have none).
#[derive(Debug, Clone)]
pub struct OutputPlan {
    pub schedule: Schedule,
    pub serves: Vec<Option<usize>>,
}

/// A slot scheduler. The engine calls `input_phase` against the start-of-slot
/// state, applies the transfers, then calls `output_phase` with the arrival
/// marks so outputs can react to this slot's transfers.
pub trait Scheduler {
    fn input_phase(
        &mut self,
        state: &SwitchState,
        coins: &mut dyn FnMut() -> f64,
    ) -> Result<InputPlan>;

    fn output_phase(&mut self, state: &SwitchState, arrived: &[bool]) -> Result<OutputPlan>;
}

/// Advances one slot with explicit arrivals and an explicit coin source.
/// `step_slot` wraps this with a traffic model and RNG streams.
pub fn step_slot_with(
    state: &mut SwitchState,
    scheduler: &mut dyn Scheduler,
    arrivals: &[(usize, usize)],
    coins: &mut dyn FnMut() -> f64,
) -> Result<SlotReport> {
    let n = state.n_ports();
    let k = state.buffer_cap() as u64;
    let slot = state.clock();

    // Phases I-II: schedule update and input transfer decisions.
    let plan = scheduler.input_phase(state, coins)?;
    if plan.sends.len() != n {
        return Err(Error::InvalidDimension("input plan size mismatch".into()));
    }

    // Apply input transfers, validating feasibility (hard faults).
    let mut input_transfers = Vec::new();
    let mut arrived = vec![false; n * n];
    for (i, send) in plan.sends.iter().enumerate() {
        if let Some(j) = *send {
            if state.queue_len(i, j) == 0 {
                return Err(Error::InfeasibleTransfer {
                    input: i,
                    output: j,
                    reason: "scheduler sent from an empty VOQ".into(),
                });
            }
            if state.buf_len(i, j) >= k {
                return Err(Error::InfeasibleTransfer {
                    input: i,
                    output: j,
                    reason: "scheduler sent into a full crosspoint buffer".into(),
                });
            }
            state.transfer(i, j)?;
            arrived[i * n + j] = true;
            input_transfers.push((i, j));
        }
    }

    // Phase III: output serve decisions and departures.
    let oplan = scheduler.output_phase(state, &arrived)?;
    oplan.schedule.assert_valid();
    if oplan.serves.len() != n {
        return Err(Error::InvalidDimension("output plan size mismatch".into()));
    }
    let mut output_departures = Vec::new();
    for (j, serve) in oplan.serves.iter().enumerate() {
        if let Some(i) = *serve {
            if state.buf_len(i, j) == 0 {
                return Err(Error::InfeasibleTransfer {
                    input: i,
                    output: j,
                    reason: "scheduler served an empty crosspoint buffer".into(),
                });
            }
            let delay = state.depart(i, j)?;
            output_departures.push(Departure {
                input: i,
                output: j,
                delay,
            });
        }
    }

    // Arrivals are appended after phase III: a cell arriving in slot n is
    // first eligible in slot n+1.
    for &(i, j) in arrivals {
        state.admit(i, j);
    }

    let report = SlotReport {
        slot,
        schedule: oplan.schedule.canonical_pairs(),
        ports: PortSchedules {
            input_sched: plan.sends,
            output_sched: oplan.serves,
        },
        input_transfers,
        output_departures,
        arrivals: arrivals.to_vec(),
    };
    state.clock += 1;
    Ok(report)
}

/// Advances one slot: schedule update, input transfers, output departures,
/// then new arrivals.
pub fn step_slot(
    state: &mut SwitchState,
    scheduler: &mut dyn Scheduler,
    traffic: &mut crate::traffic::TrafficModel,
    rng: &mut SimRng,
) -> Result<SlotReport> {
    if traffic.n() != state.n_ports() {
        return Err(Error::InvalidDimension(
            "traffic model and switch disagree on port count".into(),
        ));
    }
    let mut arrivals = Vec::new();
    traffic.arrivals_into(&mut rng.traffic, &mut arrivals);
    let coins = &mut rng.coins;
    step_slot_with(state, scheduler, &arrivals, &mut || coins.random::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_switch_dimensions() {
        let s = SwitchState::new(2, 1).unwrap();
        assert_eq!(s.n_ports(), 2);
        assert_eq!(s.total_queued(), 0);
        assert_eq!(s.total_buffered(), 0);
        assert_eq!(s.clock(), 0);

        let s = SwitchState::new(32, 1).unwrap();
        assert_eq!(s.n_ports(), 32);

        let mut s = SwitchState::new(4, 3).unwrap();
        assert_eq!(s.buffer_cap(), 3);
        s.seed_crosspoint(1, 2, 3).unwrap();
        assert!(s.seed_crosspoint(1, 2, 1).is_err(), "capacity bound");

        assert!(SwitchState::new(0, 1).is_err());
        assert!(SwitchState::new(4, 0).is_err());
    }

    #[test]
    fn derive_schedules_active_branches() {
        // Active pair with backlog and room sends.
        let mut state = SwitchState::new(3, 1).unwrap();
        state.seed_backlog(1, 0, 1);
        state.seed_backlog(2, 2, 1);
        let x = Schedule::from_pairs(3, &[(1, 0), (2, 2)]).unwrap();
        let mut ptrs = PortPointers::new(3);
        let ps =
            derive_port_schedules(&x, &state, FreePortPolicy::RoundRobin, &mut ptrs, None)
                .unwrap();
        assert_eq!(ps.input_sched[1], Some(0));
        assert_eq!(ps.input_sched[2], Some(2));
        // Outputs see the just-transferred cells.
        assert_eq!(ps.output_sched[0], Some(1));
        assert_eq!(ps.output_sched[2], Some(2));
    }

    #[test]
    fn derive_schedules_property3_branches() {
        // Active pair with empty VOQ but occupied buffer: no send, one serve.
        let mut state = SwitchState::new(2, 1).unwrap();
        state.seed_crosspoint(0, 0, 1).unwrap();
        let x = Schedule::from_pairs(2, &[(0, 0)]).unwrap();
        let mut ptrs = PortPointers::new(2);
        let ps =
            derive_port_schedules(&x, &state, FreePortPolicy::RoundRobin, &mut ptrs, None)
                .unwrap();
        assert_eq!(ps.input_sched[0], None);
        assert_eq!(ps.output_sched[0], Some(0));
    }

    #[test]
    fn derive_schedules_everything_idle() {
        let state = SwitchState::new(3, 1).unwrap();
        let x = Schedule::empty(3);
        let mut ptrs = PortPointers::new(3);
        let ps =
            derive_port_schedules(&x, &state, FreePortPolicy::RoundRobin, &mut ptrs, None)
                .unwrap();
        assert!(ps.input_sched.iter().all(|s| s.is_none()));
        assert!(ps.output_sched.iter().all(|s| s.is_none()));
    }

    struct NullScheduler {
        n: usize,
    }

    impl Scheduler for NullScheduler {
        fn input_phase(
            &mut self,
            _state: &SwitchState,
            _coins: &mut dyn FnMut() -> f64,
        ) -> Result<InputPlan> {
            Ok(InputPlan {
                sends: vec![None; self.n],
            })
        }

        fn output_phase(&mut self, _state: &SwitchState, _arrived: &[bool]) -> Result<OutputPlan> {
            Ok(OutputPlan {
                schedule: Schedule::empty(self.n),
                serves: vec![None; self.n],
            })
        }
    }

    struct BadScheduler {
        n: usize,
    }

    impl Scheduler for BadScheduler {
        fn input_phase(
            &mut self,
            _state: &SwitchState,
            _coins: &mut dyn FnMut() -> f64,
        ) -> Result<InputPlan> {
            Ok(InputPlan {
                sends: vec![Some(0); self.n], // sends from empty VOQs
            })
        }

        fn output_phase(&mut self, _state: &SwitchState, _arrived: &[bool]) -> Result<OutputPlan> {
            Ok(OutputPlan {
                schedule: Schedule::empty(self.n),
                serves: vec![None; self.n],
            })
        }
    }

    #[test]
    fn empty_slot_only_advances_clock() {
        let mut state = SwitchState::new(2, 1).unwrap();
        let mut sched = NullScheduler { n: 2 };
        let report = step_slot_with(&mut state, &mut sched, &[], &mut || 0.5).unwrap();
        assert!(report.input_transfers.is_empty());
        assert!(report.output_departures.is_empty());
        assert_eq!(state.clock(), 1);
    }

    #[test]
    fn infeasible_transfer_is_a_hard_fault() {
        let mut state = SwitchState::new(2, 1).unwrap();
        let mut sched = BadScheduler { n: 2 };
        let err = step_slot_with(&mut state, &mut sched, &[], &mut || 0.5);
        assert!(matches!(err, Err(Error::InfeasibleTransfer { .. })));
    }

    #[test]
    fn arrivals_land_after_service() {
        // A cell arriving in slot n is not transferable until slot n+1, and a
        // consecutive-slot departure has delay 1.
        let mut state = SwitchState::new(1, 1).unwrap();
        let mut sched = NullScheduler { n: 1 };
        let r0 = step_slot_with(&mut state, &mut sched, &[(0, 0)], &mut || 0.5).unwrap();
        assert_eq!(r0.arrivals, vec![(0, 0)]);
        assert_eq!(state.queue_len(0, 0), 1);

        struct ServeAll;
        impl Scheduler for ServeAll {
            fn input_phase(
                &mut self,
                state: &SwitchState,
                _coins: &mut dyn FnMut() -> f64,
            ) -> Result<InputPlan> {
                let n = state.n_ports();
                let mut sends = vec![None; n];
                for i in 0..n {
                    for j in 0..n {
                        if state.queue_len(i, j) > 0 && state.buf_len(i, j) < state.buffer_cap() as u64 {
                            sends[i] = Some(j);
                            break;
                        }
                    }
                }
                Ok(InputPlan { sends })
            }
            fn output_phase(&mut self, state: &SwitchState, _arrived: &[bool]) -> Result<OutputPlan> {
                let n = state.n_ports();
                let mut serves = vec![None; n];
                for j in 0..n {
                    for i in 0..n {
                        if state.buf_len(i, j) > 0 {
                            serves[j] = Some(i);
                            break;
                        }
                    }
                }
                Ok(OutputPlan {
                    schedule: Schedule::empty(n),
                    serves,
                })
            }
        }
        let mut serve = ServeAll;
        let r1 = step_slot_with(&mut state, &mut serve, &[], &mut || 0.5).unwrap();
        assert_eq!(
            r1.output_departures,
            vec![Departure {
                input: 0,
                output: 0,
                delay: 1
            }]
        );
    }
}
