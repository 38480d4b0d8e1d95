//! Schedulers: the randomized reference algorithm, its fully distributed
//! realization, and the comparison baselines.

pub mod baselines;
pub mod disquo;
pub mod distributed;

use crate::error::{Error, Result};
use crate::perm::Permutation;
use crate::schedule::Schedule;
use crate::switch::{
    input_schedule_half, output_schedule_half, FreePortPolicy, InputPlan, OutputPlan,
    PortPointers, Scheduler, SwitchState,
};
use disquo::{basic_update, crosspoint_weight, QmaxEstimator, QmaxMode, WeightConfig};
use distributed::{
    check_distributed_buffer_cap, isa_step, osa_step, HStream, InputLocalView, OutputLocalView,
    ViewMonitor,
};

/// Centralized scheduler: one place updates the schedule from global queue
/// state, then ports derive their transfer decisions from it.
#[derive(Debug, Clone)]
pub struct CentralDisquo {
    wcfg: WeightConfig,
    hstream: HStream,
    x: Schedule,
    estimator: QmaxEstimator,
    ptrs: PortPointers,
    policy: FreePortPolicy,
}

impl CentralDisquo {
    pub fn new(n: usize, wcfg: WeightConfig, hstream: HStream) -> Self {
        Self {
            wcfg,
            hstream,
            x: Schedule::empty(n),
            estimator: QmaxEstimator::new(n),
            ptrs: PortPointers::new(n),
            policy: FreePortPolicy::RoundRobin,
        }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.x
    }

    /// The permutation stream, exposed for harnesses that replay it.
    pub fn hstream(&self) -> &HStream {
        &self.hstream
    }

    fn q_max(&mut self, state: &SwitchState) -> u64 {
        match self.wcfg.qmax_mode {
            QmaxMode::Conjecture => 0,
            QmaxMode::Exact => state.global_max_queue(),
            QmaxMode::BroadcastEstimate => {
                let n = state.n_ports() as u64;
                let reporter = (state.clock() % n) as usize;
                self.estimator
                    .record(state.clock(), state.input_max_queue(reporter))
                    .value
            }
        }
    }
}

impl Scheduler for CentralDisquo {
    fn input_phase(
        &mut self,
        state: &SwitchState,
        coins: &mut dyn FnMut() -> f64,
    ) -> Result<InputPlan> {
        let n = state.n_ports();
        let q_max = self.q_max(state);
        let h = self.hstream.advance();
        let weights: Vec<f64> = (0..n)
            .map(|i| crosspoint_weight(&self.wcfg, state.queue_len(i, h.output_of(i)), q_max, n))
            .collect();
        self.x = basic_update(&self.x, &h, &weights, coins);
        let sends = input_schedule_half(
            &self.x,
            state,
            self.policy,
            &mut self.ptrs.inputs,
            Some(self.hstream.peek_next()),
        );
        Ok(InputPlan { sends })
    }

    fn output_phase(&mut self, state: &SwitchState, _arrived: &[bool]) -> Result<OutputPlan> {
        let n = state.n_ports();
        let serves = output_schedule_half(
            &self.x,
            n,
            |i, j| state.buf_len(i, j),
            self.policy,
            &mut self.ptrs.outputs,
            Some(self.hstream.peek_next()),
        );
        Ok(OutputPlan {
            schedule: self.x.clone(),
            serves,
        })
    }
}

/// Fully distributed scheduler: each port runs its own step over its local
/// view only; inputs and outputs communicate exclusively through crosspoint
/// buffer observations.
#[derive(Debug, Clone)]
pub struct DistributedDisquo {
    wcfg: WeightConfig,
    hstream: HStream,
    x_rows: Vec<Vec<bool>>,
    x_cols: Vec<Vec<bool>>,
    in_rr: Vec<usize>,
    out_rr: Vec<usize>,
    estimator: QmaxEstimator,
    monitor: Option<ViewMonitor>,
    h_current: Option<Permutation>,
}

impl DistributedDisquo {
    pub fn new(n: usize, buffer_cap: usize, wcfg: WeightConfig, hstream: HStream) -> Result<Self> {
        check_distributed_buffer_cap(buffer_cap)?;
        if wcfg.qmax_mode == QmaxMode::Exact {
            return Err(Error::InvalidParameter(
                "exact q_max needs global state; distributed ports only get the broadcast estimate"
                    .into(),
            ));
        }
        Ok(Self {
            wcfg,
            hstream,
            x_rows: vec![vec![false; n]; n],
            x_cols: vec![vec![false; n]; n],
            in_rr: vec![0; n],
            out_rr: vec![0; n],
            estimator: QmaxEstimator::new(n),
            monitor: None,
            h_current: None,
        })
    }

    /// Turns on the per-slot view-consistency audit.
    pub fn instrument(&mut self) {
        let n = self.x_rows.len();
        self.monitor = Some(ViewMonitor::new(n));
    }

    pub fn monitor(&self) -> Option<&ViewMonitor> {
        self.monitor.as_ref()
    }

    /// Input-side schedule rows.
    pub fn input_rows(&self) -> &[Vec<bool>] {
        &self.x_rows
    }

    /// Output-side schedule columns.
    pub fn output_cols(&self) -> &[Vec<bool>] {
        &self.x_cols
    }

    /// The output-side schedule as a matching (the output side is always
    /// conflict-free: activations require an observed transmission).
    pub fn effective_schedule(&self) -> Schedule {
        let n = self.x_cols.len();
        let mut s = Schedule::empty(n);
        for j in 0..n {
            for i in 0..n {
                if self.x_cols[j][i] {
                    s.activate(i, j).expect("output-side views cannot conflict");
                }
            }
        }
        s
    }
}

impl Scheduler for DistributedDisquo {
    fn input_phase(
        &mut self,
        state: &SwitchState,
        coins: &mut dyn FnMut() -> f64,
    ) -> Result<InputPlan> {
        let n = state.n_ports();
        let q_max = match self.wcfg.qmax_mode {
            QmaxMode::BroadcastEstimate => {
                let reporter = (state.clock() % n as u64) as usize;
                self.estimator
                    .record(state.clock(), state.input_max_queue(reporter))
                    .value
            }
            _ => 0,
        };
        let h = self.hstream.advance();
        let h_next = self.hstream.peek_next().clone();

        // All inputs decide against the same start-of-slot snapshot; coins
        // are consumed in ascending input order.
        let mut sends = vec![None; n];
        for i in 0..n {
            let queues = state.queue_row(i);
            let bufs = state.buf_row(i);
            let view = InputLocalView {
                input: i,
                designee: h.output_of(i),
                next_designee: h_next.output_of(i),
                x_row: &self.x_rows[i],
                queues: &queues,
                bufs: &bufs,
                qmax: q_max,
            };
            let d = isa_step(&view, &self.wcfg, &mut self.in_rr[i], coins);
            self.x_rows[i][h.output_of(i)] = d.designee_active;
            sends[i] = d.send;
        }
        self.h_current = Some(h);
        Ok(InputPlan { sends })
    }

    fn output_phase(&mut self, state: &SwitchState, arrived: &[bool]) -> Result<OutputPlan> {
        let n = state.n_ports();
        let h = self
            .h_current
            .take()
            .ok_or_else(|| Error::InvalidParameter("output phase before input phase".into()))?;
        let h_next = self.hstream.peek_next().clone();
        let mut serves = vec![None; n];
        for j in 0..n {
            let bufs = state.buf_col(j);
            let arrived_col: Vec<bool> = (0..n).map(|i| arrived[i * n + j]).collect();
            let view = OutputLocalView {
                output: j,
                designee: h.input_of(j),
                next_designee: h_next.input_of(j),
                x_col: &self.x_cols[j],
                bufs: &bufs,
                arrived: &arrived_col,
            };
            let d = osa_step(&view, &mut self.out_rr[j]);
            self.x_cols[j][h.input_of(j)] = d.designee_active;
            serves[j] = d.serve;
        }
        if let Some(monitor) = self.monitor.as_mut() {
            let report = monitor.check(&self.x_rows, &self.x_cols);
            if !report.unclassified.is_empty() {
                return Err(Error::InvalidSchedule(format!(
                    "unclassified view divergence at {:?}",
                    report.unclassified
                )));
            }
        }
        Ok(OutputPlan {
            schedule: self.effective_schedule(),
            serves,
        })
    }
}
