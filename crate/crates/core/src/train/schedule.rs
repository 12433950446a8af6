use serde::{Deserialize, Serialize};

/// Cosine annealing with warm restarts, advanced once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleState {
    pub base_lr: f64,
    /// Length of the first cycle.
    pub t_0: u64,
    /// Each cycle is `t_mult` times longer than the previous one.
    pub t_mult: u64,
    pub eta_min: f64,
    /// Position counted from the start of training.
    pub iteration: u64,
}

impl Default for ScheduleState {
    fn default() -> Self {
        ScheduleState { base_lr: 0.003, t_0: 50, t_mult: 2, eta_min: 0.0, iteration: 0 }
    }
}

impl ScheduleState {
    pub fn lr(&self) -> f64 {
        lr_at(self, self.iteration)
    }

    pub fn advance(&mut self) {
        self.iteration += 1;
    }

    /// `(t_cur, t_i)`: offset into the current cycle and its length.
    pub fn cycle_position(&self, iteration: u64) -> (u64, u64) {
        let t_0 = self.t_0.max(1);
        if self.t_mult <= 1 {
            return (iteration % t_0, t_0);
        }
        let (mut t, mut len) = (iteration, t_0);
        while t >= len {
            t -= len;
            len = len.saturating_mul(self.t_mult);
        }
        (t, len)
    }
}

/// `eta_min + (base - eta_min) (1 + cos(pi t_cur / t_i)) / 2`.
pub fn lr_at(s: &ScheduleState, iteration: u64) -> f64 {
    let (t_cur, t_i) = s.cycle_position(iteration);
    let cos = (std::f64::consts::PI * t_cur as f64 / t_i as f64).cos();
    s.eta_min + 0.5 * (s.base_lr - s.eta_min) * (1.0 + cos)
}
