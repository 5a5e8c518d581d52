use std::collections::VecDeque;

pub const HEALTHY_BAND: (f64, f64) = (0.8, 1.3);
pub const OVERFIT_BAND: (f64, f64) = (0.5, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    FlagOverfit,
}

/// Sliding window over discriminator losses.
#[derive(Debug, Clone)]
pub struct LossMonitor {
    window: VecDeque<f64>,
    len: usize,
}

impl LossMonitor {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "monitor window must hold at least one value");
        Self { window: VecDeque::with_capacity(len), len }
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.len
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    pub fn push(&mut self, d_loss: f64) {
        if self.window.len() == self.len {
            self.window.pop_front();
        }
        self.window.push_back(d_loss);
    }

    /// Overfitting is flagged once a full window averages inside the overfit band.
    pub fn verdict(&self) -> Verdict {
        match self.mean() {
            Some(m) if self.is_full() && (OVERFIT_BAND.0..=OVERFIT_BAND.1).contains(&m) => Verdict::FlagOverfit,
            _ => Verdict::Continue,
        }
    }

    pub fn healthy(&self) -> bool {
        self.mean().is_some_and(|m| (HEALTHY_BAND.0..=HEALTHY_BAND.1).contains(&m))
    }
}

pub fn early_stop_check(monitor: &mut LossMonitor, new_d_loss: f64) -> Verdict {
    monitor.push(new_d_loss);
    monitor.verdict()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_stream_continues() {
        let mut m = LossMonitor::new(100);
        for _ in 0..300 {
            assert_eq!(early_stop_check(&mut m, 1.0), Verdict::Continue);
        }
        assert!(m.healthy());
    }

    #[test]
    fn flags_after_full_window() {
        let mut m = LossMonitor::new(100);
        let verdicts: Vec<_> = (0..200).map(|_| early_stop_check(&mut m, 0.6)).collect();
        assert!(verdicts[..99].iter().all(|v| *v == Verdict::Continue));
        assert!(verdicts[99..].iter().all(|v| *v == Verdict::FlagOverfit));
    }

    #[test]
    fn empty_window_continues() {
        assert_eq!(LossMonitor::new(5).verdict(), Verdict::Continue);
    }
}
