//! Losses, optimizer, warm-up gate, overfitting monitor and the training loop.

pub mod adam;
pub mod losses;
pub mod monitor;
pub mod run;

pub use adam::{adam_step, AdamConfig, AdamState, Moments};
pub use losses::{d_loss, g_loss, gp_both_sides, r1_from_logits, r1_penalty};
pub use monitor::{early_stop_check, LossMonitor, Verdict, HEALTHY_BAND, OVERFIT_BAND};
pub use run::{train_loop, warmup_gate, IterRecord, PfidEvaluator, TrainHooks, TrainSummary, Trainer, METRICS_HEADER};
