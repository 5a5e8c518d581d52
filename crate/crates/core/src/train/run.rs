//! The alternating D/G training loop.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{GpMode, RunConfig};
use crate::data::{subsample_indices, BatchIterator, ImageCorpus};
use crate::error::{Error, Result};
use crate::metrics::{frechet_distance, FeatureExtractor, GaussianFit, FEATURE_DIM};
use crate::model::Gan;
use crate::params::{Bound, Net, ParamEntry, ParamId};
use crate::tensor::{grad, no_grad, Tensor};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::losses::{d_loss, g_loss, r1_from_logits};
use super::monitor::{LossMonitor, Verdict};

pub const METRICS_HEADER: &str = "iter,d_loss,g_loss,r1,pfid,overfit_flag,wall_ms";

/// Whether AdaFM/FS parameters train at this (0-based) iteration.
pub fn warmup_gate(iter: usize, warmup_iters: usize) -> bool {
    iter >= warmup_iters
}

/// One row of the metrics stream. `iter` counts completed iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Gradient penalty term (both sides summed in real_and_fake mode).
    pub r1: f64,
    pub pfid: Option<f64>,
    pub overfit: bool,
    pub wall_ms: u64,
}

impl IterRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            self.d_loss,
            self.g_loss,
            self.r1,
            self.pfid.map_or(String::new(), |v| v.to_string()),
            u8::from(self.overfit),
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub records: Vec<IterRecord>,
    /// `(iter, value)` of the lowest proxy-FID seen.
    pub best_pfid: Option<(usize, f64)>,
    pub final_pfid: Option<f64>,
    pub first_overfit: Option<usize>,
}

impl TrainSummary {
    pub fn pfid_curve(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.pfid.map(|p| (r.iter, p))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Callbacks invoked by [`Trainer::run`].
pub trait TrainHooks {
    fn after_iter(&mut self, _gan: &Gan, _rec: &IterRecord) -> Result<()> {
        Ok(())
    }

    /// Called with the model state just before a numeric abort propagates.
    fn on_abort(&mut self, _gan: &Gan, _err: &Error) {}
}

impl TrainHooks for () {}

/// Proxy-FID against a cached real-image fit, using fixed evaluation latents.
#[derive(Debug, Clone)]
pub struct PfidEvaluator {
    fx: FeatureExtractor,
    real: GaussianFit,
    z: Tensor,
}

impl PfidEvaluator {
    /// Uses `min(cap, corpus size)` real images and as many generated ones.
    pub fn new(corpus: &ImageCorpus, cap: usize, latent_dim: usize, eval_seed: u64) -> Result<Self> {
        let n = cap.min(corpus.len());
        if n < 2 {
            return Err(Error::Data(format!("proxy FID needs at least 2 images, corpus gives {n}")));
        }
        let real = if n == corpus.len() { corpus.all() } else { corpus.batch(&subsample_indices(corpus.len(), n, eval_seed)?) };
        let fx = FeatureExtractor::new();
        let real = fx.fit(&real)?;
        let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
        let z = Tensor::randn(&[n, latent_dim], 1.0, &mut rng);
        Ok(Self { fx, real, z })
    }

    pub fn sample_count(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn evaluate(&self, gan: &Gan) -> Result<f64> {
        let n = self.sample_count();
        let mut feats = Vec::with_capacity(n * FEATURE_DIM);
        for start in (0..n).step_by(64) {
            let z = self.z.slice0(start, 64.min(n - start))?;
            feats.extend(self.fx.features(&gan.generate(&z)?)?);
        }
        frechet_distance(&self.real, &GaussianFit::from_features(&feats, n, FEATURE_DIM)?)
    }
}

/// Owns the model and all loop state; one [`step`](Self::step) is one D
/// update followed by one G update.
pub struct Trainer<'a> {
    pub gan: Gan,
    pub adam: AdamState,
    data: &'a ImageCorpus,
    cfg: RunConfig,
    adam_cfg: AdamConfig,
    batches: BatchIterator,
    rng: ChaCha8Rng,
    monitor: LossMonitor,
    evaluator: Option<PfidEvaluator>,
    iter: usize,
    started: Instant,
}

fn grads_of(loss: &Tensor, bound: &Bound) -> Result<Vec<(ParamId, Vec<f32>)>> {
    let leaves = bound.trainable();
    let tensors: Vec<Tensor> = leaves.iter().map(|(_, t)| t.clone()).collect();
    let gs = grad(loss, &tensors, false)?;
    Ok(leaves.into_iter().zip(gs).filter_map(|((id, _), g)| g.map(|g| (id, g.to_vec()))).collect())
}

impl<'a> Trainer<'a> {
    pub fn new(gan: Gan, data: &'a ImageCorpus, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let img = gan.disc.image_shape;
        if [data.channels, data.size, data.size] != img {
            return Err(Error::Data(format!(
                "corpus images are {}×{}×{}, model expects {:?}",
                data.channels, data.size, data.size, img
            )));
        }
        let evaluator = if cfg.pfid_every > 0 {
            Some(PfidEvaluator::new(data, cfg.pfid_samples, gan.arch.latent_dim, cfg.eval_seed)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            adam: AdamState::new(),
            batches: BatchIterator::new(data.len(), cfg.batch, cfg.seed)?,
            adam_cfg: AdamConfig { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps },
            monitor: LossMonitor::new(cfg.monitor_window),
            rng,
            evaluator,
            gan,
            data,
            cfg: cfg.clone(),
            iter: 0,
            started: Instant::now(),
        })
    }

    /// Completed iterations so far.
    pub fn iter(&self) -> usize {
        self.iter
    }

    pub fn evaluator(&self) -> Option<&PfidEvaluator> {
        self.evaluator.as_ref()
    }

    fn latents(&mut self) -> Tensor {
        Tensor::randn(&[self.cfg.batch, self.gan.arch.latent_dim], 1.0, &mut self.rng)
    }

    fn nan(&self, what: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} became {v} at iteration {}", self.iter)))
        }
    }

    fn d_step(&mut self, gate: bool) -> Result<(f64, f64)> {
        let idx = self.batches.next().expect("batch stream is endless");
        let real = self.data.batch(&idx).into_leaf(true);
        let z = self.latents();
        let gan = &self.gan;
        let p = gan.store.bind(|_, e: &ParamEntry| e.net == Net::Disc && (gate || !e.is_modulation()));
        let fake = {
            let _g = no_grad();
            gan.gen.forward(&p, &z)?
        };
        let both = self.cfg.gp_mode == GpMode::RealAndFake;
        let fake = fake.into_leaf(both);
        let real_logits = gan.disc.forward(&p, &real)?;
        let fake_logits = gan.disc.forward(&p, &fake)?;
        let dl = d_loss(&real_logits, &fake_logits)?;
        let pen = if both {
            let g = self.cfg.gp_gamma_extreme;
            r1_from_logits(&real_logits, &real, g)?.add(&r1_from_logits(&fake_logits, &fake, g)?)?
        } else {
            r1_from_logits(&real_logits, &real, self.cfg.r1_gamma)?
        };
        let (dv, pv) = (dl.item() as f64, pen.item() as f64);
        self.nan("discriminator loss", dv)?;
        self.nan("gradient penalty", pv)?;
        let grads = grads_of(&dl.add(&pen)?, &p)?;
        drop(p);
        adam_step(&mut self.gan.store, &grads, &mut self.adam, &self.adam_cfg)?;
        Ok((dv, pv))
    }

    fn g_step(&mut self, gate: bool) -> Result<f64> {
        let z = self.latents();
        let gan = &self.gan;
        let p = gan.store.bind(|_, e: &ParamEntry| e.net == Net::Gen && (gate || !e.is_modulation()));
        let fake = gan.gen.forward(&p, &z)?;
        let gl = g_loss(&gan.disc.forward(&p, &fake)?)?;
        let gv = gl.item() as f64;
        self.nan("generator loss", gv)?;
        let grads = grads_of(&gl, &p)?;
        drop(p);
        adam_step(&mut self.gan.store, &grads, &mut self.adam, &self.adam_cfg)?;
        Ok(gv)
    }

    pub fn step(&mut self) -> Result<IterRecord> {
        let gate = warmup_gate(self.iter, self.cfg.warmup());
        let (d, r1) = self.d_step(gate)?;
        let g = self.g_step(gate)?;
        self.monitor.push(d);
        self.iter += 1;
        let due = self.cfg.pfid_every > 0 && (self.iter % self.cfg.pfid_every == 0 || self.iter == self.cfg.total_iters);
        let pfid = match (&self.evaluator, due) {
            (Some(ev), true) => Some(ev.evaluate(&self.gan)?),
            _ => None,
        };
        let wall_ms = if self.cfg.record_time { self.started.elapsed().as_millis() as u64 } else { 0 };
        Ok(IterRecord { iter: self.iter, d_loss: d, g_loss: g, r1, pfid, overfit: self.monitor.verdict() == Verdict::FlagOverfit, wall_ms })
    }

    /// Runs until `total_iters`, feeding every record to `hooks`.
    pub fn run(&mut self, hooks: &mut dyn TrainHooks) -> Result<TrainSummary> {
        let mut summary = TrainSummary::default();
        while self.iter < self.cfg.total_iters {
            let rec = match self.step() {
                Ok(r) => r,
                Err(e) => {
                    hooks.on_abort(&self.gan, &e);
                    return Err(e);
                }
            };
            if let Some(p) = rec.pfid {
                if summary.best_pfid.is_none_or(|(_, b)| p < b) {
                    summary.best_pfid = Some((rec.iter, p));
                }
                summary.final_pfid = Some(p);
            }
            if rec.overfit && summary.first_overfit.is_none() {
                summary.first_overfit = Some(rec.iter);
            }
            hooks.after_iter(&self.gan, &rec)?;
            summary.records.push(rec);
        }
        Ok(summary)
    }
}

/// Trains `gan` on `data` for `cfg.total_iters` iterations.
pub fn train_loop(gan: Gan, data: &ImageCorpus, cfg: &RunConfig, hooks: &mut dyn TrainHooks) -> Result<(Gan, AdamState, TrainSummary)> {
    let mut t = Trainer::new(gan, data, cfg)?;
    let summary = t.run(hooks)?;
    Ok((t.gan, t.adam, summary))
}
