use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.0, beta2: 0.99, eps: 1e-8 }
    }
}

/// Moments of one parameter. The step counter is per parameter, so a
/// tensor that starts training late (after warm-up) gets fresh bias
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

/// Optimizer state, allocated lazily for parameters that receive updates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub slots: BTreeMap<ParamId, Moments>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// One bias-corrected Adam update of each `(param, gradient)` pair.
/// Arithmetic is carried out in f64 and stored back as f32.
pub fn adam_step(store: &mut ParamStore, grads: &[(ParamId, Vec<f32>)], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    // validate everything before mutating anything
    for (id, g) in grads {
        let e = store.entry(*id);
        if e.frozen {
            return Err(Error::Numeric(format!("attempted to update frozen parameter {}", e.name)));
        }
        if g.len() != e.numel() {
            return Err(Error::Numeric(format!("gradient for {} has {} values, expected {}", e.name, g.len(), e.numel())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {} in {} at index {i}", g[i], e.name)));
        }
    }
    for (id, g) in grads {
        let slot = state.slots.entry(*id).or_insert_with(|| Moments { m: vec![0.0; g.len()], v: vec![0.0; g.len()], step: 0 });
        slot.step += 1;
        let t = slot.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let p = &mut store.entry_mut(*id).data;
        for i in 0..g.len() {
            let gi = g[i] as f64;
            let m = cfg.beta1 * slot.m[i] as f64 + (1.0 - cfg.beta1) * gi;
            let v = cfg.beta2 * slot.v[i] as f64 + (1.0 - cfg.beta2) * gi * gi;
            slot.m[i] = m as f32;
            slot.v[i] = v as f32;
            let update = cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
            p[i] = (p[i] as f64 - update) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Net, ParamEntry, ParamKind};

    fn store(vals: &[f32]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(ParamEntry {
            name: "x".into(),
            shape: vec![vals.len()],
            data: vals.to_vec(),
            frozen: false,
            net: Net::Gen,
            group: None,
            kind: ParamKind::Bias,
            head_fc: false,
        })
        .unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(&[1.0, 1.0]);
        let mut st = AdamState::new();
        adam_step(&mut s, &[(0, vec![3.0, -0.02])], &mut st, &AdamConfig::default()).unwrap();
        let d = &s.entry(0).data;
        assert!((d[0] - (1.0 - 1e-4)).abs() < 1e-7);
        assert!((d[1] - (1.0 + 1e-4)).abs() < 1e-7);
    }

    #[test]
    fn zero_beta1_keeps_current_gradient() {
        let mut s = store(&[0.0]);
        let mut st = AdamState::new();
        for g in [0.5f32, -1.5, 2.0] {
            adam_step(&mut s, &[(0, vec![g])], &mut st, &AdamConfig::default()).unwrap();
            assert_eq!(st.slots[&0].m[0], g);
        }
    }

    #[test]
    fn nan_names_parameter() {
        let mut s = store(&[0.0]);
        let e = adam_step(&mut s, &[(0, vec![f32::NAN])], &mut AdamState::new(), &AdamConfig::default()).unwrap_err();
        assert!(e.to_string().contains(" x "), "{e}");
        assert_eq!(s.entry(0).data, vec![0.0]);
    }

    #[test]
    fn frozen_rejected() {
        let mut s = store(&[0.0]);
        s.entry_mut(0).frozen = true;
        assert!(adam_step(&mut s, &[(0, vec![1.0])], &mut AdamState::new(), &AdamConfig::default()).is_err());
    }
}
