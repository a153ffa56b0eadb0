//! Scheduled Adam → SGD optimizer.
//!
//! Training starts with Adam. When the validation loss stops improving for
//! `patience` epochs the optimizer switches to Nesterov SGD; each further
//! plateau decays the SGD learning rate, up to `max_decays` times, after
//! which the schedule reports exhaustion.

use std::collections::HashMap;

use crate::nn::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Sgd,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Sgd => "sgd",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub adam_lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub sgd_lr: f32,
    pub momentum: f32,
    pub patience: usize,
    pub decay: f32,
    pub max_decays: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            adam_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sgd_lr: 1e-3,
            momentum: 0.9,
            patience: 5,
            decay: 0.1,
            max_decays: 2,
        }
    }
}

/// What [`OptimizerState::schedule_update`] did with one validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleEvent {
    Improved,
    Waiting,
    SwitchedToSgd,
    Decayed,
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub phase: Phase,
    pub step_count: u64,
    pub learning_rate: f32,
    pub plateau_counter: usize,
    pub best_val_loss: f64,
    decays: usize,
    exhausted: bool,
    adam_steps: u64,
    adam_m: HashMap<String, Vec<f32>>,
    adam_v: HashMap<String, Vec<f32>>,
    velocity: HashMap<String, Vec<f32>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState {
            learning_rate: config.adam_lr,
            config,
            phase: Phase::Adam,
            step_count: 0,
            plateau_counter: 0,
            best_val_loss: f64::INFINITY,
            decays: 0,
            exhausted: false,
            adam_steps: 0,
            adam_m: HashMap::new(),
            adam_v: HashMap::new(),
            velocity: HashMap::new(),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Names of parameters that currently own moment buffers.
    pub fn tracked(&self) -> Vec<String> {
        let map = match self.phase {
            Phase::Adam => &self.adam_m,
            Phase::Sgd => &self.velocity,
        };
        let mut names: Vec<String> = map.keys().cloned().collect();
        names.sort();
        names
    }

    /// Applies one update to every trainable parameter that has a gradient.
    pub fn step(&mut self, params: &ParamStore) {
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.phase {
            Phase::Adam => {
                self.adam_steps += 1;
                let c = &self.config;
                let bc1 = 1.0 - (c.beta1 as f64).powi(self.adam_steps as i32);
                let bc2 = 1.0 - (c.beta2 as f64).powi(self.adam_steps as i32);
                for (name, p) in params.weights() {
                    let Some(g) = p.grad() else { continue };
                    let m = self.adam_m.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
                    let v = self.adam_v.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
                    let mut data = p.data_mut();
                    for i in 0..g.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let mhat = m[i] as f64 / bc1;
                        let vhat = v[i] as f64 / bc2;
                        data[i] -= (lr as f64 * mhat / (vhat.sqrt() + c.eps as f64)) as f32;
                    }
                }
            }
            Phase::Sgd => {
                let mu = self.config.momentum;
                for (name, p) in params.weights() {
                    let Some(g) = p.grad() else { continue };
                    let buf = self.velocity.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
                    let mut data = p.data_mut();
                    for i in 0..g.len() {
                        buf[i] = mu * buf[i] + g[i];
                        // Nesterov: step along g + μ·v
                        data[i] -= lr * (g[i] + mu * buf[i]);
                    }
                }
            }
        }
    }

    /// Feeds one epoch's validation loss into the plateau schedule.
    pub fn schedule_update(&mut self, val_loss: f64) -> ScheduleEvent {
        if self.exhausted {
            return ScheduleEvent::Exhausted;
        }
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.plateau_counter = 0;
            return ScheduleEvent::Improved;
        }
        self.plateau_counter += 1;
        if self.plateau_counter < self.config.patience {
            return ScheduleEvent::Waiting;
        }
        self.plateau_counter = 0;
        match self.phase {
            Phase::Adam => {
                self.phase = Phase::Sgd;
                self.learning_rate = self.config.sgd_lr;
                ScheduleEvent::SwitchedToSgd
            }
            Phase::Sgd if self.decays < self.config.max_decays => {
                self.decays += 1;
                self.learning_rate *= self.config.decay;
                ScheduleEvent::Decayed
            }
            Phase::Sgd => {
                self.exhausted = true;
                ScheduleEvent::Exhausted
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn store_with(value: f32) -> (ParamStore, Tensor) {
        let mut store = ParamStore::new();
        let w = store
            .insert("w", crate::ParamKind::Weight, Tensor::parameter(&[1], vec![value]).unwrap())
            .unwrap();
        (store, w)
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let (store, w) = store_with(0.0);
        crate::ops::sum(&w).backward().unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::default());
        opt.step(&store);
        assert!((w.item() + 1e-4).abs() < 1e-9, "{}", w.item());
    }

    #[test]
    fn flat_losses_switch_after_patience() {
        let mut opt = OptimizerState::new(OptimizerConfig {
            patience: 2,
            ..Default::default()
        });
        assert_eq!(opt.schedule_update(1.0), ScheduleEvent::Improved);
        assert_eq!(opt.schedule_update(1.0), ScheduleEvent::Waiting);
        assert_eq!(opt.schedule_update(1.0), ScheduleEvent::SwitchedToSgd);
        assert_eq!(opt.phase, Phase::Sgd);
        assert_eq!(opt.learning_rate, 1e-3);
    }

    #[test]
    fn sgd_decays_twice_then_exhausts() {
        let mut opt = OptimizerState::new(OptimizerConfig {
            patience: 1,
            ..Default::default()
        });
        let events: Vec<_> = (0..6).map(|_| opt.schedule_update(1.0)).collect();
        use ScheduleEvent::*;
        assert_eq!(events, vec![Improved, SwitchedToSgd, Decayed, Decayed, Exhausted, Exhausted]);
        assert!((opt.learning_rate - 1e-5).abs() < 1e-12);
        assert!(opt.is_exhausted());
    }

    #[test]
    fn buffers_only_for_seen_parameters() {
        let mut store = ParamStore::new();
        let a = store.insert("a", crate::ParamKind::Weight, Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        store.insert("b", crate::ParamKind::Weight, Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        crate::ops::sum(&a).backward().unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::default());
        opt.step(&store);
        assert_eq!(opt.tracked(), vec!["a".to_string()]);
    }

    #[test]
    fn nesterov_step_matches_closed_form() {
        let (store, w) = store_with(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig {
            patience: 1,
            ..Default::default()
        });
        opt.schedule_update(1.0);
        opt.schedule_update(1.0);
        crate::ops::sum(&w).backward().unwrap();
        opt.step(&store);
        // v = 1, update = g + 0.9·v = 1.9
        assert!((w.item() - (1.0 - 1e-3 * 1.9)).abs() < 1e-7);
    }
}
