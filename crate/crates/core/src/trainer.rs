//! Maximum-likelihood training on shuffled windows with Adam.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use stcnn_tensor::{Adam, AdamConfig, ParameterStore, Tensor};

use crate::checkpoint::Checkpoint;
use crate::data::{collect_windows, Dataset, ReferenceImage, SegmentWindow};
use crate::forecast::stream_rng;
use crate::grid::Point;
use crate::metrics::{cross_entropy, NllSummary};
use crate::provider::GridModel;
use crate::{Error, Result};

/// A model whose parameters can be fitted by per-window NLL gradients.
pub trait Trainable: GridModel + Send {
    fn params(&self) -> &ParameterStore;

    fn params_mut(&mut self) -> &mut ParameterStore;

    /// Self-describing `key=value` header of the model's checkpoints.
    fn checkpoint_header(&self) -> Vec<(String, String)>;

    /// NLL of `target` given `frames`, and its gradient in store order.
    fn window_loss(
        &self,
        frames: &[Point],
        target: Point,
        reference: Option<&ReferenceImage>,
    ) -> Result<(f64, Vec<Tensor<f32>>)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Save the training state every this many steps (0 disables).
    pub checkpoint_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Share of the training trajectories held out for model selection.
    pub validation_fraction: f64,
    /// Stop after this many optimizer steps in total, if set.
    pub max_steps: Option<u64>,
    /// Evaluate before the first step and record it as epoch 0.
    pub eval_initial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            step_size: 1e-3,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_path: None,
            validation_fraction: 0.1,
            max_steps: None,
            eval_initial: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size {} must be positive", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        if self.checkpoint_every > 0 && self.checkpoint_path.is_none() {
            return Err(Error::Config("checkpoint_every needs a checkpoint path".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub split: Split,
    pub mean_nll_per_step: f64,
    pub sum_nll_per_traj: f64,
}

/// `epoch,split,mean_nll_per_step,sum_nll_per_traj`.
pub fn write_loss_csv(w: &mut impl Write, curve: &[LossRecord]) -> Result<()> {
    writeln!(w, "epoch,split,mean_nll_per_step,sum_nll_per_traj")?;
    for r in curve {
        writeln!(w, "{},{},{},{}", r.epoch, r.split, r.mean_nll_per_step, r.sum_nll_per_traj)?;
    }
    Ok(())
}

/// Per-step and per-trajectory NLL of `model` on `data`; reads only.
pub fn evaluate_nll(model: &dyn GridModel, data: &Dataset) -> Result<NllSummary> {
    cross_entropy(model, data)
}

/// Holds out `ceil(fraction · n)` trajectories (chosen by `seed`) for
/// validation. Returns `(fit, validation)`.
pub fn split_validation(data: &Dataset, fraction: f64, seed: u64) -> (Dataset, Option<Dataset>) {
    let n = data.len();
    let held = ((fraction * n as f64).ceil() as usize).min(n.saturating_sub(1));
    if fraction <= 0.0 || held == 0 {
        return (data.clone(), None);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 1 << 40));
    let (val, fit) = order.split_at(held);
    let (mut val, mut fit) = (val.to_vec(), fit.to_vec());
    val.sort();
    fit.sort();
    (data.subset(&fit), Some(data.subset(&val)))
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub adam: Adam,
    pub curve: Vec<LossRecord>,
    /// Best validation per-step NLL so far and the parameters that reached it.
    pub best: Option<(f64, usize, ParameterStore)>,
    epoch_sum: f64,
    epoch_windows: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig, params: &ParameterStore) -> Self {
        Self {
            step: 0,
            adam: Adam::new(AdamConfig::with_step_size(config.step_size), params),
            curve: Vec::new(),
            best: None,
            epoch_sum: 0.0,
            epoch_windows: 0,
        }
    }

    /// Checkpoint holding `header`, the parameters, optimizer moments and the
    /// best-so-far parameters.
    pub fn to_checkpoint(&self, header: Vec<(String, String)>, params: &ParameterStore) -> Result<Checkpoint> {
        let mut c = Checkpoint::new(header);
        c.set("train.step", self.step);
        c.set("train.adam_steps", self.adam.steps());
        c.set("train.step_size", self.adam.config.step_size);
        c.set("train.epoch_sum", f64_bits(self.epoch_sum));
        c.set("train.epoch_windows", self.epoch_windows);
        let curve: Vec<String> = self
            .curve
            .iter()
            .map(|r| format!("{}:{}:{}:{}", r.epoch, r.split, f64_bits(r.mean_nll_per_step), f64_bits(r.sum_nll_per_traj)))
            .collect();
        c.set("train.curve", curve.join(";"));
        c.stores.push(("params".into(), params.clone()));
        c.stores.push(("adam".into(), self.adam.state(params)?));
        if let Some((score, epoch, best)) = &self.best {
            c.set("train.best_score", f64_bits(*score));
            c.set("train.best_epoch", epoch);
            c.stores.push(("best".into(), best.clone()));
        }
        Ok(c)
    }

    /// Restores the state stored by [`TrainState::to_checkpoint`].
    pub fn from_checkpoint(c: &Checkpoint, params: &ParameterStore) -> Result<Self> {
        let adam_state = c
            .store("adam")
            .ok_or_else(|| Error::Checkpoint("no optimizer state; not a training checkpoint".into()))?;
        let config = AdamConfig::with_step_size(c.parse("train.step_size")?);
        let adam = Adam::from_state(config, c.parse("train.adam_steps")?, params, adam_state)?;
        let curve = c
            .require("train.curve")?
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let f: Vec<&str> = s.split(':').collect();
                let bad = || Error::Checkpoint(format!("bad loss record {s:?}"));
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(LossRecord {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    split: match f[1] {
                        "train" => Split::Train,
                        "validation" => Split::Validation,
                        _ => return Err(bad()),
                    },
                    mean_nll_per_step: parse_bits(f[2])?,
                    sum_nll_per_traj: parse_bits(f[3])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let best = match c.store("best") {
            Some(b) => Some((parse_bits(c.require("train.best_score")?)?, c.parse("train.best_epoch")?, b.clone())),
            None => None,
        };
        Ok(Self {
            step: c.parse("train.step")?,
            adam,
            curve,
            best,
            epoch_sum: parse_bits(c.require("train.epoch_sum")?)?,
            epoch_windows: c.parse("train.epoch_windows")?,
        })
    }
}

fn f64_bits(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_bits(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Checkpoint(format!("bad float bits {s:?}")))
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub curve: Vec<LossRecord>,
    pub steps: u64,
    /// Epoch whose parameters were kept, when a validation set was used.
    pub best_epoch: Option<usize>,
    pub state: TrainState,
}

/// Runs the optimizer on `fit` windows. With a validation set the best
/// epoch's parameters are restored at the end.
pub fn train<M: Trainable>(
    model: &mut M,
    fit: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_from(model, fit, validation, config, None)
}

/// As [`train`], continuing from a saved state.
pub fn train_from<M: Trainable>(
    model: &mut M,
    fit: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
    state: Option<TrainState>,
) -> Result<TrainReport> {
    config.validate()?;
    let s = model.window_len();
    let set = collect_windows(&fit.trajectories, s);
    let windows: Vec<SegmentWindow> = set.windows;
    if windows.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no training trajectory has the {} points one window needs",
            s + 1
        )));
    }
    let used_traj = fit.len() - set.skipped;
    let refs: Vec<Option<&ReferenceImage>> = fit
        .trajectories
        .iter()
        .map(|t| fit.reference(t))
        .collect::<Result<_>>()?;
    let n = windows.len();
    let per_epoch = n.div_ceil(config.batch_size) as u64;
    let mut total = per_epoch.saturating_mul(config.epochs as u64);
    if let Some(m) = config.max_steps {
        total = total.min(m);
    }
    let mut st = state.unwrap_or_else(|| TrainState::new(config, model.params()));

    if st.step == 0 && st.curve.is_empty() && config.eval_initial {
        let tr = evaluate_nll(model, fit)?;
        st.curve.push(record(0, Split::Train, &tr));
        if let Some(v) = validation {
            let vs = evaluate_nll(model, v)?;
            st.curve.push(record(0, Split::Validation, &vs));
            st.best = Some((vs.per_step, 0, model.params().clone()));
        }
    }

    let mut order: Vec<usize> = Vec::new();
    let mut order_epoch = u64::MAX;
    while st.step < total {
        let epoch = st.step / per_epoch;
        if epoch != order_epoch {
            order = (0..n).collect();
            order.shuffle(&mut stream_rng(config.seed, epoch));
            order_epoch = epoch;
        }
        let pos = (st.step % per_epoch) as usize;
        let batch = &order[pos * config.batch_size..((pos + 1) * config.batch_size).min(n)];
        let model_ref: &M = model;
        let results: Vec<(f64, Vec<Tensor<f32>>)> = batch
            .par_iter()
            .map(|&i| {
                let w = &windows[i];
                model_ref.window_loss(&w.frames, w.target, refs[w.trajectory])
            })
            .collect::<Result<_>>()?;
        let loss: f64 = results.iter().map(|r| r.0).sum::<f64>();
        let mean = loss / batch.len() as f64;
        let finite = mean.is_finite() && results.iter().all(|r| r.1.iter().all(|g| g.all_finite()));
        if !finite {
            return Err(Error::Diverged {
                step: st.step,
                loss: mean,
            });
        }
        let mut grads = model.params().zeros_like();
        let scale = 1.0 / batch.len() as f32;
        for (_, g) in &results {
            for (acc, gi) in grads.iter_mut().zip(g) {
                for (a, v) in acc.data_mut().iter_mut().zip(gi.data()) {
                    *a += v * scale;
                }
            }
        }
        st.adam.step(model.params_mut(), &grads)?;
        st.step += 1;
        st.epoch_sum += loss;
        st.epoch_windows += batch.len();

        if st.step % per_epoch == 0 {
            let e = (st.step.div_ceil(per_epoch)) as usize;
            st.curve.push(LossRecord {
                epoch: e,
                split: Split::Train,
                mean_nll_per_step: st.epoch_sum / st.epoch_windows as f64,
                sum_nll_per_traj: st.epoch_sum / used_traj as f64 * (n as f64 / st.epoch_windows as f64),
            });
            st.epoch_sum = 0.0;
            st.epoch_windows = 0;
            if let Some(v) = validation {
                let vs = evaluate_nll(model, v)?;
                st.curve.push(record(e, Split::Validation, &vs));
                if st.best.as_ref().is_none_or(|b| vs.per_step < b.0) {
                    st.best = Some((vs.per_step, e, model.params().clone()));
                }
            }
            log::info!(
                "epoch {e} step {} train nll/step {:.4}",
                st.step,
                st.curve.iter().rev().find(|r| r.split == Split::Train).map_or(f64::NAN, |r| r.mean_nll_per_step)
            );
        }
        if config.checkpoint_every > 0 && (st.step % config.checkpoint_every == 0 || st.step == total) {
            let path = config.checkpoint_path.as_ref().expect("validated");
            st.to_checkpoint(model.checkpoint_header(), model.params())?.save(path)?;
        }
    }

    // Partial final epoch: reported, not stored in the state.
    let mut curve = st.curve.clone();
    let mut best = st.best.clone();
    if st.epoch_windows > 0 {
        let e = st.step.div_ceil(per_epoch) as usize;
        curve.push(LossRecord {
            epoch: e,
            split: Split::Train,
            mean_nll_per_step: st.epoch_sum / st.epoch_windows as f64,
            sum_nll_per_traj: st.epoch_sum / used_traj as f64 * (n as f64 / st.epoch_windows as f64),
        });
        if let Some(v) = validation {
            let vs = evaluate_nll(model, v)?;
            curve.push(record(e, Split::Validation, &vs));
            if best.as_ref().is_none_or(|b| vs.per_step < b.0) {
                best = Some((vs.per_step, e, model.params().clone()));
            }
        }
    }
    let best_epoch = match (best, validation) {
        (Some((_, e, p)), Some(_)) => {
            *model.params_mut() = p;
            Some(e)
        }
        _ => None,
    };
    Ok(TrainReport {
        curve,
        steps: st.step,
        best_epoch,
        state: st,
    })
}

fn record(epoch: usize, split: Split, s: &NllSummary) -> LossRecord {
    LossRecord {
        epoch,
        split,
        mean_nll_per_step: s.per_step,
        sum_nll_per_traj: s.per_traj,
    }
}
