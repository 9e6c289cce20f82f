//! Two-stage training protocol.
//!
//! Stage 1 trains the models individually: the micro model with full
//! cross-entropy on the fully-annotated pool, the macro model with partial
//! cross-entropy on the scribbled pool. Stage 2 trains jointly on the weak
//! pool only: per batch the micro model's Monte-Carlo uncertainty gates a KL
//! loss that updates the macro model, then the blend rate derived from the
//! same uncertainty pulls the micro parameters toward the macro parameters.
//!
//! Stage 2 reads weak samples through [`WeakView`], which exposes no full
//! mask, so full annotations are unreachable there by construction (except
//! through validation, which uses the separate validation split).

mod eval;
mod optimizer;
mod report;

pub use eval::{argmax_labels, evaluate, stack_images};
pub use optimizer::{schedule_lr, Sgd};
pub use report::{EpochRow, EvalMetrics, ModelRole, Phase, RunSummary, TrainReport};

use std::time::Instant;

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, ParamVector};
use crate::config::ExperimentConfig;
use crate::datagen::{one_hot, DatasetSplit, ImageSample};
use crate::error::{Error, Result};
use crate::losses;
use crate::num::Real;
use crate::rng::{derive_u64, stream};
use crate::uema::{compute_alpha_batch, uema_update, UemaState};
use crate::uncertainty::mc_uncertainty_batch;

/// Stage-2 view of a weakly-annotated sample: the full mask is not reachable
/// through this type.
struct WeakView<'a, F> {
    id: &'a str,
    image: &'a Array3<F>,
    scribble: &'a Array2<u8>,
    indicator: &'a Array2<u8>,
}

impl<'a, F> WeakView<'a, F> {
    fn of(sample: &'a ImageSample<F>) -> Self {
        WeakView {
            id: &sample.id,
            image: &sample.image,
            scribble: &sample.scribble_mask,
            indicator: &sample.indicator,
        }
    }
}

/// One supervised training item: an image and its target mask, with an
/// optional indicator restricting the loss to scribbled pixels.
struct TrainItem<'a, F> {
    id: &'a str,
    image: &'a Array3<F>,
    target: &'a Array2<u8>,
    indicator: Option<&'a Array2<u8>>,
}

fn full_items<F>(samples: &[ImageSample<F>]) -> Vec<TrainItem<'_, F>> {
    samples
        .iter()
        .map(|s| TrainItem {
            id: &s.id,
            image: &s.image,
            target: &s.full_mask,
            indicator: None,
        })
        .collect()
}

fn weak_items<'a, F>(views: &'a [WeakView<'a, F>]) -> Vec<TrainItem<'a, F>> {
    views
        .iter()
        .map(|v| TrainItem {
            id: v.id,
            image: v.image,
            target: v.scribble,
            indicator: Some(v.indicator),
        })
        .collect()
}

fn flip_image<F: Real>(img: &Array3<F>) -> Array3<F> {
    img.slice(s![.., ..;-1, ..]).to_owned()
}

fn flip_mask(m: &Array2<u8>) -> Array2<u8> {
    m.slice(s![.., ..;-1]).to_owned()
}

/// Assembled mini-batch: images plus per-image one-hot targets.
struct Batch<F> {
    images: Array4<F>,
    labels: Vec<Array3<u8>>,
    indicators: Vec<Option<Array2<u8>>>,
    ids: Vec<String>,
}

fn assemble<F: Real>(
    items: &[TrainItem<'_, F>],
    idxs: &[usize],
    num_classes: usize,
    hflip: bool,
    aug_rng: &mut ChaCha8Rng,
) -> Batch<F> {
    let (h, w, c) = items[idxs[0]].image.dim();
    let mut images = Array4::<F>::zeros((idxs.len(), h, w, c));
    let mut labels = Vec::with_capacity(idxs.len());
    let mut indicators = Vec::with_capacity(idxs.len());
    let mut ids = Vec::with_capacity(idxs.len());
    for (i, &idx) in idxs.iter().enumerate() {
        let item = &items[idx];
        let flip = hflip && aug_rng.random_range(0.0..1.0) < 0.5;
        if flip {
            images.index_axis_mut(Axis(0), i).assign(&flip_image(item.image));
            labels.push(one_hot(&flip_mask(item.target), num_classes));
            indicators.push(item.indicator.map(flip_mask));
        } else {
            images.index_axis_mut(Axis(0), i).assign(item.image);
            labels.push(one_hot(item.target, num_classes));
            indicators.push(item.indicator.map(|m| m.clone()));
        }
        ids.push(item.id.to_string());
    }
    Batch {
        images,
        labels,
        indicators,
        ids,
    }
}

fn diverged(phase: Phase, epoch: usize, step: usize, lr: f64, ids: &[String], what: &str) -> Error {
    Error::Diverged(format!(
        "{} epoch {epoch} step {step} lr {lr:.6} batch {ids:?}: non-finite {what}",
        phase.as_str()
    ))
}

/// One supervised epoch (cross-entropy, or partial cross-entropy when items
/// carry indicators). Returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
fn supervised_epoch<F: Real>(
    net: &mut Backbone<F>,
    opt: &mut Sgd<F>,
    items: &[TrainItem<'_, F>],
    cfg: &ExperimentConfig,
    phase: Phase,
    epoch: usize,
    total_steps: usize,
    global_step: &mut usize,
) -> Result<f64> {
    let num_classes = cfg.backbone.num_classes;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut stream(
        cfg.seed,
        &format!("{}-shuffle", phase.as_str()),
        epoch as u64,
    ));
    let mut aug_rng = stream(cfg.seed, &format!("{}-augment", phase.as_str()), epoch as u64);

    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for (step, chunk) in order.chunks(cfg.train.batch_size).enumerate() {
        let batch = assemble(items, chunk, num_classes, cfg.data.hflip_augment, &mut aug_rng);
        let b = chunk.len();
        let (probs, cache) = net.forward_cached(&batch.images)?;
        let mut dprobs = Array4::<F>::zeros(probs.raw_dim());
        let mut batch_loss = F::zero();
        let inv_b = F::from_f64(1.0 / b as f64);
        for i in 0..b {
            let m = probs.index_axis(Axis(0), i).to_owned();
            let (loss_i, grad_i) = match &batch.indicators[i] {
                None => (
                    losses::cross_entropy(&m, &batch.labels[i])?,
                    losses::cross_entropy_grad(&m, &batch.labels[i])?,
                ),
                Some(ind) => (
                    losses::partial_cross_entropy(&m, &batch.labels[i], ind)?,
                    losses::partial_cross_entropy_grad(&m, &batch.labels[i], ind)?,
                ),
            };
            batch_loss = batch_loss + loss_i * inv_b;
            dprobs
                .index_axis_mut(Axis(0), i)
                .assign(&grad_i.mapv(|g| g * inv_b));
        }
        let lr = schedule_lr(&cfg.optim, *global_step, total_steps);
        if !batch_loss.as_f64().is_finite() {
            return Err(diverged(phase, epoch, step, lr, &batch.ids, "loss"));
        }
        let (grads, _) = net.backward(&cache, &dprobs);
        opt.step(net, &grads, F::from_f64(lr))?;
        *global_step += 1;
        loss_sum += batch_loss.as_f64();
        batches += 1;
    }
    Ok(if batches > 0 { loss_sum / batches as f64 } else { 0.0 })
}

/// Tracks the best micro validation Dice and the parameters that achieved it.
pub struct BestTracker<F> {
    pub best: Option<(f64, Phase, usize, ParamVector<F>)>,
}

impl<F: Real> BestTracker<F> {
    fn new() -> Self {
        BestTracker { best: None }
    }

    fn observe(&mut self, dice: f64, phase: Phase, epoch: usize, net: &Backbone<F>) {
        if self.best.as_ref().map_or(true, |(d, _, _, _)| dice > *d) {
            self.best = Some((dice, phase, epoch, net.params()));
        }
    }
}

fn should_validate(cfg: &ExperimentConfig, epoch: usize, total_epochs: usize) -> bool {
    if total_epochs == 0 {
        return false;
    }
    let last = epoch + 1 == total_epochs;
    if cfg.train.val_every == 0 {
        last
    } else {
        last || (epoch + 1) % cfg.train.val_every == 0
    }
}

/// Output of the individual training stage.
pub struct Stage1Output<F: Real> {
    pub micro: Backbone<F>,
    pub macro_net: Option<Backbone<F>>,
    pub rows: Vec<EpochRow>,
    pub best: BestTracker<F>,
}

/// Stage 1: train the micro model on the fully-annotated pool and (when the
/// macro model is enabled) the macro model on the weak pool, independently.
pub fn train_stage1<F: Real>(
    split: &DatasetSplit<F>,
    cfg: &ExperimentConfig,
) -> Result<Stage1Output<F>> {
    cfg.validate()?;
    if split.train_full.is_empty() {
        return Err(Error::arg("stage 1 needs at least one fully-annotated sample"));
    }
    if cfg.flags.use_macro && split.train_weak.is_empty() {
        return Err(Error::arg("stage 1 needs weakly-annotated samples for the macro model"));
    }

    let mut rows = Vec::new();
    let mut best = BestTracker::new();

    let mut micro = Backbone::<F>::new(cfg.backbone.clone(), derive_u64(cfg.seed, "micro-init", 0))?;
    {
        let items = full_items(&split.train_full);
        let mut opt = Sgd::new(&cfg.optim);
        let epochs = cfg.train.stage1_micro_epochs;
        let steps_per_epoch = items.len().div_ceil(cfg.train.batch_size);
        let total_steps = epochs * steps_per_epoch;
        let mut global_step = 0usize;
        micro.dropout_enabled = true;
        for epoch in 0..epochs {
            let lr = schedule_lr(&cfg.optim, global_step, total_steps);
            let loss = supervised_epoch(
                &mut micro,
                &mut opt,
                &items,
                cfg,
                Phase::Stage1Micro,
                epoch,
                total_steps,
                &mut global_step,
            )?;
            let mut row = EpochRow {
                phase: Phase::Stage1Micro,
                epoch,
                lr,
                micro_loss: Some(loss),
                macro_loss: None,
                macro_pce: None,
                macro_kl: None,
                alpha_mean: None,
                val_micro: None,
                val_macro: None,
            };
            if should_validate(cfg, epoch, epochs) && !split.val.is_empty() {
                let m = evaluate(&mut micro, &split.val, cfg.train.batch_size, cfg.pixel_size)?;
                best.observe(m.avg_dice, Phase::Stage1Micro, epoch, &micro);
                row.val_micro = Some(m);
            }
            rows.push(row);
        }
        micro.dropout_enabled = false;
    }

    let macro_net = if cfg.flags.use_macro {
        let mut net = Backbone::<F>::new(cfg.backbone.clone(), derive_u64(cfg.seed, "macro-init", 0))?;
        let usable: Vec<WeakView<'_, F>> = split
            .train_weak
            .iter()
            .filter(|s| {
                let ok = s.indicator.iter().any(|&v| v != 0);
                if !ok {
                    log::warn!("skipping weak sample {} with empty indicator", s.id);
                }
                ok
            })
            .map(WeakView::of)
            .collect();
        if usable.is_empty() {
            return Err(Error::arg("no weak sample has indicated pixels"));
        }
        let items = weak_items(&usable);
        let mut opt = Sgd::new(&cfg.optim);
        let epochs = cfg.train.stage1_macro_epochs;
        let steps_per_epoch = items.len().div_ceil(cfg.train.batch_size);
        let total_steps = epochs * steps_per_epoch;
        let mut global_step = 0usize;
        net.dropout_enabled = true;
        for epoch in 0..epochs {
            let lr = schedule_lr(&cfg.optim, global_step, total_steps);
            let loss = supervised_epoch(
                &mut net,
                &mut opt,
                &items,
                cfg,
                Phase::Stage1Macro,
                epoch,
                total_steps,
                &mut global_step,
            )?;
            let mut row = EpochRow {
                phase: Phase::Stage1Macro,
                epoch,
                lr,
                micro_loss: None,
                macro_loss: Some(loss),
                macro_pce: Some(loss),
                macro_kl: None,
                alpha_mean: None,
                val_micro: None,
                val_macro: None,
            };
            if should_validate(cfg, epoch, epochs) && !split.val.is_empty() {
                row.val_macro =
                    Some(evaluate(&mut net, &split.val, cfg.train.batch_size, cfg.pixel_size)?);
            }
            rows.push(row);
        }
        net.dropout_enabled = false;
        Some(net)
    } else {
        None
    };

    Ok(Stage1Output {
        micro,
        macro_net,
        rows,
        best,
    })
}

/// Output of the joint training stage.
pub struct Stage2Output {
    pub rows: Vec<EpochRow>,
    pub uema: UemaState,
}

/// Stage 2: joint training on weakly-labeled samples only. Per batch the
/// macro model takes one gradient step on (optionally) partial cross-entropy
/// plus the uncertainty-gated KL toward the micro model's prediction; the
/// micro model is then pulled toward the macro parameters at the adaptive
/// rate alpha.
pub fn train_stage2<F: Real>(
    micro: &mut Backbone<F>,
    macro_net: &mut Backbone<F>,
    split: &DatasetSplit<F>,
    cfg: &ExperimentConfig,
    best: &mut BestTracker<F>,
) -> Result<Stage2Output> {
    cfg.validate()?;
    let flags = &cfg.flags;
    let mut rows = Vec::new();
    let mut uema_state = UemaState::default();
    if !flags.use_macro_flow && !flags.use_micro_flow && !flags.stage2_micro_grad {
        return Ok(Stage2Output {
            rows,
            uema: uema_state,
        });
    }
    let views: Vec<WeakView<'_, F>> = split
        .train_weak
        .iter()
        .filter(|s| s.indicator.iter().any(|&v| v != 0))
        .map(WeakView::of)
        .collect();
    if views.is_empty() {
        return Err(Error::arg("stage 2 needs weakly-annotated samples"));
    }
    let items = weak_items(&views);
    let num_classes = cfg.backbone.num_classes;
    let eff_tau = F::from_f64(cfg.effective_tau());
    let lambda = F::from_f64(flags.lambda_kl);
    let need_mc = (flags.use_macro_flow && !flags.no_uncertainty_kl)
        || (flags.use_micro_flow && flags.fixed_alpha.is_none());

    let mut macro_opt = Sgd::new(&cfg.optim);
    let mut micro_opt = Sgd::new(&cfg.optim);
    let epochs = cfg.train.stage2_epochs;
    let steps_per_epoch = items.len().div_ceil(cfg.train.batch_size);
    let total_steps = epochs * steps_per_epoch;
    let mut global_step = 0usize;

    // Cycled batches from the full pool for the optional micro fine-tuning.
    let full_pool = full_items(&split.train_full);
    let mut full_cursor = 0usize;
    let mut full_order: Vec<usize> = (0..full_pool.len()).collect();
    let mut full_shuffle_rng = stream(cfg.seed, "stage2-full-cycle", 0);
    full_order.shuffle(&mut full_shuffle_rng);
    let mut micro_grad_step = 0usize;

    for epoch in 0..epochs {
        let lr_epoch = schedule_lr(&cfg.optim, global_step, total_steps);
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "stage2-shuffle", epoch as u64));
        let mut aug_rng = stream(cfg.seed, "stage2-augment", epoch as u64);

        let mut pce_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut micro_loss_sum = 0.0;
        let mut alpha_sum = 0.0;
        let mut batches = 0usize;

        for (step, chunk) in order.chunks(cfg.train.batch_size).enumerate() {
            let batch = assemble(&items, chunk, num_classes, cfg.data.hflip_augment, &mut aug_rng);
            let b = chunk.len();

            let (mc_mean, umaps) = if need_mc {
                let seed = derive_u64(cfg.seed, "stage2-mc", global_step as u64);
                let (mean, u) =
                    mc_uncertainty_batch(micro, &batch.images, cfg.uncertainty.mc_samples, seed)?;
                (Some(mean), Some(u))
            } else {
                (None, None)
            };

            if flags.use_macro_flow {
                let teacher = if flags.no_uncertainty_kl {
                    micro.forward_deterministic(&batch.images)?
                } else {
                    mc_mean.clone().expect("MC mean present when the mask is used")
                };
                macro_net.dropout_enabled = true;
                let (probs, cache) = macro_net.forward_cached(&batch.images)?;
                let (h, w, _) = batch.labels[0].dim();
                let zero_u = Array2::<F>::zeros((h, w));
                let mut dprobs = Array4::<F>::zeros(probs.raw_dim());
                let inv_b = F::from_f64(1.0 / b as f64);
                let mut batch_pce = F::zero();
                let mut batch_kl = F::zero();
                for i in 0..b {
                    let m = probs.index_axis(Axis(0), i).to_owned();
                    let t = teacher.index_axis(Axis(0), i).to_owned();
                    let u_i = umaps.as_ref().map(|u| &u[i]).unwrap_or(&zero_u);
                    let (kl_i, kl_grad) = if flags.no_uncertainty_kl {
                        (
                            losses::uncertainty_kl(&m, &t, &zero_u, eff_tau)?,
                            losses::uncertainty_kl_grad(&m, &t, &zero_u, eff_tau)?,
                        )
                    } else {
                        (
                            losses::uncertainty_kl(&m, &t, u_i, eff_tau)?,
                            losses::uncertainty_kl_grad(&m, &t, u_i, eff_tau)?,
                        )
                    };
                    let mut grad_i = kl_grad.mapv(|g| g * lambda);
                    let mut pce_i = F::zero();
                    if flags.stage2_keep_pce {
                        let ind = batch.indicators[i].as_ref().expect("weak batch indicator");
                        pce_i = losses::partial_cross_entropy(&m, &batch.labels[i], ind)?;
                        grad_i = grad_i + losses::partial_cross_entropy_grad(&m, &batch.labels[i], ind)?;
                    }
                    batch_pce = batch_pce + pce_i * inv_b;
                    batch_kl = batch_kl + kl_i * inv_b;
                    dprobs
                        .index_axis_mut(Axis(0), i)
                        .assign(&grad_i.mapv(|g| g * inv_b));
                }
                let lr = schedule_lr(&cfg.optim, global_step, total_steps);
                let total = batch_pce + lambda * batch_kl;
                if !total.as_f64().is_finite() {
                    return Err(diverged(Phase::Stage2, epoch, step, lr, &batch.ids, "macro loss"));
                }
                let (grads, _) = macro_net.backward(&cache, &dprobs);
                macro_opt.step(macro_net, &grads, F::from_f64(lr))?;
                macro_net.dropout_enabled = false;
                pce_sum += batch_pce.as_f64();
                kl_sum += batch_kl.as_f64();
            }

            if flags.use_micro_flow {
                let alpha = match flags.fixed_alpha {
                    Some(a) => F::from_f64(a),
                    None => compute_alpha_batch(
                        umaps.as_ref().expect("uncertainty maps for adaptive alpha"),
                        eff_tau,
                    )?,
                };
                alpha_sum += alpha.as_f64();
                uema_state.record(alpha.as_f64());
                if (global_step + 1) % cfg.train.uema_every_n_steps == 0 {
                    let blended = uema_update(&micro.params(), &macro_net.params(), alpha)?;
                    micro.set_params(&blended)?;
                }
            }

            if flags.stage2_micro_grad {
                // One supervised step on the full pool per weak batch.
                let mut idxs = Vec::with_capacity(cfg.train.batch_size.min(full_pool.len()));
                for _ in 0..cfg.train.batch_size.min(full_pool.len()) {
                    if full_cursor >= full_order.len() {
                        full_order.shuffle(&mut full_shuffle_rng);
                        full_cursor = 0;
                    }
                    idxs.push(full_order[full_cursor]);
                    full_cursor += 1;
                }
                let fb = assemble(&full_pool, &idxs, num_classes, false, &mut aug_rng);
                micro.dropout_enabled = true;
                let (probs, cache) = micro.forward_cached(&fb.images)?;
                let mut dprobs = Array4::<F>::zeros(probs.raw_dim());
                let inv_b = F::from_f64(1.0 / idxs.len() as f64);
                let mut loss = F::zero();
                for i in 0..idxs.len() {
                    let m = probs.index_axis(Axis(0), i).to_owned();
                    loss = loss + losses::cross_entropy(&m, &fb.labels[i])? * inv_b;
                    let g = losses::cross_entropy_grad(&m, &fb.labels[i])?;
                    dprobs.index_axis_mut(Axis(0), i).assign(&g.mapv(|v| v * inv_b));
                }
                let lr = schedule_lr(&cfg.optim, micro_grad_step, total_steps);
                if !loss.as_f64().is_finite() {
                    return Err(diverged(Phase::Stage2, epoch, step, lr, &fb.ids, "micro loss"));
                }
                let (grads, _) = micro.backward(&cache, &dprobs);
                micro_opt.step(micro, &grads, F::from_f64(lr))?;
                micro.dropout_enabled = false;
                micro_grad_step += 1;
                micro_loss_sum += loss.as_f64();
            }

            global_step += 1;
            batches += 1;
        }

        let denom = batches.max(1) as f64;
        let mut row = EpochRow {
            phase: Phase::Stage2,
            epoch,
            lr: lr_epoch,
            micro_loss: flags.stage2_micro_grad.then_some(micro_loss_sum / denom),
            macro_loss: flags
                .use_macro_flow
                .then_some(pce_sum / denom + flags.lambda_kl * (kl_sum / denom)),
            macro_pce: flags.use_macro_flow.then_some(pce_sum / denom),
            macro_kl: flags.use_macro_flow.then_some(kl_sum / denom),
            alpha_mean: flags.use_micro_flow.then_some(alpha_sum / denom),
            val_micro: None,
            val_macro: None,
        };
        if should_validate(cfg, epoch, epochs) && !split.val.is_empty() {
            let vm = evaluate(micro, &split.val, cfg.train.batch_size, cfg.pixel_size)?;
            best.observe(vm.avg_dice, Phase::Stage2, epoch, micro);
            row.val_micro = Some(vm);
            row.val_macro =
                Some(evaluate(macro_net, &split.val, cfg.train.batch_size, cfg.pixel_size)?);
        }
        rows.push(row);
    }

    Ok(Stage2Output {
        rows,
        uema: uema_state,
    })
}

/// A finished experiment: final models, the full report, and the
/// deterministic summary.
pub struct RunOutcome<F: Real> {
    pub micro: Backbone<F>,
    pub macro_net: Option<Backbone<F>>,
    pub report: TrainReport,
    pub summary: RunSummary,
    /// Parameters of the micro model at its best validation epoch.
    pub best_micro_params: Option<ParamVector<F>>,
}

/// Which model a configuration designates as its prediction output: the
/// micro model, unless only the macro flow is active (then the macro model is
/// the one the joint stage improves).
pub fn deliverable_role(cfg: &ExperimentConfig) -> ModelRole {
    if cfg.flags.use_macro && cfg.flags.use_macro_flow && !cfg.flags.use_micro_flow {
        ModelRole::Macro
    } else {
        ModelRole::Micro
    }
}

/// Run both stages and the final test evaluation.
pub fn run_experiment<F: Real>(
    cfg: &ExperimentConfig,
    split: &DatasetSplit<F>,
) -> Result<RunOutcome<F>> {
    cfg.validate()?;
    if split.test.is_empty() {
        return Err(Error::arg("experiment needs a nonempty test split"));
    }
    let started = Instant::now();

    let stage1 = train_stage1(split, cfg)?;
    let Stage1Output {
        mut micro,
        mut macro_net,
        mut rows,
        mut best,
    } = stage1;

    let mut alpha_history = Vec::new();
    if let Some(macro_ref) = macro_net.as_mut() {
        if cfg.train.stage2_epochs > 0 {
            let out = train_stage2(&mut micro, macro_ref, split, cfg, &mut best)?;
            rows.extend(out.rows);
            alpha_history = out.uema.alpha_history;
        }
    }

    let test_micro = evaluate(&mut micro, &split.test, cfg.train.batch_size, cfg.pixel_size)?;
    let test_macro = match macro_net.as_mut() {
        Some(net) => Some(evaluate(net, &split.test, cfg.train.batch_size, cfg.pixel_size)?),
        None => None,
    };

    let deliverable = deliverable_role(cfg);
    let test_deliverable = match deliverable {
        ModelRole::Micro => test_micro.clone(),
        ModelRole::Macro => test_macro.clone().expect("macro deliverable requires macro model"),
    };
    let mean_alpha = if alpha_history.is_empty() {
        None
    } else {
        Some(alpha_history.iter().sum::<f64>() / alpha_history.len() as f64)
    };

    let summary = RunSummary {
        seed: cfg.seed,
        composition: split.composition,
        pixel_size: cfg.pixel_size,
        deliverable,
        test_deliverable,
        test_micro: test_micro.clone(),
        test_macro: test_macro.clone(),
        mean_alpha,
    };
    let report = TrainReport {
        rows,
        alpha_history,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        test_micro: Some(test_micro),
        test_macro,
        best_micro_val: best.best.as_ref().map(|(d, p, e, _)| (*d, *p, *e)),
    };
    Ok(RunOutcome {
        micro,
        macro_net,
        report,
        summary,
        best_micro_params: best.best.map(|(_, _, _, params)| params),
    })
}
