//! Per-task training objectives over per-position probability rows.
//!
//! Row `t` of `probs` is the model's distribution for target token `targets[t]`.
//! Every loss returns its value and the gradient with respect to `probs`; the
//! model chains the latter through its softmax.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Mat;
use crate::vocab::{role_at, PositionRole, TadParadigm, TaskId, VocabLayout};

/// How detection boundary positions are weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TadObjective {
    /// Cross-entropy scaled by `1 + |argmax − truth| / D` at boundary positions.
    #[default]
    WeightLoss,
    /// The weighted path with the distance factor forced to 1.
    UnitWeight,
    /// Plain cross-entropy at every position.
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the segmentation smoothing term.
    pub smooth_weight: f64,
    /// Number of time tokens; boundary tokens are `[0, boundary_space)`.
    pub boundary_space: usize,
    /// Segmentation class token range, the support of the smoothing term.
    pub tas_classes: Range<usize>,
    /// Targets equal to this token contribute nothing.
    pub pad_index: Option<usize>,
    /// Lower clamp applied before `log`; `None` turns a zero probability into an error.
    pub log_clamp: Option<f64>,
    pub tad_objective: TadObjective,
}

impl LossConfig {
    pub fn for_layout(layout: &VocabLayout) -> Self {
        Self {
            smooth_weight: 0.15,
            boundary_space: layout.time_token_count,
            tas_classes: layout.class_range(TaskId::Tas).expect("segmentation has classes"),
            pad_index: Some(layout.pad_index),
            log_clamp: Some(1e-12),
            tad_objective: TadObjective::WeightLoss,
        }
    }

    pub fn validate(&self, layout: &VocabLayout) -> Result<()> {
        if !(self.smooth_weight >= 0.0) {
            return Err(Error::Config(format!("smoothing weight must be non-negative, got {}", self.smooth_weight)));
        }
        if self.boundary_space != layout.time_token_count {
            return Err(Error::Config(format!(
                "boundary space {} differs from the vocabulary's {} time tokens",
                self.boundary_space, layout.time_token_count
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub value: f64,
    /// `∂value/∂probs`, same shape as the probabilities.
    pub grad: Mat,
}

fn check_shapes(probs: &Mat, targets: &[usize]) -> Result<()> {
    if probs.rows != targets.len() {
        return Err(invalid!("{} probability rows for {} targets", probs.rows, targets.len()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= probs.cols) {
        return Err(invalid!("target token {t} outside {} columns", probs.cols));
    }
    Ok(())
}

/// `(−log p, ∂/∂p)` for one true-token probability.
fn neg_log(p: f64, clamp: Option<f64>, position: usize) -> Result<(f64, f64)> {
    let p = match clamp {
        Some(floor) => p.max(floor),
        None if p <= 0.0 => {
            return Err(Error::Numeric(format!("zero probability for the true token at position {position}")));
        }
        None => p,
    };
    Ok((-p.ln(), -1.0 / p))
}

fn supervised(targets: &[usize], config: &LossConfig) -> usize {
    targets.iter().filter(|&&t| Some(t) != config.pad_index).count()
}

/// Mean `−log p` of the true tokens over non-padding positions.
pub fn cross_entropy(probs: &Mat, targets: &[usize], config: &LossConfig) -> Result<LossOutput> {
    check_shapes(probs, targets)?;
    let n = supervised(targets, config);
    let mut grad = Mat::zeros(probs.rows, probs.cols);
    if n == 0 {
        return Ok(LossOutput { value: 0.0, grad });
    }
    let mut total = 0.0;
    for (t, &target) in targets.iter().enumerate() {
        if Some(target) == config.pad_index {
            continue;
        }
        let (nl, d) = neg_log(probs.at(t, target), config.log_clamp, t)?;
        total += nl;
        grad.row_mut(t)[target] = d / n as f64;
    }
    Ok(LossOutput { value: total / n as f64, grad })
}

/// Frame-wise classification loss for boundary detection.
pub fn loss_gebd(probs: &Mat, targets: &[usize], config: &LossConfig) -> Result<LossOutput> {
    cross_entropy(probs, targets, config)
}

/// Smoothing term alone: `(1/(T·C)) Σ_t Σ_c (p[t−1,c] − p[t,c])²` over `classes`.
pub fn smoothing_term(probs: &Mat, classes: Range<usize>) -> (f64, Mat) {
    let mut grad = Mat::zeros(probs.rows, probs.cols);
    let t_count = probs.rows;
    let c_count = classes.len();
    if t_count == 0 || c_count == 0 {
        return (0.0, grad);
    }
    let norm = 1.0 / (t_count * c_count) as f64;
    let mut total = 0.0;
    for t in 1..t_count {
        for c in classes.clone() {
            let diff = probs.at(t - 1, c) - probs.at(t, c);
            total += diff * diff;
            grad.data[(t - 1) * probs.cols + c] += 2.0 * norm * diff;
            grad.data[t * probs.cols + c] -= 2.0 * norm * diff;
        }
    }
    (total * norm, grad)
}

/// Frame-wise cross-entropy plus the weighted smoothing term.
pub fn loss_tas(probs: &Mat, targets: &[usize], config: &LossConfig) -> Result<LossOutput> {
    let mut out = cross_entropy(probs, targets, config)?;
    if config.smooth_weight > 0.0 {
        let (smooth, smooth_grad) = smoothing_term(probs, config.tas_classes.clone());
        out.value += config.smooth_weight * smooth;
        out.grad.data.iter_mut().zip(&smooth_grad.data).for_each(|(g, s)| *g += config.smooth_weight * s);
    }
    Ok(out)
}

fn check_tad_roles(targets: &[usize], roles: &[PositionRole], config: &LossConfig) -> Result<()> {
    if roles.len() != targets.len() {
        return Err(invalid!("{} roles for {} targets", roles.len(), targets.len()));
    }
    let dense = roles.first() == Some(&PositionRole::TadFrameClass);
    let paradigm = if dense { TadParadigm::Dense } else { TadParadigm::Sparse };
    for (i, (&role, &target)) in roles.iter().zip(targets).enumerate() {
        if Some(target) == config.pad_index {
            continue;
        }
        let expected = role_at(TaskId::Tad, paradigm, i);
        let ok = match role {
            PositionRole::Eos => !dense && expected == PositionRole::TadStart,
            PositionRole::TadStart | PositionRole::TadEnd => role == expected && target < config.boundary_space,
            _ => role == expected,
        };
        if !ok {
            return Err(invalid!("role {role:?} with token {target} is inconsistent at position {i}"));
        }
    }
    Ok(())
}

/// Detection loss: cross-entropy at class and end-of-sequence positions,
/// distance-weighted cross-entropy at boundary positions.
///
/// The weight `1 + |argmax − truth| / D` takes its argmax over the time tokens and
/// is treated as a constant when differentiating.
pub fn loss_tad(probs: &Mat, targets: &[usize], roles: &[PositionRole], config: &LossConfig) -> Result<LossOutput> {
    check_shapes(probs, targets)?;
    check_tad_roles(targets, roles, config)?;
    if config.tad_objective == TadObjective::CrossEntropy {
        return cross_entropy(probs, targets, config);
    }
    let d = config.boundary_space;
    let n = supervised(targets, config);
    let mut grad = Mat::zeros(probs.rows, probs.cols);
    if n == 0 {
        return Ok(LossOutput { value: 0.0, grad });
    }
    let mut total = 0.0;
    for (t, (&target, &role)) in targets.iter().zip(roles).enumerate() {
        if Some(target) == config.pad_index {
            continue;
        }
        let weight = match (role, config.tad_objective) {
            (PositionRole::TadStart | PositionRole::TadEnd, TadObjective::WeightLoss) => {
                let predicted = argmax(&probs.row(t)[..d]);
                1.0 + predicted.abs_diff(target) as f64 / d as f64
            }
            _ => 1.0,
        };
        let (nl, dp) = neg_log(probs.at(t, target), config.log_clamp, t)?;
        total += weight * nl;
        grad.row_mut(t)[target] = weight * dp / n as f64;
    }
    Ok(LossOutput { value: total / n as f64, grad })
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0
}

/// The task-appropriate loss for one sequence.
pub fn task_loss(
    task: TaskId,
    probs: &Mat,
    targets: &[usize],
    roles: &[PositionRole],
    config: &LossConfig,
) -> Result<LossOutput> {
    match task {
        TaskId::Tad => loss_tad(probs, targets, roles, config),
        TaskId::Tas => loss_tas(probs, targets, config),
        TaskId::Gebd => loss_gebd(probs, targets, config),
    }
}

pub struct LossItem<'a> {
    pub task: TaskId,
    pub probs: &'a Mat,
    pub targets: &'a [usize],
    pub roles: &'a [PositionRole],
}

/// Unweighted mean of the items' task losses; gradients are scaled accordingly.
pub fn combined_loss(items: &[LossItem<'_>], config: &LossConfig) -> Result<(f64, Vec<Mat>)> {
    if items.is_empty() {
        return Err(invalid!("empty batch"));
    }
    let scale = 1.0 / items.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(items.len());
    for item in items {
        let mut out = task_loss(item.task, item.probs, item.targets, item.roles, config)?;
        total += out.value;
        out.grad.data.iter_mut().for_each(|g| *g *= scale);
        grads.push(out.grad);
    }
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::tensor::{softmax_backward, softmax_in_place};

    fn layout() -> VocabLayout {
        VocabLayout::new(150, 20, 48).unwrap()
    }

    fn exact(layout: &VocabLayout) -> LossConfig {
        LossConfig { log_clamp: None, ..LossConfig::for_layout(layout) }
    }

    fn one_hot_rows(cols: usize, hot: &[usize]) -> Mat {
        let mut m = Mat::zeros(hot.len(), cols);
        for (r, &c) in hot.iter().enumerate() {
            m.row_mut(r)[c] = 1.0;
        }
        m
    }

    #[test]
    fn gebd_examples() {
        let v = layout();
        let cfg = exact(&v);
        let (b, bg) = (v.gebd_boundary_index, v.gebd_background_index);
        let targets = [b, bg, bg];
        assert_eq!(loss_gebd(&one_hot_rows(v.total_size, &targets), &targets, &cfg).unwrap().value, 0.0);

        let uniform = |rows: usize| {
            let mut m = Mat::zeros(rows, v.total_size);
            for r in 0..rows {
                m.row_mut(r)[b] = 0.5;
                m.row_mut(r)[bg] = 0.5;
            }
            m
        };
        let l4 = loss_gebd(&uniform(4), &[b, bg, b, bg], &cfg).unwrap().value;
        assert!((l4 - 2f64.ln()).abs() < 1e-15);
        let l8 = loss_gebd(&uniform(8), &[b, bg, b, bg, b, bg, b, bg], &cfg).unwrap().value;
        assert_eq!(l4, l8);

        let zero = Mat::zeros(1, v.total_size);
        assert!(matches!(loss_gebd(&zero, &[b], &cfg), Err(Error::Numeric(_))));
        assert!(loss_gebd(&zero, &[b], &LossConfig::for_layout(&v)).unwrap().value.is_finite());
    }

    #[test]
    fn tas_smoothing_examples() {
        let v = VocabLayout::new(4, 1, 2).unwrap();
        let cfg = exact(&v);
        let (c0, c1) = (v.class_to_token(TaskId::Tas, 0).unwrap(), v.class_to_token(TaskId::Tas, 1).unwrap());

        // Time-constant rows: no smoothing.
        let mut constant = Mat::zeros(3, v.total_size);
        for r in 0..3 {
            constant.row_mut(r)[c0] = 0.3;
            constant.row_mut(r)[c1] = 0.7;
        }
        assert_eq!(smoothing_term(&constant, cfg.tas_classes.clone()).0, 0.0);

        // (1,0) then (0,1): λ·(1/(2·2))·(1+1).
        let flip = one_hot_rows(v.total_size, &[c0, c1]);
        let full = loss_tas(&flip, &[c0, c1], &cfg).unwrap().value;
        let ce = cross_entropy(&flip, &[c0, c1], &cfg).unwrap().value;
        assert_eq!(ce, 0.0);
        assert!((full - 0.075).abs() < 1e-15);

        let no_smooth = LossConfig { smooth_weight: 0.0, ..cfg.clone() };
        let mut p = Mat::zeros(2, v.total_size);
        p.row_mut(0)[c0] = 0.2;
        p.row_mut(0)[c1] = 0.8;
        p.row_mut(1)[c0] = 0.9;
        p.row_mut(1)[c1] = 0.1;
        assert_eq!(loss_tas(&p, &[c1, c1], &no_smooth).unwrap().value, loss_gebd(&p, &[c1, c1], &no_smooth).unwrap().value);
    }

    fn tad_case() -> (VocabLayout, Vec<usize>, Vec<PositionRole>) {
        let v = layout();
        let targets = vec![100, 110, v.class_to_token(TaskId::Tad, 3).unwrap(), v.eos_index];
        let roles = vec![PositionRole::TadStart, PositionRole::TadEnd, PositionRole::TadClass, PositionRole::Eos];
        (v, targets, roles)
    }

    #[test]
    fn tad_distance_weight() {
        let (v, targets, roles) = tad_case();
        let cfg = exact(&v);
        let p = 0.3;
        let mut probs = Mat::zeros(1, v.total_size);
        probs.row_mut(0)[100] = p;
        probs.row_mut(0)[130] = 0.7;
        let out = loss_tad(&probs, &targets[..1], &roles[..1], &cfg).unwrap();
        assert!((out.value - (-1.2 * p.ln())).abs() < 1e-12);

        // Argmax at the truth: plain cross-entropy.
        probs.row_mut(0)[100] = 0.7;
        probs.row_mut(0)[130] = 0.3;
        let out = loss_tad(&probs, &targets[..1], &roles[..1], &cfg).unwrap();
        assert_eq!(out.value, -(0.7f64.ln()));
    }

    #[test]
    fn tad_class_positions_are_cross_entropy() {
        let (v, targets, roles) = tad_case();
        let cfg = exact(&v);
        let mut probs = Mat::zeros(4, v.total_size);
        for (r, &t) in targets.iter().enumerate() {
            probs.row_mut(r)[t] = 0.4;
            probs.row_mut(r)[140] += 0.6;
        }
        let weighted = loss_tad(&probs, &targets, &roles, &cfg).unwrap();
        let plain = cross_entropy(&probs, &targets, &cfg).unwrap();
        // Boundary rows are up-weighted (argmax 140 is far from 100 and 110)...
        assert!(weighted.grad.row(0)[100] < plain.grad.row(0)[100]);
        // ...category and end-of-sequence rows are untouched.
        assert_eq!(weighted.grad.row(2), plain.grad.row(2));
        assert_eq!(weighted.grad.row(3), plain.grad.row(3));
        let class_ce = -(0.4f64.ln());
        let boundary = (1.0 + 40.0 / 150.0) * class_ce + (1.0 + 30.0 / 150.0) * class_ce;
        assert!((weighted.value - (boundary + 2.0 * class_ce) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn tad_role_validation() {
        let (v, targets, mut roles) = tad_case();
        let cfg = exact(&v);
        let probs = one_hot_rows(v.total_size, &targets);
        assert!(loss_tad(&probs, &targets, &roles[..3], &cfg).is_err());
        roles.swap(0, 1);
        assert!(loss_tad(&probs, &targets, &roles, &cfg).is_err());
    }

    #[test]
    fn pad_positions_ignored() {
        let (v, mut targets, mut roles) = tad_case();
        let cfg = exact(&v);
        let probs_for = |targets: &[usize]| {
            let mut m = Mat::zeros(targets.len(), v.total_size);
            for (r, &t) in targets.iter().enumerate() {
                m.row_mut(r)[t] = 0.5;
                m.row_mut(r)[(t + 1) % 150] += 0.5;
            }
            m
        };
        let base = loss_tad(&probs_for(&targets), &targets, &roles, &cfg).unwrap().value;
        targets.push(v.pad_index);
        roles.push(PositionRole::TadEnd);
        let padded = loss_tad(&probs_for(&targets), &targets, &roles, &cfg).unwrap().value;
        assert_eq!(base, padded);
    }

    #[test]
    fn unit_weight_equals_cross_entropy_bitwise() {
        let (v, targets, roles) = tad_case();
        let mut probs = Mat::zeros(4, v.total_size);
        for r in 0..4 {
            for c in 0..v.total_size {
                probs.row_mut(r)[c] = ((r * 31 + c * 7) % 13) as f64 + 1.0;
            }
            let s: f64 = probs.row(r).iter().sum();
            probs.row_mut(r).iter_mut().for_each(|p| *p /= s);
        }
        let unit = LossConfig { tad_objective: TadObjective::UnitWeight, ..LossConfig::for_layout(&v) };
        let ce = LossConfig { tad_objective: TadObjective::CrossEntropy, ..LossConfig::for_layout(&v) };
        let a = loss_tad(&probs, &targets, &roles, &unit).unwrap();
        let b = loss_tad(&probs, &targets, &roles, &ce).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(a.grad.data.iter().zip(&b.grad.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        let weighted = loss_tad(&probs, &targets, &roles, &LossConfig::for_layout(&v)).unwrap();
        assert!(weighted.value >= a.value);
    }

    #[test]
    fn combined_is_mean_and_order_free() {
        let (v, targets, roles) = tad_case();
        let cfg = LossConfig::for_layout(&v);
        let tad_probs = one_hot_rows(v.total_size, &[101, 110, targets[2], v.eos_index]);
        let g_targets = [v.gebd_boundary_index, v.gebd_background_index];
        let mut g_probs = one_hot_rows(v.total_size, &g_targets);
        g_probs.row_mut(0)[v.gebd_boundary_index] = 0.5;
        g_probs.row_mut(0)[v.gebd_background_index] = 0.5;
        let g_roles = [PositionRole::GebdFrameBinary; 2];
        let tad_item = LossItem { task: TaskId::Tad, probs: &tad_probs, targets: &targets, roles: &roles };
        let gebd_item = LossItem { task: TaskId::Gebd, probs: &g_probs, targets: &g_targets, roles: &g_roles };
        let tad_alone = combined_loss(&[LossItem { ..tad_item }], &cfg).unwrap().0;
        let tad_direct = loss_tad(&tad_probs, &targets, &roles, &cfg).unwrap().value;
        assert_eq!(tad_alone, tad_direct);
        let gebd_direct = loss_gebd(&g_probs, &g_targets, &cfg).unwrap().value;
        let tad_item = LossItem { task: TaskId::Tad, probs: &tad_probs, targets: &targets, roles: &roles };
        let gebd_item2 = LossItem { task: TaskId::Gebd, probs: &g_probs, targets: &g_targets, roles: &g_roles };
        let both = combined_loss(&[tad_item, gebd_item], &cfg).unwrap().0;
        let tad_item = LossItem { task: TaskId::Tad, probs: &tad_probs, targets: &targets, roles: &roles };
        let swapped = combined_loss(&[gebd_item2, tad_item], &cfg).unwrap().0;
        assert!((both - (tad_direct + gebd_direct) / 2.0).abs() < 1e-15);
        assert_eq!(both, swapped);
        assert!(combined_loss(&[], &cfg).is_err());
    }

    /// Loss as a function of logits, via softmax, for finite differences.
    fn loss_from_logits(
        logits: &Mat,
        eval: &dyn Fn(&Mat) -> LossOutput,
    ) -> (f64, Mat) {
        let mut probs = logits.clone();
        for r in 0..probs.rows {
            softmax_in_place(probs.row_mut(r), None);
        }
        let out = eval(&probs);
        let mut dlogits = Mat::zeros(logits.rows, logits.cols);
        for r in 0..probs.rows {
            softmax_backward(probs.row(r), out.grad.row(r), dlogits.row_mut(r));
        }
        (out.value, dlogits)
    }

    fn check_logit_gradient(rows: usize, cols: usize, eval: &dyn Fn(&Mat) -> LossOutput) {
        let logits = Mat::from_vec(rows, cols, (0..rows * cols).map(|i| ((i * 7919) % 97) as f64 / 30.0 - 1.5).collect());
        let (_, analytic) = loss_from_logits(&logits, eval);
        let eps = 1e-5;
        for i in (0..rows * cols).step_by((rows * cols / 40).max(1)) {
            let mut plus = logits.clone();
            plus.data[i] += eps;
            let mut minus = logits.clone();
            minus.data[i] -= eps;
            let numeric = (loss_from_logits(&plus, eval).0 - loss_from_logits(&minus, eval).0) / (2.0 * eps);
            let a = analytic.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel <= 1e-3 || (a - numeric).abs() < 1e-9, "entry {i}: analytic {a} numeric {numeric}");
        }
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let v = VocabLayout::new(6, 2, 3).unwrap();
        let cfg = exact(&v);
        let h = v.total_size;
        let (b, bg) = (v.gebd_boundary_index, v.gebd_background_index);
        let g_targets = vec![b, bg, bg, b];
        check_logit_gradient(4, h, &|p| loss_gebd(p, &g_targets, &cfg).unwrap());
        let t_targets: Vec<usize> = [0, 0, 2, 1].iter().map(|&c| v.class_to_token(TaskId::Tas, c).unwrap()).collect();
        check_logit_gradient(4, h, &|p| loss_tas(p, &t_targets, &cfg).unwrap());
        let d_targets = vec![1, 4, v.class_to_token(TaskId::Tad, 1).unwrap(), v.eos_index];
        let roles = [PositionRole::TadStart, PositionRole::TadEnd, PositionRole::TadClass, PositionRole::Eos];
        check_logit_gradient(4, h, &|p| loss_tad(p, &d_targets, &roles, &cfg).unwrap());
    }

    fn arb_probs(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
        prop::collection::vec(0.01f64..1.0, rows * cols).prop_map(move |mut v| {
            for r in 0..rows {
                let s: f64 = v[r * cols..(r + 1) * cols].iter().sum();
                v[r * cols..(r + 1) * cols].iter_mut().for_each(|x| *x /= s);
            }
            Mat::from_vec(rows, cols, v)
        })
    }

    proptest! {
        #[test]
        fn losses_non_negative_and_weight_dominates(probs in arb_probs(7, 17), s in 0usize..6, e in 0usize..6, c in 0usize..2) {
            let v = VocabLayout::new(6, 2, 2).unwrap();
            let cfg = LossConfig::for_layout(&v);
            let class = v.class_to_token(TaskId::Tad, c).unwrap();
            let targets = vec![s, e, class, s, e, class, v.eos_index];
            let roles = vec![
                PositionRole::TadStart, PositionRole::TadEnd, PositionRole::TadClass,
                PositionRole::TadStart, PositionRole::TadEnd, PositionRole::TadClass, PositionRole::Eos,
            ];
            let weighted = loss_tad(&probs, &targets, &roles, &cfg).unwrap();
            let plain = cross_entropy(&probs, &targets, &cfg).unwrap();
            prop_assert!(weighted.value >= 0.0);
            prop_assert!(weighted.value >= plain.value);
            // Per boundary position: weighted ≥ plain, equality iff argmax is the truth.
            // Per boundary position the weight is the gradient ratio: ≥ 1, and 1 iff argmax is the truth.
            for t in [0usize, 1, 3, 4] {
                let w = weighted.grad.row(t)[targets[t]];
                let p = plain.grad.row(t)[targets[t]];
                let hit = argmax(&probs.row(t)[..6]) == targets[t];
                prop_assert!(w <= p && p < 0.0);
                prop_assert_eq!(w == p, hit);
            }
            let tas_t: Vec<usize> = (0..7).map(|i| v.class_to_token(TaskId::Tas, i % 2).unwrap()).collect();
            prop_assert!(loss_tas(&probs, &tas_t, &cfg).unwrap().value >= 0.0);
        }
    }
}
