use super::{ActorCritic, PpoConfig, Rollout, WakePolicy};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{clip_global_norm, log_softmax, Rng, Tensor};

/// Frozen minibatch; advantages are used exactly as given.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub observations: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    /// Mean policy entropy (the loss uses its negative).
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Averages over every minibatch of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: PpoLoss,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Clipped surrogate + value + entropy loss of `net` on `batch`, with its
/// gradient when `want_grads` is set.
pub fn ppo_loss(
    net: &ActorCritic,
    batch: &Minibatch,
    cfg: &PpoConfig,
    want_grads: bool,
) -> Result<(PpoLoss, Option<ActorCritic>)> {
    let n = batch.actions.len();
    if n == 0
        || batch.observations.rows() != n
        || batch.old_log_probs.len() != n
        || batch.advantages.len() != n
        || batch.returns.len() != n
    {
        return dim_err("minibatch fields disagree in length");
    }
    let (features, ftrace) = net.extractor.forward_traced(&batch.observations)?;
    let (logits, ptrace) = net.policy.forward_traced(&features)?;
    let (values, vtrace) = net.value.forward_traced(&features)?;
    let k = logits.cols();
    let inv_n = 1.0 / n as f64;
    let (lo, hi) = (1.0 - cfg.clip_range, 1.0 + cfg.clip_range);

    let mut out = PpoLoss::default();
    let mut dlogits = vec![0.0; n * k];
    let mut dvalues = vec![0.0; n];
    for i in 0..n {
        let lp = log_softmax(logits.row(i));
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let log_ratio = lp[a] - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(lo, hi) * adv;
        out.policy -= surr1.min(surr2) * inv_n;
        out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
        if (ratio - 1.0).abs() > cfg.clip_range {
            out.clip_fraction += inv_n;
        }
        let entropy: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        out.entropy += entropy * inv_n;
        let v = values.data()[i];
        let err = v - batch.returns[i];
        out.value += err * err * inv_n;

        // Only the unclipped branch carries gradient through the ratio.
        let dsurr_dratio = if surr1 <= surr2 { adv } else { 0.0 };
        let dlogp = -dsurr_dratio * ratio * inv_n;
        let row = &mut dlogits[i * k..(i + 1) * k];
        for (j, d) in row.iter_mut().enumerate() {
            let p = lp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            // d(-ent_coef * H)/dlogit_j = ent_coef * p_j (log p_j + H)
            *d = dlogp * (onehot - p) + cfg.ent_coef * inv_n * p * (lp[j] + entropy);
        }
        dvalues[i] = cfg.vf_coef * 2.0 * err * inv_n;
    }
    out.total = out.policy - cfg.ent_coef * out.entropy + cfg.vf_coef * out.value;
    if !out.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite policy loss {:?}", out)));
    }
    if !want_grads {
        return Ok((out, None));
    }

    let mut grads = net.zeros_like();
    let df_policy = net
        .policy
        .backward(&ptrace, &Tensor::from_raw(n, k, dlogits), &mut grads.policy, true)?
        .expect("input gradient requested");
    let mut df = net
        .value
        .backward(&vtrace, &Tensor::from_raw(n, 1, dvalues), &mut grads.value, true)?
        .expect("input gradient requested");
    df.add_assign(&df_policy);
    net.extractor.backward(&ftrace, &df, &mut grads.extractor, false)?;
    Ok((out, Some(grads)))
}

fn normalize(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) * scale);
}

/// `n_epochs` passes of shuffled minibatches over `rollout`. On a numerical
/// failure the policy and optimizer are left as they were before the call.
pub fn ppo_update(wake: &mut WakePolicy, rollout: &Rollout, rng: &mut Rng) -> Result<UpdateStats> {
    let cfg = wake.config;
    let n = rollout.len();
    if n == 0 {
        return dim_err("empty rollout");
    }
    let snapshot = (wake.net.clone(), wake.optimizer.clone());
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..n).collect();
    let result = (|| -> Result<()> {
        for _ in 0..cfg.n_epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let mut advantages: Vec<f64> = chunk.iter().map(|&i| rollout.advantages[i]).collect();
                normalize(&mut advantages);
                let rows: Vec<&[f64]> = chunk.iter().map(|&i| rollout.observations.row(i)).collect();
                let batch = Minibatch {
                    observations: Tensor::from_rows(&rows)?,
                    actions: chunk.iter().map(|&i| rollout.actions[i]).collect(),
                    old_log_probs: chunk.iter().map(|&i| rollout.log_probs[i]).collect(),
                    advantages,
                    returns: chunk.iter().map(|&i| rollout.returns[i]).collect(),
                };
                let (loss, grads) = ppo_loss(&wake.net, &batch, &cfg, true)?;
                let mut grads = grads.expect("gradients requested");
                stats.grad_norm += clip_global_norm(&mut grads, cfg.max_grad_norm);
                wake.optimizer.step(&mut wake.net, &grads)?;
                stats.loss.total += loss.total;
                stats.loss.policy += loss.policy;
                stats.loss.value += loss.value;
                stats.loss.entropy += loss.entropy;
                stats.loss.approx_kl += loss.approx_kl;
                stats.loss.clip_fraction += loss.clip_fraction;
                stats.minibatches += 1;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        (wake.net, wake.optimizer) = snapshot;
        return Err(e);
    }
    let m = stats.minibatches as f64;
    stats.grad_norm /= m;
    for v in [
        &mut stats.loss.total,
        &mut stats.loss.policy,
        &mut stats.loss.value,
        &mut stats.loss.entropy,
        &mut stats.loss.approx_kl,
        &mut stats.loss.clip_fraction,
    ] {
        *v /= m;
    }
    Ok(stats)
}
