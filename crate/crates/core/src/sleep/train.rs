use serde::{Deserialize, Serialize};

use super::agent::{Architecture, SleepAgent, SleepNet};
use super::buffers::{RandomReplayBuffer, Transition, WakeBuffer, RAR_CAPACITY, RAR_INTAKE, WAKE_BUFFER_CAPACITY};
use crate::error::{dim_err, Error, Result};
use crate::generative::{standard_normal, vae_loss, vae_loss_grads, VaeLossGrads, VaeLossWeights};
use crate::numerics::{argmax, log_softmax, softmax, AdamConfig, AdamState, Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SleepConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub use_er: bool,
    pub use_gr: bool,
    pub use_rar: bool,
    /// GR and RaR stay off until this many sleeps have completed.
    pub warmup_sleeps: u32,
    pub sleeps_per_learning_block: usize,
    pub weight_copy_on_wake: bool,
    pub learning_rate: f64,
    /// One mixed minibatch per iteration instead of one per source.
    pub merged_batches: bool,
    /// Also fit the VAE to generated inputs.
    pub vae_on_generated: bool,
    /// Train on the teacher's full action distribution instead of its argmax.
    pub soft_labels: bool,
    pub rar_intake: usize,
    pub rar_capacity: usize,
    pub wake_buffer_capacity: usize,
    /// Iterations averaged into each loss-trace point.
    pub trace_every: usize,
}

impl Default for SleepConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 32,
            use_er: true,
            use_gr: true,
            use_rar: true,
            warmup_sleeps: 1,
            sleeps_per_learning_block: 1,
            weight_copy_on_wake: false,
            learning_rate: 1e-3,
            merged_batches: false,
            vae_on_generated: false,
            soft_labels: false,
            rar_intake: RAR_INTAKE,
            rar_capacity: RAR_CAPACITY,
            wake_buffer_capacity: WAKE_BUFFER_CAPACITY,
            trace_every: 100,
        }
    }
}

impl SleepConfig {
    pub fn validate(&self) -> Result<()> {
        let problem = if !self.use_er {
            // Before the warmup ends ER is the only usable source.
            Some("experience replay must be enabled")
        } else if self.batch_size == 0 || self.sleeps_per_learning_block == 0 || self.trace_every == 0 {
            Some("batch_size, sleeps_per_learning_block and trace_every must be positive")
        } else if self.wake_buffer_capacity == 0 || self.rar_capacity == 0 {
            Some("buffer capacities must be positive")
        } else if !(self.learning_rate > 0.0) {
            Some("learning_rate must be positive")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(Error::Config(format!("sleep: {msg}"))),
            None => Ok(()),
        }
    }

    pub fn replay_name(&self) -> &'static str {
        match (self.use_gr, self.use_rar) {
            (false, false) => "er",
            (false, true) => "er-rar",
            (true, false) => "er-gr",
            (true, true) => "er-rar-gr",
        }
    }
}

/// Inputs of one sleep iteration. Real rows are observations; generated rows
/// live in the architecture's generated space.
#[derive(Clone, Debug)]
pub struct SleepBatch {
    pub real: Tensor,
    pub real_targets: Tensor,
    pub generated: Option<(Tensor, Tensor)>,
}

impl SleepBatch {
    fn generated_rows(&self) -> usize {
        self.generated.as_ref().map_or(0, |(g, _)| g.rows())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SleepLoss {
    pub total: f64,
    pub xent: f64,
    pub recon: f64,
    pub kl: f64,
}

fn cross_entropy(logits: &Tensor, targets: &Tensor) -> (f64, Tensor) {
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, t) in logits.iter_rows().zip(targets.iter_rows()) {
        let lp = log_softmax(row);
        let mass: f64 = t.iter().sum();
        for (l, ti) in lp.iter().zip(t) {
            loss -= ti * l / n;
            grad.push((mass * l.exp() - ti) / n);
        }
    }
    (loss, Tensor::from_raw(logits.rows(), logits.cols(), grad))
}

fn pad_rows(t: &Tensor, rows: usize) -> Tensor {
    let mut data = t.data().to_vec();
    data.resize(rows * t.cols(), 0.0);
    Tensor::from_raw(rows, t.cols(), data)
}

fn add_leading_rows(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn padded_grads(g: VaeLossGrads, rows: usize) -> VaeLossGrads {
    VaeLossGrads {
        recon: pad_rows(&g.recon, rows),
        mu: pad_rows(&g.mu, rows),
        logvar: pad_rows(&g.logvar, rows),
    }
}

/// Imitation + VAE objective for one batch with frozen `noise` (`[rows, latent]`,
/// at least as many rows as the batch), plus gradients when requested.
pub fn sleep_loss(
    net: &SleepNet,
    architecture: Architecture,
    weights: &VaeLossWeights,
    batch: &SleepBatch,
    noise: &Tensor,
    vae_on_generated: bool,
    want_grads: bool,
) -> Result<(SleepLoss, Option<SleepNet>)> {
    loss_with_target(net, architecture, weights, batch, noise, vae_on_generated, want_grads, None)
}

/// `frozen_target` pins the hidden architecture's reconstruction target,
/// which is otherwise a detached copy of the current features.
#[allow(clippy::too_many_arguments)]
fn loss_with_target(
    net: &SleepNet,
    architecture: Architecture,
    weights: &VaeLossWeights,
    batch: &SleepBatch,
    noise: &Tensor,
    vae_on_generated: bool,
    want_grads: bool,
    frozen_target: Option<&Tensor>,
) -> Result<(SleepLoss, Option<SleepNet>)> {
    let n_real = batch.real.rows();
    let n_gen = batch.generated_rows();
    let n = n_real + n_gen;
    let n_vae = if vae_on_generated { n } else { n_real };
    if batch.real_targets.rows() != n_real || noise.rows() < n {
        return dim_err("sleep batch targets or noise do not cover every row");
    }
    let targets = match &batch.generated {
        Some((_, t)) => Tensor::vstack(&[&batch.real_targets, t])?,
        None => batch.real_targets.clone(),
    };
    let mut grads = want_grads.then(|| net.zeros_like());
    let mut out;

    match architecture {
        Architecture::Sequential => {
            let x = match &batch.generated {
                Some((g, _)) => Tensor::vstack(&[&batch.real, g])?,
                None => batch.real.clone(),
            };
            let trace = net.vae.forward_traced(&x, noise.slice_rows(0, n))?;
            let (f, tf) = net.extractor.forward_traced(&trace.recon)?;
            let (logits, th) = net.head.forward_traced(&f)?;
            let (xent, dlogits) = cross_entropy(&logits, &targets);
            let xs = x.slice_rows(0, n_vae);
            let (recon, mu, lv) = (
                trace.recon.slice_rows(0, n_vae),
                trace.mu.slice_rows(0, n_vae),
                trace.logvar.slice_rows(0, n_vae),
            );
            let terms = vae_loss(&xs, &recon, &mu, &lv, weights)?;
            out = SleepLoss { total: 0.0, xent, recon: terms.recon, kl: terms.kl };
            if let Some(g) = grads.as_mut() {
                dlogits_scaled(&dlogits, weights.imitation, |d| -> Result<()> {
                    let df = net.head.backward(&th, &d, &mut g.head, true)?.expect("requested");
                    let drecon = net.extractor.backward(&tf, &df, &mut g.extractor, true)?.expect("requested");
                    let mut up = padded_grads(vae_loss_grads(&xs, &recon, &mu, &lv, weights), n);
                    up.recon.add_assign(&drecon);
                    net.vae.backward(&trace, &up, &mut g.vae, false)?;
                    Ok(())
                })?;
            }
        }
        Architecture::TwoHeaded => {
            let x = match &batch.generated {
                Some((g, _)) => Tensor::vstack(&[&batch.real, g])?,
                None => batch.real.clone(),
            };
            let (f, tf) = net.extractor.forward_traced(&x)?;
            let (logits, th) = net.head.forward_traced(&f)?;
            let (xent, dlogits) = cross_entropy(&logits, &targets);
            let xs = x.slice_rows(0, n_vae);
            let trace = net.vae.forward_traced(&f.slice_rows(0, n_vae), noise.slice_rows(0, n_vae))?;
            let terms = vae_loss(&xs, &trace.recon, &trace.mu, &trace.logvar, weights)?;
            out = SleepLoss { total: 0.0, xent, recon: terms.recon, kl: terms.kl };
            if let Some(g) = grads.as_mut() {
                dlogits_scaled(&dlogits, weights.imitation, |d| -> Result<()> {
                    let mut df = net.head.backward(&th, &d, &mut g.head, true)?.expect("requested");
                    let up = vae_loss_grads(&xs, &trace.recon, &trace.mu, &trace.logvar, weights);
                    let dfv = net.vae.backward(&trace, &up, &mut g.vae, true)?.expect("requested");
                    add_leading_rows(&mut df, &dfv);
                    net.extractor.backward(&tf, &df, &mut g.extractor, false)?;
                    Ok(())
                })?;
            }
        }
        Architecture::Hidden => {
            let (f_real, tf) = net.extractor.forward_traced(&batch.real)?;
            let h = match &batch.generated {
                Some((g, _)) => Tensor::vstack(&[&f_real, g])?,
                None => f_real.clone(),
            };
            let (logits, th) = net.head.forward_traced(&h)?;
            let (xent, dlogits) = cross_entropy(&logits, &targets);
            let v = h.slice_rows(0, n_vae);
            let target = frozen_target.cloned().unwrap_or_else(|| v.clone());
            let trace = net.vae.forward_traced(&v, noise.slice_rows(0, n_vae))?;
            let terms = vae_loss(&target, &trace.recon, &trace.mu, &trace.logvar, weights)?;
            out = SleepLoss { total: 0.0, xent, recon: terms.recon, kl: terms.kl };
            if let Some(g) = grads.as_mut() {
                dlogits_scaled(&dlogits, weights.imitation, |d| -> Result<()> {
                    let dh = net.head.backward(&th, &d, &mut g.head, true)?.expect("requested");
                    let mut df = dh.slice_rows(0, n_real);
                    let up = vae_loss_grads(&target, &trace.recon, &trace.mu, &trace.logvar, weights);
                    let dv = net.vae.backward(&trace, &up, &mut g.vae, true)?.expect("requested");
                    add_leading_rows(&mut df, &dv.slice_rows(0, n_real.min(n_vae)));
                    net.extractor.backward(&tf, &df, &mut g.extractor, false)?;
                    Ok(())
                })?;
            }
        }
    }
    out.total = weights.imitation * out.xent + weights.recon * out.recon + weights.kl * out.kl;
    if !out.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite sleep loss {out:?}")));
    }
    Ok((out, grads))
}

fn dlogits_scaled(dlogits: &Tensor, k: f64, f: impl FnOnce(Tensor) -> Result<()>) -> Result<()> {
    let mut d = dlogits.clone();
    d.scale(k);
    f(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SleepLossPoint {
    pub iteration: usize,
    pub total: f64,
    pub xent: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SleepReport {
    /// Zero-based index of this sleep within the lifetime.
    pub sleep_index: u32,
    pub iterations: usize,
    pub er_samples: u64,
    pub gr_samples: u64,
    pub rar_samples: u64,
    pub rar_added: usize,
    pub trace: Vec<SleepLossPoint>,
    /// Set when training hit a non-finite loss and the agent was rolled back.
    pub aborted: Option<String>,
}

fn stack_observations(ts: &[&Transition]) -> Result<Tensor> {
    let rows: Vec<&[f64]> = ts.iter().map(|t| t.observation.as_slice()).collect();
    Tensor::from_rows(&rows)
}

fn stack_targets(ts: &[&Transition]) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|t| t.label.target()).collect();
    Tensor::from_rows(&rows)
}

/// Per-source sample counts for one iteration.
fn batch_counts(config: &SleepConfig, gr_on: bool, rar_on: bool, rng: &mut Rng) -> (usize, usize, usize) {
    let bs = config.batch_size;
    if !config.merged_batches {
        return (bs, if gr_on { bs } else { 0 }, if rar_on { bs } else { 0 });
    }
    let mut sources = vec![0usize];
    if gr_on {
        sources.push(1);
    }
    if rar_on {
        sources.push(2);
    }
    let mut counts = [0usize; 3];
    for _ in 0..bs {
        counts[sources[rng.below(sources.len())]] += 1;
    }
    // Keep at least one real row so every iteration has a VAE target.
    if counts[0] == 0 {
        let donor = if counts[1] > 0 { 1 } else { 2 };
        counts[donor] -= 1;
        counts[0] = 1;
    }
    (counts[0], counts[1], counts[2])
}

const RAR_STREAM: u64 = 0x5241_5200;

/// One sleep phase: distill the wake buffer (plus replay) into `agent`.
///
/// Random replay intake happens first. GR and RaR are gated by the warmup.
/// A non-finite loss restores the pre-sleep parameters and is reported in
/// [`SleepReport::aborted`] instead of failing the caller.
pub fn sleep_train(
    agent: &mut SleepAgent,
    wake: &WakeBuffer,
    rar: &mut RandomReplayBuffer,
    config: &SleepConfig,
    rng: &mut Rng,
) -> Result<SleepReport> {
    config.validate()?;
    if wake.is_empty() {
        return Err(Error::Usage("sleep requested with an empty wake buffer".into()));
    }
    let past_warmup = agent.sleeps_completed >= config.warmup_sleeps;
    let mut report = SleepReport {
        sleep_index: agent.sleeps_completed,
        ..SleepReport::default()
    };
    // Intake happens every sleep on its own stream; `use_rar` only gates sampling.
    report.rar_added = rar.accumulate(wake, &mut rng.fork(RAR_STREAM));
    let gr_on = config.use_gr && past_warmup;
    let rar_on = config.use_rar && past_warmup && !rar.is_empty();
    let teacher = agent.clone();
    let snapshot = agent.net.clone();
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), &agent.net);
    let latent = agent.net.vae.latent_dim;

    let mut window = (SleepLoss::default(), 0usize);
    for it in 0..config.iterations {
        let (n_er, n_gr, n_rar) = batch_counts(config, gr_on, rar_on, rng);
        let mut real: Vec<&Transition> = wake.sample(n_er, rng);
        if n_rar > 0 {
            real.extend(rar.sample(n_rar, rng));
        }
        let generated = if n_gr > 0 {
            let g = teacher.generate(n_gr, rng)?;
            let logits = teacher.logits_from_generated(&g)?;
            let targets: Vec<Vec<f64>> = logits
                .iter_rows()
                .map(|l| {
                    if config.soft_labels {
                        softmax(l)
                    } else {
                        let mut t = vec![0.0; l.len()];
                        t[argmax(l)] = 1.0;
                        t
                    }
                })
                .collect();
            Some((g, Tensor::from_rows(&targets)?))
        } else {
            None
        };
        let batch = SleepBatch {
            real: stack_observations(&real)?,
            real_targets: stack_targets(&real)?,
            generated,
        };
        let noise = standard_normal(n_er + n_rar + n_gr, latent, rng);
        let step = sleep_loss(
            &agent.net,
            agent.architecture,
            &agent.weights,
            &batch,
            &noise,
            config.vae_on_generated,
            true,
        )
        .and_then(|(loss, grads)| {
            adam.step(&mut agent.net, &grads.expect("requested"))?;
            Ok(loss)
        });
        let loss = match step {
            Ok(l) => l,
            Err(Error::Numerical(msg)) => {
                log::warn!("sleep {} aborted at iteration {it}: {msg}", report.sleep_index);
                agent.net = snapshot;
                report.aborted = Some(msg);
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        report.er_samples += n_er as u64;
        report.gr_samples += n_gr as u64;
        report.rar_samples += n_rar as u64;
        report.iterations += 1;
        let (acc, count) = &mut window;
        acc.total += loss.total;
        acc.xent += loss.xent;
        acc.recon += loss.recon;
        acc.kl += loss.kl;
        *count += 1;
        if *count == config.trace_every || it + 1 == config.iterations {
            let k = *count as f64;
            report.trace.push(SleepLossPoint {
                iteration: it + 1,
                total: acc.total / k,
                xent: acc.xent / k,
                recon: acc.recon / k,
                kl: acc.kl / k,
            });
            window = (SleepLoss::default(), 0);
        }
    }
    agent.sleeps_completed += 1;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gradient_check, ParamSet};
    use crate::sleep::agent::VaeShape;
    use crate::sleep::buffers::ActionLabel;
    use crate::wake::{Actor, NetworkShape};

    fn small_agent(arch: Architecture, seed: u64) -> SleepAgent {
        let shape = NetworkShape {
            obs_dim: 6,
            extractor: vec![7, 5],
            num_actions: 6,
            layer_norm: false,
        };
        let vae = VaeShape {
            hidden: 6,
            latent: 3,
            ..VaeShape::default()
        };
        let weights = VaeLossWeights { imitation: 3.0, recon: 1.5, kl: 0.3 };
        SleepAgent::new(arch, shape, vae, weights, &mut Rng::new(seed)).unwrap()
    }

    fn random_batch(agent: &SleepAgent, rng: &mut Rng, with_gen: bool) -> SleepBatch {
        let (nr, ng) = (4, 3);
        let real = Tensor::matrix(nr, 6, (0..nr * 6).map(|_| rng.uniform()).collect()).unwrap();
        let onehots: Vec<Vec<f64>> = (0..nr)
            .map(|i| {
                let mut t = vec![0.0; 6];
                t[i % 6] = 1.0;
                t
            })
            .collect();
        let gd = agent.generated_dim();
        let generated = with_gen.then(|| {
            let g = Tensor::matrix(ng, gd, (0..ng * gd).map(|_| rng.normal()).collect()).unwrap();
            let soft: Vec<Vec<f64>> = (0..ng).map(|_| softmax(&[rng.normal(), rng.normal(), 0.0, 0.5, rng.normal(), -0.3])).collect();
            (g, Tensor::from_rows(&soft).unwrap())
        });
        SleepBatch {
            real,
            real_targets: Tensor::from_rows(&onehots).unwrap(),
            generated,
        }
    }

    #[test]
    fn sleep_loss_gradients_match_finite_differences() {
        for arch in Architecture::ALL {
            for (with_gen, on_gen) in [(false, false), (true, false), (true, true)] {
                let mut agent = small_agent(arch, 4);
                let mut rng = Rng::new(5);
                // Zero biases put dead-feature rows exactly on a ReLU kink.
                for p in agent.net.slices_mut() {
                    p.iter_mut().for_each(|v| *v += 0.05 * rng.normal());
                }
                let batch = random_batch(&agent, &mut rng, with_gen);
                let noise = standard_normal(7, 3, &mut rng);
                let base = sleep_loss(&agent.net, arch, &agent.weights, &batch, &noise, on_gen, false).unwrap();
                let frozen = (arch == Architecture::Hidden).then(|| {
                    let f = agent.net.extractor.forward(&batch.real).unwrap();
                    match &batch.generated {
                        Some((g, _)) if on_gen => Tensor::vstack(&[&f, g]).unwrap(),
                        _ => f,
                    }
                });
                let f = |net: &SleepNet| {
                    loss_with_target(net, arch, &agent.weights, &batch, &noise, on_gen, false, frozen.as_ref())
                        .unwrap()
                        .0
                        .total
                };
                assert_eq!(f(&agent.net), base.0.total);
                let (_, g) = sleep_loss(&agent.net, arch, &agent.weights, &batch, &noise, on_gen, true).unwrap();
                let r = gradient_check(&agent.net, f, &g.unwrap(), 1e-4, 1e-4, 1);
                assert!(r.passed, "{} gen={with_gen} vae_on_gen={on_gen}: {r:?}", arch.name());
            }
        }
    }

    #[test]
    fn hidden_generated_rows_never_touch_the_extractor() {
        let agent = small_agent(Architecture::Hidden, 8);
        let mut rng = Rng::new(9);
        let with = random_batch(&agent, &mut rng, true);
        let without = SleepBatch {
            generated: None,
            ..with.clone()
        };
        let noise = standard_normal(7, 3, &mut rng);
        let w = &agent.weights;
        let (_, ga) = sleep_loss(&agent.net, Architecture::Hidden, w, &with, &noise, false, true).unwrap();
        let (_, gb) = sleep_loss(&agent.net, Architecture::Hidden, w, &without, &noise, false, true).unwrap();
        let (ga, gb) = (ga.unwrap(), gb.unwrap());
        // Generated rows change the imitation average, so compare after
        // undoing the 1/n scaling of the real rows' contribution.
        let scale = 7.0 / 4.0;
        let diff = ga
            .extractor
            .to_flat()
            .iter()
            .zip(gb.extractor.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let imitation_only = sleep_loss(
            &agent.net,
            Architecture::Hidden,
            &VaeLossWeights { imitation: 3.0, recon: 0.0, kl: 0.0 },
            &with,
            &noise,
            false,
            true,
        )
        .unwrap()
        .1
        .unwrap();
        let imitation_only_real = sleep_loss(
            &agent.net,
            Architecture::Hidden,
            &VaeLossWeights { imitation: 3.0, recon: 0.0, kl: 0.0 },
            &without,
            &noise,
            false,
            true,
        )
        .unwrap()
        .1
        .unwrap();
        for (a, b) in imitation_only
            .extractor
            .to_flat()
            .iter()
            .zip(imitation_only_real.extractor.to_flat())
        {
            assert!((a * scale - b).abs() < 1e-12);
        }
        assert!(diff > 0.0);
    }

    fn filled_wake(n: usize, rng: &mut Rng) -> WakeBuffer {
        let mut w = WakeBuffer::new(n);
        for i in 0..n {
            let obs = (0..6).map(|_| rng.uniform()).collect();
            w.push(Transition::new(obs, 0.0, ActionLabel::Hard(i % 4), 0).unwrap());
        }
        w
    }

    fn quick_config() -> SleepConfig {
        SleepConfig {
            iterations: 30,
            batch_size: 8,
            trace_every: 10,
            ..SleepConfig::default()
        }
    }

    #[test]
    fn first_sleep_uses_no_generated_or_random_replay() {
        for arch in Architecture::ALL {
            let mut agent = small_agent(arch, 1);
            let mut rng = Rng::new(2);
            let wake = filled_wake(50, &mut rng);
            let mut rar = RandomReplayBuffer::new(16, 64);
            let cfg = quick_config();
            let first = sleep_train(&mut agent, &wake, &mut rar, &cfg, &mut rng).unwrap();
            assert_eq!((first.gr_samples, first.rar_samples), (0, 0));
            assert_eq!(first.er_samples, 30 * 8);
            assert_eq!(first.rar_added, 16);
            let second = sleep_train(&mut agent, &wake, &mut rar, &cfg, &mut rng).unwrap();
            assert_eq!((second.gr_samples, second.rar_samples), (240, 240));
            assert_eq!(agent.sleeps_completed, 2);
            assert_eq!(second.trace.len(), 3);
        }
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let run = || {
            let mut agent = small_agent(Architecture::TwoHeaded, 3);
            let mut rng = Rng::new(4);
            let wake = filled_wake(40, &mut rng);
            let mut rar = RandomReplayBuffer::new(8, 32);
            let cfg = quick_config();
            sleep_train(&mut agent, &wake, &mut rar, &cfg, &mut rng).unwrap();
            sleep_train(&mut agent, &wake, &mut rar, &cfg, &mut rng).unwrap();
            agent
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_loss_rolls_back() {
        let mut agent = small_agent(Architecture::Sequential, 5);
        agent.net.head.layers[0].weight.data_mut()[0] = f64::NAN;
        let before: Vec<u64> = agent.net.to_flat().iter().map(|v| v.to_bits()).collect();
        let mut rng = Rng::new(6);
        let wake = filled_wake(20, &mut rng);
        let mut rar = RandomReplayBuffer::new(4, 16);
        let report = sleep_train(&mut agent, &wake, &mut rar, &quick_config(), &mut rng).unwrap();
        assert!(report.aborted.is_some());
        let after: Vec<u64> = agent.net.to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(after, before);
        assert_eq!(agent.sleeps_completed, 0);
    }

    #[test]
    fn empty_wake_buffer_is_a_usage_error() {
        let mut agent = small_agent(Architecture::Hidden, 0);
        let r = sleep_train(
            &mut agent,
            &WakeBuffer::new(4),
            &mut RandomReplayBuffer::default(),
            &quick_config(),
            &mut Rng::new(0),
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn merged_batches_keep_total_size() {
        let cfg = SleepConfig {
            merged_batches: true,
            ..quick_config()
        };
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            let (a, b, c) = batch_counts(&cfg, true, true, &mut rng);
            assert_eq!(a + b + c, 8);
            assert!(a >= 1);
        }
    }

    #[test]
    fn distillation_learns_a_fixed_labeling() {
        let mut agent = small_agent(Architecture::Hidden, 7);
        let mut rng = Rng::new(8);
        let mut wake = WakeBuffer::new(200);
        for _ in 0..200 {
            let obs: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let label = if obs[0] > 0.5 { 1 } else { 2 };
            wake.push(Transition::new(obs, 0.0, ActionLabel::Hard(label), 0).unwrap());
        }
        let cfg = SleepConfig {
            iterations: 600,
            batch_size: 32,
            ..SleepConfig::default()
        };
        sleep_train(&mut agent, &wake, &mut RandomReplayBuffer::default(), &cfg, &mut rng).unwrap();
        let agree = wake
            .iter()
            .filter(|t| agent.greedy_action(&t.observation).unwrap() == t.label.target().iter().position(|&p| p == 1.0).unwrap())
            .count();
        assert!(agree >= 180, "agreement {agree}/200");
    }
}
