use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle::{Agent, Block, LifetimeLog};
use crate::numerics::{argmax, Rng, Tensor};
use crate::sleep::{Architecture, SleepAgent, Transition};

pub const CURVE_HEADER: [&str; 5] = ["block_index", "block_type", "task_id", "step", "mean_return"];

/// Long-format curve rows: one per evaluation record and one per learning
/// curve sample. `step` counts environment steps since the lifetime began.
pub fn export_curves(log: &LifetimeLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    let mut elapsed = 0u64;
    for (i, block) in log.blocks.iter().enumerate() {
        match block {
            Block::Evaluation { records, .. } => {
                for r in records {
                    w.serialize((i, "eval", &r.task, elapsed, r.mean_return))?;
                }
            }
            Block::Learning(l) => {
                for c in &l.curve {
                    w.serialize((i, "learn", &l.task, elapsed + c.step, c.mean_return))?;
                }
                elapsed += l.steps;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Wake,
    Generated,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    pub source: FeatureSource,
    pub features: Tensor,
    pub actions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub source: FeatureSource,
    pub action: usize,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub points: Vec<ProjectedPoint>,
    /// Share of total variance per kept component, largest first.
    pub explained_variance: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl PcaProjection {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["source".to_string(), "action".to_string()];
        header.extend((0..self.components.len()).map(|i| format!("pc{}", i + 1)));
        w.write_record(&header)?;
        for p in &self.points {
            let source = match p.source {
                FeatureSource::Wake => "wake",
                FeatureSource::Generated => "generated",
                FeatureSource::Random => "random",
            };
            let mut row = vec![source.to_string(), p.action.to_string()];
            row.extend(p.coords.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// Project all batches onto the top `k` principal directions of their
/// pooled, centered features. Rank-deficient data yields fewer components.
pub fn pca_project(batches: &[FeatureBatch], k: usize) -> Result<PcaProjection> {
    let n: usize = batches.iter().map(|b| b.features.rows()).sum();
    let d = batches.first().map(|b| b.features.cols()).unwrap_or(0);
    if k == 0 {
        return Err(Error::Usage("k must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::Usage(format!("PCA with k = {k} needs at least {} points, got {n}", k + 1)));
    }
    for b in batches {
        if b.features.cols() != d || b.actions.len() != b.features.rows() {
            return Err(Error::Dimension("feature batches disagree in width or label count".into()));
        }
    }
    let mut mean = vec![0.0; d];
    for b in batches {
        for row in b.features.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_row_iterator(
        n,
        d,
        batches
            .iter()
            .flat_map(|b| b.features.iter_rows())
            .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>()),
    );
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
        .collect();
    if kept.len() < k {
        log::warn!("features span only {} of the {k} requested components", kept.len());
    }
    let components: Vec<Vec<f64>> = kept
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Fix the sign so the largest-magnitude entry is positive.
            let j = argmax(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
            if v[j] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let explained_variance = kept.iter().map(|&i| eig.eigenvalues[i] / total).collect();
    let mut points = Vec::with_capacity(n);
    let mut r = 0;
    for b in batches {
        for (row, &action) in b.features.iter_rows().zip(&b.actions) {
            let coords = components
                .iter()
                .map(|c| (0..d).map(|j| centered[(r, j)] * c[j]).sum())
                .collect();
            debug_assert!(row.len() == d);
            points.push(ProjectedPoint {
                source: b.source,
                action,
                coords,
            });
            r += 1;
        }
    }
    Ok(PcaProjection {
        points,
        explained_variance,
        components,
        mean,
    })
}

/// Features the sleep policy computes for raw observations.
pub fn policy_features(sleep: &SleepAgent, observations: &Tensor) -> Result<Tensor> {
    match sleep.architecture {
        Architecture::Sequential => sleep.features(&sleep.net.vae.reconstruct_mean(observations)?),
        _ => sleep.features(observations),
    }
}

fn stack(transitions: &[&Transition]) -> Result<(Tensor, Vec<usize>)> {
    let rows: Vec<&[f64]> = transitions.iter().map(|t| t.observation.as_slice()).collect();
    let labels = transitions.iter().map(|t| argmax(&t.label.target())).collect();
    Ok((Tensor::from_rows(&rows)?, labels))
}

/// Sleep-agent features for up to `n` wake-buffer rows, `n` generated
/// samples and up to `n` random-replay rows. Empty sources are left out.
pub fn feature_batches(agent: &Agent, n: usize, rng: &mut Rng) -> Result<Vec<FeatureBatch>> {
    let sleep = agent
        .sleep
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("{} agents have no sleep features", agent.mode().name())))?;
    let mut out = Vec::new();
    let sources = [
        (FeatureSource::Wake, agent.wake_buffer.sample(n.min(agent.wake_buffer.len()), rng)),
        (FeatureSource::Random, agent.rar.sample(n.min(agent.rar.len()), rng)),
    ];
    for (source, rows) in sources {
        if rows.is_empty() {
            continue;
        }
        let (obs, actions) = stack(&rows)?;
        out.push(FeatureBatch {
            source,
            features: policy_features(sleep, &obs)?,
            actions,
        });
    }
    if n > 0 {
        let gen = sleep.generate(n, rng)?;
        let actions = sleep.pseudo_label(&gen)?;
        let features = match sleep.architecture {
            Architecture::Hidden => gen,
            _ => policy_features(sleep, &gen)?,
        };
        out.push(FeatureBatch {
            source: FeatureSource::Generated,
            features,
            actions,
        });
    }
    Ok(out)
}
