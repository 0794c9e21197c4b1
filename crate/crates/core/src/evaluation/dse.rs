use log::{info, warn};
use rayon::prelude::*;

use crate::data::{compute_normal_mean, split_fixed, NormalMean, PumpDataset};
use crate::detectors::{
    cnn_predict, ecnn_labels, select_factor_fpr, training_examples,
    PolicyKind, SelectionPolicy, DEFAULT_TARGET_FPR,
};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, Algorithm, EvalRecord};
use crate::nn::{count_macs, train, ModelConfig, TrainHyper};
use crate::rng::Rng;

/// Architecture grid, visited depth-major, then kernel, then channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DseGrid {
    pub depths: Vec<usize>,
    pub kernels: Vec<usize>,
    pub channels: Vec<usize>,
    pub enhanced: bool,
}

impl Default for DseGrid {
    fn default() -> Self {
        Self {
            depths: vec![2, 4, 6, 8, 10],
            kernels: vec![3, 7, 11, 15, 19, 23],
            channels: vec![5, 10, 20, 30],
            enhanced: false,
        }
    }
}

impl DseGrid {
    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &d in &self.depths {
            for &k in &self.kernels {
                for &c in &self.channels {
                    out.push(if self.enhanced {
                        ModelConfig::ecnn(d, k, c)
                    } else {
                        ModelConfig::cnn(d, k, c)
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DseConfig {
    pub grid: DseGrid,
    pub hyper: TrainHyper,
    pub test_ratio: f64,
    pub target_fpr: f64,
    pub jobs: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        Self {
            grid: DseGrid::default(),
            hyper: TrainHyper::default(),
            test_ratio: 0.2,
            target_fpr: DEFAULT_TARGET_FPR,
            jobs: 1,
        }
    }
}

/// Trains every grid point on one stratified split and reports test accuracy.
///
/// Grid point `i` trains with seed stream `(seed, i)`. Invalid points are
/// skipped with a warning; records keep grid order.
pub fn run_dse(dataset: &PumpDataset, cfg: &DseConfig) -> Result<Vec<EvalRecord>> {
    cfg.hyper.validate()?;
    if cfg.jobs == 0 {
        return Err(Error::usage("jobs must be at least 1"));
    }
    let configs: Vec<(usize, ModelConfig)> = cfg
        .grid
        .configs()
        .into_iter()
        .enumerate()
        .filter(|(i, c)| match c.validate() {
            Ok(()) => true,
            Err(e) => {
                warn!("grid point {i} ({} {}/{}/{}) skipped: {e}", c.label(), c.depth, c.kernel, c.channels);
                false
            }
        })
        .collect();
    if configs.is_empty() {
        return Err(Error::usage("design space grid has no valid point"));
    }

    let (train_view, test_view) = split_fixed(dataset, cfg.test_ratio, cfg.hyper.seed)?;
    let test: Vec<_> = test_view.samples().collect();
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let enhanced = cfg.grid.enhanced;
    let base = Rng::stream(cfg.hyper.seed, u64::MAX).next_u64();
    let examples = training_examples(&train_view, enhanced, base)?;

    let mut means: Vec<(&str, NormalMean, f64)> = Vec::new();
    let policy = SelectionPolicy {
        target_fpr: cfg.target_fpr,
        ..SelectionPolicy::new(PolicyKind::Fpr)
    };
    let train_by_pump = train_view.by_pump();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::usage(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let models = pool.install(|| {
        configs
            .par_iter()
            .map(|&(i, config)| {
                info!("grid point {i}: training {} {}/{}/{}", config.label(), config.depth, config.kernel, config.channels);
                let hyper = TrainHyper {
                    seed: Rng::stream(cfg.hyper.seed, i as u64).next_u64(),
                    ..cfg.hyper
                };
                train(&examples, config, &hyper).map_err(|e| e.context(&format!("grid point {i}")))
            })
            .collect::<Vec<_>>()
    });

    let mut records = Vec::with_capacity(configs.len());
    for (&(_, config), model) in configs.iter().zip(models) {
        let model = model?;
        let predictions: Vec<u8> = if enhanced {
            means.clear();
            let fallback = *policy.grid.last().expect("non-empty grid");
            for (pump, normals) in &train_by_pump {
                let normals: Vec<_> = normals.iter().copied().filter(|s| s.is_normal()).collect();
                let mean = compute_normal_mean(normals.iter().copied())?;
                let factor = select_factor_fpr(&model, &normals, &mean, &policy)?.unwrap_or(fallback);
                means.push((pump, mean, factor));
            }
            let mut out = Vec::with_capacity(test.len());
            for s in &test {
                let (_, mean, factor) = means
                    .iter()
                    .find(|(p, _, _)| *p == s.pump_id)
                    .ok_or_else(|| Error::usage(format!("test pump '{}' has no training normals", s.pump_id)))?;
                out.extend(ecnn_labels(&model, &[*s], mean, *factor)?);
            }
            out
        } else {
            test.iter()
                .map(|s| cnn_predict(&model, s).map(|(_, l)| l))
                .collect::<Result<_>>()?
        };
        records.push(EvalRecord {
            scope: "test".to_string(),
            algorithm: if enhanced { Algorithm::Ecnn } else { Algorithm::Cnn },
            policy: enhanced.then_some(PolicyKind::Fpr),
            config: Some(config),
            mac_count: count_macs(&config),
            accuracy: accuracy(&predictions, &labels)?,
            fpr: crate::evaluation::fpr(&predictions, &labels).ok(),
            tpdr: None,
            sample_count: labels.len(),
        });
    }
    Ok(records)
}
