//! Nonparametric row bootstrap for vector-valued estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{mean, normal_p_value, RngState};
use crate::oaxaca::{ComponentInference, DecompositionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Resample within the levels of this binary column instead of over
    /// all rows.
    pub stratify_by: Option<String>,
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self { replications, seed, workers: None, stratify_by: None }
    }
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self::new(499, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point_estimate: Vec<f64>,
    /// One row per successful replicate, in replicate order.
    pub replicate_estimates: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub replications: usize,
    pub n_failed_replicates: usize,
    /// More than a tenth of the replicates failed.
    pub unstable: bool,
}

impl BootstrapResult {
    /// Attaches the SEs and p-values to a five-component decomposition.
    pub fn component_inference(&self) -> Result<ComponentInference> {
        let arr = |v: &[f64]| -> Result<[f64; 5]> {
            v.try_into()
                .map_err(|_| Error::Dimension(format!("expected 5 components, got {}", v.len())))
        };
        Ok(ComponentInference {
            standard_errors: arr(&self.standard_errors)?,
            p_values: arr(&self.p_values)?,
            replications: self.replications,
            n_failed_replicates: self.n_failed_replicates,
            unstable: self.unstable,
        })
    }
}

/// Row indices drawn with replacement for replicate `index`.
pub fn resample_indices(n: usize, strata: Option<&[Vec<usize>]>, rng: RngState) -> Vec<usize> {
    let mut gen = rng.generator();
    match strata {
        None => (0..n).map(|_| gen.index(n)).collect(),
        Some(strata) => strata
            .iter()
            .flat_map(|s| (0..s.len()).map(|_| s[gen.index(s.len())]).collect::<Vec<_>>())
            .collect(),
    }
}

fn strata_of(data: &Dataset, column: &str) -> Result<Vec<Vec<usize>>> {
    let col = data.column(column)?;
    let mut levels: Vec<(f64, Vec<usize>)> = Vec::new();
    for r in 0..data.n_rows() {
        // Missing cells form their own stratum.
        let key = col.value(r).unwrap_or(f64::NAN);
        match levels.iter_mut().find(|(k, _)| k == &key || (k.is_nan() && key.is_nan())) {
            Some((_, rows)) => rows.push(r),
            None => levels.push((key, vec![r])),
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(levels.into_iter().map(|(_, rows)| rows).collect())
}

/// Per-column sample standard deviation (n − 1 divisor).
fn column_sd(rows: &[Vec<f64>], j: usize) -> f64 {
    let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
    if v.len() < 2 || v.iter().all(|&x| x == v[0]) {
        return 0.0;
    }
    let m = mean(&v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Evaluates `estimator` on the full sample and on `replications` resamples.
///
/// Replicate `b` draws from substream `b` of the seed, so the result does
/// not depend on the worker count or on scheduling. Replicates whose
/// estimator call fails are excluded from the standard errors.
pub fn bootstrap<F>(estimator: F, data: &Dataset, options: &BootstrapOptions) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    let b_total = options.replications;
    if b_total < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replications, got {b_total}")));
    }
    if options.workers == Some(0) {
        return Err(Error::Config("worker count must be positive".into()));
    }
    let point = estimator(data)?;
    let strata = options.stratify_by.as_deref().map(|c| strata_of(data, c)).transpose()?;
    let root = RngState::new(options.seed);
    let n = data.n_rows();

    let run = || -> Vec<Option<Vec<f64>>> {
        (0..b_total)
            .into_par_iter()
            .map(|b| {
                let idx = resample_indices(n, strata.as_deref(), root.substream(b as u64));
                estimator(&data.select_rows(&idx))
                    .ok()
                    .filter(|v| v.len() == point.len() && v.iter().all(|x| x.is_finite()))
            })
            .collect()
    };
    let outcomes = match options.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    let replicates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let failed = b_total - replicates.len();
    if 2 * failed > b_total {
        return Err(Error::Inference { failed, total: b_total });
    }
    let standard_errors: Vec<f64> = (0..point.len()).map(|j| column_sd(&replicates, j)).collect();
    let p_values = point.iter().zip(&standard_errors).map(|(&e, &s)| normal_p_value(e, s)).collect();
    Ok(BootstrapResult {
        point_estimate: point,
        replicate_estimates: replicates,
        standard_errors,
        p_values,
        replications: b_total,
        n_failed_replicates: failed,
        unstable: 10 * failed > b_total,
    })
}

/// Bootstraps a decomposition and stores the inference in the result.
pub fn bootstrap_decomposition<F>(estimator: F, data: &Dataset, options: &BootstrapOptions) -> Result<DecompositionResult>
where
    F: Fn(&Dataset) -> Result<DecompositionResult> + Sync,
{
    let mut full = estimator(data)?;
    let boot = bootstrap(|d| estimator(d).map(|r| r.components().to_vec()), data, options)?;
    full.inference = Some(boot.component_inference()?);
    Ok(full)
}
