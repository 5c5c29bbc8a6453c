//! End-to-end analyses behind the command-line tool and their reports.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::balance::{balance_table_for, common_support, reweighted_balance, BalanceTable, SupportHistogram};
use crate::bootstrap::{bootstrap_decomposition, BootstrapOptions};
use crate::data::{complete_cases, load_csv, Dataset, MediatorSet, RoleMap};
use crate::error::{Error, Result};
use crate::ipw::{estimate_propensities, ipw_mediation, trim, TrimmingPolicy};
use crate::lasso::{ate_double_lasso, DoubleLassoOptions};
use crate::oaxaca::{oaxaca_decompose, DecompositionMethod, DecompositionResult, OaxacaOptions, COMPONENT_NAMES};
use crate::ols::{ate_mean_difference, ate_ols_controls, EffectEstimate};
use crate::synth::{monte_carlo, McEstimator, McOptions, McReport, SyntheticDgp};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Oaxaca,
    Ipw,
    AteExperiment,
    Balance,
    Support,
    SynthMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceGroup {
    Female,
    Male,
    #[default]
    Both,
}

impl ReferenceGroup {
    /// Indices into the five-component layout that this choice reports.
    fn component_indices(self) -> &'static [usize] {
        match self {
            ReferenceGroup::Female => &[0, 1, 2],
            ReferenceGroup::Male => &[0, 3, 4],
            ReferenceGroup::Both => &[0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Input CSV; for `synth_mc`, the synthetic design TOML.
    pub data_path: PathBuf,
    /// Role map TOML; unused by `synth_mc`.
    pub roles_path: Option<PathBuf>,
    pub analysis: Analysis,
    pub mediator_set: MediatorSet,
    pub reference_group: ReferenceGroup,
    pub trim: f64,
    /// Trim on `p(X,W)` alone instead of both scores.
    pub trim_mediator_score_only: bool,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub output_format: OutputFormat,
    /// Regress on the controls as well in the Oaxaca-Blinder analysis.
    pub include_controls: bool,
    pub support_bins: usize,
    pub mc_estimator: McEstimator,
    pub mc_replications: usize,
    /// Bootstrap worker threads; does not affect results.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(analysis: Analysis, data_path: impl Into<PathBuf>, roles_path: Option<PathBuf>) -> Self {
        Self {
            data_path: data_path.into(),
            roles_path,
            analysis,
            mediator_set: MediatorSet::M1,
            reference_group: ReferenceGroup::Both,
            trim: 0.02,
            trim_mediator_score_only: false,
            bootstrap_b: 499,
            seed: 0,
            output_format: OutputFormat::Text,
            include_controls: false,
            support_bins: 20,
            mc_estimator: McEstimator::Ipw,
            mc_replications: 200,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::Config(format!("trim must lie in [0, 0.5), got {}", self.trim)));
        }
        if self.bootstrap_b < 2 {
            return Err(Error::Config(format!("bootstrap replications must be at least 2, got {}", self.bootstrap_b)));
        }
        if self.support_bins < 2 {
            return Err(Error::Config("support histogram needs at least 2 bins".into()));
        }
        if self.analysis != Analysis::SynthMc && self.roles_path.is_none() {
            return Err(Error::Config("a role map is required for this analysis".into()));
        }
        Ok(())
    }

    pub fn trimming_policy(&self) -> Result<TrimmingPolicy> {
        let mut p = TrimmingPolicy::symmetric(self.trim)?;
        if self.trim_mediator_score_only {
            p.target = crate::ipw::TrimTarget::MediatorScoreOnly;
        }
        Ok(p)
    }

    fn bootstrap_options(&self, seed: u64) -> BootstrapOptions {
        BootstrapOptions { workers: self.workers, ..BootstrapOptions::new(self.bootstrap_b, seed) }
    }
}

/// Row accounting from input file to estimation sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleAccounting {
    pub n_rows: usize,
    pub n_dropped_missing: usize,
    pub n_trimmed: usize,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Decomposition {
        method: DecompositionMethod,
        components: Vec<ComponentRow>,
        replications: usize,
        n_failed_replicates: usize,
        unstable: bool,
    },
    Treatment {
        estimates: Vec<EffectEstimate>,
    },
    Balance {
        unweighted: BalanceTable,
        reweighted: BalanceTable,
    },
    Support {
        histogram: SupportHistogram,
        overlap: f64,
    },
    MonteCarlo {
        report: McReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub sample: SampleAccounting,
    pub body: ReportBody,
}

fn load_inputs(config: &RunConfig) -> Result<(Dataset, RoleMap)> {
    let roles_path = config.roles_path.as_ref().ok_or_else(|| Error::Config("missing role map".into()))?;
    let roles = RoleMap::load(roles_path)?;
    let data = load_csv(&config.data_path, &roles)?;
    Ok((data, roles))
}

fn decomposition_body(r: &DecompositionResult, reference: ReferenceGroup) -> ReportBody {
    let inf = r.inference.as_ref();
    let est = r.components();
    let components = reference
        .component_indices()
        .iter()
        .map(|&j| ComponentRow {
            name: COMPONENT_NAMES[j].to_string(),
            estimate: est[j],
            standard_error: inf.map_or(f64::NAN, |i| i.standard_errors[j]),
            p_value: inf.map_or(f64::NAN, |i| i.p_values[j]),
        })
        .collect();
    ReportBody::Decomposition {
        method: r.method,
        components,
        replications: inf.map_or(0, |i| i.replications),
        n_failed_replicates: inf.map_or(0, |i| i.n_failed_replicates),
        unstable: inf.is_some_and(|i| i.unstable),
    }
}

/// Executes the configured analysis.
pub fn run(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let (sample, body) = match config.analysis {
        Analysis::Oaxaca | Analysis::Ipw => {
            let (data, roles) = load_inputs(config)?;
            let set = config.mediator_set;
            let policy = config.trimming_policy()?;
            let options = OaxacaOptions { include_controls: config.include_controls };
            let ipw = config.analysis == Analysis::Ipw;
            let est = |d: &Dataset| {
                if ipw {
                    ipw_mediation(d, &roles, set, &policy)
                } else {
                    oaxaca_decompose(d, &roles, set, options)
                }
            };
            let r = bootstrap_decomposition(est, &data, &config.bootstrap_options(config.seed))?;
            let sample = SampleAccounting {
                n_rows: data.n_rows(),
                n_dropped_missing: r.n_dropped_missing,
                n_trimmed: r.n_trimmed,
                n_used: r.n_used,
            };
            (sample, decomposition_body(&r, config.reference_group))
        }
        Analysis::AteExperiment => {
            let (data, roles) = load_inputs(config)?;
            let treat = roles
                .treatment
                .clone()
                .ok_or_else(|| Error::Config("role map has no [treatment] column".into()))?;
            let mut used = vec![roles.outcome.clone(), treat.clone()];
            used.extend(roles.controls.iter().cloned());
            let s = complete_cases(&data, &used)?;
            let rows = &s.kept_row_indices;
            let y = data.values(&roles.outcome, rows)?;
            let d = data.values(&treat, rows)?;
            let w = data.matrix(&roles.controls, rows)?;
            let lasso = DoubleLassoOptions { seed: config.seed, ..Default::default() };
            let estimates = vec![
                ate_mean_difference(&y, &d)?,
                ate_ols_controls(&y, &d, &w)?,
                ate_double_lasso(&y, &d, &w, lasso)?,
            ];
            let sample = SampleAccounting {
                n_rows: data.n_rows(),
                n_dropped_missing: s.n_dropped_missing,
                n_trimmed: 0,
                n_used: s.n_kept(),
            };
            (sample, ReportBody::Treatment { estimates })
        }
        Analysis::Balance => {
            let (data, roles) = load_inputs(config)?;
            let mut used = vec![roles.group.clone(), roles.outcome.clone()];
            used.extend(roles.controls.iter().cloned());
            used.extend(roles.mediators(config.mediator_set));
            let s = complete_cases(&data, &used)?;
            let complete = data.select_rows(&s.kept_row_indices);
            let mut vars = roles.controls.clone();
            vars.extend(roles.mediators(config.mediator_set));
            let unweighted = balance_table_for(&complete, &roles.group, &vars, None)?;
            let (reweighted, trimmed) = reweighted_balance(&data, &roles, config.mediator_set, &config.trimming_policy()?)?;
            let sample = SampleAccounting {
                n_rows: data.n_rows(),
                n_dropped_missing: s.n_dropped_missing,
                n_trimmed: s.n_kept() - trimmed.n_rows(),
                n_used: trimmed.n_rows(),
            };
            (sample, ReportBody::Balance { unweighted, reweighted })
        }
        Analysis::Support => {
            let (data, roles) = load_inputs(config)?;
            let est = estimate_propensities(&data, &roles, config.mediator_set)?;
            let t = trim(&est.scores, &config.trimming_policy()?)?;
            let g: Vec<f64> = t.kept.iter().map(|&i| est.group[i]).collect();
            let histogram = common_support(&est.scores.select(&t.kept), &g, config.support_bins)?;
            let sample = SampleAccounting {
                n_rows: data.n_rows(),
                n_dropped_missing: est.sample.n_dropped_missing,
                n_trimmed: t.n_trimmed,
                n_used: t.kept.len(),
            };
            (sample, ReportBody::Support { overlap: histogram.overlap(), histogram })
        }
        Analysis::SynthMc => {
            let dgp = SyntheticDgp { seed: config.seed, ..SyntheticDgp::load(&config.data_path)? };
            let options = McOptions {
                replications: config.mc_replications,
                bootstrap_b: config.bootstrap_b,
                trim: config.trimming_policy()?,
            };
            let report = monte_carlo(&dgp, config.mc_estimator, &options)?;
            let sample = SampleAccounting { n_rows: dgp.n, n_dropped_missing: 0, n_trimmed: 0, n_used: dgp.n };
            (sample, ReportBody::MonteCarlo { report })
        }
    };
    Ok(Report { schema_version: SCHEMA_VERSION, seed: config.seed, config: config.clone(), sample, body })
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.4}")
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        match &self.body {
            ReportBody::Decomposition { components, .. } => {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["component", "estimate", "standard_error", "p_value"])?;
                for c in components {
                    w.write_record([
                        c.name.clone(),
                        c.estimate.to_string(),
                        c.standard_error.to_string(),
                        c.p_value.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            ReportBody::Treatment { estimates } => {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["estimator", "estimate", "standard_error", "p_value", "n_used"])?;
                for e in estimates {
                    let kind = serde_json::to_value(e.estimator_kind)?;
                    w.write_record([
                        kind.as_str().unwrap_or_default().to_string(),
                        e.estimate.to_string(),
                        e.standard_error.to_string(),
                        e.p_value.to_string(),
                        e.n_used.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            ReportBody::Balance { unweighted, reweighted } => {
                buf.extend_from_slice(b"# unweighted\n");
                unweighted.write_csv(&mut buf)?;
                buf.extend_from_slice(b"# reweighted\n");
                reweighted.write_csv(&mut buf)?;
            }
            ReportBody::Support { histogram, .. } => histogram.write_csv(&mut buf)?,
            ReportBody::MonteCarlo { report } => {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["component", "truth", "mean_estimate", "mean_bias", "rmse", "ci_coverage"])?;
                for c in &report.components {
                    w.write_record([
                        c.name.clone(),
                        c.truth.to_string(),
                        c.mean_estimate.to_string(),
                        c.mean_bias.to_string(),
                        c.rmse.to_string(),
                        c.ci_coverage.map_or(String::new(), |v| v.to_string()),
                    ])?;
                }
                w.flush()?;
            }
        }
        String::from_utf8(buf).map_err(|e| Error::Schema(format!("non-UTF-8 CSV output: {e}")))
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let analysis = serde_json::to_value(c.analysis).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            out,
            "analysis: {analysis}  mediators: {}  trim: {}  bootstrap: {}  seed: {}",
            c.mediator_set.label(),
            c.trim,
            c.bootstrap_b,
            self.seed
        );
        match &self.body {
            ReportBody::Decomposition { components, n_failed_replicates, unstable, .. } => {
                let _ = writeln!(out, "{:<12}{:>12}{:>12}{:>12}", "", "est", "se", "pval");
                for r in components {
                    let _ = writeln!(
                        out,
                        "{:<12}{:>12}{:>12}{:>12}",
                        r.name,
                        fmt_num(r.estimate),
                        fmt_num(r.standard_error),
                        fmt_num(r.p_value)
                    );
                }
                if *n_failed_replicates > 0 {
                    let flag = if *unstable { " (unstable)" } else { "" };
                    let _ = writeln!(out, "failed replicates: {n_failed_replicates}{flag}");
                }
            }
            ReportBody::Treatment { estimates } => {
                let _ = writeln!(out, "{:<16}{:>12}{:>12}{:>12}", "", "est", "se", "pval");
                for e in estimates {
                    let name = serde_json::to_value(e.estimator_kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{:<16}{:>12}{:>12}{:>12}",
                        name,
                        fmt_num(e.estimate),
                        fmt_num(e.standard_error),
                        fmt_num(e.p_value)
                    );
                    for w in &e.warnings {
                        let _ = writeln!(out, "  warning: {w}");
                    }
                }
            }
            ReportBody::Balance { unweighted, reweighted } => {
                for (title, t) in [("before reweighting", unweighted), ("after reweighting", reweighted)] {
                    let _ = writeln!(out, "{title}");
                    let _ = writeln!(out, "{:<16}{:>12}{:>12}{:>12}{:>12}", "", "mean G=0", "mean G=1", "dif", "pval");
                    for r in &t.rows {
                        let _ = writeln!(
                            out,
                            "{:<16}{:>12}{:>12}{:>12}{:>12}",
                            r.name,
                            fmt_num(r.mean_group0),
                            fmt_num(r.mean_group1),
                            fmt_num(r.difference),
                            fmt_num(r.p_value)
                        );
                    }
                }
            }
            ReportBody::Support { histogram, overlap } => {
                let _ = writeln!(out, "{:<16}{:>10}{:>10}", "p(X,W) bin", "G=0", "G=1");
                for b in 0..histogram.counts_group0.len() {
                    let label = format!("[{:.2}, {:.2})", histogram.bin_edges[b], histogram.bin_edges[b + 1]);
                    let _ = writeln!(out, "{label:<16}{:>10}{:>10}", histogram.counts_group0[b], histogram.counts_group1[b]);
                }
                let _ = writeln!(out, "overlap: {}", fmt_num(*overlap));
            }
            ReportBody::MonteCarlo { report } => {
                let _ = writeln!(out, "{:<12}{:>10}{:>10}{:>10}{:>10}{:>10}", "", "truth", "mean", "bias", "rmse", "cover");
                for m in &report.components {
                    let _ = writeln!(
                        out,
                        "{:<12}{:>10}{:>10}{:>10}{:>10}{:>10}",
                        m.name,
                        fmt_num(m.truth),
                        fmt_num(m.mean_estimate),
                        fmt_num(m.mean_bias),
                        fmt_num(m.rmse),
                        m.ci_coverage.map_or("NA".into(), fmt_num)
                    );
                }
                let _ = writeln!(out, "replications: {}  failed: {}", report.replications, report.n_failed);
            }
        }
        let s = &self.sample;
        let _ = writeln!(out, "missings / trimmed: {} / {}", s.n_dropped_missing, s.n_trimmed);
        let _ = writeln!(out, "observations: {}", s.n_used);
        out
    }

    pub fn render(&self) -> Result<String> {
        match self.config.output_format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Text => Ok(self.to_text()),
        }
    }
}
