//! Structural-equation data generators with closed-form effects, and a
//! Monte Carlo harness for the decomposition estimators.
//!
//! The mediation design draws
//!
//! ```text
//! W ~ N(0, I)
//! G ~ Bernoulli(Φ(γ₀ + Wγ))
//! X = αG + Wδ + ε_x
//! Y = θG + Xβ + X²β_sq + G·Xβ_int + Wκ + ε_y
//! ```
//!
//! with independent normal noise. Because `E[X | G=1, W] − E[X | G=0, W] = α`
//! for every `W`, the population effects are closed-form.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_decomposition, BootstrapOptions};
use crate::data::{Column, Dataset, MediatorSet, RoleMap};
use crate::error::{Error, Result};
use crate::ipw::{ipw_mediation, TrimmingPolicy};
use crate::numkit::{dot, mean, normal_cdf, RngState};
use crate::oaxaca::{oaxaca_decompose, DecompositionResult, OaxacaOptions, COMPONENT_NAMES};

fn default_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDgp {
    pub n: usize,
    pub dim_w: usize,
    /// Index shift of the group equation.
    #[serde(default)]
    pub gamma0: f64,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `dim_w` rows of `alpha.len()` loadings.
    pub delta: Vec<Vec<f64>>,
    pub theta: f64,
    pub beta: Vec<f64>,
    /// Coefficients on squared mediators; empty means none.
    #[serde(default)]
    pub beta_sq: Vec<f64>,
    /// Coefficients on `G·X`; empty means none.
    #[serde(default)]
    pub beta_int: Vec<f64>,
    pub kappa: Vec<f64>,
    #[serde(default = "default_sd")]
    pub noise_sd_x: f64,
    #[serde(default = "default_sd")]
    pub noise_sd_y: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticDgp {
    /// One mediator, no controls: `θ` direct and `α·β` indirect effect.
    pub fn simple(n: usize, theta: f64, alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            n,
            dim_w: 0,
            gamma0: 0.0,
            gamma: vec![],
            alpha: vec![alpha],
            delta: vec![],
            theta,
            beta: vec![beta],
            beta_sq: vec![],
            beta_int: vec![],
            kappa: vec![],
            noise_sd_x: 1.0,
            noise_sd_y: 1.0,
            seed,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let dgp: Self = toml::from_str(text)?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn dim_x(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim_x();
        let bad = |what: &str| Err(Error::Config(format!("synthetic design: {what}")));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if k == 0 {
            return bad("at least one mediator is required");
        }
        if self.gamma.len() != self.dim_w || self.kappa.len() != self.dim_w || self.delta.len() != self.dim_w {
            return bad("gamma, kappa and delta need dim_w entries");
        }
        if self.delta.iter().any(|r| r.len() != k) || self.beta.len() != k {
            return bad("delta rows and beta need one entry per mediator");
        }
        if !(self.beta_sq.is_empty() || self.beta_sq.len() == k) || !(self.beta_int.is_empty() || self.beta_int.len() == k) {
            return bad("beta_sq and beta_int must be empty or have one entry per mediator");
        }
        if !(self.noise_sd_x > 0.0 && self.noise_sd_y > 0.0) {
            return bad("noise standard deviations must be positive");
        }
        let all = self
            .gamma
            .iter()
            .chain(&self.alpha)
            .chain(self.delta.iter().flatten())
            .chain(&self.beta)
            .chain(&self.beta_sq)
            .chain(&self.beta_int)
            .chain(&self.kappa)
            .chain([&self.gamma0, &self.theta]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    fn w_names(&self) -> Vec<String> {
        (1..=self.dim_w).map(|j| format!("w{j}")).collect()
    }

    fn x_names(&self) -> Vec<String> {
        (1..=self.dim_x()).map(|j| format!("x{j}")).collect()
    }

    /// Column roles of generated datasets: `g`, `y`, controls `w1..`,
    /// mediators `x1..` (all in the first block).
    pub fn roles(&self) -> RoleMap {
        RoleMap {
            group: "g".into(),
            outcome: "y".into(),
            controls: self.w_names(),
            mediators_m1: self.x_names(),
            mediators_m2: vec![],
            treatment: None,
            missing_token: String::new(),
        }
    }
}

fn coef(v: &[f64], j: usize) -> f64 {
    v.get(j).copied().unwrap_or(0.0)
}

/// Draws a dataset from `rng`; `dgp.seed` is ignored.
pub fn generate_with(dgp: &SyntheticDgp, rng: RngState) -> Result<Dataset> {
    dgp.validate()?;
    let (n, p, k) = (dgp.n, dgp.dim_w, dgp.dim_x());
    let mut gen = rng.generator();
    let mut g = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w_cols = vec![Vec::with_capacity(n); p];
    let mut x_cols = vec![Vec::with_capacity(n); k];
    let mut w = vec![0.0; p];
    for _ in 0..n {
        w.iter_mut().for_each(|v| *v = gen.standard_normal());
        let gi = if gen.bernoulli(normal_cdf(dgp.gamma0 + dot(&w, &dgp.gamma))) { 1.0 } else { 0.0 };
        let mut yi = dgp.theta * gi + dot(&w, &dgp.kappa);
        for j in 0..k {
            let load: f64 = (0..p).map(|l| w[l] * dgp.delta[l][j]).sum();
            let xj = dgp.alpha[j] * gi + load + dgp.noise_sd_x * gen.standard_normal();
            yi += xj * (dgp.beta[j] + gi * coef(&dgp.beta_int, j)) + xj * xj * coef(&dgp.beta_sq, j);
            x_cols[j].push(xj);
        }
        yi += dgp.noise_sd_y * gen.standard_normal();
        g.push(gi);
        y.push(yi);
        for (c, &v) in w_cols.iter_mut().zip(&w) {
            c.push(v);
        }
    }
    let mut names = vec!["g".to_string(), "y".to_string()];
    names.extend(dgp.w_names());
    names.extend(dgp.x_names());
    let columns = [g, y]
        .into_iter()
        .chain(w_cols)
        .chain(x_cols)
        .map(Column::complete)
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(names, columns)
}

/// Deterministic in `dgp.seed`.
pub fn generate(dgp: &SyntheticDgp) -> Result<Dataset> {
    generate_with(dgp, RngState::new(dgp.seed))
}

/// Population direct and indirect effects under both reference groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub total: f64,
    pub indirect_ref_female: f64,
    pub direct_ref_female: f64,
    pub indirect_ref_male: f64,
    pub direct_ref_male: f64,
}

impl TrueEffects {
    /// Same order as [`DecompositionResult::components`].
    pub fn components(&self) -> [f64; 5] {
        [self.total, self.indirect_ref_female, self.direct_ref_female, self.indirect_ref_male, self.direct_ref_male]
    }

    /// Male-referenced direct effect; equals the female one without
    /// interactions.
    pub fn direct(&self) -> f64 {
        self.direct_ref_male
    }

    pub fn indirect(&self) -> f64 {
        self.indirect_ref_male
    }
}

/// Closed-form effects, averaging over the population distribution of W.
///
/// With `W` centred, `E[X(1)² − X(0)²] = α²` per mediator, so the squared
/// term adds `Σ β_sq α²` to the indirect effect.
pub fn true_effects(dgp: &SyntheticDgp) -> Result<TrueEffects> {
    dgp.validate()?;
    let k = dgp.dim_x();
    let a = &dgp.alpha;
    let sq: f64 = (0..k).map(|j| coef(&dgp.beta_sq, j) * a[j] * a[j]).sum();
    let ab = dot(a, &dgp.beta);
    let a_int: f64 = (0..k).map(|j| a[j] * coef(&dgp.beta_int, j)).sum();
    Ok(TrueEffects {
        total: dgp.theta + ab + a_int + sq,
        indirect_ref_male: ab + a_int + sq,
        direct_ref_male: dgp.theta,
        indirect_ref_female: ab + sq,
        direct_ref_female: dgp.theta + a_int,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McEstimator {
    OaxacaBlinder,
    Ipw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub replications: usize,
    /// Bootstrap replications per dataset for interval coverage; 0 skips
    /// the bootstrap.
    pub bootstrap_b: usize,
    pub trim: TrimmingPolicy,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { replications: 200, bootstrap_b: 0, trim: TrimmingPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McComponent {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub rmse: f64,
    /// Standard deviation of the estimates across replications.
    pub sd: f64,
    /// Share of `estimate ± 1.96·SE` intervals covering the truth.
    pub ci_coverage: Option<f64>,
}

impl McComponent {
    /// Monte Carlo standard error of `mean_bias`.
    pub fn mc_se(&self, replications: usize) -> f64 {
        self.sd / (replications as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimator: McEstimator,
    pub replications: usize,
    pub n_failed: usize,
    pub components: Vec<McComponent>,
    /// Point estimates per successful replication, in replication order.
    pub estimates: Vec<[f64; 5]>,
}

impl McReport {
    pub fn component(&self, name: &str) -> Option<&McComponent> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Runs one estimator on `data` with the design's roles.
pub fn estimate(estimator: McEstimator, data: &Dataset, roles: &RoleMap, trim: &TrimmingPolicy) -> Result<DecompositionResult> {
    match estimator {
        McEstimator::OaxacaBlinder => oaxaca_decompose(data, roles, MediatorSet::M1, OaxacaOptions::default()),
        McEstimator::Ipw => ipw_mediation(data, roles, MediatorSet::M1, trim),
    }
}

/// Repeatedly generates, estimates and compares against [`true_effects`].
///
/// Replication `r` uses substream `r` of `dgp.seed` for its data. Failing
/// replications are counted and left out of the summaries.
pub fn monte_carlo(dgp: &SyntheticDgp, estimator: McEstimator, options: &McOptions) -> Result<McReport> {
    let reps = options.replications;
    if reps < 50 {
        return Err(Error::Config(format!("Monte Carlo needs at least 50 replications, got {reps}")));
    }
    let truth = true_effects(dgp)?.components();
    let roles = dgp.roles();
    let root = RngState::new(dgp.seed);

    let outcomes: Vec<Option<([f64; 5], Option<[f64; 5]>)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let stream = root.substream(r as u64);
            let data = generate_with(dgp, stream).ok()?;
            let est = |d: &Dataset| estimate(estimator, d, &roles, &options.trim);
            if options.bootstrap_b == 0 {
                return est(&data).ok().map(|res| (res.components(), None));
            }
            let seed = stream.substream(1).generator().next_u64();
            let res = bootstrap_decomposition(est, &data, &BootstrapOptions::new(options.bootstrap_b, seed)).ok()?;
            let se = res.inference.as_ref().map(|i| i.standard_errors);
            Some((res.components(), se))
        })
        .collect();

    let ok: Vec<_> = outcomes.into_iter().flatten().collect();
    let n_failed = reps - ok.len();
    if ok.len() < 2 {
        return Err(Error::Inference { failed: n_failed, total: reps });
    }
    let components = (0..5)
        .map(|j| {
            let est: Vec<f64> = ok.iter().map(|(e, _)| e[j]).collect();
            let m = mean(&est);
            let sd = (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
            let rmse = (est.iter().map(|e| (e - truth[j]).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
            let ci_coverage = (options.bootstrap_b > 0).then(|| {
                let hits = ok
                    .iter()
                    .filter(|(e, se)| se.is_some_and(|s| (e[j] - truth[j]).abs() <= 1.96 * s[j]))
                    .count();
                hits as f64 / ok.len() as f64
            });
            McComponent {
                name: COMPONENT_NAMES[j].to_string(),
                truth: truth[j],
                mean_estimate: m,
                mean_bias: m - truth[j],
                rmse,
                sd,
                ci_coverage,
            }
        })
        .collect();
    Ok(McReport { estimator, replications: reps, n_failed, components, estimates: ok.iter().map(|(e, _)| *e).collect() })
}

/// Randomized-intervention design for treatment-effect estimators.
///
/// `Y = τD + c·(W₁ + … + W_s) + ε` with `D ~ Bernoulli(treat_prob)`
/// independent of the `p` standard normal covariates, of which the first
/// `s = n_relevant` matter. A group indicator `g ~ Bernoulli(1/2)` is
/// included so the data carry the usual roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedDgp {
    pub n: usize,
    pub n_covariates: usize,
    pub n_relevant: usize,
    pub tau: f64,
    #[serde(default = "default_sd")]
    pub coefficient: f64,
    #[serde(default = "half")]
    pub treat_prob: f64,
    #[serde(default = "default_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

impl RandomizedDgp {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let dgp: Self = toml::from_str(text)?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_relevant > self.n_covariates {
            return Err(Error::Config("randomized design needs n > 0 and n_relevant <= n_covariates".into()));
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) || !(self.noise_sd > 0.0) {
            return Err(Error::Config("treat_prob must lie in (0, 1) and noise_sd be positive".into()));
        }
        Ok(())
    }

    pub fn roles(&self) -> RoleMap {
        let w: Vec<String> = (1..=self.n_covariates).map(|j| format!("w{j}")).collect();
        RoleMap { controls: w, treatment: Some("d".into()), ..RoleMap::new("g", "y") }
    }

    pub fn generate_with(&self, rng: RngState) -> Result<Dataset> {
        self.validate()?;
        let mut gen = rng.generator();
        let p = self.n_covariates;
        let mut cols = vec![Vec::with_capacity(self.n); p + 3];
        for _ in 0..self.n {
            let d = if gen.bernoulli(self.treat_prob) { 1.0 } else { 0.0 };
            let g = if gen.bernoulli(0.5) { 1.0 } else { 0.0 };
            let mut y = self.tau * d;
            for j in 0..p {
                let w = gen.standard_normal();
                if j < self.n_relevant {
                    y += self.coefficient * w;
                }
                cols[3 + j].push(w);
            }
            y += self.noise_sd * gen.standard_normal();
            cols[0].push(g);
            cols[1].push(y);
            cols[2].push(d);
        }
        let mut names = vec!["g".to_string(), "y".to_string(), "d".to_string()];
        names.extend((1..=p).map(|j| format!("w{j}")));
        Dataset::new(names, cols.into_iter().map(Column::complete).collect::<Result<Vec<_>>>()?)
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.generate_with(RngState::new(self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_rows(d: &Dataset) -> Vec<usize> {
        (0..d.n_rows()).collect()
    }

    #[test]
    fn closed_form_effects() {
        let e = true_effects(&SyntheticDgp::simple(10, 1.0, 0.5, 2.0, 0)).unwrap();
        assert_eq!((e.direct(), e.indirect(), e.total), (1.0, 1.0, 2.0));
        assert_eq!(e.direct_ref_female, e.direct_ref_male);

        let e = true_effects(&SyntheticDgp::simple(10, 0.0, 0.0, 0.0, 0)).unwrap();
        assert_eq!(e.components(), [0.0; 5]);

        let e = true_effects(&SyntheticDgp::simple(10, 0.38, 0.69, 1.0, 0)).unwrap();
        assert!((e.total - 1.07).abs() < 1e-12);
    }

    #[test]
    fn interaction_and_square_terms() {
        let mut dgp = SyntheticDgp::simple(10, 1.0, 2.0, 0.5, 0);
        dgp.beta_int = vec![0.25];
        dgp.beta_sq = vec![0.1];
        let e = true_effects(&dgp).unwrap();
        assert!((e.indirect_ref_male - (2.0 * 0.75 + 0.4)).abs() < 1e-12);
        assert!((e.indirect_ref_female - (1.0 + 0.4)).abs() < 1e-12);
        assert!((e.direct_ref_female - 1.5).abs() < 1e-12);
        assert!((e.indirect_ref_male + e.direct_ref_male - e.total).abs() < 1e-12);
        assert!((e.indirect_ref_female + e.direct_ref_female - e.total).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let dgp = SyntheticDgp::simple(300, 1.0, 0.5, 2.0, 17);
        assert_eq!(generate(&dgp).unwrap(), generate(&dgp).unwrap());
        let other = SyntheticDgp { seed: 18, ..dgp.clone() };
        assert_ne!(generate(&dgp).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn mediator_mean_matches_design() {
        let dgp = SyntheticDgp::simple(20_000, 0.0, 0.7, 1.0, 3);
        let d = generate(&dgp).unwrap();
        let rows = all_rows(&d);
        let g = d.values("g", &rows).unwrap();
        let x = d.values("x1", &rows).unwrap();
        // E[X] = α·Pr(G=1) = 0.35; SD(X) ≈ √(1 + α²/4).
        let sd = (1.0f64 + 0.49 / 4.0).sqrt();
        assert!((mean(&x) - 0.35).abs() <= 4.0 * sd / (20_000f64).sqrt());
        assert!((mean(&g) - 0.5).abs() < 0.02);
    }

    #[test]
    fn null_design_has_zero_gap() {
        let dgp = SyntheticDgp::simple(100_000, 0.0, 0.0, 1.0, 9);
        let d = generate(&dgp).unwrap();
        let r = oaxaca_decompose(&d, &dgp.roles(), MediatorSet::M1, OaxacaOptions::default()).unwrap();
        assert!(r.total_gap.abs() < 0.03);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let text = r#"
            n = 100
            dim_w = 1
            gamma = [0.5]
            alpha = [0.5]
            delta = [[0.3]]
            theta = 1.0
            beta = [2.0]
            kappa = [0.0]
            seed = 4
        "#;
        let dgp = SyntheticDgp::from_toml_str(text).unwrap();
        assert_eq!(dgp.noise_sd_y, 1.0);
        assert_eq!(dgp.roles().controls, vec!["w1"]);
        assert!(SyntheticDgp::from_toml_str(&text.replace("[[0.3]]", "[[0.3, 1.0]]")).is_err());
        assert!(SyntheticDgp::from_toml_str(&text.replace("seed = 4", "seed = 4\nnoise_sd_x = 0.0")).is_err());
    }

    #[test]
    fn alpha_zero_gives_null_indirect_for_ipw() {
        let dgp = SyntheticDgp {
            dim_w: 1,
            gamma: vec![0.4],
            delta: vec![vec![0.5]],
            kappa: vec![0.5],
            ..SyntheticDgp::simple(10_000, 1.0, 0.0, 1.0, 12)
        };
        let d = generate(&dgp).unwrap();
        let r = ipw_mediation(&d, &dgp.roles(), MediatorSet::M1, &TrimmingPolicy::default()).unwrap();
        assert!(r.indirect_ref_male.abs() < 0.1);
        assert!(r.indirect_ref_female.abs() < 0.1);
    }

    #[test]
    fn monte_carlo_rejects_few_replications() {
        let dgp = SyntheticDgp::simple(100, 1.0, 0.5, 2.0, 0);
        let opts = McOptions { replications: 10, ..Default::default() };
        assert!(matches!(monte_carlo(&dgp, McEstimator::OaxacaBlinder, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn monte_carlo_small_oaxaca_run() {
        let dgp = SyntheticDgp::simple(400, 1.0, 0.5, 2.0, 5);
        let opts = McOptions { replications: 50, ..Default::default() };
        let r = monte_carlo(&dgp, McEstimator::OaxacaBlinder, &opts).unwrap();
        assert_eq!(r.n_failed, 0);
        for c in &r.components {
            assert!(c.mean_bias.abs() < 4.0 * c.mc_se(50) + 1e-9, "{c:?}");
            assert!(c.ci_coverage.is_none());
        }
    }

    #[test]
    fn randomized_design_layout() {
        let dgp = RandomizedDgp {
            n: 50,
            n_covariates: 4,
            n_relevant: 2,
            tau: 2.0,
            coefficient: 1.0,
            treat_prob: 0.5,
            noise_sd: 1.0,
            seed: 1,
        };
        let d = dgp.generate().unwrap();
        assert_eq!(d.column_names(), &["g", "y", "d", "w1", "w2", "w3", "w4"]);
        assert_eq!(dgp.roles().treatment.as_deref(), Some("d"));
        assert_eq!(d, dgp.generate().unwrap());
    }
}
