//! Model definitions: observation container, likelihood, and priors.
//!
//! Three nested tiers share one Poisson observation model for counts with
//! known expected values:
//!
//! * `Glm`: log-linear regression, no spatial terms.
//! * `Bym`: adds a spatially structured effect `phi` (intrinsic CAR prior)
//!   and an unstructured effect `theta` per region.
//! * `SpatioTemporal`: the convolution model plus a linear trend in the
//!   observation period.
//!
//! The linear predictor for observation `k` in region `r(k)` is
//! `eta_k = beta0 + x_k' beta + phi_{r(k)} + theta_{r(k)} + beta_t * t_k`,
//! with the spatial and temporal pieces present per tier. Periods enter
//! centered at their midpoint so the intercept keeps its meaning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::scalar::Scalar;

/// Model family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTier {
    /// Log-linear Poisson regression without spatial structure.
    Glm,
    /// Convolution model: structured plus unstructured spatial effects.
    Bym,
    /// Convolution model with a linear temporal trend.
    SpatioTemporal,
}

impl ModelTier {
    /// Parses the configuration spelling of a tier.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glm" => Ok(ModelTier::Glm),
            "bym" => Ok(ModelTier::Bym),
            "spatiotemporal" | "spatio-temporal" => Ok(ModelTier::SpatioTemporal),
            other => Err(Error::Config(format!(
                "unknown tier '{other}' (expected glm, bym, or spatiotemporal)"
            ))),
        }
    }

    /// Whether the tier carries `phi`/`theta` random effects.
    pub fn is_spatial(self) -> bool {
        !matches!(self, ModelTier::Glm)
    }

    /// Whether the tier carries the temporal trend coefficient.
    pub fn is_temporal(self) -> bool {
        matches!(self, ModelTier::SpatioTemporal)
    }
}

impl std::fmt::Display for ModelTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelTier::Glm => "glm",
            ModelTier::Bym => "bym",
            ModelTier::SpatioTemporal => "spatiotemporal",
        };
        f.write_str(s)
    }
}

/// Shape/rate parameters of a gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams<F> {
    pub shape: F,
    pub rate: F,
}

impl<F: Scalar> GammaParams<F> {
    pub fn new(shape: F, rate: F) -> Self {
        GammaParams { shape, rate }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.shape.is_finite() && self.shape > F::zero()) {
            return Err(Error::Config(format!("{what} shape must be positive and finite")));
        }
        if !(self.rate.is_finite() && self.rate > F::zero()) {
            return Err(Error::Config(format!("{what} rate must be positive and finite")));
        }
        Ok(())
    }
}

/// Full model description: tier, covariate count, and priors.
///
/// `beta` collects every regression coefficient in a fixed order: the
/// intercept, one slope per covariate column, and (spatio-temporal tier
/// only) the temporal trend last. Prior means and precisions are stored
/// per coefficient in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<F> {
    pub tier: ModelTier,
    pub n_covariates: usize,
    /// Normal prior mean per regression coefficient.
    pub beta_prior_mean: Vec<F>,
    /// Normal prior precision per regression coefficient.
    pub beta_prior_precision: Vec<F>,
    /// Gamma prior on the structured-effect precision `tau_phi`.
    pub tau_phi_prior: GammaParams<F>,
    /// Gamma prior on the unstructured-effect precision `tau_theta`.
    pub tau_theta_prior: GammaParams<F>,
    /// Reserved overdispersion knob; recorded but unused by the Poisson
    /// samplers.
    pub dispersion: Option<F>,
}

impl<F: Scalar> ModelSpec<F> {
    /// Spec with weakly informative defaults: `N(0, 1e5)` coefficient
    /// priors and `Gamma(0.5, 0.0005)` precision priors.
    pub fn new(tier: ModelTier, n_covariates: usize) -> Self {
        let n_beta = 1 + n_covariates + usize::from(tier.is_temporal());
        ModelSpec {
            tier,
            n_covariates,
            beta_prior_mean: vec![F::zero(); n_beta],
            beta_prior_precision: vec![F::cast(1e-5); n_beta],
            tau_phi_prior: GammaParams::new(F::cast(0.5), F::cast(5e-4)),
            tau_theta_prior: GammaParams::new(F::cast(0.5), F::cast(5e-4)),
            dispersion: None,
        }
    }

    /// Number of regression coefficients, intercept and trend included.
    pub fn n_beta(&self) -> usize {
        1 + self.n_covariates + usize::from(self.tier.is_temporal())
    }

    /// Display label of coefficient `k`: intercept `alpha0`, covariate
    /// slopes `alpha1[1]..alpha1[p]`, temporal trend `alpha3`.
    pub fn beta_label(&self, k: usize) -> String {
        if k == 0 {
            "alpha0".to_string()
        } else if k <= self.n_covariates {
            format!("alpha1[{k}]")
        } else {
            "alpha3".to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_beta = self.n_beta();
        if self.beta_prior_mean.len() != n_beta {
            return Err(Error::Dimension(format!(
                "beta prior mean has {} entries, model needs {n_beta}",
                self.beta_prior_mean.len()
            )));
        }
        if self.beta_prior_precision.len() != n_beta {
            return Err(Error::Dimension(format!(
                "beta prior precision has {} entries, model needs {n_beta}",
                self.beta_prior_precision.len()
            )));
        }
        for (k, &p) in self.beta_prior_precision.iter().enumerate() {
            if !(p.is_finite() && p > F::zero()) {
                return Err(Error::Config(format!(
                    "prior precision for {} must be positive and finite",
                    self.beta_label(k)
                )));
            }
        }
        for &m in &self.beta_prior_mean {
            if !m.is_finite() {
                return Err(Error::Config("beta prior means must be finite".into()));
            }
        }
        self.tau_phi_prior.validate("tau_phi prior")?;
        self.tau_theta_prior.validate("tau_theta prior")?;
        if let Some(d) = self.dispersion {
            if !(d.is_finite() && d > F::zero()) {
                return Err(Error::Config("dispersion must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

/// One observation row before canonical ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsRow<F> {
    /// Region index into the dataset's region list.
    pub region: usize,
    /// Observation period; `None` for purely spatial data.
    pub period: Option<u32>,
    pub count: u64,
    pub expected: F,
    pub covariates: Vec<F>,
}

/// Validated observations in canonical order.
///
/// Observations are stored period-major: all regions for the first period,
/// then all regions for the next, each period block in region order. A
/// dataset without periods is a single block. Construction validates that
/// every region/period combination appears exactly once, that expected
/// counts are positive, and that covariate rows agree in length; derived
/// quantities used in likelihood evaluation are cached here.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    region_ids: Vec<String>,
    counts: Vec<u64>,
    counts_f: Vec<F>,
    expected: Vec<F>,
    covariates: Vec<F>,
    n_covariates: usize,
    period_of: Option<Vec<u32>>,
    periods: Vec<u32>,
    centered_period: Option<Vec<F>>,
    region_of: Vec<usize>,
    obs_by_region: Vec<Vec<usize>>,
    log_expected: Vec<F>,
    log_count_factorial: Vec<F>,
}

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset from unordered rows, sorting them into canonical
    /// period-major order.
    pub fn from_rows(region_ids: Vec<String>, rows: Vec<ObsRow<F>>) -> Result<Self> {
        let n = region_ids.len();
        if n == 0 {
            return Err(Error::Data("dataset has no regions".into()));
        }
        if rows.is_empty() {
            return Err(Error::Data("dataset has no observations".into()));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for id in &region_ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Data(format!("duplicate region id '{id}'")));
                }
            }
        }

        let has_period = rows[0].period.is_some();
        let n_covariates = rows[0].covariates.len();
        let mut periods: Vec<u32> = Vec::new();
        for row in &rows {
            if row.region >= n {
                return Err(Error::Data(format!(
                    "observation references region index {} out of {n}",
                    row.region
                )));
            }
            if row.period.is_some() != has_period {
                return Err(Error::Data(
                    "observations mix period-stamped and unstamped rows".into(),
                ));
            }
            if row.covariates.len() != n_covariates {
                return Err(Error::Data(format!(
                    "covariate row for region '{}' has {} values, expected {n_covariates}",
                    region_ids[row.region],
                    row.covariates.len()
                )));
            }
            if !(row.expected.is_finite() && row.expected > F::zero()) {
                return Err(Error::Data(format!(
                    "expected count for region '{}' must be positive and finite",
                    region_ids[row.region]
                )));
            }
            for &x in &row.covariates {
                if !x.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite covariate for region '{}'",
                        region_ids[row.region]
                    )));
                }
            }
            if let Some(t) = row.period {
                if !periods.contains(&t) {
                    periods.push(t);
                }
            }
        }
        periods.sort_unstable();

        // Place each row at its canonical slot and demand full coverage.
        let n_periods = periods.len().max(1);
        let n_obs = n * n_periods;
        if rows.len() != n_obs {
            return Err(Error::Data(format!(
                "expected {n_obs} observations ({n} regions x {n_periods} periods), found {}",
                rows.len()
            )));
        }
        let slot_of = |row: &ObsRow<F>| -> usize {
            let t = match row.period {
                Some(p) => periods.binary_search(&p).unwrap(),
                None => 0,
            };
            t * n + row.region
        };
        let mut slots: Vec<Option<ObsRow<F>>> = vec![None; n_obs];
        for row in rows {
            let k = slot_of(&row);
            if slots[k].is_some() {
                return Err(Error::Data(format!(
                    "duplicate observation for region '{}'{}",
                    region_ids[row.region],
                    row.period.map(|t| format!(" period {t}")).unwrap_or_default()
                )));
            }
            slots[k] = Some(row);
        }
        let ordered: Vec<ObsRow<F>> = slots
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                s.ok_or_else(|| {
                    let region = &region_ids[k % n];
                    let msg = if has_period {
                        format!("missing observation for region '{region}' period {}", periods[k / n])
                    } else {
                        format!("missing observation for region '{region}'")
                    };
                    Error::Data(msg)
                })
            })
            .collect::<Result<_>>()?;

        let counts: Vec<u64> = ordered.iter().map(|r| r.count).collect();
        let counts_f = counts.iter().map(|&y| F::cast(y as f64)).collect();
        let expected: Vec<F> = ordered.iter().map(|r| r.expected).collect();
        let mut covariates = Vec::with_capacity(n_obs * n_covariates);
        for row in &ordered {
            covariates.extend_from_slice(&row.covariates);
        }
        let region_of: Vec<usize> = ordered.iter().map(|r| r.region).collect();
        let period_of = has_period
            .then(|| ordered.iter().map(|r| r.period.unwrap()).collect::<Vec<u32>>());
        let centered_period = period_of.as_ref().map(|ts| {
            let mid = (periods[0] as f64 + periods[periods.len() - 1] as f64) / 2.0;
            ts.iter().map(|&t| F::cast(t as f64 - mid)).collect()
        });
        let mut obs_by_region = vec![Vec::new(); n];
        for (k, &r) in region_of.iter().enumerate() {
            obs_by_region[r].push(k);
        }
        let log_expected = expected.iter().map(|e| e.ln()).collect();
        let log_count_factorial = counts.iter().map(|&y| F::cast(ln_factorial(y))).collect();

        Ok(Dataset {
            region_ids,
            counts,
            counts_f,
            expected,
            covariates,
            n_covariates,
            period_of,
            periods,
            centered_period,
            region_of,
            obs_by_region,
            log_expected,
            log_count_factorial,
        })
    }

    /// Convenience constructor for single-period data given per-region
    /// vectors in region order.
    pub fn single_period(
        region_ids: Vec<String>,
        counts: Vec<u64>,
        expected: Vec<F>,
        covariates: Vec<Vec<F>>,
    ) -> Result<Self> {
        let n = region_ids.len();
        if counts.len() != n || expected.len() != n || covariates.len() != n {
            return Err(Error::Data(format!(
                "region vectors disagree in length: {} ids, {} counts, {} expected, {} covariate rows",
                n,
                counts.len(),
                expected.len(),
                covariates.len()
            )));
        }
        let rows = (0..n)
            .map(|i| ObsRow {
                region: i,
                period: None,
                count: counts[i],
                expected: expected[i],
                covariates: covariates[i].clone(),
            })
            .collect();
        Self::from_rows(region_ids, rows)
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_obs(&self) -> usize {
        self.counts.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn expected(&self) -> &[F] {
        &self.expected
    }

    /// Covariate row of observation `k`.
    pub fn covariates(&self, k: usize) -> &[F] {
        &self.covariates[k * self.n_covariates..(k + 1) * self.n_covariates]
    }

    /// Region index of observation `k`.
    pub fn region_of(&self, k: usize) -> usize {
        self.region_of[k]
    }

    /// Period of observation `k`, when the dataset is temporal.
    pub fn period_of(&self, k: usize) -> Option<u32> {
        self.period_of.as_ref().map(|p| p[k])
    }

    /// Distinct periods in ascending order; empty for single-period data.
    pub fn periods(&self) -> &[u32] {
        &self.periods
    }

    pub fn has_periods(&self) -> bool {
        self.period_of.is_some()
    }

    /// Period of observation `k` centered at the midpoint of the observed
    /// period range; zero when the dataset has no periods.
    pub fn centered_period(&self, k: usize) -> F {
        match &self.centered_period {
            Some(c) => c[k],
            None => F::zero(),
        }
    }

    /// Observation indices belonging to region `r`.
    pub fn obs_of_region(&self, r: usize) -> &[usize] {
        &self.obs_by_region[r]
    }

    pub fn log_expected(&self, k: usize) -> F {
        self.log_expected[k]
    }

    pub fn count_f(&self, k: usize) -> F {
        self.counts_f[k]
    }

    pub fn log_count_factorial(&self, k: usize) -> F {
        self.log_count_factorial[k]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_expected(&self) -> F {
        self.expected.iter().copied().sum()
    }
}

/// `ln(y!)` for a count, exact summation below 1024 terms and a Stirling
/// series with `1/y` corrections above.
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        return 0.0;
    }
    if y <= 1024 {
        return (2..=y).map(|k| (k as f64).ln()).sum();
    }
    let x = y as f64;
    let x2 = x * x;
    // Stirling with three correction terms; relative error < 1e-15 here.
    (x + 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x2 * x)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

/// Sampler state: regression coefficients, spatial effects, precisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<F> {
    /// Regression coefficients in spec order (intercept first).
    pub beta: Vec<F>,
    /// Structured spatial effects, one per region; empty for the GLM tier.
    pub phi: Vec<F>,
    /// Unstructured effects, one per region; empty for the GLM tier.
    pub theta: Vec<F>,
    /// Precision of the structured effect.
    pub tau_phi: F,
    /// Precision of the unstructured effect.
    pub tau_theta: F,
}

impl<F: Scalar> Params<F> {
    /// Deterministic starting state: zero coefficients and effects except
    /// the intercept, set to `ln(total count / total expected)`, and unit
    /// precisions.
    pub fn initial(spec: &ModelSpec<F>, data: &Dataset<F>) -> Self {
        let mut beta = vec![F::zero(); spec.n_beta()];
        beta[0] = (F::cast(data.total_count() as f64) / data.total_expected()).ln();
        let n_spatial = if spec.tier.is_spatial() { data.n_regions() } else { 0 };
        Params {
            beta,
            phi: vec![F::zero(); n_spatial],
            theta: vec![F::zero(); n_spatial],
            tau_phi: F::one(),
            tau_theta: F::one(),
        }
    }

    /// Checks dimensions against a spec and dataset.
    pub fn validate_for(&self, spec: &ModelSpec<F>, data: &Dataset<F>) -> Result<()> {
        if self.beta.len() != spec.n_beta() {
            return Err(Error::Dimension(format!(
                "params have {} coefficients, model needs {}",
                self.beta.len(),
                spec.n_beta()
            )));
        }
        let n_spatial = if spec.tier.is_spatial() { data.n_regions() } else { 0 };
        if self.phi.len() != n_spatial {
            return Err(Error::Dimension(format!(
                "params have {} structured effects, model needs {n_spatial}",
                self.phi.len()
            )));
        }
        if self.theta.len() != n_spatial {
            return Err(Error::Dimension(format!(
                "params have {} unstructured effects, model needs {n_spatial}",
                self.theta.len()
            )));
        }
        Ok(())
    }
}

/// Linear predictor for every observation.
///
/// pre: `params` dimensions match `spec`/`data` (checked).
pub fn linear_predictor<F: Scalar>(
    spec: &ModelSpec<F>,
    params: &Params<F>,
    data: &Dataset<F>,
) -> Result<Vec<F>> {
    params.validate_for(spec, data)?;
    if spec.tier.is_temporal() && !data.has_periods() {
        return Err(Error::Data(
            "spatio-temporal tier requires a dataset with periods".into(),
        ));
    }
    let p = spec.n_covariates;
    if data.n_covariates() != p {
        return Err(Error::Dimension(format!(
            "dataset has {} covariates, model needs {p}",
            data.n_covariates()
        )));
    }
    let mut eta = Vec::with_capacity(data.n_obs());
    for k in 0..data.n_obs() {
        let mut e = params.beta[0];
        let x = data.covariates(k);
        for j in 0..p {
            e += params.beta[1 + j] * x[j];
        }
        if spec.tier.is_spatial() {
            let r = data.region_of(k);
            e += params.phi[r] + params.theta[r];
        }
        if spec.tier.is_temporal() {
            e += params.beta[p + 1] * data.centered_period(k);
        }
        eta.push(e);
    }
    Ok(eta)
}

/// Log-likelihood contribution of observation `k` at linear predictor
/// `eta_k`, including the `ln(y!)` constant. Returns negative infinity when
/// the mean overflows, so rejection-based samplers can treat the proposal
/// as impossible.
pub fn poisson_log_term<F: Scalar>(data: &Dataset<F>, k: usize, eta_k: F) -> F {
    let mu = eta_k.exp();
    if !mu.is_finite() {
        return F::neg_infinity();
    }
    let t = -data.expected()[k] * mu + data.count_f(k) * (data.log_expected(k) + eta_k)
        - data.log_count_factorial(k);
    if t.is_nan() {
        F::neg_infinity()
    } else {
        t
    }
}

/// Poisson log-likelihood of the whole dataset at the given linear
/// predictor, constants included.
///
/// pre: `eta.len() == data.n_obs()`.
pub fn poisson_log_likelihood<F: Scalar>(data: &Dataset<F>, eta: &[F]) -> F {
    assert_eq!(eta.len(), data.n_obs(), "linear predictor length");
    let mut total = F::zero();
    for k in 0..data.n_obs() {
        let t = poisson_log_term(data, k, eta[k]);
        if t == F::neg_infinity() {
            return F::neg_infinity();
        }
        total += t;
    }
    total
}

/// Model deviance, `-2 log L`.
pub fn deviance<F: Scalar>(data: &Dataset<F>, eta: &[F]) -> F {
    -F::cast(2.0) * poisson_log_likelihood(data, eta)
}

/// Degrees of freedom of the intrinsic CAR prior: region count minus the
/// number of connected components (isolated regions each count as one
/// component).
pub fn icar_effective_dim<F: Scalar>(graph: &AdjacencyGraph<F>) -> usize {
    graph.n_regions() - graph.n_components()
}

/// Unnormalized intrinsic CAR log-density in pairwise-difference form:
/// `(n_eff / 2) ln(tau) - (tau / 2) sum_{i<j} w_ij (phi_i - phi_j)^2`
/// over graph edges. Constant in `phi` shifts within each component.
pub fn icar_log_pairwise<F: Scalar>(graph: &AdjacencyGraph<F>, phi: &[F], tau: F) -> F {
    assert_eq!(phi.len(), graph.n_regions(), "phi length");
    let half = F::cast(0.5);
    let n_eff = F::cast(icar_effective_dim(graph) as f64);
    n_eff * half * tau.ln() - tau * half * icar_pairwise_sum(graph, phi)
}

/// `sum_{i<j} w_ij (phi_i - phi_j)^2` over graph edges.
pub fn icar_pairwise_sum<F: Scalar>(graph: &AdjacencyGraph<F>, phi: &[F]) -> F {
    let mut sum = F::zero();
    for i in 0..graph.n_regions() {
        let ws = graph.weights(i);
        for (k, &j) in graph.neighbors(i).iter().enumerate() {
            if i < j {
                let d = phi[i] - phi[j];
                sum += ws[k] * d * d;
            }
        }
    }
    sum
}

/// Full conditional of `phi_i` under the intrinsic CAR prior: normal with
/// the weighted neighbour average as mean and variance
/// `1 / (tau * sum_j w_ij)`.
///
/// Errors for isolated regions, whose conditional is improper; samplers pin
/// their `phi` at zero instead.
pub fn icar_full_conditional<F: Scalar>(
    graph: &AdjacencyGraph<F>,
    phi: &[F],
    i: usize,
    tau: F,
) -> Result<(F, F)> {
    assert_eq!(phi.len(), graph.n_regions(), "phi length");
    let w_sum = graph.weight_sum(i);
    if graph.degree(i) == 0 {
        return Err(Error::Graph(format!(
            "region {i} ('{}') has no neighbours; its conditional prior is undefined",
            graph.region(i).id
        )));
    }
    let mut m = F::zero();
    for (k, &j) in graph.neighbors(i).iter().enumerate() {
        m += graph.weights(i)[k] * phi[j];
    }
    Ok((m / w_sum, (tau * w_sum).recip()))
}

/// Observed-over-expected ratio per observation.
pub fn compute_sir<F: Scalar>(data: &Dataset<F>) -> Vec<F> {
    (0..data.n_obs()).map(|k| data.count_f(k) / data.expected()[k]).collect()
}

/// Observed-over-expected ratio aggregated per region across periods.
pub fn sir_by_region<F: Scalar>(data: &Dataset<F>) -> Vec<F> {
    (0..data.n_regions())
        .map(|r| {
            let obs = data.obs_of_region(r);
            let y: F = obs.iter().map(|&k| data.count_f(k)).sum();
            let e: F = obs.iter().map(|&k| data.expected()[k]).sum();
            y / e
        })
        .collect()
}
