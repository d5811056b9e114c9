//! Multi-chain Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: each regression coefficient (scalar
//! random-walk Metropolis), each structured effect `phi_i` (random walk
//! against its CAR full-conditional prior and the region's likelihood
//! factor), each unstructured effect `theta_i`, then the two precisions by
//! exact conjugate gamma draws, and finally a recentering step that keeps
//! `phi` identifiable against the intercept.
//!
//! Proposal scales adapt by Robbins-Monro toward the target acceptance
//! rate during `adapt_window` iterations (always inside burn-in) and stay
//! frozen afterwards, so kept draws come from a fixed kernel. Chains run
//! in parallel, each on its own counter-based RNG substream, making the
//! result reproducible regardless of thread scheduling: chain `c` uses
//! stream `c + 1` of the configured seed (stream 0 is left to data
//! simulation so a shared seed never replays sampler noise).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::model::{
    self, icar_effective_dim, icar_full_conditional, icar_pairwise_sum, linear_predictor,
    Dataset, ModelSpec, Params,
};
use crate::scalar::Scalar;

/// Initial random-walk proposal standard deviation for every block.
pub const INITIAL_PROPOSAL_SD: f64 = 0.1;

/// Robbins-Monro decay exponent for scale adaptation.
const ADAPT_DECAY: f64 = 0.6;

/// Bounds on the log proposal scale during adaptation.
const LOG_SCALE_BOUND: f64 = 10.0;

/// Sampler run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig<F> {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Post-burn-in iterations per chain; `n_iterations / thin` draws are
    /// kept.
    pub n_iterations: usize,
    /// Discarded leading iterations per chain.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    /// Base seed; chains derive independent substreams from it.
    pub seed: u64,
    /// Leading iterations during which proposal scales adapt; must not
    /// exceed `burn_in`.
    pub adapt_window: usize,
    /// Robbins-Monro target acceptance rate, in (0, 1).
    pub target_accept: F,
    /// Test hook: drop every likelihood term so the sampler explores the
    /// prior alone. Kept deviance draws still report the real likelihood.
    pub prior_only: bool,
}

impl<F: Scalar> Default for McmcConfig<F> {
    fn default() -> Self {
        McmcConfig {
            n_chains: 2,
            n_iterations: 20_000,
            burn_in: 4_000,
            thin: 1,
            seed: 1,
            adapt_window: 2_000,
            target_accept: F::cast(0.44),
            prior_only: false,
        }
    }
}

impl<F: Scalar> McmcConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_iterations % self.thin != 0 {
            return Err(Error::Config(format!(
                "thin ({}) must divide n_iterations ({})",
                self.thin, self.n_iterations
            )));
        }
        if self.adapt_window > self.burn_in {
            return Err(Error::Config(format!(
                "adapt_window ({}) must not exceed burn_in ({})",
                self.adapt_window, self.burn_in
            )));
        }
        if !(self.target_accept > F::zero() && self.target_accept < F::one()) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Kept draws per chain.
    pub fn kept_per_chain(&self) -> usize {
        self.n_iterations / self.thin
    }
}

/// Whether global iteration `t` (1-based) is stored.
fn keep(t: usize, burn_in: usize, thin: usize) -> bool {
    t > burn_in && (t - burn_in - 1) % thin == 0
}

/// One adaptive random-walk proposal block.
#[derive(Debug, Clone, PartialEq)]
struct RwBlock<F> {
    log_scale: F,
    adapt_steps: u64,
    accepted: u64,
    attempted: u64,
    frozen_log_scale: Option<F>,
}

impl<F: Scalar> RwBlock<F> {
    fn new() -> Self {
        RwBlock {
            log_scale: F::cast(INITIAL_PROPOSAL_SD.ln()),
            adapt_steps: 0,
            accepted: 0,
            attempted: 0,
            frozen_log_scale: None,
        }
    }

    fn scale(&self) -> F {
        self.log_scale.exp()
    }

    /// Registers one attempt; during adaptation, nudges the log scale by
    /// `gamma_t * (alpha - target)` with `gamma_t = (t + 1)^-0.6`.
    fn record(&mut self, accepted: bool, alpha: F, adapting: bool, target: F) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
        if adapting {
            self.adapt_steps += 1;
            let gamma = F::cast(((self.adapt_steps + 1) as f64).powf(-ADAPT_DECAY));
            self.log_scale += gamma * (alpha - target);
            let bound = F::cast(LOG_SCALE_BOUND);
            self.log_scale = self.log_scale.max(-bound).min(bound);
        }
    }

    fn freeze(&mut self) {
        self.frozen_log_scale = Some(self.log_scale);
    }
}

/// Acceptance bookkeeping for one proposal block over a whole chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats<F> {
    pub label: String,
    pub accepted: u64,
    pub attempted: u64,
    /// Proposal sd when adaptation ended; `None` if the window was empty.
    pub scale_at_freeze: Option<F>,
    /// Proposal sd at the end of the run.
    pub scale_final: F,
}

impl<F: Scalar> BlockStats<F> {
    /// Fraction of accepted proposals; `None` before any attempt.
    pub fn acceptance_rate(&self) -> Option<F> {
        (self.attempted > 0)
            .then(|| F::cast(self.accepted as f64) / F::cast(self.attempted as f64))
    }
}

/// Draws from a single chain, slot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws<F> {
    /// Base seed this chain derives from.
    pub seed: u64,
    /// RNG substream index.
    pub stream: u64,
    draws: Vec<Vec<F>>,
    deviance: Vec<F>,
    blocks: Vec<BlockStats<F>>,
}

impl<F: Scalar> ChainDraws<F> {
    pub fn deviance(&self) -> &[F] {
        &self.deviance
    }

    pub fn blocks(&self) -> &[BlockStats<F>] {
        &self.blocks
    }
}

/// Posterior draws from every chain plus the labeling needed to address
/// them by node name.
///
/// Raw slots are the sampled quantities (`alpha0`, `alpha1[k]`, `alpha3`,
/// `phi[i]`, `theta[i]`, `tau_phi`, `tau_theta`, indices 1-based). Derived
/// nodes are `sigma` (`1/sqrt(tau_theta)`), `tau` (alias for `tau_phi`),
/// and `deviance`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet<F> {
    spec: ModelSpec<F>,
    labels: Vec<String>,
    chains: Vec<ChainDraws<F>>,
    burn_in: usize,
    thin: usize,
    kept_per_chain: usize,
}

impl<F: Scalar> ChainSet<F> {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn kept_per_chain(&self) -> usize {
        self.kept_per_chain
    }

    /// 1-based iteration number of the first kept draw (the `Start`
    /// reporting column): `burn_in + 1`.
    pub fn first_kept_iteration(&self) -> usize {
        self.burn_in + 1
    }

    /// 1-based iteration number of kept draw `k` within its chain.
    pub fn iteration_of(&self, k: usize) -> usize {
        self.burn_in + 1 + k * self.thin
    }

    /// Total kept draws across chains (the `Sample` reporting column).
    pub fn total_kept(&self) -> usize {
        self.kept_per_chain * self.chains.len()
    }

    pub fn spec(&self) -> &ModelSpec<F> {
        &self.spec
    }

    pub fn chains(&self) -> &[ChainDraws<F>] {
        &self.chains
    }

    /// Raw slot labels in storage order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Default reporting set: regression coefficients, plus `sigma` and
    /// `tau` for spatial tiers.
    pub fn monitored_nodes(&self) -> Vec<String> {
        let mut nodes: Vec<String> =
            (0..self.spec.n_beta()).map(|k| self.spec.beta_label(k)).collect();
        if self.spec.tier.is_spatial() {
            nodes.push("sigma".into());
            nodes.push("tau".into());
        }
        nodes
    }

    /// Every addressable node: the monitored set, the per-region effects,
    /// and the deviance.
    pub fn all_nodes(&self) -> Vec<String> {
        let mut nodes = self.monitored_nodes();
        if self.spec.tier.is_spatial() {
            let n = (self.labels.len() - self.spec.n_beta() - 2) / 2;
            nodes.extend((1..=n).map(|i| format!("phi[{i}]")));
            nodes.extend((1..=n).map(|i| format!("theta[{i}]")));
        }
        nodes.push("deviance".into());
        nodes
    }

    /// Per-chain draws of a node, materialized in chain order.
    pub fn node_draws(&self, node: &str) -> Result<Vec<Vec<F>>> {
        if node == "deviance" {
            return Ok(self.chains.iter().map(|c| c.deviance.clone()).collect());
        }
        let mapped = match node {
            "tau" => "tau_phi",
            other => other,
        };
        if node == "sigma" {
            let slot = self.slot("tau_theta")?;
            return Ok(self
                .chains
                .iter()
                .map(|c| c.draws[slot].iter().map(|&t| t.sqrt().recip()).collect())
                .collect());
        }
        let slot = self.slot(mapped)?;
        Ok(self.chains.iter().map(|c| c.draws[slot].clone()).collect())
    }

    fn slot(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Diagnostics(format!("unknown node '{label}' for this model")))
    }

    /// Parameter state assembled from pooled posterior means of every
    /// sampled slot.
    pub fn posterior_mean_params(&self) -> Params<F> {
        let mean_of = |slot: usize| -> F {
            let mut sum = F::zero();
            let mut count = 0usize;
            for c in &self.chains {
                sum += c.draws[slot].iter().copied().sum();
                count += c.draws[slot].len();
            }
            sum / F::cast(count as f64)
        };
        let n_beta = self.spec.n_beta();
        let beta: Vec<F> = (0..n_beta).map(mean_of).collect();
        if !self.spec.tier.is_spatial() {
            return Params {
                beta,
                phi: Vec::new(),
                theta: Vec::new(),
                tau_phi: F::one(),
                tau_theta: F::one(),
            };
        }
        let n = (self.labels.len() - n_beta - 2) / 2;
        let phi: Vec<F> = (0..n).map(|i| mean_of(n_beta + i)).collect();
        let theta: Vec<F> = (0..n).map(|i| mean_of(n_beta + n + i)).collect();
        Params {
            beta,
            phi,
            theta,
            tau_phi: mean_of(n_beta + 2 * n),
            tau_theta: mean_of(n_beta + 2 * n + 1),
        }
    }
}

/// Subtracts the mean of `phi` within each graph component and adds the
/// compensating shift to the intercept.
///
/// The shift weights each component mean by its region share; datasets
/// cover every region the same number of times, so this equals observation
/// weighting. On a connected graph the shift is exactly the subtracted
/// mean and the linear predictor is unchanged.
pub fn recenter_spatial<F: Scalar>(params: &Params<F>, graph: &AdjacencyGraph<F>) -> Params<F> {
    let mut out = params.clone();
    recenter_in_place(&mut out, graph);
    out
}

/// In-place recentering; returns the per-region eta delta structure:
/// `shift - component_mean[component_of(region)]` per region, and the
/// intercept shift itself.
fn recenter_in_place<F: Scalar>(params: &mut Params<F>, graph: &AdjacencyGraph<F>) -> Vec<F> {
    let n = graph.n_regions();
    debug_assert_eq!(params.phi.len(), n, "phi length");
    let mut sums = vec![F::zero(); graph.n_components()];
    let mut counts = vec![0usize; graph.n_components()];
    for i in 0..n {
        sums[graph.component_id(i)] += params.phi[i];
        counts[graph.component_id(i)] += 1;
    }
    let means: Vec<F> =
        sums.iter().zip(&counts).map(|(&s, &c)| s / F::cast(c as f64)).collect();
    let mut shift = F::zero();
    for (c, &m) in means.iter().enumerate() {
        shift += F::cast(counts[c] as f64 / n as f64) * m;
    }
    for i in 0..n {
        params.phi[i] -= means[graph.component_id(i)];
    }
    params.beta[0] += shift;
    (0..n).map(|i| shift - means[graph.component_id(i)]).collect()
}

enum BlockKind {
    Beta(usize),
    Phi(usize),
    Theta(usize),
}

/// One chain's sampler state; exposes single sweeps so tests can audit the
/// scan while `run_chains` drives whole runs.
pub struct Sweeper<'a, F: Scalar> {
    spec: &'a ModelSpec<F>,
    data: &'a Dataset<F>,
    graph: Option<&'a AdjacencyGraph<F>>,
    cfg: &'a McmcConfig<F>,
    rng: ChaCha8Rng,
    stream: u64,
    params: Params<F>,
    eta: Vec<F>,
    terms: Vec<F>,
    scratch: Vec<F>,
    design: Vec<Vec<F>>,
    /// Per-coefficient region-level column value when the design column is
    /// constant within every region, None when it varies (no flat
    /// direction against `theta` to rebalance).
    region_cols: Vec<Option<Vec<F>>>,
    beta_blocks: Vec<RwBlock<F>>,
    phi_blocks: Vec<RwBlock<F>>,
    theta_blocks: Vec<RwBlock<F>>,
    /// Global iteration counter, 1-based after the first sweep.
    t: usize,
    /// Per-block visit counters for scan audits, labeled like the blocks.
    visits: Vec<u64>,
}

impl<'a, F: Scalar> Sweeper<'a, F> {
    /// Validates the model/data/graph combination and prepares the chain
    /// with `chain_index`'s RNG substream.
    pub fn new(
        spec: &'a ModelSpec<F>,
        data: &'a Dataset<F>,
        graph: Option<&'a AdjacencyGraph<F>>,
        cfg: &'a McmcConfig<F>,
        chain_index: usize,
    ) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        if data.n_covariates() != spec.n_covariates {
            return Err(Error::Dimension(format!(
                "dataset has {} covariates, model needs {}",
                data.n_covariates(),
                spec.n_covariates
            )));
        }
        // The GLM tier ignores spatial structure entirely.
        let graph = if spec.tier.is_spatial() { graph } else { None };
        if spec.tier.is_spatial() {
            let g = graph.ok_or_else(|| {
                Error::Config(format!("tier '{}' requires an adjacency graph", spec.tier))
            })?;
            if g.n_regions() != data.n_regions() {
                return Err(Error::Dimension(format!(
                    "graph has {} regions, dataset has {}",
                    g.n_regions(),
                    data.n_regions()
                )));
            }
            for (i, region) in g.regions().iter().enumerate() {
                if region.id != data.region_ids()[i] {
                    return Err(Error::Data(format!(
                        "region {i} is '{}' in the graph but '{}' in the dataset",
                        region.id,
                        data.region_ids()[i]
                    )));
                }
            }
        }
        if spec.tier.is_temporal() && !data.has_periods() {
            return Err(Error::Data(
                "spatio-temporal tier requires a dataset with periods".into(),
            ));
        }

        let params = Params::initial(spec, data);
        if !params.beta[0].is_finite() {
            return Err(Error::Mcmc(format!(
                "posterior is not finite at initialization: intercept alpha0 = {} \
                 (total count {}, total expected {})",
                params.beta[0],
                data.total_count(),
                data.total_expected()
            )));
        }
        let eta = linear_predictor(spec, &params, data)?;
        let loglik = model::poisson_log_likelihood(data, &eta);
        if !loglik.is_finite() {
            return Err(Error::Mcmc(format!(
                "posterior is not finite at initialization: log-likelihood = {loglik}"
            )));
        }

        let n_obs = data.n_obs();
        let terms: Vec<F> = (0..n_obs).map(|k| model::poisson_log_term(data, k, eta[k])).collect();

        // Design columns per coefficient: intercept, covariates, trend.
        let mut design = Vec::with_capacity(spec.n_beta());
        design.push(vec![F::one(); n_obs]);
        for j in 0..spec.n_covariates {
            design.push((0..n_obs).map(|k| data.covariates(k)[j]).collect());
        }
        if spec.tier.is_temporal() {
            design.push((0..n_obs).map(|k| data.centered_period(k)).collect());
        }

        let n_spatial = params.phi.len();
        let region_cols = if spec.tier.is_spatial() {
            region_constant_columns(&design, data)
        } else {
            vec![None; spec.n_beta()]
        };
        let stream = chain_index as u64 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);

        let n_blocks = spec.n_beta() + 2 * n_spatial;
        Ok(Sweeper {
            spec,
            data,
            graph,
            cfg,
            rng,
            stream,
            params,
            eta,
            terms,
            scratch: vec![F::zero(); n_obs],
            design,
            region_cols,
            beta_blocks: (0..spec.n_beta()).map(|_| RwBlock::new()).collect(),
            phi_blocks: (0..n_spatial).map(|_| RwBlock::new()).collect(),
            theta_blocks: (0..n_spatial).map(|_| RwBlock::new()).collect(),
            t: 0,
            visits: vec![0; n_blocks],
        })
    }

    pub fn params(&self) -> &Params<F> {
        &self.params
    }

    /// Current deviance, recomputed from the maintained linear predictor.
    pub fn deviance(&self) -> F {
        model::deviance(self.data, &self.eta)
    }

    /// Block labels matching `visit_counts` order: coefficients, then
    /// `phi[i]`, then `theta[i]`.
    pub fn block_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> =
            (0..self.spec.n_beta()).map(|k| self.spec.beta_label(k)).collect();
        let n = self.phi_blocks.len();
        labels.extend((1..=n).map(|i| format!("phi[{i}]")));
        labels.extend((1..=n).map(|i| format!("theta[{i}]")));
        labels
    }

    /// How many times each block has been visited, in `block_labels` order.
    /// Isolated regions keep a zero count for `phi`: their structured
    /// effect is pinned at zero rather than sampled.
    pub fn visit_counts(&self) -> &[u64] {
        &self.visits
    }

    fn block_stats(&self) -> Vec<BlockStats<F>> {
        let labels = self.block_labels();
        let blocks = self
            .beta_blocks
            .iter()
            .chain(self.phi_blocks.iter())
            .chain(self.theta_blocks.iter());
        labels
            .into_iter()
            .zip(blocks)
            .map(|(label, b)| BlockStats {
                label,
                accepted: b.accepted,
                attempted: b.attempted,
                scale_at_freeze: b.frozen_log_scale.map(|ls| ls.exp()),
                scale_final: b.scale().clone(),
            })
            .collect()
    }

    /// Runs one full scan. Returns the updated state.
    pub fn gibbs_sweep(&mut self) -> &Params<F> {
        self.t += 1;
        let adapting = self.t <= self.cfg.adapt_window;
        for j in 0..self.spec.n_beta() {
            self.update_block(BlockKind::Beta(j), adapting);
        }
        if self.spec.tier.is_spatial() {
            let n = self.params.phi.len();
            let graph = self.graph.expect("spatial tier has a graph");
            for i in 0..n {
                if graph.degree(i) > 0 {
                    self.update_block(BlockKind::Phi(i), adapting);
                }
            }
            for i in 0..n {
                self.update_block(BlockKind::Theta(i), adapting);
            }
            self.rebalance_fields();
            self.rebalance_design();
            self.update_precisions();
            self.recenter();
        }
        if self.t == self.cfg.adapt_window {
            self.freeze_scales();
        }
        &self.params
    }

    fn freeze_scales(&mut self) {
        for b in self
            .beta_blocks
            .iter_mut()
            .chain(self.phi_blocks.iter_mut())
            .chain(self.theta_blocks.iter_mut())
        {
            b.freeze();
        }
    }

    fn update_block(&mut self, kind: BlockKind, adapting: bool) {
        let (block_index, visit_index) = match kind {
            BlockKind::Beta(j) => (j, j),
            BlockKind::Phi(i) => (i, self.spec.n_beta() + i),
            BlockKind::Theta(i) => (i, self.spec.n_beta() + self.phi_blocks.len() + i),
        };
        self.visits[visit_index] += 1;

        let scale = match kind {
            BlockKind::Beta(_) => self.beta_blocks[block_index].scale(),
            BlockKind::Phi(_) => self.phi_blocks[block_index].scale(),
            BlockKind::Theta(_) => self.theta_blocks[block_index].scale(),
        };
        let cur = match kind {
            BlockKind::Beta(j) => self.params.beta[j],
            BlockKind::Phi(i) => self.params.phi[i],
            BlockKind::Theta(i) => self.params.theta[i],
        };
        let prop = cur + scale * F::std_normal(&mut self.rng);
        let delta = prop - cur;

        let log_prior_ratio = match kind {
            BlockKind::Beta(j) => {
                let m = self.spec.beta_prior_mean[j];
                let p = self.spec.beta_prior_precision[j];
                let half = F::cast(0.5);
                -p * half * ((prop - m) * (prop - m) - (cur - m) * (cur - m))
            }
            BlockKind::Phi(i) => {
                let graph = self.graph.expect("spatial tier has a graph");
                let (m, v) = icar_full_conditional(graph, &self.params.phi, i, self.params.tau_phi)
                    .expect("non-isolated region");
                let half = F::cast(0.5);
                -(half / v) * ((prop - m) * (prop - m) - (cur - m) * (cur - m))
            }
            BlockKind::Theta(_) => {
                let half = F::cast(0.5);
                -self.params.tau_theta * half * (prop * prop - cur * cur)
            }
        };

        // Likelihood ratio over the affected observations; new per-obs
        // terms land in scratch so an acceptance can reuse them.
        let mut log_lik_ratio = F::zero();
        if !self.cfg.prior_only {
            match kind {
                BlockKind::Beta(j) => {
                    for k in 0..self.data.n_obs() {
                        let eta_new = self.eta[k] + delta * self.design[j][k];
                        let t_new = model::poisson_log_term(self.data, k, eta_new);
                        self.scratch[k] = t_new;
                        log_lik_ratio += t_new - self.terms[k];
                    }
                }
                BlockKind::Phi(i) | BlockKind::Theta(i) => {
                    for (slot, &k) in self.data.obs_of_region(i).iter().enumerate() {
                        let eta_new = self.eta[k] + delta;
                        let t_new = model::poisson_log_term(self.data, k, eta_new);
                        self.scratch[slot] = t_new;
                        log_lik_ratio += t_new - self.terms[k];
                    }
                }
            }
        }

        let log_ratio = log_prior_ratio + log_lik_ratio;
        let alpha = if log_ratio.is_nan() {
            F::zero()
        } else if log_ratio >= F::zero() {
            F::one()
        } else {
            log_ratio.exp()
        };
        let u = F::unit_uniform(&mut self.rng);
        let accepted = u < alpha;

        if accepted {
            match kind {
                BlockKind::Beta(j) => {
                    self.params.beta[j] = prop;
                    for k in 0..self.data.n_obs() {
                        self.eta[k] += delta * self.design[j][k];
                        if !self.cfg.prior_only {
                            self.terms[k] = self.scratch[k];
                        }
                    }
                }
                BlockKind::Phi(i) | BlockKind::Theta(i) => {
                    match kind {
                        BlockKind::Phi(_) => self.params.phi[i] = prop,
                        _ => self.params.theta[i] = prop,
                    }
                    for (slot, &k) in self.data.obs_of_region(i).iter().enumerate() {
                        self.eta[k] += delta;
                        if !self.cfg.prior_only {
                            self.terms[k] = self.scratch[slot];
                        }
                    }
                }
            }
        }

        let target = self.cfg.target_accept;
        match kind {
            BlockKind::Beta(_) => {
                self.beta_blocks[block_index].record(accepted, alpha, adapting, target)
            }
            BlockKind::Phi(_) => {
                self.phi_blocks[block_index].record(accepted, alpha, adapting, target)
            }
            BlockKind::Theta(_) => {
                self.theta_blocks[block_index].record(accepted, alpha, adapting, target)
            }
        }
    }

    /// Exact Gibbs redraw of each region's structured/unstructured split,
    /// holding the sum `phi_i + theta_i` (and so the linear predictor and
    /// every likelihood term) fixed. The likelihood only identifies the
    /// sum; single-site walks cross the leftover flat direction slowly,
    /// which starves the precision updates. Drawing the split from its
    /// Gaussian conditional lets `tau_phi`/`tau_theta` mix.
    fn rebalance_fields(&mut self) {
        let graph = self.graph.expect("spatial tier has a graph");
        let tau_phi = self.params.tau_phi;
        let tau_theta = self.params.tau_theta;
        for i in 0..self.params.phi.len() {
            // Isolated regions keep phi pinned at zero.
            if graph.degree(i) == 0 {
                continue;
            }
            let (m, v) = icar_full_conditional(graph, &self.params.phi, i, tau_phi)
                .expect("non-isolated region");
            let u = self.params.phi[i] + self.params.theta[i];
            let prior_prec = v.recip();
            let prec = prior_prec + tau_theta;
            let mean = (m * prior_prec + u * tau_theta) / prec;
            let phi_new = mean + F::std_normal(&mut self.rng) / prec.sqrt();
            self.params.phi[i] = phi_new;
            self.params.theta[i] = u - phi_new;
        }
    }

    /// Exact Gibbs redraw of the split between each coefficient and the
    /// unstructured field. For a design column that is constant within
    /// every region (value `c_i`), the linear predictor is invariant under
    /// `(beta_j, theta_i) -> (beta_j + d, theta_i - d * c_i)`, so `d` only
    /// sees the priors and its conditional is Gaussian. Columns that vary
    /// inside a region (the temporal trend, observation-level covariates)
    /// have no such flat direction and are skipped at construction.
    fn rebalance_design(&mut self) {
        let tau_theta = self.params.tau_theta;
        for j in 0..self.spec.n_beta() {
            let Some(c) = &self.region_cols[j] else { continue };
            let m_j = self.spec.beta_prior_mean[j];
            let p_j = self.spec.beta_prior_precision[j];
            let mut ss = F::zero();
            let mut cross = F::zero();
            for (i, &ci) in c.iter().enumerate() {
                ss += ci * ci;
                cross += ci * self.params.theta[i];
            }
            let prec = tau_theta * ss + p_j;
            let mean = (tau_theta * cross + p_j * (m_j - self.params.beta[j])) / prec;
            let d = mean + F::std_normal(&mut self.rng) / prec.sqrt();
            self.params.beta[j] += d;
            for (i, &ci) in c.iter().enumerate() {
                self.params.theta[i] -= d * ci;
            }
        }
    }

    /// Conjugate gamma draws for both precisions.
    fn update_precisions(&mut self) {
        let graph = self.graph.expect("spatial tier has a graph");
        let half = F::cast(0.5);
        let n_eff = F::cast(icar_effective_dim(graph) as f64);
        let shape_phi = self.spec.tau_phi_prior.shape + half * n_eff;
        let rate_phi =
            self.spec.tau_phi_prior.rate + half * icar_pairwise_sum(graph, &self.params.phi);
        self.params.tau_phi = F::sample_gamma(&mut self.rng, shape_phi, rate_phi);

        let n = F::cast(self.params.theta.len() as f64);
        let ss: F = self.params.theta.iter().map(|&t| t * t).sum();
        let shape_theta = self.spec.tau_theta_prior.shape + half * n;
        let rate_theta = self.spec.tau_theta_prior.rate + half * ss;
        self.params.tau_theta = F::sample_gamma(&mut self.rng, shape_theta, rate_theta);
    }

    fn recenter(&mut self) {
        let graph = self.graph.expect("spatial tier has a graph");
        let deltas = recenter_in_place(&mut self.params, graph);
        if deltas.iter().all(|&d| d == F::zero()) {
            return;
        }
        // Multi-component graphs disturb eta by the difference between the
        // pooled shift and each component's own mean; refresh the caches.
        for k in 0..self.data.n_obs() {
            self.eta[k] += deltas[self.data.region_of(k)];
        }
        if !self.cfg.prior_only {
            for k in 0..self.data.n_obs() {
                self.terms[k] = model::poisson_log_term(self.data, k, self.eta[k]);
            }
        }
    }

    /// Runs the configured burn-in plus sampling schedule, returning the
    /// kept draws.
    fn run(mut self) -> ChainDraws<F> {
        let n_slots = self.slot_count();
        let kept = self.cfg.kept_per_chain();
        let mut draws: Vec<Vec<F>> = (0..n_slots).map(|_| Vec::with_capacity(kept)).collect();
        let mut deviance = Vec::with_capacity(kept);
        let total = self.cfg.burn_in + self.cfg.n_iterations;
        for t in 1..=total {
            self.gibbs_sweep();
            if keep(t, self.cfg.burn_in, self.cfg.thin) {
                self.record(&mut draws);
                deviance.push(self.deviance());
            }
        }
        ChainDraws {
            seed: self.cfg.seed,
            stream: self.stream,
            draws,
            deviance,
            blocks: self.block_stats(),
        }
    }

    fn slot_count(&self) -> usize {
        if self.spec.tier.is_spatial() {
            self.spec.n_beta() + 2 * self.params.phi.len() + 2
        } else {
            self.spec.n_beta()
        }
    }

    fn record(&self, draws: &mut [Vec<F>]) {
        let mut s = 0;
        for &b in &self.params.beta {
            draws[s].push(b);
            s += 1;
        }
        if self.spec.tier.is_spatial() {
            for &p in &self.params.phi {
                draws[s].push(p);
                s += 1;
            }
            for &t in &self.params.theta {
                draws[s].push(t);
                s += 1;
            }
            draws[s].push(self.params.tau_phi);
            draws[s + 1].push(self.params.tau_theta);
        }
    }
}

/// For each design column, its per-region value when the column is
/// constant across every observation of each region.
fn region_constant_columns<F: Scalar>(
    design: &[Vec<F>],
    data: &Dataset<F>,
) -> Vec<Option<Vec<F>>> {
    design
        .iter()
        .map(|col| {
            let mut c: Vec<Option<F>> = vec![None; data.n_regions()];
            for (k, &x) in col.iter().enumerate() {
                let r = data.region_of(k);
                match c[r] {
                    None => c[r] = Some(x),
                    Some(v) if v == x => {}
                    Some(_) => return None,
                }
            }
            c.into_iter().collect()
        })
        .collect()
}

/// Slot labels for a model over `n_regions` regions.
fn slot_labels<F: Scalar>(spec: &ModelSpec<F>, n_regions: usize) -> Vec<String> {
    let mut labels: Vec<String> = (0..spec.n_beta()).map(|k| spec.beta_label(k)).collect();
    if spec.tier.is_spatial() {
        labels.extend((1..=n_regions).map(|i| format!("phi[{i}]")));
        labels.extend((1..=n_regions).map(|i| format!("theta[{i}]")));
        labels.push("tau_phi".into());
        labels.push("tau_theta".into());
    }
    labels
}

/// Fits the model, running `config.n_chains` chains in parallel.
///
/// Deterministic in the configuration seed: chain `c` draws from RNG
/// substream `c + 1`, so results do not depend on thread scheduling.
pub fn run_chains<F: Scalar>(
    spec: &ModelSpec<F>,
    data: &Dataset<F>,
    graph: Option<&AdjacencyGraph<F>>,
    config: &McmcConfig<F>,
) -> Result<ChainSet<F>> {
    // Validate once up front so per-chain errors can't differ.
    Sweeper::new(spec, data, graph, config, 0)?;
    let chains: Vec<ChainDraws<F>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| Sweeper::new(spec, data, graph, config, c).map(Sweeper::run))
        .collect::<Result<_>>()?;
    Ok(ChainSet {
        spec: spec.clone(),
        labels: slot_labels(spec, data.n_regions()),
        chains,
        burn_in: config.burn_in,
        thin: config.thin,
        kept_per_chain: config.kept_per_chain(),
    })
}

/// Single-parameter Metropolis harness sharing the sampler's proposal,
/// adaptation, and keep logic, for closed-form kernel checks.
pub mod harness {
    use super::*;

    /// Runs one adaptive random-walk chain against an arbitrary
    /// log-density and returns the kept draws. Uses `cfg`'s schedule and
    /// seed (stream 1); `n_chains` is ignored.
    pub fn run_scalar_chain<F: Scalar>(
        log_target: impl Fn(F) -> F,
        init: F,
        cfg: &McmcConfig<F>,
    ) -> Result<Vec<F>> {
        cfg.validate()?;
        let mut cur = init;
        let mut cur_lp = log_target(cur);
        if !cur_lp.is_finite() {
            return Err(Error::Mcmc(format!(
                "log target is not finite at the initial value {init}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut block = RwBlock::new();
        let mut kept = Vec::with_capacity(cfg.kept_per_chain());
        let total = cfg.burn_in + cfg.n_iterations;
        for t in 1..=total {
            let adapting = t <= cfg.adapt_window;
            let prop = cur + block.scale() * F::std_normal(&mut rng);
            let prop_lp = log_target(prop);
            let log_ratio = prop_lp - cur_lp;
            let alpha = if log_ratio.is_nan() {
                F::zero()
            } else if log_ratio >= F::zero() {
                F::one()
            } else {
                log_ratio.exp()
            };
            let u = F::unit_uniform(&mut rng);
            if u < alpha {
                cur = prop;
                cur_lp = prop_lp;
            }
            block.record(u < alpha, alpha, adapting, cfg.target_accept);
            if keep(t, cfg.burn_in, cfg.thin) {
                kept.push(cur);
            }
        }
        Ok(kept)
    }
}
