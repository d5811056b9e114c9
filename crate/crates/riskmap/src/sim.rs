//! Synthetic dataset generation with known ground truth.
//!
//! Structured effects are drawn exactly from the intrinsic CAR prior by
//! expanding white noise in the eigenbasis of the graph Laplacian: modes
//! with positive eigenvalue get variance `1 / (tau * lambda)`, null modes
//! (one per connected component) are dropped. The draws therefore sum to
//! zero within every component and isolated regions get a zero effect,
//! matching the constraint the samplers impose.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::model::{linear_predictor, Dataset, ModelSpec, ObsRow, Params};
use crate::scalar::Scalar;

/// Draws one structured-effect vector from the intrinsic CAR prior with
/// precision `tau`. An infinite `tau` is the degenerate limit: all zeros.
///
/// pre: `tau > 0` (or `+inf`).
pub fn icar_sample<F: Scalar, R: Rng + ?Sized>(
    graph: &AdjacencyGraph<F>,
    tau: F,
    rng: &mut R,
) -> Result<Vec<F>> {
    let n = graph.n_regions();
    if !(tau > F::zero()) || tau.is_nan() {
        return Err(Error::Config(format!("structured precision must be positive, got {tau}")));
    }
    if tau.is_infinite() {
        return Ok(vec![F::zero(); n]);
    }
    let tau64 = tau.as_f64();

    // Graph Laplacian D - W in f64 regardless of F.
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        lap[(i, i)] = graph.weight_sum(i).as_f64();
        for (k, &j) in graph.neighbors(i).iter().enumerate() {
            lap[(i, j)] = -graph.weights(i)[k].as_f64();
        }
    }
    let eigen = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let lambda_max = order.last().map(|&k| eigen.eigenvalues[k]).unwrap_or(0.0);
    let tol = 1e-9 * lambda_max.max(1.0);

    let mut phi = vec![0.0f64; n];
    for &k in &order {
        let lambda = eigen.eigenvalues[k];
        if lambda <= tol {
            continue;
        }
        let z: f64 = f64::std_normal(rng);
        let scale = 1.0 / (tau64 * lambda).sqrt();
        let col = eigen.eigenvectors.column(k);
        for i in 0..n {
            phi[i] += col[i] * z * scale;
        }
    }
    Ok(phi.into_iter().map(F::cast).collect())
}

/// Simulates a dataset from the model, returning it together with the
/// realized parameters.
///
/// `truth` supplies the regression coefficients and precisions; its effect
/// vectors are ignored, since `phi` and `theta` are drawn here (an infinite
/// precision suppresses the corresponding effect to zero). `expected` and
/// `covariates` are given per observation in canonical period-major order;
/// `periods` lists the distinct periods for the temporal tier.
pub fn simulate_dataset<F: Scalar>(
    spec: &ModelSpec<F>,
    truth: &Params<F>,
    graph: Option<&AdjacencyGraph<F>>,
    expected: &[F],
    covariates: &[Vec<F>],
    periods: Option<&[u32]>,
    seed: u64,
) -> Result<(Dataset<F>, Params<F>)> {
    spec.validate()?;
    if truth.beta.len() != spec.n_beta() {
        return Err(Error::Dimension(format!(
            "truth has {} coefficients, model needs {}",
            truth.beta.len(),
            spec.n_beta()
        )));
    }
    let graph = match (spec.tier.is_spatial(), graph) {
        (true, Some(g)) => Some(g),
        (true, None) => {
            return Err(Error::Config(format!(
                "tier '{}' requires an adjacency graph",
                spec.tier
            )))
        }
        (false, _) => None,
    };
    let n = match graph {
        Some(g) => g.n_regions(),
        // Without a graph the region count comes from the data layout.
        None => match periods {
            Some(ts) if !ts.is_empty() => expected.len() / ts.len(),
            _ => expected.len(),
        },
    };
    if n == 0 {
        return Err(Error::Data("simulation needs at least one region".into()));
    }
    let periods: Option<Vec<u32>> = match (spec.tier.is_temporal(), periods) {
        (true, Some(ts)) if !ts.is_empty() => {
            let mut sorted = ts.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ts.len() {
                return Err(Error::Config("simulation periods must be distinct".into()));
            }
            Some(sorted)
        }
        (true, _) => {
            return Err(Error::Config(
                "spatio-temporal simulation requires a non-empty period list".into(),
            ))
        }
        (false, Some(ts)) if !ts.is_empty() => {
            return Err(Error::Config(format!(
                "tier '{}' does not use periods",
                spec.tier
            )))
        }
        (false, _) => None,
    };
    let n_periods = periods.as_ref().map_or(1, Vec::len);
    let n_obs = n * n_periods;
    if expected.len() != n_obs {
        return Err(Error::Dimension(format!(
            "expected counts have {} entries, layout needs {n_obs}",
            expected.len()
        )));
    }
    if covariates.len() != n_obs {
        return Err(Error::Dimension(format!(
            "covariate rows have {} entries, layout needs {n_obs}",
            covariates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (phi, theta) = if let Some(g) = graph {
        let phi = icar_sample(g, truth.tau_phi, &mut rng)?;
        let tau_theta = truth.tau_theta;
        if !(tau_theta > F::zero()) || tau_theta.is_nan() {
            return Err(Error::Config(format!(
                "unstructured precision must be positive, got {tau_theta}"
            )));
        }
        let sd = if tau_theta.is_infinite() { F::zero() } else { tau_theta.sqrt().recip() };
        let theta: Vec<F> = (0..n).map(|_| F::std_normal(&mut rng) * sd).collect();
        (phi, theta)
    } else {
        (Vec::new(), Vec::new())
    };

    let realized = Params {
        beta: truth.beta.clone(),
        phi,
        theta,
        tau_phi: truth.tau_phi,
        tau_theta: truth.tau_theta,
    };

    // Lay out rows with zero counts to get the canonical ordering and the
    // linear predictor, then draw the counts.
    let region_ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let region_ids = match graph {
        Some(g) => g.regions().iter().map(|r| r.id.clone()).collect(),
        None => region_ids,
    };
    let make_rows = |counts: Option<&[u64]>| -> Vec<ObsRow<F>> {
        (0..n_obs)
            .map(|k| ObsRow {
                region: k % n,
                period: periods.as_ref().map(|ts| ts[k / n]),
                count: counts.map_or(0, |c| c[k]),
                expected: expected[k],
                covariates: covariates[k].clone(),
            })
            .collect()
    };
    let skeleton = Dataset::from_rows(region_ids.clone(), make_rows(None))?;
    let eta = linear_predictor(spec, &realized, &skeleton)?;

    let mut counts = Vec::with_capacity(n_obs);
    for k in 0..n_obs {
        let mean = skeleton.expected()[k] * eta[k].exp();
        if !mean.is_finite() {
            return Err(Error::Data(format!(
                "simulated mean for observation {k} is not finite (eta = {})",
                eta[k]
            )));
        }
        counts.push(F::sample_poisson(&mut rng, mean));
    }

    let dataset = Dataset::from_rows(region_ids, make_rows(Some(&counts)))?;
    Ok((dataset, realized))
}

/// Exposure and covariate inputs for a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedInputs<F> {
    /// Expected count per observation, uniform over the given range.
    pub expected: Vec<F>,
    /// Standard-normal covariate row per observation.
    pub covariates: Vec<Vec<F>>,
}

/// Draws simulation inputs deterministically from `seed`. These use their
/// own RNG substream, so the same seed passed to [`simulate_dataset`]
/// yields counts independent of the inputs drawn here.
///
/// pre: `0 < low <= high`, both finite.
pub fn simulate_inputs<F: Scalar>(
    n_obs: usize,
    n_covariates: usize,
    expected_range: (F, F),
    seed: u64,
) -> Result<SimulatedInputs<F>> {
    let (low, high) = expected_range;
    if !(low.is_finite() && high.is_finite() && low > F::zero() && low <= high) {
        return Err(Error::Config(format!(
            "expected-count range must satisfy 0 < low <= high, got [{low}, {high}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Streams 0 (counts/effects) and 1.. (chains) are taken.
    rng.set_stream(u64::MAX);
    let expected: Vec<F> =
        (0..n_obs).map(|_| low + (high - low) * F::unit_uniform(&mut rng)).collect();
    let covariates: Vec<Vec<F>> = (0..n_obs)
        .map(|_| (0..n_covariates).map(|_| F::std_normal(&mut rng)).collect())
        .collect();
    Ok(SimulatedInputs { expected, covariates })
}
