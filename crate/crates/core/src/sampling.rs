//! Synthetic ship arrival times and their aggregation into scenario sets.
//!
//! Mean arrival times are drawn from `U(0, R)` and covariances from the
//! Wishart distribution `W(R, I/R)`, whose mean is the identity.

use std::cmp::Ordering;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{ArrivalOrder, Scenario, ScenarioSet};
use crate::error::{invalid_input, Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const EIGEN_TOLERANCE: f64 = 1e-9;

/// Seed plus stream identifier; equal pairs give identical random sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Mean vector and covariance matrix of the arrival-time distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistributionSpec", into = "RawDistributionSpec")]
pub struct DistributionSpec {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawDistributionSpec {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl TryFrom<RawDistributionSpec> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistributionSpec) -> Result<Self> {
        DistributionSpec::new(raw.mu, raw.sigma)
    }
}

impl From<DistributionSpec> for RawDistributionSpec {
    fn from(spec: DistributionSpec) -> Self {
        RawDistributionSpec {
            mu: spec.mu,
            sigma: spec.sigma,
        }
    }
}

impl DistributionSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(invalid_input("mean vector is empty"));
        }
        if sigma.len() != n || sigma.iter().any(|row| row.len() != n) {
            return Err(invalid_input(format!("covariance must be {n}x{n}")));
        }
        if mu.iter().chain(sigma.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid_input("non-finite entry in distribution parameters"));
        }
        for (i, row) in sigma.iter().enumerate() {
            for (j, &value) in row.iter().enumerate().take(i) {
                if (value - sigma[j][i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(invalid_input(format!(
                        "covariance not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let min_eigen = to_matrix(&sigma)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigen < -EIGEN_TOLERANCE {
            return Err(invalid_input(format!(
                "covariance has negative eigenvalue {min_eigen:e}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Draws `mu ~ U(0, R)` and `sigma ~ W(R, I/R)`.
    pub fn random<G: Rng + ?Sized>(num_ships: usize, rng: &mut G) -> Result<Self> {
        let mu = sample_mu(num_ships, rng);
        let sigma = sample_sigma(num_ships, rng);
        Self::new(mu, sigma)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn dimension(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[Vec<f64>] {
        &self.sigma
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Ship arrival times of one sampled instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTimeSample {
    pub times: Vec<f64>,
}

impl ArrivalTimeSample {
    pub fn new(times: Vec<f64>) -> Self {
        Self { times }
    }
}

/// Mean arrival times, i.i.d. uniform on `[0, R]`.
pub fn sample_mu<G: Rng + ?Sized>(num_ships: usize, rng: &mut G) -> Vec<f64> {
    let upper = num_ships as f64;
    (0..num_ships).map(|_| rng.gen_range(0.0..=upper)).collect()
}

/// One draw from `W(R, I/R)` by Bartlett decomposition.
pub fn sample_sigma<G: Rng + ?Sized>(num_ships: usize, rng: &mut G) -> Vec<Vec<f64>> {
    let n = num_ships;
    let dof = n as f64;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new(dof - i as f64).expect("positive degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // scale L = I / sqrt(R), so L A A^T L^T = A A^T / R
    let w = (&a * a.transpose()) / dof;
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (w[(i, j)] + w[(j, i)])).collect())
        .collect()
}

/// Factor `F` with `F F^T = sigma`.
///
/// Cholesky when the matrix is positive definite, otherwise the symmetric
/// square root from the eigendecomposition with clipped eigenvalues.
fn covariance_factor(spec: &DistributionSpec) -> Result<DMatrix<f64>> {
    let sigma = to_matrix(&spec.sigma);
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.l());
    }
    let eigen = sigma.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "cannot factor covariance matrix {:?}",
            spec.sigma
        )));
    }
    let roots = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eigen.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// `count` i.i.d. draws of `N(mu, sigma)`.
pub fn sample_arrival_times<G: Rng + ?Sized>(
    spec: &DistributionSpec,
    count: usize,
    rng: &mut G,
) -> Result<Vec<ArrivalTimeSample>> {
    let factor = covariance_factor(spec)?;
    let n = spec.dimension();
    let mu = DVector::from_column_slice(&spec.mu);
    Ok((0..count)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let t = &mu + &factor * z;
            ArrivalTimeSample::new(t.iter().copied().collect())
        })
        .collect())
}

/// Ships sorted by arrival time; equal times keep the smaller ship first.
pub fn order_from_times(sample: &ArrivalTimeSample) -> Result<ArrivalOrder> {
    if sample.times.iter().any(|t| !t.is_finite()) {
        return Err(invalid_input("arrival times must be finite"));
    }
    let mut ships: Vec<u32> = (1..=sample.times.len() as u32).collect();
    ships.sort_by(|&a, &b| {
        sample.times[a as usize - 1]
            .partial_cmp(&sample.times[b as usize - 1])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    ArrivalOrder::new(ships)
}

/// Distinct arrival orders weighted by their empirical frequency.
///
/// Scenarios are sorted by descending probability, ties by the order vector.
pub fn aggregate_orders(samples: &[ArrivalTimeSample]) -> Result<ScenarioSet> {
    let first = samples
        .first()
        .ok_or_else(|| invalid_input("no arrival-time samples"))?;
    let dim = first.times.len();
    let mut counts: HashMap<ArrivalOrder, usize> = HashMap::new();
    for sample in samples {
        if sample.times.len() != dim {
            return Err(invalid_input("arrival-time samples differ in dimension"));
        }
        *counts.entry(order_from_times(sample)?).or_default() += 1;
    }
    let mut tallied: Vec<(ArrivalOrder, usize)> = counts.into_iter().collect();
    tallied.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.order().cmp(b.0.order())));
    let total = samples.len() as f64;
    let scenarios = tallied
        .into_iter()
        .map(|(order, count)| Scenario {
            order,
            probability: count as f64 / total,
        })
        .collect();
    ScenarioSet::new(dim, scenarios)
}

/// Samples `count` arrival-time vectors and aggregates their orders.
pub fn sample_scenarios<G: Rng + ?Sized>(spec: &DistributionSpec, count: usize, rng: &mut G) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(invalid_input("sample count must be positive"));
    }
    aggregate_orders(&sample_arrival_times(spec, count, rng)?)
}
