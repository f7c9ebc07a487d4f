//! Discretized idiosyncratic productivity.
//!
//! Log productivity follows `ln z' = rho ln z + sigma eps` with standard normal
//! innovations. [`MarkovChain::tauchen`] replaces it with a finite chain on an
//! equally spaced log grid centred on zero, so the median state is `z = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};


/// AR(1) in logs to be discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArOneSpec {
    pub rho: f64,
    /// Innovation standard deviation.
    pub sigma: f64,
    pub n_states: usize,
    /// Grid half-width in unconditional standard deviations.
    pub width: f64,
}

impl ArOneSpec {
    /// rho = 0.6, sigma = 0.3, 20 states, grid spanning three unconditional deviations.
    pub fn baseline() -> Self {
        ArOneSpec {
            rho: 0.6,
            sigma: 0.3,
            n_states: 20,
            width: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_states == 0 {
            return Err(Error::domain("n_states must be at least 1"));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::domain(format!("width must be positive, got {}", self.width)));
        }
        Ok(())
    }

    pub fn unconditional_sd(&self) -> f64 {
        self.sigma / (1.0 - self.rho * self.rho).sqrt()
    }
}

/// Finite Markov chain over productivity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    states: Vec<f64>,
    /// Row-major `n x n`; row `i` is the distribution of tomorrow's state given `i`.
    transition: Vec<f64>,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl MarkovChain {
    /// Builds a chain from explicit levels and a row-major transition matrix.
    pub fn new(states: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::domain("a Markov chain needs at least one state"));
        }
        if transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(Error::domain("transition matrix must be n x n"));
        }
        if states.iter().any(|&z| !(z > 0.0 && z.is_finite())) {
            return Err(Error::domain("productivity levels must be positive and finite"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::domain(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(MarkovChain {
            states,
            transition: transition.into_iter().flatten().collect(),
        })
    }

    /// Tauchen's method: probabilities are normal CDF differences across the
    /// midpoints between neighbouring grid nodes, with the tails assigned to the
    /// end nodes.
    pub fn tauchen(spec: &ArOneSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_states;
        if n == 1 {
            return Ok(MarkovChain {
                states: vec![1.0],
                transition: vec![1.0],
            });
        }
        let half = spec.width * spec.unconditional_sd();
        let step = 2.0 * half / (n - 1) as f64;
        let log_grid: Vec<f64> = (0..n).map(|i| -half + step * i as f64).collect();

        let mut transition = vec![0.0; n * n];
        for (i, &yi) in log_grid.iter().enumerate() {
            let row = &mut transition[i * n..(i + 1) * n];
            let mean = spec.rho * yi;
            for (j, &yj) in log_grid.iter().enumerate() {
                let upper = (yj - mean + step / 2.0) / spec.sigma;
                let lower = (yj - mean - step / 2.0) / spec.sigma;
                row[j] = if j == 0 {
                    std_normal_cdf(upper)
                } else if j == n - 1 {
                    1.0 - std_normal_cdf(lower)
                } else {
                    std_normal_cdf(upper) - std_normal_cdf(lower)
                };
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }

        Ok(MarkovChain {
            states: log_grid.iter().map(|y| y.exp()).collect(),
            transition,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn z(&self, index: usize) -> f64 {
        self.states[index]
    }

    pub fn z_min(&self) -> f64 {
        self.states.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let n = self.n_states();
        &self.transition[index * n..(index + 1) * n]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states() + to]
    }

    /// True when every state can reach every other state.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_states();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for (j, visited) in seen.iter_mut().enumerate() {
                    let p = if forward { self.prob(i, j) } else { self.prob(j, i) };
                    if p > 0.0 && !*visited {
                        *visited = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// One step of the distribution: `p -> p Gamma`.
    pub fn push_forward(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (o, &g) in out.iter_mut().zip(self.row(i)) {
                *o += pi * g;
            }
        }
        out
    }

    /// Invariant distribution by Grassmann-Taksar-Heyman state reduction.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        if !self.is_irreducible() {
            return Err(Error::domain("transition matrix is reducible; stationary distribution is not unique"));
        }
        let n = self.n_states();
        let mut a = self.transition.clone();
        for k in (1..n).rev() {
            let s: f64 = a[k * n..k * n + k].iter().sum();
            if !(s > 0.0) {
                return Err(Error::domain("state reduction hit a zero pivot"));
            }
            for i in 0..k {
                a[i * n + k] /= s;
            }
            for i in 0..k {
                let aik = a[i * n + k];
                for j in 0..k {
                    a[i * n + j] += aik * a[k * n + j];
                }
            }
        }
        let mut p = vec![0.0; n];
        p[0] = 1.0;
        for k in 1..n {
            p[k] = (0..k).map(|i| p[i] * a[i * n + k]).sum();
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Ok(p)
    }

    /// Draws tomorrow's state index given today's.
    pub fn sample_next<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> Result<usize> {
        if current >= self.n_states() {
            return Err(Error::domain(format!(
                "state index {current} out of range for {} states",
                self.n_states()
            )));
        }
        Ok(sample_discrete(self.row(current), rng))
    }

    /// Mean of `z` under a distribution over states.
    pub fn mean_z(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.states).map(|(pi, z)| pi * z).sum()
    }
}

/// Inverse-CDF draw from a probability vector. Zero-probability trailing
/// entries are never returned.
pub(crate) fn sample_discrete<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
            cum += p;
            if u < cum {
                return j;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state(row0: [f64; 2], row1: [f64; 2]) -> MarkovChain {
        MarkovChain::new(vec![0.5, 1.5], vec![row0.to_vec(), row1.to_vec()]).unwrap()
    }

    #[test]
    fn zero_persistence_rows_are_identical() {
        let chain = MarkovChain::tauchen(&ArOneSpec {
            rho: 0.0,
            sigma: 0.3,
            n_states: 2,
            width: 3.0,
        })
        .unwrap();
        for j in 0..2 {
            assert!((chain.prob(0, j) - chain.prob(1, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_state_chain() {
        let chain = MarkovChain::tauchen(&ArOneSpec {
            n_states: 1,
            ..ArOneSpec::baseline()
        })
        .unwrap();
        assert_eq!(chain.states(), &[1.0]);
        assert_eq!(chain.row(0), &[1.0]);
    }

    #[test]
    fn rejects_invalid_specs() {
        let base = ArOneSpec::baseline();
        for bad in [
            ArOneSpec { rho: 1.0, ..base },
            ArOneSpec { rho: -0.1, ..base },
            ArOneSpec { sigma: 0.0, ..base },
            ArOneSpec { n_states: 0, ..base },
            ArOneSpec { width: -1.0, ..base },
        ] {
            assert!(matches!(MarkovChain::tauchen(&bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn baseline_chain_is_row_stochastic_and_increasing() {
        let chain = MarkovChain::tauchen(&ArOneSpec::baseline()).unwrap();
        for i in 0..chain.n_states() {
            let sum: f64 = chain.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!(chain.states().windows(2).all(|w| w[1] > w[0]));
        // symmetric log grid: product of mirrored states is one
        let n = chain.n_states();
        for i in 0..n {
            assert!((chain.z(i) * chain.z(n - 1 - i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_of_uniform_two_state() {
        let chain = two_state([0.5, 0.5], [0.5, 0.5]);
        let p = chain.stationary_distribution().unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_chain_is_reducible() {
        let chain = two_state([1.0, 0.0], [0.0, 1.0]);
        assert!(matches!(chain.stationary_distribution(), Err(Error::Domain(_))));
    }

    #[test]
    fn periodic_chain_still_converges() {
        let chain = two_state([0.0, 1.0], [1.0, 0.0]);
        let p = chain.stationary_distribution().unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rows_sample_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let up = two_state([0.0, 1.0], [0.5, 0.5]);
        let stay = two_state([1.0, 0.0], [0.5, 0.5]);
        for _ in 0..1000 {
            assert_eq!(up.sample_next(0, &mut rng).unwrap(), 1);
            assert_eq!(stay.sample_next(0, &mut rng).unwrap(), 0);
        }
        assert!(up.sample_next(2, &mut rng).is_err());
    }

    #[test]
    fn sampling_frequency_matches_row() {
        let chain = two_state([0.3, 0.7], [0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let ones = (0..draws)
            .filter(|_| chain.sample_next(0, &mut rng).unwrap() == 1)
            .count();
        let freq = ones as f64 / draws as f64;
        assert!((freq - 0.7).abs() < 0.002, "frequency {freq}");
    }

    #[test]
    fn rejects_bad_explicit_matrices() {
        assert!(MarkovChain::new(vec![1.0], vec![vec![0.9]]).is_err());
        assert!(MarkovChain::new(vec![1.0, 2.0], vec![vec![1.0]]).is_err());
        assert!(MarkovChain::new(vec![-1.0], vec![vec![1.0]]).is_err());
    }
}
