//! A single learning agent: memory, replay with external experiences, the
//! Euler-error policy-gradient step and the lifecycle loop.

use std::collections::VecDeque;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::economy::{Preferences, Prices};
use crate::error::{Error, Result};
use crate::markov::{sample_discrete, MarkovChain};
use crate::net::{ActionBounds, Adam, Clip, Mlp, Policy, Workspace};
use crate::rational::RationalPolicy;

/// Learning configuration shared by all agents of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub hidden_sizes: Vec<usize>,
    /// Learning steps per period (F).
    pub learn_freq: usize,
    /// Probability that a batch slot is an external experience (kappa).
    pub external_share: f64,
    /// Memory capacity (M).
    pub memory_size: usize,
    /// Episodes per learning step (N).
    pub batch_size: usize,
    pub adam_alpha: f64,
    pub polyak_lambda: f64,
    /// Output scale of the network in `a + mu phi`.
    pub mu: f64,
    pub life_t: usize,
    pub childhood: usize,
    /// External wealth draws are uniform on `[0, external_a_max]`.
    pub external_a_max: f64,
    pub a_cap: f64,
}

impl Hyperparameters {
    pub fn low() -> Self {
        Hyperparameters {
            hidden_sizes: vec![4, 4],
            learn_freq: 50,
            external_share: 0.25,
            memory_size: 50,
            batch_size: 10,
            adam_alpha: 0.01,
            polyak_lambda: 0.01,
            mu: 0.01,
            life_t: 100,
            childhood: 20,
            external_a_max: 30.0,
            a_cap: 50.0,
        }
    }

    pub fn high() -> Self {
        Hyperparameters {
            hidden_sizes: vec![8, 8],
            learn_freq: 200,
            external_share: 0.5,
            memory_size: 100,
            ..Hyperparameters::low()
        }
    }

    /// Deeper network, small learning rate, external experiences only and
    /// 10,000 steps per period.
    pub fn asymptotic() -> Self {
        Hyperparameters {
            hidden_sizes: vec![4, 8, 8, 4],
            learn_freq: 10_000,
            external_share: 1.0,
            adam_alpha: 0.001,
            ..Hyperparameters::low()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail(format!("hidden sizes must be positive, got {:?}", self.hidden_sizes));
        }
        if self.memory_size == 0 || self.batch_size == 0 {
            return fail("memory and batch sizes must be positive".into());
        }
        if self.batch_size > self.memory_size {
            return fail(format!(
                "batch size {} exceeds memory size {}",
                self.batch_size, self.memory_size
            ));
        }
        if !(0.0..=1.0).contains(&self.external_share) {
            return fail(format!("external share must lie in [0, 1], got {}", self.external_share));
        }
        if !(self.adam_alpha > 0.0) || !(self.mu > 0.0) {
            return fail("learning rate and mu must be positive".into());
        }
        if !(self.polyak_lambda > 0.0 && self.polyak_lambda <= 1.0) {
            return fail(format!("polyak rate must lie in (0, 1], got {}", self.polyak_lambda));
        }
        if self.life_t == 0 || self.childhood > self.life_t {
            return fail(format!(
                "need 0 < life length and childhood <= life length, got {} and {}",
                self.life_t, self.childhood
            ));
        }
        if !(self.external_a_max >= 0.0) || !(self.a_cap > 0.0) {
            return fail("external wealth bound must be nonnegative and the savings cap positive".into());
        }
        Ok(())
    }
}

/// Named hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Low,
    High,
}

impl Preset {
    pub fn hyperparameters(self) -> Hyperparameters {
        match self {
            Preset::Low => Hyperparameters::low(),
            Preset::High => Hyperparameters::high(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Low => "low",
            Preset::High => "high",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Preset::Low),
            "high" => Ok(Preset::High),
            other => Err(Error::config(format!("unknown preset '{other}' (expected low or high)"))),
        }
    }
}

/// A remembered transition `(a, z, z')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub a: f64,
    pub z_index: usize,
    pub z_next_index: usize,
}

/// Holds the last `capacity` episodes; the oldest is dropped first.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    capacity: usize,
    items: VecDeque<Episode>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        MemoryBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, e: Episode) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.items.iter()
    }

    /// Appends `n` uniform draws to `out`: distinct episodes when the buffer
    /// holds at least `n`, with replacement otherwise.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Vec<Episode>) {
        let len = self.items.len();
        if n == 0 || len == 0 {
            return;
        }
        if len >= n {
            for i in index::sample(rng, len, n) {
                out.push(self.items[i]);
            }
        } else {
            for _ in 0..n {
                out.push(self.items[rng.random_range(0..len)]);
            }
        }
    }
}

/// Fixed economic environment seen by every agent of a run.
#[derive(Debug, Clone)]
pub struct Environment {
    pub chain: MarkovChain,
    pub prices: Prices,
    pub prefs: Preferences,
    pub bounds: ActionBounds,
    stationary_z: Vec<f64>,
}

impl Environment {
    /// The consumption floor is the lowest possible labor income `w z_min`.
    pub fn new(chain: MarkovChain, prices: Prices, prefs: Preferences, hp: &Hyperparameters) -> Result<Self> {
        let stationary_z = chain.stationary_distribution()?;
        let bounds = ActionBounds::new(hp.mu, 0.0, hp.a_cap, prices.w * chain.z_min())?;
        Ok(Environment {
            chain,
            prices,
            prefs,
            bounds,
            stationary_z,
        })
    }

    pub fn stationary_z(&self) -> &[f64] {
        &self.stationary_z
    }

    #[inline]
    pub fn z(&self, iz: usize) -> f64 {
        self.chain.z(iz)
    }

    /// `beta (1 + r)`.
    #[inline]
    pub fn gross_discount(&self) -> f64 {
        self.prefs.beta * (1.0 + self.prices.r)
    }
}

/// Random `(a, z, z')`: wealth uniform on `[0, external_a_max]`, `z` from the
/// stationary distribution and `z'` from its transition row.
pub fn draw_external_episode<R: Rng + ?Sized>(env: &Environment, external_a_max: f64, rng: &mut R) -> Episode {
    let a = if external_a_max > 0.0 {
        rng.random::<f64>() * external_a_max
    } else {
        0.0
    };
    let z_index = sample_discrete(&env.stationary_z, rng);
    let z_next_index = sample_discrete(env.chain.row(z_index), rng);
    Episode { a, z_index, z_next_index }
}

/// Per-period learning outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Mean of `beta (1 + r) u'(c2) / u'(c1) - 1` over the batch.
    pub euler_error: f64,
    /// Episodes whose gradient was zeroed by a clip.
    pub clipped: usize,
}

/// A learning agent: policy and target networks, optimizer state, memory and a
/// private random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: Policy,
    pub adam: Adam,
    pub buffer: MemoryBuffer,
    pub hp: Hyperparameters,
    rng: ChaCha8Rng,
    grad: Vec<f64>,
    ws_net: Workspace,
    ws_target: Workspace,
    batch: Vec<Episode>,
}

impl Agent {
    /// Fresh agent whose networks are drawn from `rng`.
    pub fn new(hp: Hyperparameters, env: &Environment, mut rng: ChaCha8Rng) -> Result<Self> {
        hp.validate()?;
        let net = Mlp::init(&hp.hidden_sizes, &mut rng)?;
        Agent::with_network(hp, env, net, rng)
    }

    pub fn with_network(hp: Hyperparameters, env: &Environment, net: Mlp, rng: ChaCha8Rng) -> Result<Self> {
        let policy = Policy::new(net, env.bounds, hp.polyak_lambda)?;
        let n = policy.network.n_params();
        Ok(Agent {
            adam: Adam::new(n, hp.adam_alpha),
            buffer: MemoryBuffer::new(hp.memory_size),
            grad: vec![0.0; n],
            ws_net: policy.network.workspace(),
            ws_target: policy.network.workspace(),
            batch: Vec::with_capacity(hp.batch_size),
            policy,
            hp,
            rng,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Draws `k ~ Binomial(N, kappa)` external episodes and `N - k` from
    /// memory. Returns `None` when memory is still empty.
    pub fn assemble_batch(&mut self, env: &Environment) -> Option<Vec<Episode>> {
        let mut batch = Vec::with_capacity(self.hp.batch_size);
        self.fill_batch(env, &mut batch).map(|_| batch)
    }

    fn fill_batch(&mut self, env: &Environment, batch: &mut Vec<Episode>) -> Option<usize> {
        if self.buffer.is_empty() {
            return None;
        }
        batch.clear();
        let n = self.hp.batch_size;
        let k = if self.hp.external_share <= 0.0 {
            0
        } else if self.hp.external_share >= 1.0 {
            n
        } else {
            Binomial::new(n as u64, self.hp.external_share)
                .expect("share validated")
                .sample(&mut self.rng) as usize
        };
        for _ in 0..k {
            batch.push(draw_external_episode(env, self.hp.external_a_max, &mut self.rng));
        }
        self.buffer.sample_into(n - k, &mut self.rng, batch);
        Some(k)
    }

    /// One Adam ascent step on `sum_e u(c1) + beta u(c2)` with the target
    /// action held fixed, followed by the target update.
    pub fn learning_step(&mut self, env: &Environment, batch: &[Episode]) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(Error::domain("learning step needs a nonempty batch"));
        }
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let (euler, clipped) = batch_gradient(
            &self.policy,
            env,
            batch,
            &mut self.ws_net,
            &mut self.ws_target,
            &mut self.grad,
        );
        if !euler.is_finite() {
            return Err(Error::NonFinite("batch Euler error".into()));
        }
        self.adam.ascent_step(self.policy.network.params_mut(), &self.grad)?;
        self.policy.track_target()?;
        Ok(StepOutcome {
            euler_error: euler / batch.len() as f64,
            clipped,
        })
    }

    /// `F` learning steps; returns the mean batch Euler error, or `None` when
    /// nothing was learned.
    pub fn learn(&mut self, env: &Environment) -> Result<Option<f64>> {
        if self.hp.learn_freq == 0 || self.buffer.is_empty() {
            return Ok(None);
        }
        let mut batch = std::mem::take(&mut self.batch);
        let mut total = 0.0;
        for _ in 0..self.hp.learn_freq {
            self.fill_batch(env, &mut batch);
            total += self.learning_step(env, &batch)?.euler_error;
        }
        self.batch = batch;
        Ok(Some(total / self.hp.learn_freq as f64))
    }

    /// Clipped action of the current network.
    pub fn act(&self, env: &Environment, a: f64, iz: usize) -> Result<(f64, Clip)> {
        self.policy.action(a, env.z(iz), env.prices)
    }
}

/// Accumulates `sum_e (beta R u'(c2) - u'(c1)) mu grad phi` into `grad` for
/// unclipped episodes. Returns the summed Euler error and the clip count.
pub(crate) fn batch_gradient(
    policy: &Policy,
    env: &Environment,
    batch: &[Episode],
    ws_net: &mut Workspace,
    ws_target: &mut Workspace,
    grad: &mut [f64],
) -> (f64, usize) {
    let bounds = policy.bounds;
    let prices = env.prices;
    let gross = env.gross_discount();
    let mut euler = 0.0;
    let mut clipped = 0;
    for e in batch {
        let (z, z_next) = (env.z(e.z_index), env.z(e.z_next_index));
        let phi = policy.network.forward_with(ws_net, e.a, z);
        let (x, clip) = bounds.clip(phi, e.a, z, prices);
        let phi_t = policy.target.forward_with(ws_target, x, z_next);
        let (x_next, _) = bounds.clip(phi_t, x, z_next, prices);
        let c1 = (prices.cash_on_hand(e.a, z) - x).max(bounds.c_min);
        let c2 = (prices.cash_on_hand(x, z_next) - x_next).max(bounds.c_min);
        let mu1 = env.prefs.marginal_utility_unchecked(c1);
        let mu2 = env.prefs.marginal_utility_unchecked(c2);
        euler += gross * mu2 / mu1 - 1.0;
        if clip.fired() {
            clipped += 1;
        } else {
            policy.network.backward(ws_net, (gross * mu2 - mu1) * bounds.mu, grad);
        }
    }
    (euler, clipped)
}

/// Objective `sum_e u(c1) + beta u(c2)` with the target actions evaluated at
/// `target_actions` (held fixed). Used to check the gradient.
pub fn batch_objective(policy: &Policy, env: &Environment, batch: &[Episode], target_actions: &[f64]) -> f64 {
    let prices = env.prices;
    batch
        .iter()
        .zip(target_actions)
        .map(|(e, &x_next)| {
            let (z, z_next) = (env.z(e.z_index), env.z(e.z_next_index));
            let phi = policy.network.forward(e.a, z).unwrap_or(f64::NAN);
            let (x, _) = policy.bounds.clip(phi, e.a, z, prices);
            let c1 = prices.cash_on_hand(e.a, z) - x;
            let c2 = prices.cash_on_hand(x, z_next) - x_next;
            env.prefs.utility_unchecked(c1) + env.prefs.beta * env.prefs.utility_unchecked(c2)
        })
        .sum()
}

/// Target-network actions `pi(pi(a, z | theta), z' | theta~)` for a batch.
pub fn target_actions(policy: &Policy, env: &Environment, batch: &[Episode]) -> Vec<f64> {
    batch
        .iter()
        .map(|e| {
            let (z, z_next) = (env.z(e.z_index), env.z(e.z_next_index));
            let phi = policy.network.forward(e.a, z).unwrap_or(f64::NAN);
            let (x, _) = policy.bounds.clip(phi, e.a, z, env.prices);
            let phi_t = policy.target.forward(x, z_next).unwrap_or(f64::NAN);
            policy.bounds.clip(phi_t, x, z_next, env.prices).0
        })
        .collect()
}

/// The analytic ascent direction for a batch, as used by `learning_step`.
pub fn batch_gradient_vec(policy: &Policy, env: &Environment, batch: &[Episode]) -> Vec<f64> {
    let mut grad = vec![0.0; policy.network.n_params()];
    let (mut w1, mut w2) = (policy.network.workspace(), policy.network.workspace());
    batch_gradient(policy, env, batch, &mut w1, &mut w2, &mut grad);
    grad
}

/// One state-action record of a lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub age: usize,
    pub a: f64,
    pub z_index: usize,
    /// Next-period wealth chosen this period.
    pub action: f64,
    pub consumption: f64,
    pub clip: Clip,
    /// Mean batch Euler error over this period's learning steps (NaN without learning).
    pub euler_error: f64,
    /// `1 - (d pi / d a) / (1 + r)` of the rule that chose the action.
    pub mpc: f64,
}

/// Whoever acts for the agent before adulthood.
#[derive(Debug, Clone, Copy)]
pub enum Childhood<'a> {
    /// A rational parent acting on the agent's own states.
    Rational(&'a RationalPolicy),
    /// Replay of a parent's last records: states and actions are forced.
    Replay {
        records: &'a [PeriodRecord],
        /// The parent's record just before the replayed window, if any.
        previous: Option<PeriodRecord>,
    },
}

/// Complete record of one life.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeHistory {
    pub records: Vec<PeriodRecord>,
    /// Network parameters at the start of each requested age.
    pub snapshots: Vec<(usize, Mlp)>,
    pub final_network: Mlp,
}

/// Step used for the finite-difference slope of a policy.
pub const MPC_STEP: f64 = 1e-3;

/// `1 - pi'(a) / (1 + r)` with a central difference, one-sided at the floor.
pub fn mpc_from<F: FnMut(f64) -> f64>(mut policy: F, a: f64, h: f64, a_floor: f64, r: f64) -> f64 {
    let slope = if a - h >= a_floor {
        (policy(a + h) - policy(a - h)) / (2.0 * h)
    } else {
        (policy(a + h) - policy(a)) / h
    };
    1.0 - slope / (1.0 + r)
}

/// Runs one life of `hp.life_t` periods.
///
/// Period order: act, store `(a_{t-1}, z_{t-1}, z_t)`, learn `F` steps, record,
/// then draw the next productivity state.
pub fn simulate_lifetime(
    agent: &mut Agent,
    env: &Environment,
    childhood: Childhood<'_>,
    initial: (f64, usize),
    snapshot_ages: &[usize],
) -> Result<LifeHistory> {
    let hp = agent.hp.clone();
    let prices = env.prices;
    let mut records = Vec::with_capacity(hp.life_t);
    let mut snapshots = Vec::new();
    let (mut a, mut iz) = initial;
    let mut previous: Option<(f64, usize)> = None;
    if let Childhood::Replay { records: replay, previous: before } = childhood {
        if replay.len() < hp.childhood {
            return Err(Error::config(format!(
                "replayed childhood needs {} parent records, got {}",
                hp.childhood,
                replay.len()
            )));
        }
        previous = before.map(|p| (p.a, p.z_index));
        if hp.childhood > 0 {
            a = replay[0].a;
            iz = replay[0].z_index;
        }
    }
    for age in 0..hp.life_t {
        if snapshot_ages.contains(&age) {
            snapshots.push((age, agent.policy.network.clone()));
        }
        let z = env.z(iz);
        let (action, clip, mpc) = if age < hp.childhood {
            match childhood {
                Childhood::Rational(re) => {
                    let x = re.interpolate(a, iz);
                    let mpc = mpc_from(|s| re.interpolate(s, iz), a, MPC_STEP, 0.0, prices.r);
                    (x, Clip::None, mpc)
                }
                Childhood::Replay { records: replay, .. } => {
                    let rec = replay[age];
                    (rec.action, rec.clip, rec.mpc)
                }
            }
        } else {
            let (x, clip) = agent.act(env, a, iz)?;
            let mpc = mpc_from(
                |s| agent.policy.action(s, z, prices).map(|p| p.0).unwrap_or(f64::NAN),
                a,
                MPC_STEP,
                env.bounds.a_floor,
                prices.r,
            );
            (x, clip, mpc)
        };
        if let Some((pa, pz)) = previous {
            agent.buffer.push(Episode {
                a: pa,
                z_index: pz,
                z_next_index: iz,
            });
        }
        let euler_error = agent.learn(env)?.unwrap_or(f64::NAN);
        let consumption = prices.cash_on_hand(a, z) - action;
        records.push(PeriodRecord {
            age,
            a,
            z_index: iz,
            action,
            consumption,
            clip,
            euler_error,
            mpc,
        });
        previous = Some((a, iz));
        a = action;
        iz = match childhood {
            Childhood::Replay { records: replay, .. } if age + 1 < hp.childhood => replay[age + 1].z_index,
            _ => env.chain.sample_next(iz, agent.rng())?,
        };
    }
    Ok(LifeHistory {
        records,
        snapshots,
        final_network: agent.policy.network.clone(),
    })
}

/// Deterministic stream for `(seed, stream)`: ChaCha8 keyed by the seed with
/// the stream selecting an independent counter sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
