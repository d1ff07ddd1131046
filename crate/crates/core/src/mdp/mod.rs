//! Finite MDPs with deterministic transitions and returns that depend only on the final state.
//!
//! Trajectory measures are enumerated exactly, so every KL below is a finite sum.
//! The main construction reweights the base trajectory measure by a factor
//! that depends only on the mean return `g(τ)` and then recovers a per-state
//! policy whose trajectory measure is exactly the reweighted one.

mod instances;
mod schema;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use instances::{assign_ranked_returns, midpoint_atoms, six_state_instance, token_chain, EOS};
pub use schema::MdpFile;

use crate::distributions::Discrete;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest trajectory count [`enumerate_trajectories`] accepts.
pub const MAX_TRAJECTORIES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Dmrmdp {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// `transitions[s][a]`; empty for sinks.
    pub transitions: Vec<Vec<usize>>,
    pub start: Vec<(usize, f64)>,
    /// Return atoms `(value, prob)` for sinks, `None` elsewhere.
    pub returns: Vec<Option<Vec<(f64, f64)>>>,
    pub max_depth: usize,
}

impl Dmrmdp {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        transitions: Vec<Vec<usize>>,
        start: Vec<(usize, f64)>,
        returns: Vec<Option<Vec<(f64, f64)>>>,
        max_depth: usize,
    ) -> Result<Self> {
        let mdp = Self {
            states,
            actions,
            transitions,
            start,
            returns,
            max_depth,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn is_sink(&self, s: usize) -> bool {
        self.returns[s].is_some()
    }

    /// `g` at a sink: the mean of its return atoms.
    pub fn mean_return(&self, sink: usize) -> f64 {
        self.returns[sink]
            .as_ref()
            .map_or(f64::NAN, |a| a.iter().map(|(v, p)| v * p).sum())
    }

    fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let bad = |m: String| Err(Error::InvalidMdp(m));
        if self.actions.is_empty() {
            return bad("no actions".into());
        }
        if self.transitions.len() != n || self.returns.len() != n {
            return bad("transition and return tables must have one row per state".into());
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.states.iter().find(|s| !seen.insert(s.as_str())) {
            return bad(format!("duplicate state name `{dup}`"));
        }
        for s in 0..n {
            match &self.returns[s] {
                Some(atoms) => {
                    if !self.transitions[s].is_empty() {
                        return bad(format!(
                            "sink `{}` has outgoing transitions",
                            self.states[s]
                        ));
                    }
                    Discrete::new(atoms.iter().copied()).map_err(|e| {
                        Error::InvalidMdp(format!("returns of `{}`: {e}", self.states[s]))
                    })?;
                }
                None => {
                    if self.transitions[s].len() != self.actions.len() {
                        return bad(format!(
                            "state `{}` needs a transition for each of the {} actions",
                            self.states[s],
                            self.actions.len()
                        ));
                    }
                    if let Some(&d) = self.transitions[s].iter().find(|&&d| d >= n) {
                        return bad(format!(
                            "state `{}` transitions to unknown index {d}",
                            self.states[s]
                        ));
                    }
                }
            }
        }
        if self.start.is_empty() {
            return bad("empty start distribution".into());
        }
        let mut total = 0.0;
        for &(s, p) in &self.start {
            if s >= n {
                return bad(format!("start index {s} out of range"));
            }
            if self.is_sink(s) {
                return bad(format!("start state `{}` is a sink", self.states[s]));
            }
            if !(p >= 0.0) {
                return bad(format!(
                    "start probability of `{}` is negative",
                    self.states[s]
                ));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("start probabilities sum to {total}"));
        }
        // longest remaining path from every reachable state, rejecting cycles
        let mut depth = vec![None; n];
        let mut on_stack = vec![false; n];
        for &(s, _) in &self.start {
            let d = self.longest(s, &mut depth, &mut on_stack)?;
            if d > self.max_depth {
                return bad(format!(
                    "a path from `{}` takes {d} steps, more than max_depth {}",
                    self.states[s], self.max_depth
                ));
            }
        }
        Ok(())
    }

    fn longest(
        &self,
        s: usize,
        depth: &mut [Option<usize>],
        on_stack: &mut [bool],
    ) -> Result<usize> {
        if let Some(d) = depth[s] {
            return Ok(d);
        }
        if self.is_sink(s) {
            depth[s] = Some(0);
            return Ok(0);
        }
        if on_stack[s] {
            return Err(Error::InvalidMdp(format!(
                "cycle through `{}`: some trajectory never reaches a sink",
                self.states[s]
            )));
        }
        on_stack[s] = true;
        let mut best = 0;
        for &d in &self.transitions[s] {
            best = best.max(1 + self.longest(d, depth, on_stack)?);
            if best > self.max_depth {
                break;
            }
        }
        on_stack[s] = false;
        depth[s] = Some(best);
        Ok(best)
    }

    /// Number of action sequences from the start support, saturating.
    pub fn trajectory_count(&self) -> u128 {
        let mut memo = vec![None; self.states.len()];
        self.start.iter().fold(0u128, |acc, &(s, _)| {
            acc.saturating_add(self.count_from(s, &mut memo))
        })
    }

    fn count_from(&self, s: usize, memo: &mut [Option<u128>]) -> u128 {
        if let Some(c) = memo[s] {
            return c;
        }
        let c = if self.is_sink(s) {
            1
        } else {
            self.transitions[s].iter().fold(0u128, |acc, &d| {
                acc.saturating_add(self.count_from(d, memo))
            })
        };
        memo[s] = Some(c);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Action probabilities per state; empty rows for sinks.
    pub rows: Vec<Vec<f64>>,
}

impl Policy {
    pub fn uniform(mdp: &Dmrmdp) -> Self {
        let k = mdp.actions.len();
        let rows = (0..mdp.states.len())
            .map(|s| {
                if mdp.is_sink(s) {
                    Vec::new()
                } else {
                    vec![1.0 / k as f64; k]
                }
            })
            .collect();
        Policy { rows }
    }

    pub fn validate(&self, mdp: &Dmrmdp) -> Result<()> {
        if self.rows.len() != mdp.states.len() {
            return Err(Error::InvalidMdp("policy needs one row per state".into()));
        }
        for (s, row) in self.rows.iter().enumerate() {
            if mdp.is_sink(s) {
                continue;
            }
            if row.len() != mdp.actions.len() || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidMdp(format!(
                    "policy row for `{}` is malformed",
                    mdp.states[s]
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMdp(format!(
                    "policy row for `{}` sums to {total}",
                    mdp.states[s]
                )));
            }
        }
        Ok(())
    }

    /// Seeded random policy with Dirichlet(1) rows.
    pub fn random(mdp: &Dmrmdp, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let rows = (0..mdp.states.len())
            .map(|s| {
                if mdp.is_sink(s) {
                    return Vec::new();
                }
                let w: Vec<f64> = (0..mdp.actions.len())
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            })
            .collect();
        Policy { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(state, action)` pairs from the start state onward.
    pub steps: Vec<(usize, usize)>,
    pub sink: usize,
}

/// Exact measure over trajectories, sorted by trajectory; zero-mass trajectories are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDist {
    pub items: Vec<(Trajectory, f64)>,
}

impl TrajectoryDist {
    fn from_map(map: BTreeMap<Trajectory, f64>) -> Self {
        Self {
            items: map.into_iter().filter(|(_, p)| *p > 0.0).collect(),
        }
    }

    pub fn prob(&self, t: &Trajectory) -> f64 {
        self.items
            .binary_search_by(|(k, _)| k.cmp(t))
            .map_or(0.0, |i| self.items[i].1)
    }

    pub fn total(&self) -> f64 {
        self.items.iter().map(|x| x.1).sum()
    }

    /// `E[g(τ)]`.
    pub fn mean_return(&self, mdp: &Dmrmdp) -> f64 {
        self.items
            .iter()
            .map(|(t, p)| p * mdp.mean_return(t.sink))
            .sum()
    }
}

/// `Tr(π)`: product of action probabilities along every path.
pub fn enumerate_trajectories(mdp: &Dmrmdp, policy: &Policy) -> Result<TrajectoryDist> {
    let estimated = mdp.trajectory_count();
    if estimated > MAX_TRAJECTORIES {
        return Err(Error::SizeBound {
            estimated,
            limit: MAX_TRAJECTORIES,
        });
    }
    policy.validate(mdp)?;
    let mut out = BTreeMap::new();
    let mut path = Vec::with_capacity(mdp.max_depth);
    for &(s, p) in &mdp.start {
        dfs(mdp, policy, s, p, &mut path, &mut out);
    }
    Ok(TrajectoryDist::from_map(out))
}

fn dfs(
    mdp: &Dmrmdp,
    pol: &Policy,
    s: usize,
    p: f64,
    path: &mut Vec<(usize, usize)>,
    out: &mut BTreeMap<Trajectory, f64>,
) {
    if p == 0.0 {
        return;
    }
    if mdp.is_sink(s) {
        out.insert(
            Trajectory {
                steps: path.clone(),
                sink: s,
            },
            p,
        );
        return;
    }
    for (a, &d) in mdp.transitions[s].iter().enumerate() {
        path.push((s, a));
        dfs(mdp, pol, d, p * pol.rows[s][a], path, out);
        path.pop();
    }
}

/// Sampled trajectory frequencies, for checking the enumeration.
pub fn sample_trajectories(
    mdp: &Dmrmdp,
    policy: &Policy,
    n: usize,
    seed: u64,
) -> BTreeMap<Trajectory, u64> {
    let mut rng = stream_rng(seed, 0);
    let mut counts = BTreeMap::new();
    let pick = |rng: &mut crate::rng::StreamRng, probs: &[(usize, f64)]| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(i, p) in probs {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.last().map_or(0, |x| x.0)
    };
    for _ in 0..n {
        let mut s = pick(&mut rng, &mdp.start);
        let mut steps = Vec::new();
        while !mdp.is_sink(s) {
            let row: Vec<(usize, f64)> = policy.rows[s].iter().copied().enumerate().collect();
            let a = pick(&mut rng, &row);
            steps.push((s, a));
            s = mdp.transitions[s][a];
        }
        *counts.entry(Trajectory { steps, sink: s }).or_insert(0) += 1;
    }
    counts
}

/// Pushforward of the trajectory measure through the sink return laws.
pub fn return_distribution(mdp: &Dmrmdp, td: &TrajectoryDist) -> Result<Discrete> {
    let atoms = td.items.iter().flat_map(|(t, p)| {
        mdp.returns[t.sink]
            .as_ref()
            .into_iter()
            .flatten()
            .map(move |&(v, q)| (v, p * q))
    });
    Discrete::new(atoms)
}

/// Distribution of `g(τ)` under `td`, as sorted `(g, mass)` pairs.
fn mean_return_masses(mdp: &Dmrmdp, td: &TrajectoryDist) -> BTreeMap<u64, (f64, f64)> {
    let mut m: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for (t, p) in &td.items {
        let g = mdp.mean_return(t.sink);
        // order-preserving key for non-NaN floats
        let bits = g.to_bits();
        let key = if g.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        };
        m.entry(key).or_insert((g, 0.0)).1 += p;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpweightInfo {
    pub mass: f64,
    /// Base `P(g(τ) > t)`.
    pub base_tail: f64,
    pub lower_factor: f64,
    pub upper_factor: f64,
}

/// `ρ_t`: scale trajectories with `g(τ) ≤ t` by `(1 − m)/F_Q(t)` and the rest by `m/F̄_Q(t)`, `m = c/t^γ`.
pub fn upweight_trajectories(
    mdp: &Dmrmdp,
    base: &TrajectoryDist,
    c: f64,
    t: f64,
    gamma: f64,
) -> Result<(TrajectoryDist, UpweightInfo)> {
    let ctx = "upweight_trajectories";
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(ctx, "c", "must be finite and > 0"));
    }
    if !(t > c && t.is_finite()) {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("need t > c (t={t}, c={c})"),
        ));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(ctx, "gamma", "must lie in (0, 1]"));
    }
    let mass = (c.ln() - gamma * t.ln()).exp();
    if mass >= 1.0 {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("mass c/t^gamma = {mass} is not below 1"),
        ));
    }
    let base_tail: f64 = base
        .items
        .iter()
        .filter(|(tr, _)| mdp.mean_return(tr.sink) > t)
        .map(|x| x.1)
        .sum();
    if base_tail == 0.0 {
        return Err(Error::EmptyUpperTail { t });
    }
    let base_cdf: f64 = base
        .items
        .iter()
        .filter(|(tr, _)| mdp.mean_return(tr.sink) <= t)
        .map(|x| x.1)
        .sum();
    if base_cdf == 0.0 {
        return Err(Error::invalid(
            ctx,
            "t",
            format!("every trajectory has mean return above t={t}"),
        ));
    }
    let info = UpweightInfo {
        mass,
        base_tail,
        lower_factor: (1.0 - mass) / base_cdf,
        upper_factor: mass / base_tail,
    };
    let items = base
        .items
        .iter()
        .map(|(tr, p)| {
            let f = if mdp.mean_return(tr.sink) > t {
                info.upper_factor
            } else {
                info.lower_factor
            };
            (tr.clone(), p * f)
        })
        .collect();
    Ok((TrajectoryDist { items }, info))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPolicy {
    pub policy: Policy,
    /// Non-sink states with zero mass under `ρ`; their rows copy the base policy.
    pub unvisited: Vec<usize>,
}

impl LiftedPolicy {
    pub fn warning(&self, mdp: &Dmrmdp) -> Option<String> {
        (!self.unvisited.is_empty()).then(|| {
            format!(
                "{} state(s) unvisited under rho keep the base policy (first: `{}`)",
                self.unvisited.len(),
                mdp.states[self.unvisited[0]]
            )
        })
    }
}

/// `π(s, a) = ρ(a taken at s) / ρ(s visited)`.
pub fn lift_policy(mdp: &Dmrmdp, rho: &TrajectoryDist, base: &Policy) -> Result<LiftedPolicy> {
    base.validate(mdp)?;
    let n = mdp.states.len();
    let k = mdp.actions.len();
    let mut visit = vec![0.0; n];
    let mut take = vec![vec![0.0; k]; n];
    for (tr, p) in &rho.items {
        let mut expect = None;
        for &(s, a) in &tr.steps {
            if expect.is_some_and(|e| e != s) || mdp.is_sink(s) || a >= k {
                return Err(Error::InvalidMdp(format!(
                    "trajectory inconsistent with transitions at `{}`",
                    mdp.states[s]
                )));
            }
            visit[s] += p;
            take[s][a] += p;
            expect = Some(mdp.transitions[s][a]);
        }
        if expect.is_some_and(|e| e != tr.sink) {
            return Err(Error::InvalidMdp(
                "trajectory does not end where its last action leads".into(),
            ));
        }
    }
    let mut unvisited = Vec::new();
    let rows = (0..n)
        .map(|s| {
            if mdp.is_sink(s) {
                Vec::new()
            } else if visit[s] > 0.0 {
                take[s].iter().map(|x| x / visit[s]).collect()
            } else {
                unvisited.push(s);
                base.rows[s].clone()
            }
        })
        .collect();
    Ok(LiftedPolicy {
        policy: Policy { rows },
        unvisited,
    })
}

pub fn total_variation(p: &TrajectoryDist, q: &TrajectoryDist) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < p.items.len() || j < q.items.len() {
        let ord = match (p.items.get(i), q.items.get(j)) {
            (Some(a), Some(b)) => a.0.cmp(&b.0),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Less => {
                s += p.items[i].1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                s += q.items[j].1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                s += (p.items[i].1 - q.items[j].1).abs();
                i += 1;
                j += 1;
            }
        }
    }
    0.5 * s
}

fn kl_term(p: f64, q: f64, what: &str) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    if q == 0.0 {
        return Err(Error::SupportMismatch(format!(
            "{what} has mass {p} where the reference has none"
        )));
    }
    Ok(p * (p / q).ln())
}

/// `Σ p(τ) ln(p(τ)/q(τ))`.
pub fn trajectory_kl(p: &TrajectoryDist, q: &TrajectoryDist) -> Result<f64> {
    p.items.iter().try_fold(0.0, |acc, (t, pt)| {
        Ok(acc + kl_term(*pt, q.prob(t), "trajectory")?)
    })
}

/// KL between the laws of `g(τ)` under `p` and `q`.
pub fn mean_return_kl(mdp: &Dmrmdp, p: &TrajectoryDist, q: &TrajectoryDist) -> Result<f64> {
    let mp = mean_return_masses(mdp, p);
    let mq = mean_return_masses(mdp, q);
    mp.iter().try_fold(0.0, |acc, (k, &(_, a))| {
        Ok(acc + kl_term(a, mq.get(k).map_or(0.0, |x| x.1), "mean-return law")?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStateKl {
    /// `E_{τ∼p} Σ_{s ∈ τ} KL(π(s) ‖ π₀(s))`
    pub sum: f64,
    /// `E_{τ∼p}` of the mean over the visited states of `τ`.
    pub average: f64,
}

pub fn action_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    p.iter()
        .zip(q)
        .try_fold(0.0, |acc, (&a, &b)| Ok(acc + kl_term(a, b, "action")?))
}

pub fn per_state_kl(
    mdp: &Dmrmdp,
    traj: &TrajectoryDist,
    pi: &Policy,
    pi0: &Policy,
) -> Result<PerStateKl> {
    let mut cache = vec![None; mdp.states.len()];
    let mut state_kl = |s: usize| -> Result<f64> {
        if let Some(v) = cache[s] {
            return Ok(v);
        }
        let v = action_kl(&pi.rows[s], &pi0.rows[s])?;
        cache[s] = Some(v);
        Ok(v)
    };
    let (mut sum, mut average) = (0.0, 0.0);
    for (tr, p) in &traj.items {
        let mut total = 0.0;
        for &(s, _) in &tr.steps {
            total += state_kl(s)?;
        }
        sum += p * total;
        average += p * total / tr.steps.len().max(1) as f64;
    }
    Ok(PerStateKl { sum, average })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRule {
    pub trajectory_kl: f64,
    pub mean_return_kl: f64,
    /// `E_g KL(p(τ | g) ‖ q(τ | g))`, computed directly.
    pub conditional_kl: f64,
    /// `|trajectory − mean_return − conditional|`
    pub residual: f64,
}

pub fn chain_rule(mdp: &Dmrmdp, p: &TrajectoryDist, q: &TrajectoryDist) -> Result<ChainRule> {
    let mp = mean_return_masses(mdp, p);
    let mq = mean_return_masses(mdp, q);
    let key = |g: f64| {
        let bits = g.to_bits();
        if g.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        }
    };
    let mut conditional = 0.0;
    for (tr, pt) in &p.items {
        let k = key(mdp.mean_return(tr.sink));
        let pg = mp[&k].1;
        let qg = mq.get(&k).map_or(0.0, |x| x.1);
        let qt = q.prob(tr);
        if qg == 0.0 || qt == 0.0 {
            return Err(Error::SupportMismatch(
                "trajectory measure not absolutely continuous".into(),
            ));
        }
        conditional += kl_term(pt / pg, qt / qg, "conditional")? * pg;
    }
    let tk = trajectory_kl(p, q)?;
    let gk = mean_return_kl(mdp, p, q)?;
    Ok(ChainRule {
        trajectory_kl: tk,
        mean_return_kl: gk,
        conditional_kl: conditional,
        residual: (tk - gk - conditional).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub t: f64,
    pub mass: f64,
    pub mean_return: f64,
    pub trajectory_kl: f64,
    pub per_state_sum_kl: f64,
    pub per_state_average_kl: f64,
    pub mean_return_kl: f64,
    pub chain_rule_residual: f64,
    /// TV between `Tr(lift(ρ_t))` and `ρ_t`.
    pub lift_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub trajectories: usize,
    pub base_mean_return: f64,
    pub rows: Vec<LiftRow>,
}

/// Upweight, lift and re-enumerate at each threshold.
pub fn lift_sweep(
    mdp: &Dmrmdp,
    base: &Policy,
    c: f64,
    gamma: f64,
    t_grid: &[f64],
) -> Result<LiftReport> {
    let rho0 = enumerate_trajectories(mdp, base)?;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let (rho, info) = upweight_trajectories(mdp, &rho0, c, t, gamma)?;
            let lifted = lift_policy(mdp, &rho, base)?;
            let back = enumerate_trajectories(mdp, &lifted.policy)?;
            let kl = per_state_kl(mdp, &back, &lifted.policy, base)?;
            let chain = chain_rule(mdp, &rho, &rho0)?;
            Ok(LiftRow {
                t,
                mass: info.mass,
                mean_return: rho.mean_return(mdp),
                trajectory_kl: chain.trajectory_kl,
                per_state_sum_kl: kl.sum,
                per_state_average_kl: kl.average,
                mean_return_kl: chain.mean_return_kl,
                chain_rule_residual: chain.residual,
                lift_tv: total_variation(&back, &rho),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LiftReport {
        trajectories: rho0.items.len(),
        base_mean_return: rho0.mean_return(mdp),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeControl {
    pub upweighted: Trajectory,
    pub factor: f64,
    pub lift_tv: f64,
}

/// Upweight a single trajectory that shares its last `(state, action)` with another one.
///
/// Returns `None` when no two trajectories merge (for example in a tree).
pub fn non_markovian_control(
    mdp: &Dmrmdp,
    base: &Policy,
    factor: f64,
) -> Result<Option<NegativeControl>> {
    let rho0 = enumerate_trajectories(mdp, base)?;
    let mut last: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (tr, _) in &rho0.items {
        if let Some(&l) = tr.steps.last() {
            *last.entry(l).or_insert(0) += 1;
        }
    }
    let branching = |s: usize| base.rows[s].iter().filter(|&&p| p > 0.0).count() > 1;
    let Some(pick) = rho0.items.iter().position(|(tr, _)| {
        tr.steps
            .last()
            .is_some_and(|l| last[l] > 1 && branching(l.0))
    }) else {
        return Ok(None);
    };
    let mut items = rho0.items.clone();
    items[pick].1 *= factor;
    let z: f64 = items.iter().map(|x| x.1).sum();
    items.iter_mut().for_each(|x| x.1 /= z);
    let rho = TrajectoryDist { items };
    let lifted = lift_policy(mdp, &rho, base)?;
    let back = enumerate_trajectories(mdp, &lifted.policy)?;
    Ok(Some(NegativeControl {
        upweighted: rho.items[pick].0.clone(),
        factor,
        lift_tv: total_variation(&back, &rho),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Distribution, Pareto};
    use proptest::prelude::*;

    fn binary_tree(depth: usize) -> Dmrmdp {
        // complete binary tree; leaves are sinks with return = leaf index
        let mut states = Vec::new();
        let mut transitions = Vec::new();
        let mut returns = Vec::new();
        let total = (1usize << (depth + 1)) - 1;
        for i in 0..total {
            states.push(format!("n{i}"));
            if 2 * i + 1 < total {
                transitions.push(vec![2 * i + 1, 2 * i + 2]);
                returns.push(None);
            } else {
                transitions.push(vec![]);
                returns.push(Some(vec![((i + 1 - (1 << depth)) as f64, 1.0)]));
            }
        }
        Dmrmdp::new(
            states,
            vec!["l".into(), "r".into()],
            transitions,
            vec![(0, 1.0)],
            returns,
            depth,
        )
        .unwrap()
    }

    fn chain3(depth: usize) -> Dmrmdp {
        // states 0..depth in a line, three actions; action 0 advances, 1 and 2 end in sinks
        let n = depth;
        let mut states: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        states.extend(["stop", "alt", "end"].map(String::from));
        let stop = n;
        let alt = n + 1;
        let end = n + 2;
        let mut transitions: Vec<Vec<usize>> = (0..n)
            .map(|i| vec![if i + 1 < n { i + 1 } else { end }, stop, alt])
            .collect();
        transitions.extend([vec![], vec![], vec![]]);
        let mut returns = vec![None; n];
        returns.extend([
            Some(vec![(0.0, 1.0)]),
            Some(vec![(1.0, 1.0)]),
            Some(vec![(5.0, 1.0)]),
        ]);
        Dmrmdp::new(
            states,
            vec!["go".into(), "stop".into(), "alt".into()],
            transitions,
            vec![(0, 1.0)],
            returns,
            depth,
        )
        .unwrap()
    }

    #[test]
    fn uniform_binary_tree() {
        let m = binary_tree(3);
        let td = enumerate_trajectories(&m, &Policy::uniform(&m)).unwrap();
        assert_eq!(td.items.len(), 8);
        assert!(td.items.iter().all(|x| (x.1 - 0.125).abs() < 1e-15));
    }

    #[test]
    fn deterministic_policy_gives_one_trajectory() {
        let m = binary_tree(3);
        let mut p = Policy::uniform(&m);
        for row in p.rows.iter_mut().filter(|r| !r.is_empty()) {
            *row = vec![0.0, 1.0];
        }
        let td = enumerate_trajectories(&m, &p).unwrap();
        assert_eq!(td.items.len(), 1);
        assert_eq!(td.items[0].1, 1.0);
    }

    #[test]
    fn enumeration_matches_sampling() {
        let m = chain3(4);
        let p = Policy::random(&m, 3);
        let td = enumerate_trajectories(&m, &p).unwrap();
        let n = 1_000_000;
        let counts = sample_trajectories(&m, &p, n, 11);
        assert_eq!(counts.len(), td.items.len());
        for (tr, q) in &td.items {
            let f = counts[tr] as f64 / n as f64;
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((f - q).abs() < 4.0 * se, "{tr:?}: {f} vs {q}");
        }
    }

    #[test]
    fn size_bound() {
        // a ladder where both actions advance: 2^30 paths through 31 states
        let depth = 30;
        let states: Vec<String> = (0..=depth).map(|i| format!("l{i}")).collect();
        let mut transitions: Vec<Vec<usize>> = (0..depth).map(|i| vec![i + 1, i + 1]).collect();
        transitions.push(vec![]);
        let mut returns = vec![None; depth];
        returns.push(Some(vec![(0.0, 1.0)]));
        let m = Dmrmdp::new(
            states,
            vec!["x".into(), "y".into()],
            transitions,
            vec![(0, 1.0)],
            returns,
            depth,
        )
        .unwrap();
        assert_eq!(m.trajectory_count(), 1 << 30);
        let p = Policy::uniform(&m);
        assert!(matches!(
            enumerate_trajectories(&m, &p),
            Err(Error::SizeBound { .. })
        ));
    }

    #[test]
    fn validation_catches_bad_instances() {
        let ok = binary_tree(2);
        let mut cyc = ok.clone();
        cyc.transitions[1] = vec![0, 3];
        assert!(cyc.validate().unwrap_err().to_string().contains("cycle"));
        let mut deep = ok.clone();
        deep.max_depth = 1;
        assert!(deep.validate().is_err());
        let mut start_sink = ok.clone();
        start_sink.start = vec![(3, 1.0)];
        assert!(start_sink.validate().is_err());
        let mut partial = ok.clone();
        partial.transitions[0] = vec![1];
        assert!(partial.validate().is_err());
        let mut p = Policy::uniform(&ok);
        p.rows[0] = vec![0.7, 0.2];
        assert!(p.validate(&ok).is_err());
    }

    #[test]
    fn return_law() {
        let m = binary_tree(1);
        let mut p = Policy::uniform(&m);
        p.rows[0] = vec![0.75, 0.25];
        let td = enumerate_trajectories(&m, &p).unwrap();
        let law = return_distribution(&m, &td).unwrap();
        assert!((law.mean().unwrap() - 0.25).abs() < 1e-15);

        let mut z = binary_tree(2);
        for r in z.returns.iter_mut().flatten() {
            *r = vec![(0.0, 1.0)];
        }
        let law = return_distribution(
            &z,
            &enumerate_trajectories(&z, &Policy::uniform(&z)).unwrap(),
        )
        .unwrap();
        assert_eq!(law.values(), &[0.0]);
    }

    #[test]
    fn pareto_atom_returns_mean() {
        let (mut mdp, pol) = token_chain(3, 5).unwrap();
        let atoms = midpoint_atoms(&Pareto::new(1.5, 1.0).unwrap(), 64);
        assign_ranked_returns(&mut mdp, &pol, &atoms).unwrap();
        let td = enumerate_trajectories(&mdp, &pol).unwrap();
        let direct: f64 = td
            .items
            .iter()
            .map(|(t, p)| p * mdp.returns[t.sink].as_ref().unwrap()[0].0)
            .sum();
        assert!((return_distribution(&mdp, &td).unwrap().mean().unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn two_point_kl() {
        let m = binary_tree(1);
        let mut pp = Policy::uniform(&m);
        let p = enumerate_trajectories(&m, &pp).unwrap();
        pp.rows[0] = vec![0.75, 0.25];
        let q = enumerate_trajectories(&m, &pp).unwrap();
        let expect = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * 2f64.ln();
        assert!((trajectory_kl(&p, &q).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.1438).abs() < 1e-4);
        assert_eq!(trajectory_kl(&p, &p).unwrap(), 0.0);
        pp.rows[0] = vec![1.0, 0.0];
        let r = enumerate_trajectories(&m, &pp).unwrap();
        assert!(matches!(
            trajectory_kl(&p, &r),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn upweight_errors() {
        let (m, p) = six_state_instance();
        let base = enumerate_trajectories(&m, &p).unwrap();
        assert!(matches!(
            upweight_trajectories(&m, &base, 1.0, 20.0, 1.0),
            Err(Error::EmptyUpperTail { .. })
        ));
        assert!(upweight_trajectories(&m, &base, 1.0, 0.5, 1.0).is_err());
        // every g is above 0.4 but t must exceed c, so c=0.1 passes the c check and fails the lower piece
        assert!(upweight_trajectories(&m, &base, 0.1, 0.4, 1.0).is_err());
    }

    #[test]
    fn upweight_two_factors_and_lift_round_trip() {
        let (m, p) = six_state_instance();
        let base = enumerate_trajectories(&m, &p).unwrap();
        assert_eq!(base.items.len(), 8);
        let (rho, info) = upweight_trajectories(&m, &base, 1.0, 5.0, 1.0).unwrap();
        assert!((rho.total() - 1.0).abs() < 1e-14);
        let mut factors: Vec<f64> = rho
            .items
            .iter()
            .zip(&base.items)
            .map(|(a, b)| a.1 / b.1)
            .collect();
        factors.sort_by(f64::total_cmp);
        factors.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(factors.len(), 2);
        assert!(
            (factors[0] - info.lower_factor).abs() < 1e-12
                && (factors[1] - info.upper_factor).abs() < 1e-12
        );

        let lifted = lift_policy(&m, &rho, &p).unwrap();
        let back = enumerate_trajectories(&m, &lifted.policy).unwrap();
        assert!(total_variation(&back, &rho) < 1e-10);

        let chain = chain_rule(&m, &rho, &base).unwrap();
        assert!(chain.residual < 1e-10);
        assert!(chain.conditional_kl.abs() < 1e-12);
        let ps = per_state_kl(&m, &back, &lifted.policy, &p).unwrap();
        assert!((ps.sum - chain.trajectory_kl).abs() < 1e-10);
        assert!(ps.average <= ps.sum + 1e-15);
    }

    #[test]
    fn lift_of_base_is_identity() {
        let (m, p) = six_state_instance();
        let base = enumerate_trajectories(&m, &p).unwrap();
        let lifted = lift_policy(&m, &base, &p).unwrap();
        for (a, b) in lifted.policy.rows.iter().zip(&p.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(lifted.unvisited.is_empty() && lifted.warning(&m).is_none());
    }

    #[test]
    fn unvisited_states_copy_base() {
        let (m, mut p) = six_state_instance();
        p.rows[0] = vec![0.0, 1.0];
        p.rows[2] = vec![1.0, 0.0];
        let rho = enumerate_trajectories(&m, &p).unwrap();
        let lifted = lift_policy(&m, &rho, &p).unwrap();
        assert_eq!(lifted.unvisited, vec![1]);
        assert_eq!(lifted.policy.rows[1], p.rows[1]);
        assert!(lifted.warning(&m).unwrap().contains("s1"));
    }

    #[test]
    fn non_markovian_reweighting_breaks_the_lift() {
        let (m, p) = six_state_instance();
        let ctl = non_markovian_control(&m, &p, 3.0).unwrap().unwrap();
        assert!(ctl.lift_tv > 1e-3, "{ctl:?}");
        let (tree, tp) = token_chain(2, 3).unwrap();
        assert!(non_markovian_control(&tree, &tp, 3.0).unwrap().is_none());
    }

    #[test]
    fn token_chain_end_to_end() {
        let (mut mdp, pol) = token_chain(3, 5).unwrap();
        let atoms = midpoint_atoms(&Pareto::new(1.5, 1.0).unwrap(), 64);
        assign_ranked_returns(&mut mdp, &pol, &atoms).unwrap();
        let rep = lift_sweep(&mdp, &pol, 3.0, 1.0, &[4.0, 8.0, 16.0]).unwrap();
        assert_eq!(rep.trajectories, 364);
        let last = rep.rows.last().unwrap();
        assert!(last.mean_return > 5.0, "{last:?}");
        assert!(last.per_state_average_kl < 0.1);
        for r in &rep.rows {
            assert!(r.lift_tv < 1e-10 && r.chain_rule_residual < 1e-10);
            assert!(r.per_state_average_kl <= r.per_state_sum_kl + 1e-15);
            assert!((r.per_state_sum_kl - r.trajectory_kl).abs() < 1e-10);
            assert!((r.mean_return_kl - r.trajectory_kl).abs() < 1e-10);
        }
    }

    #[test]
    fn percentile_thresholds() {
        // 1024 equally likely leaves carrying pareto(1.5) midpoint quantiles
        let mut mdp = binary_tree(10);
        let atoms = midpoint_atoms(&Pareto::new(1.5, 1.0).unwrap(), 1024);
        for r in mdp.returns.iter_mut().flatten() {
            let i = r[0].0 as usize;
            *r = vec![(atoms[i], 1.0)];
        }
        let pol = Policy::uniform(&mdp);
        let base = enumerate_trajectories(&mdp, &pol).unwrap();
        let law = return_distribution(&mdp, &base).unwrap();
        // the largest return level whose strict upper tail still carries mass
        let level = |q: f64| {
            let v = law.quantile(q);
            let vals = law.values();
            let i = vals.iter().position(|&x| x == v).unwrap();
            if law.tail(v) > 0.0 {
                v
            } else {
                vals[i - 1]
            }
        };
        let (t90, t99) = (level(0.90), level(0.99));
        let at = |t: f64| {
            let (rho, _) = upweight_trajectories(&mdp, &base, 1.0, t, 1.0).unwrap();
            (rho.mean_return(&mdp), trajectory_kl(&rho, &base).unwrap())
        };
        let (m99, k99) = at(t99);
        let (_, k90) = at(t90);
        assert!(m99 >= 1.0 - 1e-9, "{m99}");
        assert!(k99 < k90);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lift_inverts_enumeration(seed in 0u64..10_000) {
            let m = chain3(4);
            let p = Policy::random(&m, seed);
            let td = enumerate_trajectories(&m, &p).unwrap();
            prop_assert!((td.total() - 1.0).abs() < 1e-12);
            let lifted = lift_policy(&m, &td, &p).unwrap();
            for (a, b) in lifted.policy.rows.iter().zip(&p.rows) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn lift_round_trip_any_threshold(seed in 0u64..10_000, t in 1.5f64..11.0) {
            let (m, _) = six_state_instance();
            let p = Policy::random(&m, seed);
            let base = enumerate_trajectories(&m, &p).unwrap();
            if let Ok((rho, _)) = upweight_trajectories(&m, &base, 1.0, t, 1.0) {
                let back = enumerate_trajectories(&m, &lift_policy(&m, &rho, &p).unwrap().policy).unwrap();
                prop_assert!(total_variation(&back, &rho) < 1e-10);
                let chain = chain_rule(&m, &rho, &base).unwrap();
                prop_assert!(chain.residual < 1e-10);
            }
        }
    }
}
