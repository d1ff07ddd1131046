//! Ready-made instances: the token chain and a small DAG with merging paths.

use std::cmp::Ordering;

use super::{enumerate_trajectories, Dmrmdp, Policy};
use crate::distributions::Distribution;
use crate::error::Result;

pub const EOS: &str = "$";

/// Autoregressive generation: states are token prefixes, `EOS` or reaching `max_len` ends the string.
///
/// Every sink starts with return 0; use [`assign_ranked_returns`] to attach values.
pub fn token_chain(alphabet: usize, max_len: usize) -> Result<(Dmrmdp, Policy)> {
    let tokens: Vec<String> = (0..alphabet)
        .map(|i| {
            char::from_u32('a' as u32 + i as u32)
                .map(String::from)
                .unwrap_or_else(|| format!("t{i}"))
        })
        .collect();
    let mut actions = tokens.clone();
    actions.push(EOS.to_string());

    let mut states = vec!["^".to_string()];
    let mut transitions: Vec<Vec<usize>> = vec![Vec::new()];
    let mut returns: Vec<Option<Vec<(f64, f64)>>> = vec![None];
    let mut frontier = vec![(0usize, 0usize)];
    while let Some((s, len)) = frontier.pop() {
        let mut row = Vec::with_capacity(actions.len());
        for a in &actions {
            let name = format!("{}{a}", states[s]);
            let id = states.len();
            states.push(name);
            transitions.push(Vec::new());
            let sink = a == EOS || len + 1 == max_len;
            returns.push(sink.then(|| vec![(0.0, 1.0)]));
            if !sink {
                frontier.push((id, len + 1));
            }
            row.push(id);
        }
        transitions[s] = row;
    }
    let mdp = Dmrmdp::new(
        states,
        actions,
        transitions,
        vec![(0, 1.0)],
        returns,
        max_len,
    )?;
    let pol = Policy::uniform(&mdp);
    Ok((mdp, pol))
}

/// `n` equal-mass atoms at the midpoints `quantile((j + 1/2)/n)`.
pub fn midpoint_atoms(d: &dyn Distribution, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| d.quantile((j as f64 + 0.5) / n as f64))
        .collect()
}

/// Give each sink a point-mass return so the base return law tracks `atoms`.
///
/// Sinks are ordered by decreasing base probability (ties by name); a sink
/// whose cumulative-mass midpoint is `u` gets `atoms[floor(u·n)]`, so the
/// rarest strings carry the largest returns.
pub fn assign_ranked_returns(mdp: &mut Dmrmdp, base: &Policy, atoms: &[f64]) -> Result<()> {
    let td = enumerate_trajectories(mdp, base)?;
    let mut mass = vec![0.0; mdp.states.len()];
    for (tr, p) in &td.items {
        mass[tr.sink] += p;
    }
    let mut sinks: Vec<usize> = (0..mdp.states.len()).filter(|&s| mdp.is_sink(s)).collect();
    sinks.sort_by(
        |&a, &b| match mass[b].partial_cmp(&mass[a]).unwrap_or(Ordering::Equal) {
            Ordering::Equal => mdp.states[a].cmp(&mdp.states[b]),
            o => o,
        },
    );
    let mut sorted = atoms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cum = 0.0;
    for s in sinks {
        let mid = cum + 0.5 * mass[s];
        cum += mass[s];
        let j = ((mid * n as f64).floor() as usize).min(n - 1);
        mdp.returns[s] = Some(vec![(sorted[j], 1.0)]);
    }
    Ok(())
}

/// Six states, two actions, paths of length up to four that merge before the sinks.
///
/// `s0 → {s1, s2}`, `s1 → {s2, s3}`, `s2 → {s3, s4}`, `s3 → {s4, s5}`; `s4` and `s5` are sinks.
pub fn six_state_instance() -> (Dmrmdp, Policy) {
    let states = (0..6).map(|i| format!("s{i}")).collect();
    let actions = vec!["a".to_string(), "b".to_string()];
    let transitions = vec![
        vec![1, 2],
        vec![2, 3],
        vec![3, 4],
        vec![4, 5],
        vec![],
        vec![],
    ];
    let returns = vec![
        None,
        None,
        None,
        None,
        Some(vec![(0.0, 0.5), (1.0, 0.5)]),
        Some(vec![(4.0, 0.25), (12.0, 0.75)]),
    ];
    let mdp = Dmrmdp::new(states, actions, transitions, vec![(0, 1.0)], returns, 4)
        .expect("valid instance");
    let pol = Policy {
        rows: vec![
            vec![0.6, 0.4],
            vec![0.7, 0.3],
            vec![0.5, 0.5],
            vec![0.8, 0.2],
            vec![],
            vec![],
        ],
    };
    pol.validate(&mdp).expect("valid policy");
    (mdp, pol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Pareto;

    #[test]
    fn token_chain_shape() {
        let (mdp, pol) = token_chain(3, 5).unwrap();
        let td = enumerate_trajectories(&mdp, &pol).unwrap();
        assert_eq!(td.items.len(), 364);
        assert_eq!(
            (0..mdp.states.len()).filter(|&s| mdp.is_sink(s)).count(),
            364
        );
        let total: f64 = td.items.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranked_returns_track_atoms() {
        let (mut mdp, pol) = token_chain(3, 5).unwrap();
        let p = Pareto::new(1.5, 1.0).unwrap();
        let atoms = midpoint_atoms(&p, 64);
        assign_ranked_returns(&mut mdp, &pol, &atoms).unwrap();
        let td = enumerate_trajectories(&mdp, &pol).unwrap();
        let direct: f64 = td
            .items
            .iter()
            .map(|(t, q)| q * mdp.mean_return(t.sink))
            .sum();
        let law = super::super::return_distribution(&mdp, &td).unwrap();
        assert!((law.mean().unwrap() - direct).abs() < 1e-12);
        assert_eq!(
            mdp.mean_return(mdp.states.iter().position(|s| s == "^$").unwrap()),
            atoms[8]
        );
        assert!((direct - atoms.iter().sum::<f64>() / 64.0).abs() < 0.5);
    }
}
