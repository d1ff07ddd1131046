//! JSON form of an MDP.
//!
//! ```json
//! {
//!   "states": ["s0", "s1", "done"],
//!   "actions": ["left", "right"],
//!   "transitions": { "s0": { "left": "s1", "right": "done" }, "s1": { "left": "done", "right": "done" } },
//!   "start": { "s0": 1.0 },
//!   "sink_returns": { "done": [[0.0, 0.5], [2.0, 0.5]] },
//!   "max_depth": 2,
//!   "base_policy": { "s0": { "left": 0.5, "right": 0.5 } }
//! }
//! ```
//!
//! Every state not listed in `sink_returns` needs a transition for every
//! action. `base_policy` is optional (uniform when absent) and may list a
//! subset of states; missing states get the uniform row.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dmrmdp, Policy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub transitions: BTreeMap<String, BTreeMap<String, String>>,
    pub start: BTreeMap<String, f64>,
    pub sink_returns: BTreeMap<String, Vec<(f64, f64)>>,
    pub max_depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_policy: Option<BTreeMap<String, BTreeMap<String, f64>>>,
}

fn lookup(names: &[String], name: &str, what: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::InvalidMdp(format!("unknown {what} `{name}`")))
}

impl MdpFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_mdp(self) -> Result<(Dmrmdp, Policy)> {
        let n = self.states.len();
        let mut transitions = vec![Vec::new(); n];
        for (s, row) in &self.transitions {
            let si = lookup(&self.states, s, "state")?;
            let mut out = vec![usize::MAX; self.actions.len()];
            for (a, dst) in row {
                out[lookup(&self.actions, a, "action")?] = lookup(&self.states, dst, "state")?;
            }
            if let Some(missing) = out.iter().position(|&d| d == usize::MAX) {
                return Err(Error::InvalidMdp(format!(
                    "state `{s}` has no transition for action `{}`",
                    self.actions[missing]
                )));
            }
            transitions[si] = out;
        }
        let mut returns = vec![None; n];
        for (s, atoms) in &self.sink_returns {
            returns[lookup(&self.states, s, "sink")?] = Some(atoms.clone());
        }
        let start = self
            .start
            .iter()
            .map(|(s, &p)| Ok((lookup(&self.states, s, "start state")?, p)))
            .collect::<Result<Vec<_>>>()?;
        let mdp = Dmrmdp::new(
            self.states.clone(),
            self.actions.clone(),
            transitions,
            start,
            returns,
            self.max_depth,
        )?;
        let mut policy = Policy::uniform(&mdp);
        if let Some(rows) = &self.base_policy {
            for (s, row) in rows {
                let si = lookup(&self.states, s, "policy state")?;
                let mut probs = vec![0.0; self.actions.len()];
                for (a, &p) in row {
                    probs[lookup(&self.actions, a, "policy action")?] = p;
                }
                policy.rows[si] = probs;
            }
            policy.validate(&mdp)?;
        }
        Ok((mdp, policy))
    }

    pub fn from_mdp(mdp: &Dmrmdp, policy: Option<&Policy>) -> Self {
        let mut transitions = BTreeMap::new();
        let mut sink_returns = BTreeMap::new();
        for s in 0..mdp.states.len() {
            if let Some(atoms) = &mdp.returns[s] {
                sink_returns.insert(mdp.states[s].clone(), atoms.clone());
            } else {
                let row = mdp.transitions[s]
                    .iter()
                    .enumerate()
                    .map(|(a, &d)| (mdp.actions[a].clone(), mdp.states[d].clone()))
                    .collect();
                transitions.insert(mdp.states[s].clone(), row);
            }
        }
        let base_policy = policy.map(|p| {
            (0..mdp.states.len())
                .filter(|&s| !mdp.is_sink(s))
                .map(|s| {
                    let row = p.rows[s]
                        .iter()
                        .enumerate()
                        .map(|(a, &q)| (mdp.actions[a].clone(), q))
                        .collect();
                    (mdp.states[s].clone(), row)
                })
                .collect()
        });
        MdpFile {
            states: mdp.states.clone(),
            actions: mdp.actions.clone(),
            transitions,
            start: mdp
                .start
                .iter()
                .map(|&(s, p)| (mdp.states[s].clone(), p))
                .collect(),
            sink_returns,
            max_depth: mdp.max_depth,
            base_policy,
        }
    }
}
