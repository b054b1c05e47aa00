//! JSON and JSON-lines persistence for models, policies and trajectories.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{Policy, RewardFamily, TabularMdp};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FamilySpec {
    Uniform(RewardFamily),
    PerCell(Vec<Vec<Vec<RewardFamily>>>),
}

#[derive(Serialize, Deserialize)]
struct MdpDoc {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    initial_state: usize,
    #[serde(rename = "P")]
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "r")]
    rewards: Vec<Vec<Vec<f64>>>,
    reward_family: FamilySpec,
}

fn flatten3<X: Copy>(nested: &[Vec<Vec<X>>], dims: [usize; 3], what: &'static str) -> Result<Vec<X>> {
    check_dim(what, dims[0], nested.len())?;
    let mut out = Vec::with_capacity(dims.iter().product());
    for outer in nested {
        check_dim(what, dims[1], outer.len())?;
        for inner in outer {
            check_dim(what, dims[2], inner.len())?;
            out.extend_from_slice(inner);
        }
    }
    Ok(out)
}

fn nest3<X: Copy>(flat: &[X], dims: [usize; 3]) -> Vec<Vec<Vec<X>>> {
    flat.chunks(dims[1] * dims[2])
        .map(|block| block.chunks(dims[2]).map(<[X]>::to_vec).collect())
        .collect()
}

pub fn mdp_from_json(text: &str) -> Result<TabularMdp<f64>> {
    let doc: MdpDoc = serde_json::from_str(text)?;
    let (s_n, a_n, h_n) = (doc.num_states, doc.num_actions, doc.horizon);
    check_dim("P steps", h_n, doc.transitions.len())?;
    let mut transitions = Vec::with_capacity(h_n * s_n * a_n * s_n);
    for step in &doc.transitions {
        transitions.extend(flatten3(step, [s_n, a_n, s_n], "P entries")?);
    }
    let rewards = flatten3(&doc.rewards, [h_n, s_n, a_n], "r entries")?;
    let families = match doc.reward_family {
        FamilySpec::Uniform(f) => vec![f; h_n * s_n * a_n],
        FamilySpec::PerCell(cells) => flatten3(&cells, [h_n, s_n, a_n], "reward_family entries")?,
    };
    TabularMdp::new(s_n, a_n, h_n, doc.initial_state, transitions, rewards, families)
}

pub fn mdp_to_json(mdp: &TabularMdp<f64>) -> Result<String> {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let families = mdp.families_raw();
    let reward_family = if families.iter().all(|&f| f == families[0]) {
        FamilySpec::Uniform(families[0])
    } else {
        FamilySpec::PerCell(nest3(families, [h_n, s_n, a_n]))
    };
    let doc = MdpDoc {
        num_states: s_n,
        num_actions: a_n,
        horizon: h_n,
        initial_state: mdp.initial_state(),
        transitions: mdp
            .transitions_raw()
            .chunks(s_n * a_n * s_n)
            .map(|step| nest3(step, [s_n, a_n, s_n]))
            .collect(),
        rewards: nest3(mdp.rewards_raw(), [h_n, s_n, a_n]),
        reward_family,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "rules")]
enum PolicyDoc {
    #[serde(rename = "det", alias = "deterministic")]
    Deterministic(Vec<Vec<usize>>),
    #[serde(rename = "stochastic", alias = "stoch")]
    Stochastic(Vec<Vec<Vec<f64>>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyFile {
    Many(Vec<PolicyDoc>),
    One(PolicyDoc),
}

fn policy_from_doc(doc: PolicyDoc, num_states: usize, num_actions: usize) -> Result<Policy<f64>> {
    match doc {
        PolicyDoc::Deterministic(rules) => {
            let horizon = rules.len();
            for row in &rules {
                check_dim("policy states", num_states, row.len())?;
            }
            Policy::deterministic(num_states, num_actions, horizon, rules.concat())
        }
        PolicyDoc::Stochastic(rules) => {
            let horizon = rules.len();
            let flat = flatten3(&rules, [horizon, num_states, num_actions], "policy rules")?;
            Policy::stochastic(num_states, num_actions, horizon, flat)
        }
    }
}

/// Parses one policy object or an array of them. `S` and `A` come from the
/// model the policies act on; the horizon is read from the rule table.
pub fn policies_from_json(text: &str, num_states: usize, num_actions: usize) -> Result<Vec<Policy<f64>>> {
    let docs = match serde_json::from_str::<PolicyFile>(text)? {
        PolicyFile::Many(docs) => docs,
        PolicyFile::One(doc) => vec![doc],
    };
    docs.into_iter()
        .map(|d| policy_from_doc(d, num_states, num_actions))
        .collect()
}

fn policy_to_doc(policy: &Policy<f64>) -> PolicyDoc {
    let (s_n, a_n) = (policy.num_states(), policy.num_actions());
    match policy.actions() {
        Some(actions) => PolicyDoc::Deterministic(actions.chunks(s_n).map(<[usize]>::to_vec).collect()),
        None => PolicyDoc::Stochastic(nest3(policy.probs_raw(), [policy.horizon(), s_n, a_n])),
    }
}

pub fn policy_to_value(policy: &Policy<f64>) -> serde_json::Value {
    serde_json::to_value(policy_to_doc(policy)).expect("policy documents always serialise")
}

pub fn policies_to_json(policies: &[Policy<f64>]) -> Result<String> {
    let docs: Vec<PolicyDoc> = policies.iter().map(policy_to_doc).collect();
    Ok(serde_json::to_string_pretty(&docs)?)
}

/// One logged episode: `(s, a, r, s_next)` per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub policy: String,
    pub steps: Vec<(usize, usize, f64, usize)>,
}

pub fn read_trajectories(reader: impl BufRead) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_trajectories(mut writer: impl Write, records: &[TrajectoryRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{figure1_m, random_mdp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mdp_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp(&mut rng, 3, 2, 3).unwrap();
        let back = mdp_from_json(&mdp_to_json(&mdp).unwrap()).unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn reads_string_family_and_policy_forms() {
        let text =
            r#"{"S":1,"A":2,"H":1,"initial_state":0,"P":[[[[1.0],[1.0]]]],"r":[[[0.5,1.0]]],"reward_family":"point"}"#;
        let mdp = mdp_from_json(text).unwrap();
        assert_eq!(mdp.family(0, 0, 1), RewardFamily::Point);
        let one = policies_from_json(r#"{"kind":"det","rules":[[1]]}"#, 1, 2).unwrap();
        assert_eq!(one[0].action(0, 0), Some(1));
        let many = policies_from_json(
            r#"[{"kind":"det","rules":[[0]]},{"kind":"stochastic","rules":[[[0.5,0.5]]]}]"#,
            1,
            2,
        )
        .unwrap();
        assert_eq!(many.len(), 2);
        assert!(!many[1].is_deterministic());
    }

    #[test]
    fn policy_round_trip() {
        let (_, pis) = figure1_m::<f64>(0.1, false).unwrap();
        let text = policies_to_json(&pis).unwrap();
        assert_eq!(policies_from_json(&text, 4, 3).unwrap(), pis);
    }

    #[test]
    fn rejects_ragged_tables() {
        let text = r#"{"S":2,"A":1,"H":1,"initial_state":0,"P":[[[[1.0,0.0]],[[1.0]]]],"r":[[[0.0],[0.0]]],"reward_family":"point"}"#;
        assert!(matches!(mdp_from_json(text), Err(Error::Dimension { .. })));
    }

    #[test]
    fn trajectories_round_trip() {
        let recs = vec![TrajectoryRecord {
            policy: "ref".into(),
            steps: vec![(0, 1, 0.25, 2), (2, 0, 1.0, 2)],
        }];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &recs).unwrap();
        assert_eq!(read_trajectories(&buf[..]).unwrap(), recs);
    }
}
