//! Small hand-checkable datasets used across tests, examples and the CLI.

pub mod random;

use crate::data::{Dataset, Transition};

fn step(
    id: &str,
    traj: &str,
    step: usize,
    x: f64,
    r: f64,
    x_next: f64,
    terminal: bool,
) -> Transition {
    Transition {
        id: id.to_string(),
        trajectory_id: traj.to_string(),
        step_index: step,
        state: vec![x],
        action: 0,
        reward: r,
        next_state: vec![x_next],
        behavior_prob: None,
        is_initial: step == 0,
        is_terminal: terminal,
    }
}

/// Three scalar-state transitions in one trajectory: `0 -> 1 -> 2 -> 3`, reward 1 on
/// the last step, which is terminal. Use with radius 0.5, gamma 1 and horizon 3.
pub fn chain3() -> Dataset {
    chain3_with_terminal(true)
}

/// CHAIN3 where the last transition is not terminal, so `x' = 3` is an unvisited
/// state with no neighbors.
pub fn chain3_open() -> Dataset {
    chain3_with_terminal(false)
}

fn chain3_with_terminal(terminal: bool) -> Dataset {
    Dataset::new(vec![
        step("t1", "traj0", 0, 0.0, 0.0, 1.0, false),
        step("t2", "traj0", 1, 1.0, 0.0, 2.0, false),
        step("t3", "traj0", 2, 2.0, 1.0, 3.0, terminal),
    ])
    .expect("chain3 is valid")
}

/// `copies` identical copies of the CHAIN3 trajectory.
pub fn duplicated_chain3(copies: usize) -> Dataset {
    let mut ts = Vec::with_capacity(3 * copies);
    for c in 0..copies {
        let traj = format!("traj{c}");
        ts.push(step(&format!("c{c}t1"), &traj, 0, 0.0, 0.0, 1.0, false));
        ts.push(step(&format!("c{c}t2"), &traj, 1, 1.0, 0.0, 2.0, false));
        ts.push(step(&format!("c{c}t3"), &traj, 2, 2.0, 1.0, 3.0, true));
    }
    Dataset::new(ts).expect("duplicated chain3 is valid")
}

/// A single trajectory of `len` unit steps along the real line, each reward given by
/// `rewards[i]`. Consecutive states are 1 apart, so with a radius below 1 every
/// neighborhood is a singleton.
pub fn line_chain(rewards: &[f64], terminal: bool) -> Dataset {
    let n = rewards.len();
    let ts = rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            step(
                &format!("s{i}"),
                "line",
                i,
                i as f64,
                r,
                (i + 1) as f64,
                terminal && i + 1 == n,
            )
        })
        .collect();
    Dataset::new(ts).expect("line chain is valid")
}
