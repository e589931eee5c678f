//! The Q-agent on a problem small enough to solve exactly: a five-state
//! chain where walking right is always optimal. After a few thousand
//! updates the learned values sit within a few hundredths of the value-
//! iteration solution and the greedy policy is optimal everywhere.
//!
//!     cargo run --example chain_mdp

use issm::agent::{AgentHyper, NetKind, QAgent, Transition};
use issm::error::Result;
use issm::featurize::{ActionFeatures, AgentState};

const GAMMA: f64 = 0.9;
const LEFT: usize = 0;
const RIGHT: usize = 1;

/// States 0..=3 are live, state 4 absorbs. Right moves toward 4 (reward 1
/// on arrival), left moves back (never rewarded).
fn next_state(state: usize, action: usize) -> usize {
    match action {
        LEFT => state.saturating_sub(1),
        _ => state + 1,
    }
}

fn encode_state(state: usize) -> AgentState {
    AgentState { mmd_hyp: state as f64 / 4.0, budget_ratio: 0.0 }
}

fn encode_action(action: usize) -> ActionFeatures {
    ActionFeatures {
        candidate_id: action,
        mi_hyp: action as f64,
        hist_hyp: if action == LEFT { vec![1.0, 0.0] } else { vec![0.0, 1.0] },
    }
}

fn all_transitions() -> Vec<Transition> {
    let mut batch = Vec::new();
    for state in 0..4 {
        for action in [LEFT, RIGHT] {
            let next = next_state(state, action);
            let terminal = next == 4;
            batch.push(Transition {
                state: encode_state(state),
                action: encode_action(action),
                reward: if terminal { 1.0 } else { 0.0 },
                next_state: encode_state(next),
                next_candidates: if terminal {
                    Vec::new()
                } else {
                    vec![encode_action(LEFT), encode_action(RIGHT)]
                },
                terminal,
            });
        }
    }
    batch
}

/// Exact Q* by value iteration on the tabular problem.
fn value_iteration() -> [[f64; 2]; 4] {
    let mut q = [[0.0f64; 2]; 4];
    for _ in 0..200 {
        let mut next_q = q;
        for (state, row) in next_q.iter_mut().enumerate() {
            for action in [LEFT, RIGHT] {
                let next = next_state(state, action);
                let reward = if next == 4 { 1.0 } else { 0.0 };
                let future = if next == 4 {
                    0.0
                } else {
                    q[next][LEFT].max(q[next][RIGHT])
                };
                row[action] = reward + GAMMA * future;
            }
        }
        q = next_q;
    }
    q
}

fn main() -> Result<()> {
    let hyper = AgentHyper {
        gamma: GAMMA,
        learning_rate: 1e-3,
        n_bins: 2,
        ..AgentHyper::default()
    };
    let mut agent = QAgent::new(hyper, 7)?;
    let batch = all_transitions();

    let mut loss = f64::NAN;
    for _ in 0..3000 {
        loss = agent.td_update(&batch)?;
    }
    println!("TD loss after {} updates: {loss:.2e}\n", agent.updates());

    let optimal = value_iteration();
    println!(
        "{:>5} {:>9} {:>9} {:>9} {:>9}  greedy",
        "state", "Q(left)", "Q*(left)", "Q(right)", "Q*(right)"
    );
    let mut worst = 0.0f64;
    for state in 0..4 {
        let s = encode_state(state);
        let q_l = agent.q_value(&s, &encode_action(LEFT), NetKind::Online)?;
        let q_r = agent.q_value(&s, &encode_action(RIGHT), NetKind::Online)?;
        worst = worst
            .max((q_l - optimal[state][LEFT]).abs())
            .max((q_r - optimal[state][RIGHT]).abs());
        let greedy = if q_r >= q_l { "right" } else { "left" };
        println!(
            "{state:>5} {q_l:>9.4} {:>9.4} {q_r:>9.4} {:>9.4}  {greedy}",
            optimal[state][LEFT],
            optimal[state][RIGHT]
        );
        assert_eq!(greedy, "right", "learned policy is suboptimal at {state}");
    }
    println!("\nmax |Q − Q*| = {worst:.4}");
    assert!(worst <= 0.05, "learned values drifted from the oracle");
    Ok(())
}
