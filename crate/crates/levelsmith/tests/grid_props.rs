//! Property tests for the episode simulator.

use levelsmith::grid::{
    max_steps, observe, Action, GridEnv, Heading, LevelParams, Outcome, TileType,
};
use proptest::prelude::*;

/// Random well-formed level: arbitrary Empty/Wall/Moss/Lava fill with one
/// Start and one Goal at distinct cells.
fn arb_level() -> impl Strategy<Value = LevelParams> {
    (3usize..8, 3usize..8)
        .prop_flat_map(|(w, h)| {
            let cells = prop::collection::vec(0u8..4, w * h);
            let picks = (0usize..w * h, 0usize..w * h);
            (Just(w), Just(h), cells, picks)
        })
        .prop_filter_map("start and goal collide", |(w, h, cells, (s, g))| {
            if s == g {
                return None;
            }
            let mut grid: Vec<TileType> = cells
                .into_iter()
                .map(|c| TileType::from_code(c).unwrap())
                .collect();
            grid[s] = TileType::Start;
            grid[g] = TileType::Goal;
            Some(LevelParams::new("prop", w, h, grid))
        })
}

fn arb_actions() -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec(
        prop_oneof![
            Just(Action::TurnLeft),
            Just(Action::TurnRight),
            Just(Action::Forward)
        ],
        1..200,
    )
}

fn run_episode(level: &LevelParams, seed: u64, actions: &[Action]) -> Vec<(Vec<f64>, f64, bool)> {
    let (mut env, obs) = GridEnv::reset(level, seed).unwrap();
    let mut trace = vec![(obs.encode(), 0.0, false)];
    for &a in actions {
        if env.state().done {
            break;
        }
        let r = env.step(a).unwrap();
        trace.push((r.obs.encode(), r.reward, r.done));
    }
    trace
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn deterministic_under_replay(level in arb_level(), seed in 0u64..1000, actions in arb_actions()) {
        let a = run_episode(&level, seed, &actions);
        let b = run_episode(&level, seed, &actions);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rewards_bounded_and_single_payout(level in arb_level(), seed in 0u64..1000, actions in arb_actions()) {
        let trace = run_episode(&level, seed, &actions);
        let mut nonzero = 0;
        for (_, r, _) in &trace {
            prop_assert!((0.0..=1.0).contains(r));
            if *r > 0.0 {
                nonzero += 1;
            }
        }
        prop_assert!(nonzero <= 1);
    }

    #[test]
    fn episodes_respect_step_limit(level in arb_level(), seed in 0u64..1000) {
        let t_max = max_steps(&level);
        let (mut env, _) = GridEnv::reset(&level, seed).unwrap();
        let mut steps = 0u32;
        while !env.state().done {
            env.step(Action::Forward).unwrap();
            steps += 1;
            prop_assert!(steps <= t_max);
        }
        prop_assert!(env.state().t <= t_max);
    }

    #[test]
    fn observation_ignores_tiles_outside_window(
        level in arb_level(),
        heading_idx in 0usize..4,
        cell in (0usize..64, 0usize..64),
        new_tile in 0u8..4,
    ) {
        let start = level.start_pos().unwrap();
        let heading = Heading::ALL[heading_idx];
        let before = observe(&level, start, heading);

        let (r, c) = (cell.0 % level.height, cell.1 % level.width);
        // Skip cells the 5×5 window covers: positions within 4 ahead / 2 lateral.
        let ahead = heading.delta();
        let right = heading.right().delta();
        let (dr, dc) = (r as i64 - start.0 as i64, c as i64 - start.1 as i64);
        let a = dr * ahead.0 + dc * ahead.1;
        let l = dr * right.0 + dc * right.1;
        prop_assume!(!((0..=4).contains(&a) && (-2..=2).contains(&l)));
        prop_assume!(level.tile(r as i64, c as i64) != TileType::Start);
        prop_assume!(level.tile(r as i64, c as i64) != TileType::Goal);

        let mut edited = level.clone();
        edited.set_tile(r, c, TileType::from_code(new_tile).unwrap());
        let after = observe(&edited, start, heading);
        prop_assert_eq!(before, after);
    }

    #[test]
    fn lava_entry_never_moves_agent(level in arb_level(), seed in 0u64..100, actions in arb_actions()) {
        let (mut env, _) = GridEnv::reset(&level, seed).unwrap();
        for &a in &actions {
            if env.state().done {
                break;
            }
            env.step(a).unwrap();
            let (r, c) = env.state().agent_pos;
            prop_assert!(level.tile(r as i64, c as i64).navigable());
        }
        if env.state().done && env.state().outcome == Outcome::Success {
            let (r, c) = env.state().agent_pos;
            prop_assert_eq!(level.tile(r as i64, c as i64), TileType::Goal);
        }
    }
}
