use metaexp::envs::*;
use metaexp::rng;
use rand::Rng;

const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;

fn krazy_task(seed: u64) -> TaskSpec {
    TaskSpec {
        family: Family::Krazy,
        layout_seed: seed,
        palette_perm: IDENTITY_PALETTE,
        dynamics_perm: IDENTITY_DYNAMICS,
        horizon: 64,
    }
}

fn world(text: &str, energy: u32) -> KrazyWorld {
    let grid = GridState::from_text(text, energy).unwrap();
    KrazyWorld::from_state(krazy_task(0), KrazyConfig::default(), grid)
}

#[test]
fn goal_rewards_once_and_does_not_terminate() {
    let mut w = world("AG.\n...\n", 10);
    let s = w.step(RIGHT).unwrap();
    assert_eq!((s.reward, s.done), (1.0, false));
    w.step(RIGHT).unwrap();
    let back = w.step(LEFT).unwrap();
    assert_eq!(back.reward, 0.0, "a collected goal pays only once");
    assert_eq!(back.info.goals_reached, 1);
}

#[test]
fn death_terminates_with_zero_reward() {
    let mut w = world("AD\n..\n", 10);
    let s = w.step(RIGHT).unwrap();
    assert_eq!((s.reward, s.done, s.info.deaths), (0.0, true, 1));
    assert_eq!(w.step(LEFT), Err(EnvError::StepAfterDone));
}

#[test]
fn wall_blocks_without_spending_energy() {
    let mut w = world("A#\n..\n", 3);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (0, 0));
    assert_eq!(w.state().energy, 3);
    w.step(UP).unwrap();
    assert_eq!(w.state().agent, (0, 0), "board edge blocks too");
}

#[test]
fn ice_slides_to_next_non_ice_cell() {
    let text = ".....\n.....\nAI...\n.....\n.....\n";
    let mut w = world(text, 10);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (2, 2));
    assert_eq!(w.state().energy, 9);
}

#[test]
fn ice_chain_stops_before_wall() {
    let mut w = world("AII#\n....\n", 10);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (2, 0));
}

#[test]
fn lock_needs_key() {
    let mut w = world("AL.\nK..\n", 10);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (0, 0), "locked without key");
    w.step(DOWN).unwrap();
    assert!(w.state().keys_held.contains(&0));
    w.step(UP).unwrap();
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (1, 0), "lock opens with key");
}

#[test]
fn teleporter_moves_to_partner() {
    let mut w = world("AT..\n...T\n", 10);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().agent, (3, 1));
}

#[test]
fn no_energy_means_no_movement() {
    let mut w = world("A..\n...\n", 0);
    for a in 0..4 {
        let s = w.step(a).unwrap();
        assert_eq!(s.reward, 0.0);
        assert_eq!(w.state().agent, (0, 0));
    }
}

#[test]
fn energy_square_refills_once() {
    let mut w = world("AE.\n...\n", 1);
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().energy, 8);
    w.step(LEFT).unwrap();
    w.step(RIGHT).unwrap();
    assert_eq!(w.state().energy, 6);
}

#[test]
fn standing_still_touches_one_class() {
    let mut w = world("A#\n##\n", 10);
    let s = w.step(UP).unwrap();
    assert_eq!(s.info.touched.count_ones(), 1);
    let s = w.step(RIGHT).unwrap();
    assert_eq!(s.info.touched.count_ones(), 2, "bumping a wall touches it");
}

fn rollout(task: &TaskSpec, actions: &[usize]) -> Vec<(GridState, StepResult)> {
    let cfg = KrazyConfig::default();
    let mut w = KrazyWorld::new(task.clone(), cfg).unwrap();
    w.reset(&mut rng::seeded(4));
    let mut out = Vec::new();
    for &a in actions {
        let s = w.step(a).unwrap();
        let done = s.done;
        out.push((w.state().clone(), s));
        if done {
            break;
        }
    }
    out
}

fn random_actions(seed: u64, n: usize) -> Vec<usize> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| r.random_range(0..4)).collect()
}

#[test]
fn same_task_and_actions_are_bit_identical() {
    let task = sample_task(Family::Krazy, &EnvConfig::default(), &mut rng::seeded(8));
    let actions = random_actions(1, 64);
    assert_eq!(rollout(&task, &actions), rollout(&task, &actions));
}

#[test]
fn dynamics_permutation_is_action_relabeling() {
    let cfg = EnvConfig::default();
    for seed in 0..20 {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let identity = TaskSpec { dynamics_perm: IDENTITY_DYNAMICS, ..task.clone() };
        let actions = random_actions(seed + 100, 64);
        let mapped: Vec<usize> = actions.iter().map(|&a| task.dynamics_perm[a]).collect();
        let a = rollout(&task, &actions);
        let b = rollout(&identity, &mapped);
        assert_eq!(a.len(), b.len());
        for ((sa, ra), (sb, rb)) in a.iter().zip(&b) {
            assert_eq!(sa, sb);
            assert_eq!(ra.reward, rb.reward);
        }
    }
}

#[test]
fn palette_permutation_relabels_channels() {
    let cfg = EnvConfig::default();
    for seed in 0..20 {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let identity = TaskSpec { palette_perm: IDENTITY_PALETTE, ..task.clone() };
        let actions = random_actions(seed, 32);
        for ((_, p), (_, q)) in rollout(&task, &actions).iter().zip(&rollout(&identity, &actions)) {
            for (pb, qb) in p.obs.data.chunks(CHANNELS).zip(q.obs.data.chunks(CHANNELS)) {
                for c in 0..8 {
                    assert_eq!(pb[task.palette_perm[c]], qb[c]);
                }
                assert_eq!(pb[AGENT_CHANNEL], qb[AGENT_CHANNEL]);
            }
        }
    }
}

#[test]
fn palette_inverse_restores_encoding() {
    let task = sample_task(Family::Krazy, &EnvConfig::default(), &mut rng::seeded(2));
    let mut w = KrazyWorld::new(task.clone(), KrazyConfig::default()).unwrap();
    w.reset(&mut rng::seeded(0));
    let grid = w.state().clone();
    let p = task.palette_perm;
    let mut inv = [0; 8];
    for c in 0..8 {
        inv[p[c]] = c;
    }
    let plain = encode_observation(&grid, ObsMode::Global, &IDENTITY_PALETTE);
    let permuted = encode_observation(&grid, ObsMode::Global, &p);
    let mut restored = permuted.data.clone();
    for (block, src) in restored.chunks_mut(CHANNELS).zip(permuted.data.chunks(CHANNELS)) {
        for c in 0..8 {
            block[inv[c]] = src[c];
        }
    }
    assert_eq!(restored, plain.data);
}

#[test]
fn krazy_reward_never_exceeds_goal_count() {
    let cfg = EnvConfig::default();
    for seed in 0..200 {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let total: f64 = rollout(&task, &random_actions(seed, 64)).iter().map(|(_, s)| s.reward).sum();
        assert!(total <= cfg.krazy.goals as f64);
    }
}

#[test]
fn maze_goal_reachable_from_every_start() {
    use std::collections::VecDeque;
    for seed in 0..100 {
        let g = maze_generate(seed, 20);
        let goal = g.cells_of(Tile::Goal)[0];
        let mut seen = vec![false; g.tiles.len()];
        seen[goal] = true;
        let mut q = VecDeque::from([goal]);
        while let Some(i) = q.pop_front() {
            let p = (i % g.width, i / g.width);
            for d in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                if let Some((x, y)) = g.offset(p, d) {
                    let j = g.index(x, y);
                    if g.tiles[j] != Tile::Wall && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        for i in g.cells_of(Tile::Normal) {
            assert!(seen[i], "seed {seed}: cell {i} cut off from goal");
        }
    }
}

#[test]
fn maze_wall_bump_costs_penalty() {
    let task = TaskSpec {
        family: Family::Maze,
        layout_seed: 3,
        palette_perm: IDENTITY_PALETTE,
        dynamics_perm: IDENTITY_DYNAMICS,
        horizon: 200,
    };
    let mut env = MazeEnv::new(task, MazeConfig::default());
    let mut r = rng::seeded(0);
    for _ in 0..10 {
        env.reset(&mut r);
        assert_ne!(env.state().tile(env.state().agent.0, env.state().agent.1), Tile::Goal);
        let start = env.state().agent;
        // Four-way junctions have no wall neighbour and are skipped.
        for a in 0..4 {
            let d = [(0, -1), (0, 1), (-1, 0), (1, 0)][a];
            let (x, y) = env.state().offset(start, d).unwrap();
            if env.state().tile(x, y) == Tile::Wall {
                let s = env.step(a).unwrap();
                assert_eq!(s.reward, -0.01);
                assert_eq!(env.state().agent, start);
                break;
            }
        }
    }
}

#[test]
fn pointmass_reaches_corner() {
    let task = TaskSpec {
        family: Family::Pointmass,
        layout_seed: 0,
        palette_perm: IDENTITY_PALETTE,
        dynamics_perm: IDENTITY_DYNAMICS,
        horizon: 32,
    };
    let mut pm = PointMass::new(task);
    assert_eq!(pm.reset().data, vec![0.0, 0.0]);
    assert_eq!(pm.corner(), (1.0, 1.0));
    pm.set_position(0.8, 0.8);
    let s = pm.step(UP).unwrap();
    assert_eq!((s.reward, s.done), (0.0, false));
    let s = pm.step(RIGHT).unwrap();
    assert_eq!((s.reward, s.done), (1.0, true));
}

#[test]
fn pointmass_wrong_corner_pays_nothing() {
    let task = TaskSpec {
        family: Family::Pointmass,
        layout_seed: 2,
        palette_perm: IDENTITY_PALETTE,
        dynamics_perm: IDENTITY_DYNAMICS,
        horizon: 32,
    };
    let mut pm = PointMass::new(task);
    pm.reset();
    pm.set_position(1.0, 0.9);
    let s = pm.step(UP).unwrap();
    assert_eq!((s.reward, s.done), (0.0, false));
    assert_eq!(pm.position(), (1.0, 1.0));
}
