//! Environment checks that can run outside the test harness.

use std::collections::VecDeque;

use rand::Rng;

use super::Check;
use crate::envs::{
    maze_generate, sample_task, Env, EnvConfig, Family, GridState, KrazyConfig, KrazyWorld, TaskSpec, Tile,
    AGENT_CHANNEL, CHANNELS, IDENTITY_DYNAMICS, IDENTITY_PALETTE,
};
use crate::rng;

/// Mean return of a uniformly random policy on default Krazy World, one
/// freshly sampled task per episode.
pub fn random_agent_return(episodes: usize, seed: u64) -> f64 {
    let cfg = EnvConfig::default();
    let mut total = 0.0;
    for e in 0..episodes {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::stream(&[seed, e as u64, 0]));
        let mut env = Env::new(&task, &cfg).expect("default layout generates");
        let mut r = rng::stream(&[seed, e as u64, 1]);
        env.reset(&mut r);
        for _ in 0..task.horizon {
            let s = env.step(r.random_range(0..4)).expect("valid action");
            total += s.reward;
            if s.done {
                break;
            }
        }
    }
    total / episodes as f64
}

/// Every open maze cell can reach the goal.
pub fn maze_connected(seed: u64, size: usize) -> bool {
    let g = maze_generate(seed, size);
    let Some(&goal) = g.cells_of(Tile::Goal).first() else { return false };
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
    g.cells_of(Tile::Normal).iter().all(|&i| seen[i])
}

fn krazy_states(task: &TaskSpec, actions: &[usize]) -> Vec<(String, f64)> {
    let mut w = KrazyWorld::new(task.clone(), KrazyConfig::default()).expect("layout");
    w.reset(&mut rng::seeded(4));
    let mut out = Vec::new();
    for &a in actions {
        let s = w.step(a).expect("valid action");
        out.push((w.state().to_text(), s.reward));
        if s.done {
            break;
        }
    }
    out
}

/// Relabelling actions through the dynamics permutation reproduces the
/// identity-dynamics trajectory exactly.
pub fn dynamics_equivariance(seeds: u64) -> bool {
    let cfg = EnvConfig::default();
    (0..seeds).all(|seed| {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let identity = TaskSpec { dynamics_perm: IDENTITY_DYNAMICS, ..task.clone() };
        let mut r = rng::seeded(seed + 1000);
        let actions: Vec<usize> = (0..64).map(|_| r.random_range(0..4)).collect();
        let mapped: Vec<usize> = actions.iter().map(|&a| task.dynamics_perm[a]).collect();
        krazy_states(&task, &actions) == krazy_states(&identity, &mapped)
    })
}

pub fn determinism(seeds: u64) -> bool {
    let cfg = EnvConfig::default();
    (0..seeds).all(|seed| {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let actions: Vec<usize> = (0..64).map(|t| (t * 7 + seed as usize) % 4).collect();
        krazy_states(&task, &actions) == krazy_states(&task, &actions)
    })
}

const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;

fn board(text: &str, energy: u32) -> KrazyWorld {
    let task = TaskSpec {
        family: Family::Krazy,
        layout_seed: 0,
        palette_perm: IDENTITY_PALETTE,
        dynamics_perm: IDENTITY_DYNAMICS,
        horizon: 64,
    };
    let grid = GridState::from_text(text, energy).expect("fixture board parses");
    KrazyWorld::from_state(task, KrazyConfig::default(), grid)
}

fn goal_rule() -> bool {
    let mut w = board("AG.\n...\n", 10);
    let first = w.step(RIGHT).expect("step");
    w.step(RIGHT).expect("step");
    let again = w.step(LEFT).expect("step");
    (first.reward, first.done, again.reward) == (1.0, false, 0.0)
}

fn death_rule() -> bool {
    let mut w = board("AD\n..\n", 10);
    let s = w.step(RIGHT).expect("step");
    (s.reward, s.done, s.info.deaths) == (0.0, true, 1) && w.step(LEFT).is_err()
}

fn wall_rule() -> bool {
    let mut w = board("A#\n..\n", 3);
    w.step(RIGHT).expect("step");
    w.state().agent == (0, 0) && w.state().energy == 3
}

fn ice_rule() -> bool {
    let mut w = board(".....\n.....\nAI...\n.....\n.....\n", 10);
    w.step(RIGHT).expect("step");
    let mut chain = board("AII#\n....\n", 10);
    chain.step(RIGHT).expect("step");
    w.state().agent == (2, 2) && chain.state().agent == (2, 0)
}

fn lock_rule() -> bool {
    let mut w = board("AL.\nK..\n", 10);
    w.step(RIGHT).expect("step");
    let blocked = w.state().agent == (0, 0);
    w.step(DOWN).expect("step");
    w.step(UP).expect("step");
    w.step(RIGHT).expect("step");
    blocked && w.state().agent == (1, 0)
}

fn teleport_rule() -> bool {
    let mut w = board("AT..\n...T\n", 10);
    w.step(RIGHT).expect("step");
    w.state().agent == (3, 1)
}

fn energy_rule() -> bool {
    let mut w = board("A..\n...\n", 0);
    (0..4).all(|a| w.step(a).expect("step").reward == 0.0 && w.state().agent == (0, 0))
}

fn krazy_observations(task: &TaskSpec, actions: &[usize]) -> Vec<Vec<f64>> {
    let mut w = KrazyWorld::new(task.clone(), KrazyConfig::default()).expect("layout");
    w.reset(&mut rng::seeded(4));
    let mut out = Vec::new();
    for &a in actions {
        let s = w.step(a).expect("valid action");
        out.push(s.obs.data);
        if s.done {
            break;
        }
    }
    out
}

/// Permuting the palette moves tile channel `c` to channel `palette[c]` and
/// nothing else.
pub fn palette_covariance(seeds: u64) -> bool {
    let cfg = EnvConfig::default();
    (0..seeds).all(|seed| {
        let task = sample_task(Family::Krazy, &cfg, &mut rng::seeded(seed));
        let identity = TaskSpec { palette_perm: IDENTITY_PALETTE, ..task.clone() };
        let mut r = rng::seeded(seed + 2000);
        let actions: Vec<usize> = (0..32).map(|_| r.random_range(0..4)).collect();
        let a = krazy_observations(&task, &actions);
        let b = krazy_observations(&identity, &actions);
        a.len() == b.len()
            && a.iter().zip(&b).all(|(p, q)| {
                p.chunks(CHANNELS).zip(q.chunks(CHANNELS)).all(|(pb, qb)| {
                    (0..8).all(|c| pb[task.palette_perm[c]] == qb[c]) && pb[AGENT_CHANNEL] == qb[AGENT_CHANNEL]
                })
            })
    })
}

/// One check per tile rule, on hand-written boards.
pub fn rulebook() -> Vec<Check> {
    vec![
        Check::holds("goal pays +1 once and does not terminate", goal_rule(), ""),
        Check::holds("death terminates the episode", death_rule(), ""),
        Check::holds("wall blocks movement", wall_rule(), ""),
        Check::holds("ice slides to the next non-ice cell", ice_rule(), ""),
        Check::holds("lock opens only with the key", lock_rule(), ""),
        Check::holds("teleporter moves to its partner", teleport_rule(), ""),
        Check::holds("zero energy freezes the agent", energy_rule(), ""),
    ]
}

pub fn suite() -> Vec<Check> {
    let ret = random_agent_return(1000, 0);
    let mut checks = rulebook();
    checks.extend([
        Check::within("random agent return on default krazy world", ret, 0.02, 0.10),
        Check::holds("maze connectivity on 100 seeds", (0..100).all(|s| maze_connected(s, 20)), ""),
        Check::holds("krazy determinism on 20 tasks", determinism(20), ""),
        Check::holds("dynamics permutation equivariance on 20 tasks", dynamics_equivariance(20), ""),
        Check::holds("palette channel covariance on 20 tasks", palette_covariance(20), ""),
    ]);
    checks
}
