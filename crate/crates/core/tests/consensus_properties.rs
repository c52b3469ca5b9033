use cmarl_vvc::benchmarks::admm_primal_objective_and_grad;
use cmarl_vvc::consensus::{
    consensus_penalty_and_grad, consistency_loss_and_grad, zeta, ActionSpace, CmarlOptions, CmarlTrainer, CommGraph,
    Experience, Hyper, LossWeights, ReplayBuffer, ZetaSample,
};
use cmarl_vvc::nn::{AgentParams, PolicyHead};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: LossWeights = LossWeights { alpha: 0.5, gamma: 0.95, reward_scale: 5.0 };

fn instance(seed: u64, head: PolicyHead) -> (AgentParams, Vec<Experience>, ActionSpace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = ActionSpace::new(vec![4, 3], head);
    let mut params = AgentParams::init(5, 6, space.head_size(), &mut rng);
    params.psi_bar.data.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    let batch = (0..6)
        .map(|_| Experience {
            state: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: vec![rng.random_range(0..4), rng.random_range(0..3)],
            rewards: vec![rng.random_range(-1.0..0.0), rng.random_range(-1.0..0.0)],
            next_state: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    (params, batch, space)
}

fn flat(p: &AgentParams) -> Vec<f64> {
    [p.psi.data.clone(), p.phi.data.clone()].concat()
}

fn with_flat(p: &AgentParams, theta: &[f64]) -> AgentParams {
    let mut q = p.clone();
    let n = q.psi.data.len();
    q.psi.data.copy_from_slice(&theta[..n]);
    q.phi.data.copy_from_slice(&theta[n..]);
    q
}

fn fd_error(p: &AgentParams, analytic: &[f64], f: impl Fn(&AgentParams) -> f64) -> f64 {
    let h = 1e-6;
    let theta = flat(p);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] += h;
        let up = f(&with_flat(p, &t));
        t[k] -= 2.0 * h;
        let down = f(&with_flat(p, &t));
        let fd = (up - down) / (2.0 * h);
        num += (fd - analytic[k]).powi(2);
        den = den.max(fd.abs()).max(analytic[k].abs());
    }
    num.sqrt() / den.max(1e-300)
}

fn head(softmax: bool) -> PolicyHead {
    if softmax { PolicyHead::Softmax } else { PolicyHead::Ordinal }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn consistency_gradient_matches_differences(seed in 0u64..10_000, softmax: bool) {
        let (p, batch, space) = instance(seed, head(softmax));
        let refs: Vec<&Experience> = batch.iter().collect();
        let r: Vec<f64> = batch.iter().map(|e| e.rewards[1]).collect();
        let (_, g) = consistency_loss_and_grad(&p, &refs, &r, &space, W);
        prop_assert!(fd_error(&p, &g.flat(), |q| consistency_loss_and_grad(q, &refs, &r, &space, W).0) < 1e-4);
    }

    #[test]
    fn penalty_gradient_matches_differences(seed in 0u64..10_000, degree in 1usize..4, softmax: bool) {
        let (p, batch, space) = instance(seed, head(softmax));
        let refs: Vec<&Experience> = batch.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
        let sums: Vec<ZetaSample> = refs
            .iter()
            .map(|_| ZetaSample { value: rng.random_range(-3.0..3.0), action_prob: rng.random_range(0.0..0.3) })
            .collect();
        let (_, g) = consensus_penalty_and_grad(&p, &refs, &sums, degree, 1.0, &space);
        let err = fd_error(&p, &g.flat(), |q| consensus_penalty_and_grad(q, &refs, &sums, degree, 1.0, &space).0);
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn admm_primal_gradient_matches_differences(seed in 0u64..10_000, rho in 1.0f64..600.0) {
        let (p, batch, space) = instance(seed, PolicyHead::Ordinal);
        let refs: Vec<&Experience> = batch.iter().collect();
        let r: Vec<f64> = batch.iter().map(|e| e.rewards[0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let theta = flat(&p);
        let dual: Vec<f64> = theta.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let nbs: Vec<Vec<f64>> = (0..2).map(|_| theta.iter().map(|t| t + rng.random_range(-0.1..0.1)).collect()).collect();
        let (_, g) = admm_primal_objective_and_grad(&p, &refs, &r, &dual, &nbs, rho, &space, W);
        let err = fd_error(&p, &g, |q| admm_primal_objective_and_grad(q, &refs, &r, &dual, &nbs, rho, &space, W).0);
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn agreeing_agents_feel_exactly_zero_penalty(seed in 0u64..10_000, degree in 1usize..4, softmax: bool) {
        let (p, batch, space) = instance(seed, head(softmax));
        let refs: Vec<&Experience> = batch.iter().collect();
        let sums: Vec<ZetaSample> = refs
            .iter()
            .map(|e| {
                let z = zeta(&p, &e.state, &e.action, &space);
                let mut s = ZetaSample { value: 0.0, action_prob: 0.0 };
                for _ in 0..degree {
                    s.value += z.value;
                    s.action_prob += z.action_prob;
                }
                s
            })
            .collect();
        let (loss, g) = consensus_penalty_and_grad(&p, &refs, &sums, degree, 1.0, &space);
        prop_assert_eq!(loss, 0.0);
        prop_assert!(g.is_zero());
    }

    #[test]
    fn counter_charges_batch_times_identifier_plus_two_per_neighbor(
        seed in 0u64..10_000,
        extra in prop::collection::vec((0usize..5, 0usize..5), 0..6),
        batch_size in 1usize..20,
        hidden in 2usize..40,
    ) {
        let k = 5;
        let mut edges: Vec<(usize, usize)> = (1..k).map(|i| (i - 1, i)).collect();
        edges.extend(extra.into_iter().filter(|(a, b)| a != b));
        let graph = CommGraph::new(k, &edges).unwrap();
        let id = 17;
        let space = ActionSpace::new(vec![3; k], PolicyHead::Ordinal);
        let opts = CmarlOptions { hyper: Hyper { batch_size, hidden, ..Hyper::default() }, ..CmarlOptions::default() };
        let mut t = CmarlTrainer::new(4, space, id, graph.clone(), opts, seed);
        let buffer = tiny_buffer(k, 4);
        for _ in 0..10 {
            let before = t.transmitted();
            let i = t.train_iteration(&buffer).unwrap();
            let expected = (batch_size * (id + 2 * graph.degree(i))) as u64;
            prop_assert_eq!(t.transmitted() - before, expected);
        }
    }
}

fn tiny_buffer(k: usize, dim: usize) -> ReplayBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut b = ReplayBuffer::new(64);
    for _ in 0..64 {
        b.push(Experience {
            state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: vec![rng.random_range(0..3); k],
            rewards: vec![-0.1; k],
            next_state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        });
    }
    b
}

/// Pearson statistic against equal expected counts.
fn chi_square(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

fn idle_trainer(k: usize) -> CmarlTrainer {
    let space = ActionSpace::new(vec![3; k], PolicyHead::Ordinal);
    let opts = CmarlOptions {
        hyper: Hyper { batch_size: 1, hidden: 2, ..Hyper::default() },
        consistency_enabled: false,
        consensus_enabled: false,
        ..CmarlOptions::default()
    };
    CmarlTrainer::new(4, space, 1, CommGraph::chain(k), opts, 77)
}

#[test]
fn agent_sampling_is_uniform() {
    let mut t = idle_trainer(4);
    let buffer = tiny_buffer(4, 4);
    for _ in 0..100_000 {
        t.train_iteration(&buffer);
    }
    // 1% critical value with 3 degrees of freedom.
    let stat = chi_square(t.updates());
    assert!(stat < 11.345, "chi-square {stat}, counts {:?}", t.updates());
}

#[test]
fn failed_agent_sampling_renormalizes_over_healthy_agents() {
    let mut t = idle_trainer(4);
    t.set_failed(2, true);
    let buffer = tiny_buffer(4, 4);
    for _ in 0..60_000 {
        t.train_iteration(&buffer);
    }
    let u = t.updates().to_vec();
    assert_eq!(u[2], 0);
    assert_eq!(u.iter().sum::<u64>(), 60_000);
    // 1% critical value with 2 degrees of freedom.
    let stat = chi_square(&[u[0], u[1], u[3]]);
    assert!(stat < 9.210, "chi-square {stat}, counts {u:?}");
}
