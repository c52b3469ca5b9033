//! Device-decoupled policy heads.
//!
//! The policy net emits one block of logits per device group. An ordinal
//! block for `n` taps holds `n − 1` advance logits `l_j`; with `s_j = σ(l_j)`
//! tap `m` gets unnormalized mass `Π_{j<m} s_j · Π_{j≥m} (1 − s_j)`.
//! A softmax block holds `n` plain logits.

use super::{MlpParams, NnError};

/// Probabilities are floored here before logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyHead {
    #[default]
    Ordinal,
    Softmax,
}

impl PolicyHead {
    fn block(self, n: usize) -> usize {
        match self {
            PolicyHead::Ordinal => n - 1,
            PolicyHead::Softmax => n,
        }
    }
}

/// Number of policy-net outputs for the given group sizes.
pub fn head_size(head: PolicyHead, groups: &[usize]) -> usize {
    groups.iter().map(|&n| head.block(n)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicyDist {
    /// Per-group probabilities, each floored at `PROB_FLOOR`.
    pub probs: Vec<Vec<f64>>,
    /// Per-group exact log-probabilities.
    pub log_probs: Vec<Vec<f64>>,
}

impl JointPolicyDist {
    pub fn group_count(&self) -> usize {
        self.probs.len()
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // −softplus(−x), stable for either sign.
    -((-x).max(0.0) + (-(x.abs())).exp().ln_1p())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) }
}

fn log_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter_mut().for_each(|x| *x -= lse);
    v
}

fn group_log_probs(head: PolicyHead, logits: &[f64], n: usize) -> Vec<f64> {
    match head {
        PolicyHead::Softmax => log_normalize(logits.to_vec()),
        PolicyHead::Ordinal => {
            let adv: Vec<f64> = logits.iter().map(|&l| log_sigmoid(l)).collect();
            let stay: Vec<f64> = logits.iter().map(|&l| log_sigmoid(-l)).collect();
            // log u_m = Σ_{j<m} adv_j + Σ_{j≥m} stay_j
            let mut u = Vec::with_capacity(n);
            let mut acc: f64 = stay.iter().sum();
            u.push(acc);
            for j in 0..n - 1 {
                acc += adv[j] - stay[j];
                u.push(acc);
            }
            log_normalize(u)
        }
    }
}

/// Splits a raw head output into per-group distributions.
pub fn dist_from_logits(head: PolicyHead, logits: &[f64], groups: &[usize]) -> Result<JointPolicyDist, NnError> {
    let expected = head_size(head, groups);
    if logits.len() != expected {
        return Err(NnError::InputDim { expected, found: logits.len() });
    }
    let mut log_probs = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for &n in groups {
        let b = head.block(n);
        log_probs.push(group_log_probs(head, &logits[offset..offset + b], n));
        offset += b;
    }
    let probs = log_probs.iter().map(|g| g.iter().map(|l| l.exp().max(PROB_FLOOR)).collect()).collect();
    Ok(JointPolicyDist { probs, log_probs })
}

pub fn policy_forward(
    phi: &MlpParams,
    x: &[f64],
    groups: &[usize],
    head: PolicyHead,
) -> Result<JointPolicyDist, NnError> {
    dist_from_logits(head, &phi.forward(x)?, groups)
}

/// Σ over groups of the floored log-probability of each group's action index.
pub fn log_prob(dist: &JointPolicyDist, action: &[usize]) -> f64 {
    dist.log_probs.iter().zip(action).map(|(g, &a)| g[a].max(PROB_FLOOR.ln())).sum()
}

pub fn entropy(dist: &JointPolicyDist) -> f64 {
    dist.log_probs
        .iter()
        .map(|g| -g.iter().map(|&l| if l > f64::NEG_INFINITY { l.exp() * l } else { 0.0 }).sum::<f64>())
        .sum()
}

/// Joint log-probability of `action` and its gradient with respect to the logits.
///
/// Groups whose probability sits at the floor contribute a constant.
pub fn log_prob_and_grad(
    head: PolicyHead,
    logits: &[f64],
    groups: &[usize],
    action: &[usize],
) -> Result<(f64, Vec<f64>), NnError> {
    let dist = dist_from_logits(head, logits, groups)?;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    let mut offset = 0;
    for (g, (&n, &a)) in groups.iter().zip(action).enumerate() {
        let b = head.block(n);
        let lp = dist.log_probs[g][a];
        if lp < PROB_FLOOR.ln() {
            total += PROB_FLOOR.ln();
            offset += b;
            continue;
        }
        total += lp;
        let p: Vec<f64> = dist.log_probs[g].iter().map(|l| l.exp()).collect();
        let out = &mut grad[offset..offset + b];
        match head {
            PolicyHead::Softmax => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = f64::from(u8::from(k == a)) - p[k];
                }
            }
            PolicyHead::Ordinal => {
                let seg = &logits[offset..offset + b];
                // P(m > j) for j = 0..n-2
                let mut above = vec![0.0; b];
                let mut tail = 0.0;
                for j in (0..b).rev() {
                    tail += p[j + 1];
                    above[j] = tail;
                }
                for j in 0..b {
                    let s = sigmoid(seg[j]);
                    let own = if j < a { 1.0 - s } else { -s };
                    let mean = (1.0 - s) * above[j] - s * (1.0 - above[j]);
                    out[j] = own - mean;
                }
            }
        }
        offset += b;
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_logits_give_uniform_groups() {
        for head in [PolicyHead::Ordinal, PolicyHead::Softmax] {
            let d = dist_from_logits(head, &vec![0.0; head_size(head, &[3])], &[3]).unwrap();
            for p in &d.probs[0] {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ordinal_mass_matches_product_formula() {
        let l = [0.3, -1.2, 2.0];
        let s: Vec<f64> = l.iter().map(|&x| 1.0 / (1.0 + f64::exp(-x))).collect();
        let u: Vec<f64> = (0..4)
            .map(|m| (0..3).map(|j| if j < m { s[j] } else { 1.0 - s[j] }).product())
            .collect();
        let z: f64 = u.iter().sum();
        let d = dist_from_logits(PolicyHead::Ordinal, &l, &[4]).unwrap();
        for m in 0..4 {
            assert!((d.probs[0][m] - u[m] / z).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_first_logit_concentrates_on_lowest_tap() {
        let d = dist_from_logits(PolicyHead::Ordinal, &[-40.0, 0.0, 0.0], &[4]).unwrap();
        assert!(d.probs[0][0] > 1.0 - 1e-9);
    }

    #[test]
    fn log_prob_and_entropy_examples() {
        let d = dist_from_logits(PolicyHead::Ordinal, &[0.0; 20], &[21]).unwrap();
        assert!((log_prob(&d, &[7]) + 21f64.ln()).abs() < 1e-12);
        assert!((entropy(&d) - 21f64.ln()).abs() < 1e-12);
        let sure = dist_from_logits(PolicyHead::Softmax, &[0.0, 800.0], &[2]).unwrap();
        assert_eq!(log_prob(&sure, &[1]), 0.0);
        assert!(entropy(&sure).abs() < 1e-300);
        let two = dist_from_logits(PolicyHead::Ordinal, &[0.4, -0.3, 1.0], &[3, 2]).unwrap();
        let one = dist_from_logits(PolicyHead::Ordinal, &[0.4, -0.3], &[3]).unwrap();
        let other = dist_from_logits(PolicyHead::Ordinal, &[1.0], &[2]).unwrap();
        assert!((log_prob(&two, &[2, 0]) - log_prob(&one, &[2]) - log_prob(&other, &[0])).abs() < 1e-14);
    }

    #[test]
    fn floored_log_prob_stays_finite() {
        let d = dist_from_logits(PolicyHead::Softmax, &[0.0, 2000.0], &[2]).unwrap();
        assert_eq!(log_prob(&d, &[0]), PROB_FLOOR.ln());
        assert!(d.probs[0][0] > 0.0);
    }

    fn fd_check(head: PolicyHead, logits: Vec<f64>, groups: &[usize], action: &[usize]) -> f64 {
        let (_, g) = log_prob_and_grad(head, &logits, groups, action).unwrap();
        let h = 1e-6;
        let f = |l: &[f64]| log_prob(&dist_from_logits(head, l, groups).unwrap(), action);
        let mut worst: f64 = 0.0;
        for i in 0..logits.len() {
            let mut up = logits.clone();
            up[i] += h;
            let mut down = logits.clone();
            down[i] -= h;
            worst = worst.max(((f(&up) - f(&down)) / (2.0 * h) - g[i]).abs());
        }
        worst
    }

    proptest! {
        #[test]
        fn groups_are_valid_distributions(logits in prop::collection::vec(-30.0f64..30.0, 7)) {
            for (head, groups) in [(PolicyHead::Ordinal, vec![3, 2, 4]), (PolicyHead::Softmax, vec![3, 4])] {
                let d = dist_from_logits(head, &logits[..head_size(head, &groups)], &groups).unwrap();
                for g in &d.probs {
                    prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert!(g.iter().all(|&p| p > 0.0));
                }
                prop_assert!(entropy(&d) >= -1e-12);
                prop_assert!(entropy(&d) <= groups.iter().map(|&n| (n as f64).ln()).sum::<f64>() + 1e-12);
            }
        }

        #[test]
        fn log_prob_gradient_matches_differences(
            logits in prop::collection::vec(-4.0f64..4.0, 7),
            a in 0usize..3, b in 0usize..2, c in 0usize..4,
        ) {
            prop_assert!(fd_check(PolicyHead::Ordinal, logits[..6].to_vec(), &[3, 2, 4], &[a, b, c]) < 1e-6);
            prop_assert!(fd_check(PolicyHead::Softmax, logits[..7].to_vec(), &[3, 4], &[a, c]) < 1e-6);
        }

        #[test]
        fn raising_advance_logits_does_not_lower_mean_tap(
            logits in prop::collection::vec(-5.0f64..5.0, 4),
            shift in 0.0f64..5.0,
        ) {
            let mean = |l: &[f64]| {
                let d = dist_from_logits(PolicyHead::Ordinal, l, &[5]).unwrap();
                d.probs[0].iter().enumerate().map(|(m, p)| m as f64 * p).sum::<f64>()
            };
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            prop_assert!(mean(&shifted) >= mean(&logits) - 1e-12);
        }
    }
}
