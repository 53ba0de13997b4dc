use super::Branch;
use crate::error::{Error, Result};
use crate::mdp::{StateId, TreeMdp};
use crate::values::{StochasticPolicy, ValueTable};

/// Tabular value estimate with a slowly tracking target copy used for
/// bootstrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularValueLearner {
    pub main: ValueTable,
    pub target: ValueTable,
    pub target_rate: f64,
}

impl TabularValueLearner {
    /// Both tables start at the reward vector.
    pub fn new(mdp: &TreeMdp, target_rate: f64) -> Self {
        let init = ValueTable::rewards(mdp);
        Self {
            main: init.clone(),
            target: init,
            target_rate,
        }
    }

    /// One pass over `batch`: each branch moves `main(s)` a fraction `lr`
    /// toward its bootstrapped target, then the target table tracks `main`.
    pub fn update(&mut self, mdp: &TreeMdp, batch: &[Branch], lr: f64) {
        let gamma = mdp.gamma();
        for b in batch {
            let s = b.state.0;
            if mdp.is_building_block(b.state) {
                continue;
            }
            let worst = b
                .children
                .iter()
                .map(|c| self.target.0[c.0])
                .fold(f64::INFINITY, f64::min);
            let y = gamma * worst;
            self.main.0[s] += lr * (y - self.main.0[s]);
        }
        let rate = self.target_rate;
        for (s, (t, m)) in self.target.0.iter_mut().zip(&self.main.0).enumerate() {
            if mdp.is_building_block(StateId(s)) {
                *t = 1.0;
            } else {
                *t = (1.0 - rate) * *t + rate * m;
            }
        }
        for s in mdp.building_blocks() {
            self.main.0[s.0] = 1.0;
        }
    }

    /// Advantage of a branch under the main table.
    pub fn advantage(&self, mdp: &TreeMdp, b: &Branch) -> f64 {
        if mdp.is_building_block(b.state) {
            return 0.0;
        }
        let worst = b
            .children
            .iter()
            .map(|c| self.main.0[c.0])
            .fold(f64::INFINITY, f64::min);
        mdp.gamma() * worst - self.main.0[b.state.0]
    }
}

/// `min(clip, exp(x))`.
pub fn exp_clip(x: f64, clip: f64) -> f64 {
    x.exp().min(clip)
}

/// One tabular gradient step on the advantage-weighted log-likelihood of
/// the batch actions. Each visited state moves its logits by the mean
/// weighted gradient of its samples; actions outside the support keep zero
/// probability.
pub fn policy_update_sampled(
    pi: &StochasticPolicy,
    learner: &TabularValueLearner,
    mdp: &TreeMdp,
    batch: &[Branch],
    beta: f64,
    clip: f64,
    lr: f64,
) -> Result<StochasticPolicy> {
    let n = mdp.num_states();
    let mut grad: Vec<Vec<f64>> = mdp
        .states()
        .map(|s| vec![0.0; mdp.num_actions(s)])
        .collect();
    let mut visits = vec![0usize; n];
    for b in batch {
        if !pi.in_support(b.state, b.action) {
            return Err(Error::SupportViolation {
                state: b.state,
                action: b.action,
            });
        }
        let w = exp_clip(beta * learner.advantage(mdp, b), clip);
        let probs = pi.probs(b.state);
        let g = &mut grad[b.state.0];
        for (a, gi) in g.iter_mut().enumerate() {
            let target = if a == b.action.0 { 1.0 } else { 0.0 };
            *gi += w * (probs[a] - target);
        }
        visits[b.state.0] += 1;
    }

    let probs = mdp
        .states()
        .map(|s| {
            let row = pi.probs(s);
            if visits[s.0] == 0 {
                return row.to_vec();
            }
            let scale = lr / visits[s.0] as f64;
            let support = pi.support(s);
            let logits: Vec<f64> = row
                .iter()
                .zip(support)
                .zip(&grad[s.0])
                .map(|((&p, &allowed), &g)| {
                    if allowed {
                        p.max(f64::MIN_POSITIVE).ln() - scale * g
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            softmax(&logits)
        })
        .collect();
    Ok(pi.with_probs(probs))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .map(|&l| {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                (l - m).exp()
            }
        })
        .collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Closed-form reweighting `pi'(a|s) ∝ pi(a|s) exp(beta A(s,a))`.
pub fn policy_update_exact(
    pi: &StochasticPolicy,
    advantages: &[Vec<f64>],
    beta: f64,
) -> Result<StochasticPolicy> {
    if advantages.len() != pi.num_states() {
        return Err(Error::InvalidPolicy(format!(
            "advantages cover {} states, policy has {}",
            advantages.len(),
            pi.num_states()
        )));
    }
    let mut probs = Vec::with_capacity(pi.num_states());
    for (s, adv) in advantages.iter().enumerate() {
        let state = StateId(s);
        let row = pi.probs(state);
        if row.is_empty() {
            probs.push(Vec::new());
            continue;
        }
        if adv.len() != row.len() {
            return Err(Error::InvalidPolicy(format!(
                "state {state}: advantage row has wrong length"
            )));
        }
        // Shift by the largest supported advantage; the normaliser absorbs it.
        let shift = row
            .iter()
            .zip(adv)
            .filter(|(&p, _)| p > 0.0)
            .map(|(_, &a)| beta * a)
            .fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = row
            .iter()
            .zip(adv)
            .map(|(&p, &a)| {
                if p > 0.0 {
                    p * (beta * a - shift).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let z: f64 = unnorm.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegeneratePolicy(state));
        }
        probs.push(unnorm.into_iter().map(|x| x / z).collect());
    }
    Ok(pi.with_probs(probs))
}
