use crate::error::Result;
use crate::rng::TrialRng;

use super::{Agent, ComputeCounts, Decision, PolicyView, SolverStats};

pub fn uniform_random_step(num_actions: usize, rng: &mut TrialRng) -> usize {
    rng.index(num_actions)
}

pub struct UniformRandomAgent {
    label: String,
    num_actions: usize,
    rng: TrialRng,
}

impl UniformRandomAgent {
    pub fn new(num_actions: usize, label: String, rng: TrialRng) -> Self {
        Self { label, num_actions, rng }
    }
}

impl Agent for UniformRandomAgent {
    fn label(&self) -> &str {
        &self.label
    }

    fn act(&mut self, _state: usize, _t: usize) -> Result<Decision> {
        Ok(Decision {
            action: uniform_random_step(self.num_actions, &mut self.rng),
            policy: PolicyView::UniformRandom,
            theta: None,
            q: None,
            counts: ComputeCounts::default(),
            stats: SolverStats {
                converged: true,
                ..SolverStats::default()
            },
        })
    }

    fn observe(&mut self, _state: usize, _action: usize, _next_state: usize) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_action_and_reproducibility() {
        let mut rng = TrialRng::new(1);
        assert!((0..100).all(|_| uniform_random_step(1, &mut rng) == 0));
        let a: Vec<_> = {
            let mut r = TrialRng::new(5);
            (0..50).map(|_| uniform_random_step(4, &mut r)).collect()
        };
        let mut r = TrialRng::new(5);
        assert!(a.iter().all(|&x| x == uniform_random_step(4, &mut r)));
    }

    #[test]
    fn action_frequencies_are_uniform() {
        let mut rng = TrialRng::new(2024);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[uniform_random_step(3, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }
}
