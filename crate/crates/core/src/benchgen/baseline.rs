//! Uniform random resampling baseline.

use crate::dcop::{DcopError, DcopInstance, Trace, VarId};
use crate::stream;

/// Starts from the same initial assignment as DSA, then resamples every
/// variable uniformly at each iteration. Recorded with ε = 1.
pub fn random_baseline(instance: &DcopInstance, iterations: usize, seed: u64) -> Result<Trace, DcopError> {
    if iterations == 0 {
        return Err(DcopError::InvalidParameter("iterations must be at least 1".into()));
    }
    let n = instance.num_vars();
    let sizes: Vec<usize> = (0..n).map(|v| instance.domain_size(VarId(v))).collect();
    let mut assignments = Vec::with_capacity(iterations + 1);
    assignments.push((0..n).map(|v| stream::initial_value(seed, v, sizes[v])).collect::<Vec<_>>());
    for t in 1..=iterations {
        assignments.push((0..n).map(|v| stream::random_value(seed, v, t, sizes[v])).collect());
    }
    Trace::from_assignments(instance, assignments, seed, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{gen_ground_truth, gen_ldgc, oracle_cost_tables, Network};
    use crate::dcop::{run_dsa, satisfaction, Assignment, DsaParams, Relation};

    fn mean(xs: &[u64]) -> f64 {
        xs.iter().sum::<u64>() as f64 / xs.len() as f64
    }

    #[test]
    fn random_satisfaction_on_all_avoid_graph() {
        let task = gen_ldgc(10, 23, 4, 1).unwrap();
        let net = Network::of(&task.instance);
        let gt = gen_ground_truth(10, &net.edges, 4, 1.0, 1).unwrap();
        let inst = oracle_cost_tables(&gt, &net).unwrap();
        let trace = random_baseline(&inst, 2000, 5).unwrap();
        let total: f64 = trace
            .assignments
            .iter()
            .map(|a| satisfaction(&inst, &Assignment::complete(a.clone()), &gt.relations).unwrap().fraction())
            .sum();
        let m = total / trace.assignments.len() as f64;
        assert!((m - 0.75).abs() < 0.02, "{m}");
        assert!(gt.relations.iter().all(|&r| r == Relation::Avoid));
    }

    #[test]
    fn anytime_not_above_mean_and_dsa_beats_random() {
        for seed in 0..10 {
            let task = gen_ldgc(10, 23, 4, seed).unwrap();
            let rnd = random_baseline(&task.instance, 100, seed).unwrap();
            assert!(rnd.anytime_cost() as f64 <= mean(&rnd.costs));
            let dsa = run_dsa(&task.instance, DsaParams { epsilon: 0.1, iterations: 100 }, seed).unwrap();
            assert!(mean(&dsa.costs) < mean(&rnd.costs));
        }
    }

    #[test]
    fn trace_shape_matches_dsa() {
        let task = gen_ldgc(5, 6, 3, 2).unwrap();
        let rnd = random_baseline(&task.instance, 30, 4).unwrap();
        let dsa = run_dsa(&task.instance, DsaParams { epsilon: 0.1, iterations: 30 }, 4).unwrap();
        assert_eq!(rnd.assignments.len(), dsa.assignments.len());
        assert_eq!(rnd.assignments[0], dsa.assignments[0]);
        assert!(random_baseline(&task.instance, 0, 4).is_err());
    }
}
