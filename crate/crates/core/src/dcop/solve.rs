use serde::{Deserialize, Serialize};

use super::{Assignment, Cost, DcopError, DcopInstance, Relation, VarId};
use crate::stream;

/// Default cap on the number of assignments `brute_force_optimum` enumerates.
pub const DEFAULT_SEARCH_CAP: u128 = 10_000_000;

fn check_complete(instance: &DcopInstance, a: &Assignment) -> Result<(), DcopError> {
    if a.len() != instance.num_vars() {
        return Err(DcopError::UnknownVariable(VarId(a.len().min(instance.num_vars()))));
    }
    for v in 0..instance.num_vars() {
        let var = VarId(v);
        let value = a.get(var).ok_or(DcopError::IncompleteAssignment(var))?;
        instance.check_value(var, value)?;
    }
    Ok(())
}

/// Sum of every edge's table cost under a complete assignment.
pub fn global_cost(instance: &DcopInstance, a: &Assignment) -> Result<Cost, DcopError> {
    check_complete(instance, a)?;
    Ok(instance
        .edges()
        .iter()
        .zip(instance.tables())
        .map(|(&(x, y), t)| t.get(a.get(x).unwrap_or(0), a.get(y).unwrap_or(0)))
        .sum())
}

fn edge_cost(instance: &DcopInstance, edge: usize, var: VarId, value: usize, other: usize) -> Cost {
    let (x, _) = instance.edges()[edge];
    let t = instance.table(edge);
    if x == var {
        t.get(value, other)
    } else {
        t.get(other, value)
    }
}

/// Cost of the edges touching `var` when it takes `value` and its neighbors
/// take their values from `ctx`.
pub fn local_cost(
    instance: &DcopInstance,
    var: VarId,
    value: usize,
    ctx: &Assignment,
) -> Result<Cost, DcopError> {
    instance.check_value(var, value)?;
    let mut total = 0;
    for (e, other) in instance.neighbors(var) {
        let ov = ctx
            .get(other)
            .ok_or(DcopError::MissingNeighbor { var, neighbor: other })?;
        instance.check_value(other, ov)?;
        total += edge_cost(instance, e, var, value, ov);
    }
    Ok(total)
}

/// Like [`local_cost`] but silently skips neighbors whose value is unknown.
/// Used by agents acting on partial information.
pub fn local_cost_known(instance: &DcopInstance, var: VarId, value: usize, ctx: &Assignment) -> Cost {
    instance
        .neighbors(var)
        .filter_map(|(e, other)| {
            ctx.get(other)
                .filter(|&ov| ov < instance.domain_size(other))
                .map(|ov| edge_cost(instance, e, var, value, ov))
        })
        .sum()
}

fn argmin(size: usize, mut cost: impl FnMut(usize) -> Result<Cost, DcopError>) -> Result<(usize, Cost), DcopError> {
    let mut best: Option<(usize, Cost)> = None;
    for d in 0..size {
        let c = cost(d)?;
        if best.map_or(true, |(_, bc)| c < bc) {
            best = Some((d, c));
        }
    }
    Ok(best.expect("non-empty domain"))
}

/// Domain value minimizing the local cost; ties go to the lowest index.
pub fn best_local_action(
    instance: &DcopInstance,
    var: VarId,
    ctx: &Assignment,
) -> Result<(usize, Cost), DcopError> {
    if var.0 >= instance.num_vars() {
        return Err(DcopError::UnknownVariable(var));
    }
    let size = instance.domain_size(var);
    if size == 0 {
        return Err(DcopError::EmptyDomain(var));
    }
    argmin(size, |d| local_cost(instance, var, d, ctx))
}

/// Best response over the neighbors whose values are known.
pub fn best_local_action_known(instance: &DcopInstance, var: VarId, ctx: &Assignment) -> (usize, Cost) {
    argmin(instance.domain_size(var), |d| Ok(local_cost_known(instance, var, d, ctx)))
        .expect("domains are validated non-empty")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsaParams {
    pub epsilon: f64,
    pub iterations: usize,
}

impl DsaParams {
    pub fn validate(&self) -> Result<(), DcopError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(DcopError::InvalidParameter(format!(
                "epsilon {} is outside [0, 1]",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(DcopError::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Complete assignments and global costs for iterations `0..=iterations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub assignments: Vec<Vec<usize>>,
    pub costs: Vec<Cost>,
    pub seed: u64,
    pub epsilon: f64,
    pub iterations: usize,
}

impl Trace {
    pub fn from_assignments(
        instance: &DcopInstance,
        assignments: Vec<Vec<usize>>,
        seed: u64,
        epsilon: f64,
    ) -> Result<Trace, DcopError> {
        let costs = assignments
            .iter()
            .map(|a| global_cost(instance, &Assignment::complete(a.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let iterations = assignments.len().saturating_sub(1);
        Ok(Trace { assignments, costs, seed, epsilon, iterations })
    }

    pub fn anytime(&self) -> Vec<Cost> {
        anytime_curve(&self.costs)
    }

    pub fn anytime_cost(&self) -> Cost {
        self.costs.iter().copied().min().unwrap_or(0)
    }
}

/// Round-synchronous DSA. Every variable observes the iteration `t-1`
/// assignment, computes its best response, and adopts it with probability
/// `1-ε`, otherwise a uniformly random value.
pub fn run_dsa(instance: &DcopInstance, params: DsaParams, seed: u64) -> Result<Trace, DcopError> {
    params.validate()?;
    let n = instance.num_vars();
    let mut current: Vec<usize> = (0..n)
        .map(|v| stream::initial_value(seed, v, instance.domain_size(VarId(v))))
        .collect();
    let mut assignments = Vec::with_capacity(params.iterations + 1);
    assignments.push(current.clone());
    for t in 1..=params.iterations {
        let snapshot = Assignment::complete(current.clone());
        let next = (0..n)
            .map(|v| {
                let var = VarId(v);
                let (best, _) = best_local_action(instance, var, &snapshot)?;
                Ok(stream::dsa_choice(
                    seed,
                    v,
                    t,
                    params.epsilon,
                    instance.domain_size(var),
                    best,
                ))
            })
            .collect::<Result<Vec<_>, DcopError>>()?;
        current = next;
        assignments.push(current.clone());
    }
    Trace::from_assignments(instance, assignments, seed, params.epsilon)
}

/// Exhaustive minimum of the global cost. Among equal-cost assignments the
/// lexicographically smallest (variable 0 most significant) wins.
pub fn brute_force_optimum(instance: &DcopInstance, cap: u128) -> Result<(Assignment, Cost), DcopError> {
    let size = instance.search_space();
    if size > cap {
        return Err(DcopError::SearchSpaceTooLarge { size, cap });
    }
    let n = instance.num_vars();
    let radix: Vec<usize> = (0..n).map(|v| instance.domain_size(VarId(v))).collect();
    let mut digits = vec![0usize; n];
    let mut best: Option<(Vec<usize>, Cost)> = None;
    loop {
        let cost: Cost = instance
            .edges()
            .iter()
            .zip(instance.tables())
            .map(|(&(x, y), t)| t.get(digits[x.0], digits[y.0]))
            .sum();
        if best.as_ref().map_or(true, |(_, bc)| cost < *bc) {
            best = Some((digits.clone(), cost));
        }
        // Odometer increment, last variable fastest.
        let mut i = n;
        loop {
            if i == 0 {
                let (a, c) = best.expect("at least one assignment");
                return Ok((Assignment::complete(a), c));
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Running minimum of a cost series.
pub fn anytime_curve(costs: &[Cost]) -> Vec<Cost> {
    costs
        .iter()
        .scan(Cost::MAX, |best, &c| {
            *best = (*best).min(c);
            Some(*best)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Satisfaction {
    pub satisfied: usize,
    pub total: usize,
}

impl Satisfaction {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }
}

/// Fraction of edges whose relation holds, ignoring preference costs.
pub fn satisfaction(
    instance: &DcopInstance,
    a: &Assignment,
    relations: &[Relation],
) -> Result<Satisfaction, DcopError> {
    check_complete(instance, a)?;
    if relations.len() < instance.edges().len() {
        return Err(DcopError::MissingRelation(relations.len()));
    }
    let satisfied = instance
        .edges()
        .iter()
        .zip(relations)
        .filter(|(&(x, y), r)| r.holds(a.get(x).unwrap_or(0), a.get(y).unwrap_or(0)))
        .count();
    Ok(Satisfaction { satisfied, total: instance.edges().len() })
}
