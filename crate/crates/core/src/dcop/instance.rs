use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Cost, DcopError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent#{}", self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// The relational part of a pairwise constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Avoid,
    Match,
    NotEqual,
}

impl Relation {
    pub fn violated(self, a: usize, b: usize) -> bool {
        match self {
            Relation::Avoid | Relation::NotEqual => a == b,
            Relation::Match => a != b,
        }
    }

    pub fn holds(self, a: usize, b: usize) -> bool {
        !self.violated(a, b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Avoid => "avoid",
            Relation::Match => "match",
            Relation::NotEqual => "not-equal",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avoid" => Some(Relation::Avoid),
            "match" => Some(Relation::Match),
            "not-equal" | "not_equal" | "notequal" => Some(Relation::NotEqual),
            _ => None,
        }
    }
}

/// Dense joint cost over an ordered pair of variables.
///
/// Entry `(a, b)` is the cost when `scope.0` takes value `a` and `scope.1`
/// takes value `b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct CostTable {
    scope: (VarId, VarId),
    rows: usize,
    cols: usize,
    costs: Vec<Cost>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    scope: (VarId, VarId),
    costs: Vec<Vec<Cost>>,
}

impl TryFrom<RawTable> for CostTable {
    type Error = DcopError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        CostTable::from_rows(raw.scope, raw.costs)
    }
}

impl From<CostTable> for RawTable {
    fn from(t: CostTable) -> Self {
        RawTable { scope: t.scope, costs: t.to_rows() }
    }
}

impl CostTable {
    pub fn new(
        scope: (VarId, VarId),
        rows: usize,
        cols: usize,
        costs: Vec<Cost>,
    ) -> Result<Self, DcopError> {
        if rows == 0 || cols == 0 {
            return Err(DcopError::InvalidInstance(format!(
                "table over ({}, {}) has an empty dimension",
                scope.0, scope.1
            )));
        }
        if costs.len() != rows * cols {
            return Err(DcopError::InvalidInstance(format!(
                "table over ({}, {}) has {} entries, expected {}x{}",
                scope.0,
                scope.1,
                costs.len(),
                rows,
                cols
            )));
        }
        Ok(CostTable { scope, rows, cols, costs })
    }

    pub fn from_rows(scope: (VarId, VarId), rows: Vec<Vec<Cost>>) -> Result<Self, DcopError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(DcopError::InvalidInstance(format!(
                "table over ({}, {}) is ragged",
                scope.0, scope.1
            )));
        }
        CostTable::new(scope, r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(
        scope: (VarId, VarId),
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Cost,
    ) -> Self {
        let mut costs = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            for b in 0..cols {
                costs.push(f(a, b));
            }
        }
        CostTable { scope, rows, cols, costs }
    }

    pub fn scope(&self) -> (VarId, VarId) {
        self.scope
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Entry in the table's own orientation.
    pub fn get(&self, a: usize, b: usize) -> Cost {
        self.costs[a * self.cols + b]
    }

    /// Orientation-aware lookup: `first = a`, `second = b`.
    pub fn lookup(&self, first: VarId, a: usize, second: VarId, b: usize) -> Option<Cost> {
        if (first, second) == self.scope {
            Some(self.get(a, b))
        } else if (second, first) == self.scope {
            Some(self.get(b, a))
        } else {
            None
        }
    }

    pub fn transposed(&self) -> CostTable {
        CostTable::from_fn((self.scope.1, self.scope.0), self.cols, self.rows, |a, b| {
            self.get(b, a)
        })
    }

    /// The same table expressed over `scope`, which must be this table's
    /// scope or its reverse.
    pub fn oriented(&self, scope: (VarId, VarId)) -> Option<CostTable> {
        if scope == self.scope {
            Some(self.clone())
        } else if scope == (self.scope.1, self.scope.0) {
            Some(self.transposed())
        } else {
            None
        }
    }

    pub fn entries(&self) -> &[Cost] {
        &self.costs
    }

    pub fn to_rows(&self) -> Vec<Vec<Cost>> {
        self.costs.chunks(self.cols).map(<[Cost]>::to_vec).collect()
    }

    pub fn max_entry(&self) -> Cost {
        self.costs.iter().copied().max().unwrap_or(0)
    }

    pub fn min_entry(&self) -> Cost {
        self.costs.iter().copied().min().unwrap_or(0)
    }
}

/// A (possibly partial) assignment of domain indices to variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    values: Vec<Option<usize>>,
}

impl Assignment {
    pub fn empty(num_vars: usize) -> Self {
        Assignment { values: vec![None; num_vars] }
    }

    pub fn complete(values: Vec<usize>) -> Self {
        Assignment { values: values.into_iter().map(Some).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.values.get(var.0).copied().flatten()
    }

    pub fn set(&mut self, var: VarId, value: usize) {
        self.values[var.0] = Some(value);
    }

    pub fn clear(&mut self, var: VarId) {
        self.values[var.0] = None;
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn to_complete(&self) -> Option<Vec<usize>> {
        self.values.iter().copied().collect()
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }
}

/// A DCOP instance ⟨agents, variables, domains, pairwise tables, ownership⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct DcopInstance {
    agents: Vec<String>,
    variables: Vec<String>,
    owner: Vec<AgentId>,
    domains: Vec<Vec<String>>,
    edges: Vec<(VarId, VarId)>,
    tables: Vec<CostTable>,
    incident: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    agents: Vec<String>,
    variables: Vec<String>,
    owner: Vec<AgentId>,
    domains: Vec<Vec<String>>,
    edges: Vec<(VarId, VarId)>,
    tables: Vec<CostTable>,
}

impl TryFrom<RawInstance> for DcopInstance {
    type Error = DcopError;

    fn try_from(r: RawInstance) -> Result<Self, Self::Error> {
        DcopInstance::new(r.agents, r.variables, r.owner, r.domains, r.edges, r.tables)
    }
}

impl From<DcopInstance> for RawInstance {
    fn from(i: DcopInstance) -> Self {
        RawInstance {
            agents: i.agents,
            variables: i.variables,
            owner: i.owner,
            domains: i.domains,
            edges: i.edges,
            tables: i.tables,
        }
    }
}

impl DcopInstance {
    pub fn new(
        agents: Vec<String>,
        variables: Vec<String>,
        owner: Vec<AgentId>,
        domains: Vec<Vec<String>>,
        edges: Vec<(VarId, VarId)>,
        tables: Vec<CostTable>,
    ) -> Result<Self, DcopError> {
        let invalid = |m: String| Err(DcopError::InvalidInstance(m));
        let n = variables.len();
        if owner.len() != n || domains.len() != n {
            return invalid(format!(
                "{} variables but {} owners and {} domains",
                n,
                owner.len(),
                domains.len()
            ));
        }
        if let Some(a) = owner.iter().find(|a| a.0 >= agents.len()) {
            return invalid(format!("owner {} is not an agent", a));
        }
        if let Some(v) = domains.iter().position(Vec::is_empty) {
            return Err(DcopError::EmptyDomain(VarId(v)));
        }
        if edges.len() != tables.len() {
            return invalid(format!("{} edges but {} tables", edges.len(), tables.len()));
        }
        let mut seen = BTreeSet::new();
        let mut incident = vec![Vec::new(); n];
        for (e, (&(a, b), t)) in edges.iter().zip(&tables).enumerate() {
            if a.0 >= n || b.0 >= n {
                return invalid(format!("edge {} references an unknown variable", e));
            }
            if a == b {
                return invalid(format!("edge {} is a self-loop on {}", e, a));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return invalid(format!("duplicate edge ({}, {})", a, b));
            }
            if t.scope() != (a, b) {
                return invalid(format!("table {} scope does not match its edge", e));
            }
            if t.shape() != (domains[a.0].len(), domains[b.0].len()) {
                return invalid(format!("table {} shape does not match the domains", e));
            }
            incident[a.0].push(e);
            incident[b.0].push(e);
        }
        Ok(DcopInstance { agents, variables, owner, domains, edges, tables, incident })
    }

    /// Same structure with a different set of tables (e.g. negotiated ones).
    pub fn with_tables(&self, tables: Vec<CostTable>) -> Result<Self, DcopError> {
        DcopInstance::new(
            self.agents.clone(),
            self.variables.clone(),
            self.owner.clone(),
            self.domains.clone(),
            self.edges.clone(),
            tables,
        )
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn agent_name(&self, a: AgentId) -> &str {
        &self.agents[a.0]
    }

    pub fn agent_names(&self) -> &[String] {
        &self.agents
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.variables[v.0]
    }

    pub fn var_names(&self) -> &[String] {
        &self.variables
    }

    pub fn owner(&self, v: VarId) -> AgentId {
        self.owner[v.0]
    }

    pub fn owners(&self) -> &[AgentId] {
        &self.owner
    }

    pub fn domain(&self, v: VarId) -> &[String] {
        &self.domains[v.0]
    }

    pub fn domains(&self) -> &[Vec<String>] {
        &self.domains
    }

    pub fn domain_size(&self, v: VarId) -> usize {
        self.domains[v.0].len()
    }

    pub fn edges(&self) -> &[(VarId, VarId)] {
        &self.edges
    }

    pub fn tables(&self) -> &[CostTable] {
        &self.tables
    }

    pub fn table(&self, edge: usize) -> &CostTable {
        &self.tables[edge]
    }

    pub fn incident_edges(&self, v: VarId) -> &[usize] {
        &self.incident[v.0]
    }

    /// `(edge index, other endpoint)` for every edge touching `v`.
    pub fn neighbors(&self, v: VarId) -> impl Iterator<Item = (usize, VarId)> + '_ {
        self.incident[v.0].iter().map(move |&e| {
            let (a, b) = self.edges[e];
            (e, if a == v { b } else { a })
        })
    }

    pub fn vars_of(&self, agent: AgentId) -> Vec<VarId> {
        (0..self.num_vars())
            .map(VarId)
            .filter(|&v| self.owner[v.0] == agent)
            .collect()
    }

    /// Edges with at least one endpoint owned by `agent`, in edge order.
    pub fn agent_edges(&self, agent: AgentId) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| {
                let (a, b) = self.edges[e];
                self.owner[a.0] == agent || self.owner[b.0] == agent
            })
            .collect()
    }

    /// Agent degree used by the query-count formulas: the number of
    /// constraints the agent takes part in.
    pub fn agent_degree(&self, agent: AgentId) -> usize {
        self.agent_edges(agent).len()
    }

    /// Distinct other agents sharing at least one edge with `agent`.
    pub fn agent_neighbors(&self, agent: AgentId) -> Vec<AgentId> {
        let mut out = BTreeSet::new();
        for &(a, b) in &self.edges {
            let (oa, ob) = (self.owner[a.0], self.owner[b.0]);
            if oa == agent && ob != agent {
                out.insert(ob);
            }
            if ob == agent && oa != agent {
                out.insert(oa);
            }
        }
        out.into_iter().collect()
    }

    pub fn search_space(&self) -> u128 {
        self.domains.iter().map(|d| d.len() as u128).product()
    }

    pub(crate) fn check_value(&self, var: VarId, value: usize) -> Result<(), DcopError> {
        if var.0 >= self.num_vars() {
            return Err(DcopError::UnknownVariable(var));
        }
        let size = self.domain_size(var);
        if value >= size {
            return Err(DcopError::ValueOutOfDomain { var, value, size });
        }
        Ok(())
    }
}
