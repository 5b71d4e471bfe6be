//! Neural algorithm simulation: a per-agent environment exposing DSA's
//! algorithmic steps as actions, an append-only execution log, a reference
//! controller that knows the correct next step, and a barrier-synchronized
//! multi-agent runner.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{agent_info, AgentError, ArchetypeRun, RunParams};
use crate::benchgen::VlTask;
use crate::bus::{BusConfig, MessageBus};
use crate::dcop::{best_local_action_known, AgentId, Assignment, VarId};
use crate::model::prompt_estimate_tokens;
use crate::model::{ActionCtx, ModelClient, QueryContext};
use crate::stream;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EnvAction {
    InitializeAssignments,
    GenerateConstraints,
    SendAssignment { to: Vec<AgentId> },
    ReadInbox,
    ComputeBestAction,
    AdoptValue { var: VarId, value: usize },
    AdoptRandom { var: VarId },
    Noop,
    Terminate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NasVar {
    pub var: VarId,
    pub name: String,
    pub domain: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NasNeighbor {
    pub agent: AgentId,
    pub name: String,
}

/// Everything the controller needs to know about the simulated agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NasParams {
    pub agent: AgentId,
    pub agent_name: String,
    pub vars: Vec<NasVar>,
    pub neighbors: Vec<NasNeighbor>,
    pub epsilon: f64,
    pub seed: u64,
    pub iterations: usize,
}

impl NasParams {
    pub fn of(task: &VlTask, agent: AgentId, epsilon: f64, seed: u64, iterations: usize) -> NasParams {
        let inst = &task.instance;
        NasParams {
            agent,
            agent_name: inst.agent_name(agent).to_string(),
            vars: inst
                .vars_of(agent)
                .into_iter()
                .map(|v| NasVar { var: v, name: inst.var_name(v).to_string(), domain: inst.domain(v).to_vec() })
                .collect(),
            neighbors: inst
                .agent_neighbors(agent)
                .into_iter()
                .map(|a| NasNeighbor { agent: a, name: inst.agent_name(a).to_string() })
                .collect(),
            epsilon,
            seed,
            iterations,
        }
    }

    /// Steps a correct controller spends per iteration: send, read,
    /// compute and one adoption per variable.
    pub fn steps_per_iteration(&self) -> usize {
        3 + self.vars.len()
    }

    fn var(&self, var: VarId) -> Option<&NasVar> {
        self.vars.iter().find(|v| v.var == var)
    }

    fn agent_name(&self, a: AgentId) -> String {
        self.neighbors.iter().find(|n| n.agent == a).map_or_else(|| a.to_string(), |n| n.name.clone())
    }

    pub fn render_action(&self, action: &EnvAction) -> String {
        let var_name = |v: VarId| self.var(v).map_or_else(|| v.to_string(), |x| x.name.clone());
        match action {
            EnvAction::InitializeAssignments => "initialize-assignments".into(),
            EnvAction::GenerateConstraints => "generate-constraints".into(),
            EnvAction::SendAssignment { to } => {
                let names: Vec<String> = to.iter().map(|&a| self.agent_name(a)).collect();
                format!("send-assignment {}", names.join(" ")).trim_end().to_string()
            }
            EnvAction::ReadInbox => "read-inbox".into(),
            EnvAction::ComputeBestAction => "compute-best-action".into(),
            EnvAction::AdoptValue { var, value } => {
                let label = self.var(*var).and_then(|x| x.domain.get(*value)).cloned().unwrap_or_else(|| value.to_string());
                format!("adopt-value {} {label}", var_name(*var))
            }
            EnvAction::AdoptRandom { var } => format!("adopt-random {}", var_name(*var)),
            EnvAction::Noop => "noop".into(),
            EnvAction::Terminate => "terminate".into(),
        }
    }

    /// Initial instruction `P`.
    pub fn instruction(&self, task_text: &str) -> String {
        let vars: Vec<&str> = self.vars.iter().map(|v| v.name.as_str()).collect();
        let nbrs: Vec<&str> = self.neighbors.iter().map(|n| n.name.as_str()).collect();
        format!(
            "{task_text}\n\nYou are {agent} and simulate the Distributed Stochastic Algorithm for your variables {vars}. \
Your neighbors are {nbrs}. First initialize-assignments, then generate-constraints. Then repeat for {t} iterations: \
send-assignment to all neighbors, read-inbox, compute-best-action, and for every variable either adopt-value with the \
computed best value or, when the exploration draw reported by compute-best-action says so (probability {eps}), \
adopt-random. After the last iteration, terminate.",
            agent = self.agent_name,
            vars = vars.join(", "),
            nbrs = if nbrs.is_empty() { "(none)".to_string() } else { nbrs.join(", ") },
            t = self.iterations,
            eps = self.epsilon,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub ok: bool,
    pub text: String,
    pub terminal: bool,
    /// Iterations completed after this step.
    pub completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<Vec<(VarId, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
pub enum LogEntry {
    Instruction { text: String, params: NasParams },
    Action { step: usize, action: EnvAction },
    Observation { step: usize, observation: Observation },
}

/// Append-only execution log; entry 0 is the instruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmicLog {
    entries: Vec<LogEntry>,
}

impl AlgorithmicLog {
    pub fn new(text: String, params: NasParams) -> AlgorithmicLog {
        AlgorithmicLog { entries: vec![LogEntry::Instruction { text, params }] }
    }

    pub fn from_entries(entries: Vec<LogEntry>) -> AlgorithmicLog {
        AlgorithmicLog { entries }
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn params(&self) -> Option<&NasParams> {
        match self.entries.first() {
            Some(LogEntry::Instruction { params, .. }) => Some(params),
            _ => None,
        }
    }

    fn push(&mut self, e: LogEntry) {
        self.entries.push(e);
    }

    fn render_entry(&self, e: &LogEntry) -> String {
        match e {
            LogEntry::Instruction { text, .. } => format!("[0] instruction: {text}"),
            LogEntry::Action { step, action } => {
                let text = self.params().map_or_else(|| format!("{action:?}"), |p| p.render_action(action));
                format!("[{step}] action: {text}")
            }
            LogEntry::Observation { step, observation } => format!("[{step}] observation: {}", observation.text),
        }
    }

    /// The instruction followed by as many of the newest entries as fit in
    /// `budget` tokens; older entries are dropped first.
    pub fn render_window(&self, budget: usize) -> String {
        let Some(first) = self.entries.first() else { return String::new() };
        let head = self.render_entry(first);
        let mut used = prompt_estimate_tokens(&head);
        let mut tail = Vec::new();
        for e in self.entries[1..].iter().rev() {
            let line = self.render_entry(e);
            let cost = prompt_estimate_tokens(&line) + 1;
            if used + cost > budget {
                break;
            }
            used += cost;
            tail.push(line);
        }
        let omitted = self.entries.len() - 1 - tail.len();
        let mut out = head;
        if omitted > 0 {
            let _ = write!(out, "\n({omitted} earlier entries omitted)");
        }
        for line in tail.into_iter().rev() {
            out.push('\n');
            out.push_str(&line);
        }
        out
    }
}

/// Algorithm state implied by the successful actions in a log.
#[derive(Clone, Debug, Default, PartialEq)]
struct Phase {
    initialized: bool,
    constraints: bool,
    completed: usize,
    sent: BTreeSet<AgentId>,
    sent_any: bool,
    read: bool,
    best: Option<Vec<(VarId, usize)>>,
    adopted: BTreeSet<VarId>,
    terminated: bool,
}

impl Phase {
    fn apply(&mut self, params: &NasParams, action: &EnvAction, obs: &Observation) {
        if !obs.ok {
            return;
        }
        match action {
            EnvAction::InitializeAssignments => self.initialized = true,
            EnvAction::GenerateConstraints => self.constraints = true,
            EnvAction::SendAssignment { to } => {
                self.sent.extend(to.iter().copied());
                self.sent_any = true;
            }
            EnvAction::ReadInbox => self.read = true,
            EnvAction::ComputeBestAction => self.best = obs.best.clone(),
            EnvAction::AdoptValue { var, .. } | EnvAction::AdoptRandom { var } => {
                self.adopted.insert(*var);
                if self.adopted.len() == params.vars.len() {
                    self.completed += 1;
                    self.sent.clear();
                    self.sent_any = false;
                    self.read = false;
                    self.best = None;
                    self.adopted.clear();
                }
            }
            EnvAction::Noop => {}
            EnvAction::Terminate => self.terminated = true,
        }
    }

    fn replay(log: &AlgorithmicLog) -> Option<Phase> {
        let params = log.params()?;
        let mut phase = Phase::default();
        let mut last: Option<&EnvAction> = None;
        for e in &log.entries[1..] {
            match e {
                LogEntry::Action { action, .. } => last = Some(action),
                LogEntry::Observation { observation, .. } => {
                    if let Some(a) = last.take() {
                        phase.apply(params, a, observation);
                    }
                }
                LogEntry::Instruction { .. } => return None,
            }
        }
        Some(phase)
    }

    fn all_sent(&self, params: &NasParams) -> bool {
        self.sent_any && params.neighbors.iter().all(|n| self.sent.contains(&n.agent))
    }
}

/// The next action of a correct DSA simulator given the log so far.
pub fn reference_action(log: &AlgorithmicLog) -> EnvAction {
    let (Some(params), Some(phase)) = (log.params(), Phase::replay(log)) else {
        log::warn!("unrecognized log state; falling back to noop");
        return EnvAction::Noop;
    };
    if phase.terminated {
        return EnvAction::Noop;
    }
    if !phase.initialized {
        return EnvAction::InitializeAssignments;
    }
    if !phase.constraints {
        return EnvAction::GenerateConstraints;
    }
    if phase.completed >= params.iterations {
        return EnvAction::Terminate;
    }
    // Once the inbox is read, unsent neighbors miss this iteration's values.
    if !phase.read && !phase.all_sent(params) {
        let to = params.neighbors.iter().map(|n| n.agent).filter(|a| !phase.sent.contains(a)).collect();
        return EnvAction::SendAssignment { to };
    }
    if !phase.read {
        return EnvAction::ReadInbox;
    }
    let Some(best) = &phase.best else { return EnvAction::ComputeBestAction };
    let iteration = phase.completed + 1;
    for v in &params.vars {
        if phase.adopted.contains(&v.var) {
            continue;
        }
        if stream::dsa_explores(params.seed, v.var.0, iteration, params.epsilon) {
            return EnvAction::AdoptRandom { var: v.var };
        }
        let value = best.iter().find(|(x, _)| *x == v.var).map_or(0, |&(_, d)| d);
        return EnvAction::AdoptValue { var: v.var, value };
    }
    EnvAction::Noop
}

pub type AssignmentBus = MessageBus<Vec<(VarId, usize)>>;

/// One agent's environment. Sends and reads go through a bus shared with
/// the other agents' environments.
pub struct NasEnv<'a> {
    task: &'a VlTask,
    params: NasParams,
    phase: Phase,
    values: Vec<usize>,
    known: Assignment,
    log: AlgorithmicLog,
    steps: usize,
    history: Vec<Vec<usize>>,
    bus: Arc<Mutex<AssignmentBus>>,
}

impl<'a> NasEnv<'a> {
    /// Fresh environment; the returned observation carries the instruction.
    pub fn reset(task: &'a VlTask, params: NasParams, bus: Arc<Mutex<AssignmentBus>>) -> (NasEnv<'a>, Observation) {
        let values: Vec<usize> =
            params.vars.iter().map(|v| stream::initial_value(params.seed, v.var.0, v.domain.len())).collect();
        let text = params.instruction(&task.instructions[params.agent.0].text);
        let obs = Observation { ok: true, text: text.clone(), terminal: false, completed: 0, best: None };
        let env = NasEnv {
            task,
            known: Assignment::empty(task.instance.num_vars()),
            history: vec![values.clone()],
            values,
            phase: Phase::default(),
            log: AlgorithmicLog::new(text, params.clone()),
            steps: 0,
            params,
            bus,
        };
        (env, obs)
    }

    /// Environment with a private bus, for driving a single agent.
    pub fn standalone(task: &'a VlTask, agent: AgentId, epsilon: f64, seed: u64, iterations: usize) -> (NasEnv<'a>, Observation) {
        let bus = Arc::new(Mutex::new(MessageBus::new(task.instance.num_agents(), BusConfig { seed, ..BusConfig::default() })));
        NasEnv::reset(task, NasParams::of(task, agent, epsilon, seed, iterations), bus)
    }

    pub fn log(&self) -> &AlgorithmicLog {
        &self.log
    }

    pub fn params(&self) -> &NasParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn completed(&self) -> usize {
        self.phase.completed
    }

    pub fn terminated(&self) -> bool {
        self.phase.terminated
    }

    /// Own values after each completed iteration; entry 0 is the initial draw.
    pub fn history(&self) -> &[Vec<usize>] {
        &self.history
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn known(&self) -> &Assignment {
        &self.known
    }

    fn var_index(&self, var: VarId) -> Option<usize> {
        self.params.vars.iter().position(|v| v.var == var)
    }

    /// Why `action` is not allowed now, if it is not.
    pub fn check(&self, action: &EnvAction) -> Result<(), String> {
        let p = &self.phase;
        if p.terminated {
            return Err("environment already terminated".into());
        }
        let finished = p.completed >= self.params.iterations;
        let require = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(msg.to_string()) };
        match action {
            EnvAction::Noop | EnvAction::Terminate => Ok(()),
            EnvAction::InitializeAssignments => require(!p.initialized, "assignments already initialized"),
            EnvAction::GenerateConstraints => {
                require(p.initialized, "assignments not initialized")?;
                require(!p.constraints, "constraints already generated")
            }
            EnvAction::SendAssignment { to } => {
                require(p.initialized, "assignments not initialized")?;
                require(p.constraints, "constraints not initialized")?;
                require(!finished, "all iterations are complete")?;
                require(!p.read, "inbox already read this iteration")?;
                require(!to.is_empty() || self.params.neighbors.is_empty(), "no recipients given")?;
                let known: BTreeSet<AgentId> = self.params.neighbors.iter().map(|n| n.agent).collect();
                require(to.iter().all(|a| known.contains(a)), "recipient is not a neighbor")
            }
            EnvAction::ReadInbox => {
                require(p.constraints, "constraints not initialized")?;
                require(!finished, "all iterations are complete")?;
                require(p.sent_any, "send your assignment first")?;
                require(!p.read, "inbox already read this iteration")
            }
            EnvAction::ComputeBestAction => {
                require(p.constraints, "constraints not initialized")?;
                require(p.read, "read the inbox first")
            }
            EnvAction::AdoptValue { var, value } => {
                let i = self.var_index(*var).ok_or("not one of your variables")?;
                require(*value < self.params.vars[i].domain.len(), "value outside the domain")?;
                require(p.best.is_some(), "compute the best action first")?;
                require(!p.adopted.contains(var), "variable already adopted this iteration")
            }
            EnvAction::AdoptRandom { var } => {
                self.var_index(*var).ok_or("not one of your variables")?;
                require(p.best.is_some(), "compute the best action first")?;
                require(!p.adopted.contains(var), "variable already adopted this iteration")
            }
        }
    }

    /// Every action accepted in the current state, in a fixed order.
    pub fn legal_actions(&self) -> Vec<EnvAction> {
        let mut cands = vec![EnvAction::InitializeAssignments, EnvAction::GenerateConstraints];
        let all: Vec<AgentId> = self.params.neighbors.iter().map(|n| n.agent).collect();
        cands.push(EnvAction::SendAssignment { to: all.clone() });
        let rest: Vec<AgentId> = all.iter().copied().filter(|a| !self.phase.sent.contains(a)).collect();
        if !rest.is_empty() && rest.len() < all.len() && rest.len() > 1 {
            cands.push(EnvAction::SendAssignment { to: rest });
        }
        if all.len() > 1 {
            cands.extend(all.iter().map(|&a| EnvAction::SendAssignment { to: vec![a] }));
        }
        cands.push(EnvAction::ReadInbox);
        cands.push(EnvAction::ComputeBestAction);
        for v in &self.params.vars {
            cands.extend((0..v.domain.len()).map(|value| EnvAction::AdoptValue { var: v.var, value }));
            cands.push(EnvAction::AdoptRandom { var: v.var });
        }
        cands.push(EnvAction::Noop);
        cands.push(EnvAction::Terminate);
        cands.into_iter().filter(|a| self.check(a).is_ok()).collect()
    }

    fn label(&self, var: VarId, value: usize) -> String {
        self.task.instance.domain(var)[value].clone()
    }

    fn own_values(&self) -> Vec<(VarId, usize)> {
        self.params.vars.iter().zip(&self.values).map(|(v, &x)| (v.var, x)).collect()
    }

    fn execute(&mut self, action: &EnvAction) -> Observation {
        let inst = &self.task.instance;
        let mut best = None;
        let mut terminal = false;
        let text = match action {
            EnvAction::InitializeAssignments => {
                for (v, x) in self.own_values() {
                    self.known.set(v, x);
                }
                let parts: Vec<String> =
                    self.own_values().iter().map(|&(v, x)| format!("{} = {}", inst.var_name(v), self.label(v, x))).collect();
                format!("Initialized {}.", parts.join(", "))
            }
            EnvAction::GenerateConstraints => {
                let count: usize = self.params.vars.iter().map(|v| inst.incident_edges(v.var).len()).sum();
                format!("Generated {count} constraints from the instruction.")
            }
            EnvAction::SendAssignment { to } => {
                let payload = self.own_values();
                let mut bus = self.bus.lock().expect("bus lock");
                for &b in to {
                    bus.send(self.params.agent, b, payload.clone());
                }
                let names: Vec<String> = to.iter().map(|&a| inst.agent_name(a).to_string()).collect();
                format!("Sent assignment to {}.", if names.is_empty() { "nobody".into() } else { names.join(", ") })
            }
            EnvAction::ReadInbox => {
                let msgs = self.bus.lock().expect("bus lock").take_inbox(self.params.agent);
                let mut heard = BTreeSet::new();
                let mut parts = Vec::new();
                for m in msgs {
                    heard.insert(m.from);
                    for (v, x) in m.payload {
                        self.known.set(v, x);
                        parts.push(format!("{} = {}", inst.var_name(v), self.label(v, x)));
                    }
                }
                let missing: Vec<&str> =
                    self.params.neighbors.iter().filter(|n| !heard.contains(&n.agent)).map(|n| n.name.as_str()).collect();
                let mut s = if parts.is_empty() { "Received nothing.".to_string() } else { format!("Received {}.", parts.join(", ")) };
                if !missing.is_empty() {
                    let _ = write!(s, " No message from {}.", missing.join(", "));
                }
                s
            }
            EnvAction::ComputeBestAction => {
                for (v, x) in self.own_values() {
                    self.known.set(v, x);
                }
                let it = self.phase.completed + 1;
                let vals: Vec<(VarId, usize)> = self
                    .params
                    .vars
                    .iter()
                    .map(|v| (v.var, best_local_action_known(inst, v.var, &self.known).0))
                    .collect();
                let parts: Vec<String> = vals
                    .iter()
                    .map(|&(v, x)| {
                        let explore = stream::dsa_explores(self.params.seed, v.0, it, self.params.epsilon);
                        format!(
                            "{} = {} (exploration draw: {})",
                            inst.var_name(v),
                            self.label(v, x),
                            if explore { "explore" } else { "exploit" }
                        )
                    })
                    .collect();
                best = Some(vals);
                format!("Best values: {}.", parts.join(", "))
            }
            EnvAction::AdoptValue { var, value } => self.adopt(*var, *value),
            EnvAction::AdoptRandom { var } => {
                let d = inst.domain_size(*var);
                let value = stream::dsa_random_value(self.params.seed, var.0, self.phase.completed + 1, d);
                self.adopt(*var, value)
            }
            EnvAction::Noop => "Nothing happened.".into(),
            EnvAction::Terminate => {
                terminal = true;
                "Terminated.".into()
            }
        };
        Observation { ok: true, text, terminal, completed: self.phase.completed, best }
    }

    fn adopt(&mut self, var: VarId, value: usize) -> String {
        if let Some(i) = self.var_index(var) {
            self.values[i] = value;
        }
        format!("{} set to {}.", self.task.instance.var_name(var), self.label(var, value))
    }

    /// Executes one action and logs it with its observation. Illegal actions
    /// leave the state untouched and yield an error observation.
    pub fn step(&mut self, action: EnvAction) -> Observation {
        self.steps += 1;
        let step = self.steps;
        self.log.push(LogEntry::Action { step, action: action.clone() });
        let mut obs = match self.check(&action) {
            Ok(()) => self.execute(&action),
            Err(msg) => Observation {
                ok: false,
                text: format!("Error: {msg}."),
                terminal: self.phase.terminated,
                completed: self.phase.completed,
                best: None,
            },
        };
        let before = self.phase.completed;
        self.phase.apply(&self.params, &action, &obs);
        if self.phase.completed > before {
            self.history.push(self.values.clone());
            let _ = write!(obs.text, " Iteration {} complete.", self.phase.completed);
        }
        obs.completed = self.phase.completed;
        self.log.push(LogEntry::Observation { step, observation: obs.clone() });
        obs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NasStep {
    pub agent: AgentId,
    pub step: usize,
    /// 1-based iteration the step belongs to.
    pub iteration: usize,
    pub action: EnvAction,
    pub reference: EnvAction,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NasOutcome {
    pub steps: Vec<NasStep>,
    pub steps_per_agent: Vec<usize>,
    pub truncated_agents: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    /// Accuracy per block of 10 iterations; `None` when a block has no steps.
    pub windows: Vec<Option<f64>>,
}

/// Fraction of steps whose action equals the reference action.
pub fn decision_accuracy(steps: &[NasStep], iterations: usize) -> Result<Accuracy, AgentError> {
    if steps.is_empty() {
        return Err(AgentError::Invalid("run has no action log".into()));
    }
    let frac = |xs: &[&NasStep]| xs.iter().filter(|s| s.correct).count() as f64 / xs.len() as f64;
    let all: Vec<&NasStep> = steps.iter().collect();
    let windows = (0..iterations.div_ceil(10))
        .map(|w| {
            let xs: Vec<&NasStep> = steps.iter().filter(|s| (s.iteration.max(1) - 1) / 10 == w).collect();
            (!xs.is_empty()).then(|| frac(&xs))
        })
        .collect();
    Ok(Accuracy { overall: frac(&all), windows })
}

struct Runner<'a> {
    env: NasEnv<'a>,
    budget: usize,
    pending_read: bool,
    done: bool,
    truncated: bool,
    steps: Vec<NasStep>,
}

impl Runner<'_> {
    fn iteration(&self) -> usize {
        (self.env.completed() + 1).min(self.env.params.iterations)
    }

    /// Steps until the agent wants to read its inbox or is finished.
    fn advance(&mut self, task: &VlTask, client: &ModelClient) -> Result<(), AgentError> {
        while !self.done && !self.pending_read {
            if self.env.steps() >= self.budget {
                self.truncated = true;
                self.done = true;
                break;
            }
            let reference = reference_action(self.env.log());
            let options = self.env.legal_actions();
            let ctx = QueryContext::NextAction(ActionCtx {
                info: agent_info(task, self.env.params.agent),
                step: self.env.steps() + 1,
                log: self.env.log(),
                options,
            });
            let decision = client.ask(&ctx, self.iteration())?;
            let action = decision.action().cloned().unwrap_or(EnvAction::Noop);
            self.steps.push(NasStep {
                agent: self.env.params.agent,
                step: self.env.steps() + 1,
                iteration: self.iteration(),
                correct: action == reference,
                action: action.clone(),
                reference,
            });
            if action == EnvAction::ReadInbox && self.env.check(&action).is_ok() {
                self.pending_read = true;
                break;
            }
            if self.env.step(action).terminal {
                self.done = true;
            }
        }
        Ok(())
    }
}

/// Runs every agent's environment under the policy in `client`. Agents step
/// concurrently between barriers; a barrier is reached when every agent is
/// waiting to read its inbox or has finished, and then the bus round advances.
pub fn nas_run(task: &VlTask, client: &ModelClient, params: &RunParams) -> Result<ArchetypeRun, AgentError> {
    params.validate()?;
    let inst = &task.instance;
    let bus = Arc::new(Mutex::new(MessageBus::new(inst.num_agents(), params.bus)));
    let mut runners: Vec<Runner<'_>> = (0..inst.num_agents())
        .map(|a| {
            let p = NasParams::of(task, AgentId(a), params.epsilon, params.seed, params.iterations);
            let budget = params.budget_factor * p.steps_per_iteration() * params.iterations;
            let (env, _) = NasEnv::reset(task, p, bus.clone());
            Runner { env, budget, pending_read: false, done: false, truncated: false, steps: Vec::new() }
        })
        .collect();
    loop {
        runners.par_iter_mut().try_for_each(|r| r.advance(task, client))?;
        if !runners.iter().any(|r| r.pending_read) {
            break;
        }
        bus.lock().expect("bus lock").advance_round();
        for r in runners.iter_mut().filter(|r| r.pending_read) {
            r.pending_read = false;
            r.env.step(EnvAction::ReadInbox);
        }
    }

    let mut assignments = vec![vec![0; inst.num_vars()]; params.iterations + 1];
    for r in &runners {
        let hist = r.env.history();
        for (t, row) in assignments.iter_mut().enumerate() {
            let vals = &hist[t.min(hist.len() - 1)];
            for (v, &x) in r.env.params.vars.iter().zip(vals) {
                row[v.var.0] = x;
            }
        }
    }
    let truncated_agents: Vec<AgentId> = runners.iter().filter(|r| r.truncated).map(|r| r.env.params.agent).collect();
    let outcome = NasOutcome {
        steps_per_agent: runners.iter().map(|r| r.env.steps()).collect(),
        steps: runners.into_iter().flat_map(|r| r.steps).collect(),
        truncated_agents,
    };
    let stats = bus.lock().expect("bus lock").stats();
    Ok(ArchetypeRun {
        assignments,
        self_costs: None,
        bus: stats,
        truncated: !outcome.truncated_agents.is_empty(),
        nas: Some(outcome),
        consensus_mismatches: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{gen_ldms, generate, BenchmarkKind, GenParams};
    use crate::dcop::{run_dsa, DsaParams};
    use crate::model::{NoisyOracle, PromptOptions, ResolveRule, ScriptedOracle};

    fn coloring(seed: u64) -> VlTask {
        generate(&GenParams::new(BenchmarkKind::Ldgc, 6, 8, 4, seed)).unwrap()
    }

    fn scripted(task: &VlTask) -> ModelClient {
        ModelClient::new(Arc::new(ScriptedOracle::new(ResolveRule::Average)), PromptOptions::default(), task.instance.num_agents())
    }

    #[test]
    fn scripted_controller_reproduces_dsa() {
        for task in [coloring(3), gen_ldms(5, (1, 3), 4, 9).unwrap().with_machine_blocks()] {
            let client = scripted(&task);
            let params = RunParams::new(0.1, 20, 41);
            let run = nas_run(&task, &client, &params).unwrap();
            let trace = run_dsa(&task.instance, DsaParams { epsilon: 0.1, iterations: 20 }, 41).unwrap();
            assert_eq!(run.assignments, trace.assignments);
            assert!(!run.truncated);
            let out = run.nas.unwrap();
            let acc = decision_accuracy(&out.steps, 20).unwrap();
            assert_eq!(acc.overall, 1.0);
            assert_eq!(acc.windows, vec![Some(1.0), Some(1.0)]);
            for a in 0..task.instance.num_agents() {
                let k = task.instance.vars_of(AgentId(a)).len();
                assert_eq!(out.steps_per_agent[a], 2 + (3 + k) * 20 + 1);
                assert_eq!(client.ledger().agent_total(AgentId(a)), out.steps_per_agent[a] as u64);
            }
        }
    }

    #[test]
    fn illegal_actions_leave_state_unchanged() {
        let task = coloring(1);
        let (mut env, first) = NasEnv::standalone(&task, AgentId(0), 0.1, 5, 3);
        assert!(first.ok && first.text.contains("initialize-assignments"));
        let before = env.legal_actions();
        let obs = env.step(EnvAction::ComputeBestAction);
        assert!(!obs.ok);
        assert!(obs.text.contains("constraints not initialized"));
        assert_eq!(env.legal_actions(), before);
        assert_eq!(reference_action(env.log()), EnvAction::InitializeAssignments);

        assert!(env.step(EnvAction::InitializeAssignments).ok);
        assert!(!env.step(EnvAction::InitializeAssignments).ok);
        assert!(!env.step(EnvAction::ReadInbox).ok);
        assert!(!env.step(EnvAction::AdoptRandom { var: VarId(0) }).ok);
        assert_eq!(reference_action(env.log()), EnvAction::GenerateConstraints);
        assert!(env.step(EnvAction::Terminate).terminal);
        let after = env.step(EnvAction::Noop);
        assert!(!after.ok && after.terminal);
        assert_eq!(env.steps(), 7);
    }

    #[test]
    fn adoption_completes_iteration_and_records_history() {
        let task = coloring(2);
        let (mut env, _) = NasEnv::standalone(&task, AgentId(1), 0.0, 8, 2);
        for _ in 0..6 {
            let a = reference_action(env.log());
            assert!(env.check(&a).is_ok(), "{a:?}");
            env.step(a);
        }
        assert_eq!(env.completed(), 1);
        assert_eq!(env.history().len(), 2);
        assert!(matches!(reference_action(env.log()), EnvAction::SendAssignment { .. }));
    }

    #[test]
    fn legal_actions_are_accepted_and_others_rejected() {
        let task = coloring(4);
        let (mut env, _) = NasEnv::standalone(&task, AgentId(2), 0.2, 3, 4);
        let all = {
            let mut v = vec![
                EnvAction::InitializeAssignments,
                EnvAction::GenerateConstraints,
                EnvAction::ReadInbox,
                EnvAction::ComputeBestAction,
                EnvAction::SendAssignment { to: vec![AgentId(99)] },
                EnvAction::AdoptValue { var: VarId(2), value: 0 },
                EnvAction::AdoptValue { var: VarId(0), value: 0 },
            ];
            v.extend(env.legal_actions());
            v
        };
        for _ in 0..40 {
            if env.terminated() {
                break;
            }
            let legal = env.legal_actions();
            for a in &all {
                assert_eq!(env.check(a).is_ok(), legal.contains(a), "{a:?}");
            }
            assert!(legal.contains(&reference_action(env.log())));
            // A partial send first, so the remaining-recipients option shows up.
            match legal.iter().find(|a| matches!(a, EnvAction::SendAssignment { to } if to.len() == 1)) {
                Some(one) if env.completed() == 1 => env.step(one.clone()),
                _ => env.step(reference_action(env.log())),
            };
        }
    }

    proptest::proptest! {
        #[test]
        fn reference_is_always_legal_on_random_walks(seed in 0u64..10_000, agent in 0usize..6) {
            use rand::{Rng, SeedableRng};
            let task = coloring(seed % 7);
            let (mut env, _) = NasEnv::standalone(&task, AgentId(agent), 0.2, seed, 5);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..120 {
                let legal = env.legal_actions();
                let reference = reference_action(env.log());
                proptest::prop_assert!(legal.contains(&reference), "{:?} not in {:?}", reference, legal);
                let pick = if rng.gen_bool(0.5) {
                    reference
                } else {
                    let wrong: Vec<&EnvAction> = legal.iter().filter(|a| **a != EnvAction::Terminate).collect();
                    wrong[rng.gen_range(0..wrong.len())].clone()
                };
                if env.step(pick).terminal {
                    break;
                }
            }
        }
    }

    #[test]
    fn noise_extremes_give_accuracy_bounds() {
        let task = coloring(5);
        let params = RunParams::new(0.03, 10, 2);
        let exact = ModelClient::new(Arc::new(NoisyOracle::new(0.0, 1, ResolveRule::Average)), PromptOptions::default(), 6);
        let run = nas_run(&task, &exact, &params).unwrap();
        assert_eq!(decision_accuracy(&run.nas.unwrap().steps, 10).unwrap().overall, 1.0);

        let wrong = ModelClient::new(Arc::new(NoisyOracle::new(1.0, 1, ResolveRule::Average)), PromptOptions::default(), 6);
        let run = nas_run(&task, &wrong, &params).unwrap();
        assert!(run.truncated);
        let out = run.nas.unwrap();
        assert_eq!(decision_accuracy(&out.steps, 10).unwrap().overall, 0.0);
        let budget = params.budget_factor * (3 + 1) * 10;
        assert!(out.steps_per_agent.iter().all(|&s| s == budget));
    }

    #[test]
    fn drops_do_not_stall_the_barrier() {
        let task = coloring(6);
        let mut params = RunParams::new(0.1, 15, 3);
        params.bus = BusConfig { drop: 0.3, max_delay: 1, seed: 3 };
        let client = scripted(&task);
        let run = nas_run(&task, &client, &params).unwrap();
        assert!(!run.truncated);
        assert!(run.bus.dropped > 0);
        assert_eq!(run.assignments.len(), 16);
    }

    #[test]
    fn window_keeps_instruction_and_newest_entries() {
        let task = coloring(7);
        let (mut env, _) = NasEnv::standalone(&task, AgentId(0), 0.1, 1, 50);
        for _ in 0..200 {
            env.step(reference_action(env.log()));
        }
        let full = env.log().render_window(usize::MAX / 2);
        assert!(!full.contains("omitted"));
        let small = env.log().render_window(400);
        assert!(small.starts_with("[0] instruction:"));
        assert!(small.contains("earlier entries omitted"));
        assert!(small.ends_with(full.lines().last().unwrap()));
        assert!(prompt_estimate_tokens(&small) <= 420);
    }

    #[test]
    fn accuracy_needs_steps() {
        assert!(decision_accuracy(&[], 10).is_err());
    }

    #[test]
    fn log_round_trips_through_json() {
        let task = coloring(8);
        let (mut env, _) = NasEnv::standalone(&task, AgentId(0), 0.1, 1, 2);
        for _ in 0..9 {
            env.step(reference_action(env.log()));
        }
        let json = serde_json::to_string(env.log()).unwrap();
        let back: AlgorithmicLog = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, env.log());
        assert_eq!(reference_action(&back), reference_action(env.log()));
    }
}
