//! Decision models: the uniform interface through which agents ask a
//! (possibly language-model backed) policy for constraint messages, best
//! actions, cost tables and next algorithmic steps.

mod noisy;
mod parse;
mod prompt;
mod remote;
mod scripted;

pub use noisy::NoisyOracle;
pub use parse::{extract_answer, format_answer, parse_decision, validate_pair, ParseError};
pub use prompt::{build_prompt, estimate_tokens as prompt_estimate_tokens, Prompt, PromptOptions};
pub use remote::{RemoteConfig, RemoteModel};
pub use scripted::{constraint_message, merge_tables, ConstraintData, ScriptedOracle};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::nas::{AlgorithmicLog, EnvAction};
use crate::benchgen::InstructionDoc;
use crate::dcop::{AgentId, Cost, CostTable, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    GenerateConstraint,
    GetMaxAction,
    Resolve,
    GetAction,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::GenerateConstraint, TaskKind::GetMaxAction, TaskKind::Resolve, TaskKind::GetAction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::GenerateConstraint => "generate-constraint",
            TaskKind::GetMaxAction => "get-max-action",
            TaskKind::Resolve => "resolve",
            TaskKind::GetAction => "get-action",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

/// A variable together with its display name and value labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VarRef {
    pub var: VarId,
    pub name: String,
    pub domain: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentInfo {
    pub agent: AgentId,
    pub name: String,
    pub instruction: InstructionDoc,
}

/// FMC-DSA constraint message for one constraint of the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCtx {
    pub info: AgentInfo,
    pub edge: usize,
    pub own_var: VarRef,
    pub other_var: VarRef,
    pub other_agent: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborValue {
    pub var: VarRef,
    pub owner: String,
    /// Latest known value; `None` if nothing was received yet.
    pub value: Option<usize>,
}

/// Best values for all owned variables given the assignment context `C`
/// and the received constraint messages `O`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxActionCtx {
    pub info: AgentInfo,
    pub iteration: usize,
    pub vars: Vec<(VarRef, usize)>,
    pub neighbors: Vec<NeighborValue>,
    pub messages: Vec<String>,
}

/// CoPA proposal for the table of one edge. Tables use the edge orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalCtx {
    pub info: AgentInfo,
    pub edge: usize,
    pub scope: (VarRef, VarRef),
    pub round: usize,
    pub own_history: Vec<CostTable>,
    pub counterpart: Option<CostTable>,
    pub bounds: (Cost, Cost),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolveCtx {
    pub info: AgentInfo,
    pub edge: usize,
    pub scope: (VarRef, VarRef),
    pub own: CostTable,
    pub other: CostTable,
    pub bounds: (Cost, Cost),
}

#[derive(Clone, Debug)]
pub struct ActionCtx<'a> {
    pub info: AgentInfo,
    pub step: usize,
    pub log: &'a AlgorithmicLog,
    /// Every action the environment accepts in the current state.
    pub options: Vec<EnvAction>,
}

#[derive(Clone, Debug)]
pub enum QueryContext<'a> {
    ConstraintMessage(ConstraintCtx),
    TableProposal(ProposalCtx),
    MaxAction(MaxActionCtx),
    Resolve(ResolveCtx),
    NextAction(ActionCtx<'a>),
}

impl QueryContext<'_> {
    pub fn kind(&self) -> TaskKind {
        match self {
            QueryContext::ConstraintMessage(_) | QueryContext::TableProposal(_) => TaskKind::GenerateConstraint,
            QueryContext::MaxAction(_) => TaskKind::GetMaxAction,
            QueryContext::Resolve(_) => TaskKind::Resolve,
            QueryContext::NextAction(_) => TaskKind::GetAction,
        }
    }

    pub fn info(&self) -> &AgentInfo {
        match self {
            QueryContext::ConstraintMessage(c) => &c.info,
            QueryContext::TableProposal(c) => &c.info,
            QueryContext::MaxAction(c) => &c.info,
            QueryContext::Resolve(c) => &c.info,
            QueryContext::NextAction(c) => &c.info,
        }
    }

    /// Table scope and bounds for the table-valued contexts.
    pub fn table_shape(&self) -> Option<(&VarRef, &VarRef, (Cost, Cost))> {
        match self {
            QueryContext::TableProposal(c) => Some((&c.scope.0, &c.scope.1, c.bounds)),
            QueryContext::Resolve(c) => Some((&c.scope.0, &c.scope.1, c.bounds)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Answer {
    Constraint(String),
    Values(Vec<(VarId, usize)>),
    Table(CostTable),
    Action(EnvAction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDecision {
    pub kind: TaskKind,
    pub answer: Answer,
    pub raw: String,
    pub attempts: u32,
    pub fallback: bool,
    /// The prompt carried a chart as a text table instead of an image.
    pub text_fallback_visual: bool,
}

impl ModelDecision {
    pub fn values(&self) -> Option<&[(VarId, usize)]> {
        match &self.answer {
            Answer::Values(v) => Some(v),
            _ => None,
        }
    }

    pub fn table(&self) -> Option<&CostTable> {
        match &self.answer {
            Answer::Table(t) => Some(t),
            _ => None,
        }
    }

    pub fn action(&self) -> Option<&EnvAction> {
        match &self.answer {
            Answer::Action(a) => Some(a),
            _ => None,
        }
    }

    pub fn constraint(&self) -> Option<&str> {
        match &self.answer {
            Answer::Constraint(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("prompt for {0} lacks the ground-truth machine block")]
    MissingMachineBlock(String),
    #[error("context is missing {0}")]
    MissingContext(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl ModelError {
    /// Errors that must abort a run instead of degrading to a fallback.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, ModelError::Parse(_))
    }
}

pub trait DecisionModel: Send + Sync {
    fn query(&self, prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<ModelDecision, ModelError>;

    /// Short label used in reports, e.g. `scripted` or `noisy(p=0.35)`.
    fn label(&self) -> String;

    /// Whether the adapter needs the ground-truth block inside its prompts.
    fn wants_machine_block(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    Scripted,
    Noisy,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolveRule {
    Average,
    Maximum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub noise: f64,
    pub noise_seed: u64,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub multimodal: bool,
    pub cost_min: Cost,
    /// Defaults to `max(20, V + 2(|D|-1))` for the task when unset.
    pub cost_max: Option<Cost>,
    pub resolve_rule: ResolveRule,
    pub token_cap: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            kind: AdapterKind::Scripted,
            noise: 0.0,
            noise_seed: 0,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 60,
            retries: 3,
            max_in_flight: 4,
            multimodal: false,
            cost_min: 0,
            cost_max: None,
            resolve_rule: ResolveRule::Average,
            token_cap: 8000,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(ModelError::Config(format!("noise probability {} is outside [0, 1]", self.noise)));
        }
        if let Some(max) = self.cost_max {
            if max < self.cost_min {
                return Err(ModelError::Config(format!("cost bounds [{}, {max}] are empty", self.cost_min)));
            }
        }
        if self.max_in_flight == 0 {
            return Err(ModelError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            AdapterKind::Scripted => "scripted".into(),
            AdapterKind::Noisy => format!("noisy(p={})", self.noise),
            AdapterKind::Remote => format!("remote({})", self.model),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn DecisionModel>, ModelError> {
        self.validate()?;
        Ok(match self.kind {
            AdapterKind::Scripted => Arc::new(ScriptedOracle::new(self.resolve_rule)),
            AdapterKind::Noisy => Arc::new(NoisyOracle::new(self.noise, self.noise_seed, self.resolve_rule)),
            AdapterKind::Remote => Arc::new(RemoteModel::new(RemoteConfig::from_adapter(self)?)?),
        })
    }
}

/// Default upper cost bound for a task with violation weight `v` and
/// largest domain `d`.
pub fn default_cost_max(v: Cost, d: usize) -> Cost {
    20.max(v + 2 * d.saturating_sub(1) as Cost)
}

/// Per-(agent, task kind) call counters.
#[derive(Debug)]
pub struct QueryLedger {
    counts: Vec<[AtomicU64; 4]>,
    fallbacks: Vec<AtomicU64>,
    text_fallback: AtomicU64,
}

impl QueryLedger {
    pub fn new(agents: usize) -> QueryLedger {
        QueryLedger {
            counts: (0..agents).map(|_| Default::default()).collect(),
            fallbacks: (0..agents).map(|_| AtomicU64::new(0)).collect(),
            text_fallback: AtomicU64::new(0),
        }
    }

    pub fn record(&self, agent: AgentId, kind: TaskKind) {
        self.counts[agent.0][kind.index()].fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self, agent: AgentId, kind: TaskKind) -> u64 {
        self.counts[agent.0][kind.index()].load(Ordering::Relaxed)
    }

    pub fn agent_total(&self, agent: AgentId) -> u64 {
        TaskKind::ALL.iter().map(|&k| self.count(agent, k)).sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.counts.len()).map(|a| self.agent_total(AgentId(a))).sum()
    }

    pub fn fallbacks(&self, agent: AgentId) -> u64 {
        self.fallbacks[agent.0].load(Ordering::Relaxed)
    }

    pub fn text_fallbacks(&self) -> u64 {
        self.text_fallback.load(Ordering::Relaxed)
    }

    /// `table[agent][kind]`.
    pub fn snapshot(&self) -> Vec<[u64; 4]> {
        (0..self.counts.len())
            .map(|a| TaskKind::ALL.map(|k| self.count(AgentId(a), k)))
            .collect()
    }
}

/// A prompt paired with the ground-truth answer for distillation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedPrompt {
    pub agent: String,
    pub kind: TaskKind,
    pub iteration: usize,
    pub prompt: String,
    pub answer: String,
}

struct Capture {
    blocks: Vec<String>,
    items: Mutex<Vec<(usize, CapturedPrompt)>>,
}

/// What agents hold: an adapter plus prompt options, call accounting and
/// optional prompt capture.
pub struct ModelClient {
    model: Arc<dyn DecisionModel>,
    options: PromptOptions,
    ledger: QueryLedger,
    capture: Option<Capture>,
    oracle: ScriptedOracle,
}

impl ModelClient {
    pub fn new(model: Arc<dyn DecisionModel>, options: PromptOptions, agents: usize) -> ModelClient {
        let oracle = ScriptedOracle::new(options.resolve_rule);
        ModelClient { model, options, ledger: QueryLedger::new(agents), capture: None, oracle }
    }

    /// Records every prompt together with the scripted answer derived from
    /// `blocks` (one machine block per agent).
    pub fn with_capture(mut self, blocks: Vec<String>) -> ModelClient {
        self.capture = Some(Capture { blocks, items: Mutex::new(Vec::new()) });
        self
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn options(&self) -> &PromptOptions {
        &self.options
    }

    pub fn label(&self) -> String {
        self.model.label()
    }

    pub fn ask(&self, ctx: &QueryContext<'_>, iteration: usize) -> Result<ModelDecision, ModelError> {
        let agent = ctx.info().agent;
        let mut options = self.options.clone();
        options.include_machine_block = self.model.wants_machine_block();
        let prompt = build_prompt(ctx, &options)?;
        self.ledger.record(agent, ctx.kind());
        if let Some(cap) = &self.capture {
            self.capture_one(cap, ctx, iteration)?;
        }
        let decision = self.model.query(&prompt, ctx)?;
        if decision.fallback {
            self.ledger.fallbacks[agent.0].fetch_add(1, Ordering::Relaxed);
        }
        if prompt.text_fallback_visual {
            self.ledger.text_fallback.fetch_add(1, Ordering::Relaxed);
        }
        Ok(ModelDecision { text_fallback_visual: prompt.text_fallback_visual, ..decision })
    }

    fn capture_one(&self, cap: &Capture, ctx: &QueryContext<'_>, iteration: usize) -> Result<(), ModelError> {
        let agent = ctx.info().agent;
        let mut plain = self.options.clone();
        plain.include_machine_block = false;
        let shown = build_prompt(ctx, &plain)?;
        let mut with_block = shown.clone();
        with_block.machine_block = cap.blocks.get(agent.0).cloned();
        let truth = self.oracle.query(&with_block, ctx)?;
        let item = CapturedPrompt {
            agent: ctx.info().name.clone(),
            kind: ctx.kind(),
            iteration,
            prompt: shown.render(),
            answer: format_answer(&truth.answer, ctx),
        };
        cap.items.lock().expect("capture lock").push((agent.0, item));
        Ok(())
    }

    /// Captured prompts in a scheduling-independent order.
    pub fn captured(&self) -> Vec<CapturedPrompt> {
        let Some(cap) = &self.capture else { return Vec::new() };
        let mut items = cap.items.lock().expect("capture lock").clone();
        items.sort_by(|(a, x), (b, y)| {
            (x.iteration, a, x.kind, &x.prompt).cmp(&(y.iteration, b, y.kind, &y.prompt))
        });
        items.into_iter().map(|(_, c)| c).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::agents::agent_info;
    use crate::agents::nas::{reference_action, NasEnv};
    use crate::benchgen::{gen_ldms, generate, BenchmarkKind, GenParams, VlTask};
    use crate::dcop::{best_local_action_known, Assignment};

    pub(crate) fn coloring(seed: u64) -> VlTask {
        generate(&GenParams::new(BenchmarkKind::Ldgc, 6, 9, 4, seed)).unwrap()
    }

    pub(crate) fn var_ref(task: &VlTask, v: VarId) -> VarRef {
        VarRef { var: v, name: task.instance.var_name(v).into(), domain: task.instance.domain(v).to_vec() }
    }

    pub(crate) fn max_action_ctx(task: &VlTask, agent: AgentId, known: &Assignment) -> QueryContext<'static> {
        let inst = &task.instance;
        let own = inst.vars_of(agent);
        let mut foreign: Vec<VarId> = own
            .iter()
            .flat_map(|&v| inst.neighbors(v).map(|(_, o)| o).collect::<Vec<_>>())
            .filter(|o| inst.owner(*o) != agent)
            .collect();
        foreign.sort();
        foreign.dedup();
        QueryContext::MaxAction(MaxActionCtx {
            info: agent_info(task, agent),
            iteration: 1,
            vars: own.iter().map(|&v| (var_ref(task, v), known.get(v).unwrap())).collect(),
            neighbors: foreign
                .into_iter()
                .map(|v| NeighborValue {
                    var: var_ref(task, v),
                    owner: inst.agent_name(inst.owner(v)).into(),
                    value: known.get(v),
                })
                .collect(),
            messages: Vec::new(),
        })
    }

    fn random_context(task: &VlTask, rng: &mut ChaCha8Rng, agent: AgentId) -> Assignment {
        let inst = &task.instance;
        let mut known = Assignment::empty(inst.num_vars());
        for v in 0..inst.num_vars() {
            let var = VarId(v);
            if inst.owner(var) == agent || rng.gen_bool(0.8) {
                known.set(var, rng.gen_range(0..inst.domain_size(var)));
            }
        }
        known
    }

    #[test]
    fn scripted_best_values_match_symbolic_best_response() {
        let scripted = ScriptedOracle::new(ResolveRule::Average);
        let opts = PromptOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tasks = [coloring(1), coloring(2), gen_ldms(6, (1, 3), 5, 3).unwrap().with_machine_blocks()];
        let mut checked = 0;
        for i in 0..1000 {
            let task = &tasks[i % tasks.len()];
            let agent = AgentId(rng.gen_range(0..task.instance.num_agents()));
            let known = random_context(task, &mut rng, agent);
            let ctx = max_action_ctx(task, agent, &known);
            let prompt = build_prompt(&ctx, &opts).unwrap();
            let d = scripted.query(&prompt, &ctx).unwrap();
            for &(v, value) in d.values().unwrap() {
                assert_eq!(value, best_local_action_known(&task.instance, v, &known).0);
                checked += 1;
            }
        }
        assert!(checked >= 1000);
    }

    #[test]
    fn resolve_rounds_half_up() {
        let a = CostTable::from_rows((VarId(0), VarId(1)), vec![vec![10, 3], vec![0, 20]]).unwrap();
        let b = CostTable::from_rows((VarId(0), VarId(1)), vec![vec![11, 4], vec![1, 20]]).unwrap();
        let m = merge_tables(&a, &b, ResolveRule::Average, (0, 20));
        assert_eq!(m.to_rows(), vec![vec![11, 4], vec![1, 20]]);
        let mx = merge_tables(&a, &b, ResolveRule::Maximum, (0, 15));
        assert_eq!(mx.to_rows(), vec![vec![11, 4], vec![1, 15]]);
    }

    #[test]
    fn scripted_needs_machine_block() {
        let task = coloring(3).without_machine_blocks();
        let known = Assignment::complete(vec![0; task.instance.num_vars()]);
        let ctx = max_action_ctx(&task, AgentId(0), &known);
        let prompt = build_prompt(&ctx, &PromptOptions::default()).unwrap();
        let err = ScriptedOracle::new(ResolveRule::Average).query(&prompt, &ctx).unwrap_err();
        assert!(matches!(err, ModelError::MissingMachineBlock(_)));
    }

    fn action_accuracy(p: f64, contexts: usize) -> f64 {
        let task = coloring(4);
        let noisy = NoisyOracle::new(p, 99, ResolveRule::Average);
        let opts = PromptOptions::default();
        let mut correct = 0;
        let mut total = 0;
        for agent in 0..task.instance.num_agents() {
            let (mut env, _) = NasEnv::standalone(&task, AgentId(agent), 0.1, agent as u64, 1000);
            for step in 0..contexts / task.instance.num_agents() {
                let reference = reference_action(env.log());
                let ctx = QueryContext::NextAction(ActionCtx {
                    info: agent_info(&task, AgentId(agent)),
                    step: step + 1,
                    log: env.log(),
                    options: env.legal_actions(),
                });
                let prompt = build_prompt(&ctx, &opts).unwrap();
                let d = noisy.query(&prompt, &ctx).unwrap();
                correct += usize::from(d.action() == Some(&reference));
                total += 1;
                env.step(reference);
            }
        }
        correct as f64 / total as f64
    }

    #[test]
    fn noisy_action_accuracy_tracks_p() {
        assert_eq!(action_accuracy(0.0, 120), 1.0);
        assert_eq!(action_accuracy(1.0, 120), 0.0);
        let acc = action_accuracy(0.35, 1200);
        assert!((acc - 0.65).abs() <= 0.04, "{acc}");
    }

    #[test]
    fn noisy_is_deterministic_and_wrong_values_differ() {
        let task = coloring(5);
        let known = Assignment::complete(vec![1; task.instance.num_vars()]);
        let ctx = max_action_ctx(&task, AgentId(2), &known);
        let prompt = build_prompt(&ctx, &PromptOptions::default()).unwrap();
        let a = NoisyOracle::new(1.0, 3, ResolveRule::Average).query(&prompt, &ctx).unwrap();
        let b = NoisyOracle::new(1.0, 3, ResolveRule::Average).query(&prompt, &ctx).unwrap();
        assert_eq!(a, b);
        let right = ScriptedOracle::new(ResolveRule::Average).query(&prompt, &ctx).unwrap();
        assert_ne!(a.values(), right.values());
    }

    #[test]
    fn client_counts_and_captures() {
        let task = coloring(6);
        let blocks: Vec<String> = task.instructions.iter().map(|d| d.machine_block.clone().unwrap()).collect();
        let client = ModelClient::new(
            Arc::new(ScriptedOracle::new(ResolveRule::Average)),
            PromptOptions::default(),
            task.instance.num_agents(),
        )
        .with_capture(blocks);
        let known = Assignment::complete(vec![0; task.instance.num_vars()]);
        for a in [0, 1, 1] {
            client.ask(&max_action_ctx(&task, AgentId(a), &known), 1).unwrap();
        }
        assert_eq!(client.ledger().count(AgentId(1), TaskKind::GetMaxAction), 2);
        assert_eq!(client.ledger().total(), 3);
        let cap = client.captured();
        assert_eq!(cap.len(), 3);
        assert!(cap.iter().all(|c| !c.prompt.contains("```truth")));
        for c in &cap {
            validate_pair(c.kind, &c.prompt, &c.answer).unwrap();
        }
    }

    #[test]
    fn adapter_config_rejects_unknown_fields_and_bad_noise() {
        assert!(toml::from_str::<AdapterConfig>("kind = \"noisy\"\nnosie = 0.3\n").is_err());
        let cfg: AdapterConfig = toml::from_str("kind = \"noisy\"\nnoise = 0.3\n").unwrap();
        assert_eq!(cfg.label(), "noisy(p=0.3)");
        let bad = AdapterConfig { noise: 1.5, ..AdapterConfig::default() };
        assert!(bad.build().is_err());
    }

    #[test]
    fn default_cost_max_covers_oracle_range() {
        assert_eq!(default_cost_max(10, 4), 20);
        assert_eq!(default_cost_max(15, 8), 29);
    }
}
