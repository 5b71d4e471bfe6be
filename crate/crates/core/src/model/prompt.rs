//! Prompt construction. Prompts are plain text with titled sections and a
//! single answer-format directive at the end.

use std::fmt::Write as _;

use super::{MaxActionCtx, ModelError, QueryContext, ResolveRule, TaskKind, VarRef};
use crate::benchgen::{render_chart, InstructionDoc};
use crate::dcop::{Cost, CostTable};

#[derive(Clone, Debug, PartialEq)]
pub struct PromptOptions {
    /// Approximate token budget (4 characters per token).
    pub token_cap: usize,
    pub multimodal: bool,
    pub include_machine_block: bool,
    pub resolve_rule: ResolveRule,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { token_cap: 8000, multimodal: false, include_machine_block: true, resolve_rule: ResolveRule::Average }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prompt {
    pub kind: TaskKind,
    pub system: String,
    pub sections: Vec<(String, String)>,
    pub directive: String,
    pub machine_block: Option<String>,
    /// Chart image (SVG) attached as a separate content part.
    pub image_svg: Option<String>,
    pub text_fallback_visual: bool,
}

pub const SYSTEM: &str = "You are a coordination agent acting on behalf of a person. \
You cooperate with neighboring agents to choose values that satisfy everyone's constraints \
at the lowest total cost. Follow the answer format exactly.";

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl Prompt {
    /// User-message text: sections, directive, then the optional machine block.
    pub fn user_text(&self) -> String {
        let mut s = String::new();
        for (title, body) in &self.sections {
            let _ = write!(s, "## {title}\n{}\n\n", body.trim_end());
        }
        s.push_str(&self.directive);
        if let Some(block) = &self.machine_block {
            let _ = write!(s, "\n\n```truth\n{block}\n```");
        }
        s
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system, self.user_text())
    }

    pub fn section(&self, title: &str) -> Option<&str> {
        self.sections.iter().find(|(t, _)| t == title).map(|(_, b)| b.as_str())
    }
}

fn render_table(t: &CostTable, rows: &VarRef, cols: &VarRef) -> String {
    let mut s = format!("rows = {}, columns = {} ({})\n", rows.name, cols.name, cols.domain.join(" "));
    for (a, label) in rows.domain.iter().enumerate() {
        let vals: Vec<String> = (0..cols.domain.len()).map(|b| t.get(a, b).to_string()).collect();
        let _ = writeln!(s, "{label}: {}", vals.join(" "));
    }
    s
}

fn table_anchors(rows: &VarRef, cols: &VarRef, bounds: (Cost, Cost)) -> String {
    format!(
        "Table rows: {} in [{}]\nTable columns: {} in [{}]\nCost range: [{}, {}]",
        rows.name,
        rows.domain.join(", "),
        cols.name,
        cols.domain.join(", "),
        bounds.0,
        bounds.1
    )
}

fn table_directive(rows: &VarRef, cols: &VarRef) -> String {
    format!(
        "Answer with one fenced block that starts with ```answer and contains {} lines, one per value of {} in the order listed, each holding {} integers separated by spaces. You may prefix a line with its value label and a colon.",
        rows.domain.len(),
        rows.name,
        cols.domain.len()
    )
}

fn instruction_section(doc: &InstructionDoc, opts: &PromptOptions, p: &mut Prompt) {
    let mut body = doc.text.clone();
    if let Some(chart) = &doc.chart {
        if opts.multimodal {
            body.push_str("\n(The chart is attached as an image.)");
            p.image_svg = Some(render_chart(chart));
        } else {
            body.push_str("\nChart data:\n");
            body.push_str(&chart.data_table());
            p.text_fallback_visual = true;
        }
    }
    p.sections.push(("Instruction".into(), body));
    if opts.include_machine_block {
        p.machine_block = doc.machine_block.clone();
    }
}

fn max_action_sections(c: &MaxActionCtx, p: &mut Prompt) -> Result<(), ModelError> {
    if c.vars.is_empty() {
        return Err(ModelError::MissingContext("owned variables".into()));
    }
    let mut msgs = String::new();
    for m in &c.messages {
        let _ = writeln!(msgs, "- {}", m.replace('\n', "\n  "));
    }
    if msgs.is_empty() {
        msgs.push_str("(none)");
    }
    p.sections.push(("Constraint messages".into(), msgs));
    let mut ctxs = String::new();
    for n in &c.neighbors {
        let value = n.value.and_then(|v| n.var.domain.get(v)).map_or("unknown", |s| s.as_str());
        let _ = writeln!(ctxs, "- {} (agent {}): {value}", n.var.name, n.owner);
    }
    if ctxs.is_empty() {
        ctxs.push_str("(no neighbors)");
    }
    p.sections.push(("Neighbor assignments".into(), ctxs));
    let mut own = String::new();
    for (v, cur) in &c.vars {
        let _ = writeln!(own, "- {}: currently {}", v.name, v.domain.get(*cur).map_or("?", |s| s.as_str()));
        let _ = writeln!(own, "Candidate values for {}: {}", v.name, v.domain.join(", "));
    }
    p.sections.push(("Your variables".into(), own));
    p.sections.push((
        "Task".into(),
        format!(
            "Iteration {}. For each of your variables choose the value with the lowest total cost given the neighbor assignments, your instruction and the constraint messages.",
            c.iteration
        ),
    ));
    p.directive = "Answer with one fenced block that starts with ```answer and contains one line `<variable>: <value>` for each of your variables.".into();
    Ok(())
}

/// Deterministic prompt for a query context.
pub fn build_prompt(ctx: &QueryContext<'_>, opts: &PromptOptions) -> Result<Prompt, ModelError> {
    let mut p = Prompt {
        kind: ctx.kind(),
        system: SYSTEM.into(),
        sections: Vec::new(),
        directive: String::new(),
        machine_block: None,
        image_svg: None,
        text_fallback_visual: false,
    };
    instruction_section(&ctx.info().instruction, opts, &mut p);
    match ctx {
        QueryContext::ConstraintMessage(c) => {
            p.sections.push((
                "Task".into(),
                format!(
                    "Write a short message to agent {} about the constraint between your variable {} and their variable {}. State the relation you need and how much you like each of your values ({}).",
                    c.other_agent,
                    c.own_var.name,
                    c.other_var.name,
                    c.own_var.domain.join(", ")
                ),
            ));
            p.directive = "Answer with one fenced block that starts with ```answer and contains only the message.".into();
        }
        QueryContext::MaxAction(c) => max_action_sections(c, &mut p)?,
        QueryContext::TableProposal(c) => {
            let (r, k) = (&c.scope.0, &c.scope.1);
            p.sections.push(("Constraint".into(), table_anchors(r, k, c.bounds)));
            let mut hist = String::new();
            for (i, t) in c.own_history.iter().enumerate() {
                let _ = write!(hist, "Proposal {i}:\n{}", render_table(t, r, k));
            }
            if hist.is_empty() {
                hist.push_str("(none)");
            }
            p.sections.push(("Your previous proposals".into(), hist));
            p.sections.push((
                "Counterpart's latest proposal".into(),
                c.counterpart.as_ref().map_or("(none yet)".into(), |t| render_table(t, r, k)),
            ));
            p.sections.push((
                "Task".into(),
                format!(
                    "Negotiation round {}. Propose a cost table for this constraint from your point of view; lower cost means a more desirable pair of values. Keep it within the range [{}, {}].",
                    c.round, c.bounds.0, c.bounds.1
                ),
            ));
            p.directive = table_directive(r, k);
        }
        QueryContext::Resolve(c) => {
            let (r, k) = (&c.scope.0, &c.scope.1);
            p.sections.push(("Constraint".into(), table_anchors(r, k, c.bounds)));
            p.sections.push(("Your final proposal".into(), render_table(&c.own, r, k)));
            p.sections.push(("Counterpart's final proposal".into(), render_table(&c.other, r, k)));
            let rule = match opts.resolve_rule {
                ResolveRule::Average => "taking the element-wise average, rounding halves up",
                ResolveRule::Maximum => "taking the element-wise maximum",
            };
            p.sections.push((
                "Task".into(),
                format!(
                    "Merge the two proposals into one agreed table, for example by {rule}. Keep it within the range [{}, {}].",
                    c.bounds.0, c.bounds.1
                ),
            ));
            p.directive = table_directive(r, k);
        }
        QueryContext::NextAction(c) => {
            if c.options.is_empty() {
                return Err(ModelError::MissingContext("allowed actions".into()));
            }
            let params = c.log.params().ok_or_else(|| ModelError::MissingContext("log instruction".into()))?;
            let mut opts_text = String::new();
            for a in &c.options {
                let _ = writeln!(opts_text, "- {}", params.render_action(a));
            }
            let fixed: usize = p.sections.iter().map(|(t, b)| estimate_tokens(t) + estimate_tokens(b)).sum::<usize>()
                + estimate_tokens(&opts_text)
                + 200;
            let budget = opts.token_cap.saturating_sub(fixed);
            p.sections.push(("Execution log".into(), c.log.render_window(budget)));
            p.sections.push(("Allowed actions".into(), opts_text));
            p.sections.push((
                "Task".into(),
                format!("Step {}. Choose the next step of the algorithm described in your instruction.", c.step),
            ));
            p.directive = "Answer with one fenced block that starts with ```answer and contains exactly one allowed action, written as listed.".into();
        }
    }
    Ok(p)
}
