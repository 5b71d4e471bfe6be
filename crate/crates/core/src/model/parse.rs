//! Answer extraction and validation. A model answer is accepted only if it
//! is well formed for the query context; nothing invalid reaches an agent.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{Answer, ModelDecision, QueryContext, TaskKind, VarRef};
use crate::dcop::{Cost, CostTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no answer block found")]
    NoAnswer,
    #[error("answer is empty")]
    Empty,
    #[error("'{label}' is not a value of {var}")]
    UnknownValue { var: String, label: String },
    #[error("no value given for {0}")]
    MissingVariable(String),
    #[error("malformed table: {0}")]
    BadTable(String),
    #[error("table entry {value} is outside [{min}, {max}]")]
    OutOfRange { value: String, min: Cost, max: Cost },
    #[error("'{0}' is not an allowed action")]
    UnknownAction(String),
    #[error("answer kind {0} does not fit this context")]
    KindMismatch(String),
}

fn fenced_answer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)```[ \t]*answer[ \t]*\r?\n(.*?)```").expect("valid regex"))
}

fn any_fence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[^\n`]*\r?\n(.*?)```").expect("valid regex"))
}

fn answer_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t>*_-]*answer[ \t*_]*[:=][ \t*_]*(.+?)[ \t]*$").expect("valid regex"))
}

/// The answer payload: a ```answer block, else the first fenced block,
/// else the rest of an `answer:` line.
pub fn extract_answer(raw: &str) -> Option<String> {
    if let Some(c) = fenced_answer().captures(raw) {
        return Some(c[1].trim().to_string());
    }
    if let Some(c) = any_fence().captures(raw) {
        return Some(c[1].trim().to_string());
    }
    answer_line().captures(raw).map(|c| c[1].trim().to_string())
}

fn clean(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| matches!(c, '`' | '"' | '\'' | '*' | '.' | ',' | ';' | '[' | ']'))
        .trim()
        .to_string()
}

fn strip_answer_prefix(line: &str) -> &str {
    let t = line.trim();
    if t.len() >= 7 && t[..6].eq_ignore_ascii_case("answer") {
        let rest = t[6..].trim_start();
        if let Some(r) = rest.strip_prefix(':').or_else(|| rest.strip_prefix('=')) {
            return r.trim();
        }
    }
    t.trim_start_matches(['-', '*', ' '])
}

fn find_label(domain: &[String], label: &str) -> Option<usize> {
    let l = clean(label);
    domain.iter().position(|d| d.eq_ignore_ascii_case(&l))
}

/// Values for `vars` (name, domain) from `name: value` lines. A single
/// variable may also be answered with a bare value.
pub fn parse_values(block: &str, vars: &[(String, Vec<String>)]) -> Result<Vec<usize>, ParseError> {
    let mut out: Vec<Option<usize>> = vec![None; vars.len()];
    for line in block.lines().map(strip_answer_prefix).filter(|l| !l.is_empty()) {
        let named = line.split_once(':').and_then(|(name, value)| {
            vars.iter().position(|(n, _)| n.eq_ignore_ascii_case(&clean(name))).map(|i| (i, value))
        });
        let (i, value) = match named {
            Some(x) => x,
            None if vars.len() == 1 => (0, line),
            None => continue,
        };
        let idx = find_label(&vars[i].1, value)
            .ok_or_else(|| ParseError::UnknownValue { var: vars[i].0.clone(), label: clean(value) })?;
        out[i] = Some(idx);
    }
    out.iter()
        .zip(vars)
        .map(|(v, (name, _))| v.ok_or_else(|| ParseError::MissingVariable(name.clone())))
        .collect()
}

/// Integer rows of a `rows × cols` table with entries in `bounds`.
pub fn parse_table(block: &str, rows: usize, cols: usize, bounds: (Cost, Cost)) -> Result<Vec<Vec<Cost>>, ParseError> {
    let mut out = Vec::new();
    for line in block.lines() {
        let body = line.rfind(':').map_or(line, |i| &line[i + 1..]);
        let tokens: Vec<&str> = body
            .split(|c: char| c.is_whitespace() || matches!(c, ',' | '|' | '[' | ']' | ';'))
            .filter(|t| !t.is_empty())
            .collect();
        let numeric = |t: &str| t.parse::<f64>().is_ok();
        let Some(first) = tokens.iter().position(|t| numeric(t)) else { continue };
        let mut row = Vec::with_capacity(tokens.len() - first);
        for t in &tokens[first..] {
            let x: f64 = t.parse().map_err(|_| ParseError::BadTable(format!("'{t}' is not a number")))?;
            if x.fract() != 0.0 {
                return Err(ParseError::BadTable(format!("'{t}' is not an integer")));
            }
            if x < bounds.0 as f64 || x > bounds.1 as f64 {
                return Err(ParseError::OutOfRange { value: t.to_string(), min: bounds.0, max: bounds.1 });
            }
            row.push(x as Cost);
        }
        if row.len() != cols {
            return Err(ParseError::BadTable(format!("row {} has {} entries, expected {cols}", out.len() + 1, row.len())));
        }
        out.push(row);
    }
    if out.len() != rows {
        return Err(ParseError::BadTable(format!("{} rows, expected {rows}", out.len())));
    }
    Ok(out)
}

fn normalize_action(s: &str) -> String {
    clean(strip_answer_prefix(s)).split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase()
}

/// Index of the option the answer names.
pub fn match_option(block: &str, options: &[String]) -> Result<usize, ParseError> {
    let wanted: Vec<String> = block.lines().map(normalize_action).filter(|l| !l.is_empty()).collect();
    for w in &wanted {
        if let Some(i) = options.iter().position(|o| normalize_action(o) == *w) {
            return Ok(i);
        }
    }
    Err(ParseError::UnknownAction(wanted.first().cloned().unwrap_or_default()))
}

fn var_pairs(vars: &[&VarRef]) -> Vec<(String, Vec<String>)> {
    vars.iter().map(|v| (v.name.clone(), v.domain.clone())).collect()
}

/// Parses and validates a raw model response for `ctx`.
pub fn parse_decision(kind: TaskKind, raw: &str, ctx: &QueryContext<'_>) -> Result<ModelDecision, ParseError> {
    if kind != ctx.kind() {
        return Err(ParseError::KindMismatch(kind.as_str().into()));
    }
    let block = extract_answer(raw).ok_or(ParseError::NoAnswer)?;
    if block.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let answer = match ctx {
        QueryContext::ConstraintMessage(_) => Answer::Constraint(block.trim().to_string()),
        QueryContext::MaxAction(c) => {
            let refs: Vec<&VarRef> = c.vars.iter().map(|(v, _)| v).collect();
            let values = parse_values(&block, &var_pairs(&refs))?;
            Answer::Values(refs.iter().map(|v| v.var).zip(values).collect())
        }
        QueryContext::TableProposal(_) | QueryContext::Resolve(_) => {
            let (r, k, bounds) = ctx.table_shape().expect("table context");
            let rows = parse_table(&block, r.domain.len(), k.domain.len(), bounds)?;
            let table = CostTable::from_rows((r.var, k.var), rows).map_err(|e| ParseError::BadTable(e.to_string()))?;
            Answer::Table(table)
        }
        QueryContext::NextAction(c) => {
            let params = c.log.params().ok_or(ParseError::NoAnswer)?;
            let rendered: Vec<String> = c.options.iter().map(|a| params.render_action(a)).collect();
            Answer::Action(c.options[match_option(&block, &rendered)?].clone())
        }
    };
    Ok(ModelDecision { kind, answer, raw: raw.to_string(), attempts: 1, fallback: false, text_fallback_visual: false })
}

/// Canonical fenced answer text for a decision, the inverse of `parse_decision`.
pub fn format_answer(answer: &Answer, ctx: &QueryContext<'_>) -> String {
    let body = match (answer, ctx) {
        (Answer::Constraint(s), _) => s.clone(),
        (Answer::Values(vals), QueryContext::MaxAction(c)) => vals
            .iter()
            .map(|(var, value)| {
                let v = c.vars.iter().find(|(r, _)| r.var == *var).map(|(r, _)| r);
                match v {
                    Some(r) => format!("{}: {}", r.name, r.domain[*value]),
                    None => format!("{var}: {value}"),
                }
            })
            .collect::<Vec<_>>()
            .join("\n"),
        (Answer::Table(t), _) => {
            let labels = ctx.table_shape().map(|(r, _, _)| r.domain.clone());
            (0..t.shape().0)
                .map(|a| {
                    let vals: Vec<String> = (0..t.shape().1).map(|b| t.get(a, b).to_string()).collect();
                    match &labels {
                        Some(l) => format!("{}: {}", l[a], vals.join(" ")),
                        None => vals.join(" "),
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
        (Answer::Action(a), QueryContext::NextAction(c)) => match c.log.params() {
            Some(p) => p.render_action(a),
            None => format!("{a:?}"),
        },
        (a, _) => format!("{a:?}"),
    };
    format!("```answer\n{body}\n```")
}

fn capture_list(line: &str, prefix: &str) -> Option<(String, Vec<String>)> {
    let rest = line.trim().strip_prefix(prefix)?;
    let (name, list) = rest.split_once(':')?;
    Some((name.trim().to_string(), list.split(',').map(|s| s.trim().to_string()).collect()))
}

fn bracketed(line: &str, prefix: &str) -> Option<(String, Vec<String>)> {
    let rest = line.trim().strip_prefix(prefix)?;
    let (name, list) = rest.split_once(" in [")?;
    let list = list.strip_suffix(']')?;
    Some((name.trim().to_string(), list.split(',').map(|s| s.trim().to_string()).collect()))
}

fn section<'p>(prompt: &'p str, title: &str) -> Option<&'p str> {
    let head = format!("## {title}\n");
    let start = prompt.find(&head)? + head.len();
    let rest = &prompt[start..];
    let end = rest.find("\n## ").map_or(rest.len(), |i| i + 1);
    Some(&rest[..end])
}

/// Checks a (prompt, answer) pair using only the prompt text: the answer must
/// be a valid decision for the domains, bounds or options the prompt offers.
pub fn validate_pair(kind: TaskKind, prompt: &str, answer: &str) -> Result<(), ParseError> {
    let block = extract_answer(answer).ok_or(ParseError::NoAnswer)?;
    if block.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let table_rows = prompt.lines().find_map(|l| bracketed(l, "Table rows:"));
    match kind {
        TaskKind::GetMaxAction => {
            let vars: Vec<_> = prompt.lines().filter_map(|l| capture_list(l, "Candidate values for ")).collect();
            if vars.is_empty() {
                return Err(ParseError::MissingVariable("candidate list".into()));
            }
            parse_values(&block, &vars).map(|_| ())
        }
        TaskKind::GenerateConstraint | TaskKind::Resolve if table_rows.is_some() => {
            let (_, rows) = table_rows.expect("checked");
            let (_, cols) = prompt
                .lines()
                .find_map(|l| bracketed(l, "Table columns:"))
                .ok_or_else(|| ParseError::BadTable("prompt lacks column labels".into()))?;
            let bounds = prompt
                .lines()
                .find_map(|l| l.trim().strip_prefix("Cost range: ["))
                .and_then(|r| r.strip_suffix(']'))
                .and_then(|r| r.split_once(','))
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .ok_or_else(|| ParseError::BadTable("prompt lacks the cost range".into()))?;
            parse_table(&block, rows.len(), cols.len(), bounds).map(|_| ())
        }
        TaskKind::GenerateConstraint => Ok(()),
        TaskKind::Resolve => Err(ParseError::BadTable("prompt lacks table labels".into())),
        TaskKind::GetAction => {
            let options: Vec<String> = section(prompt, "Allowed actions")
                .ok_or_else(|| ParseError::UnknownAction("prompt lists no actions".into()))?
                .lines()
                .filter_map(|l| l.trim().strip_prefix("- ").map(str::to_string))
                .collect();
            match_option(&block, &options).map(|_| ())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colors() -> Vec<String> {
        ["Red", "Green", "Blue", "Yellow"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn answer_line_and_fences() {
        assert_eq!(extract_answer("I think.\nanswer: Blue").as_deref(), Some("Blue"));
        assert_eq!(extract_answer("x\n```answer\nA01: Red\n```\ny").as_deref(), Some("A01: Red"));
        assert_eq!(extract_answer("```json\n1 2\n```").as_deref(), Some("1 2"));
        assert_eq!(extract_answer("**Answer:** Green").as_deref(), Some("Green"));
        assert_eq!(extract_answer("nothing here"), None);
    }

    #[test]
    fn values_are_case_insensitive() {
        let vars = vec![("A01".to_string(), colors())];
        assert_eq!(parse_values("blue", &vars).unwrap(), vec![2]);
        assert_eq!(parse_values("a01: YELLOW.", &vars).unwrap(), vec![3]);
        assert!(matches!(parse_values("Magenta", &vars), Err(ParseError::UnknownValue { .. })));
        let slots: Vec<String> = ["08:00", "09:00"].iter().map(|s| s.to_string()).collect();
        let two = vec![("M01".to_string(), slots.clone()), ("M02".to_string(), slots)];
        assert_eq!(parse_values("M02: 08:00\nM01: 09:00", &two).unwrap(), vec![1, 0]);
        assert!(matches!(parse_values("M02: 08:00", &two), Err(ParseError::MissingVariable(_))));
    }

    #[test]
    fn tables_respect_bounds_and_shape() {
        let ok = parse_table("Red: 1 2\nGreen: 3, 4", 2, 2, (0, 20)).unwrap();
        assert_eq!(ok, vec![vec![1, 2], vec![3, 4]]);
        assert!(matches!(parse_table("1 25\n0 0", 2, 2, (0, 20)), Err(ParseError::OutOfRange { .. })));
        assert!(matches!(parse_table("1 2\n0", 2, 2, (0, 20)), Err(ParseError::BadTable(_))));
        assert!(matches!(parse_table("1 2.5\n0 0", 2, 2, (0, 20)), Err(ParseError::BadTable(_))));
        // Slot labels contain colons.
        assert_eq!(parse_table("08:00: 1 2\n09:00: 3 4", 2, 2, (0, 20)).unwrap()[1], vec![3, 4]);
    }

    #[test]
    fn options_match_loosely() {
        let opts = vec!["read-inbox".to_string(), "adopt A01 Red".to_string()];
        assert_eq!(match_option("  Adopt a01 red. ", &opts).unwrap(), 1);
        assert!(match_option("fly", &opts).is_err());
    }

    #[test]
    fn prose_wrappers_do_not_matter() {
        let vars = vec![("A01".to_string(), colors())];
        let wrappers = [
            "Sure! ", "Let me think step by step.\n", "After weighing the options, ", "", "Here you go:\n\n",
        ];
        let tails = ["", "\nHope this helps.", "\n\nLet me know!", " Thanks.", "\n---"];
        let mut count = 0;
        for w in wrappers {
            for t in tails {
                for (i, c) in colors().iter().enumerate() {
                    let raw = format!("{w}```answer\nA01: {c}\n```{t}");
                    let block = extract_answer(&raw).unwrap();
                    assert_eq!(parse_values(&block, &vars).unwrap(), vec![i]);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 100);
    }

    #[test]
    fn validate_pair_reads_prompt_anchors() {
        let prompt = "## Your variables\nCandidate values for A01: Red, Green\n\nAnswer...";
        assert!(validate_pair(TaskKind::GetMaxAction, prompt, "```answer\nA01: Green\n```").is_ok());
        assert!(validate_pair(TaskKind::GetMaxAction, prompt, "```answer\nA01: Blue\n```").is_err());
        let tp = "Table rows: A01 in [Red, Green]\nTable columns: A02 in [Red, Green]\nCost range: [0, 20]\n";
        assert!(validate_pair(TaskKind::Resolve, tp, "```answer\n1 2\n3 4\n```").is_ok());
        assert!(validate_pair(TaskKind::Resolve, tp, "```answer\n1 2\n3 40\n```").is_err());
        let ap = "## Allowed actions\n- noop\n- read-inbox\n\n## Task\nStep 3.";
        assert!(validate_pair(TaskKind::GetAction, ap, "```answer\nread-inbox\n```").is_ok());
        assert!(validate_pair(TaskKind::GetAction, ap, "```answer\nterminate\n```").is_err());
    }
}
