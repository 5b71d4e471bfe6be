//! Instruction templates. Each sentence slot has four paraphrases, picked
//! from the agent's text stream.

use rand::Rng;

use super::chart::ChartKind;
use crate::dcop::Relation;

pub const COLORS: [&str; 10] =
    ["Red", "Green", "Blue", "Yellow", "Purple", "Orange", "Pink", "Brown", "Cyan", "Gray"];

pub fn color_names(domain: usize) -> Vec<String> {
    (0..domain)
        .map(|i| {
            if i < COLORS.len() {
                COLORS[i].to_string()
            } else {
                format!("Color{}", i + 1)
            }
        })
        .collect()
}

/// Hourly slots starting at 08:00.
pub fn slot_names(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{:02}:00", (8 + i) % 24)).collect()
}

fn width(count: usize) -> usize {
    count.to_string().len().max(2)
}

pub fn agent_names(count: usize) -> Vec<String> {
    let w = width(count);
    (1..=count).map(|i| format!("A{i:0w$}")).collect()
}

pub fn instructing_names(count: usize) -> Vec<String> {
    let w = width(count);
    (1..=count).map(|i| format!("H{i:0w$}")).collect()
}

pub fn meeting_names(count: usize) -> Vec<String> {
    let w = width(count);
    (1..=count).map(|i| format!("M{i:0w$}")).collect()
}

fn pick<'a>(rng: &mut impl Rng, options: &'a [&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// "a, b and c"
pub fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

const COLOR_INTRO: [&str; 4] = [
    "Hi {agent}, this is {human}. Please pick a color for me from {colors}.",
    "{human} here. {agent}, you are choosing my color; the options are {colors}.",
    "{agent}: you act for {human} and must settle on one color out of {colors}.",
    "This message is from {human} to {agent}. My color has to be one of {colors}.",
];

pub fn color_intro(rng: &mut impl Rng, agent: &str, human: &str, colors: &[String]) -> String {
    fill(pick(rng, &COLOR_INTRO), &[("agent", agent), ("human", human), ("colors", &join_list(colors))])
}

const AVOID: [&str; 4] = [
    "Do not use the same color as {other}.",
    "My color must differ from the one {other} picks.",
    "Avoid matching colors with {other}.",
    "I would be unhappy to share a color with {other}.",
];

const MATCH: [&str; 4] = [
    "Try to use the same color as {other}.",
    "I want my color to match the one {other} picks.",
    "Please coordinate so that {other} and I end up with identical colors.",
    "Matching colors with {other} is important to me.",
];

pub fn relation_sentence(rng: &mut impl Rng, relation: Relation, other: &str) -> String {
    let options = match relation {
        Relation::Match => &MATCH,
        Relation::Avoid | Relation::NotEqual => &AVOID,
    };
    fill(pick(rng, options), &[("other", other)])
}

const PREFERENCE: [&str; 4] = [
    "My color preference, from best to worst, is {order}.",
    "I like {first} the most, and my full ranking is {order}.",
    "Ranked by how much I like them: {order}.",
    "If it does not break the rules above, I prefer {order}, in that order.",
];

/// `ordered` runs from most to least preferred.
pub fn preference_sentence(rng: &mut impl Rng, ordered: &[String]) -> String {
    let order = ordered.join(" > ");
    fill(pick(rng, &PREFERENCE), &[("order", &order), ("first", &ordered[0])])
}

const CHART: [&str; 4] = [
    "My color preferences are shown in the attached {kind} chart; a larger value means I like the color more.",
    "See the {kind} chart for how much I like each color (higher is better).",
    "The attached {kind} chart scores each color; prefer the higher scores.",
    "I drew a {kind} chart of my color preferences. Taller or higher entries are colors I prefer.",
];

pub fn chart_sentence(rng: &mut impl Rng, kind: ChartKind) -> String {
    fill(pick(rng, &CHART), &[("kind", kind.as_str())])
}

const MEETING_INTRO: [&str; 4] = [
    "Hi {agent}, this is {human}. I organize {meetings} and need a time slot for each, chosen from {slots}.",
    "{human} here. {agent}, please schedule my meetings {meetings}; available slots are {slots}.",
    "{agent}: you handle the calendar of {human}, who owns {meetings}. Each needs one slot out of {slots}.",
    "This is {human} writing to {agent}. Book {meetings} into the slots {slots}.",
];

pub fn meeting_intro(rng: &mut impl Rng, agent: &str, human: &str, meetings: &[String], slots: &[String]) -> String {
    fill(
        pick(rng, &MEETING_INTRO),
        &[("agent", agent), ("human", human), ("meetings", &join_list(meetings)), ("slots", &join_list(slots))],
    )
}

const EARLY: [&str; 4] = [
    "For {meeting} I prefer early slots: the earlier the better.",
    "{meeting} should happen as early in the day as possible.",
    "Earlier is better for {meeting}.",
    "Put {meeting} in the morning if you can; later slots are progressively worse.",
];

const LATE: [&str; 4] = [
    "For {meeting} I prefer late slots: the later the better.",
    "{meeting} should happen as late in the day as possible.",
    "Later is better for {meeting}.",
    "Push {meeting} towards the end of the day; earlier slots are progressively worse.",
];

const EXPLICIT: [&str; 4] = [
    "For {meeting} my slot preference, best first, is {order}.",
    "Rank the slots for {meeting} like this: {order}.",
    "{meeting} works best at {first}; the full ranking is {order}.",
    "My preferred times for {meeting}, in order: {order}.",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotStyle {
    Early,
    Late,
    Explicit,
}

pub fn slot_preference_sentence(rng: &mut impl Rng, style: SlotStyle, meeting: &str, ordered: &[String]) -> String {
    let options = match style {
        SlotStyle::Early => &EARLY,
        SlotStyle::Late => &LATE,
        SlotStyle::Explicit => &EXPLICIT,
    };
    let order = ordered.join(" > ");
    fill(pick(rng, options), &[("meeting", meeting), ("order", &order), ("first", &ordered[0])])
}

const OWN_CONFLICT: [&str; 4] = [
    "{a} and {b} share participants, so they need different slots.",
    "Never schedule {a} and {b} at the same time.",
    "{a} cannot overlap with {b}.",
    "Keep {a} and {b} in separate slots because some people attend both.",
];

pub fn own_conflict_sentence(rng: &mut impl Rng, a: &str, b: &str) -> String {
    fill(pick(rng, &OWN_CONFLICT), &[("a", a), ("b", b)])
}

const FOREIGN_CONFLICT: [&str; 4] = [
    "Coordinate with {other}: {pairs}.",
    "{other} runs meetings that share attendees with mine: {pairs}.",
    "Watch out for the calendar of {other}: {pairs}.",
    "Some of my attendees also go to meetings organized by {other}: {pairs}.",
];

/// One sentence per foreign agent; `pairs` are (their meeting, my meeting).
pub fn foreign_conflict_sentence(rng: &mut impl Rng, other: &str, pairs: &[(String, String)]) -> String {
    let parts: Vec<String> = pairs
        .iter()
        .map(|(theirs, mine)| format!("{theirs} must not share a slot with {mine}"))
        .collect();
    fill(pick(rng, &FOREIGN_CONFLICT), &[("other", other), ("pairs", &parts.join("; "))])
}

/// Number of whole-word occurrences of `name` in `text`.
pub fn mention_count(text: &str, name: &str) -> usize {
    let re = regex::Regex::new(&format!(r"\b{}\b", regex::escape(name))).expect("valid pattern");
    re.find_iter(text).count()
}
