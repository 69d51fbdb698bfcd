//! Template grammar for flight-information utterances.
//!
//! Template syntax: plain words, `{placeholder}` for a slot filler, and
//! `[ ... ]` for an optional group kept with probability 1/2.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Word(String),
    Slot(String),
    Optional(Vec<Segment>),
}

#[derive(Debug, Clone)]
pub struct Template {
    pub text: String,
    pub intents: Vec<String>,
    pattern: Vec<Segment>,
}

fn parse_pattern(text: &str) -> Result<Vec<Segment>> {
    let mut stack: Vec<Vec<Segment>> = vec![Vec::new()];
    for tok in text.split_whitespace() {
        let mut tok = tok;
        while let Some(rest) = tok.strip_prefix('[') {
            stack.push(Vec::new());
            tok = rest;
        }
        let mut closes = 0;
        while let Some(rest) = tok.strip_suffix(']') {
            closes += 1;
            tok = rest;
        }
        if !tok.is_empty() {
            let seg = match tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                Some(name) => Segment::Slot(name.to_string()),
                None => Segment::Word(tok.to_string()),
            };
            stack.last_mut().expect("non-empty stack").push(seg);
        }
        for _ in 0..closes {
            if stack.len() < 2 {
                return Err(Error::Config(format!(
                    "unbalanced ']' in template {text:?}"
                )));
            }
            let group = stack.pop().expect("checked");
            stack
                .last_mut()
                .expect("checked")
                .push(Segment::Optional(group));
        }
    }
    if stack.len() != 1 {
        return Err(Error::Config(format!(
            "unbalanced '[' in template {text:?}"
        )));
    }
    Ok(stack.pop().expect("one level"))
}

impl Template {
    pub fn new(text: &str, intents: &[&str]) -> Result<Self> {
        Ok(Template {
            text: text.to_string(),
            intents: intents.iter().map(|s| s.to_string()).collect(),
            pattern: parse_pattern(text)?,
        })
    }

    fn placeholders(&self) -> BTreeSet<String> {
        fn walk(segs: &[Segment], out: &mut BTreeSet<String>) {
            for s in segs {
                match s {
                    Segment::Slot(n) => {
                        out.insert(n.clone());
                    }
                    Segment::Optional(inner) => walk(inner, out),
                    Segment::Word(_) => {}
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.pattern, &mut out);
        out
    }
}

/// A placeholder's slot label and its possible (possibly multi-word) values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotType {
    pub placeholder: String,
    pub label: String,
    pub fillers: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct IntentGroup {
    pub name: String,
    pub templates: Vec<Template>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub groups: Vec<IntentGroup>,
    pub slot_types: Vec<SlotType>,
}

/// A clean utterance with its gold labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub words: Vec<String>,
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

impl Grammar {
    pub fn new(groups: Vec<IntentGroup>, slot_types: Vec<SlotType>) -> Result<Self> {
        let g = Grammar { groups, slot_types };
        for group in &g.groups {
            if group.templates.is_empty() {
                return Err(Error::Config(format!(
                    "intent group {} has no templates",
                    group.name
                )));
            }
            for t in &group.templates {
                for p in t.placeholders() {
                    match g.slot_type(&p) {
                        Some(st) if !st.fillers.is_empty() => {}
                        _ => {
                            return Err(Error::Config(format!(
                                "template {:?} uses unknown or empty placeholder {p}",
                                t.text
                            )))
                        }
                    }
                }
            }
        }
        if g.groups.is_empty() {
            return Err(Error::Config("grammar has no intent groups".into()));
        }
        Ok(g)
    }

    fn slot_type(&self, placeholder: &str) -> Option<&SlotType> {
        self.slot_types
            .iter()
            .find(|s| s.placeholder == placeholder)
    }

    pub fn intent_labels(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .groups
            .iter()
            .flat_map(|g| g.templates.iter().flat_map(|t| t.intents.iter().cloned()))
            .collect();
        set.into_iter().collect()
    }

    pub fn slot_labels(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.slot_types.iter().map(|s| s.label.clone()).collect();
        set.into_iter().collect()
    }

    /// Every word any template or filler can produce.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        fn walk(segs: &[Segment], out: &mut BTreeSet<String>) {
            for s in segs {
                match s {
                    Segment::Word(w) => {
                        out.insert(w.clone());
                    }
                    Segment::Optional(inner) => walk(inner, out),
                    Segment::Slot(_) => {}
                }
            }
        }
        let mut out = BTreeSet::new();
        for g in &self.groups {
            for t in &g.templates {
                walk(&t.pattern, &mut out);
            }
        }
        for st in &self.slot_types {
            for f in &st.fillers {
                out.extend(f.split_whitespace().map(str::to_string));
            }
        }
        out
    }

    /// Intent group uniformly, then template, then optional groups and
    /// fillers. Placeholders sharing a filler list draw distinct values.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Utterance {
        let g = rng.random_range(0..self.groups.len());
        self.sample_group(g, rng)
    }

    /// A template of intent group `g`, then optional groups and fillers.
    pub fn sample_group<R: Rng>(&self, g: usize, rng: &mut R) -> Utterance {
        let group = &self.groups[g];
        let template = group.templates.choose(rng).expect("non-empty");
        let mut words = Vec::new();
        let mut slots = BTreeSet::new();
        let mut used: Vec<String> = Vec::new();
        self.realize(&template.pattern, rng, &mut words, &mut slots, &mut used);
        Utterance {
            words,
            intents: template.intents.clone(),
            slots: slots.into_iter().collect(),
        }
    }

    fn realize<R: Rng>(
        &self,
        segs: &[Segment],
        rng: &mut R,
        words: &mut Vec<String>,
        slots: &mut BTreeSet<String>,
        used: &mut Vec<String>,
    ) {
        for s in segs {
            match s {
                Segment::Word(w) => words.push(w.clone()),
                Segment::Optional(inner) => {
                    if rng.random_bool(0.5) {
                        self.realize(inner, rng, words, slots, used);
                    }
                }
                Segment::Slot(name) => {
                    let st = self.slot_type(name).expect("checked in Grammar::new");
                    let fresh: Vec<&String> =
                        st.fillers.iter().filter(|f| !used.contains(f)).collect();
                    let value = if fresh.is_empty() {
                        st.fillers.choose(rng).expect("non-empty")
                    } else {
                        *fresh.choose(rng).expect("non-empty")
                    };
                    used.push(value.clone());
                    words.extend(value.split_whitespace().map(str::to_string));
                    slots.insert(st.label.clone());
                }
            }
        }
    }
}

fn slot(placeholder: &str, label: &str, fillers: &[&str]) -> SlotType {
    SlotType {
        placeholder: placeholder.to_string(),
        label: label.to_string(),
        fillers: fillers.iter().map(|s| s.to_string()).collect(),
    }
}

const CITIES: &[&str] = &[
    "boston",
    "denver",
    "dallas",
    "atlanta",
    "pittsburgh",
    "philadelphia",
    "baltimore",
    "milwaukee",
    "oakland",
    "seattle",
    "chicago",
    "houston",
    "phoenix",
    "miami",
    "detroit",
    "cleveland",
    "new york",
    "los angeles",
    "san francisco",
    "salt lake city",
    "las vegas",
    "washington",
    "kansas city",
    "san diego",
    "st. louis",
    "minneapolis",
    "memphis",
    "nashville",
    "orlando",
    "tampa",
];

fn group(name: &str, templates: &[(&str, &[&str])]) -> Result<IntentGroup> {
    Ok(IntentGroup {
        name: name.to_string(),
        templates: templates
            .iter()
            .map(|(t, i)| Template::new(t, i))
            .collect::<Result<_>>()?,
    })
}

/// Airline-travel grammar with eight intents and fifteen slot labels.
pub fn default_grammar() -> Grammar {
    let slot_types = vec![
        slot("from", "fromloc.city_name", CITIES),
        slot("to", "toloc.city_name", CITIES),
        slot("city", "city_name", CITIES),
        slot(
            "day",
            "depart_date.day_name",
            &[
                "monday",
                "tuesday",
                "wednesday",
                "thursday",
                "friday",
                "saturday",
                "sunday",
            ],
        ),
        slot(
            "period",
            "depart_time.period_of_day",
            &["morning", "afternoon", "evening", "night"],
        ),
        slot(
            "airline",
            "airline_name",
            &[
                "american airlines",
                "united",
                "delta",
                "continental",
                "us air",
                "northwest",
                "twa",
                "alaska airlines",
            ],
        ),
        slot(
            "airport",
            "airport_name",
            &[
                "la guardia",
                "logan",
                "o'hare",
                "jfk",
                "dulles",
                "love field",
                "general mitchell",
                "stapleton",
            ],
        ),
        slot(
            "code",
            "fare_basis_code",
            &["q", "qx", "y", "h", "bh", "f", "yn", "m"],
        ),
        slot(
            "aircraft",
            "aircraft_code",
            &["dc10", "m80", "d9s", "737", "747", "757", "72s", "f28"],
        ),
        slot(
            "class",
            "class_type",
            &["first class", "coach", "business class", "economy"],
        ),
        slot("round", "round_trip", &["round trip", "one way"]),
        slot(
            "cost",
            "cost_relative",
            &["cheapest", "lowest", "least expensive"],
        ),
        slot(
            "transport",
            "transport_type",
            &["limousine", "taxi", "rental car", "bus"],
        ),
        slot("meal", "meal", &["breakfast", "lunch", "dinner", "snack"]),
        slot(
            "mod",
            "flight_mod",
            &["earliest", "latest", "last", "first"],
        ),
    ];
    let groups = vec![
        group(
            "flight",
            &[
                (
                    "show me [the] flights from {from} to {to} [on {day}]",
                    &["flight"],
                ),
                (
                    "i want to fly from {from} to {to} [in the {period}]",
                    &["flight"],
                ),
                ("list [{airline}] flights from {from} to {to}", &["flight"]),
                ("what flights leave {from} for {to} [on {day}]", &["flight"]),
                ("i need a [{mod}] flight to {to} from {from}", &["flight"]),
                (
                    "find me a {class} flight from {from} to {to} [with {meal}]",
                    &["flight"],
                ),
                (
                    "give me the {mod} flight from {from} to {to} [on {airline}]",
                    &["flight"],
                ),
                (
                    "show me flights and fares from {from} to {to}",
                    &["flight", "airfare"],
                ),
            ],
        ),
        group(
            "airfare",
            &[
                (
                    "how much is a [{class}] ticket from {from} to {to}",
                    &["airfare"],
                ),
                (
                    "what is the [{cost}] fare from {from} to {to}",
                    &["airfare"],
                ),
                (
                    "show me the fares from {from} to {to} [on {airline}]",
                    &["airfare"],
                ),
                (
                    "how much does it cost to fly from {from} to {to}",
                    &["airfare"],
                ),
                (
                    "what are the {round} fares to {to} [on {day}]",
                    &["airfare"],
                ),
                ("give me the {cost} {round} fare to {to}", &["airfare"]),
            ],
        ),
        group(
            "distance",
            &[
                ("how far is {airport} from downtown", &["distance"]),
                ("how far is the airport from downtown {city}", &["distance"]),
                (
                    "what is the distance from {airport} to downtown {city}",
                    &["distance"],
                ),
                ("how far is {airport} from the city", &["distance"]),
                (
                    "tell me the distance between {airport} and downtown",
                    &["distance"],
                ),
                (
                    "how many miles is it from {airport} to {city}",
                    &["distance"],
                ),
            ],
        ),
        group(
            "ground_service",
            &[
                (
                    "what ground transportation is available in {city}",
                    &["ground_service"],
                ),
                (
                    "is there a {transport} from {airport} to downtown",
                    &["ground_service"],
                ),
                (
                    "how do i get from {airport} to downtown [{city}]",
                    &["ground_service"],
                ),
                (
                    "what kind of ground transportation is there at {airport}",
                    &["ground_service"],
                ),
                (
                    "i need a {transport} in {city} [on {day}]",
                    &["ground_service"],
                ),
            ],
        ),
        group(
            "airline",
            &[
                ("what airlines fly from {from} to {to}", &["airline"]),
                ("which airline serves {city}", &["airline"]),
                (
                    "what airlines have flights to {to} [on {day}]",
                    &["airline"],
                ),
                (
                    "which airlines go from {from} to {to} [in the {period}]",
                    &["airline"],
                ),
                ("tell me which airlines stop in {city}", &["airline"]),
            ],
        ),
        group(
            "flight_time",
            &[
                (
                    "what time does the {airline} flight leave {from}",
                    &["flight_time"],
                ),
                (
                    "what are the departure times from {from} to {to}",
                    &["flight_time"],
                ),
                (
                    "how long is the flight from {from} to {to}",
                    &["flight_time"],
                ),
                (
                    "when does the [{period}] flight to {to} arrive",
                    &["flight_time"],
                ),
                (
                    "what time is the {mod} flight from {from} [on {day}]",
                    &["flight_time"],
                ),
            ],
        ),
        group(
            "abbreviation",
            &[
                ("what does fare code {code} mean", &["abbreviation"]),
                ("what does {aircraft} stand for", &["abbreviation"]),
                ("explain the abbreviation {code}", &["abbreviation"]),
                ("what is fare code {code}", &["abbreviation"]),
                (
                    "what does the code {code} mean [on {airline}]",
                    &["abbreviation"],
                ),
            ],
        ),
        group(
            "capacity",
            &[
                ("how many seats are on a {aircraft}", &["capacity"]),
                ("how many people fit on the {aircraft}", &["capacity"]),
                ("what is the capacity of a {aircraft}", &["capacity"]),
                ("how many passengers can a {aircraft} hold", &["capacity"]),
                (
                    "what is the seating capacity of the {airline} {aircraft}",
                    &["capacity"],
                ),
            ],
        ),
    ];
    let groups = groups
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .expect("built-in templates parse");
    Grammar::new(groups, slot_types).expect("built-in grammar is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_optional_groups() {
        let t = Template::new("show [the] flights [on {day}] now", &["flight"]).unwrap();
        assert_eq!(t.pattern.len(), 5);
        assert!(matches!(&t.pattern[3], Segment::Optional(v) if v.len() == 2));
        assert!(Template::new("a [b", &[]).is_err());
        assert!(Template::new("a b]", &[]).is_err());
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let g = group("x", &[("go to {nowhere}", &["x"])]).unwrap();
        assert!(Grammar::new(vec![g], vec![]).is_err());
    }

    #[test]
    fn every_template_can_be_realized() {
        let g = default_grammar();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for group in &g.groups {
            for t in &group.templates {
                let mut words = Vec::new();
                let mut slots = BTreeSet::new();
                g.realize(
                    &t.pattern,
                    &mut rng,
                    &mut words,
                    &mut slots,
                    &mut Vec::new(),
                );
                assert!(!words.is_empty(), "{}", t.text);
            }
        }
        assert_eq!(g.intent_labels().len(), 8);
        assert_eq!(g.slot_labels().len(), 15);
    }

    #[test]
    fn shared_filler_lists_draw_distinct_values() {
        let g = Grammar::new(
            vec![group("x", &[("{from} {to}", &["x"])]).unwrap()],
            vec![slot("from", "a", &["p", "q"]), slot("to", "b", &["p", "q"])],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let u = g.sample(&mut rng);
            assert_ne!(u.words[0], u.words[1]);
            assert_eq!(u.slots, ["a", "b"]);
        }
    }
}
