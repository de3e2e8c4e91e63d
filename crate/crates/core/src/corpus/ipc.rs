//! International Patent Classification codes.
//!
//! Codes are accepted in canonical notation (`G06F 3/048`, `G06F3/048`) and in
//! the compact notation that drops both the space and the slash (`C22B300`).
//! A compact group tail is split so the subgroup keeps two digits, or three
//! when the main group would otherwise exceed four digits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CorpusError, DomainRelation, RelationCategory};

const MAX_MAIN_GROUP_DIGITS: usize = 4;
const MAX_SUBGROUP_DIGITS: usize = 6;

/// A parsed IPC symbol.
///
/// Equality and hashing ignore [`IpcCode::raw`].
#[derive(Debug, Clone)]
pub struct IpcCode {
    pub section: char,
    /// Two digit class, e.g. `06` in `G06F`.
    pub class: String,
    pub subclass: char,
    pub main_group: Option<u32>,
    /// Subgroup digits exactly as written, e.g. `048`.
    pub subgroup: Option<String>,
    /// The text the code was parsed from.
    pub raw: String,
}

impl PartialEq for IpcCode {
    fn eq(&self, other: &Self) -> bool {
        self.section == other.section
            && self.class == other.class
            && self.subclass == other.subclass
            && self.main_group == other.main_group
            && self.subgroup == other.subgroup
    }
}

impl Eq for IpcCode {}

impl std::hash::Hash for IpcCode {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.section.hash(state);
        self.class.hash(state);
        self.subclass.hash(state);
        self.main_group.hash(state);
        self.subgroup.hash(state);
    }
}

fn malformed(raw: &str, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedIpc {
        raw: raw.to_string(),
        reason: reason.into(),
    }
}

/// Parses an IPC code in canonical or compact notation.
pub fn parse_ipc(raw: &str) -> Result<IpcCode, CorpusError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(malformed(raw, "empty code"));
    }
    let upper = trimmed.to_ascii_uppercase();
    let chars: Vec<char> = upper.chars().collect();
    if chars.len() < 4 {
        return Err(malformed(raw, "expected at least section, class and subclass"));
    }
    let section = chars[0];
    if !('A'..='H').contains(&section) {
        return Err(malformed(raw, format!("section `{section}` is not in A-H")));
    }
    if !(chars[1].is_ascii_digit() && chars[2].is_ascii_digit()) {
        return Err(malformed(raw, "class must be two digits"));
    }
    let class: String = chars[1..3].iter().collect();
    let subclass = chars[3];
    if !subclass.is_ascii_uppercase() {
        return Err(malformed(raw, "subclass must be a letter"));
    }

    let tail: String = chars[4..].iter().filter(|c| !c.is_whitespace()).collect();
    let (main_group, subgroup) = if tail.is_empty() {
        (None, None)
    } else if let Some((main, sub)) = tail.split_once('/') {
        let main = parse_main_group(raw, main)?;
        if sub.is_empty()
            || sub.len() > MAX_SUBGROUP_DIGITS
            || !sub.chars().all(|c| c.is_ascii_digit())
        {
            return Err(malformed(raw, format!("invalid subgroup `{sub}`")));
        }
        (Some(main), Some(sub.to_string()))
    } else {
        split_compact(raw, &tail)?
    };

    Ok(IpcCode {
        section,
        class,
        subclass,
        main_group,
        subgroup,
        raw: raw.to_string(),
    })
}

fn parse_main_group(raw: &str, digits: &str) -> Result<u32, CorpusError> {
    if digits.is_empty()
        || digits.len() > MAX_MAIN_GROUP_DIGITS
        || !digits.chars().all(|c| c.is_ascii_digit())
    {
        return Err(malformed(raw, format!("invalid main group `{digits}`")));
    }
    digits
        .parse()
        .map_err(|_| malformed(raw, format!("invalid main group `{digits}`")))
}

/// Splits the slash-less group tail of a compact code.
fn split_compact(raw: &str, tail: &str) -> Result<(Option<u32>, Option<String>), CorpusError> {
    if !tail.chars().all(|c| c.is_ascii_digit()) {
        return Err(malformed(raw, format!("unexpected group text `{tail}`")));
    }
    // Too short to carry a two digit subgroup: the whole tail is the main group.
    if tail.len() <= 2 {
        return Ok((Some(parse_main_group(raw, tail)?), None));
    }
    for sub_len in 2..=3 {
        let main_len = tail.len() - sub_len;
        if main_len >= 1 && main_len <= MAX_MAIN_GROUP_DIGITS {
            let main = parse_main_group(raw, &tail[..main_len])?;
            return Ok((Some(main), Some(tail[main_len..].to_string())));
        }
    }
    Err(malformed(raw, format!("cannot split group digits `{tail}`")))
}

impl IpcCode {
    /// Canonical notation: `SccL`, `SccL g` or `SccL g/sss`.
    pub fn render(&self) -> String {
        let mut out = format!("{}{}{}", self.section, self.class, self.subclass);
        if let Some(main) = self.main_group {
            out.push(' ');
            out.push_str(&main.to_string());
            if let Some(sub) = &self.subgroup {
                out.push('/');
                out.push_str(sub);
            }
        }
        out
    }

    /// `SccL`, e.g. `G06F`.
    pub fn subclass_symbol(&self) -> String {
        format!("{}{}{}", self.section, self.class, self.subclass)
    }

    /// `Scc`, e.g. `G06`.
    pub fn class_symbol(&self) -> String {
        format!("{}{}", self.section, self.class)
    }

    fn same_subclass(&self, other: &Self) -> bool {
        self.section == other.section && self.class == other.class && self.subclass == other.subclass
    }

    fn same_class(&self, other: &Self) -> bool {
        self.section == other.section && self.class == other.class
    }

    /// True for a main-group-level entry: no subgroup, or an all-zero subgroup.
    fn is_main_group_level(&self) -> bool {
        self.main_group.is_some()
            && self
                .subgroup
                .as_deref()
                .is_none_or(|s| s.chars().all(|c| c == '0'))
    }

    /// Group position with `g` and `g/00` treated as the same entry.
    fn group_key(&self) -> Option<(u32, Option<&str>)> {
        let main = self.main_group?;
        if self.is_main_group_level() {
            Some((main, None))
        } else {
            Some((main, self.subgroup.as_deref()))
        }
    }

    /// `self` strictly subsumes `other` within the same subclass.
    pub fn is_ancestor_of(&self, other: &Self) -> bool {
        if !self.same_subclass(other) {
            return false;
        }
        match (self.main_group, other.main_group) {
            (None, Some(_)) => true,
            (Some(a), Some(b)) => a == b && self.is_main_group_level() && !other.is_main_group_level(),
            _ => false,
        }
    }
}

impl fmt::Display for IpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for IpcCode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ipc(s)
    }
}

impl Serialize for IpcCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for IpcCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_ipc(&raw).map_err(serde::de::Error::custom)
    }
}

fn pair_category(a: &IpcCode, b: &IpcCode) -> RelationCategory {
    if a.same_subclass(b) {
        if a.group_key() == b.group_key() {
            RelationCategory::Identical
        } else if a.is_ancestor_of(b) || b.is_ancestor_of(a) {
            RelationCategory::Hierarchical
        } else {
            RelationCategory::Overlapping
        }
    } else if a.same_class(b) {
        RelationCategory::Overlapping
    } else {
        RelationCategory::Distinct
    }
}

/// Deterministic domain relationship between two code lists.
///
/// The strongest relation over all cross pairs wins, in the order
/// identical, hierarchical, overlapping, distinct.
pub fn classify_ipc_relation(codes_a: &[IpcCode], codes_b: &[IpcCode]) -> DomainRelation {
    let mut best: Option<(RelationCategory, &IpcCode, &IpcCode)> = None;
    for a in codes_a {
        for b in codes_b {
            let category = pair_category(a, b);
            if best.is_none_or(|(current, _, _)| category.strength() > current.strength()) {
                best = Some((category, a, b));
            }
        }
    }
    let Some((category, a, b)) = best else {
        return DomainRelation {
            category: RelationCategory::Distinct,
            explanation: "no IPC codes to compare".to_string(),
        };
    };
    let explanation = match category {
        RelationCategory::Identical => format!("{a} and {b} are the same IPC entry"),
        RelationCategory::Hierarchical => {
            let (parent, child) = if a.is_ancestor_of(b) { (a, b) } else { (b, a) };
            format!("{parent} subsumes {child}")
        }
        RelationCategory::Overlapping if a.same_subclass(b) => {
            format!("{a} and {b} share subclass {}", a.subclass_symbol())
        }
        RelationCategory::Overlapping => {
            format!("{a} and {b} share class {}", a.class_symbol())
        }
        RelationCategory::Distinct => {
            let list = |codes: &[IpcCode]| {
                codes.iter().map(IpcCode::render).collect::<Vec<_>>().join(", ")
            };
            format!(
                "no shared class between [{}] and [{}]",
                list(codes_a),
                list(codes_b)
            )
        }
    };
    DomainRelation { category, explanation }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(s: &str) -> IpcCode {
        parse_ipc(s).unwrap()
    }

    fn fields(c: &IpcCode) -> (char, &str, char, Option<u32>, Option<&str>) {
        (c.section, c.class.as_str(), c.subclass, c.main_group, c.subgroup.as_deref())
    }

    #[test]
    fn parses_canonical_slash_form() {
        assert_eq!(fields(&code("G06F3/048")), ('G', "06", 'F', Some(3), Some("048")));
        assert_eq!(fields(&code("G06F 3/048")), ('G', "06", 'F', Some(3), Some("048")));
        assert_eq!(fields(&code("  g06f  3 / 048 ")), ('G', "06", 'F', Some(3), Some("048")));
    }

    #[test]
    fn parses_subclass_only() {
        assert_eq!(fields(&code("C22B")), ('C', "22", 'B', None, None));
    }

    #[test]
    fn decodes_compact_forms() {
        assert_eq!(fields(&code("C22B300")), ('C', "22", 'B', Some(3), Some("00")));
        assert_eq!(fields(&code("G06K1502")), ('G', "06", 'K', Some(15), Some("02")));
        assert_eq!(fields(&code("G06T700")), ('G', "06", 'T', Some(7), Some("00")));
        assert_eq!(fields(&code("F16D6500")), ('F', "16", 'D', Some(65), Some("00")));
        assert_eq!(fields(&code("C12N912")), ('C', "12", 'N', Some(9), Some("12")));
        assert_eq!(fields(&code("G06F316")), ('G', "06", 'F', Some(3), Some("16")));
        assert_eq!(fields(&code("H04L2906")), ('H', "04", 'L', Some(29), Some("06")));
        // Longest main group wins on ambiguous splits.
        assert_eq!(fields(&code("F16D65097")), ('F', "16", 'D', Some(650), Some("97")));
        assert_eq!(fields(&code("A61K1234567")), ('A', "61", 'K', Some(1234), Some("567")));
        assert_eq!(fields(&code("G06F16")), ('G', "06", 'F', Some(16), None));
    }

    #[test]
    fn rejects_malformed_codes() {
        for bad in ["", "   ", "Z06F3/048", "G6F", "G06", "G0XF", "G061", "G06F3/", "G06F/048", "G06FXY", "G06F12345678"] {
            assert!(
                matches!(parse_ipc(bad), Err(CorpusError::MalformedIpc { .. })),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn renders_canonical_notation() {
        assert_eq!(code("G06F3/048").render(), "G06F 3/048");
        assert_eq!(code("C22B300").render(), "C22B 3/00");
        assert_eq!(code("C22B").render(), "C22B");
        assert_eq!(code("G06F16").render(), "G06F 16");
    }

    #[test]
    fn equality_ignores_raw_text() {
        assert_eq!(code("C22B300"), code("C22B 3/00"));
        assert_ne!(code("C22B3/00"), code("C22B3/26"));
    }

    #[test]
    fn relation_examples() {
        let rel = |a: &str, b: &str| classify_ipc_relation(&[code(a)], &[code(b)]).category;
        assert_eq!(rel("G06F3/048", "G06F3/048"), RelationCategory::Identical);
        assert_eq!(rel("C22B3/00", "C22B3/26"), RelationCategory::Hierarchical);
        assert_eq!(rel("G06K15/02", "H04L29/06"), RelationCategory::Distinct);
        assert_eq!(rel("C22B", "C22B3/26"), RelationCategory::Hierarchical);
        assert_eq!(rel("C22B3", "C22B3/00"), RelationCategory::Identical);
        assert_eq!(rel("G06F3/048", "G06F16/30"), RelationCategory::Overlapping);
        assert_eq!(rel("G06F3/048", "G06K15/02"), RelationCategory::Overlapping);
        assert_eq!(rel("C22B3/10", "C22B3/26"), RelationCategory::Overlapping);
    }

    #[test]
    fn strongest_cross_pair_wins() {
        let a = [code("H04L29/06"), code("G06F3/048")];
        let b = [code("G06F3/00"), code("A61B5/00")];
        let rel = classify_ipc_relation(&a, &b);
        assert_eq!(rel.category, RelationCategory::Hierarchical);
        assert!(rel.explanation.contains("G06F 3/00"), "{}", rel.explanation);
        assert!(rel.explanation.contains("G06F 3/048"), "{}", rel.explanation);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn canonical() -> impl Strategy<Value = String> {
            (
                prop::char::range('A', 'H'),
                0u32..100,
                prop::char::range('A', 'Z'),
                prop::option::of((1u32..10000, "[0-9]{2,6}")),
            )
                .prop_map(|(s, c, l, group)| match group {
                    None => format!("{s}{c:02}{l}"),
                    Some((g, sub)) => format!("{s}{c:02}{l} {g}/{sub}"),
                })
        }

        proptest! {
            #[test]
            fn render_parse_round_trip(raw in canonical()) {
                let parsed = parse_ipc(&raw).unwrap();
                prop_assert_eq!(parsed.render(), raw.clone());
                prop_assert_eq!(parse_ipc(&parsed.render()).unwrap(), parsed);
            }

            #[test]
            fn relation_is_symmetric(a in prop::collection::vec(canonical(), 1..4),
                                     b in prop::collection::vec(canonical(), 1..4)) {
                let a: Vec<IpcCode> = a.iter().map(|s| parse_ipc(s).unwrap()).collect();
                let b: Vec<IpcCode> = b.iter().map(|s| parse_ipc(s).unwrap()).collect();
                prop_assert_eq!(
                    classify_ipc_relation(&a, &b).category,
                    classify_ipc_relation(&b, &a).category
                );
            }
        }
    }
}
