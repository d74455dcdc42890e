//! Data files compiled into the binary. Config paths of the form
//! `bundled:<name>` resolve here.

pub const CLASSES: &str = include_str!("../data/classes.json");
pub const CORPUS: &str = include_str!("../data/corpus.json");

pub const PLANS: &[(&str, &str)] = &[
    ("office_fig3", include_str!("../data/office_fig3.json")),
    ("webots_replica", include_str!("../data/webots_replica.json")),
];

pub const PREFIX: &str = "bundled:";

pub fn plan(name: &str) -> Option<&'static str> {
    PLANS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Text of a bundled resource, if `source` names one.
pub fn resolve(source: &str) -> Option<&'static str> {
    match source.strip_prefix(PREFIX)? {
        "classes" => Some(CLASSES),
        "corpus" => Some(CORPUS),
        name => plan(name),
    }
}
