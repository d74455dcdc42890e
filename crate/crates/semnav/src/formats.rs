//! On-disk formats: floorplan, class table and corpus JSON documents, the
//! line-oriented triple export, and JSON-lines step traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use semnav_core::geosem::StepRecord;
use semnav_core::knowledge::{
    BetaMode, ClassStat, CorpusStats, Fact, GammaMode, KnowledgeError, KnowledgeParams, PairStat, Provenance,
    Relation, SceneGraph, TripleStore, ZoneStat,
};
use semnav_core::perception::{ClassInfo, ClassTable, ClassTableError};
use semnav_core::world::{Floorplan, FloorplanDoc, FloorplanError};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Floorplan { path: String, source: FloorplanError },
    #[error("{path}: {source}")]
    Classes { path: String, source: ClassTableError },
    #[error("line {line}: {message}")]
    Triples { line: usize, message: String },
    #[error("trace line {line}: {source}")]
    Trace { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

impl FormatError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, FormatError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|source| FormatError::Json { path: path.display().to_string(), source })
}

pub fn parse_floorplan(name: &str, text: &str) -> Result<Floorplan, FormatError> {
    let doc: FloorplanDoc = parse_json(Path::new(name), text)?;
    Floorplan::from_doc(&doc).map_err(|source| FormatError::Floorplan { path: name.into(), source })
}

pub fn load_floorplan(path: &Path) -> Result<Floorplan, FormatError> {
    parse_floorplan(&path.display().to_string(), &read(path)?)
}

pub fn parse_classes(name: &str, text: &str) -> Result<ClassTable, FormatError> {
    let rows: Vec<ClassInfo> = parse_json(Path::new(name), text)?;
    ClassTable::new(rows).map_err(|source| FormatError::Classes { path: name.into(), source })
}

pub fn load_classes(path: &Path) -> Result<ClassTable, FormatError> {
    parse_classes(&path.display().to_string(), &read(path)?)
}

pub fn parse_corpus(name: &str, text: &str) -> Result<Vec<SceneGraph>, FormatError> {
    parse_json(Path::new(name), text)
}

pub fn load_corpus(path: &Path) -> Result<Vec<SceneGraph>, FormatError> {
    parse_corpus(&path.display().to_string(), &read(path)?)
}

pub const TRIPLES_HEADER: &str = "# semnav-triples v1";

fn beta_name(m: BetaMode) -> &'static str {
    match m {
        BetaMode::Fixed => "fixed",
        BetaMode::Density => "density",
    }
}

fn gamma_name(m: GammaMode) -> &'static str {
    match m {
        GammaMode::InverseScenes => "inverse_scenes",
        GammaMode::Unit => "unit",
    }
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

/// Serializes a store. Stat lines carry every count needed to rebuild it;
/// fact lines follow in sorted order. Floats use the shortest
/// representation that parses back to the same value.
pub fn export_triples(store: &TripleStore) -> String {
    let mut out = String::new();
    let p = store.params();
    let s = store.stats();
    writeln!(out, "{TRIPLES_HEADER}").unwrap();
    if s.n_scenes == 0 && s.classes.is_empty() {
        return out;
    }
    writeln!(
        out,
        "@params beta_mode={} beta_fixed={} lambda={} gamma_mode={} tau_co={}",
        beta_name(p.beta_mode),
        p.beta_fixed,
        p.lambda,
        gamma_name(p.gamma_mode),
        p.tau_co
    )
    .unwrap();
    for (name, d) in store.vocabulary() {
        writeln!(out, "@vocab {name} {} {} {}", d[0], d[1], d[2]).unwrap();
    }
    writeln!(out, "@scenes n={} w={}", s.n_scenes, s.total_weight).unwrap();
    for (c, v) in &s.classes {
        writeln!(out, "@class {c} n={} w={} online={}", v.scenes, v.weight, flag(v.online)).unwrap();
    }
    for ((a, b), v) in &s.pairs {
        writeln!(
            out,
            "@pair {a} {b} n={} w={} decay={} ab={} ba={} online={}",
            v.scenes,
            v.weight,
            v.decayed,
            v.first_on_second,
            v.second_on_first,
            flag(v.online)
        )
        .unwrap();
    }
    for ((c, z), v) in &s.zones {
        writeln!(out, "@zone {c} {z} n={} w={} online={}", v.scenes, v.weight, flag(v.online)).unwrap();
    }
    for f in store.facts() {
        writeln!(out, "{}", fact_line(&f)).unwrap();
    }
    out
}

pub fn fact_line(f: &Fact) -> String {
    format!(
        "{} {} {} p={} w={} src={}",
        f.relation.as_str(),
        f.subject,
        f.object,
        f.probability,
        f.weight,
        f.provenance.as_str()
    )
}

struct Fields<'a> {
    line: usize,
    positional: Vec<&'a str>,
    named: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn split(line: usize, text: &'a str) -> Self {
        let mut positional = Vec::new();
        let mut named = BTreeMap::new();
        for tok in text.split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) => {
                    named.insert(k, v);
                }
                None => positional.push(tok),
            }
        }
        Self { line, positional, named }
    }

    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Triples { line: self.line, message: message.into() }
    }

    fn arity(&self, n: usize) -> Result<(), FormatError> {
        if self.positional.len() == n {
            Ok(())
        } else {
            Err(self.err(format!("expected {} bare fields, found {}", n, self.positional.len())))
        }
    }

    fn get(&self, key: &str) -> Result<&'a str, FormatError> {
        self.named.get(key).copied().ok_or_else(|| self.err(format!("missing {key}=")))
    }

    fn f64(&self, key: &str) -> Result<f64, FormatError> {
        self.get(key)?.parse().map_err(|_| self.err(format!("{key} is not a number")))
    }

    fn u64(&self, key: &str) -> Result<u64, FormatError> {
        self.get(key)?.parse().map_err(|_| self.err(format!("{key} is not an integer")))
    }

    fn flag(&self, key: &str) -> Result<bool, FormatError> {
        match self.get(key)? {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.err(format!("{key} must be 0 or 1"))),
        }
    }
}

/// Parses an exported document. Fact lines must agree exactly with the
/// facts derived from the stat lines.
pub fn import_triples(text: &str) -> Result<TripleStore, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == TRIPLES_HEADER => {}
        _ => return Err(FormatError::Triples { line: 1, message: format!("expected header {TRIPLES_HEADER:?}") }),
    }
    let mut params = KnowledgeParams::default();
    let mut vocab = BTreeMap::new();
    let mut stats = CorpusStats::default();
    let mut facts: Vec<(usize, Fact)> = Vec::new();
    for (n, raw) in lines {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (kind, rest) = l.split_once(' ').unwrap_or((l, ""));
        let f = Fields::split(n, rest);
        match kind {
            "@params" => {
                f.arity(0)?;
                params.beta_mode = match f.get("beta_mode")? {
                    "fixed" => BetaMode::Fixed,
                    "density" => BetaMode::Density,
                    other => return Err(f.err(format!("unknown beta_mode {other:?}"))),
                };
                params.gamma_mode = match f.get("gamma_mode")? {
                    "inverse_scenes" => GammaMode::InverseScenes,
                    "unit" => GammaMode::Unit,
                    other => return Err(f.err(format!("unknown gamma_mode {other:?}"))),
                };
                params.beta_fixed = f.f64("beta_fixed")?;
                params.lambda = f.f64("lambda")?;
                params.tau_co = f.f64("tau_co")?;
            }
            "@vocab" => {
                f.arity(4)?;
                let mut d = [0.0; 3];
                for (i, v) in d.iter_mut().enumerate() {
                    *v = f.positional[i + 1].parse().map_err(|_| f.err("dimension is not a number"))?;
                }
                vocab.insert(f.positional[0].to_string(), d);
            }
            "@scenes" => {
                f.arity(0)?;
                stats.n_scenes = f.u64("n")?;
                stats.total_weight = f.f64("w")?;
            }
            "@class" => {
                f.arity(1)?;
                let v = ClassStat { scenes: f.u64("n")?, weight: f.f64("w")?, online: f.flag("online")? };
                stats.classes.insert(f.positional[0].into(), v);
            }
            "@pair" => {
                f.arity(2)?;
                let (a, b) = (f.positional[0], f.positional[1]);
                if a >= b {
                    return Err(f.err("pair classes must be in increasing order"));
                }
                let v = PairStat {
                    scenes: f.u64("n")?,
                    weight: f.f64("w")?,
                    decayed: f.f64("decay")?,
                    first_on_second: f.f64("ab")?,
                    second_on_first: f.f64("ba")?,
                    online: f.flag("online")?,
                };
                stats.pairs.insert((a.into(), b.into()), v);
            }
            "@zone" => {
                f.arity(2)?;
                let v = ZoneStat { scenes: f.u64("n")?, weight: f.f64("w")?, online: f.flag("online")? };
                stats.zones.insert((f.positional[0].into(), f.positional[1].into()), v);
            }
            rel if !rel.starts_with('@') => {
                let relation = Relation::parse(rel).ok_or_else(|| f.err(format!("unknown relation {rel:?}")))?;
                f.arity(2)?;
                let provenance = match f.get("src")? {
                    "corpus" => Provenance::Corpus,
                    "online" => Provenance::Online,
                    other => return Err(f.err(format!("unknown src {other:?}"))),
                };
                let p = f.f64("p")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(f.err("probability outside [0, 1]"));
                }
                facts.push((
                    n,
                    Fact {
                        relation,
                        subject: f.positional[0].into(),
                        object: f.positional[1].into(),
                        probability: p,
                        weight: f.f64("w")?,
                        provenance,
                    },
                ));
            }
            other => return Err(f.err(format!("unknown directive {other:?}"))),
        }
    }
    let store = TripleStore::from_parts(params, vocab, stats)?;
    let derived = store.facts();
    for (i, (n, f)) in facts.iter().enumerate() {
        if derived.get(i) != Some(f) {
            return Err(FormatError::Triples { line: *n, message: "fact disagrees with the statistics".into() });
        }
    }
    if facts.len() != derived.len() {
        let line = text.lines().count();
        return Err(FormatError::Triples { line, message: format!("expected {} facts, found {}", derived.len(), facts.len()) });
    }
    Ok(store)
}

pub fn write_trace(w: &mut impl Write, steps: &[StepRecord]) -> io::Result<()> {
    for s in steps {
        serde_json::to_writer(&mut *w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(r: impl BufRead) -> Result<Vec<StepRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| FormatError::Io { path: "<trace>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| FormatError::Trace { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}
