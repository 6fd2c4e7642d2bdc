//! Glyph input, dendrogram and statistics output, synthetic instances.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cluster::{Dendrogram, MergeEvent};
use crate::engine::EngineStats;
use crate::geometry::{PointId, WeightedPoint};
use crate::scalar::Scalar;

/// Where a bad input record sits: a line of a CSV file, or the 1-based
/// position of a record in a JSON array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Record(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Record(r) => write!(f, "record {r}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{at}: {msg}")]
    Syntax { at: Location, msg: String },
    #[error("{at}: point {id} has non-positive weight")]
    NonPositiveWeight { at: Location, id: u64 },
    #[error("{at}: duplicate id {id}")]
    DuplicateId { at: Location, id: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One glyph as read, before ids are assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct InputRecord<S> {
    pub id: Option<u64>,
    pub x: S,
    pub y: S,
    pub weight: S,
    pub at: Location,
}

fn syntax(at: Location, msg: impl Into<String>) -> InputError {
    InputError::Syntax { at, msg: msg.into() }
}

fn number<S: Scalar>(at: Location, field: &str, s: &str) -> Result<S, InputError> {
    S::parse(s).ok_or_else(|| syntax(at, format!("{field}: cannot parse `{s}` as a number")))
}

fn id_field(at: Location, s: &str) -> Result<Option<u64>, InputError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| syntax(at, format!("id: `{s}` is not a non-negative integer")))
}

#[derive(Clone, Copy)]
struct Columns {
    id: Option<usize>,
    x: usize,
    y: usize,
    w: usize,
}

fn header_columns(fields: &[&str]) -> Option<Columns> {
    let find = |names: &[&str]| fields.iter().position(|f| names.contains(&f.to_ascii_lowercase().as_str()));
    let x = find(&["x"])?;
    let y = find(&["y"])?;
    let w = find(&["weight", "w"])?;
    Some(Columns { id: find(&["id"]), x, y, w })
}

/// Parses CSV rows `id,x,y,weight` or `x,y,weight`, with an optional header
/// naming the columns. Lines starting with `#` are skipped.
pub fn parse_csv<S: Scalar>(text: &str) -> Result<Vec<InputRecord<S>>, InputError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut cols: Option<Columns> = None;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            syntax(Location::Line(line), e.to_string())
        })?;
        let at = Location::Line(rec.position().map_or(0, |p| p.line()));
        let fields: Vec<&str> = rec.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 {
            if let Some(c) = header_columns(&fields) {
                cols = Some(c);
                continue;
            }
        }
        let c = match cols {
            Some(c) => c,
            None => match fields.len() {
                4 => Columns { id: Some(0), x: 1, y: 2, w: 3 },
                3 => Columns { id: None, x: 0, y: 1, w: 2 },
                k => return Err(syntax(at, format!("expected 3 or 4 fields, found {k}"))),
            },
        };
        let get = |k: usize| fields.get(k).copied().ok_or_else(|| syntax(at, "missing field"));
        out.push(InputRecord {
            id: match c.id {
                Some(k) => id_field(at, get(k)?)?,
                None => None,
            },
            x: number(at, "x", get(c.x)?)?,
            y: number(at, "y", get(c.y)?)?,
            weight: number(at, "weight", get(c.w)?)?,
            at,
        });
    }
    Ok(out)
}

fn json_field<S: Scalar>(at: Location, obj: &serde_json::Map<String, Value>, names: &[&str]) -> Result<S, InputError> {
    let v = names
        .iter()
        .find_map(|n| obj.get(*n))
        .ok_or_else(|| syntax(at, format!("missing `{}`", names[0])))?;
    match v {
        Value::Number(n) => number(at, names[0], &n.to_string()),
        Value::String(s) => number(at, names[0], s),
        _ => Err(syntax(at, format!("`{}` must be a number or a string", names[0]))),
    }
}

/// Parses a JSON array of `{"id"?, "x", "y", "weight"}` objects (`w` is
/// accepted for `weight`). Numbers may be given as strings, so exact values
/// such as `"1/3"` survive.
pub fn parse_json<S: Scalar>(text: &str) -> Result<Vec<InputRecord<S>>, InputError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| syntax(Location::Line(e.line() as u64), e.to_string()))?;
    let Value::Array(items) = doc else {
        return Err(syntax(Location::Line(1), "expected a JSON array of records"));
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let at = Location::Record(i + 1);
            let obj = item.as_object().ok_or_else(|| syntax(at, "record is not an object"))?;
            let id = match obj.get("id") {
                None | Some(Value::Null) => None,
                Some(Value::Number(n)) => Some(n.as_u64().ok_or_else(|| syntax(at, "id must be a non-negative integer"))?),
                Some(Value::String(s)) => id_field(at, s)?,
                Some(_) => return Err(syntax(at, "id must be an integer")),
            };
            Ok(InputRecord {
                id,
                x: json_field(at, obj, &["x"])?,
                y: json_field(at, obj, &["y"])?,
                weight: json_field(at, obj, &["weight", "w"])?,
                at,
            })
        })
        .collect()
}

/// Checks weights and ids and assigns the missing ids: the smallest
/// non-negative integers not given explicitly, in input order.
pub fn into_points<S: Scalar>(records: Vec<InputRecord<S>>) -> Result<Vec<WeightedPoint<S>>, InputError> {
    let mut seen = HashSet::new();
    for r in &records {
        if let Some(id) = r.id {
            if !seen.insert(id) {
                return Err(InputError::DuplicateId { at: r.at, id });
            }
        }
    }
    let mut next = 0u64;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let id = match r.id {
            Some(id) => id,
            None => {
                while seen.contains(&next) {
                    next += 1;
                }
                seen.insert(next);
                next
            }
        };
        if r.weight.signum() != std::cmp::Ordering::Greater {
            return Err(InputError::NonPositiveWeight { at: r.at, id });
        }
        out.push(WeightedPoint::new(id, r.x, r.y, r.weight));
    }
    Ok(out)
}

/// Reads CSV or, when the first non-blank character is `[`, JSON.
pub fn read_points<S: Scalar>(text: &str) -> Result<Vec<WeightedPoint<S>>, InputError> {
    let records = if text.trim_start().starts_with('[') {
        parse_json(text)?
    } else {
        parse_csv(text)?
    };
    into_points(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafDoc {
    pub id: u64,
    pub x: Value,
    pub y: Value,
    pub w: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeDoc {
    pub t: Value,
    pub left: u64,
    pub right: u64,
    pub result: u64,
    pub x: Value,
    pub y: Value,
    pub w: Value,
}

/// Serialised dendrogram. Exact values are `"p/q"` strings, float values
/// are JSON numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DendrogramDoc {
    pub leaves: Vec<LeafDoc>,
    pub merges: Vec<MergeDoc>,
    pub roots: Vec<u64>,
}

fn scalar_of<S: Scalar>(v: &Value) -> Result<S, String> {
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(format!("`{v}` is not a number")),
    };
    S::parse(&s).ok_or_else(|| format!("cannot parse `{s}`"))
}

impl DendrogramDoc {
    pub fn new<S: Scalar>(d: &Dendrogram<S>) -> Self {
        DendrogramDoc {
            leaves: d
                .leaves
                .iter()
                .map(|p| LeafDoc { id: p.id.0, x: p.x.to_json(), y: p.y.to_json(), w: p.w.to_json() })
                .collect(),
            merges: d
                .merges
                .iter()
                .map(|m| MergeDoc {
                    t: m.t.to_json(),
                    left: m.left.0,
                    right: m.right.0,
                    result: m.result.0,
                    x: m.x.to_json(),
                    y: m.y.to_json(),
                    w: m.w.to_json(),
                })
                .collect(),
            roots: d.roots.iter().map(|r| r.0).collect(),
        }
    }

    pub fn to_dendrogram<S: Scalar>(&self) -> Result<Dendrogram<S>, String> {
        let leaves = self
            .leaves
            .iter()
            .map(|l| Ok(WeightedPoint::new(l.id, scalar_of(&l.x)?, scalar_of(&l.y)?, scalar_of(&l.w)?)))
            .collect::<Result<_, String>>()?;
        let merges = self
            .merges
            .iter()
            .map(|m| {
                Ok(MergeEvent {
                    t: scalar_of(&m.t)?,
                    left: PointId(m.left),
                    right: PointId(m.right),
                    result: PointId(m.result),
                    x: scalar_of(&m.x)?,
                    y: scalar_of(&m.y)?,
                    w: scalar_of(&m.w)?,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(Dendrogram {
            leaves,
            merges,
            roots: self.roots.iter().map(|&r| PointId(r)).collect(),
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn dendrogram_json<S: Scalar>(d: &Dendrogram<S>) -> String {
    let mut s = serde_json::to_string_pretty(&DendrogramDoc::new(d)).expect("dendrogram serialises");
    s.push('\n');
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n: usize,
    pub merges: usize,
    pub total_events: u64,
    pub tournament_events: u64,
    pub link_events: u64,
    pub peak_certificates: usize,
    pub max_links_per_node: usize,
    pub instances: usize,
    pub wall_time_ms: f64,
    pub mode: Mode,
}

impl RunStats {
    pub fn new(n: usize, merges: usize, e: &EngineStats, instances: usize, wall_time_ms: f64, mode: Mode) -> Self {
        RunStats {
            n,
            merges,
            total_events: e.tournament_events + e.link_events,
            tournament_events: e.tournament_events,
            link_events: e.link_events,
            peak_certificates: e.peak_certificates,
            max_links_per_node: e.max_links_per_node,
            instances,
            wall_time_ms,
            mode,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Uniform,
    /// Gaussian blobs around uniformly placed centres.
    Clustered,
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Layout::Uniform),
            "clustered" => Ok(Layout::Clustered),
            _ => Err(format!("unknown layout `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub layout: Layout,
    /// Coordinates lie in `[0, span]`.
    pub span: i64,
    /// Weights are log-uniform integers in `[1, weight_ratio]`.
    pub weight_ratio: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 100,
            layout: Layout::Uniform,
            span: 1_000_000,
            weight_ratio: 10_000,
            seed: 0,
        }
    }
}

/// Integer glyphs `(id, x, y, weight)` with ids `0..n`.
pub fn generate(cfg: &GenConfig) -> Vec<(u64, i64, i64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.span.max(0);
    let ratio = cfg.weight_ratio.max(1);
    let weight = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        ((u * (ratio as f64 + 1.0).ln()).exp().floor() as u64).clamp(1, ratio)
    };
    match cfg.layout {
        Layout::Uniform => (0..cfg.n as u64)
            .map(|id| {
                let x = rng.random_range(0..=span);
                let y = rng.random_range(0..=span);
                (id, x, y, weight(&mut rng))
            })
            .collect(),
        Layout::Clustered => {
            let k = (cfg.n / 64).max(1);
            let centres: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.random_range(0..=span) as f64, rng.random_range(0..=span) as f64))
                .collect();
            let blob = Normal::new(0.0, (span as f64 / 64.0).max(1.0)).expect("positive deviation");
            (0..cfg.n as u64)
                .map(|id| {
                    let (cx, cy) = centres[rng.random_range(0..k)];
                    let x = (cx + blob.sample(&mut rng)).round().clamp(0.0, span as f64) as i64;
                    let y = (cy + blob.sample(&mut rng)).round().clamp(0.0, span as f64) as i64;
                    (id, x, y, weight(&mut rng))
                })
                .collect()
        }
    }
}

pub fn generated_csv(rows: &[(u64, i64, i64, u64)]) -> String {
    let mut s = String::from("id,x,y,weight\n");
    for (id, x, y, w) in rows {
        s.push_str(&format!("{id},{x},{y},{w}\n"));
    }
    s
}

pub fn generated_points<S: Scalar>(rows: &[(u64, i64, i64, u64)]) -> Vec<WeightedPoint<S>> {
    rows.iter()
        .map(|&(id, x, y, w)| WeightedPoint::new(id, S::from_int(x), S::from_int(y), S::from_int(w as i64)))
        .collect()
}
