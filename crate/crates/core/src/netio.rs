//! Network input/output: a BIF subset, a JSON fixture format, a seeded random
//! generator, and the tab-separated result record.
//!
//! Supported BIF: `network` blocks (contents ignored), `variable` blocks with
//! `type discrete [ N ] { labels };` and optional `property ...;` lines, and
//! `probability` blocks holding either `table` or per-row `(labels) p, ...;`
//! entries. In a `table` for a conditional CPT the child varies slowest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Stats;
use crate::model::{BayesNet, Cpt, ModelError, Posterior, Variable, ROW_SUM_TOLERANCE};

#[derive(Debug, Error)]
pub enum NetIoError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: unknown variable `{name}`")]
    UnknownVariable { name: String, line: usize, col: usize },
    #[error("line {line}, column {col}: variable `{variable}` has no value `{value}`")]
    UnknownValue {
        variable: String,
        value: String,
        line: usize,
        col: usize,
    },
    #[error("CPT of `{variable}`, row {row}: entries sum to {sum}, not 1")]
    RowSum { variable: String, row: usize, sum: f64 },
    #[error("CPT of `{variable}` is defined twice")]
    DuplicateCpt { variable: String },
    #[error("variable `{variable}` has no CPT")]
    MissingCpt { variable: String },
    #[error("CPT of `{variable}` has no entry for parent row {row}")]
    MissingRow { variable: String, row: usize },
    #[error("variable `{variable}` is declared twice")]
    DuplicateVariable { variable: String },
    #[error("invalid network: {0}")]
    Invalid(#[from] ModelError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetFormat {
    Bif,
    Json,
}

impl NetFormat {
    /// `.json` files are JSON; everything else is read as BIF.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => NetFormat::Json,
            _ => NetFormat::Bif,
        }
    }
}

pub fn parse_network(text: &str, format: NetFormat) -> Result<BayesNet, NetIoError> {
    match format {
        NetFormat::Bif => parse_bif(text),
        NetFormat::Json => from_json(text),
    }
}

pub fn read_network(path: &Path) -> Result<BayesNet, NetIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text, NetFormat::from_path(path))
}

// ---- BIF tokenizer -------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &str = "{}()[],;|";

fn tokenize(text: &str) -> Result<Vec<Token>, NetIoError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let bump = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump(c, &mut line, &mut col);
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump(chars[i], &mut line, &mut col);
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i >= chars.len() {
                    return Err(NetIoError::Syntax {
                        line: l0,
                        col: c0,
                        msg: "unterminated comment".into(),
                    });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    i += 2;
                    col += 2;
                    break;
                }
                bump(chars[i], &mut line, &mut col);
                i += 1;
            }
        } else if PUNCT.contains(c) {
            out.push(Token {
                tok: Tok::Punct(c),
                line,
                col,
            });
            i += 1;
            col += 1;
        } else {
            let (l0, c0) = (line, col);
            let mut word = String::new();
            while i < chars.len() && !chars[i].is_whitespace() && !PUNCT.contains(chars[i]) {
                word.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Token {
                tok: Tok::Word(word),
                line: l0,
                col: c0,
            });
        }
    }
    Ok(out)
}

// ---- BIF parser ----------------------------------------------------------

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

struct RawCpt {
    child: usize,
    parents: Vec<usize>,
    // row-major, child fastest; None until filled
    table: Vec<Option<f64>>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.col))
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, NetIoError> {
        let (line, col) = self.here();
        Err(NetIoError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Result<Token, NetIoError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), NetIoError> {
        match self.peek() {
            Some(Token { tok: Tok::Punct(p), .. }) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            _ => self.error(format!("expected `{c}`")),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn word(&mut self) -> Result<(String, usize, usize), NetIoError> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Word(w),
                line,
                col,
            }) => {
                self.pos += 1;
                Ok((w, line, col))
            }
            _ => self.error("expected a name or number"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), NetIoError> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) if w == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.error(format!("expected `{kw}`")),
        }
    }

    fn number(&mut self) -> Result<f64, NetIoError> {
        let (line, col) = self.here();
        let (w, _, _) = self.word()?;
        match w.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(NetIoError::Syntax {
                line,
                col,
                msg: format!("`{w}` is not a number"),
            }),
        }
    }

    // Skips a balanced `{ ... }` block.
    fn skip_block(&mut self) -> Result<(), NetIoError> {
        self.punct('{')?;
        let mut depth = 1;
        while depth > 0 {
            match self.next()?.tok {
                Tok::Punct('{') => depth += 1,
                Tok::Punct('}') => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    fn skip_statement(&mut self) -> Result<(), NetIoError> {
        while self.next()?.tok != Tok::Punct(';') {}
        Ok(())
    }

    // Numbers separated by optional commas, ended by `;`.
    fn numbers(&mut self) -> Result<Vec<f64>, NetIoError> {
        let mut out = Vec::new();
        loop {
            if self.at_punct(';') {
                self.pos += 1;
                return Ok(out);
            }
            if self.at_punct(',') {
                self.pos += 1;
                continue;
            }
            out.push(self.number()?);
        }
    }
}

fn lookup_var(
    by_name: &HashMap<String, usize>,
    (name, line, col): (String, usize, usize),
) -> Result<usize, NetIoError> {
    by_name
        .get(&name)
        .copied()
        .ok_or(NetIoError::UnknownVariable { name, line, col })
}

pub fn parse_bif(text: &str) -> Result<BayesNet, NetIoError> {
    let toks = tokenize(text)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, end };
    let mut variables: Vec<Variable> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut raw: BTreeMap<usize, RawCpt> = BTreeMap::new();

    while p.peek().is_some() {
        let (kw, line, col) = p.word()?;
        match kw.as_str() {
            "network" => {
                p.word()?;
                p.skip_block()?;
            }
            "variable" => {
                let (name, _, _) = p.word()?;
                if by_name.contains_key(&name) {
                    return Err(NetIoError::DuplicateVariable { variable: name });
                }
                p.punct('{')?;
                let mut domain = None;
                while !p.at_punct('}') {
                    let (item, _, _) = p.word()?;
                    if item == "type" {
                        p.keyword("discrete")?;
                        p.punct('[')?;
                        let (line, col) = p.here();
                        let n = p.number()?;
                        p.punct(']')?;
                        p.punct('{')?;
                        let mut labels = Vec::new();
                        while !p.at_punct('}') {
                            if p.at_punct(',') {
                                p.pos += 1;
                                continue;
                            }
                            labels.push(p.word()?.0);
                        }
                        p.punct('}')?;
                        p.punct(';')?;
                        if n != labels.len() as f64 {
                            return Err(NetIoError::Syntax {
                                line,
                                col,
                                msg: format!("`{name}` declares {n} values but lists {}", labels.len()),
                            });
                        }
                        domain = Some(labels);
                    } else {
                        p.skip_statement()?;
                    }
                }
                p.punct('}')?;
                let Some(domain) = domain else {
                    return Err(NetIoError::Syntax {
                        line,
                        col,
                        msg: format!("variable `{name}` has no type declaration"),
                    });
                };
                let id = variables.len();
                by_name.insert(name.clone(), id);
                variables.push(Variable::new(id, name, domain));
            }
            "probability" => {
                p.punct('(')?;
                let child = lookup_var(&by_name, p.word()?)?;
                let mut parents = Vec::new();
                if p.at_punct('|') {
                    p.pos += 1;
                    while !p.at_punct(')') {
                        if p.at_punct(',') {
                            p.pos += 1;
                            continue;
                        }
                        parents.push(lookup_var(&by_name, p.word()?)?);
                    }
                }
                p.punct(')')?;
                if raw.contains_key(&child) {
                    return Err(NetIoError::DuplicateCpt {
                        variable: variables[child].name.clone(),
                    });
                }
                let card = variables[child].card();
                let rows: usize = parents.iter().map(|&q| variables[q].card()).product();
                let mut cpt = RawCpt {
                    child,
                    parents: parents.clone(),
                    table: vec![None; rows * card],
                };
                p.punct('{')?;
                while !p.at_punct('}') {
                    let (line, col) = p.here();
                    if p.at_punct('(') {
                        p.pos += 1;
                        let mut row = 0;
                        let mut k = 0;
                        while !p.at_punct(')') {
                            if p.at_punct(',') {
                                p.pos += 1;
                                continue;
                            }
                            let (label, l, c) = p.word()?;
                            let Some(&q) = parents.get(k) else {
                                return Err(NetIoError::Syntax {
                                    line: l,
                                    col: c,
                                    msg: "more row labels than parents".into(),
                                });
                            };
                            let var = &variables[q];
                            let Some(d) = var.value_index(&label) else {
                                return Err(NetIoError::UnknownValue {
                                    variable: var.name.clone(),
                                    value: label,
                                    line: l,
                                    col: c,
                                });
                            };
                            row = row * var.card() + d;
                            k += 1;
                        }
                        p.punct(')')?;
                        if k != parents.len() {
                            return Err(NetIoError::Syntax {
                                line,
                                col,
                                msg: format!("row names {k} of {} parents", parents.len()),
                            });
                        }
                        let xs = p.numbers()?;
                        if xs.len() != card {
                            return Err(NetIoError::Syntax {
                                line,
                                col,
                                msg: format!("row has {} entries, expected {card}", xs.len()),
                            });
                        }
                        for (j, x) in xs.into_iter().enumerate() {
                            cpt.table[row * card + j] = Some(x);
                        }
                    } else {
                        let (kw, _, _) = p.word()?;
                        if kw != "table" {
                            return Err(NetIoError::Syntax {
                                line,
                                col,
                                msg: format!("unsupported probability entry `{kw}`"),
                            });
                        }
                        let xs = p.numbers()?;
                        if xs.len() != rows * card {
                            return Err(NetIoError::Syntax {
                                line,
                                col,
                                msg: format!("table has {} entries, expected {}", xs.len(), rows * card),
                            });
                        }
                        for (i, x) in xs.into_iter().enumerate() {
                            let (j, row) = (i / rows, i % rows);
                            cpt.table[row * card + j] = Some(x);
                        }
                    }
                }
                p.punct('}')?;
                raw.insert(child, cpt);
            }
            _ => {
                return Err(NetIoError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected `{kw}`"),
                })
            }
        }
    }
    assemble(variables, raw)
}

fn assemble(variables: Vec<Variable>, mut raw: BTreeMap<usize, RawCpt>) -> Result<BayesNet, NetIoError> {
    let mut cpts = Vec::with_capacity(variables.len());
    for v in &variables {
        let Some(rc) = raw.remove(&v.id) else {
            return Err(NetIoError::MissingCpt {
                variable: v.name.clone(),
            });
        };
        let card = v.card();
        let mut table = Vec::with_capacity(rc.table.len());
        for (row, chunk) in rc.table.chunks(card).enumerate() {
            let mut sum = 0.0;
            for x in chunk {
                let Some(x) = *x else {
                    return Err(NetIoError::MissingRow {
                        variable: v.name.clone(),
                        row,
                    });
                };
                sum += x;
                table.push(x);
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(NetIoError::RowSum {
                    variable: v.name.clone(),
                    row,
                    sum,
                });
            }
        }
        cpts.push(Cpt::new(rc.child, rc.parents, table));
    }
    Ok(BayesNet::new(variables, cpts)?)
}

/// BIF text that [`parse_bif`] reads back to an identical network.
pub fn write_bif(net: &BayesNet) -> String {
    let mut out = String::from("network unknown {\n}\n");
    for v in net.variables() {
        let _ = writeln!(
            out,
            "variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}",
            v.name,
            v.card(),
            v.domain.join(", ")
        );
    }
    let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    for cpt in net.cpts() {
        let child = net.variable(cpt.child());
        let card = child.card();
        if cpt.parents().is_empty() {
            let _ = writeln!(out, "probability ( {} ) {{\n  table {};\n}}", child.name, join(cpt.table()));
            continue;
        }
        let names: Vec<&str> = cpt.parents().iter().map(|&p| net.variable(p).name.as_str()).collect();
        let _ = writeln!(out, "probability ( {} | {} ) {{", child.name, names.join(", "));
        let pcards: Vec<usize> = cpt.parents().iter().map(|&p| net.card(p)).collect();
        for (row, chunk) in cpt.table().chunks(card).enumerate() {
            let mut rest = row;
            let mut labels = vec![""; pcards.len()];
            for i in (0..pcards.len()).rev() {
                labels[i] = &net.variable(cpt.parents()[i]).domain[rest % pcards[i]];
                rest /= pcards[i];
            }
            let _ = writeln!(out, "  ({}) {};", labels.join(", "), join(chunk));
        }
        out.push_str("}\n");
    }
    out
}

// ---- JSON ----------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct JsonNet {
    variables: Vec<JsonVar>,
    cpts: Vec<JsonCpt>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonVar {
    name: String,
    values: Vec<String>,
}

/// `table` is row-major over (parents..., child), child fastest.
#[derive(Debug, Serialize, Deserialize)]
struct JsonCpt {
    child: String,
    #[serde(default)]
    parents: Vec<String>,
    table: Vec<f64>,
}

pub fn from_json(text: &str) -> Result<BayesNet, NetIoError> {
    let doc: JsonNet = serde_json::from_str(text)?;
    let mut by_name = HashMap::new();
    let mut variables = Vec::with_capacity(doc.variables.len());
    for (id, v) in doc.variables.into_iter().enumerate() {
        if by_name.insert(v.name.clone(), id).is_some() {
            return Err(NetIoError::DuplicateVariable { variable: v.name });
        }
        variables.push(Variable::new(id, v.name, v.values));
    }
    let name_of = |n: &str| {
        by_name.get(n).copied().ok_or_else(|| NetIoError::UnknownVariable {
            name: n.to_string(),
            line: 0,
            col: 0,
        })
    };
    let mut raw = BTreeMap::new();
    for c in doc.cpts {
        let child = name_of(&c.child)?;
        let parents = c.parents.iter().map(|p| name_of(p)).collect::<Result<Vec<_>, _>>()?;
        if raw.contains_key(&child) {
            return Err(NetIoError::DuplicateCpt { variable: c.child });
        }
        let expected = variables[child].card() * parents.iter().map(|&p| variables[p].card()).product::<usize>();
        let mut table: Vec<Option<f64>> = c.table.into_iter().map(Some).collect();
        table.resize(expected.max(table.len()), None);
        if table.len() != expected {
            return Err(NetIoError::Invalid(ModelError::Invalid(vec![crate::model::Violation::TableLength {
                cpt: child,
                expected,
                found: table.len(),
            }])));
        }
        raw.insert(child, RawCpt { child, parents, table });
    }
    assemble(variables, raw)
}

pub fn to_json(net: &BayesNet) -> String {
    let doc = JsonNet {
        variables: net
            .variables()
            .iter()
            .map(|v| JsonVar {
                name: v.name.clone(),
                values: v.domain.clone(),
            })
            .collect(),
        cpts: net
            .cpts()
            .iter()
            .map(|c| JsonCpt {
                child: net.variable(c.child()).name.clone(),
                parents: c.parents().iter().map(|&p| net.variable(p).name.clone()).collect(),
                table: c.table().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network serializes")
}

// ---- random networks -----------------------------------------------------

/// A random network over `X0..X{n-1}` whose parents always have smaller ids.
///
/// Each variable gets a domain of 2 to `max_domain` values and up to
/// `max_parents` parents. Each CPT row is drawn uniformly and normalized;
/// then each entry is zeroed with probability `zero_fraction` (a row that
/// loses every entry is redrawn) and the row is renormalized.
pub fn random_network(n_vars: usize, max_parents: usize, max_domain: usize, zero_fraction: f64, seed: u64) -> BayesNet {
    assert!(n_vars >= 1 && max_domain >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cards: Vec<usize> = (0..n_vars).map(|_| rng.gen_range(2..=max_domain)).collect();
    let variables: Vec<Variable> = cards
        .iter()
        .enumerate()
        .map(|(i, &c)| Variable::new(i, format!("X{i}"), (0..c).map(|j| format!("s{j}")).collect()))
        .collect();
    let mut cpts = Vec::with_capacity(n_vars);
    for i in 0..n_vars {
        let k = rng.gen_range(0..=max_parents.min(i));
        let mut parents = sample(&mut rng, i.max(1), k).into_vec();
        parents.sort_unstable();
        let rows: usize = parents.iter().map(|&p| cards[p]).product();
        let mut table = Vec::with_capacity(rows * cards[i]);
        for _ in 0..rows {
            table.extend(random_row(&mut rng, cards[i], zero_fraction));
        }
        cpts.push(Cpt::new(i, parents, table));
    }
    BayesNet::new(variables, cpts).expect("generated networks are valid")
}

fn random_row(rng: &mut ChaCha8Rng, card: usize, zero_fraction: f64) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> = (0..card).map(|_| rng.gen::<f64>() + f64::EPSILON).collect();
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= z);
        for x in row.iter_mut() {
            if rng.gen::<f64>() < zero_fraction {
                *x = 0.0;
            }
        }
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            row.iter_mut().for_each(|x| *x /= z);
            return row;
        }
    }
}

// ---- result records ------------------------------------------------------

pub const ZERO_EVIDENCE_MARKER: &str = "evidence_probability_zero";

/// Result keys in emission order.
pub const RESULT_KEYS: [&str; 12] = [
    "engine",
    "ordering",
    "query",
    "posterior",
    "nodes",
    "cpt_evals",
    "factors_cached",
    "cache_hits",
    "nogoods",
    "purges",
    "wall_ms",
    "zero_evidence",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub engine: String,
    pub ordering: String,
    pub query: String,
    pub posterior: Posterior,
    pub stats: Stats,
}

impl ResultRecord {
    /// One line of tab-separated `key=value` pairs, keys as in [`RESULT_KEYS`].
    pub fn emit(&self) -> String {
        let posterior = match &self.posterior {
            Posterior::Distribution(p) => p.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
            Posterior::ZeroEvidence => ZERO_EVIDENCE_MARKER.to_string(),
        };
        let s = &self.stats;
        let values = [
            self.engine.clone(),
            self.ordering.clone(),
            self.query.clone(),
            posterior,
            s.nodes.to_string(),
            s.cpt_evals.to_string(),
            s.factors_cached.to_string(),
            s.cache_hits.to_string(),
            s.nogoods.to_string(),
            s.purges.to_string(),
            format!("{:.3}", s.wall.as_secs_f64() * 1e3),
            u8::from(self.posterior.is_zero_evidence()).to_string(),
        ];
        RESULT_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("\t")
    }
}

pub fn emit_result(record: &ResultRecord) -> String {
    record.emit()
}

/// Splits an emitted line back into its key/value pairs.
pub fn parse_result(line: &str) -> BTreeMap<String, String> {
    line.trim_end()
        .split('\t')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
