use std::collections::BTreeSet;

use thiserror::Error;

use super::document::Node;
use super::{
    CaseGuard, Comparator, DataDecl, FunctionSpec, Guard, Literal, PayloadPath, Phase, PhaseKind, ResourceAnnotation,
    SwitchCase, WorkflowDefinition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Canonical structured-text form (JSON).
    Json,
    /// Indentation-based form (YAML).
    Yaml,
}

impl Encoding {
    /// JSON documents start with `{`; anything else is read as YAML.
    pub fn detect(text: &str) -> Encoding {
        match text.trim_start().chars().next() {
            Some('{') => Encoding::Json,
            _ => Encoding::Yaml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefinitionError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

type Result<T> = std::result::Result<T, DefinitionError>;

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(DefinitionError::Schema(msg.into()))
}

pub fn parse_definition(text: &str) -> Result<WorkflowDefinition> {
    parse_as(text, Encoding::detect(text))
}

pub(crate) fn parse_as(text: &str, encoding: Encoding) -> Result<WorkflowDefinition> {
    let node: Node = match encoding {
        Encoding::Json => serde_json::from_str(text).map_err(|e| DefinitionError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?,
        Encoding::Yaml => serde_yaml::from_str(text).map_err(|e| {
            let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
            DefinitionError::Syntax { line, column, message: e.to_string() }
        })?,
    };
    definition_from_node(&node)
}

/// Object view that tracks which keys were consumed so unknown fields can be
/// reported.
struct Fields<'a> {
    context: String,
    entries: &'a [(String, Node)],
}

impl<'a> Fields<'a> {
    fn new(node: &'a Node, context: impl Into<String>) -> Result<Fields<'a>> {
        let context = context.into();
        match node {
            Node::Object(entries) => Ok(Fields { context, entries }),
            other => schema(format!("{context}: expected an object, found {}", other.type_name())),
        }
    }

    fn check_keys(&self, allowed: &[&str], repeatable: &[&str]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (k, _) in self.entries {
            if !allowed.contains(&k.as_str()) {
                return schema(format!("{}: unknown field `{k}`", self.context));
            }
            if !seen.insert(k.as_str()) && !repeatable.contains(&k.as_str()) {
                return schema(format!("{}: duplicate field `{k}`", self.context));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Node> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn all(&self, key: &str) -> Vec<&'a Node> {
        self.entries.iter().filter(|(k, _)| k == key).map(|(_, v)| v).collect()
    }

    fn required(&self, key: &str) -> Result<&'a Node> {
        self.get(key).map_or_else(|| schema(format!("{}: missing required field `{key}`", self.context)), Ok)
    }

    fn string(&self, key: &str) -> Result<String> {
        as_string(self.required(key)?, &format!("{}.{key}", self.context))
    }

    fn opt_string(&self, key: &str) -> Result<Option<String>> {
        self.get(key).map(|n| as_string(n, &format!("{}.{key}", self.context))).transpose()
    }

    fn path(&self, key: &str) -> Result<PayloadPath> {
        let text = self.string(key)?;
        PayloadPath::parse(&text)
            .map_or_else(|| schema(format!("{}.{key}: `{text}` is not a payload path", self.context)), Ok)
    }
}

fn as_string(node: &Node, context: &str) -> Result<String> {
    match node {
        Node::String(s) => Ok(s.clone()),
        other => schema(format!("{context}: expected a string, found {}", other.type_name())),
    }
}

fn as_string_list(node: &Node, context: &str) -> Result<Vec<String>> {
    match node {
        Node::Array(items) => items.iter().enumerate().map(|(i, n)| as_string(n, &format!("{context}[{i}]"))).collect(),
        other => schema(format!("{context}: expected a list, found {}", other.type_name())),
    }
}

fn definition_from_node(node: &Node) -> Result<WorkflowDefinition> {
    let top = Fields::new(node, "definition")?;
    top.check_keys(&["name", "root", "phases", "functions"], &[])?;
    let name = top.string("name")?;
    let root = top.string("root")?;
    let Node::Object(phase_entries) = top.required("phases")? else {
        return schema("definition.phases: expected an object of named phases");
    };
    let phases = phase_entries.iter().map(|(name, body)| phase_from_node(name, body)).collect::<Result<Vec<_>>>()?;
    let functions = match top.get("functions") {
        None => Vec::new(),
        Some(Node::Object(entries)) => {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for (fname, body) in entries {
                if !seen.insert(fname.as_str()) {
                    return schema(format!("functions: `{fname}` declared twice"));
                }
                out.push(function_from_node(fname, body)?);
            }
            out
        }
        Some(other) => return schema(format!("definition.functions: expected an object, found {}", other.type_name())),
    };
    Ok(WorkflowDefinition { name, root, phases, functions })
}

fn phase_from_node(name: &str, node: &Node) -> Result<Phase> {
    let ctx = format!("phase `{name}`");
    let f = Fields::new(node, ctx.clone())?;
    let ty = f.string("type")?;
    let common = ["type", "next", "catch"];
    let allowed: Vec<&str> = match ty.as_str() {
        "task" => vec!["func"],
        "map" => vec!["func", "chain", "array", "common_parameters"],
        "loop" => vec!["func", "array"],
        "repeat" => vec!["func", "count"],
        "switch" => vec!["cases", "default"],
        "parallel" => vec!["branches"],
        other => return schema(format!("{ctx}: unknown phase type `{other}`")),
    };
    let allowed: Vec<&str> = common.iter().copied().chain(allowed).collect();
    f.check_keys(&allowed, &["default"])?;

    let kind = match ty.as_str() {
        "task" => PhaseKind::Task { func: f.string("func")? },
        "map" => {
            let body = match (f.get("func"), f.get("chain")) {
                (Some(func), None) => vec![as_string(func, &format!("{ctx}.func"))?],
                (None, Some(chain)) => {
                    let chain = as_string_list(chain, &format!("{ctx}.chain"))?;
                    if chain.is_empty() {
                        return schema(format!("{ctx}.chain: must name at least one function"));
                    }
                    chain
                }
                (Some(_), Some(_)) => return schema(format!("{ctx}: `func` and `chain` are mutually exclusive")),
                (None, None) => return schema(format!("{ctx}: missing required field `func`")),
            };
            let common_parameters = match f.get("common_parameters") {
                None => None,
                Some(_) => Some(f.path("common_parameters")?),
            };
            PhaseKind::Map { body, array: f.path("array")?, common_parameters }
        }
        "loop" => PhaseKind::Loop { func: f.string("func")?, array: f.path("array")? },
        "repeat" => {
            let count = match f.required("count")? {
                Node::Number(n) => n
                    .as_u64()
                    .and_then(|c| u32::try_from(c).ok())
                    .map_or_else(|| schema(format!("{ctx}.count: expected a non-negative integer, found {n}")), Ok)?,
                other => return schema(format!("{ctx}.count: expected an integer, found {}", other.type_name())),
            };
            PhaseKind::Repeat { func: f.string("func")?, count }
        }
        "switch" => {
            let cases = match f.required("cases")? {
                Node::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(i, c)| case_from_node(c, &format!("{ctx}.cases[{i}]")))
                    .collect::<Result<Vec<_>>>()?,
                other => return schema(format!("{ctx}.cases: expected a list, found {}", other.type_name())),
            };
            let defaults = f
                .all("default")
                .into_iter()
                .map(|n| as_string(n, &format!("{ctx}.default")))
                .collect::<Result<Vec<_>>>()?;
            PhaseKind::Switch { cases, defaults }
        }
        "parallel" => {
            let branches = match f.required("branches")? {
                Node::Array(items) => items
                    .iter()
                    .enumerate()
                    .map(|(i, b)| as_string_list(b, &format!("{ctx}.branches[{i}]")))
                    .collect::<Result<Vec<_>>>()?,
                other => return schema(format!("{ctx}.branches: expected a list, found {}", other.type_name())),
            };
            PhaseKind::Parallel { branches }
        }
        _ => unreachable!(),
    };

    Ok(Phase { name: name.to_owned(), kind, next: f.opt_string("next")?, catch: f.opt_string("catch")? })
}

fn comparison_from_fields(f: &Fields, ctx: &str) -> Result<Guard> {
    let variable = f.path("var")?;
    let op = f.string("op")?;
    let comparator =
        Comparator::from_symbol(&op).map_or_else(|| schema(format!("{ctx}.op: unknown comparator `{op}`")), Ok)?;
    let literal = match f.required("value")? {
        Node::Number(n) => Literal::Number(n.clone()),
        Node::String(s) => Literal::String(s.clone()),
        other => return schema(format!("{ctx}.value: expected a number or string, found {}", other.type_name())),
    };
    Ok(Guard { variable, comparator, literal })
}

fn case_from_node(node: &Node, ctx: &str) -> Result<SwitchCase> {
    let f = Fields::new(node, ctx)?;
    if let Some(parts) = f.get("all") {
        f.check_keys(&["all", "next"], &[])?;
        let Node::Array(items) = parts else {
            return schema(format!("{ctx}.all: expected a list of comparisons"));
        };
        let guards = items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let cctx = format!("{ctx}.all[{i}]");
                let cf = Fields::new(item, cctx.clone())?;
                cf.check_keys(&["var", "op", "value"], &[])?;
                comparison_from_fields(&cf, &cctx)
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(SwitchCase { guard: CaseGuard::All(guards), next: f.opt_string("next")? });
    }
    f.check_keys(&["var", "op", "value", "next"], &[])?;
    Ok(SwitchCase { guard: CaseGuard::Single(comparison_from_fields(&f, ctx)?), next: f.opt_string("next")? })
}

fn data_decls(node: Option<&Node>, ctx: &str) -> Result<Vec<DataDecl>> {
    let Some(node) = node else { return Ok(Vec::new()) };
    let Node::Object(entries) = node else {
        return schema(format!("{ctx}: expected an object mapping data elements to annotations"));
    };
    let mut seen = BTreeSet::new();
    entries
        .iter()
        .map(|(name, ann)| {
            if !seen.insert(name.as_str()) {
                return schema(format!("{ctx}: data element `{name}` carries more than one annotation"));
            }
            let text = as_string(ann, &format!("{ctx}.{name}"))?;
            let channel = ResourceAnnotation::from_name(&text)
                .map_or_else(|| schema(format!("{ctx}.{name}: unknown resource annotation `{text}`")), Ok)?;
            Ok(DataDecl { name: name.clone(), channel })
        })
        .collect()
}

fn function_from_node(name: &str, node: &Node) -> Result<FunctionSpec> {
    let ctx = format!("function `{name}`");
    let f = Fields::new(node, ctx.clone())?;
    f.check_keys(&["reads", "writes", "destroys", "kernel"], &[])?;
    Ok(FunctionSpec {
        name: name.to_owned(),
        reads: data_decls(f.get("reads"), &format!("{ctx}.reads"))?,
        writes: data_decls(f.get("writes"), &format!("{ctx}.writes"))?,
        destroys: match f.get("destroys") {
            None => Vec::new(),
            Some(n) => as_string_list(n, &format!("{ctx}.destroys"))?,
        },
        kernel: f.opt_string("kernel")?,
    })
}

fn guard_fields(g: &Guard) -> Vec<(&'static str, Node)> {
    vec![
        ("var", Node::string(g.variable.to_string())),
        ("op", Node::string(g.comparator.symbol())),
        (
            "value",
            match &g.literal {
                Literal::Number(n) => Node::Number(n.clone()),
                Literal::String(s) => Node::string(s.clone()),
            },
        ),
    ]
}

fn phase_to_node(phase: &Phase) -> Node {
    let mut fields: Vec<(String, Node)> = vec![("type".into(), Node::string(phase.kind.type_name()))];
    let mut push = |k: &str, v: Node| fields.push((k.to_owned(), v));
    match &phase.kind {
        PhaseKind::Task { func } => push("func", Node::string(func.clone())),
        PhaseKind::Map { body, array, common_parameters } => {
            if body.len() == 1 {
                push("func", Node::string(body[0].clone()));
            } else {
                push("chain", Node::Array(body.iter().cloned().map(Node::String).collect()));
            }
            push("array", Node::string(array.to_string()));
            if let Some(c) = common_parameters {
                push("common_parameters", Node::string(c.to_string()));
            }
        }
        PhaseKind::Loop { func, array } => {
            push("func", Node::string(func.clone()));
            push("array", Node::string(array.to_string()));
        }
        PhaseKind::Repeat { func, count } => {
            push("func", Node::string(func.clone()));
            push("count", Node::Number((*count).into()));
        }
        PhaseKind::Switch { cases, defaults } => {
            let cases = cases
                .iter()
                .map(|c| {
                    let mut entries: Vec<(String, Node)> = match &c.guard {
                        CaseGuard::Single(g) => guard_fields(g).into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
                        CaseGuard::All(gs) => vec![(
                            "all".to_owned(),
                            Node::Array(gs.iter().map(|g| Node::object(guard_fields(g))).collect()),
                        )],
                    };
                    if let Some(n) = &c.next {
                        entries.push(("next".into(), Node::string(n.clone())));
                    }
                    Node::Object(entries)
                })
                .collect();
            push("cases", Node::Array(cases));
            for d in defaults {
                push("default", Node::string(d.clone()));
            }
        }
        PhaseKind::Parallel { branches } => push(
            "branches",
            Node::Array(branches.iter().map(|b| Node::Array(b.iter().cloned().map(Node::String).collect())).collect()),
        ),
    }
    if let Some(n) = &phase.next {
        fields.push(("next".into(), Node::string(n.clone())));
    }
    if let Some(c) = &phase.catch {
        fields.push(("catch".into(), Node::string(c.clone())));
    }
    Node::Object(fields)
}

fn function_to_node(f: &FunctionSpec) -> Node {
    let decls = |ds: &[DataDecl]| Node::object(ds.iter().map(|d| (d.name.clone(), Node::string(d.channel.as_str()))));
    let mut fields = Vec::new();
    if !f.reads.is_empty() {
        fields.push(("reads".to_owned(), decls(&f.reads)));
    }
    if !f.writes.is_empty() {
        fields.push(("writes".to_owned(), decls(&f.writes)));
    }
    if !f.destroys.is_empty() {
        fields.push(("destroys".to_owned(), Node::Array(f.destroys.iter().cloned().map(Node::String).collect())));
    }
    if let Some(k) = &f.kernel {
        fields.push(("kernel".to_owned(), Node::string(k.clone())));
    }
    Node::Object(fields)
}

pub(crate) fn to_node(defn: &WorkflowDefinition) -> Node {
    let mut top = vec![
        ("name".to_owned(), Node::string(defn.name.clone())),
        ("root".to_owned(), Node::string(defn.root.clone())),
        ("phases".to_owned(), Node::Object(defn.phases.iter().map(|p| (p.name.clone(), phase_to_node(p))).collect())),
    ];
    if !defn.functions.is_empty() {
        top.push((
            "functions".to_owned(),
            Node::Object(defn.functions.iter().map(|f| (f.name.clone(), function_to_node(f))).collect()),
        ));
    }
    Node::Object(top)
}

pub(crate) fn serialize(defn: &WorkflowDefinition, encoding: Encoding) -> String {
    let node = to_node(defn);
    match encoding {
        Encoding::Json => {
            let mut s = serde_json::to_string_pretty(&node).expect("definition serializes");
            s.push('\n');
            s
        }
        Encoding::Yaml => serde_yaml::to_string(&node).expect("definition serializes"),
    }
}
