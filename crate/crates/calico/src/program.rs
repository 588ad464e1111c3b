//! Program IR: typed operation trees, their text grammar, and JSONL form.
//!
//! A program is a tree of operation nodes stored as a flat vector in pre-order:
//! the root is index 0 and every dependency index is greater than its parent's
//! index. Intermediate operations (select/filter/relate_*) produce per-object
//! score distributions; output operations produce the answer. Scalar-producing
//! output operations (exist, verify, verify_rel_*, intersect, union) may feed
//! `intersect`/`union` nodes; every other output operation appears only at the
//! root.
//!
//! Text grammar (whitespace between tokens is ignored; `[...]` holds the
//! attribute family, or the relationship type for relate/rel operations):
//!
//! ```text
//! op    ::= TYPE [ '[' ARG ']' ] '(' inner ')'
//! inner ::= [ CONCEPT [ ',' 'neg' ] [ ';' ] ] [ op ( ',' op )* ]
//! ```
//!
//! Canonical serialization puts one space after `;` and after each dep comma:
//! `exist(filter[color](black, neg; select[name](bag)))`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{AttrId, ConceptId, RelType, Vocabulary};

/// The 18 operation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpType {
    Select,
    Filter,
    RelateO,
    RelateS,
    RelateAe,
    Query,
    QueryRelS,
    QueryRelO,
    Verify,
    Choose,
    VerifyRelS,
    VerifyRelO,
    Same,
    QueryAe,
    Common,
    Exist,
    Intersect,
    Union,
}

pub const OP_TYPES: [OpType; 18] = [
    OpType::Select,
    OpType::Filter,
    OpType::RelateO,
    OpType::RelateS,
    OpType::RelateAe,
    OpType::Query,
    OpType::QueryRelS,
    OpType::QueryRelO,
    OpType::Verify,
    OpType::Choose,
    OpType::VerifyRelS,
    OpType::VerifyRelO,
    OpType::Same,
    OpType::QueryAe,
    OpType::Common,
    OpType::Exist,
    OpType::Intersect,
    OpType::Union,
];

impl OpType {
    pub fn name(self) -> &'static str {
        match self {
            OpType::Select => "select",
            OpType::Filter => "filter",
            OpType::RelateO => "relate_o",
            OpType::RelateS => "relate_s",
            OpType::RelateAe => "relate_ae",
            OpType::Query => "query",
            OpType::QueryRelS => "query_rel_s",
            OpType::QueryRelO => "query_rel_o",
            OpType::Verify => "verify",
            OpType::Choose => "choose",
            OpType::VerifyRelS => "verify_rel_s",
            OpType::VerifyRelO => "verify_rel_o",
            OpType::Same => "same",
            OpType::QueryAe => "query_ae",
            OpType::Common => "common",
            OpType::Exist => "exist",
            OpType::Intersect => "intersect",
            OpType::Union => "union",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        OP_TYPES
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownSymbol(s.to_string()))
    }

    /// Stable dense index, used for per-type tables.
    pub fn index(self) -> usize {
        OP_TYPES.iter().position(|&t| t == self).unwrap()
    }

    /// Number of dependencies the operation takes.
    pub fn arity(self) -> usize {
        match self {
            OpType::Select => 0,
            OpType::Filter | OpType::Query | OpType::Verify | OpType::Same | OpType::Exist => 1,
            _ => 2,
        }
    }

    /// Whether the bracket argument is a relationship type (else an attribute
    /// family, if any).
    pub fn takes_rtype(self) -> bool {
        matches!(
            self,
            OpType::RelateO
                | OpType::RelateS
                | OpType::QueryRelS
                | OpType::QueryRelO
                | OpType::VerifyRelS
                | OpType::VerifyRelO
        )
    }

    pub fn takes_attr(self) -> bool {
        matches!(
            self,
            OpType::Select
                | OpType::Filter
                | OpType::RelateAe
                | OpType::Query
                | OpType::Verify
                | OpType::Choose
                | OpType::Same
                | OpType::QueryAe
        )
    }

    /// Whether the operation carries a concept argument (a relationship name
    /// for relate/verify_rel).
    pub fn takes_concept(self) -> bool {
        matches!(
            self,
            OpType::Select
                | OpType::Filter
                | OpType::RelateO
                | OpType::RelateS
                | OpType::Verify
                | OpType::Choose
                | OpType::VerifyRelS
                | OpType::VerifyRelO
        )
    }

    /// Intermediate operations produce object distributions.
    pub fn is_intermediate(self) -> bool {
        matches!(
            self,
            OpType::Select
                | OpType::Filter
                | OpType::RelateO
                | OpType::RelateS
                | OpType::RelateAe
        )
    }

    pub fn is_output(self) -> bool {
        !self.is_intermediate()
    }

    /// Output operations whose answer is a single score (yes/no decodable);
    /// only these may feed intersect/union.
    pub fn is_scalar_output(self) -> bool {
        matches!(
            self,
            OpType::Exist
                | OpType::Verify
                | OpType::VerifyRelS
                | OpType::VerifyRelO
                | OpType::Intersect
                | OpType::Union
        )
    }

    /// Operations that may be spliced out of a program.
    pub fn is_removable(self) -> bool {
        matches!(
            self,
            OpType::Filter | OpType::RelateO | OpType::RelateS | OpType::RelateAe
        )
    }
}

impl std::fmt::Display for OpType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One node of a program tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationNode {
    pub op: OpType,
    pub attr: Option<AttrId>,
    pub concept: Option<ConceptId>,
    pub rtype: Option<RelType>,
    /// Negated concept test (filter only): d_res flips sign.
    pub neg: bool,
    pub deps: Vec<usize>,
}

impl OperationNode {
    pub fn new(op: OpType) -> Self {
        OperationNode {
            op,
            attr: None,
            concept: None,
            rtype: None,
            neg: false,
            deps: Vec::new(),
        }
    }
}

/// A validated program tree in pre-order storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    nodes: Vec<OperationNode>,
}

impl Program {
    /// Wrap raw nodes after validating the structural invariants.
    pub fn new(nodes: Vec<OperationNode>) -> Result<Self> {
        validate(&nodes)?;
        Ok(Program { nodes })
    }

    /// Wrap raw nodes without validation (for linearize/display of
    /// intermediate shapes; most callers want [`Program::new`]).
    pub fn from_nodes_unchecked(nodes: Vec<OperationNode>) -> Self {
        Program { nodes }
    }

    pub fn nodes(&self) -> &[OperationNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &OperationNode {
        &self.nodes[0]
    }

    /// Node indices in pre-order (node before its dependencies, dependencies
    /// left to right).
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            order.push(i);
            for &d in self.nodes[i].deps.iter().rev() {
                stack.push(d);
            }
        }
        order
    }

    /// Indices of operations that may be spliced out, leaving a valid program.
    pub fn removable_set(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].op.is_removable() && self.remove_node(i).is_ok())
            .collect()
    }

    /// Remove one removable node: a filter is replaced by its dependency; a
    /// relate keeps its first dependency and drops the second subtree. The
    /// result is re-indexed to pre-order.
    pub fn remove_node(&self, index: usize) -> Result<Program> {
        if index >= self.nodes.len() {
            return Err(Error::NotRemovable {
                node: index,
                msg: "index out of range".into(),
            });
        }
        if !self.nodes[index].op.is_removable() {
            return Err(Error::NotRemovable {
                node: index,
                msg: format!("operation `{}` cannot be removed", self.nodes[index].op),
            });
        }
        let mut set = BTreeSet::new();
        set.insert(index);
        let (program, _) = self.splice_out(&set)?;
        Ok(program)
    }

    /// Remove a set of removable nodes at once, splicing each one per
    /// [`Program::remove_node`]. Nodes inside a dropped relate subtree vanish
    /// with it. Returns the rebuilt program and, per new node, its original
    /// index.
    pub fn splice_out(&self, remove: &BTreeSet<usize>) -> Result<(Program, Vec<usize>)> {
        for &i in remove {
            if i >= self.nodes.len() || !self.nodes[i].op.is_removable() {
                return Err(Error::NotRemovable {
                    node: i,
                    msg: "not a removable operation".into(),
                });
            }
        }
        let mut nodes = Vec::new();
        let mut origin = Vec::new();
        self.copy_skipping(0, remove, &mut nodes, &mut origin);
        let program = Program::new(nodes)?;
        Ok((program, origin))
    }

    fn copy_skipping(
        &self,
        old: usize,
        remove: &BTreeSet<usize>,
        out: &mut Vec<OperationNode>,
        origin: &mut Vec<usize>,
    ) -> usize {
        if remove.contains(&old) {
            // Splice: keep the first dependency's subtree, drop the rest.
            return self.copy_skipping(self.nodes[old].deps[0], remove, out, origin);
        }
        let new_index = out.len();
        let mut node = self.nodes[old].clone();
        node.deps.clear();
        out.push(node);
        origin.push(old);
        let deps: Vec<usize> = self.nodes[old].deps.clone();
        let new_deps: Vec<usize> = deps
            .into_iter()
            .map(|d| self.copy_skipping(d, remove, out, origin))
            .collect();
        out[new_index].deps = new_deps;
        new_index
    }

    /// Canonical text form.
    pub fn serialize(&self, vocab: &Vocabulary) -> String {
        let mut s = String::new();
        self.write_node(0, vocab, &mut s);
        s
    }

    fn write_node(&self, i: usize, vocab: &Vocabulary, out: &mut String) {
        let n = &self.nodes[i];
        out.push_str(n.op.name());
        if let Some(rt) = n.rtype {
            out.push('[');
            out.push_str(rt.name());
            out.push(']');
        } else if let Some(a) = n.attr {
            out.push('[');
            out.push_str(vocab.attr_name(a));
            out.push(']');
        }
        out.push('(');
        let mut need_sep = false;
        if let Some(c) = n.concept {
            out.push_str(vocab.concept_name(c));
            if n.neg {
                out.push_str(", neg");
            }
            need_sep = true;
        }
        for (k, &d) in n.deps.iter().enumerate() {
            if need_sep {
                out.push_str("; ");
                need_sep = false;
            } else if k > 0 {
                out.push_str(", ");
            }
            self.write_node(d, vocab, out);
        }
        out.push(')');
    }

    /// Parse the text grammar.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Program> {
        let mut parser = Parser {
            input: text.as_bytes(),
            pos: 0,
            vocab,
            nodes: Vec::new(),
        };
        parser.skip_ws();
        parser.parse_op()?;
        parser.skip_ws();
        if parser.pos != parser.input.len() {
            return Err(Error::Syntax {
                pos: parser.pos,
                msg: "trailing input after program".into(),
            });
        }
        Program::new(parser.nodes)
    }
}

/// Structural validation of raw nodes.
fn validate(nodes: &[OperationNode]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidProgram("program has no nodes".into()));
    }
    if !nodes[0].op.is_output() {
        return Err(Error::InvalidProgram(format!(
            "root must be an output operation, got `{}`",
            nodes[0].op
        )));
    }
    let mut referenced = vec![0usize; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if n.deps.len() != n.op.arity() {
            return Err(Error::Arity {
                node: i,
                msg: format!(
                    "`{}` takes {} dependencies, found {}",
                    n.op,
                    n.op.arity(),
                    n.deps.len()
                ),
            });
        }
        for &d in &n.deps {
            if d >= nodes.len() {
                return Err(Error::InvalidProgram(format!(
                    "node {i} references out-of-range node {d}"
                )));
            }
            if d <= i {
                return Err(Error::InvalidProgram(format!(
                    "dependency index {d} of node {i} does not follow its parent"
                )));
            }
            referenced[d] += 1;
            let child = &nodes[d];
            if n.op == OpType::Intersect || n.op == OpType::Union {
                if !child.op.is_scalar_output() {
                    return Err(Error::InvalidProgram(format!(
                        "`{}` needs scalar inputs, got `{}` at node {d}",
                        n.op, child.op
                    )));
                }
            } else if !child.op.is_intermediate() {
                return Err(Error::InvalidProgram(format!(
                    "`{}` needs object-distribution inputs, got `{}` at node {d}",
                    n.op, child.op
                )));
            }
        }
        if n.op.takes_concept() != n.concept.is_some() {
            return Err(Error::Arity {
                node: i,
                msg: format!(
                    "`{}` {} a concept argument",
                    n.op,
                    if n.op.takes_concept() { "requires" } else { "does not take" }
                ),
            });
        }
        if n.op.takes_rtype() != n.rtype.is_some() {
            return Err(Error::Arity {
                node: i,
                msg: format!(
                    "`{}` {} a relationship type",
                    n.op,
                    if n.op.takes_rtype() { "requires" } else { "does not take" }
                ),
            });
        }
        if n.op.takes_attr() != n.attr.is_some() {
            return Err(Error::Arity {
                node: i,
                msg: format!(
                    "`{}` {} an attribute family",
                    n.op,
                    if n.op.takes_attr() { "requires" } else { "does not take" }
                ),
            });
        }
        if n.neg && n.op != OpType::Filter {
            return Err(Error::Arity {
                node: i,
                msg: format!("`{}` does not take a neg flag", n.op),
            });
        }
    }
    if referenced[0] != 0 {
        return Err(Error::InvalidProgram("root is referenced as a dependency".into()));
    }
    for (i, &r) in referenced.iter().enumerate().skip(1) {
        if r == 0 {
            return Err(Error::InvalidProgram(format!("node {i} is unreachable")));
        }
        if r > 1 {
            return Err(Error::InvalidProgram(format!(
                "node {i} is referenced {r} times; programs are trees"
            )));
        }
    }
    Ok(())
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    vocab: &'a Vocabulary,
    nodes: Vec<OperationNode>,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.input.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Syntax {
                pos: self.pos,
                msg: format!("expected `{}`", c as char),
            })
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.input.len()
            && (self.input[self.pos].is_ascii_alphanumeric() || self.input[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::Syntax {
                pos: start,
                msg: "expected identifier".into(),
            });
        }
        Ok(std::str::from_utf8(&self.input[start..self.pos])
            .expect("ascii ident")
            .to_string())
    }

    /// Parse one operation; returns its node index.
    fn parse_op(&mut self) -> Result<usize> {
        let name_pos = {
            self.skip_ws();
            self.pos
        };
        let name = self.ident()?;
        let op = OpType::parse(&name).map_err(|_| Error::Syntax {
            pos: name_pos,
            msg: format!("unknown operation `{name}`"),
        })?;
        let index = self.nodes.len();
        self.nodes.push(OperationNode::new(op));

        if self.peek() == Some(b'[') {
            self.pos += 1;
            let arg = self.ident()?;
            if op.takes_rtype() {
                self.nodes[index].rtype = Some(RelType::parse(&arg)?);
            } else {
                self.nodes[index].attr = Some(self.vocab.attr_id(&arg)?);
            }
            self.expect(b']')?;
        }

        self.expect(b'(')?;
        if op.takes_concept() {
            let cname = self.ident()?;
            let concept = self.vocab.concept_id(&cname)?;
            if let Some(rt) = self.nodes[index].rtype {
                if self.vocab.rtype_of(concept) != Some(rt) {
                    return Err(Error::InvalidProgram(format!(
                        "`{cname}` is not a {rt} relationship"
                    )));
                }
            }
            self.nodes[index].concept = Some(concept);
            if self.peek() == Some(b',') {
                // Either `, neg` or we are looking at the next dep of our
                // parent; only consume when it really is the neg marker.
                let save = self.pos;
                self.pos += 1;
                let word = self.ident()?;
                if word == "neg" {
                    self.nodes[index].neg = true;
                } else {
                    self.pos = save;
                }
            }
            if op.arity() > 0 {
                self.expect(b';')?;
            }
        }
        let mut deps = Vec::new();
        if op.arity() > 0 {
            deps.push(self.parse_op()?);
            while deps.len() < op.arity() {
                self.expect(b',')?;
                deps.push(self.parse_op()?);
            }
        }
        self.nodes[index].deps = deps;
        self.expect(b')')?;
        Ok(index)
    }
}

// ---------------------------------------------------------------------------
// JSONL question records
// ---------------------------------------------------------------------------

/// JSON shape of one node (all argument fields always present).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(rename = "type")]
    pub op: String,
    pub attr: Option<String>,
    pub concept: Option<String>,
    pub rtype: Option<String>,
    pub neg: bool,
    pub deps: Vec<usize>,
}

/// JSON shape of one question line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub program: Vec<NodeRecord>,
    pub answer: String,
}

/// An in-memory question: program plus gold answer.
///
/// Question ids follow the convention `<scene_id>-q<k>`, which is how records
/// in a question file refer to records in the matching scene file.
#[derive(Debug, Clone)]
pub struct Question {
    pub qid: String,
    pub program: Program,
    pub answer: String,
}

impl Question {
    /// Scene id encoded in the question id.
    pub fn scene_id(&self) -> &str {
        scene_id_of_qid(&self.qid)
    }
}

/// Split the `<scene_id>-q<k>` convention.
pub fn scene_id_of_qid(qid: &str) -> &str {
    match qid.rfind("-q") {
        Some(i) => &qid[..i],
        None => qid,
    }
}

pub fn program_to_records(program: &Program, vocab: &Vocabulary) -> Vec<NodeRecord> {
    program
        .nodes()
        .iter()
        .map(|n| NodeRecord {
            op: n.op.name().to_string(),
            attr: n.attr.map(|a| vocab.attr_name(a).to_string()),
            concept: n.concept.map(|c| vocab.concept_name(c).to_string()),
            rtype: n.rtype.map(|r| r.name().to_string()),
            neg: n.neg,
            deps: n.deps.clone(),
        })
        .collect()
}

pub fn program_from_records(records: &[NodeRecord], vocab: &Vocabulary) -> Result<Program> {
    let mut nodes = Vec::with_capacity(records.len());
    for r in records {
        let mut node = OperationNode::new(OpType::parse(&r.op)?);
        node.attr = r.attr.as_deref().map(|a| vocab.attr_id(a)).transpose()?;
        node.concept = r
            .concept
            .as_deref()
            .map(|c| vocab.concept_id(c))
            .transpose()?;
        node.rtype = r.rtype.as_deref().map(RelType::parse).transpose()?;
        node.neg = r.neg;
        node.deps = r.deps.clone();
        nodes.push(node);
    }
    Program::new(nodes)
}

/// Load a question JSONL file. Blank lines are skipped; malformed lines are
/// schema errors carrying the 1-based line number.
pub fn load_questions(path: &Path, vocab: &Vocabulary) -> Result<Vec<Question>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut questions = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(display.clone(), lineno + 1, e.to_string()))?;
        let program = program_from_records(&record.program, vocab)
            .map_err(|e| Error::schema(display.clone(), lineno + 1, e.to_string()))?;
        questions.push(Question {
            qid: record.qid,
            program,
            answer: record.answer,
        });
    }
    Ok(questions)
}

pub fn save_questions(path: &Path, questions: &[Question], vocab: &Vocabulary) -> Result<()> {
    let display = path.display().to_string();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(display.clone(), e))?,
    );
    for q in questions {
        let record = QuestionRecord {
            qid: q.qid.clone(),
            program: program_to_records(&q.program, vocab),
            answer: q.answer.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::schema(display.clone(), 0, e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(display.clone(), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::RelType;

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            vec!["bag".into(), "girl".into(), "box".into()],
            vec![("color".into(), vec!["black".into(), "white".into()])],
            vec![
                (RelType::Spatial, vec!["left_of".into()]),
                (RelType::Semantic, vec!["holding".into()]),
            ],
            7,
            0.25,
        )
        .unwrap()
    }

    #[test]
    fn parses_two_node_program() {
        let v = vocab();
        let p = Program::parse("exist(select[name](bag))", &v).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.nodes()[0].op, OpType::Exist);
        assert_eq!(p.nodes()[0].deps, vec![1]);
        assert_eq!(p.nodes()[1].op, OpType::Select);
        assert_eq!(p.nodes()[1].concept, Some(0));
        assert_eq!(p.nodes()[1].attr, Some(0));
    }

    #[test]
    fn parses_negated_filter_chain() {
        let v = vocab();
        let p = Program::parse(
            "exist(filter[color](black, neg; select[name](bag)))",
            &v,
        )
        .unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.nodes()[1].op, OpType::Filter);
        assert!(p.nodes()[1].neg);
        assert_eq!(p.nodes()[1].concept, Some(3));
        assert_eq!(p.nodes()[1].deps, vec![2]);
    }

    #[test]
    fn whitespace_is_ignored() {
        let v = vocab();
        let a = Program::parse("exist(select[name](bag))", &v).unwrap();
        let b = Program::parse(" exist ( select [ name ] ( bag ) ) ", &v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn serialization_is_canonical() {
        let v = vocab();
        for text in [
            "exist(select[name](bag))",
            "exist(filter[color](black, neg; select[name](bag)))",
            "query[color](relate_s[spatial](left_of; select[name](bag), select[name](girl)))",
            "intersect(exist(select[name](bag)), exist(select[name](box)))",
            "common(select[name](bag), select[name](girl))",
        ] {
            let p = Program::parse(text, &v).unwrap();
            assert_eq!(p.serialize(&v), text);
        }
    }

    #[test]
    fn roundtrip_through_records() {
        let v = vocab();
        let p = Program::parse(
            "choose[color](black; select[name](bag), select[name](box))",
            &v,
        )
        .unwrap();
        let records = program_to_records(&p, &v);
        let q = program_from_records(&records, &v).unwrap();
        assert_eq!(p, q);
        // Null argument fields are serialized explicitly.
        let json = serde_json::to_string(&records[0]).unwrap();
        assert!(json.contains("\"rtype\":null"));
    }

    #[test]
    fn arity_errors() {
        let v = vocab();
        assert!(matches!(
            Program::parse("exist()", &v),
            Err(Error::Syntax { .. })
        ));
        let err = Program::parse(
            "union(exist(select[name](bag)))",
            &v,
        );
        assert!(matches!(err, Err(Error::Syntax { .. }) | Err(Error::Arity { .. })));
    }

    #[test]
    fn unknown_symbols() {
        let v = vocab();
        assert!(matches!(
            Program::parse("exist(select[name](dragon))", &v),
            Err(Error::UnknownSymbol(_))
        ));
        assert!(matches!(
            Program::parse("blorp(select[name](bag))", &v),
            Err(Error::Syntax { .. })
        ));
        // Relationship must belong to the declared group.
        assert!(Program::parse(
            "exist(relate_s[spatial](holding; select[name](bag), select[name](girl)))",
            &v
        )
        .is_err());
    }

    #[test]
    fn syntax_error_carries_position() {
        let v = vocab();
        match Program::parse("exist(select[name](bag)", &v) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 23),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn validates_structure() {
        let v = vocab();
        // Root must be an output operation.
        let select = Program::parse("exist(select[name](bag))", &v).unwrap();
        let nodes = vec![select.nodes()[1].clone()];
        assert!(matches!(Program::new(nodes), Err(Error::InvalidProgram(_))));

        // Dependency indices must follow the parent.
        let mut back = select.nodes().to_vec();
        back[0].deps = vec![0];
        assert!(Program::new(back).is_err());

        // Scalar outputs may feed intersect; distributions may not.
        assert!(Program::parse(
            "intersect(exist(select[name](bag)), exist(select[name](girl)))",
            &v
        )
        .is_ok());
        assert!(Program::parse(
            "intersect(select[name](bag), select[name](girl))",
            &v
        )
        .is_err());
        // Non-scalar outputs never nest.
        assert!(Program::parse(
            "exist(query[color](select[name](bag)))",
            &v
        )
        .is_err());
    }

    #[test]
    fn preorder_of_single_node() {
        let nodes = vec![OperationNode::new(OpType::Exist)];
        let p = Program::from_nodes_unchecked(nodes);
        assert_eq!(p.preorder(), vec![0]);
    }

    #[test]
    fn preorder_visits_parents_first() {
        let v = vocab();
        let p = Program::parse(
            "query[color](relate_s[spatial](left_of; filter[color](black; select[name](bag)), select[name](girl)))",
            &v,
        )
        .unwrap();
        let order = p.preorder();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
        for (i, n) in p.nodes().iter().enumerate() {
            for &d in &n.deps {
                let pi = order.iter().position(|&x| x == i).unwrap();
                let di = order.iter().position(|&x| x == d).unwrap();
                assert!(pi < di);
            }
        }
    }

    #[test]
    fn removable_set_and_removal() {
        let v = vocab();
        let p = Program::parse(
            "exist(filter[color](black, neg; select[name](bag)))",
            &v,
        )
        .unwrap();
        assert_eq!(p.removable_set(), vec![1]);
        let q = p.remove_node(1).unwrap();
        assert_eq!(q.serialize(&v), "exist(select[name](bag))");
    }

    #[test]
    fn removing_relate_keeps_first_branch() {
        let v = vocab();
        let p = Program::parse(
            "exist(relate_s[spatial](left_of; filter[color](black; select[name](bag)), select[name](girl)))",
            &v,
        )
        .unwrap();
        let q = p.remove_node(1).unwrap();
        assert_eq!(
            q.serialize(&v),
            "exist(filter[color](black; select[name](bag)))"
        );
        // Splicing out both the relate and the inner filter in one pass.
        let mut set = BTreeSet::new();
        set.insert(1);
        set.insert(2);
        let (r, origin) = p.splice_out(&set).unwrap();
        assert_eq!(r.serialize(&v), "exist(select[name](bag))");
        assert_eq!(origin, vec![0, 3]);
    }

    #[test]
    fn non_removable_nodes_are_rejected() {
        let v = vocab();
        let p = Program::parse("exist(select[name](bag))", &v).unwrap();
        assert!(matches!(
            p.remove_node(1),
            Err(Error::NotRemovable { node: 1, .. })
        ));
        assert!(matches!(
            p.remove_node(0),
            Err(Error::NotRemovable { node: 0, .. })
        ));
        assert!(p.removable_set().is_empty());
    }
}
