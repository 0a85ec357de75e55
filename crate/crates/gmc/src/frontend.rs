//! Shape frontend: parsing, validation, normalization, size-symbol
//! equivalence classes, and instance sampling.
//!
//! A shape source defines matrices with a structure and a property, then a
//! single product chain:
//!
//! ```text
//! Matrix G1 <General, Singular>;
//! Matrix L  <LowerTri, Invertible>;
//! X := G1 * L^-1;
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    General,
    Symmetric,
    LowerTri,
    UpperTri,
}

impl StructureKind {
    pub fn is_triangular(self) -> bool {
        matches!(self, StructureKind::LowerTri | StructureKind::UpperTri)
    }

    /// Structure of the transpose: triangularity flips, everything else is kept.
    pub fn transposed(self) -> StructureKind {
        match self {
            StructureKind::LowerTri => StructureKind::UpperTri,
            StructureKind::UpperTri => StructureKind::LowerTri,
            other => other,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            StructureKind::General => "General",
            StructureKind::Symmetric => "Symmetric",
            StructureKind::LowerTri => "LowerTri",
            StructureKind::UpperTri => "UpperTri",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropertyKind {
    Singular,
    Invertible,
    Spd,
    Orthogonal,
}

impl PropertyKind {
    /// SPD and orthogonal matrices are invertible for all downstream logic.
    pub fn is_invertible(self) -> bool {
        !matches!(self, PropertyKind::Singular)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            PropertyKind::Singular => "Singular",
            PropertyKind::Invertible => "Invertible",
            PropertyKind::Spd => "SPD",
            PropertyKind::Orthogonal => "Orthogonal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    None,
    Transpose,
    Inverse,
    InverseTranspose,
}

impl UnaryOp {
    pub fn transposes(self) -> bool {
        matches!(self, UnaryOp::Transpose | UnaryOp::InverseTranspose)
    }

    pub fn inverts(self) -> bool {
        matches!(self, UnaryOp::Inverse | UnaryOp::InverseTranspose)
    }

    pub fn from_flags(trans: bool, inv: bool) -> UnaryOp {
        match (trans, inv) {
            (false, false) => UnaryOp::None,
            (true, false) => UnaryOp::Transpose,
            (false, true) => UnaryOp::Inverse,
            (true, true) => UnaryOp::InverseTranspose,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            UnaryOp::None => "",
            UnaryOp::Transpose => "^T",
            UnaryOp::Inverse => "^-1",
            UnaryOp::InverseTranspose => "^-T",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixDecl {
    pub name: String,
    pub structure: StructureKind,
    pub property: PropertyKind,
}

/// One position in the chain: a declared matrix plus its unary operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOperand {
    pub decl: usize,
    pub op: UnaryOp,
}

/// Partition of the size symbols q_0..q_n into equivalence classes. Two
/// symbols share a class when some square matrix forces them equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    rep: Vec<usize>,
}

impl ClassPartition {
    pub fn n_symbols(&self) -> usize {
        self.rep.len()
    }

    /// Canonical representative (smallest member) of the class of symbol `i`.
    pub fn rep(&self, i: usize) -> usize {
        self.rep[i]
    }

    pub fn same(&self, i: usize, j: usize) -> bool {
        self.rep[i] == self.rep[j]
    }

    pub fn n_classes(&self) -> usize {
        self.classes().len()
    }

    /// Classes as sorted member lists, ordered by smallest member.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.rep.len() {
            if self.rep[i] == i {
                out.push(vec![i]);
            } else {
                let r = self.rep[i];
                out.iter_mut().find(|c| c[0] == r).unwrap().push(i);
            }
        }
        out
    }

    pub fn from_classes(n_symbols: usize, classes: &[Vec<usize>]) -> ClassPartition {
        let mut rep: Vec<usize> = (0..n_symbols).collect();
        for class in classes {
            let r = *class.iter().min().unwrap();
            for &m in class {
                rep[m] = r;
            }
        }
        ClassPartition { rep }
    }
}

/// The symbolic chain: operand features and operators, without sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub decls: Vec<MatrixDecl>,
    pub operands: Vec<ChainOperand>,
    pub lhs: String,
    classes: ClassPartition,
}

/// Concrete sizes q_0..q_n for one instance of a shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance(pub Vec<u32>);

impl Instance {
    pub fn satisfies(&self, classes: &ClassPartition) -> bool {
        self.0.len() == classes.n_symbols()
            && (0..self.0.len()).all(|i| self.0[i] == self.0[classes.rep(i)])
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&q| q as f64).collect()
    }

    pub fn as_u64(&self) -> Vec<u64> {
        self.0.iter().map(|&q| q as u64).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undefined matrix `{name}` at {line}:{col}")]
    UndefinedIdent { name: String, line: usize, col: usize },
    #[error("duplicate definition of matrix `{name}`")]
    DuplicateDefinition { name: String },
    #[error("invalid feature combination for `{name}`: {structure:?} cannot carry {property:?}")]
    InvalidCombination {
        name: String,
        structure: StructureKind,
        property: PropertyKind,
    },
    #[error("inversion applied to singular matrix `{name}`")]
    InversionOfSingular { name: String },
    #[error("a chain needs at least two operands")]
    TooFewOperands,
    #[error("chain normalizes to the empty product (all operands are identities)")]
    Degenerate,
}

impl Shape {
    /// Number of matrices in the chain.
    pub fn n(&self) -> usize {
        self.operands.len()
    }

    pub fn classes(&self) -> &ClassPartition {
        &self.classes
    }

    pub fn decl(&self, operand: usize) -> &MatrixDecl {
        &self.decls[self.operands[operand].decl]
    }

    pub fn op(&self, operand: usize) -> UnaryOp {
        self.operands[operand].op
    }

    /// A matrix is necessarily square when its structure is non-general, it
    /// is inverted, or it is orthogonal (orthogonal implies invertible).
    pub fn is_square(&self, operand: usize) -> bool {
        let d = self.decl(operand);
        d.structure != StructureKind::General
            || self.operands[operand].op.inverts()
            || d.property == PropertyKind::Orthogonal
    }

    pub fn n_square(&self) -> usize {
        (0..self.n()).filter(|&i| self.is_square(i)).count()
    }

    /// Assemble a shape from parts, recomputing the class partition.
    pub fn assemble(decls: Vec<MatrixDecl>, operands: Vec<ChainOperand>, lhs: String) -> Shape {
        let mut shape = Shape {
            decls,
            operands,
            lhs,
            classes: ClassPartition { rep: vec![] },
        };
        shape.classes = equivalence_classes(&shape);
        shape
    }

    /// Grammar-conforming source text; `parse(pretty_print(s)) == s`.
    pub fn pretty_print(&self) -> String {
        let mut out = String::new();
        for d in &self.decls {
            out.push_str(&format!(
                "Matrix {} <{}, {}>;\n",
                d.name,
                d.structure.keyword(),
                d.property.keyword()
            ));
        }
        out.push_str(&format!("{} :=", self.lhs));
        for (i, op) in self.operands.iter().enumerate() {
            if i > 0 {
                out.push_str(" *");
            }
            out.push_str(&format!(" {}{}", self.decls[op.decl].name, op.op.suffix()));
        }
        out.push_str(";\n");
        out
    }

    /// Compact one-line descriptor, convenient for CSV rows and logs.
    pub fn signature(&self) -> String {
        let parts: Vec<String> = self
            .operands
            .iter()
            .map(|o| {
                let d = &self.decls[o.decl];
                let s = match d.structure {
                    StructureKind::General => "G",
                    StructureKind::Symmetric => "S",
                    StructureKind::LowerTri => "L",
                    StructureKind::UpperTri => "U",
                };
                let p = match d.property {
                    PropertyKind::Singular => "s",
                    PropertyKind::Invertible => "i",
                    PropertyKind::Spd => "p",
                    PropertyKind::Orthogonal => "q",
                };
                format!("{}{}{}", s, p, o.op.suffix())
            })
            .collect();
        parts.join(" ")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Langle,
    Rangle,
    Comma,
    Semi,
    Star,
    Assign,
    OpTranspose,
    OpInverse,
    OpInverseTranspose,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<SpannedTok>, FrontendError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let tok = match c {
            '<' => {
                bump!();
                Tok::Langle
            }
            '>' => {
                bump!();
                Tok::Rangle
            }
            ',' => {
                bump!();
                Tok::Comma
            }
            ';' => {
                bump!();
                Tok::Semi
            }
            '*' => {
                bump!();
                Tok::Star
            }
            ':' => {
                bump!();
                if i < chars.len() && chars[i] == '=' {
                    bump!();
                    Tok::Assign
                } else {
                    return Err(FrontendError::Syntax {
                        line: tline,
                        col: tcol,
                        msg: "expected `:=`".into(),
                    });
                }
            }
            '^' => {
                bump!();
                while i < chars.len() && chars[i].is_whitespace() && chars[i] != '\n' {
                    bump!();
                }
                if i < chars.len() && chars[i] == 'T' {
                    bump!();
                    Tok::OpTranspose
                } else if i < chars.len() && chars[i] == '-' {
                    bump!();
                    if i < chars.len() && chars[i] == '1' {
                        bump!();
                        Tok::OpInverse
                    } else if i < chars.len() && chars[i] == 'T' {
                        bump!();
                        Tok::OpInverseTranspose
                    } else {
                        return Err(FrontendError::Syntax {
                            line: tline,
                            col: tcol,
                            msg: "expected `^-1` or `^-T`".into(),
                        });
                    }
                } else {
                    return Err(FrontendError::Syntax {
                        line: tline,
                        col: tcol,
                        msg: "expected `^T`, `^-1`, or `^-T`".into(),
                    });
                }
            }
            c if c.is_ascii_alphabetic() => {
                let mut s = String::new();
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    s.push(chars[i]);
                    bump!();
                }
                Tok::Ident(s)
            }
            other => {
                return Err(FrontendError::Syntax {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        };
        toks.push(SpannedTok {
            tok,
            line: tline,
            col: tcol,
        });
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&SpannedTok> {
        self.toks.get(self.pos)
    }

    fn at_end_err(&self, expected: &str) -> FrontendError {
        let (line, col) = self
            .toks
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        FrontendError::Syntax {
            line,
            col,
            msg: format!("unexpected end of input, expected {expected}"),
        }
    }

    fn next(&mut self, expected: &str) -> Result<SpannedTok, FrontendError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.at_end_err(expected))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), FrontendError> {
        let t = self.next(expected)?;
        if t.tok == tok {
            Ok(())
        } else {
            Err(FrontendError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("expected {expected}"),
            })
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, usize, usize), FrontendError> {
        let t = self.next(expected)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            _ => Err(FrontendError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("expected {expected}"),
            }),
        }
    }
}

fn parse_structure(s: &str) -> Option<StructureKind> {
    match s {
        "General" => Some(StructureKind::General),
        "Symmetric" => Some(StructureKind::Symmetric),
        "LowerTri" => Some(StructureKind::LowerTri),
        "UpperTri" => Some(StructureKind::UpperTri),
        _ => None,
    }
}

fn parse_property(s: &str) -> Option<PropertyKind> {
    match s {
        "Singular" => Some(PropertyKind::Singular),
        "Invertible" => Some(PropertyKind::Invertible),
        "SPD" => Some(PropertyKind::Spd),
        "Orthogonal" => Some(PropertyKind::Orthogonal),
        _ => None,
    }
}

/// Parse shape source text. The result is un-normalized; apply [`normalize`]
/// before building variants.
pub fn parse(text: &str) -> Result<Shape, FrontendError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };

    let mut decls: Vec<MatrixDecl> = Vec::new();

    loop {
        match p.peek() {
            Some(t) if t.tok == Tok::Ident("Matrix".to_string()) => {
                p.next("`Matrix`")?;
                let (name, _, _) = p.ident("matrix name")?;
                if decls.iter().any(|d| d.name == name) {
                    return Err(FrontendError::DuplicateDefinition { name });
                }
                p.expect(Tok::Langle, "`<`")?;
                let (skw, sline, scol) = p.ident("structure keyword")?;
                let structure = parse_structure(&skw).ok_or(FrontendError::Syntax {
                    line: sline,
                    col: scol,
                    msg: format!("unknown structure `{skw}`"),
                })?;
                p.expect(Tok::Comma, "`,`")?;
                let (pkw, pline, pcol) = p.ident("property keyword")?;
                let property = parse_property(&pkw).ok_or(FrontendError::Syntax {
                    line: pline,
                    col: pcol,
                    msg: format!("unknown property `{pkw}`"),
                })?;
                p.expect(Tok::Rangle, "`>`")?;
                p.expect(Tok::Semi, "`;`")?;
                if structure == StructureKind::General && property == PropertyKind::Spd {
                    return Err(FrontendError::InvalidCombination {
                        name,
                        structure,
                        property,
                    });
                }
                decls.push(MatrixDecl {
                    name,
                    structure,
                    property,
                });
            }
            _ => break,
        }
    }

    let (lhs, _, _) = p.ident("result name")?;
    p.expect(Tok::Assign, "`:=`")?;

    let mut used: Vec<usize> = Vec::new();
    let mut operands: Vec<ChainOperand> = Vec::new();
    loop {
        let (name, line, col) = p.ident("operand")?;
        let decl = decls
            .iter()
            .position(|d| d.name == name)
            .ok_or(FrontendError::UndefinedIdent { name: name.clone(), line, col })?;
        let op = match p.peek().map(|t| t.tok.clone()) {
            Some(Tok::OpTranspose) => {
                p.next("operator")?;
                UnaryOp::Transpose
            }
            Some(Tok::OpInverse) => {
                p.next("operator")?;
                UnaryOp::Inverse
            }
            Some(Tok::OpInverseTranspose) => {
                p.next("operator")?;
                UnaryOp::InverseTranspose
            }
            _ => UnaryOp::None,
        };
        if op.inverts() && decls[decl].property == PropertyKind::Singular {
            return Err(FrontendError::InversionOfSingular { name });
        }
        if !used.contains(&decl) {
            used.push(decl);
        }
        operands.push(ChainOperand { decl, op });

        let t = p.next("`*` or `;`")?;
        match t.tok {
            Tok::Star => continue,
            Tok::Semi => break,
            _ => {
                return Err(FrontendError::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: "expected `*` or `;`".into(),
                });
            }
        }
    }

    if let Some(t) = p.peek() {
        return Err(FrontendError::Syntax {
            line: t.line,
            col: t.col,
            msg: "trailing input after expression".into(),
        });
    }
    if operands.len() < 2 {
        return Err(FrontendError::TooFewOperands);
    }

    // Keep only referenced declarations, in first-use order.
    let decls_kept: Vec<MatrixDecl> = used.iter().map(|&i| decls[i].clone()).collect();
    let remap: Vec<usize> = decls
        .iter()
        .enumerate()
        .map(|(i, _)| used.iter().position(|&u| u == i).unwrap_or(usize::MAX))
        .collect();
    let operands = operands
        .into_iter()
        .map(|o| ChainOperand {
            decl: remap[o.decl],
            op: o.op,
        })
        .collect();

    Ok(Shape::assemble(decls_kept, operands, lhs))
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Rewrite a shape to its simpler equivalent form:
///
/// * operators simplify against features (`S^T -> S`, `S^-T -> S^-1`,
///   `Q^-1 -> Q^T`, `Q^-T -> Q`),
/// * provably-identity operands (triangular and orthogonal) are removed,
/// * size symbols and equivalence classes are recomputed.
///
/// Idempotent. Errors if the whole chain normalizes away.
pub fn normalize(shape: &Shape) -> Result<Shape, FrontendError> {
    let mut operands: Vec<ChainOperand> = Vec::new();
    for o in &shape.operands {
        let d = &shape.decls[o.decl];
        if d.structure.is_triangular() && d.property == PropertyKind::Orthogonal {
            // Triangular orthogonal is the identity; drop the operand.
            continue;
        }
        let mut trans = o.op.transposes();
        let mut inv = o.op.inverts();
        loop {
            let before = (trans, inv);
            if d.structure == StructureKind::Symmetric && trans {
                trans = false;
            }
            if d.property == PropertyKind::Orthogonal && inv {
                inv = false;
                trans = !trans;
            }
            if (trans, inv) == before {
                break;
            }
        }
        operands.push(ChainOperand {
            decl: o.decl,
            op: UnaryOp::from_flags(trans, inv),
        });
    }
    if operands.is_empty() {
        return Err(FrontendError::Degenerate);
    }

    // Prune declarations that lost their last operand.
    let mut used: Vec<usize> = Vec::new();
    for o in &operands {
        if !used.contains(&o.decl) {
            used.push(o.decl);
        }
    }
    used.sort_unstable();
    let decls: Vec<MatrixDecl> = used.iter().map(|&i| shape.decls[i].clone()).collect();
    let operands = operands
        .into_iter()
        .map(|o| ChainOperand {
            decl: used.iter().position(|&u| u == o.decl).unwrap(),
            op: o.op,
        })
        .collect();

    Ok(Shape::assemble(decls, operands, shape.lhs.clone()))
}

/// Union-find closure of q_{i-1} ~ q_i over square matrices.
pub fn equivalence_classes(shape: &Shape) -> ClassPartition {
    let n = shape.n();
    let mut parent: Vec<usize> = (0..=n).collect();

    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }

    for i in 0..n {
        if shape.is_square(i) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
            let (lo, hi) = (a.min(b), a.max(b));
            parent[hi] = lo;
        }
    }
    let rep: Vec<usize> = (0..=n).map(|i| find(&mut parent, i)).collect();
    ClassPartition { rep }
}

/// Draw one uniform size per equivalence class and broadcast it to members.
/// Classes are visited in order of their smallest member, so the draw is
/// deterministic for a given RNG state.
pub fn sample_instance<R: Rng>(classes: &ClassPartition, lo: u32, hi: u32, rng: &mut R) -> Instance {
    assert!(lo >= 1 && hi >= lo);
    let mut q = vec![0u32; classes.n_symbols()];
    for i in 0..classes.n_symbols() {
        if classes.rep(i) == i {
            q[i] = rng.gen_range(lo..=hi);
        } else {
            q[i] = q[classes.rep(i)];
        }
    }
    Instance(q)
}
