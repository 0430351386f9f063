//! The object-oriented bytecode: syntax tree, program indexes and class
//! hierarchy queries.
//!
//! A [`Program`] is built once by [`parse_program`] and is immutable
//! afterwards. Statements of every method are stored contiguously in one
//! global table, so a statement sequence (the suffix of a method body) is
//! identified by the [`StmtId`] of its first statement.

mod parse;
pub mod sexp;
mod unparse;
mod validate;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub use parse::{parse_program, ParseError};
pub use sexp::Pos;
pub use unparse::unparse;
pub use validate::{validate, DiagCode, Diagnostic};

/// Name of the distinguished root class.
pub const OBJECT: &str = "Object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    Public,
    Private,
    Protected,
    Final,
    Abstract,
    Static,
}

impl Attribute {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "public" => Attribute::Public,
            "private" => Attribute::Private,
            "protected" => Attribute::Protected,
            "final" => Attribute::Final,
            "abstract" => Attribute::Abstract,
            "static" => Attribute::Static,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Attribute::Public => "public",
            Attribute::Private => "private",
            Attribute::Protected => "protected",
            Attribute::Final => "final",
            Attribute::Abstract => "abstract",
            Attribute::Static => "static",
        }
    }
}

/// Declared types are informational only; class types may name classes that
/// are not part of the program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Byte,
    Char,
    Boolean,
    Void,
    Class(Arc<str>),
}

impl Type {
    pub fn from_symbol(s: &str) -> Self {
        match s {
            "int" => Type::Int,
            "byte" => Type::Byte,
            "char" => Type::Char,
            "boolean" => Type::Boolean,
            "void" => Type::Void,
            other => Type::Class(other.into()),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Byte => f.write_str("byte"),
            Type::Char => f.write_str("char"),
            Type::Boolean => f.write_str("boolean"),
            Type::Void => f.write_str("void"),
            Type::Class(c) => f.write_str(c),
        }
    }
}

/// Register names. `v<i>` are the method's `limit` locals, `p<i>` its formal
/// parameters; `ret` and `exn` are reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reg {
    This,
    Ret,
    Exn,
    V(u32),
    P(u32),
}

impl Reg {
    /// Parses a register name, accepting and dropping an optional `$` sigil.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.strip_prefix('$').unwrap_or(s);
        match s {
            "this" => Some(Reg::This),
            "ret" => Some(Reg::Ret),
            "exn" => Some(Reg::Exn),
            _ => {
                let (ctor, digits): (fn(u32) -> Reg, &str) = if let Some(d) = s.strip_prefix('v') {
                    (Reg::V, d)
                } else if let Some(d) = s.strip_prefix('p') {
                    (Reg::P, d)
                } else {
                    return None;
                };
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                digits.parse().ok().map(ctor)
            }
        }
    }

    pub fn is_reserved(self) -> bool {
        matches!(self, Reg::This | Reg::Ret | Reg::Exn)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reg::This => f.write_str("this"),
            Reg::Ret => f.write_str("ret"),
            Reg::Exn => f.write_str("exn"),
            Reg::V(i) => write!(f, "v{i}"),
            Reg::P(i) => write!(f, "p{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomicOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Lt,
    Le,
    Not,
    And,
    Or,
    StringConcat,
}

impl AtomicOp {
    pub const ALL: [AtomicOp; 12] = [
        AtomicOp::Add,
        AtomicOp::Sub,
        AtomicOp::Mul,
        AtomicOp::Div,
        AtomicOp::Mod,
        AtomicOp::Eq,
        AtomicOp::Lt,
        AtomicOp::Le,
        AtomicOp::Not,
        AtomicOp::And,
        AtomicOp::Or,
        AtomicOp::StringConcat,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            AtomicOp::Add => "add",
            AtomicOp::Sub => "sub",
            AtomicOp::Mul => "mul",
            AtomicOp::Div => "div",
            AtomicOp::Mod => "mod",
            AtomicOp::Eq => "eq",
            AtomicOp::Lt => "lt",
            AtomicOp::Le => "le",
            AtomicOp::Not => "not",
            AtomicOp::And => "and",
            AtomicOp::Or => "or",
            AtomicOp::StringConcat => "string-concat",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.keyword() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            AtomicOp::Not => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AExp {
    True,
    False,
    Null,
    Void,
    Reg(Reg),
    Int(i64),
    Str(Arc<str>),
    Op(AtomicOp, Vec<AExp>),
    InstanceOf(Box<AExp>, ClassId),
}

impl AExp {
    /// Every register read by this expression.
    pub fn registers(&self, out: &mut Vec<Reg>) {
        match self {
            AExp::Reg(r) => out.push(*r),
            AExp::Op(_, args) => args.iter().for_each(|a| a.registers(out)),
            AExp::InstanceOf(e, _) => e.registers(out),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvokeKind {
    Static,
    Direct,
    Virtual,
    Interface,
    Super,
}

impl InvokeKind {
    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "invoke-static" => InvokeKind::Static,
            "invoke-direct" => InvokeKind::Direct,
            "invoke-virtual" => InvokeKind::Virtual,
            "invoke-interface" => InvokeKind::Interface,
            "invoke-super" => InvokeKind::Super,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            InvokeKind::Static => "invoke-static",
            InvokeKind::Direct => "invoke-direct",
            InvokeKind::Virtual => "invoke-virtual",
            InvokeKind::Interface => "invoke-interface",
            InvokeKind::Super => "invoke-super",
        }
    }

    /// Whether the first argument is the receiver, bound to `this`.
    pub fn has_receiver(self) -> bool {
        !matches!(self, InvokeKind::Static)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Invoke {
    pub kind: InvokeKind,
    pub class: ClassId,
    pub method: Arc<str>,
    pub args: Vec<AExp>,
    pub types: Vec<Type>,
}

impl Invoke {
    /// Number of formal parameters of the target (receiver excluded).
    pub fn arity(&self) -> usize {
        self.args.len() - usize::from(self.kind.has_receiver())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Label(Arc<str>),
    Nop,
    Line(i64),
    Goto(Arc<str>),
    If { cond: AExp, target: Arc<str> },
    Assign { dst: Reg, src: AExp },
    New { dst: Reg, class: ClassId },
    Invoke(Invoke),
    Return(AExp),
    FieldPut { obj: AExp, field: FieldId, value: AExp },
    FieldGet { dst: Reg, obj: AExp, field: FieldId },
    PushHandler { class: ClassId, label: Arc<str> },
    PopHandler,
    Throw(AExp),
}

impl Stmt {
    pub fn falls_through(&self) -> bool {
        !matches!(self, Stmt::Goto(_) | Stmt::Return(_) | Stmt::Throw(_))
    }
}

/// A statement together with its position in the program.
#[derive(Debug, Clone)]
pub struct StmtRecord {
    pub stmt: Stmt,
    pub method: MethodId,
    /// Ordinal index within the method body.
    pub index: u32,
    /// The most recent `(line n)` directive preceding this statement.
    pub line: Option<i64>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct FieldDef {
    pub attributes: Vec<Attribute>,
    pub name: FieldId,
    pub ty: Type,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct MethodDef {
    pub attributes: Vec<Attribute>,
    pub class: ClassId,
    pub name: Arc<str>,
    pub params: Vec<Type>,
    pub ret: Type,
    pub throws: Vec<Arc<str>>,
    pub limit: u32,
    /// First statement of the body; bodies occupy `first..first+len`.
    pub first: StmtId,
    pub len: u32,
    pub pos: Pos,
}

impl MethodDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn body(&self) -> impl Iterator<Item = StmtId> {
        (self.first.0..self.first.0 + self.len).map(StmtId)
    }

    /// Registers a body may mention.
    pub fn declares(&self, reg: Reg) -> bool {
        match reg {
            Reg::This | Reg::Ret | Reg::Exn => true,
            Reg::V(i) => i < self.limit,
            Reg::P(i) => (i as usize) < self.params.len(),
        }
    }

    /// Every register a body may mention, in a fixed order.
    pub fn all_registers(&self) -> Vec<Reg> {
        let mut regs = vec![Reg::This, Reg::Ret, Reg::Exn];
        regs.extend((0..self.limit).map(Reg::V));
        regs.extend((0..self.params.len() as u32).map(Reg::P));
        regs
    }
}

#[derive(Debug, Clone)]
pub struct ClassDef {
    pub attributes: Vec<Attribute>,
    pub name: Arc<str>,
    /// `None` only for the implicit root class.
    pub parent: Option<ClassId>,
    pub fields: Vec<FieldDef>,
    pub methods: Vec<MethodId>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error("unknown label '{label}' in {method}")]
    UnknownLabel { method: String, label: String },
    #[error("method '{method}/{arity}' not found from class '{class}'")]
    MethodNotFound {
        class: String,
        method: String,
        arity: usize,
    },
    #[error("malformed method reference '{0}', expected Class.method")]
    BadMethodRef(String),
    #[error("method reference '{0}' is ambiguous")]
    AmbiguousMethod(String),
}

/// A parsed and indexed program.
#[derive(Debug, Clone)]
pub struct Program {
    /// Index 0 is always the implicit root class `Object`.
    classes: Vec<ClassDef>,
    methods: Vec<MethodDef>,
    stmts: Vec<StmtRecord>,
    class_index: HashMap<Arc<str>, ClassId>,
    field_names: Vec<Arc<str>>,
    field_index: HashMap<Arc<str>, FieldId>,
    /// First occurrence of each label within its method.
    labels: HashMap<(MethodId, Arc<str>), StmtId>,
    /// Fields of each class including inherited ones, in declaration order.
    all_fields: Vec<Vec<FieldId>>,
    method_display: Vec<String>,
}

impl Program {
    pub const OBJECT_ID: ClassId = ClassId(0);

    /// User-defined classes in source order (the implicit root is excluded).
    pub fn classes(&self) -> &[ClassDef] {
        &self.classes[1..]
    }

    pub fn class(&self, id: ClassId) -> &ClassDef {
        &self.classes[id.0 as usize]
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        &self.classes[id.0 as usize].name
    }

    pub fn methods(&self) -> &[MethodDef] {
        &self.methods
    }

    pub fn method(&self, id: MethodId) -> &MethodDef {
        &self.methods[id.0 as usize]
    }

    pub fn method_ids(&self) -> impl Iterator<Item = MethodId> {
        (0..self.methods.len() as u32).map(MethodId)
    }

    /// `Class.method`, with `/arity` appended when the name is overloaded.
    pub fn method_name(&self, id: MethodId) -> &str {
        &self.method_display[id.0 as usize]
    }

    pub fn stmt_count(&self) -> usize {
        self.stmts.len()
    }

    pub fn record(&self, id: StmtId) -> &StmtRecord {
        &self.stmts[id.0 as usize]
    }

    pub fn stmt(&self, id: StmtId) -> &Stmt {
        &self.stmts[id.0 as usize].stmt
    }

    /// The statement following `id` in its method body, if any.
    pub fn next(&self, id: StmtId) -> Option<StmtId> {
        let rec = self.record(id);
        let m = self.method(rec.method);
        (rec.index + 1 < m.len).then_some(StmtId(id.0 + 1))
    }

    /// Human-readable statement identity, `Class.method:index`.
    pub fn stmt_name(&self, id: StmtId) -> String {
        let rec = self.record(id);
        format!("{}:{}", self.method_name(rec.method), rec.index)
    }

    pub fn field_name(&self, id: FieldId) -> &str {
        &self.field_names[id.0 as usize]
    }

    pub fn field_id(&self, name: &str) -> Option<FieldId> {
        self.field_index.get(name).copied()
    }

    /// Declared fields of `class` and all of its ancestors.
    pub fn fields_of(&self, class: ClassId) -> &[FieldId] {
        &self.all_fields[class.0 as usize]
    }

    /// The `(label l)` statement of `label` within `method`.
    pub fn label_target(&self, method: MethodId, label: &str) -> Option<StmtId> {
        self.labels.get(&(method, Arc::from(label))).copied()
    }

    /// The statement sequence starting at `(label l)`: a suffix of the
    /// enclosing method body.
    pub fn stmt_seq(&self, method: MethodId, label: &str) -> Result<&[StmtRecord], IrError> {
        let start = self
            .label_target(method, label)
            .ok_or_else(|| IrError::UnknownLabel {
                method: self.method_name(method).to_string(),
                label: label.to_string(),
            })?;
        Ok(self.suffix(start))
    }

    /// The statement sequence starting at `id`.
    pub fn suffix(&self, id: StmtId) -> &[StmtRecord] {
        let m = self.method(self.record(id).method);
        let end = (m.first.0 + m.len) as usize;
        &self.stmts[id.0 as usize..end]
    }

    pub fn is_subclass(&self, sub: ClassId, sup: ClassId) -> bool {
        let mut cur = Some(sub);
        while let Some(c) = cur {
            if c == sup {
                return true;
            }
            cur = self.class(c).parent;
        }
        false
    }

    pub fn is_subclass_by_name(&self, sub: &str, sup: &str) -> Result<bool, IrError> {
        let lookup = |n: &str| {
            self.class_id(n)
                .ok_or_else(|| IrError::UnknownClass(n.to_string()))
        };
        Ok(self.is_subclass(lookup(sub)?, lookup(sup)?))
    }

    /// Method defined directly on `class` with the given name and arity.
    pub fn declared_method(&self, class: ClassId, name: &str, arity: usize) -> Option<MethodId> {
        self.class(class)
            .methods
            .iter()
            .copied()
            .find(|&m| &*self.method(m).name == name && self.method(m).arity() == arity)
    }

    /// Resolves a call target. Static and direct calls name their class
    /// exactly; virtual, interface and super calls walk up the hierarchy.
    pub fn resolve_method(
        &self,
        class: ClassId,
        name: &str,
        arity: usize,
        kind: InvokeKind,
    ) -> Result<MethodId, IrError> {
        let found = match kind {
            InvokeKind::Static | InvokeKind::Direct => self.declared_method(class, name, arity),
            InvokeKind::Virtual | InvokeKind::Interface | InvokeKind::Super => {
                let mut cur = Some(class);
                let mut hit = None;
                while let Some(c) = cur {
                    if let Some(m) = self.declared_method(c, name, arity) {
                        hit = Some(m);
                        break;
                    }
                    cur = self.class(c).parent;
                }
                hit
            }
        };
        found.ok_or_else(|| IrError::MethodNotFound {
            class: self.class_name(class).to_string(),
            method: name.to_string(),
            arity,
        })
    }

    /// Looks up an entry point written `Class.method`.
    pub fn find_method(&self, reference: &str) -> Result<MethodId, IrError> {
        let (class, name) = reference
            .rsplit_once('.')
            .ok_or_else(|| IrError::BadMethodRef(reference.to_string()))?;
        let cid = self
            .class_id(class)
            .ok_or_else(|| IrError::UnknownClass(class.to_string()))?;
        let mut hits = self
            .class(cid)
            .methods
            .iter()
            .copied()
            .filter(|&m| &*self.method(m).name == name);
        let first = hits.next().ok_or_else(|| IrError::MethodNotFound {
            class: class.to_string(),
            method: name.to_string(),
            arity: 0,
        })?;
        if hits.next().is_some() {
            return Err(IrError::AmbiguousMethod(reference.to_string()));
        }
        Ok(first)
    }
}
