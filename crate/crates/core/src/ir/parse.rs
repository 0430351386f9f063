use std::collections::HashMap;
use std::sync::Arc;

use super::sexp::{self, LexError, Pos, Sexp, SexpKind};
use super::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("lexical error at {0}")]
    Lex(#[from] LexError),
    #[error("{pos}: arity error: {message}")]
    Arity { pos: Pos, message: String },
    #[error("{pos}: unknown keyword '{keyword}'")]
    UnknownKeyword { pos: Pos, keyword: String },
    #[error("{pos}: {message}")]
    Malformed { pos: Pos, message: String },
    #[error("{pos}: unknown parent class '{parent}' of '{class}'")]
    UnknownParent {
        pos: Pos,
        class: String,
        parent: String,
    },
    #[error("{pos}: unknown class '{name}'")]
    UnknownClass { pos: Pos, name: String },
    #[error("{pos}: duplicate class '{name}'")]
    DuplicateClass { pos: Pos, name: String },
    #[error("{pos}: inheritance cycle through '{name}'")]
    InheritanceCycle { pos: Pos, name: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Lex(e) => e.pos,
            ParseError::Arity { pos, .. }
            | ParseError::UnknownKeyword { pos, .. }
            | ParseError::Malformed { pos, .. }
            | ParseError::UnknownParent { pos, .. }
            | ParseError::UnknownClass { pos, .. }
            | ParseError::DuplicateClass { pos, .. }
            | ParseError::InheritanceCycle { pos, .. } => *pos,
        }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

fn malformed<T>(pos: Pos, message: impl Into<String>) -> Result<T> {
    Err(ParseError::Malformed {
        pos,
        message: message.into(),
    })
}

fn arity<T>(pos: Pos, message: impl Into<String>) -> Result<T> {
    Err(ParseError::Arity {
        pos,
        message: message.into(),
    })
}

fn symbol<'a>(s: &'a Sexp, what: &str) -> Result<&'a str> {
    s.as_symbol()
        .ok_or_else(|| ParseError::Malformed {
            pos: s.pos,
            message: format!("expected {what}"),
        })
}

fn list<'a>(s: &'a Sexp, what: &str) -> Result<&'a [Sexp]> {
    s.as_list().ok_or_else(|| ParseError::Malformed {
        pos: s.pos,
        message: format!("expected {what}"),
    })
}

/// Parses program text into an indexed [`Program`].
///
/// Class-hierarchy errors (unknown parents, duplicates, cycles) and
/// references to undefined classes are reported here; the remaining
/// well-formedness rules are checked by [`validate`](super::validate).
pub fn parse_program(text: &str) -> Result<Program> {
    let data = sexp::read_all(text)?;
    Builder::default().build(&data)
}

#[derive(Default)]
struct Builder {
    classes: Vec<ClassDef>,
    methods: Vec<MethodDef>,
    stmts: Vec<StmtRecord>,
    class_index: HashMap<Arc<str>, ClassId>,
    field_names: Vec<Arc<str>>,
    field_index: HashMap<Arc<str>, FieldId>,
    labels: HashMap<(MethodId, Arc<str>), StmtId>,
}

struct ClassHeader<'a> {
    attributes: Vec<Attribute>,
    name: &'a str,
    parent: &'a str,
    parent_pos: Pos,
    fields: &'a [Sexp],
    methods: &'a [Sexp],
    pos: Pos,
}

fn class_header(datum: &Sexp) -> Result<ClassHeader<'_>> {
    let items = list(datum, "a class definition")?;
    let mut attributes = Vec::new();
    let mut i = 0;
    while let Some(attr) = items.get(i).and_then(Sexp::as_symbol).and_then(Attribute::from_keyword) {
        attributes.push(attr);
        i += 1;
    }
    match items.get(i) {
        Some(s) if s.as_symbol() == Some("class") => {}
        Some(s) => {
            return match s.as_symbol() {
                Some(k) => Err(ParseError::UnknownKeyword {
                    pos: s.pos,
                    keyword: k.to_string(),
                }),
                None => malformed(s.pos, "expected 'class'"),
            }
        }
        None => return malformed(datum.pos, "expected 'class'"),
    }
    let rest = &items[i + 1..];
    if rest.len() != 5 {
        return arity(
            datum.pos,
            "class definition needs: class NAME extends PARENT (fields...) (methods...)",
        );
    }
    let name = symbol(&rest[0], "a class name")?;
    if rest[1].as_symbol() != Some("extends") {
        return malformed(rest[1].pos, "expected 'extends'");
    }
    let parent = symbol(&rest[2], "a parent class name")?;
    Ok(ClassHeader {
        attributes,
        name,
        parent,
        parent_pos: rest[2].pos,
        fields: list(&rest[3], "a field list")?,
        methods: list(&rest[4], "a method list")?,
        pos: datum.pos,
    })
}

impl Builder {
    fn build(mut self, data: &[Sexp]) -> Result<Program> {
        let headers = data.iter().map(class_header).collect::<Result<Vec<_>>>()?;

        self.classes.push(ClassDef {
            attributes: vec![Attribute::Public],
            name: OBJECT.into(),
            parent: None,
            fields: Vec::new(),
            methods: Vec::new(),
            pos: Pos::default(),
        });
        self.class_index.insert(OBJECT.into(), Program::OBJECT_ID);
        for h in &headers {
            if self.class_index.contains_key(h.name) {
                return Err(ParseError::DuplicateClass {
                    pos: h.pos,
                    name: h.name.to_string(),
                });
            }
            let id = ClassId(self.classes.len() as u32);
            self.class_index.insert(h.name.into(), id);
            self.classes.push(ClassDef {
                attributes: h.attributes.clone(),
                name: h.name.into(),
                parent: None,
                fields: Vec::new(),
                methods: Vec::new(),
                pos: h.pos,
            });
        }
        for (i, h) in headers.iter().enumerate() {
            let parent = self
                .class_index
                .get(h.parent)
                .copied()
                .ok_or_else(|| ParseError::UnknownParent {
                    pos: h.parent_pos,
                    class: h.name.to_string(),
                    parent: h.parent.to_string(),
                })?;
            self.classes[i + 1].parent = Some(parent);
        }
        self.check_acyclic()?;

        for (i, h) in headers.iter().enumerate() {
            let cid = ClassId(i as u32 + 1);
            for f in h.fields {
                let field = self.field_def(f)?;
                self.classes[cid.0 as usize].fields.push(field);
            }
            for m in h.methods {
                let mid = self.method_def(cid, m)?;
                self.classes[cid.0 as usize].methods.push(mid);
            }
        }

        let all_fields = (0..self.classes.len())
            .map(|c| {
                let mut chain = Vec::new();
                let mut cur = Some(ClassId(c as u32));
                while let Some(id) = cur {
                    chain.push(id);
                    cur = self.classes[id.0 as usize].parent;
                }
                let mut fields: Vec<FieldId> = Vec::new();
                for id in chain.into_iter().rev() {
                    for f in &self.classes[id.0 as usize].fields {
                        if !fields.contains(&f.name) {
                            fields.push(f.name);
                        }
                    }
                }
                fields
            })
            .collect();

        let method_display = self
            .methods
            .iter()
            .map(|m| {
                let class = &self.classes[m.class.0 as usize];
                let overloaded = class
                    .methods
                    .iter()
                    .filter(|&&o| self.methods[o.0 as usize].name == m.name)
                    .count()
                    > 1;
                if overloaded {
                    format!("{}.{}/{}", class.name, m.name, m.params.len())
                } else {
                    format!("{}.{}", class.name, m.name)
                }
            })
            .collect();

        Ok(Program {
            classes: self.classes,
            methods: self.methods,
            stmts: self.stmts,
            class_index: self.class_index,
            field_names: self.field_names,
            field_index: self.field_index,
            labels: self.labels,
            all_fields,
            method_display,
        })
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.classes.len();
        for start in 1..n {
            let mut cur = self.classes[start].parent;
            let mut steps = 0;
            while let Some(c) = cur {
                steps += 1;
                if c.0 as usize == start || steps > n {
                    let class = &self.classes[start];
                    return Err(ParseError::InheritanceCycle {
                        pos: class.pos,
                        name: class.name.to_string(),
                    });
                }
                cur = self.classes[c.0 as usize].parent;
            }
        }
        Ok(())
    }

    fn class_ref(&self, s: &Sexp) -> Result<ClassId> {
        let name = symbol(s, "a class name")?;
        self.class_index
            .get(name)
            .copied()
            .ok_or_else(|| ParseError::UnknownClass {
                pos: s.pos,
                name: name.to_string(),
            })
    }

    fn intern_field(&mut self, name: &str) -> FieldId {
        if let Some(&id) = self.field_index.get(name) {
            return id;
        }
        let id = FieldId(self.field_names.len() as u32);
        let name: Arc<str> = name.into();
        self.field_names.push(name.clone());
        self.field_index.insert(name, id);
        id
    }

    fn field_def(&mut self, s: &Sexp) -> Result<FieldDef> {
        let items = list(s, "a field definition")?;
        if s.head() != Some("field") {
            return malformed(s.pos, "expected (field attribute... name type)");
        }
        let mut attributes = Vec::new();
        let mut i = 1;
        while let Some(a) = items.get(i).and_then(Sexp::as_symbol).and_then(Attribute::from_keyword) {
            attributes.push(a);
            i += 1;
        }
        if items.len() != i + 2 {
            return arity(s.pos, "field definition needs a name and a type");
        }
        let name = self.intern_field(symbol(&items[i], "a field name")?);
        let ty = Type::from_symbol(symbol(&items[i + 1], "a type")?);
        Ok(FieldDef {
            attributes,
            name,
            ty,
            pos: s.pos,
        })
    }

    fn method_def(&mut self, class: ClassId, s: &Sexp) -> Result<MethodId> {
        let items = list(s, "a method definition")?;
        if s.head() != Some("method") {
            return malformed(s.pos, "expected (method ...)");
        }
        let mut attributes = Vec::new();
        let mut i = 1;
        while let Some(a) = items.get(i).and_then(Sexp::as_symbol).and_then(Attribute::from_keyword) {
            attributes.push(a);
            i += 1;
        }
        if items.len() < i + 5 {
            return arity(
                s.pos,
                "method definition needs: name (types...) type (throws ...) (limit n) body...",
            );
        }
        let name: Arc<str> = symbol(&items[i], "a method name")?.into();
        let params = list(&items[i + 1], "a parameter type list")?
            .iter()
            .map(|t| symbol(t, "a type").map(Type::from_symbol))
            .collect::<Result<Vec<_>>>()?;
        let ret = Type::from_symbol(symbol(&items[i + 2], "a return type")?);
        let throws_form = &items[i + 3];
        if throws_form.head() != Some("throws") {
            return malformed(throws_form.pos, "expected (throws class-name...)");
        }
        let throws = throws_form.as_list().unwrap()[1..]
            .iter()
            .map(|c| symbol(c, "a class name").map(Arc::from))
            .collect::<Result<Vec<_>>>()?;
        let limit_form = &items[i + 4];
        let limit = match limit_form.as_list() {
            Some([head, n]) if head.as_symbol() == Some("limit") => match n.kind {
                SexpKind::Int(n) if n >= 0 && n <= u32::MAX as i64 => n as u32,
                _ => return malformed(n.pos, "limit must be a natural number"),
            },
            _ => return malformed(limit_form.pos, "expected (limit n)"),
        };

        let mid = MethodId(self.methods.len() as u32);
        let first = StmtId(self.stmts.len() as u32);
        let mut line = None;
        for stmt_sexp in &items[i + 5..] {
            let parsed = self.stmts_of(stmt_sexp)?;
            for stmt in parsed {
                if let Stmt::Line(n) = stmt {
                    line = Some(n);
                }
                let id = StmtId(self.stmts.len() as u32);
                if let Stmt::Label(l) = &stmt {
                    self.labels.entry((mid, l.clone())).or_insert(id);
                }
                self.stmts.push(StmtRecord {
                    stmt,
                    method: mid,
                    index: id.0 - first.0,
                    line,
                    pos: stmt_sexp.pos,
                });
            }
        }
        let len = self.stmts.len() as u32 - first.0;
        self.methods.push(MethodDef {
            attributes,
            class,
            name,
            params,
            ret,
            throws,
            limit,
            first,
            len,
            pos: s.pos,
        });
        Ok(mid)
    }

    fn reg(&self, s: &Sexp) -> Result<Reg> {
        let name = symbol(s, "a register")?;
        Reg::parse(name).ok_or_else(|| ParseError::Malformed {
            pos: s.pos,
            message: format!("'{name}' is not a register name"),
        })
    }

    fn label(&self, s: &Sexp) -> Result<Arc<str>> {
        symbol(s, "a label").map(Arc::from)
    }

    fn aexp(&self, s: &Sexp) -> Result<AExp> {
        match &s.kind {
            SexpKind::Int(n) => Ok(AExp::Int(*n)),
            SexpKind::Str(v) => Ok(AExp::Str(v.as_str().into())),
            SexpKind::Symbol(sym) => match sym.as_str() {
                "true" => Ok(AExp::True),
                "false" => Ok(AExp::False),
                "null" => Ok(AExp::Null),
                "void" => Ok(AExp::Void),
                _ => self.reg(s).map(AExp::Reg),
            },
            SexpKind::List(items) => {
                let Some(head) = items.first() else {
                    return malformed(s.pos, "empty expression");
                };
                let name = symbol(head, "an operator")?;
                if name == "instance-of" {
                    if items.len() != 3 {
                        return arity(s.pos, "instance-of takes an expression and a class");
                    }
                    return Ok(AExp::InstanceOf(
                        Box::new(self.aexp(&items[1])?),
                        self.class_ref(&items[2])?,
                    ));
                }
                let op = AtomicOp::from_keyword(name).ok_or_else(|| ParseError::UnknownKeyword {
                    pos: head.pos,
                    keyword: name.to_string(),
                })?;
                let args = items[1..]
                    .iter()
                    .map(|a| self.aexp(a))
                    .collect::<Result<Vec<_>>>()?;
                if args.len() != op.arity() {
                    return arity(
                        s.pos,
                        format!("'{}' takes {} operand(s), got {}", name, op.arity(), args.len()),
                    );
                }
                Ok(AExp::Op(op, args))
            }
        }
    }

    fn invoke(&self, s: &Sexp, kind: InvokeKind) -> Result<Invoke> {
        let items = s.as_list().unwrap();
        if items.len() != 5 {
            return arity(
                s.pos,
                format!("{} needs: CLASS METHOD (args...) (types...)", kind.keyword()),
            );
        }
        let class = self.class_ref(&items[1])?;
        let method: Arc<str> = symbol(&items[2], "a method name")?.into();
        let args = list(&items[3], "an argument list")?
            .iter()
            .map(|a| self.aexp(a))
            .collect::<Result<Vec<_>>>()?;
        let types = list(&items[4], "a type list")?
            .iter()
            .map(|t| symbol(t, "a type").map(Type::from_symbol))
            .collect::<Result<Vec<_>>>()?;
        if types.len() != args.len() {
            return arity(
                items[4].pos,
                format!("{} arguments but {} types", args.len(), types.len()),
            );
        }
        if kind.has_receiver() && args.is_empty() {
            return arity(items[3].pos, format!("{} needs a receiver", kind.keyword()));
        }
        Ok(Invoke {
            kind,
            class,
            method,
            args,
            types,
        })
    }

    /// Parses one source statement. `(assign r (invoke ...))` expands to the
    /// call followed by `(assign r ret)`.
    fn stmts_of(&mut self, s: &Sexp) -> Result<Vec<Stmt>> {
        let items = list(s, "a statement")?;
        let Some(head_sexp) = items.first() else {
            return malformed(s.pos, "empty statement");
        };
        let head = symbol(head_sexp, "a statement keyword")?;
        let n = items.len() - 1;
        let want = |k: usize| -> Result<()> {
            if n == k {
                Ok(())
            } else {
                arity(s.pos, format!("'{head}' takes {k} operand(s), got {n}"))
            }
        };
        if let Some(kind) = InvokeKind::from_keyword(head) {
            return Ok(vec![Stmt::Invoke(self.invoke(s, kind)?)]);
        }
        let stmt = match head {
            "label" => {
                want(1)?;
                Stmt::Label(self.label(&items[1])?)
            }
            "nop" => {
                want(0)?;
                Stmt::Nop
            }
            "line" => {
                want(1)?;
                match items[1].kind {
                    SexpKind::Int(n) => Stmt::Line(n),
                    _ => return malformed(items[1].pos, "line takes an integer"),
                }
            }
            "goto" => {
                want(1)?;
                Stmt::Goto(self.label(&items[1])?)
            }
            "if" => {
                want(2)?;
                let cond = self.aexp(&items[1])?;
                let target = match items[2].as_list() {
                    Some([g, l]) if g.as_symbol() == Some("goto") => self.label(l)?,
                    _ => return malformed(items[2].pos, "expected (goto label)"),
                };
                Stmt::If { cond, target }
            }
            "assign" => {
                want(2)?;
                let dst = self.reg(&items[1])?;
                let rhs = &items[2];
                match rhs.head() {
                    Some("new") => match rhs.as_list().unwrap() {
                        [_, c] => Stmt::New {
                            dst,
                            class: self.class_ref(c)?,
                        },
                        _ => return arity(rhs.pos, "'new' takes one class name"),
                    },
                    Some(h) if InvokeKind::from_keyword(h).is_some() => {
                        let call = self.invoke(rhs, InvokeKind::from_keyword(h).unwrap())?;
                        return Ok(vec![
                            Stmt::Invoke(call),
                            Stmt::Assign {
                                dst,
                                src: AExp::Reg(Reg::Ret),
                            },
                        ]);
                    }
                    _ => Stmt::Assign {
                        dst,
                        src: self.aexp(rhs)?,
                    },
                }
            }
            "return" => {
                want(1)?;
                Stmt::Return(self.aexp(&items[1])?)
            }
            "field-put" => {
                want(3)?;
                let obj = self.aexp(&items[1])?;
                let field = self.intern_field(symbol(&items[2], "a field name")?);
                let value = self.aexp(&items[3])?;
                Stmt::FieldPut { obj, field, value }
            }
            "field-get" => {
                want(3)?;
                let dst = self.reg(&items[1])?;
                let obj = self.aexp(&items[2])?;
                let field = self.intern_field(symbol(&items[3], "a field name")?);
                Stmt::FieldGet { dst, obj, field }
            }
            "push-handler" => {
                want(2)?;
                Stmt::PushHandler {
                    class: self.class_ref(&items[1])?,
                    label: self.label(&items[2])?,
                }
            }
            "pop-handler" => {
                want(0)?;
                Stmt::PopHandler
            }
            "throw" => {
                want(1)?;
                Stmt::Throw(self.aexp(&items[1])?)
            }
            other => {
                return Err(ParseError::UnknownKeyword {
                    pos: head_sexp.pos,
                    keyword: other.to_string(),
                })
            }
        };
        Ok(vec![stmt])
    }
}
