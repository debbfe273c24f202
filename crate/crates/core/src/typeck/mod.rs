//! Name resolution, typing and the checked-pointer discipline.

mod types;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::frontend::ast::*;
use crate::frontend::Span;

pub use types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TypeErrorKind {
    RawToChecked,
    IncompatiblePointee,
    MarshalRequired,
    CheckedOpInCheckedFn,
    ArithOnMmPtr,
    BadFree,
    UnknownName,
    NotAnLvalue,
    Mismatch,
    Arity,
    Redefinition,
    Unsupported,
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub message: String,
    pub span: Span,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.span, self.kind, self.message)
    }
}

/// Type-check a parsed program, collecting every error.
pub fn check_program(ast: &Ast) -> Result<TypedProgram, Vec<TypeError>> {
    let mut cx = Checker::default();
    cx.declare_structs(&ast.structs);
    cx.declare_funcs(&ast.funcs);
    cx.check_globals(&ast.globals);
    for f in &ast.funcs {
        let tf = cx.check_func(f);
        cx.prog.funcs.push(tf);
    }
    match cx.prog.funcs.iter().find(|f| f.name == "main") {
        None => cx.err(TypeErrorKind::UnknownName, Span::default(), "program has no `main` function".into()),
        Some(m) => {
            let ok = m.ret == Type::Int && m.params.iter().all(|&p| m.locals[p].ty == Type::Int);
            if !ok {
                cx.err(TypeErrorKind::Mismatch, m.span, "`main` must return int and take only int parameters".into());
            }
        }
    }
    if cx.errors.is_empty() {
        Ok(cx.prog)
    } else {
        Err(cx.errors)
    }
}

struct Sig {
    ret: Type,
    params: Vec<Type>,
}

#[derive(Default)]
struct Checker {
    prog: TypedProgram,
    errors: Vec<TypeError>,
    sigs: Vec<Sig>,
    func_ids: HashMap<String, FuncId>,
    global_ids: HashMap<String, GlobalId>,
    // per-function state
    ctx: Option<Ctx>,
    ret: Type,
    locals: Vec<LocalDef>,
    scopes: Vec<HashMap<String, LocalId>>,
    loops: usize,
}

type K = TypeErrorKind;

fn is_fat_ptr(t: &Type) -> bool {
    t.is_checked()
}

impl Checker {
    fn err(&mut self, kind: TypeErrorKind, span: Span, message: String) {
        self.errors.push(TypeError { kind, message, span });
    }

    fn ctx(&self) -> Ctx {
        self.ctx.unwrap_or(Ctx::Checked)
    }

    fn checked_only_in_unchecked(&mut self, span: Span, what: &str) {
        if self.ctx() == Ctx::Checked {
            self.err(K::CheckedOpInCheckedFn, span, format!("{what} is only allowed in `unchecked` functions"));
        }
    }

    // ---- declarations ----

    fn resolve(&mut self, t: &TypeExpr, span: Span) -> Type {
        match t {
            TypeExpr::Int => Type::Int,
            TypeExpr::Char => Type::Char,
            TypeExpr::Void => Type::Void,
            TypeExpr::Struct(n) => {
                if self.prog.structs.iter().any(|s| &s.name == n) {
                    Type::Struct(n.clone())
                } else {
                    self.err(K::UnknownName, span, format!("unknown struct `{n}`"));
                    Type::Error
                }
            }
            TypeExpr::Ptr(p) => Type::raw(self.resolve(p, span)),
            TypeExpr::MmPtr(p) => Type::mm(self.resolve(p, span)),
            TypeExpr::MmArrayPtr(p) => Type::mm_array(self.resolve(p, span)),
        }
    }

    fn declare_structs(&mut self, decls: &[StructDecl]) {
        for s in decls {
            if self.prog.structs.iter().any(|d| d.name == s.name) {
                self.err(K::Redefinition, s.span, format!("struct `{}` defined twice", s.name));
                continue;
            }
            self.prog.structs.push(StructDef { name: s.name.clone(), fields: Vec::new(), span: s.span });
        }
        let mut seen = std::collections::HashSet::new();
        for s in decls {
            if !seen.insert(s.name.as_str()) {
                continue;
            }
            let idx = self.prog.structs.iter().position(|d| d.name == s.name).unwrap();
            let mut fields: Vec<FieldDef> = Vec::new();
            for f in &s.fields {
                let mut ty = self.resolve(&f.ty, f.span);
                if ty == Type::Void {
                    self.err(K::Mismatch, f.span, format!("field `{}` has type void", f.name));
                }
                if let Some(n) = f.array_len {
                    ty = Type::Array(Box::new(ty), Some(n));
                }
                if fields.iter().any(|g| g.name == f.name) {
                    self.err(K::Redefinition, f.span, format!("field `{}` declared twice", f.name));
                }
                fields.push(FieldDef { name: f.name.clone(), ty, span: f.span });
            }
            self.prog.structs[idx].fields = fields;
        }
        for s in &self.prog.structs.clone() {
            if self.contains_by_value(&Type::Struct(s.name.clone()), &s.name, 0) {
                self.err(K::Unsupported, s.span, format!("struct `{}` contains itself by value", s.name));
            }
        }
    }

    fn contains_by_value(&self, t: &Type, target: &str, depth: usize) -> bool {
        if depth > self.prog.structs.len() + 1 {
            return true;
        }
        match t {
            Type::Array(e, _) => self.contains_by_value(e, target, depth),
            Type::Struct(n) => {
                let Some(s) = self.prog.structs.iter().find(|s| &s.name == n) else { return false };
                s.fields.iter().any(|f| {
                    matches!(&f.ty, Type::Struct(m) if m == target) || self.contains_by_value(&f.ty, target, depth + 1)
                })
            }
            _ => false,
        }
    }

    /// True if a fat pointer is stored somewhere inside a value of type `t`.
    fn contains_fat(&self, t: &Type) -> bool {
        match t {
            Type::MmPtr(_) | Type::MmArrayPtr(_) => true,
            Type::Array(e, _) => self.contains_fat(e),
            Type::Struct(n) => {
                self.prog.structs.iter().find(|s| &s.name == n).is_some_and(|s| s.fields.iter().any(|f| self.contains_fat(&f.ty)))
            }
            _ => false,
        }
    }

    /// A raw pointer under which fat pointers are stored.
    fn hides_fat(&self, t: &Type) -> bool {
        match t {
            Type::RawPtr(p) => self.contains_fat(p),
            _ => false,
        }
    }

    fn declare_funcs(&mut self, funcs: &[FuncDecl]) {
        for f in funcs {
            let ret = self.resolve(&f.ret, f.span);
            if !(ret.is_scalar() || ret == Type::Void || ret == Type::Error) {
                self.err(K::Unsupported, f.span, format!("function `{}` returns an aggregate", f.name));
            }
            let params = f
                .params
                .iter()
                .map(|p| {
                    let t = self.resolve(&p.ty, p.span);
                    if !(t.is_scalar() || t == Type::Error) {
                        self.err(K::Unsupported, p.span, format!("parameter `{}` must be a scalar", p.name));
                    }
                    t
                })
                .collect();
            if self.func_ids.contains_key(&f.name) || Builtin::from_name(&f.name).is_some() {
                self.err(K::Redefinition, f.span, format!("function `{}` defined twice", f.name));
            } else {
                self.func_ids.insert(f.name.clone(), self.sigs.len());
            }
            self.sigs.push(Sig { ret, params });
        }
    }

    fn check_globals(&mut self, globals: &[VarDecl]) {
        for g in globals {
            let mut ty = self.resolve(&g.ty, g.span);
            if ty == Type::Void {
                self.err(K::Mismatch, g.span, format!("global `{}` has type void", g.name));
            }
            if let Some(len) = &g.array_len {
                match len.kind {
                    ExprKind::IntLit(n) if n >= 0 => ty = Type::Array(Box::new(ty), Some(n as u64)),
                    _ => self.err(K::Unsupported, len.span, "global array length must be a constant".into()),
                }
            }
            let init = match &g.init {
                None => GlobalInit::Zero,
                Some(e) => self.global_init(&ty, e),
            };
            if self.global_ids.contains_key(&g.name) {
                self.err(K::Redefinition, g.span, format!("global `{}` defined twice", g.name));
            } else {
                self.global_ids.insert(g.name.clone(), self.prog.globals.len());
            }
            self.prog.globals.push(GlobalDef { name: g.name.clone(), ty, init, addr_taken_checked: false, span: g.span });
        }
    }

    fn global_init(&mut self, ty: &Type, e: &Expr) -> GlobalInit {
        let int_value = match &e.kind {
            ExprKind::IntLit(v) => Some(*v),
            ExprKind::CharLit(c) => Some(*c as i64),
            ExprKind::Unary(UnOp::Neg, inner) => match inner.kind {
                ExprKind::IntLit(v) => Some(-v),
                _ => None,
            },
            _ => None,
        };
        match (&e.kind, int_value) {
            (_, Some(v)) if ty.is_integer() => GlobalInit::Int(v),
            (ExprKind::Null, _) if ty.is_ptr() => GlobalInit::Zero,
            (ExprKind::StrLit(bytes), _) if matches!(ty, Type::MmArrayPtr(c) | Type::RawPtr(c) if **c == Type::Char) => {
                self.prog.strings.push(bytes.clone());
                GlobalInit::Str(self.prog.strings.len() - 1)
            }
            (ExprKind::AddrOf(inner), _) if ty.is_ptr() => {
                let ExprKind::Ident(name) = &inner.kind else {
                    self.err(K::Unsupported, e.span, "global initializer must be constant".into());
                    return GlobalInit::Zero;
                };
                let Some(&gid) = self.global_ids.get(name) else {
                    self.err(K::UnknownName, inner.span, format!("unknown global `{name}`"));
                    return GlobalInit::Zero;
                };
                let target = self.prog.globals[gid].ty.clone();
                let src = if ty.is_checked() { Type::mm(target) } else { Type::raw(target) };
                if !assignable(ty, &src, Ctx::Checked) {
                    self.err(K::Mismatch, e.span, format!("cannot initialize {ty} with {src}"));
                }
                if ty.is_checked() {
                    self.prog.globals[gid].addr_taken_checked = true;
                }
                GlobalInit::AddrOf(gid)
            }
            _ => {
                self.err(K::Unsupported, e.span, format!("unsupported initializer for a global of type {ty}"));
                GlobalInit::Zero
            }
        }
    }

    // ---- functions ----

    fn check_func(&mut self, f: &FuncDecl) -> TFunc {
        let id = self.prog.funcs.len();
        self.ctx = Some(if f.unchecked { Ctx::Unchecked } else { Ctx::Checked });
        self.ret = self.sigs[id].ret.clone();
        self.locals.clear();
        self.scopes = vec![HashMap::new()];
        self.loops = 0;
        let mut params = Vec::new();
        for (p, ty) in f.params.iter().zip(self.sigs[id].params.clone()) {
            if self.scopes[0].contains_key(&p.name) {
                self.err(K::Redefinition, p.span, format!("parameter `{}` declared twice", p.name));
            }
            params.push(self.add_local(&p.name, ty, true, p.span));
        }
        // parameters and top-level locals share one scope, as in C
        let body = f.body.iter().map(|s| self.stmt(s)).collect();
        TFunc {
            name: f.name.clone(),
            unchecked: f.unchecked,
            ret: self.ret.clone(),
            params,
            locals: std::mem::take(&mut self.locals),
            body,
            span: f.span,
        }
    }

    fn add_local(&mut self, name: &str, ty: Type, is_param: bool, span: Span) -> LocalId {
        let id = self.locals.len();
        self.locals.push(LocalDef {
            name: name.into(),
            ty,
            is_param,
            addr_taken_raw: false,
            addr_taken_checked: false,
            span,
        });
        self.scopes.last_mut().unwrap().insert(name.into(), id);
        id
    }

    fn lookup_local(&self, name: &str) -> Option<LocalId> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn stmt(&mut self, s: &Stmt) -> TStmt {
        let kind = match &s.kind {
            StmtKind::Decl(d) => self.decl(d),
            StmtKind::Expr(e) => TStmtKind::Expr(self.expr(e, None)),
            StmtKind::If { cond, then_branch, else_branch } => TStmtKind::If {
                cond: self.cond(cond),
                then_branch: Box::new(self.scoped(then_branch)),
                else_branch: else_branch.as_ref().map(|e| Box::new(self.scoped(e))),
            },
            StmtKind::While { cond, body } => {
                let cond = self.cond(cond);
                self.loops += 1;
                let body = self.scoped(body);
                self.loops -= 1;
                TStmtKind::While { cond, body: Box::new(body) }
            }
            StmtKind::Return(e) => {
                let ret = self.ret.clone();
                match (e, &ret) {
                    (None, Type::Void) => TStmtKind::Return(None),
                    (None, _) => {
                        self.err(K::Mismatch, s.span, format!("missing return value of type {ret}"));
                        TStmtKind::Return(None)
                    }
                    (Some(e), Type::Void) => {
                        self.err(K::Mismatch, e.span, "void function returns a value".into());
                        TStmtKind::Return(None)
                    }
                    (Some(e), _) => {
                        let v = self.expr(e, Some(&ret));
                        TStmtKind::Return(Some(self.coerce(v, &ret)))
                    }
                }
            }
            StmtKind::Block(body) => {
                self.scopes.push(HashMap::new());
                let body = body.iter().map(|s| self.stmt(s)).collect();
                self.scopes.pop();
                TStmtKind::Block(body)
            }
            StmtKind::Break | StmtKind::Continue => {
                if self.loops == 0 {
                    self.err(K::Unsupported, s.span, "`break`/`continue` outside a loop".into());
                }
                if matches!(s.kind, StmtKind::Break) {
                    TStmtKind::Break
                } else {
                    TStmtKind::Continue
                }
            }
        };
        TStmt { kind, span: s.span }
    }

    /// A branch body gets its own scope even when it is a single statement.
    fn scoped(&mut self, s: &Stmt) -> TStmt {
        self.scopes.push(HashMap::new());
        let t = self.stmt(s);
        self.scopes.pop();
        t
    }

    fn decl(&mut self, d: &VarDecl) -> TStmtKind {
        let mut ty = self.resolve(&d.ty, d.span);
        if ty == Type::Void {
            self.err(K::Mismatch, d.span, format!("variable `{}` has type void", d.name));
            ty = Type::Error;
        }
        let mut len = None;
        if let Some(n) = &d.array_len {
            match n.kind {
                ExprKind::IntLit(v) if v >= 0 => ty = Type::Array(Box::new(ty), Some(v as u64)),
                _ => {
                    if self.scopes.len() != 1 {
                        self.err(K::Unsupported, n.span, "variable-length arrays must be declared at function top level".into());
                    }
                    let e = self.expr(n, Some(&Type::Int));
                    len = Some(self.coerce(e, &Type::Int));
                    ty = Type::Array(Box::new(ty), None);
                }
            }
        }
        let init = d.init.as_ref().map(|e| {
            if !(ty.is_scalar() || ty == Type::Error) {
                self.err(K::Unsupported, e.span, format!("`{}` is an aggregate and cannot be initialized", d.name));
            }
            let v = self.expr(e, Some(&ty));
            self.coerce(v, &ty)
        });
        if self.scopes.last().unwrap().contains_key(&d.name) {
            self.err(K::Redefinition, d.span, format!("`{}` declared twice in one scope", d.name));
        }
        let local = self.add_local(&d.name, ty, false, d.span);
        TStmtKind::Decl { local, len, init }
    }

    fn cond(&mut self, e: &Expr) -> TExpr {
        let t = self.expr(e, None);
        if !t.ty.is_truthy() {
            self.err(K::Mismatch, e.span, format!("condition has type {}", t.ty));
        }
        t
    }

    // ---- coercion ----

    fn coerce(&mut self, e: TExpr, dst: &Type) -> TExpr {
        let span = e.span;
        let src = e.ty.clone();
        if &src == dst || matches!(src, Type::Error) || matches!(dst, Type::Error) {
            return e;
        }
        let wrap = |conv, e: TExpr| TExpr { kind: TExprKind::Convert(conv, Box::new(e)), ty: dst.clone(), span };
        if assignable(dst, &src, self.ctx()) {
            return match (dst, &src) {
                (Type::Int, Type::Char) => wrap(Conv::Widen, e),
                (_, Type::Null) => TExpr { kind: TExprKind::Null, ty: dst.clone(), span },
                _ => wrap(Conv::CheckedToRaw, e),
            };
        }
        if let (Type::Char, Type::Int, TExprKind::Int(_)) = (dst, &src, &e.kind) {
            return wrap(Conv::Trunc, e);
        }
        self.report_flow(dst, &src, span, "assign");
        TExpr { ty: dst.clone(), ..e }
    }

    fn report_flow(&mut self, dst: &Type, src: &Type, span: Span, verb: &str) {
        let msg = format!("cannot {verb} {src} to {dst}");
        let kind = match (dst, src) {
            (d, s) if d.is_checked() && (matches!(s, Type::RawPtr(_)) || s.is_integer()) => K::RawToChecked,
            (Type::RawPtr(d), Type::MmPtr(s) | Type::MmArrayPtr(s)) => {
                if self.contains_fat(s) && !self.contains_fat(d) {
                    K::MarshalRequired
                } else if d != s {
                    K::IncompatiblePointee
                } else {
                    K::CheckedOpInCheckedFn
                }
            }
            (Type::RawPtr(d), Type::RawPtr(s)) | (Type::MmPtr(d), Type::MmPtr(s)) | (Type::MmArrayPtr(d), Type::MmArrayPtr(s))
                if d != s =>
            {
                K::IncompatiblePointee
            }
            _ => K::Mismatch,
        };
        self.err(kind, span, msg);
    }

    fn cast(&mut self, e: TExpr, dst: Type, span: Span) -> TExpr {
        let src = e.ty.clone();
        let out = |conv: Option<Conv>, e: TExpr| match conv {
            None => TExpr { ty: dst.clone(), span, ..e },
            Some(c) => TExpr { kind: TExprKind::Convert(c, Box::new(e)), ty: dst.clone(), span },
        };
        if src == dst || matches!(src, Type::Error) || matches!(dst, Type::Error) {
            return out(None, e);
        }
        match (&dst, &src) {
            (Type::Int, Type::Char) => out(Some(Conv::Widen), e),
            (Type::Char, Type::Int) => out(Some(Conv::Trunc), e),
            (Type::Int, s) if s.is_ptr() => {
                if s.is_checked() {
                    let raw = TExpr { kind: TExprKind::Convert(Conv::CheckedToRaw, Box::new(e)), ty: Type::raw(Type::Void), span };
                    out(Some(Conv::PtrToInt), raw)
                } else {
                    out(Some(Conv::PtrToInt), e)
                }
            }
            (d, Type::Null) if d.is_ptr() => TExpr { kind: TExprKind::Null, ty: dst.clone(), span },
            (Type::RawPtr(_), s) if s.is_integer() => {
                self.checked_only_in_unchecked(span, "casting an integer to a pointer");
                let e = if *s == Type::Char { TExpr { kind: TExprKind::Convert(Conv::Widen, Box::new(e)), ty: Type::Int, span } } else { e };
                out(Some(Conv::IntToPtr), e)
            }
            (Type::RawPtr(_), Type::RawPtr(_)) => out(Some(Conv::Reinterpret), e),
            (Type::RawPtr(d), Type::MmPtr(s) | Type::MmArrayPtr(s)) => {
                if self.ctx() == Ctx::Checked {
                    self.err(K::CheckedOpInCheckedFn, span, format!("cast of {src} to raw {dst} in a checked function"));
                } else if d != s && self.contains_fat(s) {
                    self.err(K::MarshalRequired, span, format!("{src} holds checked pointers; use marshal() to pass it as {dst}"));
                }
                out(Some(Conv::CheckedToRaw), e)
            }
            (Type::MmPtr(d) | Type::MmArrayPtr(d), Type::MmPtr(s) | Type::MmArrayPtr(s)) => {
                if d != s {
                    self.err(K::IncompatiblePointee, span, format!("cannot cast {src} to {dst}"));
                }
                out(Some(Conv::Reinterpret), e)
            }
            (d, s) if d.is_checked() && (s.is_integer() || matches!(s, Type::RawPtr(_))) => {
                self.err(K::RawToChecked, span, format!("cannot cast {src} to checked {dst}"));
                out(None, e)
            }
            _ => {
                self.err(K::Mismatch, span, format!("cannot cast {src} to {dst}"));
                out(None, e)
            }
        }
    }

    // ---- places ----

    fn place(&mut self, e: &Expr) -> Option<Place> {
        let span = e.span;
        let (kind, ty) = match &e.kind {
            ExprKind::Ident(name) => {
                if let Some(l) = self.lookup_local(name) {
                    (PlaceKind::Local(l), self.locals[l].ty.clone())
                } else if let Some(&g) = self.global_ids.get(name) {
                    (PlaceKind::Global(g), self.prog.globals[g].ty.clone())
                } else {
                    let what = if self.func_ids.contains_key(name) { "function used as a value" } else { "unknown name" };
                    self.err(K::UnknownName, span, format!("{what} `{name}`"));
                    return None;
                }
            }
            ExprKind::Deref(inner) => {
                let ptr = self.expr(inner, None);
                let ty = self.deref_type(&ptr, span)?;
                (PlaceKind::Deref { ptr: Box::new(ptr), index: None }, ty)
            }
            ExprKind::Index { base, index } => {
                let idx = self.expr(index, Some(&Type::Int));
                let idx = self.coerce(idx, &Type::Int);
                if let Some(bp) = self.try_array_place(base) {
                    let ty = bp.ty.elem().cloned().unwrap();
                    (PlaceKind::Index { base: Box::new(bp), index: Box::new(idx) }, ty)
                } else {
                    let ptr = self.expr(base, None);
                    if matches!(ptr.ty, Type::MmPtr(_)) {
                        self.err(K::ArithOnMmPtr, span, "mm_ptr cannot be indexed; use mm_array_ptr".into());
                    }
                    let ty = self.deref_type(&ptr, span)?;
                    (PlaceKind::Deref { ptr: Box::new(ptr), index: Some(Box::new(idx)) }, ty)
                }
            }
            ExprKind::Field { base, name, arrow } => {
                let base_place = if *arrow {
                    let ptr = self.expr(base, None);
                    let ty = self.deref_type(&ptr, span)?;
                    Place { kind: PlaceKind::Deref { ptr: Box::new(ptr), index: None }, ty, span: base.span }
                } else {
                    self.place(base)?
                };
                let Type::Struct(sname) = &base_place.ty else {
                    if base_place.ty != Type::Error {
                        self.err(K::Mismatch, span, format!("field access on non-struct {}", base_place.ty));
                    }
                    return None;
                };
                let sd = self.prog.structs.iter().find(|s| &s.name == sname).unwrap();
                let Some(fi) = sd.field(name) else {
                    self.err(K::UnknownName, span, format!("struct {sname} has no field `{name}`"));
                    return None;
                };
                let ty = sd.fields[fi].ty.clone();
                (PlaceKind::Field { base: Box::new(base_place), field: fi }, ty)
            }
            _ => {
                self.err(K::NotAnLvalue, span, "expression is not assignable or addressable".into());
                return None;
            }
        };
        Some(Place { kind, ty, span })
    }

    /// `base` as an array-typed place, without reporting errors when it is not one.
    fn try_array_place(&mut self, base: &Expr) -> Option<Place> {
        let is_array = match &base.kind {
            ExprKind::Ident(n) => {
                let ty = match self.lookup_local(n) {
                    Some(l) => Some(&self.locals[l].ty),
                    None => self.global_ids.get(n).map(|&g| &self.prog.globals[g].ty),
                };
                matches!(ty, Some(Type::Array(..)))
            }
            ExprKind::Field { .. } | ExprKind::Index { .. } | ExprKind::Deref(_) => {
                let mark = self.errors.len();
                let saved_strings = self.prog.strings.len();
                let locals = self.locals.iter().map(|l| (l.addr_taken_raw, l.addr_taken_checked)).collect::<Vec<_>>();
                let globals = self.prog.globals.iter().map(|g| g.addr_taken_checked).collect::<Vec<_>>();
                let p = self.place(base);
                // undo side effects of the probe
                self.errors.truncate(mark);
                self.prog.strings.truncate(saved_strings);
                for (l, (r, c)) in self.locals.iter_mut().zip(locals) {
                    l.addr_taken_raw = r;
                    l.addr_taken_checked = c;
                }
                for (g, c) in self.prog.globals.iter_mut().zip(globals) {
                    g.addr_taken_checked = c;
                }
                matches!(p, Some(Place { ty: Type::Array(..), .. }))
            }
            _ => false,
        };
        if is_array {
            self.place(base)
        } else {
            None
        }
    }

    fn deref_type(&mut self, ptr: &TExpr, span: Span) -> Option<Type> {
        match &ptr.ty {
            Type::Error => None,
            Type::RawPtr(t) | Type::MmPtr(t) | Type::MmArrayPtr(t) => {
                if matches!(ptr.ty, Type::RawPtr(_)) {
                    self.checked_only_in_unchecked(span, "dereferencing a raw pointer");
                }
                if **t == Type::Void {
                    self.err(K::Mismatch, span, "dereference of a void pointer".into());
                    return None;
                }
                Some((**t).clone())
            }
            other => {
                self.err(K::Mismatch, span, format!("cannot dereference a value of type {other}"));
                None
            }
        }
    }

    fn mark_address_taken(&mut self, place: &Place, checked: bool) {
        match place.root() {
            Root::Local(l) => {
                if checked {
                    self.locals[l].addr_taken_checked = true;
                } else {
                    self.locals[l].addr_taken_raw = true;
                }
            }
            Root::Global(g) if checked => self.prog.globals[g].addr_taken_checked = true,
            _ => {}
        }
    }

    /// Address of `place`, typed by where it is rooted and what the context expects.
    fn address_of(&mut self, place: Place, target: Type, expect: Option<&Type>, span: Span) -> TExpr {
        let checked = match place.root() {
            Root::CheckedDeref => true,
            Root::RawDeref => false,
            Root::Local(_) | Root::Global(_) => expect.is_some_and(|t| t.is_checked()),
        };
        self.mark_address_taken(&place, checked);
        let ty = match (checked, expect) {
            (true, Some(Type::MmArrayPtr(_))) if matches!(place.ty, Type::Array(..)) => Type::mm_array(target),
            (true, _) if matches!(place.ty, Type::Array(..)) => Type::mm_array(target),
            (true, _) => Type::mm(target),
            (false, _) => Type::raw(target),
        };
        TExpr { kind: TExprKind::AddrOf(Box::new(place)), ty, span }
    }

    // ---- expressions ----

    fn expr(&mut self, e: &Expr, expect: Option<&Type>) -> TExpr {
        let span = e.span;
        let mk = |kind, ty| TExpr { kind, ty, span };
        match &e.kind {
            ExprKind::IntLit(v) => mk(TExprKind::Int(*v), Type::Int),
            ExprKind::CharLit(c) => mk(TExprKind::Int(*c as i64), Type::Char),
            ExprKind::StrLit(bytes) => {
                self.prog.strings.push(bytes.clone());
                let id = self.prog.strings.len() - 1;
                let raw = self.ctx() == Ctx::Unchecked && matches!(expect, Some(Type::RawPtr(_)));
                let ty = if raw { Type::raw(Type::Char) } else { Type::mm_array(Type::Char) };
                mk(TExprKind::Str(id), ty)
            }
            ExprKind::Null => match expect {
                Some(t) if t.is_ptr() => mk(TExprKind::Null, t.clone()),
                _ => mk(TExprKind::Null, Type::Null),
            },
            ExprKind::Ident(_) | ExprKind::Deref(_) | ExprKind::Index { .. } | ExprKind::Field { .. } => {
                let Some(place) = self.place(e) else { return mk(TExprKind::Int(0), Type::Error) };
                self.rvalue(place, expect)
            }
            ExprKind::AddrOf(inner) => {
                let Some(place) = self.place(inner) else { return mk(TExprKind::Int(0), Type::Error) };
                if matches!(place.ty, Type::Array(..)) {
                    self.err(K::Unsupported, span, "pointers to whole arrays are not supported; take &a[0]".into());
                }
                let target = place.ty.clone();
                self.address_of(place, target, expect, span)
            }
            ExprKind::Unary(op, inner) => {
                let v = self.expr(inner, None);
                match op {
                    UnOp::Neg => {
                        let v = self.coerce(v, &Type::Int);
                        mk(TExprKind::Unary(UnOp::Neg, Box::new(v)), Type::Int)
                    }
                    UnOp::Not => {
                        if !v.ty.is_truthy() {
                            self.err(K::Mismatch, span, format!("`!` applied to {}", v.ty));
                        }
                        mk(TExprKind::Unary(UnOp::Not, Box::new(v)), Type::Int)
                    }
                }
            }
            ExprKind::Binary(op, l, r) => self.binary(*op, l, r, expect, span),
            ExprKind::Assign { op, lhs, rhs } => self.assign(*op, lhs, rhs, span),
            ExprKind::Cast { ty, expr } => {
                let dst = self.resolve(ty, span);
                let v = self.expr(expr, Some(&dst));
                self.cast(v, dst, span)
            }
            ExprKind::Call { callee, args } => self.call(callee, args, span),
            ExprKind::Alloc { ty, count } => {
                let elem = self.resolve(ty, span);
                if matches!(elem, Type::Void | Type::Array(..)) {
                    self.err(K::Mismatch, span, format!("cannot allocate values of type {elem}"));
                }
                let n = self.expr(count, Some(&Type::Int));
                let n = self.coerce(n, &Type::Int);
                let ty = match expect {
                    Some(Type::MmPtr(t)) if **t == elem => Type::mm(elem.clone()),
                    _ => Type::mm_array(elem.clone()),
                };
                mk(TExprKind::Alloc { elem, count: Box::new(n) }, ty)
            }
            ExprKind::Free(inner) => {
                let v = self.expr(inner, None);
                if !(v.ty.is_checked() || v.ty == Type::Error) {
                    self.err(K::BadFree, span, format!("mm_free needs a checked pointer, found {}", v.ty));
                }
                mk(TExprKind::Free(Box::new(v)), Type::Void)
            }
            ExprKind::Checked(inner) | ExprKind::ArrayChecked(inner) => {
                self.checked_only_in_unchecked(span, "a checked-pointer hint");
                let array = matches!(e.kind, ExprKind::ArrayChecked(_));
                let local = match &inner.kind {
                    ExprKind::Ident(n) => self.lookup_local(n),
                    _ => None,
                };
                let Some(l) = local else {
                    self.err(K::Unsupported, inner.span, "hint operand must be a local variable".into());
                    return mk(TExprKind::Int(0), Type::Void);
                };
                let ok = match &self.locals[l].ty {
                    Type::MmPtr(_) => !array,
                    Type::MmArrayPtr(_) => array,
                    _ => false,
                };
                if !ok {
                    let want = if array { "mm_array_ptr" } else { "mm_ptr" };
                    let msg = format!("hint expects an {want} local, found {}", self.locals[l].ty);
                    self.err(K::Mismatch, inner.span, msg);
                }
                mk(TExprKind::Hint(l), Type::Void)
            }
            ExprKind::Marshal { array, len } => {
                self.checked_only_in_unchecked(span, "marshal");
                let a = self.expr(array, None);
                let n = self.expr(len, Some(&Type::Int));
                let n = self.coerce(n, &Type::Int);
                let ty = match self.fat_elem_pointee(&a.ty) {
                    Some(t) => Type::raw(Type::raw(t)),
                    None => {
                        self.err(K::Mismatch, array.span, format!("marshal expects an array of checked pointers, found {}", a.ty));
                        Type::Error
                    }
                };
                mk(TExprKind::Marshal { array: Box::new(a), len: Box::new(n) }, ty)
            }
            ExprKind::Unmarshal { thin, orig, len } => {
                self.checked_only_in_unchecked(span, "unmarshal");
                let o = self.expr(orig, None);
                let n = self.expr(len, Some(&Type::Int));
                let n = self.coerce(n, &Type::Int);
                let t = self.expr(thin, None);
                let t = match self.fat_elem_pointee(&o.ty) {
                    Some(p) => self.coerce(t, &Type::raw(Type::raw(p))),
                    None => {
                        self.err(K::Mismatch, orig.span, format!("unmarshal expects an array of checked pointers, found {}", o.ty));
                        t
                    }
                };
                let ty = o.ty.clone();
                mk(TExprKind::Unmarshal { thin: Box::new(t), orig: Box::new(o), len: Box::new(n) }, ty)
            }
        }
    }

    /// `T` for `mm_array_ptr<mm_ptr<T>>` or `mm_array_ptr<mm_array_ptr<T>>`.
    fn fat_elem_pointee(&self, t: &Type) -> Option<Type> {
        match t {
            Type::MmArrayPtr(e) if is_fat_ptr(e) => e.pointee().cloned(),
            _ => None,
        }
    }

    fn rvalue(&mut self, place: Place, expect: Option<&Type>) -> TExpr {
        let span = place.span;
        match &place.ty {
            Type::Array(elem, _) => {
                let elem = (**elem).clone();
                self.address_of(place, elem, expect, span)
            }
            Type::Struct(_) => {
                self.err(K::Unsupported, span, "struct values cannot be copied; use pointers or fields".into());
                TExpr { kind: TExprKind::Int(0), ty: Type::Error, span }
            }
            t => {
                let ty = t.clone();
                TExpr { kind: TExprKind::Load(Box::new(place)), ty, span }
            }
        }
    }

    fn binary(&mut self, op: BinOp, l: &Expr, r: &Expr, expect: Option<&Type>, span: Span) -> TExpr {
        let mk = |kind, ty| TExpr { kind, ty, span };
        match op {
            BinOp::And | BinOp::Or => {
                let a = self.cond(l);
                let b = self.cond(r);
                mk(TExprKind::Binary(op, Box::new(a), Box::new(b)), Type::Int)
            }
            _ if op.is_comparison() => {
                let a = self.expr(l, None);
                let b = self.expr(r, Some(&a.ty));
                let ok = match (&a.ty, &b.ty) {
                    (x, y) if x.is_integer() && y.is_integer() => true,
                    (x, y) if x.is_ptr() && y.is_ptr() => x.pointee() == y.pointee() || x.pointee() == Some(&Type::Void) || y.pointee() == Some(&Type::Void),
                    (x, Type::Null) | (Type::Null, x) => x.is_ptr() || *x == Type::Null,
                    (Type::Error, _) | (_, Type::Error) => true,
                    _ => false,
                };
                if !ok {
                    self.err(K::Mismatch, span, format!("cannot compare {} with {}", a.ty, b.ty));
                }
                let (a, b) = if a.ty.is_integer() && b.ty.is_integer() { (self.coerce(a, &Type::Int), self.coerce(b, &Type::Int)) } else { (a, b) };
                mk(TExprKind::Binary(op, Box::new(a), Box::new(b)), Type::Int)
            }
            BinOp::Add | BinOp::Sub => {
                let ptr_expect = expect.filter(|t| t.is_ptr());
                let a = self.expr(l, ptr_expect);
                let b = self.expr(r, None);
                match (a.ty.is_ptr(), b.ty.is_ptr()) {
                    (true, false) => self.ptr_add(a, b, op == BinOp::Sub, span),
                    (false, true) if op == BinOp::Add => self.ptr_add(b, a, false, span),
                    (true, true) if op == BinOp::Sub => {
                        if matches!(a.ty, Type::MmPtr(_)) || matches!(b.ty, Type::MmPtr(_)) {
                            self.err(K::ArithOnMmPtr, span, "mm_ptr cannot be used in pointer arithmetic".into());
                        } else if a.ty != b.ty {
                            self.err(K::Mismatch, span, format!("cannot subtract {} from {}", b.ty, a.ty));
                        }
                        mk(TExprKind::PtrDiff(Box::new(a), Box::new(b)), Type::Int)
                    }
                    _ => self.int_binary(op, a, b, span),
                }
            }
            _ => {
                let a = self.expr(l, None);
                let b = self.expr(r, None);
                self.int_binary(op, a, b, span)
            }
        }
    }

    fn int_binary(&mut self, op: BinOp, a: TExpr, b: TExpr, span: Span) -> TExpr {
        for v in [&a, &b] {
            if !(v.ty.is_integer() || v.ty == Type::Error) {
                let kind = if matches!(v.ty, Type::MmPtr(_)) { K::ArithOnMmPtr } else { K::Mismatch };
                self.err(kind, span, format!("operator `{}` needs integers, found {}", op.as_str(), v.ty));
            }
        }
        let a = self.coerce(a, &Type::Int);
        let b = self.coerce(b, &Type::Int);
        TExpr { kind: TExprKind::Binary(op, Box::new(a), Box::new(b)), ty: Type::Int, span }
    }

    fn ptr_add(&mut self, ptr: TExpr, off: TExpr, negate: bool, span: Span) -> TExpr {
        match &ptr.ty {
            Type::MmPtr(_) => self.err(K::ArithOnMmPtr, span, "mm_ptr cannot be used in pointer arithmetic".into()),
            Type::RawPtr(t) | Type::MmArrayPtr(t) if **t == Type::Void => {
                self.err(K::Mismatch, span, "arithmetic on a void pointer".into())
            }
            _ => {}
        }
        if !(off.ty.is_integer() || off.ty == Type::Error) {
            self.err(K::Mismatch, span, format!("pointer offset has type {}", off.ty));
        }
        let off = self.coerce(off, &Type::Int);
        let ty = ptr.ty.clone();
        TExpr { kind: TExprKind::PtrAdd { ptr: Box::new(ptr), offset: Box::new(off), negate }, ty, span }
    }

    fn assign(&mut self, op: Option<BinOp>, lhs: &Expr, rhs: &Expr, span: Span) -> TExpr {
        let Some(place) = self.place(lhs) else {
            self.expr(rhs, None);
            return TExpr { kind: TExprKind::Int(0), ty: Type::Error, span };
        };
        let ty = place.ty.clone();
        if !(ty.is_scalar() || ty == Type::Error) {
            self.err(K::Unsupported, span, format!("cannot assign a value of aggregate type {ty}"));
        }
        let kind = match op {
            None => {
                let v = self.expr(rhs, Some(&ty));
                let v = self.coerce(v, &ty);
                TExprKind::Assign { place: Box::new(place), value: Box::new(v) }
            }
            Some(op) => {
                let v = self.expr(rhs, None);
                let v = self.coerce(v, &Type::Int);
                match &ty {
                    Type::MmPtr(_) => self.err(K::ArithOnMmPtr, span, "mm_ptr cannot be used in pointer arithmetic".into()),
                    t if t.is_ptr() && op == BinOp::Mul => self.err(K::Mismatch, span, "`*=` on a pointer".into()),
                    t if t.is_ptr() || t.is_integer() || *t == Type::Error => {}
                    t => self.err(K::Mismatch, span, format!("compound assignment to {t}")),
                }
                TExprKind::Compound { op, place: Box::new(place), value: Box::new(v) }
            }
        };
        TExpr { kind, ty, span }
    }

    fn call(&mut self, callee: &str, args: &[Expr], span: Span) -> TExpr {
        if let Some(b) = Builtin::from_name(callee) {
            let (params, ret): (&[Option<Type>], Type) = match b {
                Builtin::PrintInt => (&[Some(Type::Int)], Type::Void),
                Builtin::PrintStr => (&[None], Type::Void),
                Builtin::ReadInt => (&[], Type::Int),
            };
            if args.len() != params.len() {
                self.err(K::Arity, span, format!("`{callee}` takes {} argument(s), got {}", params.len(), args.len()));
            }
            let targs = args
                .iter()
                .zip(params.iter().chain(std::iter::repeat(&None)))
                .map(|(a, p)| {
                    let v = self.expr(a, p.as_ref());
                    match p {
                        Some(t) => self.coerce(v, t),
                        None => {
                            if !matches!(v.ty.pointee(), Some(Type::Char)) && v.ty != Type::Error {
                                self.err(K::Mismatch, a.span, format!("print_str needs a char pointer, found {}", v.ty));
                            }
                            v
                        }
                    }
                })
                .collect();
            return TExpr { kind: TExprKind::Builtin(b, targs), ty: ret, span };
        }
        let Some(&fid) = self.func_ids.get(callee) else {
            self.err(K::UnknownName, span, format!("unknown function `{callee}`"));
            for a in args {
                self.expr(a, None);
            }
            return TExpr { kind: TExprKind::Int(0), ty: Type::Error, span };
        };
        let params = self.sigs[fid].params.clone();
        let ret = self.sigs[fid].ret.clone();
        if args.len() != params.len() {
            self.err(K::Arity, span, format!("`{callee}` takes {} argument(s), got {}", params.len(), args.len()));
        }
        let mut targs = Vec::new();
        for (a, p) in args.iter().zip(params.iter().map(Some).chain(std::iter::repeat(None))) {
            let v = self.expr(a, p);
            if self.hides_fat(&v.ty) && !matches!(v.kind, TExprKind::Marshal { .. }) {
                self.err(K::MarshalRequired, a.span, format!("argument of type {} hides checked pointers behind a raw pointer", v.ty));
            }
            targs.push(match p {
                Some(p) => self.coerce(v, p),
                None => v,
            });
        }
        TExpr { kind: TExprKind::Call { func: fid, args: targs }, ty: ret, span }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, tokenize};

    fn check(src: &str) -> Result<TypedProgram, Vec<TypeError>> {
        check_program(&parse(&tokenize(src).unwrap()).unwrap())
    }

    fn kinds(src: &str) -> Vec<TypeErrorKind> {
        match check(src) {
            Ok(_) => vec![],
            Err(es) => es.into_iter().map(|e| e.kind).collect(),
        }
    }

    fn ok(src: &str) -> TypedProgram {
        match check(src) {
            Ok(p) => p,
            Err(es) => panic!("unexpected errors: {:?}", es.iter().map(|e| e.to_string()).collect::<Vec<_>>()),
        }
    }

    #[test]
    fn raw_into_checked_rejected() {
        let k = kinds("unchecked int main() { int x; int *r = &x; mm_ptr<int> p = r; return 0; }");
        assert_eq!(k, vec![TypeErrorKind::RawToChecked]);
    }

    #[test]
    fn arithmetic_on_mm_ptr_rejected() {
        let k = kinds("int main() { mm_ptr<int> p = mm_alloc<int>(1); p + 1; return 0; }");
        assert_eq!(k, vec![TypeErrorKind::ArithOnMmPtr]);
    }

    #[test]
    fn errors_are_collected() {
        let k = kinds("int main() { y = 1; mm_free(3); mm_ptr<int> p; p + 1; return 0; }");
        assert_eq!(k, vec![TypeErrorKind::UnknownName, TypeErrorKind::BadFree, TypeErrorKind::ArithOnMmPtr]);
    }

    #[test]
    fn address_of_array_element_is_mm_ptr() {
        let p = ok("int main() { mm_array_ptr<int> a = mm_alloc<int>(4); mm_ptr<int> q = &a[3]; return *q; }");
        let TStmtKind::Decl { init: Some(init), .. } = &p.funcs[0].body[1].kind else { panic!() };
        assert_eq!(init.ty, Type::mm(Type::Int));
    }

    #[test]
    fn address_of_arrow_field_is_mm_ptr() {
        let p = ok("struct Cat { int legs; int age; };\n\
                    unchecked int main() { mm_ptr<struct Cat> c = mm_alloc<struct Cat>(1); int *r = &c->age; return 0; }");
        let TStmtKind::Decl { init: Some(init), .. } = &p.funcs[0].body[1].kind else { panic!() };
        let TExprKind::Convert(Conv::CheckedToRaw, inner) = &init.kind else { panic!("{init:?}") };
        assert_eq!(inner.ty, Type::mm(Type::Int));
        // the coercion to raw happens only in unchecked functions
        let k = kinds("struct Cat { int age; };\n\
                       int main() { mm_ptr<struct Cat> c = mm_alloc<struct Cat>(1); int *r = &c->age; return 0; }");
        assert_eq!(k, vec![TypeErrorKind::CheckedOpInCheckedFn]);
    }

    #[test]
    fn address_of_local_follows_destination() {
        let p = ok("int main() { int x; int y; mm_ptr<int> p = &x; int *r = &y; return *p; }");
        let f = &p.funcs[0];
        assert!(f.locals[0].addr_taken_checked && !f.locals[0].addr_taken_raw);
        assert!(f.locals[1].addr_taken_raw && !f.locals[1].addr_taken_checked);
        assert_eq!(f.locals[0].storage(), Storage::Locked);
        assert_eq!(f.locals[1].storage(), Storage::Memory);
    }

    #[test]
    fn array_decay_to_checked_parameter() {
        let p = ok("int sum(mm_array_ptr<int> a, int n) { int s = 0; int i = 0; while (i < n) { s += a[i]; i++; } return s; }\n\
                    int main() { int buf[4]; buf[0] = 1; return sum(buf, 4); }");
        let main = &p.funcs[1];
        assert!(main.locals[0].addr_taken_checked);
    }

    #[test]
    fn checked_to_raw_needs_unchecked_function() {
        assert_eq!(
            kinds("int main() { mm_ptr<int> p = mm_alloc<int>(1); int *r = p; return 0; }"),
            vec![TypeErrorKind::CheckedOpInCheckedFn]
        );
        ok("unchecked int main() { mm_ptr<int> p = mm_alloc<int>(1); int *r = p; int *s = (int*)p; return 0; }");
    }

    #[test]
    fn fat_array_to_thin_needs_marshal() {
        let src = "unchecked void sort(int **a, int n) { }\n\
                   unchecked int main() { mm_array_ptr<mm_ptr<int>> arr = mm_alloc<mm_ptr<int>>(4); sort(arr, 4); sort(marshal(arr, 4), 4); return 0; }";
        assert_eq!(kinds(src), vec![TypeErrorKind::MarshalRequired]);
    }

    #[test]
    fn pointee_mismatch() {
        let k = kinds("int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_ptr<char> q = p; return 0; }");
        assert_eq!(k, vec![TypeErrorKind::IncompatiblePointee]);
    }

    #[test]
    fn hints_and_marshal_only_in_unchecked() {
        let k = kinds("int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_checked(p); return 0; }");
        assert_eq!(k, vec![TypeErrorKind::CheckedOpInCheckedFn]);
        ok("unchecked int main() { mm_ptr<int> p = mm_alloc<int>(1); mm_checked(p); return *p; }");
    }

    #[test]
    fn global_address_and_strings() {
        let p = ok("int g; mm_ptr<int> gp = &g; mm_array_ptr<char> s = \"hi\";\n\
                    int h; int main() { print_str(s); return *gp; }");
        assert!(p.globals[0].addr_taken_checked);
        assert!(!p.globals[3].addr_taken_checked);
        assert_eq!(p.globals[2].init, GlobalInit::Str(0));
        assert_eq!(p.strings[0], b"hi");
    }

    #[test]
    fn vla_only_at_top_level() {
        ok("int main() { int n = 3; int v[n]; v[1] = 2; return v[1]; }");
        let k = kinds("int main() { int n = 3; if (n) { int v[n]; } return 0; }");
        assert_eq!(k, vec![TypeErrorKind::Unsupported]);
    }

    #[test]
    fn error_rendering() {
        let e = check("int main() {\n  return q;\n}").unwrap_err();
        assert_eq!(e[0].to_string(), "2:10: UnknownName: unknown name `q`");
    }

    /// Walks a typed program and reports any expression that makes a checked
    /// value out of something that was not checked.
    fn raw_to_checked_flows(p: &TypedProgram) -> usize {
        fn walk(e: &TExpr, n: &mut usize) {
            if e.ty.is_checked() {
                let fine = match &e.kind {
                    TExprKind::Convert(Conv::Reinterpret, inner) => inner.ty.is_checked(),
                    TExprKind::Convert(..) => false,
                    TExprKind::PtrAdd { ptr, .. } => ptr.ty.is_checked(),
                    _ => true,
                };
                if !fine {
                    *n += 1;
                }
            }
            match &e.kind {
                TExprKind::Load(p) | TExprKind::AddrOf(p) => place(p, n),
                TExprKind::Unary(_, a) | TExprKind::Convert(_, a) | TExprKind::Free(a) => walk(a, n),
                TExprKind::Binary(_, a, b) | TExprKind::PtrDiff(a, b) => {
                    walk(a, n);
                    walk(b, n)
                }
                TExprKind::PtrAdd { ptr, offset, .. } => {
                    walk(ptr, n);
                    walk(offset, n)
                }
                TExprKind::Assign { place: p, value } | TExprKind::Compound { place: p, value, .. } => {
                    place(p, n);
                    walk(value, n)
                }
                TExprKind::Call { args, .. } | TExprKind::Builtin(_, args) => args.iter().for_each(|a| walk(a, n)),
                TExprKind::Alloc { count, .. } => walk(count, n),
                TExprKind::Marshal { array, len } => {
                    walk(array, n);
                    walk(len, n)
                }
                TExprKind::Unmarshal { thin, orig, len } => {
                    walk(thin, n);
                    walk(orig, n);
                    walk(len, n)
                }
                TExprKind::Int(_) | TExprKind::Str(_) | TExprKind::Null | TExprKind::Hint(_) => {}
            }
        }
        fn place(p: &Place, n: &mut usize) {
            match &p.kind {
                PlaceKind::Deref { ptr, index } => {
                    walk(ptr, n);
                    if let Some(i) = index {
                        walk(i, n)
                    }
                }
                PlaceKind::Field { base, .. } => place(base, n),
                PlaceKind::Index { base, index } => {
                    place(base, n);
                    walk(index, n)
                }
                PlaceKind::Local(_) | PlaceKind::Global(_) => {}
            }
        }
        fn stmt(s: &TStmt, n: &mut usize) {
            match &s.kind {
                TStmtKind::Decl { len, init, .. } => len.iter().chain(init.iter()).for_each(|e| walk(e, n)),
                TStmtKind::Expr(e) | TStmtKind::Return(Some(e)) => walk(e, n),
                TStmtKind::If { cond, then_branch, else_branch } => {
                    walk(cond, n);
                    stmt(then_branch, n);
                    if let Some(e) = else_branch {
                        stmt(e, n)
                    }
                }
                TStmtKind::While { cond, body } => {
                    walk(cond, n);
                    stmt(body, n)
                }
                TStmtKind::Block(b) => b.iter().for_each(|s| stmt(s, n)),
                _ => {}
            }
        }
        let mut n = 0;
        for f in &p.funcs {
            f.body.iter().for_each(|s| stmt(s, &mut n));
        }
        n
    }

    #[test]
    fn no_raw_to_checked_flow_in_typed_programs() {
        let p = ok("struct N { int v; mm_ptr<struct N> next; };\n\
                    mm_ptr<struct N> push(mm_ptr<struct N> h, int v) { mm_ptr<struct N> n = mm_alloc<struct N>(1); n->v = v; n->next = h; return n; }\n\
                    unchecked int main() { mm_ptr<struct N> h = null; h = push(h, 1); int *r = &h->v; mm_array_ptr<char> s = \"x\"; \n\
                    mm_array_ptr<int> a = mm_alloc<int>(4); mm_array_ptr<int> b = a + 2; mm_ptr<int> c = (mm_ptr<int>)b; return *c + *r; }");
        assert_eq!(raw_to_checked_flows(&p), 0);
    }
}
