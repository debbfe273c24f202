//! Canonical pretty-printer. `parse(tokenize(format(ast)))` reproduces `ast`
//! for every tree the parser can build.

use std::fmt::Write;

use super::ast::*;
use super::token::escape;

const INDENT: &str = "    ";

pub fn format(ast: &Ast) -> String {
    let mut out = String::new();
    for s in &ast.structs {
        let _ = writeln!(out, "struct {} {{", s.name);
        for f in &s.fields {
            let len = f.array_len.map(|n| format!("[{n}]")).unwrap_or_default();
            let _ = writeln!(out, "{INDENT}{} {}{len};", type_str(&f.ty), f.name);
        }
        out.push_str("};\n\n");
    }
    for g in &ast.globals {
        out.push_str(&decl_str(g));
        out.push('\n');
    }
    if !ast.globals.is_empty() {
        out.push('\n');
    }
    for (i, f) in ast.funcs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let params: Vec<_> = f.params.iter().map(|p| format!("{} {}", type_str(&p.ty), p.name)).collect();
        let qual = if f.unchecked { "unchecked " } else { "" };
        let _ = writeln!(out, "{qual}{} {}({}) {{", type_str(&f.ret), f.name, params.join(", "));
        for s in &f.body {
            stmt(&mut out, s, 1);
        }
        out.push_str("}\n");
    }
    out
}

pub fn type_str(ty: &TypeExpr) -> String {
    match ty {
        TypeExpr::Int => "int".into(),
        TypeExpr::Char => "char".into(),
        TypeExpr::Void => "void".into(),
        TypeExpr::Struct(n) => format!("struct {n}"),
        TypeExpr::Ptr(t) => format!("{}*", type_str(t)),
        TypeExpr::MmPtr(t) => format!("mm_ptr<{}>", type_str(t)),
        TypeExpr::MmArrayPtr(t) => format!("mm_array_ptr<{}>", type_str(t)),
    }
}

fn decl_str(d: &VarDecl) -> String {
    let mut s = format!("{} {}", type_str(&d.ty), d.name);
    if let Some(len) = &d.array_len {
        let _ = write!(s, "[{}]", expr_str(len));
    }
    if let Some(init) = &d.init {
        let _ = write!(s, " = {}", expr_str(init));
    }
    s.push(';');
    s
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    stmt_inline(out, s, depth);
    out.push('\n');
}

/// Print a statement whose first line is already indented.
fn stmt_inline(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Decl(d) => out.push_str(&decl_str(d)),
        StmtKind::Expr(e) => {
            out.push_str(&expr_str(e));
            out.push(';');
        }
        StmtKind::Return(None) => out.push_str("return;"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {};", expr_str(e));
        }
        StmtKind::Break => out.push_str("break;"),
        StmtKind::Continue => out.push_str("continue;"),
        StmtKind::Block(body) => {
            out.push_str("{\n");
            for s in body {
                stmt(out, s, depth + 1);
            }
            indent(out, depth);
            out.push('}');
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            let _ = write!(out, "if ({}) ", expr_str(cond));
            branch(out, then_branch, depth);
            if let Some(e) = else_branch {
                if matches!(then_branch.kind, StmtKind::Block(_)) {
                    out.push(' ');
                } else {
                    out.push('\n');
                    indent(out, depth);
                }
                out.push_str("else ");
                if matches!(e.kind, StmtKind::If { .. }) {
                    stmt_inline(out, e, depth);
                } else {
                    branch(out, e, depth);
                }
            }
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({}) ", expr_str(cond));
            branch(out, body, depth);
        }
    }
}

fn branch(out: &mut String, s: &Stmt, depth: usize) {
    if matches!(s.kind, StmtKind::Block(_)) {
        stmt_inline(out, s, depth);
    } else {
        out.push('\n');
        indent(out, depth + 1);
        stmt_inline(out, s, depth + 1);
    }
}

const PREC_ASSIGN: u8 = 0;
const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;
const PREC_PRIMARY: u8 = 9;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Assign { .. } => PREC_ASSIGN,
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(..) | ExprKind::Deref(_) | ExprKind::AddrOf(_) | ExprKind::Cast { .. } => PREC_UNARY,
        ExprKind::Index { .. } | ExprKind::Field { .. } => PREC_POSTFIX,
        _ => PREC_PRIMARY,
    }
}

pub fn expr_str(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, PREC_ASSIGN);
    s
}

fn expr(out: &mut String, e: &Expr, min: u8) {
    let paren = prec(e) < min;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::IntLit(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::CharLit(c) => {
            let _ = write!(out, "'{}'", escape(&[*c], '\''));
        }
        ExprKind::StrLit(bytes) => {
            let _ = write!(out, "\"{}\"", escape(bytes, '"'));
        }
        ExprKind::Null => out.push_str("null"),
        ExprKind::Ident(n) => out.push_str(n),
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            prefix(out, sym, inner);
        }
        ExprKind::Deref(inner) => prefix(out, "*", inner),
        ExprKind::AddrOf(inner) => prefix(out, "&", inner),
        ExprKind::Cast { ty, expr: inner } => {
            let _ = write!(out, "({})", type_str(ty));
            expr(out, inner, PREC_UNARY);
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            expr(out, l, p);
            let _ = write!(out, " {} ", op.as_str());
            expr(out, r, p + 1);
        }
        ExprKind::Assign { op, lhs, rhs } => {
            expr(out, lhs, PREC_ASSIGN + 1);
            let sym = match op {
                None => "=",
                Some(BinOp::Add) => "+=",
                Some(BinOp::Sub) => "-=",
                Some(BinOp::Mul) => "*=",
                Some(other) => unreachable!("no compound form for {other:?}"),
            };
            let _ = write!(out, " {sym} ");
            expr(out, rhs, PREC_ASSIGN);
        }
        ExprKind::Field { base, name, arrow } => {
            expr(out, base, PREC_POSTFIX);
            out.push_str(if *arrow { "->" } else { "." });
            out.push_str(name);
        }
        ExprKind::Index { base, index } => {
            expr(out, base, PREC_POSTFIX);
            out.push('[');
            expr(out, index, PREC_ASSIGN);
            out.push(']');
        }
        ExprKind::Call { callee, args } => call(out, callee, args.iter()),
        ExprKind::Alloc { ty, count } => call(out, &format!("mm_alloc<{}>", type_str(ty)), [&**count]),
        ExprKind::Free(a) => call(out, "mm_free", [&**a]),
        ExprKind::Checked(a) => call(out, "mm_checked", [&**a]),
        ExprKind::ArrayChecked(a) => call(out, "mm_array_checked", [&**a]),
        ExprKind::Marshal { array, len } => call(out, "marshal", [&**array, &**len]),
        ExprKind::Unmarshal { thin, orig, len } => call(out, "unmarshal", [&**thin, &**orig, &**len]),
    }
    if paren {
        out.push(')');
    }
}

fn prefix(out: &mut String, sym: &str, inner: &Expr) {
    out.push_str(sym);
    let mut operand = String::new();
    expr(&mut operand, inner, PREC_UNARY);
    // `- -x` and `& &x` must not fuse into `--` / `&&`.
    let fuses = operand.starts_with(sym) && (sym == "-" || sym == "&");
    if fuses {
        let _ = write!(out, "({operand})");
    } else {
        out.push_str(&operand);
    }
}

fn call<'e>(out: &mut String, name: &str, args: impl IntoIterator<Item = &'e Expr>) {
    out.push_str(name);
    out.push('(');
    for (i, a) in args.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(out, a, PREC_ASSIGN);
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, tokenize};

    fn roundtrip(src: &str) -> String {
        let ast = parse(&tokenize(src).unwrap()).unwrap();
        let text = format(&ast);
        let again = parse(&tokenize(&text).unwrap()).unwrap();
        assert_eq!(ast, again, "round trip changed the tree:\n{text}");
        text
    }

    #[test]
    fn simple_function() {
        let text = roundtrip("int f(){return 0;}");
        assert_eq!(text, "int f() {\n    return 0;\n}\n");
    }

    #[test]
    fn minimal_parentheses_for_address_of_index() {
        let text = roundtrip("int f() { q = &p[i]; r = (a + b) * c; s = a + b * c; t = -(-x); u = &(&y); }");
        assert!(text.contains("q = &p[i];"));
        assert!(text.contains("r = (a + b) * c;"));
        assert!(text.contains("s = a + b * c;"));
        assert!(text.contains("t = -(-x);"));
        assert!(text.contains("u = &(&y);"));
    }

    #[test]
    fn empty_program() {
        assert!(roundtrip("").trim().is_empty());
    }

    #[test]
    fn control_flow_and_declarations() {
        roundtrip(
            "struct N { int v; mm_ptr<struct N> next; char tag[4]; };\n\
             int g = 7; mm_array_ptr<char> s = \"a\\n\\\"b\";\n\
             unchecked int main() {\n\
               int n = read_int(); int v[n]; char c = '\\'';\n\
               if (n > 1) if (n > 2) n = 1; else n = 2;\n\
               if (n) { n -= 1; } else if (!n) { n *= 2; } else n++;\n\
               while (n < 10 && n != 3 || n == 4) { n = n + 1; if (n) break; continue; }\n\
               mm_ptr<struct N> p = mm_alloc<struct N>(1); p->next = null; (*p).v = a[1].b->c;\n\
               int **t = marshal(arr, 4); arr = unmarshal(t, arr, 4); mm_checked(p); mm_free(p);\n\
               return (int)(char*)x - -1;\n\
             }",
        );
    }

    mod generated {
        use super::*;
        use crate::frontend::token::Span;
        use proptest::prelude::*;

        fn e(kind: ExprKind) -> Expr {
            Expr::new(kind, Span::default())
        }

        fn b(x: Expr) -> Box<Expr> {
            Box::new(x)
        }

        fn ty() -> impl Strategy<Value = TypeExpr> {
            let leaf = prop_oneof![
                Just(TypeExpr::Int),
                Just(TypeExpr::Char),
                Just(TypeExpr::Struct("node".into())),
            ];
            leaf.prop_recursive(3, 6, 1, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|t| TypeExpr::Ptr(Box::new(t))),
                    inner.clone().prop_map(|t| TypeExpr::MmPtr(Box::new(t))),
                    inner.prop_map(|t| TypeExpr::MmArrayPtr(Box::new(t))),
                ]
            })
        }

        fn binop() -> impl Strategy<Value = BinOp> {
            use BinOp::*;
            prop::sample::select(vec![Mul, Div, Rem, Add, Sub, Lt, Le, Gt, Ge, Eq, Ne, And, Or])
        }

        fn expr() -> impl Strategy<Value = Expr> {
            let leaf = prop_oneof![
                (0i64..1_000_000).prop_map(|v| e(ExprKind::IntLit(v))),
                (32u8..127).prop_map(|c| e(ExprKind::CharLit(c))),
                "[ -~]{0,6}".prop_map(|s| e(ExprKind::StrLit(s.into_bytes()))),
                Just(e(ExprKind::Null)),
                prop::sample::select(vec!["a", "p", "q", "len"]).prop_map(|n| e(ExprKind::Ident(n.into()))),
            ];
            leaf.prop_recursive(5, 48, 3, |inner| {
                let compound = prop::sample::select(vec![None, Some(BinOp::Add), Some(BinOp::Sub), Some(BinOp::Mul)]);
                prop_oneof![
                    (prop::bool::ANY, inner.clone()).prop_map(|(neg, x)| {
                        e(ExprKind::Unary(if neg { UnOp::Neg } else { UnOp::Not }, b(x)))
                    }),
                    (binop(), inner.clone(), inner.clone()).prop_map(|(op, l, r)| e(ExprKind::Binary(op, b(l), b(r)))),
                    (compound, inner.clone(), inner.clone())
                        .prop_map(|(op, l, r)| e(ExprKind::Assign { op, lhs: b(l), rhs: b(r) })),
                    inner.clone().prop_map(|x| e(ExprKind::Deref(b(x)))),
                    inner.clone().prop_map(|x| e(ExprKind::AddrOf(b(x)))),
                    (inner.clone(), prop::bool::ANY)
                        .prop_map(|(x, arrow)| e(ExprKind::Field { base: b(x), name: "f".into(), arrow })),
                    (inner.clone(), inner.clone()).prop_map(|(x, i)| e(ExprKind::Index { base: b(x), index: b(i) })),
                    (ty(), inner.clone()).prop_map(|(ty, x)| e(ExprKind::Cast { ty, expr: b(x) })),
                    prop::collection::vec(inner.clone(), 0..3)
                        .prop_map(|args| e(ExprKind::Call { callee: "g".into(), args })),
                    (ty(), inner.clone()).prop_map(|(ty, x)| e(ExprKind::Alloc { ty, count: b(x) })),
                    inner.clone().prop_map(|x| e(ExprKind::Free(b(x)))),
                    inner.clone().prop_map(|x| e(ExprKind::Checked(b(x)))),
                    (inner.clone(), inner.clone()).prop_map(|(a, n)| e(ExprKind::Marshal { array: b(a), len: b(n) })),
                    (inner.clone(), inner.clone(), inner)
                        .prop_map(|(t, o, n)| e(ExprKind::Unmarshal { thin: b(t), orig: b(o), len: b(n) })),
                ]
            })
        }

        fn stmt() -> impl Strategy<Value = Stmt> {
            let s = |kind| Stmt { kind, span: Span::default() };
            let leaf = prop_oneof![
                expr().prop_map(move |x| s(StmtKind::Expr(x))),
                prop::option::of(expr()).prop_map(move |x| s(StmtKind::Return(x))),
                Just(s(StmtKind::Break)),
                (ty(), prop::option::of(expr())).prop_map(move |(ty, init)| {
                    s(StmtKind::Decl(VarDecl { ty, name: "v".into(), array_len: None, init, span: Span::default() }))
                }),
            ];
            leaf.prop_recursive(3, 16, 3, move |inner| {
                prop_oneof![
                    prop::collection::vec(inner.clone(), 0..3).prop_map(move |body| s(StmtKind::Block(body))),
                    (expr(), inner.clone()).prop_map(move |(cond, body)| s(StmtKind::While { cond, body: Box::new(body) })),
                    (expr(), inner.clone(), prop::option::of(inner)).prop_map(move |(cond, then_branch, else_branch)| {
                        // An else cannot attach past an inner else-less if; the parser never builds that shape.
                        let dangling = matches!(&then_branch.kind, StmtKind::If { else_branch: None, .. });
                        let else_branch = if dangling { None } else { else_branch.map(Box::new) };
                        s(StmtKind::If { cond, then_branch: Box::new(then_branch), else_branch })
                    }),
                ]
            })
        }

        fn ends_with_open_if(s: &Stmt) -> bool {
            match &s.kind {
                StmtKind::If { else_branch: None, .. } => true,
                StmtKind::If { else_branch: Some(e), .. } => ends_with_open_if(e),
                StmtKind::While { body, .. } => ends_with_open_if(body),
                _ => false,
            }
        }

        fn parseable(s: &Stmt) -> bool {
            match &s.kind {
                StmtKind::If { then_branch, else_branch, .. } => {
                    (else_branch.is_none() || !ends_with_open_if(then_branch))
                        && parseable(then_branch)
                        && else_branch.as_deref().is_none_or(parseable)
                }
                StmtKind::While { body, .. } => parseable(body),
                StmtKind::Block(b) => b.iter().all(parseable),
                _ => true,
            }
        }

        proptest! {
            #[test]
            fn format_then_parse_is_identity(body in prop::collection::vec(stmt(), 0..4)) {
                prop_assume!(body.iter().all(parseable));
                let ast = Ast {
                    structs: vec![],
                    globals: vec![],
                    funcs: vec![FuncDecl {
                        name: "f".into(),
                        unchecked: false,
                        ret: TypeExpr::Int,
                        params: vec![],
                        body,
                        span: Span::default(),
                    }],
                };
                let text = format(&ast);
                let again = parse(&tokenize(&text).unwrap()).unwrap();
                prop_assert_eq!(ast, again, "{}", text);
            }
        }
    }
}
