//! Recursive-descent parser over the token stream.

use std::fmt;

use thiserror::Error;

use super::ast::*;
use super::token::{int_value, unescape, Keyword, Punct, Span, Token, TokenKind, TokenStream};

#[derive(Debug, Clone, Error)]
pub struct ParseError {
    pub expected: Vec<String>,
    pub found: String,
    pub span: Span,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected {}, found {}", self.expected.join(" or "), self.found)
    }
}

type PResult<T> = Result<T, ParseError>;

pub fn parse(toks: &TokenStream) -> Result<Ast, ParseError> {
    Parser { toks, pos: 0 }.program()
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_kind(&self) -> Option<TokenKind> {
        self.peek().map(|t| t.kind)
    }

    fn peek_kind_at(&self, n: usize) -> Option<TokenKind> {
        self.toks.get(self.pos + n).map(|t| t.kind)
    }

    fn here(&self) -> Span {
        match self.peek() {
            Some(t) => t.span,
            None => self.toks.last().map(|t| Span { offset: t.span.end(), len: 0, ..t.span }).unwrap_or_default(),
        }
    }

    fn prev_span(&self) -> Span {
        self.pos.checked_sub(1).map(|i| self.toks[i].span).unwrap_or_default()
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(|t| format!("`{}`", t.lexeme)).unwrap_or_else(|| "end of input".into()),
            span: self.here(),
        })
    }

    fn is_punct(&self, p: Punct) -> bool {
        self.peek_kind() == Some(TokenKind::Punct(p))
    }

    fn is_kw(&self, k: Keyword) -> bool {
        self.peek_kind() == Some(TokenKind::Keyword(k))
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Keyword) -> bool {
        if self.is_kw(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: Punct) -> PResult<Span> {
        if self.eat_punct(p) {
            Ok(self.prev_span())
        } else {
            self.error(&[&format!("`{}`", p.as_str())])
        }
    }

    fn expect_ident(&mut self) -> PResult<(String, Span)> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok((t.lexeme.clone(), t.span))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn program(&mut self) -> PResult<Ast> {
        let mut ast = Ast::default();
        while self.peek().is_some() {
            if self.is_kw(Keyword::Struct)
                && self.peek_kind_at(1) == Some(TokenKind::Ident)
                && self.peek_kind_at(2) == Some(TokenKind::Punct(Punct::LBrace))
            {
                ast.structs.push(self.struct_decl()?);
                continue;
            }
            let start = self.here();
            let unchecked = self.eat_kw(Keyword::Unchecked);
            let ty = self.type_expr()?;
            let (name, _) = self.expect_ident()?;
            if self.is_punct(Punct::LParen) {
                ast.funcs.push(self.func_rest(start, unchecked, ty, name)?);
            } else if unchecked {
                return self.error(&["`(`"]);
            } else {
                ast.globals.push(self.var_decl_rest(start, ty, name)?);
            }
        }
        Ok(ast)
    }

    fn struct_decl(&mut self) -> PResult<StructDecl> {
        let start = self.here();
        self.eat_kw(Keyword::Struct);
        let (name, _) = self.expect_ident()?;
        self.expect_punct(Punct::LBrace)?;
        let mut fields = Vec::new();
        while !self.eat_punct(Punct::RBrace) {
            let fstart = self.here();
            let ty = self.type_expr()?;
            let (fname, _) = self.expect_ident()?;
            let array_len = if self.eat_punct(Punct::LBracket) {
                let len = match self.peek() {
                    Some(t) if t.kind == TokenKind::IntLit => {
                        self.pos += 1;
                        int_value(&t.lexeme).filter(|v| *v >= 0).map(|v| v as u64)
                    }
                    _ => None,
                };
                let Some(len) = len else { return self.error(&["array length"]) };
                self.expect_punct(Punct::RBracket)?;
                Some(len)
            } else {
                None
            };
            let end = self.expect_punct(Punct::Semi)?;
            fields.push(FieldDecl { ty, name: fname, array_len, span: fstart.to(end) });
        }
        let end = self.expect_punct(Punct::Semi)?;
        Ok(StructDecl { name, fields, span: start.to(end) })
    }

    fn starts_type(&self) -> bool {
        matches!(
            self.peek_kind(),
            Some(TokenKind::Keyword(
                Keyword::Int | Keyword::Char | Keyword::Void | Keyword::Struct | Keyword::MmPtr | Keyword::MmArrayPtr
            ))
        )
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let mut ty = match self.peek_kind() {
            Some(TokenKind::Keyword(Keyword::Int)) => {
                self.pos += 1;
                TypeExpr::Int
            }
            Some(TokenKind::Keyword(Keyword::Char)) => {
                self.pos += 1;
                TypeExpr::Char
            }
            Some(TokenKind::Keyword(Keyword::Void)) => {
                self.pos += 1;
                TypeExpr::Void
            }
            Some(TokenKind::Keyword(Keyword::Struct)) => {
                self.pos += 1;
                TypeExpr::Struct(self.expect_ident()?.0)
            }
            Some(TokenKind::Keyword(k @ (Keyword::MmPtr | Keyword::MmArrayPtr))) => {
                self.pos += 1;
                self.expect_punct(Punct::Lt)?;
                let inner = Box::new(self.type_expr()?);
                self.expect_punct(Punct::Gt)?;
                if k == Keyword::MmPtr {
                    TypeExpr::MmPtr(inner)
                } else {
                    TypeExpr::MmArrayPtr(inner)
                }
            }
            _ => return self.error(&["type"]),
        };
        while self.eat_punct(Punct::Star) {
            ty = TypeExpr::Ptr(Box::new(ty));
        }
        Ok(ty)
    }

    fn func_rest(&mut self, start: Span, unchecked: bool, ret: TypeExpr, name: String) -> PResult<FuncDecl> {
        self.expect_punct(Punct::LParen)?;
        let mut params = Vec::new();
        if !self.eat_punct(Punct::RParen) {
            loop {
                let pstart = self.here();
                let ty = self.type_expr()?;
                let (pname, pend) = self.expect_ident()?;
                params.push(Param { ty, name: pname, span: pstart.to(pend) });
                if self.eat_punct(Punct::RParen) {
                    break;
                }
                self.expect_punct(Punct::Comma)?;
            }
        }
        let body = self.block()?;
        Ok(FuncDecl { name, unchecked, ret, params, body, span: start.to(self.prev_span()) })
    }

    fn var_decl_rest(&mut self, start: Span, ty: TypeExpr, name: String) -> PResult<VarDecl> {
        let array_len = if self.eat_punct(Punct::LBracket) {
            let e = self.expr()?;
            self.expect_punct(Punct::RBracket)?;
            Some(e)
        } else {
            None
        };
        let init = if self.eat_punct(Punct::Assign) { Some(self.expr()?) } else { None };
        let end = self.expect_punct(Punct::Semi)?;
        Ok(VarDecl { ty, name, array_len, init, span: start.to(end) })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct(Punct::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat_punct(Punct::RBrace) {
            if self.peek().is_none() {
                return self.error(&["`}`"]);
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.here();
        let kind = match self.peek_kind() {
            Some(TokenKind::Punct(Punct::LBrace)) => StmtKind::Block(self.block()?),
            Some(TokenKind::Keyword(Keyword::If)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.eat_kw(Keyword::Else) { Some(Box::new(self.stmt()?)) } else { None };
                StmtKind::If { cond, then_branch, else_branch }
            }
            Some(TokenKind::Keyword(Keyword::While)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                StmtKind::While { cond, body: Box::new(self.stmt()?) }
            }
            Some(TokenKind::Keyword(Keyword::Return)) => {
                self.pos += 1;
                let value = if self.is_punct(Punct::Semi) { None } else { Some(self.expr()?) };
                self.expect_punct(Punct::Semi)?;
                StmtKind::Return(value)
            }
            Some(TokenKind::Keyword(Keyword::Break)) => {
                self.pos += 1;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Break
            }
            Some(TokenKind::Keyword(Keyword::Continue)) => {
                self.pos += 1;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Continue
            }
            _ if self.starts_type() => {
                let ty = self.type_expr()?;
                let (name, _) = self.expect_ident()?;
                StmtKind::Decl(self.var_decl_rest(start, ty, name)?)
            }
            _ => {
                let e = self.expr()?;
                // `x++;` and `x--;` are statement-level sugar for `x += 1;`.
                let e = if self.is_punct(Punct::PlusPlus) || self.is_punct(Punct::MinusMinus) {
                    let op = if self.eat_punct(Punct::PlusPlus) {
                        BinOp::Add
                    } else {
                        self.pos += 1;
                        BinOp::Sub
                    };
                    let span = e.span.to(self.prev_span());
                    let one = Expr::new(ExprKind::IntLit(1), self.prev_span());
                    Expr::new(ExprKind::Assign { op: Some(op), lhs: Box::new(e), rhs: Box::new(one) }, span)
                } else {
                    e
                };
                self.expect_punct(Punct::Semi)?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.assignment()
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.binary(1)?;
        let op = match self.peek_kind() {
            Some(TokenKind::Punct(Punct::Assign)) => None,
            Some(TokenKind::Punct(Punct::PlusAssign)) => Some(BinOp::Add),
            Some(TokenKind::Punct(Punct::MinusAssign)) => Some(BinOp::Sub),
            Some(TokenKind::Punct(Punct::StarAssign)) => Some(BinOp::Mul),
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.assignment()?;
        let span = lhs.span.to(rhs.span);
        Ok(Expr::new(ExprKind::Assign { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let TokenKind::Punct(p) = self.peek_kind()? else { return None };
        Some(match p {
            Punct::Star => BinOp::Mul,
            Punct::Slash => BinOp::Div,
            Punct::Percent => BinOp::Rem,
            Punct::Plus => BinOp::Add,
            Punct::Minus => BinOp::Sub,
            Punct::Lt => BinOp::Lt,
            Punct::Le => BinOp::Le,
            Punct::Gt => BinOp::Gt,
            Punct::Ge => BinOp::Ge,
            Punct::EqEq => BinOp::Eq,
            Punct::NotEq => BinOp::Ne,
            Punct::AndAnd => BinOp::And,
            Punct::OrOr => BinOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing for left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.here();
        let make: fn(Box<Expr>) -> ExprKind = match self.peek_kind() {
            Some(TokenKind::Punct(Punct::Minus)) => |e| ExprKind::Unary(UnOp::Neg, e),
            Some(TokenKind::Punct(Punct::Not)) => |e| ExprKind::Unary(UnOp::Not, e),
            Some(TokenKind::Punct(Punct::Star)) => ExprKind::Deref,
            Some(TokenKind::Punct(Punct::Amp)) => ExprKind::AddrOf,
            Some(TokenKind::Punct(Punct::LParen)) if self.cast_ahead() => {
                self.pos += 1;
                let ty = self.type_expr()?;
                self.expect_punct(Punct::RParen)?;
                let e = self.unary()?;
                let span = start.to(e.span);
                return Ok(Expr::new(ExprKind::Cast { ty, expr: Box::new(e) }, span));
            }
            _ => return self.postfix(),
        };
        self.pos += 1;
        let e = self.unary()?;
        let span = start.to(e.span);
        Ok(Expr::new(make(Box::new(e)), span))
    }

    fn cast_ahead(&self) -> bool {
        matches!(
            self.peek_kind_at(1),
            Some(TokenKind::Keyword(
                Keyword::Int | Keyword::Char | Keyword::Void | Keyword::Struct | Keyword::MmPtr | Keyword::MmArrayPtr
            ))
        )
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct(Punct::LBracket) {
                let index = self.expr()?;
                let end = self.expect_punct(Punct::RBracket)?;
                let span = e.span.to(end);
                e = Expr::new(ExprKind::Index { base: Box::new(e), index: Box::new(index) }, span);
            } else if self.is_punct(Punct::Dot) || self.is_punct(Punct::Arrow) {
                let arrow = self.is_punct(Punct::Arrow);
                self.pos += 1;
                let (name, end) = self.expect_ident()?;
                let span = e.span.to(end);
                e = Expr::new(ExprKind::Field { base: Box::new(e), name, arrow }, span);
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct(Punct::LParen)?;
        let mut args = Vec::new();
        if self.eat_punct(Punct::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(Punct::RParen) {
                return Ok(args);
            }
            self.expect_punct(Punct::Comma)?;
        }
    }

    fn fixed_args<const N: usize>(&mut self) -> PResult<[Expr; N]> {
        let before = self.here();
        let args = self.args()?;
        let n = args.len();
        args.try_into().map_err(|_| ParseError {
            expected: vec![format!("{N} argument(s)")],
            found: format!("{n}"),
            span: before,
        })
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else { return self.error(&["expression"]) };
        let start = tok.span;
        let kind = match tok.kind {
            TokenKind::IntLit => {
                self.pos += 1;
                let v = int_value(&tok.lexeme).expect("lexer validated literal");
                if tok.lexeme.starts_with('\'') {
                    ExprKind::CharLit(v as u8)
                } else {
                    ExprKind::IntLit(v)
                }
            }
            TokenKind::StrLit => {
                self.pos += 1;
                let body = &tok.lexeme[1..tok.lexeme.len() - 1];
                ExprKind::StrLit(unescape(body, tok.span).expect("lexer validated literal"))
            }
            TokenKind::Ident => {
                self.pos += 1;
                if self.is_punct(Punct::LParen) {
                    ExprKind::Call { callee: tok.lexeme.clone(), args: self.args()? }
                } else {
                    ExprKind::Ident(tok.lexeme.clone())
                }
            }
            TokenKind::Punct(Punct::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                return Ok(Expr::new(e.kind, start.to(self.prev_span())));
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.pos += 1;
                ExprKind::Null
            }
            TokenKind::Keyword(Keyword::MmAlloc) => {
                self.pos += 1;
                self.expect_punct(Punct::Lt)?;
                let ty = self.type_expr()?;
                self.expect_punct(Punct::Gt)?;
                let [count] = self.fixed_args()?;
                ExprKind::Alloc { ty, count: Box::new(count) }
            }
            TokenKind::Keyword(kw @ (Keyword::MmFree | Keyword::MmChecked | Keyword::MmArrayChecked)) => {
                self.pos += 1;
                let [arg] = self.fixed_args()?;
                let arg = Box::new(arg);
                match kw {
                    Keyword::MmFree => ExprKind::Free(arg),
                    Keyword::MmChecked => ExprKind::Checked(arg),
                    _ => ExprKind::ArrayChecked(arg),
                }
            }
            TokenKind::Keyword(Keyword::Marshal) => {
                self.pos += 1;
                let [array, len] = self.fixed_args()?;
                ExprKind::Marshal { array: Box::new(array), len: Box::new(len) }
            }
            TokenKind::Keyword(Keyword::Unmarshal) => {
                self.pos += 1;
                let [thin, orig, len] = self.fixed_args()?;
                ExprKind::Unmarshal { thin: Box::new(thin), orig: Box::new(orig), len: Box::new(len) }
            }
            _ => return self.error(&["expression"]),
        };
        Ok(Expr::new(kind, start.to(self.prev_span())))
    }
}
