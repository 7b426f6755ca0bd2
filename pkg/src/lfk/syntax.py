"""Syntax of the control/prompt source language.

Expression types, trail types, the AST, the concrete text syntax
(parser and printer for ``.lf`` files), desugaring of ``;``, and
capture-avoiding substitution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Types


class SourceType:
    """Expression types: base types and the two arrow forms."""

    __hash__ = object.__hash__


class TrailType:
    """Trail types: * (empty) or {in => next => out}."""

    __hash__ = object.__hash__


@dataclass(frozen=True)
class Base(SourceType):
    """A base type: int, bool or string."""

    name: str


@dataclass(frozen=True)
class ImpureArrow(SourceType):
    """dom -> cod together with the control effect of the body.

    The four extra components are the final trail type, final answer
    type, initial trail type and initial answer type of the body, in
    that order (same order as in a judgment).
    """

    dom: SourceType
    cod: SourceType
    final_trail: TrailType
    final_ans: SourceType
    init_trail: TrailType
    init_ans: SourceType


@dataclass(frozen=True)
class PureArrow(SourceType):
    """dom => cod, a function whose body has no control effect.

    Only meaningful under the fine-grained system; the original
    checker rejects programs mentioning it.
    """

    dom: SourceType
    cod: SourceType


@dataclass(frozen=True)
class EmptyTrail(TrailType):
    """The type * of the empty trail."""


@dataclass(frozen=True)
class TrailStep(TrailType):
    """{in_ty => next => out_ty}: accepts in_ty, is later composed with
    a context of type next, and then yields out_ty."""

    in_ty: SourceType
    next: TrailType
    out_ty: SourceType


INT = Base("int")
BOOL = Base("bool")
STRING = Base("string")
EMPTY = EmptyTrail()
BASE_TYPES = (INT, BOOL, STRING)


def type_size(t: Union[SourceType, TrailType]) -> int:
    """Node count of a type (used for smallest-witness tie-breaking)."""
    match t:
        case Base(_) | EmptyTrail():
            return 1
        case PureArrow(d, c):
            return 1 + type_size(d) + type_size(c)
        case ImpureArrow(d, c, mt, a, it, b):
            return 1 + sum(type_size(x) for x in (d, c, mt, a, it, b))
        case TrailStep(i, n, o):
            return 1 + type_size(i) + type_size(n) + type_size(o)
    raise ValueError(f"not a ground type: {t!r}")


def contains_pure_arrow(t: Union[SourceType, TrailType]) -> bool:
    match t:
        case PureArrow(_, _):
            return True
        case ImpureArrow(d, c, mt, a, it, b):
            return any(contains_pure_arrow(x) for x in (d, c, mt, a, it, b))
        case TrailStep(i, n, o):
            return any(contains_pure_arrow(x) for x in (i, n, o))
        case _:
            return False


# ---------------------------------------------------------------------------
# Expressions

Span = tuple[int, int]  # (line, column), 1-based


@dataclass(eq=True)
class Expr:
    __hash__ = None  # type: ignore[assignment]


def _span_field():
    return field(default=None, compare=False, repr=False)


@dataclass(eq=True)
class IntLit(Expr):
    value: int
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class BoolLit(Expr):
    value: bool
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class StrLit(Expr):
    value: str
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Var(Expr):
    name: str
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Abs(Expr):
    """fun (param [: param_ty]) -> body"""

    param: str
    param_ty: Optional[SourceType]
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class App(Expr):
    fn: Expr
    arg: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Control(Expr):
    """control (k [: k_ty] [@ trail_witness]) -> body

    trail_witness, when present, names the trail type produced by
    consing the continuation's invocation context onto its pending
    trail (the existential in the Control typing rule).
    """

    k: str
    k_ty: Optional[SourceType]
    trail_witness: Optional[TrailType]
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Prompt(Expr):
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Plus(Expr):
    left: Expr
    right: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Mul(Expr):
    left: Expr
    right: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Is0(Expr):
    arg: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class B2S(Expr):
    arg: Expr
    span: Optional[Span] = _span_field()


@dataclass(eq=True)
class Seq(Expr):
    """left; right — sugar for (fun (_) -> right) left."""

    left: Expr
    right: Expr
    span: Optional[Span] = _span_field()


def children(e: Expr) -> tuple[Expr, ...]:
    match e:
        case IntLit() | BoolLit() | StrLit() | Var():
            return ()
        case Abs(_, _, body) | Control(_, _, _, body) | Prompt(body):
            return (body,)
        case App(a, b) | Plus(a, b) | Mul(a, b) | Seq(a, b):
            return (a, b)
        case Is0(a) | B2S(a):
            return (a,)
    raise ValueError(f"not an expression: {e!r}")


def expr_size(e: Expr) -> int:
    """Node count (annotations do not count)."""
    return 1 + sum(expr_size(c) for c in children(e))


def is_value(e: Expr) -> bool:
    return isinstance(e, (IntLit, BoolLit, StrLit, Abs))


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case Var(x):
            return frozenset((x,))
        case Abs(x, _, body):
            return free_vars(body) - {x}
        case Control(k, _, _, body):
            return free_vars(body) - {k}
        case _:
            out: frozenset[str] = frozenset()
            for c in children(e):
                out |= free_vars(c)
            return out


def all_names(e: Expr) -> set[str]:
    """Every variable name occurring in e, bound or free."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        match n:
            case Var(x):
                out.add(x)
            case Abs(x, _, _):
                out.add(x)
            case Control(k, _, _, _):
                out.add(k)
        stack.extend(children(n))
    return out


class NameSupply:
    """Fresh, parseable variable names: base, base_1, base_2, ..."""

    def __init__(self, used: Optional[set[str]] = None):
        self.used = set(used or ())
        self._counter = 0

    def fresh(self, base: str = "x") -> str:
        if base not in self.used:
            self.used.add(base)
            return base
        while True:
            self._counter += 1
            cand = f"{base}_{self._counter}"
            if cand not in self.used:
                self.used.add(cand)
                return cand


def subst(e: Expr, name: str, value: Expr, supply: Optional[NameSupply] = None) -> Expr:
    """Capture-avoiding e[name := value]."""
    if supply is None:
        supply = NameSupply(all_names(e) | set(free_vars(value)))
    fv_value = free_vars(value)

    def go(e: Expr) -> Expr:
        if name not in free_vars(e):
            return e
        match e:
            case Var(x):
                return value if x == name else e
            case Abs(x, ty, body):
                if x == name:
                    return e
                if x in fv_value:
                    x2 = supply.fresh(x)
                    body = subst(body, x, Var(x2), supply)
                    return Abs(x2, ty, go(body))
                return Abs(x, ty, go(body))
            case Control(k, ty, w, body):
                if k == name:
                    return e
                if k in fv_value:
                    k2 = supply.fresh(k)
                    body = subst(body, k, Var(k2), supply)
                    return Control(k2, ty, w, go(body))
                return Control(k, ty, w, go(body))
            case App(f, a):
                return App(go(f), go(a))
            case Prompt(b):
                return Prompt(go(b))
            case Plus(a, b):
                return Plus(go(a), go(b))
            case Mul(a, b):
                return Mul(go(a), go(b))
            case Is0(a):
                return Is0(go(a))
            case B2S(a):
                return B2S(go(a))
            case Seq(a, b):
                return Seq(go(a), go(b))
        raise ValueError(f"not an expression: {e!r}")

    return go(e)


def desugar(e: Expr) -> Expr:
    """Eliminate Seq: e1; e2 becomes (fun (_) -> e2) e1."""
    match e:
        case Seq(l, r):
            return App(Abs("_", None, desugar(r)), desugar(l))
        case IntLit() | BoolLit() | StrLit() | Var():
            return e
        case Abs(x, ty, body):
            return Abs(x, ty, desugar(body), span=e.span)
        case Control(k, ty, w, body):
            return Control(k, ty, w, desugar(body), span=e.span)
        case Prompt(b):
            return Prompt(desugar(b), span=e.span)
        case App(f, a):
            return App(desugar(f), desugar(a), span=e.span)
        case Plus(a, b):
            return Plus(desugar(a), desugar(b), span=e.span)
        case Mul(a, b):
            return Mul(desugar(a), desugar(b), span=e.span)
        case Is0(a):
            return Is0(desugar(a), span=e.span)
        case B2S(a):
            return B2S(desugar(a), span=e.span)
    raise ValueError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Printer

_PREC_SEQ = 0
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_PREFIX = 3
_PREC_APP = 4
_PREC_ATOM = 5


def print_trail(mu: TrailType) -> str:
    match mu:
        case EmptyTrail():
            return "*"
        case TrailStep(i, n, o):
            return f"{{{print_type(i)} => {print_trail(n)} => {print_type(o)}}}"
    raise ValueError(f"not a ground trail type: {mu!r}")


def print_type(t: SourceType) -> str:
    match t:
        case Base(name):
            return name
        case PureArrow(d, c):
            return f"({print_type(d)} => {print_type(c)})"
        case ImpureArrow(d, c, mt, a, it, b):
            eff = f"[{print_trail(mt)}, {print_type(a)}, {print_trail(it)}, {print_type(b)}]"
            return f"({print_type(d)} -> {print_type(c)} @ {eff})"
    raise ValueError(f"not a ground type: {t!r}")


def _str_lit(s: str) -> str:
    return '"' + s.replace('"', '\\"') + '"'


def print_expr(e: Expr) -> str:
    return _print(e, _PREC_SEQ)


def _print(e: Expr, prec: int) -> str:
    def wrap(level: int, s: str) -> str:
        return f"({s})" if prec > level else s

    match e:
        case IntLit(n):
            return str(n)
        case BoolLit(b):
            return "true" if b else "false"
        case StrLit(s):
            return _str_lit(s)
        case Var(x):
            return x
        case Abs(x, ty, body):
            ann = f" : {print_type(ty)}" if ty is not None else ""
            return wrap(_PREC_SEQ, f"fun ({x}{ann}) -> {_print(body, _PREC_SEQ)}")
        case Control(k, ty, w, body):
            ann = f" : {print_type(ty)}" if ty is not None else ""
            wit = f" @ {print_trail(w)}" if w is not None else ""
            return wrap(_PREC_SEQ, f"control ({k}{ann}{wit}) -> {_print(body, _PREC_SEQ)}")
        case Prompt(b):
            return f"prompt {{ {_print(b, _PREC_SEQ)} }}"
        case Seq(l, r):
            return wrap(_PREC_SEQ, f"{_print(l, _PREC_ADD)}; {_print(r, _PREC_SEQ)}")
        case Plus(l, r):
            return wrap(_PREC_ADD, f"{_print(l, _PREC_ADD)} + {_print(r, _PREC_MUL)}")
        case Mul(l, r):
            return wrap(_PREC_MUL, f"{_print(l, _PREC_MUL)} * {_print(r, _PREC_PREFIX)}")
        case Is0(a):
            return wrap(_PREC_PREFIX, f"is0 {_print(a, _PREC_PREFIX)}")
        case B2S(a):
            return wrap(_PREC_PREFIX, f"b2s {_print(a, _PREC_PREFIX)}")
        case App(f, a):
            return wrap(_PREC_APP, f"{_print(f, _PREC_APP)} {_print(a, _PREC_ATOM)}")
    raise ValueError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Parser


class ParseError(Exception):
    """Malformed concrete syntax, with 1-based line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_KEYWORDS = {
    "fun", "control", "prompt", "shift",
    "is0", "b2s", "true", "false",
    "int", "bool", "string",
}
_TWO_CHAR = ("->", "=>")
_ONE_CHAR = "(){}[]*+;:,@"


@dataclass
class _Token:
    kind: str  # INT STR IDENT KW PUNCT EOF
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Token]:
    toks: list[_Token] = []
    i, line, col = 0, 1, 1

    def err(msg: str) -> ParseError:
        return ParseError(msg, line, col)

    while i < len(src):
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if src.startswith(_TWO_CHAR[0], i) or src.startswith(_TWO_CHAR[1], i):
            toks.append(_Token("PUNCT", src[i : i + 2], start_line, start_col))
            i += 2
            col += 2
            continue
        if c in _ONE_CHAR:
            toks.append(_Token("PUNCT", c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c.isdigit():
            j = i
            while j < len(src) and src[j].isdigit():
                j += 1
            toks.append(_Token("INT", src[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c == '"':
            j = i + 1
            buf = []
            while j < len(src) and src[j] != '"':
                if src[j] == "\\" and j + 1 < len(src) and src[j + 1] == '"':
                    buf.append('"')
                    j += 2
                elif src[j] == "\n":
                    raise err("unterminated string literal")
                else:
                    buf.append(src[j])
                    j += 1
            if j >= len(src):
                raise err("unterminated string literal")
            toks.append(_Token("STR", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < len(src) and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            kind = "KW" if word in _KEYWORDS else "IDENT"
            toks.append(_Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        raise err(f"unexpected character {c!r}")
    toks.append(_Token("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list[_Token], allow_shift: bool, simplified_shift: bool):
        self.toks = toks
        self.pos = 0
        self.allow_shift = allow_shift
        self.simplified_shift = simplified_shift

    # -- token plumbing

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def take(self) -> _Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at_punct(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "PUNCT" and t.text == text

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "KW" and t.text == word

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, found {t.text or t.kind!r}", t.line, t.col)
        return self.take()

    def error(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    # -- expressions, loosest to tightest

    def parse_program(self) -> Expr:
        e = self.parse_seq()
        t = self.peek()
        if t.kind != "EOF":
            raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
        return e

    def parse_seq(self) -> Expr:
        left = self.parse_add()
        if self.at_punct(";"):
            t = self.take()
            right = self.parse_seq()
            return Seq(left, right, span=(t.line, t.col))
        return left

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while self.at_punct("+"):
            t = self.take()
            e = Plus(e, self.parse_mul(), span=(t.line, t.col))
        return e

    def parse_mul(self) -> Expr:
        e = self.parse_app()
        while self.at_punct("*"):
            t = self.take()
            e = Mul(e, self.parse_app(), span=(t.line, t.col))
        return e

    def _at_operand(self) -> bool:
        t = self.peek()
        if t.kind in ("INT", "STR", "IDENT"):
            return True
        if t.kind == "KW" and t.text in (
            "fun", "control", "prompt", "shift", "is0", "b2s", "true", "false",
        ):
            return t.text != "shift" or self.allow_shift
        return t.kind == "PUNCT" and t.text == "("

    def parse_app(self) -> Expr:
        e = self.parse_prefix()
        while self._at_operand():
            t = self.peek()
            e = App(e, self.parse_prefix(), span=(t.line, t.col))
        return e

    def parse_prefix(self) -> Expr:
        t = self.peek()
        if t.kind == "KW" and t.text == "is0":
            self.take()
            return Is0(self.parse_prefix(), span=(t.line, t.col))
        if t.kind == "KW" and t.text == "b2s":
            self.take()
            return B2S(self.parse_prefix(), span=(t.line, t.col))
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        t = self.peek()
        span = (t.line, t.col)
        if t.kind == "INT":
            self.take()
            return IntLit(int(t.text), span=span)
        if t.kind == "STR":
            self.take()
            return StrLit(t.text, span=span)
        if t.kind == "IDENT":
            self.take()
            return Var(t.text, span=span)
        if t.kind == "KW":
            if t.text == "true":
                self.take()
                return BoolLit(True, span=span)
            if t.text == "false":
                self.take()
                return BoolLit(False, span=span)
            if t.text == "prompt":
                self.take()
                self.expect("PUNCT", "{")
                body = self.parse_seq()
                self.expect("PUNCT", "}")
                return Prompt(body, span=span)
            if t.text == "fun":
                self.take()
                name, ty, _ = self.parse_binder(allow_witness=False)
                self.expect("PUNCT", "->")
                return Abs(name, ty, self.parse_seq(), span=span)
            if t.text == "control":
                self.take()
                name, ty, wit = self.parse_binder(allow_witness=True)
                self.expect("PUNCT", "->")
                return Control(name, ty, wit, self.parse_seq(), span=span)
            if t.text == "shift":
                if not self.allow_shift:
                    raise self.error("'shift' is only accepted by the shift-desugar pipeline")
                self.take()
                name, ty, _ = self.parse_binder(allow_witness=False)
                self.expect("PUNCT", "->")
                body = self.parse_seq()
                from .finegrained import shift_encode  # local import: avoids a cycle

                return shift_encode(name, body, simplified=self.simplified_shift, cont_ty=ty)
        if self.at_punct("("):
            self.take()
            e = self.parse_seq()
            self.expect("PUNCT", ")")
            return e
        raise self.error(f"expected an expression, found {t.text or t.kind!r}")

    def parse_binder(self, allow_witness: bool):
        self.expect("PUNCT", "(")
        name = None
        t = self.peek()
        if t.kind == "IDENT":
            name = self.take().text
        else:
            raise self.error("expected a variable name")
        ty = None
        wit = None
        if self.at_punct(":"):
            self.take()
            ty = self.parse_type()
        if allow_witness and self.at_punct("@"):
            self.take()
            wit = self.parse_trail()
        self.expect("PUNCT", ")")
        return name, ty, wit

    # -- types

    def parse_type(self) -> SourceType:
        t = self.peek()
        if t.kind == "KW" and t.text in ("int", "bool", "string"):
            self.take()
            return Base(t.text)
        if self.at_punct("("):
            self.take()
            dom = self.parse_type()
            if self.at_punct("=>"):
                self.take()
                cod = self.parse_type()
                self.expect("PUNCT", ")")
                return PureArrow(dom, cod)
            self.expect("PUNCT", "->")
            cod = self.parse_type()
            self.expect("PUNCT", "@")
            self.expect("PUNCT", "[")
            mt = self.parse_trail()
            self.expect("PUNCT", ",")
            a = self.parse_type()
            self.expect("PUNCT", ",")
            it = self.parse_trail()
            self.expect("PUNCT", ",")
            b = self.parse_type()
            self.expect("PUNCT", "]")
            self.expect("PUNCT", ")")
            return ImpureArrow(dom, cod, mt, a, it, b)
        raise self.error(f"expected a type, found {t.text or t.kind!r}")

    def parse_trail(self) -> TrailType:
        t = self.peek()
        if self.at_punct("*"):
            self.take()
            return EMPTY
        if self.at_punct("{"):
            self.take()
            i = self.parse_type()
            self.expect("PUNCT", "=>")
            n = self.parse_trail()
            self.expect("PUNCT", "=>")
            o = self.parse_type()
            self.expect("PUNCT", "}")
            return TrailStep(i, n, o)
        raise self.error(f"expected a trail type, found {t.text or t.kind!r}")


def parse(text: str, allow_shift: bool = False, simplified_shift: bool = False) -> Expr:
    """Parse a program. ``allow_shift`` admits the extended ``shift``
    form, which desugars to its control/prompt encoding at parse time."""
    return _Parser(_tokenize(text), allow_shift, simplified_shift).parse_program()


def parse_type(text: str) -> SourceType:
    p = _Parser(_tokenize(text), False, False)
    ty = p.parse_type()
    t = p.peek()
    if t.kind != "EOF":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return ty


def parse_trail(text: str) -> TrailType:
    p = _Parser(_tokenize(text), False, False)
    mu = p.parse_trail()
    t = p.peek()
    if t.kind != "EOF":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return mu


def iter_subexprs(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from iter_subexprs(c)
