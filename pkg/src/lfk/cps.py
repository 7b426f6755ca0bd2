"""The CPS target calculus and the full trail-passing translation.

The target is a call-by-value lambda calculus with a unit value for
the empty trail and a case construct for inspecting trails.  The three
combinators — the identity continuation ``k_id``, trail append ``@``
and context cons ``::`` — appear in terms as named references that the
evaluator unfolds on demand (``::`` is recursive).  The type checker
treats them as primitives whose admissible instances are exactly the
ones licensed by the ``id-cont-type`` and ``compatible`` relations.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .syntax import (
    Abs,
    App,
    B2S,
    Base,
    BoolLit,
    Control,
    EmptyTrail,
    Expr,
    ImpureArrow,
    IntLit,
    Is0,
    Mul,
    NameSupply,
    Plus,
    Prompt,
    PureArrow,
    Seq,
    SourceType,
    StrLit,
    TrailStep,
    TrailType,
    Var,
    all_names,
)
from .typecheck import Judgment, TypedExpr


# ---------------------------------------------------------------------------
# Types


class CType:
    __hash__ = object.__hash__


@dataclass(frozen=True)
class CBase(CType):
    name: str


@dataclass(frozen=True)
class CArrow(CType):
    dom: CType
    cod: CType


@dataclass(frozen=True)
class CEmptyTrail(CType):
    """The type of the unit value (the empty trail)."""


C_INT = CBase("int")
C_BOOL = CBase("bool")
C_STRING = CBase("string")
C_UNIT = CEmptyTrail()


def cps_type(t: SourceType) -> CType:
    """Image of an expression type."""
    match t:
        case Base(name):
            return CBase(name)
        case PureArrow(d, c):
            return CArrow(cps_type(d), cps_type(c))
        case ImpureArrow(d, c, mt, a, it, b):
            return CArrow(
                cps_type(d),
                CArrow(
                    CArrow(cps_type(c), CArrow(cps_trail(mt), cps_type(a))),
                    CArrow(cps_trail(it), cps_type(b)),
                ),
            )
    raise ValueError(f"not a ground type: {t!r}")


def cps_trail(mu: TrailType) -> CType:
    """Image of a trail type: the empty trail keeps its own type and a
    step becomes the function type of the composed context."""
    match mu:
        case EmptyTrail():
            return C_UNIT
        case TrailStep(i, n, o):
            return CArrow(cps_type(i), CArrow(cps_trail(n), cps_type(o)))
    raise ValueError(f"not a ground trail type: {mu!r}")


def cps_judgment_type(j: Judgment) -> CType:
    """(ty -> final_trail -> final_ans) -> init_trail -> init_ans."""
    return CArrow(
        CArrow(cps_type(j.ty), CArrow(cps_trail(j.final_trail), cps_type(j.final_ans))),
        CArrow(cps_trail(j.init_trail), cps_type(j.init_ans)),
    )


def print_ctype(t: CType) -> str:
    match t:
        case CBase(name):
            return name
        case CEmptyTrail():
            return "·"
        case CArrow(d, c):
            ds = print_ctype(d)
            if isinstance(d, CArrow):
                ds = f"({ds})"
            return f"{ds} → {print_ctype(c)}"
    raise ValueError(f"not a type: {t!r}")


# ---------------------------------------------------------------------------
# Terms


@dataclass(eq=True)
class CExpr:
    __hash__ = None  # type: ignore[assignment]


def _ann_field():
    return field(default=None, compare=False, repr=False)


@dataclass(eq=True)
class CConst(CExpr):
    value: Union[int, bool, str]


@dataclass(eq=True)
class CVar(CExpr):
    name: str


@dataclass(eq=True)
class CAbs(CExpr):
    param: str
    body: CExpr
    ann: Optional[CType] = _ann_field()


@dataclass(eq=True)
class CApp(CExpr):
    fn: CExpr
    arg: CExpr


@dataclass(eq=True)
class CUnit(CExpr):
    pass


@dataclass(eq=True)
class CCase(CExpr):
    """case scrut of { () → on_empty ; binder → on_step }"""

    scrut: CExpr
    on_empty: CExpr
    binder: str
    on_step: CExpr


@dataclass(eq=True)
class CPrim(CExpr):
    """Value-level primitive application: + * is0 b2s."""

    op: str
    args: tuple[CExpr, ...]


@dataclass(eq=True)
class CComb(CExpr):
    """Reference to one of the combinators k_id, append, cons."""

    name: str
    ann: Optional[CType] = _ann_field()


def k_id() -> CExpr:
    """λv.λt. case t of { () → v ; k → k v () }"""
    return CAbs(
        "v",
        CAbs(
            "t",
            CCase(
                CVar("t"),
                CVar("v"),
                "k",
                CApp(CApp(CVar("k"), CVar("v")), CUnit()),
            ),
        ),
    )


def append() -> CExpr:
    """λt.λt2. case t of { () → t2 ; k → k :: t2 }"""
    return CAbs(
        "t",
        CAbs(
            "t2",
            CCase(
                CVar("t"),
                CVar("t2"),
                "k",
                CApp(CApp(CComb("cons"), CVar("k")), CVar("t2")),
            ),
        ),
    )


def cons() -> CExpr:
    """λk.λt. case t of { () → k ; k2 → λv.λt2. k v (k2 :: t2) }

    Recursive through the self-reference; the evaluator unfolds it on
    demand, bounded by fuel.
    """
    return CAbs(
        "k",
        CAbs(
            "t",
            CCase(
                CVar("t"),
                CVar("k"),
                "k2",
                CAbs(
                    "v",
                    CAbs(
                        "t2",
                        CApp(
                            CApp(CVar("k"), CVar("v")),
                            CApp(CApp(CComb("cons"), CVar("k2")), CVar("t2")),
                        ),
                    ),
                ),
            ),
        ),
    )


_COMB_DEFS = {"k_id": k_id, "append": append, "cons": cons}


def cchildren(e: CExpr) -> tuple[CExpr, ...]:
    match e:
        case CConst(_) | CVar(_) | CUnit() | CComb(_):
            return ()
        case CAbs(_, body):
            return (body,)
        case CApp(f, a):
            return (f, a)
        case CCase(s, e1, _, e2):
            return (s, e1, e2)
        case CPrim(_, args):
            return args
    raise ValueError(f"not a term: {e!r}")


def csize(e: CExpr) -> int:
    """Node count; annotations do not count."""
    return 1 + sum(csize(c) for c in cchildren(e))


def strip_annotations(e: CExpr) -> CExpr:
    match e:
        case CConst(_) | CVar(_) | CUnit():
            return e
        case CComb(name):
            return CComb(name)
        case CAbs(x, body):
            return CAbs(x, strip_annotations(body))
        case CApp(f, a):
            return CApp(strip_annotations(f), strip_annotations(a))
        case CCase(s, e1, k, e2):
            return CCase(strip_annotations(s), strip_annotations(e1), k, strip_annotations(e2))
        case CPrim(op, args):
            return CPrim(op, tuple(strip_annotations(a) for a in args))
    raise ValueError(f"not a term: {e!r}")


def alpha_eq(a: CExpr, b: CExpr) -> bool:
    def go(a: CExpr, b: CExpr, ra: dict[str, str], rb: dict[str, str], n: int) -> bool:
        match (a, b):
            case (CConst(x), CConst(y)):
                return x == y and type(x) is type(y)
            case (CUnit(), CUnit()):
                return True
            case (CComb(x), CComb(y)):
                return x == y
            case (CVar(x), CVar(y)):
                return ra.get(x, x) == rb.get(y, y)
            case (CAbs(x, bx), CAbs(y, by)):
                fresh = f"#{n}"
                return go(bx, by, {**ra, x: fresh}, {**rb, y: fresh}, n + 1)
            case (CApp(f1, a1), CApp(f2, a2)):
                return go(f1, f2, ra, rb, n) and go(a1, a2, ra, rb, n)
            case (CCase(s1, e1, k1, t1), CCase(s2, e2, k2, t2)):
                fresh = f"#{n}"
                return (
                    go(s1, s2, ra, rb, n)
                    and go(e1, e2, ra, rb, n)
                    and go(t1, t2, {**ra, k1: fresh}, {**rb, k2: fresh}, n + 1)
                )
            case (CPrim(o1, a1), CPrim(o2, a2)):
                return (
                    o1 == o2
                    and len(a1) == len(a2)
                    and all(go(x, y, ra, rb, n) for x, y in zip(a1, a2))
                )
        return False

    return go(a, b, {}, {}, 0)


def c_all_names(e: CExpr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        match n:
            case CVar(x):
                out.add(x)
            case CAbs(x, _):
                out.add(x)
            case CCase(_, _, k, _):
                out.add(k)
        stack.extend(cchildren(n))
    return out


# ---------------------------------------------------------------------------
# Printer

_P_LAM = 0
_P_ADD = 1
_P_MUL = 2
_P_PRE = 3
_P_APP = 4
_P_ATOM = 5


def print_cexpr(e: CExpr) -> str:
    return _cprint(e, _P_LAM)


def _cprint(e: CExpr, prec: int) -> str:
    def wrap(level: int, s: str) -> str:
        return f"({s})" if prec > level else s

    match e:
        case CConst(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, str):
                return '"' + v.replace('"', '\\"') + '"'
            return str(v)
        case CVar(x):
            return x
        case CUnit():
            return "()"
        case CComb(name):
            return name
        case CAbs(x, body):
            return wrap(_P_LAM, f"λ{x}. {_cprint(body, _P_LAM)}")
        case CCase(s, e1, k, e2):
            return (
                f"case {_cprint(s, _P_APP)} of {{ () → {_cprint(e1, _P_LAM)} ; "
                f"{k} → {_cprint(e2, _P_LAM)} }}"
            )
        case CApp(f, a):
            return wrap(_P_APP, f"{_cprint(f, _P_APP)} {_cprint(a, _P_ATOM)}")
        case CPrim("+", (a, b)):
            return wrap(_P_ADD, f"{_cprint(a, _P_ADD)} + {_cprint(b, _P_MUL)}")
        case CPrim("*", (a, b)):
            return wrap(_P_MUL, f"{_cprint(a, _P_MUL)} * {_cprint(b, _P_PRE)}")
        case CPrim("is0", (a,)):
            return wrap(_P_PRE, f"is0 {_cprint(a, _P_PRE)}")
        case CPrim("b2s", (a,)):
            return wrap(_P_PRE, f"b2s {_cprint(a, _P_PRE)}")
    raise ValueError(f"not a term: {e!r}")


# ---------------------------------------------------------------------------
# Values and the evaluator


class CValue:
    pass


@dataclass(frozen=True)
class CIntV(CValue):
    value: int


@dataclass(frozen=True)
class CBoolV(CValue):
    value: bool


@dataclass(frozen=True)
class CStrV(CValue):
    value: str


@dataclass(frozen=True)
class CUnitV(CValue):
    pass


@dataclass(frozen=True)
class CClosV(CValue):
    param: str
    body: CExpr

    def __eq__(self, other):
        return (
            isinstance(other, CClosV)
            and self.param == other.param
            and self.body == other.body
        )


def c_value_of(e: CExpr) -> Optional[CValue]:
    match e:
        case CConst(v):
            if isinstance(v, bool):
                return CBoolV(v)
            if isinstance(v, int):
                return CIntV(v)
            return CStrV(v)
        case CUnit():
            return CUnitV()
        case CAbs(x, body):
            return CClosV(x, body)
    return None


def c_is_value(e: CExpr) -> bool:
    return isinstance(e, (CConst, CUnit, CAbs))


def print_cvalue(v: CValue) -> str:
    match v:
        case CIntV(n):
            return str(n)
        case CBoolV(b):
            return "true" if b else "false"
        case CStrV(s):
            return '"' + s.replace('"', '\\"') + '"'
        case CUnitV():
            return "()"
        case CClosV(x, _):
            return f"<λ{x}>"
    raise ValueError(f"not a value: {v!r}")


def c_base_payload(v: CValue) -> Union[int, bool, str, None]:
    match v:
        case CIntV(n):
            return n
        case CBoolV(b):
            return b
        case CStrV(s):
            return s
    return None


@dataclass(frozen=True)
class CEvalResult:
    value: CValue
    steps: int


@dataclass(frozen=True)
class CEvalStuck:
    reason: str
    redex: CExpr
    steps: int


@dataclass(frozen=True)
class CEvalFuelExhausted:
    steps: int


@dataclass(frozen=True)
class CEvalTimeout:
    steps: int
    seconds: float


CEvalOutcome = Union[CEvalResult, CEvalStuck, CEvalFuelExhausted, CEvalTimeout]


@dataclass(frozen=True)
class _KAppFn:
    arg: CExpr


@dataclass(frozen=True)
class _KAppArg:
    fn: CExpr


@dataclass(frozen=True)
class _KCase:
    on_empty: CExpr
    binder: str
    on_step: CExpr


@dataclass(frozen=True)
class _KPrim:
    op: str
    done: tuple[CExpr, ...]
    rest: tuple[CExpr, ...]


class _CMachine:
    def __init__(self, e: CExpr):
        if sys.getrecursionlimit() < 20000:
            sys.setrecursionlimit(20000)
        self.focus = e
        self.stack: list = []
        self.supply = NameSupply(c_all_names(e))
        self._fv: dict[int, tuple[CExpr, frozenset[str]]] = {}
        self._pending: Optional[tuple] = None

    def fv(self, e: CExpr) -> frozenset[str]:
        hit = self._fv.get(id(e))
        if hit is not None and hit[0] is e:
            return hit[1]
        work: list[tuple[CExpr, bool]] = [(e, False)]
        while work:
            node, seen = work.pop()
            hit = self._fv.get(id(node))
            if hit is not None and hit[0] is node:
                continue
            if not seen:
                work.append((node, True))
                for c in cchildren(node):
                    work.append((c, False))
                continue
            match node:
                case CVar(x):
                    out = frozenset((x,))
                case CConst(_) | CUnit() | CComb(_):
                    out = frozenset()
                case CAbs(x, body):
                    out = self._fv[id(body)][1] - {x}
                case CApp(f, a):
                    out = self._fv[id(f)][1] | self._fv[id(a)][1]
                case CCase(s, e1, k, e2):
                    out = (
                        self._fv[id(s)][1]
                        | self._fv[id(e1)][1]
                        | (self._fv[id(e2)][1] - {k})
                    )
                case CPrim(_, args):
                    out = frozenset()
                    for a in args:
                        out |= self._fv[id(a)][1]
                case _:
                    raise ValueError(f"not a term: {node!r}")
            self._fv[id(node)] = (node, out)
        return self._fv[id(e)][1]

    def subst(self, e: CExpr, name: str, value: CExpr) -> CExpr:
        fv_value = self.fv(value)

        def go(e: CExpr) -> CExpr:
            if name not in self.fv(e):
                return e
            match e:
                case CVar(_):
                    return value
                case CAbs(x, body):
                    if x in fv_value:
                        x2 = self.supply.fresh(x)
                        body = self.subst(body, x, CVar(x2))
                        return CAbs(x2, go(body), ann=e.ann)
                    return CAbs(x, go(body), ann=e.ann)
                case CApp(f, a):
                    return CApp(go(f), go(a))
                case CCase(s, e1, k, e2):
                    s2, e12 = go(s), go(e1)
                    if name == k:
                        return CCase(s2, e12, k, e2)
                    if k in fv_value and name in self.fv(e2):
                        k2 = self.supply.fresh(k)
                        e2 = self.subst(e2, k, CVar(k2))
                        return CCase(s2, e12, k2, go(e2))
                    return CCase(s2, e12, k, go(e2))
                case CPrim(op, args):
                    return CPrim(op, tuple(go(a) for a in args))
            raise ValueError(f"cannot substitute into {e!r}")

        return go(e)

    def settle(self) -> str:
        while True:
            f = self.focus
            if c_is_value(f):
                if not self.stack:
                    self._pending = ("done", c_value_of(f))
                    return "done"
                top = self.stack[-1]
                match top:
                    case _KAppFn(arg):
                        self.stack[-1] = _KAppArg(f)
                        self.focus = arg
                    case _KAppArg(fn):
                        if isinstance(fn, CAbs):
                            self._pending = ("beta", fn, f)
                            return "redex"
                        self._pending = ("stuck", "application of a non-function value", CApp(fn, f))
                        return "stuck"
                    case _KCase(e1, k, e2):
                        self._pending = ("case", f, e1, k, e2)
                        return "redex"
                    case _KPrim(op, done, rest):
                        done = done + (f,)
                        if rest:
                            self.stack[-1] = _KPrim(op, done, rest[1:])
                            self.focus = rest[0]
                        else:
                            result = _apply_prim(op, done)
                            if result is None:
                                self._pending = ("stuck", f"{op} on ill-typed operands", CPrim(op, done))
                                return "stuck"
                            self._pending = ("prim", result)
                            return "redex"
                continue
            match f:
                case CApp(fn, arg):
                    self.stack.append(_KAppFn(arg))
                    self.focus = fn
                case CCase(s, e1, k, e2):
                    self.stack.append(_KCase(e1, k, e2))
                    self.focus = s
                case CPrim(op, args):
                    self.stack.append(_KPrim(op, (), args[1:]))
                    self.focus = args[0]
                case CComb(name):
                    self._pending = ("delta", name)
                    return "redex"
                case CVar(x):
                    self._pending = ("stuck", f"free variable {x}", f)
                    return "stuck"
                case _:
                    raise ValueError(f"not a term: {f!r}")

    def fire(self):
        tag = self._pending[0]
        if tag == "beta":
            _, fn, arg = self._pending
            self.focus = self.subst(fn.body, fn.param, arg)
            self.stack.pop()
        elif tag == "prim":
            self.focus = self._pending[1]
            self.stack.pop()
        elif tag == "case":
            _, scrut, e1, k, e2 = self._pending
            if isinstance(scrut, CUnit):
                self.focus = e1
            else:
                self.focus = self.subst(e2, k, scrut)
            self.stack.pop()
        elif tag == "delta":
            self.focus = _COMB_DEFS[self._pending[1]]()
        else:
            raise RuntimeError(f"no pending reduction: {self._pending!r}")
        self._pending = None

    def rebuild(self) -> CExpr:
        e = self.focus
        for fr in reversed(self.stack):
            match fr:
                case _KAppFn(arg):
                    e = CApp(e, arg)
                case _KAppArg(fn):
                    e = CApp(fn, e)
                case _KCase(e1, k, e2):
                    e = CCase(e, e1, k, e2)
                case _KPrim(op, done, rest):
                    e = CPrim(op, done + (e,) + rest)
        return e


def _apply_prim(op: str, args: tuple[CExpr, ...]) -> Optional[CExpr]:
    match (op, args):
        case ("+", (CConst(a), CConst(b))) if isinstance(a, int) and isinstance(b, int) \
                and not isinstance(a, bool) and not isinstance(b, bool):
            return CConst(a + b)
        case ("*", (CConst(a), CConst(b))) if isinstance(a, int) and isinstance(b, int) \
                and not isinstance(a, bool) and not isinstance(b, bool):
            return CConst(a * b)
        case ("is0", (CConst(a),)) if isinstance(a, int) and not isinstance(a, bool):
            return CConst(a == 0)
        case ("b2s", (CConst(a),)) if isinstance(a, bool):
            return CConst("true" if a else "false")
    return None


def eval_c(
    e: CExpr, fuel: Optional[int] = None, watchdog: Optional[float] = None
) -> CEvalOutcome:
    """Call-by-value left-to-right evaluation of a closed term."""
    m = _CMachine(e)
    steps = 0
    start = time.monotonic()
    deadline = start + watchdog if watchdog is not None else None
    while True:
        status = m.settle()
        if status == "done":
            return CEvalResult(m._pending[1], steps)
        if status == "stuck":
            return CEvalStuck(m._pending[1], m._pending[2], steps)
        if fuel is not None and steps >= fuel:
            return CEvalFuelExhausted(steps)
        if deadline is not None and steps % 256 == 0 and time.monotonic() > deadline:
            return CEvalTimeout(steps, time.monotonic() - start)
        m.fire()
        steps += 1


# ---------------------------------------------------------------------------
# The full translation


def cps_expr(e: Expr) -> CExpr:
    """Untyped full translation: every expression becomes a function of
    a continuation and a trail."""
    supply = NameSupply(all_names(e))
    return _CpsBuilder(supply).expr(e)


class _CpsBuilder:
    def __init__(self, supply: NameSupply):
        self.supply = supply

    def value(self, v: Expr) -> CExpr:
        match v:
            case IntLit(n):
                return CConst(n)
            case BoolLit(b):
                return CConst(b)
            case StrLit(s):
                return CConst(s)
            case Var(x):
                return CVar(x)
            case Abs(x, _, body):
                k = self.supply.fresh("k")
                t = self.supply.fresh("t")
                return CAbs(
                    x,
                    CAbs(k, CAbs(t, CApp(CApp(self.expr(body), CVar(k)), CVar(t)))),
                )
        raise ValueError(f"not a value: {v!r}")

    def expr(self, e: Expr) -> CExpr:
        k = self.supply.fresh("k")
        t = self.supply.fresh("t")
        kv, tv = CVar(k), CVar(t)
        match e:
            case IntLit() | BoolLit() | StrLit() | Var() | Abs():
                body = CApp(CApp(kv, self.value(e)), tv)
            case App(f, a):
                v1 = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                v2 = self.supply.fresh("v")
                t2 = self.supply.fresh("t")
                inner = CAbs(
                    v2, CAbs(t2, CApp(CApp(CApp(CVar(v1), CVar(v2)), kv), CVar(t2)))
                )
                mid = CAbs(v1, CAbs(t1, CApp(CApp(self.expr(a), inner), CVar(t1))))
                body = CApp(CApp(self.expr(f), mid), tv)
            case Plus(l, r) | Mul(l, r):
                op = "+" if isinstance(e, Plus) else "*"
                v1 = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                v2 = self.supply.fresh("v")
                t2 = self.supply.fresh("t")
                inner = CAbs(
                    v2,
                    CAbs(t2, CApp(CApp(kv, CPrim(op, (CVar(v1), CVar(v2)))), CVar(t2))),
                )
                mid = CAbs(v1, CAbs(t1, CApp(CApp(self.expr(r), inner), CVar(t1))))
                body = CApp(CApp(self.expr(l), mid), tv)
            case Is0(a) | B2S(a):
                op = "is0" if isinstance(e, Is0) else "b2s"
                v = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                inner = CAbs(v, CAbs(t1, CApp(CApp(kv, CPrim(op, (CVar(v),))), CVar(t1))))
                body = CApp(CApp(self.expr(a), inner), tv)
            case Prompt(b):
                run = CApp(CApp(self.expr(b), CComb("k_id")), CUnit())
                body = CApp(CApp(kv, run), tv)
            case Control(c, _, _, cbody):
                x = self.supply.fresh("x")
                k2 = self.supply.fresh("k")
                t2 = self.supply.fresh("t")
                extended = CApp(
                    CApp(CComb("append"), tv),
                    CApp(CApp(CComb("cons"), CVar(k2)), CVar(t2)),
                )
                repl = CAbs(x, CAbs(k2, CAbs(t2, CApp(CApp(kv, CVar(x)), extended))))
                translated = self.expr(cbody)
                m = _CMachine(translated)  # reuse its capture-avoiding subst
                substituted = m.subst(translated, c, repl)
                body = CApp(CApp(substituted, CComb("k_id")), CUnit())
            case Seq(_, _):
                raise ValueError("CPS translation requires a Seq-free term; desugar first")
            case _:
                raise ValueError(f"not an expression: {e!r}")
        return CAbs(k, CAbs(t, body))


def run_cps(
    e: Expr, fuel: Optional[int] = None, watchdog: Optional[float] = None
) -> CEvalOutcome:
    """Translate, then evaluate against the identity continuation and
    the empty trail."""
    prog = CApp(CApp(cps_expr(e), CComb("k_id")), CUnit())
    return eval_c(prog, fuel=fuel, watchdog=watchdog)


# ---------------------------------------------------------------------------
# Annotated translation (binders carry CTypes derived from the judgments)


def cps_expr_typed(t: TypedExpr) -> CExpr:
    """Full translation with every introduced binder and combinator
    reference annotated from the source typing derivation."""
    supply = NameSupply(all_names(t.expr))
    return _TypedCpsBuilder(supply).expr(t)


def _cont_ctype(ty: SourceType, mu: TrailType, ans: SourceType) -> CType:
    return CArrow(cps_type(ty), CArrow(cps_trail(mu), cps_type(ans)))


class _TypedCpsBuilder:
    def __init__(self, supply: NameSupply):
        self.supply = supply

    def value(self, t: TypedExpr) -> CExpr:
        e = t.expr
        match e:
            case IntLit(n):
                return CConst(n)
            case BoolLit(b):
                return CConst(b)
            case StrLit(s):
                return CConst(s)
            case Var(x):
                return CVar(x)
            case Abs(x, _, _):
                arrow = t.judgment.ty
                assert isinstance(arrow, ImpureArrow)
                k = self.supply.fresh("k")
                tr = self.supply.fresh("t")
                inner = CApp(CApp(self.expr(t.children[0]), CVar(k)), CVar(tr))
                return CAbs(
                    x,
                    CAbs(
                        k,
                        CAbs(tr, inner, ann=cps_trail(arrow.init_trail)),
                        ann=_cont_ctype(arrow.cod, arrow.final_trail, arrow.final_ans),
                    ),
                    ann=cps_type(arrow.dom),
                )
        raise ValueError(f"not a value: {e!r}")

    def expr(self, t: TypedExpr) -> CExpr:
        e, j = t.expr, t.judgment
        k = self.supply.fresh("k")
        tr = self.supply.fresh("t")
        kv, tv = CVar(k), CVar(tr)
        k_ann = _cont_ctype(j.ty, j.final_trail, j.final_ans)
        t_ann = cps_trail(j.init_trail)
        match e:
            case IntLit() | BoolLit() | StrLit() | Var() | Abs():
                body = CApp(CApp(kv, self.value(t)), tv)
            case App(_, _):
                ft, xt = t.children
                arrow = ft.judgment.ty
                assert isinstance(arrow, ImpureArrow)
                v1 = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                v2 = self.supply.fresh("v")
                t2 = self.supply.fresh("t")
                inner = CAbs(
                    v2,
                    CAbs(
                        t2,
                        CApp(CApp(CApp(CVar(v1), CVar(v2)), kv), CVar(t2)),
                        ann=cps_trail(arrow.init_trail),
                    ),
                    ann=cps_type(arrow.dom),
                )
                mid = CAbs(
                    v1,
                    CAbs(
                        t1,
                        CApp(CApp(self.expr(xt), inner), CVar(t1)),
                        ann=cps_trail(ft.judgment.final_trail),
                    ),
                    ann=cps_type(arrow),
                )
                body = CApp(CApp(self.expr(ft), mid), tv)
            case Plus(_, _) | Mul(_, _):
                op = "+" if isinstance(e, Plus) else "*"
                lt, rt = t.children
                v1 = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                v2 = self.supply.fresh("v")
                t2 = self.supply.fresh("t")
                inner = CAbs(
                    v2,
                    CAbs(
                        t2,
                        CApp(CApp(kv, CPrim(op, (CVar(v1), CVar(v2)))), CVar(t2)),
                        ann=cps_trail(rt.judgment.final_trail),
                    ),
                    ann=cps_type(rt.judgment.ty),
                )
                mid = CAbs(
                    v1,
                    CAbs(
                        t1,
                        CApp(CApp(self.expr(rt), inner), CVar(t1)),
                        ann=cps_trail(lt.judgment.final_trail),
                    ),
                    ann=cps_type(lt.judgment.ty),
                )
                body = CApp(CApp(self.expr(lt), mid), tv)
            case Is0(_) | B2S(_):
                op = "is0" if isinstance(e, Is0) else "b2s"
                at = t.children[0]
                v = self.supply.fresh("v")
                t1 = self.supply.fresh("t")
                inner = CAbs(
                    v,
                    CAbs(
                        t1,
                        CApp(CApp(kv, CPrim(op, (CVar(v),))), CVar(t1)),
                        ann=cps_trail(at.judgment.final_trail),
                    ),
                    ann=cps_type(at.judgment.ty),
                )
                body = CApp(CApp(self.expr(at), inner), tv)
            case Prompt(_):
                bt = t.children[0]
                bj = bt.judgment
                kid = CComb("k_id", ann=_cont_ctype(bj.ty, bj.final_trail, bj.final_ans))
                run = CApp(CApp(self.expr(bt), kid), CUnit())
                body = CApp(CApp(kv, run), tv)
            case Control(c, arrow, mu0, _):
                assert isinstance(arrow, ImpureArrow) and mu0 is not None
                bt = t.children[0]
                bj = bt.judgment
                x = self.supply.fresh("x")
                k2 = self.supply.fresh("k")
                t2 = self.supply.fresh("t")
                step = TrailStep(arrow.cod, arrow.final_trail, arrow.final_ans)
                cons_ref = CComb(
                    "cons",
                    ann=CArrow(cps_trail(step), CArrow(cps_trail(arrow.init_trail), cps_trail(mu0))),
                )
                append_ref = CComb(
                    "append",
                    ann=CArrow(
                        cps_trail(j.init_trail),
                        CArrow(cps_trail(mu0), cps_trail(j.final_trail)),
                    ),
                )
                extended = CApp(
                    CApp(append_ref, tv), CApp(CApp(cons_ref, CVar(k2)), CVar(t2))
                )
                repl = CAbs(
                    x,
                    CAbs(
                        k2,
                        CAbs(
                            t2,
                            CApp(CApp(kv, CVar(x)), extended),
                            ann=cps_trail(arrow.init_trail),
                        ),
                        ann=cps_trail(step),
                    ),
                    ann=cps_type(arrow.dom),
                )
                translated = self.expr(bt)
                m = _CMachine(translated)
                substituted = m.subst(translated, c, repl)
                kid = CComb("k_id", ann=_cont_ctype(bj.ty, bj.final_trail, bj.final_ans))
                body = CApp(CApp(substituted, kid), CUnit())
            case _:
                raise ValueError(f"not an expression: {e!r}")
        return CAbs(k, CAbs(tr, body, ann=t_ann), ann=k_ann)


# ---------------------------------------------------------------------------
# Type checking for the target calculus


class CTypeError(Exception):
    def __init__(self, message: str, subterm: Optional[CExpr] = None):
        self.subterm = subterm
        if subterm is not None:
            message = f"{message} in {print_cexpr(subterm)}"
        super().__init__(message)


def id_cont_type_c(a: CType, m: CType, b: CType) -> bool:
    """CType-level mirror of id-cont-type, with the unit type for the
    empty trail and dom -> (next -> cod) for a step."""
    match m:
        case CEmptyTrail():
            return a == b
        case CArrow(a1, CArrow(n, b1)):
            return a == a1 and b == b1 and n == C_UNIT
    return False


def compatible_c(m1: CType, m2: CType, m3: CType) -> bool:
    """CType-level mirror of compatible."""
    if isinstance(m1, CEmptyTrail):
        return m2 == m3
    if isinstance(m2, CEmptyTrail):
        return m1 == m3
    match (m1, m3):
        case (CArrow(a1, CArrow(n1, b1)), CArrow(a3, CArrow(n3, b3))):
            return a1 == a3 and b1 == b3 and compatible_c(m2, n3, n1)
    return False


def _comb_admissible(name: str, ann: CType) -> bool:
    match (name, ann):
        case ("k_id", CArrow(a, CArrow(m, b))):
            return id_cont_type_c(a, m, b)
        case ("append", CArrow(m1, CArrow(m2, m3))):
            return compatible_c(m1, m2, m3)
        case ("cons", CArrow(CArrow(a, CArrow(n, b)) as kty, CArrow(m2, m3))):
            return compatible_c(kty, m2, m3)
    return False


def typecheck_c(env: dict[str, CType], e: CExpr) -> CType:
    """Simply-typed checking; combinators are relation-indexed
    primitives, and any other case analysis is rejected."""
    match e:
        case CConst(v):
            if isinstance(v, bool):
                return C_BOOL
            if isinstance(v, int):
                return C_INT
            return C_STRING
        case CUnit():
            return C_UNIT
        case CVar(x):
            if x not in env:
                raise CTypeError(f"unbound variable {x}", e)
            return env[x]
        case CAbs(x, body, ann):
            if ann is None:
                raise CTypeError("unannotated binder", e)
            return CArrow(ann, typecheck_c({**env, x: ann}, body))
        case CApp(f, a):
            fty = typecheck_c(env, f)
            aty = typecheck_c(env, a)
            if not isinstance(fty, CArrow):
                raise CTypeError(f"applied a non-function of type {print_ctype(fty)}", e)
            if fty.dom != aty:
                raise CTypeError(
                    f"argument type {print_ctype(aty)} does not match {print_ctype(fty.dom)}", e
                )
            return fty.cod
        case CComb(name, ann):
            if ann is None:
                raise CTypeError(f"combinator {name} without a type instance", e)
            if not _comb_admissible(name, ann):
                raise CTypeError(
                    f"combinator {name} not admissible at {print_ctype(ann)}", e
                )
            return ann
        case CPrim(op, args):
            tys = tuple(typecheck_c(env, a) for a in args)
            match (op, tys):
                case ("+", (CBase("int"), CBase("int"))):
                    return C_INT
                case ("*", (CBase("int"), CBase("int"))):
                    return C_INT
                case ("is0", (CBase("int"),)):
                    return C_BOOL
                case ("b2s", (CBase("bool"),)):
                    return C_STRING
            raise CTypeError(f"primitive {op} on {tuple(map(print_ctype, tys))}", e)
        case CCase(_, _, _, _):
            raise CTypeError("case analysis outside the combinators", e)
    raise CTypeError(f"not a term: {e!r}")
