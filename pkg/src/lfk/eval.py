"""Direct-style small-step semantics: beta, context capture, prompt
elimination, and the arithmetic/conversion primitives.

The reduction relation is deterministic call-by-value, left to right.
``step`` exposes one reduction at a time over whole terms; ``evaluate``
drives the same transitions on a persistent frame stack, with free-
variable-cached, structure-sharing substitution, so long runs (the
divergence checks) stay cheap.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Callable, Optional, Union

from .syntax import (
    Abs,
    App,
    B2S,
    BoolLit,
    Control,
    Expr,
    IntLit,
    Is0,
    Mul,
    NameSupply,
    Plus,
    Prompt,
    Seq,
    SourceType,
    StrLit,
    Var,
    all_names,
    is_value,
)


# ---------------------------------------------------------------------------
# Values


class Value:
    pass


@dataclass(frozen=True)
class IntV(Value):
    value: int


@dataclass(frozen=True)
class BoolV(Value):
    value: bool


@dataclass(frozen=True)
class StrV(Value):
    value: str


@dataclass(frozen=True)
class ClosV(Value):
    """A function value; substitution-based, so no environment."""

    param: str
    body: Expr
    param_ty: Optional[SourceType] = None

    def __eq__(self, other):  # bodies compared structurally
        return (
            isinstance(other, ClosV)
            and self.param == other.param
            and self.body == other.body
        )


def value_of(e: Expr) -> Optional[Value]:
    match e:
        case IntLit(n):
            return IntV(n)
        case BoolLit(b):
            return BoolV(b)
        case StrLit(s):
            return StrV(s)
        case Abs(x, ty, body):
            return ClosV(x, body, ty)
    return None


def print_value(v: Value) -> str:
    match v:
        case IntV(n):
            return str(n)
        case BoolV(b):
            return "true" if b else "false"
        case StrV(s):
            return '"' + s.replace('"', '\\"') + '"'
        case ClosV(x, _, _):
            return f"<fun {x}>"
    raise ValueError(f"not a value: {v!r}")


def base_payload(v: Value) -> Union[int, bool, str, None]:
    """The underlying constant of a base-type value, for cross-pipeline
    comparison; None for function values."""
    match v:
        case IntV(n):
            return n
        case BoolV(b):
            return b
        case StrV(s):
            return s
    return None


# ---------------------------------------------------------------------------
# Evaluation contexts as frames


@dataclass(frozen=True)
class FAppFn:
    arg: Expr


@dataclass(frozen=True)
class FAppArg:
    fn: Expr  # a value


@dataclass(frozen=True)
class FPlusL:
    right: Expr


@dataclass(frozen=True)
class FPlusR:
    left: Expr  # a value


@dataclass(frozen=True)
class FMulL:
    right: Expr


@dataclass(frozen=True)
class FMulR:
    left: Expr  # a value


@dataclass(frozen=True)
class FIs0:
    pass


@dataclass(frozen=True)
class FB2S:
    pass


@dataclass(frozen=True)
class FPrompt:
    pass


Frame = Union[FAppFn, FAppArg, FPlusL, FPlusR, FMulL, FMulR, FIs0, FB2S, FPrompt]


def plug_frame(fr: Frame, e: Expr) -> Expr:
    match fr:
        case FAppFn(arg):
            return App(e, arg)
        case FAppArg(fn):
            return App(fn, e)
        case FPlusL(r):
            return Plus(e, r)
        case FPlusR(l):
            return Plus(l, e)
        case FMulL(r):
            return Mul(e, r)
        case FMulR(l):
            return Mul(l, e)
        case FIs0():
            return Is0(e)
        case FB2S():
            return B2S(e)
        case FPrompt():
            return Prompt(e)
    raise ValueError(f"not a frame: {fr!r}")


@dataclass(frozen=True)
class Decomposition:
    """e = outer[inner[redex]] with outer either empty or ending at the
    prompt nearest the redex, and inner prompt-free."""

    outer: tuple[Frame, ...]
    inner: tuple[Frame, ...]
    redex: Expr

    def plug(self) -> Expr:
        e = self.redex
        for fr in reversed(self.inner):
            e = plug_frame(fr, e)
        for fr in reversed(self.outer):
            e = plug_frame(fr, e)
        return e


# ---------------------------------------------------------------------------
# Outcomes


@dataclass(frozen=True)
class StepNext:
    expr: Expr


@dataclass(frozen=True)
class StepDone:
    value: Value


@dataclass(frozen=True)
class StepStuck:
    reason: str
    redex: Expr


StepResult = Union[StepNext, StepDone, StepStuck]


@dataclass(frozen=True)
class EvalResult:
    value: Value
    steps: int


@dataclass(frozen=True)
class EvalStuck:
    reason: str
    redex: Expr
    steps: int


@dataclass(frozen=True)
class EvalFuelExhausted:
    steps: int


@dataclass(frozen=True)
class EvalTimeout:
    steps: int
    seconds: float


EvalOutcome = Union[EvalResult, EvalStuck, EvalFuelExhausted, EvalTimeout]


# ---------------------------------------------------------------------------
# The machine


class Machine:
    """Focus + frame stack over closed, Seq-free terms.

    settle() runs administrative moves only and reports what comes
    next; fire() performs exactly one reduction (beta, capture, prompt
    elimination, or a primitive).
    """

    def __init__(self, e: Expr):
        if sys.getrecursionlimit() < 20000:
            sys.setrecursionlimit(20000)
        self.focus = e
        self.stack: list[Frame] = []
        self.supply = NameSupply(all_names(e))
        self._fv: dict[int, tuple[Expr, frozenset[str]]] = {}
        self._pending: Optional[tuple] = None

    # -- cached free variables

    def fv(self, e: Expr) -> frozenset[str]:
        hit = self._fv.get(id(e))
        if hit is not None and hit[0] is e:
            return hit[1]
        work: list[tuple[Expr, bool]] = [(e, False)]
        while work:
            node, seen = work.pop()
            hit = self._fv.get(id(node))
            if hit is not None and hit[0] is node:
                continue
            if not seen:
                work.append((node, True))
                match node:
                    case Abs(_, _, body) | Control(_, _, _, body) | Prompt(body):
                        work.append((body, False))
                    case App(a, b) | Plus(a, b) | Mul(a, b) | Seq(a, b):
                        work.extend(((a, False), (b, False)))
                    case Is0(a) | B2S(a):
                        work.append((a, False))
                continue
            match node:
                case Var(x):
                    out = frozenset((x,))
                case IntLit() | BoolLit() | StrLit():
                    out = frozenset()
                case Abs(x, _, body):
                    out = self._fv[id(body)][1] - {x}
                case Control(k, _, _, body):
                    out = self._fv[id(body)][1] - {k}
                case Prompt(body):
                    out = self._fv[id(body)][1]
                case App(a, b) | Plus(a, b) | Mul(a, b) | Seq(a, b):
                    out = self._fv[id(a)][1] | self._fv[id(b)][1]
                case Is0(a) | B2S(a):
                    out = self._fv[id(a)][1]
                case _:
                    raise ValueError(f"not an expression: {node!r}")
            self._fv[id(node)] = (node, out)
        return self._fv[id(e)][1]

    # -- capture-avoiding substitution with sharing

    def subst(self, e: Expr, name: str, value: Expr) -> Expr:
        fv_value = self.fv(value)

        def go(e: Expr) -> Expr:
            if name not in self.fv(e):
                return e
            match e:
                case Var(_):
                    return value
                case Abs(x, ty, body):
                    if x in fv_value:
                        x2 = self.supply.fresh(x)
                        body = self.subst(body, x, Var(x2))
                        return Abs(x2, ty, go(body))
                    return Abs(x, ty, go(body))
                case Control(k, ty, w, body):
                    if k in fv_value:
                        k2 = self.supply.fresh(k)
                        body = self.subst(body, k, Var(k2))
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
            raise ValueError(f"cannot substitute into {e!r}")

        return go(e)

    # -- administrative settling

    def settle(self) -> str:
        """Move the focus to the next redex. Returns "redex", "done" or
        "stuck"; the detail is left in self._pending."""
        while True:
            f = self.focus
            if is_value(f):
                if not self.stack:
                    self._pending = ("done", value_of(f))
                    return "done"
                top = self.stack[-1]
                match top:
                    case FAppFn(arg):
                        self.stack[-1] = FAppArg(f)
                        self.focus = arg
                    case FAppArg(fn):
                        if isinstance(fn, Abs):
                            self._pending = ("beta", fn, f)
                            return "redex"
                        self._pending = ("stuck", "application of a non-function value", App(fn, f))
                        return "stuck"
                    case FPlusL(r):
                        self.stack[-1] = FPlusR(f)
                        self.focus = r
                    case FPlusR(l):
                        if isinstance(l, IntLit) and isinstance(f, IntLit):
                            self._pending = ("prim", IntLit(l.value + f.value))
                            return "redex"
                        self._pending = ("stuck", "+ on non-integers", Plus(l, f))
                        return "stuck"
                    case FMulL(r):
                        self.stack[-1] = FMulR(f)
                        self.focus = r
                    case FMulR(l):
                        if isinstance(l, IntLit) and isinstance(f, IntLit):
                            self._pending = ("prim", IntLit(l.value * f.value))
                            return "redex"
                        self._pending = ("stuck", "* on non-integers", Mul(l, f))
                        return "stuck"
                    case FIs0():
                        if isinstance(f, IntLit):
                            self._pending = ("prim", BoolLit(f.value == 0))
                            return "redex"
                        self._pending = ("stuck", "is0 on a non-integer", Is0(f))
                        return "stuck"
                    case FB2S():
                        if isinstance(f, BoolLit):
                            self._pending = ("prim", StrLit("true" if f.value else "false"))
                            return "redex"
                        self._pending = ("stuck", "b2s on a non-boolean", B2S(f))
                        return "stuck"
                    case FPrompt():
                        self._pending = ("prompt", f)
                        return "redex"
                continue
            match f:
                case App(fn, arg):
                    self.stack.append(FAppFn(arg))
                    self.focus = fn
                case Plus(l, r):
                    self.stack.append(FPlusL(r))
                    self.focus = l
                case Mul(l, r):
                    self.stack.append(FMulL(r))
                    self.focus = l
                case Is0(a):
                    self.stack.append(FIs0())
                    self.focus = a
                case B2S(a):
                    self.stack.append(FB2S())
                    self.focus = a
                case Prompt(b):
                    self.stack.append(FPrompt())
                    self.focus = b
                case Control(_, _, _, _):
                    i = self._innermost_prompt()
                    if i is None:
                        self._pending = ("stuck", "control without an enclosing prompt", f)
                        return "stuck"
                    self._pending = ("control", i, f)
                    return "redex"
                case Var(x):
                    self._pending = ("stuck", f"free variable {x}", f)
                    return "stuck"
                case Seq(_, _):
                    raise ValueError("evaluation requires a Seq-free term; desugar first")
                case _:
                    raise ValueError(f"not an expression: {f!r}")

    def _innermost_prompt(self) -> Optional[int]:
        for i in range(len(self.stack) - 1, -1, -1):
            if isinstance(self.stack[i], FPrompt):
                return i
        return None

    def fire(self):
        """Perform the reduction found by settle()."""
        tag = self._pending[0]
        if tag == "beta":
            _, fn, arg = self._pending
            self.focus = self.subst(fn.body, fn.param, arg)
            self.stack.pop()
        elif tag == "prim":
            _, result = self._pending
            self.focus = result
            self.stack.pop()
        elif tag == "prompt":
            _, v = self._pending
            self.focus = v
            self.stack.pop()
        elif tag == "control":
            _, i, node = self._pending
            x = self.supply.fresh("x")
            body_of_cont: Expr = Var(x)
            for fr in reversed(self.stack[i + 1 :]):
                body_of_cont = plug_frame(fr, body_of_cont)
            cont = Abs(x, None, body_of_cont)
            del self.stack[i + 1 :]
            self.focus = self.subst(node.body, node.k, cont)
        else:
            raise RuntimeError(f"no pending reduction: {self._pending!r}")
        self._pending = None

    def rebuild(self) -> Expr:
        e = self.focus
        for fr in reversed(self.stack):
            e = plug_frame(fr, e)
        return e

    def stuck_info(self) -> tuple[str, Expr]:
        assert self._pending and self._pending[0] == "stuck"
        return self._pending[1], self._pending[2]

    def done_value(self) -> Value:
        assert self._pending and self._pending[0] == "done"
        return self._pending[1]


# ---------------------------------------------------------------------------
# Public operations


def step(e: Expr) -> StepResult:
    """One reduction of a closed, Seq-free term."""
    m = Machine(e)
    status = m.settle()
    if status == "done":
        return StepDone(m.done_value())
    if status == "stuck":
        reason, redex = m.stuck_info()
        return StepStuck(reason, redex)
    m.fire()
    return StepNext(m.rebuild())


def decompose(e: Expr) -> Optional[Decomposition]:
    """The unique decomposition of a non-value term, or None for values."""
    m = Machine(e)
    status = m.settle()
    if status == "done":
        return None
    if status == "stuck":
        _, redex = m.stuck_info()
        frames = tuple(m.stack)
        if m._pending[1].startswith("control without"):
            frames = tuple(m.stack)
        elif isinstance(redex, App) or isinstance(redex, (Plus, Mul, Is0, B2S)):
            frames = tuple(m.stack[:-1])
    else:
        tag = m._pending[0]
        if tag == "beta":
            redex = App(m._pending[1], m._pending[2])
            frames = tuple(m.stack[:-1])
        elif tag == "prim":
            redex = plug_frame(m.stack[-1], m.focus)
            frames = tuple(m.stack[:-1])
        elif tag == "prompt":
            redex = Prompt(m._pending[1])
            frames = tuple(m.stack[:-1])
        else:  # control: the redex is the control node itself
            redex = m._pending[2]
            frames = tuple(m.stack)
    cut = None
    for i in range(len(frames) - 1, -1, -1):
        if isinstance(frames[i], FPrompt):
            cut = i
            break
    if cut is None:
        return Decomposition((), frames, redex)
    return Decomposition(frames[: cut + 1], frames[cut + 1 :], redex)


def evaluate(
    e: Expr,
    fuel: Optional[int] = None,
    watchdog: Optional[float] = None,
    trace: Optional[Callable[[Expr], None]] = None,
) -> EvalOutcome:
    """Iterate the step relation from e.

    fuel bounds the number of reductions; watchdog is a wall-clock
    bound in seconds, checked periodically."""
    m = Machine(e)
    steps = 0
    start = time.monotonic()
    deadline = start + watchdog if watchdog is not None else None
    while True:
        status = m.settle()
        if status == "done":
            return EvalResult(m.done_value(), steps)
        if status == "stuck":
            reason, redex = m.stuck_info()
            return EvalStuck(reason, redex, steps)
        if fuel is not None and steps >= fuel:
            return EvalFuelExhausted(steps)
        if deadline is not None and steps % 256 == 0 and time.monotonic() > deadline:
            return EvalTimeout(steps, time.monotonic() - start)
        m.fire()
        steps += 1
        if trace is not None:
            trace(m.rebuild())
