"""The original type system: verification of fully annotated programs
against the five-point judgment, and best-effort inference.

Both entry points run the same constraint engine.  Synthesis walks the
term bottom-up gluing judgment components with metavariables; equality
constraints are solved by first-order unification, and the two
auxiliary-relation constraints are deferred until enough structure is
known, then discharged through :mod:`lfk.relations`.  Residual ambient
metavariables default, initial side first, to the empty trail and the
expression's own type, matching the top-level soundness judgment shape
(ty, *, a, *, a).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from . import relations
from .syntax import (
    EMPTY,
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
    Plus,
    Prompt,
    PureArrow,
    Seq,
    SourceType,
    Span,
    StrLit,
    TrailStep,
    TrailType,
    Var,
    BOOL,
    INT,
    STRING,
    children,
    contains_pure_arrow,
    print_trail,
    print_type,
    type_size,
)

TypeEnv = dict[str, SourceType]


@dataclass(frozen=True)
class Judgment:
    """The five-point judgment: type, final trail, final answer,
    initial trail, initial answer."""

    ty: SourceType
    final_trail: TrailType
    final_ans: SourceType
    init_trail: TrailType
    init_ans: SourceType

    def __str__(self) -> str:
        return (
            f"{print_type(self.ty)}, {print_trail(self.final_trail)}, "
            f"{print_type(self.final_ans)}, {print_trail(self.init_trail)}, "
            f"{print_type(self.init_ans)}"
        )

    def as_json(self) -> dict:
        return {
            "type": print_type(self.ty),
            "finalTrail": print_trail(self.final_trail),
            "finalAnswer": print_type(self.final_ans),
            "initialTrail": print_trail(self.init_trail),
            "initialAnswer": print_type(self.init_ans),
        }


@dataclass
class TypedExpr:
    """A judgment-annotated copy of the syntax tree."""

    expr: Expr
    judgment: Judgment
    children: tuple["TypedExpr", ...] = ()


@dataclass
class Elaboration:
    """Annotation-complete program plus its typing derivation.

    ``expr`` carries every binder annotation and every Control trail
    witness; ``tree`` records each node's judgment, from which the rule
    instances (the id-cont-type triple of each Control/Prompt body and
    both compatible triples of each Control) are recovered below.
    """

    expr: Expr
    judgment: Judgment
    tree: TypedExpr

    def control_instances(self) -> list[dict]:
        out = []
        for node in walk_typed(self.tree):
            if isinstance(node.expr, Control):
                body = node.children[0].judgment
                arrow = node.expr.k_ty
                mu0 = node.expr.trail_witness
                assert isinstance(arrow, ImpureArrow) and mu0 is not None
                out.append(
                    {
                        "idcont": (body.ty, body.final_trail, body.final_ans),
                        "cons": (
                            TrailStep(arrow.cod, arrow.final_trail, arrow.final_ans),
                            arrow.init_trail,
                            mu0,
                        ),
                        "append": (node.judgment.init_trail, mu0, node.judgment.final_trail),
                    }
                )
        return out

    def prompt_instances(self) -> list[tuple[SourceType, TrailType, SourceType]]:
        out = []
        for node in walk_typed(self.tree):
            if isinstance(node.expr, Prompt):
                body = node.children[0].judgment
                out.append((body.ty, body.final_trail, body.final_ans))
        return out


def walk_typed(t: TypedExpr):
    yield t
    for c in t.children:
        yield from walk_typed(c)


# ---------------------------------------------------------------------------
# Errors


class TypeCheckError(Exception):
    """A failed typing premise.

    kind is one of UnboundVariable, Mismatch, IdContTypeFails,
    CompatibleFails, NeedsAnnotation, PureArrowInOriginalSystem,
    PurityMismatch.
    """

    def __init__(self, kind: str, location: Optional[Span], **details: str):
        self.kind = kind
        self.location = location
        self.details = details
        where = f"{location[0]}:{location[1]}: " if location else ""
        body = ", ".join(f"{k}={v}" for k, v in details.items())
        super().__init__(f"{where}{kind}({body})")

    def as_json(self) -> dict:
        return {
            "kind": self.kind,
            "location": list(self.location) if self.location else None,
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# Metavariables


@dataclass(frozen=True)
class MetaType(SourceType):
    uid: int
    hint: str = "t"


@dataclass(frozen=True)
class MetaTrail(TrailType):
    uid: int
    hint: str = "m"


def show_type(t: SourceType) -> str:
    match t:
        case MetaType(uid, hint):
            return f"?{hint}{uid}"
        case Base(name):
            return name
        case PureArrow(d, c):
            return f"({show_type(d)} => {show_type(c)})"
        case ImpureArrow(d, c, mt, a, it, b):
            return (
                f"({show_type(d)} -> {show_type(c)} @ [{show_trail(mt)}, "
                f"{show_type(a)}, {show_trail(it)}, {show_type(b)}])"
            )
    return repr(t)


def show_trail(mu: TrailType) -> str:
    match mu:
        case MetaTrail(uid, hint):
            return f"?{hint}{uid}"
        case EmptyTrail():
            return "*"
        case TrailStep(i, n, o):
            return f"{{{show_type(i)} => {show_trail(n)} => {show_type(o)}}}"
    return repr(mu)


def is_ground(obj: Union[SourceType, TrailType]) -> bool:
    match obj:
        case MetaType() | MetaTrail():
            return False
        case Base(_) | EmptyTrail():
            return True
        case PureArrow(d, c):
            return is_ground(d) and is_ground(c)
        case ImpureArrow(d, c, mt, a, it, b):
            return all(is_ground(x) for x in (d, c, mt, a, it, b))
        case TrailStep(i, n, o):
            return all(is_ground(x) for x in (i, n, o))
    raise ValueError(f"bad type {obj!r}")


# ---------------------------------------------------------------------------
# Solver

_IDCONT = "idcont"
_COMPAT = "compat"


@dataclass
class _RelCon:
    rel: str  # _IDCONT | _COMPAT
    args: tuple
    span: Optional[Span]


class Solver:
    """Unification plus deferred auxiliary-relation constraints."""

    def __init__(self):
        self._next = 0
        self.tbinds: dict[int, SourceType] = {}
        self.mbinds: dict[int, TrailType] = {}
        self.pending: list[_RelCon] = []
        self._spawned: list[_RelCon] = []
        # (kind, var, owner) in creation order; kind "trail" or "ans"
        self.defaults: list[tuple[str, Union[MetaType, MetaTrail], Optional[SourceType]]] = []

    # -- variables

    def fresh_t(self, hint: str = "t") -> MetaType:
        self._next += 1
        return MetaType(self._next, hint)

    def fresh_m(self, hint: str = "m") -> MetaTrail:
        self._next += 1
        return MetaTrail(self._next, hint)

    def ambient_pair(self, owner: SourceType) -> tuple[MetaTrail, MetaType]:
        """A (trail, answer) pair left free by a value, defaulting to
        (*, owner) if the context never pins it."""
        m = self.fresh_m("mu")
        a = self.fresh_t("a")
        self.defaults.append(("trail", m, None))
        self.defaults.append(("ans", a, owner))
        return m, a

    def defaultable_trail(self, hint: str = "mu") -> MetaTrail:
        m = self.fresh_m(hint)
        self.defaults.append(("trail", m, None))
        return m

    # -- resolution

    def resolve_t(self, t: SourceType) -> SourceType:
        while isinstance(t, MetaType) and t.uid in self.tbinds:
            t = self.tbinds[t.uid]
        return t

    def resolve_m(self, m: TrailType) -> TrailType:
        while isinstance(m, MetaTrail) and m.uid in self.mbinds:
            m = self.mbinds[m.uid]
        return m

    def zonk_t(self, t: SourceType) -> SourceType:
        t = self.resolve_t(t)
        match t:
            case Base(_) | MetaType():
                return t
            case PureArrow(d, c):
                return PureArrow(self.zonk_t(d), self.zonk_t(c))
            case ImpureArrow(d, c, mt, a, it, b):
                return ImpureArrow(
                    self.zonk_t(d), self.zonk_t(c),
                    self.zonk_m(mt), self.zonk_t(a),
                    self.zonk_m(it), self.zonk_t(b),
                )
        raise ValueError(f"bad type {t!r}")

    def zonk_m(self, m: TrailType) -> TrailType:
        m = self.resolve_m(m)
        match m:
            case EmptyTrail() | MetaTrail():
                return m
            case TrailStep(i, n, o):
                return TrailStep(self.zonk_t(i), self.zonk_m(n), self.zonk_t(o))
        raise ValueError(f"bad trail {m!r}")

    def _occurs(self, uid: int, obj: Union[SourceType, TrailType]) -> bool:
        obj = self.resolve_t(obj) if isinstance(obj, SourceType) else self.resolve_m(obj)
        match obj:
            case MetaType(u, _) | MetaTrail(u, _):
                return u == uid
            case PureArrow(d, c):
                return self._occurs(uid, d) or self._occurs(uid, c)
            case ImpureArrow(d, c, mt, a, it, b):
                return any(self._occurs(uid, x) for x in (d, c, mt, a, it, b))
            case TrailStep(i, n, o):
                return any(self._occurs(uid, x) for x in (i, n, o))
            case _:
                return False

    # -- unification

    def _mismatch(self, a, b, span) -> TypeCheckError:
        sa = show_type(a) if isinstance(a, SourceType) else show_trail(a)
        sb = show_type(b) if isinstance(b, SourceType) else show_trail(b)
        return TypeCheckError("Mismatch", span, expected=sa, actual=sb)

    def unify_t(self, a: SourceType, b: SourceType, span: Optional[Span]):
        a, b = self.resolve_t(a), self.resolve_t(b)
        if a == b:
            return
        if isinstance(a, MetaType):
            if self._occurs(a.uid, b):
                raise self._mismatch(a, b, span)
            self.tbinds[a.uid] = b
            return
        if isinstance(b, MetaType):
            return self.unify_t(b, a, span)
        if (isinstance(a, PureArrow) and isinstance(b, ImpureArrow)) or (
            isinstance(a, ImpureArrow) and isinstance(b, PureArrow)
        ):
            raise TypeCheckError(
                "PurityMismatch", span, expected=show_type(a), actual=show_type(b)
            )
        match (a, b):
            case (Base(x), Base(y)) if x == y:
                return
            case (PureArrow(d1, c1), PureArrow(d2, c2)):
                self.unify_t(d1, d2, span)
                self.unify_t(c1, c2, span)
                return
            case (
                ImpureArrow(d1, c1, mt1, a1, it1, b1),
                ImpureArrow(d2, c2, mt2, a2, it2, b2),
            ):
                self.unify_t(d1, d2, span)
                self.unify_t(c1, c2, span)
                self.unify_m(mt1, mt2, span)
                self.unify_t(a1, a2, span)
                self.unify_m(it1, it2, span)
                self.unify_t(b1, b2, span)
                return
        raise self._mismatch(a, b, span)

    def unify_m(self, a: TrailType, b: TrailType, span: Optional[Span]):
        a, b = self.resolve_m(a), self.resolve_m(b)
        if a == b:
            return
        if isinstance(a, MetaTrail):
            if self._occurs(a.uid, b):
                raise self._mismatch(a, b, span)
            self.mbinds[a.uid] = b
            return
        if isinstance(b, MetaTrail):
            return self.unify_m(b, a, span)
        match (a, b):
            case (TrailStep(i1, n1, o1), TrailStep(i2, n2, o2)):
                self.unify_t(i1, i2, span)
                self.unify_m(n1, n2, span)
                self.unify_t(o1, o2, span)
                return
        raise self._mismatch(a, b, span)

    # -- relation constraints

    def want_idcont(self, t: SourceType, mu: TrailType, t2: SourceType, span: Optional[Span]):
        self._spawned.append(_RelCon(_IDCONT, (t, mu, t2), span))

    def want_compat(self, m1: TrailType, m2: TrailType, m3: TrailType, span: Optional[Span]):
        self._spawned.append(_RelCon(_COMPAT, (m1, m2, m3), span))

    def _fail_rel(self, con: _RelCon) -> TypeCheckError:
        if con.rel == _IDCONT:
            t, mu, t2 = con.args
            return TypeCheckError(
                "IdContTypeFails", con.span,
                ty=show_type(self.zonk_t(t)),
                trail=show_trail(self.zonk_m(mu)),
                ty2=show_type(self.zonk_t(t2)),
            )
        m1, m2, m3 = con.args
        return TypeCheckError(
            "CompatibleFails", con.span,
            mu1=show_trail(self.zonk_m(m1)),
            mu2=show_trail(self.zonk_m(m2)),
            mu3=show_trail(self.zonk_m(m3)),
        )

    def _as_rel_failure(self, err: TypeCheckError, con: _RelCon) -> TypeCheckError:
        return self._fail_rel(con) if err.kind == "Mismatch" else err

    def _step_idcont(self, con: _RelCon) -> bool:
        """Deterministic progress on one id-cont-type constraint.
        True when the constraint has been discharged."""
        t, mu, t2 = con.args
        mu = self.resolve_m(mu)
        try:
            match mu:
                case EmptyTrail():
                    self.unify_t(t, t2, con.span)
                    return True
                case TrailStep(t1, inner, t1p):
                    self.unify_t(t, t1, con.span)
                    self.unify_t(t2, t1p, con.span)
                    self.unify_m(inner, EMPTY, con.span)
                    return True
        except TypeCheckError as err:
            raise self._as_rel_failure(err, con) from None
        return False

    def _step_compat(self, con: _RelCon) -> bool:
        m1, m2, m3 = (self.resolve_m(x) for x in con.args)
        try:
            if isinstance(m1, EmptyTrail):
                self.unify_m(m2, m3, con.span)
                return True
            if isinstance(m2, EmptyTrail):
                self.unify_m(m1, m3, con.span)
                return True
            if isinstance(m1, TrailStep) and isinstance(m2, TrailStep):
                # The clauses for empty m1/m2 are ruled out, so m3 steps.
                if isinstance(m3, EmptyTrail):
                    raise self._fail_rel(con)
                if isinstance(m3, MetaTrail):
                    self.unify_m(m3, TrailStep(m1.in_ty, self.fresh_m("mu"), m1.out_ty), con.span)
                    m3 = self.resolve_m(m3)
                assert isinstance(m3, TrailStep)
                self.unify_t(m1.in_ty, m3.in_ty, con.span)
                self.unify_t(m1.out_ty, m3.out_ty, con.span)
                self.want_compat(m2, m3.next, m1.next, con.span)
                return True
            if isinstance(m1, TrailStep) and isinstance(m3, EmptyTrail):
                raise self._fail_rel(con)
        except TypeCheckError as err:
            raise self._as_rel_failure(err, con) from None
        return False

    def propagate(self):
        queue = self.pending + self._spawned
        self.pending, self._spawned = [], []
        progress = True
        while progress:
            progress = False
            remaining: list[_RelCon] = []
            for con in queue:
                done = self._step_idcont(con) if con.rel == _IDCONT else self._step_compat(con)
                if done:
                    progress = True
                else:
                    remaining.append(con)
            queue = remaining + self._spawned
            self._spawned = []
        self.pending = queue

    # -- finalization

    def _apply_defaults(self):
        progress = True
        while progress:
            self.propagate()
            progress = False
            for kind, var, owner in self.defaults:
                if kind == "trail":
                    if not isinstance(self.resolve_m(var), MetaTrail):
                        continue
                    self.unify_m(var, EMPTY, None)
                else:
                    if not isinstance(self.resolve_t(var), MetaType):
                        continue
                    oty = self.zonk_t(owner)
                    if not is_ground(oty):
                        continue
                    self.unify_t(var, oty, None)
                progress = True
                break

    def _snapshot(self):
        return dict(self.tbinds), dict(self.mbinds)

    def _restore(self, snap):
        self.tbinds, self.mbinds = snap

    def _unifiable_m(self, a: TrailType, b: TrailType) -> bool:
        snap = self._snapshot()
        try:
            self.unify_m(a, b, None)
            return True
        except TypeCheckError:
            return False
        finally:
            self._restore(snap)

    def _solve_residual(self, con: _RelCon) -> str:
        """Ground-check or witness-solve one leftover constraint.
        Returns "done" or "stuck"; raises on definite failure."""
        if con.rel == _IDCONT:
            t, mu, t2 = con.args
            t, t2, mu = self.zonk_t(t), self.zonk_t(t2), self.zonk_m(mu)
            if is_ground(t) and is_ground(mu) and is_ground(t2):
                if relations.id_cont_type(t, mu, t2):
                    return "done"
                raise self._fail_rel(con)
            if is_ground(t) and is_ground(t2) and isinstance(mu, MetaTrail):
                # Candidates are * (when the endpoints agree, the
                # smaller witness) and {t => * => t2}.
                cand = EMPTY if t == t2 else TrailStep(t, EMPTY, t2)
                self.unify_m(mu, cand, con.span)
                return "done"
            return "stuck"
        ms = tuple(self.zonk_m(x) for x in con.args)
        open_pos = [i for i, m in enumerate(ms) if not is_ground(m)]
        if not open_pos:
            if relations.compatible(*ms):
                return "done"
            raise self._fail_rel(con)
        if len(open_pos) != 1:
            return "stuck"
        pos = open_pos[0]
        ground = [m for i, m in enumerate(ms) if i != pos]
        solve = (
            relations._solve_first,
            relations._solve_second,
            relations._solve_third,
        )[pos]
        sols = sorted(solve(*ground), key=lambda m: (type_size(m), print_trail(m)))
        viable = [m for m in sols if self._unifiable_m(con.args[pos], m)]
        if not viable:
            raise self._fail_rel(con)
        best = [m for m in viable if type_size(m) == type_size(viable[0])]
        if len(best) > 1:
            raise TypeCheckError(
                "NeedsAnnotation", con.span,
                what="multiple minimal trail witnesses: "
                + ", ".join(print_trail(m) for m in best),
            )
        self.unify_m(con.args[pos], best[0], con.span)
        return "done"

    def _stuck_error(self, con: _RelCon) -> TypeCheckError:
        if con.rel == _IDCONT:
            t, mu, t2 = con.args
            what = (
                f"id-cont-type({show_type(self.zonk_t(t))}, "
                f"{show_trail(self.zonk_m(mu))}, {show_type(self.zonk_t(t2))}) is underdetermined"
            )
        else:
            what = (
                "compatible(%s) is underdetermined"
                % ", ".join(show_trail(self.zonk_m(m)) for m in con.args)
            )
        return TypeCheckError("NeedsAnnotation", con.span, what=what)

    def finalize(self):
        self._apply_defaults()
        while self.pending:
            for con in list(self.pending):
                if con not in self.pending:
                    continue
                if self._solve_residual(con) == "done":
                    if con in self.pending:
                        self.pending.remove(con)
                    self._apply_defaults()
                    break
            else:
                raise self._stuck_error(self.pending[0])


# ---------------------------------------------------------------------------
# Checker


class _Checker:
    def __init__(self, mode: str):
        assert mode in ("verify", "infer")
        self.mode = mode
        self.solver = Solver()
        self._control_meta: dict[int, tuple[ImpureArrow, TrailType]] = {}

    def require_annotations(self, e: Expr):
        match e:
            case Abs(_, ty, _) if ty is None:
                raise TypeCheckError("NeedsAnnotation", e.span, what="function parameter type")
            case Control(_, ty, wit, _) if ty is None or wit is None:
                what = "continuation type" if ty is None else "trail witness"
                raise TypeCheckError("NeedsAnnotation", e.span, what=what)
        for c in children(e):
            self.require_annotations(c)

    def reject_pure_arrows(self, e: Expr):
        ann = None
        match e:
            case Abs(_, ty, _) | Control(_, ty, _, _):
                ann = ty
        if ann is not None and contains_pure_arrow(ann):
            raise TypeCheckError("PureArrowInOriginalSystem", e.span, annotation=print_type(ann))
        for c in children(e):
            self.reject_pure_arrows(c)

    # -- synthesis

    def synth(self, env: TypeEnv, e: Expr) -> TypedExpr:
        s = self.solver
        match e:
            case IntLit() | BoolLit() | StrLit():
                ty = {IntLit: INT, BoolLit: BOOL, StrLit: STRING}[type(e)]
                m, a = s.ambient_pair(ty)
                return TypedExpr(e, Judgment(ty, m, a, m, a))
            case Var(x):
                if x not in env:
                    raise TypeCheckError("UnboundVariable", e.span, name=x)
                ty = env[x]
                m, a = s.ambient_pair(ty)
                return TypedExpr(e, Judgment(ty, m, a, m, a))
            case Abs(x, ty, body):
                param = ty if ty is not None else s.fresh_t("p")
                bt = self.synth({**env, x: param}, body)
                bj = bt.judgment
                arrow = ImpureArrow(
                    param, bj.ty, bj.final_trail, bj.final_ans, bj.init_trail, bj.init_ans
                )
                m, a = s.ambient_pair(arrow)
                return TypedExpr(e, Judgment(arrow, m, a, m, a), (bt,))
            case App(f, x):
                ft = self.synth(env, f)
                xt = self.synth(env, x)
                fj, xj = ft.judgment, xt.judgment
                arrow = s.resolve_t(fj.ty)
                if isinstance(arrow, MetaType):
                    widened = ImpureArrow(
                        s.fresh_t("d"), s.fresh_t("c"),
                        s.fresh_m(), s.fresh_t("a"), s.fresh_m(), s.fresh_t("b"),
                    )
                    s.unify_t(arrow, widened, e.span)
                    arrow = widened
                if not isinstance(arrow, ImpureArrow):
                    raise TypeCheckError(
                        "Mismatch", e.span,
                        expected="a function type", actual=show_type(s.zonk_t(arrow)),
                    )
                s.unify_t(xj.ty, arrow.dom, e.span)
                # operator runs first, then the operand, then the call
                s.unify_m(fj.final_trail, xj.init_trail, e.span)
                s.unify_t(fj.final_ans, xj.init_ans, e.span)
                s.unify_m(xj.final_trail, arrow.init_trail, e.span)
                s.unify_t(xj.final_ans, arrow.init_ans, e.span)
                j = Judgment(
                    arrow.cod, arrow.final_trail, arrow.final_ans, fj.init_trail, fj.init_ans
                )
                return TypedExpr(e, j, (ft, xt))
            case Plus(l, r) | Mul(l, r):
                lt = self.synth(env, l)
                rt = self.synth(env, r)
                return TypedExpr(e, self._prim2(lt, rt, e.span), (lt, rt))
            case Is0(x):
                xt = self.synth(env, x)
                s.unify_t(xt.judgment.ty, INT, e.span)
                return TypedExpr(e, replace(xt.judgment, ty=BOOL), (xt,))
            case B2S(x):
                xt = self.synth(env, x)
                s.unify_t(xt.judgment.ty, BOOL, e.span)
                return TypedExpr(e, replace(xt.judgment, ty=STRING), (xt,))
            case Prompt(body):
                bt = self.synth(env, body)
                bj = bt.judgment
                s.unify_m(bj.init_trail, EMPTY, e.span)
                s.want_idcont(bj.ty, bj.final_trail, bj.final_ans, e.span)
                m, a = s.ambient_pair(bj.init_ans)
                return TypedExpr(e, Judgment(bj.init_ans, m, a, m, a), (bt,))
            case Control(k, ann, wit, body):
                if ann is not None:
                    if not isinstance(ann, ImpureArrow):
                        raise TypeCheckError(
                            "Mismatch", e.span,
                            expected="a continuation (impure arrow) annotation",
                            actual=print_type(ann),
                        )
                    arrow = ann
                else:
                    arrow = ImpureArrow(
                        s.fresh_t("d"), s.fresh_t("c"),
                        s.fresh_m(), s.fresh_t("a"), s.fresh_m(), s.fresh_t("b"),
                    )
                bt = self.synth({**env, k: arrow}, body)
                bj = bt.judgment
                s.unify_m(bj.init_trail, EMPTY, e.span)
                s.want_idcont(bj.ty, bj.final_trail, bj.final_ans, e.span)
                mu0 = wit if wit is not None else s.fresh_m("w")
                s.want_compat(
                    TrailStep(arrow.cod, arrow.final_trail, arrow.final_ans),
                    arrow.init_trail, mu0, e.span,
                )
                m_init = s.defaultable_trail()
                m_final = s.fresh_m()
                s.want_compat(m_init, mu0, m_final, e.span)
                j = Judgment(arrow.dom, m_final, arrow.init_ans, m_init, bj.init_ans)
                node = TypedExpr(e, j, (bt,))
                self._control_meta[id(node)] = (arrow, mu0)
                return node
            case Seq(_, _):
                raise ValueError("typecheck requires a Seq-free term; desugar first")
        raise ValueError(f"not an expression: {e!r}")

    def _prim2(self, lt: TypedExpr, rt: TypedExpr, span) -> Judgment:
        """Thread a two-operand integer primitive like an application of
        a pure operator: left first, then right, result to the context."""
        s = self.solver
        lj, rj = lt.judgment, rt.judgment
        s.unify_t(lj.ty, INT, span)
        s.unify_t(rj.ty, INT, span)
        s.unify_m(lj.final_trail, rj.init_trail, span)
        s.unify_t(lj.final_ans, rj.init_ans, span)
        return Judgment(INT, rj.final_trail, rj.final_ans, lj.init_trail, lj.init_ans)

    # -- zonking the result

    def zonk_tree(self, t: TypedExpr) -> TypedExpr:
        s = self.solver
        kids = tuple(self.zonk_tree(c) for c in t.children)
        j = Judgment(
            s.zonk_t(t.judgment.ty),
            s.zonk_m(t.judgment.final_trail),
            s.zonk_t(t.judgment.final_ans),
            s.zonk_m(t.judgment.init_trail),
            s.zonk_t(t.judgment.init_ans),
        )
        for part in (j.ty, j.final_ans, j.init_ans):
            if not is_ground(part):
                raise TypeCheckError(
                    "NeedsAnnotation", t.expr.span, what=f"unresolved type {show_type(part)}"
                )
        for part in (j.final_trail, j.init_trail):
            if not is_ground(part):
                raise TypeCheckError(
                    "NeedsAnnotation", t.expr.span, what=f"unresolved trail {show_trail(part)}"
                )
        expr = t.expr
        match expr:
            case Abs(x, _, _):
                assert isinstance(j.ty, ImpureArrow)
                expr = Abs(x, j.ty.dom, kids[0].expr, span=expr.span)
            case Control(k, _, _, _):
                arrow, mu0 = self._control_meta[id(t)]
                arrow = s.zonk_t(arrow)
                mu0 = s.zonk_m(mu0)
                if not (is_ground(arrow) and is_ground(mu0)):
                    raise TypeCheckError(
                        "NeedsAnnotation", expr.span,
                        what=f"unresolved continuation type {show_type(arrow)} @ {show_trail(mu0)}",
                    )
                expr = Control(k, arrow, mu0, kids[0].expr, span=expr.span)
            case Prompt(_):
                expr = Prompt(kids[0].expr, span=expr.span)
            case App(_, _):
                expr = App(kids[0].expr, kids[1].expr, span=expr.span)
            case Plus(_, _):
                expr = Plus(kids[0].expr, kids[1].expr, span=expr.span)
            case Mul(_, _):
                expr = Mul(kids[0].expr, kids[1].expr, span=expr.span)
            case Is0(_):
                expr = Is0(kids[0].expr, span=expr.span)
            case B2S(_):
                expr = B2S(kids[0].expr, span=expr.span)
        return TypedExpr(expr, j, kids)


def _run(
    mode: str,
    env: TypeEnv,
    e: Expr,
    requested: Optional[Judgment],
    ambient: Optional[tuple[TrailType, SourceType]],
) -> tuple[Judgment, Elaboration]:
    ck = _Checker(mode)
    ck.reject_pure_arrows(e)
    if mode == "verify":
        ck.require_annotations(e)
    tree = ck.synth(dict(env), e)
    s = ck.solver
    j = tree.judgment
    if requested is not None:
        s.unify_t(j.ty, requested.ty, e.span)
        s.unify_m(j.final_trail, requested.final_trail, e.span)
        s.unify_t(j.final_ans, requested.final_ans, e.span)
        s.unify_m(j.init_trail, requested.init_trail, e.span)
        s.unify_t(j.init_ans, requested.init_ans, e.span)
    if ambient is not None:
        mu, ans = ambient
        s.unify_m(j.final_trail, mu, e.span)
        s.unify_t(j.final_ans, ans, e.span)
        s.unify_m(j.init_trail, mu, e.span)
        s.unify_t(j.init_ans, ans, e.span)
    s.finalize()
    zonked = ck.zonk_tree(tree)
    return zonked.judgment, Elaboration(zonked.expr, zonked.judgment, zonked)


def verify(
    env: TypeEnv,
    e: Expr,
    requested: Optional[Judgment] = None,
    ambient: Optional[tuple[TrailType, SourceType]] = None,
) -> Judgment:
    """Check a fully annotated, Seq-free term and synthesize its judgment."""
    j, _ = _run("verify", env, e, requested, ambient)
    return j


def infer(
    env: TypeEnv,
    e: Expr,
    requested: Optional[Judgment] = None,
    ambient: Optional[tuple[TrailType, SourceType]] = None,
) -> tuple[Judgment, Elaboration]:
    """Best-effort inference over a term with optional annotations.

    Returns the judgment and an elaboration that verify accepts."""
    return _run("infer", env, e, requested, ambient)


def typed_tree(env: TypeEnv, e: Expr) -> TypedExpr:
    """Judgment-annotated tree of e (inferring missing annotations)."""
    _, elab = infer(env, e)
    return elab.tree
