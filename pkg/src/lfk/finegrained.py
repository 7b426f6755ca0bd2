"""The fine-grained pure/impure type system, the selective CPS
translation it drives, and the shift encoding.

Pure expressions carry a bare type; impure expressions carry the full
five-point judgment.  The checker prefers pure derivations (pure
application over the impure forms, the no-compatibility control rule
whenever the continuation is annotated with a pure arrow) and inserts
the coercion rule exactly where a pure subterm meets an impure
context.  The selective translation is derivation-directed: pure
derivations stay in direct style, impure ones become continuation- and
trail-passing functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .cps import (
    CAbs,
    CApp,
    CArrow,
    CComb,
    CConst,
    CEvalOutcome,
    CExpr,
    CPrim,
    CUnit,
    CVar,
    _CMachine,
    _cont_ctype,
    cps_trail,
    cps_type,
    eval_c,
)
from .syntax import (
    EMPTY,
    Abs,
    App,
    B2S,
    BoolLit,
    Control,
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
    free_vars,
    subst,
    BOOL,
    INT,
    STRING,
)
from .typecheck import (
    Judgment,
    MetaType,
    Solver,
    TypeCheckError,
    TypeEnv,
    is_ground,
    show_trail,
    show_type,
)


@dataclass(frozen=True)
class PureJudgment:
    """Judgment of a pure expression: a type, no answer or trail types."""

    ty: SourceType

    def __str__(self) -> str:
        from .syntax import print_type

        return f"pure {print_type(self.ty)}"

    def as_json(self) -> dict:
        from .syntax import print_type

        return {"pure": True, "type": print_type(self.ty)}


FgResult = Union[PureJudgment, Judgment]


@dataclass
class Derivation:
    """One rule application: Const, Var, PAbs, IAbs, PApp, PIApp, IApp,
    PControl, IControl, Prompt, Exp, PPrim or IPrim, with the premise
    derivations as children and the instantiated result judgment."""

    rule: str
    expr: Expr
    result: FgResult
    children: tuple["Derivation", ...] = ()
    op: Optional[str] = None  # primitive name for PPrim/IPrim
    mu0: Optional[TrailType] = None  # IControl trail witness

    @property
    def pure(self) -> bool:
        return isinstance(self.result, PureJudgment)


def walk_derivation(d: Derivation):
    yield d
    for c in d.children:
        yield from walk_derivation(c)


class _FgChecker:
    def __init__(self):
        self.solver = Solver()

    # -- judgment plumbing

    def impure(self, d: Derivation) -> Derivation:
        """Coerce a pure derivation into an impure context (rule Exp)."""
        if not d.pure:
            return d
        s = self.solver
        m, a = s.ambient_pair(d.result.ty)
        j = Judgment(d.result.ty, m, a, m, a)
        return Derivation("Exp", d.expr, j, (d,))

    def _ty(self, d: Derivation) -> SourceType:
        return d.result.ty

    def _fit_arg(self, d: Derivation, dom: SourceType) -> Derivation:
        """Re-derive a pure-bodied abstraction through IAbs (coercing
        its body with Exp) when the expected domain is an impure arrow;
        the relational rules admit both derivations."""
        dom = self.solver.resolve_t(dom)
        if d.rule != "PAbs" or not isinstance(dom, ImpureArrow):
            return d
        e = d.expr
        assert isinstance(e, Abs) and e.param_ty is not None
        bd = self.impure(d.children[0])
        bj = bd.result
        arrow = ImpureArrow(
            e.param_ty, bj.ty, bj.final_trail, bj.final_ans, bj.init_trail, bj.init_ans
        )
        return Derivation("IAbs", e, PureJudgment(arrow), (bd,))

    # -- synthesis

    def synth(self, env: TypeEnv, e: Expr) -> Derivation:
        s = self.solver
        match e:
            case IntLit() | BoolLit() | StrLit():
                ty = {IntLit: INT, BoolLit: BOOL, StrLit: STRING}[type(e)]
                return Derivation("Const", e, PureJudgment(ty))
            case Var(x):
                if x not in env:
                    raise TypeCheckError("UnboundVariable", e.span, name=x)
                return Derivation("Var", e, PureJudgment(env[x]))
            case Abs(x, ann, body):
                if ann is None:
                    raise TypeCheckError(
                        "NeedsAnnotation", e.span, what="function parameter type"
                    )
                bd = self.synth({**env, x: ann}, body)
                if bd.pure:
                    return Derivation("PAbs", e, PureJudgment(PureArrow(ann, bd.result.ty)), (bd,))
                bj = bd.result
                arrow = ImpureArrow(
                    ann, bj.ty, bj.final_trail, bj.final_ans, bj.init_trail, bj.init_ans
                )
                return Derivation("IAbs", e, PureJudgment(arrow), (bd,))
            case App(f, x):
                fd = self.synth(env, f)
                xd = self.synth(env, x)
                s.propagate()
                opty = s.resolve_t(self._ty(fd))
                if isinstance(opty, MetaType):
                    raise TypeCheckError(
                        "NeedsAnnotation", e.span, what="operator type undetermined"
                    )
                if isinstance(opty, PureArrow):
                    xd = self._fit_arg(xd, opty.dom)
                    if fd.pure and xd.pure:
                        s.unify_t(self._ty(xd), opty.dom, e.span)
                        return Derivation("PApp", e, PureJudgment(opty.cod), (fd, xd))
                    fi, xi = self.impure(fd), self.impure(xd)
                    fj, xj = fi.result, xi.result
                    s.unify_t(xj.ty, opty.dom, e.span)
                    s.unify_m(fj.final_trail, xj.init_trail, e.span)
                    s.unify_t(fj.final_ans, xj.init_ans, e.span)
                    j = Judgment(
                        opty.cod, xj.final_trail, xj.final_ans, fj.init_trail, fj.init_ans
                    )
                    return Derivation("PIApp", e, j, (fi, xi))
                if isinstance(opty, ImpureArrow):
                    xd = self._fit_arg(xd, opty.dom)
                    fi, xi = self.impure(fd), self.impure(xd)
                    fj, xj = fi.result, xi.result
                    s.unify_t(xj.ty, opty.dom, e.span)
                    s.unify_m(fj.final_trail, xj.init_trail, e.span)
                    s.unify_t(fj.final_ans, xj.init_ans, e.span)
                    s.unify_m(xj.final_trail, opty.init_trail, e.span)
                    s.unify_t(xj.final_ans, opty.init_ans, e.span)
                    j = Judgment(
                        opty.cod, opty.final_trail, opty.final_ans, fj.init_trail, fj.init_ans
                    )
                    return Derivation("IApp", e, j, (fi, xi))
                raise TypeCheckError(
                    "Mismatch", e.span,
                    expected="a function type", actual=show_type(s.zonk_t(opty)),
                )
            case Plus(l, r) | Mul(l, r):
                op = "+" if isinstance(e, Plus) else "*"
                ld = self.synth(env, l)
                rd = self.synth(env, r)
                if ld.pure and rd.pure:
                    s.unify_t(self._ty(ld), INT, e.span)
                    s.unify_t(self._ty(rd), INT, e.span)
                    return Derivation("PPrim", e, PureJudgment(INT), (ld, rd), op=op)
                li, ri = self.impure(ld), self.impure(rd)
                lj, rj = li.result, ri.result
                s.unify_t(lj.ty, INT, e.span)
                s.unify_t(rj.ty, INT, e.span)
                s.unify_m(lj.final_trail, rj.init_trail, e.span)
                s.unify_t(lj.final_ans, rj.init_ans, e.span)
                j = Judgment(INT, rj.final_trail, rj.final_ans, lj.init_trail, lj.init_ans)
                return Derivation("IPrim", e, j, (li, ri), op=op)
            case Is0(a) | B2S(a):
                op = "is0" if isinstance(e, Is0) else "b2s"
                src, out = (INT, BOOL) if op == "is0" else (BOOL, STRING)
                ad = self.synth(env, a)
                if ad.pure:
                    s.unify_t(self._ty(ad), src, e.span)
                    return Derivation("PPrim", e, PureJudgment(out), (ad,), op=op)
                aj = ad.result
                s.unify_t(aj.ty, src, e.span)
                j = Judgment(out, aj.final_trail, aj.final_ans, aj.init_trail, aj.init_ans)
                return Derivation("IPrim", e, j, (ad,), op=op)
            case Prompt(body):
                bd = self.impure(self.synth(env, body))
                bj = bd.result
                s.unify_m(bj.init_trail, EMPTY, e.span)
                s.want_idcont(bj.ty, bj.final_trail, bj.final_ans, e.span)
                return Derivation("Prompt", e, PureJudgment(bj.init_ans), (bd,))
            case Control(k, ann, wit, body):
                if ann is None:
                    raise TypeCheckError(
                        "NeedsAnnotation", e.span, what="continuation type"
                    )
                if isinstance(ann, PureArrow):
                    bd = self.impure(self.synth({**env, k: ann}, body))
                    bj = bd.result
                    s.unify_m(bj.init_trail, EMPTY, e.span)
                    s.want_idcont(bj.ty, bj.final_trail, bj.final_ans, e.span)
                    m = s.defaultable_trail()
                    j = Judgment(ann.dom, m, ann.cod, m, bj.init_ans)
                    return Derivation("PControl", e, j, (bd,))
                if isinstance(ann, ImpureArrow):
                    bd = self.impure(self.synth({**env, k: ann}, body))
                    bj = bd.result
                    s.unify_m(bj.init_trail, EMPTY, e.span)
                    s.want_idcont(bj.ty, bj.final_trail, bj.final_ans, e.span)
                    mu0 = wit if wit is not None else s.fresh_m("w")
                    s.want_compat(
                        TrailStep(ann.cod, ann.final_trail, ann.final_ans),
                        ann.init_trail, mu0, e.span,
                    )
                    m_init = s.defaultable_trail()
                    m_final = s.fresh_m()
                    s.want_compat(m_init, mu0, m_final, e.span)
                    j = Judgment(ann.dom, m_final, ann.init_ans, m_init, bj.init_ans)
                    return Derivation("IControl", e, j, (bd,), mu0=mu0)
                raise TypeCheckError(
                    "Mismatch", e.span,
                    expected="an arrow annotation on the continuation",
                    actual=show_type(ann),
                )
            case Seq(_, _):
                raise ValueError("fine-grained checking requires a Seq-free term; desugar first")
        raise ValueError(f"not an expression: {e!r}")

    # -- zonking

    def zonk(self, d: Derivation) -> Derivation:
        s = self.solver
        kids = tuple(self.zonk(c) for c in d.children)
        if d.pure:
            ty = s.zonk_t(d.result.ty)
            if not is_ground(ty):
                raise TypeCheckError(
                    "NeedsAnnotation", d.expr.span, what=f"unresolved type {show_type(ty)}"
                )
            result: FgResult = PureJudgment(ty)
        else:
            j = d.result
            result = Judgment(
                s.zonk_t(j.ty),
                s.zonk_m(j.final_trail),
                s.zonk_t(j.final_ans),
                s.zonk_m(j.init_trail),
                s.zonk_t(j.init_ans),
            )
            for part in (result.ty, result.final_ans, result.init_ans):
                if not is_ground(part):
                    raise TypeCheckError(
                        "NeedsAnnotation", d.expr.span, what=f"unresolved type {show_type(part)}"
                    )
            for part in (result.final_trail, result.init_trail):
                if not is_ground(part):
                    raise TypeCheckError(
                        "NeedsAnnotation", d.expr.span, what=f"unresolved trail {show_trail(part)}"
                    )
        mu0 = d.mu0
        if mu0 is not None:
            mu0 = s.zonk_m(mu0)
            if not is_ground(mu0):
                raise TypeCheckError(
                    "NeedsAnnotation", d.expr.span, what=f"unresolved trail witness {show_trail(mu0)}"
                )
        return Derivation(d.rule, d.expr, result, kids, op=d.op, mu0=mu0)


def fg_check(env: TypeEnv, e: Expr) -> tuple[Derivation, FgResult]:
    """Check an annotation-complete, Seq-free term under the fine-grained
    system, preferring pure derivations."""
    ck = _FgChecker()
    d = ck.synth(dict(env), e)
    ck.solver.finalize()
    d = ck.zonk(d)
    return d, d.result


# ---------------------------------------------------------------------------
# Selective CPS translation


def selective_cps(d: Derivation) -> CExpr:
    """Derivation-directed translation: pure rules emit direct style,
    impure rules emit continuation-and-trail-passing functions."""
    supply = NameSupply(all_names(d.expr))
    return _SelectiveBuilder(supply).tr(d)


class _SelectiveBuilder:
    def __init__(self, supply: NameSupply):
        self.supply = supply

    def tr(self, d: Derivation) -> CExpr:
        s = self

        def cont_ann(j: Judgment):
            return _cont_ctype(j.ty, j.final_trail, j.final_ans)

        match d.rule:
            case "Const":
                e = d.expr
                assert isinstance(e, (IntLit, BoolLit, StrLit))
                return CConst(e.value)
            case "Var":
                assert isinstance(d.expr, Var)
                return CVar(d.expr.name)
            case "PAbs":
                e = d.expr
                assert isinstance(e, Abs)
                arrow = d.result.ty
                assert isinstance(arrow, PureArrow)
                return CAbs(e.param, s.tr(d.children[0]), ann=cps_type(arrow.dom))
            case "IAbs":
                e = d.expr
                assert isinstance(e, Abs)
                arrow = d.result.ty
                assert isinstance(arrow, ImpureArrow)
                k = s.supply.fresh("k")
                t = s.supply.fresh("t")
                inner = CApp(CApp(s.tr(d.children[0]), CVar(k)), CVar(t))
                return CAbs(
                    e.param,
                    CAbs(
                        k,
                        CAbs(t, inner, ann=cps_trail(arrow.init_trail)),
                        ann=_cont_ctype(arrow.cod, arrow.final_trail, arrow.final_ans),
                    ),
                    ann=cps_type(arrow.dom),
                )
            case "PApp":
                return CApp(s.tr(d.children[0]), s.tr(d.children[1]))
            case "PIApp":
                fd, xd = d.children
                j = d.result
                k = s.supply.fresh("k")
                v1 = s.supply.fresh("v")
                v2 = s.supply.fresh("v")
                inner = CAbs(
                    v2,
                    CApp(CVar(k), CApp(CVar(v1), CVar(v2))),
                    ann=cps_type(xd.result.ty),
                )
                mid = CAbs(v1, CApp(s.tr(xd), inner), ann=cps_type(fd.result.ty))
                return CAbs(k, CApp(s.tr(fd), mid), ann=cont_ann(j))
            case "IApp":
                fd, xd = d.children
                j = d.result
                k = s.supply.fresh("k")
                v1 = s.supply.fresh("v")
                v2 = s.supply.fresh("v")
                inner = CAbs(
                    v2,
                    CApp(CApp(CVar(v1), CVar(v2)), CVar(k)),
                    ann=cps_type(xd.result.ty),
                )
                mid = CAbs(v1, CApp(s.tr(xd), inner), ann=cps_type(fd.result.ty))
                return CAbs(k, CApp(s.tr(fd), mid), ann=cont_ann(j))
            case "PPrim":
                return CPrim(d.op, tuple(s.tr(c) for c in d.children))
            case "IPrim":
                j = d.result
                k = s.supply.fresh("k")
                if len(d.children) == 1:
                    (ad,) = d.children
                    v = s.supply.fresh("v")
                    inner = CAbs(v, CApp(CVar(k), CPrim(d.op, (CVar(v),))), ann=cps_type(ad.result.ty))
                    return CAbs(k, CApp(s.tr(ad), inner), ann=cont_ann(j))
                ld, rd = d.children
                v1 = s.supply.fresh("v")
                v2 = s.supply.fresh("v")
                inner = CAbs(
                    v2,
                    CApp(CVar(k), CPrim(d.op, (CVar(v1), CVar(v2)))),
                    ann=cps_type(rd.result.ty),
                )
                mid = CAbs(v1, CApp(s.tr(rd), inner), ann=cps_type(ld.result.ty))
                return CAbs(k, CApp(s.tr(ld), mid), ann=cont_ann(j))
            case "Exp":
                j = d.result
                k = s.supply.fresh("k")
                t = s.supply.fresh("t")
                return CAbs(
                    k,
                    CAbs(
                        t,
                        CApp(CApp(CVar(k), s.tr(d.children[0])), CVar(t)),
                        ann=cps_trail(j.init_trail),
                    ),
                    ann=cont_ann(j),
                )
            case "Prompt":
                bd = d.children[0]
                bj = bd.result
                kid = CComb("k_id", ann=_cont_ctype(bj.ty, bj.final_trail, bj.final_ans))
                return CApp(CApp(s.tr(bd), kid), CUnit())
            case "PControl":
                e = d.expr
                assert isinstance(e, Control)
                bd = d.children[0]
                bj = bd.result
                j = d.result
                k = s.supply.fresh("k")
                t = s.supply.fresh("t")
                x = s.supply.fresh("x")
                ann = e.k_ty
                assert isinstance(ann, PureArrow)
                repl = CAbs(
                    x,
                    CApp(CApp(CVar(k), CVar(x)), CVar(t)),
                    ann=cps_type(ann.dom),
                )
                translated = s.tr(bd)
                machine = _CMachine(translated)
                substituted = machine.subst(translated, e.k, repl)
                kid = CComb("k_id", ann=_cont_ctype(bj.ty, bj.final_trail, bj.final_ans))
                body = CApp(CApp(substituted, kid), CUnit())
                return CAbs(
                    k,
                    CAbs(t, body, ann=cps_trail(j.init_trail)),
                    ann=cont_ann(j),
                )
            case "IControl":
                e = d.expr
                assert isinstance(e, Control)
                bd = d.children[0]
                bj = bd.result
                j = d.result
                arrow = e.k_ty
                assert isinstance(arrow, ImpureArrow) and d.mu0 is not None
                k = s.supply.fresh("k")
                t = s.supply.fresh("t")
                x = s.supply.fresh("x")
                k2 = s.supply.fresh("k")
                t2 = s.supply.fresh("t")
                step = TrailStep(arrow.cod, arrow.final_trail, arrow.final_ans)
                cons_ref = CComb(
                    "cons",
                    ann=CArrow(
                        cps_trail(step),
                        CArrow(cps_trail(arrow.init_trail), cps_trail(d.mu0)),
                    ),
                )
                append_ref = CComb(
                    "append",
                    ann=CArrow(
                        cps_trail(j.init_trail),
                        CArrow(cps_trail(d.mu0), cps_trail(j.final_trail)),
                    ),
                )
                extended = CApp(CApp(append_ref, CVar(t)), CApp(CApp(cons_ref, CVar(k2)), CVar(t2)))
                repl = CAbs(
                    x,
                    CAbs(
                        k2,
                        CAbs(t2, CApp(CApp(CVar(k), CVar(x)), extended), ann=cps_trail(arrow.init_trail)),
                        ann=cps_trail(step),
                    ),
                    ann=cps_type(arrow.dom),
                )
                translated = s.tr(bd)
                machine = _CMachine(translated)
                substituted = machine.subst(translated, e.k, repl)
                kid = CComb("k_id", ann=_cont_ctype(bj.ty, bj.final_trail, bj.final_ans))
                body = CApp(CApp(substituted, kid), CUnit())
                return CAbs(
                    k,
                    CAbs(t, body, ann=cps_trail(j.init_trail)),
                    ann=cont_ann(j),
                )
        raise ValueError(f"unknown rule {d.rule!r}")


def run_selective(
    e: Expr, fuel: Optional[int] = None, watchdog: Optional[float] = None
) -> CEvalOutcome:
    """fg-check, selectively translate, then evaluate (pure images run
    directly; impure ones against the identity continuation and the
    empty trail)."""
    d, result = fg_check({}, e)
    image = selective_cps(d)
    if isinstance(result, PureJudgment):
        return eval_c(image, fuel=fuel, watchdog=watchdog)
    prog = CApp(CApp(image, CComb("k_id")), CUnit())
    return eval_c(prog, fuel=fuel, watchdog=watchdog)


# ---------------------------------------------------------------------------
# The shift encoding


def shift_encode(
    cont_var: str,
    body: Expr,
    simplified: bool = False,
    cont_ty: Optional[SourceType] = None,
) -> Expr:
    """Encode a shift operator via control/prompt.

    The full encoding captures with a fresh variable and wraps every
    use of the continuation in a prompt; the simplified encoding is a
    plain control whose continuation is annotated with a pure arrow.
    """
    if simplified:
        return Control(cont_var, cont_ty, None, body)
    supply = NameSupply(all_names(body) | {cont_var})
    kp = supply.fresh("k")
    x = supply.fresh("x")
    dom = cont_ty.dom if isinstance(cont_ty, (PureArrow, ImpureArrow)) else None
    wrapper = Abs(x, dom, Prompt(App(Var(kp), Var(x))))
    return Control(kp, None, None, subst(body, cont_var, wrapper, supply))
