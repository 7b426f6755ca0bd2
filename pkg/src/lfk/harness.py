"""Program corpus, bounded enumeration of well-typed programs, and the
differential-testing driver.

The enumerator builds closed candidate terms bottom-up under a cheap
structural type discipline (base types plus a wildcard for everything
the simple pass cannot track), then keeps exactly the candidates that
infer accepts at a pure top-level judgment (goal, *, a, *, a).  The
differential driver runs the direct interpreter, the full CPS image
and the selective image under a shared wall-clock watchdog and compares
base-type results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional, Union

from . import cps, eval as ev
from .finegrained import PureJudgment, fg_check, selective_cps
from .syntax import (
    Abs,
    App,
    B2S,
    Base,
    BoolLit,
    Control,
    EMPTY,
    Expr,
    IntLit,
    Is0,
    Mul,
    Plus,
    Prompt,
    SourceType,
    StrLit,
    Var,
    desugar,
    expr_size,
    parse,
    print_expr,
)
from .typecheck import Elaboration, Judgment, TypeCheckError, infer

ENUM_SIZE_CEILING = 8
DEFAULT_WATCHDOG = 10.0


# ---------------------------------------------------------------------------
# Corpus


@dataclass
class CorpusEntry:
    """One .lf program with its .expect record.

    expect keys: "type" (printed source type, or "reject"), "result"
    (a JSON constant, or "reject"/"diverge"), optional "fg_type".
    """

    name: str
    path: Path
    source: str
    expr: Expr  # parsed and desugared
    expect: dict


def load_corpus(directory: Union[str, Path]) -> list[CorpusEntry]:
    directory = Path(directory)
    entries = []
    for lf in sorted(directory.glob("*.lf")):
        source = lf.read_text(encoding="utf-8")
        expect_path = lf.with_suffix(".expect")
        expect = json.loads(expect_path.read_text(encoding="utf-8")) if expect_path.exists() else {}
        entries.append(
            CorpusEntry(
                name=lf.stem,
                path=lf,
                source=source,
                expr=desugar(parse(source, allow_shift=True)),
                expect=expect,
            )
        )
    return entries


def default_corpus_dir() -> Path:
    """The corpus shipped at the repository root."""
    here = Path(__file__).resolve()
    for parent in here.parents:
        cand = parent / "corpus"
        if cand.is_dir():
            return cand
    raise FileNotFoundError("no corpus/ directory found above the package")


# ---------------------------------------------------------------------------
# Differential testing


@dataclass
class DiffReport:
    program: str
    direct: Optional[str]
    full_cps: Optional[str]
    selective: Optional[str]
    verdict: str  # Agree | Disagree | Timeout
    steps: dict[str, int] = field(default_factory=dict)
    sizes: dict[str, int] = field(default_factory=dict)

    def as_json(self) -> dict:
        return {
            "program": self.program,
            "direct": self.direct,
            "fullCps": self.full_cps,
            "selective": self.selective,
            "verdict": self.verdict,
            "steps": self.steps,
            "sizes": self.sizes,
        }


def _render(payload) -> str:
    if isinstance(payload, bool):
        return "true" if payload else "false"
    if isinstance(payload, str):
        return json.dumps(payload)
    return str(payload)


def diff_test(
    e: Expr, name: str = "<expr>", watchdog: float = DEFAULT_WATCHDOG
) -> DiffReport:
    """Run the three pipelines on a program accepted by both type
    systems at a base result type and compare the results."""
    _, elab = infer({}, e)
    prog = elab.expr

    steps: dict[str, int] = {}
    sizes: dict[str, int] = {"source": expr_size(prog)}
    results: dict[str, Optional[str]] = {}
    payloads: dict[str, object] = {}
    timed_out = False

    direct = ev.evaluate(prog, watchdog=watchdog)
    match direct:
        case ev.EvalResult(v, n):
            payloads["direct"] = ev.base_payload(v)
            results["direct"] = _render(payloads["direct"])
            steps["direct"] = n
        case ev.EvalTimeout(n, _):
            results["direct"] = None
            steps["direct"] = n
            timed_out = True
        case _:
            results["direct"] = f"stuck: {direct.reason}"
            steps["direct"] = direct.steps

    full_image = cps.cps_expr(prog)
    sizes["full_cps"] = cps.csize(full_image)
    full = cps.eval_c(
        cps.CApp(cps.CApp(full_image, cps.CComb("k_id")), cps.CUnit()), watchdog=watchdog
    )
    match full:
        case cps.CEvalResult(v, n):
            payloads["full_cps"] = cps.c_base_payload(v)
            results["full_cps"] = _render(payloads["full_cps"])
            steps["full_cps"] = n
        case cps.CEvalTimeout(n, _):
            results["full_cps"] = None
            steps["full_cps"] = n
            timed_out = True
        case _:
            results["full_cps"] = f"stuck: {full.reason}"
            steps["full_cps"] = full.steps

    deriv, result = fg_check({}, prog)
    sel_image = selective_cps(deriv)
    sizes["selective"] = cps.csize(sel_image)
    if isinstance(result, PureJudgment):
        sel_prog = sel_image
    else:
        sel_prog = cps.CApp(cps.CApp(sel_image, cps.CComb("k_id")), cps.CUnit())
    sel = cps.eval_c(sel_prog, watchdog=watchdog)
    match sel:
        case cps.CEvalResult(v, n):
            payloads["selective"] = cps.c_base_payload(v)
            results["selective"] = _render(payloads["selective"])
            steps["selective"] = n
        case cps.CEvalTimeout(n, _):
            results["selective"] = None
            steps["selective"] = n
            timed_out = True
        case _:
            results["selective"] = f"stuck: {sel.reason}"
            steps["selective"] = sel.steps

    if timed_out:
        verdict = "Timeout"
    elif (
        len(payloads) == 3
        and payloads["direct"] is not None
        and payloads["direct"] == payloads["full_cps"] == payloads["selective"]
    ):
        verdict = "Agree"
    else:
        verdict = "Disagree"
    return DiffReport(
        program=name,
        direct=results.get("direct"),
        full_cps=results.get("full_cps"),
        selective=results.get("selective"),
        verdict=verdict,
        steps=steps,
        sizes=sizes,
    )


# ---------------------------------------------------------------------------
# Enumeration of well-typed programs
#
# Candidate generation uses a wildcard-tolerant structural type pass:
# "any" stands for types the pass cannot track (prompt results and
# continuation uses).  It only prunes, never admits anything infer
# would reject, because every equation it enforces is implied by the
# real type system.

_ANY = "any"
_BASES = ("int", "bool", "string")
_GOALS = {"int": Base("int"), "bool": Base("bool"), "string": Base("string")}


def _st_fits(a, b) -> bool:
    if a == _ANY or b == _ANY:
        return True
    if isinstance(a, tuple) and isinstance(b, tuple):
        return _st_fits(a[1], b[1]) and _st_fits(a[2], b[2])
    return a == b


class _Enumerator:
    def __init__(self):
        self._memo: dict[tuple[int, tuple], list[tuple[Expr, object]]] = {}

    def terms(self, size: int, env: tuple) -> list[tuple[Expr, object]]:
        key = (size, env)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out: list[tuple[Expr, object]] = []
        if size == 1:
            out.append((IntLit(0), "int"))
            out.append((IntLit(1), "int"))
            out.append((BoolLit(True), "bool"))
            out.append((StrLit("a"), "string"))
            for name, st in env:
                out.append((Var(name), st))
        elif size >= 2:
            inner = size - 1
            depth = len(env)
            # unary forms
            for b, bt in self.terms(inner, env):
                out.append((Prompt(b), _ANY))
                if _st_fits(bt, "int"):
                    out.append((Is0(b), "bool"))
                if _st_fits(bt, "bool"):
                    out.append((B2S(b), "string"))
            # binders
            xname = f"x{depth}"
            for base in _BASES:
                for b, bt in self.terms(inner, env + ((xname, base),)):
                    out.append((Abs(xname, Base(base), b), ("fun", base, bt)))
            kname = f"k{depth}"
            for b, _bt in self.terms(inner, env + ((kname, ("fun", _ANY, _ANY)),)):
                out.append((Control(kname, None, None, b), _ANY))
            # binary forms
            for lsize in range(1, size - 1):
                rsize = size - 1 - lsize
                for l, lt in self.terms(lsize, env):
                    for r, rt in self.terms(rsize, env):
                        if _st_fits(lt, "int") and _st_fits(rt, "int"):
                            out.append((Plus(l, r), "int"))
                            out.append((Mul(l, r), "int"))
                        if lt == _ANY:
                            out.append((App(l, r), _ANY))
                        elif isinstance(lt, tuple) and _st_fits(rt, lt[1]):
                            out.append((App(l, r), lt[2]))
        self._memo[key] = out
        return out


def enumerate_candidates(size_bound: int) -> Iterator[Expr]:
    """All closed candidate terms of node count <= size_bound, before
    the infer filter."""
    en = _Enumerator()
    for size in range(1, size_bound + 1):
        for expr, _st in en.terms(size, ()):
            yield expr


def enumerate_programs(
    size_bound: int, goal: Union[SourceType, str]
) -> Iterator[tuple[Expr, Judgment, Elaboration]]:
    """All closed Seq-free programs of node count <= size_bound that
    infer accepts at judgment (goal, *, a, *, a)."""
    if size_bound > ENUM_SIZE_CEILING:
        raise ValueError(f"size bound {size_bound} exceeds the ceiling {ENUM_SIZE_CEILING}")
    goal_ty = _GOALS[goal] if isinstance(goal, str) else goal
    for expr in enumerate_candidates(size_bound):
        try:
            j, elab = infer({}, expr)
        except TypeCheckError:
            continue
        except RecursionError:  # pathological candidates only
            continue
        if (
            j.ty == goal_ty
            and j.final_trail == EMPTY
            and j.init_trail == EMPTY
            and j.final_ans == j.init_ans
        ):
            yield expr, j, elab
