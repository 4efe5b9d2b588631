"""Sample-complexity calculator for the per-input frequency estimator.

With ``N_x`` samples of input ``x`` the frequency estimate satisfies
``E[TV^2] <= 1 / (16 N_x)``, so ``N* = ceil(1 / (16 eps^2))`` samples per input
give expected squared error at most ``eps^2``. The chance that some input gets
fewer than ``N*`` samples out of ``N`` is controlled by the Chernoff bound
``P(Bin(N, p_x) <= N*) <= exp(-N * KL(N*/N || p_x))`` plus a union bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from scipy.stats import binom


class InvalidRegimeError(ValueError):
    """Raised when the tail bound's precondition ``N*/N <= p_x < 1`` fails."""


def _exact(value) -> Fraction:
    # repr keeps 0.05 as 1/20 instead of its binary neighbour
    return Fraction(repr(value)) if isinstance(value, float) else Fraction(value)


def required_per_input(epsilon: float) -> int:
    """Smallest integer ``N*`` with ``1 / (16 N*) <= epsilon^2``."""
    eps = _exact(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    return math.ceil(1 / (16 * eps * eps))


def bernoulli_kl(a: float, b: float) -> float:
    """KL(Bernoulli(a) || Bernoulli(b)) in nats."""
    if not (0.0 <= a <= 1.0 and 0.0 < b < 1.0):
        raise ValueError("need 0 <= a <= 1 and 0 < b < 1")
    out = 0.0
    if a > 0:
        out += a * math.log(a / b)
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - b))
    return out


def tail_bound(N: int, N_star: float, p_x: float) -> float:
    """Chernoff upper bound on ``P(N_x <= N_star)`` for ``N_x ~ Bin(N, p_x)``."""
    if N <= 0:
        raise InvalidRegimeError("N must be positive")
    a = N_star / N
    if not (0 < a <= p_x < 1):
        raise InvalidRegimeError(f"bound needs 0 < N*/N <= p_x < 1, got N*/N={a:.6g}, p_x={p_x:.6g}")
    return math.exp(-N * bernoulli_kl(a, p_x))


def exact_tail(N: int, N_star: float, p_x: float) -> float:
    """Exact ``P(Bin(N, p_x) <= N_star)``."""
    return float(binom.cdf(math.floor(N_star), N, p_x))


def total_budget(num_inputs: int, per_input_target: int) -> int:
    return int(num_inputs) * int(per_input_target)


def union_bound(num_inputs: int, per_input_tail: float) -> float:
    return min(1.0, num_inputs * per_input_tail)


@dataclass(frozen=True)
class BoundRow:
    epsilon: float
    num_inputs: int
    N: int
    N_star: int
    p_x: float
    tail_bound: float | None
    union_bound: float | None
    exact_tail: float
    exact_union: float
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def bound_table(epsilon: float, num_inputs: int, N: int, targets=None) -> list[BoundRow]:
    """Tail bounds for a total budget ``N`` at several per-input targets.

    By default the table covers ``N*`` (from ``epsilon``) and ``N / num_inputs``
    when that is larger. Every row bounds the event ``N_x <= N*``. Rows outside
    the bound's regime report ``None`` for the analytic columns, alongside the
    exact binomial values.
    """
    if num_inputs < 1:
        raise ValueError("num_inputs must be >= 1")
    p_x = 1.0 / num_inputs
    n_star = required_per_input(epsilon)
    if targets is None:
        targets = sorted({n_star, max(n_star, N // num_inputs)})
    rows = []
    for target in targets:
        exact = exact_tail(N, target, p_x)
        try:
            tb = tail_bound(N, target, p_x)
            ub, note = union_bound(num_inputs, tb), ""
        except InvalidRegimeError as exc:
            tb = ub = None
            note = str(exc)
        rows.append(
            BoundRow(
                epsilon=epsilon,
                num_inputs=num_inputs,
                N=N,
                N_star=target,
                p_x=p_x,
                tail_bound=tb,
                union_bound=ub,
                exact_tail=exact,
                exact_union=union_bound(num_inputs, exact),
                note=note,
            )
        )
    return rows


def format_table(rows: list[BoundRow]) -> str:
    def fmt(v):
        return "n/a" if v is None else f"{v:.6g}"

    header = f"{'N*':>6} {'N':>10} {'p_x':>10} {'tail':>12} {'union':>12} {'exact':>12} {'exact_union':>12}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.N_star:>6} {r.N:>10} {fmt(r.p_x):>10} {fmt(r.tail_bound):>12} "
            f"{fmt(r.union_bound):>12} {fmt(r.exact_tail):>12} {fmt(r.exact_union):>12}"
        )
        if r.note:
            lines.append(f"       ({r.note})")
    return "\n".join(lines)
