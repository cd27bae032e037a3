"""Dense two-phase simplex for the small linear programs that arise in
flexible-skyline queries, and the convex-combination dominance test built on it.

The solver uses Bland's rule for both the entering and the leaving variable, so
it cannot cycle and is fully deterministic.  Problems here have a few dozen
variables at most; robustness matters more than speed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import LpStructureError, NumericalFailure

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-10
_COST_TOL = 1e-11
_TINY_PIVOT = 1e-12


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """``minimize c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
    and per-variable ``bounds`` (``None`` for an infinite side; default ``(0, None)``)."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: Sequence[tuple[float | None, float | None]] | None = None
    tol: float = 1e-9

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        elif len(self.bounds) != n:
            raise LpStructureError(f"{len(self.bounds)} bounds given for {n} variables")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise LpStructureError(f"empty variable range [{lo}, {hi}]")
        if not self.tol > 0:
            raise LpStructureError("tolerance must be positive")

    @property
    def n_vars(self) -> int:
        return self.c.size


def _rows(A, b, n: int, what: str) -> tuple[np.ndarray, np.ndarray]:
    if A is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    if A is None or b is None:
        raise LpStructureError(f"{what} constraints need both a matrix and a right-hand side")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, n)
    if A.shape[1] != n:
        raise LpStructureError(f"{what} matrix has {A.shape[1]} columns for {n} variables")
    if A.shape[0] != b.size:
        raise LpStructureError(f"{what} matrix has {A.shape[0]} rows but {b.size} bounds")
    return A, b


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    value: float | None = None
    x: np.ndarray | None = field(default=None, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    colvals = tab[:, col].copy()
    colvals[row] = 0.0
    tab -= np.outer(colvals, tab[row])


def _leaving_row(column: np.ndarray, rhs: np.ndarray, basis: list[int], harris: bool) -> int:
    """Row that leaves the basis, or -1 when the column is unbounded."""
    if harris:
        eligible = np.flatnonzero(column > _PIVOT_TOL)
        if eligible.size == 0:
            return -1
        # bound the step with slightly relaxed rows, then take the largest
        # pivot among rows that block within that step
        step = np.min((np.maximum(rhs[eligible], 0.0) + _FEAS_TOL) / column[eligible])
        blocking = [i for i in eligible if max(rhs[i], 0.0) / column[i] <= step]
        return min(blocking, key=lambda i: (-column[i], basis[i]))
    best_row, best_ratio = -1, math.inf
    for i in np.flatnonzero(column > _TINY_PIVOT):
        ratio = rhs[i] / column[i]
        slack = 1e-12 * (1.0 + abs(ratio))
        if ratio < best_ratio - slack or (abs(ratio - best_ratio) <= slack and basis[i] < basis[best_row]):
            best_row, best_ratio = int(i), ratio
    return best_row


def _run(tab: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int, harris: bool) -> bool:
    """Simplex iterations on a tableau whose last row holds reduced costs and
    whose last column holds the right-hand side.  Returns False if unbounded."""
    m = len(basis)
    for _ in range(max_iter):
        costs = tab[-1, :-1]
        entering = -1
        for j in np.flatnonzero(allowed):
            if costs[j] < -_COST_TOL:
                entering = j
                break
        if entering < 0:
            return True
        row = _leaving_row(tab[:m, entering], tab[:m, -1], basis, harris)
        if row < 0:
            return False
        _pivot(tab, row, entering)
        basis[row] = entering
        if harris:
            rhs = tab[:m, -1]
            rhs[(rhs < 0.0) & (rhs > -_FEAS_TOL)] = 0.0
    raise NumericalFailure(f"simplex exceeded {max_iter} iterations")


def _price_out(tab: np.ndarray, basis: list[int], costs: np.ndarray) -> None:
    tab[-1, :] = 0.0
    tab[-1, : costs.size] = costs
    for i, b in enumerate(basis):
        if tab[-1, b] != 0.0:
            tab[-1] -= tab[-1, b] * tab[i]


def solve(lp: LinearProgram, max_iter: int = 10_000) -> LpOutcome:
    """Solve ``lp`` and certify the optimum by re-substitution.

    The first attempt uses a Harris ratio test, which avoids tiny pivots on
    badly scaled data.  If its point fails certification the program is solved
    again with the textbook ratio test.  Raises :class:`NumericalFailure` when
    both attempts fail or the iteration cap is hit.
    """
    try:
        return _solve(lp, max_iter, harris=True)
    except NumericalFailure:
        return _solve(lp, max_iter, harris=False)


def _solve(lp: LinearProgram, max_iter: int, harris: bool) -> LpOutcome:
    n = lp.n_vars
    # x = offset + transform @ y with y >= 0
    offset = np.zeros(n)
    cols: list[np.ndarray] = []
    extra_ub: list[tuple[int, float]] = []
    for i, (lo, hi) in enumerate(lp.bounds):
        unit = np.zeros(n)
        unit[i] = 1.0
        if lo is not None and math.isfinite(lo):
            offset[i] = lo
            cols.append(unit)
            if hi is not None and math.isfinite(hi):
                extra_ub.append((len(cols) - 1, hi - lo))
        elif hi is not None and math.isfinite(hi):
            offset[i] = hi
            cols.append(-unit)
        else:
            cols.append(unit)
            cols.append(-unit)
    transform = np.column_stack(cols) if cols else np.zeros((n, 0))
    ny = transform.shape[1]

    A_ub = lp.A_ub @ transform
    b_ub = lp.b_ub - lp.A_ub @ offset
    if extra_ub:
        rows = np.zeros((len(extra_ub), ny))
        for r, (j, cap) in enumerate(extra_ub):
            rows[r, j] = 1.0
        A_ub = np.vstack([A_ub, rows])
        b_ub = np.concatenate([b_ub, [cap for _, cap in extra_ub]])
    A_eq = lp.A_eq @ transform
    b_eq = lp.b_eq - lp.A_eq @ offset
    c_y = lp.c @ transform

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    flip_ub = b_ub < 0
    flip_eq = b_eq < 0
    needs_art = np.concatenate([flip_ub, np.ones(m_eq, dtype=bool)])
    n_art = int(needs_art.sum())
    width = ny + m_ub + n_art
    tab = np.zeros((m + 1, width + 1))
    basis: list[int] = []
    art = ny + m_ub
    for i in range(m_ub):
        sign = -1.0 if flip_ub[i] else 1.0
        tab[i, :ny] = sign * A_ub[i]
        tab[i, ny + i] = sign
        tab[i, -1] = sign * b_ub[i]
        if flip_ub[i]:
            tab[i, art] = 1.0
            basis.append(art)
            art += 1
        else:
            basis.append(ny + i)
    for k in range(m_eq):
        i = m_ub + k
        sign = -1.0 if flip_eq[k] else 1.0
        tab[i, :ny] = sign * A_eq[k]
        tab[i, -1] = sign * b_eq[k]
        tab[i, art] = 1.0
        basis.append(art)
        art += 1

    is_art = np.zeros(width, dtype=bool)
    is_art[ny + m_ub :] = True
    scale = 1.0 + float(np.max(np.abs(tab[:m, -1]), initial=0.0))
    original = tab[:m].copy()
    keep = list(range(m))

    if n_art:
        phase1 = np.where(is_art, 1.0, 0.0)
        _price_out(tab, basis, phase1)
        _run(tab, basis, np.ones(width, dtype=bool), max_iter, harris)
        if -tab[-1, -1] > lp.tol * scale:
            return LpOutcome(LpStatus.INFEASIBLE)
        keep = []
        for i in range(m):
            if is_art[basis[i]]:
                row = np.where(is_art, 0.0, np.abs(tab[i, :width]))
                col = int(np.argmax(row))
                if row[col] > 1e-9:
                    _pivot(tab, i, col)
                    basis[i] = col
                    keep.append(i)
                # otherwise the row is redundant and is dropped
            else:
                keep.append(i)
        tab = tab[keep + [m]]
        basis = [basis[i] for i in keep]
        tab[:, :width][:, is_art] = 0.0

    costs = np.zeros(width)
    costs[:ny] = c_y
    _price_out(tab, basis, costs)
    if not _run(tab, basis, ~is_art, max_iter, harris):
        return LpOutcome(LpStatus.UNBOUNDED)

    y = np.zeros(width)
    y[basis] = _refine(original[keep], basis, tab[: len(basis), -1], lp.tol * scale)
    x = offset + transform @ y[:ny]
    value = float(lp.c @ x)
    _certify(lp, x)
    return LpOutcome(LpStatus.OPTIMAL, value, x)


def _refine(rows: np.ndarray, basis: list[int], values: np.ndarray, tol: float) -> np.ndarray:
    """Recompute the basic values from the untouched constraint rows.

    Pivoting accumulates rounding in the tableau; solving the final basis
    against the original data removes it.  The tableau values are kept when
    the basis matrix is ill-conditioned or the refined point is infeasible.
    """
    if not basis:
        return values
    B = rows[:, basis]
    try:
        refined = np.linalg.solve(B, rows[:, -1])
    except np.linalg.LinAlgError:
        return values
    if not np.all(np.isfinite(refined)) or refined.min() < -tol:
        return values
    return np.maximum(refined, 0.0)


def _certify(lp: LinearProgram, x: np.ndarray) -> None:
    tol = lp.tol
    if lp.A_ub.shape[0]:
        slack = lp.A_ub @ x - lp.b_ub
        if np.any(slack > tol * (1.0 + np.abs(lp.b_ub))):
            raise NumericalFailure(f"optimal point violates an inequality by {slack.max():.3g}")
    if lp.A_eq.shape[0]:
        gap = np.abs(lp.A_eq @ x - lp.b_eq)
        if np.any(gap > tol * (1.0 + np.abs(lp.b_eq))):
            raise NumericalFailure(f"optimal point violates an equality by {gap.max():.3g}")
    for xi, (lo, hi) in zip(x, lp.bounds):
        if (lo is not None and xi < lo - tol) or (hi is not None and xi > hi + tol):
            raise NumericalFailure(f"optimal point leaves its bounds [{lo}, {hi}]")


def mixture_gap(rows: np.ndarray, target: np.ndarray, tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Smallest ``delta`` such that some convex combination of ``rows`` lies at
    or below ``target + delta`` in every column, with the mixing weights."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    target = np.asarray(target, dtype=float)
    k, v = rows.shape
    # variables: k mixing weights, then delta
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.hstack([rows.T, -np.ones((v, 1))])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    bounds = [(0.0, None)] * k + [(None, None)]
    out = solve(LinearProgram(c, A_ub, target, A_eq, [1.0], bounds, tol))
    if not out.optimal:
        raise NumericalFailure(f"mixture program ended {out.status.value}")
    weights = np.clip(out.x[:k], 0.0, None)
    return out.value, weights / weights.sum()


def _strict_witness(rows: np.ndarray, target: np.ndarray, tol: float) -> np.ndarray | None:
    """A mixture within ``tol`` of ``target`` everywhere and more than ``tol``
    below it somewhere, if one exists."""
    k, v = rows.shape
    A_eq = np.ones((1, k))
    for col in range(v):
        out = solve(
            LinearProgram(rows[:, col], rows.T, target + tol, A_eq, [1.0], tol=tol)
        )
        if out.optimal and out.value < target[col] - tol:
            weights = np.clip(out.x, 0.0, None)
            return weights / weights.sum()
    return None


def convex_combination_dominates(
    scores, candidates: Sequence[str], target: str, tolerance: float = 1e-9
) -> tuple[bool, dict[str, float] | None]:
    """Whether some convex combination of the ``candidates`` rows of ``scores``
    F-dominates the ``target`` row.

    Dominance means no worse than the target at every vertex and strictly
    better, by more than ``tolerance``, at one at least.  Returns the flag and,
    when it holds, the witnessing mixture keyed by tuple id.
    """
    if target in candidates:
        raise ValueError(f"target {target!r} is among the candidates")
    if not candidates:
        return False, None
    rows = scores.rows(candidates)
    t = scores.row(target)
    delta, weights = mixture_gap(rows, t, tolerance)
    if delta < -tolerance:
        witness = weights
    elif delta <= tolerance:
        witness = _strict_witness(rows, t, tolerance)
        if witness is None:
            return False, None
    else:
        return False, None
    return True, {cid: float(w) for cid, w in zip(candidates, witness) if w > 0.0}


__all__ = [
    "LinearProgram",
    "LpOutcome",
    "LpStatus",
    "solve",
    "mixture_gap",
    "convex_combination_dominates",
]
