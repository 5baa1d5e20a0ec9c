"""Alternating-fitting iteration engine.

Runs the row/column rescaling loop from a :class:`~bipfit.core.FittingProblem`
and records everything the downstream diagnostics need: every marginal-ratio
vector, every L1 marginal error, and (possibly decimated) iterates.  Odd
iterates are row-fitted, even iterates (from index 2 on) are column-fitted.

Three stopping outcomes exist.  ``CONVERGED`` means the marginal error fell
below tolerance; ``EVEN_ODD_CONVERGED`` means both parity subsequences went
Cauchy while the error stayed up — the signature of a divergent instance
settling into its two oscillation limits; ``ITERATION_CAP`` speaks for
itself.  The engine never thresholds small entries to zero mid-run: the
support is fixed by the seed and preserved exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import FittingProblem, MarginalRatios, fit_rows

#: Default cap on the number of stored iterate matrices before decimation.
STORE_CAP = 10_000


class StopReason(Enum):
    CONVERGED = "Converged"
    EVEN_ODD_CONVERGED = "EvenOddConverged"
    ITERATION_CAP = "IterationCap"


@dataclass(frozen=True)
class StoppingRule:
    """Stopping thresholds for :func:`run`.

    ``tol_marginal`` bounds the L1 marginal error for plain convergence;
    ``tol_even_odd`` bounds the last-8 window of consecutive same-parity
    iterate differences for oscillation detection; ``max_iters`` caps the
    iteration count.
    """

    tol_marginal: float = 1e-10
    tol_even_odd: float = 1e-12
    max_iters: int = 100_000

    def __post_init__(self):
        if self.tol_marginal <= 0 or self.tol_even_odd <= 0:
            raise ValueError("stopping tolerances must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


#: Width of the sliding window used for the even/odd Cauchy test.
_CAUCHY_WINDOW = 8


class _TraceStore:
    """Iterate storage with keep-every-k-th decimation above a cap.

    The stride doubles whenever the store overflows, so at most ``cap``
    matrices are ever held while indices stay uniformly spaced.
    """

    def __init__(self, cap: int):
        self.cap = int(cap)
        self.stride = 1
        self.indices: list[int] = []
        self.matrices: list[np.ndarray] = []

    def add(self, n: int, x: np.ndarray) -> None:
        if n % self.stride:
            return
        self.indices.append(n)
        self.matrices.append(x)
        if len(self.matrices) > self.cap:
            self.stride *= 2
            keep = [k for k, i in enumerate(self.indices) if i % self.stride == 0]
            self.indices = [self.indices[k] for k in keep]
            self.matrices = [self.matrices[k] for k in keep]


@dataclass
class IterationTrace:
    """Complete record of one engine run.

    ``ratio_rows[n]``, ``ratio_cols[n]`` and ``errors[n]`` cover every
    iterate ``X_0 .. X_N`` in full.  Stored matrices may be decimated above
    the memory cap (``stored_indices`` says which survive; the stride is a
    power of two, so surviving indices stay arithmetic).  The final iterate
    of each parity is always retained separately.
    """

    problem: FittingProblem
    stored_indices: np.ndarray
    stored_matrices: list[np.ndarray]
    ratio_rows: np.ndarray
    ratio_cols: np.ndarray
    errors: np.ndarray
    stop_reason: StopReason
    last_even: tuple[int, np.ndarray] = field(repr=False, default=None)
    last_odd: tuple[int, np.ndarray] | None = field(repr=False, default=None)

    @property
    def n_iters(self) -> int:
        """Index of the final iterate (the trace holds ``n_iters + 1`` states)."""
        return len(self.errors) - 1

    def iterate(self, n: int) -> np.ndarray:
        """Stored iterate ``X_n``; raises ``KeyError`` if decimated away."""
        pos = np.searchsorted(self.stored_indices, n)
        if pos == len(self.stored_indices) or self.stored_indices[pos] != n:
            raise KeyError(f"iterate {n} was not stored (decimation stride)")
        return self.stored_matrices[pos]

    def ratios(self, n: int) -> MarginalRatios:
        return MarginalRatios(rows=self.ratio_rows[n], cols=self.ratio_cols[n])

    def even_limit(self) -> np.ndarray:
        """Final even iterate — the even-limit estimate."""
        return self.last_even[1]

    def odd_limit(self) -> np.ndarray:
        """Final odd iterate — the odd-limit estimate."""
        if self.last_odd is None:
            raise ValueError("trace stopped before the first odd iterate")
        return self.last_odd[1]

    def stored_with_parity(self, parity: int) -> tuple[np.ndarray, list[np.ndarray]]:
        """Stored (indices, matrices) restricted to one parity (0=even, 1=odd)."""
        mask = (self.stored_indices % 2) == parity
        idx = self.stored_indices[mask]
        mats = [m for m, keep in zip(self.stored_matrices, mask) if keep]
        return idx, mats


def run(problem: FittingProblem, rule: StoppingRule | None = None,
        store_cap: int = STORE_CAP) -> IterationTrace:
    """Run the alternating fitting iteration until a stopping rule fires.

    ``X_0`` is the (normalized) seed; ``X_{2k+1} = fit_rows(X_2k, a)``;
    ``X_{2k+2} = fit_cols(X_{2k+1}, b)``.  The loop body is kept lean on
    purpose: slow instances legitimately need tens of thousands of steps.

    Returns
    -------
    IterationTrace
    """
    if rule is None:
        rule = StoppingRule()
    a, b = problem.a, problem.b
    x = problem.x0
    r_hist: list[np.ndarray] = []
    c_hist: list[np.ndarray] = []
    e_hist: list[float] = []
    store = _TraceStore(store_cap)
    prev: list[np.ndarray | None] = [None, None]
    diffs = (deque(maxlen=_CAUCHY_WINDOW), deque(maxlen=_CAUCHY_WINDOW))
    last: list[tuple[int, np.ndarray] | None] = [None, None]

    tol_e = rule.tol_marginal
    tol_eo = rule.tol_even_odd
    cap = rule.max_iters
    n = 0
    while True:
        rows = x.sum(axis=1)
        cols = x.sum(axis=0)
        r_hist.append(rows / a)
        c_hist.append(cols / b)
        e = float(np.abs(rows - a).sum() + np.abs(cols - b).sum())
        e_hist.append(e)
        store.add(n, x)
        par = n & 1
        last[par] = (n, x)
        if prev[par] is not None:
            diffs[par].append(float(np.abs(x - prev[par]).sum()))
        prev[par] = x

        if e < tol_e:
            reason = StopReason.CONVERGED
            break
        if (
            len(diffs[0]) == _CAUCHY_WINDOW
            and len(diffs[1]) == _CAUCHY_WINDOW
            and max(diffs[0]) < tol_eo
            and max(diffs[1]) < tol_eo
        ):
            reason = StopReason.EVEN_ODD_CONVERGED
            break
        if n >= cap:
            reason = StopReason.ITERATION_CAP
            break
        if par == 0:
            x = x * (a / rows)[:, None]
        else:
            x = x * (b / cols)[None, :]
        n += 1

    return IterationTrace(
        problem=problem,
        stored_indices=np.asarray(store.indices, dtype=int),
        stored_matrices=store.matrices,
        ratio_rows=np.asarray(r_hist),
        ratio_cols=np.asarray(c_hist),
        errors=np.asarray(e_hist),
        stop_reason=reason,
        last_even=last[0],
        last_odd=last[1],
    )


# ---------------------------------------------------------------------------
# ratio propagation


def ratio_update_matrix(x, a, b, col_tol: float = 1e-8) -> np.ndarray:
    """Stochastic matrix propagating row-ratio vectors across a double step.

    For a column-fitted ``x`` the row ratios obey
    ``rows(fit_cols(fit_rows(x,a),b))/a = P @ (rows(x)/a)`` with
    ``P(i,k) = sum_j y(i,j) y(k,j) / (a_i b_j c_j)`` where ``y = fit_rows(x, a)``
    and ``c = cols(y)/b``.  ``P`` has unit row sums by construction.

    Raises
    ------
    ValueError
        If ``x`` is not column-fitted within ``col_tol``.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cols = x.sum(axis=0) / b
    dev = float(np.abs(cols - 1.0).max())
    if dev > col_tol:
        raise ValueError(
            f"matrix is not column-fitted: max |C_j - 1| = {dev:g} > {col_tol:g}"
        )
    y = fit_rows(x, a)
    cy = y.sum(axis=0) / b
    return (y / (b * cy)) @ y.T / a[:, None]


def ratio_update_matrices(trace: IterationTrace, start: int = 2) -> list[np.ndarray]:
    """Harvest ``P(X_n)`` for every stored even iterate ``n >= start``.

    The backward product of the result, applied to ``rows(X_2)/a``, walks the
    row-ratio vectors down the even subsequence — so the list is only
    product-meaningful when no even iterate in range was decimated away.
    """
    idx, mats = trace.stored_with_parity(0)
    if len(idx) >= 2 and np.any(np.diff(idx) != 2):
        raise ValueError(
            "trace was decimated; consecutive even iterates are unavailable"
        )
    a, b = trace.problem.a, trace.problem.b
    return [ratio_update_matrix(m, a, b) for n, m in zip(idx, mats) if n >= start]


# ---------------------------------------------------------------------------
# trace diagnostics


@dataclass
class RateReport:
    """Per-cell geometric rate estimates fitted on a trace.

    ``rates[i,j]`` is the slope of ``ln |X_n(i,j) - L(i,j)|`` against the
    iterate index ``n`` over a tail window of one parity subsequence
    (-inf where the cell sat at its limit the whole window).
    ``r_squared`` grades the linear fit; ``converged`` flags limit-pinned
    cells; ``source`` says which parity supplied the points (0 even, 1 odd,
    -1 degenerate).
    """

    rates: np.ndarray
    r_squared: np.ndarray
    converged: np.ndarray
    source: np.ndarray
    window: tuple[int, int]


def _fit_loglinear(ns, ds):
    logs = np.log(ds)
    slope, intercept = np.polyfit(ns, logs, 1)
    fitted = slope * ns + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def rate_estimate(trace: IterationTrace, min_even: int = 10,
                  noise_floor: float = 1e-15) -> RateReport:
    """Fit per-cell geometric convergence rates on the tail of a trace.

    For each cell the even subsequence is compared against the final even
    iterate over the window ``[0.5*N, 0.875*N]`` (N = final even index); the
    last eighth is dropped because differences against the limit estimate
    self-cancel there.  Cells whose even subsequence is pinned at the limit
    (differences below ``noise_floor``) fall back to the odd subsequence;
    cells degenerate on both sides are flagged converged with rate ``-inf``.

    A slope near ``0`` with a poor fit is the slow-convergence signature; a
    clean negative slope is the geometric one.

    Raises
    ------
    ValueError
        If fewer than ``min_even`` even iterates are stored.
    """
    even_idx, even_mats = trace.stored_with_parity(0)
    if len(even_idx) < min_even:
        raise ValueError(
            f"trace too short for rate fitting: {len(even_idx)} stored even "
            f"iterates, need {min_even}"
        )
    odd_idx, odd_mats = trace.stored_with_parity(1)
    p, q = trace.problem.shape
    rates = np.full((p, q), -np.inf)
    r2s = np.full((p, q), np.nan)
    conv = np.zeros((p, q), dtype=bool)
    source = np.full((p, q), -1, dtype=np.int8)

    n_last = int(even_idx[-1])
    lo, hi = 0.5 * n_last, 0.875 * n_last

    def window_points(idx, mats, limit):
        sel = [(int(n), m) for n, m in zip(idx, mats) if lo <= n <= hi]
        if not sel:
            return None, None
        ns = np.array([n for n, _ in sel], dtype=float)
        stack = np.stack([m for _, m in sel])
        return ns, np.abs(stack - limit)

    ns_e, de = window_points(even_idx, even_mats, trace.even_limit())
    ns_o, do = (None, None)
    if odd_idx.size:
        ns_o, do = window_points(odd_idx, odd_mats, trace.odd_limit())

    for i in range(p):
        for j in range(q):
            done = False
            for src, ns, dd in ((0, ns_e, de), (1, ns_o, do)):
                if ns is None:
                    continue
                d = dd[:, i, j]
                keep = d > noise_floor
                if keep.sum() >= 3:
                    rates[i, j], r2s[i, j] = _fit_loglinear(ns[keep], d[keep])
                    source[i, j] = src
                    done = True
                    break
            if not done:
                conv[i, j] = True
    return RateReport(rates=rates, r_squared=r2s, converged=conv,
                      source=source, window=(int(np.ceil(lo)), int(hi)))


@dataclass
class CrossRatioReport:
    """Constancy check of all fully-supported 2x2 minors along a trace."""

    ok: bool
    max_rel_deviation: float
    n_minors: int
    n_skipped: int


def cross_ratio_check(trace: IterationTrace, rel_tol: float = 1e-10) -> CrossRatioReport:
    """Verify the cross ratios of supported 2x2 minors stay constant.

    For every pair of rows ``i < i'`` and columns ``j < j'`` whose four cells
    all lie in the seed's support, the quantity
    ``X(i,j) X(i',j') / (X(i,j') X(i',j))`` is invariant under row and column
    scaling, hence constant along the whole trace.  Minors touching a zero
    cell are skipped.
    """
    supp = trace.problem.support
    p, q = supp.shape
    rows_ij = []
    n_skipped = 0
    for i in range(p):
        for i2 in range(i + 1, p):
            for j in range(q):
                for j2 in range(j + 1, q):
                    if supp[i, j] and supp[i, j2] and supp[i2, j] and supp[i2, j2]:
                        rows_ij.append((i, i2, j, j2))
                    else:
                        n_skipped += 1
    if not rows_ij:
        return CrossRatioReport(True, 0.0, 0, n_skipped)
    ii, kk, jj, ll = (np.array(v) for v in zip(*rows_ij))
    ref = None
    dev = 0.0
    for x in trace.stored_matrices:
        vals = x[ii, jj] * x[kk, ll] / (x[ii, ll] * x[kk, jj])
        if ref is None:
            ref = vals
        else:
            dev = max(dev, float(np.max(np.abs(vals - ref) / np.abs(ref))))
    return CrossRatioReport(dev <= rel_tol, dev, len(rows_ij), n_skipped)


def nested_ratio_intervals(trace: IterationTrace) -> np.ndarray:
    """The nested interval chain read off the ratio history.

    Row ``k`` is ``(n, lo, hi)`` where for odd ``n`` the interval is
    ``[1/max C(X_n), 1/min C(X_n)]`` and for even ``n >= 2`` it is
    ``[min R(X_n), max R(X_n)]``.  Successive intervals nest and every one
    contains 1; both facts are what the tests assert.
    """
    out = []
    for n in range(1, trace.n_iters + 1):
        if n % 2:
            c = trace.ratio_cols[n]
            out.append((n, 1.0 / float(c.max()), 1.0 / float(c.min())))
        else:
            r = trace.ratio_rows[n]
            out.append((n, float(r.min()), float(r.max())))
    return np.asarray(out)


def escape_diagnostic(trace: IterationTrace, cells) -> list[dict]:
    """Soft unboundedness diagnostic for cells squeezed out of the support.

    For a cell ``(i, j)`` the entry obeys
    ``X_n(i,j) = X_0(i,j) / (R_i(X_0) C_j(X_1) R_i(X_2) ...)``, so the entry
    dies exactly when the running log-sum ``sum ln R_i(X_even) + ln C_j(X_odd)``
    grows without bound.  Unboundedness cannot be certified from a finite
    trace; this reports the final partial sum and whether the last third was
    still increasing, and asserts nothing.
    """
    reports = []
    n_total = trace.n_iters + 1
    idx = np.arange(n_total - 1)  # factors come from iterates 0 .. N-1
    for (i, j) in cells:
        logs = np.where(
            idx % 2 == 0,
            np.log(trace.ratio_rows[:-1, i]),
            np.log(trace.ratio_cols[:-1, j]),
        )
        partial = np.cumsum(logs)
        tail = partial[-max(2, len(partial) // 3):]
        reports.append(
            {
                "cell": (int(i), int(j)),
                "final_log_sum": float(partial[-1]),
                "still_growing": bool(tail[-1] > tail[0]),
            }
        )
    return reports
