"""Backward products of stochastic matrices and their convergence checks.

The iteration engine's ratio vectors evolve by left-multiplication with
stochastic matrices, so the convergence theory of backward products
``P_n = M_n ... M_2 M_1`` is studied here in its own right.  Two structural
assumptions drive everything: a uniform lower bound ``gamma`` on the
diagonals and a uniform bound ``rho`` on the ratios ``M(i,j)/M(j,i)``.
Under both, partial products have finite total variation and converge; the
module provides the run harness, the assumption checks, three elementary
inequality checkers (diameter contraction, dispersion decrease, sorted
partial sums), a convergence report for off-diagonal entry series, and the
generator families used by tests and the command line (the commuting
symmetric 2x2 family ``mr``, the alternating 3x3 counterexample pair
``t0t1``, and random doubly stochastic matrices by permutation averaging).

Stochasticity is never repaired silently: a partial product whose row sums
drift beyond tolerance is an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalCheckError

#: Row sums of an input stochastic matrix may deviate from 1 by this much.
ROW_SUM_TOL = 1e-12

#: Row-sum drift tolerance for partial products along a run.
DRIFT_TOL = 1e-10


def _check_stochastic(m, tol: float = ROW_SUM_TOL, square: bool = True) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("stochastic matrix must be 2-D")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got {m.shape}")
    if np.any(m < 0):
        i, j = np.unravel_index(int(np.argmin(m)), m.shape)
        raise ValueError(f"entry ({i},{j}) is negative: {m[i, j]!r}")
    dev = float(np.abs(m.sum(axis=1) - 1.0).max())
    if dev > tol:
        raise ValueError(f"row sums deviate from 1 by {dev:g} (tol {tol:g})")
    return m


def _check_doubly_stochastic(m, tol: float = ROW_SUM_TOL) -> np.ndarray:
    m = _check_stochastic(m, tol=tol, square=True)
    dev = float(np.abs(m.sum(axis=0) - 1.0).max())
    if dev > tol:
        raise ValueError(f"column sums deviate from 1 by {dev:g}; not doubly stochastic")
    return m


def dispersion(v) -> float:
    """``sum_{i,j} |v_i - v_j|`` over all ordered pairs.

    For example ``dispersion([0, 1]) == 2`` and
    ``dispersion([1, 2, 4]) == 12``.
    """
    v = np.asarray(v, dtype=float).ravel()
    return float(np.abs(v[:, None] - v[None, :]).sum())


def check_diameter_contraction(m, v):
    """Slacks of the three min/max/diameter bounds for one application of ``m``.

    With ``mu = min entry of m`` and ``w = m @ v``:

    * ``min w >= (1 - mu) min v + mu max v``
    * ``max w <= mu min v + (1 - mu) max v``
    * ``diam w <= (1 - 2 mu) diam v``

    Returns the three slacks (each nonnegative when the bounds hold).  A
    genuinely negative slack means a stochasticity violation upstream and
    raises, reporting the offending pair.
    """
    m = _check_stochastic(m, square=False)
    v = np.asarray(v, dtype=float).ravel()
    if m.shape[1] != v.size:
        raise ValueError(f"shape mismatch: {m.shape} vs vector of {v.size}")
    mu = float(m.min())
    w = m @ v
    lo, hi = float(v.min()), float(v.max())
    slack_min = float(w.min()) - ((1 - mu) * lo + mu * hi)
    slack_max = (mu * lo + (1 - mu) * hi) - float(w.max())
    slack_diam = (1 - 2 * mu) * (hi - lo) - float(w.max() - w.min())
    slacks = (slack_min, slack_max, slack_diam)
    if min(slacks) < -1e-12:
        raise InternalCheckError(
            f"diameter contraction violated (slacks {slacks}) for m={m!r}, v={v!r}"
        )
    return slacks


def check_dispersion_decrease(m, v, gamma: float) -> float:
    """Slack of ``D(v) - D(m @ v) >= gamma * ||m @ v - v||_1``.

    Requires ``m`` doubly stochastic with every diagonal entry at least
    ``gamma`` (precondition errors raise ``ValueError``); the returned slack
    is the caller's to assert on.
    """
    m = _check_doubly_stochastic(m)
    v = np.asarray(v, dtype=float).ravel()
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma!r}")
    if float(np.diag(m).min()) < gamma - 1e-15:
        raise ValueError(
            f"diagonal entries fall below gamma={gamma!r}: min is "
            f"{float(np.diag(m).min())!r}"
        )
    w = m @ v
    return dispersion(v) - dispersion(w) - gamma * float(np.abs(w - v).sum())


def check_sorted_partial_sums(m, v, k: int) -> float:
    """Slack of "the k smallest entries can only gain mass": doubly stochastic ``m``.

    Returns ``sum of k smallest entries of (m @ v)`` minus the same for
    ``v``; nonnegative for every ``1 <= k <= dim``.
    """
    m = _check_doubly_stochastic(m)
    v = np.asarray(v, dtype=float).ravel()
    if not 1 <= k <= v.size:
        raise ValueError(f"k must be in 1..{v.size}, got {k}")
    w = np.sort(m @ v)
    s = np.sort(v)
    return float(w[:k].sum() - s[:k].sum())


# ---------------------------------------------------------------------------
# product runs


@dataclass
class AssumptionCheck:
    """Sequence-wide assumption summary.

    ``gamma`` is the smallest diagonal entry over all factors; ``rho`` the
    largest ratio ``M(i,j)/M(j,i)`` with the conventions ``0/0 = 1`` and
    ``positive/0 = +inf``; ``doubly_stochastic`` says whether every factor
    has unit column sums too.
    """

    gamma: float
    rho: float
    doubly_stochastic: bool


def assumption_check(ms) -> AssumptionCheck:
    gamma = np.inf
    rho = 1.0
    doubly = True
    for m in ms:
        m = _check_stochastic(m)
        gamma = min(gamma, float(np.diag(m).min()))
        fwd, bwd = m, m.T
        pos = fwd > 0
        if np.any(pos & (bwd == 0)):
            rho = float("inf")
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios = np.where(pos, fwd / np.where(bwd > 0, bwd, 1.0), 1.0)
            rho = max(rho, float(ratios.max()))
        if float(np.abs(m.sum(axis=0) - 1.0).max()) > ROW_SUM_TOL:
            doubly = False
    return AssumptionCheck(gamma=float(gamma), rho=rho, doubly_stochastic=doubly)


@dataclass
class ProductTrace:
    """Record of one backward-product run ``P_n = M_n ... M_1``.

    ``partial_products[n]`` is ``P_{n+1}``; ``variations[n]`` is
    ``||P_{n+2} - P_{n+1}||_1`` (entrywise); ``offdiag_partial_sums[n]`` is
    the running factor sum ``sum_{m <= n+1} M_m``; ``dispersion_history``
    has one column per tracked vector with ``D(P_n v)`` down the rows.
    """

    partial_products: list[np.ndarray]
    variations: np.ndarray
    variation_sum: float
    dispersion_history: np.ndarray
    offdiag_partial_sums: np.ndarray
    assumptions: AssumptionCheck
    tracked_vectors: list[np.ndarray]

    @property
    def final(self) -> np.ndarray:
        return self.partial_products[-1]


def product_run(ms, tracked_vectors=()) -> ProductTrace:
    """Multiply out a stochastic sequence, recording everything testable.

    ``ms[0]`` is the first factor applied; each new factor multiplies from
    the left.  Row-sum drift of any partial product beyond
    :data:`DRIFT_TOL` raises — it would mean the products silently stopped
    being stochastic, which no downstream bound survives.
    """
    ms = [_check_stochastic(m) for m in ms]
    if not ms:
        raise ValueError("empty matrix sequence")
    d = ms[0].shape[0]
    for m in ms:
        if m.shape != (d, d):
            raise ValueError("matrix sequence mixes dimensions")
    tracked = [np.asarray(v, dtype=float).ravel() for v in tracked_vectors]
    for v in tracked:
        if v.size != d:
            raise ValueError(f"tracked vector of size {v.size}, expected {d}")

    partials: list[np.ndarray] = []
    variations = np.empty(len(ms) - 1)
    disp = np.empty((len(ms), len(tracked)))
    factor_sums = np.empty((len(ms), d, d))
    prod = None
    running = np.zeros((d, d))
    for n, m in enumerate(ms):
        prod = m.copy() if prod is None else m @ prod
        drift = float(np.abs(prod.sum(axis=1) - 1.0).max())
        if drift > DRIFT_TOL:
            raise InternalCheckError(
                f"partial product {n + 1} drifted off stochasticity by {drift:g}"
            )
        if partials:
            variations[n - 1] = float(np.abs(prod - partials[-1]).sum())
        partials.append(prod)
        running = running + m
        factor_sums[n] = running
        for t, v in enumerate(tracked):
            disp[n, t] = dispersion(prod @ v)
    return ProductTrace(
        partial_products=partials,
        variations=variations,
        variation_sum=float(variations.sum()),
        dispersion_history=disp,
        offdiag_partial_sums=factor_sums,
        assumptions=assumption_check(ms),
        tracked_vectors=tracked,
    )


def is_converged(trace: ProductTrace, tol: float = 1e-6) -> bool:
    """Cauchy tail test: variation accumulated over the last third below ``tol``."""
    n = len(trace.variations)
    if n == 0:
        return True
    return float(trace.variations[2 * n // 3:].sum()) < tol


@dataclass
class OffdiagPairReport:
    """Partial-sum behaviour of ``M_m(i,j)`` for one pair of distinct limit rows."""

    i: int
    j: int
    sum_ij: float
    sum_ji: float
    tail_ij: float
    tail_ji: float
    bounded_ij: bool
    bounded_ji: bool


def offdiag_convergence_report(trace: ProductTrace, limit=None,
                               row_diff_tol: float = 1e-6,
                               tail_tol: float = 1e-6) -> list[OffdiagPairReport]:
    """Partial sums ``sum_m M_m(i,j)`` for pairs whose limit rows differ.

    When the backward product converges and rows ``i`` and ``j`` of the
    limit differ (L1 gap above ``row_diff_tol``), the factor series in both
    directions between ``i`` and ``j`` must converge; the report carries the
    final partial sums and a bounded/growing flag per direction (Cauchy tail
    over the last third of the sequence).

    Raises
    ------
    ValueError
        If the trace has not converged — the hypothesis is about limits.
    """
    if not is_converged(trace):
        raise ValueError("product trace has not converged; report is undefined")
    if limit is None:
        limit = trace.final
    limit = np.asarray(limit, dtype=float)
    sums = trace.offdiag_partial_sums
    n = sums.shape[0]
    cut = 2 * n // 3
    out = []
    d = limit.shape[0]
    for i in range(d):
        for j in range(i + 1, d):
            if float(np.abs(limit[i] - limit[j]).sum()) <= row_diff_tol:
                continue
            tail_ij = float(sums[-1, i, j] - sums[cut, i, j])
            tail_ji = float(sums[-1, j, i] - sums[cut, j, i])
            out.append(
                OffdiagPairReport(
                    i=i, j=j,
                    sum_ij=float(sums[-1, i, j]),
                    sum_ji=float(sums[-1, j, i]),
                    tail_ij=tail_ij,
                    tail_ji=tail_ji,
                    bounded_ij=tail_ij < tail_tol,
                    bounded_ji=tail_ji < tail_tol,
                )
            )
    return out


# ---------------------------------------------------------------------------
# generator families


def mr_matrix(r: float) -> np.ndarray:
    """The symmetric 2x2 family ``(1/2) [[1+r, 1-r], [1-r, 1+r]]``.

    Closed under multiplication with parameters multiplying:
    ``mr_matrix(r2) @ mr_matrix(r1) == mr_matrix(r2 * r1)``.
    """
    if not 0 <= r <= 1:
        raise ValueError(f"r must lie in [0, 1], got {r!r}")
    return 0.5 * np.array([[1 + r, 1 - r], [1 - r, 1 + r]])


def mr_sequence(count: int, r_values=None) -> list[np.ndarray]:
    """``count`` factors of the ``mr`` family.

    Default parameters ``r_n = exp(-2^-n)`` (n = 1..count), whose running
    products converge to ``exp(-1)``.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if r_values is None:
        r_values = [float(np.exp(-(2.0 ** -n))) for n in range(1, count + 1)]
    else:
        r_values = [float(r) for r in r_values]
        if len(r_values) != count:
            raise ValueError(f"need {count} r values, got {len(r_values)}")
    return [mr_matrix(r) for r in r_values]


#: The two 3x3 factors whose alternating backward product oscillates forever.
T0 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]])
T1 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.0, 0.5]])


def t0t1_sequence(count: int) -> list[np.ndarray]:
    """Alternating factors ``T1, T0, T1, T0, ...`` (first-applied first).

    Every factor has diagonal at least 1/2, yet the backward products
    diverge: the ratio assumption fails outright (``rho = +inf``).
    """
    return [T1.copy() if n % 2 == 0 else T0.copy() for n in range(count)]


def random_doubly_stochastic(d: int, rng: np.random.Generator,
                             gamma: float = 0.0,
                             n_perms: int | None = None) -> np.ndarray:
    """Average ``n_perms >= d`` random permutation matrices, then mix in ``gamma * I``.

    Birkhoff's theorem makes the average doubly stochastic; the identity
    mixing knob guarantees a diagonal floor of ``gamma``.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma!r}")
    if n_perms is None:
        n_perms = d
    if n_perms < d:
        raise ValueError(f"need at least d={d} permutations, got {n_perms}")
    avg = np.zeros((d, d))
    eye = np.eye(d)
    for _ in range(n_perms):
        avg += eye[rng.permutation(d)]
    avg /= n_perms
    return gamma * eye + (1 - gamma) * avg


def random_ratio_bounded_stochastic(d: int, rng: np.random.Generator,
                                    gamma: float = 0.2,
                                    rho: float = 5.0) -> np.ndarray:
    """Random stochastic matrix with diagonal >= ``gamma`` and ratio bound ``rho``.

    Row-normalizing a symmetric positive matrix with entries in
    ``[1/rho, 1]`` keeps every ratio ``M(i,j)/M(j,i)`` equal to a row-sum
    quotient, hence within ``rho``; identity mixing then installs the
    diagonal floor without touching off-diagonal ratios.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho!r}")
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma!r}")
    w = rng.uniform(1.0 / rho, 1.0, size=(d, d))
    w = (w + w.T) / 2
    m = w / w.sum(axis=1, keepdims=True)
    return gamma * np.eye(d) + (1 - gamma) * m
