"""The three behaviors of alternating proportional fitting, on 2x2 seeds.

Same support pattern [[+, +], [+, 0]] three times; only the marginals move.
With a = b = (2/3, 1/3) the iteration converges geometrically, with
a = b = (1/2, 1/2) it still converges but only at a 1/n crawl, and with
a = b = (1/3, 2/3) it splits into two subsequences with different limits.
"""

import numpy as np

from bipfit import FittingProblem, engine, io, structure


def show(label, m):
    body = np.array2string(np.asarray(m, dtype=float), precision=6,
                           suppress_small=True, prefix=" " * 4)
    print(f"  {label} =\n    {body}")


def demo(filename):
    problem, meta = io.load_problem(io.data_path(filename))
    print("=" * 72)
    print(meta["name"])
    print(meta["description"])
    print(f"  a = {problem.a},  b = {problem.b}")
    show("X0", problem.x0)

    cls = structure.classify(problem)
    print(f"\n  verdict: {cls.behavior.value}")
    if cls.cause is not None:
        print(f"  certificate: zero block rows={cls.cause.rows} x cols={cls.cause.cols}"
              f" over-demands by a factor {cls.cause.ratio:g}")

    trace = engine.run(problem, engine.StoppingRule(max_iters=5000))
    print(f"  engine: {trace.stop_reason.value} after {trace.n_iters} steps,"
          f" final marginal error {trace.errors[-1]:.2e}")

    print("\n  marginal error along the way:")
    for n in (1, 2, 5, 10, 50, 200, 1000):
        if n <= trace.n_iters:
            print(f"    e(X_{n:<4d}) = {trace.errors[n]:.3e}")

    lp = structure.limit_points(problem)
    if np.abs(lp.even_limit - lp.odd_limit).max() < 1e-12:
        show("limit", lp.even_limit)
    else:
        print("  the even and odd iterates settle on different matrices:")
        show("even limit", lp.even_limit)
        show("odd limit ", lp.odd_limit)
        print("  (row sums of the even limit follow the adjusted marginals,"
              " not the requested ones)")
    print()


if __name__ == "__main__":
    for name in ("fast-2x2.json", "slow-2x2.json", "divergence-2x2.json"):
        demo(name)
