"""Restarting inside the limit support turns a 1/n crawl into a geometric fit.

Run directly, the 5x6 example creeps toward its even limit at a 1/n rate:
after 100k steps it is still ~1e-6 away.  Zero the seed outside the common
limit support sigma, swap the row marginals for the adjusted a', and the
same engine closes the gap in well under a hundred steps.
"""

import numpy as np

from bipfit import FittingProblem, engine, io, structure


def distances_to(limit, trace):
    return [
        (int(n), float(np.abs(m - limit).sum()))
        for n, m in zip(trace.stored_indices, trace.stored_matrices)
        if n % 2 == 0
    ]


def main():
    problem, meta = io.load_problem(io.data_path("example-5x6.json"))
    print(meta["name"])

    bs = structure.block_structure(problem)
    lp = structure.limit_points(problem)
    exhaust = engine.StoppingRule(tol_marginal=1e-300, tol_even_odd=1e-300,
                                  max_iters=2000)

    print("\ndirect run (original seed and marginals):")
    direct = engine.run(problem, exhaust, store_cap=100_000)
    for n, d in distances_to(lp.even_limit, direct):
        if n in (0, 10, 50, 100, 500, 1000, 2000):
            print(f"  ||X_{n:<4d} - L_even||_1 = {d:.3e}")

    print("\nrestarted run (seed zeroed outside sigma, marginals (a', b)):")
    restarted_problem = FittingProblem(np.where(lp.sigma, problem.x0, 0.0),
                                       bs.a_prime, problem.b)
    restarted = engine.run(restarted_problem, exhaust, store_cap=100_000)
    for n, d in distances_to(lp.even_limit, restarted):
        if n in (0, 10, 20, 40, 78, 100, 150):
            print(f"  ||X_{n:<4d} - L_even||_1 = {d:.3e}")

    n_fast = next(n for n, d in distances_to(lp.even_limit, restarted) if d < 1e-6)
    d_direct = dict(distances_to(lp.even_limit, direct))[2000]
    print(f"\nrestarted run reaches 1e-6 at step {n_fast};"
          f" the direct run is still at {d_direct:.1e} after step 2000.")

    rates = engine.rate_estimate(engine.run(restarted_problem,
                                            engine.StoppingRule(
                                                tol_marginal=1e-300,
                                                tol_even_odd=1e-300,
                                                max_iters=120),
                                            store_cap=100_000))
    fitted = rates.source >= 0
    print("per-cell geometric rate fit on the restarted run:")
    print(f"  cells pinned at the limit within noise: {int(rates.converged.sum())}")
    for i, j in np.argwhere(fitted):
        print(f"  cell ({i}, {j}): rate {rates.rates[i, j]:+.4f} per step,"
              f" R^2 = {rates.r_squared[i, j]:.5f}")


if __name__ == "__main__":
    main()
