"""Backward products of stochastic matrices: when do they settle down?

Three families:
  * a 2x2 family M(r_n) with r_n = exp(-2^(-n)): the product telescopes to
    M(exp(-1)) and every off-diagonal partial sum converges;
  * an alternating pair T0/T1 whose entry ratios blow up: the product
    oscillates forever (rho = infinity flags it up front);
  * random doubly-stochastic factors with a diagonal floor: the dispersion
    of any tracked vector decays like a Lyapunov function.
"""

import numpy as np

from bipfit import products


def banner(title):
    print("=" * 72)
    print(title)


def main():
    banner("telescoping family: factors M(exp(-2^-n))")
    trace = products.product_run(products.mr_sequence(60))
    limit = products.mr_matrix(np.exp(-1.0))
    print(f"  gamma (diagonal floor)  = {trace.assumptions.gamma:.6f}")
    print(f"  rho (entry-ratio bound) = {trace.assumptions.rho:.6f}")
    print(f"  total variation of the partial products: {trace.variation_sum:.6f}")
    print(f"  converged: {products.is_converged(trace)}")
    print(f"  final vs closed-form limit: max dev"
          f" {np.abs(trace.final - limit).max():.2e}")
    for rep in products.offdiag_convergence_report(trace):
        print(f"  off-diagonal pair ({rep.i}, {rep.j}): partial sums"
              f" {rep.sum_ij:.6f} / {rep.sum_ji:.6f}, tails"
              f" {rep.tail_ij:.1e} / {rep.tail_ji:.1e}")

    banner("alternating pair T0/T1")
    trace = products.product_run(products.t0t1_sequence(60))
    print(f"  rho = {trace.assumptions.rho} -> the ratio assumption fails outright")
    print(f"  converged: {products.is_converged(trace)}")
    print(f"  late consecutive-product distances:"
          f" {np.round(trace.variations[-4:], 4)} (not going anywhere)")

    banner("random doubly-stochastic factors, diagonal floor 0.2")
    rng = np.random.default_rng(7)
    ms = [products.random_doubly_stochastic(4, rng, gamma=0.2) for _ in range(40)]
    v = np.array([1.0, 0.0, 0.0, 0.0])
    trace = products.product_run(ms, tracked_vectors=[v])
    print(f"  tracked vector {v}, dispersion along the product:")
    disp = trace.dispersion_history[:, 0]
    print(f"    before any factor: {products.dispersion(v):.3e}")
    for n in (1, 2, 5, 10, 20, 40):
        print(f"    after {n:2d} factors: {disp[n - 1]:.3e}")
    print(f"  consensus: every row of the final product approaches the same"
          f" distribution; max row spread {np.ptp(trace.final, axis=0).max():.2e}")


if __name__ == "__main__":
    main()
