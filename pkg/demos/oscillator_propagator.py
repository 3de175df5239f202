"""Time-sliced propagator of the oscillator ``z d/dz`` on the plane.

Prints the first-order approach of the sliced kernel to the exact one and
checks the quadrature engine against the Gaussian closed form for a few slices.
"""

import cmath

from flatpath import propagator as P


def main():
    rows = P.convergence_sweep(1.0, 1.0, 1.0, [2 ** k for k in range(10)])
    print(f"exact kernel exp(e^-i) = {cmath.exp(cmath.exp(-1j)):.12f}\n")
    print(f"{'n':>5} {'|G_n - exact|':>16} {'e_n/e_2n':>10}")
    for r in rows:
        ratio = f"{r.ratio:.5f}" if r.ratio is not None else ""
        print(f"{r.n:>5} {r.abs_error:>16.10e} {ratio:>10}")

    h = P.oscillator_symbol()
    print("\nquadrature engine vs closed form (z_T = z_0 = 1, T = 1):")
    for n in (1, 2, 3, 4):
        closed = P.propagate_sliced(P.SlicedPropagatorRequest(1.0, 1.0, 1.0, n), h)
        quad = P.propagate_sliced(P.SlicedPropagatorRequest(1.0, 1.0, 1.0, n, "Quadrature"), h)
        print(f"  n={n}  |difference| = {abs(closed - quad):.2e}")


if __name__ == "__main__":
    main()
