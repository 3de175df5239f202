"""The six orientable compact flat 3-manifolds and their heat kernels.

For each family: holonomy order, quotient volume, normalisation of the image
sum over one fundamental domain and its invariance under the generators.
"""

import numpy as np

from flatpath import heatkernel as hk
from flatpath.quadrature import quotient_trapezoid
from flatpath.spaceform import apply, make_space_form, sample_points


def main():
    t = 0.5
    print(f"{'family':<7}{'|holonomy|':>11}{'volume':>10}{'int rho - 1':>14}{'invariance':>13}")
    for fam in ("g1", "g2", "g3", "g4", "g5", "g6"):
        spec = make_space_form(fam)
        x0 = sample_points(spec.translation_basis, 1, 1)[0]
        rule = quotient_trapezoid(spec, 20)
        norm = rule.integrate(hk.rho_spaceform(rule.nodes, x0, t, spec)) - 1
        x = sample_points(spec.translation_basis, 16, 2)
        ref = hk.rho_spaceform(x, x0, t, spec)
        dev = max(float(np.max(np.abs(hk.rho_spaceform(apply(g, x), x0, t, spec) - ref))) for g in spec.generators)
        print(f"{fam:<7}{spec.holonomy_order:>11}{spec.volume:>10.4f}{norm:>14.2e}{dev:>13.2e}")


if __name__ == "__main__":
    main()
