"""Heat kernel, transform and reproducing kernel on the circle.

Walks one trigonometric polynomial through the weighted space, its holomorphic
image, and back through the reproducing kernel.
"""

import math

import numpy as np

from flatpath import heatkernel as hk
from flatpath import hilbert as H
from flatpath.fourier import FourierFunction
from flatpath.spaceform import make_space_form


def main():
    circle = make_space_form("circle")
    t, theta0 = 0.8, 0.3
    space = H.SpaceFormSpace(circle, t, np.array([theta0]))

    theta = np.linspace(-math.pi, math.pi, 7)
    print("heat kernel rho_t(theta) around the circle:")
    for th, r in zip(theta, hk.rho_s1(theta, theta0, t)):
        print(f"  theta={th:+.3f}  rho={r:.12f}")

    f = FourierFunction.from_dict(circle.reciprocal, {(1,): 2.0, (-3,): 1.0})
    psi = H.sb_transform(f, t)
    nq = H.inner_Q(f, f, space).real
    nqc_closed = H.inner_QC(psi, psi, space).real
    nqc_quad = H.inner_QC(psi, psi, space, method="quadrature").real
    print(f"\n|f|^2 in L2(Q, rho)          = {nq:.15f}")
    print(f"|A f|^2 holomorphic, closed  = {nqc_closed:.15f}")
    print(f"|A f|^2 holomorphic, quad    = {nqc_quad:.15f}")

    z = np.array([0.5 + 0.4j, -2.0 - 1.0j])
    quad = H.sb_transform_quadrature(f, space, z)
    print("\ntransform at complex points (closed vs heat-kernel quadrature):")
    for zi, a, b in zip(z, psi(z), quad):
        print(f"  z={zi:.2f}  {a:.12f}  {b:.12f}")

    K = H.reproducing_kernel(space)
    back = H.apply_operator(K, psi, space, z)
    print("\nreproducing kernel applied to A f:")
    for zi, a, b in zip(z, back, psi(z)):
        print(f"  z={zi:.2f}  rel err {abs(a - b) / abs(b):.2e}")


if __name__ == "__main__":
    main()
