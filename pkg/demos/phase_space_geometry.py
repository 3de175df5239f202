"""Complex structure on the cotangent bundle and its integrability obstruction.

On flat charts the holomorphic frame commutes; on the round sphere the
brackets are proportional to the curvature, with the proportionality constant
printed at the end.
"""

import math

from flatpath import geometry as geo


def main():
    m = geo.PhasePoint([math.pi / 4, 0.3], [1.0, 0.0])
    for name in sorted(geo.TEST_METRICS):
        chart = geo.metric_by_name(name)
        d = geo.compatible_triple(chart, m).defects()
        obs = geo.bracket_obstruction(chart, m, richardson=True)
        print(f"{name:<13} J^2+I {d['J_squared']:.1e}  G-omega(.,J.) {d['compatibility']:.1e}  "
              f"bracket size {obs.magnitude:.3e}")

    obs = geo.bracket_obstruction(geo.sphere_metric(), m, richardson=True)
    print("\nsphere bracket coefficients c[l, i, j] on d/dz^l - d/dzbar^l:")
    print(obs.measured.round(10))
    print(f"measured / (i R p sigma^-1) = {obs.ratio('literal').real:.8f}")
    print(f"relative error against the quarter-scaled form: {obs.relative_error('predicted'):.2e}")


if __name__ == "__main__":
    main()
