"""Optimal boundary kernels and their cost.

Prints the one-sided (0,2) kernel at a few positions between the
discontinuity (f~ = -1) and the touch point (f~ = 0), the EASE penalty at
the discontinuity, and how the discrete kernel on a finite grid approaches
the continuum formula.

    python3 demos/boundary_kernels.py
"""

import numpy as np

from mtspec.boundary import (
    BoundaryGeometry,
    continuum_boundary_kernel,
    ease_weight_from_beta,
    solve_boundary_coeffs,
)
from mtspec.kernels import interior_kernel


def main():
    z = np.linspace(-1, 1, 5)
    print("(0,2) boundary kernel G(z) on the standard support")
    print("f~      " + "".join(f"{v:>9.2f}" for v in z))
    for ft in (-1.0, -0.75, -0.5, -0.25, 0.0):
        g = continuum_boundary_kernel(0, ft)
        print(f"{ft:<8}" + "".join(f"{v:>9.3f}" for v in g(z)))

    print("\nEASE at the discontinuity relative to the interior (beta = 1)")
    for q in (0, 2):
        bk = solve_boundary_coeffs(q, BoundaryGeometry(0.0, 1.0), -1.0, beta=1.0)
        k = interior_kernel(q, q + 2)
        lam = ease_weight_from_beta(q, 1.0)
        ratio = (bk.variance_factor + lam * bk.bias_factor**2) / (k.norm_sq + lam * k.b**2)
        print(f"q = {q}: {ratio:.4f}  (4 (q+1)^2 = {4 * (q + 1) ** 2})")

    print("\ndiscrete kernel vs continuum formula at f~ = -1, h = 1/4")
    for nh in (50, 200, 800):
        n = nh / 0.25
        bk = solve_boundary_coeffs(0, BoundaryGeometry(0.0, 0.25, 1, 1 / (2 * n + 2)), -1.0, rule="continuum")
        err = np.max(np.abs(bk.normalized - continuum_boundary_kernel(0, -1.0)(bk.z)))
        print(f"N h = {nh:>4}: max difference {err:.4f}")


if __name__ == "__main__":
    main()
