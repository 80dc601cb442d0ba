# Grids, fields, and the discrete calculus
# =========================================
#
# Everything in fpflow lives on a uniform tensor grid over the box
# [-1, 1]^dim.  Scalar data sits at cell centers; vector data sits on the
# faces between cells.  This demo builds grids with both boundary
# treatments and checks the two structural facts the solver leans on:
#
#   * the divergence of any face field telescopes to zero total mass flux,
#   * the divergence is exactly minus the adjoint of the gradient.

import numpy as np

from fpflow import Boundary, FaceField, ScalarField, build_grid
from fpflow.grid import face_divergence, face_gradient, integrate


def random_face_field(grid, rng):
    """Random flux; no-flux walls carry zeros, as the container requires."""
    comps = []
    for axis in range(grid.dim):
        values = rng.normal(size=grid.face_shape(axis))
        if grid.boundary is Boundary.NOFLUX:
            sl = [slice(None)] * grid.dim
            sl[axis] = 0
            values[tuple(sl)] = 0.0
            sl[axis] = -1
            values[tuple(sl)] = 0.0
        comps.append(values)
    return FaceField(grid, tuple(comps))


rng = np.random.default_rng(7)

for boundary in (Boundary.PERIODIC, Boundary.NOFLUX):
    grid = build_grid(2, 16, boundary)
    print(f"--- {boundary.value} grid: {grid.n_cells}^{grid.dim} cells, h = {grid.h}")

    # A smooth scalar field and its face gradient.
    X, Y = grid.center_mesh()
    f = ScalarField(grid, 1.5 + 0.25 * np.sin(np.pi * X) * np.cos(np.pi * Y))
    g = face_gradient(f)
    print("  gradient component shapes:", [c.shape for c in g.components])

    # Telescoping: whatever flux crosses the faces, the integral of its
    # divergence vanishes (periodic wrap or zero walls, same conclusion).
    flux = random_face_field(grid, rng)
    div = face_divergence(flux)
    total = integrate(ScalarField(grid, div))
    print(f"  integral of div(random flux) = {total:.3e}")

    # Duality: <div J, p> = -<J, grad p> for every field pair.
    p_values = rng.normal(size=grid.shape)
    lhs = grid.cell_volume * float(np.sum(div * p_values))
    grad_p = face_gradient(ScalarField(grid, p_values))
    rhs = -grid.cell_volume * sum(
        float(np.sum(j * gp))
        for j, gp in zip(flux.components, grad_p.components)
    )
    print(f"  <div J, p> = {lhs:+.6f}   -<J, grad p> = {rhs:+.6f}")
    print(f"  duality defect = {abs(lhs - rhs):.3e}")
