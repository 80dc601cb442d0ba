"""Model data for the drift-diffusion problem: potential, diffusion, mobility.

Each field couples an analytic evaluator with its analytic gradient (and,
for the potential, an optional Hessian used by the second-derivative
diagnostics).  Evaluators take one coordinate array per dimension and
broadcast, so a sparse meshgrid evaluates a whole grid in one call; the
mobility additionally takes the time ``t`` as its last argument.

All grid discretizations are midpoint rules: a cell carries the value of
the analytic function at its center.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import ScalarField, TensorGrid


def _full(grid: TensorGrid, arr) -> np.ndarray:
    """Broadcast an evaluator result to a full, writable grid-shaped array."""
    return np.broadcast_to(np.asarray(arr, dtype=float), grid.shape).copy()


@dataclass(frozen=True)
class PotentialField:
    """Confining potential phi(x) with analytic derivatives.

    ``evaluate(*coords)`` and each entry of the gradient/Hessian broadcast
    over coordinate arrays.  ``convexity`` is a lower bound on the Hessian
    spectrum when one is known (it may be negative for non-convex wells).
    """

    evaluate: Callable[..., np.ndarray]
    gradient: tuple[Callable[..., np.ndarray], ...]
    hessian: Optional[tuple[tuple[Callable[..., np.ndarray], ...], ...]] = None
    convexity: Optional[float] = None
    name: str = "potential"

    def on_grid(self, grid: TensorGrid) -> np.ndarray:
        return _full(grid, self.evaluate(*grid.center_mesh()))

    def gradient_on_grid(self, grid: TensorGrid) -> tuple[np.ndarray, ...]:
        coords = grid.center_mesh()
        return tuple(_full(grid, g(*coords)) for g in self.gradient)

    def hessian_on_grid(self, grid: TensorGrid) -> np.ndarray:
        """Hessian at cell centers, shape (dim, dim) + grid.shape."""
        if self.hessian is None:
            raise ValueError(f"potential {self.name!r} has no Hessian evaluator")
        coords = grid.center_mesh()
        out = np.empty((grid.dim, grid.dim) + grid.shape)
        for i in range(grid.dim):
            for j in range(grid.dim):
                out[i, j] = _full(grid, self.hessian[i][j](*coords))
        return out


@dataclass(frozen=True)
class DiffusionField:
    """Spatially varying diffusion D(x) with analytic gradient and lower bound."""

    evaluate: Callable[..., np.ndarray]
    gradient: tuple[Callable[..., np.ndarray], ...]
    lower_bound: float
    name: str = "diffusion"

    def __post_init__(self) -> None:
        if self.lower_bound <= 0.0:
            raise ValueError("diffusion lower bound must be positive")

    def on_grid(self, grid: TensorGrid) -> np.ndarray:
        return _full(grid, self.evaluate(*grid.center_mesh()))

    def gradient_on_grid(self, grid: TensorGrid) -> tuple[np.ndarray, ...]:
        coords = grid.center_mesh()
        return tuple(_full(grid, g(*coords)) for g in self.gradient)


@dataclass(frozen=True)
class MobilityField:
    """Mobility pi(x, t) > 0; evaluators take coordinates then time.

    ``time_derivative`` is the analytic d(pi)/dt, needed only by the
    variable-mobility identity diagnostics.
    """

    evaluate: Callable[..., np.ndarray]
    gradient: tuple[Callable[..., np.ndarray], ...]
    lower_bound: float
    time_derivative: Optional[Callable[..., np.ndarray]] = None
    name: str = "mobility"

    def __post_init__(self) -> None:
        if self.lower_bound <= 0.0:
            raise ValueError("mobility lower bound must be positive")

    def on_grid(self, grid: TensorGrid, t: float) -> np.ndarray:
        return _full(grid, self.evaluate(*grid.center_mesh(), t))

    def gradient_on_grid(self, grid: TensorGrid, t: float) -> tuple[np.ndarray, ...]:
        coords = grid.center_mesh()
        return tuple(_full(grid, g(*coords, t)) for g in self.gradient)

    def time_derivative_on_grid(self, grid: TensorGrid, t: float) -> np.ndarray:
        if self.time_derivative is None:
            raise ValueError(f"mobility {self.name!r} has no time-derivative evaluator")
        return _full(grid, self.time_derivative(*grid.center_mesh(), t))


@dataclass(frozen=True)
class ParameterSet:
    """The full coefficient triple defining one evolution problem."""

    potential: PotentialField
    diffusion: DiffusionField
    mobility: MobilityField
    name: str = "problem"


@dataclass(frozen=True)
class InitialCondition:
    """Named recipe producing a positive ScalarField on a given grid.

    ``build`` may be None for references that need more context to
    resolve (the equilibrium start, which depends on the parameter set).
    """

    name: str
    build: Optional[Callable[[TensorGrid], ScalarField]] = field(repr=False, default=None)


# ----------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------

def _tensor_potential(ks: Sequence[int], name: str) -> PotentialField:
    """Product well phi(x) = prod_d (1 + sin^2(k_d pi x_d / 2) / 4).

    Smooth, 2-periodic in each coordinate, even, and non-convex: the 1D
    factor has curvature (k pi)^2/8 * cos(k pi x) which changes sign.
    """
    ks = tuple(int(k) for k in ks)
    dim = len(ks)

    def factor(d: int, x):
        return 1.0 + 0.25 * np.sin(0.5 * ks[d] * np.pi * x) ** 2

    def dfactor(d: int, x):
        # d/dx [sin^2(k pi x/2)/4] = (k pi / 8) sin(k pi x)
        return (ks[d] * np.pi / 8.0) * np.sin(ks[d] * np.pi * x)

    def ddfactor(d: int, x):
        return (ks[d] * np.pi) ** 2 / 8.0 * np.cos(ks[d] * np.pi * x)

    def evaluate(*coords):
        out = factor(0, coords[0])
        for d in range(1, dim):
            out = out * factor(d, coords[d])
        return out

    def grad_component(d: int):
        def g(*coords):
            out = dfactor(d, coords[d])
            for e in range(dim):
                if e != d:
                    out = out * factor(e, coords[e])
            return out

        return g

    def hess_component(i: int, j: int):
        def hcomp(*coords):
            if i == j:
                out = ddfactor(i, coords[i])
            else:
                out = dfactor(i, coords[i]) * dfactor(j, coords[j])
            for e in range(dim):
                if e not in (i, j):
                    out = out * factor(e, coords[e])
            return out

        return hcomp

    convexity = -((ks[0] * np.pi) ** 2) / 8.0 if dim == 1 else None
    return PotentialField(
        evaluate=evaluate,
        gradient=tuple(grad_component(d) for d in range(dim)),
        hessian=tuple(
            tuple(hess_component(i, j) for j in range(dim)) for i in range(dim)
        ),
        convexity=convexity,
        name=name,
    )


def preset_potential_1d(k_p: int = 2) -> PotentialField:
    """1D well phi(x) = 1 + sin^2(k_p pi x / 2) / 4."""
    if k_p < 1:
        raise ValueError("mode number k_p must be a positive integer")
    return _tensor_potential((k_p,), name=f"phi1d:k{k_p}")


def preset_potential(dim: int) -> PotentialField:
    """Dimension-matched product well: k = (2,), (1, 2), (1, 2, 3)."""
    ks = {1: (2,), 2: (1, 2), 3: (1, 2, 3)}[dim]
    return _tensor_potential(ks, name=f"phi{dim}d:k" + "".join(map(str, ks)))


def preset_potential_quadratic(dim: int) -> PotentialField:
    """Convex well phi(x) = 1 + |x|^2 / 2, with convexity bound exactly 1."""
    dim = int(dim)

    def evaluate(*coords):
        out = 1.0 + 0.5 * coords[0] ** 2
        for c in coords[1:]:
            out = out + 0.5 * c**2
        return out

    def grad_component(d: int):
        def g(*coords):
            return np.asarray(coords[d], dtype=float) + np.zeros(np.broadcast(*coords).shape)

        return g

    def hess_component(i: int, j: int):
        def hcomp(*coords):
            shape = np.broadcast(*coords).shape
            return np.full(shape, 1.0) if i == j else np.zeros(shape)

        return hcomp

    return PotentialField(
        evaluate=evaluate,
        gradient=tuple(grad_component(d) for d in range(dim)),
        hessian=tuple(
            tuple(hess_component(i, j) for j in range(dim)) for i in range(dim)
        ),
        convexity=1.0,
        name=f"phi{dim}d:quad",
    )


def preset_diffusion_homogeneous(dim: int) -> DiffusionField:
    """Constant diffusion D = 1."""

    def evaluate(*coords):
        return np.ones(np.broadcast(*coords).shape)

    def zero(*coords):
        return np.zeros(np.broadcast(*coords).shape)

    return DiffusionField(
        evaluate=evaluate,
        gradient=(zero,) * dim,
        lower_bound=1.0,
        name="D:homogeneous",
    )


def preset_diffusion_single_mode(dim: int) -> DiffusionField:
    """Separable single-mode diffusion, one sine well per coordinate.

    1D: D(x) = 1 - sin^2(2 pi x)/2.  In 2D/3D each coordinate contributes
    a factor 1 - sin^2(m_d pi x_d)/2 with m = (1, 3) and (1, 3, 4).
    The product of factor minima gives the positive lower bound.
    """
    modes = {1: (2,), 2: (1, 3), 3: (1, 3, 4)}[dim]

    def factor(d: int, x):
        return 1.0 - 0.5 * np.sin(modes[d] * np.pi * x) ** 2

    def dfactor(d: int, x):
        # d/dx [-sin^2(m pi x)/2] = -(m pi / 2) sin(2 m pi x)
        return -(modes[d] * np.pi / 2.0) * np.sin(2.0 * modes[d] * np.pi * x)

    def evaluate(*coords):
        out = factor(0, coords[0])
        for d in range(1, dim):
            out = out * factor(d, coords[d])
        return out

    def grad_component(d: int):
        def g(*coords):
            out = dfactor(d, coords[d])
            for e in range(dim):
                if e != d:
                    out = out * factor(e, coords[e])
            return out

        return g

    return DiffusionField(
        evaluate=evaluate,
        gradient=tuple(grad_component(d) for d in range(dim)),
        lower_bound=0.5**dim,
        name="D:single",
    )


def preset_diffusion_multimode(
    dim: int,
    mode_caps: Sequence[int],
    amplitude: float = 0.01,
    selection_rule: str = "all",
) -> DiffusionField:
    """Oscillatory multi-mode diffusion built from half-frequency cosines.

    D(x) = 1 + sum_m A (prod_d cos(m_d pi x_d / 2) + 1) over the selected
    multi-indices 1 <= m_d <= mode_caps[d].  Each summand is nonnegative,
    so D >= 1 everywhere.  ``selection_rule`` picks the active indices:
    "all", "m1<m2" (strictly increasing pair), or "m1>=m2>=m3".
    """
    mode_caps = tuple(int(m) for m in mode_caps)
    if len(mode_caps) != dim:
        raise ValueError(f"need {dim} mode caps, got {len(mode_caps)}")
    if any(m < 1 for m in mode_caps):
        raise ValueError("mode caps must be positive integers")
    if amplitude <= 0.0:
        raise ValueError("amplitude must be positive")

    ranges = [range(1, cap + 1) for cap in mode_caps]
    if selection_rule == "all":
        selected = list(itertools.product(*ranges))
    elif selection_rule == "m1<m2":
        if dim != 2:
            raise ValueError("selection rule 'm1<m2' requires dim == 2")
        selected = [m for m in itertools.product(*ranges) if m[0] < m[1]]
    elif selection_rule == "m1>=m2>=m3":
        if dim != 3:
            raise ValueError("selection rule 'm1>=m2>=m3' requires dim == 3")
        selected = [m for m in itertools.product(*ranges) if m[0] >= m[1] >= m[2]]
    else:
        raise ValueError(f"unknown selection rule {selection_rule!r}")
    if not selected:
        raise ValueError("selection rule leaves no active modes")

    A = float(amplitude)
    n_modes = len(selected)

    def evaluate(*coords):
        out = 1.0 + A * n_modes + np.zeros(np.broadcast(*coords).shape)
        for m in selected:
            term = np.cos(0.5 * m[0] * np.pi * coords[0])
            for d in range(1, dim):
                term = term * np.cos(0.5 * m[d] * np.pi * coords[d])
            out = out + A * term
        return out

    def grad_component(d: int):
        def g(*coords):
            out = np.zeros(np.broadcast(*coords).shape)
            for m in selected:
                term = -0.5 * m[d] * np.pi * np.sin(0.5 * m[d] * np.pi * coords[d])
                for e in range(dim):
                    if e != d:
                        term = term * np.cos(0.5 * m[e] * np.pi * coords[e])
                out = out + A * term
            return out

        return g

    return DiffusionField(
        evaluate=evaluate,
        gradient=tuple(grad_component(d) for d in range(dim)),
        lower_bound=1.0,
        name=f"D:multi{dim}d" + "x".join(str(c) for c in mode_caps),
    )


def preset_mobility(dim: int) -> MobilityField:
    """Oscillating mobility pi = 1/gamma with gamma a separable cosine profile.

    gamma(x, t) = (1 + 1/2 sin(10 t)) * prod_d (1 + cos^2(k_d pi x_d)) with
    k = (1,), (1, 2), (1, 2, 3).  The spatial factors range over [1, 2] and
    the time factor over [1/2, 3/2], so pi >= 1/(3/2 * 2^dim).
    """
    ks = {1: (1,), 2: (1, 2), 3: (1, 2, 3)}[dim]

    def spatial(*coords):
        out = 1.0 + np.cos(ks[0] * np.pi * coords[0]) ** 2
        for d in range(1, dim):
            out = out * (1.0 + np.cos(ks[d] * np.pi * coords[d]) ** 2)
        return out

    def evaluate(*coords_t):
        *coords, t = coords_t
        return 1.0 / (spatial(*coords) * (1.0 + 0.5 * np.sin(10.0 * t)))

    def grad_component(d: int):
        def g(*coords_t):
            *coords, t = coords_t
            pi_val = evaluate(*coords_t)
            # d(cos^2(k pi x))/dx = -k pi sin(2 k pi x); grad pi = -pi * d(log gamma)
            dlog = (
                -ks[d]
                * np.pi
                * np.sin(2.0 * ks[d] * np.pi * coords[d])
                / (1.0 + np.cos(ks[d] * np.pi * coords[d]) ** 2)
            )
            return -pi_val * dlog

        return g

    def time_derivative(*coords_t):
        *coords, t = coords_t
        pi_val = evaluate(*coords_t)
        return -pi_val * 5.0 * np.cos(10.0 * t) / (1.0 + 0.5 * np.sin(10.0 * t))

    return MobilityField(
        evaluate=evaluate,
        gradient=tuple(grad_component(d) for d in range(dim)),
        lower_bound=1.0 / (1.5 * 2.0**dim),
        time_derivative=time_derivative,
        name="pi:standard",
    )


def preset_mobility_unit(dim: int) -> MobilityField:
    """Constant mobility pi = 1 (reduces the flux to pure drift-diffusion)."""

    def evaluate(*coords_t):
        *coords, _t = coords_t
        return np.ones(np.broadcast(*coords).shape)

    def zero(*coords_t):
        *coords, _t = coords_t
        return np.zeros(np.broadcast(*coords).shape)

    return MobilityField(
        evaluate=evaluate,
        gradient=(zero,) * dim,
        lower_bound=1.0,
        time_derivative=zero,
        name="pi:unit",
    )


def preset_gaussian_ic(
    dim: int, variance: float = 0.01, floor_rel: float = 0.0
) -> InitialCondition:
    """Centered isotropic Gaussian profile, renormalized to exact unit mass.

    Cell values are midpoint evaluations of the product density
    prod_d exp(-x_d^2 / (2 s^2)) / sqrt(2 pi s^2), then divided by their
    own discrete integral so that ``integrate`` returns 1 to round-off.

    A positive ``floor_rel`` lifts the tail to ``floor_rel * peak`` before
    the renormalization.  Coarse multidimensional grids need this: the raw
    tensor Gaussian steps across adjacent cells by factors of e^10 or more,
    and with an inhomogeneous diffusion coefficient such jumps put the
    implicit solver's Newton iteration outside its convergence basin.
    """
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    if floor_rel < 0.0 or floor_rel >= 1.0:
        raise ValueError("floor_rel must lie in [0, 1)")
    s2 = float(variance)

    def build(grid: TensorGrid) -> ScalarField:
        if grid.dim != dim:
            raise ValueError(f"initial condition is {dim}D but grid is {grid.dim}D")
        coords = grid.center_mesh()
        vals = np.exp(-coords[0] ** 2 / (2.0 * s2))
        for c in coords[1:]:
            vals = vals * np.exp(-(c**2) / (2.0 * s2))
        vals = _full(grid, vals / (2.0 * np.pi * s2) ** (dim / 2.0))
        if floor_rel > 0.0:
            vals = np.maximum(vals, floor_rel * vals.max())
        vals /= grid.cell_volume * np.sum(vals)
        return ScalarField(grid, vals)

    reg = "-reg" if floor_rel > 0.0 else ""
    return InitialCondition(name=f"ic:gauss{reg}-v{variance:g}", build=build)


def preset_equilibrium_ic(params: ParameterSet) -> InitialCondition:
    """Start exactly at the discrete equilibrium of ``params``."""

    def build(grid: TensorGrid) -> ScalarField:
        from .equilibrium import equilibrium_state

        return equilibrium_state(params, grid).density

    return InitialCondition(name="ic:eq", build=build)


# ----------------------------------------------------------------------
# Registry
# ----------------------------------------------------------------------

class PresetNotFound(KeyError):
    """Raised when a preset reference does not resolve to a known name."""

    def __init__(self, kind: str, name: str, known: Sequence[str]):
        self.kind = kind
        self.name = name
        super().__init__(
            f"unknown {kind} preset {name!r}; known: {', '.join(sorted(known))}"
        )


_POTENTIALS = {
    "phi:standard": lambda dim, n: preset_potential(dim),
    "phi1d:k2": lambda dim, n: _require_dim(1, dim, "phi1d:k2") or preset_potential_1d(2),
    "phi:quad": lambda dim, n: preset_potential_quadratic(dim),
}

_DIFFUSIONS = {
    "D:homogeneous": lambda dim, n: preset_diffusion_homogeneous(dim),
    "D:single": lambda dim, n: preset_diffusion_single_mode(dim),
    "D:multi": lambda dim, n: _default_multimode(dim, n),
    "D:multi3d-coarse": lambda dim, n: _require_dim(3, dim, "D:multi3d-coarse")
    or preset_diffusion_multimode(3, (5, 3, 4), amplitude=0.04, selection_rule="m1>=m2>=m3"),
}

_MOBILITIES = {
    "pi:standard": lambda dim, n: preset_mobility(dim),
    "pi:unit": lambda dim, n: preset_mobility_unit(dim),
}


def _require_dim(want: int, got: int, name: str) -> None:
    if got != want:
        raise ValueError(f"preset {name!r} is {want}D only, requested dim={got}")
    return None


def _default_multimode(dim: int, n_cells: int) -> DiffusionField:
    """Grid-matched mode caps: more cells resolve more diffusion modes."""
    if dim == 1:
        return preset_diffusion_multimode(1, (n_cells // 2,), 0.01, "all")
    if dim == 2:
        return preset_diffusion_multimode(
            2, (n_cells // 2, n_cells // 4), 0.01, "m1<m2"
        )
    return preset_diffusion_multimode(
        3, (n_cells // 2, max(n_cells // 2 - 2, 1), 4), 0.01, "m1>=m2>=m3"
    )


def get_potential(name: str, dim: int, n_cells: int = 0) -> PotentialField:
    try:
        factory = _POTENTIALS[name]
    except KeyError:
        raise PresetNotFound("potential", name, _POTENTIALS) from None
    return factory(dim, n_cells)


def get_diffusion(name: str, dim: int, n_cells: int) -> DiffusionField:
    try:
        factory = _DIFFUSIONS[name]
    except KeyError:
        raise PresetNotFound("diffusion", name, _DIFFUSIONS) from None
    return factory(dim, n_cells)


def get_mobility(name: str, dim: int, n_cells: int = 0) -> MobilityField:
    try:
        factory = _MOBILITIES[name]
    except KeyError:
        raise PresetNotFound("mobility", name, _MOBILITIES) from None
    return factory(dim, n_cells)


# Relative tail floor shared by the regularized Gaussian presets.
_GAUSS_REG_FLOOR = 1e-10


def get_initial_condition(name: str, dim: int) -> InitialCondition:
    if name == "ic:gauss":
        return preset_gaussian_ic(dim)
    if name == "ic:gauss-reg":
        return preset_gaussian_ic(dim, floor_rel=_GAUSS_REG_FLOOR)
    if name.startswith("ic:gauss-reg-v"):
        variance = float(name[len("ic:gauss-reg-v"):])
        return preset_gaussian_ic(dim, variance=variance, floor_rel=_GAUSS_REG_FLOOR)
    if name.startswith("ic:gauss-v"):
        return preset_gaussian_ic(dim, variance=float(name[len("ic:gauss-v"):]))
    if name == "ic:eq":
        # Resolved lazily by the caller, which knows the parameter set.
        return InitialCondition(name="ic:eq", build=None)
    raise PresetNotFound(
        "initial-condition", name,
        ["ic:gauss", "ic:gauss-reg", "ic:gauss-v<var>", "ic:gauss-reg-v<var>", "ic:eq"],
    )


def known_presets() -> dict[str, list[str]]:
    """Names understood by the get_* resolvers, grouped by kind."""
    return {
        "potential": sorted(_POTENTIALS),
        "diffusion": sorted(_DIFFUSIONS),
        "mobility": sorted(_MOBILITIES),
        "initial-condition": [
            "ic:eq", "ic:gauss", "ic:gauss-reg",
            "ic:gauss-reg-v<var>", "ic:gauss-v<var>",
        ],
    }
