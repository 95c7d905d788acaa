"""Rectangular-grid discrete calculus with zero-Neumann boundary semantics.

Fields live on a uniform grid (1D or 2D, spacing ``dx``).  The gradient is
the forward difference with a zero ghost gradient on the far boundary; the
divergence is defined as the exact negative adjoint of the gradient, so the
discrete integration-by-parts identity

    <gradient(f), p> = -<f, divergence(p)>

holds to machine precision.  All integrals are cell sums times ``dx**dim``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "PhaseState",
    "gradient",
    "divergence",
    "neumann_laplacian",
    "weighted_tv",
    "dirichlet_energy",
    "weighted_dirichlet_energy",
    "truncate",
    "grad_operator_norm_bound",
    "inner",
    "norm_l2",
    "save_field",
    "load_field",
    "save_field_raw",
    "load_field_raw",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid: 1 or 2 axes, extents >= 2, spacing dx > 0."""

    dim: int
    shape: tuple
    dx: float

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.shape) != self.dim:
            raise ValueError(f"shape {self.shape} does not match dim {self.dim}")
        if any(n < 2 for n in self.shape):
            raise ValueError(f"all extents must be >= 2, got {self.shape}")
        if not self.dx > 0:
            raise ValueError(f"spacing must be positive, got {self.dx}")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(self.dx**self.dim)

    @property
    def volume(self) -> float:
        return self.n_cells * self.cell_volume


@dataclass
class ScalarField:
    """Real values on a grid, stored with the grid's shape (row-major)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ScalarField values must be finite")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """One array per axis, each with the grid's shape."""

    grid: GridSpec
    comps: tuple

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float).reshape(self.grid.shape) for c in self.comps)
        if len(comps) != self.grid.dim:
            raise ValueError("component count must equal grid dim")
        self.comps = comps


@dataclass
class PhaseState:
    """The per-step unknown triplet: solidification w, orientation order eta,
    orientation angle theta, all on one grid."""

    w: ScalarField
    eta: ScalarField
    theta: ScalarField

    def __post_init__(self):
        if not (self.w.grid == self.eta.grid == self.theta.grid):
            raise ValueError("all fields of a PhaseState must share one grid")

    @property
    def grid(self) -> GridSpec:
        return self.w.grid

    @property
    def v(self):
        """The coupled pair [w, eta]."""
        return (self.w, self.eta)

    def copy(self) -> "PhaseState":
        return PhaseState(self.w.copy(), self.eta.copy(), self.theta.copy())


# ---------------------------------------------------------------------------
# array-level kernels (used directly by the solvers to avoid wrapper overhead)
# ---------------------------------------------------------------------------

def grad_arrays(values: np.ndarray, dx: float):
    """Forward-difference gradient per axis; last slice along each axis is 0."""
    comps = []
    inv = 1.0 / dx
    for ax in range(values.ndim):
        g = np.zeros_like(values)
        src = [slice(None)] * values.ndim
        dst = [slice(None)] * values.ndim
        src[ax] = slice(1, None)
        dst[ax] = slice(0, -1)
        g[tuple(dst)] = values[tuple(src)]
        g[tuple(dst)] -= values[tuple(dst)]
        g *= inv
        comps.append(g)
    return comps


def div_arrays(comps, dx: float) -> np.ndarray:
    """Negative adjoint of :func:`grad_arrays` (backward difference with
    boundary folding; the last slice of each component is ignored)."""
    out = np.zeros_like(comps[0])
    inv = 1.0 / dx
    for ax, p in enumerate(comps):
        nd = p.ndim
        first = [slice(None)] * nd
        first[ax] = slice(0, 1)
        last = [slice(None)] * nd
        last[ax] = slice(-1, None)
        secondlast = [slice(None)] * nd
        secondlast[ax] = slice(-2, -1)
        mid = [slice(None)] * nd
        mid[ax] = slice(1, -1)
        midlo = [slice(None)] * nd
        midlo[ax] = slice(0, -2)
        out[tuple(first)] += inv * p[tuple(first)]
        out[tuple(mid)] += inv * (p[tuple(mid)] - p[tuple(midlo)])
        out[tuple(last)] -= inv * p[tuple(secondlast)]
    return out


def laplacian_arrays(values: np.ndarray, dx: float) -> np.ndarray:
    return div_arrays(grad_arrays(values, dx), dx)


def grad_norm_arrays(values: np.ndarray, dx: float) -> np.ndarray:
    """Euclidean cell norm |grad f| of the forward-difference gradient."""
    comps = grad_arrays(values, dx)
    if len(comps) == 1:
        return np.abs(comps[0])
    return np.sqrt(comps[0] ** 2 + comps[1] ** 2)


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------

def gradient(f: ScalarField) -> VectorField:
    """Forward-difference gradient with homogeneous-Neumann ghost at the far
    boundary (zero last slice per axis)."""
    return VectorField(f.grid, tuple(grad_arrays(f.values, f.grid.dx)))


def divergence(p: VectorField) -> ScalarField:
    """The unique linear operator with <gradient f, p> = -<f, divergence p>."""
    return ScalarField(p.grid, div_arrays(p.comps, p.grid.dx))


def neumann_laplacian(f: ScalarField) -> ScalarField:
    """divergence(gradient(f)): symmetric, negative semidefinite, kills constants."""
    return ScalarField(f.grid, laplacian_arrays(f.values, f.grid.dx))


def inner(a, b) -> float:
    """Discrete L2 inner product (cell sum times dx**dim).

    Accepts ScalarField/ScalarField or VectorField/VectorField.
    """
    if isinstance(a, ScalarField):
        return float(np.vdot(a.values, b.values)) * a.grid.cell_volume
    s = 0.0
    for ca, cb in zip(a.comps, b.comps):
        s += float(np.vdot(ca, cb))
    return s * a.grid.cell_volume


def norm_l2(a) -> float:
    return float(np.sqrt(max(inner(a, a), 0.0)))


def weighted_tv(rho: ScalarField, f: ScalarField) -> float:
    """Discrete total variation of f weighted by rho >= 0:
    sum of rho * |grad f| * dx**dim with the isotropic (Euclidean) cell norm.
    The weight is sampled at the same cell as the forward difference."""
    if np.any(rho.values < 0):
        raise ValueError("weighted_tv requires a nonnegative weight")
    mag = grad_norm_arrays(f.values, f.grid.dx)
    return float(np.sum(rho.values * mag)) * f.grid.cell_volume


def dirichlet_energy(f: ScalarField) -> float:
    """(1/2) sum |grad f|^2 dx**dim."""
    comps = grad_arrays(f.values, f.grid.dx)
    s = sum(float(np.vdot(c, c)) for c in comps)
    return 0.5 * s * f.grid.cell_volume


def weighted_dirichlet_energy(b: ScalarField, f: ScalarField) -> float:
    """sum b |grad f|^2 dx**dim with cell weights b >= 0 (no 1/2 factor)."""
    if np.any(b.values < 0):
        raise ValueError("weighted_dirichlet_energy requires a nonnegative weight")
    comps = grad_arrays(f.values, f.grid.dx)
    sq = comps[0] ** 2
    for c in comps[1:]:
        sq += c**2
    return float(np.sum(b.values * sq)) * f.grid.cell_volume


def truncate(f: ScalarField, a: float, b: float) -> ScalarField:
    """Pointwise truncation a v (b ^ f) onto [a, b]."""
    if a > b:
        raise ValueError(f"truncate requires a <= b, got a={a}, b={b}")
    return ScalarField(f.grid, np.clip(f.values, a, b))


def grad_operator_norm_bound(grid: GridSpec) -> float:
    """Certified upper bound on ||gradient||^2: 4*dim/dx^2."""
    return 4.0 * grid.dim / grid.dx**2


# ---------------------------------------------------------------------------
# snapshot file format
# ---------------------------------------------------------------------------

def _shape_token(grid: GridSpec) -> str:
    return "x".join(str(n) for n in grid.shape)


def save_field(path, f: ScalarField, extra_header_lines=()):
    """Write a field snapshot: a grid header line then one value per line,
    row-major.  Values are written with repr so a re-read is bitwise exact."""
    lines = [f"# grid dim={f.grid.dim} shape={_shape_token(f.grid)} dx={f.grid.dx!r}"]
    for h in extra_header_lines:
        lines.append(f"# {h}")
    lines.extend(repr(float(v)) for v in f.values.ravel())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_field_raw(path, f: ScalarField, extra_meta_lines=()):
    """Raw snapshot: little-endian float64, row-major, plus a sidecar
    ``<path>.meta`` in the config text format."""
    f.values.astype("<f8").ravel().tofile(path)
    meta = ["[field]", f"dim = {f.grid.dim}", f"shape = {_shape_token(f.grid)}",
            f"dx = {f.grid.dx!r}"]
    meta.extend(extra_meta_lines)
    with open(f"{path}.meta", "w") as fh:
        fh.write("\n".join(meta) + "\n")


def load_field_raw(path) -> ScalarField:
    meta = {}
    with open(f"{path}.meta") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith(("#", "[")):
                continue
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    grid = GridSpec(int(meta["dim"]), tuple(int(t) for t in meta["shape"].split("x")),
                    float(meta["dx"]))
    arr = np.fromfile(path, dtype="<f8")
    if arr.size != grid.n_cells:
        raise ValueError(f"{path}: expected {grid.n_cells} values, found {arr.size}")
    return ScalarField(grid, arr.reshape(grid.shape))


def load_field(path) -> ScalarField:
    with open(path) as fh:
        raw = fh.read().splitlines()
    header = None
    values = []
    for line in raw:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# grid "):
                header = line
            continue
        values.append(float(line))
    if header is None:
        raise ValueError(f"{path}: missing grid header line")
    tokens = dict(tok.split("=", 1) for tok in header[len("# grid ") :].split())
    dim = int(tokens["dim"])
    shape = tuple(int(t) for t in tokens["shape"].split("x"))
    dx = float(tokens["dx"])
    grid = GridSpec(dim, shape, dx)
    arr = np.asarray(values, dtype=float)
    if arr.size != grid.n_cells:
        raise ValueError(f"{path}: expected {grid.n_cells} values, found {arr.size}")
    return ScalarField(grid, arr.reshape(shape))
