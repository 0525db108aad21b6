"""
Finite-difference discretization of H = -Laplacian - V on a rectangle.

Grid arrays are stored as ``(ny, nx)`` with row index = y, column index = x,
and flattened in C order (node id = j*nx + i).

Boundary treatments
-------------------
dirichlet
    Boundary nodes are eliminated (zero extension); unknowns are the
    interior nodes.
neumann
    All nodes are unknowns; mirror ghost nodes give the usual one-sided
    reflection rows. That matrix is not symmetric, so the operator stores its
    similarity transform W^(1/2) A W^(-1/2) with node weights 1 (interior),
    1/2 (edges), 1/4 (corners). Eigenvalues coincide; ``to_grid`` undoes the
    scaling. The Dirichlet problem is exactly the restriction of the Neumann
    quadratic form to vectors vanishing on the boundary, hence
    eps_k(neumann) <= eps_k(dirichlet) holds eigenvalue by eigenvalue.
masked
    Dirichlet Laplacian on the nodes strictly inside a tube around the
    curve (stair-step domain).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, EmptyDomainError
from .geometry import Curve, fermi_coords
from .transverse1d import TransverseProfile, eval_profile

SGW1_MAGIC = b"SGW1"
SGW1_HEADER = struct.Struct("<4sII4d")
SGW1_HEADER_SIZE = 64
# relative slack (in units of the spacing) deciding that a node sits on the tube boundary
BOUNDARY_SLACK = 1e-9


@dataclass(frozen=True)
class Grid2D:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise DomainError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DomainError("empty grid extent")

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="xy")

    def shifted(self, dx: float = 0.0, dy: float = 0.0) -> "Grid2D":
        return Grid2D(self.xmin + dx, self.xmax + dx, self.ymin + dy, self.ymax + dy, self.nx, self.ny)


def _common_unit(values) -> Optional[float]:
    fr = [Fraction(v).limit_denominator(10**4) for v in values if v]
    if not fr or any(abs(float(f) - v) > 1e-12 * max(1.0, abs(v)) for f, v in zip(fr, [v for v in values if v])):
        return None
    g = fr[0]
    for f in fr[1:]:
        g = Fraction(math.gcd(g.numerator * f.denominator, f.numerator * g.denominator),
                     g.denominator * f.denominator)
    return float(g)


def grid_for_curve(c: Curve, a: float, h_max: float, pad: float, tail_length: Optional[float] = None) -> Grid2D:
    """
    Rectangle around the bookcover with square cells of size <= ``h_max``.

    The window covers the bend plus ``pad`` on the left, top and bottom and
    runs to ``x = tail_length`` on the right. Nodes sit on x = 0 and y = 0;
    the spacing is chosen so that rho and a are multiples of it when
    possible, which puts the straight channel edges of a beta = 0 curve on
    grid rows.
    """
    if not h_max > 0 or pad < 0:
        raise DomainError("need h_max > 0 and pad >= 0")
    tail = c.tail_length if tail_length is None else tail_length
    unit = _common_unit([c.rho, a])
    h = h_max
    if unit is not None and unit >= h_max / 4:
        h = unit / math.ceil(unit / h_max - 1e-12)
    kx0 = math.ceil((a + pad - c.min_x) / h - 1e-9)
    kx1 = max(1, math.ceil(tail / h - 1e-9))
    y_top = c.half_gap(tail) + a + pad
    ky = math.ceil(y_top / h - 1e-9)
    return Grid2D(-kx0 * h, kx1 * h, -ky * h, ky * h, kx0 + kx1 + 1, 2 * ky + 1)


@dataclass
class PotentialField:
    grid: Grid2D
    values: np.ndarray
    support_mask: np.ndarray
    depth: float
    u: Optional[np.ndarray] = None


def sample_potential(c: Curve, p: TransverseProfile, g: Grid2D, depth: Optional[float] = None) -> PotentialField:
    """Pointwise samples V = depth * w(u) inside the tube dist < a, zero outside."""
    if not p.regular:
        raise DomainError("2D sampling needs a regular profile")
    if not p.a < c.rho:
        raise DomainError(f"tube half-width a={p.a} must be below rho={c.rho}")
    depth = p.depth if depth is None else float(depth)
    X, Y = g.mesh()
    _, u, dist = fermi_coords(c, X, Y)
    inside = dist < p.a - BOUNDARY_SLACK * min(g.hx, g.hy)
    values = np.where(inside, depth * eval_profile(p, np.where(inside, u, 0.0)), 0.0)
    return PotentialField(g, values, inside, depth, np.where(inside, u, np.nan))


@dataclass
class SparseSymmetricOperator:
    matrix: sp.csr_matrix
    bc: str
    grid: Grid2D
    node_index: np.ndarray
    weights: np.ndarray
    domain_mask: Optional[np.ndarray] = None
    # rigorous spectral lower bound: the Laplacian part is positive semidefinite
    lower_bound: Optional[float] = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def to_grid(self, vec) -> np.ndarray:
        """Nodal values on the full ``(ny, nx)`` grid, zero off the unknowns."""
        full = np.zeros(self.grid.nx * self.grid.ny)
        full[self.node_index] = np.asarray(vec) / np.sqrt(self.weights)
        return full.reshape(self.grid.shape)

    def max_asymmetry(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0


def _lap1d(n: int, h: float, bc: str) -> sp.csr_matrix:
    inv = 1.0 / (h * h)
    off = np.full(n - 1, -inv)
    if bc == "neumann":
        off[0] = off[-1] = -math.sqrt(2.0) * inv
    return sp.diags([off, np.full(n, 2.0 * inv), off], [-1, 0, 1], format="csr")


def _edge_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def assemble(f: PotentialField, bc: str) -> SparseSymmetricOperator:
    """Five-point operator -Laplacian - V with ``bc`` in {'dirichlet', 'neumann'}."""
    g = f.grid
    if bc == "dirichlet":
        mx, my = g.nx - 2, g.ny - 2
        Lx, Ly = _lap1d(mx, g.hx, bc), _lap1d(my, g.hy, bc)
        V = f.values[1:-1, 1:-1].ravel()
        jj, ii = np.meshgrid(np.arange(1, g.ny - 1), np.arange(1, g.nx - 1), indexing="ij")
        idx = (jj * g.nx + ii).ravel()
        w = np.ones(idx.size)
    elif bc == "neumann":
        mx, my = g.nx, g.ny
        Lx, Ly = _lap1d(mx, g.hx, bc), _lap1d(my, g.hy, bc)
        V = f.values.ravel()
        idx = np.arange(g.nx * g.ny)
        w = np.outer(_edge_weights(g.ny), _edge_weights(g.nx)).ravel()
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    A = sp.kron(sp.identity(my), Lx) + sp.kron(Ly, sp.identity(mx)) - sp.diags(V)
    return SparseSymmetricOperator(sp.csr_matrix(A), bc, g, idx, w, None, -float(np.max(V, initial=0.0)))


def assemble_masked(g: Grid2D, mask: np.ndarray, values: Optional[np.ndarray] = None) -> SparseSymmetricOperator:
    """Dirichlet Laplacian (minus ``values``) on the nodes where ``mask`` is true."""
    idx = np.flatnonzero(np.asarray(mask).ravel())
    if idx.size == 0:
        raise EmptyDomainError("no grid node lies inside the masked domain")
    Lx, Ly = _lap1d(g.nx, g.hx, "dirichlet"), _lap1d(g.ny, g.hy, "dirichlet")
    A = sp.kron(sp.identity(g.ny), Lx) + sp.kron(Ly, sp.identity(g.nx))
    vmax = 0.0
    if values is not None:
        vals = np.asarray(values, dtype=float).ravel()
        A = A - sp.diags(vals)
        vmax = float(np.max(vals[idx], initial=0.0))
    A = sp.csr_matrix(A)[idx][:, idx]
    return SparseSymmetricOperator(sp.csr_matrix(A), "masked", g, idx, np.ones(idx.size), np.asarray(mask), -vmax)


def assemble_masked_strip(c: Curve, p: TransverseProfile, g: Grid2D, depth: Optional[float] = None) -> SparseSymmetricOperator:
    """
    Dirichlet strip: -Laplacian - depth*w(u) on the nodes with dist(node, curve) < a.

    Nodes on the tube boundary carry the Dirichlet value (the tube is open).
    """
    if not p.a < c.rho:
        raise DomainError(f"tube half-width a={p.a} must be below rho={c.rho}")
    depth = p.depth if depth is None else float(depth)
    X, Y = g.mesh()
    _, u, dist = fermi_coords(c, X, Y)
    mask = dist < p.a - BOUNDARY_SLACK * min(g.hx, g.hy)
    values = np.where(mask, depth * eval_profile(p, np.where(mask, u, 0.0)), 0.0) if depth else None
    return assemble_masked(g, mask, values)


# ---------------------------------------------------------------- export


def write_csv(path, g: Grid2D, values: np.ndarray) -> Path:
    """Rows ``x,y,value`` in node order, 17 significant digits, LF endings."""
    path = Path(path)
    X, Y = g.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for xv, yv, vv in zip(X.ravel(), Y.ravel(), np.asarray(values).ravel()):
            w.writerow([f"{xv:.17g}", f"{yv:.17g}", f"{vv:.17g}"])
    return path


def sgw1_bytes(g: Grid2D, values: np.ndarray) -> bytes:
    """64-byte header (magic, nx, ny, xmin, xmax, ymin, ymax) + little-endian float64 rows."""
    vals = np.asarray(values, dtype="<f8").reshape(g.shape)
    head = SGW1_HEADER.pack(SGW1_MAGIC, g.nx, g.ny, g.xmin, g.xmax, g.ymin, g.ymax)
    head = head.ljust(SGW1_HEADER_SIZE, b"\0")
    return head + np.ascontiguousarray(vals).tobytes()


def write_sgw1(path, g: Grid2D, values: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(sgw1_bytes(g, values))
    return path


def read_sgw1(path) -> tuple[Grid2D, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, nx, ny, xmin, xmax, ymin, ymax = SGW1_HEADER.unpack_from(raw, 0)
    if magic != SGW1_MAGIC:
        raise ValueError(f"not an SGW1 file (magic {magic!r})")
    body = np.frombuffer(raw, dtype="<f8", offset=SGW1_HEADER_SIZE)
    if body.size != nx * ny:
        raise ValueError(f"SGW1 payload has {body.size} values, header says {nx}x{ny}")
    return Grid2D(xmin, xmax, ymin, ymax, nx, ny), body.reshape(ny, nx).copy()
