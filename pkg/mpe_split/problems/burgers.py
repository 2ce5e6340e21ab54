"""
Viscous Burgers equation on the unit square

    u_t = -u u_x - u u_y + mu (u_xx + u_yy)

with the travelling front u = 1 / (1 + exp((x + y - t) / (2 mu))) as analytic
solution and Dirichlet data. Convection is the A operator (first-order
upwind, explicit RK4 sub-cycled under a CFL limit), diffusion is the B
operator (5-point Laplacian, backward Euler).
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from mpe_split.config import BURGERS_CFL
from mpe_split.core import LinearPart, SplitSystem, SubFlow, VectorField, as_state

logger = logging.getLogger(__name__)

# Exponents above this give u = 0 to double precision
EXP_LIMIT = 500.0

Boundary = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class CFLError(ValueError):
    """Raised when an explicit convection step exceeds the admissible step size."""


def burgers_analytic(x, y, t: float, mu: float):
    """(1 + exp((x + y - t) / (2 mu)))^-1, safe for large exponents."""
    if mu <= 0:
        raise ValueError(f"viscosity must be positive, got {mu}")
    z = (np.asarray(x, dtype=float) + np.asarray(y, dtype=float) - t) / (2.0 * mu)
    value = np.where(z > EXP_LIMIT, 0.0, 1.0 / (1.0 + np.exp(np.minimum(z, EXP_LIMIT))))
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class BurgersConfig:
    """
    Attributes:
        mu: Viscosity
        nx: Cells in x (dx = 1/nx); the state holds the (nx-1)(ny-1) interior nodes
        ny: Cells in y, defaults to nx
        t_end: Final time
        dt: Time step used by the driver and for the CFL check
        convection_substeps: Pin the RK4 sub-cycle count instead of choosing it from the CFL limit
        diffusion_substeps: Backward Euler substeps per diffusion flow
    """
    mu: float = 0.05
    nx: int = 40
    ny: Optional[int] = None
    t_end: float = 1.25
    dt: float = 0.025
    convection_substeps: Optional[int] = None
    diffusion_substeps: int = 1

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        if self.nx < 2 or self.cells_y < 2:
            raise ValueError(f"grid needs at least 2 cells per direction, got {self.nx}x{self.cells_y}")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError(f"dt and t_end must be positive, got dt={self.dt}, t_end={self.t_end}")
        if self.convection_substeps is not None and self.convection_substeps < 1:
            raise ValueError(f"convection_substeps must be >= 1, got {self.convection_substeps}")
        if self.diffusion_substeps < 1:
            raise ValueError(f"diffusion_substeps must be >= 1, got {self.diffusion_substeps}")

    @property
    def cells_y(self) -> int:
        return self.nx if self.ny is None else self.ny

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return 1.0 / self.cells_y


@dataclass(frozen=True)
class Grid2D:
    """Interior nodes of a uniform grid on [0,1]^2, stored row-major with x fastest."""
    nx: int
    ny: int

    @property
    def mx(self) -> int:
        return self.nx - 1

    @property
    def my(self) -> int:
        return self.ny - 1

    @property
    def size(self) -> int:
        return self.mx * self.my

    def index(self, i: int, j: int) -> int:
        """Linear index of interior node (i, j), 1 <= i < nx, 1 <= j < ny."""
        if not (1 <= i <= self.mx and 1 <= j <= self.my):
            raise IndexError(f"node ({i}, {j}) is not an interior node of a {self.nx}x{self.ny} grid")
        return (j - 1) * self.mx + (i - 1)

    def node(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(f"index {k} out of range for {self.size} interior nodes")
        j, i = divmod(k, self.mx)
        return i + 1, j + 1

    def full_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) on all nodes including the boundary, shape (ny+1, nx+1)."""
        return np.meshgrid(np.linspace(0.0, 1.0, self.nx + 1), np.linspace(0.0, 1.0, self.ny + 1))

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, y) of the interior nodes in state order."""
        x, y = self.full_coordinates()
        return x[1:-1, 1:-1].ravel(), y[1:-1, 1:-1].ravel()

    def padded(self, u: np.ndarray, t: float, boundary: Boundary) -> np.ndarray:
        """The interior state embedded in the full node array with boundary data at time t."""
        x, y = self.full_coordinates()
        full = np.array(boundary(x, y, t), dtype=float)
        full[1:-1, 1:-1] = u.reshape(self.my, self.mx)
        return full


def _second_difference(m: int, h: float) -> sp.spmatrix:
    return sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / (h * h)


class BurgersProblem:
    """Discrete Burgers operators, sub-flows and the assembled split system."""

    def __init__(self, cfg: BurgersConfig, boundary: Optional[Boundary] = None, cfl: float = BURGERS_CFL):
        self.cfg = cfg
        self.grid = Grid2D(cfg.nx, cfg.cells_y)
        self.boundary = boundary or partial(burgers_analytic, mu=cfg.mu)
        self.cfl = cfl

        if cfg.convection_substeps is not None:
            self._check_cfl(cfg.dt / cfg.convection_substeps)

        laplacian = sp.kron(sp.identity(self.grid.my), _second_difference(self.grid.mx, cfg.dx)) + sp.kron(
            _second_difference(self.grid.my, cfg.dy), sp.identity(self.grid.mx)
        )
        self.diffusion_part = LinearPart(matrix=(cfg.mu * laplacian).tocsc(), source=self._boundary_source)

        self.system = SplitSystem(
            a_field=VectorField(self.convection, name="convection"),
            b_field=VectorField(self.diffusion, autonomous=False, name="diffusion"),
            a_flow=SubFlow(step=self.convection_flow, name="convection-rk4"),
            b_flow=SubFlow(step=self.diffusion_flow, name="diffusion-euler"),
            full_field=VectorField(lambda t, u: self.convection(t, u) + self.diffusion(t, u), autonomous=False, name="burgers"),
            b_linear=self.diffusion_part,
            name=f"burgers2d[{cfg.nx}x{cfg.cells_y}]",
        )
        logger.debug(f"[Burgers] Built {self.grid.size}-node system, mu={cfg.mu}")

    def admissible_dt(self, umax: float = 1.0) -> float:
        """Largest stable convection step CFL / (umax/dx + umax/dy)."""
        return self.cfl / (umax / self.cfg.dx + umax / self.cfg.dy)

    def _check_cfl(self, step: float, umax: float = 1.0):
        admissible = self.admissible_dt(umax)
        if abs(step) > admissible * (1.0 + 1e-12):
            raise CFLError(
                f"convection step {abs(step):.4g} exceeds the admissible dt {admissible:.4g} "
                f"(CFL={self.cfl}, dx={self.cfg.dx:.4g}, dy={self.cfg.dy:.4g})"
            )

    def convection(self, t: float, u: np.ndarray) -> np.ndarray:
        """-u u_x - u u_y with first-order upwind differences."""
        full = self.grid.padded(u, t, self.boundary)
        centre = full[1:-1, 1:-1]
        west, east = full[1:-1, :-2], full[1:-1, 2:]
        south, north = full[:-2, 1:-1], full[2:, 1:-1]
        forward = centre < 0.0
        ux = np.where(forward, east - centre, centre - west) / self.cfg.dx
        uy = np.where(forward, north - centre, centre - south) / self.cfg.dy
        return (-centre * (ux + uy)).ravel()

    def diffusion(self, t: float, u: np.ndarray) -> np.ndarray:
        """mu (u_xx + u_yy) with the 5-point stencil."""
        full = self.grid.padded(u, t, self.boundary)
        centre = full[1:-1, 1:-1]
        uxx = (full[1:-1, 2:] - 2.0 * centre + full[1:-1, :-2]) / self.cfg.dx ** 2
        uyy = (full[2:, 1:-1] - 2.0 * centre + full[:-2, 1:-1]) / self.cfg.dy ** 2
        return (self.cfg.mu * (uxx + uyy)).ravel()

    def _boundary_source(self, t: float) -> np.ndarray:
        return self.diffusion(t, np.zeros(self.grid.size))

    def convection_flow(self, t0: float, h: float, u: np.ndarray) -> np.ndarray:
        """Classical RK4, sub-cycled so every substep respects the CFL limit."""
        umax = max(1.0, float(np.max(np.abs(u))))
        if self.cfg.convection_substeps is not None:
            n = self.cfg.convection_substeps
            self._check_cfl(h / n, umax)
        else:
            n = max(1, math.ceil(abs(h) / self.admissible_dt(umax) - 1e-12))
        delta = h / n
        x = u
        for k in range(n):
            s = t0 + k * delta
            k1 = self.convection(s, x)
            k2 = self.convection(s + 0.5 * delta, x + 0.5 * delta * k1)
            k3 = self.convection(s + 0.5 * delta, x + 0.5 * delta * k2)
            k4 = self.convection(s + delta, x + delta * k3)
            x = x + delta / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return x

    def diffusion_flow(self, t0: float, h: float, u: np.ndarray) -> np.ndarray:
        """Backward Euler substeps on the diffusion operator."""
        n = self.cfg.diffusion_substeps
        delta = h / n
        x = u
        for k in range(n):
            x = self.diffusion_part.implicit_euler(t0 + k * delta, delta, x)
        return x

    def initial_state(self) -> np.ndarray:
        return self.exact(0.0)

    def exact(self, t: float) -> np.ndarray:
        x, y = self.grid.coordinates()
        return as_state(burgers_analytic(x, y, t, self.cfg.mu))


def burgers_build(cfg: BurgersConfig, boundary: Optional[Boundary] = None) -> SplitSystem:
    """Split system of the Burgers problem: A = convection, B = diffusion."""
    return BurgersProblem(cfg, boundary=boundary).system
