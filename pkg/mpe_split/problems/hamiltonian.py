"""Separable Hamiltonian systems H = |p|^2 / (2m) + V(q) and velocity Verlet."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from mpe_split.core import SplitSystem, SubFlow, VectorField, as_state
from mpe_split.linearize import Hamiltonian


@dataclass(frozen=True)
class HamiltonianSystem:
    """
    Particle of mass ``mass`` in a potential V with gradient ``grad_v``.

    Velocity v = p / m and acceleration a(q) = -grad V(q) / m.
    """
    grad_v: Callable[[np.ndarray], np.ndarray]
    mass: float = 1.0
    dim: int = 1
    potential: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")

    @classmethod
    def harmonic(cls, mass: float = 1.0, spring: float = 1.0, dim: int = 1) -> "HamiltonianSystem":
        """V(q) = spring |q|^2 / 2."""
        return cls(
            grad_v=lambda q: spring * q,
            mass=mass,
            dim=dim,
            potential=lambda q: 0.5 * spring * float(np.dot(q, q)),
        )

    def acceleration(self, q: np.ndarray) -> np.ndarray:
        return -np.asarray(self.grad_v(q), dtype=float) / self.mass

    def energy(self, q, v) -> float:
        if self.potential is None:
            raise ValueError("energy requires the potential V(q)")
        v = np.asarray(v, dtype=float)
        return 0.5 * self.mass * float(np.dot(v, v)) + float(self.potential(np.asarray(q, dtype=float)))

    def hamiltonian(self) -> Hamiltonian:
        """Canonical derivatives in (p, q) for the staggered fixed-point solver."""
        return Hamiltonian.separable(self.mass, self.grad_v)

    def split(self) -> SplitSystem:
        """
        Drift/kick split on the state z = (q, v).

        A (drift) moves q with the current velocity, B (kick) changes v with
        the acceleration at the current position; both flows are exact shifts.
        """
        d = self.dim

        def drift_field(t, z):
            return np.concatenate([z[d:], np.zeros(d)])

        def kick_field(t, z):
            return np.concatenate([np.zeros(d), self.acceleration(z[:d])])

        def drift(t0, tau, z):
            q, v = z[:d], z[d:]
            return np.concatenate([q + tau * v, v])

        def kick(t0, tau, z):
            q, v = z[:d], z[d:]
            return np.concatenate([q, v + tau * self.acceleration(q)])

        return SplitSystem(
            a_field=VectorField(drift_field, name="drift"),
            b_field=VectorField(kick_field, name="kick"),
            a_flow=SubFlow.exact(drift, name="drift"),
            b_flow=SubFlow.exact(kick, name="kick"),
            name="hamiltonian",
        )


def verlet_step(ham: HamiltonianSystem, q, v, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Kick-drift-kick: half kick, full drift, half kick."""
    q = as_state(q, dim=ham.dim)
    v = as_state(v, dim=ham.dim)
    half = 0.5 * h
    v_half = v + half * ham.acceleration(q)
    q_new = q + h * v_half
    v_new = v_half + half * ham.acceleration(q_new)
    return q_new, v_new


def harmonic_solution(mass: float, spring: float, t: float, q0, v0) -> tuple[np.ndarray, np.ndarray]:
    """Exact (q, v) of the harmonic oscillator at time t."""
    omega = np.sqrt(spring / mass)
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    cos, sin = np.cos(omega * t), np.sin(omega * t)
    return q0 * cos + v0 / omega * sin, -q0 * omega * sin + v0 * cos
