"""Seeded localized Hardy initial data."""

from __future__ import annotations

import numpy as np

from .hardy_grid import Grid, HardyField, szego_project
from .observables import mass

#: Carrier frequency times packet width; keeps negative-frequency content below 1e-20.
MIN_CARRIER_WIDTH = 7.0


def gaussian_packet(grid: Grid, center: float = 0.0, width: float = 2.0,
                    carrier: float | None = None, target_mass: float | None = None,
                    phase: float = 0.0) -> HardyField:
    """``exp(-(x-center)^2 / (2 width^2) + i carrier x)`` projected to the Hardy ladder."""
    if width <= 0:
        raise ValueError("width must be positive")
    if carrier is None:
        carrier = MIN_CARRIER_WIDTH / width
    x = grid.x
    vals = np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * (carrier * x + phase))
    f = szego_project(grid, vals)
    return _rescale(f, target_mass)


def random_field(grid: Grid, seed: int, n_packets: int = 4, decay: float = 2.0,
                 amplitude: float = 1.0, target_mass: float | None = None,
                 spread: float = 6.0, width_range=(1.5, 3.0),
                 carrier_excess: float = 3.0) -> HardyField:
    """Sum of ``n_packets`` random Gaussian packets, deterministic in ``seed``.

    Packet ``j`` has width ``w_j`` drawn from ``width_range``, carrier
    ``omega_j >= MIN_CARRIER_WIDTH / w_j``, center in ``[-spread, spread]`` and
    complex amplitude ``amplitude (1 + omega_j)^(-decay) (g1 + i g2) / sqrt(2)``.
    The algebraic decay in the carrier plays the role of a power-law spectrum
    while keeping the data localized, so the periodic box never sees it.
    """
    rng = np.random.default_rng(seed)
    x = grid.x
    vals = np.zeros(grid.n_points, dtype=np.complex128)
    for _ in range(n_packets):
        w = rng.uniform(*width_range)
        omega = MIN_CARRIER_WIDTH / w + rng.uniform(0.0, carrier_excess)
        c = rng.uniform(-spread, spread)
        g = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
        amp = amplitude * (1.0 + omega) ** (-decay) * g
        vals += amp * np.exp(-0.5 * ((x - c) / w) ** 2 + 1j * omega * (x - c))
    return _rescale(szego_project(grid, vals), target_mass)


def _rescale(f: HardyField, target_mass):
    if target_mass is None:
        return f
    m = mass(f)
    if m == 0:
        raise ValueError("cannot rescale the zero field")
    return f * np.sqrt(target_mass / m)
