"""Shared test helpers: random fields and the physical-space grid oracle."""

import numpy as np

from kolmoflow.spectral import SpectralField


def rand_field(geom, mx, C, rng, real=True, decay=0.0):
    a = rng.standard_normal((2 * mx + 1, C)) + 1j * rng.standard_normal((2 * mx + 1, C))
    a *= np.exp(-decay * np.arange(C))
    f = SpectralField(geom, a)
    return f.real_part() if real else f


class GridOracle:
    """Analytic point values of fields and derivatives; projection by exact quadrature.

    x: uniform grid over one period (exact for trigonometric polynomials below
    the Nyquist limit); y: midpoint rule on [0, 2N pi] (exact for the sine
    products of the lattice when ny exceeds the largest wall number).
    """

    def __init__(self, geom, nx=256, ny=256):
        self.g = geom
        self.x = np.arange(nx) * geom.length / nx
        self.y = (np.arange(ny) + 0.5) * geom.height / ny

    def values(self, f, dx=0, dy=0, lap=False):
        g = self.g
        m = np.arange(-f.mx_max, f.mx_max + 1)
        kap = np.arange(1, f.c_max + 1) / g.denom
        a = f.coeff * (1j * m * g.kx)[:, None] ** dx
        if lap:
            a = a * -(np.add.outer((m * g.kx) ** 2, kap**2))
        E = np.exp(1j * g.kx * np.outer(self.x, m))
        Y = np.cos(np.outer(self.y, kap)) * kap if dy else np.sin(np.outer(self.y, kap))
        return E @ a @ Y.T

    def project(self, h, mx, C):
        g = self.g
        m = np.arange(-mx, mx + 1)
        E = np.exp(-1j * g.kx * np.outer(m, self.x)) / len(self.x)
        S = np.sin(np.outer(np.arange(1, C + 1) / g.denom, self.y)) * 2 / len(self.y)
        return E @ h @ S.T


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)
