"""Composite Gauss-Legendre integration with panel doubling.

The integrands here are smooth but oscillatory (Green's function products over
an aperture), so a fixed-order rule on a uniformly refined panel grid converges
fast and vectorises well.
"""

from __future__ import annotations

import numpy as np

_ORDER = 16
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_ORDER)


class QuadratureError(RuntimeError):
    pass


def _panel_rule(a: float, b: float, panels: int):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    w = (half[:, None] * _WEIGHTS[None, :]).ravel()
    return x, w


def integrate_1d(f, a, b, rtol=1e-8, atol=0.0, panels=4, max_panels=1 << 14):
    """Integrate f over [a, b]; f maps nodes (N,) to values (..., N)."""
    x, w = _panel_rule(a, b, panels)
    prev = np.asarray(f(x)) @ w
    err = np.inf
    while panels < max_panels:
        panels *= 2
        x, w = _panel_rule(a, b, panels)
        cur = np.asarray(f(x)) @ w
        err = np.max(np.abs(cur - prev))
        if err <= rtol * np.max(np.abs(cur)) + atol:
            return cur
        prev = cur
    raise QuadratureError(f"1D quadrature did not converge (last change {err:.3e})")


def integrate_2d(f, ax, bx, az, bz, rtol=1e-8, atol=0.0, panels=4, max_nodes=1 << 22):
    """Integrate f over the rectangle [ax, bx] x [az, bz].

    f receives flattened node coordinates (x, z), each (N,), and returns (..., N).
    """

    def rule(n):
        x, wx = _panel_rule(ax, bx, n)
        z, wz = _panel_rule(az, bz, n)
        xx, zz = np.meshgrid(x, z, indexing="ij")
        return xx.ravel(), zz.ravel(), np.outer(wx, wz).ravel()

    x, z, w = rule(panels)
    prev = np.asarray(f(x, z)) @ w
    err = np.inf
    while True:
        panels *= 2
        if (panels * _ORDER) ** 2 > max_nodes:
            raise QuadratureError(f"2D quadrature did not converge (last change {err:.3e})")
        x, z, w = rule(panels)
        cur = np.asarray(f(x, z)) @ w
        err = np.max(np.abs(cur - prev))
        if err <= rtol * np.max(np.abs(cur)) + atol:
            return cur
        prev = cur
