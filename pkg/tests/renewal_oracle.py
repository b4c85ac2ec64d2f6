"""Exact ``||P^n f - mu(f)||^2`` for the jump chain by a renewal recursion.

Work in ``s = x^{-b}`` (the jump probability).  Under ``nu`` and ``mu``
``s`` has densities proportional to ``s^{c-1}`` on ``(0, 1]``.  With
``h_m = nu(P^m f)`` the renewal identity is

    P^n f(s) = (1 - s)^n f(s) + sum_{k=1}^n s (1 - s)^{k-1} h_{n-k}.

Integrals use Gauss-Legendre on dyadic pieces accumulating at 0.
"""
import numpy as np


def _nodes(pieces=60, order=20):
    g, gw = np.polynomial.legendre.leggauss(order)
    bounds = [(0.5, 1.0)] + [(0.5 * 2.0 ** -(k + 1), 0.5 * 2.0 ** -k) for k in range(pieces)]
    xs = [lo + (hi - lo) * (g + 1) / 2 for lo, hi in bounds]
    ws = [gw * (hi - lo) / 2 for lo, hi in bounds]
    return np.concatenate(xs), np.concatenate(ws)


def exact_decay_indicator(a, b, n_max, threshold=2.0):
    """Values for ``f = 1{x <= threshold}`` and ``n = 0..n_max``; also returns ``mu(f)``."""
    s, ws = _nodes()
    c_nu, c_mu = (a - 1) / b, (a - b - 1) / b
    p_nu = c_nu * s ** (c_nu - 1) * ws
    p_mu = c_mu * s ** (c_mu - 1) * ws
    f = (s >= threshold ** -b).astype(float)
    mu_f = p_mu @ f
    h = np.zeros(n_max + 1)
    out = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        k = np.arange(1, n + 1)
        conv = (s[:, None] * (1 - s[:, None]) ** (k[None, :] - 1)) @ h[n - k] if n else 0.0
        pn_f = (1 - s) ** n * f + conv
        h[n] = p_nu @ pn_f
        out[n] = p_mu @ (pn_f - mu_f) ** 2
    return out, mu_f
