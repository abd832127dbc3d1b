"""The m-mean, the Renyi entropy density and the Fisher information.

``theta_m(s, t)`` is the two-point mean for which
``theta_m(s, t) * (U'_m(s) - U'_m(t)) = s^m - t^m``; it is the logarithmic mean
for ``m = 1`` and the arithmetic mean for ``m = 2``.

Values are computed from the one-homogeneous form ``theta(s, t) = t psi(log(s/t))``
with ``t = max(s, t)``, using ``expm1``/``log1p`` so there is no cancellation near
the diagonal.  Partial derivatives use closed forms away from the diagonal and
Gauss-Legendre quadrature of the integral representation

    theta_m(s, t) = int_0^1 ((1 - a) s^{m-1} + a t^{m-1})^{1/(m-1)} da

when ``|log(s/t)| < 1/2``, where the closed forms lose digits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Nonlinearity",
    "critical_exponent",
    "theta",
    "theta_partials",
    "theta_second_partials",
    "theta_quadrature",
    "u_m",
    "u_m_prime",
    "u_m_second",
    "entropy",
    "fisher_information",
]

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(24)
_ALPHA = 0.5 * (_NODES + 1.0)
_W = 0.5 * _WEIGHTS
_NEAR = 0.5


def _check_m(m):
    if not 0.0 < m <= 2.0:
        raise ValueError(f"exponent m must lie in (0, 2], got {m!r}")


def critical_exponent(d: int, sigma: float) -> float:
    return max(d - 2.0 * sigma, 0.0) / d


@dataclass(frozen=True)
class Nonlinearity:
    """Porous-medium exponent together with the data needed to check its range."""

    m: float
    sigma: float
    d: int

    def __post_init__(self):
        _check_m(self.m)

    @property
    def m_critical(self) -> float:
        return critical_exponent(self.d, self.sigma)

    @property
    def below_critical(self) -> bool:
        return self.m <= self.m_critical

    def check(self, strict: bool = False):
        if self.below_critical:
            msg = (
                f"m={self.m} is at or below the critical exponent "
                f"{self.m_critical:.6g}; mass conservation is not guaranteed"
            )
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return self


def _check_nonneg(*arrays):
    for a in arrays:
        if np.any(a < 0):
            raise ValueError("the m-mean is only defined for nonnegative arguments")


def theta(s, t, m: float):
    """The m-mean of ``s`` and ``t`` (elementwise, broadcasting).

    Examples
    --------
    >>> float(theta(1.0, 3.0, 2.0))
    2.0
    >>> round(float(theta(np.e, 1.0, 1.0)), 9)
    1.718281828
    """
    _check_m(m)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_nonneg(s, t)
    if m == 2.0:
        return 0.5 * (s + t)
    hi = np.maximum(s, t)
    lo = np.minimum(s, t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        safe_hi = np.where(hi > 0, hi, 1.0)
        r = lo / safe_hi
        # log1p is ill-conditioned near -1; log(r) is exact enough there
        L = np.where(r < 0.5, np.log(r), np.log1p((lo - hi) / safe_hi))
        if m == 1.0:
            ratio = np.where(L == 0, 1.0, np.expm1(L) / L)
            ratio = np.where(np.isneginf(L), 0.0, ratio)
        else:
            q = m - 1.0
            ratio = np.where(L == 0, 1.0, (q / m) * np.expm1(m * L) / np.expm1(q * L))
            if m < 1.0:
                ratio = np.where(np.isneginf(L), 0.0, ratio)
            else:
                ratio = np.where(np.isneginf(L), q / m, ratio)
    out = np.where(hi > 0, hi * ratio, 0.0)
    return out[()] if out.ndim == 0 else out


def theta_quadrature(s, t, m: float, order: int = 0):
    """Integral-representation evaluation of ``theta`` and its derivatives.

    ``order=0`` returns ``theta``; ``order=1`` returns ``(d_s, d_t)``; ``order=2``
    returns the mixed derivative ``d_s d_t``.  Requires ``s, t > 0``.
    """
    s = np.asarray(s, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    a = _ALPHA
    if m == 1.0:
        ls, lt = np.log(s), np.log(t)
        g = np.exp(a * ls + (1 - a) * lt)
        if order == 0:
            return (g * _W).sum(-1)
        if order == 1:
            return (a * g / s * _W).sum(-1), ((1 - a) * g / t * _W).sum(-1)
        return (a * (1 - a) * g / (s * t) * _W).sum(-1)
    q = m - 1.0
    sq, tq = s**q, t**q
    P = (1 - a) * sq + a * tq
    if order == 0:
        return (P ** (1 / q) * _W).sum(-1)
    if order == 1:
        base = P ** (1 / q - 1)
        return ((1 - a) * s ** (q - 1) * base * _W).sum(-1), (a * t ** (q - 1) * base * _W).sum(-1)
    inner = (a * (1 - a) * P ** (1 / q - 2) * _W).sum(-1)
    return (1 - q) * s[..., 0] ** (q - 1) * t[..., 0] ** (q - 1) * inner


def _closed_ds(s, t, m):
    if m == 1.0:
        ell = np.log(s) - np.log(t)
        return (ell - 1.0 + t / s) / ell**2
    q = m - 1.0
    N = s**m - t**m
    D = s**q - t**q
    return (q / m) * (m * s**q * D - q * s ** (q - 1) * N) / D**2


def _closed_dst(s, t, m):
    if m == 1.0:
        ell = np.log(s) - np.log(t)
        A = ell - 1.0 + t / s
        return ((1.0 / s - 1.0 / t) * ell + 2.0 * A / t) / ell**3
    q = m - 1.0
    N = s**m - t**m
    D = s**q - t**q
    A = m * s**q * D - q * s ** (q - 1) * N
    num = m * q * s ** (q - 1) * t ** (q - 1) * (t - s) * D + 2.0 * q * t ** (q - 1) * A
    return (q / m) * num / D**3


def _positive_args(s, t, m):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_m(m)
    if np.any(s <= 0) or np.any(t <= 0):
        raise ValueError("derivatives of the m-mean need strictly positive arguments")
    return np.broadcast_arrays(s, t)


def theta_partials(s, t, m: float):
    """Partial derivatives ``(d theta/ds, d theta/dt)`` at positive arguments."""
    s, t = _positive_args(s, t, m)
    if m == 2.0:
        half = np.full(s.shape, 0.5)
        return half, half.copy()
    near = np.abs(np.log(s) - np.log(t)) < _NEAR
    ds = np.empty(s.shape)
    dt = np.empty(s.shape)
    if np.any(near):
        ds[near], dt[near] = theta_quadrature(s[near], t[near], m, order=1)
    far = ~near
    if np.any(far):
        ds[far] = _closed_ds(s[far], t[far], m)
        dt[far] = _closed_ds(t[far], s[far], m)
    return ds, dt


def theta_second_partials(s, t, m: float):
    """Second derivatives ``(d_ss, d_st, d_tt)`` at positive arguments.

    Only the mixed derivative is computed; one-homogeneity gives
    ``d_ss = -(t/s) d_st`` and ``d_tt = -(s/t) d_st``.
    """
    s, t = _positive_args(s, t, m)
    if m == 2.0:
        z = np.zeros(s.shape)
        return z, z.copy(), z.copy()
    near = np.abs(np.log(s) - np.log(t)) < _NEAR
    dst = np.empty(s.shape)
    if np.any(near):
        dst[near] = theta_quadrature(s[near], t[near], m, order=2)
    far = ~near
    if np.any(far):
        dst[far] = _closed_dst(s[far], t[far], m)
    return -(t / s) * dst, dst, -(s / t) * dst


def u_m(s, m: float):
    """Entropy density: ``s log s`` for ``m = 1`` and ``s^m / (m - 1)`` otherwise."""
    _check_m(m)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("entropy density needs nonnegative arguments")
    if m == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)
    else:
        out = s**m / (m - 1.0)
    return out[()] if out.ndim == 0 else out


def u_m_prime(s, m: float):
    _check_m(m)
    s = np.asarray(s, dtype=float)
    if m == 1.0:
        if np.any(s <= 0):
            raise ValueError("U'_1 is singular at vacuum")
        return np.log(s) + 1.0
    if m < 1.0 and np.any(s <= 0):
        raise ValueError(f"U'_m is singular at vacuum for m={m}")
    return m / (m - 1.0) * s ** (m - 1.0)


def u_m_second(s, m: float):
    _check_m(m)
    s = np.asarray(s, dtype=float)
    if m == 1.0:
        return 1.0 / s
    return m * s ** (m - 2.0)


def entropy(rho, m: float, grid=None) -> float:
    """Renyi entropy ``sum_i U_m(rho_i) h^d``."""
    from .grid import Grid

    rho = np.asarray(rho, dtype=float)
    grid = grid or Grid.from_shape(rho.shape)
    return float(np.sum(u_m(rho, m)) * grid.cell_volume)


def fisher_information(rho, m: float, K) -> float:
    """Entropy dissipation functional of the non-local flow.

    ``1/2 sum_{i != j} grad(rho^{m-1}) grad(rho^m) K_ij h^{2d} * m/(m-1)``, with
    ``grad(log rho)`` in place of ``m/(m-1) grad(rho^{m-1})`` when ``m = 1``.
    """
    _check_m(m)
    grid = K.grid
    r = np.asarray(rho, dtype=float).ravel()
    if m <= 1.0 and np.any(r <= 0):
        raise ValueError("Fisher information is singular at vacuum for m <= 1")
    if m == 1.0:
        a, b = np.log(r), r
    else:
        a, b = (m / (m - 1.0)) * r ** (m - 1.0), r**m
    ga = a[None, :] - a[:, None]
    gb = b[None, :] - b[:, None]
    return float(0.5 * np.sum(ga * gb * K.values) * grid.cell_volume**2)
