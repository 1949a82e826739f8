"""Analytic germs fixing 0 and their fixed-point factorization.

A germ ``f`` near a parabolic one is stored as a pair of callables (value and
derivative) plus metadata: the rotation number ``alpha`` with
``f'(0) = exp(2*pi*i*alpha)``, the petal multiplicity ``q`` and a disk radius
on which the callables are trusted.

``factorize`` extracts the second fixed point ``sigma`` and the nonvanishing
factor ``u`` of

    f(z) = z + z*(z - sigma)*u(z)

together with ``alpha`` on the branch ``|Re alpha| <= 1/2``.  The removable
singularities of the quotient ``(f(z)-z)/(z*(z-sigma))`` at 0 and ``sigma``
are filled from a Taylor table built once by a Cauchy integral, which avoids
catastrophic cancellation near the two roots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MoreThanTwoFixedPoints, NoConvergence

TWO_PI_I = 2j * np.pi

KINDS = ("parabolic_q1", "near_parabolic_q1", "parabolic_qgeq2", "near_parabolic_qgeq2")


@dataclass(frozen=True)
class Germ:
    """An analytic germ fixing 0.

    Immutable after construction; the callables must be pure, so a germ may be
    evaluated concurrently from many threads.

    Parameters
    ----------
    eval : callable
        ``z -> f(z)``, accepts complex scalars or numpy arrays.
    deriv : callable
        ``z -> f'(z)``.
    domain_radius : float
        Radius of the disk about 0 on which ``eval`` is trusted.
    kind : str
        One of ``parabolic_q1``, ``near_parabolic_q1``, ``parabolic_qgeq2``,
        ``near_parabolic_qgeq2``.
    q : int
        Petal multiplicity (1 for the single-petal theory).
    alpha : complex
        Declared rotation number; ``f'(0) = exp(2*pi*i*alpha)`` for ``q = 1``
        germs, and ``(f^q)'(0) = exp(2*pi*i*alpha)`` for ``q >= 2``.
    inverse : callable, optional
        ``(x, hint) -> z`` with ``f(z) = x`` and ``z`` the branch nearest
        ``hint``.  Newton fallback is used when absent.
    u_exact : callable, optional
        Closed form for the factor ``u`` when the family admits one
        (``u == 1`` for the quadratic family).
    """

    eval: Callable
    deriv: Callable
    domain_radius: float
    kind: str
    q: int = 1
    alpha: complex = 0.0
    inverse: Optional[Callable] = None
    u_exact: Optional[Callable] = None
    label: str = "germ"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown germ kind {self.kind!r}")
        f0 = complex(self.eval(0.0))
        if abs(f0) > 1e-13:
            raise ValueError(f"germ does not fix 0: f(0) = {f0}")

    def __call__(self, z):
        return self.eval(z)

    def iterate(self, z, n: int):
        """n-fold forward composition."""
        for _ in range(n):
            z = self.eval(z)
        return z

    def invert(self, x, hint, tol: float = 1e-13, maxiter: int = 60):
        """Branch of ``f^{-1}(x)`` nearest ``hint``."""
        if self.inverse is not None:
            return self.inverse(x, hint)
        z = np.asarray(hint, dtype=complex).copy()
        x = np.asarray(x, dtype=complex)
        for _ in range(maxiter):
            dz = (self.eval(z) - x) / self.deriv(z)
            z = z - dz
            if np.all(np.abs(dz) < tol):
                return z if z.shape else complex(z)
        raise NoConvergence("germ inverse Newton did not converge")


@dataclass(frozen=True)
class Factorization:
    """Data of the fixed-point factorization f(z) = z + z(z-sigma)u(z)."""

    sigma: complex
    u: Callable
    alpha: complex
    V_radius: float
    du: Callable = field(repr=False, default=None)
    germ: Germ = field(repr=False, default=None)

    def residual(self, z):
        """|f(z) - z - z(z-sigma)u(z)| on points z."""
        z = np.asarray(z, dtype=complex)
        return np.abs(self.germ.eval(z) - z - z * (z - self.sigma) * self.u(z))


def make_quadratic(alpha: complex) -> Germ:
    """Canonical test family f(z) = e^{2 pi i alpha} z + z^2.

    ``alpha = 0`` gives the normalized parabolic germ z + z^2 (single petal,
    multiplier 1); otherwise the germ is tagged near-parabolic.
    """
    alpha = complex(alpha)
    if abs(alpha) >= 1:
        raise ValueError("make_quadratic expects |alpha| < 1")
    lam = np.exp(TWO_PI_I * alpha)

    def f(z):
        return lam * z + z * z

    def df(z):
        return lam + 2.0 * np.asarray(z, dtype=complex)

    def finv(x, hint):
        # roots of z^2 + lam z - x = 0; take the branch nearest the hint
        disc = np.sqrt(lam * lam + 4.0 * np.asarray(x, dtype=complex))
        r1 = (-lam + disc) / 2.0
        r2 = (-lam - disc) / 2.0
        hint = np.asarray(hint, dtype=complex)
        pick = np.where(np.abs(r1 - hint) <= np.abs(r2 - hint), r1, r2)
        return pick if pick.shape else complex(pick)

    kind = "parabolic_q1" if alpha == 0 else "near_parabolic_q1"
    return Germ(
        eval=f,
        deriv=df,
        domain_radius=4.0,
        kind=kind,
        q=1,
        alpha=alpha,
        inverse=finv,
        u_exact=lambda z: np.ones_like(np.asarray(z, dtype=complex)),
        label=f"quadratic(alpha={alpha:.6g})",
    )


def make_polynomial(coeffs) -> Germ:
    """Germ from polynomial coefficients [c1, c2, ...] of z + ... with c0 = 0.

    ``coeffs[k]`` multiplies ``z^{k+1}``; the constant term is forced to 0 so
    the germ fixes the origin.  The multiplier is ``coeffs[0]``.
    """
    c = np.asarray(coeffs, dtype=complex)
    if c.size == 0:
        raise ValueError("need at least the linear coefficient")
    lam = c[0]
    alpha = np.log(lam) / TWO_PI_I
    # full coefficient array for polyval, highest power first, constant 0
    full = np.concatenate([c[::-1], [0.0]])
    dfull = np.polyder(full)

    def f(z):
        return np.polyval(full, np.asarray(z, dtype=complex))

    def df(z):
        return np.polyval(dfull, np.asarray(z, dtype=complex))

    kind = "parabolic_q1" if abs(lam - 1.0) < 1e-14 else "near_parabolic_q1"
    return Germ(
        eval=f,
        deriv=df,
        domain_radius=2.0,
        kind=kind,
        q=1,
        alpha=complex(alpha),
        label=f"polynomial(deg={c.size})",
    )


def count_fixed_points(f: Germ, radius: float, nodes: int = 4096) -> int:
    """Number of roots of f(z) - z inside |z| = radius, by the argument principle."""
    theta = np.linspace(0.0, 2.0 * np.pi, nodes, endpoint=False)
    z = radius * np.exp(1j * theta)
    g = f.eval(z) - z
    if np.min(np.abs(g)) < 1e-12 * radius:
        # a root sits (numerically) on the contour; nudge the radius
        z = (radius * 1.01) * np.exp(1j * theta)
        g = f.eval(z) - z
    dg = f.deriv(z) - 1.0
    integrand = dg / g * (1j * z)
    total = np.sum(integrand) * (2.0 * np.pi / nodes) / TWO_PI_I
    n = int(np.rint(total.real))
    if abs(total - n) > 1e-6:
        raise NoConvergence(f"argument-principle count did not settle: {total}")
    return n


def _taylor_table(fun: Callable, radius: float, terms: int = 96) -> np.ndarray:
    """Taylor coefficients of ``fun`` at 0 from a Cauchy/FFT integral."""
    m = 4 * terms
    theta = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    z = radius * np.exp(1j * theta)
    vals = fun(z)
    coef = np.fft.fft(vals) / m
    k = np.arange(terms)
    return coef[:terms] / radius**k


def factorize(f: Germ, V_radius: float = 0.25) -> Factorization:
    """Factor f(z) - z = z (z - sigma) u(z) on the localization disk.

    ``sigma`` is the fixed point of ``f`` in the disk other than 0 (0 itself
    for a parabolic germ), found by Newton seeded at ``-2 pi i alpha`` and
    cross-checked by an argument-principle count of roots of ``f(z) - z``.

    Raises
    ------
    MoreThanTwoFixedPoints
        If the disk contains more than two fixed points (with multiplicity):
        the germ is outside the neighborhood on which the factorization is
        single-sigma.
    """
    if f.kind not in ("parabolic_q1", "near_parabolic_q1"):
        raise ValueError("factorize handles q = 1 germs; see multipetal for q >= 2")
    lam = complex(f.deriv(0.0))
    alpha = complex(np.log(lam) / TWO_PI_I)  # principal branch, |Re alpha| <= 1/2

    n_roots = count_fixed_points(f, V_radius)
    if n_roots > 2:
        raise MoreThanTwoFixedPoints(
            f"{n_roots} fixed points in |z| < {V_radius}; germ outside the "
            "factorization neighborhood"
        )

    if abs(lam - 1.0) < 1e-14:
        sigma = 0.0 + 0.0j
    else:
        z = -TWO_PI_I * alpha  # A.1.4 seed
        for _ in range(80):
            g = complex(f.eval(z)) - z
            dg = complex(f.deriv(z)) - 1.0
            step = g / dg
            z -= step
            if abs(step) < 1e-15 * max(1.0, abs(z)):
                break
        else:
            raise NoConvergence("Newton for sigma did not converge")
        sigma = z
        if abs(sigma) > V_radius:
            raise MoreThanTwoFixedPoints(
                f"second fixed point {sigma:.4g} outside |z| < {V_radius}; "
                "enlarge V_radius"
            )

    if f.u_exact is not None:
        u_fun = f.u_exact
        du_fun = _derivative_of(u_fun)
    else:
        def quotient(z):
            z = np.asarray(z, dtype=complex)
            return (f.eval(z) - z) / (z * (z - sigma))

        r_taylor = 0.9 * min(f.domain_radius, 2.0 * V_radius)
        if abs(sigma) > 0.7 * r_taylor:
            raise NoConvergence(
                "sigma too close to the Taylor circle; enlarge V_radius"
            )
        coeffs = _taylor_table(quotient, r_taylor)
        inner = 0.6 * r_taylor

        def u_fun(z):
            z = np.asarray(z, dtype=complex)
            near = np.abs(z) <= inner
            out = np.empty(z.shape, dtype=complex)
            if np.any(near):
                out[near] = np.polyval(coeffs[::-1], z[near])
            if np.any(~near):
                out[~near] = quotient(z[~near])
            return out if out.shape else complex(out)

        dcoeffs = coeffs[1:] * np.arange(1, coeffs.size)

        def du_fun(z):
            z = np.asarray(z, dtype=complex)
            return np.polyval(dcoeffs[::-1], z)

    u0 = complex(u_fun(np.array(0.0 + 0.0j)))
    if abs(u0) < 1e-12:
        raise NoConvergence("factor u vanishes at 0; factorization breaks down")
    # multiplier identity e^{2 pi i alpha} = 1 - sigma u(0)
    if abs(lam - (1.0 - sigma * u0)) > 1e-8 * max(1.0, abs(lam)):
        raise NoConvergence(
            f"multiplier identity violated: {lam} vs {1.0 - sigma * u0}"
        )
    return Factorization(sigma=sigma, u=u_fun, alpha=alpha, V_radius=V_radius,
                         du=du_fun, germ=f)


def _derivative_of(fun: Callable, h: float = 1e-5) -> Callable:
    """Fourth-order complex finite-difference derivative of a holomorphic callable."""

    def d(z):
        z = np.asarray(z, dtype=complex)
        return (8.0 * (fun(z + h) - fun(z - h)) - (fun(z + 2 * h) - fun(z - 2 * h))) / (12.0 * h)

    return d
