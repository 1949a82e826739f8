"""Covering charts, quadrants and lifted maps.

The chart ``tau`` turns a germ near 0 into a near-translation ``F`` of the
plane: ``tau0(w) = -1/w`` for the parabolic germ, and for a perturbed germ
with second fixed point ``sigma``

    tau_f(w) = sigma / (1 - exp(-2 pi i alpha w)),

whose deck transformation is ``T_f(w) = w - 1/alpha``.  The lifted map is

    F_f(w) = w + (1/(2 pi i alpha)) log(1 - sigma u(z)/(1 + z u(z))),
    z = tau_f(w),

with the principal branch of the logarithm.  ``lift_map`` certifies the
near-translation bounds |F(w)-(w+1)| < 1/4, |F'(w)-1| < 1/4 on the complement
of disks around the deck lattice, trying an exclusion-radius ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainExhausted, NoConvergence, OutOfDomain, PoleAtLattice
from .germs import Factorization, Germ, TWO_PI_I

R0_LADDER = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


# ---------------------------------------------------------------------------
# quadrants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quadrant:
    """Region Q(b1, b2): right of the left wedge at b1, left of the right wedge at b2.

    ``None`` stands for -inf (b1) or +inf (b2); the corresponding condition is
    dropped.  Membership uses the open conditions

        Re(w - b1) > -|Im(w - b1)|,   Re(w - b2) < |Im(w - b2)|.
    """

    b1: Optional[complex]
    b2: Optional[complex]

    def __post_init__(self):
        if self.b1 is not None and self.b2 is not None:
            if (complex(self.b2) - complex(self.b1)).real <= 2.0:
                raise ValueError("quadrant needs Re b2 > Re b1 + 2")

    def contains(self, w):
        w = np.asarray(w, dtype=complex)
        ok = np.ones(w.shape, dtype=bool)
        if self.b1 is not None:
            z = w - self.b1
            ok &= z.real > -np.abs(z.imag)
        if self.b2 is not None:
            z = w - self.b2
            ok &= z.real < np.abs(z.imag)
        return ok if ok.shape else bool(ok)

    def boundary_distance(self, w):
        """Distance from w to the quadrant boundary (inf for Q(-inf, inf))."""
        w = np.asarray(w, dtype=complex)
        d = np.full(w.shape, np.inf)
        if self.b1 is not None:
            d = np.minimum(d, _wedge_distance(w - self.b1, left=True))
        if self.b2 is not None:
            d = np.minimum(d, _wedge_distance(w - self.b2, left=False))
        return d if d.shape else float(d)


def _wedge_distance(z, left: bool):
    """Distance to the closed wedge {Re z <= -|Im z|} (left) or {Re z >= |Im z|}."""
    z = np.asarray(z, dtype=complex)
    if not left:
        z = -z
    x, y = z.real, np.abs(z.imag)
    inside_wedge = x <= -y
    # boundary rays have direction (-1, +-1)/sqrt(2); for points with x+y >= 0
    # the nearest boundary point is on the ray, else it is the apex
    on_ray = (y - x) >= 0.0
    d_ray = np.abs(x + y) / np.sqrt(2.0)
    d_apex = np.hypot(x, y)
    d = np.where(on_ray, d_ray, d_apex)
    return np.where(inside_wedge, 0.0, d)


# ---------------------------------------------------------------------------
# covering charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoveringChart:
    """The chart tau (tau0 when alpha = 0) with its deck translation.

    ``period`` is the deck amount -1/alpha (None in the parabolic chart).
    """

    alpha: complex
    sigma: complex
    period: Optional[complex]

    @staticmethod
    def parabolic() -> "CoveringChart":
        return CoveringChart(alpha=0.0, sigma=0.0, period=None)

    @staticmethod
    def perturbed(alpha: complex, sigma: complex) -> "CoveringChart":
        if alpha == 0:
            raise ValueError("perturbed chart needs alpha != 0")
        return CoveringChart(alpha=alpha, sigma=sigma, period=-1.0 / alpha)

    def forward(self, w):
        return chart_forward(self, w)

    def inverse(self, z, sheet_hint):
        return chart_inverse(self, z, sheet_hint)

    def deck(self, w, n: int = 1):
        """n-fold deck translation T^n(w) = w - n/alpha."""
        if self.period is None:
            raise ValueError("parabolic chart has no deck translation")
        return w + n * self.period

    def dforward(self, w):
        """Derivative tau'(w)."""
        w = np.asarray(w, dtype=complex)
        if self.alpha == 0:
            return 1.0 / (w * w)
        e = np.exp(-TWO_PI_I * self.alpha * w)
        return -TWO_PI_I * self.alpha * self.sigma * e / (1.0 - e) ** 2


def chart_forward(chart: CoveringChart, w):
    """z = tau(w).  Raises PoleAtLattice on the deck lattice (or at w = 0)."""
    w = np.asarray(w, dtype=complex)
    if chart.alpha == 0:
        if np.any(np.abs(w) < 1e-300):
            raise PoleAtLattice("tau0 pole at w = 0")
        out = -1.0 / w
    else:
        den = 1.0 - np.exp(-TWO_PI_I * chart.alpha * w)
        if np.any(np.abs(den) < 1e-14):
            raise PoleAtLattice("tau_f pole: exp(-2 pi i alpha w) = 1")
        out = chart.sigma / den
    return out if out.shape else complex(out)


def chart_inverse(chart: CoveringChart, z, sheet_hint):
    """w with tau(w) = z, on the deck-orbit representative nearest sheet_hint.

    Closed form w = -log(1 - sigma/z)/(2 pi i alpha) plus a deck shift, then
    one Newton polish step to clean up rounding.
    """
    z = np.asarray(z, dtype=complex)
    hint = np.asarray(sheet_hint, dtype=complex)
    if chart.alpha == 0:
        if np.any(np.abs(z) < 1e-300):
            raise PoleAtLattice("tau0 inverse pole at z = 0")
        out = -1.0 / z
        return out if out.shape else complex(out)
    if np.any(np.abs(z) < 1e-300) or np.any(np.abs(z - chart.sigma) < 1e-300):
        raise OutOfDomain("chart inverse at an omitted value {0, sigma}")
    w0 = -np.log(1.0 - chart.sigma / z) / (TWO_PI_I * chart.alpha)
    n = np.rint(((hint - w0) * chart.alpha).real)
    w = w0 + n / chart.alpha
    # one Newton polish step on tau(w) - z
    for _ in range(2):
        dw = (chart.forward(w) - z) / chart.dforward(w)
        w = w - dw
        if np.all(np.abs(dw) <= 1e-12 * (1.0 + np.abs(w))):
            break
    else:
        raise NoConvergence("chart inverse polish did not converge")
    return w if w.shape else complex(w)


# ---------------------------------------------------------------------------
# lifted maps
# ---------------------------------------------------------------------------

@dataclass
class LiftedMap:
    """Near-translation lift F of a germ through its covering chart.

    Evaluation is pure; instances are immutable in practice (fields are set
    once by the builders) and safe to share across threads.

    ``certified`` reports whether both near-translation bounds held at every
    probe of the certification window; ``violations`` counts failures when a
    non-strict build accepted the map anyway.
    """

    chart: CoveringChart
    factorization: Optional[Factorization]
    germ: Optional[Germ]
    R0: float
    branch_policy: str = "principal"
    a: complex = 0.0
    certified: bool = True
    violations: int = 0
    max_deviation: float = 0.0
    _F: Callable = field(repr=False, default=None)
    _dF: Callable = field(repr=False, default=None)
    _v1: Callable = field(repr=False, default=None)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, w):
        return self._F(np.asarray(w, dtype=complex))

    def v1(self, w):
        """F(w) - w - 1, evaluated without subtractive cancellation."""
        w = np.asarray(w, dtype=complex)
        if self._v1 is not None:
            return self._v1(w)
        return self._F(w) - w - 1.0

    def deriv(self, w):
        return self._dF(np.asarray(w, dtype=complex))

    def step(self, w):
        """Forward step with branch repair: the deck-branch of F nearest w + 1.

        Identical to ``F(w)`` on the certified domain; off it, the principal
        logarithm may jump a sheet and the nearest-translate branch is the
        dynamically continued one.
        """
        w = np.asarray(w, dtype=complex)
        val = self._F(w)
        if self.chart.period is not None:
            k = np.rint(((w + 1.0 - val) * self.chart.alpha).real * -1.0)
            val = val - k / self.chart.alpha
        return val if val.shape else complex(val)

    def inverse_step(self, w, tol: float = 1e-13):
        """F^{-1}(w), tracking the z-plane branch nearest the translation guess."""
        w = np.asarray(w, dtype=complex)
        hint = w - 1.0
        if self.germ is not None:
            z = self.chart.forward(w)
            zprev = self.germ.invert(z, self.chart.forward(hint))
            wprev = self.chart.inverse(np.asarray(zprev, dtype=complex), hint)
        else:
            wprev = hint
        wprev = np.asarray(wprev, dtype=complex)
        for _ in range(40):
            dw = (self.step(wprev) - w) / self._dF(wprev)
            wprev = wprev - dw
            if np.all(np.abs(dw) < tol * (1.0 + np.abs(wprev))):
                return wprev if wprev.shape else complex(wprev)
        raise NoConvergence("inverse step Newton did not converge")

    # -- domain -------------------------------------------------------------

    def lattice_distance(self, w):
        w = np.asarray(w, dtype=complex)
        if self.chart.alpha == 0:
            return np.abs(w)
        t = w * self.chart.alpha
        n = np.rint(t.real)
        return np.abs(w - n / self.chart.alpha)

    def in_domain(self, w):
        d = self.lattice_distance(w)
        out = d >= self.R0
        return out if np.shape(out) else bool(out)

    def translation_defect(self, w):
        """|F(w) - (w+1)| and |F'(w) - 1| at w."""
        w = np.asarray(w, dtype=complex)
        return np.abs(self.v1(w)), np.abs(self._dF(w) - 1.0)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_callable(F, dF, a: complex = 0.0) -> "LiftedMap":
        """Synthetic lift (testing aid), e.g. the exact translation w + 1."""
        lm = LiftedMap(chart=CoveringChart.parabolic(), factorization=None,
                       germ=None, R0=0.0, a=a)
        lm._F = lambda w: F(np.asarray(w, dtype=complex))
        lm._dF = lambda w: dF(np.asarray(w, dtype=complex))
        return lm


def _build_evaluators(f: Germ, fac: Factorization):
    alpha = fac.alpha
    sigma = fac.sigma
    u, du = fac.u, fac.du
    if abs(alpha) < 1e-15:
        chart = CoveringChart.parabolic()

        def F(w):
            z = -1.0 / w
            return -1.0 / f.eval(z)

        def dF(w):
            z = -1.0 / w
            fz = f.eval(z)
            return f.deriv(z) / (fz * fz * w * w)

        def v1(w):
            # F(w) - w = (f(z)-z)/(z f(z)) = (z - sigma) u / (z (1 + (z-sigma)u))
            z = -1.0 / w
            uz = u(z)
            zs = z - sigma
            return (zs * uz - z * (1.0 + zs * uz)) / (z * (1.0 + zs * uz)) + 0.0

    else:
        chart = CoveringChart.perturbed(alpha, sigma)
        lam = complex(np.exp(TWO_PI_I * alpha))
        u0 = complex(u(np.array(0.0 + 0.0j)))

        def _log_arg(z):
            uz = u(z)
            return 1.0 - sigma * uz / (1.0 + z * uz)

        def F(w):
            z = chart_forward(chart, w)
            return w + np.log(_log_arg(z)) / (TWO_PI_I * alpha)

        def dF(w):
            z = chart_forward(chart, w)
            uz = u(z)
            duz = du(z)
            den = 1.0 + z * uz
            A = 1.0 - sigma * uz / den
            dA = -sigma * (duz * den - uz * (uz + z * duz)) / (den * den)
            return 1.0 + (dA / A) * chart.dforward(w) / (TWO_PI_I * alpha)

        def v1(w):
            # log(A/lambda)/(2 pi i alpha) with A - lambda expanded around the
            # exact multiplier identity lambda = 1 - sigma u(0); avoids the
            # catastrophic log(A) - 2 pi i alpha difference far from the gate.
            z = chart_forward(chart, w)
            uz = u(z)
            den = 1.0 + z * uz
            a_minus_lam = sigma * (u0 * den - uz) / den
            return np.log1p(a_minus_lam / lam) / (TWO_PI_I * alpha)

    return chart, F, dF, v1


def lift_map(f: Germ, fac: Factorization, *, ladder=R0_LADDER,
             probe_grid: int = 64, window_height: float = 48.0,
             strict: bool = True) -> LiftedMap:
    """Lift the germ through its chart and certify the translation bounds.

    The exclusion radius is the smallest ladder entry for which both bounds
    of the near-translation estimate hold on a probe grid over one deck
    period (a square window around the single exclusion disk when alpha = 0).

    With ``strict=False`` a map failing every ladder entry is returned with
    the best radius, ``certified=False`` and the violation count recorded;
    germs far from the parabolic limit legitimately overshoot the 1/4 margins
    near the repelling end while every construction here that consumes F
    anchors at the hyperbolic ends and does not rely on those margins.
    """
    chart, F, dF, v1 = _build_evaluators(f, fac)
    lm = LiftedMap(chart=chart, factorization=fac, germ=f, R0=ladder[0])
    lm._F, lm._dF, lm._v1 = F, dF, v1

    best = None
    for r0 in ladder:
        probes = _certification_probes(lm, r0, probe_grid, window_height)
        d1, d2 = lm.translation_defect(probes)
        bad = int(np.sum((d1 >= 0.25) | (d2 >= 0.25)))
        dev = float(max(d1.max(initial=0.0), d2.max(initial=0.0)))
        if bad == 0:
            lm.R0 = r0
            lm.certified = True
            lm.violations = 0
            lm.max_deviation = dev
            break
        if best is None or bad < best[1]:
            best = (r0, bad, dev)
    else:
        if strict:
            raise DomainExhausted(
                f"no exclusion radius in {ladder} certifies the bounds "
                f"(best: R0={best[0]} with {best[1]} violations)"
            )
        lm.R0, lm.violations, lm.max_deviation = best
        lm.certified = False

    lm.a = 0.0 if chart.alpha != 0 else fit_inverse_coefficient(lm)
    return lm


def _certification_probes(lm: LiftedMap, r0: float, n: int, height: float):
    """Probe grid over a fundamental period, excluded disks removed."""
    alpha = lm.chart.alpha
    h = max(height, 2.0 * r0 + 8.0)
    if alpha == 0:
        x = np.linspace(-h, h, n)
        W = x[None, :] + 1j * x[:, None]
    else:
        t = np.linspace(0.0, 1.0, n, endpoint=False)
        y = np.linspace(-h, h, n)
        # one period along 1/alpha, thickened in the orthogonal direction
        per = 1.0 / alpha
        vert = 1j * np.conj(alpha) / abs(alpha)
        W = t[None, :] * per + y[:, None] * vert
    W = W.ravel()
    return W[lm.lattice_distance(W) >= r0 * 1.001]


def fit_inverse_coefficient(lm: LiftedMap, rho: float = 1.0e4) -> complex:
    """Coefficient a of 1/w in F(w) - (w + 1), by Richardson along the real axis.

    v(w) = w (F(w) - w - 1) = a + b/w + c/w^2 + ...; two extrapolation passes
    on the doubling sequence rho, 2 rho, 4 rho remove both correction orders.
    """
    w = np.array([rho, 2.0 * rho, 4.0 * rho], dtype=complex)
    v = w * lm.v1(w)
    p1 = 2.0 * v[1] - v[0]
    p2 = 2.0 * v[2] - v[1]
    return complex((4.0 * p2 - p1) / 3.0)


def semiconjugacy_residual(f: Germ, lm: LiftedMap, w) -> float:
    """|f(tau(w)) - tau(F(w))|, the defect of the lifted semiconjugacy."""
    w = np.asarray(w, dtype=complex)
    if not np.all(lm.in_domain(w)):
        raise OutOfDomain("w inside an exclusion disk")
    z = lm.chart.forward(w)
    if np.any(np.abs(z) > f.domain_radius):
        raise OutOfDomain("tau(w) outside the germ's trusted disk")
    lhs = f.eval(z)
    rhs = lm.chart.forward(lm(w))
    r = np.abs(lhs - rhs)
    return r if r.shape else float(r)
