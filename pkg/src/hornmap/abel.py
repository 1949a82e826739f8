"""Abel-equation solvers: Fatou coordinates on quadrants.

The functional equation is ``Phi(F(w)) = Phi(w) + 1`` for a near-translation
``F``.  Two regimes are handled by different anchorings:

* parabolic / quasi-parabolic maps (``alpha = 0`` or ``|alpha|`` tiny): the
  orbit is followed horizontally into the far zone of the quadrant, where a
  series model ``W - a log W + p1/W + p2/W**2`` closes the evaluation.  The
  model coefficients come from the Laurent expansion of ``F`` at infinity, so
  the error at the stopping point is O(log R / R^3).

* genuinely perturbed maps (moderate ``1/alpha``): orbits drift sideways and
  never reach a horizontal far zone, so the solver anchors at the two
  vertical ends instead.  Near the 0-end ``F`` is a unit translation up to
  exponentially small terms and ``Phi`` is computed as ``w + h(w)`` with a
  periodic Fourier corrector (a cohomological solve over the deck period);
  near the sigma-end ``F`` translates by ``s0 = -log f'(sigma)/(2 pi i
  alpha)`` and the mirrored corrector applies.  Points in between are pulled
  to the bottom band by the exact backward orbit (the sigma end is
  hyperbolic, so the descent is geometric).  The two representations are
  glued by a constant measured on an overlap band.

Orbit bookkeeping makes the computed residual ``Phi(F(w)) - Phi(w) - 1``
vanish identically in exact arithmetic: both sides are evaluated through the
same orbit tail.  Accuracy *as the Fatou coordinate* is governed by the far
models and is tracked in ``error_bound``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coords import LiftedMap, Quadrant
from .errors import (
    DiskNotContained,
    ExtrapolationDiverged,
    NoConvergence,
    OrbitEscapedQuadrant,
    OutOfDomain,
    QuadrantViolatesBounds,
    SeedOutsideQuadrant,
)
from .germs import TWO_PI_I

SIDES = ("attracting", "repelling")
MODE_B_THRESHOLD = 60.0  # 1/|alpha| beyond which the quasi-parabolic path is used
LOW_CEILING = 1.45  # top of the gate region served by the sigma-anchored branch


# ---------------------------------------------------------------------------
# far-zone series model (parabolic / quasi-parabolic)
# ---------------------------------------------------------------------------

def _laurent_fit(lm: LiftedMap, rho: float, nterms: int = 5):
    """Coefficients (a, b, c, ...) of F(w) - w - 1 = a/w + b/w^2 + ... at scale rho."""
    j = np.arange(nterms)
    w = rho * 2.0**j + 0.0j
    t = w * lm.v1(w)  # = a + b/w + c/w^2 + ...
    V = np.vander(1.0 / w, nterms, increasing=True)
    return np.linalg.solve(V, t)


def _log_right(W):
    return np.log(W)


def _log_left(W):
    # branch continuous across the negative real axis, arg in (0, 2 pi)
    L = np.log(W)
    return np.where(L.imag < 0.0, L + TWO_PI_I, L)


@dataclass
class _SeriesModel:
    """Phi ~ W - a log W + p1/W + p2/W^2 in a horizontal far zone."""

    a: complex
    p1: complex
    p2: complex
    logf: Callable

    @staticmethod
    def from_map(lm: LiftedMap, side: str, rho: float = 500.0) -> "_SeriesModel":
        a, b, c = _laurent_fit(lm, rho, 6)[:3]
        p1 = b - a * a + a / 2.0
        p2 = (c - a * (b - a + 1.0 / 3.0) + p1 * (1.0 - a)) / 2.0
        logf = _log_right if side == "attracting" else _log_left
        return _SeriesModel(a=complex(a), p1=complex(p1), p2=complex(p2), logf=logf)

    def __call__(self, W):
        W = np.asarray(W, dtype=complex)
        out = W - self.a * self.logf(W) + self.p1 / W + self.p2 / (W * W)
        return out if out.shape else complex(out)


# ---------------------------------------------------------------------------
# vertical band correctors (perturbed maps)
# ---------------------------------------------------------------------------

@dataclass
class _BandSolution:
    """Phi(w) = w/slope + corrector(w) on a band near one vertical end.

    The corrector is a linear combination of terms

        (w - w_base)^p * exp(2 pi i (m alpha + j) (w - w_base)),

    frequencies ``m alpha + j`` with positive height decay.  The p = 0, j = 0
    part is the deck-periodic series; the secular p >= 1, j >= 1 terms carry
    the unit-periodic (horn) content that resonates with the deck frequencies
    and its cross-coupling with the deck modes.
    """

    alpha: complex
    w_base: complex
    slope: complex
    freqs: np.ndarray   # complex frequencies nu_k (= m alpha + j)
    powers: np.ndarray  # integer powers p_k
    coef: np.ndarray
    residual: float

    def corrector(self, w):
        w = np.asarray(w, dtype=complex)
        wt = w - self.w_base
        phase = np.exp(TWO_PI_I * np.multiply.outer(wt, self.freqs))
        terms = phase * wt[..., None] ** self.powers
        out = terms @ self.coef
        return out if out.shape else complex(out)

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        out = w / self.slope + self.corrector(w)
        return out if out.shape else complex(out)


def _height_frame(alpha: complex):
    """Unit vector along which Im(alpha w) grows, and the height functional."""
    nu = 1j * np.conj(alpha) / abs(alpha)

    def height(w):
        return (np.asarray(w, dtype=complex) * alpha).imag / abs(alpha)

    return nu, height


def _band_basis(alpha: complex, y0: float, bottom: bool):
    """Frequencies for the band corrector basis (pure deck harmonics).

    Only deck frequencies m alpha decaying toward the band's end are used:
    the basis then spans no F-invariant directions and the least-squares
    solution is the unique end-anchored Fatou coordinate.  Mode counts are
    chosen so the smallest retained term is ~1e-16 at the line; frequencies
    resonating with the unit translation drop out (their content at the line
    heights used here is below working precision).
    """
    aa = abs(alpha)
    budget = 38.0  # -ln(1e-16.5)
    if bottom:
        m_max = int(budget / (2.0 * np.pi * aa * max(0.55, y0 - 0.1))) + 8
        freqs = -alpha * np.arange(1, m_max + 1)
    else:
        decay = 2.0 * np.pi * aa * max(0.6, y0 - 0.5)
        m_max = min(int(budget / decay) + 8, 420)
        freqs = alpha * np.arange(1, m_max + 1)
    return np.asarray(freqs, dtype=complex), np.zeros(freqs.size, dtype=int)


def _solve_band(lm: LiftedMap, y0: float, bottom: bool,
                m_samples: int = 0) -> _BandSolution:
    """Corrector for Phi on the band at signed height y0 by least squares.

    Phi = w/slope + h with h in the secular-Fourier family of ``_band_basis``
    makes the Abel equation exactly linear in the coefficients: for samples
    w_j on the band line, h(F(w_j)) - h(w_j) = -ghat(w_j) is solved directly.

    ``bottom=False`` anchors at the 0-end where F ~ w + 1; ``bottom=True`` at
    the sigma-end where F ~ w + s0, s0 = -log f'(sigma) / (2 pi i alpha)
    (no resonances there: sigma is hyperbolic).
    """
    alpha = lm.chart.alpha
    nu, _ = _height_frame(alpha)
    w_base = nu * y0
    freqs, powers = _band_basis(alpha, y0, bottom)
    if m_samples <= 0:
        m_samples = max(768, 3 * freqs.size)
    t = (np.arange(m_samples) + 0.5) / m_samples
    # a second sample line stabilizes the least-squares fit
    offsets = (0.0, 1.3) if not bottom else (0.0, -1.3)
    w = np.concatenate([w_base + t / alpha + nu * off for off in offsets])
    Fw = lm.step(w)
    v1 = lm.v1(w)

    if bottom:
        fp_sigma = complex(lm.germ.deriv(lm.factorization.sigma))
        s0 = complex(-np.log(fp_sigma) / (TWO_PI_I * alpha))
        rhs = -(v1 - (s0 - 1.0)) / s0
    else:
        s0 = 1.0 + 0.0j
        rhs = -v1

    # frequencies resonating with the translation by s0 have vanishing
    # divisors and cannot be carried by the corrector
    keep = np.abs(np.exp(TWO_PI_I * freqs * s0) - 1.0) > 1e-8
    freqs, powers = freqs[keep], powers[keep]

    wtF = Fw - w_base
    wtW = w - w_base
    A = (np.exp(TWO_PI_I * np.multiply.outer(wtF, freqs)) * wtF[:, None] ** powers
         - np.exp(TWO_PI_I * np.multiply.outer(wtW, freqs)) * wtW[:, None] ** powers)
    scale = np.max(np.abs(A), axis=0)
    good = scale > 1e-280
    coef = np.zeros(freqs.size, dtype=complex)
    sol_scaled, *_ = np.linalg.lstsq(A[:, good] / scale[good], rhs, rcond=None)
    coef[good] = sol_scaled / scale[good]

    sol = _BandSolution(alpha=alpha, w_base=w_base, slope=s0, freqs=freqs,
                        powers=powers, coef=coef, residual=np.inf)
    # validate off the sample grid at several heights on the decaying side
    safe = (0.41, 1.9, 5.2, 11.0) if not bottom else (-0.41, -2.6)
    probe = np.concatenate([
        w_base + (np.arange(11) + 0.27) / (11.3 * alpha) + nu * s for s in safe
    ])
    res = np.abs(sol(lm.step(probe)) - sol(probe) - 1.0)
    sol.residual = float(np.max(res))
    return sol


# ---------------------------------------------------------------------------
# the Fatou coordinate object
# ---------------------------------------------------------------------------

@dataclass
class CylinderPoint:
    """A point of the Ecalle cylinder realized in C* via zeta = exp(2 pi i Phi)."""

    zeta: complex


@dataclass
class FatouCoordinate:
    """Solution of Phi(F(w)) = Phi(w) + 1 on a quadrant.

    Immutable after ``solve_abel``; evaluation is pure and vectorized over
    numpy arrays, so instances may be shared across threads.
    """

    map: LiftedMap
    quadrant: Quadrant
    side: str
    normalization: tuple
    a: complex
    branch_anchor: str
    r_far: float
    n_max: int
    mode: str
    error_bound: float = 0.0
    _model: Callable = field(repr=False, default=None)
    _shift: complex = field(repr=False, default=0.0)
    _top: Optional[_BandSolution] = field(repr=False, default=None)
    _bottom: Optional[_BandSolution] = field(repr=False, default=None)
    _low_shift: Optional[complex] = field(repr=False, default=None)
    _y_top: float = field(repr=False, default=0.0)
    _y_bot: float = field(repr=False, default=0.0)
    diagnostics: dict = field(repr=False, default_factory=dict)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        scalar = (w.shape == ())
        vals = self._raw(np.atleast_1d(w)) + self._shift
        return complex(vals[0]) if scalar else vals

    def _raw(self, w):
        if self.mode == "horizontal":
            return self._raw_horizontal(w)
        return self._raw_vertical(w)

    def _raw_horizontal(self, w):
        w = w.astype(complex).copy()
        n = np.zeros(w.shape, dtype=float)
        forward = self.side == "attracting"
        active = ~self._in_far(w)
        steps = 0
        while np.any(active):
            if steps >= self.n_max:
                raise OrbitEscapedQuadrant(
                    "orbit did not reach the far zone within n_max steps; "
                    "increase the quadrant or lower r_far"
                )
            idx = np.flatnonzero(active)
            if forward:
                w[idx] = self.map.step(w[idx])
                n[idx] += 1.0
            else:
                w[idx] = self.map.inverse_step(w[idx])
                n[idx] -= 1.0
            inside = self.quadrant.contains(w[idx])
            if not np.all(inside):
                raise OrbitEscapedQuadrant(
                    "orbit left the quadrant before reaching the far zone"
                )
            active[idx] = ~self._in_far(w[idx])
            steps += 1
        return self._model(w) - n

    def _in_far(self, w):
        d = self.quadrant.boundary_distance(w)
        return (np.abs(w) >= self.r_far) & (d >= self.r_far)

    def _raw_vertical(self, w):
        """Dispatch between the 0-end corrector and the sigma-anchored branch.

        The two vertical-end solutions differ by a genuine F-invariant
        function (the horn content of the coordinate), so they are separate
        representations: the 0-end corrector serves heights above its line
        and carries the normalization; the sigma-anchored branch serves the
        gate region below ``LOW_CEILING`` and is shifted by the low anchor.
        Heights in between are not dynamically reachable for rational-like
        rotation numbers (the gate's rotation islands) and raise OutOfDomain.
        """
        _, height = _height_frame(self.map.chart.alpha)
        h = height(w)
        out = np.empty(w.shape, dtype=complex)
        top = h >= self._y_top - 0.02
        low = h <= LOW_CEILING
        if np.any(~(top | low)):
            raise OutOfDomain(
                f"evaluation at height {float(np.max(h[~(top | low)])):.2f} in "
                f"the dead band ({LOW_CEILING}, {self._y_top:.1f}): no stable "
                "representation there for near-rational rotation numbers"
            )
        if np.any(top):
            out[top] = self._top(w[top])
        if np.any(low):
            if self._low_shift is None:
                raise OutOfDomain(
                    "low-band evaluation requires a low_anchor (see solve_abel)"
                )
            out[low] = self._descend(w[low]) + self._low_shift
        return out

    def _descend(self, w):
        """Backward orbit into the bottom band, then the band model.

        Backward orbits converge to the hyperbolic fixed point sigma, which
        is the band's end; orbits started inside the rotation islands around
        the 0-end never descend and are reported rather than looped on.
        """
        _, height = _height_frame(self.map.chart.alpha)
        w = np.atleast_1d(w).astype(complex).copy()
        n = np.zeros(w.shape, dtype=float)
        stop = -self._y_bot - 0.05
        active = height(w) > stop
        cap = min(self.n_max, 3000 + int(40.0 / abs(self.map.chart.alpha)))
        probe_h = height(w)
        steps = 0
        while np.any(active):
            if steps >= cap:
                raise NoConvergence(
                    "backward descent trapped near the rotation zone; "
                    "evaluate above the corrector floor instead"
                )
            idx = np.flatnonzero(active)
            w[idx] = self.map.inverse_step(w[idx])
            n[idx] += 1.0
            active[idx] = height(w[idx]) > stop
            steps += 1
            if steps % 500 == 0:
                hh = height(w)
                if np.any(active & (hh > probe_h - 0.05)):
                    raise NoConvergence(
                        "backward descent stalled (rotation-island point)"
                    )
                probe_h = hh
        return self._bottom(w) + n

    def set_low_anchor(self, w_lo, value_lo):
        """Pin the sigma-anchored gate branch so Phi(w_lo) = value_lo.

        The gate branch and the 0-end branch differ by the coordinate's horn
        content (an F-invariant function), so the gate branch carries its own
        normalization; the natural choice, following the perturbed-pair
        convention, anchors it to the parabolic companion coordinate.
        """
        if self.mode != "vertical":
            raise ValueError("low anchors apply to the vertical regime only")
        w_lo = np.atleast_1d(np.asarray(w_lo, dtype=complex))
        self._low_shift = 0.0 + 0.0j
        base = self._descend(w_lo)[0] + self._shift
        self._low_shift = complex(value_lo - base)

    # -- spec operations ------------------------------------------------------

    def residual(self, w):
        """|Phi(F(w)) - Phi(w) - 1| wherever both sides evaluate."""
        w = np.asarray(w, dtype=complex)
        r = np.abs(self(self.map.step(w)) - self(w) - 1.0)
        return r if r.shape else float(r)

    def derivative(self, w, h: float = 1e-3):
        """Phi'(w) by 5-point central differences."""
        w = np.asarray(w, dtype=complex)
        return (8.0 * (self(w + h) - self(w - h)) - (self(w + 2 * h) - self(w - 2 * h))) / (12.0 * h)

    def invert(self, target, tol: float = 1e-10, maxiter: int = 60):
        """w with Phi(w) = target, Newton seeded from the asymptotic inverse."""
        target = np.asarray(target, dtype=complex)
        c = self.asymptote()[0]
        seed = target + self.a * np.log(target + 0.0j) - c if self.a != 0 else target - c
        if not np.all(self.quadrant.contains(seed)):
            raise SeedOutsideQuadrant("asymptotic inverse seed left the quadrant")
        w = seed.astype(complex)
        for _ in range(maxiter):
            err = self(w) - target
            w = w - err * (1.0 + self.map.v1(w))  # Phi' ~ 1/v
            if np.all(np.abs(err) < tol):
                return w if w.shape else complex(w)
        raise NoConvergence("Fatou inversion did not converge")

    def asymptote(self):
        """Constant c with Phi(w) = w - a log w + c + o(1), with an error estimate.

        For vertical-mode solutions the constant is read off the top band
        corrector, whose own constant term is zero by construction.  For
        horizontal mode it is the model shift.  A Richardson sweep along a
        ray cross-checks the value; the spread is the returned error.
        """
        c = complex(self._shift)
        est = self._asymptote_probe()
        err = abs(est - c)
        if not np.isfinite(err):
            raise ExtrapolationDiverged("asymptote probe diverged")
        return c, err

    def _asymptote_probe(self):
        if self.mode == "vertical":
            nu, _ = _height_frame(self.map.chart.alpha)
            pts = nu * (self._y_top + 3.0 + 4.0 * np.arange(3))
            vals = self(pts) - pts
            return complex(vals[-1])
        t = self.r_far * np.array([2.0, 4.0, 8.0])
        pts = t * self.quadrant_ray()
        vals = self(pts) - (pts - self.a * self._model.logf(pts))
        # two Richardson passes on the doubling ladder kill 1/t and 1/t^2
        e1 = 2.0 * vals[1] - vals[0]
        e2 = 2.0 * vals[2] - vals[1]
        return complex((4.0 * e2 - e1) / 3.0)

    def quadrant_ray(self):
        """Unit direction pointing into the far zone of this coordinate."""
        return 1.0 + 0.0j if self.side == "attracting" else -1.0 + 0.0j

    # -- diagnostics ----------------------------------------------------------

    def in_quadrant(self, w):
        return self.quadrant.contains(w)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def find_channel_anchor(lm: LiftedMap, b1: float, b2: float,
                        heights=(1.2, 1.0, 0.8, 0.6), step: float = 0.25,
                        max_steps: int = 800):
    """A point of Q(b1, b2) whose backward orbit descends to the sigma band.

    Scans candidate heights and real parts (staying a margin inside both
    wedges) for a point escaping the rotation islands around the 0-end;
    used to place low anchors for perturbed Fatou coordinates.
    """
    _, height = _height_frame(lm.chart.alpha)
    for hgt in heights:
        lo, hi = b1 - hgt + 0.45, b2 + hgt - 0.45
        if hi <= lo:
            continue
        res = np.arange(lo, hi + 1e-9, step)
        w = (res + 1j * hgt).astype(complex)
        done = np.zeros(w.shape, dtype=bool)
        cur = w.copy()
        for _ in range(max_steps):
            act = ~done
            if not act.any():
                break
            cur[act] = lm.inverse_step(cur[act])
            done |= height(cur) < -1.05
        if done.any():
            return complex(w[np.flatnonzero(done)[0]])
    raise NoConvergence("no descending channel point found in the given range")


def _certify_quadrant(lm: LiftedMap, quadrant: Quadrant, policy: str,
                      grid: int = 24, window: float = 48.0):
    if policy == "off":
        return 0
    xs = []
    b1 = quadrant.b1.real if quadrant.b1 is not None else -window
    b2 = quadrant.b2.real if quadrant.b2 is not None else window
    x = np.linspace(b1 - window, b2 + window, grid)
    y = np.linspace(-window, window, grid)
    W = (x[None, :] + 1j * y[:, None]).ravel()
    W = W[quadrant.contains(W)]
    W = W[lm.lattice_distance(W) > 1e-9]
    d1, d2 = lm.translation_defect(W)
    bad = int(np.sum((d1 >= 0.25) | (d2 >= 0.25)))
    if bad and policy == "strict":
        raise QuadrantViolatesBounds(
            f"near-translation bounds fail at {bad}/{W.size} quadrant probes"
        )
    return bad


def solve_abel(map: LiftedMap, quadrant: Quadrant, side: str,
               normalization: tuple, *, r_far: float = 1.0e4,
               n_max: int = 200_000, certify: str = "strict",
               low_anchor: Optional[tuple] = None) -> FatouCoordinate:
    """Solve the Abel equation on a quadrant and normalize.

    Parameters
    ----------
    map : LiftedMap
        Near-translation lift; ``map.chart.alpha`` selects the regime.
    quadrant : Quadrant
        Region on which the coordinate is requested.
    side : {"attracting", "repelling"}
        Orbit direction for the horizontal regime and branch anchoring.
    normalization : (w0, value)
        Enforces ``Phi(w0) = value``.  For the vertical (moderate 1/alpha)
        regime ``w0`` must sit at or above the 0-end corrector line.
    certify : {"strict", "warn", "off"}
        Policy for the near-translation probe check on the quadrant.  Germs
        at the edge of the theory's neighborhood (large ``alpha``) fail the
        1/4 margins near the vertices; ``warn`` records and proceeds, which
        is sound here because neither anchoring relies on those margins.
    low_anchor : (w_lo, value_lo), optional
        Vertical regime only: pins the sigma-anchored gate branch, which
        differs from the 0-end representation by the coordinate's own horn
        content and therefore needs its own normalization.  ``w_lo`` must
        have height <= 1.45 and lie on a descending backward orbit.
    """
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    violations = _certify_quadrant(map, quadrant, certify)
    canonical = normalization is None
    if canonical:
        # canonical normalization: the asymptotic constant c vanishes, which
        # the raw solver realizes with a zero shift
        w0, value = None, 0.0
    else:
        w0, value = normalization
    alpha = map.chart.alpha
    vertical = alpha != 0 and 1.0 / abs(alpha) <= MODE_B_THRESHOLD

    if not vertical:
        r_eff = r_far
        rho = 500.0
        if alpha != 0:
            r_eff = min(r_far, 1.0 / (8.0 * abs(alpha)))
            rho = min(rho, 1.0 / (32.0 * abs(alpha)))
        model = _SeriesModel.from_map(map, side, rho=rho)
        phi = FatouCoordinate(
            map=map, quadrant=quadrant, side=side, normalization=(w0, value),
            a=model.a if alpha == 0 else 0.0,
            branch_anchor="upper", r_far=r_eff, n_max=n_max, mode="horizontal",
        )
        phi._model = model
        # advertised bound in the shape of the sector estimate: C3 (1/R + C/R^nu)
        phi.error_bound = float(2.0 * (1.0 + abs(model.a)) * np.log(max(np.e, r_eff)) / r_eff**2)
        phi.diagnostics["certify_violations"] = violations
    else:
        phi = _solve_vertical(map, quadrant, side, (w0, value), n_max)
        phi.diagnostics["certify_violations"] = violations
        if not canonical:
            _, height = _height_frame(alpha)
            if height(w0) < phi._y_top - 0.02:
                raise SeedOutsideQuadrant(
                    f"vertical-mode normalization point must have height >= "
                    f"{phi._y_top:.1f} (got {float(height(w0)):.2f})"
                )

    if canonical:
        phi.normalization = ("canonical", 0.0)
        phi._shift = 0.0
    else:
        base = phi._raw(np.atleast_1d(np.asarray(w0, dtype=complex)))[0]
        phi._shift = value - base
    if low_anchor is not None:
        phi.set_low_anchor(*low_anchor)
    return phi


def _solve_vertical(map: LiftedMap, quadrant: Quadrant, side: str,
                    normalization, n_max: int) -> FatouCoordinate:
    top = y_top = None
    for y0 in (4.2, 4.7, 5.4, 6.3):
        cand = _solve_band(map, y0, bottom=False)
        if cand.residual < 6e-11:
            top, y_top = cand, y0
            break
    if top is None:
        raise NoConvergence("top band corrector did not validate")

    bottom = y_bot = None
    for y0 in (1.0, 1.35, 1.8):
        cand = _solve_band(map, -y0, bottom=True)
        if cand.residual < 3e-12:
            bottom, y_bot = cand, y0
            break
    if bottom is None:
        raise NoConvergence("bottom band corrector did not validate")

    phi = FatouCoordinate(
        map=map, quadrant=quadrant, side=side, normalization=normalization,
        a=0.0, branch_anchor="upper", r_far=np.inf, n_max=n_max, mode="vertical",
    )
    phi._top, phi._bottom = top, bottom
    phi._y_top, phi._y_bot = y_top, y_bot
    phi.error_bound = float(max(top.residual, bottom.residual) * 10.0 + 1e-13)
    phi.diagnostics.update(top_residual=top.residual, bottom_residual=bottom.residual,
                           y_top=y_top, y_bot=y_bot)
    return phi


# ---------------------------------------------------------------------------
# cylinder projection and estimates
# ---------------------------------------------------------------------------

def project_to_cylinder(phi: FatouCoordinate, w) -> CylinderPoint:
    """zeta = exp(2 pi i Phi(w)); constant along orbits of F."""
    val = phi(w)
    return CylinderPoint(zeta=np.exp(TWO_PI_I * np.asarray(val, dtype=complex)))


def derivative_estimate_check(phi: FatouCoordinate, z0: complex, R: float,
                              C2: Optional[float] = None, R1: float = 20.0):
    """lhs = |Phi'(z0) - 1/v(z0)| and rhs = C2/R for the disk estimate.

    The disk of radius R about z0 must lie in the quadrant and R >= R1.
    When C2 is None it is calibrated so rhs = lhs at this radius (callers
    calibrate once and reuse).
    """
    if R < R1:
        raise DiskNotContained(f"R = {R} below the configured floor R1 = {R1}")
    if phi.quadrant.boundary_distance(z0) < R:
        raise DiskNotContained("disk of radius R about z0 leaves the quadrant")
    v = 1.0 + phi.map.v1(z0)
    lhs = float(abs(phi.derivative(z0) - 1.0 / v))
    if C2 is None:
        C2 = lhs * R
    return lhs, float(C2 / R)


def fundamental_index(phi: FatouCoordinate, z0: complex, w: complex,
                      n_window: int = 3) -> int:
    """The unique n with F^n(w) in the strip between l = z0 + iR and F(l).

    Membership uses the half-open convention: the left curve l is included,
    its image F(l) excluded.  The candidate from Re Phi is checked together
    with its neighbors; exactly one must pass.
    """
    lm = phi.map
    guess = -int(np.floor((phi(w) - phi(z0)).real + 1e-12))
    hits = []
    for n in range(guess - n_window, guess + n_window + 1):
        p = _iterate_signed(lm, w, n)
        if _in_strip(lm, z0, p):
            hits.append(n)
    if len(hits) != 1:
        raise NoConvergence(f"strip membership found {hits} for w = {w}")
    return hits[0]


def _iterate_signed(lm: LiftedMap, w, n: int):
    w = np.asarray(w, dtype=complex)
    for _ in range(abs(n)):
        w = lm.step(w) if n > 0 else lm.inverse_step(w)
    return w


def _in_strip(lm: LiftedMap, z0: complex, p) -> bool:
    """p between the vertical line through z0 (included) and its F-image (excluded)."""
    p = complex(p)
    if p.real < z0.real:
        return False
    # find y with Im F(z0 + i y) = Im p; Im F is monotone in y since |F'-1|<1/4
    y = p.imag
    for _ in range(60):
        fz = complex(lm.step(z0 + 1j * y))
        dy = (fz.imag - p.imag) / complex(lm.deriv(z0 + 1j * y)).real
        y -= dy
        if abs(dy) < 1e-12:
            break
    return p.real < complex(lm.step(z0 + 1j * y)).real
