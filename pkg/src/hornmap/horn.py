"""Horn maps and perturbed return maps.

The parabolic horn map is the transition between the attracting and
repelling Fatou coordinates,

    E(w) = Phi_plus(Phi_minus^{-1}(w)),

1-periodic on two half planes |Im w| > eta0 and realized on the cylinder as
the germ  cE(zeta) = exp(2 pi i E(log zeta / 2 pi i)),  which extends
holomorphically to 0 and infinity.  Low-height values (deep into the
cylinder ends) are reached through the maximal extensions of the paper's
coordinates: the base coordinate is pulled back by an integer translation
and pushed forward by the germ in the z-plane, which is an exact finite
composition.

For a perturbed germ the pair (Phi_plus, Phi_minus) on overlapping
quadrants yields the lifted return map

    R(w) = Phi_minus(T(psi(w))),    psi = extension of Phi_minus^{-1},

which coincides with E + c_minus - c_plus - 1/alpha, has cylinder
derivative exp(-2 pi i / alpha) at 0, and converges (after the exponential
twist) to the parabolic horn map as alpha -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import abel
from .abel import FatouCoordinate, Quadrant, find_channel_anchor, solve_abel
from .coords import LiftedMap, lift_map
from .errors import (
    AlphaTooLarge,
    EmptyDomain,
    EtaTooSmall,
    LeftDomain,
    NoConvergence,
    OutOfDomain,
)
from .germs import Germ, TWO_PI_I, factorize, make_quadratic

ETA_LADDER = (5.0, 10.0, 20.0)


def _pi(w):
    return np.exp(TWO_PI_I * np.asarray(w, dtype=complex))


def _pi_inv(zeta):
    return np.log(np.asarray(zeta, dtype=complex)) / TWO_PI_I


@dataclass
class Sector:
    """Admissible rotation numbers for the perturbed-family constructions."""

    r_max: float = 1.0 / 20.0
    half_angle: float = np.pi / 4.0

    def contains(self, alpha: complex) -> bool:
        alpha = complex(alpha)
        return 0.0 < abs(alpha) <= self.r_max and abs(np.angle(alpha)) <= self.half_angle


# ---------------------------------------------------------------------------
# parabolic side
# ---------------------------------------------------------------------------

@dataclass
class ParabolicStructure:
    """Fatou coordinates of a parabolic germ with their basin extensions.

    ``phi_plus``/``phi_minus`` are canonical (their asymptotic constants
    vanish, which realizes the normalization making the two horn constants
    equal).  ``phi0_ext`` evaluates the attracting coordinate on the basin
    chunk reachable by forward iteration; ``incoming`` parametrizes the
    repelling side on its maximal extension.
    """

    germ: Germ
    lifted: LiftedMap
    xi1: float
    phi_plus: FatouCoordinate
    phi_minus: FatouCoordinate
    xi0: float
    orbit_cap: int = 4000

    def phi0_ext(self, z):
        """Extended attracting coordinate Phi0 on the basin, z-plane input."""
        z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
        out = np.empty(z.shape, dtype=complex)
        m = np.zeros(z.shape)
        active = np.ones(z.shape, dtype=bool)
        f = self.germ
        for _ in range(self.orbit_cap):
            w = -1.0 / z
            ready = active & self._in_plus_zone(w)
            out[ready] = self.phi_plus(w[ready]) - m[ready]
            active &= ~ready
            if not active.any():
                return out
            if np.any(np.abs(z[active]) > f.domain_radius):
                raise OutOfDomain("orbit left the germ's trusted disk")
            z[active] = f.eval(z[active])
            m[active] += 1.0
        raise OutOfDomain("orbit did not reach the attracting petal zone")

    def _in_plus_zone(self, w):
        w = np.asarray(w, dtype=complex)
        return self.phi_plus.quadrant.contains(w) & (
            self.phi_plus.quadrant.boundary_distance(w) > 1.0)

    def incoming(self, w):
        """Extended repelling parametrization phi0: w -> z (maximal domain)."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        n = np.maximum(0, np.ceil(w.real + self.xi0)).astype(int)
        base = w - n
        W = self.phi_minus.invert(base)
        z = -1.0 / W
        f = self.germ
        todo = n.copy()
        while np.any(todo > 0):
            act = todo > 0
            z_act = f.eval(z[act])
            if np.any(np.abs(z_act) > f.domain_radius):
                raise OutOfDomain("repelling extension left the trusted disk")
            z[act] = z_act
            todo[act] -= 1
        return z

    def phi_minus_ext(self, w):
        """Repelling coordinate continued outside its quadrant by the inverse orbit."""
        w = np.atleast_1d(np.asarray(w, dtype=complex)).copy()
        n = np.zeros(w.shape)
        Q = self.phi_minus.quadrant
        lm = self.lifted
        for _ in range(self.orbit_cap):
            inside = Q.contains(w) & (Q.boundary_distance(w) > 1.0)
            if np.all(inside):
                return self.phi_minus(w) + n
            idx = np.flatnonzero(~inside)
            w[idx] = lm.inverse_step(w[idx])
            n[idx] += 1.0
        raise OutOfDomain("inverse orbit did not reach the repelling quadrant")

    def phi_plus_ext(self, w):
        """Attracting coordinate continued by the forward orbit."""
        w = np.atleast_1d(np.asarray(w, dtype=complex)).copy()
        n = np.zeros(w.shape)
        Q = self.phi_plus.quadrant
        lm = self.lifted
        for _ in range(self.orbit_cap):
            inside = Q.contains(w) & (Q.boundary_distance(w) > 1.0)
            if np.all(inside):
                return self.phi_plus(w) - n
            idx = np.flatnonzero(~inside)
            w[idx] = lm.step(w[idx])
            n[idx] += 1.0
        raise OutOfDomain("forward orbit did not reach the attracting quadrant")

    def horn_lift(self, w):
        """tE(w) = Phi0(phi0(w)) through the extensions; exact compositions."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        out = np.empty(w.shape, dtype=complex)
        direct = np.abs(w.imag) >= self.xi1 + 2.0
        if np.any(direct):
            W = self.phi_minus.invert(w[direct])
            out[direct] = self.phi_plus(W)
        low = ~direct
        if np.any(low):
            out[low] = self.phi0_ext(self.incoming(w[low]))
        return out


def build_parabolic_structure(f0: Germ, xi1: float = 7.0, *,
                              r_far: float = 1.0e4,
                              certify: str = "strict") -> ParabolicStructure:
    """Solve both parabolic Fatou coordinates canonically and wire extensions."""
    fac = factorize(f0)
    lm = lift_map(f0, fac)
    Qp = Quadrant(xi1, None)
    Qm = Quadrant(None, -xi1)
    phi_p = solve_abel(lm, Qp, "attracting", None, r_far=r_far, certify=certify)
    phi_m = solve_abel(lm, Qm, "repelling", None, r_far=r_far, certify=certify)
    return ParabolicStructure(germ=f0, lifted=lm, xi1=xi1, phi_plus=phi_p,
                              phi_minus=phi_m, xi0=xi1 + 4.0)


# ---------------------------------------------------------------------------
# horn map objects
# ---------------------------------------------------------------------------

@dataclass
class HornMap:
    """Lifted horn map with its cylinder realization and extension data.

    ``ext0`` and ``ext_inf`` are the literal limit values of the cylinder map
    at the punctures (0 at both: the map fixes the cylinder ends); the
    nontrivial extension data are the end derivatives, via ``deriv0`` and
    ``deriv_inf``.
    """

    eta0: float
    c_plus: complex
    c_minus: complex
    mode: str  # "parabolic" or "perturbed"
    ext0: complex = 0.0
    ext_inf: complex = 0.0
    _lift: Callable = field(repr=False, default=None)

    def lift(self, w):
        """tE(w); defined on |Im w| > eta0 and extended to the gate region."""
        return self._lift(w)

    def cyl(self, zeta):
        """Cylinder form: cE = pi o tE o pi^{-1}."""
        return _pi(self.lift(_pi_inv(zeta)))

    def deriv0(self, heights=(1.06, 1.14, 1.22, 1.30), n_args: int = 8):
        """cE'(0) = lim cE(zeta)/zeta by polynomial extrapolation in zeta."""
        return self._end_derivative(heights, n_args, end=0)

    def deriv_inf(self, heights=(1.06, 1.14, 1.22, 1.30), n_args: int = 8):
        """Multiplier at infinity: lim zeta -> inf of cE(zeta)/zeta."""
        return self._end_derivative(heights, n_args, end=1)

    def _end_derivative(self, heights, n_args, end):
        zs, vals = [], []
        for h in heights:
            args = (np.arange(n_args) + 0.37) / n_args
            w = args + 1j * h if end == 0 else args - 1j * h
            zeta = _pi(w)
            v = _pi(self.lift(w)) / zeta
            zs.append(zeta if end == 0 else 1.0 / zeta)
            vals.append(v)
        z = np.concatenate(zs)
        v = np.concatenate(vals)
        deg = 4
        V = np.vander(z, deg + 1, increasing=True)
        scale = np.max(np.abs(V), axis=0)
        cf, *_ = np.linalg.lstsq(V / scale, v, rcond=None)
        cf = cf / scale
        resid = float(np.max(np.abs(V @ cf - v)))
        return complex(cf[0]), resid


def build_parabolic_horn(f0: Germ, xi1: float = 7.0, eta0: Optional[float] = None,
                         *, structure: Optional[ParabolicStructure] = None,
                         certify: str = "strict") -> HornMap:
    """Horn map of a parabolic germ, normalized so both horn constants vanish.

    The canonical normalization of the two Fatou coordinates (asymptotic
    constants zero) realizes c_plus = c_minus, hence tE(w) - w -> 0 as
    Im w -> +infinity.
    """
    ps = structure or build_parabolic_structure(f0, xi1, certify=certify)
    eta = _select_eta(ps, eta0)
    return HornMap(eta0=eta, c_plus=0.0, c_minus=0.0, mode="parabolic",
                   _lift=ps.horn_lift)


def _select_eta(ps: ParabolicStructure, eta0):
    """Smallest ladder height whose strip probes invert and stay univalent."""
    ladder = (eta0,) if eta0 is not None else ETA_LADDER
    for eta in ladder:
        probes = np.linspace(0.0, 1.0, 9)[None, :] + np.array([[1j * eta], [-1j * eta]])
        probes = probes.ravel()
        try:
            W = ps.phi_minus.invert(probes)
            vals = ps.phi_plus(W)
        except Exception:
            continue
        d = np.abs(vals[:, None] - vals[None, :]) + np.eye(vals.size)
        if np.min(d) > 1e-10:
            return float(eta)
    raise EtaTooSmall("no ladder height passed the inversion/univalence probes")


# ---------------------------------------------------------------------------
# perturbed side
# ---------------------------------------------------------------------------

def _auto_v_radius(alpha: complex) -> float:
    return max(0.25, 5.0 * abs(np.sin(np.pi * alpha)))


def build_perturbed_pair(f: Germ, xi1: float, w_plus: complex, w_minus: complex,
                         *, f0: Optional[Germ] = None,
                         structure: Optional[ParabolicStructure] = None,
                         certify: str = "warn"):
    """Fatou coordinates on the perturbed quadrants, parabolic-normalized.

    Solves Phi_{+,f} on Q(xi1, -xi1 + 1/alpha) and Phi_{-,f} on its deck
    translate, each normalized to agree with the parabolic coordinate at the
    given anchor (w_plus resp. w_minus).  The gate branches are anchored the
    same way at channel points, so low-height values agree with the
    parabolic normalization up to the coordinates' continuity modulus.
    """
    fac = factorize(f, V_radius=_auto_v_radius(f.alpha))
    alpha = fac.alpha
    if alpha == 0:
        raise AlphaTooLarge("perturbed pair needs alpha != 0")
    inv_a = 1.0 / alpha
    if inv_a.real <= 2.0 * xi1 + 2.0:
        raise AlphaTooLarge(
            f"Re(1/alpha) = {inv_a.real:.2f} must exceed 2 xi1 + 2 = {2 * xi1 + 2:.2f}"
        )
    ps = structure
    if ps is None:
        base = f0 if f0 is not None else _parabolic_companion(f)
        ps = build_parabolic_structure(base, xi1)

    Qp = Quadrant(xi1, -xi1 + inv_a)
    Qm = Quadrant(xi1 - inv_a, -xi1)
    if not (Qp.contains(w_plus) and ps.phi_plus.quadrant.contains(w_plus)):
        raise OutOfDomain("w_plus must lie in Q0+ and Qf+")
    if not (Qm.contains(w_minus) and ps.phi_minus.quadrant.contains(w_minus)):
        raise OutOfDomain("w_minus must lie in Q0- and Qf-")

    lm = lift_map(f, fac, strict=False)
    phi_p = solve_abel(lm, Qp, "attracting",
                       (w_plus, complex(ps.phi_plus(w_plus))), certify=certify)
    phi_m = solve_abel(lm, Qm, "repelling",
                       (w_minus, complex(ps.phi_minus(w_minus))), certify=certify)

    # gate-branch anchors against the (extended) parabolic coordinates
    lo_m = find_channel_anchor(lm, (xi1 - inv_a).real, -xi1)
    phi_m.set_low_anchor(lo_m, complex(ps.phi_minus_ext(lo_m)[0]))
    lo_p = find_channel_anchor(lm, xi1, (-xi1 + inv_a).real)
    phi_p.set_low_anchor(lo_p, complex(ps.phi_plus_ext(lo_p)[0]))
    phi_p.diagnostics["low_anchor"] = lo_p
    phi_m.diagnostics["low_anchor"] = lo_m
    return phi_p, phi_m


def _parabolic_companion(f: Germ) -> Germ:
    if f.label.startswith("quadratic"):
        return make_quadratic(0.0)
    raise ValueError(
        "no canonical parabolic companion for this germ; pass f0= explicitly"
    )


@dataclass
class ReturnMap:
    """Lifted return map R = E + c_minus - c_plus - 1/alpha with its cylinder form.

    ``domain_restriction(w)`` tests the near-deck-translation condition
    |R(w) + 1/alpha - w| < 1/(2 |alpha|); the cylinder form extends to 0 with
    derivative exp(-2 pi i / alpha).
    """

    horn: HornMap
    alpha: complex
    phi_plus: FatouCoordinate = field(repr=False, default=None)
    phi_minus: FatouCoordinate = field(repr=False, default=None)
    eta_direct: float = 0.0

    # -- evaluation -----------------------------------------------------------

    def lift(self, w):
        """tR(w); direct composition high up, gate transit low down."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        out = np.empty(w.shape, dtype=complex)
        hi = w.imag >= self.eta_direct
        lo = w.imag <= abel.LOW_CEILING - 0.12
        if np.any(~(hi | lo)):
            raise OutOfDomain(
                "return-map evaluation between the gate band and the direct band"
            )
        if np.any(hi):
            out[hi] = self.horn.lift(w[hi]) + self._constant()
        if np.any(lo):
            out[lo] = self._lift_gate(w[lo])
        return out

    def _constant(self):
        return self.horn.c_minus - self.horn.c_plus - 1.0 / self.alpha

    def _lift_gate(self, w):
        """R = Phi_minus o T o psi with psi the extended inverse of Phi_minus.

        The integer pullback places the inversion point within half a unit of
        the gate anchor (a phase offset of at most alpha/2, inside the
        descending channel); the landing evaluation retries along exact
        forward steps when its own deck phase hits a rotation island.
        """
        phi_m = self.phi_minus
        anchor = phi_m.diagnostics["low_anchor"]
        c_m = phi_m.asymptote()[0]
        out = np.empty(w.shape, dtype=complex)
        for i, wi in enumerate(w):
            base = (wi - c_m - anchor).real
            n = int(np.rint(base))
            W = self._invert_low(wi - n, anchor + (wi - n - c_m - anchor))
            land = self._transit(W, n) + phi_m.map.chart.period
            out[i] = self._phi_low_robust(land)
        return out

    def _invert_low(self, target, seed, tol: float = 1e-11):
        phi_m = self.phi_minus
        W = np.atleast_1d(np.asarray(seed, dtype=complex))
        for _ in range(50):
            err = self._phi_low_robust(W[0]) - target
            W = W - err * (1.0 + phi_m.map.v1(W))
            if abs(err) < tol:
                return complex(W[0])
        raise NoConvergence("low inversion did not converge")

    def _transit(self, W, n: int):
        """F^n stepping the exact lift (inverse steps for negative n)."""
        lm = self.phi_minus.map
        cur = np.atleast_1d(np.asarray(W, dtype=complex))
        for _ in range(abs(int(n))):
            cur = lm.step(cur) if n > 0 else lm.inverse_step(cur)
        return complex(cur[0])

    def _phi_low_robust(self, w):
        """Phi_minus at a gate point, hopping along the orbit out of islands.

        Phi(w) = Phi(F^j(w)) - j is exact; unit steps shift the deck phase by
        alpha, so a few hops reach the descending channel when the immediate
        backward orbit of w is trapped.
        """
        phi_m = self.phi_minus
        lm = phi_m.map
        q_eff = max(2, int(np.ceil(1.0 / abs(lm.chart.alpha))))
        cur = complex(w)
        for j in range(q_eff + 1):
            try:
                return complex(phi_m(cur)) - j
            except NoConvergence:
                cur = complex(lm.step(cur))
        raise NoConvergence(f"gate evaluation trapped at every phase near {w}")

    def cyl(self, zeta):
        return _pi(self.lift(_pi_inv(zeta)))

    def domain_restriction(self, w):
        """A.4.5-style restriction: |R(w) + 1/alpha - w| < 1/(2 |alpha|)."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        val = self.lift(w)
        ok = np.abs(val + 1.0 / self.alpha - w) < 1.0 / (2.0 * abs(self.alpha))
        return ok if ok.shape else bool(ok)

    def multiplier0(self, heights=(1.02, 1.10, 1.18, 1.26), n_args: int = 8):
        """cR'(0) by polynomial extrapolation of cR(zeta)/zeta on gate circles.

        Returns (derivative, fit_residual).  The probe moduli sit inside the
        gate band where the lifted map is computable; plain two-point
        extrapolation at |zeta| = 1e-3, 1e-4 is not reliable here because the
        cylinder germ's higher coefficients grow like the inverse of its
        convergence radius.
        """
        zs, vals = [], []
        twist = np.exp(TWO_PI_I / self.alpha)
        for h in heights:
            args = (np.arange(n_args) + 0.19) / n_args
            w = args + 1j * h
            zeta = _pi(w)
            v = _pi(self.lift(w)) / zeta * twist
            zs.append(zeta)
            vals.append(v)
        z = np.concatenate(zs)
        v = np.concatenate(vals)
        V = np.vander(z, 5, increasing=True)
        scale = np.max(np.abs(V), axis=0)
        cf, *_ = np.linalg.lstsq(V / scale, v, rcond=None)
        cf = cf / scale
        resid = float(np.max(np.abs(V @ cf - v)))
        return complex(cf[0] / twist), resid


def build_return_map(f: Germ, pair) -> ReturnMap:
    """Assemble the return map from a perturbed Fatou pair.

    The A.4.5 domain restriction must keep at least the probe strip; an empty
    restricted domain raises EmptyDomain.
    """
    phi_p, phi_m = pair
    alpha = phi_p.map.chart.alpha
    c_p = phi_p.asymptote()[0]
    c_m = phi_m.asymptote()[0]
    eta_direct = phi_p._y_top + 1.2

    def horn_lift(w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        out = np.empty(w.shape, dtype=complex)
        up = w.imag > 0
        if np.any(up):
            W = phi_m.invert(w[up])
            out[up] = phi_p(W)
        if np.any(~up):
            W = phi_m.invert(w[~up])
            out[~up] = phi_p(W)
        return out

    horn = HornMap(eta0=eta_direct, c_plus=c_p, c_minus=c_m, mode="perturbed",
                   _lift=horn_lift)
    rm = ReturnMap(horn=horn, alpha=alpha, phi_plus=phi_p, phi_minus=phi_m,
                   eta_direct=eta_direct)
    probes = np.linspace(0.0, 1.0, 8) + 1j * (eta_direct + 1.0)
    if not np.any(rm.domain_restriction(probes)):
        raise EmptyDomain("A.4.5 restriction removed every probe point")
    return rm


def perturbed_horn_lift(rm: ReturnMap, w):
    """tE_f from the return map: tE = tR - (c_minus - c_plus - 1/alpha)."""
    return rm.lift(w) - (rm.horn.c_minus - rm.horn.c_plus - 1.0 / rm.alpha)


# ---------------------------------------------------------------------------
# integrals, checks, convergence tables
# ---------------------------------------------------------------------------

def constant_gap(horn: HornMap, eta0: Optional[float] = None,
                 nodes: int = 64) -> complex:
    """c_plus - c_minus as the Gauss-Legendre integral of tE(w) - w over one period."""
    eta = float(eta0 if eta0 is not None else horn.eta0)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    w = t + 1j * eta
    vals = horn.lift(w) - w
    return complex(np.sum(wts * vals) * 0.5)


def orbit_return_check(rm: ReturnMap, w: complex, m: int):
    """Iterate the lifted return map m times and count the integer comeback.

    Returns (n, residual) where n is the unique integer putting
    Re(R^m(w) + n) in [Re w - 1/2, Re w + 1/2) and residual is the distance
    |R^m(w) + n - w|.  The A.4.5 restriction is enforced along the orbit.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    cur = complex(w)
    for _ in range(m):
        if not rm.domain_restriction(cur):
            raise LeftDomain("orbit left the restricted return-map domain")
        cur = complex(rm.lift(cur)[0])
    n = int(np.floor(w.real - cur.real + 0.5))
    residual = float(abs(cur + n - w))
    return n, residual


@dataclass
class ImplosionRow:
    alpha: complex
    sup_error: float
    n_probes: int
    note: str = ""


def implosion_convergence(f0: Germ, alphas, probes, *, xi1: float = 7.0,
                          sector: Optional[Sector] = None,
                          family: Callable = make_quadratic,
                          structure: Optional[ParabolicStructure] = None):
    """Rows (alpha, sup |e^{2 pi i/alpha} cR_f - cE_{f0}| over the probes).

    Probe points live in a compact annulus of the punctured plane; each alpha
    gets quadrants sized to its deck width, warn-level certification (large
    alphas legitimately overshoot the 1/4 margins) and the orbit-anchored
    solvers of this package.  Failures are recorded per row, never raised.
    """
    sector = sector or Sector()
    ps = structure or build_parabolic_structure(f0, xi1)
    horn0 = build_parabolic_horn(f0, xi1, structure=ps)
    probes = np.asarray(probes, dtype=complex)
    target = horn0.cyl(probes)
    seen = set()
    rows = []
    for alpha in alphas:
        alpha = complex(alpha)
        key = (round(alpha.real, 14), round(alpha.imag, 14))
        if key in seen:
            rows.append(ImplosionRow(alpha, np.nan, probes.size, "duplicate alpha"))
            continue
        seen.add(key)
        if not sector.contains(alpha):
            rows.append(ImplosionRow(alpha, np.nan, probes.size, "outside sector"))
            continue
        try:
            xi_a = min(xi1, ((1.0 / alpha).real - 2.2) / 2.0)
            f = family(alpha)
            wp = (xi_a + 1.5) + 8j
            wm = -(xi_a + 1.5) + 8j
            pair = build_perturbed_pair(f, xi_a, wp, wm, structure=None,
                                        f0=f0, certify="warn")
            rm = build_return_map(f, pair)
            vals = np.exp(TWO_PI_I / alpha) * rm.cyl(probes)
            sup = float(np.max(np.abs(vals - target)))
            rows.append(ImplosionRow(alpha, sup, probes.size, ""))
        except Exception as exc:  # per-row failure policy
            rows.append(ImplosionRow(alpha, np.nan, probes.size,
                                     f"{type(exc).__name__}: {exc}"))
    return rows


def default_annulus_probes(n: int = 16, height: float = 1.22) -> np.ndarray:
    """Probe ring |zeta| = e^{-2 pi height} inside the gate band."""
    args = (np.arange(n) + 0.31) / n
    return _pi(args + 1j * height)
