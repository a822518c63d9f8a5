"""Continuation of eigenvalue branches in alpha and PT-breaking critical points.

Labels follow the usual E1..E4 numbering of the low-lying states.  Which
member of a complex-conjugate pair continues which real branch is not
decidable, so a fixed convention is used: the lower-labelled branch of a
pair (E1, E3, ...) carries the root with positive imaginary part and the
smaller real root; its partner carries the conjugate and the larger one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import (
    BracketInvalid,
    BranchLost,
    ConfigError,
    DerivativeVanished,
    DoubleRootDivergence,
    NoTransition,
    NotConverged,
)
from .moments import RecursionSpec, cubic_potential, derive_recursion, working_context
from .quantizer import MrfConfig, _scaled_delta, newton_refine

LABEL_CONVENTION = (
    "lower-labelled branch of a pair takes +Im on the broken side "
    "and the smaller real root on the unbroken side"
)


def cubic_family(alpha) -> RecursionSpec:
    """Moment recursion of ``P^2 + i X^3 + i alpha X``."""
    return derive_recursion(cubic_potential(alpha))


def conjugate_sign_for(label: str) -> int:
    """+1 for odd labels (E1, E3, ...), -1 for even ones."""
    digits = "".join(ch for ch in label if ch.isdigit())
    if not digits:
        return 1
    return 1 if int(digits) % 2 == 1 else -1


@dataclass(frozen=True)
class BranchPoint:
    alpha: float
    E: object
    J: int
    broken: bool
    stable_digits: tuple | None = None


@dataclass(frozen=True)
class SpectralBranch:
    label: str
    points: tuple
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def alphas(self) -> list:
        return [pt.alpha for pt in self.points]

    @property
    def energies(self) -> list:
        return [pt.E for pt in self.points]

    @property
    def broken(self) -> list:
        return [pt.broken for pt in self.points]

    def at(self, alpha: float) -> BranchPoint:
        for pt in self.points:
            if abs(pt.alpha - alpha) < 1e-12:
                return pt
        raise KeyError(alpha)


@dataclass(frozen=True)
class CriticalPoint:
    alpha_cr: float
    E_cr: float
    bracket_width: float
    pair_labels: tuple
    alpha_double_root: float | None = None


def _grid(alpha0: float, alpha_to: float, step: float) -> list:
    n = (alpha_to - alpha0) / step
    if n < -1e-9:
        raise ConfigError("step points away from alpha_to")
    count = int(round(n))
    if abs(n - count) > 1e-9:
        raise ConfigError("alpha_to - alpha0 must be a whole number of steps")
    return [alpha0 + k * step for k in range(1, count + 1)]


class _Tracker:
    """One continuation march; keeps every accepted point including sub-steps."""

    def __init__(self, family, config: MrfConfig, sign: int):
        self.family = family
        self.config = config
        self.sign = sign
        self.history: list = []  # (alpha, complex E, mp E)

    def _refine(self, alpha, seed):
        return newton_refine(self.family(alpha), seed, self.config).E

    def _is_real(self, E) -> bool:
        return abs(complex(E).imag) < self.config.reality_threshold

    def step_to(self, alpha: float):
        """Try to extend the march to ``alpha``; None if the step is rejected."""
        a1, E1, _ = self.history[-1]
        if len(self.history) >= 2:
            a0, E0, _ = self.history[-2]
            pred = E1 + (E1 - E0) * (alpha - a1) / (a1 - a0)
        else:
            pred = E1
        nudge = max(1e-3, 0.1 * abs(pred - E1))
        seed = pred
        if abs(pred.imag) < nudge:
            seed = complex(pred.real, self.sign * nudge)
        try:
            E = self._refine(alpha, seed)
        except (NotConverged, DerivativeVanished):
            return None
        z = complex(E)
        if not self._is_real(E):
            if z.imag * self.sign < 0:
                try:
                    E = self._refine(alpha, z.conjugate())
                except (NotConverged, DerivativeVanished):
                    return None
        elif not self._is_real(E1):
            # just left the broken side: pick our member of the new real pair
            try:
                partner = self._refine(alpha, complex(2 * E1.real - z.real, 0.0))
            except (NotConverged, DerivativeVanished):
                partner = None
            if partner is not None and self._is_real(partner):
                pr = complex(partner).real
                if (self.sign > 0 and pr < z.real) or (self.sign < 0 and pr > z.real):
                    E = partner
        z = complex(E)
        if abs(z - E1) > self.config.trust_radius:
            return None
        return z, E

    def accept(self, alpha, z, E):
        self.history.append((alpha, z, E))


def sweep(
    seed: tuple,
    alpha_to: float,
    step: float,
    config: MrfConfig | None = None,
    family: Callable = cubic_family,
    label: str = "E1",
    conjugate_sign: int | None = None,
    max_halvings: int = 12,
) -> SpectralBranch:
    """March one branch from ``seed = (alpha0, E0)`` to ``alpha_to``.

    Predictor: linear extrapolation through the two previous accepted points.
    Corrector: Newton on the determinant.  A step whose root moves farther
    than the trust radius is retried with half the increment; only the grid
    values ``alpha0 + k*step`` are recorded.

    Raises
    ------
    BranchLost
        When ``max_halvings`` halvings do not rescue a step.  The exception
        carries the last good alpha and the partial branch.
    """
    config = config or MrfConfig()
    if step == 0:
        raise ConfigError("sweep step must be nonzero")
    alpha0, E0 = seed
    alpha0 = float(alpha0)
    sign = conjugate_sign if conjugate_sign is not None else conjugate_sign_for(label)
    tracker = _Tracker(family, config, sign)
    grid = _grid(alpha0, float(alpha_to), float(step)) if alpha_to != alpha0 else []

    try:
        E_seed = tracker._refine(alpha0, complex(E0))
    except (NotConverged, DerivativeVanished) as exc:
        raise BranchLost(f"seed does not converge at alpha={alpha0}", last_alpha=None) from exc
    tracker.accept(alpha0, complex(E_seed), E_seed)

    def record(alpha, E):
        return BranchPoint(
            alpha=alpha,
            E=E,
            J=config.J,
            broken=not tracker._is_real(E),
        )

    points = [record(alpha0, E_seed)]
    meta = {"convention": LABEL_CONVENTION, "conjugate_sign": sign}
    for target in grid:
        a_cur = tracker.history[-1][0]
        h = target - a_cur
        halvings = 0
        while abs(target - a_cur) > 1e-13:
            a_next = target if abs(h) >= abs(target - a_cur) else a_cur + h
            res = tracker.step_to(a_next)
            if res is None:
                halvings += 1
                if halvings > max_halvings:
                    partial = SpectralBranch(label, tuple(points), meta)
                    raise BranchLost(
                        f"branch {label} lost between alpha={a_cur} and {target}",
                        last_alpha=points[-1].alpha,
                        partial=partial,
                    )
                h /= 2
                continue
            tracker.accept(a_next, *res)
            a_cur = a_next
        points.append(record(target, tracker.history[-1][2]))
    return SpectralBranch(label, tuple(points), meta)


# -- transitions ------------------------------------------------------------


def _pair_character(Ea, Eb, threshold: float, tol: float = 1e-6) -> str:
    za, zb = complex(Ea), complex(Eb)
    if abs(za.imag) < threshold and abs(zb.imag) < threshold:
        return "real" if abs(za - zb) > tol * max(1.0, abs(za)) else "degenerate"
    if abs(za - zb.conjugate()) <= tol * max(1.0, abs(za)) and abs(za.imag) >= threshold:
        return "complex"
    return "other"


def detect_transition(
    branch_a: SpectralBranch,
    branch_b: SpectralBranch,
    reality_threshold: float = 1e-8,
) -> tuple:
    """First grid interval, scanning down in alpha, where a real pair turns complex.

    Returns ``(alpha_lo, alpha_hi)``.

    Raises
    ------
    NoTransition
        If no such interval exists on the shared grid.
    """
    pa = {round(pt.alpha, 10): pt for pt in branch_a.points}
    pb = {round(pt.alpha, 10): pt for pt in branch_b.points}
    shared = sorted(set(pa) & set(pb), reverse=True)
    for hi, lo in zip(shared, shared[1:]):
        if (
            _pair_character(pa[hi].E, pb[hi].E, reality_threshold) == "real"
            and _pair_character(pa[lo].E, pb[lo].E, reality_threshold) == "complex"
        ):
            return lo, hi
    raise NoTransition(f"{branch_a.label}/{branch_b.label} stay the same character on the grid")


class _RealAxis:
    """``f(E; alpha) = phase * Delta_J`` restricted to real E.

    For a PT-symmetric family with real alpha, the determinant on the real
    axis is a fixed complex phase times a real function; row scales are frozen
    so that ``f`` is smooth in both E and alpha.
    """

    def __init__(self, family, config: MrfConfig, alpha, E):
        self.family = family
        self.config = config
        self.ctx = working_context(config.digits)
        ctx = self.ctx
        spec = family(ctx.mpf(alpha))
        d, _, scales = _scaled_delta(spec, ctx.mpc(E), config)
        self.scales = scales
        self.phase = ctx.conj(d) / abs(d) if d != 0 else ctx.mpc(1)
        self.h = ctx.mpf(10) ** (-(config.digits // 3))

    def values(self, alpha, E):
        ctx = self.ctx
        spec = self.family(ctx.mpf(alpha))
        d, dd, _ = _scaled_delta(spec, ctx.mpc(ctx.mpf(E)), self.config, self.scales)
        return (self.phase * d).real, (self.phase * dd).real

    def curvature(self, alpha, E):
        h = self.h
        _, fp = self.values(alpha, E + h)
        _, fm = self.values(alpha, E - h)
        return (fp - fm) / (2 * h)


def locate_critical(
    interval: Sequence[float],
    seeds: Sequence,
    tol_alpha: float = 1e-9,
    config: MrfConfig | None = None,
    family: Callable = cubic_family,
    pair_labels: tuple = ("E1", "E2"),
) -> CriticalPoint:
    """Bisect on alpha for the coalescence of a real pair, then polish the double root.

    ``seeds`` are energies of the pair near the bracket (real pair at
    ``alpha_hi`` or a conjugate pair at ``alpha_lo``); only their mean is
    used as the starting guess for the coalescence energy.

    Raises
    ------
    BracketInvalid
        If both ends of the interval have the same character.
    DoubleRootDivergence
        If the double-root Newton leaves the interval.
    """
    config = config or MrfConfig()
    lo, hi = sorted(float(a) for a in interval)
    ctx = working_context(config.digits)
    threshold = config.reality_threshold

    radius = 2 * config.trust_radius

    def pair_state(alpha, centre):
        """(is_complex, new centre) for the pair closest to ``centre``."""
        spec = family(alpha)
        real_root = None
        for offset in (0.05, 0.2, 0.5, 1.0):
            try:
                z = complex(newton_refine(spec, complex(centre, offset), config).E)
            except (NotConverged, DerivativeVanished):
                continue
            if abs(z.real - centre) > radius or abs(z.imag) > radius + offset:
                continue
            if abs(z.imag) >= threshold:
                return True, z.real
            if real_root is None:
                real_root = z.real
        if real_root is None:
            raise BracketInvalid(f"no root of the pair found near {centre} at alpha={float(alpha)}")
        try:
            partner = complex(newton_refine(spec, complex(2 * centre - real_root, 0.0), config).E)
        except (NotConverged, DerivativeVanished) as exc:
            raise BracketInvalid(f"partner root not found at alpha={float(alpha)}") from exc
        return False, (real_root + partner.real) / 2

    centre = sum(complex(s).real for s in seeds) / len(seeds)
    lo_flag, lo_centre = pair_state(ctx.mpf(lo), centre)
    hi_flag, hi_centre = pair_state(ctx.mpf(hi), centre)
    if lo_flag == hi_flag:
        raise BracketInvalid(f"pair has the same character at alpha={lo} and alpha={hi}")
    a_lo, a_hi = ctx.mpf(lo), ctx.mpf(hi)
    guess = (lo_centre + hi_centre) / 2
    while a_hi - a_lo > tol_alpha:
        mid = (a_lo + a_hi) / 2
        flag, guess = pair_state(mid, guess)
        if flag == lo_flag:
            a_lo = mid
        else:
            a_hi = mid
    alpha_mid = (a_lo + a_hi) / 2
    axis = _RealAxis(family, config, alpha_mid, guess)
    alpha_dr, E_dr = _double_root(axis, alpha_mid, guess, lo, hi)
    return CriticalPoint(
        alpha_cr=float(alpha_mid),
        E_cr=float(E_dr),
        bracket_width=float(a_hi - a_lo),
        pair_labels=tuple(pair_labels),
        alpha_double_root=float(alpha_dr),
    )


def _double_root(axis: _RealAxis, alpha0, E0, lo: float, hi: float, max_iter: int = 50):
    """Damped Newton on ``f = 0, f' = 0`` in the unknowns (alpha, E)."""
    ctx = axis.ctx
    a, E = ctx.mpf(alpha0), ctx.mpf(E0)
    h = axis.h
    tol = ctx.mpf(10) ** (-(axis.config.digits // 2))

    def residual(a, E):
        return axis.values(a, E)

    F = residual(a, E)
    norm = math.hypot(float(F[0]), float(F[1]))
    for _ in range(max_iter):
        f, fd = F
        fpp = axis.curvature(a, E)
        fa_p, fda_p = residual(a + h, E)
        fa_m, fda_m = residual(a - h, E)
        fa = (fa_p - fa_m) / (2 * h)
        fda = (fda_p - fda_m) / (2 * h)
        # [[fd, fa], [fpp, fda]] @ [dE, da] = -[f, fd]
        det = fd * fda - fa * fpp
        if det == 0:
            raise DoubleRootDivergence("singular Jacobian in double-root refinement")
        dE = (-f * fda + fa * fd) / det
        da = (-fd * fd + fpp * f) / det
        lam = ctx.mpf(1)
        for _ in range(30):
            a_new, E_new = a + lam * da, E + lam * dE
            F_new = residual(a_new, E_new)
            new_norm = math.hypot(float(F_new[0]), float(F_new[1]))
            if new_norm <= norm or new_norm == 0:
                break
            lam /= 2
        a, E, F, norm = a_new, E_new, F_new, new_norm
        if not lo <= a <= hi:
            raise DoubleRootDivergence(f"double-root alpha {float(a)} left [{lo}, {hi}]")
        if abs(lam * da) <= tol * max(1, abs(a)) and abs(lam * dE) <= tol * max(1, abs(E)):
            return a, E
    raise DoubleRootDivergence("double-root refinement did not converge")
