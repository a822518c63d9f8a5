"""Moment recursion for one-dimensional polynomial potentials.

For ``-psi'' + V(x) psi = E psi`` with ``V(x) = sum_j c_j x^j`` the power moments
``mu_p = int x^p psi dx`` obey, after integration by parts,

    sum_j c_j mu_{p+j} - p (p-1) mu_{p-2} = E mu_p ,

which is solved for the highest moment ``mu_{p+D}``.  The first ``D`` moments
(the *missing moments*) are free; every other moment is a linear combination
``mu_p = sum_l M_{p,l}(E) mu_l``.  The coefficient columns are stored
normalised by ``p!`` because the raw values grow factorially.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import mpmath

from .errors import ConfigError, DegreeTooLow, PrecisionExhausted

MIN_PRECISION = 15


@functools.lru_cache(maxsize=None)
def working_context(digits: int) -> mpmath.ctx_mp.MPContext:
    """Private mpmath context at ``digits`` decimal digits.

    Contexts are never mutated after creation, so they can be shared between
    threads (the global ``mpmath.mp`` cannot).
    """
    ctx = mpmath.MPContext()
    ctx.dps = int(digits)
    return ctx


def default_precision(p_max: int) -> int:
    """Decimal digits used when the caller does not choose: max(50, ceil(0.8 P_max))."""
    return max(50, math.ceil(0.8 * p_max))


@dataclass(frozen=True)
class PolynomialPotential:
    """``V(x) = sum_{j=0}^{D} coeffs[j] * x**j`` with complex coefficients."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        if not self.coeffs or self.coeffs[-1] == 0:
            return 0
        return len(self.coeffs) - 1


def cubic_potential(alpha) -> PolynomialPotential:
    """The PT-symmetric family ``V(x) = i x^3 + i alpha x``."""
    return PolynomialPotential((0, 1j * alpha, 0, 1j))


@dataclass(frozen=True)
class RecursionSpec:
    """Moment recursion solved for the highest moment.

    ``mu_{p+D} = sum_{1<=j<D} K_j mu_{p+j} + K_0(E) mu_p + K_{-2}(p) mu_{p-2}``
    with ``K_j = -c_j/c_D``, ``K_0 = (E - c_0)/c_D`` and
    ``K_{-2} = p(p-1)/c_D``.
    """

    coeffs: tuple
    degree: int

    @property
    def missing_count(self) -> int:
        """``m_s``: index of the last missing moment (``D - 1``)."""
        return self.degree - 1

    @property
    def order(self) -> int:
        """Number of missing moments, ``1 + m_s``."""
        return self.degree

    @staticmethod
    def kinetic(p: int) -> int:
        return p * (p - 1)

    def kernel(self, p: int, E) -> dict:
        """Coefficients of the solved recursion at step ``p``.

        Keys are offsets relative to ``p`` (``-2, 0, 1, ..., D-1``); the value
        for key ``k`` multiplies ``mu_{p+k}`` in the expression for ``mu_{p+D}``.
        Terms that vanish identically are omitted.
        """
        D = self.degree
        top = self.coeffs[D]
        out = {0: (E - self.coeffs[0]) / top}
        for j in range(1, D):
            if self.coeffs[j] != 0:
                out[j] = -self.coeffs[j] / top
        if p >= 2:
            out[-2] = self.kinetic(p) / top
        return out


def derive_recursion(potential: PolynomialPotential) -> RecursionSpec:
    """Build the moment recursion for ``potential``.

    Raises
    ------
    DegreeTooLow
        If the potential is constant.
    """
    D = potential.degree
    if D < 1:
        raise DegreeTooLow(f"potential degree must be >= 1, got {D}")
    return RecursionSpec(coeffs=tuple(potential.coeffs), degree=D)


@dataclass(frozen=True)
class MomentColumnTable:
    """``m[p][l] = M_{p,l}(E)/p!`` and ``dm[p][l] = dM_{p,l}/dE / p!``.

    Entries are mpmath numbers belonging to ``working_context(precision_digits)``.
    """

    E: object
    P_max: int
    m: tuple
    dm: tuple
    precision_digits: int

    @property
    def columns(self) -> int:
        return len(self.m[0])

    @property
    def ctx(self):
        return working_context(self.precision_digits)

    def raw(self, p: int, l: int):
        """Unnormalised ``M_{p,l}(E)``."""
        return self.m[p][l] * self.ctx.factorial(p)

    def raw_derivative(self, p: int, l: int):
        return self.dm[p][l] * self.ctx.factorial(p)


def _check_finite(ctx, value, p):
    if not ctx.isfinite(value):
        raise PrecisionExhausted(f"moment march overflowed at p={p}")


def _march(spec: RecursionSpec, ctx, E, P_max: int, starts, with_derivative: bool):
    """March normalised moments ``mu_p/p!`` upward from the given start vectors.

    ``starts`` is a list of columns, each holding the ``D`` initial normalised
    values.  Returns ``(values, derivs)`` as lists indexed ``[p][column]``.
    """
    D = spec.degree
    top = ctx.mpc(spec.coeffs[D])
    c0 = ctx.mpc(spec.coeffs[0])
    mids = [(j, -ctx.mpc(spec.coeffs[j]) / top) for j in range(1, D) if spec.coeffs[j] != 0]
    ncol = len(starts)
    zero = ctx.mpc(0)
    vals = [[zero] * ncol for _ in range(P_max + 1)]
    ders = [[zero] * ncol for _ in range(P_max + 1)]
    for col, start in enumerate(starts):
        for p in range(min(D, P_max + 1)):
            vals[p][col] = ctx.mpc(start[p])
    k0 = (E - c0) / top
    inv_top = 1 / top
    for p in range(0, P_max + 1 - D):
        # rising[j] = (p+j+1)(p+j+2)...(p+D) so that (p+j)!/(p+D)! = 1/rising[j]
        rising = [ctx.mpf(1)] * (D + 1)
        for j in range(D - 1, -1, -1):
            rising[j] = rising[j + 1] * (p + j + 1)
        r0 = 1 / rising[0]
        kin = inv_top * r0  # p!/(c_D (p+D)!) multiplies m_{p-2}
        target = vals[p + D]
        dtarget = ders[p + D]
        for col in range(ncol):
            v = k0 * vals[p][col] * r0
            for j, kj in mids:
                v += kj * vals[p + j][col] / rising[j]
            if p >= 2:
                v += kin * vals[p - 2][col]
            target[col] = v
            if with_derivative:
                dv = (k0 * ders[p][col] + inv_top * vals[p][col]) * r0
                for j, kj in mids:
                    dv += kj * ders[p + j][col] / rising[j]
                if p >= 2:
                    dv += kin * ders[p - 2][col]
                dtarget[col] = dv
        _check_finite(ctx, abs(target[0]) + abs(target[-1]), p + D)
    return vals, ders


def column_values(
    spec: RecursionSpec, E, P_max: int, precision_digits: int | None = None
) -> MomentColumnTable:
    """Fill the normalised coefficient columns ``M_{p,l}(E)/p!`` up to ``P_max``.

    The derivative columns come from marching the E-differentiated recursion
    alongside, so they are exact rather than finite-difference estimates.
    """
    ms = spec.missing_count
    if P_max < ms:
        raise ConfigError(f"P_max={P_max} must be >= m_s={ms}")
    digits = default_precision(P_max) if precision_digits is None else int(precision_digits)
    if digits < MIN_PRECISION:
        raise ConfigError(f"precision_digits must be >= {MIN_PRECISION}")
    ctx = working_context(digits)
    Ec = ctx.mpc(E)
    starts = []
    for l in range(ms + 1):
        col = [ctx.mpc(0)] * (ms + 1)
        col[l] = 1 / ctx.factorial(l)
        starts.append(col)
    vals, ders = _march(spec, ctx, Ec, P_max, starts, with_derivative=True)
    return MomentColumnTable(
        E=Ec,
        P_max=P_max,
        m=tuple(tuple(row) for row in vals),
        dm=tuple(tuple(row) for row in ders),
        precision_digits=digits,
    )


def moments_from_missing(
    spec: RecursionSpec,
    E,
    missing: Sequence,
    P_max: int,
    precision_digits: int | None = None,
) -> list:
    """Raw moments ``mu_0 .. mu_{P_max}`` from the missing moments by direct march."""
    D = spec.degree
    if len(missing) != D:
        raise ConfigError(f"expected {D} missing moments, got {len(missing)}")
    digits = default_precision(P_max) if precision_digits is None else int(precision_digits)
    ctx = working_context(digits)
    start = [ctx.mpc(missing[p]) / ctx.factorial(p) for p in range(D)]
    vals, _ = _march(spec, ctx, ctx.mpc(E), max(P_max, D - 1), [start], with_derivative=False)
    return [vals[p][0] * ctx.factorial(p) for p in range(P_max + 1)]
