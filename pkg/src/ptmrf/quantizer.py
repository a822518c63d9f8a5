"""Reference-function quantization: the determinant condition and its roots.

Dividing the moment series of the Fourier-space wavefunction by a Gaussian
reference ``exp(-b k^2)`` gives expansion coefficients

    a_j = sum_{p + 2q = j} (-b)^q mu_p / (q! p!) ,

linear in the missing moments.  Demanding that the last ``1 + m_s``
coefficients up to order ``J`` vanish gives a small homogeneous linear system
whose determinant ``Delta_J(E)`` is zero at the quantized energies.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from typing import Iterable, Sequence

from .errors import BranchLost, ConfigError, DerivativeVanished, IndexOutOfRange, NotConverged
from .moments import (
    MIN_PRECISION,
    MomentColumnTable,
    RecursionSpec,
    column_values,
    default_precision,
    moments_from_missing,
    working_context,
)

DEFAULT_SCHEDULE = tuple(range(20, 101, 10))


@dataclass(frozen=True)
class MrfConfig:
    """Solver settings for one expansion order.

    ``beta`` is the reference-function width parameter.  The Gaussian actually
    used is ``exp(-beta_scale * beta * k^2)``: the default ``beta_scale = 0.5``
    (i.e. ``exp(-beta k^2 / 2)``) is the normalisation under which
    ``beta = 0.5`` reproduces the published MRF tables; ``beta_scale = 1``
    gives ``exp(-beta k^2)``.
    """

    beta: float = 0.5
    J: int = 100
    precision_digits: int | None = None
    newton_tol: float | None = None
    max_iter: int = 60
    beta_scale: float = 0.5
    trust_radius: float = 0.5
    reality_threshold: float = 1e-8
    agreement_window: int = 3

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not self.beta_scale > 0:
            raise ConfigError(f"beta_scale must be positive, got {self.beta_scale}")
        if self.precision_digits is not None and self.precision_digits < MIN_PRECISION:
            raise ConfigError(f"precision_digits must be >= {MIN_PRECISION}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.agreement_window < 1:
            raise ConfigError("agreement_window must be >= 1")

    @property
    def digits(self) -> int:
        if self.precision_digits is None:
            return default_precision(self.J)
        return self.precision_digits

    @property
    def tol(self) -> float:
        if self.newton_tol is None:
            return 10.0 ** (-self.digits + 10)
        return self.newton_tol

    @property
    def reference_exponent(self) -> float:
        return self.beta * self.beta_scale

    def with_order(self, J: int) -> "MrfConfig":
        return dataclasses.replace(self, J=J)

    def validate_for(self, spec: RecursionSpec) -> None:
        need = 2 * (spec.missing_count + 1)
        if self.J < need:
            raise ConfigError(f"J={self.J} is below the minimum {need} for m_s={spec.missing_count}")


@dataclass(frozen=True)
class RootEstimate:
    E: object
    residual: float
    iterations: int
    J: int
    beta: float
    converged: bool

    def __complex__(self):
        return complex(self.E)


@dataclass(frozen=True)
class ConvergedEnergy:
    """A root followed through increasing expansion orders.

    ``stable_digits`` counts significant decimal digits (real, imaginary) that
    are identical across the last ``agreement_window`` estimates; ``re_text``
    and ``im_text`` are those digit prefixes.
    """

    estimates: tuple
    stable_value: object
    stable_digits: tuple
    is_real: bool
    re_text: str
    im_text: str
    final: RootEstimate = field(repr=False)
    dropped: tuple = ()

    @property
    def J(self) -> int:
        return self.estimates[-1][0]


# -- assembly ---------------------------------------------------------------


def _entry_pair(table: MomentColumnTable, b, n: int, l2: int):
    """Value and E-derivative of ``sum_{p+2q=n} (-b)^q m_{p,l2} / q!``."""
    ctx = table.ctx
    weight = ctx.mpf(1)
    nb = -ctx.mpf(b)
    s = ctx.mpc(0)
    ds = ctx.mpc(0)
    for q in range(n // 2 + 1):
        p = n - 2 * q
        s += weight * table.m[p][l2]
        ds += weight * table.dm[p][l2]
        weight = weight * nb / (q + 1)
    return s, ds


def mrf_entry(table: MomentColumnTable, beta, J: int, l1: int, l2: int):
    """``sum over p + 2q = J - l1`` of ``(-beta)^q m_{p,l2} / q!``.

    ``beta`` enters the exponent literally here; :class:`MrfConfig` applies
    its ``beta_scale`` before calling into the assembly.
    """
    n = J - l1
    if n < 0 or not 0 <= l2 < table.columns:
        raise IndexError(f"invalid entry indices l1={l1}, l2={l2} for J={J}")
    if n > table.P_max:
        raise IndexOutOfRange(f"table has P_max={table.P_max} < {n}")
    return _entry_pair(table, beta, n, l2)[0]


def coefficient_sequence(
    spec: RecursionSpec,
    E,
    beta,
    missing: Sequence,
    J: int,
    precision_digits: int | None = None,
) -> list:
    """Expansion coefficients ``a_0 .. a_J`` for explicit missing moments."""
    digits = default_precision(J) if precision_digits is None else precision_digits
    ctx = working_context(digits)
    mu = moments_from_missing(spec, E, missing, J, digits)
    nb = -ctx.mpf(beta)
    out = []
    for j in range(J + 1):
        s = ctx.mpc(0)
        for q in range(j // 2 + 1):
            p = j - 2 * q
            s += nb**q * mu[p] / (ctx.factorial(q) * ctx.factorial(p))
        out.append(s)
    return out


def quantization_matrix(table: MomentColumnTable, beta, J: int):
    """Rows ``l1 = 0..m_s`` (orders J, J-1, ...) and their E-derivatives."""
    n = table.columns
    rows, drows = [], []
    for l1 in range(n):
        r, dr = [], []
        for l2 in range(n):
            v, dv = _entry_pair(table, beta, J - l1, l2)
            r.append(v)
            dr.append(dv)
        rows.append(r)
        drows.append(dr)
    return rows, drows


def _det(ctx, rows):
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    if n == 3:
        (a, b, c), (d, e, f), (g, h, i) = rows
        return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return ctx.det(ctx.matrix(rows))


def _scaled_delta(spec: RecursionSpec, E, config: MrfConfig, scales=None):
    config.validate_for(spec)
    table = column_values(spec, E, config.J, config.digits)
    ctx = table.ctx
    rows, drows = quantization_matrix(table, config.reference_exponent, config.J)
    if scales is None:
        scales = []
        for r in rows:
            big = max(abs(v) for v in r)
            scales.append(1 / big if big != 0 else ctx.mpf(1))
    rows = [[v * s for v in r] for r, s in zip(rows, scales)]
    drows = [[v * s for v in r] for r, s in zip(drows, scales)]
    d = _det(ctx, rows)
    dd = ctx.mpc(0)
    for k in range(len(rows)):
        mixed = [drows[i] if i == k else rows[i] for i in range(len(rows))]
        dd += _det(ctx, mixed)
    return d, dd, scales


def delta_and_derivative(spec: RecursionSpec, E, config: MrfConfig):
    """Row-normalised ``Delta_J(E)`` and its exact E-derivative.

    Each row is divided by its largest modulus at this E; the derivative uses
    the same (frozen) factors, so ``Delta/Delta'`` is the true Newton step.
    """
    d, dd, _ = _scaled_delta(spec, E, config)
    return d, dd


# -- root finding -----------------------------------------------------------


def newton_refine(spec: RecursionSpec, seed, config: MrfConfig, strict: bool = True) -> RootEstimate:
    """Newton iteration on ``Delta_J``; secant step when the derivative underflows.

    Raises
    ------
    DerivativeVanished
        If the derivative is zero on the first step (no secant history yet).
    NotConverged
        If ``max_iter`` is exhausted or the iterate blows up (only when
        ``strict``; otherwise an unconverged estimate is returned).
    """
    ctx = working_context(config.digits)
    tol = ctx.mpf(config.tol)
    E = ctx.mpc(seed)
    prev = None
    residual = None
    for it in range(1, config.max_iter + 1):
        d, dd, _ = _scaled_delta(spec, E, config)
        residual = abs(d)
        if d == 0:
            return RootEstimate(E, 0.0, it, config.J, config.beta, True)
        if abs(dd) <= abs(d) * tol * tol:
            if prev is None:
                raise DerivativeVanished(f"derivative vanished at E={ctx.nstr(E, 12)}")
            pE, pd = prev
            if d == pd:
                raise DerivativeVanished(f"secant degenerate at E={ctx.nstr(E, 12)}")
            step = d * (E - pE) / (d - pd)
        else:
            step = d / dd
        prev = (E, d)
        E = E - step
        if not ctx.isfinite(E.real) or not ctx.isfinite(E.imag) or abs(E) > 1e12:
            break
        if abs(step) <= tol * max(1, abs(E)):
            return RootEstimate(E, float(residual), it, config.J, config.beta, True)
    est = RootEstimate(E, float(residual) if residual is not None else math.inf,
                       config.max_iter, config.J, config.beta, False)
    if strict:
        raise NotConverged(f"Newton did not converge from seed {seed}", est)
    return est


def _log_abs_delta(spec, E, config) -> float:
    d, _, _ = _scaled_delta(spec, E, config)
    a = abs(d)
    if a == 0:
        return -math.inf
    return float(working_context(config.digits).log10(a))


def grid_scan(
    spec: RecursionSpec,
    region: Sequence[float],
    nx: int,
    ny: int,
    config: MrfConfig,
) -> list:
    """Seeds at the interior local minima of ``|Delta_J|`` on a grid.

    ``region`` is ``(re_min, re_max, im_min, im_max)``.  A node qualifies when
    its value is below every neighbour; exact ties (common on grids symmetric
    about the real axis) go to the node that comes first in row-major order.
    Seeds are returned sorted by increasing ``|Delta_J|``.
    """
    re0, re1, im0, im1 = (float(v) for v in region)
    if nx < 2 or ny < 2 or not re1 > re0 or not im1 >= im0:
        raise ConfigError("grid_scan needs nx, ny >= 2 and a non-empty region")
    xs = [re0 + (re1 - re0) * i / (nx - 1) for i in range(nx)]
    ys = [im0 + (im1 - im0) * k / (ny - 1) for k in range(ny)]
    vals = [[round(_log_abs_delta(spec, complex(x, y), config), 9) for x in xs] for y in ys]
    found = []
    for k in range(1, ny - 1):
        for i in range(1, nx - 1):
            v = vals[k][i]
            ok = True
            for dk in (-1, 0, 1):
                for di in (-1, 0, 1):
                    if dk == 0 and di == 0:
                        continue
                    w = vals[k + dk][i + di]
                    earlier = (dk, di) < (0, 0)
                    if w < v or (w == v and earlier):
                        ok = False
            if ok:
                found.append((v, complex(xs[i], ys[k])))
    found.sort(key=lambda t: (t[0], t[1].real, t[1].imag))
    return [z for _, z in found]


def dedupe_roots(roots: Iterable, rel: float = 1e-6) -> list:
    """Drop roots within ``rel`` (relative to ``max(1, |E|)``) of an earlier one."""
    kept = []
    for r in roots:
        z = complex(r.E) if isinstance(r, RootEstimate) else complex(r)
        if all(abs(z - complex(k.E if isinstance(k, RootEstimate) else k)) > rel * max(1.0, abs(z)) for k in kept):
            kept.append(r)
    return kept


# -- convergence in J -------------------------------------------------------


def _fixed(ctx, x, places: int) -> str:
    s = ctx.nstr(x, places + 25, min_fixed=-ctx.inf, max_fixed=ctx.inf)
    with localcontext() as dc:
        dc.prec = places + 60
        d = Decimal(s).quantize(Decimal(1).scaleb(-places))
        text = f"{d:.{places}f}"
    if text.startswith("-") and set(text[1:]) <= set("0."):
        text = text[1:]
    return text


def _significant(prefix: str) -> int:
    digits = prefix.lstrip("-").replace(".", "").lstrip("0")
    return len(digits)


def stable_prefix(values: Sequence, places: int, ctx=None) -> tuple:
    """Longest common decimal prefix of ``values`` written with ``places`` decimals.

    Returns ``(significant_digit_count, prefix_text)``.
    """
    ctx = ctx or working_context(max(MIN_PRECISION, places + 10))
    texts = [_fixed(ctx, v, places) for v in values]
    first = texts[0]
    n = len(first)
    for t in texts[1:]:
        n = min(n, len(t))
        for i in range(n):
            if t[i] != first[i]:
                n = i
                break
    prefix = first[:n]
    # an integer part is only meaningful if it is complete
    head = first.split(".")[0]
    if len(prefix) < len(head):
        prefix = ""
    return _significant(prefix), prefix.rstrip(".")


def converge(
    spec: RecursionSpec,
    seed,
    J_schedule: Sequence[int] | None = None,
    config: MrfConfig | None = None,
) -> ConvergedEnergy:
    """Follow one root through the orders of ``J_schedule``.

    The root is first refined at the highest order from ``seed``; each lower
    order is then warm-started from the root at the next higher order.  Low
    orders often have not resolved a given state yet, so once the root moves
    by more than ``config.trust_radius`` between neighbouring orders, that
    order and everything below it are dropped (listed in ``dropped``).

    Raises
    ------
    BranchLost
        If the refinement at the highest order fails, or fewer than
        ``config.agreement_window`` orders remain continuous.
    """
    config = config or MrfConfig()
    schedule = list(J_schedule or DEFAULT_SCHEDULE)
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("J_schedule must be a non-empty strictly increasing sequence")
    top = config.with_order(schedule[-1])
    try:
        last = newton_refine(spec, seed, top)
    except NotConverged as exc:
        raise BranchLost(f"no root found from seed {seed} at J={top.J}") from exc
    kept = [last]
    dropped = []
    for i, J in enumerate(reversed(schedule[:-1])):
        try:
            est = newton_refine(spec, kept[-1].E, config.with_order(J))
        except NotConverged:
            est = None
        if est is None or abs(complex(est.E) - complex(kept[-1].E)) > config.trust_radius:
            dropped = schedule[: len(schedule) - 1 - i]
            break
        kept.append(est)
    kept.reverse()
    if len(kept) < min(config.agreement_window, len(schedule)):
        raise BranchLost(
            f"only {len(kept)} continuous orders (need {config.agreement_window}); "
            f"orders {dropped} did not track the root",
            partial=tuple((e.J, e.E) for e in kept),
        )
    estimates = tuple((e.J, e.E) for e in kept)
    ctx = working_context(top.digits)
    window = [e for _, e in estimates[-config.agreement_window:]]
    places = max(1, ctx.dps - 10)
    n_re, re_text = stable_prefix([ctx.mpf(e.real) for e in window], places, ctx)
    n_im, im_text = stable_prefix([ctx.mpf(e.imag) for e in window], places, ctx)
    is_real = all(abs(e.imag) < config.reality_threshold for e in window)
    if is_real:
        im_text = "0"
        n_im = 0
    return ConvergedEnergy(
        estimates=estimates,
        stable_value=last.E,
        stable_digits=(n_re, n_im),
        is_real=is_real,
        re_text=re_text,
        im_text=im_text,
        final=last,
        dropped=tuple(dropped),
    )
