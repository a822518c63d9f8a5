"""Published reference values bundled as CSV, and the checks run against them.

Each row carries the quoted MRF literal (if any), the order it was quoted
at, optional rigorous bound intervals and a footnote flag:

* footnotes 1-3 mark full-order bounds; a J = ``check_order`` value outside
  them is a hard failure;
* footnote 4 marks low-order bounds, reported but never failing;
* rows quoted at the full order (``j == check_order``) are literal checks
  with a tolerance of one unit in the last quoted digit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import Decimal
from importlib import resources

from .branches import cubic_family
from .errors import DerivativeVanished, NotConverged
from .moments import working_context
from .quantizer import MrfConfig, newton_refine

FULL_ORDER_FOOTNOTES = frozenset({"1", "2", "3"})


@dataclass(frozen=True)
class FixtureRow:
    table: str
    footnote: str
    alpha: str
    branch: str
    re_mrf: str
    im_mrf: str
    j: int
    re_lo: str
    re_hi: str
    im_lo: str
    im_hi: str
    note: str
    provenance: str

    @property
    def has_literal(self) -> bool:
        return bool(self.re_mrf)

    @property
    def has_bounds(self) -> bool:
        return bool(self.re_lo or self.im_lo)

    @property
    def is_complex(self) -> bool:
        return bool(self.im_mrf) and Decimal(self.im_mrf) != 0 or bool(self.im_lo)

    @property
    def excluded(self) -> bool:
        return "excluded" in self.note

    @property
    def seed(self) -> complex:
        if self.re_mrf:
            re = float(self.re_mrf)
        else:
            re = (float(self.re_lo) + float(self.re_hi)) / 2
        im = float(self.im_mrf) if self.im_mrf else 0.0
        if not im and self.im_lo:
            im = (float(self.im_lo) + float(self.im_hi)) / 2
        return complex(re, im)


def load_tables(source=None) -> list:
    """Parse the bundled fixture CSV (or a path / text stream given as ``source``)."""
    if source is None:
        text = resources.files("ptmrf").joinpath("data/tables.csv").read_text()
        stream = io.StringIO(text)
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        stream = open(source, newline="")
    else:
        stream = source
    with stream:
        reader = csv.DictReader(stream)
        return [FixtureRow(**{**r, "j": int(r["j"])}) for r in reader]


def unit_in_last_place(text: str) -> Decimal:
    d = Decimal(text)
    return Decimal(1).scaleb(d.as_tuple().exponent)


def literal_matches(value: complex | object, row: FixtureRow, ctx=None) -> bool:
    """``|value - literal| <= 1`` unit of the last quoted digit, per component.

    The imaginary part is compared in magnitude since rows quote ``+-``.
    """
    ctx = ctx or working_context(40)
    z = ctx.mpc(value)
    ok = abs(z.real - ctx.mpf(row.re_mrf)) <= ctx.mpf(str(unit_in_last_place(row.re_mrf)))
    if row.is_complex:
        ok = ok and abs(abs(z.imag) - ctx.mpf(row.im_mrf)) <= ctx.mpf(str(unit_in_last_place(row.im_mrf)))
    return bool(ok)


def within_bounds(value, row: FixtureRow, ctx=None) -> bool:
    """Strict membership in the row's real (and, for pairs, imaginary) interval."""
    ctx = ctx or working_context(40)
    z = ctx.mpc(value)
    ok = True
    if row.re_lo:
        ok = ctx.mpf(row.re_lo) < z.real < ctx.mpf(row.re_hi)
    if row.im_lo:
        ok = ok and ctx.mpf(row.im_lo) < abs(z.imag) < ctx.mpf(row.im_hi)
    return bool(ok)


@dataclass(frozen=True)
class RowCheck:
    row: FixtureRow
    value: object  # root at check_order, None if Newton failed
    literal_value: object  # root at the row's quoted order
    literal_ok: bool | None
    bound_ok: bool | None
    fatal: bool

    @property
    def passed(self) -> bool:
        return not self.fatal


class _RootCache:
    def __init__(self, config: MrfConfig):
        self.config = config
        self.store = {}

    def get(self, alpha: str, seed: complex, J: int):
        key = (alpha, round(seed.real, 6), round(abs(seed.imag), 6), J)
        if key not in self.store:
            cfg = self.config.with_order(J)
            try:
                est = newton_refine(cubic_family(float(alpha)), seed, cfg)
                self.store[key] = est.E
            except (NotConverged, DerivativeVanished):
                self.store[key] = None
        return self.store[key]


def check_rows(rows, check_order: int = 100, config: MrfConfig | None = None) -> list:
    """Recompute every row and compare with its literal and bounds.

    Bounds are always checked with the root at ``check_order``; literals are
    checked at the order they were quoted at.  Only literal rows quoted at
    ``check_order`` and bound rows with footnotes 1-3 can fail a run.
    """
    config = config or MrfConfig(precision_digits=max(80, int(0.8 * check_order)))
    cache = _RootCache(config)
    ctx = working_context(config.digits)
    out = []
    for row in rows:
        seed = row.seed
        value = cache.get(row.alpha, seed, check_order)
        literal_value = value if row.j == check_order else None
        literal_ok = None
        if row.has_literal and not row.excluded:
            if row.j != check_order:
                literal_value = cache.get(row.alpha, seed, row.j)
            literal_ok = literal_value is not None and literal_matches(literal_value, row, ctx)
        bound_ok = None
        if row.has_bounds:
            bound_ok = value is not None and within_bounds(value, row, ctx)
        fatal = False
        if row.footnote in FULL_ORDER_FOOTNOTES and bound_ok is False:
            fatal = True
        if row.j == check_order and literal_ok is False:
            fatal = True
        out.append(RowCheck(row, value, literal_value, literal_ok, bound_ok, fatal))
    return out
