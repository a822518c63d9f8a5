"""Batch workflows behind the command-line subcommands.

Everything here returns plain records; formatting and exit codes live in
:mod:`ptmrf.cli`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from .branches import (
    SpectralBranch,
    cubic_family,
    detect_transition,
    locate_critical,
    sweep,
)
from .errors import BranchLost, ConfigError, MrfError
from .moments import PolynomialPotential, default_precision, derive_recursion, working_context
from .oracle import build_hamiltonian_matrix, match_roots, oracle_eigenvalues
from .quantizer import MrfConfig, _fixed, converge, grid_scan

PAIR_LABELS = {"E1E2": ("E1", "E2"), "E3E4": ("E3", "E4")}
DEFAULT_CRITICAL_RANGE = {"E1E2": (-4.0, 0.0, 0.5), "E3E4": (-7.0, 0.0, 0.5)}


@dataclass(frozen=True)
class RunConfig:
    alpha: float | None = None
    coeffs: tuple | None = None
    alpha_range: tuple | None = None  # (lo, hi, step)
    beta: float = 0.5
    beta_scale: float = 0.5
    jmax: int = 100
    j_schedule: tuple | None = None
    precision_digits: int | None = None
    reality_threshold: float = 1e-8
    newton_tol: float | None = None
    pair: str = "E1E2"
    branches: tuple = ("E1", "E2", "E3", "E4")
    seeds: tuple = ()  # (label | None, alpha | None, complex)
    region: tuple = (0.0, 15.0, -0.25, 6.0)
    grid_step: float = 0.25
    scan_j: int = 40
    basis_size: int = 80
    omega: float = 1.25
    oracle_alphas: tuple = (-3.0, 0.0, 2.0)
    oracle_count: int = 4
    oracle_tol: float = 1e-8
    tables: tuple = ()

    def __post_init__(self):
        if self.jmax < 6:
            raise ConfigError(f"J={self.jmax} is below the minimum of 6 for a cubic potential")
        if self.alpha_range is not None and self.alpha_range[2] == 0:
            raise ConfigError("alpha step must be nonzero")
        if self.pair not in PAIR_LABELS:
            raise ConfigError(f"pair must be one of {sorted(PAIR_LABELS)}")
        if self.grid_step <= 0:
            raise ConfigError("grid step must be positive")

    @property
    def digits(self) -> int:
        return self.precision_digits or default_precision(self.jmax)

    @property
    def schedule(self) -> tuple:
        if self.j_schedule:
            sched = tuple(self.j_schedule)
            if sched[-1] != self.jmax:
                raise ConfigError("the J schedule must end at jmax")
            return sched
        return tuple(sorted({max(6, self.jmax - 10 * k) for k in range(9)}))

    def mrf(self, J: int | None = None) -> MrfConfig:
        return MrfConfig(
            beta=self.beta,
            beta_scale=self.beta_scale,
            J=J or self.jmax,
            precision_digits=self.digits,
            newton_tol=self.newton_tol,
            reality_threshold=self.reality_threshold,
        )


@dataclass(frozen=True)
class StateRecord:
    alpha: float
    branch: str
    E: object
    J: int
    stable_re: int
    stable_im: int
    re_text: str
    im_text: str
    residual: float
    broken: bool

    def sort_key(self):
        return (self.alpha, _label_key(self.branch), float(self.E.real), float(self.E.imag))


def _label_key(label: str):
    digits = "".join(ch for ch in label if ch.isdigit())
    return (int(digits) if digits else math.inf, label)


def _spec_for(cfg: RunConfig, alpha: float | None):
    if cfg.coeffs is not None:
        return derive_recursion(PolynomialPotential(tuple(cfg.coeffs)))
    return cubic_family(alpha)


def _record(alpha, label, conv, cfg: RunConfig) -> StateRecord:
    E = conv.stable_value
    return StateRecord(
        alpha=alpha,
        branch=label,
        E=E,
        J=conv.J,
        stable_re=conv.stable_digits[0],
        stable_im=conv.stable_digits[1],
        re_text=conv.re_text,
        im_text=conv.im_text,
        residual=conv.final.residual,
        broken=not conv.is_real,
    )


def _flip(rec: StateRecord) -> StateRecord:
    im = rec.im_text[1:] if rec.im_text.startswith("-") else "-" + rec.im_text
    return StateRecord(rec.alpha, rec.branch, rec.E.conjugate(), rec.J, rec.stable_re,
                       rec.stable_im, rec.re_text, im, rec.residual, rec.broken)


def _rank_labels(states: list, mirrored: bool) -> list:
    """Attach E-labels to ``(conv, flip)`` states, adding mirrored partners."""
    items = []
    for c, flip in states:
        items.append((c, flip))
        if mirrored and not c.is_real:
            items.append((c, not flip))
    items.sort(key=lambda t: (round(float(t[0].stable_value.real), 8), -_signed_im(*t)))
    return [(f"E{k + 1}", c, flip) for k, (c, flip) in enumerate(items)]


def _signed_im(c, flip: bool) -> float:
    v = float(c.stable_value.imag)
    return -v if flip else v


def find_states(cfg: RunConfig, alpha: float | None, diagnostics: list | None = None) -> list:
    """All converged states seeded from ``cfg.region``, labelled by rank.

    Explicit ``cfg.seeds`` for this alpha replace the grid scan.

    For the real-alpha cubic family the spectrum is closed under conjugation,
    so only the upper half of the region is scanned and complex roots are
    mirrored.  Labels follow the branch convention: states are ranked by real
    part and the member of a pair with positive imaginary part comes first.
    Seeds whose root does not settle across the J schedule are dropped and
    noted in ``diagnostics``; roots whose real part lands outside the region
    are dropped silently.
    """
    spec = _spec_for(cfg, alpha)
    mirrored = cfg.coeffs is None
    re0, re1, im0, im1 = cfg.region
    if mirrored:
        im0 = -cfg.grid_step
    nx = max(3, int(round((re1 - re0) / cfg.grid_step)) + 1)
    ny = max(3, int(round((im1 - im0) / cfg.grid_step)) + 1)
    given = [z for _, a, z in cfg.seeds if a is None or alpha is None or abs(a - alpha) < 1e-12]
    if given:
        seeds = given
    else:
        scan_cfg = cfg.mrf(min(cfg.scan_j, cfg.jmax))
        seeds = grid_scan(spec, (re0, re1, im0, im1), nx, ny, scan_cfg)
    convs, kept = [], []
    for z in seeds:
        try:
            conv = converge(spec, z, cfg.schedule, cfg.mrf())
        except MrfError as exc:
            if diagnostics is not None:
                diagnostics.append(f"alpha={alpha}: seed {z:.4g} dropped: {exc}")
            continue
        if not re0 <= float(conv.stable_value.real) <= re1:
            continue
        flip = mirrored and not conv.is_real and conv.stable_value.imag < 0
        E = complex(conv.stable_value)
        E = E.conjugate() if flip else E
        if any(abs(E - k) <= 1e-6 * max(1.0, abs(E)) for k in kept):
            continue
        kept.append(E)
        convs.append((conv, flip))
    records = []
    for label, conv, flip in _rank_labels(convs, mirrored):
        rec = _record(alpha, label, conv, cfg)
        records.append(_flip(rec) if flip else rec)
    return sorted(records, key=StateRecord.sort_key)


def _parse_range(cfg: RunConfig, default=None) -> tuple:
    rng = cfg.alpha_range or default
    if rng is None:
        raise ConfigError("an alpha range LO:HI:STEP is required")
    lo, hi, step = (float(v) for v in rng)
    if step == 0:
        raise ConfigError("alpha step must be nonzero")
    lo, hi = min(lo, hi), max(lo, hi)
    step = abs(step)
    n = (hi - lo) / step
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("alpha range must span a whole number of steps")
    return lo, hi, step, int(round(n))


@dataclass
class SweepResult:
    branches: list
    records: list
    diagnostics: list = field(default_factory=list)
    complete: bool = True


def _start_alpha(lo: float, step: float, n: int) -> float:
    """Grid point closest to alpha = 0, where the low spectrum is real and well separated."""
    grid = [lo + k * step for k in range(n + 1)]
    return min(grid, key=lambda a: (abs(a), a))


def _start_seeds(cfg: RunConfig, alpha: float, labels, diagnostics, step: float = 0.5) -> dict:
    """Seeds at the start alpha; labelled seeds quoted elsewhere are tracked there first."""
    seeds = {}
    for label, a, z in cfg.seeds:
        if label not in labels or label in seeds:
            continue
        if a is None or abs(a - alpha) < 1e-12:
            seeds[label] = z
            continue
        n = max(1, math.ceil(abs(alpha - a) / step - 1e-9))
        try:
            br = sweep((a, z), alpha, (alpha - a) / n, cfg.mrf(), label=label)
        except MrfError as exc:
            diagnostics.append(f"{label}: seed at alpha={a} not carried to {alpha}: {exc}")
            continue
        seeds[label] = complex(br.points[-1].E)
    missing = [lab for lab in labels if lab not in seeds]
    if missing:
        states = find_states(dataclasses.replace(cfg, seeds=()), alpha, diagnostics)
        for rec in states:
            if rec.branch in missing:
                seeds[rec.branch] = complex(rec.E)
    lost = [lab for lab in labels if lab not in seeds]
    if lost:
        raise BranchLost(f"no seed for {', '.join(lost)} at alpha={alpha}", last_alpha=alpha)
    return seeds


def _join(label, down: SpectralBranch | None, up: SpectralBranch | None, meta) -> SpectralBranch:
    pts = {}
    for part in (down, up):
        if part is not None:
            for p in part.points:
                pts[round(p.alpha, 12)] = p
    return SpectralBranch(label, tuple(pts[k] for k in sorted(pts)), meta)


def run_sweep(cfg: RunConfig, labels=None, with_digits: bool = True) -> SweepResult:
    """Track each labelled branch across the alpha range, both ways from the start point."""
    labels = tuple(labels or cfg.branches)
    lo, hi, step, n = _parse_range(cfg)
    a0 = _start_alpha(lo, step, n)
    diagnostics: list = []
    seeds = _start_seeds(cfg, a0, labels, diagnostics, step)
    mrf = cfg.mrf()
    branches = []
    complete = True
    for label in labels:
        parts = []
        for target, h in ((lo, -step), (hi, step)):
            if abs(target - a0) < 1e-12:
                parts.append(None)
                continue
            try:
                parts.append(sweep((a0, seeds[label]), target, h, mrf, label=label))
            except BranchLost as exc:
                complete = False
                diagnostics.append(f"{label}: {exc}")
                parts.append(exc.partial)
        if parts[0] is None and parts[1] is None:
            parts[1] = sweep((a0, seeds[label]), a0, step, mrf, label=label)
        meta = (parts[1] or parts[0]).metadata
        branches.append(_join(label, parts[0], parts[1], meta))
    records = []
    for br in branches:
        for pt in br.points:
            records.append(_point_record(cfg, br.label, pt, with_digits, diagnostics))
    records.sort(key=StateRecord.sort_key)
    return SweepResult(branches, records, diagnostics, complete)


def _point_record(cfg, label, pt, with_digits, diagnostics) -> StateRecord:
    if with_digits:
        try:
            conv = converge(cubic_family(pt.alpha), pt.E, cfg.schedule, cfg.mrf())
            if abs(complex(conv.stable_value) - complex(pt.E)) <= 1e-8 * max(1.0, abs(complex(pt.E))):
                return _record(pt.alpha, label, conv, cfg)
            diagnostics.append(f"{label} alpha={pt.alpha}: J refinement moved to another root")
        except MrfError as exc:
            diagnostics.append(f"{label} alpha={pt.alpha}: no stable digits ({exc})")
    ctx = working_context(cfg.digits)
    E = pt.E
    re_text = _fixed(ctx, ctx.mpf(E.real), 10)
    im_text = "0" if not pt.broken else _fixed(ctx, ctx.mpf(E.imag), 10)
    return StateRecord(pt.alpha, label, E, pt.J, 0, 0, re_text, im_text, math.nan, pt.broken)


def run_critical(cfg: RunConfig) -> tuple:
    """Sweep the configured pair, bracket its transition and locate the critical point.

    Returns ``(CriticalPoint, SweepResult)``.  Raises NoTransition when the
    pair keeps one character over the range.
    """
    labels = PAIR_LABELS[cfg.pair]
    if cfg.alpha_range is None:
        cfg = dataclasses.replace(cfg, alpha_range=DEFAULT_CRITICAL_RANGE[cfg.pair])
    result = run_sweep(cfg, labels, with_digits=False)
    a, b = result.branches
    lo, hi = detect_transition(a, b, cfg.reality_threshold)
    seeds = [a.at(hi).E, b.at(hi).E]
    cp = locate_critical((lo, hi), seeds, config=cfg.mrf(), pair_labels=labels)
    return cp, result


@dataclass(frozen=True)
class OracleComparison:
    alpha: float
    mrf: tuple
    oracle: tuple
    report: object


def run_oracle_check(cfg: RunConfig, diagnostics: list | None = None) -> list:
    """Lowest MRF states against the truncated-basis spectrum at each alpha."""
    out = []
    for alpha in cfg.oracle_alphas:
        H = build_hamiltonian_matrix(alpha, cfg.basis_size, cfg.omega)
        ref = oracle_eigenvalues(H, cfg.oracle_count)
        states = find_states(dataclasses.replace(cfg, seeds=()), alpha, diagnostics)
        lowest = sorted(states, key=lambda r: (float(r.E.real), float(r.E.imag)))[: cfg.oracle_count]
        report = match_roots([r.E for r in lowest], ref, cfg.oracle_tol)
        out.append(OracleComparison(alpha, tuple(r.E for r in lowest), tuple(ref), report))
    return out
