"""Independent reference spectrum from a truncated harmonic-oscillator basis.

``P^2 + i X^3 + i alpha X`` is written in the eigenbasis of an oscillator of
frequency ``omega`` (``X = (a + a^+)/sqrt(2 omega)``), truncated to ``N``
states, and diagonalised.  The truncation is non-Hermitian and produces
spurious eigenvalues whose eigenvectors live at the top of the basis; those
are screened out by their tail weight.  Surviving eigenvalues are polished in
extended precision by two-sided Rayleigh quotient iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, EigSolverFailure
from .moments import working_context

BANDWIDTH = 3


@dataclass(frozen=True)
class TruncatedHamiltonian:
    N: int
    alpha: float
    omega: float
    entries: tuple  # N x N tuple of mpc rows
    precision_digits: int = 30

    @property
    def ctx(self):
        return working_context(self.precision_digits)

    def to_numpy(self) -> np.ndarray:
        return np.array([[complex(v) for v in row] for row in self.entries], dtype=complex)


def build_hamiltonian_matrix(
    alpha: float, N: int, omega: float = 1.0, precision_digits: int = 30
) -> TruncatedHamiltonian:
    """Matrix of ``P^2 + i X^3 + i alpha X`` on the first ``N`` oscillator states."""
    if N < 8:
        raise ConfigError("N must be >= 8")
    if not omega > 0:
        raise ConfigError("omega must be positive")
    ctx = working_context(precision_digits)
    w = ctx.mpf(omega)
    a = ctx.mpf(alpha)
    H = [[ctx.mpc(0)] * N for _ in range(N)]
    half_w = w / 2
    x1 = 1 / ctx.sqrt(2 * w)
    x3 = x1**3
    for n in range(N):
        H[n][n] += half_w * (2 * n + 1)
        if n + 2 < N:
            v = -half_w * ctx.sqrt((n + 1) * (n + 2))
            H[n][n + 2] += v
            H[n + 2][n] += v
        if n + 1 < N:
            # (a + a^+)^3 between |n> and |n+1>: 3 (n+1)^{3/2}; X alone: sqrt(n+1)
            v = ctx.mpc(0, 1) * (x3 * 3 * (n + 1) * ctx.sqrt(n + 1) + a * x1 * ctx.sqrt(n + 1))
            H[n][n + 1] += v
            H[n + 1][n] += v
        if n + 3 < N:
            v = ctx.mpc(0, 1) * x3 * ctx.sqrt((n + 1) * (n + 2) * (n + 3))
            H[n][n + 3] += v
            H[n + 3][n] += v
    return TruncatedHamiltonian(
        N=N,
        alpha=alpha,
        omega=omega,
        entries=tuple(tuple(r) for r in H),
        precision_digits=precision_digits,
    )


def _banded_solve(ctx, rows, shift, b, band: int, adjoint: bool = False):
    """Solve ``(A - shift) x = b`` (or its adjoint) for a matrix of half-bandwidth ``band``.

    Gaussian elimination with partial pivoting; fill-in stays within ``2*band``
    above the diagonal.
    """
    n = len(rows)
    if adjoint:
        A = [[ctx.conj(rows[j][i]) for j in range(n)] for i in range(n)]
        s = ctx.conj(shift)
    else:
        A = [list(r) for r in rows]
        s = shift
    for i in range(n):
        A[i][i] = A[i][i] - s
    x = list(b)
    for k in range(n):
        last = min(n, k + band + 1)
        piv = max(range(k, last), key=lambda r: abs(A[r][k]))
        if A[piv][k] == 0:
            A[piv][k] = ctx.mpf(10) ** (-ctx.dps)  # exact singularity: perturb
        if piv != k:
            A[k], A[piv] = A[piv], A[k]
            x[k], x[piv] = x[piv], x[k]
        hi = min(n, k + 2 * band + 1)
        pivot = A[k][k]
        for r in range(k + 1, last):
            f = A[r][k] / pivot
            if f == 0:
                continue
            Ar, Ak = A[r], A[k]
            for c in range(k, hi):
                Ar[c] -= f * Ak[c]
            x[r] -= f * x[k]
    for k in range(n - 1, -1, -1):
        hi = min(n, k + 2 * band + 1)
        acc = x[k]
        for c in range(k + 1, hi):
            acc -= A[k][c] * x[c]
        x[k] = acc / A[k][k]
    return x


def _polish(H: TruncatedHamiltonian, lam, right, left, max_iter: int = 6):
    ctx = H.ctx
    rows = H.entries
    n = H.N
    x = [ctx.mpc(v) for v in right]
    y = [ctx.mpc(v) for v in left]
    lam = ctx.mpc(lam)
    tol = ctx.mpf(10) ** (-(H.precision_digits - 5))

    def norm(v):
        return ctx.sqrt(ctx.fsum(abs(t) ** 2 for t in v))

    for _ in range(max_iter):
        x = _banded_solve(ctx, rows, lam, x, BANDWIDTH)
        nx = norm(x)
        x = [t / nx for t in x]
        y = _banded_solve(ctx, rows, lam, y, BANDWIDTH, adjoint=True)
        ny = norm(y)
        y = [t / ny for t in y]
        Hx = [ctx.fsum(rows[i][j] * x[j] for j in range(max(0, i - BANDWIDTH), min(n, i + BANDWIDTH + 1)))
              for i in range(n)]
        num = ctx.fsum(ctx.conj(y[i]) * Hx[i] for i in range(n))
        den = ctx.fsum(ctx.conj(y[i]) * x[i] for i in range(n))
        new = num / den
        done = abs(new - lam) <= tol * max(1, abs(new))
        lam = new
        if done:
            break
    return lam


def oracle_eigenvalues(
    H: TruncatedHamiltonian,
    count: int,
    polish: bool = True,
    tail_fraction: float = 0.25,
    tail_limit: float = 1e-3,
) -> list:
    """The ``count`` genuine eigenvalues of smallest real part, sorted by (Re, Im).

    Eigenvectors with more than ``tail_limit`` of their norm in the top
    ``tail_fraction`` of the basis are treated as truncation artefacts and are
    only used if ``count`` exceeds the number of genuine ones.
    """
    if count > H.N:
        raise ConfigError("count must not exceed N")
    A = H.to_numpy()
    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise EigSolverFailure("non-finite eigenvalues")
    start = int(H.N * (1 - tail_fraction))
    tails = np.linalg.norm(vr[start:], axis=0) / np.linalg.norm(vr, axis=0)
    order = sorted(range(H.N), key=lambda i: (tails[i] > tail_limit, w[i].real, w[i].imag))
    chosen = order[:count]
    ctx = H.ctx
    out = []
    for i in chosen:
        if polish:
            out.append(_polish(H, w[i], vr[:, i], vl[:, i]))
        else:
            out.append(ctx.mpc(complex(w[i])))
    out.sort(key=lambda z: (float(z.real), float(z.imag)))
    return out


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple  # (index in a, index in b, distance)
    unmatched_a: tuple
    unmatched_b: tuple
    max_distance: float
    tol: float

    @property
    def ok(self) -> bool:
        return not self.unmatched_a and not self.unmatched_b and self.max_distance <= self.tol


def match_roots(mrf_roots, oracle_roots, tol: float) -> MatchReport:
    """Greedy nearest-neighbour matching of two root lists within ``tol``."""
    a = [complex(z) for z in mrf_roots]
    b = [complex(z) for z in oracle_roots]
    cand = sorted(
        ((abs(za - zb), i, j) for i, za in enumerate(a) for j, zb in enumerate(b)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used_a, used_b, pairs = set(), set(), []
    for d, i, j in cand:
        if d > tol:
            break
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j, d))
    pairs.sort()
    return MatchReport(
        pairs=tuple(pairs),
        unmatched_a=tuple(i for i in range(len(a)) if i not in used_a),
        unmatched_b=tuple(j for j in range(len(b)) if j not in used_b),
        max_distance=max((d for _, _, d in pairs), default=0.0),
        tol=tol,
    )
