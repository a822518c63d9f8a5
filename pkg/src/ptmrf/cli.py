"""Command-line front end: ``python -m ptmrf <command> [options]``.

Commands
--------
solve         states at one alpha (grid scan, then convergence in J)
sweep         branches over an alpha range
critical      PT-breaking point of the E1E2 or E3E4 pair
reproduce     recompute the bundled reference tables
oracle-check  compare with the truncated-basis diagonalisation

Options may also come from ``--config FILE`` (``key = value`` lines, ``#``
comments, keys spelled like the long flags); flags given on the command
line win.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .errors import (
    BracketInvalid,
    BranchLost,
    ConfigError,
    DoubleRootDivergence,
    MrfError,
    NoTransition,
    NotConverged,
)
from .fixtures import FULL_ORDER_FOOTNOTES, check_rows, load_tables
from .moments import working_context
from .quantizer import _fixed
from .runner import RunConfig, find_states, run_critical, run_oracle_check, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CONVERGENCE = 2
EXIT_MISMATCH = 3
EXIT_NO_TRANSITION = 4

STATE_HEADER = ["alpha", "branch", "re_e", "im_e", "j", "stable_re_digits",
                "stable_im_digits", "residual", "broken"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -- option parsing ---------------------------------------------------------


def _range(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) == 2:
        parts.append("0.5")
    if len(parts) != 3:
        raise ConfigError(f"expected LO:HI:STEP, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step == 0:
        raise ConfigError("alpha step must be nonzero")
    return lo, hi, step


def _schedule(text: str) -> tuple:
    lo, hi, step = (int(p) for p in text.split(":"))
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad J schedule {text!r}")
    out = list(range(lo, hi + 1, step))
    if out[-1] != hi:
        out.append(hi)
    return tuple(out)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _complexes(text: str) -> tuple:
    return tuple(complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip())


def _region(text: str) -> tuple:
    vals = tuple(float(v) for v in text.split(":"))
    if len(vals) != 4 or not vals[1] > vals[0] or not vals[3] > vals[2]:
        raise ConfigError(f"expected RE0:RE1:IM0:IM1, got {text!r}")
    return vals


def read_seeds(path) -> tuple:
    """Seed file: ``re im`` or ``label alpha re im`` per line, ``#`` comments."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        f = line.split()
        try:
            if len(f) == 2:
                out.append((None, None, complex(float(f[0]), float(f[1]))))
            elif len(f) == 4:
                out.append((f[0], float(f[1]), complex(float(f[2]), float(f[3]))))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"{path}:{n}: expected 're im' or 'label alpha re im'") from None
    return tuple(out)


# option name -> (converter, RunConfig field)
OPTIONS = {
    "alpha": (str, "alpha"),
    "coeffs": (_complexes, "coeffs"),
    "alpha_range": (_range, "alpha_range"),
    "beta": (float, "beta"),
    "beta_scale": (float, "beta_scale"),
    "jmax": (int, "jmax"),
    "j_schedule": (_schedule, "j_schedule"),
    "precision_digits": (int, "precision_digits"),
    "reality_threshold": (float, "reality_threshold"),
    "newton_tol": (float, "newton_tol"),
    "pair": (str, "pair"),
    "branches": (_names, "branches"),
    "seeds": (read_seeds, "seeds"),
    "region": (_region, "region"),
    "grid_step": (float, "grid_step"),
    "scan_j": (int, "scan_j"),
    "basis_size": (int, "basis_size"),
    "omega": (float, "omega"),
    "oracle_count": (int, "oracle_count"),
    "tol": (float, "oracle_tol"),
    "tables": (_names, "tables"),
}
OUTPUT_KEYS = {"format", "out"}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys use flag spelling with ``-`` or ``_``."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS and key not in OUTPUT_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    for name in OPTIONS:
        common.add_argument("--" + name.replace("_", "-"), dest=name, default=None)
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None)
    parser = _Parser(prog="ptmrf", description="Moment/reference-function eigenvalue solver "
                     "for P^2 + iX^3 + i alpha X.")
    parser.add_argument("--version", action="version", version=f"ptmrf {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, help_text in (
        ("solve", "states at one alpha"),
        ("sweep", "branches over an alpha range"),
        ("critical", "PT-breaking critical point of a pair"),
        ("reproduce", "recompute the bundled reference tables"),
        ("oracle-check", "compare with truncated-basis diagonalisation"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve(args: argparse.Namespace) -> tuple:
    """Merge config file and flags into ``(RunConfig, format, out)``."""
    raw = read_config_file(args.config) if args.config else {}
    for key in list(OPTIONS) + list(OUTPUT_KEYS):
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag
    fields = {}
    for key, value in raw.items():
        if key in OUTPUT_KEYS:
            continue
        conv, field_name = OPTIONS[key]
        try:
            fields[field_name] = conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    alpha_text = fields.pop("alpha", None)
    if alpha_text is not None:
        try:
            alphas = _floats(alpha_text)
        except ValueError:
            raise ConfigError(f"bad value for alpha: {alpha_text!r}") from None
        if args.command == "oracle-check":
            fields["oracle_alphas"] = alphas
        elif len(alphas) != 1:
            raise ConfigError("--alpha takes a single value for this command")
        else:
            fields["alpha"] = alphas[0]
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    return RunConfig(**fields), fmt, raw.get("out")


# -- rendering --------------------------------------------------------------


def _num(x: float | None) -> str:
    return "" if x is None else format(float(x), ".12g")


def _residual(x: float) -> str:
    return "nan" if x is None or math.isnan(x) else format(x, ".3e")


def state_row(rec) -> dict:
    return {
        "alpha": _num(rec.alpha),
        "branch": rec.branch,
        "re_e": rec.re_text,
        "im_e": rec.im_text,
        "j": str(rec.J),
        "stable_re_digits": str(rec.stable_re),
        "stable_im_digits": str(rec.stable_im),
        "residual": _residual(rec.residual),
        "broken": "true" if rec.broken else "false",
    }


def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _config_echo(cfg: RunConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "seeds":
            v = [[lab, a, repr(z)] for lab, a, z in v]
        elif isinstance(v, tuple):
            v = [str(x) for x in v]
        elif v is not None:
            v = str(v)
        out[f.name] = v
    out["j_schedule"] = [str(j) for j in cfg.schedule]
    out["precision_digits"] = str(cfg.digits)
    return out


def manifest(command: str, cfg: RunConfig, **payload) -> str:
    doc = {"tool": "ptmrf", "version": __version__, "command": command,
           "config": _config_echo(cfg)}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _warn(lines) -> None:
    for line in lines:
        print(f"ptmrf: {line}", file=sys.stderr)


# -- commands ---------------------------------------------------------------


def cmd_solve(cfg: RunConfig, fmt: str, out) -> int:
    if cfg.alpha is None and cfg.coeffs is None:
        raise ConfigError("solve needs --alpha or --coeffs")
    diagnostics: list = []
    records = find_states(cfg, cfg.alpha if cfg.coeffs is None else None, diagnostics)
    rows = [state_row(r) for r in records]
    text = _csv(rows, STATE_HEADER) if fmt == "csv" else manifest(
        "solve", cfg, states=rows, critical_points=[], diagnostics=diagnostics)
    _emit(text, out)
    _warn(diagnostics)
    return EXIT_OK if records else EXIT_CONVERGENCE


def cmd_sweep(cfg: RunConfig, fmt: str, out) -> int:
    result = run_sweep(cfg)
    rows = [state_row(r) for r in result.records]
    text = _csv(rows, STATE_HEADER) if fmt == "csv" else manifest(
        "sweep", cfg, states=rows, critical_points=[], diagnostics=result.diagnostics,
        complete=result.complete)
    _emit(text, out)
    _warn(result.diagnostics)
    return EXIT_OK if result.complete else EXIT_CONVERGENCE


def _critical_row(cp) -> dict:
    ctx = working_context(40)
    return {
        "pair": "".join(cp.pair_labels),
        "alpha_cr": _fixed(ctx, ctx.mpf(cp.alpha_cr), 10),
        "e_cr": _fixed(ctx, ctx.mpf(cp.E_cr), 11),
        "bracket_width": format(cp.bracket_width, ".3e"),
        "alpha_double_root": "" if cp.alpha_double_root is None
        else _fixed(ctx, ctx.mpf(cp.alpha_double_root), 10),
    }


def cmd_critical(cfg: RunConfig, fmt: str, out) -> int:
    cp, result = run_critical(cfg)
    row = _critical_row(cp)
    if fmt == "csv":
        text = _csv([row], list(row))
    else:
        text = manifest("critical", cfg, states=[], critical_points=[row],
                        diagnostics=result.diagnostics)
    _emit(text, out)
    _warn(result.diagnostics)
    return EXIT_OK


REPRODUCE_HEADER = ["table", "footnote", "alpha", "branch", "j", "literal_re", "literal_im",
                    "re_e", "im_e", "literal_ok", "bound_ok", "status"]


def _flag(v) -> str:
    return "" if v is None else ("true" if v else "false")


def cmd_reproduce(cfg: RunConfig, fmt: str, out) -> int:
    rows = load_tables()
    if cfg.tables:
        rows = [r for r in rows if r.table in cfg.tables]
    checks = check_rows(rows, check_order=cfg.jmax, config=cfg.mrf())
    ctx = working_context(cfg.digits)
    table = []
    for c in checks:
        r = c.row
        v = c.value
        status = "FAIL" if c.fatal else (
            "info" if (c.literal_ok is False or c.bound_ok is False) else "pass")
        table.append({
            "table": r.table, "footnote": r.footnote, "alpha": r.alpha, "branch": r.branch,
            "j": str(r.j), "literal_re": r.re_mrf, "literal_im": r.im_mrf,
            "re_e": "" if v is None else _fixed(ctx, v.real, 15),
            "im_e": "" if v is None else _fixed(ctx, abs(v.imag), 15),
            "literal_ok": _flag(c.literal_ok), "bound_ok": _flag(c.bound_ok), "status": status,
        })
    hard = [c for c in checks
            if (c.row.footnote in FULL_ORDER_FOOTNOTES and c.bound_ok is not None)
            or (c.row.j == cfg.jmax and c.literal_ok is not None)]
    failed = [c for c in checks if c.fatal]
    summary = {"rows": len(checks), "hard_checks": len(hard),
               "hard_passed": len(hard) - len(failed),
               "informational_mismatches": sum(1 for t in table if t["status"] == "info")}
    text = _csv(table, REPRODUCE_HEADER) if fmt == "csv" else manifest(
        "reproduce", cfg, rows=table, summary={k: str(v) for k, v in summary.items()})
    _emit(text, out)
    _warn([f"{summary['hard_passed']}/{summary['hard_checks']} hard checks passed; "
           f"{summary['informational_mismatches']} informational mismatches"]
          + [f"FAIL {c.row.provenance} alpha={c.row.alpha} {c.row.branch}" for c in failed])
    return EXIT_MISMATCH if failed else EXIT_OK


ORACLE_HEADER = ["alpha", "index", "mrf_re", "mrf_im", "oracle_re", "oracle_im", "distance"]


def cmd_oracle_check(cfg: RunConfig, fmt: str, out) -> int:
    diagnostics: list = []
    comps = run_oracle_check(cfg, diagnostics)
    ctx = working_context(cfg.digits)
    rows, worst, ok = [], 0.0, True
    for comp in comps:
        rep = comp.report
        ok = ok and rep.ok
        worst = max(worst, rep.max_distance)
        for i, j, d in rep.pairs:
            a, b = comp.mrf[i], comp.oracle[j]
            rows.append({"alpha": _num(comp.alpha), "index": str(i),
                         "mrf_re": _fixed(ctx, ctx.mpf(a.real), 14),
                         "mrf_im": _fixed(ctx, ctx.mpf(a.imag), 14),
                         "oracle_re": _fixed(ctx, ctx.mpf(b.real), 14),
                         "oracle_im": _fixed(ctx, ctx.mpf(b.imag), 14),
                         "distance": format(d, ".3e")})
        for i in rep.unmatched_a:
            diagnostics.append(f"alpha={comp.alpha}: MRF root {complex(comp.mrf[i]):.10g} unmatched")
        for j in rep.unmatched_b:
            diagnostics.append(f"alpha={comp.alpha}: oracle root {complex(comp.oracle[j]):.10g} unmatched")
    text = _csv(rows, ORACLE_HEADER) if fmt == "csv" else manifest(
        "oracle-check", cfg, rows=rows, max_distance=format(worst, ".3e"), diagnostics=diagnostics)
    _emit(text, out)
    _warn(diagnostics + [f"max distance {worst:.3e} (tol {cfg.oracle_tol:.1e})"])
    return EXIT_OK if ok else EXIT_MISMATCH


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "reproduce": cmd_reproduce,
    "oracle-check": cmd_oracle_check,
}


def _attach_negative_values(argv: list) -> list:
    """Turn ``--opt -5:5:1`` into ``--opt=-5:5:1`` so argparse keeps the value."""
    takes_value = {"--" + k.replace("_", "-") for k in OPTIONS} | {"--format", "--out", "--config"}
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in takes_value and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and argv[i + 1] not in takes_value:
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_attach_negative_values(argv))
        cfg, fmt, out = resolve(args)
        return COMMANDS[args.command](cfg, fmt, out)
    except ConfigError as exc:
        print(f"ptmrf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoTransition as exc:
        print(f"ptmrf: {exc}", file=sys.stderr)
        return EXIT_NO_TRANSITION
    except (NotConverged, BranchLost, BracketInvalid, DoubleRootDivergence, MrfError) as exc:
        print(f"ptmrf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"ptmrf: {exc}", file=sys.stderr)
        return EXIT_CONFIG
