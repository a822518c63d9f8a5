import io
from decimal import Decimal

import pytest

from ptmrf.fixtures import (
    FULL_ORDER_FOOTNOTES,
    check_rows,
    literal_matches,
    load_tables,
    unit_in_last_place,
    within_bounds,
)

ROWS = load_tables()


def pick(table, alpha, branch, footnote=None):
    for r in ROWS:
        if r.table == table and r.alpha == alpha and r.branch == branch:
            if footnote is None or r.footnote == footnote:
                return r
    raise LookupError((table, alpha, branch))


def test_bundled_tables_load():
    assert {r.table for r in ROWS} == {"I", "II", "III", "IV", "V", "VI"}
    assert all(r.provenance.startswith("Table ") for r in ROWS)
    assert {r.j for r in ROWS} == {50, 100}
    assert all(r.j == 100 for r in ROWS if r.table in ("V", "VI"))
    assert all(r.has_literal or r.has_bounds for r in ROWS)


def test_full_order_bound_rows_present():
    flagged = [r for r in ROWS if r.footnote in FULL_ORDER_FOOTNOTES]
    assert flagged and all(r.has_bounds for r in flagged)
    fn3 = pick("I", "0.0", "E1", footnote="3")
    assert not fn3.has_literal
    assert fn3.re_lo == "1.15626707198811324" and fn3.re_hi == "1.15626707198811335"


def test_only_one_excluded_literal():
    excluded = [r for r in ROWS if r.excluded]
    assert len(excluded) == 1
    assert (excluded[0].table, excluded[0].alpha, excluded[0].branch) == ("VI", "5.0", "E2")


def test_load_from_stream():
    text = ROWS[0].__class__.__dataclass_fields__.keys()
    header = ",".join(text)
    body = "V,,-5.0,E1,1.3433431987,2.9073906160,100,,,,,conjugate pair,Table V\n"
    rows = load_tables(io.StringIO(header + "\n" + body))
    assert len(rows) == 1 and rows[0].is_complex and rows[0].j == 100
    assert rows[0].seed == complex(1.3433431987, 2.907390616)


def test_unit_in_last_place():
    assert unit_in_last_place("1.3433431987") == Decimal("1e-10")
    assert unit_in_last_place("6.3") == Decimal("0.1")


def test_literal_tolerance_is_one_ulp():
    row = pick("V", "-5.0", "E1")
    assert literal_matches(complex(1.3433431987, -2.9073906160), row)
    assert literal_matches(complex(1.3433431988, 2.9073906161), row)
    assert not literal_matches(complex(1.3433431990, 2.9073906160), row)


def test_bounds_are_strict():
    row = pick("I", "0.0", "E1", footnote="3")
    assert within_bounds("1.1562670719881133", row)
    assert not within_bounds("1.15626707198811324", row)
    assert not within_bounds("1.15626707198811291", row)


def test_check_of_full_order_literal_row():
    [res] = check_rows([pick("V", "-3.0", "E1")])
    assert res.literal_ok and res.passed


def test_check_of_low_order_row_is_informational():
    row = next(r for r in ROWS if r.table == "III" and r.has_literal and not r.footnote)
    [res] = check_rows([row])
    assert res.literal_ok is not None
    assert res.passed or res.bound_ok is False
