"""Structured pass/fail evidence and its CSV form."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Iterable

CSV_COLUMNS = ("check_id", "seed", "case", "residual", "tolerance", "pass",
               "expected", "digest", "suite", "note")


def digest(*parts) -> str:
    """Short stable hash of the inputs that define a case."""
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return h.hexdigest()[:12]


@dataclass(frozen=True)
class Case:
    """One check run on one input.

    ``expected`` is ``"pass"`` for ordinary checks and ``"fail"`` for checks
    that document a known failure (a non-conforming family, a counterexample);
    such a case counts as a reproduction when ``passed`` is False.
    """

    check_id: str
    case: str
    passed: bool
    residual: float
    tolerance: float
    digest: str = ""
    note: str = ""
    expected: str = "pass"

    @property
    def unexpected(self) -> bool:
        return self.passed != (self.expected == "pass")

    @property
    def sort_key(self):
        return (self.check_id, self.case)


@dataclass(frozen=True)
class VerifyReport:
    suite: str
    cases: tuple[Case, ...]
    seed: int
    elapsed: float = field(default=0.0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(sorted(self.cases, key=lambda c: c.sort_key)))

    @property
    def ok(self) -> bool:
        return not self.unexpected_failures

    @property
    def unexpected_failures(self) -> list[Case]:
        return [c for c in self.cases if c.unexpected]

    @property
    def expected_failures(self) -> list[Case]:
        return [c for c in self.cases if c.expected == "fail" and not c.passed]

    def failing(self) -> list[Case]:
        return [c for c in self.cases if not c.passed]

    def check_ids(self) -> set[str]:
        return {c.check_id for c in self.cases}

    def merged(self, other: "VerifyReport", suite: str | None = None) -> "VerifyReport":
        return VerifyReport(suite or f"{self.suite}+{other.suite}",
                            self.cases + other.cases, self.seed, self.elapsed + other.elapsed)

    def stats(self) -> dict[str, dict]:
        """Per check id: case count, failures, max and p99 residual."""
        out: dict[str, dict] = {}
        for c in self.cases:
            out.setdefault(c.check_id, []).append(c)
        res = {}
        for cid, cs in out.items():
            vals = sorted(abs(c.residual) for c in cs if math.isfinite(c.residual))
            p99 = vals[min(len(vals) - 1, int(math.ceil(0.99 * len(vals))) - 1)] if vals else math.nan
            res[cid] = {
                "cases": len(cs),
                "failures": sum(not c.passed for c in cs),
                "unexpected": sum(c.unexpected for c in cs),
                "max_residual": vals[-1] if vals else math.nan,
                "p99_residual": p99,
            }
        return res

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cases:
            w.writerow([c.check_id, self.seed, c.case, repr(float(c.residual)),
                        repr(float(c.tolerance)), "true" if c.passed else "false",
                        c.expected, c.digest, self.suite, c.note])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, elapsed: float = 0.0) -> "VerifyReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("report CSV has no rows")
        cases = [Case(r["check_id"], r["case"], r["pass"] == "true", float(r["residual"]),
                      float(r["tolerance"]), r["digest"], r["note"], r["expected"])
                 for r in rows]
        return cls(rows[0]["suite"], tuple(cases), int(rows[0]["seed"]), elapsed)

    def summary(self, digits: int = 3) -> str:
        lines = [f"suite {self.suite}  seed {self.seed}  cases {len(self.cases)}  "
                 f"unexpected failures {len(self.unexpected_failures)}"]
        for cid, s in sorted(self.stats().items()):
            flag = "ok" if s["unexpected"] == 0 else "FAIL"
            lines.append(f"  {flag:4s} {cid:40s} n={s['cases']:<5d} fail={s['failures']:<4d} "
                         f"max={s['max_residual']:.{digits}g} p99={s['p99_residual']:.{digits}g}")
        for c in self.expected_failures:
            lines.append(f"  expected-failure reproduced: {c.check_id} [{c.case}] {c.note}")
        for c in self.unexpected_failures:
            lines.append(f"  UNEXPECTED: {c.check_id} [{c.case}] residual={c.residual:.{digits}g} "
                         f"tol={c.tolerance:.{digits}g} {c.note}")
        return "\n".join(lines)


def combine(suite: str, seed: int, reports: Iterable[VerifyReport]) -> VerifyReport:
    cases: list[Case] = []
    elapsed = 0.0
    for r in reports:
        cases.extend(r.cases)
        elapsed += r.elapsed
    return VerifyReport(suite, tuple(cases), seed, elapsed)
