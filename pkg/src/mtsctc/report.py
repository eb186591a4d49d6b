"""Check results and their human / machine renderings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .fileio import dumps


@dataclass
class Check:
    name: str
    passed: bool
    tolerance: float
    residual: float
    detail: str = ""

    @classmethod
    def below(cls, name: str, residual: float, tolerance: float, detail: str = "") -> "Check":
        residual = float(residual)
        return cls(name, bool(residual <= tolerance), float(tolerance), residual, detail)

    @classmethod
    def flag(cls, name: str, ok: bool, detail: str = "") -> "Check":
        return cls(name, bool(ok), 0.0, 0.0 if ok else 1.0, detail)


def _num(x: float):
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


@dataclass
class Report:
    command: str
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_doc(self) -> dict:
        return {
            "format": "mtsctc",
            "version": 1,
            "kind": "report",
            "command": self.command,
            "ok": self.ok,
            "checks": [{"name": c.name, "passed": c.passed, "tolerance": _num(c.tolerance),
                        "residual": _num(c.residual), "detail": c.detail} for c in self.checks],
            "results": self.results,
        }

    def render(self, fmt: str = "human") -> str:
        if fmt == "machine":
            return dumps(self.to_doc())
        lines = [f"{self.command}: {'ok' if self.ok else 'FAILED'}"]
        for key in sorted(self.results):
            lines.append(f"  {key} = {self.results[key]}")
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            extra = f"  ({c.detail})" if c.detail else ""
            lines.append(f"  [{mark}] {c.name}: residual {c.residual:.3e} (tol {c.tolerance:.1e}){extra}"
                         if c.tolerance else f"  [{mark}] {c.name}{extra}")
        return "\n".join(lines) + "\n"
