"""Minimal writer for the CPLEX LP text format.

Output is deterministic: rows and bound lines appear in insertion order and
numbers are written with 17 significant digits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

SENSES = {"<=": "<=", ">=": ">=", "=": "="}
LINE_WIDTH = 200


def num(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return format(x, ".17g")


def _terms(coeffs: dict[str, float]) -> list[str]:
    out = []
    for var, c in coeffs.items():
        if c == 0:
            continue
        body = var if abs(c) == 1 else f"{num(abs(c))} {var}"
        if c < 0:
            out.append(f"- {body}")
        else:
            out.append(f"+ {body}" if out else body)
    if not out and coeffs:
        out.append(f"0 {next(iter(coeffs))}")
    return out


def _wrap(head: str, parts: list[str]) -> list[str]:
    lines, line = [], head
    for p in parts:
        if len(line) + len(p) + 1 > LINE_WIDTH and line.strip():
            lines.append(line)
            line = "   "
        line += " " + p
    lines.append(line)
    return lines


@dataclass
class LpWriter:
    """Collects an objective, rows, bounds and integrality markers."""
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    sense: str = "Minimize"
    rows: list[tuple[str, dict[str, float], str, float]] = field(default_factory=list)
    bounds: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)
    binaries: list[str] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def add_row(self, name: str, coeffs: dict[str, float], sense: str,
                rhs: float) -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        self.rows.append((name, dict(coeffs), sense, float(rhs)))

    def set_bounds(self, var: str, lo: float | None, hi: float | None) -> None:
        self.bounds[var] = (lo, hi)

    def text(self) -> str:
        out = [f"\\ {c}" for c in self.comments]
        out.append(self.sense)
        parts = _terms(self.objective) if self.objective else []
        if self.objective_constant:
            c = self.objective_constant
            parts.append(("- " if c < 0 else ("+ " if parts else ""))
                         + num(abs(c)))
        out += _wrap(" obj:", parts or ["0"])
        out.append("Subject To")
        for name, coeffs, sense, rhs in self.rows:
            out += _wrap(f" {name}:", _terms(coeffs) + [sense, num(rhs)])
        if self.bounds:
            out.append("Bounds")
            for var, (lo, hi) in self.bounds.items():
                if lo is not None and lo == hi:
                    out.append(f" {var} = {num(lo)}")
                elif lo is None and hi is None:
                    out.append(f" {var} free")
                else:
                    lo_s = "-inf" if lo is None else num(lo)
                    hi_s = "+inf" if hi is None else num(hi)
                    out.append(f" {lo_s} <= {var} <= {hi_s}")
        if self.binaries:
            out.append("Binaries")
            out += _wrap("", self.binaries)
        out.append("End")
        return "\n".join(out) + "\n"
