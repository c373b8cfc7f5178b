"""Read and write programs in the standard human-readable LP text format.

The writer emits a fixed, byte-stable layout: a Maximize section, one
line per constraint (two-sided rows become a `_lo`/`_hi` inequality
pair, exact equalities a single `=` line), a Bounds section listing
every variable in index order, and Generals/Binaries sections for the
integrality marks.  Coefficients are printed with `repr`, so they
round-trip to the exact same floats.  The reader accepts the subset the
writer produces (plus free-form whitespace and `\\` comments), which is
also the subset common MILP tools emit; parsed variables are indexed in
order of first appearance.
"""

from __future__ import annotations

import math
import re

from .encode import IntegerProgram, Row, VarKind, Variable
from .errors import FileFormatError

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


def _term(coefficient: float, name: str, first: bool) -> str:
    sign = "-" if coefficient < 0 else "+"
    magnitude = repr(abs(coefficient))
    if first:
        prefix = "-" if coefficient < 0 else ""
        return f"{prefix}{magnitude} {name}"
    return f"{sign} {magnitude} {name}"


def _expression(pairs, names) -> str:
    if not pairs:
        # constant expression: anchor it on the first variable
        return f"0 {names[0]}" if names else ""
    parts = []
    for position, (index, coefficient) in enumerate(pairs):
        parts.append(_term(coefficient, names[index], position == 0))
    return " ".join(parts)


def export_lp_text(program: IntegerProgram) -> str:
    """Render the program; variable names come from the encoding."""
    names = [v.name for v in program.variables]
    if len(set(names)) != len(names):
        raise FileFormatError("variable names must be unique for LP export")
    lines = ["Maximize"]
    objective = [(i, v.objective) for i, v in enumerate(program.variables) if v.objective != 0.0]
    lines.append(f" obj: {_expression(objective, names)}")
    lines.append("Subject To")
    for position, row in enumerate(program.rows):
        name = row.name or f"r{position}"
        body = _expression(list(row.coeffs), names)
        if not body:
            raise FileFormatError("cannot export a constraint row from a variable-free program")
        if row.lower is not None and row.upper is not None and row.lower == row.upper:
            lines.append(f" {name}: {body} = {row.lower!r}")
            continue
        if row.lower is not None:
            lines.append(f" {name}_lo: {body} >= {row.lower!r}")
        if row.upper is not None:
            lines.append(f" {name}_hi: {body} <= {row.upper!r}")
    lines.append("Bounds")
    for index, variable in enumerate(program.variables):
        if math.isinf(variable.upper):
            lines.append(f" {names[index]} >= {variable.lower!r}")
        else:
            lines.append(f" {variable.lower!r} <= {names[index]} <= {variable.upper!r}")
    generals = [names[i] for i, v in enumerate(program.variables) if v.kind is VarKind.INTEGER]
    binaries = [names[i] for i, v in enumerate(program.variables) if v.kind is VarKind.BINARY]
    if generals:
        lines.append("Generals")
        lines.extend(f" {name}" for name in generals)
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


class _Tokens:
    def __init__(self, text: str):
        body = "\n".join(line.split("\\")[0] for line in text.splitlines())
        self.tokens = re.findall(r"<=|>=|=|\+|-|:|[A-Za-z_][A-Za-z0-9_.]*|[0-9.eE+-]+", body)
        self.position = 0

    def peek(self) -> str | None:
        return self.tokens[self.position] if self.position < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            raise FileFormatError("unexpected end of LP text")
        self.position += 1
        return token


_SECTIONS = {
    "maximize", "maximise", "max", "minimize", "minimise", "min",
    "subject", "st", "s.t.", "bounds", "generals", "general", "gen",
    "binaries", "binary", "bin", "end",
}


def _is_number(token: str) -> bool:
    return bool(_NUMBER.fullmatch(token))


def _parse_expression(tokens: _Tokens) -> dict[str, float]:
    """Reads sign/coefficient/name terms until a relational operator or
    section keyword."""
    coeffs: dict[str, float] = {}
    sign = 1.0
    pending: float | None = None
    while True:
        token = tokens.peek()
        if token is None or token in ("<=", ">=", "=") or token.lower() in _SECTIONS:
            if pending is not None:
                raise FileFormatError("dangling coefficient in LP expression")
            return coeffs
        tokens.take()
        if token == "+":
            continue
        if token == "-":
            sign = -sign
            continue
        if _is_number(token):
            if pending is not None:
                raise FileFormatError("two consecutive numbers in LP expression")
            pending = float(token)
            continue
        coefficient = sign * (1.0 if pending is None else pending)
        coeffs[token] = coeffs.get(token, 0.0) + coefficient
        sign, pending = 1.0, None


def parse_lp_text(text: str) -> IntegerProgram:
    """Parse the writer's LP dialect back into a program."""
    tokens = _Tokens(text)
    objective: dict[str, float] = {}
    rows: list[tuple[str, dict[str, float], float | None, float | None]] = []
    order: list[str] = []
    bounds: dict[str, tuple[float, float]] = {}
    kinds: dict[str, VarKind] = {}

    def note(name: str) -> None:
        if name not in bounds:
            order.append(name)
            bounds[name] = (0.0, math.inf)

    section = None
    while tokens.peek() is not None:
        token = tokens.peek()
        low = token.lower()
        if low in ("maximize", "maximise", "max"):
            tokens.take()
            section = "objective"
            continue
        if low in ("minimize", "minimise", "min"):
            raise FileFormatError("only maximization programs are supported")
        if low in ("subject", "st", "s.t."):
            tokens.take()
            if low == "subject" and tokens.peek() and tokens.peek().lower() == "to":
                tokens.take()
            section = "rows"
            continue
        if low == "bounds":
            tokens.take()
            section = "bounds"
            continue
        if low in ("generals", "general", "gen"):
            tokens.take()
            section = "generals"
            continue
        if low in ("binaries", "binary", "bin"):
            tokens.take()
            section = "binaries"
            continue
        if low == "end":
            tokens.take()
            break

        if section == "objective":
            label = None
            if not _is_number(token) and token not in "+-" and tokens.tokens[tokens.position + 1: tokens.position + 2] == [":"]:
                label = tokens.take()
                tokens.take()
            objective.update(_parse_expression(tokens))
            for name in objective:
                note(name)
        elif section == "rows":
            label = f"r{len(rows)}"
            if not _is_number(token) and token not in "+-" and tokens.tokens[tokens.position + 1: tokens.position + 2] == [":"]:
                label = tokens.take()
                tokens.take()
            coeffs = _parse_expression(tokens)
            op = tokens.take()
            rhs_sign = 1.0
            rhs_token = tokens.take()
            if rhs_token in ("+", "-"):
                rhs_sign = -1.0 if rhs_token == "-" else 1.0
                rhs_token = tokens.take()
            if not _is_number(rhs_token):
                raise FileFormatError(f"expected number after {op!r} in row {label}")
            rhs = rhs_sign * float(rhs_token)
            for name in coeffs:
                note(name)
            if op == "<=":
                rows.append((label, coeffs, None, rhs))
            elif op == ">=":
                rows.append((label, coeffs, rhs, None))
            else:
                rows.append((label, coeffs, rhs, rhs))
        elif section == "bounds":
            # forms: "lb <= x <= ub" | "x >= lb" | "x <= ub" | "x free"
            first = tokens.take()
            if _is_number(first) or first in "+-":
                sign = 1.0
                while first in "+-":
                    sign = -sign if first == "-" else sign
                    first = tokens.take()
                lower = sign * float(first)
                if tokens.take() != "<=":
                    raise FileFormatError("malformed bounds line")
                name = tokens.take()
                note(name)
                upper = bounds[name][1]
                if tokens.peek() == "<=":
                    tokens.take()
                    upper = float(tokens.take())
                bounds[name] = (lower, upper)
            else:
                name = first
                note(name)
                follower = tokens.peek()
                if follower == "free":
                    tokens.take()
                    bounds[name] = (-math.inf, math.inf)
                elif follower in ("<=", ">=", "="):
                    op = tokens.take()
                    sign = 1.0
                    value_token = tokens.take()
                    while value_token in "+-":
                        sign = -sign if value_token == "-" else sign
                        value_token = tokens.take()
                    value = sign * float(value_token)
                    lower, upper = bounds[name]
                    if op == "<=":
                        bounds[name] = (lower, value)
                    elif op == ">=":
                        bounds[name] = (value, upper)
                    else:
                        bounds[name] = (value, value)
                else:
                    raise FileFormatError(f"malformed bounds entry near {name!r}")
        elif section in ("generals", "binaries"):
            name = tokens.take()
            note(name)
            kinds[name] = VarKind.INTEGER if section == "generals" else VarKind.BINARY
            if section == "binaries":
                lower, upper = bounds[name]
                bounds[name] = (max(lower, 0.0), min(upper, 1.0))
        else:
            raise FileFormatError(f"unexpected token {token!r} outside any LP section")

    program = IntegerProgram()
    index_of: dict[str, int] = {}
    for name in order:
        lower, upper = bounds[name]
        kind = kinds.get(name, VarKind.INTEGER)
        index_of[name] = program.add_variable(
            lower, upper, kind, objective.get(name, 0.0), name
        )
    for label, coeffs, lower, upper in rows:
        program.add_row(
            {index_of[name]: coefficient for name, coefficient in coeffs.items()},
            lower, upper, label,
        )
    return program
