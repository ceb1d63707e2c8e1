"""Circuit text format: parsing, validation, flattening.

Grammar (one instruction per line or ``;``-separated):

    NAME(arg, ...) target target ...
    REPEAT n { ... }
    # comment

Targets are decimal qubit indices, lookbacks ``rec[-k]`` (k >= 1), or, as an
extension used by flattened circuits, absolute records ``rec[r]`` (r >= 0).
Flattening expands REPEAT blocks in textual order and rewrites lookbacks to
absolute measurement indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

CLIFFORD_1Q = ("H", "S", "S_DAG", "X", "Y", "Z")
CLIFFORD_2Q = ("CX", "CZ", "SWAP")
ROTATIONS = ("T", "T_DAG", "R_X", "R_Y", "R_Z")
MEASUREMENTS = ("M", "MX", "MY")
NOISE_1Q = ("X_ERROR", "Y_ERROR", "Z_ERROR", "DEPOLARIZE1")
NOISE_2Q = ("DEPOLARIZE2",)
ANNOTATIONS = ("DETECTOR", "OBSERVABLE_INCLUDE", "TICK", "QUBIT_COORDS", "POSTSELECT")

OPCODES = frozenset(CLIFFORD_1Q + CLIFFORD_2Q + ROTATIONS + MEASUREMENTS
                    + NOISE_1Q + NOISE_2Q + ANNOTATIONS + ("R",))

_ARG_COUNT = {"R_X": 1, "R_Y": 1, "R_Z": 1, "X_ERROR": 1, "Y_ERROR": 1,
              "Z_ERROR": 1, "DEPOLARIZE1": 1, "DEPOLARIZE2": 1,
              "OBSERVABLE_INCLUDE": 1}


class CircuitError(ValueError):
    """Parse or validation failure, carrying a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class Rec:
    """Measurement record target: negative = lookback, non-negative = absolute."""

    value: int

    @property
    def is_lookback(self) -> bool:
        return self.value < 0

    def __str__(self) -> str:
        return f"rec[{self.value}]"


Target = Union[int, Rec]


@dataclass(frozen=True)
class Instruction:
    opcode: str
    targets: tuple[Target, ...] = ()
    args: tuple[float, ...] = ()
    line: int = 0

    def __str__(self) -> str:
        s = self.opcode
        if self.args:
            s += "(" + ", ".join(_fmt_arg(a) for a in self.args) + ")"
        for t in self.targets:
            s += f" {t}"
        return s


@dataclass(frozen=True)
class RepeatBlock:
    count: int
    body: "Circuit"
    line: int = 0


@dataclass
class Circuit:
    """Ordered instruction list; qubit_count is inferred (max target + 1)."""

    instructions: list = field(default_factory=list)

    @property
    def qubit_count(self) -> int:
        best = 0
        for ins in self.instructions:
            if isinstance(ins, RepeatBlock):
                best = max(best, ins.body.qubit_count)
            else:
                for t in ins.targets:
                    if isinstance(t, int):
                        best = max(best, t + 1)
        return best

    def __len__(self) -> int:
        return len(self.instructions)

    def serialize(self) -> str:
        lines: list[str] = []
        _serialize_into(self, lines, indent=0)
        return "\n".join(lines) + ("\n" if lines else "")

    def __str__(self) -> str:
        return self.serialize()


def _fmt_arg(a: float) -> str:
    if a == int(a) and abs(a) < 1e15:
        return str(int(a))
    return repr(a)


def _serialize_into(circuit: Circuit, lines: list[str], indent: int) -> None:
    pad = "    " * indent
    for ins in circuit.instructions:
        if isinstance(ins, RepeatBlock):
            lines.append(f"{pad}REPEAT {ins.count} {{")
            _serialize_into(ins.body, lines, indent + 1)
            lines.append(pad + "}")
        else:
            lines.append(pad + str(ins))


def _parse_target(tok: str, line: int) -> Target:
    if tok.startswith("rec["):
        if not tok.endswith("]"):
            raise CircuitError(f"malformed record target {tok!r}", line)
        inner = tok[4:-1]
        try:
            v = int(inner)
        except ValueError:
            raise CircuitError(f"malformed record target {tok!r}", line) from None
        if inner.startswith("-") and v == 0:
            raise CircuitError("lookback must be >= 1", line)
        return Rec(v)
    try:
        q = int(tok)
    except ValueError:
        raise CircuitError(f"malformed target {tok!r}", line) from None
    if q < 0:
        raise CircuitError(f"negative qubit index {q}", line)
    return q


def _validate(ins: Instruction) -> None:
    op, line = ins.opcode, ins.line
    want = _ARG_COUNT.get(op)
    if want is not None and len(ins.args) != want:
        raise CircuitError(f"{op} takes {want} argument(s), got {len(ins.args)}", line)
    if op in NOISE_1Q + NOISE_2Q:
        p = ins.args[0]
        if not 0.0 <= p <= 1.0:
            raise CircuitError(f"{op} probability {p} outside [0, 1]", line)
    if op == "POSTSELECT":
        if ins.args and ins.args[0] not in (0.0, 1.0):
            raise CircuitError("POSTSELECT argument must be 0 or 1", line)
    if op == "OBSERVABLE_INCLUDE":
        if ins.args[0] < 0 or ins.args[0] != int(ins.args[0]):
            raise CircuitError("observable index must be a non-negative integer", line)
    qubit_targets = [t for t in ins.targets if isinstance(t, int)]
    rec_targets = [t for t in ins.targets if isinstance(t, Rec)]
    if op in CLIFFORD_2Q:
        # classical control form: CX/CZ rec[-k] q (pairwise)
        if len(ins.targets) % 2:
            raise CircuitError(f"{op} expects target pairs", line)
        for a, b in zip(ins.targets[::2], ins.targets[1::2]):
            if isinstance(b, Rec):
                raise CircuitError(f"{op} second of pair must be a qubit", line)
            if isinstance(a, Rec) and op == "SWAP":
                raise CircuitError("SWAP does not take record controls", line)
            if isinstance(a, int) and isinstance(b, int) and a == b:
                raise CircuitError(f"{op} needs distinct qubits, got {a} {a}", line)
    elif op == "DEPOLARIZE2":
        if len(qubit_targets) != len(ins.targets) or len(ins.targets) % 2:
            raise CircuitError("DEPOLARIZE2 expects qubit pairs", line)
        for a, b in zip(ins.targets[::2], ins.targets[1::2]):
            if a == b:
                raise CircuitError("DEPOLARIZE2 needs distinct qubits", line)
    elif op in ("DETECTOR", "POSTSELECT"):
        if qubit_targets:
            raise CircuitError(f"{op} targets must be records", line)
        if op == "POSTSELECT" and not rec_targets:
            raise CircuitError("POSTSELECT needs at least one record target", line)
    elif op == "OBSERVABLE_INCLUDE":
        if qubit_targets:
            raise CircuitError("OBSERVABLE_INCLUDE targets must be records", line)
    elif op in ("X", "Z"):
        # plain Pauli gates, or classically controlled (rec, qubit) pairs
        if rec_targets:
            if len(ins.targets) % 2:
                raise CircuitError(f"classical {op} expects (rec, qubit) pairs", line)
            for ctrl, tgt in zip(ins.targets[::2], ins.targets[1::2]):
                if not isinstance(ctrl, Rec) or not isinstance(tgt, int):
                    raise CircuitError(f"classical {op} expects (rec, qubit) pairs", line)
    elif rec_targets:
        raise CircuitError(f"{op} does not take record targets", line)
    if op in CLIFFORD_1Q + ROTATIONS + MEASUREMENTS + NOISE_1Q + ("R",):
        if op not in ("X", "Z") and not qubit_targets:
            raise CircuitError(f"{op} needs at least one qubit target", line)


def parse_circuit(text: str) -> Circuit:
    """Parse circuit text; raises :class:`CircuitError` with line numbers."""
    root = Circuit()
    stack: list[Circuit] = [root]
    pending_repeat: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        code = raw.split("#", 1)[0]
        for chunk in code.split(";"):
            stmt = chunk.strip()
            if not stmt:
                continue
            while stmt:
                if stmt.startswith("}"):
                    if len(stack) == 1:
                        raise CircuitError("unmatched '}'", lineno)
                    stack.pop()
                    stmt = stmt[1:].strip()
                    continue
                if stmt.upper().startswith("REPEAT"):
                    rest = stmt[6:].strip()
                    if "{" not in rest:
                        raise CircuitError("REPEAT needs '{'", lineno)
                    count_str, after = rest.split("{", 1)
                    try:
                        count = int(count_str.strip())
                    except ValueError:
                        raise CircuitError(f"bad REPEAT count {count_str.strip()!r}", lineno) from None
                    if count < 1:
                        raise CircuitError(f"REPEAT count must be >= 1, got {count}", lineno)
                    body = Circuit()
                    stack[-1].instructions.append(RepeatBlock(count, body, lineno))
                    stack.append(body)
                    stmt = after.strip()
                    continue
                # ordinary instruction; may be terminated by '}' on same line
                brace = stmt.find("}")
                if brace >= 0:
                    ins_text, stmt = stmt[:brace].strip(), stmt[brace:]
                else:
                    ins_text, stmt = stmt, ""
                if ins_text:
                    stack[-1].instructions.append(_parse_instruction(ins_text, lineno))

    if len(stack) != 1:
        raise CircuitError("unclosed REPEAT block", len(text.splitlines()))
    return root


def _parse_instruction(stmt: str, lineno: int) -> Instruction:
    head = stmt.split(None, 1)
    name_part = head[0]
    rest = head[1] if len(head) > 1 else ""
    args: tuple[float, ...] = ()
    if "(" in name_part:
        if not name_part.endswith(")"):
            # arguments may contain spaces: "DEPOLARIZE1( 0.1 )"
            close = stmt.find(")")
            if close < 0:
                raise CircuitError("missing ')'", lineno)
            name_part = stmt[:close + 1]
            rest = stmt[close + 1:]
        name, arg_text = name_part.split("(", 1)
        arg_text = arg_text.rstrip(")").strip()
        if arg_text:
            try:
                args = tuple(float(a) for a in arg_text.split(","))
            except ValueError:
                raise CircuitError(f"malformed argument list ({arg_text!r})", lineno) from None
    else:
        name = name_part
    name = name.upper()
    if name not in OPCODES:
        raise CircuitError(f"unknown opcode {name!r}", lineno)
    for a in args:
        if math.isnan(a) or math.isinf(a):
            raise CircuitError(f"non-finite argument in {name}", lineno)
    targets = tuple(_parse_target(tok, lineno) for tok in rest.split())
    ins = Instruction(name, targets, args, lineno)
    _validate(ins)
    return ins


def _measurements_in(ins: Instruction) -> int:
    if ins.opcode in MEASUREMENTS:
        return sum(1 for t in ins.targets if isinstance(t, int))
    return 0


def flatten(circuit: Circuit) -> Circuit:
    """Expand REPEAT blocks and resolve lookbacks to absolute record indices.

    Idempotent; raises on lookbacks that reach past the records produced so
    far. Detector / observable / postselect record references are resolved
    the same way as classical controls.
    """
    out = Circuit()
    _flatten_into(circuit, out, record_count=0)
    return out


def _flatten_into(circuit: Circuit, out: Circuit, record_count: int) -> int:
    for ins in circuit.instructions:
        if isinstance(ins, RepeatBlock):
            for _ in range(ins.count):
                record_count = _flatten_into(ins.body, out, record_count)
            continue
        new_targets = []
        for t in ins.targets:
            if isinstance(t, Rec):
                if t.is_lookback:
                    abs_index = record_count + t.value
                    if abs_index < 0:
                        raise CircuitError(
                            f"lookback rec[{t.value}] reaches before any record",
                            ins.line)
                    new_targets.append(Rec(abs_index))
                else:
                    if t.value >= record_count:
                        raise CircuitError(
                            f"absolute record rec[{t.value}] not yet produced",
                            ins.line)
                    new_targets.append(t)
            else:
                new_targets.append(t)
        out.instructions.append(Instruction(ins.opcode, tuple(new_targets), ins.args, ins.line))
        record_count += _measurements_in(ins)
    return record_count


def instruction_count(circuit: Circuit) -> int:
    """Flattened length: sum over blocks of count * body length, plus top level."""
    total = 0
    for ins in circuit.instructions:
        if isinstance(ins, RepeatBlock):
            total += ins.count * instruction_count(ins.body)
        else:
            total += 1
    return total
