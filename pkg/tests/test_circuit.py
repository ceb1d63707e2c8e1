"""Parser, validator, and flattener behavior."""
from __future__ import annotations

import numpy as np
import pytest

from framesim.circuit import (
    Circuit,
    CircuitError,
    Instruction,
    Rec,
    RepeatBlock,
    flatten,
    instruction_count,
    parse_circuit,
)

MIRROR_TEXT = """\
H 0
T 0
T 0
T 0
CX 0 1
DEPOLARIZE1(0.001) 0 1
CX 0 1
T_DAG 0
H 0
M 0 1
"""


def test_parse_mirror_circuit():
    c = parse_circuit(MIRROR_TEXT)
    assert len(c) == 10
    assert c.qubit_count == 2
    assert c.instructions[5].opcode == "DEPOLARIZE1"
    assert c.instructions[5].args == (0.001,)
    assert c.instructions[9].targets == (0, 1)


def test_parse_empty():
    c = parse_circuit("")
    assert len(c) == 0
    assert c.qubit_count == 0


def test_parse_repeat_flattens():
    c = flatten(parse_circuit("REPEAT 3 { X 0 }"))
    assert [i.opcode for i in c.instructions] == ["X", "X", "X"]


def test_parse_comments_and_semicolons():
    c = parse_circuit("H 0  # prepare\nT 0; T 0\n")
    assert [i.opcode for i in c.instructions] == ["H", "T", "T"]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(CircuitError, match="line 2"):
        parse_circuit("H 0\nBADOP 1\n")
    with pytest.raises(CircuitError, match="unknown opcode"):
        parse_circuit("FOO 0")
    with pytest.raises(CircuitError, match="negative"):
        parse_circuit("H -1")
    with pytest.raises(CircuitError, match="malformed"):
        parse_circuit("H zero")
    with pytest.raises(CircuitError, match="argument"):
        parse_circuit("DEPOLARIZE1(a) 0")


def test_probability_validation():
    with pytest.raises(CircuitError, match="outside"):
        parse_circuit("X_ERROR(1.5) 0")
    with pytest.raises(CircuitError, match="outside"):
        parse_circuit("DEPOLARIZE1(-0.1) 0")
    # uniform-limit depolarizing up to 1 is allowed
    parse_circuit("DEPOLARIZE1(0.9) 0")


def test_repeat_validation():
    with pytest.raises(CircuitError, match="count"):
        parse_circuit("REPEAT 0 { X 0 }")
    with pytest.raises(CircuitError, match="unclosed"):
        parse_circuit("REPEAT 2 { X 0")
    with pytest.raises(CircuitError, match="unmatched"):
        parse_circuit("}")


def test_rec_targets():
    c = parse_circuit("M 0\nCX rec[-1] 1\n")
    assert c.instructions[1].targets[0] == Rec(-1)
    with pytest.raises(CircuitError, match="lookback must be >= 1"):
        parse_circuit("CX rec[-0] 1")
    # absolute records are accepted syntax but must already exist at flatten
    with pytest.raises(CircuitError, match="not yet produced"):
        flatten(parse_circuit("CX rec[0] 1"))


def test_flatten_identity_on_flat_circuit():
    c = parse_circuit(MIRROR_TEXT)
    f = flatten(c)
    assert [str(i) for i in f.instructions] == [str(i) for i in c.instructions]


def test_flatten_resolves_lookbacks():
    c = parse_circuit("REPEAT 2 { M 0; CX rec[-1] 1 }")
    f = flatten(c)
    assert f.instructions[1].targets[0] == Rec(0)
    assert f.instructions[3].targets[0] == Rec(2 - 1)


def test_flatten_nested_repeat():
    c = parse_circuit("REPEAT 2 { REPEAT 2 { X 0 } }")
    f = flatten(c)
    assert [i.opcode for i in f.instructions] == ["X"] * 4


def test_flatten_idempotent():
    c = parse_circuit("REPEAT 2 { M 0; CX rec[-1] 1 }\nDETECTOR rec[-1]")
    f = flatten(c)
    assert flatten(f).serialize() == f.serialize()


def test_flatten_lookback_out_of_range():
    with pytest.raises(CircuitError, match="lookback"):
        flatten(parse_circuit("M 0\nCX rec[-2] 1"))


def test_instruction_count_formula():
    c = parse_circuit("H 0\nREPEAT 3 { X 0; REPEAT 2 { Z 1 } }\nM 0")
    assert instruction_count(c) == 1 + 3 * (1 + 2 * 1) + 1
    assert len(flatten(c)) == instruction_count(c)


def test_roundtrip_fixed_point():
    rng = np.random.default_rng(5)
    for _ in range(25):
        c = _random_circuit_text(rng)
        p1 = parse_circuit(c)
        p2 = parse_circuit(p1.serialize())
        assert p1.serialize() == p2.serialize()
        f = flatten(p1)
        assert parse_circuit(f.serialize()).serialize() == f.serialize()


def _random_circuit_text(rng) -> str:
    lines = []
    n = int(rng.integers(1, 5))
    measured = 0
    for _ in range(int(rng.integers(1, 20))):
        roll = rng.random()
        q = int(rng.integers(0, n))
        if roll < 0.4:
            g = str(rng.choice(["H", "S", "S_DAG", "X", "Y", "Z", "T", "T_DAG"]))
            lines.append(f"{g} {q}")
        elif roll < 0.55 and n > 1:
            q2 = int(rng.integers(0, n - 1))
            q2 = q2 + 1 if q2 >= q else q2
            lines.append(f"{str(rng.choice(['CX', 'CZ']))} {q} {q2}")
        elif roll < 0.7:
            lines.append(f"R_Z({float(rng.uniform(0, 3)):.3f}) {q}")
        elif roll < 0.8:
            lines.append(f"X_ERROR({float(rng.uniform(0, 0.2)):.4f}) {q}")
        elif roll < 0.9:
            lines.append(f"M {q}")
            measured += 1
        elif measured:
            lines.append(f"DETECTOR rec[-{int(rng.integers(1, measured + 1))}]")
    return "\n".join(lines) + "\n"


def test_qubit_coords_accepted_and_ignored():
    c = parse_circuit("QUBIT_COORDS(0, 1) 0\nH 0\n")
    assert c.instructions[0].opcode == "QUBIT_COORDS"


def test_detector_with_coordinate_args():
    c = parse_circuit("M 0\nDETECTOR(1, 2) rec[-1]")
    assert c.instructions[1].args == (1.0, 2.0)


def test_postselect_forms():
    c = parse_circuit("M 0\nPOSTSELECT rec[-1]\nM 1\nPOSTSELECT(1) rec[-1]")
    assert c.instructions[1].args == ()
    assert c.instructions[3].args == (1.0,)
    with pytest.raises(CircuitError):
        parse_circuit("POSTSELECT 0")
