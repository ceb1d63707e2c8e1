"""Lower optimized HIR to VM bytecode.

The backend walks the HIR once, keeping a mutable "adjustment" tableau W of
all virtual Clifford transformations it has absorbed so far. Each op's
generator is first conjugated by W into the current virtual coordinates,
then localized to a single axis; the localization gates are absorbed into W
and emitted as runtime instructions:

* gates whose controls sit on dormant qubits act as the identity on the
  stored state (dormant invariance), so they become frame-only updates;
* gates acting inside the active set additionally update the dense array.

Because the emitted instruction stream, the active-set trajectory, and all
index/parity operands are fixed here, per-shot execution never makes a
scheduling decision: the compiler consults no randomness and no amplitudes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .circuit import flatten, parse_circuit
from .hir import (
    CondPauli,
    DetectorDef,
    HirProgram,
    Meas,
    NoiseEvent,
    ObservableDef,
    PostSelectOp,
    Rot,
    lower_to_hir,
    peephole_pass,
    schedule_pass,
)
from .pauli import CliffordTableau, CompileStats, PauliString

_TOL = 1e-12


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class LocalizationResult:
    """Virtual Clifford word compressing a Pauli to one axis.

    Conjugating the input by ``gates`` (in order) yields sign * P_axis with
    P in {X, Z} on qubit ``axis``.
    """

    gates: tuple
    axis: int
    basis: str
    sign: int


def localize(pauli: PauliString, active_set=frozenset()) -> LocalizationResult:
    """Greedy single-axis compression of a Hermitian Pauli.

    Pivot choice: X-support prefers a dormant pivot (promotion is forced
    there anyway and keeps every control dormant); pure-Z support prefers an
    active pivot, which avoids promotion entirely. Emitted controlled gates
    then never have an active control with a dormant target.
    """
    if pauli.weight() == 0:
        raise CompileError("cannot localize the identity")
    cur = pauli.copy()
    gates: list[tuple] = []

    def emit(g: str, a: int, b: int | None = None) -> None:
        gates.append((g, a, b))
        cur.conjugate_gate(g, a, b)

    xs = [int(q) for q in np.flatnonzero(cur.x)]
    if xs:
        dormant = [q for q in xs if q not in active_set]
        v = dormant[0] if dormant else xs[0]
        for q in xs:
            if q != v:
                emit("CX", v, q)
        for q in [int(j) for j in np.flatnonzero(cur.z)]:
            if q != v:
                emit("CZ", v, q)
        if cur.z[v]:
            emit("S", v)
        basis = "X"
    else:
        zs = [int(q) for q in np.flatnonzero(cur.z)]
        act = [q for q in zs if q in active_set]
        v = act[0] if act else zs[0]
        for q in zs:
            if q != v:
                emit("CX", q, v)
        basis = "Z"
    if cur.weight() != 1:
        raise CompileError("localization failed to reach a single axis")
    return LocalizationResult(tuple(gates), v, basis, cur.hermitian_sign())


# -- bytecode instructions ----------------------------------------------------


@dataclass(frozen=True)
class FrameGates:
    """Conjugate the runtime Pauli frame by a fixed local Clifford word."""

    gates: tuple  # ((gate, a, b), ...)


@dataclass(frozen=True)
class ArrayGate:
    """Local Clifford acting inside the active set: array kernel + frame."""

    gate: str     # CX | CZ | S | S_DAG | H
    va: int       # virtual qubits (frame side)
    vb: int | None
    axa: int      # axis positions (array side)
    axb: int | None
    size: int     # 2^k at this point


@dataclass(frozen=True)
class Expand:
    """Promote a dormant qubit: array <- array (x) |+>, optional fused Z-rot."""

    virt: int
    axis: int
    size: int          # 2^k before expansion
    angle: float = 0.0
    fused: bool = False


@dataclass(frozen=True)
class GammaRot:
    """Dormant-Z rotation: pure scalar phase, sign from the frame parity."""

    virt: int
    angle: float


@dataclass(frozen=True)
class ArrayRot:
    """Diagonal Z-axis rotation over the active array."""

    virt: int
    axis: int
    angle: float
    size: int


@dataclass(frozen=True)
class MeasDormantStatic:
    virt: int
    record: int
    flip: int


@dataclass(frozen=True)
class MeasDormantRandom:
    virt: int
    record: int
    flip: int


@dataclass(frozen=True)
class MeasActive:
    virt: int
    axis: int
    record: int
    flip: int
    size: int


@dataclass(frozen=True)
class Retire:
    """Drop a just-measured active axis and return it to the dormant set."""

    virt: int
    axis: int
    size: int                  # 2^k before retiring
    idx0: np.ndarray | None    # gather indices for branch 0 (None = slice)
    idx1: np.ndarray | None


@dataclass(frozen=True)
class MeasCollapse:
    """Fused basis change + active interfering measurement + retire.

    ``u`` is the composed 2x2 unitary of the preceding single-axis array
    gates (identity when the measurement was already Z-basis); ``pre_gates``
    carries their frame-bit updates. One traversal computes the branch
    weight and writes the collapsed, compacted array.
    """

    virt: int
    axis: int
    record: int
    flip: int
    size: int
    u: tuple                   # ((u00, u01), (u10, u11)) complex
    pre_gates: tuple
    idx0: np.ndarray | None
    idx1: np.ndarray | None


@dataclass(frozen=True)
class CondFrame:
    """Record-conditioned Pauli multiplied into the frame."""

    xmask: np.ndarray
    zmask: np.ndarray
    record: int


@dataclass(frozen=True)
class NoiseBlock:
    lo: int
    hi: int


@dataclass(frozen=True)
class DetectorIns:
    index: int
    records: tuple


@dataclass(frozen=True)
class ObservableIns:
    index: int
    records: tuple


@dataclass(frozen=True)
class PostSelectIns:
    kind: str
    ref: int
    required: int


@dataclass
class SiteTable:
    """Per-site trigger probability and case decomposition."""

    prob: float
    case_cum: list          # cumulative masses, last == prob
    case_x: list            # uint8 mask arrays
    case_z: list


@dataclass
class BytecodeProgram:
    n: int
    instrs: list
    active_schedule: list        # k after each instruction
    k_max: int
    sites: list                  # SiteTable per noise site
    cum_hazard: list             # length len(sites)+1, prefix -log1p(-p)
    record_count: int
    user_records: tuple
    hidden_records: tuple
    num_detectors: int
    num_observables: int
    final_tableau: CliffordTableau
    final_active: tuple
    stats: CompileStats

    def dump(self) -> str:
        lines = []
        for ins, k in zip(self.instrs, self.active_schedule):
            lines.append(_render_instr(ins, self))
        return "\n".join(lines) + ("\n" if lines else "")

    def fingerprint(self) -> str:
        return self.dump() + repr(self.active_schedule)

    def __getstate__(self):
        # runtime caches (dispatch closures, index arrays) do not pickle
        return {k: v for k, v in self.__dict__.items() if not k.startswith("_")}

    def __setstate__(self, state):
        self.__dict__.update(state)


def _rec_name(prog: BytecodeProgram, record: int) -> str:
    try:
        return f"rec[{prog.user_records.index(record)}]"
    except ValueError:
        return f"tmp[{record}]"


def _render_instr(ins, prog: BytecodeProgram) -> str:
    if isinstance(ins, FrameGates):
        body = " ".join(f"{g} {a}" if b is None else f"{g} {a} {b}" for g, a, b in ins.gates)
        return f"FRAME_CLIFFORD {body}"
    if isinstance(ins, ArrayGate):
        tgt = f"{ins.axa}" if ins.axb is None else f"{ins.axa} {ins.axb}"
        return f"ARRAY_{ins.gate} {tgt}"
    if isinstance(ins, Expand):
        if ins.fused and abs(ins.angle - math.pi / 8) < 1e-12:
            return f"EXPAND_T {ins.axis}"
        if ins.fused and abs(ins.angle + math.pi / 8) < 1e-12:
            return f"EXPAND_T_DAG {ins.axis}"
        if ins.fused:
            return f"EXPAND_ROT({ins.angle:.6g}) {ins.axis}"
        return f"EXPAND {ins.axis}"
    if isinstance(ins, GammaRot):
        return f"GAMMA_ROT({ins.angle:.6g}) q{ins.virt}"
    if isinstance(ins, ArrayRot):
        if abs(ins.angle - math.pi / 8) < 1e-12:
            return f"ARRAY_T {ins.axis}"
        if abs(ins.angle + math.pi / 8) < 1e-12:
            return f"ARRAY_T_DAG {ins.axis}"
        return f"ARRAY_ROT({ins.angle:.6g}) {ins.axis}"
    if isinstance(ins, MeasDormantStatic):
        return f"MEAS_DORMANT_STATIC {ins.virt} -> {_rec_name(prog, ins.record)}"
    if isinstance(ins, MeasDormantRandom):
        return f"MEAS_DORMANT_RANDOM {ins.virt} -> {_rec_name(prog, ins.record)}"
    if isinstance(ins, MeasActive):
        return f"MEAS_ACTIVE_INTERFERE {ins.axis} -> {_rec_name(prog, ins.record)}"
    if isinstance(ins, MeasCollapse):
        basis = "".join(g for g, _, _ in ins.pre_gates) or "Z"
        return (f"MEAS_COLLAPSE[{basis}] {ins.axis} -> {_rec_name(prog, ins.record)}")
    if isinstance(ins, Retire):
        return f"RETIRE {ins.axis}"
    if isinstance(ins, CondFrame):
        return f"COND_FRAME_PAULI if {_rec_name(prog, ins.record)}"
    if isinstance(ins, NoiseBlock):
        return f"NOISE_BLOCK sites=[{ins.lo}..{ins.hi})"
    if isinstance(ins, DetectorIns):
        return f"DETECTOR D{ins.index}"
    if isinstance(ins, ObservableIns):
        return f"OBSERVABLE L{ins.index}"
    if isinstance(ins, PostSelectIns):
        where = f"D{ins.ref}" if ins.kind == "detector" else _rec_name(prog, ins.ref)
        return f"POSTSELECT {where} == {ins.required}"
    return repr(ins)


def _gate_is_frame_only(gate: str, a: int, b: int | None, active: dict) -> bool:
    if gate == "CX":
        if a not in active:
            return True
        if b not in active:
            raise CompileError("localization produced an entangling CX into a dormant qubit")
        return False
    if gate == "CZ":
        return a not in active or b not in active
    return a not in active


def plan_and_emit(hir: HirProgram, postselect_detectors=()) -> BytecodeProgram:
    """Classify every HIR op against the planned active set and emit bytecode."""
    n = hir.n
    adj = CliffordTableau(n)     # accumulated virtual adjustment W
    active: dict[int, int] = {}  # virtual qubit -> axis position
    instrs: list = []
    schedule: list[int] = []
    k = 0
    k_max = 0
    sites: list[SiteTable] = []
    m_active = 0
    rot_count = 0
    postselect_detectors = frozenset(postselect_detectors)

    def emit(ins) -> None:
        instrs.append(ins)
        schedule.append(len(active))

    def absorb_and_emit_gates(gates) -> None:
        pending: list[tuple] = []
        for g, a, b in gates:
            frame_only = _gate_is_frame_only(g, a, b, active)
            adj.absorb_left(g, a, b)
            if frame_only:
                pending.append((g, a, b))
            else:
                if pending:
                    emit(FrameGates(tuple(pending)))
                    pending = []
                emit(ArrayGate(g, a, b, active[a], None if b is None else active[b],
                               1 << len(active)))
        if pending:
            emit(FrameGates(tuple(pending)))

    def localize_through(word: PauliString):
        mapped = adj.forward_map(word)
        sign = mapped.hermitian_sign()
        loc = localize(mapped.hermitian_word(), active.keys())
        absorb_and_emit_gates(loc.gates)
        return loc, sign * loc.sign

    for op in hir.ops:
        if isinstance(op, Rot):
            rot_count += 1
            loc, sign = localize_through(op.generator)
            theta = op.angle * sign
            v = loc.axis
            if v in active:
                if loc.basis == "X":
                    absorb_and_emit_gates((("H", v, None),))
                emit(ArrayRot(v, active[v], theta, 1 << len(active)))
            elif loc.basis == "Z":
                emit(GammaRot(v, theta))
            else:
                adj.absorb_left("H", v)
                emit(FrameGates((("H", v, None),)))
                axis = len(active)
                size_before = 1 << len(active)
                active[v] = axis
                instrs.append(Expand(v, axis, size_before))
                schedule.append(len(active))
                instrs.append(ArrayRot(v, axis, theta, 1 << len(active)))
                schedule.append(len(active))
                k_max = max(k_max, len(active))
        elif isinstance(op, Meas):
            loc, sign = localize_through(op.observable)
            flip = int(op.flip) ^ (1 if sign < 0 else 0)
            v = loc.axis
            if v not in active:
                if loc.basis == "Z":
                    emit(MeasDormantStatic(v, op.record, flip))
                else:
                    emit(MeasDormantRandom(v, op.record, flip))
                    adj.absorb_left("H", v)
            else:
                if loc.basis == "X":
                    absorb_and_emit_gates((("H", v, None),))
                axis = active[v]
                m_active += 1
                emit(MeasActive(v, axis, op.record, flip, 1 << len(active)))
                size = 1 << len(active)
                if axis == len(active) - 1:
                    idx0 = idx1 = None
                else:
                    all_idx = np.arange(size)
                    idx0 = all_idx[(all_idx >> axis) & 1 == 0]
                    idx1 = all_idx[(all_idx >> axis) & 1 == 1]
                del active[v]
                for u, ax in list(active.items()):
                    if ax > axis:
                        active[u] = ax - 1
                instrs.append(Retire(v, axis, size, idx0, idx1))
                schedule.append(len(active))
        elif isinstance(op, NoiseEvent):
            if op.site != len(sites):
                raise CompileError("noise sites out of order")
            cum = 0.0
            case_cum, case_x, case_z = [], [], []
            for mass, pauli in op.cases:
                mapped = adj.forward_map(pauli)
                cum += mass
                case_cum.append(cum)
                case_x.append(mapped.x.copy())
                case_z.append(mapped.z.copy())
            sites.append(SiteTable(cum, case_cum, case_x, case_z))
            emit(NoiseBlock(op.site, op.site + 1))
        elif isinstance(op, CondPauli):
            mapped = adj.forward_map(op.pauli)
            emit(CondFrame(mapped.x.copy(), mapped.z.copy(), op.record))
        elif isinstance(op, DetectorDef):
            emit(DetectorIns(op.index, op.records))
            if op.index in postselect_detectors:
                emit(PostSelectIns("detector", op.index, 0))
        elif isinstance(op, ObservableDef):
            emit(ObservableIns(op.index, op.records))
        elif isinstance(op, PostSelectOp):
            emit(PostSelectIns(op.kind, op.ref, op.required))
        else:
            raise CompileError(f"cannot emit HIR op {op!r}")
        k_max = max(k_max, len(active))

    cum_hazard = [0.0]
    for s in sites:
        p = min(s.prob, 1.0)
        # certain sites fire unconditionally via the block plan; a zero
        # increment keeps every skip segment's hazard finite
        inc = 0.0 if p >= 1.0 else -math.log1p(-p)
        cum_hazard.append(cum_hazard[-1] + inc)

    final_tableau = hir.final_frame.compose(adj.inverse())
    final_active = tuple(v for v, ax in sorted(active.items(), key=lambda kv: kv[1]))
    hidden = tuple(sorted(set(range(hir.record_count)) - set(hir.user_records)))
    stats = replace(hir.stats, active_measurements=m_active, k_max=k_max,
                    nonclifford_rotations=rot_count)
    return BytecodeProgram(
        n=n, instrs=instrs, active_schedule=schedule, k_max=k_max,
        sites=sites, cum_hazard=cum_hazard,
        record_count=hir.record_count, user_records=hir.user_records,
        hidden_records=hidden, num_detectors=hir.num_detectors,
        num_observables=hir.num_observables,
        final_tableau=final_tableau, final_active=final_active, stats=stats)


def plan_metrics(hir: HirProgram) -> tuple[int, int]:
    """(k_max, total active-array work): the scheduling objective.

    Work counts the sweep size of every instruction that touches the dense
    array, so moving frame-only operations between k-levels is free.
    """
    prog = plan_and_emit(hir)
    work = sum(getattr(ins, "size", 0) for ins in prog.instrs)
    return prog.k_max, work


_GATE_2X2 = {
    "S": ((1, 0), (0, 1j)),
    "S_DAG": ((1, 0), (0, -1j)),
    "H": ((math.sqrt(0.5), math.sqrt(0.5)), (math.sqrt(0.5), -math.sqrt(0.5))),
}


def _try_fuse_collapse(src, ks, i):
    """Match [single-axis ArrayGates...] MeasActive Retire at position i."""
    gates = []
    j = i
    while (j < len(src) and isinstance(src[j], ArrayGate)
           and src[j].axb is None and src[j].gate in _GATE_2X2):
        gates.append(src[j])
        j += 1
    if (j + 1 >= len(src) or not isinstance(src[j], MeasActive)
            or not isinstance(src[j + 1], Retire)):
        return None
    meas, retire = src[j], src[j + 1]
    if retire.axis != meas.axis or retire.virt != meas.virt:
        return None
    for g in gates:
        if g.axa != meas.axis or g.va != meas.virt:
            return None
    u = ((1 + 0j, 0j), (0j, 1 + 0j))
    for g in gates:
        m = _GATE_2X2[g.gate]
        u = (
            (m[0][0] * u[0][0] + m[0][1] * u[1][0], m[0][0] * u[0][1] + m[0][1] * u[1][1]),
            (m[1][0] * u[0][0] + m[1][1] * u[1][0], m[1][0] * u[0][1] + m[1][1] * u[1][1]),
        )
    fused = MeasCollapse(
        virt=meas.virt, axis=meas.axis, record=meas.record, flip=meas.flip,
        size=meas.size, u=u,
        pre_gates=tuple((g.gate, g.va, None) for g in gates),
        idx0=retire.idx0, idx1=retire.idx1)
    return fused, ks[j + 1], j + 2


def optimize_bytecode(prog: BytecodeProgram) -> BytecodeProgram:
    """Dispatch-level rewrites: fuse expansion rotations and measurement
    collapses, coalesce noise, merge consecutive frame updates. Full-array
    traversals never increase."""
    instrs: list = []
    schedule: list[int] = []
    i = 0
    src, ks = prog.instrs, prog.active_schedule
    while i < len(src):
        ins = src[i]
        if (isinstance(ins, Expand) and i + 1 < len(src)
                and isinstance(src[i + 1], ArrayRot)
                and src[i + 1].axis == ins.axis and src[i + 1].virt == ins.virt):
            instrs.append(Expand(ins.virt, ins.axis, ins.size, src[i + 1].angle, fused=True))
            schedule.append(ks[i + 1])
            i += 2
            continue
        if isinstance(ins, (ArrayGate, MeasActive)):
            hit = _try_fuse_collapse(src, ks, i)
            if hit is not None:
                fused, k_after, nxt = hit
                instrs.append(fused)
                schedule.append(k_after)
                i = nxt
                continue
        if isinstance(ins, NoiseBlock):
            hi = ins.hi
            j = i + 1
            while j < len(src) and isinstance(src[j], NoiseBlock) and src[j].lo == hi:
                hi = src[j].hi
                j += 1
            instrs.append(NoiseBlock(ins.lo, hi))
            schedule.append(ks[j - 1])
            i = j
            continue
        if isinstance(ins, FrameGates):
            gates = list(ins.gates)
            j = i + 1
            while j < len(src) and isinstance(src[j], FrameGates):
                gates.extend(src[j].gates)
                j += 1
            instrs.append(FrameGates(tuple(gates)))
            schedule.append(ks[j - 1])
            i = j
            continue
        instrs.append(ins)
        schedule.append(ks[i])
        i += 1
    return replace(prog, instrs=instrs, active_schedule=schedule)


def compile_circuit(circuit_or_text, optimize: bool = True,
                    postselect_detectors=()) -> BytecodeProgram:
    """Full pipeline: parse/flatten -> HIR -> passes -> bytecode -> optimize."""
    if isinstance(circuit_or_text, str):
        circuit = parse_circuit(circuit_or_text)
    else:
        circuit = circuit_or_text
    circuit = flatten(circuit)
    hir = lower_to_hir(circuit)
    if optimize:
        hir = peephole_pass(hir)
        hir = schedule_pass(hir)
    prog = plan_and_emit(hir, postselect_detectors=postselect_detectors)
    if optimize:
        prog = optimize_bytecode(prog)
    return prog
