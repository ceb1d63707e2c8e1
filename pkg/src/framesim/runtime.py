"""Per-shot bytecode execution over the factored runtime state.

A shot owns one preallocated :class:`ShotState`: a dense active array of
capacity 2^k_max, two N-bit frame vectors, a global scalar, record buffers,
and a counter-based RNG stream. ``run_shot`` resets that storage and walks
the instruction list; nothing allocates per shot beyond small Python
scaffolding, and nothing consults the amplitudes to decide control flow
(the compiler fixed the schedule).

The dispatch loop is threaded code: each instruction is specialized once
into a closure with its operands (axis strides, parity qubits, precomputed
rotation phases) bound, so the hot path is a list of calls. Array kernels
switch between scalar loops (small active arrays, where numpy call overhead
dominates) and vectorized numpy sweeps.
"""
from __future__ import annotations

import cmath
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .backend import (
    ArrayGate,
    ArrayRot,
    BytecodeProgram,
    CondFrame,
    DetectorIns,
    Expand,
    FrameGates,
    GammaRot,
    MeasActive,
    MeasCollapse,
    MeasDormantRandom,
    MeasDormantStatic,
    NoiseBlock,
    ObservableIns,
    PostSelectIns,
    Retire,
)
from .pauli import PauliString
from .rng import ShotRng

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
BRANCH_FLOOR = 1e-12
_SMALL = 8  # scalar-loop threshold for array kernels


class ShotError(RuntimeError):
    pass


class _Halt(Exception):
    """Raised by a failed postselect check to stop the shot immediately."""


@dataclass(slots=True)
class ShotRecord:
    measurements: np.ndarray
    detectors: np.ndarray
    observables: np.ndarray
    accepted: bool
    weight: float


_EMPTY_BITS = np.zeros(0, dtype=np.uint8)


class ShotState:
    """Reusable per-shot storage; capacity fixed by the compiled program."""

    __slots__ = ("n", "k", "k_max", "buf", "scratch", "fbuf", "frame_x", "frame_z",
                 "gamma", "records", "detectors", "observables", "weight",
                 "accepted", "rng", "renormalize", "forced_faults",
                 "forced_outcomes", "active_virtuals", "_branch", "_zero_records")

    def __init__(self, prog: BytecodeProgram, seed: int = 0, renormalize: bool = True):
        self.n = prog.n
        self.k_max = prog.k_max
        cap = 1 << prog.k_max
        self.buf = np.zeros(cap, dtype=np.complex128)
        self.scratch = np.zeros(cap, dtype=np.complex128)
        self.fbuf = np.zeros(cap, dtype=np.float64)
        self.frame_x = np.zeros(prog.n, dtype=np.uint8)
        self.frame_z = np.zeros(prog.n, dtype=np.uint8)
        self.records = np.zeros(prog.record_count, dtype=np.uint8)
        self.detectors = np.zeros(prog.num_detectors, dtype=np.uint8)
        self.observables = np.zeros(prog.num_observables, dtype=np.uint8)
        self.rng = ShotRng(seed, 0)
        self.renormalize = renormalize
        self.forced_faults = None
        self.forced_outcomes = None
        self.active_virtuals = prog.final_active
        self.gamma = 1.0 + 0.0j
        self.k = 0
        self.weight = 1.0
        self.accepted = True
        self._branch = 0
        # rejected shots stop early; only then can stale bits leak into output
        self._zero_records = any(isinstance(i, PostSelectIns) for i in prog.instrs)

    def reset(self, shot: int) -> None:
        self.buf[0] = 1.0
        self.frame_x.fill(0)
        self.frame_z.fill(0)
        if self._zero_records:
            self.records.fill(0)
            if len(self.detectors):
                self.detectors.fill(0)
        if len(self.observables):
            self.observables.fill(0)
        self.gamma = 1.0 + 0.0j
        self.k = 0
        self.weight = 1.0
        self.accepted = True
        self._branch = 0
        self.rng.reset(shot)

    def active_view(self) -> np.ndarray:
        return self.buf[: 1 << self.k]


# -- instruction specialization --------------------------------------------------
#
# Each _c_* factory binds one instruction's operands and returns run(st).


def _c_frame(ins: FrameGates, prog):
    gates = ins.gates

    def run(st: ShotState) -> None:
        fx, fz = st.frame_x, st.frame_z
        for g, a, b in gates:
            if g == "H":
                t = int(fx[a]); fx[a] = fz[a]; fz[a] = t
            elif g == "S" or g == "S_DAG":
                fz[a] ^= fx[a]
            elif g == "CX":
                fx[b] ^= fx[a]
                fz[a] ^= fz[b]
            elif g == "CZ":
                fz[b] ^= fx[a]
                fz[a] ^= fx[b]
            elif g == "SWAP":
                t = int(fx[a]); fx[a] = fx[b]; fx[b] = t
                t = int(fz[a]); fz[a] = fz[b]; fz[b] = t
            # X/Y/Z conjugations never move frame bits

    return run


def _c_array_gate(ins: ArrayGate, prog):
    g, va, vb, size = ins.gate, ins.va, ins.vb, ins.size
    a, b = ins.axa, ins.axb
    if g in ("S", "S_DAG"):
        ph = 1j if g == "S" else -1j

        def run(st: ShotState) -> None:
            st.frame_z[va] ^= st.frame_x[va]
            buf = st.buf
            if size <= _SMALL:
                for i in range(size):
                    if (i >> a) & 1:
                        buf[i] = buf.item(i) * ph
            else:
                buf[:size].reshape(-1, 2, 1 << a)[:, 1, :] *= ph

        return run
    if g == "H":
        step = 1 << a

        def run(st: ShotState) -> None:
            fx, fz = st.frame_x, st.frame_z
            t = int(fx[va]); fx[va] = fz[va]; fz[va] = t
            buf = st.buf
            if size <= _SMALL:
                for i in range(size):
                    if (i >> a) & 1 == 0:
                        lo = buf.item(i)
                        hi = buf.item(i + step)
                        buf[i] = (lo + hi) * _INV_SQRT2
                        buf[i + step] = (lo - hi) * _INV_SQRT2
            else:
                view = buf[:size].reshape(-1, 2, step)
                sc = st.scratch[: size // 2].reshape(-1, step)
                sc[:] = view[:, 0, :]
                np.add(sc, view[:, 1, :], out=view[:, 0, :])
                np.subtract(sc, view[:, 1, :], out=view[:, 1, :])
                view *= _INV_SQRT2

        return run
    if g == "CX":
        tm = 1 << b
        hi, lo = max(a, b), min(a, b)

        def run(st: ShotState) -> None:
            fx, fz = st.frame_x, st.frame_z
            fx[vb] ^= fx[va]
            fz[va] ^= fz[vb]
            buf = st.buf
            if size <= 2 * _SMALL:
                for i in range(size):
                    if (i >> a) & 1 and (i >> b) & 1 == 0:
                        j = i | tm
                        buf[i], buf[j] = buf[j], buf[i]
            else:
                view = buf[:size].reshape(size >> (hi + 1), 2, 1 << (hi - lo - 1), 2, 1 << lo)
                if a == hi:
                    s0, s1 = view[:, 1, :, 0, :], view[:, 1, :, 1, :]
                else:
                    s0, s1 = view[:, 0, :, 1, :], view[:, 1, :, 1, :]
                sc = st.scratch[: s0.size].reshape(s0.shape)
                sc[:] = s0
                s0[:] = s1
                s1[:] = sc

        return run
    if g == "CZ":
        hi, lo = max(a, b), min(a, b)

        def run(st: ShotState) -> None:
            fx, fz = st.frame_x, st.frame_z
            fz[vb] ^= fx[va]
            fz[va] ^= fx[vb]
            buf = st.buf
            if size <= 2 * _SMALL:
                for i in range(size):
                    if (i >> a) & 1 and (i >> b) & 1:
                        buf[i] = -buf[i]
            else:
                view = buf[:size].reshape(size >> (hi + 1), 2, 1 << (hi - lo - 1), 2, 1 << lo)
                view[:, 1, :, 1, :] *= -1.0

        return run
    raise ShotError(f"unknown array gate {g}")


def _c_expand(ins: Expand, prog):
    size, virt = ins.size, ins.virt
    if ins.fused:
        e0 = cmath.exp(-1j * ins.angle) * _INV_SQRT2
        e1 = cmath.exp(1j * ins.angle) * _INV_SQRT2
        phases = ((e0, e1), (e1, e0))  # indexed by frame parity
    else:
        phases = ((_INV_SQRT2, _INV_SQRT2),) * 2

    def run(st: ShotState) -> None:
        ph0, ph1 = phases[st.frame_x[virt]]
        buf = st.buf
        if size <= _SMALL:
            for i in range(size):
                v = buf.item(i)
                buf[i] = v * ph0
                buf[size + i] = v * ph1
        else:
            buf[size: 2 * size] = buf[:size]
            buf[:size] *= ph0
            buf[size: 2 * size] *= ph1
        st.k += 1

    return run


def _c_gamma_rot(ins: GammaRot, prog):
    virt = ins.virt
    phases = (cmath.exp(-1j * ins.angle), cmath.exp(1j * ins.angle))

    def run(st: ShotState) -> None:
        st.gamma *= phases[st.frame_x[virt]]

    return run


def _c_array_rot(ins: ArrayRot, prog):
    virt, a, size = ins.virt, ins.axis, ins.size
    e0 = cmath.exp(-1j * ins.angle)
    e1 = e0.conjugate()
    phases = ((e0, e1), (e1, e0))

    def run(st: ShotState) -> None:
        ph0, ph1 = phases[st.frame_x[virt]]
        buf = st.buf
        if size <= _SMALL:
            for i in range(size):
                buf[i] = buf.item(i) * (ph1 if (i >> a) & 1 else ph0)
        else:
            view = buf[:size].reshape(-1, 2, 1 << a)
            view[:, 0, :] *= ph0
            view[:, 1, :] *= ph1

    return run


def _c_meas_dormant_static(ins: MeasDormantStatic, prog):
    virt, record, flip = ins.virt, ins.record, ins.flip

    def run(st: ShotState) -> None:
        bit = int(st.frame_x[virt]) ^ flip
        fo = st.forced_outcomes
        if fo is not None:
            forced = fo.get(record)
            if forced is not None and forced != bit:
                raise ShotError(
                    f"forced outcome {forced} for record {record} has probability 0")
        st.records[record] = bit

    return run


def _c_meas_dormant_random(ins: MeasDormantRandom, prog):
    virt, record, flip = ins.virt, ins.record, ins.flip

    def run(st: ShotState) -> None:
        fx, fz = st.frame_x, st.frame_z
        p = int(fz[virt])
        fo = st.forced_outcomes
        if fo is None:
            coin = st.rng.bit()
        else:
            forced = fo.get(record)
            coin = st.rng.bit() if forced is None else forced ^ p ^ flip
        st.records[record] = coin ^ p ^ flip
        t = int(fx[virt]); fx[virt] = fz[virt]; fz[virt] = t
        if coin:
            fx[virt] ^= 1
        st.gamma *= _INV_SQRT2

    return run


def _c_meas_active(ins: MeasActive, prog):
    virt, a, record, flip, size = ins.virt, ins.axis, ins.record, ins.flip, ins.size

    def run(st: ShotState) -> None:
        buf = st.buf
        if size == 2:
            v = buf.item(1)
            p1 = v.real * v.real + v.imag * v.imag
        elif size <= _SMALL:
            p1 = 0.0
            for i in range(size):
                if (i >> a) & 1:
                    v = buf.item(i)
                    p1 += v.real * v.real + v.imag * v.imag
        else:
            view = buf[:size].reshape(-1, 2, 1 << a)[:, 1, :]
            fl = st.fbuf[: view.size].reshape(view.shape)
            np.abs(view, out=fl)
            np.multiply(fl, fl, out=fl)
            p1 = float(fl.sum())
        if p1 != p1:
            raise ShotError("NaN amplitude encountered at an active measurement")
        if not st.renormalize:
            if size <= _SMALL:
                norm2 = 0.0
                for i in range(size):
                    v = buf.item(i)
                    norm2 += v.real * v.real + v.imag * v.imag
            else:
                fl = st.fbuf[:size]
                np.abs(buf[:size], out=fl)
                np.multiply(fl, fl, out=fl)
                norm2 = float(fl.sum())
            p1 = p1 / norm2 if norm2 > 0 else 0.0
        if p1 < 0.0:
            p1 = 0.0
        elif p1 > 1.0:
            p1 = 1.0
        parity = int(st.frame_x[virt])
        fo = st.forced_outcomes
        forced = None if fo is None else fo.get(record)
        if forced is None:
            branch = 1 if st.rng.uniform() < p1 else 0
            p_branch = p1 if branch else 1.0 - p1
            if p_branch < BRANCH_FLOOR:
                branch ^= 1
                p_branch = 1.0 - p_branch
        else:
            branch = forced ^ parity ^ flip
            p_branch = p1 if branch else 1.0 - p1
            if p_branch < BRANCH_FLOOR:
                raise ShotError(
                    f"forced outcome {forced} for record {record} has probability"
                    f" {p_branch:.3e}")
        st.records[record] = branch ^ parity ^ flip
        st._branch = branch
        renorm = st.renormalize
        scale = 1.0 / math.sqrt(p_branch) if renorm else 1.0
        dead = 1 - branch
        if size <= _SMALL:
            for i in range(size):
                if ((i >> a) & 1) == dead:
                    buf[i] = 0.0
                elif renorm:
                    buf[i] = buf.item(i) * scale
        else:
            view = buf[:size].reshape(-1, 2, 1 << a)
            view[:, dead, :] = 0.0
            if renorm:
                view[:, branch, :] *= scale
        if renorm:
            st.gamma *= math.sqrt(p_branch)

    return run


def _c_meas_collapse(ins: MeasCollapse, prog):
    virt, a, record, flip, size = ins.virt, ins.axis, ins.record, ins.flip, ins.size
    (u00, u01), (u10, u11) = ins.u
    pre_gates = ins.pre_gates
    idx0, idx1 = ins.idx0, ins.idx1
    half = size >> 1
    step = 1 << a

    def run(st: ShotState) -> None:
        fx, fz = st.frame_x, st.frame_z
        for g, q, _ in pre_gates:
            if g == "H":
                t = int(fx[q]); fx[q] = fz[q]; fz[q] = t
            else:  # S / S_DAG
                fz[q] ^= fx[q]
        buf = st.buf
        if size == 2:
            a0 = buf.item(0)
            a1 = buf.item(1)
            b0 = u00 * a0 + u01 * a1
            b1 = u10 * a0 + u11 * a1
            p1 = b1.real * b1.real + b1.imag * b1.imag
            p_all = p1 + b0.real * b0.real + b0.imag * b0.imag
        elif size <= 2 * _SMALL:
            p1 = 0.0
            p_all = 0.0
            for i in range(size):
                if (i >> a) & 1 == 0:
                    a0 = buf.item(i)
                    a1 = buf.item(i + step)
                    b1 = u10 * a0 + u11 * a1
                    q1 = b1.real * b1.real + b1.imag * b1.imag
                    b0 = u00 * a0 + u01 * a1
                    p1 += q1
                    p_all += q1 + b0.real * b0.real + b0.imag * b0.imag
        else:
            view = buf[:size].reshape(-1, 2, step)
            v0, v1 = view[:, 0, :], view[:, 1, :]
            sc = st.scratch[:half].reshape(v0.shape)
            np.multiply(v0, u10, out=sc)
            sc += u11 * v1
            fl = st.fbuf[:half].reshape(sc.shape)
            np.abs(sc, out=fl)
            np.multiply(fl, fl, out=fl)
            p1 = float(fl.sum())
            np.abs(buf[:size], out=st.fbuf[:size])
            np.multiply(st.fbuf[:size], st.fbuf[:size], out=st.fbuf[:size])
            p_all = float(st.fbuf[:size].sum())
        if p1 != p1:
            raise ShotError("NaN amplitude encountered at an active measurement")
        p1 = p1 / p_all if p_all > 0 else 0.0
        if p1 < 0.0:
            p1 = 0.0
        elif p1 > 1.0:
            p1 = 1.0
        parity = int(fx[virt])
        fo = st.forced_outcomes
        forced = None if fo is None else fo.get(record)
        if forced is None:
            branch = 1 if st.rng.uniform() < p1 else 0
            p_branch = p1 if branch else 1.0 - p1
            if p_branch < BRANCH_FLOOR:
                branch ^= 1
                p_branch = 1.0 - p_branch
        else:
            branch = forced ^ parity ^ flip
            p_branch = p1 if branch else 1.0 - p1
            if p_branch < BRANCH_FLOOR:
                raise ShotError(
                    f"forced outcome {forced} for record {record} has probability"
                    f" {p_branch:.3e}")
        st.records[record] = branch ^ parity ^ flip
        renorm = st.renormalize
        scale = 1.0 / math.sqrt(p_branch * p_all) if renorm else 1.0
        k0, k1 = (u00 * scale, u01 * scale) if branch == 0 else (u10 * scale, u11 * scale)
        if idx0 is None:
            if size == 2:
                buf[0] = k0 * buf.item(0) + k1 * buf.item(1)
            elif size <= 2 * _SMALL:
                for i in range(half):
                    buf[i] = k0 * buf.item(i) + k1 * buf.item(half + i)
            else:
                buf[:half] *= k0
                buf[:half] += k1 * buf[half:size]
        else:
            i0 = idx0
            i1 = idx1
            if size <= 2 * _SMALL:
                for i in range(half):
                    st.scratch[i] = k0 * buf.item(i0[i]) + k1 * buf.item(i1[i])
                buf[:half] = st.scratch[:half]
            else:
                np.take(buf, i0, out=st.scratch[:half])
                st.scratch[:half] *= k0
                st.scratch[:half] += k1 * buf[i1]
                buf[:half] = st.scratch[:half]
        if branch:
            fx[virt] ^= 1
        st.k -= 1
        if renorm:
            st.gamma *= math.sqrt(p_branch)

    return run


def _c_retire(ins: Retire, prog):
    size, virt = ins.size, ins.virt
    half = size >> 1
    idx0, idx1 = ins.idx0, ins.idx1

    def run(st: ShotState) -> None:
        buf = st.buf
        branch = st._branch
        if idx0 is None:
            if branch:
                if half == 1:
                    buf[0] = buf[1]
                elif half <= _SMALL:
                    for i in range(half):
                        buf[i] = buf[half + i]
                else:
                    buf[:half] = buf[half:size]
        else:
            idx = idx1 if branch else idx0
            if half <= _SMALL:
                for i in range(half):
                    buf[i] = buf[idx[i]]
            else:
                np.take(buf, idx, out=st.scratch[:half])
                buf[:half] = st.scratch[:half]
        if branch:
            st.frame_x[virt] ^= 1
        st.k -= 1

    return run


def _c_cond_frame(ins: CondFrame, prog):
    xmask, zmask, record = ins.xmask, ins.zmask, ins.record

    def run(st: ShotState) -> None:
        if st.records[record]:
            st.frame_x ^= xmask
            st.frame_z ^= zmask

    return run


def _c_noise_block(ins: NoiseBlock, prog):
    plan = _block_plan(prog, ins.lo, ins.hi)
    S = prog.cum_hazard
    sites = prog.sites
    lo, hi = ins.lo, ins.hi
    single_segment = len(plan) == 1 and isinstance(plan[0], tuple)

    def run(st: ShotState) -> None:
        ff = st.forced_faults
        rng = st.rng
        if ff is None:
            if single_segment:
                i = lo
                while i < hi:
                    target = S[i] + rng.exponential()
                    idx = bisect_right(S, target, i + 1, hi + 1)
                    if idx > hi:
                        return
                    site = idx - 1
                    tab = sites[site]
                    case = _pick_case(tab, rng)
                    st.frame_x ^= tab.case_x[case]
                    st.frame_z ^= tab.case_z[case]
                    i = site + 1
                return
            for site, case in hazard_sample(prog, lo, hi, rng):
                tab = sites[site]
                st.frame_x ^= tab.case_x[case]
                st.frame_z ^= tab.case_z[case]
            return
        for site in range(lo, hi):
            mode = ff.get(site, 0) if isinstance(ff, dict) else int(ff[site])
            if mode == 2:
                continue
            tab = sites[site]
            if mode == 0:
                if not tab.case_cum or rng.uniform() >= tab.prob:
                    continue
                case = _pick_case(tab, rng)
            elif mode == 1:
                case = _pick_case(tab, rng)
            else:
                case = mode - 3  # explicit case: mode = case + 3
            st.frame_x ^= tab.case_x[case]
            st.frame_z ^= tab.case_z[case]

    return run


def _c_detector(ins: DetectorIns, prog):
    index, records = ins.index, ins.records

    def run(st: ShotState) -> None:
        bit = 0
        rec = st.records
        for r in records:
            bit ^= rec[r]
        st.detectors[index] = bit

    return run


def _c_observable(ins: ObservableIns, prog):
    index, records = ins.index, ins.records

    def run(st: ShotState) -> None:
        bit = 0
        rec = st.records
        for r in records:
            bit ^= rec[r]
        st.observables[index] ^= bit

    return run


def _c_postselect(ins: PostSelectIns, prog):
    kind, ref, required = ins.kind, ins.ref, ins.required

    def run(st: ShotState) -> None:
        bit = st.detectors[ref] if kind == "detector" else st.records[ref]
        if bit != required:
            st.accepted = False
            raise _Halt

    return run


_FACTORIES = {
    FrameGates: _c_frame,
    ArrayGate: _c_array_gate,
    Expand: _c_expand,
    GammaRot: _c_gamma_rot,
    ArrayRot: _c_array_rot,
    MeasDormantStatic: _c_meas_dormant_static,
    MeasDormantRandom: _c_meas_dormant_random,
    MeasActive: _c_meas_active,
    MeasCollapse: _c_meas_collapse,
    Retire: _c_retire,
    CondFrame: _c_cond_frame,
    NoiseBlock: _c_noise_block,
    DetectorIns: _c_detector,
    ObservableIns: _c_observable,
    PostSelectIns: _c_postselect,
}


def _compiled(prog: BytecodeProgram):
    """Instruction closures, specialized once per program."""
    cache = prog.__dict__.get("_dispatch")
    if cache is None:
        cache = [_FACTORIES[type(i)](i, prog) for i in prog.instrs]
        prog.__dict__["_dispatch"] = cache
    return cache


# -- hazard sampling -------------------------------------------------------------


def hazard_sample(prog: BytecodeProgram, lo: int, hi: int, rng: ShotRng) -> list:
    """Sample triggered (site, case) pairs for sites in [lo, hi).

    Cumulative-hazard skipping: one exponential draw jumps directly to the
    next realized fault, with certain (p=1) sites handled as segment breaks.
    The joint law equals independent per-site Bernoulli draws.
    """
    out: list = []
    plan = _block_plan(prog, lo, hi)
    S = prog.cum_hazard
    for part in plan:
        if isinstance(part, int):
            out.append((part, _pick_case(prog.sites[part], rng)))
            continue
        a, b = part
        i = a
        while i < b:
            target = S[i] + rng.exponential()
            idx = bisect_right(S, target, i + 1, b + 1)
            if idx > b:
                break  # survived the rest of the segment
            site = idx - 1  # first index with S > target: that site fires
            out.append((site, _pick_case(prog.sites[site], rng)))
            i = site + 1
    return out


def _pick_case(site, rng: ShotRng) -> int:
    if len(site.case_cum) == 1:
        return 0
    u = rng.uniform() * site.prob
    c = bisect_right(site.case_cum, u)
    return min(c, len(site.case_cum) - 1)


def _block_plan(prog: BytecodeProgram, lo: int, hi: int):
    cache = prog.__dict__.setdefault("_block_plans", {})
    plan = cache.get((lo, hi))
    if plan is None:
        plan = []
        start = lo
        for s in range(lo, hi):
            if prog.sites[s].prob >= 1.0:
                if start < s:
                    plan.append((start, s))
                plan.append(s)
                start = s + 1
        if start < hi:
            plan.append((start, hi))
        cache[(lo, hi)] = plan
    return plan


# -- shot execution ---------------------------------------------------------------


def run_shot(prog: BytecodeProgram, state: ShotState | None = None, shot: int = 0,
             seed: int = 0, forced_faults=None, forced_outcomes=None,
             weight: float = 1.0, trace=None) -> ShotRecord:
    """Execute one shot; returns its record. ``state`` is reused if given."""
    if state is None:
        state = ShotState(prog, seed=seed)
    state.reset(shot)
    state.forced_faults = forced_faults
    state.forced_outcomes = forced_outcomes
    state.weight = weight
    try:
        if trace is None:
            for fn in _compiled(prog):
                fn(state)
        else:
            for fn, ins in zip(_compiled(prog), prog.instrs):
                fn(state)
                trace(state, ins)
    except _Halt:
        pass
    return make_record(prog, state)


def make_record(prog: BytecodeProgram, state: ShotState) -> ShotRecord:
    uidx = _user_idx(prog)
    # fancy indexing already yields a fresh array; identity maps just copy
    meas = state.records.copy() if uidx is None else state.records[uidx]
    return ShotRecord(
        measurements=meas,
        detectors=state.detectors.copy() if len(state.detectors) else _EMPTY_BITS,
        observables=state.observables.copy() if len(state.observables) else _EMPTY_BITS,
        accepted=state.accepted,
        weight=state.weight,
    )


def _user_idx(prog: BytecodeProgram):
    """Index array for user records, or None when they are all records."""
    if "_user_idx" not in prog.__dict__:
        if prog.user_records == tuple(range(prog.record_count)):
            prog.__dict__["_user_idx"] = None
        else:
            prog.__dict__["_user_idx"] = np.array(prog.user_records, dtype=np.int64)
    return prog.__dict__["_user_idx"]


def sample(prog: BytecodeProgram, shots: int, seed: int = 0, workers: int = 1,
           renormalize: bool = True, stratum=None, keep_rejected: bool = True):
    """Yield ShotRecords for shot indices 0..shots-1, deterministically.

    Records depend only on (seed, shot index): any worker split produces the
    same stream. With a stratum, every record carries that stratum's weight
    and noise sites are forced per its conditional law.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if workers > 1:
        yield from _sample_parallel(prog, shots, seed, workers, renormalize,
                                    stratum, keep_rejected)
        return
    state = ShotState(prog, seed=seed, renormalize=renormalize)
    for shot in range(shots):
        rec = _one_shot(prog, state, shot, stratum)
        if rec.accepted or keep_rejected:
            yield rec


def _one_shot(prog, state, shot, stratum) -> ShotRecord:
    state.reset(shot)
    if stratum is not None:
        state.forced_faults = stratum.draw_forced(state.rng)
        state.weight = stratum.weight
    else:
        state.forced_faults = None
        state.weight = 1.0
    state.forced_outcomes = None
    try:
        for fn in _compiled(prog):
            fn(state)
    except _Halt:
        pass
    return make_record(prog, state)


def _worker_range(args):
    prog, lo, hi, seed, renormalize, stratum = args
    state = ShotState(prog, seed=seed, renormalize=renormalize)
    return [_one_shot(prog, state, s, stratum) for s in range(lo, hi)]


def _sample_parallel(prog, shots, seed, workers, renormalize, stratum, keep_rejected):
    import multiprocessing as mp

    workers = min(workers, shots)
    bounds = np.linspace(0, shots, workers + 1).astype(int)
    jobs = [(prog, int(lo), int(hi), seed, renormalize, stratum)
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    ctx = mp.get_context("fork")
    with ctx.Pool(len(jobs)) as pool:
        for chunk in pool.map(_worker_range, jobs):
            for rec in chunk:
                if rec.accepted or keep_rejected:
                    yield rec


def sample_accumulate(prog: BytecodeProgram, shots: int, seed: int = 0,
                      stratum=None) -> dict:
    """Streaming marginals: bit sums for measurements/detectors/observables."""
    state = ShotState(prog, seed=seed)
    uidx = _user_idx(prog)
    meas = np.zeros(len(prog.user_records), dtype=np.int64)
    det = np.zeros(prog.num_detectors, dtype=np.int64)
    obs = np.zeros(prog.num_observables, dtype=np.int64)
    accepted = 0
    weight_sum = 0.0
    compiled = _compiled(prog)
    has_det = prog.num_detectors > 0
    has_obs = prog.num_observables > 0
    for shot in range(shots):
        state.reset(shot)
        if stratum is not None:
            state.forced_faults = stratum.draw_forced(state.rng)
            state.weight = stratum.weight
        try:
            for fn in compiled:
                fn(state)
        except _Halt:
            continue
        accepted += 1
        weight_sum += state.weight
        meas += state.records if uidx is None else state.records[uidx]
        if has_det:
            det += state.detectors
        if has_obs:
            obs += state.observables
    return {"shots": shots, "accepted": accepted, "weight_sum": weight_sum,
            "measurements": meas, "detectors": det, "observables": obs}


# -- stratified importance sampling --------------------------------------------


def poisson_binomial(probs) -> np.ndarray:
    """Exact pmf of the number of triggered sites; length len(probs)+1."""
    pmf = np.array([1.0])
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] += pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


class StratumSpec:
    """Shot batch conditioned on exactly w realized faults.

    ``weight`` is Pr[W = w] under the Poisson-binomial law of the site
    probabilities; ``draw_forced`` samples a site subset from the exact
    conditional law by sequential conditioning on suffix counts.
    """

    def __init__(self, prog: BytecodeProgram, w: int):
        probs = [s.prob for s in prog.sites]
        e = len(probs)
        if w > e:
            raise ValueError(f"stratum fault count {w} exceeds {e} sites")
        self.w = w
        self.probs = probs
        # suffix[i] = pmf of the fault count over sites i..E-1
        self.suffix = [None] * (e + 1)
        self.suffix[e] = np.array([1.0])
        for i in range(e - 1, -1, -1):
            p = probs[i]
            prev = self.suffix[i + 1]
            nxt = np.zeros(len(prev) + 1)
            nxt[:-1] += prev * (1.0 - p)
            nxt[1:] += prev * p
            self.suffix[i] = nxt
        self.weight = float(self.suffix[0][w]) if w < len(self.suffix[0]) else 0.0

    def draw_forced(self, rng: ShotRng) -> np.ndarray:
        """int8 flags per site: 1 = forced trigger, 2 = forced skip."""
        e = len(self.probs)
        flags = np.full(e, 2, dtype=np.int8)
        need = self.w
        for i in range(e):
            if need == 0:
                break
            remaining = e - i
            if remaining == need:
                flags[i:] = 1
                need = 0
                break
            tail = self.suffix[i + 1]
            p_here = self.probs[i] * (tail[need - 1] if need - 1 < len(tail) else 0.0)
            p_total = self.suffix[i][need]
            if rng.uniform() * p_total < p_here:
                flags[i] = 1
                need -= 1
        return flags


def importance_sample(prog: BytecodeProgram, stratum, shots: int, seed: int = 0,
                      workers: int = 1, keep_rejected: bool = True):
    """Weighted records conditioned on a fault-count stratum.

    ``stratum`` is a :class:`StratumSpec` or a fault count w; every record
    carries weight Pr[W = w].
    """
    if not isinstance(stratum, StratumSpec):
        stratum = StratumSpec(prog, int(stratum))
    return sample(prog, shots, seed=seed, workers=workers, stratum=stratum,
                  keep_rejected=keep_rejected)


# -- expectation probe -----------------------------------------------------------


def expectation_probe(prog: BytecodeProgram, state: ShotState,
                      observable: PauliString) -> float:
    """<psi|P|psi> of the current factored state, non-collapsing.

    Dormant axes contribute <0|Z|0> = 1 or kill the term (<0|X|0> = 0);
    active support costs one traversal of the active array.
    """
    if not observable.is_hermitian():
        raise ValueError("probe observable must be Hermitian")
    mapped = prog.final_tableau.heisenberg_map(observable)
    sign = mapped.hermitian_sign()
    word = mapped.hermitian_word()
    par = (int(np.count_nonzero(word.x & state.frame_z))
           + int(np.count_nonzero(word.z & state.frame_x))) & 1
    active_pos = {v: p for p, v in enumerate(state.active_virtuals)}
    xm = 0
    zm = 0
    ycount = 0
    for j in word.support():
        j = int(j)
        if j not in active_pos:
            if word.x[j]:
                return 0.0
            continue
        p = active_pos[j]
        if word.x[j]:
            xm |= 1 << p
        if word.z[j]:
            zm |= 1 << p
        if word.x[j] and word.z[j]:
            ycount += 1
    amps = state.active_view()
    idx = np.arange(len(amps))
    phases = (1j ** (ycount & 3)) * (1.0 - 2.0 * (np.bitwise_count(idx & zm) & 1))
    wphi = np.zeros_like(amps)
    wphi[idx ^ xm] = phases * amps
    norm2 = float(np.vdot(amps, amps).real)
    val = float(np.vdot(amps, wphi).real) / norm2
    return sign * (-1.0 if par else 1.0) * val
