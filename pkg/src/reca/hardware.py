"""Cycle-level emulation of the rule-90 reservoir classifier datapath.

The machine holds two banks of rule-90 processing units (R90PUs): one PU per
(bit layer, image row) and one per (bit layer, image column). Each PU is a
shift-register row whose next state is the XOR of each cell's two
neighbours, with zeros past both ends. An XOR fabric combines the row and
column banks pixel by pixel, 2x2 max comparators pool the recomposed 8-bit
values, and ``lanes_per_class`` multiply-accumulate lanes per category fold
pooled features into the logit accumulators.

Schedule for one classification (sequential, no phase overlap)::

    1 cycle         bias preload into the accumulators
    per slice k     ceil(pooled / lanes) MAC cycles
    between slices  1 CA cycle (every PU steps once, fabric recombines)
    1 cycle         argmax over scale-adjusted accumulators

Slice 0 pools the loaded image (the fabric input mux selects the row bank);
later slices pool the XOR fabric output. A machine carries a leading batch
axis so several independent machines can be clocked in lockstep.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .quant import QuantizedWeights, scale_fixed_point
from .reservoir import maxpool_2x2

ACC_BITS = 32
_ACC_MIN, _ACC_MAX = -(2 ** (ACC_BITS - 1)), 2 ** (ACC_BITS - 1) - 1


class HardwareError(RuntimeError):
    pass


@dataclass(frozen=True)
class HwConfig:
    height: int = 28
    width: int = 28
    depth: int = 8
    iterations: int = 16
    num_classes: int = 10
    lanes_per_class: int = 4
    clock_mhz: float = 50.0

    @property
    def pooled_per_slice(self) -> int:
        return ((self.height + 1) // 2) * ((self.width + 1) // 2)

    @property
    def num_features(self) -> int:
        return self.iterations * self.pooled_per_slice

    @property
    def mac_cycles_per_slice(self) -> int:
        return math.ceil(self.pooled_per_slice / self.lanes_per_class)

    @property
    def dsp_lanes(self) -> int:
        return self.num_classes * self.lanes_per_class


def schedule_cycles(config: HwConfig) -> int:
    """Clock cycles per classification implied by the schedule."""
    m = config.iterations
    return 1 + m * config.mac_cycles_per_slice + (m - 1) + 1


def r90_step(registers: np.ndarray) -> np.ndarray:
    """Clock a bank of R90PUs: ``next[i] = reg[i-1] ^ reg[i+1]``, zeros past the ends."""
    nxt = np.zeros_like(registers)
    nxt[..., 1:] ^= registers[..., :-1]
    nxt[..., :-1] ^= registers[..., 1:]
    return nxt


class Phase(str, enum.Enum):
    IDLE = "idle"
    BIAS = "bias"
    MAC = "mac"
    CA = "ca"
    ARGMAX = "argmax"
    DONE = "done"


@dataclass
class HwResult:
    predictions: np.ndarray  # (n,)
    accumulators: np.ndarray  # (n, Q) int64
    cycles_used: int


class HwMachine:
    """Register-level state of the classifier; see the module docstring."""

    def __init__(self, config: HwConfig, weights: QuantizedWeights, trace=None):
        if weights.num_features != config.num_features:
            raise HardwareError(
                f"weight store has {weights.num_features} feature rows, "
                f"datapath produces {config.num_features}"
            )
        if weights.num_classes != config.num_classes:
            raise HardwareError("weight store and datapath disagree on the category count")
        self.config = config
        self.weights = weights
        self._wint = weights.values.astype(np.int64)
        self.scale_mantissa, self.scale_exponent = scale_fixed_point(weights.scales)
        shift = self.scale_exponent - self.scale_exponent.min()
        if shift.max() > 15:
            raise HardwareError("column scales span more than 15 binary orders")
        self._scale_shift = shift
        self.trace = trace
        self.reset(0)

    def reset(self, batch: int) -> None:
        c = self.config
        self.row_bank = np.zeros((batch, c.depth, c.height, c.width), dtype=bool)
        self.col_bank = np.zeros((batch, c.depth, c.width, c.height), dtype=bool)
        self.accumulators = np.zeros((batch, c.num_classes), dtype=np.int64)
        self.cycle_counter = 0
        self.phase = Phase.IDLE
        self.slice_index = 0
        self.mac_index = 0
        self.predictions = np.zeros(batch, dtype=np.int64)
        self._pool_latch = None

    @property
    def batch(self) -> int:
        return self.row_bank.shape[0]

    # -- register views -------------------------------------------------

    def row_registers(self) -> np.ndarray:
        """Row-bank state as ``(n, depth, h, w)`` bitplanes."""
        return self.row_bank.copy()

    def col_registers(self) -> np.ndarray:
        """Column-bank state rotated back to ``(n, depth, h, w)`` bitplanes."""
        return self.col_bank.transpose(0, 1, 3, 2).copy()

    def fabric_output(self) -> np.ndarray:
        """XOR fabric: one gate per (layer, row, column)."""
        return self.row_bank ^ self.col_bank.transpose(0, 1, 3, 2)

    def _pixels(self, planes: np.ndarray) -> np.ndarray:
        weights = (1 << np.arange(self.config.depth, dtype=np.uint16))[None, :, None, None]
        return (planes.astype(np.uint16) * weights).sum(axis=1).astype(np.uint16)

    def pooled(self) -> np.ndarray:
        """Comparator outputs for the current slice, flattened row-major."""
        planes = self.row_bank if self.slice_index == 0 else self.fabric_output()
        return maxpool_2x2(self._pixels(planes)).reshape(self.batch, -1).astype(np.int64)

    # -- clocking ---------------------------------------------------------

    def load(self, images) -> None:
        images = np.asarray(images)
        if images.ndim == 2:
            images = images[None]
        c = self.config
        if images.shape[1:] != (c.height, c.width):
            raise HardwareError(f"image shape {images.shape[1:]} != ({c.height}, {c.width})")
        if images.min(initial=0) < 0 or images.max(initial=0) >= 2**c.depth:
            raise HardwareError("pixel out of range for the configured bit depth")
        self.reset(len(images))
        px = images.astype(np.int64)
        planes = np.stack([((px >> j) & 1).astype(bool) for j in range(c.depth)], axis=1)
        self.row_bank = planes
        self.col_bank = np.ascontiguousarray(planes.transpose(0, 1, 3, 2))
        self.phase = Phase.BIAS
        self._emit_trace(state=True)

    def _accumulate(self, delta: np.ndarray) -> None:
        acc = self.accumulators + delta
        if acc.min(initial=0) < _ACC_MIN or acc.max(initial=0) > _ACC_MAX:
            raise HardwareError(f"accumulator overflow at cycle {self.cycle_counter}")
        self.accumulators = acc

    def scaled_accumulators(self) -> np.ndarray:
        """Accumulators times their 16-bit scale mantissas, aligned to a common exponent.

        Exact integers; ordering matches the float logits ``acc * scale``.
        """
        return (self.accumulators * self.scale_mantissa) << self._scale_shift

    def cycle(self) -> None:
        c = self.config
        phase = self.phase
        if phase in (Phase.IDLE, Phase.DONE):
            raise HardwareError(f"cannot clock a machine in phase {phase.value}")
        self.cycle_counter += 1
        if phase is Phase.BIAS:
            if self.weights.has_bias:
                bias = self.weights.bias_input * self._wint[-1]
                self._accumulate(np.broadcast_to(bias, self.accumulators.shape))
            self.phase = Phase.MAC
        elif phase is Phase.MAC:
            if self.mac_index == 0:
                self._pool_latch = self.pooled()
            lanes = c.lanes_per_class
            start = self.mac_index * lanes
            stop = min(start + lanes, c.pooled_per_slice)
            feats = self._pool_latch[:, start:stop]
            base = self.slice_index * c.pooled_per_slice
            w = self._wint[base + start:base + stop]
            self._accumulate(feats @ w)
            self.mac_index += 1
            if self.mac_index == c.mac_cycles_per_slice:
                self.mac_index = 0
                last = self.slice_index == c.iterations - 1
                self.phase = Phase.ARGMAX if last else Phase.CA
        elif phase is Phase.CA:
            self.row_bank = r90_step(self.row_bank)
            self.col_bank = r90_step(self.col_bank)
            self.slice_index += 1
            self.phase = Phase.MAC
        elif phase is Phase.ARGMAX:
            self.predictions = np.argmax(self.scaled_accumulators(), axis=1)
            self.phase = Phase.DONE
        self._emit_trace(state=phase is Phase.CA)

    def _emit_trace(self, state: bool) -> None:
        if self.trace is None or self.batch == 0:
            return
        self.trace.write(f"#{self.cycle_counter} {self.phase.value} slice={self.slice_index}\n")
        if state:
            for l in range(self.config.depth):
                for r, bits in enumerate(self.row_bank[0, l]):
                    self.trace.write(f"r{l}_{r} {''.join('1' if b else '0' for b in bits)}\n")
                for col, bits in enumerate(self.col_bank[0, l]):
                    self.trace.write(f"c{l}_{col} {''.join('1' if b else '0' for b in bits)}\n")
        self.trace.write(f"acc {' '.join(str(int(a)) for a in self.accumulators[0])}\n")


def hw_load(machine: HwMachine, images) -> HwMachine:
    machine.load(images)
    return machine


def hw_cycle(machine: HwMachine) -> HwMachine:
    machine.cycle()
    return machine


def hw_classify(machine: HwMachine, images) -> HwResult:
    """Load ``images`` (one or a stack) and clock until the logits are valid."""
    machine.load(images)
    while machine.phase is not Phase.DONE:
        machine.cycle()
    return HwResult(machine.predictions.copy(), machine.accumulators.copy(), machine.cycle_counter)


def classify_batched(machine: HwMachine, images, chunk: int = 1000) -> HwResult:
    images = np.asarray(images)
    preds, accs, cycles = [], [], 0
    for s in range(0, len(images), chunk):
        res = hw_classify(machine, images[s:s + chunk])
        preds.append(res.predictions)
        accs.append(res.accumulators)
        cycles = res.cycles_used
    return HwResult(np.concatenate(preds), np.concatenate(accs), cycles)


@dataclass(frozen=True)
class HwReport:
    height: int
    width: int
    depth: int
    iterations: int
    row_pus: int
    col_pus: int
    pu_count: int
    registers_per_row_pu: int
    registers_per_col_pu: int
    register_bits: int
    pu_xor_gates: int
    combine_xor_gates: int
    pool_comparators: int
    dsp_lanes: int
    lanes_per_class: int
    mac_cycles_per_slice: int
    cycles_per_classification: int
    clock_mhz: float
    latency_us: float
    weight_store_bits: int
    accumulator_bits: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def hw_report(machine_or_config) -> HwReport:
    """Resource and latency summary. No area or power estimates."""
    machine = machine_or_config if isinstance(machine_or_config, HwMachine) else None
    c = machine.config if machine else machine_or_config
    row_pus = c.depth * c.height
    col_pus = c.depth * c.width
    cycles = schedule_cycles(c)
    rows = c.num_features + 1
    if machine is not None:
        rows = machine.weights.values.shape[0]
    return HwReport(
        height=c.height,
        width=c.width,
        depth=c.depth,
        iterations=c.iterations,
        row_pus=row_pus,
        col_pus=col_pus,
        pu_count=row_pus + col_pus,
        registers_per_row_pu=c.width,
        registers_per_col_pu=c.height,
        register_bits=row_pus * c.width + col_pus * c.height,
        # the two end cells of a PU just copy their single neighbour
        pu_xor_gates=row_pus * max(c.width - 2, 0) + col_pus * max(c.height - 2, 0),
        combine_xor_gates=c.depth * c.height * c.width,
        pool_comparators=3 * c.pooled_per_slice,
        dsp_lanes=c.dsp_lanes,
        lanes_per_class=c.lanes_per_class,
        mac_cycles_per_slice=c.mac_cycles_per_slice,
        cycles_per_classification=cycles,
        clock_mhz=c.clock_mhz,
        latency_us=cycles / c.clock_mhz,
        weight_store_bits=rows * c.num_classes * 8,
        accumulator_bits=c.num_classes * ACC_BITS,
    )
