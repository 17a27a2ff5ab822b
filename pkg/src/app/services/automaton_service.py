"""
Automaton service: conditional-swap circuit on bit arrays, fronts and bit-map codecs
"""

import logging
import struct
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from tqdm import tqdm

import src.config.env as env
from src.app.models.automaton_model import (
    AutomatonRun,
    AutomatonState,
    Crossover,
    FrontVelocities,
    GateLayout,
)
from src.app.services.basis_service import DomainError, SiteIndexError
from src.app.services.fitting_service import FittingService, InsufficientStatisticsError

logger = logging.getLogger(__name__)

RLE_MAGIC = b"EAB1"

# (stride, span) of each gate type
U1 = (4, 4)
U2 = (3, 3)


def _as_bits(bits: Union[str, Sequence[int], np.ndarray]) -> np.ndarray:
    if isinstance(bits, str):
        return np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    return np.asarray(bits, dtype=np.uint8).copy()


def _varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_varint(data: bytes, pos: int) -> Tuple[int, int]:
    value, shift = 0, 0
    while True:
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


class AutomatonService:
    """Deterministic product-state circuit at the swap point of the gates"""

    def __init__(self, layout: GateLayout = GateLayout.CELL):
        self.layout = GateLayout(layout)
        self.fitting = FittingService()

    @staticmethod
    def gate_u1(bits, j: int) -> np.ndarray:
        """If n_j = 1 and n_{j+1} = 0, swap sites j+2 and j+3."""
        b = _as_bits(bits)
        if not 1 <= j <= b.size - 3:
            raise SiteIndexError(f"U1 at j={j} needs 1 <= j <= {b.size - 3}")
        if b[j - 1] == 1 and b[j] == 0:
            b[j + 1], b[j + 2] = b[j + 2], b[j + 1]
        return b

    @staticmethod
    def gate_u2(bits, j: int) -> np.ndarray:
        """If n_j = 1, swap sites j+1 and j+2."""
        b = _as_bits(bits)
        if not 1 <= j <= b.size - 2:
            raise SiteIndexError(f"U2 at j={j} needs 1 <= j <= {b.size - 2}")
        if b[j - 1] == 1:
            b[j], b[j + 1] = b[j + 1], b[j]
        return b

    @staticmethod
    def gate_positions(k: int, L: int, layout: GateLayout) -> Tuple[str, np.ndarray]:
        """Gate type and 1-based left sites of layer k (0-based)."""
        if layout == GateLayout.CELL:
            phase = k % 7
            kind = "U1" if phase % 2 == 0 else "U2"
            offset = phase // 2
        else:
            kind = "U1" if k % 2 == 0 else "U2"
            offset = k // 2 if layout == GateLayout.PAIRED else k % 7
        stride, span = U1 if kind == "U1" else U2
        first = offset % stride + 1
        return kind, np.arange(first, L - span + 2, stride)

    @classmethod
    def _apply_layer(cls, b: np.ndarray, k: int, layout: GateLayout) -> None:
        kind, js = cls.gate_positions(k, b.size, layout)
        if js.size == 0:
            return
        idx = js - 1
        if kind == "U1":
            fire = (b[idx] == 1) & (b[idx + 1] == 0)
            lo, hi = idx + 2, idx + 3
        else:
            fire = b[idx] == 1
            lo, hi = idx + 1, idx + 2
        lo, hi = lo[fire], hi[fire]
        b[lo], b[hi] = b[hi], b[lo].copy()

    def step_layer(self, state: AutomatonState) -> AutomatonState:
        """Apply layer number ``state.layer``; gates are disjoint so one vector op suffices."""
        b = state.bits.copy()
        self._apply_layer(b, state.layer, state.layout)
        return AutomatonState(bits=b, layer=state.layer + 1, layout=state.layout)

    def unstep_layer(self, state: AutomatonState) -> AutomatonState:
        """Undo the last layer; every layer is an involution."""
        if state.layer == 0:
            raise DomainError("no layer to undo")
        b = state.bits.copy()
        self._apply_layer(b, state.layer - 1, state.layout)
        return AutomatonState(bits=b, layer=state.layer - 1, layout=state.layout)

    def run_reverse(self, state: AutomatonState, layers: Optional[int] = None) -> AutomatonState:
        layers = state.layer if layers is None else layers
        for _ in range(layers):
            state = self.unstep_layer(state)
        return state

    def initial_state(self, L: int, Np: int, bits=None) -> AutomatonState:
        if bits is not None:
            b = _as_bits(bits)
            if b.size != L:
                raise DomainError(f"initial bits have {b.size} sites, expected {L}")
        else:
            if not 0 <= Np <= L:
                raise DomainError(f"need 0 <= Np <= L, got Np={Np}, L={L}")
            b = np.zeros(L, dtype=np.uint8)
            b[:Np] = 1
        return AutomatonState(bits=b, layer=0, layout=self.layout)

    def run_automaton(self, L: int, Np: int, layers: int, bits=None) -> AutomatonRun:
        """
        Evolve for ``layers`` layers and record every row

        Args:
            L: Number of sites
            Np: Particle number (domain wall unless ``bits`` is given)
            layers: Layers to apply
            bits: Optional initial configuration

        Returns:
            AutomatonRun: Bit map, R(t) and both fronts
        """
        state = self.initial_state(L, Np, bits)
        Np = int(state.bits.sum())
        bitmap = np.empty((layers + 1, L), dtype=np.uint8)
        bitmap[0] = state.bits
        b = state.bits.copy()
        for k in tqdm(range(layers), desc="automaton", disable=not env.SHOW_PROGRESS):
            self._apply_layer(b, k, self.layout)
            bitmap[k + 1] = b

        particle, hole = self.fronts(bitmap)
        logger.info("Automaton L=%d Np=%d: %d layers, final front at %d", L, Np, layers, particle[-1])
        return AutomatonRun(
            L=L,
            Np=Np,
            layers=layers,
            layout=self.layout,
            bitmap=bitmap,
            displacement=self.displacement(bitmap, Np),
            particle_front=particle,
            hole_front=hole,
        )

    @staticmethod
    def displacement(bitmap: np.ndarray, Np: int) -> np.ndarray:
        """R(t) of a binary density map."""
        distance = np.arange(1, bitmap.shape[1] + 1) - Np
        weights = np.where(distance > 0, distance.astype(np.float64) ** 2, 0.0)
        return np.sqrt(bitmap.astype(np.float64) @ weights)

    @staticmethod
    def fronts(bitmap: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Rightmost occupied and leftmost empty site per row (0 when absent)."""
        L = bitmap.shape[1]
        occupied = bitmap.astype(bool)
        any_particle = occupied.any(axis=1)
        any_hole = (~occupied).any(axis=1)
        particle = np.where(any_particle, L - np.argmax(occupied[:, ::-1], axis=1), 0)
        hole = np.where(any_hole, np.argmax(~occupied, axis=1) + 1, 0)
        return particle.astype(np.int64), hole.astype(np.int64)

    def locate_crossover(
        self,
        times: np.ndarray,
        R: np.ndarray,
        front: np.ndarray,
        smoothing: int = 50,
        points_per_decade: int = 8,
        min_points: int = 8,
    ) -> Crossover:
        """
        Split R(t) into a ballistic head and a logarithmic tail

        The crossover is the first sample, past 4 * smoothing, where the
        centred slope of R over +-smoothing samples drops below half of its
        running maximum. R = a + b t is fitted on the ballistic window
        [t_c / 2, t_c] and R = c + d ln t on the means of R over log-spaced
        bins from t_c to the last sample.

        Args:
            times: Uniformly spaced layer times
            R: Displacement per sample
            front: Particle front per sample
            smoothing: Half-width of the slope stencil in samples
            points_per_decade: Tail bins per decade of t
            min_points: Fewest samples on either side of the crossover

        Returns:
            Crossover: Breakpoint, front there and both fit qualities
        """
        t = np.asarray(times, dtype=np.float64)
        R = np.asarray(R, dtype=np.float64)
        front = np.asarray(front)
        n = t.size
        if n < 2 * min_points:
            raise InsufficientStatisticsError(f"{n} samples, need {2 * min_points}")

        h = max(1, min(smoothing, (n - 1) // 8))
        centre = np.arange(h, n - h)
        slope = (R[2 * h :] - R[: -2 * h]) / (t[2 * h :] - t[: -2 * h])
        dropped = (slope < 0.5 * np.maximum.accumulate(slope)) & (centre >= 4 * h)
        if not dropped.any():
            raise InsufficientStatisticsError("R(t) never leaves its ballistic regime")
        best = int(centre[np.argmax(dropped)])
        last = n - 1
        if best // 2 + min_points > best + 1 or best + min_points > n:
            raise InsufficientStatisticsError(f"crossover at sample {best} leaves too few samples")

        head = self.fitting.linear_fit(t[best // 2 : best + 1], R[best // 2 : best + 1])
        bins = max(2, int(round(points_per_decade * np.log10(t[last] / t[best]))))
        edges = np.floor(best * (last / best) ** (np.arange(bins + 1) / bins)).astype(np.int64)
        edges[-1] = last + 1
        tail_t, tail_R = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                tail_t.append(t[lo:hi].mean())
                tail_R.append(R[lo:hi].mean())
        tail = self.fitting.log_fit(tail_t, tail_R)
        return Crossover(
            index=best,
            time=float(t[best]),
            front=int(front[best]),
            linear_r_squared=head.r_squared,
            log_r_squared=tail.r_squared,
            velocity=head.slope,
            log_slope=tail.slope,
        )

    def front_velocities(self, run: AutomatonRun, end: int) -> FrontVelocities:
        """Slopes of both fronts over layers 1..end."""
        t = run.times[1 : end + 1]
        particle = self.fitting.linear_fit(t, run.particle_front[1 : end + 1])
        hole = self.fitting.linear_fit(t, run.hole_front[1 : end + 1])
        return FrontVelocities(
            particle=particle.slope,
            hole=hole.slope,
            particle_r_squared=particle.r_squared,
            hole_r_squared=hole.r_squared,
        )

    @staticmethod
    def encode_bitmap(bitmap: np.ndarray) -> bytes:
        """
        Run-length encode a bit map

        Layout: magic ``EAB1``, little-endian uint32 columns and rows, then per
        row a varint run count followed by varint run lengths alternating
        0-runs and 1-runs, starting with a (possibly empty) 0-run.
        """
        rows, cols = bitmap.shape
        out = bytearray(RLE_MAGIC + struct.pack("<II", cols, rows))
        for row in bitmap.astype(np.int8):
            change = np.nonzero(np.diff(row))[0] + 1
            bounds = np.concatenate([[0], change, [cols]])
            runs: List[int] = np.diff(bounds).tolist()
            if cols and row[0] == 1:
                runs.insert(0, 0)
            out += _varint(len(runs))
            for run in runs:
                out += _varint(int(run))
        return bytes(out)

    @staticmethod
    def decode_bitmap(data: bytes) -> np.ndarray:
        if data[:4] != RLE_MAGIC:
            raise ValueError("not an EAB1 bit map")
        cols, rows = struct.unpack("<II", data[4:12])
        bitmap = np.zeros((rows, cols), dtype=np.uint8)
        pos = 12
        for r in range(rows):
            count, pos = _read_varint(data, pos)
            col, value = 0, 0
            for _ in range(count):
                run, pos = _read_varint(data, pos)
                bitmap[r, col : col + run] = value
                col += run
                value ^= 1
        return bitmap

    @staticmethod
    def to_image(bitmap: np.ndarray) -> Image.Image:
        """Greyscale image, one row per layer, occupied sites black."""
        return Image.fromarray(((1 - bitmap.astype(np.uint8)) * 255).astype(np.uint8))
