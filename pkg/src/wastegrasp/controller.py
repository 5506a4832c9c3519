"""Tactile grasp controller.

The controller closes the gripper until both fingers feel the object,
switches to slip watching while the arm lifts and carries it, squeezes one
step tighter after every detected slip, and opens on the vision system's
release order until contact is lost.

Transition table (``step``)::

    Idle            + Grasp order            -> ClosingOnContact
    ClosingOnContact, both contacts          -> HoldingSlipWatch   (hold)
    ClosingOnContact, otherwise              -> close one step (ObjectMissedError at min_opening)
    HoldingSlipWatch + Release order         -> ReleasingOnNoContact (open one step)
    HoldingSlipWatch, slip                   -> SlipCorrecting      (hold)
    SlipCorrecting                           -> HoldingSlipWatch   (close one step)
    SlipCorrecting  + Release order          -> ReleasingOnNoContact (open one step)
    ReleasingOnNoContact, no contact on both -> Done
    ReleasingOnNoContact, otherwise          -> open one step

Orders are handled before sensor flags within a tick.  Orders that do not
apply to the current mode are ignored.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import ControllerTimeoutError, ObjectMissedError
from .tactile import (BaselineDifferenceDetector, ContactDetector, TactileConfig,
                      TactileSimParams, background_frame, detect_slip,
                      simulate_tactile_frame)

MAX_OPENING_MM = 140.0
TICK_RATE_HZ = 30.0


class Mode(str, enum.Enum):
    IDLE = "Idle"
    CLOSING_ON_CONTACT = "ClosingOnContact"
    HOLDING_SLIP_WATCH = "HoldingSlipWatch"
    SLIP_CORRECTING = "SlipCorrecting"
    RELEASING_ON_NO_CONTACT = "ReleasingOnNoContact"
    DONE = "Done"


class VisionOrder(str, enum.Enum):
    GRASP = "Grasp"
    RELEASE = "Release"
    NONE = "None"


class Command(str, enum.Enum):
    NONE = "none"
    CLOSE = "close"
    OPEN = "open"
    HOLD = "hold"


@dataclass(frozen=True)
class GripperModel:
    opening: float = MAX_OPENING_MM   # mm
    close_step: float = 1.0           # mm per tick
    min_opening: float = 0.0          # mm

    def __post_init__(self):
        if not 0.0 <= self.min_opening <= self.opening <= MAX_OPENING_MM:
            raise ValueError("need 0 <= min_opening <= opening <= 140 mm")
        if not self.close_step > 0:
            raise ValueError("close_step must be positive")


@dataclass(frozen=True)
class ControllerState:
    mode: Mode
    gripper: GripperModel

    @property
    def opening(self) -> float:
        return self.gripper.opening


def initial_state(gripper: GripperModel = GripperModel()) -> ControllerState:
    return ControllerState(Mode.IDLE, gripper)


def _moved(state: ControllerState, mode: Mode, delta: float) -> ControllerState:
    g = state.gripper
    opening = min(max(g.opening + delta, g.min_opening), MAX_OPENING_MM)
    return ControllerState(mode, replace(g, opening=opening))


def step(state: ControllerState, order: VisionOrder = VisionOrder.NONE,
         contact_left: int = 0, contact_right: int = 0, slip: int = 0
         ) -> tuple[ControllerState, Command]:
    """Advance the controller by one tick. Pure: ``state`` is not modified."""
    mode = state.mode
    g = state.gripper
    order = VisionOrder(order)

    if mode is Mode.IDLE:
        if order is VisionOrder.GRASP:
            return ControllerState(Mode.CLOSING_ON_CONTACT, g), Command.NONE
        return state, Command.NONE

    if mode is Mode.CLOSING_ON_CONTACT:
        if contact_left and contact_right:
            return ControllerState(Mode.HOLDING_SLIP_WATCH, g), Command.HOLD
        if g.opening <= g.min_opening:
            raise ObjectMissedError(f"gripper reached {g.opening} mm without contact")
        return _moved(state, mode, -g.close_step), Command.CLOSE

    if mode in (Mode.HOLDING_SLIP_WATCH, Mode.SLIP_CORRECTING) and order is VisionOrder.RELEASE:
        return _moved(state, Mode.RELEASING_ON_NO_CONTACT, g.close_step), Command.OPEN

    if mode is Mode.HOLDING_SLIP_WATCH:
        if slip:
            return ControllerState(Mode.SLIP_CORRECTING, g), Command.HOLD
        return state, Command.HOLD

    if mode is Mode.SLIP_CORRECTING:
        return _moved(state, Mode.HOLDING_SLIP_WATCH, -g.close_step), Command.CLOSE

    if mode is Mode.RELEASING_ON_NO_CONTACT:
        if not contact_left and not contact_right:
            return ControllerState(Mode.DONE, g), Command.NONE
        return _moved(state, mode, g.close_step), Command.OPEN

    return state, Command.NONE


# Which sensors each mode reads; everything else is left unevaluated.
CONTACT_MODES = frozenset({Mode.CLOSING_ON_CONTACT, Mode.RELEASING_ON_NO_CONTACT})
SLIP_MODES = frozenset({Mode.HOLDING_SLIP_WATCH})
HOLD_MODES = frozenset({Mode.HOLDING_SLIP_WATCH, Mode.SLIP_CORRECTING})


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    mode: Mode                # mode that handled this tick
    opening_mm: float         # opening after the tick's command
    contact_l: int | None     # None: not evaluated this tick
    contact_r: int | None
    slip: int | None
    command: Command
    order: VisionOrder = VisionOrder.NONE
    next_mode: Mode | None = None   # mode after the tick; not part of the CSV


TRACE_COLUMNS = ("tick", "mode", "opening_mm", "contact_l", "contact_r", "slip", "command")


@dataclass
class ControllerTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord):
        if self.records and rec.tick <= self.records[-1].tick:
            raise ValueError("trace ticks must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def final_mode(self) -> Mode | None:
        if not self.records:
            return None
        last = self.records[-1]
        return last.next_mode or last.mode

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.tick, r.mode.value, f"{r.opening_mm:g}",
                        "" if r.contact_l is None else r.contact_l,
                        "" if r.contact_r is None else r.contact_r,
                        "" if r.slip is None else r.slip,
                        r.command.value])
        return buf.getvalue()

    def summary(self) -> dict:
        first_contact = next((r.tick for r in self.records
                              if r.mode is Mode.CLOSING_ON_CONTACT and r.command is Command.HOLD), None)
        return {
            "ticks": len(self.records),
            "final_mode": None if self.final_mode is None else self.final_mode.value,
            "first_contact_tick": first_contact,
            "grasp_opening_mm": next((r.opening_mm for r in self.records if r.tick == first_contact), None),
            "hold_opening_mm": next((r.opening_mm for r in reversed(self.records)
                                     if r.next_mode in HOLD_MODES), None),
            "slip_corrections": sum(1 for r in self.records if r.mode is Mode.SLIP_CORRECTING),
            "final_opening_mm": self.records[-1].opening_mm if self.records else None,
        }


@dataclass(frozen=True)
class ManipulationScenario:
    """Schedules driving one closed-loop manipulation run.

    ``orders`` maps tick -> order.  ``release_after_hold`` lets the vision
    side issue Release a fixed number of ticks after the grasp settles,
    standing in for "the arm reached the drop position".  ``slip_ticks`` are
    the ticks at which the object slides ``slip_px`` further down the gel.
    """

    object_width: float                          # mm between the fingers
    orders: Mapping[int, VisionOrder] = field(default_factory=lambda: {0: VisionOrder.GRASP})
    slip_ticks: frozenset[int] = frozenset()
    slip_px: float = 12.0
    release_after_hold: int | None = None
    noise_seed: int = 0
    max_ticks: int = 1000

    @classmethod
    def from_json(cls, obj: dict) -> "ManipulationScenario":
        obj = dict(obj)
        if "orders" in obj:
            obj["orders"] = {int(k): VisionOrder(v) for k, v in obj["orders"].items()}
        if "slip_ticks" in obj:
            obj["slip_ticks"] = frozenset(int(t) for t in obj["slip_ticks"])
        return cls(**obj)


def run_manipulation(gripper: GripperModel, scenario: ManipulationScenario,
                     sim: TactileSimParams = TactileSimParams(),
                     cfg: TactileConfig = TactileConfig(),
                     contact_detector: ContactDetector | None = None) -> ControllerTrace:
    """Close the loop between :func:`step` and the simulated tactile sensors.

    Both fingers see the same object; their frames differ only in noise.
    The slip detector reads a rolling window of the last four frames, which
    is emptied whenever the controller is not watching for slip.

    Raises :class:`ObjectMissedError` or :class:`ControllerTimeoutError`
    with the partial trace attached.
    """
    detector = contact_detector or BaselineDifferenceDetector(cfg)
    baseline = background_frame(sim)
    state = initial_state(gripper)
    trace = ControllerTrace()
    windows = (deque(maxlen=4), deque(maxlen=4))
    slip_offset = 0.0
    hold_tick = None

    for tick in range(scenario.max_ticks):
        if tick in scenario.slip_ticks:
            slip_offset += scenario.slip_px
        order = VisionOrder(scenario.orders.get(tick, VisionOrder.NONE))
        if (order is VisionOrder.NONE and hold_tick is not None
                and scenario.release_after_hold is not None
                and tick == hold_tick + scenario.release_after_hold):
            order = VisionOrder.RELEASE

        frames = [simulate_tactile_frame(state.opening, scenario.object_width, slip_offset,
                                         (scenario.noise_seed, tick, finger), sim)
                  for finger in (0, 1)]
        mode = state.mode
        c_l = c_r = s = None
        if mode in CONTACT_MODES:
            c_l, c_r = detector(frames[0], baseline), detector(frames[1], baseline)
        if mode in SLIP_MODES:
            for w, f in zip(windows, frames):
                w.append(f)
            if len(windows[0]) == 4:
                s = int(detect_slip(list(windows[0]), cfg) or detect_slip(list(windows[1]), cfg))

        try:
            state, cmd = step(state, order, c_l or 0, c_r or 0, s or 0)
        except ObjectMissedError as exc:
            exc.trace = trace
            raise
        trace.append(TraceRecord(tick, mode, state.opening, c_l, c_r, s, cmd, order, state.mode))
        if mode is Mode.CLOSING_ON_CONTACT and state.mode is Mode.HOLDING_SLIP_WATCH:
            hold_tick = tick
        if state.mode not in SLIP_MODES:
            for w in windows:
                w.clear()
        if state.mode is Mode.DONE:
            return trace

    raise ControllerTimeoutError(f"no Done state after {scenario.max_ticks} ticks", trace)


def trace_from_csv(text: str) -> list[dict]:
    """Parse a trace CSV back into row dicts (all values as strings)."""
    return list(csv.DictReader(io.StringIO(text)))
