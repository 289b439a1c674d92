"""Identification from the on/off run lengths of the flashing LED.

Each vehicle ID k is assigned ``n = 2 + 3k`` frames per on-phase, so that a
run observed as n-1, n or n+1 frames (the camera sampling across an edge)
still falls into the interval of exactly one ID.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace

HISTORY_LIMIT = 8
MIN_RUNS = 2


@dataclass(frozen=True)
class IdEntry:
    vehicle_id: int
    n: int
    f_led: float
    low: float
    high: float

    def accepts(self, f: float) -> bool:
        return self.low <= f <= self.high


@dataclass(frozen=True)
class IdTable:
    f_camera: float
    entries: tuple[IdEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, vehicle_id: int) -> IdEntry:
        for e in self.entries:
            if e.vehicle_id == vehicle_id:
                return e
        raise KeyError(vehicle_id)

    def lookup(self, f: float) -> int | None:
        for e in self.entries:
            if e.accepts(f):
                return e.vehicle_id
        return None

    def rows(self) -> list[dict]:
        return [{"id": e.vehicle_id, "n": e.n, "f_led_hz": e.f_led,
                 "accept_low_hz": e.low, "accept_high_hz": e.high} for e in self.entries]


def build_id_table(f_camera: float, count: int) -> IdTable:
    if not f_camera > 0:
        raise ValueError("camera frequency must be positive")
    if count < 0:
        raise ValueError("count must be non-negative")
    entries = []
    for k in range(count):
        n = 2 + 3 * k
        entries.append(IdEntry(k, n, f_camera / n, f_camera / (n + 1), f_camera / (n - 1)))
    for a, b in zip(entries, entries[1:]):
        assert b.high < a.low, "accept intervals overlap"
    return IdTable(float(f_camera), tuple(entries))


@dataclass(frozen=True)
class IdState:
    """Streaming run-length state of one track's identification LED.

    ``current_run_is_on`` is None before the first observation. Every closed
    on-run is appended to ``completed_on_runs``; ``whole_runs`` flags whether
    that run's start was observed. The first run of a track and the run after
    a gap are truncated and are not used for classification.
    """

    current_run_is_on: bool | None = None
    current_run_length: int = 0
    run_start_observed: bool = False
    completed_on_runs: tuple[int, ...] = ()
    whole_runs: tuple[bool, ...] = ()
    frames_observed: int = 0
    history_limit: int = HISTORY_LIMIT


def update_id_state(state: IdState, led_on: bool) -> IdState:
    led_on = bool(led_on)
    if state.current_run_is_on is None:
        return replace(state, current_run_is_on=led_on, current_run_length=1,
                       run_start_observed=False, frames_observed=state.frames_observed + 1)
    if led_on == state.current_run_is_on:
        return replace(state, current_run_length=state.current_run_length + 1,
                       frames_observed=state.frames_observed + 1)
    runs, whole = state.completed_on_runs, state.whole_runs
    if state.current_run_is_on:
        keep = state.history_limit
        runs = (runs + (state.current_run_length,))[-keep:]
        whole = (whole + (state.run_start_observed,))[-keep:]
    return IdState(led_on, 1, True, runs, whole, state.frames_observed + 1, state.history_limit)


def mark_gap(state: IdState) -> IdState:
    """The vehicle was missing for some frames: drop the run in progress."""
    if state.current_run_is_on is None:
        return state
    return replace(state, current_run_is_on=None, current_run_length=0, run_start_observed=False)


def representative_run(state: IdState) -> int | None:
    runs = [r for r, w in zip(state.completed_on_runs, state.whole_runs) if w]
    if len(runs) < MIN_RUNS:
        return None
    return int(math.floor(statistics.median(runs) + 0.5))


def classify(state: IdState, table: IdTable) -> int | None:
    """Vehicle ID for the observed history, or None while pending/unknown."""
    r = representative_run(state)
    if r is None:
        return None
    return table.lookup(table.f_camera / r)


def square_wave_on(t: float, f_led: float, phase: float) -> bool:
    """LED state at time ``t`` for equal on/off half-periods of ``1/f_led``.

    ``phase`` is in half-periods, [0, 2).
    """
    return math.floor(t * f_led + phase) % 2 == 0
