"""Composable listen-before-talk channel access.

Per-node state machine built from the configurable MAC blocks: an idle defer
prefix, CCA sensing slots, four backoff disciplines and MCOT-limited grants.
All durations are integer microseconds so an event-driven scheduler and a
1 us tick loop produce identical timelines.
"""

import math
from dataclasses import dataclass, replace
from enum import IntEnum


class BackoffType(IntEnum):
    # Order matches the action-space index for the backoff dimension.
    OFF = 0
    EDID = 1
    BEB = 2
    CONSTANT = 3


CW_MAX = 63

# Action-space value ranges for each MAC block parameter.
SENSING_SLOT_RANGE_US = (0, 20)
CW_MIN_RANGE = (0, 63)
MCOT_RANGE_MS = (0, 10)
MCS_RANGE = (0, 28)
DEFER_RANGE_US = (0, 20)
ED_THRESHOLD_RANGE_DBM = (-90, -60)
TX_POWER_RANGE_DBM = (10, 30)


@dataclass(frozen=True)
class MacConfig:
    """One node's MAC block selection.  ``mcs=None`` means auto rate control."""

    sensing_slot_us: int = 9
    backoff_type: BackoffType = BackoffType.BEB
    cw_min: int = 15
    mcot_ms: int = 8
    mcs: int | None = None
    defer_us: int = 16
    ed_threshold_dbm: int = -62
    tx_power_dbm: int = 23

    def validate(self):
        def _check(name, value, lo, hi):
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")

        _check("sensing_slot_us", self.sensing_slot_us, *SENSING_SLOT_RANGE_US)
        _check("cw_min", self.cw_min, *CW_MIN_RANGE)
        _check("mcot_ms", self.mcot_ms, *MCOT_RANGE_MS)
        if self.mcs is not None:
            _check("mcs", self.mcs, *MCS_RANGE)
        _check("defer_us", self.defer_us, *DEFER_RANGE_US)
        _check("ed_threshold_dbm", self.ed_threshold_dbm, *ED_THRESHOLD_RANGE_DBM)
        _check("tx_power_dbm", self.tx_power_dbm, *TX_POWER_RANGE_DBM)
        if not isinstance(self.backoff_type, BackoffType):
            raise ValueError(f"backoff_type={self.backoff_type!r} invalid")
        return self


@dataclass(frozen=True)
class LbtConfig:
    """Fixed channel-access timing not controlled by the agents."""

    t_f_us: int = 16
    cca_slot_us: int = 9
    d_slots: int = 3
    cw_max: int = CW_MAX

    def __post_init__(self):
        if self.t_f_us < 0 or self.d_slots < 0:
            raise ValueError("t_f_us and d_slots must be >= 0")


def defer_duration_us(t_f_us: int, d_slots: int, slot_us: int) -> int:
    """Total defer period: idle prefix plus the CCA observation slots."""
    if t_f_us < 0 or d_slots < 0 or slot_us < 0:
        raise ValueError("defer components must be >= 0")
    return t_f_us + d_slots * slot_us


def draw_backoff(cw: int, rng) -> int:
    """Uniform draw from {0, ..., cw-1}; cw == 0 grants immediate access.

    Implemented as floor(U * cw) from one uniform variate so independent
    simulators sharing a stream can reproduce the draw; the degenerate
    cw == 0 case consumes no randomness.
    """
    if cw <= 0:
        return 0
    return int(rng.random() * cw)


def update_cw(backoff_type: BackoffType, cw_current: int, cw_min: int,
              success: bool, cw_max: int = CW_MAX) -> int:
    """Contention-window evolution after a grant outcome."""
    if backoff_type == BackoffType.OFF:
        return 0
    if backoff_type == BackoffType.CONSTANT:
        return cw_min
    if backoff_type == BackoffType.BEB:
        if success:
            return cw_min
        return min(2 * (cw_current + 1) - 1, cw_max)
    if backoff_type == BackoffType.EDID:
        # Exponential increase on failure, exponential decrease on success.
        if success:
            return max((cw_current + 1) // 2 - 1, cw_min)
        return min(2 * (cw_current + 1) - 1, cw_max)
    raise ValueError(f"unknown backoff type {backoff_type!r}")


def tx_grant_duration_us(queue_bits: int, rate_bps: float, mcot_us: int) -> int:
    """Grant length: time to drain the queue, capped by the MCOT."""
    if queue_bits <= 0:
        return 0
    if rate_bps <= 0:
        raise ValueError("rate_bps must be > 0 for a non-empty queue")
    drain_us = math.ceil(queue_bits * 1e6 / rate_bps)
    return min(drain_us, mcot_us)


class Phase(IntEnum):
    DEFERRING = 0
    BACKOFF = 1
    TRANSMITTING = 2
    POST_TX = 3


@dataclass
class LbtState:
    """Channel-access state for one node.

    ``backoff_counter`` is None when no counter is pending; a frozen counter
    survives defer re-runs untouched.  ``slot_progress_us`` tracks the idle
    time already sensed inside the current backoff slot.
    """

    phase: Phase = Phase.DEFERRING
    defer_remaining_us: int = 0
    backoff_counter: int | None = None
    frozen: bool = False
    slot_progress_us: int = 0
    cw_current: int = 0
    tx_end_time_us: int = 0


def initial_cw(mac: MacConfig) -> int:
    return 0 if mac.backoff_type == BackoffType.OFF else mac.cw_min


def new_lbt_state(mac: MacConfig, t_df_us: int) -> LbtState:
    return LbtState(phase=Phase.DEFERRING, defer_remaining_us=t_df_us,
                    cw_current=initial_cw(mac))


def pin_or_freeze(state: LbtState, t_df_us: int):
    """Busy-channel reaction: restart the defer, retaining any counter."""
    if state.phase == Phase.BACKOFF:
        state.frozen = True
        state.slot_progress_us = 0
        state.phase = Phase.DEFERRING
        state.defer_remaining_us = t_df_us
    elif state.phase == Phase.DEFERRING:
        state.defer_remaining_us = t_df_us


def enter_backoff(state: LbtState, mac: MacConfig, rng) -> bool:
    """Defer completed: arm the backoff stage.  Returns True for instant access."""
    if mac.backoff_type == BackoffType.OFF:
        state.backoff_counter = 0
    elif state.backoff_counter is None:
        state.backoff_counter = draw_backoff(state.cw_current, rng)
    if mac.sensing_slot_us == 0:
        # Zero-length sensing slots: the countdown elapses instantaneously.
        state.backoff_counter = 0
    state.frozen = False
    state.slot_progress_us = 0
    state.phase = Phase.BACKOFF
    return state.backoff_counter == 0


def idle_transition_us(state: LbtState, mac: MacConfig) -> int | None:
    """Microseconds of continued idle channel until the next visible transition."""
    if state.phase == Phase.DEFERRING:
        return state.defer_remaining_us
    if state.phase == Phase.BACKOFF:
        return state.backoff_counter * mac.sensing_slot_us - state.slot_progress_us
    return None


def advance_idle(state: LbtState, mac: MacConfig, dt_us: int) -> bool:
    """Materialize dt_us of idle sensing.  Returns True when the countdown hit 0.

    Callers must not advance past the transition time reported by
    ``idle_transition_us``.
    """
    if state.phase == Phase.DEFERRING:
        state.defer_remaining_us -= dt_us
        if state.defer_remaining_us < 0:
            raise RuntimeError("advanced past defer completion")
        return state.defer_remaining_us == 0
    if state.phase == Phase.BACKOFF:
        total = state.slot_progress_us + dt_us
        slots = total // mac.sensing_slot_us
        state.slot_progress_us = total % mac.sensing_slot_us
        state.backoff_counter -= slots
        if state.backoff_counter < 0:
            raise RuntimeError("advanced past backoff completion")
        return state.backoff_counter == 0
    raise RuntimeError(f"advance_idle in phase {state.phase}")


def start_grant(state: LbtState, now_us: int, grant_us: int):
    state.phase = Phase.TRANSMITTING
    state.tx_end_time_us = now_us + grant_us
    state.backoff_counter = None
    state.frozen = False
    state.slot_progress_us = 0


def end_grant(state: LbtState, mac: MacConfig, t_df_us: int, success: bool):
    state.cw_current = update_cw(mac.backoff_type, state.cw_current,
                                 mac.cw_min, success)
    state.phase = Phase.DEFERRING
    state.defer_remaining_us = t_df_us


EVENT_TX_START = "tx_start"
EVENT_TX_END = "tx_end"


def lbt_advance(state: LbtState, mac: MacConfig, lbt: LbtConfig,
                channel_busy: bool, now_us: int, rng,
                queue_bits: int = 0, rate_bps: float = 1.0):
    """Single-microsecond reference transition covering [now_us, now_us + 1).

    Returns ``(new_state, events)`` where events is a tuple of the
    ``tx_start`` / ``tx_end`` events emitted at ``now_us``.  Contention-window
    updates on tx_end are the caller's job (the outcome is not known here).
    This is the canonical semantics the event-driven engine must match.
    """
    s = replace(state)
    events = []
    t_df = defer_duration_us(mac.defer_us, lbt.d_slots, mac.sensing_slot_us)
    mcot_us = mac.mcot_ms * 1000

    # Boundary work at now_us: finish a grant, then fire any due tx_start.
    if s.phase == Phase.TRANSMITTING:
        if now_us > s.tx_end_time_us:
            raise RuntimeError("missed a tx_end boundary")
        if now_us == s.tx_end_time_us:
            events.append(EVENT_TX_END)
            s.phase = Phase.POST_TX

    contending = s.phase in (Phase.DEFERRING, Phase.BACKOFF, Phase.POST_TX)
    if contending:
        if s.phase == Phase.POST_TX:
            s.phase = Phase.DEFERRING
            s.defer_remaining_us = t_df
        if queue_bits > 0 and mcot_us > 0:
            if s.phase == Phase.DEFERRING and s.defer_remaining_us == 0:
                enter_backoff(s, mac, rng)
            if s.phase == Phase.BACKOFF and s.backoff_counter == 0:
                grant = tx_grant_duration_us(queue_bits, rate_bps, mcot_us)
                start_grant(s, now_us, grant)
                events.append(EVENT_TX_START)

    # Interval work over [now_us, now_us + 1).
    if s.phase in (Phase.DEFERRING, Phase.BACKOFF):
        if queue_bits <= 0 or mcot_us <= 0:
            s.phase = Phase.DEFERRING
            s.defer_remaining_us = t_df
            s.slot_progress_us = 0
        elif channel_busy:
            pin_or_freeze(s, t_df)
        else:
            done = advance_idle(s, mac, 1)
            if done and s.phase == Phase.DEFERRING:
                enter_backoff(s, mac, rng)

    return s, tuple(events)
