"""Multi-agent POMDP environment over the listen-before-talk channel.

One decision step advances an event-driven simulation by 0.1 s: traffic
arrives, per-node LBT machines contend, grants transmit and succeed or fail on
worst-case SINR at the serving user.  The engine works on an integer
microsecond time base so its event timeline is bit-identical to a 1 us tick
reference.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import lbt, radio, traffic
from .lbt import BackoffType, MacConfig, Phase
from .radio import NodePosition, RadioConfig
from .traffic import PACKET_BITS, TrafficSpec

# Raw index count per action dimension (sensing slot, backoff type, CW_min,
# MCOT, MCS, defer prefix, ED threshold, tx power).
ACTION_DIMS = (21, 4, 64, 11, 29, 21, 31, 21)

# Weight of the airtime penalty in the per-agent reward.
REWARD_ALPHA = 0.3

# Baseline MCOT per traffic class (ms): best-effort Poisson gets the long
# occupancy, latency-sensitive AR/VR the shorter one.
BASELINE_MCOT_MS = {"poisson": 8, "arvr": 5}

# Fixed observation scaling bounds (determinism over adaptivity).
OBS_RSSI_LO = -200.0
OBS_RSSI_HI = -20.0
OBS_THROUGHPUT_SCALE = radio.phy_rate_bps(radio.MCS_MAX, 20e6)
OBS_TRAFFIC_SCALE = traffic.LAMBDA_MAX_PPS
OBS_DELAY_SCALE = 0.1

OBS_DIM = len(ACTION_DIMS) + 7


class ScenarioError(ValueError):
    """A scenario field failed validation; the message names the field."""


def decode_action(raw) -> MacConfig:
    """Map raw per-dimension indices onto physical MAC block values."""
    if len(raw) != len(ACTION_DIMS):
        raise ScenarioError(f"action tuple needs {len(ACTION_DIMS)} indices")
    for k, (idx, dim) in enumerate(zip(raw, ACTION_DIMS)):
        if not 0 <= int(idx) < dim:
            raise ScenarioError(f"action dimension {k}: index {idx} outside "
                                f"[0, {dim - 1}]")
    i1, i2, i3, i4, i5, i6, i7, i8 = (int(v) for v in raw)
    return MacConfig(
        sensing_slot_us=i1,
        backoff_type=BackoffType(i2),
        cw_min=i3,
        mcot_ms=i4,
        mcs=i5,
        defer_us=i6,
        ed_threshold_dbm=-90 + i7,
        tx_power_dbm=10 + i8,
    ).validate()


def encode_config(cfg: MacConfig, resolved_mcs: int) -> tuple:
    """Inverse of decode_action; auto rate control reports its resolved index."""
    mcs = cfg.mcs if cfg.mcs is not None else resolved_mcs
    return (cfg.sensing_slot_us, int(cfg.backoff_type), cfg.cw_min,
            cfg.mcot_ms, mcs, cfg.defer_us, cfg.ed_threshold_dbm + 90,
            cfg.tx_power_dbm - 10)


def standard_mac_config(kind: str) -> MacConfig:
    """Table of standard channel-access values used at reset and as baseline."""
    return MacConfig(sensing_slot_us=9, backoff_type=BackoffType.BEB,
                     cw_min=15, mcot_ms=BASELINE_MCOT_MS[kind], mcs=None,
                     defer_us=16, ed_threshold_dbm=-62, tx_power_dbm=23)


@dataclass
class StepMetrics:
    """Per-node accounting for one decision step."""

    throughput_bps: float = 0.0
    mean_delay_s: float = 0.0
    delay_defined: bool = False
    own_airtime_frac: float = 0.0
    foreign_airtime_frac: float = 0.0
    tx_attempts: int = 0
    tx_failures: int = 0
    arrival_pps: float = 0.0
    delivered_packets: int = 0


@dataclass(frozen=True)
class Observation:
    """One agent's partial view of the last step."""

    current_action: tuple
    nn_visible: int
    rssi_c_dbm: float
    rssi_i_dbm: float
    throughput_bps: float
    traffic_rate_pps: float
    delay_s: float
    foreign_airtime_frac: float

    def vector(self) -> np.ndarray:
        """Fixed-bound scaling of every field for the policy/value networks."""
        out = np.empty(OBS_DIM, dtype=np.float64)
        for k, (idx, dim) in enumerate(zip(self.current_action, ACTION_DIMS)):
            out[k] = idx / (dim - 1)
        base = len(ACTION_DIMS)

        def rssi_scale(v):
            v = min(max(v, OBS_RSSI_LO), OBS_RSSI_HI)
            return 2.0 * (v - OBS_RSSI_LO) / (OBS_RSSI_HI - OBS_RSSI_LO) - 1.0

        out[base + 0] = self.nn_visible / 5.0
        out[base + 1] = rssi_scale(self.rssi_c_dbm)
        out[base + 2] = rssi_scale(self.rssi_i_dbm)
        out[base + 3] = min(self.throughput_bps / OBS_THROUGHPUT_SCALE, 1.0)
        out[base + 4] = min(self.traffic_rate_pps / OBS_TRAFFIC_SCALE, 1.0)
        out[base + 5] = min(self.delay_s, OBS_DELAY_SCALE) / OBS_DELAY_SCALE
        out[base + 6] = self.foreign_airtime_frac
        return out


@dataclass(frozen=True)
class TrafficProfile:
    """Per-node traffic description in a scenario; ranges are drawn per episode."""

    kind: str = "poisson"
    lambda_pps: float | None = None
    lambda_range: tuple | None = None
    fps: float = 60.0
    frame_bytes_mean: float | None = None
    frame_sigma_frac: float = 0.1
    offered_range_bps: tuple | None = None

    def validate(self, name="traffic"):
        if self.kind not in ("poisson", "arvr"):
            raise ScenarioError(f"{name}.kind: {self.kind!r} not poisson|arvr")
        if self.kind == "poisson":
            if (self.lambda_pps is None) == (self.lambda_range is None):
                raise ScenarioError(
                    f"{name}: give exactly one of lambda/lambda_range")
            values = ([self.lambda_pps] if self.lambda_pps is not None
                      else list(self.lambda_range))
            for v in values:
                if not 0.0 <= v <= traffic.LAMBDA_MAX_PPS:
                    raise ScenarioError(
                        f"{name}.lambda: {v} outside [0, "
                        f"{traffic.LAMBDA_MAX_PPS:g}]")
            if self.lambda_range is not None and \
                    self.lambda_range[0] > self.lambda_range[1]:
                raise ScenarioError(f"{name}.lambda_range: lo > hi")
        else:
            if self.fps <= 0:
                raise ScenarioError(f"{name}.fps must be > 0")
            if (self.frame_bytes_mean is None) == (self.offered_range_bps is None):
                raise ScenarioError(
                    f"{name}: give exactly one of frame_bytes_mean/"
                    "offered_range_bps")
        return self

    def materialize(self, rng) -> TrafficSpec:
        if self.kind == "poisson":
            lam = self.lambda_pps
            if lam is None:
                lo, hi = self.lambda_range
                lam = float(rng.uniform(lo, hi))
            return TrafficSpec(kind="poisson", lambda_pps=lam).validate()
        mean = self.frame_bytes_mean
        if mean is None:
            lo, hi = self.offered_range_bps
            offered = float(rng.uniform(lo, hi))
            mean = offered / (8.0 * self.fps)
        return TrafficSpec(kind="arvr", fps=self.fps, frame_bytes_mean=mean,
                           frame_bytes_sigma=self.frame_sigma_frac * mean
                           ).validate()


@dataclass(frozen=True)
class ScenarioConfig:
    num_gnbs: int = 2
    area_m: float = 200.0
    gnb_positions: object = "random"
    ue_per_gnb: int = 1
    ue_positions: object = "random"
    ue_ring_m: tuple = (5.0, 25.0)
    traffic: tuple = (TrafficProfile(lambda_pps=1000.0),)
    step_s: float = 0.1
    episode_s: float = 50.0
    seed: int = 0
    d_slots: int = 3
    radio: RadioConfig = field(default_factory=RadioConfig)
    label: str = ""

    def episode_steps(self) -> int:
        return int(round(self.episode_s / self.step_s))

    def profiles(self) -> list:
        if len(self.traffic) == 1:
            return [self.traffic[0]] * self.num_gnbs
        return list(self.traffic)

    def validate(self):
        if not 1 <= self.num_gnbs <= 6:
            raise ScenarioError(f"num_gnbs: {self.num_gnbs} outside [1, 6]")
        if self.area_m <= 0:
            raise ScenarioError("area_m must be > 0")
        if self.ue_per_gnb < 1:
            raise ScenarioError("ue_per_gnb must be >= 1")
        if self.step_s <= 0 or self.episode_s <= 0:
            raise ScenarioError("step_s and episode_s must consist of > 0")
        steps = self.episode_s / self.step_s
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ScenarioError("episode_s: must be an integral number of steps")
        if round(self.step_s * 1e6) != self.step_s * 1e6:
            raise ScenarioError("step_s: must be a whole number of microseconds")
        if self.d_slots < 0:
            raise ScenarioError("d_slots must be >= 0")
        if len(self.traffic) not in (1, self.num_gnbs):
            raise ScenarioError(
                f"traffic: need 1 or {self.num_gnbs} entries, "
                f"got {len(self.traffic)}")
        for k, prof in enumerate(self.traffic):
            prof.validate(name=f"traffic[{k}]")
        if self.gnb_positions != "random":
            if len(self.gnb_positions) != self.num_gnbs:
                raise ScenarioError("gnb_positions: wrong length")
            for x, y in self.gnb_positions:
                if not (0 <= x <= self.area_m and 0 <= y <= self.area_m):
                    raise ScenarioError(
                        f"gnb_positions: ({x}, {y}) outside the area")
        if self.ue_positions != "random":
            if len(self.ue_positions) != self.num_gnbs:
                raise ScenarioError("ue_positions: wrong length")
            for per_gnb in self.ue_positions:
                if len(per_gnb) != self.ue_per_gnb:
                    raise ScenarioError("ue_positions: wrong per-gNB length")
        return self


def normalize_in_range(value, neighbor_values) -> float:
    """Self-inclusive share of a quantity among the nodes that can sense it."""
    if value < 0:
        raise ValueError("value must be >= 0")
    denom = value + sum(neighbor_values)
    if denom <= 0:
        return 0.0
    return value / denom


def compute_reward(node_idx: int, metrics, visible_sets,
                   alpha: float = REWARD_ALPHA) -> float:
    """Normalized throughput-to-demand ratio minus the airtime penalty."""
    vis = visible_sets[node_idx]
    me = metrics[node_idx]
    th = normalize_in_range(me.throughput_bps,
                            [metrics[j].throughput_bps for j in vis])
    lam = normalize_in_range(me.arrival_pps,
                             [metrics[j].arrival_pps for j in vis])
    air = normalize_in_range(me.own_airtime_frac,
                             [metrics[j].own_airtime_frac for j in vis])
    ratio = th / lam if lam > 0 else 0.0
    reward = ratio - alpha * air
    if not math.isfinite(reward):
        raise RuntimeError(f"non-finite reward for node {node_idx}")
    return reward


def objective_mean_throughput(trace) -> float:
    """Global objective: throughput averaged over all steps and nodes."""
    values = [m.throughput_bps for step in trace for m in step]
    if not values:
        raise ValueError("empty episode trace")
    return sum(values) / len(values)


class _Node:
    """Engine-side state for one gNB."""

    __slots__ = ("idx", "cfg", "state", "t_df_us", "mcot_us", "thr_mw",
                 "rate_bps", "mcs_resolved", "sinr_thr_db", "rx_gnb_mw",
                 "rx_ue_mw", "queue", "rng", "spec")

    def __init__(self, idx, cfg, d_slots, rng):
        self.idx = idx
        self.queue = deque()
        self.rng = rng
        self.spec = None
        self.apply_config(cfg, d_slots)

    def apply_config(self, cfg: MacConfig, d_slots: int):
        self.cfg = cfg
        self.t_df_us = lbt.defer_duration_us(cfg.defer_us, d_slots,
                                             cfg.sensing_slot_us)
        self.mcot_us = cfg.mcot_ms * 1000
        self.thr_mw = radio.dbm_to_mw(cfg.ed_threshold_dbm)
        self.state = lbt.new_lbt_state(cfg, self.t_df_us)
        self.rate_bps = 0.0
        self.mcs_resolved = 0
        self.sinr_thr_db = 0.0
        self.rx_gnb_mw = None
        self.rx_ue_mw = None


class MacEnv:
    """Synchronous multi-agent environment; one instance per episode stream."""

    def __init__(self, scenario: ScenarioConfig):
        scenario.validate()
        self.scenario = scenario
        self._radio = scenario.radio
        self._noise_mw = radio.dbm_to_mw(self._radio.noise_floor_dbm())
        self._step_us = int(round(scenario.step_s * 1e6))
        self._episode_steps = scenario.episode_steps()
        self._nodes = []
        self._done = True
        self.last_events = []
        self.last_metrics = []

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed=None):
        sc = self.scenario
        entropy = sc.seed if seed is None else seed
        if not isinstance(entropy, tuple):
            entropy = (int(entropy),)
        ss = np.random.SeedSequence(entropy)
        children = ss.spawn(2 + 2 * sc.num_gnbs)
        place_rng = np.random.default_rng(children[0])
        param_rng = np.random.default_rng(children[1])
        node_streams = children[2:]

        self.gnb_pos = self._place_gnbs(place_rng)
        self.ue_pos = self._place_ues(place_rng)
        self._build_pathloss()

        profiles = sc.profiles()
        self._nodes = []
        for i in range(sc.num_gnbs):
            spec = profiles[i].materialize(param_rng)
            node = _Node(i, standard_mac_config(spec.kind), sc.d_slots,
                         np.random.default_rng(node_streams[2 * i + 1]))
            node.spec = spec
            self._nodes.append(node)
        self._traffic_rngs = [np.random.default_rng(node_streams[2 * i])
                              for i in range(sc.num_gnbs)]

        self._grants = [None] * sc.num_gnbs
        self._t_us = 0
        self._step_idx = 0
        self._done = False
        self.last_events = []
        self._resolve_rates()
        zero = [StepMetrics() for _ in range(sc.num_gnbs)]
        self.last_metrics = zero
        return [self._observation(i, zero[i]) for i in range(sc.num_gnbs)]

    def _place_gnbs(self, rng):
        sc = self.scenario
        if sc.gnb_positions == "random":
            xy = rng.uniform(0.0, sc.area_m, size=(sc.num_gnbs, 2))
            return [NodePosition(float(x), float(y)) for x, y in xy]
        return [NodePosition(float(x), float(y)) for x, y in sc.gnb_positions]

    def _place_ues(self, rng):
        sc = self.scenario
        if sc.ue_positions != "random":
            return [[NodePosition(float(x), float(y)) for x, y in per]
                    for per in sc.ue_positions]
        lo, hi = sc.ue_ring_m
        out = []
        for gpos in self.gnb_pos:
            per = []
            for _ in range(sc.ue_per_gnb):
                r = rng.uniform(lo, hi)
                theta = rng.uniform(0.0, 2.0 * math.pi)
                x = min(max(gpos.x_m + r * math.cos(theta), 0.0), sc.area_m)
                y = min(max(gpos.y_m + r * math.sin(theta), 0.0), sc.area_m)
                per.append(NodePosition(x, y))
            out.append(per)
        return out

    def _build_pathloss(self):
        n = self.scenario.num_gnbs
        rc = self._radio
        self._pl_gnb = [[0.0] * n for _ in range(n)]
        self._pl_ue = [[0.0] * n for _ in range(n)]
        for j in range(n):
            for i in range(n):
                if i != j:
                    self._pl_gnb[j][i] = rc.path_loss_db(
                        self.gnb_pos[j].distance_m(self.gnb_pos[i]))
                # Serving user of node i (first in its list).
                self._pl_ue[j][i] = rc.path_loss_db(
                    self.gnb_pos[j].distance_m(self.ue_pos[i][0]))

    def _resolve_rates(self):
        noise = self._radio.noise_floor_dbm()
        n = self.scenario.num_gnbs
        for node in self._nodes:
            i = node.idx
            if node.cfg.mcs is not None:
                node.mcs_resolved = node.cfg.mcs
            else:
                snr = (node.cfg.tx_power_dbm - self._pl_ue[i][i]) - noise
                node.mcs_resolved = self._radio.select_mcs_auto(snr)
            node.rate_bps = radio.phy_rate_bps(node.mcs_resolved,
                                               self._radio.bandwidth_hz)
            node.sinr_thr_db = self._radio.sinr_threshold_db(node.mcs_resolved)
            # Received-power vectors for grants started this step; in-flight
            # grants keep the vectors captured when they began.
            power = node.cfg.tx_power_dbm
            pl_g = self._pl_gnb[i]
            pl_u = self._pl_ue[i]
            node.rx_gnb_mw = [0.0 if j == i else
                              radio.dbm_to_mw(power - pl_g[j])
                              for j in range(n)]
            node.rx_ue_mw = [radio.dbm_to_mw(power - pl_u[j])
                             for j in range(n)]

    # -- stepping ------------------------------------------------------------

    def step(self, actions):
        configs = [decode_action(a) for a in actions]
        return self._step_impl(configs)

    def step_with_configs(self, configs):
        for cfg in configs:
            cfg.validate()
        return self._step_impl(list(configs))

    def _step_impl(self, configs):
        if self._done:
            raise RuntimeError("episode is done; call reset()")
        sc = self.scenario
        if len(configs) != sc.num_gnbs:
            raise ScenarioError(f"need {sc.num_gnbs} actions, got {len(configs)}")
        for node, cfg in zip(self._nodes, configs):
            if cfg != node.cfg:
                # A protocol change restarts the access attempt; an in-flight
                # grant keeps its frozen parameters until it ends.
                old_state = node.state
                queue = node.queue
                node.apply_config(cfg, sc.d_slots)
                node.queue = queue
                if self._grants[node.idx] is not None:
                    node.state.phase = old_state.phase
                    node.state.tx_end_time_us = old_state.tx_end_time_us
        self._resolve_rates()

        t0, t1 = self._t_us, self._t_us + self._step_us
        arrivals = [traffic.arrival_times_us(node.spec, t0, t1,
                                             self._traffic_rngs[node.idx])
                    for node in self._nodes]
        window = self._run_window(t0, t1, arrivals)
        self._t_us = t1
        self._step_idx += 1
        self._done = self._step_idx >= self._episode_steps

        metrics = []
        step_s = sc.step_s
        for i in range(sc.num_gnbs):
            cnt = window["delivered_cnt"][i]
            metrics.append(StepMetrics(
                throughput_bps=window["delivered_bits"][i] / step_s,
                mean_delay_s=window["delay_sum"][i] / cnt if cnt else 0.0,
                delay_defined=cnt > 0,
                own_airtime_frac=window["own_air"][i] / self._step_us,
                foreign_airtime_frac=window["busy_air"][i] / self._step_us,
                tx_attempts=window["attempts"][i],
                tx_failures=window["failures"][i],
                arrival_pps=len(arrivals[i]) / step_s,
                delivered_packets=cnt,
            ))
        self.last_metrics = metrics
        visible = [self.visible_set(i) for i in range(sc.num_gnbs)]
        rewards = [compute_reward(i, metrics, visible) for i in range(sc.num_gnbs)]
        obs = [self._observation(i, metrics[i]) for i in range(sc.num_gnbs)]
        return obs, rewards, metrics, self._done

    # -- the event engine ----------------------------------------------------

    def _run_window(self, t0, t1, arrivals):
        nodes = self._nodes
        n = len(nodes)
        noise_mw = self._noise_mw
        grants = self._grants
        events = self.last_events = []
        PH_DEFER = int(Phase.DEFERRING)
        PH_BACKOFF = int(Phase.BACKOFF)
        G_START, G_END, G_BUDGET, G_RATE, G_THR, G_RXGNB, G_RXUE, G_WORST = \
            range(8)

        own_air = [0] * n
        busy_air = [0] * n
        delivered_bits = [0] * n
        delivered_cnt = [0] * n
        delay_sum = [0.0] * n
        attempts = [0] * n
        failures = [0] * n
        ptr = [0] * n
        busy = [False] * n
        itot = [0.0] * n
        n_arr = [len(a) for a in arrivals]

        def start_grant(i, now):
            node = nodes[i]
            attempts[i] += 1
            budget = lbt.tx_grant_duration_us(len(node.queue) * PACKET_BITS,
                                              node.rate_bps, node.mcot_us)
            lbt.start_grant(node.state, now, budget)
            grants[i] = [now, now + budget, budget, node.rate_bps,
                         node.sinr_thr_db, node.rx_gnb_mw, node.rx_ue_mw,
                         math.inf]
            events.append((now, i, "start"))

        def finalize_grant(i, g):
            node = nodes[i]
            # Decode against the worst-case SINR seen while the grant aired.
            success = radio.mw_to_dbm(g[G_WORST]) >= g[G_THR]
            if success:
                k = traffic.packets_fitting(g[G_BUDGET], g[G_RATE],
                                            PACKET_BITS, len(node.queue))
                airtime_s = PACKET_BITS / g[G_RATE]
                start_s = g[G_START] * 1e-6
                pop = node.queue.popleft
                for m in range(k):
                    delay_sum[i] += start_s + (m + 1) * airtime_s - pop() * 1e-6
                delivered_cnt[i] += k
                delivered_bits[i] += k * PACKET_BITS
            else:
                failures[i] += 1
            lbt.end_grant(node.state, node.cfg, node.t_df_us, success)
            events.append((g[G_END], i, "end"))

        t = t0
        while t < t1:
            # Grants finishing now.
            for i in range(n):
                g = grants[i]
                if g is not None and g[G_END] == t:
                    grants[i] = None
                    finalize_grant(i, g)
            # Arrivals up to and including now.
            for i in range(n):
                arr = arrivals[i]
                p = ptr[i]
                if p < n_arr[i] and arr[p] <= t:
                    q = nodes[i].queue
                    while p < n_arr[i] and arr[p] <= t:
                        q.append(arr[p])
                        p += 1
                    ptr[i] = p
            # Due countdown completions and zero-length chains.  Starting a
            # grant changes the channel, so re-settle until no-one else fires.
            # Interference is summed fresh in node-index order every pass so an
            # independent tick-level reference reproduces the exact floats.
            for _pass in range(n + 2):
                for i in range(n):
                    itot[i] = 0.0
                for j in range(n):
                    g = grants[j]
                    if g is not None:
                        rx = g[G_RXGNB]
                        for i in range(n):
                            if i != j:
                                itot[i] += rx[i]
                started = False
                for i in range(n):
                    node = nodes[i]
                    busy[i] = itot[i] > node.thr_mw
                    if grants[i] is not None or node.mcot_us == 0 \
                            or not node.queue:
                        continue
                    st = node.state
                    if st.phase == PH_BACKOFF and st.backoff_counter == 0:
                        start_grant(i, t)
                        started = True
                    elif busy[i]:
                        lbt.pin_or_freeze(st, node.t_df_us)
                    elif st.phase == PH_DEFER and st.defer_remaining_us == 0:
                        if lbt.enter_backoff(st, node.cfg, node.rng):
                            start_grant(i, t)
                            started = True
                if not started:
                    break
            else:
                raise RuntimeError("channel settle did not converge")

            # Worst-case SINR sample for every active grant on this segment.
            for i in range(n):
                g = grants[i]
                if g is None:
                    continue
                inter = 0.0
                for j in range(n):
                    if j != i:
                        h = grants[j]
                        if h is not None:
                            inter += h[G_RXUE][i]
                ratio = g[G_RXUE][i] / (inter + noise_mw)
                if ratio < g[G_WORST]:
                    g[G_WORST] = ratio

            # Time to the next state change anywhere.
            dt = t1 - t
            for i in range(n):
                node = nodes[i]
                g = grants[i]
                if g is not None:
                    d = g[G_END] - t
                elif node.mcot_us == 0:
                    continue
                elif not node.queue:
                    p = ptr[i]
                    if p >= n_arr[i]:
                        continue
                    d = arrivals[i][p] - t
                elif busy[i]:
                    continue
                else:
                    st = node.state
                    if st.phase == PH_DEFER:
                        d = st.defer_remaining_us
                    else:
                        d = (st.backoff_counter * node.cfg.sensing_slot_us
                             - st.slot_progress_us)
                if d < dt:
                    dt = d
            if dt <= 0:
                raise RuntimeError(f"engine stalled at t={t}")

            # Account the segment and materialize idle progress.
            for i in range(n):
                node = nodes[i]
                if grants[i] is not None:
                    own_air[i] += dt
                    if busy[i]:
                        busy_air[i] += dt
                    continue
                if busy[i]:
                    busy_air[i] += dt
                elif node.queue and node.mcot_us > 0:
                    st = node.state
                    if st.phase == PH_DEFER:
                        st.defer_remaining_us -= dt
                    else:
                        slot = node.cfg.sensing_slot_us
                        total = st.slot_progress_us + dt
                        st.backoff_counter -= total // slot
                        st.slot_progress_us = total % slot
            t += dt

        # Arrivals after the last event still belong to this window's queues.
        for i in range(n):
            if ptr[i] < n_arr[i]:
                nodes[i].queue.extend(arrivals[i][ptr[i]:])

        return {"own_air": own_air, "busy_air": busy_air,
                "delivered_bits": delivered_bits,
                "delivered_cnt": delivered_cnt, "delay_sum": delay_sum,
                "attempts": attempts, "failures": failures}

    # -- observations --------------------------------------------------------

    def visible_set(self, i):
        """Other gNBs whose signal exceeds node i's ED threshold."""
        out = []
        thr = self._nodes[i].cfg.ed_threshold_dbm
        for j, other in enumerate(self._nodes):
            if j != i and other.cfg.tx_power_dbm - self._pl_gnb[j][i] > thr:
                out.append(j)
        return out

    def visible_nodes(self, i, ed_threshold_dbm=None) -> int:
        if ed_threshold_dbm is None:
            return len(self.visible_set(i))
        count = 0
        for j, other in enumerate(self._nodes):
            if j != i and \
                    other.cfg.tx_power_dbm - self._pl_gnb[j][i] > ed_threshold_dbm:
                count += 1
        return count

    def _observation(self, i, m: StepMetrics) -> Observation:
        node = self._nodes[i]
        rssi_c = node.cfg.tx_power_dbm - self._pl_ue[i][i]
        others = [self._nodes[j].cfg.tx_power_dbm - self._pl_gnb[j][i]
                  for j in range(len(self._nodes)) if j != i]
        return Observation(
            current_action=encode_config(node.cfg, node.mcs_resolved),
            nn_visible=len(self.visible_set(i)),
            rssi_c_dbm=rssi_c,
            rssi_i_dbm=radio.aggregate_power_dbm(others),
            throughput_bps=m.throughput_bps,
            traffic_rate_pps=m.arrival_pps,
            delay_s=m.mean_delay_s,
            foreign_airtime_frac=m.foreign_airtime_frac,
        )

    # -- introspection for tests and the harness ------------------------------

    @property
    def done(self):
        return self._done

    @property
    def num_agents(self):
        return self.scenario.num_gnbs

    def traffic_specs(self):
        return [node.spec for node in self._nodes]

    def queued_packets(self):
        return [len(node.queue) for node in self._nodes]
