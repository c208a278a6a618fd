"""Channel and PHY model: log-distance path loss, energy detection, SINR capture,
and the MCS rate ladder shared by every node.

Everything here is a pure function of immutable inputs, so callers may use these
from any thread without coordination.
"""

import math
from dataclasses import dataclass

# Aggregate power reported for an empty interferer set (silent channel).
SILENT_DBM = -200.0

THERMAL_NOISE_DBM_PER_HZ = -174.0

# Fraction of the nominal rate left after control/reference-signal overhead.
PHY_OVERHEAD_FACTOR = 0.8

# Spectral efficiency (bits/s/Hz) per MCS index, after 3GPP TS 38.214 table
# 5.1.3.1-1.  The published table dips once at the 16QAM/64QAM switch (2.5703
# ahead of 2.5664); those two entries are swapped so the ladder is strictly
# increasing, which auto rate control and the success-threshold search rely on.
MCS_TABLE = (
    0.2344, 0.3066, 0.3770, 0.4902, 0.6016, 0.7402, 0.8770, 1.0273, 1.1758,
    1.3262, 1.3281, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063, 2.5664, 2.5703,
    2.7305, 3.0293, 3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152,
    5.3320, 5.5547,
)

MCS_MIN = 0
MCS_MAX = len(MCS_TABLE) - 1


def mcs_spectral_efficiency(mcs: int) -> float:
    """Spectral efficiency in bits/s/Hz for an MCS index in [0, 28]."""
    if not MCS_MIN <= mcs <= MCS_MAX:
        raise ValueError(f"mcs index {mcs} outside [{MCS_MIN}, {MCS_MAX}]")
    return MCS_TABLE[mcs]


def phy_rate_bps(mcs: int, bandwidth_hz: float) -> float:
    """Physical-layer data rate after the fixed overhead factor."""
    return mcs_spectral_efficiency(mcs) * bandwidth_hz * PHY_OVERHEAD_FACTOR


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return SILENT_DBM
    return 10.0 * math.log10(mw)


def aggregate_power_dbm(powers_dbm) -> float:
    """Sum powers in the linear domain; empty input reports a silent channel."""
    total = 0.0
    for p in powers_dbm:
        total += dbm_to_mw(p)
    if total <= 0.0:
        return SILENT_DBM
    return mw_to_dbm(total)


def sinr_db(signal_dbm: float, interferer_dbm_list, noise_dbm: float) -> float:
    """Signal over (interference + noise), all in the dB domain."""
    denom = aggregate_power_dbm(list(interferer_dbm_list) + [noise_dbm])
    return signal_dbm - denom


@dataclass(frozen=True)
class NodePosition:
    x_m: float
    y_m: float

    def distance_m(self, other: "NodePosition") -> float:
        return math.hypot(self.x_m - other.x_m, self.y_m - other.y_m)


@dataclass(frozen=True)
class RadioConfig:
    """Static channel parameters shared by all nodes in a scenario."""

    carrier_freq_hz: float = 6.0e9
    bandwidth_hz: float = 20.0e6
    noise_figure_db: float = 7.0
    pathloss_exponent: float = 3.0
    ref_loss_db: float = 48.0
    capture_margin_db: float = 3.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be > 0")
        if self.pathloss_exponent < 2:
            raise ValueError("pathloss_exponent must be >= 2")
        if self.ref_loss_db <= 0:
            raise ValueError("ref_loss_db must be > 0")

    def noise_floor_dbm(self) -> float:
        return (THERMAL_NOISE_DBM_PER_HZ
                + 10.0 * math.log10(self.bandwidth_hz)
                + self.noise_figure_db)

    def path_loss_db(self, dist_m: float) -> float:
        """Log-distance loss; distances below 1 m clamp to the reference point."""
        d = max(dist_m, 1.0)
        return self.ref_loss_db + 10.0 * self.pathloss_exponent * math.log10(d)

    def rx_power_dbm(self, tx_power_dbm: float, src: NodePosition,
                     dst: NodePosition) -> float:
        return tx_power_dbm - self.path_loss_db(src.distance_m(dst))

    def sinr_threshold_db(self, mcs: int) -> float:
        """Minimum SINR to decode an MCS: Shannon gap plus the capture margin."""
        se = mcs_spectral_efficiency(mcs)
        return 10.0 * math.log10(2.0 ** se - 1.0) + self.capture_margin_db

    def tx_success(self, sinr_db_value: float, mcs: int) -> bool:
        """Decode decision against the worst-case SINR seen during a grant."""
        return sinr_db_value >= self.sinr_threshold_db(mcs)

    def select_mcs_auto(self, estimated_sinr_db: float) -> int:
        """Highest MCS whose decode threshold fits the SINR estimate, else 0."""
        for mcs in range(MCS_MAX, MCS_MIN, -1):
            if self.sinr_threshold_db(mcs) <= estimated_sinr_db:
                return mcs
        return MCS_MIN


def cca_assessment(cfg: RadioConfig, listener: NodePosition,
                   ed_threshold_dbm: float, active_transmitters) -> bool:
    """Clear channel assessment: True means busy.

    ``active_transmitters`` is an iterable of (tx_power_dbm, NodePosition)
    pairs and must not include the listener itself.
    """
    received = [cfg.rx_power_dbm(p, pos, listener) for p, pos in active_transmitters]
    return aggregate_power_dbm(received) > ed_threshold_dbm
