"""Run configuration, link budget, and TDD frame accounting.

A :class:`Scenario` collects every knob of a simulation run. Defaults
reproduce the reference 19-cell urban deployment: 18 users per cell,
100 antennas per sector array, 1 km cells, 20 MHz at 1900 MHz, 30 dBm
BS / 23 dBm user power, and a 420-sample coherence interval split
between pilots, uplink, and downlink with a 2:1 downlink share.

Configuration files are UTF-8 ``key = value`` text with ``#`` comments.
The canonical schema is the set of keys in :data:`CONFIG_SCHEMA`;
unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

SETTINGS = ("omni", "secmd", "secmp", "compsec", "compomn")
PRECODERS = ("mr", "zf")
POWER_STRATEGIES = ("upa", "cpa-nmf", "cpa-pmf", "dpa-nmf", "dpa-pmf")
SUPPORTED_CELL_COUNTS = (7, 19)


class ConfigError(ValueError):
    """Malformed configuration text: bad syntax, unknown key, bad value."""


class ValidationError(ValueError):
    """Configuration violates a scenario invariant."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class PathlossParams:
    """COST231-Hata sub-parameters (urban macro defaults)."""

    bs_height_m: float = 30.0
    ue_height_m: float = 1.5
    metro_correction_db: float = 3.0


@dataclass(frozen=True)
class Scenario:
    num_cells: int = 19
    users_per_cell: int = 18
    antennas_per_array: int = 100
    cell_radius_m: float = 1000.0
    exclusion_radius_m: float = 50.0
    pilot_reuse: int = 1
    carrier_frequency_hz: float = 1.9e9
    bandwidth_hz: float = 20e6
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    max_bs_power_dbm: float = 30.0
    max_user_power_dbm: float = 23.0
    coherence_bandwidth_hz: float = 210e3
    coherence_time_s: float = 2e-3
    dl_ul_ratio: float = 2.0
    pattern: str = "irp:120:3"
    pathloss: PathlossParams = field(default_factory=PathlossParams)
    # Log-normal shadowing spread. 3 dB reproduces the reference
    # deployment's rate spread; heavier shadowing widens the per-cell
    # max-min tail dramatically. Overridable via shadow_sigma_db.
    shadow_sigma_db: float = 3.0
    setting: str = "secmp"
    precoder: str = "mr"
    power_strategy: str = "cpa-pmf"
    num_drops: int = 200
    master_seed: int = 1

    def __post_init__(self):
        if self.num_cells not in SUPPORTED_CELL_COUNTS:
            raise ValidationError(f"num_cells must be one of {SUPPORTED_CELL_COUNTS}, got {self.num_cells}")
        if self.pilot_reuse not in (1, 3):
            raise ValidationError(f"pilot_reuse must be 1 or 3, got {self.pilot_reuse}")
        for name in ("users_per_cell", "antennas_per_array", "num_drops"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("cell_radius_m", "exclusion_radius_m", "carrier_frequency_hz",
                     "bandwidth_hz", "coherence_bandwidth_hz", "coherence_time_s",
                     "dl_ul_ratio"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.shadow_sigma_db < 0:
            raise ValidationError("shadow_sigma_db must be >= 0")
        if self.setting not in SETTINGS:
            raise ValidationError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.precoder not in PRECODERS:
            raise ValidationError(f"precoder must be one of {PRECODERS}, got {self.precoder!r}")
        if self.power_strategy not in POWER_STRATEGIES:
            raise ValidationError(f"power_strategy must be one of {POWER_STRATEGIES}, got {self.power_strategy!r}")
        # Frame feasibility: pilots must fit inside the coherence interval
        # with room left for data.
        derive_frame(self)


@dataclass(frozen=True)
class LinkBudget:
    """Linear transmit SNRs: max transmit power over noise power."""

    rho_ul: float
    rho_dl: float


@dataclass(frozen=True)
class FrameAccounting:
    """Sample counts within one coherence interval."""

    tau_c: int
    tau_p: int
    tau_ul: int
    tau_dl: int


def derive_link_budget(s: Scenario) -> LinkBudget:
    """Noise power from density/bandwidth/figure, then dB -> linear SNRs."""
    noise_dbm = s.noise_density_dbm_hz + 10.0 * math.log10(s.bandwidth_hz) + s.noise_figure_db
    rho_dl = db_to_linear(s.max_bs_power_dbm - noise_dbm)
    rho_ul = db_to_linear(s.max_user_power_dbm - noise_dbm)
    return LinkBudget(rho_ul=rho_ul, rho_dl=rho_dl)


def derive_frame(s: Scenario) -> FrameAccounting:
    """Split the coherence interval into pilot, uplink, and downlink samples.

    The downlink share is floored and the remainder goes to the uplink,
    which keeps the rate prelog conservative. Raises if the pilots do
    not leave at least one data sample.
    """
    tau_c = int(round(s.coherence_time_s * s.coherence_bandwidth_hz))
    tau_p = s.pilot_reuse * s.users_per_cell
    if tau_p >= tau_c:
        raise ValidationError(
            f"infeasible frame: tau_p={tau_p} >= tau_c={tau_c} "
            f"(users_per_cell * pilot_reuse too large for the coherence interval)")
    data = tau_c - tau_p
    tau_dl = int(math.floor(s.dl_ul_ratio * data / (1.0 + s.dl_ul_ratio)))
    tau_ul = data - tau_dl
    return FrameAccounting(tau_c=tau_c, tau_p=tau_p, tau_ul=tau_ul, tau_dl=tau_dl)


# --- configuration text -------------------------------------------------

# key -> (target, converter); "pathloss.<field>" targets the nested params
_INT_KEYS = {"num_cells", "users_per_cell", "antennas_per_array", "pilot_reuse",
             "num_drops", "master_seed"}
_STR_KEYS = {"pattern", "setting", "precoder", "power_strategy"}
_FLOAT_KEYS = {"cell_radius_m", "exclusion_radius_m", "carrier_frequency_hz",
               "bandwidth_hz", "noise_density_dbm_hz", "noise_figure_db",
               "max_bs_power_dbm", "max_user_power_dbm", "coherence_bandwidth_hz",
               "coherence_time_s", "dl_ul_ratio", "shadow_sigma_db"}
_PATHLOSS_KEYS = {"pathloss_bs_height_m": "bs_height_m",
                  "pathloss_ue_height_m": "ue_height_m",
                  "pathloss_metro_correction_db": "metro_correction_db"}

CONFIG_SCHEMA = tuple(sorted(_INT_KEYS | _STR_KEYS | _FLOAT_KEYS | set(_PATHLOSS_KEYS)))


def load_scenario(config_text: str, **overrides) -> Scenario:
    """Parse ``key = value`` text into a validated :class:`Scenario`.

    Keyword overrides (matching Scenario field names) are applied after
    the file values; the CLI uses them for its flags.
    """
    values: dict = {}
    pathloss_values: dict = {}
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not val:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _STR_KEYS:
                values[key] = val.lower()
            elif key in _PATHLOSS_KEYS:
                pathloss_values[_PATHLOSS_KEYS[key]] = float(val)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    if pathloss_values:
        values["pathloss"] = PathlossParams(**pathloss_values)
    values.update(overrides)
    return Scenario(**values)


def scenario_to_dict(s: Scenario) -> dict:
    """Flat dict echo of a scenario (for summary output)."""
    out = {}
    for name in (f.name for f in s.__dataclass_fields__.values()):  # type: ignore[attr-defined]
        val = getattr(s, name)
        if isinstance(val, PathlossParams):
            out["pathloss_bs_height_m"] = val.bs_height_m
            out["pathloss_ue_height_m"] = val.ue_height_m
            out["pathloss_metro_correction_db"] = val.metro_correction_db
        else:
            out[name] = val
    return out


def with_overrides(s: Scenario, **kw) -> Scenario:
    return replace(s, **kw)
