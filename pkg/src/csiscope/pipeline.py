"""Priority-ordered, runtime-reconfigurable preprocessing plugin chain.

Every preprocessing step is an independently togglable plugin; enabled plugins
run in ascending priority (ties broken by id). Config mutations produce a new
ChainConfig with a bumped version and take effect at the next frame boundary,
never mid-frame.

Shipped plugins:

    mac-filter   keep frames whose source MAC is on the allowlist
    reorder      FFT order -> linear subcarrier order
    extract      split complex samples into amplitude and phase
    narrow       keep the center target_n subcarriers
    null         zero amplitude/phase on guard/DC subcarriers
    rssi-smooth  exponential RSSI smoothing, per source MAC
    agc          rescale amplitudes so total power matches the RSSI
    unwrap       remove artificial 2*pi jumps along the subcarrier axis

Adding a filter (Hampel, wavelet, lowpass, ...) means writing one kernel and
one registry entry; nothing else changes.

Unwrapping operates along the subcarrier axis within a single frame. Linear
phase detrending (STO/CFO removal) and cross-time unwrapping are out of
scope; a detrend plugin would slot in after ``unwrap``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    AlreadyLinear,
    BadAlpha,
    BadParamType,
    BadTarget,
    ChainInvalid,
    IndexOutOfRange,
    UnknownPlugin,
)
from .model import (
    N_TO_BANDWIDTH,
    CsiFrame,
    FrameMeta,
    PolarFrame,
    ProcessedFrame,
    SubcarrierOrder,
    parse_mac,
)

TWO_PI = 2.0 * np.pi

# Guard/DC subcarriers carrying no data, as logical indices. Only the 20 MHz
# set is load-bearing for the shipped defaults; pilots are deliberately kept.
DEFAULT_NULL_SETS: dict[int, frozenset[int]] = {
    64: frozenset({-32, -31, -30, -29, 0, 29, 30, 31}),
    128: frozenset(set(range(-64, -58)) | {-1, 0, 1} | set(range(59, 64))),
    256: frozenset(set(range(-128, -122)) | {-1, 0, 1} | set(range(123, 128))),
}


# --- standalone operations ---

def filter_mac(frame: CsiFrame, allowlist: Iterable[bytes]) -> CsiFrame | None:
    """None means dropped. An empty allowlist passes everything, so a fresh
    session starts in monitor-all discovery mode."""
    allow = frozenset(allowlist)
    if allow and frame.source_mac not in allow:
        return None
    return frame


def reorder_subcarriers(frame: CsiFrame) -> CsiFrame:
    """FFT order [0..N/2-1, -N/2..-1] -> linear order [-N/2..N/2-1]:
    the output is input[N/2:] followed by input[:N/2]."""
    if frame.subcarrier_order is SubcarrierOrder.LINEAR:
        raise AlreadyLinear(f"frame from {frame.source_mac.hex()} already linear")
    half = frame.n // 2
    csi = np.concatenate((frame.csi[half:], frame.csi[:half]))
    return replace(frame, subcarrier_order=SubcarrierOrder.LINEAR, csi=csi)


def extract_amplitude_phase(frame: CsiFrame) -> PolarFrame:
    """a_i = |h_i|, Phi_i = atan2(im, re) in (-pi, pi]; atan2(0, 0) is 0 so
    nulled subcarriers stay put."""
    return PolarFrame(
        meta=frame.meta(),
        amplitudes=np.abs(frame.csi),
        phases=np.angle(frame.csi),
        rssi_smoothed_dbm=float(frame.rssi_dbm),
        csi=frame.csi,
    )


def _narrow_slice(n: int, target_n: int) -> slice:
    lo = (n - target_n) // 2
    return slice(lo, lo + target_n)


def narrow_bandwidth(p: PolarFrame, target_n: int) -> PolarFrame:
    """Keep the contiguous center target_n subcarriers (logical
    -target_n/2 .. target_n/2-1). Requires linear order; not reversible."""
    if p.meta.subcarrier_order is not SubcarrierOrder.LINEAR:
        raise ChainInvalid("narrow requires linear subcarrier order")
    n = p.meta.n
    if target_n not in (64, 128) or target_n >= n:
        raise BadTarget(f"cannot narrow N={n} to {target_n}")
    keep = _narrow_slice(n, target_n)
    meta = replace(p.meta, n=target_n, bandwidth_mhz=N_TO_BANDWIDTH[target_n])
    return PolarFrame(meta=meta,
                      amplitudes=p.amplitudes[keep].copy(),
                      phases=p.phases[keep].copy(),
                      rssi_smoothed_dbm=p.rssi_smoothed_dbm,
                      applied_plugins=p.applied_plugins,
                      csi=None if p.csi is None else p.csi[keep].copy(),
                      agc_zero_power=p.agc_zero_power)


def _null_positions(n: int, null_set: Iterable[int]) -> np.ndarray:
    logical = sorted(set(null_set))
    half = n // 2
    for k in logical:
        if not -half <= k < half:
            raise IndexOutOfRange(f"logical index {k} outside [{-half}, {half})")
    return np.asarray([k + half for k in logical], dtype=np.intp)


def null_guard_subcarriers(p: PolarFrame, null_set: Iterable[int]) -> PolarFrame:
    """Zero amplitude and phase at the given logical indices; idempotent."""
    if p.meta.subcarrier_order is not SubcarrierOrder.LINEAR:
        raise ChainInvalid("null guard requires linear subcarrier order")
    pos = _null_positions(p.meta.n, null_set)
    amps = p.amplitudes.copy()
    phis = p.phases.copy()
    amps[pos] = 0.0
    phis[pos] = 0.0
    return replace(p, amplitudes=amps, phases=phis)


def compensate_agc(p: PolarFrame, rssi_dbm: float) -> PolarFrame:
    """Rescale amplitudes so total linear power matches the RSSI:
    sum of a'_i^2 = 10^(rssi/10) mW. Phases are untouched. All-zero
    amplitudes pass through with the zero-power flag set."""
    total = float(np.dot(p.amplitudes, p.amplitudes))
    if total == 0.0:
        return replace(p, agc_zero_power=True)
    scale = np.sqrt(10.0 ** (rssi_dbm / 10.0) / total)
    return replace(p, amplitudes=p.amplitudes * scale)


class SmoothingState:
    """Last smoothed RSSI per source MAC."""

    def __init__(self):
        self.last: dict[bytes, float] = {}

    def reset(self):
        self.last.clear()


def smooth_rssi(state: SmoothingState, mac: bytes, x: float, alpha: float) -> float:
    """Exponential smoothing: first sample passes through, then
    s = alpha*x + (1-alpha)*s_prev."""
    if not 0.0 < alpha <= 1.0:
        raise BadAlpha(f"alpha {alpha} outside (0, 1]")
    prev = state.last.get(mac)
    s = float(x) if prev is None else alpha * float(x) + (1.0 - alpha) * prev
    state.last[mac] = s
    return s


def _unwrap_kernel(phases: np.ndarray) -> np.ndarray:
    """Itoh's method with diffs corrected into the half-open (-pi, pi]:
    out[i] = in[i] - 2*pi*K_i with integer K, first phase unchanged."""
    if len(phases) < 2:
        return phases.copy()
    d = np.diff(phases)
    k = np.ceil((d - np.pi) / TWO_PI)
    # guard the boundary against rounding drift
    corrected = d - TWO_PI * k
    k[corrected <= -np.pi] -= 1.0
    k[corrected > np.pi] += 1.0
    out = phases.copy()
    out[1:] -= TWO_PI * np.cumsum(k)
    return out


def unwrap_phase(p: PolarFrame) -> PolarFrame:
    """Linearize phases along the subcarrier axis: every consecutive
    difference lands in (-pi, pi] and each output differs from its input by
    an exact multiple of 2*pi."""
    if p.meta.subcarrier_order is not SubcarrierOrder.LINEAR:
        raise ChainInvalid("unwrap requires linear subcarrier order")
    return replace(p, phases=_unwrap_kernel(p.phases))


# --- plugin registry ---

@dataclass(frozen=True)
class ParamSpec:
    kind: type
    default: object


@dataclass(frozen=True)
class PluginDef:
    id: str
    stage: str  # "frame", "convert" or "polar"
    default_priority: int
    params: Mapping[str, ParamSpec]
    needs_linear: bool = False
    summary: str = ""


PLUGIN_REGISTRY: dict[str, PluginDef] = {
    p.id: p for p in (
        PluginDef("mac-filter", "frame", 0,
                  {"allowlist": ParamSpec(str, "")},
                  summary="keep only allowlisted source MACs"),
        PluginDef("reorder", "frame", 10, {},
                  summary="FFT order to linear subcarrier order"),
        PluginDef("extract", "convert", 20, {},
                  summary="split complex CSI into amplitude and phase"),
        PluginDef("narrow", "polar", 25,
                  {"target_n": ParamSpec(int, 64)}, needs_linear=True,
                  summary="keep the center target_n subcarriers"),
        PluginDef("null", "polar", 30,
                  {"indices": ParamSpec(str, "")}, needs_linear=True,
                  summary="zero guard/DC subcarriers"),
        PluginDef("rssi-smooth", "polar", 35,
                  {"alpha": ParamSpec(float, 0.1)},
                  summary="exponential RSSI smoothing"),
        PluginDef("agc", "polar", 40, {},
                  summary="match total power to the RSSI"),
        PluginDef("unwrap", "polar", 50, {}, needs_linear=True,
                  summary="remove 2*pi phase jumps across subcarriers"),
    )
}


@dataclass(frozen=True)
class PluginInstance:
    id: str
    priority: int
    enabled: bool = True
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ChainConfig:
    """Ordered set of plugin instances plus a version that bumps on every
    mutation."""

    plugins: tuple[PluginInstance, ...] = ()
    version: int = 0

    def get(self, plugin_id: str) -> PluginInstance | None:
        for p in self.plugins:
            if p.id == plugin_id:
                return p
        return None

    def execution_order(self) -> tuple[PluginInstance, ...]:
        enabled = [p for p in self.plugins if p.enabled]
        return tuple(sorted(enabled, key=lambda p: (p.priority, p.id)))


def default_chain() -> ChainConfig:
    """The preconfigured workflow: reorder, extract, null, agc, unwrap
    enabled; MAC filtering and RSSI smoothing present but off until the
    operator turns them on."""
    mk = PLUGIN_REGISTRY
    defaults = {name: spec.default for name, spec in mk["null"].params.items()}
    return ChainConfig(plugins=(
        PluginInstance("mac-filter", mk["mac-filter"].default_priority, False,
                       {"allowlist": ""}),
        PluginInstance("reorder", mk["reorder"].default_priority, True, {}),
        PluginInstance("extract", mk["extract"].default_priority, True, {}),
        PluginInstance("null", mk["null"].default_priority, True, defaults),
        PluginInstance("rssi-smooth", mk["rssi-smooth"].default_priority, False,
                       {"alpha": 0.1}),
        PluginInstance("agc", mk["agc"].default_priority, True, {}),
        PluginInstance("unwrap", mk["unwrap"].default_priority, True, {}),
    ), version=1)


def _check_param(defn: PluginDef, key: str, value: object) -> object:
    spec = defn.params.get(key)
    if spec is None:
        raise BadParamType(f"{defn.id} has no parameter {key!r}")
    if spec.kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BadParamType(f"{defn.id}.{key} must be a number,"
                               f" got {value!r}")
        return float(value)
    if spec.kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise BadParamType(f"{defn.id}.{key} must be an integer,"
                               f" got {value!r}")
        return value
    if spec.kind is bool:
        if not isinstance(value, bool):
            raise BadParamType(f"{defn.id}.{key} must be a boolean,"
                               f" got {value!r}")
        return value
    if not isinstance(value, str):
        raise BadParamType(f"{defn.id}.{key} must be a string, got {value!r}")
    return value


def _parse_allowlist(text: str) -> frozenset[bytes]:
    macs = [m for m in (part.strip() for part in text.split(",")) if m]
    try:
        return frozenset(parse_mac(m) for m in macs)
    except ValueError as exc:
        raise BadParamType(str(exc)) from exc


def _parse_null_indices(text: str) -> frozenset[int] | None:
    """None means 'use the default set for the frame's bandwidth'."""
    items = [s for s in (part.strip() for part in text.split(",")) if s]
    if not items:
        return None
    try:
        return frozenset(int(s) for s in items)
    except ValueError as exc:
        raise BadParamType(f"null indices must be integers: {exc}") from exc


def validate_chain(config: ChainConfig, *, source_n: int | None = None) -> None:
    """Reject configurations that cannot run: duplicate ids, unknown plugins,
    bad parameter types/ranges, polar plugins with no extract before them,
    linear-order plugins with no reorder before them, impossible narrowing.

    Sources emit FFT-ordered frames, so order starts as FFT.
    """
    seen: set[str] = set()
    for inst in config.plugins:
        if inst.id in seen:
            raise ChainInvalid(f"duplicate plugin id {inst.id!r}")
        seen.add(inst.id)
        defn = PLUGIN_REGISTRY.get(inst.id)
        if defn is None:
            raise UnknownPlugin(inst.id)
        for key, value in inst.params.items():
            _check_param(defn, key, value)

    stage = "frame"
    linear = False
    n = source_n
    for inst in config.execution_order():
        defn = PLUGIN_REGISTRY[inst.id]
        if defn.stage == "frame" and stage != "frame":
            raise ChainInvalid(f"{inst.id} operates on raw frames but runs"
                               " after extract")
        if defn.stage == "polar" and stage == "frame":
            raise ChainInvalid(f"{inst.id} needs amplitude/phase data;"
                               " enable extract at a lower priority")
        if defn.needs_linear and not linear:
            raise ChainInvalid(f"{inst.id} requires linear subcarrier order;"
                               " enable reorder at a lower priority")
        if inst.id == "reorder":
            linear = True
        elif inst.id == "extract":
            stage = "polar"
        elif inst.id == "narrow":
            target = inst.params.get("target_n",
                                     PLUGIN_REGISTRY["narrow"].params["target_n"].default)
            if target not in (64, 128):
                raise ChainInvalid(f"narrow target_n {target} unsupported")
            if n is not None and target >= n:
                raise ChainInvalid(f"cannot narrow N={n} to {target}")
            n = int(target)
        elif inst.id == "rssi-smooth":
            alpha = inst.params.get("alpha", 0.1)
            if not 0.0 < float(alpha) <= 1.0:
                raise ChainInvalid(f"rssi-smooth alpha {alpha} outside (0, 1]")
        elif inst.id == "null":
            indices = _parse_null_indices(str(inst.params.get("indices", "")))
            if indices is not None and n is not None:
                half = n // 2
                for k in indices:
                    if not -half <= k < half:
                        raise ChainInvalid(f"null index {k} outside"
                                           f" [{-half}, {half}) after narrowing")
        elif inst.id == "mac-filter":
            _parse_allowlist(str(inst.params.get("allowlist", "")))


class PipelineState:
    """Per-stream mutable state: RSSI smoothing memory, counters, and the
    compiled form of the active config."""

    def __init__(self):
        self.smoothing = SmoothingState()
        self.frames_in = 0
        self.frames_out = 0
        self.frames_dropped = 0
        self._compiled_version: int | None = None
        self._compiled: tuple[PluginInstance, ...] = ()
        self._compiled_params: dict[str, object] = {}

    def _compile(self, config: ChainConfig):
        validate_chain(config)
        order = config.execution_order()
        params: dict[str, object] = {}
        for inst in order:
            if inst.id == "mac-filter":
                params["allowlist"] = _parse_allowlist(
                    str(inst.params.get("allowlist", "")))
            elif inst.id == "null":
                params["null_indices"] = _parse_null_indices(
                    str(inst.params.get("indices", "")))
            elif inst.id == "narrow":
                params["target_n"] = int(inst.params.get("target_n", 64))
            elif inst.id == "rssi-smooth":
                params["alpha"] = float(inst.params.get("alpha", 0.1))
        self._compiled = order
        self._compiled_params = params
        self._compiled_version = config.version


def run_chain(frame: CsiFrame, config: ChainConfig,
              state: PipelineState) -> ProcessedFrame | None:
    """Apply the enabled plugins in priority order. Returns None when a
    filter drops the frame. Amplitude/phase extraction is implicit at the
    end if no extract plugin ran, so every surviving frame leaves with a
    polar view for visualization."""
    if state._compiled_version != config.version:
        state._compile(config)
    state.frames_in += 1

    meta_order = frame.subcarrier_order
    csi = frame.csi
    n = frame.n
    bandwidth = frame.bandwidth_mhz
    amps: np.ndarray | None = None
    phis: np.ndarray | None = None
    rssi_smoothed = float(frame.rssi_dbm)
    zero_power = False
    applied: list[str] = []
    p = state._compiled_params

    for inst in state._compiled:
        pid = inst.id
        if pid == "mac-filter":
            allow = p["allowlist"]
            if allow and frame.source_mac not in allow:
                state.frames_dropped += 1
                return None
        elif pid == "reorder":
            if meta_order is SubcarrierOrder.FFT:
                half = n // 2
                csi = np.concatenate((csi[half:], csi[:half]))
                meta_order = SubcarrierOrder.LINEAR
        elif pid == "extract":
            amps = np.abs(csi)
            phis = np.angle(csi)
        elif pid == "narrow":
            target = p["target_n"]
            if target >= n:
                raise ChainInvalid(f"cannot narrow N={n} to {target}")
            keep = _narrow_slice(n, target)
            csi = csi[keep]
            amps = amps[keep]
            phis = phis[keep]
            n = target
            bandwidth = N_TO_BANDWIDTH[target]
        elif pid == "null":
            indices = p["null_indices"]
            if indices is None:
                indices = DEFAULT_NULL_SETS[n]
            pos = _null_positions(n, indices)
            amps[pos] = 0.0
            phis[pos] = 0.0
        elif pid == "rssi-smooth":
            rssi_smoothed = smooth_rssi(state.smoothing, frame.source_mac,
                                        float(frame.rssi_dbm), p["alpha"])
        elif pid == "agc":
            total = float(np.dot(amps, amps))
            if total == 0.0:
                zero_power = True
            else:
                amps = amps * np.sqrt(10.0 ** (rssi_smoothed / 10.0) / total)
        elif pid == "unwrap":
            phis = _unwrap_kernel(phis)
        applied.append(pid)

    if amps is None:
        amps = np.abs(csi)
        phis = np.angle(csi)

    meta = FrameMeta(frame.timestamp_us, frame.source_mac, frame.seq,
                     frame.rssi_dbm, bandwidth, meta_order, n)
    state.frames_out += 1
    return PolarFrame(meta=meta, amplitudes=amps, phases=phis,
                      rssi_smoothed_dbm=rssi_smoothed,
                      applied_plugins=tuple(applied), csi=csi,
                      agc_zero_power=zero_power)


# --- runtime reconfiguration ---

_COMMANDS = ("enable", "disable", "set-priority", "set-param", "add", "remove")


def update_chain(config: ChainConfig, command: Mapping[str, object]) -> ChainConfig:
    """Apply one configuration command, returning a new config with
    version + 1. The original is never mutated, so the swap happens at a
    frame boundary by construction.

    Commands: {"op": "enable"|"disable"|"set-priority"|"set-param"|"add"|
    "remove", "id": plugin, ...} with "priority" for set-priority, "key" and
    "value" for set-param.
    """
    op = str(command.get("op", "")).replace("_", "-")
    if op not in _COMMANDS:
        raise ChainInvalid(f"unknown chain command {op!r}")
    pid = str(command.get("id", ""))

    if op == "add":
        defn = PLUGIN_REGISTRY.get(pid)
        if defn is None:
            raise UnknownPlugin(pid)
        if config.get(pid) is not None:
            raise ChainInvalid(f"{pid} already in chain")
        inst = PluginInstance(
            pid, int(command.get("priority", defn.default_priority)),
            bool(command.get("enabled", True)),
            {k: spec.default for k, spec in defn.params.items()})
        return ChainConfig(config.plugins + (inst,), config.version + 1)

    existing = config.get(pid)
    if existing is None:
        raise UnknownPlugin(pid)

    if op == "remove":
        plugins = tuple(p for p in config.plugins if p.id != pid)
        return ChainConfig(plugins, config.version + 1)

    if op == "enable" or op == "disable":
        updated = replace(existing, enabled=(op == "enable"))
    elif op == "set-priority":
        pr = command.get("priority")
        if isinstance(pr, bool) or not isinstance(pr, int):
            raise BadParamType(f"priority must be an integer, got {pr!r}")
        updated = replace(existing, priority=pr)
    else:  # set-param
        key = str(command.get("key", ""))
        value = _check_param(PLUGIN_REGISTRY[pid], key, command.get("value"))
        params = dict(existing.params)
        params[key] = value
        updated = replace(existing, params=params)

    plugins = tuple(updated if p.id == pid else p for p in config.plugins)
    return ChainConfig(plugins, config.version + 1)


# --- JSON form used by the control protocol and --chain files ---

def chain_to_json(config: ChainConfig) -> dict:
    return {
        "version": config.version,
        "plugins": [
            {"id": p.id, "priority": p.priority, "enabled": p.enabled,
             "params": dict(p.params)}
            for p in config.plugins
        ],
    }


def chain_from_json(doc: Mapping) -> ChainConfig:
    try:
        plugins = tuple(
            PluginInstance(str(p["id"]), int(p["priority"]),
                           bool(p.get("enabled", True)),
                           dict(p.get("params", {})))
            for p in doc["plugins"])
        version = int(doc.get("version", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ChainInvalid(f"malformed chain document: {exc}") from exc
    config = ChainConfig(plugins, version)
    validate_chain(config)
    return config


def load_chain(path: str) -> ChainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return chain_from_json(json.load(fh))


def save_chain(config: ChainConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain_to_json(config), fh, indent=2)
        fh.write("\n")
