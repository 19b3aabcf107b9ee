"""Communication Protocol
======================
Event-triggered exchange between nodes: per-node residual noise level
monitoring, the communication request rule, weight-difference payloads and
their mixed fusion at the requester (asynchronous) or at every node
(synchronous).

Node indices are 0-based internally; event records and logs report them
1-based.
"""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import structlog
from numpy.typing import ArrayLike

from app.services.compensation.compensation_service import (
    CompensationSet,
    apply_compensation,
)
from app.services.control.control_service import ControlFilterState
from app.services.signal.signal_service import FloatArray, ImpulseResponse
from app.utils.exceptions import ConfigurationError, NotReadyError, ProtocolError
from app.utils.models import TransmitterReset

logger = structlog.get_logger(__name__)

EPSILON_FLOOR = 1e-20

EventPolicy = Literal["async", "sync"]


def rnl(e_k: float, epsilon_floor: float = EPSILON_FLOOR) -> float:
    """Residual noise level 10·log10(e²) in dB, floored."""
    return 10.0 * math.log10(max(e_k * e_k, epsilon_floor))


class TriggerMonitor:
    """Windowed RNL statistics and the request rule of one node.

    Windows are non-overlapping and ``round(T·fs)`` samples long. A request
    is raised when a completed window's average RNL is strictly worse than
    the previous window's by more than ``hysteresis`` dB.
    """

    def __init__(
        self,
        period: float,
        fs: float,
        hysteresis: float = 0.0,
        epsilon_floor: float = EPSILON_FLOOR,
    ) -> None:
        self.window_len = round(period * fs)
        if self.window_len < 1:
            raise ConfigurationError(
                f"trigger period {period} s is shorter than one sample", key="trigger.period"
            )
        self.hysteresis = hysteresis
        self.epsilon_floor = epsilon_floor
        self.prev_arnl: float | None = None
        self._sum = 0.0
        self._count = 0

    @property
    def complete(self) -> bool:
        return self._count >= self.window_len

    def observe(self, e_k: float) -> bool:
        """Add one error sample; True when it completes the window."""
        return self.accumulate(rnl(e_k, self.epsilon_floor), 1)

    def accumulate(self, eta_sum: float, samples: int) -> bool:
        """Add a pre-summed run of RNL values."""
        if self._count + samples > self.window_len:
            raise ProtocolError(
                f"{samples} samples overflow a window with "
                f"{self.window_len - self._count} slots left"
            )
        self._sum += eta_sum
        self._count += samples
        return self.complete

    def arnl(self) -> float:
        if not self.complete:
            raise NotReadyError(
                f"ARNL window holds {self._count} of {self.window_len} samples"
            )
        return self._sum / self.window_len

    def should_request(self, current_arnl: float) -> bool:
        if not self.complete:
            raise NotReadyError("request rule evaluated before the window completed")
        decision = (
            self.prev_arnl is not None and current_arnl > self.prev_arnl + self.hysteresis
        )
        self.prev_arnl = current_arnl
        self._sum = 0.0
        self._count = 0
        return decision

    def reset(self) -> None:
        self.prev_arnl = None
        self._sum = 0.0
        self._count = 0


def arnl(monitor: TriggerMonitor) -> float:
    return monitor.arnl()


def should_request(monitor: TriggerMonitor, current_arnl: float) -> bool:
    return monitor.should_request(current_arnl)


def weight_difference(state: ControlFilterState) -> FloatArray:
    """φ_k = w_k - w̃_k, read after the sample's update."""
    return state.w - state.w_center


def mwd_combine(
    state_k: ControlFilterState,
    own_phi: ArrayLike,
    received: Sequence[tuple[ArrayLike, ImpulseResponse | ArrayLike]],
) -> FloatArray:
    """w̃_k + φ_k + Σ_{m≠k} φ_m ⊛ c_mk; the caller assigns it to both w_k and w̃_k."""
    length = state_k.length
    own = np.asarray(own_phi, dtype=np.float64)
    if own.size != length:
        raise ProtocolError(f"own weight difference has {own.size} taps, expected {length}")
    combined = state_k.w_center + own
    for phi, c_mk in received:
        p = np.asarray(phi, dtype=np.float64)
        if p.size != length:
            raise ProtocolError(f"received weight difference has {p.size} taps, expected {length}")
        combined = combined + apply_compensation(p, c_mk)
    return combined


@dataclass(frozen=True)
class CommEvent:
    sample: int
    requester: int
    payloads: Mapping[int, FloatArray]
    policy: EventPolicy
    triggered: tuple[int, ...] = ()
    requested_at: int | None = None

    def __post_init__(self) -> None:
        for m, phi in self.payloads.items():
            if not np.all(np.isfinite(phi)):
                raise ProtocolError(f"non-finite payload from node {m + 1}")

    @property
    def request_sample(self) -> int:
        """Sample of the request; earlier than ``sample`` under link delay."""
        return self.sample if self.requested_at is None else self.requested_at

    def phi_norms(self, nodes: int) -> list[float]:
        """‖φ_m‖₂ per node; NaN for nodes that sent nothing."""
        return [
            float(np.linalg.norm(self.payloads[m])) if m in self.payloads else math.nan
            for m in range(nodes)
        ]


def _received(
    k: int, payloads: Mapping[int, FloatArray], compensation: CompensationSet | None
) -> list[tuple[FloatArray, ImpulseResponse]]:
    remote = [m for m in sorted(payloads) if m != k]
    if not remote:
        return []
    if compensation is None:
        raise ConfigurationError("weight-difference fusion needs a compensation set")
    return [(payloads[m], compensation.filter(m, k)) for m in remote]


def _snap(state: ControlFilterState, value: FloatArray) -> None:
    state.w[...] = value
    state.w_center[...] = value


def collect_payloads(
    nodes: Sequence[ControlFilterState], requester: int, reset: TransmitterReset
) -> dict[int, FloatArray]:
    """Weight differences of every node except the requester.

    Under ``reset`` each transmitter folds what it sent into its center.
    """
    payloads = {m: weight_difference(s) for m, s in enumerate(nodes) if m != requester}
    if reset is TransmitterReset.RESET:
        for m in payloads:
            nodes[m].w_center[...] = nodes[m].w
    return payloads


def deliver_async_event(
    nodes: Sequence[ControlFilterState],
    requester: int,
    remote_payloads: Mapping[int, FloatArray],
    compensation: CompensationSet | None,
    sample: int,
    triggered: tuple[int, ...] = (),
    requested_at: int | None = None,
) -> CommEvent:
    """Fuse previously collected payloads at the requester."""
    state = nodes[requester]
    own = weight_difference(state)
    payloads = {**remote_payloads, requester: own}
    new_center = mwd_combine(state, own, _received(requester, payloads, compensation))
    _snap(state, new_center)
    return CommEvent(
        sample=sample,
        requester=requester,
        payloads=payloads,
        policy="async",
        triggered=triggered or (requester,),
        requested_at=requested_at,
    )


def execute_async_event(
    nodes: Sequence[ControlFilterState],
    requester: int,
    compensation: CompensationSet | None,
    reset: TransmitterReset = TransmitterReset.RESET,
    sample: int = 0,
) -> CommEvent:
    """One requester gathers every node's φ and applies MWD fusion locally."""
    remote = collect_payloads(nodes, requester, reset)
    event = deliver_async_event(nodes, requester, remote, compensation, sample)
    logger.debug("async_event", sample=sample, requester=requester + 1)
    return event


def execute_sync_event(
    nodes: Sequence[ControlFilterState],
    compensation: CompensationSet | None,
    sample: int = 0,
    triggered: tuple[int, ...] = (),
) -> CommEvent:
    """Every node fuses the same pre-event snapshot of all weight differences."""
    payloads = {m: weight_difference(s) for m, s in enumerate(nodes)}
    updates = [
        mwd_combine(state, payloads[k], _received(k, payloads, compensation))
        for k, state in enumerate(nodes)
    ]
    for state, value in zip(nodes, updates, strict=True):
        _snap(state, value)
    requester = min(triggered) if triggered else 0
    logger.debug("sync_event", sample=sample, triggered=[t + 1 for t in triggered])
    return CommEvent(
        sample=sample,
        requester=requester,
        payloads=payloads,
        policy="sync",
        triggered=triggered or (requester,),
    )


# ============================================================
# LINK DELAY
# ============================================================


@dataclass(order=True)
class PendingExchange:
    due: int
    requester: int
    requested_at: int = field(compare=False)
    payloads: dict[int, FloatArray] = field(compare=False)


class LinkScheduler:
    """Holds collected payloads until they reach the requester ``delay`` samples later."""

    def __init__(self, delay: int = 0) -> None:
        if delay < 0:
            raise ConfigurationError("link delay must be >= 0", key="trigger.link_delay")
        self.delay = delay
        self._queue: deque[PendingExchange] = deque()

    def __len__(self) -> int:
        return len(self._queue)

    def schedule(self, sample: int, requester: int, payloads: dict[int, FloatArray]) -> None:
        self._queue.append(
            PendingExchange(sample + self.delay, requester, sample, payloads)
        )

    def due(self, sample: int) -> list[PendingExchange]:
        ready = []
        while self._queue and self._queue[0].due <= sample:
            ready.append(self._queue.popleft())
        return ready
