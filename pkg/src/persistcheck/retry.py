"""Retry amplification and restartable-sequence convergence.

The storm simulator is a discrete-event model of a FIFO server with a bounded
queue and a fixed pool of workers. Each client keeps one request outstanding:
it thinks, sends, and either gets an answer within its timeout or retries
after a policy-dependent delay until its attempt budget runs out. The server
cannot tell a stale request from a live one, so work whose client already gave
up still occupies a worker. That is the feedback loop: slow answers cause
retries, retries lengthen the queue, a longer queue makes answers slower.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

POLICY_KINDS = ("immediate", "fixed", "exponential", "full-jitter")


@dataclass(frozen=True)
class RetryPolicy:
    kind: str = "immediate"
    base: float = 1.0
    cap: float = 1.0
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown retry policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.base < 0 or self.cap < self.base:
            raise ConfigError("retry policy needs 0 <= base <= cap")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    def delay(self, failures: int, rng: np.random.Generator) -> float:
        """Wait before the next attempt, after ``failures`` failed attempts (>= 1)."""
        if self.kind == "immediate":
            return 0.0
        if self.kind == "fixed":
            return self.base
        ceiling = min(self.cap, self.base * 2 ** (failures - 1))
        if self.kind == "exponential":
            return ceiling
        return float(rng.uniform(0.0, ceiling))


@dataclass(frozen=True)
class ServiceModel:
    capacity: float = 100.0  # requests per time unit at full utilisation
    queue_limit: int = 300
    service_time: float = 0.1
    timeout: float = 1.0
    clients: int = 450
    demand_per_client: float = 0.2  # requests per time unit per client when healthy
    fault_window: tuple[float, float] = (20.0, 30.0)
    spike: float = 10.0  # demand multiplier inside the fault window
    bucket: float = 5.0

    def __post_init__(self) -> None:
        for name in ("capacity", "service_time", "timeout", "demand_per_client", "bucket", "spike"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.queue_limit < 1 or self.clients < 1:
            raise ConfigError("queue_limit and clients must be positive")
        start, end = self.fault_window
        if not 0 <= start <= end:
            raise ConfigError("fault_window must satisfy 0 <= start <= end")
        object.__setattr__(self, "fault_window", (float(start), float(end)))

    @property
    def workers(self) -> int:
        return max(1, round(self.capacity * self.service_time))

    @property
    def demand(self) -> float:
        return self.clients * self.demand_per_client


@dataclass
class Bucket:
    start: float
    offered: float  # attempts arriving per time unit
    goodput: float  # in-time answers per time unit
    queue_depth: int  # at the end of the bucket
    amplification: float | None  # attempts per original request issued in the bucket
    originals: int
    attempts: int
    stale_served: int


@dataclass
class StormResult:
    buckets: list[Bucket]
    demand: float
    capacity: float
    recovered: bool
    final_goodput: float
    accounting: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(b, name) if getattr(b, name) is not None else np.nan for b in self.buckets])

    def to_dict(self) -> dict:
        return {
            "demand": self.demand,
            "capacity": self.capacity,
            "recovered": self.recovered,
            "final_goodput": self.final_goodput,
            "accounting": self.accounting,
            "buckets": [asdict(b) for b in self.buckets],
        }


# event kinds, ordered so simultaneous events resolve deterministically
_DONE, _TIMEOUT, _SEND = 0, 1, 2


def simulate_retry_storm(service: ServiceModel, policy: RetryPolicy, seed: int = 0,
                         horizon: float = 200.0) -> StormResult:
    """Run the closed-loop client population against the server until ``horizon``.

    Recovery means mean goodput over the final quarter of the post-fault
    period is at least 90% of healthy demand.
    """
    start, end = service.fault_window
    if horizon <= end:
        raise ConfigError(f"horizon {horizon} must extend past the fault window end {end}")
    rng = np.random.default_rng(seed)
    nb = math.ceil(horizon / service.bucket)
    originals = np.zeros(nb, dtype=np.int64)
    attempts = np.zeros(nb, dtype=np.int64)
    good = np.zeros(nb, dtype=np.int64)
    stale = np.zeros(nb, dtype=np.int64)
    depth = np.zeros(nb, dtype=np.int64)
    acct = {"issued": 0, "served": 0, "retried": 0, "abandoned": 0, "in_flight": 0, "dropped": 0}

    think_mean = 1.0 / service.demand_per_client

    def think(t: float) -> float:
        rate = service.spike if start <= t < end else 1.0
        return float(rng.exponential(think_mean / rate))

    events: list = []
    seq = 0

    def push(t: float, kind: int, *payload) -> None:
        nonlocal seq
        heapq.heappush(events, (t, kind, seq, payload))
        seq += 1

    # per client: (attempt id currently awaited or None, failures so far)
    waiting: list[int | None] = [None] * service.clients
    failures = [0] * service.clients
    attempt_client: dict[int, int] = {}
    next_attempt = 0
    queue: deque = deque()
    busy = 0
    next_bucket = 0

    for c in range(service.clients):
        push(think(0.0), _SEND, c, True)

    def bucket_of(t: float) -> int:
        return min(int(t // service.bucket), nb - 1)

    def start_service(t: float) -> None:
        nonlocal busy
        while busy < service.workers and queue:
            a = queue.popleft()
            busy += 1
            push(t + service.service_time, _DONE, a)

    while events:
        t, kind, _, payload = heapq.heappop(events)
        if t >= horizon:
            break
        while next_bucket < nb and t >= (next_bucket + 1) * service.bucket:
            depth[next_bucket] = len(queue)
            next_bucket += 1
        b = bucket_of(t)
        if kind == _SEND:
            c, fresh = payload
            if fresh:
                originals[b] += 1
                failures[c] = 0
            a = next_attempt
            next_attempt += 1
            attempt_client[a] = c
            waiting[c] = a
            attempts[b] += 1
            acct["issued"] += 1
            if len(queue) < service.queue_limit:
                queue.append(a)
                start_service(t)
            else:
                acct["dropped"] += 1
            push(t + service.timeout, _TIMEOUT, a)
        elif kind == _DONE:
            (a,) = payload
            busy -= 1
            c = attempt_client[a]
            if waiting[c] == a:
                waiting[c] = None
                good[b] += 1
                acct["served"] += 1
                push(t + think(t), _SEND, c, True)
            else:
                stale[b] += 1
            start_service(t)
        else:
            (a,) = payload
            c = attempt_client[a]
            if waiting[c] != a:
                continue  # answered in time
            waiting[c] = None
            failures[c] += 1
            if failures[c] < policy.max_attempts:
                acct["retried"] += 1
                push(t + policy.delay(failures[c], rng), _SEND, c, False)
            else:
                acct["abandoned"] += 1
                push(t + think(t), _SEND, c, True)
    while next_bucket < nb:
        depth[next_bucket] = len(queue)
        next_bucket += 1
    acct["in_flight"] = sum(1 for a in waiting if a is not None)

    w = service.bucket
    buckets = [
        Bucket(
            start=i * w,
            offered=attempts[i] / w,
            goodput=good[i] / w,
            queue_depth=int(depth[i]),
            amplification=(attempts[i] / originals[i]) if originals[i] else None,
            originals=int(originals[i]),
            attempts=int(attempts[i]),
            stale_served=int(stale[i]),
        )
        for i in range(nb)
    ]
    tail_start = end + 0.75 * (horizon - end)
    tail = [bk.goodput for bk in buckets if bk.start >= tail_start] or [buckets[-1].goodput]
    final = float(np.mean(tail))
    return StormResult(
        buckets=buckets,
        demand=service.demand,
        capacity=service.capacity,
        recovered=final >= 0.9 * service.demand,
        final_goodput=final,
        accounting=acct,
    )


# -- restartable sequences ---------------------------------------------------


@dataclass(frozen=True)
class RseqModel:
    length: int = 5
    p: float = 0.1
    trials: int = 100_000

    def __post_init__(self) -> None:
        if not 0 <= self.p < 1:
            raise ConfigError("interruption probability must lie in [0, 1)")
        if self.length < 1 or self.trials < 1:
            raise ConfigError("length and trials must be positive")

    @property
    def expected_attempts(self) -> float:
        return (1.0 - self.p) ** -self.length


@dataclass
class RseqResult:
    mean_attempts: float
    histogram: dict[int, int]
    expected: float
    stderr: float

    def to_dict(self) -> dict:
        return {
            "mean_attempts": self.mean_attempts,
            "expected": self.expected,
            "stderr": self.stderr,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def simulate_rseq(model: RseqModel, seed: int = 0) -> RseqResult:
    """Run each section step by step, restarting on any interrupted step."""
    rng = np.random.default_rng(seed)
    counts = np.ones(model.trials, dtype=np.int64)
    active = np.arange(model.trials)
    while active.size:
        interrupted = (rng.random((active.size, model.length)) < model.p).any(axis=1)
        active = active[interrupted]
        counts[active] += 1
    values, freq = np.unique(counts, return_counts=True)
    sd = float(counts.std(ddof=1)) if model.trials > 1 else 0.0
    return RseqResult(
        mean_attempts=float(counts.mean()),
        histogram={int(v): int(f) for v, f in zip(values, freq)},
        expected=model.expected_attempts,
        stderr=sd / math.sqrt(model.trials),
    )
