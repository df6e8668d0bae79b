"""Forward-decay weights.

An occurrence arriving at ``t_i`` is stored with the non-normalized weight
``g(t_i - L)`` where ``L`` is the landmark. Dividing by ``g(t - L)`` at query
time ``t`` yields a weight in ``(0, 1]`` that equals 1 for ``t_i == t``.

Exponential weights grow without bound, so long streams periodically move the
landmark forward ("rebase") and scale every stored value down by the same
factor. Rebase points sit on a fixed grid ``L + k * interval`` so that
independently built sketches can always be brought to a common landmark.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

OVERFLOW_GUARD = 1e250


class DecayDomainError(ValueError):
    """A timestamp precedes the landmark."""


class WeightOverflow(OverflowError):
    """A raw weight or accumulated count exceeded :data:`OVERFLOW_GUARD`."""

    def __init__(self, message: str, timestamp: float | None = None):
        super().__init__(message)
        self.timestamp = timestamp


class UnsupportedRebase(ValueError):
    """Rebasing is only meaningful for exponential decay."""


class DecayKind(str, enum.Enum):
    NONE = "none"
    EXPONENTIAL = "exp"
    POLYNOMIAL = "poly"


_KIND_CODES = {DecayKind.NONE: 0, DecayKind.EXPONENTIAL: 1, DecayKind.POLYNOMIAL: 2}


@dataclass(frozen=True)
class DecaySpec:
    """Decay function ``g`` plus landmark time.

    ``rate`` is the exponential rate for ``EXPONENTIAL`` (``g(a) = exp(rate*a)``)
    and the exponent for ``POLYNOMIAL`` (``g(a) = (1 + a)**rate``); it is
    ignored for ``NONE``.
    """

    kind: DecayKind = DecayKind.NONE
    rate: float = 0.0
    landmark: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DecayKind(self.kind))
        if not (self.rate >= 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"decay rate must be finite and >= 0, got {self.rate}")
        if not math.isfinite(self.landmark):
            raise ValueError(f"landmark must be finite, got {self.landmark}")
        if self.kind is DecayKind.NONE and self.rate != 0.0:
            object.__setattr__(self, "rate", 0.0)

    @classmethod
    def none(cls, landmark: float = 0.0) -> DecaySpec:
        return cls(DecayKind.NONE, 0.0, landmark)

    @classmethod
    def exponential(cls, rate: float, landmark: float = 0.0) -> DecaySpec:
        return cls(DecayKind.EXPONENTIAL, rate, landmark)

    @classmethod
    def polynomial(cls, exponent: float, landmark: float = 0.0) -> DecaySpec:
        return cls(DecayKind.POLYNOMIAL, exponent, landmark)

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    @classmethod
    def from_code(cls, code: int, rate: float, landmark: float) -> DecaySpec:
        for kind, c in _KIND_CODES.items():
            if c == code:
                return cls(kind, rate, landmark)
        raise ValueError(f"unknown decay kind code {code}")

    def g(self, age: float) -> float:
        """Evaluate the decay function; returns ``inf`` on float overflow."""
        if self.kind is DecayKind.NONE:
            return 1.0
        try:
            if self.kind is DecayKind.EXPONENTIAL:
                return math.exp(self.rate * age)
            return (1.0 + age) ** self.rate
        except OverflowError:
            return math.inf

    def log_g(self, age: float) -> float:
        if self.kind is DecayKind.NONE:
            return 0.0
        if self.kind is DecayKind.EXPONENTIAL:
            return self.rate * age
        return self.rate * math.log1p(age)

    @property
    def rebase_interval(self) -> float:
        """Spacing of the rebase grid; ``inf`` when rebasing never applies.

        Half the guard's log-range, so a freshly rebased weight stays below
        ``sqrt(OVERFLOW_GUARD)`` for a full interval.
        """
        if self.kind is not DecayKind.EXPONENTIAL or self.rate == 0.0:
            return math.inf
        return math.log(OVERFLOW_GUARD) / (2.0 * self.rate)

    def at_epoch(self, epoch: int) -> DecaySpec:
        """Spec whose landmark is the ``epoch``-th grid point after this one."""
        if epoch == 0:
            return self
        if self.kind is not DecayKind.EXPONENTIAL:
            raise UnsupportedRebase(f"{self.kind.value} decay cannot be rebased")
        if self.rate == 0.0:
            # g is constant, every landmark is equivalent
            return self
        return replace(self, landmark=self.landmark + epoch * self.rebase_interval)

    def epoch_for(self, t: float) -> int:
        """Grid epoch whose landmark is the last one not after ``t``."""
        interval = self.rebase_interval
        if math.isinf(interval):
            return 0
        return max(0, math.floor((t - self.landmark) / interval))


def raw_weight(spec: DecaySpec, t_i: float) -> float:
    """Non-normalized forward-decayed weight ``g(t_i - L)``."""
    if t_i < spec.landmark:
        raise DecayDomainError(f"timestamp {t_i} precedes landmark {spec.landmark}")
    x = spec.g(t_i - spec.landmark)
    if not x <= OVERFLOW_GUARD:
        raise WeightOverflow(f"raw weight at t={t_i} exceeds {OVERFLOW_GUARD:g}; rebase required", t_i)
    return x


def raw_weights(spec: DecaySpec, timestamps: np.ndarray, check_domain: bool = True) -> np.ndarray:
    """Vectorized :func:`raw_weight` without the guard check (overflow gives ``inf``).

    ``check_domain=False`` allows timestamps before a rebased landmark; their
    weights are simply below 1.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if check_domain and ts.size and ts.min() < spec.landmark:
        raise DecayDomainError(f"timestamp {ts.min()} precedes landmark {spec.landmark}")
    if spec.kind is DecayKind.NONE:
        return np.ones_like(ts)
    age = ts - spec.landmark
    with np.errstate(over="ignore"):
        if spec.kind is DecayKind.EXPONENTIAL:
            return np.exp(spec.rate * age)
        return np.power(1.0 + age, spec.rate)


def normalize(spec: DecaySpec, raw: float, t: float, check_domain: bool = True) -> float:
    """Divide a stored (non-normalized) value by ``g(t - L)``.

    ``check_domain=False`` accepts query times before a rebased landmark.
    """
    if check_domain and t < spec.landmark:
        raise DecayDomainError(f"query time {t} precedes landmark {spec.landmark}")
    if raw == 0.0:
        return 0.0
    age = t - spec.landmark
    denom = spec.g(age)
    if 0.0 < denom < math.inf:
        return raw / denom
    try:
        return math.exp(math.log(raw) - spec.log_g(age))
    except OverflowError:
        return math.inf


def normalize_array(spec: DecaySpec, raw: np.ndarray, t: float, check_domain: bool = True) -> np.ndarray:
    """Vectorized :func:`normalize`."""
    if check_domain and t < spec.landmark:
        raise DecayDomainError(f"query time {t} precedes landmark {spec.landmark}")
    raw = np.asarray(raw, dtype=np.float64)
    age = t - spec.landmark
    denom = spec.g(age)
    if 0.0 < denom < math.inf:
        return raw / denom
    with np.errstate(divide="ignore"):
        return np.where(raw > 0.0, np.exp(np.log(raw) - spec.log_g(age)), 0.0)


def rebase(spec: DecaySpec, new_landmark: float) -> float:
    """Multiplier that moves stored values from ``spec.landmark`` to ``new_landmark``."""
    if spec.kind is not DecayKind.EXPONENTIAL:
        raise UnsupportedRebase(f"{spec.kind.value} decay cannot be rebased")
    if not new_landmark > spec.landmark:
        raise ValueError(f"new landmark {new_landmark} must follow {spec.landmark}")
    return math.exp(spec.rate * (spec.landmark - new_landmark))
