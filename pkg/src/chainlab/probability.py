"""Exact finite-alphabet probability engine.

Distributions, conditional tables, dense joints, and chain composition,
with entropy / divergence / mutual information computed by enumeration.
Everything stays in linear space with 64-bit floats; alphabets are meant
to be small enough (~1e4 joint cells) that no sampling is ever needed, so
inequality audits hold to numerical precision instead of Monte Carlo noise.

Conventions:
- 0 * log 0 = 0 everywhere.
- Entropy and mutual information default to nats; pass ``base=2`` for bits.
- Canonical chain axis order is ("theta", "x", "y", "xhat"); results are
  always addressed by axis name, never position.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AbsoluteContinuityViolated,
    AllZeroWeights,
    InvalidDistribution,
    NegativeWeight,
    SupportMismatch,
    UnknownAxis,
    ZeroEvidence,
)

PROB_SUM_TOL = 1e-12
JOINT_SUM_TOL = 1e-10

THETA, X, Y, XHAT = "theta", "x", "y", "xhat"
CHAIN_AXES = (THETA, X, Y, XHAT)


def _fmt17(v: float) -> str:
    """Decimal serialization with 17 significant digits (bit-exact round trip)."""
    return format(float(v), ".17g")


def _as_labels(support: Sequence) -> tuple:
    labels = tuple(support)
    if len(set(labels)) != len(labels):
        raise InvalidDistribution(f"support labels not unique: {labels!r}")
    return labels


@dataclass(frozen=True)
class FiniteDistribution:
    """Probability mass function over an ordered finite support."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _as_labels(self.support))
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or len(p) != len(self.support):
            raise InvalidDistribution("probs shape does not match support")
        if np.any(p < 0):
            raise NegativeWeight(f"negative probability in {p}")
        if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)

    def __len__(self) -> int:
        return len(self.support)

    def prob_of(self, label) -> float:
        return float(self.probs[self.support.index(label)])

    def to_json(self) -> str:
        sup = json.dumps(list(self.support))
        probs = "[" + ", ".join(_fmt17(v) for v in self.probs) + "]"
        return '{"support": %s, "probs": %s}' % (sup, probs)

    @classmethod
    def from_json(cls, text: str) -> "FiniteDistribution":
        doc = json.loads(text)
        return cls(tuple(doc["support"]), np.array(doc["probs"], dtype=np.float64))


def normalize(weights: Sequence[float], support: Optional[Sequence] = None) -> FiniteDistribution:
    """Scale nonnegative weights into a distribution.

    Raises AllZeroWeights if nothing to normalize, NegativeWeight otherwise.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight in {w}")
    total = float(w.sum())
    if total == 0.0:
        raise AllZeroWeights("all weights are zero")
    if support is None:
        support = tuple(range(len(w)))
    return FiniteDistribution(tuple(support), w / total)


@dataclass(frozen=True)
class ConditionalTable:
    """Row-stochastic table: one output distribution per input label."""

    input_support: tuple
    output_support: tuple
    rows: np.ndarray  # shape (n_in, n_out)

    def __post_init__(self):
        object.__setattr__(self, "input_support", _as_labels(self.input_support))
        object.__setattr__(self, "output_support", _as_labels(self.output_support))
        r = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", r)
        if r.shape != (len(self.input_support), len(self.output_support)):
            raise InvalidDistribution(
                f"rows shape {r.shape} does not match supports "
                f"({len(self.input_support)}, {len(self.output_support)})"
            )
        if np.any(r < 0):
            raise NegativeWeight("negative entry in conditional table")
        sums = r.sum(axis=1)
        bad = np.abs(sums - 1.0) > PROB_SUM_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidDistribution(
                f"row {self.input_support[i]!r} sums to {sums[i]!r}, not 1"
            )
        r.setflags(write=False)

    def row(self, label) -> FiniteDistribution:
        i = self.input_support.index(label)
        return FiniteDistribution(self.output_support, self.rows[i])

    @classmethod
    def from_rows(cls, input_support, output_support, row_map) -> "ConditionalTable":
        """Build from {input_label: {output_label: prob}} with zeros implied."""
        out = tuple(output_support)
        rows = np.zeros((len(input_support), len(out)))
        for i, lab in enumerate(input_support):
            for o, p in row_map[lab].items():
                rows[i, out.index(o)] = p
        return cls(tuple(input_support), out, rows)

    @classmethod
    def deterministic(cls, input_support, output_support, mapping) -> "ConditionalTable":
        """Table of point masses for a total map input -> output."""
        out = tuple(output_support)
        rows = np.zeros((len(input_support), len(out)))
        for i, lab in enumerate(input_support):
            rows[i, out.index(mapping[lab])] = 1.0
        return cls(tuple(input_support), out, rows)

    def to_json(self) -> str:
        body = ", ".join(
            "[" + ", ".join(_fmt17(v) for v in row) + "]" for row in self.rows
        )
        return '{"input_support": %s, "output_support": %s, "rows": [%s]}' % (
            json.dumps(list(self.input_support)),
            json.dumps(list(self.output_support)),
            body,
        )

    @classmethod
    def from_json(cls, text: str) -> "ConditionalTable":
        doc = json.loads(text)
        return cls(
            tuple(doc["input_support"]),
            tuple(doc["output_support"]),
            np.array(doc["rows"], dtype=np.float64),
        )


@dataclass(frozen=True)
class JointDistribution:
    """Dense probability tensor over named axes with recorded supports."""

    axes: tuple
    supports: tuple  # tuple of per-axis label tuples
    tensor: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(set(axes)) != len(axes):
            raise UnknownAxis(f"duplicate axis names: {axes}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "supports", tuple(_as_labels(s) for s in self.supports))
        t = np.asarray(self.tensor, dtype=np.float64)
        object.__setattr__(self, "tensor", t)
        if t.shape != tuple(len(s) for s in self.supports):
            raise InvalidDistribution(
                f"tensor shape {t.shape} does not match supports"
            )
        if np.any(t < 0):
            raise NegativeWeight("negative entry in joint tensor")
        if abs(float(t.sum()) - 1.0) > JOINT_SUM_TOL:
            raise InvalidDistribution(f"joint sums to {t.sum()!r}, not 1")
        t.setflags(write=False)

    def axis_index(self, axis: str) -> int:
        try:
            return self.axes.index(axis)
        except ValueError:
            raise UnknownAxis(f"no axis {axis!r} in {self.axes}") from None

    def support_of(self, axis: str) -> tuple:
        return self.supports[self.axis_index(axis)]

    def prob_of(self, **coords) -> float:
        """Probability of a full or partial assignment of axis values."""
        t = self.tensor
        idx: list = [slice(None)] * t.ndim
        for axis, value in coords.items():
            k = self.axis_index(axis)
            idx[k] = self.supports[k].index(value)
        sub = t[tuple(idx)]
        return float(sub if np.ndim(sub) == 0 else sub.sum())

    def to_json(self) -> str:
        flat = self.tensor.reshape(-1)  # row-major
        body = "[" + ", ".join(_fmt17(v) for v in flat) + "]"
        return '{"axes": %s, "supports": %s, "tensor": %s}' % (
            json.dumps(list(self.axes)),
            json.dumps([list(s) for s in self.supports]),
            body,
        )

    @classmethod
    def from_json(cls, text: str) -> "JointDistribution":
        doc = json.loads(text)
        supports = tuple(tuple(s) for s in doc["supports"])
        shape = tuple(len(s) for s in supports)
        tensor = np.array(doc["tensor"], dtype=np.float64).reshape(shape)
        return cls(tuple(doc["axes"]), supports, tensor)


@dataclass(frozen=True)
class PipelineChain:
    """Prior over classes, class-conditional source, degradation, restorer.

    The degradation table is shared across classes by construction, which is
    exactly what makes theta - x - y (and onward) a Markov chain.
    """

    prior: FiniteDistribution
    family: ConditionalTable  # theta -> x
    channel: ConditionalTable  # x -> y
    restorer: Optional[ConditionalTable] = None  # y -> xhat

    def __post_init__(self):
        if self.prior.support != self.family.input_support:
            raise SupportMismatch("prior support != family input support")
        if self.family.output_support != self.channel.input_support:
            raise SupportMismatch("family output support != channel input support")
        if self.restorer is not None and self.channel.output_support != self.restorer.input_support:
            raise SupportMismatch("channel output support != restorer input support")

    @property
    def axes(self) -> tuple:
        return CHAIN_AXES if self.restorer is not None else CHAIN_AXES[:3]


def assemble_joint(chain: PipelineChain) -> JointDistribution:
    """Multiply the chain factors into the dense joint tensor.

    Entry (theta, x, y[, xhat]) is P(theta) p(x|theta) p(y|x) [p(xhat|y)].
    """
    t = np.einsum("t,tx,xy->txy", chain.prior.probs, chain.family.rows, chain.channel.rows)
    supports = [chain.prior.support, chain.family.output_support, chain.channel.output_support]
    if chain.restorer is not None:
        t = np.einsum("txy,yz->txyz", t, chain.restorer.rows)
        supports.append(chain.restorer.output_support)
    return JointDistribution(chain.axes, tuple(supports), t)


def marginal(joint: JointDistribution, keep_axes: Sequence[str]) -> JointDistribution:
    """Sum out every axis not listed; axes come back in the requested order."""
    keep = list(keep_axes)
    idx = [joint.axis_index(a) for a in keep]
    drop = tuple(i for i in range(joint.tensor.ndim) if i not in idx)
    t = joint.tensor.sum(axis=drop) if drop else joint.tensor
    # reorder remaining axes to the requested order
    remaining = [a for a in joint.axes if a in keep]
    perm = [remaining.index(a) for a in keep]
    t = np.transpose(t, perm)
    supports = tuple(joint.supports[joint.axis_index(a)] for a in keep)
    return JointDistribution(tuple(keep), supports, t)


def axis_distribution(joint: JointDistribution, axis: str) -> FiniteDistribution:
    m = marginal(joint, [axis])
    return FiniteDistribution(m.supports[0], m.tensor)


def condition(joint: JointDistribution, axis: str, value) -> JointDistribution:
    """Bayes-normalized slice of the joint at axis=value."""
    k = joint.axis_index(axis)
    try:
        j = joint.supports[k].index(value)
    except ValueError:
        raise ZeroEvidence(f"value {value!r} not in support of axis {axis!r}") from None
    idx: list = [slice(None)] * joint.tensor.ndim
    idx[k] = j
    sub = joint.tensor[tuple(idx)]
    mass = float(sub.sum())
    if mass <= 0.0:
        raise ZeroEvidence(f"P({axis}={value!r}) = 0")
    axes = tuple(a for a in joint.axes if a != axis)
    supports = tuple(s for i, s in enumerate(joint.supports) if i != k)
    return JointDistribution(axes, supports, sub / mass)


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def entropy(dist: FiniteDistribution | np.ndarray, base: float = math.e) -> float:
    """Shannon entropy -sum p log p, with 0 log 0 = 0."""
    p = dist.probs if isinstance(dist, FiniteDistribution) else np.asarray(dist, dtype=np.float64)
    h = -float(_xlogx(p).sum())
    return h / math.log(base)


def joint_entropy(joint: JointDistribution, base: float = math.e) -> float:
    return entropy_of_array(joint.tensor, base)


def entropy_of_array(p: np.ndarray, base: float = math.e) -> float:
    return -float(_xlogx(np.asarray(p, dtype=np.float64)).sum()) / math.log(base)


def kl_divergence(p: FiniteDistribution, q: FiniteDistribution, base: float = math.e) -> float:
    """D(p || q); raises if p puts mass where q has none."""
    if p.support != q.support:
        raise SupportMismatch("KL divergence requires a common support")
    pv, qv = p.probs, q.probs
    bad = (pv > 0) & (qv == 0)
    if np.any(bad):
        lab = p.support[int(np.argmax(bad))]
        raise AbsoluteContinuityViolated(f"p({lab!r}) > 0 but q({lab!r}) = 0")
    nz = pv > 0
    d = float(np.sum(pv[nz] * (np.log(pv[nz]) - np.log(qv[nz]))))
    return max(d, 0.0) / math.log(base)


def mutual_information(
    joint: JointDistribution, axis_a: str, axis_b: str, base: float = math.e
) -> float:
    """I(A;B) from the enumerated pair marginal; never negative."""
    if axis_a == axis_b:
        raise UnknownAxis("mutual information needs two distinct axes")
    pair = marginal(joint, [axis_a, axis_b]).tensor
    pa = pair.sum(axis=1)
    pb = pair.sum(axis=0)
    outer = np.outer(pa, pb)
    nz = pair > 0
    i = float(np.sum(pair[nz] * (np.log(pair[nz]) - np.log(outer[nz]))))
    return max(i, 0.0) / math.log(base)
