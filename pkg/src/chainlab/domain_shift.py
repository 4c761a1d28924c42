"""Mixed-domain training and its averaging failure mode.

When several domains explain the same observed input, the loss-minimizing
output is the per-loss centroid of the domains' valid reconstructions: the
weighted mean under squared error, the coordinatewise weighted median under
absolute error. This module provides the closed-form minimizer, a small
full-batch gradient-descent linear restorer that exhibits the collapse, the
resolution-shift closed form built from blur operators, and a mixed-versus-
targeted error report.

The trained model is deliberately a linear map: the statement is about the
loss-minimizing output, which a linear map already exhibits on linear-domain
instances. Training is full-batch gradient descent with a declared schedule
(lr halves on plateau) so runs reproduce bit for bit under a fixed seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .channels import blur_matrix
from .errors import ContractViolation, DimensionMismatch, Diverged, DomainsCoincide
from .rng import stream_rng

OVERLAPPING = "overlapping"
DISJOINT = "disjoint"


def double_meaning_minimizer(
    targets: Sequence[np.ndarray],
    weights: Optional[Sequence[float]] = None,
    loss: str = "mse",
) -> np.ndarray:
    """Loss-minimizing single output against several valid targets.

    mse: weighted arithmetic mean. l1: coordinatewise weighted median (the
    lower median on even-mass ties, so the result is deterministic).
    """
    arrs = [np.atleast_1d(np.asarray(t, dtype=np.float64)) for t in targets]
    if len(arrs) == 0:
        raise ContractViolation("at least one target required")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise DimensionMismatch("targets disagree on dimension")
    w = _resolve_weights(weights, len(arrs))
    stack = np.stack(arrs)  # (M, ...)
    if loss == "mse":
        return np.tensordot(w, stack, axes=1)
    if loss == "l1":
        flat = stack.reshape(len(arrs), -1)
        out = np.empty(flat.shape[1])
        for k in range(flat.shape[1]):
            out[k] = _weighted_lower_median(flat[:, k], w)
        return out.reshape(shape)
    raise ContractViolation(f"unknown loss {loss!r}")


def _weighted_lower_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    half = 0.5 * cum[-1]
    idx = int(np.searchsorted(cum, half - 1e-15))
    return float(values[order][min(idx, len(values) - 1)])


def _resolve_weights(weights, m: int) -> np.ndarray:
    if weights is None:
        return np.full(m, 1.0 / m)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise DimensionMismatch(f"{m} domains but {w.shape} weights")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ContractViolation("weights must be nonnegative and sum to 1")
    return w


def gaussian_latents(dim: int) -> Callable:
    """Standard-normal latent batches of the given dimension."""

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, dim))

    return sample


def linear_map(matrix: np.ndarray) -> Callable:
    a = np.asarray(matrix, dtype=np.float64)

    def apply(u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) @ a.T

    return apply


@dataclass(frozen=True)
class DomainSpec:
    """Several domains whose valid reconstructions compete for one model.

    ``inverses[i]`` maps a latent batch to domain i's valid reconstruction;
    ``observation`` maps the latent batch to what the model actually sees
    (identity when the observed input is the latent itself). In overlapping
    mode every drawn input is valid in all domains at once; in disjoint mode
    each domain draws its own inputs and only contributes its own target.
    """

    inverses: tuple
    weights: tuple
    latent_samplers: tuple
    observation: Callable
    mode: str

    @property
    def n_domains(self) -> int:
        return len(self.inverses)

    @classmethod
    def overlapping(
        cls,
        inverses: Sequence[Callable],
        latent_sampler: Callable,
        weights: Optional[Sequence[float]] = None,
        observation: Optional[Callable] = None,
    ) -> "DomainSpec":
        w = _resolve_weights(weights, len(inverses))
        return cls(
            inverses=tuple(inverses),
            weights=tuple(float(v) for v in w),
            latent_samplers=(latent_sampler,) * len(inverses),
            observation=observation or (lambda u: u),
            mode=OVERLAPPING,
        )

    @classmethod
    def disjoint(
        cls,
        inverses: Sequence[Callable],
        latent_samplers: Sequence[Callable],
        weights: Optional[Sequence[float]] = None,
        observation: Optional[Callable] = None,
    ) -> "DomainSpec":
        if len(latent_samplers) != len(inverses):
            raise DimensionMismatch("one latent sampler per domain required")
        w = _resolve_weights(weights, len(inverses))
        return cls(
            inverses=tuple(inverses),
            weights=tuple(float(v) for v in w),
            latent_samplers=tuple(latent_samplers),
            observation=observation or (lambda u: u),
            mode=DISJOINT,
        )

    def restricted_to(self, i: int) -> "DomainSpec":
        """Single-domain spec for targeted training."""
        return DomainSpec(
            inverses=(self.inverses[i],),
            weights=(1.0,),
            latent_samplers=(self.latent_samplers[i],),
            observation=self.observation,
            mode=self.mode,
        )


@dataclass(frozen=True)
class LinearRestorer:
    """Affine map trained to invert observations; keeps its loss history."""

    weights: np.ndarray
    bias: np.ndarray
    loss_log: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise Diverged("non-finite parameters after training")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    def predict(self, y: np.ndarray) -> np.ndarray:
        arr = np.asarray(y, dtype=np.float64)
        if arr.ndim == 1:
            return arr @ self.weights.T + self.bias
        return arr @ self.weights.T + self.bias

    def check_training(self, slack: float = 1e-9) -> bool:
        """Loss log non-increasing up to slack relative to its starting value."""
        log = np.asarray(self.loss_log)
        if len(log) < 2:
            return True
        tol = slack * max(1.0, float(log[0]))
        return bool(np.all(np.diff(log) <= tol))

    def loss_log_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss"])
            for i, v in enumerate(self.loss_log):
                writer.writerow([i, format(v, ".17g")])

    def weights_json(self) -> str:
        return json.dumps(
            {"weights": self.weights.tolist(), "bias": self.bias.tolist()}
        )


def _training_blocks(domains: DomainSpec, rng: np.random.Generator, batch: int):
    """Per-domain (inputs, target, weight) blocks; overlapping mode shares draws."""
    blocks = []
    if domains.mode == OVERLAPPING:
        u = domains.latent_samplers[0](rng, batch)
        y = domains.observation(u)
        for g, w in zip(domains.inverses, domains.weights):
            blocks.append((y, g(u), w))
    else:
        for g, sampler, w in zip(domains.inverses, domains.latent_samplers, domains.weights):
            u = sampler(rng, batch)
            blocks.append((domains.observation(u), g(u), w))
    return blocks


def train_mixed_restorer(
    domains: DomainSpec,
    loss: str = "mse",
    epochs: int = 10_000,
    lr: float = 1e-2,
    seed: int = 0,
    batch: int = 512,
    plateau_patience: int = 50,
    divergence_patience: int = 10,
    param_tol: float = 1e-14,
) -> LinearRestorer:
    """Fit one affine restorer against every domain's targets at once.

    Full-batch gradient descent on the weighted multi-domain loss; the
    learning rate halves after ``plateau_patience`` epochs without
    improvement, and ten consecutive loss increases abort as divergence.
    """
    if loss not in ("mse", "l1"):
        raise ContractViolation(f"unknown loss {loss!r}")
    rng = stream_rng(seed, 0)
    blocks = _training_blocks(domains, rng, batch)
    _check_domains_distinct(domains, blocks)
    n_in = blocks[0][0].shape[1]
    n_out = blocks[0][1].shape[1]
    w_mat = np.zeros((n_out, n_in))
    bias = np.zeros(n_out)
    log = []
    best = math.inf
    stale = 0
    rising = 0
    prev = math.inf
    for _ in range(epochs):
        grad_w = np.zeros_like(w_mat)
        grad_b = np.zeros_like(bias)
        total = 0.0
        for y, x, wgt in blocks:
            r = y @ w_mat.T + bias - x
            b = y.shape[0]
            if loss == "mse":
                total += wgt * float(np.mean(np.sum(r**2, axis=1)))
                grad_w += wgt * (2.0 / b) * r.T @ y
                grad_b += wgt * (2.0 / b) * r.sum(axis=0)
            else:
                total += wgt * float(np.mean(np.sum(np.abs(r), axis=1)))
                s = np.sign(r)
                grad_w += wgt * (1.0 / b) * s.T @ y
                grad_b += wgt * (1.0 / b) * s.sum(axis=0)
        log.append(total)
        if total > prev:
            rising += 1
            if rising >= divergence_patience:
                raise Diverged(f"loss increased {divergence_patience} consecutive epochs")
        else:
            rising = 0
        if total < best - 1e-15 * max(1.0, best if math.isfinite(best) else 1.0):
            best = total
            stale = 0
        else:
            stale += 1
            if stale >= plateau_patience:
                lr *= 0.5
                stale = 0
        prev = total
        step_w = lr * grad_w
        step_b = lr * grad_b
        w_mat = w_mat - step_w
        bias = bias - step_b
        if max(np.abs(step_w).max(), np.abs(step_b).max(initial=0.0)) <= param_tol:
            break
    return LinearRestorer(
        weights=w_mat,
        bias=bias,
        loss_log=tuple(log),
        meta={"loss": loss, "seed": seed, "final_lr": lr, "epochs_run": len(log)},
    )


def _check_domains_distinct(domains: DomainSpec, blocks) -> None:
    if domains.n_domains < 2:
        return
    targets = [x for _, x, _ in blocks]
    base = targets[0]
    if all(np.allclose(base, t, atol=1e-12) for t in targets[1:]) and domains.mode == OVERLAPPING:
        raise DomainsCoincide("all domain inverses agree on every probed input")


def resolution_shift_prediction(x2: np.ndarray, sigma1: float, sigma2: float) -> np.ndarray:
    """Averaged reconstruction when two blur levels explain one observation.

    Returns the mean of the finer-domain target (the signal re-blurred by the
    residual kernel) and the coarser-domain target (the signal itself):
    0.5 * (I + H_residual) x2 with residual std sqrt(sigma2^2 - sigma1^2).
    """
    if not (sigma2 > sigma1 > 0):
        raise ContractViolation("need sigma2 > sigma1 > 0")
    x2 = np.asarray(x2, dtype=np.float64)
    sigma_res = math.sqrt(sigma2**2 - sigma1**2)
    h = blur_matrix(len(x2), sigma_res)
    return 0.5 * (x2 + h.apply(x2))


@dataclass(frozen=True)
class MixedVsTargetedReport:
    """Held-out per-domain error of one shared restorer vs per-domain ones."""

    mixed_errors: tuple
    targeted_errors: tuple

    @property
    def gaps(self) -> tuple:
        return tuple(m - t for m, t in zip(self.mixed_errors, self.targeted_errors))

    def to_json(self) -> str:
        return json.dumps(
            {
                "mixed": list(self.mixed_errors),
                "targeted": list(self.targeted_errors),
                "gaps": list(self.gaps),
            }
        )


def mixed_vs_targeted_report(
    domains: DomainSpec,
    loss: str = "mse",
    epochs: int = 10_000,
    lr: float = 1e-2,
    seed: int = 0,
    batch: int = 512,
    eval_batch: int = 1024,
) -> MixedVsTargetedReport:
    """Train one restorer over all domains and one per domain, then compare.

    The per-domain metric is mean squared error on fresh draws from that
    domain. A shared restorer can only match the targeted ones when nothing
    forces averaging (single domain, or domains distinguishable from the
    input); overlapping distinct domains open a strict gap.
    """
    mixed = train_mixed_restorer(domains, loss=loss, epochs=epochs, lr=lr, seed=seed, batch=batch)
    mixed_errors = []
    targeted_errors = []
    for i in range(domains.n_domains):
        solo = train_mixed_restorer(
            domains.restricted_to(i), loss=loss, epochs=epochs, lr=lr, seed=seed, batch=batch
        )
        rng = stream_rng(seed, 1000 + i)
        u = domains.latent_samplers[i](rng, eval_batch)
        y = domains.observation(u)
        x = domains.inverses[i](u)
        mixed_errors.append(float(np.mean((mixed.predict(y) - x) ** 2)))
        targeted_errors.append(float(np.mean((solo.predict(y) - x) ** 2)))
    return MixedVsTargetedReport(tuple(mixed_errors), tuple(targeted_errors))


# ---------------------------------------------------------------------------
# ready-made instances
# ---------------------------------------------------------------------------


def scaling_domains(dim: int, scales: Sequence[float] = (1.0, 2.0)) -> DomainSpec:
    """Overlapping domains whose valid reconstructions are scaled copies of
    the input; the mixed optimum is the mean-scale map."""
    inverses = [linear_map(float(s) * np.eye(dim)) for s in scales]
    return DomainSpec.overlapping(inverses, latent_sampler=gaussian_latents(dim))


def two_blur_domains(
    n: int,
    sigma1: float,
    sigma2: float,
    smoothing: Optional[float] = None,
    noise_sigma: float = 0.0,
) -> DomainSpec:
    """Two blur levels explaining one observation.

    The latent is the coarse-domain source (smoothed noise); the observation
    is its strong blur, optionally with measurement noise. The fine domain's
    valid reconstruction is the latent re-blurred by the residual kernel, the
    coarse domain's is the latent itself. The averaged-output prediction is
    derived for the noiseless observation; the noisy variant exists to show
    the collapse survives measurement noise.
    """
    if not (sigma2 > sigma1 > 0):
        raise ContractViolation("need sigma2 > sigma1 > 0")
    sigma_res = math.sqrt(sigma2**2 - sigma1**2)
    h_res = blur_matrix(n, sigma_res)
    h2 = blur_matrix(n, sigma2)
    smooth = blur_matrix(n, smoothing if smoothing is not None else sigma2)

    def latents(rng: np.random.Generator, b: int) -> np.ndarray:
        u = rng.standard_normal((b, n)) @ smooth.matrix.T
        if noise_sigma > 0:
            # carry the noise draw alongside the clean latent
            return np.hstack([u, noise_sigma * rng.standard_normal((b, n))])
        return u

    def observe(u: np.ndarray) -> np.ndarray:
        if noise_sigma > 0:
            return u[:, :n] @ h2.matrix.T + u[:, n:]
        return u @ h2.matrix.T

    def clean(u: np.ndarray) -> np.ndarray:
        return u[:, :n] if noise_sigma > 0 else u

    return DomainSpec.overlapping(
        inverses=[lambda u: clean(u) @ h_res.matrix.T, clean],
        latent_sampler=latents,
        observation=observe,
    )


def decimation_domains(n: int, smoothing: float = 2.0) -> DomainSpec:
    """Full-rate and half-rate readings of the same observation.

    The half-rate domain's valid reconstruction renders every other sample
    held for two slots (a length-preserving decimate-then-hold), the
    full-rate domain's is the signal as is. Supports overlap entirely, so a
    shared restorer must average the two renderings.
    """
    if n % 2:
        raise ContractViolation("need an even signal length")
    smooth = blur_matrix(n, smoothing)
    hold = np.zeros((n, n))
    hold[np.arange(n), (np.arange(n) // 2) * 2] = 1.0

    def latents(rng: np.random.Generator, b: int) -> np.ndarray:
        return rng.standard_normal((b, n)) @ smooth.matrix.T

    return DomainSpec.overlapping(
        inverses=[lambda u: u, linear_map(hold)],
        latent_sampler=latents,
    )


def offset_indicator_domains(dim: int, d1: float, d2: float, disjoint: bool) -> DomainSpec:
    """Constant-offset domains, with or without a domain-revealing coordinate.

    Inputs are (signal, flag); each domain's valid reconstruction is the
    signal shifted by its own constant. With flags +-1 the input supports are
    disjoint and one affine map serves both domains exactly; with flag 0 the
    supports coincide and averaging is forced.
    """

    def inverse(offset: float) -> Callable:
        return lambda y: y[:, :dim] + offset

    def sampler(flag: float) -> Callable:
        def draw(rng: np.random.Generator, b: int) -> np.ndarray:
            t = rng.standard_normal((b, dim))
            return np.hstack([t, np.full((b, 1), flag)])

        return draw

    inverses = [inverse(float(d1)), inverse(float(d2))]
    if disjoint:
        return DomainSpec.disjoint(inverses, latent_samplers=[sampler(1.0), sampler(-1.0)])
    return DomainSpec.overlapping(inverses, latent_sampler=sampler(0.0))
