"""Training objectives for the toy softmax policy.

The improvement loop treats each table decision as a one-step bandit:
a state view ``x``, a finite legal-action set, and a linear softmax
policy over hand-crafted features.  This module houses the objectives
that drive that loop — supervised negative log-likelihood against
teacher decisions, a grouped clipped-surrogate objective with a KL
leash to a reference policy, and a pairwise preference loss — together
with their analytic gradients and a central-finite-difference verifier.

All gradients are taken with respect to ``PolicyParams.theta`` only;
the temperature is treated as a fixed hyperparameter.  Losses are pure
functions of immutable inputs and safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .engine import Action
from .policy import (
    FEATURE_DIM,
    DecisionTrace,
    PolicyError,
    PolicyParams,
    StateView,
    feature_matrix,
)

__all__ = [
    "LossConfig",
    "GroupStats",
    "PreferencePair",
    "composite_reward",
    "group_stats",
    "group_advantage",
    "sft_nll",
    "sft_nll_grad",
    "grpo_loss",
    "grpo_loss_grad",
    "dpo_loss",
    "dpo_loss_grad",
    "finite_difference_check",
]

KL_EXACT = "exact"
KL_K3 = "k3"


@dataclass(frozen=True)
class LossConfig:
    """Shared knobs for the grouped objectives.

    ``kl_estimator`` selects how the KL leash in the grouped surrogate
    is computed: ``"exact"`` sums the divergence over the full action
    distribution at each view; ``"k3"`` uses the unbiased single-sample
    estimator ``r − log r − 1`` at the sampled action, with
    ``r = pi_ref / pi_theta``.
    """

    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    dpo_beta: float = 0.1
    group_size: int = 4
    sigma_floor: float = 1e-8
    kl_estimator: str = KL_EXACT

    def __post_init__(self):
        if not self.clip_epsilon > 0:
            raise ValueError("clip_epsilon must be positive")
        if self.kl_beta < 0 or not np.isfinite(self.kl_beta):
            raise ValueError("kl_beta must be a finite non-negative real")
        if not self.dpo_beta > 0:
            raise ValueError("dpo_beta must be positive")
        if int(self.group_size) != self.group_size or self.group_size < 2:
            raise ValueError("group_size must be an integer >= 2")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")
        if self.kl_estimator not in (KL_EXACT, KL_K3):
            raise ValueError(f"unknown kl_estimator {self.kl_estimator!r}")


class GroupStats(tuple):
    """Group reward statistics ``(mu, sigma)`` with population sigma."""

    __slots__ = ()

    def __new__(cls, mu: float, sigma: float):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        return super().__new__(cls, (float(mu), float(sigma)))

    @property
    def mu(self) -> float:
        return self[0]

    @property
    def sigma(self) -> float:
        return self[1]


@dataclass(frozen=True)
class PreferencePair:
    """A contrastive decision sample mined at one shared view.

    ``preferred`` and ``dispreferred`` each pair an optional decision
    trace (metadata — the likelihood reduces to the action term) with
    the action taken.  The two actions must differ and both must be
    legal at ``view``; the gap between their empirical win rates must
    be strictly positive.
    """

    view: StateView
    preferred: tuple[Optional[DecisionTrace], Action]
    dispreferred: tuple[Optional[DecisionTrace], Action]
    win_rate_gap: float

    def __post_init__(self):
        if self.preferred[1] == self.dispreferred[1]:
            raise ValueError("preference pair must contrast distinct actions")
        for _, action in (self.preferred, self.dispreferred):
            if action not in self.view.legal:
                raise ValueError(f"action {action} not legal at the pair's view")
        if not self.win_rate_gap > 0:
            raise ValueError("win_rate_gap must be strictly positive")

    def to_record(self) -> dict:
        def side(tag, pair):
            trace, action = pair
            return {
                f"{tag}_action": str(action),
                f"{tag}_policy": trace.policy_id if trace else None,
            }

        rec = {"view": self.view.summary(),
               "win_rate_gap": self.win_rate_gap}
        rec.update(side("preferred", self.preferred))
        rec.update(side("dispreferred", self.dispreferred))
        return rec


# ---------------------------------------------------------------------------
# Shared softmax plumbing.


def _distribution(params: PolicyParams, view: StateView,
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature matrix, probabilities, and log-probabilities at a view."""
    if not view.legal:
        raise PolicyError("view has no legal actions")
    phi = feature_matrix(view)
    z = phi @ params.theta / params.temperature
    logp = z - logsumexp(z)
    return phi, np.exp(logp), logp


def _index(view: StateView, action: Action) -> int:
    try:
        return view.legal.index(action)
    except ValueError:
        raise PolicyError(f"action {action} not legal in view") from None


def _logprob_grad(phi: np.ndarray, probs: np.ndarray, idx: int,
                  temperature: float) -> np.ndarray:
    """d/d theta of log softmax(phi theta / T)[idx]."""
    return (phi[idx] - phi.T @ probs) / temperature


# ---------------------------------------------------------------------------
# Rewards and advantages.


def composite_reward(format_ok: bool, teacher_prob: float) -> float:
    """Score one sampled decision: one point for a well-formed trace
    plus the teacher's probability of the chosen action."""
    if not 0.0 <= teacher_prob <= 1.0:
        raise ValueError("teacher_prob must lie in [0, 1]")
    return float(bool(format_ok)) + float(teacher_prob)


def group_stats(rewards: Sequence[float]) -> GroupStats:
    arr = np.asarray(rewards, dtype=float)
    if arr.size < 2:
        raise ValueError("a group needs at least two rewards")
    return GroupStats(float(arr.mean()), float(arr.std()))


def group_advantage(rewards: Sequence[float], cfg: LossConfig) -> np.ndarray:
    """Standardize rewards by the group mean and population standard
    deviation; a degenerate group (sigma below the floor) yields all
    zeros rather than amplified noise."""
    stats = group_stats(rewards)
    arr = np.asarray(rewards, dtype=float)
    if stats.sigma < cfg.sigma_floor:
        return np.zeros_like(arr)
    return (arr - stats.mu) / stats.sigma


# ---------------------------------------------------------------------------
# Supervised NLL.


def sft_nll_grad(params: PolicyParams,
                 dataset: Sequence[tuple[StateView, Optional[DecisionTrace],
                                         Action]],
                 ) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the dataset's actions and its
    gradient.  Traces ride along as metadata only."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    total = 0.0
    grad = np.zeros(FEATURE_DIM)
    for view, _trace, action in dataset:
        phi, probs, logp = _distribution(params, view)
        idx = _index(view, action)
        total -= logp[idx]
        grad -= _logprob_grad(phi, probs, idx, params.temperature)
    n = len(dataset)
    return total / n, grad / n


def sft_nll(params: PolicyParams,
            dataset: Sequence[tuple[StateView, Optional[DecisionTrace],
                                    Action]]) -> float:
    return sft_nll_grad(params, dataset)[0]


# ---------------------------------------------------------------------------
# Grouped clipped surrogate with KL leash.


def _ref_logprob(logq: np.ndarray, q: np.ndarray, idx: int) -> float:
    if q[idx] == 0.0 or not np.isfinite(logq[idx]):
        raise PolicyError(
            "reference policy places zero mass on a sampled action")
    return float(logq[idx])


def grpo_loss_grad(params: PolicyParams, ref: PolicyParams,
                   group: Sequence[tuple[StateView, Action, float]],
                   cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Grouped surrogate ``-(1/G) sum min(r A, clip(r) A) + beta KL``
    and its gradient.

    ``r`` is the per-sampled-action probability ratio between the
    current and reference policies; the KL term is averaged over the
    group's views using the estimator selected in ``cfg``.
    """
    if not group:
        raise ValueError("group must be nonempty")
    eps = cfg.clip_epsilon
    surr_total = 0.0
    kl_total = 0.0
    surr_grad = np.zeros(FEATURE_DIM)
    kl_grad = np.zeros(FEATURE_DIM)
    for view, action, adv in group:
        phi, p, logp = _distribution(params, view)
        _, q, logq = _distribution(ref, view)
        idx = _index(view, action)
        lq = _ref_logprob(logq, q, idx)
        g = _logprob_grad(phi, p, idx, params.temperature)
        ratio = float(np.exp(logp[idx] - lq))
        clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
        unclipped_term = ratio * adv
        clipped_term = clipped * adv
        surr_total += min(unclipped_term, clipped_term)
        # The min picks the unclipped branch (whose derivative is
        # A r dlogp) unless clipping strictly lowers the objective,
        # in which case the clipped constant has zero derivative.
        if unclipped_term <= clipped_term:
            surr_grad += adv * ratio * g
        if cfg.kl_beta > 0:
            if cfg.kl_estimator == KL_EXACT:
                delta = logp - logq
                kl = float(p @ delta)
                kl_total += kl
                kl_grad += (phi.T @ (p * delta) - kl * (phi.T @ p)
                            ) / params.temperature
            else:
                u = lq - float(logp[idx])
                kl_total += float(np.exp(u)) - u - 1.0
                kl_grad += (1.0 - float(np.exp(u))) * g
    n = len(group)
    loss = -surr_total / n + cfg.kl_beta * kl_total / n
    grad = -surr_grad / n + cfg.kl_beta * kl_grad / n
    return loss, grad


def grpo_loss(params: PolicyParams, ref: PolicyParams,
              group: Sequence[tuple[StateView, Action, float]],
              cfg: LossConfig) -> float:
    return grpo_loss_grad(params, ref, group, cfg)[0]


# ---------------------------------------------------------------------------
# Pairwise preference loss.


def dpo_loss_grad(params: PolicyParams, ref: PolicyParams,
                  pair: PreferencePair, beta_sp: float,
                  ) -> tuple[float, np.ndarray]:
    """``-log sigmoid(beta [margin+ - margin-])`` where each margin is
    the policy-vs-reference log-probability gap of one of the pair's
    actions at the shared view, plus the gradient."""
    if not beta_sp > 0:
        raise ValueError("beta_sp must be positive")
    view = pair.view
    phi, p, logp = _distribution(params, view)
    _, q, logq = _distribution(ref, view)
    i = _index(view, pair.preferred[1])
    j = _index(view, pair.dispreferred[1])
    lq_i = _ref_logprob(logq, q, i)
    lq_j = _ref_logprob(logq, q, j)
    z = beta_sp * ((float(logp[i]) - lq_i) - (float(logp[j]) - lq_j))
    loss = float(np.logaddexp(0.0, -z))
    # dz/dtheta: the shared softmax normalizer cancels between the two
    # log-probabilities, leaving the raw feature difference over T.
    dz = beta_sp * (phi[i] - phi[j]) / params.temperature
    grad = -(1.0 - float(expit(z))) * dz
    return loss, grad


def dpo_loss(params: PolicyParams, ref: PolicyParams, pair: PreferencePair,
             beta_sp: float) -> float:
    return dpo_loss_grad(params, ref, pair, beta_sp)[0]


# ---------------------------------------------------------------------------
# Cached fast paths for iterative optimization.
#
# The feature matrices and the frozen-reference log-probabilities do
# not change between gradient steps; precomputing them turns a training
# loop over a fixed dataset into pure ndarray arithmetic.


def precompute_sft_features(
    dataset: Sequence[tuple[StateView, Optional[DecisionTrace], Action]],
) -> list[tuple[np.ndarray, int]]:
    """(feature matrix, chosen index) for each dataset item."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    return [(feature_matrix(view), _index(view, action))
            for view, _trace, action in dataset]


def sft_nll_grad_cached(params: PolicyParams,
                        feats: Sequence[tuple[np.ndarray, int]],
                        ) -> tuple[float, np.ndarray]:
    """Same objective as :func:`sft_nll_grad` on precomputed features."""
    total = 0.0
    grad = np.zeros(FEATURE_DIM)
    for phi, idx in feats:
        z = phi @ params.theta / params.temperature
        logp = z - logsumexp(z)
        probs = np.exp(logp)
        total -= logp[idx]
        grad -= (phi[idx] - phi.T @ probs) / params.temperature
    n = len(feats)
    return total / n, grad / n


def precompute_pair_features(pairs: Sequence[PreferencePair],
                             ref: PolicyParams,
                             ) -> list[tuple[np.ndarray, int, int, float]]:
    """(feature matrix, i+, i-, frozen reference margin) per pair."""
    if not pairs:
        raise ValueError("pairs must be nonempty")
    cached = []
    for pair in pairs:
        phi, q, logq = _distribution(ref, pair.view)
        i = _index(pair.view, pair.preferred[1])
        j = _index(pair.view, pair.dispreferred[1])
        ref_margin = _ref_logprob(logq, q, i) - _ref_logprob(logq, q, j)
        cached.append((phi, i, j, ref_margin))
    return cached


def dpo_loss_grad_cached(params: PolicyParams,
                         cached: Sequence[tuple[np.ndarray, int, int, float]],
                         beta_sp: float) -> tuple[float, np.ndarray]:
    """Mean pairwise loss/gradient over precomputed pair features."""
    if not beta_sp > 0:
        raise ValueError("beta_sp must be positive")
    total = 0.0
    grad = np.zeros(FEATURE_DIM)
    for phi, i, j, ref_margin in cached:
        z_scores = phi @ params.theta / params.temperature
        logp = z_scores - logsumexp(z_scores)
        z = beta_sp * ((float(logp[i]) - float(logp[j])) - ref_margin)
        total += float(np.logaddexp(0.0, -z))
        dz = beta_sp * (phi[i] - phi[j]) / params.temperature
        grad += -(1.0 - float(expit(z))) * dz
    n = len(cached)
    return total / n, grad / n


# ---------------------------------------------------------------------------
# Gradient verification.

LossFn = Callable[[PolicyParams], tuple[float, np.ndarray]]


def finite_difference_check(loss: LossFn, point: PolicyParams,
                            step: float) -> float:
    """Probe ``loss`` with central differences in every coordinate of
    ``theta`` and report the worst relative error against the analytic
    gradient returned by ``loss`` itself.

    ``loss`` must return ``(value, gradient)``; probe evaluations use
    only the value.  Relative error uses the larger of the two
    magnitudes with a 1e-6 floor so near-zero coordinates do not
    divide by zero.  Non-finite values at any probe raise.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    value, grad = loss(point)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise ValueError("loss returned non-finite value or gradient "
                         "at the base point")
    theta = point.theta
    worst = 0.0
    for k in range(theta.size):
        probe = np.zeros_like(theta)
        probe[k] = step
        hi = loss(PolicyParams(theta + probe, point.temperature))[0]
        lo = loss(PolicyParams(theta - probe, point.temperature))[0]
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"loss non-finite at probe coordinate {k}")
        fd = (hi - lo) / (2.0 * step)
        an = float(grad[k])
        denom = max(abs(an), abs(fd), 1e-6)
        worst = max(worst, abs(an - fd) / denom)
    return worst
