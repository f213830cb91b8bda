"""Entropy and mutual information, exact and estimated.

All quantities are in nats; the privacy-budget bound I(X;Z) <= epsilon
only holds with natural logarithms.  The 0 log 0 = 0 convention is used
throughout.  Exact measures are pure functions over validated probability
arrays; plugin_mi works on paired discrete samples; mine_estimate is the
Donsker-Varadhan neural estimator for continuous representations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, InvalidDistributionError, PreconditionError

_CLAMP_TOL = 1e-9


def _validated(arr, ndim: int, what: str) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != ndim:
        raise InvalidDistributionError(f"{what}: expected {ndim} axes, got shape {a.shape}")
    if np.any(a < 0):
        raise InvalidDistributionError(f"{what}: negative entry {a.min():g}")
    total = a.sum()
    if abs(total - 1.0) > 1e-9 or total <= 0:
        raise InvalidDistributionError(f"{what}: mass {total!r} is not 1")
    return a / total


def _clamp_nonneg(value: float) -> float:
    """Snap tiny negative round-off to exactly 0; reject real negatives."""
    if value < -_CLAMP_TOL:
        raise InvalidDistributionError(f"information quantity {value:g} below -{_CLAMP_TOL}")
    return max(value, 0.0)


def _plogp(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float((nz * np.log(nz)).sum())


def entropy(dist) -> float:
    """Shannon entropy H(p) = -sum p log p in nats."""
    p = _validated(dist, 1, "entropy")
    return _clamp_nonneg(-_plogp(p))


def mutual_information(joint) -> float:
    """I(A;B) from a 2-axis joint, in nats."""
    j = _validated(joint, 2, "mutual_information")
    pa = j.sum(axis=1)
    pb = j.sum(axis=0)
    # I = sum p(a,b) log p(a,b) - sum p(a) log p(a) - sum p(b) log p(b)
    return _clamp_nonneg(_plogp(j.reshape(-1)) - _plogp(pa) - _plogp(pb))


def conditional_mi(joint) -> float:
    """I(X;Z|S) from a 3-axis joint over (x, z, s), in nats."""
    j = _validated(joint, 3, "conditional_mi")
    total = 0.0
    for s in range(j.shape[2]):
        ps = j[:, :, s].sum()
        if ps > 0:
            total += ps * mutual_information(j[:, :, s] / ps)
    return _clamp_nonneg(total)


def plugin_mi(samples_a, samples_b, card_a=None, card_b=None, smoothing: float = 0.0) -> float:
    """Plug-in MI of the empirical joint over paired discrete labels.

    Optional additive smoothing adds pseudo-counts to every cell before
    normalizing; the default 0 is unbiased at the desk-scale sample
    counts used here.
    """
    a = np.asarray(samples_a, dtype=np.intp).reshape(-1)
    b = np.asarray(samples_b, dtype=np.intp).reshape(-1)
    if a.size != b.size:
        raise PreconditionError(f"plugin_mi: {a.size} vs {b.size} samples")
    if a.size < 2:
        raise PreconditionError("plugin_mi: need at least 2 samples")
    if smoothing < 0:
        raise PreconditionError("plugin_mi: smoothing must be >= 0")
    ka = int(card_a) if card_a is not None else int(a.max()) + 1
    kb = int(card_b) if card_b is not None else int(b.max()) + 1
    if a.min() < 0 or a.max() >= ka or b.min() < 0 or b.max() >= kb:
        raise PreconditionError("plugin_mi: label outside declared cardinality")
    counts = np.zeros((ka, kb))
    np.add.at(counts, (a, b), 1.0)
    counts += smoothing
    return mutual_information(counts / counts.sum())


# -- MINE --------------------------------------------------------------------


@dataclass(frozen=True)
class MineConfig:
    """Donsker-Varadhan estimator settings.

    The statistics network is an MLP on the concatenated sample pair;
    marginal samples come from in-batch shuffling of the second
    coordinate.  The gradient's partition-function denominator uses an
    exponential moving average; the reported value is the uncorrected DV
    bound averaged over the final `avg_window` iterations.
    """

    hidden: tuple[int, int] = (100, 100)
    activation: str = "relu6"
    iterations: int = 50_000
    batch_size: int = 512
    learning_rate: float = 1e-3
    ema_rate: float = 0.01
    avg_window: int = 100

    def __post_init__(self):
        if not (0.0 < self.ema_rate <= 1.0):
            raise PreconditionError(f"ema_rate {self.ema_rate} outside (0, 1]")
        if self.iterations < self.avg_window:
            raise PreconditionError("iterations must cover at least one averaging window")


def mine_estimate(samples_a, samples_b, cfg: MineConfig, seed: int) -> float:
    """Estimate I(A;B) in nats from paired real-valued samples.

    Deterministic given the seed.  Raises DivergenceError on non-finite
    values, which usually signals a too-large learning rate.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    a = a.reshape(-1, 1) if a.ndim == 1 else a
    b = b.reshape(-1, 1) if b.ndim == 1 else b
    if a.shape[0] != b.shape[0]:
        raise PreconditionError(f"mine_estimate: {a.shape[0]} vs {b.shape[0]} samples")
    n = a.shape[0]
    if n < 1000:
        raise PreconditionError(f"mine_estimate: need >= 1000 samples, got {n}")

    rng = np.random.default_rng(seed)
    spec = ad.MlpSpec(
        widths=(a.shape[1] + b.shape[1], *cfg.hidden, 1),
        activations=(cfg.activation,) * len(cfg.hidden) + ("identity",),
    )
    net = ad.Mlp(spec, rng)
    params = net.parameters()
    opt = ad.AdamState(lr=cfg.learning_rate)

    ema_denominator = None
    batch = min(cfg.batch_size, n)
    recent: list[float] = []
    for it in range(cfg.iterations):
        idx = rng.integers(0, n, size=batch)
        shuffle = rng.permutation(batch)
        xa, xb = a[idx], b[idx]
        joint_in = ad.Tensor(np.concatenate([xa, xb], axis=1))
        marg_in = ad.Tensor(np.concatenate([xa, xb[shuffle]], axis=1))

        t_joint = ad.mean(net(joint_in))
        # clip the statistic before exponentiation to keep the partition
        # term finite early in training
        t_marg = ad.clamp(net(marg_in), -50.0, 50.0)
        denom = ad.mean(ad.exp(t_marg))

        denom_val = float(denom.data)
        if not np.isfinite(denom_val):
            raise DivergenceError(f"MINE partition term diverged at iteration {it}")
        if ema_denominator is None:
            ema_denominator = denom_val
        else:
            ema_denominator = (1 - cfg.ema_rate) * ema_denominator + cfg.ema_rate * denom_val

        dv = float(t_joint.data) - np.log(denom_val)
        if not np.isfinite(dv):
            raise DivergenceError(f"MINE estimate non-finite at iteration {it}")
        recent.append(dv)
        if len(recent) > cfg.avg_window:
            recent.pop(0)

        # EMA-corrected gradient: d/dtheta [ -T_joint + denom / ema ]
        loss = ad.sub(ad.mul(denom, ad.Tensor(1.0 / ema_denominator)), t_joint)
        ad.zero_grad(params)
        ad.backward(loss)
        ad.adam_step(params, opt)

    return float(np.mean(recent))
