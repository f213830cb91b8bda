"""Exact utility-leakage optimization on small discrete alphabets.

Maximizes I(X;Z|S) + beta * I(U;Z) over softmax-parameterized encoders
composed with a fixed randomized-response channel, computing every
information term exactly from the induced joint and differentiating
through the computation.  A brute-force candidate search over raw
channels provides the independent oracle for the constrained problem
min I(S;Z) subject to I(U;Z) >= gamma.

Only the discrete randomized-response mechanism is admitted here: it has
an exact finite channel form, so the theory checks are enumerations, not
estimates.  Continuous (Laplace) mechanisms are handled by the trained
encoder path with estimated information measures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .discrete_source import Channel, JointSourceUSX, compose, induced_joint, new_channel
from .errors import DivergenceError, InfeasibleGammaError, PreconditionError
from .info_measures import conditional_mi, mutual_information
from .ldp_mechanisms import RandomizedResponse, rr_channel

CONSTRAINT_TOL = 1e-6
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class EncoderParams:
    """Softmax parameterization of a row-stochastic encoder X -> Zhat."""

    logits: np.ndarray  # (|X|, |Zhat|)

    def channel(self) -> Channel:
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return new_channel(e / e.sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.0
    restarts: int = 8
    iterations: int = 2000
    learning_rate: float = 0.05
    tol: float = 1e-7
    zhat_card: int | None = None  # defaults to |X|
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise PreconditionError(f"beta must be >= 0, got {self.beta}")
        if self.restarts < 1 or self.iterations < 1 or self.learning_rate <= 0 or self.tol <= 0:
            raise PreconditionError("restarts, iterations, learning_rate, tol must be positive")


@dataclass(frozen=True)
class FrontierPoint:
    """One solved operating point with exactly recomputed information terms."""

    beta: float
    epsilon: float
    gamma_target: float
    Gamma: float  # I(U;Z)
    Omega: float  # I(S;Z)
    nu: float  # I(X;Z|S)
    ixz: float  # I(X;Z)
    encoder: Channel | None
    objective: float
    converged: bool


def _safe_log(t: ad.Tensor) -> ad.Tensor:
    # floor keeps exact zeros (possible when a source marginal vanishes)
    # out of log(); positive entries are untouched
    return ad.log(ad.clamp(t, _LOG_FLOOR, np.inf))


def _objective_graph(logits: ad.Tensor, src: JointSourceUSX, rr_rows: np.ndarray, beta: float) -> ad.Tensor:
    """Exact I(X;Z|S) + beta * I(U;Z) as a differentiable graph."""
    enc = ad.softmax(logits, axis=1)
    pzx = ad.matmul(enc, ad.Tensor(rr_rows))  # p(z|x), (|X|, |Z|)
    log_pzx = _safe_log(pzx)

    p_x = src.p_x()
    p_sx = src.p_sx()
    p_ux = src.p_ux()
    p_u = src.p_u()
    p_s = src.p_s()

    # I(U;Z)
    p_uz = ad.matmul(ad.Tensor(p_ux), pzx)  # (|U|, |Z|)
    p_z = ad.matmul(ad.Tensor(p_x[None, :]), pzx)  # (1, |Z|)
    log_ratio = ad.sub(ad.sub(_safe_log(p_uz), _safe_log(p_z)), ad.Tensor(np.log(np.maximum(p_u, _LOG_FLOOR))[:, None]))
    iuz = ad.tsum(ad.mul(p_uz, log_ratio))

    # I(X;Z|S) = sum_s sum_{x,z} p(s,x) p(z|x) [log p(z|x) - log p(z|s)]
    cmi_terms = []
    for s in range(src.card_s):
        if p_s[s] <= 0:
            continue
        w = ad.Tensor(p_sx[s][:, None])  # p(s,x) as a column
        joint_s = ad.mul(w, pzx)  # p(s, x, z) for this s
        p_zs = ad.tsum(joint_s, axis=0, keepdims=True)  # p(s, z)
        log_pz_given_s = ad.sub(_safe_log(p_zs), ad.Tensor(np.log(p_s[s])))
        cmi_terms.append(ad.tsum(ad.mul(joint_s, ad.sub(log_pzx, log_pz_given_s))))
    cmi = cmi_terms[0]
    for term in cmi_terms[1:]:
        cmi = ad.add(cmi, term)

    return ad.add(cmi, ad.mul(ad.Tensor(beta), iuz))


def objective_and_grad(
    src: JointSourceUSX, mech: RandomizedResponse, logits: np.ndarray, beta: float
) -> tuple[float, np.ndarray]:
    """Objective value and its exact gradient w.r.t. encoder logits."""
    rows = rr_channel(mech).rows
    t = ad.parameter(np.array(logits, dtype=np.float64))
    obj = _objective_graph(t, src, rows, beta)
    ad.backward(obj)
    return float(obj.data), t.grad


def _exact_point(
    src: JointSourceUSX,
    enc: Channel,
    rr_rows: np.ndarray,
    beta: float,
    epsilon: float,
    objective: float,
    converged: bool,
) -> FrontierPoint:
    """Recompute all reported quantities from the exact induced joint."""
    full = induced_joint(src, compose(enc, new_channel(rr_rows)))
    return FrontierPoint(
        beta=beta,
        epsilon=epsilon,
        gamma_target=math.nan,
        Gamma=mutual_information(full.p_uz()),
        Omega=mutual_information(full.p_sz()),
        nu=conditional_mi(full.p_xzs()),
        ixz=mutual_information(full.p_xz()),
        encoder=enc,
        objective=objective,
        converged=converged,
    )


def solve_g(src: JointSourceUSX, mech: RandomizedResponse, cfg: SolverConfig) -> FrontierPoint:
    """Gradient-ascent maximization of I(X;Z|S) + beta I(U;Z).

    Multi-restart Adam over encoder logits; the best restart wins and its
    reported quantities are recomputed from the final exact joint.
    """
    zhat_card = cfg.zhat_card if cfg.zhat_card is not None else src.card_x
    if zhat_card != mech.k**mech.d:
        raise PreconditionError(
            f"intermediate alphabet {zhat_card} does not match mechanism "
            f"alphabet k^d = {mech.k**mech.d}"
        )
    rr_rows = rr_channel(mech).rows

    best_obj = -np.inf
    best_logits = None
    converged_any = False
    for restart in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        logits = ad.parameter(rng.normal(0.0, 1.0, size=(src.card_x, zhat_card)))
        opt = ad.AdamState(lr=cfg.learning_rate)
        prev = -np.inf
        converged = False
        for _ in range(cfg.iterations):
            obj = _objective_graph(logits, src, rr_rows, cfg.beta)
            val = float(obj.data)
            if not np.isfinite(val):
                raise DivergenceError("solver objective became non-finite; lower the learning rate")
            if abs(val - prev) < cfg.tol:
                converged = True
                break
            prev = val
            ad.zero_grad([logits])
            ad.backward(obj)
            # ascent
            ad.adam_step([logits], opt, grads=[-logits.grad])
        if prev > best_obj:
            best_obj = prev
            best_logits = logits.data.copy()
            converged_any = converged

    enc = EncoderParams(best_logits).channel()
    return _exact_point(src, enc, rr_rows, cfg.beta, mech.epsilon, best_obj, converged_any)


def trace_frontier(
    src: JointSourceUSX,
    mech: RandomizedResponse,
    beta_grid,
    cfg: SolverConfig,
) -> list[FrontierPoint]:
    """One solved point per beta, in grid order; per-point failures are
    recorded as unconverged NaN points rather than aborting the sweep."""
    betas = sorted(float(b) for b in beta_grid)
    if not betas:
        raise PreconditionError("beta grid is empty")
    points = []
    for beta in betas:
        try:
            points.append(solve_g(src, mech, replace(cfg, beta=beta)))
        except DivergenceError:
            points.append(
                FrontierPoint(
                    beta=beta,
                    epsilon=mech.epsilon,
                    gamma_target=math.nan,
                    Gamma=math.nan,
                    Omega=math.nan,
                    nu=math.nan,
                    ixz=math.nan,
                    encoder=None,
                    objective=math.nan,
                    converged=False,
                )
            )
    return points


def check_theorem1(pt: FrontierPoint, gamma: float, tol: float = 1e-6) -> tuple[bool, dict]:
    """Report the three inequalities of the main utility-leakage guarantee.

    Assumes the point met its utility constraint Gamma >= gamma.
    """
    eps = pt.epsilon
    report = {
        "gamma_le_Gamma_le_eps": gamma - tol <= pt.Gamma <= eps + tol,
        "Omega_le_eps_minus_nu": pt.Omega <= eps - pt.nu + tol,
        "Omega_le_ixz_le_eps": pt.Omega <= pt.ixz + tol and pt.ixz <= eps + tol,
    }
    return all(report.values()), report


# -- brute-force oracle ------------------------------------------------------


def _batched_mi_terms(probs_2d: np.ndarray, channels: np.ndarray) -> np.ndarray:
    """I(A;Z) for each channel in a (B, X, Z) batch, given p(a, x)."""
    p_az = np.einsum("ax,bxz->baz", probs_2d, channels)
    p_a = probs_2d.sum(axis=1)
    p_z = p_az.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = p_az / (p_a[None, :, None] * p_z[:, None, :])
        terms = np.where(p_az > 0, p_az * np.log(ratio), 0.0)
    return terms.sum(axis=(1, 2))


def solve_G_bruteforce(
    src: JointSourceUSX,
    gamma: float,
    budget: int = 1_000_000,
    seed: int = 0,
    card_z: int | None = None,
) -> tuple[float, Channel]:
    """Oracle minimum of I(S;Z) subject to I(U;Z) >= gamma - 1e-6.

    Searches deterministic channels plus Dirichlet-sampled random
    channels at several concentrations; intended for |X| <= 4, |Z| <= 4
    where the candidate cloud covers the feasible set densely.
    """
    card_z = card_z if card_z is not None else src.card_x
    if src.card_x > 4 or card_z > 4:
        raise PreconditionError("oracle regime is |X| <= 4 and |Z| <= 4")
    max_util = mutual_information(src.p_ux())  # identity channel ceiling
    if gamma > max_util + CONSTRAINT_TOL:
        raise InfeasibleGammaError(
            f"gamma = {gamma:g} exceeds the maximum achievable I(U;Z) = {max_util:g}"
        )
    p_ux = src.p_ux()
    p_sx = src.p_sx()
    rng = np.random.default_rng(seed)

    best_leak = np.inf
    best_channel = None

    def consider(channels: np.ndarray) -> None:
        nonlocal best_leak, best_channel
        util = _batched_mi_terms(p_ux, channels)
        feasible = util >= gamma - CONSTRAINT_TOL
        if not feasible.any():
            return
        leak = _batched_mi_terms(p_sx, channels[feasible])
        i = int(np.argmin(leak))
        if leak[i] < best_leak:
            best_leak = float(leak[i])
            best_channel = channels[feasible][i]

    # all deterministic channels (at most card_z**card_x <= 256)
    n_det = card_z**src.card_x
    det = np.zeros((n_det, src.card_x, card_z))
    for idx in range(n_det):
        code = idx
        for x in range(src.card_x):
            det[idx, x, code % card_z] = 1.0
            code //= card_z
    consider(det)

    remaining = max(budget - n_det, 0)
    concentrations = (0.05, 0.2, 1.0, 5.0)
    chunk = 50_000
    per_conc = remaining // len(concentrations)
    for alpha in concentrations:
        done = 0
        while done < per_conc:
            b = min(chunk, per_conc - done)
            channels = rng.dirichlet(np.full(card_z, alpha), size=(b, src.card_x))
            consider(channels)
            done += b

    if best_channel is None:
        raise InfeasibleGammaError(
            f"no candidate among {budget} reached I(U;Z) >= {gamma:g}; "
            f"maximum achievable is {max_util:g}"
        )
    return best_leak, new_channel(best_channel)


def check_corollary2(
    src: JointSourceUSX,
    gamma: float,
    budget: int = 1_000_000,
    cfg: SolverConfig | None = None,
    slack: float = 1e-3,
    beta_grid=None,
) -> float:
    """Gap between the solver's minimum leakage at eps ~= gamma and the oracle.

    Runs the gradient solver with a randomized-response mechanism at
    eps = gamma * (1 + slack) across a beta grid, keeps the points whose
    achieved utility reaches gamma, and subtracts the brute-force optimum.
    Raises InfeasibleGammaError when no point reaches the utility floor;
    with randomized response this can happen even for modest gamma because
    the channel's actual information capacity sits well below its privacy
    budget epsilon.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    oracle_leak, _ = solve_G_bruteforce(src, gamma, budget=budget, seed=cfg.seed)
    if gamma == 0.0:
        # the constant encoder is optimal on both sides
        return 0.0 - oracle_leak
    zhat_card = cfg.zhat_card if cfg.zhat_card is not None else src.card_x
    mech = RandomizedResponse(epsilon=gamma * (1.0 + slack), k=zhat_card, d=1)
    betas = beta_grid if beta_grid is not None else np.logspace(-2, 3, 6)
    points = trace_frontier(src, mech, betas, cfg)
    feasible = [p for p in points if np.isfinite(p.Gamma) and p.Gamma >= gamma - CONSTRAINT_TOL]
    if not feasible:
        achieved = max((p.Gamma for p in points if np.isfinite(p.Gamma)), default=float("nan"))
        raise InfeasibleGammaError(
            f"no solver point reached Gamma >= {gamma:g} with eps = {mech.epsilon:g} "
            f"(best achieved Gamma = {achieved:g}); the randomized-response channel's "
            "information capacity is strictly below its privacy budget"
        )
    return min(p.Omega for p in feasible) - oracle_leak


def write_frontier_csv(points: list[FrontierPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["beta", "epsilon", "gamma", "Gamma", "Omega", "nu", "ixz", "converged"])
        for p in points:
            w.writerow(
                [p.beta, p.epsilon, p.gamma_target, p.Gamma, p.Omega, p.nu, p.ixz, int(p.converged)]
            )
