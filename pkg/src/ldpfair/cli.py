"""Batch command-line surface.

Commands: fetch-data, verify, solve, frontier, train, evaluate, sweep,
report.  Configuration is plain key=value text (diff-friendly experiment
records) with an explicit grid syntax, e.g. ``beta=logspace(-3,3,7)`` or
``epsilon=0.5,5,1000``.  Every artifact embeds the config hash so a
result file can always be traced to the exact configuration that
produced it.

Exit codes: 0 success, 2 config error, 3 check failure, 4 runtime/data
error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets, fair_encoder, fairness_metrics, ib_solver
from .discrete_source import load_source, random_source
from .errors import (
    ConfigError,
    DatasetError,
    DivergenceError,
    LdpFairError,
    PreconditionError,
)
from .ib_solver import SolverConfig, check_theorem1, solve_g, trace_frontier
from .ldp_mechanisms import (
    check_lemma1,
    mechanism_from_spec,
    rr_channel,
    verify_ldp,
    RandomizedResponse,
)

CACHE_ENV = "LDPFAIR_CACHE_DIR"
SWEEP_COLUMNS = [
    "beta", "epsilon", "mode", "accuracy", "delta_dp", "delta_eo",
    "leakage_nats", "sensitive_acc", "seed",
]

_GRID_RE = re.compile(r"^logspace\(\s*(-?[\d.]+)\s*,\s*(-?[\d.]+)\s*,\s*(\d+)\s*\)$")


def parse_config(text: str) -> dict:
    """key=value lines; '#' comments; grids via logspace(a,b,n) or commas."""
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        cfg[key] = _parse_value(value)
    return cfg


def _parse_value(value: str):
    m = _GRID_RE.match(value)
    if m:
        lo, hi, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
        if n < 1:
            raise ConfigError(f"logspace grid needs >= 1 points: {value!r}")
        return [float(v) for v in np.logspace(lo, hi, n)]
    if "," in value:
        return [_parse_scalar(v.strip()) for v in value.split(",") if v.strip()]
    return _parse_scalar(value)


def _parse_scalar(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _dump_json(payload: dict) -> str:
    # numpy scalars (np.bool_, np.float64) leak into check reports; .item()
    # converts them to native types
    return json.dumps(
        payload, indent=2, default=lambda o: o.item() if hasattr(o, "item") else str(o)
    ) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _as_list(value) -> list:
    return list(value) if isinstance(value, list) else [value]


def _get(cfg: dict, key: str, default=None, required: bool = False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"config key {key!r} is required")
    return default


def _cache_dir(cfg: dict, out: Path) -> Path:
    return Path(os.environ.get(CACHE_ENV) or _get(cfg, "cache_dir", out / "cache"))


def _write_csv(path: Path, header: list[str], rows: list[list], chash: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={chash}\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _load_config_source(cfg: dict):
    path = _get(cfg, "source")
    if path:
        return load_source(path)
    return random_source(
        int(_get(cfg, "card_u", 2)), int(_get(cfg, "card_s", 2)),
        int(_get(cfg, "card_x", 3)), seed=int(_get(cfg, "source_seed", 0)),
    )


def _solver_config(cfg: dict, beta: float, seed: int) -> SolverConfig:
    return SolverConfig(
        beta=beta,
        restarts=int(_get(cfg, "restarts", 4)),
        iterations=int(_get(cfg, "iterations", 1500)),
        learning_rate=float(_get(cfg, "solver_lr", 0.05)),
        zhat_card=(int(cfg["zhat_card"]) if "zhat_card" in cfg else None),
        seed=seed,
    )


def _solver_mechanism(cfg: dict, src, epsilon: float) -> RandomizedResponse:
    k = int(_get(cfg, "zhat_card", src.card_x))
    return RandomizedResponse(epsilon=epsilon, k=k, d=1)


def _load_dataset_pair(cfg: dict, out: Path):
    name = str(_get(cfg, "dataset", required=True))
    if name == "adult":
        train_raw, test_raw = datasets.fetch_uci_adult(
            _cache_dir(cfg, out), url_override=_get(cfg, "adult_url")
        )
        return datasets.preprocess_adult(train_raw, test_raw)
    if name == "compas":
        return datasets.load_compas(_get(cfg, "compas_csv", required=True))
    if name == "synthetic":
        card_x = int(_get(cfg, "card_x", 4))
        feat_dim = int(_get(cfg, "feat_dim", card_x))
        src = random_source(2, 2, card_x, seed=int(_get(cfg, "source_seed", 0)))
        means = 2.0 * np.eye(card_x, feat_dim)
        spec = datasets.SyntheticSpec(
            source=src, means=means, sigma=float(_get(cfg, "sigma", 0.5)),
            n_train=int(_get(cfg, "n_train", 4000)),
            n_test=int(_get(cfg, "n_test", 2000)),
            seed=int(_get(cfg, "data_seed", 0)),
        )
        return datasets.generate_synthetic(spec)
    raise ConfigError(f"unknown dataset {name!r}; use adult, compas, or synthetic")


def _mechanism(cfg: dict, epsilon: float):
    return mechanism_from_spec(
        {
            "kind": _get(cfg, "mechanism", "laplace"),
            "epsilon": epsilon,
            "t": _get(cfg, "t", 0.5),
            "d": _get(cfg, "d", 2),
            "k": _get(cfg, "k", 4),
        }
    )


def _train_config(cfg: dict, beta: float, seed: int) -> fair_encoder.TrainConfig:
    return fair_encoder.TrainConfig(
        beta=beta,
        epochs=int(_get(cfg, "epochs", 150)),
        batch_size=int(_get(cfg, "batch", 512)),
        learning_rate=float(_get(cfg, "lr", 1e-3)),
        mc_samples=int(_get(cfg, "L", 1)),
        seed=seed,
    )


# -- commands ----------------------------------------------------------------


def cmd_fetch_data(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    train, test = _load_dataset_pair(cfg, out)
    chash = config_hash(cfg)
    datasets.save_dataset(train, out / "train.npz")
    datasets.save_dataset(test, out / "test.npz")
    (out / "fetch.json").write_text(
        json.dumps(
            {
                "config_hash": chash,
                "train_rows": train.n,
                "test_rows": test.n,
                "train_hash": train.content_hash(),
                "test_hash": test.content_hash(),
            },
            indent=2,
        )
        + "\n"
    )
    print(f"wrote {out / 'train.npz'} ({train.n} rows) and {out / 'test.npz'} ({test.n} rows)")
    return 0


def cmd_verify(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    """Run every theory check; exit 0 iff all pass."""
    checks: dict[str, dict] = {}
    rng_seeds = [seed + i for i in range(int(_get(cfg, "verify_sources", 3)))]

    # closure + budget bound over random encoders and RR channels
    worst_ratio, worst_mi = 0.0, 0.0
    lemma_ok = True
    from .discrete_source import compose, induced_joint, random_channel
    from .info_measures import mutual_information

    for eps in _as_list(_get(cfg, "epsilon", [0.5, 1.0, 2.0])):
        mech_ch = rr_channel(RandomizedResponse(epsilon=float(eps), k=3, d=1))
        for s in rng_seeds:
            src = random_source(2, 2, 3, seed=s)
            enc = random_channel(3, 3, seed=s + 1)
            if not check_lemma1(enc, mech_ch, float(eps)):
                lemma_ok = False
            ratio, _ = verify_ldp(compose(enc, mech_ch), float(eps))
            worst_ratio = max(worst_ratio, ratio - float(eps))
            mi = mutual_information(induced_joint(src, compose(enc, mech_ch)).p_xz())
            worst_mi = max(worst_mi, mi - float(eps))
    checks["lemma1_closure"] = {"pass": lemma_ok, "worst_ratio_excess": worst_ratio}
    checks["lemma2_budget_bound"] = {"pass": worst_mi <= 1e-9, "worst_mi_excess": worst_mi}

    # bound chain at a solved operating point, plus the zero-budget case
    src = _load_config_source(cfg)
    eps = float(_get(cfg, "solve_epsilon", 1.0))
    beta = float(_as_list(_get(cfg, "beta", 10.0))[0])
    pt = solve_g(src, _solver_mechanism(cfg, src, eps), _solver_config(cfg, beta, seed))
    ok, report = check_theorem1(pt, gamma=pt.Gamma)
    checks["theorem1_bounds"] = {"pass": ok, **report}

    zero = solve_g(src, _solver_mechanism(cfg, src, 0.0), _solver_config(cfg, beta, seed))
    zero_ok = max(zero.Gamma, zero.Omega, zero.ixz) <= 1e-12
    checks["zero_budget_collapse"] = {
        "pass": zero_ok, "Gamma": zero.Gamma, "Omega": zero.Omega, "ixz": zero.ixz,
    }

    if bool(_get(cfg, "check_budget_equals_floor", False)):
        try:
            gap = ib_solver.check_corollary2(
                src, gamma=float(_get(cfg, "gamma", 0.05)),
                budget=int(_get(cfg, "oracle_budget", 100_000)), cfg=_solver_config(cfg, beta, seed),
            )
            checks["budget_equals_floor"] = {"pass": abs(gap) <= 0.02, "gap_nats": gap}
        except LdpFairError as exc:
            checks["budget_equals_floor"] = {"pass": False, "error": str(exc)}

    all_ok = bool(all(c["pass"] for c in checks.values()))
    payload = {"config_hash": config_hash(cfg), "pass": all_ok, "checks": checks}
    (out / "verify.json").write_text(_dump_json(payload))
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}")
    if not all_ok:
        failed = [n for n, c in checks.items() if not c["pass"]]
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


def cmd_solve(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    src = _load_config_source(cfg)
    eps = float(_as_list(_get(cfg, "epsilon", required=True))[0])
    beta = float(_as_list(_get(cfg, "beta", 1.0))[0])
    pt = solve_g(src, _solver_mechanism(cfg, src, eps), _solver_config(cfg, beta, seed))
    payload = {
        "config_hash": config_hash(cfg),
        "beta": pt.beta, "epsilon": pt.epsilon, "Gamma": pt.Gamma, "Omega": pt.Omega,
        "nu": pt.nu, "ixz": pt.ixz, "objective": pt.objective, "converged": pt.converged,
    }
    (out / "solution.json").write_text(json.dumps(payload, indent=2) + "\n")
    from .discrete_source import save_channel

    save_channel(pt.encoder, out / "encoder.channel")
    print(f"Gamma={pt.Gamma:.6f} Omega={pt.Omega:.6f} ixz={pt.ixz:.6f}")
    return 0


def cmd_frontier(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    src = _load_config_source(cfg)
    eps = float(_as_list(_get(cfg, "epsilon", required=True))[0])
    betas = [float(b) for b in _as_list(_get(cfg, "beta", required=True))]
    points = trace_frontier(src, _solver_mechanism(cfg, src, eps), betas, _solver_config(cfg, betas[0], seed))
    rows = [
        [p.beta, p.epsilon, p.gamma_target, p.Gamma, p.Omega, p.nu, p.ixz, p.converged]
        for p in points
    ]
    _write_csv(
        out / "frontier.csv",
        ["beta", "epsilon", "gamma", "Gamma", "Omega", "nu", "ixz", "converged"],
        rows, config_hash(cfg),
    )
    print(f"wrote {out / 'frontier.csv'} ({len(points)} points)")
    return 0


def cmd_train(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    train_ds, _ = _load_dataset_pair(cfg, out)
    eps = float(_as_list(_get(cfg, "epsilon", required=True))[0])
    mech = _mechanism(cfg, eps)
    model = fair_encoder.EncoderModel(
        train_ds.schema, mech, seed=seed, code_dim=int(_get(cfg, "D", 8))
    )
    tc = _train_config(cfg, float(_get(cfg, "beta", 1.0)), seed)
    history = fair_encoder.train(model, train_ds, tc)
    fair_encoder.save_model(model, out / "model.npz")
    fair_encoder.write_history_csv(history, out / "history.csv")
    with open(out / "history.csv") as f:
        body = f.read()
    with open(out / "history.csv", "w") as f:
        f.write(f"# config_hash={config_hash(cfg)}\n" + body)
    print(f"trained {tc.epochs} epochs; final loss {history[-1].total:.4f}")
    return 0


def cmd_evaluate(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    ckpt = Path(_get(cfg, "model", out / "model.npz"))
    if not ckpt.exists():
        raise DatasetError(f"no checkpoint at {ckpt}; run the train command first")
    model = fair_encoder.load_model(ckpt)
    _, test_ds = _load_dataset_pair(cfg, out)
    seeds = [int(v) for v in _as_list(_get(cfg, "seeds", [seed]))]
    report = fairness_metrics.full_report(model, test_ds, seeds)
    report.to_json(out / "report.json", extra={"config_hash": config_hash(cfg)})
    print(
        f"accuracy {report.accuracy_mean:.4f} ddp {report.delta_dp_mean:.4f} "
        f"leakage {report.leakage_mean:.4f} nats"
    )
    return 0


def _sweep_cell(args):
    """One (beta, epsilon, mode) training + evaluation; returns result rows."""
    cfg, out_str, beta, eps, mode, seed = args
    out = Path(out_str)
    cell_cfg = dict(cfg)
    cell_cfg["mechanism"] = mode
    try:
        train_ds, test_ds = _load_dataset_pair(cell_cfg, out)
        mech = _mechanism(cell_cfg, eps)
        model = fair_encoder.EncoderModel(
            train_ds.schema, mech, seed=seed, code_dim=int(_get(cell_cfg, "D", 8))
        )
        fair_encoder.train(model, train_ds, _train_config(cell_cfg, beta, seed))
        seeds = [int(v) for v in _as_list(_get(cell_cfg, "seeds", [seed]))]
        rep = fairness_metrics.full_report(model, test_ds, seeds)
        return [
            [beta, eps, mode, rep.per_seed["accuracy"][i], rep.per_seed["delta_dp"][i],
             rep.per_seed["delta_eo"][i], rep.per_seed["leakage"][i],
             rep.per_seed["sensitive_accuracy"][i], sd]
            for i, sd in enumerate(seeds)
        ], None
    except LdpFairError as exc:
        return [], f"beta={beta} epsilon={eps} mode={mode}: {exc}"


def cmd_sweep(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    betas = [float(b) for b in _as_list(_get(cfg, "beta", required=True))]
    epsilons = [float(e) for e in _as_list(_get(cfg, "epsilon", required=True))]
    modes = [str(m) for m in _as_list(_get(cfg, "mechanism", "laplace"))]
    cells = [(cfg, str(out), b, e, m, seed) for b in betas for e in epsilons for m in modes]

    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    rows, failures = [], []
    for cell_rows, err in results:
        rows.extend(cell_rows)
        if err:
            failures.append(err)
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[8]))  # deterministic merge
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, config_hash(cfg))
    if failures:
        (out / "sweep_failures.txt").write_text("\n".join(failures) + "\n")
        print(f"{len(failures)} cells failed; see {out / 'sweep_failures.txt'}", file=sys.stderr)
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def cmd_report(cfg: dict, out: Path, seed: int, jobs: int) -> int:
    """Merge sweep CSVs into per-(beta, epsilon, mode) accuracy vs fairness tables."""
    paths = [Path(p) for p in _as_list(_get(cfg, "sweep", out / "sweep.csv"))]
    groups: dict[tuple, dict[str, list[float]]] = {}
    for path in paths:
        if not path.exists():
            raise DatasetError(f"sweep file not found: {path}")
        header, rows = _read_csv(path)
        col = {name: i for i, name in enumerate(header)}
        for r in rows:
            key = (float(r[col["beta"]]), float(r[col["epsilon"]]), r[col["mode"]])
            g = groups.setdefault(key, {m: [] for m in ("accuracy", "delta_dp", "delta_eo", "leakage_nats", "sensitive_acc")})
            for m in g:
                g[m].append(float(r[col[m]]))
    table = []
    for (beta, eps, mode), metrics in sorted(groups.items()):
        entry = {"beta": beta, "epsilon": eps, "mode": mode}
        for m, vals in metrics.items():
            entry[f"{m}_median"] = float(np.median(vals))
            entry[f"{m}_std"] = float(np.std(vals))
        table.append(entry)
    payload = {"config_hash": config_hash(cfg), "cells": table}
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {out / 'report.json'} ({len(table)} cells)")
    return 0


COMMANDS = {
    "fetch-data": cmd_fetch_data,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "frontier": cmd_frontier,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ldpfair",
        description="fair representation learning under local differential privacy",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config.read_text()) if args.config else {}
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args.out, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, DivergenceError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4
    except PreconditionError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LdpFairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
