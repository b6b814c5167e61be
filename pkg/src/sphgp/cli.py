"""Command-line surface: ``sphgp train | eval | eigvals | gradcheck``.

Every command reads only its arguments, the config file, and the declared
environment variables ``SPHGP_DATA_DIR`` (dataset root) and ``SPHGP_BACKEND``
(numeric backend). Failures exit nonzero after printing a one-line JSON
error record to stderr. Deterministic mode (the default) pins the numeric
libraries to one thread; ``--parallel`` lifts that and relaxes
bit-reproducibility to tolerance-reproducibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _pin_threads():
    for var in _THREAD_VARS:
        os.environ.setdefault(var, "1")


def _resolve_data_path(path: str) -> Path:
    p = Path(path)
    if p.is_absolute():
        return p
    root = os.environ.get("SPHGP_DATA_DIR")
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _build_spectrum(kind, dim, max_frequency, beta0, depth, lambda0, variance0, quad_order):
    from . import kernels as K

    if kind == "poly_decay":
        return K.poly_decay_spectrum(
            beta0, dim, max_frequency, lambda0=lambda0, variance=variance0
        )
    shape = (
        K.compose_shape(K.ReluShape(), depth)
        if kind == "composed_relu"
        else K.ntk_relu_shape(depth)
    )
    return K.funk_hecke_spectrum(
        shape, dim, max_frequency, quad_order=quad_order or None, variance=variance0
    )


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    from . import checkpoint as CP
    from . import data_io as D
    from . import vargp as V
    from .config import config_hash, load_config, serialize_config

    cfg = load_config(args.config)
    if args.seed is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_root = Path(args.out) if args.out else Path(cfg.out_root)
    run_dir = out_root / config_hash(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)

    schema = D.load_schema(_resolve_data_path(cfg.schema))
    dataset = D.load_csv(
        _resolve_data_path(cfg.data_csv), schema, max_bad_fraction=cfg.max_bad_fraction
    )
    train, test = D.split(dataset, cfg.test_fraction, cfg.split_seed)
    sphere_train = D.project_to_sphere(train.standardized_inputs(), cfg.bias)
    sphere_test = D.project_to_sphere(test.standardized_inputs(), cfg.bias)
    dim = sphere_train.dim

    spectrum = _build_spectrum(
        cfg.kernel, dim, cfg.max_frequency, cfg.beta0, cfg.depth,
        cfg.lambda0, cfg.variance0, cfg.quad_order,
    )
    model = V.build_inducing_model(spectrum, phase_limit=cfg.phase_limit, seed=cfg.seed)
    if schema.task == "regression":
        likelihood = V.GaussianLikelihood(noise_variance=cfg.noise0)
        y_train = train.standardized_targets()
    else:
        likelihood = V.BernoulliLikelihood(link=cfg.link)
        y_train = train.targets
    fit_cfg = V.FitConfig(
        iterations=cfg.iterations,
        batch_size=min(cfg.batch_size, train.num_rows),
        lr_variational=cfg.lr_variational,
        lr_hyper=cfg.lr_hyper,
        seed=cfg.seed,
        log_every=cfg.log_every,
    )
    result = V.fit(model, sphere_train.coords, y_train, likelihood, fit_cfg)

    scaler_pair = None
    if train.target_scaler is not None:
        scaler_pair = (float(train.target_scaler.mean), float(train.target_scaler.std))
    metrics = V.evaluate(
        result.model, result.state, sphere_test.coords, test.targets, likelihood,
        target_scaler=scaler_pair,
    )
    metrics["n_train"] = train.num_rows
    metrics["n_test"] = test.num_rows
    metrics["dropped_rows"] = dataset.dropped_rows

    effective = serialize_config(cfg)
    (run_dir / "config.cfg").write_text(effective, encoding="utf-8")
    with open(run_dir / "trace.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,elbo,wallclock_s\n")
        for it, value, wall in result.trace:
            fh.write(f"{it},{value:.17g},{wall:.6f}\n")
    _write_json(run_dir / "metrics.json", metrics)
    CP.save_checkpoint(
        run_dir / "checkpoint.npz",
        CP.Checkpoint(
            model=result.model,
            state=result.state,
            likelihood=likelihood,
            task=schema.task,
            bias=cfg.bias,
            input_scaler=train.input_scaler,
            target_scaler=train.target_scaler,
            config_text=effective,
            config_hash=config_hash(cfg),
            schema_text=D.serialize_schema(schema),
            moments=result.moments,
        ),
    )
    print(json.dumps({"run_dir": str(run_dir), **{k: metrics[k] for k in sorted(metrics)}}))
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    import numpy as np

    from . import checkpoint as CP
    from . import data_io as D
    from . import vargp as V

    ckpt = CP.load_checkpoint(args.checkpoint)
    if args.schema:
        schema = D.load_schema(args.schema)
    else:
        schema = D.parse_schema(ckpt.schema_text)
    if schema.task != ckpt.task:
        raise D.DataError(
            f"checkpoint was trained for task {ckpt.task!r} but the data schema "
            f"declares {schema.task!r}"
        )
    dataset = D.load_csv(_resolve_data_path(args.data), schema)
    expected_dim = ckpt.model.basis.dim
    got_dim = dataset.inputs.shape[1] + 1
    if got_dim != expected_dim:
        raise D.DataError(
            f"data projects to dimension {got_dim} but the checkpoint expects "
            f"{expected_dim}"
        )
    X_std = ckpt.input_scaler.transform(dataset.inputs)
    sphere = D.project_to_sphere(X_std, ckpt.bias)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if ckpt.task == "regression":
        scaler_pair = (float(ckpt.target_scaler.mean), float(ckpt.target_scaler.std))
        metrics = V.evaluate(
            ckpt.model, ckpt.state, sphere.coords, dataset.targets, ckpt.likelihood,
            target_scaler=scaler_pair,
        )
        mu, var = V.predict(ckpt.model, ckpt.state, sphere.coords)
        mu = mu * scaler_pair[1] + scaler_pair[0]
        var = var * scaler_pair[1] ** 2
        columns = ("index", "target", "pred_mean", "pred_var")
        rows = zip(range(len(sphere)), dataset.targets, mu, var)
    else:
        metrics = V.evaluate(
            ckpt.model, ckpt.state, sphere.coords, dataset.targets, ckpt.likelihood
        )
        prob = V.predictive_probability(ckpt.model, ckpt.state, sphere.coords, ckpt.likelihood)
        columns = ("index", "target", "prob")
        rows = zip(range(len(sphere)), dataset.targets, prob)
    _write_json(out_dir / "metrics.json", metrics)
    with open(out_dir / "predictions.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(c) for c in row) + "\n")
    print(json.dumps({k: metrics[k] for k in sorted(metrics)}))
    return 0


def _fmt_cell(value):
    if isinstance(value, (int,)):
        return str(value)
    return f"{float(value):.10g}"


# ---------------------------------------------------------------------------
# eigvals
# ---------------------------------------------------------------------------

def _parse_kernel_arg(text: str):
    name, _, rest = text.partition(":")
    name = name.strip()
    aliases = {"poly": "poly_decay", "relu": "composed_relu"}
    name = aliases.get(name, name)
    if name not in ("poly_decay", "composed_relu", "ntk"):
        raise ValueError(f"unknown kernel {name!r} (use poly_decay|composed_relu|ntk)")
    params = {}
    if rest:
        for piece in rest.split(","):
            key, _, val = piece.partition("=")
            params[key.strip()] = val.strip()
    beta = float(params.pop("beta", 1.0))
    depth = int(params.pop("depth", 1))
    if params:
        raise ValueError(f"unknown kernel parameters {sorted(params)}")
    return name, beta, depth


def cmd_eigvals(args) -> int:
    from . import kernels as K

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for spec_text in args.kernel:
        kind, beta, depth = _parse_kernel_arg(spec_text)
        spectrum = _build_spectrum(
            kind, args.dim, args.max_frequency, beta, depth,
            lambda0=1.0, variance0=1.0, quad_order=args.quad_order,
        )
        label = spec_text.replace(":", "_").replace("=", "").replace(",", "_")
        path = out_dir / f"eigvals_{label}_d{args.dim}.csv"
        K.export_spectrum(spectrum, path)
        written.append(str(path))
    print(json.dumps({"written": written}))
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    import numpy as np

    from . import kernels as K
    from . import vargp as V
    from .gradcheck import check_gradients, worst_rows

    rng = np.random.default_rng(args.seed)
    dim, lmax = 4, 3
    spectrum = K.poly_decay_spectrum(1.3, dim, lmax, variance=1.1)
    model = V.build_inducing_model(spectrum, phase_limit=2, seed=args.seed)
    likelihood = V.GaussianLikelihood(noise_variance=0.1)
    state = V.init_state(model, likelihood, seed=args.seed)
    m = model.num_features
    state.mean = 0.3 * rng.standard_normal(m)
    L = np.tril(0.1 * rng.standard_normal((m, m)))
    np.fill_diagonal(L, np.exp(0.2 * rng.standard_normal(m) - 0.4))
    state.cov_params = V.cov_params_from_factor(L)
    X = rng.standard_normal((16, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.standard_normal(16)

    rows = check_gradients(
        model, state, X, y, likelihood, n_total=48, corrupt=args.corrupt
    )
    header = f"{'parameter':<18} {'analytic':>14} {'finite_diff':>14} {'rel_err':>10}  status"
    print(header)
    print("-" * len(header))
    for block, row in worst_rows(rows).items():
        status = "ok" if row.ok else "FAIL"
        print(
            f"{row.parameter:<18} {row.analytic:>14.6g} {row.finite_diff:>14.6g} "
            f"{row.rel_err:>10.2e}  {status}"
        )
    failures = [r for r in rows if not r.ok]
    print(f"{len(rows) - len(failures)}/{len(rows)} gradient coordinates passed")
    if failures:
        print(f"first failure: {failures[0].parameter}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphgp",
        description="Sparse GPs with spherical-harmonic inducing features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        det = p.add_mutually_exclusive_group()
        det.add_argument(
            "--deterministic", action="store_true", default=True,
            help="single-threaded, bit-reproducible mode (default)",
        )
        det.add_argument(
            "--parallel", dest="deterministic", action="store_false",
            help="allow threaded numerics; reproducible only to tolerance",
        )

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None, help="output root (default from config)")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a CSV")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--schema", default=None)
    p_eval.add_argument("--out", required=True)
    common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_eig = sub.add_parser("eigvals", help="export relative eigenvalue decay CSVs")
    p_eig.add_argument(
        "--kernel", action="append", required=True,
        help="kernel spec, e.g. poly_decay:beta=1.5 | composed_relu:depth=3 | ntk:depth=2 "
        "(repeatable)",
    )
    p_eig.add_argument("--dim", type=int, required=True)
    p_eig.add_argument("--max-frequency", type=int, required=True)
    p_eig.add_argument("--quad-order", type=int, default=0)
    p_eig.add_argument("--out", required=True)
    common(p_eig)
    p_eig.set_defaults(func=cmd_eigvals)

    p_gc = sub.add_parser("gradcheck", help="verify analytic gradients on a synthetic problem")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    det = p_gc.add_mutually_exclusive_group()
    det.add_argument("--deterministic", action="store_true", default=True)
    det.add_argument("--parallel", dest="deterministic", action="store_false")
    p_gc.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "deterministic", True):
        _pin_threads()
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
