"""Command-line front end.

Subcommands: fit, transduce, bounds, experiment. Shared flags: --config PATH,
--seed U64, --threads N, --out DIR, --json. Flag values override config-file
values and the fully resolved configuration is echoed into every artifact.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error, 5 budget.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bounds, data, dictionary, experiments, moments, selector
from .errors import ConfigError, DataError, SlabregError


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return obj


def _resolve(args, keys):
    """Merge the config file with flag overrides for the listed keys."""
    config = _load_config(getattr(args, "config", None))
    for key in keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            config[key] = value
    config.setdefault("seed", 0)
    config.setdefault("threads", 1)
    config.setdefault("out", ".")
    return config


def _echoed(config):
    """Resolved config as embedded in artifacts.

    Thread count and output location are execution details: results are
    identical at any thread count by construction, so echoing them would
    break byte-identical artifacts across equivalent runs.
    """
    return {k: v for k, v in config.items() if k not in ("threads", "out")}


def _parse_inline_json(text, what):
    if isinstance(text, dict):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}") from None


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _write(path: Path, payload: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def _bound_spec(config) -> bounds.BoundSpec:
    obj = config.get("bound")
    if obj is None:
        raise ConfigError("missing 'bound' specification ({variant, epsilon, ...})")
    obj = _parse_inline_json(obj, "bound spec")
    if "epsilon" not in obj and config.get("epsilon") is not None:
        obj = {**obj, "epsilon": config["epsilon"]}
    return bounds.BoundSpec.from_json_dict(obj)


def _dictionary(config) -> dictionary.FeatureDictionary:
    obj = config.get("dictionary")
    if obj is None:
        raise ConfigError("missing 'dictionary' specification ({kind, m, parameters})")
    return dictionary.from_spec(_parse_inline_json(obj, "dictionary spec"))


def _inductive_moments(config, family, seed):
    spec = config.get("moments", {"kind": "exact"})
    spec = _parse_inline_json(spec, "moments spec")
    kind = spec.get("kind", "exact")
    if kind == "exact":
        return moments.exact_moments(family)
    if kind == "monte_carlo":
        sampler = moments.uniform_sampler(
            spec.get("low", 0.0), spec.get("high", 1.0), spec.get("dim", 1)
        )
        return moments.monte_carlo_moments(
            family, sampler, spec.get("n_samples", 100_000), spec.get("seed", seed)
        )
    if kind == "file":
        if "path" not in spec:
            raise ConfigError("moments kind 'file' needs a 'path'")
        gram = moments.load_gram_csv(spec["path"])
        if gram.m != family.m:
            raise ConfigError(f"gram file covers {gram.m} features, dictionary has {family.m}")
        return gram
    raise ConfigError(f"unknown moments kind {kind!r} (exact, monte_carlo, file)")


def _loo_arguments(config, family):
    if isinstance(family, dictionary.MultiscaleGaussian):
        return family.center_train_indices, family.features_per_center
    loo = config.get("loo_index")
    if loo is not None:
        return np.asarray(loo, dtype=int), config.get("features_per_point")
    return None, None


def _kappa(config, n_train):
    kappa = config.get("kappa")
    return None if kappa is None else float(kappa)


def _summary_text(model: selector.SelectionModel, head: int = 10) -> str:
    lines = [
        f"stopped_at: {model.stopped_at}",
        f"selected features (1-based): {model.selected.tolist()}",
        "trace head (n, feature, gamma, tau, delta, update):",
    ]
    for record in model.trace[:head]:
        lines.append(
            f"  {record.n} {record.feature} {record.gamma!r} {record.tau!r} "
            f"{record.delta!r} {record.update!r}"
        )
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    config = _resolve(args, ("train", "dictionary", "bound", "epsilon", "kappa", "schedule", "seed", "threads", "out"))
    if "train" not in config:
        raise ConfigError("fit needs a labeled training file ('train')")
    x, y = data.load_labeled_csv(config["train"])
    ds = data.Dataset(x=x, y=y, n_train=x.shape[0], k_test=0)
    family = _dictionary(config)
    spec = _bound_spec(config)
    if spec.transductive:
        raise ConfigError(f"fit is inductive; variant {spec.variant} needs the transduce command")
    mom = _inductive_moments(config, family, config["seed"])
    loo_index, fpp = _loo_arguments(config, family)
    model = selector.run_selection(
        ds,
        family,
        mom,
        spec,
        kappa=_kappa(config, ds.n_train),
        schedule=config.get("schedule", "GreedyMax"),
        loo_index=loo_index,
        features_per_point=fpp,
        seed=config["seed"],
    )
    out = Path(config["out"])
    payload = model.to_json_dict()
    payload["config"] = _echoed(config)
    _write(out / "model.json", _json_bytes(payload))
    summary = _summary_text(model)
    _write(out / "summary.txt", summary.encode())
    sys.stdout.write(summary)
    return 0


def cmd_transduce(args) -> int:
    config = _resolve(args, ("train", "test", "dictionary", "bound", "epsilon", "kappa", "schedule", "seed", "threads", "out"))
    for key in ("train", "test"):
        if key not in config:
            raise ConfigError(f"transduce needs a '{key}' file")
    x_train, y = data.load_labeled_csv(config["train"])
    x_test = data.load_unlabeled_csv(config["test"])
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    if x_test.shape[0] == 0:
        sys.stderr.write("warning: empty test file, writing empty predictions\n")
        data.write_predictions_csv(out / "predictions.csv", np.empty(0))
        return 0
    if x_test.shape[1] != x_train.shape[1]:
        raise DataError(
            f"train has dimension {x_train.shape[1]}, test has {x_test.shape[1]}"
        )
    n = x_train.shape[0]
    if x_test.shape[0] % n:
        raise DataError(
            f"test rows ({x_test.shape[0]}) must be a multiple of train rows ({n})"
        )
    k_test = x_test.shape[0] // n
    ds = data.Dataset(x=np.vstack([x_train, x_test]), y=y, n_train=n, k_test=k_test)
    family = _dictionary(config)
    spec = _bound_spec(config)
    if not spec.transductive:
        raise ConfigError(f"transduce needs a transductive variant, got {spec.variant}")
    features = family.evaluate(ds.x)
    mom = moments.empirical_test_moments(features, n, k_test)
    model = selector.run_selection(
        ds,
        family,
        mom,
        spec,
        kappa=_kappa(config, n),
        schedule=config.get("schedule", "GreedyMax"),
        seed=config["seed"],
    )
    predictions = features[n:] @ model.coefficients
    data.write_predictions_csv(out / "predictions.csv", predictions)
    payload = model.to_json_dict()
    payload["config"] = _echoed(config)
    _write(out / "model.json", _json_bytes(payload))
    sys.stdout.write(_summary_text(model))
    return 0


def _bounds_table(config):
    x, y = data.load_labeled_csv(config["train"])
    family = _dictionary(config)
    variants = config.get("variants")
    if not variants:
        variants = [_bound_spec(config).variant]
    specs = []
    for name in variants:
        obj = _parse_inline_json(config.get("bound", {}), "bound spec")
        obj = {**obj, "variant": name}
        if "epsilon" not in obj and config.get("epsilon") is not None:
            obj["epsilon"] = config["epsilon"]
        specs.append(bounds.BoundSpec.from_json_dict(obj))
    test_path = config.get("test")
    if any(s.transductive for s in specs):
        if test_path is None:
            raise ConfigError("transductive bound variants need a 'test' file")
        x_test = data.load_unlabeled_csv(test_path)
        n = x.shape[0]
        if x_test.shape[0] == 0 or x_test.shape[0] % n:
            raise DataError("test rows must be a positive multiple of train rows")
        k_test = x_test.shape[0] // n
        ds = data.Dataset(x=np.vstack([x, x_test]), y=y, n_train=n, k_test=k_test)
    else:
        ds = data.Dataset(x=x, y=y, n_train=x.shape[0], k_test=0)
    family_matrix = family.evaluate(ds.x)
    stats = bounds.compute_stats(family_matrix, ds)
    rows = []
    columns = {}
    for spec in specs:
        if spec.transductive:
            mom = moments.empirical_test_moments(family_matrix, ds.n_train, ds.k_test)
        else:
            mom = _inductive_moments(config, family, config["seed"])
        loo_index, fpp = _loo_arguments(config, family)
        radius = bounds.compute_radius(spec, stats, mom, loo_index=loo_index, features_per_point=fpp)
        columns[spec.variant] = (radius, mom)
    first = specs[0].variant
    radius0, mom0 = columns[first]
    ahat = bounds.alpha_hat(stats)
    ratio = bounds.normalization_ratio(stats, mom0)

    def cell(value):
        value = float(value)
        # degenerate features yield NaN/inf cells; strict JSON has no literal
        return value if np.isfinite(value) else None

    for k in range(stats.m):
        row = {
            "feature": k + 1,
            "v": cell(mom0.diag[k]),
            "alpha_hat": cell(ahat[k]),
            "c_ratio": cell(ratio[k]),
        }
        for name, (radius, _) in columns.items():
            row[f"beta[{name}]"] = cell(radius.beta[k])
            row[f"tau[{name}]"] = cell(radius.tau[k])
        rows.append(row)
    return rows


def cmd_bounds(args) -> int:
    config = _resolve(args, ("train", "test", "dictionary", "bound", "epsilon", "seed", "threads", "out"))
    if getattr(args, "variant", None):
        config["variants"] = list(args.variant)
    if "train" not in config:
        raise ConfigError("bounds needs a labeled training file ('train')")
    rows = _bounds_table(config)
    if args.json:
        sys.stdout.write(_json_bytes({"config": _echoed(config), "rows": rows}).decode())
        return 0
    header = list(rows[0].keys())
    sys.stdout.write("\t".join(header) + "\n")
    for row in rows:
        sys.stdout.write("\t".join(repr(row[h]) if isinstance(row[h], float) else str(row[h]) for h in header) + "\n")
    return 0


def _experiment_model(config) -> experiments.SyntheticModel:
    spec = config.get("model")
    if spec is not None:
        spec = _parse_inline_json(spec, "model spec")
        if "coefficients" in spec:
            return experiments.SyntheticModel.from_spec(spec)
        noise = experiments.NoiseSpec.from_spec(spec.get("noise", {"kind": "uniform", "scale": 0.05}))
        kind = spec.get("kind", "sobolev")
        if kind == "sobolev":
            return experiments.sobolev_model(
                smoothness=spec.get("smoothness", 1.0),
                size=spec.get("size", max(config.get("grid", [4096]))),
                scale=spec.get("scale", 1.0),
                noise=noise,
            )
        if kind == "besov":
            return experiments.besov_spike_model(
                smoothness=spec.get("smoothness", 1.0),
                levels=spec.get("levels", 11),
                scale=spec.get("scale", 1.0),
                noise=noise,
                seed=spec.get("seed", 0),
            )
        raise ConfigError(f"unknown model kind {kind!r}")
    return experiments.sobolev_model(size=max(config.get("grid", [4096])))


def cmd_experiment(args) -> int:
    config = _resolve(args, ("kind", "seed", "threads", "out"))
    kind = config.get("kind")
    if kind not in ("rate-sobolev", "rate-besov", "coverage", "transductive"):
        raise ConfigError(
            "experiment kind must be one of rate-sobolev, rate-besov, coverage, transductive"
        )
    threads = int(config["threads"])
    seed = int(config["seed"])
    started = time.monotonic()
    if kind in ("rate-sobolev", "rate-besov"):
        grid = config.get("grid", [64, 128, 256, 512, 768, 1024, 1536, 2048, 3072, 4096])
        config["grid"] = grid
        if kind == "rate-besov" and "model" not in config:
            config["model"] = {"kind": "besov", "levels": int(np.log2(max(grid)))}
        model = _experiment_model(config)
        report = experiments.rate_experiment(
            model,
            grid,
            replicates=config.get("replicates", 20),
            seed=seed,
            sigma_scale=config.get("sigma_scale", 1.0),
            threads=threads,
            budget_seconds=config.get("budget_seconds"),
        )
        report.kind = kind
    elif kind == "coverage":
        model = _experiment_model(config)
        report = experiments.coverage_study(
            config.get("variant", "IndExact"),
            model,
            n_train=config.get("N", 128),
            m=config.get("m", 64),
            epsilon=config.get("epsilon", 0.25),
            replicates=config.get("replicates", 500),
            seed=seed,
            k_test=config.get("k_test"),
            threads=threads,
        )
    else:
        model = _experiment_model(config)
        report = experiments.transductive_experiment(
            model,
            n_train=config.get("N", 64),
            k_test=config.get("k_test", 1),
            m=config.get("m", 32),
            variant=config.get("variant", "TrBasicBounded"),
            epsilon=config.get("epsilon", 0.1),
            replicates=config.get("replicates", 100),
            seed=seed,
            threads=threads,
        )
    out = Path(config["out"])
    payload = report.to_json_dict()
    payload["config_resolved"] = _echoed(config)
    payload["tool_version"] = __version__
    _write(out / "report.json", _json_bytes(payload))
    _write(out / "report.csv", report.csv_text().encode())
    sys.stderr.write(
        f"{kind}: {len(report.rows)} rows in {time.monotonic() - started:.1f}s"
        f"{' (partial)' if report.partial else ''}\n"
    )
    if report.partial:
        sys.stderr.write("budget exceeded: results flagged partial\n")
        return 5
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slabreg",
        description="Iterative feature selection by projection onto confidence slabs",
    )
    parser.add_argument("--version", action="version", version=f"slabreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="base seed (default 0)")
        p.add_argument("--threads", type=int, help="worker threads (default 1)")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--json", action="store_true", help="machine-readable stdout")

    fit = sub.add_parser("fit", help="fit an inductive selection model")
    shared(fit)
    fit.add_argument("--train", help="labeled CSV (x1..xd,y)")
    fit.add_argument("--dictionary", help="inline dictionary spec JSON")
    fit.add_argument("--bound", help="inline bound spec JSON")
    fit.add_argument("--epsilon", type=float)
    fit.add_argument("--kappa", type=float)
    fit.add_argument("--schedule", choices=selector.SCHEDULES)
    fit.set_defaults(func=cmd_fit)

    tr = sub.add_parser("transduce", help="fit on labeled data and predict unlabeled test labels")
    shared(tr)
    tr.add_argument("--train", help="labeled CSV (x1..xd,y)")
    tr.add_argument("--test", help="unlabeled CSV (x1..xd)")
    tr.add_argument("--dictionary", help="inline dictionary spec JSON")
    tr.add_argument("--bound", help="inline bound spec JSON")
    tr.add_argument("--epsilon", type=float)
    tr.add_argument("--kappa", type=float)
    tr.add_argument("--schedule", choices=selector.SCHEDULES)
    tr.set_defaults(func=cmd_transduce)

    bd = sub.add_parser("bounds", help="tabulate per-feature radii")
    shared(bd)
    bd.add_argument("--train")
    bd.add_argument("--test")
    bd.add_argument("--dictionary")
    bd.add_argument("--bound")
    bd.add_argument("--epsilon", type=float)
    bd.add_argument("--variant", action="append", help="repeatable; adds a beta/tau column per variant")
    bd.set_defaults(func=cmd_bounds)

    ex = sub.add_parser("experiment", help="run a rate, coverage or transductive experiment")
    shared(ex)
    ex.add_argument("--kind", choices=["rate-sobolev", "rate-besov", "coverage", "transductive"])
    ex.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SlabregError as exc:
        label = type(exc).__name__.removesuffix("Error").lower()
        sys.stderr.write(f"{label} error: {exc}\n")
        return exc.exit_code


def app() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    app()
