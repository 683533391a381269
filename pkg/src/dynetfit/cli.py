"""Command line interface.

Every subcommand reads a JSON config file plus the global flags and writes
CSV/JSON outputs into the output directory; given the same inputs, flags,
and seed, reruns are byte-identical.  Exit codes: 0 success, 1 usage or
configuration error, 2 malformed data, 3 numerical failure, 4 fit stopped at
the iteration cap without converging.

Config schemas are documented in the repository README.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import data as data_mod
from . import inference, model
from .errors import DataError, NumericalError
from .estimation import FitConfig, FitReport, fit, select_model
from .kernels import KernelSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_ITERATION_CAP = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems by default; this tool reserves
    # 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynetfit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in [
        ("simulate", "sample a synthetic network and write data + truth files"),
        ("fit", "fit the model to an edge list"),
        ("select", "fit a (dim, kernel) grid and pick the best BIC"),
        ("eval", "score fitted parameters against a ground truth"),
        ("embed", "write plot-ready coordinates for vertices or trajectories"),
        ("cluster", "cluster vertices or layers from fitted parameters"),
        ("offline-fit", "solve coefficients for new data under frozen factors"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}")


def _require(config, key, command):
    if key not in config:
        raise UsageError(f"{command}: config key {key!r} is required")
    return config[key]


def _input_path(config, key, command, optional=False):
    if optional and key not in config:
        return None
    path = _require(config, key, command)
    if not os.path.exists(path):
        raise UsageError(f"{command}: {key} path does not exist: {path}")
    return path


def _require_seed(seed, command, why):
    if seed is None:
        raise UsageError(f"{command}: --seed is required ({why})")
    return seed


def _kernel_from(config, command) -> KernelSpec:
    try:
        return KernelSpec.from_dict(_require(config, "kernel", command))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{command}: bad kernel spec: {exc}")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value))


def _write_trace(path, report: FitReport):
    rows = [
        (i, _fmt(loss), _fmt(sig))
        for i, (loss, sig) in enumerate(zip(report.loss_trace, report.sigma_trace))
    ]
    _write_csv(path, ["iter", "loss", "sigma"], rows)


def _load_observations(config, command) -> data_mod.ObservationSet:
    edges = _input_path(config, "edges", command)
    manifest = _input_path(config, "manifest", command)
    mask = _input_path(config, "mask", command, optional=True)
    return data_mod.load_edge_list(edges, manifest, mask_path=mask)


def _fit_config(config, command, seed) -> FitConfig:
    payload = dict(_require(config, "fit", command))
    if "dim" not in payload:
        raise UsageError(f"{command}: fit.dim is required")
    payload.setdefault("seed", seed)
    try:
        return FitConfig(**payload).validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{command}: bad fit config: {exc}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(config, out_dir, seed):
    generator = _require(config, "generator", "simulate")
    seed = _require_seed(seed, "simulate", "sampling is stochastic")
    rng = np.random.default_rng(seed)
    truth = None
    if generator == "multilayer-sbm":
        spec = data_mod.SbmSpec(
            n=int(_require(config, "n", "simulate")),
            dim=int(_require(config, "dim", "simulate")),
            n_times=int(_require(config, "n_times", "simulate")),
            layers=int(_require(config, "layers", "simulate")),
            cycle=float(config.get("cycle", 3.0)),
            mu_range=tuple(config.get("mu_range", (-10.0, 10.0))),
            delta_range=tuple(config.get("delta_range", (-1.0, 1.0))),
            phase_range=tuple(config.get("phase_range", (0.0, np.pi))),
        ).validate()
        obs, truth = data_mod.generate_dynamic_multilayer_sbm(spec, rng)
    elif generator == "layer-clusters":
        obs, truth = data_mod.generate_layer_clusters(
            n=int(_require(config, "n", "simulate")),
            layers=int(_require(config, "layers", "simulate")),
            n_times=int(_require(config, "n_times", "simulate")),
            rng=rng,
            clusters=int(config.get("clusters", 3)),
            level=float(config.get("level", 0.15)),
            cycle=float(config.get("cycle", 3.0)),
            dim=int(config.get("dim", 2)),
        )
    elif generator == "model":
        params = model.load_params(_input_path(config, "params", "simulate"))
        if "times" in config:
            times = np.asarray(config["times"], dtype=float)
        else:
            times = np.linspace(0.0, 1.0, int(_require(config, "n_times", "simulate")))
        obs = data_mod.sample_from_model(params, times, rng)
    else:
        raise UsageError(f"simulate: unknown generator {generator!r}")
    data_mod.write_edge_list(
        obs,
        os.path.join(out_dir, "edges.csv"),
        os.path.join(out_dir, "manifest.json"),
    )
    if truth is not None:
        data_mod.save_truth(truth, os.path.join(out_dir, "truth.json"))
    return EXIT_OK


def cmd_fit(config, out_dir, seed):
    obs = _load_observations(config, "fit")
    kernel = _kernel_from(config, "fit")
    fit_config = _fit_config(config, "fit", seed)
    if fit_config.init == "random":
        _require_seed(fit_config.seed, "fit", "random init is stochastic")
    report = fit(obs, fit_config, kernel)
    model.save_params(report.params, os.path.join(out_dir, "params.json"))
    _write_json(os.path.join(out_dir, "report.json"), report.to_dict())
    _write_trace(os.path.join(out_dir, "trace.csv"), report)
    return EXIT_OK if report.converged else EXIT_ITERATION_CAP


def cmd_select(config, out_dir, seed):
    obs = _load_observations(config, "select")
    dims = _require(config, "dims", "select")
    if not isinstance(dims, list) or not dims:
        raise UsageError("select: dims must be a nonempty list")
    kernel_objs = _require(config, "kernels", "select")
    if not isinstance(kernel_objs, list) or not kernel_objs:
        raise UsageError("select: kernels must be a nonempty list")
    try:
        kernels = [KernelSpec.from_dict(obj) for obj in kernel_objs]
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"select: bad kernel spec: {exc}")
    payload = dict(config.get("fit", {}))
    payload.setdefault("dim", int(dims[0]))
    payload.setdefault("seed", seed)
    try:
        base = FitConfig(**payload).validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"select: bad fit config: {exc}")
    result = select_model(obs, [int(d) for d in dims], kernels, base)
    rows = [
        (
            row["dim"],
            row["kernel"].family,
            "" if row["kernel"].period is None else _fmt(row["kernel"].period),
            _fmt(row["bic"]) if math.isfinite(row["bic"]) else "inf",
        )
        for row in result.rows
    ]
    _write_csv(os.path.join(out_dir, "bic_table.csv"),
               ["d", "kernel", "period", "bic"], rows)
    model.save_params(result.best_report.params,
                      os.path.join(out_dir, "best_params.json"))
    _write_json(os.path.join(out_dir, "best_report.json"),
                result.best_report.to_dict())
    return EXIT_OK


def _load_truth_like(path):
    with open(path) as fh:
        obj = json.load(fh)
    if "coeffs_shape" in obj:
        return model.params_from_dict(obj), None
    truth = data_mod.GroundTruth.from_dict(obj)
    return truth, truth


def cmd_eval(config, out_dir, seed):
    params = model.load_params(_input_path(config, "params", "eval"))
    truth_like, truth = _load_truth_like(_input_path(config, "truth", "eval"))
    grid_size = int(config.get("grid_size", 100))
    metrics = inference.evaluate_against_truth(params, _TruthAdapter(truth_like),
                                               grid_size=grid_size)
    has_labels = truth is not None and (
        truth.out_labels is not None or truth.layer_labels is not None
    )
    if has_labels:
        _require_seed(seed, "eval", "label clustering uses k-means")
        restarts = int(config.get("restarts", 16))
        if truth.out_labels is not None:
            k = int(np.unique(truth.out_labels).size)
            pred_out, pred_in = inference.vertex_communities(
                params, k, seed, restarts=restarts
            )
            metrics["vertex_accuracy_out"] = inference.clustering_accuracy(
                pred_out, truth.out_labels
            )
            metrics["vertex_accuracy_in"] = inference.clustering_accuracy(
                pred_in, truth.in_labels
            )
            metrics["vertex_accuracy_overall"] = 0.5 * (
                metrics["vertex_accuracy_out"] + metrics["vertex_accuracy_in"]
            )
        if truth.layer_labels is not None:
            k = int(np.unique(truth.layer_labels).size)
            pred = inference.cluster_layers(params, k, seed, restarts=restarts)
            metrics["layer_accuracy"] = inference.clustering_accuracy(
                pred, truth.layer_labels
            )
    _write_json(os.path.join(out_dir, "metrics.json"), metrics)
    return EXIT_OK


class _TruthAdapter:
    """Uniform view of a GroundTruth or a ModelParams used as reference."""

    def __init__(self, truth_like):
        self._truth = truth_like
        self.out_factors = truth_like.out_factors
        self.in_factors = truth_like.in_factors

    def core_values(self, times):
        if hasattr(self._truth, "core_values"):
            return self._truth.core_values(times)
        return model.core_values(self._truth, times)


def cmd_embed(config, out_dir, seed):
    params = model.load_params(_input_path(config, "params", "embed"))
    task = config.get("task", "vertices")
    dim = int(config.get("dim", 2 if task == "vertices" else 1))
    if task == "vertices":
        for name, rows in (("out", params.out_factors), ("in", params.in_factors)):
            if params.dim == dim:
                coords = rows
            else:
                sq = ((rows[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2)
                dist = np.sqrt(np.maximum(sq, 0.0))
                coords = inference.classical_mds(dist, dim)
            _write_csv(
                os.path.join(out_dir, f"vertex_{name}_coords.csv"),
                ["vertex"] + [f"c{i + 1}" for i in range(coords.shape[1])],
                [(i, *map(_fmt, row)) for i, row in enumerate(coords)],
            )
    elif task == "trajectory":
        grid_size = int(config.get("grid_size", 100))
        grid = np.linspace(0.0, 1.0, grid_size)
        dist = inference.trajectory_distance_matrix(params, grid, mode="per-point")
        coords = inference.classical_mds(dist, dim)
        rows = []
        for s in range(params.layers):
            for t_idx, t in enumerate(grid):
                rows.append(
                    (s, _fmt(t), *map(_fmt, coords[s * grid_size + t_idx]))
                )
        _write_csv(
            os.path.join(out_dir, "trajectory_coords.csv"),
            ["layer", "time"] + [f"c{i + 1}" for i in range(coords.shape[1])],
            rows,
        )
    else:
        raise UsageError(f"embed: unknown task {task!r}")
    return EXIT_OK


def cmd_cluster(config, out_dir, seed):
    params = model.load_params(_input_path(config, "params", "cluster"))
    task = config.get("task", "layers")
    restarts = int(config.get("restarts", 16))
    if task == "layers":
        grid_size = int(config.get("grid_size", 100))
        grid = np.linspace(0.0, 1.0, grid_size)
        dist = inference.trajectory_distance_matrix(params, grid,
                                                    mode="per-trajectory")
        merges, _ = inference.hierarchical_cluster(dist)
        _write_csv(
            os.path.join(out_dir, "dendrogram.csv"),
            ["step", "left", "right", "height"],
            [(step, left, right, _fmt(height)) for step, left, right, height in merges],
        )
        if "k" in config:
            _require_seed(seed, "cluster", "k-means labels are stochastic")
            labels = inference.cluster_layers(
                params, int(config["k"]), seed, restarts=restarts,
                features=config.get("features", "coeffs"), grid_size=grid_size,
            )
            _write_csv(
                os.path.join(out_dir, "layer_labels.csv"),
                ["layer", "label"],
                list(enumerate(labels.tolist())),
            )
    elif task == "vertices":
        _require_seed(seed, "cluster", "k-means labels are stochastic")
        k = int(_require(config, "k", "cluster"))
        out_labels, in_labels = inference.vertex_communities(
            params, k, seed, restarts=restarts
        )
        _write_csv(
            os.path.join(out_dir, "vertex_labels.csv"),
            ["vertex", "out_label", "in_label"],
            list(zip(range(params.n), out_labels.tolist(), in_labels.tolist())),
        )
    else:
        raise UsageError(f"cluster: unknown task {task!r}")
    return EXIT_OK


def cmd_offline_fit(config, out_dir, seed):
    params = model.load_params(_input_path(config, "params", "offline-fit"))
    obs = _load_observations(config, "offline-fit")
    coeffs = inference.offline_coeffs(
        obs, params,
        ridge=float(config.get("ridge", 0.0)),
        max_iters=int(config.get("max_iters", 300)),
    )
    new_params = model.ModelParams(
        out_factors=params.out_factors,
        in_factors=params.in_factors,
        coeffs=coeffs,
        anchors=np.asarray(obs.times, dtype=float),
        kernel=params.kernel,
    )
    loss = model.neg_log_likelihood(new_params, obs)
    _write_json(
        os.path.join(out_dir, "offline_coeffs.json"),
        {
            "coeffs_shape": list(coeffs.shape),
            "coeffs": coeffs.ravel().tolist(),
            "anchors": obs.times.tolist(),
            "kernel": params.kernel.to_dict(),
            "loss": loss,
        },
    )
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "eval": cmd_eval,
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "offline-fit": cmd_offline_fit,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        config = _load_config(args.config)
        os.makedirs(args.out_dir, exist_ok=True)
        return _COMMANDS[args.command](config, args.out_dir, args.seed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # ValueErrors escaping the command body come from interpreting the
        # contents of input files (inconsistent shapes, non-finite values)
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
