"""Command-line harness: solve, gen-dataset, train, eval, convergence.

Exit codes: 0 success, 1 numeric failure (singular model, diverged
training), 2 usage error.  All artifacts are deterministic for a fixed
seed; figures are rendered next to the delimited outputs unless --no-plot
is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .dataset import (
    GenerationConfig,
    generate_dataset,
    read_jsonl,
    read_manifest,
    write_jsonl,
    write_manifest,
)
from .evaluation import evaluate_surrogate
from .frame import SingularModelError, SolveAccuracyError, assemble_and_solve
from .io import read_frame, write_solution
from .network import NonFiniteGradientError
from .surrogate import SurrogateModel
from .training import SobolevConfig, TrainingConfig, train

REPORT_SCHEMA_VERSION = 1
CURVE_COLUMNS = (
    "order",
    "elems_per_edge",
    "h1_mean",
    "h1_std",
    "rel_h1_mean",
    "rel_h1_std",
    "vem_self_h1",
    "status",
)


def _existing_file(path: str) -> Path:
    candidate = Path(path)
    if not candidate.is_file():
        raise argparse.ArgumentTypeError(f"file not found: {path}")
    return candidate


def _existing_path(path: str) -> Path:
    candidate = Path(path)
    if not candidate.exists():
        raise argparse.ArgumentTypeError(f"path not found: {path}")
    return candidate


def _load_generation_config(path: Path | None) -> GenerationConfig:
    if path is None:
        return GenerationConfig()
    return GenerationConfig.from_dict(json.loads(path.read_text()))


def _load_training_config(path: Path) -> tuple[TrainingConfig, SobolevConfig]:
    data = json.loads(path.read_text())
    sobolev = data.pop("sobolev", None)
    config = TrainingConfig.from_dict(data)
    return config, (SobolevConfig.from_dict(sobolev) if sobolev else SobolevConfig(seed=config.seed))


def _resolve_dataset(path: Path, split: str) -> tuple[Path, Path]:
    """Return (records file, manifest file) for a directory or a jsonl path."""
    if path.is_dir():
        return path / f"{split}.jsonl", path / "manifest.json"
    return path, path.parent / "manifest.json"


def _write_history_csv(history, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "L1", "L2", "L3", "theta1", "theta2", "theta3", "G1", "G2", "G3"])
        for row in history:
            writer.writerow([row.epoch, *row.losses, *row.weights, *row.gradient_norms])


def cmd_solve(args) -> int:
    model = read_frame(args.model_file, order=args.order, n_elements=args.elems_per_edge)
    solution = assemble_and_solve(model)
    write_solution(solution, args.out)
    print(f"solved {solution.mesh.n_dofs} DOFs, residual {solution.residual_norm:.3e} -> {args.out}")
    return 0


def cmd_gen_dataset(args) -> int:
    config = _load_generation_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_records, test_records, manifest = generate_dataset(
        config, n_train=args.n_train, n_test=args.n_test, seed=args.seed
    )
    write_jsonl(train_records, out_dir / "train.jsonl")
    write_jsonl(test_records, out_dir / "test.jsonl")
    manifest["train_file"] = "train.jsonl"
    manifest["test_file"] = "test.jsonl"
    write_manifest(manifest, out_dir / "manifest.json")
    print(
        f"wrote {len(train_records)} train and {len(test_records)} test records "
        f"({manifest['rejected_samples']} rejected draws) -> {out_dir}"
    )
    return 0


def cmd_train(args) -> int:
    records_file, _ = _resolve_dataset(args.dataset, "train")
    if not records_file.is_file():
        print(f"error: dataset file not found: {records_file}", file=sys.stderr)
        return 2
    records = read_jsonl(records_file)
    if args.config is None:
        config, sobolev = TrainingConfig(), None
    else:
        config, sobolev = _load_training_config(args.config)
    result = train(records, config, sobolev)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    history_path = Path(args.history) if args.history else out.with_name(out.stem + "_history.csv")
    _write_history_csv(result.history, history_path)
    if not args.no_plot:
        from .plots import save_history_figure

        save_history_figure(result.history, out.with_name(out.stem + "_history.png"))
    if result.status != "completed":
        print(f"error: training stopped early: {result.status}", file=sys.stderr)
        return 1
    first = sum(w * l for w, l in zip(result.history[0].weights, result.history[0].losses))
    last = sum(w * l for w, l in zip(result.history[-1].weights, result.history[-1].losses))
    print(f"trained {len(result.history)} epochs, total loss {first:.3e} -> {last:.3e}; model -> {out}")
    return 0


def cmd_eval(args) -> int:
    model = SurrogateModel.load(args.model)
    records_file, manifest_file = _resolve_dataset(args.dataset, "test")
    if not records_file.is_file() or not manifest_file.is_file():
        print(f"error: dataset files not found near {args.dataset}", file=sys.stderr)
        return 2
    manifest = read_manifest(manifest_file)
    config = GenerationConfig.from_dict(manifest["config"])
    model_mesh = model.config.get("mesh", {})
    dataset_mesh = {"elems_per_edge": config.elems_per_edge, "order": config.order}
    if model_mesh != dataset_mesh:
        print(
            f"error: model mesh {model_mesh} does not match dataset mesh {dataset_mesh}",
            file=sys.stderr,
        )
        return 2
    records = read_jsonl(records_file)
    started = time.perf_counter()
    report = evaluate_surrogate(model, config, records)
    elapsed = time.perf_counter() - started
    payload = {"schema_version": REPORT_SCHEMA_VERSION, "mesh": dataset_mesh, **report.to_dict()}
    Path(args.report).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"evaluation took {elapsed:.2f}s", file=sys.stderr)
    print(
        f"H1 mean {report.h1_mean:.4e} (std {report.h1_std:.4e}), "
        f"relative mean {report.relative_h1_mean:.4f} -> {args.report}"
    )
    return 0


def _convergence_row(order, elems, args, gen_config) -> dict:
    from .fields import VemDisplacementField, h1_error

    config = GenerationConfig.from_dict({**gen_config.to_dict(), "elems_per_edge": elems, "order": order})
    seed = int(np.random.SeedSequence([args.seed, order, elems]).generate_state(1)[0] % 2**31)
    workdir = Path(args.workdir) / f"order{order}_elems{elems}"
    workdir.mkdir(parents=True, exist_ok=True)
    train_records, test_records, manifest = generate_dataset(
        config, n_train=args.n_train, n_test=args.n_test, seed=seed
    )
    write_jsonl(train_records, workdir / "train.jsonl")
    write_jsonl(test_records, workdir / "test.jsonl")
    write_manifest(manifest, workdir / "manifest.json")
    if args.train_config is None:
        training, sobolev = TrainingConfig(seed=seed), SobolevConfig(seed=seed)
    else:
        training, sobolev = _load_training_config(args.train_config)
        training = TrainingConfig.from_dict({**training.to_dict(), "seed": seed})
        sobolev = SobolevConfig.from_dict({**sobolev.to_dict(), "seed": seed})
    result = train(train_records, training, sobolev)
    result.model.save(workdir / "model.json")
    _write_history_csv(result.history, workdir / "history.csv")
    if result.status != "completed":
        raise NonFiniteGradientError(f"training stopped early: {result.status}")
    report = evaluate_surrogate(result.model, config, test_records)
    # self-consistency: the reference against itself must be exactly zero
    from .dataset import solve_sample

    mesh, solution = solve_sample(config, test_records[0].material)
    self_report = h1_error(VemDisplacementField(solution), VemDisplacementField(solution), mesh)
    return {
        "order": order,
        "elems_per_edge": elems,
        "h1_mean": report.h1_mean,
        "h1_std": report.h1_std,
        "rel_h1_mean": report.relative_h1_mean,
        "rel_h1_std": report.relative_h1_std,
        "vem_self_h1": self_report.h1_error,
        "status": "ok",
    }


def cmd_convergence(args) -> int:
    orders = [int(v) for v in str(args.orders).split(",") if v]
    elem_counts = [int(v) for v in str(args.elems).split(",") if v]
    gen_config = _load_generation_config(args.config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.workdir is None:
        args.workdir = out.parent / (out.stem + "_work")
    rows = []
    for order in orders:
        for elems in elem_counts:
            try:
                row = _convergence_row(order, elems, args, gen_config)
            except Exception as exc:  # record the failure, keep sweeping
                row = {
                    "order": order,
                    "elems_per_edge": elems,
                    "h1_mean": "",
                    "h1_std": "",
                    "rel_h1_mean": "",
                    "rel_h1_std": "",
                    "vem_self_h1": "",
                    "status": f"failed: {exc}",
                }
                print(f"warning: order {order}, {elems} elems failed: {exc}", file=sys.stderr)
            rows.append(row)
            print(f"order {order}, {elems} elems/edge: {row['status']}", file=sys.stderr)
    with open(out, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=CURVE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    if not args.no_plot:
        good = [row for row in rows if row["status"] == "ok"]
        if good:
            from .plots import save_convergence_figure

            save_convergence_figure(good, out.with_suffix(".png"))
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vembeam",
        description="Virtual beam elements, frame solves and a neural displacement surrogate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a frame description")
    solve.add_argument("--model-file", type=_existing_file, required=True, help="frame JSON")
    solve.add_argument("--order", type=int, default=None, help="override element order")
    solve.add_argument("--elems-per-edge", type=int, default=None, help="override subdivision")
    solve.add_argument("--out", required=True, help="solution JSON path")
    solve.set_defaults(handler=cmd_solve)

    gen = sub.add_parser("gen-dataset", help="generate train/test datasets from solves")
    gen.add_argument("config", nargs="?", type=_existing_file, default=None, help="generation config JSON")
    gen.add_argument("--n-train", type=int, default=80)
    gen.add_argument("--n-test", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(handler=cmd_gen_dataset)

    train_cmd = sub.add_parser("train", help="train the surrogate on a dataset")
    train_cmd.add_argument("--dataset", type=_existing_path, required=True, help="dataset dir or train.jsonl")
    train_cmd.add_argument("--config", type=_existing_file, default=None, help="training config JSON")
    train_cmd.add_argument("--out", required=True, help="model JSON path")
    train_cmd.add_argument("--history", default=None, help="history CSV path")
    train_cmd.add_argument("--no-plot", action="store_true")
    train_cmd.set_defaults(handler=cmd_train)

    eval_cmd = sub.add_parser("eval", help="H1 evaluation of a model on a test dataset")
    eval_cmd.add_argument("--model", type=_existing_file, required=True)
    eval_cmd.add_argument("--dataset", type=_existing_path, required=True, help="dataset dir or test.jsonl")
    eval_cmd.add_argument("--report", required=True, help="report JSON path")
    eval_cmd.set_defaults(handler=cmd_eval)

    conv = sub.add_parser("convergence", help="order/mesh sweep: generate, train, evaluate")
    conv.add_argument("--orders", default="4,5")
    conv.add_argument("--elems", default="24,48,96,192,384")
    conv.add_argument("--config", type=_existing_file, default=None, help="generation config JSON")
    conv.add_argument("--train-config", type=_existing_file, default=None)
    conv.add_argument("--n-train", type=int, default=80)
    conv.add_argument("--n-test", type=int, default=20)
    conv.add_argument("--seed", type=int, default=0)
    conv.add_argument("--workdir", default=None, help="directory for per-row artifacts")
    conv.add_argument("--out", required=True, help="curves CSV path")
    conv.add_argument("--no-plot", action="store_true")
    conv.set_defaults(handler=cmd_convergence)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (SingularModelError, SolveAccuracyError, NonFiniteGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
