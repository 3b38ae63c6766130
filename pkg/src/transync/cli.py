"""Command-line front end.

``transync sync``        synchronise a pairwise transform set stored as JSON
``transync gpa``         align a directory of landmark shapes
``transync experiment``  run a simulation protocol from a JSON config
``transync gen``         write random transform sets or shape sets

Exit status is 0 on success, 2 for bad input or configuration, 3 for a
degenerate numerical result and 4 when an alignment is infeasible.  All
outputs are first written to a staging directory next to the target and
moved into place only after the command has succeeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from transync.errors import (
    ContractError,
    DegenerateCloudError,
    DegenerateSolutionError,
    InfeasibleDrawError,
    SingularTransformError,
    UnderdeterminedError,
)
from transync.procrustes import (
    GpaMethod,
    gpa_iterative_mean,
    gpa_reference,
    gpa_sync,
    read_shape_set,
    write_shape_set,
)
from transync.simulate.experiments import format_result_table, parse_config, run_experiment
from transync.simulate.generate import add_gaussian_noise, drop_points, gen_ground_truth, gen_shapes
from transync.sync import (
    consistency_residual,
    pairwise_set_to_dict,
    read_pairwise_set,
    reconstruct_pairwise,
    sync_result_to_dict,
    synchronise,
)
from transync.transform import ScaleMode, TransformClass, transform_to_dict

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_INFEASIBLE = 4
DEFAULT_SEED = 0

log = logging.getLogger("transync")


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- staged output -----------------------------------------------------------


class Stage:
    """Collects output files in a temporary directory and publishes them together."""

    def __init__(self, root: Path):
        self.dir = Path(tempfile.mkdtemp(prefix=".transync-", dir=root))
        self._moves: list[tuple[Path, Path]] = []

    def file(self, target: Path) -> Path:
        tmp = self.dir / f"{len(self._moves)}_{target.name}"
        self._moves.append((tmp, target))
        return tmp

    def write_text(self, target: Path, text: str) -> None:
        self.file(target).write_text(text, encoding="utf-8")

    def commit(self) -> None:
        for tmp, target in self._moves:
            if target.is_dir() and not tmp.is_dir():
                raise CliFailure(f"{target} is a directory", EXIT_INPUT)
            if tmp.is_dir() and target.exists():
                shutil.rmtree(target) if target.is_dir() else target.unlink()
            os.replace(tmp, target)


@contextmanager
def staged(root: Path) -> Iterator[Stage]:
    stage = Stage(root)
    try:
        yield stage
        stage.commit()
    finally:
        shutil.rmtree(stage.dir, ignore_errors=True)


def _output_parent(path: Path) -> Path:
    parent = path.resolve().parent
    if not parent.is_dir():
        raise CliFailure(f"output directory {parent} does not exist", EXIT_INPUT)
    if not os.access(parent, os.W_OK):
        raise CliFailure(f"output directory {parent} is not writable", EXIT_INPUT)
    return parent


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# -- commands ----------------------------------------------------------------


def cmd_sync(args) -> int:
    out = Path(args.out)
    pairwise_out = Path(args.pairwise_out) if args.pairwise_out else out.with_name(out.stem + ".pairwise.json")
    root = _output_parent(out)
    _output_parent(pairwise_out)
    try:
        s = read_pairwise_set(args.input)
    except json.JSONDecodeError as exc:
        raise CliFailure(f"{args.input}: invalid JSON ({exc})", EXIT_INPUT) from exc
    cls = TransformClass(args.cls) if args.cls else s.cls
    if cls.kind is not s.kind:
        raise CliFailure(f"class {cls.value} does not match {s.kind.value} input", EXIT_INPUT)
    before = consistency_residual(s)
    result = synchronise(s, cls, ScaleMode(args.scale))
    if result.degenerate:
        tail = " ".join(_fmt(v) for v in result.tail_singular_values)
        raise CliFailure(f"degenerate null space, tail singular values {tail}", EXIT_DEGENERATE)
    consistent = reconstruct_pairwise(result)
    after = consistency_residual(consistent)
    with staged(root) as stage:
        stage.write_text(out, _dumps(sync_result_to_dict(result)))
        stage.write_text(pairwise_out, _dumps(pairwise_set_to_dict(consistent)))
    print(f"residual_before {_fmt(before)}")
    print(f"residual_after {_fmt(after)}")
    print("tail_singular_values " + " ".join(_fmt(v) for v in result.tail_singular_values))
    print(f"gauge_block {result.gauge_block}")
    return EXIT_OK


def _run_gpa(method: GpaMethod, shapes, cls, scale_mode, seed):
    if method is GpaMethod.REFERENCE:
        return gpa_reference(shapes, 0, cls)
    if method is GpaMethod.ITERATIVE_MEAN:
        return gpa_iterative_mean(shapes, cls, rng=np.random.default_rng(seed), init=0)
    return gpa_sync(shapes, cls, scale_mode)


def cmd_gpa(args) -> int:
    out = Path(args.out)
    root = _output_parent(out)
    cls = TransformClass(args.cls)
    if not cls.is_projected:
        raise CliFailure("GPA needs class similarity, euclidean or rigid", EXIT_INPUT)
    shapes = read_shape_set(args.shape_dir)
    if len(shapes) < 2:
        raise CliFailure("GPA needs at least two shapes", EXIT_INPUT)
    methods = [GpaMethod(m) for m in dict.fromkeys(args.method or ["sync"])]
    outcomes = [_run_gpa(m, shapes, cls, ScaleMode(args.scale), args.seed) for m in methods]
    names = json.loads((Path(args.shape_dir) / "manifest.json").read_text(encoding="utf-8"))["files"]
    with staged(root) as stage:
        result_dir = stage.file(out)
        result_dir.mkdir()
        summary = []
        for o in outcomes:
            sub = result_dir / o.method.value
            write_shape_set(o.aligned, sub, [Path(n).name for n in names])
            (sub / "transforms.json").write_text(
                _dumps({"class": cls.value, "transforms": [transform_to_dict(t) for t in o.transforms]}),
                encoding="utf-8",
            )
            summary.append({"method": o.method.value, "shape_error": o.error, "iterations": o.iterations,
                            "converged": o.converged})
        (result_dir / "summary.json").write_text(_dumps(summary), encoding="utf-8")
    for o in outcomes:
        print(f"method={o.method.value} shape_error={_fmt(o.error)} iterations={o.iterations}")
    return EXIT_OK


def _load_config(path: str, seed: int | None, trials: int | None) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CliFailure(f"cannot read config: {exc}", EXIT_INPUT) from exc
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CliFailure(f"{path}: invalid JSON ({exc})", EXIT_INPUT) from exc
    if not isinstance(obj, dict):
        raise CliFailure(f"{path}: configuration must be a JSON object", EXIT_INPUT)
    if seed is not None:
        obj["seed"] = seed
    if trials is not None:
        if isinstance(obj.get("trials"), dict):
            obj["trials"] = {**obj["trials"], "ground_truths": trials}
        else:
            obj["trials"] = trials
    digest = hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()
    return obj, digest


def cmd_experiment(args) -> int:
    out = Path(args.out)
    meta_out = out.with_name(out.stem + ".meta.json")
    root = _output_parent(out)
    obj, digest = _load_config(args.config, args.seed, args.trials)
    config = parse_config(obj)
    start = time.perf_counter()
    rows = run_experiment(config)
    wall = time.perf_counter() - start
    meta = {"seed": config.seed, "config_sha256": digest, "wall_time_s": wall, "rows": len(rows)}
    with staged(root) as stage:
        stage.write_text(out, format_result_table(rows))
        stage.write_text(meta_out, _dumps(meta))
    log.info("%d rows in %.2f s", len(rows), wall)
    return EXIT_OK


def cmd_gen(args) -> int:
    out = Path(args.out)
    root = _output_parent(out)
    seed = args.seed
    rng = np.random.default_rng(seed)
    if args.what == "transforms":
        if args.sigma < 0:
            raise CliFailure("--sigma must be >= 0", EXIT_INPUT)
        truth = gen_ground_truth(args.k, args.d, TransformClass(args.cls), rng)
        s = add_gaussian_noise(truth.pairwise, args.sigma, rng)
        with staged(root) as stage:
            stage.write_text(out, _dumps(pairwise_set_to_dict(s)))
            if args.truth_out:
                truth_doc = {"class": truth.cls.value, "absolute": [transform_to_dict(t) for t in truth.absolute]}
                stage.write_text(Path(args.truth_out), _dumps(truth_doc))
    else:
        shapes = gen_shapes(args.shapes, args.n, args.d, args.deform_level, args.noise_level, rng)
        if args.eta:
            shapes = drop_points(shapes, args.eta, rng)
        with staged(root) as stage:
            target = stage.file(out)
            write_shape_set(shapes, target)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    classes = [c.value for c in TransformClass]
    p = argparse.ArgumentParser(prog="transync", description="Transformation synchronisation and GPA.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scale", choices=[m.value for m in ScaleMode], default="geometric")
    common.add_argument("--out", required=True)

    s = sub.add_parser("sync", parents=[common], help="synchronise a pairwise transform set")
    s.add_argument("input")
    s.add_argument("--class", dest="cls", choices=classes, help="defaults to the class stored in the input")
    s.add_argument("--pairwise-out", help="consistent pairwise set (default: <out>.pairwise.json)")
    s.set_defaults(func=cmd_sync)

    g = sub.add_parser("gpa", parents=[common], help="align a directory of shapes")
    g.add_argument("shape_dir")
    g.add_argument("--class", dest="cls", choices=classes, default="similarity")
    g.add_argument("--method", action="append", choices=[m.value for m in GpaMethod])
    g.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    g.set_defaults(func=cmd_gpa)

    e = sub.add_parser("experiment", help="run a simulation protocol")
    e.add_argument("config")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=_seed, help="overrides the config seed")
    e.add_argument("--trials", type=_positive, help="overrides the config trial count")
    e.set_defaults(func=cmd_experiment)

    gen = sub.add_parser("gen", help="write random fixtures")
    gen.add_argument("what", choices=["transforms", "shapes"])
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    gen.add_argument("--class", dest="cls", choices=classes, default="similarity")
    gen.add_argument("--k", type=_positive, default=5, help="objects in a transform set")
    gen.add_argument("--d", type=_positive, default=2)
    gen.add_argument("--sigma", type=float, default=0.0, help="additive noise on pairwise entries")
    gen.add_argument("--truth-out", help="also write the absolute ground truth here")
    gen.add_argument("--shapes", "--K", dest="shapes", type=_positive, default=10)
    gen.add_argument("--n", type=_positive, default=98)
    gen.add_argument("--deform-level", type=float, default=3.0)
    gen.add_argument("--noise-level", type=float, default=3.0)
    gen.add_argument("--eta", type=float, default=0.0, help="probability of dropping a landmark")
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except UnderdeterminedError as exc:
        print(f"error: under-determined alignment: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DegenerateCloudError, InfeasibleDrawError) as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DegenerateSolutionError, SingularTransformError) as exc:
        print(f"error: degenerate result: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
