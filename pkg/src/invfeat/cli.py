"""``invfeat`` command line.

Exit codes: 0 success, 1 usage or parse error (including missing files and
oracle size limits), 2 bad-set or degenerate input (also out-of-domain
input such as coincident nuclei), 3 numerical failure (NaN loss, failed
property suite).
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, DomainError, NumericalError, ParseError, SizeLimitError

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- run configuration ------------------------------------------------------


@dataclass
class RunConfig:
    """Options shared by config files and flags; flags win over the file."""

    subcommand: str | None = None
    inputs: list = field(default_factory=list)
    identifier: str = "poly"
    m: int | None = None
    seed: int = 0
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)} (allowed: {', '.join(sorted(known))})")
        cfg = cls(**data)
        if base_dir is not None:
            cfg.inputs = [str(base_dir / p) for p in cfg.inputs]
            if cfg.output is not None:
                cfg.output = str(base_dir / cfg.output)
        cfg.validate()
        return cfg

    def validate(self):
        from .nn.train import TrainConfig
        from .reduction import IDENTIFIERS

        if self.identifier not in IDENTIFIERS:
            raise UsageError(f"unknown identifier {self.identifier!r}; choose from {sorted(IDENTIFIERS)}")
        if self.m is not None and (not isinstance(self.m, int) or self.m < 1):
            raise UsageError("m must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise UsageError("seed must be a non-negative integer")
        if not isinstance(self.inputs, list):
            raise UsageError("inputs must be a list of paths")
        for name in ("model", "train", "tolerances"):
            if not isinstance(getattr(self, name), dict):
                raise UsageError(f"{name} must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
        unknown = sorted(set(self.train) - allowed)
        if unknown:
            raise UsageError(f"unknown train keys: {', '.join(unknown)}")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or v < 0:
                raise UsageError(f"tolerance {k} must be a non-negative number")


def load_run_config(path) -> RunConfig:
    from .io import load_json

    path = Path(path)
    return RunConfig.from_dict(load_json(path), path.parent)


def _config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg.subcommand = args.command
    for name in ("identifier", "m", "seed", "output"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "inputs", None):
        cfg.inputs = list(args.inputs)
    for name in ("epochs", "lr", "loss", "batch_size"):
        v = getattr(args, name, None)
        if v is not None:
            cfg.train[name] = v
    cfg.validate()
    return cfg


# -- output helpers ---------------------------------------------------------


def _emit(text: str, output):
    from .io import atomic_write

    if output:
        atomic_write(output, text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- subcommands ------------------------------------------------------------


def cmd_features(args) -> int:
    from .invariants import feature_pack
    from .io import load_cloud, load_matrix
    from .pointcloud import center, tilde_feature_pack
    from .reduction import h_features

    cfg = _config(args)
    if args.kind == "matrix":
        out = feature_pack(load_matrix(args.path)).to_json()
    elif args.kind == "cloud":
        V = load_cloud(args.path)
        out = tilde_feature_pack(center(V) if args.center else V).to_json()
    else:
        V = load_cloud(args.path)
        if args.center:
            V = center(V)
        out = h_features(V, cfg.identifier, cfg.m, cfg.seed).to_json()
        out.update({"identifier": cfg.identifier, "m": cfg.m if cfg.m is not None else 2 * V.shape[0] + 1,
                    "seed": cfg.seed})
    _emit(_json(out), cfg.output)
    return EXIT_OK


_CHECK_ARGS = {"n": ("sizes", "n"), "trials": ("trials",), "d": ("d",), "m": ("m",)}


def cmd_check(args) -> int:
    from .checks import SUITES

    cfg = _config(args)
    fn = SUITES[args.mode]
    params = inspect.signature(fn).parameters
    kwargs = {}
    if "seed" in params:
        kwargs["seed"] = cfg.seed
    for flag, names in _CHECK_ARGS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        target = next((nm for nm in names if nm in params), None)
        if target is None:
            raise UsageError(f"--{flag} does not apply to check {args.mode}")
        if target == "sizes":
            value = tuple(value)
        elif target == "n":
            if len(value) != 1:
                raise UsageError(f"check {args.mode} takes a single --n")
            value = value[0]
        kwargs[target] = value
    for k, v in cfg.tolerances.items():
        if k not in params:
            raise UsageError(f"tolerance {k!r} does not apply to check {args.mode}")
        kwargs[k] = float(v)
    report = fn(**kwargs)
    text = report.to_csv() if args.format == "csv" else _json(report.to_json())
    _emit(text, cfg.output)
    for r in report.rows:
        status = "ok" if r.failed == 0 and r.passed > 0 else "FAIL"
        print(f"{status} {report.mode} {r.name}: {r.passed} passed, {r.failed} failed, "
              f"worst {r.worst:.3e} ({'<=' if r.kind == 'max' else '>'} {r.threshold:g})", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def _construct(cls, kwargs):
    allowed = set(inspect.signature(cls).parameters)
    unknown = sorted(set(kwargs) - allowed)
    if unknown:
        raise UsageError(f"unknown {cls.kind} model keys: {', '.join(unknown)} (allowed: {', '.join(sorted(allowed))})")
    return cls(**kwargs)


def _load_dataset(manifest, model=None, model_config=None, identifier="poly", seed=0):
    """Returns ``(model, batch, targets, describe)``; ``describe(k)`` labels example ``k``."""
    from .io import load_json, load_matrix_manifest, load_pair_manifest
    from .nn.models import DSCI, OIDS, PairBatch, PairDistanceModel

    data = load_json(manifest)
    if not isinstance(data, dict):
        raise ParseError("manifest must be a JSON object", None, manifest)
    if "matrices" in data:
        mats, targets = load_matrix_manifest(manifest)
        if model is None:
            kw = dict(model_config or {})
            kw.setdefault("seed", seed)
            model = _construct(DSCI, {k: v for k, v in kw.items() if k != "arch"})
        if not isinstance(model, DSCI):
            raise UsageError("matrix manifests need a ds-ci model")
        return model, model.featurize(mats), targets, (lambda k: [k])
    if "clouds" in data and "pairs" in data:
        ds = load_pair_manifest(manifest)
        if model is None:
            kw = dict(model_config or {})
            kw.setdefault("seed", seed)
            kw.setdefault("identifier", identifier)
            kw.setdefault("d", int(ds.clouds[0].shape[0]))
            kw.setdefault("out_dim", 16)
            kw.pop("arch", None)
            model = PairDistanceModel(_construct(OIDS, kw), seed=kw["seed"])
        if not isinstance(model, PairDistanceModel):
            raise UsageError("pair manifests need a pair-distance model")
        batch = PairBatch(model.featurize(ds.clouds), ds.pairs)
        return model, batch, ds.targets, (lambda k: [k, int(ds.pairs[k, 0]), int(ds.pairs[k, 1])])
    raise ParseError("manifest needs 'matrices' or 'clouds' and 'pairs'", None, manifest)


def cmd_train(args) -> int:
    from .io import atomic_write
    from .nn.checkpoint import save_checkpoint
    from .nn.train import TrainConfig, evaluate, spearman, train

    cfg = _config(args)
    if len(cfg.inputs) != 1:
        raise UsageError("train needs exactly one manifest")
    if not cfg.output:
        raise UsageError("train needs an output checkpoint path (--output)")
    model, batch, targets, _ = _load_dataset(cfg.inputs[0], model_config=cfg.model,
                                             identifier=cfg.identifier, seed=cfg.seed)
    if targets is None:
        raise UsageError("training manifest has no targets")
    tc = TrainConfig(seed=cfg.seed, **cfg.train)
    res = train(model, batch, targets, tc)
    extra = {
        "loss": tc.loss,
        "best_epoch": res.best_epoch,
        "train_loss": res.best_train,
        "val_loss": res.best_val,
        "train_idx": res.train_idx.tolist(),
        "val_idx": res.val_idx.tolist(),
        "test_idx": res.test_idx.tolist(),
        "train_config": dataclasses.asdict(tc),
    }
    if len(res.test_idx):
        test = batch.take(res.test_idx)
        extra["test_loss"] = evaluate(model, test, targets[res.test_idx], tc.loss)
        extra["test_spearman"] = spearman(model.predict(test), targets[res.test_idx])
    save_checkpoint(cfg.output, model, extra)
    trace = args.trace or str(Path(cfg.output).with_suffix("")) + ".trace.csv"
    lines = ["epoch,train,val"] + [f"{r['epoch']},{_fmt(r['train'])},{_fmt(r['val'])}" for r in res.trace]
    atomic_write(trace, "\n".join(lines) + "\n")
    print(f"best epoch {res.best_epoch}: train {res.best_train:.6g}, val {res.best_val:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .nn.checkpoint import load_checkpoint

    cfg = _config(args)
    if len(cfg.inputs) != 1:
        raise UsageError("predict needs exactly one manifest")
    model, _ = load_checkpoint(args.checkpoint)
    model, batch, targets, describe = _load_dataset(cfg.inputs[0], model=model)
    pred = np.asarray(model.predict(batch)).reshape(len(batch), -1)
    pairs = hasattr(batch, "pairs")
    head = (["index", "i", "j"] if pairs else ["index"]) + [
        "prediction" if pred.shape[1] == 1 else f"prediction{k}" for k in range(pred.shape[1])
    ]
    if targets is not None:
        head.append("target")
    lines = [",".join(head)]
    for k in range(len(batch)):
        row = [str(v) for v in describe(k)] + [_fmt(v) for v in pred[k]]
        if targets is not None:
            row.append(_fmt(targets[k]))
        lines.append(",".join(row))
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench_h_features, loglog_slope

    cfg = _config(args)
    rows = bench_h_features(args.sizes, args.d, args.repeats, cfg.seed, cfg.identifier, cfg.m)
    lines = ["n,d,seconds"] + [f"{r['n']},{r['d']},{_fmt(r['seconds'])}" for r in rows]
    _emit("\n".join(lines) + "\n", cfg.output)
    if len(rows) >= 2:
        print(f"log-log slope {loglog_slope(rows):.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_tlb(args) -> int:
    from .io import load_cloud
    from .targets import tlb_distance

    cfg = _config(args)
    _emit(_json({"tlb": tlb_distance(load_cloud(args.cloud_a), load_cloud(args.cloud_b))}), cfg.output)
    return EXIT_OK


def cmd_coulomb(args) -> int:
    from .core import matrix_to_text
    from .io import load_xyz
    from .targets import coulomb_matrix

    cfg = _config(args)
    _emit(matrix_to_text(coulomb_matrix(load_xyz(args.xyz))), cfg.output)
    return EXIT_OK


def cmd_make_synth(args) -> int:
    from .io import save_cloud, save_json, save_matrix
    from .prng import SplitMix64
    from .targets import cross_pair_dataset, shape_cloud, synth_clouds, synth_symmatrices

    cfg = _config(args)
    out = Path(args.out)
    if args.kind == "matrices":
        mats = synth_symmatrices(args.count, args.n, args.family or "uniform", cfg.seed)
        names = [f"m{k:04d}.txt" for k in range(len(mats))]
        for name, X in zip(names, mats):
            save_matrix(out / name, X)
        manifest = {"matrices": names}
        if args.target == "eigmax":
            manifest["targets"] = [float(np.linalg.eigvalsh(X.entries)[-1]) for X in mats]
        save_json(out / "manifest.json", manifest)
    elif args.kind == "clouds":
        clouds = synth_clouds(args.count, args.d, args.n, args.family or "gaussian", cfg.seed)
        names = [f"c{k:04d}.txt" for k in range(len(clouds))]
        for name, V in zip(names, clouds):
            save_cloud(out / name, V)
        save_json(out / "manifest.json", {"clouds": names, "pairs": []})
    else:
        rng = SplitMix64(cfg.seed)
        boxes = [shape_cloud(rng, "box", args.n) for _ in range(args.count)]
        ells = [shape_cloud(rng, "ellipsoid", args.n) for _ in range(args.count)]
        ds = cross_pair_dataset(boxes, ells)
        names = [f"c{k:04d}.txt" for k in range(len(ds.clouds))]
        for name, V in zip(names, ds.clouds):
            save_cloud(out / name, V)
        pairs = [[int(i), int(j), float(t)] for (i, j), t in zip(ds.pairs, ds.targets)]
        save_json(out / "manifest.json", {"clouds": names, "pairs": pairs})
    print(f"wrote {out / 'manifest.json'}", file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, config: bool = True):
    p.add_argument("-o", "--output", help="output path (default: stdout); written atomically")
    p.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    if config:
        p.add_argument("--config", help="RunConfig JSON file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    from .checks import MODES
    from .reduction import IDENTIFIERS

    parser = _Parser(prog="invfeat", description="Invariant features for symmetric matrices and point clouds.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("features", help="feature pack of a matrix, Gram features or h-features of a cloud")
    p.add_argument("kind", choices=("matrix", "cloud", "h"), help="matrix file, cloud (Gram pack) or h")
    p.add_argument("path", help="input file")
    p.add_argument("--identifier", choices=sorted(IDENTIFIERS), help="identifier construction for h")
    p.add_argument("--m", type=int, help="number of projection directions for h (default 2d+1)")
    p.add_argument("--center", action="store_true",
                   help="subtract the centroid first (note: centered clouds are degenerate for h)")
    _common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("check", help="run a property suite and report pass/fail counts")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--n", type=int, nargs="+", help="size(s) for the suite")
    p.add_argument("--d", type=int, help="ambient dimension for cloud suites")
    p.add_argument("--m", type=int, help="projection count for hseparation")
    p.add_argument("--trials", type=int, help="trials per size")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    _common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", help="train DS-CI on a matrix manifest or OI-DS with a GW head on a pair manifest")
    p.add_argument("inputs", nargs="*", help="dataset manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--loss", choices=("mae", "mse"))
    p.add_argument("--batch-size", dest="batch_size", type=int, help="minibatch size (default full batch)")
    p.add_argument("--identifier", choices=sorted(IDENTIFIERS))
    p.add_argument("--trace", help="loss trace CSV (default <output stem>.trace.csv)")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predictions of a checkpoint on a manifest, as CSV")
    p.add_argument("inputs", nargs="*", help="dataset manifest")
    p.add_argument("--checkpoint", required=True, help="checkpoint manifest written by train")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="h-feature wall times over a size ladder, as CSV")
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000])
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--repeats", type=int, default=5, help="best of this many runs per size")
    p.add_argument("--identifier", choices=sorted(IDENTIFIERS))
    p.add_argument("--m", type=int)
    _common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("tlb", help="third lower bound between two equal-size clouds")
    p.add_argument("cloud_a")
    p.add_argument("cloud_b")
    _common(p)
    p.set_defaults(func=cmd_tlb)

    p = sub.add_parser("coulomb", help="Coulomb matrix of an XYZ molecule")
    p.add_argument("xyz")
    _common(p)
    p.set_defaults(func=cmd_coulomb)

    p = sub.add_parser("make-synth", help="write a synthetic dataset and its manifest")
    p.add_argument("kind", choices=("matrices", "clouds", "gw-pairs"),
                   help="matrices, plain clouds, or box/ellipsoid clouds with all cross-pair TLB targets")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=100, help="items (per shape family for gw-pairs)")
    p.add_argument("--n", type=int, default=6, help="matrix size or points per cloud")
    p.add_argument("--d", type=int, default=3, help="cloud dimension")
    p.add_argument("--family", help="generator family (matrices: gaussian|uniform|wishart; "
                                    "clouds: gaussian|two-cluster|shape-mix)")
    p.add_argument("--target", choices=("none", "eigmax"), default="eigmax",
                   help="matrix targets: largest eigenvalue or none")
    _common(p)
    p.set_defaults(func=cmd_make_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"invfeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SizeLimitError as exc:
        print(f"invfeat: error: {exc}; use smaller sizes for oracle-backed checks", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"invfeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateInputError, DomainError) as exc:
        print(f"invfeat: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NumericalError as exc:
        print(f"invfeat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invfeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
