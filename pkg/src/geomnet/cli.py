"""Command-line interface: ``geomnet <command> ...``.

Artifact-producing commands write a ``*.manifest.json`` next to their outputs
recording the command, every flag, the tool version and sha256 digests of
inputs and outputs. Nothing time-dependent goes into artifacts, so rerunning
a command with the same manifest reproduces its files byte for byte.
"""
import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from geomnet import __version__, counting, numerics
from geomnet import serialization as ser
from geomnet.filter_bank import FilterError, enumerate_invariant_filters
from geomnet.ginet import build_model, predict
from geomnet.ginet.autodiff import per_sample_rmse
from geomnet.ginet.layers import NetError
from geomnet.ginet.net import REFERENCE_PARAM_COUNTS, PRESETS, preset
from geomnet.ginet.train import TrainConfig, TrainingDiverged, TrainingError, split_rmse, train
from geomnet.image_algebra import GeometricImage, act_image, translate
from geomnet.physics_sim import PhysicsError, gen_charges, gen_gravity, stack_pairs
from geomnet.symmetry import generate_bd

EQUIVARIANCE_TOL = 1e-8
DEFAULT_SPLITS = {"gravity": (10, 5, 10), "charge": (10, 10, 10)}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _emit(args, payload, text):
    if args.json:
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def _flags(args):
    skip = {"func", "json", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(path, command, args, inputs=(), outputs=()):
    manifest = {
        "schema_version": ser.SCHEMA_VERSION,
        "command": command,
        "flags": _flags(args),
        "tool_version": __version__,
        "inputs": {str(p): ser.sha256_file(p) for p in inputs},
        "outputs": {str(p): ser.sha256_file(p) for p in outputs},
    }
    ser.write_json(path, manifest)
    return manifest


def _manifest_path(out):
    out = Path(out)
    return out / "manifest.json" if out.suffix == "" else out.with_name(out.name + ".manifest.json")


def _load_spec(ref):
    """A preset name, a spec JSON file, or a model file holding a spec."""
    if ref in PRESETS:
        return preset(ref)
    obj = ser.read_json(ref)
    return obj["spec"] if obj.get("kind") == "model" else obj


def _apply_threads(n):
    if n is None:
        env = os.environ.get("GEOMNET_THREADS")
        n = int(env) if env else None
    if n is None:
        return None
    if n < 1:
        raise CliError("--threads must be >= 1")
    return threadpool_limits(limits=n)


def _parse_parity(text):
    value = int(text)
    if value not in (1, -1):
        raise argparse.ArgumentTypeError("parity must be +1 or -1")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# ---------------------------------------------------------------------------
# commands


def cmd_filters(args):
    bank = enumerate_invariant_filters(args.M, args.d, args.k, args.parity)
    payload = {"M": args.M, "d": args.d, "k": args.k, "parity": args.parity, "count": len(bank)}
    if args.out:
        out = ser.write_json(args.out, ser.bank_to_json(bank))
        write_manifest(_manifest_path(out), "filters", args, outputs=[out])
    _emit(args, payload, f"invariant {args.k}({args.parity:+d}) filters, d={args.d}, M={args.M}: count {len(bank)}")
    return 0


def cmd_count(args):
    budget = {}
    if args.mode in ("empirical", "all") and args.degree > 0:
        budget = {"probe_count": args.probes, "max_candidates": args.max_candidates, "time_limit": args.time_limit}
    report = counting.count_report(args.N, args.degree, args.mode, args.seed, **budget)
    detail = report.get("empirical_detail", {})
    partial = report["partial"]
    report["schema_version"] = ser.SCHEMA_VERSION
    if args.out:
        out = ser.write_json(args.out, _stable_count_report(report))
        write_manifest(_manifest_path(out), "count", args, outputs=[out])
    lines = [f"N={args.N} degree={args.degree}"]
    for key in ("closed_form", "molien", "empirical"):
        if key in report:
            lines.append(f"  {key}: {report[key]}")
    if partial:
        lines.append(f"  empirical search stopped by budget: found {report['empirical']}/{detail['target']}")
    lines.append("  consistent" if report["consistent"] else "  MISMATCH")
    _emit(args, report, "\n".join(lines))
    return 0 if report["consistent"] else 1


def _stable_count_report(report):
    out = json.loads(json.dumps(report))
    out.get("empirical_detail", {}).pop("elapsed_s", None)
    return out


def _random_image(rng, N, d, key):
    k, p = key
    return GeometricImage(rng.standard_normal((N,) * d + (d,) * k), p, d)


def equivariance_violation(model, theta, N, trials, seed, n_translations=5):
    """Max relative violation of f(g.A) = g.f(A) over B_d, random translations and inputs."""
    rng = numerics.prng(seed, 7)
    d = model.d
    worst = 0.0
    for _ in range(trials):
        A = _random_image(rng, N, d, model.input_spec)
        ops = [lambda X, g=g: act_image(g, X) for g in generate_bd(d)]
        for _ in range(n_translations):
            tau = tuple(int(t) for t in rng.integers(0, N, size=d))
            ops.append(lambda X, tau=tau: translate(X, tau))
        xs = np.stack([A.pixels()] + [op(A).pixels() for op in ops])
        out = predict(model, theta, xs)
        k, p = model.output_spec
        f0 = GeometricImage.from_flat(out[0], N, d, k, p)
        scale = max(float(np.max(np.abs(out))), 1e-300)
        for i, op in enumerate(ops):
            if not np.any(out):
                continue
            worst = max(worst, float(np.max(np.abs(op(f0).pixels() - out[i + 1]))) / scale)
    return worst


def cmd_check_equivariance(args):
    model = build_model(_load_spec(args.net))
    if args.params == "random":
        theta = numerics.prng(args.seed, 3).normal(0.0, 0.1, model.n_params)
    elif args.params == "zero":
        theta = np.zeros(model.n_params)
    else:
        obj = ser.read_json(args.params)
        theta = np.asarray(obj["params"], dtype=np.float64)
        if theta.size != model.n_params:
            raise CliError(f"params file has {theta.size} values, model needs {model.n_params}")
    if args.N % 2 == 0:
        raise CliError("equivariance checks need odd N so that B_d acts on the pixel grid")
    viol = equivariance_violation(model, theta, args.N, args.trials, args.seed)
    passed = viol <= EQUIVARIANCE_TOL
    payload = {"net": args.net, "N": args.N, "trials": args.trials, "max_violation": viol,
               "tolerance": EQUIVARIANCE_TOL, "pass": passed}
    _emit(args, payload, f"max relative violation {viol:.3e} (tol {EQUIVARIANCE_TOL:g}): {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def _generate(problem, seed, count, start, args):
    if problem == "gravity":
        return gen_gravity(seed, count, N=args.N, n_masses=args.particles, start=start)
    return gen_charges(seed, count, steps_T=args.steps, dt=args.dt, N=args.N, n_charges=args.particles,
                       squash_scale=args.squash, start=start)


def cmd_gen_data(args):
    if args.dt <= 0:
        raise CliError("--dt must be positive")
    if args.squash <= 0:
        raise CliError("--squash must be positive")
    if args.steps < 1:
        raise CliError("--steps must be >= 1")
    out_dir = Path(args.out)
    n_train, n_val, n_test = args.train, args.val, args.test
    # test first, then validation, then training: growing the training set
    # leaves the held-out splits unchanged
    layout = [("test", 0, n_test), ("val", n_test, n_val), ("train", n_test + n_val, n_train)]
    outputs = []
    for split, start, count in layout:
        if count == 0:
            continue
        pairs = _generate(args.problem, args.seed, count, start, args)
        outputs.append(ser.write_json(out_dir / f"{split}.json", ser.dataset_to_json(pairs, args.problem, split)))
    write_manifest(out_dir / "manifest.json", "gen-data", args, outputs=outputs)
    total = n_train + n_val + n_test
    _emit(args, {"problem": args.problem, "samples": total, "files": [str(p) for p in outputs]},
          f"wrote {total} {args.problem} samples to {out_dir}")
    return 0


def _load_split(data, split):
    path = Path(data)
    if path.is_dir():
        path = path / f"{split}.json"
    return path, ser.dataset_arrays(ser.read_json(path))


def _model_ref(problem, model):
    if model == "ginet":
        return problem
    if model == "baseline":
        return f"{problem}_baseline"
    return model


def _train_config(args):
    cfg = ser.read_json(args.config) if args.config else {}
    cfg = {k: v for k, v in cfg.items() if k != "schema_version"}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.max_epochs is not None:
        cfg["max_epochs"] = args.max_epochs
    return TrainConfig.from_dict(cfg)


def _json_safe(obj):
    """Plain JSON values; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else repr(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def cmd_train(args):
    spec = _load_spec(_model_ref(args.problem, args.model))
    if args.boundary:
        spec["boundary"] = args.boundary
    model = build_model(spec)
    cfg = _train_config(args)
    tr_path, tr = _load_split(args.data, "train")
    va_path, va = _load_split(args.data, "val")
    out_dir = Path(args.out)
    try:
        result = train(model, tr, va, cfg)
    except TrainingDiverged as exc:
        dump = _json_safe(dict(exc.state))
        ser.write_json(out_dir / "divergence_dump.json", {"schema_version": ser.SCHEMA_VERSION, "error": str(exc),
                                                          "config": cfg.to_dict(), **dump})
        raise CliError(f"training diverged: {exc}; state written to {out_dir / 'divergence_dump.json'}") from exc
    extra = {"config": cfg.to_dict(), "best_epoch": result.best_epoch, "stop_reason": result.stop_reason,
             "n_params": model.n_params}
    model_path = ser.write_json(out_dir / "model.json", ser.params_to_json(result.params, model.spec, extra))
    csv_path = ser.write_text(out_dir / "loss.csv", ser.loss_csv(result.history))
    write_manifest(out_dir / "manifest.json", "train", args, inputs=[tr_path, va_path], outputs=[model_path, csv_path])
    row = result.final_row()
    payload = {"n_params": model.n_params, "best_epoch": result.best_epoch, "epochs": len(result.history) - 1,
               "stop_reason": result.stop_reason, "train_rmse": row["train_rmse"], "val_rmse": row["val_rmse"]}
    _emit(args, payload, (f"trained {model.n_params} parameters for {payload['epochs']} epochs ({result.stop_reason}); "
                          f"best epoch {result.best_epoch}: train {row['train_rmse']:.6g}, val {row['val_rmse']:.6g}"))
    return 0


def cmd_eval(args):
    obj = ser.read_json(args.model_file)
    model = build_model(obj["spec"])
    theta = np.asarray(obj["params"], dtype=np.float64)
    path, (x, y) = _load_split(args.data, args.split)
    per = per_sample_rmse(predict(model, theta, x), y)
    report = {"schema_version": ser.SCHEMA_VERSION, "split": args.split, "per_sample_rmse": [float(v) for v in per],
              "mean_rmse": float(np.mean(per))}
    if args.out:
        out = ser.write_json(args.out, report)
        write_manifest(_manifest_path(out), "eval", args, inputs=[Path(args.model_file), path], outputs=[out])
    _emit(args, report, f"{args.split}: mean RMSE {report['mean_rmse']:.6g} over {len(per)} samples")
    return 0


def cmd_sweep(args):
    """Train GI-Net and baseline across training-set sizes; emit a plot-ready CSV."""
    sizes = [int(s) for s in args.sizes.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    n_val, n_test = DEFAULT_SPLITS[args.problem][1:]
    rows = ["problem,model,seed,n_train,n_params,best_epoch,train_rmse,test_rmse"]
    for seed in seeds:
        held = _generate(args.problem, seed, n_test + n_val, 0, args)
        te, va = stack_pairs(held[:n_test]), stack_pairs(held[n_test:])
        for n in sizes:
            tr = stack_pairs(_generate(args.problem, seed, n, n_test + n_val, args))
            for kind in ("ginet", "baseline"):
                model = build_model(_load_spec(_model_ref(args.problem, kind)))
                res = train(model, tr, va, TrainConfig(seed=seed, max_epochs=args.max_epochs))
                rows.append(",".join(str(v) for v in (
                    args.problem, kind, seed, n, model.n_params, res.best_epoch,
                    repr(split_rmse(model, res.params, *tr)), repr(split_rmse(model, res.params, *te)))))
    out = ser.write_text(args.out, "\n".join(rows) + "\n")
    write_manifest(_manifest_path(out), "sweep", args, outputs=[out])
    _emit(args, {"rows": len(rows) - 1, "out": str(out)}, f"wrote {len(rows) - 1} rows to {out}")
    return 0


def cmd_presets(args):
    rows = []
    for name in PRESETS:
        model = build_model(name)
        rows.append({"preset": name, "n_params": model.n_params, "reference": REFERENCE_PARAM_COUNTS.get(name)})
    text = "\n".join(f"{r['preset']:>18}: {r['n_params']:>6} params" +
                     (f" (reference {r['reference']})" if r["reference"] else "") for r in rows)
    _emit(args, {"presets": rows}, text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="cap numerical worker threads (default: $GEOMNET_THREADS)")

    parser = argparse.ArgumentParser(prog="geomnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"geomnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", parents=[common], help="enumerate invariant filters")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--M", type=_positive_int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--parity", type=_parse_parity, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("count", parents=[common], help="count equivariant polynomial maps")
    p.add_argument("--N", type=_positive_int, required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--mode", choices=("closed", "molien", "empirical", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=_positive_int, default=None)
    p.add_argument("--max-candidates", type=_positive_int, default=None)
    p.add_argument("--time-limit", type=float, default=None, help="seconds for the empirical search")
    p.add_argument("--out")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("check-equivariance", parents=[common], help="test f(g.A) = g.f(A)")
    p.add_argument("--net", required=True, help="preset name or spec/model JSON")
    p.add_argument("--params", default="random", help="model JSON, 'random' or 'zero'")
    p.add_argument("--trials", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--N", type=_positive_int, default=3)
    p.set_defaults(func=cmd_check_equivariance)

    p = sub.add_parser("gen-data", parents=[common], help="generate a physics dataset")
    p.add_argument("--problem", choices=("gravity", "charge"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=10)
    p.add_argument("--val", type=int, default=None)
    p.add_argument("--test", type=int, default=10)
    p.add_argument("--N", type=_positive_int, default=16)
    p.add_argument("--particles", type=_positive_int, default=5)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--squash", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a GI-Net or baseline")
    p.add_argument("--problem", choices=("gravity", "charge"), required=True)
    p.add_argument("--model", default="ginet", help="'ginet', 'baseline', a preset or a spec JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-epochs", type=_positive_int, default=None)
    p.add_argument("--boundary", choices=("torus", "zero"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained model")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="RMSE against training-set size")
    p.add_argument("--problem", choices=("gravity", "charge"), required=True)
    p.add_argument("--sizes", default="5,10,20,50")
    p.add_argument("--seeds", default="0")
    p.add_argument("--max-epochs", type=_positive_int, default=2000)
    p.add_argument("--N", type=_positive_int, default=16)
    p.add_argument("--particles", type=_positive_int, default=5)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--squash", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("presets", parents=[common], help="list architecture presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "gen-data" and args.val is None:
        args.val = DEFAULT_SPLITS[args.problem][1]
    errors = (CliError, ser.FormatError, FilterError, NetError, TrainingError, PhysicsError,
              counting.CountingError, KeyError, ValueError, OSError)
    try:
        limiter = _apply_threads(args.threads)
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except errors as exc:
        sys.stderr.write(f"geomnet {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
