"""Command-line interface: ``hdcos <command> ...``.

Exit codes: 0 on success (including runs whose training diverged), 1 for
usage errors, 2 for runtime or protocol failures.  Every command that writes
files also writes ``<command>.config.json`` next to them with its fully resolved
arguments.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, linalg
from . import mpc_protocols as mp
from .data import DATA_DIR_ENV, Dataset, default_data_dir, mnist_subset, split, synth_gaussians
from .dealer import PoolExhaustedError, gen_triples, read_triple_file, write_triple_file
from .fixed_ring import FixedCfg, RingOverflowError, decode
from .nn import ModelSpec, TrainCfg, evaluate, load_model, load_model_share, save_model, share_model, train
from .nn.model import LayerSpec, SpecError
from .nn.train import SWEEP_LEARNING_RATES, best_per_row, render_sweep, sweep, write_metrics_csv, write_sweep_csv
from .runtime import (DEFAULT_TIMEOUT, ProtocolAbort, ProtocolDesyncError, TcpEndpoint, TransportError,
                      parse_address, run_party, run_two_party)
from .sharing import FormatError, ShareError, read_share_file, reconstruct, split_real, write_share_file

BIND_ENV = "HDCOS_BIND"
PEER_ENV = "HDCOS_PEER"

RUNTIME_ERRORS = (OSError, ValueError, FormatError, ShareError, RingOverflowError, SpecError, TransportError,
                  ProtocolDesyncError, ProtocolAbort, PoolExhaustedError, mp.CapabilityError, KeyError)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# shared helpers ------------------------------------------------------------------


def write_config(out_dir: Path, args, **extra) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    cfg.update(extra, version=__version__)
    path = out_dir / f"{args.command}.config.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True))
    return path


def add_data_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", choices=("mnist", "fashion_mnist", "synth"), default="mnist")
    g.add_argument("--data-dir", type=Path, default=None,
                   help=f"directory with the IDX files (default: ${DATA_DIR_ENV}/<dataset>)")
    g.add_argument("--n-train", type=int, default=10_000)
    g.add_argument("--n-test", type=int, default=1_000)
    g.add_argument("--data-seed", type=int, default=0, help="subsampling / synthetic-data seed")
    g.add_argument("--synth-dim", type=int, default=16)
    g.add_argument("--synth-classes", type=int, default=4)
    g.add_argument("--synth-separation", type=float, default=4.0)


def load_data(args) -> tuple[Dataset, Dataset]:
    if args.dataset == "synth":
        ds = synth_gaussians(args.n_train + args.n_test, args.synth_dim, args.synth_classes,
                             args.synth_separation, args.data_seed)
        return split(ds, args.n_train / ds.n, args.data_seed)
    directory = args.data_dir or default_data_dir() / args.dataset
    return mnist_subset(directory, args.n_train, args.n_test, args.data_seed, name=args.dataset)


def add_model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--spec", type=Path, help="model spec JSON (overrides --layers)")
    g.add_argument("--layers", nargs="*", default=["hd:64:cosine", "hd:64:cosine"],
                   metavar="STRUCT:WIDTH:ACT", help="hidden layers (default: two hd:64:cosine)")
    g.add_argument("--output-structure", default="dense")


def build_spec(args, input_dim: int, classes: int) -> ModelSpec:
    if args.spec is not None:
        spec = ModelSpec.from_json(Path(args.spec).read_text())
        if spec.input_dim != input_dim:
            raise UsageError(f"spec expects {spec.input_dim} features but the dataset has {input_dim}")
        return spec
    return ModelSpec(input_dim, tuple(LayerSpec.parse(t) for t in args.layers), classes, args.seed,
                     args.output_structure)


def add_train_args(p, lr=True):
    g = p.add_argument_group("training")
    g.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    if lr:
        g.add_argument("--lr", type=float, default=0.01)
    g.add_argument("--batch-size", type=int, default=8)
    g.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)


def load_inputs(args, n_features: int):
    """Test-split features for share-inputs."""
    _, test = load_data(args)
    if test.dim != n_features:
        raise UsageError(f"model expects {n_features} features, dataset has {test.dim}")
    count = min(args.count, test.n) if args.count else test.n
    return test.take(np.arange(count))


# commands ------------------------------------------------------------------------


def cmd_train(args):
    train_set, test_set = load_data(args)
    spec = build_spec(args, train_set.dim, train_set.n_classes)
    cfg = TrainCfg(args.optimizer, args.lr, args.batch_size, args.epochs, args.seed)
    out = Path(args.out)
    write_config(out, args, spec=spec.to_dict())

    def report(row):
        flag = "  DIVERGED" if row["diverged"] else ""
        print(f"epoch {row['epoch']:3d}  loss {row['loss']:.4f}  accuracy {row['accuracy']:.4f}{flag}")

    res = train(spec, cfg, train_set, test_set, on_epoch=None if args.quiet else report)
    save_model(spec, res.params, out / "model.hdmd", f_bits=args.f)
    write_metrics_csv(out / "metrics.csv", res.history, run_id=args.run_id)
    print(f"final accuracy {res.final_accuracy:.4f}{' (diverged)' if res.diverged else ''}")
    print(f"wrote {out / 'model.hdmd'} and {out / 'metrics.csv'}")
    return 0


def cmd_eval(args):
    spec, params, _ = load_model(args.model)
    train_set, test_set = load_data(args)
    ds = test_set if args.split == "test" else train_set
    acc, loss = evaluate(spec, params, ds)
    print(f"accuracy {acc:.4f}  loss {loss:.4f}  n {ds.n}")
    if args.out:
        out = Path(args.out)
        write_config(out, args)
        (out / "eval.json").write_text(json.dumps({"accuracy": acc, "loss": loss, "n": ds.n}, indent=2))
    return 0


def cmd_sweep(args):
    train_set, test_set = load_data(args)
    spec = build_spec(args, train_set.dim, train_set.n_classes)
    out = Path(args.out)
    write_config(out, args, spec=spec.to_dict())
    structures = args.structures or [spec.layers[0].structure if spec.layers else "dense"]
    cells = sweep(spec, train_set, test_set, activations=args.activations, structures=structures,
                  learning_rates=args.lrs, optimizers=args.optimizers, trials=args.trials,
                  epochs=args.epochs, batch_size=args.batch_size, workers=args.workers)
    write_sweep_csv(out / "sweep.csv", cells)
    text = render_sweep(cells)
    best = "\n".join(f"best {c.optimizer} {c.activation} {c.structure}: lr={c.learning_rate:g} "
                     f"mean={c.mean:.4f} std={c.std:.4f}" for c in best_per_row(cells))
    (out / "sweep.txt").write_text(text + "\n\n" + best + "\n")
    print(text)
    print(best)
    for c in cells:
        for err in c.errors:
            print(f"cell {c.activation}/{c.structure}/{c.optimizer}/lr={c.learning_rate:g} failed: {err}",
                  file=sys.stderr)
    return 0


def cmd_share_model(args):
    spec, params, f_bits = load_model(args.model)
    cfg = FixedCfg(f=args.f if args.f is not None else f_bits)
    mp.check_mpc_supported(spec)
    out = Path(args.out)
    rng = np.random.default_rng([args.seed, 0xD0])
    paths = share_model(spec, params, out, rng, cfg)
    n_triples = mp.model_triples(spec, args.batch)
    pools = gen_triples(n_triples, np.random.default_rng([args.seed, 0xDE]), cfg)
    sizes = {}
    for p in (0, 1):
        tp = out / f"triples.p{p}.hdtr"
        sizes[tp.name] = write_triple_file(tp, pools[p])
    # self-check: the two files reconstruct to the encoding
    rec = reconstruct(read_share_file(paths["p0"]), read_share_file(paths["p1"]))
    err = float(np.max(np.abs(decode(rec, cfg) - params.flatten()))) if rec.size else 0.0
    if err > 2.0 ** -(cfg.f + 1):
        raise ValueError(f"share reconstruction error {err:g} exceeds 2^-(f+1)")
    write_config(out, args, f_resolved=cfg.f, triples=n_triples)
    print(f"shared {params.flatten().size} parameters at f={cfg.f} (max reconstruction error {err:.3g})")
    print(f"dealt {n_triples} triples per party for batch {args.batch}")
    for p in (0, 1):
        print(f"  {paths[f'p{p}']}  {paths[f'p{p}'].stat().st_size} bytes")
    for name, size in sizes.items():
        print(f"  {out / name}  {size} bytes")
    return 0


def cmd_share_inputs(args):
    out = Path(args.out)
    public = out / "model.public.json"
    if args.features_dim is None and not public.exists():
        raise UsageError(f"{public} not found; run share-model first or pass --features-dim")
    if args.features_dim is None:
        n_features = json.loads(public.read_text())["spec"]["input_dim"]
        cfg = FixedCfg(f=json.loads(public.read_text())["f_bits"])
    else:
        n_features, cfg = args.features_dim, FixedCfg(f=args.f or 20)
    ds = load_inputs(args, n_features)
    s0, s1 = split_real(ds.features, np.random.default_rng([args.seed, 0x1A]), cfg)
    write_share_file(out / "inputs.p0.hdsh", s0)
    write_share_file(out / "inputs.p1.hdsh", s1)
    meta = {"shape": list(ds.features.shape), "labels": ds.labels.tolist(), "f_bits": cfg.f}
    (out / "inputs.json").write_text(json.dumps(meta))
    np.save(out / "inputs.plain.npy", ds.features)
    write_config(out, args)
    print(f"shared {ds.n} inputs of dimension {ds.dim} into {out}")
    return 0


def _load_party(directory: Path, party: int):
    spec, shares, flat = load_model_share(directory / f"model.p{party}.hdsh", directory / "model.public.json")
    meta = json.loads((directory / "inputs.json").read_text())
    x = read_share_file(directory / f"inputs.p{party}.hdsh")
    if x.cfg != flat.cfg:
        raise FormatError("input shares and model shares use different fixed-point configs")
    pool = read_triple_file(directory / f"triples.p{party}.hdtr")
    return spec, shares, x.reshape(*meta["shape"]), pool, meta


def _forward(spec):
    def protocol(ctx, inp):
        shares, x = inp
        return (yield from mp.secure_forward(ctx, spec, shares, x))
    return protocol


def cost_report(spec, meter, batch: int) -> list:
    rows = []
    analytic = {r["section"]: r for r in mp.cost_table(spec, batch)}
    for label, m in meter.by_section.items():
        a = analytic.get(label, {})
        rows.append({"section": label, "rounds": m["rounds"], "bytes": m["bytes"], "mults": m["mults"],
                     "analytic_rounds": a.get("rounds"), "analytic_mults": a.get("mults")})
    return rows


def print_cost_rows(rows, meter):
    print(f"{'section':<24} {'rounds':>6} {'bytes/party':>12} {'secure mults':>12}")
    for r in rows:
        print(f"{r['section']:<24} {r['rounds']:>6} {r['bytes']:>12} {r['mults']:>12}")
    print(f"{'total':<24} {meter.online_rounds:>6} {meter.bytes_sent:>12} {meter.secure_mults:>12}")


def cmd_infer_2pc(args):
    directory = Path(args.dir)
    out = Path(args.out) if args.out else directory
    if args.transport == "inproc":
        views = [_load_party(directory, p) for p in (0, 1)]
        spec, meta = views[0][0], views[0][4]
        res = run_two_party(_forward(spec), [(v[1], v[2]) for v in views], (views[0][3], views[1][3]),
                            transport="inproc", cfg=views[0][2].cfg, seed=args.seed, timeout=args.timeout)
        outputs, meters = res.outputs, res.meters
        parties = (0, 1)
    else:
        if args.party is None:
            raise UsageError("--transport tcp needs --party 0 or --party 1")
        spec, shares, x, pool, meta = _load_party(directory, args.party)
        if args.party == 0:
            host, port = parse_address(args.bind or os.environ.get(BIND_ENV, "127.0.0.1:5550"))
            endpoint = TcpEndpoint.listen(host, port, args.timeout)
        else:
            host, port = parse_address(args.peer or os.environ.get(PEER_ENV, "127.0.0.1:5550"))
            endpoint = TcpEndpoint.connect(host, port, args.timeout)
        y, meter, _ = run_party(_forward(spec), args.party, (shares, x), pool, endpoint, x.cfg, args.seed)
        outputs, meters, parties = (y,), (meter,), (args.party,)

    out.mkdir(parents=True, exist_ok=True)
    for p, y in zip(parties, outputs):
        write_share_file(out / f"logits.p{p}.hdsh", y)
    (out / "logits.json").write_text(json.dumps({"shape": list(outputs[0].shape), "f_bits": outputs[0].cfg.f}))
    batch = meta["shape"][0]
    rows = cost_report(spec, meters[0], batch)
    costs = {"party": parties[0], "transport": args.transport, "batch": batch, **meters[0].summary(),
             "layers": rows, "analytic_rounds": mp.model_rounds(spec),
             "analytic_bytes": mp.model_bytes(spec, batch), "analytic_mults": mp.model_triples(spec, batch)}
    costs.pop("by_section")
    suffix = "" if args.transport == "inproc" else f".p{parties[0]}"
    (out / f"costs{suffix}.json").write_text(json.dumps(costs, indent=2))
    write_config(out, args)

    print_cost_rows(rows, meters[0])
    if len(outputs) == 2:
        logits = decode(reconstruct(*outputs), outputs[0].cfg)
        pred = logits.argmax(axis=1)
        _print_predictions(pred, meta.get("labels"), args.show)
        _write_predictions(out / "predictions.csv", pred, meta.get("labels"))
    else:
        print(f"party {parties[0]} wrote {out / f'logits.p{parties[0]}.hdsh'}; combine both with "
              f"'hdcos reconstruct'")
    return 0


def _print_predictions(pred, labels, show: int):
    for i in range(min(show, len(pred))):
        tail = f"  label {labels[i]}" if labels is not None else ""
        print(f"sample {i}: argmax {pred[i]}{tail}")
    if labels is not None:
        print(f"accuracy {float(np.mean(pred == np.asarray(labels[:len(pred)]))):.4f} on {len(pred)} samples")


def _write_predictions(path, pred, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "argmax", "label"])
        for i, p in enumerate(pred):
            w.writerow([i, int(p), "" if labels is None else int(labels[i])])


def cmd_reconstruct(args):
    s0, s1 = read_share_file(args.share0), read_share_file(args.share1)
    cols = args.cols
    if cols is None:
        meta = Path(args.share0).with_name("logits.json")
        cols = json.loads(meta.read_text())["shape"][-1] if meta.exists() else s0.val.size
    values = decode(reconstruct(s0, s1), s0.cfg).reshape(-1, cols)
    pred = values.argmax(axis=1)
    labels = json.loads(Path(args.labels).read_text())["labels"] if args.labels else None
    _print_predictions(pred, labels, args.show)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_predictions(out, pred, labels)
        np.save(out.with_suffix(".npy"), values)
        write_config(out.parent, args)
    return 0


def dry_run_costs(spec, batch: int, seed: int = 0):
    """Run secure_forward on random shares and return party 0's meter."""
    from .nn import init_model

    rng = np.random.default_rng(seed)
    params = init_model(spec, seed)
    sh0, sh1 = mp.share_params(params, rng)
    x0, x1 = split_real(rng.uniform(0.0, 1.0, (batch, spec.input_dim)), rng)
    pools = gen_triples(mp.model_triples(spec, batch), rng)
    res = run_two_party(_forward(spec), ((sh0, x0), (sh1, x1)), pools, transport="lockstep", seed=seed)
    return res.meters[0], pools


def activation_costs(batch: int, seed: int = 0) -> list:
    """Measured rounds and mults of each secure primitive on a random batch."""
    rng = np.random.default_rng(seed)
    x0, x1 = split_real(rng.uniform(-2.0, 2.0, batch), rng)
    cases = {
        "mul": lambda ctx, x: mp.secure_mul_batch(ctx, x, x),
        "add": lambda ctx, x: mp.secure_identity(ctx, x + x),
        "square": mp.secure_square,
        "relu_polyfit3": mp.secure_relu_polyfit3,
        "cosine": mp.secure_cosine,
    }
    analytic = {"mul": (1, 1), "add": (0, 0), **{k: (mp.ACTIVATION_ROUNDS[k], mp.ACTIVATION_MULTS[k])
                                                  for k in ("square", "relu_polyfit3", "cosine")}}
    rows = []
    for name, proto in cases.items():
        pools = gen_triples(2 * batch, rng)
        m = run_two_party(proto, (x0, x1), pools, transport="lockstep", seed=seed).meters[0]
        rows.append({"primitive": name, "rounds": m.online_rounds, "analytic_rounds": analytic[name][0],
                     "mults": m.secure_mults, "analytic_mults": analytic[name][1] * batch})
    return rows


def cmd_bench_costs(args):
    if args.spec is not None:
        spec = ModelSpec.from_json(Path(args.spec).read_text())
    else:
        spec = ModelSpec(args.input_dim, tuple(LayerSpec.parse(t) for t in args.layers), args.classes,
                         args.seed, args.output_structure)
    mp.check_mpc_supported(spec)
    ok = True
    print(f"primitives (batch {args.batch})")
    print(f"{'primitive':<15} {'rounds':>6} {'analytic':>8} {'mults':>8} {'analytic':>8}")
    prim = activation_costs(args.batch, args.seed)
    for r in prim:
        ok &= r["rounds"] == r["analytic_rounds"] and r["mults"] == r["analytic_mults"]
        print(f"{r['primitive']:<15} {r['rounds']:>6} {r['analytic_rounds']:>8} {r['mults']:>8} {r['analytic_mults']:>8}")

    meter, pools = dry_run_costs(spec, args.batch, args.seed)
    rows = cost_report(spec, meter, args.batch)
    print(f"\nmodel layers (batch {args.batch})")
    print(f"{'section':<24} {'rounds':>6} {'analytic':>8} {'mults':>8} {'analytic':>8} {'bytes/party':>12}")
    for r in rows:
        ok &= r["rounds"] == r["analytic_rounds"] and r["mults"] == r["analytic_mults"]
        print(f"{r['section']:<24} {r['rounds']:>6} {r['analytic_rounds']:>8} {r['mults']:>8} "
              f"{r['analytic_mults']:>8} {r['bytes']:>12}")
    total_ok = (meter.online_rounds == mp.model_rounds(spec) and meter.secure_mults == mp.model_triples(spec, args.batch)
                and meter.bytes_sent == mp.model_bytes(spec, args.batch) and pools[0].remaining == 0)
    ok &= total_ok
    print(f"{'total':<24} {meter.online_rounds:>6} {mp.model_rounds(spec):>8} {meter.secure_mults:>8} "
          f"{mp.model_triples(spec, args.batch):>8} {meter.bytes_sent:>12}")

    print("\nsecure mults per linear layer")
    print(f"{'d':>5} {'dense':>8} {'lowrank':>8} {'hd':>8}")
    for d in args.widths:
        print(f"{d:>5} " + " ".join(f"{mp.linear_mults(s, d, d):>8}" for s in ("dense", "lowrank", "hd")))
    if args.out:
        out = Path(args.out)
        write_config(out, args, spec=spec.to_dict())
        (out / "costs.json").write_text(json.dumps({"primitives": prim, "layers": rows,
                                                    "match": bool(ok)}, indent=2))
    print("analytic and measured counts " + ("agree" if ok else "DISAGREE"))
    return 0 if ok else 2


def cmd_kernel_check(args):
    rows = linalg.kernel_error_curve(args.dim, args.sigma, args.pairs, args.features, args.seed, args.repeats)
    print(f"Gaussian kernel approximation, d={args.dim}, sigma={args.sigma}, {args.pairs} pairs")
    print(f"{'D':>6} {'mean |err|':>12} {'+/-':>9} {'sup |err|':>12}")
    for r in rows:
        print(f"{r['D']:>6} {r['mean_error']:>12.5f} {r['noise']:>9.5f} {r['sup_error']:>12.5f}")
    x = np.zeros(args.dim)
    print(f"k(x, x) = {float(linalg.gaussian_kernel(x, x, args.sigma)):.6f} (exact)")
    monotone = all(b["mean_error"] <= a["mean_error"] + 2 * max(a["noise"], b["noise"])
                   for a, b in zip(rows, rows[1:]))
    print("mean error is non-increasing in D (within 2 standard errors)" if monotone
          else "mean error is NOT non-increasing in D")
    if args.out:
        out = Path(args.out)
        write_config(out, args)
        (out / "kernel_check.json").write_text(json.dumps(rows, indent=2))
    return 0


# parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="hdcos", description="Hadamard-diagonal / cosine MLPs in plaintext and under "
                                              "two-party computation.")
    parser.add_argument("--version", action="version", version=f"hdcos {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train", help="train a model and write model.hdmd + metrics.csv")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)
    p.add_argument("--f", type=int, default=20, help="fractional bits recorded for later sharing")
    p.add_argument("--run-id", default="run0")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and loss of a saved model")
    add_data_args(p)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="activation x structure x optimizer x learning-rate grid")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p, lr=False)
    p.add_argument("--activations", nargs="+", default=["cosine", "square"])
    p.add_argument("--structures", nargs="+")
    p.add_argument("--optimizers", nargs="+", choices=("sgd", "adam"), default=["sgd"])
    p.add_argument("--lrs", nargs="+", type=float, default=list(SWEEP_LEARNING_RATES))
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("share-model", help="secret-share a model and deal triples for one batch")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--batch", type=int, default=1, help="inference batch the triples must cover")
    p.add_argument("--f", type=int, default=None, help="fractional bits (default: the model file's)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_share_model)

    p = sub.add_parser("share-inputs", help="secret-share test-split features for inference")
    add_data_args(p)
    p.add_argument("--count", type=int, default=1, help="number of test samples (the batch size)")
    p.add_argument("--features-dim", type=int, help="feature count when no model.public.json exists")
    p.add_argument("--f", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path, help="directory holding the shared model")
    p.set_defaults(func=cmd_share_inputs)

    p = sub.add_parser("infer-2pc", help="secure inference on shared inputs")
    p.add_argument("--dir", required=True, type=Path, help="output directory of share-model/share-inputs")
    p.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    p.add_argument("--party", type=int, choices=(0, 1))
    p.add_argument("--bind", help=f"party 0 listen address host:port (env {BIND_ENV})")
    p.add_argument("--peer", help=f"party 1 peer address host:port (env {PEER_ENV})")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--show", type=int, default=10, help="predictions to print")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_infer_2pc)

    p = sub.add_parser("reconstruct", help="combine two share files and print the argmax per row")
    p.add_argument("share0", type=Path)
    p.add_argument("share1", type=Path)
    p.add_argument("--cols", type=int)
    p.add_argument("--labels", type=Path, help="inputs.json with reference labels")
    p.add_argument("--show", type=int, default=10)
    p.add_argument("--out", type=Path, help="predictions CSV path")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bench-costs", help="analytic vs measured rounds, bytes and secure mults")
    add_model_args(p)
    p.add_argument("--input-dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--widths", nargs="+", type=int, default=[16, 64, 128])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench_costs)

    p = sub.add_parser("kernel-check", help="random-Fourier-feature kernel approximation error")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--features", nargs="+", type=int, default=[64, 256, 1024, 4096])
    p.add_argument("--repeats", type=int, default=5, help="independent feature maps per D")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_kernel_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hdcos {args.command}: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"hdcos {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
