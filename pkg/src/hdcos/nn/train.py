"""SGD / Adam training, evaluation and learning-rate sweeps."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ModelSpec, ParamStore, init_model, is_trainable, loss_and_grads, loss_softmax_ce, forward_plain

SWEEP_LEARNING_RATES = (1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5)


@dataclass(frozen=True)
class TrainCfg:
    optimizer: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ParamStore, grads: ParamStore):
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: ParamStore, grads: ParamStore):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m[k] = self.beta1 * self.m.get(k, 0.0) + (1 - self.beta1) * g
            v = self.v[k] = self.beta2 * self.v.get(k, 0.0) + (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sgd_step(params: ParamStore, grads: ParamStore, lr: float):
    SGD(lr).step(params, grads)


def adam_step(params: ParamStore, grads: ParamStore, state: Adam):
    state.step(params, grads)


def make_optimizer(cfg: TrainCfg):
    return SGD(cfg.learning_rate) if cfg.optimizer == "sgd" else Adam(cfg.learning_rate)


@dataclass
class TrainResult:
    params: ParamStore
    history: list = field(default_factory=list)

    @property
    def diverged(self) -> bool:
        return any(row["diverged"] for row in self.history)

    @property
    def final_accuracy(self) -> float:
        return self.history[-1]["accuracy"] if self.history else float("nan")


def evaluate(spec: ModelSpec, params: ParamStore, dataset, batch_size: int = 2048) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on ``dataset``."""
    X, y = dataset.features, dataset.labels
    correct, loss_sum = 0, 0.0
    with np.errstate(all="ignore"):
        for i in range(0, len(y), batch_size):
            logits = forward_plain(spec, params, X[i:i + batch_size])
            yy = y[i:i + batch_size]
            correct += int((np.nan_to_num(logits, nan=-np.inf).argmax(1) == yy).sum())
            loss_sum += loss_softmax_ce(logits, yy) * len(yy)
    return correct / len(y), loss_sum / len(y)


def train(spec: ModelSpec, cfg: TrainCfg, train_set, eval_set=None, params: ParamStore | None = None,
          on_epoch=None) -> TrainResult:
    """Minibatch training; a non-finite loss or parameter stops updates and flags divergence.

    Every epoch appends ``{epoch, loss, accuracy, diverged}``; after a
    divergence the remaining epochs repeat the flagged row so the history
    always has ``cfg.epochs`` entries.
    """
    eval_set = eval_set if eval_set is not None else train_set
    params = init_model(spec, cfg.seed) if params is None else params.copy()
    opt = make_optimizer(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    X, y = train_set.features, train_set.labels
    history, diverged = [], False
    for epoch in range(1, cfg.epochs + 1):
        if not diverged:
            order = rng.permutation(len(y))
            total, seen = 0.0, 0
            with np.errstate(all="ignore"):
                for i in range(0, len(order), cfg.batch_size):
                    idx = order[i:i + cfg.batch_size]
                    loss, grads = loss_and_grads(spec, params, X[idx], y[idx])
                    if not np.isfinite(loss) or not grads.is_finite():
                        diverged = True
                        break
                    opt.step(params, ParamStore((k, g) for k, g in grads.items() if is_trainable(k)))
                    total += loss * len(idx)
                    seen += len(idx)
            if not params.is_finite():
                diverged = True
            acc, _ = evaluate(spec, params, eval_set)
            row = {"epoch": epoch, "loss": float("nan") if diverged else total / max(seen, 1),
                   "accuracy": acc, "diverged": diverged}
        else:
            row = dict(history[-1], epoch=epoch)
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return TrainResult(params, history)


def write_metrics_csv(path, history, run_id: str = "run0"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "epoch", "loss", "accuracy", "diverged"])
        for row in history:
            w.writerow([run_id, row["epoch"], f"{row['loss']:.6g}", f"{row['accuracy']:.6f}", int(row["diverged"])])


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        return [{"run_id": r["run_id"], "epoch": int(r["epoch"]), "loss": float(r["loss"]),
                 "accuracy": float(r["accuracy"]), "diverged": bool(int(r["diverged"]))}
                for r in csv.DictReader(fh)]


# sweeps --------------------------------------------------------------------


@dataclass
class SweepCell:
    activation: str
    structure: str
    optimizer: str
    learning_rate: float
    accuracies: list = field(default_factory=list)
    diverged: int = 0
    errors: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.accuracies)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")

    def row(self) -> dict:
        return {"activation": self.activation, "structure": self.structure, "optimizer": self.optimizer,
                "learning_rate": self.learning_rate, "trials": self.trials, "mean_accuracy": self.mean,
                "std_accuracy": self.std, "diverged": self.diverged, "errors": len(self.errors)}


def _run_cell(args):
    spec, cfg, train_set, eval_set = args
    try:
        res = train(spec, cfg, train_set, eval_set)
        return res.final_accuracy, res.diverged, None
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the sweep
        return float("nan"), False, repr(exc)


def sweep(spec: ModelSpec, train_set, eval_set, activations=("cosine",), structures=None,
          learning_rates=SWEEP_LEARNING_RATES, optimizers=("sgd",), trials: int = 1, epochs: int = 10,
          batch_size: int = 32, workers: int = 1) -> list:
    """Train every (activation, structure, optimizer, lr) cell ``trials`` times.

    Trial ``t`` uses seed ``t`` for both initialisation and shuffling.
    Returns one :class:`SweepCell` per grid point, in grid order.
    """
    structures = structures or (spec.layers[0].structure if spec.layers else "dense",)
    cells, jobs = [], []
    for act, struct, opt, lr in itertools.product(activations, structures, optimizers, learning_rates):
        cell = SweepCell(act, struct, opt, float(lr))
        cells.append(cell)
        for t in range(trials):
            cfg = TrainCfg(opt, float(lr), batch_size, epochs, seed=t)
            jobs.append((cell, (spec.with_hidden(struct, act, seed=t), cfg, train_set, eval_set)))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, [a for _, a in jobs]))
    else:
        results = [_run_cell(a) for _, a in jobs]
    for (cell, _), (acc, div, err) in zip(jobs, results):
        if err is not None:
            cell.errors.append(err)
            continue
        cell.accuracies.append(acc)
        cell.diverged += int(div)
    return cells


def best_per_row(cells) -> list:
    """Best learning rate (by trial mean) for each (activation, structure, optimizer)."""
    best = {}
    for c in cells:
        k = (c.activation, c.structure, c.optimizer)
        m = c.mean if np.isfinite(c.mean) else -np.inf
        if k not in best or m > (best[k].mean if np.isfinite(best[k].mean) else -np.inf):
            best[k] = c
    return list(best.values())


def write_sweep_csv(path, cells):
    rows = [c.row() for c in cells]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["activation"])
        w.writeheader()
        w.writerows(rows)


def render_sweep(cells) -> str:
    """Aligned text grid: one line per (optimizer, activation, structure), one column per lr."""
    lrs = sorted({c.learning_rate for c in cells})
    head = f"{'optimizer':<9} {'activation':<14} {'structure':<9} " + " ".join(f"{lr:>9g}" for lr in lrs)
    lines = [head, "-" * len(head)]
    keyed = {(c.optimizer, c.activation, c.structure, c.learning_rate): c for c in cells}
    for opt, act, struct in dict.fromkeys((c.optimizer, c.activation, c.structure) for c in cells):
        vals = []
        for lr in lrs:
            c = keyed.get((opt, act, struct, lr))
            if c is None:
                vals.append(f"{'':>9}")
            else:
                flag = "*" if c.diverged else " "
                vals.append(f"{c.mean:>8.3f}{flag}")
        lines.append(f"{opt:<9} {act:<14} {struct:<9} " + " ".join(vals))
    lines.append("(* = at least one trial diverged)")
    return "\n".join(lines)


def cell_dict(cell: SweepCell) -> dict:
    return asdict(cell)
