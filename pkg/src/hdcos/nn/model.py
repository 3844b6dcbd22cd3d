"""Model description, parameter initialisation and the plaintext forward/backward pass."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import linalg
from ..polyfit import polyder_val, polyval, relu_polyfit3_coeffs

STRUCTURES = ("dense", "hd", "lowrank", "circulant", "phd")
ACTIVATIONS = ("cosine", "square", "exp_m1", "relu", "relu_polyfit3", "none")
PLAINTEXT_ONLY_ACTIVATIONS = frozenset({"relu", "exp_m1"})
LOWRANK_RANK = 2


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    structure: str
    width: int
    activation: str

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise SpecError(f"unknown structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.width < 1:
            raise SpecError(f"layer width must be positive, got {self.width}")

    @property
    def plaintext_only(self) -> bool:
        return self.activation in PLAINTEXT_ONLY_ACTIVATIONS

    @classmethod
    def parse(cls, text: str) -> "LayerSpec":
        """``"hd:64:cosine"`` -> LayerSpec("hd", 64, "cosine")."""
        parts = text.split(":")
        if len(parts) != 3:
            raise SpecError(f"layer {text!r} is not of the form structure:width:activation")
        return cls(parts[0], int(parts[1]), parts[2])


@dataclass(frozen=True)
class ModelSpec:
    """An MLP: hidden layers followed by a linear head with ``classes`` outputs."""

    input_dim: int
    layers: tuple = ()
    classes: int = 10
    seed: int = 0
    output_structure: str = "dense"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            ls if isinstance(ls, LayerSpec) else LayerSpec(**ls) for ls in self.layers))
        if self.input_dim < 1 or self.classes < 2:
            raise SpecError("input_dim must be >= 1 and classes >= 2")
        if self.output_structure not in STRUCTURES:
            raise SpecError(f"unknown output structure {self.output_structure!r}")

    @property
    def all_layers(self) -> tuple:
        return self.layers + (LayerSpec(self.output_structure, self.classes, "none"),)

    def dims(self):
        """(in_dim, out_dim) for every layer including the head."""
        out, n_in = [], self.input_dim
        for ls in self.all_layers:
            out.append((n_in, ls.width))
            n_in = ls.width
        return out

    def with_hidden(self, structure: str | None = None, activation: str | None = None,
                    seed: int | None = None) -> "ModelSpec":
        layers = tuple(LayerSpec(structure or ls.structure, ls.width, activation or ls.activation)
                       for ls in self.layers)
        return ModelSpec(self.input_dim, layers, self.classes,
                         self.seed if seed is None else seed, self.output_structure)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(ls) for ls in self.layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["input_dim"], tuple(LayerSpec(**ls) for ls in d.get("layers", ())),
                   d.get("classes", 10), d.get("seed", 0), d.get("output_structure", "dense"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def mlp(cls, input_dim: int, hidden, classes: int, structure: str = "hd",
            activation: str = "cosine", seed: int = 0) -> "ModelSpec":
        """``hidden`` is a list of widths, e.g. ``[64, 64]``."""
        return cls(input_dim, tuple(LayerSpec(structure, w, activation) for w in hidden), classes, seed)


class ParamStore(dict):
    """Ordered ``name -> array`` mapping; the order is the serialisation order."""

    def copy(self) -> "ParamStore":
        return ParamStore((k, np.array(v, copy=True)) for k, v in self.items())

    def flatten(self) -> np.ndarray:
        if not self:
            return np.zeros(0)
        return np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in self.values()])

    def layout(self):
        return [(k, tuple(np.shape(v))) for k, v in self.items()]

    @classmethod
    def unflatten(cls, flat, layout) -> "ParamStore":
        out, pos = cls(), 0
        for name, shape in layout:
            n = int(np.prod(shape, dtype=np.int64))
            out[name] = np.asarray(flat[pos:pos + n]).reshape(shape)
            pos += n
        if pos != len(flat):
            raise ValueError(f"layout covers {pos} values but {len(flat)} were given")
        return out

    def n_trainable(self) -> int:
        return sum(v.size for k, v in self.items() if is_trainable(k))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.values())


def is_trainable(name: str) -> bool:
    return not name.split(".", 1)[1].startswith("P_")


# activations ---------------------------------------------------------------


def _poly3(x):
    return polyval(relu_polyfit3_coeffs(), x)


def _poly3_grad(x):
    return polyder_val(relu_polyfit3_coeffs(), x)


ACTIVATION_FUNCS = {
    "cosine": (np.cos, lambda z: -np.sin(z)),
    "square": (np.square, lambda z: 2.0 * z),
    "exp_m1": (np.expm1, np.exp),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64)),
    "relu_polyfit3": (_poly3, _poly3_grad),
    "none": (lambda z: z, lambda z: np.ones_like(z)),
}


def activate(kind: str, z):
    return ACTIVATION_FUNCS[kind][0](z)


def activation_grad(kind: str, z):
    return ACTIVATION_FUNCS[kind][1](z)


# structured linear maps ----------------------------------------------------


class Linear:
    """Base for one layer's linear map ``z = W x + b`` (W possibly structured)."""

    def __init__(self, index: int, n_in: int, n_out: int):
        self.i, self.n_in, self.n_out = index, n_in, n_out

    def key(self, name: str) -> str:
        return f"{self.i}.{name}"

    def shapes(self) -> list:
        raise NotImplementedError

    def init(self, rng, var: float) -> dict:
        """Parameters whose effective matrix entries have variance ``var``."""
        raise NotImplementedError

    def forward(self, p, x):
        raise NotImplementedError

    def backward(self, p, cache, gz):
        raise NotImplementedError

    def dense_matrix(self, p) -> np.ndarray:
        """Explicit k x n_in matrix (test oracle)."""
        return self.forward(p, np.eye(self.n_in))[0].T - p[self.key("b")][:, None]


class Dense(Linear):
    def shapes(self):
        return [("W", (self.n_out, self.n_in)), ("b", (self.n_out,))]

    def init(self, rng, var):
        return {"W": rng.normal(0.0, np.sqrt(var), (self.n_out, self.n_in))}

    def forward(self, p, x):
        return x @ p[self.key("W")].T + p[self.key("b")], x

    def backward(self, p, x, gz):
        return gz @ p[self.key("W")], {"W": gz.T @ x, "b": gz.sum(0)}


class HD(Linear):
    """W = H D on the input zero-padded to a power of two; first ``n_out`` rows kept."""

    def __init__(self, index, n_in, n_out):
        super().__init__(index, n_in, n_out)
        self.d = linalg.next_pow2(max(n_in, n_out))

    def shapes(self):
        return [("diag", (self.d,)), ("b", (self.n_out,))]

    def init(self, rng, var):
        return {"diag": rng.normal(0.0, np.sqrt(var * self.d), self.d)}

    def forward(self, p, x):
        xp = linalg.pad_last(x, self.d)
        v = linalg.fwht(xp * p[self.key("diag")])
        return v[:, :self.n_out] + p[self.key("b")], xp

    def backward(self, p, xp, gz):
        gu = linalg.fwht(linalg.pad_last(gz, self.d))
        gx = (gu * p[self.key("diag")])[:, :self.n_in]
        return gx, {"diag": (gu * xp).sum(0), "b": gz.sum(0)}


class PHD(Linear):
    """W = P H D with P a fixed sparse Gaussian matrix (one nonzero per row)."""

    def __init__(self, index, n_in, n_out):
        super().__init__(index, n_in, n_out)
        self.d = linalg.next_pow2(n_in)

    def shapes(self):
        return [("P_cols", (self.n_out,)), ("P_vals", (self.n_out,)), ("diag", (self.d,)), ("b", (self.n_out,))]

    def init(self, rng, var):
        P = linalg.SparseRows.gaussian(self.n_out, self.d, rng)
        return {"P_cols": P.cols.astype(np.float64), "P_vals": P.vals,
                "diag": rng.normal(0.0, np.sqrt(var * self.d), self.d)}

    def _cols(self, p):
        return p[self.key("P_cols")].astype(np.int64)

    def forward(self, p, x):
        xp = linalg.pad_last(x, self.d)
        v = linalg.fwht(xp * p[self.key("diag")])
        return v[:, self._cols(p)] * p[self.key("P_vals")] + p[self.key("b")], xp

    def backward(self, p, xp, gz):
        gv = np.zeros((gz.shape[0], self.d))
        np.add.at(gv.T, self._cols(p), (gz * p[self.key("P_vals")]).T)
        gu = linalg.fwht(gv)
        gx = (gu * p[self.key("diag")])[:, :self.n_in]
        return gx, {"diag": (gu * xp).sum(0), "b": gz.sum(0)}


class LowRank(Linear):
    """W = V1^T V2 with V1 of shape (2, n_out) and V2 of shape (2, n_in)."""

    def shapes(self):
        r = LOWRANK_RANK
        return [("V1", (r, self.n_out)), ("V2", (r, self.n_in)), ("b", (self.n_out,))]

    def init(self, rng, var):
        r = LOWRANK_RANK
        s = (var / r) ** 0.25
        return {"V1": rng.normal(0.0, s, (r, self.n_out)), "V2": rng.normal(0.0, s, (r, self.n_in))}

    def forward(self, p, x):
        t = x @ p[self.key("V2")].T
        return t @ p[self.key("V1")] + p[self.key("b")], (x, t)

    def backward(self, p, cache, gz):
        x, t = cache
        V1, V2 = p[self.key("V1")], p[self.key("V2")]
        gt = gz @ V1.T
        return gt @ V2, {"V1": t.T @ gz, "V2": gt.T @ x, "b": gz.sum(0)}


class Circulant(Linear):
    """W = first ``n_out`` rows of circ(c), input zero-padded to len(c)."""

    def __init__(self, index, n_in, n_out):
        super().__init__(index, n_in, n_out)
        self.d = max(n_in, n_out)
        self._idx = (np.arange(self.d)[:, None] - np.arange(self.d)[None, :]) % self.d

    def shapes(self):
        return [("c", (self.d,)), ("b", (self.n_out,))]

    def init(self, rng, var):
        return {"c": rng.normal(0.0, np.sqrt(var), self.d)}

    def forward(self, p, x):
        xp = linalg.pad_last(x, self.d)
        C = p[self.key("c")][self._idx]
        return (xp @ C.T)[:, :self.n_out] + p[self.key("b")], xp

    def backward(self, p, xp, gz):
        gv = linalg.pad_last(gz, self.d)
        C = p[self.key("c")][self._idx]
        gC = gv.T @ xp
        gc = np.bincount(self._idx.ravel(), weights=gC.ravel(), minlength=self.d)
        return (gv @ C)[:, :self.n_in], {"c": gc, "b": gz.sum(0)}


LINEAR_TYPES = {"dense": Dense, "hd": HD, "lowrank": LowRank, "circulant": Circulant, "phd": PHD}


def build_layers(spec: ModelSpec) -> list:
    return [LINEAR_TYPES[ls.structure](i, n_in, n_out)
            for i, (ls, (n_in, n_out)) in enumerate(zip(spec.all_layers, spec.dims()))]


def param_layout(spec: ModelSpec):
    return [(lin.key(name), shape) for lin in build_layers(spec) for name, shape in lin.shapes()]


def init_model(spec: ModelSpec, seed: int | None = None) -> ParamStore:
    """Random-Fourier-feature style init for cosine layers, Glorot otherwise."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    params = ParamStore()
    for lin, ls in zip(build_layers(spec), spec.all_layers):
        if ls.activation == "cosine":
            tensors = lin.init(rng, 1.0 / lin.n_in)
            tensors["b"] = rng.uniform(0.0, 2 * np.pi, lin.n_out)
        else:
            tensors = lin.init(rng, 2.0 / (lin.n_in + lin.n_out))
            tensors["b"] = np.zeros(lin.n_out)
        for name, shape in lin.shapes():
            params[lin.key(name)] = np.asarray(tensors[name], dtype=np.float64).reshape(shape)
    return params


# forward / backward ----------------------------------------------------------


@dataclass
class ForwardCache:
    layers: list = field(default_factory=list)  # (linear cache, pre-activation)


def forward_plain(spec: ModelSpec, params: ParamStore, X, return_cache: bool = False):
    h = np.asarray(X, dtype=np.float64)
    if h.ndim == 1:
        h = h[None, :]
    cache = ForwardCache()
    for lin, ls in zip(build_layers(spec), spec.all_layers):
        z, lc = lin.forward(params, h)
        h = activate(ls.activation, z)
        cache.layers.append((lc, z))
    return (h, cache) if return_cache else h


def hidden_outputs(spec: ModelSpec, params: ParamStore, X) -> list:
    """Post-activation output of every layer (head included)."""
    h = np.atleast_2d(np.asarray(X, dtype=np.float64))
    outs = []
    for lin, ls in zip(build_layers(spec), spec.all_layers):
        h = activate(ls.activation, lin.forward(params, h)[0])
        outs.append(h)
    return outs


def log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    s = logits - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def loss_softmax_ce(logits, labels) -> float:
    labels = np.asarray(labels)
    return float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())


def backward(spec: ModelSpec, params: ParamStore, cache: ForwardCache, logits, labels) -> ParamStore:
    """Gradients of the mean softmax cross-entropy w.r.t. every trainable tensor."""
    n = len(labels)
    g = np.exp(log_softmax(logits))
    g[np.arange(n), labels] -= 1.0
    g /= n
    grads = ParamStore()
    layers = build_layers(spec)
    for lin, ls, (lc, z) in reversed(list(zip(layers, spec.all_layers, cache.layers))):
        gz = g * activation_grad(ls.activation, z)
        g, tensors = lin.backward(params, lc, gz)
        for name, val in tensors.items():
            grads[lin.key(name)] = val
    return ParamStore((k, grads[k]) for k in params if k in grads)


def loss_and_grads(spec: ModelSpec, params: ParamStore, X, y):
    logits, cache = forward_plain(spec, params, X, return_cache=True)
    return loss_softmax_ce(logits, y), backward(spec, params, cache, logits, y)


def predict(spec: ModelSpec, params: ParamStore, X, batch_size: int = 2048) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.concatenate([forward_plain(spec, params, X[i:i + batch_size]).argmax(1)
                           for i in range(0, len(X), batch_size)]) if len(X) else np.zeros(0, int)
