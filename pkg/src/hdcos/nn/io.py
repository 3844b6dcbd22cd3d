"""Model files and secret-shared model bundles.

A model file is ``b"HDMD"``, a little-endian u32 header length, a UTF-8 JSON
header ``{version, spec, f_bits, layout}`` and then every parameter as
little-endian float64 in layout order.

A shared model is a pair of share files (one per party, see
:mod:`hdcos.sharing`) holding the fixed-point encoding of the flattened
parameters, plus a public JSON file with the model spec and layout.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..fixed_ring import DEFAULT_CFG, FixedCfg, encode
from ..sharing import FormatError, Share, read_share_file, split, write_share_file
from .model import ModelSpec, ParamStore, param_layout

MODEL_MAGIC = b"HDMD"
MODEL_VERSION = 1


def save_model(spec: ModelSpec, params: ParamStore, path, f_bits: int = DEFAULT_CFG.f) -> int:
    """Write ``params`` in layout order; returns the file size in bytes."""
    layout = param_layout(spec)
    if [(k, tuple(s)) for k, s in layout] != params.layout():
        raise ValueError("parameters do not match the model spec's layout")
    header = json.dumps({"version": MODEL_VERSION, "spec": spec.to_dict(), "f_bits": f_bits,
                         "layout": [[k, list(s)] for k, s in layout]}).encode()
    body = params.flatten().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<I", len(header)) + header + body)
    return 8 + len(header) + len(body)


def read_model_header(raw: bytes, path="<bytes>") -> tuple[dict, int]:
    if len(raw) < 8 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    (n,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + n:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8:8 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc
    if header.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: model format version {header.get('version')!r}, "
                          f"this build reads {MODEL_VERSION}")
    return header, 8 + n


def load_model(path) -> tuple[ModelSpec, ParamStore, int]:
    """Returns ``(spec, params, f_bits)``."""
    raw = Path(path).read_bytes()
    header, off = read_model_header(raw, path)
    layout = [(k, tuple(s)) for k, s in header["layout"]]
    expected = 8 * sum(int(np.prod(s, dtype=np.int64)) for _, s in layout)
    if len(raw) - off != expected:
        raise FormatError(f"{path}: expected {expected} parameter bytes, found {len(raw) - off}")
    flat = np.frombuffer(raw, dtype="<f8", offset=off).astype(np.float64)
    return ModelSpec.from_dict(header["spec"]), ParamStore.unflatten(flat, layout), header["f_bits"]


def share_model(spec: ModelSpec, params: ParamStore, out_dir, rng, cfg: FixedCfg = DEFAULT_CFG,
                stem: str = "model") -> dict:
    """Write ``{stem}.p0.hdsh``, ``{stem}.p1.hdsh`` and ``{stem}.public.json``.

    Returns the written paths keyed by ``"p0"``, ``"p1"`` and ``"public"``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s0, s1 = split(encode(params.flatten(), cfg), rng, cfg)
    paths = {"p0": out_dir / f"{stem}.p0.hdsh", "p1": out_dir / f"{stem}.p1.hdsh",
             "public": out_dir / f"{stem}.public.json"}
    write_share_file(paths["p0"], s0)
    write_share_file(paths["p1"], s1)
    public = {"version": MODEL_VERSION, "spec": spec.to_dict(), "f_bits": cfg.f,
              "layout": [[k, list(s)] for k, s in params.layout()]}
    paths["public"].write_text(json.dumps(public, indent=2))
    return paths


def read_public_model(path) -> tuple[ModelSpec, list, int]:
    meta = json.loads(Path(path).read_text())
    if meta.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: model format version {meta.get('version')!r}, this build reads {MODEL_VERSION}")
    return ModelSpec.from_dict(meta["spec"]), [(k, tuple(s)) for k, s in meta["layout"]], meta["f_bits"]


def unflatten_shares(share: Share, layout) -> dict:
    """Split one party's flat parameter share into per-tensor shares."""
    out, pos = {}, 0
    for name, shape in layout:
        n = int(np.prod(shape, dtype=np.int64))
        out[name] = share.with_val(share.val[pos:pos + n].reshape(shape))
        pos += n
    if pos != share.val.size:
        raise FormatError(f"layout covers {pos} values but the share file holds {share.val.size}")
    return out


def load_model_share(share_path, public_path) -> tuple[ModelSpec, dict, Share]:
    """One party's view of a shared model: ``(spec, per-tensor shares, flat share)``."""
    spec, layout, f_bits = read_public_model(public_path)
    flat = read_share_file(share_path)
    if flat.cfg.f != f_bits:
        raise FormatError(f"{share_path}: share has f={flat.cfg.f} but the model was shared with f={f_bits}")
    return spec, unflatten_shares(flat, layout), flat
