"""JSON instance files: a top-level ``kind`` plus kind-specific fields.

Kinds and their fields (matrices are row-major nested lists):

* ``discrete-gbll``: ``q_x``, ``channels``, ``weights``; optional ``nus``, ``mu``
* ``gaussian``: ``sigma``, ``maps``, ``weights``; optional ``noise`` (``null`` = noiseless)
* ``cr-scheme``: ``source``, ``alphabet_sizes``, ``n``, ``K_size``, ``W_sizes``,
  ``weights`` and either ``construction`` (``{"type": "random-binning", "seed": s}``)
  or explicit ``encoder``/``decoders`` tables
* ``bounds-query``: ``query`` in ``omni``, ``one-comm``, ``tv-renyi`` plus its arguments

Every document may carry a free-form ``metadata`` object.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .crsim import CrScheme, random_binning_scheme
from .gaussian import GaussianInstance
from .measures import Channel, FiniteMeasure, GbllInstance, push_forward

log = logging.getLogger(__name__)

KINDS = ("discrete-gbll", "gaussian", "cr-scheme", "bounds-query")
VALID_TOL = 1e-9
RENORM_TOL = 1e-6


class SchemaError(ValueError):
    pass


@dataclass
class InstanceFile:
    kind: str
    payload: dict
    metadata: dict = field(default_factory=dict)


def _prob_vector(v, where: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a list of numbers")
    if a.ndim != 1 or a.size == 0:
        raise SchemaError(f"{where}: expected a nonempty list of numbers")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise SchemaError(f"{where}: entries must be finite and nonnegative")
    drift = abs(a.sum() - 1.0)
    if drift >= RENORM_TOL:
        raise SchemaError(f"{where}: sums to {a.sum():.12g}, not 1")
    if drift > VALID_TOL:
        log.warning("%s: renormalizing (drift %.3g)", where, drift)
    return a / a.sum()


def _stochastic(v, where: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a matrix")
    if a.ndim != 2:
        raise SchemaError(f"{where}: expected a matrix")
    return np.array([_prob_vector(r, f"{where}[{i}]") for i, r in enumerate(a)])


def _matrix(v, where: str) -> np.ndarray:
    try:
        a = np.atleast_2d(np.asarray(v, dtype=float))
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a matrix")
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise SchemaError(f"{where}: expected a finite matrix")
    return a


def _need(d: dict, key: str, kind: str):
    if key not in d:
        raise SchemaError(f"{kind}: missing field '{key}'")
    return d[key]


def _weights(v, where="weights") -> tuple:
    try:
        w = tuple(float(c) for c in v)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a list of numbers")
    if not w or any(not (c > 0 and np.isfinite(c)) for c in w):
        raise SchemaError(f"{where}: weights must be positive and finite")
    return w


# ---------------------------------------------------------------------- parse

def parse(doc: dict) -> InstanceFile:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"kind: expected one of {KINDS}, got {kind!r}")
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError("metadata: expected an object")
    payload = {k: v for k, v in doc.items() if k not in ("kind", "metadata")}
    inst = InstanceFile(kind, payload, meta)
    build(inst)        # validate eagerly
    return inst


def load(path) -> InstanceFile:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno} column {exc.colno}: {exc.msg}")
    return parse(doc)


def to_document(inst: InstanceFile) -> dict:
    doc = {"kind": inst.kind}
    doc.update(inst.payload)
    if inst.metadata:
        doc["metadata"] = inst.metadata
    return doc


def dump(inst: InstanceFile, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_document(inst), fh, indent=2)
        fh.write("\n")


def build(inst: InstanceFile):
    """Typed object for an instance file (validates every field)."""
    p, kind = inst.payload, inst.kind
    try:
        if kind == "discrete-gbll":
            return _build_gbll(p)
        if kind == "gaussian":
            return _build_gaussian(p)
        if kind == "cr-scheme":
            return _build_scheme(p)
        return _build_query(p)
    except SchemaError:
        raise
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{kind}: {exc}")


def _build_gbll(p) -> GbllInstance:
    q = FiniteMeasure(_prob_vector(_need(p, "q_x", "discrete-gbll"), "q_x"))
    chs = _need(p, "channels", "discrete-gbll")
    if not isinstance(chs, list) or not chs:
        raise SchemaError("channels: expected a nonempty list of matrices")
    channels = tuple(Channel(_stochastic(c, f"channels[{j}]")) for j, c in enumerate(chs))
    w = _weights(_need(p, "weights", "discrete-gbll"))
    if "nus" in p and p["nus"] is not None:
        nus = []
        for j, v in enumerate(p["nus"]):
            a = np.asarray(v, dtype=float)
            if a.ndim != 1 or np.any(a < 0) or not np.all(np.isfinite(a)):
                raise SchemaError(f"nus[{j}]: expected nonnegative finite weights")
            nus.append(FiniteMeasure(a))
    else:
        nus = [push_forward(q, ch) for ch in channels]
    mu = q
    if "mu" in p and p["mu"] is not None:
        a = np.asarray(p["mu"], dtype=float)
        if a.ndim != 1 or np.any(a < 0):
            raise SchemaError("mu: expected nonnegative weights")
        mu = FiniteMeasure(a)
    if len(nus) != len(channels) or len(w) != len(channels):
        raise SchemaError("channels, nus and weights must have equal length")
    return GbllInstance(mu, channels, tuple(nus), w), q


def _build_gaussian(p) -> GaussianInstance:
    sigma = _matrix(_need(p, "sigma", "gaussian"), "sigma")
    maps = [_matrix(a, f"maps[{j}]") for j, a in enumerate(_need(p, "maps", "gaussian"))]
    noise = p.get("noise")
    if noise is not None:
        noise = [None if n is None else _matrix(n, f"noise[{j}]") for j, n in enumerate(noise)]
    return GaussianInstance(sigma, tuple(maps), noise, _weights(_need(p, "weights", "gaussian")))


def _build_scheme(p) -> CrScheme:
    src = FiniteMeasure(_prob_vector(_need(p, "source", "cr-scheme"), "source"))
    sizes = tuple(int(s) for s in _need(p, "alphabet_sizes", "cr-scheme"))
    n = int(_need(p, "n", "cr-scheme"))
    K = int(_need(p, "K_size", "cr-scheme"))
    W = tuple(int(w) for w in _need(p, "W_sizes", "cr-scheme"))
    _weights(_need(p, "weights", "cr-scheme"))
    if "construction" in p:
        con = p["construction"]
        if not isinstance(con, dict) or con.get("type") != "random-binning":
            raise SchemaError("construction: only {'type': 'random-binning'} is supported")
        return random_binning_scheme(src, sizes, n, K, W, seed=int(con.get("seed", 0)))
    enc = np.asarray(_need(p, "encoder", "cr-scheme"), dtype=float)
    decs = tuple(np.asarray(d, dtype=float) for d in _need(p, "decoders", "cr-scheme"))
    return CrScheme(n, src, sizes, K, W, enc, decs)


QUERIES = {
    "omni": ("K_size", "W_sizes", "weights", "d", "delta"),
    "one-comm": ("delta", "delta1", "delta3", "delta4", "eps", "eps_prime", "c", "d",
                 "K_size", "W_size"),
    "tv-renyi": ("M", "alpha", "renyi_value"),
}


def _build_query(p) -> dict:
    q = _need(p, "query", "bounds-query")
    if q not in QUERIES:
        raise SchemaError(f"query: expected one of {tuple(QUERIES)}")
    for key in QUERIES[q]:
        _need(p, key, f"bounds-query/{q}")
    return p


# ---------------------------------------------------------------------- demos

def demo_names() -> list:
    files = resources.files("smoothbll").joinpath("demos")
    return sorted(f.name[:-5] for f in files.iterdir() if f.name.endswith(".json"))


def demo_path(name: str):
    return resources.files("smoothbll").joinpath("demos", f"{name}.json")


def load_demo(name: str) -> InstanceFile:
    with resources.as_file(demo_path(name)) as path:
        return load(path)


def semantically_equal(a: InstanceFile, b: InstanceFile) -> bool:
    """Same kind, metadata and numerically identical payload."""
    if a.kind != b.kind or a.metadata != b.metadata or set(a.payload) != set(b.payload):
        return False
    for k in a.payload:
        x, y = a.payload[k], b.payload[k]
        if isinstance(x, (list, int, float)) and isinstance(y, (list, int, float)):
            try:
                if not np.array_equal(np.asarray(x, dtype=float), np.asarray(y, dtype=float)):
                    return False
                continue
            except (TypeError, ValueError):
                pass
        if x != y:
            return False
    return True
