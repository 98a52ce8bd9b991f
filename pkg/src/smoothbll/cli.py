"""Command-line front end.  Every command writes CSV to stdout.

Exit codes: 0 ok, 2 schema or usage error, 3 resource cap, 4 unsound certificate.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

import numpy as np

from . import bounds, crsim, envelope, gaussian, gbll, instances, smoothing
from .measures import channel_power, measure_power, push_forward, tensor_power

EXIT_OK, EXIT_SCHEMA, EXIT_CAP, EXIT_UNSOUND = 0, 2, 3, 4


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_SCHEMA)


class _Out:
    """CSV writer with an optional nats-to-bits conversion for information values."""

    def __init__(self, bits: bool, header):
        self.scale = 1.0 / math.log(2.0) if bits else 1.0
        self.w = csv.writer(sys.stdout, lineterminator="\n")
        self.w.writerow(header)

    def info(self, x):
        return _fmt(x * self.scale if np.isfinite(x) else x)

    def row(self, *vals):
        self.w.writerow([_fmt(v) for v in vals])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        if v == math.inf:
            return "inf"
        if v == -math.inf:
            return "-inf"
        return f"{float(v):.12g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.ravel(v))
    return str(v)


def _load(path, kind):
    inst = instances.load(path)
    if inst.kind != kind:
        raise instances.SchemaError(f"kind: expected {kind!r}, got {inst.kind!r}")
    return inst, instances.build(inst)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _Usage(f"expected comma-separated numbers, got {text!r}")


# ------------------------------------------------------------------- commands

def cmd_gbll(args) -> int:
    _, (inst, q) = _load(args.file, "discrete-gbll")
    n = args.tensor_n
    if q.alphabet_size ** n > smoothing.ENUMERATION_CAP:
        raise smoothing.EnumerationCapError("tensor power exceeds the enumeration cap")
    work = tensor_power(inst, n) if n > 1 else inst
    qn = measure_power(q, n) if n > 1 else q
    opts = gbll.OptimizerOptions(restarts=args.restarts, seed=args.seed)
    res = gbll.gbll_constant(work, opts)
    out = _Out(args.bits, ["quantity", "value"])
    out.row("n", n)
    out.row("d_per_letter", out.info(res.constant_d / n))
    ds, dec = envelope.dstar(q, inst.channels, inst.weights, seed=args.seed)
    out.row("dstar", out.info(ds))
    out.row("d_ge_dstar", res.constant_d / n >= ds - 1e-9)
    out.row("diverged", res.diverged)
    out.row("possibly_unattained", res.possibly_unattained)
    if res.note:
        out.row("note", res.note)
    out.row("maximizer_P", res.maximizer_P.weights)
    out.row("dstar_u_weights", dec.u_weights)
    if np.isfinite(res.constant_d) and work.mu.alphabet_size <= 64:
        _, gap = gbll.worst_case_functions(work, res.constant_d,
                                           gbll.OptimizerOptions(restarts=4, seed=args.seed))
        out.row("duality_gap_at_d", gap)
    if args.delta is not None:
        nus = work.nus
        sm = smoothing.smooth_constant(qn, work.channels, nus, inst.weights, args.delta,
                                       smoothing.SmoothOptions(
                                           inner=gbll.OptimizerOptions(restarts=8, seed=args.seed)))
        out.row("delta", args.delta)
        out.row("d_delta_per_letter", out.info(sm.value / n))
        out.row("e1_used", sm.e1_used)
    return EXIT_OK


def cmd_dstar(args) -> int:
    _, (inst, q) = _load(args.file, "discrete-gbll")
    out = _Out(args.bits, ["quantity", "value"])
    ds, dec = envelope.dstar(q, inst.channels, inst.weights, u_cap=args.u_cap, seed=args.seed)
    out.row("dstar", out.info(ds))
    for u, (w, comp) in enumerate(zip(dec.u_weights, dec.components)):
        out.row(f"component_{u}", [w] + list(comp.weights))
    if q.alphabet_size <= 3:
        out.row("envelope_lp", out.info(envelope.envelope_at(q, inst.channels, inst.weights)))
    return EXIT_OK


def cmd_smooth(args) -> int:
    _, (inst, q) = _load(args.file, "discrete-gbll")
    if q.alphabet_size ** args.n_max > smoothing.ENUMERATION_CAP:
        raise smoothing.EnumerationCapError("n_max exceeds the enumeration cap")
    opts = smoothing.SmoothOptions(inner=gbll.OptimizerOptions(restarts=8, seed=args.seed))
    curve = smoothing.smooth_rate_curve(q, inst.channels, inst.weights, args.delta,
                                        args.n_max, nus=inst.nus, opts=opts)
    out = _Out(args.bits, ["n", "smooth_rate", "d", "dstar", "slack"])
    for (n, v), (_, s) in zip(curve.points, curve.slack):
        out.row(n, out.info(v), out.info(curve.d), out.info(curve.dstar), out.info(s))
    return EXIT_OK


def _parse_grid(text: str, m: int) -> list:
    if text is None or not text.strip():
        return []
    grid = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        c = _floats(chunk)
        if len(c) == 1 and m > 1:
            c = c * m
        if len(c) != m:
            raise _Usage(f"grid point {chunk!r} needs {m} weights")
        grid.append(tuple(c))
    return grid


def cmd_region(args) -> int:
    _, (inst, q) = _load(args.file, "discrete-gbll")
    m = inst.m
    grid = _parse_grid(args.c_grid, m)
    rj = _floats(args.rj) if args.rj else [0.0] * m
    if len(rj) != m:
        raise _Usage(f"--rj needs {m} rates")
    trace = bounds.region_trace(lambda c: envelope.dstar(q, inst.channels, c, seed=args.seed)[0],
                                grid, rj)
    out = _Out(args.bits, [f"c_{j + 1}" for j in range(m)] + ["dstar", "R_max"])
    for c, ds, r in trace.rows:
        out.row(*c, out.info(ds), out.info(r))
    for c, why in trace.skipped:
        logging.warning("skipped grid point %s: %s", c, why)
    return EXIT_OK


def cmd_gaussian(args) -> int:
    _, g = _load(args.file, "gaussian")
    out = _Out(args.bits, ["quantity", "value"])
    F = gaussian.gaussian_F(g.sigma, g, seed=args.seed)
    out.row("F_sigma", out.info(F.value))
    if F.diverged_reason:
        out.row("diverged_reason", F.diverged_reason)
    out.row("C", out.info(gaussian.gaussian_C(g)))
    out.row("dstar", out.info(gaussian.gaussian_dstar(g)))
    if all(not np.any(n) for n in g.noise):
        out.row("V", gaussian.variance_V(g) * out.scale ** 2)
    return EXIT_OK


_D_CACHE: dict = {}


def scheme_d_value(scheme: crsim.CrScheme, weights, delta: float, seed: int = 0) -> float:
    """A valid ``d`` for the scheme's ``n``-letter source: ``n d(Q)`` or a smoothed constant."""
    from .measures import GbllInstance, coordinate_channels
    key = (scheme.source, scheme.alphabet_sizes, scheme.n, tuple(weights), float(delta), seed)
    if key in _D_CACHE:
        return _D_CACHE[key]
    chs = coordinate_channels(scheme.alphabet_sizes)
    if delta == 0:
        r = gbll.gbll_constant(GbllInstance.matched(scheme.source, chs, weights),
                               gbll.OptimizerOptions(seed=seed))
        val = scheme.n * r.constant_d
    else:
        n = scheme.n
        qn = measure_power(scheme.source, n)
        chn = [channel_power(ch, n) for ch in chs]
        nun = [measure_power(push_forward(scheme.source, ch), n) for ch in chs]
        val = smoothing.smooth_constant(
            qn, chn, nun, weights, delta,
            smoothing.SmoothOptions(inner=gbll.OptimizerOptions(restarts=16, seed=seed))).value
    _D_CACHE[key] = val
    return val


def cmd_certify(args) -> int:
    inst, scheme = _load(args.file, "cr-scheme")
    weights = _floats(args.weights) if args.weights else list(inst.payload["weights"])
    if len(weights) != scheme.m or any(c <= 0 for c in weights):
        raise _Usage(f"--weights needs {scheme.m} positive values")
    ev = crsim.evaluate_scheme(scheme)
    out = _Out(args.bits, ["delta", "verdict", "bound", "actual_tv", "d_used", "vacuous"])
    deltas = [0.0] + ([args.delta] if args.delta else [])
    worst = EXIT_OK
    for delta in deltas:
        d = scheme_d_value(scheme, weights, delta, args.seed)
        cert = crsim.converse_certificate(scheme, weights, d, delta, ev)
        out.row(delta, cert.verdict, cert.bound, cert.actual_tv, out.info(d),
                "vacuous" if cert.vacuous else "")
        if not cert.sound:
            worst = EXIT_UNSOUND
    return worst


def cmd_simulate(args) -> int:
    _, scheme = _load(args.file, "cr-scheme")
    ev = crsim.evaluate_scheme(scheme, method=args.method)
    out = _Out(args.bits, ["quantity", "value"])
    rates = crsim.log_sizes(scheme)
    out.row("R", out.info(rates[0]))
    for j, r in enumerate(rates[1:]):
        out.row(f"R_{j + 1}", out.info(r))
    out.row("p_agree", ev.p_agree)
    out.row("p_agree_terminals", ev.p_agree_terminals)
    out.row("tv_to_ideal", ev.tv_to_ideal)
    out.row("delta1", ev.delta1)
    out.row("delta2", ev.delta2)
    return EXIT_OK


def cmd_second_order(args) -> int:
    _, g = _load(args.file, "gaussian")
    if args.samples < 1:
        raise _Usage("--samples must be >= 1")
    if not (0 < args.d1 < 1 and 0 < args.d2 < 1):
        raise _Usage("--d1 and --d2 must lie in (0, 1)")
    rep = bounds.second_order_bound(g, args.d1, args.d2, args.samples, seed=args.seed,
                                    dim=args.dim)
    out = _Out(False, ["quantity", "value"])
    out.row("V", rep.V)
    out.row("wigner_cdf", rep.cdf)
    out.row("wigner_cdf_stderr", rep.cdf_stderr)
    out.row("gaussian_tail", rep.tail)
    out.row("bound", rep.bound)
    out.row("bound_clamped", bounds.clamp01(rep.bound))
    return EXIT_OK


def cmd_bounds(args) -> int:
    inst = instances.load(args.file)
    if inst.kind != "bounds-query":
        raise instances.SchemaError(f"kind: expected 'bounds-query', got {inst.kind!r}")
    p = inst.payload
    if p["query"] == "omni":
        v = bounds.omni_bound(bounds.SchemeSizes(p["K_size"], p["W_sizes"]), p["weights"],
                              p["d"], p["delta"])
    elif p["query"] == "one-comm":
        v = bounds.one_comm_bound(p["delta"], p["delta1"], p["delta3"], p["delta4"], p["eps"],
                                  p["eps_prime"], p["c"], p["d"],
                                  bounds.SchemeSizes(p["K_size"], [p["W_size"]]))
    else:
        v = bounds.tv_renyi_bound(p["M"], p["alpha"], p["renyi_value"])
    out = _Out(False, ["query", "bound", "bound_clamped"])
    out.row(p["query"], v, bounds.clamp01(v))
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Quick oracle checks on the bundled demos."""
    from .measures import FiniteMeasure, bsc
    out = _Out(False, ["check", "result", "detail"])
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok &= bool(passed)
        out.row(name, "PASS" if passed else "FAIL", detail)

    q = FiniteMeasure([0.5, 0.5])
    ds, _ = envelope.dstar(q, [bsc(0.11)], [1.0])
    report("dstar_c1_zero", abs(ds) <= 1e-8, ds)
    _, (inst, q) = _load(instances.demo_path("dsbs"), "discrete-gbll")
    d = gbll.gbll_constant(inst).constant_d
    ds, _ = envelope.dstar(q, inst.channels, inst.weights)
    report("d_ge_dstar", d >= ds - 1e-9, f"{d:.6g} >= {ds:.6g}")
    g = gaussian.GaussianInstance([[1.0]], [[[1.0]]], [[[0.5]]], [1.0])
    F = gaussian.gaussian_F([[2.0]], g).value
    report("gaussian_scalar", abs(F - 0.5 * math.log(2 / 2.5)) <= 1e-8, F)
    p, se = bounds.wigner_lambda_max_cdf(1, 1.0, 20000, 0)
    exact = 1 - bounds.gaussian_tail(1 / math.sqrt(2))
    report("wigner_dim1", abs(p - exact) <= 4 * se, f"{p:.5f} vs {exact:.5f}")
    _, scheme = _load(instances.demo_path("dsbs_scheme"), "cr-scheme")
    cert = crsim.converse_certificate(scheme, (1.5, 1.5),
                                      scheme_d_value(scheme, (1.5, 1.5), 0.0), 0.0)
    report("certificate_demo", cert.sound, cert.verdict)
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="smoothbll", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, file=True):
        p = sub.add_parser(name, help=help_)
        if file:
            p.add_argument("file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--bits", action="store_true", help="report information values in bits")
        p.set_defaults(func=fn)
        return p

    p = add("gbll", cmd_gbll, "best constant, d*, optional smoothed constant")
    p.add_argument("--delta", type=float)
    p.add_argument("--tensor-n", type=int, default=1)
    p.add_argument("--restarts", type=int, default=64)
    p = add("dstar", cmd_dstar, "auxiliary-variable constant d* and its decomposition")
    p.add_argument("--u-cap", type=int)
    p = add("smooth", cmd_smooth, "smoothed constants per letter for n = 1..n_max")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n-max", type=int, default=3)
    p = add("region", cmd_region, "rate-region boundary over a weight grid")
    p.add_argument("--c-grid", default="", help="weight vectors separated by ';'")
    p.add_argument("--rj", default="", help="message rates, comma separated")
    add("gaussian", cmd_gaussian, "Gaussian F(Sigma), C, d* and V")
    p = add("certify", cmd_certify, "certify the omniscient-helper converse on a scheme")
    p.add_argument("--delta", type=float)
    p.add_argument("--weights", default="")
    p = add("simulate", cmd_simulate, "exact metrics of a scheme")
    p.add_argument("--method", choices=("vectorized", "loops"), default="vectorized")
    p = add("second-order", cmd_second_order, "second-order Gaussian bound")
    p.add_argument("--d1", type=float, required=True)
    p.add_argument("--d2", type=float, required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--dim", type=int)
    add("bounds", cmd_bounds, "evaluate a bounds-query file")
    add("selftest", cmd_selftest, "quick oracle checks", file=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "tensor_n", 1) < 1 or getattr(args, "n_max", 1) < 1:
            raise _Usage("blocklengths must be >= 1")
        return args.func(args)
    except (instances.SchemaError, _Usage) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (smoothing.EnumerationCapError, crsim.EnumerationCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
