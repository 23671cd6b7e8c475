"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 domain or data error, 3 numerical
failure.  Every successful command writes its outputs under the ``--out``
prefix together with ``<prefix>.manifest.json``; a failed command leaves
``<prefix>.failed`` instead.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import warnings

import numpy as np

from . import cexp as cx
from .data import load_csv, points_to_csv, project_to_sphere, sample_disk, sample_sphere, standardize
from .errors import ConfigError, InsufficientDataError, NtkLapError
from .kernels import kernel_from_json
from .ntk import NtkConfig
from .regression import krr_fit, learn_time_table, training_error
from .runio import OutputSet, RunManifest
from .spectral.sphere import decay_slope, harmonic_coefficients

EXIT_USAGE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    """``"2,4,8"`` or an inclusive range ``"2..10"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None


def _kernel_arg(text):
    try:
        return kernel_from_json(text)
    except NtkLapError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ntklap", description="Spectra and fits of NTK and exponential kernels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrum", help="harmonic eigenvalues of a zonal kernel")
    s.add_argument("--kernel", type=_kernel_arg, required=True, help="kernel spec as JSON")
    s.add_argument("--dim", type=int, required=True, help="ambient dimension d (sphere S^{d-1})")
    s.add_argument("--kmax", type=int, default=100)
    s.add_argument("--quad", type=int, default=None, help="quadrature nodes")
    s.add_argument("--precision", type=int, default=None, help="decimal digits for mpmath evaluation")
    s.add_argument("--slope-range", type=int, nargs=2, metavar=("KLO", "KHI"), default=None)
    s.add_argument("--out", required=True, help="output prefix")

    f = sub.add_parser("fit", help="fit an exponential kernel to an NTK")
    f.add_argument("--target-ntk", type=_kernel_arg, default=None,
                   help="target kernel JSON (default: 2-layer NTK with beta=1)")
    f.add_argument("--family", choices=("Laplace", "Gaussian", "GammaExp"), default="Laplace")
    f.add_argument("--affine", action="store_true", help="also fit a + b k")
    f.add_argument("--depths", type=_int_list, default=None, help="e.g. 2..10 for the width-vs-depth table")
    f.add_argument("--beta", type=float, default=0.0, help="NTK bias scale for --depths")
    f.add_argument("--grid", type=int, default=200, help="number of cosines")
    f.add_argument("--images", default=None, help="draw cosines from image patches instead")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)

    k = sub.add_parser("krr", help="kernel ridge regression on a CSV dataset")
    k.add_argument("--kernel", type=_kernel_arg, required=True)
    k.add_argument("--data", required=True)
    k.add_argument("--target-column", default="-1")
    k.add_argument("--ridge", type=float, default=0.0)
    k.add_argument("--standardize", action="store_true")
    k.add_argument("--sphere", action="store_true", help="project rows to the unit sphere")
    k.add_argument("--out", required=True)

    g = sub.add_parser("gdsim", help="gradient-descent learning times per frequency")
    g.add_argument("--kernel", type=_kernel_arg, required=True)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--freqs", type=_int_list, default=[2, 4, 8])
    g.add_argument("--n", type=int, default=256)
    g.add_argument("--step", type=float, default=None)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--max-iter", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    c = sub.add_parser("cexp", help="C-Exp Gram matrix over images")
    c.add_argument("--config", required=True, help="C-Exp config JSON")
    c.add_argument("--images", required=True)
    c.add_argument("--sidecar", default=None)
    c.add_argument("--normalize", action="store_true")
    c.add_argument("--out", required=True)

    n = sub.add_parser("gen", help="sample points on a sphere or the disk")
    m = n.add_mutually_exclusive_group(required=True)
    m.add_argument("--sphere", action="store_true")
    m.add_argument("--disk", action="store_true")
    n.add_argument("--dim", type=int, default=None)
    n.add_argument("--n", type=int, required=True)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    return p


def _validate(a):
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    if a.command == "spectrum":
        need(a.dim >= 2, "--dim must be at least 2")
        need(a.kmax >= 0, "--kmax must be nonnegative")
        need(a.quad is None or a.quad >= 4 * a.kmax, "--quad must be at least 4 * kmax")
        if a.slope_range:
            lo, hi = a.slope_range
            need(1 <= lo <= hi <= a.kmax, "--slope-range must satisfy 1 <= KLO <= KHI <= kmax")
    elif a.command == "fit":
        need(a.grid >= 5, "--grid must be at least 5")
        need(not (a.depths and a.target_ntk), "--depths and --target-ntk are exclusive")
        need(a.depths is None or (a.depths and min(a.depths) >= 2), "depths must be >= 2")
        need(a.depths is None or a.family == "Laplace", "--depths fits the Laplace family only")
        need(a.beta >= 0, "--beta must be nonnegative")
    elif a.command == "krr":
        need(a.ridge >= 0, "--ridge must be nonnegative")
    elif a.command == "gdsim":
        need(a.dim >= 2 and a.n >= 4, "--dim >= 2 and --n >= 4 required")
        need(a.freqs and max(a.freqs) <= a.n / 4 and min(a.freqs) >= 0,
             "frequencies must lie in [0, n/4]")
        need(a.tol > 0 and a.max_iter >= 1, "--tol and --max-iter must be positive")
        need(a.step is None or a.step > 0, "--step must be positive")
    elif a.command == "cexp":
        try:
            a.config = cx.CExpConfig.from_dict(json.loads(a.config))
        except (json.JSONDecodeError, NtkLapError, TypeError) as exc:
            raise UsageError(f"bad --config: {exc}") from None
    elif a.command == "gen":
        need(a.n >= 1, "--n must be positive")
        if a.disk:
            need(a.dim in (None, 2), "--disk samples are two-dimensional")
        else:
            need(a.dim is not None and a.dim >= 2, "--sphere requires --dim >= 2")


def _csv(write, *args):
    buf = io.StringIO()
    write(*args, buf)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_spectrum(a, out: OutputSet):
    spec = harmonic_coefficients(a.kernel, a.dim, a.kmax, a.quad, a.precision)
    lo, hi = a.slope_range or (min(10, a.kmax), min(100, a.kmax))
    summary = {"dim": a.dim, "kmax": a.kmax, "lambda0": float(spec.eigenvalues[0]),
               "trace": float(spec.partial_traces()[-1]), "slope_range": [lo, hi],
               "nonzero": int(np.count_nonzero(spec.eigenvalues))}
    try:
        slope, r2 = decay_slope(spec, max(lo, 1), hi)
        summary.update(slope=slope, r_squared=r2)
    except (InsufficientDataError, ConfigError) as exc:
        summary.update(slope=None, r_squared=None, slope_note=str(exc))
    out.add(".csv", _csv(lambda fh: spec.write_csv(fh)))
    out.add(".json", _json(summary))
    return summary


def _fit_grid(a):
    if a.images:
        return cx.patch_cosines(cx.load_images(a.images), n_pairs=a.grid, seed=a.seed)
    return cx.default_cosines(a.grid)


def cmd_fit(a, out: OutputSet):
    u = _fit_grid(a)
    if a.depths:
        rows = cx.laplace_width_vs_depth(a.depths, u, affine=a.affine, beta=a.beta, seed=a.seed)
        lines = ["L,c,a,b,objective"]
        lines += [f"{L},{f.params['c']!r},{f.params['a']!r},{f.params['b']!r},{f.objective!r}" for L, f in rows]
        out.add(".csv", "\n".join(lines) + "\n")
        return {"depths": a.depths, "c": [f.params["c"] for _, f in rows]}
    target = a.target_ntk or NtkConfig(layers=2, beta=1.0)
    fit = cx.fit_kernel_to_ntk(a.family, target, u, affine=a.affine, seed=a.seed)
    out.add(".json", _json(fit.to_dict()))
    return fit.to_dict()


def cmd_krr(a, out: OutputSet):
    ds = load_csv(a.data, target_column=a.target_column)
    if ds.y is None:
        raise ConfigError("dataset has no target column")
    if a.standardize:
        ds = standardize(ds)
    if a.sphere:
        ds = project_to_sphere(ds)
    model = krr_fit(a.kernel, ds.X, ds.y, a.ridge)
    summary = {"n": ds.n, "d": ds.d, "ridge": a.ridge, "training_mse": training_error(model, ds.y),
               "rejected_rows": ds.meta.get("rejected_rows", 0), **model.meta}
    out.add(".model.json", model.to_json() + "\n")
    out.add(".json", _json(summary))
    return summary


def cmd_gdsim(a, out: OutputSet):
    table = learn_time_table(a.kernel, a.dim, a.freqs, n=a.n, step=a.step, tol=a.tol,
                             max_iter=a.max_iter, seed=a.seed)
    out.add(".csv", _csv(lambda fh: table.write_csv(fh)))
    summary = {"step": table.step, "max_iter": table.max_iter,
               "iterations": dict(zip(map(str, table.frequencies), table.iterations))}
    out.add(".json", _json(summary))
    return summary


def cmd_cexp(a, out: OutputSet):
    imgs = cx.load_images(a.images, a.sidecar)
    G = cx.cexp_gram(a.config, list(imgs), normalize=a.normalize)
    buf = io.StringIO()
    np.savetxt(buf, G.values, delimiter=",", fmt="%.17g")
    out.add(".csv", buf.getvalue())
    summary = {"n": G.n, "symmetric": G.is_symmetric(), "min_eig": G.min_eig(), "max_eig": G.max_eig(),
               "psd": G.is_psd()}
    out.add(".json", _json(summary))
    return summary


def cmd_gen(a, out: OutputSet):
    P = sample_disk(a.n, a.seed) if a.disk else sample_sphere(a.dim, a.n, a.seed)
    out.add(".csv", _csv(lambda fh: points_to_csv(P, fh)))
    return {"n": a.n}


COMMANDS = {"spectrum": cmd_spectrum, "fit": cmd_fit, "krr": cmd_krr, "gdsim": cmd_gdsim,
            "cexp": cmd_cexp, "gen": cmd_gen}


def _manifest_args(a) -> dict:
    out = {}
    for k, v in vars(a).items():
        if hasattr(v, "to_dict"):
            v = v.to_dict()
        out[k] = v
    return json.loads(json.dumps(out, default=str))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ntklap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = OutputSet(args.out)
    manifest = RunManifest(args.command, _manifest_args(args), getattr(args, "seed", None))
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = COMMANDS[args.command](args, out)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        out.commit(manifest)
    except NtkLapError as exc:
        out.fail(exc)
        print(f"ntklap {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
