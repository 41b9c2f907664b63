"""Command line front end: ``fracfact <command> ...``.

Exit codes: 0 success, 1 usage, 2 parse or validation error, 3 numerical
failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import shutil
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .correspond import (
    correspondence_report,
    design_table_matrix,
    format_move,
    is_decomposable,
    primitive_moves_for_decomposable,
)
from .design import (
    alias_table,
    build_design_matrix,
    expand_defining_contrast,
    format_design,
    load_design,
    resolution,
    roman,
)
from .errors import FracfactError, ValidationError
from .fiber import enumerate_fiber, exact_null_distribution, exact_pvalue
from .glm import chisq_upper_tail, deviance, fit, load_data, pearson_stat
from .lattice import format_matrix, kernel_basis
from .model import (
    build_covariate_matrix,
    estimability_report,
    lawrence_lift,
    lift_counts,
    load_model,
)
from .moves import graver_completion, load_basis, verify_all_fibers
from .sampler import ChainConfig, run_chain

EXAMPLES = {
    "wavesolder": ["wavesolder.design", "wavesolder.model", "wavesolder.data", "wavesolder.mar"],
    "windshield": ["windshield.design", "windshield.model", "windshield.data"],
}
OUTPUT_KEYS = ("out", "histogram", "export", "basis_out")
INPUT_KEYS = ("file", "design", "model", "data", "basis", "import_basis")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- shared loading ------------------------------------------------------------


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_setup(args, need_data: bool = False):
    spec = load_design(args.design)
    model = load_model(args.model, hierarchical=not getattr(args, "no_closure", False))
    X0 = build_covariate_matrix(build_design_matrix(spec), model)
    y = n = None
    if need_data:
        y, n = load_data(args.data)
        if len(y) != X0.k:
            raise ValidationError(f"data has {len(y)} runs, design has {X0.k}")
    family = getattr(args, "family", None) or "auto"
    if family == "auto":
        family = "binomial" if n is not None else "poisson"
    if need_data and family == "binomial" and n is None:
        raise ValidationError("binomial family needs 'successes denominator' data lines")
    if need_data and family == "poisson" and n is not None:
        raise ValidationError("count data expected for the poisson family")
    return spec, model, X0, y, n, family


def _bound_matrix(X0, family: str) -> np.ndarray:
    return lawrence_lift(X0.entries.T) if family == "binomial" else X0.entries.T


def _num(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


# -- commands ------------------------------------------------------------------


def cmd_design(args):
    spec = load_design(args.file)
    D = build_design_matrix(spec)
    sub = expand_defining_contrast(spec)
    res = resolution(sub)
    table = alias_table(sub, spec.p, args.max_alias_len)
    result = {
        "p": spec.p,
        "q": spec.q,
        "runs": spec.k,
        "generators": spec.relations(),
        "defining_contrast": [str(w) for w in sorted(sub, key=lambda w: w.sort_key())],
        "resolution": roman(res),
        "aliases": [[str(w) for w in row] for row in table],
        "design_matrix": D.entries.tolist(),
    }
    lines = [format_design(spec).rstrip(), ""]
    names = spec.factor_names
    lines.append("run " + " ".join(f"{c:>2}" for c in names))
    for i, row in enumerate(D.entries, start=1):
        lines.append(f"{i:>3} " + " ".join(f"{'+' if v > 0 else '-':>2}" for v in row))
    lines.append("")
    lines.append("defining contrast subgroup: " + " = ".join(result["defining_contrast"]))
    lines.append(f"resolution: {result['resolution']}")
    lines.append(f"aliases (words of length <= {args.max_alias_len}):")
    lines += ["  " + " = ".join(row) for row in result["aliases"]]
    return result, lines


def cmd_model(args):
    spec, model, X0, *_ = _load_setup(args)
    sub = expand_defining_contrast(spec)
    rep = estimability_report(model, sub, spec.k)
    A = lawrence_lift(X0.entries.T) if args.lift else X0.entries.T
    if args.export:
        Path(args.export).write_text(format_matrix(A))
    result = {
        "terms": [str(t) for t in X0.labels],
        "k": X0.k,
        "nu": X0.nu,
        "df": X0.df,
        "matrix": A.tolist(),
    }
    lines = [f"model {model}", "columns: " + " ".join(result["terms"]), *rep.lines(), "", format_matrix(A).rstrip()]
    return result, lines


def cmd_basis(args):
    spec, model, X0, _, _, family = _load_setup(args)
    A = _bound_matrix(X0, family)
    if args.import_basis:
        ms = load_basis(args.import_basis, A)
    else:
        ms = graver_completion(kernel_basis(A), A, max_elements=args.max_elements, max_degree=args.max_degree)
    if args.basis_out:
        Path(args.basis_out).write_text(ms.to_text())
    result = {"provenance": ms.provenance, "moves": len(ms), "length": ms.length, "fingerprint": ms.fingerprint}
    lines = [f"{ms.provenance} move set: {len(ms)} moves of length {ms.length}"]
    if args.verify_connectivity:
        if args.total is None:
            raise ValidationError("--verify-connectivity needs --total")
        if family == "binomial":
            raise ValidationError("fiber sweeps are available for count data only")
        rep = verify_all_fibers(ms, A, args.total)
        result["connectivity"] = {
            "total": rep.total,
            "fibers": rep.n_fibers,
            "points": rep.n_points,
            "connected": rep.connected,
            "disconnected": len(rep.disconnected),
        }
        lines.append(f"fibers with total <= {rep.total}: {rep.n_fibers} fibers, {rep.n_points} points")
        if rep.connected:
            lines.append("all connected")
        else:
            t, (a, b) = rep.disconnected[0]
            lines.append(f"{len(rep.disconnected)} disconnected; e.g. {a.tolist()} cannot reach {b.tolist()}")
            result["connectivity"]["witness"] = [a.tolist(), b.tolist()]
    if not args.basis_out:
        lines += ["", ms.to_text().rstrip()]
    return result, lines


def _statistic(name: str, mu: np.ndarray):
    if name == "deviance":
        return lambda v: deviance(v, mu)
    return lambda v: pearson_stat(v, mu)


def cmd_enumerate(args):
    spec, model, X0, y, n, family = _load_setup(args, need_data=True)
    res = fit(X0.entries, y, family, n)
    if family == "binomial":
        A = lawrence_lift(X0.entries.T)
        yv = lift_counts(y, n)
        mu = np.concatenate([n * res.mu, n * (1.0 - res.mu)])
        upper = np.concatenate([n, n])
    else:
        A, yv, mu, upper = X0.entries.T, y, res.mu, None
    fib = enumerate_fiber(A, A @ yv, upper, max_points=args.max_points)
    probs = exact_null_distribution(fib, "poisson")
    stat = _statistic(args.statistic, mu)
    p = exact_pvalue(fib, stat, yv, probs=probs)
    t_obs = stat(yv)
    p_asym = chisq_upper_tail(max(t_obs, 0.0), res.df) if res.df > 0 else None
    result = {
        "family": family,
        "statistic": args.statistic,
        "t_obs": t_obs,
        "df": res.df,
        "fiber_size": len(fib),
        "p_exact": p,
        "p_asymptotic": _num(p_asym),
    }
    lines = [
        f"{args.statistic} = {t_obs:.4f}  df = {res.df}",
        f"fiber size = {len(fib)}",
        f"exact p = {p:.4f}   asymptotic p = " + (f"{p_asym:.4f}" if p_asym is not None else "n/a (saturated)"),
    ]
    return result, lines


def cmd_test(args):
    spec, model, X0, y, n, family = _load_setup(args, need_data=True)
    A = _bound_matrix(X0, family)
    if args.basis:
        ms = load_basis(args.basis, A)
    else:
        ms = graver_completion(kernel_basis(A), A)
    cfg = ChainConfig(
        seed=args.seed, burn_in=args.burn_in, samples=args.samples, batches=args.batches,
        family=family, statistic=args.statistic, chains=args.chains, debug=args.debug,
    )
    r = run_chain(y, ms, X0, cfg, n=n)
    if args.histogram:
        r.histogram.write_csv(args.histogram)
    fitted = fit(X0.entries, y, family, n).fitted
    result = {
        "family": family,
        "statistic": args.statistic,
        "t_obs": r.t_obs,
        "df": r.df,
        "p_asymptotic": _num(r.p_asymptotic),
        "p_mcmc": r.p_mcmc,
        "se_batch": r.se_batch,
        "samples": r.samples,
        "burn_in": r.burn_in,
        "batches": args.batches,
        "chains": args.chains,
        "seed": args.seed,
        "moves": len(ms),
        "basis": ms.provenance,
        "multi_step_fraction": r.multi_step_fraction,
        "fitted": fitted.tolist(),
    }
    lines = [
        f"null model {model} ({family}), {len(ms)} {ms.provenance} moves",
        f"{args.statistic} = {r.t_obs:.3f}  df = {r.df}",
        f"asymptotic p = {r.p_asymptotic:.4f}   MCMC p = {r.p_mcmc:.4f} (batch SE {r.se_batch:.4f})",
        f"burn-in {r.burn_in}, samples {r.samples}, seed {args.seed}, moved on {r.multi_step_fraction:.1%} of steps",
    ]
    return result, lines


def cmd_correspond(args):
    spec, model, X0, *_ = _load_setup(args)
    A, m = design_table_matrix(spec, model, args.family)
    rep = correspondence_report(A, m)
    result = {
        "axes": m,
        "hierarchical": str(rep.hierarchical) if rep.hierarchical else None,
        "match": str(rep.match) if rep.match else None,
        "verdict": rep.verdict,
    }
    lines = [f"null model {model} on a 2^{m} table: {rep.verdict}"]
    if rep.hierarchical is not None and is_decomposable(rep.hierarchical):
        ms = primitive_moves_for_decomposable(rep.hierarchical)
        result["primitive_moves"] = [format_move(z, m) for z in ms]
        lines.append("decomposable; primitive moves:")
        lines += ["  " + s for s in result["primitive_moves"]]
        lines += ["", ms.to_text().rstrip()]
    return result, lines


def cmd_example(args):
    names = EXAMPLES if args.name == "all" else {args.name: EXAMPLES[args.name]}
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    pkg = resources.files("fracfact") / "data"
    for files in names.values():
        for fname in files:
            with resources.as_file(pkg / fname) as src:
                shutil.copyfile(src, out / fname)
            written.append(str(out / fname))
    return {"files": written}, [f"wrote {w}" for w in written]


COMMANDS = {
    "design": cmd_design,
    "model": cmd_model,
    "basis": cmd_basis,
    "enumerate": cmd_enumerate,
    "test": cmd_test,
    "correspond": cmd_correspond,
    "example": cmd_example,
}


# -- rendering and manifests ---------------------------------------------------


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def render(result, lines, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in _flatten(result):
            w.writerow([k, "" if v is None else (repr(v) if isinstance(v, float) else v)])
        return buf.getvalue()
    return "\n".join(lines) + "\n"


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    return cfg


def write_manifest(path, args) -> dict:
    cfg = _config(args)
    inputs = {}
    for key in INPUT_KEYS:
        v = cfg.get(key)
        if v:
            inputs[str(v)] = _digest(v)
    outputs = {}
    for key in OUTPUT_KEYS:
        v = cfg.get(key)
        if v and Path(v).exists():
            outputs[key] = {"path": str(v), "sha256": _digest(v)}
    manifest = {
        "tool": "fracfact",
        "version": __version__,
        "command": cfg["command"],
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs": inputs,
        "outputs": outputs,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_replay(args):
    manifest = json.loads(Path(args.manifest_file).read_text())
    cfg = dict(manifest["config"])
    for path, digest in manifest["inputs"].items():
        if not Path(path).exists() or _digest(path) != digest:
            raise ValidationError(f"input {path} is missing or has changed since the run")
    outdir = Path(args.outdir) if args.outdir else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    for key in OUTPUT_KEYS:
        if cfg.get(key) and outdir:
            cfg[key] = str(outdir / Path(cfg[key]).name)
    ns = argparse.Namespace(**cfg)
    result, lines = COMMANDS[cfg["command"]](ns)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(render(result, lines, cfg["format"]))
    mismatched = []
    for key, rec in manifest["outputs"].items():
        new = cfg[key]
        if _digest(new) != rec["sha256"]:
            mismatched.append(new)
    if mismatched:
        raise ValidationError("replay differs from the recorded outputs: " + ", ".join(mismatched))
    n = len(manifest["outputs"])
    return {"reproduced": n, "mismatched": 0}, [f"replayed {cfg['command']}: {n} output(s) hash-identical"]


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("text", "json", "csv"), default="text")
    common.add_argument("--out", help="also write the report to this file")
    common.add_argument("--manifest", help="run manifest path (default: <out>.manifest.json when --out is set)")

    setup = _Parser(add_help=False)
    setup.add_argument("--design", required=True, help="design file ('p q' then X=WORD lines)")
    setup.add_argument("--model", required=True, help="model file (one slash-separated line)")
    setup.add_argument("--no-closure", action="store_true", help="do not close the model under subwords")

    p = _Parser(prog="fracfact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracfact {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("design", parents=[common], help="design matrix, aliasing, resolution")
    s.add_argument("file")
    s.add_argument("--max-alias-len", type=int, default=4)

    s = sub.add_parser("model", parents=[common, setup], help="covariate matrix and estimability")
    s.add_argument("--export", help="write X0' (4ti2 format) to this file")
    s.add_argument("--lift", action="store_true", help="export the Lawrence-lifted matrix")

    s = sub.add_parser("basis", parents=[common, setup], help="compute or import a move set")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--compute", action="store_true", help="Graver completion")
    g.add_argument("--import", dest="import_basis", metavar="FILE", help="4ti2 move file")
    s.add_argument("--family", choices=("poisson", "binomial"), default="poisson")
    s.add_argument("--basis-out", help="write the move set to this file")
    s.add_argument("--verify-connectivity", action="store_true")
    s.add_argument("--total", type=int, help="check every fiber with cell total up to this value")
    s.add_argument("--max-elements", type=int, default=None)
    s.add_argument("--max-degree", type=int, default=None)

    s = sub.add_parser("enumerate", parents=[common, setup], help="exact p-value by fiber enumeration")
    s.add_argument("--data", required=True)
    s.add_argument("--family", choices=("auto", "poisson", "binomial"), default="auto")
    s.add_argument("--statistic", choices=("deviance", "pearson"), default="deviance")
    s.add_argument("--max-points", type=int, default=None)

    s = sub.add_parser("test", parents=[common, setup], help="Markov chain Monte Carlo test")
    s.add_argument("--data", required=True)
    s.add_argument("--family", choices=("auto", "poisson", "binomial"), default="auto")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--basis", help="4ti2 move file")
    g.add_argument("--compute-basis", action="store_true")
    s.add_argument("--statistic", choices=("deviance", "pearson"), default="deviance")
    s.add_argument("--burn-in", type=int, default=100_000)
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--batches", type=int, default=100)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--histogram", help="write histogram CSV with chi-square overlay")
    s.add_argument("--debug", action="store_true", help="check the sufficient statistic every 10^4 steps")

    s = sub.add_parser("correspond", parents=[common, setup], help="corresponding contingency-table model")
    s.add_argument("--family", choices=("poisson", "binomial"), default="poisson")

    s = sub.add_parser("example", parents=[common], help="copy a bundled example to a directory")
    s.add_argument("name", choices=(*EXAMPLES, "all"))
    s.add_argument("--dir", default=".")

    s = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    s.add_argument("manifest_file")
    s.add_argument("--outdir", help="write replayed outputs here instead of over the originals")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        if args.command == "replay":
            result, lines = cmd_replay(args)
            sys.stdout.write("\n".join(lines) + "\n")
            return 0
        result, lines = COMMANDS[args.command](args)
        text = render(result, lines, args.format)
        sys.stdout.write(text)
        if args.out:
            Path(args.out).write_text(text)
        manifest = args.manifest or (f"{args.out}.manifest.json" if args.out else None)
        if manifest:
            write_manifest(manifest, args)
    except FracfactError as exc:
        print(f"fracfact: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fracfact: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
