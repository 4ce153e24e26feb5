"""Command-line entry point: `dcapprox <subcommand> ...`.

Every run that writes files also writes a manifest (config echo, tool
version, seed).  Passing that manifest back through `--config` repeats the
run.  Exit codes: 0 success, 2 acceptance failure, 1 usage or I/O error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import mpmath as mp

from . import __version__
from .errors import CriterionFailed, DcApproxError

EXIT_OK, EXIT_IO, EXIT_CRITERION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s: %s" % (self.prog, message))


# -- formatting and output ---------------------------------------------------------------------

def fmt(v):
    """Stable text for CSV cells."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, mp.mpc):
        return "%s%+sj" % (mp.nstr(v.real, 17), mp.nstr(v.imag, 17))
    if isinstance(v, mp.mpf):
        return mp.nstr(v, 17)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row.get(h)) if isinstance(row, dict) else fmt(c) for h, c in
                    (zip(header, header) if isinstance(row, dict) else zip(header, row))])
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _jsonable(v):
    if isinstance(v, (mp.mpf, mp.mpc)):
        return fmt(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def write_manifest(args, outputs, directory):
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items())
           if k not in ("func", "config", "manifest") and not k.startswith("_")}
    man = {"tool": "dcapprox", "version": __version__, "command": args.command,
           "seed": cfg.get("seed"), "precision_digits": cfg.get("precision"),
           "config": cfg, "outputs": sorted(outputs)}
    path = args.manifest or os.path.join(directory, "manifest.json")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _finish(args, outputs):
    outs = [o for o in outputs if o not in (None, "-")]
    if outs or args.manifest:
        base = os.path.dirname(os.path.abspath(outs[0])) if outs else "."
        write_manifest(args, outs, base)


# -- parsing helpers ---------------------------------------------------------------------------

def parse_degrees(text):
    """'0..40', '0..40:5' or '2,4,8'."""
    text = str(text).strip()
    if ".." in text:
        rng, _, step = text.partition(":")
        a, b = rng.split("..")
        return list(range(int(a), int(b) + 1, int(step or 1)))
    return [int(t) for t in text.split(",") if t.strip()]


def parse_grid(text):
    """'lo:hi:step' inclusive, as exact decimal multiples of step."""
    lo, hi, step = (mp.mpf(t) for t in str(text).split(":"))
    n = int(mp.nint((hi - lo) / step))
    return [lo + step * i for i in range(n + 1)]


def parse_sweep(text):
    """'eps=1e-2:1e-12' -> decades between the endpoints."""
    key, _, rng = str(text).partition("=")
    if key.strip() != "eps":
        raise UsageError("only eps sweeps are supported")
    a, b = (float(t) for t in rng.split(":"))
    la, lb = round(math.log10(a)), round(math.log10(b))
    step = -1 if lb < la else 1
    return [10.0 ** e for e in range(la, lb + step, step)]


def _measure(args):
    from .measures import load_measure
    return load_measure(args.measure, precision_digits=args.precision)


def _need(args, *names):
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError("%s requires %s" % (args.command, ", ".join(missing)))


# -- subcommands -------------------------------------------------------------------------------

def cmd_measure_info(args):
    _need(args, "measure")
    m = _measure(args)
    a, b = m.recurrence(args.n + 1)
    t = m.tail
    rows = []
    with mp.workdps(m.working_digits):
        for n in range(args.n + 1):
            rows.append({"n": n, "moment": m.moment(n), "alpha": a[n], "beta": b[n],
                         "tail_kind": t.kind, "A": t.A, "K": t.K, "r": t.r})
    write_csv(args.out, ["n", "moment", "alpha", "beta", "tail_kind", "A", "K", "r"], rows)
    _finish(args, [args.out])
    return EXIT_OK


def _sequence(args):
    from . import carleman
    name = args.sequence[0]
    if name == "from-measure":
        if len(args.sequence) < 2:
            raise UsageError("--sequence from-measure needs a measure file or builtin name")
        from .measures import load_measure
        model = load_measure(args.sequence[1], precision_digits=args.precision)
        return carleman.from_moments(model, args.B, args.K, order=min(model.max_degree, 2 * args.N + 2))
    return carleman.get_sequence(name)


def cmd_qdc(args):
    _need(args, "sequence", "N", "x")
    from . import carleman
    seq = _sequence(args)
    q = carleman.qdc_bound(seq, args.B, args.K, args.N, args.x, Y=args.Y)
    rows = [{"alpha": al, "prefactor": pre, "integral_term": it, "tail_term": tt, "value": val}
            for al, pre, it, tt, val in sorted(q.evaluations, key=lambda e: e[0])]
    write_csv(args.out, ["alpha", "prefactor", "integral_term", "tail_term", "value"], rows)
    sys.stderr.write("minimum %s at alpha=%s\n" % (fmt(q.value), fmt(q.alpha_star)))
    _finish(args, [args.out])
    return EXIT_OK


def cmd_plan(args):
    _need(args, "regime")
    from . import bounds
    from .measures import TailClass
    from .projection import load_target
    eps_list = parse_sweep(args.sweep) if args.sweep else [args.eps]
    if eps_list == [None]:
        raise UsageError("plan needs --eps or --sweep")
    if args.measure:
        t = _measure(args).tail
        A, K, r = (args.A if args.A is not None else t.A, args.K if args.K is not None else t.K,
                   args.r if args.r is not None else t.r)
        kind = t.kind
    else:
        A, K, r, kind = (args.A or 1.0, args.K or 1.0, args.r or 2.0, None)
    tg = load_target(args.target)
    rows = []
    for eps in eps_list:
        if args.regime == "strict":
            p = bounds.plan_degree_strict(eps, A, K, r, tg.band_mass, tg.tail_mass)
        elif args.regime == "subexp":
            p = bounds.plan_degree_subexp(eps, K, tg.band_mass, tg.tail_mass)
        else:
            if args.sigma is None:
                raise UsageError("the smoothed regime needs --sigma")
            # without --measure the tail is strictly sub-exponential with (A, K, r)
            tail = TailClass(kind or "strictly_subexp", A, K, r)
            p = bounds.plan_degree_smoothed(eps, args.sigma, args.k, tail)
        row = p.as_row()
        row["R"] = p.details.get("R") if p.details else None
        rows.append(row)
    write_csv(args.out, ["regime", "eps", "D", "Omega", "band_term", "tail_term", "A", "K", "r",
                         "band_mass", "R"], rows)
    _finish(args, [args.out])
    return EXIT_OK


def cmd_project(args):
    _need(args, "measure", "target")
    from . import projection
    model = _measure(args)
    tg = projection.load_target(args.target)
    degrees = parse_degrees(args.degrees)
    res = projection.project_auto(model, tg, degrees)
    if not isinstance(res, dict):
        res = {res.D: res}
    Om = mp.mpf(args.omega) if args.omega is not None else (tg.band_edge or mp.mpf(1))
    rows = []
    for D in degrees:
        rn = res[D].residual_norm
        cb = projection.certified_bound(model, tg, D, Om) if tg.band_mass is not None else None
        rows.append({"D": D, "residual": rn, "certified_bound": cb,
                     "ratio": (rn / cb) if cb else None})
    outdir = args.outdir
    paths = []
    p1 = os.path.join(outdir, "residuals.csv")
    write_csv(p1, ["D", "residual", "certified_bound", "ratio"], rows)
    paths.append(p1)
    if args.probe_xi:
        grid = parse_grid(args.probe_xi)
        pdeg = parse_degrees(args.probe_degrees) if args.probe_degrees else degrees
        prow = []
        for D in pdeg:
            pr = projection.fourier_probe(res[D], grid, derivative_orders=[])
            for i, xi in enumerate(grid):
                ph = pr.phi_values[i]
                prow.append({"D": D, "xi": xi, "re_phi": ph.real, "im_phi": ph.imag,
                             "envelope": pr.envelope[i] if pr.envelope else None,
                             "ratio": pr.envelope_ratio[i] if pr.envelope_ratio else None})
        p2 = os.path.join(outdir, "probe.csv")
        write_csv(p2, ["D", "xi", "re_phi", "im_phi", "envelope", "ratio"], prow)
        paths.append(p2)
    _finish(args, paths)
    return EXIT_OK


def cmd_hermite(args):
    _need(args, "target")
    from . import hermite
    name, _, arg = args.target.partition(":")
    if name == "cos":
        e = hermite.expand_cos(args.max_n, mp.mpf(arg or 1))
    elif name in ("expc", "exp_quadratic"):
        e = hermite.expand_exp_quadratic(mp.mpf(arg or "0.1"), args.max_n)
    elif name == "sinc":
        e = hermite.expand_sinc_numeric(args.max_n)
    else:
        raise UsageError("hermite targets: cos[:Omega], expc:<c>, sinc")
    Om = mp.mpf(args.omega)
    rows = [{"n": n, "a_n": e.coeffs[n], "log_abs_a_n": e.log_abs(n), "pw_envelope": hermite.pw_envelope(Om, n)}
            for n in range(args.max_n + 1)]
    write_csv(args.out, ["n", "a_n", "log_abs_a_n", "pw_envelope"], rows)
    _finish(args, [args.out])
    return EXIT_OK


def _lip_target(spec):
    from . import jackson
    name, _, arg = spec.partition(":")
    if name == "abs":
        return jackson.abs_lipschitz()
    if name == "relu":
        return jackson.relu_lipschitz()
    if name == "smooth_relu":
        return jackson.smooth_relu_lipschitz(int(arg or 2))
    raise UsageError("lipschitz targets: abs, relu, smooth_relu[:k]")


def cmd_lipschitz(args):
    _need(args, "target", "measure", "eps")
    from . import jackson
    model = _measure(args)
    res = jackson.lipschitz_pipeline(_lip_target(args.target), model, args.eps, D0=args.D0, R=args.R,
                                     max_degree=args.max_degree, combination=args.combination)
    rows = []
    for st in res.stage_report:
        for key, val in st.items():
            if key == "stage":
                continue
            if isinstance(val, (list, tuple)):
                val = json.dumps([float(v) for v in val])
            rows.append({"stage": st["stage"], "key": key, "value": val})
    for key, val in res.terms.items():
        rows.append({"stage": "terms", "key": key, "value": val})
    write_csv(args.report, ["stage", "key", "value"], rows)
    sys.stderr.write("measured error %s with degree %d\n" % (fmt(res.measured_error), res.degree))
    _finish(args, [args.report])
    return EXIT_OK


def _auto_m(args):
    from . import learner
    if args.m != "auto":
        return int(args.m)
    return min(learner.jl_dimension(args.K, args.gamma, 0.1), args.d)


def _auto_D(args, m, n):
    if args.D != "auto":
        return int(args.D)
    D = 1
    while D < 8 and math.comb(m + D + 1, D + 1) <= n // 2:
        D += 1
    return D


RESULT_COLUMNS = ["trial", "seed", "m", "D", "train_err", "test_err", "runtime_ms"]


def cmd_learn(args):
    import time
    import numpy as np
    from . import learner
    rows = []
    if args.task == "halfspaces":
        m = _auto_m(args)
        D = _auto_D(args, m, args.N)
        for t in range(args.trials):
            sd = args.seed + t
            r = learner.halfspace_trial(args.K, args.gamma, args.d, m, D, args.N, sd, n_test=args.n_test,
                                        kernel_scale=args.kernel_scale)
            r.update(trial=t)
            rows.append(r)
    else:
        D = int(args.D) if args.D != "auto" else 2
        for t in range(args.trials):
            sd = args.seed + t
            rng = np.random.default_rng(sd)
            concept = learner.load_concept(args.concept, args.d, rng)
            X, y = learner.smoothed_concept_data(concept, args.N, args.d, args.sigma, rng, args.noise)
            Xt, yt = learner.smoothed_concept_data(concept, args.n_test, args.d, args.sigma, rng, args.noise)
            t0 = time.perf_counter()
            model = learner.smoothed_learn(X, y, D, replications=args.replications)
            ms = (time.perf_counter() - t0) * 1e3
            rows.append({"trial": t, "seed": sd, "m": args.d, "D": D,
                         "train_err": model.info["train_err"], "test_err": model.error(Xt, yt),
                         "runtime_ms": ms})
    write_csv(args.out, RESULT_COLUMNS, rows)
    _finish(args, [args.out])
    return EXIT_OK


RATE_MEASURES = ("gaussian", "laplace", "freud:1.5")
RATE_TARGETS = ("cos:1", "abs", "relu")


def _suite_tables(suite, outdir, results):
    from . import bounds, carleman, hermite, measures, projection
    paths = []
    if suite == "rates":
        rows = []
        for ms in RATE_MEASURES:
            model = measures.load_measure(ms, precision_digits=40)
            for ts in RATE_TARGETS:
                res = projection.project_auto(model, projection.load_target(ts), list(range(0, 41)))
                rows.extend({"measure": ms, "target": ts, "D": D, "residual": res[D].residual_norm}
                            for D in range(0, 41))
        p = os.path.join(outdir, "rates.csv")
        write_csv(p, ["measure", "target", "D", "residual"], rows)
        paths.append(p)
    elif suite == "universality":
        rows = []
        for label, e in (("cos", hermite.expand_cos(60)),
                         ("expc:0.1", hermite.expand_exp_quadratic(mp.mpf("0.1"), 60))):
            cert = hermite.pw_coefficient_certificate(e, 1)
            rows.extend({"target": label, "n": n, "a_n": e.coeffs[n], "scaled": cert.scaled[n],
                         "tail": cert.tail_norms[n], "envelope": cert.envelope[n],
                         "certified": cert.holds} for n in range(61))
        p = os.path.join(outdir, "hermite_certificates.csv")
        write_csv(p, ["target", "n", "a_n", "scaled", "tail", "envelope", "certified"], rows)
        paths.append(p)
    elif suite == "qdc-examples":
        rows = bounds.pessimism_table(carleman.subgaussian_sequence(), list(range(10, 101, 10)),
                                      x=mp.mpf("0.1"))
        p = os.path.join(outdir, "pessimism.csv")
        write_csv(p, ["D", "complex", "real", "log_ratio", "alpha"], rows)
        paths.append(p)
    elif suite == "learning" and 11 in results:
        rows = [dict(r, trial=i) for i, r in enumerate(results[11].data["trials"])]
        p = os.path.join(outdir, "results.csv")
        write_csv(p, RESULT_COLUMNS, rows)
        paths.append(p)
    return paths


def cmd_reproduce(args):
    from . import acceptance
    if args.suite not in acceptance.SUITES:
        raise UsageError("unknown suite %r (choose from %s)" % (args.suite, ", ".join(acceptance.SUITES)))
    results = {}
    for i in acceptance.SUITES[args.suite]:
        results[i] = acceptance.CRITERIA[i]()
        print(results[i].line(), flush=True)
    rows = [{"criterion": i, "title": r.title, "passed": r.passed, "runtime_s": round(r.runtime_s, 3),
             "limit_s": r.limit_s, "detail": "; ".join(r.failures())} for i, r in results.items()]
    p = os.path.join(args.outdir, "criteria.csv")
    write_csv(p, ["criterion", "title", "passed", "runtime_s", "limit_s", "detail"], rows)
    paths = [p] + _suite_tables(args.suite, args.outdir, results)
    _finish(args, paths)
    failed = [i for i, r in results.items() if not r.passed]
    if failed:
        raise CriterionFailed(failed)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------------

def build_parser():
    env_prec = os.environ.get("DCAPPROX_PRECISION")
    p = _Parser(prog="dcapprox", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version="dcapprox " + __version__)
    p.add_argument("--config", help="JSON or YAML file of option values (a run manifest also works)")
    p.add_argument("--manifest", help="where to write the run manifest")
    p.add_argument("--precision", type=int, default=int(env_prec) if env_prec else None,
                   help="decimal digits (default from DCAPPROX_PRECISION, else 60)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("measure-info", help="moments and recurrence of a measure")
    s.add_argument("--measure")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_measure_info)

    s = sub.add_parser("qdc", help="quasianalyticity bound breakdown")
    s.add_argument("--sequence", nargs="+",
                   help="factorial | subgaussian | quasi | from-measure <file>")
    s.add_argument("--N", type=int)
    s.add_argument("--x", type=float)
    s.add_argument("--K", type=float, default=1.0)
    s.add_argument("--B", type=float, default=1.0)
    s.add_argument("--Y", type=float)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_qdc)

    s = sub.add_parser("plan", help="certified degree plan")
    s.add_argument("--regime", choices=["strict", "subexp", "smoothed"])
    s.add_argument("--eps", type=float)
    s.add_argument("--sweep")
    s.add_argument("--target", default="cos:1")
    s.add_argument("--measure")
    s.add_argument("--sigma", type=float)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--r", type=float)
    s.add_argument("--K", type=float)
    s.add_argument("--A", type=float)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("project", help="orthogonal projection with residual and Fourier probe")
    s.add_argument("--measure")
    s.add_argument("--target")
    s.add_argument("--degrees", default="0..40")
    s.add_argument("--probe-xi", dest="probe_xi")
    s.add_argument("--probe-degrees", dest="probe_degrees")
    s.add_argument("--omega", type=float)
    s.add_argument("--outdir", default=".")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("hermite", help="Hermite coefficients and Paley-Wiener envelope")
    s.add_argument("--target")
    s.add_argument("--max-n", dest="max_n", type=int, default=60)
    s.add_argument("--omega", type=float, default=1.0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_hermite)

    s = sub.add_parser("lipschitz", help="jet + corrector + Jackson + projection pipeline")
    s.add_argument("--target")
    s.add_argument("--measure")
    s.add_argument("--eps", type=float)
    s.add_argument("--D0", type=int)
    s.add_argument("--R", type=float)
    s.add_argument("--max-degree", dest="max_degree", type=int, default=256)
    s.add_argument("--combination", choices=["weighted", "unweighted"], default="weighted")
    s.add_argument("--report", default="-")
    s.set_defaults(func=cmd_lipschitz)

    s = sub.add_parser("learn", help="learning experiments")
    s.add_argument("task", choices=["halfspaces", "smoothed"])
    s.add_argument("--K", type=int, default=2)
    s.add_argument("--gamma", type=float, default=0.3)
    s.add_argument("--d", type=int, default=20)
    s.add_argument("--N", type=int, default=20000)
    s.add_argument("--m", default="auto")
    s.add_argument("--D", default="auto")
    s.add_argument("--concept", default="halfspace")
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--replications", type=int, default=1)
    s.add_argument("--kernel-scale", dest="kernel_scale", type=float, default=1.0)
    s.add_argument("--n-test", dest="n_test", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("reproduce", help="run an acceptance suite")
    s.add_argument("suite", help="rates | universality | qdc-examples | learning")
    s.add_argument("--outdir", default="reproduce-out")
    s.set_defaults(func=cmd_reproduce)
    return p


def _load_config(path):
    with open(path) as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml
        cfg = yaml.safe_load(text) or {}
    else:
        cfg = json.loads(text)
    if "config" in cfg and "tool" in cfg:
        cfg = cfg["config"]
    return cfg


_DASHED_VALUES = ("--probe-xi", "--sweep")


def _glue(argv):
    # values such as -10:10:0.05 start with a dash; bind them to their flag
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _DASHED_VALUES and i + 1 < len(argv):
            out.append("%s=%s" % (argv[i], argv[i + 1]))
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def parse(argv):
    argv = _glue(list(argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        command = args.command or cfg.get("command")
        if not command:
            raise UsageError("no subcommand given")
        rebuilt = [a for a in argv if a != command]
        # rebuild with the config as defaults so explicit flags still win
        parser = build_parser()
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest for a in sub._actions} | {a.dest for a in parser._actions}
        sub.set_defaults(**{k: v for k, v in cfg.items() if k in known and k not in ("command",)})
        parser.set_defaults(**{k: v for k, v in cfg.items() if k in ("precision",)})
        if args.command is None:
            rebuilt = rebuilt + [command] + _positionals(sub, cfg)
        else:
            rebuilt = list(argv)
        args = parser.parse_args(rebuilt)
    if not getattr(args, "command", None):
        raise UsageError("a subcommand is required (see --help)")
    return args


def _positionals(sub, cfg):
    out = []
    for a in sub._actions:
        if not a.option_strings and a.dest in cfg and a.dest != "help":
            out.append(str(cfg[a.dest]))
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
        return args.func(args)
    except UsageError as e:
        sys.stderr.write("usage error: %s\n" % e)
        return EXIT_IO
    except CriterionFailed as e:
        sys.stderr.write("%s\n" % e)
        return EXIT_CRITERION
    except (DcApproxError, ValueError, OSError) as e:
        sys.stderr.write("error: %s\n" % e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
