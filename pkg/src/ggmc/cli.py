"""Command-line harness: run chains, sweep grids, demonstrate zero SGHMC acceptance.

Subcommands::

    ggmc run            run chains and write samples.csv / summary.csv
    ggmc sweep          run a grid of configurations, write sweep.csv
    ggmc theorem1-demo  count backward-realizable Euler-Maruyama steps
    ggmc convert-params convert between (lr, momentum) and (h, gamma)

Options may also come from a flat ``key = value`` file given with
``--config``; command-line flags override the file. The default output
directory is taken from ``$GGMC_OUTPUT_DIR`` (falling back to ``ggmc-out``).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import ContractViolation, MassMatrix, PhaseState, SamplerConfig
from .hyperparams import (
    SGDParams,
    em_sampler_to_sgd,
    sampler_to_sgd,
    sgd_to_em_sampler,
    sgd_to_sampler,
)
from .integrators import IntegratorKind, check_backward_realizability_em, step_euler_maruyama
from .mh import em_log_accept
from .rng import NoiseStream
from .sampler import Correction, check_pairing, run_chains
from .targets import (
    make_banana,
    make_gaussian,
    make_harmonic_oscillator,
    make_logistic_regression,
    make_synthetic_logistic_data,
)

log = logging.getLogger("ggmc")

OUTPUT_ENV = "GGMC_OUTPUT_DIR"
MAX_ROWS = 100_000
TARGETS = ("gaussian-1d", "gaussian", "harmonic", "banana", "logistic")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class SpecError(ValueError):
    """Invalid run specification."""


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


# name -> (type, default, help)
RUN_OPTIONS = {
    "target": (str, "gaussian-1d", f"target distribution, one of {', '.join(TARGETS)}"),
    "mean": (_floats, None, "comma-separated mean of the gaussian target"),
    "variances": (_floats, None, "comma-separated variances of the gaussian target"),
    "curvature": (float, 1.0, "banana curvature b"),
    "scale": (float, 1.0, "banana scale"),
    "n_data": (int, 500, "logistic regression: number of synthetic data points"),
    "n_features": (int, 2, "logistic regression: number of features"),
    "data_seed": (int, 0, "logistic regression: seed of the synthetic data"),
    "label_noise": (float, 0.0, "logistic regression: label flip probability"),
    "prior_precision": (float, 1.0, "logistic regression: Gaussian prior precision"),
    "batch_size": (_opt_int, None, "minibatch size for stochastic gradients (default: full data)"),
    "integrator": (str, None, "obabo, leapfrog, euler_maruyama or sgld (default obabo)"),
    "correction": (str, "per_step", "none, per_step or multi_step"),
    "multi_step_n": (int, 10, "integrator steps per MH test in multi_step mode"),
    "steps": (int, 10_000, "integrator steps per chain"),
    "refresh": (str, "partial", "momentum handling between multi-step rounds: partial or full"),
    "pre_draw": (_bool, False, "draw all noises of a multi-step round up front"),
    "lr": (float, None, "SGD learning rate (use with --momentum)"),
    "momentum": (float, None, "SGD momentum beta (use with --lr)"),
    "step_size": (float, None, "integrator step size h (default 0.1)"),
    "friction": (float, None, "friction gamma (default 1.0)"),
    "temperature": (float, 1.0, "temperature T"),
    "mass": (_floats, None, "comma-separated diagonal mass matrix"),
    "seed": (int, 0, "seed of the chains' noise streams"),
    "chains": (int, 1, "number of independent chains"),
    "thin": (_opt_int, None, "keep every k-th sample (default: at most 100000 rows)"),
    "max_theta_columns": (int, 20, "above this dimension only |theta| is written"),
    "out": (str, None, f"output directory (default ${OUTPUT_ENV} or ./ggmc-out)"),
}


@dataclass
class RunSpec:
    target: str
    target_params: dict
    integrator: IntegratorKind
    correction: Correction
    multi_step_n: int
    chains: int
    steps: int
    seed: int
    out: Path
    parameterization: str
    config: SamplerConfig
    batch_size: int | None
    refresh: str
    pre_draw: bool
    thin: int | None
    max_theta_columns: int


def read_config_file(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in RUN_OPTIONS:
            raise SpecError(f"{path}:{lineno}: unknown option {key!r}")
        values[key] = value
    return values


def resolve_options(given, config_path=None):
    """Merge defaults < config file < command-line flags.

    Returns ``(options, explicit)`` where ``explicit`` is the set of keys set
    by the file or the flags.
    """
    file_values = {}
    if config_path:
        for key, raw in read_config_file(config_path).items():
            conv = RUN_OPTIONS[key][0]
            try:
                file_values[key] = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise SpecError(f"config option {key}: {exc}") from None
    options = {k: spec[1] for k, spec in RUN_OPTIONS.items()}
    options.update(file_values)
    options.update(given)
    return options, set(file_values) | set(given)


def build_target(opts):
    name = opts["target"]
    if name == "gaussian-1d":
        return make_gaussian(opts["mean"] or [0.0], opts["variances"] or [1.0])
    if name == "gaussian":
        variances = opts["variances"] or [1.0, 4.0]
        mean = opts["mean"] or [0.0] * len(variances)
        return make_gaussian(mean, variances)
    if name == "harmonic":
        return make_harmonic_oscillator()
    if name == "banana":
        return make_banana(opts["curvature"], opts["scale"])
    if name == "logistic":
        x, y, _ = make_synthetic_logistic_data(
            opts["n_data"], opts["n_features"], seed=opts["data_seed"], noise=opts["label_noise"]
        )
        return make_logistic_regression(x, y, opts["prior_precision"])
    raise SpecError(f"unknown target {name!r}; choose one of {', '.join(TARGETS)}")


def build_spec(opts, explicit, target):
    sgd_keys = {"lr", "momentum"} & explicit
    native_keys = {"step_size", "friction"} & explicit
    if sgd_keys and native_keys:
        raise SpecError(
            "mixing parameterizations: give either --lr/--momentum or --step-size/--friction"
        )
    integrator = opts["integrator"]
    integrator = IntegratorKind.parse(integrator) if integrator else None
    if sgd_keys:
        if opts["lr"] is None or opts["momentum"] is None:
            raise SpecError("--lr and --momentum must be given together")
        p = SGDParams(opts["lr"], opts["momentum"], target.data_size)
        if integrator is IntegratorKind.EULER_MARUYAMA:
            h, gamma, _ = sgd_to_em_sampler(p)
        else:
            h, gamma, routed = sgd_to_sampler(p)
            if routed is IntegratorKind.SGLD:
                if integrator not in (None, IntegratorKind.SGLD):
                    raise SpecError(
                        f"momentum 0 is the infinite-friction limit and selects sgld, "
                        f"not {integrator.value}"
                    )
                integrator, gamma = IntegratorKind.SGLD, 0.0
        parameterization = "sgd"
    else:
        h = 0.1 if opts["step_size"] is None else opts["step_size"]
        gamma = 1.0 if opts["friction"] is None else opts["friction"]
        parameterization = "sampler"
    integrator = integrator or IntegratorKind.OBABO
    correction = Correction.parse(opts["correction"])
    check_pairing(integrator, correction)
    mass = None if opts["mass"] is None else MassMatrix(opts["mass"])
    if mass is not None and mass.dim != target.dim:
        raise SpecError(f"--mass has {mass.dim} entries, target dimension is {target.dim}")
    config = SamplerConfig(h, gamma, opts["temperature"], mass)
    for key in ("chains", "steps", "multi_step_n"):
        if opts[key] < 1:
            raise SpecError(f"--{key.replace('_', '-')} must be >= 1")
    if opts["refresh"] not in ("partial", "full"):
        raise SpecError("--refresh must be partial or full")
    bs = opts["batch_size"]
    if bs is not None and (bs < 1 or target.data_size % bs):
        raise SpecError(f"--batch-size {bs} must divide the data size {target.data_size}")
    out = opts["out"] or os.environ.get(OUTPUT_ENV) or "ggmc-out"
    target_params = {
        k: opts[k]
        for k in ("mean", "variances", "curvature", "scale", "n_data", "n_features",
                  "data_seed", "label_noise", "prior_precision")
    }
    return RunSpec(
        target=opts["target"],
        target_params=target_params,
        integrator=integrator,
        correction=correction,
        multi_step_n=opts["multi_step_n"],
        chains=opts["chains"],
        steps=opts["steps"],
        seed=opts["seed"],
        out=Path(out),
        parameterization=parameterization,
        config=config,
        batch_size=bs,
        refresh=opts["refresh"],
        pre_draw=opts["pre_draw"],
        thin=opts["thin"],
        max_theta_columns=opts["max_theta_columns"],
    )


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _default_thin(spec):
    rounds = spec.steps if spec.correction is not Correction.MULTI_STEP else (
        spec.steps // spec.multi_step_n
    )
    return max(1, math.ceil(rounds * spec.chains / MAX_ROWS))


def execute(spec, target):
    """Run the chains of ``spec`` and write its output files.

    Returns ``(exit_code, results)``.
    """
    thin = spec.thin or _default_thin(spec)
    t0 = time.perf_counter()
    results = run_chains(
        target,
        spec.config,
        spec.steps,
        n_chains=spec.chains,
        seed=spec.seed,
        integrator=spec.integrator,
        correction=spec.correction,
        multi_step_n=spec.multi_step_n,
        batch_size=spec.batch_size,
        refresh=spec.refresh,
        pre_draw=spec.pre_draw,
        thin=thin,
    )
    wall = time.perf_counter() - t0
    spec.out.mkdir(parents=True, exist_ok=True)
    write_samples(spec.out / "samples.csv", results, target.dim, spec.max_theta_columns)
    write_summary(spec.out / "summary.csv", results, target.dim)
    write_spec(spec.out / "spec.csv", spec, thin)
    log.info("wrote %s (%.2f s wall time)", spec.out, wall)
    errors = [(i, r.error) for i, r in enumerate(results) if r.error]
    for i, err in errors:
        log.error("chain %d stopped early: %s", i, err)
    return (EXIT_NUMERICAL if errors else EXIT_OK), results


def write_samples(path, results, dim, max_theta_columns):
    wide = dim <= max_theta_columns
    theta_cols = [f"theta_{j}" for j in range(dim)] if wide else ["theta_norm"]
    header = ["chain", "step", *theta_cols, "U", "K", "log_alpha", "accepted"]

    def rows():
        for c, r in enumerate(results):
            for i in range(r.step.shape[0]):
                th = r.theta[i].tolist() if wide else [float(np.linalg.norm(r.theta[i]))]
                yield [c, r.step[i], *th, r.potential[i], r.kinetic[i], r.log_alpha[i],
                       r.accepted[i]]

    _write_csv(path, header, rows())


SUMMARY_HEADER = ["chain", "coordinate", "mean", "variance", "ess", "acceptance_rate",
                  "mean_accept_prob", "mean_U", "mean_K", "n_samples", "rounds",
                  "forced_rejections", "error"]


def write_summary(path, results, dim):
    rows = []
    for c, r in enumerate(results):
        if r.theta.shape[0] >= 2:
            s = r.summary()
            for j in range(dim):
                rows.append([c, j, s.mean[j], s.variance[j], s.ess[j], s.acceptance_rate,
                             s.mean_accept_prob, s.mean_potential, s.mean_kinetic,
                             s.n_samples, r.all_accepted.size, r.forced_rejections, r.error])
        else:
            rows.append([c, "", None, None, None, r.acceptance_rate, r.mean_accept_prob,
                         None, None, r.theta.shape[0], r.all_accepted.size,
                         r.forced_rejections, r.error])
    _write_csv(path, SUMMARY_HEADER, rows)


def write_spec(path, spec, thin):
    cfg = spec.config
    rows = [
        ("version", __version__),
        ("target", spec.target),
        *sorted(spec.target_params.items()),
        ("integrator", spec.integrator.value),
        ("correction", spec.correction.value),
        ("multi_step_n", spec.multi_step_n),
        ("chains", spec.chains),
        ("steps", spec.steps),
        ("seed", spec.seed),
        ("parameterization", spec.parameterization),
        ("step_size", cfg.step_size),
        ("friction", cfg.friction),
        ("temperature", cfg.temperature),
        ("mass", None if cfg.mass is None else cfg.mass.diag.tolist()),
        ("batch_size", spec.batch_size),
        ("refresh", spec.refresh),
        ("pre_draw", spec.pre_draw),
        ("thin", thin),
    ]
    _write_csv(path, ["key", "value"], rows)


# --- argument parsing --------------------------------------------------------


def _add_run_options(parser):
    for name, (conv, default, help_text) in RUN_OPTIONS.items():
        flag = "--" + name.replace("_", "-")
        kwargs = dict(dest=name, default=argparse.SUPPRESS, help=help_text)
        if name == "pre_draw":
            parser.add_argument(flag, nargs="?", const=True, type=_bool, **kwargs)
        else:
            parser.add_argument(flag, type=conv, **kwargs)
    parser.add_argument("--config", dest="config_file", default=None,
                        help="flat key = value file; flags override it")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="ggmc", description="Langevin MCMC with exact Metropolis-Hastings correction."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run chains and write samples/summary CSV files")
    _add_run_options(run)

    sweep = sub.add_parser("sweep", help="run a grid of configurations")
    _add_run_options(sweep)
    sweep.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                       help="axis of the grid; repeat for more axes")
    sweep.add_argument("--workers", type=int, default=None, help="parallel cells")

    demo = sub.add_parser("theorem1-demo",
                          help="show that Euler-Maruyama steps are never backward-realizable")
    demo.add_argument("--steps", type=int, default=10_000)
    demo.add_argument("--step-size", dest="step_size", type=float, default=0.1)
    demo.add_argument("--friction", type=float, default=0.5)
    demo.add_argument("--temperature", type=float, default=1.0)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--out", default=None, help="optional directory for theorem1.csv")

    conv = sub.add_parser("convert-params", help="convert (lr, momentum) <-> (h, gamma)")
    conv.add_argument("--lr", type=float)
    conv.add_argument("--momentum", type=float)
    conv.add_argument("--step-size", dest="step_size", type=float)
    conv.add_argument("--friction", type=float)
    conv.add_argument("--n-data", dest="n_data", type=int, required=True)
    conv.add_argument("--scheme", choices=("ggmc", "euler_maruyama"), default="ggmc")
    return parser


def _given(ns):
    skip = {"command", "config_file", "verbose", "grid", "workers"}
    return {k: v for k, v in vars(ns).items() if k not in skip}


def cmd_run(ns, out=sys.stdout):
    opts, explicit = resolve_options(_given(ns), ns.config_file)
    target = build_target(opts)
    spec = build_spec(opts, explicit, target)
    t0 = time.perf_counter()
    code, results = execute(spec, target)
    wall = time.perf_counter() - t0
    for c, r in enumerate(results):
        print(f"chain {c}: acceptance_rate={r.acceptance_rate:.4f} "
              f"mean_accept_prob={r.mean_accept_prob:.4f} samples={r.theta.shape[0]}"
              + (f" error={r.error}" if r.error else ""), file=out)
    print(f"wall_time={wall:.3f}s output: {spec.out}", file=out)
    return code


def parse_grid(items):
    axes = []
    for item in items:
        if "=" not in item:
            raise SpecError(f"grid axis {item!r} must look like key=v1,v2")
        key, values = item.split("=", 1)
        key = key.strip().lstrip("-").replace("-", "_")
        if key not in RUN_OPTIONS or key == "out":
            raise SpecError(f"unknown grid axis {key!r}")
        conv = RUN_OPTIONS[key][0]
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if conv is _floats:
            parsed = [_floats(v.replace(";", ",")) for v in vals]
        else:
            parsed = [conv(v) for v in vals]
        axes.append((key, parsed))
    return axes


SWEEP_STATS = ["status", "acceptance_rate", "mean_accept_prob", "mean_U", "mean_K", "error"]


def cmd_sweep(ns, out=sys.stdout):
    base, explicit = resolve_options(_given(ns), ns.config_file)
    axes = parse_grid(ns.grid)
    root = Path(base["out"] or os.environ.get(OUTPUT_ENV) or "ggmc-out")
    root.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in axes]
    cells = [] if not axes or any(not v for _, v in axes) else list(
        itertools.product(*(v for _, v in axes))
    )

    def one(index_values):
        index, values = index_values
        opts = dict(base, **dict(zip(keys, values)))
        opts["out"] = str(root / f"cell_{index:03d}")
        try:
            target = build_target(opts)
            spec = build_spec(opts, explicit | set(keys), target)
            code, results = execute(spec, target)
        except (SpecError, ContractViolation, ValueError) as exc:
            return ["error", None, None, None, None, str(exc)]
        la = np.concatenate([r.all_accepted for r in results]).astype(float)
        probs = [r.mean_accept_prob for r in results]
        pot = np.concatenate([r.potential for r in results])
        kin = np.concatenate([r.kinetic for r in results])
        err = "; ".join(r.error for r in results if r.error) or None
        return ["ok" if code == EXIT_OK else "diverged",
                float(la.mean()) if la.size else None, float(np.mean(probs)),
                float(np.nanmean(pot)) if pot.size else None,
                float(np.nanmean(kin)) if kin.size and not np.all(np.isnan(kin)) else None,
                err]

    with ThreadPoolExecutor(max_workers=ns.workers or max(len(cells), 1)) as pool:
        stats = list(pool.map(one, enumerate(cells)))
    rows = [[i, *vals, *st] for i, (vals, st) in enumerate(zip(cells, stats))]
    _write_csv(root / "sweep.csv", ["cell", *keys, *SWEEP_STATS], rows)
    n_err = sum(1 for st in stats if st[0] == "error")
    print(f"sweep: {len(cells)} cells, {n_err} failed; table: {root / 'sweep.csv'}", file=out)
    return EXIT_OK


def theorem1_demo(n_steps=10_000, step_size=0.1, friction=0.5, temperature=1.0, seed=0):
    """Run Euler-Maruyama steps on the 1-d standard Gaussian and test each for
    backward realizability.

    Returns ``(n_realizable, n_neg_inf, rows)`` where rows hold
    ``(step, theta, m, theta_next, m_next, realizable, log_alpha)``.
    """
    target = make_gaussian([0.0], [1.0])
    config = SamplerConfig(step_size, friction, temperature)
    stream = NoiseStream(seed)
    state = PhaseState(stream.normal(1), stream.normal(1))
    rows = []
    n_real = n_inf = 0
    for i in range(n_steps):
        new = step_euler_maruyama(state, target.grad(state.theta), config, stream.normal(1))
        ok = check_backward_realizability_em(state.theta, state.momentum, new.theta,
                                             new.momentum, config)
        la = em_log_accept(state.theta, state.momentum, new.theta, new.momentum, config, target)
        n_real += ok
        n_inf += la == -math.inf
        rows.append((i, state.theta[0], state.momentum[0], new.theta[0], new.momentum[0], ok, la))
        state = new
    return n_real, n_inf, rows


def cmd_theorem1(ns, out=sys.stdout):
    if ns.steps < 1 or ns.step_size <= 0:
        raise SpecError("--steps must be >= 1 and --step-size > 0")
    n_real, n_inf, rows = theorem1_demo(ns.steps, ns.step_size, ns.friction, ns.temperature,
                                        ns.seed)
    print(f"backward-realizable: {n_real} / {ns.steps}", file=out)
    print(f"em_log_accept = -inf: {n_inf} / {ns.steps}", file=out)
    if ns.out:
        d = Path(ns.out)
        d.mkdir(parents=True, exist_ok=True)
        _write_csv(d / "theorem1.csv",
                   ["step", "theta", "m", "theta_next", "m_next", "realizable", "log_alpha"],
                   rows)
    return EXIT_OK


def cmd_convert(ns, out=sys.stdout):
    sgd = ns.lr is not None or ns.momentum is not None
    native = ns.step_size is not None or ns.friction is not None
    if sgd == native:
        raise SpecError("give either --lr/--momentum or --step-size/--friction")
    if sgd:
        if ns.lr is None or ns.momentum is None:
            raise SpecError("--lr and --momentum must be given together")
        p = SGDParams(ns.lr, ns.momentum, ns.n_data)
        res = sgd_to_em_sampler(p) if ns.scheme == "euler_maruyama" else sgd_to_sampler(p)
        print(f"step_size={_fmt(res.step_size)}", file=out)
        print(f"friction={'inf' if res.friction is None else _fmt(res.friction)}", file=out)
        print(f"integrator={res.integrator.value}", file=out)
    else:
        if ns.step_size is None or ns.friction is None:
            raise SpecError("--step-size and --friction must be given together")
        if ns.scheme == "euler_maruyama":
            p = em_sampler_to_sgd(ns.step_size, ns.friction, ns.n_data)
        elif ns.friction == 0:
            print(f"lr={_fmt(ns.n_data * ns.step_size ** 2)}", file=out)
            print("momentum=1.0", file=out)
            print("note=zero friction is the HMC regime", file=out)
            return EXIT_OK
        else:
            p = sampler_to_sgd(ns.step_size, ns.friction, ns.n_data)
        print(f"lr={_fmt(p.learning_rate)}", file=out)
        print(f"momentum={_fmt(p.momentum)}", file=out)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "theorem1-demo": cmd_theorem1,
    "convert-params": cmd_convert,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[ns.command](ns, out=out)
    except (SpecError, ContractViolation, OSError) as exc:
        print(f"ggmc {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
