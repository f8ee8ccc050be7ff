"""Command-line interface.

Every command reads a flat ``key=value`` manifest (``#`` starts a comment,
lists are comma-separated, relative paths resolve against the manifest's
directory).  Exit status is 0 on success, 1 on numerical or convergence
failure and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import io as pio
from .estimator import (
    AggregateDataset,
    RegularizationWeights,
    SolverOptions,
    build_dictionary,
    estimate,
)
from .evaluation import (
    BetaProduct,
    LoocvSettings,
    SyntheticConfig,
    confidence_band,
    loocv,
    sample_estimate,
    simulate_aggregate,
    simulate_paths,
    synthetic_inputs,
)
from .gof import ks2d2s
from .measures import ParameterDomain, cdf, make_uniform_grid
from .sampler import McmcConfig, metropolis_sample, refine_density

logger = logging.getLogger("paramdist")

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


_DEFAULTS = {
    "tau": None,
    "time_unit": "h",
    "q1_min": 0.0,
    "q1_max": 1.0,
    "q2_min": 0.0,
    "q2_max": 1.0,
    "m1": 20,
    "m2": 20,
    "N": 128,
    "w1": 0.0,
    "w2": 0.0,
    "seed": 0,
    "output_dir": "out",
    # synthetic data
    "true_dist": "beta",
    "beta_alpha": 2.0,
    "beta_beta": 5.0,
    "path_count": 100,
    "noise_std": 1e-3,
    # sampling
    "refine_factor": 4,
    "sample_count": 500,
    "burn_in": None,
    "thin": 10,
    # validation
    "alpha": 0.05,
    "ladder": "",
    # solver
    "tolerance": 1e-8,
    "max_iter": 50_000,
}

_INT_KEYS = {"m1", "m2", "N", "seed", "path_count", "refine_factor", "sample_count", "burn_in", "thin", "max_iter"}
_FLOAT_KEYS = {"tau", "q1_min", "q1_max", "q2_min", "q2_max", "w1", "w2", "beta_alpha", "beta_beta", "noise_std", "alpha", "tolerance"}


@dataclass
class Manifest:
    path: Path
    values: dict
    datasets: list[Path] = field(default_factory=list)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def base(self) -> Path:
        return self.path.parent

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    @property
    def out(self) -> Path:
        return self.resolve(self.values["output_dir"])

    def domain(self) -> ParameterDomain:
        try:
            return ParameterDomain(self.q1_min, self.q1_max, self.q2_min, self.q2_max)
        except ValueError as exc:
            raise pio.InputError(f"{self.path}: {exc}") from None

    def grid(self, m1=None, m2=None):
        m1, m2 = m1 or self.m1, m2 or self.m2
        if m1 < 1 or m2 < 1:
            raise pio.InputError(f"{self.path}: grid sizes must be >= 1")
        return make_uniform_grid(self.domain(), m1, m2)

    def reg(self) -> RegularizationWeights:
        try:
            return RegularizationWeights(self.w1, self.w2)
        except ValueError as exc:
            raise pio.InputError(f"{self.path}: {exc}") from None

    def echo(self) -> dict:
        """Configuration echoed into output headers."""
        out = {"tool": f"paramdist {__version__}", "manifest": self.path.name}
        for k in sorted(self.values):
            v = self.values[k]
            if v is not None and v != "":
                out[k] = v
        out["datasets"] = ",".join(p.name for p in self.datasets)
        return out


def load_manifest(path) -> Manifest:
    path = Path(path)
    raw = pio.read_keyvalue(path)
    values = dict(_DEFAULTS)
    datasets = []
    for k, v in raw.items():
        if k == "datasets":
            datasets = [path.parent / s.strip() if not Path(s.strip()).is_absolute() else Path(s.strip())
                        for s in v.split(",") if s.strip()]
            continue
        if k not in _DEFAULTS:
            raise pio.InputError(f"{path}: unknown key {k!r}")
        try:
            if k in _INT_KEYS:
                values[k] = int(v)
            elif k in _FLOAT_KEYS:
                values[k] = float(v)
            else:
                values[k] = v
        except ValueError:
            raise pio.InputError(f"{path}: bad value for {k!r}: {v!r}") from None
    return Manifest(path, values, datasets)


def _episodes(man: Manifest, need_output: bool):
    if not man.datasets:
        raise pio.InputError(f"{man.path}: no datasets listed")
    eps = [pio.read_episode(p, tau=man.tau) for p in man.datasets]
    if need_output:
        for p, ep in zip(man.datasets, eps):
            if ep.output_y is None:
                raise pio.InputError(f"{p}: episode has no y column")
    return eps


def _solver(man: Manifest) -> SolverOptions:
    return SolverOptions(tolerance=man.tolerance, max_iter=man.max_iter)


def _true_dist(man: Manifest):
    kind = man.true_dist
    if kind == "beta":
        return BetaProduct(man.beta_alpha, man.beta_beta, man.domain())
    return pio.read_measure(man.resolve(kind))


# -- commands -------------------------------------------------------------


def cmd_inputs(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"tool": f"paramdist {__version__}", "command": "inputs", "count": args.count, "n": args.n, "tau": args.tau}
    for ep in synthetic_inputs(args.count, args.n, args.tau):
        pio.write_episode(out / f"{ep.id}.csv", ep, echo)
    return EXIT_OK


def cmd_simulate(args) -> int:
    man = load_manifest(args.manifest)
    eps = _episodes(man, need_output=False)
    cfg = SyntheticConfig(_true_dist(man), man.path_count, man.noise_std, man.seed)
    data = simulate_aggregate(eps, cfg, man.N)
    out = man.out
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": "simulate", **man.echo()}
    for src, ep in zip(man.datasets, data.episodes):
        pio.write_episode(out / src.name, ep, echo)
    return EXIT_OK


def cmd_estimate(args) -> int:
    man = load_manifest(args.manifest)
    data = AggregateDataset(tuple(_episodes(man, need_output=True)))
    try:
        data.tau
    except ValueError as exc:
        raise pio.InputError(str(exc)) from None
    grid = man.grid()
    dictionary = build_dictionary(grid, data, man.N)
    reg = man.reg()
    fit = estimate(dictionary, data, reg, _solver(man))
    out = man.out
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": "estimate", **man.echo()}
    pio.write_measure(out / "estimate.csv", fit.measure, echo)
    pio.write_keyvalue(
        out / "estimate.meta",
        {
            "objective": fit.objective,
            "residual_norm": fit.residual_norm,
            "iterations": fit.iterations,
            "converged": str(fit.converged).lower(),
            "w1": reg.w1,
            "w2": reg.w2,
            "N": man.N,
            "M": grid.size,
            "seed": man.seed,
        },
    )
    if not fit.converged and not args.allow_nonconverged:
        raise NumericalFailure(
            f"solver did not converge in {fit.iterations} iterations "
            "(results written; pass --allow-nonconverged to accept)"
        )
    return EXIT_OK


def cmd_sample(args) -> int:
    man = load_manifest(args.manifest)
    measure = pio.read_measure(man.resolve(args.measure))
    count = args.count or man.sample_count
    burn = man.burn_in if man.burn_in is not None else max(count // 10, 100)
    cfg = McmcConfig(burn + count * man.thin, burn, man.seed, man.thin)
    density = refine_density(measure, man.refine_factor)
    samples = metropolis_sample(density, cfg)
    out = Path(args.out) if args.out else man.out / "samples.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    echo = {"command": "sample", **man.echo(), "count": count, "chain_length": cfg.chain_length,
            "burn_in_states": cfg.burn_in, "interpolation": density.method}
    pio.write_samples(out, samples.points, echo)
    pio.write_keyvalue(out.with_suffix(".meta"), {**echo, "acceptance_rate": samples.acceptance_rate})
    return EXIT_OK


def cmd_kstest(args) -> int:
    a = pio.read_samples(args.sample1)
    b = pio.read_samples(args.sample2)
    try:
        res = ks2d2s(a, b)
    except ValueError as exc:
        raise pio.InputError(str(exc)) from None
    lines = [f"# tool=paramdist {__version__}", f"# sample1={args.sample1}", f"# sample2={args.sample2}"]
    text = "\n".join(lines + res.as_lines()) + "\n"
    if args.out:
        Path(args.out).write_text(text, newline="")
    sys.stdout.write(text)
    return EXIT_OK


def parse_ladder(spec: str) -> list[tuple[int, int, int]]:
    """``"4:2,16:4"`` or ``"2x2:2,4x4:4"`` -> [(m1, m2, N), ...]."""
    rungs = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            size, n = item.split(":")
            if "x" in size:
                m1, m2 = (int(s) for s in size.split("x"))
            else:
                root = math.isqrt(int(size))
                if root * root != int(size):
                    raise ValueError
                m1 = m2 = root
            rungs.append((m1, m2, int(n)))
        except ValueError:
            raise pio.InputError(f"bad ladder entry {item!r}; use M:N with square M or m1xm2:N") from None
    return rungs


def cmd_loocv(args) -> int:
    man = load_manifest(args.manifest)
    data = AggregateDataset(tuple(_episodes(man, need_output=True)))
    rungs = parse_ladder(args.ladder or man.ladder) or [(man.m1, man.m2, man.N)]
    settings = LoocvSettings(man.path_count, man.refine_factor, man.thin, _solver(man))
    rows, summary = [], []
    for m1, m2, N in rungs:
        grid = man.grid(m1, m2)
        rep = loocv(data, grid, N, man.reg(), man.path_count, man.seed, settings)
        for f in rep.per_fold:
            rows.append((grid.size, N, f.fold, f.episode_id, f.nrmse, round(f.seconds, 3), str(f.converged).lower()))
        summary.append(f"summary M={grid.size} N={N} nrmse_mean={rep.nrmse_mean!r} excluded={len(rep.excluded)}")
    out = Path(args.out) if args.out else man.out / "loocv.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    pio.write_csv(out, ["M", "N", "fold", "episode_id", "nrmse", "seconds", "converged"], rows,
                  pio.comment_lines({"command": "loocv", **man.echo()}))
    with open(out, "a", newline="") as fh:
        fh.write("".join(f"# {s}\n" for s in summary))
    return EXIT_OK


def cmd_band(args) -> int:
    man = load_manifest(args.manifest)
    measure = pio.read_measure(man.resolve(args.measure))
    ep = pio.read_episode(man.resolve(args.episode), tau=man.tau)
    params = sample_estimate(measure, man.path_count, man.seed, man.refine_factor, man.thin)
    paths = simulate_paths(params, ep.input_u, man.N, ep.tau)
    band = confidence_band(paths, args.alpha or man.alpha, ep.tau)
    out = Path(args.out) if args.out else man.out / "band.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    pio.write_csv(out, ["t", "mean", "lo", "hi"], zip(band.times, band.mean, band.lower, band.upper),
                  {"command": "band", **man.echo(), "episode": ep.id, "multiplier": band.multiplier})
    return EXIT_OK


def cmd_plotdata(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    echo = {"tool": f"paramdist {__version__}", "command": f"plotdata {args.kind}"}
    if args.kind == "cdf":
        if not args.measure:
            raise pio.InputError("plotdata cdf needs --measure")
        measure = pio.read_measure(args.measure)
        F = cdf(measure)
        rows = ((q[0], q[1], f) for q, f in zip(measure.grid.nodes, F.values.ravel()))
        pio.write_csv(out, ["q1", "q2", "F"], rows, {**echo, "measure": args.measure})
    elif args.kind == "hist":
        if not args.samples:
            raise pio.InputError("plotdata hist needs --samples")
        pts = pio.read_samples(args.samples)
        rows = []
        for axis, name in ((0, "q1"), (1, "q2")):
            counts, edges = np.histogram(pts[:, axis], bins=args.bins)
            dens = counts / (counts.sum() * np.diff(edges))
            rows += [(name, lo, hi, int(c), d) for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, dens)]
        pio.write_csv(out, ["param", "lo", "hi", "count", "density"], rows, {**echo, "samples": args.samples, "bins": args.bins})
    elif args.kind == "band":
        if not (args.band and args.episode):
            raise pio.InputError("plotdata band needs --band and --episode")
        header, brows, _ = pio.read_csv(args.band)
        ep = pio.read_episode(args.episode)
        if ep.output_y is None or len(ep) != len(brows):
            raise pio.InputError("episode must have measured y with one value per band row")
        rows = [(r[0], y, r[1], r[2], r[3]) for r, y in zip(brows, ep.output_y)]
        pio.write_csv(out, ["t", "measured", "mean", "lo", "hi"], rows, {**echo, "band": args.band, "episode": args.episode})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paramdist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"paramdist {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inputs", help="write built-in synthetic BrAC input episodes")
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--out", default="inputs")
    p.set_defaults(func=cmd_inputs)

    p = sub.add_parser("simulate", help="generate noisy aggregate TAC for the listed inputs")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate grid weights from aggregate data")
    p.add_argument("manifest")
    p.add_argument("--allow-nonconverged", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sample", help="Metropolis samples from a refined measure")
    p.add_argument("manifest")
    p.add_argument("--measure", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("kstest", help="two-sample 2-D Kolmogorov-Smirnov test")
    p.add_argument("sample1")
    p.add_argument("sample2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kstest)

    p = sub.add_parser("loocv", help="leave-one-episode-out cross-validation")
    p.add_argument("manifest")
    p.add_argument("--ladder", help="complexities as M:N pairs, e.g. 4:2,16:4,64:32")
    p.add_argument("--out")
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("band", help="Bonferroni band of sampled outputs for one episode")
    p.add_argument("manifest")
    p.add_argument("--measure", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("plotdata", help="plot-ready CSVs (cdf surface, histograms, band)")
    p.add_argument("kind", choices=["cdf", "hist", "band"])
    p.add_argument("--measure")
    p.add_argument("--samples")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--band")
    p.add_argument("--episode")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (pio.InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
