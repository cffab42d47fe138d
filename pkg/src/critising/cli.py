"""``crit``: sample, estimate, oracle and acceptance subcommands.

Exit codes: 0 success, 1 acceptance failure, 2 usage or invalid
configuration, 3 input/output failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .acceptance import DEFAULT_SEED, TIERS, default_threads, run_acceptance
from .clusters import ClusterLabels, block_variables, crossing_mask, xy_discrepancy
from .estimators import (Estimate, batch_means, char_function_check, kpoint_scaled,
                         mgf_concavity_check, moments, one_arm_indicator, pair_connected,
                         pair_product, rescaled_magnetization, riesz_variance_integral,
                         scale_covariance_ks)
from .field import RenormScheme, field_from_spins, magnetization, sobolev_coefficients, sobolev_norm_sq
from .lattice import build_lattice, is_power_of_two
from .oracle import golden_rows, GOLDEN_FIELDS
from .sampler import Algorithm, SamplerConfig, sample_chain

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SCHEMA_VERSION = "1.0"
SAMPLES_FILE = "samples.csv"
MANIFEST_FILE = "manifest.json"


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """Serialize a number so that it parses back to the same value."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def load_schema(name: str) -> dict:
    return json.loads(resources.files("critising").joinpath("schemas", name).read_text())


# configuration

@dataclass(frozen=True)
class RunConfig:
    experiment: str
    sides: tuple[int, ...]
    boundary: str
    scheme: RenormScheme
    sampler: SamplerConfig
    n_samples: int
    n_chains: int
    seed: int
    output_dir: str | None
    snapshots: bool
    cutoff_rho_inv: tuple[int, ...]
    raw: dict


def parse_config(raw: dict, seed_override: int | None = None) -> RunConfig:
    try:
        jsonschema.validate(raw, load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid config: {exc.message}") from None
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise UsageError("a seed is required (config 'seed' or --seed)")
    bad = [s for s in raw["sides"] if not is_power_of_two(s)]
    if bad:
        raise UsageError(f"sides must be powers of two, got {bad}")
    sch = raw.get("scheme", "wu")
    scheme = RenormScheme.wu() if sch == "wu" else RenormScheme.empirical(sch["empirical"])
    s = raw.get("sampler", {})
    sampler = SamplerConfig(Algorithm.parse(s.get("algorithm", "swendsen-wang")),
                            s.get("beta", SamplerConfig.beta), int(seed),
                            s.get("thermalization_sweeps", 100), s.get("decorrelation_sweeps", 2))
    raw = dict(raw, seed=int(seed))
    return RunConfig(raw["experiment"], tuple(raw["sides"]), raw["boundary"], scheme, sampler,
                     raw["n_samples"], raw.get("n_chains", 1), int(seed), raw.get("output_dir"),
                     bool(raw.get("snapshots", False)), tuple(raw.get("cutoff_rho_inv", (2, 4, 8, 16))),
                     raw)


def read_config(path: str, seed_override: int | None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, seed_override)


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# sampling

SAMPLE_COLUMNS = ("side", "chain", "index", "total_spin", "magnetization", "pair_product",
                  "pair_connected", "center_connected", "one_arm", "sobolev_h2")


@dataclass(frozen=True)
class SampleJob:
    side: int
    chain: int
    cfg: RunConfig


def _sample_job(job: SampleJob):
    cfg = job.cfg
    spec = build_lattice(job.side, cfg.boundary)
    n = job.side
    rhos = [r for r in cfg.cutoff_rho_inv if n % r == 0]
    rows, snaps_spins, snaps_roots = [], [], []
    center = np.array([(n // 2 - 1) * n + n // 2 - 1, (n // 2 - 1) * n + n // 2,
                       n // 2 * n + n // 2 - 1, n // 2 * n + n // 2]) if n >= 2 else None
    theta = cfg.scheme.theta(spec.mesh)

    def obs(state, colored):
        labels = colored.labels
        sep = n // 4
        total = int(state.spins.sum(dtype=np.int64))
        wired = spec.boundary.wired
        cc = float(np.mean(labels.roots[center] == labels.ghost_root)) if wired else math.nan
        arm = one_arm_indicator(labels, n // 4) if wired and n >= 4 else math.nan
        f = field_from_spins(spec, state, cfg.scheme)
        sob = sobolev_norm_sq(sobolev_coefficients(f, 64), 2.0).value
        rests = [theta * int(state.spins[~crossing_mask(labels, r)].sum()) for r in rhos]
        rows.append([n, job.chain, len(rows), total, magnetization(spec, state, cfg.scheme),
                     pair_product(state.spins, sep), pair_connected(labels, sep), cc, arm, sob, *rests])
        if cfg.snapshots:
            snaps_spins.append(state.spins.copy())
            snaps_roots.append(labels.roots.astype(np.int32))

    chain_id = n * 1000 + job.chain
    sample_chain(spec, cfg.sampler, cfg.n_samples, obs, chain=chain_id)
    snap = None
    if cfg.snapshots:
        snap = (np.array(snaps_spins, dtype=np.int8), np.array(snaps_roots, dtype=np.int32))
    return job.side, job.chain, rhos, rows, snap


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_sample(args) -> int:
    cfg = read_config(args.config, args.seed)
    out = Path(args.out or cfg.output_dir or ".") / cfg.experiment
    snapshots = cfg.snapshots or args.snapshots
    if snapshots != cfg.snapshots:
        cfg = RunConfig(**{**cfg.__dict__, "snapshots": snapshots})
    out.mkdir(parents=True, exist_ok=True)
    jobs = [SampleJob(s, c, cfg) for s in cfg.sides for c in range(cfg.n_chains)]
    threads = args.threads or default_threads()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sample_job, jobs))
    else:
        results = [_sample_job(j) for j in jobs]
    all_rhos = sorted({r for _, _, rhos, _, _ in results for r in rhos})
    header = list(SAMPLE_COLUMNS) + [f"cutoff_rest_rho{r}" for r in all_rhos]
    files = {}
    path = out / SAMPLES_FILE
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for side, chain, rhos, rows, snap in sorted(results, key=lambda r: (r[0], r[1])):
            pad = {r: i for i, r in enumerate(rhos)}
            for row in rows:
                base, rests = row[:len(SAMPLE_COLUMNS)], row[len(SAMPLE_COLUMNS):]
                full = base + [rests[pad[r]] if r in pad else math.nan for r in all_rhos]
                w.writerow([fmt(v) for v in full])
            if snap is not None:
                name = f"snapshots_N{side}_c{chain}.npz"
                np.savez_compressed(out / name, spins=snap[0], roots=snap[1], side=side,
                                    boundary=cfg.boundary)
                files[name] = _sha256(out / name)
    files[SAMPLES_FILE] = _sha256(path)
    config_text = json.dumps(cfg.raw, sort_keys=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "version": version_string(),
        "config": cfg.raw,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "files": dict(sorted(files.items())),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {sum(len(r[3]) for r in results)} samples to {out}", file=sys.stderr)
    return EXIT_OK


# estimation

@dataclass
class Archive:
    root: Path
    columns: dict[str, np.ndarray]
    manifest: dict

    @property
    def sides(self) -> list[int]:
        return sorted(set(self.columns["side"].astype(int).tolist()))

    def column(self, name: str, side: int) -> np.ndarray:
        if name not in self.columns:
            raise UsageError(f"archive {self.root} has no column {name!r}")
        mask = self.columns["side"].astype(int) == side
        # chains were written in order, so concatenation is deterministic
        return self.columns[name][mask]

    @property
    def boundary(self) -> str:
        return self.manifest.get("config", {}).get("boundary", "free")

    def snapshots(self, side: int):
        files = sorted(self.root.glob(f"snapshots_N{side}_c*.npz"),
                       key=lambda p: int(p.stem.split("_c")[-1]))
        if not files:
            raise UsageError(f"archive {self.root} has no snapshots for side {side}; "
                             "sample with --snapshots")
        spec = build_lattice(side, self.boundary)
        for f in files:
            with np.load(f) as z:
                spins, roots = z["spins"], z["roots"]
            for s, r in zip(spins, roots):
                yield Snapshot(spec, s, r.astype(np.int64))


@dataclass
class Snapshot:
    """A stored configuration exposing what the block statistics read."""

    spec: object
    spins: np.ndarray
    roots: np.ndarray

    @property
    def labels(self) -> ClusterLabels:
        return ClusterLabels(self.spec, self.roots)

    def spin_grid(self) -> np.ndarray:
        return self.spins


def load_archive(path: str) -> Archive:
    root = Path(path)
    try:
        with (root / SAMPLES_FILE).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
        manifest = json.loads((root / MANIFEST_FILE).read_text())
    except FileNotFoundError as exc:
        raise OSError(f"not a sample archive: {exc.filename}") from exc
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return Archive(root, {h: data[:, i] for i, h in enumerate(header)}, manifest)


EST_HEADER = ("quantity", "side", "parameter", "estimate", "stderr", "n_samples", "description")

KINDS = ("two-point", "one-arm", "moments", "mgf", "charfun", "kpoint", "sobolev", "blocks",
         "cutoff", "ks", "riesz")


def _need_archives(args, k: int) -> list[Archive]:
    if len(args.inputs) != k:
        raise UsageError(f"{args.kind} needs {k} archive(s), got {len(args.inputs)}")
    return [load_archive(p) for p in args.inputs]


def _parse_points(text: str | None) -> list[tuple[int, int]]:
    if not text:
        raise UsageError("kpoint needs --points 'r,c;r,c;...'")
    try:
        return [tuple(int(v) for v in p.split(",")) for p in text.split(";") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse points {text!r}") from None


def estimate_rows(args) -> list[list]:
    kind = args.kind
    rows: list[list] = []
    if kind == "riesz":
        if args.inputs:
            raise UsageError("riesz takes no inputs")
        return [["riesz_integral", "", args.exponent, riesz_variance_integral(args.exponent), 0.0, 0,
                 "integral of |x-y|^(-s) over the unit square squared"]]
    if kind == "ks":
        a, b = _need_archives(args, 2)
        sa, sb = a.sides[0], b.sides[0]
        xa = rescaled_magnetization(a.column("total_spin", sa), sa)
        xb = rescaled_magnetization(b.column("total_spin", sb), sb)
        ks = scale_covariance_ks(xa, xb)
        return [["ks_statistic", f"{sa}:{sb}", f"{ks.n1}:{ks.n2}", ks.statistic, "", ks.n1 + ks.n2,
                 "two-sample KS distance of M/N^(15/8)"]]
    (arc,) = _need_archives(args, 1)
    for side in arc.sides:
        if kind == "two-point":
            e = Estimate.from_samples(arc.column("pair_product", side))
            rows.append(["rho_hat", side, side // 4, e.value, e.stderr, e.n_samples,
                         "spin correlation at diagonal separation (N, N), N = side/4"])
        elif kind == "one-arm":
            e = Estimate.from_samples(arc.column("one_arm", side))
            rows.append(["alpha1", side, side // 4, e.value, e.stderr, e.n_samples,
                         "central 2x2 block connected to the wired boundary"])
        elif kind == "moments":
            m = moments(arc.column("magnetization", side))
            for name, est in (("mean", m.mean), ("variance", m.variance), ("skewness", m.skewness),
                              ("kurtosis_ratio", m.kurtosis_ratio)):
                rows.append([name, side, "", est.value, est.stderr, est.n_samples,
                             "moment of the renormalized magnetization"])
        elif kind == "mgf":
            t = np.round(np.arange(0, args.t_max + 1e-12, args.t_step), 12)
            chk = mgf_concavity_check(arc.column("magnetization", side), t, seed=args.boot_seed)
            for ti, v, s in zip(chk.t, chk.third, chk.stderr):
                rows.append(["log_mgf_third_difference", side, ti, v, s,
                             arc.column("magnetization", side).size,
                             "third finite difference of log E exp(t m)"])
        elif kind == "charfun":
            t = np.round(np.arange(0, args.t_max + 1e-12, args.t_step), 12)
            chk = char_function_check(arc.column("magnetization", side), t, args.k_max)
            i = int(np.argmax(chk.discrepancy))
            n = arc.column("magnetization", side).size
            rows.append(["charfun_max_discrepancy", side, chk.t[i], chk.max_discrepancy,
                         chk.stat_error[i], n, "empirical E exp(itm) minus truncated moment series"])
            rows.append(["charfun_truncation_bound", side, chk.t[i], chk.truncation_bound[i], "", n,
                         "remainder bound of the truncated series"])
        elif kind == "kpoint":
            pts = _parse_points(args.points)
            spec = build_lattice(side, arc.boundary)
            e = kpoint_scaled(spec, (s.spins for s in arc.snapshots(side)), pts)
            rows.append(["kpoint", side, len(pts), e.value, e.stderr, e.n_samples,
                         "normalized spin product at the given sites"])
        elif kind == "sobolev":
            m, se = batch_means(arc.column("sobolev_h2", side))
            rows.append(["sobolev_h2", side, 64, m, se, arc.column("sobolev_h2", side).size,
                         "mean squared H^-2 norm of the field, J_max = 64"])
        elif kind == "cutoff":
            for name in sorted(c for c in arc.columns if c.startswith("cutoff_rest_rho")):
                r = int(name.removeprefix("cutoff_rest_rho"))
                x = arc.column(name, side)
                if np.all(np.isnan(x)):
                    continue
                m2, se2 = batch_means(x ** 2)
                rows.append(["cutoff_l2", side, r, math.sqrt(m2),
                             se2 / (2 * math.sqrt(m2)) if m2 > 0 else 0.0, x.size,
                             "L2 norm of magnetization minus cutoff magnetization, rho = 1/parameter"])
        elif kind == "blocks":
            if args.alpha1 is None:
                raise UsageError("blocks needs --alpha1 (one-arm probability at eps)")
            spec = build_lattice(side, arc.boundary)
            stats = [block_variables(spec, s, args.rho_inv, args.eps_inv) for s in arc.snapshots(side)]
            fit = xy_discrepancy(stats, args.rho_inv, args.eps_inv, args.alpha1)
            rows.append(["xy_discrepancy", side, f"{args.rho_inv}:{args.eps_inv}", fit.discrepancy,
                         fit.stderr, len(stats), "L2 residual of sum X - c beta(eps) sum Y"])
            rows.append(["c_hat", side, f"{args.rho_inv}:{args.eps_inv}", fit.c_hat, "", len(stats),
                         "fitted block constant"])
        else:
            raise UsageError(f"unknown estimate kind {kind!r}")
    return rows


def cmd_estimate(args) -> int:
    if args.kind not in KINDS:
        raise UsageError(f"unknown estimate kind {args.kind!r}; choose from {', '.join(KINDS)}")
    rows = estimate_rows(args)
    buf = io.StringIO()
    write_csv(buf, EST_HEADER, rows)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_oracle(args) -> int:
    rows = golden_rows()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=GOLDEN_FIELDS, lineterminator="\r\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "golden.csv").write_text(buf.getvalue(), newline="")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_acceptance(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    threads = args.threads or default_threads()

    def log(msg):
        print(msg, file=sys.stderr, flush=True)

    report = run_acceptance(args.tier, seed, threads, log)
    jsonschema.validate(report, load_schema("report.schema.json"))
    text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"acceptance_{args.tier}.json").write_text(text)
    else:
        sys.stdout.write(text)
    for c in report["criteria"]:
        print(f"{c['id']:>4} {c['status'].upper():8} {c['title']}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crit", description="Critical Ising field laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=_u64, default=None)
        sp.add_argument("--threads", type=_positive, default=None,
                        help="worker processes (default: $CRIT_THREADS or core count)")
        sp.add_argument("--out", default=None, help="output directory")

    s = sub.add_parser("sample", help="run chains and write a sample archive")
    s.add_argument("--config", required=True)
    s.add_argument("--snapshots", action="store_true", help="also store spins and cluster roots")
    common(s)

    e = sub.add_parser("estimate", help="print an estimate table as CSV")
    e.add_argument("kind")
    e.add_argument("inputs", nargs="*")
    e.add_argument("--config", default=None)
    e.add_argument("--t-max", type=float, default=2.0)
    e.add_argument("--t-step", type=float, default=0.1)
    e.add_argument("--k-max", type=int, default=8)
    e.add_argument("--boot-seed", type=int, default=0)
    e.add_argument("--points", default=None)
    e.add_argument("--rho-inv", type=_positive, default=2)
    e.add_argument("--eps-inv", type=_positive, default=4)
    e.add_argument("--alpha1", type=float, default=None)
    e.add_argument("--exponent", type=float, default=0.25)
    common(e)

    o = sub.add_parser("oracle", help="write exact reference values")
    common(o)

    a = sub.add_parser("acceptance", help="run the acceptance suite")
    a.add_argument("--tier", choices=sorted(TIERS), default="fast")
    a.add_argument("--config", default=None)
    common(a)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.threads is None and os.environ.get("CRIT_THREADS"):
        try:
            args.threads = _positive(os.environ["CRIT_THREADS"])
        except (ValueError, argparse.ArgumentTypeError):
            print("crit: CRIT_THREADS must be a positive integer", file=sys.stderr)
            return EXIT_USAGE
    handlers = {"sample": cmd_sample, "estimate": cmd_estimate, "oracle": cmd_oracle,
                "acceptance": cmd_acceptance}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"crit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"crit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"crit: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
