"""Experiment harness: configuration, subcommands, and persistence.

Subcommands: greens-validate, sample, estimate, scaling, certify,
constructions-check.  Configuration comes from a flat key = value file plus
command-line overrides; unknown keys are rejected.  Every output file starts
with provenance comment lines (config hash and master seed) and contains no
timestamps, so reruns with the same configuration are byte-identical.

Exit codes: 0 pass, 1 scientific-check failure, 2 I/O error, 3 infeasible,
64 usage error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from . import constructions, estimators, greens, lattice, operator, sampler

EXIT_OK = 0
EXIT_SCIENCE_FAIL = 1
EXIT_IO = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64

_CONFIG_KEYS = {
    "n": int,
    "N": "int_list",
    "L": "int_list",
    "gamma": float,
    "trials": int,
    "seed": int,
    "workers": int,
    "out": str,
    "count": int,
    "method": str,
    "kind": str,
}

_DEFAULTS = {
    "n": 2,
    "N": [8],
    "L": [0],
    "gamma": 0.25,
    "trials": 10000,
    "seed": 1069,
    "workers": 1,
    "out": "out",
    "count": 1,
    "method": "direct",
    "kind": "positivity",
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    n: int
    N: list
    L: list
    gamma: float
    trials: int
    seed: int
    workers: int
    out: str
    count: int = 1
    method: str = "direct"
    kind: str = "positivity"
    extras: dict = field(default_factory=dict)

    def validate(self):
        if self.n not in (2, 3):
            raise UsageError(f"n must be 2 or 3, got {self.n}")
        if not self.N:
            raise UsageError("N list must not be empty")
        if any(v < 0 for v in self.N) or any(v < 0 for v in self.L):
            raise UsageError("N and L values must be nonnegative")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if not 0.0 < self.gamma < 0.5:
            raise UsageError("gamma must lie in (0, 1/2)")
        if self.method not in ("direct", "tilted"):
            raise UsageError(f"unknown method {self.method!r}")
        if self.kind not in ("positivity", "smallness"):
            raise UsageError(f"unknown kind {self.kind!r}")
        if not self.grid():
            raise UsageError("no grid point satisfies L <= N")

    def grid(self):
        return [(N, L) for N in self.N for L in self.L if L <= N]

    def as_dict(self) -> dict:
        return {
            "n": self.n, "N": self.N, "L": self.L, "gamma": self.gamma,
            "trials": self.trials, "seed": self.seed, "workers": self.workers,
            "out": self.out, "count": self.count, "method": self.method,
            "kind": self.kind,
        }

    @property
    def config_hash(self) -> str:
        # covers exactly the keys that determine results; output location and
        # worker count are excluded so reruns and worker sweeps hash alike
        payload = {
            k: v for k, v in self.as_dict().items() if k not in ("out", "workers")
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()[:12]

    def provenance_lines(self):
        return [f"config_hash={self.config_hash}", f"seed={self.seed}"]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}


def _parse_int_list(text: str):
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; blank lines and # comments allowed."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, value = (t.strip() for t in line.partition("="))
            if key not in _CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def build_config(args) -> ExperimentConfig:
    merged = dict(_DEFAULTS)
    if args.config:
        merged.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    resolved = {}
    for key, kind in _CONFIG_KEYS.items():
        value = merged[key]
        if kind == "int_list":
            resolved[key] = _parse_int_list(value) if not isinstance(value, list) else value
        elif isinstance(value, str) and kind is not str:
            try:
                resolved[key] = kind(value)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
        else:
            resolved[key] = kind(value) if kind is not str else str(value)
    config = ExperimentConfig(**resolved)
    config.validate()
    return config


def _write_csv(path, provenance_lines, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for line in provenance_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(c) for c in row) + "\n")


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _ensure_outdir(config):
    os.makedirs(config.out, exist_ok=True)


def _factor_source(config):
    """Per-run factor cache; grid commands revisit the same box sizes."""
    cache = {}

    def get(N):
        if N not in cache:
            domain = lattice.BoxDomain(config.n, N)
            cache[N] = greens.factorize(operator.assemble_precision(domain))
        return cache[N]

    return get


def _pool(config):
    if config.workers > 1:
        return ThreadPoolExecutor(max_workers=config.workers)
    return nullcontext(None)


# ---------------------------------------------------------------------------
# subcommands

def cmd_greens_validate(config) -> int:
    factor_for = _factor_source(config)
    rows = [greens.fit_bound_constants(factor_for(N)) for N in config.N]
    path = f"{config.out}/greens_constants.csv"
    greens.write_constants_csv(path, rows, config.provenance_lines())
    stable = True
    for prev, cur in zip(rows, rows[1:]):
        for name in ("c1", "C1", "C2", "C4"):
            a, b = getattr(prev, name), getattr(cur, name)
            ratio = max(a, b) / min(a, b)
            if ratio > 2.0:
                stable = False
                print(f"UNSTABLE {name}: N={prev.N} -> N={cur.N} ratio {ratio:.3f}")
    print(f"wrote {path} ({len(rows)} rows); stable={stable}")
    return EXIT_OK if stable else EXIT_SCIENCE_FAIL


def cmd_sample(config) -> int:
    factor = _factor_source(config)(config.N[0])
    for i in range(config.count):
        stream = sampler.SeededStream(config.seed, i)
        fs = sampler.sample(factor, stream)
        sampler.write_field(fs, f"{config.out}/field_{i:04d}.txt")
    print(f"wrote {config.count} field file(s) to {config.out}")
    return EXIT_OK


def cmd_estimate(config) -> int:
    N, L = config.N[0], config.L[0]
    factor = _factor_source(config)(N)
    domain = factor.domain
    targets = lattice.sub_box(domain, N - L)
    if config.kind == "positivity":
        event = estimators.positivity_event(targets)
    else:
        event = estimators.smallness_event(targets)
    stream = sampler.SeededStream(config.seed, 0)
    with _pool(config) as pool:
        if config.method == "tilted":
            shift = constructions.shift_function(domain, L)
            fraction = estimators.choose_tilt_scale(factor, event, shift,
                                                    stream, pool=pool)
            report = estimators.tilted_mc(factor, event, shift.scaled(fraction),
                                          config.trials, stream, pool=pool)
        else:
            report = estimators.direct_mc(factor, event, config.trials, stream,
                                          pool=pool)
    payload = json.loads(report.to_json())
    payload["provenance"] = config.provenance()
    _write_json(f"{config.out}/estimate.json", payload)
    print(report.to_json())
    if report.status == "below_resolution":
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_scaling(config) -> int:
    factor_for = _factor_source(config)
    rows, points = [], []
    with _pool(config) as pool:
        for index, (N, L) in enumerate(config.grid()):
            factor = factor_for(N)
            domain = factor.domain
            shift = constructions.shift_function(domain, L)
            event = estimators.positivity_event(lattice.sub_box(domain, N - L))
            stream = sampler.SeededStream(config.seed, index)
            fraction = estimators.choose_tilt_scale(factor, event, shift,
                                                    stream, pool=pool)
            report = estimators.tilted_mc(factor, event, shift.scaled(fraction),
                                          config.trials, stream, pool=pool)
            surface = N ** (config.n - 1) / (L + 1) ** (config.n - 1)
            rows.append([
                config.n, N, L, float(surface), fraction,
                report.log_probability if report.log_probability is not None else "",
                report.log_std_error if report.log_std_error is not None else "",
                report.hits, report.effective_sample_size, report.trials,
                report.stream, report.status,
            ])
            if report.status == "ok":
                points.append((N, L, report.log_probability))
    _write_csv(
        f"{config.out}/scaling_estimates.csv", config.provenance_lines(),
        ["n", "N", "L", "surface_ratio", "tilt_fraction", "log_probability",
         "log_std_error", "hits", "ess", "trials", "stream", "status"],
        rows,
    )
    if not points:
        print("all grid points below resolution")
        return EXIT_INFEASIBLE
    try:
        fit = estimators.scaling_fit(points, config.n)
    except ValueError as exc:
        print(f"fit error: {exc}")
        return EXIT_INFEASIBLE
    passed = fit.passed and fit.r_squared >= 0.9
    _write_json(f"{config.out}/scaling_fit.json", {
        "provenance": config.provenance(),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_std_error": fit.slope_std_error,
        "points": fit.points,
        "passed": passed,
    })
    print(f"slope={fit.slope:.6f} r2={fit.r_squared:.4f} passed={passed}")
    return EXIT_OK if passed else EXIT_SCIENCE_FAIL


def cmd_certify(config) -> int:
    factor_for = _factor_source(config)
    rows, skipped, implied = [], [], []
    failed = False
    for N, L in config.grid():
        if L > N / 2:
            skipped.append({"N": N, "L": L, "reason": "L>N/2"})
            continue
        factor = factor_for(N)
        alpha = constructions.choose_alpha(factor, L)
        separated = constructions.separated_boundary_set(factor, L, alpha)
        try:
            cert = constructions.lishao_certificate(separated)
        except (ValueError, RuntimeError) as exc:
            print(f"certificate failed at N={N} L={L}: {exc}")
            failed = True
            continue
        rows.append([config.n, N, L, alpha, cert.set_size,
                     cert.correlation_sum, cert.min_eigenvalue,
                     cert.log2_bound])
        implied.append({
            "N": N, "L": L, "alpha": alpha,
            "decay_constant": math.log(2.0) / (2.0 * alpha ** (config.n - 1)),
        })
    _write_csv(
        f"{config.out}/certificates.csv", config.provenance_lines(),
        ["n", "N", "L", "alpha", "set_size", "corr_sum",
         "min_eig_sigma_x", "log2_upper_bound"],
        rows,
    )
    _write_json(f"{config.out}/certify_summary.json", {
        "provenance": config.provenance(),
        "implied_decay_constants": implied,
        "skipped": skipped,
        "rows": len(rows),
    })
    print(f"wrote {len(rows)} certificate row(s), skipped {len(skipped)}")
    return EXIT_SCIENCE_FAIL if failed else EXIT_OK


def cmd_constructions_check(config) -> int:
    lines, ok = [], True
    for N in config.N:
        domain = lattice.BoxDomain(config.n, N)
        seen = set()
        total = 0
        for k in range(domain.max_annulus_index + 1):
            annulus = lattice.dyadic_annulus(domain, k)
            ids = set(int(i) for i in annulus.indices)
            if seen & ids:
                ok = False
                lines.append(f"FAIL annulus overlap n={config.n} N={N} k={k}")
            seen |= ids
            total += len(annulus)
        if total != domain.site_count or len(seen) != domain.site_count:
            ok = False
            lines.append(f"FAIL annulus partition n={config.n} N={N}")
        else:
            lines.append(f"ok annulus partition n={config.n} N={N}")
        for L in config.L:
            if L > N:
                continue
            try:
                constructions.shift_function(domain, L)
                lines.append(f"ok shift n={config.n} N={N} L={L}")
            except RuntimeError as exc:
                ok = False
                lines.append(f"FAIL shift n={config.n} N={N} L={L}: {exc}")
            try:
                constructions.covering_set(domain, L, config.gamma)
                lines.append(f"ok covering n={config.n} N={N} L={L}")
            except RuntimeError as exc:
                ok = False
                lines.append(f"FAIL covering n={config.n} N={N} L={L}: {exc}")
    path = f"{config.out}/constructions_check.txt"
    with open(path, "w", encoding="utf-8") as fh:
        for line in config.provenance_lines():
            fh.write(f"# {line}\n")
        for line in lines:
            fh.write(line + "\n")
    print(f"wrote {path}; ok={ok}")
    return EXIT_OK if ok else EXIT_SCIENCE_FAIL


_COMMANDS = {
    "greens-validate": cmd_greens_validate,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "scaling": cmd_scaling,
    "certify": cmd_certify,
    "constructions-check": cmd_constructions_check,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="membrane",
                     description="Membrane-model experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--N", default=None, help="comma-separated box sizes")
        p.add_argument("--L", default=None, help="comma-separated margins")
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--count", type=int, default=None)
        p.add_argument("--method", default=None, choices=("direct", "tilted"))
        p.add_argument("--kind", default=None, choices=("positivity", "smallness"))
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = build_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        _ensure_outdir(config)
        return _COMMANDS[args.command](config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
