"""Command-line front end.

Every subcommand reads a JSON config (``--config``) and prints a JSON report,
or CSV for ``validate`` / ``sample``.  Exit codes: 0 success, 2 config error,
3 infeasible parameters, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Callable

import numpy as np

from . import asymptotics as asy
from .fieldsim import (
    FieldSampler,
    grid_for_domain,
    importance_sampling_mc,
    panel_sum_vs_union_mc,
    resolution_points,
    sample_fields,
    sup_mc,
    write_samples_csv,
)
from .kernel import CovarianceModel, KernelError, spectral_moments, standardize
from .lognormal import LogNormalPortfolio, b_for_marginal_tail, one_big_jump_approx, sum_tail_mc
from .partition import as_boxes, build_cover, domain_measure, sum_panel_approx
from .streams import Stream, default_workers

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
VALIDATE_HEADER = ["b", "u", "approx", "is_estimate", "std_error", "ratio"]


class ConfigError(ValueError):
    pass


def _log10(p: float) -> float:
    return math.log10(p) if p > 0 else -math.inf


def _prob(p: float) -> dict[str, float]:
    return {"value": p, "log10": _log10(p)}


# -- config helpers -------------------------------------------------------------


class Config:
    def __init__(self, raw: dict[str, Any], seed: int | None, workers: int | None):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        self.raw = raw
        mc = raw.get("mc", {}) or {}
        if not isinstance(mc, dict):
            raise ConfigError("'mc' must be an object")
        self.mc = mc
        self.seed = seed if seed is not None else mc.get("seed")
        self.workers = workers if workers is not None else mc.get("workers") or default_workers()

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def need(self, key):
        if key not in self.raw:
            raise ConfigError(f"config is missing required key {key!r}")
        return self.raw[key]

    def number(self, key, default=None) -> float:
        value = self.raw.get(key, default)
        if value is None:
            raise ConfigError(f"config is missing required key {key!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key!r} must be a number, got {value!r}") from None

    def model(self) -> CovarianceModel:
        return CovarianceModel.from_dict(self.need("kernel"))

    def boxes(self) -> np.ndarray:
        try:
            return as_boxes(self.need("domain"))
        except ValueError as exc:
            raise ConfigError(f"bad domain: {exc}") from None

    def stream(self) -> Stream:
        if self.seed is None:
            raise ConfigError("a seed is required for Monte Carlo commands (--seed or mc.seed)")
        try:
            return Stream(int(self.seed))
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}") from None

    def n_samples(self, default: int = 100_000) -> int:
        n = int(self.mc.get("n_samples", default))
        if n < 1:
            raise ConfigError("mc.n_samples must be positive")
        return n

    def thresholds(self, model, measure, sigma) -> list[float]:
        """Raw-coordinate ``b`` values from ``b`` or ``target_prob`` (scalar or list)."""
        has_b, has_t = "b" in self.raw, "target_prob" in self.raw
        if has_b == has_t:
            raise ConfigError("supply exactly one of 'b' and 'target_prob'")
        values = self.raw["b" if has_b else "target_prob"]
        values = values if isinstance(values, list) else [values]
        try:
            values = [float(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError("'b' / 'target_prob' must be numbers") from None
        if has_b:
            return values
        std_model, affine = standardize(model)
        std_measure = measure / affine.measure_factor
        return [asy.b_for_probability(std_model, std_measure, sigma, t) * affine.measure_factor for t in values]


# -- subcommands ----------------------------------------------------------------


def cmd_moments(cfg: Config) -> dict:
    raw = cfg.model()
    model, affine = standardize(raw)
    m = spectral_moments(model)
    return {
        "d": model.d,
        "mu20": m.mu20.tolist(),
        "mu22": m.mu22.tolist(),
        "quartic_diag": m.quartic_diag.tolist(),
        "det_gamma": m.det_gamma,
        "gamma": m.gamma.tolist(),
        "standardization": {"sigma_half": affine.sigma_half.tolist(), "measure_factor": affine.measure_factor},
    }


def cmd_approx(cfg: Config) -> dict:
    raw = cfg.model()
    sigma = cfg.number("sigma", 1.0)
    measure = domain_measure(cfg.boxes())
    rows = []
    for b in cfg.thresholds(raw, measure, sigma):
        a = asy.tail_approx_raw(raw, measure, sigma, b)
        rows.append(
            {
                "b": b,
                "u": a.u,
                "u_tilde": a.u_tilde,
                "H": a.H,
                "domain_measure": a.domain_measure,
                "probability": a.probability,
                "log10_probability": a.log10_probability,
                "warnings": list(a.warnings),
            }
        )
    return rows[0] if len(rows) == 1 else {"results": rows}


def _validation_rows(cfg: Config) -> list[list[float]]:
    raw = cfg.model()
    sigma = cfg.number("sigma", 1.0)
    boxes = cfg.boxes()
    measure = domain_measure(boxes)
    stream = cfg.stream()
    n = cfg.n_samples()
    _, affine = standardize(raw)
    thresholds = cfg.thresholds(raw, measure, sigma)
    widest = float(np.max(boxes[:, :, 1] - boxes[:, :, 0])) * float(np.linalg.norm(affine.sigma_half, 2))
    rows = []
    for i, b in enumerate(thresholds):
        approx = asy.tail_approx_raw(raw, measure, sigma, b)
        m = cfg.mc.get("grid_points_per_axis") or resolution_points(approx.u, widest)
        grid = grid_for_domain(boxes, int(m))
        est = importance_sampling_mc(raw, grid, sigma, b, n, stream.child(i), cfg.workers)
        ratio = approx.probability / est.estimate if est.estimate > 0 else math.inf
        rows.append([b, approx.u, approx.probability, est.estimate, est.std_error, ratio])
    return rows


def cmd_validate(cfg: Config) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VALIDATE_HEADER)
    for row in _validation_rows(cfg):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def cmd_u_solve(cfg: Config) -> dict:
    sigma = cfg.number("sigma", 1.0)
    d = int(cfg.get("d") or cfg.model().d)
    b = cfg.number("b")
    u = asy.solve_u(b, sigma, d)
    try:
        ut = asy.u_closed_form(b, sigma, d)
    except ValueError:
        ut = None
    residual = math.expm1(asy.log_forward_b(u, sigma, d) - math.log(b))
    return {"b": b, "sigma": sigma, "d": d, "u": u, "u_tilde": ut, "relative_residual": residual}


def cmd_h_const(cfg: Config) -> dict:
    model, _ = standardize(cfg.model())
    sigma = cfg.number("sigma", 1.0)
    moments = spectral_moments(model)
    out = {"sigma": sigma, "d": model.d, "H": asy.constant_H(moments, sigma)}
    methods = cfg.get("methods", [])
    for method in methods if isinstance(methods, list) else [methods]:
        if method not in asy.H_METHODS:
            raise ConfigError(f"unknown H method {method!r}")
        out[f"H_{method}"] = asy.constant_H(moments, sigma, method=method)
    return out


def _cover(cfg: Config, model, sigma, b):
    u = asy.solve_u(b, sigma, model.d)
    anchor = cfg.get("anchor", "corner")
    return build_cover(cfg.boxes(), u, cfg.number("kappa", 1.0), cfg.number("delta", 0.1), anchor=anchor)


def cmd_cover(cfg: Config) -> dict:
    model, affine = standardize(cfg.model())
    if not np.allclose(affine.sigma_half, np.eye(model.d)):
        raise ConfigError("cover needs a standardized kernel (panel sizes are in standardized units)")
    sigma = cfg.number("sigma", 1.0)
    b = cfg.thresholds(model, domain_measure(cfg.boxes()), sigma)[0]
    cover = _cover(cfg, model, sigma, b)
    lower, upper = sum_panel_approx(cover, model, sigma, b)
    return {
        "b": b,
        "u": cover.u,
        "epsilon": cover.epsilon,
        "kappa": cover.kappa,
        "delta": cover.delta,
        "inner_indices": cover.inner_indices.tolist(),
        "outer_indices": cover.outer_indices.tolist(),
        "inner_measure": cover.inner_measure,
        "outer_measure": cover.outer_measure,
        "domain_measure": domain_measure(cover.domain),
        "lower": _prob(lower),
        "upper": _prob(upper),
    }


def cmd_panels_vs_union(cfg: Config) -> dict:
    model, affine = standardize(cfg.model())
    if not np.allclose(affine.sigma_half, np.eye(model.d)):
        raise ConfigError("panels-vs-union needs a standardized kernel")
    sigma = cfg.number("sigma", 1.0)
    b = cfg.thresholds(model, domain_measure(cfg.boxes()), sigma)[0]
    cover = _cover(cfg, model, sigma, b)
    which = cfg.get("which", "outer")
    union, total = panel_sum_vs_union_mc(
        model, cover, sigma, b, cfg.n_samples(), cfg.stream(), which,
        cfg.mc.get("grid_points_per_axis"), cfg.workers,
    )
    return {
        "b": b,
        "u": cover.u,
        "panels": len(cover.outer_indices if which == "outer" else cover.inner_indices),
        "union": union.as_dict(),
        "sum": total.as_dict(),
        "ratio": total.estimate / union.estimate if union.estimate > 0 else math.inf,
    }


def cmd_suprate(cfg: Config) -> dict:
    raw = cfg.model()
    boxes = cfg.boxes()
    measure = domain_measure(boxes)
    levels = cfg.need("u_levels")
    levels = [float(x) for x in (levels if isinstance(levels, list) else [levels])]
    m = int(cfg.mc.get("grid_points_per_axis", 64))
    grid = grid_for_domain(boxes, m)
    sampler = FieldSampler(raw, grid)
    stream = cfg.stream()
    rows = []
    for i, u in enumerate(levels):
        est = sup_mc(raw, grid, u, cfg.n_samples(), stream.child(i), "is", cfg.workers, sampler)
        shape = asy.sup_rate_shape(u, raw.d)
        rows.append(
            {
                "u": u,
                "sup_probability": est.as_dict(),
                "shape": _prob(shape),
                "fitted_G": asy.fit_sup_constant(est.estimate, measure, u, raw.d),
            }
        )
    return {"domain_measure": measure, "levels": rows}


def cmd_lognormal(cfg: Config) -> dict:
    try:
        p = LogNormalPortfolio(cfg.need("mu"), cfg.need("cov"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if ("b" in cfg.raw) == ("marginal_tail" in cfg.raw):
        raise ConfigError("supply exactly one of 'b' and 'marginal_tail'")
    b = cfg.number("b") if "b" in cfg.raw else b_for_marginal_tail(p, cfg.number("marginal_tail"))
    out: dict[str, Any] = {"b": b, "approx": _prob(one_big_jump_approx(p, b))}
    if cfg.seed is not None or cfg.mc:
        est = sum_tail_mc(p, b, cfg.n_samples(), cfg.stream(), cfg.workers)
        out["mc"] = est.as_dict()
        out["ratio"] = est.estimate / out["approx"]["value"]
    return out


def cmd_sample(cfg: Config) -> str:
    raw = cfg.model()
    grid = grid_for_domain(cfg.boxes(), int(cfg.mc.get("grid_points_per_axis", 32)))
    n = int(cfg.mc.get("n_samples", 1))
    samples = sample_fields(raw, grid, n, cfg.stream(), cfg.workers)
    buf = io.StringIO()
    write_samples_csv(buf, grid, samples)
    return buf.getvalue()


COMMANDS: dict[str, tuple[Callable[[Config], Any], str]] = {
    "moments": (cmd_moments, "spectral moments of the standardized kernel"),
    "approx": (cmd_approx, "tail approximation of the exponential integral"),
    "validate": (cmd_validate, "approximation vs importance sampling, CSV rows"),
    "u-solve": (cmd_u_solve, "solve the threshold equation"),
    "h-const": (cmd_h_const, "the constant H (closed form, optional quadrature)"),
    "cover": (cmd_cover, "inner/outer panel covers and the sandwich bounds"),
    "panels-vs-union": (cmd_panels_vs_union, "sum of panel probabilities vs union probability"),
    "suprate": (cmd_suprate, "supremum exceedance and fitted rate constant"),
    "lognormal": (cmd_lognormal, "log-normal sum tail: approximation and IS estimate"),
    "sample": (cmd_sample, "dump raw field samples as CSV"),
}
CSV_COMMANDS = {"validate", "sample"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grftails", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to JSON config ('-' for stdin)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default=None)
    return parser


def _read_config(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from None


def _render(name: str, result, fmt: str | None) -> str:
    if isinstance(result, str):
        if fmt == "json":
            rows = list(csv.reader(io.StringIO(result)))
            return json.dumps([{k: float(v) for k, v in zip(rows[0], r)} for r in rows[1:]], indent=2) + "\n"
        return result
    if fmt == "csv":
        flat = result.get("results", [result]) if isinstance(result, dict) else result
        buf = io.StringIO()
        keys = [k for k, v in flat[0].items() if not isinstance(v, (list, dict))]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for row in flat:
            w.writerow([row[k] for k in keys])
        return buf.getvalue()
    return json.dumps(_finite(result), indent=2, allow_nan=False) + "\n"


def _finite(obj):
    """Strict JSON: non-finite floats (log10 of an exact zero, say) become null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    try:
        cfg = Config(_read_config(args.config), args.seed, args.workers)
        result = fn(cfg)
        text = _render(args.command, result, args.format)
    except asy.InfeasibleThresholdError as exc:
        print(f"error: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, KernelError, ValueError, KeyError, TypeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            sys.stdout = None  # reader went away (e.g. piped into head)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
