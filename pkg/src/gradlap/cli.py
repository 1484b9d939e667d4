"""Command-line entry point: read a run configuration, run one solver, write tables.

Every run writes two files into ``--out``:

``fields.csv``
    one row per lattice node in ascending index order with columns
    ``node, x[, y], interior, strip, d`` followed by one column per computed
    field; floats use 17 significant digits so identical runs give
    byte-identical tables.
``summary.json``
    command, resolved parameters, solver and check reports, package versions.

Exit status: 0 on success (for ``verify``: all checks passed), 1 when a
solver did not converge or a check failed, 2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analytic import CATALOG, ExampleProblem, example_library
from .dpp import GameSpec, Variant, dpp_solve, payoff_lipschitz
from .grid import ConfigurationError, Disk, GridDomain, Points, Rectangle, Segment, Union_
from .montecarlo import estimate_value
from .patching import patched_solution, solve_infinity_harmonic
from .variational import DEFAULT_SCHEDULE, p_continuation, sup_norm_gradient
from .verify import check_lip_bound, check_minimal_vs_variational, check_ordering, check_oscillation

logger = logging.getLogger(__name__)

COMMANDS = ("solve-game", "solve-jensen", "solve-harmonic", "patch", "solve-plap", "montecarlo", "verify")

#: Defaults for every numeric key; ``None`` means "taken from the catalog problem".
DEFAULTS = {
    "problem": None,
    "spacing": None,
    "eps": None,
    "variant": "d-game",
    "price": None,
    "sphere_samples": None,
    "strip_fill": "extend",
    "tol": None,
    "max_iter": 1000000,
    "patch_eps": 1.0,
    "p_schedule": list(DEFAULT_SCHEDULE),
    "g_scale": 1.0,
    "seed": 0,
    "n_samples": 10000,
    "step_cap": 100000,
    "x0": None,
    "check_tol": 1e-9,
    "variational_tol": 0.15,
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    """Parse a JSON or YAML mapping (YAML is a superset, so one parser serves both)."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a key-value mapping")
    return data


def _shape(desc):
    if desc is None or desc == "all":
        return desc
    if not isinstance(desc, dict) or "type" not in desc:
        raise ConfigurationError(f"shape must be a mapping with a 'type', got {desc!r}")
    kind = desc["type"]
    try:
        if kind == "segment":
            return Segment(float(desc["lo"]), float(desc["hi"]))
        if kind == "rectangle":
            return Rectangle(tuple(map(float, desc["lo"])), tuple(map(float, desc["hi"])))
        if kind == "disk":
            return Disk(tuple(map(float, desc["center"])), float(desc["radius"]))
        if kind == "points":
            return Points(tuple(tuple(map(float, p)) for p in desc["points"]))
        if kind == "union":
            return Union_(tuple(_shape(p) for p in desc["parts"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad {kind} shape: {exc}") from None
    raise ConfigurationError(f"unknown shape type {kind!r}")


def _payoff_fn(desc):
    """``{"type": "linear", "coef": [...], "const": c}``; omitted means zero."""
    if desc is None:
        desc = {"type": "linear", "coef": [], "const": 0.0}
    if desc.get("type") != "linear":
        raise ConfigurationError("payoff must be of type 'linear'")
    coef = np.asarray(desc.get("coef", []), float)
    const = float(desc.get("const", 0.0))

    def fn(c):
        out = np.full(c.shape[:-1], const)
        for k, a in enumerate(coef[: c.shape[-1]]):
            out = out + a * c[..., k]
        return out

    return fn


def _inline_problem(desc: dict) -> ExampleProblem:
    g_kind = desc.get("g", "indicator")
    if g_kind not in ("indicator", "zero"):
        raise ConfigurationError("g must be 'indicator' or 'zero'")

    def g_fn(grid):
        return grid.d_mask.astype(float) if g_kind == "indicator" else np.zeros(grid.shape)

    return ExampleProblem(
        name=desc.get("name", "inline"),
        domain=_shape(desc.get("domain")),
        d_shape=_shape(desc.get("d")),
        spacing=float(desc.get("spacing", 0.05)),
        eps=float(desc.get("eps", 0.1)),
        payoff_fn=_payoff_fn(desc.get("payoff")),
        g_fn=g_fn,
        exact_solution=None,
        variational_exact=None,
        expected_relation="none",
        extra={"x0": tuple(desc["x0"])} if "x0" in desc else {},
    )


def resolve(cfg: dict) -> tuple[dict, ExampleProblem]:
    """Merge ``cfg`` with the defaults and validate every parameter."""
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    params = {**DEFAULTS, **cfg}
    prob = params["problem"]
    if prob is None:
        raise ConfigurationError(f"config needs 'problem' (one of {sorted(CATALOG)} or an inline mapping)")
    if isinstance(prob, str):
        try:
            problem = example_library(prob)
        except KeyError as exc:
            raise ConfigurationError(str(exc.args[0])) from None
    elif isinstance(prob, dict):
        problem = _inline_problem(prob)
    else:
        raise ConfigurationError("problem must be a catalog name or a mapping")
    params["problem"] = problem.name
    if params["spacing"] is None:
        params["spacing"] = problem.spacing
    if params["eps"] is None:
        params["eps"] = problem.eps
    if params["sphere_samples"] is None:
        params["sphere_samples"] = problem.sphere_samples
    if params["strip_fill"] not in ("extend", "nearest"):
        raise ConfigurationError("strip_fill must be 'extend' or 'nearest'")
    if params["strip_fill"] == "nearest" and not hasattr(problem.domain, "project_boundary"):
        raise ConfigurationError(f"strip_fill 'nearest' is not available for domain {problem.domain!r}")
    problem = dataclasses.replace(problem, strip_fill=params["strip_fill"])
    for key in ("spacing", "eps", "g_scale", "patch_eps", "check_tol", "variational_tol"):
        try:
            val = float(params[key])
        except (TypeError, ValueError):
            raise ConfigurationError(f"{key} must be a number") from None
        if not (math.isfinite(val) and val > 0):
            raise ConfigurationError(f"{key} must be positive and finite, got {params[key]!r}")
        params[key] = val
    for key in ("max_iter", "n_samples", "step_cap", "sphere_samples", "seed"):
        if not isinstance(params[key], int) or isinstance(params[key], bool) or params[key] < 0:
            raise ConfigurationError(f"{key} must be a nonnegative integer")
    if params["tol"] is not None and not float(params["tol"]) > 0:
        raise ConfigurationError("tol must be positive")
    if params["price"] is not None and not float(params["price"]) > 0:
        raise ConfigurationError("price must be positive")
    try:
        params["variant"] = Variant(params["variant"]).value
    except ValueError:
        raise ConfigurationError(f"variant must be one of {[v.value for v in Variant]}") from None
    sched = params["p_schedule"]
    if not isinstance(sched, (list, tuple)) or not sched:
        raise ConfigurationError("p_schedule must be a nonempty list")
    params["p_schedule"] = [float(p) for p in sched]
    ps = params["p_schedule"]
    if ps[0] <= 2 or any(b <= a for a, b in zip(ps, ps[1:])):
        raise ConfigurationError("p_schedule must be strictly increasing with first entry > 2")
    return params, problem


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_fields(path: Path, grid: GridDomain, fields: dict[str, np.ndarray]):
    """Write the node table; rows are in node index order."""
    coords = grid.coords.reshape(-1, grid.dim)
    cols = ["x", "y"][: grid.dim]
    masks = [grid.interior_mask.reshape(-1), grid.strip_mask.reshape(-1), grid.d_mask.reshape(-1)]
    flat = {k: np.asarray(v, float).reshape(-1) for k, v in fields.items()}
    lines = [",".join(["node", *cols, "interior", "strip", "d", *flat])]
    for i in range(grid.size):
        row = [str(i)]
        row += [_fmt(c) for c in coords[i]]
        row += [str(int(m[i])) for m in masks]
        row += [_fmt(v[i]) for v in flat.values()]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if k != "fields"}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _versions() -> dict:
    return {"gradlap": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _game(grid, problem, params, variant, price=None, sphere_samples=None):
    spec = GameSpec(
        variant,
        params["eps"],
        problem.payoff(grid),
        price=price if price is not None else params["price"],
        sphere_samples=params["sphere_samples"] if sphere_samples is None else sphere_samples,
    )
    return dpp_solve(grid, spec, tol=params["tol"], max_iter=params["max_iter"])


def _variational(grid, problem, params):
    spec = problem.variational_spec(grid, scale=params["g_scale"], p_schedule=params["p_schedule"])
    return p_continuation(grid, spec)


def run(command: str, params: dict, problem: ExampleProblem) -> tuple[int, GridDomain, dict, dict]:
    """Dispatch one command; returns (status, grid, fields, summary)."""
    grid = problem.build_grid(params["spacing"], params["eps"])
    fields: dict = {}
    reports: dict = {}
    checks: list = []
    extra: dict = {}
    ok = True

    if command == "solve-game":
        u, rep = _game(grid, problem, params, Variant(params["variant"]))
        fields["u_eps"] = u
        reports["game"] = rep.as_dict()
        ok = rep.converged
    elif command == "solve-jensen":
        z, rep = _game(grid, problem, params, Variant.OMEGA_GAME)
        fields["z_eps"] = z
        reports["jensen"] = rep.as_dict()
        ok = rep.converged
    elif command == "solve-harmonic":
        h, rep = _game(grid, problem, params, Variant.TUG_OF_WAR)
        fields["h"] = h
        reports["harmonic"] = rep.as_dict()
        ok = rep.converged
    elif command == "patch":
        payoff = problem.payoff(grid)
        h, rep = solve_infinity_harmonic(grid, payoff, tol=params["tol"], max_iter=params["max_iter"])
        fields["h"] = h
        reports["harmonic"] = rep.as_dict()
        ok = rep.converged
        h_eps, dec = patched_solution(grid, payoff, params["patch_eps"], h=h)
        fields["lip"] = dec.lip_field
        fields["h_eps"] = h_eps
        extra["patch"] = {
            "eps": params["patch_eps"],
            "components": len(dec.components),
            "v_eps_nodes": int(dec.v_eps_mask.sum()),
            "ambiguous_nodes": dec.n_ambiguous,
        }
    elif command == "solve-plap":
        u, rep = _variational(grid, problem, params)
        fields["u_inf"] = u
        reports["variational"] = rep.as_dict()
        extra["sup_norm_gradient"] = sup_norm_gradient(grid, u)
        ok = rep.converged
    elif command == "montecarlo":
        variant = Variant(params["variant"])
        # the walk moves between lattice nodes, so the guide is the lattice-ball fixed point
        guide, rep = _game(grid, problem, params, variant, sphere_samples=0)
        fields["guide"] = guide
        reports["game"] = rep.as_dict()
        x0 = params["x0"]
        if x0 is None:
            x0 = problem.extra.get("x0", [0.0] * grid.dim)
        node = grid.nearest_node(x0)
        if not grid.interior_mask.reshape(-1)[node]:
            raise ConfigurationError(f"x0={x0} is not an interior node")
        spec = GameSpec(variant, params["eps"], problem.payoff(grid), price=params["price"])
        est = estimate_value(grid, spec, guide, node, params["n_samples"], params["seed"], params["step_cap"])
        extra["estimate"] = {
            "x0": [float(c) for c in grid.node_coords(node)],
            "mean": est.mean,
            "half_width_95": est.half_width_95,
            "n": est.n,
            "n_capped": est.n_capped,
            "reliable": est.reliable,
            "fixed_point_value": float(guide.reshape(-1)[node]),
            **est.details,
        }
        ok = rep.converged and est.reliable
    elif command == "verify":
        z, rz = _game(grid, problem, params, Variant.OMEGA_GAME)
        u, ru = _game(grid, problem, params, Variant.D_GAME)
        h, rh = _game(grid, problem, params, Variant.TUG_OF_WAR)
        fields.update(z_eps=z, u_eps=u, h=h)
        reports.update(jensen=rz.as_dict(), game=ru.as_dict(), harmonic=rh.as_dict())
        ok = rz.converged and ru.converged and rh.converged
        payoff = problem.payoff(grid)
        tol = params["check_tol"]
        checks.append(check_ordering(z, u, h, tol, grid=grid))
        for name, f in (("z_eps", z), ("u_eps", u), ("h", h)):
            rep = check_oscillation(grid, f, params["eps"], payoff, tol)
            rep.name = f"oscillation[{name}]"
            checks.append(rep)
        v, rv = _variational(grid, problem, params)
        fields["u_inf"] = v
        reports["variational"] = rv.as_dict()
        ok = ok and rv.converged
        checks.append(check_lip_bound(grid, v, payoff_lipschitz(grid, payoff), 0.1))
        if problem.expected_relation in ("all", "minimal", "relations"):
            checks.append(
                check_minimal_vs_variational(
                    problem, params["variational_tol"], grid=grid, game_field=u, variational_field=v, solve_tol=params["tol"]
                )
            )
        ok = ok and all(c.passed for c in checks)
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigurationError(f"unknown command {command!r}")

    summary = {
        "command": command,
        "status": 0 if ok else 1,
        "parameters": params,
        "reports": reports,
        "checks": [c.as_dict() for c in checks],
        **extra,
        "versions": _versions(),
    }
    return (0 if ok else 1), grid, fields, summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradlap", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON or YAML file with run parameters")
    parser.add_argument("--problem", help="catalog problem name (overrides config)")
    parser.add_argument("--out", default="gradlap_out", help="output directory (default: %(default)s)")
    parser.add_argument("--threads", type=int, default=1, help="thread count; recorded, results do not depend on it")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.problem is not None:
            cfg["problem"] = args.problem
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        params, problem = resolve(cfg)
        status, grid, fields, summary = run(args.command, params, problem)
    except ConfigurationError as exc:
        print(f"gradlap: invalid configuration: {exc}", file=sys.stderr)
        return 2
    summary["threads"] = args.threads
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fields(out / "fields.csv", grid, fields)
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    if status:
        print(f"gradlap: {args.command} finished with status {status}; see {out / 'summary.json'}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
