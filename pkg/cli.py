"""
Command-line front end.

  eval    one formula value as a JSON record
  sweep   a formula over a linspace grid of one argument, as CSV
  verify  formula against the Monte Carlo oracle, as a JSON report (exit 4 when |z| > 3)
"""
import argparse
import json
import logging
import pathlib
import sys
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

import settings
from errors import ConfigError, ConvergenceError, DomainError, HypothesisError, LevyError, ScopeError
from fluctuation import deficit_laplace, exit_down, exit_up, one_sided_up, ruin_probability
from levy_model import LevyModel
from mc_oracle import SimConfig, simulate_deficit, simulate_occupation, simulate_parisian, simulate_ruin
from occupation import occupation_total_lt, occupation_total_lt_from, occupation_until_passage_lt, parisian_ruin
from scale_fn import Backend, make_evaluator
from schemas import EvalRecord, VerifyReport, load_model_config

logger = logging.getLogger("levy.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_VERIFY = 4

Args = Dict[str, float]


class Quantity(NamedTuple):
    needs: Tuple[str, ...]
    evaluate: Callable[[LevyModel, Args, Optional[Backend]], Tuple[float, Optional[str]]]


def _backend_of(model: LevyModel, q: float, forced: Optional[Backend] = None) -> str:
    return make_evaluator(model, q, forced).backend.value


def _scale(method: str):
    def run(model: LevyModel, a: Args, forced: Optional[Backend]):
        ev = make_evaluator(model, a["q"], forced)
        return getattr(ev, method)(a["x"]), ev.backend.value
    return run


QUANTITIES: Dict[str, Quantity] = {
    "psi": Quantity(("theta",), lambda m, a, f: (m.psi(a["theta"]), None)),
    "psi_prime": Quantity(("theta",), lambda m, a, f: (m.psi_prime(a["theta"]), None)),
    "phi": Quantity(("q",), lambda m, a, f: (m.phi(a["q"]), None)),
    "W": Quantity(("q", "x"), _scale("w")),
    "Wprime": Quantity(("q", "x"), _scale("w_prime")),
    "Z": Quantity(("q", "x"), _scale("z")),
    "w_bar": Quantity(("q", "x"), _scale("w_bar")),
    "exit_up": Quantity(("q", "x", "a"), lambda m, a, f: (exit_up(m, a["q"], a["x"], a["a"]), _backend_of(m, a["q"]))),
    "exit_down": Quantity(("q", "x", "a"),
                          lambda m, a, f: (exit_down(m, a["q"], a["x"], a["a"]), _backend_of(m, a["q"]))),
    "one_sided_up": Quantity(("q", "x", "a"), lambda m, a, f: (one_sided_up(m, a["q"], a["x"], a["a"]), None)),
    "ruin": Quantity(("x",), lambda m, a, f: (ruin_probability(m, a["x"]), _backend_of(m, 0.0))),
    "deficit_laplace": Quantity(("r", "x"),
                                lambda m, a, f: (deficit_laplace(m, a["r"], a["x"]), _backend_of(m, 0.0))),
    "occ_total": Quantity(("lam",), lambda m, a, f: (occupation_total_lt(m, a["lam"]), None)),
    "occ_from_x": Quantity(("lam", "x"),
                           lambda m, a, f: (occupation_total_lt_from(m, a["lam"], a["x"]), _backend_of(m, 0.0))),
    "occ_barrier": Quantity(("lam", "b"), lambda m, a, f: (occupation_until_passage_lt(m, a["lam"], a["b"]),
                                                           _backend_of(m, a["lam"]) if a["lam"] > 0 else None)),
    "parisian": Quantity(("d",), lambda m, a, f: (parisian_ruin(m, a["d"], a.get("x", 0.0)),
                                                  _backend_of(m, 0.0) if a.get("x", 0.0) > 0 else None)),
}

# sweep axis name -> argument name
AXES = {"lambda": "lam", "x": "x", "b": "b", "d": "d", "q": "q"}

POINT_ARGS = ("q", "lam", "x", "a", "b", "d", "r", "theta")


# Argument handling
def _point_args(ns: argparse.Namespace, needs: Sequence[str], free: Optional[str] = None) -> Args:
    args = {name: getattr(ns, name) for name in POINT_ARGS if getattr(ns, name) is not None}
    missing = [n for n in needs if n not in args and n != free]
    if missing:
        raise ConfigError(f"{ns.quantity if 'quantity' in ns else ns.target} needs --{', --'.join(missing)}")
    return args


def _inputs(args: Args, needs: Sequence[str]) -> Args:
    keep = set(needs) | ({"x"} if "x" in args else set())
    return {k: float(v) for k, v in args.items() if k in keep}


def _sim_config(ns: argparse.Namespace, b: Optional[float] = None) -> SimConfig:
    fields = {"bridge": not ns.no_bridge}
    for flag, name in (("paths", "n_paths"), ("dt", "dt"), ("horizon", "horizon"), ("seed", "seed"),
                       ("workers", "workers")):
        value = getattr(ns, flag)
        if value is not None:
            fields[name] = value
    if b is not None:
        fields["b"] = b
    try:
        return SimConfig(**fields)
    except ValidationError as e:
        raise ConfigError(f"invalid simulation settings: {e.errors()[0]['msg']}") from e


def _forced_backend(ns: argparse.Namespace) -> Optional[Backend]:
    return Backend(ns.backend) if getattr(ns, "backend", None) else None


# Subcommands
def cmd_eval(ns: argparse.Namespace) -> int:
    model = load_model_config(ns.config)
    quantity = QUANTITIES[ns.quantity]
    args = _point_args(ns, quantity.needs)
    value, backend = quantity.evaluate(model, args, _forced_backend(ns))
    record = EvalRecord(quantity = ns.quantity, inputs = _inputs(args, quantity.needs), value = value, backend = backend)
    print(record.to_json())
    return EXIT_OK


def cmd_sweep(ns: argparse.Namespace) -> int:
    model = load_model_config(ns.config)
    quantity = QUANTITIES[ns.quantity]
    arg = AXES[ns.axis]
    if arg not in quantity.needs and not (arg == "x" and ns.quantity == "parisian"):
        raise ConfigError(f"{ns.quantity} does not depend on {ns.axis}")
    if ns.num < 2 or not ns.start != ns.stop:
        raise ConfigError("a sweep needs a monotone range with at least 2 points")

    args = _point_args(ns, quantity.needs, free = arg)
    forced = _forced_backend(ns)
    rows: List[str] = [f"{ns.axis},value,backend"]
    for point in np.linspace(ns.start, ns.stop, ns.num):
        args[arg] = float(point)
        value, backend = quantity.evaluate(model, args, forced)
        rows.append(f"{float(point):.17g},{value:.17g},{backend or ''}")
    text = "\n".join(rows) + "\n"

    if ns.out:
        pathlib.Path(ns.out).write_text(text, encoding = "utf-8")
        logger.info("wrote %d rows to %s", ns.num, ns.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _verify_target(target: str, model: LevyModel, args: Args, ns: argparse.Namespace):
    # (formula value, Monte Carlo estimate, inputs reported)
    if target == "thm1":
        lam = args.get("lam", 1.0)
        return occupation_total_lt(model, lam), simulate_occupation(model, lam, _sim_config(ns)), {"lam": lam}
    if target == "thm2":
        lam, b = args.get("lam", 1.0), args.get("b", 1.0)
        formula = occupation_until_passage_lt(model, lam, b)
        return formula, simulate_occupation(model, lam, _sim_config(ns, b = b)), {"lam": lam, "b": b}
    if target == "cor1":
        lam, x = args.get("lam", 1.0), args.get("x", 1.0)
        formula = occupation_total_lt_from(model, lam, x)
        return formula, simulate_occupation(model, lam, _sim_config(ns), x = x), {"lam": lam, "x": x}
    if target == "parisian":
        d, x = args.get("d", 1.0), args.get("x", 0.0)
        if model.sigma > 0:
            raise ScopeError("verify parisian requires a bounded-variation model (sigma = 0)")
        formula = parisian_ruin(model, d, x)
        return formula, simulate_parisian(model, d, _sim_config(ns), x = x), {"d": d, "x": x}
    if target == "ruin":
        x = args.get("x", 0.0)
        return ruin_probability(model, x), simulate_ruin(model, x, _sim_config(ns)), {"x": x}
    if target == "deficit":
        r, x = args.get("r", 1.0), args.get("x", 0.0)
        formula = deficit_laplace(model, r, x)
        return formula, simulate_deficit(model, x, _sim_config(ns), r = r).laplace, {"r": r, "x": x}
    raise ConfigError(f"unknown verification target {target!r}")


def cmd_verify(ns: argparse.Namespace) -> int:
    model = load_model_config(ns.config)
    args = _point_args(ns, ())
    formula, est, inputs = _verify_target(ns.target, model, args, ns)

    diff = est.mean - formula
    if est.std_error > 0:
        z = diff / est.std_error
        passed = abs(z) <= 3.0
    else:
        z = None
        passed = abs(diff) <= 1e-12
    report = VerifyReport(
        target = ns.target,
        inputs = {k: float(v) for k, v in inputs.items()},
        formula_value = formula,
        mc_mean = est.mean,
        mc_stderr = est.std_error,
        z_score = z,
        passed = passed,
        bias_note = est.bias_note.value,
        n_paths = est.n_paths,
        seed = _sim_config(ns).seed,
    )
    text = report.to_json()
    print(text)
    if ns.out:
        pathlib.Path(ns.out).write_text(text + "\n", encoding = "utf-8")
    if not passed:
        logger.warning("verification of %s failed: z = %s", ns.target, z)
        return EXIT_VERIFY
    return EXIT_OK


# Parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog = "levy", description = "Occupation times and fluctuation identities "
                                                                  "of spectrally negative Levy processes")
    parser.add_argument("--log-level", default = settings.LOG_LEVEL, help = "logging level (stderr)")
    sub = parser.add_subparsers(dest = "command", required = True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required = True, help = "model config JSON file")
        for name in POINT_ARGS:
            p.add_argument(f"--{name}", type = float, default = None)
        p.add_argument("--out", default = None, help = "output file")

    p_eval = sub.add_parser("eval", help = "evaluate one quantity")
    p_eval.add_argument("quantity", choices = sorted(QUANTITIES))
    p_eval.add_argument("--backend", choices = [b.value for b in Backend], default = None)
    common(p_eval)
    p_eval.set_defaults(func = cmd_eval)

    p_sweep = sub.add_parser("sweep", help = "evaluate a quantity over a grid")
    p_sweep.add_argument("quantity", choices = sorted(QUANTITIES))
    p_sweep.add_argument("--axis", choices = sorted(AXES), required = True)
    p_sweep.add_argument("--start", type = float, required = True)
    p_sweep.add_argument("--stop", type = float, required = True)
    p_sweep.add_argument("--num", type = int, default = 51)
    p_sweep.add_argument("--backend", choices = [b.value for b in Backend], default = None)
    common(p_sweep)
    p_sweep.set_defaults(func = cmd_sweep)

    p_verify = sub.add_parser("verify", help = "compare a formula with Monte Carlo")
    p_verify.add_argument("target", choices = ["thm1", "thm2", "cor1", "parisian", "ruin", "deficit"])
    p_verify.add_argument("--seed", type = int, default = None)
    p_verify.add_argument("--paths", type = int, default = None)
    p_verify.add_argument("--dt", type = float, default = None)
    p_verify.add_argument("--horizon", type = float, default = None)
    p_verify.add_argument("--workers", type = int, default = None)
    p_verify.add_argument("--no-bridge", action = "store_true", help = "disable the Brownian-bridge barrier check")
    common(p_verify)
    p_verify.set_defaults(func = cmd_verify)
    return parser


def _fail(kind: str, detail: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "detail": detail}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level = ns.log_level.upper(), stream = sys.stderr,
                        format = "%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except ConfigError as e:
        return _fail("config", str(e), EXIT_CONFIG)
    except HypothesisError as e:
        return _fail("hypothesis", str(e), EXIT_DOMAIN)
    except ScopeError as e:
        return _fail("scope", str(e), EXIT_DOMAIN)
    except DomainError as e:
        return _fail("domain", str(e), EXIT_DOMAIN)
    except ConvergenceError as e:
        return _fail("convergence", str(e), EXIT_FAILURE)
    except LevyError as e:
        return _fail("error", str(e), EXIT_FAILURE)
    except ArithmeticError as e:
        return _fail("numerical", f"floating-point failure: {e}", EXIT_FAILURE)
