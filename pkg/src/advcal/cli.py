"""Command-line front end: one subcommand per engine operation.

Exit status 0 on success, 1 on a negative finding the caller asked to
assert, 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from .calibration import CalibrationQuery, calibration_verdict, delta_max_bruteforce, delta_max_reduced
from .consistency import ExperimentConfig, consistency_experiment
from .errors import AdvCalError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    MonotoneFn,
    adversarial_margins,
    margins_oracle,
)
from .losses import MarginLoss, verify_loss_properties
from .risk import inner_risk, minimal_inner_risk
from .theorems import (
    check_qce_glm,
    check_qce_linear,
    check_relu_corollary,
    convex_negative_witness,
    radial_x_grid,
    regularity_theorem_check,
    sup_rho_positive_check,
)

OUTPUT_DIR_ENV = "ADVCAL_OUTPUT_DIR"
COMMANDS = ("losses", "margins", "risk", "delta-max", "verdict", "check-theorem", "witness",
            "experiment")


class UsageError(Exception):
    """Bad command line or configuration; exit status 2."""


def load_schema(name: str) -> dict[str, Any]:
    text = resources.files("advcal").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(doc: Any, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"{name} schema violation at {where}: {exc.message}") from None


def fmt(v: Any) -> str:
    if isinstance(v, float):
        return format(v + 0.0, ".17g")  # + 0.0 folds -0.0 into 0.0
    return str(v)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# config assembly


def _loss_from_flags(a: argparse.Namespace) -> dict[str, Any] | None:
    if getattr(a, "loss", None) is None:
        return None
    params: dict[str, Any] = {}
    if getattr(a, "rho", None) is not None:
        params["rho"] = a.rho
    if getattr(a, "base", None) is not None:
        params["base"] = a.base
    return {"kind": a.loss, "params": params}


def _family_from_flags(a: argparse.Namespace) -> dict[str, Any] | None:
    if getattr(a, "family", None) is None:
        return None
    params: dict[str, Any] = {}
    for flag, key in (("dim", "dim"), ("G", "G"), ("width", "width"), ("lam", "lam"),
                      ("w_bound", "w_bound"), ("R", "R")):
        value = getattr(a, flag, None)
        if value is not None:
            params[key] = value
    if getattr(a, "link", None) is not None and a.family == "glm":
        params["link"] = a.link
    if a.family == "relu_glm" and "G" not in params:
        params["G"] = 1.5
    return {"kind": a.family, "params": params}


_SCALAR_FLAGS = ("form", "gamma", "eta", "epsilon", "method", "tol", "theta", "x", "epsilons",
                 "x_norms", "etas", "id", "G", "rho", "x_max", "x_points", "n_train", "n_test",
                 "optimizer", "minimal", "oracle", "verify", "cross_check", "t_lo", "t_hi",
                 "points")
# flags that belong to the loss or family descriptor in these commands, not the top level
_DESCRIPTOR_FLAGS = {"G", "rho"}


def build_config(cmd: str, a: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if a.config is not None:
        try:
            cfg = json.loads(Path(a.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {a.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed JSON in {a.config}: {exc.msg} at line {exc.lineno}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    allowed = set(load_schema(f"{cmd}.config")["properties"])
    loss = _loss_from_flags(a)
    if loss is not None:
        if cmd == "losses":
            cfg["losses"] = [loss]
        else:
            cfg["loss"] = loss
    family = _family_from_flags(a)
    if family is not None:
        cfg["family"] = family
    for flag in _SCALAR_FLAGS:
        value = getattr(a, flag, None)
        if value is None or flag not in allowed:
            continue
        if flag in _DESCRIPTOR_FLAGS and cmd != "check-theorem":
            continue
        cfg[flag] = value
    if cmd == "experiment" and getattr(a, "r_min", None) is not None:
        cfg.setdefault("distribution", {})["r_min"] = a.r_min
    if getattr(a, "seed", None) is not None and "seed" in allowed:
        cfg["seed"] = a.seed
    if getattr(a, "threads", None) is not None and "threads" in allowed:
        cfg["threads"] = a.threads
    validate(cfg, f"{cmd}.config")
    return cfg


def _grid(cfg: dict[str, Any]) -> GridSpec:
    return DEFAULT_GRID.with_(**cfg.get("grid", {}))


def _loss(cfg: dict[str, Any]) -> MarginLoss:
    if "loss" not in cfg:
        raise UsageError("this command needs a loss")
    return MarginLoss.from_descriptor(cfg["loss"])


def _family(cfg: dict[str, Any], default: str = "linear") -> HypothesisFamily:
    return HypothesisFamily.from_descriptor(cfg.get("family", {"kind": default}))


# commands; each returns (json document, csv text or None, exit status)

Result = tuple[dict[str, Any], str | None, int]


def cmd_losses(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    grid = _grid(cfg)
    t = np.linspace(cfg.get("t_lo", -2.0), cfg.get("t_hi", 2.0), cfg.get("points", 81))
    losses = [MarginLoss.from_descriptor(d) for d in cfg["losses"]]
    entries = []
    for loss in losses:
        props = verify_loss_properties(loss, grid).to_dict() if cfg.get("verify", False) else None
        entries.append({"loss": loss.to_descriptor(), "values": np.asarray(loss(t)).tolist(),
                        "properties": props})
    doc = {"t": t.tolist(), "losses": entries}
    rows = [[float(ti)] + [float(e["values"][i]) for e in entries] for i, ti in enumerate(t)]
    text = csv_text(["t"] + [loss.label for loss in losses], rows)
    return doc, text, 0


def cmd_margins(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    family = _family(cfg)
    h = HypothesisPoint(family, tuple(cfg["theta"]))
    m = adversarial_margins(h, cfg["x"], cfg["gamma"], _grid(cfg))
    oracle = None
    if cfg.get("oracle", False):
        o = margins_oracle(h, cfg["x"], cfg["gamma"], _grid(cfg))
        oracle = {"lower": o.lower, "upper": o.upper, "method": o.method}
    doc = {"lower": m.lower, "upper": m.upper, "method": m.method, "oracle": oracle,
           "family": family.to_descriptor(), "theta": list(h.theta), "x": list(cfg["x"]),
           "gamma": cfg["gamma"]}
    return doc, csv_text(["lower", "upper", "method"], [[m.lower, m.upper, m.method]]), 0


def cmd_risk(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    family = _family(cfg)
    form = cfg["form"]
    loss = None if form == "adv01" else _loss(cfg)
    h = HypothesisPoint(family, tuple(cfg["theta"]))
    grid = _grid(cfg)
    r = inner_risk(form, loss, h, cfg["x"], cfg["eta"], cfg["gamma"], grid)
    minimal = excess = None
    if cfg.get("minimal", False):
        minimal = minimal_inner_risk(form, loss, family, cfg["x"], cfg["eta"], cfg["gamma"], grid)
        excess = max(r.value - minimal, 0.0)
    doc = {"form": form, "value": r.value, "minimal": minimal, "excess": excess, "x": list(r.x),
           "eta": r.eta, "hypothesis": list(r.hypothesis)}
    return doc, csv_text(["form", "value", "minimal", "excess"], [[form, r.value, minimal, excess]]), 0


def _delta_header(rows: Sequence[Sequence[Any]]) -> list[str]:
    width = max((len(r) for r in rows), default=5) - 5
    return ["epsilon", "x_norm", "eta", "delta_max", "method"] + [f"witness_{i}" for i in range(width)]


def cmd_delta_max(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    family, loss = _family(cfg), _loss(cfg)
    q = CalibrationQuery(cfg["form"], loss, family, cfg["gamma"], cfg["epsilon"], tuple(cfg["x"]),
                         cfg["eta"], _grid(cfg))
    method = cfg.get("method", "reduced")
    value = delta_max_reduced(q) if method == "reduced" else delta_max_bruteforce(q)
    doc = {"form": q.form, "loss": loss.to_descriptor(), "family": family.to_descriptor(),
           "gamma": q.gamma, "epsilon": q.epsilon, "x": list(q.x), "eta": q.eta,
           "delta_max": value.to_dict()}
    theta = [] if value.witness is None else list(value.witness.theta)
    row = [q.epsilon, float(np.linalg.norm(q.x)), q.eta,
           "inf" if value.is_infinite else value.value, value.method, *theta]
    text = csv_text(_delta_header([row]), [row])
    return doc, text, 0


def cmd_verdict(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    family, loss = _family(cfg), _loss(cfg)
    kwargs: dict[str, Any] = {"method": cfg.get("method", "reduced"),
                              "threads": cfg.get("threads", 1)}
    for key in ("epsilons", "x_norms", "etas"):
        if key in cfg:
            kwargs[key] = cfg[key]
    report = calibration_verdict(cfg["form"], loss, family, cfg["gamma"], _grid(cfg),
                                 cfg.get("tol", 1e-6), **kwargs)
    rows = report.csv_rows()
    text = csv_text(_delta_header(rows), rows)
    status = 0
    if a.expect is not None:
        found = "not_calibrated" if report.violated else "calibrated"
        status = 0 if found == a.expect else 1
    return report.to_dict(), text, status


def cmd_check_theorem(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    tid, gamma, grid = cfg["id"], cfg["gamma"], _grid(cfg)
    cross, threads = cfg.get("cross_check", False), cfg.get("threads", 1)
    if tid == "qce-linear":
        v = check_qce_linear(_loss(cfg), gamma, grid, cross_check=cross, threads=threads)
    elif tid == "qce-glm":
        link = MonotoneFn.from_descriptor(cfg.get("link", "relu"))
        v = check_qce_glm(_loss(cfg), link, cfg.get("G", 1.5), gamma, grid, cross_check=cross,
                          threads=threads)
    elif tid == "relu-corollary":
        v = check_relu_corollary(_loss(cfg), cfg.get("G", 1.5), gamma, grid, cross_check=cross,
                                 threads=threads)
    elif tid == "sup-rho":
        rho = cfg.get("rho")
        if rho is None:
            loss = _loss(cfg)
            if loss.kind != "rho_margin":
                raise UsageError("sup-rho needs --rho or a rho_margin loss")
            rho = loss.rho
        v = sup_rho_positive_check(rho, _family(cfg), gamma, grid, cross_check=cross,
                                   threads=threads)
    else:
        family = _family(cfg)
        xs = radial_x_grid(cfg.get("x_max", 1.0), cfg.get("x_points", 11), family.dim)
        v = regularity_theorem_check(family, gamma, xs, grid)
    doc = v.to_dict()
    rows = [[c.name, c.passed, c.worst, "" if c.at_t is None else c.at_t] for c in v.conditions]
    text = csv_text(["condition", "passed", "worst", "at_t"], rows)
    status = 0
    if a.expect is not None and v.predicted != a.expect:
        status = 1
    return doc, text, status


def cmd_witness(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    w = convex_negative_witness(_loss(cfg), _family(cfg), cfg["gamma"], cfg.get("form", "plain"),
                                _grid(cfg))
    doc = w.to_dict()
    d = w.delta
    row = [w.form, w.loss, *w.x0, w.surrogate_risk, w.adversarial_excess,
           "inf" if d.is_infinite else d.value]
    header = ["form", "loss"] + [f"x{i}" for i in range(len(w.x0))] + \
        ["surrogate_risk", "adversarial_excess", "delta_max"]
    return doc, csv_text(header, [row]), 0


def cmd_experiment(cfg: dict[str, Any], a: argparse.Namespace) -> Result:
    report = consistency_experiment(ExperimentConfig.from_dict(cfg))
    status = 0
    if report.assertion.get("checked") and not report.assertion.get("passed"):
        status = 1
    return report.to_dict(), report.trace.csv_text(), status


HANDLERS: dict[str, Callable[[dict[str, Any], argparse.Namespace], Result]] = {
    "losses": cmd_losses,
    "margins": cmd_margins,
    "risk": cmd_risk,
    "delta-max": cmd_delta_max,
    "verdict": cmd_verdict,
    "check-theorem": cmd_check_theorem,
    "witness": cmd_witness,
    "experiment": cmd_experiment,
}

DEFAULT_FORMAT = {"losses": "csv", "delta-max": "json", "verdict": "json"}


# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; inline flags override its fields")
    p.add_argument("--out", help="output file (default: stdout, or $%s/<command>.<format>)"
                   % OUTPUT_DIR_ENV)
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--seed", type=int, help="overrides any seed in the config")
    p.add_argument("--threads", type=int, help="worker threads for grid sweeps (0 = auto)")


def _add_loss(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=("zero_one", "rho_margin", "hinge", "logistic", "exponential"))
    p.add_argument("--rho", type=float)
    p.add_argument("--base", type=float, help="logistic log base")


def _add_family(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=("linear", "glm", "relu_glm", "one_layer_nn",
                                        "all_measurable"))
    p.add_argument("--dim", type=int)
    p.add_argument("--G", type=float, help="bias bound for glm families")
    p.add_argument("--link", choices=("identity", "relu"))
    p.add_argument("--width", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--w-bound", dest="w_bound", type=float)
    p.add_argument("--R", type=float)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advcal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("losses", help="tabulate losses and verify their properties")
    _add_common(p)
    _add_loss(p)
    p.add_argument("--t-lo", dest="t_lo", type=float)
    p.add_argument("--t-hi", dest="t_hi", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--verify", action="store_true", default=None)

    p = sub.add_parser("margins", help="adversarial margins of one hypothesis")
    _add_common(p)
    _add_family(p)
    p.add_argument("--theta", type=_floats)
    p.add_argument("--x", type=_floats)
    p.add_argument("--gamma", type=float)
    p.add_argument("--oracle", action="store_true", default=None)

    p = sub.add_parser("risk", help="conditional risk of one hypothesis")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--form", choices=("plain", "sup", "adv01"))
    p.add_argument("--theta", type=_floats)
    p.add_argument("--x", type=_floats)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--minimal", action="store_true", default=None)

    p = sub.add_parser("delta-max", help="calibration value at one (epsilon, x, eta)")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--form", choices=("plain", "sup"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--x", type=_floats)
    p.add_argument("--eta", type=float)
    p.add_argument("--method", choices=("reduced", "brute"))

    p = sub.add_parser("verdict", help="grid sweep of calibration values")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--form", choices=("plain", "sup"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--method", choices=("reduced", "brute"))
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--x-norms", dest="x_norms", type=_floats)
    p.add_argument("--etas", type=_floats)
    p.add_argument("--expect", choices=("calibrated", "not_calibrated"))

    p = sub.add_parser("check-theorem", help="evaluate a theorem's conditions")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--id", choices=("qce-linear", "qce-glm", "relu-corollary", "sup-rho",
                                    "regularity"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--x-max", dest="x_max", type=float)
    p.add_argument("--x-points", dest="x_points", type=int)
    p.add_argument("--cross-check", dest="cross_check", action="store_true", default=None)
    p.add_argument("--expect", choices=("calibrated", "not_calibrated", "inapplicable"))

    p = sub.add_parser("witness", help="construct a negative witness for a convex loss")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--form", choices=("plain", "sup"))
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("experiment", help="surrogate minimization on realizable data")
    _add_common(p)
    _add_loss(p)
    _add_family(p)
    p.add_argument("--form", choices=("plain", "sup"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--r-min", dest="r_min", type=float)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--optimizer", choices=("grid", "coordinate-refine"))
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    cmd = args.command
    cfg = build_config(cmd, args)
    doc, text, status = HANDLERS[cmd](cfg, args)
    doc = json.loads(json.dumps(doc))
    validate(doc, f"{cmd}.report")
    fmt_ = args.format or DEFAULT_FORMAT.get(cmd, "json")
    out = args.out
    if out is None and os.environ.get(OUTPUT_DIR_ENV):
        out = str(Path(os.environ[OUTPUT_DIR_ENV]) / f"{cmd}.{fmt_}")
    body = json.dumps(doc, indent=2) + "\n" if fmt_ == "json" else (text or "")
    _write(body, out)
    if cmd == "experiment" and out is not None and fmt_ == "json":
        _write(text or "", str(Path(out).with_suffix(".trace.csv")))
    return status


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except AdvCalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
