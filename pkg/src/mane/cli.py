"""Command-line front end: ``mane <command> --config <path> [--set key=value]... --out <path>``.

Configs are UTF-8 ``key = value`` files (``#`` starts a comment).  ``--set``
overrides win.  Every report is sorted-key JSON carrying the resolved config
and a schema version.  Exit codes: 0 pass, 1 checks failed, 2 config error,
3 numerical error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import critical, flow, stability
from .errors import ConfigError, ManeError
from .forms import liouville_form, unit_momentum_form
from .geometry import TorusChart, split_state
from .hamiltonian import (constant_theta, kinetic_flat, magnetic_flat, remark3_hamiltonian,
                          rotating_theta, sol_hamiltonian, suspend)

SCHEMA_VERSION = 1
COMMANDS = ("integrate", "critical", "stability", "sol-claim")
HAMILTONIANS = ("kinetic", "magnetic", "sol", "remark3")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _choice(*options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


# key -> (parser, default, positive?)
COMMON = {
    "command": (_choice(*COMMANDS), None, False),
    "hamiltonian": (_choice(*HAMILTONIANS), "kinetic", False),
    "dim": (int, 2, True),
    "theta": (_choice("none", "rotating", "constant"), "rotating", False),
    "theta_c": (float, 0.7, False),
    "theta_axis": (int, 0, False),
    "seed": (int, 0, False),
}

SCHEMAS = {
    "integrate": {
        "T": (float, 1.0, True),
        "dt": (float, 1e-2, True),
        "order": (int, 2, True),
        "q": (_floats, None, False),
        "p": (_floats, None, False),
        "reduced": (_bool, False, False),
        "state": (_floats, None, False),
        "energy_tol": (float, 1e-6, True),
        "csv": (str, None, False),
    },
    "critical": {
        "grid": (_ints, [64, 64], True),
        "schedule": (_floats, list(critical.DEFAULT_SCHEDULE), True),
        "iterations": (int, critical.ITERATIONS_PER_STAGE, True),
        "suspension": (_bool, False, False),
        "nt": (int, 16, True),
        "measure": (_bool, False, False),
        "gap_tol": (float, 0.02, True),
        "bracket_lo": (float, None, False),
        "bracket_hi": (float, None, False),
    },
    "stability": {
        "k": (float, 0.5, True),
        "delta": (float, 0.45, True),
        "eps": (float, 0.5, True),
        "samples": (int, 10_000, True),
        "directions": (int, 8, True),
        "form": (_choice("stabilizer", "liouville"), "stabilizer", False),
        "contraction_tol": (float, stability.CONTRACTION_THRESHOLD, True),
    },
    "sol-claim": {
        "phi_min": (float, 0.2, False),
        "phi_max": (float, 2 * math.pi - 0.2, False),
        "n_seeds": (int, 12, False),
        "T_max": (float, 200.0, True),
        "dt": (float, 1e-2, True),
        "claim_tol": (float, 1e-6, True),
        "identity_tol": (float, 1e-8, True),
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["seed"]

    def to_dict(self):
        return {"command": self.command, **self.values}


def parse_pairs(lines, origin):
    pairs = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key] = value
    return pairs


def resolve_config(command, pairs):
    """Validate raw string pairs for ``command`` and fill defaults."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = {**COMMON, **SCHEMAS[command]}
    unknown = sorted(set(pairs) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    values = {}
    for key, (parse, default, positive) in schema.items():
        if key in pairs:
            try:
                v = parse(pairs[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            v = default
        if positive and v is not None:
            bad = any(x <= 0 for x in v) if isinstance(v, list) else v <= 0
            if bad:
                raise ConfigError(f"{key} must be positive, got {pairs.get(key, v)}")
        values[key] = v
    if values.pop("command") not in (None, command):
        raise ConfigError(f"config is for command {pairs['command']!r}, not {command!r}")
    _check_command(command, values)
    return RunConfig(command, values)


def _check_command(command, v):
    if command == "stability":
        if v["hamiltonian"] != "kinetic":
            raise ConfigError("stability: the built-in alpha = p.dq/|p| needs hamiltonian = kinetic")
        if v["eps"] >= math.sqrt(2 * v["delta"]):
            raise ConfigError(f"eps = {v['eps']} must be below sqrt(2 delta) = "
                              f"{math.sqrt(2 * v['delta']):.6g}")
        if v["delta"] >= v["k"]:
            raise ConfigError("delta must be below k so the band avoids the zero section")
        if v["samples"] < 1000:
            raise ConfigError("samples must be at least 1000")
    if command == "critical":
        if v["measure"] and v["hamiltonian"] == "remark3":
            raise ConfigError("measure: no built-in zero-homology measure for remark3")
    if command == "integrate" and v["order"] not in (2, 4):
        raise ConfigError("order must be 2 or 4")


def build_hamiltonian(cfg):
    name, dim = cfg["hamiltonian"], cfg["dim"]
    if name == "kinetic":
        return kinetic_flat(TorusChart(dim))
    if name == "magnetic":
        kind = cfg["theta"]
        if kind == "rotating":
            if dim != 2:
                raise ConfigError("theta = rotating lives on the 2-torus (dim = 2)")
            return magnetic_flat(rotating_theta())
        c = cfg["theta_c"] if kind == "constant" else 0.0
        return magnetic_flat(constant_theta(c, dim, cfg["theta_axis"]), chart=TorusChart(dim))
    if name == "sol":
        return sol_hamiltonian()
    return remark3_hamiltonian()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def render_report(cfg, result, passed, warnings=()):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "result": result,
        "pass": bool(passed),
        "warnings": list(warnings),
    }
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands; each returns (result dict, passed, warnings)

def cmd_integrate(cfg, out_path):
    T, dt = cfg["T"], cfg["dt"]
    if cfg["reduced"] or cfg["state"] is not None:
        state = cfg["state"] or [0.0, 0.0, 0.0, 0.0]
        if len(state) != 4:
            raise ConfigError("state: reduced Sol state is (z, Mx, My, Mz)")
        traj = flow.integrate_reduced_sol(np.array(state), T, dt, order=cfg["order"])
        result = {"max_abs_M": float(np.max(np.abs(traj.states[:, 1:])))}
    else:
        H = build_hamiltonian(cfg)
        n = H.dim
        q = cfg["q"] if cfg["q"] is not None else [0.0] * n
        p = cfg["p"] if cfg["p"] is not None else [1.0] + [0.0] * (n - 1)
        if len(q) != n or len(p) != n:
            raise ConfigError(f"q and p need {n} components each")
        monitors = None
        if cfg["hamiltonian"] == "sol":
            def m_monitor(states):
                M = H.momenta(*split_state(states))
                return M[..., 0] * M[..., 1]
            monitors = {"m": m_monitor}
        traj = flow.integrate(H, np.array(q + p, dtype=float), T, dt, monitors, cfg["order"])
        result = {}
        if cfg["hamiltonian"] == "sol":
            M = H.momenta(*split_state(traj.states))
            result["max_abs_M"] = float(np.max(np.abs(M)))
        if isinstance(H.chart, TorusChart):
            disp = (traj.states[-1, :n] - traj.states[0, :n]) / H.chart.period
            wind = np.round(disp)
            result["winding"] = wind.astype(int).tolist()
            result["winding_distance"] = np.abs(disp - wind).tolist()
    csv_path = Path(cfg["csv"]) if cfg["csv"] else Path(out_path).with_suffix(".csv")
    traj.to_csv(csv_path)
    scale = max(1.0, abs(float(traj.energy[0])))
    result.update({
        "energy_drift": traj.energy_drift,
        "monitor_drifts": traj.monitor_drifts,
        "initial_energy": float(traj.energy[0]),
        "steps": len(traj.times) - 1,
        "final_state": traj.states[-1],
        "csv": str(csv_path),
    })
    return result, traj.energy_drift <= cfg["energy_tol"] * scale, []


def builtin_measure(cfg, H, T=1.0, dt=1e-2):
    """Zero-homology orbit measures used for the lower bound."""
    name = cfg["hamiltonian"]
    n = H.dim
    if name == "magnetic" and cfg["theta"] == "rotating":
        # the circles y = 0 and y = 1/2 travelled in opposite directions
        starts = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0]]
    elif name == "sol":
        starts = [[0.0] * 6, [0.5, 0.5, 0.3, 0.0, 0.0, 0.0]]
    else:
        # rest point at the fibre minimiser of a q-independent Hamiltonian
        q0 = np.zeros((1, n))
        starts = [np.concatenate([q0[0], H.fiber_minimizer(q0)[0]])]
    trajs = [flow.integrate(H, np.array(s, dtype=float), T, dt) for s in starts]
    return [(t, 1.0 / len(trajs)) for t in trajs]


def build_grid(cfg):
    g = cfg["grid"]
    if cfg["hamiltonian"] == "sol":
        if len(g) not in (1, 2):
            raise ConfigError("grid: Sol takes n or n,nz")
        return critical.SolGrid(g[0], g[1] if len(g) == 2 else None)
    if len(g) != cfg["dim"]:
        raise ConfigError(f"grid needs {cfg['dim']} sizes")
    return critical.TorusGrid(tuple(g))


def cmd_critical(cfg, out_path):
    H = build_hamiltonian(cfg)
    grid = build_grid(cfg)
    kw = {"schedule": tuple(cfg["schedule"]), "iterations": cfg["iterations"]}
    est = critical.estimate_c0(H, grid, **kw)
    result = {"estimate": est.report(), "e": critical.estimate_e(H, grid)}
    passed = True
    if cfg["measure"]:
        lb = critical.lower_bound_from_measure(H, builtin_measure(cfg, H))
        est.lower_bound = lb
        result["estimate"] = est.report()
        result["bracket_gap"] = est.upper_bound - lb
        passed &= lb <= est.upper_bound + 1e-12
    if cfg["suspension"]:
        bar = critical.estimate_c0(suspend(H), critical.SuspendedGrid(grid, cfg["nt"]), **kw)
        gap = abs(bar.value - est.value)
        result["suspension"] = {"estimate": bar.report(), "gap": gap}
        passed &= gap <= cfg["gap_tol"]
    lo, hi = cfg["bracket_lo"], cfg["bracket_hi"]
    if lo is not None:
        passed &= est.value >= lo
    if hi is not None:
        passed &= est.value <= hi
    return result, passed, []


def cmd_stability(cfg, out_path):
    H = build_hamiltonian(cfg)
    n = H.dim
    k, delta, eps = cfg["k"], cfg["delta"], cfg["eps"]
    alpha = unit_momentum_form(n)
    if cfg["form"] == "liouville":
        lam = liouville_form(n + 1)
    else:
        r = stability.r_profile(alpha, H, k, delta, seed=cfg["seed"])
        f = stability.BumpFunction(eps)
        lam = stability.suspension_stabilizer(alpha, f, stability.g_from_integral(r, f))
    cert = stability.verify_stability(lam, suspend(H), k, cfg["samples"], cfg["seed"],
                                      cfg["directions"], eps=eps, delta=delta)
    cert.thresholds["max_contraction"] = cfg["contraction_tol"]
    return cert.report(), cert.passed, []


def cmd_sol_claim(cfg, out_path):
    n = cfg["n_seeds"]
    phis = np.linspace(cfg["phi_min"], cfg["phi_max"], n) if n > 0 else np.array([])
    warnings = []
    if phis.size == 0 or cfg["phi_max"] < cfg["phi_min"]:
        phis = np.array([])
        warnings.append("empty scan window: no seeds, claim holds vacuously")
    records, skipped = flow.scan_sol_orbits(phis, cfg["T_max"], cfg["dt"])
    if skipped:
        warnings.append(f"{len(skipped)} seed(s) gave no refined orbit: {skipped}")
    passed = True
    for rec in records:
        passed &= abs(rec.integral_Mz) <= cfg["claim_tol"] * rec.period
        if rec.m != 0:
            passed &= rec.log_identity_residual <= cfg["identity_tol"]
    result = {"orbits": [rec.report() for rec in records], "count": len(records),
              "skipped_seeds": skipped}
    return result, passed, warnings


HANDLERS = {"integrate": cmd_integrate, "critical": cmd_critical,
            "stability": cmd_stability, "sol-claim": cmd_sol_claim}


def build_parser():
    ap = argparse.ArgumentParser(prog="mane", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry (repeatable)")
    ap.add_argument("--out", required=True, help="path of the JSON report")
    return ap


def run(command, config_path, overrides, out_path):
    """Run one command; returns ``(exit_code, report_text or None)``."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
        pairs = parse_pairs(text.splitlines(), config_path)
        pairs.update(parse_pairs(overrides, "--set"))
        cfg = resolve_config(command, pairs)
        result, passed, warnings = HANDLERS[command](cfg, out_path)
    except (ConfigError, OSError) as exc:
        print(f"mane: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (ManeError, ArithmeticError, ValueError) as exc:
        print(f"mane: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None
    for w in warnings:
        print(f"mane: warning: {w}", file=sys.stderr)
    report = render_report(cfg, result, passed, warnings)
    Path(out_path).write_text(report, encoding="utf-8")
    return (EXIT_PASS if passed else EXIT_FAIL), report


def main(argv=None):
    args = build_parser().parse_args(argv)
    code, _ = run(args.command, args.config, args.set, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
