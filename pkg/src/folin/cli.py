"""Command-line entry point: ``folin trim-sweep|simulate|gain-sweep|zero-dynamics``.

Every command writes CSV artifacts; plotting is left to external tools.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import aircraft as ac
from .affine import fd_jacobian
from .errors import DomainError, FolinError
from .sim import Scenario, run_scenario, settling_time, simulate_zero_dynamics
from .trim import trim_sweep, write_trim_csv

log = logging.getLogger("folin")

ENV_CONFIG_DIR = "FOLIN_SEED_CONFIG"
DEFAULT_CONFIG_NAME = "velocity_step.json"
DEFAULT_LOG_EVERY = 10
# |gamma(T)| above this is reported as a steady flight-path offset
GAMMA_OFFSET_FLAG = 1e-4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    aircraft: str
    mode: str = ac.THREE_OUTPUT
    V0: float = 200.0
    V_cmd: float = 250.0
    altitude_note: str = ""
    gains: tuple[float, ...] = (-0.5, -1.0, -5.0, -3.0)
    pitch_bias: float = 0.0
    dt: float = 1e-3
    horizon: float = 120.0
    pinv_tol: float = 1e-12
    output: str = "out"
    log_every: int = DEFAULT_LOG_EVERY
    gain_grid: Optional[dict] = None
    base_dir: str = "."

    def __post_init__(self):
        ac.mode_from_name(self.mode)
        if not (self.V0 > 0 and self.V_cmd > 0):
            raise ValueError("V0 and V_cmd must be positive")
        need = 4 if self.mode == ac.THREE_OUTPUT else 2
        if len(self.gains) not in (need, 4):
            raise ValueError(f"mode {self.mode} needs {need} gains, got {len(self.gains)}")

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        allowed = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ValueError(f"unknown scenario key(s): {', '.join(unknown)}")
        if "aircraft" not in data:
            raise ValueError("scenario config needs an 'aircraft' path")
        if "gains" in data:
            data["gains"] = tuple(float(k) for k in data["gains"])
        return cls(**data, base_dir=str(path.parent))

    def aircraft_path(self) -> Path:
        p = Path(self.aircraft)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def load_params(self) -> ac.AircraftParams:
        return ac.AircraftParams.from_json(self.aircraft_path())

    def scenario(self, params: ac.AircraftParams, **overrides) -> Scenario:
        kw = dict(
            params=params,
            mode=self.mode,
            V0=self.V0,
            V_cmd=self.V_cmd,
            gains=self.gains,
            pitch_bias=self.pitch_bias,
            dt=self.dt,
            horizon=self.horizon,
            pinv_tol=self.pinv_tol,
            log_every=self.log_every,
        )
        kw.update(overrides)
        return Scenario(**kw)


def resolve_config_path(arg: Optional[str]) -> Path:
    if arg:
        return Path(arg)
    env_dir = os.environ.get(ENV_CONFIG_DIR)
    if env_dir:
        return Path(env_dir) / DEFAULT_CONFIG_NAME
    return Path(__file__).with_name("data") / DEFAULT_CONFIG_NAME


def _atomic_write(path: Path, writer) -> None:
    """Write via a temporary file in the target directory; nothing is left on failure."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    def writer(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    _atomic_write(path, writer)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.pinv_tol is not None:
        changes["pinv_tol"] = args.pinv_tol
    if args.pitch_bias_deg is not None:
        changes["pitch_bias"] = math.radians(args.pitch_bias_deg)
    if args.log_every is not None:
        changes["log_every"] = args.log_every
    if args.out is not None:
        changes["output"] = args.out
    if not changes:
        return cfg
    data = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    data.update(changes)
    return ScenarioConfig(**data)


def cmd_trim_sweep(cfg: ScenarioConfig, args) -> int:
    p = cfg.load_params()
    lo, hi, step = args.v_min, args.v_max, args.v_step
    if not step > 0 or hi < lo:
        raise UsageError(f"empty airspeed range [{lo}, {hi}] with step {step}")
    speeds = list(np.round(np.arange(lo, hi + 0.5 * step, step), 10))
    points = trim_sweep(p, speeds)
    out = Path(cfg.output) / "trim_sweep.csv"
    _atomic_write(out, lambda tmp: write_trim_csv(points, tmp))
    worst = max(pt.residual for pt in points)
    print(f"trim sweep: {len(points)} points, max residual {worst:.3e} -> {out}")
    return 0


def _summary(trace) -> dict:
    x = trace.x[-1]
    return {
        "t_end": float(trace.t[-1]),
        "V_err": float(x[0]),
        "gamma_err": float(x[1]),
        "x3": float(x[2]),
        "q": float(x[3]),
        "failed": trace.failed,
    }


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    p = cfg.load_params()
    sc = cfg.scenario(p, name="simulate")
    trace = run_scenario(sc)
    out = Path(cfg.output) / f"trace_{cfg.mode}.csv"
    _atomic_write(out, trace.to_csv)
    s = _summary(trace)
    line = (
        f"simulate[{cfg.mode}]: T={s['t_end']:.3f}s V-Vbar={s['V_err']:.3e} m/s "
        f"gamma-gammabar={math.degrees(s['gamma_err']):.4e} deg"
    )
    if cfg.mode == ac.THREE_OUTPUT:
        line += f" theta-thetabar={math.degrees(s['x3']):.4e} deg"
    if abs(s["gamma_err"]) > GAMMA_OFFSET_FLAG:
        line += f" FLIGHT-PATH-OFFSET={math.degrees(s['gamma_err']):.4f} deg"
    print(f"{line} -> {out}")
    if trace.failed:
        print(f"simulation stopped at t={trace.fail_time}: {trace.message}", file=sys.stderr)
        return 1
    return 0


def gain_grid(cfg: ScenarioConfig, args) -> list[tuple[float, ...]]:
    base = list(cfg.gains) + [-5.0, -3.0][: 4 - len(cfg.gains)]
    axes = []
    grid_cfg = cfg.gain_grid or {}
    for i in range(4):
        key = f"k{i + 1}"
        flag = getattr(args, key, None)
        values = _parse_floats(flag) if flag else grid_cfg.get(key, [base[i]])
        axes.append([float(v) for v in values])
    grid = [tuple(g) for g in itertools.product(*axes)]
    if cfg.mode == ac.TWO_OUTPUT:
        grid = list(dict.fromkeys(g[:2] for g in grid))
    bad = [g for g in grid if any(not k < 0 for k in g)]
    if bad:
        raise UsageError(f"all gains must be negative; offending set {bad[0]}")
    return grid


SUMMARY_HEADER = ["run", "k1", "k2", "k3", "k4", "settle_x1", "settle_x2", "settle_x3", "V_T", "gamma_T", "x3_T", "status"]


def cmd_gain_sweep(cfg: ScenarioConfig, args) -> int:
    p = cfg.load_params()
    grid = gain_grid(cfg, args)
    rows, failures = [], 0
    for idx, gains in enumerate(grid):
        name = f"run{idx:03d}"
        try:
            trace = run_scenario(cfg.scenario(p, gains=gains, name=name))
            _atomic_write(Path(cfg.output) / f"gain_sweep_{name}.csv", trace.to_csv)
        except (FolinError, ValueError, OSError) as exc:
            failures += 1
            log.error("%s %s failed: %s", name, gains, exc)
            rows.append([name, *_pad_gains(gains), "", "", "", "", "", "", f"error: {exc}"])
            continue
        status = "ok" if not trace.failed else f"stopped at t={trace.fail_time}"
        failures += int(trace.failed)
        settle = [settling_time(trace.t, trace.x[:, i]) for i in range(3 if cfg.mode == ac.THREE_OUTPUT else 2)]
        settle += [math.nan] * (3 - len(settle))
        x = trace.x[-1]
        rows.append(
            [name, *_pad_gains(gains), *settle, x[0] + trace.reference[-1, 0], x[1] + trace.reference[-1, 1], x[2], status]
        )
    out = Path(cfg.output) / "gain_sweep_summary.csv"
    _write_rows(out, SUMMARY_HEADER, [[_fmt(v) if not (isinstance(v, float) and math.isnan(v)) else "" for v in r] for r in rows])
    print(f"gain sweep: {len(grid)} runs, {failures} failed -> {out}")
    return 1 if failures else 0


def _pad_gains(gains):
    return list(gains) + [math.nan] * (4 - len(gains))


def cmd_zero_dynamics(cfg: ScenarioConfig, args) -> int:
    p = cfg.load_params()
    ref = ac.ReferenceSignal(V_bar=cfg.V_cmd)
    eq = ac.zero_dynamics_equilibrium(p, ref)
    jac = fd_jacobian(lambda e: ac.zero_dynamics_rhs(p, ref, e), eq)
    eig = np.linalg.eigvals(jac)
    if args.eta0:
        eta0 = _parse_floats(args.eta0)
        if len(eta0) != 2:
            raise UsageError("--eta0 needs two comma-separated values")
    else:
        eta0 = list(eq + np.array([1e-3, 0.0]))
    if abs(eta0[0]) >= ref.V_bar:
        raise UsageError(f"|eta1(0)|={abs(eta0[0])} must be below V_bar={ref.V_bar}")
    zt = simulate_zero_dynamics(p, ref, eta0, cfg.dt, cfg.horizon)
    out = Path(cfg.output) / "zero_dynamics.csv"
    every = max(1, cfg.log_every)
    rows = [[_fmt(t), _fmt(e[0]), _fmt(e[1])] for t, e in zip(zt.t[::every], zt.eta[::every])]
    _write_rows(out, ["t", "eta1", "eta2"], rows)
    eig_txt = ", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in eig)
    print(f"zero dynamics: equilibrium eta*=({eq[0]:.6g}, {eq[1]:.6g}); Jacobian eigenvalues [{eig_txt}]")
    if zt.diverged:
        print(f"divergence: left the arcsin domain at t={zt.stop_time:.3f}s")
    else:
        offset = np.linalg.norm(zt.eta[-1] - eq) / max(np.linalg.norm(np.asarray(eta0) - eq), 1e-300)
        print(f"no domain exit within {cfg.horizon}s; offset growth x{offset:.3g}")
    print(f"-> {out}")
    return 0


COMMANDS = {
    "trim-sweep": cmd_trim_sweep,
    "simulate": cmd_simulate,
    "gain-sweep": cmd_gain_sweep,
    "zero-dynamics": cmd_zero_dynamics,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="folin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"scenario JSON (default: ${ENV_CONFIG_DIR}/{DEFAULT_CONFIG_NAME} or bundled)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", type=float)
    common.add_argument("--pinv-tol", type=float)
    common.add_argument("--pitch-bias-deg", type=float)
    common.add_argument("--log-every", type=int, help=f"log every Nth step (default {DEFAULT_LOG_EVERY})")

    ts = sub.add_parser("trim-sweep", parents=[common], help="trim inputs over an airspeed range")
    ts.add_argument("--v-min", type=float, default=150.0)
    ts.add_argument("--v-max", type=float, default=300.0)
    ts.add_argument("--v-step", type=float, default=10.0)
    sub.add_parser("simulate", parents=[common], help="closed-loop velocity-change run")
    gs = sub.add_parser("gain-sweep", parents=[common], help="closed-loop runs over a gain grid")
    for i in range(1, 5):
        gs.add_argument(f"--k{i}", help=f"comma-separated values for k{i}")
    zd = sub.add_parser("zero-dynamics", parents=[common], help="internal dynamics of the two-output design")
    zd.add_argument("--eta0", help="initial internal state 'eta1,eta2' (default: equilibrium + 1e-3)")
    return parser


_NUMBER_LIST = re.compile(r"^-?[\d.]+(e-?\d+)?(,-?[\d.]+(e-?\d+)?)*$")


def _glue_number_lists(argv: Sequence[str]) -> list[str]:
    """Join ``--k1 -0.5,-1`` into ``--k1=-0.5,-1`` so argparse does not read a flag."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--k1", "--k2", "--k3", "--k4", "--eta0"):
            nxt = next(it, None)
            if nxt is not None and _NUMBER_LIST.match(nxt):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_number_lists(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(ScenarioConfig.from_json(resolve_config_path(args.config)), args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"folin: error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"folin: domain error: {exc}", file=sys.stderr)
        return 1
    except (FolinError, ValueError, OSError) as exc:
        print(f"folin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
