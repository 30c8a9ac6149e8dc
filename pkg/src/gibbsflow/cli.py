"""Batch CLI: config parsing, experiment dispatch, atomic artifact output.

Commands

  simulate    evolve one Gibbs-typical trajectory, export CSV
  sample      draw a weighted ensemble from rho_N, write the binary format
  invariance  weighted two-sample invariance report as JSON
  cauchy-rate Monte Carlo Cauchy-rate table as CSV
  weyl        torus spectrum: (N, lam^2, alpha_N) CSV plus fitted slope
  normalize   estimate the normalization constant beta_N

Config files are flat ``key = value`` lines; command-line flags override file
values.  Every artifact embeds the fully resolved configuration and library
version, and nothing in the output depends on wall-clock time.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, weyl
from . import flow as fl
from . import gibbs as gb
from . import stats as st
from .randfield import RngStream

_DEFAULTS = {
    "model": "halfwave",
    "cutoff": 16,
    "kappa": 2.0,
    "chi": "indicator",
    "r": 3.0,
    "time": 1.0,
    "dt": 1e-3,
    "sigma": 0.25,
    "samples": 10000,
    "seed": 7,
    "coupling": 1.0,
    "monitor_every": 100,
    "m_list": "8,16,32,64",
    "functional": "quartic_hw",
    "nmax": 100000,
    "lambda_max": 200.0 * np.pi,
    "permutations": 999,
    "format": "csv",
    "output": "",
}

_CASTS = {
    "cutoff": int,
    "samples": int,
    "seed": int,
    "nmax": int,
    "monitor_every": int,
    "permutations": int,
    "kappa": float,
    "r": float,
    "time": float,
    "dt": float,
    "sigma": float,
    "coupling": float,
    "lambda_max": float,
}


def worker_count() -> int:
    """Worker cap from GIBBSFLOW_THREADS (>= 1)."""
    try:
        return max(1, int(os.environ.get("GIBBSFLOW_THREADS", "1")))
    except ValueError:
        return 1


def read_config_file(path: str) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in body.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, cast in _CASTS.items():
        cfg[key] = cast(cfg[key])
    cfg["command"] = args.command
    cfg["version"] = __version__
    return cfg


def _atomic_write(path: str, payload: bytes) -> None:
    dirname = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".gibbsflow-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _header_lines(cfg: dict) -> list[str]:
    return [f"{k} = {cfg[k]}" for k in sorted(cfg)]


def _write_csv(path: str, cfg: dict, columns, rows) -> None:
    lines = [f"# {h}" for h in _header_lines(cfg)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def _write_json(path: str, cfg: dict, payload: dict) -> None:
    doc = {"config": {k: cfg[k] for k in sorted(cfg)}, **payload}
    _atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def _gibbs_config(cfg: dict) -> gb.GibbsConfig:
    return gb.GibbsConfig(
        model=cfg["model"],
        cutoff=cfg["cutoff"],
        kappa=cfg["kappa"],
        chi_kind=cfg["chi"],
        power=cfg["r"],
    )


def _flow_config(cfg: dict) -> fl.FlowConfig:
    return fl.FlowConfig(
        model=cfg["model"],
        cutoff=cfg["cutoff"],
        dt=cfg["dt"],
        horizon=cfg["time"],
        monitor_every=cfg["monitor_every"],
        coupling=cfg["coupling"],
        power=cfg["r"],
    )


def _out_path(cfg: dict, suffix: str) -> str:
    if cfg["output"]:
        return cfg["output"]
    return f"gibbsflow-{cfg['command']}-{cfg['model']}-N{cfg['cutoff']}{suffix}"


def cmd_simulate(cfg: dict) -> list[str]:
    stream = RngStream(cfg["seed"])
    u0 = gb.draw_typical(_gibbs_config(cfg), stream)
    traj = fl.evolve(_flow_config(cfg), u0)
    path = _out_path(cfg, ".csv")
    drifts = fl.invariant_drift(traj)
    header = _header_lines(cfg) + [f"drift_{k} = {v!r}" for k, v in sorted(drifts.items())]
    fl.export_trajectory_csv(path, traj, header_lines=header)
    return [path]


def cmd_sample(cfg: dict) -> list[str]:
    stream = RngStream(cfg["seed"])
    ens = gb.sample_rho(_gibbs_config(cfg), cfg["samples"], stream)
    path = _out_path(cfg, ".gfe")
    gb.write_ensemble(path, ens)
    meta = path + ".meta.json"
    _write_json(
        meta,
        cfg,
        {"ess": ens.ess, "count": ens.count, "low_ess_warning": ens.low_ess_warning,
         "fingerprint": f"{ens.fingerprint:#018x}", "ensemble_file": os.path.basename(path)},
    )
    return [path, meta]


def replay(path: str, cfg: dict | gb.GibbsConfig) -> gb.WeightedEnsemble:
    """Reload a persisted ensemble, refusing on config-fingerprint mismatch."""
    gcfg = cfg if isinstance(cfg, gb.GibbsConfig) else _gibbs_config(cfg)
    return gb.read_ensemble(path, expect_fingerprint=gcfg.fingerprint())


def cmd_invariance(cfg: dict) -> list[str]:
    stream = RngStream(cfg["seed"])
    report = st.invariance_report(
        _gibbs_config(cfg),
        _flow_config(cfg),
        count=cfg["samples"],
        stream=stream,
        n_permutations=cfg["permutations"],
    )
    path = _out_path(cfg, ".json")
    _write_json(path, cfg, report.as_dict())
    return [path]


def cmd_cauchy_rate(cfg: dict) -> list[str]:
    stream = RngStream(cfg["seed"])
    m_list = [int(tok) for tok in str(cfg["m_list"]).split(",") if tok.strip()]
    report = st.cauchy_rate(
        cfg["model"], cfg["functional"], cfg["cutoff"], m_list, cfg["sigma"], cfg["samples"], stream
    )
    path = _out_path(cfg, ".csv")
    hdr = dict(cfg)
    hdr["slope"] = report.slope
    hdr["slope_stderr"] = report.slope_stderr
    rows = [
        (p.m, p.estimate, p.stderr, "" if p.exact is None else repr(p.exact))
        for p in report.points
    ]
    _write_csv(path, hdr, ("M", "estimate", "stderr", "exact"), rows)
    return [path]


def cmd_weyl(cfg: dict) -> list[str]:
    nmax = cfg["nmax"]
    lam_sq = weyl.first_lam_sq(nmax + 1)
    alpha = np.cumsum(1.0 / (1.0 + lam_sq))
    slope, intercept = weyl.alpha_asymptotics(nmax)
    hdr = dict(cfg)
    hdr["fitted_slope"] = slope
    hdr["fitted_intercept"] = intercept
    hdr["counting_ratio"] = weyl.counting_ratio(cfg["lambda_max"])
    stride = max(1, nmax // 2000)
    rows = [(n, float(lam_sq[n]), float(alpha[n])) for n in range(0, nmax + 1, stride)]
    path = _out_path(cfg, ".csv")
    _write_csv(path, hdr, ("N", "lam_sq", "alpha"), rows)
    return [path]


def cmd_normalize(cfg: dict) -> list[str]:
    stream = RngStream(cfg["seed"])
    gcfg = _gibbs_config(cfg)
    beta, se = gb.estimate_normalization(gcfg, cfg["samples"], stream)
    path = _out_path(cfg, ".json")
    _write_json(path, cfg, {"beta": beta, "beta_stderr": se})
    return [path]


_COMMANDS = {
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "invariance": cmd_invariance,
    "cauchy-rate": cmd_cauchy_rate,
    "weyl": cmd_weyl,
    "normalize": cmd_normalize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsflow", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"gibbsflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--model", choices=("zonal", "bo", "dnls", "halfwave", "torus"))
        p.add_argument("--cutoff", type=int)
        p.add_argument("--kappa", type=float)
        p.add_argument("--chi", choices=("indicator", "smooth"))
        p.add_argument("--r", type=float, help="zonal nonlinearity degree")
        p.add_argument("--time", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--coupling", type=float)
        p.add_argument("--monitor-every", dest="monitor_every", type=int)
        p.add_argument("--m-list", dest="m_list")
        p.add_argument("--functional", choices=st._RATE_FUNCTIONALS)
        p.add_argument("--nmax", type=int)
        p.add_argument("--lambda-max", dest="lambda_max", type=float)
        p.add_argument("--permutations", type=int)
        p.add_argument("--format", choices=("csv", "json", "ensemble-binary"))
        p.add_argument("--output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        artifacts = _COMMANDS[args.command](cfg)
    except (ValueError, NotImplementedError, OSError, RuntimeError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    for path in artifacts:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
