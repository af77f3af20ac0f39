"""Command-line driver.

Subcommands::

    qmpemba evolve       one CSV per initial state plus a run.json sidecar
    qmpemba mpemba-scan  random hemisphere pairs, JSON crossing reports
    qmpemba groundstate  r_x of the coupled ground state against alpha
    qmpemba verify DIR   re-check the hashes recorded in DIR/run.json

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bath import SpectralDensity, discretize, star_to_chain
from .config import PRESETS, ConfigError, RunConfig, load_config, parse_config_text, preset
from .exact import (
    ConservationError,
    ConvergenceError,
    FockSpace,
    KrylovError,
    SizingError,
    build_hamiltonian,
    evolve_bloch,
    ground_state,
    reduced_bloch,
)
from .lindblad import IntegrationError, LindbladParams, Trajectory, rates
from .mpemba import (
    LindbladPropagator,
    curve_from_trajectory,
    detect_crossings,
    figure_state,
    hemisphere_sweep,
    pair_report,
)
from .qubit import FRAME_ROTATION, BlochState, DistanceMeasure, Frame, change_frame

logger = logging.getLogger("qmpemba")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
NUMERICAL_ERRORS = (ConvergenceError, ConservationError, KrylovError, IntegrationError)

CSV_HEADER = "t,rx,ry,rz,D_trace,S_rel"
FRAME_NOTE = "spin frame: H_S = -(delta/2) sigma_x, ground state r = (1, 0, 0)"
ANGLE_NOTE = "r = r_mod (-sin(phi) cos(theta), -sin(phi) sin(theta), -cos(phi)) in the spin frame"
# truncation convergence threshold on reduced Bloch components
CONVERGENCE_TOL = 1e-3


# --------------------------------------------------------------------------
# serialisation

def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, NaN/inf to null."""
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


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path: Path, text: str) -> None:
    # newline="" keeps byte-identical output across platforms
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(header: str, rows, config_hash: str) -> str:
    lines = [f"# config_hash={config_hash}", header]
    for row in rows:
        lines.append(",".join(_cell(x) for x in row))
    return "\n".join(lines) + "\n"


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# --------------------------------------------------------------------------
# shared model setup

def measures_of(cfg: RunConfig) -> list[DistanceMeasure]:
    return [DistanceMeasure(kind, cfg.floor) for kind in cfg.measures]


def lindblad_params(cfg: RunConfig) -> LindbladParams:
    p = LindbladParams.thermal(cfg.temperature, cfg.gamma, cfg.omega, cfg.gamma_dep)
    if cfg.r_z_eq is not None:
        p = LindbladParams(p.omega, p.gamma, p.gamma_dep, p.n_beta, cfg.r_z_eq)
    return p


def time_grid(cfg: RunConfig) -> np.ndarray:
    t_max = cfg.t_max
    if t_max is None:
        if cfg.mode == "lindblad":
            p = lindblad_params(cfg)
            t_pop, _ = rates(p)
            t_max = 20.0 * t_pop if math.isfinite(t_pop) else 20.0 / cfg.delta
        else:
            t_max = 10.0 / cfg.delta
    return np.linspace(0.0, float(t_max), cfg.n_times)


def star_bath(cfg: RunConfig, alpha: Optional[float] = None):
    j = SpectralDensity(cfg.alpha if alpha is None else alpha, cfg.omega_c)
    return discretize(j, cfg.n_modes, cfg.omega_max, cfg.discretization, cfg.log_base)


def exact_hamiltonian(cfg: RunConfig, n_max: Optional[int] = None, alpha: Optional[float] = None):
    space = FockSpace(cfg.n_modes, cfg.n_max if n_max is None else n_max, cfg.budget, cfg.truncation)
    star = star_bath(cfg, alpha)
    bath = star_to_chain(star) if cfg.geometry == "chain" else star
    return build_hamiltonian(space, bath, cfg.delta), star


def _fits(cfg: RunConfig, n_max: int) -> tuple[bool, int]:
    try:
        space = FockSpace(cfg.n_modes, n_max, cfg.budget, cfg.truncation)
    except SizingError:
        local = n_max + 1
        return False, 2 * local ** cfg.n_modes if cfg.truncation == "mode" else -1
    return True, space.dim


@lru_cache(maxsize=2)
def exact_setup(cfg: RunConfig) -> dict:
    """Hamiltonian and ground-state reference for an exact-mode config (cached per process)."""
    h, star = exact_hamiltonian(cfg)
    energy, psi = ground_state(h)
    r_ss = reduced_bloch(psi, h.space)
    return {"h": h, "star": star, "energy": energy, "r_ss": r_ss}


# --------------------------------------------------------------------------
# evolve

def initial_state(phi: float, theta: float, r_mod: float) -> BlochState:
    """Figure-convention state in the spin frame."""
    return change_frame(figure_state(phi, r_mod, theta), Frame.SPIN)


def _distance_columns(vectors: np.ndarray, ss_spin: np.ndarray, floor: float):
    d = DistanceMeasure("trace").bloch(vectors, ss_spin)
    s = DistanceMeasure("relent", floor).bloch(vectors, ss_spin)
    return d, s


def evolve_state(cfg: RunConfig, index: int, checkpoint_dir: Optional[str] = None) -> dict:
    """Spin-frame trajectory and metadata for one initial state."""
    phi, theta, r_mod = cfg.initial_states[index]
    t = time_grid(cfg)
    r0 = initial_state(phi, theta, r_mod)
    meta = {"index": index, "phi": phi, "theta": theta, "r_mod": r_mod,
            "r0_spin": r0.r, "r0_energy": change_frame(r0, Frame.ENERGY).r}
    if cfg.mode == "lindblad":
        p = lindblad_params(cfg)
        traj = LindbladPropagator(p)(change_frame(r0, Frame.ENERGY), t)
        vectors = traj.vectors @ FRAME_ROTATION.T
        meta["convergence"] = {"converged": True, "reason": "closed-form Bloch solution"}
        return {"times": t, "vectors": vectors, "meta": meta}

    setup = exact_setup(cfg)
    ck = None
    if checkpoint_dir is not None:
        ck = str(Path(checkpoint_dir) / f"state_{index:02d}")
    run = evolve_bloch(r0, setup["h"], t, cfg.krylov_dim, checkpoint=ck, config_hash=cfg.config_hash)
    meta["norm_error"] = run.norm_error
    meta["energy_error"] = run.energy_error
    meta["krylov"] = {"steps": run.stats.steps, "rejected": run.stats.rejected,
                      "matvecs": run.stats.matvecs, "max_error": run.stats.max_error}
    meta["convergence"] = _dynamics_convergence(cfg, r0, t, run.bloch)
    if ck is not None:
        for f in Path(checkpoint_dir).glob(f"state_{index:02d}.branch*.npz"):
            f.unlink()
    return {"times": t, "vectors": run.bloch, "meta": meta}


def _dynamics_convergence(cfg: RunConfig, r0: BlochState, t: np.ndarray, bloch: np.ndarray) -> dict:
    if not cfg.check_convergence:
        return {"converged": None, "reason": "unchecked: check_convergence = false"}
    ok, dim = _fits(cfg, cfg.n_max + 1)
    if not ok:
        return {"converged": None,
                "reason": f"unchecked: n_max = {cfg.n_max + 1} needs dimension {dim} above budget {cfg.budget}"}
    h2, _ = exact_hamiltonian(cfg, n_max=cfg.n_max + 1)
    bloch2 = evolve_bloch(r0, h2, t, cfg.krylov_dim).bloch
    dev = float(np.max(np.abs(bloch2 - bloch)))
    return {"converged": dev < CONVERGENCE_TOL, "max_bloch_change_at_n_max_plus_1": dev,
            "tolerance": CONVERGENCE_TOL}


def _pair_reports(cfg: RunConfig, results: list[dict], ss_spin: np.ndarray) -> list[dict]:
    reports = []
    t = results[0]["times"] if results else np.zeros(0)
    ss = BlochState(ss_spin, Frame.SPIN)
    for measure in measures_of(cfg):
        for i, j in itertools.combinations(range(len(results)), 2):
            if cfg.mode == "lindblad":
                p = lindblad_params(cfg)
                r_i = figure_state(*_angles(cfg, i))
                r_j = figure_state(*_angles(cfg, j))
                rep = pair_report(r_i, r_j, p, measure, t)
            else:
                c_i = curve_from_trajectory(Trajectory(t, results[i]["vectors"], Frame.SPIN), ss, measure)
                c_j = curve_from_trajectory(Trajectory(t, results[j]["vectors"], Frame.SPIN), ss, measure)
                rep = detect_crossings(c_i, c_j)
            d = rep.to_dict()
            d["states"] = [i, j]
            reports.append(d)
    return reports


def _angles(cfg: RunConfig, i: int) -> tuple[float, float, float]:
    phi, theta, r_mod = cfg.initial_states[i]
    return phi, r_mod, theta


def _run_states(cfg: RunConfig, checkpoint_dir: Optional[str]) -> list[dict]:
    n = len(cfg.initial_states)
    if cfg.jobs == 1 or n <= 1:
        return [evolve_state(cfg, i, checkpoint_dir) for i in range(n)]
    # workers compute, this process collects in order and writes every file
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, n)) as pool:
        return list(pool.map(evolve_state, [cfg] * n, range(n), [checkpoint_dir] * n))


def cmd_evolve(cfg: RunConfig, out: Optional[Path] = None) -> dict:
    """Write ``state_XX.csv`` per initial state and ``run.json``; return the sidecar."""
    if not cfg.initial_states:
        raise ConfigError("at least one initial state is required", "phis")
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash
    sidecar = _base_sidecar(cfg, "evolve")

    if cfg.mode == "lindblad":
        p = lindblad_params(cfg)
        ss_spin = FRAME_ROTATION @ p.fixed_point.r
        t_pop, t_coh = rates(p)
        sidecar["model"] = {"lindblad": p.to_dict(), "T_pop": t_pop, "T_coh": t_coh}
    else:
        setup = exact_setup(cfg)
        ss_spin = setup["r_ss"]
        sidecar["model"] = _exact_model(cfg, setup)
    sidecar["stationary_state_spin"] = ss_spin

    checkpoint_dir = None
    if cfg.checkpoint and cfg.mode == "exact":
        checkpoint_dir = out / "checkpoints"
        checkpoint_dir.mkdir(exist_ok=True)
        checkpoint_dir = str(checkpoint_dir)
    results = _run_states(cfg, checkpoint_dir)
    if checkpoint_dir is not None and not any(Path(checkpoint_dir).iterdir()):
        Path(checkpoint_dir).rmdir()

    files = {}
    states = []
    for res in results:
        i = res["meta"]["index"]
        d, s = _distance_columns(res["vectors"], ss_spin, cfg.floor)
        rows = np.column_stack([res["times"], res["vectors"], d, s])
        name = f"state_{i:02d}.csv"
        _write(out / name, _csv(CSV_HEADER, rows, h))
        files[name] = sha256_file(out / name)
        states.append(dict(res["meta"], file=name))
    sidecar["states"] = states
    sidecar["crossings"] = _pair_reports(cfg, results, ss_spin)
    sidecar["files"] = files
    _write(out / "run.json", dumps(sidecar))
    return _clean(sidecar)


def _base_sidecar(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": cfg.hashed_dict(),
        "config_hash": cfg.config_hash,
        "frame": FRAME_NOTE,
        "angle_convention": ANGLE_NOTE,
        "floor": cfg.floor,
        "label": cfg.label,
        "preset": cfg.preset,
    }


def _exact_model(cfg: RunConfig, setup: dict) -> dict:
    h = setup["h"]
    return {
        "dimension": h.dim,
        "geometry": h.geometry,
        "mode_frequencies": setup["star"].frequencies,
        "mode_couplings": setup["star"].couplings,
        "ground_energy": setup["energy"],
    }


# --------------------------------------------------------------------------
# mpemba-scan

def cmd_mpemba_scan(cfg: RunConfig, out: Optional[Path] = None) -> list[dict]:
    """Hemisphere sweep per configured measure; writes ``scan.json`` and ``run.json``."""
    if cfg.mode != "lindblad":
        raise ConfigError("the hemisphere scan uses Lindblad dynamics; pair reports for exact "
                          "runs are written by evolve", "mode")
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    p = lindblad_params(cfg)
    t_grid = time_grid(cfg) if cfg.t_max is not None else None
    reports = []
    for measure in measures_of(cfg):
        for rep in hemisphere_sweep(cfg.n_pairs, cfg.r_mod, p, measure, cfg.seed, t_grid, cfg.hemisphere):
            reports.append(rep.to_dict())
    text = dumps({"config_hash": cfg.config_hash, "reports": reports})
    _write(out / "scan.json", text)
    sidecar = _base_sidecar(cfg, "mpemba-scan")
    sidecar["summary"] = {
        "n_reports": len(reports),
        "n_mpemba": sum(r["mpemba"] for r in reports),
        "max_discrepancy": max((r.get("discrepancy", 0.0) for r in reports), default=None),
    }
    sidecar["files"] = {"scan.json": sha256_file(out / "scan.json")}
    _write(out / "run.json", dumps(sidecar))
    return _clean(reports)


# --------------------------------------------------------------------------
# groundstate

def groundstate_point(cfg: RunConfig, alpha: float) -> dict:
    """Ground-state reduction at one coupling, with a truncation check when it fits."""
    row = {"alpha": alpha}
    try:
        h, _ = exact_hamiltonian(cfg, alpha=alpha)
        energy, psi = ground_state(h)
    except ConvergenceError as exc:
        logger.warning("alpha = %g: %s", alpha, exc)
        return dict(row, rx_ss=math.nan, purity=math.nan, energy=math.nan, converged=False,
                    reason=f"eigensolver: {exc} (residual {exc.residual:.2e})")
    rho_r = reduced_bloch(psi, h.space)
    row.update(rx_ss=float(rho_r[0]), r_ss=rho_r, purity=0.5 * (1 + float(rho_r @ rho_r)),
               energy=energy, dimension=h.dim, converged=True)
    if not cfg.check_convergence:
        row["reason"] = "truncation unchecked: check_convergence = false"
        return row
    ok, dim = _fits(cfg, cfg.n_max + 1)
    if not ok:
        row["reason"] = f"truncation unchecked: n_max = {cfg.n_max + 1} needs dimension {dim}"
        return row
    try:
        h2, _ = exact_hamiltonian(cfg, n_max=cfg.n_max + 1, alpha=alpha)
        _, psi2 = ground_state(h2)
    except ConvergenceError as exc:
        return dict(row, converged=False, reason=f"eigensolver at n_max + 1: {exc}")
    change = float(np.max(np.abs(reduced_bloch(psi2, h2.space) - rho_r)))
    row["bloch_change_at_n_max_plus_1"] = change
    row["converged"] = change < CONVERGENCE_TOL
    row["reason"] = f"truncation check at n_max = {cfg.n_max + 1}, tolerance {CONVERGENCE_TOL:g}"
    return row


def cmd_groundstate(cfg: RunConfig, out: Optional[Path] = None) -> list[dict]:
    """Write ``groundstate.csv`` (``alpha,rx_ss,purity,energy,converged_flag``) and ``run.json``."""
    if cfg.mode != "exact":
        raise ConfigError("groundstate needs mode = exact", "mode")
    alphas = list(cfg.alphas) or [cfg.alpha]
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.jobs == 1 or len(alphas) == 1:
        rows = [groundstate_point(cfg, a) for a in alphas]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(alphas))) as pool:
            rows = list(pool.map(groundstate_point, [cfg] * len(alphas), alphas))
    table = [(r["alpha"], r["rx_ss"], r["purity"], r["energy"], bool(r["converged"])) for r in rows]
    _write(out / "groundstate.csv", _csv("alpha,rx_ss,purity,energy,converged_flag", table, cfg.config_hash))
    sidecar = _base_sidecar(cfg, "groundstate")
    sidecar["points"] = rows
    sidecar["files"] = {"groundstate.csv": sha256_file(out / "groundstate.csv")}
    _write(out / "run.json", dumps(sidecar))
    return _clean(rows)


# --------------------------------------------------------------------------
# verify

def _config_from_dict(d: dict) -> RunConfig:
    fields = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return RunConfig(**fields)


def cmd_verify(directory) -> list[str]:
    """Return a list of problems with the outputs in ``directory`` (empty when consistent)."""
    directory = Path(directory)
    sidecar = json.loads((directory / "run.json").read_text())
    problems = []
    try:
        recomputed = _config_from_dict(sidecar["config"]).config_hash
    except (ConfigError, TypeError) as exc:
        return [f"run.json: config does not validate: {exc}"]
    h = sidecar.get("config_hash")
    if recomputed != h:
        problems.append(f"run.json: config hash {h} does not match its config ({recomputed})")
    for name, digest in sorted(sidecar.get("files", {}).items()):
        path = directory / name
        if not path.exists():
            problems.append(f"{name}: missing")
            continue
        if sha256_file(path) != digest:
            problems.append(f"{name}: checksum mismatch")
        if name.endswith(".csv"):
            first = path.read_text().split("\n", 1)[0]
            if first != f"# config_hash={h}":
                problems.append(f"{name}: header hash does not match run.json")
        elif name.endswith(".json"):
            if json.loads(path.read_text()).get("config_hash") != h:
                problems.append(f"{name}: embedded hash does not match run.json")
    return problems


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmpemba", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value run configuration")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field (repeatable)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--measure", choices=("trace", "relent"), help="restrict to one distance measure")
        p.add_argument("--floor", type=float, help="relative-entropy eigenvalue floor")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("evolve", help="trajectories and distance curves per initial state"))
    common(sub.add_parser("mpemba-scan", help="random-pair hemisphere crossing scan"))
    common(sub.add_parser("groundstate", help="ground-state r_x and purity against alpha"))
    v = sub.add_parser("verify", help="re-check hashes and checksums of an output directory")
    v.add_argument("directory", type=Path)
    v.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else None
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    if args.set:
        cfg = parse_config_text("\n".join(args.set), cfg)
    cfg = cfg or RunConfig()
    overrides = {}
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.measure is not None:
        overrides["measures"] = (args.measure,)
    if args.floor is not None:
        overrides["floor"] = args.floor
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return cfg.replace(**overrides) if overrides else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            problems = cmd_verify(args.directory)
            for line in problems:
                print(line, file=sys.stderr)
            if not problems:
                print(f"{args.directory}: ok")
            return EXIT_INVALID if problems else EXIT_OK
        cfg = resolve_config(args)
        if args.command == "evolve":
            sidecar = cmd_evolve(cfg)
            print(f"wrote {len(sidecar['states'])} trajectories to {cfg.out}")
        elif args.command == "mpemba-scan":
            reports = cmd_mpemba_scan(cfg)
            print(f"wrote {len(reports)} reports ({sum(r['mpemba'] for r in reports)} with inversion) to {cfg.out}")
        else:
            rows = cmd_groundstate(cfg)
            print(f"wrote {len(rows)} ground states to {cfg.out}")
    except (ConfigError, SizingError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
