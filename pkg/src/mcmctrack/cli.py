"""Command-line interface: simulate scenes, run the tracking sampler, learn
parameters and score estimates against truth.

Subcommands
    simulate   draw a scene from the generative model, write scene.csv
               and truth.json
    track      run the fixed-parameter sampler on a scene, write trace.csv
               and tracks.json (last posterior sample of the tracks)
    learn      run the parameter-learning sampler, additionally writing
               params.csv and a posterior summary
    evaluate   OSPA between an estimated track file and a truth file

Scene CSV columns: t, obs_id, y1, y2 (1-based scan and observation ids).
Track JSON: {"n": .., "tracks": [{"t_b", "t_d", "states", "y_idx"}, ..],
"clutter": [[t, j], ..]}.  Every output starts with provenance comments
(package version, seed, config hash); runs are deterministic per seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .chain import ChainState, initial_state
from .learning import (MttSampler, PARAM_NAMES, PriorHyperparams,
                       param_vector)
from .metrics import ospa_series, summarize_trace
from .model import (Association, HmmParams, ModelParams, Scene, Track,
                    simulate)
from .moves import MOVE_NAMES, MoveConfig

DEFAULT_CONFIG = {
    "model": {
        "obs_model": "bearing_range", "delta": 1.0,
        "p_s": 0.95, "p_d": 0.9, "lambda_b": 0.4, "lambda_f": 3.0,
        "sigma_x2": 0.09, "sigma_y2": 0.49, "sigma_r2": 2.0,
        "sigma_b2": 0.0025, "mu_bx": 80.0, "mu_by": 100.0,
        "sigma_bpx2": 64.0, "sigma_bpy2": 64.0,
        "sigma_bvx2": 9.0, "sigma_bvy2": 9.0,
        "obs_window": [[0.0, 400.0], [-3.15, 3.15]],
    },
    "moves": {"p_m": 0.99, "tau": 5},
    "priors": {"alpha_rate": 0.01, "beta_rate": 100.0, "alpha_var": 0.01,
               "beta_var": 0.01, "n0": 0.01, "mu0_x": 0.0, "mu0_y": 0.0,
               "tied_birth": True},
    "run": {"n_scans": 50, "sweeps": 1000, "burn_in": 100, "n_moves": 50,
            "n_pg": 1, "n_param": 1, "n_particles": 15},
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in (extra or {}).items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and \
            isinstance(base.get(k), dict) else v
    return out


def load_config(path: str | None) -> dict:
    cfg = {}
    if path is not None:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    return _merge(DEFAULT_CONFIG, cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def params_from_config(cfg: dict) -> ModelParams:
    m = dict(cfg["model"])
    window = np.asarray(m.pop("obs_window"), dtype=float)
    assoc_keys = ("p_s", "p_d", "lambda_b", "lambda_f")
    assoc = {k: float(m.pop(k)) for k in assoc_keys}
    hmm = HmmParams(**{k: (v if k == "obs_model" else float(v))
                       for k, v in m.items()})
    params = ModelParams(hmm=hmm, obs_window=window, **assoc)
    params.validate()
    return params


def move_config_from(cfg: dict) -> MoveConfig:
    mc = MoveConfig(**cfg.get("moves", {}))
    mc.validate()
    return mc


def prior_from_config(cfg: dict):
    p = dict(cfg.get("priors", {}))
    tied = bool(p.pop("tied_birth", True))
    return PriorHyperparams(**p), tied


# ---------------------------------------------------------------------------
# file formats


def _provenance(cfg: dict, seed: int) -> list:
    return [f"# mcmctrack {__version__}", f"# seed {seed}",
            f"# config {config_hash(cfg)}"]


def save_scene_csv(path, scene: Scene, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(["t", "obs_id", "y1", "y2"])
        for t in range(1, scene.n + 1):
            for j, y in enumerate(scene.obs[t - 1], start=1):
                w.writerow([t, j, repr(float(y[0])), repr(float(y[1]))])


def load_scene_csv(path) -> Scene:
    rows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            rows.append(line)
    rdr = csv.DictReader(rows)
    per_scan: dict = {}
    for r in rdr:
        per_scan.setdefault(int(r["t"]), []).append(
            (int(r["obs_id"]), float(r["y1"]), float(r["y2"])))
    if not per_scan:
        raise ValueError(f"{path}: no observations")
    n = max(per_scan)
    obs = []
    for t in range(1, n + 1):
        scan = sorted(per_scan.get(t, []))
        if [j for j, *_ in scan] != list(range(1, len(scan) + 1)):
            raise ValueError(f"{path}: obs_id not contiguous at scan {t}")
        obs.append(np.array([[y1, y2] for _, y1, y2 in scan]).reshape(-1, 2))
    return Scene(obs=obs)


def tracks_to_json(state: ChainState, n: int) -> dict:
    return {
        "n": n,
        "tracks": [{"t_b": tr.t_b, "t_d": tr.t_d,
                    "states": tr.states.tolist(),
                    "y_idx": tr.y_idx.tolist()} for tr in state.tracks],
        "clutter": [list(c) for c in state.clutter_list()],
    }


def save_tracks_json(path, state: ChainState, n: int, meta: dict) -> None:
    doc = dict(meta)
    doc.update(tracks_to_json(state, n))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_tracks_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    tracks = [Track(int(d["t_b"]), int(d["t_d"]),
                    np.asarray(d["states"], dtype=float).reshape(-1, 4),
                    np.asarray(d["y_idx"], dtype=int))
              for d in doc["tracks"]]
    return tracks, int(doc["n"])


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    params = params_from_config(cfg)
    rng = np.random.default_rng(args.seed)
    assoc, scene = simulate(params, cfg["run"]["n_scans"], rng)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, args.seed)
    try:
        save_scene_csv(out / "scene.csv", scene, prov)
        from .chain import state_from_association
        truth = state_from_association(assoc, scene, scene.truth_states)
        save_tracks_json(out / "truth.json", truth, scene.n,
                         {"meta": {"seed": args.seed,
                                   "config": config_hash(cfg),
                                   "version": __version__}})
    except Exception:
        (out / "scene.csv").unlink(missing_ok=True)
        (out / "truth.json").unlink(missing_ok=True)
        raise
    print(f"wrote {out / 'scene.csv'} and {out / 'truth.json'} "
          f"({truth.K} tracks, {sum(scene.k_y(t) for t in range(1, scene.n + 1))}"
          " observations)")
    return 0


def _run_sampler(args, learn: bool) -> int:
    cfg = load_config(args.config)
    chains = getattr(args, "chains", 1)
    if chains < 1:
        raise ValueError("--chains must be >= 1")
    if chains == 1:
        return _run_one_chain(args, learn, cfg, args.seed, Path(args.out_dir))
    # independent chains, one output directory each, with per-chain seeds
    # derived deterministically from the master seed
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(args.seed).spawn(chains)]
    for c, seed in enumerate(seeds):
        _run_one_chain(args, learn, cfg, seed, Path(args.out_dir) / f"chain{c:02d}")
    return 0


def _run_one_chain(args, learn: bool, cfg: dict, seed: int, out: Path) -> int:
    params = params_from_config(cfg)
    mc = move_config_from(cfg)
    prior, tied = prior_from_config(cfg)
    run = cfg["run"]
    sweeps = args.sweeps if args.sweeps is not None else run["sweeps"]
    burn = args.burn_in if args.burn_in is not None else run["burn_in"]
    scene = load_scene_csv(args.scene)
    rng = np.random.default_rng(seed)
    sampler = MttSampler(params, scene, mc, rng,
                         n_moves=run["n_moves"], n_pg=run["n_pg"],
                         n_param=run["n_param"] if learn else 0,
                         n_particles=run["n_particles"],
                         prior=prior, tied_birth=tied)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, seed)
    written = []
    try:
        trace_path = out / "trace.csv"
        written.append(trace_path)
        param_rows = []
        with open(trace_path, "w", newline="") as fh:
            for line in prov:
                fh.write(line + "\n")
            w = csv.writer(fh)
            w.writerow(["sweep", "log_joint", "n_tracks", "accept_rate"]
                       + [f"accept_{m}" for m in MOVE_NAMES])
            for i in range(sweeps):
                sampler.sweep()
                w.writerow([i + 1, repr(sampler.log_joint), sampler.state.K,
                            repr(sampler.stats.rate())]
                           + [repr(sampler.stats.rate(m)) for m in MOVE_NAMES])
                if learn and i >= burn:
                    param_rows.append(param_vector(sampler.params))
        tracks_path = out / "tracks.json"
        written.append(tracks_path)
        save_tracks_json(tracks_path, sampler.state, scene.n,
                         {"meta": {"seed": seed,
                                   "config": config_hash(cfg),
                                   "version": __version__,
                                   "sweeps": sweeps}})
        if learn:
            params_path = out / "params.csv"
            written.append(params_path)
            with open(params_path, "w", newline="") as fh:
                for line in prov:
                    fh.write(line + "\n")
                w = csv.writer(fh)
                w.writerow(PARAM_NAMES)
                for row in param_rows:
                    w.writerow([repr(float(v)) for v in row])
            if param_rows:
                s = summarize_trace(np.asarray(param_rows))
                summary = {name: {"mean": float(s["mean"][i]),
                                  "lo": float(s["lo"][i]),
                                  "hi": float(s["hi"][i])}
                           for i, name in enumerate(PARAM_NAMES)}
                with open(out / "params_summary.json", "w") as fh:
                    json.dump({"meta": {"seed": seed,
                                        "config": config_hash(cfg),
                                        "version": __version__},
                               "posterior": summary}, fh, indent=1)
    except Exception:
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise
    print(f"{sweeps} sweeps done; {sampler.state.K} tracks; overall move "
          f"acceptance {sampler.stats.rate():.4f}; outputs in {out}")
    return 0


def _cmd_track(args) -> int:
    return _run_sampler(args, learn=False)


def _cmd_learn(args) -> int:
    return _run_sampler(args, learn=True)


def _cmd_evaluate(args) -> int:
    est, n1 = load_tracks_json(args.estimate)
    ref, n2 = load_tracks_json(args.truth)
    if n1 != n2:
        raise ValueError("estimate and truth cover different scan counts")
    series = ospa_series(est, ref, n1, c=args.cutoff, p=args.order)
    report = {
        "n": n1, "cutoff": args.cutoff, "order": args.order,
        "mean_total": float(series[:, 0].mean()),
        "mean_localisation": float(series[:, 1].mean()),
        "mean_cardinality": float(series[:, 2].mean()),
        "per_scan": series.tolist(),
    }
    if args.out is not None:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1)
    print(f"mean OSPA {report['mean_total']:.4f} "
          f"(loc {report['mean_localisation']:.4f}, "
          f"card {report['mean_cardinality']:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mcmctrack",
        description="Batch multi-target tracking by MCMC over tracks, "
                    "states and model parameters")
    ap.add_argument("--version", action="version",
                    version=f"mcmctrack {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a scene from the model")
    sim.add_argument("--config", default=None)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-dir", required=True)
    sim.set_defaults(func=_cmd_simulate)

    for name, fn, hlp in (("track", _cmd_track, "sample tracks, fixed parameters"),
                          ("learn", _cmd_learn, "sample tracks and parameters")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", default=None)
        p.add_argument("--scene", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sweeps", type=int, default=None)
        p.add_argument("--burn-in", type=int, default=None)
        p.add_argument("--chains", type=int, default=1,
                       help="number of independent chains (per-chain seeds "
                            "derived from --seed; outputs in chainNN/ "
                            "subdirectories when > 1)")
        p.add_argument("--out-dir", required=True)
        p.set_defaults(func=fn)

    ev = sub.add_parser("evaluate", help="OSPA between estimate and truth")
    ev.add_argument("--estimate", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--cutoff", type=float, default=10.0)
    ev.add_argument("--order", type=float, default=1.0)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=_cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
