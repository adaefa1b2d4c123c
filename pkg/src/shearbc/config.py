"""Run configuration (JSON file + CLI overrides) and run manifests.

Every subcommand resolves one flat config dict, writes it into a manifest
next to its outputs, and derives all randomness from the single seed.
"""

import hashlib
import json
import os
import time

from . import __version__

DEFAULTS = {
    "seed": 0,
    # scenario / world
    "embodiment": "malleable",
    "scenario": "maneuver",
    "demo": "A",
    "episodes": None,              # demo-kind dependent default (50 / 75)
    "duration": 30.0,
    "box_mass": 0.4,
    "grip_force": 8.0,
    "mu": 2.5,
    "z_g": 0.13,
    "start": [0.0, 0.0],
    "target": [0.2, -0.15],
    "demo_hand_speed": 0.11,
    "eval_hand_speed": 0.12,
    "place_speed": 0.035,
    "physics_dt": 0.01,
    "control_dt": 0.3,
    # sensor
    "render_hw": [64, 84],
    "grid_hw": [13, 18],
    # training
    "modality": "shear",
    "epochs": 50,
    "batch_size": 64,
    "lr": 1e-5,
    "steps": 128,
    "t_a": 4,
    "t_o": 1,
    "t_tau": 4,
    "t_e": 2,
    "val_fraction": 0.2,
    "unet_widths": [64, 128, 256],
    # rollout / eval
    "k_inf": 16,
    "eta": 0.5,
    "trials": 3,
    "trial_duration": 25.0,
    "placement_trials": 10,
    "placement_timeout": 60.0,
    "shift_points": 200,
    "shifted_nuisance": True,
    # force estimation study
    "force_est_train": 320,
    "force_est_val": 80,
    "force_est_test": 200,
    "force_est_epochs": 120,
    # service
    "port": 8731,
    "time_scale": 1.0,
}


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=None):
    """Merge defaults <- JSON file <- CLI overrides (flags win)."""
    cfg = dict(DEFAULTS)
    if path:
        try:
            with open(path) as f:
                file_cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        cfg[key] = val
    return cfg


def world_config_from(cfg):
    from .sim import WorldConfig

    return WorldConfig(
        box_mass=cfg["box_mass"], grip_force=cfg["grip_force"], mu=cfg["mu"],
        z_g=cfg["z_g"], start=tuple(cfg["start"]), target=tuple(cfg["target"]),
        physics_dt=cfg["physics_dt"], control_dt=cfg["control_dt"])


def content_hash(paths):
    """Stable hash of input files/dirs feeding a run (for manifests)."""
    h = hashlib.sha256()
    for p in sorted(paths):
        if p is None or not os.path.exists(p):
            continue
        if os.path.isdir(p):
            names = sorted(
                os.path.join(r, f) for r, _, fs in os.walk(p) for f in fs)
        else:
            names = [p]
        for name in names:
            h.update(name.encode())
            st = os.stat(name)
            h.update(str(st.st_size).encode())
            with open(name, "rb") as f:
                h.update(hashlib.sha256(f.read()).digest())
    return h.hexdigest()[:16]


def write_manifest(out_dir, subcommand, cfg, inputs=(), outputs=(), extra=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "tool": "shearbc",
        "version": __version__,
        "subcommand": subcommand,
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs_hash": content_hash(list(inputs)),
        "outputs": list(outputs),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        manifest["extra"] = extra
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return path
