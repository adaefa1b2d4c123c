"""Command-line entry point orchestrating the full pipeline.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import collect as collect_mod
from . import config as cfgmod
from . import dataset as ds
from . import evaluation as ev
from . import policy as polmod
from .config import ConfigError
from .seeding import derive_rng


def _log(msg):
    print(msg, flush=True)


def _add_common(p):
    p.add_argument("--config", help="JSON config file (flags override keys)")
    p.add_argument("--seed", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="shearbc", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("collect", help="record demonstration episodes")
    _add_common(p)
    p.add_argument("--demo", choices=["A", "B"])
    p.add_argument("--episodes", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")

    p = sub.add_parser("train", help="train a diffusion policy")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--modality", choices=list(polmod.MODALITIES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", required=True, help="checkpoint path (.ckpt)")
    p.add_argument("--force", action="store_true",
                   help="allow combinations that are refused by default")

    p = sub.add_parser("rollout", help="run one policy rollout")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embodiment", choices=["ji-medium", "ji-stiff", "jp", "gantry"])
    p.add_argument("--scenario", choices=["maneuver", "place"])
    p.add_argument("--trials", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run the measurement suite")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="demo dataset (baseline + latents)")
    p.add_argument("--checkpoint", action="append", default=[],
                   help="policy checkpoint (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--only", choices=["effort", "placement", "shift", "force-est"])
    p.add_argument("--trials", type=int)
    p.add_argument("--placement-trials", dest="placement_trials", type=int)

    p = sub.add_parser("tsne", help="embed encoder latents for the shift figure")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="CSV scatter output path")

    p = sub.add_parser("force-est", help="force estimation study")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", dest="force_est_epochs", type=int)

    p = sub.add_parser("serve", help="live collaboration service")
    _add_common(p)
    p.add_argument("--port", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--embodiment", choices=list(ev.sim.EMBODIMENT_KINDS))
    p.add_argument("--scenario", choices=["maneuver", "place"])
    return ap


def _resolve(args, keys):
    overrides = {k: getattr(args, k, None) for k in keys}
    return cfgmod.load_config(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------------------

def cmd_collect(args):
    cfg = _resolve(args, ["seed", "demo", "episodes", "duration"])
    if cfg["episodes"] is None:
        cfg["episodes"] = 50 if cfg["demo"] == "A" else 75
    if cfg["episodes"] <= 0:
        raise ConfigError("--episodes must be positive")
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise ConfigError(f"output directory {out} is not empty (use --force)")
    demo_kind = "A-maneuver" if cfg["demo"] == "A" else "B-place"
    wc = cfgmod.world_config_from(cfg)
    episodes, discarded = collect_mod.collect_demos(
        demo_kind, cfg["episodes"], cfg["seed"], duration=cfg["duration"],
        world_cfg=wc, hand_speed=cfg["demo_hand_speed"], place_speed=cfg["place_speed"],
        log=_log)
    ds.save_dataset(episodes, out, extra={"demo_kind": demo_kind,
                                          "discarded": discarded,
                                          "stop_after_completion_s": 2.0})
    cfgmod.write_manifest(out, "collect", cfg, outputs=[out])
    _log(f"wrote {len(episodes)} episodes to {out} ({len(discarded)} discarded)")
    return 0


def cmd_train(args):
    cfg = _resolve(args, ["seed", "modality", "epochs", "batch_size", "lr"])
    episodes, extra = ds.load_dataset(args.dataset,
                                      with_raw=(cfg["modality"] == "raw"))
    demo_kind = extra.get("demo_kind", episodes[0].demo_kind)
    if cfg["modality"] == "raw" and demo_kind.startswith("B") and not args.force:
        raise ConfigError(
            "raw modality on the placement demo set is refused by default "
            "(pass --force to override)")
    tc = polmod.TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        steps=cfg["steps"], val_fraction=cfg["val_fraction"],
        unet_widths=tuple(cfg["unet_widths"]),
        horizons=polmod.Horizons(cfg["t_a"], cfg["t_o"], cfg["t_tau"], cfg["t_e"]))
    net, history = polmod.train_policy(episodes, cfg["modality"], tc,
                                       cfg["seed"], log=_log)
    out = args.out
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    net.save(out)
    with open(out + ".loss.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for rec in history:
            w.writerow([rec["epoch"], rec["train_loss"], rec["val_loss"]])
    cfgmod.write_manifest(os.path.dirname(out) or ".", "train", cfg,
                          inputs=[args.dataset], outputs=[out])
    _log(f"checkpoint written to {out}")
    return 0


def cmd_rollout(args):
    cfg = _resolve(args, ["seed", "embodiment", "scenario", "trials"])
    net = polmod.PolicyNet.load(args.checkpoint)
    wc = cfgmod.world_config_from(cfg)
    results = []
    if cfg["scenario"] == "place":
        for trial in range(cfg["trials"]):
            seed = int(derive_rng(cfg["seed"], "place", trial).integers(2**31))
            res = ev.run_box_placement(net, cfg["embodiment"], seed, world_cfg=wc,
                                       shifted_nuisance=cfg["shifted_nuisance"],
                                       timeout=cfg["placement_timeout"],
                                       hand_speed=cfg["place_speed"])
            results.append({"trial": trial, "status": res.status,
                            "success": res.success,
                            "effort_mean": res.effort.mean})
    else:
        rep, _ = ev.run_maneuverability(
            net, cfg["embodiment"], cfg["seed"], trials=cfg["trials"],
            duration=cfg["trial_duration"], world_cfg=wc,
            shifted_nuisance=cfg["shifted_nuisance"], hand_speed=cfg["eval_hand_speed"])
        results.append(rep.to_json())
    ev.save_report(args.out, {"rollout": results, "config": cfg})
    cfgmod.write_manifest(os.path.dirname(args.out) or ".", "rollout", cfg,
                          inputs=[args.checkpoint], outputs=[args.out])
    _log(f"report written to {args.out}")
    return 0


def _load_checkpoints(paths):
    nets = {}
    for path in paths:
        net = polmod.PolicyNet.load(path)
        nets[net.modality] = net
    return nets


def cmd_eval(args):
    cfg = _resolve(args, ["seed", "trials", "placement_trials"])
    episodes, _ = ds.load_dataset(args.dataset, with_raw=True)
    nets = _load_checkpoints(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    wc = cfgmod.world_config_from(cfg)
    payload = {"config": cfg, "cells_absent": []}
    only = args.only

    baseline = ev.demo_effort_baseline(episodes)
    if only in (None, "effort"):
        reports = []
        for kind in ("ji-medium", "ji-stiff", "jp"):
            for modality in ("force", "shear", "raw"):
                if modality not in nets:
                    payload["cells_absent"].append(f"{kind}/{modality}")
                    continue
                rep, _ = ev.run_maneuverability(
                    nets[modality], kind, cfg["seed"], trials=cfg["trials"],
                    duration=cfg["trial_duration"], world_cfg=wc,
                    shifted_nuisance=cfg["shifted_nuisance"],
                    hand_speed=cfg["eval_hand_speed"])
                rep.baseline_mean = baseline[0]
                reports.append(rep)
                _log(f"effort {kind}/{modality}: {rep.mean:.2f} N")
        table = ev.format_effort_table(reports, baseline)
        _log(table)
        payload["effort"] = {"baseline": baseline,
                             "cells": [r.to_json() for r in reports],
                             "hardware_reference": ev.HARDWARE_EFFORT_MANEUVER}
        with open(os.path.join(args.out, "effort_table.txt"), "w") as f:
            f.write(table + "\n")

    if only in (None, "placement"):
        placement = {}
        for kind in ("gantry",):
            for modality in ("shear", "raw"):
                if modality not in nets:
                    payload["cells_absent"].append(f"placement/{kind}/{modality}")
                    continue
                outcomes = []
                for trial in range(cfg["placement_trials"]):
                    seed = int(derive_rng(cfg["seed"], "place", modality, trial)
                               .integers(2**31))
                    res = ev.run_box_placement(
                        nets[modality], kind, seed, world_cfg=wc,
                        shifted_nuisance=cfg["shifted_nuisance"],
                        timeout=cfg["placement_timeout"],
                        hand_speed=cfg["place_speed"])
                    outcomes.append({"status": res.status, "success": res.success,
                                     "effort_mean": res.effort.mean})
                placement[f"{kind}/{modality}"] = outcomes
                n_ok = sum(o["success"] for o in outcomes)
                _log(f"placement {kind}/{modality}: {n_ok}/{len(outcomes)} succeeded")
        payload["placement"] = {"cells": placement,
                                "hardware_reference": ev.HARDWARE_EFFORT_PLACEMENT}

    if only in (None, "shift"):
        shift = {}
        for modality in ("shear", "raw"):
            if modality not in nets:
                payload["cells_absent"].append(f"shift/{modality}")
                continue
            rep = _shift_analysis(nets[modality], episodes, cfg, wc)
            shift[modality] = rep.to_json()
            _log(f"shift {modality}: 5-NN accuracy {rep.knn_accuracy:.3f} "
                 f"hull containment {rep.hull_containment:.3f}")
            if rep.embedding is not None:
                _write_scatter(os.path.join(args.out, f"tsne_{modality}.csv"),
                               rep.embedding, rep.labels)
        payload["shift"] = shift

    if only in (None, "force-est"):
        cells = ev.force_estimation_study(
            seed=cfg["seed"], n_train=cfg["force_est_train"],
            n_val=cfg["force_est_val"], n_test=cfg["force_est_test"],
            epochs=cfg["force_est_epochs"], log=_log)
        table = ev.format_force_table(cells)
        _log(table)
        payload["force_est"] = {"cells": [c.to_json() for c in cells],
                                "hardware_reference": ev.HARDWARE_FORCE_EST}
        with open(os.path.join(args.out, "force_table.txt"), "w") as f:
            f.write(table + "\n")

    ev.save_report(os.path.join(args.out, "report.json"), payload)
    cfgmod.write_manifest(args.out, "eval", cfg,
                          inputs=[args.dataset] + list(args.checkpoint),
                          outputs=[args.out])
    return 0


def _shift_analysis(net, episodes, cfg, wc, trials=None):
    """Demo-vs-rollout latents; rollouts on ji-medium under held-out nuisance."""
    demo_frames = []
    rng = derive_rng(cfg["seed"], "shift-demo", net.modality)
    for ep in episodes:
        idx = rng.choice(ep.n_samples, size=min(24, ep.n_samples), replace=False)
        sub = _episode_frames(net, ep, idx)
        if sub is not None:
            demo_frames.append(sub)
    demo_lat = net.tactile_latent(np.concatenate(demo_frames))
    n_trials = trials if trials is not None else max(3, cfg["trials"])
    _, roll_lat = ev.run_maneuverability(
        net, "ji-medium", int(derive_rng(cfg["seed"], "shift-roll").integers(2**31)),
        trials=n_trials, duration=cfg["trial_duration"], world_cfg=wc,
        shifted_nuisance=cfg["shifted_nuisance"], collect_latents=True,
        hand_speed=cfg["eval_hand_speed"])
    return ev.latent_shift_score(demo_lat, roll_lat, net.modality,
                                 seed=cfg["seed"], max_points=cfg["shift_points"])


def _episode_frames(net, ep, idx):
    from . import flow as flowmod

    n = net.norm
    if net.modality == "shear":
        return flowmod.normalize_shear(ep.shear[idx], n.tactile_m, n.tactile_d) \
            .transpose(0, 3, 1, 2).astype(np.float32)
    if net.modality == "raw":
        if ep.raw is None:
            return None
        return (ep.raw[idx] * 2.0 - 1.0).astype(np.float32)
    return ds.normalize_component(ep.f_meas[idx], n.force_min, n.force_max)


def _write_scatter(path, embedding, labels):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "side"])
        for (x, y), lab in zip(embedding, labels):
            w.writerow([f"{x:.4f}", f"{y:.4f}", "demo" if lab == 0 else "rollout"])


def cmd_tsne(args):
    cfg = _resolve(args, ["seed"])
    episodes, _ = ds.load_dataset(args.dataset, with_raw=True)
    net = polmod.PolicyNet.load(args.checkpoint)
    wc = cfgmod.world_config_from(cfg)
    rep = _shift_analysis(net, episodes, cfg, wc)
    _write_scatter(args.out, rep.embedding, rep.labels)
    _log(f"5-NN accuracy {rep.knn_accuracy:.3f}; scatter written to {args.out}")
    cfgmod.write_manifest(os.path.dirname(args.out) or ".", "tsne", cfg,
                          inputs=[args.dataset, args.checkpoint], outputs=[args.out])
    return 0


def cmd_force_est(args):
    cfg = _resolve(args, ["seed", "force_est_epochs"])
    cells = ev.force_estimation_study(
        seed=cfg["seed"], n_train=cfg["force_est_train"], n_val=cfg["force_est_val"],
        n_test=cfg["force_est_test"], epochs=cfg["force_est_epochs"], log=_log)
    table = ev.format_force_table(cells)
    _log(table)
    os.makedirs(args.out, exist_ok=True)
    ev.save_report(os.path.join(args.out, "force_est.json"),
                   {"cells": [c.to_json() for c in cells],
                    "hardware_reference": ev.HARDWARE_FORCE_EST, "config": cfg})
    with open(os.path.join(args.out, "force_table.txt"), "w") as f:
        f.write(table + "\n")
    cfgmod.write_manifest(args.out, "force-est", cfg, outputs=[args.out])
    return 0


def cmd_serve(args):
    cfg = _resolve(args, ["seed", "port", "embodiment", "scenario"])
    from . import service

    net = polmod.PolicyNet.load(args.checkpoint) if args.checkpoint else None
    service.serve(cfg, net=net)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"collect": cmd_collect, "train": cmd_train, "rollout": cmd_rollout,
                "eval": cmd_eval, "tsne": cmd_tsne, "force-est": cmd_force_est,
                "serve": cmd_serve}
    try:
        return handlers[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
