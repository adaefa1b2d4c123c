"""Live collaboration service: one simulated session over HTTP + WebSocket.

The physics loop runs on its own thread; a live human agent takes hand
targets from a latest-wins mailbox fed through the /stream socket. Full
state frames go out every control tick and lightweight display frames at
10 Hz; a bounded buffer drops oldest frames (flagged by a gap frame) so a
slow client never stalls physics.
"""

import asyncio
import collections
import json
import threading
import time

import numpy as np

from . import sim, tactile
from .config import world_config_from
from .evaluation import effort_metric
from .policy import DiffusionController
from .seeding import derive_rng

PROTOCOL = "shearbc.v1"
FRAME_BUFFER = 100
DISPLAY_HZ = 10.0


class SessionError(ValueError):
    pass


def _shear_summary(shear):
    if shear is None:
        return None
    out = {}
    for side, base in (("left", 0), ("right", 3)):
        out[side] = {
            "flow": [float(shear[..., base].mean()), float(shear[..., base + 1].mean())],
            "div": float(shear[..., base + 2].mean()),
        }
    return out


class ActiveSession:
    """One running simulation with a live human in the loop."""

    def __init__(self, session_cfg, base_cfg, net=None):
        kind = session_cfg.get("embodiment", "malleable")
        if kind not in sim.EMBODIMENT_KINDS:
            raise SessionError(
                f"unknown embodiment {kind!r}; valid kinds: {list(sim.EMBODIMENT_KINDS)}")
        scenario = session_cfg.get("scenario", "maneuver")
        if scenario not in ("maneuver", "place"):
            raise SessionError(f"unknown scenario {scenario!r}")
        seed = int(session_cfg.get("seed", base_cfg.get("seed", 0)))
        use_policy = net is not None and session_cfg.get("policy", "none") != "none"
        self.session_cfg = {"embodiment": kind, "scenario": scenario, "seed": seed,
                            "policy": "checkpoint" if use_policy else "none"}
        self.base_cfg = base_cfg
        self.time_scale = float(base_cfg.get("time_scale", 1.0))

        wc = world_config_from(base_cfg)
        self.human = sim.HumanAgent("live", seed=seed)
        nu = tactile.sample_nuisance(derive_rng(seed, "nuisance"))
        left, right = tactile.default_pair()
        bridge = tactile.TactileBridge(
            left, right, nu, noise_seed=derive_rng(seed, "noise").integers(2**31))
        controller = None
        if use_policy:
            controller = DiffusionController(net, sim.make_embodiment(kind), seed=seed)
        self.world = sim.World(sim.make_embodiment(kind), self.human, bridge,
                               config=wc, seed=seed, controller=controller,
                               scenario=scenario, record_raw=False)

        self.frames = collections.deque()
        self.seq = 0
        self.lock = threading.Lock()
        self._stop = threading.Event()
        self.thread = threading.Thread(target=self._loop, daemon=True)
        self.thread.start()

    # -- frame buffer ----------------------------------------------------

    def _push(self, frame):
        with self.lock:
            frame["seq"] = self.seq
            self.seq += 1
            self.frames.append(frame)
            while len(self.frames) > FRAME_BUFFER:
                self.frames.popleft()

    def pop_frames(self, last_seq):
        """Frames newer than last_seq, with a gap marker if any were lost."""
        with self.lock:
            out = [fr for fr in self.frames if fr["seq"] > last_seq]
        if out and last_seq >= 0 and out[0]["seq"] > last_seq + 1:
            out.insert(0, {"type": "gap", "dropped": out[0]["seq"] - last_seq - 1,
                           "seq": out[0]["seq"] - 1})
        return out

    # -- physics thread ---------------------------------------------------

    def _loop(self):
        cfg = self.world.cfg
        dt = cfg.physics_dt
        per_tick = int(round(cfg.control_dt / dt))
        display_every = max(1, int(round(1.0 / (DISPLAY_HZ * dt))))
        step = 0
        next_wall = time.monotonic()
        while not self._stop.is_set():
            self.world._step_physics()
            self.world._check_completion()
            if self.world.grasp.slipped and self.world.status == "running":
                self.world.status = "slip"
            step += 1
            if step % per_tick == 0:
                obs = self.world.sample_tick()
                self._push(self._state_frame(obs))
            elif step % display_every == 0:
                self._push(self._display_frame())
            next_wall += dt / self.time_scale
            delay = next_wall - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_wall = time.monotonic()

    def _display_frame(self):
        w = self.world
        hand = self.human.hand_target(w.t)
        return {
            "type": "display", "t": round(w.t, 4),
            "pose": [float(v) for v in w.state.pose],
            "cmd": [float(v) for v in w.cmd],
            "effort": effort_metric(getattr(w, "_last_f_human", np.zeros(2))),
            "hand": None if hand is None else [float(v) for v in hand],
            "slip": bool(w.grasp.slipped),
        }

    def _state_frame(self, obs):
        w = self.world
        return {
            "type": "state", "tick": obs.tick, "t": round(obs.t, 4),
            "pose": [float(v) for v in obs.pose],
            "cmd": [float(v) for v in w.cmd],
            "f_human": [float(v) for v in obs.f_human],
            "effort": effort_metric(obs.f_human),
            "shear_summary": _shear_summary(obs.shear),
            "slip": bool(obs.slipped),
            "supported": bool(obs.supported),
            "status": w.status,
            "target": [float(v) for v in w.cfg.target],
            "no_client": bool(self.human.no_client and not self.human.live_engaged),
        }

    # -- input ------------------------------------------------------------

    def handle_input(self, msg):
        kind = msg.get("type")
        if kind == "hand":
            y, z = float(msg["y"]), float(msg["z"])
            hw = sim.WORKSPACE_HALF
            clamped = not (-hw <= y <= hw and -hw <= z <= hw)
            self.human.set_live_target(float(np.clip(y, -hw, hw)),
                                       float(np.clip(z, -hw, hw)))
            return {"clamped": clamped}
        if kind == "release":
            self.human.release()
            return {}
        raise SessionError(f"unknown message type {kind!r}")

    def stop(self):
        self._stop.set()
        self.thread.join(timeout=2.0)


class SessionManager:
    def __init__(self, base_cfg, net=None):
        self.base_cfg = base_cfg
        self.net = net
        self.session = None
        self.streams = 0

    def reset(self, session_cfg):
        if self.streams > 0:
            raise SessionError("a session with a connected stream is already active")
        new = ActiveSession(session_cfg, self.base_cfg, net=self.net)
        old, self.session = self.session, new
        if old is not None:
            old.stop()
        return new

    def stop(self):
        if self.session is not None:
            self.session.stop()
            self.session = None


def create_app(base_cfg, net=None, manager=None):
    """FastAPI app exposing /health, /session and the /stream socket."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import JSONResponse

    mgr = manager or SessionManager(base_cfg, net=net)
    app = FastAPI(title="shearbc live session")
    app.state.manager = mgr

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/session")
    def get_session():
        s = mgr.session
        if s is None:
            return {"active": False}
        return {"active": True, **s.session_cfg, "status": s.world.status}

    @app.post("/session")
    async def post_session(cfg: dict):
        try:
            new = mgr.reset(cfg)
        except SessionError as exc:
            code = 409 if "already active" in str(exc) else 422
            return JSONResponse({"error": str(exc),
                                 "valid_kinds": list(sim.EMBODIMENT_KINDS)},
                                status_code=code)
        except Exception as exc:  # unloadable checkpoint and kin
            return JSONResponse({"error": f"{type(exc).__name__}: {exc}"},
                                status_code=400)
        return {"active": True, **new.session_cfg}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        if mgr.session is None or mgr.streams >= 1:
            await ws.close(code=1013)
            return
        await ws.accept(subprotocol=PROTOCOL)
        mgr.streams += 1
        session = mgr.session
        try:
            await ws.send_text(json.dumps({
                "type": "hello", "protocol": PROTOCOL,
                "control_dt": session.base_cfg["control_dt"],
                "workspace_half": sim.WORKSPACE_HALF,
                **session.session_cfg}))
            last_seq = -1

            async def sender():
                nonlocal last_seq
                while True:
                    for fr in session.pop_frames(last_seq):
                        last_seq = max(last_seq, fr["seq"])
                        await ws.send_text(json.dumps(fr))
                    await asyncio.sleep(0.02 / session.time_scale)

            send_task = asyncio.create_task(sender())
            try:
                while True:
                    raw = await ws.receive_text()
                    try:
                        msg = json.loads(raw)
                        session.handle_input(msg)
                    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                        await ws.send_text(json.dumps(
                            {"type": "error", "message": f"bad input: {exc}"}))
            finally:
                send_task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            mgr.streams -= 1
            session.human.release()

    return app


def serve(cfg, net=None):
    """Start an initial session and serve it with uvicorn (blocking)."""
    import uvicorn

    mgr = SessionManager(cfg, net=net)
    mgr.reset({"embodiment": cfg.get("embodiment", "malleable"),
               "scenario": cfg.get("scenario", "maneuver"),
               "seed": cfg.get("seed", 0),
               "policy": "checkpoint" if net is not None else "none"})
    app = create_app(cfg, net=net, manager=mgr)
    uvicorn.run(app, host="0.0.0.0", port=int(cfg.get("port", 8731)),
                log_level="warning")
