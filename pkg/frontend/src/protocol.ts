// shearbc.v1 wire protocol: JSON text frames with a "type" discriminator.

export const PROTOCOL = "shearbc.v1";

export interface HelloFrame {
  type: "hello";
  protocol: string;
  control_dt: number;
  workspace_half: number;
  embodiment: string;
  scenario: string;
  seed: number;
  policy: string;
}

export interface ShearSummary {
  left: { flow: [number, number]; div: number };
  right: { flow: [number, number]; div: number };
}

export interface StateFrame {
  type: "state";
  seq: number;
  tick: number;
  t: number;
  pose: [number, number];
  cmd: [number, number];
  f_human: [number, number];
  effort: number;
  shear_summary: ShearSummary | null;
  slip: boolean;
  supported: boolean;
  status: string;
  target: [number, number];
  no_client: boolean;
}

export interface DisplayFrame {
  type: "display";
  seq: number;
  t: number;
  pose: [number, number];
  cmd: [number, number];
  effort: number;
  hand: [number, number] | null;
  slip: boolean;
}

export interface GapFrame {
  type: "gap";
  seq: number;
  dropped: number;
}

export interface ErrorFrame {
  type: "error";
  message: string;
}

export type ServerFrame = HelloFrame | StateFrame | DisplayFrame | GapFrame | ErrorFrame;

export class ProtocolError extends Error {}

function requireNumberPair(v: unknown, field: string): [number, number] {
  if (!Array.isArray(v) || v.length !== 2 ||
      typeof v[0] !== "number" || typeof v[1] !== "number") {
    throw new ProtocolError(`field ${field} is not a number pair`);
  }
  return [v[0], v[1]];
}

/** Parse and structurally validate one server frame. */
export function parseFrame(raw: string): ServerFrame {
  let msg: Record<string, unknown>;
  try {
    msg = JSON.parse(raw);
  } catch {
    throw new ProtocolError("frame is not valid JSON");
  }
  switch (msg.type) {
    case "hello": {
      if (msg.protocol !== PROTOCOL) {
        throw new ProtocolError(`unsupported protocol ${String(msg.protocol)}`);
      }
      if (typeof msg.control_dt !== "number" || typeof msg.workspace_half !== "number") {
        throw new ProtocolError("hello frame missing timing/workspace fields");
      }
      return msg as unknown as HelloFrame;
    }
    case "state": {
      requireNumberPair(msg.pose, "pose");
      requireNumberPair(msg.cmd, "cmd");
      requireNumberPair(msg.f_human, "f_human");
      if (typeof msg.tick !== "number" || typeof msg.effort !== "number") {
        throw new ProtocolError("state frame missing tick/effort");
      }
      return msg as unknown as StateFrame;
    }
    case "display": {
      requireNumberPair(msg.pose, "pose");
      if (typeof msg.effort !== "number") {
        throw new ProtocolError("display frame missing effort");
      }
      return msg as unknown as DisplayFrame;
    }
    case "gap": {
      if (typeof msg.dropped !== "number") {
        throw new ProtocolError("gap frame missing dropped count");
      }
      return msg as unknown as GapFrame;
    }
    case "error": {
      if (typeof msg.message !== "string") {
        throw new ProtocolError("error frame missing message");
      }
      return msg as unknown as ErrorFrame;
    }
    default:
      throw new ProtocolError(`unknown frame type ${String(msg.type)}`);
  }
}

export function handMessage(y: number, z: number): string {
  return JSON.stringify({ type: "hand", y, z });
}

export function releaseMessage(): string {
  return JSON.stringify({ type: "release" });
}
