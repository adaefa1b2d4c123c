// Conformance against a transcript recorded from the reference server.

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { PROTOCOL, parseFrame, handMessage, releaseMessage, ProtocolError } from "../src/protocol.js";

const here = dirname(fileURLToPath(import.meta.url));
const golden = JSON.parse(readFileSync(join(here, "golden/transcript.json"), "utf-8"));

describe("golden transcript conformance", () => {
  it("is a shearbc.v1 recording", () => {
    expect(golden.protocol).toBe(PROTOCOL);
  });

  it("parses every well-formed server frame in the transcript", () => {
    const recvs = golden.records.filter((r: any) => r.dir === "recv");
    expect(recvs.length).toBeGreaterThan(4);
    const seen = new Set<string>();
    for (const rec of recvs) {
      const frame = parseFrame(rec.raw);
      seen.add(frame.type);
    }
    expect(seen.has("hello")).toBe(true);
    expect(seen.has("state")).toBe(true);
    expect(seen.has("display")).toBe(true);
    expect(seen.has("error")).toBe(true);
  });

  it("hello frame carries timing and workspace geometry", () => {
    const hello = parseFrame(
      golden.records.find((r: any) => r.dir === "recv").raw);
    expect(hello.type).toBe("hello");
    if (hello.type === "hello") {
      expect(hello.control_dt).toBeCloseTo(0.3);
      expect(hello.workspace_half).toBeCloseTo(0.5);
    }
  });

  it("state frames carry monotone ticks and pose pairs", () => {
    const states = golden.records
      .filter((r: any) => r.dir === "recv")
      .map((r: any) => parseFrame(r.raw))
      .filter((f: any) => f.type === "state") as any[];
    for (let i = 1; i < states.length; i++) {
      expect(states[i].tick).toBeGreaterThan(states[i - 1].tick);
    }
    for (const s of states) {
      expect(s.pose).toHaveLength(2);
      expect(typeof s.effort).toBe("number");
    }
  });

  it("client messages in the transcript match our serializers", () => {
    const sends = golden.records.filter(
      (r: any) => r.dir === "send" && r.raw.startsWith("{"));
    const hand = JSON.parse(sends[0].raw);
    expect(JSON.parse(handMessage(hand.y, hand.z))).toEqual(hand);
    expect(JSON.parse(releaseMessage())).toEqual({ type: "release" });
  });
});

describe("parser rejects malformed frames", () => {
  it("rejects non-JSON", () => {
    expect(() => parseFrame("garbage not json")).toThrow(ProtocolError);
  });
  it("rejects unknown type", () => {
    expect(() => parseFrame(JSON.stringify({ type: "mystery" }))).toThrow(ProtocolError);
  });
  it("rejects wrong protocol hello", () => {
    expect(() => parseFrame(JSON.stringify({ type: "hello", protocol: "other.v9" })))
      .toThrow(ProtocolError);
  });
  it("rejects state frames with malformed pose", () => {
    expect(() => parseFrame(JSON.stringify({ type: "state", pose: [1], cmd: [0, 0],
                                             f_human: [0, 0], tick: 1, effort: 0 })))
      .toThrow(ProtocolError);
  });
});
