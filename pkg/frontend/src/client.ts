// WebSocket session client: frame dispatch, reconnection and a 20 Hz
// throttled (latest-wins) hand-target sender.

import { PROTOCOL, ServerFrame, parseFrame, handMessage, releaseMessage } from "./protocol.js";

export const HAND_SEND_HZ = 20;

export interface ClientHooks {
  onFrame: (frame: ServerFrame) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
}

type SocketLike = Pick<WebSocket, "send" | "close" | "readyState"> & {
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
};

export class SessionClient {
  private sock: SocketLike | null = null;
  private pending: [number, number] | null = null;
  private lastSend = -Infinity;
  private trailing: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(
    private url: string,
    private hooks: ClientHooks,
    private makeSocket: (url: string) => SocketLike =
      (u) => new WebSocket(u, [PROTOCOL]) as unknown as SocketLike,
    private now: () => number = () => performance.now(),
  ) {}

  connect(): void {
    this.closed = false;
    this.hooks.onStatus?.("connecting");
    const sock = this.makeSocket(this.url);
    this.sock = sock;
    sock.onopen = () => this.hooks.onStatus?.("open");
    sock.onmessage = (ev) => {
      try {
        this.hooks.onFrame(parseFrame(ev.data));
      } catch {
        // a malformed frame is the server's bug; skip it, keep streaming
      }
    };
    sock.onclose = () => {
      this.hooks.onStatus?.("closed");
      if (!this.closed) {
        setTimeout(() => this.connect(), 1000);
      }
    };
  }

  close(): void {
    this.closed = true;
    this.sock?.close();
  }

  /** Queue a hand target; sends collapse to at most HAND_SEND_HZ per second
   * with the newest value winning. */
  sendHand(y: number, z: number): void {
    this.pending = [y, z];
    const interval = 1000 / HAND_SEND_HZ;
    const due = this.now() - this.lastSend >= interval;
    if (due) {
      this.flushHand();
    } else if (this.trailing === null) {
      const wait = interval - (this.now() - this.lastSend);
      this.trailing = setTimeout(() => {
        this.trailing = null;
        this.flushHand();
      }, Math.max(wait, 0));
    }
  }

  private flushHand(): void {
    if (!this.pending || !this.sock || this.sock.readyState !== 1) return;
    const [y, z] = this.pending;
    this.pending = null;
    this.lastSend = this.now();
    this.sock.send(handMessage(y, z));
  }

  sendRelease(): void {
    if (this.trailing !== null) {
      clearTimeout(this.trailing);
      this.trailing = null;
    }
    this.pending = null;
    if (this.sock && this.sock.readyState === 1) {
      this.sock.send(releaseMessage());
    }
  }
}
