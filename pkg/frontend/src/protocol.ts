// Wire protocol codec, byte-compatible with the bench server's canonical JSON.
// One message per websocket frame; numbers carry up to 9 significant digits.

export const PROTOCOL_VERSION = 1;
export const MAX_ENCODED_SIZE = 1200;
export const STREAM_PORT = 47801;

export type ControllerMode = "two_button" | "one_handed";
export type EventKind = "trial_start" | "trial_complete" | "trial_failed" | "collision" | "checkpoint";

export type RcCommand = {
  type: "rc"; seq: number; t_ms: number; vx: number; vy: number; vz: number; yaw_rate: number;
};
export type SessionControl = { type: "start" } | { type: "stop" };
export type ConfigUpdate = {
  type: "config"; participant_id: string; controller_mode: ControllerMode; plan_seed: number;
};
export type StateUpdate = {
  type: "state"; t_ms: number;
  px: number; py: number; pz: number;
  vx: number; vy: number; vz: number;
  ax: number; ay: number; az: number;
  collided: boolean;
};
export type EventNotice = {
  type: "event"; kind: EventKind; t_ms: number; payload: Record<string, unknown> | null;
};
export type ErrorMessage = { type: "error"; code: string; text: string };

export type Message = RcCommand | SessionControl | ConfigUpdate | StateUpdate | EventNotice | ErrorMessage;

export class ProtocolError extends Error {
  constructor(public code: string, detail = "") {
    super(detail ? `${code}: ${detail}` : code);
  }
}

const CONTROLLER_MODES: ReadonlySet<string> = new Set(["two_button", "one_handed"]);
const EVENT_KINDS: ReadonlySet<string> = new Set([
  "trial_start", "trial_complete", "trial_failed", "collision", "checkpoint",
]);

/** Quantize to the wire's 9 significant digits. */
export function wireFloat(x: number): number {
  return Number.parseFloat(x.toPrecision(9));
}

// The server writes floats the way Python repr does: integral values keep a
// ".0", and zero is canonical (negative zero never hits the wire).
function fmtFloat(x: number, name: string): string {
  if (typeof x !== "number" || !Number.isFinite(x)) {
    throw new ProtocolError("invalid_message", `${name} is not a finite number`);
  }
  if (x === 0) return "0.0";
  const q = wireFloat(x);
  if (Number.isInteger(q) && Math.abs(q) < 1e15) {
    return q.toFixed(1);
  }
  return String(q);
}

function fmtUint(x: number, name: string): string {
  if (typeof x !== "number" || !Number.isInteger(x) || x < 0) {
    throw new ProtocolError("invalid_message", `${name} is not an unsigned integer`);
  }
  return String(x);
}

export function encode(msg: Message): string {
  let body: string;
  switch (msg.type) {
    case "start":
    case "stop":
      body = `"type":"${msg.type}"`;
      break;
    case "rc":
      body =
        `"type":"rc","seq":${fmtUint(msg.seq, "seq")},"t_ms":${fmtUint(msg.t_ms, "t_ms")}` +
        `,"vx":${fmtFloat(msg.vx, "vx")},"vy":${fmtFloat(msg.vy, "vy")}` +
        `,"vz":${fmtFloat(msg.vz, "vz")},"yaw_rate":${fmtFloat(msg.yaw_rate, "yaw_rate")}`;
      break;
    case "config":
      if (!CONTROLLER_MODES.has(msg.controller_mode)) {
        throw new ProtocolError("invalid_message", `bad controller_mode ${msg.controller_mode}`);
      }
      body =
        `"type":"config","participant_id":${JSON.stringify(msg.participant_id)}` +
        `,"controller_mode":"${msg.controller_mode}","plan_seed":${fmtUint(msg.plan_seed, "plan_seed")}`;
      break;
    case "state":
      body =
        `"type":"state","t_ms":${fmtUint(msg.t_ms, "t_ms")}` +
        `,"px":${fmtFloat(msg.px, "px")},"py":${fmtFloat(msg.py, "py")},"pz":${fmtFloat(msg.pz, "pz")}` +
        `,"vx":${fmtFloat(msg.vx, "vx")},"vy":${fmtFloat(msg.vy, "vy")},"vz":${fmtFloat(msg.vz, "vz")}` +
        `,"ax":${fmtFloat(msg.ax, "ax")},"ay":${fmtFloat(msg.ay, "ay")},"az":${fmtFloat(msg.az, "az")}` +
        `,"collided":${msg.collided}`;
      break;
    case "event":
      if (!EVENT_KINDS.has(msg.kind)) {
        throw new ProtocolError("invalid_message", `bad event kind ${msg.kind}`);
      }
      body =
        `"type":"event","kind":"${msg.kind}","t_ms":${fmtUint(msg.t_ms, "t_ms")}` +
        `,"payload":${JSON.stringify(msg.payload)}`;
      break;
    case "error":
      body = `"type":"error","code":${JSON.stringify(msg.code)},"text":${JSON.stringify(msg.text)}`;
      break;
  }
  const data = `{"v":${PROTOCOL_VERSION},${body}}`;
  if (data.length > MAX_ENCODED_SIZE) {
    throw new ProtocolError("oversize", `${data.length} bytes > ${MAX_ENCODED_SIZE}`);
  }
  return data;
}

const FIELDS: Record<string, ReadonlySet<string>> = {
  rc: new Set(["seq", "t_ms", "vx", "vy", "vz", "yaw_rate"]),
  start: new Set(),
  stop: new Set(),
  config: new Set(["participant_id", "controller_mode", "plan_seed"]),
  state: new Set(["t_ms", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "collided"]),
  event: new Set(["kind", "t_ms", "payload"]),
  error: new Set(["code", "text"]),
};

type Raw = Record<string, unknown>;

function need(raw: Raw, name: string): unknown {
  if (!(name in raw)) throw new ProtocolError("malformed_payload", `missing field ${name}`);
  return raw[name];
}

function num(raw: Raw, name: string): number {
  const value = need(raw, name);
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new ProtocolError("malformed_payload", `${name} is not a number`);
  }
  return value;
}

function uint(raw: Raw, name: string): number {
  const value = need(raw, name);
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    throw new ProtocolError("malformed_payload", `${name} is not an unsigned integer`);
  }
  return value;
}

function text(raw: Raw, name: string): string {
  const value = need(raw, name);
  if (typeof value !== "string") {
    throw new ProtocolError("malformed_payload", `${name} is not a string`);
  }
  return value;
}

export function decode(data: string): Message {
  if (data.length > MAX_ENCODED_SIZE) {
    throw new ProtocolError("malformed_payload", "oversize frame");
  }
  let raw: unknown;
  try {
    raw = JSON.parse(data); // strict JSON: NaN/Infinity literals already fail here
  } catch (err) {
    throw new ProtocolError("malformed_payload", String(err));
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ProtocolError("malformed_payload", "not an object");
  }
  const record = raw as Raw;
  if (!("v" in record)) throw new ProtocolError("malformed_payload", "missing version");
  if (record.v !== PROTOCOL_VERSION) throw new ProtocolError("version_mismatch", `v=${record.v}`);
  const msgType = record.type;
  if (typeof msgType !== "string" || !(msgType in FIELDS)) {
    throw new ProtocolError("unknown_type", String(msgType));
  }
  for (const key of Object.keys(record)) {
    if (key !== "v" && key !== "type" && !FIELDS[msgType].has(key)) {
      throw new ProtocolError("malformed_payload", `unexpected field ${key}`);
    }
  }

  switch (msgType) {
    case "start":
    case "stop":
      return { type: msgType };
    case "rc":
      return {
        type: "rc",
        seq: uint(record, "seq"), t_ms: uint(record, "t_ms"),
        vx: num(record, "vx"), vy: num(record, "vy"), vz: num(record, "vz"),
        yaw_rate: num(record, "yaw_rate"),
      };
    case "config": {
      const mode = text(record, "controller_mode");
      if (!CONTROLLER_MODES.has(mode)) {
        throw new ProtocolError("malformed_payload", `bad controller_mode ${mode}`);
      }
      return {
        type: "config",
        participant_id: text(record, "participant_id"),
        controller_mode: mode as ControllerMode,
        plan_seed: uint(record, "plan_seed"),
      };
    }
    case "state": {
      const collided = need(record, "collided");
      if (typeof collided !== "boolean") {
        throw new ProtocolError("malformed_payload", "collided is not a boolean");
      }
      return {
        type: "state", t_ms: uint(record, "t_ms"),
        px: num(record, "px"), py: num(record, "py"), pz: num(record, "pz"),
        vx: num(record, "vx"), vy: num(record, "vy"), vz: num(record, "vz"),
        ax: num(record, "ax"), ay: num(record, "ay"), az: num(record, "az"),
        collided,
      };
    }
    case "event": {
      const kind = text(record, "kind");
      if (!EVENT_KINDS.has(kind)) {
        throw new ProtocolError("malformed_payload", `bad event kind ${kind}`);
      }
      const payload = need(record, "payload");
      if (payload !== null && (typeof payload !== "object" || Array.isArray(payload))) {
        throw new ProtocolError("malformed_payload", "payload is not an object or null");
      }
      return {
        type: "event", kind: kind as EventKind, t_ms: uint(record, "t_ms"),
        payload: payload as Record<string, unknown> | null,
      };
    }
    default:
      return { type: "error", code: text(record, "code"), text: text(record, "text") };
  }
}
