/**
 * Mapping edits as replayable operations, mirroring the engine.
 *
 * Every edit appends an op to merge_log; the engine refuses a mapping
 * whose entries do not replay from its log, so the UI never mutates
 * entries directly. Undo works by replaying the session's ops minus the
 * last one on top of the mapping that was loaded.
 */

import type { MappingEntry, MappingOp, MappingPayload, ReviewPoint } from "./schema.js";

export const OTHER = "OTHER";

export class MappingOpError extends Error {
  constructor(
    public readonly position: number,
    message: string,
  ) {
    super(`op ${position}: ${message}`);
    this.name = "MappingOpError";
  }
}

export class UnmappedClusterError extends Error {
  constructor(public readonly clusterIds: number[]) {
    super(`clusters without a mapping entry: ${clusterIds.join(", ")}`);
    this.name = "UnmappedClusterError";
  }
}

function cloneMapping(payload: MappingPayload): MappingPayload {
  const entries: Record<string, MappingEntry> = {};
  for (const [id, entry] of Object.entries(payload.entries)) {
    entries[id] = { ...entry };
  }
  return { entries, merge_log: payload.merge_log.map((op) => ({ ...op })) };
}

/** Apply ops in order, appending each to the log. Throws MappingOpError. */
export function applyOps(
  payload: MappingPayload,
  ops: readonly MappingOp[],
): MappingPayload {
  const out = cloneMapping(payload);
  ops.forEach((op, position) => {
    if (op.op === "merge") {
      if (op.from === op.into) {
        throw new MappingOpError(position, `cannot merge cluster ${op.from} into itself`);
      }
      for (const id of [op.from, op.into]) {
        if (!(String(id) in out.entries)) {
          throw new MappingOpError(position, `merge references unknown cluster ${id}`);
        }
      }
      delete out.entries[String(op.from)];
    } else if (op.op === "rename") {
      if (!(String(op.id) in out.entries)) {
        throw new MappingOpError(position, `rename references unknown cluster ${op.id}`);
      }
      if (!op.intent) {
        throw new MappingOpError(position, "rename needs a non-empty intent");
      }
      out.entries[String(op.id)].intent = op.intent;
    } else if (op.op === "set_other") {
      if (!(String(op.id) in out.entries)) {
        throw new MappingOpError(position, `set_other references unknown cluster ${op.id}`);
      }
      out.entries[String(op.id)].intent = OTHER;
    } else {
      throw new MappingOpError(position, `unknown op ${(op as { op: string }).op}`);
    }
    out.merge_log.push({ ...op });
  });
  return out;
}

/** One analyst session: the loaded mapping plus ops added on top. */
export class MappingSession {
  private readonly base: MappingPayload;
  private ops: MappingOp[] = [];

  constructor(loaded: MappingPayload) {
    this.base = cloneMapping(loaded);
  }

  get current(): MappingPayload {
    return applyOps(this.base, this.ops);
  }

  get opCount(): number {
    return this.ops.length;
  }

  /** Validates by replaying; an invalid op is rejected and not recorded. */
  apply(op: MappingOp): MappingPayload {
    const next = [...this.ops, op];
    const result = applyOps(this.base, next);
    this.ops = next;
    return result;
  }

  /** Drop the most recent op of this session, if any. */
  undo(): MappingPayload {
    this.ops = this.ops.slice(0, -1);
    return this.current;
  }
}

export interface VolumeTable {
  /** intent -> point count, OTHER aggregated, every mapped intent present */
  rows: Record<string, number>;
  /** noise points that belong to no cluster */
  unassigned: number;
}

/**
 * Point counts per mapped intent under a cut, the engine's volume rule
 * at span granularity: every live top cluster must be mapped, OTHER
 * rows aggregate, noise counts separately.
 */
export function volumeTable(
  points: readonly ReviewPoint[],
  topOf: ReadonlyMap<number, number>,
  mapping: MappingPayload,
): VolumeTable {
  const live = new Set<number>();
  for (const point of points) {
    if (point.low_cluster >= 0) {
      const top = topOf.get(point.low_cluster);
      if (top === undefined) {
        throw new UnmappedClusterError([point.low_cluster]);
      }
      live.add(top);
    }
  }
  const unmapped = [...live].filter((id) => !(String(id) in mapping.entries));
  if (unmapped.length > 0) {
    throw new UnmappedClusterError(unmapped.sort((a, b) => a - b));
  }
  const rows: Record<string, number> = {};
  for (const entry of Object.values(mapping.entries)) {
    rows[entry.intent] = rows[entry.intent] ?? 0;
  }
  let unassigned = 0;
  for (const point of points) {
    if (point.low_cluster < 0) {
      unassigned += 1;
      continue;
    }
    const top = topOf.get(point.low_cluster)!;
    const intent = mapping.entries[String(top)].intent;
    rows[intent] = (rows[intent] ?? 0) + 1;
  }
  return { rows, unassigned };
}
