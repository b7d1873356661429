/**
 * Shapes of the two files the UI exchanges with the engine:
 * review_export.json (read) and mapping.json (written).
 */

import type { Merge } from "./cut.js";

export type ReviewPoint = {
  dialogue_id: string;
  rank: number;
  text: string;
  x: number;
  y: number;
  /** low-level cluster id, -1 for noise */
  low_cluster: number;
};

export type ReviewCenter = {
  id: number;
  x: number;
  y: number;
};

export type ReviewDendrogram = {
  leaf_count: number;
  merges: Merge[];
};

export type MappingEntry = {
  intent: string;
  representative_span: string;
};

export type MappingOp =
  | { op: "rename"; id: number; intent: string }
  | { op: "merge"; from: number; into: number }
  | { op: "set_other"; id: number };

export type MappingPayload = {
  /** top-level cluster id (as a string key) -> entry */
  entries: Record<string, MappingEntry>;
  merge_log: MappingOp[];
};

export type ReviewExport = {
  points: ReviewPoint[];
  centers: ReviewCenter[];
  dendrogram: ReviewDendrogram;
  distance_threshold: number;
  mapping: MappingPayload;
};

export function parseReviewExport(raw: string): ReviewExport {
  const data = JSON.parse(raw) as ReviewExport;
  for (const key of ["points", "centers", "dendrogram", "distance_threshold", "mapping"]) {
    if (!(key in data)) {
      throw new Error(`review export is missing ${key}`);
    }
  }
  return data;
}

/**
 * Map each low-level cluster id to its top-level label under a cut.
 * Dendrogram leaf i is centers[i], in order.
 */
export function topOfLow(
  centers: readonly ReviewCenter[],
  cutLabels: readonly number[],
): Map<number, number> {
  if (centers.length !== cutLabels.length) {
    throw new Error(
      `${centers.length} centers but ${cutLabels.length} cut labels`,
    );
  }
  const mapping = new Map<number, number>();
  centers.forEach((center, i) => mapping.set(center.id, cutLabels[i]));
  return mapping;
}
