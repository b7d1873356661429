/**
 * Review app: load a review_export.json, explore taxonomy cuts on the
 * 2D scatter, name/merge/OTHER the top-level clusters, export the
 * edited mapping.json for the engine's import command.
 *
 * Mapping edits are only enabled at the exported threshold, because the
 * mapping's cluster ids belong to that cut; exploring other thresholds
 * recolors the scatter and reports how many top clusters they produce.
 */

import { cutDendrogram } from "./cut.js";
import {
  MappingOpError,
  MappingSession,
  OTHER,
  UnmappedClusterError,
  volumeTable,
} from "./mapping.js";
import type { MappingOp, ReviewExport } from "./schema.js";
import { parseReviewExport, topOfLow } from "./schema.js";
import { canonicalJson } from "./stringify.js";

const PALETTE = [
  "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
  "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac",
];
const NOISE_COLOR = "#d0d0d0";

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

const fileInput = must<HTMLInputElement>("file-input");
const slider = must<HTMLInputElement>("threshold-slider");
const thresholdLabel = must<HTMLElement>("threshold-label");
const resetButton = must<HTMLButtonElement>("reset-threshold");
const undoButton = must<HTMLButtonElement>("undo-button");
const exportButton = must<HTMLButtonElement>("export-button");
const statusLine = must<HTMLElement>("status-line");
const tableBody = must<HTMLTableSectionElement>("mapping-rows");
const unassignedLine = must<HTMLElement>("unassigned-line");
const canvas = must<HTMLCanvasElement>("scatter");

let data: ReviewExport | null = null;
let session: MappingSession | null = null;
let threshold = 0;

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "status error" : "status";
}

function atExportedThreshold(): boolean {
  return data !== null && threshold === data.distance_threshold;
}

function currentCut(): number[] {
  if (!data) {
    return [];
  }
  return cutDendrogram(data.dendrogram.merges, data.dendrogram.leaf_count, threshold);
}

function drawScatter(): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || !data) {
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lowToTop = topOfLow(data.centers, currentCut());
  const xs = data.points.map((p) => p.x);
  const ys = data.points.map((p) => p.y);
  const minX = Math.min(...xs, -1e-9);
  const maxX = Math.max(...xs, 1e-9);
  const minY = Math.min(...ys, -1e-9);
  const maxY = Math.max(...ys, 1e-9);
  const pad = 12;
  const sx = (x: number) =>
    pad + ((x - minX) / (maxX - minX || 1)) * (canvas.width - 2 * pad);
  const sy = (y: number) =>
    canvas.height - pad - ((y - minY) / (maxY - minY || 1)) * (canvas.height - 2 * pad);
  for (const point of data.points) {
    const top = point.low_cluster >= 0 ? lowToTop.get(point.low_cluster) : undefined;
    ctx.fillStyle = top === undefined ? NOISE_COLOR : PALETTE[top % PALETTE.length];
    ctx.beginPath();
    ctx.arc(sx(point.x), sy(point.y), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function renderMappingTable(): void {
  tableBody.replaceChildren();
  if (!data || !session) {
    return;
  }
  const mapping = session.current;
  const editable = atExportedThreshold();
  let volumes: Record<string, number> = {};
  let unassigned = 0;
  if (editable) {
    try {
      const table = volumeTable(data.points, topOfLow(data.centers, currentCut()), mapping);
      volumes = table.rows;
      unassigned = table.unassigned;
    } catch (err) {
      if (!(err instanceof UnmappedClusterError)) {
        throw err;
      }
      setStatus(err.message, true);
    }
  }
  const ids = Object.keys(mapping.entries).sort((a, b) => Number(a) - Number(b));
  for (const id of ids) {
    const entry = mapping.entries[id];
    const row = document.createElement("tr");

    const idCell = document.createElement("td");
    idCell.textContent = id;
    row.appendChild(idCell);

    const spanCell = document.createElement("td");
    spanCell.textContent = entry.representative_span;
    spanCell.className = "span-text";
    row.appendChild(spanCell);

    const intentCell = document.createElement("td");
    const intentInput = document.createElement("input");
    intentInput.type = "text";
    intentInput.value = entry.intent;
    intentInput.disabled = !editable;
    intentInput.addEventListener("change", () => {
      applyOp({ op: "rename", id: Number(id), intent: intentInput.value.trim() });
    });
    intentCell.appendChild(intentInput);
    row.appendChild(intentCell);

    const volumeCell = document.createElement("td");
    volumeCell.textContent = editable ? String(volumes[entry.intent] ?? 0) : "-";
    row.appendChild(volumeCell);

    const actionsCell = document.createElement("td");
    const otherButton = document.createElement("button");
    otherButton.textContent = OTHER;
    otherButton.disabled = !editable || entry.intent === OTHER;
    otherButton.addEventListener("click", () => {
      applyOp({ op: "set_other", id: Number(id) });
    });
    actionsCell.appendChild(otherButton);

    const mergeSelect = document.createElement("select");
    const placeholder = document.createElement("option");
    placeholder.textContent = "merge into…";
    placeholder.value = "";
    mergeSelect.appendChild(placeholder);
    for (const target of ids) {
      if (target !== id) {
        const option = document.createElement("option");
        option.value = target;
        option.textContent = `#${target}`;
        mergeSelect.appendChild(option);
      }
    }
    mergeSelect.disabled = !editable;
    mergeSelect.addEventListener("change", () => {
      if (mergeSelect.value !== "") {
        applyOp({ op: "merge", from: Number(id), into: Number(mergeSelect.value) });
      }
    });
    actionsCell.appendChild(mergeSelect);
    row.appendChild(actionsCell);

    tableBody.appendChild(row);
  }
  unassignedLine.textContent = editable
    ? `${unassigned} unassigned (noise) spans`
    : "mapping edits apply to the exported threshold; reset to edit";
  undoButton.disabled = !session || session.opCount === 0;
}

function applyOp(op: MappingOp): void {
  if (!session) {
    return;
  }
  try {
    session.apply(op);
    setStatus(`applied ${op.op} (${session.opCount} ops this session)`);
  } catch (err) {
    if (err instanceof MappingOpError) {
      setStatus(err.message, true);
    } else {
      throw err;
    }
  }
  renderMappingTable();
}

function renderAll(): void {
  if (!data) {
    return;
  }
  const tops = new Set(currentCut()).size;
  thresholdLabel.textContent =
    `threshold ${threshold} -> ${tops} top-level cluster${tops === 1 ? "" : "s"}` +
    (atExportedThreshold() ? " (exported)" : "");
  drawScatter();
  renderMappingTable();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) {
    return;
  }
  try {
    data = parseReviewExport(await file.text());
  } catch (err) {
    setStatus(`could not load export: ${err}`, true);
    return;
  }
  session = new MappingSession(data.mapping);
  threshold = data.distance_threshold;
  const maxDist = Math.max(
    data.distance_threshold,
    ...data.dendrogram.merges.map((m) => m[2]),
  );
  slider.min = "0.01";
  slider.max = String(maxDist * 1.2);
  slider.step = "0.01";
  slider.value = String(threshold);
  setStatus(
    `loaded ${data.points.length} spans, ${data.centers.length} low-level clusters`,
  );
  renderAll();
});

slider.addEventListener("input", () => {
  threshold = Number(slider.value);
  renderAll();
});

resetButton.addEventListener("click", () => {
  if (data) {
    threshold = data.distance_threshold;
    slider.value = String(threshold);
    renderAll();
  }
});

undoButton.addEventListener("click", () => {
  if (session) {
    session.undo();
    setStatus(`undid last op (${session.opCount} ops this session)`);
    renderMappingTable();
  }
});

exportButton.addEventListener("click", () => {
  if (!session) {
    return;
  }
  const bytes = canonicalJson(session.current);
  const blob = new Blob([bytes], { type: "application/json" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "mapping.json";
  link.click();
  URL.revokeObjectURL(link.href);
  setStatus("exported mapping.json");
});
