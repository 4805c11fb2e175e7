/** Browser wiring: sample picker, mask painting canvas, prune/retrain
 * controls. All model numbers round-trip through the service; the client
 * keeps no training state, so a session can be closed and resumed. */

import { ApiError, GuidanceApi } from "./apiClient.js";
import { MaskCanvasState } from "./maskCanvas.js";
import { decodePgm, decodePpm, encodePgm, fromBase64, toBase64 } from "./pgm.js";
import { fromPruneResponse, retrainEnabled, statusLine, voteHistogram, withJob } from "./pruneView.js";
import type { PruneView } from "./pruneView.js";
import type { SampleInfo } from "./types.js";

const SCALE = 12; // screen pixels per raster pixel

interface AppState {
  api: GuidanceApi;
  samples: SampleInfo[];
  active: SampleInfo | null;
  canvas: MaskCanvasState | null;
  view: PruneView | null;
  submittedPairs: Set<string>;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function drawSample(ctx: CanvasRenderingContext2D, sample: SampleInfo, mask: Uint8Array | null): void {
  const img = decodePpm(fromBase64(sample.raster_ppm_base64));
  ctx.canvas.width = img.width * SCALE;
  ctx.canvas.height = img.height * SCALE;
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      const o = (y * img.width + x) * 3;
      ctx.fillStyle = `rgb(${img.rgb[o]},${img.rgb[o + 1]},${img.rgb[o + 2]})`;
      ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
      if (mask && mask[y * img.width + x]) {
        ctx.fillStyle = "rgba(80, 200, 120, 0.45)";
        ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
      }
    }
  }
}

function renderPruneView(state: AppState): void {
  const info = el<HTMLDivElement>("prune-info");
  const retrain = el<HTMLButtonElement>("retrain-btn");
  if (!state.view) {
    info.textContent = "no prune run yet";
    retrain.disabled = true;
    return;
  }
  const rows = voteHistogram(state.view)
    .map((r) => `${r.dims} dim(s) with ${r.votes} vote(s)`)
    .join(", ");
  info.textContent = `${statusLine(state.view)} | votes: ${rows}`;
  retrain.disabled = !retrainEnabled(state.view);
}

export async function startApp(baseUrl: string): Promise<AppState> {
  const state: AppState = {
    api: new GuidanceApi(baseUrl),
    samples: [],
    active: null,
    canvas: null,
    view: null,
    submittedPairs: new Set(),
  };
  const picker = el<HTMLSelectElement>("sample-picker");
  const canvasEl = el<HTMLCanvasElement>("paint-canvas");
  const ctx = canvasEl.getContext("2d")!;
  const status = el<HTMLDivElement>("status");

  const refresh = () => {
    if (state.active && state.canvas) drawSample(ctx, state.active, state.canvas.getMask());
    renderPruneView(state);
  };

  const doc = await state.api.getSamples();
  state.samples = doc.samples;
  for (const s of doc.samples) {
    const opt = document.createElement("option");
    opt.value = s.id;
    opt.textContent = `${s.id} (class ${s.class_label}, domain ${s.domain_label})`;
    picker.appendChild(opt);
  }

  const activate = (id: string) => {
    const sample = state.samples.find((s) => s.id === id) ?? null;
    state.active = sample;
    state.canvas = sample ? new MaskCanvasState(sample.id, sample.width, sample.height) : null;
    refresh();
  };
  picker.addEventListener("change", () => activate(picker.value));
  if (doc.samples.length > 0) {
    picker.value = doc.samples[0].id;
    activate(picker.value);
  }

  let painting = false;
  const toRaster = (ev: MouseEvent) => {
    const rect = canvasEl.getBoundingClientRect();
    return {
      x: (ev.clientX - rect.left) / SCALE,
      y: (ev.clientY - rect.top) / SCALE,
    };
  };
  canvasEl.addEventListener("mousedown", (ev) => {
    if (!state.canvas) return;
    painting = true;
    const p = toRaster(ev);
    state.canvas.beginStroke(p.x, p.y, ev.shiftKey ? "erase" : "paint");
    refresh();
  });
  canvasEl.addEventListener("mousemove", (ev) => {
    if (!painting || !state.canvas) return;
    const p = toRaster(ev);
    state.canvas.extendStroke(p.x, p.y);
    refresh();
  });
  window.addEventListener("mouseup", () => {
    painting = false;
  });

  el<HTMLButtonElement>("undo-btn").addEventListener("click", () => {
    state.canvas?.undo();
    refresh();
  });
  el<HTMLButtonElement>("clear-btn").addEventListener("click", () => {
    state.canvas?.clear();
    refresh();
  });

  el<HTMLButtonElement>("submit-btn").addEventListener("click", async () => {
    if (!state.active || !state.canvas) return;
    if (state.canvas.paintedPixelCount() === 0) {
      status.textContent = "paint at least one object pixel before submitting";
      return;
    }
    const pgm = encodePgm(state.canvas.width, state.canvas.height, state.canvas.toPgmPixels());
    try {
      const res = await state.api.submitGuidance(state.active.id, toBase64(pgm));
      state.submittedPairs.add(res.pair_id);
      status.textContent = `stored pair ${res.pair_id} (${res.num_pairs} total)`;
    } catch (err) {
      status.textContent = err instanceof ApiError ? `rejected: ${err.message}` : String(err);
    }
  });

  el<HTMLButtonElement>("download-btn").addEventListener("click", async () => {
    if (!state.active || !state.canvas) return;
    try {
      const res = await state.api.downloadMask(state.active.id);
      const img = decodePgm(fromBase64(res.mask_pgm_base64));
      state.canvas.loadFromPgmPixels(img.pixels);
      status.textContent = `reloaded stored mask for ${state.active.id}`;
      refresh();
    } catch (err) {
      status.textContent = err instanceof ApiError ? err.message : String(err);
    }
  });

  el<HTMLButtonElement>("prune-btn").addEventListener("click", async () => {
    try {
      state.view = fromPruneResponse(await state.api.prune());
      status.textContent = "prune complete";
    } catch (err) {
      status.textContent = err instanceof ApiError ? `prune failed: ${err.message}` : String(err);
    }
    refresh();
  });

  el<HTMLButtonElement>("retrain-btn").addEventListener("click", async () => {
    if (!state.view) return;
    try {
      const { job_id } = await state.api.retrain();
      state.view = { ...state.view, retrainState: "running" };
      refresh();
      const job = await state.api.waitForJob(job_id);
      state.view = withJob(state.view, job);
      status.textContent = `retrain ${job.status}`;
    } catch (err) {
      status.textContent = err instanceof ApiError ? `retrain: ${err.message}` : String(err);
    }
    refresh();
  });

  refresh();
  return state;
}
