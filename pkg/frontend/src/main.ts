// Browser bootstrap: wires the controller, stroke capture and renderer to
// the DOM. The API base URL comes from ?api=... or defaults to same-origin.

import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { LayeredRenderer, drawSparkline } from "./render.js";
import { StrokeCapture, mapToImage } from "./strokes.js";
import type { Channel, SampleInfo } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toasts");
  const item = document.createElement("div");
  item.className = "toast";
  item.textContent = message;
  box.appendChild(item);
  setTimeout(() => item.remove(), 4000);
}

async function boot(): Promise<void> {
  const apiBase = new URLSearchParams(location.search).get("api") ?? "";
  const api = new ApiClient(apiBase);
  const controller = new SessionController(api);
  controller.onError(toast);

  const renderer = new LayeredRenderer(
    el<HTMLCanvasElement>("layer-image"),
    el<HTMLCanvasElement>("layer-mask"),
    el<HTMLCanvasElement>("layer-strokes"),
  );

  const picker = el<HTMLSelectElement>("sample-picker");
  const classPicker = el<HTMLSelectElement>("class-picker");
  const roundLabel = el<HTMLSpanElement>("round-label");
  const diceLabel = el<HTMLSpanElement>("dice-label");
  const sparkline = el<HTMLCanvasElement>("dice-sparkline");
  const stage = el<HTMLDivElement>("stage");
  const predictBtn = el<HTMLButtonElement>("btn-predict");
  const undoBtn = el<HTMLButtonElement>("btn-undo");
  const resetBtn = el<HTMLButtonElement>("btn-reset");
  const eraseBtn = el<HTMLButtonElement>("btn-erase");
  const exportBtn = el<HTMLButtonElement>("btn-export");
  const brush = el<HTMLInputElement>("brush-width");
  const opacity = el<HTMLInputElement>("overlay-opacity");

  let samples: SampleInfo[] = [];
  let capture: StrokeCapture | null = null;

  function currentSample(): SampleInfo | null {
    return samples.find((s) => s.id === picker.value) ?? null;
  }

  function repaint(): void {
    const s = controller.state;
    renderer.drawMask(s.mask, s.overlayOpacity);
    renderer.drawStrokes(
      s.buffer,
      capture?.active ? capture.current : null,
      s.channel,
      s.brushWidth,
    );
    roundLabel.textContent = `round ${s.round}`;
    const dice = s.diceHistory[s.diceHistory.length - 1];
    diceLabel.textContent = dice === undefined ? "" : `dice ${(dice * 100).toFixed(1)}%`;
    drawSparkline(sparkline, s.diceHistory);
    const lock = s.busy || !s.sessionId;
    predictBtn.disabled = lock;
    undoBtn.disabled = lock;
    resetBtn.disabled = lock;
    eraseBtn.disabled = lock || s.buffer.length === 0;
  }
  controller.onState(repaint);

  async function openSample(): Promise<void> {
    const sample = currentSample();
    if (!sample) return;
    classPicker.innerHTML = "";
    for (const name of sample.classes) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      classPicker.appendChild(opt);
    }
    const img = new Image();
    img.src = api.imageUrl(sample.id);
    await img.decode();
    renderer.resize(sample.width, sample.height);
    renderer.drawImage(img);
    capture = new StrokeCapture(sample.width, sample.height);
    await controller.open(sample, classPicker.value || null);
  }

  picker.addEventListener("change", () => void openSample());
  classPicker.addEventListener("change", () => void openSample());

  const strokeLayer = el<HTMLCanvasElement>("layer-strokes");
  function pointOf(ev: PointerEvent): [number, number] {
    const sample = controller.state.sample;
    const rect = strokeLayer.getBoundingClientRect();
    return mapToImage(
      rect,
      sample?.width ?? rect.width,
      sample?.height ?? rect.height,
      ev.clientX,
      ev.clientY,
    );
  }

  strokeLayer.addEventListener("pointerdown", (ev) => {
    if (!capture || controller.state.busy) return;
    strokeLayer.setPointerCapture(ev.pointerId);
    const [x, y] = pointOf(ev);
    capture.start(x, y);
    repaint();
  });
  strokeLayer.addEventListener("pointermove", (ev) => {
    if (!capture?.active) return;
    const [x, y] = pointOf(ev);
    capture.move(x, y);
    repaint();
  });
  strokeLayer.addEventListener("pointerup", () => {
    if (!capture) return;
    const pts = capture.end();
    if (pts) controller.addStroke(pts);
  });

  for (const channel of ["pos", "neg"] as Channel[]) {
    el<HTMLInputElement>(`channel-${channel}`).addEventListener("change", () =>
      controller.setChannel(channel),
    );
  }
  brush.addEventListener("input", () =>
    controller.setBrushWidth(Number(brush.value)),
  );
  opacity.addEventListener("input", () =>
    controller.setOverlayOpacity(Number(opacity.value)),
  );

  predictBtn.addEventListener("click", () => void controller.predict());
  undoBtn.addEventListener("click", () => void controller.undo());
  resetBtn.addEventListener("click", () => void controller.reset());
  eraseBtn.addEventListener("click", () => controller.eraseLastStroke());
  exportBtn.addEventListener("click", async () => {
    const log = await controller.exportLog();
    if (!log) return;
    const blob = new Blob([JSON.stringify(log, null, 2)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${log.sample_id}-strokes.json`;
    a.click();
    URL.revokeObjectURL(a.href);
  });

  samples = await api.listSamples();
  picker.innerHTML = "";
  for (const s of samples) {
    const opt = document.createElement("option");
    opt.value = s.id;
    opt.textContent = s.id;
    picker.appendChild(opt);
  }
  if (samples.length > 0) await openSample();
  stage.classList.remove("loading");
}

boot().catch((e) => toast(e instanceof Error ? e.message : String(e)));
