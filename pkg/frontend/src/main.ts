// DOM bootstrap: canvas drawing over the current render, brush controls,
// accessory stack display, and drag-to-orbit. All logic lives in the pure
// modules; this file only wires events.

import { StudioApi } from "./api.js";
import { ScribbleStudio } from "./studio.js";
import { ACCESSORY_CLASSES } from "./types.js";

const MAP_SIZE = 32; // render resolution of the desk checkpoint
const CANVAS_SCALE = 12;

const CLASS_TINTS = ["#00000000", "#101010", "#e8c840", "#a02838", "#dcdce6"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new StudioApi(
    (window as unknown as { SERVICE_URL?: string }).SERVICE_URL ?? "http://127.0.0.1:8321",
  );
  const renderImg = el<HTMLImageElement>("render");
  const canvas = el<HTMLCanvasElement>("scribble");
  const ctx = canvas.getContext("2d")!;
  canvas.width = MAP_SIZE * CANVAS_SCALE;
  canvas.height = MAP_SIZE * CANVAS_SCALE;

  const studio = new ScribbleStudio(api, MAP_SIZE, undefined, (state) => {
    if (state.rgbPng) renderImg.src = `data:image/png;base64,${state.rgbPng}`;
    el<HTMLSpanElement>("stack").textContent = state.session
      ? state.session.accessories
          .map((a, i) => `${i}:${a.source}${a.codebook_index !== null ? `#${a.codebook_index}` : ""}`)
          .join("  ") || "(bare)"
      : "(no session)";
    el<HTMLSpanElement>("error").textContent = state.lastError ?? "";
  });

  const brushClass = el<HTMLSelectElement>("brush-class");
  ACCESSORY_CLASSES.forEach((name, i) => {
    const option = document.createElement("option");
    option.value = String(i);
    option.textContent = `${i}: ${name}`;
    if (i === 1) option.selected = true;
    brushClass.appendChild(option);
  });
  const brushRadius = el<HTMLInputElement>("brush-radius");

  function redrawOverlay(): void {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const labels = studio.rasterize();
    for (let y = 0; y < MAP_SIZE; y++) {
      for (let x = 0; x < MAP_SIZE; x++) {
        const cls = labels[y * MAP_SIZE + x];
        if (cls > 0) {
          ctx.fillStyle = CLASS_TINTS[cls] + "b0";
          ctx.fillRect(x * CANVAS_SCALE, y * CANVAS_SCALE, CANVAS_SCALE, CANVAS_SCALE);
        }
      }
    }
  }

  let drawing = false;
  let orbiting = false;
  let orbitStart = { x: 0, y: 0, yaw: 0, pitch: 0 };

  function mapCoords(ev: MouseEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * MAP_SIZE,
      y: ((ev.clientY - rect.top) / rect.height) * MAP_SIZE,
    };
  }

  canvas.addEventListener("mousedown", (ev) => {
    if (ev.shiftKey) {
      orbiting = true;
      const pose = studio.state.session?.pose ?? { yaw: 0, pitch: 0 };
      orbitStart = { x: ev.clientX, y: ev.clientY, yaw: pose.yaw, pitch: pose.pitch };
      return;
    }
    drawing = true;
    studio.strokes.push({
      classId: Number(brushClass.value),
      radius: Number(brushRadius.value),
      points: [mapCoords(ev)],
    });
    redrawOverlay();
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (orbiting) {
      void studio.orbit({
        yaw: orbitStart.yaw + (ev.clientX - orbitStart.x) * 0.01,
        pitch: orbitStart.pitch + (ev.clientY - orbitStart.y) * 0.01,
      });
      return;
    }
    if (!drawing) return;
    studio.strokes[studio.strokes.length - 1].points.push(mapCoords(ev));
    redrawOverlay();
  });
  window.addEventListener("mouseup", () => {
    drawing = false;
    orbiting = false;
  });

  el<HTMLButtonElement>("new-face").addEventListener("click", () => {
    void studio.newFace(Number(el<HTMLInputElement>("seed").value));
  });
  el<HTMLButtonElement>("submit-scribble").addEventListener("click", () => {
    void studio.submitScribble(Number(el<HTMLInputElement>("texture-seed").value));
    redrawOverlay();
  });
  el<HTMLButtonElement>("random-accessory").addEventListener("click", () => {
    void studio.addRandomAccessory(
      Math.floor(Math.random() * 1e6),
      Number(el<HTMLInputElement>("texture-seed").value),
    );
  });
  el<HTMLButtonElement>("clear-strokes").addEventListener("click", () => {
    studio.strokes = [];
    redrawOverlay();
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    void studio.undo();
  });
}

void boot();
