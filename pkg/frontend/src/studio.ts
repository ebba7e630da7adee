// Orchestration between the canvas, the typed API client, and the state
// mirror. One request in flight per session; camera drags queued during a
// request coalesce to the latest pose.

import { StudioApi, ApiError } from "./api.js";
import { encodeGrayPng, toBase64 } from "./png.js";
import { rasterizeStrokes, type Stroke } from "./raster.js";
import {
  applyServer,
  clampPose,
  coalescePose,
  initialState,
  popSnapshot,
  pushSnapshot,
  recordError,
  type CameraLimits,
  DEFAULT_LIMITS,
  type StudioState,
} from "./state.js";
import type { Pose } from "./types.js";

export class ScribbleStudio {
  state: StudioState = initialState();
  strokes: Stroke[] = [];
  private inFlight = false;
  private pendingPose: Pose | null = null;

  constructor(
    private api: StudioApi,
    public readonly mapSize: number,
    private limits: CameraLimits = DEFAULT_LIMITS,
    private onChange: (state: StudioState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  rasterize(): Uint8Array {
    return rasterizeStrokes(this.strokes, this.mapSize);
  }

  scribblePngBase64(): string {
    return toBase64(encodeGrayPng(this.rasterize(), this.mapSize, this.mapSize));
  }

  async newFace(seed: number, pose: Pose = { yaw: 0, pitch: 0 }): Promise<void> {
    const session = await this.api.createSession(seed, clampPose(pose, this.limits));
    this.state = applyServer(initialState(), session);
    await this.refresh();
  }

  private requireSession(): string {
    if (!this.state.session) throw new Error("no active session");
    return this.state.session.id;
  }

  async refresh(): Promise<void> {
    const id = this.requireSession();
    const render = await this.api.render(id);
    this.state = applyServer(this.state, render.session, render);
    this.emit();
  }

  async submitScribble(textureSeed: number): Promise<void> {
    const id = this.requireSession();
    const before = this.state;
    this.state = pushSnapshot(this.state);
    try {
      const session = await this.api.submitScribble(id, this.scribblePngBase64(), textureSeed);
      this.state = applyServer(this.state, session);
      this.strokes = [];
      await this.refresh();
    } catch (err) {
      // failure isolation: restore the exact pre-submit state
      this.state = recordError(before, err instanceof ApiError ? err.message : String(err));
      this.emit();
    }
  }

  async addRandomAccessory(seed: number, textureSeed: number): Promise<void> {
    const id = this.requireSession();
    const before = this.state;
    this.state = pushSnapshot(this.state);
    try {
      const session = await this.api.addAccessory(id, seed, textureSeed);
      this.state = applyServer(this.state, session);
      await this.refresh();
    } catch (err) {
      this.state = recordError(before, err instanceof ApiError ? err.message : String(err));
      this.emit();
    }
  }

  async undo(): Promise<void> {
    const id = this.requireSession();
    const current = this.state.session!;
    const { state, snapshot } = popSnapshot(this.state);
    if (!snapshot) return;
    // compensate on the server: drop accessories added after the snapshot
    let session = current;
    for (let k = current.accessories.length - 1; k >= snapshot.session.accessories.length; k--) {
      session = await this.api.removeAccessory(id, k);
    }
    this.state = applyServer(state, session);
    await this.refresh();
  }

  /** Camera drags: single request in flight, later drags coalesce. */
  async orbit(pose: Pose): Promise<void> {
    const clamped = clampPose(pose, this.limits);
    if (this.inFlight) {
      this.pendingPose = coalescePose(this.pendingPose, clamped);
      return;
    }
    this.inFlight = true;
    try {
      let next: Pose | null = clamped;
      while (next) {
        const id = this.requireSession();
        const render = await this.api.render(id, next);
        this.state = applyServer(this.state, render.session, render);
        this.emit();
        next = this.pendingPose;
        this.pendingPose = null;
      }
    } finally {
      this.inFlight = false;
    }
  }
}
