// UI state: a verbatim mirror of the last server response plus an undo stack
// of server-acknowledged snapshots. No client-side latent math ever happens;
// undo replays compensating server calls and re-adopts the server's answer.

import type { Pose, RenderResponse, SessionDescriptor } from "./types.js";

export interface CameraLimits {
  maxYaw: number;
  maxPitch: number;
}

export const DEFAULT_LIMITS: CameraLimits = { maxYaw: 1.2, maxPitch: 0.45 };

export interface Snapshot {
  session: SessionDescriptor;
  rgbPng: string | null;
}

export interface StudioState {
  session: SessionDescriptor | null;
  rgbPng: string | null;
  sPorPng: string | null;
  sAccPng: string | null;
  undoStack: Snapshot[];
  lastError: string | null;
}

export function initialState(): StudioState {
  return {
    session: null,
    rgbPng: null,
    sPorPng: null,
    sAccPng: null,
    undoStack: [],
    lastError: null,
  };
}

function cloneSession(session: SessionDescriptor): SessionDescriptor {
  return JSON.parse(JSON.stringify(session)) as SessionDescriptor;
}

/** Adopt a server session descriptor (and render, when present) verbatim. */
export function applyServer(
  state: StudioState,
  session: SessionDescriptor,
  render?: RenderResponse,
): StudioState {
  return {
    ...state,
    session: cloneSession(render ? render.session : session),
    rgbPng: render ? render.rgb_png : state.rgbPng,
    sPorPng: render ? render.s_por_png : state.sPorPng,
    sAccPng: render ? render.s_acc_png : state.sAccPng,
    lastError: null,
  };
}

export function pushSnapshot(state: StudioState): StudioState {
  if (!state.session) return state;
  return {
    ...state,
    undoStack: [...state.undoStack, { session: cloneSession(state.session), rgbPng: state.rgbPng }],
  };
}

export function popSnapshot(state: StudioState): { state: StudioState; snapshot: Snapshot | null } {
  if (state.undoStack.length === 0) return { state, snapshot: null };
  const snapshot = state.undoStack[state.undoStack.length - 1];
  return {
    state: {
      ...state,
      undoStack: state.undoStack.slice(0, -1),
      session: cloneSession(snapshot.session),
      rgbPng: snapshot.rgbPng,
    },
    snapshot,
  };
}

export function recordError(state: StudioState, message: string): StudioState {
  // failure isolation: the view (and stack) stay exactly as they were
  return { ...state, lastError: message };
}

export function clampPose(pose: Pose, limits: CameraLimits = DEFAULT_LIMITS): Pose {
  const clamp = (v: number, m: number) => Math.min(m, Math.max(-m, v));
  return { yaw: clamp(pose.yaw, limits.maxYaw), pitch: clamp(pose.pitch, limits.maxPitch) };
}

/** Coalesce queued camera drags: only the latest requested pose survives. */
export function coalescePose(_pending: Pose | null, next: Pose): Pose {
  return next;
}
