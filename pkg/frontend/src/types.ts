// Mirrors of the inference service's JSON shapes. The UI never invents
// state: every view field below is copied verbatim from a server response.

export interface Pose {
  yaw: number;
  pitch: number;
}

export interface AccessoryInfo {
  source: "sampled" | "scribble";
  seed: number | null;
  texture_seed: number;
  codebook_index: number | null;
}

export interface SessionDescriptor {
  id: string;
  seed: number;
  pose: Pose;
  accs: boolean;
  accessories: AccessoryInfo[];
}

export interface RenderResponse {
  session: SessionDescriptor;
  rgb_png: string; // base64
  s_por_png: string;
  s_acc_png: string;
}

export const ACCESSORY_CLASSES = [
  "none",
  "eyewear",
  "earring",
  "headwear",
  "necklace",
] as const;

export type AccessoryClass = (typeof ACCESSORY_CLASSES)[number];
