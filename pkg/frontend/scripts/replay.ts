// Scripted interaction-log replay against a live inference service.
//
// The same editing session runs twice: once through the full studio state
// machine (as the UI drives it) and once through bare API calls (the oracle).
// Both final renders must hash identically. Exits non-zero on mismatch.
//
//   SERVICE_URL=http://127.0.0.1:8321 node dist/scripts/replay.js

import { createHash } from "node:crypto";

import { StudioApi } from "../src/api.js";
import { encodeGrayPng, fromBase64, toBase64 } from "../src/png.js";
import { rasterizeStrokes, type Stroke } from "../src/raster.js";
import { ScribbleStudio } from "../src/studio.js";

export const LOG = {
  seed: 7,
  mapSize: 32,
  scribbleStrokes: [
    { classId: 1, radius: 2, points: [{ x: 10, y: 13 }, { x: 22, y: 13 }] },
  ] as Stroke[],
  scribbleTextureSeed: 11,
  accessorySeed: 42,
  accessoryTextureSeed: 43,
  finalPose: { yaw: 0.45, pitch: 0.1 },
};

function sha256(bytes: Uint8Array): string {
  return createHash("sha256").update(bytes).digest("hex");
}

export async function replayThroughStudio(baseUrl: string): Promise<string> {
  const api = new StudioApi(baseUrl);
  const studio = new ScribbleStudio(api, LOG.mapSize);
  await studio.newFace(LOG.seed);
  studio.strokes = LOG.scribbleStrokes;
  await studio.submitScribble(LOG.scribbleTextureSeed);
  await studio.addRandomAccessory(LOG.accessorySeed, LOG.accessoryTextureSeed);
  await studio.orbit(LOG.finalPose);
  return sha256(fromBase64(studio.state.rgbPng!));
}

export async function replayThroughBareApi(baseUrl: string): Promise<string> {
  const api = new StudioApi(baseUrl);
  const session = await api.createSession(LOG.seed, { yaw: 0, pitch: 0 });
  const png = encodeGrayPng(
    rasterizeStrokes(LOG.scribbleStrokes, LOG.mapSize),
    LOG.mapSize,
    LOG.mapSize,
  );
  await api.submitScribble(session.id, toBase64(png), LOG.scribbleTextureSeed);
  await api.addAccessory(session.id, LOG.accessorySeed, LOG.accessoryTextureSeed);
  const render = await api.render(session.id, LOG.finalPose);
  return sha256(fromBase64(render.rgb_png));
}

const invokedDirectly =
  typeof process !== "undefined" && process.argv[1]?.endsWith("replay.js");

if (invokedDirectly) {
  const baseUrl = process.env.SERVICE_URL ?? "http://127.0.0.1:8321";
  Promise.all([replayThroughStudio(baseUrl), replayThroughBareApi(baseUrl)]).then(
    ([studioHash, oracleHash]) => {
      console.log(`studio final png sha256: ${studioHash}`);
      console.log(`oracle final png sha256: ${oracleHash}`);
      if (studioHash !== oracleHash) {
        console.error("MISMATCH: studio replay diverged from the API oracle");
        process.exit(1);
      }
      console.log("replay OK: hashes match");
    },
    (err) => {
      console.error(`replay failed: ${err}`);
      process.exit(2);
    },
  );
}
