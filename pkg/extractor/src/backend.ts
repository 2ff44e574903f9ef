/**
 * tfjs backend selection: the wasm backend with a single thread, falling
 * back to plain cpu. One thread keeps reductions deterministic, which the
 * fixed-seed reproducibility contract relies on.
 */

import * as tf from "@tensorflow/tfjs";
import { setThreadsCount } from "@tensorflow/tfjs-backend-wasm";

let ready: Promise<string> | null = null;

export function setupBackend(): Promise<string> {
  if (!ready) {
    ready = (async () => {
      try {
        setThreadsCount(1);
        await tf.setBackend("wasm");
      } catch {
        await tf.setBackend("cpu");
      }
      await tf.ready();
      return tf.getBackend();
    })();
  }
  return ready;
}
