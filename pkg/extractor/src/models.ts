/**
 * Desk-scale dense models: classifier, autoencoder, and hybrid.
 *
 * All three share an encoder (input -> hidden -> bottleneck). The classifier
 * adds a linear logit head on the bottleneck; the autoencoder adds a decoder
 * (bottleneck -> hidden -> input with sigmoid); the hybrid has both heads
 * and is trained on cross-entropy plus a weighted reconstruction MSE.
 *
 * Dense layers (rather than conv blocks) keep training tractable on the
 * wasm backend, which lacks conv gradient kernels; at this scale the MNIST
 * accuracy gate is comfortably met either way. Every initializer is seeded,
 * so a fixed seed reproduces the checkpoint bit for bit.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "fs";
import { Rng } from "./rng";

export type Architecture = "classifier" | "autoencoder" | "hybrid";

export interface ModelSpec {
  architecture: Architecture;
  inputDim: number;
  nClasses: number;
  hidden: number;
  bottleneck: number;
  /** Reconstruction-loss weight in the hybrid objective. */
  lambda: number;
  epochs: number;
  learningRate: number;
  batchSize: number;
}

export function defaultModelSpec(
  architecture: Architecture,
  inputDim: number,
  nClasses: number
): ModelSpec {
  return {
    architecture,
    inputDim,
    nClasses,
    hidden: 256,
    bottleneck: 32,
    lambda: 0.5,
    epochs: 5,
    learningRate: 0.001,
    batchSize: 64,
  };
}

export function hasClassifier(arch: Architecture): boolean {
  return arch !== "autoencoder";
}

export function hasDecoder(arch: Architecture): boolean {
  return arch !== "classifier";
}

export interface ModelBundle {
  spec: ModelSpec;
  /** input -> [hidden activations, bottleneck features] */
  encoder: tf.LayersModel;
  /** bottleneck -> logits (classifier/hybrid only) */
  classifierHead: tf.LayersModel | null;
  /** bottleneck -> reconstruction (autoencoder/hybrid only) */
  decoder: tf.LayersModel | null;
  trainableWeights: tf.Variable[];
}

export function buildModel(spec: ModelSpec, seed: number): ModelBundle {
  if (spec.lambda < 0) {
    throw new Error(`lambda must be >= 0, got ${spec.lambda}`);
  }
  if (spec.bottleneck < 1 || spec.hidden < 1) {
    throw new Error("hidden and bottleneck widths must be >= 1");
  }
  const seeds = new Rng(seed);
  const dense = (units: number, activation: string | undefined, name: string) =>
    tf.layers.dense({
      units,
      activation: activation as any,
      name,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seeds.subSeed() }),
      biasInitializer: "zeros",
    });

  const input = tf.input({ shape: [spec.inputDim], name: "pixels" });
  const hiddenLayer = dense(spec.hidden, "relu", "enc_hidden");
  const bottleneckLayer = dense(spec.bottleneck, "relu", "bottleneck");
  const h = hiddenLayer.apply(input) as tf.SymbolicTensor;
  const z = bottleneckLayer.apply(h) as tf.SymbolicTensor;
  const encoder = tf.model({ inputs: input, outputs: [h, z], name: "encoder" });

  let classifierHead: tf.LayersModel | null = null;
  if (hasClassifier(spec.architecture)) {
    const zin = tf.input({ shape: [spec.bottleneck], name: "z_cls" });
    const logitLayer = dense(spec.nClasses, undefined, "logits");
    classifierHead = tf.model({
      inputs: zin,
      outputs: logitLayer.apply(zin) as tf.SymbolicTensor,
      name: "classifier_head",
    });
  }

  let decoder: tf.LayersModel | null = null;
  if (hasDecoder(spec.architecture)) {
    const zin = tf.input({ shape: [spec.bottleneck], name: "z_dec" });
    const decHidden = dense(spec.hidden, "relu", "dec_hidden");
    const decOut = dense(spec.inputDim, "sigmoid", "reconstruction");
    decoder = tf.model({
      inputs: zin,
      outputs: decOut.apply(decHidden.apply(zin)) as tf.SymbolicTensor,
      name: "decoder",
    });
  }

  const trainableWeights: tf.Variable[] = [];
  for (const model of [encoder, classifierHead, decoder]) {
    if (model) {
      for (const w of model.trainableWeights) {
        trainableWeights.push(w.val as tf.Variable);
      }
    }
  }
  return { spec, encoder, classifierHead, decoder, trainableWeights };
}

/** Forward pass through the shared encoder. */
export function encode(bundle: ModelBundle, x: tf.Tensor2D): { h: tf.Tensor2D; z: tf.Tensor2D } {
  const [h, z] = bundle.encoder.apply(x) as tf.Tensor2D[];
  return { h, z };
}

// -- checkpoints ----------------------------------------------------------

interface WeightRecord {
  name: string;
  shape: number[];
  data: string; // base64 float32 little-endian
}

export interface Checkpoint {
  spec: ModelSpec;
  seed: number;
  weights: WeightRecord[];
}

function weightsOf(bundle: ModelBundle): tf.Variable[] {
  return bundle.trainableWeights;
}

export function saveCheckpoint(bundle: ModelBundle, seed: number, path: string): void {
  const records: WeightRecord[] = weightsOf(bundle).map((v) => {
    const data = v.dataSync() as Float32Array;
    return {
      name: v.name,
      shape: v.shape.slice(),
      data: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64"),
    };
  });
  const checkpoint: Checkpoint = { spec: bundle.spec, seed, weights: records };
  fs.writeFileSync(path, JSON.stringify(checkpoint));
}

export function loadCheckpoint(path: string): ModelBundle {
  const checkpoint = JSON.parse(fs.readFileSync(path, "utf-8")) as Checkpoint;
  const bundle = buildModel(checkpoint.spec, checkpoint.seed);
  const byName = new Map(checkpoint.weights.map((w) => [w.name, w]));
  for (const v of weightsOf(bundle)) {
    const rec = byName.get(v.name);
    if (!rec) {
      throw new Error(`checkpoint ${path} is missing weight ${v.name}`);
    }
    const raw = Buffer.from(rec.data, "base64");
    const arr = new Float32Array(raw.buffer, raw.byteOffset, raw.byteLength / 4);
    v.assign(tf.tensor(arr, rec.shape as any));
  }
  return bundle;
}
