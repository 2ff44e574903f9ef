/**
 * Dataset loading and label-split bookkeeping.
 *
 * MNIST ships with the `mnist` npm package (~1000 images per digit, 28x28
 * grayscale in [0,1]), so no network access is needed. CIFAR-10 is read
 * from locally cached binary batches (`data_batch_*.bin`, 10000 records of
 * 1 label byte + 3072 pixel bytes) when a data directory is supplied.
 *
 * Splits are label-wise: split A holds classes 0-4, split B classes 5-9;
 * the two cover all ten classes and never overlap. Per class, a seeded
 * shuffle is sliced into train/val/test fractions; train and val keep only
 * the split's own classes while test keeps every class, so test contains
 * both in-distribution and out-of-distribution samples.
 */

import * as fs from "fs";
import * as path from "path";
import { Rng } from "./rng";

// the mnist package has no type declarations
// eslint-disable-next-line @typescript-eslint/no-var-requires
const mnistData = require("mnist");

export type DatasetName = "mnist" | "cifar10";
export type SplitName = "A" | "B";

export interface SplitSpec {
  dataset: DatasetName;
  split: SplitName;
  trainFraction: number;
  valFraction: number;
  testFraction: number;
}

export interface Sample {
  id: string;
  label: number;
  /** Flattened pixels in [0, 1]. */
  pixels: number[] | Float32Array;
}

export interface SplitData {
  spec: SplitSpec;
  inputDim: number;
  /** Classes the model sees during training (the split's own). */
  trainClasses: number[];
  train: Sample[];
  validation: Sample[];
  test: Sample[];
}

export function splitClasses(split: SplitName): number[] {
  return split === "A" ? [0, 1, 2, 3, 4] : [5, 6, 7, 8, 9];
}

export function defaultSplitSpec(dataset: DatasetName, split: SplitName): SplitSpec {
  return { dataset, split, trainFraction: 0.6, valFraction: 0.2, testFraction: 0.2 };
}

function checkFractions(spec: SplitSpec): void {
  const total = spec.trainFraction + spec.valFraction + spec.testFraction;
  if (spec.trainFraction <= 0 || spec.valFraction <= 0 || spec.testFraction <= 0) {
    throw new Error("train/val/test fractions must all be positive");
  }
  if (Math.abs(total - 1.0) > 1e-9) {
    throw new Error(`train/val/test fractions must sum to 1, got ${total}`);
  }
}

interface ClassPool {
  label: number;
  images: (number[] | Float32Array)[];
}

function mnistPools(): ClassPool[] {
  const pools: ClassPool[] = [];
  for (let d = 0; d <= 9; d++) {
    const digit = mnistData[d];
    pools.push({ label: d, images: digit.range(0, digit.length - 1) });
  }
  return pools;
}

function cifar10Pools(dataDir: string): ClassPool[] {
  const batches = fs
    .readdirSync(dataDir)
    .filter((f) => /^data_batch_\d+\.bin$|^test_batch\.bin$/.test(f))
    .sort();
  if (batches.length === 0) {
    throw new Error(
      `no CIFAR-10 binary batches found in ${dataDir}; expected data_batch_*.bin ` +
        "(download the binary version of the dataset there first)"
    );
  }
  const pools: ClassPool[] = Array.from({ length: 10 }, (_, d) => ({ label: d, images: [] }));
  const record = 1 + 3072;
  for (const name of batches) {
    const buf = fs.readFileSync(path.join(dataDir, name));
    if (buf.length % record !== 0) {
      throw new Error(`${name}: size ${buf.length} is not a multiple of ${record}`);
    }
    for (let off = 0; off < buf.length; off += record) {
      const label = buf[off];
      if (label > 9) {
        throw new Error(`${name}: bad label ${label} at offset ${off}`);
      }
      const img = new Float32Array(3072);
      for (let k = 0; k < 3072; k++) {
        img[k] = buf[off + 1 + k] / 255;
      }
      pools[label].images.push(img);
    }
  }
  return pools;
}

export function loadSplit(spec: SplitSpec, seed: number, dataDir?: string): SplitData {
  checkFractions(spec);
  const pools =
    spec.dataset === "mnist"
      ? mnistPools()
      : cifar10Pools(dataDir ?? path.join(process.cwd(), "cifar10"));
  const inputDim = pools[0].images[0].length;
  const own = new Set(splitClasses(spec.split));
  const rng = new Rng(seed);
  const train: Sample[] = [];
  const validation: Sample[] = [];
  const test: Sample[] = [];
  for (const pool of pools) {
    const order = rng.shuffle(pool.images.map((_, i) => i));
    const n = order.length;
    const nTrain = Math.floor(spec.trainFraction * n);
    const nVal = Math.floor(spec.valFraction * n);
    const make = (i: number): Sample => ({
      id: `${spec.dataset}-${pool.label}-${order[i]}`,
      label: pool.label,
      pixels: pool.images[order[i]],
    });
    if (own.has(pool.label)) {
      for (let i = 0; i < nTrain; i++) train.push(make(i));
      for (let i = nTrain; i < nTrain + nVal; i++) validation.push(make(i));
    }
    for (let i = nTrain + nVal; i < n; i++) test.push(make(i));
  }
  return {
    spec,
    inputDim,
    trainClasses: splitClasses(spec.split),
    train,
    validation,
    test,
  };
}
