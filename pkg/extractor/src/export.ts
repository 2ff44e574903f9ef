/**
 * Latent-response export.
 *
 * For each exported role:
 *   anchors     -> training rows, feature columns only (KNN index source)
 *   validation  -> validation rows, full column set
 *   test        -> test rows (all classes), full column set
 *
 * Feature columns are the bottleneck activations (f0..f{B-1}) concatenated
 * with the penultimate hidden activations (ph0..ph{H-1}); which hidden
 * layers feed the metrics is an export-side choice, and these two are the
 * documented one. Architectures with a classifier head add logit columns;
 * architectures with a decoder add image/reconstruction pairs and T-step
 * encode-decode iterate sequences named `x{t}_{j}` / `z{t}_{j}` (and
 * `y{t}_{j}` when a classifier head exists), where x_{t+1} = G(F(x_t)).
 * The iterate origin x0 is written from the same float32 buffer as the
 * image columns, so the two agree bit for bit.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "fs";
import * as path from "path";
import { Sample, SplitData, splitClasses } from "./data";
import { Column, ResponseSet, writeResponseSet } from "./format";
import { ModelBundle, encode } from "./models";
import { TrainLog } from "./train";

export interface ExportOptions {
  outDir: string;
  /** Encode-decode steps for the manifold iterates. */
  iterations: number;
  format: "csv" | "bin";
  seed: number;
  baseName: string; // e.g. "mnist-A-hybrid"
}

interface RoleLayout {
  columns: Column[];
  width: number;
}

function featureColumns(bundle: ModelBundle): Column[] {
  const cols: Column[] = [];
  for (let j = 0; j < bundle.spec.bottleneck; j++) cols.push({ name: `f${j}`, kind: "feature" });
  for (let j = 0; j < bundle.spec.hidden; j++) cols.push({ name: `ph${j}`, kind: "feature" });
  return cols;
}

function fullLayout(bundle: ModelBundle, iterations: number): RoleLayout {
  const spec = bundle.spec;
  const cols: Column[] = [...featureColumns(bundle)];
  if (bundle.classifierHead) {
    for (let j = 0; j < spec.nClasses; j++) cols.push({ name: `l${j}`, kind: "logit" });
  }
  if (bundle.decoder) {
    for (let j = 0; j < spec.inputDim; j++) cols.push({ name: `img_${j}`, kind: "image" });
    for (let j = 0; j < spec.inputDim; j++) cols.push({ name: `rec_${j}`, kind: "reconstruction" });
    for (let t = 0; t <= iterations; t++) {
      for (let j = 0; j < spec.inputDim; j++) cols.push({ name: `x${t}_${j}`, kind: "iterate-x" });
    }
    for (let t = 0; t <= iterations; t++) {
      for (let j = 0; j < spec.bottleneck; j++) cols.push({ name: `z${t}_${j}`, kind: "iterate-z" });
    }
    if (bundle.classifierHead) {
      for (let t = 0; t <= iterations; t++) {
        for (let j = 0; j < spec.nClasses; j++) cols.push({ name: `y${t}_${j}`, kind: "iterate-y" });
      }
    }
  }
  return { columns: cols, width: cols.length };
}

function copyInto(
  dest: Float64Array,
  destWidth: number,
  rowOffset: number,
  colOffset: number,
  src: Float32Array,
  srcWidth: number,
  rows: number
): void {
  for (let i = 0; i < rows; i++) {
    const base = (rowOffset + i) * destWidth + colOffset;
    const srcBase = i * srcWidth;
    for (let j = 0; j < srcWidth; j++) {
      dest[base + j] = src[srcBase + j];
    }
  }
}

function exportRole(
  bundle: ModelBundle,
  samples: Sample[],
  layout: RoleLayout,
  iterations: number,
  name: string,
  featuresOnly: boolean
): ResponseSet {
  const spec = bundle.spec;
  const width = featuresOnly ? spec.bottleneck + spec.hidden : layout.width;
  const columns = featuresOnly ? featureColumns(bundle) : layout.columns;
  const n = samples.length;
  const values = new Float64Array(n * width);
  const batchSize = 256;

  for (let start = 0; start < n; start += batchSize) {
    const size = Math.min(batchSize, n - start);
    const xs = new Float32Array(size * spec.inputDim);
    for (let i = 0; i < size; i++) {
      xs.set(samples[start + i].pixels as any, i * spec.inputDim);
    }
    tf.tidy(() => {
      const x = tf.tensor2d(xs, [size, spec.inputDim]);
      const { h, z } = encode(bundle, x);
      let col = 0;
      copyInto(values, width, start, col, z.dataSync() as Float32Array, spec.bottleneck, size);
      col += spec.bottleneck;
      copyInto(values, width, start, col, h.dataSync() as Float32Array, spec.hidden, size);
      col += spec.hidden;
      if (featuresOnly) {
        return;
      }
      if (bundle.classifierHead) {
        const logits = bundle.classifierHead.apply(z) as tf.Tensor2D;
        copyInto(values, width, start, col, logits.dataSync() as Float32Array, spec.nClasses, size);
        col += spec.nClasses;
      }
      if (bundle.decoder) {
        // image columns come from the same float32 buffer the iterates start from
        copyInto(values, width, start, col, xs, spec.inputDim, size);
        col += spec.inputDim;
        const recon = bundle.decoder.apply(z) as tf.Tensor2D;
        copyInto(values, width, start, col, recon.dataSync() as Float32Array, spec.inputDim, size);
        col += spec.inputDim;

        const xCol = col;
        const zCol = xCol + (iterations + 1) * spec.inputDim;
        const yCol = zCol + (iterations + 1) * spec.bottleneck;
        let current: tf.Tensor2D = x;
        for (let t = 0; t <= iterations; t++) {
          const step = encode(bundle, current);
          copyInto(
            values, width, start, xCol + t * spec.inputDim,
            current.dataSync() as Float32Array, spec.inputDim, size
          );
          copyInto(
            values, width, start, zCol + t * spec.bottleneck,
            step.z.dataSync() as Float32Array, spec.bottleneck, size
          );
          if (bundle.classifierHead) {
            const yt = bundle.classifierHead.apply(step.z) as tf.Tensor2D;
            copyInto(
              values, width, start, yCol + t * spec.nClasses,
              yt.dataSync() as Float32Array, spec.nClasses, size
            );
          }
          if (t < iterations) {
            current = bundle.decoder!.apply(step.z) as tf.Tensor2D;
          }
        }
      }
    });
  }

  return {
    name,
    columns,
    ids: samples.map((s) => s.id),
    groups: samples.map((s) => String(s.label)),
    values,
  };
}

export interface ExportResult {
  anchors: string;
  validation: string;
  test: string;
  config: string;
  trainLog: string;
}

export function exportResponses(
  bundle: ModelBundle,
  data: SplitData,
  log: TrainLog,
  options: ExportOptions
): ExportResult {
  fs.mkdirSync(options.outDir, { recursive: true });
  const layout = fullLayout(bundle, options.iterations);
  const ext = options.format;
  const paths = {
    anchors: path.join(options.outDir, `${options.baseName}-anchors.${ext}`),
    validation: path.join(options.outDir, `${options.baseName}-validation.${ext}`),
    test: path.join(options.outDir, `${options.baseName}-test.${ext}`),
    config: path.join(options.outDir, "experiment.conf"),
    trainLog: path.join(options.outDir, "train-log.json"),
  };

  const anchors = exportRole(
    bundle, data.train, layout, options.iterations, `${options.baseName}-anchors`, true
  );
  writeResponseSet(anchors, paths.anchors, ext);
  const validation = exportRole(
    bundle, data.validation, layout, options.iterations, `${options.baseName}-validation`, false
  );
  writeResponseSet(validation, paths.validation, ext);
  const test = exportRole(
    bundle, data.test, layout, options.iterations, `${options.baseName}-test`, false
  );
  writeResponseSet(test, paths.test, ext);

  const ind = splitClasses(data.spec.split);
  const ood = splitClasses(data.spec.split === "A" ? "B" : "A");
  const config = `# generated by latentperm-extract
seed = ${options.seed}
normalize = true
output.dir = out

source.${bundle.spec.architecture}.anchors = ${path.basename(paths.anchors)}
source.${bundle.spec.architecture}.validation = ${path.basename(paths.validation)}
source.${bundle.spec.architecture}.test = ${path.basename(paths.test)}
source.${bundle.spec.architecture}.metrics = default
source.${bundle.spec.architecture}.t = ${options.iterations}

test.statistic = mrpp
test.permutations = 3000
test.sample_size = 100

matrix.rows = all
matrix.cols = all

ensemble.ind = ${ind.join(",")}
ensemble.ood = ${ood.join(",")}
ensemble.split = 0.5
ensemble.seed = ${options.seed}
`;
  fs.writeFileSync(paths.config, config, "utf-8");
  fs.writeFileSync(
    paths.trainLog,
    JSON.stringify(
      {
        dataset: data.spec.dataset,
        split: data.spec.split,
        architecture: bundle.spec.architecture,
        seed: options.seed,
        iterations: options.iterations,
        modelSpec: bundle.spec,
        log,
      },
      null,
      2
    ) + "\n",
    "utf-8"
  );
  return paths;
}
