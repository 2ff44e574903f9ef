/**
 * Training loop: Adam on cross-entropy and/or reconstruction MSE.
 *
 * classifier  -> CE only
 * autoencoder -> MSE only
 * hybrid      -> CE + lambda * MSE (lambda = 0 degenerates to the classifier
 *                objective by construction)
 *
 * A non-finite loss aborts immediately with diagnostics. All shuffles are
 * seeded, so training is reproducible on a fixed platform configuration.
 */

import * as tf from "@tensorflow/tfjs";
import { SplitData, Sample } from "./data";
import { ModelBundle, ModelSpec, buildModel, encode, hasClassifier, hasDecoder } from "./models";
import { Rng } from "./rng";

export interface EpochLog {
  epoch: number;
  loss: number;
  crossEntropy: number | null;
  reconstructionMse: number | null;
}

export interface TrainLog {
  epochs: EpochLog[];
  valAccuracy: number | null;
  valReconstructionMse: number | null;
  trainSamples: number;
  valSamples: number;
  classes: number[];
}

export interface Trained {
  bundle: ModelBundle;
  log: TrainLog;
}

function toTensors(
  samples: Sample[],
  classes: number[],
  inputDim: number
): { x: tf.Tensor2D; y: tf.Tensor1D } {
  const n = samples.length;
  const xs = new Float32Array(n * inputDim);
  const ys = new Int32Array(n);
  const classIndex = new Map(classes.map((c, i) => [c, i]));
  for (let i = 0; i < n; i++) {
    xs.set(samples[i].pixels as any, i * inputDim);
    ys[i] = classIndex.get(samples[i].label) ?? -1;
  }
  return {
    x: tf.tensor2d(xs, [n, inputDim]),
    y: tf.tensor1d(ys, "int32"),
  };
}

export function trainModel(data: SplitData, spec: ModelSpec, seed: number): Trained {
  const bundle = buildModel(spec, seed);
  const classes = data.trainClasses;
  if (hasClassifier(spec.architecture) && spec.nClasses !== classes.length) {
    throw new Error(`model expects ${spec.nClasses} classes but split has ${classes.length}`);
  }
  const { x: trainX, y: trainY } = toTensors(data.train, classes, spec.inputDim);
  const oneHot = hasClassifier(spec.architecture)
    ? (tf.oneHot(trainY, classes.length) as tf.Tensor2D)
    : null;
  const optimizer = tf.train.adam(spec.learningRate);
  const shuffler = new Rng(seed ^ 0x5eed);
  const n = data.train.length;
  const epochs: EpochLog[] = [];

  for (let epoch = 0; epoch < spec.epochs; epoch++) {
    const order = shuffler.shuffle(Array.from({ length: n }, (_, i) => i));
    const orderT = tf.tensor1d(order, "int32");
    const xShuf = tf.gather(trainX, orderT) as tf.Tensor2D;
    const yShuf = oneHot ? (tf.gather(oneHot, orderT) as tf.Tensor2D) : null;
    let lossSum = 0;
    let ceSum = 0;
    let mseSum = 0;
    let batches = 0;
    for (let start = 0; start < n; start += spec.batchSize) {
      const size = Math.min(spec.batchSize, n - start);
      const xb = xShuf.slice([start, 0], [size, spec.inputDim]) as tf.Tensor2D;
      const yb = yShuf ? (yShuf.slice([start, 0], [size, classes.length]) as tf.Tensor2D) : null;
      let ceVal = 0;
      let mseVal = 0;
      const lossTensor = optimizer.minimize(
        () => {
          const { z } = encode(bundle, xb);
          let loss: tf.Scalar | null = null;
          if (bundle.classifierHead && yb) {
            const logits = bundle.classifierHead.apply(z) as tf.Tensor2D;
            const ce = tf.losses.softmaxCrossEntropy(yb, logits) as tf.Scalar;
            ceVal = ce.dataSync()[0];
            loss = ce;
          }
          if (bundle.decoder) {
            const recon = bundle.decoder.apply(z) as tf.Tensor2D;
            const mse = tf.losses.meanSquaredError(xb, recon) as tf.Scalar;
            mseVal = mse.dataSync()[0];
            const weighted =
              spec.architecture === "hybrid" ? (mse.mul(spec.lambda) as tf.Scalar) : mse;
            loss = loss ? (loss.add(weighted) as tf.Scalar) : weighted;
          }
          if (!loss) {
            throw new Error("model has no heads to train");
          }
          return loss;
        },
        true,
        bundle.trainableWeights
      ) as tf.Scalar;
      const lossVal = lossTensor.dataSync()[0];
      lossTensor.dispose();
      xb.dispose();
      yb?.dispose();
      if (!Number.isFinite(lossVal)) {
        throw new Error(
          `training diverged: non-finite loss at epoch ${epoch}, batch ${batches} ` +
            `(ce=${ceVal}, mse=${mseVal}); try a lower learning rate`
        );
      }
      lossSum += lossVal;
      ceSum += ceVal;
      mseSum += mseVal;
      batches++;
    }
    orderT.dispose();
    xShuf.dispose();
    yShuf?.dispose();
    epochs.push({
      epoch,
      loss: lossSum / batches,
      crossEntropy: bundle.classifierHead ? ceSum / batches : null,
      reconstructionMse: bundle.decoder ? mseSum / batches : null,
    });
  }

  // validation metrics
  let valAccuracy: number | null = null;
  let valMse: number | null = null;
  if (data.validation.length > 0) {
    const { x: valX, y: valY } = toTensors(data.validation, classes, spec.inputDim);
    const { z } = encode(bundle, valX);
    if (bundle.classifierHead) {
      const logits = bundle.classifierHead.apply(z) as tf.Tensor2D;
      const pred = logits.argMax(1);
      valAccuracy = (tf.equal(pred, valY).mean().dataSync() as Float32Array)[0];
    }
    if (bundle.decoder) {
      const recon = bundle.decoder.apply(z) as tf.Tensor2D;
      valMse = (tf.losses.meanSquaredError(valX, recon).dataSync() as Float32Array)[0];
    }
  }

  trainX.dispose();
  trainY.dispose();
  oneHot?.dispose();

  return {
    bundle,
    log: {
      epochs,
      valAccuracy,
      valReconstructionMse: valMse,
      trainSamples: data.train.length,
      valSamples: data.validation.length,
      classes,
    },
  };
}
