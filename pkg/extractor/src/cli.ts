#!/usr/bin/env node
/**
 * latentperm-extract: train a desk-scale model on a label split and export
 * its latent responses in the core's response-set formats.
 *
 *   extract --dataset mnist --split A --arch hybrid --out DIR --T 10 --seed 1234
 */

import * as path from "path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { setupBackend } from "./backend";
import { DatasetName, SplitName, defaultSplitSpec, loadSplit, splitClasses } from "./data";
import { exportResponses } from "./export";
import { Architecture, defaultModelSpec, saveCheckpoint } from "./models";
import { trainModel } from "./train";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command("extract", "train a model and export latent responses")
    .option("dataset", { choices: ["mnist", "cifar10"] as const, default: "mnist" as DatasetName })
    .option("split", { choices: ["A", "B"] as const, default: "A" as SplitName })
    .option("arch", {
      choices: ["classifier", "autoencoder", "hybrid"] as const,
      default: "hybrid" as Architecture,
    })
    .option("out", { type: "string", demandOption: true, describe: "output directory" })
    .option("T", { type: "number", default: 10, describe: "encode-decode iterate steps" })
    .option("seed", { type: "number", default: 1234 })
    .option("epochs", { type: "number", default: 5 })
    .option("bottleneck", { type: "number", default: 32 })
    .option("hidden", { type: "number", default: 256 })
    .option("lambda", { type: "number", default: 0.5 })
    .option("lr", { type: "number", default: 0.001 })
    .option("format", { choices: ["csv", "bin"] as const, default: "bin" as "csv" | "bin" })
    .option("data-dir", { type: "string", describe: "CIFAR-10 binary batch directory" })
    .demandCommand(1)
    .strict()
    .parse();

  await setupBackend();

  const splitSpec = defaultSplitSpec(argv.dataset, argv.split);
  console.log(`loading ${argv.dataset} split ${argv.split} ...`);
  const data = loadSplit(splitSpec, argv.seed, argv["data-dir"]);
  console.log(
    `train=${data.train.length} val=${data.validation.length} test=${data.test.length} ` +
      `inputDim=${data.inputDim}`
  );

  const modelSpec = {
    ...defaultModelSpec(argv.arch, data.inputDim, splitClasses(argv.split).length),
    epochs: argv.epochs,
    bottleneck: argv.bottleneck,
    hidden: argv.hidden,
    lambda: argv.lambda,
    learningRate: argv.lr,
  };
  console.log(`training ${argv.arch} (epochs=${modelSpec.epochs}, seed=${argv.seed}) ...`);
  const t0 = Date.now();
  const { bundle, log } = trainModel(data, modelSpec, argv.seed);
  for (const e of log.epochs) {
    const parts = [`epoch ${e.epoch}: loss=${e.loss.toFixed(4)}`];
    if (e.crossEntropy !== null) parts.push(`ce=${e.crossEntropy.toFixed(4)}`);
    if (e.reconstructionMse !== null) parts.push(`mse=${e.reconstructionMse.toFixed(4)}`);
    console.log("  " + parts.join(" "));
  }
  if (log.valAccuracy !== null) console.log(`val accuracy: ${log.valAccuracy.toFixed(4)}`);
  if (log.valReconstructionMse !== null) {
    console.log(`val reconstruction mse: ${log.valReconstructionMse.toFixed(5)}`);
  }
  console.log(`trained in ${((Date.now() - t0) / 1000).toFixed(1)}s`);

  const baseName = `${argv.dataset}-${argv.split}-${argv.arch}`;
  const result = exportResponses(bundle, data, log, {
    outDir: argv.out,
    iterations: argv.T,
    format: argv.format,
    seed: argv.seed,
    baseName,
  });
  saveCheckpoint(bundle, argv.seed, path.join(argv.out, `${baseName}-checkpoint.json`));
  for (const p of Object.values(result)) {
    console.log(`wrote ${p}`);
  }
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(String(err && err.message ? err.message : err));
    process.exit(1);
  });
