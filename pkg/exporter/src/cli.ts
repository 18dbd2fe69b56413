#!/usr/bin/env node
import { pathToFileURL } from "node:url";

import yargs, { type Argv } from "yargs";
import { hideBin } from "yargs/helpers";

import { HashEncoder } from "./encoder.js";
import { ExportError, ExportJob, ExportResult, exportClasses, exportCorpus, exportQueries } from "./export.js";
import { ManifestError, readManifest } from "./manifest.js";

export const EXIT_OK = 0;
export const EXIT_INPUT = 2;
export const EXIT_USAGE = 64;
export const EXIT_INTERNAL = 70;

class UsageError extends Error {}

interface SpaceArgs {
  "coarse-space": string;
  "fine-space": string;
  "infer-space": string;
  "coarse-dim": number;
  "fine-dim": number;
  "infer-dim": number;
  "coarse-model": string;
  "fine-model": string;
  "infer-model": string;
  out: string;
}

function buildJob(args: SpaceArgs): ExportJob {
  for (const dim of [args["coarse-dim"], args["fine-dim"], args["infer-dim"]]) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new UsageError(`space dims must be positive integers, got ${dim}`);
    }
  }
  return {
    coarse: {
      name: args["coarse-space"],
      encoder: new HashEncoder(args["coarse-model"], args["coarse-dim"]),
    },
    fine: {
      name: args["fine-space"],
      encoder: new HashEncoder(args["fine-model"], args["fine-dim"]),
    },
    infer: {
      name: args["infer-space"],
      encoder: new HashEncoder(args["infer-model"], args["infer-dim"]),
    },
    outDir: args.out,
  };
}

function report(result: ExportResult): void {
  for (const warning of result.warnings) {
    console.error(`warning: ${warning}`);
  }
  for (const file of result.files) {
    console.log(file);
  }
}

function spaceOptions(cmd: Argv): Argv {
  return cmd
    .option("out", { type: "string", demandOption: true, describe: "output directory" })
    .option("coarse-space", { type: "string", default: "coarse" })
    .option("fine-space", { type: "string", default: "fine" })
    .option("infer-space", { type: "string", default: "infer" })
    .option("coarse-dim", { type: "number", default: 32 })
    .option("fine-dim", { type: "number", default: 48 })
    .option("infer-dim", { type: "number", default: 24 })
    .option("coarse-model", { type: "string", default: "hash-v1" })
    .option("fine-model", { type: "string", default: "hash-v1" })
    .option("infer-model", { type: "string", default: "hash-v1" });
}

function splitLabels(raw: string): string[] {
  const labels = raw.split(",").map((s) => s.trim()).filter((s) => s.length > 0);
  if (labels.length === 0) {
    throw new UsageError("--labels needs a non-empty comma-separated list");
  }
  return labels;
}

export async function run(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .scriptName("xmodal-export")
    .usage("$0 <command>: embed manifests into engine matrix/metadata files")
    .command(
      "corpus",
      "embed corpus images and captions",
      (cmd) =>
        spaceOptions(cmd).option("manifest", {
          type: "string",
          demandOption: true,
          describe: "CSV or JSONL with image, caption columns",
        }),
      (args) => report(exportCorpus(readManifest(args.manifest as string), buildJob(args as unknown as SpaceArgs))),
    )
    .command(
      "queries",
      "embed query images (labels mapped against --labels when present)",
      (cmd) =>
        spaceOptions(cmd)
          .option("manifest", { type: "string", demandOption: true })
          .option("labels", { type: "string", describe: "class labels, comma separated, class order" }),
      (args) =>
        report(
          exportQueries(
            readManifest(args.manifest as string),
            buildJob(args as unknown as SpaceArgs),
            args.labels === undefined ? undefined : splitLabels(args.labels as string),
          ),
        ),
    )
    .command(
      "classes",
      "embed one prompt per class label",
      (cmd) =>
        spaceOptions(cmd)
          .option("labels", { type: "string", demandOption: true })
          .option("template", { type: "string", default: "a photo of a [CLS]" }),
      (args) =>
        report(
          exportClasses(
            splitLabels(args.labels as string),
            args.template as string,
            buildJob(args as unknown as SpaceArgs),
          ),
        ),
    )
    .demandCommand(1, "pick a command: corpus, queries, or classes")
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new UsageError(msg);
    });

  try {
    await parser.parse();
    return EXIT_OK;
  } catch (exc) {
    if (exc instanceof UsageError) {
      console.error(`usage error: ${exc.message}`);
      return EXIT_USAGE;
    }
    if (exc instanceof ManifestError || exc instanceof ExportError) {
      console.error(`input error: ${exc.message}`);
      return EXIT_INPUT;
    }
    console.error(`internal error: ${exc}`);
    return EXIT_INTERNAL;
  }
}

const isMain =
  process.argv[1] !== undefined && pathToFileURL(process.argv[1]).href === import.meta.url;
if (isMain) {
  run(hideBin(process.argv)).then((code) => process.exit(code));
}
