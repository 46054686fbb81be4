#!/usr/bin/env node
/**
 * Command-line entry point:
 *
 *   qsl-figures render --manifest PATH --out DIR [--format svg]
 *
 * Reads one experiment manifest and writes the figure for its kind into
 * the output directory. Exit codes: 0 ok, 1 bad invocation or unsupported
 * request, 2 missing input.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { pathToFileURL } from "node:url";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { MissingInput } from "./errors.js";
import { render } from "./render.js";

export async function main(argv: string[]): Promise<number> {
  let exit = 0;
  const parser = yargs(argv)
    .scriptName("qsl-figures")
    .command(
      "render",
      "render the figure for one experiment manifest",
      (y) =>
        y
          .option("manifest", { type: "string", demandOption: true, describe: "path to manifest.json" })
          .option("out", { type: "string", demandOption: true, describe: "output directory" })
          .option("format", {
            type: "string",
            choices: ["png", "svg"] as const,
            default: "svg",
            describe: "output format (this build renders svg)",
          }),
      (args) => {
        try {
          const files = render({
            manifestPath: args.manifest,
            format: args.format as "svg" | "png",
          });
          fs.mkdirSync(args.out, { recursive: true });
          for (const f of files) {
            const target = path.join(args.out, f.name);
            fs.writeFileSync(target, f.content);
            process.stdout.write(`wrote ${target}\n`);
          }
        } catch (err) {
          const e = err as Error;
          process.stderr.write(`${e.name ?? "Error"}: ${e.message}\n`);
          exit = e instanceof MissingInput ? 2 : 1;
        }
      },
    )
    .demandCommand(1, "specify a command (render)")
    .strict()
    .help();
  await parser.parseAsync();
  return exit;
}

const isDirectRun = process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (isDirectRun) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
