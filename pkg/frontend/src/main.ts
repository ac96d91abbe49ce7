#!/usr/bin/env node
/** CLI entry: `node dist/main.js --config adapter.json`. */

import { readFileSync } from 'fs';

import { serve } from './adapter';
import { validateConfig } from './protocol';

function parseArgs(argv: string[]): { configPath: string } {
  let configPath: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--config') {
      configPath = argv[i + 1];
      i++;
    } else {
      throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (!configPath) {
    throw new Error('usage: main.js --config <adapter-config.json>');
  }
  return { configPath };
}

async function main(): Promise<number> {
  const { configPath } = parseArgs(process.argv.slice(2));
  const config = validateConfig(JSON.parse(readFileSync(configPath, 'utf8')));
  return serve(config);
}

main()
  .then((code) => process.exit(code))
  .catch((exc) => {
    process.stderr.write(`error: ${String(exc)}\n`);
    process.exit(1);
  });
