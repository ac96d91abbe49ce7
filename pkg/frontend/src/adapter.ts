/**
 * Serve loop: emit the hello line, answer predict requests until stdin
 * closes, flush one response line per request line.
 *
 * Malformed requests get an error line carrying the request id (-1 when no
 * id could be parsed) and service continues; a throwing model is
 * unrecoverable and ends the process with a nonzero status after a final
 * error line.
 */

import { createInterface } from 'readline';

import { BatchScorer, loadModel } from './models';
import {
  AdapterConfig,
  ErrorResponse,
  HelloMessage,
  ScoresResponse,
  validateSamples,
} from './protocol';

function writeLine(output: NodeJS.WritableStream, payload: object): void {
  output.write(JSON.stringify(payload) + '\n');
}

export async function serve(
  config: AdapterConfig,
  input: NodeJS.ReadableStream = process.stdin,
  output: NodeJS.WritableStream = process.stdout,
): Promise<number> {
  const scorer: BatchScorer = loadModel(config);

  const hello: HelloMessage = {
    type: 'hello',
    class_count: config.class_count,
    variables: config.variables,
    timesteps: config.timesteps,
  };
  writeLine(output, hello);

  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === '') continue;

    let request: unknown;
    try {
      request = JSON.parse(line);
    } catch {
      const err: ErrorResponse = { type: 'error', id: -1, message: 'malformed JSON line' };
      writeLine(output, err);
      continue;
    }

    const req = request as { type?: unknown; id?: unknown; samples?: unknown };
    const id = Number.isInteger(req.id) ? (req.id as number) : -1;
    if (req.type !== 'predict') {
      writeLine(output, { type: 'error', id, message: `unsupported request type ${String(req.type)}` });
      continue;
    }
    const complaint = validateSamples(req.samples, config.variables, config.timesteps);
    if (complaint !== null) {
      writeLine(output, { type: 'error', id, message: complaint });
      continue;
    }

    let scores: number[][];
    try {
      scores = scorer(req.samples as number[][][]);
    } catch (exc) {
      writeLine(output, { type: 'error', id, message: `model failure: ${String(exc)}` });
      return 1; // unrecoverable
    }
    const response: ScoresResponse = { type: 'scores', id, scores };
    writeLine(output, response);
  }
  return 0;
}
