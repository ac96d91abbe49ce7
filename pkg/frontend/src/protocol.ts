/** Wire protocol types: one JSON object per line over stdin/stdout. */

export interface AdapterConfig {
  variables: number;
  timesteps: number;
  class_count: number;
  model?: 'demo' | { module: string };
  [key: string]: unknown;
}

export interface HelloMessage {
  type: 'hello';
  class_count: number;
  variables: number;
  timesteps: number;
}

export interface PredictRequest {
  type: 'predict';
  id: number;
  samples: number[][][]; // B x V x T, variable-major
}

export interface ScoresResponse {
  type: 'scores';
  id: number;
  scores: number[][]; // B x C
}

export interface ErrorResponse {
  type: 'error';
  id: number;
  message: string;
}

export function validateConfig(raw: unknown): AdapterConfig {
  if (typeof raw !== 'object' || raw === null) {
    throw new Error('config must be a JSON object');
  }
  const cfg = raw as AdapterConfig;
  for (const key of ['variables', 'timesteps', 'class_count'] as const) {
    if (!Number.isInteger(cfg[key]) || (cfg[key] as number) < 1) {
      throw new Error(`config.${key} must be a positive integer`);
    }
  }
  return cfg;
}

/** Returns a complaint for a malformed predict payload, or null when valid. */
export function validateSamples(samples: unknown, v: number, t: number): string | null {
  if (!Array.isArray(samples)) return 'samples must be an array';
  for (let b = 0; b < samples.length; b++) {
    const sample = samples[b];
    if (!Array.isArray(sample) || sample.length !== v) {
      return `sample ${b} must have ${v} variable rows`;
    }
    for (let i = 0; i < v; i++) {
      const row = sample[i];
      if (!Array.isArray(row) || row.length !== t) {
        return `sample ${b} variable ${i} must have ${t} values`;
      }
      for (let j = 0; j < t; j++) {
        if (typeof row[j] !== 'number' || !Number.isFinite(row[j])) {
          return `sample ${b} variable ${i} t ${j} is not a finite number`;
        }
      }
    }
  }
  return null;
}
