/**
 * Model loading for the adapter.
 *
 * A model is a batch scorer: (samples: number[][][]) => number[][], one score
 * vector per sample. The built-in demo model is a logistic over per-variable
 * means; custom models are loaded from a CommonJS module whose export is a
 * factory (config) => scorer.
 */

import { AdapterConfig } from './protocol';

export type BatchScorer = (samples: number[][][]) => number[][];

// Reproducible logistic built only from exactly rounded IEEE-754 operations,
// mirroring the engine's linear_means built-in step for step, so a bridged
// demo model and the in-process built-in return bit-identical doubles.
const INV_LN2 = 1.4426950408889634074;
const LN2_HI = 6.93147180369123816490e-1;
const LN2_LO = 1.90821492927058770002e-10;
const EXP_COEFFS = [
  2.08767569878681e-9, 2.505210838544172e-8, 2.755731922398589e-7,
  2.7557319223985893e-6, 2.48015873015873e-5, 0.0001984126984126984,
  0.001388888888888889, 0.008333333333333333, 0.041666666666666664,
  0.16666666666666666, 0.5, 1.0, 1.0,
];

function portableExp(y: number): number {
  // y in [-40, 0]
  const k = Math.floor(y * INV_LN2 + 0.5);
  const r = (y - k * LN2_HI) - k * LN2_LO;
  let p = EXP_COEFFS[0];
  for (let i = 1; i < EXP_COEFFS.length; i++) {
    p = p * r + EXP_COEFFS[i];
  }
  for (let i = 0; i > k; i--) {
    p *= 0.5; // exact scaling by 2^k, k <= 0
  }
  return p;
}

export function portableLogistic(x: number): number {
  if (x >= 40.0) return 1.0;
  if (x <= -40.0) return 0.0;
  const e = portableExp(-Math.abs(x));
  return x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

/** Logistic over per-variable means: scores [1 - p, p]. */
export function demoModel(config: AdapterConfig): BatchScorer {
  const v = config.variables;
  const weights = (config.weights as number[] | undefined) ?? new Array(v).fill(1.0);
  const bias = (config.bias as number | undefined) ?? 0.0;
  if (weights.length !== v) {
    throw new Error(`demo model has ${weights.length} weights for ${v} variables`);
  }
  return (samples) =>
    samples.map((sample) => {
      const means = sample.map((row) => {
        let sum = 0;
        for (const value of row) sum += value;
        return sum / row.length;
      });
      let acc = 0;
      for (let i = 0; i < means.length; i++) acc += means[i] * weights[i];
      const p = portableLogistic(acc + bias);
      return [1.0 - p, p];
    });
}

export function loadModel(config: AdapterConfig): BatchScorer {
  if (config.model === 'demo' || config.model === undefined) {
    return demoModel(config);
  }
  if (typeof config.model === 'object' && typeof config.model.module === 'string') {
    // eslint-disable-next-line @typescript-eslint/no-var-requires
    const loaded = require(config.model.module);
    const factory = typeof loaded === 'function' ? loaded : loaded.default;
    if (typeof factory !== 'function') {
      throw new Error(`module ${config.model.module} does not export a model factory`);
    }
    return factory(config) as BatchScorer;
  }
  throw new Error('config.model must be "demo" or {"module": "<path>"}');
}
