/** Token pooling: the global vector is the plain average of all tokens
 * (patches and the summary token weighted equally). */

export function poolTokens(
  tokens: Float32Array,
  tokensPerItem: number,
  featureDim: number
): Float32Array {
  if (tokens.length !== tokensPerItem * featureDim || tokensPerItem < 1) {
    throw new RangeError(
      `token buffer of ${tokens.length} values does not match ` +
        `${tokensPerItem} x ${featureDim}`
    );
  }
  const sums = new Float64Array(featureDim);
  for (let t = 0; t < tokensPerItem; t++) {
    const base = t * featureDim;
    for (let j = 0; j < featureDim; j++) {
      sums[j] += tokens[base + j];
    }
  }
  const out = new Float32Array(featureDim);
  for (let j = 0; j < featureDim; j++) {
    out[j] = sums[j] / tokensPerItem;
  }
  return out;
}
