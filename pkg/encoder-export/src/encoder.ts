/**
 * Encoder registry. An encoder maps raw media bytes to a fixed-width
 * embedding; the export pipeline treats it as a black box selected by
 * identifier, and the identifier is recorded in the output manifest.
 *
 * The built-in `hash-v1-<dim>` family is a deterministic byte-hashing
 * encoder (FNV-1a feature hashing with a per-dimension fold), available on
 * any machine and exactly reproducible, which makes it the default for
 * integration runs where no pretrained network is installed. Real encoders
 * plug in through registerEncoder().
 */

export interface Encoder {
  /** Stable identifier, e.g. "hash-v1-16"; written to the manifest. */
  id: string
  /** Width of the embeddings this encoder produces. */
  embeddingDim: number
  /** True when repeated calls on identical bytes give identical output. */
  deterministic: boolean
  encode(bytes: Buffer): Float64Array
}

type EncoderFactory = (spec: string) => Encoder | undefined

const factories: EncoderFactory[] = []

export function registerEncoder(factory: EncoderFactory): void {
  factories.push(factory)
}

export function resolveEncoder(spec: string): Encoder {
  for (const factory of factories) {
    const enc = factory(spec)
    if (enc) return enc
  }
  throw new Error(`no encoder registered for identifier ${JSON.stringify(spec)}`)
}

const FNV_OFFSET = 0x811c9dc5
const FNV_PRIME = 0x01000193

function fnv1a(h: number, byte: number): number {
  h ^= byte
  return Math.imul(h, FNV_PRIME) >>> 0
}

export function hashEmbedding(bytes: Buffer, dim: number): Float64Array {
  const out = new Float64Array(dim)
  let h = FNV_OFFSET >>> 0
  for (let i = 0; i < bytes.length; i++) {
    h = fnv1a(h, bytes[i])
    const bucket = h % dim
    out[bucket] += (h & 0x8000) !== 0 ? -1 : 1
  }
  // fold the final state in so short files still spread over dimensions
  let g = h
  for (let j = 0; j < dim; j++) {
    g = fnv1a(g, j & 0xff)
    out[j] += ((g & 0x8000) !== 0 ? -1 : 1) * ((g % 7) / 7)
  }
  const scale = 1.0 / Math.sqrt(bytes.length + 1)
  for (let j = 0; j < dim; j++) out[j] *= scale
  return out
}

registerEncoder((spec) => {
  const match = /^hash-v1-(\d+)$/.exec(spec)
  if (!match) return undefined
  const dim = parseInt(match[1], 10)
  if (!(dim >= 1)) return undefined
  return {
    id: spec,
    embeddingDim: dim,
    deterministic: true,
    encode: (bytes) => hashEmbedding(bytes, dim),
  }
})
