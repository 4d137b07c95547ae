/**
 * EMBD binary embedding files, bit-compatible with the condensation engine.
 *
 * Layout (all integers little-endian): magic "EMBD", u32 version (1),
 * u32 dim, u64 count, u8 dtype (0 = float32, 1 = float64), row-major
 * values, then count u32 labels.
 */

export const MAGIC = 'EMBD'
export const FORMAT_VERSION = 1

export type EmbdDtype = 'float32' | 'float64'

export interface EmbeddingMatrix {
  dim: number
  rows: Float64Array[]
  labels: number[]
}

const HEADER_SIZE = 4 + 4 + 4 + 8 + 1

export function encodeEmbd(matrix: EmbeddingMatrix, dtype: EmbdDtype = 'float32'): Buffer {
  const { dim, rows, labels } = matrix
  if (rows.length !== labels.length) {
    throw new Error(`row count ${rows.length} does not match label count ${labels.length}`)
  }
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`row of length ${row.length} in a dim=${dim} matrix`)
    }
    for (const v of row) {
      if (!Number.isFinite(v)) throw new Error('refusing to write non-finite embeddings')
    }
  }
  for (const lab of labels) {
    if (!Number.isInteger(lab) || lab < 0 || lab >= 2 ** 32) {
      throw new Error(`label ${lab} does not fit in u32`)
    }
  }
  const valueSize = dtype === 'float32' ? 4 : 8
  const buf = Buffer.alloc(HEADER_SIZE + rows.length * dim * valueSize + labels.length * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(FORMAT_VERSION, 4)
  buf.writeUInt32LE(dim, 8)
  buf.writeBigUInt64LE(BigInt(rows.length), 12)
  buf.writeUInt8(dtype === 'float32' ? 0 : 1, 20)
  let offset = HEADER_SIZE
  for (const row of rows) {
    for (const v of row) {
      if (dtype === 'float32') {
        buf.writeFloatLE(Math.fround(v), offset)
      } else {
        buf.writeDoubleLE(v, offset)
      }
      offset += valueSize
    }
  }
  for (const lab of labels) {
    buf.writeUInt32LE(lab, offset)
    offset += 4
  }
  return buf
}

/** Reader used by the test suite to confirm round trips. */
export function decodeEmbd(buf: Buffer): EmbeddingMatrix & { dtype: EmbdDtype } {
  if (buf.length < 4 || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error('bad magic')
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`)
  const dim = buf.readUInt32LE(8)
  const count = Number(buf.readBigUInt64LE(12))
  const code = buf.readUInt8(20)
  if (code !== 0 && code !== 1) throw new Error(`unknown dtype code ${code}`)
  const dtype: EmbdDtype = code === 0 ? 'float32' : 'float64'
  const valueSize = code === 0 ? 4 : 8
  const expected = HEADER_SIZE + count * dim * valueSize + count * 4
  if (buf.length !== expected) throw new Error(`expected ${expected} bytes, got ${buf.length}`)
  const rows: Float64Array[] = []
  let offset = HEADER_SIZE
  for (let i = 0; i < count; i++) {
    const row = new Float64Array(dim)
    for (let j = 0; j < dim; j++) {
      row[j] = code === 0 ? buf.readFloatLE(offset) : buf.readDoubleLE(offset)
      offset += valueSize
    }
    rows.push(row)
  }
  const labels: number[] = []
  for (let i = 0; i < count; i++) {
    labels.push(buf.readUInt32LE(offset))
    offset += 4
  }
  return { dim, rows, labels, dtype }
}
