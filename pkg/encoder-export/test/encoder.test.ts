import { describe, expect, it } from 'vitest'

import { hashEmbedding, resolveEncoder } from '../src/encoder.js'

describe('hash encoder', () => {
  it('resolves from an identifier and reports its dimension', () => {
    const enc = resolveEncoder('hash-v1-16')
    expect(enc.embeddingDim).toBe(16)
    expect(enc.id).toBe('hash-v1-16')
    expect(enc.deterministic).toBe(true)
  })

  it('rejects unknown identifiers', () => {
    expect(() => resolveEncoder('resnet-50')).toThrow(/no encoder registered/)
    expect(() => resolveEncoder('hash-v1-0')).toThrow(/no encoder registered/)
  })

  it('is deterministic on identical bytes', () => {
    const bytes = Buffer.from('the same media content', 'utf-8')
    const a = hashEmbedding(bytes, 8)
    const b = hashEmbedding(Buffer.from(bytes), 8)
    expect([...a]).toEqual([...b])
  })

  it('separates different content', () => {
    const a = hashEmbedding(Buffer.from('first clip'), 8)
    const b = hashEmbedding(Buffer.from('second clip'), 8)
    expect([...a]).not.toEqual([...b])
  })

  it('produces finite values of the requested width', () => {
    const out = resolveEncoder('hash-v1-12').encode(Buffer.from([0, 1, 2, 255]))
    expect(out.length).toBe(12)
    for (const v of out) expect(Number.isFinite(v)).toBe(true)
  })
})
