import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { afterEach, beforeEach, describe, expect, it } from 'vitest'

import { decodeEmbd } from '../src/embd.js'
import { resolveEncoder } from '../src/encoder.js'
import { exportEmbeddings } from '../src/export.js'
import { parseListing } from '../src/listing.js'

let workDir: string

beforeEach(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), 'encexp-'))
})

afterEach(() => {
  fs.rmSync(workDir, { recursive: true, force: true })
})

function writeMedia(name: string, content: string): string {
  const p = path.join(workDir, name)
  fs.writeFileSync(p, content)
  return name
}

function makeListing(rows: string[][]): ReturnType<typeof parseListing> {
  const text = ['path,label,modality', ...rows.map((r) => r.join(','))].join('\n')
  return parseListing(text)
}

describe('parseListing', () => {
  it('groups rows by modality and infers classes', () => {
    const listing = makeListing([
      ['a0.wav', '0', 'audio'],
      ['a1.wav', '1', 'audio'],
      ['v0.png', '0', 'vision'],
      ['v1.png', '1', 'vision'],
    ])
    expect(listing.modalities).toEqual(['audio', 'vision'])
    expect(listing.sampleCount).toBe(2)
    expect(listing.numClasses).toBe(2)
  })

  it('rejects per-sample label disagreement between modalities', () => {
    expect(() =>
      makeListing([
        ['a0.wav', '0', 'audio'],
        ['v0.png', '1', 'vision'],
      ]),
    ).toThrow(/label mismatch/)
  })

  it('rejects unequal modality row counts', () => {
    expect(() =>
      makeListing([
        ['a0.wav', '0', 'audio'],
        ['a1.wav', '0', 'audio'],
        ['v0.png', '0', 'vision'],
      ]),
    ).toThrow(/different row counts/)
  })

  it('rejects sparse labels', () => {
    expect(() =>
      makeListing([
        ['a0.wav', '0', 'audio'],
        ['a1.wav', '2', 'audio'],
      ]),
    ).toThrow(/not dense/)
  })
})

describe('exportEmbeddings', () => {
  const encoder = resolveEncoder('hash-v1-6')

  function exportJob(rows: string[][], outName = 'out') {
    return exportEmbeddings({
      listing: makeListing(rows),
      baseDir: workDir,
      encoder,
      outDir: path.join(workDir, outName),
      dtype: 'float32',
      log: () => {},
    })
  }

  it('writes one aligned EMBD file per modality with identical labels', () => {
    const rows = [
      [writeMedia('a0.wav', 'audio zero'), '0', 'audio'],
      [writeMedia('a1.wav', 'audio one'), '1', 'audio'],
      [writeMedia('v0.png', 'vision zero'), '0', 'vision'],
      [writeMedia('v1.png', 'vision one'), '1', 'vision'],
    ]
    const result = exportJob(rows)
    expect(result.exported).toBe(2)
    const audio = decodeEmbd(fs.readFileSync(path.join(workDir, 'out', 'audio.embd')))
    const vision = decodeEmbd(fs.readFileSync(path.join(workDir, 'out', 'vision.embd')))
    expect(audio.labels).toEqual([0, 1])
    expect(vision.labels).toEqual(audio.labels)
    expect(audio.dim).toBe(6)
    // row i of each file comes from sample i's media for that modality
    expect([...audio.rows[0]]).toEqual(
      [...encoder.encode(Buffer.from('audio zero'))].map(Math.fround),
    )
    expect([...vision.rows[1]]).toEqual(
      [...encoder.encode(Buffer.from('vision one'))].map(Math.fround),
    )
  })

  it('manifest matches the engine schema and records the encoder', () => {
    const rows = [
      [writeMedia('a0.wav', 'x'), '0', 'audio'],
      [writeMedia('v0.png', 'y'), '0', 'vision'],
    ]
    const result = exportJob(rows)
    const manifest = JSON.parse(fs.readFileSync(result.manifestPath, 'utf-8'))
    expect(manifest.format_version).toBe(1)
    expect(manifest.num_classes).toBe(1)
    expect(manifest.dim).toBe(6)
    expect(manifest.count).toBe(1)
    expect(manifest.dtype).toBe('float32')
    expect(manifest.modalities).toEqual([
      { name: 'audio', path: 'audio.embd' },
      { name: 'vision', path: 'vision.embd' },
    ])
    expect(manifest.encoder).toBe('hash-v1-6')
  })

  it('duplicate media rows duplicate embedding rows', () => {
    const media = writeMedia('same.wav', 'repeated content')
    const rows = [
      [media, '0', 'audio'],
      [media, '0', 'audio'],
    ]
    const result = exportJob(rows)
    expect(result.exported).toBe(2)
    const audio = decodeEmbd(fs.readFileSync(path.join(workDir, 'out', 'audio.embd')))
    expect([...audio.rows[0]]).toEqual([...audio.rows[1]])
  })

  it('unreadable media drops the sample from every modality', () => {
    const rows = [
      [writeMedia('a0.wav', 'a zero'), '0', 'audio'],
      ['missing.wav', '0', 'audio'],
      [writeMedia('a2.wav', 'a two'), '1', 'audio'],
      [writeMedia('v0.png', 'v zero'), '0', 'vision'],
      [writeMedia('v1.png', 'v one'), '0', 'vision'],
      [writeMedia('v2.png', 'v two'), '1', 'vision'],
    ]
    const result = exportJob(rows)
    expect(result.exported).toBe(2)
    expect(result.skipped).toHaveLength(1)
    expect(result.skipped[0].path).toBe('missing.wav')
    const audio = decodeEmbd(fs.readFileSync(path.join(workDir, 'out', 'audio.embd')))
    const vision = decodeEmbd(fs.readFileSync(path.join(workDir, 'out', 'vision.embd')))
    expect(audio.labels).toEqual([0, 1])
    // vision row for the dropped sample is gone too: row 1 is v2
    expect([...vision.rows[1]]).toEqual(
      [...encoder.encode(Buffer.from('v two'))].map(Math.fround),
    )
  })

  it('re-export of identical inputs is byte-identical (deterministic encoder)', () => {
    const rows = [
      [writeMedia('a0.wav', 'stable'), '0', 'audio'],
      [writeMedia('v0.png', 'stable too'), '0', 'vision'],
    ]
    exportJob(rows, 'out1')
    exportJob(rows, 'out2')
    for (const name of ['audio.embd', 'vision.embd', 'manifest.json']) {
      const a = fs.readFileSync(path.join(workDir, 'out1', name))
      const b = fs.readFileSync(path.join(workDir, 'out2', name))
      expect(a.equals(b)).toBe(true)
    }
  })

  it('fails when a class loses all samples to skips', () => {
    const rows = [
      [writeMedia('a0.wav', 'zero'), '0', 'audio'],
      ['gone.wav', '1', 'audio'],
    ]
    expect(() => exportJob(rows)).toThrow(/class 1/)
  })
})
