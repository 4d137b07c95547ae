#!/usr/bin/env node
/**
 * encoder-export --listing <csv> --encoder <id> --out <dir> [--float64]
 *
 * Reads a `path,label,modality` listing, encodes every media file with the
 * selected encoder, and writes per-modality EMBD files plus manifest.json.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { resolveEncoder } from './encoder.js'
import { exportEmbeddings } from './export.js'
import { parseListing } from './listing.js'

function usage(): never {
  process.stderr.write(
    'usage: encoder-export --listing <csv> --encoder <id> --out <dir> [--float64]\n' +
      '  built-in encoders: hash-v1-<dim> (deterministic byte hashing)\n',
  )
  process.exit(2)
}

function parseArgs(argv: string[]) {
  const opts: { listing?: string; encoder?: string; out?: string; float64: boolean } = {
    float64: false,
  }
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (arg === '--listing') opts.listing = argv[++i]
    else if (arg === '--encoder') opts.encoder = argv[++i]
    else if (arg === '--out') opts.out = argv[++i]
    else if (arg === '--float64') opts.float64 = true
    else usage()
  }
  if (!opts.listing || !opts.encoder || !opts.out) usage()
  return opts as { listing: string; encoder: string; out: string; float64: boolean }
}

export function main(argv: string[]): number {
  const opts = parseArgs(argv)
  let encoder
  try {
    encoder = resolveEncoder(opts.encoder)
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`)
    return 2
  }
  try {
    const listing = parseListing(fs.readFileSync(opts.listing, 'utf-8'))
    const result = exportEmbeddings({
      listing,
      baseDir: path.dirname(path.resolve(opts.listing)),
      encoder,
      outDir: opts.out,
      dtype: opts.float64 ? 'float64' : 'float32',
    })
    process.stdout.write(
      JSON.stringify({
        manifest: result.manifestPath,
        exported: result.exported,
        skipped: result.skipped.length,
        encoder: encoder.id,
      }) + '\n',
    )
    return 0
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`)
    return 1
  }
}

if (process.argv[1] && path.basename(process.argv[1]).startsWith('cli')) {
  process.exit(main(process.argv.slice(2)))
}
