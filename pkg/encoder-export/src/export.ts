/**
 * Export pipeline: encode every listed media file and write one EMBD file
 * per modality plus a dataset manifest the condensation engine loads
 * directly. Row i of every output file derives from sample i of the
 * listing; a sample whose media cannot be read is dropped from all
 * modalities together so the outputs stay row-aligned.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { encodeEmbd, EmbdDtype } from './embd.js'
import { Encoder } from './encoder.js'
import { Listing } from './listing.js'

export interface ExportJob {
  listing: Listing
  /** Paths in the listing resolve relative to this directory. */
  baseDir: string
  encoder: Encoder
  outDir: string
  dtype: EmbdDtype
  log?: (message: string) => void
}

export interface ExportResult {
  manifestPath: string
  exported: number
  skipped: { sample: number; path: string; reason: string }[]
}

export function exportEmbeddings(job: ExportJob): ExportResult {
  const { listing, encoder, outDir } = job
  const log = job.log ?? ((m: string) => process.stderr.write(m + '\n'))
  if (listing.sampleCount === 0) throw new Error('listing has no samples')

  // read every sample's media up front so failures drop the whole sample
  const skipped: ExportResult['skipped'] = []
  const kept: number[] = []
  const bytesBySample = new Map<number, Map<string, Buffer>>()
  for (let i = 0; i < listing.sampleCount; i++) {
    const perModality = new Map<string, Buffer>()
    let reason: string | null = null
    let badPath = ''
    for (const modality of listing.modalities) {
      const row = listing.rowsByModality.get(modality)![i]
      const mediaPath = path.resolve(job.baseDir, row.path)
      try {
        perModality.set(modality, fs.readFileSync(mediaPath))
      } catch (err) {
        reason = err instanceof Error ? err.message : String(err)
        badPath = row.path
        break
      }
    }
    if (reason !== null) {
      skipped.push({ sample: i, path: badPath, reason })
      log(`skipping sample ${i} (${badPath}): ${reason}`)
    } else {
      kept.push(i)
      bytesBySample.set(i, perModality)
    }
  }
  if (kept.length === 0) throw new Error('every sample failed to read; nothing to export')

  const reference = listing.rowsByModality.get(listing.modalities[0])!
  const labels = kept.map((i) => reference[i].label)
  const numClasses = listing.numClasses
  const surviving = new Set(labels)
  for (let c = 0; c < numClasses; c++) {
    if (!surviving.has(c)) {
      throw new Error(`after skips, class ${c} has no samples; labels must stay dense`)
    }
  }

  fs.mkdirSync(outDir, { recursive: true })
  const entries: { name: string; path: string }[] = []
  for (const modality of listing.modalities) {
    const rows = kept.map((i) => encoder.encode(bytesBySample.get(i)!.get(modality)!))
    const fileName = `${modality}.embd`
    fs.writeFileSync(
      path.join(outDir, fileName),
      encodeEmbd({ dim: encoder.embeddingDim, rows, labels }, job.dtype),
    )
    entries.push({ name: modality, path: fileName })
  }

  const manifest = {
    format_version: 1,
    num_classes: numClasses,
    class_names: Array.from({ length: numClasses }, (_, c) => `class${String(c).padStart(2, '0')}`),
    dim: encoder.embeddingDim,
    count: kept.length,
    dtype: job.dtype,
    seed: null,
    modalities: entries,
    encoder: encoder.id,
  }
  const manifestPath = path.join(outDir, 'manifest.json')
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n')
  return { manifestPath, exported: kept.length, skipped }
}
