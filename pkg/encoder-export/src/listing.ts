/**
 * Input listing: CSV rows of `path,label,modality`. The i-th row of each
 * modality belongs to sample i, so every modality must list the same number
 * of rows and agree on the label at each position.
 */

export interface ListingRow {
  path: string
  label: number
  modality: string
}

export interface Listing {
  /** Modality names in first-appearance order. */
  modalities: string[]
  /** rowsByModality[m][i] is sample i's row for modality m. */
  rowsByModality: Map<string, ListingRow[]>
  numClasses: number
  sampleCount: number
}

function splitCsvLine(line: string): string[] {
  // simple three-column CSV; quoted fields cover paths with commas
  const fields: string[] = []
  let current = ''
  let quoted = false
  for (let i = 0; i < line.length; i++) {
    const ch = line[i]
    if (quoted) {
      if (ch === '"' && line[i + 1] === '"') {
        current += '"'
        i++
      } else if (ch === '"') {
        quoted = false
      } else {
        current += ch
      }
    } else if (ch === '"') {
      quoted = true
    } else if (ch === ',') {
      fields.push(current)
      current = ''
    } else {
      current += ch
    }
  }
  fields.push(current)
  return fields
}

export function parseListing(text: string): Listing {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0)
  if (lines.length === 0) throw new Error('listing is empty')
  let start = 0
  const first = splitCsvLine(lines[0]).map((f) => f.trim().toLowerCase())
  if (first.join(',') === 'path,label,modality') start = 1

  const rowsByModality = new Map<string, ListingRow[]>()
  const modalities: string[] = []
  for (let i = start; i < lines.length; i++) {
    const fields = splitCsvLine(lines[i])
    if (fields.length !== 3) {
      throw new Error(`line ${i + 1}: expected 3 fields, got ${fields.length}`)
    }
    const [path, labelText, modality] = fields.map((f) => f.trim())
    const label = Number(labelText)
    if (!Number.isInteger(label) || label < 0) {
      throw new Error(`line ${i + 1}: label ${JSON.stringify(labelText)} is not a non-negative integer`)
    }
    if (path.length === 0 || modality.length === 0) {
      throw new Error(`line ${i + 1}: empty path or modality`)
    }
    if (!rowsByModality.has(modality)) {
      rowsByModality.set(modality, [])
      modalities.push(modality)
    }
    rowsByModality.get(modality)!.push({ path, label, modality })
  }

  const counts = modalities.map((m) => rowsByModality.get(m)!.length)
  if (new Set(counts).size !== 1) {
    throw new Error(
      `modalities list different row counts: ${modalities.map((m, i) => `${m}=${counts[i]}`).join(', ')}`,
    )
  }
  const sampleCount = counts[0]
  const reference = rowsByModality.get(modalities[0])!
  for (const m of modalities.slice(1)) {
    const rows = rowsByModality.get(m)!
    for (let i = 0; i < sampleCount; i++) {
      if (rows[i].label !== reference[i].label) {
        throw new Error(
          `sample ${i}: label mismatch between ${modalities[0]} (${reference[i].label}) and ${m} (${rows[i].label})`,
        )
      }
    }
  }

  const labels = reference.map((r) => r.label)
  const distinct = [...new Set(labels)].sort((a, b) => a - b)
  const numClasses = distinct.length === 0 ? 0 : distinct[distinct.length - 1] + 1
  for (let c = 0; c < numClasses; c++) {
    if (!distinct.includes(c)) {
      throw new Error(`labels are not dense: class ${c} has no samples`)
    }
  }
  return { modalities, rowsByModality, numClasses, sampleCount }
}
