/**
 * RFC-4180 CSV reader for arcdyn artifacts: `#`-prefixed comment lines carry
 * units and a schema tag, the first plain line is the header row. Quoted
 * fields and CRLF/LF endings are both accepted.
 */

import { readFileSync } from "node:fs";

export interface Table {
  comments: string[];
  header: string[];
  rows: string[][];
  path: string;
}

function splitRecord(line: string): string[] {
  const out: string[] = [];
  let field = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      out.push(field);
      field = "";
    } else {
      field += ch;
    }
  }
  out.push(field);
  return out;
}

export function parseCsv(text: string, path = "<string>"): Table {
  const comments: string[] = [];
  let header: string[] | null = null;
  const rows: string[][] = [];
  for (const raw of text.split(/\r\n|\n/)) {
    if (raw.length === 0) continue;
    if (raw.startsWith("#")) {
      comments.push(raw.replace(/^#\s?/, ""));
      continue;
    }
    const record = splitRecord(raw);
    if (header === null) {
      header = record;
    } else {
      if (record.length !== header.length) {
        throw new Error(
          `${path}: row with ${record.length} fields, expected ${header.length}`,
        );
      }
      rows.push(record);
    }
  }
  if (header === null) throw new Error(`${path}: no header row`);
  return { comments, header, rows, path };
}

export function readTable(path: string): Table {
  return parseCsv(readFileSync(path, "utf-8"), path);
}

/** The schema tag is the first comment, e.g. "arcdyn growth series v1". */
export function assertSchema(table: Table, kind: string, version = 1): void {
  const tag = table.comments[0] ?? "";
  const expected = `arcdyn ${kind} v${version}`;
  if (tag !== expected) {
    throw new Error(
      `${table.path}: schema mismatch: got "${tag}", expected "${expected}"`,
    );
  }
  if (table.rows.length === 0) {
    throw new Error(`${table.path}: no data rows`);
  }
}

export function column(table: Table, name: string): number[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new Error(
      `${table.path}: missing column "${name}" (have ${table.header.join(", ")})`,
    );
  }
  return table.rows.map((r) => {
    const v = Number(r[idx]);
    if (!Number.isFinite(v)) {
      throw new Error(`${table.path}: non-finite value in column "${name}"`);
    }
    return v;
  });
}
