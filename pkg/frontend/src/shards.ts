/** Readers for the pipeline's shard formats.
 *
 * Binary shards are length-prefixed records with u32 little-endian ids;
 * when a record's id block lands 4-byte aligned in the file buffer the
 * returned Int32Array is a zero-copy view over it, otherwise the ids are
 * copied. Treat returned arrays as read-only.
 */

export interface ShardRecord {
  sourceId: string;
  kind: string;
  ids: Int32Array;
  boundaryOffsets?: number[];
  padding?: number;
}

const MAGIC = "ARSH";
const VERSION = 1;

export function readBinaryShard(buf: Buffer): ShardRecord[] {
  if (buf.length < 8 || buf.toString("latin1", 0, 4) !== MAGIC) {
    throw new Error("not a binary shard (bad magic)");
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`unsupported shard version ${version}`);
  const records: ShardRecord[] = [];
  let pos = 8;
  while (pos < buf.length) {
    const metaLen = buf.readUInt32LE(pos);
    pos += 4;
    const meta = JSON.parse(buf.toString("utf-8", pos, pos + metaLen));
    pos += metaLen;
    const n = buf.readUInt32LE(pos);
    pos += 4;
    let ids: Int32Array;
    if ((buf.byteOffset + pos) % 4 === 0) {
      ids = new Int32Array(buf.buffer, buf.byteOffset + pos, n);
    } else {
      ids = new Int32Array(n);
      for (let k = 0; k < n; k++) ids[k] = buf.readUInt32LE(pos + 4 * k);
    }
    pos += 4 * n;
    records.push({
      sourceId: meta.source_id,
      kind: meta.kind,
      ids,
      boundaryOffsets: meta.boundary_offsets,
      padding: meta.padding ?? 0,
    });
  }
  return records;
}

export function readTextShard(text: string): ShardRecord[] {
  const records: ShardRecord[] = [];
  for (const line of text.split("\n")) {
    if (!line.trim()) continue;
    const obj = JSON.parse(line);
    records.push({
      sourceId: obj.source_id,
      kind: obj.kind,
      ids: Int32Array.from(obj.ids as number[]),
      boundaryOffsets: obj.boundary_offsets,
      padding: obj.padding ?? 0,
    });
  }
  return records;
}
