/** Parser for the versioned vocabulary text format (`token<TAB>id`). */

export interface VocabConfig {
  segmentMs: number;
  timeStepMs: number;
  maxDurMs: number;
  drumVelocity: number;
}

export class Vocabulary {
  readonly tokens: string[];
  readonly ids: Map<string, number>;
  readonly config: VocabConfig;

  constructor(tokens: string[], config: VocabConfig) {
    this.tokens = tokens;
    this.config = config;
    this.ids = new Map(tokens.map((t, i) => [t, i]));
    if (this.ids.size !== tokens.length) {
      throw new Error("duplicate tokens in vocabulary");
    }
  }

  get size(): number {
    return this.tokens.length;
  }

  idOf(token: string): number {
    const id = this.ids.get(token);
    if (id === undefined) throw new Error(`token not in vocabulary: ${token}`);
    return id;
  }

  tokenOf(id: number): string {
    if (id < 0 || id >= this.tokens.length) {
      throw new Error(`id out of range: ${id}`);
    }
    return this.tokens[id];
  }

  static parse(text: string): Vocabulary {
    const lines = text.split("\n");
    if (!lines[0]?.startsWith("# ariapipe-vocabulary v1")) {
      throw new Error("missing or unsupported vocabulary version header");
    }
    const fields = new Map<string, number>();
    for (const kv of lines[1].replace(/^#\s*/, "").split(/\s+/)) {
      const [key, value] = kv.split("=");
      if (key && value !== undefined) fields.set(key, Number(value));
    }
    const config: VocabConfig = {
      segmentMs: fields.get("segment_ms") ?? 5000,
      timeStepMs: fields.get("time_step_ms") ?? 10,
      maxDurMs: fields.get("max_dur_ms") ?? 30000,
      drumVelocity: fields.get("drum_velocity") ?? 100,
    };
    const tokens: string[] = [];
    for (const line of lines.slice(2)) {
      if (!line) continue;
      const tab = line.lastIndexOf("\t");
      const token = line.slice(0, tab);
      const id = Number(line.slice(tab + 1));
      if (id !== tokens.length) {
        throw new Error(`non-contiguous vocabulary id at: ${line}`);
      }
      tokens.push(token);
    }
    return new Vocabulary(tokens, config);
  }
}
