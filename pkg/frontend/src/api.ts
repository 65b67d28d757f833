// Typed client for the relabel service JSON API. This is the only network
// surface the UI has; in particular there is no way to ask for clean labels.

export interface QueueItemView {
  id: string;
  text: string;
  references: { prev_label: string; pred_label: string; pred_prob: number };
  position: number;
  total: number;
}

export interface ProgressView {
  total: number;
  done: number;
  skipped: number;
  pending: number;
  per_class: Record<string, number>;
}

export type NextResult = { kind: 'item'; item: QueueItemView } | { kind: 'exhausted' };

export type DecisionResult = 'ok' | 'conflict' | 'invalid';

export interface Api {
  next(): Promise<NextResult>;
  progress(): Promise<ProgressView>;
  labelSpace(): Promise<string[]>;
  label(id: string, label: string): Promise<DecisionResult>;
  skip(id: string): Promise<DecisionResult>;
}

export class HttpApi implements Api {
  constructor(private base: string = '') {}

  async next(): Promise<NextResult> {
    const r = await fetch(`${this.base}/api/queue/next`);
    if (r.status === 204) return { kind: 'exhausted' };
    if (!r.ok) throw new Error(`next failed: ${r.status}`);
    return { kind: 'item', item: (await r.json()) as QueueItemView };
  }

  async progress(): Promise<ProgressView> {
    const r = await fetch(`${this.base}/api/progress`);
    if (!r.ok) throw new Error(`progress failed: ${r.status}`);
    return (await r.json()) as ProgressView;
  }

  async labelSpace(): Promise<string[]> {
    const r = await fetch(`${this.base}/api/labelspace`);
    if (!r.ok) throw new Error(`labelspace failed: ${r.status}`);
    return ((await r.json()) as { classes: string[] }).classes;
  }

  async label(id: string, label: string): Promise<DecisionResult> {
    const r = await fetch(`${this.base}/api/items/${encodeURIComponent(id)}/label`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ label }),
    });
    return this.decode(r);
  }

  async skip(id: string): Promise<DecisionResult> {
    const r = await fetch(`${this.base}/api/items/${encodeURIComponent(id)}/skip`, {
      method: 'POST',
    });
    return this.decode(r);
  }

  private decode(r: Response): DecisionResult {
    if (r.ok) return 'ok';
    if (r.status === 409) return 'conflict';
    if (r.status === 422) return 'invalid';
    throw new Error(`decision failed: ${r.status}`);
  }
}
