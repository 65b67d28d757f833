import { describe, expect, it } from 'vitest';

import type { Api, DecisionResult, NextResult, ProgressView } from '../src/api';
import { Controller } from '../src/state';

function item(id: string, position: number, total: number) {
  return {
    id,
    text: `text of ${id}`,
    references: { prev_label: 'pos', pred_label: 'neg', pred_prob: 0.876 },
    position,
    total,
  };
}

/** In-memory queue with the service's first-write-wins semantics. */
class FakeApi implements Api {
  pendingIds: string[];
  done = new Map<string, string>();
  skipped = new Set<string>();
  labelCalls = 0;
  classes = ['pos', 'neg', 'other'];
  failNext = false;
  rejectLabels = false;

  constructor(ids: string[]) {
    this.pendingIds = [...ids];
  }

  async next(): Promise<NextResult> {
    if (this.failNext) throw new Error('Error: service unreachable');
    const open = this.pendingIds.filter((id) => !this.done.has(id) && !this.skipped.has(id));
    const revisit = this.pendingIds.filter((id) => this.skipped.has(id));
    const order = [...open, ...revisit];
    if (order.length === 0) return { kind: 'exhausted' };
    const total = this.pendingIds.length;
    return { kind: 'item', item: item(order[0], total - order.length + 1, total) };
  }

  async progress(): Promise<ProgressView> {
    const per: Record<string, number> = {};
    for (const c of this.classes) per[c] = 0;
    for (const label of this.done.values()) per[label] += 1;
    return {
      total: this.pendingIds.length,
      done: this.done.size,
      skipped: this.skipped.size,
      pending: this.pendingIds.length - this.done.size - this.skipped.size,
      per_class: per,
    };
  }

  async labelSpace(): Promise<string[]> {
    return this.classes;
  }

  async label(id: string, label: string): Promise<DecisionResult> {
    this.labelCalls += 1;
    if (this.rejectLabels) return 'invalid';
    if (this.done.has(id)) return 'conflict';
    this.done.set(id, label);
    this.skipped.delete(id);
    return 'ok';
  }

  async skip(id: string): Promise<DecisionResult> {
    if (this.done.has(id)) return 'conflict';
    this.skipped.add(id);
    return 'ok';
  }
}

describe('controller lifecycle', () => {
  it('start loads label space, first item, and progress', async () => {
    const api = new FakeApi(['a', 'b']);
    const c = new Controller(api);
    await c.start();
    expect(c.state.labelSpace).toEqual(['pos', 'neg', 'other']);
    expect(c.state.current?.id).toBe('a');
    expect(c.state.progress?.pending).toBe(2);
    expect(c.state.exhausted).toBe(false);
    expect(c.state.lastError).toBeNull();
  });

  it('exhausted queue shows the completion state with counts', async () => {
    const api = new FakeApi(['a']);
    const c = new Controller(api);
    await c.start();
    await c.choose('neg');
    expect(c.state.exhausted).toBe(true);
    expect(c.state.current).toBeNull();
    expect(c.state.progress).toMatchObject({ done: 1, skipped: 0, pending: 0 });
  });

  it('network failure sets an error and keeps prior state', async () => {
    const api = new FakeApi(['a', 'b']);
    const c = new Controller(api);
    await c.start();
    api.failNext = true;
    await c.loadNext();
    expect(c.state.lastError).toContain('unreachable');
    expect(c.state.current?.id).toBe('a'); // nothing lost
    api.failNext = false;
    await c.loadNext(); // retry clears the banner
    expect(c.state.lastError).toBeNull();
  });
});

describe('decisions', () => {
  it('choose advances and increments done', async () => {
    const api = new FakeApi(['a', 'b', 'c']);
    const c = new Controller(api);
    await c.start();
    await c.choose('other');
    expect(api.done.get('a')).toBe('other');
    expect(c.state.current?.id).toBe('b');
    expect(c.state.progress?.done).toBe(1);
  });

  it('confirming the previous label is a valid decision', async () => {
    const api = new FakeApi(['a']);
    const c = new Controller(api);
    await c.start();
    await c.choose('pos'); // equals references.prev_label
    expect(api.done.get('a')).toBe('pos');
  });

  it('skip advances and the item comes back after pending items', async () => {
    const api = new FakeApi(['a', 'b']);
    const c = new Controller(api);
    await c.start();
    await c.skip();
    expect(c.state.current?.id).toBe('b');
    await c.choose('neg');
    expect(c.state.current?.id).toBe('a'); // skipped item revisited
  });

  it('409 conflict advances silently with no error', async () => {
    const api = new FakeApi(['a', 'b']);
    api.done.set('a', 'neg'); // someone else got there first
    const c = new Controller(api);
    await c.start();
    // FakeApi.next still serves remaining items; force the stale view:
    c.state.current = item('a', 1, 2);
    await c.choose('pos');
    expect(c.state.lastError).toBeNull();
    expect(api.done.get('a')).toBe('neg'); // first write stands
    expect(c.state.current?.id).toBe('b');
  });

  it('422 shows a validation error and stays on the item', async () => {
    const api = new FakeApi(['a']);
    api.rejectLabels = true;
    const c = new Controller(api);
    await c.start();
    await c.choose('pos');
    expect(c.state.lastError).toContain('rejected');
    expect(c.state.current?.id).toBe('a');
  });

  it('in-flight guard: one displayed item never produces two submissions', async () => {
    const api = new FakeApi(['a', 'b']);
    const c = new Controller(api);
    await c.start();
    await Promise.all([c.choose('pos'), c.choose('neg'), c.skip()]);
    expect(api.labelCalls).toBe(1);
    expect(api.done.size + api.skipped.size).toBe(1);
  });
});

describe('keyboard mapping', () => {
  it('digits 1..K map to the rendered class order, s maps to skip', async () => {
    const api = new FakeApi(['a']);
    const c = new Controller(api);
    await c.start();
    expect(c.keyAction('1')).toEqual({ kind: 'choose', label: 'pos' });
    expect(c.keyAction('2')).toEqual({ kind: 'choose', label: 'neg' });
    expect(c.keyAction('3')).toEqual({ kind: 'choose', label: 'other' });
    expect(c.keyAction('s')).toEqual({ kind: 'skip' });
  });

  it('out-of-range and unrelated keys do nothing', async () => {
    const api = new FakeApi(['a']);
    const c = new Controller(api);
    await c.start();
    for (const key of ['0', '4', '9', 'x', 'Enter', ' ', '-1']) {
      expect(c.keyAction(key)).toBeNull();
    }
  });

  it('keys are ignored while a request is in flight', async () => {
    const api = new FakeApi(['a', 'b']);
    const c = new Controller(api);
    await c.start();
    await Promise.all([c.handleKey('1'), c.handleKey('2'), c.handleKey('s')]);
    expect(api.labelCalls).toBe(1);
  });
});
