// UI state machine, kept free of DOM so it can be tested headlessly.
//
// Invariants:
//  - exactly one of `current` / exhausted is active;
//  - while a request is in flight no decision may be sent (choose/skip are
//    no-ops), so a displayed item can never be submitted twice;
//  - a 409 from the service means someone else already labeled the item:
//    advance silently, no error surfaced.

import { Api, ProgressView, QueueItemView } from './api.js';

export interface UiState {
  current: QueueItemView | null;
  exhausted: boolean;
  labelSpace: string[];
  progress: ProgressView | null;
  pendingRequest: boolean;
  lastError: string | null;
}

export type Listener = (state: UiState) => void;

export function initialState(): UiState {
  return {
    current: null,
    exhausted: false,
    labelSpace: [],
    progress: null,
    pendingRequest: false,
    lastError: null,
  };
}

export class Controller {
  state: UiState = initialState();

  constructor(private api: Api, private listener: Listener = () => {}) {}

  private emit(): void {
    this.listener(this.state);
  }

  /** Fetch the label space once, then the first item. */
  async start(): Promise<void> {
    try {
      this.state.labelSpace = await this.api.labelSpace();
    } catch (e) {
      this.state.lastError = String(e);
      this.emit();
      return;
    }
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.state.pendingRequest = true;
    this.emit();
    try {
      const [next, progress] = await Promise.all([this.api.next(), this.api.progress()]);
      this.state.progress = progress;
      if (next.kind === 'exhausted') {
        this.state.current = null;
        this.state.exhausted = true;
      } else {
        this.state.current = next.item;
        this.state.exhausted = false;
      }
      this.state.lastError = null;
    } catch (e) {
      // network/5xx: keep whatever was on screen, show a retry banner
      this.state.lastError = String(e);
    } finally {
      this.state.pendingRequest = false;
      this.emit();
    }
  }

  async choose(label: string): Promise<void> {
    await this.decide((id) => this.api.label(id, label));
  }

  async skip(): Promise<void> {
    await this.decide((id) => this.api.skip(id));
  }

  private async decide(send: (id: string) => Promise<'ok' | 'conflict' | 'invalid'>) {
    if (this.state.pendingRequest || !this.state.current) return;
    const id = this.state.current.id;
    this.state.pendingRequest = true;
    this.emit();
    let result: 'ok' | 'conflict' | 'invalid';
    try {
      result = await send(id);
    } catch (e) {
      this.state.pendingRequest = false;
      this.state.lastError = String(e);
      this.emit();
      return;
    }
    this.state.pendingRequest = false;
    if (result === 'invalid') {
      this.state.lastError = 'the service rejected that label';
      this.emit();
      return;
    }
    // 'ok' advances; 'conflict' (someone else got there first) advances
    // silently with no error dialog.
    await this.loadNext();
  }

  /** Map a key press to an action: digits 1..K choose a class, `s` skips. */
  keyAction(key: string): { kind: 'choose'; label: string } | { kind: 'skip' } | null {
    if (key === 's') return { kind: 'skip' };
    const n = Number.parseInt(key, 10);
    if (Number.isInteger(n) && n >= 1 && n <= this.state.labelSpace.length) {
      return { kind: 'choose', label: this.state.labelSpace[n - 1] };
    }
    return null;
  }

  async handleKey(key: string): Promise<void> {
    if (!this.state.current || this.state.pendingRequest) return;
    const action = this.keyAction(key);
    if (!action) return;
    if (action.kind === 'skip') await this.skip();
    else await this.choose(action.label);
  }
}
