// DOM rendering: a pure function of UiState into a container element.
// References are shown as badges, never pre-selected as answers.

import { UiState } from './state.js';

export interface Handlers {
  onChoose(label: string): void;
  onSkip(): void;
  onRetry(): void;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(root: HTMLElement, state: UiState, handlers: Handlers): void {
  root.textContent = '';

  if (state.lastError) {
    const banner = el('div', 'error-banner');
    banner.appendChild(el('span', 'error-text', state.lastError));
    const retry = el('button', 'retry-button', 'retry') as HTMLButtonElement;
    retry.addEventListener('click', handlers.onRetry);
    banner.appendChild(retry);
    root.appendChild(banner);
  }

  if (state.progress) {
    const p = state.progress;
    root.appendChild(el('div', 'progress',
      `${p.done} done · ${p.skipped} skipped · ${p.pending} to go`));
  }

  if (state.exhausted) {
    const done = el('div', 'done-screen');
    done.appendChild(el('h2', 'done-title', 'queue complete'));
    if (state.progress) {
      done.appendChild(el('p', 'done-summary',
        `${state.progress.done} labeled, ${state.progress.skipped} skipped`));
    }
    root.appendChild(done);
    return;
  }

  if (!state.current) return;
  const item = state.current;

  const card = el('div', 'item-card');
  card.appendChild(el('div', 'item-position', `item ${item.position} of ${item.total}`));
  card.appendChild(el('p', 'item-text', item.text));

  const refs = el('div', 'references');
  refs.appendChild(el('span', 'badge badge-previous',
    `previous: ${item.references.prev_label}`));
  refs.appendChild(el('span', 'badge badge-suggested',
    `model suggests: ${item.references.pred_label} (${item.references.pred_prob.toFixed(3)})`));
  card.appendChild(refs);

  const buttons = el('div', 'label-buttons');
  state.labelSpace.forEach((label, i) => {
    const b = el('button', 'label-button', `${i + 1} · ${label}`) as HTMLButtonElement;
    b.disabled = state.pendingRequest;
    b.dataset.label = label;
    b.addEventListener('click', () => handlers.onChoose(label));
    buttons.appendChild(b);
  });
  const skip = el('button', 'skip-button', 's · skip') as HTMLButtonElement;
  skip.disabled = state.pendingRequest;
  skip.addEventListener('click', handlers.onSkip);
  buttons.appendChild(skip);
  card.appendChild(buttons);

  root.appendChild(card);
}
