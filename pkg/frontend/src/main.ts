import { HttpApi } from './api.js';
import { render } from './render.js';
import { Controller } from './state.js';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app container');

const controller = new Controller(new HttpApi(), (state) => {
  render(root, state, {
    onChoose: (label) => void controller.choose(label),
    onSkip: () => void controller.skip(),
    onRetry: () => void controller.loadNext(),
  });
});

document.addEventListener('keydown', (e) => {
  const t = (e.target as HTMLElement | null)?.tagName;
  if (t === 'INPUT' || t === 'SELECT' || t === 'TEXTAREA') return;
  if (e.metaKey || e.ctrlKey || e.altKey) return;
  void controller.handleKey(e.key);
});

void controller.start();
