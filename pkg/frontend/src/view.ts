import type { SessionState } from './controller';
import { contributionTotal, sortedMatches, visibleChips } from './controller';
import type { PrototypeExport, SkillCatalog } from './types';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(x: number): string {
  return x.toFixed(2);
}

export function renderCatalogCount(catalog: SkillCatalog): string {
  return `${catalog.skills.length} skills available`;
}

export function renderGallery(container: HTMLElement, prototypes: PrototypeExport[]): void {
  container.replaceChildren();
  for (const proto of prototypes) {
    const card = el('div', 'proto-card');
    const weight =
      proto.mean_salary_weight === null ? 'n/a' : fmt(proto.mean_salary_weight);
    card.appendChild(el('div', 'proto-title', `Prototype ${proto.id} · mean weight ${weight}`));
    const chips = el('div', 'chip-row');
    for (const skill of proto.skills) {
      chips.appendChild(el('span', 'chip', `${skill.name} (${skill.gamma_lv.toFixed(2)})`));
    }
    if (!proto.skills.length) chips.appendChild(el('span', 'muted', 'empty prototype'));
    card.appendChild(chips);
    container.appendChild(card);
  }
}

export function renderSelected(
  container: HTMLElement,
  state: SessionState,
  onRemove: (name: string) => void,
): void {
  container.replaceChildren();
  if (!state.skills.length) {
    container.appendChild(el('span', 'muted', 'No skills selected yet - pick some above.'));
    return;
  }
  for (const skill of state.skills) {
    const chip = el('span', 'chip selected-chip');
    chip.appendChild(
      el('span', undefined, skill.level ? `${skill.name} · ${skill.level}` : skill.name),
    );
    const remove = el('button', 'chip-remove', '×');
    remove.addEventListener('click', () => onRemove(skill.name));
    chip.appendChild(remove);
    container.appendChild(chip);
  }
}

export function renderPrediction(container: HTMLElement, state: SessionState): void {
  container.replaceChildren();
  if (state.error) {
    container.appendChild(el('div', 'error-box', state.error));
    return;
  }
  if (!state.response) {
    container.appendChild(el('div', 'muted', 'Add skills to see a prediction.'));
    return;
  }
  const salaryRow = el('div', 'salary-row');
  salaryRow.appendChild(el('span', 'salary-figure', fmt(state.response.salary)));
  if (state.pending) salaryRow.appendChild(el('span', 'pending-dot', '…'));
  if (state.delta !== null) {
    const cls = state.delta >= 0 ? 'delta up' : 'delta down';
    const sign = state.delta >= 0 ? '+' : '';
    salaryRow.appendChild(el('span', cls, `${sign}${fmt(state.delta)} vs previous`));
  }
  container.appendChild(salaryRow);

  const explanation = state.response.explanation;
  const views = el('div', 'views');
  explanation.views.forEach((view, h) => {
    const box = el('div', 'view-box');
    box.appendChild(el('div', 'view-title', `Subset ${h + 1}`));
    const chips = el('div', 'chip-row');
    const selected = visibleChips(view);
    for (const entry of selected) {
      chips.appendChild(el('span', 'chip', `${entry.skill} α=${entry.alpha.toFixed(2)}`));
    }
    if (!selected.length) chips.appendChild(el('span', 'muted', 'empty selection'));
    box.appendChild(chips);
    views.appendChild(box);
  });
  container.appendChild(views);

  const matches = sortedMatches(explanation.prototypes);
  const maxContribution = Math.max(...matches.map((m) => Math.abs(m.contribution)), 1e-9);
  const list = el('div', 'match-list');
  list.appendChild(
    el('div', 'view-title', `Prototype contributions (total ${fmt(contributionTotal(matches))})`),
  );
  for (const match of matches) {
    const row = el('div', 'match-row');
    row.appendChild(el('span', 'match-label', `#${match.id}`));
    const bar = el('div', 'bar-track');
    const fill = el('div', 'bar-fill');
    fill.style.width = `${(100 * Math.abs(match.contribution)) / maxContribution}%`;
    bar.appendChild(fill);
    row.appendChild(bar);
    row.appendChild(
      el(
        'span',
        'match-numbers',
        `${fmt(match.contribution)} (w=${match.weight.toFixed(3)}, γ=${fmt(match.salary_weight)})`,
      ),
    );
    list.appendChild(row);
  }
  container.appendChild(list);
}
