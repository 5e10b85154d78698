import { fetchPrototypes, fetchSkills, postPredict } from './api';
import { SessionController, filterSkills, galleryOrder } from './controller';
import { renderCatalogCount, renderGallery, renderPrediction, renderSelected } from './view';
import type { SkillCatalog } from './types';

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function init(): Promise<void> {
  const status = byId<HTMLElement>('catalog-status');
  const picker = byId<HTMLInputElement>('skill-input');
  const levelSelect = byId<HTMLSelectElement>('level-input');
  const suggestions = byId<HTMLElement>('suggestions');
  const selected = byId<HTMLElement>('selected-skills');
  const contextBox = byId<HTMLElement>('context-fields');
  const output = byId<HTMLElement>('prediction');
  const gallery = byId<HTMLElement>('gallery');
  const retry = byId<HTMLButtonElement>('retry');

  let catalog: SkillCatalog | null = null;

  const controller = new SessionController({
    predict: postPredict,
    onChange: (state) => {
      renderSelected(selected, state, (name) => controller.removeSkill(name));
      renderPrediction(output, state);
    },
  });

  function renderSuggestions(): void {
    suggestions.replaceChildren();
    if (!catalog) return;
    for (const name of filterSkills(catalog.skills, picker.value)) {
      const btn = document.createElement('button');
      btn.className = 'suggestion';
      btn.textContent = name;
      btn.addEventListener('click', () => {
        controller.addSkill(name, levelSelect.value || undefined);
        picker.value = '';
        renderSuggestions();
        picker.focus();
      });
      suggestions.appendChild(btn);
    }
  }

  function renderContextInputs(): void {
    contextBox.replaceChildren();
    if (!catalog) return;
    for (const field of catalog.context_schema) {
      const label = document.createElement('label');
      label.className = 'ctx-field';
      label.textContent = field.name;
      if (field.kind === 'categorical') {
        const select = document.createElement('select');
        select.appendChild(new Option('(unset)', ''));
        for (const value of field.values) select.appendChild(new Option(value, value));
        select.addEventListener('change', () =>
          controller.setContext(field.name, select.value || null),
        );
        label.appendChild(select);
      } else {
        const input = document.createElement('input');
        input.type = 'number';
        input.addEventListener('change', () =>
          controller.setContext(field.name, input.value === '' ? null : Number(input.value)),
        );
        label.appendChild(input);
      }
      contextBox.appendChild(label);
    }
    if (!catalog.context_schema.length) {
      const hint = document.createElement('span');
      hint.className = 'muted';
      hint.textContent = 'This model has no context fields.';
      contextBox.appendChild(hint);
    }
  }

  async function loadCatalog(): Promise<void> {
    status.textContent = 'Loading catalog…';
    retry.hidden = true;
    try {
      const [skills, prototypes] = await Promise.all([fetchSkills(), fetchPrototypes()]);
      catalog = skills;
      status.textContent = skills.skills.length
        ? renderCatalogCount(skills)
        : 'The service has an empty vocabulary - train a model first.';
      levelSelect.replaceChildren(new Option('(no level)', ''));
      for (const level of skills.levels) levelSelect.appendChild(new Option(level, level));
      levelSelect.hidden = skills.levels.length === 0;
      renderContextInputs();
      renderGallery(gallery, galleryOrder(prototypes));
    } catch (err) {
      status.textContent = `Could not reach the service: ${
        err instanceof Error ? err.message : String(err)
      }`;
      retry.hidden = false;
    }
  }

  picker.addEventListener('input', renderSuggestions);
  retry.addEventListener('click', () => void loadCatalog());
  await loadCatalog();
}

void init();
