import type { PredictRequest, PredictResponse, PrototypeMatch, SubsetEntry } from './types';

export interface SelectedSkill {
  name: string;
  level?: string;
}

export interface SessionState {
  skills: SelectedSkill[];
  context: Record<string, string | number>;
  response: PredictResponse | null;
  previousSalary: number | null;
  // delta vs the previous prediction, shown only when exactly one skill was
  // added or removed between the two responses
  delta: number | null;
  pending: boolean;
  error: string | null;
}

export interface ControllerOptions {
  predict: (request: PredictRequest) => Promise<PredictResponse>;
  onChange: (state: SessionState) => void;
  debounceMs?: number;
}

const DEBOUNCE_MS = 250;

/**
 * Session logic for the what-if loop, kept free of DOM concerns: debounced
 * prediction requests, monotone request sequencing (stale responses are
 * dropped), and delta tracking between consecutive server answers.
 */
export class SessionController {
  readonly state: SessionState = {
    skills: [],
    context: {},
    response: null,
    previousSalary: null,
    delta: null,
    pending: false,
    error: null,
  };

  private readonly predict: ControllerOptions['predict'];
  private readonly onChange: ControllerOptions['onChange'];
  private readonly debounceMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private sequence = 0;
  private editsSinceResponse = 0;
  private lastEditWasSkillToggle = false;

  constructor(options: ControllerOptions) {
    this.predict = options.predict;
    this.onChange = options.onChange;
    this.debounceMs = options.debounceMs ?? DEBOUNCE_MS;
  }

  addSkill(name: string, level?: string): void {
    if (this.state.skills.some((s) => s.name === name)) return; // unique set
    this.state.skills.push(level ? { name, level } : { name });
    this.recordEdit(true);
  }

  removeSkill(name: string): void {
    const before = this.state.skills.length;
    this.state.skills = this.state.skills.filter((s) => s.name !== name);
    if (this.state.skills.length === before) return;
    this.recordEdit(true);
  }

  setSkillLevel(name: string, level: string | undefined): void {
    const entry = this.state.skills.find((s) => s.name === name);
    if (!entry || entry.level === level) return;
    if (level) entry.level = level;
    else delete entry.level;
    this.recordEdit(false);
  }

  setContext(field: string, value: string | number | null): void {
    if (value === null || value === '') delete this.state.context[field];
    else this.state.context[field] = value;
    this.recordEdit(false);
  }

  private recordEdit(isSkillToggle: boolean): void {
    this.editsSinceResponse += 1;
    this.lastEditWasSkillToggle = isSkillToggle;
    this.schedule();
  }

  private schedule(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    if (this.state.skills.length === 0) {
      // nothing to predict; cancel in-flight renders and clear the answer
      this.sequence += 1;
      this.timer = null;
      this.state.response = null;
      this.state.previousSalary = null;
      this.state.delta = null;
      this.state.pending = false;
      this.state.error = null;
      this.emit();
      return;
    }
    this.state.pending = true;
    this.emit();
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.debounceMs);
  }

  private async fire(): Promise<void> {
    const id = ++this.sequence;
    const request: PredictRequest = {
      skills: this.state.skills.map((s) => ({ ...s })),
      context: { ...this.state.context },
    };
    const edits = this.editsSinceResponse;
    const soloSkillEdit = edits === 1 && this.lastEditWasSkillToggle;
    this.editsSinceResponse = 0;
    try {
      const response = await this.predict(request);
      if (id !== this.sequence) return; // a newer request superseded this one
      const prior = this.state.response?.salary ?? null;
      this.state.previousSalary = prior;
      this.state.delta = soloSkillEdit && prior !== null ? response.salary - prior : null;
      this.state.response = response;
      this.state.error = null;
    } catch (err) {
      if (id !== this.sequence) return;
      this.state.error = err instanceof Error ? err.message : String(err);
    }
    this.state.pending = false;
    this.emit();
  }

  private emit(): void {
    this.onChange(this.state);
  }
}

/** Prototype matches sorted by contribution (descending), ties by id. */
export function sortedMatches(prototypes: PrototypeMatch[]): PrototypeMatch[] {
  return [...prototypes].sort(
    (a, b) => b.contribution - a.contribution || a.id - b.id,
  );
}

/** Chips for one view: only the skills the hard mask actually selected. */
export function visibleChips(view: SubsetEntry[]): SubsetEntry[] {
  return view.filter((entry) => entry.mask > 0);
}

/** Rendered total of the contribution bars; must match the displayed salary. */
export function contributionTotal(prototypes: PrototypeMatch[]): number {
  return prototypes.reduce((acc, p) => acc + p.contribution, 0);
}

/** Gallery order: mean salary weight descending, unknown weights last. */
export function galleryOrder<T extends { id: number; mean_salary_weight: number | null }>(
  prototypes: T[],
): T[] {
  return [...prototypes].sort((a, b) => {
    const wa = a.mean_salary_weight ?? Number.NEGATIVE_INFINITY;
    const wb = b.mean_salary_weight ?? Number.NEGATIVE_INFINITY;
    return wb - wa || a.id - b.id;
  });
}

/** Case-insensitive substring match for the typeahead picker. */
export function filterSkills(all: string[], query: string, limit = 12): string[] {
  const q = query.trim().toLowerCase();
  if (!q) return [];
  return all.filter((s) => s.toLowerCase().includes(q)).slice(0, limit);
}
