// Payload shapes of the inference service. The UI renders these fields
// verbatim; it never recomputes model quantities locally.

export interface SkillCatalog {
  skills: string[];
  levels: string[];
  context_schema: ContextFieldDesc[];
}

export interface ContextFieldDesc {
  name: string;
  kind: 'categorical' | 'numeric';
  values: string[];
}

export interface PrototypeSkill {
  name: string;
  gamma_lv: number;
  delta: number;
}

export interface PrototypeExport {
  id: number;
  skills: PrototypeSkill[];
  mean_salary_weight: number | null;
}

export interface SkillRef {
  name: string;
  level?: string;
}

export interface PredictRequest {
  skills: SkillRef[];
  context: Record<string, string | number>;
}

export interface SubsetEntry {
  skill: string;
  mask: number;
  alpha: number;
}

export interface PrototypeMatch {
  id: number;
  similarity: number;
  weight: number;
  salary_weight: number;
  contribution: number;
}

export interface Explanation {
  skills: string[];
  context: Record<string, string | number>;
  views: SubsetEntry[][];
  prototypes: PrototypeMatch[];
  salary: number;
}

export interface PredictResponse {
  salary: number;
  explanation: Explanation;
}
