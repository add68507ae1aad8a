/** Shared types mirroring the agent's local API documents. */

export type FieldKind =
  | "text"
  | "integer"
  | "decimal"
  | "boolean"
  | "timestamp"
  | "enum_choice"
  | "barcode";

export interface Constraints {
  min?: number;
  max?: number;
  regex?: string;
  choices?: string[];
}

export interface FieldSpec {
  name: string;
  label: string;
  kind: string; // validated against FieldKind at view-model build time
  required?: boolean;
  constraints?: Constraints;
}

export interface FormTemplate {
  template_id: string;
  version: number;
  fields: FieldSpec[];
  file_id_pattern: string;
  expected_file_kinds: string[];
}

export interface ValidationError {
  field: string;
  code: string;
  message: string;
}

export interface Protocol {
  protocol_id: string;
  study_id: string;
  site_id: string;
  instrument_id: string;
  sampling_mode: string;
  template: { template_id: string; version: number };
  link_method: string;
}

export interface RecordRow {
  record_id: string;
  values: Record<string, unknown>;
  collected_at: string;
  sync_state: string;
  linkage_state: string;
  expected_file_id: string;
  linkages: { artifact_id?: string; link_method?: string }[];
}

export interface SessionStatus {
  session_id: string;
  protocol_id: string;
  active: boolean;
  records: RecordRow[];
  unresolved_linkages: string[];
  journal_depth: number;
  connectivity: string;
  cache_version: number;
}
