// Wire types, mirroring the chat service's JSON API.

export interface RailVerdict {
  rail: "fact_check" | "hallucination" | "jailbreak" | "output_moderation";
  allowed: boolean;
  raw_judgment: string;
  detail?: string | null;
}

export interface LlmCall {
  kind: string;
  latency_ms: number;
}

export interface TurnTrace {
  user_intent: string | null;
  intent_matched: boolean;
  decision: string | null; // flow name or "llm_fallback"
  rail_verdicts: RailVerdict[];
  llm_calls: LlmCall[];
  events: Array<Record<string, unknown>>;
  error?: string | null;
}

export interface ChatResponse {
  session_id: string;
  messages: string[];
  trace?: TurnTrace;
}

export interface TranscriptEntry {
  role: "user" | "bot";
  text: string;
  turnIndex: number;
  trace?: TurnTrace;
  isError?: boolean;
}

export interface UiState {
  configIds: string[];
  selectedConfigId: string | null;
  sessionId: string | null;
  transcript: TranscriptEntry[];
  pending: boolean;
  tracePanelOpen: boolean;
  banner: string | null; // network failure notice
}

export function initialState(): UiState {
  return {
    configIds: [],
    selectedConfigId: null,
    sessionId: null,
    transcript: [],
    pending: false,
    tracePanelOpen: false,
    banner: null,
  };
}
