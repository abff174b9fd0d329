// Pure state transitions. Every update returns a fresh UiState so the
// view stays a pure function of state.

import type { ChatResponse, TranscriptEntry, UiState } from "./types.js";

export function withConfigs(state: UiState, configIds: string[]): UiState {
  const selected =
    state.selectedConfigId && configIds.includes(state.selectedConfigId)
      ? state.selectedConfigId
      : configIds[0] ?? null;
  return { ...state, configIds, selectedConfigId: selected, banner: null };
}

export function withBanner(state: UiState, banner: string): UiState {
  return { ...state, banner };
}

export function selectConfig(state: UiState, configId: string): UiState {
  if (configId === state.selectedConfigId) return state;
  // switching apps starts a fresh conversation
  return {
    ...state,
    selectedConfigId: configId,
    sessionId: null,
    transcript: [],
    pending: false,
  };
}

function nextTurnIndex(state: UiState): number {
  const last = state.transcript[state.transcript.length - 1];
  return last ? last.turnIndex + 1 : 0;
}

export function beginTurn(state: UiState, text: string): UiState {
  if (state.pending) return state;
  const entry: TranscriptEntry = {
    role: "user",
    text,
    turnIndex: nextTurnIndex(state),
  };
  return { ...state, pending: true, transcript: [...state.transcript, entry] };
}

export function completeTurn(state: UiState, response: ChatResponse): UiState {
  const turnIndex = state.transcript[state.transcript.length - 1]?.turnIndex ?? 0;
  const botEntries: TranscriptEntry[] = response.messages.map((text) => ({
    role: "bot",
    text,
    turnIndex,
    trace: response.trace,
  }));
  return {
    ...state,
    pending: false,
    sessionId: response.session_id,
    transcript: [...state.transcript, ...botEntries],
  };
}

export function failTurn(state: UiState, message: string): UiState {
  const turnIndex = state.transcript[state.transcript.length - 1]?.turnIndex ?? 0;
  const entry: TranscriptEntry = {
    role: "bot",
    text: message,
    turnIndex,
    isError: true,
  };
  return { ...state, pending: false, transcript: [...state.transcript, entry] };
}

export function toggleTracePanel(state: UiState): UiState {
  return { ...state, tracePanelOpen: !state.tracePanelOpen };
}

// --- session persistence ----------------------------------------------------

const STORAGE_KEY = "railgate.session";

interface StoredSession {
  configId: string;
  sessionId: string;
}

export function persistSession(storage: Storage, state: UiState): void {
  if (state.selectedConfigId && state.sessionId) {
    const stored: StoredSession = {
      configId: state.selectedConfigId,
      sessionId: state.sessionId,
    };
    storage.setItem(STORAGE_KEY, JSON.stringify(stored));
  }
}

export function restoreSession(storage: Storage, state: UiState): UiState {
  const raw = storage.getItem(STORAGE_KEY);
  if (!raw) return state;
  try {
    const stored = JSON.parse(raw) as StoredSession;
    if (state.configIds.includes(stored.configId)) {
      return {
        ...state,
        selectedConfigId: stored.configId,
        sessionId: stored.sessionId,
      };
    }
  } catch {
    storage.removeItem(STORAGE_KEY);
  }
  return state;
}
