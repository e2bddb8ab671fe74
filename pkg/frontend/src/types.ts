/** Wire types for the feedaide v1 API and widget configuration. */

export interface DeviceInfo {
  model: string;
  osVersion: string;
  language: string;
}

export interface TriggerEvent {
  name: string;
  /** ISO-8601 timestamp with offset; defaults to now when omitted. */
  timestamp?: string;
}

/** Context the host app hands over when the user triggers feedback. */
export interface TriggerContext {
  events?: TriggerEvent[];
  appVersion: string;
  deviceInfo?: Partial<DeviceInfo>;
  screenshot?: { base64: string; mediaType: 'image/png' | 'image/jpeg' };
}

export interface ContextDocument {
  events: string[];
  eventTimestamps: string[];
  feedbackInitiationTimestamp: string;
  appVersion: string;
  deviceInfo: DeviceInfo;
}

export interface CreateSessionResponse {
  sessionId: string;
  predictions: string[];
}

export interface QuestionResponse {
  question: string;
  options: string[];
}

export interface ReportResponse {
  report: Record<string, unknown>;
}

export type InputResponse = QuestionResponse | ReportResponse;

export interface ApiErrorBody {
  code: string;
  message: string;
  retryable: boolean;
}

export interface ThemeTokens {
  accentColor?: string;
  fontFamily?: string;
}

export interface WidgetConfig {
  serverBaseUrl: string;
  appId: string;
  appToken?: string;
  /** Overrides the browser language for widget chrome strings. */
  locale?: string;
  theme?: ThemeTokens;
  /** Injectable for tests; defaults to globalThis.fetch. */
  fetchImpl?: typeof fetch;
}

export const FREE_TEXT_MAX_CHARS = 2000;
