/** Minimal fetch client for the v1 session endpoints. */

import type {
  ApiErrorBody,
  ContextDocument,
  CreateSessionResponse,
  InputResponse,
  WidgetConfig,
} from './types';

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly retryable: boolean;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
    this.retryable = body.retryable;
  }
}

/** Network-level failure (server unreachable, DNS, aborted). */
export class TransportError extends Error {}

async function parseError(response: Response): Promise<ApiError> {
  let body: ApiErrorBody = {
    code: 'transport',
    message: `unexpected status ${response.status}`,
    retryable: response.status >= 500,
  };
  try {
    const parsed = (await response.json()) as Partial<ApiErrorBody>;
    if (parsed && typeof parsed.code === 'string') {
      body = {
        code: parsed.code,
        message: parsed.message ?? body.message,
        retryable: Boolean(parsed.retryable),
      };
    }
  } catch {
    // keep the synthetic body
  }
  return new ApiError(response.status, body);
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly appToken?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(config: Pick<WidgetConfig, 'serverBaseUrl' | 'appToken' | 'fetchImpl'>) {
    this.baseUrl = config.serverBaseUrl.replace(/\/+$/, '');
    this.appToken = config.appToken;
    this.fetchImpl = config.fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.appToken) {
      headers['X-App-Token'] = this.appToken;
    }
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method: 'POST',
        headers,
        body: JSON.stringify(payload),
      });
    } catch (error) {
      throw new TransportError(error instanceof Error ? error.message : String(error));
    }
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  createSession(
    appId: string,
    context: ContextDocument,
    options: {
      screenshot?: { base64: string; mediaType: string };
      anonymous?: boolean;
    } = {},
  ): Promise<CreateSessionResponse> {
    return this.post<CreateSessionResponse>('/v1/sessions', {
      appId,
      context,
      screenshot: options.screenshot ?? null,
      anonymous: options.anonymous ?? false,
    });
  }

  submitInput(
    sessionId: string,
    kind: 'selectedOption' | 'freeText',
    value: string,
  ): Promise<InputResponse> {
    return this.post<InputResponse>(`/v1/sessions/${encodeURIComponent(sessionId)}/input`, {
      kind,
      value,
    });
  }
}
