/** Unit tests for the API client and context document builder. */

import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, TransportError } from '../src/client';
import { buildContextDocument } from '../src/widget';

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('ApiClient', () => {
  it('sends the app token header when configured', async () => {
    let seenHeaders: Record<string, string> = {};
    const mock: typeof fetch = async (_input, init) => {
      seenHeaders = Object.fromEntries(Object.entries(init?.headers ?? {}));
      return jsonResponse(201, { sessionId: 's', predictions: [] });
    };
    const client = new ApiClient({
      serverBaseUrl: 'http://x/',
      appToken: 'secret',
      fetchImpl: mock,
    });
    await client.createSession('app', {
      events: [],
      eventTimestamps: [],
      feedbackInitiationTimestamp: '2025-05-09T16:23:00+02:00',
      appVersion: '1.0.0',
      deviceInfo: { model: 'web', osVersion: 'x', language: 'en' },
    });
    expect(seenHeaders['X-App-Token']).toBe('secret');
    expect(seenHeaders['Content-Type']).toBe('application/json');
  });

  it('maps API error bodies onto ApiError', async () => {
    const mock: typeof fetch = async () =>
      jsonResponse(410, { code: 'session_expired', message: 'gone', retryable: false });
    const client = new ApiClient({ serverBaseUrl: 'http://x', fetchImpl: mock });
    await expect(client.submitInput('s', 'freeText', 'v')).rejects.toMatchObject({
      code: 'session_expired',
      status: 410,
    });
  });

  it('synthesizes an error for non-JSON failures', async () => {
    const mock: typeof fetch = async () => new Response('boom', { status: 503 });
    const client = new ApiClient({ serverBaseUrl: 'http://x', fetchImpl: mock });
    const error = await client.submitInput('s', 'freeText', 'v').catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.retryable).toBe(true);
  });

  it('wraps network failures in TransportError', async () => {
    const mock: typeof fetch = async () => {
      throw new TypeError('fetch failed');
    };
    const client = new ApiClient({ serverBaseUrl: 'http://x', fetchImpl: mock });
    await expect(client.submitInput('s', 'freeText', 'v')).rejects.toBeInstanceOf(
      TransportError,
    );
  });
});

describe('buildContextDocument', () => {
  it('maps trigger events onto parallel arrays', () => {
    const document = buildContextDocument({
      events: [
        { name: 'a', timestamp: '2025-05-09T16:23:00+02:00' },
        { name: 'b', timestamp: '2025-05-09T16:24:00+02:00' },
      ],
      appVersion: '1.3.2',
      deviceInfo: { model: 'iPhone13,4', osVersion: 'iOS 17.5', language: 'de' },
    });
    expect(document.events).toEqual(['a', 'b']);
    expect(document.eventTimestamps).toEqual([
      '2025-05-09T16:23:00+02:00',
      '2025-05-09T16:24:00+02:00',
    ]);
    expect(document.appVersion).toBe('1.3.2');
    expect(document.deviceInfo.language).toBe('de');
    expect(document.feedbackInitiationTimestamp).toMatch(/Z$/);
  });

  it('fills device defaults from the browser environment', () => {
    const document = buildContextDocument({ appVersion: '2.0.0' });
    expect(document.events).toEqual([]);
    expect(document.deviceInfo.model).toBe('web');
    expect(document.deviceInfo.language).toBeTruthy();
  });
});
