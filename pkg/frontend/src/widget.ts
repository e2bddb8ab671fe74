/** Embeddable feedback dialog.
 *
 * Screen sequence for a successful flow: predictions -> question -> question
 * -> confirmation. Every option button renders a string received from the
 * server verbatim; the widget never invents options. A loading overlay is
 * shown while any request is in flight (model responses can take a while),
 * and the submit controls are disabled so a session only ever has one
 * in-flight input.
 */

import { ApiClient, ApiError, TransportError } from './client';
import { resolveChrome, type ChromeStrings } from './i18n';
import {
  FREE_TEXT_MAX_CHARS,
  type ContextDocument,
  type DeviceInfo,
  type InputResponse,
  type QuestionResponse,
  type TriggerContext,
  type WidgetConfig,
} from './types';

export type ScreenName = 'predictions' | 'question' | 'confirmation' | 'error' | 'restart';

interface WidgetState {
  screen: ScreenName;
  loading: boolean;
  sessionId: string | null;
  prompt: string;
  options: string[];
  questionsAnswered: number;
  errorCode: string | null;
  inlineError: string | null;
  anonymous: boolean;
}

const STYLE_ID = 'feedaide-widget-style';

const CSS = `
.feedaide-overlay { position: fixed; inset: 0; background: rgba(0,0,0,0.45);
  display: flex; align-items: center; justify-content: center; z-index: 99999; }
.feedaide-dialog { background: #fff; color: #111; border-radius: 12px; width: min(420px, 92vw);
  max-height: 86vh; overflow: auto; padding: 20px; position: relative;
  font-family: var(--feedaide-font, system-ui, sans-serif); }
.feedaide-title { font-size: 1.1rem; font-weight: 600; margin: 0 24px 12px 0; }
.feedaide-option { display: block; width: 100%; margin: 8px 0; padding: 10px 12px;
  border: 1px solid var(--feedaide-accent, #2563eb); border-radius: 8px; background: #fff;
  color: var(--feedaide-accent, #2563eb); text-align: left; cursor: pointer; font-size: 0.95rem; }
.feedaide-option:disabled { opacity: 0.5; cursor: default; }
.feedaide-freetext { width: 100%; box-sizing: border-box; min-height: 64px; margin-top: 10px;
  padding: 8px; border: 1px solid #cbd5e1; border-radius: 8px; font-size: 0.95rem; }
.feedaide-send { margin-top: 10px; padding: 10px 16px; border: 0; border-radius: 8px;
  background: var(--feedaide-accent, #2563eb); color: #fff; cursor: pointer; }
.feedaide-send:disabled { opacity: 0.5; cursor: default; }
.feedaide-close { position: absolute; top: 10px; right: 12px; border: 0; background: none;
  font-size: 1.2rem; cursor: pointer; color: #555; }
.feedaide-anonymous { display: flex; gap: 8px; align-items: center; margin-top: 12px;
  font-size: 0.85rem; color: #444; }
.feedaide-loading { position: absolute; inset: 0; background: rgba(255,255,255,0.85);
  display: flex; align-items: center; justify-content: center; border-radius: 12px;
  font-size: 0.95rem; color: #333; }
.feedaide-inline-error { color: #b91c1c; font-size: 0.85rem; margin-top: 8px; }
.feedaide-error-code { color: #666; font-size: 0.8rem; margin-top: 6px; }
`;

function ensureStyles(theme?: WidgetConfig['theme']): void {
  if (!document.getElementById(STYLE_ID)) {
    const style = document.createElement('style');
    style.id = STYLE_ID;
    style.textContent = CSS;
    document.head.appendChild(style);
  }
  const root = document.documentElement;
  if (theme?.accentColor) {
    root.style.setProperty('--feedaide-accent', theme.accentColor);
  }
  if (theme?.fontFamily) {
    root.style.setProperty('--feedaide-font', theme.fontFamily);
  }
}

function defaultDeviceInfo(): DeviceInfo {
  const language = (globalThis.navigator?.language ?? 'en').toLowerCase();
  return {
    model: 'web',
    osVersion: globalThis.navigator?.userAgent?.slice(0, 60) ?? 'unknown',
    language,
  };
}

function isoNow(): string {
  return new Date().toISOString();
}

export function buildContextDocument(trigger: TriggerContext): ContextDocument {
  const device = { ...defaultDeviceInfo(), ...trigger.deviceInfo };
  const events = trigger.events ?? [];
  return {
    events: events.map((event) => event.name),
    eventTimestamps: events.map((event) => event.timestamp ?? isoNow()),
    feedbackInitiationTimestamp: isoNow(),
    appVersion: trigger.appVersion,
    deviceInfo: device,
  };
}

export class FeedbackWidget {
  readonly config: WidgetConfig;
  /** Content screens rendered so far, in order; test instrumentation. */
  readonly screenHistory: ScreenName[] = [];

  private readonly client: ApiClient;
  private readonly chrome: ChromeStrings;
  private root: HTMLElement | null = null;
  private state: WidgetState;
  private lastTrigger: TriggerContext | null = null;
  private retryAction: (() => Promise<void>) | null = null;
  /** Sticky across sessions: the current session starts before the first
   * screen renders, so the toggle can only apply from the next start. */
  private anonymousPreference = false;

  constructor(config: WidgetConfig) {
    if (!config.serverBaseUrl || !config.appId) {
      throw new Error('feedaide widget needs serverBaseUrl and appId');
    }
    this.config = config;
    this.client = new ApiClient(config);
    this.chrome = resolveChrome(config.locale);
    this.state = this.initialState();
  }

  private initialState(): WidgetState {
    return {
      screen: 'predictions',
      loading: false,
      sessionId: null,
      prompt: '',
      options: [],
      questionsAnswered: 0,
      errorCode: null,
      inlineError: null,
      anonymous: this.anonymousPreference,
    };
  }

  get element(): HTMLElement | null {
    return this.root;
  }

  get currentScreen(): ScreenName {
    return this.state.screen;
  }

  /** Open the dialog and start a session from the host-supplied context. */
  async open(trigger: TriggerContext): Promise<void> {
    this.lastTrigger = trigger;
    this.state = this.initialState();
    this.mount();
    await this.startSession();
  }

  close(): void {
    this.root?.remove();
    this.root = null;
  }

  private mount(): void {
    ensureStyles(this.config.theme);
    if (!this.root) {
      this.root = document.createElement('div');
      this.root.className = 'feedaide-overlay';
      document.body.appendChild(this.root);
    }
    this.render();
  }

  private async startSession(): Promise<void> {
    const trigger = this.lastTrigger;
    if (!trigger) {
      return;
    }
    this.retryAction = () => this.startSession();
    this.setState({ loading: true, inlineError: null });
    try {
      const response = await this.client.createSession(
        this.config.appId,
        buildContextDocument(trigger),
        { screenshot: trigger.screenshot, anonymous: this.state.anonymous },
      );
      this.setState({
        loading: false,
        screen: 'predictions',
        sessionId: response.sessionId,
        prompt: this.chrome.title,
        options: response.predictions,
      });
      this.screenHistory.push('predictions');
    } catch (error) {
      this.handleFailure(error);
    }
  }

  private async submit(kind: 'selectedOption' | 'freeText', rawValue: string): Promise<void> {
    if (this.state.loading || !this.state.sessionId) {
      return;
    }
    let value = rawValue;
    if (kind === 'freeText') {
      value = value.trim().slice(0, FREE_TEXT_MAX_CHARS);
      if (!value) {
        this.setState({ inlineError: this.chrome.emptyInput });
        return;
      }
    }
    this.retryAction = () => this.submit(kind, value);
    this.setState({ loading: true, inlineError: null });
    try {
      const response = await this.client.submitInput(this.state.sessionId, kind, value);
      this.applyStep(response);
    } catch (error) {
      this.handleFailure(error);
    }
  }

  private applyStep(response: InputResponse): void {
    if ('report' in response) {
      this.setState({ loading: false, screen: 'confirmation', options: [] });
      this.screenHistory.push('confirmation');
      return;
    }
    const question = response as QuestionResponse;
    this.setState({
      loading: false,
      screen: 'question',
      prompt: question.question,
      options: question.options,
      questionsAnswered: this.state.questionsAnswered + 1,
    });
    this.screenHistory.push('question');
  }

  private handleFailure(error: unknown): void {
    if (error instanceof ApiError) {
      if (error.code === 'session_expired') {
        this.setState({ loading: false, screen: 'restart', errorCode: error.code });
        this.screenHistory.push('restart');
        return;
      }
      if (error.status === 422 || error.code === 'invalid_input') {
        this.setState({ loading: false, inlineError: error.message });
        return;
      }
      this.setState({ loading: false, screen: 'error', errorCode: error.code });
      this.screenHistory.push('error');
      return;
    }
    const message = error instanceof TransportError ? 'network_unreachable' : 'unexpected';
    this.setState({ loading: false, screen: 'error', errorCode: message });
    this.screenHistory.push('error');
  }

  private setState(patch: Partial<WidgetState>): void {
    this.state = { ...this.state, ...patch };
    this.render();
  }

  // -- rendering -------------------------------------------------------------

  private render(): void {
    if (!this.root) {
      return;
    }
    this.root.replaceChildren();
    const dialog = document.createElement('div');
    dialog.className = 'feedaide-dialog';
    dialog.dataset.screen = this.state.screen;
    dialog.setAttribute('role', 'dialog');
    dialog.setAttribute('aria-modal', 'true');

    const closeButton = document.createElement('button');
    closeButton.className = 'feedaide-close';
    closeButton.setAttribute('aria-label', this.chrome.close);
    closeButton.textContent = '×';
    closeButton.addEventListener('click', () => this.close());
    dialog.appendChild(closeButton);

    switch (this.state.screen) {
      case 'predictions':
      case 'question':
        this.renderStep(dialog);
        break;
      case 'confirmation':
        this.renderConfirmation(dialog);
        break;
      case 'error':
        this.renderError(dialog);
        break;
      case 'restart':
        this.renderRestart(dialog);
        break;
    }

    if (this.state.loading) {
      const loading = document.createElement('div');
      loading.className = 'feedaide-loading';
      loading.textContent = this.chrome.loading;
      dialog.appendChild(loading);
    }
    this.root.appendChild(dialog);
  }

  private renderStep(dialog: HTMLElement): void {
    const title = document.createElement('h2');
    title.className = 'feedaide-title';
    title.textContent = this.state.prompt || this.chrome.title;
    dialog.appendChild(title);

    for (const option of this.state.options) {
      const button = document.createElement('button');
      button.className = 'feedaide-option';
      button.textContent = option;
      button.disabled = this.state.loading;
      button.addEventListener('click', () => {
        void this.submit('selectedOption', option);
      });
      dialog.appendChild(button);
    }

    const freeText = document.createElement('textarea');
    freeText.className = 'feedaide-freetext';
    freeText.placeholder = this.chrome.freeTextPlaceholder;
    freeText.maxLength = FREE_TEXT_MAX_CHARS;
    dialog.appendChild(freeText);

    if (this.state.inlineError) {
      const inline = document.createElement('div');
      inline.className = 'feedaide-inline-error';
      inline.textContent = this.state.inlineError;
      dialog.appendChild(inline);
    }

    if (this.state.screen === 'predictions') {
      const label = document.createElement('label');
      label.className = 'feedaide-anonymous';
      const checkbox = document.createElement('input');
      checkbox.type = 'checkbox';
      checkbox.checked = this.state.anonymous;
      checkbox.addEventListener('change', () => {
        this.anonymousPreference = checkbox.checked;
        this.state.anonymous = checkbox.checked;
      });
      label.appendChild(checkbox);
      label.appendChild(document.createTextNode(this.chrome.anonymousLabel));
      dialog.appendChild(label);
    }

    const send = document.createElement('button');
    send.className = 'feedaide-send';
    send.textContent = this.chrome.send;
    send.disabled = this.state.loading;
    send.addEventListener('click', () => {
      void this.submit('freeText', freeText.value);
    });
    dialog.appendChild(send);
  }

  private renderConfirmation(dialog: HTMLElement): void {
    const title = document.createElement('h2');
    title.className = 'feedaide-title';
    title.textContent = this.chrome.confirmationTitle;
    const body = document.createElement('p');
    body.textContent = this.chrome.confirmationBody;
    const done = document.createElement('button');
    done.className = 'feedaide-send';
    done.textContent = this.chrome.close;
    done.addEventListener('click', () => this.close());
    dialog.append(title, body, done);
  }

  private renderError(dialog: HTMLElement): void {
    const title = document.createElement('h2');
    title.className = 'feedaide-title';
    title.textContent = this.chrome.errorTitle;
    const code = document.createElement('div');
    code.className = 'feedaide-error-code';
    code.textContent = this.state.errorCode ?? 'unknown';
    const retry = document.createElement('button');
    retry.className = 'feedaide-send';
    retry.textContent = this.chrome.retry;
    retry.addEventListener('click', () => {
      void this.retryAction?.();
    });
    dialog.append(title, code, retry);
  }

  private renderRestart(dialog: HTMLElement): void {
    const title = document.createElement('h2');
    title.className = 'feedaide-title';
    title.textContent = this.chrome.expiredTitle;
    const restart = document.createElement('button');
    restart.className = 'feedaide-send';
    restart.textContent = this.chrome.restart;
    restart.addEventListener('click', () => {
      if (this.lastTrigger) {
        void this.open(this.lastTrigger);
      }
    });
    dialog.append(title, restart);
  }
}
