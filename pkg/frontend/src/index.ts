import { FeedbackWidget } from './widget';
import type { WidgetConfig } from './types';

export { ApiClient, ApiError, TransportError } from './client';
export { FeedbackWidget, buildContextDocument } from './widget';
export type {
  ContextDocument,
  CreateSessionResponse,
  InputResponse,
  TriggerContext,
  WidgetConfig,
} from './types';
export { FREE_TEXT_MAX_CHARS } from './types';

/** Entry point for embedding: returns a widget bound to one app/server. */
export function init(config: WidgetConfig): FeedbackWidget {
  return new FeedbackWidget(config);
}
