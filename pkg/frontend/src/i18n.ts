/** Chrome strings for the dialog shell. Question and option text arrives
 * pre-localized from the server, so only the fixed UI labels live here. */

export interface ChromeStrings {
  title: string;
  freeTextPlaceholder: string;
  send: string;
  anonymousLabel: string;
  loading: string;
  errorTitle: string;
  retry: string;
  expiredTitle: string;
  restart: string;
  confirmationTitle: string;
  confirmationBody: string;
  close: string;
  emptyInput: string;
}

const EN: ChromeStrings = {
  title: 'Report feedback',
  freeTextPlaceholder: 'Describe it in your own words…',
  send: 'Send',
  anonymousLabel: 'Send anonymously',
  loading: 'One moment…',
  errorTitle: 'Something went wrong',
  retry: 'Try again',
  expiredTitle: 'This session has expired',
  restart: 'Start over',
  confirmationTitle: 'Thank you!',
  confirmationBody: 'Your feedback was submitted to the developers.',
  close: 'Close',
  emptyInput: 'Please choose an option or write a short text.',
};

const DE: ChromeStrings = {
  title: 'Feedback senden',
  freeTextPlaceholder: 'Beschreibe es in eigenen Worten…',
  send: 'Senden',
  anonymousLabel: 'Anonym senden',
  loading: 'Einen Moment…',
  errorTitle: 'Etwas ist schiefgelaufen',
  retry: 'Erneut versuchen',
  expiredTitle: 'Diese Sitzung ist abgelaufen',
  restart: 'Neu starten',
  confirmationTitle: 'Vielen Dank!',
  confirmationBody: 'Dein Feedback wurde an die Entwickler übermittelt.',
  close: 'Schließen',
  emptyInput: 'Bitte wähle eine Option oder schreibe einen kurzen Text.',
};

const TABLES: Record<string, ChromeStrings> = { en: EN, de: DE };

export function resolveChrome(localeOverride?: string): ChromeStrings {
  const locale = (localeOverride ?? globalThis.navigator?.language ?? 'en')
    .split('-')[0]
    .toLowerCase();
  return TABLES[locale] ?? EN;
}
