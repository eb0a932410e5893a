// Wire types for the gateway HTTP API (see the repo's http-api.md).

export type EventKind =
  | "assistant_message"
  | "permission_request"
  | "data_consent_request"
  | "app_choice_request"
  | "value_request"
  | "status";

export interface GatewayEvent {
  kind: EventKind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface PermissionPayload {
  correlation_id: string;
  scope: string;
  text: string;
  assessment: string;
  options: string[];
  irreversible: boolean;
}

export interface DataConsentPayload {
  correlation_id: string;
  app: string;
  entity: string;
  value: string;
  attribution: string;
}

export interface AppChoicePayload {
  correlation_id: string;
  candidates: string[];
  reason: string;
}

export interface ValueRequestPayload {
  correlation_id: string;
  entity: string;
}

export interface Grant {
  id: string;
  kind: string;
  subjects: string[];
  duration: string;
  granted_at: number;
  session_id: string;
}

export interface AppInfo {
  app_id: string;
  display_name: string;
  description: string;
  installed: boolean;
}

export interface PendingRequest {
  correlationId: string;
  kind: EventKind;
  payload: Record<string, unknown>;
  deadline: number;
}

export interface TranscriptEntry {
  seq: number;
  role: "user" | "assistant" | "system";
  text: string;
}
